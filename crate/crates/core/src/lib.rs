//! Random Jacobi operators in one dimension: sampling, spectral counting,
//! eigenvector localization, transfer matrices and local eigenvalue
//! statistics.

pub mod eigensolve;
pub mod error;
pub mod exec;
pub mod ids;
pub mod law;
pub mod operators;
pub mod probes;
pub mod pruefer;
pub mod qgraph;
pub mod report;
pub mod rng;
pub mod stats;
pub mod transfer;

pub use error::{Error, Result};

/// The guide's chapters, compiled so their examples run as doc-tests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/operators.md")]
    pub mod operators {}
    #[doc = include_str!("../../../book/src/ids.md")]
    pub mod ids {}
    #[doc = include_str!("../../../book/src/probes.md")]
    pub mod probes {}
    #[doc = include_str!("../../../book/src/transfer.md")]
    pub mod transfer {}
    #[doc = include_str!("../../../book/src/qgraph.md")]
    pub mod qgraph {}
    #[doc = include_str!("../../../book/src/running.md")]
    pub mod running {}
}
