//! Eigenvalue counting and extraction for symmetric tridiagonal matrices.
//!
//! The counting path is the Sturm sequence in shifted `LDLᵀ` pivot form:
//! the number of negative pivots of `H − E` equals the number of
//! eigenvalues strictly below `E`. Everything else (bisection, windows,
//! inverse iteration) is built on it. [`dense_spectrum`] is a separate
//! cyclic Jacobi diagonalization used only as an oracle for small sizes.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::operators::TridiagonalOperator;
use crate::rng::{DrawKey, SiteStream};

/// Pivots smaller than this in magnitude are pushed out to `±TINY`; an exact
/// zero goes to `+TINY` so the count stays strictly below `E`.
pub const PIVOT_TINY: f64 = 1e-300;

/// Largest matrix accepted by the dense oracle by default.
pub const ORACLE_MAX: usize = 64;

/// Knobs shared by the extraction routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Refuse window extraction beyond this many eigenvalues.
    pub max_window_eigs: usize,
    /// Eigenvalues closer than `cluster_tol · ‖H‖` form a flagged cluster.
    pub cluster_tol: f64,
    /// Relative gap below which an eigenvalue is treated as degenerate.
    pub gap_floor: f64,
    /// Required `‖Hv − Ev‖ / ‖H‖` for inverse iteration.
    pub residual_tol: f64,
    /// Seed of the inverse-iteration start vector.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_window_eigs: 4096,
            cluster_tol: 1e-12,
            gap_floor: 1e-12,
            residual_tol: 1e-8,
            seed: 0,
        }
    }
}

#[inline]
fn clamp_pivot(d: f64) -> f64 {
    if d.abs() < PIVOT_TINY {
        if d < 0.0 {
            -PIVOT_TINY
        } else {
            PIVOT_TINY
        }
    } else {
        d
    }
}

/// Number of eigenvalues of `h` strictly below `energy`.
pub fn sturm_count(h: &TridiagonalOperator, energy: f64) -> usize {
    sturm_count_raw(h.diag(), h.offdiag_sq(), energy)
}

/// Sturm count on raw arrays (`offdiag_sq[i]` couples `i` and `i + 1`).
pub fn sturm_count_raw(diag: &[f64], offdiag_sq: &[f64], energy: f64) -> usize {
    let mut d = clamp_pivot(diag[0] - energy);
    let mut count = usize::from(d < 0.0);
    for (v, b) in diag[1..].iter().zip(offdiag_sq) {
        d = clamp_pivot(v - energy - b / d);
        count += usize::from(d < 0.0);
    }
    count
}

/// Sturm counts at several shifts; independent pivot chains are interleaved
/// so the divisions pipeline.
pub fn sturm_counts(h: &TridiagonalOperator, shifts: &[f64], out: &mut [usize]) {
    sturm_counts_raw(h.diag(), h.offdiag_sq(), shifts, out);
}

pub fn sturm_counts_raw(diag: &[f64], offdiag_sq: &[f64], shifts: &[f64], out: &mut [usize]) {
    const LANES: usize = 4;
    assert_eq!(shifts.len(), out.len());
    let mut chunks = shifts.chunks_exact(LANES);
    let mut outs = out.chunks_exact_mut(LANES);
    for (e, o) in (&mut chunks).zip(&mut outs) {
        let mut d = [0.0; LANES];
        let mut c = [0usize; LANES];
        for k in 0..LANES {
            d[k] = clamp_pivot(diag[0] - e[k]);
            c[k] = usize::from(d[k] < 0.0);
        }
        for (v, b) in diag[1..].iter().zip(offdiag_sq) {
            for k in 0..LANES {
                d[k] = clamp_pivot(v - e[k] - b / d[k]);
                c[k] += usize::from(d[k] < 0.0);
            }
        }
        o.copy_from_slice(&c);
    }
    for (e, o) in chunks.remainder().iter().zip(outs.into_remainder()) {
        *o = sturm_count_raw(diag, offdiag_sq, *e);
    }
}

/// Number of eigenvalues in the half-open window `(a, b]`.
pub fn count_in_interval(h: &TridiagonalOperator, a: f64, b: f64) -> Result<usize> {
    if a > b {
        return Err(Error::InvertedWindow { lower: a, upper: b });
    }
    let mut counts = [0usize; 2];
    sturm_counts(h, &[a.next_up(), b.next_up()], &mut counts);
    Ok(counts[1] - counts[0])
}

#[inline]
fn stop_width(tol: f64, mid: f64) -> f64 {
    tol.max(4.0 * ulp(mid))
}

#[inline]
fn ulp(x: f64) -> f64 {
    let a = x.abs();
    a.next_up() - a
}

/// `j`-th eigenvalue (0-based, ascending) by bisection to width `tol`.
pub fn eigenvalue_by_index(h: &TridiagonalOperator, j: usize, tol: f64) -> f64 {
    assert!(j < h.size(), "eigenvalue index {j} out of range");
    let (lo, hi) = h.gershgorin();
    let pad = 1e-12 * h.norm_bound() + f64::MIN_POSITIVE;
    bisect_index(h, j, lo - pad, hi + pad, tol)
}

fn bisect_index(h: &TridiagonalOperator, j: usize, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= stop_width(tol, mid) || mid <= lo || mid >= hi {
            return mid;
        }
        if sturm_count(h, mid) > j {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// Eigenvalues in `(a, b]` to absolute accuracy `tol`, ascending, repeated
/// by multiplicity inside unresolved clusters.
pub fn eigenvalues_in(h: &TridiagonalOperator, a: f64, b: f64, tol: f64) -> Result<Vec<f64>> {
    eigenvalues_in_with(h, a, b, tol, &SolverConfig::default())
}

pub fn eigenvalues_in_with(
    h: &TridiagonalOperator,
    a: f64,
    b: f64,
    tol: f64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if a > b {
        return Err(Error::InvertedWindow { lower: a, upper: b });
    }
    let (glo, ghi) = h.gershgorin();
    let pad = 1e-12 * h.norm_bound() + f64::MIN_POSITIVE;
    let lo = a.next_up().max(glo - pad);
    let hi = b.next_up().min(ghi + pad);
    if lo >= hi {
        return Ok(Vec::new());
    }
    let mut c = [0usize; 2];
    sturm_counts(h, &[lo, hi], &mut c);
    let count = c[1] - c[0];
    if count > cfg.max_window_eigs {
        return Err(Error::WindowTooLarge {
            lower: a,
            upper: b,
            count,
            limit: cfg.max_window_eigs,
        });
    }
    let mut out = Vec::with_capacity(count);
    isolate(h, lo, hi, c[0], c[1], tol, &mut out);
    Ok(out)
}

/// Split `[lo, hi)` holding eigenvalues `clo..chi` until each piece holds one.
fn isolate(
    h: &TridiagonalOperator,
    lo: f64,
    hi: f64,
    clo: usize,
    chi: usize,
    tol: f64,
    out: &mut Vec<f64>,
) {
    let n = chi - clo;
    if n == 0 {
        return;
    }
    let mid = 0.5 * (lo + hi);
    if n == 1 {
        out.push(bisect_index(h, clo, lo, hi, tol));
        return;
    }
    if hi - lo <= stop_width(tol, mid) || mid <= lo || mid >= hi {
        out.extend(std::iter::repeat(mid).take(n));
        return;
    }
    let cm = sturm_count(h, mid);
    isolate(h, lo, mid, clo, cm, tol, out);
    isolate(h, mid, hi, cm, chi, tol, out);
}

/// Count plus extracted spectral data in a window.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWindowCount {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub eigenvalues: Vec<f64>,
    /// Index ranges into `eigenvalues` closer than the cluster tolerance.
    pub clusters: Vec<Range<usize>>,
    pub eigenvectors: Option<Vec<Vec<f64>>>,
}

/// Count, eigenvalues and optionally eigenvectors in `(a, b]`.
pub fn spectral_window(
    h: &TridiagonalOperator,
    a: f64,
    b: f64,
    with_vectors: bool,
    cfg: &SolverConfig,
) -> Result<SpectralWindowCount> {
    let count = count_in_interval(h, a, b)?;
    let norm = h.norm_bound();
    let eigenvalues = eigenvalues_in_with(h, a, b, 1e-15 * norm, cfg)?;
    let cluster_gap = cfg.cluster_tol * norm;
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=eigenvalues.len() {
        if i == eigenvalues.len() || eigenvalues[i] - eigenvalues[i - 1] > cluster_gap {
            if i - start > 1 {
                clusters.push(start..i);
            }
            start = i;
        }
    }
    let eigenvectors = if with_vectors {
        let mut vectors = Vec::with_capacity(eigenvalues.len());
        let mut i = 0;
        while i < eigenvalues.len() {
            match eigenvector_with(h, eigenvalues[i], cfg)? {
                EigenvectorResult::Simple(v) => {
                    vectors.push(v);
                    i += 1;
                }
                EigenvectorResult::Cluster { vectors: vs, .. } => {
                    i += vs.len();
                    vectors.extend(vs);
                }
            }
        }
        vectors.truncate(eigenvalues.len());
        Some(vectors)
    } else {
        None
    };
    Ok(SpectralWindowCount {
        lower: a,
        upper: b,
        count,
        eigenvalues,
        clusters,
        eigenvectors,
    })
}

/// Outcome of inverse iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum EigenvectorResult {
    Simple(Vec<f64>),
    /// Near-degenerate eigenvalues with an orthonormal basis of their span.
    Cluster {
        energies: Vec<f64>,
        vectors: Vec<Vec<f64>>,
    },
}

impl EigenvectorResult {
    /// The vector for a simple eigenvalue.
    pub fn simple(self) -> Result<Vec<f64>> {
        match self {
            EigenvectorResult::Simple(v) => Ok(v),
            EigenvectorResult::Cluster { energies, .. } => Err(Error::Degenerate {
                energy: energies[0],
                gap: energies
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .fold(f64::INFINITY, f64::min),
                floor: 0.0,
            }),
        }
    }
}

/// Normalized eigenvector at a certified eigenvalue `energy`.
pub fn eigenvector(h: &TridiagonalOperator, energy: f64) -> Result<EigenvectorResult> {
    eigenvector_with(h, energy, &SolverConfig::default())
}

pub fn eigenvector_with(
    h: &TridiagonalOperator,
    energy: f64,
    cfg: &SolverConfig,
) -> Result<EigenvectorResult> {
    let norm = h.norm_bound();
    let floor = cfg.gap_floor * norm;
    let members = count_in_interval(h, energy - floor, energy + floor)?;
    if members == 0 {
        return Err(Error::BadEigenpair(format!(
            "no eigenvalue within {floor:e} of {energy}"
        )));
    }
    if members == 1 {
        let v = inverse_iteration(h, energy, &[], cfg, 0)?;
        return Ok(EigenvectorResult::Simple(v));
    }
    let energies = eigenvalues_in_with(h, energy - floor, energy + floor, 1e-15 * norm, cfg)?;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(energies.len());
    for (k, &e) in energies.iter().enumerate() {
        let v = inverse_iteration(h, e, &vectors, cfg, k as u64)?;
        vectors.push(v);
    }
    Ok(EigenvectorResult::Cluster { energies, vectors })
}

fn inverse_iteration(
    h: &TridiagonalOperator,
    energy: f64,
    deflate: &[Vec<f64>],
    cfg: &SolverConfig,
    salt: u64,
) -> Result<Vec<f64>> {
    let n = h.size();
    let norm = h.norm_bound();
    let lu = ShiftedLu::factor(h, energy, f64::EPSILON * norm);
    let mut stream = SiteStream::new(DrawKey::new(cfg.seed, salt));
    let mut x: Vec<f64> = (0..n).map(|_| stream.next_unit() - 0.5).collect();
    orthonormalize(&mut x, deflate);
    for _ in 0..8 {
        lu.solve(&mut x);
        orthonormalize(&mut x, deflate);
        if h.residual(energy, &x) <= cfg.residual_tol * norm {
            break;
        }
    }
    let res = h.residual(energy, &x);
    // clusters are certified as a subspace, a single member can miss the bound
    if deflate.is_empty() && res > cfg.residual_tol * norm {
        return Err(Error::BadEigenpair(format!(
            "inverse iteration at {energy} stalled with residual {res:e}"
        )));
    }
    fix_sign(&mut x);
    Ok(x)
}

fn orthonormalize(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = x.iter().zip(b).map(|(p, q)| p * q).sum();
            for (p, q) in x.iter_mut().zip(b) {
                *p -= dot * q;
            }
        }
    }
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nrm > 0.0 {
        for v in x.iter_mut() {
            *v /= nrm;
        }
    }
}

/// Largest-magnitude entry (first on ties) made positive.
fn fix_sign(x: &mut [f64]) {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    if x[best] < 0.0 {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

/// LU factorization of `H − E` with partial pivoting (two super-diagonals).
struct ShiftedLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swap: Vec<bool>,
}

impl ShiftedLu {
    fn factor(h: &TridiagonalOperator, energy: f64, tiny: f64) -> Self {
        let n = h.size();
        let mut dl = h.offdiag().to_vec();
        let mut du = h.offdiag().to_vec();
        let mut d: Vec<f64> = h.diag().iter().map(|v| v - energy).collect();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swap = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swap[i] = true;
            }
        }
        for v in d.iter_mut() {
            if v.abs() < tiny {
                *v = if *v < 0.0 { -tiny } else { tiny };
            }
        }
        Self {
            dl,
            d,
            du,
            du2,
            swap,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swap[i] {
                let temp = b[i] - self.dl[i] * b[i + 1];
                b[i] = b[i + 1];
                b[i + 1] = temp;
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

/// 1-based site of the largest `|v(n)|`, smallest index on ties.
pub fn localization_center(v: &[f64]) -> Result<usize> {
    let mut best = 0;
    let mut best_abs = 0.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best = i;
            best_abs = x.abs();
        }
    }
    if best_abs == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(best + 1)
}

/// Full spectrum from the dense oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSpectrum {
    /// Ascending.
    pub values: Vec<f64>,
    /// `vectors[k]` belongs to `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi diagonalization of the dense matrix; an oracle independent
/// of the Sturm path, limited to `ORACLE_MAX` sites.
pub fn dense_spectrum(h: &TridiagonalOperator) -> Result<DenseSpectrum> {
    dense_spectrum_capped(h, ORACLE_MAX)
}

pub fn dense_spectrum_capped(h: &TridiagonalOperator, cap: usize) -> Result<DenseSpectrum> {
    if h.size() > cap {
        return Err(Error::OracleTooLarge {
            size: h.size(),
            cap,
        });
    }
    Ok(jacobi_eigen(h.to_dense()))
}

/// Jacobi eigenvalue iteration for a dense symmetric matrix.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> DenseSpectrum {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off == 0.0 {
            break;
        }
        let diag_scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>() + off;
        if off <= 1e-34 * diag_scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = (0..n).map(|i| v[i][k]).collect();
            fix_sign(&mut col);
            col
        })
        .collect();
    DenseSpectrum { values, vectors }
}
