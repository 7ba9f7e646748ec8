use jacobi_lab::eigensolve::{
    count_in_interval, dense_spectrum, eigenvalue_by_index, eigenvector, sturm_count,
};
use jacobi_lab::law::CouplingLaw;
use jacobi_lab::operators::{EnsembleSpec, Realizer};
use jacobi_lab::pruefer::{pruefer_trace, wronskian_sequence};
use jacobi_lab::qgraph::{m_matrix, reduced_operator, scalar_factor, QGraphInstance};
use jacobi_lab::rng::DrawKey;
use jacobi_lab::transfer::propagate;
use proptest::prelude::*;

fn spec_for(kind: u8) -> EnsembleSpec {
    match kind % 3 {
        0 => EnsembleSpec::anderson(CouplingLaw::uniform(-2.0, 2.0)),
        1 => EnsembleSpec::standard_hopping(),
        _ => EnsembleSpec::dimer_sign(CouplingLaw::uniform(0.0, 1.0)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interval_counts_match_dense_spectrum(kind in 0u8..3, seed in 0u64..10_000, size in 1usize..40,
                                            a in -5.0f64..5.0, w in 0.0f64..3.0) {
        let h = Realizer::new().realize(&spec_for(kind), size, DrawKey::new(seed, 0)).clone();
        let dense = dense_spectrum(&h).unwrap().values;
        let want = dense.iter().filter(|e| **e > a && **e <= a + w).count();
        prop_assert_eq!(count_in_interval(&h, a, a + w).unwrap(), want);
        prop_assert_eq!(sturm_count(&h, a), dense.iter().filter(|e| **e < a).count());
    }

    #[test]
    fn hopping_spectrum_pairs(seed in 0u64..10_000, size in 2usize..80) {
        let h = Realizer::new().realize(&EnsembleSpec::standard_hopping(), size, DrawKey::new(seed, 1)).clone();
        for j in 0..size {
            let lo = eigenvalue_by_index(&h, j, 1e-14);
            let hi = eigenvalue_by_index(&h, size - 1 - j, 1e-14);
            prop_assert!((lo + hi).abs() <= 1e-10);
            prop_assert!(lo.abs() <= h.norm_bound() + 1e-12);
        }
    }

    #[test]
    fn wronskian_bounded_by_energy_gap(seed in 0u64..10_000, j in 0usize..30, k in 0usize..30) {
        prop_assume!(j != k);
        let h = Realizer::new().realize(&EnsembleSpec::standard_hopping(), 30, DrawKey::new(seed, 2)).clone();
        let (eu, ev) = (eigenvalue_by_index(&h, j, 1e-15), eigenvalue_by_index(&h, k, 1e-15));
        let u = eigenvector(&h, eu).unwrap().simple();
        let v = eigenvector(&h, ev).unwrap().simple();
        prop_assume!(u.is_ok() && v.is_ok());
        let w = wronskian_sequence(&h, &u.unwrap(), &v.unwrap(), eu, ev).unwrap();
        prop_assert!(w.max_violation <= 1e-10);
        prop_assert!(w.max_sine_product <= w.sine_bound + 1e-10);
    }

    #[test]
    fn transfer_and_pruefer_agree_on_eigenvectors(kind in 0u8..2, seed in 0u64..10_000, size in 2usize..30) {
        let h = Realizer::new().realize(&spec_for(kind), size, DrawKey::new(seed, 3)).clone();
        let s = dense_spectrum(&h).unwrap();
        let j = seed as usize % size;
        let (e, v) = (s.values[j], &s.vectors[j]);
        let trace = pruefer_trace(&h, e, v).unwrap();
        for (a, b) in trace.reconstruct().iter().zip(v) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        // path[i] = (u(i + 2), u(i + 1)); compared only where the products
        // stay well conditioned
        let path = propagate(&h, e, v[0]);
        for (i, step) in path.iter().take(6).enumerate() {
            prop_assert!((step[1] - v[i]).abs() <= 1e-8, "site {}", i + 1);
            prop_assert!((step[0] - v[i + 1]).abs() <= 1e-8, "site {}", i + 2);
        }
    }

    #[test]
    fn graph_scalar_identity(omega in proptest::collection::vec(0.0f64..1.0, 1..10), e in 0.05f64..38.0) {
        let inst = QGraphInstance::new(omega).unwrap();
        prop_assume!(inst.check_energy(e).is_ok());
        let c = scalar_factor(e);
        let m = m_matrix(&inst, e).unwrap();
        let h = reduced_operator(&inst, e).unwrap().to_dense();
        for (mr, hr) in m.iter().zip(&h) {
            for (x, y) in mr.iter().zip(hr) {
                prop_assert!((x - c * y).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }
    }
}
