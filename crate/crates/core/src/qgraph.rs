//! Quantum graphs on a chain with random δ couplings at the vertices, reduced
//! to an energy-dependent discrete operator.
//!
//! Off the Dirichlet set `π²ℕ*`, `E` is a graph eigenvalue iff `0` is an
//! eigenvalue of `−Δ + V_ω(E)` with `V_ω(E)(n) = cos √E − (sin √E / √E) ω_n`.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::ids::fmt17;
use crate::operators::{EnsembleSpec, Model, TridiagonalOperator};
use crate::probes::{tally_windows, DrawSource};
use crate::pruefer::distance_to_spectrum;
use crate::report::ProbeReport;
use crate::stats::{log_log_fit_counts, wilson_interval, Z95};

/// Default half-width of the excluded bands around `π²k²`.
pub const DEFAULT_EXCLUSION: f64 = 1e-6 * PI * PI;

/// Cap on subdivision cells in [`graph_eigenvalues`].
pub const MAX_CELLS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QGraphInstance {
    /// Vertex couplings `ω_1, …, ω_L ≥ 0`.
    pub omega: Vec<f64>,
    /// Half-width `δ_π` of the excluded band around each `π²k²`.
    pub exclusion: f64,
}

impl QGraphInstance {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        Self::with_exclusion(omega, DEFAULT_EXCLUSION)
    }

    pub fn with_exclusion(omega: Vec<f64>, exclusion: f64) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::InvalidParameter(
                "a quantum graph needs at least one vertex".into(),
            ));
        }
        if omega.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter(
                "vertex couplings must be finite and non-negative".into(),
            ));
        }
        if !(exclusion > 0.0) {
            return Err(Error::InvalidParameter(
                "exclusion band must be positive".into(),
            ));
        }
        Ok(Self { omega, exclusion })
    }

    pub fn size(&self) -> usize {
        self.omega.len()
    }

    fn omega_max(&self) -> f64 {
        self.omega.iter().copied().fold(0.0, f64::max)
    }

    /// `sup_E |dV_ω(E)(n)/dE| ≤ 1/2 + ω_max/6`, the Lipschitz constant of
    /// every eigenvalue branch of the reduced operator.
    pub fn lipschitz(&self) -> f64 {
        0.5 + self.omega_max() / 6.0
    }

    /// Branch Lipschitz bound on `[x, y]`, `x > 0`: the `cos √E` term has
    /// derivative `sin √E / (2√E)`, which vanishes at the poles.
    pub fn lipschitz_on(&self, x: f64, y: f64) -> f64 {
        let (sx, sy) = (x.sqrt(), y.sqrt());
        let local = (sx.sin().abs() + (sy - sx)).min(1.0) / (2.0 * sx);
        local.min(0.5) + self.omega_max() / 6.0
    }

    /// Fails unless `E > 0` lies outside every excluded band.
    pub fn check_energy(&self, energy: f64) -> Result<()> {
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(Error::Domain {
                energy,
                reason: "the reduction needs E > 0".into(),
            });
        }
        let k = (energy.sqrt() / PI).round().max(1.0);
        if (energy - PI * PI * k * k).abs() < self.exclusion {
            return Err(Error::Domain {
                energy,
                reason: format!("within the excluded band around π²·{}²", k as u64),
            });
        }
        Ok(())
    }
}

/// `sin √E / √E`.
pub fn sinc_sqrt(energy: f64) -> f64 {
    let k = energy.sqrt();
    if k < 1e-4 {
        1.0 - energy / 6.0
    } else {
        k.sin() / k
    }
}

/// Scalar `c(E) = √E / sin √E` relating the two formulations.
pub fn scalar_factor(energy: f64) -> f64 {
    1.0 / sinc_sqrt(energy)
}

/// `−Δ + V_ω(E)` on `{1, …, L}`.
pub fn reduced_operator(inst: &QGraphInstance, energy: f64) -> Result<TridiagonalOperator> {
    inst.check_energy(energy)?;
    Ok(reduced_unchecked(inst, energy))
}

fn reduced_unchecked(inst: &QGraphInstance, energy: f64) -> TridiagonalOperator {
    let c = energy.sqrt().cos();
    let s = sinc_sqrt(energy);
    let diag = inst.omega.iter().map(|w| c - s * w).collect();
    TridiagonalOperator::new(diag, vec![-1.0; inst.size() - 1]).expect("finite entries")
}

/// Dense `M(E) − A_ω` with `M(E) = c(E)(−Δ + cos √E)`.
pub fn m_matrix(inst: &QGraphInstance, energy: f64) -> Result<Vec<Vec<f64>>> {
    inst.check_energy(energy)?;
    let l = inst.size();
    let c = scalar_factor(energy);
    let cos = energy.sqrt().cos();
    let mut m = vec![vec![0.0; l]; l];
    for i in 0..l {
        m[i][i] = c * cos - inst.omega[i];
        if i + 1 < l {
            m[i][i + 1] = -c;
            m[i + 1][i] = -c;
        }
    }
    Ok(m)
}

/// A certified graph eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphRoot {
    pub energy: f64,
    /// Distance from `0` to the spectrum of the reduced operator at `energy`.
    pub residual: f64,
}

/// Pole-free pieces of `(a, b)`.
fn pole_free(inst: &QGraphInstance, a: f64, b: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut lo = a;
    let k_max = (b.sqrt() / PI).ceil() as u64 + 1;
    for k in 1..=k_max {
        let p = PI * PI * (k * k) as f64;
        let (bl, bh) = (p - inst.exclusion, p + inst.exclusion);
        if bh <= lo {
            continue;
        }
        if bl >= b {
            break;
        }
        if bl > lo {
            out.push((lo, bl));
        }
        lo = bh;
    }
    if lo < b {
        out.push((lo, b));
    }
    out
}

/// Graph eigenvalues in `(a, b)` to accuracy `tol`.
///
/// A cell `[x, y]` holds no root when `δ(x) + δ(y) > D (y − x)`, with `δ` the
/// distance from `0` to the reduced spectrum and `D` a Lipschitz bound of the
/// eigenvalue branches on the cell. Other cells are halved until their width reaches `tol`; each
/// contiguous run of such cells is one root, placed where `δ` is smallest.
pub fn graph_eigenvalues(
    inst: &QGraphInstance,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Vec<GraphRoot>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if a > b {
        return Err(Error::InvertedWindow { lower: a, upper: b });
    }
    if a < 0.0 {
        return Err(Error::Domain {
            energy: a,
            reason: "the reduction needs E > 0".into(),
        });
    }
    let delta = |e: f64| distance_to_spectrum(&reduced_unchecked(inst, e), 0.0);
    let mut roots = Vec::new();
    let mut cells = 0usize;
    for (lo, hi) in pole_free(inst, a.max(f64::MIN_POSITIVE), b) {
        let mut runs: Vec<(f64, f64, f64)> = Vec::new();
        let mut stack = vec![(lo, hi, delta(lo), delta(hi))];
        // depth-first, left to right, so runs come out sorted
        while let Some((x, y, dx, dy)) = stack.pop() {
            cells += 1;
            if cells > MAX_CELLS {
                return Err(Error::GridTooCoarse {
                    spacing: y - x,
                    required: tol,
                });
            }
            // margin covers the bound being attained and the error in δ
            if dx + dy > 1.01 * inst.lipschitz_on(x, y) * (y - x) + 1e-13 {
                continue;
            }
            if y - x <= tol {
                let (e, d) = if dx <= dy { (x, dx) } else { (y, dy) };
                match runs.last_mut() {
                    Some(last) if last.1 >= x => {
                        last.1 = y;
                        if d < last.2 {
                            last.0 = e;
                            last.2 = d;
                        }
                    }
                    _ => runs.push((e, y, d)),
                }
                continue;
            }
            let m = 0.5 * (x + y);
            let dm = delta(m);
            stack.push((m, y, dm, dy));
            stack.push((x, m, dx, dm));
        }
        // a run pinned at E = 0 is the boundary of the domain, not a root
        for (e, _, d) in runs.into_iter().filter(|r| r.0 > f64::MIN_POSITIVE) {
            roots.push(GraphRoot {
                energy: e,
                residual: d,
            });
        }
    }
    Ok(roots)
}

/// Roots as `energy,residual` rows.
pub fn write_roots_csv(path: impl AsRef<Path>, roots: &[GraphRoot]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["energy", "residual"])?;
    for r in roots {
        w.write_record([fmt17(r.energy), fmt17(r.residual)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QGraphMinamiProbe {
    /// Quantum-graph ensemble (`Model::QGraph`).
    pub spec: EnsembleSpec,
    pub energy: f64,
    pub widths: Vec<f64>,
    pub size: usize,
    pub samples: u64,
    pub seed: u64,
}

/// Tail probabilities `P[tr 1_I(H_ω) ≥ k]`, `k = 1, 2`, for
/// `I = [E₀ − ε, E₀ + ε]`, bounded by the count of eigenvalues of
/// `−Δ + V_ω(E₀)` in `[−Dε, Dε]`.
pub fn qgraph_minami_probe(p: &QGraphMinamiProbe, exec: &Executor) -> Result<ProbeReport> {
    let start = Instant::now();
    if p.spec.model != Model::QGraph {
        return Err(Error::InvalidParameter(
            "qgraph probe needs the quantum-graph ensemble".into(),
        ));
    }
    let probe_inst = QGraphInstance::new(vec![p.spec.law.support().1])?;
    for w in &p.widths {
        if !(*w >= 0.0) {
            return Err(Error::InvalidParameter(
                "window widths must be non-negative".into(),
            ));
        }
        for e in [p.energy - w, p.energy + w] {
            probe_inst.check_energy(e)?;
        }
        let (a, b) = (p.energy - w, p.energy + w);
        let k = (a.sqrt() / PI).ceil().max(1.0);
        if PI * PI * k * k <= b + probe_inst.exclusion {
            return Err(Error::Domain {
                energy: p.energy,
                reason: "window contains an excluded band".into(),
            });
        }
    }
    let lip = probe_inst.lipschitz();
    let windows: Vec<(f64, f64)> = p.widths.iter().map(|w| (-lip * w, lip * w)).collect();
    let source = DrawSource {
        spec: &p.spec,
        size: p.size,
        seed: p.seed,
        family_energy: Some(p.energy),
    };
    let t = tally_windows(exec, p.samples, source, &windows)?;
    let mut r = ProbeReport::new("qgraph-minami", p.seed);
    r.param("spec", &p.spec)
        .param("energy", p.energy)
        .param("widths", &p.widths)
        .param("size", p.size)
        .param("lipschitz", lip);
    r.samples = p.samples;
    let mut constant = 0.0f64;
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    for (i, &eps) in p.widths.iter().enumerate() {
        let p1 = t.occupied[i] as f64 / t.draws as f64;
        let p2 = t.multiple[i] as f64 / t.draws as f64;
        r.estimate(
            &format!("p1[{i}]"),
            Some(p1),
            Some(wilson_interval(t.occupied[i], t.draws, Z95)),
        );
        r.estimate(
            &format!("p2[{i}]"),
            Some(p2),
            Some(wilson_interval(t.multiple[i], t.draws, Z95)),
        );
        if eps > 0.0 {
            constant = constant.max(p1 / (eps * p.size as f64));
        }
        c1.push([eps, p1]);
        c2.push([eps, p2]);
    }
    let f1 = log_log_fit_counts(&p.widths, &t.occupied, t.draws);
    let f2 = log_log_fit_counts(&p.widths, &t.multiple, t.draws);
    for (label, f) in [("slope_k1", f1), ("slope_k2", f2)] {
        r.estimate(
            label,
            f.map(|f| f.slope),
            f.map(|f| {
                (
                    f.slope - Z95 * f.slope_stderr,
                    f.slope + Z95 * f.slope_stderr,
                )
            }),
        );
    }
    r.estimate("constant_k1", Some(constant), None);
    r.curve("k1", "eps", "p1", c1);
    r.curve("k2", "eps", "p2", c2);
    r.runtime_s = start.elapsed().as_secs_f64();
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::{dense_spectrum, jacobi_eigen};
    use crate::law::CouplingLaw;
    use crate::rng::DrawKey;

    /// Free-case roots: `cos √E = 2 cos(kπ/(L+1))` solved on each branch of
    /// `√E` by scalar bisection.
    fn free_roots(l: usize, e_max: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let s_max = e_max.sqrt();
        for k in 1..=l {
            let c = 2.0 * (k as f64 * PI / (l + 1) as f64).cos();
            if c.abs() > 1.0 {
                continue;
            }
            let base = c.acos();
            let mut branch = 0.0;
            loop {
                let mut any = false;
                for s in [branch + base, branch + 2.0 * PI - base] {
                    let pole = (s / PI).round();
                    let at_pole =
                        pole >= 1.0 && (s * s - (pole * PI).powi(2)).abs() < DEFAULT_EXCLUSION;
                    if s > 0.0 && s < s_max && !at_pole {
                        out.push(s * s);
                        any = true;
                    }
                }
                branch += 2.0 * PI;
                if !any && branch > s_max {
                    break;
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        out
    }

    #[test]
    fn free_diagonal_is_constant() {
        let inst = QGraphInstance::new(vec![0.0; 4]).unwrap();
        let h = reduced_operator(&inst, 3.0).unwrap();
        assert!(h.diag().iter().all(|d| *d == 3f64.sqrt().cos()));
    }

    #[test]
    fn quarter_wave_diagonal() {
        let inst = QGraphInstance::new(vec![0.3, 1.0]).unwrap();
        let e = (PI / 2.0).powi(2);
        let h = reduced_operator(&inst, e).unwrap();
        for (d, w) in h.diag().iter().zip(&inst.omega) {
            assert!((d + 2.0 / PI * w).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_identity_entrywise() {
        let inst = QGraphInstance::new(vec![0.2, 0.9, 0.4, 0.0, 0.7]).unwrap();
        for e in [0.5, 4.0, 9.0, 20.0, 50.0] {
            let m = m_matrix(&inst, e).unwrap();
            let h = reduced_operator(&inst, e).unwrap().to_dense();
            let c = scalar_factor(e);
            for i in 0..5 {
                for j in 0..5 {
                    assert!((m[i][j] - c * h[i][j]).abs() <= 1e-12 * c.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn scalar_identity_spectra() {
        for i in 0..50 {
            let mut s = DrawKey::new(11, i).stream();
            let omega: Vec<f64> = (0..8).map(|_| s.next_unit()).collect();
            let inst = QGraphInstance::new(omega).unwrap();
            let e = 0.1 + 60.0 * s.next_unit();
            if inst.check_energy(e).is_err() {
                continue;
            }
            let c = scalar_factor(e);
            let a = jacobi_eigen(m_matrix(&inst, e).unwrap());
            let b = dense_spectrum(&reduced_operator(&inst, e).unwrap()).unwrap();
            let mut scaled: Vec<f64> = b.values.iter().map(|x| c * x).collect();
            scaled.sort_by(f64::total_cmp);
            let mut av = a.values.clone();
            av.sort_by(f64::total_cmp);
            for (x, y) in av.iter().zip(&scaled) {
                assert!(
                    (x - y).abs() <= 1e-10 * x.abs().max(y.abs()).max(1.0),
                    "{x} vs {y}"
                );
            }
        }
    }

    #[test]
    fn poles_are_refused() {
        let inst = QGraphInstance::new(vec![0.5]).unwrap();
        assert!(reduced_operator(&inst, PI * PI).is_err());
        assert!(reduced_operator(&inst, PI * PI + 2.0 * DEFAULT_EXCLUSION).is_ok());
        assert!(reduced_operator(&inst, -1.0).is_err());
    }

    #[test]
    fn free_roots_match_transcendental_equation() {
        for l in [5, 7] {
            let inst = QGraphInstance::new(vec![0.0; l]).unwrap();
            let e_max = 4.0 * PI * PI - DEFAULT_EXCLUSION;
            let got = graph_eigenvalues(&inst, 0.0, e_max, 1e-11).unwrap();
            let want = free_roots(l, e_max);
            assert_eq!(got.len(), want.len(), "L={l}: {got:?} vs {want:?}");
            for (g, w) in got.iter().zip(&want) {
                assert!((g.energy - w).abs() <= 1e-8, "{g:?} vs {w}");
            }
        }
    }

    #[test]
    fn zero_window_is_empty() {
        let inst = QGraphInstance::new(vec![0.3; 4]).unwrap();
        assert!(graph_eigenvalues(&inst, 2.0, 2.0, 1e-10)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn roots_null_the_m_matrix() {
        let inst = QGraphInstance::new(vec![0.1, 0.8, 0.5, 0.3, 0.9, 0.2]).unwrap();
        let roots = graph_eigenvalues(&inst, 0.0, 40.0, 1e-11).unwrap();
        assert!(!roots.is_empty());
        for r in roots {
            let m = jacobi_eigen(m_matrix(&inst, r.energy).unwrap());
            let smallest = m
                .values
                .iter()
                .map(|x| x.abs())
                .fold(f64::INFINITY, f64::min);
            assert!(
                smallest <= 1e-8 * scalar_factor(r.energy).abs().max(1.0),
                "{r:?}: {smallest}"
            );
        }
    }

    #[test]
    fn reduced_eigenvalues_never_rise_with_omega() {
        let base = vec![0.2, 0.5, 0.1, 0.7];
        for e in [1.0, 4.0, 8.0] {
            let h0 = dense_spectrum(
                &reduced_operator(&QGraphInstance::new(base.clone()).unwrap(), e).unwrap(),
            )
            .unwrap();
            for i in 0..4 {
                let mut w = base.clone();
                w[i] += 1e-3;
                let h1 =
                    dense_spectrum(&reduced_operator(&QGraphInstance::new(w).unwrap(), e).unwrap())
                        .unwrap();
                for (a, b) in h0.values.iter().zip(&h1.values) {
                    assert!(b <= &(a + 1e-14), "E={e}, site {i}: {a} -> {b}");
                }
            }
        }
    }

    #[test]
    fn roots_csv_round() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("roots.csv");
        write_roots_csv(
            &p,
            &[GraphRoot {
                energy: 1.5,
                residual: 1e-12,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("energy,residual\n1.5"));
    }

    #[test]
    fn zero_width_probe() {
        let p = QGraphMinamiProbe {
            spec: EnsembleSpec::qgraph(CouplingLaw::uniform(0.0, 1.0)),
            energy: 4.0,
            widths: vec![0.0, 0.05],
            size: 50,
            samples: 2000,
            seed: 1,
        };
        let r = qgraph_minami_probe(&p, &Executor::sequential()).unwrap();
        assert_eq!(r.value("p1[0]"), Some(0.0));
        assert!(r.value("p1[1]").unwrap() > 0.0);
    }
}
