//! Transfer matrices, Lyapunov exponents and the sign-alternating dimer model.

use std::ops::{Mul, Neg};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::ids::IdsTable;
use crate::operators::{EnsembleSpec, Realizer, TridiagonalOperator};
use crate::rng::DrawKey;
use crate::stats::{log_log_fit, CompensatedSum, LineFit, Moments};

/// Real 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut d = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        d
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        let m = self.0;
        Mat2([[-m[0][0], -m[0][1]], [-m[1][0], -m[1][1]]])
    }
}

/// A transfer matrix together with the determinant it must have.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferStep {
    pub matrix: Mat2,
    pub det: f64,
}

impl TransferStep {
    pub fn det_error(&self) -> f64 {
        (self.matrix.det() - self.det).abs()
    }
}

/// `[[V − E, −1], [1, 0]]`: one step of `−Δ + V`, mapping
/// `(u(n), u(n−1))` to `(u(n+1), u(n))`.
pub fn one_step(v: f64, energy: f64) -> TransferStep {
    TransferStep {
        matrix: Mat2([[v - energy, -1.0], [1.0, 0.0]]),
        det: 1.0,
    }
}

/// One step of a tridiagonal operator with signed off-diagonal entries
/// `b(n)` (between `n−1` and `n`) and `b(n+1)`:
/// `[[(E − V)/b(n+1), −b(n)/b(n+1)], [1, 0]]`.
///
/// For off-diagonal `−a` this is `[[(V − E)/a(n+1), −a(n)/a(n+1)], [1, 0]]`.
pub fn jacobi_step(v: f64, b_prev: f64, b_next: f64, energy: f64) -> TransferStep {
    TransferStep {
        matrix: Mat2([[(energy - v) / b_next, -b_prev / b_next], [1.0, 0.0]]),
        det: b_prev / b_next,
    }
}

/// `T_n = [[(ω−E)(ω+E)+1, ω−E], [ω+E, 1]]`.
///
/// The physical two-step matrix of `V(2n) = −V(2n+1) = ω` is conjugate to
/// `−T_n`; `−T_n` equals `M(ω)·M(−ω)` with `M` from [`one_step`].
pub fn dimer_two_step(omega: f64, energy: f64) -> TransferStep {
    let (w, e) = (omega, energy);
    TransferStep {
        matrix: Mat2([[(w - e) * (w + e) + 1.0, w - e], [w + e, 1.0]]),
        det: 1.0,
    }
}

/// Propagate `(u(1), u(0))` with `u(0) = 0` through the operator's own
/// recursion at `energy`, returning `(u(n+1), u(n))` for `n = 1..L−1`.
pub fn propagate(h: &TridiagonalOperator, energy: f64, u1: f64) -> Vec<[f64; 2]> {
    let l = h.size();
    let mut v = [u1, 0.0];
    let mut out = Vec::with_capacity(l.saturating_sub(1));
    for n in 1..l {
        // missing b(1) is irrelevant since u(0) = 0
        let b_prev = if n >= 2 { h.coupling(n) } else { 1.0 };
        v = jacobi_step(h.diag()[n - 1], b_prev, h.coupling(n + 1), energy)
            .matrix
            .apply(v);
        out.push(v);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub energy: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub steps: usize,
    pub samples: usize,
}

impl LyapunovEstimate {
    /// Lower end of a one-sided interval at normal quantile `z`.
    pub fn lower_bound(&self, z: f64) -> f64 {
        self.estimate - z * self.stderr
    }
}

/// Steps discarded before accumulating the growth rate.
pub fn default_burn_in(steps: usize) -> usize {
    (steps / 10).max(100)
}

const START_TAG: u64 = 0x5354_4152_5456;

/// `(1/steps) Σ log‖T v‖` with unit renormalization after every step.
/// `matrices` must yield `burn_in + steps` matrices.
pub fn growth_rate<I: Iterator<Item = Mat2>>(
    matrices: I,
    start: [f64; 2],
    burn_in: usize,
    steps: usize,
) -> f64 {
    let n0 = start[0].hypot(start[1]);
    let mut v = [start[0] / n0, start[1] / n0];
    let mut acc = CompensatedSum::default();
    for (i, m) in matrices.take(burn_in + steps).enumerate() {
        let w = m.apply(v);
        let r = w[0].hypot(w[1]);
        v = [w[0] / r, w[1] / r];
        if i >= burn_in {
            acc.add(r.ln());
        }
    }
    acc.value() / steps as f64
}

/// Replica estimator over independent matrix sequences. `sequence(r)`
/// builds the sequence of replica `r`.
pub fn lyapunov_replicas<F, I>(
    energy: f64,
    steps: usize,
    samples: usize,
    seed: u64,
    exec: &Executor,
    sequence: F,
) -> Result<LyapunovEstimate>
where
    F: Fn(u64) -> I + Sync,
    I: Iterator<Item = Mat2>,
{
    if steps == 0 || samples < 2 {
        return Err(Error::InvalidParameter(
            "need steps ≥ 1 and at least 2 replicas".into(),
        ));
    }
    let burn_in = default_burn_in(steps);
    let start_seed = DrawKey::derive_seed(seed, START_TAG);
    let parts = exec.map_chunks(samples as u64, 4, |range| {
        let mut m = Moments::default();
        for r in range {
            let mut s = DrawKey::new(start_seed, r).stream();
            let theta = std::f64::consts::TAU * s.next_unit();
            m.push(growth_rate(
                sequence(r),
                [theta.cos(), theta.sin()],
                burn_in,
                steps,
            ));
        }
        m
    });
    let mut all = Moments::default();
    for p in parts {
        all.merge(&p);
    }
    Ok(LyapunovEstimate {
        energy,
        estimate: all.mean(),
        stderr: all.stderr(),
        steps,
        samples,
    })
}

/// Lyapunov exponent of the ensemble's transfer matrices at `energy`,
/// per lattice step.
pub fn lyapunov(
    spec: &EnsembleSpec,
    energy: f64,
    steps: usize,
    samples: usize,
    seed: u64,
    exec: &Executor,
) -> Result<LyapunovEstimate> {
    if steps < 1000 {
        return Err(Error::InvalidParameter(format!(
            "Lyapunov estimation needs at least 1000 steps, got {steps}"
        )));
    }
    if samples < 32 {
        return Err(Error::InvalidParameter(format!(
            "Lyapunov estimation needs at least 32 replicas, got {samples}"
        )));
    }
    spec.validate()?;
    let burn_in = default_burn_in(steps);
    let size = burn_in + steps + 2;
    lyapunov_replicas(energy, steps, samples, seed, exec, |r| {
        let mut real = Realizer::new();
        let h = real.realize(spec, size, DrawKey::new(seed, r)).clone();
        (2..size).map(move |n| {
            jacobi_step(h.diag()[n - 1], h.coupling(n), h.coupling(n + 1), energy).matrix
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Conjugacy {
    Elliptic,
    Parabolic,
    Hyperbolic,
}

/// Tolerance on `|tr| − 2` for the parabolic class.
pub const TRACE_TOL: f64 = 1e-12;

pub fn classify(m: &Mat2) -> Conjugacy {
    let t = m.trace().abs();
    if (t - 2.0).abs() <= TRACE_TOL {
        Conjugacy::Parabolic
    } else if t < 2.0 {
        Conjugacy::Elliptic
    } else {
        Conjugacy::Hyperbolic
    }
}

/// One matrix of the dimer example compared against its trace formula.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub name: String,
    pub trace: f64,
    pub formula: f64,
    pub class: Conjugacy,
    /// Class asserted for this energy window in the dimer argument, if any.
    pub claimed: Option<Conjugacy>,
}

impl TraceEntry {
    pub fn agrees(&self) -> bool {
        (self.trace - self.formula).abs() <= TRACE_TOL * self.formula.abs().max(1.0)
            && self.claimed.is_none_or(|c| c == self.class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub energy: f64,
    /// `δ` used for `C_δ`, when its class is asserted at this energy.
    pub delta: Option<f64>,
    pub entries: Vec<TraceEntry>,
}

impl EllipticityReport {
    pub fn agrees(&self) -> bool {
        self.entries.iter().all(TraceEntry::agrees)
    }
}

/// Traces and classes of `A = T(0)`, `A²`, `B = T(1)`, `B²` and `C_δ = T(δ)`.
pub fn ellipticity_report(energy: f64) -> Result<EllipticityReport> {
    if !(-3.0..=3.0).contains(&energy) {
        return Err(Error::Domain {
            energy,
            reason: "the dimer trace table covers [-3, 3]".into(),
        });
    }
    use Conjugacy::*;
    let e = energy.abs();
    let e2 = energy * energy;
    let a = dimer_two_step(0.0, energy).matrix;
    let b = dimer_two_step(1.0, energy).matrix;
    // classes asserted per window of |E|
    let (ca, ca2, cb, cb2, delta, cc) = if e > 2.0 {
        (
            Some(Hyperbolic),
            None,
            None,
            None,
            Some((e - 2.0) / 2.0),
            Some(Hyperbolic),
        )
    } else if e == 2.0 {
        (
            Some(Parabolic),
            None,
            Some(Elliptic),
            Some(Elliptic),
            None,
            None,
        )
    } else if e > 1.0 {
        (
            Some(Elliptic),
            Some(Elliptic),
            Some(Elliptic),
            None,
            None,
            None,
        )
    } else if e > 0.0 {
        (
            Some(Elliptic),
            Some(Elliptic),
            None,
            None,
            Some(e / 2.0),
            Some(Elliptic),
        )
    } else {
        (
            None,
            None,
            Some(Hyperbolic),
            None,
            Some(0.5),
            Some(Hyperbolic),
        )
    };
    let entry = |name: &str, m: Mat2, formula: f64, claimed| TraceEntry {
        name: name.into(),
        trace: m.trace(),
        formula,
        class: classify(&m),
        claimed,
    };
    let mut entries = vec![
        entry("A", a, 2.0 - e2, ca),
        entry("A^2", a * a, e2 * e2 - 4.0 * e2 + 2.0, ca2),
        entry("B", b, 3.0 - e2, cb),
        entry("B^2", b * b, e2 * e2 - 6.0 * e2 + 7.0, cb2),
    ];
    if let Some(d) = delta {
        let c = dimer_two_step(d, energy).matrix;
        entries.push(entry("C", c, 2.0 + d * d - e2, cc));
    }
    Ok(EllipticityReport {
        energy,
        delta,
        entries,
    })
}

/// `N(E + w) − N(E) ≤ C w^h` fitted over widths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderFit {
    pub exponent: f64,
    pub constant: f64,
    /// `(w, max_E [N(E + w) − N(E)])`.
    pub points: Vec<(f64, f64)>,
    pub fit: LineFit,
}

/// Fit the worst-case IDS increment against the window width.
pub fn ids_holder_fit(ids: &IdsTable, energies: &[f64], widths: &[f64]) -> Result<HolderFit> {
    let mut points = Vec::with_capacity(widths.len());
    for &w in widths {
        let mut worst = 0.0f64;
        for &e in energies {
            worst = worst.max(ids.value(e + w)? - ids.value(e)?);
        }
        points.push((w, worst));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let fit = log_log_fit(&xs, &ys).ok_or_else(|| {
        Error::Precondition("IDS increments vanish; no Hölder fit is possible".into())
    })?;
    Ok(HolderFit {
        exponent: fit.slope,
        constant: fit.intercept.exp(),
        points,
        fit,
    })
}

/// Grid for [`ids_holder_fit`]: every `E` and `E + w` is a node.
pub fn holder_grid(energies: &[f64], widths: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = energies
        .iter()
        .flat_map(|&e| std::iter::once(e).chain(widths.iter().map(move |w| e + w)))
        .collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}
