//! Prüfer variables, Wronskians, box splitting and eigenvalue derivatives.
//!
//! Sites are 1-based in the doc comments and 0-based in slices. A vector
//! `u` on `{1, …, L}` is extended by `u(0) = u(L + 1) = 0`.

use std::f64::consts::TAU;

use crate::eigensolve::{eigenvalue_by_index, eigenvector, sturm_count};
use crate::error::{Error, Result};
use crate::operators::{
    energy_family_potential, EnsembleDraw, EnsembleSpec, Model, TridiagonalOperator,
};
use crate::rng::DrawKey;

/// Largest `‖Hu − Eu‖ / (‖H‖‖u‖)` accepted as an eigenpair.
pub const EIGENPAIR_TOL: f64 = 1e-8;

fn at(u: &[f64], n: usize) -> f64 {
    // 1-based with zero boundary values
    if n == 0 || n > u.len() {
        0.0
    } else {
        u[n - 1]
    }
}

fn check_eigenpair(h: &TridiagonalOperator, energy: f64, u: &[f64]) -> Result<()> {
    if u.len() != h.size() {
        return Err(Error::BadEigenpair(format!(
            "vector has {} entries, operator has {} sites",
            u.len(),
            h.size()
        )));
    }
    let nrm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let res = h.residual(energy, u);
    if !(res <= EIGENPAIR_TOL * h.norm_bound().max(1.0) * nrm) {
        return Err(Error::BadEigenpair(format!(
            "residual {res:e} at E = {energy} is not an eigenpair"
        )));
    }
    Ok(())
}

/// Polar coordinates of `(u(n), u(n − 1)) = r(n) (sin φ(n), cos φ(n))`
/// for `n = 1, …, L + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrueferTrace {
    pub energy: f64,
    pub radii: Vec<f64>,
    /// In `[0, 2π)`.
    pub angles: Vec<f64>,
}

impl PrueferTrace {
    /// Rebuild `u(1..=L)` from the radii and angles.
    pub fn reconstruct(&self) -> Vec<f64> {
        let l = self.radii.len() - 1;
        (0..l)
            .map(|i| self.radii[i] * self.angles[i].sin())
            .collect()
    }

    /// Rebuild `u(0..L)` from the cosine components.
    pub fn reconstruct_shifted(&self) -> Vec<f64> {
        self.radii
            .iter()
            .zip(&self.angles)
            .map(|(r, a)| r * a.cos())
            .collect()
    }

    /// `max_n max(r(n)/r(n+1), r(n+1)/r(n))`.
    pub fn max_step_ratio(&self) -> f64 {
        self.radii
            .windows(2)
            .map(|w| (w[0] / w[1]).max(w[1] / w[0]))
            .fold(1.0, f64::max)
    }

    /// Smallest `|sin φ(n + 1)|` over interior steps with `|sin φ(n)| ≤ eps`.
    pub fn angle_recovery(&self, eps: f64) -> Option<f64> {
        let interior = self.angles.len() - 1;
        (0..interior.saturating_sub(1))
            .filter(|&i| self.angles[i].sin().abs() <= eps)
            .map(|i| self.angles[i + 1].sin().abs())
            .reduce(f64::min)
    }
}

fn polar(x: f64, y: f64) -> (f64, f64) {
    let r = x.hypot(y);
    let mut phi = x.atan2(y);
    if phi < 0.0 {
        phi += TAU;
    }
    if phi >= TAU {
        phi -= TAU;
    }
    (r, phi)
}

/// Prüfer variables along a certified eigenpair.
pub fn pruefer_trace(h: &TridiagonalOperator, energy: f64, u: &[f64]) -> Result<PrueferTrace> {
    check_eigenpair(h, energy, u)?;
    pruefer_variables(energy, u)
}

/// Prüfer variables of an arbitrary vector, without the eigenpair check.
pub fn pruefer_variables(energy: f64, u: &[f64]) -> Result<PrueferTrace> {
    let l = u.len();
    let mut radii = Vec::with_capacity(l + 1);
    let mut angles = Vec::with_capacity(l + 1);
    for n in 1..=l + 1 {
        let (r, phi) = polar(at(u, n), at(u, n - 1));
        if r == 0.0 {
            return Err(Error::BadEigenpair(format!(
                "u({n}) = u({}) = 0; not a nontrivial solution",
                n - 1
            )));
        }
        radii.push(r);
        angles.push(phi);
    }
    Ok(PrueferTrace {
        energy,
        radii,
        angles,
    })
}

/// Wronskian data of two eigenpairs of one operator.
#[derive(Debug, Clone, PartialEq)]
pub struct WronskianReport {
    /// `W(1..=L+1)`; `W(1) = W(L + 1) = 0` by the boundary conditions.
    pub values: Vec<f64>,
    /// `max_n |W(n+1) − W(n) − (E_u − E_v) u(n) v(n)|`.
    pub max_violation: f64,
    /// `max_n |r_u(n) r_v(n) sin(φ_v(n) − φ_u(n))|`.
    pub max_sine_product: f64,
    /// `M = max(|a|, 1/|a|)` over the couplings.
    pub coupling_bound: f64,
    /// `M |E_u − E_v|`.
    pub sine_bound: f64,
}

/// `W(n) = a(n)[u(n)v(n−1) − u(n−1)v(n)]` with its step recursion and the
/// angle bound it implies.
pub fn wronskian_sequence(
    h: &TridiagonalOperator,
    u: &[f64],
    v: &[f64],
    e_u: f64,
    e_v: f64,
) -> Result<WronskianReport> {
    check_eigenpair(h, e_u, u)?;
    check_eigenpair(h, e_v, v)?;
    let l = h.size();
    let de = e_u - e_v;
    let mut values = Vec::with_capacity(l + 1);
    let mut max_sine_product = 0.0f64;
    for n in 1..=l + 1 {
        let cross = at(u, n) * at(v, n - 1) - at(u, n - 1) * at(v, n);
        let w = if (2..=l).contains(&n) {
            h.coupling(n) * cross
        } else {
            0.0
        };
        values.push(w);
        // r_u r_v sin(φ_v − φ_u) = v(n)u(n−1) − v(n−1)u(n)
        max_sine_product = max_sine_product.max(cross.abs());
    }
    let max_violation = (1..=l)
        .map(|n| (values[n] - values[n - 1] - de * at(u, n) * at(v, n)).abs())
        .fold(0.0, f64::max);
    let coupling_bound = h
        .offdiag()
        .iter()
        .map(|a| a.abs().max(1.0 / a.abs()))
        .fold(1.0, f64::max);
    Ok(WronskianReport {
        values,
        max_violation,
        max_sine_product,
        coupling_bound,
        sine_bound: coupling_bound * de.abs(),
    })
}

/// Distance from `energy` to the spectrum of `h`.
pub fn distance_to_spectrum(h: &TridiagonalOperator, energy: f64) -> f64 {
    let tol = 1e-15 * h.norm_bound().max(1.0);
    let below = sturm_count(h, energy);
    let mut d = f64::INFINITY;
    if below > 0 {
        d = d.min(energy - eigenvalue_by_index(h, below - 1, tol));
    }
    if below < h.size() {
        d = d.min(eigenvalue_by_index(h, below, tol) - energy);
    }
    d.max(0.0)
}

/// A pair of separated sub-boxes both carrying spectrum near `E`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitResult {
    /// Left box is `{1, …, x_minus}`.
    pub x_minus: usize,
    /// Right box is `{x_plus, …, L}`.
    pub x_plus: usize,
    pub d_left: f64,
    pub d_right: f64,
    /// `max(d_left, d_right) / (ε L⁴)`.
    pub bound_ratio: f64,
}

impl SplitResult {
    pub fn distance(&self) -> f64 {
        self.d_left.max(self.d_right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitOutcome {
    Found(SplitResult),
    /// No admissible pair met the target; carries the best pair seen.
    NotFound(Option<SplitResult>),
}

/// Exhaustive search over `x_plus − x_minus ≥ separation` minimizing
/// `max(d_left, d_right)`.
pub fn split_box_search(
    h: &TridiagonalOperator,
    energy: f64,
    eps: f64,
    separation: usize,
    target: f64,
) -> Result<SplitOutcome> {
    let l = h.size();
    let inside = crate::eigensolve::count_in_interval(h, energy - eps, energy + eps)?;
    if inside < 2 {
        return Err(Error::Precondition(format!(
            "split search needs two eigenvalues in [E − ε, E + ε], found {inside}"
        )));
    }
    let separation = separation.max(1);
    let left: Vec<f64> = (1..l)
        .map(|x| distance_to_spectrum(&h.restrict(0..x).expect("non-empty box"), energy))
        .collect();
    let right: Vec<f64> = (2..=l)
        .map(|x| distance_to_spectrum(&h.restrict(x - 1..l).expect("non-empty box"), energy))
        .collect();
    let mut best: Option<SplitResult> = None;
    for x_minus in 1..l {
        for x_plus in (x_minus + separation).max(2)..=l {
            let d_left = left[x_minus - 1];
            let d_right = right[x_plus - 2];
            let worst = d_left.max(d_right);
            if best.is_none_or(|b| worst < b.distance()) {
                best = Some(SplitResult {
                    x_minus,
                    x_plus,
                    d_left,
                    d_right,
                    bound_ratio: worst / (eps * (l as f64).powi(4)),
                });
            }
        }
    }
    Ok(match best {
        Some(b) if b.distance() <= target => SplitOutcome::Found(b),
        other => SplitOutcome::NotFound(other),
    })
}

/// Parameter an eigenvalue is differentiated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// The random variable `ω_i` of the draw.
    Omega(i64),
    /// Diagonal entry `V(n)` of the assembled operator, 1-based.
    Diagonal(usize),
    /// Coupling `a(k)` between sites `k − 1` and `k`, `2 ≤ k ≤ L`.
    Coupling(usize),
}

/// An ensemble draw evaluated through its spectral family at `energy`.
#[derive(Debug, Clone, Copy)]
pub struct FamilyPoint<'a> {
    pub spec: &'a EnsembleSpec,
    pub size: usize,
    pub draw: &'a EnsembleDraw,
    pub energy: f64,
}

impl FamilyPoint<'_> {
    pub fn operator(&self) -> Result<TridiagonalOperator> {
        energy_family_potential(self.spec, self.energy, self.size, self.draw)
    }

    fn perturbed(&self, p: Perturbation, t: f64) -> Result<TridiagonalOperator> {
        match p {
            Perturbation::Omega(i) => {
                let mut draw = self.draw.clone();
                let k = (i - draw.first_index) as usize;
                draw.omega[k] += t;
                energy_family_potential(self.spec, self.energy, self.size, &draw)
            }
            Perturbation::Diagonal(n) => {
                let base = self.operator()?;
                let mut d = base.diag().to_vec();
                d[n - 1] += t;
                base.with_diag(d)
            }
            Perturbation::Coupling(k) => {
                let base = self.operator()?;
                let mut a = base.offdiag().to_vec();
                a[k - 2] += t;
                base.with_offdiag(a)
            }
        }
    }

    fn parameter_value(&self, p: Perturbation) -> Result<f64> {
        match p {
            Perturbation::Omega(i) => self
                .draw
                .omega_at(i)
                .ok_or_else(|| Error::InvalidParameter(format!("draw has no ω index {i}"))),
            Perturbation::Diagonal(n) => {
                if !(1..=self.size).contains(&n) {
                    return Err(Error::InvalidParameter(format!("site {n} outside the box")));
                }
                Ok(self.operator()?.diag()[n - 1])
            }
            Perturbation::Coupling(k) => {
                if !(2..=self.size).contains(&k) {
                    return Err(Error::InvalidParameter(format!(
                        "coupling a({k}) is not interior"
                    )));
                }
                Ok(self.operator()?.coupling(k))
            }
        }
    }
}

/// Analytic against finite-difference eigenvalue derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub eigenvalue: f64,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic − numeric| / max(|analytic|, bound)` with `bound` the
    /// largest value the derivative can take for a unit eigenvector.
    pub rel_err: f64,
    pub step: f64,
    pub gap: f64,
}

fn simple_eigenvalue(h: &TridiagonalOperator, j: usize, floor: f64) -> Result<(f64, f64)> {
    let n = h.size();
    if j >= n {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue index {j} with only {n} sites"
        )));
    }
    let tol = 1e-15 * h.norm_bound().max(1.0);
    let e = eigenvalue_by_index(h, j, tol);
    let mut gap = f64::INFINITY;
    if j > 0 {
        gap = gap.min(e - eigenvalue_by_index(h, j - 1, tol));
    }
    if j + 1 < n {
        gap = gap.min(eigenvalue_by_index(h, j + 1, tol) - e);
    }
    if gap <= floor {
        return Err(Error::Degenerate {
            energy: e,
            gap,
            floor,
        });
    }
    Ok((e, gap))
}

/// Relative gap floor for derivative checks.
pub const GAP_FLOOR: f64 = 1e-10;

fn central_difference(f: &dyn Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((f(h)? - f(-h)?) / (2.0 * h))
}

/// Hellmann–Feynman derivative of the `j`-th eigenvalue (0-based).
pub fn hellmann_feynman_check(
    point: &FamilyPoint<'_>,
    j: usize,
    perturbation: Perturbation,
) -> Result<GradientCheck> {
    let op = point.operator()?;
    let floor = GAP_FLOOR * op.norm_bound().max(1.0);
    let (e, gap) = simple_eigenvalue(&op, j, floor)?;
    let phi = eigenvector(&op, e)?.simple()?;
    let l = point.size;
    let (scale, _) = point.spec.family.affine(point.energy)?;
    let pair = |k: usize| 2.0 * at(&phi, k) * at(&phi, k - 1);
    let (analytic, bound) = match perturbation {
        Perturbation::Omega(i) => {
            point.parameter_value(perturbation)?;
            match point.spec.model {
                Model::Hopping => {
                    let k = i as usize;
                    (
                        if (2..=l as i64).contains(&i) {
                            pair(k)
                        } else {
                            0.0
                        },
                        1.0,
                    )
                }
                _ => {
                    let sens = point.spec.potential_sensitivity(l, i);
                    let a: f64 = sens.iter().map(|(m, c)| c * phi[*m] * phi[*m]).sum();
                    let b: f64 = sens.iter().map(|(_, c)| c.abs()).sum();
                    (scale * a, (scale * b).abs())
                }
            }
        }
        Perturbation::Diagonal(n) => {
            point.parameter_value(perturbation)?;
            (phi[n - 1] * phi[n - 1], 1.0)
        }
        Perturbation::Coupling(k) => {
            point.parameter_value(perturbation)?;
            (pair(k), 1.0)
        }
    };
    let value = point.parameter_value(perturbation)?;
    let step = 1e-5 * value.abs().max(1.0);
    let tol = 1e-16 * op.norm_bound().max(1.0);
    let eval = |t: f64| -> Result<f64> {
        Ok(eigenvalue_by_index(
            &point.perturbed(perturbation, t)?,
            j,
            tol,
        ))
    };
    let denom = analytic.abs().max(bound).max(f64::MIN_POSITIVE);
    let mut numeric = central_difference(&eval, step)?;
    if (analytic - numeric).abs() / denom > 1e-4 {
        let half = central_difference(&eval, step / 2.0)?;
        numeric = (4.0 * half - numeric) / 3.0;
    }
    Ok(GradientCheck {
        eigenvalue: e,
        analytic,
        numeric,
        rel_err: (analytic - numeric).abs() / denom,
        step,
        gap,
    })
}

/// Both sides of `a(k+1)∂E/∂a(k+1) + a(k)∂E/∂a(k) = 2(E − V(k))φ(k)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Radial identity at site `k` (1-based) for eigenvalue `j`, with the
/// coupling derivatives taken by central differences.
pub fn radial_identity(h: &TridiagonalOperator, j: usize, k: usize) -> Result<RadialCheck> {
    let l = h.size();
    if !(1..=l).contains(&k) {
        return Err(Error::InvalidParameter(format!("site {k} outside the box")));
    }
    let floor = GAP_FLOOR * h.norm_bound().max(1.0);
    let (e, _) = simple_eigenvalue(h, j, floor)?;
    let phi = eigenvector(h, e)?.simple()?;
    let tol = 1e-16 * h.norm_bound().max(1.0);
    let derivative = |c: usize| -> Result<f64> {
        let a = h.coupling(c);
        let step = 1e-5 * a.abs().max(1.0);
        let eval = |t: f64| -> Result<f64> {
            let mut off = h.offdiag().to_vec();
            off[c - 2] += t;
            Ok(eigenvalue_by_index(&h.with_offdiag(off)?, j, tol))
        };
        let d = central_difference(&eval, step)?;
        let half = central_difference(&eval, step / 2.0)?;
        Ok(a * (4.0 * half - d) / 3.0)
    };
    let mut lhs = 0.0;
    if k < l {
        lhs += derivative(k + 1)?;
    }
    if k >= 2 {
        lhs += derivative(k)?;
    }
    let rhs = 2.0 * (e - h.diag()[k - 1]) * phi[k - 1] * phi[k - 1];
    Ok(RadialCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Finite-difference Hessian of one eigenvalue in the diagonal entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianEstimate {
    /// Estimate of `‖Hess‖_{ℓ∞→ℓ¹}` by the entrywise `ℓ¹` sum.
    pub norm: f64,
    pub gap: f64,
    /// `norm · gap`.
    pub ratio: f64,
    pub pairs: usize,
}

/// Entrywise second differences of eigenvalue `j` with respect to the
/// diagonal. All pairs are used when there are at most `max_pairs`; otherwise
/// a seeded random subset is scaled up to the full count.
pub fn hessian_bound_probe(
    h: &TridiagonalOperator,
    j: usize,
    max_pairs: usize,
    seed: u64,
) -> Result<HessianEstimate> {
    let n = h.size();
    let floor = GAP_FLOOR * h.norm_bound().max(1.0);
    let (_, gap) = simple_eigenvalue(h, j, floor)?;
    let step = 1e-4 * gap.min(1.0);
    let tol = 1e-16 * h.norm_bound().max(1.0);
    let eval = |shifts: &[(usize, f64)]| -> Result<f64> {
        let mut d = h.diag().to_vec();
        for (m, t) in shifts {
            d[*m] += t;
        }
        Ok(eigenvalue_by_index(&h.with_diag(d)?, j, tol))
    };
    let e0 = eval(&[])?;
    let entry = |m: usize, q: usize| -> Result<f64> {
        if m == q {
            Ok((eval(&[(m, step)])? - 2.0 * e0 + eval(&[(m, -step)])?) / (step * step))
        } else {
            let pp = eval(&[(m, step), (q, step)])?;
            let pm = eval(&[(m, step), (q, -step)])?;
            let mp = eval(&[(m, -step), (q, step)])?;
            let mm = eval(&[(m, -step), (q, -step)])?;
            Ok((pp - pm - mp + mm) / (4.0 * step * step))
        }
    };
    let total = n * (n + 1) / 2;
    let mut sum = 0.0;
    let pairs;
    if total <= max_pairs {
        for m in 0..n {
            for q in m..n {
                let w = if m == q { 1.0 } else { 2.0 };
                sum += w * entry(m, q)?.abs();
            }
        }
        pairs = total;
    } else {
        let mut s = DrawKey::new(seed, 0).stream();
        let mut diag_sum = 0.0;
        let mut off_sum = 0.0;
        let mut diag_n = 0usize;
        let mut off_n = 0usize;
        for _ in 0..max_pairs {
            let m = (s.next_u64() % n as u64) as usize;
            let q = (s.next_u64() % n as u64) as usize;
            let v = entry(m.min(q), m.max(q))?.abs();
            if m == q {
                diag_sum += v;
                diag_n += 1;
            } else {
                off_sum += v;
                off_n += 1;
            }
        }
        let nf = n as f64;
        if diag_n > 0 {
            sum += diag_sum / diag_n as f64 * nf;
        }
        if off_n > 0 {
            sum += off_sum / off_n as f64 * nf * (nf - 1.0);
        }
        pairs = max_pairs;
    }
    Ok(HessianEstimate {
        norm: sum,
        gap,
        ratio: sum * gap,
        pairs,
    })
}

/// Sites around the maximum of `|u|` that keep appreciable mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassReport {
    pub center: usize,
    /// Contiguous sites `m` around the center with
    /// `max(|u(m)|, |u(m+1)|) ≥ e^{-l^β}`.
    pub sites: usize,
    pub threshold: f64,
    /// `sites / l^β`.
    pub constant: f64,
}

pub fn eigenfunction_mass(u: &[f64], beta: f64) -> Result<MassReport> {
    let center = crate::eigensolve::localization_center(u)?;
    let l = u.len() as f64;
    let threshold = (-l.powf(beta)).exp();
    let heavy = |m: usize| at(u, m).abs().max(at(u, m + 1).abs()) >= threshold;
    let mut lo = center;
    while lo > 1 && heavy(lo - 1) {
        lo -= 1;
    }
    let mut hi = center;
    while hi < u.len() && heavy(hi + 1) {
        hi += 1;
    }
    let sites = hi - lo + 1;
    Ok(MassReport {
        center,
        sites,
        threshold,
        constant: sites as f64 / l.powf(beta),
    })
}

/// Growth of the Prüfer angle difference between two solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleAmplification {
    /// `max_n |δφ(n+1)| / |δφ(n)|` over steps with `δφ(n) ≠ 0`.
    pub max_factor: f64,
    pub steps: usize,
}

/// Solve `Hu = Eu` from `u(0) = 0, u(1) = 1` at two energies and compare
/// Prüfer angles step by step.
pub fn angle_amplification(h: &TridiagonalOperator, e1: f64, e2: f64) -> AngleAmplification {
    let a1 = solution_angles(h, e1);
    let a2 = solution_angles(h, e2);
    let wrap = |d: f64| {
        let mut d = d.rem_euclid(TAU);
        if d > std::f64::consts::PI {
            d -= TAU;
        }
        d
    };
    let deltas: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| wrap(y - x).abs()).collect();
    let mut max_factor = 0.0f64;
    let mut steps = 0;
    for w in deltas.windows(2) {
        if w[0] > 0.0 {
            max_factor = max_factor.max(w[1] / w[0]);
            steps += 1;
        }
    }
    AngleAmplification { max_factor, steps }
}

/// Prüfer angles of the initial-value solution at `energy`, `n = 1..=L`.
fn solution_angles(h: &TridiagonalOperator, energy: f64) -> Vec<f64> {
    let l = h.size();
    let (mut x, mut y) = (1.0f64, 0.0f64);
    let mut out = Vec::with_capacity(l);
    out.push(polar(x, y).1);
    for n in 1..l {
        // b(n+1) u(n+1) = (E − V(n)) u(n) − b(n) u(n−1), b(1) ≡ 1
        let b_prev = if n >= 2 { h.coupling(n) } else { 1.0 };
        let next = ((energy - h.diag()[n - 1]) * x - b_prev * y) / h.coupling(n + 1);
        y = x;
        x = next;
        let r = x.hypot(y);
        x /= r;
        y /= r;
        out.push(polar(x, y).1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::dense_spectrum;
    use crate::law::CouplingLaw;
    use crate::operators::{assemble, Realizer};

    #[test]
    fn axis_case() {
        let (r, phi) = polar(0.0, 1.0);
        assert_eq!((r, phi), (1.0, 0.0));
    }

    #[test]
    fn free_laplacian_trace() {
        let h = TridiagonalOperator::free_laplacian(3);
        let s = 1.0 / 2f64.sqrt();
        let u = [s, 0.0, -s];
        let t = pruefer_trace(&h, 0.0, &u).unwrap();
        // (u(1),u(0)), (u(2),u(1)), (u(3),u(2)), (u(4),u(3))
        let expected = [s, s, s, s];
        for (r, e) in t.radii.iter().zip(&expected) {
            assert!((r - e).abs() < 1e-15);
        }
        let back = t.reconstruct();
        for (a, b) in back.iter().zip(&u) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(pruefer_trace(&h, 0.5, &u).is_err());
    }

    #[test]
    fn zero_pair_is_rejected() {
        assert!(pruefer_variables(0.0, &[0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn reconstruction_on_hopping_eigenvectors() {
        let spec = EnsembleSpec::standard_hopping();
        let mut r = Realizer::new();
        for i in 0..10 {
            let h = r.realize(&spec, 40, DrawKey::new(1, i)).clone();
            let s = dense_spectrum(&h).unwrap();
            for (e, v) in s.values.iter().zip(&s.vectors) {
                let t = pruefer_trace(&h, *e, v).unwrap();
                let back = t.reconstruct();
                let shifted = t.reconstruct_shifted();
                for n in 0..40 {
                    assert!((back[n] - v[n]).abs() < 1e-12);
                    assert!((shifted[n + 1] - v[n]).abs() < 1e-12);
                }
                assert!(t.radii.iter().all(|r| *r > 0.0));
            }
        }
    }

    #[test]
    fn degenerate_pair_has_zero_wronskian() {
        let h = TridiagonalOperator::new(vec![0.3, -0.2, 0.3, -0.2], vec![0.7, 0.0, 0.7]).unwrap();
        let s = dense_spectrum(&h).unwrap();
        let e = s.values[0];
        let mut u = vec![0.0; 4];
        let mut v = vec![0.0; 4];
        // one copy in each block
        let b =
            dense_spectrum(&TridiagonalOperator::new(vec![0.3, -0.2], vec![0.7]).unwrap()).unwrap();
        u[..2].copy_from_slice(&b.vectors[0]);
        v[2..].copy_from_slice(&b.vectors[0]);
        let w = wronskian_sequence(&h, &u, &v, e, e).unwrap();
        assert!(w.values.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn wronskian_recursion_on_hopping() {
        let spec = EnsembleSpec::standard_hopping();
        let mut r = Realizer::new();
        let h = r.realize(&spec, 50, DrawKey::new(2, 0)).clone();
        let e0 = eigenvalue_by_index(&h, 0, 1e-15);
        let e1 = eigenvalue_by_index(&h, 1, 1e-15);
        let u = eigenvector(&h, e0).unwrap().simple().unwrap();
        let v = eigenvector(&h, e1).unwrap().simple().unwrap();
        let w = wronskian_sequence(&h, &u, &v, e0, e1).unwrap();
        assert!(w.max_violation <= 1e-10);
        assert!(w.values.iter().all(|x| x.abs() <= (e0 - e1).abs() + 1e-12));
        assert!(w.max_sine_product <= w.sine_bound + 1e-10);
        assert_eq!(w.values[0], 0.0);
        assert_eq!(*w.values.last().unwrap(), 0.0);
    }

    #[test]
    fn wronskian_rejects_foreign_vectors() {
        let h = TridiagonalOperator::free_laplacian(4);
        let u = [0.5, 0.5, 0.5, 0.5];
        assert!(wronskian_sequence(&h, &u, &u, 0.0, 0.0).is_err());
    }

    #[test]
    fn decoupled_blocks_split_exactly() {
        let block = [0.4, -1.0, 0.7, 0.2, -0.3];
        let diag: Vec<f64> = block.iter().chain(&block).copied().collect();
        let mut off = vec![1.0; 9];
        off[4] = 0.0;
        let h = TridiagonalOperator::new(diag, off).unwrap();
        let e = dense_spectrum(&h).unwrap().values[4];
        let SplitOutcome::Found(s) = split_box_search(&h, e, 1e-9, 1, 1e-12).unwrap() else {
            panic!("no split");
        };
        assert!(s.d_left < 1e-12 && s.d_right < 1e-12);
        assert!(s.x_plus - s.x_minus >= 1);
    }

    #[test]
    fn split_needs_two_eigenvalues() {
        let h = TridiagonalOperator::free_laplacian(5);
        assert!(matches!(
            split_box_search(&h, 0.0, 1e-6, 1, 1e-4),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn scalar_gradient() {
        let spec = EnsembleSpec::anderson(CouplingLaw::uniform(-1.0, 1.0));
        let draw = spec.draw(1, DrawKey::new(0, 0)).unwrap();
        let p = FamilyPoint {
            spec: &spec,
            size: 1,
            draw: &draw,
            energy: 0.0,
        };
        let g = hellmann_feynman_check(&p, 0, Perturbation::Omega(1)).unwrap();
        assert!((g.analytic - 1.0).abs() < 1e-15);
        assert!((g.numeric - 1.0).abs() < 1e-9);
    }

    #[test]
    fn anderson_gradients_match_differences() {
        let spec = EnsembleSpec::anderson(CouplingLaw::uniform(-2.0, 2.0));
        let draw = spec.draw(10, DrawKey::new(3, 0)).unwrap();
        let p = FamilyPoint {
            spec: &spec,
            size: 10,
            draw: &draw,
            energy: 0.0,
        };
        for j in 0..10 {
            for n in 1..=10 {
                let g = hellmann_feynman_check(&p, j, Perturbation::Omega(n)).unwrap();
                assert!(g.rel_err <= 1e-6, "j={j} n={n}: {g:?}");
            }
        }
    }

    #[test]
    fn family_scale_enters_gradient() {
        let spec = EnsembleSpec::anderson(CouplingLaw::uniform(-2.0, 2.0)).with_family(
            crate::operators::SpectralFamily::Constant {
                lambda: 2.0,
                mu: 0.5,
            },
        );
        let draw = spec.draw(8, DrawKey::new(4, 0)).unwrap();
        let p = FamilyPoint {
            spec: &spec,
            size: 8,
            draw: &draw,
            energy: 0.0,
        };
        let g = hellmann_feynman_check(&p, 3, Perturbation::Omega(4)).unwrap();
        assert!(g.rel_err <= 1e-6, "{g:?}");
    }

    #[test]
    fn hopping_coupling_gradients() {
        let spec = EnsembleSpec::standard_hopping();
        let draw = spec.draw(10, DrawKey::new(5, 0)).unwrap();
        let p = FamilyPoint {
            spec: &spec,
            size: 10,
            draw: &draw,
            energy: 0.0,
        };
        for j in 0..10 {
            for i in 1..=11 {
                let g = hellmann_feynman_check(&p, j, Perturbation::Omega(i)).unwrap();
                assert!(g.rel_err <= 1e-6, "j={j} i={i}: {g:?}");
                if i == 1 || i == 11 {
                    assert_eq!(g.analytic, 0.0);
                }
            }
        }
    }

    #[test]
    fn radial_identity_on_hopping() {
        let spec = EnsembleSpec::standard_hopping();
        let mut r = Realizer::new();
        let h = r.realize(&spec, 10, DrawKey::new(6, 0)).clone();
        for j in 0..10 {
            for k in 1..=10 {
                let c = radial_identity(&h, j, k).unwrap();
                assert!(c.residual <= 1e-8, "j={j} k={k}: {c:?}");
            }
        }
    }

    #[test]
    fn degenerate_gradient_is_refused() {
        let h = TridiagonalOperator::new(vec![1.0, 1.0], vec![0.0]).unwrap();
        assert!(matches!(
            hessian_bound_probe(&h, 0, 10, 0),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn decoupled_hessian_vanishes() {
        let h = TridiagonalOperator::new(vec![0.0, 1.0, 2.5], vec![0.0, 0.0]).unwrap();
        let est = hessian_bound_probe(&h, 1, 100, 0).unwrap();
        assert!(est.norm < 1e-6, "{est:?}");
    }

    #[test]
    fn hessian_matches_perturbation_theory() {
        // ∂²E_j/∂V_m∂V_n = 2 Σ_{k≠j} φ_j(m)φ_k(m)φ_j(n)φ_k(n) / (E_j − E_k)
        let spec = EnsembleSpec::anderson(CouplingLaw::uniform(-2.0, 2.0));
        let draw = spec.draw(6, DrawKey::new(7, 0)).unwrap();
        let h = assemble(&spec, 6, &draw).unwrap();
        let s = dense_spectrum(&h).unwrap();
        let j = 2;
        let mut exact = 0.0;
        for m in 0..6 {
            for q in 0..6 {
                let mut v = 0.0;
                for k in 0..6 {
                    if k != j {
                        v += 2.0
                            * s.vectors[j][m]
                            * s.vectors[k][m]
                            * s.vectors[j][q]
                            * s.vectors[k][q]
                            / (s.values[j] - s.values[k]);
                    }
                }
                exact += v.abs();
            }
        }
        let est = hessian_bound_probe(&h, j, 100, 0).unwrap();
        assert!(
            (est.norm - exact).abs() < 1e-4 * exact,
            "{} vs {exact}",
            est.norm
        );
    }

    #[test]
    fn mass_counts_neighbourhood() {
        let u = [1e-40, 1e-3, 0.9, 0.4, 1e-40, 1e-40];
        let m = eigenfunction_mass(&u, 0.6).unwrap();
        assert_eq!(m.center, 3);
        // threshold e^{-6^0.6} ≈ 0.0341: sites 2, 3 and 4 qualify (site 2 through u(3))
        assert_eq!(m.sites, 3);
    }

    #[test]
    fn amplification_is_finite() {
        let spec = EnsembleSpec::standard_hopping();
        let mut r = Realizer::new();
        let h = r.realize(&spec, 100, DrawKey::new(8, 0)).clone();
        let a = angle_amplification(&h, 0.3, 0.3 + 1e-6);
        assert!(a.max_factor.is_finite() && a.steps > 0);
    }
}
