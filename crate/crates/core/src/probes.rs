//! Monte Carlo probes of Wegner, Minami, decorrelation and Poisson statistics.
//!
//! Hot loops use Sturm counts only. All tallies are integers, so merges are
//! exact and reports do not depend on the worker count.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::eigensolve::{eigenvalues_in, sturm_counts};
use crate::error::{Error, Result};
use crate::exec::{Executor, DEFAULT_CHUNK};
use crate::ids::{estimate_ids, linear_grid, unfold, IdsTable};
use crate::operators::{EnsembleSpec, Realizer, TridiagonalOperator};
use crate::report::{PointProcessSample, ProbeReport};
use crate::rng::DrawKey;
use crate::stats::{
    ks_exponential, log_log_fit_counts, poisson_pmf, survival_curve, total_variation,
    wilson_interval, LineFit, Z95,
};

/// Count histograms are kept for `0..HIST_CAP`; larger counts are clamped.
pub const HIST_CAP: usize = 64;
const JOINT_CAP: usize = 16;

/// Tag mixed into the master seed for auxiliary IDS tables.
pub const IDS_TAG: u64 = 0x1D5;

/// Which operator a draw index produces.
#[derive(Debug, Clone, Copy)]
pub struct DrawSource<'a> {
    pub spec: &'a EnsembleSpec,
    pub size: usize,
    pub seed: u64,
    /// Map the diagonal through the spectral family at this energy.
    pub family_energy: Option<f64>,
}

impl DrawSource<'_> {
    pub fn realize<'r>(&self, r: &'r mut Realizer, index: u64) -> Result<&'r TridiagonalOperator> {
        let key = DrawKey::new(self.seed, index);
        match self.family_energy {
            None => Ok(r.realize(self.spec, self.size, key)),
            Some(e) => r.realize_family(self.spec, self.size, key, e),
        }
    }
}

/// Counts in half-open windows `(a, b]` for every draw, fed to `absorb`.
pub fn scan_windows<A, F, M>(
    exec: &Executor,
    samples: u64,
    source: DrawSource<'_>,
    windows: &[(f64, f64)],
    absorb: F,
    mut merge: M,
) -> Result<A>
where
    A: Send + Default,
    F: Fn(&mut A, u64, &[usize]) + Sync,
    M: FnMut(&mut A, A),
{
    for &(a, b) in windows {
        if a > b {
            return Err(Error::InvertedWindow { lower: a, upper: b });
        }
    }
    source.spec.validate()?;
    let shifts: Vec<f64> = windows
        .iter()
        .flat_map(|&(a, b)| [a.next_up(), b.next_up()])
        .collect();
    let parts = exec.map_chunks(samples, DEFAULT_CHUNK, |range| -> Result<A> {
        let mut r = Realizer::new();
        let mut acc = A::default();
        let mut raw = vec![0usize; shifts.len()];
        let mut counts = vec![0usize; windows.len()];
        for i in range {
            let h = source.realize(&mut r, i)?;
            sturm_counts(h, &shifts, &mut raw);
            for (k, c) in counts.iter_mut().enumerate() {
                *c = raw[2 * k + 1] - raw[2 * k];
            }
            absorb(&mut acc, i, &counts);
        }
        Ok(acc)
    });
    let mut total = A::default();
    for p in parts {
        merge(&mut total, p?);
    }
    Ok(total)
}

/// Per-window occupation statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowTally {
    pub draws: u64,
    /// Draws with at least one eigenvalue in the window.
    pub occupied: Vec<u64>,
    /// Draws with at least two.
    pub multiple: Vec<u64>,
    /// `Σ max(count − 1, 0)`.
    pub excess: Vec<u64>,
    pub excess_sq: Vec<u64>,
    pub hist: Vec<Vec<u64>>,
}

impl WindowTally {
    fn ensure(&mut self, n: usize) {
        if self.occupied.len() < n {
            self.occupied.resize(n, 0);
            self.multiple.resize(n, 0);
            self.excess.resize(n, 0);
            self.excess_sq.resize(n, 0);
            self.hist.resize(n, vec![0; HIST_CAP]);
        }
    }

    pub fn absorb(&mut self, counts: &[usize]) {
        self.ensure(counts.len());
        self.draws += 1;
        for (k, &c) in counts.iter().enumerate() {
            let c = c as u64;
            self.occupied[k] += u64::from(c >= 1);
            self.multiple[k] += u64::from(c >= 2);
            let ex = c.saturating_sub(1);
            self.excess[k] += ex;
            self.excess_sq[k] += ex * ex;
            self.hist[k][(c as usize).min(HIST_CAP - 1)] += 1;
        }
    }

    pub fn merge(&mut self, o: WindowTally) {
        self.ensure(o.occupied.len());
        self.draws += o.draws;
        for k in 0..o.occupied.len() {
            self.occupied[k] += o.occupied[k];
            self.multiple[k] += o.multiple[k];
            self.excess[k] += o.excess[k];
            self.excess_sq[k] += o.excess_sq[k];
            for (a, b) in self.hist[k].iter_mut().zip(&o.hist[k]) {
                *a += b;
            }
        }
    }

    /// Mean of `max(count − 1, 0)` with a normal 95% interval.
    pub fn excess_mean(&self, k: usize) -> (f64, (f64, f64)) {
        let n = self.draws as f64;
        let m = self.excess[k] as f64 / n;
        let var = if self.draws > 1 {
            ((self.excess_sq[k] as f64 - n * m * m) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let h = Z95 * (var / n).sqrt();
        (m, ((m - h).max(0.0), m + h))
    }

    /// Mean count with a normal 95% interval.
    pub fn mean_count(&self, k: usize) -> (f64, (f64, f64)) {
        let n = self.draws as f64;
        let (mut s, mut q) = (0.0, 0.0);
        for (c, &h) in self.hist[k].iter().enumerate() {
            s += (c as f64) * h as f64;
            q += (c * c) as f64 * h as f64;
        }
        let m = s / n;
        let var = if self.draws > 1 {
            ((q - n * m * m) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let h = Z95 * (var / n).sqrt();
        (m, (m - h, m + h))
    }
}

pub fn tally_windows(
    exec: &Executor,
    samples: u64,
    source: DrawSource<'_>,
    windows: &[(f64, f64)],
) -> Result<WindowTally> {
    let mut t = scan_windows(
        exec,
        samples,
        source,
        windows,
        |acc: &mut WindowTally, _, c| acc.absorb(c),
        |a, b| a.merge(b),
    )?;
    t.ensure(windows.len());
    Ok(t)
}

fn slope_estimate(report: &mut ProbeReport, label: &str, fit: Option<LineFit>) {
    match fit {
        Some(f) => {
            let h = Z95 * f.slope_stderr;
            report.estimate(label, Some(f.slope), Some((f.slope - h, f.slope + h)));
            report.estimate(&format!("{label}_points"), Some(f.points as f64), None);
        }
        None => {
            report.estimate(label, None, None);
            report.estimate(&format!("{label}_points"), Some(0.0), None);
        }
    }
}

fn require_samples(samples: u64, min: u64) -> Result<()> {
    if samples < min {
        return Err(Error::InvalidParameter(format!(
            "probe needs at least {min} samples, got {samples}"
        )));
    }
    Ok(())
}

/// Shared parameters of the Wegner and Minami probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowProbe {
    pub spec: EnsembleSpec,
    pub energy: f64,
    /// Half-widths `ε` of the windows `[E − ε, E + ε]`.
    pub widths: Vec<f64>,
    pub size: usize,
    pub samples: u64,
    pub seed: u64,
}

impl WindowProbe {
    fn windows(&self) -> Result<Vec<(f64, f64)>> {
        if self.widths.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter(
                "window widths must be non-negative".into(),
            ));
        }
        Ok(self
            .widths
            .iter()
            .map(|w| (self.energy - w, self.energy + w))
            .collect())
    }

    fn tally(&self, exec: &Executor) -> Result<WindowTally> {
        let source = DrawSource {
            spec: &self.spec,
            size: self.size,
            seed: self.seed,
            family_energy: None,
        };
        tally_windows(exec, self.samples, source, &self.windows()?)
    }

    fn report(&self, name: &str) -> ProbeReport {
        let mut r = ProbeReport::new(name, self.seed);
        r.param("spec", &self.spec)
            .param("energy", self.energy)
            .param("widths", &self.widths)
            .param("size", self.size);
        r.samples = self.samples;
        r
    }
}

/// Largest occupation probability included in the Wegner slope fit.
pub const WEGNER_FIT_MAX: f64 = 0.1;

/// `P[tr 1_J(H) ≥ 1]` for `J = [E − ε, E + ε]` and its log-log slope in `ε`.
pub fn wegner_probe(p: &WindowProbe, exec: &Executor) -> Result<ProbeReport> {
    let start = Instant::now();
    require_samples(p.samples, 1000)?;
    let t = p.tally(exec)?;
    let mut r = p.report("wegner");
    let mut pts = Vec::new();
    let mut fit_x = Vec::new();
    let mut fit_k = Vec::new();
    let mut constant = 0.0f64;
    for (i, &eps) in p.widths.iter().enumerate() {
        let k = t.occupied[i];
        let phat = k as f64 / t.draws as f64;
        r.estimate(
            &format!("p[{i}]"),
            Some(phat),
            Some(wilson_interval(k, t.draws, Z95)),
        );
        pts.push([eps, phat]);
        if eps > 0.0 {
            constant = constant.max(phat / (eps * p.size as f64));
        }
        if phat <= WEGNER_FIT_MAX {
            fit_x.push(eps);
            fit_k.push(k);
        }
    }
    slope_estimate(&mut r, "slope", log_log_fit_counts(&fit_x, &fit_k, t.draws));
    r.estimate("constant", Some(constant), None);
    r.curve("occupation", "eps", "p_hat", pts);
    r.runtime_s = start.elapsed().as_secs_f64();
    Ok(r)
}

/// `Σ_{k≥2} P[count ≥ k] = E[max(count − 1, 0)]` and its slope in `ε`.
pub fn minami_probe(p: &WindowProbe, exec: &Executor) -> Result<ProbeReport> {
    let start = Instant::now();
    require_samples(p.samples, 1000)?;
    let t = p.tally(exec)?;
    let mut r = p.report("minami");
    let mut pts = Vec::new();
    for (i, &eps) in p.widths.iter().enumerate() {
        let (m, ci) = t.excess_mean(i);
        r.estimate(&format!("m[{i}]"), Some(m), Some(ci));
        r.estimate(&format!("events[{i}]"), Some(t.excess[i] as f64), None);
        pts.push([eps, m]);
    }
    slope_estimate(
        &mut r,
        "slope",
        log_log_fit_counts(&p.widths, &t.excess, t.draws),
    );
    r.curve("excess", "eps", "m_hat", pts);
    r.runtime_s = start.elapsed().as_secs_f64();
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoxMode {
    /// Both windows on the same box.
    #[default]
    Shared,
    /// Each window on its own box; the boxes read disjoint `ω`.
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationProbe {
    pub spec: EnsembleSpec,
    pub energy: f64,
    pub energy2: f64,
    /// `L`; windows have half-width `1/L`.
    pub size: usize,
    /// Box size `l`.
    pub box_size: usize,
    pub samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub mode: BoxMode,
}

#[derive(Debug, Default)]
struct JointTally {
    draws: u64,
    first: u64,
    second: u64,
    both: u64,
}

/// Occupation of `[E ± 1/L]` and `[E′ ± 1/L]` on boxes of size `l`, and the
/// independence ratio `p_joint / (p_E p_E′)`.
pub fn decorrelation_probe(p: &DecorrelationProbe, exec: &Executor) -> Result<ProbeReport> {
    let start = Instant::now();
    let half = 1.0 / p.size as f64;
    let w1 = (p.energy - half, p.energy + half);
    let w2 = (p.energy2 - half, p.energy2 + half);
    if w1.0 < w2.1 && w2.0 < w1.1 {
        return Err(Error::Overlap(format!(
            "windows around {} and {} overlap at half-width {half}",
            p.energy, p.energy2
        )));
    }
    if p.box_size == 0 || p.box_size > p.size {
        return Err(Error::InvalidParameter("box size must lie in 1..=L".into()));
    }
    let absorb = |acc: &mut JointTally, a: bool, b: bool| {
        acc.draws += 1;
        acc.first += u64::from(a);
        acc.second += u64::from(b);
        acc.both += u64::from(a && b);
    };
    let merge = |a: &mut JointTally, b: JointTally| {
        a.draws += b.draws;
        a.first += b.first;
        a.second += b.second;
        a.both += b.both;
    };
    let t = match p.mode {
        BoxMode::Shared => {
            let source = DrawSource {
                spec: &p.spec,
                size: p.box_size,
                seed: p.seed,
                family_energy: None,
            };
            scan_windows(
                exec,
                p.samples,
                source,
                &[w1, w2],
                |acc, _, c| absorb(acc, c[0] > 0, c[1] > 0),
                merge,
            )?
        }
        BoxMode::Disjoint => {
            let gap = p.spec.iad_distance();
            let total = 2 * p.box_size + gap;
            p.spec.validate()?;
            let shifts = [
                w1.0.next_up(),
                w1.1.next_up(),
                w2.0.next_up(),
                w2.1.next_up(),
            ];
            let parts = exec.map_chunks(p.samples, DEFAULT_CHUNK, |range| -> Result<JointTally> {
                let mut r = Realizer::new();
                let mut acc = JointTally::default();
                let mut c1 = [0usize; 4];
                let mut c2 = [0usize; 4];
                for i in range {
                    let h = r.realize(&p.spec, total, DrawKey::new(p.seed, i));
                    let left = h.restrict(0..p.box_size)?;
                    let right = h.restrict(p.box_size + gap..total)?;
                    sturm_counts(&left, &shifts, &mut c1);
                    sturm_counts(&right, &shifts, &mut c2);
                    absorb(&mut acc, c1[1] > c1[0], c2[3] > c2[2]);
                }
                Ok(acc)
            });
            let mut t = JointTally::default();
            for part in parts {
                merge(&mut t, part?);
            }
            t
        }
    };
    let n = t.draws as f64;
    let (pa, pb, pj) = (t.first as f64 / n, t.second as f64 / n, t.both as f64 / n);
    let mut r = ProbeReport::new("decorrelation", p.seed);
    r.param("spec", &p.spec)
        .param("energy", p.energy)
        .param("energy2", p.energy2)
        .param("size", p.size)
        .param("box_size", p.box_size)
        .param("mode", p.mode);
    r.samples = p.samples;
    r.estimate(
        "p_first",
        Some(pa),
        Some(wilson_interval(t.first, t.draws, Z95)),
    );
    r.estimate(
        "p_second",
        Some(pb),
        Some(wilson_interval(t.second, t.draws, Z95)),
    );
    r.estimate(
        "p_joint",
        Some(pj),
        Some(wilson_interval(t.both, t.draws, Z95)),
    );
    let ratio = (pa > 0.0 && pb > 0.0).then(|| pj / (pa * pb));
    // delta method on ln R for multinomial cell frequencies
    let se = (pj > 0.0 && pa > 0.0 && pb > 0.0).then(|| {
        let v = 1.0 / pj - 1.0 / pa - 1.0 / pb + 2.0 * pj / (pa * pb) - 1.0;
        (v.max(0.0) / n).sqrt()
    });
    let ci = match (ratio, se) {
        (Some(x), Some(s)) if x > 0.0 => Some((x * (-Z95 * s).exp(), x * (Z95 * s).exp())),
        _ => None,
    };
    r.estimate("ratio", ratio, ci);
    r.estimate("log_ratio_se", se, None);
    r.estimate(
        "log_ratio_z",
        match (ratio, se) {
            (Some(x), Some(s)) if x > 0.0 && s > 0.0 => Some(x.ln() / s),
            _ => None,
        },
        None,
    );
    let l = p.box_size as f64;
    r.estimate("joint_scaled", Some(pj * p.size as f64 / (l * l)), None);
    r.estimate("joint_minus_first", Some(pj - pa), None);
    r.runtime_s = start.elapsed().as_secs_f64();
    Ok(r)
}

/// How auxiliary IDS tables are estimated around a reference energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdsSettings {
    pub samples: u64,
    pub points: usize,
    /// The grid spans `E₀ ± half_width`.
    pub half_width: f64,
}

impl Default for IdsSettings {
    fn default() -> Self {
        Self {
            samples: 4000,
            points: 81,
            half_width: 0.05,
        }
    }
}

/// IDS table around `[lo, hi]` from a seed derived from `seed`.
pub fn local_ids(
    spec: &EnsembleSpec,
    size: usize,
    lo: f64,
    hi: f64,
    settings: &IdsSettings,
    seed: u64,
    exec: &Executor,
) -> Result<IdsTable> {
    let grid = linear_grid(
        lo - settings.half_width,
        hi + settings.half_width,
        settings.points,
    );
    estimate_ids(
        spec,
        size,
        settings.samples,
        &grid,
        DrawKey::derive_seed(seed, IDS_TAG),
        exec,
    )
}

/// Energy thresholds of the unfolded interval `[s, t]` at `E₀`.
fn unfolded_window(ids: &IdsTable, e0: f64, size: usize, s: f64, t: f64) -> Result<(f64, f64)> {
    let n0 = ids.value(e0)?;
    let l = size as f64;
    let lo = ids
        .inverse(n0 + s / l)
        .map_err(|_| window_error(e0, s, t, ids))?;
    let hi = ids
        .inverse(n0 + t / l)
        .map_err(|_| window_error(e0, s, t, ids))?;
    Ok((lo, hi))
}

fn window_error(e0: f64, s: f64, t: f64, ids: &IdsTable) -> Error {
    let (lo, hi) = ids.range();
    Error::Precondition(format!(
        "unfolded window [{s}, {t}] at {e0} leaves the estimated IDS range [{lo}, {hi}]"
    ))
}

fn check_slope(ids: &IdsTable, e0: f64) -> Result<f64> {
    let (lo, hi) = ids.range();
    let s = ids.slope(
        e0,
        0.25 * (hi - lo).min(2.0 * (e0 - lo)).min(2.0 * (hi - e0)),
    )?;
    if !(s > 0.0) {
        return Err(Error::Precondition(format!(
            "IDS slope at {e0} is not positive ({s})"
        )));
    }
    Ok(s)
}

fn check_disjoint(intervals: &[(f64, f64)]) -> Result<()> {
    for (i, a) in intervals.iter().enumerate() {
        if a.0 > a.1 {
            return Err(Error::InvertedWindow {
                lower: a.0,
                upper: a.1,
            });
        }
        for b in &intervals[i + 1..] {
            if a.0 < b.1 && b.0 < a.1 {
                return Err(Error::Overlap(format!("intervals {a:?} and {b:?} overlap")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStatisticsProbe {
    pub spec: EnsembleSpec,
    pub energy: f64,
    pub size: usize,
    /// Disjoint intervals in unfolded units.
    pub intervals: Vec<(f64, f64)>,
    pub samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub ids: IdsSettings,
    /// Draws whose unfolded points are returned as samples.
    #[serde(default)]
    pub point_draws: u64,
}

#[derive(Debug, Default)]
struct CountMoments {
    draws: u64,
    hist: Vec<Vec<u64>>,
    joint: Vec<u64>,
    sum: Vec<u64>,
    sum_sq: Vec<u64>,
    cross: u64,
}

impl CountMoments {
    fn absorb(&mut self, c: &[usize]) {
        let n = c.len();
        if self.hist.len() < n {
            self.hist.resize(n, vec![0; HIST_CAP]);
            self.sum.resize(n, 0);
            self.sum_sq.resize(n, 0);
        }
        if self.joint.is_empty() {
            self.joint = vec![0; JOINT_CAP * JOINT_CAP];
        }
        self.draws += 1;
        for (k, &x) in c.iter().enumerate() {
            self.hist[k][x.min(HIST_CAP - 1)] += 1;
            self.sum[k] += x as u64;
            self.sum_sq[k] += (x * x) as u64;
        }
        if n >= 2 {
            self.joint[c[0].min(JOINT_CAP - 1) * JOINT_CAP + c[1].min(JOINT_CAP - 1)] += 1;
            self.cross += (c[0] * c[1]) as u64;
        }
    }

    fn merge(&mut self, o: CountMoments) {
        if o.draws == 0 {
            return;
        }
        if self.draws == 0 {
            *self = o;
            return;
        }
        self.draws += o.draws;
        for k in 0..self.hist.len() {
            for (a, b) in self.hist[k].iter_mut().zip(&o.hist[k]) {
                *a += b;
            }
            self.sum[k] += o.sum[k];
            self.sum_sq[k] += o.sum_sq[k];
        }
        for (a, b) in self.joint.iter_mut().zip(&o.joint) {
            *a += b;
        }
        self.cross += o.cross;
    }

    fn correlation(&self) -> Option<f64> {
        if self.sum.len() < 2 {
            return None;
        }
        let n = self.draws as f64;
        let m0 = self.sum[0] as f64 / n;
        let m1 = self.sum[1] as f64 / n;
        let v0 = self.sum_sq[0] as f64 / n - m0 * m0;
        let v1 = self.sum_sq[1] as f64 / n - m1 * m1;
        let c = self.cross as f64 / n - m0 * m1;
        (v0 > 0.0 && v1 > 0.0).then(|| c / (v0 * v1).sqrt())
    }

    /// TV between the joint histogram of the first two windows and a product pmf.
    fn joint_tv(&self, mean0: f64, mean1: f64) -> f64 {
        let n = self.draws as f64;
        let mut acc = 0.0;
        let mut covered = 0.0;
        for i in 0..JOINT_CAP {
            for j in 0..JOINT_CAP {
                let q = poisson_pmf(i, mean0) * poisson_pmf(j, mean1);
                covered += q;
                acc += (self.joint[i * JOINT_CAP + j] as f64 / n - q).abs();
            }
        }
        0.5 * (acc + (1.0 - covered).max(0.0))
    }
}

fn scan_counts(
    exec: &Executor,
    samples: u64,
    source: DrawSource<'_>,
    windows: &[(f64, f64)],
) -> Result<CountMoments> {
    scan_windows(
        exec,
        samples,
        source,
        windows,
        |acc: &mut CountMoments, _, c| acc.absorb(c),
        |a, b| a.merge(b),
    )
}

/// Counts of unfolded eigenvalues in disjoint intervals against Poisson laws
/// with means `|I_i|`.
pub fn level_statistics_probe(
    p: &LevelStatisticsProbe,
    exec: &Executor,
) -> Result<(ProbeReport, Vec<PointProcessSample>)> {
    let start = Instant::now();
    check_disjoint(&p.intervals)?;
    if p.intervals.is_empty() {
        return Err(Error::InvalidParameter(
            "level statistics need at least one interval".into(),
        ));
    }
    let ids = local_ids(&p.spec, p.size, p.energy, p.energy, &p.ids, p.seed, exec)?;
    let slope = check_slope(&ids, p.energy)?;
    let windows = p
        .intervals
        .iter()
        .map(|&(s, t)| unfolded_window(&ids, p.energy, p.size, s, t))
        .collect::<Result<Vec<_>>>()?;
    let source = DrawSource {
        spec: &p.spec,
        size: p.size,
        seed: p.seed,
        family_energy: None,
    };
    let m = scan_counts(exec, p.samples, source, &windows)?;
    let mut r = ProbeReport::new("level-statistics", p.seed);
    r.param("spec", &p.spec)
        .param("energy", p.energy)
        .param("size", p.size)
        .param("intervals", &p.intervals)
        .param("ids", p.ids);
    r.samples = p.samples;
    r.estimate("ids_slope", Some(slope), None);
    let mut worst = 0.0f64;
    for (k, &(s, t)) in p.intervals.iter().enumerate() {
        let len = t - s;
        let tv = total_variation(&m.hist[k], |j| poisson_pmf(j, len));
        worst = worst.max(tv);
        r.estimate(&format!("tv[{k}]"), Some(tv), None);
        let mean = m.sum[k] as f64 / m.draws as f64;
        let var = (m.sum_sq[k] as f64 / m.draws as f64 - mean * mean).max(0.0);
        let h = Z95 * (var / m.draws as f64).sqrt();
        r.estimate(
            &format!("mean[{k}]"),
            Some(mean),
            Some((mean - h, mean + h)),
        );
        r.estimate(
            &format!("mean_rel_err[{k}]"),
            (len > 0.0).then(|| (mean - len).abs() / len),
            None,
        );
        let pmf: Vec<[f64; 2]> = m.hist[k]
            .iter()
            .enumerate()
            .take_while(|(j, _)| *j < 12)
            .map(|(j, c)| [j as f64, *c as f64 / m.draws as f64])
            .collect();
        r.curve(&format!("pmf{k}"), "k", "p_hat", pmf);
    }
    r.estimate("tv_max", Some(worst), None);
    if p.intervals.len() >= 2 {
        let corr = m.correlation();
        let se = 1.0 / (m.draws as f64).sqrt();
        r.estimate(
            "correlation",
            corr,
            corr.map(|c| (c - Z95 * se, c + Z95 * se)),
        );
        r.estimate("correlation_z", corr.map(|c| c / se), None);
        let (a, b) = (
            p.intervals[0].1 - p.intervals[0].0,
            p.intervals[1].1 - p.intervals[1].0,
        );
        r.estimate("joint_tv", Some(m.joint_tv(a, b)), None);
    }
    let samples = point_samples(p, &ids, exec)?;
    r.runtime_s = start.elapsed().as_secs_f64();
    Ok((r, samples))
}

fn point_samples(
    p: &LevelStatisticsProbe,
    ids: &IdsTable,
    exec: &Executor,
) -> Result<Vec<PointProcessSample>> {
    if p.point_draws == 0 {
        return Ok(Vec::new());
    }
    let lo_x = p
        .intervals
        .iter()
        .map(|i| i.0)
        .fold(f64::INFINITY, f64::min);
    let hi_x = p
        .intervals
        .iter()
        .map(|i| i.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = unfolded_window(ids, p.energy, p.size, lo_x, hi_x)?;
    let source = DrawSource {
        spec: &p.spec,
        size: p.size,
        seed: p.seed,
        family_energy: None,
    };
    let parts = exec.map_chunks(
        p.point_draws.min(p.samples),
        DEFAULT_CHUNK,
        |range| -> Result<Vec<PointProcessSample>> {
            let mut r = Realizer::new();
            let mut out = Vec::new();
            for i in range {
                let h = source.realize(&mut r, i)?;
                let eigs = eigenvalues_in(h, lo, hi, 1e-13)?;
                let mut points = unfold(&eigs, ids, p.energy, p.size)?;
                points.retain(|x| (lo_x..=hi_x).contains(x));
                out.push(PointProcessSample {
                    draw_id: i,
                    reference_energy: p.energy,
                    points,
                });
            }
            Ok(out)
        },
    );
    let mut all = Vec::new();
    for part in parts {
        all.extend(part?);
    }
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointProbe {
    pub spec: EnsembleSpec,
    pub energy: f64,
    pub energy2: f64,
    pub size: usize,
    /// Unfolded interval at `energy`; `None` tests the second marginal only.
    pub upper: Option<(f64, f64)>,
    /// Unfolded interval at `energy2`.
    pub lower: (f64, f64),
    pub samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub ids: IdsSettings,
}

/// Joint law of the counts in `U₊` at `E₀` and `U₋` at `E₀′` against a
/// product of Poisson laws.
pub fn joint_independence_probe(p: &JointProbe, exec: &Executor) -> Result<ProbeReport> {
    let start = Instant::now();
    if p.energy == p.energy2 {
        return Err(Error::InvalidParameter(
            "joint probe needs two distinct energies".into(),
        ));
    }
    let (lo, hi) = (p.energy.min(p.energy2), p.energy.max(p.energy2));
    let ids = local_ids(&p.spec, p.size, lo, hi, &p.ids, p.seed, exec)?;
    let slope2 = check_slope(&ids, p.energy2)?;
    let mut windows = Vec::new();
    let mut lengths = Vec::new();
    let mut r = ProbeReport::new("joint-independence", p.seed);
    if let Some((s, t)) = p.upper {
        r.estimate("ids_slope", Some(check_slope(&ids, p.energy)?), None);
        windows.push(unfolded_window(&ids, p.energy, p.size, s, t)?);
        lengths.push(t - s);
    }
    r.estimate("ids_slope2", Some(slope2), None);
    windows.push(unfolded_window(
        &ids, p.energy2, p.size, p.lower.0, p.lower.1,
    )?);
    lengths.push(p.lower.1 - p.lower.0);
    check_disjoint(&windows)?;
    let source = DrawSource {
        spec: &p.spec,
        size: p.size,
        seed: p.seed,
        family_energy: None,
    };
    let m = scan_counts(exec, p.samples, source, &windows)?;
    r.param("spec", &p.spec)
        .param("energy", p.energy)
        .param("energy2", p.energy2)
        .param("size", p.size)
        .param("upper", p.upper)
        .param("lower", p.lower)
        .param("ids", p.ids);
    r.samples = p.samples;
    for (k, len) in lengths.iter().enumerate() {
        r.estimate(
            &format!("marginal_tv[{k}]"),
            Some(total_variation(&m.hist[k], |j| poisson_pmf(j, *len))),
            None,
        );
    }
    if lengths.len() == 2 {
        r.estimate("joint_tv", Some(m.joint_tv(lengths[0], lengths[1])), None);
        r.estimate("correlation", m.correlation(), None);
    } else {
        r.estimate("joint_tv", None, None);
    }
    r.runtime_s = start.elapsed().as_secs_f64();
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingProbe {
    pub spec: EnsembleSpec,
    pub energy: f64,
    /// `I_Λ = [E₀ − half_width, E₀ + half_width]`.
    pub half_width: f64,
    pub size: usize,
    pub samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub ids: IdsSettings,
}

/// Pooled unfolded spacings `δN_j = L (N(E_{j+1}) − N(E_j))` against `e^{−x}`.
pub fn spacing_probe(p: &SpacingProbe, exec: &Executor) -> Result<ProbeReport> {
    let start = Instant::now();
    let (a, b) = (p.energy - p.half_width, p.energy + p.half_width);
    if !(p.half_width >= 0.0) {
        return Err(Error::InvalidParameter(
            "spacing window half-width must be non-negative".into(),
        ));
    }
    let ids = local_ids(&p.spec, p.size, a, b, &p.ids, p.seed, exec)?;
    let source = DrawSource {
        spec: &p.spec,
        size: p.size,
        seed: p.seed,
        family_energy: None,
    };
    let parts = exec.map_chunks(p.samples, 16, |range| -> Result<(Vec<f64>, u64)> {
        let mut r = Realizer::new();
        let mut out = Vec::new();
        let mut eigs_seen = 0;
        for i in range {
            let h = source.realize(&mut r, i)?;
            let eigs = eigenvalues_in(h, a, b, 1e-13)?;
            eigs_seen += eigs.len() as u64;
            let xi = unfold(&eigs, &ids, p.energy, p.size)?;
            out.extend(xi.windows(2).map(|w| w[1] - w[0]));
        }
        Ok((out, eigs_seen))
    });
    let mut spacings = Vec::new();
    let mut eigs_seen = 0;
    for part in parts {
        let (s, e) = part?;
        spacings.extend(s);
        eigs_seen += e;
    }
    let mut r = ProbeReport::new("spacing", p.seed);
    r.param("spec", &p.spec)
        .param("energy", p.energy)
        .param("half_width", p.half_width)
        .param("size", p.size)
        .param("ids", p.ids);
    r.samples = p.samples;
    r.estimate(
        "eigenvalues_per_draw",
        Some(eigs_seen as f64 / p.samples.max(1) as f64),
        None,
    );
    r.estimate("spacings", Some(spacings.len() as f64), None);
    if spacings.is_empty() {
        r.estimate("ks", None, None);
        r.estimate("mean_spacing", None, None);
    } else {
        let n = spacings.len() as f64;
        let mean = spacings.iter().sum::<f64>() / n;
        let var = spacings.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let h = Z95 * (var / n).sqrt();
        r.estimate("ks", ks_exponential(&spacings), None);
        r.estimate("mean_spacing", Some(mean), Some((mean - h, mean + h)));
        let grid: Vec<f64> = (0..=60).map(|i| i as f64 * 0.1).collect();
        let surv = survival_curve(&spacings, &grid);
        r.curve(
            "survival",
            "x",
            "dls",
            grid.iter().zip(&surv).map(|(x, y)| [*x, *y]).collect(),
        );
    }
    r.runtime_s = start.elapsed().as_secs_f64();
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::CouplingLaw;

    fn anderson() -> EnsembleSpec {
        EnsembleSpec::anderson(CouplingLaw::uniform(-2.0, 2.0))
    }

    #[test]
    fn zero_width_never_occupied() {
        let p = WindowProbe {
            spec: anderson(),
            energy: 0.0,
            widths: vec![0.0, 0.1],
            size: 50,
            samples: 1000,
            seed: 1,
        };
        let r = wegner_probe(&p, &Executor::sequential()).unwrap();
        assert_eq!(r.value("p[0]"), Some(0.0));
        assert!(r.value("p[1]").unwrap() > 0.0);
        let m = minami_probe(&p, &Executor::sequential()).unwrap();
        assert_eq!(m.value("m[0]"), Some(0.0));
    }

    #[test]
    fn gap_windows_see_no_pairs() {
        // deterministic operator: eigenvalues of the free Laplacian are far apart
        let spec = EnsembleSpec::anderson(CouplingLaw::Point { value: 0.0 });
        let p = WindowProbe {
            spec,
            energy: 0.0,
            widths: vec![1e-3, 1e-2],
            size: 5,
            samples: 1000,
            seed: 1,
        };
        let m = minami_probe(&p, &Executor::sequential()).unwrap();
        assert_eq!(m.value("m[1]"), Some(0.0));
        assert_eq!(m.value("slope"), None);
    }

    #[test]
    fn report_is_worker_independent() {
        let p = WindowProbe {
            spec: anderson(),
            energy: 0.0,
            widths: crate::stats::logspace(-3.0, -1.0, 3),
            size: 40,
            samples: 3000,
            seed: 5,
        };
        let a = minami_probe(&p, &Executor::new(1).unwrap())
            .unwrap()
            .stripped();
        let b = minami_probe(&p, &Executor::new(3).unwrap())
            .unwrap()
            .stripped();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn hopping_mirror_events_coincide() {
        let p = DecorrelationProbe {
            spec: EnsembleSpec::standard_hopping(),
            energy: 1.3,
            energy2: -1.3,
            size: 200,
            box_size: 30,
            samples: 5000,
            seed: 2,
            mode: BoxMode::Shared,
        };
        let r = decorrelation_probe(&p, &Executor::sequential()).unwrap();
        assert_eq!(r.value("joint_minus_first"), Some(0.0));
        assert!(r.value("p_joint").unwrap() > 0.0);
    }

    #[test]
    fn overlapping_windows_rejected() {
        let p = DecorrelationProbe {
            spec: anderson(),
            energy: 0.5,
            energy2: 0.5 + 1e-3,
            size: 100,
            box_size: 10,
            samples: 10,
            seed: 0,
            mode: BoxMode::Shared,
        };
        assert!(matches!(
            decorrelation_probe(&p, &Executor::sequential()),
            Err(Error::Overlap(_))
        ));
    }

    #[test]
    fn disjoint_boxes_factorize() {
        let p = DecorrelationProbe {
            spec: anderson(),
            energy: 0.5,
            energy2: -0.9,
            size: 20,
            box_size: 20,
            samples: 20000,
            seed: 3,
            mode: BoxMode::Disjoint,
        };
        let r = decorrelation_probe(&p, &Executor::sequential()).unwrap();
        assert!(r.value("log_ratio_z").unwrap().abs() < 4.0, "{r:?}");
    }

    #[test]
    fn empty_interval_counts_nothing() {
        let p = LevelStatisticsProbe {
            spec: anderson(),
            energy: 0.0,
            size: 200,
            intervals: vec![(0.0, 0.0), (0.5, 1.5)],
            samples: 500,
            seed: 1,
            ids: IdsSettings {
                samples: 500,
                points: 41,
                half_width: 0.2,
            },
            point_draws: 3,
        };
        let (r, pts) = level_statistics_probe(&p, &Executor::sequential()).unwrap();
        assert_eq!(r.value("mean[0]"), Some(0.0));
        assert_eq!(r.value("tv[0]"), Some(0.0));
        assert_eq!(pts.len(), 3);
        for s in &pts {
            assert!(s.points.windows(2).all(|w| w[0] <= w[1]));
            assert!(s.points.iter().all(|x| (0.0..=1.5).contains(x)));
        }
    }

    #[test]
    fn overlapping_intervals_rejected() {
        let p = LevelStatisticsProbe {
            spec: anderson(),
            energy: 0.0,
            size: 100,
            intervals: vec![(0.0, 1.0), (0.5, 1.5)],
            samples: 10,
            seed: 1,
            ids: IdsSettings::default(),
            point_draws: 0,
        };
        assert!(matches!(
            level_statistics_probe(&p, &Executor::sequential()),
            Err(Error::Overlap(_))
        ));
    }

    #[test]
    fn single_eigenvalue_has_no_spacings() {
        let p = SpacingProbe {
            spec: anderson(),
            energy: 0.0,
            half_width: 0.0,
            size: 100,
            samples: 5,
            seed: 1,
            ids: IdsSettings {
                samples: 50,
                points: 11,
                half_width: 0.1,
            },
        };
        let r = spacing_probe(&p, &Executor::sequential()).unwrap();
        assert_eq!(r.value("spacings"), Some(0.0));
        assert!(r.has("ks") && r.value("ks").is_none());
    }

    #[test]
    fn marginal_only_joint_probe() {
        let p = JointProbe {
            spec: anderson(),
            energy: 0.3,
            energy2: -0.8,
            size: 200,
            upper: None,
            lower: (0.0, 1.0),
            samples: 500,
            seed: 4,
            ids: IdsSettings {
                samples: 500,
                points: 41,
                half_width: 0.05,
            },
        };
        let r = joint_independence_probe(&p, &Executor::sequential()).unwrap();
        assert!(r.value("joint_tv").is_none());
        assert!(r.value("marginal_tv[0]").unwrap() < 0.2);
    }
}
