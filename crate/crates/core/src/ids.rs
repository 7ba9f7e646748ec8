//! Integrated density of states, unfolding and the IDS regularity modulus.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eigensolve::sturm_counts;
use crate::error::{Error, Result};
use crate::exec::{Executor, DEFAULT_CHUNK};
use crate::operators::{EnsembleSpec, Realizer};
use crate::rng::DrawKey;

/// Anything that evaluates a non-decreasing `N(E)`.
pub trait CumulativeDensity {
    fn ids(&self, energy: f64) -> Result<f64>;
}

/// Closed-form IDS valid on `[lo, hi]`.
pub struct AnalyticIds<F> {
    pub lo: f64,
    pub hi: f64,
    pub f: F,
}

impl<F: Fn(f64) -> f64> CumulativeDensity for AnalyticIds<F> {
    fn ids(&self, energy: f64) -> Result<f64> {
        if energy < self.lo || energy > self.hi {
            return Err(Error::OutOfRange {
                energy,
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok((self.f)(energy))
    }
}

/// Where an estimated table came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsProvenance {
    pub spec: EnsembleSpec,
    pub size: usize,
    pub samples: u64,
    pub seed: u64,
}

/// Empirical IDS on an energy grid with per-point standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsTable {
    energies: Vec<f64>,
    values: Vec<f64>,
    stderr: Vec<f64>,
    provenance: Option<IdsProvenance>,
}

impl IdsTable {
    pub fn new(energies: Vec<f64>, values: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        if energies.is_empty() || energies.len() != values.len() || energies.len() != stderr.len() {
            return Err(Error::InvalidParameter(
                "IDS table needs equally long, non-empty columns".into(),
            ));
        }
        if energies.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "IDS grid must be strictly increasing".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "IDS values must be non-decreasing".into(),
            ));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(
                "IDS values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            energies,
            values,
            stderr,
            provenance: None,
        })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stderr(&self) -> &[f64] {
        &self.stderr
    }

    pub fn provenance(&self) -> Option<&IdsProvenance> {
        self.provenance.as_ref()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.energies[0], *self.energies.last().unwrap())
    }

    fn out_of_range(&self, energy: f64) -> Error {
        let (lo, hi) = self.range();
        Error::OutOfRange { energy, lo, hi }
    }

    /// Piecewise-linear interpolation; errors outside the grid.
    pub fn value(&self, energy: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(energy >= lo && energy <= hi) {
            return Err(self.out_of_range(energy));
        }
        let i = self.energies.partition_point(|e| *e <= energy);
        if i == self.energies.len() {
            return Ok(*self.values.last().unwrap());
        }
        let (e0, e1) = (self.energies[i - 1], self.energies[i]);
        let (n0, n1) = (self.values[i - 1], self.values[i]);
        Ok(n0 + (n1 - n0) * (energy - e0) / (e1 - e0))
    }

    /// Smallest energy with interpolated `N(E) = target`.
    pub fn inverse(&self, target: f64) -> Result<f64> {
        let i = self.values.partition_point(|v| *v < target);
        if i == self.values.len() || (i == 0 && self.values[0] != target) {
            return Err(Error::InvalidParameter(format!(
                "IDS level {target} not reached on the grid [{}, {}]",
                self.values[0],
                self.values.last().unwrap()
            )));
        }
        if i == 0 {
            return Ok(self.energies[0]);
        }
        let (e0, e1) = (self.energies[i - 1], self.energies[i]);
        let (n0, n1) = (self.values[i - 1], self.values[i]);
        Ok(e0 + (e1 - e0) * (target - n0) / (n1 - n0))
    }

    /// Secant slope `(N(E + h) − N(E − h)) / 2h`, the empirical density of states.
    pub fn slope(&self, energy: f64, half_width: f64) -> Result<f64> {
        Ok(
            (self.value(energy + half_width)? - self.value(energy - half_width)?)
                / (2.0 * half_width),
        )
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["energy", "ids", "stderr"])?;
        for ((e, n), s) in self.energies.iter().zip(&self.values).zip(&self.stderr) {
            w.write_record([fmt17(*e), fmt17(*n), fmt17(*s)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let (mut e, mut n, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "IDS CSV row {}: bad column {}",
                            line + 2,
                            i + 1
                        ))
                    })
            };
            e.push(field(0)?);
            n.push(field(1)?);
            s.push(field(2)?);
        }
        Self::new(e, n, s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

impl CumulativeDensity for IdsTable {
    fn ids(&self, energy: f64) -> Result<f64> {
        self.value(energy)
    }
}

/// Format with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `count` evenly spaced energies from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// `N̂(E)` as the draw average of `#{eigenvalues < E} / L`.
pub fn estimate_ids(
    spec: &EnsembleSpec,
    size: usize,
    samples: u64,
    grid: &[f64],
    seed: u64,
    exec: &Executor,
) -> Result<IdsTable> {
    spec.validate()?;
    if size == 0 || samples == 0 || grid.is_empty() {
        return Err(Error::InvalidParameter(
            "IDS estimation needs L >= 1, samples >= 1 and a grid".into(),
        ));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "IDS grid must be strictly increasing".into(),
        ));
    }
    let g = grid.len();
    let parts = exec.map_chunks(samples, DEFAULT_CHUNK, |draws| {
        let mut r = Realizer::new();
        let mut counts = vec![0usize; g];
        let mut sum = vec![0u64; g];
        let mut sum_sq = vec![0u64; g];
        for i in draws {
            let h = r.realize(spec, size, DrawKey::new(seed, i));
            sturm_counts(h, grid, &mut counts);
            for k in 0..g {
                sum[k] += counts[k] as u64;
                sum_sq[k] += (counts[k] * counts[k]) as u64;
            }
        }
        (sum, sum_sq)
    });
    let mut sum = vec![0u64; g];
    let mut sum_sq = vec![0u64; g];
    for (s, q) in parts {
        for k in 0..g {
            sum[k] += s[k];
            sum_sq[k] += q[k];
        }
    }
    let n = samples as f64;
    let l = size as f64;
    let values: Vec<f64> = sum.iter().map(|s| *s as f64 / n / l).collect();
    let stderr = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| {
            if samples < 2 {
                return 0.0;
            }
            let mean = *s as f64 / n;
            let var = ((*q as f64 - n * mean * mean) / (n - 1.0)).max(0.0);
            (var / n).sqrt() / l
        })
        .collect();
    let mut table = IdsTable::new(grid.to_vec(), values, stderr)?;
    table.provenance = Some(IdsProvenance {
        spec: spec.clone(),
        size,
        samples,
        seed,
    });
    Ok(table)
}

/// `ξ_j = L · (N(E_j) − N(E₀))`.
pub fn unfold<N: CumulativeDensity + ?Sized>(
    eigs: &[f64],
    ids: &N,
    e0: f64,
    size: usize,
) -> Result<Vec<f64>> {
    let n0 = ids.ids(e0)?;
    let l = size as f64;
    eigs.iter().map(|e| Ok(l * (ids.ids(*e)? - n0))).collect()
}

/// `sup` of `N` increments over windows of width `e^{-l^η}` on the grid.
pub fn holder_modulus(ids: &IdsTable, l: f64, eta: f64) -> Result<f64> {
    let width = (-l.powf(eta)).exp();
    let spacing = ids
        .energies
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    if spacing > width {
        return Err(Error::GridTooCoarse {
            spacing,
            required: width,
        });
    }
    let (lo, hi) = ids.range();
    let mut best = 0.0f64;
    for (e, n) in ids.energies.iter().zip(&ids.values) {
        if e + width <= hi {
            best = best.max(ids.value(e + width)? - n);
        }
        if e - width >= lo {
            best = best.max(n - ids.value(e - width)?);
        }
    }
    Ok(best)
}
