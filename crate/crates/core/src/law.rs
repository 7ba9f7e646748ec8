//! Single-site coupling laws.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution of one random coupling constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CouplingLaw {
    Uniform {
        lo: f64,
        hi: f64,
    },
    PiecewiseLinear(PiecewiseLinearDensity),
    /// Point mass; deterministic draws for tests and free reference cases.
    Point {
        value: f64,
    },
}

impl CouplingLaw {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        CouplingLaw::Uniform { lo, hi }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CouplingLaw::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "uniform law bounds must be finite, got [{lo}, {hi}]"
                    )));
                }
                if lo >= hi {
                    return Err(Error::InvalidParameter(format!(
                        "uniform law needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
                Ok(())
            }
            CouplingLaw::PiecewiseLinear(d) => d.validate(),
            CouplingLaw::Point { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "point law needs a finite value, got {value}"
                    )))
                }
            }
        }
    }

    /// Closed support interval.
    pub fn support(&self) -> (f64, f64) {
        match self {
            CouplingLaw::Uniform { lo, hi } => (*lo, *hi),
            CouplingLaw::PiecewiseLinear(d) => (d.knots[0], *d.knots.last().unwrap()),
            CouplingLaw::Point { value } => (*value, *value),
        }
    }

    /// `sup` of the density, the `‖ρ‖_∞` entering Wegner-type bounds.
    pub fn density_sup(&self) -> f64 {
        match self {
            CouplingLaw::Uniform { lo, hi } => 1.0 / (hi - lo),
            CouplingLaw::PiecewiseLinear(d) => d.density_sup(),
            CouplingLaw::Point { .. } => f64::INFINITY,
        }
    }

    pub fn max_abs(&self) -> f64 {
        let (lo, hi) = self.support();
        lo.abs().max(hi.abs())
    }

    /// Map a unit uniform variate through the inverse CDF.
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            CouplingLaw::Uniform { lo, hi } => lo + (hi - lo) * u,
            CouplingLaw::PiecewiseLinear(d) => d.quantile(u),
            CouplingLaw::Point { value } => *value,
        }
    }
}

/// Density given by linear interpolation between knots, normalized to unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityKnots", into = "DensityKnots")]
pub struct PiecewiseLinearDensity {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Cumulative mass at each knot; `cumulative[0] == 0`, last entry 1.
    cumulative: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct DensityKnots {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<DensityKnots> for PiecewiseLinearDensity {
    type Error = Error;

    fn try_from(raw: DensityKnots) -> Result<Self> {
        Self::new(raw.knots, raw.values)
    }
}

impl From<PiecewiseLinearDensity> for DensityKnots {
    fn from(d: PiecewiseLinearDensity) -> Self {
        DensityKnots {
            knots: d.knots,
            values: d.values,
        }
    }
}

impl PiecewiseLinearDensity {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let mut d = Self {
            knots,
            values,
            cumulative: Vec::new(),
        };
        d.validate()?;
        let mass: f64 = d.raw_cumulative().last().copied().unwrap_or(0.0);
        for v in &mut d.values {
            *v /= mass;
        }
        d.cumulative = d.raw_cumulative();
        if let Some(last) = d.cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(d)
    }

    /// Load a two-column CSV `knot,density` (an optional header row is skipped).
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())?;
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::Config {
                    path: path.as_ref().to_path_buf(),
                    line: row + 1,
                    message: format!("expected 2 columns, found {}", record.len()),
                });
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(x), Ok(y)) => {
                    knots.push(x);
                    values.push(y);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::Config {
                        path: path.as_ref().to_path_buf(),
                        line: row + 1,
                        message: "non-numeric density row".into(),
                    })
                }
            }
        }
        Self::new(knots, values)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn validate(&self) -> Result<()> {
        if self.knots.len() < 2 || self.knots.len() != self.values.len() {
            return Err(Error::InvalidParameter(
                "piecewise-linear density needs at least two (knot, value) pairs".into(),
            ));
        }
        if self
            .knots
            .iter()
            .chain(&self.values)
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidParameter(
                "piecewise-linear density has non-finite entries".into(),
            ));
        }
        if self.knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "density knots must be strictly increasing".into(),
            ));
        }
        if self.values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter(
                "density values must be non-negative".into(),
            ));
        }
        if self.raw_cumulative().last().copied().unwrap_or(0.0) <= 0.0 {
            return Err(Error::InvalidParameter("density has zero mass".into()));
        }
        Ok(())
    }

    fn raw_cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.knots.len());
        out.push(0.0);
        for i in 1..self.knots.len() {
            acc +=
                0.5 * (self.values[i] + self.values[i - 1]) * (self.knots[i] - self.knots[i - 1]);
            out.push(acc);
        }
        out
    }

    pub fn density_sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < self.knots[0] || x > *self.knots.last().unwrap() {
            return 0.0;
        }
        let i = self
            .knots
            .partition_point(|&k| k <= x)
            .clamp(1, self.knots.len() - 1);
        let (x0, x1) = (self.knots[i - 1], self.knots[i]);
        let t = (x - x0) / (x1 - x0);
        self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.knots[0] {
            return 0.0;
        }
        if x >= *self.knots.last().unwrap() {
            return 1.0;
        }
        let i = self
            .knots
            .partition_point(|&k| k <= x)
            .clamp(1, self.knots.len() - 1);
        let f0 = self.values[i - 1];
        let s = x - self.knots[i - 1];
        self.cumulative[i - 1] + f0 * s + 0.5 * (self.density(x) - f0) * s
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let i = self
            .cumulative
            .partition_point(|&c| c <= u)
            .clamp(1, self.knots.len() - 1);
        let (x0, x1) = (self.knots[i - 1], self.knots[i]);
        let (f0, f1) = (self.values[i - 1], self.values[i]);
        let h = x1 - x0;
        let target = (u - self.cumulative[i - 1]).max(0.0);
        let slope = (f1 - f0) / h;
        // mass on [x0, x0 + s] is f0 s + slope s^2 / 2
        let disc = (f0 * f0 + 2.0 * slope * target).max(0.0);
        let denom = f0 + disc.sqrt();
        let s = if denom > 0.0 {
            2.0 * target / denom
        } else {
            0.0
        };
        (x0 + s).clamp(x0, x1)
    }
}
