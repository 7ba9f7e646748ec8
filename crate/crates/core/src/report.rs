//! Probe reports and point-process samples.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::ids::fmt17;

/// Bumped whenever the JSON layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub label: String,
    /// `None` when the quantity is undefined for the run (no events, too
    /// few points for a fit, …).
    pub value: Option<f64>,
}

/// A plot-ready series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub x: String,
    pub y: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub schema_version: u32,
    pub name: String,
    pub params: BTreeMap<String, Value>,
    pub estimates: Vec<Estimate>,
    /// Parallel to `estimates`; 95% intervals where one is defined.
    pub ci: Vec<Option<[f64; 2]>>,
    pub samples: u64,
    pub seed: u64,
    /// Wall time; excluded from reproducibility comparisons.
    pub runtime_s: f64,
    #[serde(default)]
    pub curves: Vec<Curve>,
}

impl ProbeReport {
    pub fn new(name: &str, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            params: BTreeMap::new(),
            estimates: Vec::new(),
            ci: Vec::new(),
            samples: 0,
            seed,
            runtime_s: 0.0,
            curves: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.params.insert(key.into(), v);
        self
    }

    pub fn estimate(
        &mut self,
        label: &str,
        value: Option<f64>,
        ci: Option<(f64, f64)>,
    ) -> &mut Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        self.estimates.push(Estimate {
            label: label.into(),
            value: value.and_then(finite),
        });
        self.ci
            .push(ci.and_then(|(a, b)| (a.is_finite() && b.is_finite()).then_some([a, b])));
        self
    }

    pub fn curve(&mut self, name: &str, x: &str, y: &str, points: Vec<[f64; 2]>) -> &mut Self {
        self.curves.push(Curve {
            name: name.into(),
            x: x.into(),
            y: y.into(),
            points,
        });
        self
    }

    fn position(&self, label: &str) -> Option<usize> {
        self.estimates.iter().position(|e| e.label == label)
    }

    /// `None` if the label is missing or its value undefined.
    pub fn value(&self, label: &str) -> Option<f64> {
        self.position(label).and_then(|i| self.estimates[i].value)
    }

    pub fn interval(&self, label: &str) -> Option<[f64; 2]> {
        self.position(label).and_then(|i| self.ci[i])
    }

    pub fn has(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    /// Copy with the wall time zeroed, for reproducibility comparisons.
    pub fn stripped(&self) -> Self {
        Self {
            runtime_s: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Two-column CSV per curve, named `<stem>.<curve>.csv` in `dir`.
    pub fn write_curves(
        &self,
        dir: impl AsRef<Path>,
        stem: &str,
    ) -> Result<Vec<std::path::PathBuf>> {
        let mut out = Vec::new();
        for c in &self.curves {
            let path = dir.as_ref().join(format!("{stem}.{}.csv", c.name));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record([c.x.as_str(), c.y.as_str()])?;
            for p in &c.points {
                w.write_record([fmt17(p[0]), fmt17(p[1])])?;
            }
            w.flush()?;
            out.push(path);
        }
        Ok(out)
    }
}

/// Unfolded points of one draw inside a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointProcessSample {
    pub draw_id: u64,
    pub reference_energy: f64,
    /// Sorted.
    pub points: Vec<f64>,
}

/// Stream samples as `draw_id,xi` rows.
pub fn write_point_samples(path: impl AsRef<Path>, samples: &[PointProcessSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["draw_id", "xi"])?;
    for s in samples {
        for x in &s.points {
            w.write_record([s.draw_id.to_string(), fmt17(*x)])?;
        }
    }
    w.flush()?;
    Ok(())
}
