//! Sequential probe execution with per-probe failure isolation.
//!
//! Output layout under the run directory:
//!
//! - `<probe>.json`: the report
//! - `<probe>.<curve>.csv`: one two-column file per curve
//! - `<probe>.points.csv`: unfolded points, level-statistics probes only
//! - `summary.csv`: one row per estimate of every probe

use std::path::{Path, PathBuf};

use jacobi_lab::exec::Executor;
use jacobi_lab::ids::fmt17;
use jacobi_lab::report::{write_point_samples, ProbeReport};
use jacobi_lab::rng::DrawKey;
use jacobi_lab::{Error, Result};

use crate::config::{parse_range, parse_u64, BlockReader, ExperimentConfig};
use crate::registry::{build, lookup, ProbeJob};

/// `lo <= value <= hi` on a named estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Check {
    pub fn range(&self) -> String {
        let end = |b: Option<f64>| b.map(|x| x.to_string()).unwrap_or_default();
        format!("{}..{}", end(self.lo), end(self.hi))
    }

    /// An undefined or missing estimate fails.
    pub fn evaluate(&self, report: &ProbeReport) -> CheckOutcome {
        let value = report.value(&self.label);
        let passed =
            value.is_some_and(|v| self.lo.is_none_or(|l| v >= l) && self.hi.is_none_or(|h| v <= h));
        CheckOutcome {
            check: self.clone(),
            value,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub check: Check,
    pub value: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct PlannedProbe {
    pub name: String,
    pub seed: u64,
    pub job: ProbeJob,
    pub checks: Vec<Check>,
}

/// 64-bit FNV-1a, used to key probe seeds by name.
fn name_tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Parses every block up front so that config errors surface before any
/// probe runs.
pub fn plan(config: &ExperimentConfig) -> Result<Vec<PlannedProbe>> {
    let mut out = Vec::with_capacity(config.probes.len());
    for block in &config.probes {
        let r = BlockReader::new(config, block);
        let kind_field = r
            .field("probe")
            .ok_or_else(|| r.error(block.line, "missing required key `probe`".into()))?;
        let info = lookup(&kind_field.value).ok_or_else(|| {
            r.error(
                kind_field.line,
                format!(
                    "unknown probe `{}`; run `list-probes` for the registry",
                    kind_field.value
                ),
            )
        })?;
        let seed = r
            .optional("seed", parse_u64)?
            .unwrap_or_else(|| DrawKey::derive_seed(config.seed, name_tag(&block.name)));
        let job = build(&r, info.name, seed).map_err(|e| match e {
            Error::Config { .. } => e,
            e => r.error(kind_field.line, e.to_string()),
        })?;
        let mut checks = Vec::new();
        for (label, f) in r.prefixed("check.") {
            let (lo, hi) =
                parse_range(&f.value).map_err(|m| r.error(f.line, format!("{}: {m}", f.key)))?;
            checks.push(Check {
                label: label.into(),
                lo,
                hi,
            });
        }
        r.finish()?;
        out.push(PlannedProbe {
            name: block.name.clone(),
            seed,
            job,
            checks,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub out: PathBuf,
    pub check: bool,
}

#[derive(Debug)]
pub struct ProbeOutcome {
    pub name: String,
    pub kind: &'static str,
    /// The error message when the probe failed.
    pub result: std::result::Result<ProbeReport, String>,
    pub checks: Vec<CheckOutcome>,
    pub files: Vec<PathBuf>,
}

impl ProbeOutcome {
    pub fn report(&self) -> Option<&ProbeReport> {
        self.result.as_ref().ok()
    }

    pub fn checks_passed(&self) -> bool {
        self.result.is_ok() && self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub outcomes: Vec<ProbeOutcome>,
    pub summary_path: PathBuf,
    pub check: bool,
}

impl RunSummary {
    pub fn completed(&self) -> bool {
        self.outcomes.iter().all(|o| o.result.is_ok())
    }

    pub fn outcome(&self, name: &str) -> Option<&ProbeOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }

    /// 0 when every probe ran and, in check mode, every check passed.
    pub fn exit_code(&self) -> i32 {
        let ok = if self.check {
            self.outcomes.iter().all(ProbeOutcome::checks_passed)
        } else {
            self.completed()
        };
        if ok {
            0
        } else {
            1
        }
    }
}

pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunSummary> {
    let planned = plan(config)?;
    let exec = Executor::new(options.workers)?;
    std::fs::create_dir_all(&options.out)?;
    let mut outcomes = Vec::with_capacity(planned.len());
    for p in planned {
        outcomes.push(run_one(&p, &exec, &options.out));
    }
    let summary_path = options.out.join("summary.csv");
    write_summary(&summary_path, &outcomes)?;
    Ok(RunSummary {
        outcomes,
        summary_path,
        check: options.check,
    })
}

fn run_one(p: &PlannedProbe, exec: &Executor, dir: &Path) -> ProbeOutcome {
    let kind = p.job.kind();
    let fail = |e: String| ProbeOutcome {
        name: p.name.clone(),
        kind,
        result: Err(e),
        checks: Vec::new(),
        files: Vec::new(),
    };
    let (report, points) = match p.job.run(exec) {
        Ok(x) => x,
        Err(e) => return fail(e.to_string()),
    };
    let mut files = Vec::new();
    let mut write = || -> Result<()> {
        let json = dir.join(format!("{}.json", p.name));
        report.write_json(&json)?;
        files.push(json);
        files.extend(report.write_curves(dir, &p.name)?);
        if !points.is_empty() {
            let path = dir.join(format!("{}.points.csv", p.name));
            write_point_samples(&path, &points)?;
            files.push(path);
        }
        Ok(())
    };
    if let Err(e) = write() {
        return fail(format!("writing outputs: {e}"));
    }
    let checks = p.checks.iter().map(|c| c.evaluate(&report)).collect();
    ProbeOutcome {
        name: p.name.clone(),
        kind,
        result: Ok(report),
        checks,
        files,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

pub fn write_summary(path: &Path, outcomes: &[ProbeOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "probe", "kind", "status", "label", "value", "ci_lo", "ci_hi", "check", "verdict",
    ])?;
    for o in outcomes {
        let report = match &o.result {
            Ok(r) => r,
            Err(e) => {
                let status = format!("error: {e}");
                w.write_record([o.name.as_str(), o.kind, &status, "", "", "", "", "", ""])?;
                continue;
            }
        };
        for (e, ci) in report.estimates.iter().zip(&report.ci) {
            let check = o.checks.iter().find(|c| c.check.label == e.label);
            w.write_record([
                o.name.clone(),
                o.kind.into(),
                "ok".into(),
                e.label.clone(),
                opt(e.value),
                opt(ci.map(|c| c[0])),
                opt(ci.map(|c| c[1])),
                check.map(|c| c.check.range()).unwrap_or_default(),
                check
                    .map(|c| if c.passed { "pass" } else { "fail" }.to_string())
                    .unwrap_or_default(),
            ])?;
        }
        for c in o.checks.iter().filter(|c| !report.has(&c.check.label)) {
            w.write_record([
                o.name.as_str(),
                o.kind,
                "ok",
                &c.check.label,
                "",
                "",
                "",
                &c.check.range(),
                "fail",
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
