//! Experiment configuration files.
//!
//! The format is line-oriented. Blank lines and lines starting with `#` or
//! `;` are ignored. Global keys come first, then one block per probe:
//!
//! ```text
//! seed = 20240601
//! workers = 4
//! out = results
//!
//! [probe wegner-anderson]
//! probe = wegner
//! model = anderson
//! law = uniform(-2, 2)
//! energy = 0
//! widths = logspace(-4, -2, 5)
//! size = 100
//! samples = 100000
//! check.slope = 0.9..1.1
//! ```
//!
//! Global keys: `seed` (required), `workers`, `out`. Relative paths resolve
//! against the directory holding the config file.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use jacobi_lab::law::{CouplingLaw, PiecewiseLinearDensity};
use jacobi_lab::operators::{SiteProfile, SpectralFamily};
use jacobi_lab::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeBlock {
    pub name: String,
    pub line: usize,
    pub fields: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Source file, used in diagnostics.
    pub path: PathBuf,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub probes: Vec<ProbeBlock>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// `path` only labels diagnostics and anchors relative paths.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Config {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut seed = None;
        let mut workers = None;
        let mut out = None;
        let mut probes: Vec<ProbeBlock> = Vec::new();
        let mut global_keys = BTreeSet::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let inner = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, "section header is missing `]`".into()))?
                    .trim();
                let name = inner
                    .strip_prefix("probe")
                    .filter(|n| n.starts_with(char::is_whitespace))
                    .map(str::trim)
                    .ok_or_else(|| {
                        err(
                            line,
                            format!("unknown section `[{inner}]`; expected `[probe NAME]`"),
                        )
                    })?;
                if name.is_empty()
                    || !name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
                {
                    return Err(err(
                        line,
                        format!("probe name `{name}` must be non-empty and use [A-Za-z0-9_-]"),
                    ));
                }
                if let Some(prev) = probes.iter().find(|b| b.name == name) {
                    return Err(err(
                        line,
                        format!("probe `{name}` already defined on line {}", prev.line),
                    ));
                }
                probes.push(ProbeBlock {
                    name: name.into(),
                    line,
                    fields: Vec::new(),
                });
                continue;
            }
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, got `{s}`")))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(err(line, "empty key".into()));
            }
            match probes.last_mut() {
                Some(block) => {
                    if let Some(prev) = block.fields.iter().find(|f| f.key == key) {
                        return Err(err(
                            line,
                            format!("`{key}` already set on line {}", prev.line),
                        ));
                    }
                    block.fields.push(Field {
                        key: key.into(),
                        value: value.into(),
                        line,
                    });
                }
                None => {
                    if !global_keys.insert(key.to_string()) {
                        return Err(err(line, format!("global `{key}` set twice")));
                    }
                    match key {
                        "seed" => {
                            seed = Some(
                                parse_u64(value).map_err(|m| err(line, format!("seed: {m}")))?,
                            )
                        }
                        "workers" => {
                            let w = parse_usize(value)
                                .map_err(|m| err(line, format!("workers: {m}")))?;
                            if w == 0 {
                                return Err(err(line, "workers must be at least 1".into()));
                            }
                            workers = Some(w);
                        }
                        "out" => out = Some(resolve(path, value)),
                        _ => {
                            return Err(err(
                                line,
                                format!(
                                    "unknown global key `{key}`; expected seed, workers or out"
                                ),
                            ))
                        }
                    }
                }
            }
        }
        let seed = seed.ok_or_else(|| err(1, "missing required global `seed`".into()))?;
        Ok(Self {
            path: path.to_path_buf(),
            seed,
            workers,
            out,
            probes,
        })
    }

    pub fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }
}

fn resolve(config: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Typed access to a block's fields. [`BlockReader::finish`] rejects keys
/// that nothing asked for.
pub struct BlockReader<'a> {
    path: &'a Path,
    base_dir: &'a Path,
    block: &'a ProbeBlock,
    used: RefCell<BTreeSet<usize>>,
}

impl<'a> BlockReader<'a> {
    pub fn new(config: &'a ExperimentConfig, block: &'a ProbeBlock) -> Self {
        Self {
            path: &config.path,
            base_dir: config.base_dir(),
            block,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    pub fn block(&self) -> &ProbeBlock {
        self.block
    }

    pub fn base_dir(&self) -> &Path {
        self.base_dir
    }

    pub fn error(&self, line: usize, message: String) -> Error {
        Error::Config {
            path: self.path.to_path_buf(),
            line,
            message: format!("[probe {}] {message}", self.block.name),
        }
    }

    pub fn field(&self, key: &str) -> Option<&'a Field> {
        let block = self.block;
        let i = block.fields.iter().position(|f| f.key == key)?;
        self.used.borrow_mut().insert(i);
        Some(&block.fields[i])
    }

    /// Fields whose key starts with `prefix`, with the prefix removed.
    pub fn prefixed(&self, prefix: &str) -> Vec<(&'a str, &'a Field)> {
        let block = self.block;
        let mut out = Vec::new();
        for (i, f) in block.fields.iter().enumerate() {
            if let Some(rest) = f.key.strip_prefix(prefix) {
                self.used.borrow_mut().insert(i);
                out.push((rest, f));
            }
        }
        out
    }

    pub fn optional<T>(
        &self,
        key: &str,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<Option<T>> {
        match self.field(key) {
            None => Ok(None),
            Some(f) => parse(&f.value)
                .map(Some)
                .map_err(|m| self.error(f.line, format!("{key}: {m}"))),
        }
    }

    pub fn required<T>(
        &self,
        key: &str,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<T> {
        self.optional(key, parse)?.ok_or_else(|| self.missing(key))
    }

    /// Points at a likely misspelling of `key` when the block has one.
    fn missing(&self, key: &str) -> Error {
        let used = self.used.borrow();
        let typo = self
            .block
            .fields
            .iter()
            .enumerate()
            .filter(|(i, f)| !used.contains(i) && strsim::levenshtein(&f.key, key) <= 2)
            .map(|(_, f)| f)
            .next();
        match typo {
            Some(f) => self.error(
                f.line,
                format!("unknown key `{}`; did you mean `{key}`?", f.key),
            ),
            None => self.error(self.block.line, format!("missing required key `{key}`")),
        }
    }

    pub fn finish(self) -> Result<()> {
        let used = self.used.borrow();
        match self
            .block
            .fields
            .iter()
            .enumerate()
            .find(|(i, _)| !used.contains(i))
        {
            Some((_, f)) => Err(self.error(f.line, format!("unknown key `{}`", f.key))),
            None => Ok(()),
        }
    }
}

/// `name(args)` → `(name, args)`.
fn call(s: &str) -> Option<(&str, &str)> {
    let open = s.find('(')?;
    let inner = s[open + 1..].trim_end().strip_suffix(')')?;
    Some((s[..open].trim(), inner))
}

fn split_args(s: &str) -> Vec<&str> {
    if s.trim().is_empty() {
        return Vec::new();
    }
    s.split(',').map(str::trim).collect()
}

pub fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .replace('_', "")
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Integers, also written as `1e6` or `1_000_000`.
pub fn parse_u64(s: &str) -> Result<u64, String> {
    let t = s.trim().replace('_', "");
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let v = parse_f64(&t).map_err(|_| format!("`{s}` is not a non-negative integer"))?;
    if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(63) {
        Ok(v as u64)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

pub fn parse_usize(s: &str) -> Result<usize, String> {
    parse_u64(s).and_then(|v| usize::try_from(v).map_err(|_| format!("`{s}` is too large")))
}

/// Comma-separated numbers, `linspace(a, b, n)` or `logspace(a, b, n)`
/// (powers of ten from `a` to `b`).
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if let Some((name, args)) = call(s) {
        let a = split_args(args);
        if a.len() != 3 {
            return Err(format!("{name} takes (start, stop, count)"));
        }
        let lo = parse_f64(a[0])?;
        let hi = parse_f64(a[1])?;
        let n = parse_usize(a[2])?;
        if n == 0 {
            return Err("count must be at least 1".into());
        }
        let at = |i: usize| {
            if n == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        return match name {
            "linspace" => Ok((0..n).map(at).collect()),
            "logspace" => Ok((0..n).map(|i| 10f64.powf(at(i))).collect()),
            _ => Err(format!("unknown list generator `{name}`")),
        };
    }
    let v = split_args(s)
        .into_iter()
        .map(parse_f64)
        .collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err("empty list".into());
    }
    Ok(v)
}

/// `(a, b)`.
pub fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| format!("expected `(a, b)`, got `{s}`"))?;
    match split_args(inner).as_slice() {
        [a, b] => Ok((parse_f64(a)?, parse_f64(b)?)),
        _ => Err(format!("expected `(a, b)`, got `{s}`")),
    }
}

/// `(a, b), (c, d), …`.
pub fn parse_pairs(s: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let close = rest
            .find(')')
            .ok_or_else(|| format!("unclosed `(` in `{s}`"))?;
        out.push(parse_pair(&rest[..=close])?);
        rest = rest[close + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
        }
    }
    if out.is_empty() {
        return Err("empty interval list".into());
    }
    Ok(out)
}

/// `lo..hi`, either end may be omitted.
pub fn parse_range(s: &str) -> Result<(Option<f64>, Option<f64>), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected `lo..hi`, got `{s}`"))?;
    let end = |t: &str| {
        let t = t.trim();
        if t.is_empty() {
            Ok(None)
        } else {
            parse_f64(t).map(Some)
        }
    };
    let (lo, hi) = (end(a)?, end(b)?);
    if lo.is_none() && hi.is_none() {
        return Err("range needs at least one bound".into());
    }
    if let (Some(l), Some(h)) = (lo, hi) {
        if l > h {
            return Err(format!("empty range {l}..{h}"));
        }
    }
    Ok((lo, hi))
}

/// `uniform(lo, hi)`, `point(v)` or `piecewise(path.csv)`.
pub fn parse_law(s: &str, base_dir: &Path) -> Result<CouplingLaw, String> {
    let (name, args) =
        call(s).ok_or_else(|| format!("expected a law such as `uniform(0, 1)`, got `{s}`"))?;
    let law = match (name, split_args(args).as_slice()) {
        ("uniform", [lo, hi]) => CouplingLaw::uniform(parse_f64(lo)?, parse_f64(hi)?),
        ("point", [v]) => CouplingLaw::Point {
            value: parse_f64(v)?,
        },
        ("piecewise", [file]) => {
            let p = Path::new(file);
            let p = if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            };
            CouplingLaw::PiecewiseLinear(
                PiecewiseLinearDensity::from_csv(&p).map_err(|e| e.to_string())?,
            )
        }
        _ => {
            return Err(format!(
                "unknown law `{s}`; expected uniform(lo, hi), point(v) or piecewise(file)"
            ))
        }
    };
    law.validate().map_err(|e| e.to_string())?;
    Ok(law)
}

/// `finite(first; d0, d1, …)` or `exponential(amplitude, rate)`.
pub fn parse_profile(s: &str) -> Result<SiteProfile, String> {
    let (name, args) = call(s).ok_or_else(|| format!("expected a profile, got `{s}`"))?;
    match name {
        "finite" => {
            let (first, values) = args.split_once(';').ok_or_else(|| {
                "finite profile is written `finite(first; d0, d1, ...)`".to_string()
            })?;
            let first = first
                .trim()
                .parse::<i64>()
                .map_err(|_| format!("`{}` is not an integer offset", first.trim()))?;
            let values = split_args(values)
                .into_iter()
                .map(parse_f64)
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SiteProfile::Finite { first, values })
        }
        "exponential" => match split_args(args).as_slice() {
            [a, r] => Ok(SiteProfile::Exponential {
                amplitude: parse_f64(a)?,
                rate: parse_f64(r)?,
            }),
            _ => Err("exponential profile takes (amplitude, rate)".into()),
        },
        _ => Err(format!("unknown profile `{name}`")),
    }
}

/// `identity`, `qgraph` or `constant(lambda, mu)`.
pub fn parse_family(s: &str) -> Result<SpectralFamily, String> {
    match s.trim() {
        "identity" => return Ok(SpectralFamily::Identity),
        "qgraph" => return Ok(SpectralFamily::QuantumGraph),
        _ => {}
    }
    match call(s) {
        Some(("constant", args)) => match split_args(args).as_slice() {
            [l, m] => Ok(SpectralFamily::Constant {
                lambda: parse_f64(l)?,
                mu: parse_f64(m)?,
            }),
            _ => Err("constant family takes (lambda, mu)".into()),
        },
        _ => Err(format!(
            "unknown family `{s}`; expected identity, qgraph or constant(lambda, mu)"
        )),
    }
}
