//! The fixed set of probes a config may name.

use jacobi_lab::exec::Executor;
use jacobi_lab::law::CouplingLaw;
use jacobi_lab::operators::{EnsembleSpec, SiteProfile, SpectralFamily};
use jacobi_lab::probes::{
    decorrelation_probe, joint_independence_probe, level_statistics_probe, minami_probe,
    spacing_probe, wegner_probe, BoxMode, DecorrelationProbe, IdsSettings, JointProbe,
    LevelStatisticsProbe, SpacingProbe, WindowProbe,
};
use jacobi_lab::qgraph::{qgraph_minami_probe, QGraphMinamiProbe};
use jacobi_lab::report::{PointProcessSample, ProbeReport};
use jacobi_lab::{Error, Result};

use crate::config::{
    parse_f64, parse_family, parse_law, parse_list, parse_pair, parse_pairs, parse_profile,
    parse_u64, parse_usize, BlockReader,
};

#[derive(Debug, Clone, Copy)]
pub struct ParamDoc {
    pub key: &'static str,
    pub doc: &'static str,
}

const fn p(key: &'static str, doc: &'static str) -> ParamDoc {
    ParamDoc { key, doc }
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeInfo {
    pub name: &'static str,
    pub summary: &'static str,
    /// Results the probe puts to the test.
    pub references: &'static [&'static str],
    pub params: &'static [ParamDoc],
}

/// Keys every probe accepts.
pub const COMMON_PARAMS: &[ParamDoc] = &[
    p("probe", "registry name of the probe (required)"),
    p("model", "hopping | anderson | alloy | dimer-sign | qgraph"),
    p(
        "law",
        "coupling law: uniform(lo, hi), point(v) or piecewise(file.csv)",
    ),
    p(
        "family",
        "spectral family: identity (default), qgraph or constant(lambda, mu)",
    ),
    p(
        "profile",
        "alloy single-site profile: finite(first; d0, d1, ...) or exponential(amplitude, rate)",
    ),
    p("range", "alloy truncation range S"),
    p("size", "box size L"),
    p("samples", "number of independent draws"),
    p(
        "seed",
        "probe seed; derived from the global seed and the probe name when absent",
    ),
    p(
        "check.<label>",
        "acceptance range lo..hi for an estimate, evaluated with --check",
    ),
];

const IDS_PARAMS: [ParamDoc; 3] = [
    p(
        "ids.samples",
        "draws for the auxiliary IDS table (default 4000)",
    ),
    p("ids.points", "grid points of the IDS table (default 81)"),
    p(
        "ids.half_width",
        "grid margin around the probed energies (default 0.05)",
    ),
];

pub const PROBES: &[ProbeInfo] = &[
    ProbeInfo {
        name: "wegner",
        summary: "P[window holds an eigenvalue] and its log-log slope in the half-width",
        references: &["Wegner estimate: P[tr 1_J(H_L) >= 1] <= C |J| L"],
        params: &[
            p("energy", "window centre E"),
            p("widths", "half-widths eps of [E - eps, E + eps]"),
        ],
    },
    ProbeInfo {
        name: "minami",
        summary: "E[max(count - 1, 0)] in the window and its log-log slope",
        references: &[
            "Minami estimate: sum_{k>=2} P[tr 1_J(H_L) >= k] <= C (eps^s L)^(1+rho)",
            "two-window Minami bound C |I| |J| L^2 for independent potentials",
        ],
        params: &[
            p("energy", "window centre E"),
            p("widths", "half-widths eps of [E - eps, E + eps]"),
        ],
    },
    ProbeInfo {
        name: "decorrelation",
        summary: "joint occupation of [E +- 1/L] and [E' +- 1/L] on boxes of size l and the independence ratio",
        references: &[
            "decorrelation estimate for |E| != |E'|: P[both occupied] <= C l^2 / L^(1+gamma)",
            "spectral symmetry E -> -E of the hopping model as the sharpness control",
        ],
        params: &[
            p("energy", "first energy E"),
            p("energy2", "second energy E'"),
            p("box", "box size l"),
            p("mode", "shared (default) or disjoint boxes"),
        ],
    },
    ProbeInfo {
        name: "level-statistics",
        summary: "counts of unfolded eigenvalues in disjoint intervals against Poisson laws",
        references: &["convergence of unfolded local level statistics to a Poisson process of unit intensity"],
        params: &[
            p("energy", "reference energy E0"),
            p("intervals", "disjoint unfolded intervals (a, b), (c, d), ..."),
            p("points", "draws whose unfolded points are written to <name>.points.csv (default 0)"),
            IDS_PARAMS[0],
            IDS_PARAMS[1],
            IDS_PARAMS[2],
        ],
    },
    ProbeInfo {
        name: "joint-independence",
        summary: "joint count law of unfolded windows at two energies against the Poisson product",
        references: &["asymptotic independence of the level statistics at two distinct energies"],
        params: &[
            p("energy", "first reference energy E0"),
            p("energy2", "second reference energy E0'"),
            p("lower", "unfolded interval at E0' as (a, b)"),
            p("upper", "unfolded interval at E0 as (a, b); omit for a marginal-only test"),
            IDS_PARAMS[0],
            IDS_PARAMS[1],
            IDS_PARAMS[2],
        ],
    },
    ProbeInfo {
        name: "spacing",
        summary: "pooled unfolded level spacings against the exponential law",
        references: &["level spacing distribution converging to x -> exp(-x)"],
        params: &[
            p("energy", "reference energy E0"),
            p("half_width", "the spacing window is E0 +- half_width"),
            IDS_PARAMS[0],
            IDS_PARAMS[1],
            IDS_PARAMS[2],
        ],
    },
    ProbeInfo {
        name: "qgraph-minami",
        summary: "k = 1, 2 tail probabilities for graph eigenvalues in [E0 - eps, E0 + eps] via the reduced discrete operator",
        references: &[
            "Minami estimate for chains of intervals with random delta couplings",
            "spectral equivalence of the graph and the energy-dependent discrete family off pi^2 N",
        ],
        params: &[
            p("energy", "window centre E0 (away from pi^2 k^2)"),
            p("widths", "half-widths eps"),
        ],
    },
];

pub fn lookup(name: &str) -> Option<&'static ProbeInfo> {
    PROBES.iter().find(|p| p.name == name)
}

/// Ensemble from its textual parts, shared with the CLI's `ids` and
/// `lyapunov` commands.
pub fn ensemble(
    model: &str,
    law: CouplingLaw,
    family: Option<SpectralFamily>,
    profile: Option<SiteProfile>,
    range: Option<usize>,
) -> Result<EnsembleSpec, String> {
    let alloy_only = |what: &str| format!("`{what}` only applies to the alloy model");
    let spec = match model.trim() {
        "alloy" => {
            let profile = profile.ok_or("alloy model needs `profile`")?;
            let range = range
                .or(profile.radius())
                .ok_or("alloy model with an infinite profile needs `range`")?;
            EnsembleSpec::alloy(law, profile, range)
        }
        other => {
            if profile.is_some() {
                return Err(alloy_only("profile"));
            }
            if range.is_some() {
                return Err(alloy_only("range"));
            }
            match other {
                "hopping" => EnsembleSpec::hopping(law),
                "anderson" => EnsembleSpec::anderson(law),
                "dimer-sign" => EnsembleSpec::dimer_sign(law),
                "qgraph" => EnsembleSpec::qgraph(law),
                _ => return Err(format!("unknown model `{other}`; expected hopping, anderson, alloy, dimer-sign or qgraph")),
            }
        }
    };
    let spec = match family {
        Some(f) => spec.with_family(f),
        None => spec,
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

/// A fully parsed probe invocation.
#[derive(Debug, Clone)]
pub enum ProbeJob {
    Wegner(WindowProbe),
    Minami(WindowProbe),
    Decorrelation(DecorrelationProbe),
    LevelStatistics(LevelStatisticsProbe),
    JointIndependence(JointProbe),
    Spacing(SpacingProbe),
    QGraphMinami(QGraphMinamiProbe),
}

impl ProbeJob {
    pub fn kind(&self) -> &'static str {
        match self {
            ProbeJob::Wegner(_) => "wegner",
            ProbeJob::Minami(_) => "minami",
            ProbeJob::Decorrelation(_) => "decorrelation",
            ProbeJob::LevelStatistics(_) => "level-statistics",
            ProbeJob::JointIndependence(_) => "joint-independence",
            ProbeJob::Spacing(_) => "spacing",
            ProbeJob::QGraphMinami(_) => "qgraph-minami",
        }
    }

    pub fn run(&self, exec: &Executor) -> Result<(ProbeReport, Vec<PointProcessSample>)> {
        let none = |r: ProbeReport| (r, Vec::new());
        match self {
            ProbeJob::Wegner(p) => wegner_probe(p, exec).map(none),
            ProbeJob::Minami(p) => minami_probe(p, exec).map(none),
            ProbeJob::Decorrelation(p) => decorrelation_probe(p, exec).map(none),
            ProbeJob::LevelStatistics(p) => level_statistics_probe(p, exec),
            ProbeJob::JointIndependence(p) => joint_independence_probe(p, exec).map(none),
            ProbeJob::Spacing(p) => spacing_probe(p, exec).map(none),
            ProbeJob::QGraphMinami(p) => qgraph_minami_probe(p, exec).map(none),
        }
    }
}

fn read_spec(r: &BlockReader<'_>, default_model: Option<&str>) -> Result<EnsembleSpec> {
    let model_field = r.field("model");
    let model = match (model_field, default_model) {
        (Some(f), _) => f.value.as_str(),
        (None, Some(m)) => m,
        (None, None) => return Err(r.error(r.block().line, "missing required key `model`".into())),
    };
    let base = r.base_dir().to_path_buf();
    let law = r.required("law", |s| parse_law(s, &base))?;
    let family = r.optional("family", parse_family)?;
    let profile = r.optional("profile", parse_profile)?;
    let range = r.optional("range", parse_usize)?;
    let line = model_field.map_or(r.block().line, |f| f.line);
    ensemble(model, law, family, profile, range).map_err(|m| r.error(line, m))
}

fn read_ids(r: &BlockReader<'_>) -> Result<IdsSettings> {
    let d = IdsSettings::default();
    Ok(IdsSettings {
        samples: r.optional("ids.samples", parse_u64)?.unwrap_or(d.samples),
        points: r.optional("ids.points", parse_usize)?.unwrap_or(d.points),
        half_width: r
            .optional("ids.half_width", parse_f64)?
            .unwrap_or(d.half_width),
    })
}

fn parse_mode(s: &str) -> Result<BoxMode, String> {
    match s.trim() {
        "shared" => Ok(BoxMode::Shared),
        "disjoint" => Ok(BoxMode::Disjoint),
        _ => Err(format!(
            "unknown box mode `{s}`; expected shared or disjoint"
        )),
    }
}

/// Parses the probe-specific keys of a block. `seed` is the seed the probe
/// runs with; `check.*` keys are left for the caller.
pub fn build(r: &BlockReader<'_>, kind: &str, seed: u64) -> Result<ProbeJob> {
    let window = |r: &BlockReader<'_>| -> Result<WindowProbe> {
        Ok(WindowProbe {
            spec: read_spec(r, None)?,
            energy: r.required("energy", parse_f64)?,
            widths: r.required("widths", parse_list)?,
            size: r.required("size", parse_usize)?,
            samples: r.required("samples", parse_u64)?,
            seed,
        })
    };
    let job = match kind {
        "wegner" => ProbeJob::Wegner(window(r)?),
        "minami" => ProbeJob::Minami(window(r)?),
        "decorrelation" => ProbeJob::Decorrelation(DecorrelationProbe {
            spec: read_spec(r, None)?,
            energy: r.required("energy", parse_f64)?,
            energy2: r.required("energy2", parse_f64)?,
            size: r.required("size", parse_usize)?,
            box_size: r.required("box", parse_usize)?,
            samples: r.required("samples", parse_u64)?,
            seed,
            mode: r.optional("mode", parse_mode)?.unwrap_or_default(),
        }),
        "level-statistics" => ProbeJob::LevelStatistics(LevelStatisticsProbe {
            spec: read_spec(r, None)?,
            energy: r.required("energy", parse_f64)?,
            size: r.required("size", parse_usize)?,
            intervals: r.required("intervals", parse_pairs)?,
            samples: r.required("samples", parse_u64)?,
            seed,
            ids: read_ids(r)?,
            point_draws: r.optional("points", parse_u64)?.unwrap_or(0),
        }),
        "joint-independence" => ProbeJob::JointIndependence(JointProbe {
            spec: read_spec(r, None)?,
            energy: r.required("energy", parse_f64)?,
            energy2: r.required("energy2", parse_f64)?,
            size: r.required("size", parse_usize)?,
            upper: r.optional("upper", parse_pair)?,
            lower: r.required("lower", parse_pair)?,
            samples: r.required("samples", parse_u64)?,
            seed,
            ids: read_ids(r)?,
        }),
        "spacing" => ProbeJob::Spacing(SpacingProbe {
            spec: read_spec(r, None)?,
            energy: r.required("energy", parse_f64)?,
            half_width: r.required("half_width", parse_f64)?,
            size: r.required("size", parse_usize)?,
            samples: r.required("samples", parse_u64)?,
            seed,
            ids: read_ids(r)?,
        }),
        "qgraph-minami" => ProbeJob::QGraphMinami(QGraphMinamiProbe {
            spec: read_spec(r, Some("qgraph"))?,
            energy: r.required("energy", parse_f64)?,
            widths: r.required("widths", parse_list)?,
            size: r.required("size", parse_usize)?,
            samples: r.required("samples", parse_u64)?,
            seed,
        }),
        other => {
            return Err(Error::InvalidParameter(format!(
                "probe kind `{other}` is not registered"
            )));
        }
    };
    Ok(job)
}
