//! Acceptance table. Prints one line per criterion and exits nonzero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use jacobi_lab::eigensolve::{
    dense_spectrum, eigenvalue_by_index, eigenvector, jacobi_eigen, sturm_count,
};
use jacobi_lab::exec::Executor;
use jacobi_lab::ids::{estimate_ids, linear_grid};
use jacobi_lab::law::CouplingLaw;
use jacobi_lab::operators::{EnsembleSpec, Realizer, TridiagonalOperator};
use jacobi_lab::pruefer::{
    hellmann_feynman_check, radial_identity, split_box_search, wronskian_sequence, FamilyPoint,
    Perturbation, SplitOutcome,
};
use jacobi_lab::qgraph::{
    graph_eigenvalues, m_matrix, reduced_operator, scalar_factor, QGraphInstance, DEFAULT_EXCLUSION,
};
use jacobi_lab::report::ProbeReport;
use jacobi_lab::rng::DrawKey;
use jacobi_lab::stats::Z99;
use jacobi_lab::transfer::{
    dimer_two_step, ellipticity_report, holder_grid, ids_holder_fit, lyapunov, Conjugacy,
};
use jacobi_lab_cli::config::ExperimentConfig;
use jacobi_lab_cli::runner::{run, RunOptions, RunSummary};

struct Line {
    id: &'static str,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn line(id: &'static str, title: &'static str, passed: bool, detail: String) -> Line {
    Line {
        id,
        title,
        passed,
        detail,
    }
}

fn suite_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper-suite.ini");
    ExperimentConfig::load(&path).expect("bundled suite parses")
}

fn run_suite(workers: usize, out: PathBuf) -> RunSummary {
    let cfg = suite_config();
    run(
        &cfg,
        &RunOptions {
            workers,
            out,
            check: true,
        },
    )
    .expect("suite runs")
}

fn report<'a>(s: &'a RunSummary, name: &str) -> &'a ProbeReport {
    let o = s
        .outcome(name)
        .unwrap_or_else(|| panic!("suite has no probe `{name}`"));
    match &o.result {
        Ok(r) => r,
        Err(e) => panic!("probe `{name}` failed: {e}"),
    }
}

/// Suite checks of one probe, with a readable rendering.
fn suite_checks(s: &RunSummary, name: &str) -> (bool, String) {
    let o = s
        .outcome(name)
        .unwrap_or_else(|| panic!("suite has no probe `{name}`"));
    if let Err(e) = &o.result {
        return (false, format!("{name}: {e}"));
    }
    let parts: Vec<String> = o
        .checks
        .iter()
        .map(|c| {
            let v = c.value.map_or("undefined".into(), |v| format!("{v:.4}"));
            format!(
                "{}={v} [{}]{}",
                c.check.label,
                c.check.range(),
                if c.passed { "" } else { " FAIL" }
            )
        })
        .collect();
    (o.checks_passed() && !o.checks.is_empty(), parts.join(" "))
}

fn random_operator(key: DrawKey) -> TridiagonalOperator {
    let mut s = key.stream();
    let n = 1 + (s.next_unit() * 12.0) as usize;
    let style = (s.next_unit() * 4.0) as usize;
    let spec = match style {
        0 => EnsembleSpec::anderson(CouplingLaw::uniform(-2.0, 2.0)),
        1 => EnsembleSpec::standard_hopping(),
        2 => EnsembleSpec::dimer_sign(CouplingLaw::uniform(0.0, 1.0)),
        _ => {
            // generic entries, with repeated diagonals and some cut couplings
            let diag = (0..n)
                .map(|_| (4.0 * s.next_unit()).floor() - 2.0 + 0.5 * s.next_unit())
                .collect();
            let off = (0..n.saturating_sub(1))
                .map(|_| {
                    if s.next_unit() < 0.2 {
                        0.0
                    } else {
                        3.0 * s.next_unit() - 1.5
                    }
                })
                .collect();
            return TridiagonalOperator::new(diag, off).unwrap();
        }
    };
    Realizer::new()
        .realize(&spec, n, DrawKey::new(key.seed, key.index ^ 0xABCD))
        .clone()
}

fn c1_oracle() -> Line {
    let mut worst_eig = 0.0f64;
    let mut mismatches = 0usize;
    for t in 0..1000u64 {
        let h = random_operator(DrawKey::new(101, t));
        let dense = jacobi_eigen(h.to_dense()).values;
        let (lo, hi) = h.gershgorin();
        let mut s = DrawKey::new(102, t).stream();
        for _ in 0..50 {
            let e = lo - 0.5 + (hi - lo + 1.0) * s.next_unit();
            let want = dense.iter().filter(|v| **v < e).count();
            if sturm_count(&h, e) != want {
                mismatches += 1;
            }
        }
        for (j, v) in dense.iter().enumerate() {
            worst_eig = worst_eig.max((eigenvalue_by_index(&h, j, 1e-14) - v).abs());
        }
    }
    line(
        "1",
        "Sturm counts vs dense oracle",
        mismatches == 0 && worst_eig <= 1e-10,
        format!("count mismatches={mismatches}/50000, max eigenvalue error={worst_eig:.2e}"),
    )
}

fn c2_free_ids() -> Line {
    let l = 1000;
    let h = TridiagonalOperator::free_laplacian(l);
    let grid = linear_grid(-1.99, 1.99, 200);
    let worst = grid
        .iter()
        .map(|&e| (sturm_count(&h, e) as f64 / l as f64 - (1.0 - (e / 2.0).acos() / PI)).abs())
        .fold(0.0, f64::max);
    line(
        "2",
        "free Laplacian IDS",
        worst <= 2.0 / l as f64,
        format!("max error={worst:.2e} (bound {:.0e})", 2.0 / l as f64),
    )
}

fn c3_hopping_symmetry() -> Line {
    let l = 500;
    let spec = EnsembleSpec::standard_hopping();
    let mut r = Realizer::new();
    let mut worst_pair = 0.0f64;
    let mut outside = 0usize;
    for i in 0..100 {
        let h = r.realize(&spec, l, DrawKey::new(103, i));
        let eigs: Vec<f64> = (0..l).map(|j| eigenvalue_by_index(h, j, 1e-14)).collect();
        for j in 0..l {
            worst_pair = worst_pair.max((eigs[j] + eigs[l - 1 - j]).abs());
        }
        outside += eigs.iter().filter(|e| e.abs() > 4.0).count();
    }
    line(
        "3",
        "hopping spectral symmetry",
        worst_pair <= 1e-10 && outside == 0,
        format!("max |E_j + E_(L-1-j)|={worst_pair:.2e}, outside [-4,4]={outside}"),
    )
}

fn c4_wronskian() -> Line {
    let spec = EnsembleSpec::standard_hopping();
    let mut r = Realizer::new();
    let (mut worst_rec, mut worst_excess) = (0.0f64, f64::NEG_INFINITY);
    let mut pairs = 0;
    let mut i = 0u64;
    while pairs < 100 {
        let l = 60;
        let h = r.realize(&spec, l, DrawKey::new(104, i)).clone();
        let mut s = DrawKey::new(105, i).stream();
        i += 1;
        let j = (s.next_unit() * l as f64) as usize;
        let k = (j + 1 + (s.next_unit() * (l - 1) as f64) as usize) % l;
        let (eu, ev) = (
            eigenvalue_by_index(&h, j, 1e-15),
            eigenvalue_by_index(&h, k, 1e-15),
        );
        let (Ok(u), Ok(v)) = (
            eigenvector(&h, eu).and_then(|x| x.simple()),
            eigenvector(&h, ev).and_then(|x| x.simple()),
        ) else {
            continue;
        };
        let w = wronskian_sequence(&h, &u, &v, eu, ev).expect("eigenpairs certified");
        worst_rec = worst_rec.max(w.max_violation);
        worst_excess = worst_excess.max(w.max_sine_product - w.sine_bound);
        pairs += 1;
    }
    line(
        "4",
        "Wronskian recursion and angle bound",
        worst_rec <= 1e-10 && worst_excess <= 1e-10,
        format!("pairs={pairs}, max residual={worst_rec:.2e}, max(|r r sin| - M|dE|)={worst_excess:.2e}"),
    )
}

fn c5_hellmann_feynman() -> Line {
    let (mut worst_grad, mut worst_radial) = (0.0f64, 0.0f64);
    let (mut checked, mut skipped) = (0usize, 0usize);
    let size = 10;
    for d in 0..20u64 {
        let spec = if d % 2 == 0 {
            EnsembleSpec::anderson(CouplingLaw::uniform(-2.0, 2.0))
        } else {
            EnsembleSpec::standard_hopping()
        };
        let draw = spec.draw(size, DrawKey::new(106, d)).unwrap();
        let point = FamilyPoint {
            spec: &spec,
            size,
            draw: &draw,
            energy: 0.0,
        };
        let params = spec.omega_indices(size);
        for j in 0..size {
            for n in params.clone() {
                match hellmann_feynman_check(&point, j, Perturbation::Omega(n)) {
                    Ok(g) => {
                        worst_grad = worst_grad.max(g.rel_err);
                        checked += 1;
                    }
                    Err(jacobi_lab::Error::Degenerate { .. }) => skipped += 1,
                    Err(e) => panic!("gradient check: {e}"),
                }
            }
        }
        if d % 2 == 1 {
            let h = point.operator().unwrap();
            for j in 0..size {
                for k in 1..=size {
                    worst_radial = worst_radial.max(radial_identity(&h, j, k).unwrap().residual);
                }
            }
        }
    }
    line(
        "5",
        "Hellmann-Feynman gradients and radial identity",
        worst_grad <= 1e-6 && worst_radial <= 1e-8 && checked > 0,
        format!("gradients={checked} (non-simple skipped={skipped}), max rel err={worst_grad:.2e}, max radial residual={worst_radial:.2e}"),
    )
}

fn c13_dimer() -> Line {
    let mut worst_trace = 0.0f64;
    let mut table_ok = true;
    for e in linear_grid(-3.0, -1.0, 201) {
        let r = ellipticity_report(e).unwrap();
        for t in &r.entries {
            worst_trace = worst_trace.max((t.trace - t.formula).abs());
        }
        let a = &r.entries[0];
        let want = if e < -2.0 {
            Conjugacy::Hyperbolic
        } else if e == -2.0 {
            Conjugacy::Parabolic
        } else if e > -2.0 && e < -1.0 {
            Conjugacy::Elliptic
        } else {
            continue;
        };
        table_ok &= a.class == want;
    }
    // the two-step matrices stay in SL(2)
    let det_err = linear_grid(-3.0, 3.0, 61)
        .iter()
        .flat_map(|&e| [0.0, 0.3, 1.0].map(|w| dimer_two_step(w, e).det_error()))
        .fold(0.0, f64::max);
    let spec = EnsembleSpec::dimer_sign(CouplingLaw::uniform(0.0, 1.0));
    let exec = Executor::new(2).unwrap();
    let mut gammas = Vec::new();
    let mut positive = true;
    for e in [-2.5, -1.5, -0.5, 0.0] {
        let g = lyapunov(&spec, e, 20_000, 64, 107, &exec).unwrap();
        positive &= g.lower_bound(Z99) > 0.0;
        gammas.push(format!("{e}:{:.4}±{:.4}", g.estimate, g.stderr));
    }
    let energies = linear_grid(-2.5, -0.5, 5);
    let widths = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
    let ids = estimate_ids(
        &spec,
        1000,
        200,
        &holder_grid(&energies, &widths),
        108,
        &exec,
    )
    .unwrap();
    let fit = ids_holder_fit(&ids, &energies, &widths).unwrap();
    line(
        "13",
        "dimer traces, classes, Lyapunov and Hölder",
        worst_trace <= 1e-12 && det_err <= 1e-12 && table_ok && positive && fit.exponent > 0.0,
        format!(
            "max trace error={worst_trace:.1e}, det error={det_err:.1e}, class table {}, gamma {} , holder exponent={:.3}",
            if table_ok { "ok" } else { "MISMATCH" },
            gammas.join(" "),
            fit.exponent
        ),
    )
}

fn free_graph_roots(l: usize, e_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..=l {
        let c = 2.0 * (k as f64 * PI / (l + 1) as f64).cos();
        if c.abs() > 1.0 {
            continue;
        }
        let base = c.acos();
        for m in 0..4 {
            let branch = 2.0 * PI * m as f64;
            for s in [branch + base, branch + 2.0 * PI - base] {
                let e = s * s;
                let pole = (s / PI).round();
                let at_pole = pole >= 1.0 && (e - (pole * PI).powi(2)).abs() < DEFAULT_EXCLUSION;
                if s > 0.0 && e < e_max && !at_pole {
                    out.push(e);
                }
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

fn c14_qgraph(suite: &RunSummary) -> Vec<Line> {
    let mut worst_identity = 0.0f64;
    let mut evaluated = 0;
    let mut i = 0u64;
    while evaluated < 1000 {
        let mut s = DrawKey::new(109, i).stream();
        i += 1;
        let l = 2 + (s.next_unit() * 11.0) as usize;
        let omega: Vec<f64> = (0..l).map(|_| s.next_unit()).collect();
        let inst = QGraphInstance::new(omega).unwrap();
        let e = 1e-3 + 4.0 * PI * PI * s.next_unit();
        if inst.check_energy(e).is_err() {
            continue;
        }
        let c = scalar_factor(e);
        let mut a = jacobi_eigen(m_matrix(&inst, e).unwrap()).values;
        let mut b: Vec<f64> = dense_spectrum(&reduced_operator(&inst, e).unwrap())
            .unwrap()
            .values
            .iter()
            .map(|x| c * x)
            .collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            worst_identity = worst_identity.max((x - y).abs() / x.abs().max(y.abs()).max(1.0));
        }
        evaluated += 1;
    }
    let mut worst_root = 0.0f64;
    let mut count_ok = true;
    for l in [5usize, 7, 10] {
        let inst = QGraphInstance::new(vec![0.0; l]).unwrap();
        let e_max = PI * PI - DEFAULT_EXCLUSION;
        let got = graph_eigenvalues(&inst, 1e-9, e_max, 1e-11).unwrap();
        let want = free_graph_roots(l, e_max);
        count_ok &= got.len() == want.len();
        for (g, w) in got.iter().zip(&want) {
            worst_root = worst_root.max((g.energy - w).abs());
        }
    }
    let (slope_ok, detail) = suite_checks(suite, "qgraph-minami");
    vec![
        line(
            "14a",
            "graph scalar-factor spectral identity",
            worst_identity <= 1e-10,
            format!("{evaluated} (omega, E), max relative error={worst_identity:.2e}"),
        ),
        line(
            "14b",
            "free graph roots",
            count_ok && worst_root <= 1e-8,
            format!(
                "root counts {}, max error={worst_root:.2e}",
                if count_ok { "match" } else { "DIFFER" }
            ),
        ),
        line("14c", "graph Minami k=2 slope", slope_ok, detail),
    ]
}

/// Mirror-symmetric wells separated by a barrier: the lowest pair is split
/// only by tunnelling.
fn double_well(key: DrawKey) -> TridiagonalOperator {
    let l = 60;
    let mut s = key.stream();
    let half: Vec<f64> = (0..l / 2)
        .map(|n| {
            if n >= 25 {
                6.0
            } else {
                2.0 * s.next_unit() - 1.0
            }
        })
        .collect();
    let diag: Vec<f64> = half.iter().chain(half.iter().rev()).copied().collect();
    TridiagonalOperator::new(diag, vec![1.0; l - 1]).unwrap()
}

fn c15_split_box() -> Line {
    let mut worst = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut ratios = Vec::new();
    let mut all_found = true;
    for w in 0..20u64 {
        let h = double_well(DrawKey::new(110, w));
        let e0 = eigenvalue_by_index(&h, 0, 1e-15);
        let e1 = eigenvalue_by_index(&h, 1, 1e-15);
        worst_gap = worst_gap.max(e1 - e0);
        let mid = 0.5 * (e0 + e1);
        match split_box_search(&h, mid, 1e-8, 1, 1e-4).unwrap() {
            SplitOutcome::Found(r) => {
                worst = worst.max(r.distance());
                ratios.push(r.bound_ratio);
            }
            SplitOutcome::NotFound(best) => {
                all_found = false;
                worst = worst.max(best.map_or(f64::INFINITY, |b| b.distance()));
            }
        }
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    line(
        "15",
        "split-box search on double wells",
        all_found && worst_gap < 1e-8 && worst <= 1e-4,
        format!("max gap={worst_gap:.1e}, max distance={worst:.2e}, reported max d/(eps L^4)={max_ratio:.2e}"),
    )
}

/// Every output file, with report wall times zeroed.
fn normalized_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let bytes = std::fs::read(&path).unwrap();
        let bytes = if name.ends_with(".json") {
            let r = ProbeReport::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap();
            r.stripped().to_json().into_bytes()
        } else {
            bytes
        };
        out.insert(name, bytes);
    }
    out
}

fn c16_determinism(dirs: &[(&str, PathBuf)]) -> Line {
    let base = normalized_outputs(&dirs[0].1);
    let mut differences = Vec::new();
    for (label, d) in &dirs[1..] {
        let other = normalized_outputs(d);
        if other.keys().ne(base.keys()) {
            differences.push(format!("{label}: file sets differ"));
            continue;
        }
        for (k, v) in &base {
            if other[k] != *v {
                differences.push(format!("{label}: {k}"));
            }
        }
    }
    let labels: Vec<&str> = dirs.iter().map(|d| d.0).collect();
    line(
        "16",
        "suite determinism",
        differences.is_empty() && !base.is_empty(),
        if differences.is_empty() {
            format!(
                "{} files identical across {}",
                base.len(),
                labels.join(", ")
            )
        } else {
            format!("differences: {}", differences.join("; "))
        },
    )
}

fn guarded(id: &'static str, title: &'static str, f: impl FnOnce() -> Vec<Line>) -> Vec<Line> {
    let start = Instant::now();
    let mut lines = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(l) => l,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            vec![line(id, title, false, format!("panicked: {msg}"))]
        }
    };
    let secs = start.elapsed().as_secs_f64();
    for l in &mut lines {
        l.detail.push_str(&format!(" ({secs:.1}s)"));
    }
    lines
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |n: &str| tmp.path().join(n);
    let mut lines = Vec::new();
    let mut emit = |new: Vec<Line>| {
        for l in new {
            println!(
                "[{}] {:>3} {}: {}",
                if l.passed { "PASS" } else { "FAIL" },
                l.id,
                l.title,
                l.detail
            );
            lines.push(l);
        }
    };

    emit(guarded("1", "Sturm counts vs dense oracle", || {
        vec![c1_oracle()]
    }));
    emit(guarded("2", "free Laplacian IDS", || vec![c2_free_ids()]));
    emit(guarded("3", "hopping spectral symmetry", || {
        vec![c3_hopping_symmetry()]
    }));
    emit(guarded("4", "Wronskian recursion and angle bound", || {
        vec![c4_wronskian()]
    }));
    emit(guarded(
        "5",
        "Hellmann-Feynman gradients and radial identity",
        || vec![c5_hellmann_feynman()],
    ));

    let start = Instant::now();
    let suite = run_suite(8, dir("w8"));
    println!(
        "       suite run with 8 workers: {:.1}s",
        start.elapsed().as_secs_f64()
    );
    let from_suite = |id: &'static str, title: &'static str, probes: &[&str]| {
        let mut passed = true;
        let mut details = Vec::new();
        for p in probes {
            let (ok, d) = suite_checks(&suite, p);
            passed &= ok;
            details.push(format!("{p}: {d}"));
        }
        line(id, title, passed, details.join("; "))
    };
    emit(vec![from_suite("6", "Wegner slope", &["wegner-anderson"])]);
    emit(vec![
        from_suite("7a", "Minami slope, Anderson", &["minami-anderson"]),
        from_suite(
            "7b",
            "Minami slope, hopping band edge",
            &["minami-hopping-edge"],
        ),
    ]);
    emit(vec![from_suite(
        "8",
        "decorrelation mirror control",
        &["decorrelation-hopping-mirror"],
    )]);
    emit(vec![from_suite(
        "9",
        "decorrelation factorization",
        &["decorrelation-anderson"],
    )]);
    emit(vec![from_suite(
        "10",
        "Poisson level statistics",
        &["level-statistics-anderson"],
    )]);
    emit(vec![from_suite(
        "11",
        "two-energy independence",
        &["joint-independence-anderson"],
    )]);
    emit(vec![{
        let mut l = from_suite("12", "spacing law", &["spacing-anderson"]);
        let r = report(&suite, "spacing-anderson");
        l.detail.push_str(&format!(
            " eigenvalues/draw={:.1}",
            r.value("eigenvalues_per_draw").unwrap_or(0.0)
        ));
        l
    }]);
    emit(guarded(
        "13",
        "dimer traces, classes, Lyapunov and Hölder",
        || vec![c13_dimer()],
    ));
    emit(guarded("14", "quantum graph", || c14_qgraph(&suite)));
    emit(guarded("15", "split-box search on double wells", || {
        vec![c15_split_box()]
    }));

    let start = Instant::now();
    run_suite(1, dir("w1"));
    run_suite(8, dir("w8-again"));
    println!(
        "       two more suite runs: {:.1}s",
        start.elapsed().as_secs_f64()
    );
    emit(vec![c16_determinism(&[
        ("workers=8", dir("w8")),
        ("workers=1", dir("w1")),
        ("workers=8 rerun", dir("w8-again")),
    ])]);

    let failed: Vec<&str> = lines.iter().filter(|l| !l.passed).map(|l| l.id).collect();
    println!(
        "acceptance: {} of {} lines pass{}",
        lines.len() - failed.len(),
        lines.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {}", failed.join(", "))
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
