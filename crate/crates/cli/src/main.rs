use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jacobi_lab::exec::Executor;
use jacobi_lab::ids::{estimate_ids, fmt17};
use jacobi_lab::operators::EnsembleSpec;
use jacobi_lab::transfer::lyapunov;
use jacobi_lab_cli::config::{
    parse_family, parse_law, parse_list, parse_profile, ExperimentConfig,
};
use jacobi_lab_cli::registry::{ensemble, COMMON_PARAMS, PROBES};
use jacobi_lab_cli::runner::{run, RunOptions};
use jacobi_lab_cli::{resolve_workers, WORKERS_ENV};

#[derive(Parser)]
#[command(
    name = "jacobi-lab",
    version,
    about = "Monte Carlo probes for random Jacobi operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every probe of a config file.
    Run {
        config: PathBuf,
        /// Evaluate `check.*` ranges and exit nonzero when one fails.
        #[arg(long)]
        check: bool,
        #[arg(long, help = workers_help())]
        workers: Option<usize>,
        /// Output directory; overrides the config's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Describe the registered probes and their parameters.
    ListProbes,
    /// Estimate the integrated density of states on a grid.
    Ids {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        /// Energy grid, e.g. `linspace(-2, 2, 41)`.
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, help = workers_help())]
        workers: Option<usize>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate Lyapunov exponents at a list of energies.
    Lyapunov {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Energies, e.g. `-2.5, -1.5, 0`.
        #[arg(long, allow_hyphen_values = true)]
        energies: String,
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, help = workers_help())]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn workers_help() -> String {
    format!("Worker threads; defaults to ${WORKERS_ENV}, then the number of CPUs")
}

#[derive(Args)]
struct EnsembleArgs {
    /// hopping, anderson, alloy, dimer-sign or qgraph.
    #[arg(long)]
    model: String,
    /// Coupling law, e.g. `uniform(-2, 2)`.
    #[arg(long, allow_hyphen_values = true)]
    law: String,
    #[arg(long)]
    family: Option<String>,
    /// Alloy profile, e.g. `finite(-1; 0.5, 1, 0.5)`.
    #[arg(long, allow_hyphen_values = true)]
    profile: Option<String>,
    #[arg(long)]
    range: Option<usize>,
}

impl EnsembleArgs {
    fn spec(&self) -> Result<EnsembleSpec, String> {
        let law = parse_law(&self.law, std::path::Path::new("."))?;
        let family = self.family.as_deref().map(parse_family).transpose()?;
        let profile = self.profile.as_deref().map(parse_profile).transpose()?;
        ensemble(&self.model, law, family, profile, self.range)
    }
}

fn output(path: Option<&PathBuf>) -> std::io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn list_probes() {
    let mut out = String::new();
    for p in PROBES {
        out.push_str(&format!("{}\n  {}\n  tests:\n", p.name, p.summary));
        for r in p.references {
            out.push_str(&format!("    - {r}\n"));
        }
        out.push_str("  parameters:\n");
        for d in p.params {
            out.push_str(&format!("    {:<16} {}\n", d.key, d.doc));
        }
        out.push('\n');
    }
    out.push_str("common parameters:\n");
    for d in COMMON_PARAMS {
        out.push_str(&format!("  {:<16} {}\n", d.key, d.doc));
    }
    print!("{out}");
}

fn execute(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run {
            config,
            check,
            workers,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
            let workers = resolve_workers(workers, cfg.workers)?;
            let out = out
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| PathBuf::from("results"));
            let summary = run(
                &cfg,
                &RunOptions {
                    workers,
                    out,
                    check,
                },
            )
            .map_err(|e| e.to_string())?;
            for o in &summary.outcomes {
                match &o.result {
                    Ok(r) => println!("{:<28} {:<20} ok     {:.1}s", o.name, o.kind, r.runtime_s),
                    Err(e) => println!("{:<28} {:<20} error  {e}", o.name, o.kind),
                }
                if check {
                    for c in &o.checks {
                        let v = c
                            .value
                            .map_or("undefined".to_string(), |v| format!("{v:.6}"));
                        let verdict = if c.passed { "pass" } else { "FAIL" };
                        println!(
                            "    {verdict} {} = {v} in {}",
                            c.check.label,
                            c.check.range()
                        );
                    }
                }
            }
            println!("summary: {}", summary.summary_path.display());
            Ok(ExitCode::from(summary.exit_code() as u8))
        }
        Command::ListProbes => {
            list_probes();
            Ok(ExitCode::SUCCESS)
        }
        Command::Ids {
            ensemble,
            size,
            samples,
            grid,
            seed,
            workers,
            out,
        } => {
            let spec = ensemble.spec()?;
            let grid = parse_list(&grid)?;
            let exec = Executor::new(resolve_workers(workers, None)?).map_err(|e| e.to_string())?;
            let table = estimate_ids(&spec, size, samples, &grid, seed, &exec)
                .map_err(|e| e.to_string())?;
            let w = output(out.as_ref()).map_err(|e| e.to_string())?;
            table.write_csv(w).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Lyapunov {
            ensemble,
            energies,
            steps,
            samples,
            seed,
            workers,
            out,
        } => {
            let spec = ensemble.spec()?;
            let energies = parse_list(&energies)?;
            let exec = Executor::new(resolve_workers(workers, None)?).map_err(|e| e.to_string())?;
            let w = output(out.as_ref()).map_err(|e| e.to_string())?;
            let mut csv = csv::Writer::from_writer(w);
            let io = |e: csv::Error| e.to_string();
            csv.write_record(["energy", "gamma", "stderr", "steps", "samples"])
                .map_err(io)?;
            for e in energies {
                let g =
                    lyapunov(&spec, e, steps, samples, seed, &exec).map_err(|e| e.to_string())?;
                csv.write_record([
                    fmt17(e),
                    fmt17(g.estimate),
                    fmt17(g.stderr),
                    steps.to_string(),
                    samples.to_string(),
                ])
                .map_err(io)?;
            }
            csv.flush().map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
