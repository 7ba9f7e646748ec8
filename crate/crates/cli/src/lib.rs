//! Config-driven experiment runner for `jacobi-lab`.

pub mod config;
pub mod registry;
pub mod runner;

/// Default worker count when neither the command line nor the config sets one.
pub const WORKERS_ENV: &str = "JACOBI_LAB_WORKERS";

/// Command line, then config, then [`WORKERS_ENV`], then the machine's
/// available parallelism.
pub fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> Result<usize, String> {
    if let Some(w) = flag.or(config) {
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(format!("{WORKERS_ENV}={v} is not a positive integer")),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
