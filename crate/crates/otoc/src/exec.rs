//! Parallel executor and worker-count resolution.

use rayon::prelude::*;

use otoc_core::ensemble::{Ensemble, Executor};

use crate::error::CliError;

pub const WORKERS_ENV: &str = "OTOC_WORKERS";

/// Runs ensemble items on a private rayon pool. Results come back in index
/// order, so the reduction (and every output file) is independent of the
/// worker count.
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    pub fn new(workers: usize) -> Result<Self, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| CliError::Validation(format!("cannot start {workers} workers: {e}")))?;
        Ok(Parallel { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Parallel {
    fn run_all<E: Ensemble>(&self, ensemble: &E) -> otoc_core::Result<Vec<E::Item>> {
        let results: Vec<otoc_core::Result<E::Item>> = self.pool.install(|| {
            (0..ensemble.len())
                .into_par_iter()
                .map(|i| ensemble.run(i))
                .collect()
        });
        results.into_iter().collect()
    }
}

/// Flag, then `OTOC_WORKERS`, then the config, then the machine.
pub fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return positive(n, "--workers");
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n = v.trim().parse::<usize>().map_err(|_| {
            CliError::Validation(format!("{WORKERS_ENV}=`{v}` is not a worker count"))
        })?;
        return positive(n, WORKERS_ENV);
    }
    if let Some(n) = config {
        return positive(n, "run.workers");
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn positive(n: usize, what: &str) -> Result<usize, CliError> {
    if n == 0 {
        return Err(CliError::Validation(format!(
            "{what}: need at least one worker"
        )));
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use otoc_core::ensemble::{FnEnsemble, Serial};

    #[test]
    fn order_and_first_error_match_serial() {
        let e = FnEnsemble::new(100, |i| Ok(i * i));
        let par = Parallel::new(4).unwrap();
        assert_eq!(par.run_all(&e).unwrap(), Serial.run_all(&e).unwrap());
        let failing = FnEnsemble::new(50, |i| {
            if i % 7 == 3 {
                Err(otoc_core::Error::Diverged {
                    index: i,
                    time: 0.0,
                })
            } else {
                Ok(i)
            }
        });
        assert_eq!(
            par.run_all(&failing).unwrap_err(),
            otoc_core::Error::Diverged {
                index: 3,
                time: 0.0
            }
        );
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(resolve_workers(Some(0), None).is_err());
        assert_eq!(resolve_workers(Some(3), Some(9)).unwrap(), 3);
    }
}
