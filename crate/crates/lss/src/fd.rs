//! Parallel ensemble finite differences. Per-trajectory results are collected
//! in ensemble order before reduction, so the worker count never changes the
//! result.

use lss_core::fd::{central_difference, trajectory_mean_j, EnsembleSide, FdConfig, FdResult};
use lss_core::{MapSystem, Result};
use rayon::prelude::*;

use crate::with_jobs;

fn side<M: MapSystem + ?Sized>(
    sys: &M,
    cfg: &FdConfig,
    s: f64,
    seed: impl Fn(usize) -> u64 + Sync,
) -> Result<EnsembleSide> {
    let samples = (0..cfg.ensemble)
        .into_par_iter()
        .map(|k| trajectory_mean_j(sys, s, cfg.n, cfg.n0, seed(k)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(EnsembleSide::from_samples(&samples))
}

/// Same result as [`lss_core::fd::fd_derivative`], spread over `jobs` threads.
pub fn fd_derivative<M: MapSystem + ?Sized>(sys: &M, cfg: &FdConfig, jobs: usize) -> Result<FdResult> {
    cfg.validate()?;
    with_jobs(jobs, || {
        let plus = side(sys, cfg, cfg.s + cfg.ds, |k| cfg.plus_seed(k))?;
        let minus = side(sys, cfg, cfg.s - cfg.ds, |k| cfg.minus_seed(k))?;
        Ok(central_difference(&plus, &minus, cfg.ds))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lss_core::ShiftedCatMap;

    #[test]
    fn matches_sequential_path_bitwise() {
        let cfg = FdConfig { s: 0.3, ds: 0.05, ensemble: 16, n: 200, n0: 10, seed: 4 };
        let seq = lss_core::fd::fd_derivative(&ShiftedCatMap, &cfg).unwrap();
        for jobs in [1, 3] {
            assert_eq!(fd_derivative(&ShiftedCatMap, &cfg, jobs).unwrap(), seq);
        }
    }
}
