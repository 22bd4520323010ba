//! Ensemble finite-difference reference derivative.
//!
//! Each side of the central difference averages `J` over `ensemble`
//! independent trajectories. The two sides draw from disjoint seed streams so
//! the standard error of the difference is the quadrature sum of the two
//! standard errors of the means.

use alloc::format;
use alloc::vec::Vec;

use crate::dynsys::MapSystem;
use crate::error::{Error, Result};
use crate::pipeline::generate_trajectory;
use crate::stats::{derive_seed, mean, sample_variance};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdConfig {
    pub s: f64,
    /// Half step; the two sides sit at `s + ds` and `s - ds`.
    pub ds: f64,
    /// Trajectories per side.
    pub ensemble: usize,
    pub n: usize,
    pub n0: usize,
    pub seed: u64,
}

impl FdConfig {
    pub const DEFAULT_DS: f64 = 0.05;

    pub fn validate(&self) -> Result<()> {
        if !self.ds.is_finite() || self.ds <= 0.0 {
            return Err(Error::InvalidConfig(format!("ds must be positive, got {}", self.ds)));
        }
        if self.ensemble < 2 {
            return Err(Error::InvalidConfig(format!(
                "ensemble must be at least 2, got {}",
                self.ensemble
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if !self.s.is_finite() {
            return Err(Error::InvalidConfig(format!("s must be finite, got {}", self.s)));
        }
        Ok(())
    }

    /// Seed of ensemble member `k` on the `+ds` side.
    pub fn plus_seed(&self, k: usize) -> u64 {
        derive_seed(self.seed, 2 * k as u64)
    }

    /// Seed of ensemble member `k` on the `-ds` side.
    pub fn minus_seed(&self, k: usize) -> u64 {
        derive_seed(self.seed, 2 * k as u64 + 1)
    }
}

/// Time average of `J` over `u_1..u_n`.
pub fn trajectory_mean_j<M: MapSystem + ?Sized>(
    sys: &M,
    s: f64,
    n: usize,
    n0: usize,
    seed: u64,
) -> Result<f64> {
    let traj = generate_trajectory(sys, s, n, n0, seed)?;
    let mut total = 0.0;
    for u in &traj.states {
        total += sys.objective(u, s)?;
    }
    Ok(total / n as f64)
}

/// Sample summary of one side of the difference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleSide {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

impl EnsembleSide {
    /// Summarizes per-trajectory means, in the given order.
    pub fn from_samples(samples: &[f64]) -> Self {
        Self {
            mean: mean(samples),
            variance: sample_variance(samples),
            count: samples.len(),
        }
    }

    pub fn standard_error(&self) -> f64 {
        libm::sqrt(self.variance / self.count as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdResult {
    pub estimate: f64,
    pub sigma: f64,
    /// `3 * sigma`
    pub ci3: f64,
}

impl FdResult {
    pub fn contains(&self, value: f64) -> bool {
        (value - self.estimate).abs() <= self.ci3
    }
}

/// `(plus.mean - minus.mean) / (2 ds)` with propagated standard error.
pub fn central_difference(plus: &EnsembleSide, minus: &EnsembleSide, ds: f64) -> FdResult {
    let estimate = (plus.mean - minus.mean) / (2.0 * ds);
    let se = libm::hypot(plus.standard_error(), minus.standard_error());
    let sigma = se / (2.0 * ds);
    FdResult {
        estimate,
        sigma,
        ci3: 3.0 * sigma,
    }
}

/// Sequential ensemble finite difference.
pub fn fd_derivative<M: MapSystem + ?Sized>(sys: &M, cfg: &FdConfig) -> Result<FdResult> {
    cfg.validate()?;
    let side = |s: f64, seed: &dyn Fn(usize) -> u64| -> Result<EnsembleSide> {
        let samples = (0..cfg.ensemble)
            .map(|k| trajectory_mean_j(sys, s, cfg.n, cfg.n0, seed(k)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(EnsembleSide::from_samples(&samples))
    };
    let plus = side(cfg.s + cfg.ds, &|k| cfg.plus_seed(k))?;
    let minus = side(cfg.s - cfg.ds, &|k| cfg.minus_seed(k))?;
    Ok(central_difference(&plus, &minus, cfg.ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::AffineContractionMap;

    #[test]
    fn swapping_sides_negates() {
        let a = EnsembleSide::from_samples(&[1.0, 1.2, 0.9]);
        let b = EnsembleSide::from_samples(&[0.7, 0.8, 0.75, 0.71]);
        let fwd = central_difference(&a, &b, 0.05);
        let rev = central_difference(&b, &a, 0.05);
        assert_eq!(fwd.estimate, -rev.estimate);
        assert_eq!(fwd.sigma, rev.sigma);
    }

    #[test]
    fn affine_difference_is_exact() {
        let sys = AffineContractionMap::new(0.5).unwrap();
        for ds in [0.01, 0.05, 0.3] {
            let cfg = FdConfig { s: 1.0, ds, ensemble: 4, n: 50, n0: 60, seed: 3 };
            let r = fd_derivative(&sys, &cfg).unwrap();
            assert!((r.estimate - 2.0).abs() <= 1e-12, "{r:?}");
            assert!(r.sigma <= 1e-14, "{r:?}");
        }
    }

    #[test]
    fn config_validation() {
        let ok = FdConfig { s: 1.0, ds: 0.05, ensemble: 2, n: 10, n0: 0, seed: 0 };
        assert!(ok.validate().is_ok());
        assert!(FdConfig { ds: 0.0, ..ok }.validate().is_err());
        assert!(FdConfig { ds: -0.1, ..ok }.validate().is_err());
        assert!(FdConfig { ensemble: 1, ..ok }.validate().is_err());
    }

    #[test]
    fn sides_use_disjoint_seeds() {
        let cfg = FdConfig { s: 1.0, ds: 0.05, ensemble: 100, n: 10, n0: 0, seed: 5 };
        let mut all: Vec<u64> = (0..100).flat_map(|k| [cfg.plus_seed(k), cfg.minus_seed(k)]).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 200);
    }
}
