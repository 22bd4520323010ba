//! Desk-scale versions of the three solenoid studies: the shadowing-error
//! profile along one trajectory, an LSS vs finite-difference sweep over `s`,
//! and the convergence of the estimate with trajectory length.
//!
//! Every experiment is a pure function of its configuration. Work is spread
//! over a worker pool but results are always collected in grid order.

use lss_core::fd::FdConfig;
use lss_core::linalg::norm2;
use lss_core::pipeline::{compute_sensitivity, run_lss, RunConfig};
use lss_core::stats::{derive_seed, loglog_fit, mean};
use lss_core::{Error, MapSystem, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{fmt_f64, CsvRecord};
use crate::{fd, with_jobs};

/// Reference value of `d<J>/ds` for the solenoid at `s = 1`, obtained from
/// 1100 LSS runs of length 100000 (99.7% interval +-0.000017).
pub const SOLENOID_TRUTH_S1: f64 = 0.931450;

/// Known `d<J>/ds` for a bundled map, where one exists.
pub fn default_truth(map: &str, s: f64) -> Option<f64> {
    match map {
        "solenoid" if s == 1.0 => Some(SOLENOID_TRUTH_S1),
        "affine" => Some(lss_core::AffineContractionMap::default().exact_derivative()),
        "cat" => Some(0.0),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorProfile {
    pub map: String,
    pub s: f64,
    pub n: usize,
    pub n0: usize,
    pub seed: u64,
    /// `|v_i - v_i^inf|` for `i = 1..n`.
    pub e_norm: Vec<f64>,
}

impl ErrorProfile {
    pub fn min(&self) -> f64 {
        self.e_norm.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest error over the 1-based inclusive index range `[lo, hi]`.
    pub fn max_between(&self, lo: usize, hi: usize) -> f64 {
        self.e_norm[lo - 1..hi].iter().copied().fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<ErrorRow> {
        self.e_norm
            .iter()
            .enumerate()
            .map(|(i, &e_norm)| ErrorRow { i: i + 1, e_norm })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub i: usize,
    pub e_norm: f64,
}

impl CsvRecord for ErrorRow {
    const HEADER: &'static [&'static str] = &["i", "e_norm"];
    fn fields(&self) -> Vec<String> {
        vec![self.i.to_string(), fmt_f64(self.e_norm)]
    }
}

/// Distance between the LSS solution and the analytic shadowing direction at
/// every step of one trajectory.
pub fn error_profile<M: MapSystem + ?Sized>(sys: &M, cfg: &RunConfig) -> Result<ErrorProfile> {
    let probe = vec![1.0; sys.dim()];
    if sys.analytic_shadow_direction(&probe, cfg.s).is_none() {
        return Err(Error::NoAnalyticDirection(sys.name().to_string()));
    }
    let run = run_lss(sys, cfg)?;
    let e_norm = run
        .trajectory
        .states
        .iter()
        .zip(&run.solution.v)
        .map(|(u, v)| {
            let exact = sys
                .analytic_shadow_direction(u, cfg.s)
                .ok_or_else(|| Error::NoAnalyticDirection(sys.name().to_string()))??;
            let diff: Vec<f64> = v.iter().zip(&exact).map(|(a, b)| a - b).collect();
            Ok(norm2(&diff))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ErrorProfile {
        map: sys.name().to_string(),
        s: cfg.s,
        n: cfg.n,
        n0: cfg.n0,
        seed: cfg.seed,
        e_norm,
    })
}

/// Settings of the finite-difference reference computed once per `s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FdSettings {
    pub ds: f64,
    pub ensemble: usize,
    pub n: usize,
    pub n0: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepConfig {
    pub s_values: Vec<f64>,
    pub n: usize,
    pub n0: usize,
    pub reps: usize,
    pub seed: u64,
    pub trim: usize,
    pub fd: FdSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub s: f64,
    pub n: usize,
    pub rep: usize,
    pub lss_estimate: f64,
    pub fd_estimate: f64,
    pub fd_ci3: f64,
}

impl CsvRecord for SweepRow {
    const HEADER: &'static [&'static str] =
        &["s", "n", "rep", "lss_estimate", "fd_estimate", "fd_ci3"];
    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.s),
            self.n.to_string(),
            self.rep.to_string(),
            fmt_f64(self.lss_estimate),
            fmt_f64(self.fd_estimate),
            fmt_f64(self.fd_ci3),
        ]
    }
}

impl SweepConfig {
    pub fn run_config(&self, s_index: usize, rep: usize) -> RunConfig {
        RunConfig {
            s: self.s_values[s_index],
            n: self.n,
            n0: self.n0,
            seed: derive_seed(derive_seed(self.seed, s_index as u64), rep as u64),
            trim: self.trim,
        }
    }

    pub fn fd_config(&self, s_index: usize) -> FdConfig {
        FdConfig {
            s: self.s_values[s_index],
            ds: self.fd.ds,
            ensemble: self.fd.ensemble,
            n: self.fd.n,
            n0: self.fd.n0,
            seed: derive_seed(self.seed ^ 0xFD00_0000_0000_0000, s_index as u64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one s value".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be positive".into()));
        }
        for i in 0..self.s_values.len() {
            self.run_config(i, 0).validate()?;
            self.fd_config(i).validate()?;
        }
        Ok(())
    }
}

/// LSS estimates at every `(s, rep)` next to one finite-difference reference
/// per `s`. Rows are ordered by `s` index, then repetition.
pub fn sweep<M: MapSystem + ?Sized>(sys: &M, cfg: &SweepConfig, jobs: usize) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let fds = cfg
        .s_values
        .iter()
        .enumerate()
        .map(|(i, _)| fd::fd_derivative(sys, &cfg.fd_config(i), jobs))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, usize)> = (0..cfg.s_values.len())
        .flat_map(|i| (0..cfg.reps).map(move |r| (i, r)))
        .collect();
    let estimates = with_jobs(jobs, || {
        cells
            .par_iter()
            .map(|&(i, r)| compute_sensitivity(sys, &cfg.run_config(i, r)).map(|x| x.estimate))
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(cells
        .iter()
        .zip(estimates)
        .map(|(&(i, rep), lss_estimate)| SweepRow {
            s: cfg.s_values[i],
            n: cfg.n,
            rep,
            lss_estimate,
            fd_estimate: fds[i].estimate,
            fd_ci3: fds[i].ci3,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceConfig {
    pub s: f64,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub truth: f64,
    pub trim: usize,
    pub n0: usize,
    pub seed: u64,
    /// Inclusive `(n_min, n_max)` ranges to fit slopes over. Empty means the
    /// lower and upper halves of `n_list`.
    pub fit_ranges: Vec<(usize, usize)>,
}

impl ConvergenceConfig {
    /// Repetition `rep` uses the same starting seed at every `n`.
    pub fn run_config(&self, n: usize, rep: usize) -> RunConfig {
        RunConfig {
            s: self.s,
            n,
            n0: self.n0,
            seed: derive_seed(self.seed, rep as u64),
            trim: self.trim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::InvalidConfig("n list is empty".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be positive".into()));
        }
        if !self.truth.is_finite() {
            return Err(Error::InvalidConfig("truth must be finite".into()));
        }
        for &(lo, hi) in &self.fit_ranges {
            if lo >= hi {
                return Err(Error::InvalidConfig(format!("empty fit range {lo}:{hi}")));
            }
        }
        for &n in &self.n_list {
            self.run_config(n, 0).validate()?;
        }
        Ok(())
    }

    fn sorted_ns(&self) -> Vec<usize> {
        let mut ns = self.n_list.clone();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    /// Requested ranges, or the two halves of the (sorted) list.
    pub fn effective_fit_ranges(&self) -> Vec<(usize, usize)> {
        if !self.fit_ranges.is_empty() {
            return self.fit_ranges.clone();
        }
        let ns = self.sorted_ns();
        if ns.len() < 4 {
            return vec![(ns[0], *ns.last().unwrap())];
        }
        let half = ns.len().div_ceil(2);
        vec![(ns[0], ns[half - 1]), (ns[ns.len() - half], *ns.last().unwrap())]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub rep: usize,
    pub abs_error: f64,
}

impl CsvRecord for ConvergenceRow {
    const HEADER: &'static [&'static str] = &["n", "rep", "abs_error"];
    fn fields(&self) -> Vec<String> {
        vec![self.n.to_string(), self.rep.to_string(), fmt_f64(self.abs_error)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanErrorRow {
    pub n: usize,
    pub mean_abs_error: f64,
}

impl CsvRecord for MeanErrorRow {
    const HEADER: &'static [&'static str] = &["n", "mean_abs_error"];
    fn fields(&self) -> Vec<String> {
        vec![self.n.to_string(), fmt_f64(self.mean_abs_error)]
    }
}

/// Log-log least-squares slope of mean error against `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub n_min: usize,
    pub n_max: usize,
    pub points: usize,
    pub slope: f64,
    pub correlation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub truth: f64,
    pub rows: Vec<ConvergenceRow>,
    pub means: Vec<MeanErrorRow>,
    pub fits: Vec<SlopeFit>,
}

impl ConvergenceStudy {
    pub fn mean_at(&self, n: usize) -> Option<f64> {
        self.means.iter().find(|r| r.n == n).map(|r| r.mean_abs_error)
    }

    pub fn fit_for(&self, n_min: usize, n_max: usize) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.n_min == n_min && f.n_max == n_max)
    }
}

/// Mean `|estimate - truth|` over `reps` seeds for every `n`, with log-log
/// slopes over the configured ranges. Ranges holding fewer than two distinct
/// `n` are skipped.
pub fn convergence_study<M: MapSystem + ?Sized>(
    sys: &M,
    cfg: &ConvergenceConfig,
    jobs: usize,
) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let ns = cfg.sorted_ns();
    let cells: Vec<(usize, usize)> = ns
        .iter()
        .flat_map(|&n| (0..cfg.reps).map(move |r| (n, r)))
        .collect();
    let errors = with_jobs(jobs, || {
        cells
            .par_iter()
            .map(|&(n, r)| {
                compute_sensitivity(sys, &cfg.run_config(n, r)).map(|x| (x.estimate - cfg.truth).abs())
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let rows: Vec<ConvergenceRow> = cells
        .iter()
        .zip(&errors)
        .map(|(&(n, rep), &abs_error)| ConvergenceRow { n, rep, abs_error })
        .collect();
    let means: Vec<MeanErrorRow> = errors
        .chunks(cfg.reps)
        .zip(&ns)
        .map(|(chunk, &n)| MeanErrorRow { n, mean_abs_error: mean(chunk) })
        .collect();
    let fits = cfg
        .effective_fit_ranges()
        .into_iter()
        .filter_map(|(lo, hi)| {
            let (x, y): (Vec<f64>, Vec<f64>) = means
                .iter()
                .filter(|r| (lo..=hi).contains(&r.n))
                .map(|r| (r.n as f64, r.mean_abs_error))
                .unzip();
            loglog_fit(&x, &y).map(|f| SlopeFit {
                n_min: lo,
                n_max: hi,
                points: x.len(),
                slope: f.slope,
                correlation: f.correlation,
            })
        })
        .collect();
    Ok(ConvergenceStudy {
        truth: cfg.truth,
        rows,
        means,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lss_core::dynsys::RngCore;
    use lss_core::{AffineContractionMap, ShiftedCatMap, SolenoidMap};

    #[test]
    fn profile_needs_analytic_direction() {
        struct NoDirection;
        impl MapSystem for NoDirection {
            fn name(&self) -> &str {
                "plain"
            }
            fn dim(&self) -> usize {
                1
            }
            fn step(&self, u: &[f64], s: f64) -> Result<lss_core::State> {
                AffineContractionMap::default().step(u, s)
            }
            fn jacobian(&self, u: &[f64], s: f64) -> Result<lss_core::Mat> {
                AffineContractionMap::default().jacobian(u, s)
            }
            fn param_deriv(&self, u: &[f64], s: f64) -> Result<Vec<f64>> {
                AffineContractionMap::default().param_deriv(u, s)
            }
            fn objective(&self, u: &[f64], s: f64) -> Result<f64> {
                AffineContractionMap::default().objective(u, s)
            }
            fn objective_grad(&self, u: &[f64], s: f64) -> Result<lss_core::ObjectiveGradient> {
                AffineContractionMap::default().objective_grad(u, s)
            }
            fn sample_initial(&self, s: f64, rng: &mut dyn RngCore) -> lss_core::State {
                AffineContractionMap::default().sample_initial(s, rng)
            }
        }
        let cfg = RunConfig { s: 1.0, n: 10, n0: 10, seed: 0, trim: 0 };
        assert!(matches!(error_profile(&NoDirection, &cfg), Err(Error::NoAnalyticDirection(_))));
    }

    #[test]
    fn profile_decays_in_the_middle() {
        let cfg = RunConfig { s: 2.0, n: 100, n0: 1000, seed: 3, trim: 0 };
        let p = error_profile(&SolenoidMap, &cfg).unwrap();
        assert_eq!(p.e_norm.len(), 100);
        assert!(p.min() <= 1e-10);
        assert!(p.max_between(34, 67) <= 1e-6);
        assert_eq!(p.rows()[0].i, 1);
    }

    #[test]
    fn default_halves() {
        let cfg = ConvergenceConfig {
            s: 1.0,
            n_list: vec![800, 100, 400, 200, 200],
            reps: 1,
            truth: 0.0,
            trim: 0,
            n0: 0,
            seed: 0,
            fit_ranges: vec![],
        };
        assert_eq!(cfg.effective_fit_ranges(), vec![(100, 200), (400, 800)]);
        let odd = ConvergenceConfig { n_list: vec![1, 2, 3, 4, 5], ..cfg.clone() };
        assert_eq!(odd.effective_fit_ranges(), vec![(1, 3), (3, 5)]);
        let short = ConvergenceConfig { n_list: vec![10, 20], ..cfg };
        assert_eq!(short.effective_fit_ranges(), vec![(10, 20)]);
    }

    #[test]
    fn sweep_rows_are_ordered_and_jobs_invariant() {
        let cfg = SweepConfig {
            s_values: vec![0.1, 0.3],
            n: 200,
            n0: 20,
            reps: 3,
            seed: 9,
            trim: 0,
            fd: FdSettings { ds: 0.05, ensemble: 8, n: 100, n0: 10 },
        };
        let a = sweep(&ShiftedCatMap, &cfg, 1).unwrap();
        let b = sweep(&ShiftedCatMap, &cfg, 4).unwrap();
        assert_eq!(a, b);
        let keys: Vec<(f64, usize)> = a.iter().map(|r| (r.s, r.rep)).collect();
        assert_eq!(keys, vec![(0.1, 0), (0.1, 1), (0.1, 2), (0.3, 0), (0.3, 1), (0.3, 2)]);
    }

    #[test]
    fn invalid_experiment_configs() {
        let cfg = ConvergenceConfig {
            s: 1.0,
            n_list: vec![],
            reps: 1,
            truth: 0.0,
            trim: 0,
            n0: 0,
            seed: 0,
            fit_ranges: vec![],
        };
        assert!(convergence_study(&SolenoidMap, &cfg, 1).is_err());
        let cfg = ConvergenceConfig { n_list: vec![30], trim: 15, ..cfg };
        assert!(cfg.validate().is_err());
        let cfg = ConvergenceConfig { n_list: vec![30], trim: 0, fit_ranges: vec![(5, 5)], ..cfg };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn truth_defaults() {
        assert_eq!(default_truth("solenoid", 1.0), Some(0.931450));
        assert_eq!(default_truth("solenoid", 1.1), None);
        assert_eq!(default_truth("affine", 3.0), Some(2.0));
        assert_eq!(default_truth("cat", 0.3), Some(0.0));
    }
}
