//! Spin-up, trajectory generation, the LSS solve and the derivative estimator.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynsys::{verify_derivatives, DerivativeReport, MapSystem, State};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::solver::{self, LssProblem, TangentSolution};
use crate::stats::derive_seed;

/// One LSS run at a fixed parameter value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunConfig {
    pub s: f64,
    /// Retained trajectory length.
    pub n: usize,
    /// Discarded spin-up steps.
    pub n0: usize,
    pub seed: u64,
    /// Steps dropped from each end of the averaging window. The solve always
    /// covers the full trajectory.
    pub trim: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.s.is_finite() {
            return Err(Error::InvalidConfig(format!("s must be finite, got {}", self.s)));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("n must be at least 2, got {}", self.n)));
        }
        if 2 * self.trim >= self.n {
            return Err(Error::InvalidConfig(format!(
                "trim {} leaves no averaging window for n = {}",
                self.trim, self.n
            )));
        }
        Ok(())
    }
}

/// States `u_1..u_n` on (approximately) the attractor.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub s: f64,
    pub n0: usize,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Draws `u_{-n0}` from the map's sampling box, discards `n0` steps and keeps
/// the next `n` states.
pub fn generate_trajectory<M: MapSystem + ?Sized>(
    sys: &M,
    s: f64,
    n: usize,
    n0: usize,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = sys.sample_initial(s, &mut rng);
    for _ in 0..n0 {
        u = sys.step(&u, s)?;
    }
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        u = sys.step(&u, s)?;
        states.push(u.clone());
    }
    Ok(Trajectory { states, s, n0, seed })
}

/// Jacobians and parameter derivatives at `u_1..u_{n-1}`.
pub fn linearize<M: MapSystem + ?Sized>(sys: &M, traj: &Trajectory) -> Result<LssProblem> {
    let last = traj.len().saturating_sub(1);
    let (jacobians, param_derivs) = traj.states[..last]
        .iter()
        .map(|u| Ok((sys.jacobian(u, traj.s)?, sys.param_deriv(u, traj.s)?)))
        .collect::<Result<(Vec<_>, Vec<_>)>>()?;
    LssProblem::new(sys.dim(), jacobians, param_derivs)
}

/// Window averages of `DJ v + dJ/ds` and of `J`.
pub fn estimate_from_tangent<M: MapSystem + ?Sized>(
    sys: &M,
    traj: &Trajectory,
    v: &[Vec<f64>],
    trim: usize,
) -> Result<(f64, f64)> {
    let n = traj.len();
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    if 2 * trim >= n {
        return Err(Error::InvalidConfig(format!("trim {trim} too large for n = {n}")));
    }
    let window = trim..n - trim;
    let count = window.len() as f64;
    let (mut deriv, mut objective) = (0.0, 0.0);
    for i in window {
        let u = &traj.states[i];
        let grad = sys.objective_grad(u, traj.s)?;
        deriv += dot(&grad.du, &v[i]) + grad.ds;
        objective += sys.objective(u, traj.s)?;
    }
    Ok((deriv / count, objective / count))
}

/// Result of the estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sensitivity {
    /// `d<J>/ds`
    pub estimate: f64,
    /// Average of `J` over the same window.
    pub mean_j: f64,
    pub constraint_residual: f64,
}

/// Everything produced by one run, for callers that need the tangent.
#[derive(Clone, Debug)]
pub struct LssRun {
    pub trajectory: Trajectory,
    pub solution: TangentSolution,
    pub sensitivity: Sensitivity,
}

pub fn run_lss<M: MapSystem + ?Sized>(sys: &M, cfg: &RunConfig) -> Result<LssRun> {
    cfg.validate()?;
    let trajectory = generate_trajectory(sys, cfg.s, cfg.n, cfg.n0, cfg.seed)?;
    let problem = linearize(sys, &trajectory)?;
    let solution = solver::solve(&problem)?;
    let (estimate, mean_j) = estimate_from_tangent(sys, &trajectory, &solution.v, cfg.trim)?;
    if !estimate.is_finite() || !mean_j.is_finite() {
        return Err(Error::NonFiniteState("estimator"));
    }
    let sensitivity = Sensitivity {
        estimate,
        mean_j,
        constraint_residual: solution.constraint_residual,
    };
    Ok(LssRun {
        trajectory,
        solution,
        sensitivity,
    })
}

/// `d<J>/ds` by least squares shadowing.
pub fn compute_sensitivity<M: MapSystem + ?Sized>(sys: &M, cfg: &RunConfig) -> Result<Sensitivity> {
    run_lss(sys, cfg).map(|r| r.sensitivity)
}

/// Independent attractor points: each is the end of its own spun-up orbit.
pub fn attractor_samples<M: MapSystem + ?Sized>(
    sys: &M,
    s: f64,
    count: usize,
    n0: usize,
    seed: u64,
) -> Result<Vec<State>> {
    (0..count as u64)
        .map(|k| {
            let traj = generate_trajectory(sys, s, 1, n0, derive_seed(seed, k))?;
            Ok(traj.states.into_iter().next().expect("one state"))
        })
        .collect()
}

/// Worst-case [`verify_derivatives`] report over `points` attractor samples.
pub fn verify_on_attractor<M: MapSystem + ?Sized>(
    sys: &M,
    s: f64,
    points: usize,
    h: f64,
    seed: u64,
) -> Result<DerivativeReport> {
    let mut worst = DerivativeReport::default();
    for u in attractor_samples(sys, s, points, sys.default_spinup(), seed)? {
        let r = verify_derivatives(sys, &u, s, h)?;
        worst.max_rel_err_jac = worst.max_rel_err_jac.max(r.max_rel_err_jac);
        worst.max_rel_err_paramderiv = worst.max_rel_err_paramderiv.max(r.max_rel_err_paramderiv);
        worst.max_rel_err_objgrad = worst.max_rel_err_objgrad.max(r.max_rel_err_objgrad);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::AffineContractionMap;

    fn cfg(n: usize, trim: usize) -> RunConfig {
        RunConfig { s: 1.0, n, n0: 60, seed: 1, trim }
    }

    #[test]
    fn affine_trajectory_sits_on_fixed_point() {
        let sys = AffineContractionMap::new(0.5).unwrap();
        let t = generate_trajectory(&sys, 1.0, 20, 60, 9).unwrap();
        assert!((t.states[0][0] - 2.0).abs() <= 1e-15);
        assert!(t.states.iter().all(|u| u[0] == t.states[0][0]));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1, 0).validate().is_err());
        assert!(cfg(10, 5).validate().is_err());
        assert!(cfg(10, 4).validate().is_ok());
        let mut c = cfg(10, 0);
        c.s = f64::NAN;
        assert!(c.validate().is_err());
    }

    #[test]
    fn trajectories_are_deterministic() {
        let sys = crate::maps::SolenoidMap;
        let a = generate_trajectory(&sys, 1.0, 200, 100, 42).unwrap();
        let b = generate_trajectory(&sys, 1.0, 200, 100, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_trajectory(&sys, 1.0, 200, 100, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn estimator_rejects_mismatched_tangent() {
        let sys = AffineContractionMap::new(0.5).unwrap();
        let t = generate_trajectory(&sys, 1.0, 5, 60, 1).unwrap();
        assert!(estimate_from_tangent(&sys, &t, &[], 0).is_err());
    }
}
