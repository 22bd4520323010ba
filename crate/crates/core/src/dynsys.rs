//! The parameterized map contract consumed by the solver and pipeline.

use alloc::vec::Vec;
use core::ops::Deref;

pub use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// A point in state space, always stored in Cartesian coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct State(Vec<f64>);

impl State {
    /// Wraps coordinates, rejecting NaN/Inf.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().all(|x| x.is_finite()) {
            Ok(Self(coords))
        } else {
            Err(Error::NonFiniteState("state coordinates"))
        }
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for State {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `DJ` (a row vector) and `dJ/ds` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveGradient {
    pub du: Vec<f64>,
    pub ds: f64,
}

/// A parameterized map `u' = f(u, s)` with objective `J(u, s)` and their
/// analytic derivatives.
///
/// Implementations are pure functions of immutable configuration, so a single
/// instance can be shared between worker threads. The dimension is fixed at
/// construction. Derivatives are always supplied analytically; finite
/// differences only appear in [`verify_derivatives`].
pub trait MapSystem: Send + Sync {
    /// Name used by the CLI and config files.
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn step(&self, u: &[f64], s: f64) -> Result<State>;

    /// `Df(u, s)`, an `m x m` matrix.
    fn jacobian(&self, u: &[f64], s: f64) -> Result<Mat>;

    /// `df/ds(u, s)`, an `m`-vector.
    fn param_deriv(&self, u: &[f64], s: f64) -> Result<Vec<f64>>;

    fn objective(&self, u: &[f64], s: f64) -> Result<f64>;

    fn objective_grad(&self, u: &[f64], s: f64) -> Result<ObjectiveGradient>;

    /// Closed-form shadowing direction at `u`, for the few maps that have one.
    fn analytic_shadow_direction(&self, _u: &[f64], _s: f64) -> Option<Result<Vec<f64>>> {
        None
    }

    /// Draws a starting point from the map's sampling box.
    fn sample_initial(&self, s: f64, rng: &mut dyn RngCore) -> State;

    /// Spin-up length used when the caller does not pick one.
    fn default_spinup(&self) -> usize {
        1000
    }
}

impl<M: MapSystem + ?Sized> MapSystem for &M {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn step(&self, u: &[f64], s: f64) -> Result<State> {
        (**self).step(u, s)
    }
    fn jacobian(&self, u: &[f64], s: f64) -> Result<Mat> {
        (**self).jacobian(u, s)
    }
    fn param_deriv(&self, u: &[f64], s: f64) -> Result<Vec<f64>> {
        (**self).param_deriv(u, s)
    }
    fn objective(&self, u: &[f64], s: f64) -> Result<f64> {
        (**self).objective(u, s)
    }
    fn objective_grad(&self, u: &[f64], s: f64) -> Result<ObjectiveGradient> {
        (**self).objective_grad(u, s)
    }
    fn analytic_shadow_direction(&self, u: &[f64], s: f64) -> Option<Result<Vec<f64>>> {
        (**self).analytic_shadow_direction(u, s)
    }
    fn sample_initial(&self, s: f64, rng: &mut dyn RngCore) -> State {
        (**self).sample_initial(s, rng)
    }
    fn default_spinup(&self) -> usize {
        (**self).default_spinup()
    }
}

/// Largest relative discrepancies between analytic derivatives and central
/// differences. Each entry is compared as `|a - fd| / max(1, |a|)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DerivativeReport {
    pub max_rel_err_jac: f64,
    pub max_rel_err_paramderiv: f64,
    pub max_rel_err_objgrad: f64,
}

impl DerivativeReport {
    pub fn max(&self) -> f64 {
        self.max_rel_err_jac
            .max(self.max_rel_err_paramderiv)
            .max(self.max_rel_err_objgrad)
    }
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(1.0)
}

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFiniteState("derivative evaluation"))
    }
}

/// Checks every analytic derivative of `sys` at `(u, s)` against central
/// differences with step `h`.
pub fn verify_derivatives<M: MapSystem + ?Sized>(
    sys: &M,
    u: &[f64],
    s: f64,
    h: f64,
) -> Result<DerivativeReport> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidConfig("finite-difference step must be positive".into()));
    }
    let m = sys.dim();
    if u.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: u.len() });
    }
    if !u.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFiniteState("basepoint"));
    }

    let jac = sys.jacobian(u, s)?;
    let dfds = sys.param_deriv(u, s)?;
    let grad = sys.objective_grad(u, s)?;
    if !jac.is_finite() || !dfds.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFiniteState("analytic derivative"));
    }

    let mut report = DerivativeReport::default();
    let mut probe = u.to_vec();
    for j in 0..m {
        probe[j] = u[j] + h;
        let fp = sys.step(&probe, s)?;
        let jp = sys.objective(&probe, s)?;
        probe[j] = u[j] - h;
        let fm = sys.step(&probe, s)?;
        let jm = sys.objective(&probe, s)?;
        probe[j] = u[j];
        for i in 0..m {
            let fd = finite((fp[i] - fm[i]) / (2.0 * h))?;
            report.max_rel_err_jac = report.max_rel_err_jac.max(rel_err(jac[(i, j)], fd));
        }
        let fd = finite((jp - jm) / (2.0 * h))?;
        report.max_rel_err_objgrad = report.max_rel_err_objgrad.max(rel_err(grad.du[j], fd));
    }

    let fp = sys.step(u, s + h)?;
    let fm = sys.step(u, s - h)?;
    for i in 0..m {
        let fd = finite((fp[i] - fm[i]) / (2.0 * h))?;
        report.max_rel_err_paramderiv = report.max_rel_err_paramderiv.max(rel_err(dfds[i], fd));
    }
    let fd = finite((sys.objective(u, s + h)? - sys.objective(u, s - h)?) / (2.0 * h))?;
    report.max_rel_err_objgrad = report.max_rel_err_objgrad.max(rel_err(grad.ds, fd));

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::AffineContractionMap;
    use alloc::vec;

    /// Affine map with one Jacobian entry knocked off by 1e-2.
    struct Faulty(AffineContractionMap);

    impl MapSystem for Faulty {
        fn name(&self) -> &str {
            "faulty"
        }
        fn dim(&self) -> usize {
            1
        }
        fn step(&self, u: &[f64], s: f64) -> Result<State> {
            self.0.step(u, s)
        }
        fn jacobian(&self, u: &[f64], s: f64) -> Result<Mat> {
            let mut j = self.0.jacobian(u, s)?;
            j[(0, 0)] += 1e-2;
            Ok(j)
        }
        fn param_deriv(&self, u: &[f64], s: f64) -> Result<Vec<f64>> {
            self.0.param_deriv(u, s)
        }
        fn objective(&self, u: &[f64], s: f64) -> Result<f64> {
            self.0.objective(u, s)
        }
        fn objective_grad(&self, u: &[f64], s: f64) -> Result<ObjectiveGradient> {
            self.0.objective_grad(u, s)
        }
        fn sample_initial(&self, s: f64, rng: &mut dyn RngCore) -> State {
            self.0.sample_initial(s, rng)
        }
    }

    #[test]
    fn affine_differences_are_exact_on_representable_points() {
        let sys = AffineContractionMap::new(0.5).unwrap();
        let r = verify_derivatives(&sys, &[0.0], 0.0, 1e-6).unwrap();
        assert!(r.max() <= 1e-12, "{r:?}");
        // dyadic basepoint and step keep every operation exact
        let r = verify_derivatives(&sys, &[0.75], 1.0, libm::ldexp(1.0, -20)).unwrap();
        assert!(r.max() <= 1e-12, "{r:?}");
    }

    #[test]
    fn affine_differences_hit_roundoff_floor_elsewhere() {
        let sys = AffineContractionMap::new(0.5).unwrap();
        for &u in &[-3.7, 0.3, 1.9, 12.5] {
            let r = verify_derivatives(&sys, &[u], 1.3, 1e-6).unwrap();
            assert!(r.max() <= 1e-8, "{u}: {r:?}");
        }
    }

    #[test]
    fn injected_jacobian_fault_is_detected() {
        let sys = Faulty(AffineContractionMap::new(0.5).unwrap());
        let r = verify_derivatives(&sys, &[0.3], 1.0, 1e-6).unwrap();
        assert!(r.max_rel_err_jac >= 1e-3);
        assert!(r.max_rel_err_paramderiv <= 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let sys = AffineContractionMap::new(0.5).unwrap();
        assert!(matches!(
            verify_derivatives(&sys, &[0.0], 0.0, 0.0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            verify_derivatives(&sys, &[f64::NAN], 0.0, 1e-6),
            Err(Error::NonFiniteState(_))
        ));
        assert!(matches!(
            verify_derivatives(&sys, &[0.0, 1.0], 0.0, 1e-6),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn state_rejects_nan() {
        assert!(State::new(vec![1.0, f64::INFINITY]).is_err());
        assert_eq!(&*State::new(vec![1.0, 2.0]).unwrap(), &[1.0, 2.0]);
    }
}
