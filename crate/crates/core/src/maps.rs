//! Bundled maps: the Smale-Williams solenoid benchmark and two controls with
//! closed-form answers.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::{Rng, RngCore};

use crate::dynsys::{MapSystem, ObjectiveGradient, State};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Solenoid map, defined in cylindrical coordinates by
///
/// ```text
///   r' = s + (r - s)/4 + cos(theta)/2
///   theta' = 2 theta
///   z' = z/4 + sin(theta)/2
/// ```
///
/// with state stored in Cartesian `(x, y, z)`. Objective `J = sqrt(r^2 + z^2)`.
///
/// The map is invertible on its attractor (theta doubling is undone by the
/// radial information); that is not checked at runtime.
///
/// The shadowing direction is the unit radial vector at every point, which
/// makes the LSS error directly observable.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolenoidMap;

/// Polar quantities of a Cartesian point: radius, `cos(theta)`, `sin(theta)`.
#[derive(Clone, Copy, Debug)]
struct Polar {
    r: f64,
    cos: f64,
    sin: f64,
}

impl Polar {
    fn of(u: &[f64]) -> Result<Self> {
        let r = libm::hypot(u[0], u[1]);
        if r.is_nan() || r <= 0.0 {
            return Err(Error::DegenerateRadius);
        }
        Ok(Self {
            r,
            cos: u[0] / r,
            sin: u[1] / r,
        })
    }

    /// Angle doubled, radius replaced.
    fn doubled(&self, r: f64) -> Self {
        Self {
            r,
            cos: self.cos * self.cos - self.sin * self.sin,
            sin: 2.0 * self.sin * self.cos,
        }
    }

    /// Jacobian of `(r, theta, z) -> (x, y, z)` at this point.
    fn to_cartesian_jacobian(self) -> Mat {
        Mat::from_row_major(
            3,
            3,
            vec![
                self.cos, -self.r * self.sin, 0.0, //
                self.sin, self.r * self.cos, 0.0, //
                0.0, 0.0, 1.0,
            ],
        )
    }

    /// Jacobian of `(x, y, z) -> (r, theta, z)` at this point.
    fn to_cylindrical_jacobian(self) -> Mat {
        Mat::from_row_major(
            3,
            3,
            vec![
                self.cos, self.sin, 0.0, //
                -self.sin / self.r, self.cos / self.r, 0.0, //
                0.0, 0.0, 1.0,
            ],
        )
    }
}

impl SolenoidMap {
    fn check(u: &[f64]) -> Result<()> {
        if u.len() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: u.len() });
        }
        Ok(())
    }

    /// Image point in polar form plus the new `z`.
    fn image(u: &[f64], s: f64) -> Result<(Polar, Polar, f64)> {
        Self::check(u)?;
        let p = Polar::of(u)?;
        let r_next = s + (p.r - s) / 4.0 + p.cos / 2.0;
        let z_next = u[2] / 4.0 + p.sin / 2.0;
        Ok((p, p.doubled(r_next), z_next))
    }

    /// Jacobian of the update in cylindrical coordinates.
    pub fn cylindrical_jacobian(theta_cos: f64, theta_sin: f64) -> Mat {
        Mat::from_row_major(
            3,
            3,
            vec![
                0.25, -theta_sin / 2.0, 0.0, //
                0.0, 2.0, 0.0, //
                0.0, theta_cos / 2.0, 0.25,
            ],
        )
    }

    /// Cartesian point for cylindrical `(r, theta, z)`.
    pub fn from_cylindrical(r: f64, theta: f64, z: f64) -> [f64; 3] {
        [r * libm::cos(theta), r * libm::sin(theta), z]
    }

    /// Cylindrical `(r, theta, z)` for a Cartesian point, theta in `(-pi, pi]`.
    pub fn to_cylindrical(u: &[f64]) -> [f64; 3] {
        [libm::hypot(u[0], u[1]), libm::atan2(u[1], u[0]), u[2]]
    }
}

impl MapSystem for SolenoidMap {
    fn name(&self) -> &str {
        "solenoid"
    }

    fn dim(&self) -> usize {
        3
    }

    fn step(&self, u: &[f64], s: f64) -> Result<State> {
        let (_, next, z) = Self::image(u, s)?;
        State::new(vec![next.r * next.cos, next.r * next.sin, z])
    }

    fn jacobian(&self, u: &[f64], s: f64) -> Result<Mat> {
        let (p, next, _) = Self::image(u, s)?;
        let cyl = Self::cylindrical_jacobian(p.cos, p.sin);
        Ok(next
            .to_cartesian_jacobian()
            .matmul(&cyl)
            .matmul(&p.to_cylindrical_jacobian()))
    }

    fn param_deriv(&self, u: &[f64], s: f64) -> Result<Vec<f64>> {
        let (_, next, _) = Self::image(u, s)?;
        // only r' depends on s: dr'/ds = 1 - 1/4
        Ok(vec![0.75 * next.cos, 0.75 * next.sin, 0.0])
    }

    fn objective(&self, u: &[f64], _s: f64) -> Result<f64> {
        Self::check(u)?;
        let j = libm::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
        if j.is_nan() || j <= 0.0 {
            return Err(Error::DegenerateRadius);
        }
        Ok(j)
    }

    fn objective_grad(&self, u: &[f64], s: f64) -> Result<ObjectiveGradient> {
        let j = self.objective(u, s)?;
        Ok(ObjectiveGradient {
            du: vec![u[0] / j, u[1] / j, u[2] / j],
            ds: 0.0,
        })
    }

    fn analytic_shadow_direction(&self, u: &[f64], _s: f64) -> Option<Result<Vec<f64>>> {
        Some(Self::check(u).and_then(|_| Polar::of(u)).map(|p| vec![p.cos, p.sin, 0.0]))
    }

    /// Cylindrical box `r in [s-1, s+1]`, `theta in [0, 2 pi)`, `z in [-1, 1]`.
    fn sample_initial(&self, s: f64, rng: &mut dyn RngCore) -> State {
        let r = rng.random_range(s - 1.0..s + 1.0);
        let theta = rng.random_range(0.0..TAU);
        let z = rng.random_range(-1.0..1.0);
        State::new(Self::from_cylindrical(r, theta, z).to_vec())
            .expect("sampling box is finite")
    }
}

/// `u' = a u + s` with `J = u`. The attractor is the fixed point `s / (1 - a)`,
/// so `d<J>/ds = 1 / (1 - a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineContractionMap {
    a: f64,
}

impl AffineContractionMap {
    pub fn new(a: f64) -> Result<Self> {
        if a.is_finite() && a.abs() < 1.0 {
            Ok(Self { a })
        } else {
            Err(Error::InvalidConfig("affine contraction factor must satisfy |a| < 1".to_string()))
        }
    }

    pub fn factor(&self) -> f64 {
        self.a
    }

    pub fn fixed_point(&self, s: f64) -> f64 {
        s / (1.0 - self.a)
    }

    pub fn exact_derivative(&self) -> f64 {
        1.0 / (1.0 - self.a)
    }

    fn check(u: &[f64]) -> Result<()> {
        if u.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: u.len() });
        }
        Ok(())
    }
}

impl Default for AffineContractionMap {
    fn default() -> Self {
        Self { a: 0.5 }
    }
}

impl MapSystem for AffineContractionMap {
    fn name(&self) -> &str {
        "affine"
    }

    fn dim(&self) -> usize {
        1
    }

    fn step(&self, u: &[f64], s: f64) -> Result<State> {
        Self::check(u)?;
        State::new(vec![self.a * u[0] + s])
    }

    fn jacobian(&self, u: &[f64], _s: f64) -> Result<Mat> {
        Self::check(u)?;
        Ok(Mat::from_row_major(1, 1, vec![self.a]))
    }

    fn param_deriv(&self, u: &[f64], _s: f64) -> Result<Vec<f64>> {
        Self::check(u)?;
        Ok(vec![1.0])
    }

    fn objective(&self, u: &[f64], _s: f64) -> Result<f64> {
        Self::check(u)?;
        Ok(u[0])
    }

    fn objective_grad(&self, u: &[f64], _s: f64) -> Result<ObjectiveGradient> {
        Self::check(u)?;
        Ok(ObjectiveGradient { du: vec![1.0], ds: 0.0 })
    }

    fn analytic_shadow_direction(&self, u: &[f64], _s: f64) -> Option<Result<Vec<f64>>> {
        Some(Self::check(u).map(|_| vec![self.exact_derivative()]))
    }

    fn sample_initial(&self, _s: f64, rng: &mut dyn RngCore) -> State {
        State::new(vec![rng.random_range(-1.0..1.0)]).expect("finite")
    }

    /// Enough steps for a unit-size initial offset to decay below 1e-18.
    fn default_spinup(&self) -> usize {
        if self.a == 0.0 {
            return 1;
        }
        let steps = libm::ceil(-18.0 * core::f64::consts::LN_10 / libm::log(self.a.abs()));
        (steps as usize).max(1)
    }
}

/// Cat map with a parameter shift on the torus:
/// `(x, y) -> (2x + y + s mod 1, x + y mod 1)`, `J = cos(2 pi x)`.
///
/// Lebesgue measure is invariant for every `s`, so `d<J>/ds = 0`. The wrap is
/// not differentiated; the Jacobian is the constant integer matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShiftedCatMap;

fn wrap_unit(x: f64) -> f64 {
    let r = libm::fmod(x, 1.0);
    let r = if r < 0.0 { r + 1.0 } else { r };
    // fmod of a tiny negative number can round up to exactly 1
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl ShiftedCatMap {
    fn check(u: &[f64]) -> Result<()> {
        if u.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: u.len() });
        }
        Ok(())
    }
}

impl MapSystem for ShiftedCatMap {
    fn name(&self) -> &str {
        "cat"
    }

    fn dim(&self) -> usize {
        2
    }

    fn step(&self, u: &[f64], s: f64) -> Result<State> {
        Self::check(u)?;
        State::new(vec![wrap_unit(2.0 * u[0] + u[1] + s), wrap_unit(u[0] + u[1])])
    }

    fn jacobian(&self, u: &[f64], _s: f64) -> Result<Mat> {
        Self::check(u)?;
        Ok(Mat::from_row_major(2, 2, vec![2.0, 1.0, 1.0, 1.0]))
    }

    fn param_deriv(&self, u: &[f64], _s: f64) -> Result<Vec<f64>> {
        Self::check(u)?;
        Ok(vec![1.0, 0.0])
    }

    fn objective(&self, u: &[f64], _s: f64) -> Result<f64> {
        Self::check(u)?;
        Ok(libm::cos(2.0 * PI * u[0]))
    }

    fn objective_grad(&self, u: &[f64], _s: f64) -> Result<ObjectiveGradient> {
        Self::check(u)?;
        Ok(ObjectiveGradient {
            du: vec![-2.0 * PI * libm::sin(2.0 * PI * u[0]), 0.0],
            ds: 0.0,
        })
    }

    /// The constant `(0, -1)`: the fixed point of `v' = A v + (1, 0)`.
    fn analytic_shadow_direction(&self, u: &[f64], _s: f64) -> Option<Result<Vec<f64>>> {
        Some(Self::check(u).map(|_| vec![0.0, -1.0]))
    }

    fn sample_initial(&self, _s: f64, rng: &mut dyn RngCore) -> State {
        State::new(vec![rng.random::<f64>(), rng.random::<f64>()]).expect("finite")
    }

    fn default_spinup(&self) -> usize {
        100
    }
}

/// The bundled maps, selectable by name.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BundledMap {
    Solenoid(SolenoidMap),
    Affine(AffineContractionMap),
    Cat(ShiftedCatMap),
}

impl BundledMap {
    pub const NAMES: [&'static str; 3] = ["solenoid", "affine", "cat"];

    /// Looks a map up by name; the affine map uses `a = 0.5`.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "solenoid" => Some(Self::Solenoid(SolenoidMap)),
            "affine" => Some(Self::Affine(AffineContractionMap::default())),
            "cat" => Some(Self::Cat(ShiftedCatMap)),
            _ => None,
        }
    }

    fn inner(&self) -> &dyn MapSystem {
        match self {
            Self::Solenoid(m) => m,
            Self::Affine(m) => m,
            Self::Cat(m) => m,
        }
    }
}

impl MapSystem for BundledMap {
    fn name(&self) -> &str {
        self.inner().name()
    }
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn step(&self, u: &[f64], s: f64) -> Result<State> {
        self.inner().step(u, s)
    }
    fn jacobian(&self, u: &[f64], s: f64) -> Result<Mat> {
        self.inner().jacobian(u, s)
    }
    fn param_deriv(&self, u: &[f64], s: f64) -> Result<Vec<f64>> {
        self.inner().param_deriv(u, s)
    }
    fn objective(&self, u: &[f64], s: f64) -> Result<f64> {
        self.inner().objective(u, s)
    }
    fn objective_grad(&self, u: &[f64], s: f64) -> Result<ObjectiveGradient> {
        self.inner().objective_grad(u, s)
    }
    fn analytic_shadow_direction(&self, u: &[f64], s: f64) -> Option<Result<Vec<f64>>> {
        self.inner().analytic_shadow_direction(u, s)
    }
    fn sample_initial(&self, s: f64, rng: &mut dyn RngCore) -> State {
        self.inner().sample_initial(s, rng)
    }
    fn default_spinup(&self) -> usize {
        self.inner().default_spinup()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm_inf, Mat};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn cyl(u: &[f64]) -> [f64; 3] {
        SolenoidMap::to_cylindrical(u)
    }

    #[test]
    fn solenoid_step_at_theta_zero() {
        let next = SolenoidMap.step(&[1.0, 0.0, 0.0], 1.0).unwrap();
        assert!(close(&next, &[1.5, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn solenoid_step_at_theta_pi() {
        let u = SolenoidMap::from_cylindrical(1.0, PI, 0.3);
        let next = SolenoidMap.step(&u, 1.0).unwrap();
        let c = cyl(&next);
        assert!((c[0] - 0.5).abs() < 1e-15);
        // theta' = 2 pi, i.e. 0 (or a hair below 2 pi via atan2 of -0)
        assert!(libm::sin(c[1]).abs() < 1e-15 && libm::cos(c[1]) > 0.0);
        assert!((c[2] - 0.075).abs() < 1e-15);
    }

    #[test]
    fn solenoid_degenerate_radius() {
        assert_eq!(SolenoidMap.step(&[0.0, 0.0, 1.0], 1.0), Err(Error::DegenerateRadius));
        assert_eq!(SolenoidMap.jacobian(&[0.0, 0.0, 1.0], 1.0), Err(Error::DegenerateRadius));
        assert_eq!(SolenoidMap.param_deriv(&[0.0, 0.0, 1.0], 1.0), Err(Error::DegenerateRadius));
        assert_eq!(SolenoidMap.objective(&[0.0, 0.0, 0.0], 1.0), Err(Error::DegenerateRadius));
        assert!(SolenoidMap.objective(&[0.0, 0.0, 2.0], 1.0).is_ok());
    }

    #[test]
    fn solenoid_cylindrical_jacobian_at_theta_zero() {
        let j = SolenoidMap::cylindrical_jacobian(1.0, 0.0);
        let want = Mat::from_row_major(3, 3, vec![0.25, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.5, 0.25]);
        assert_eq!(j.sub(&want).max_abs(), 0.0);
    }

    #[test]
    fn solenoid_param_deriv_at_theta_zero() {
        let d = SolenoidMap.param_deriv(&[1.0, 0.0, 0.0], 1.0).unwrap();
        assert!(close(&d, &[0.75, 0.0, 0.0], 0.0));
    }

    #[test]
    fn solenoid_objective_values() {
        let u = SolenoidMap::from_cylindrical(3.0, 0.7, 4.0);
        assert!((SolenoidMap.objective(&u, 1.0).unwrap() - 5.0).abs() < 1e-14);
        assert_eq!(SolenoidMap.objective_grad(&u, 1.0).unwrap().ds, 0.0);
        let g = SolenoidMap.objective_grad(&[1.0, 0.0, 0.0], 1.0).unwrap();
        assert!(close(&g.du, &[1.0, 0.0, 0.0], 0.0));
    }

    #[test]
    fn solenoid_tangent_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let s = rng.random_range(0.8..2.2);
            let mut u = SolenoidMap.sample_initial(s, &mut rng);
            for _ in 0..50 {
                u = SolenoidMap.step(&u, s).unwrap();
            }
            let v = SolenoidMap.analytic_shadow_direction(&u, s).unwrap().unwrap();
            let mut lhs = SolenoidMap.jacobian(&u, s).unwrap().matvec(&v);
            for (a, b) in lhs.iter_mut().zip(SolenoidMap.param_deriv(&u, s).unwrap()) {
                *a += b;
            }
            let next = SolenoidMap.step(&u, s).unwrap();
            let want = SolenoidMap.analytic_shadow_direction(&next, s).unwrap().unwrap();
            assert!(close(&lhs, &want, 1e-12), "{lhs:?} vs {want:?}");
        }
    }

    #[test]
    fn solenoid_orbit_stays_in_attractor_bounds() {
        let s = 1.4;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut u = SolenoidMap.sample_initial(s, &mut rng);
        for i in 0..10_000 {
            u = SolenoidMap.step(&u, s).unwrap();
            if i >= 100 {
                let c = cyl(&u);
                assert!((c[0] - s).abs() <= 1.0 && c[2].abs() <= 2.0 / 3.0, "{c:?}");
            }
        }
    }

    #[test]
    fn cat_map_preserves_area_and_wraps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u = ShiftedCatMap.sample_initial(0.3, &mut rng);
            assert_eq!(ShiftedCatMap.jacobian(&u, 0.3).unwrap().det().abs(), 1.0);
            let next = ShiftedCatMap.step(&u, 0.3).unwrap();
            assert!(next.iter().all(|&x| (0.0..1.0).contains(&x)));
        }
        assert_eq!(wrap_unit(-0.25), 0.75);
        assert_eq!(wrap_unit(-1e-20), 0.0);
    }

    #[test]
    fn cat_shadow_direction_is_a_fixed_point() {
        let u = [0.2, 0.6];
        let v = ShiftedCatMap.analytic_shadow_direction(&u, 0.1).unwrap().unwrap();
        let mut next = ShiftedCatMap.jacobian(&u, 0.1).unwrap().matvec(&v);
        next[0] += 1.0;
        assert_eq!(next, v);
    }

    #[test]
    fn affine_orbit_converges_geometrically() {
        let sys = AffineContractionMap::new(0.5).unwrap();
        let mut u = vec![3.0];
        let mut prev = (u[0] - 2.0f64).abs();
        for _ in 0..40 {
            u = sys.step(&u, 1.0).unwrap().into_inner();
            let err = (u[0] - 2.0f64).abs();
            assert!((err - 0.5 * prev).abs() <= 1e-15);
            prev = err;
        }
        assert_eq!(sys.default_spinup(), 60);
        assert!(AffineContractionMap::new(1.0).is_err());
        assert!(AffineContractionMap::new(f64::NAN).is_err());
    }

    #[test]
    fn lookup_by_name() {
        for name in BundledMap::NAMES {
            assert_eq!(BundledMap::from_name(name).unwrap().name(), name);
        }
        assert!(BundledMap::from_name("lorenz").is_none());
        let m = BundledMap::from_name("solenoid").unwrap();
        assert_eq!(m.dim(), 3);
        assert!(norm_inf(&m.param_deriv(&[1.0, 0.0, 0.0], 1.0).unwrap()) > 0.0);
    }
}
