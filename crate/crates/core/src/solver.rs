//! The LSS tangent problem
//!
//! ```text
//!   min 1/2 sum_{i=1..n} v_i^T v_i
//!   s.t. v_{i+1} = Df_i v_i + b_i,   i = 1..n-1
//! ```
//!
//! with `Df_i = Df(u_i, s)` and `b_i = df/ds(u_i, s)`.
//!
//! Stationarity gives `v_i = w_{i-1/2} - Df_i^T w_{i+1/2}` with
//! `w_{1/2} = w_{n+1/2} = 0`. Substituting into the constraints leaves a
//! symmetric positive definite block-tridiagonal system in the interior
//! multipliers:
//!
//! ```text
//!   -Df_i w_{i-1/2} + (I + Df_i Df_i^T) w_{i+1/2} - Df_{i+1}^T w_{i+3/2} = b_i
//! ```
//!
//! which is solved by a block Cholesky sweep in `O(n m^3)`. [`solve_dense_oracle`]
//! solves the same problem from the full KKT matrix and exists to check this
//! path.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, backward_sub_t, cholesky, dot, forward_sub, norm2, Mat};

/// Default relative feasibility tolerance: `residual <= tol * (1 + max |v_i|)`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Largest `n * m` accepted by [`solve_dense_oracle`].
pub const DENSE_LIMIT: usize = 2000;

/// Linearization along a trajectory of length `n`: `n - 1` Jacobians and
/// parameter derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct LssProblem {
    m: usize,
    jacobians: Vec<Mat>,
    param_derivs: Vec<Vec<f64>>,
}

impl LssProblem {
    pub fn new(m: usize, jacobians: Vec<Mat>, param_derivs: Vec<Vec<f64>>) -> Result<Self> {
        if jacobians.is_empty() {
            return Err(Error::InvalidConfig("trajectory length must be at least 2".into()));
        }
        if jacobians.len() != param_derivs.len() {
            return Err(Error::DimensionMismatch {
                expected: jacobians.len(),
                got: param_derivs.len(),
            });
        }
        for j in &jacobians {
            if j.rows() != m || j.cols() != m {
                return Err(Error::DimensionMismatch { expected: m, got: j.rows().max(j.cols()) });
            }
        }
        for b in &param_derivs {
            if b.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: b.len() });
            }
        }
        Ok(Self { m, jacobians, param_derivs })
    }

    /// Trajectory length `n`.
    pub fn len(&self) -> usize {
        self.jacobians.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn jacobians(&self) -> &[Mat] {
        &self.jacobians
    }

    pub fn param_derivs(&self) -> &[Vec<f64>] {
        &self.param_derivs
    }

    /// Largest `|v_{i+1} - Df_i v_i - b_i|` over the trajectory.
    pub fn constraint_residual(&self, v: &[Vec<f64>]) -> f64 {
        self.jacobians
            .iter()
            .zip(&self.param_derivs)
            .enumerate()
            .map(|(i, (jac, b))| {
                let pushed = jac.matvec(&v[i]);
                let r: Vec<f64> = v[i + 1]
                    .iter()
                    .zip(&pushed)
                    .zip(b)
                    .map(|((next, p), f)| next - p - f)
                    .collect();
                norm2(&r)
            })
            .fold(0.0, f64::max)
    }

    /// Propagates `h_{i+1} = Df_i h_i` from `h_1`.
    pub fn homogeneous_tangent(&self, h1: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        out.push(h1.to_vec());
        for jac in &self.jacobians {
            let next = jac.matvec(out.last().unwrap());
            out.push(next);
        }
        out
    }
}

/// Symmetric block-tridiagonal system in the interior multipliers.
/// `sub[k]` is the block at position `(k + 1, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTridiagonalSystem {
    pub diag: Vec<Mat>,
    pub sub: Vec<Mat>,
    pub rhs: Vec<Vec<f64>>,
}

impl BlockTridiagonalSystem {
    pub fn blocks(&self) -> usize {
        self.diag.len()
    }

    /// `A w`, using the symmetric upper blocks `sub[k]^T`.
    pub fn apply(&self, w: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let nb = self.blocks();
        (0..nb)
            .map(|k| {
                let mut row = self.diag[k].matvec(&w[k]);
                if k > 0 {
                    add_assign(&mut row, &self.sub[k - 1].matvec(&w[k - 1]));
                }
                if k + 1 < nb {
                    add_assign(&mut row, &self.sub[k].tr_matvec(&w[k + 1]));
                }
                row
            })
            .collect()
    }

    /// `|A w - b|_inf`
    pub fn residual_inf(&self, w: &[Vec<f64>]) -> f64 {
        self.apply(w)
            .iter()
            .zip(&self.rhs)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn rhs_inf(&self) -> f64 {
        self.rhs.iter().map(|b| linalg::norm_inf(b)).fold(0.0, f64::max)
    }

    /// Expands to a dense matrix (tests and diagnostics).
    pub fn to_dense(&self) -> Mat {
        let nb = self.blocks();
        let m = self.diag.first().map_or(0, Mat::rows);
        let mut a = Mat::zeros(nb * m, nb * m);
        for k in 0..nb {
            for i in 0..m {
                for j in 0..m {
                    a[(k * m + i, k * m + j)] = self.diag[k][(i, j)];
                    if k + 1 < nb {
                        a[((k + 1) * m + i, k * m + j)] = self.sub[k][(i, j)];
                        a[(k * m + j, (k + 1) * m + i)] = self.sub[k][(i, j)];
                    }
                }
            }
        }
        a
    }
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// LSS solution with its multipliers and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentSolution {
    /// `v_1..v_n`
    pub v: Vec<Vec<f64>>,
    /// Interior multipliers `w_{3/2}..w_{n-1/2}`; both boundary values are zero.
    pub w: Vec<Vec<f64>>,
    pub constraint_residual: f64,
    /// `1/2 sum v_i^T v_i`
    pub objective_value: f64,
}

impl TangentSolution {
    pub fn max_norm(&self) -> f64 {
        self.v.iter().map(|v| norm2(v)).fold(0.0, f64::max)
    }

    /// Checks `constraint_residual <= tol * (1 + max |v_i|)`.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.constraint_residual <= tol * (1.0 + self.max_norm())
    }
}

pub fn half_sum_squares(v: &[Vec<f64>]) -> f64 {
    0.5 * v.iter().map(|x| dot(x, x)).sum::<f64>()
}

/// Builds the Schur system for the interior multipliers.
pub fn assemble(problem: &LssProblem) -> BlockTridiagonalSystem {
    let m = problem.m;
    let jacs = &problem.jacobians;
    let identity = Mat::identity(m);
    let diag = jacs.iter().map(|j| identity.add(&j.matmul_t(j))).collect();
    let sub = jacs.iter().skip(1).map(|j| j.scale(-1.0)).collect();
    BlockTridiagonalSystem {
        diag,
        sub,
        rhs: problem.param_derivs.clone(),
    }
}

/// Block Cholesky sweep: `A = L L^T` with lower block-bidiagonal `L`.
pub fn solve_block_tridiagonal(system: &BlockTridiagonalSystem) -> Result<Vec<Vec<f64>>> {
    let nb = system.blocks();
    if system.sub.len() + 1 != nb || system.rhs.len() != nb {
        return Err(Error::DimensionMismatch {
            expected: nb,
            got: system.rhs.len(),
        });
    }

    // forward: factor pivots and solve L y = b
    let mut pivots: Vec<Mat> = Vec::with_capacity(nb);
    let mut couplings: Vec<Mat> = Vec::with_capacity(nb.saturating_sub(1));
    let mut y: Vec<Vec<f64>> = Vec::with_capacity(nb);
    for k in 0..nb {
        let mut schur = system.diag[k].clone();
        let mut rhs = system.rhs[k].clone();
        if k > 0 {
            let c: &Mat = &couplings[k - 1];
            schur = schur.sub(&c.matmul_t(c));
            let cy = c.matvec(&y[k - 1]);
            rhs.iter_mut().zip(&cy).for_each(|(r, x)| *r -= x);
        }
        let l = cholesky(&schur).ok_or(Error::NotPositiveDefinite { block: k })?;
        forward_sub(&l, &mut rhs);
        if k + 1 < nb {
            // coupling C solves C L^T = sub, one row at a time
            let sub = &system.sub[k];
            let mut c = Mat::zeros(sub.rows(), sub.cols());
            for i in 0..sub.rows() {
                let mut row = sub.row(i).to_vec();
                forward_sub(&l, &mut row);
                for (j, x) in row.into_iter().enumerate() {
                    c[(i, j)] = x;
                }
            }
            couplings.push(c);
        }
        pivots.push(l);
        y.push(rhs);
    }

    // backward: L^T w = y
    let mut w = y;
    for k in (0..nb).rev() {
        if k + 1 < nb {
            let ct = couplings[k].tr_matvec(&w[k + 1]);
            w[k].iter_mut().zip(&ct).for_each(|(r, x)| *r -= x);
        }
        backward_sub_t(&pivots[k], &mut w[k]);
    }
    Ok(w)
}

/// `v_i = w_{i-1/2} - Df_i^T w_{i+1/2}` with zero boundary multipliers.
pub fn recover_tangent(problem: &LssProblem, w: Vec<Vec<f64>>) -> Result<TangentSolution> {
    let n = problem.len();
    let m = problem.m;
    if w.len() != n - 1 || w.iter().any(|x| x.len() != m) {
        return Err(Error::DimensionMismatch { expected: n - 1, got: w.len() });
    }
    let v: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut vi = if i > 0 { w[i - 1].clone() } else { vec![0.0; m] };
            if i + 1 < n {
                let back = problem.jacobians[i].tr_matvec(&w[i]);
                vi.iter_mut().zip(&back).for_each(|(a, b)| *a -= b);
            }
            vi
        })
        .collect();
    let constraint_residual = problem.constraint_residual(&v);
    let objective_value = half_sum_squares(&v);
    Ok(TangentSolution {
        v,
        w,
        constraint_residual,
        objective_value,
    })
}

/// Assemble, sweep, recover.
pub fn solve(problem: &LssProblem) -> Result<TangentSolution> {
    let system = assemble(problem);
    let w = solve_block_tridiagonal(&system)?;
    recover_tangent(problem, w)
}

/// Solves the full KKT system
///
/// ```text
///   [ I  C^T ] [ v ]   [ 0 ]
///   [ C  0   ] [ l ] = [ b ]
/// ```
///
/// densely, where `C v = b` stacks the tangent constraints. The multipliers
/// are reported with the sign convention of the block path (`w = -l`).
pub fn solve_dense_oracle(problem: &LssProblem) -> Result<TangentSolution> {
    let n = problem.len();
    let m = problem.m;
    if n * m > DENSE_LIMIT {
        return Err(Error::SizeLimitExceeded { size: n * m, limit: DENSE_LIMIT });
    }
    let nv = n * m;
    let nc = (n - 1) * m;
    let mut kkt = Mat::zeros(nv + nc, nv + nc);
    let mut rhs = vec![0.0; nv + nc];
    for i in 0..nv {
        kkt[(i, i)] = 1.0;
    }
    for (i, (jac, b)) in problem.jacobians.iter().zip(&problem.param_derivs).enumerate() {
        for r in 0..m {
            let row = nv + i * m + r;
            // -Df_i v_i + v_{i+1}
            for c in 0..m {
                kkt[(row, i * m + c)] = -jac[(r, c)];
                kkt[(i * m + c, row)] = -jac[(r, c)];
            }
            kkt[(row, (i + 1) * m + r)] = 1.0;
            kkt[((i + 1) * m + r, row)] = 1.0;
            rhs[row] = b[r];
        }
    }
    let x = linalg::lu_solve(kkt, rhs).ok_or(Error::Singular)?;
    let v: Vec<Vec<f64>> = x[..nv].chunks(m).map(<[f64]>::to_vec).collect();
    let w: Vec<Vec<f64>> = x[nv..]
        .chunks(m)
        .map(|c| c.iter().map(|l| -l).collect())
        .collect();
    let constraint_residual = problem.constraint_residual(&v);
    let objective_value = half_sum_squares(&v);
    Ok(TangentSolution {
        v,
        w,
        constraint_residual,
        objective_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem() -> LssProblem {
        LssProblem::new(1, vec![Mat::from_row_major(1, 1, vec![2.0])], vec![vec![1.0]]).unwrap()
    }

    #[test]
    fn two_step_scalar_case() {
        // min 1/2 (v1^2 + v2^2) s.t. v2 = 2 v1 + 1  =>  v1 = -2/5, v2 = 1/5
        let p = scalar_problem();
        let sys = assemble(&p);
        assert_eq!(sys.diag, vec![Mat::from_row_major(1, 1, vec![5.0])]);
        assert_eq!(sys.rhs, vec![vec![1.0]]);
        let w = solve_block_tridiagonal(&sys).unwrap();
        assert!((w[0][0] - 0.2).abs() < 1e-15);
        let sol = recover_tangent(&p, w).unwrap();
        assert!((sol.v[0][0] + 0.4).abs() < 1e-15);
        assert!((sol.v[1][0] - 0.2).abs() < 1e-15);

        let dense = solve_dense_oracle(&p).unwrap();
        assert!((dense.v[0][0] + 0.4).abs() < 1e-15);
        assert!((dense.v[1][0] - 0.2).abs() < 1e-15);
        assert!((dense.w[0][0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_jacobians_decouple() {
        let m = 2;
        let b: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 1.0 - i as f64]).collect();
        let p = LssProblem::new(m, vec![Mat::zeros(m, m); 4], b.clone()).unwrap();
        let sys = assemble(&p);
        assert!(sys.diag.iter().all(|d| *d == Mat::identity(m)));
        let sol = solve(&p).unwrap();
        assert_eq!(sol.w, b);
        assert_eq!(sol.v[0], vec![0.0, 0.0]);
        assert_eq!(&sol.v[1..], &b[..]);
    }

    #[test]
    fn zero_forcing_gives_zero_solution() {
        let jac = Mat::from_row_major(2, 2, vec![1.5, 0.2, -0.3, 0.4]);
        let p = LssProblem::new(2, vec![jac; 6], vec![vec![0.0; 2]; 6]).unwrap();
        for sol in [solve(&p).unwrap(), solve_dense_oracle(&p).unwrap()] {
            assert!(sol.v.iter().flatten().all(|&x| x == 0.0));
            assert_eq!(sol.objective_value, 0.0);
        }
    }

    #[test]
    fn identity_system_returns_rhs() {
        let sys = BlockTridiagonalSystem {
            diag: vec![Mat::identity(2); 3],
            sub: vec![Mat::zeros(2, 2); 2],
            rhs: vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]],
        };
        assert_eq!(solve_block_tridiagonal(&sys).unwrap(), sys.rhs);
    }

    #[test]
    fn indefinite_pivot_is_fatal() {
        let sys = BlockTridiagonalSystem {
            diag: vec![Mat::identity(1), Mat::identity(1)],
            sub: vec![Mat::from_row_major(1, 1, vec![2.0])],
            rhs: vec![vec![1.0], vec![1.0]],
        };
        assert_eq!(solve_block_tridiagonal(&sys), Err(Error::NotPositiveDefinite { block: 1 }));
    }

    #[test]
    fn problem_validation() {
        assert!(LssProblem::new(1, vec![], vec![]).is_err());
        assert!(matches!(
            LssProblem::new(2, vec![Mat::identity(2)], vec![vec![1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            LssProblem::new(2, vec![Mat::identity(3)], vec![vec![1.0, 0.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        let p = scalar_problem();
        assert!(recover_tangent(&p, vec![]).is_err());
    }

    #[test]
    fn dense_oracle_size_guard() {
        let p = LssProblem::new(1, vec![Mat::identity(1); 2000], vec![vec![1.0]; 2000]).unwrap();
        assert_eq!(
            solve_dense_oracle(&p),
            Err(Error::SizeLimitExceeded { size: 2001, limit: DENSE_LIMIT })
        );
    }
}
