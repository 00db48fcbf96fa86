//! Smooth convex local objectives: general quadratics and the finite-horizon
//! tracking objective of a linear system, with their Lipschitz, strong
//! convexity and gradient-bound constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, extreme_eigenvalues, norm, norm_sq, sub, Matrix};
use crate::scalar::Scalar;

/// A differentiable function on `R^dim`.
pub trait Objective<T: Scalar> {
    fn dim(&self) -> usize;

    fn value(&self, x: &[T]) -> Result<T>;

    fn gradient(&self, x: &[T]) -> Result<Vec<T>>;
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `f(x) = x'Qx + q'x + c0` with `Q` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(try_from = "RawQuadratic<T>", into = "RawQuadratic<T>")]
pub struct Quadratic<T> {
    quad: Matrix<T>,
    lin: Vec<T>,
    constant: T,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct RawQuadratic<T> {
    #[serde(rename = "Q")]
    quad: Matrix<T>,
    q: Vec<T>,
    #[serde(default)]
    c0: T,
}

impl<T: Scalar> TryFrom<RawQuadratic<T>> for Quadratic<T> {
    type Error = Error;
    fn try_from(raw: RawQuadratic<T>) -> Result<Self> {
        Quadratic::new(raw.quad, raw.q, raw.c0)
    }
}

impl<T: Scalar> From<Quadratic<T>> for RawQuadratic<T> {
    fn from(f: Quadratic<T>) -> Self {
        RawQuadratic {
            quad: f.quad,
            q: f.lin,
            c0: f.constant,
        }
    }
}

impl<T: Scalar> Quadratic<T> {
    pub fn new(quad: Matrix<T>, lin: Vec<T>, constant: T) -> Result<Self> {
        if !quad.is_square() {
            return Err(Error::InvalidObjective(format!(
                "quadratic term must be square, got {}x{}",
                quad.rows(),
                quad.cols()
            )));
        }
        check_dim(quad.rows(), lin.len())?;
        let n = quad.rows();
        let scale = (0..n)
            .flat_map(|i| quad.row(i).iter().copied())
            .fold(T::one(), |a, b| a.max(b.abs()));
        if quad.max_abs_asymmetry() > T::check_tol(1e-12, n) * scale {
            return Err(Error::InvalidObjective(
                "quadratic term is not symmetric".into(),
            ));
        }
        let (_, lo) = extreme_eigenvalues(&quad)?;
        if lo < -T::check_tol(1e-10, n) * scale {
            return Err(Error::InvalidObjective(format!(
                "quadratic term is not positive semidefinite (smallest eigenvalue {lo})"
            )));
        }
        Ok(Self {
            quad,
            lin,
            constant,
        })
    }

    pub fn quad(&self) -> &Matrix<T> {
        &self.quad
    }

    pub fn lin(&self) -> &[T] {
        &self.lin
    }

    pub fn constant(&self) -> T {
        self.constant
    }

    /// Sum of quadratics on a common space.
    pub fn sum(parts: &[Quadratic<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidObjective("empty sum".into()))?;
        let n = first.dim();
        let mut quad = Matrix::zeros(n, n);
        let mut lin = vec![T::zero(); n];
        let mut constant = T::zero();
        for p in parts {
            check_dim(n, p.dim())?;
            for i in 0..n {
                for j in 0..n {
                    quad[(i, j)] += p.quad[(i, j)];
                }
            }
            axpy(T::one(), &p.lin, &mut lin);
            constant += p.constant;
        }
        Ok(Self {
            quad,
            lin,
            constant,
        })
    }

    /// Lipschitz, strong convexity and gradient-bound constants. The gradient
    /// bound is certified over the ball of radius `set_radius` centered at the
    /// origin (pass the circumradius for a box): `‖2Qx + q‖ <= 2‖Q‖R + ‖q‖`.
    pub fn constants(&self, set_radius: T) -> Result<ObjectiveConstants<T>> {
        let (hi, lo) = extreme_eigenvalues(&self.quad)?;
        let two = T::lit(2.0);
        Ok(ObjectiveConstants {
            lipschitz: two * hi,
            // The two extremes come from separate iterations; keep them ordered.
            sigma: (two * lo).max(T::zero()).min(two * hi),
            gf: two * hi * set_radius + norm(&self.lin),
        })
    }
}

impl<T: Scalar> Objective<T> for Quadratic<T> {
    fn dim(&self) -> usize {
        self.lin.len()
    }

    fn value(&self, x: &[T]) -> Result<T> {
        check_dim(self.dim(), x.len())?;
        Ok(dot(x, &self.quad.mul_vec(x)) + dot(&self.lin, x) + self.constant)
    }

    fn gradient(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), x.len())?;
        let mut g = self.quad.mul_vec(x);
        g.iter_mut().for_each(|v| *v += *v);
        axpy(T::one(), &self.lin, &mut g);
        Ok(g)
    }
}

/// Constants of a smooth convex function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ObjectiveConstants<T> {
    /// Lipschitz constant of the gradient.
    pub lipschitz: T,
    /// Strong convexity modulus.
    pub sigma: T,
    /// Upper bound on the gradient norm over the given set.
    pub gf: T,
}

/// `x(t) = A x(t−1) + B u(t)` for `t = 1..=u.len()`, starting at `x0`.
pub fn rollout<T: Scalar>(a: &Matrix<T>, b: &[T], x0: &[T], u: &[T]) -> Vec<Vec<T>> {
    let mut states = Vec::with_capacity(u.len());
    let mut x = x0.to_vec();
    for &ut in u {
        let mut next = a.mul_vec(&x);
        axpy(ut, b, &mut next);
        states.push(next.clone());
        x = next;
    }
    states
}

/// Stacked response `[x(1); …; x(T)] = G u + h`, returned as `(G, h)` with
/// `G` block lower triangular (block `(t, s)` is `A^{t−s} B` for `s <= t`) and
/// `h` the free response `A^t x0`.
pub fn response_map<T: Scalar>(
    a: &Matrix<T>,
    b: &[T],
    x0: &[T],
    horizon: usize,
) -> (Matrix<T>, Vec<T>) {
    let n = x0.len();
    let mut g = Matrix::zeros(horizon * n, horizon);
    // powers[k] = A^k B
    let mut powers = Vec::with_capacity(horizon);
    let mut p = b.to_vec();
    for _ in 0..horizon {
        powers.push(p.clone());
        p = a.mul_vec(&p);
    }
    for t in 0..horizon {
        for s in 0..=t {
            for (r, &v) in powers[t - s].iter().enumerate() {
                g[(t * n + r, s)] = v;
            }
        }
    }
    let free = rollout(a, b, x0, &vec![T::zero(); horizon]);
    (g, free.into_iter().flatten().collect())
}

/// Finite-horizon tracking cost `f(u) = Σ_t ‖x(t) − z‖² + r Σ_t u(t)` of a
/// single-input linear system, with states eliminated through the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct MpcObjective<T> {
    #[serde(rename = "A")]
    pub a: Matrix<T>,
    #[serde(rename = "B")]
    pub b: Vec<T>,
    pub x0: Vec<T>,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub z: Vec<T>,
    pub r: T,
}

impl<T: Scalar> MpcObjective<T> {
    pub fn new(
        a: Matrix<T>,
        b: Vec<T>,
        x0: Vec<T>,
        horizon: usize,
        z: Vec<T>,
        r: T,
    ) -> Result<Self> {
        let f = Self {
            a,
            b,
            x0,
            horizon,
            z,
            r,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x0.len();
        if self.horizon == 0 {
            return Err(Error::InvalidObjective("horizon must be at least 1".into()));
        }
        if !(self.r >= T::zero()) {
            return Err(Error::InvalidObjective(
                "control penalty must be nonnegative".into(),
            ));
        }
        if self.a.rows() != n || self.a.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.a.rows(),
            });
        }
        check_dim(n, self.b.len())?;
        check_dim(n, self.z.len())?;
        Ok(())
    }

    pub fn rollout(&self, u: &[T]) -> Vec<Vec<T>> {
        rollout(&self.a, &self.b, &self.x0, u)
    }

    /// `f(u) = ‖G u + h − Z‖² + r 1'u` expanded to `u'(G'G)u + 2(h − Z)'G u + r 1'u + ‖h − Z‖²`.
    pub fn to_quadratic(&self) -> Result<Quadratic<T>> {
        let (g, h) = response_map(&self.a, &self.b, &self.x0, self.horizon);
        let target: Vec<T> = (0..self.horizon)
            .flat_map(|_| self.z.iter().copied())
            .collect();
        let resid = sub(&h, &target);
        let mut lin = g.tr_mul_vec(&resid);
        lin.iter_mut().for_each(|v| *v = *v + *v + self.r);
        Quadratic::new(g.gram(), lin, norm_sq(&resid))
    }
}

impl<T: Scalar> Objective<T> for MpcObjective<T> {
    fn dim(&self) -> usize {
        self.horizon
    }

    fn value(&self, u: &[T]) -> Result<T> {
        check_dim(self.horizon, u.len())?;
        let track = self
            .rollout(u)
            .iter()
            .fold(T::zero(), |acc, x| acc + crate::linalg::dist_sq(x, &self.z));
        let effort = u.iter().fold(T::zero(), |a, &b| a + b);
        Ok(track + self.r * effort)
    }

    /// Adjoint recursion: `p(T) = 2(x(T) − z)`, `p(t) = 2(x(t) − z) + A'p(t+1)`,
    /// `∂f/∂u(t) = B'p(t) + r`.
    fn gradient(&self, u: &[T]) -> Result<Vec<T>> {
        check_dim(self.horizon, u.len())?;
        let states = self.rollout(u);
        let two = T::lit(2.0);
        let n = self.x0.len();
        let mut grad = vec![T::zero(); self.horizon];
        let mut costate = vec![T::zero(); n];
        for t in (0..self.horizon).rev() {
            let mut next = self.a.tr_mul_vec(&costate);
            for ((c, &x), &z) in next.iter_mut().zip(&states[t]).zip(&self.z) {
                *c += two * (x - z);
            }
            costate = next;
            grad[t] = dot(&self.b, &costate) + self.r;
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark_system() -> (Matrix<f64>, Vec<f64>, Vec<f64>) {
        (
            Matrix::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap(),
            vec![0.5, 1.0],
            vec![7.0, 0.0],
        )
    }

    #[test]
    fn identity_quadratic_stationary_at_origin() {
        let f = Quadratic::new(Matrix::<f64>::identity(3), vec![0.0; 3], 0.0).unwrap();
        assert_eq!(f.gradient(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(matches!(
            f.gradient(&[0.0; 2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_indefinite_or_asymmetric() {
        let bad = Matrix::from_rows(vec![vec![1.0_f64, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(Quadratic::new(bad, vec![0.0; 2], 0.0).is_err());
        let skew = Matrix::from_rows(vec![vec![1.0_f64, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(Quadratic::new(skew, vec![0.0; 2], 0.0).is_err());
    }

    #[test]
    fn constants_of_diagonal() {
        let f = Quadratic::new(Matrix::<f64>::identity(2), vec![0.0; 2], 0.0).unwrap();
        let c = f.constants(1.0).unwrap();
        assert!((c.lipschitz - 2.0).abs() < 1e-9 && (c.sigma - 2.0).abs() < 1e-9);
        let f =
            Quadratic::<f64>::new(Matrix::from_diagonal(&[1.0, 3.0]), vec![3.0, 4.0], 0.0).unwrap();
        let c = f.constants(2.0).unwrap();
        assert!((c.lipschitz - 6.0).abs() < 1e-9);
        assert!((c.sigma - 2.0).abs() < 1e-9);
        assert!((c.gf - (12.0 + 5.0)).abs() < 1e-9);
    }

    #[test]
    fn rollout_fixed_point_and_one_step() {
        let (a, b, x0) = benchmark_system();
        for x in rollout(&a, &b, &x0, &[0.0; 5]) {
            assert_eq!(x, vec![7.0, 0.0]);
        }
        assert_eq!(rollout(&a, &b, &x0, &[2.0]), vec![vec![8.0, 2.0]]);
    }

    #[test]
    fn mpc_zero_control_at_rest_target() {
        let (a, b, x0) = benchmark_system();
        let f = MpcObjective::new(a, b, x0, 6, vec![7.0, 0.0], 0.1).unwrap();
        assert_eq!(f.value(&[0.0; 6]).unwrap(), 0.0);
        for g in f.gradient(&[0.0; 6]).unwrap() {
            assert!((g - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn horizon_one_quadratic() {
        let (a, b, x0) = benchmark_system();
        let f = MpcObjective::new(a, b, x0, 1, vec![7.0, 0.0], 0.0).unwrap();
        let q = f.to_quadratic().unwrap();
        assert!((q.quad()[(0, 0)] - 1.25).abs() < 1e-15);
        // Target equal to the free response with r = 0: minimizer at u = 0.
        assert!(q.gradient(&[0.0]).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn mpc_validation() {
        let (a, b, x0) = benchmark_system();
        assert!(MpcObjective::new(a.clone(), b.clone(), x0.clone(), 0, vec![0.0; 2], 0.1).is_err());
        assert!(MpcObjective::new(a, b, x0, 3, vec![0.0; 2], -1.0).is_err());
    }
}
