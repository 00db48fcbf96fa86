//! Projectable convex components, the random law over an agent's components,
//! and an exact projection onto finite intersections (Dykstra).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dist_sq, dot, norm, norm_sq, Matrix};
use crate::polyhedron::project_set;
use crate::scalar::Scalar;

pub const DYKSTRA_TOL: f64 = 1e-10;
pub const DYKSTRA_MAX_ITER: usize = 100_000;

/// A simple closed convex set with a closed-form projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(try_from = "RawComponent<T>", into = "RawComponent<T>")]
pub enum ConstraintComponent<T> {
    /// `{x : a'x <= b}`
    Halfspace {
        a: Vec<T>,
        b: T,
    },
    /// `{x : lo <= x <= hi}`
    Box {
        lo: Vec<T>,
        hi: Vec<T>,
    },
    /// `{x : a'x = b}`
    Hyperplane {
        a: Vec<T>,
        b: T,
    },
    FullSpace,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
enum RawComponent<T> {
    Halfspace { a: Vec<T>, b: T },
    Box { lo: Vec<T>, hi: Vec<T> },
    Hyperplane { a: Vec<T>, b: T },
    FullSpace,
}

impl<T: Scalar> TryFrom<RawComponent<T>> for ConstraintComponent<T> {
    type Error = Error;
    fn try_from(raw: RawComponent<T>) -> Result<Self> {
        match raw {
            RawComponent::Halfspace { a, b } => Self::halfspace(a, b),
            RawComponent::Box { lo, hi } => Self::boxed(lo, hi),
            RawComponent::Hyperplane { a, b } => Self::hyperplane(a, b),
            RawComponent::FullSpace => Ok(Self::FullSpace),
        }
    }
}

impl<T> From<ConstraintComponent<T>> for RawComponent<T> {
    fn from(c: ConstraintComponent<T>) -> Self {
        match c {
            ConstraintComponent::Halfspace { a, b } => RawComponent::Halfspace { a, b },
            ConstraintComponent::Box { lo, hi } => RawComponent::Box { lo, hi },
            ConstraintComponent::Hyperplane { a, b } => RawComponent::Hyperplane { a, b },
            ConstraintComponent::FullSpace => RawComponent::FullSpace,
        }
    }
}

fn check_normal<T: Scalar>(a: &[T]) -> Result<()> {
    let n = norm(a);
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::InvalidConstraint(
            "normal vector must be finite and nonzero".into(),
        ));
    }
    Ok(())
}

impl<T: Scalar> ConstraintComponent<T> {
    pub fn halfspace(a: Vec<T>, b: T) -> Result<Self> {
        check_normal(&a)?;
        Ok(Self::Halfspace { a, b })
    }

    pub fn hyperplane(a: Vec<T>, b: T) -> Result<Self> {
        check_normal(&a)?;
        Ok(Self::Hyperplane { a, b })
    }

    pub fn boxed(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidConstraint(
                "box requires lo <= hi componentwise".into(),
            ));
        }
        Ok(Self::Box { lo, hi })
    }

    /// `{x : ‖x‖∞ <= radius}` in `d` dimensions.
    pub fn cube(d: usize, radius: T) -> Result<Self> {
        Self::boxed(vec![-radius; d], vec![radius; d])
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Halfspace { a, .. } | Self::Hyperplane { a, .. } => Some(a.len()),
            Self::Box { lo, .. } => Some(lo.len()),
            Self::FullSpace => None,
        }
    }

    /// Euclidean projection.
    pub fn project(&self, x: &[T]) -> Vec<T> {
        match self {
            Self::Halfspace { a, b } => {
                let viol = dot(a, x) - *b;
                let mut y = x.to_vec();
                if viol > T::zero() {
                    axpy(-viol / norm_sq(a), a, &mut y);
                }
                y
            }
            Self::Hyperplane { a, b } => {
                let viol = dot(a, x) - *b;
                let mut y = x.to_vec();
                axpy(-viol / norm_sq(a), a, &mut y);
                y
            }
            Self::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&v, (&l, &h))| v.max(l).min(h))
                .collect(),
            Self::FullSpace => x.to_vec(),
        }
    }

    pub fn dist(&self, x: &[T]) -> T {
        match self {
            Self::Halfspace { a, b } => ((dot(a, x) - *b) / norm(a)).max(T::zero()),
            Self::Hyperplane { a, b } => (dot(a, x) - *b).abs() / norm(a),
            Self::Box { .. } => dist_sq(x, &self.project(x)).sqrt(),
            Self::FullSpace => T::zero(),
        }
    }

    /// Membership with an absolute slack on the constraint residual.
    pub fn contains(&self, x: &[T], tol: T) -> bool {
        match self {
            Self::Halfspace { a, b } => dot(a, x) - *b <= tol,
            Self::Hyperplane { a, b } => (dot(a, x) - *b).abs() <= tol,
            Self::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol),
            Self::FullSpace => true,
        }
    }
}

/// How the perturbation `δ` of an uncertain normal is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationLaw {
    /// Uniform on the box `‖δ‖∞ <= β`.
    #[default]
    UniformBox,
    /// Independent `N(0, β²)` coordinates.
    Gaussian,
}

/// Affine map `x ↦ M x + s` from decision space into the space where an
/// uncertain halfspace is stated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct AffineLift<T> {
    pub map: Matrix<T>,
    pub shift: Vec<T>,
}

/// Halfspace `(a + δ)'(M x + s) <= b` whose normal is perturbed on its first
/// `n_delta` coordinates. Without a lift, `M = I` and `s = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct UncertainHalfspace<T> {
    pub a: Vec<T>,
    pub b: T,
    pub beta: T,
    pub n_delta: usize,
    #[serde(default)]
    pub law: PerturbationLaw,
    #[serde(default)]
    pub lift: Option<AffineLift<T>>,
}

impl<T: Scalar> UncertainHalfspace<T> {
    pub fn new(a: Vec<T>, b: T, beta: T) -> Result<Self> {
        let n_delta = a.len();
        let h = Self {
            a,
            b,
            beta,
            n_delta,
            law: PerturbationLaw::UniformBox,
            lift: None,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn with_lift(mut self, lift: AffineLift<T>) -> Result<Self> {
        self.lift = Some(lift);
        self.validate()?;
        Ok(self)
    }

    pub fn with_law(mut self, law: PerturbationLaw) -> Self {
        self.law = law;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_normal(&self.a)?;
        if !(self.beta >= T::zero()) {
            return Err(Error::InvalidConstraint(
                "perturbation radius must be nonnegative".into(),
            ));
        }
        if self.n_delta > self.a.len() {
            return Err(Error::InvalidConstraint(
                "n_delta exceeds normal dimension".into(),
            ));
        }
        if let Some(lift) = &self.lift {
            if lift.map.rows() != self.a.len() || lift.shift.len() != self.a.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.a.len(),
                    got: lift.map.rows(),
                });
            }
        }
        Ok(())
    }

    /// Decision-space dimension.
    pub fn dim(&self) -> usize {
        self.lift.as_ref().map_or(self.a.len(), |l| l.map.cols())
    }

    pub fn draw_delta<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let beta = self.beta.to_f64_lossy();
        (0..self.n_delta)
            .map(|_| {
                let v = match self.law {
                    PerturbationLaw::UniformBox => {
                        if beta > 0.0 {
                            rng.random_range(-beta..=beta)
                        } else {
                            0.0
                        }
                    }
                    PerturbationLaw::Gaussian => {
                        let z: f64 = StandardNormal.sample(rng);
                        beta * z
                    }
                };
                T::lit(v)
            })
            .collect()
    }

    /// Decision-space `(normal, offset)` for a given perturbation of the first
    /// `n_delta` coordinates of `a`.
    pub fn affine_with_delta(&self, delta: &[T]) -> (Vec<T>, T) {
        let mut a = self.a.clone();
        for (ai, &di) in a.iter_mut().zip(delta) {
            *ai += di;
        }
        match &self.lift {
            None => (a, self.b),
            Some(lift) => {
                let normal = lift.map.tr_mul_vec(&a);
                let offset = self.b - dot(&a, &lift.shift);
                (normal, offset)
            }
        }
    }

    pub fn component_with_delta(&self, delta: &[T]) -> ConstraintComponent<T> {
        let (normal, offset) = self.affine_with_delta(delta);
        if norm(&normal) > T::zero() {
            ConstraintComponent::Halfspace {
                a: normal,
                b: offset,
            }
        } else {
            if offset < T::zero() {
                log::warn!("realized constraint 0 <= {offset:?} is infeasible; treated as vacuous");
            }
            ConstraintComponent::FullSpace
        }
    }

    pub fn nominal(&self) -> ConstraintComponent<T> {
        self.component_with_delta(&[])
    }

    /// Decision-space halfspaces `(normal, offset)` for every sign pattern of a
    /// corner perturbation `δ = β s`, `s ∈ {−1, +1}^{n_delta}`, enumerated with
    /// `+` before `−` and the first coordinate varying slowest. Their
    /// intersection is the set of points feasible for every `‖δ‖∞ <= β`.
    pub fn corner_halfspaces(&self) -> Result<Vec<(Vec<T>, T)>> {
        if self.law != PerturbationLaw::UniformBox {
            return Err(Error::InvalidConstraint(
                "worst-case expansion needs bounded box perturbations".into(),
            ));
        }
        let n = self.n_delta;
        Ok((0..1usize << n)
            .map(|pattern| {
                let delta: Vec<T> = (0..n)
                    .map(|j| {
                        if pattern >> (n - 1 - j) & 1 == 0 {
                            self.beta
                        } else {
                            -self.beta
                        }
                    })
                    .collect();
                self.affine_with_delta(&delta)
            })
            .collect())
    }
}

/// The random law over an agent's components: one member is drawn by weight,
/// uncertain members are additionally perturbed. `trailing` components are
/// projected onto after the realized member, in order, on every update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LocalConstraint<T> {
    pub deterministic: Vec<ConstraintComponent<T>>,
    pub uncertain: Vec<UncertainHalfspace<T>>,
    pub weights: Vec<T>,
    #[serde(default)]
    pub trailing: Vec<ConstraintComponent<T>>,
}

impl<T: Scalar> LocalConstraint<T> {
    /// Uniform weights over all members.
    pub fn uniform(
        deterministic: Vec<ConstraintComponent<T>>,
        uncertain: Vec<UncertainHalfspace<T>>,
    ) -> Result<Self> {
        let n = deterministic.len() + uncertain.len();
        let w = T::one() / T::from_usize_lossy(n.max(1));
        Self::weighted(deterministic, uncertain, vec![w; n])
    }

    pub fn weighted(
        deterministic: Vec<ConstraintComponent<T>>,
        uncertain: Vec<UncertainHalfspace<T>>,
        weights: Vec<T>,
    ) -> Result<Self> {
        let lc = Self {
            deterministic,
            uncertain,
            weights,
            trailing: Vec::new(),
        };
        lc.validate()?;
        Ok(lc)
    }

    pub fn single(component: ConstraintComponent<T>) -> Self {
        Self {
            deterministic: vec![component],
            uncertain: Vec::new(),
            weights: vec![T::one()],
            trailing: Vec::new(),
        }
    }

    pub fn with_trailing(mut self, trailing: Vec<ConstraintComponent<T>>) -> Self {
        self.trailing = trailing;
        self
    }

    pub fn member_count(&self) -> usize {
        self.deterministic.len() + self.uncertain.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.member_count();
        if n == 0 {
            return Err(Error::InvalidConstraint(
                "local constraint needs at least one member".into(),
            ));
        }
        if self.weights.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.weights.len(),
            });
        }
        if self.weights.iter().any(|w| !(*w >= T::zero())) {
            return Err(Error::InvalidConstraint(
                "weights must be nonnegative".into(),
            ));
        }
        let total = self.weights.iter().fold(T::zero(), |a, &b| a + b);
        if (total - T::one()).abs() > T::check_tol(1e-12, n) {
            return Err(Error::InvalidConstraint(format!("weights sum to {total}")));
        }
        for u in &self.uncertain {
            u.validate()?;
        }
        Ok(())
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let n = self.member_count();
        if n == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (idx, w) in self.weights.iter().enumerate() {
            let w = w.to_f64_lossy();
            if w <= 0.0 {
                continue;
            }
            last_positive = idx;
            acc += w;
            if u < acc {
                return idx;
            }
        }
        last_positive
    }

    /// Draws a member with `select` and, for uncertain members, its perturbation with `perturb`.
    pub fn realize_split<R1, R2>(&self, select: &mut R1, perturb: &mut R2) -> ConstraintComponent<T>
    where
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        let idx = self.pick(select);
        if idx < self.deterministic.len() {
            self.deterministic[idx].clone()
        } else {
            let u = &self.uncertain[idx - self.deterministic.len()];
            let delta = u.draw_delta(perturb);
            u.component_with_delta(&delta)
        }
    }

    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> ConstraintComponent<T> {
        let idx = self.pick(rng);
        if idx < self.deterministic.len() {
            self.deterministic[idx].clone()
        } else {
            let u = &self.uncertain[idx - self.deterministic.len()];
            let delta = u.draw_delta(rng);
            u.component_with_delta(&delta)
        }
    }

    /// Projection onto the realized component followed by the trailing ones.
    pub fn project_realized(&self, x: &[T], realized: &ConstraintComponent<T>) -> Vec<T> {
        let mut y = realized.project(x);
        for c in &self.trailing {
            y = c.project(&y);
        }
        y
    }
}

/// Projection onto `∩ comps` by Dykstra's algorithm. Stops once a full sweep
/// moves the iterate by less than `tol`.
pub fn project_intersection<T: Scalar>(
    x: &[T],
    comps: &[ConstraintComponent<T>],
    tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    match comps {
        [] => return Ok(x.to_vec()),
        [only] => return Ok(only.project(x)),
        _ => {}
    }
    let d = x.len();
    let mut y = x.to_vec();
    let mut increments = vec![vec![T::zero(); d]; comps.len()];
    let tol_sq = tol * tol;
    for _ in 0..max_iter {
        let before = y.clone();
        // On an empty intersection the iterates can cycle while the increments
        // diverge, so both must settle.
        let mut inc_change = T::zero();
        for (comp, inc) in comps.iter().zip(increments.iter_mut()) {
            let shifted: Vec<T> = y.iter().zip(inc.iter()).map(|(&a, &b)| a + b).collect();
            let projected = comp.project(&shifted);
            for ((p, s), q) in inc.iter_mut().zip(&shifted).zip(&projected) {
                let next = *s - *q;
                inc_change += (next - *p) * (next - *p);
                *p = next;
            }
            y = projected;
        }
        if dist_sq(&before, &y) < tol_sq && inc_change < tol_sq {
            return Ok(y);
        }
    }
    Err(Error::NotConverged {
        what: "Dykstra projection",
        iterations: max_iter,
    })
}

/// Monte-Carlo diagnostic for the set-regularity constant: the largest ratio
/// `dist²(x, X) / E_Ω[dist²(x, X_i^Ω)]` over points `x` drawn uniformly in
/// `[lo, hi]` and over agents. Deterministic members enter the expectation
/// exactly; uncertain ones through `n_draws` realizations. Trailing components
/// are intersected with each member. Samples where every member contains `x`
/// are skipped.
pub fn estimate_regularity<T: Scalar, R: Rng + ?Sized>(
    lcs: &[LocalConstraint<T>],
    feasible: &[ConstraintComponent<T>],
    lo: &[T],
    hi: &[T],
    rng: &mut R,
    n_samples: usize,
    n_draws: usize,
) -> Result<T> {
    if lo.len() != hi.len() {
        return Err(Error::DimensionMismatch {
            expected: lo.len(),
            got: hi.len(),
        });
    }
    let floor = T::epsilon() * T::epsilon();
    let member_dist_sq = |x: &[T],
                          member: ConstraintComponent<T>,
                          trailing: &[ConstraintComponent<T>]|
     -> Result<T> {
        if trailing.is_empty() {
            let dd = member.dist(x);
            return Ok(dd * dd);
        }
        let mut set = Vec::with_capacity(trailing.len() + 1);
        set.push(member);
        set.extend(trailing.iter().cloned());
        Ok(dist_sq(x, &project_set(x, &set)?))
    };
    let mut best: Option<T> = None;
    for _ in 0..n_samples {
        let x: Vec<T> = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| {
                let u: f64 = rng.random();
                l + (h - l) * T::lit(u)
            })
            .collect();
        let to_set = dist_sq(&x, &project_set(&x, feasible)?);
        for lc in lcs {
            let mut expected = T::zero();
            for (comp, &w) in lc.deterministic.iter().zip(&lc.weights) {
                expected += w * member_dist_sq(&x, comp.clone(), &lc.trailing)?;
            }
            let offset = lc.deterministic.len();
            for (u, &w) in lc.uncertain.iter().zip(&lc.weights[offset..]) {
                let draws = n_draws.max(1);
                let mut acc = T::zero();
                for _ in 0..draws {
                    let delta = u.draw_delta(rng);
                    acc += member_dist_sq(&x, u.component_with_delta(&delta), &lc.trailing)?;
                }
                expected += w * acc / T::from_usize_lossy(draws);
            }
            if expected <= floor {
                continue;
            }
            let ratio = to_set / expected;
            best = Some(best.map_or(ratio, |b: T| b.max(ratio)));
        }
    }
    best.ok_or_else(|| {
        Error::Degenerate("no sampled point lies outside the sampled components".into())
    })
}
