//! Distributed robust MPC benchmark.
//!
//! A double integrator `x(t) = A x(t−1) + B u(t)` starting at rest at `(7, 0)`
//! is steered over `T = 10` steps. Agent `i` tracks its private target `z_i`;
//! the controls are boxed by `‖u‖∞ <= 2` and the terminal state must satisfy
//! four halfspaces `(a_ℓ + δ_ℓ)'x(T) <= b_ℓ` for every perturbation
//! `‖δ_ℓ‖∞ <= β_ℓ`. States are eliminated, so all sets live in control space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{AffineLift, ConstraintComponent, LocalConstraint, UncertainHalfspace};
use crate::engine::Problem;
use crate::error::{Error, Result};
use crate::harness::derive_seed;
use crate::linalg::{
    cholesky, dist_sq, dot, extreme_eigenvalues, norm, solve_lower, solve_lower_transposed, Matrix,
};
use crate::objective::{rollout, MpcObjective, Objective, Quadratic};
use crate::polyhedron::{halfspace_rows, project_polyhedron, project_set, Row};
use crate::scalar::Scalar;

/// Terminal constraint `(a + δ)'x(T) <= b` for all `‖δ‖∞ <= beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct TerminalConstraint<T> {
    pub a: Vec<T>,
    pub b: T,
    pub beta: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct MpcInstance<T> {
    #[serde(rename = "A")]
    pub a: Matrix<T>,
    #[serde(rename = "B")]
    pub b: Vec<T>,
    pub x0: Vec<T>,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub r: T,
    pub targets: Vec<Vec<T>>,
    pub terminal: Vec<TerminalConstraint<T>>,
    pub u_max: T,
}

pub const HORIZON: usize = 10;
pub const CONTROL_PENALTY: f64 = 0.1;
pub const CONTROL_BOUND: f64 = 2.0;
const MAX_INSTANCE_ATTEMPTS: u64 = 16;

/// Feasible-set representation in control space: every terminal halfspace
/// expanded over the sign patterns of its perturbation, plus the control box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct DeterministicEquivalent<T> {
    /// `(g, h)` meaning `g'u <= h`.
    pub halfspaces: Vec<(Vec<T>, T)>,
    pub u_max: T,
}

impl<T: Scalar> MpcInstance<T> {
    /// The fixed system data with no targets or terminal constraints yet.
    pub fn base() -> Self {
        Self {
            a: Matrix::from_rows(vec![vec![T::one(), T::one()], vec![T::zero(), T::one()]])
                .expect("2x2"),
            b: vec![T::lit(0.5), T::one()],
            x0: vec![T::lit(7.0), T::zero()],
            horizon: HORIZON,
            r: T::lit(CONTROL_PENALTY),
            targets: Vec::new(),
            terminal: Vec::new(),
            u_max: T::lit(CONTROL_BOUND),
        }
    }

    pub fn m(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(self.u_max > T::zero()) {
            return Err(Error::InvalidConfig(
                "control bound must be positive".into(),
            ));
        }
        if self.targets.len() < 2 {
            return Err(Error::InvalidConfig("need at least 2 agents".into()));
        }
        for t in &self.terminal {
            if t.a.len() != self.x0.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.x0.len(),
                    got: t.a.len(),
                });
            }
            if !(t.beta >= T::zero()) {
                return Err(Error::InvalidConfig(
                    "perturbation radius must be nonnegative".into(),
                ));
            }
        }
        for f in self.objectives() {
            f.validate()?;
        }
        Ok(())
    }

    pub fn objectives(&self) -> Vec<MpcObjective<T>> {
        self.targets
            .iter()
            .map(|z| MpcObjective {
                a: self.a.clone(),
                b: self.b.clone(),
                x0: self.x0.clone(),
                horizon: self.horizon,
                z: z.clone(),
                r: self.r,
            })
            .collect()
    }

    /// Free response `A^T x0`.
    pub fn free_endpoint(&self) -> Vec<T> {
        rollout(&self.a, &self.b, &self.x0, &vec![T::zero(); self.horizon])
            .pop()
            .unwrap_or_else(|| self.x0.clone())
    }

    /// `u ↦ x(T) = M u + A^T x0`, with column `s` of `M` equal to `A^{T−s}B`.
    pub fn terminal_lift(&self) -> AffineLift<T> {
        let n = self.x0.len();
        let mut map = Matrix::zeros(n, self.horizon);
        let mut col = self.b.clone();
        for s in (0..self.horizon).rev() {
            for r in 0..n {
                map[(r, s)] = col[r];
            }
            col = self.a.mul_vec(&col);
        }
        AffineLift {
            map,
            shift: self.free_endpoint(),
        }
    }

    pub fn terminal_state(&self, u: &[T]) -> Vec<T> {
        rollout(&self.a, &self.b, &self.x0, u)
            .pop()
            .unwrap_or_else(|| self.x0.clone())
    }

    /// Uncertain terminal halfspaces stated in control space.
    pub fn uncertain_halfspaces(&self) -> Result<Vec<UncertainHalfspace<T>>> {
        let lift = self.terminal_lift();
        self.terminal
            .iter()
            .map(|t| UncertainHalfspace::new(t.a.clone(), t.b, t.beta)?.with_lift(lift.clone()))
            .collect()
    }

    pub fn control_box(&self) -> ConstraintComponent<T> {
        ConstraintComponent::Box {
            lo: vec![-self.u_max; self.horizon],
            hi: vec![self.u_max; self.horizon],
        }
    }
}

/// Seeded benchmark instance.
///
/// Recipe, with `x_f = A^T x0 = (7, 0)` the free-response endpoint:
/// * targets `z_i` iid uniform in `x_f + [−1, 1]²`, near the middle of the
///   terminal polytope, so the robust constraints shape the transient rather
///   than the optimum;
/// * terminal polytope center `c = x_f + U[−0.5, 0.5]²`;
/// * normals `a_ℓ = (cos θ_ℓ, sin θ_ℓ)` with `θ_ℓ = ℓπ/2 + U[−π/8, π/8]`;
/// * offsets `b_ℓ = a_ℓ'c + w_ℓ`, half-widths `w_ℓ ~ U[1.5, 2.5]`;
/// * radii `β_ℓ ~ U[0.005, 0.02]`.
///
/// The robust feasible set is checked nonempty; failed draws are retried with
/// the next sub-seed.
pub fn default_instance<T: Scalar>(m: usize, seed: u64) -> Result<MpcInstance<T>> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 agents, got {m}"
        )));
    }
    for attempt in 0..MAX_INSTANCE_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt));
        let inst = draw_instance::<T>(m, &mut rng);
        if find_feasible_point(&inst)?.is_some() {
            return Ok(inst);
        }
        log::debug!("instance draw {attempt} for seed {seed} infeasible, retrying");
    }
    Err(Error::Infeasible(format!(
        "no feasible instance after {MAX_INSTANCE_ATTEMPTS} draws"
    )))
}

fn draw_instance<T: Scalar>(m: usize, rng: &mut ChaCha8Rng) -> MpcInstance<T> {
    let mut inst = MpcInstance::<T>::base();
    let xf: Vec<f64> = inst
        .free_endpoint()
        .iter()
        .map(|v| v.to_f64_lossy())
        .collect();
    inst.targets = (0..m)
        .map(|_| {
            vec![
                T::lit(xf[0] + rng.random_range(-1.0..1.0)),
                T::lit(xf[1] + rng.random_range(-1.0..1.0)),
            ]
        })
        .collect();
    let center = [
        xf[0] + rng.random_range(-0.5..0.5),
        xf[1] + rng.random_range(-0.5..0.5),
    ];
    let eighth = std::f64::consts::FRAC_PI_8;
    inst.terminal = (0..4)
        .map(|l| {
            let theta = l as f64 * std::f64::consts::FRAC_PI_2 + rng.random_range(-eighth..eighth);
            let a = [theta.cos(), theta.sin()];
            let width = rng.random_range(1.5..2.5);
            let beta = rng.random_range(0.005..0.02);
            TerminalConstraint {
                a: a.iter().map(|&v| T::lit(v)).collect(),
                b: T::lit(a[0] * center[0] + a[1] * center[1] + width),
                beta: T::lit(beta),
            }
        })
        .collect();
    inst
}

/// The projection of the origin onto the robust feasible set, or `None` when
/// that set is empty.
pub fn find_feasible_point<T: Scalar>(inst: &MpcInstance<T>) -> Result<Option<Vec<T>>> {
    let eq = to_control_space(inst)?;
    let comps = match eq.components() {
        Ok(c) => c,
        Err(Error::Infeasible(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let start = vec![T::zero(); inst.horizon];
    let p = match project_set(&start, &comps) {
        Ok(p) => p,
        Err(Error::Infeasible(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(eq.contains(&p, T::lit(1e-8)).then_some(p))
}

/// The four halfspaces `(a + βs)'x <= b`, `s ∈ {−1, +1}²`, whose intersection
/// is `{x : a'x + β‖x‖₁ <= b}`.
pub fn expand_uncertainty<T: Scalar>(a: &[T], b: T, beta: T) -> Result<Vec<(Vec<T>, T)>> {
    if !(beta >= T::zero()) {
        return Err(Error::InvalidConstraint(
            "perturbation radius must be nonnegative".into(),
        ));
    }
    UncertainHalfspace::new(a.to_vec(), b, beta)?.corner_halfspaces()
}

/// Maps every expanded terminal halfspace `ã'x(T) <= b` to control space:
/// `g_s = (A^{T−s}B)'ã`, `h = b − ã'A^T x0`.
pub fn to_control_space<T: Scalar>(inst: &MpcInstance<T>) -> Result<DeterministicEquivalent<T>> {
    let mut halfspaces = Vec::with_capacity(4 * inst.terminal.len());
    for u in inst.uncertain_halfspaces()? {
        halfspaces.extend(u.corner_halfspaces()?);
    }
    Ok(DeterministicEquivalent {
        halfspaces,
        u_max: inst.u_max,
    })
}

impl<T: Scalar> DeterministicEquivalent<T> {
    pub fn dim(&self) -> usize {
        self.halfspaces.first().map_or(0, |(g, _)| g.len())
    }

    /// Halfspaces with exact duplicates removed.
    pub fn distinct(&self) -> Vec<(Vec<T>, T)> {
        let mut out: Vec<(Vec<T>, T)> = Vec::new();
        for h in &self.halfspaces {
            if !out.contains(h) {
                out.push(h.clone());
            }
        }
        out
    }

    pub fn contains(&self, u: &[T], tol: T) -> bool {
        u.iter().all(|v| v.abs() <= self.u_max + tol)
            && self.halfspaces.iter().all(|(g, h)| dot(g, u) - *h <= tol)
    }

    pub fn max_halfspace_violation(&self, u: &[T]) -> T {
        self.halfspaces
            .iter()
            .map(|(g, h)| dot(g, u) - *h)
            .fold(T::zero(), T::max)
    }

    /// Projectable components of the set, box last. Vacuous halfspaces (zero
    /// normal, nonnegative offset) are dropped.
    pub fn components(&self) -> Result<Vec<ConstraintComponent<T>>> {
        let mut comps = Vec::new();
        for (g, h) in self.distinct() {
            if norm(&g) > T::zero() {
                comps.push(ConstraintComponent::Halfspace { a: g, b: h });
            } else if h < T::zero() {
                return Err(Error::Infeasible("constraint 0 <= h with h < 0".into()));
            }
        }
        comps.push(ConstraintComponent::Box {
            lo: vec![-self.u_max; self.dim()],
            hi: vec![self.u_max; self.dim()],
        });
        Ok(comps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct BaselineSolution<T> {
    pub u: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    /// `‖u − Π[u − ∇f(u)/L]‖` at the returned point.
    pub kkt_residual: T,
    pub max_halfspace_violation: T,
    pub box_violation: T,
    /// Whether the projected-gradient point was replaced by the exact QP solution.
    pub polished: bool,
}

pub const BASELINE_TOL: f64 = 1e-9;
pub const BASELINE_MAX_ITER: usize = 2_000_000;

/// Projected gradient with step `1/L` on a quadratic over `∩ comps`, with
/// exact projections. Stops when an iteration moves less than `tol`.
pub fn solve_projected_gradient<T: Scalar>(
    f: &Quadratic<T>,
    comps: &[ConstraintComponent<T>],
    start: Vec<T>,
    tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, usize, T)> {
    let (top, _) = extreme_eigenvalues(f.quad())?;
    let lipschitz = T::lit(2.0) * top;
    if !(lipschitz > T::zero()) {
        return Err(Error::Degenerate("objective has no curvature".into()));
    }
    let step = |u: &[T]| -> Result<Vec<T>> {
        let g = f.gradient(u)?;
        let y: Vec<T> = u
            .iter()
            .zip(&g)
            .map(|(&ui, &gi)| ui - gi / lipschitz)
            .collect();
        project_set(&y, comps)
    };
    let mut u = project_set(&start, comps)?;
    for it in 1..=max_iter {
        let next = step(&u)?;
        let moved = dist_sq(&next, &u).sqrt();
        u = next;
        if moved < tol {
            let residual = dist_sq(&u, &step(&u)?).sqrt();
            return Ok((u, it, residual));
        }
    }
    Err(Error::NotConverged {
        what: "projected gradient baseline",
        iterations: max_iter,
    })
}

/// Reference optimum of `Σ_i f_i` over the deterministic equivalent.
pub fn solve_baseline<T: Scalar>(inst: &MpcInstance<T>, tol: T) -> Result<BaselineSolution<T>> {
    inst.validate()?;
    let quads = inst
        .objectives()
        .iter()
        .map(MpcObjective::to_quadratic)
        .collect::<Result<Vec<_>>>()?;
    let total = Quadratic::sum(&quads)?;
    let eq = to_control_space(inst)?;
    let comps = eq.components()?;
    let start = find_feasible_point(inst)?
        .ok_or_else(|| Error::Infeasible("deterministic equivalent is empty".into()))?;
    let (mut u, iterations, mut kkt_residual) =
        solve_projected_gradient(&total, &comps, start, tol, BASELINE_MAX_ITER)?;
    // Stopping on a small step leaves an error of order tol·κ; the exact
    // solution is accepted when it is at least as good and as feasible.
    let mut polished = false;
    match solve_qp_exact(&total, &comps) {
        Ok(exact) => {
            let slack = T::lit(1e-12) * (T::one() + total.value(&u)?.abs());
            let residual = fixed_point_residual(&total, &comps, &exact)?;
            if total.value(&exact)? <= total.value(&u)? + slack
                && eq.max_halfspace_violation(&exact)
                    <= eq.max_halfspace_violation(&u).max(T::lit(1e-12))
                && residual <= kkt_residual
            {
                u = exact;
                kkt_residual = residual;
                polished = true;
            }
        }
        Err(e) => log::debug!("exact QP polish unavailable: {e}"),
    }
    let u: Vec<T> = u
        .iter()
        .map(|v| v.max(-inst.u_max).min(inst.u_max))
        .collect();
    let box_violation = u
        .iter()
        .map(|v| v.abs() - inst.u_max)
        .fold(T::zero(), T::max);
    Ok(BaselineSolution {
        objective: total.value(&u)?,
        max_halfspace_violation: eq.max_halfspace_violation(&u),
        box_violation,
        u,
        iterations,
        kkt_residual,
        polished,
    })
}

/// `‖u − Π[u − ∇f(u)/L]‖`
fn fixed_point_residual<T: Scalar>(
    f: &Quadratic<T>,
    comps: &[ConstraintComponent<T>],
    u: &[T],
) -> Result<T> {
    let (top, _) = extreme_eigenvalues(f.quad())?;
    let lipschitz = T::lit(2.0) * top;
    let y: Vec<T> = u
        .iter()
        .zip(&f.gradient(u)?)
        .map(|(&ui, &gi)| ui - gi / lipschitz)
        .collect();
    Ok(dist_sq(u, &project_set(&y, comps)?).sqrt())
}

/// Exact minimizer of a strictly convex quadratic over `∩ comps`. With
/// `2Q = LL'` and `w = L'u`, `u'Qu + q'u = ½‖w + L⁻¹q‖² + const`, so the
/// minimizer is the Euclidean projection of `−L⁻¹q` onto the transformed
/// polyhedron `{w : (L⁻¹a)'w <= b}`.
pub fn solve_qp_exact<T: Scalar>(
    f: &Quadratic<T>,
    comps: &[ConstraintComponent<T>],
) -> Result<Vec<T>> {
    let n = f.lin().len();
    let mut hessian = f.quad().clone();
    for i in 0..n {
        for j in 0..n {
            hessian[(i, j)] = f.quad()[(i, j)] + f.quad()[(i, j)];
        }
    }
    let l = cholesky(&hessian)
        .ok_or_else(|| Error::Degenerate("objective is not strictly convex".into()))?;
    let rows: Vec<Row<T>> = halfspace_rows(comps)
        .into_iter()
        .filter_map(|r| Row::normalized(solve_lower(&l, &r.a), r.b))
        .collect();
    let target: Vec<T> = solve_lower(&l, f.lin()).iter().map(|&v| -v).collect();
    let w = project_polyhedron(&target, &rows)?;
    Ok(solve_lower_transposed(&l, &w))
}

/// Per-agent objectives and random local constraints for the gossip iteration.
/// Each agent samples one of the terminal constraints uniformly, perturbs its
/// normal, and then projects onto the control box. The feasible-set metric
/// uses the deterministic equivalent.
pub fn grp_problem<T: Scalar>(inst: &MpcInstance<T>) -> Result<Problem<T, Quadratic<T>>> {
    inst.validate()?;
    let objectives = inst
        .objectives()
        .iter()
        .map(MpcObjective::to_quadratic)
        .collect::<Result<Vec<_>>>()?;
    let local = LocalConstraint::uniform(Vec::new(), inst.uncertain_halfspaces()?)?
        .with_trailing(vec![inst.control_box()]);
    let feasible = to_control_space(inst)?.components()?;
    Ok(Problem::new(objectives, vec![local; inst.m()])?.with_feasible_set(feasible))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_matches_system_data() {
        let inst = MpcInstance::<f64>::base();
        assert_eq!(inst.free_endpoint(), vec![7.0, 0.0]);
        assert_eq!(inst.u_max, 2.0);
        assert_eq!(inst.horizon, 10);
    }

    #[test]
    fn expansion_sign_patterns() {
        let hs = expand_uncertainty(&[1.0, 0.0], 1.0, 1.0).unwrap();
        let normals: Vec<Vec<f64>> = hs.iter().map(|(a, _)| a.clone()).collect();
        assert_eq!(
            normals,
            vec![
                vec![2.0, 1.0],
                vec![2.0, -1.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0]
            ]
        );
        assert!(hs.iter().all(|(_, b)| *b == 1.0));
        let flat = expand_uncertainty(&[1.0, 0.0], 1.0, 0.0).unwrap();
        assert!(flat.iter().all(|h| *h == (vec![1.0, 0.0], 1.0)));
    }

    #[test]
    fn horizon_one_control_space() {
        let mut inst = MpcInstance::<f64>::base();
        inst.horizon = 1;
        inst.targets = vec![vec![7.0, 0.0]; 2];
        inst.terminal = vec![TerminalConstraint {
            a: vec![1.0, 0.0],
            b: 10.0,
            beta: 0.0,
        }];
        let eq = to_control_space(&inst).unwrap();
        assert_eq!(eq.halfspaces.len(), 4);
        assert_eq!(eq.distinct().len(), 1);
        let (g, h) = &eq.halfspaces[0];
        assert_eq!(g, &vec![0.5]);
        assert_eq!(*h, 3.0);
    }

    #[test]
    fn zero_radius_instance_has_four_distinct_halfspaces() {
        let mut inst = default_instance::<f64>(4, 1).unwrap();
        for t in &mut inst.terminal {
            t.beta = 0.0;
        }
        let eq = to_control_space(&inst).unwrap();
        assert_eq!(eq.halfspaces.len(), 16);
        assert_eq!(eq.distinct().len(), 4);
    }

    #[test]
    fn default_instance_is_deterministic() {
        let a = default_instance::<f64>(4, 17).unwrap();
        let b = default_instance::<f64>(4, 17).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
        assert_ne!(a, default_instance::<f64>(4, 18).unwrap());
        assert_eq!(a.terminal.len(), 4);
        assert!(default_instance::<f64>(1, 1).is_err());
    }

    #[test]
    fn local_sets_are_shared() {
        let inst = default_instance::<f64>(5, 3).unwrap();
        let p = grp_problem(&inst).unwrap();
        assert!(p.constraints.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(p.feasible_set.as_ref().unwrap().len(), 17);
    }
}
