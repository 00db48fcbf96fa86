//! Exact Euclidean projection onto an intersection of halfspaces.
//!
//! `Π[x]` is `x + z` with `z` the least-norm solution of `â_r'z <= ĉ_r`,
//! `ĉ_r = b̂_r − â_r'x`. That least-distance program is solved through its
//! nonnegative least-squares dual (Lawson–Hanson), which terminates after
//! finitely many active-set changes. Dykstra's method converges to the same
//! point but only linearly, at a rate that degrades badly when two active
//! halfspaces are nearly parallel.

use crate::constraints::{
    project_intersection, ConstraintComponent, DYKSTRA_MAX_ITER, DYKSTRA_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, dot, least_squares, norm};
use crate::scalar::Scalar;

/// Halfspace `a'y <= b` with `‖a‖ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row<T> {
    pub a: Vec<T>,
    pub b: T,
}

impl<T: Scalar> Row<T> {
    /// `a'y <= b` rescaled to a unit normal; `None` for a zero normal.
    pub fn normalized(a: Vec<T>, b: T) -> Option<Self> {
        let n = norm(&a);
        (n > T::zero()).then(|| Self {
            a: a.iter().map(|&v| v / n).collect(),
            b: b / n,
        })
    }
}

/// The components as unit-normal halfspaces; boxes and hyperplanes are split
/// into pairs, infinite box faces are dropped.
pub fn halfspace_rows<T: Scalar>(comps: &[ConstraintComponent<T>]) -> Vec<Row<T>> {
    let mut rows = Vec::new();
    for c in comps {
        match c {
            ConstraintComponent::Halfspace { a, b } => rows.extend(Row::normalized(a.clone(), *b)),
            ConstraintComponent::Hyperplane { a, b } => {
                rows.extend(Row::normalized(a.clone(), *b));
                rows.extend(Row::normalized(a.iter().map(|&v| -v).collect(), -*b));
            }
            ConstraintComponent::Box { lo, hi } => {
                let d = lo.len();
                for j in 0..d {
                    let mut e = vec![T::zero(); d];
                    if hi[j].is_finite() {
                        e[j] = T::one();
                        rows.push(Row {
                            a: e.clone(),
                            b: hi[j],
                        });
                    }
                    if lo[j].is_finite() {
                        e[j] = -T::one();
                        rows.push(Row { a: e, b: -lo[j] });
                    }
                }
            }
            ConstraintComponent::FullSpace => {}
        }
    }
    rows
}

/// Projection of `x` onto `{y : a_r'y <= b_r for all r}`.
pub fn project_polyhedron<T: Scalar>(x: &[T], rows: &[Row<T>]) -> Result<Vec<T>> {
    let d = x.len();
    if let Some(r) = rows.iter().find(|r| r.a.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: r.a.len(),
        });
    }
    let slack: Vec<T> = rows.iter().map(|r| r.b - dot(&r.a, x)).collect();
    let scale = slack.iter().fold(T::zero(), |m, s| m.max(s.abs()));
    if slack.iter().all(|&s| s >= T::zero()) {
        return Ok(x.to_vec());
    }
    let slack: Vec<T> = slack.iter().map(|&s| s / scale).collect();
    // Dual columns (−â_r, −ĉ_r) against the target e_{d+1}.
    let cols: Vec<Vec<T>> = rows
        .iter()
        .zip(&slack)
        .map(|(r, &s)| r.a.iter().map(|&v| -v).chain(std::iter::once(-s)).collect())
        .collect();
    let mut target = vec![T::zero(); d + 1];
    target[d] = T::one();
    let u = nnls(&cols, &target)?;
    let mut resid: Vec<T> = target.iter().map(|&t| -t).collect();
    for (c, &uj) in cols.iter().zip(&u) {
        if uj > T::zero() {
            for (r, &cv) in resid.iter_mut().zip(c) {
                *r += uj * cv;
            }
        }
    }
    let denom = resid[d];
    if !(denom.abs() > T::epsilon() * T::lit(16.0)) {
        return Err(Error::Infeasible("polyhedron is empty".into()));
    }
    let y: Vec<T> = x
        .iter()
        .zip(&resid[..d])
        .map(|(&xi, &ri)| xi - ri / denom * scale)
        .collect();
    let worst = rows
        .iter()
        .map(|r| dot(&r.a, &y) - r.b)
        .fold(T::zero(), T::max);
    let allowed = T::lit(1e3) * T::epsilon() * (T::one() + scale + norm(x));
    if worst > allowed {
        return Err(Error::NotConverged {
            what: "polyhedral projection",
            iterations: rows.len(),
        });
    }
    Ok(y)
}

/// `min ‖E u − f‖` over `u >= 0`, with `E` given by columns.
fn nnls<T: Scalar>(cols: &[Vec<T>], f: &[T]) -> Result<Vec<T>> {
    let p = cols.len();
    let mut u = vec![T::zero(); p];
    let mut passive: Vec<usize> = Vec::new();
    let col_scale = cols.iter().map(|c| norm(c)).fold(T::zero(), T::max);
    let wtol = T::lit(1e2) * T::epsilon() * col_scale * T::from_usize_lossy(p.max(f.len()));
    let max_outer = 3 * p + 10;
    let solve = |set: &[usize]| -> Option<Vec<T>> {
        let sub: Vec<Vec<T>> = set.iter().map(|&j| cols[j].clone()).collect();
        least_squares(&sub, f)
    };
    for _ in 0..max_outer {
        let mut resid = f.to_vec();
        for (c, &uj) in cols.iter().zip(&u) {
            if uj > T::zero() {
                for (r, &cv) in resid.iter_mut().zip(c) {
                    *r -= uj * cv;
                }
            }
        }
        let w: Vec<T> = cols.iter().map(|c| dot(c, &resid)).collect();
        let mut excluded = vec![false; p];
        let entering = loop {
            let best = (0..p)
                .filter(|j| !passive.contains(j) && !excluded[*j] && w[*j] > wtol)
                .max_by(|&a, &b| w[a].partial_cmp(&w[b]).expect("finite dual"));
            let Some(t) = best else { break None };
            let mut trial = passive.clone();
            trial.push(t);
            match solve(&trial) {
                Some(s) if *s.last().expect("nonempty") > T::zero() => break Some(t),
                _ => excluded[t] = true,
            }
        };
        let Some(t) = entering else {
            return Ok(u);
        };
        passive.push(t);
        for _ in 0..=p {
            let s = solve(&passive).ok_or_else(|| {
                Error::Degenerate("dependent active set in polyhedral projection".into())
            })?;
            if s.iter().all(|&v| v > T::zero()) {
                for (&j, &v) in passive.iter().zip(&s) {
                    u[j] = v;
                }
                break;
            }
            let mut step = T::one();
            for (&j, &v) in passive.iter().zip(&s) {
                if v <= T::zero() {
                    step = step.min(u[j] / (u[j] - v));
                }
            }
            for (&j, &v) in passive.iter().zip(&s) {
                let uj = u[j];
                u[j] = uj + step * (v - uj);
            }
            let tiny = T::epsilon() * T::lit(16.0);
            passive.retain(|&j| {
                if u[j] <= tiny {
                    u[j] = T::zero();
                    false
                } else {
                    true
                }
            });
            if passive.is_empty() {
                break;
            }
        }
    }
    Err(Error::NotConverged {
        what: "nonnegative least squares",
        iterations: max_outer,
    })
}

/// `Π_{∩ comps}[x]`: exact active-set projection, with Dykstra as fallback
/// when the active set is numerically degenerate.
pub fn project_set<T: Scalar>(x: &[T], comps: &[ConstraintComponent<T>]) -> Result<Vec<T>> {
    match comps {
        [] => return Ok(x.to_vec()),
        [only] => return Ok(only.project(x)),
        _ => {}
    }
    match project_polyhedron(x, &halfspace_rows(comps)) {
        Err(e @ (Error::Degenerate(_) | Error::NotConverged { .. })) => {
            log::debug!("falling back to Dykstra: {e}");
            project_intersection(x, comps, T::lit(DYKSTRA_TOL), DYKSTRA_MAX_ITER)
        }
        other => other,
    }
}

/// `dist(x, ∩ comps)`
pub fn dist_set<T: Scalar>(x: &[T], comps: &[ConstraintComponent<T>]) -> Result<T> {
    Ok(dist_sq(x, &project_set(x, comps)?).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hs(a: &[f64], b: f64) -> ConstraintComponent<f64> {
        ConstraintComponent::halfspace(a.to_vec(), b).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn negative_orthant_vertex() {
        let comps = vec![hs(&[1.0, 0.0], 0.0), hs(&[0.0, 1.0], 0.0)];
        assert!(close(
            &project_set(&[1.0, 1.0], &comps).unwrap(),
            &[0.0, 0.0]
        ));
        assert!(close(
            &project_set(&[-1.0, 3.0], &comps).unwrap(),
            &[-1.0, 0.0]
        ));
        assert_eq!(
            project_set(&[-1.0, -2.0], &comps).unwrap(),
            vec![-1.0, -2.0]
        );
    }

    #[test]
    fn box_and_hyperplane_rows() {
        let comps = vec![
            ConstraintComponent::cube(2, 1.0).unwrap(),
            ConstraintComponent::hyperplane(vec![1.0, 1.0], 0.0).unwrap(),
        ];
        assert_eq!(halfspace_rows(&comps).len(), 6);
        // Onto the segment from (−1, 1) to (1, −1).
        assert!(close(
            &project_set(&[3.0, 2.0], &comps).unwrap(),
            &[0.5, -0.5]
        ));
        assert!(close(
            &project_set(&[5.0, -4.0], &comps).unwrap(),
            &[1.0, -1.0]
        ));
    }

    #[test]
    fn nearly_parallel_pair() {
        let eps = 1e-3;
        let comps = vec![hs(&[1.0, eps], 1.0), hs(&[1.0, -eps], 1.0)];
        // The two boundaries cross at (1, 0); far to the right the vertex is the answer.
        assert!(close(
            &project_set(&[4.0, 0.0], &comps).unwrap(),
            &[1.0, 0.0]
        ));
    }

    #[test]
    fn empty_polyhedron_detected() {
        let comps = vec![hs(&[1.0, 0.0], -1.0), hs(&[-1.0, 0.0], -1.0)];
        assert!(matches!(
            project_set(&[0.0, 0.0], &comps),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn distance_matches_geometry() {
        let comps = vec![hs(&[1.0, 0.0], 0.0), hs(&[0.0, 1.0], 0.0)];
        assert!((dist_set(&[3.0, 4.0], &comps).unwrap() - 5.0).abs() < 1e-12);
    }
}
