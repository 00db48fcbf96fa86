use grp_core::linalg::Matrix;
use grp_core::mpc::MpcInstance;
use grp_core::objective::{rollout, MpcObjective, Objective, Quadratic};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn point(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-r..r)).collect()
}

fn mpc(z: Vec<f64>, horizon: usize) -> MpcObjective<f64> {
    let base = MpcInstance::<f64>::base();
    MpcObjective::new(base.a, base.b, base.x0, horizon, z, base.r).unwrap()
}

/// `Q = R'R + shift·I` for a random `R`.
fn random_quadratic(rng: &mut ChaCha8Rng, d: usize, shift: f64) -> Quadratic<f64> {
    let r: Vec<Vec<f64>> = (0..d).map(|_| point(rng, d, 1.0)).collect();
    let mut q = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            q[(i, j)] = (0..d).map(|k| r[k][i] * r[k][j]).sum::<f64>();
        }
        q[(i, i)] += shift;
    }
    Quadratic::new(q, point(rng, d, 2.0), rng.random_range(-1.0..1.0)).unwrap()
}

fn central_difference<F: Objective<f64>>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            (f.value(&xp).unwrap() - f.value(&xm).unwrap()) / (2.0 * h)
        })
        .collect()
}

fn assert_fd<F: Objective<f64>>(f: &F, rng: &mut ChaCha8Rng, radius: f64) {
    for _ in 0..20 {
        let x = point(rng, f.dim(), radius);
        let g = f.gradient(&x).unwrap();
        let fd = central_difference(f, &x, 1e-5);
        let rel = norm(&diff(&g, &fd)) / norm(&g).max(1.0);
        assert!(rel < 1e-6, "relative error {rel}");
    }
}

#[test]
fn finite_differences_mpc() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        let z = vec![rng.random_range(5.0..10.0), rng.random_range(-2.0..2.0)];
        assert_fd(&mpc(z, 10), &mut rng, 2.0);
    }
}

#[test]
fn finite_differences_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in [1, 3, 6] {
        let f = random_quadratic(&mut rng, d, 0.1);
        assert_fd(&f, &mut rng, 3.0);
    }
}

#[test]
fn quadratic_form_matches_mpc() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = mpc(vec![8.0, 1.0], 10);
    let q = f.to_quadratic().unwrap();
    for _ in 0..50 {
        let u = point(&mut rng, 10, 2.0);
        let (a, b) = (f.value(&u).unwrap(), q.value(&u).unwrap());
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        let g = diff(&f.gradient(&u).unwrap(), &q.gradient(&u).unwrap());
        assert!(norm(&g) <= 1e-9 * norm(&f.gradient(&u).unwrap()).max(1.0));
    }
}

#[test]
fn horizon_one_hand_expansion() {
    let q = mpc(vec![0.0, 0.0], 1).to_quadratic().unwrap();
    assert!((q.quad()[(0, 0)] - 1.25).abs() < 1e-15);
    let states = rollout(
        &MpcInstance::<f64>::base().a,
        &[0.5, 1.0],
        &[7.0, 0.0],
        &[2.0],
    );
    assert_eq!(states, vec![vec![8.0, 2.0]]);
}

#[test]
fn resting_state_costs_nothing() {
    let base = MpcInstance::<f64>::base();
    let f = MpcObjective::new(base.a, base.b, base.x0, 10, vec![7.0, 0.0], 0.0).unwrap();
    let u0 = vec![0.0; 10];
    assert_eq!(f.value(&u0).unwrap(), 0.0);
    assert!(norm(&f.gradient(&u0).unwrap()) == 0.0);
    assert!(f.rollout(&u0).iter().all(|x| x == &vec![7.0, 0.0]));
}

#[test]
fn simple_constants() {
    let id = Quadratic::<f64>::new(Matrix::identity(3), vec![0.0; 3], 0.0).unwrap();
    let c = id.constants(1.0).unwrap();
    assert!((c.lipschitz - 2.0).abs() < 1e-9 && (c.sigma - 2.0).abs() < 1e-9);
    let diag =
        Quadratic::<f64>::new(Matrix::from_diagonal(&[1.0, 3.0]), vec![0.0; 2], 0.0).unwrap();
    let c = diag.constants(1.0).unwrap();
    assert!((c.lipschitz - 6.0).abs() < 1e-9 && (c.sigma - 2.0).abs() < 1e-9);
    assert_eq!(id.gradient(&[0.0; 3]).unwrap(), vec![0.0; 3]);
}

#[test]
fn gradient_bound_dominates_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = random_quadratic(&mut rng, 4, 0.2);
    let radius = 2.5;
    let gf = f.constants(radius).unwrap().gf;
    for _ in 0..10_000 {
        let mut x = point(&mut rng, 4, radius);
        let n = norm(&x);
        if n > radius {
            x.iter_mut().for_each(|v| *v *= radius / n);
        }
        assert!(norm(&f.gradient(&x).unwrap()) <= gf);
    }
    let g = mpc(vec![7.5, 0.5], 10).to_quadratic().unwrap();
    let gf = g.constants(2.0 * 10f64.sqrt()).unwrap().gf;
    for _ in 0..10_000 {
        let u = point(&mut rng, 10, 2.0);
        assert!(norm(&g.gradient(&u).unwrap()) <= gf);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn curvature_inequalities(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = rng.random_range(0.0..1.0);
        let f = random_quadratic(&mut rng, d, shift);
        let c = f.constants(1.0).unwrap();
        prop_assert!(c.lipschitz >= c.sigma);
        for _ in 0..16 {
            let x = point(&mut rng, d, 5.0);
            let y = point(&mut rng, d, 5.0);
            let gx = f.gradient(&x).unwrap();
            let gy = f.gradient(&y).unwrap();
            let dyx = diff(&y, &x);
            let lin = f.value(&x).unwrap() + gx.iter().zip(&dyx).map(|(a, b)| a * b).sum::<f64>();
            let fy = f.value(&y).unwrap();
            let scale = fy.abs().max(1.0) * 1e-12;
            prop_assert!(fy >= lin - 1e-9 - scale);
            prop_assert!(fy >= lin + 0.5 * c.sigma * norm(&dyx).powi(2) - 1e-9 - scale);
            prop_assert!(norm(&diff(&gx, &gy)) <= c.lipschitz * norm(&dyx) * (1.0 + 1e-9) + 1e-9);
        }
    }

    #[test]
    fn rollout_is_affine(seed in any::<u64>(), horizon in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = MpcInstance::<f64>::base();
        let u1 = point(&mut rng, horizon, 2.0);
        let u2 = point(&mut rng, horizon, 2.0);
        let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let go = |u: &[f64]| rollout(&base.a, &base.b, &base.x0, u);
        let free = go(&vec![0.0; horizon]);
        let (r1, r2, r12) = (go(&u1), go(&u2), go(&sum));
        for t in 0..horizon {
            for j in 0..2 {
                let lhs = r12[t][j] - free[t][j];
                let rhs = (r1[t][j] - free[t][j]) + (r2[t][j] - free[t][j]);
                prop_assert!((lhs - rhs).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn mpc_is_convex(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = mpc(point(&mut rng, 2, 5.0).iter().map(|v| v + 7.0).collect(), 10);
        let c = f.to_quadratic().unwrap().constants(1.0).unwrap();
        for _ in 0..8 {
            let x = point(&mut rng, 10, 2.0);
            let y = point(&mut rng, 10, 2.0);
            let gx = f.gradient(&x).unwrap();
            let gy = f.gradient(&y).unwrap();
            let dyx = diff(&y, &x);
            let fy = f.value(&y).unwrap();
            let lin = f.value(&x).unwrap() + gx.iter().zip(&dyx).map(|(a, b)| a * b).sum::<f64>();
            prop_assert!(fy >= lin - 1e-9 * fy.abs().max(1.0));
            prop_assert!(norm(&diff(&gx, &gy)) <= c.lipschitz * norm(&dyx) * (1.0 + 1e-9) + 1e-9);
        }
    }
}
