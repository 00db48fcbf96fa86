use grp_core::analysis::{
    check_assumption4, disagreement_bound, error_bound, error_bound_with, gamma_alpha_balance,
    BoundInputs, RhoForm,
};
use grp_core::topology::{SelectionMatrix, Topology, TopologyKind};
use grp_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inputs with nearly balanced stepsizes, so most draws are admissible.
fn random_inputs(rng: &mut ChaCha8Rng) -> BoundInputs<f64> {
    let m = rng.random_range(2..9);
    let sigma: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    let lipschitz: Vec<f64> = sigma
        .iter()
        .map(|s| s * rng.random_range(1.0..3.0))
        .collect();
    let mut gamma: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = gamma.iter().sum();
    gamma
        .iter_mut()
        .for_each(|g| *g = (*g * 2.0 / total).min(1.0));
    let c = rng.random_range(1.0..4.0);
    let nu = rng.random_range(1e-4..1e-2);
    let alpha = gamma
        .iter()
        .map(|g| nu / g * (1.0 + rng.random_range(-0.05..0.05)))
        .collect();
    BoundInputs {
        m,
        sigma,
        lipschitz,
        alpha,
        gamma,
        c,
        gf: rng.random_range(0.5..20.0),
        lambda: rng.random_range(0.0..0.99),
    }
}

/// Straight-line evaluation of both bounds.
struct Reference {
    q: f64,
    error: f64,
    asymmetry: f64,
    disagreement: f64,
    min_gamma_rho: f64,
}

fn reference(p: &BoundInputs<f64>, proposition_rho: bool) -> Reference {
    let m = p.m as f64;
    let mut rho = Vec::new();
    for i in 0..p.m {
        let a = p.alpha[i];
        let coeff = if proposition_rho {
            8.0 * (1.0 + p.c)
        } else {
            4.0 * (2.0 + p.c)
        };
        rho.push(a * p.sigma[i] - coeff * a * a * p.lipschitz[i] * p.lipschitz[i]);
    }
    let rho_lemma: Vec<f64> = (0..p.m)
        .map(|i| {
            let a = p.alpha[i];
            a * p.sigma[i] - 4.0 * (2.0 + p.c) * a * a * p.lipschitz[i] * p.lipschitz[i]
        })
        .collect();
    let mut ga_max = f64::MIN;
    let mut ga_min = f64::MAX;
    let mut g_bar = f64::MIN;
    let mut a_bar = f64::MIN;
    let mut l_bar = f64::MIN;
    let mut min_gr = f64::MAX;
    let mut min_gr_lemma = f64::MAX;
    for i in 0..p.m {
        ga_max = ga_max.max(p.gamma[i] * p.alpha[i]);
        ga_min = ga_min.min(p.gamma[i] * p.alpha[i]);
        g_bar = g_bar.max(p.gamma[i]);
        a_bar = a_bar.max(p.alpha[i]);
        l_bar = l_bar.max(p.lipschitz[i]);
        min_gr = min_gr.min(p.gamma[i] * rho[i]);
        min_gr_lemma = min_gr_lemma.min(p.gamma[i] * rho_lemma[i]);
    }
    let delta = ga_max - ga_min;
    let q = min_gr - delta / m;
    let big_c =
        4.0 * (8.0 * g_bar * (1.0 + a_bar * a_bar * l_bar * l_bar) * (1.0 + p.c) / min_gr + 1.0);
    let gf2 = p.gf * p.gf;
    let asymmetry = delta * gf2 / q;
    let error = 4.0 * g_bar * a_bar * a_bar * gf2 / q
        * (big_c.sqrt() / (1.0 - p.lambda.sqrt()) + 2.0 * (1.0 + p.c))
        + asymmetry;
    let c_lemma =
        8.0 * g_bar * (1.0 + a_bar * a_bar * l_bar * l_bar) * (1.0 + p.c) / min_gr_lemma + 1.0;
    let gap = 1.0 - p.lambda.sqrt();
    let disagreement = 4.0 * m * a_bar * a_bar * gf2 / (gap * gap) * c_lemma;
    Reference {
        q,
        error,
        asymmetry,
        disagreement,
        min_gamma_rho: min_gr,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn calculators_match_straight_line_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut compared = 0;
    while compared < 100 {
        let p = random_inputs(&mut rng);
        for (form, prop) in [(RhoForm::Lemma, false), (RhoForm::Proposition, true)] {
            let r = reference(&p, prop);
            match error_bound_with(&p, form) {
                Ok(b) => {
                    assert!(close(b.q, r.q), "{} vs {}", b.q, r.q);
                    assert!(close(b.value, r.error), "{} vs {}", b.value, r.error);
                    assert!(close(b.asymmetry, r.asymmetry));
                    compared += usize::from(!prop);
                }
                Err(Error::InvalidStepsizes(_)) => assert!(r.q <= 0.0 || r.min_gamma_rho <= 0.0),
                Err(e) => panic!("{e}"),
            }
        }
        if let Ok(d) = disagreement_bound(&p) {
            let r = reference(&p, false);
            assert!(close(d, r.disagreement), "{d} vs {}", r.disagreement);
        }
    }
}

#[test]
fn zero_asymmetry_term_when_balanced() {
    let sel = SelectionMatrix::<f64>::uniform(&Topology::build(TopologyKind::Cycle, 5).unwrap());
    let gamma = sel.gamma();
    let alpha = gamma_alpha_balance(&gamma, 1e-3).unwrap();
    let p = BoundInputs {
        m: 5,
        sigma: vec![1.0; 5],
        lipschitz: vec![2.0; 5],
        alpha,
        gamma,
        c: 2.0,
        gf: 3.0,
        lambda: sel.lambda2().unwrap(),
    };
    assert_eq!(p.delta_ga(), 0.0);
    let b = error_bound(&p).unwrap();
    assert_eq!(b.asymmetry, 0.0);
    assert!(close(b.value, b.network + b.stepsize));
}

#[test]
fn balance_gives_equal_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let g: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..1.0)).collect();
        let a = gamma_alpha_balance(&g, 0.01).unwrap();
        for (gi, ai) in g.iter().zip(&a) {
            assert!((gi * ai - 0.01).abs() <= 1e-17);
        }
    }
    assert!(gamma_alpha_balance(&[0.5, 0.5], 1.5).is_err());
    assert!(gamma_alpha_balance(&[0.0, 0.5], 0.1).is_err());
}

#[test]
fn oversized_stepsizes_fail_the_conditions() {
    let p = BoundInputs {
        m: 2,
        sigma: vec![1.0; 2],
        lipschitz: vec![1.0; 2],
        alpha: vec![10.0, 10.0],
        gamma: vec![1.0, 1.0],
        c: 1.0,
        gf: 1.0,
        lambda: 0.5,
    };
    assert!(!check_assumption4(&p).unwrap().passed());
    assert!(matches!(error_bound(&p), Err(Error::InvalidStepsizes(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn q_in_unit_interval_when_conditions_hold(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_inputs(&mut rng);
        let report = check_assumption4(&p).unwrap();
        if report.passed() {
            let q = p.q(RhoForm::Lemma);
            prop_assert!(q > 0.0 && q < 1.0, "q = {q}");
            let b = error_bound(&p).unwrap();
            prop_assert!(b.value > 0.0 && b.value.is_finite());
            prop_assert!(disagreement_bound(&p).unwrap() > 0.0);
        }
    }

    #[test]
    fn bound_grows_with_lambda(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = random_inputs(&mut rng);
        if let Ok(lo) = error_bound(&p) {
            p.lambda = (p.lambda + 1.0) / 2.0;
            let hi = error_bound(&p).unwrap();
            prop_assert!(hi.value >= lo.value);
        }
    }
}
