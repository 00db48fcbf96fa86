//! Closed-form constants and asymptotic bounds for the constant-stepsize
//! iteration: `ρ_i`, `Δ_γα`, the stepsize validity conditions, the limiting
//! optimality error bound and the limiting disagreement bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Every scalar entering the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct BoundInputs<T> {
    pub m: usize,
    pub sigma: Vec<T>,
    pub lipschitz: Vec<T>,
    pub alpha: Vec<T>,
    pub gamma: Vec<T>,
    /// Set-regularity constant.
    pub c: T,
    /// Gradient bound.
    pub gf: T,
    /// Second largest eigenvalue of the expected mixing matrix.
    pub lambda: T,
}

/// The two printed forms of `ρ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoForm {
    /// `σα − 4(2 + c)α²L²`, the form used by the stepsize conditions.
    #[default]
    Lemma,
    /// `ασ − 8(1 + c)α²L²`.
    Proposition,
}

fn max_of<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().fold(T::neg_infinity(), T::max)
}

fn min_of<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().fold(T::infinity(), T::min)
}

impl<T: Scalar> BoundInputs<T> {
    pub fn validate(&self) -> Result<()> {
        let m = self.m;
        if m < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 agents, got {m}"
            )));
        }
        for (name, v) in [
            ("sigma", &self.sigma),
            ("lipschitz", &self.lipschitz),
            ("alpha", &self.alpha),
            ("gamma", &self.gamma),
        ] {
            if v.len() != m {
                return Err(Error::InvalidConfig(format!(
                    "{name} has {} entries, expected {m}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !(*x > T::zero()) || !x.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} entries must be positive and finite"
                )));
            }
        }
        if self.gamma.iter().any(|&g| g > T::one()) {
            return Err(Error::InvalidConfig(
                "gamma entries must lie in (0, 1]".into(),
            ));
        }
        if !(self.c > T::zero()) || !(self.gf > T::zero()) {
            return Err(Error::InvalidConfig("c and gf must be positive".into()));
        }
        if !(self.lambda >= T::zero() && self.lambda < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "lambda = {} must lie in [0, 1)",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn rho(&self, i: usize, form: RhoForm) -> T {
        let (a, s, l, c) = (self.alpha[i], self.sigma[i], self.lipschitz[i], self.c);
        let coeff = match form {
            RhoForm::Lemma => T::lit(4.0) * (T::lit(2.0) + c),
            RhoForm::Proposition => T::lit(8.0) * (T::one() + c),
        };
        a * s - coeff * a * a * l * l
    }

    /// `Δ_γα = max_i γ_i α_i − min_j γ_j α_j`.
    pub fn delta_ga(&self) -> T {
        let prods: Vec<T> = self
            .gamma
            .iter()
            .zip(&self.alpha)
            .map(|(&g, &a)| g * a)
            .collect();
        max_of(&prods) - min_of(&prods)
    }

    pub fn gamma_bar(&self) -> T {
        max_of(&self.gamma)
    }

    pub fn alpha_bar(&self) -> T {
        max_of(&self.alpha)
    }

    pub fn lipschitz_bar(&self) -> T {
        max_of(&self.lipschitz)
    }

    /// `min_j γ_j ρ_j`.
    pub fn min_gamma_rho(&self, form: RhoForm) -> T {
        (0..self.m)
            .map(|j| self.gamma[j] * self.rho(j, form))
            .fold(T::infinity(), T::min)
    }

    /// `q = min_i γ_i ρ_i − Δ_γα / m`.
    pub fn q(&self, form: RhoForm) -> T {
        self.min_gamma_rho(form) - self.delta_ga() / T::from_usize_lossy(self.m)
    }

    /// `8γ̄(1 + ᾱ²L̄²)(1 + c) / min_j γ_j ρ_j + 1`.
    fn base_c(&self, form: RhoForm) -> T {
        let ab = self.alpha_bar();
        let lb = self.lipschitz_bar();
        T::lit(8.0) * self.gamma_bar() * (T::one() + ab * ab * lb * lb) * (T::one() + self.c)
            / self.min_gamma_rho(form)
            + T::one()
    }
}

/// Per-agent evaluation of the two stepsize conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Assumption4Report<T> {
    /// `α_iσ_i − 4(2 + c)α_i²L_i²`, must lie in (0, 1).
    pub cond_a: Vec<T>,
    /// `γ_i(α_iσ_i − 4(2 + c)α_i²L_i²) − Δ_γα/m`, must lie in (0, 1).
    pub cond_b: Vec<T>,
    pub ok_a: Vec<bool>,
    pub ok_b: Vec<bool>,
    pub delta_ga: T,
}

impl<T: Scalar> Assumption4Report<T> {
    pub fn passed(&self) -> bool {
        self.ok_a.iter().chain(&self.ok_b).all(|&b| b)
    }
}

pub fn check_assumption4<T: Scalar>(inputs: &BoundInputs<T>) -> Result<Assumption4Report<T>> {
    inputs.validate()?;
    let delta = inputs.delta_ga();
    let m = T::from_usize_lossy(inputs.m);
    let in_unit = |v: T| v > T::zero() && v < T::one();
    let cond_a: Vec<T> = (0..inputs.m)
        .map(|i| inputs.rho(i, RhoForm::Lemma))
        .collect();
    let cond_b: Vec<T> = cond_a
        .iter()
        .zip(&inputs.gamma)
        .map(|(&r, &g)| g * r - delta / m)
        .collect();
    Ok(Assumption4Report {
        ok_a: cond_a.iter().map(|&v| in_unit(v)).collect(),
        ok_b: cond_b.iter().map(|&v| in_unit(v)).collect(),
        cond_a,
        cond_b,
        delta_ga: delta,
    })
}

/// The limiting bound on `(1/m) Σ_i E‖x_i(k) − x*‖²` split into its terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ErrorBound<T> {
    pub value: T,
    /// `(1/q) 4γ̄ᾱ²G_f² √C / (1 − √λ)`
    pub network: T,
    /// `(1/q) 4γ̄ᾱ²G_f² 2(1 + c)`
    pub stepsize: T,
    /// `(1/q) Δ_γα G_f²`
    pub asymmetry: T,
    pub q: T,
    /// `C = 4(8γ̄(1 + ᾱ²L̄²)(1 + c) / min_j γ_jρ_j + 1)`
    pub c_const: T,
    pub form: RhoForm,
}

pub fn error_bound<T: Scalar>(inputs: &BoundInputs<T>) -> Result<ErrorBound<T>> {
    error_bound_with(inputs, RhoForm::Lemma)
}

pub fn error_bound_with<T: Scalar>(
    inputs: &BoundInputs<T>,
    form: RhoForm,
) -> Result<ErrorBound<T>> {
    inputs.validate()?;
    let q = inputs.q(form);
    if !(q > T::zero()) || !(inputs.min_gamma_rho(form) > T::zero()) {
        return Err(Error::InvalidStepsizes(format!("q = {q} is not positive")));
    }
    let c_const = T::lit(4.0) * inputs.base_c(form);
    let gf2 = inputs.gf * inputs.gf;
    let ab = inputs.alpha_bar();
    let lead = T::lit(4.0) * inputs.gamma_bar() * ab * ab * gf2 / q;
    let network = lead * c_const.sqrt() / (T::one() - inputs.lambda.sqrt());
    let stepsize = lead * T::lit(2.0) * (T::one() + inputs.c);
    let asymmetry = inputs.delta_ga() * gf2 / q;
    Ok(ErrorBound {
        value: network + stepsize + asymmetry,
        network,
        stepsize,
        asymmetry,
        q,
        c_const,
        form,
    })
}

/// Limiting bound on `Σ_i E‖x_i(k) − x̄(k)‖²`:
/// `4mᾱ²G_f² C / (1 − √λ)²` with `C = 8γ̄(1 + ᾱ²L̄²)(1 + c)/min_j γ_jρ_j + 1`.
pub fn disagreement_bound<T: Scalar>(inputs: &BoundInputs<T>) -> Result<T> {
    inputs.validate()?;
    let form = RhoForm::Lemma;
    if !(inputs.min_gamma_rho(form) > T::zero()) {
        return Err(Error::InvalidStepsizes(
            "min_j gamma_j rho_j is not positive".into(),
        ));
    }
    let ab = inputs.alpha_bar();
    let gap = T::one() - inputs.lambda.sqrt();
    Ok(
        T::lit(4.0) * T::from_usize_lossy(inputs.m) * ab * ab * inputs.gf * inputs.gf / (gap * gap)
            * inputs.base_c(form),
    )
}

/// Stepsizes `α_i = ν / γ_i`, so that every `γ_i α_i = ν` and `Δ_γα = 0`.
pub fn gamma_alpha_balance<T: Scalar>(gammas: &[T], nu: T) -> Result<Vec<T>> {
    if !(nu > T::zero() && nu < T::one()) {
        return Err(Error::InvalidStepsizes(format!(
            "nu = {nu} must lie in (0, 1)"
        )));
    }
    if gammas.iter().any(|g| !(*g > T::zero())) {
        return Err(Error::InvalidStepsizes(
            "update probabilities must be positive".into(),
        ));
    }
    Ok(gammas.iter().map(|&g| nu / g).collect())
}
