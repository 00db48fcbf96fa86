//! The gossip random projection iteration.
//!
//! At tick `k` the waking agent `I` and its peer `J` both form
//! `v = (x_I + x_J) / 2`; each then takes its own gradient step from `v` and
//! projects onto an independently realized component of its local constraint.
//! All other agents keep their iterate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintComponent, LocalConstraint};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dist_sq, mean};
use crate::objective::Objective;
use crate::polyhedron::project_set;
use crate::scalar::Scalar;
use crate::topology::{GossipEvent, SelectionMatrix};

/// Per-agent objectives and constraints, plus optional evaluation data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar, F: Serialize",
    deserialize = "T: Scalar, F: Deserialize<'de>"
))]
pub struct Problem<T, F> {
    pub objectives: Vec<F>,
    pub constraints: Vec<LocalConstraint<T>>,
    /// Components whose intersection is the feasible set, for the feasibility metric.
    pub feasible_set: Option<Vec<ConstraintComponent<T>>>,
    /// Reference optimum for the optimality metric.
    pub reference: Option<Vec<T>>,
}

impl<T: Scalar, F: Objective<T>> Problem<T, F> {
    pub fn new(objectives: Vec<F>, constraints: Vec<LocalConstraint<T>>) -> Result<Self> {
        let p = Self {
            objectives,
            constraints,
            feasible_set: None,
            reference: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_feasible_set(mut self, comps: Vec<ConstraintComponent<T>>) -> Self {
        self.feasible_set = Some(comps);
        self
    }

    pub fn with_reference(mut self, x_star: Vec<T>) -> Self {
        self.reference = Some(x_star);
        self
    }

    pub fn m(&self) -> usize {
        self.objectives.len()
    }

    pub fn dim(&self) -> usize {
        self.objectives.first().map_or(0, Objective::dim)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if m < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 agents, got {m}"
            )));
        }
        if self.constraints.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.constraints.len(),
            });
        }
        let d = self.dim();
        for f in &self.objectives {
            if f.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: f.dim(),
                });
            }
        }
        for lc in &self.constraints {
            lc.validate()?;
        }
        if let Some(r) = &self.reference {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepsizePolicy<T> {
    /// `α_i(k) = 1 / Γ_i(k)`
    Diminishing,
    /// `α_i(k) = α_i`
    Constant { alpha: Vec<T> },
}

impl<T: Scalar> StepsizePolicy<T> {
    pub fn validate(&self, m: usize) -> Result<()> {
        if let Self::Constant { alpha } = self {
            if alpha.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: alpha.len(),
                });
            }
            if alpha.iter().any(|a| !(*a > T::zero())) {
                return Err(Error::InvalidStepsizes(
                    "constant stepsizes must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Stepsize of agent `i` once its counter reads `update_count` (already incremented).
    pub fn alpha(&self, i: usize, update_count: u64) -> T {
        match self {
            Self::Diminishing => T::one() / T::lit(update_count as f64),
            Self::Constant { alpha } => alpha[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct AgentState<T> {
    pub x: Vec<T>,
    /// Number of updates performed so far, `Γ_i(k)`.
    pub update_count: u64,
}

/// Independent random streams of one run, all derived from the run seed.
#[derive(Debug, Clone)]
pub struct Streams {
    pub events: ChaCha8Rng,
    pub components: ChaCha8Rng,
    pub perturbations: ChaCha8Rng,
    pub init: ChaCha8Rng,
}

impl Streams {
    pub fn from_seed(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            events: stream(1),
            components: stream(2),
            perturbations: stream(3),
            init: stream(4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct TraceRecord<T> {
    pub k: u64,
    /// `(1/m) Σ_i ‖x_i − x*‖²`, when a reference is known.
    pub avg_sq_error: Option<T>,
    /// `Σ_i ‖x_i − x̄‖²`
    pub consensus: T,
    /// `max_i dist(x_i, X)`, when the feasible set is known.
    pub feasibility: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterSample {
    pub k: u64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct RunState<T> {
    pub k: u64,
    pub agents: Vec<AgentState<T>>,
    pub streams: Streams,
}

impl<T: Scalar> RunState<T> {
    pub fn new(initial: Vec<Vec<T>>, seed: u64) -> Self {
        Self {
            k: 0,
            agents: initial
                .into_iter()
                .map(|x| AgentState { x, update_count: 0 })
                .collect(),
            streams: Streams::from_seed(seed),
        }
    }

    /// Initial iterates drawn iid uniform in `[lo, hi]^d` from the init stream.
    pub fn random(m: usize, d: usize, lo: T, hi: T, seed: u64) -> Self {
        let mut state = Self::new(Vec::new(), seed);
        let (l, h) = (lo.to_f64_lossy(), hi.to_f64_lossy());
        let init = &mut state.streams.init;
        state.agents = (0..m)
            .map(|_| AgentState {
                x: (0..d)
                    .map(|_| {
                        let u: f64 = init.random();
                        T::lit(l + (h - l) * u)
                    })
                    .collect(),
                update_count: 0,
            })
            .collect();
        state
    }

    pub fn iterates(&self) -> Vec<Vec<T>> {
        self.agents.iter().map(|a| a.x.clone()).collect()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.agents.iter().map(|a| a.update_count).collect()
    }

    /// Applies tick `event.k`.
    pub fn step<F: Objective<T>>(
        &mut self,
        event: &GossipEvent,
        problem: &Problem<T, F>,
        policy: &StepsizePolicy<T>,
    ) -> Result<()> {
        debug_assert_eq!(event.k, self.k + 1);
        let (a, b) = (event.waker, event.peer);
        let mut v = self.agents[a].x.clone();
        axpy(T::one(), &self.agents[b].x, &mut v);
        v.iter_mut().for_each(|c| *c = *c * T::lit(0.5));
        for i in [a, b] {
            let agent = &mut self.agents[i];
            agent.update_count += 1;
            let alpha = policy.alpha(i, agent.update_count);
            let mut y = v.clone();
            axpy(-alpha, &problem.objectives[i].gradient(&v)?, &mut y);
            let lc = &problem.constraints[i];
            let realized = lc.realize_split(
                &mut self.streams.components,
                &mut self.streams.perturbations,
            );
            agent.x = lc.project_realized(&y, &realized);
        }
        self.k = event.k;
        Ok(())
    }

    pub fn metrics<F>(&self, problem: &Problem<T, F>) -> Result<TraceRecord<T>> {
        metrics(
            self.k,
            &self.iterates(),
            problem.reference.as_deref(),
            problem.feasible_set.as_deref(),
        )
    }
}

/// Optimality, consensus and feasibility metrics of a set of iterates.
pub fn metrics<T: Scalar>(
    k: u64,
    xs: &[Vec<T>],
    reference: Option<&[T]>,
    feasible: Option<&[ConstraintComponent<T>]>,
) -> Result<TraceRecord<T>> {
    let m = T::from_usize_lossy(xs.len());
    let center = mean(xs);
    let consensus = xs
        .iter()
        .fold(T::zero(), |acc, x| acc + dist_sq(x, &center));
    let avg_sq_error =
        reference.map(|r| xs.iter().fold(T::zero(), |acc, x| acc + dist_sq(x, r)) / m);
    let feasibility = match feasible {
        None => None,
        Some(comps) => {
            let mut worst = T::zero();
            for x in xs {
                let p = project_set(x, comps)?;
                worst = worst.max(dist_sq(x, &p).sqrt());
            }
            Some(worst)
        }
    };
    Ok(TraceRecord {
        k,
        avg_sq_error,
        consensus,
        feasibility,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct RunOptions<T> {
    pub n_iters: u64,
    pub record_every: u64,
    pub seed: u64,
    pub init_lo: T,
    pub init_hi: T,
}

impl<T: Scalar> RunOptions<T> {
    pub fn new(n_iters: u64, seed: u64) -> Self {
        Self {
            n_iters,
            record_every: 100,
            seed,
            init_lo: T::lit(-1.0),
            init_hi: T::one(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub trace: Vec<TraceRecord<T>>,
    /// `Γ_i(k)` at every recorded tick.
    pub counters: Vec<CounterSample>,
    pub final_state: Vec<AgentState<T>>,
}

/// One seeded run. Records metrics every `record_every` ticks and at the last tick.
pub fn run<T: Scalar, F: Objective<T>>(
    problem: &Problem<T, F>,
    sel: &SelectionMatrix<T>,
    policy: &StepsizePolicy<T>,
    opts: &RunOptions<T>,
) -> Result<RunOutput<T>> {
    let state = RunState::random(
        sel.m(),
        problem.dim(),
        opts.init_lo,
        opts.init_hi,
        opts.seed,
    );
    run_from(problem, sel, policy, opts, state)
}

/// As [`run`], continuing from a given state for `opts.n_iters` more ticks.
pub fn run_from<T: Scalar, F: Objective<T>>(
    problem: &Problem<T, F>,
    sel: &SelectionMatrix<T>,
    policy: &StepsizePolicy<T>,
    opts: &RunOptions<T>,
    mut state: RunState<T>,
) -> Result<RunOutput<T>> {
    problem.validate()?;
    if problem.m() != sel.m() || state.agents.len() != sel.m() {
        return Err(Error::DimensionMismatch {
            expected: sel.m(),
            got: problem.m(),
        });
    }
    policy.validate(sel.m())?;
    if opts.record_every == 0 {
        return Err(Error::InvalidConfig(
            "record_every must be at least 1".into(),
        ));
    }
    let last = state.k + opts.n_iters;
    let mut trace = Vec::new();
    let mut counters = Vec::new();
    for k in (state.k + 1)..=last {
        let event = sel.sample_event(&mut state.streams.events, k);
        state.step(&event, problem, policy)?;
        if k % opts.record_every == 0 || k == last {
            trace.push(state.metrics(problem)?);
            counters.push(CounterSample {
                k,
                counts: state.counts(),
            });
        }
    }
    Ok(RunOutput {
        trace,
        counters,
        final_state: state.agents,
    })
}

/// Outcome of checking the diminishing stepsizes against the envelopes
/// `α_i(k) <= 2/(kγ_i)` and `|α_i(k) − 1/(kγ_i)| <= 2/(k^{3/2−q}(1 + π_min)²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub applicable: bool,
    /// Smallest sampled `k` from which every later sample satisfies both envelopes.
    pub k_tilde: Option<u64>,
    pub checks: usize,
    pub violations: usize,
}

impl EnvelopeReport {
    pub fn skipped() -> Self {
        Self {
            applicable: false,
            k_tilde: None,
            checks: 0,
            violations: 0,
        }
    }

    pub fn violation_fraction(&self) -> f64 {
        if self.checks == 0 {
            0.0
        } else {
            self.violations as f64 / self.checks as f64
        }
    }
}

pub fn stepsize_envelope_check<T: Scalar>(
    samples: &[CounterSample],
    gammas: &[T],
    pi_min: T,
    q: f64,
    policy: &StepsizePolicy<T>,
) -> Result<EnvelopeReport> {
    if !matches!(policy, StepsizePolicy::Diminishing) {
        return Ok(EnvelopeReport::skipped());
    }
    if !(q > 0.0 && q < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "q = {q} must lie in (0, 1/2)"
        )));
    }
    let pi_min = pi_min.to_f64_lossy();
    let mut checks = 0;
    let mut violations = 0;
    let mut last_bad: Option<usize> = None;
    for (idx, s) in samples.iter().enumerate() {
        if s.counts.len() != gammas.len() {
            return Err(Error::DimensionMismatch {
                expected: gammas.len(),
                got: s.counts.len(),
            });
        }
        let k = s.k as f64;
        let slack = 2.0 / (k.powf(1.5 - q) * (1.0 + pi_min).powi(2));
        for (&count, g) in s.counts.iter().zip(gammas) {
            let g = g.to_f64_lossy();
            checks += 1;
            let ok = count > 0 && {
                let alpha = 1.0 / count as f64;
                alpha <= 2.0 / (k * g) && (alpha - 1.0 / (k * g)).abs() <= slack
            };
            if !ok {
                violations += 1;
                last_bad = Some(idx);
            }
        }
    }
    let k_tilde = match last_bad {
        None => samples.first().map(|s| s.k),
        Some(i) => samples.get(i + 1).map(|s| s.k),
    };
    Ok(EnvelopeReport {
        applicable: true,
        k_tilde,
        checks,
        violations,
    })
}
