//! Experiment configuration, Monte-Carlo orchestration and CSV emission.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_assumption4, disagreement_bound, error_bound_with, gamma_alpha_balance,
    Assumption4Report, BoundInputs, ErrorBound, RhoForm,
};
use crate::constraints::{estimate_regularity, ConstraintComponent, LocalConstraint};
use crate::engine::{run, Problem, RunOptions, StepsizePolicy, TraceRecord};
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::mpc::{default_instance, grp_problem, solve_baseline, MpcInstance, BASELINE_TOL};
use crate::objective::{ObjectiveConstants, Quadratic};
use crate::topology::{SelectionMatrix, Topology, TopologyKind};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of run `run_id` under `master`: the splitmix64 output function applied
/// to `master + (run_id + 1)·φ`. The finalizer is a bijection, so distinct
/// run ids under one master never collide.
pub fn derive_seed(master: u64, run_id: u64) -> u64 {
    let mut z = master.wrapping_add(run_id.wrapping_add(1).wrapping_mul(GOLDEN));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    Diminishing,
    Constant {
        alpha: Vec<f64>,
    },
    /// `α_i = ν / γ_i`
    Balanced {
        nu: f64,
    },
}

/// Strongly convex quadratics with diagonal `Q_i`, all agents sharing the
/// constraint `x_j = b_j` for `j < n_planes`, each plane one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub n_planes: usize,
    pub seed: u64,
    /// Diagonal entries of `Q_i` are uniform in this range.
    pub curvature: [f64; 2],
    /// Entries of `q_i` and offsets `b_j` are uniform in `[−linear, linear]`.
    pub linear: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dim: 3,
            n_planes: 2,
            seed: 7,
            curvature: [0.5, 1.5],
            linear: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Mpc {
        instance_seed: u64,
        /// Precomputed optimum; solved on the fly when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<Vec<f64>>,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    /// Regularity constant; estimated by sampling when absent.
    pub c: Option<f64>,
    /// Gradient bound; derived from the objective constants when absent.
    pub gf: Option<f64>,
    pub regularity_samples: usize,
    pub regularity_draws: usize,
    pub regularity_seed: u64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            c: None,
            gf: None,
            regularity_samples: 2000,
            regularity_draws: 4,
            regularity_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub topology: TopologyKind,
    pub m: usize,
    pub policy: PolicyConfig,
    pub n_iters: u64,
    pub n_runs: usize,
    pub seed: u64,
    pub record_every: u64,
    pub problem: ProblemConfig,
    pub bound: BoundConfig,
    /// Initial iterates are uniform in `[init_lo, init_hi]^d`.
    pub init_lo: f64,
    pub init_hi: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            topology: TopologyKind::Clique,
            m: 4,
            policy: PolicyConfig::Diminishing,
            n_iters: 40_000,
            n_runs: 100,
            seed: 1,
            record_every: 100,
            problem: ProblemConfig::Mpc {
                instance_seed: 1,
                reference: None,
            },
            bound: BoundConfig::default(),
            init_lo: -1.0,
            init_hi: 1.0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.m < 2 {
            return bad("m must be at least 2");
        }
        if self.n_iters == 0 {
            return bad("n_iters must be at least 1");
        }
        if self.n_runs == 0 {
            return bad("n_runs must be at least 1");
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1");
        }
        if !(self.init_lo <= self.init_hi) {
            return bad("init_lo must not exceed init_hi");
        }
        match &self.policy {
            PolicyConfig::Diminishing => {}
            PolicyConfig::Constant { alpha } => {
                if alpha.len() != self.m {
                    return bad("constant policy needs one stepsize per agent");
                }
                if alpha.iter().any(|a| !(*a > 0.0)) {
                    return bad("constant stepsizes must be positive");
                }
            }
            PolicyConfig::Balanced { nu } => {
                if !(*nu > 0.0 && *nu < 1.0) {
                    return bad("nu must lie in (0, 1)");
                }
            }
        }
        if let ProblemConfig::Synthetic(s) = &self.problem {
            if s.dim == 0 || s.n_planes > s.dim {
                return bad("synthetic problem needs 0 <= n_planes <= dim and dim >= 1");
            }
            if !(s.curvature[0] > 0.0 && s.curvature[0] <= s.curvature[1]) {
                return bad("synthetic curvature range must be positive and ordered");
            }
            if !(s.linear >= 0.0) {
                return bad("synthetic linear range must be nonnegative");
            }
        }
        if let Some(c) = self.bound.c {
            if !(c >= 1.0) {
                return bad("regularity constant must be at least 1");
            }
        }
        if let Some(gf) = self.bound.gf {
            if !(gf > 0.0) {
                return bad("gradient bound must be positive");
            }
        }
        if self.bound.regularity_samples == 0 || self.bound.regularity_draws == 0 {
            return bad("regularity sampling counts must be positive");
        }
        Topology::build(self.topology, self.m)?;
        Ok(())
    }
}

/// Synthetic instance with its closed-form optimum.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub objectives: Vec<Quadratic<f64>>,
    pub planes: Vec<ConstraintComponent<f64>>,
    pub optimum: Vec<f64>,
}

pub fn synthetic_instance(spec: &SyntheticSpec, m: usize) -> Result<SyntheticInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let [lo, hi] = spec.curvature;
    let mut objectives = Vec::with_capacity(m);
    let mut diag_sum = vec![0.0; d];
    let mut lin_sum = vec![0.0; d];
    for _ in 0..m {
        let diag: Vec<f64> = (0..d)
            .map(|_| {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            })
            .collect();
        let lin: Vec<f64> = (0..d).map(|_| spread(&mut rng, spec.linear)).collect();
        for j in 0..d {
            diag_sum[j] += diag[j];
            lin_sum[j] += lin[j];
        }
        objectives.push(Quadratic::new(Matrix::from_diagonal(&diag), lin, 0.0)?);
    }
    let offsets: Vec<f64> = (0..spec.n_planes)
        .map(|_| spread(&mut rng, spec.linear))
        .collect();
    let mut planes = Vec::with_capacity(spec.n_planes);
    let mut optimum: Vec<f64> = (0..d).map(|j| -lin_sum[j] / (2.0 * diag_sum[j])).collect();
    for (j, &b) in offsets.iter().enumerate() {
        let mut a = vec![0.0; d];
        a[j] = 1.0;
        planes.push(ConstraintComponent::hyperplane(a, b)?);
        optimum[j] = b;
    }
    Ok(SyntheticInstance {
        objectives,
        planes,
        optimum,
    })
}

fn spread(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    if r > 0.0 {
        rng.random_range(-r..r)
    } else {
        0.0
    }
}

/// A validated configuration with everything needed to run and analyse it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub selection: SelectionMatrix<f64>,
    pub problem: Problem<f64, Quadratic<f64>>,
    pub policy: StepsizePolicy<f64>,
    pub instance: Option<MpcInstance<f64>>,
    /// Radius of the ball around the origin over which `G_f` is certified.
    pub gradient_radius: f64,
    /// Sampling box for the regularity estimate.
    pub sample_box: (Vec<f64>, Vec<f64>),
}

impl Experiment {
    pub fn prepare(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let topology = Topology::build(config.topology, config.m)?;
        let selection = SelectionMatrix::uniform(&topology);
        let policy = match &config.policy {
            PolicyConfig::Diminishing => StepsizePolicy::Diminishing,
            PolicyConfig::Constant { alpha } => StepsizePolicy::Constant {
                alpha: alpha.clone(),
            },
            PolicyConfig::Balanced { nu } => StepsizePolicy::Constant {
                alpha: gamma_alpha_balance(&selection.gamma(), *nu)?,
            },
        };
        let (problem, instance, gradient_radius, sample_box) = match &config.problem {
            ProblemConfig::Mpc {
                instance_seed,
                reference,
            } => {
                let inst = default_instance::<f64>(config.m, *instance_seed)?;
                let u_star = match reference {
                    Some(r) if r.len() == inst.horizon => r.clone(),
                    Some(r) => {
                        return Err(Error::InvalidConfig(format!(
                            "reference has {} entries, expected {}",
                            r.len(),
                            inst.horizon
                        )))
                    }
                    None => solve_baseline(&inst, BASELINE_TOL)?.u,
                };
                let t = inst.horizon;
                let radius = inst.u_max * (t as f64).sqrt();
                let sample_box = (vec![-inst.u_max; t], vec![inst.u_max; t]);
                let problem = grp_problem(&inst)?.with_reference(u_star);
                (problem, Some(inst), radius, sample_box)
            }
            ProblemConfig::Synthetic(spec) => {
                let s = synthetic_instance(spec, config.m)?;
                let lc = LocalConstraint::uniform(s.planes.clone(), Vec::new())?;
                let radius = norm(&s.optimum) + 1.0;
                let sample_box = (
                    s.optimum.iter().map(|v| v - 3.0).collect(),
                    s.optimum.iter().map(|v| v + 3.0).collect(),
                );
                let problem = Problem::new(s.objectives, vec![lc; config.m])?
                    .with_feasible_set(s.planes)
                    .with_reference(s.optimum);
                (problem, None, radius, sample_box)
            }
        };
        policy.validate(config.m)?;
        Ok(Self {
            config,
            selection,
            problem,
            policy,
            instance,
            gradient_radius,
            sample_box,
        })
    }

    pub fn run_seed(&self, run_id: u64) -> u64 {
        derive_seed(self.config.seed, run_id)
    }

    pub fn run_single(&self, run_id: u64) -> Result<Vec<MetricsRow>> {
        let opts = RunOptions {
            n_iters: self.config.n_iters,
            record_every: self.config.record_every,
            seed: self.run_seed(run_id),
            init_lo: self.config.init_lo,
            init_hi: self.config.init_hi,
        };
        let out = run(&self.problem, &self.selection, &self.policy, &opts)?;
        Ok(out
            .trace
            .iter()
            .map(|r| MetricsRow::from_record(run_id, r))
            .collect())
    }

    /// All runs in parallel, rows ordered by run id and then tick.
    pub fn run_mc(&self) -> Result<Vec<MetricsRow>> {
        let per_run = (0..self.config.n_runs as u64)
            .into_par_iter()
            .map(|id| self.run_single(id))
            .collect::<Result<Vec<_>>>()?;
        Ok(per_run.into_iter().flatten().collect())
    }

    pub fn objective_constants(&self) -> Result<Vec<ObjectiveConstants<f64>>> {
        self.problem
            .objectives
            .iter()
            .map(|f| f.constants(self.gradient_radius))
            .collect()
    }

    pub fn bound_report(&self) -> Result<BoundReport> {
        let lambda = self.selection.lambda2()?;
        let gamma = self.selection.gamma();
        let constants = self.objective_constants()?;
        let sigma: Vec<f64> = constants.iter().map(|c| c.sigma).collect();
        let lipschitz: Vec<f64> = constants.iter().map(|c| c.lipschitz).collect();
        let gf_derived = constants.iter().map(|c| c.gf).fold(0.0, f64::max);
        let gf = self.config.bound.gf.unwrap_or(gf_derived);
        let (c, c_estimated) = match self.config.bound.c {
            Some(c) => (c, false),
            None => (self.estimate_c()?, true),
        };
        let mut report = BoundReport {
            m: self.config.m,
            topology: self.config.topology,
            lambda,
            gamma: gamma.clone(),
            pi_min: self.selection.min_edge_prob(),
            sigma: sigma.clone(),
            lipschitz: lipschitz.clone(),
            gf,
            gradient_radius: self.gradient_radius,
            c,
            c_estimated,
            alpha: None,
            rho_lemma: None,
            rho_proposition: None,
            assumption4: None,
            error_bound: None,
            error_bound_proposition: None,
            disagreement_bound: None,
            notes: Vec::new(),
        };
        let StepsizePolicy::Constant { alpha } = &self.policy else {
            report
                .notes
                .push("diminishing stepsizes: constant-stepsize bounds not applicable".into());
            return Ok(report);
        };
        let inputs = BoundInputs {
            m: self.config.m,
            sigma,
            lipschitz,
            alpha: alpha.clone(),
            gamma,
            c,
            gf,
            lambda,
        };
        report.alpha = Some(alpha.clone());
        report.rho_lemma = Some(
            (0..inputs.m)
                .map(|i| inputs.rho(i, RhoForm::Lemma))
                .collect(),
        );
        report.rho_proposition = Some(
            (0..inputs.m)
                .map(|i| inputs.rho(i, RhoForm::Proposition))
                .collect(),
        );
        report.assumption4 = Some(check_assumption4(&inputs)?);
        for (form, slot) in [
            (RhoForm::Lemma, &mut report.error_bound),
            (RhoForm::Proposition, &mut report.error_bound_proposition),
        ] {
            match error_bound_with(&inputs, form) {
                Ok(b) => *slot = Some(b),
                Err(Error::InvalidStepsizes(msg)) => report
                    .notes
                    .push(format!("{form:?} form bound unavailable: {msg}")),
                Err(e) => return Err(e),
            }
        }
        match disagreement_bound(&inputs) {
            Ok(b) => report.disagreement_bound = Some(b),
            Err(Error::InvalidStepsizes(msg)) => report
                .notes
                .push(format!("disagreement bound unavailable: {msg}")),
            Err(e) => return Err(e),
        }
        Ok(report)
    }

    pub fn bound_inputs(&self) -> Result<BoundInputs<f64>> {
        let r = self.bound_report()?;
        let alpha = r.alpha.ok_or_else(|| {
            Error::InvalidConfig("bound inputs need a constant or balanced policy".into())
        })?;
        Ok(BoundInputs {
            m: r.m,
            sigma: r.sigma,
            lipschitz: r.lipschitz,
            alpha,
            gamma: r.gamma,
            c: r.c,
            gf: r.gf,
            lambda: r.lambda,
        })
    }

    fn estimate_c(&self) -> Result<f64> {
        let feasible =
            self.problem.feasible_set.as_deref().ok_or_else(|| {
                Error::InvalidConfig("no feasible set to estimate c against".into())
            })?;
        let b = &self.config.bound;
        let mut rng = ChaCha8Rng::seed_from_u64(b.regularity_seed);
        let (lo, hi) = &self.sample_box;
        estimate_regularity(
            &self.problem.constraints,
            feasible,
            lo,
            hi,
            &mut rng,
            b.regularity_samples,
            b.regularity_draws,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub m: usize,
    pub topology: TopologyKind,
    pub lambda: f64,
    pub gamma: Vec<f64>,
    pub pi_min: f64,
    pub sigma: Vec<f64>,
    pub lipschitz: Vec<f64>,
    pub gf: f64,
    pub gradient_radius: f64,
    pub c: f64,
    pub c_estimated: bool,
    pub alpha: Option<Vec<f64>>,
    pub rho_lemma: Option<Vec<f64>>,
    pub rho_proposition: Option<Vec<f64>>,
    pub assumption4: Option<Assumption4Report<f64>>,
    pub error_bound: Option<ErrorBound<f64>>,
    pub error_bound_proposition: Option<ErrorBound<f64>>,
    pub disagreement_bound: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: u64,
    pub k: u64,
    pub avg_sq_error: Option<f64>,
    pub consensus: f64,
    pub feasibility: Option<f64>,
}

impl MetricsRow {
    pub fn from_record(run_id: u64, r: &TraceRecord<f64>) -> Self {
        Self {
            run_id,
            k: r.k,
            avg_sq_error: r.avg_sq_error,
            consensus: r.consensus,
            feasibility: r.feasibility,
        }
    }
}

pub const CSV_HEADER: &str = "run_id,k,avg_sq_error,consensus,feasibility";

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Long-format CSV, 17 significant digits, empty fields for missing metrics.
pub fn write_csv<W: Write>(rows: &[MetricsRow], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.run_id,
            r.k,
            r.avg_sq_error.map(fmt_value).unwrap_or_default(),
            fmt_value(r.consensus),
            r.feasibility.map(fmt_value).unwrap_or_default()
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::InvalidConfig("unexpected CSV header".into()));
    }
    let parse_err = |line: &str| Error::InvalidConfig(format!("malformed CSV row: {line}"));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(parse_err(line));
            }
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| parse_err(line))
                }
            };
            Ok(MetricsRow {
                run_id: f[0].parse().map_err(|_| parse_err(line))?,
                k: f[1].parse().map_err(|_| parse_err(line))?,
                avg_sq_error: opt(f[2])?,
                consensus: f[3].parse().map_err(|_| parse_err(line))?,
                feasibility: opt(f[4])?,
            })
        })
        .collect()
}
