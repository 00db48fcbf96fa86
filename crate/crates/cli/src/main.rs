use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grp_core::harness::{write_csv, Experiment, PolicyConfig, RunConfig};
use grp_core::mpc::{default_instance, solve_baseline, BASELINE_TOL};
use grp_core::topology::{SelectionMatrix, Topology, TopologyKind};
use grp_core::Error;
use serde_json::json;

/// Gossip random projection simulator. Log verbosity follows RUST_LOG.
#[derive(Parser)]
#[command(name = "grp", version)]
struct Cli {
    /// Print the default configuration as JSON and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Second largest eigenvalue of the expected mixing matrix.
    Lambda(NetworkArgs),
    /// Per-agent update probabilities.
    Gamma(NetworkArgs),
    /// Analysis report (constants, stepsize conditions, bounds) as JSON.
    Bound(ConfigArgs),
    /// Solve the MPC benchmark centrally and store the optimum.
    Baseline(BaselineArgs),
    /// One seeded run to CSV.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        run_id: u64,
    },
    /// All Monte-Carlo runs to one CSV.
    Mc(ConfigArgs),
    /// Check the constant-stepsize conditions; exits 2 on violation.
    Check(ConfigArgs),
}

#[derive(Args)]
struct NetworkArgs {
    #[arg(long)]
    topology: TopologyKind,
    #[arg(long)]
    m: usize,
    /// Decimal places.
    #[arg(long, default_value_t = 4)]
    digits: usize,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config; defaults apply to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_iters: Option<u64>,
    #[arg(long)]
    n_runs: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    instance_seed: u64,
    #[arg(long, default_value_t = BASELINE_TOL)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.n_iters {
            cfg.n_iters = n;
        }
        if let Some(n) = self.n_runs {
            cfg.n_runs = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<(), Error> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn selection(args: &NetworkArgs) -> Result<SelectionMatrix<f64>, Error> {
    Ok(SelectionMatrix::uniform(&Topology::build(
        args.topology,
        args.m,
    )?))
}

enum Outcome {
    Ok,
    Violation,
}

fn execute(cli: Cli) -> Result<Outcome, Error> {
    if cli.dump_config {
        write_json(None, &RunConfig::default())?;
        return Ok(Outcome::Ok);
    }
    let Some(command) = cli.command else {
        return Err(Error::InvalidConfig(
            "no subcommand given; see --help".into(),
        ));
    };
    match command {
        Command::Lambda(args) => {
            let lambda = selection(&args)?.lambda2()?;
            println!("{lambda:.*}", args.digits);
        }
        Command::Gamma(args) => {
            let gamma = selection(&args)?.gamma();
            let text: Vec<String> = gamma
                .iter()
                .map(|g| format!("{g:.*}", args.digits))
                .collect();
            println!("{}", text.join(" "));
        }
        Command::Bound(args) => {
            let exp = Experiment::prepare(args.load()?)?;
            write_json(args.out.as_deref(), &exp.bound_report()?)?;
        }
        Command::Baseline(args) => {
            let inst = default_instance::<f64>(args.m, args.instance_seed)?;
            let sol = solve_baseline(&inst, args.tol)?;
            log::info!(
                "baseline: {} iterations, kkt residual {:.3e}",
                sol.iterations,
                sol.kkt_residual
            );
            write_json(
                args.out.as_deref(),
                &json!({ "instance": inst, "solution": sol }),
            )?;
        }
        Command::Run { cfg, run_id } => {
            let exp = Experiment::prepare(cfg.load()?)?;
            if run_id >= exp.config.n_runs as u64 {
                return Err(Error::InvalidConfig(format!(
                    "run_id {run_id} outside 0..{}",
                    exp.config.n_runs
                )));
            }
            let rows = exp.run_single(run_id)?;
            write_csv(&rows, output(cfg.out.as_deref())?)?;
        }
        Command::Mc(cfg) => {
            let exp = Experiment::prepare(cfg.load()?)?;
            log::info!(
                "{} runs of {} iterations on {} m={}",
                exp.config.n_runs,
                exp.config.n_iters,
                exp.config.topology,
                exp.config.m
            );
            let rows = exp.run_mc()?;
            write_csv(&rows, output(cfg.out.as_deref())?)?;
        }
        Command::Check(cfg) => {
            let config = cfg.load()?;
            if matches!(config.policy, PolicyConfig::Diminishing) {
                return Err(Error::InvalidConfig(
                    "check needs a constant or balanced stepsize policy".into(),
                ));
            }
            let exp = Experiment::prepare(config)?;
            let report = exp.bound_report()?;
            let a4 = report.assumption4.clone().expect("constant policy");
            let passed = a4.passed();
            write_json(
                cfg.out.as_deref(),
                &json!({
                    "passed": passed,
                    "rho_lemma": report.rho_lemma,
                    "assumption4": a4,
                    "c": report.c,
                }),
            )?;
            if !passed {
                return Ok(Outcome::Violation);
            }
        }
    }
    Ok(Outcome::Ok)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidTopology(_)
        | Error::InvalidSelection(_)
        | Error::InvalidConstraint(_)
        | Error::InvalidObjective(_)
        | Error::InvalidStepsizes(_)
        | Error::InvalidConfig(_)
        | Error::DimensionMismatch { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => {
            eprintln!("error: stepsize conditions violated");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
