//! The `fss` command line.
//!
//! Exit codes: 0 when every check passed, 2 when a check failed, 1 on usage,
//! configuration or runtime errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::chain::{
    level_set_family, optimal_k0, run_chain, stampacchia_theta, weak_residual, ChainResult,
};
use crate::config::{load_config, RunConfig};
use crate::constants::{
    check_valfa_limit, estimate_mu_direct, lambda_alpha, mu_estimate, mu_from_solution,
    sweep_alpha, verify_log_sobolev, verify_sobolev, SingularSolution,
};
use crate::domain::{Grid, Kernel};
use crate::error::{FssError, Result};
use crate::io::{
    config_hash, load_solution, portable_config, save_mu_json, save_solution, save_sweep_csv,
    write_diagnostics, ConstantKind, ConstantValue, SolutionFile, FORMAT_VERSION,
};
use crate::ops::{Field, WeightField};
use crate::props::{
    check_level_sets, check_q_identity, check_strong_monotonicity, check_vector_inequalities,
    LemmaReport,
};
use crate::solver::embedding_constant_seeded;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

/// Weak-form residual accepted by `verify`.
const RESIDUAL_TOL: f64 = 1e-6;
const SLACK: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "fss", version, about = "Fractional p-Laplacian singular problems and sharp Sobolev constants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the approximation chain for problem.alpha and store the solution.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Solution file (defaults to output.solution).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Level diagnostics as JSON lines (defaults to output.diagnostics).
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Sweep problem.alpha_grid and estimate the log-Sobolev constant.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        mu: Option<PathBuf>,
    },
    /// Reload a solution and certify its inequality and weak form.
    Verify {
        #[arg(long)]
        solution: PathBuf,
        /// Rebuild the problem from this config instead of the embedded one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the elementary lemma suites on the configured kernel.
    Props {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Best discrete embedding constant `|v|_theta^p <= S [v]^p`.
    Constant {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 8)]
        starts: usize,
    },
}

/// A named pass/fail check in a command report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub passed: bool,
}

fn check(name: &str, value: f64, passed: bool) -> Check {
    Check {
        name: name.into(),
        value,
        passed,
    }
}

struct Outcome {
    report: Value,
    checks: Vec<Check>,
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code. The JSON report goes to `out`, warnings and errors to `err`.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let env = match Env::from_process() {
        Ok(env) => env,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    let mut warnings = Vec::new();
    let result = match env.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command, &env, &mut warnings)),
            Err(e) => Err(FssError::Io(std::io::Error::other(e))),
        },
        None => dispatch(&cli.command, &env, &mut warnings),
    };
    for w in &warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    match result {
        Ok(outcome) => {
            let passed = outcome.checks.iter().all(|c| c.passed);
            let mut report = outcome.report;
            report["checks"] = serde_json::to_value(&outcome.checks).expect("checks serialize");
            report["passed"] = passed.into();
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            if writeln!(out, "{text}").is_err() {
                return EXIT_ERROR;
            }
            for c in outcome.checks.iter().filter(|c| !c.passed) {
                let _ = writeln!(err, "check failed: {} ({:e})", c.name, c.value);
            }
            if passed {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

/// `FSS_THREADS` and `FSS_SEED`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

impl Env {
    pub fn from_process() -> Result<Self> {
        Ok(Self {
            threads: parse_env("FSS_THREADS")?,
            seed: parse_env("FSS_SEED")?,
        })
    }
}

fn parse_env<T: std::str::FromStr>(name: &str) -> Result<Option<T>> {
    match std::env::var(name) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse().map(Some).map_err(|_| FssError::Config {
            path: name.into(),
            reason: format!("cannot parse {v:?}"),
        }),
        _ => Ok(None),
    }
}

fn dispatch(cmd: &Command, env: &Env, warnings: &mut Vec<String>) -> Result<Outcome> {
    match cmd {
        Command::Solve {
            config,
            out,
            diagnostics,
        } => solve(config, out.as_deref(), diagnostics.as_deref(), env),
        Command::Sweep { config, csv, mu } => sweep(config, csv.as_deref(), mu.as_deref(), env),
        Command::Verify {
            solution,
            config,
            trials,
            seed,
        } => verify(solution, config.as_deref(), *trials, *seed, env, warnings),
        Command::Props {
            config,
            trials,
            seed,
        } => props(config, *trials, *seed, env),
        Command::Constant {
            config,
            theta,
            starts,
        } => constant(config, *theta, *starts),
    }
}

struct Problem {
    cfg: RunConfig,
    grid: Grid,
    kernel: Kernel,
    omega: WeightField,
}

fn setup(cfg: RunConfig, env: &Env) -> Result<Problem> {
    let mut cfg = cfg;
    if let Some(seed) = env.seed {
        cfg.verification.seed = seed;
    }
    let grid = cfg.build_grid()?;
    let kernel = cfg.build_kernel(&grid)?;
    let omega = cfg.build_weight(&grid)?;
    Ok(Problem {
        cfg,
        grid,
        kernel,
        omega,
    })
}

fn required<T: Copy>(v: Option<T>, path: &str) -> Result<T> {
    v.ok_or_else(|| FssError::Config {
        path: path.into(),
        reason: "required by this command".into(),
    })
}

fn chain_checks(chain: &ChainResult) -> Vec<Check> {
    let c = chain.checks();
    let mut out = vec![check("chain_converged", 0.0, chain.converged)];
    if chain.levels.len() > 1 {
        out.push(check("monotone_pointwise", c.pointwise, c.pointwise >= -SLACK));
        out.push(check("monotone_seminorm", c.seminorm, c.seminorm >= -1e-10));
    }
    out.push(check("barrier", c.barrier, c.barrier >= -SLACK));
    out.push(check("limit_above_chain", c.limit, c.limit >= -SLACK));
    out
}

fn solve(config: &Path, out: Option<&Path>, diag: Option<&Path>, env: &Env) -> Result<Outcome> {
    let pb = setup(load_config(config)?, env)?;
    let alpha = required(pb.cfg.problem.alpha, "problem.alpha")?;
    let opts = pb.cfg.chain_options();
    let chain = run_chain(&pb.omega, alpha, &pb.kernel, &pb.cfg.problem.n_schedule, &opts)?;
    let mut checks = chain_checks(&chain);

    let seminorm_u = crate::ops::seminorm_p(&chain.u_alpha, &pb.kernel)?;
    let (constant, seminorm_extremal) = if alpha < 1.0 {
        let sol = lambda_alpha(&chain, &pb.omega, &pb.kernel)?;
        checks.push(check("lambda_consistency", sol.lambda_gap(), sol.lambda_gap() <= 1e-8));
        (
            Some(ConstantValue {
                kind: ConstantKind::Lambda,
                value: sol.lambda(),
                ln_value: sol.ln_lambda,
            }),
            Some(sol.seminorm_u),
        )
    } else if alpha == 1.0 {
        let gap = chain.energy_identity_gap(&pb.omega, &pb.kernel)?;
        checks.push(check("energy_identity", gap, gap <= 1e-7));
        let mu = mu_from_solution(&chain.u_alpha, &pb.omega, &pb.kernel, chain.converged, &opts)?;
        (
            Some(ConstantValue {
                kind: ConstantKind::Mu,
                value: mu.mu,
                ln_value: mu.mu.ln(),
            }),
            Some(mu.mu),
        )
    } else {
        (None, None)
    };

    let file = SolutionFile {
        version: FORMAT_VERSION,
        config_hash: config_hash(&pb.cfg),
        config: portable_config(&pb.cfg),
        grid_shape: pb.grid.shape().to_vec(),
        alpha,
        constant,
        seminorm_u,
        seminorm_extremal,
        converged: chain.converged,
        values: chain.u_alpha.values().to_vec(),
    };
    let out = out.map(Path::to_path_buf).or_else(|| pb.cfg.output.solution.as_ref().map(|p| pb.cfg.resolve(p)));
    if let Some(path) = &out {
        save_solution(path, &file)?;
    }
    let diag = diag.map(Path::to_path_buf).or_else(|| pb.cfg.output.diagnostics.as_ref().map(|p| pb.cfg.resolve(p)));
    if let Some(path) = &diag {
        write_diagnostics(path, &chain.diagnostics())?;
    }
    Ok(Outcome {
        report: json!({
            "command": "solve",
            "alpha": alpha,
            "levels": chain.levels.len(),
            "final_n": chain.final_level().n,
            "constant": file.constant,
            "seminorm_u": seminorm_u,
            "max_u": chain.u_alpha.max(),
            "m_alpha": chain.m_alpha,
            "config_hash": file.config_hash,
        }),
        checks,
    })
}

fn sweep(config: &Path, csv: Option<&Path>, mu_path: Option<&Path>, env: &Env) -> Result<Outcome> {
    let pb = setup(load_config(config)?, env)?;
    let grid = pb.cfg.problem.alpha_grid.clone().ok_or_else(|| FssError::Config {
        path: "problem.alpha_grid".into(),
        reason: "required by this command".into(),
    })?;
    let opts = pb.cfg.chain_options();
    let schedule = &pb.cfg.problem.n_schedule;
    let sweep = sweep_alpha(&pb.omega, &grid, &pb.kernel, schedule, &opts)?;
    let direct = estimate_mu_direct(&pb.omega, &pb.kernel, schedule, &opts)?;
    let mu = mu_estimate(&sweep, &direct);
    let valfa = check_valfa_limit(&sweep, &direct, &pb.omega, &pb.kernel, 1e-6, &opts)?;

    let csv = csv.map(Path::to_path_buf).or_else(|| pb.cfg.output.sweep_csv.as_ref().map(|p| pb.cfg.resolve(p)));
    if let Some(path) = &csv {
        save_sweep_csv(path, &sweep)?;
    }
    let mu_path = mu_path.map(Path::to_path_buf).or_else(|| pb.cfg.output.mu_json.as_ref().map(|p| pb.cfg.resolve(p)));
    if let Some(path) = &mu_path {
        save_mu_json(path, &mu)?;
    }
    let checks = vec![
        check("all_converged", 0.0, sweep.records.iter().all(|r| r.converged()) && direct.converged),
        check("scaled_nondecreasing", sweep.min_increment, sweep.monotone()),
        check("v_identity", sweep.v_identity_gap, sweep.identity_holds()),
        check("mu_gap", mu.relative_gap(), mu.relative_gap() <= 1e-2),
        check("v_alpha_gaps_decreasing", valfa.final_gap, valfa.decreasing),
    ];
    Ok(Outcome {
        report: json!({
            "command": "sweep",
            "mu": mu,
            "v_alpha_gaps": valfa.gaps,
        }),
        checks,
    })
}

fn verify(
    path: &Path,
    config: Option<&Path>,
    trials: Option<usize>,
    seed: Option<u64>,
    env: &Env,
    warnings: &mut Vec<String>,
) -> Result<Outcome> {
    let file = load_solution(path)?;
    let cfg = match config {
        Some(c) => {
            let cfg = load_config(c)?;
            if config_hash(&cfg) != file.config_hash {
                warnings.push(format!(
                    "config hash differs from the one stored in {}",
                    path.display()
                ));
            }
            cfg
        }
        None => file.config.clone(),
    };
    cfg.validate()?;
    let pb = setup(cfg, env)?;
    if pb.grid.shape() != file.grid_shape.as_slice() {
        return Err(FssError::GridMismatch {
            expected: pb.grid.num_interior(),
            found: file.values.len(),
        });
    }
    let trials = trials.unwrap_or(pb.cfg.verification.trials);
    let seed = seed.or(env.seed).unwrap_or(pb.cfg.verification.seed);
    let u = Field::from_values(&pb.grid, file.values.clone())?;
    let alpha = file.alpha;

    let residual = weak_residual(&u, &pb.omega, alpha, &pb.kernel, trials, seed)?;
    let mut checks = vec![check(
        "weak_residual",
        residual.max_residual,
        residual.max_residual <= RESIDUAL_TOL,
    )];
    let mut report = json!({
        "command": "verify",
        "alpha": alpha,
        "trials": trials,
        "seed": seed,
        "weak_residual": residual,
    });
    if alpha < 1.0 {
        let sol = SingularSolution::from_field(&u, alpha, &pb.omega, &pb.kernel, file.converged)?;
        let ineq = verify_sobolev(&sol, &pb.omega, &pb.kernel, trials, seed)?;
        checks.push(check("sobolev", ineq.min_slack, ineq.passed()));
        report["lambda"] = sol.lambda().into();
        report["inequality"] = serde_json::to_value(ineq).expect("report serializes");
    } else if alpha == 1.0 {
        let opts = pb.cfg.chain_options();
        let mu = mu_from_solution(&u, &pb.omega, &pb.kernel, file.converged, &opts)?;
        let ineq = verify_log_sobolev(mu.mu, &mu.v, &pb.omega, &pb.kernel, trials, seed)?;
        checks.push(check("log_sobolev", ineq.min_slack, ineq.passed()));
        checks.push(check("log_mean_zero", mu.log_mean, mu.log_mean.abs() <= SLACK));
        report["mu"] = mu.mu.into();
        report["inequality"] = serde_json::to_value(ineq).expect("report serializes");
    }
    if let Some(c) = file.constant {
        let now = report
            .get(match c.kind {
                ConstantKind::Lambda => "lambda",
                ConstantKind::Mu => "mu",
            })
            .and_then(Value::as_f64);
        if let Some(now) = now {
            let gap = (now - c.value).abs() / c.value.abs();
            checks.push(check("stored_constant", gap, gap <= 1e-9));
        }
    }
    Ok(Outcome { report, checks })
}

fn lemma_check(r: &LemmaReport) -> Check {
    check(&r.lemma, r.worst_slack, r.passed)
}

fn props(config: &Path, trials: Option<usize>, seed: Option<u64>, env: &Env) -> Result<Outcome> {
    let pb = setup(load_config(config)?, env)?;
    let trials = trials.unwrap_or(pb.cfg.verification.trials);
    let seed = seed.or(env.seed).unwrap_or(pb.cfg.verification.seed);
    let p = pb.cfg.params.p;
    let mut reports = vec![
        check_vector_inequalities(p, trials, seed)?,
        check_strong_monotonicity(&pb.kernel, trials, seed)?,
        check_q_identity(&pb.kernel, trials, seed)?,
    ];
    let alpha = pb.cfg.problem.alpha.unwrap_or(0.5);
    let theta = stampacchia_theta(pb.kernel.params(), pb.omega.r())?;
    let opts = pb.cfg.chain_options();
    let chain = run_chain(&pb.omega, alpha, &pb.kernel, &pb.cfg.problem.n_schedule, &opts)?;
    let s = embedding_constant_seeded(theta, &pb.kernel, &opts.solve, 8, seed)?;
    let k0 = optimal_k0(&pb.omega, alpha, &pb.kernel, theta, s.value);
    let family = level_set_family(
        &chain.u_alpha,
        &pb.omega,
        alpha,
        &pb.kernel,
        theta,
        s.value,
        k0,
        trials,
    )?;
    reports.push(check_level_sets(&family)?);
    let checks = reports.iter().map(lemma_check).collect();
    Ok(Outcome {
        report: json!({
            "command": "props",
            "p": p,
            "trials": trials,
            "seed": seed,
            "reports": reports,
        }),
        checks,
    })
}

fn constant(config: &Path, theta: Option<f64>, starts: usize) -> Result<Outcome> {
    let cfg = load_config(config)?;
    let grid = cfg.build_grid()?;
    let kernel = cfg.build_kernel(&grid)?;
    let theta = match theta {
        Some(t) => t,
        None => stampacchia_theta(kernel.params(), cfg.weight.r)?,
    };
    let s = embedding_constant_seeded(theta, &kernel, &cfg.solve_options(), starts.max(1), 0x5eed)?;
    Ok(Outcome {
        report: json!({
            "command": "constant",
            "theta": theta,
            "value": s.value,
            "reverse": 1.0 / s.value,
            "seed": s.seed,
        }),
        checks: vec![check("finite", s.value, s.value.is_finite() && s.value > 0.0)],
    })
}
