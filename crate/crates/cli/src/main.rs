//! `pagereg` command-line front end.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pagereg::config::ModelConfig;
use pagereg::cost::{export_trace, monte_carlo_cost, policy_cost, CostReport, MonteCarloEstimate, MonteCarloOptions};
use pagereg::iterate::{
    classify_simple_policy, individually_optimal, joint_dp, reachable_beliefs, IterationOptions,
};
use pagereg::major::{check_walk_structure, is_neat_function};
use pagereg::model::{ModelKind, MotionModel, PagingRcl, RegistrationRcl, SimplePolicy};
use pagereg::paging::derive_paging_rcl;
use pagereg::rclfile::{read_paging_rcl, read_registration_rcl, write_paging_rcl, write_registration_rcl};
use pagereg::regdp::{ping_pong_rank, walk_value_iteration};
use pagereg::Error;

#[derive(Parser)]
#[command(name = "pagereg", version, about = "Paging and registration policy solver for Markov mobility models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Alternate paging and registration optimization until neither improves.
    Solve(SolveArgs),
    /// Exact cost of an RCL pair, optionally cross-checked by simulation.
    Evaluate(EvaluateArgs),
    /// Simulate a trajectory and export the network belief over time.
    Trace(TraceArgs),
    /// Check the structural optimality results on a simple or walk model.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// Model configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Initial registration RCL: always, never, threshold:<d>, or an RCL file.
    #[arg(long, default_value = "never")]
    g0: String,
    /// Stop when a round improves the cost by less than this.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Sup-norm tolerance of the inner value iteration.
    #[arg(long, default_value_t = 1e-12)]
    vi_tol: f64,
    #[arg(long, default_value_t = 100)]
    max_rounds: usize,
}

#[derive(Args)]
struct PolicyFiles {
    /// Paging RCL file; ML paging for the registration RCL when omitted.
    #[arg(long)]
    f: Option<PathBuf>,
    /// Registration RCL file.
    #[arg(long)]
    g: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    policy: PolicyFiles,
    /// Monte-Carlo replications (0 disables the simulation).
    #[arg(long, default_value_t = 0)]
    mc_cycles: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Simulation stops once the discounted tail bound is below this.
    #[arg(long, default_value_t = 1e-9)]
    horizon_eps: f64,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    policy: PolicyFiles,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of simulated steps.
    #[arg(long, default_value_t = 100)]
    t_end: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Model configuration (TOML) of kind `simple` or `walk`.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Largest belief set the joint DP may enumerate.
    #[arg(long, default_value_t = 10_000)]
    cap: usize,
}

/// A failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConvergence { .. } => 3,
            Error::CapExceeded { .. } => 4,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn load_model(path: &Path) -> Result<MotionModel, Failure> {
    let with_path = |e: Error| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    };
    ModelConfig::load(path).and_then(|c| c.build()).map_err(with_path)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure {
        code: 2,
        message: format!("cannot open {}: {e}", path.display()),
    })
}

fn initial_registration(model: &MotionModel, choice: &str) -> Result<RegistrationRcl, Failure> {
    Ok(match choice {
        "always" => RegistrationRcl::always(model),
        "never" => RegistrationRcl::never(model),
        s if s.starts_with("threshold:") => {
            let d = s["threshold:".len()..].parse().map_err(|_| Failure {
                code: 2,
                message: format!("bad threshold in --g0 '{s}'"),
            })?;
            RegistrationRcl::hop_threshold(model, d)
        }
        path => read_registration_rcl(model, open(Path::new(path))?)?,
    })
}

fn load_policy(model: &MotionModel, files: &PolicyFiles) -> Result<(PagingRcl, RegistrationRcl), Failure> {
    let g = read_registration_rcl(model, open(&files.g)?)?;
    let f = match &files.f {
        Some(path) => read_paging_rcl(model, open(path)?)?,
        None => derive_paging_rcl(model, &g),
    };
    Ok((f, g))
}

fn solve(args: SolveArgs) -> CmdResult {
    let model = load_model(&args.common.config)?;
    let g0 = initial_registration(&model, &args.g0)?;
    let opts = IterationOptions { tol: args.tol, vi_tol: args.vi_tol, max_rounds: args.max_rounds };
    let log = individually_optimal(&model, &g0, opts)?;
    let out = &args.common.out;
    write_paging_rcl(&log.paging, create(out, "paging.rcl")?)?;
    write_registration_rcl(&log.registration, create(out, "registration.rcl")?)?;
    write_json(out, "iteration_log.json", &log)?;
    for r in &log.rounds {
        println!(
            "round {}: paging step {:.15e}, registration step {:.15e}",
            r.round, r.cost_after_paging_step, r.cost_after_registration_step
        );
    }
    println!("converged after {} round(s), cost {:.15e}", log.rounds.len(), log.final_cost);
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct Evaluation {
    #[serde(flatten)]
    exact: CostReport,
    monte_carlo: Option<MonteCarloEstimate>,
}

fn evaluate(args: EvaluateArgs) -> CmdResult {
    let model = load_model(&args.common.config)?;
    let (f, g) = load_policy(&model, &args.policy)?;
    let exact = policy_cost(&model, &f, &g)?;
    println!("exact cost {:.15e}", exact.total);
    let monte_carlo = if args.mc_cycles > 0 {
        let opts = MonteCarloOptions { seed: args.seed, n_cycles: args.mc_cycles, horizon_eps: args.horizon_eps };
        let est = monte_carlo_cost(&model, &f, &g, opts)?;
        println!(
            "monte carlo {:.6e} ± {:.2e} (seed {}, {} replications)",
            est.mean, est.std_error, args.seed, est.replications
        );
        Some(est)
    } else {
        None
    };
    write_json(&args.common.out, "cost_report.json", &Evaluation { exact, monte_carlo })?;
    Ok(ExitCode::SUCCESS)
}

fn trace(args: TraceArgs) -> CmdResult {
    let model = load_model(&args.common.config)?;
    let (f, g) = load_policy(&model, &args.policy)?;
    let trace = export_trace(&model, &f, &g, args.seed, args.t_end)?;
    trace.write_records(create(&args.common.out, "trace.tsv")?)?;
    trace.write_plot_table(&model, create(&args.common.out, "plot.tsv")?)?;
    let reports = trace.records.iter().filter(|r| r.paged || r.registered).count();
    println!("{} steps, {} reports", trace.records.len(), reports);
    Ok(ExitCode::SUCCESS)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn verify(args: VerifyArgs) -> CmdResult {
    let model = load_model(&args.config)?;
    let p = *model.params();
    let mut all = true;
    match model.kind() {
        ModelKind::Simple => {
            let chain = reachable_beliefs(&model, args.cap)?;
            println!("reachable beliefs: {}", chain.len());
            let sol = joint_dp(&model, chain, args.tol)?;
            let expected = if p.reg_cost >= p.lambda_p * p.page_cost * p.beta { SimplePolicy::A } else { SimplePolicy::B };
            let found = classify_simple_policy(&model, &sol);
            let ok = found == Some(expected);
            all &= ok;
            println!("policy {expected:?} jointly optimal: {}", verdict(ok));
            if let Some(found) = found {
                let origin = sol.value_at(&pagereg::belief::Belief::point(5, 0)).unwrap_or(f64::NAN);
                let closed = found.closed_form_cost(&p);
                let ok = (origin - closed).abs() < 1e-9;
                all &= ok;
                println!("optimal value {origin:.12e} matches closed form {closed:.12e}: {}", verdict(ok));
            }
        }
        ModelKind::Walk { half_width, .. } => {
            let sol = walk_value_iteration(&model, ping_pong_rank, args.tol.max(1e-13))?;
            let neg: Vec<f64> = sol.values.iter().map(|v| -v).collect();
            let neat = is_neat_function(&neg, *half_width, 1e-12);
            let gap = sol.d_right as i64 - sol.d_left as i64;
            let thresholds = sol.register_set_is_interval_complement() && (gap == 0 || gap == 1);
            println!("thresholds d_l = {}, d_r = {}", sol.d_left, sol.d_right);
            println!("value function neat: {}", verdict(neat));
            println!("registration outside [-d_l+1, d_r-1] with d_l in {{d_r, d_r-1}}: {}", verdict(thresholds));
            let log = individually_optimal(&model, &RegistrationRcl::never(&model), IterationOptions::default())?;
            let report = check_walk_structure(&model, &log.paging, &log.registration)?;
            println!("ping-pong + threshold: {}", verdict(report.passes()));
            if let Some(why) = &report.first_failure {
                println!("  {why}");
            }
            all &= neat && thresholds && report.passes();
        }
        _ => {
            return Err(Failure { code: 2, message: "verify needs a model of kind simple or walk".into() });
        }
    }
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Trace(a) => trace(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
