use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ddq_core::agent::{degenerate_config, AgentConfig, Algorithm, Threshold};
use ddq_core::diagnostics::{invariant_audit, read_trace, replay_escapes, write_trace};
use ddq_core::env::{default_paper_gridworld, Environment};
use ddq_core::harness::{
    self, parse_seeds, recommend_params, run_bench, run_single, write_runs_csv, RunSettings,
};
use ddq_core::mdp::{optimal_action_values, policy_state_values};

#[derive(Parser)]
#[command(name = "ddq", version, about = "DDQ, Delayed Q-learning and R-max on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an MDP or grid file exactly and print Q*, v* and the greedy policy.
    Solve {
        path: PathBuf,
        #[arg(long, default_value_t = harness::ORACLE_TOLERANCE)]
        tolerance: f64,
    },
    /// One monitored run; prints the run result as JSON.
    Run(RunArgs),
    /// Several algorithms over several seeds; writes per-run CSV and a JSON summary.
    Bench(BenchArgs),
    /// Theoretical parameters for a target accuracy and confidence.
    Recommend {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = harness::DEFAULT_DELTA)]
        delta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = harness::DEFAULT_C)]
        c: f64,
    },
    /// Check a JSONL trace against the deterministic bounds. Exits 1 on a hard failure.
    Audit {
        #[arg(long)]
        trace: PathBuf,
        /// Environment the trace was recorded on; the built-in grid when omitted.
        #[arg(long)]
        env: Option<PathBuf>,
        /// Algorithm that produced the trace.
        #[arg(long, default_value = "ddq")]
        algo: Algorithm,
        #[command(flatten)]
        agent: AgentArgs,
    },
    /// Print the built-in 3x3 grid as a spec file.
    DefaultGrid,
}

#[derive(Args)]
struct AgentArgs {
    #[arg(long, default_value = "65")]
    m1: Threshold,
    #[arg(long, default_value = "175")]
    m2: Threshold,
    #[arg(long, default_value_t = 0.06)]
    epsilon: f64,
}

#[derive(Args)]
struct RunArgs {
    /// Grid or MDP file; the built-in grid when omitted.
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long, default_value = "ddq")]
    algo: Algorithm,
    #[command(flatten)]
    agent: AgentArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = harness::DEFAULT_HORIZON)]
    horizon: u64,
    #[arg(long, default_value_t = 1)]
    stride: u64,
    /// Write the per-step trace as JSONL.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long, default_value = "ddq,delayed_q,rmax", value_delimiter = ',')]
    algos: Vec<Algorithm>,
    #[arg(long, default_value = "1..10")]
    seeds: String,
    #[command(flatten)]
    agent: AgentArgs,
    #[arg(long, default_value_t = harness::DEFAULT_HORIZON)]
    horizon: u64,
    #[arg(long, default_value_t = 1)]
    stride: u64,
    #[arg(long, default_value_t = harness::default_workers())]
    workers: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Summary destination; stderr when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

fn load_env(path: Option<&Path>) -> Result<Environment> {
    match path {
        None => Ok(Environment::default_grid()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Environment::from_json(&text).with_context(|| format!("loading {}", p.display()))
        }
    }
}

fn base_config(agent: &AgentArgs, gamma: f64) -> Result<AgentConfig> {
    Ok(AgentConfig::from_epsilon(agent.m1, agent.m2, agent.epsilon, gamma)?)
}

fn print_json(value: serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &value)?;
    writeln!(out)?;
    Ok(())
}

fn solve(path: &Path, tolerance: f64) -> Result<()> {
    let env = load_env(Some(path))?;
    let q = optimal_action_values(&env.mdp, tolerance)?;
    let policy = q.greedy_policy();
    let v_policy = policy_state_values(&env.mdp, &policy)?;
    print_json(json!({
        "q_star": q,
        "v_star": q.state_values(),
        "policy": policy.actions,
        "v_policy": v_policy,
        "fingerprint": env.mdp.fingerprint(),
    }))
}

fn run(args: RunArgs) -> Result<()> {
    let env = load_env(args.env.as_deref())?;
    let cfg = degenerate_config(args.algo, &base_config(&args.agent, env.mdp.gamma())?);
    let mut settings = RunSettings::new(args.agent.epsilon, args.horizon);
    settings.monitor_stride = args.stride;
    settings.keep_trace = args.trace.is_some();
    settings.timing = args.timing;
    let out = run_single(&env, &cfg, args.algo.label(), args.seed, &settings)?;
    if let (Some(path), Some(trace)) = (&args.trace, &out.trace) {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_trace(io::BufWriter::new(file), trace)?;
    }
    print_json(json!({ "result": out.result, "audit": out.audit }))
}

fn bench(args: BenchArgs) -> Result<()> {
    let env = load_env(args.env.as_deref())?;
    let base = base_config(&args.agent, env.mdp.gamma())?;
    let seeds = parse_seeds(&args.seeds)?;
    if args.algos.is_empty() {
        bail!("no algorithms selected");
    }
    let mut settings = RunSettings::new(args.agent.epsilon, args.horizon);
    settings.monitor_stride = args.stride;
    settings.timing = args.timing;
    let out = run_bench(&env, &base, &args.algos, &seeds, &settings, args.workers)?;
    let results = out.results();
    match &args.csv {
        Some(p) => write_runs_csv(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?, &results)?,
        None => write_runs_csv(io::stdout().lock(), &results)?,
    }
    let summary = serde_json::to_string_pretty(&out.summary)?;
    match &args.summary {
        Some(p) => fs::write(p, summary + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => eprintln!("{summary}"),
    }
    for w in &out.summary.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn audit(trace: &Path, env: Option<&Path>, algo: Algorithm, agent: &AgentArgs) -> Result<bool> {
    let text = fs::read_to_string(trace).with_context(|| format!("reading {}", trace.display()))?;
    let records = read_trace(&text)?;
    let env = load_env(env)?;
    let m = &env.mdp;
    let cfg = degenerate_config(algo, &base_config(agent, m.gamma())?);
    let report = invariant_audit(&records, &cfg, m.num_states(), m.num_actions())?;
    let recount = replay_escapes(&records, m, &cfg)?;
    let recount_ok = recount == report.total_escapes;
    let pass = report.hard_pass() && recount_ok;
    print_json(json!({ "report": report, "escape_recount": recount, "hard_pass": pass }))?;
    for c in report.hard_failures() {
        eprintln!("hard failure: {} observed {} bound {:?}", c.name, c.observed, c.bound);
    }
    if !recount_ok {
        eprintln!("hard failure: trace has {} escapes, recount gives {recount}", report.total_escapes);
    }
    Ok(pass)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { path, tolerance } => solve(&path, tolerance)?,
        Command::Run(args) => run(args)?,
        Command::Bench(args) => bench(args)?,
        Command::Recommend { states, actions, epsilon, delta, gamma, c } => {
            print_json(serde_json::to_value(recommend_params(states, actions, epsilon, delta, gamma, c)?)?)?
        }
        Command::Audit { trace, env, algo, agent } => {
            if !audit(&trace, env.as_deref(), algo, &agent)? {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::DefaultGrid => println!("{}", default_paper_gridworld().to_json()?),
    }
    Ok(ExitCode::SUCCESS)
}
