//! Experiment orchestration: parameter recommendation, single monitored
//! runs, and multi-seed benchmarks.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agent::{accuracy_chain, degenerate_config, AgentConfig, AgentState, Algorithm};
use crate::diagnostics::{
    self, check_theorem1_conditions, compute_known_set, detect_escape, invariant_audit, AuditReport,
    ConditionSummary, PacMonitor, StepRecord,
};
use crate::env::{env_step, Environment, Rng};
use crate::error::{Error, Result};
use crate::mdp::{self, optimal_action_values};
use crate::par;

/// Tolerance used to solve for the optimal values that monitors compare to.
pub const ORACLE_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_HORIZON: u64 = 50_000;
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_C: f64 = 1.0;

/// Theoretical parameter choices for a target accuracy and confidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendedParams {
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub m1: u64,
    pub m2: u64,
    pub m1_exact: f64,
    pub m2_exact: f64,
    pub vi_sweeps: usize,
    pub kappa: f64,
}

/// Evaluates the sample-size formulas:
///
/// * `eps1 = (1 - gamma) eps / 3`, `eps2 = eps1 / 3`
/// * `m1 = ln(8 |S||A| (1 + kappa) / delta) / (2 (eps1 - 2 eps2)^2 (1 - gamma)^2)`
/// * `m2 = C (|S| + ln(8 |S||A| / delta)) / (eps2^2 (1 - gamma)^4)`
///
/// with `m1`, `m2` and the sweep count rounded up.
pub fn recommend_params(
    num_states: usize,
    num_actions: usize,
    epsilon: f64,
    delta: f64,
    gamma: f64,
    c: f64,
) -> Result<RecommendedParams> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} not in [0,1)")));
    }
    let vmax = mdp::v_max(gamma);
    if !(epsilon > 0.0 && epsilon < vmax) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} not in (0, {vmax})")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} not in (0, 1)")));
    }
    if !(c > 0.0) || num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidArgument("C, |S| and |A| must be positive".into()));
    }
    let (e1, e2) = accuracy_chain(epsilon, gamma);
    let pairs = (num_states * num_actions) as f64;
    let kappa = diagnostics::kappa(num_states, num_actions, gamma, e1);
    let m1_exact = (8.0 * pairs * (1.0 + kappa) / delta).ln()
        / (2.0 * (e1 - 2.0 * e2).powi(2) * (1.0 - gamma).powi(2));
    let m2_exact = c * (num_states as f64 + (8.0 * pairs / delta).ln())
        / (e2.powi(2) * (1.0 - gamma).powi(4));
    Ok(RecommendedParams {
        epsilon1: e1,
        epsilon2: e2,
        m1: m1_exact.ceil() as u64,
        m2: m2_exact.ceil() as u64,
        m1_exact,
        m2_exact,
        vi_sweeps: mdp::sweeps_for_accuracy(e2, gamma)?,
        kappa,
    })
}

/// Knobs of a monitored run that are not agent parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    /// Target accuracy; violations are checked against `4 epsilon`.
    pub epsilon: f64,
    pub horizon: u64,
    /// Check the optimality condition every `monitor_stride` steps.
    pub monitor_stride: u64,
    pub keep_trace: bool,
    /// Record wall-clock time; otherwise it is reported as 0.
    pub timing: bool,
}

impl RunSettings {
    pub fn new(epsilon: f64, horizon: u64) -> Self {
        RunSettings {
            epsilon,
            horizon,
            monitor_stride: 1,
            keep_trace: false,
            timing: false,
        }
    }
}

/// Outcome of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: String,
    pub seed: u64,
    pub config: AgentConfig,
    pub epsilon: f64,
    pub horizon: u64,
    /// One past the last step whose policy was not `4 epsilon`-optimal at
    /// the visited state, or 0 if there was none. Capped at `horizon`.
    pub convergence_step: u64,
    pub converged: bool,
    pub violation_count: u64,
    pub type1_updates: u64,
    pub type2_sweeps: u64,
    pub attempted_updates: u64,
    pub escape_events: u64,
    pub wallclock_ms: u64,
    pub fingerprint: String,
    pub audit_hard_pass: bool,
    pub escape_bound_ok: bool,
    pub optimism_ok: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub result: RunResult,
    pub audit: AuditReport,
    pub trace: Option<Vec<StepRecord>>,
}

/// Drives `s -> select_action -> env_step -> observe` for `horizon` steps,
/// recording escapes, optimality violations, and PAC condition checks at
/// every successful timestep. Deterministic in `(env, cfg, seed, settings)`.
pub fn run_single(
    env: &Environment,
    cfg: &AgentConfig,
    label: &str,
    seed: u64,
    settings: &RunSettings,
) -> Result<RunOutput> {
    if settings.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if settings.monitor_stride == 0 {
        return Err(Error::InvalidArgument("monitor stride must be at least 1".into()));
    }
    if !(settings.epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    if (cfg.gamma - env.mdp.gamma()).abs() > 0.0 {
        return Err(Error::InvalidConfig(format!(
            "agent gamma {} differs from environment gamma {}",
            cfg.gamma,
            env.mdp.gamma()
        )));
    }
    let started = Instant::now();
    let m = &env.mdp;
    let v_star = optimal_action_values(m, ORACLE_TOLERANCE)?.state_values();
    let mut monitor = PacMonitor::new(v_star.clone(), settings.epsilon);
    let mut agent = AgentState::new(cfg.clone(), m.num_states(), m.num_actions())?;
    let mut rng = Rng::new(seed);
    let mut conditions = ConditionSummary::default();
    let mut trace = Vec::with_capacity(settings.horizon.min(1 << 20) as usize);
    let mut last_violation: Option<u64> = None;
    let mut violations = 0u64;
    let mut s = env.start;

    for t in 1..=settings.horizon {
        let a = agent.select_action(s);
        let known = compute_known_set(m, agent.q(), &agent.n_sa, cfg);
        let escape = detect_escape(&known, s, a);
        let violation = if (t - 1) % settings.monitor_stride == 0 {
            monitor.violation(m, agent.q(), s)?
        } else {
            false
        };
        if violation {
            violations += 1;
            // everything up to the next checkpoint counts as violating
            last_violation = Some(t + settings.monitor_stride - 1);
        }
        let (r, next) = env_step(m, s, a, &mut rng);
        let out = agent.observe(s, a, r, next)?;
        if out.successful_timestep {
            let known = compute_known_set(m, agent.q(), &agent.n_sa, cfg);
            let report = check_theorem1_conditions(m, agent.q(), &known, &v_star, settings.epsilon)?;
            conditions.record(&report);
        }
        trace.push(StepRecord::from_outcome(s, out, escape, violation));
        s = next;
    }

    let mut audit = invariant_audit(&trace, cfg, m.num_states(), m.num_actions())?;
    audit.conditions = Some(conditions.clone());
    let (convergence_step, converged) = match last_violation {
        None => (0, true),
        Some(lv) if lv < settings.horizon => (lv + 1, true),
        Some(_) => (settings.horizon, false),
    };
    let escape_bound_ok = audit
        .check(diagnostics::CHECK_ESCAPES)
        .is_none_or(|c| c.pass);
    let result = RunResult {
        algorithm: label.to_string(),
        seed,
        config: cfg.clone(),
        epsilon: settings.epsilon,
        horizon: settings.horizon,
        convergence_step,
        converged,
        violation_count: violations,
        type1_updates: audit.type1_updates,
        type2_sweeps: audit.type2_sweeps,
        attempted_updates: audit.total_attempted,
        escape_events: audit.total_escapes,
        wallclock_ms: if settings.timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        },
        fingerprint: m.fingerprint(),
        audit_hard_pass: audit.hard_pass(),
        escape_bound_ok,
        optimism_ok: conditions.optimism_held(),
    };
    Ok(RunOutput {
        result,
        audit,
        trace: settings.keep_trace.then_some(trace),
    })
}

/// Per-algorithm statistics of `convergence_step` over converged runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmStats {
    pub algorithm: String,
    pub runs: usize,
    pub converged_runs: usize,
    pub mean: Option<f64>,
    pub min: Option<u64>,
    pub max: Option<u64>,
    pub stddev: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub seeds: Vec<u64>,
    pub fingerprint: String,
    pub algorithms: Vec<AlgorithmStats>,
    pub warnings: Vec<String>,
}

impl BenchSummary {
    pub fn stats(&self, algorithm: &str) -> Option<&AlgorithmStats> {
        self.algorithms.iter().find(|a| a.algorithm == algorithm)
    }

    pub fn mean(&self, algorithm: &str) -> Option<f64> {
        self.stats(algorithm).and_then(|a| a.mean)
    }
}

/// Aggregates run results. Refuses mixed environments or algorithms that
/// were not run on the same seeds.
pub fn summarize(runs: &[RunResult]) -> Result<BenchSummary> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no runs to summarise".into()))?;
    if let Some(r) = runs.iter().find(|r| r.fingerprint != first.fingerprint) {
        return Err(Error::InvalidArgument(format!(
            "run {} seed {} used a different environment ({} vs {})",
            r.algorithm, r.seed, r.fingerprint, first.fingerprint
        )));
    }
    let mut order: Vec<&str> = Vec::new();
    for r in runs {
        if !order.contains(&r.algorithm.as_str()) {
            order.push(&r.algorithm);
        }
    }
    let seeds_of = |alg: &str| -> BTreeSet<u64> {
        runs.iter().filter(|r| r.algorithm == alg).map(|r| r.seed).collect()
    };
    let seeds = seeds_of(order[0]);
    if let Some(alg) = order.iter().find(|alg| seeds_of(alg) != seeds) {
        return Err(Error::InvalidArgument(format!(
            "algorithm {alg} was run on a different seed set"
        )));
    }

    let mut warnings = Vec::new();
    let algorithms = order
        .iter()
        .map(|&alg| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.algorithm == alg).collect();
            for r in mine.iter().filter(|r| !r.converged) {
                warnings.push(format!(
                    "{alg} seed {} did not converge within {} steps; excluded from the mean",
                    r.seed, r.horizon
                ));
            }
            let steps: Vec<u64> = mine.iter().filter(|r| r.converged).map(|r| r.convergence_step).collect();
            let n = steps.len();
            let mean = (n > 0).then(|| steps.iter().sum::<u64>() as f64 / n as f64);
            let stddev = mean.map(|mu| {
                if n < 2 {
                    0.0
                } else {
                    let ss: f64 = steps.iter().map(|&x| (x as f64 - mu).powi(2)).sum();
                    (ss / (n - 1) as f64).sqrt()
                }
            });
            AlgorithmStats {
                algorithm: alg.to_string(),
                runs: mine.len(),
                converged_runs: n,
                mean,
                min: steps.iter().copied().min(),
                max: steps.iter().copied().max(),
                stddev,
            }
        })
        .collect();
    Ok(BenchSummary {
        seeds: seeds.into_iter().collect(),
        fingerprint: first.fingerprint.clone(),
        algorithms,
        warnings,
    })
}

#[derive(Clone, Debug)]
pub struct BenchOutput {
    /// Algorithm-major, seed-minor, in the order requested.
    pub runs: Vec<RunOutput>,
    pub summary: BenchSummary,
}

impl BenchOutput {
    pub fn results(&self) -> Vec<RunResult> {
        self.runs.iter().map(|r| r.result.clone()).collect()
    }
}

/// Runs every `(algorithm, seed)` pair on up to `workers` threads (1 means
/// sequential). Results do not depend on the worker count.
pub fn run_bench(
    env: &Environment,
    base: &AgentConfig,
    algorithms: &[Algorithm],
    seeds: &[u64],
    settings: &RunSettings,
    workers: usize,
) -> Result<BenchOutput> {
    if seeds.is_empty() || algorithms.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed and one algorithm".into()));
    }
    let jobs: Vec<(Algorithm, u64)> = algorithms
        .iter()
        .flat_map(|&alg| seeds.iter().map(move |&seed| (alg, seed)))
        .collect();
    let outputs = par::map_ordered(&jobs, workers, |&(alg, seed)| {
        let cfg = degenerate_config(alg, base);
        run_single(env, &cfg, alg.label(), seed, settings).map_err(|e| Error::RunFailed {
            algorithm: alg.label().to_string(),
            seed,
            source: Box::new(e),
        })
    });
    let runs = outputs.into_iter().collect::<Result<Vec<_>>>()?;
    let results: Vec<RunResult> = runs.iter().map(|r| r.result.clone()).collect();
    let summary = summarize(&results)?;
    Ok(BenchOutput { runs, summary })
}

/// Worker count used when none is configured.
pub fn default_workers() -> usize {
    par::default_workers()
}

pub const CSV_COLUMNS: [&str; 15] = [
    "run_id",
    "algorithm",
    "seed",
    "m1",
    "m2",
    "epsilon",
    "gamma",
    "horizon",
    "convergence_step",
    "violations",
    "type1_updates",
    "type2_sweeps",
    "attempted_updates",
    "escape_events",
    "wallclock_ms",
];

/// Per-run CSV with the fixed column set; `run_id` is the row index.
pub fn write_runs_csv<W: std::io::Write>(w: W, runs: &[RunResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for (id, r) in runs.iter().enumerate() {
        out.write_record([
            id.to_string(),
            r.algorithm.clone(),
            r.seed.to_string(),
            r.config.m1.to_string(),
            r.config.m2.to_string(),
            r.epsilon.to_string(),
            r.config.gamma.to_string(),
            r.horizon.to_string(),
            r.convergence_step.to_string(),
            r.violation_count.to_string(),
            r.type1_updates.to_string(),
            r.type2_sweeps.to_string(),
            r.attempted_updates.to_string(),
            r.escape_events.to_string(),
            r.wallclock_ms.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Parses `"1..10"` (inclusive), `"3"`, or comma-separated mixes of both.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidArgument(format!("bad seed list {text:?}"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: u64 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if hi < lo {
                return Err(bad());
            }
            seeds.extend(lo..=hi);
        } else {
            seeds.push(part.parse().map_err(|_| bad())?);
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}
