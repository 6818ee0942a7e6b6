//! Oracle-side instrumentation: known sets, escape events, the
//! epsilon-optimality monitor, PAC condition checks, and trace audits.
//!
//! Everything here reads the true MDP, which the agent never sees.

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, FlagChange, QChange, StepOutcome};
use crate::error::{Error, Result};
use crate::known::build_known_mdp;
pub use crate::known::KnownSet;
use crate::mdp::{policy_state_values, Mdp, Policy, QTable};

/// Known pairs at the current time: `Q(s,a) - (R + gamma T v) <= 3 eps1`
/// (`k1`) or `n(s,a) >= m2` (`k2`).
pub fn compute_known_set(m: &Mdp, q: &QTable, visit_counts: &[u64], cfg: &AgentConfig) -> KnownSet {
    let na = m.num_actions();
    let v = q.state_values();
    let limit = 3.0 * cfg.epsilon1;
    let mut k1 = Vec::with_capacity(m.num_pairs());
    let mut k2 = Vec::with_capacity(m.num_pairs());
    for s in 0..m.num_states() {
        for a in 0..na {
            k1.push(q.get(s, a) - m.backup(s, a, &v) <= limit);
            k2.push(cfg.m2.reached_by(visit_counts[s * na + a]));
        }
    }
    KnownSet::new(na, k1, k2)
}

/// Experiencing a pair outside the known set.
pub fn detect_escape(known: &KnownSet, s: usize, a: usize) -> bool {
    !known.contains(s, a)
}

/// True iff the greedy policy of `q` is more than `4 epsilon` worse than
/// optimal at `s`.
pub fn pac_monitor_step(m: &Mdp, q: &QTable, s: usize, epsilon: f64, v_star: &[f64]) -> Result<bool> {
    let v = policy_state_values(m, &q.greedy_policy())?;
    Ok(v[s] < v_star[s] - 4.0 * epsilon)
}

/// Per-step monitor that re-evaluates the greedy policy only when it changes.
#[derive(Clone, Debug)]
pub struct PacMonitor {
    epsilon: f64,
    v_star: Vec<f64>,
    cached: Option<(Policy, Vec<f64>)>,
}

impl PacMonitor {
    pub fn new(v_star: Vec<f64>, epsilon: f64) -> Self {
        PacMonitor {
            epsilon,
            v_star,
            cached: None,
        }
    }

    pub fn v_star(&self) -> &[f64] {
        &self.v_star
    }

    pub fn violation(&mut self, m: &Mdp, q: &QTable, s: usize) -> Result<bool> {
        let policy = q.greedy_policy();
        let stale = self.cached.as_ref().is_none_or(|(p, _)| *p != policy);
        if stale {
            let values = policy_state_values(m, &policy)?;
            self.cached = Some((policy, values));
        }
        let values = &self.cached.as_ref().expect("filled above").1;
        Ok(values[s] < self.v_star[s] - 4.0 * self.epsilon)
    }
}

/// Margins of the optimism and accuracy conditions; a non-negative margin
/// passes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    /// `min_s (v_t(s) - v*(s) + eps)`.
    pub optimism_margin: f64,
    pub optimism_ok: bool,
    /// `min_s (eps - (v_t(s) - v^{pi_t}_{M_K}(s)))`.
    pub accuracy_margin: f64,
    pub accuracy_ok: bool,
}

pub fn check_theorem1_conditions(
    m: &Mdp,
    q: &QTable,
    known: &KnownSet,
    v_star: &[f64],
    epsilon: f64,
) -> Result<Theorem1Report> {
    let ns = m.num_states();
    let v_t = q.state_values();
    let optimism_margin = (0..ns)
        .map(|s| v_t[s] - v_star[s] + epsilon)
        .fold(f64::INFINITY, f64::min);

    let km = build_known_mdp(m, known, q)?;
    let mut actions = q.greedy_policy().actions;
    actions.resize(km.mdp.num_states(), 0);
    let v_known = policy_state_values(&km.mdp, &Policy::new(actions))?;
    let accuracy_margin = (0..ns)
        .map(|s| epsilon - (v_t[s] - v_known[s]))
        .fold(f64::INFINITY, f64::min);

    Ok(Theorem1Report {
        optimism_margin,
        optimism_ok: optimism_margin >= 0.0,
        accuracy_margin,
        accuracy_ok: accuracy_margin >= 0.0,
    })
}

/// One timestep of a run, as written to trace files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub escape: bool,
    pub successful: bool,
    pub type1_attempted: bool,
    pub type1_succeeded: bool,
    pub type2_triggered: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub type2_updated_pairs: Vec<(usize, usize)>,
    pub reached_m2: bool,
    pub attempted_update: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q_changes: Vec<QChange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub learn_flag_transitions: Vec<FlagChange>,
    pub violation: bool,
}

impl StepRecord {
    pub fn from_outcome(s: usize, out: StepOutcome, escape: bool, violation: bool) -> Self {
        StepRecord {
            t: out.t,
            s,
            a: out.chosen_action,
            r: out.reward,
            s_next: out.next_state,
            escape,
            successful: out.successful_timestep,
            type1_attempted: out.type1_attempted,
            type1_succeeded: out.type1_succeeded,
            type2_triggered: out.type2_triggered,
            type2_updated_pairs: out.type2_updated_pairs,
            reached_m2: out.reached_m2,
            attempted_update: out.attempted_update,
            q_changes: out.q_changes,
            learn_flag_transitions: out.learn_flag_transitions,
            violation,
        }
    }
}

/// Writes one JSON object per line.
pub fn write_trace<W: std::io::Write>(mut w: W, trace: &[StepRecord]) -> Result<()> {
    for rec in trace {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(text: &str) -> Result<Vec<StepRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::MalformedTrace(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// One observed quantity against its bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub observed: f64,
    /// `None` when the bound is disabled by an infinite threshold.
    pub bound: Option<f64>,
    pub pass: bool,
    /// Hard checks follow from the update arithmetic and must never fail.
    pub hard: bool,
}

impl BoundCheck {
    fn at_most(name: &str, observed: f64, bound: Option<f64>, hard: bool) -> Self {
        BoundCheck {
            name: name.to_string(),
            observed,
            bound,
            pass: bound.is_none_or(|b| observed <= b),
            hard,
        }
    }
}

/// Optimism/accuracy results gathered over a run's checkpoints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub checkpoints: u64,
    pub optimism_failures: u64,
    pub worst_optimism_margin: Option<f64>,
    pub accuracy_failures: u64,
    pub worst_accuracy_margin: Option<f64>,
}

impl ConditionSummary {
    pub fn record(&mut self, r: &Theorem1Report) {
        self.checkpoints += 1;
        self.optimism_failures += (!r.optimism_ok) as u64;
        self.accuracy_failures += (!r.accuracy_ok) as u64;
        let min = |cur: Option<f64>, x: f64| Some(cur.map_or(x, |c: f64| c.min(x)));
        self.worst_optimism_margin = min(self.worst_optimism_margin, r.optimism_margin);
        self.worst_accuracy_margin = min(self.worst_accuracy_margin, r.accuracy_margin);
    }

    pub fn optimism_held(&self) -> bool {
        self.optimism_failures == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub steps: u64,
    /// Successful timesteps per pair, indexed `s * A + a`.
    pub per_pair_successful: Vec<u64>,
    pub total_successful: u64,
    pub total_attempted: u64,
    pub total_escapes: u64,
    pub type1_updates: u64,
    pub type2_sweeps: u64,
    pub kappa: f64,
    /// Simplified sample-complexity bound for reference; never asserted.
    pub reference_sample_bound: Option<f64>,
    pub checks: Vec<BoundCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionSummary>,
}

impl AuditReport {
    /// Every hard check passed.
    pub fn hard_pass(&self) -> bool {
        self.checks.iter().filter(|c| c.hard).all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn hard_failures(&self) -> Vec<&BoundCheck> {
        self.checks.iter().filter(|c| c.hard && !c.pass).collect()
    }
}

/// `kappa = |S||A| (1 + 1 / ((1 - gamma) eps1))`.
pub fn kappa(num_states: usize, num_actions: usize, gamma: f64, epsilon1: f64) -> f64 {
    (num_states * num_actions) as f64 * (1.0 + 1.0 / ((1.0 - gamma) * epsilon1))
}

/// `min(2 m1 kappa, |S||A| m2)`, dropping whichever term is disabled.
pub fn escape_bound(cfg: &AgentConfig, num_states: usize, num_actions: usize) -> Option<f64> {
    let k = kappa(num_states, num_actions, cfg.gamma, cfg.epsilon1);
    let by_m1 = cfg.m1.finite().map(|m1| 2.0 * m1 as f64 * k);
    let by_m2 = cfg.m2.finite().map(|m2| (num_states * num_actions) as f64 * m2 as f64);
    match (by_m1, by_m2) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    }
}

pub const CHECK_PER_PAIR: &str = "successful_per_pair";
pub const CHECK_TOTAL_SUCCESSFUL: &str = "successful_total";
pub const CHECK_ATTEMPTED: &str = "attempted_updates";
pub const CHECK_ESCAPES: &str = "escape_events";
pub const CHECK_MONOTONE: &str = "q_monotone";
pub const CHECK_RANGE: &str = "q_range";

/// Compares every count in `trace` to its bound and re-verifies that
/// values only ever decrease and stay in `[0, v_max]`.
pub fn invariant_audit(
    trace: &[StepRecord],
    cfg: &AgentConfig,
    num_states: usize,
    num_actions: usize,
) -> Result<AuditReport> {
    let pairs = num_states * num_actions;
    let vmax = cfg.v_max();
    let mut q = vec![vmax; pairs];
    let mut per_pair = vec![0u64; pairs];
    let (mut successful, mut attempted, mut escapes, mut t1, mut t2) = (0u64, 0u64, 0u64, 0u64, 0u64);
    let mut increases = 0u64;
    let mut out_of_range = 0u64;
    let mut inconsistent = 0u64;

    for (i, rec) in trace.iter().enumerate() {
        if rec.t != i as u64 + 1 {
            return Err(Error::MalformedTrace(format!(
                "record {} has t = {}, expected {}",
                i + 1,
                rec.t,
                i + 1
            )));
        }
        if rec.s >= num_states || rec.a >= num_actions || rec.s_next >= num_states {
            return Err(Error::MalformedTrace(format!("t = {}: pair out of range", rec.t)));
        }
        let pair = rec.s * num_actions + rec.a;
        if rec.type1_succeeded || rec.reached_m2 {
            per_pair[pair] += 1;
        }
        successful += rec.successful as u64;
        attempted += rec.attempted_update as u64;
        escapes += rec.escape as u64;
        t1 += rec.type1_succeeded as u64;
        t2 += rec.type2_triggered as u64;
        for c in &rec.q_changes {
            if c.s >= num_states || c.a >= num_actions {
                return Err(Error::MalformedTrace(format!("t = {}: change out of range", rec.t)));
            }
            let j = c.s * num_actions + c.a;
            if c.old != q[j] {
                inconsistent += 1;
            }
            if c.new > c.old {
                increases += 1;
            }
            if !(0.0..=vmax).contains(&c.new) {
                out_of_range += 1;
            }
            q[j] = c.new;
        }
    }

    let k = kappa(num_states, num_actions, cfg.gamma, cfg.epsilon1);
    let per_pair_bound = 1.0 + 1.0 / ((1.0 - cfg.gamma) * cfg.epsilon1);
    let worst_pair = per_pair.iter().copied().max().unwrap_or(0);
    let escape_limit = escape_bound(cfg, num_states, num_actions);
    let checks = vec![
        BoundCheck::at_most(CHECK_PER_PAIR, worst_pair as f64, Some(per_pair_bound), true),
        BoundCheck::at_most(CHECK_TOTAL_SUCCESSFUL, successful as f64, Some(k), true),
        BoundCheck::at_most(CHECK_ATTEMPTED, attempted as f64, Some(pairs as f64 * (1.0 + k)), true),
        BoundCheck::at_most(CHECK_ESCAPES, escapes as f64, escape_limit, false),
        BoundCheck::at_most(CHECK_MONOTONE, (increases + inconsistent) as f64, Some(0.0), true),
        BoundCheck::at_most(CHECK_RANGE, out_of_range as f64, Some(0.0), true),
    ];

    let epsilon = 3.0 * cfg.epsilon1 / (1.0 - cfg.gamma);
    let reference_sample_bound = escape_limit
        .map(|e| (k + e) / (epsilon * (1.0 - cfg.gamma).powi(2)));

    Ok(AuditReport {
        steps: trace.len() as u64,
        per_pair_successful: per_pair,
        total_successful: successful,
        total_attempted: attempted,
        total_escapes: escapes,
        type1_updates: t1,
        type2_sweeps: t2,
        kappa: k,
        reference_sample_bound,
        checks,
        conditions: None,
    })
}

/// Independent recount of escape events: rebuilds `Q_t` and `n_t` from the
/// trace and evaluates the known set against the true model before every
/// step.
pub fn replay_escapes(trace: &[StepRecord], m: &Mdp, cfg: &AgentConfig) -> Result<u64> {
    let na = m.num_actions();
    let mut q = QTable::filled(m.num_states(), na, cfg.v_max());
    let mut n = vec![0u64; m.num_pairs()];
    let mut escapes = 0;
    for rec in trace {
        if rec.s >= m.num_states() || rec.a >= na {
            return Err(Error::MalformedTrace(format!("t = {}: pair out of range", rec.t)));
        }
        let known = compute_known_set(m, &q, &n, cfg);
        escapes += detect_escape(&known, rec.s, rec.a) as u64;
        n[rec.s * na + rec.a] += 1;
        for c in &rec.q_changes {
            q.set(c.s, c.a, c.new);
        }
    }
    Ok(escapes)
}
