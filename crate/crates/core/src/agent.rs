//! The DDQ agent: optimistic initialisation, delayed batch (type-1) updates,
//! and value-iteration (type-2) updates on the maximum-likelihood model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{self, Mdp, QTable};

/// A sample-count threshold that may be disabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ThresholdRepr", into = "ThresholdRepr")]
pub enum Threshold {
    Finite(u64),
    /// Never reached.
    Infinite,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdRepr {
    Count(u64),
    Word(String),
}

impl TryFrom<ThresholdRepr> for Threshold {
    type Error = Error;

    fn try_from(r: ThresholdRepr) -> Result<Self> {
        match r {
            ThresholdRepr::Count(n) => Ok(Threshold::Finite(n)),
            ThresholdRepr::Word(w) => w.parse(),
        }
    }
}

impl From<Threshold> for ThresholdRepr {
    fn from(t: Threshold) -> Self {
        match t {
            Threshold::Finite(n) => ThresholdRepr::Count(n),
            Threshold::Infinite => ThresholdRepr::Word("infinity".into()),
        }
    }
}

impl Threshold {
    pub fn finite(self) -> Option<u64> {
        match self {
            Threshold::Finite(n) => Some(n),
            Threshold::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == Threshold::Infinite
    }

    /// `count >= threshold`; never true for an infinite threshold.
    pub fn reached_by(self, count: u64) -> bool {
        self.finite().is_some_and(|n| count >= n)
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Finite(n) => write!(f, "{n}"),
            Threshold::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Threshold::Infinite),
            other => other
                .parse::<u64>()
                .map(Threshold::Finite)
                .map_err(|_| Error::InvalidConfig(format!("bad threshold {s:?}"))),
        }
    }
}

/// Tunables of the agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub m1: Threshold,
    pub m2: Threshold,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub gamma: f64,
    pub vi_sweeps: usize,
}

impl AgentConfig {
    /// Config with the default sweep count for `epsilon2`.
    pub fn new(m1: Threshold, m2: Threshold, epsilon1: f64, epsilon2: f64, gamma: f64) -> Result<Self> {
        let vi_sweeps = mdp::sweeps_for_accuracy(epsilon2, gamma)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let cfg = AgentConfig {
            m1,
            m2,
            epsilon1,
            epsilon2,
            gamma,
            vi_sweeps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Derives `epsilon1 = (1 - gamma) epsilon / 3` and `epsilon2 = epsilon1 / 3`
    /// from a target accuracy `epsilon`.
    pub fn from_epsilon(m1: Threshold, m2: Threshold, epsilon: f64, gamma: f64) -> Result<Self> {
        let (e1, e2) = accuracy_chain(epsilon, gamma);
        Self::new(m1, m2, e1, e2, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} not in [0,1)", self.gamma));
        }
        if !(self.epsilon1 > 0.0 && self.epsilon2 > 0.0) {
            return bad("epsilon1 and epsilon2 must be positive".into());
        }
        if !(self.epsilon2 < self.epsilon1 / 2.0) {
            return bad(format!(
                "epsilon2 {} must be below epsilon1 / 2 = {}",
                self.epsilon2,
                self.epsilon1 / 2.0
            ));
        }
        if self.m1 == Threshold::Finite(0) || self.m2 == Threshold::Finite(0) {
            return bad("m1 and m2 must be at least 1".into());
        }
        if self.vi_sweeps == 0 {
            return bad("vi_sweeps must be at least 1".into());
        }
        Ok(())
    }

    pub fn v_max(&self) -> f64 {
        mdp::v_max(self.gamma)
    }
}

/// `(epsilon1, epsilon2)` for a target accuracy `epsilon`.
pub fn accuracy_chain(epsilon: f64, gamma: f64) -> (f64, f64) {
    let e1 = (1.0 - gamma) * epsilon / 3.0;
    (e1, e1 / 3.0)
}

/// DDQ and its two parent algorithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ddq,
    DelayedQ,
    Rmax,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Ddq, Algorithm::DelayedQ, Algorithm::Rmax];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Ddq => "ddq",
            Algorithm::DelayedQ => "delayed_q",
            Algorithm::Rmax => "rmax",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ddq" => Ok(Algorithm::Ddq),
            "delayed_q" | "delayedq" => Ok(Algorithm::DelayedQ),
            "rmax" | "r_max" => Ok(Algorithm::Rmax),
            _ => Err(Error::InvalidArgument(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// Turns a DDQ config into one of its parent algorithms: an infinite `m2`
/// disables planning (Delayed Q-learning), an infinite `m1` disables batch
/// updates (R-max).
pub fn degenerate_config(kind: Algorithm, base: &AgentConfig) -> AgentConfig {
    let mut cfg = base.clone();
    match kind {
        Algorithm::Ddq => {}
        Algorithm::DelayedQ => cfg.m2 = Threshold::Infinite,
        Algorithm::Rmax => cfg.m1 = Threshold::Infinite,
    }
    cfg
}

/// A change to one action value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QChange {
    pub s: usize,
    pub a: usize,
    pub old: f64,
    pub new: f64,
}

/// A learn-flag flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagChange {
    pub s: usize,
    pub a: usize,
    pub old: bool,
    pub new: bool,
}

/// Everything that happened during one call to [`AgentState::observe`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub t: u64,
    pub chosen_action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub type1_attempted: bool,
    pub type1_succeeded: bool,
    pub type2_triggered: bool,
    /// Pairs whose value strictly decreased in the type-2 update.
    pub type2_updated_pairs: Vec<(usize, usize)>,
    pub learn_flag_transitions: Vec<FlagChange>,
    /// Visit count of the pair reached exactly `m2` this step.
    pub reached_m2: bool,
    /// `learn(s,a)` held and either the batch filled or `n(s,a) = m2`.
    pub attempted_update: bool,
    pub successful_timestep: bool,
    /// All value changes, type-1 first, then type-2 in pair order.
    pub q_changes: Vec<QChange>,
}

/// All internal variables of the agent. Per-pair vectors are indexed
/// `s * A + a`; `n_sas` is indexed `(s * A + a) * S + s'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub config: AgentConfig,
    pub num_states: usize,
    pub num_actions: usize,
    #[serde(rename = "Q")]
    pub q: QTable,
    #[serde(rename = "U")]
    pub u: Vec<f64>,
    pub l: Vec<u64>,
    pub b: Vec<u64>,
    pub learn: Vec<bool>,
    pub n_sa: Vec<u64>,
    pub n_sas: Vec<u64>,
    pub r_sum: Vec<f64>,
    pub t_star: u64,
    pub t: u64,
}

impl AgentState {
    pub fn new(config: AgentConfig, num_states: usize, num_actions: usize) -> Result<Self> {
        config.validate()?;
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidArgument("agent needs at least one state and action".into()));
        }
        let pairs = num_states * num_actions;
        Ok(AgentState {
            q: QTable::filled(num_states, num_actions, config.v_max()),
            u: vec![0.0; pairs],
            l: vec![0; pairs],
            b: vec![0; pairs],
            learn: vec![true; pairs],
            n_sa: vec![0; pairs],
            n_sas: vec![0; pairs * num_states],
            r_sum: vec![0.0; pairs],
            t_star: 0,
            t: 0,
            config,
            num_states,
            num_actions,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Restores a snapshot, checking that every table has the right size.
    pub fn from_json(text: &str) -> Result<Self> {
        let st: AgentState = serde_json::from_str(text)?;
        st.config.validate()?;
        let pairs = st.num_states * st.num_actions;
        let sizes_ok = st.q.num_states() == st.num_states
            && st.q.num_actions() == st.num_actions
            && [st.u.len(), st.l.len(), st.b.len(), st.learn.len(), st.n_sa.len(), st.r_sum.len()]
                .iter()
                .all(|&n| n == pairs)
            && st.n_sas.len() == pairs * st.num_states;
        if !sizes_ok {
            return Err(Error::InvalidArgument("agent snapshot tables have inconsistent sizes".into()));
        }
        Ok(st)
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    fn idx(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    /// Greedy action at `s`, lowest index on ties.
    pub fn select_action(&self, s: usize) -> usize {
        self.q.greedy_action(s)
    }

    /// Processes one experience `(s, a, r, s')` and advances time by one.
    pub fn observe(&mut self, s: usize, a: usize, r: f64, s_next: usize) -> Result<StepOutcome> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidArgument(format!("reward {r} not in [0, 1]")));
        }
        if s >= self.num_states || s_next >= self.num_states || a >= self.num_actions {
            return Err(Error::InvalidArgument(format!(
                "transition ({s}, {a}, {s_next}) out of range"
            )));
        }
        let cfg = &self.config;
        let (m1, m2, gamma, eps1) = (cfg.m1, cfg.m2, cfg.gamma, cfg.epsilon1);
        self.t += 1;
        let t = self.t;
        let i = self.idx(s, a);
        let mut out = StepOutcome {
            t,
            chosen_action: a,
            reward: r,
            next_state: s_next,
            ..StepOutcome::default()
        };

        self.n_sa[i] += 1;
        self.n_sas[i * self.num_states + s_next] += 1;
        self.r_sum[i] += r;
        out.reached_m2 = m2.finite() == Some(self.n_sa[i]);

        if let Some(batch) = m1.finite() {
            if self.b[i] <= self.t_star && !self.learn[i] {
                self.learn[i] = true;
                out.learn_flag_transitions.push(FlagChange { s, a, old: false, new: true });
            }
            out.attempted_update = self.learn[i] && out.reached_m2;
            if self.learn[i] {
                if self.l[i] == 0 {
                    self.b[i] = t;
                }
                self.l[i] += 1;
                self.u[i] += r + gamma * self.q.state_value(s_next);
                if self.l[i] == batch {
                    out.type1_attempted = true;
                    out.attempted_update = true;
                    let old = self.q.get(s, a);
                    let target = self.u[i] / batch as f64;
                    if old - target >= 2.0 * eps1 {
                        let new = target + eps1;
                        self.q.set(s, a, new);
                        self.t_star = t;
                        out.type1_succeeded = true;
                        out.q_changes.push(QChange { s, a, old, new });
                    } else if self.b[i] > self.t_star {
                        self.learn[i] = false;
                        out.learn_flag_transitions.push(FlagChange { s, a, old: true, new: false });
                    }
                    self.u[i] = 0.0;
                    self.l[i] = 0;
                }
            }
        } else {
            out.attempted_update = self.learn[i] && out.reached_m2;
        }

        if !m2.is_infinite() && (out.reached_m2 || t == self.t_star) {
            self.t_star = t;
            out.type2_triggered = true;
            self.plan(&mut out)?;
        }

        out.successful_timestep = out.type1_succeeded || out.reached_m2;
        Ok(out)
    }

    /// Type-2 update: restricted value iteration on the maximum-likelihood
    /// model over pairs with `n(s,a) >= m2`, accepted per pair when it does
    /// not raise the value.
    fn plan(&mut self, out: &mut StepOutcome) -> Result<()> {
        let mask: Vec<bool> = self.n_sa.iter().map(|&n| self.config.m2.reached_by(n)).collect();
        if !mask.iter().any(|&k| k) {
            return Ok(());
        }
        let model = self.empirical_model(&mask);
        let q_vl = mdp::value_iteration(&model, &self.q, self.config.vi_sweeps, Some(&mask))?;
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let (old, new) = (self.q.get(s, a), q_vl.get(s, a));
                if new <= old {
                    self.q.set(s, a, new);
                    if new < old {
                        out.type2_updated_pairs.push((s, a));
                        out.q_changes.push(QChange { s, a, old, new });
                    }
                }
            }
        }
        Ok(())
    }

    /// `r(s,a)/n(s,a)` and `n(s,a,s')/n(s,a)` for masked pairs; other rows
    /// are zero and never read by a restricted sweep.
    fn empirical_model(&self, mask: &[bool]) -> Mdp {
        let ns = self.num_states;
        let pairs = ns * self.num_actions;
        let mut rewards = vec![0.0; pairs];
        let mut transitions = vec![0.0; pairs * ns];
        for i in (0..pairs).filter(|&i| mask[i]) {
            let n = self.n_sa[i] as f64;
            rewards[i] = self.r_sum[i] / n;
            for next in 0..ns {
                transitions[i * ns + next] = self.n_sas[i * ns + next] as f64 / n;
            }
        }
        Mdp::from_flat(ns, self.num_actions, self.config.gamma, rewards, transitions)
    }
}
