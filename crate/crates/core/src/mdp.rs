//! Finite MDPs, action-value tables, and exact planning.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Row-sum tolerance for transition rows.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// Residual target for exact policy evaluation.
pub const POLICY_EVAL_TOLERANCE: f64 = 1e-10;

/// A finite discounted MDP `{S, A, R, T, gamma}` with dense storage.
///
/// Rewards are indexed `s * A + a`, transitions `(s * A + a) * S + s'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
}

/// JSON interchange layout.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpFile {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    rewards: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<MdpFile> for Mdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        Mdp::new(f.num_states, f.num_actions, f.gamma, f.rewards, f.transitions)
    }
}

impl From<Mdp> for MdpFile {
    fn from(m: Mdp) -> Self {
        let rewards = (0..m.num_states)
            .map(|s| (0..m.num_actions).map(|a| m.reward(s, a)).collect())
            .collect();
        let transitions = (0..m.num_states)
            .map(|s| {
                (0..m.num_actions)
                    .map(|a| m.transition_row(s, a).to_vec())
                    .collect()
            })
            .collect();
        MdpFile {
            num_states: m.num_states,
            num_actions: m.num_actions,
            gamma: m.gamma,
            rewards,
            transitions,
        }
    }
}

/// One violated MDP invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum MdpIssue {
    Empty,
    Shape(String),
    Gamma(f64),
    Reward { state: usize, action: usize, value: f64 },
    Probability { state: usize, action: usize, next: usize, value: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
}

impl fmt::Display for MdpIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdpIssue::Empty => write!(f, "MDP must have at least one state and one action"),
            MdpIssue::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            MdpIssue::Gamma(g) => write!(f, "gamma {g} not in [0, 1)"),
            MdpIssue::Reward { state, action, value } => {
                write!(f, "reward R({state},{action}) = {value} not in [0, 1]")
            }
            MdpIssue::Probability { state, action, next, value } => {
                write!(f, "T({state},{action},{next}) = {value} not in [0, 1]")
            }
            MdpIssue::RowSum { state, action, sum } => {
                write!(f, "row T({state},{action},.) sums to {sum}, expected 1")
            }
        }
    }
}

/// Every invariant violation found in an [`Mdp`]; empty iff well-formed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<MdpIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

impl Mdp {
    /// Builds and validates an MDP from nested `rewards[s][a]` and
    /// `transitions[s][a][s']`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        rewards: Vec<Vec<f64>>,
        transitions: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if rewards.len() != num_states
            || rewards.iter().any(|row| row.len() != num_actions)
        {
            return Err(Error::InvalidMdp(format!(
                "rewards must be {num_states} x {num_actions}"
            )));
        }
        if transitions.len() != num_states
            || transitions.iter().any(|per_a| {
                per_a.len() != num_actions || per_a.iter().any(|row| row.len() != num_states)
            })
        {
            return Err(Error::InvalidMdp(format!(
                "transitions must be {num_states} x {num_actions} x {num_states}"
            )));
        }
        let m = Self::from_flat(
            num_states,
            num_actions,
            gamma,
            rewards.into_iter().flatten().collect(),
            transitions.into_iter().flatten().flatten().collect(),
        );
        let report = validate_mdp(&m);
        if report.is_valid() {
            Ok(m)
        } else {
            Err(Error::InvalidMdp(report.to_string()))
        }
    }

    /// Wraps flat storage without validation. Use [`validate_mdp`] to check.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Self {
        Mdp {
            num_states,
            num_actions,
            gamma,
            rewards,
            transitions,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Upper bound on any state value, `1 / (1 - gamma)`.
    pub fn v_max(&self) -> f64 {
        v_max(self.gamma)
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.num_actions + a) * self.num_states + next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    /// One-step lookahead `R(s,a) + gamma * sum_s' T(s,a,s') v(s')`.
    pub fn backup(&self, s: usize, a: usize, values: &[f64]) -> f64 {
        let expected: f64 = self
            .transition_row(s, a)
            .iter()
            .zip(values)
            .map(|(p, v)| p * v)
            .sum();
        self.reward(s, a) + self.gamma * expected
    }

    /// Max-norm Bellman optimality residual of `q`.
    pub fn bellman_residual(&self, q: &QTable) -> f64 {
        let v = q.state_values();
        let mut worst = 0.0f64;
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                worst = worst.max((q.get(s, a) - self.backup(s, a, &v)).abs());
            }
        }
        worst
    }

    /// SHA-256 over the exact bit patterns of the model, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_states as u64).to_le_bytes());
        h.update((self.num_actions as u64).to_le_bytes());
        h.update(self.gamma.to_bits().to_le_bytes());
        for x in self.rewards.iter().chain(&self.transitions) {
            h.update(x.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub fn v_max(gamma: f64) -> f64 {
    1.0 / (1.0 - gamma)
}

/// Reports every violated invariant of `m`.
pub fn validate_mdp(m: &Mdp) -> ValidationReport {
    let mut issues = Vec::new();
    if m.num_states == 0 || m.num_actions == 0 {
        issues.push(MdpIssue::Empty);
    }
    if !(0.0..1.0).contains(&m.gamma) {
        issues.push(MdpIssue::Gamma(m.gamma));
    }
    let pairs = m.num_states * m.num_actions;
    if m.rewards.len() != pairs {
        issues.push(MdpIssue::Shape(format!(
            "{} rewards for {pairs} pairs",
            m.rewards.len()
        )));
    }
    if m.transitions.len() != pairs * m.num_states {
        issues.push(MdpIssue::Shape(format!(
            "{} transition entries for {} expected",
            m.transitions.len(),
            pairs * m.num_states
        )));
    }
    if !issues.iter().all(|i| matches!(i, MdpIssue::Gamma(_))) {
        return ValidationReport { issues };
    }
    for s in 0..m.num_states {
        for a in 0..m.num_actions {
            let r = m.reward(s, a);
            if !(0.0..=1.0).contains(&r) {
                issues.push(MdpIssue::Reward { state: s, action: a, value: r });
            }
            let row = m.transition_row(s, a);
            for (next, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    issues.push(MdpIssue::Probability { state: s, action: a, next, value: p });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= STOCHASTIC_TOLERANCE) {
                issues.push(MdpIssue::RowSum { state: s, action: a, sum });
            }
        }
    }
    ValidationReport { issues }
}

/// Action values `Q(s,a)`, dense over `s * A + a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct QTable {
    num_actions: usize,
    values: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for QTable {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_actions == 0 || rows.iter().any(|r| r.len() != num_actions) {
            return Err(Error::InvalidArgument(
                "Q table rows must be non-empty and of equal length".into(),
            ));
        }
        Ok(QTable {
            num_actions,
            values: rows.into_iter().flatten().collect(),
        })
    }
}

impl From<QTable> for Vec<Vec<f64>> {
    fn from(q: QTable) -> Self {
        q.values.chunks(q.num_actions).map(<[f64]>::to_vec).collect()
    }
}

impl QTable {
    pub fn filled(num_states: usize, num_actions: usize, value: f64) -> Self {
        QTable {
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    /// Builds a table from nested rows `q[s][a]`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::try_from(rows)
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.num_actions + a] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        let start = s * self.num_actions;
        &self.values[start..start + self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// `v(s) = max_a Q(s,a)`.
    pub fn state_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn state_values(&self) -> Vec<f64> {
        (0..self.num_states()).map(|s| self.state_value(s)).collect()
    }

    /// Arg-max over actions at `s`; ties go to the lowest action index.
    pub fn greedy_action(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn greedy_policy(&self) -> Policy {
        Policy::new((0..self.num_states()).map(|s| self.greedy_action(s)).collect())
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

/// Deterministic stationary policy.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Policy { actions }
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }
}

/// Number of synchronous sweeps that brings value iteration within
/// `accuracy` of `Q*` from any start in `[0, v_max]`:
/// `ceil(ln(1 / (accuracy (1 - gamma))) / (1 - gamma))`, at least 1.
pub fn sweeps_for_accuracy(accuracy: f64, gamma: f64) -> Result<usize> {
    if !(accuracy > 0.0) || !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "sweep count needs accuracy > 0 and gamma in [0,1), got {accuracy}, {gamma}"
        )));
    }
    let raw = (1.0 / (accuracy * (1.0 - gamma))).ln() / (1.0 - gamma);
    Ok((raw.ceil() as usize).max(1))
}

/// Runs exactly `iterations` synchronous Bellman sweeps from `q0`.
///
/// With `restrict`, a mask over `s * A + a`, only marked pairs are backed up;
/// the others keep their `q0` values as fixed boundary values.
pub fn value_iteration(
    m: &Mdp,
    q0: &QTable,
    iterations: usize,
    restrict: Option<&[bool]>,
) -> Result<QTable> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("value iteration needs at least one sweep".into()));
    }
    if q0.num_states() != m.num_states() || q0.num_actions() != m.num_actions() {
        return Err(Error::InvalidArgument("Q table shape does not match the MDP".into()));
    }
    if let Some(mask) = restrict {
        if mask.len() != m.num_pairs() {
            return Err(Error::InvalidArgument("restriction mask has the wrong length".into()));
        }
    }
    let na = m.num_actions();
    let mut q = q0.clone();
    let mut v = q.state_values();
    for _ in 0..iterations {
        let mut next = q.clone();
        for s in 0..m.num_states() {
            for a in 0..na {
                if restrict.is_none_or(|mask| mask[s * na + a]) {
                    next.set(s, a, m.backup(s, a, &v));
                }
            }
        }
        q = next;
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q.state_value(s);
        }
    }
    Ok(q)
}

/// Solves for `Q*` by value iteration from zero until the Bellman residual
/// drops to `tolerance * (1 - gamma)`, so the result is within `tolerance`
/// of the fixed point.
pub fn optimal_action_values(m: &Mdp, tolerance: f64) -> Result<QTable> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let target = tolerance * (1.0 - m.gamma());
    let mut q = QTable::zeros(m.num_states(), m.num_actions());
    loop {
        let v = q.state_values();
        let mut residual = 0.0f64;
        let mut next = q.clone();
        for s in 0..m.num_states() {
            for a in 0..m.num_actions() {
                let backed = m.backup(s, a, &v);
                residual = residual.max((backed - q.get(s, a)).abs());
                next.set(s, a, backed);
            }
        }
        if residual <= target {
            // `q` itself meets the residual bound; `next` is one contraction closer.
            return Ok(next);
        }
        q = next;
    }
}

/// Exact `v^pi` from the linear system `(I - gamma T_pi) v = R_pi`.
pub fn policy_state_values(m: &Mdp, p: &Policy) -> Result<Vec<f64>> {
    let n = m.num_states();
    if p.actions.len() != n || p.actions.iter().any(|&a| a >= m.num_actions()) {
        return Err(Error::InvalidArgument("policy does not match the MDP".into()));
    }
    let gamma = m.gamma();
    let mut lhs = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..n {
        let a = p.action(s);
        rhs[s] = m.reward(s, a);
        for (next, &prob) in m.transition_row(s, a).iter().enumerate() {
            lhs[(s, next)] -= gamma * prob;
        }
    }
    let mut v: Vec<f64> = match lhs.lu().solve(&rhs) {
        Some(sol) => sol.iter().copied().collect(),
        None => vec![0.0; n],
    };
    // Fixed-point polish; the system is a gamma-contraction.
    for _ in 0..10_000 {
        let next: Vec<f64> = (0..n).map(|s| m.backup(s, p.action(s), &v)).collect();
        let residual = next
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual <= POLICY_EVAL_TOLERANCE {
            break;
        }
    }
    let vmax = m.v_max();
    Ok(v.into_iter().map(|x| x.clamp(0.0, vmax)).collect())
}

/// Draws a well-formed MDP with uniform rewards and Dirichlet-like rows.
pub fn random_mdp<R: rand::Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    gamma: f64,
) -> Mdp {
    let pairs = num_states * num_actions;
    let rewards: Vec<f64> = (0..pairs).map(|_| rng.gen::<f64>()).collect();
    let mut transitions = Vec::with_capacity(pairs * num_states);
    for _ in 0..pairs {
        let raw: Vec<f64> = (0..num_states).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        transitions.extend(raw.iter().map(|x| x / total));
    }
    Mdp::from_flat(num_states, num_actions, gamma, rewards, transitions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state(reward: f64, prob: f64, gamma: f64) -> Mdp {
        Mdp::from_flat(1, 1, gamma, vec![reward], vec![prob])
    }

    /// s0 --a--> s1 (self-loop), R(s0)=0, R(s1)=1.
    fn chain() -> Mdp {
        Mdp::new(
            2,
            1,
            0.8,
            vec![vec![0.0], vec![1.0]],
            vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]],
        )
        .unwrap()
    }

    #[test]
    fn validate_accepts_degenerate_mdp() {
        assert!(validate_mdp(&one_state(0.5, 1.0, 0.8)).is_valid());
    }

    #[test]
    fn validate_flags_row_sum() {
        let report = validate_mdp(&one_state(0.5, 0.9, 0.8));
        assert_eq!(report.issues.len(), 1);
        assert!(matches!(report.issues[0], MdpIssue::RowSum { sum, .. } if (sum - 0.9).abs() < 1e-12));
    }

    #[test]
    fn validate_flags_gamma_one() {
        let report = validate_mdp(&one_state(0.5, 1.0, 1.0));
        assert_eq!(report.issues, vec![MdpIssue::Gamma(1.0)]);
    }

    #[test]
    fn validate_reports_every_issue() {
        let m = Mdp::from_flat(1, 2, 0.5, vec![1.5, -0.1], vec![1.2, 1.0]);
        let report = validate_mdp(&m);
        // two rewards, one probability, one row sum
        assert_eq!(report.issues.len(), 4);
    }

    #[test]
    fn value_iteration_geometric_series() {
        let m = one_state(1.0, 1.0, 0.8);
        let q = value_iteration(&m, &QTable::zeros(1, 1), 200, None).unwrap();
        assert!((q.get(0, 0) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn value_iteration_rejects_zero_sweeps() {
        let m = one_state(1.0, 1.0, 0.8);
        assert!(value_iteration(&m, &QTable::zeros(1, 1), 0, None).is_err());
    }

    #[test]
    fn sweep_count_for_benchmark_accuracy() {
        assert_eq!(sweeps_for_accuracy(0.004 / 3.0, 0.8).unwrap(), 42);
    }

    #[test]
    fn chain_values() {
        let m = chain();
        let q = value_iteration(&m, &QTable::zeros(2, 1), 400, None).unwrap();
        assert!((q.get(0, 0) - 4.0).abs() < 1e-9);
        assert!((q.get(1, 0) - 5.0).abs() < 1e-9);
        let v = policy_state_values(&m, &Policy::new(vec![0, 0])).unwrap();
        assert!((v[0] - 4.0).abs() < 1e-10);
        assert!((v[1] - 5.0).abs() < 1e-10);
    }

    #[test]
    fn restricted_sweeps_keep_boundary_values() {
        let m = chain();
        let q0 = QTable::from_rows(vec![vec![2.0], vec![3.0]]).unwrap();
        // only s0 is backed up; s1 stays at 3
        let q = value_iteration(&m, &q0, 5, Some(&[true, false])).unwrap();
        assert_eq!(q.get(1, 0), 3.0);
        assert!((q.get(0, 0) - 0.8 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn optimal_values_trivial() {
        let q = optimal_action_values(&one_state(1.0, 1.0, 0.8), 1e-12).unwrap();
        assert!((q.get(0, 0) - 5.0).abs() < 1e-10);
        let q = optimal_action_values(&one_state(0.0, 1.0, 0.8), 1e-12).unwrap();
        assert_eq!(q.get(0, 0), 0.0);
    }

    #[test]
    fn optimal_values_reject_bad_tolerance() {
        assert!(optimal_action_values(&one_state(1.0, 1.0, 0.8), 0.0).is_err());
    }

    #[test]
    fn greedy_ties_take_lowest_index() {
        let q = QTable::from_rows(vec![vec![1.0, 3.0, 2.0, 3.0]]).unwrap();
        assert_eq!(q.greedy_action(0), 1);
        assert_eq!(QTable::filled(1, 4, 5.0).greedy_action(0), 0);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = chain();
        let text = m.to_json().unwrap();
        assert_eq!(Mdp::from_json(&text).unwrap(), m);
        let bad = r#"{"num_states":1,"num_actions":1,"gamma":0.8,"rewards":[[0.5]],"transitions":[[[0.9]]]}"#;
        assert!(matches!(Mdp::from_json(bad), Err(Error::Json(_))));
        let extra = r#"{"num_states":1,"num_actions":1,"gamma":0.8,"rewards":[[0.5]],"transitions":[[[1.0]]],"x":1}"#;
        assert!(Mdp::from_json(extra).is_err());
    }

    #[test]
    fn fingerprint_is_content_hash() {
        assert_eq!(chain().fingerprint(), chain().fingerprint());
        assert_ne!(chain().fingerprint(), one_state(1.0, 1.0, 0.8).fingerprint());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn optimal_dominates_every_policy(seed in any::<u64>(), ns in 1usize..5, na in 1usize..4, policy_seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = random_mdp(&mut rng, ns, na, 0.85);
                prop_assert!(validate_mdp(&m).is_valid());
                let q = optimal_action_values(&m, 1e-11).unwrap();
                prop_assert!(m.bellman_residual(&q) <= 1e-11);
                let mut prng = ChaCha8Rng::seed_from_u64(policy_seed);
                let p = Policy::new((0..ns).map(|_| prng.gen_range(0..na)).collect());
                let v = policy_state_values(&m, &p).unwrap();
                for (s, &vs) in v.iter().enumerate() {
                    prop_assert!(vs <= q.state_value(s) + 1e-9);
                    prop_assert!(vs >= 0.0 && vs <= m.v_max());
                }
                let greedy = policy_state_values(&m, &q.greedy_policy()).unwrap();
                for (s, &gs) in greedy.iter().enumerate() {
                    prop_assert!((gs - q.state_value(s)).abs() <= 10.0 * 1e-11 + 1e-12);
                }
            }

            #[test]
            fn value_iteration_stays_in_range(seed in any::<u64>(), start in 0.0f64..=1.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = random_mdp(&mut rng, 3, 2, 0.8);
                let q0 = QTable::filled(3, 2, start * m.v_max());
                let q = value_iteration(&m, &q0, 30, None).unwrap();
                for &x in q.as_slice() {
                    prop_assert!(x >= 0.0 && x <= m.v_max() + 1e-12);
                }
            }
        }
    }
}
