//! Known state-action pairs and the known state-action MDP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, QTable};

/// Partition of the known pairs into `k1` (small Bellman residual) and
/// `k2` (visited at least `m2` times). Masks are indexed `s * A + a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownSet {
    num_actions: usize,
    pub k1: Vec<bool>,
    pub k2: Vec<bool>,
}

impl KnownSet {
    pub fn new(num_actions: usize, k1: Vec<bool>, k2: Vec<bool>) -> Self {
        debug_assert_eq!(k1.len(), k2.len());
        KnownSet { num_actions, k1, k2 }
    }

    pub fn all(num_states: usize, num_actions: usize) -> Self {
        let n = num_states * num_actions;
        Self::new(num_actions, vec![true; n], vec![false; n])
    }

    pub fn none(num_states: usize, num_actions: usize) -> Self {
        let n = num_states * num_actions;
        Self::new(num_actions, vec![false; n], vec![false; n])
    }

    /// Known set with the given pairs in `k1` and nothing in `k2`.
    pub fn from_mask(num_actions: usize, mask: Vec<bool>) -> Self {
        let n = mask.len();
        Self::new(num_actions, mask, vec![false; n])
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn in_k1(&self, s: usize, a: usize) -> bool {
        self.k1[s * self.num_actions + a]
    }

    pub fn in_k2(&self, s: usize, a: usize) -> bool {
        self.k2[s * self.num_actions + a]
    }

    /// Membership in `K = K1 ∪ K2`.
    pub fn contains(&self, s: usize, a: usize) -> bool {
        self.in_k1(s, a) || self.in_k2(s, a)
    }

    pub fn len(&self) -> usize {
        self.k1.iter().zip(&self.k2).filter(|(x, y)| **x || **y).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The true MDP with every unknown pair `(s,a)` redirected to an absorbing
/// state `z_{s,a}` that pays `Q(s,a) (1 - gamma)` forever, so executing an
/// unknown pair is worth exactly its frozen `Q(s,a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnownMdp {
    pub mdp: Mdp,
    /// For augmented state `num_states + i`, the pair it stands for.
    pub origins: Vec<(usize, usize)>,
    num_original: usize,
}

impl KnownMdp {
    pub fn num_original_states(&self) -> usize {
        self.num_original
    }

    pub fn num_augmented(&self) -> usize {
        self.origins.len()
    }

    /// Augmented state index for an unknown pair, if any.
    pub fn z_state(&self, s: usize, a: usize) -> Option<usize> {
        self.origins
            .iter()
            .position(|&p| p == (s, a))
            .map(|i| self.num_original + i)
    }
}

pub fn build_known_mdp(m: &Mdp, known: &KnownSet, q: &QTable) -> Result<KnownMdp> {
    let (ns, na) = (m.num_states(), m.num_actions());
    if q.num_states() != ns || q.num_actions() != na || known.k1.len() != ns * na {
        return Err(Error::InvalidArgument("known set or Q table shape mismatch".into()));
    }
    let vmax = m.v_max();
    if let Some(bad) = q.as_slice().iter().find(|x| !(0.0..=vmax).contains(*x)) {
        return Err(Error::InvalidArgument(format!(
            "Q value {bad} outside [0, {vmax}]"
        )));
    }
    let gamma = m.gamma();
    let origins: Vec<(usize, usize)> = (0..ns)
        .flat_map(|s| (0..na).map(move |a| (s, a)))
        .filter(|&(s, a)| !known.contains(s, a))
        .collect();
    let total = ns + origins.len();

    let mut rewards = Vec::with_capacity(total * na);
    let mut transitions = vec![0.0; total * na * total];
    let mut z = ns;
    for s in 0..ns {
        for a in 0..na {
            let row = (s * na + a) * total;
            if known.contains(s, a) {
                rewards.push(m.reward(s, a));
                transitions[row..row + ns].copy_from_slice(m.transition_row(s, a));
            } else {
                rewards.push(q.get(s, a) * (1.0 - gamma));
                transitions[row + z] = 1.0;
                z += 1;
            }
        }
    }
    for (i, &(s, a)) in origins.iter().enumerate() {
        let zs = ns + i;
        let frozen = q.get(s, a) * (1.0 - gamma);
        for b in 0..na {
            rewards.push(frozen);
            transitions[(zs * na + b) * total + zs] = 1.0;
        }
    }
    Ok(KnownMdp {
        mdp: Mdp::from_flat(total, na, gamma, rewards, transitions),
        origins,
        num_original: ns,
    })
}
