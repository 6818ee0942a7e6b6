use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::Mdp;

/// Seeded, platform-independent random stream.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }
}

/// Samples `(R(s,a), s')` with `s' ~ T(s,a,.)` by inverse CDF over
/// ascending state index.
pub fn env_step(m: &Mdp, s: usize, a: usize, rng: &mut Rng) -> (f64, usize) {
    let u = rng.uniform();
    let row = m.transition_row(s, a);
    let mut cumulative = 0.0;
    let mut last_positive = s;
    for (next, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        last_positive = next;
        if u < cumulative {
            return (m.reward(s, a), next);
        }
    }
    // rounding left the CDF just short of 1
    (m.reward(s, a), last_positive)
}
