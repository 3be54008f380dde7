use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nfa::Nfa;

/// Parameters for synthetic automaton generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomNfaConfig {
    pub states: usize,
    pub alphabet: Vec<char>,
    pub eps_probability: f64,
    pub max_out_degree: usize,
    pub seed: u64,
}

impl RandomNfaConfig {
    /// Six states over `{a, b}`.
    pub fn six_state(seed: u64) -> Self {
        RandomNfaConfig {
            states: 6,
            alphabet: vec!['a', 'b'],
            eps_probability: 0.3,
            max_out_degree: 2,
            seed,
        }
    }

    /// Ten states over `{a, b, c, d}`.
    pub fn ten_state(seed: u64) -> Self {
        RandomNfaConfig {
            states: 10,
            alphabet: vec!['a', 'b', 'c', 'd'],
            ..Self::six_state(seed)
        }
    }

    pub fn with_eps_probability(mut self, p: f64) -> Self {
        self.eps_probability = p;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::InvalidField {
                field: field.into(),
                message: message.into(),
            })
        };
        if self.states == 0 {
            return bad("states", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.eps_probability) {
            return bad("eps_probability", "must lie in [0, 1]");
        }
        if self.max_out_degree == 0 {
            return bad("max_out_degree", "must be at least 1");
        }
        Ok(())
    }
}

/// Samples an automaton.
///
/// Each (state, symbol) pair gets between 1 and `max_out_degree` distinct
/// targets (capped at the state count); each ordered pair of distinct
/// states gets an epsilon edge with probability `eps_probability`. The
/// start state is 0 and exactly one uniformly chosen state accepts.
pub fn generate_random_nfa(config: &RandomNfaConfig) -> Nfa {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.states;
    let mut nfa = Nfa::new(n, config.alphabet.iter().copied())
        .expect("generation config carries a valid alphabet");
    let max_degree = config.max_out_degree.min(n);

    for q in 0..n {
        for &c in &config.alphabet {
            let degree = rng.gen_range(1..=max_degree);
            for target in index::sample(&mut rng, n, degree) {
                nfa.add_transition(q, c, target).expect("indices in range");
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(config.eps_probability) {
                nfa.add_epsilon(i, j).expect("indices in range");
            }
        }
    }
    nfa.add_accept(rng.gen_range(0..n)).expect("index in range");
    nfa
}

/// Mixes a base seed with a stream tag (splitmix64 finalizer), so that
/// independent random streams of one run never share a generator seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
