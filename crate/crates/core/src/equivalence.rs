//! Behavioral equivalence between an automaton and a network, and
//! extraction of an automaton from network weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nfa::Nfa;
use crate::par::{self, Execution};
use crate::relu::{compile, ReluAcceptor, TransitionMatrix};
use crate::training::{sample_strings, MaskedModel, Slot};

/// Extraction threshold for exact 0/1 weights.
pub const SYMBOLIC_THRESHOLD: f64 = 0.5;
/// Extraction threshold for trained weights.
pub const TRAINED_THRESHOLD: f64 = 1e-3;

/// Anything that can accept or reject strings over an alphabet.
pub trait Recognizer: Sync {
    fn alphabet(&self) -> &[char];
    fn recognizes(&self, input: &str) -> Result<bool>;
}

impl Recognizer for Nfa {
    fn alphabet(&self) -> &[char] {
        Nfa::alphabet(self)
    }

    fn recognizes(&self, input: &str) -> Result<bool> {
        self.accepts(input)
    }
}

impl Recognizer for ReluAcceptor {
    fn alphabet(&self) -> &[char] {
        ReluAcceptor::alphabet(self)
    }

    fn recognizes(&self, input: &str) -> Result<bool> {
        self.accepts(input)
    }
}

impl Recognizer for MaskedModel {
    fn alphabet(&self) -> &[char] {
        MaskedModel::alphabet(self)
    }

    fn recognizes(&self, input: &str) -> Result<bool> {
        self.accepts(input)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckMode {
    /// Every string of length `0..=max_len`.
    Exhaustive { max_len: usize },
    /// `count` strings with uniform length in `[min_len, max_len]`.
    Sampled {
        count: usize,
        min_len: usize,
        max_len: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub string: String,
    pub nfa_verdict: bool,
    pub net_verdict: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub mode: CheckMode,
    pub total: usize,
    pub mismatches: Vec<Mismatch>,
    pub agreement: f64,
}

impl EquivalenceReport {
    pub fn is_equivalent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// All strings over `alphabet` of length at most `max_len`, shortest
/// first, then in alphabet order.
pub fn enumerate_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|prefix| {
                alphabet.iter().map(move |&c| {
                    let mut s = prefix.clone();
                    s.push(c);
                    s
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Exhaustive length bound that keeps enumeration in the low thousands.
pub fn default_exhaustive_bound(alphabet_len: usize) -> usize {
    match alphabet_len {
        0..=2 => 8,
        3 => 6,
        _ => 5,
    }
}

fn same_alphabet(a: &[char], b: &[char]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

/// Compares the set-based verdict of `nfa` with `net` on the strings
/// selected by `mode`.
pub fn check_equivalence<R: Recognizer + ?Sized>(
    nfa: &Nfa,
    net: &R,
    mode: &CheckMode,
    exec: Execution,
) -> Result<EquivalenceReport> {
    if !same_alphabet(nfa.alphabet(), net.alphabet()) {
        return Err(Error::InvalidField {
            field: "alphabet".into(),
            message: format!(
                "automaton alphabet {:?} differs from network alphabet {:?}",
                nfa.alphabet(),
                net.alphabet()
            ),
        });
    }
    let strings = match *mode {
        CheckMode::Exhaustive { max_len } => enumerate_strings(nfa.alphabet(), max_len),
        CheckMode::Sampled {
            count,
            min_len,
            max_len,
            seed,
        } => sample_strings(nfa.alphabet(), count, min_len, max_len, seed)?,
    };
    let verdicts = par::map(exec, &strings, |s| -> Result<(bool, bool)> {
        Ok((nfa.accepts(s)?, net.recognizes(s)?))
    });
    let mut mismatches = Vec::new();
    for (string, verdict) in strings.iter().zip(verdicts) {
        let (nfa_verdict, net_verdict) = verdict?;
        if nfa_verdict != net_verdict {
            mismatches.push(Mismatch {
                string: string.clone(),
                nfa_verdict,
                net_verdict,
            });
        }
    }
    let total = strings.len();
    let agreement = if total == 0 {
        1.0
    } else {
        1.0 - mismatches.len() as f64 / total as f64
    };
    Ok(EquivalenceReport {
        mode: mode.clone(),
        total,
        mismatches,
        agreement,
    })
}

/// Weight matrices an automaton can be read back from.
pub trait WeightSource {
    fn alphabet(&self) -> &[char];
    fn symbol_weights(&self, symbol: usize) -> &TransitionMatrix;
    fn eps_weights(&self) -> &TransitionMatrix;
    fn start_state(&self) -> usize;
    fn accept_indicator(&self) -> &[f64];
}

impl WeightSource for ReluAcceptor {
    fn alphabet(&self) -> &[char] {
        ReluAcceptor::alphabet(self)
    }
    fn symbol_weights(&self, symbol: usize) -> &TransitionMatrix {
        self.symbol_matrix(symbol)
    }
    fn eps_weights(&self) -> &TransitionMatrix {
        self.eps_matrix()
    }
    fn start_state(&self) -> usize {
        self.start()
    }
    fn accept_indicator(&self) -> &[f64] {
        self.accept_vector()
    }
}

impl WeightSource for MaskedModel {
    fn alphabet(&self) -> &[char] {
        MaskedModel::alphabet(self)
    }
    fn symbol_weights(&self, symbol: usize) -> &TransitionMatrix {
        self.matrix(Slot::Symbol(symbol))
    }
    fn eps_weights(&self) -> &TransitionMatrix {
        self.matrix(Slot::Epsilon)
    }
    fn start_state(&self) -> usize {
        self.start()
    }
    fn accept_indicator(&self) -> &[f64] {
        self.accept_vector()
    }
}

/// Reads an automaton off the weights: `i --x--> j` iff `W_x[j][i] > tau`.
pub fn extract_nfa<W: WeightSource + ?Sized>(weights: &W, tau: f64) -> Nfa {
    let n = weights.eps_weights().dim();
    let alphabet = weights.alphabet().to_vec();
    let mut nfa = Nfa::new(n, alphabet.iter().copied()).expect("source alphabet is valid");
    for (x, &c) in alphabet.iter().enumerate() {
        let t = weights.symbol_weights(x);
        for target in 0..n {
            for source in 0..n {
                if t.get(target, source) > tau {
                    nfa.add_transition(source, c, target).expect("in range");
                }
            }
        }
    }
    let eps = weights.eps_weights();
    for target in 0..n {
        for source in 0..n {
            if eps.get(target, source) > tau {
                nfa.add_epsilon(source, target).expect("in range");
            }
        }
    }
    nfa.set_start(weights.start_state()).expect("in range");
    for (q, &f) in weights.accept_indicator().iter().enumerate() {
        if f > 0.5 {
            nfa.add_accept(q).expect("in range");
        }
    }
    nfa
}

/// Whether two automata agree on every string of length at most
/// `max_len`. Uses only the set-based semantics.
pub fn languages_agree(a: &Nfa, b: &Nfa, max_len: usize) -> bool {
    enumerate_strings(a.alphabet(), max_len)
        .iter()
        .all(|s| match (a.accepts(s), b.accepts(s)) {
            (Ok(x), Ok(y)) => x == y,
            _ => false,
        })
}

/// Compile, extract, and compare languages up to `max_len`.
pub fn round_trip_check(nfa: &Nfa, max_len: usize) -> bool {
    let extracted = extract_nfa(&compile(nfa), SYMBOLIC_THRESHOLD);
    same_alphabet(nfa.alphabet(), extracted.alphabet()) && languages_agree(nfa, &extracted, max_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{generate_random_nfa, RandomNfaConfig};
    use crate::regex::regex_to_nfa_over;

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_strings(&['a', 'b'], 8).len(), 511);
        assert_eq!(enumerate_strings(&['a', 'b', 'c', 'd'], 5).len(), 1365);
        assert_eq!(enumerate_strings(&['a'], 0), vec![String::new()]);
        assert_eq!(
            enumerate_strings(&['a', 'b'], 2),
            ["", "a", "b", "aa", "ab", "ba", "bb"]
        );
    }

    #[test]
    fn detects_different_languages() {
        let a_star = regex_to_nfa_over("a*", ['b']).unwrap();
        let b_star = regex_to_nfa_over("b*", ['a']).unwrap();
        let report = check_equivalence(
            &a_star,
            &compile(&b_star),
            &CheckMode::Exhaustive { max_len: 3 },
            Execution::Sequential,
        )
        .unwrap();
        assert!(report.agreement < 1.0);
        assert!(report
            .mismatches
            .iter()
            .any(|m| m.string == "a" && m.nfa_verdict));
        assert!(report.mismatches.iter().all(|m| !m.string.is_empty()));
        let expected = 1.0 - report.mismatches.len() as f64 / report.total as f64;
        assert_eq!(report.agreement, expected);
    }

    #[test]
    fn alphabet_mismatch_is_an_error() {
        let a = regex_to_nfa_over("a", []).unwrap();
        let b = regex_to_nfa_over("b", []).unwrap();
        assert!(check_equivalence(
            &a,
            &compile(&b),
            &CheckMode::Exhaustive { max_len: 1 },
            Execution::Sequential
        )
        .is_err());
    }

    #[test]
    fn extraction_round_trips_symbolic_weights() {
        for seed in 0..10 {
            let nfa = generate_random_nfa(&RandomNfaConfig::six_state(seed));
            assert_eq!(extract_nfa(&compile(&nfa), SYMBOLIC_THRESHOLD), nfa);
        }
    }

    #[test]
    fn zero_matrix_extracts_no_edges() {
        let nfa = generate_random_nfa(&RandomNfaConfig::six_state(3));
        let mut acc = compile(&nfa);
        *acc.symbol_matrix_mut(1) = TransitionMatrix::zeros(6, Some('b'));
        let out = extract_nfa(&acc, SYMBOLIC_THRESHOLD);
        assert!((0..6).all(|q| out.targets(q, 1).is_empty()));
        assert_eq!(
            (0..6).map(|q| out.targets(q, 0).len()).sum::<usize>(),
            (0..6).map(|q| nfa.targets(q, 0).len()).sum::<usize>()
        );
    }

    #[test]
    fn raising_tau_never_adds_edges() {
        let nfa = generate_random_nfa(&RandomNfaConfig::six_state(8));
        let mut model = MaskedModel::from_acceptor(&compile(&nfa));
        model.jitter(1.0, 4);
        let mut prev = usize::MAX;
        for tau in [0.0, 0.5, 1.0, 1.25, 1.5, 1.75, 2.5] {
            let e = extract_nfa(&model, tau);
            let edges = e.transition_count() + e.eps_edge_count();
            assert!(edges <= prev);
            prev = edges;
        }
    }

    #[test]
    fn unreachable_states_do_not_break_round_trip() {
        let mut nfa = Nfa::new(4, ['a', 'b']).unwrap();
        nfa.add_transition(0, 'a', 1).unwrap();
        nfa.add_transition(2, 'b', 3).unwrap();
        nfa.add_epsilon(3, 2).unwrap();
        nfa.add_accept(1).unwrap();
        nfa.add_accept(3).unwrap();
        assert!(round_trip_check(&nfa, 8));
    }
}
