//! Epsilon-NFA representation, the JSON spec document, and the set-based
//! reference semantics (closure, step, acceptance).
//!
//! The set-based routines here never touch matrices. They are the ground
//! truth the ReLU runtime is checked against.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved symbol name for epsilon edges in spec documents.
pub const EPSILON_MARKER: &str = "eps";

pub type StateSet = BTreeSet<usize>;

/// An automaton over single-character symbols with epsilon edges.
///
/// States are `0..states()`. Every mutating method validates its arguments,
/// so a constructed `Nfa` always satisfies its index invariants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Nfa {
    states: usize,
    alphabet: Vec<char>,
    // delta[state][symbol index] -> sorted, deduplicated targets
    delta: Vec<Vec<Vec<usize>>>,
    eps: Vec<Vec<usize>>,
    start: usize,
    accept: StateSet,
}

impl Nfa {
    /// Creates an automaton with no transitions, start state 0 and no
    /// accepting states.
    pub fn new(states: usize, alphabet: impl IntoIterator<Item = char>) -> Result<Self> {
        if states == 0 {
            return Err(Error::InvalidField {
                field: "states".into(),
                message: "an automaton needs at least one state".into(),
            });
        }
        let mut symbols = Vec::new();
        for c in alphabet {
            if symbols.contains(&c) {
                return Err(Error::DuplicateSymbol {
                    field: "alphabet".into(),
                    symbol: c,
                });
            }
            symbols.push(c);
        }
        Ok(Nfa {
            states,
            delta: vec![vec![Vec::new(); symbols.len()]; states],
            eps: vec![Vec::new(); states],
            alphabet: symbols,
            start: 0,
            accept: StateSet::new(),
        })
    }

    fn check_state(&self, field: &str, state: usize) -> Result<()> {
        if state < self.states {
            Ok(())
        } else {
            Err(Error::DanglingState {
                field: field.into(),
                state,
                states: self.states,
            })
        }
    }

    pub fn set_start(&mut self, state: usize) -> Result<()> {
        self.check_state("start", state)?;
        self.start = state;
        Ok(())
    }

    pub fn add_accept(&mut self, state: usize) -> Result<()> {
        self.check_state("accept", state)?;
        self.accept.insert(state);
        Ok(())
    }

    pub fn add_transition(&mut self, from: usize, symbol: char, to: usize) -> Result<()> {
        self.check_state("from", from)?;
        self.check_state("to", to)?;
        let x = self.symbol_index(symbol).ok_or(Error::UnknownSymbol {
            symbol,
            position: 0,
        })?;
        insert_sorted(&mut self.delta[from][x], to);
        Ok(())
    }

    pub fn add_epsilon(&mut self, from: usize, to: usize) -> Result<()> {
        self.check_state("from", from)?;
        self.check_state("to", to)?;
        insert_sorted(&mut self.eps[from], to);
        Ok(())
    }

    /// Returns a copy whose alphabet additionally contains `symbols`
    /// (without any transitions on them). Existing symbols are skipped.
    pub fn extend_alphabet(&self, symbols: impl IntoIterator<Item = char>) -> Nfa {
        let mut out = self.clone();
        for c in symbols {
            if !out.alphabet.contains(&c) {
                out.alphabet.push(c);
                for row in &mut out.delta {
                    row.push(Vec::new());
                }
            }
        }
        out
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn accept(&self) -> &StateSet {
        &self.accept
    }

    pub fn symbol_index(&self, symbol: char) -> Option<usize> {
        self.alphabet.iter().position(|&c| c == symbol)
    }

    /// Targets of `state` on the symbol with index `symbol`.
    pub fn targets(&self, state: usize, symbol: usize) -> &[usize] {
        &self.delta[state][symbol]
    }

    pub fn eps_targets(&self, state: usize) -> &[usize] {
        &self.eps[state]
    }

    pub fn eps_edge_count(&self) -> usize {
        self.eps.iter().map(Vec::len).sum()
    }

    pub fn transition_count(&self) -> usize {
        self.delta.iter().flatten().map(Vec::len).sum()
    }

    /// Maps an input string to symbol indices.
    pub fn encode(&self, input: &str) -> Result<Vec<usize>> {
        input
            .chars()
            .enumerate()
            .map(|(position, symbol)| {
                self.symbol_index(symbol)
                    .ok_or(Error::UnknownSymbol { symbol, position })
            })
            .collect()
    }

    /// Smallest superset of `states` closed under epsilon edges (worklist).
    pub fn epsilon_closure(&self, states: &StateSet) -> StateSet {
        let mut closure = states.clone();
        let mut work: Vec<usize> = states.iter().copied().collect();
        while let Some(q) = work.pop() {
            for &r in &self.eps[q] {
                if closure.insert(r) {
                    work.push(r);
                }
            }
        }
        closure
    }

    /// Union of the symbol successors of `active`. No epsilon closure.
    pub fn step(&self, active: &StateSet, symbol: char) -> Result<StateSet> {
        let x = self.symbol_index(symbol).ok_or(Error::UnknownSymbol {
            symbol,
            position: 0,
        })?;
        Ok(self.step_index(active, x))
    }

    pub(crate) fn step_index(&self, active: &StateSet, symbol: usize) -> StateSet {
        active
            .iter()
            .flat_map(|&q| self.delta[q][symbol].iter().copied())
            .collect()
    }

    /// Closure-step-closure simulation from the start state.
    pub fn accepts(&self, input: &str) -> Result<bool> {
        let word = self.encode(input)?;
        Ok(self.accepts_encoded(&word))
    }

    pub(crate) fn accepts_encoded(&self, word: &[usize]) -> bool {
        let mut active = self.epsilon_closure(&StateSet::from([self.start]));
        for &x in word {
            active = self.epsilon_closure(&self.step_index(&active, x));
            if active.is_empty() {
                return false;
            }
        }
        !active.is_disjoint(&self.accept)
    }

    /// Parses a spec document.
    pub fn from_spec(text: &str) -> Result<Nfa> {
        let doc: SpecDocument =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        doc.into_nfa()
    }

    /// Canonical spec document: transitions ordered by source, then by
    /// alphabet position, epsilon edges last for each source.
    pub fn to_spec(&self) -> String {
        let mut transitions = Vec::new();
        for q in 0..self.states {
            for (x, &c) in self.alphabet.iter().enumerate() {
                if !self.delta[q][x].is_empty() {
                    transitions.push(SpecEdge {
                        from: q,
                        symbol: c.to_string(),
                        to: self.delta[q][x].clone(),
                    });
                }
            }
            if !self.eps[q].is_empty() {
                transitions.push(SpecEdge {
                    from: q,
                    symbol: EPSILON_MARKER.into(),
                    to: self.eps[q].clone(),
                });
            }
        }
        let doc = SpecDocument {
            states: self.states,
            alphabet: self.alphabet.iter().map(|c| c.to_string()).collect(),
            transitions,
            start: self.start,
            accept: self.accept.iter().copied().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("spec document serializes")
    }
}

fn insert_sorted(v: &mut Vec<usize>, x: usize) {
    if let Err(i) = v.binary_search(&x) {
        v.insert(i, x);
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDocument {
    states: usize,
    alphabet: Vec<String>,
    transitions: Vec<SpecEdge>,
    start: usize,
    accept: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecEdge {
    from: usize,
    symbol: String,
    to: Vec<usize>,
}

impl SpecDocument {
    fn into_nfa(self) -> Result<Nfa> {
        let mut alphabet = Vec::with_capacity(self.alphabet.len());
        for (i, s) in self.alphabet.iter().enumerate() {
            let field = format!("alphabet[{i}]");
            if s == EPSILON_MARKER {
                return Err(Error::InvalidField {
                    field,
                    message: format!("'{EPSILON_MARKER}' is reserved for epsilon edges"),
                });
            }
            let c = single_char(s).ok_or_else(|| Error::InvalidField {
                field: field.clone(),
                message: format!("symbol {s:?} is not a single character"),
            })?;
            if alphabet.contains(&c) {
                return Err(Error::DuplicateSymbol { field, symbol: c });
            }
            alphabet.push(c);
        }
        let mut nfa = Nfa::new(self.states, alphabet)?;
        let dangling = |field: String, state: usize| Error::DanglingState {
            field,
            state,
            states: self.states,
        };
        if self.start >= self.states {
            return Err(dangling("start".into(), self.start));
        }
        nfa.start = self.start;
        for (i, &q) in self.accept.iter().enumerate() {
            if q >= self.states {
                return Err(dangling(format!("accept[{i}]"), q));
            }
            nfa.accept.insert(q);
        }
        for (i, edge) in self.transitions.iter().enumerate() {
            if edge.from >= self.states {
                return Err(dangling(format!("transitions[{i}].from"), edge.from));
            }
            for (k, &to) in edge.to.iter().enumerate() {
                if to >= self.states {
                    return Err(dangling(format!("transitions[{i}].to[{k}]"), to));
                }
            }
            if edge.symbol == EPSILON_MARKER {
                for &to in &edge.to {
                    insert_sorted(&mut nfa.eps[edge.from], to);
                }
                continue;
            }
            let x = single_char(&edge.symbol)
                .and_then(|c| nfa.symbol_index(c))
                .ok_or_else(|| Error::InvalidField {
                    field: format!("transitions[{i}].symbol"),
                    message: format!("symbol {:?} is not in the alphabet", edge.symbol),
                })?;
            for &to in &edge.to {
                insert_sorted(&mut nfa.delta[edge.from][x], to);
            }
        }
        Ok(nfa)
    }
}

fn single_char(s: &str) -> Option<char> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}
