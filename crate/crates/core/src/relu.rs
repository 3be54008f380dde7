//! Symbolic ReLU runtime: transition matrices, the single ReLU step, the
//! epsilon-closure recurrence, and the compiled three-stage acceptor.
//!
//! Matrices are laid out row = target, column = source, so `(T s)_j` sums
//! the activations of every source with an edge into `j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nfa::{Nfa, StateSet, EPSILON_MARKER};

/// Values above this count as active.
pub const ACTIVATION_THRESHOLD: f64 = 1e-6;

/// Dense `n x n` nonnegative matrix for one symbol (or epsilon).
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    entries: Vec<f64>,
    symbol: Option<char>,
}

impl TransitionMatrix {
    pub fn zeros(n: usize, symbol: Option<char>) -> Self {
        TransitionMatrix {
            n,
            entries: vec![0.0; n * n],
            symbol,
        }
    }

    /// Builds from rows (`rows[target][source]`). Rejects negative or
    /// non-finite entries and ragged rows.
    pub fn from_rows(rows: &[Vec<f64>], symbol: Option<char>) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (i, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidField {
                        field: format!("{}[{j}][{i}]", symbol_name(symbol)),
                        message: format!("entry {v} is not a finite nonnegative number"),
                    });
                }
            }
            entries.extend_from_slice(row);
        }
        Ok(TransitionMatrix { n, entries, symbol })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn symbol(&self) -> Option<char> {
        self.symbol
    }

    pub fn get(&self, target: usize, source: usize) -> f64 {
        self.entries[target * self.n + source]
    }

    /// Sets one entry. Negative values are clamped to zero.
    pub fn set(&mut self, target: usize, source: usize, value: f64) {
        self.entries[target * self.n + source] = value.max(0.0);
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .chunks(self.n.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|&&v| v != 0.0).count()
    }

    /// `T s`, without the ReLU.
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        self.entries
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|row| row.iter().zip(s).map(|(w, x)| w * x).sum())
            .collect()
    }
}

fn symbol_name(symbol: Option<char>) -> String {
    symbol.map_or_else(|| EPSILON_MARKER.to_string(), |c| c.to_string())
}

/// Nonnegative activation vector; its support is the active state set.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        StateVector(vec![0.0; n])
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        StateVector(v)
    }

    /// Indicator vector of `states`.
    pub fn from_set(n: usize, states: &StateSet) -> Self {
        let mut v = vec![0.0; n];
        for &q in states {
            v[q] = 1.0;
        }
        StateVector(v)
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        StateVector(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn support(&self) -> StateSet {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > ACTIVATION_THRESHOLD)
            .map(|(i, _)| i)
            .collect()
    }
}

/// `ReLU(T s)`.
pub fn relu_step(t: &TransitionMatrix, s: &StateVector) -> Result<StateVector> {
    if t.dim() != s.len() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            found: s.len(),
        });
    }
    Ok(StateVector(
        t.apply(s.values())
            .into_iter()
            .map(|v| v.max(0.0))
            .collect(),
    ))
}

/// Entries above `threshold` become 1, the rest 0.
pub fn binarize(s: &StateVector, threshold: f64) -> StateVector {
    StateVector(
        s.0.iter()
            .map(|&v| if v > threshold { 1.0 } else { 0.0 })
            .collect(),
    )
}

/// Iterates `s <- binarize(s + ReLU(T_eps s))` until the support stops
/// changing. Returns the fixpoint and the number of iterations performed,
/// counting the one that confirmed the fixpoint.
pub fn epsilon_closure_net(
    eps: &TransitionMatrix,
    s: &StateVector,
    max_iters: usize,
) -> Result<(StateVector, usize)> {
    let mut current = binarize(s, ACTIVATION_THRESHOLD);
    for iteration in 1..=max_iters {
        let spread = relu_step(eps, &current)?;
        let summed: Vec<f64> = current
            .values()
            .iter()
            .zip(spread.values())
            .map(|(a, b)| a + b)
            .collect();
        let next = binarize(&StateVector(summed), ACTIVATION_THRESHOLD);
        if next == current {
            return Ok((next, iteration));
        }
        current = next;
    }
    Err(Error::NonConvergence(max_iters))
}

/// The compiled acceptor: start closure, per-symbol step + closure, and a
/// dot-product acceptance head.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluAcceptor {
    n: usize,
    alphabet: Vec<char>,
    per_symbol: Vec<TransitionMatrix>,
    eps_matrix: TransitionMatrix,
    start: usize,
    accept_vector: Vec<f64>,
    closure_iterations: usize,
}

/// Transcribes an automaton into 0/1 matrices.
pub fn compile(nfa: &Nfa) -> ReluAcceptor {
    let n = nfa.states();
    let per_symbol = nfa
        .alphabet()
        .iter()
        .enumerate()
        .map(|(x, &c)| {
            let mut t = TransitionMatrix::zeros(n, Some(c));
            for source in 0..n {
                for &target in nfa.targets(source, x) {
                    t.set(target, source, 1.0);
                }
            }
            t
        })
        .collect();
    let mut eps_matrix = TransitionMatrix::zeros(n, None);
    for source in 0..n {
        for &target in nfa.eps_targets(source) {
            eps_matrix.set(target, source, 1.0);
        }
    }
    let mut accept_vector = vec![0.0; n];
    for &q in nfa.accept() {
        accept_vector[q] = 1.0;
    }
    ReluAcceptor {
        n,
        alphabet: nfa.alphabet().to_vec(),
        per_symbol,
        eps_matrix,
        start: nfa.start(),
        accept_vector,
        closure_iterations: n,
    }
}

impl ReluAcceptor {
    /// Assembles an acceptor from raw parts, checking dimensions.
    pub fn from_parts(
        alphabet: Vec<char>,
        per_symbol: Vec<TransitionMatrix>,
        eps_matrix: TransitionMatrix,
        start: usize,
        accept_vector: Vec<f64>,
        closure_iterations: usize,
    ) -> Result<Self> {
        let n = eps_matrix.dim();
        if per_symbol.len() != alphabet.len() {
            return Err(Error::DimensionMismatch {
                expected: alphabet.len(),
                found: per_symbol.len(),
            });
        }
        for t in &per_symbol {
            if t.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: t.dim(),
                });
            }
        }
        if accept_vector.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: accept_vector.len(),
            });
        }
        if accept_vector.iter().any(|&f| f != 0.0 && f != 1.0) {
            return Err(Error::InvalidField {
                field: "accept".into(),
                message: "accept indicator entries must be 0 or 1".into(),
            });
        }
        if start >= n {
            return Err(Error::DanglingState {
                field: "start".into(),
                state: start,
                states: n,
            });
        }
        if closure_iterations == 0 {
            return Err(Error::InvalidField {
                field: "closure_iterations".into(),
                message: "must be at least 1".into(),
            });
        }
        Ok(ReluAcceptor {
            n,
            alphabet,
            per_symbol,
            eps_matrix,
            start,
            accept_vector,
            closure_iterations,
        })
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn symbol_matrix(&self, symbol: usize) -> &TransitionMatrix {
        &self.per_symbol[symbol]
    }

    pub fn symbol_matrix_mut(&mut self, symbol: usize) -> &mut TransitionMatrix {
        &mut self.per_symbol[symbol]
    }

    pub fn eps_matrix(&self) -> &TransitionMatrix {
        &self.eps_matrix
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn start_vector(&self) -> StateVector {
        StateVector::one_hot(self.n, self.start)
    }

    pub fn accept_vector(&self) -> &[f64] {
        &self.accept_vector
    }

    pub fn closure_iterations(&self) -> usize {
        self.closure_iterations
    }

    pub fn with_closure_iterations(mut self, k: usize) -> Self {
        self.closure_iterations = k.max(1);
        self
    }

    pub fn encode(&self, input: &str) -> Result<Vec<usize>> {
        input
            .chars()
            .enumerate()
            .map(|(position, symbol)| {
                self.alphabet
                    .iter()
                    .position(|&c| c == symbol)
                    .ok_or(Error::UnknownSymbol { symbol, position })
            })
            .collect()
    }

    fn close(&self, s: &StateVector) -> Result<StateVector> {
        epsilon_closure_net(&self.eps_matrix, s, self.closure_iterations).map(|(v, _)| v)
    }

    /// Binarized state after every stage: `trace[0]` is the closed start
    /// vector, `trace[t]` the closed state after `t` symbols.
    pub fn trace(&self, input: &str) -> Result<Vec<StateVector>> {
        let word = self.encode(input)?;
        self.trace_encoded(&word)
    }

    pub(crate) fn trace_encoded(&self, word: &[usize]) -> Result<Vec<StateVector>> {
        let mut trace = Vec::with_capacity(word.len() + 1);
        let mut s = self.close(&self.start_vector())?;
        for &x in word {
            let stepped = binarize(&relu_step(&self.per_symbol[x], &s)?, ACTIVATION_THRESHOLD);
            let next = self.close(&stepped)?;
            trace.push(std::mem::replace(&mut s, next));
        }
        trace.push(s);
        Ok(trace)
    }

    /// Full network verdict: accept iff `f . s_T > 0`.
    pub fn accepts(&self, input: &str) -> Result<bool> {
        let word = self.encode(input)?;
        self.accepts_encoded(&word)
    }

    pub(crate) fn accepts_encoded(&self, word: &[usize]) -> Result<bool> {
        let last = self
            .trace_encoded(word)?
            .pop()
            .expect("trace has at least the start vector");
        let score: f64 = self
            .accept_vector
            .iter()
            .zip(last.values())
            .map(|(f, s)| f * s)
            .sum();
        Ok(score > 0.0)
    }

    /// Stacked per-symbol steps with no epsilon stage. Requires a zero
    /// epsilon matrix.
    pub fn run_subset_construction(&self, input: &str) -> Result<Vec<StateVector>> {
        if !self.eps_matrix.is_zero() {
            return Err(Error::InvalidField {
                field: "eps_matrix".into(),
                message: "subset-construction trace requires an epsilon-free acceptor".into(),
            });
        }
        let word = self.encode(input)?;
        let mut trace = vec![self.start_vector()];
        for &x in &word {
            let prev = trace.last().expect("nonempty");
            trace.push(binarize(
                &relu_step(&self.per_symbol[x], prev)?,
                ACTIVATION_THRESHOLD,
            ));
        }
        Ok(trace)
    }

    /// Serialized acceptor document.
    pub fn to_json(&self) -> String {
        let doc = AcceptorDocument {
            kind: ACCEPTOR_KIND.into(),
            n: self.n,
            alphabet: self.alphabet.iter().map(|c| c.to_string()).collect(),
            transitions: self
                .per_symbol
                .iter()
                .zip(&self.alphabet)
                .map(|(t, c)| SymbolRows {
                    symbol: c.to_string(),
                    rows: t.rows(),
                })
                .collect(),
            eps: self.eps_matrix.rows(),
            start: self.start,
            accept: self.accept_vector.clone(),
            closure_iterations: self.closure_iterations,
        };
        serde_json::to_string_pretty(&doc).expect("acceptor document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: AcceptorDocument =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        if doc.kind != ACCEPTOR_KIND {
            return Err(Error::InvalidField {
                field: "kind".into(),
                message: format!("expected {ACCEPTOR_KIND:?}, found {:?}", doc.kind),
            });
        }
        let alphabet = parse_alphabet(&doc.alphabet)?;
        if doc.transitions.len() != alphabet.len() {
            return Err(Error::DimensionMismatch {
                expected: alphabet.len(),
                found: doc.transitions.len(),
            });
        }
        let mut per_symbol = Vec::with_capacity(alphabet.len());
        for (i, (entry, &c)) in doc.transitions.iter().zip(&alphabet).enumerate() {
            if entry.symbol != c.to_string() {
                return Err(Error::InvalidField {
                    field: format!("transitions[{i}].symbol"),
                    message: format!("expected '{c}' to follow alphabet order"),
                });
            }
            per_symbol.push(TransitionMatrix::from_rows(&entry.rows, Some(c))?);
        }
        let eps = TransitionMatrix::from_rows(&doc.eps, None)?;
        if eps.dim() != doc.n {
            return Err(Error::DimensionMismatch {
                expected: doc.n,
                found: eps.dim(),
            });
        }
        Self::from_parts(
            alphabet,
            per_symbol,
            eps,
            doc.start,
            doc.accept,
            doc.closure_iterations,
        )
    }
}

pub(crate) const ACCEPTOR_KIND: &str = "relu_acceptor";

pub(crate) fn parse_alphabet(symbols: &[String]) -> Result<Vec<char>> {
    let mut out = Vec::with_capacity(symbols.len());
    for (i, s) in symbols.iter().enumerate() {
        let mut chars = s.chars();
        let c = match (chars.next(), chars.next()) {
            (Some(c), None) if s != EPSILON_MARKER => c,
            _ => {
                return Err(Error::InvalidField {
                    field: format!("alphabet[{i}]"),
                    message: format!("{s:?} is not a single-character symbol"),
                })
            }
        };
        if out.contains(&c) {
            return Err(Error::DuplicateSymbol {
                field: format!("alphabet[{i}]"),
                symbol: c,
            });
        }
        out.push(c);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AcceptorDocument {
    kind: String,
    n: usize,
    alphabet: Vec<String>,
    transitions: Vec<SymbolRows>,
    eps: Vec<Vec<f64>>,
    start: usize,
    accept: Vec<f64>,
    closure_iterations: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SymbolRows {
    pub symbol: String,
    pub rows: Vec<Vec<f64>>,
}
