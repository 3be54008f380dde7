//! Reference implementations used only by tests. None of these call the
//! crate's own closure, step, or acceptance routines.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use relu_nfa::Nfa;

pub type Set = BTreeSet<usize>;

/// Epsilon closure by enumerating every simple epsilon path from each
/// source (depth-first over explicit paths, no visited-set shortcut).
pub fn closure_by_paths(nfa: &Nfa, sources: &Set) -> Set {
    fn walk(nfa: &Nfa, path: &mut Vec<usize>, out: &mut Set) {
        let last = *path.last().unwrap();
        out.insert(last);
        for &next in nfa.eps_targets(last) {
            if !path.contains(&next) {
                path.push(next);
                walk(nfa, path, out);
                path.pop();
            }
        }
    }
    let mut out = Set::new();
    for &q in sources {
        walk(nfa, &mut vec![q], &mut out);
    }
    out
}

/// Successor set by iterating over every (source, target) pair.
pub fn step_by_pairs(nfa: &Nfa, active: &Set, symbol: usize) -> Set {
    let mut out = Set::new();
    for q in 0..nfa.states() {
        for r in 0..nfa.states() {
            if active.contains(&q) && nfa.targets(q, symbol).contains(&r) {
                out.insert(r);
            }
        }
    }
    out
}

/// Determinized automaton over subsets, built eagerly from the start set.
pub struct SubsetDfa {
    start: usize,
    accepting: Vec<bool>,
    delta: Vec<Vec<usize>>,
    alphabet: Vec<char>,
}

impl SubsetDfa {
    pub fn build(nfa: &Nfa) -> Self {
        let close = |s: &Set| closure_by_paths(nfa, s);
        let start_set = close(&Set::from([nfa.start()]));
        let mut index: HashMap<Set, usize> = HashMap::new();
        let mut sets = vec![start_set.clone()];
        index.insert(start_set, 0);
        let mut delta: Vec<Vec<usize>> = Vec::new();
        let mut i = 0;
        while i < sets.len() {
            let current = sets[i].clone();
            let mut row = Vec::new();
            for x in 0..nfa.alphabet().len() {
                let next = close(&step_by_pairs(nfa, &current, x));
                let id = match index.get(&next) {
                    Some(&id) => id,
                    None => {
                        sets.push(next.clone());
                        index.insert(next, sets.len() - 1);
                        sets.len() - 1
                    }
                };
                row.push(id);
            }
            delta.push(row);
            i += 1;
        }
        let accepting = sets
            .iter()
            .map(|s| s.iter().any(|q| nfa.accept().contains(q)))
            .collect();
        SubsetDfa {
            start: 0,
            accepting,
            delta,
            alphabet: nfa.alphabet().to_vec(),
        }
    }

    pub fn accepts(&self, input: &str) -> bool {
        let mut state = self.start;
        for c in input.chars() {
            let x = self.alphabet.iter().position(|&a| a == c).unwrap();
            state = self.delta[state][x];
        }
        self.accepting[state]
    }
}

/// All strings up to `max_len`, built by counting in base |alphabet|.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let k = alphabet.len();
    let mut out = Vec::new();
    for len in 0..=max_len {
        let total = k.pow(len as u32);
        for mut code in 0..total {
            let mut s = Vec::with_capacity(len);
            for _ in 0..len {
                s.push(alphabet[code % k]);
                code /= k;
            }
            s.reverse();
            out.push(s.into_iter().collect());
        }
    }
    out
}
