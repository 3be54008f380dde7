//! Thompson construction for a small regex dialect: literals,
//! concatenation, `|`, `*` and parentheses.

use crate::error::{Error, Result};
use crate::nfa::Nfa;

#[derive(Debug, Clone, PartialEq)]
enum Ast {
    Empty,
    Literal(char),
    Concat(Vec<Ast>),
    Alt(Vec<Ast>),
    Star(Box<Ast>),
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Self {
        Parser {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn error(&self, message: &str) -> Error {
        Error::Regex {
            position: self.pos,
            message: message.into(),
        }
    }

    fn parse(mut self) -> Result<Ast> {
        let ast = self.alternation()?;
        match self.peek() {
            None => Ok(ast),
            Some(')') => Err(self.error("unmatched ')'")),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn alternation(&mut self) -> Result<Ast> {
        let mut branches = vec![self.concatenation()?];
        while self.peek() == Some('|') {
            self.pos += 1;
            branches.push(self.concatenation()?);
        }
        Ok(if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            Ast::Alt(branches)
        })
    }

    fn concatenation(&mut self) -> Result<Ast> {
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            match c {
                '|' | ')' => break,
                '*' => return Err(self.error("nothing to repeat")),
                _ => items.push(self.repetition()?),
            }
        }
        Ok(match items.len() {
            0 => Ast::Empty,
            1 => items.pop().unwrap(),
            _ => Ast::Concat(items),
        })
    }

    fn repetition(&mut self) -> Result<Ast> {
        let mut atom = self.atom()?;
        while self.peek() == Some('*') {
            self.pos += 1;
            atom = Ast::Star(Box::new(atom));
        }
        Ok(atom)
    }

    fn atom(&mut self) -> Result<Ast> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.alternation()?;
                if self.peek() != Some(')') {
                    return Err(self.error("unclosed '('"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) => {
                self.pos += 1;
                Ok(Ast::Literal(c))
            }
            None => Err(self.error("unexpected end of pattern")),
        }
    }
}

#[derive(Default)]
struct Builder {
    states: usize,
    symbol_edges: Vec<(usize, char, usize)>,
    eps_edges: Vec<(usize, usize)>,
}

impl Builder {
    fn fresh(&mut self) -> usize {
        self.states += 1;
        self.states - 1
    }

    /// Returns the (entry, exit) pair of the fragment.
    fn build(&mut self, ast: &Ast) -> (usize, usize) {
        match ast {
            Ast::Empty => {
                let s = self.fresh();
                (s, s)
            }
            Ast::Literal(c) => {
                let s = self.fresh();
                let e = self.fresh();
                self.symbol_edges.push((s, *c, e));
                (s, e)
            }
            Ast::Concat(items) => {
                let mut frags = items.iter().map(|a| self.build(a)).collect::<Vec<_>>();
                for w in frags.windows(2) {
                    self.eps_edges.push((w[0].1, w[1].0));
                }
                let last = frags.pop().unwrap();
                (frags.first().map_or(last.0, |f| f.0), last.1)
            }
            Ast::Alt(branches) => {
                let s = self.fresh();
                let frags = branches.iter().map(|a| self.build(a)).collect::<Vec<_>>();
                let e = self.fresh();
                for (fs, fe) in frags {
                    self.eps_edges.push((s, fs));
                    self.eps_edges.push((fe, e));
                }
                (s, e)
            }
            Ast::Star(inner) => {
                let s = self.fresh();
                let (fs, fe) = self.build(inner);
                let e = self.fresh();
                self.eps_edges.push((s, fs));
                self.eps_edges.push((s, e));
                self.eps_edges.push((fe, fs));
                self.eps_edges.push((fe, e));
                (s, e)
            }
        }
    }
}

/// Compiles `pattern` into an epsilon-NFA whose alphabet is the sorted set
/// of literals in the pattern.
pub fn regex_to_nfa(pattern: &str) -> Result<Nfa> {
    regex_to_nfa_over(pattern, [])
}

/// Like [`regex_to_nfa`], with `extra` symbols added to the alphabet.
pub fn regex_to_nfa_over(pattern: &str, extra: impl IntoIterator<Item = char>) -> Result<Nfa> {
    let ast = Parser::new(pattern).parse()?;
    let mut b = Builder::default();
    let (start, end) = b.build(&ast);

    let mut alphabet: Vec<char> = b.symbol_edges.iter().map(|e| e.1).chain(extra).collect();
    alphabet.sort_unstable();
    alphabet.dedup();

    let mut nfa = Nfa::new(b.states, alphabet)?;
    for (from, c, to) in b.symbol_edges {
        nfa.add_transition(from, c, to)?;
    }
    for (from, to) in b.eps_edges {
        nfa.add_epsilon(from, to)?;
    }
    nfa.set_start(start)?;
    nfa.add_accept(end)?;
    Ok(nfa)
}
