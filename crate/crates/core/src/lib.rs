//! Exact ReLU simulation of epsilon-NFAs.
//!
//! An automaton is compiled into one 0/1 matrix per symbol plus one for
//! epsilon edges. A state set is a nonnegative vector whose support is the
//! set; one symbol step is `ReLU(T s)`, epsilon closure is the fixpoint of
//! `s + ReLU(T_eps s)`, and acceptance is `f . s_T > 0`.
//!
//! Alongside the runtime the crate ships set-based reference semantics
//! ([`Nfa::accepts`], [`Nfa::epsilon_closure`], [`Nfa::step`]), masked
//! gradient training ([`training`]), automaton extraction from weights
//! ([`equivalence`]), and a seeded experiment harness ([`experiments`]).
//!
//! ```
//! use relu_nfa::{compile, regex_to_nfa};
//!
//! let nfa = regex_to_nfa("(ab)*").unwrap();
//! let acceptor = compile(&nfa);
//! assert!(acceptor.accepts("abab").unwrap());
//! assert!(!acceptor.accepts("aba").unwrap());
//! ```

pub mod equivalence;
pub mod error;
pub mod experiments;
pub mod nfa;
pub mod par;
pub mod random;
pub mod regex;
pub mod relu;
pub mod stats;
pub mod training;

pub use equivalence::{
    check_equivalence, extract_nfa, round_trip_check, CheckMode, EquivalenceReport, Recognizer,
};
pub use error::{Error, Result};
pub use experiments::{
    run_experiment, ExperimentConfig, ExperimentName, ExperimentReport, Setting,
};
pub use nfa::{Nfa, StateSet};
pub use par::Execution;
pub use random::{generate_random_nfa, RandomNfaConfig};
pub use regex::{regex_to_nfa, regex_to_nfa_over};
pub use relu::{
    binarize, compile, epsilon_closure_net, relu_step, ReluAcceptor, StateVector, TransitionMatrix,
    ACTIVATION_THRESHOLD,
};
pub use stats::{summarize, StatSummary};
pub use training::{
    audit_sparsity, backward, bce_loss, forward_smooth, generate_dataset, train, LabeledDataset,
    MaskedModel, TrainConfig, TrainReport,
};
