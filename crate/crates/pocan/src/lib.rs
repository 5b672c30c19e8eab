//! Quantitative analysis of probabilistic one-counter automata (pOCs).
//!
//! A pOC is a finite-state machine with a single unbounded counter. Every
//! state carries two rule families: zero rules (enabled when the counter is
//! zero, counter change in {0, +1}) and positive rules (enabled when the
//! counter is positive, change in {-1, 0, +1}). The induced Markov chain over
//! configurations `state(counter)` is infinite; the modules here answer
//! quantitative questions about it without unrolling that chain:
//!
//! * [`model`]: model and automaton types, text formats, validation.
//! * [`chain`]: the finite chain of state-to-state positive steps, its
//!   bottom components, trends and potentials (martingale ingredients).
//! * [`reach`]: qualitative reachability via automata saturation.
//! * [`newton`]: termination probabilities as the least solution of a
//!   quadratic system, solved by decomposed Newton iteration.
//! * [`exptime`]: classification and computation of expected termination
//!   times.
//! * [`omega`]: probabilities of omega-regular properties given by
//!   deterministic Rabin automata.
//! * [`bounds`]: closed-form tail and gap bounds in exact arithmetic.
//! * [`sim`]: reproducible Monte-Carlo estimation.
//! * [`cli`]: the `pocan` command-line front end.

pub mod bounds;
pub mod chain;
pub mod cli;
pub mod exptime;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod newton;
pub mod numeric;
pub mod omega;
pub mod parse;
pub mod reach;
pub mod sim;

pub use model::{Config, Dra, Poc, Rule, Valuation};
pub use numeric::Rat;
