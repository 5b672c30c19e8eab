//! Model types: probabilistic one-counter automata, configurations,
//! valuations, and deterministic Rabin automata.
//!
//! A pOC has a finite state set; each state owns one distribution of zero
//! rules (counter change in {0, +1}, enabled at counter zero) and one of
//! positive rules (change in {-1, 0, +1}, enabled at positive counter). Rule
//! probabilities are exact rationals and each family sums to exactly 1.

use crate::numeric::Rat;
use num_traits::{One, Signed};
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use thiserror::Error;

/// Validation errors for model construction.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("state {state}: {kind} rules sum to {sum}, expected exactly 1")]
    DistributionSum { state: String, kind: &'static str, sum: String },
    #[error("state {state} has no {kind} rule")]
    MissingRule { state: String, kind: &'static str },
    #[error("duplicate rule {src} {delta:+} {dst}")]
    DuplicateRule { src: String, delta: i8, dst: String },
    #[error("rule {src} -> {dst}: probability {prob} outside (0, 1]")]
    ProbRange { src: String, dst: String, prob: String },
    #[error("rule {src} -> {dst}: counter change {delta:+} not allowed in {kind} rules")]
    BadDelta { src: String, dst: String, delta: i8, kind: &'static str },
    #[error("unknown state {0}")]
    UnknownState(String),
    #[error("duplicate state {0}")]
    DuplicateState(String),
    #[error("model declares no states")]
    NoStates,
    #[error("parameter {name} = {value} outside (0, 1)")]
    ParamRange { name: &'static str, value: String },
}

/// One rule: from `src`, change the counter by `delta`, move to `dst`, with
/// probability `prob`. States are indices into [`Poc::names`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub src: usize,
    pub delta: i8,
    pub dst: usize,
    pub prob: Rat,
}

/// A configuration of the induced Markov chain: `state(counter)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Config {
    pub state: usize,
    pub counter: u64,
}

/// A probabilistic one-counter automaton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poc {
    names: Vec<String>,
    index: HashMap<String, usize>,
    zero: Vec<Vec<Rule>>,
    pos: Vec<Vec<Rule>>,
    labels: Vec<Option<(String, String)>>,
    x_min: Rat,
}

impl Poc {
    /// Build and validate a model. `zero_rules` and `pos_rules` use state
    /// indices relative to `names`; `labels` optionally assigns each state a
    /// (zero letter, positive letter) pair for omega-regular queries.
    pub fn new(
        names: Vec<String>,
        zero_rules: Vec<Rule>,
        pos_rules: Vec<Rule>,
        labels: Vec<Option<(String, String)>>,
    ) -> Result<Poc, ModelError> {
        if names.is_empty() {
            return Err(ModelError::NoStates);
        }
        let mut index = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(ModelError::DuplicateState(name.clone()));
            }
        }
        assert_eq!(labels.len(), names.len());
        let n = names.len();
        let mut zero: Vec<Vec<Rule>> = vec![Vec::new(); n];
        let mut pos: Vec<Vec<Rule>> = vec![Vec::new(); n];
        let mut x_min: Option<Rat> = None;
        let mut seen: BTreeSet<(usize, i8, usize, bool)> = BTreeSet::new();
        for (rules, target, kind, deltas) in [
            (zero_rules, &mut zero, "zero", [0i8, 1].as_slice()),
            (pos_rules, &mut pos, "positive", [-1i8, 0, 1].as_slice()),
        ] {
            let is_zero_kind = kind == "zero";
            for r in rules {
                assert!(r.src < n && r.dst < n, "rule indices must be resolved");
                if !deltas.contains(&r.delta) {
                    return Err(ModelError::BadDelta {
                        src: names[r.src].clone(),
                        dst: names[r.dst].clone(),
                        delta: r.delta,
                        kind,
                    });
                }
                if !r.prob.is_positive() || r.prob > Rat::one() {
                    return Err(ModelError::ProbRange {
                        src: names[r.src].clone(),
                        dst: names[r.dst].clone(),
                        prob: r.prob.to_string(),
                    });
                }
                if !seen.insert((r.src, r.delta, r.dst, is_zero_kind)) {
                    return Err(ModelError::DuplicateRule {
                        src: names[r.src].clone(),
                        delta: r.delta,
                        dst: names[r.dst].clone(),
                    });
                }
                if x_min.as_ref().is_none_or(|m| r.prob < *m) {
                    x_min = Some(r.prob.clone());
                }
                target[r.src].push(r);
            }
            for (s, rules) in target.iter().enumerate() {
                if rules.is_empty() {
                    return Err(ModelError::MissingRule { state: names[s].clone(), kind });
                }
                let sum: Rat = rules.iter().map(|r| r.prob.clone()).sum();
                if sum != Rat::one() {
                    return Err(ModelError::DistributionSum {
                        state: names[s].clone(),
                        kind,
                        sum: sum.to_string(),
                    });
                }
            }
        }
        for bucket in zero.iter_mut().chain(pos.iter_mut()) {
            bucket.sort_by_key(|r| (r.dst, r.delta));
        }
        Ok(Poc { names, index, zero, pos, labels, x_min: x_min.expect("at least one rule") })
    }

    pub fn n_states(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, state: usize) -> &str {
        &self.names[state]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Zero rules of `state`, sorted by destination.
    pub fn zero_rules(&self, state: usize) -> &[Rule] {
        &self.zero[state]
    }

    /// Positive rules of `state`, sorted by destination.
    pub fn pos_rules(&self, state: usize) -> &[Rule] {
        &self.pos[state]
    }

    pub fn all_zero_rules(&self) -> impl Iterator<Item = &Rule> {
        self.zero.iter().flatten()
    }

    pub fn all_pos_rules(&self) -> impl Iterator<Item = &Rule> {
        self.pos.iter().flatten()
    }

    /// Smallest probability appearing on any rule.
    pub fn x_min(&self) -> &Rat {
        &self.x_min
    }

    /// Explicit label pair of a state, if the model carries one.
    pub fn label(&self, state: usize) -> Option<&(String, String)> {
        self.labels[state].as_ref()
    }

    pub fn labels(&self) -> &[Option<(String, String)>] {
        &self.labels
    }

    /// One-step distribution of the induced chain from configuration `c`.
    /// Zero rules fire at counter zero, positive rules above; the result sums
    /// to exactly 1.
    pub fn step_distribution(&self, c: Config) -> Vec<(Config, Rat)> {
        let rules = if c.counter == 0 { &self.zero[c.state] } else { &self.pos[c.state] };
        rules
            .iter()
            .map(|r| {
                let counter = c.counter.checked_add_signed(r.delta as i64).expect("counter range");
                (Config { state: r.dst, counter }, r.prob.clone())
            })
            .collect()
    }

    /// The letters runs emit: an explicit label pair where given, otherwise
    /// `name@0` / `name@1` for the zero and positive readings of a state.
    pub fn valuation(&self) -> Valuation {
        let mut zero = Vec::with_capacity(self.names.len());
        let mut pos = Vec::with_capacity(self.names.len());
        for (i, name) in self.names.iter().enumerate() {
            match &self.labels[i] {
                Some((z, p)) => {
                    zero.push(z.clone());
                    pos.push(p.clone());
                }
                None => {
                    zero.push(format!("{name}@0"));
                    pos.push(format!("{name}@1"));
                }
            }
        }
        Valuation { zero, pos }
    }
}

/// Assignment of letters to configurations. The letter depends only on the
/// state and on whether the counter is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Valuation {
    zero: Vec<String>,
    pos: Vec<String>,
}

impl Valuation {
    pub fn new(zero: Vec<String>, pos: Vec<String>) -> Valuation {
        assert_eq!(zero.len(), pos.len());
        Valuation { zero, pos }
    }

    pub fn letter(&self, state: usize, positive: bool) -> &str {
        if positive {
            &self.pos[state]
        } else {
            &self.zero[state]
        }
    }

    pub fn letters(&self) -> BTreeSet<&str> {
        self.zero.iter().chain(self.pos.iter()).map(|s| s.as_str()).collect()
    }
}

/// Deterministic Rabin automaton over a finite alphabet of letters. A run is
/// accepting iff for some pair `(E, F)` it visits `E` finitely often and `F`
/// infinitely often.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dra {
    names: Vec<String>,
    index: HashMap<String, usize>,
    alphabet: Vec<String>,
    alpha_index: HashMap<String, usize>,
    init: usize,
    /// `trans[state][letter]` is total: the automaton is complete.
    trans: Vec<Vec<usize>>,
    pairs: Vec<(BTreeSet<usize>, BTreeSet<usize>)>,
}

impl Dra {
    pub fn new(
        names: Vec<String>,
        alphabet: Vec<String>,
        init: usize,
        trans: Vec<Vec<usize>>,
        pairs: Vec<(BTreeSet<usize>, BTreeSet<usize>)>,
    ) -> Dra {
        let index = names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let alpha_index = alphabet.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        assert!(init < names.len());
        assert_eq!(trans.len(), names.len());
        assert!(trans.iter().all(|row| row.len() == alphabet.len()));
        assert!(!pairs.is_empty(), "a Rabin automaton needs at least one pair");
        Dra { names, index, alphabet, alpha_index, init, trans, pairs }
    }

    pub fn n_states(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, state: usize) -> &str {
        &self.names[state]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn letter_index(&self, letter: &str) -> Option<usize> {
        self.alpha_index.get(letter).copied()
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn step(&self, state: usize, letter: usize) -> usize {
        self.trans[state][letter]
    }

    pub fn pairs(&self) -> &[(BTreeSet<usize>, BTreeSet<usize>)] {
        &self.pairs
    }
}

/// The AND-OR tree evaluation model: six states simulating depth-first
/// evaluation of a random AND-OR tree. `z` is the probability that a leaf
/// reads 1, `y` the probability that a node is a leaf, `x_a`/`x_o` the
/// short-circuit probabilities of AND and OR nodes. All parameters must lie
/// strictly between 0 and 1; rules that would get probability 0 are dropped.
pub fn and_or_model(z: &Rat, y: &Rat, x_a: &Rat, x_o: &Rat) -> Result<Poc, ModelError> {
    for (name, v) in [("z", z), ("y", y), ("x_a", x_a), ("x_o", x_o)] {
        if !v.is_positive() || *v >= Rat::one() {
            return Err(ModelError::ParamRange { name, value: v.to_string() });
        }
    }
    let names: Vec<String> =
        ["and_init", "and_ret1", "and_ret0", "or_init", "or_ret1", "or_ret0"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    let idx = |s: &str| names.iter().position(|n| n == s).unwrap();
    let (ai, ar1, ar0) = (idx("and_init"), idx("and_ret1"), idx("and_ret0"));
    let (oi, or1, or0) = (idx("or_init"), idx("or_ret1"), idx("or_ret0"));
    let one = Rat::one();
    let mut pos = Vec::new();
    let mut push = |src: usize, delta: i8, dst: usize, prob: Rat| {
        if prob.is_positive() {
            pos.push(Rule { src, delta, dst, prob });
        }
    };
    // AND node: either a leaf (value z -> ret1, else ret0) or an inner node
    // descending into an OR child.
    push(ai, -1, or1, y * z);
    push(ai, -1, or0, y * (&one - z));
    push(ai, 1, oi, &one - y);
    // Returning 1 to an AND parent: continue with the sibling unless the
    // parent short-circuits.
    push(ar1, 1, oi, &one - x_a);
    push(ar1, -1, or1, x_a.clone());
    // Returning 0 to an AND parent short-circuits it.
    push(ar0, -1, or0, one.clone());
    // OR node, symmetric.
    push(oi, -1, ar1, y * z);
    push(oi, -1, ar0, y * (&one - z));
    push(oi, 1, ai, &one - y);
    push(or0, 1, ai, &one - x_o);
    push(or0, -1, ar0, x_o.clone());
    push(or1, -1, ar1, one.clone());
    let zero = (0..names.len())
        .map(|s| Rule { src: s, delta: 0, dst: s, prob: Rat::one() })
        .collect();
    let labels = vec![None; names.len()];
    Poc::new(names, zero, pos, labels)
}

/// Canonical text rendering; `parse_poc(render_poc(m))` reproduces `m`.
pub fn render_poc(m: &Poc) -> String {
    let mut out = String::from("poc v1\n");
    for name in m.names() {
        let _ = writeln!(out, "state {name}");
    }
    for s in 0..m.n_states() {
        for r in m.zero_rules(s) {
            let _ = writeln!(out, "zero {} {} {} {}", m.name(r.src), r.delta, m.name(r.dst), r.prob);
        }
    }
    for s in 0..m.n_states() {
        for r in m.pos_rules(s) {
            let _ = writeln!(out, "pos {} {} {} {}", m.name(r.src), r.delta, m.name(r.dst), r.prob);
        }
    }
    for (s, label) in m.labels().iter().enumerate() {
        if let Some((z, p)) = label {
            let _ = writeln!(out, "label {} zero={} pos={}", m.name(s), z, p);
        }
    }
    out
}

/// A one-state random walk: step down with probability `down`, up with
/// `1 - down`, and restart via a zero self-loop. The workhorse of the
/// closed-form test suite.
pub fn walk_model(down: &Rat) -> Result<Poc, ModelError> {
    let up = Rat::one() - down;
    let mut pos = vec![Rule { src: 0, delta: -1, dst: 0, prob: down.clone() }];
    if up.is_positive() {
        pos.push(Rule { src: 0, delta: 1, dst: 0, prob: up });
    }
    Poc::new(
        vec!["p".into()],
        vec![Rule { src: 0, delta: 0, dst: 0, prob: Rat::one() }],
        pos,
        vec![None],
    )
}
