//! Omega-regular analysis: product construction, divergence, and the
//! acceptance-probability reduction to a finite chain.
//!
//! The pipeline for "probability that a run's letter sequence is accepted
//! by a deterministic Rabin automaton":
//!
//! 1. Synchronize the model with the automaton into a product model whose
//!    Rabin pairs are lifted from the automaton. Letters depend only on the
//!    control state and on whether the counter is positive.
//! 2. Split the diverging mass. A run that never drains its counter settles
//!    into one bottom component of the product's underlying chain and visits
//!    all of its states infinitely often, so the component alone decides
//!    acceptance (consistent = some pair accepts it). Freezing the positive
//!    rules of the inconsistent components (forced decrement) leaves a model
//!    whose diverging runs are exactly the accepted diverging runs; freezing
//!    the consistent ones isolates the rejected diverging mass.
//! 3. Build a finite chain over product states at counter values {0, 1}
//!    plus absorbing `acc`/`rej` sinks carrying those two diverging masses;
//!    termination probabilities wire counter-1 states to counter-0 states.
//!    The acceptance probability is the probability of reaching a good
//!    bottom component ({acc}, or a component whose control-state set
//!    satisfies some Rabin pair).
//!
//! Edge existence in the chain is decided exactly (saturation, trend signs,
//! divergence witnesses), so the qualitative classification (probability
//! exactly 0 or exactly 1) is immune to rounding; only in-between values
//! are numeric.

use crate::bounds;
use crate::chain;
use crate::graph;
use crate::model::{Config, Dra, ModelError, Poc, Rule, Valuation};
use crate::newton;
use crate::numeric::{log2_rat, rat, rat_of_f64, rat_pow, rat_to_f64, Rat};
use crate::reach::{self, PAutomaton};
use num_traits::{One, Zero};
use std::collections::{BTreeSet, HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OmegaError {
    #[error("valuation letter {0:?} is not in the automaton alphabet")]
    AlphabetMismatch(String),
    #[error("product construction produced an invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("start counter {0} unsupported; acceptance analysis starts at counter 0 or 1")]
    UnsupportedStart(u64),
    #[error("{what} lower bound is 2^{log2:.1}, too small for the numeric backend")]
    PrecisionInfeasible { what: &'static str, log2: f64 },
    #[error("adaptive refinement did not stabilize: last change {last_change:e}")]
    NotStabilized { last_change: f64 },
    #[error("no witness path from state {p} to diverger {q} within the doubled counter cap")]
    NoWitnessPath { p: usize, q: usize },
}

/// A model together with Rabin pairs over its control states.
#[derive(Debug, Clone)]
pub struct RabinPoc {
    pub poc: Poc,
    pub pairs: Vec<(BTreeSet<usize>, BTreeSet<usize>)>,
}

impl RabinPoc {
    pub fn new(poc: Poc, pairs: Vec<(BTreeSet<usize>, BTreeSet<usize>)>) -> RabinPoc {
        assert!(!pairs.is_empty(), "at least one Rabin pair required");
        let n = poc.n_states();
        for (e, f) in &pairs {
            assert!(e.iter().chain(f).all(|&s| s < n), "pair member out of range");
        }
        RabinPoc { poc, pairs }
    }
}

/// Product of a model and an automaton; state `(p, r)` has index
/// `p * n_dra + r`.
#[derive(Debug, Clone)]
pub struct Product {
    pub rp: RabinPoc,
    pub n_dra: usize,
    pub init_dra: usize,
}

impl Product {
    pub fn state(&self, p: usize, r: usize) -> usize {
        p * self.n_dra + r
    }

    /// Product state a run from `p` starts in.
    pub fn initial(&self, p: usize) -> usize {
        self.state(p, self.init_dra)
    }
}

/// Synchronize the model with the automaton. The automaton consumes the
/// letter of the configuration being left, so a product step mirrors one
/// model step and one automaton step.
pub fn product(m: &Poc, val: &Valuation, d: &Dra) -> Result<Product, OmegaError> {
    let nr = d.n_states();
    let n = m.n_states();
    let letter_of = |p: usize, positive: bool| -> Result<usize, OmegaError> {
        let l = val.letter(p, positive);
        d.letter_index(l).ok_or_else(|| OmegaError::AlphabetMismatch(l.to_string()))
    };
    let mut names = Vec::with_capacity(n * nr);
    for p in 0..n {
        for r in 0..nr {
            names.push(format!("{}__{}", m.name(p), d.name(r)));
        }
    }
    let mut zero_rules = Vec::new();
    let mut pos_rules = Vec::new();
    for p in 0..n {
        let l0 = letter_of(p, false)?;
        let l1 = letter_of(p, true)?;
        for r in 0..nr {
            let src = p * nr + r;
            let r0 = d.step(r, l0);
            for rule in m.zero_rules(p) {
                zero_rules.push(Rule {
                    src,
                    delta: rule.delta,
                    dst: rule.dst * nr + r0,
                    prob: rule.prob.clone(),
                });
            }
            let r1 = d.step(r, l1);
            for rule in m.pos_rules(p) {
                pos_rules.push(Rule {
                    src,
                    delta: rule.delta,
                    dst: rule.dst * nr + r1,
                    prob: rule.prob.clone(),
                });
            }
        }
    }
    let poc = Poc::new(names, zero_rules, pos_rules, vec![None; n * nr])?;
    let pairs = d
        .pairs()
        .iter()
        .map(|(e, f)| {
            let lift = |set: &BTreeSet<usize>| -> BTreeSet<usize> {
                (0..n).flat_map(|p| set.iter().map(move |&r| p * nr + r)).collect()
            };
            (lift(e), lift(f))
        })
        .collect();
    Ok(Product { rp: RabinPoc::new(poc, pairs), n_dra: nr, init_dra: d.init() })
}

/// Per-component acceptance flag of the bottom components.
#[derive(Debug, Clone)]
pub struct ConsistencyPartition {
    pub scc: chain::SccDecomposition,
    /// Aligned with `scc.components`: Some(flag) for bottom components.
    pub consistent: Vec<Option<bool>>,
}

/// A bottom component is consistent iff some Rabin pair accepts a run that
/// visits exactly its states infinitely often.
pub fn consistency_partition(rp: &RabinPoc) -> ConsistencyPartition {
    let ch = chain::underlying_chain(&rp.poc);
    let scc = chain::scc_decompose(&ch);
    let consistent = scc
        .components
        .iter()
        .zip(&scc.is_bottom)
        .map(|(comp, &bottom)| {
            if !bottom {
                return None;
            }
            Some(rp.pairs.iter().any(|(e, f)| {
                comp.iter().all(|s| !e.contains(s)) && comp.iter().any(|s| f.contains(s))
            }))
        })
        .collect();
    ConsistencyPartition { scc, consistent }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consistency {
    Consistent,
    Inconsistent,
}

/// Replace every positive rule of each bottom component with the given flag
/// by a forced decrement self-loop, so those components stop diverging.
/// Freezing the inconsistent components keeps exactly the accepted diverging
/// mass; freezing the consistent ones keeps the rejected mass.
pub fn freeze(rp: &RabinPoc, which: Consistency) -> Poc {
    let part = consistency_partition(rp);
    let target = which == Consistency::Consistent;
    let mut frozen = vec![false; rp.poc.n_states()];
    for (comp, flag) in part.scc.components.iter().zip(&part.consistent) {
        if *flag == Some(target) {
            for &s in comp {
                frozen[s] = true;
            }
        }
    }
    let mut pos_rules = Vec::new();
    for s in 0..rp.poc.n_states() {
        if frozen[s] {
            pos_rules.push(Rule { src: s, delta: -1, dst: s, prob: Rat::one() });
        } else {
            pos_rules.extend(rp.poc.pos_rules(s).iter().cloned());
        }
    }
    let zero_rules = rp.poc.all_zero_rules().cloned().collect();
    Poc::new(
        rp.poc.names().to_vec(),
        zero_rules,
        pos_rules,
        rp.poc.labels().to_vec(),
    )
    .expect("freezing preserves model validity")
}

/// How a state was certified to diverge with positive probability.
#[derive(Debug, Clone, PartialEq)]
pub enum DivergenceWitness {
    /// A state that cannot drain its counter at all is reachable at a
    /// positive counter via a path of `path_len` rules.
    SureDiverger { q: usize, path_len: u64 },
    /// The maximal-potential state of a positive-trend bottom component is
    /// reachable at a positive counter.
    PositiveTrendBscc { q: usize, path_len: u64, trend: Rat, span: Rat },
}

#[derive(Debug, Clone)]
pub struct DivergenceInfo {
    pub positive: bool,
    pub witness: Option<DivergenceWitness>,
    /// Certified lower bound on the divergence probability when positive.
    pub lower_bound: Option<Rat>,
}

enum CandidateKind {
    Sure,
    Trend { trend: Rat, span: Rat, factor: Rat },
}

struct Candidate {
    q: usize,
    kind: CandidateKind,
}

fn witness_candidates(m: &Poc) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = reach::sure_divergers(m)
        .into_iter()
        .map(|q| Candidate { q, kind: CandidateKind::Sure })
        .collect();
    let ch = chain::underlying_chain(m);
    let scc = chain::scc_decompose(&ch);
    for analysis in chain::bottom_analyses(&ch, &scc).expect("bottom components analyzable") {
        if analysis.trend > Rat::zero() {
            let q = analysis.max_potential_state();
            let factor =
                bounds::gap_bound(&analysis.trend, &analysis.span).expect("positive trend");
            out.push(Candidate {
                q,
                kind: CandidateKind::Trend {
                    trend: analysis.trend.clone(),
                    span: analysis.span.clone(),
                    factor,
                },
            });
        }
    }
    out
}

/// Shortest honest-path length from `p(1)` to each state at any positive
/// counter, capped: counters stay within `cap`.
fn honest_distances(m: &Poc, p: usize, cap: u64) -> Vec<Option<u64>> {
    let n = m.n_states();
    let mut dist: Vec<Option<u64>> = vec![None; n];
    let mut seen = vec![false; n * (cap as usize + 1)];
    let mut queue = VecDeque::new();
    let start = Config { state: p, counter: 1 };
    seen[p * (cap as usize + 1) + 1] = true;
    dist[p] = Some(0);
    queue.push_back((start, 0u64));
    while let Some((c, d)) = queue.pop_front() {
        for r in m.pos_rules(c.state) {
            let counter = c.counter as i64 + r.delta as i64;
            if counter < 1 || counter as u64 > cap {
                continue;
            }
            let idx = r.dst * (cap as usize + 1) + counter as usize;
            if seen[idx] {
                continue;
            }
            seen[idx] = true;
            if dist[r.dst].is_none() {
                dist[r.dst] = Some(d + 1);
            }
            queue.push_back((Config { state: r.dst, counter: counter as u64 }, d + 1));
        }
    }
    dist
}

/// Divergence certificates for every control state.
pub fn divergence_all(m: &Poc) -> Result<Vec<DivergenceInfo>, OmegaError> {
    let n = m.n_states();
    let candidates = witness_candidates(m);
    if candidates.is_empty() {
        return Ok(vec![
            DivergenceInfo { positive: false, witness: None, lower_bound: None };
            n
        ]);
    }
    let cap = (n as u64) * (n as u64 + 2) + 1;
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let post = reach::post_star(
            m,
            &PAutomaton::single_config(n, Config { state: p, counter: 1 }),
        );
        let reachable: Vec<&Candidate> =
            candidates.iter().filter(|c| post.accepts_some(c.q, 1)).collect();
        if reachable.is_empty() {
            out.push(DivergenceInfo { positive: false, witness: None, lower_bound: None });
            continue;
        }
        let mut dist = honest_distances(m, p, cap);
        if reachable.iter().any(|c| dist[c.q].is_none()) {
            // The pumping-region cap is expected to suffice; one retry with
            // doubled headroom covers slack in that expectation.
            dist = honest_distances(m, p, 2 * cap);
        }
        let mut best: Option<(Rat, usize, usize, DivergenceWitness)> = None;
        for c in &reachable {
            let len = dist[c.q].ok_or(OmegaError::NoWitnessPath { p, q: c.q })?;
            let path_prob = rat_pow(
                m.x_min(),
                u32::try_from(len).expect("path length fits u32"),
            );
            let (bound, rank, witness) = match &c.kind {
                CandidateKind::Sure => {
                    (path_prob, 0usize, DivergenceWitness::SureDiverger { q: c.q, path_len: len })
                }
                CandidateKind::Trend { trend, span, factor } => (
                    path_prob * factor,
                    1,
                    DivergenceWitness::PositiveTrendBscc {
                        q: c.q,
                        path_len: len,
                        trend: trend.clone(),
                        span: span.clone(),
                    },
                ),
            };
            let better = match &best {
                None => true,
                Some((b_bound, b_rank, b_q, _)) => {
                    bound > *b_bound
                        || (bound == *b_bound && (rank, c.q) < (*b_rank, *b_q))
                }
            };
            if better {
                best = Some((bound, rank, c.q, witness));
            }
        }
        let (bound, _, _, witness) = best.expect("nonempty candidates");
        out.push(DivergenceInfo {
            positive: true,
            witness: Some(witness),
            lower_bound: Some(bound),
        });
    }
    Ok(out)
}

pub fn divergence(m: &Poc, p: usize) -> Result<DivergenceInfo, OmegaError> {
    Ok(divergence_all(m)?.swap_remove(p))
}

/// Divergence probabilities for all states, to relative error eps. States
/// that cannot diverge report exactly zero.
pub fn nonterm_probs(m: &Poc, eps: &Rat) -> Result<Vec<f64>, OmegaError> {
    let infos = divergence_all(m)?;
    nonterm_from_infos(m, &infos, eps)
}

fn nonterm_from_infos(
    m: &Poc,
    infos: &[DivergenceInfo],
    eps: &Rat,
) -> Result<Vec<f64>, OmegaError> {
    assert!(eps > &Rat::zero() && eps < &Rat::one());
    let lb_min = infos.iter().filter_map(|i| i.lower_bound.as_ref()).min();
    let Some(lb_min) = lb_min else {
        return Ok(vec![0.0; m.n_states()]);
    };
    let lb_f64 = rat_to_f64(lb_min);
    if lb_f64 <= 0.0 {
        return Err(OmegaError::PrecisionInfeasible {
            what: "divergence probability",
            log2: log2_rat(lb_min),
        });
    }
    // Absolute error eps * lb / 2 across the termination sum keeps the
    // relative error of 1 - sum within eps.
    let rel = (rat_to_f64(eps) * lb_f64 / (2.0 * m.n_states() as f64)).max(1e-300);
    let sol = newton::solve_termination(m, rel);
    Ok(infos
        .iter()
        .enumerate()
        .map(|(p, info)| {
            if info.positive {
                (1.0 - sol.termination_total(p)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect())
}

pub fn nonterm_prob(m: &Poc, p: usize, eps: &Rat) -> Result<f64, OmegaError> {
    Ok(nonterm_probs(m, eps)?[p])
}

/// Exact-rational variant for the rigorous mode.
fn nonterm_probs_exact(
    m: &Poc,
    infos: &[DivergenceInfo],
    eps: &Rat,
) -> Result<Vec<Rat>, OmegaError> {
    let lb_min = infos.iter().filter_map(|i| i.lower_bound.as_ref()).min();
    let Some(lb_min) = lb_min else {
        return Ok(vec![Rat::zero(); m.n_states()]);
    };
    let rel = eps * lb_min / rat(2 * m.n_states() as i64, 1);
    let sol = newton::solve_termination_exact(m, &rel);
    Ok(infos
        .iter()
        .enumerate()
        .map(|(p, info)| {
            if info.positive {
                let v = Rat::one() - sol.termination_total_exact(p);
                if v < Rat::zero() {
                    Rat::zero()
                } else {
                    v
                }
            } else {
                Rat::zero()
            }
        })
        .collect())
}

/// Finite reduction chain. Chain state `2p` is product state `p` at counter
/// 0, `2p + 1` is `p` at counter 1 (standing for any positive counter);
/// the last two states are the absorbing `acc`/`rej` sinks.
#[derive(Debug, Clone)]
pub struct ChainG {
    pub n_product: usize,
    pub acc: usize,
    pub rej: usize,
    /// Qualitative transitions, exact.
    pub edges: Vec<Vec<usize>>,
    /// Weights aligned with `edges`, within the build's relative error.
    pub weights: Vec<Vec<f64>>,
    /// Chain states lying in a good bottom component ({acc} or a component
    /// whose control states satisfy some Rabin pair).
    pub good: Vec<bool>,
    /// Cannot reach a good component at all.
    pub g0: Vec<bool>,
    /// Reach a good component with probability one.
    pub g1: Vec<bool>,
}

pub fn chain_state(p: usize, positive: bool) -> usize {
    2 * p + usize::from(positive)
}

struct ChainSkeleton {
    edges: Vec<Vec<usize>>,
    good: Vec<bool>,
    g0: Vec<bool>,
    g1: Vec<bool>,
    cons_model: Poc,
    inco_model: Poc,
    cons_infos: Vec<DivergenceInfo>,
    inco_infos: Vec<DivergenceInfo>,
}

fn chain_skeleton(rp: &RabinPoc) -> Result<ChainSkeleton, OmegaError> {
    let n = rp.poc.n_states();
    let acc = 2 * n;
    let rej = 2 * n + 1;
    let tpos = reach::positive_pairs(&rp.poc);
    let cons_model = freeze(rp, Consistency::Inconsistent);
    let inco_model = freeze(rp, Consistency::Consistent);
    let cons_infos = divergence_all(&cons_model)?;
    let inco_infos = divergence_all(&inco_model)?;

    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); 2 * n + 2];
    for p in 0..n {
        for r in rp.poc.zero_rules(p) {
            edges[chain_state(p, false)].push(chain_state(r.dst, r.delta == 1));
        }
    }
    for &(p, q) in &tpos {
        edges[chain_state(p, true)].push(chain_state(q, false));
    }
    for p in 0..n {
        if cons_infos[p].positive {
            edges[chain_state(p, true)].push(acc);
        }
        if inco_infos[p].positive {
            edges[chain_state(p, true)].push(rej);
        }
    }
    edges[acc].push(acc);
    edges[rej].push(rej);
    for row in &mut edges {
        row.sort_unstable();
        row.dedup();
    }

    // Good bottom components of the qualitative graph.
    let sccs = graph::sccs(&edges);
    let mut good = vec![false; 2 * n + 2];
    for comp in &sccs {
        let bottom = comp.iter().all(|&s| edges[s].iter().all(|t| comp.contains(t)));
        if !bottom {
            continue;
        }
        let is_good = if comp == &vec![acc] {
            true
        } else if comp.contains(&rej) {
            false
        } else {
            let control: BTreeSet<usize> = comp.iter().map(|&s| s / 2).collect();
            rp.pairs.iter().any(|(e, f)| {
                control.iter().all(|s| !e.contains(s)) && control.iter().any(|s| f.contains(s))
            })
        };
        if is_good {
            for &s in comp {
                good[s] = true;
            }
        }
    }

    let rev = graph::transpose(&edges);
    let good_states: Vec<usize> = (0..edges.len()).filter(|&s| good[s]).collect();
    let can_reach_good = graph::reachable(&rev, good_states);
    let g0: Vec<bool> = can_reach_good.iter().map(|r| !r).collect();
    let g0_states: Vec<usize> = (0..edges.len()).filter(|&s| g0[s]).collect();
    let can_reach_g0 = graph::reachable(&rev, g0_states);
    let g1: Vec<bool> = can_reach_g0.iter().map(|r| !r).collect();

    Ok(ChainSkeleton {
        edges,
        good,
        g0,
        g1,
        cons_model,
        inco_model,
        cons_infos,
        inco_infos,
    })
}

fn chain_weights(
    rp: &RabinPoc,
    sk: &ChainSkeleton,
    eps: &Rat,
) -> Result<Vec<Vec<f64>>, OmegaError> {
    let n = rp.poc.n_states();
    let term = newton::solve_termination(&rp.poc, rat_to_f64(eps).max(1e-300));
    let acc_probs = nonterm_from_infos(&sk.cons_model, &sk.cons_infos, eps)?;
    let rej_probs = nonterm_from_infos(&sk.inco_model, &sk.inco_infos, eps)?;
    let acc = 2 * n;
    let rej = 2 * n + 1;
    let weights = sk
        .edges
        .iter()
        .enumerate()
        .map(|(s, row)| {
            row.iter()
                .map(|&t| {
                    if s == acc || s == rej {
                        1.0
                    } else if s % 2 == 0 {
                        let p = s / 2;
                        // Counter-0 rows copy the zero-rule distribution.
                        rp.poc
                            .zero_rules(p)
                            .iter()
                            .filter(|r| chain_state(r.dst, r.delta == 1) == t)
                            .map(|r| rat_to_f64(&r.prob))
                            .sum()
                    } else {
                        let p = s / 2;
                        if t == acc {
                            acc_probs[p]
                        } else if t == rej {
                            rej_probs[p]
                        } else {
                            term.prob(p, t / 2)
                        }
                    }
                })
                .collect()
        })
        .collect();
    Ok(weights)
}

/// Build the chain with weights accurate to relative error eps.
pub fn build_chain_g(rp: &RabinPoc, eps: &Rat) -> Result<ChainG, OmegaError> {
    let sk = chain_skeleton(rp)?;
    let weights = chain_weights(rp, &sk, eps)?;
    Ok(ChainG {
        n_product: rp.poc.n_states(),
        acc: 2 * rp.poc.n_states(),
        rej: 2 * rp.poc.n_states() + 1,
        edges: sk.edges,
        weights,
        good: sk.good,
        g0: sk.g0,
        g1: sk.g1,
    })
}

/// Probability, per chain state, of reaching a good bottom component.
/// States classified g0/g1 report exact 0/1; in-between states solve the
/// linear reachability system (dense factorization, one refinement pass).
pub fn good_bscc_reach(g: &ChainG) -> Vec<f64> {
    let n = g.edges.len();
    let between: Vec<usize> = (0..n).filter(|&s| !g.g0[s] && !g.g1[s]).collect();
    let mut reach: Vec<f64> = (0..n).map(|s| if g.g1[s] { 1.0 } else { 0.0 }).collect();
    if between.is_empty() {
        return reach;
    }
    let index: HashMap<usize, usize> = between.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let nb = between.len();
    let mut mat = vec![vec![0.0; nb]; nb];
    let mut rhs = vec![0.0; nb];
    for (i, &s) in between.iter().enumerate() {
        mat[i][i] = 1.0;
        for (&t, &w) in g.edges[s].iter().zip(&g.weights[s]) {
            if g.g1[t] {
                rhs[i] += w;
            } else if let Some(&j) = index.get(&t) {
                mat[i][j] -= w;
            }
        }
    }
    let sol = crate::linalg::solve_f64(&mat, &rhs)
        .expect("reachability system of a substochastic chain is nonsingular");
    for (i, &s) in between.iter().enumerate() {
        reach[s] = sol[i].clamp(0.0, 1.0);
    }
    reach
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    Adaptive,
    Rigorous,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub probability: f64,
    /// Exact when the qualitative classification already decides the value.
    pub qualitative: bool,
    pub rel_err: f64,
    pub product_states: usize,
}

/// Probability that a run from `start` produces a letter sequence the
/// automaton accepts. The start counter must be 0 or 1 (a positive counter
/// behaves like 1 for the letter valuation; the chain reduction models
/// exactly these two levels).
pub fn model_check_from(
    m: &Poc,
    val: &Valuation,
    d: &Dra,
    start: Config,
    eps: &Rat,
    mode: CheckMode,
) -> Result<CheckResult, OmegaError> {
    assert!(eps > &Rat::zero() && eps < &Rat::one());
    if start.counter > 1 {
        return Err(OmegaError::UnsupportedStart(start.counter));
    }
    let prod = product(m, val, d)?;
    let rp = &prod.rp;
    let s0 = chain_state(prod.initial(start.state), start.counter == 1);
    let sk = chain_skeleton(rp)?;
    let product_states = rp.poc.n_states();
    if sk.g1[s0] {
        return Ok(CheckResult {
            probability: 1.0,
            qualitative: true,
            rel_err: 0.0,
            product_states,
        });
    }
    if sk.g0[s0] {
        return Ok(CheckResult {
            probability: 0.0,
            qualitative: true,
            rel_err: 0.0,
            product_states,
        });
    }
    let assemble = |weights: Vec<Vec<f64>>| ChainG {
        n_product: product_states,
        acc: 2 * product_states,
        rej: 2 * product_states + 1,
        edges: sk.edges.clone(),
        weights,
        good: sk.good.clone(),
        g0: sk.g0.clone(),
        g1: sk.g1.clone(),
    };
    match mode {
        CheckMode::Adaptive => {
            let eps_f = rat_to_f64(eps);
            let mut delta = (eps_f / 8.0).min(1e-6);
            let mut prev: Option<f64> = None;
            loop {
                let weights = chain_weights(rp, &sk, &rat_of_f64(delta))?;
                let v = good_bscc_reach(&assemble(weights))[s0];
                if let Some(pv) = prev {
                    let change = (v - pv).abs();
                    if change <= eps_f / 2.0 * v.max(1e-9) {
                        return Ok(CheckResult {
                            probability: v,
                            qualitative: false,
                            rel_err: eps_f,
                            product_states,
                        });
                    }
                    if delta < 1e-13 {
                        return Err(OmegaError::NotStabilized { last_change: change });
                    }
                }
                prev = Some(v);
                delta /= 256.0;
            }
        }
        CheckMode::Rigorous => {
            let v = rigorous_reach(rp, &sk, s0, eps)?;
            Ok(CheckResult {
                probability: rat_to_f64(&v),
                qualitative: false,
                rel_err: rat_to_f64(eps),
                product_states,
            })
        }
    }
}

/// Probability of acceptance from `p` at counter zero.
pub fn model_check(
    m: &Poc,
    val: &Valuation,
    d: &Dra,
    p: usize,
    eps: &Rat,
    mode: CheckMode,
) -> Result<CheckResult, OmegaError> {
    model_check_from(m, val, d, Config { state: p, counter: 0 }, eps, mode)
}

/// Rigorous path: derive the weight accuracy from the smallest positive
/// weight the chain can carry, build exact weights, solve exactly.
fn rigorous_reach(
    rp: &RabinPoc,
    sk: &ChainSkeleton,
    s0: usize,
    eps: &Rat,
) -> Result<Rat, OmegaError> {
    let n = rp.poc.n_states();
    // Lower bound on every positive chain weight: rule probabilities are at
    // least x_min, termination values at least x_min^(n^3), and the
    // divergence masses at least their certified witnesses.
    let n3 = (n * n * n) as u32;
    let mut r_low = rat_pow(rp.poc.x_min(), n3);
    for info in sk.cons_infos.iter().chain(&sk.inco_infos) {
        if let Some(lb) = &info.lower_bound {
            if *lb < r_low {
                r_low = lb.clone();
            }
        }
    }
    let c = 2 * n as u64;
    let delta = bounds::visiting_delta(eps, &r_low, c).map_err(|_| {
        OmegaError::PrecisionInfeasible { what: "weight budget", log2: log2_rat(&r_low) }
    })?;
    if log2_rat(&delta) < -200.0 {
        return Err(OmegaError::PrecisionInfeasible {
            what: "weight budget",
            log2: log2_rat(&delta),
        });
    }
    let term = newton::solve_termination_exact(&rp.poc, &delta);
    let acc_probs = nonterm_probs_exact(&sk.cons_model, &sk.cons_infos, &delta)?;
    let rej_probs = nonterm_probs_exact(&sk.inco_model, &sk.inco_infos, &delta)?;
    let acc = 2 * n;
    let rej = 2 * n + 1;
    let weight = |s: usize, t: usize| -> Rat {
        if s == acc || s == rej {
            Rat::one()
        } else if s % 2 == 0 {
            let p = s / 2;
            rp.poc
                .zero_rules(p)
                .iter()
                .filter(|r| chain_state(r.dst, r.delta == 1) == t)
                .map(|r| r.prob.clone())
                .sum()
        } else {
            let p = s / 2;
            if t == acc {
                acc_probs[p].clone()
            } else if t == rej {
                rej_probs[p].clone()
            } else {
                term.prob_exact(p, t / 2)
            }
        }
    };
    let between: Vec<usize> =
        (0..sk.edges.len()).filter(|&s| !sk.g0[s] && !sk.g1[s]).collect();
    if sk.g1[s0] {
        return Ok(Rat::one());
    }
    if sk.g0[s0] {
        return Ok(Rat::zero());
    }
    let index: HashMap<usize, usize> = between.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let nb = between.len();
    let mut mat = vec![vec![Rat::zero(); nb]; nb];
    let mut rhs = vec![Rat::zero(); nb];
    for (i, &s) in between.iter().enumerate() {
        mat[i][i] = Rat::one();
        for &t in &sk.edges[s] {
            let w = weight(s, t);
            if sk.g1[t] {
                rhs[i] += w;
            } else if let Some(&j) = index.get(&t) {
                mat[i][j] -= w;
            }
        }
    }
    let sol = crate::linalg::solve_exact(&mat, &rhs)
        .expect("reachability system of a substochastic chain is nonsingular");
    Ok(sol[index[&s0]].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{walk_model, and_or_model};
    use crate::parse;

    fn universal_dra(letters: Vec<String>) -> Dra {
        let n = letters.len();
        Dra::new(
            vec!["q".into()],
            letters,
            0,
            vec![vec![0; n]],
            vec![(BTreeSet::new(), [0].into())],
        )
    }

    fn letters_of(val: &Valuation) -> Vec<String> {
        val.letters().into_iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn universal_property_is_qualitatively_one() {
        let m = walk_model(&rat(2, 5)).unwrap();
        let val = m.valuation();
        let d = universal_dra(letters_of(&val));
        for counter in [0, 1] {
            let r = model_check_from(
                &m,
                &val,
                &d,
                Config { state: 0, counter },
                &rat(1, 1000),
                CheckMode::Adaptive,
            )
            .unwrap();
            assert_eq!(r.probability, 1.0);
            assert!(r.qualitative);
        }
    }

    #[test]
    fn impossible_property_is_qualitatively_zero() {
        let m = walk_model(&rat(2, 5)).unwrap();
        let val = m.valuation();
        let letters = letters_of(&val);
        let n = letters.len();
        // E covers the only automaton state: nothing is accepted.
        let d = Dra::new(
            vec!["q".into()],
            letters,
            0,
            vec![vec![0; n]],
            vec![([0].into(), [0].into())],
        );
        let r = model_check(&m, &val, &d, 0, &rat(1, 1000), CheckMode::Adaptive).unwrap();
        assert_eq!(r.probability, 0.0);
        assert!(r.qualitative);
    }

    #[test]
    fn divergence_certificates_on_walks() {
        // Up-biased walk: positive trend 1/5, span 0, loop witness length 0.
        let m = walk_model(&rat(2, 5)).unwrap();
        let info = divergence(&m, 0).unwrap();
        assert!(info.positive);
        assert_eq!(info.lower_bound, Some(rat(1, 96000)));
        match info.witness {
            Some(DivergenceWitness::PositiveTrendBscc { q: 0, path_len: 0, .. }) => {}
            other => panic!("unexpected witness {other:?}"),
        }
        // Down-biased: terminates almost surely.
        let m = walk_model(&rat(3, 5)).unwrap();
        let info = divergence(&m, 0).unwrap();
        assert!(!info.positive);
        assert_eq!(info.lower_bound, None);
    }

    #[test]
    fn climb_only_model_has_bound_one() {
        let text = "poc v1\nstate u\nzero u 0 u 1\npos u 1 u 1\n";
        let m = parse::parse_poc(text).unwrap();
        let info = divergence(&m, 0).unwrap();
        assert!(info.positive);
        assert_eq!(info.lower_bound, Some(Rat::one()));
        match info.witness {
            Some(DivergenceWitness::SureDiverger { q: 0, path_len: 0 }) => {}
            other => panic!("unexpected witness {other:?}"),
        }
    }

    #[test]
    fn nonterm_matches_gamblers_ruin() {
        let m = walk_model(&rat(2, 5)).unwrap();
        let v = nonterm_prob(&m, 0, &rat(1, 1_000_000)).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-6 / 3.0, "got {v}");
        let m = walk_model(&rat(3, 5)).unwrap();
        assert_eq!(nonterm_prob(&m, 0, &rat(1, 1_000_000)).unwrap(), 0.0);
    }

    #[test]
    fn positive_counter_forever_has_probability_one_third() {
        // Accept runs whose letters are eventually never the zero-counter
        // letter: exactly the diverging runs.
        let m = walk_model(&rat(2, 5)).unwrap();
        let val = m.valuation();
        let l0 = val.letter(0, false).to_string();
        let l1 = val.letter(0, true).to_string();
        let d = Dra::new(
            vec!["hi".into(), "lo".into()],
            vec![l1.clone(), l0.clone()],
            0,
            // state 0 ("hi"): on l1 stay, on l0 go lo; state 1 likewise.
            vec![vec![0, 1], vec![0, 1]],
            vec![([1].into(), [0].into())],
        );
        let r = model_check_from(
            &m,
            &val,
            &d,
            Config { state: 0, counter: 1 },
            &rat(1, 100_000),
            CheckMode::Adaptive,
        )
        .unwrap();
        assert!((r.probability - 1.0 / 3.0).abs() < 1e-4, "got {}", r.probability);
        // Complement within the chain: swap good and bad sinks by the
        // complementary pair structure.
        let d_neg = Dra::new(
            vec!["hi".into(), "lo".into()],
            vec![l1, l0],
            0,
            vec![vec![0, 1], vec![0, 1]],
            // Visit the zero-counter letter infinitely often.
            vec![(BTreeSet::new(), [1].into())],
        );
        let rn = model_check_from(
            &m,
            &val,
            &d_neg,
            Config { state: 0, counter: 1 },
            &rat(1, 100_000),
            CheckMode::Adaptive,
        )
        .unwrap();
        assert!((r.probability + rn.probability - 1.0).abs() < 1e-4);
    }

    #[test]
    fn rigorous_agrees_with_adaptive_on_walks() {
        let m = walk_model(&rat(2, 5)).unwrap();
        let val = m.valuation();
        let l0 = val.letter(0, false).to_string();
        let l1 = val.letter(0, true).to_string();
        let d = Dra::new(
            vec!["hi".into(), "lo".into()],
            vec![l1, l0],
            0,
            vec![vec![0, 1], vec![0, 1]],
            vec![([1].into(), [0].into())],
        );
        let eps = rat(1, 10_000);
        let a = model_check_from(
            &m, &val, &d,
            Config { state: 0, counter: 1 },
            &eps,
            CheckMode::Adaptive,
        )
        .unwrap();
        let r = model_check_from(
            &m, &val, &d,
            Config { state: 0, counter: 1 },
            &eps,
            CheckMode::Rigorous,
        )
        .unwrap();
        assert!((a.probability - r.probability).abs() < 2e-4);
    }

    #[test]
    fn and_or_chain_rows_sum_to_one() {
        let m = and_or_model(&rat(1, 2), &rat(2, 5), &rat(1, 5), &rat(1, 5)).unwrap();
        let val = m.valuation();
        let d = universal_dra(letters_of(&val));
        let prod = product(&m, &val, &d).unwrap();
        let g = build_chain_g(&prod.rp, &rat(1, 1_000_000)).unwrap();
        for p in 0..g.n_product {
            for positive in [false, true] {
                let s = chain_state(p, positive);
                let total: f64 = g.weights[s].iter().sum();
                assert!(
                    (total - 1.0).abs() < 1e-4,
                    "row {p} positive={positive} sums to {total}"
                );
            }
        }
    }
}
