//! The underlying finite chain of a pOC and its per-component numerology.
//!
//! Collapsing the counter of a pOC's positive rules yields a finite Markov
//! chain over the control states: `a[p][q]` sums the probabilities of all
//! positive rules from `p` to `q`, and `s[p]` is the expected one-step
//! counter change in `p`. For each bottom strongly connected component the
//! stationary distribution `alpha`, the trend `t = alpha . s`, and a
//! potential vector `v` with `s + A v = v + t 1` are computed in exact
//! rational arithmetic. The potential turns the counter of a run into a
//! martingale: `counter(i) + v(state(i)) - i t` has one-step drift zero,
//! which is what the tail bounds in [`crate::bounds`] feed on.

use crate::graph;
use crate::linalg::{identity, solve_exact};
use crate::model::{Config, Poc};
use crate::numeric::Rat;
use num_traits::{One, Signed, Zero};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("the given state set is not a bottom strongly connected component")]
    NotBottom,
    #[error("stationary system is singular; the component is not irreducible")]
    Singular,
}

/// Transition matrix and drift vector of the chain of positive steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnderlyingChain {
    a: Vec<Vec<Rat>>,
    s: Vec<Rat>,
    adj: Vec<Vec<usize>>,
}

impl UnderlyingChain {
    pub fn n(&self) -> usize {
        self.s.len()
    }

    /// Row-stochastic transition matrix.
    pub fn a(&self) -> &[Vec<Rat>] {
        &self.a
    }

    /// Expected counter change per state.
    pub fn s(&self) -> &[Rat] {
        &self.s
    }

    /// Successor lists (nonzero structure of `a`).
    pub fn adj(&self) -> &[Vec<usize>] {
        &self.adj
    }
}

/// Strongly connected components of the underlying chain, ordered so that
/// every edge points into the same or a later component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SccDecomposition {
    pub components: Vec<Vec<usize>>,
    pub is_bottom: Vec<bool>,
    pub component_of: Vec<usize>,
}

/// Exact stationary data of one bottom component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BsccAnalysis {
    /// Member states, ascending.
    pub states: Vec<usize>,
    /// Stationary distribution, aligned with `states`, entries positive.
    pub alpha: Vec<Rat>,
    /// Long-run counter drift per step.
    pub trend: Rat,
    /// Potential vector aligned with `states`, normalized to minimum 0.
    pub potential: Vec<Rat>,
    /// Largest potential value (the span, since the minimum is 0).
    pub span: Rat,
}

impl BsccAnalysis {
    pub fn potential_of(&self, state: usize) -> Option<&Rat> {
        self.states.iter().position(|&s| s == state).map(|i| &self.potential[i])
    }

    /// The member with maximal potential; ties resolve to the smallest index.
    pub fn max_potential_state(&self) -> usize {
        let mut best = 0;
        for i in 1..self.states.len() {
            if self.potential[i] > self.potential[best] {
                best = i;
            }
        }
        self.states[best]
    }
}

/// Collapse the counter: sum positive-rule probabilities into a state-level
/// transition matrix and per-state drift.
pub fn underlying_chain(m: &Poc) -> UnderlyingChain {
    let n = m.n_states();
    let mut a = vec![vec![Rat::zero(); n]; n];
    let mut s = vec![Rat::zero(); n];
    for r in m.all_pos_rules() {
        a[r.src][r.dst] = &a[r.src][r.dst] + &r.prob;
        s[r.src] = &s[r.src] + Rat::from_integer(r.delta.into()) * &r.prob;
    }
    let adj = a
        .iter()
        .map(|row| row.iter().enumerate().filter(|(_, p)| !p.is_zero()).map(|(q, _)| q).collect())
        .collect();
    UnderlyingChain { a, s, adj }
}

/// Component structure of the underlying chain.
pub fn scc_decompose(chain: &UnderlyingChain) -> SccDecomposition {
    let components = graph::sccs(&chain.adj);
    let mut component_of = vec![0; chain.n()];
    for (ci, comp) in components.iter().enumerate() {
        for &v in comp {
            component_of[v] = ci;
        }
    }
    let is_bottom = components
        .iter()
        .enumerate()
        .map(|(ci, comp)| {
            comp.iter().all(|&v| chain.adj[v].iter().all(|&w| component_of[w] == ci))
        })
        .collect();
    SccDecomposition { components, is_bottom, component_of }
}

/// Exact stationary distribution, trend, and potential of a bottom component.
pub fn bscc_analysis(chain: &UnderlyingChain, states: &[usize]) -> Result<BsccAnalysis, ChainError> {
    let mut members: Vec<usize> = states.to_vec();
    members.sort_unstable();
    members.dedup();
    if members.is_empty() {
        return Err(ChainError::NotBottom);
    }
    let k = members.len();
    let pos: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    // Bottom: no probability mass leaves the set.
    for &p in &members {
        for &q in &chain.adj[p] {
            if !pos.contains_key(&q) {
                return Err(ChainError::NotBottom);
            }
        }
    }
    let sub = |r: usize, c: usize| chain.a[members[r]][members[c]].clone();
    // Strong connectivity of the induced subgraph.
    let sub_adj: Vec<Vec<usize>> =
        (0..k).map(|r| (0..k).filter(|&c| !sub(r, c).is_zero()).collect()).collect();
    if graph::sccs(&sub_adj).len() != 1 {
        return Err(ChainError::NotBottom);
    }

    // alpha A = alpha, sum alpha = 1: transpose system with the last row
    // replaced by the normalization.
    let mut m = vec![vec![Rat::zero(); k]; k];
    for r in 0..k {
        for c in 0..k {
            m[r][c] = sub(c, r);
        }
        m[r][r] = &m[r][r] - Rat::one();
    }
    for c in 0..k {
        m[k - 1][c] = Rat::one();
    }
    let mut rhs = vec![Rat::zero(); k];
    rhs[k - 1] = Rat::one();
    let alpha = solve_exact(&m, &rhs).ok_or(ChainError::Singular)?;
    // Verify exactly: irreducibility makes the solution unique and positive.
    for r in 0..k {
        if !alpha[r].is_positive() {
            return Err(ChainError::Singular);
        }
        let back: Rat = (0..k).map(|c| &alpha[c] * sub(c, r)).sum();
        if back != alpha[r] {
            return Err(ChainError::Singular);
        }
    }

    let s_sub: Vec<Rat> = members.iter().map(|&p| chain.s[p].clone()).collect();
    let trend: Rat = (0..k).map(|i| &alpha[i] * &s_sub[i]).sum();

    // Potential: v = (I - A + 1 alpha)^{-1} s, then shift so min v = 0.
    // The fundamental-matrix form pins the solution of s + A v = v + t 1.
    let mut fm = identity(k);
    for r in 0..k {
        for c in 0..k {
            fm[r][c] = &fm[r][c] - sub(r, c) + &alpha[c];
        }
    }
    let mut v = solve_exact(&fm, &s_sub).ok_or(ChainError::Singular)?;
    let min = v.iter().min().expect("nonempty").clone();
    for vi in &mut v {
        *vi = &*vi - &min;
    }
    // The defining identity must hold exactly.
    for r in 0..k {
        let av: Rat = (0..k).map(|c| sub(r, c) * &v[c]).sum();
        debug_assert_eq!(&s_sub[r] + av - &v[r], trend, "potential identity violated");
    }
    let span = v.iter().max().expect("nonempty").clone();
    Ok(BsccAnalysis { states: members, alpha, trend, potential: v, span })
}

/// Analyses of all bottom components, in decomposition order.
pub fn bottom_analyses(
    chain: &UnderlyingChain,
    scc: &SccDecomposition,
) -> Result<Vec<BsccAnalysis>, ChainError> {
    scc.components
        .iter()
        .zip(&scc.is_bottom)
        .filter(|(_, &b)| b)
        .map(|(comp, _)| bscc_analysis(chain, comp))
        .collect()
}

/// One-step drift of the counter martingale `counter + v(state) - step t`
/// from configuration `c`, which must have a positive counter and a state
/// inside the analyzed component. Exactly zero by construction; exposed so
/// tests can pin that down on arbitrary models.
pub fn martingale_residual(m: &Poc, b: &BsccAnalysis, c: Config) -> Rat {
    assert!(c.counter > 0, "martingale steps use positive rules");
    let v_src = b.potential_of(c.state).expect("state inside the component");
    let mut acc = -Rat::from_integer(c.counter.into()) - v_src - &b.trend;
    for (succ, prob) in m.step_distribution(c) {
        let v_dst = b.potential_of(succ.state).expect("component is closed");
        acc = acc + prob * (Rat::from_integer(succ.counter.into()) + v_dst);
    }
    acc
}
