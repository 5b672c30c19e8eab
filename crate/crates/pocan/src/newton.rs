//! Termination probabilities as the least solution of a quadratic system.
//!
//! For every pair `(p, q)` with positive termination probability there is a
//! variable `x[p,q]` = probability that a run from `p(1)` first hits counter
//! zero in state `q`. The defining equations follow the first step from
//! `p(1)`: a down rule ends the run, a stay rule keeps the counter at one,
//! and an up rule must pay the counter back in two stages through some
//! intermediate state:
//!
//! ```text
//! x[p,q] = sum P(p,-1,q)
//!        + sum P(p,0,t)  * x[t,q]
//!        + sum P(p,+1,t) * x[t,r] * x[r,q]   over all r
//! ```
//!
//! Pairs with zero probability are dropped up front (see [`crate::reach`]),
//! which makes the restricted system "clean": its least solution is strictly
//! positive and Newton iteration from zero converges to it from below.
//!
//! Solving walks the dependency components in topological order and runs a
//! damped-free Newton step per component: solve `(I - J) d = F(x) - x`,
//! advance `x += d`, falling back to plain fixed-point iteration whenever
//! the linear system is singular. The default backend works in f64 and
//! reports an exact-rational residual of whatever it returns; the exact
//! backend keeps all iterates rational, rounding denominators down to 256
//! bits between steps so sizes stay bounded.

use crate::linalg::{self, Lu};
use crate::model::Poc;
use crate::numeric::{rat_of_f64, rat_to_f64, round_down_denom, Rat};
use crate::{graph, reach};
use num_traits::{One, Signed, Zero};
use std::collections::HashMap;

/// One right-hand side: constant + linear + bilinear terms over variables.
#[derive(Debug, Clone)]
pub struct Equation {
    pub constant: Rat,
    pub linear: Vec<(usize, Rat)>,
    pub bilinear: Vec<(usize, usize, Rat)>,
}

#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    /// Variable i is the pair `(p, q)`.
    pub pairs: Vec<(usize, usize)>,
    pub var_index: HashMap<(usize, usize), usize>,
    pub equations: Vec<Equation>,
    /// Dependency components in solve order: every variable an equation
    /// mentions lives in the same or an earlier component.
    pub dependency_sccs: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Float64,
    ExactRational,
}

#[derive(Debug, Clone)]
pub struct TermSolution {
    pub pairs: Vec<(usize, usize)>,
    pub var_index: HashMap<(usize, usize), usize>,
    pub values: Vec<f64>,
    /// Present iff the exact backend produced the values.
    pub values_exact: Option<Vec<Rat>>,
    /// Exact max-norm residual `|F(x) - x|` of the reported values.
    pub residual: Rat,
    pub backend: Backend,
    pub rel_err: f64,
    pub iterations: usize,
    pub converged: bool,
    pub used_kleene_fallback: bool,
}

impl TermSolution {
    /// Termination probability of the pair, zero when the pair is not in the
    /// positive support.
    pub fn prob(&self, p: usize, q: usize) -> f64 {
        self.var_index.get(&(p, q)).map_or(0.0, |&i| self.values[i])
    }

    pub fn prob_exact(&self, p: usize, q: usize) -> Rat {
        match (&self.values_exact, self.var_index.get(&(p, q))) {
            (Some(vals), Some(&i)) => vals[i].clone(),
            (None, Some(&i)) => rat_of_f64(self.values[i]),
            (_, None) => Rat::zero(),
        }
    }

    /// Probability of terminating at all from `p(1)`.
    pub fn termination_total(&self, p: usize) -> f64 {
        self.pairs
            .iter()
            .zip(&self.values)
            .filter(|((src, _), _)| *src == p)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn termination_total_exact(&self, p: usize) -> Rat {
        let mut sum = Rat::zero();
        for (i, (src, _)) in self.pairs.iter().enumerate() {
            if *src == p {
                sum += self.prob_exact(*src, self.pairs[i].1);
            }
        }
        sum
    }
}

/// Build the restricted system over the positive-probability pairs.
pub fn build_term_system(m: &Poc) -> QuadraticSystem {
    let pairs = reach::positive_pairs(m);
    let var_index: HashMap<(usize, usize), usize> =
        pairs.iter().enumerate().map(|(i, &pq)| (pq, i)).collect();
    let n = m.n_states();
    let mut equations = Vec::with_capacity(pairs.len());
    for &(p, q) in &pairs {
        let mut eq = Equation { constant: Rat::zero(), linear: Vec::new(), bilinear: Vec::new() };
        for r in m.pos_rules(p) {
            match r.delta {
                -1 => {
                    if r.dst == q {
                        eq.constant += r.prob.clone();
                    }
                }
                0 => {
                    if let Some(&j) = var_index.get(&(r.dst, q)) {
                        eq.linear.push((j, r.prob.clone()));
                    }
                }
                1 => {
                    for mid in 0..n {
                        if let (Some(&j), Some(&k)) =
                            (var_index.get(&(r.dst, mid)), var_index.get(&(mid, q)))
                        {
                            eq.bilinear.push((j, k, r.prob.clone()));
                        }
                    }
                }
                _ => unreachable!("validated delta"),
            }
        }
        equations.push(eq);
    }

    // Dependency graph: variable i mentions variable j.
    let adj: Vec<Vec<usize>> = equations
        .iter()
        .map(|eq| {
            let mut out: Vec<usize> = eq
                .linear
                .iter()
                .map(|&(j, _)| j)
                .chain(eq.bilinear.iter().flat_map(|&(j, k, _)| [j, k]))
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();
    let mut dependency_sccs = graph::sccs(&adj);
    // sccs() puts dependents first; solving wants dependencies first.
    dependency_sccs.reverse();
    QuadraticSystem { pairs, var_index, equations, dependency_sccs }
}

impl QuadraticSystem {
    pub fn n_vars(&self) -> usize {
        self.equations.len()
    }

    pub fn eval_f64(&self, x: &[f64]) -> Vec<f64> {
        self.equations
            .iter()
            .map(|eq| {
                let mut v = rat_to_f64(&eq.constant);
                for (j, c) in &eq.linear {
                    v += rat_to_f64(c) * x[*j];
                }
                for (j, k, c) in &eq.bilinear {
                    v += rat_to_f64(c) * x[*j] * x[*k];
                }
                v
            })
            .collect()
    }

    pub fn eval_exact(&self, x: &[Rat]) -> Vec<Rat> {
        self.equations
            .iter()
            .map(|eq| {
                let mut v = eq.constant.clone();
                for (j, c) in &eq.linear {
                    v += c * &x[*j];
                }
                for (j, k, c) in &eq.bilinear {
                    v += c * &x[*j] * &x[*k];
                }
                v
            })
            .collect()
    }

    /// Exact max-norm residual of a candidate solution.
    pub fn residual_exact(&self, x: &[Rat]) -> Rat {
        let fx = self.eval_exact(x);
        fx.iter()
            .zip(x)
            .map(|(f, v)| (f - v).abs())
            .max()
            .unwrap_or_else(Rat::zero)
    }
}

fn iteration_cap(n_states: usize, rel_err: f64) -> usize {
    let log = (1.0 / rel_err).log2().ceil().max(1.0) as usize;
    64 * n_states.pow(3).max(1) * log
}

/// Plain fixed-point iteration, exposed for cross-checking the solver.
pub fn kleene_f64(sys: &QuadraticSystem, iters: usize) -> Vec<f64> {
    let mut x = vec![0.0; sys.n_vars()];
    for _ in 0..iters {
        x = sys.eval_f64(&x);
    }
    x
}

/// Solve with the f64 backend. The reported residual is evaluated exactly.
pub fn solve_termination(m: &Poc, rel_err: f64) -> TermSolution {
    let sys = build_term_system(m);
    let cap = iteration_cap(m.n_states(), rel_err);
    let mut x = vec![0.0f64; sys.n_vars()];
    let stop = rel_err / 4.0;
    let mut iterations = 0;
    let mut converged = true;
    let mut used_kleene = false;

    for block in &sys.dependency_sccs {
        let index_in: HashMap<usize, usize> =
            block.iter().enumerate().map(|(bi, &v)| (v, bi)).collect();
        let mut newton_ok = true;
        let mut done = false;
        // Stop when both the residual and the last step are relatively small;
        // the step condition is what makes degenerate (double-root) blocks
        // such as the symmetric walk converge past sqrt(eps).
        let mut step_ok = false;
        for _ in 0..cap {
            iterations += 1;
            let fx = sys.eval_f64(&x);
            let resid_ok = block
                .iter()
                .all(|&v| (fx[v] - x[v]).abs() <= stop * x[v].abs().max(1e-290));
            if resid_ok && step_ok {
                done = true;
                break;
            }
            if newton_ok {
                // (I - J) d = F(x) - x over the block columns.
                let nb = block.len();
                let mut mat = vec![vec![0.0f64; nb]; nb];
                for (bi, &v) in block.iter().enumerate() {
                    mat[bi][bi] = 1.0;
                    let eq = &sys.equations[v];
                    for (j, c) in &eq.linear {
                        if let Some(&bj) = index_in.get(j) {
                            mat[bi][bj] -= rat_to_f64(c);
                        }
                    }
                    for (j, k, c) in &eq.bilinear {
                        let cf = rat_to_f64(c);
                        if let Some(&bj) = index_in.get(j) {
                            mat[bi][bj] -= cf * x[*k];
                        }
                        if let Some(&bk) = index_in.get(k) {
                            mat[bi][bk] -= cf * x[*j];
                        }
                    }
                }
                let rhs: Vec<f64> = block.iter().map(|&v| fx[v] - x[v]).collect();
                match Lu::factor(&mat).map(|lu| lu.solve(&rhs)) {
                    Some(delta) => {
                        step_ok = true;
                        for (bi, &v) in block.iter().enumerate() {
                            let nv = (x[v] + delta[bi]).clamp(0.0, 1.0);
                            step_ok &= (nv - x[v]).abs() <= stop * nv.abs().max(1e-290);
                            x[v] = nv;
                        }
                        continue;
                    }
                    None => {
                        newton_ok = false;
                        used_kleene = true;
                    }
                }
            }
            step_ok = true;
            for &v in block {
                let nv = fx[v].clamp(0.0, 1.0);
                step_ok &= (nv - x[v]).abs() <= stop * nv.abs().max(1e-290);
                x[v] = nv;
            }
        }
        if !done {
            converged = false;
        }
    }

    let exact_x: Vec<Rat> = x.iter().map(|&v| rat_of_f64(v)).collect();
    let residual = sys.residual_exact(&exact_x);
    TermSolution {
        pairs: sys.pairs,
        var_index: sys.var_index,
        values: x,
        values_exact: None,
        residual,
        backend: Backend::Float64,
        rel_err,
        iterations,
        converged,
        used_kleene_fallback: used_kleene,
    }
}

/// Solve with the exact-rational backend: all iterates are rational, with
/// denominators rounded down to 256 bits between steps, and the stop rule is
/// an exact absolute residual below `rel_err / 4 * x_min^(n^3)` (every
/// positive pair is at least that large, so the relative error is bounded by
/// `rel_err`).
pub fn solve_termination_exact(m: &Poc, rel_err: &Rat) -> TermSolution {
    let sys = build_term_system(m);
    let n = m.n_states();
    let rel_f64 = rat_to_f64(rel_err).max(1e-300);
    let cap = iteration_cap(n, rel_f64);
    // Every positive pair is at least x_min^(n^3); that floor anchors the
    // relative tests while an iterate is still near zero.
    let floor = crate::numeric::rat_pow(m.x_min(), (n * n * n) as u32);
    let quarter: Rat = rel_err / crate::numeric::rat(4, 1);
    let rel_bound = |value: &Rat, scale: &Rat| -> bool {
        let anchor = if scale > &floor { scale.clone() } else { floor.clone() };
        value.abs() <= &quarter * anchor
    };
    let mut x = vec![Rat::zero(); sys.n_vars()];
    let one = Rat::one();
    let mut iterations = 0;
    let mut converged = true;
    let mut used_kleene = false;

    for block in &sys.dependency_sccs {
        let index_in: HashMap<usize, usize> =
            block.iter().enumerate().map(|(bi, &v)| (v, bi)).collect();
        let mut newton_ok = true;
        let mut done = false;
        let mut step_ok = false;
        for _ in 0..cap {
            iterations += 1;
            let fx = sys.eval_exact(&x);
            if step_ok && block.iter().all(|&v| rel_bound(&(&fx[v] - &x[v]), &x[v])) {
                done = true;
                break;
            }
            let mut advanced = false;
            if newton_ok {
                let nb = block.len();
                let mut mat = vec![vec![Rat::zero(); nb]; nb];
                for (bi, &v) in block.iter().enumerate() {
                    mat[bi][bi] = one.clone();
                    let eq = &sys.equations[v];
                    for (j, c) in &eq.linear {
                        if let Some(&bj) = index_in.get(j) {
                            mat[bi][bj] -= c;
                        }
                    }
                    for (j, k, c) in &eq.bilinear {
                        if let Some(&bj) = index_in.get(j) {
                            mat[bi][bj] -= c * &x[*k];
                        }
                        if let Some(&bk) = index_in.get(k) {
                            mat[bi][bk] -= c * &x[*j];
                        }
                    }
                }
                let rhs: Vec<Rat> = block.iter().map(|&v| &fx[v] - &x[v]).collect();
                match linalg::solve_exact(&mat, &rhs) {
                    Some(delta) => {
                        advanced = true;
                        step_ok = true;
                        for (bi, &v) in block.iter().enumerate() {
                            let mut nv = &x[v] + &delta[bi];
                            if nv < Rat::zero() {
                                nv = Rat::zero();
                            } else if nv > one {
                                nv = one.clone();
                            }
                            let nv = round_down_denom(&nv, 256);
                            step_ok &= rel_bound(&(&nv - &x[v]), &nv);
                            x[v] = nv;
                        }
                    }
                    None => {
                        newton_ok = false;
                        used_kleene = true;
                    }
                }
            }
            if !advanced {
                step_ok = true;
                for &v in block {
                    let nv = round_down_denom(&fx[v], 256);
                    step_ok &= rel_bound(&(&nv - &x[v]), &nv);
                    x[v] = nv;
                }
            }
        }
        if !done {
            converged = false;
        }
    }

    let residual = sys.residual_exact(&x);
    TermSolution {
        pairs: sys.pairs,
        var_index: sys.var_index,
        values: x.iter().map(rat_to_f64).collect(),
        values_exact: Some(x),
        residual,
        backend: Backend::ExactRational,
        rel_err: rel_f64,
        iterations,
        converged,
        used_kleene_fallback: used_kleene,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{and_or_model, walk_model};
    use crate::numeric::rat;

    #[test]
    fn gamblers_ruin_closed_forms() {
        // One state, up u / down d: termination probability is min(1, d/u).
        for (u, d, expect) in [
            ((2, 5), (3, 5), 1.0),
            ((1, 3), (2, 3), 1.0),
            ((3, 5), (2, 5), 2.0 / 3.0),
        ] {
            let m = walk_model(&rat(d.0, d.1)).unwrap();
            assert_eq!(m.pos_rules(0).iter().filter(|r| r.delta == 1).count(), 1);
            let _ = u;
            let sol = solve_termination(&m, 1e-10);
            assert!(sol.converged);
            assert!(
                (sol.prob(0, 0) - expect).abs() <= 1e-9 * expect.max(1.0),
                "u={u:?} d={d:?}: got {}",
                sol.prob(0, 0)
            );
        }
    }

    #[test]
    fn exact_backend_matches_closed_form() {
        let m = walk_model(&rat(2, 5)).unwrap();
        let sol = solve_termination_exact(&m, &rat(1, 1_000_000_000));
        assert!(sol.converged);
        let val = sol.prob_exact(0, 0);
        let err = (&val - rat(2, 3)).abs();
        assert!(err < rat(1, 100_000_000), "exact value {val} too far from 2/3");
        assert!(sol.residual < rat(1, 1_000_000));
    }

    #[test]
    fn newton_agrees_with_fixed_point_iteration() {
        let m = and_or_model(&rat(1, 2), &rat(2, 5), &rat(1, 5), &rat(1, 5)).unwrap();
        let sys = build_term_system(&m);
        let slow = kleene_f64(&sys, 20_000);
        let sol = solve_termination(&m, 1e-10);
        for (i, &(p, q)) in sol.pairs.iter().enumerate() {
            assert!(
                (sol.values[i] - slow[i]).abs() < 1e-7,
                "pair ({p},{q}): newton {} vs kleene {}",
                sol.values[i],
                slow[i]
            );
        }
    }

    #[test]
    fn and_or_first_row_totals() {
        let m = and_or_model(&rat(1, 2), &rat(2, 5), &rat(1, 5), &rat(1, 5)).unwrap();
        let sol = solve_termination(&m, 1e-9);
        let a = m.state_index("and_init").unwrap();
        let total = sol.termination_total(a);
        assert!((total - 0.800).abs() < 5e-4, "total {total}");
        let or1 = m.state_index("or_ret1").unwrap();
        let or0 = m.state_index("or_ret0").unwrap();
        assert!((sol.prob(a, or0) - 0.500).abs() < 5e-4);
        assert!((sol.prob(a, or1) - 0.300).abs() < 5e-4);
    }

    #[test]
    fn residual_is_reported_exactly() {
        let m = walk_model(&rat(1, 2)).unwrap();
        let sol = solve_termination(&m, 1e-6);
        // Symmetric walk: probability 1, quadratic convergence is slow near
        // the double root but the residual must still be small.
        assert!(sol.prob(0, 0) > 1.0 - 1e-6);
        assert!(sol.residual < rat(1, 1_000_0));
    }
}
