//! Finiteness and value of conditional expected termination times.
//!
//! For a pair `(p, q)` with positive termination probability, `E(p|q)` is
//! the expected number of steps of a run from `p(1)` to its first zero
//! counter, conditioned on landing there in state `q`. Finiteness is purely
//! qualitative and decided exactly:
//!
//! * `q` outside every bottom component of the underlying chain: finite;
//! * `q` in a bottom component with nonzero trend: finite;
//! * `q` in a zero-trend bottom component: finite iff only finitely many
//!   configurations lie between `p(1)` and `q(0)` (honest predecessors of
//!   `q(0)` that are also honest successors of `p(1)`).
//!
//! The finite values solve a linear system with one variable per finite
//! pair. Conditioning on the first step of the run and normalizing by the
//! pair's termination probability gives a right-hand side of exactly one:
//!
//! ```text
//! V[p,q] = 1 + sum P(p,0,t)  * x[t,q]/x[p,q]          * V[t,q]
//!            + sum P(p,+1,t) * x[t,r]*x[r,q]/x[p,q]   * (V[t,r] + V[r,q])
//! ```
//!
//! The coefficients are built from approximated termination probabilities,
//! so the solution is a perturbation of the true one. Two precision modes:
//! ADAPTIVE (default) re-solves at increasing termination precision until
//! successive solutions stabilize within eps/2; RIGOROUS derives the
//! coefficient accuracy delta = eps / (12 b^2) from a certified bound b on
//! the largest finite expectation and solves everything in exact rationals,
//! refusing when delta falls below 2^-200.

use crate::bounds::{self, BoundValue, GrandCase};
use crate::chain::{self, BsccAnalysis};
use crate::linalg;
use crate::model::{Config, Poc};
use crate::newton::{self, TermSolution};
use crate::numeric::{log2_rat, rat, rat_to_f64, Rat};
use crate::reach::{self, PAutomaton};
use num_traits::{One, Signed, Zero};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpTimeError {
    #[error(
        "rigorous budget infeasible: required coefficient accuracy is 2^{delta_log2:.1}, \
         below the 2^-200 backend floor"
    )]
    RigorousInfeasible { delta_log2: f64 },
    #[error("adaptive refinement did not stabilize: last change {last_change:e} vs target {target:e}")]
    NotStabilized { last_change: f64, target: f64 },
    #[error("termination probability for pair ({0}, {1}) evaluated to zero; upstream precision failure")]
    DegenerateTermination(usize, usize),
    #[error("equation for finite pair ({0}, {1}) references a pair with infinite expectation")]
    InfiniteDependence(usize, usize),
}

/// Why a pair's expectation is finite or infinite.
///
/// Infinite occurs only through the last variant: a zero-trend component
/// whose span of in-between configurations is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiniteReason {
    QNotInBscc,
    BsccTrendNonzero,
    TrendZeroPrepostFinite,
    TrendZeroPrepostInfinite,
}

impl FiniteReason {
    pub fn token(self) -> &'static str {
        match self {
            FiniteReason::QNotInBscc => "Q_NOT_IN_BSCC",
            FiniteReason::BsccTrendNonzero => "BSCC_TREND_NONZERO",
            FiniteReason::TrendZeroPrepostFinite => "TREND_ZERO_PREPOST_FINITE",
            FiniteReason::TrendZeroPrepostInfinite => "TREND_ZERO_PREPOST_INFINITE",
        }
    }

    pub fn is_finite(self) -> bool {
        self != FiniteReason::TrendZeroPrepostInfinite
    }
}

#[derive(Debug, Clone)]
pub struct FinitenessReport {
    /// All positive pairs, with their verdict reason, in pair order.
    pub pairs: Vec<(usize, usize)>,
    pub reasons: Vec<FiniteReason>,
    /// The finite sublist of `pairs`.
    pub finite_pairs: Vec<(usize, usize)>,
}

impl FinitenessReport {
    pub fn reason(&self, p: usize, q: usize) -> Option<FiniteReason> {
        self.pairs.iter().position(|&pq| pq == (p, q)).map(|i| self.reasons[i])
    }
}

/// Decide finiteness for every positive pair. `tpos` must be the positive
/// pairs of `m` (see [`reach::positive_pairs`]).
pub fn classify_finiteness(m: &Poc, tpos: &[(usize, usize)]) -> FinitenessReport {
    let ch = chain::underlying_chain(m);
    let scc = chain::scc_decompose(&ch);
    let n = m.n_states();
    // Trend per state, for states inside a bottom component.
    let mut bottom_trend: Vec<Option<Rat>> = vec![None; n];
    for comp in scc
        .components
        .iter()
        .zip(&scc.is_bottom)
        .filter(|(_, &b)| b)
        .map(|(c, _)| c)
    {
        let analysis = chain::bscc_analysis(&ch, comp).expect("bottom component");
        for &q in comp {
            bottom_trend[q] = Some(analysis.trend.clone());
        }
    }

    // Lazily saturated per-state automata for the zero-trend case.
    let mut pre: Vec<Option<PAutomaton>> = vec![None; n];
    let mut post: Vec<Option<PAutomaton>> = vec![None; n];
    let mut reasons = Vec::with_capacity(tpos.len());
    for &(p, q) in tpos {
        let reason = match &bottom_trend[q] {
            None => FiniteReason::QNotInBscc,
            Some(t) if !t.is_zero() => FiniteReason::BsccTrendNonzero,
            Some(_) => {
                let pre_q = pre[q].get_or_insert_with(|| {
                    reach::pre_star(m, &PAutomaton::zero_target(n, [q]))
                });
                let post_p = post[p].get_or_insert_with(|| {
                    reach::post_star(
                        m,
                        &PAutomaton::single_config(n, Config { state: p, counter: 1 }),
                    )
                });
                if pre_q.intersect(post_p).is_infinite() {
                    FiniteReason::TrendZeroPrepostInfinite
                } else {
                    FiniteReason::TrendZeroPrepostFinite
                }
            }
        };
        reasons.push(reason);
    }
    let finite_pairs = tpos
        .iter()
        .zip(&reasons)
        .filter(|(_, r)| r.is_finite())
        .map(|(&pq, _)| pq)
        .collect();
    FinitenessReport { pairs: tpos.to_vec(), reasons, finite_pairs }
}

/// The linear system over the finite pairs; right-hand side is all ones.
#[derive(Debug, Clone)]
pub struct ExpLinSystem {
    pub vars: Vec<(usize, usize)>,
    pub var_index: HashMap<(usize, usize), usize>,
    /// Coefficient matrix G of `V = G V + 1`.
    pub g: Vec<Vec<f64>>,
}

/// Exact-coefficient variant used by the rigorous mode.
#[derive(Debug, Clone)]
pub struct ExpLinSystemExact {
    pub vars: Vec<(usize, usize)>,
    pub var_index: HashMap<(usize, usize), usize>,
    pub g: Vec<Vec<Rat>>,
}

fn exp_rows<T: Clone>(
    m: &Poc,
    finite_pairs: &[(usize, usize)],
    term_pairs: &HashMap<(usize, usize), usize>,
    prob: impl Fn(usize, usize) -> T,
    zero: T,
    is_zero: impl Fn(&T) -> bool,
    mul: impl Fn(&T, &T) -> T,
    div: impl Fn(&T, &T) -> T,
    add_assign: impl Fn(&mut T, &T),
    rule_prob: impl Fn(&Rat) -> T,
) -> Result<Vec<Vec<T>>, ExpTimeError> {
    let var_index: HashMap<(usize, usize), usize> =
        finite_pairs.iter().enumerate().map(|(i, &pq)| (pq, i)).collect();
    let nv = finite_pairs.len();
    let mut g = vec![vec![zero.clone(); nv]; nv];
    for (row, &(p, q)) in finite_pairs.iter().enumerate() {
        let x_pq = prob(p, q);
        if is_zero(&x_pq) {
            return Err(ExpTimeError::DegenerateTermination(p, q));
        }
        let add = |pair: (usize, usize), weight: T, g_row: &mut Vec<T>| {
            match var_index.get(&pair) {
                Some(&col) => {
                    add_assign(&mut g_row[col], &weight);
                    Ok(())
                }
                // A positive pair outside the finite set would make this
                // expectation infinite too; the classification rules that out.
                None if term_pairs.contains_key(&pair) => {
                    Err(ExpTimeError::InfiniteDependence(p, q))
                }
                None => Ok(()),
            }
        };
        for r in m.pos_rules(p) {
            match r.delta {
                -1 => {}
                0 => {
                    let t = r.dst;
                    if term_pairs.contains_key(&(t, q)) {
                        let w = div(&mul(&rule_prob(&r.prob), &prob(t, q)), &x_pq);
                        if !is_zero(&w) {
                            add((t, q), w, &mut g[row])?;
                        }
                    }
                }
                1 => {
                    let t = r.dst;
                    for mid in 0..m.n_states() {
                        if term_pairs.contains_key(&(t, mid))
                            && term_pairs.contains_key(&(mid, q))
                        {
                            let w = div(
                                &mul(&mul(&rule_prob(&r.prob), &prob(t, mid)), &prob(mid, q)),
                                &x_pq,
                            );
                            if !is_zero(&w) {
                                add((t, mid), w.clone(), &mut g[row])?;
                                add((mid, q), w, &mut g[row])?;
                            }
                        }
                    }
                }
                _ => unreachable!("validated delta"),
            }
        }
    }
    Ok(g)
}

/// Instantiate the system with the f64 values of a termination solution.
pub fn build_exp_system(
    m: &Poc,
    finite_pairs: &[(usize, usize)],
    terms: &TermSolution,
) -> Result<ExpLinSystem, ExpTimeError> {
    let g = exp_rows(
        m,
        finite_pairs,
        &terms.var_index,
        |p, q| terms.prob(p, q),
        0.0,
        |x| *x <= 0.0,
        |a, b| a * b,
        |a, b| a / b,
        |a, b| *a += *b,
        rat_to_f64,
    )?;
    let var_index = finite_pairs.iter().enumerate().map(|(i, &pq)| (pq, i)).collect();
    Ok(ExpLinSystem { vars: finite_pairs.to_vec(), var_index, g })
}

/// Instantiate the system with exact rational termination values.
pub fn build_exp_system_exact(
    m: &Poc,
    finite_pairs: &[(usize, usize)],
    terms: &TermSolution,
) -> Result<ExpLinSystemExact, ExpTimeError> {
    let g = exp_rows(
        m,
        finite_pairs,
        &terms.var_index,
        |p, q| terms.prob_exact(p, q),
        Rat::zero(),
        |x| x <= &Rat::zero(),
        |a, b| a * b,
        |a, b| a / b,
        |a: &mut Rat, b| *a += b,
        Clone::clone,
    )?;
    let var_index = finite_pairs.iter().enumerate().map(|(i, &pq)| (pq, i)).collect();
    Ok(ExpLinSystemExact { vars: finite_pairs.to_vec(), var_index, g })
}

impl ExpLinSystem {
    /// Solve `(I - G) V = 1` by dense factorization plus one refinement step.
    pub fn solve(&self) -> Option<Vec<f64>> {
        let nv = self.vars.len();
        if nv == 0 {
            return Some(Vec::new());
        }
        let mut mat = vec![vec![0.0; nv]; nv];
        for (i, row) in self.g.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                mat[i][j] = if i == j { 1.0 - c } else { -c };
            }
        }
        linalg::solve_f64(&mat, &vec![1.0; nv])
    }
}

impl ExpLinSystemExact {
    pub fn solve(&self) -> Option<Vec<Rat>> {
        let nv = self.vars.len();
        if nv == 0 {
            return Some(Vec::new());
        }
        let mut mat = vec![vec![Rat::zero(); nv]; nv];
        for (i, row) in self.g.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                mat[i][j] = if i == j { Rat::one() - c } else { -c };
            }
        }
        linalg::solve_exact(&mat, &vec![Rat::one(); nv])
    }
}

/// Certified precision budget for the rigorous mode.
#[derive(Debug, Clone)]
pub struct ErrorBudget {
    /// Upper bound on the largest finite expectation.
    pub b: BoundValue,
    /// Coefficient accuracy eps / (12 b^2) the rigorous mode must hit.
    pub delta: BoundValue,
    /// Bound on the row norm of I - G: a row holds at most a probability
    /// mass of 2 plus the diagonal.
    pub u: Rat,
    /// Bound on the row norm of (I - G)^-1, which is b again.
    pub v_norm: BoundValue,
    /// Smallest |trend| over nonzero-trend bottom components, if any.
    pub t_min: Option<Rat>,
}

/// Worst-case bound on any finite expectation of the model, maximized over
/// the finiteness cases its pairs actually fall into.
pub fn exp_upper_bound(m: &Poc) -> BoundValue {
    let tpos = reach::positive_pairs(m);
    let report = classify_finiteness(m, &tpos);
    exp_upper_bound_from(m, &report)
}

fn nonzero_trends(m: &Poc) -> Vec<Rat> {
    let ch = chain::underlying_chain(m);
    let scc = chain::scc_decompose(&ch);
    chain::bottom_analyses(&ch, &scc)
        .expect("bottom components analyzable")
        .into_iter()
        .map(|b: BsccAnalysis| b.trend)
        .filter(|t| !t.is_zero())
        .collect()
}

fn exp_upper_bound_from(m: &Poc, report: &FinitenessReport) -> BoundValue {
    let nq = m.n_states() as u32;
    let x_min = m.x_min();
    let mut best: Option<BoundValue> = None;
    let mut consider = |v: BoundValue| {
        if best.as_ref().is_none_or(|b| v.log2 > b.log2) {
            best = Some(v);
        }
    };
    let has = |r: FiniteReason| report.reasons.contains(&r);
    if has(FiniteReason::QNotInBscc) {
        consider(bounds::grand_bound(GrandCase::NotInBscc, nq, x_min, None).expect("valid"));
    }
    if has(FiniteReason::TrendZeroPrepostFinite) {
        consider(bounds::grand_bound(GrandCase::PrepostFinite, nq, x_min, None).expect("valid"));
    }
    if has(FiniteReason::BsccTrendNonzero) {
        let t_min = nonzero_trends(m)
            .into_iter()
            .min_by(|a, b| a.abs().cmp(&b.abs()))
            .expect("a nonzero trend exists for this case");
        consider(
            bounds::grand_bound(GrandCase::TrendNonzero, nq, x_min, Some(&t_min)).expect("valid"),
        );
    }
    // No finite pair at all: any positive constant is a valid bound.
    best.unwrap_or_else(|| BoundValue::from_rat(Rat::one()))
}

pub fn error_budget(m: &Poc, report: &FinitenessReport, eps: &Rat) -> ErrorBudget {
    let b = exp_upper_bound_from(m, report);
    let delta = match &b.exact {
        Some(bb) => BoundValue::from_rat(eps / (rat(12, 1) * bb * bb)),
        None => BoundValue {
            exact: None,
            log2: log2_rat(eps) - (12.0f64).log2() - 2.0 * b.log2,
        },
    };
    let t_min = nonzero_trends(m).into_iter().min_by(|a, b| a.abs().cmp(&b.abs()));
    ErrorBudget { v_norm: BoundValue { exact: b.exact.clone(), log2: b.log2 }, b, delta, u: rat(3, 1), t_min }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionMode {
    Adaptive,
    Rigorous,
}

#[derive(Debug, Clone)]
pub struct ExpTimeReport {
    pub finiteness: FinitenessReport,
    /// Per positive pair (same order as `finiteness.pairs`): the expectation,
    /// None when infinite. Values are at least 1.
    pub values: Vec<Option<f64>>,
    /// Exact values in rigorous mode, same indexing.
    pub values_exact: Option<Vec<Option<Rat>>>,
    pub abs_err: f64,
    pub mode: PrecisionMode,
    pub budget: ErrorBudget,
    /// Termination-probability accuracy the final solve used.
    pub term_rel_err: f64,
}

impl ExpTimeReport {
    pub fn value(&self, p: usize, q: usize) -> Option<f64> {
        self.finiteness
            .pairs
            .iter()
            .position(|&pq| pq == (p, q))
            .and_then(|i| self.values[i])
    }
}

/// Expected termination times for every positive pair, to absolute error
/// `eps` on the finite ones.
pub fn expected_times(
    m: &Poc,
    eps: &Rat,
    mode: PrecisionMode,
) -> Result<ExpTimeReport, ExpTimeError> {
    assert!(eps > &Rat::zero() && eps < &Rat::one(), "eps must be in (0, 1)");
    let tpos = reach::positive_pairs(m);
    let report = classify_finiteness(m, &tpos);
    let budget = error_budget(m, &report, eps);
    let finite = report.finite_pairs.clone();

    let spread = |report: FinitenessReport,
                  budget: ErrorBudget,
                  solved: Vec<f64>,
                  exact: Option<Vec<Rat>>,
                  term_rel_err: f64,
                  mode: PrecisionMode| {
        let fin_index: HashMap<(usize, usize), usize> =
            finite.iter().enumerate().map(|(i, &pq)| (pq, i)).collect();
        let values = report
            .pairs
            .iter()
            .map(|pq| fin_index.get(pq).map(|&i| solved[i].max(1.0)))
            .collect();
        let values_exact = exact.map(|ex| {
            report
                .pairs
                .iter()
                .map(|pq| {
                    fin_index.get(pq).map(|&i| {
                        if ex[i] < Rat::one() {
                            Rat::one()
                        } else {
                            ex[i].clone()
                        }
                    })
                })
                .collect()
        });
        ExpTimeReport {
            finiteness: report,
            values,
            values_exact,
            abs_err: rat_to_f64(eps),
            mode,
            budget,
            term_rel_err,
        }
    };

    match mode {
        PrecisionMode::Rigorous => {
            if budget.delta.log2 < -200.0 {
                return Err(ExpTimeError::RigorousInfeasible { delta_log2: budget.delta.log2 });
            }
            let delta = budget.delta.exact.clone().expect("feasible budget is exact");
            // Coefficients are products of up to three termination values;
            // solving those to delta/8 keeps every matrix entry within delta.
            let term = newton::solve_termination_exact(m, &(delta / rat(8, 1)));
            let sys = build_exp_system_exact(m, &finite, &term)?;
            let solved = sys.solve().expect("perturbed system stays nonsingular");
            let f64s = solved.iter().map(rat_to_f64).collect();
            Ok(spread(report, budget, f64s, Some(solved), term.rel_err, mode))
        }
        PrecisionMode::Adaptive => {
            let eps_f = rat_to_f64(eps);
            let target = eps_f / 2.0;
            let mut delta = (eps_f / 8.0).min(1e-6);
            let mut prev: Option<(Vec<f64>, f64)> = None;
            loop {
                let term = newton::solve_termination(m, delta);
                let sys = build_exp_system(m, &finite, &term)?;
                let solved = sys
                    .solve()
                    .ok_or(ExpTimeError::NotStabilized { last_change: f64::INFINITY, target })?;
                if let Some((last, _)) = &prev {
                    let change = last
                        .iter()
                        .zip(&solved)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    if change < target {
                        return Ok(spread(report, budget, solved, None, delta, mode));
                    }
                    if delta < 1e-13 {
                        return Err(ExpTimeError::NotStabilized { last_change: change, target });
                    }
                }
                prev = Some((solved, delta));
                delta /= 256.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{and_or_model, walk_model};
    use crate::numeric::rat;

    fn walk_pair_reason(down: (i64, i64)) -> (FiniteReason, FinitenessReport) {
        let m = walk_model(&rat(down.0, down.1)).unwrap();
        let tpos = reach::positive_pairs(&m);
        let report = classify_finiteness(&m, &tpos);
        (report.reason(0, 0).unwrap(), report)
    }

    #[test]
    fn symmetric_walk_is_infinite() {
        let (reason, report) = walk_pair_reason((1, 2));
        assert_eq!(reason, FiniteReason::TrendZeroPrepostInfinite);
        assert!(report.finite_pairs.is_empty());
        let m = walk_model(&rat(1, 2)).unwrap();
        let out = expected_times(&m, &rat(1, 1000), PrecisionMode::Adaptive).unwrap();
        assert_eq!(out.values, vec![None]);
    }

    #[test]
    fn biased_walk_is_finite_with_nonzero_trend() {
        let (reason, _) = walk_pair_reason((3, 5));
        assert_eq!(reason, FiniteReason::BsccTrendNonzero);
    }

    #[test]
    fn biased_walk_expected_time_closed_form() {
        // E = 1/(d - u): d=3/5 gives 5, d=2/3 gives 3.
        for (d, expect) in [((3i64, 5i64), 5.0), ((2, 3), 3.0)] {
            let m = walk_model(&rat(d.0, d.1)).unwrap();
            let out = expected_times(&m, &rat(1, 1_000_000), PrecisionMode::Adaptive).unwrap();
            let v = out.value(0, 0).unwrap();
            assert!((v - expect).abs() < 1e-6, "d={d:?}: got {v}");
        }
    }

    #[test]
    fn rigorous_matches_adaptive_on_walks() {
        let m = walk_model(&rat(3, 5)).unwrap();
        let eps = rat(1, 1_000_000);
        let a = expected_times(&m, &eps, PrecisionMode::Adaptive).unwrap();
        let r = expected_times(&m, &eps, PrecisionMode::Rigorous).unwrap();
        let (va, vr) = (a.value(0, 0).unwrap(), r.value(0, 0).unwrap());
        assert!((va - vr).abs() < 2e-6, "adaptive {va} vs rigorous {vr}");
        assert!(r.values_exact.is_some());
        // The budget is small but feasible for a one-state model.
        assert!(r.budget.delta.log2 >= -200.0);
    }

    #[test]
    fn rigorous_is_refused_when_budget_underflows() {
        let m = and_or_model(&rat(1, 2), &rat(2, 5), &rat(1, 5), &rat(1, 5)).unwrap();
        match expected_times(&m, &rat(1, 1000), PrecisionMode::Rigorous) {
            Err(ExpTimeError::RigorousInfeasible { delta_log2 }) => {
                assert!(delta_log2 < -200.0);
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn and_or_first_row_expected_times() {
        let m = and_or_model(&rat(1, 2), &rat(2, 5), &rat(1, 5), &rat(1, 5)).unwrap();
        let out = expected_times(&m, &rat(1, 1000), PrecisionMode::Adaptive).unwrap();
        let a = m.state_index("and_init").unwrap();
        let or0 = m.state_index("or_ret0").unwrap();
        let or1 = m.state_index("or_ret1").unwrap();
        let e0 = out.value(a, or0).unwrap();
        let e1 = out.value(a, or1).unwrap();
        assert!((e0 - 11.000).abs() < 1e-2, "E[a->or_ret0] = {e0}");
        assert!((e1 - 7.667).abs() < 1e-2, "E[a->or_ret1] = {e1}");
        // Every reported value is at least one step.
        for v in out.values.iter().flatten() {
            assert!(*v >= 1.0);
        }
    }

    #[test]
    fn down_only_model_takes_exactly_one_step() {
        let m = walk_model(&rat(1, 1)).unwrap();
        let out = expected_times(&m, &rat(1, 1_000_000), PrecisionMode::Adaptive).unwrap();
        assert!((out.value(0, 0).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(out.finiteness.reason(0, 0), Some(FiniteReason::BsccTrendNonzero));
    }

    #[test]
    fn budget_reports_hand_value() {
        // One-state biased walk: trend -1/5, x_min = 2/5, single case
        // TrendNonzero: 85000 / ((2/5)^6 (1/5)^4) = 85000 * 5^6/2^6 * 625.
        let m = walk_model(&rat(3, 5)).unwrap();
        let b = exp_upper_bound(&m);
        let expect = rat(85_000, 1) / (rat_pow_local(&rat(2, 5), 6) * rat_pow_local(&rat(1, 5), 4));
        assert_eq!(b.exact, Some(expect));
    }

    fn rat_pow_local(x: &Rat, e: u32) -> Rat {
        crate::numeric::rat_pow(x, e)
    }
}
