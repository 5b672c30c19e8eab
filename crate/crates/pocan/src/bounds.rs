//! Closed-form certified bounds used for error budgeting and diagnostics.
//!
//! Several bounds involve factors like `x_min^(4 n^3)` whose magnitude
//! escapes any fixed-width float, so results carry both an exact rational
//! (when reasonably sized) and a base-2 logarithm. Bounds built on `exp`
//! use a truncated series with directed rounding: tail bounds round up,
//! lower bounds round down, so the reported number is always on the safe
//! side of the true formula value.

use crate::numeric::{exp_neg, log2_rat, rat, rat_pow, rat_to_f64, Rat};
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("infeasible: {0}")]
    Infeasible(&'static str),
}

/// A positive bound, as an exact rational where practical plus its base-2 log.
#[derive(Debug, Clone)]
pub struct BoundValue {
    pub exact: Option<Rat>,
    pub log2: f64,
}

impl BoundValue {
    pub fn from_rat(r: Rat) -> BoundValue {
        let log2 = log2_rat(&r);
        BoundValue { exact: Some(r), log2 }
    }

    pub fn to_f64(&self) -> f64 {
        match &self.exact {
            Some(r) => rat_to_f64(r),
            None => self.log2.exp2(),
        }
    }
}

/// Named report row for diagnostics output.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub name: String,
    pub inputs: Vec<(String, String)>,
    pub value: BoundValue,
}

/// Tail of the time to hit a distinguished state in a strongly connected
/// n-state chain whose positive transitions are all at least x: the chance
/// of not hitting within k steps is at most `2 c^k`, `c = exp(-x^n / n)`.
#[derive(Debug, Clone)]
pub struct HittingBound {
    pub value: BoundValue,
    pub c: Rat,
    /// With x = 1 the walk is deterministic and the true tail is already 0
    /// after n steps; the formula value is still returned.
    pub deterministic_zero: bool,
}

pub fn hitting_bound(n: u32, x: &Rat, k: u32) -> Result<HittingBound, BoundsError> {
    if n < 1 {
        return Err(BoundsError::Domain("n must be at least 1"));
    }
    if x <= &Rat::zero() || x > &Rat::one() {
        return Err(BoundsError::Domain("x must be in (0, 1]"));
    }
    if k < n {
        return Err(BoundsError::Domain("k must be at least n"));
    }
    let d = rat_pow(x, n) / rat(n as i64, 1);
    let c = exp_neg(&d, true);
    let value = rat(2, 1) * rat_pow(&c, k);
    Ok(HittingBound {
        value: BoundValue::from_rat(value),
        deterministic_zero: x == &Rat::one(),
        c,
    })
}

/// One-sided Azuma tail for the termination-time martingale: probability of
/// still running at step i decays as `a^i` once i clears the threshold h.
#[derive(Debug, Clone)]
pub struct AzumaTail {
    /// `a^i` when applicable (i >= h), None otherwise.
    pub value: Option<BoundValue>,
    pub a: Rat,
    pub h: Rat,
}

pub fn azuma_tail(t: &Rat, span: &Rat, c0: i64, i: i64) -> Result<AzumaTail, BoundsError> {
    if t.is_zero() {
        return Err(BoundsError::Domain("trend must be nonzero"));
    }
    if span < &Rat::zero() {
        return Err(BoundsError::Domain("span must be nonnegative"));
    }
    if i < 0 {
        return Err(BoundsError::Domain("step index must be nonnegative"));
    }
    let width = span + t.abs() + Rat::one();
    let d = t * t / (rat(8, 1) * &width * &width);
    let a = exp_neg(&d, true);
    let c0r = rat(c0, 1);
    let h = if t < &Rat::zero() {
        rat(2, 1) * (-span - &c0r) / t
    } else {
        rat(2, 1) * (span - &c0r) / t
    };
    let value = if rat(i, 1) >= h {
        let i = u32::try_from(i).map_err(|_| BoundsError::Domain("step index too large"))?;
        // Powers beyond a few thousand only matter through their magnitude.
        if i <= 4096 {
            Some(BoundValue::from_rat(rat_pow(&a, i)))
        } else {
            Some(BoundValue { exact: None, log2: i as f64 * log2_rat(&a) })
        }
    } else {
        None
    };
    Ok(AzumaTail { value, a, h })
}

/// Termination-probability tail for a positive trend: starting at counter
/// c0 >= span, the chance of ever draining to zero is at most
/// `a^c0 / (1 - a)`. Also reports the counter height past which the bound
/// certifies a value of at most one half.
#[derive(Debug, Clone)]
pub struct DivergenceTail {
    pub value: Option<BoundValue>,
    pub a: Rat,
    pub half_threshold: Rat,
}

pub fn divergence_tail(t: &Rat, span: &Rat, c0: i64) -> Result<DivergenceTail, BoundsError> {
    if t <= &Rat::zero() {
        return Err(BoundsError::Domain("trend must be positive"));
    }
    if span < &Rat::zero() {
        return Err(BoundsError::Domain("span must be nonnegative"));
    }
    let width = span + t + Rat::one();
    let d = t * t / (rat(2, 1) * &width * &width);
    let a = exp_neg(&d, true);
    let cube = &width * &width * &width;
    let half_threshold = rat(6, 1) * cube / (t * t * t);
    let value = if rat(c0, 1) >= *span && c0 >= 0 {
        let e = u32::try_from(c0).map_err(|_| BoundsError::Domain("counter too large"))?;
        let one_minus = Rat::one() - &a;
        if e <= 4096 {
            Some(BoundValue::from_rat(rat_pow(&a, e) / &one_minus))
        } else {
            Some(BoundValue {
                exact: None,
                log2: e as f64 * log2_rat(&a) - log2_rat(&one_minus),
            })
        }
    } else {
        None
    };
    Ok(DivergenceTail { value, a, half_threshold })
}

/// Probability of climbing by b before draining, from a maximal-potential
/// state in a zero-trend component: at least `1 / (b + 1 + span)`.
pub fn reach_high_bound(span: &Rat, b: u64) -> Result<Rat, BoundsError> {
    if b < 1 {
        return Err(BoundsError::Domain("b must be at least 1"));
    }
    Ok(Rat::one() / (rat(b as i64, 1) + Rat::one() + span))
}

/// Lower bound on the divergence probability from a positive-trend
/// component entered at a maximal-potential state.
pub fn gap_bound(t: &Rat, span: &Rat) -> Result<Rat, BoundsError> {
    if t <= &Rat::zero() {
        return Err(BoundsError::Domain("trend must be positive"));
    }
    let denom_base = rat(2, 1) * span + rat(4, 1);
    Ok(t * t * t / (rat(12, 1) * &denom_base * &denom_base * &denom_base))
}

/// Upper bound on the potential span of an nq-state strongly connected
/// chain with smallest transition probability x_min.
pub fn potential_span_bound(nq: u32, x_min: &Rat) -> Result<BoundValue, BoundsError> {
    if nq < 1 {
        return Err(BoundsError::Domain("state count must be at least 1"));
    }
    if x_min <= &Rat::zero() || x_min > &Rat::one() {
        return Err(BoundsError::Domain("x_min must be in (0, 1]"));
    }
    Ok(BoundValue::from_rat(rat(2 * nq as i64, 1) / rat_pow(x_min, nq)))
}

/// Pumping bound: a finite honest-path language over nq control states
/// contains at most `nq^2 (nq + 2)` configurations.
pub fn pumping_bound(nq: u64) -> u64 {
    nq * nq * (nq + 2)
}

/// Relative-error guarantee for a solution of a perturbed linear system
/// with row-sum norms u and v of the two inverses: `4 delta u v`, valid
/// only while it stays below one.
pub fn perturbation_factor(u: &Rat, v: &Rat, delta: &Rat) -> Result<Rat, BoundsError> {
    let factor = rat(4, 1) * delta * u * v;
    if factor >= Rat::one() {
        return Err(BoundsError::Infeasible("4 delta u v must stay below 1"));
    }
    Ok(factor)
}

/// Weight accuracy needed so a reduction chain's reachability values move by
/// less than eps: `eps r^3 / (8 (c+1)^2)` where r bounds the relevant
/// positive weights from below and c the transition count of interest.
pub fn visiting_delta(eps: &Rat, r: &Rat, c: u64) -> Result<Rat, BoundsError> {
    if r <= &Rat::zero() || r > &Rat::one() {
        return Err(BoundsError::Domain("r must be in (0, 1]"));
    }
    if c < 1 {
        return Err(BoundsError::Domain("c must be at least 1"));
    }
    let cp1 = rat(c as i64 + 1, 1);
    Ok(eps * r * r * r / (rat(8, 1) * &cp1 * &cp1))
}

/// Which finiteness case a conditional expected termination time falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrandCase {
    /// Finitely many configurations between start and target.
    PrepostFinite,
    /// Target state not in a bottom component of the underlying chain.
    NotInBscc,
    /// Target in a bottom component with nonzero trend.
    TrendNonzero,
}

/// Universal upper bound on a finite conditional expected termination time,
/// by case. nq is the control-state count, x_min the least rule probability,
/// t the trend of the target's component (TrendNonzero only).
pub fn grand_bound(
    case: GrandCase,
    nq: u32,
    x_min: &Rat,
    t: Option<&Rat>,
) -> Result<BoundValue, BoundsError> {
    if nq < 1 {
        return Err(BoundsError::Domain("state count must be at least 1"));
    }
    if x_min <= &Rat::zero() || x_min > &Rat::one() {
        return Err(BoundsError::Domain("x_min must be in (0, 1]"));
    }
    let n = nq as i64;
    let n3 = nq * nq * nq;
    let value = match case {
        GrandCase::PrepostFinite => rat(15 * n * n * n, 1) / rat_pow(x_min, 4 * n3),
        GrandCase::NotInBscc => rat(5 * n, 1) / rat_pow(x_min, nq + n3),
        GrandCase::TrendNonzero => {
            let t = t.ok_or(BoundsError::Domain("trend required for this case"))?;
            if t.is_zero() {
                return Err(BoundsError::Domain("trend must be nonzero"));
            }
            let t4 = rat_pow(&t.abs(), 4);
            rat(85_000, 1) * rat_pow(&rat(n, 1), 6) / (rat_pow(x_min, 5 * nq + n3) * t4)
        }
    };
    Ok(BoundValue::from_rat(value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_checked_rational_bounds() {
        assert_eq!(pumping_bound(1), 3);
        assert_eq!(pumping_bound(6), 288);
        assert_eq!(gap_bound(&rat(1, 5), &rat(0, 1)).unwrap(), rat(1, 96000));
        assert_eq!(reach_high_bound(&rat(0, 1), 1).unwrap(), rat(1, 2));
        assert_eq!(reach_high_bound(&rat(2, 1), 3).unwrap(), rat(1, 6));
        assert_eq!(
            perturbation_factor(&rat(3, 1), &rat(5, 1), &rat(1, 120)).unwrap(),
            rat(1, 2)
        );
        assert_eq!(
            perturbation_factor(&rat(3, 1), &rat(5, 1), &rat(1, 60)),
            Err(BoundsError::Infeasible("4 delta u v must stay below 1"))
        );
        assert_eq!(visiting_delta(&rat(1, 10), &rat(1, 1), 1).unwrap(), rat(1, 320));
    }

    #[test]
    fn hand_checked_log_space_bounds() {
        let b = potential_span_bound(6, &rat(1, 5)).unwrap();
        assert_eq!(b.exact, Some(rat(187_500, 1)));
        let b = potential_span_bound(1, &rat(1, 1)).unwrap();
        assert_eq!(b.exact, Some(rat(2, 1)));
        let b = grand_bound(GrandCase::NotInBscc, 1, &rat(1, 1), None).unwrap();
        assert_eq!(b.exact, Some(rat(5, 1)));
        let b = grand_bound(GrandCase::TrendNonzero, 1, &rat(1, 1), Some(&rat(1, 5))).unwrap();
        assert_eq!(b.exact, Some(rat(53_125_000, 1)));
        let b = grand_bound(GrandCase::PrepostFinite, 1, &rat(1, 1), None).unwrap();
        assert_eq!(b.exact, Some(rat(15, 1)));
    }

    #[test]
    fn hitting_bound_formula_and_flag() {
        // n=2, x=1/2, k=2: 2 exp(-1/4).
        let h = hitting_bound(2, &rat(1, 2), 2).unwrap();
        assert!(!h.deterministic_zero);
        let expect = 2.0 * (-0.25f64).exp();
        assert!((h.value.to_f64() - expect).abs() < 1e-9, "got {}", h.value.to_f64());
        // Rounded up: the rational value must not fall below the true one.
        assert!(h.value.to_f64() >= expect - 1e-12);
        // Strictly decreasing in k.
        let h3 = hitting_bound(2, &rat(1, 2), 3).unwrap();
        assert!(h3.value.exact.unwrap() < h.value.exact.unwrap());
        assert!(hitting_bound(2, &rat(1, 2), 1).is_err());
        assert!(hitting_bound(2, &rat(1, 1), 4).unwrap().deterministic_zero);
    }

    #[test]
    fn azuma_tail_hand_values() {
        let a = azuma_tail(&rat(1, 5), &rat(0, 1), 1, 1).unwrap();
        assert_eq!(a.h, rat(-10, 1));
        let expect_a = (-1.0f64 / 288.0).exp();
        assert!((rat_to_f64(&a.a) - expect_a).abs() < 1e-12);
        assert!(rat_to_f64(&a.a) >= expect_a);
        assert!(a.value.is_some());
        // Negative trend flips the threshold formula.
        let b = azuma_tail(&rat(-1, 5), &rat(0, 1), 1, 0).unwrap();
        assert_eq!(b.h, rat(10, 1));
        assert!(b.value.is_none(), "i=0 below h=10 is not applicable");
    }

    #[test]
    fn divergence_tail_hand_values() {
        let d = divergence_tail(&rat(1, 5), &rat(0, 1), 2000).unwrap();
        assert_eq!(d.half_threshold, rat(1296, 1));
        let expect_a = (-1.0f64 / 72.0).exp();
        assert!((rat_to_f64(&d.a) - expect_a).abs() < 1e-12);
        // Past the threshold the bound is comfortably below one half.
        assert!(d.value.unwrap().to_f64() < 0.5);
        // Below span: not applicable.
        let d2 = divergence_tail(&rat(1, 5), &rat(3, 1), 2).unwrap();
        assert!(d2.value.is_none());
    }

    #[test]
    fn tail_bounds_are_monotone() {
        let mut last = f64::INFINITY;
        for c0 in [0i64, 5, 10, 50] {
            let d = divergence_tail(&rat(1, 5), &rat(0, 1), c0).unwrap();
            let v = d.value.unwrap().to_f64();
            assert!(v < last);
            last = v;
        }
    }
}
