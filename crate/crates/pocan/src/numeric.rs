//! Exact-rational helpers shared across the analysis modules.
//!
//! All model data and all qualitative decisions use arbitrary-precision
//! rationals. Quantities that can be astronomically large or small (error
//! budgets, tail bounds) are reported in base-2 log space as a mantissa in
//! `[1, 2)` plus an exponent, which round-trips through `f64` within 1 ulp
//! whenever the value is representable there.

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational, the working scalar of the crate.
pub type Rat = BigRational;

/// Shorthand for small rational constants.
pub fn rat(numer: i64, denom: i64) -> Rat {
    Rat::new(BigInt::from(numer), BigInt::from(denom))
}

/// Exact conversion of a finite `f64` into a rational.
pub fn rat_of_f64(x: f64) -> Rat {
    Rat::from_float(x).expect("finite float")
}

/// Exact integer power by repeated squaring.
pub fn rat_pow(x: &Rat, mut e: u32) -> Rat {
    let mut base = x.clone();
    let mut acc = Rat::one();
    while e > 0 {
        if e & 1 == 1 {
            acc *= &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    acc
}

/// Mantissa/exponent form: `value = mantissa * 2^exp` with mantissa in `[1, 2)`.
///
/// Defined for positive rationals of any magnitude; the mantissa is correct
/// to within 1 ulp of `f64`.
pub fn mantissa_exp2(x: &Rat) -> (f64, i64) {
    assert!(x.is_positive(), "mantissa_exp2 needs a positive value");
    let mut exp = x.numer().bits() as i64 - x.denom().bits() as i64;
    // x / 2^exp lies in (1/2, 2); one conditional shift lands it in [1, 2).
    let mut scaled = shift2(x, -exp);
    if scaled < Rat::one() {
        scaled = shift2(&scaled, 1);
        exp -= 1;
    }
    // 62 fractional bits suffice for a faithful f64 mantissa.
    let q = (scaled.numer() << 62u32) / scaled.denom();
    let mantissa = q.to_f64().expect("64-bit quotient") / (1u64 << 62) as f64;
    (mantissa, exp)
}

/// Base-2 logarithm of a positive rational, as `f64`.
pub fn log2_rat(x: &Rat) -> f64 {
    let (m, e) = mantissa_exp2(x);
    m.log2() + e as f64
}

/// Rational to `f64`, saturating to `0.0` or `f64::INFINITY` far outside the
/// representable range instead of producing NaN.
pub fn rat_to_f64(x: &Rat) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    let neg = x.is_negative();
    let (m, e) = mantissa_exp2(&x.abs());
    let v = if e > 1030 {
        f64::INFINITY
    } else if e < -1080 {
        0.0
    } else {
        m * (e as f64).exp2()
    };
    if neg {
        -v
    } else {
        v
    }
}

/// `x * 2^k` without going through floats.
pub fn shift2(x: &Rat, k: i64) -> Rat {
    if k >= 0 {
        Rat::new(x.numer() << k as u64, x.denom().clone())
    } else {
        Rat::new(x.numer().clone(), x.denom() << (-k) as u64)
    }
}

/// Largest rational `y <= x` whose denominator fits in `bits` bits, found by
/// walking the continued-fraction convergents of `x` (with a final
/// semiconvergent step). Used to keep exact-backend iterates compact while
/// preserving under-approximation.
pub fn round_down_denom(x: &Rat, bits: u64) -> Rat {
    assert!(!x.is_negative());
    let cap: BigInt = BigInt::one() << bits;
    if *x.denom() <= cap {
        return x.clone();
    }
    let a0 = x.numer() / x.denom();
    // Convergents h/k; even-indexed ones approach x from below.
    let (mut h0, mut k0) = (BigInt::one(), BigInt::zero());
    let (mut h1, mut k1) = (a0.clone(), BigInt::one());
    let mut best = Rat::new(h1.clone(), k1.clone());
    let mut frac = x - Rat::from(a0);
    let mut odd = true; // parity of the convergent about to be produced
    while !frac.is_zero() {
        let inv = frac.recip();
        let a = inv.numer() / inv.denom();
        frac = inv - Rat::from(a.clone());
        let h2 = &a * &h1 + &h0;
        let k2 = &a * &k1 + &k0;
        if k2 > cap {
            // Largest semiconvergent with denominator within the cap keeps
            // the parity of the convergent it replaces.
            let t = (&cap - &k0) / &k1;
            if !odd && t > BigInt::zero() {
                let cand = Rat::new(&t * &h1 + &h0, &t * &k1 + &k0);
                if cand <= *x && cand > best {
                    best = cand;
                }
            }
            break;
        }
        if !odd {
            best = Rat::new(h2.clone(), k2.clone());
        }
        h0 = h1;
        k0 = k1;
        h1 = h2;
        k1 = k2;
        odd = !odd;
    }
    debug_assert!(best <= *x);
    best
}

/// Directed fixed-point rounding to `bits` fractional bits.
pub fn shift_round(x: &Rat, bits: u64, up: bool) -> Rat {
    let scaled = shift2(x, bits as i64);
    let mut q = scaled.numer() / scaled.denom();
    let exact = (scaled.numer() % scaled.denom()).is_zero();
    if !exact {
        let positive_floor = scaled.numer().sign() != Sign::Minus;
        // BigInt division truncates toward zero; fix the direction.
        if up && positive_floor {
            q += 1;
        } else if !up && !positive_floor {
            q -= 1;
        }
    }
    shift2(&Rat::from(q), -(bits as i64))
}

/// `e^(-d)` for `d` in `(0, 1]`, by the alternating Taylor series, truncated
/// so that the result errs in the requested direction. Tail bounds round up,
/// certified lower bounds round down; the cut-off error is below `2^-160`.
pub fn exp_neg(d: &Rat, round_up: bool) -> Rat {
    assert!(d.is_positive() && *d <= Rat::one(), "exp_neg domain is (0, 1]");
    let threshold = shift2(&Rat::one(), -200);
    let mut term = Rat::one();
    let mut sum = Rat::one();
    let mut k: u64 = 0;
    loop {
        k += 1;
        term = term * d / Rat::from(BigInt::from(k));
        let positive_term = k % 2 == 0;
        sum = if positive_term { sum + &term } else { sum - &term };
        // After a subtracted term the sum is below e^-d, after an added term
        // above it; stop once the term is negligible and the parity matches.
        if term < threshold && (positive_term == round_up) {
            break;
        }
    }
    shift_round(&sum, 192, round_up)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mantissa_exp2_round_trips() {
        for (n, d) in [(1i64, 3i64), (7, 1), (355, 113), (1, 1024), (12345, 7)] {
            let x = rat(n, d);
            let (m, e) = mantissa_exp2(&x);
            assert!((1.0..2.0).contains(&m), "mantissa {m} out of range");
            let back = m * (e as f64).exp2();
            let direct = n as f64 / d as f64;
            assert!((back - direct).abs() <= direct * 1e-15);
        }
    }

    #[test]
    fn log2_handles_huge_values() {
        let tiny = rat(1, 5).pow(2000);
        let l = log2_rat(&tiny);
        assert!((l - 2000.0 * (0.2f64).log2()).abs() < 1e-6);
        assert_eq!(rat_to_f64(&tiny), 0.0);
        assert_eq!(rat_to_f64(&tiny.recip()), f64::INFINITY);
    }

    #[test]
    fn round_down_denom_is_tight_lower_bound() {
        let x = Rat::new(BigInt::from(987654321987654321i64), BigInt::from(1000000000000000000i64));
        for bits in [8u64, 16, 32] {
            let y = round_down_denom(&x, bits);
            assert!(y <= x);
            assert!(*y.denom() <= BigInt::one() << bits);
            // One-sided best approximations get within 2^-bits of the target.
            let gap = &x - &y;
            assert!(gap <= shift2(&Rat::one(), -(bits as i64)));
        }
        // Denominator-capped exhaustive search agrees at a small cap.
        let cap = 256u32;
        let best = (1..=cap)
            .map(|q| {
                let scaled = &x * Rat::from(BigInt::from(q));
                let floor = scaled.numer() / scaled.denom();
                Rat::new(floor, BigInt::from(q))
            })
            .max()
            .unwrap();
        assert_eq!(round_down_denom(&x, 8), best);
        let exact = rat(3, 8);
        assert_eq!(round_down_denom(&exact, 8), exact);
    }

    #[test]
    fn exp_neg_brackets_the_true_value() {
        for (n, d) in [(1i64, 2i64), (1, 288), (1, 72), (1, 1), (3, 7)] {
            let x = rat(n, d);
            let lo = exp_neg(&x, false);
            let hi = exp_neg(&x, true);
            assert!(lo < hi);
            let truth = (-(n as f64) / d as f64).exp();
            assert!(rat_to_f64(&lo) <= truth + 1e-15);
            assert!(rat_to_f64(&hi) >= truth - 1e-15);
            assert!(rat_to_f64(&(&hi - &lo)) < 1e-40);
        }
    }

    #[test]
    fn shift_round_directions() {
        let x = rat(1, 3);
        assert!(shift_round(&x, 8, false) < x);
        assert!(shift_round(&x, 8, true) > x);
        let y = rat(-1, 3);
        assert!(shift_round(&y, 8, false) < y);
        assert!(shift_round(&y, 8, true) > y);
        let z = rat(5, 8);
        assert_eq!(shift_round(&z, 8, true), z);
    }
}
