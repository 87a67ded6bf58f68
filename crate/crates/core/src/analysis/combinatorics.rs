//! Occupancy combinatorics for frame slotted ALOHA and binomial helpers.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use statrs::function::factorial::ln_binomial;

use crate::{Error, Result};

/// Number of ways to drop `v` distinguishable users into `u` slots so that no
/// slot holds exactly one user.
///
/// Evaluated as the alternating inclusion-exclusion sum
/// `u^v + sum_{t=1}^{v} (-1)^t prod_{j<t} (v-j)(u-j) (u-t)^(v-t) / t!`
/// in exact integer arithmetic; terms with `t > min(u, v)` vanish.
pub fn no_singleton_arrangements(u: u64, v: u64) -> BigInt {
    let mut total = BigInt::from(BigUint::from(u).pow(v as u32));
    let mut falling = BigInt::one();
    let mut factorial = BigInt::one();
    for t in 1..=u.min(v) {
        let j = t - 1;
        falling *= BigInt::from(v - j) * BigInt::from(u - j);
        factorial *= BigInt::from(t);
        let term = &falling * BigInt::from(BigUint::from(u - t).pow((v - t) as u32));
        debug_assert!((&term % &factorial).is_zero());
        let term = term / &factorial;
        if t % 2 == 1 {
            total -= term;
        } else {
            total += term;
        }
    }
    debug_assert!(!total.is_negative());
    total
}

/// `numerator / denominator` rounded to f64 without overflowing either side.
fn ratio_to_f64(numerator: &BigInt, denominator: &BigUint) -> f64 {
    if numerator.is_zero() {
        return 0.0;
    }
    let num = numerator.magnitude();
    let shift = num.bits() as i64 - denominator.bits() as i64;
    // scale so the integer quotient carries ~64 significant bits
    let q = if shift < 64 {
        (num << (64 - shift) as usize) / denominator
    } else {
        num / (denominator << (shift - 64) as usize)
    };
    let mantissa = q.to_f64().expect("quotient fits in f64");
    let value = mantissa * 2f64.powi((shift - 64) as i32);
    if numerator.is_negative() {
        -value
    } else {
        value
    }
}

/// Probability that exactly `h` of `m` users pick a slot no one else picked
/// when each draws one of `l` slots uniformly at random.
pub fn resolve_prob(h: u64, m: u64, l: u64) -> Result<f64> {
    if l == 0 {
        return Err(Error::invalid("l", "frame must have at least one slot"));
    }
    if h > m {
        return Err(Error::invalid("h", format!("{h} resolved exceeds {m} contenders")));
    }
    if h > l {
        return Err(Error::invalid("h", format!("{h} resolved exceeds {l} slots")));
    }
    let mut num = no_singleton_arrangements(l - h, m - h);
    // C(L, h) * m (m-1) ... (m-h+1)
    for i in 0..h {
        num *= BigInt::from(m - i) * BigInt::from(l - i);
    }
    let mut h_fact = BigInt::one();
    for i in 2..=h {
        h_fact *= BigInt::from(i);
    }
    let num = num / h_fact;
    let den = BigUint::from(l).pow(m as u32);
    Ok(ratio_to_f64(&num, &den))
}

/// Probability that every one of `m` users gets a private slot among `l`.
pub(crate) fn all_resolved_prob(m: u64, l: u64) -> f64 {
    if m > l {
        return 0.0;
    }
    (0..m).map(|i| (l - i) as f64 / l as f64).product()
}

/// Binomial(n, p) probability mass for k = 0..=n, evaluated in the log domain.
pub fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    debug_assert!((0.0..=1.0).contains(&p));
    let mut pmf = vec![0.0; n as usize + 1];
    if p <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if p >= 1.0 {
        pmf[n as usize] = 1.0;
        return pmf;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    for (k, slot) in pmf.iter_mut().enumerate() {
        let k = k as u64;
        *slot = (ln_binomial(n, k) + k as f64 * lp + (n - k) as f64 * lq).exp();
    }
    pmf
}

/// `F(l, v, u) = sum_{t=l}^{v} C(v, t) u^t (1-u)^(v-t)`: binomial mass of
/// `{l, ..., v}` for `v` trials.
pub fn binomial_upper_mass(l: u64, v: u64, u: f64) -> f64 {
    if l > v {
        return 0.0;
    }
    binomial_pmf(v, u)[l as usize..].iter().sum()
}
