use num_bigint::BigUint;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::{Error, Rational, Result};

/// `ceil(scale * base^exponent)` computed exactly.
///
/// With `exponent = a/b` this is the least integer `x` such that
/// `x^b * base^max(-a,0) >= scale^b * base^max(a,0)`, found from a floating
/// point guess and corrected with big-integer comparisons.
pub fn ceil_scaled_power(scale: u64, base: u64, exponent: Rational) -> Result<u64> {
    if scale == 0 {
        return Ok(0);
    }
    if base == 0 {
        return if exponent.is_positive() {
            Ok(0)
        } else if exponent.is_zero() {
            Ok(scale)
        } else {
            Err(Error::InvalidParameter("zero base with negative exponent".into()))
        };
    }
    let (a, b) = (*exponent.numer(), *exponent.denom());
    let b = u32::try_from(b).map_err(|_| Error::InvalidParameter("exponent denominator too large".into()))?;
    let pos = u32::try_from(a.max(0)).map_err(|_| Error::InvalidParameter("exponent too large".into()))?;
    let neg = u32::try_from((-a).max(0)).map_err(|_| Error::InvalidParameter("exponent too large".into()))?;

    let base_big = BigUint::from(base);
    let rhs = BigUint::from(scale).pow(b) * base_big.pow(pos);
    let lhs_factor = base_big.pow(neg);
    let ok = |x: u64| BigUint::from(x).pow(b) * &lhs_factor >= rhs;

    let guess = scale as f64 * libm::pow(base as f64, a as f64 / b as f64);
    if !guess.is_finite() || guess > 1.0e18 {
        return Err(Error::InvalidParameter("ceil_scaled_power result exceeds u64 range".into()));
    }
    let mut x = libm::ceil(guess).max(0.0) as u64;
    while x > 0 && ok(x - 1) {
        x -= 1;
    }
    while !ok(x) {
        x += 1;
    }
    Ok(x)
}

/// Convert an exact rational to the nearest `f64`.
pub(crate) fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn integer_powers_are_exact() {
        assert_eq!(ceil_scaled_power(1, 8, r(2, 1)).unwrap(), 64);
        assert_eq!(ceil_scaled_power(1, 2, r(10, 1)).unwrap(), 1024);
        assert_eq!(ceil_scaled_power(1, 4, r(3, 4)).unwrap(), 3);
        assert_eq!(ceil_scaled_power(1, 16, r(3, 4)).unwrap(), 8);
    }

    #[test]
    fn fractional_powers() {
        // 2^(7/2) = 11.31..., 8^(7/27) = 2^(21/27) = 1.71...
        assert_eq!(ceil_scaled_power(1, 2, r(7, 2)).unwrap(), 12);
        assert_eq!(ceil_scaled_power(1, 8, r(7, 27)).unwrap(), 2);
        assert_eq!(ceil_scaled_power(1, 32, r(7, 2)).unwrap(), 185_364);
        // negative exponent: 16 * 4^(-1/2) = 8 exactly
        assert_eq!(ceil_scaled_power(16, 4, r(-1, 2)).unwrap(), 8);
        assert_eq!(ceil_scaled_power(1, 100, r(-1, 2)).unwrap(), 1);
        assert_eq!(ceil_scaled_power(5, 7, r(0, 1)).unwrap(), 5);
    }
}
