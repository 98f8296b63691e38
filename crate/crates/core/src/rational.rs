//! Exact rational helpers on top of `num-rational`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn uint(v: u64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// `n (n-1) ... (n-k+1)`; zero when `k > n`.
pub fn falling(n: u64, k: u32) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k as u64 {
        if i >= n {
            return BigInt::zero();
        }
        acc *= n - i;
    }
    acc
}

pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn in_unit_interval(r: &Rational) -> bool {
    *r >= Rational::zero() && *r <= Rational::one()
}

/// `numerator/denominator` as decimal strings, the serialized form of exact values.
pub fn to_parts(r: &Rational) -> (String, String) {
    (r.numer().to_string(), r.denom().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn falling_factorials() {
        assert_eq!(falling(8, 4), BigInt::from(1680));
        assert_eq!(falling(3, 4), BigInt::zero());
        assert_eq!(falling(5, 0), BigInt::one());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(32, 2), BigInt::from(496));
        assert_eq!(binomial(4, 7), BigInt::zero());
        assert_eq!(binomial(64, 32).to_string(), "1832624140942590534");
    }
}
