//! Baseline hash families: polynomials over the Mersenne prime 2^61 - 1,
//! multiply-shift, and a seeded truly random oracle.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::rng::{splitmix64, TrialRng};

pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[inline]
fn reduce_mersenne(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let mut r = (x & p) + (x >> 61);
    r = (r & p) + (r >> 61);
    if r >= p {
        r -= p;
    }
    r as u64
}

#[inline]
pub fn mul_mod_mersenne(a: u64, b: u64) -> u64 {
    reduce_mersenne(a as u128 * b as u128)
}

/// Degree-(k-1) polynomial hash `((a_{k-1} x^{k-1} + ... + a_0) mod p) mod t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyFamily {
    k: usize,
    modulus: u64,
    t: u64,
    /// `coeffs[i]` multiplies `x^i`.
    coeffs: Vec<u64>,
}

impl PolyFamily {
    pub fn sample<R: Rng + ?Sized>(k: usize, t: u64, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroIndependence);
        }
        if !t.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(t));
        }
        if t > MERSENNE_61 {
            return Err(Error::InvalidParameter(format!("t = {t} exceeds the prime modulus")));
        }
        let coeffs = (0..k).map(|_| rng.random_range(0..MERSENNE_61)).collect();
        Ok(Self { k, modulus: MERSENNE_61, t, coeffs })
    }

    /// Fixed coefficients over 2^61 - 1 (lowest degree first).
    pub fn from_coeffs(coeffs: Vec<u64>, t: u64) -> Result<Self> {
        if !t.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(t));
        }
        Self::with_modulus(coeffs, MERSENNE_61, t)
    }

    /// Arbitrary prime modulus and range; used by exhaustive small-field checks.
    pub fn with_modulus(coeffs: Vec<u64>, modulus: u64, t: u64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::ZeroIndependence);
        }
        if t == 0 || t > modulus {
            return Err(Error::InvalidParameter(format!("range {t} must lie in [1, {modulus}]")));
        }
        if coeffs.iter().any(|&c| c >= modulus) {
            return Err(Error::InvalidParameter("coefficient not reduced mod p".into()));
        }
        Ok(Self { k: coeffs.len(), modulus, t, coeffs })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    /// Value of the polynomial mod p, before the final reduction mod t.
    pub fn eval_mod_p(&self, x: u64) -> u64 {
        if self.modulus == MERSENNE_61 {
            let x = reduce_mersenne(x as u128);
            self.coeffs
                .iter()
                .rev()
                .fold(0u64, |acc, &c| reduce_mersenne(mul_mod_mersenne(acc, x) as u128 + c as u128))
        } else {
            let p = self.modulus as u128;
            let x = x as u128 % p;
            self.coeffs
                .iter()
                .rev()
                .fold(0u128, |acc, &c| (acc * x + c as u128) % p) as u64
        }
    }

    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        debug_assert!(x < self.modulus, "key {x} outside the field");
        let v = self.eval_mod_p(x);
        if self.t.is_power_of_two() {
            v & (self.t - 1)
        } else {
            v % self.t
        }
    }
}

/// Exact dyadic fraction `num / 2^bits` in `[0, 1)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Dyadic {
    num: u64,
    bits: u32,
}

impl Dyadic {
    pub fn new(num: u64, bits: u32) -> Result<Self> {
        if bits > 64 || (bits < 64 && num >> bits != 0) {
            return Err(Error::InvalidParameter(format!("{num}/2^{bits} is not in [0,1)")));
        }
        Ok(Self { num, bits })
    }

    pub fn zero() -> Self {
        Self { num: 0, bits: 0 }
    }

    pub fn half() -> Self {
        Self { num: 1, bits: 1 }
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// `2^bits - num`, as a u128 to cover `bits = 64`.
    fn complement(&self) -> u128 {
        (1u128 << self.bits) - self.num as u128
    }

    /// `(1 - v) mod 1`.
    pub fn one_minus(&self) -> Self {
        if self.num == 0 {
            return *self;
        }
        Self { num: self.complement() as u64, bits: self.bits }
    }

    /// Circular distance to zero, `min(v mod 1, -v mod 1)`.
    pub fn circ_norm(&self) -> Self {
        if self.num as u128 <= self.complement() {
            *self
        } else {
            self.one_minus()
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / (1u128 << self.bits) as f64
    }

    pub fn to_rational(&self) -> Rational {
        Rational::new(self.num.into(), num_bigint::BigInt::from(1u128 << self.bits))
    }

    /// `self <= num / den` without rounding.
    pub fn le_ratio(&self, num: u128, den: u128) -> bool {
        // num_self * den <= num * 2^bits, in big integers: both sides may exceed 2^128.
        let lhs = num_bigint::BigUint::from(self.num) * den;
        let rhs = num_bigint::BigUint::from(num) << self.bits;
        lhs <= rhs
    }
}

impl PartialEq for Dyadic {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Dyadic {}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        // a / 2^x vs b / 2^y  <=>  a * 2^y vs b * 2^x ; both < 2^128.
        let lhs = (self.num as u128) << other.bits;
        let rhs = (other.num as u128) << self.bits;
        lhs.cmp(&rhs)
    }
}

/// Circular norm of a dyadic fraction.
pub fn circ_norm(v: Dyadic) -> Dyadic {
    v.circ_norm()
}

#[inline]
fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Multiply-(add-)shift hash `((a x + b) mod 2^ell) >> (ell - ell_out)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultShiftFn {
    ell: u32,
    ell_out: u32,
    a: u64,
    b: u64,
}

impl MultShiftFn {
    pub fn new(ell: u32, ell_out: u32, a: u64, b: u64) -> Result<Self> {
        if ell == 0 || ell > 64 {
            return Err(Error::InvalidParameter(format!("ell = {ell} must be in 1..=64")));
        }
        if ell_out > ell {
            return Err(Error::InvalidParameter(format!("ell_out = {ell_out} exceeds ell = {ell}")));
        }
        let mask = low_mask(ell);
        if a & !mask != 0 || b & !mask != 0 {
            return Err(Error::InvalidParameter("multiplier or offset wider than ell bits".into()));
        }
        Ok(Self { ell, ell_out, a, b })
    }

    /// Basic scheme, no additive term.
    pub fn basic(ell: u32, ell_out: u32, a: u64) -> Result<Self> {
        Self::new(ell, ell_out, a, 0)
    }

    /// Random odd multiplier; with `with_offset` a uniform `b` as well.
    pub fn sample_odd<R: Rng + ?Sized>(ell: u32, ell_out: u32, with_offset: bool, rng: &mut R) -> Result<Self> {
        let mask = low_mask(ell);
        let a = (rng.next_u64() & mask) | 1;
        let b = if with_offset { rng.next_u64() & mask } else { 0 };
        Self::new(ell, ell_out, a, b)
    }

    /// Uniform multiplier over all of `[2^ell)`, odd or even.
    pub fn sample_any<R: Rng + ?Sized>(ell: u32, ell_out: u32, with_offset: bool, rng: &mut R) -> Result<Self> {
        let mask = low_mask(ell);
        let a = rng.next_u64() & mask;
        let b = if with_offset { rng.next_u64() & mask } else { 0 };
        Self::new(ell, ell_out, a, b)
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn ell_out(&self) -> u32 {
        self.ell_out
    }

    pub fn a(&self) -> u64 {
        self.a
    }

    pub fn b(&self) -> u64 {
        self.b
    }

    /// `(a x + b) mod 2^ell`.
    #[inline]
    pub fn raw(&self, x: u64) -> u64 {
        self.a.wrapping_mul(x).wrapping_add(self.b) & low_mask(self.ell)
    }

    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        let shift = self.ell - self.ell_out;
        if shift >= 64 {
            0
        } else {
            self.raw(x) >> shift
        }
    }

    /// `h^0(x) = ((a x + b) mod 2^ell) / 2^ell`.
    pub fn frac(&self, x: u64) -> Dyadic {
        Dyadic { num: self.raw(x), bits: self.ell }
    }
}

/// Lazily memoized truly random function into `[t]`.
///
/// The slot for a key is a pure function of `(seed, key)`, so the oracle
/// answers identically regardless of query order.
#[derive(Debug, Clone)]
pub struct RandomOracle {
    seed: u64,
    t: u64,
    memo: HashMap<u64, u64>,
}

impl RandomOracle {
    pub fn new(seed: u64, t: u64) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidParameter("oracle range must be non-empty".into()));
        }
        Ok(Self { seed, t, memo: HashMap::new() })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn touched(&self) -> usize {
        self.memo.len()
    }

    fn draw(seed: u64, t: u64, key: u64) -> u64 {
        let mut rng = TrialRng::seed_from_u64(splitmix64(seed) ^ splitmix64(key ^ 0x5bd1_e995));
        if t.is_power_of_two() {
            rng.next_u64() & (t - 1)
        } else {
            rng.random_range(0..t)
        }
    }

    pub fn eval(&mut self, key: u64) -> u64 {
        let (seed, t) = (self.seed, self.t);
        *self.memo.entry(key).or_insert_with(|| Self::draw(seed, t, key))
    }
}
