//! Exact rational scalars.
//!
//! All correctness-critical arithmetic in this crate runs on arbitrary-precision
//! rationals so that plan evaluation can be compared against the direct oracle
//! with zero tolerance. Samples enter the system either as decimal strings
//! (exact base-10 rationals) or as 64-bit floats (exact dyadic rationals);
//! both conversions are lossless.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational value.
pub type Exact = BigRational;

/// `base^exp` as a big integer.
pub fn pow_big(base: u32, exp: u32) -> BigInt {
    BigInt::from(base).pow(exp)
}

/// Lossless conversion from a finite `f64`.
pub fn exact_from_f64(x: f64) -> Result<Exact> {
    BigRational::from_float(x).ok_or(Error::NonFiniteInput)
}

/// Nearest-`f64` conversion (the only lossy step in the pipeline, used for
/// reporting and for the float-domain classifier).
pub fn exact_to_f64(x: &Exact) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Parses a decimal literal (`-12.34e-5` style) into an exact rational.
///
/// Accepted grammar: optional sign, digits with an optional fractional part
/// (at least one digit somewhere), optional `e`/`E` exponent.
pub fn parse_decimal(text: &str) -> Option<Exact> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let exp: i32 = s[pos + 1..].parse().ok()?;
            (&s[..pos], exp)
        }
        None => (s, 0),
    };

    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };

    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }

    let mut numer: BigInt = Zero::zero();
    for b in int_part.bytes().chain(frac_part.bytes()) {
        numer = numer * 10 + (b - b'0');
    }
    numer *= sign;

    let scale = exponent - frac_part.len() as i32;
    let value = if scale >= 0 {
        Exact::from_integer(numer * pow_big(10, scale as u32))
    } else {
        Exact::new(numer, pow_big(10, (-scale) as u32))
    };
    Some(value)
}

/// Rounds an exact rational to the nearest integer, ties to even.
pub fn round_half_even(x: &Exact) -> BigInt {
    let floor = x.floor().to_integer();
    let frac = x - Exact::from_integer(floor.clone());
    // frac in [0, 1); compare 2*frac_num with frac_den.
    let twice = frac.numer() * BigInt::from(2);
    match twice.cmp(frac.denom()) {
        std::cmp::Ordering::Less => floor,
        std::cmp::Ordering::Greater => floor + 1,
        std::cmp::Ordering::Equal => {
            if floor.is_even() {
                floor
            } else {
                floor + 1
            }
        }
    }
}

/// Splits a vector of rationals into integer numerators over one common
/// (positive) denominator: `values[i] = numerators[i] / denominator`.
pub fn common_denominator(values: &[Exact]) -> (Vec<BigInt>, BigInt) {
    let mut den: BigInt = One::one();
    for v in values {
        den = den.lcm(v.denom());
    }
    let numerators = values
        .iter()
        .map(|v| v.numer() * (&den / v.denom()))
        .collect();
    (numerators, den)
}

/// Euclidean norm of a rational vector, as the nearest `f64`.
pub fn norm_f64(values: &[Exact]) -> f64 {
    let sum: Exact = values.iter().map(|v| v * v).sum();
    exact_to_f64(&sum).sqrt()
}

/// True if the value is exactly zero.
pub fn is_zero(x: &Exact) -> bool {
    x.is_zero()
}
