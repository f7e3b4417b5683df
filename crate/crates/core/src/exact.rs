//! Exact arithmetic for scaling factors and rates.
//!
//! Scaling factors of the approximation sequences are products of rational
//! numbers and square roots of rational numbers (for instance the length ratio
//! `sqrt(r/N)` of the unit-tau case). [`Surd`] keeps such numbers exact, and
//! [`GeometricSeq`] stores a quantity `scale * ratio^m` as the pair
//! `(scale, ratio)` so that rates can be compared without evaluating powers.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Parses `"3/5"`, `"0.6"`, `"-2"`, `"1e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let text = text.trim();
    let bad = || Error::Malformed(format!("cannot parse {text:?} as a rational number"));
    if let Some((num, den)) = text.split_once('/') {
        let num = parse_rational(num)?;
        let den = parse_rational(den)?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(num / den);
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer: BigInt = all_digits.parse().map_err(|_| bad())?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let mut value = BigRational::from_integer(numer);
    if scale >= 0 {
        value *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if negative { -value } else { value })
}

/// Exact rational from a finite `f64` via its shortest round-trip decimal
/// representation, so that `0.6` becomes `3/5` rather than a dyadic fraction.
pub fn rational_from_f64(x: f64) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(Error::Malformed(format!("non-finite number {x}")));
    }
    parse_rational(&format!("{x:e}"))
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Splits a positive integer as `f^2 * t` and returns `(f, t)`.
///
/// Trial division runs up to a fixed bound; a remaining cofactor is kept in
/// `t` even if it hides a large square, which only affects canonical form,
/// never equality (comparisons go through squares).
fn extract_square(n: &BigInt) -> (BigInt, BigInt) {
    const TRIAL_LIMIT: u64 = 1_000_000;
    let mut rest = n.clone();
    let mut factor = BigInt::one();
    let mut p: u64 = 2;
    while p <= TRIAL_LIMIT {
        let pp = BigInt::from(p) * BigInt::from(p);
        if pp > rest {
            break;
        }
        let pb = BigInt::from(p);
        while (&rest % &pp).is_zero() {
            rest /= &pp;
            factor *= &pb;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    (factor, rest)
}

/// A real number `coeff * sqrt(radicand)` with rational `coeff` and a
/// positive integer `radicand`.
#[derive(Clone, Debug)]
pub struct Surd {
    coeff: BigRational,
    radicand: BigInt,
}

impl Surd {
    pub fn zero() -> Self {
        Self::from_rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Self::from_rational(BigRational::one())
    }

    pub fn from_rational(q: BigRational) -> Self {
        Self {
            coeff: q,
            radicand: BigInt::one(),
        }
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_rational(rational(num, den))
    }

    /// Square root of a non-negative rational.
    pub fn sqrt_of(q: &BigRational) -> Result<Self> {
        if q.is_negative() {
            return Err(Error::DomainError(format!("square root of negative {q}")));
        }
        if q.is_zero() {
            return Ok(Self::zero());
        }
        let den = q.denom().clone();
        let (f, t) = extract_square(&(q.numer() * &den));
        Ok(Self {
            coeff: BigRational::new(f, den),
            radicand: t,
        })
    }

    pub fn coeff(&self) -> &BigRational {
        &self.coeff
    }

    pub fn radicand(&self) -> &BigInt {
        &self.radicand
    }

    /// `Some(q)` when the value is rational.
    pub fn as_rational(&self) -> Option<BigRational> {
        if self.coeff.is_zero() {
            return Some(BigRational::zero());
        }
        if self.radicand.is_one() {
            Some(self.coeff.clone())
        } else {
            None
        }
    }

    /// The exact square, always rational.
    pub fn square(&self) -> BigRational {
        &self.coeff * &self.coeff * BigRational::from_integer(self.radicand.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.coeff.is_positive()
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let c = rational_to_f64(&self.coeff);
        let s = self.radicand.to_f64().unwrap_or(f64::INFINITY);
        if c.is_normal() && s.is_finite() {
            return c * s.sqrt();
        }
        let sign = if self.coeff.is_negative() { -1.0 } else { 1.0 };
        sign * (0.5 * ln_rational(&self.square())).exp()
    }

    /// Natural logarithm of a positive value, computed without overflow.
    pub fn ln(&self) -> f64 {
        0.5 * ln_rational(&self.square())
    }

    pub fn mul(&self, other: &Surd) -> Surd {
        if self.is_zero() || other.is_zero() {
            return Surd::zero();
        }
        let g = self.radicand.gcd(&other.radicand);
        let a = &self.radicand / &g;
        let b = &other.radicand / &g;
        Surd {
            coeff: &self.coeff * &other.coeff * BigRational::from_integer(g),
            radicand: a * b,
        }
    }

    pub fn recip(&self) -> Result<Surd> {
        if self.is_zero() {
            return Err(Error::DomainError("reciprocal of zero".into()));
        }
        // 1/(c sqrt s) = sqrt(s) / (c s)
        Ok(Surd {
            coeff: (&self.coeff * BigRational::from_integer(self.radicand.clone())).recip(),
            radicand: self.radicand.clone(),
        })
    }

    pub fn div(&self, other: &Surd) -> Result<Surd> {
        Ok(self.mul(&other.recip()?))
    }

    pub fn scale(&self, q: &BigRational) -> Surd {
        Surd {
            coeff: &self.coeff * q,
            radicand: self.radicand.clone(),
        }
    }

    pub fn powi(&self, exp: i64) -> Result<Surd> {
        if exp < 0 {
            return self.recip()?.powi(-exp);
        }
        let e = exp as usize;
        let coeff = num_traits::pow(self.coeff.clone(), e);
        let half = num_traits::pow(self.radicand.clone(), e / 2);
        let radicand = if e % 2 == 1 {
            self.radicand.clone()
        } else {
            BigInt::one()
        };
        Ok(Surd {
            coeff: coeff * BigRational::from_integer(half),
            radicand,
        })
    }

    /// Square root of a surd whose value is rational; `None` otherwise.
    pub fn sqrt(&self) -> Option<Surd> {
        let q = self.as_rational()?;
        Surd::sqrt_of(&q).ok()
    }
}

fn ln_rational(q: &BigRational) -> f64 {
    ln_bigint(q.numer()) - ln_bigint(q.denom())
}

fn ln_bigint(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits < 1000 {
        return n.to_f64().map(|v| v.abs().ln()).unwrap_or(f64::NAN);
    }
    let shift = bits - 900;
    let top = (n.abs() >> shift as usize).to_f64().unwrap_or(f64::NAN);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

impl PartialEq for Surd {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Surd {}

impl PartialOrd for Surd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Surd {
    fn cmp(&self, other: &Self) -> Ordering {
        let sa = sign_of(&self.coeff);
        let sb = sign_of(&other.coeff);
        if sa != sb {
            return sa.cmp(&sb);
        }
        let by_square = self.square().cmp(&other.square());
        if sa == Sign::Minus {
            by_square.reverse()
        } else {
            by_square
        }
    }
}

fn sign_of(q: &BigRational) -> Sign {
    if q.is_zero() {
        Sign::NoSign
    } else if q.is_negative() {
        Sign::Minus
    } else {
        Sign::Plus
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.radicand.is_one() || self.coeff.is_zero() {
            write!(f, "{}", self.coeff)
        } else if self.coeff.is_one() {
            write!(f, "sqrt({})", self.radicand)
        } else {
            write!(f, "{}*sqrt({})", self.coeff, self.radicand)
        }
    }
}

/// Reads `"q"`, `"sqrt(q)"` or `"q*sqrt(p)"`, the forms produced by `Display`.
impl FromStr for Surd {
    type Err = Error;
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let (coeff, rest) = match text.split_once('*') {
            Some((c, r)) => (parse_rational(c)?, r.trim()),
            None if text.starts_with("sqrt") => (BigRational::one(), text),
            None => return Ok(Self::from_rational(parse_rational(text)?)),
        };
        let inner = rest
            .strip_prefix("sqrt(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Malformed(format!("cannot parse {text:?} as a surd")))?;
        Ok(Self::sqrt_of(&parse_rational(inner)?)?.scale(&coeff))
    }
}

/// The sequence `m -> scale * ratio^m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeometricSeq {
    pub scale: Surd,
    pub ratio: Surd,
}

impl GeometricSeq {
    pub fn new(scale: Surd, ratio: Surd) -> Self {
        Self { scale, ratio }
    }

    pub fn constant(scale: Surd) -> Self {
        Self::new(scale, Surd::one())
    }

    /// Exact value at generation `m`.
    pub fn at(&self, m: u32) -> Surd {
        self.scale
            .mul(&self.ratio.powi(m as i64).expect("non-negative power"))
    }

    /// Floating value at generation `m`, evaluated in log space.
    pub fn value(&self, m: u32) -> f64 {
        if self.scale.is_zero() {
            return 0.0;
        }
        if m <= 64 {
            let v = self.at(m).to_f64();
            if v.is_normal() {
                return v;
            }
        }
        let sign = if self.scale.is_positive() { 1.0 } else { -1.0 };
        sign * (self.scale.ln() + m as f64 * self.ratio.ln()).exp()
    }

    pub fn mul(&self, other: &GeometricSeq) -> GeometricSeq {
        GeometricSeq::new(self.scale.mul(&other.scale), self.ratio.mul(&other.ratio))
    }

    pub fn recip(&self) -> Result<GeometricSeq> {
        Ok(GeometricSeq::new(self.scale.recip()?, self.ratio.recip()?))
    }
}
