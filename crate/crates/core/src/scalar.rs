//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Every model quantity (probabilities, rewards, costs) is stored as a value of a type
//! implementing [`Scalar`]. Exact rationals give bit-exact verification of the identities
//! the designer and oracle rely on; `f64`/`f32` are available for fast exploratory runs.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid numeric literal `{0}`")]
pub struct LiteralError(pub String);

/// Ordered field used throughout the crate.
pub trait Scalar:
    Num + Signed + Clone + Debug + Display + PartialOrd + Send + Sync + 'static
{
    /// `true` when arithmetic is exact (rationals).
    const EXACT: bool;

    fn from_ratio(num: i64, den: i64) -> Self;

    fn to_f64(&self) -> f64;

    /// Parses `3`, `-0.25`, `1e-3`, or `1/3`.
    fn parse_literal(text: &str) -> Result<Self, LiteralError>;

    /// Equality up to the type's working precision: exact for rationals, a tight
    /// relative tolerance for floating point.
    fn near(&self, other: &Self) -> bool;

    fn from_usize(n: usize) -> Self {
        Self::from_ratio(n as i64, 1)
    }

    fn half() -> Self {
        Self::from_ratio(1, 2)
    }

    fn is_probability(&self) -> bool {
        *self >= Self::zero() && *self <= Self::one()
    }

    fn powi(&self, exp: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..exp {
            acc = acc * self.clone();
        }
        acc
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }
}

fn split_fraction(text: &str) -> Option<(&str, &str)> {
    let mut parts = text.splitn(2, '/');
    let num = parts.next()?;
    parts.next().map(|den| (num.trim(), den.trim()))
}

/// Exact decimal parsing: `-12.5e-3` → `-125/10000`.
fn parse_decimal_exact(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let joined = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(if joined.is_empty() { "0" } else { &joined }).ok()?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u8);
    let mut value = BigRational::from_integer(numer);
    if scale >= 0 {
        value *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if negative { -value } else { value })
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        // both parts exact in f64: one IEEE division is already correctly rounded
        const EXACT: i64 = 1 << 53;
        if let (Some(n), Some(d)) = (self.numer().to_i64(), self.denom().to_i64()) {
            if n.abs() <= EXACT && d <= EXACT {
                return n as f64 / d as f64;
            }
        }
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn parse_literal(text: &str) -> Result<Self, LiteralError> {
        let err = || LiteralError(text.to_string());
        match split_fraction(text) {
            Some((num, den)) => {
                let num = parse_decimal_exact(num).ok_or_else(err)?;
                let den = parse_decimal_exact(den).ok_or_else(err)?;
                if den.is_zero() {
                    return Err(err());
                }
                Ok(num / den)
            }
            None => parse_decimal_exact(text).ok_or_else(err),
        }
    }

    fn near(&self, other: &Self) -> bool {
        self == other
    }
}

macro_rules! float_scalar {
    ($t:ty, $tol:expr) => {
        impl Scalar for $t {
            const EXACT: bool = false;

            fn from_ratio(num: i64, den: i64) -> Self {
                num as $t / den as $t
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn parse_literal(text: &str) -> Result<Self, LiteralError> {
                let exact = BigRational::parse_literal(text)?;
                Ok(Scalar::to_f64(&exact) as $t)
            }

            fn near(&self, other: &Self) -> bool {
                let scale = self.abs().max(other.abs()).max(1.0);
                (self - other).abs() <= $tol * scale
            }
        }
    };
}

float_scalar!(f64, 1e-12);
float_scalar!(f32, 1e-5);

/// Converts between scalar types through the exact rational representation of the source.
pub fn convert<A: Scalar, B: Scalar>(value: &A) -> B {
    if A::EXACT {
        // Display of BigRational is `n/d` or `n`, both accepted by parse_literal.
        B::parse_literal(&value.to_string()).expect("exact display is a valid literal")
    } else {
        B::parse_literal(&format!("{}", value.to_f64())).unwrap_or_else(|_| B::zero())
    }
}

/// Renders an exact rational as `n/d` (or `n`), and floats with full round-trip precision.
pub fn literal<S: Scalar>(value: &S) -> String {
    if S::EXACT {
        value.to_string()
    } else {
        format!("{}", value.to_f64())
    }
}

pub fn zero<S: Scalar>() -> S {
    S::zero()
}

pub fn one<S: Scalar>() -> S {
    S::one()
}
