//! Exact rational arithmetic — the only numeric carrier in the engine.
//!
//! Every probability, distance, coupling weight and bound is a [`Rat`]:
//! an arbitrary-precision rational kept in lowest terms with a positive
//! denominator. No floating point enters any computation; decimal strings
//! are produced for display only.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::Error;

/// Arbitrary-precision rational number, always normalized.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rat(BigRational);

impl Rat {
    pub fn zero() -> Self {
        Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Rat(BigRational::one())
    }

    /// `numer / denom` from machine integers. Panics if `denom == 0`.
    pub fn new(numer: i64, denom: i64) -> Self {
        Rat(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn from_int(n: i64) -> Self {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_big(numer: BigInt, denom: BigInt) -> Self {
        Rat(BigRational::new(numer, denom))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn as_big_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn into_big_rational(self) -> BigRational {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Self {
        Rat(self.0.abs())
    }

    pub fn recip(&self) -> Self {
        Rat(self.0.recip())
    }

    pub fn pow(&self, exp: u32) -> Self {
        Rat(self.0.pow(exp as i32))
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// True iff the value lies in the closed unit interval.
    pub fn in_unit_interval(&self) -> bool {
        !self.is_negative() && self.0 <= BigRational::one()
    }

    /// Largest multiple of `1/denom` that is `<= self`.
    pub fn floor_to_denominator(&self, denom: u64) -> Self {
        let d = BigInt::from(denom);
        let scaled = (&self.0 * BigRational::from_integer(d.clone())).floor();
        Rat(scaled / BigRational::from_integer(d))
    }

    /// Parses `p/q` or an integer. Decimal literals are rejected.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let s = text.trim();
        let bad = |_| Error::BadRational(text.to_string());
        match s.split_once('/') {
            Some((p, q)) => {
                let numer = BigInt::from_str(p.trim()).map_err(bad)?;
                let denom = BigInt::from_str(q.trim()).map_err(bad)?;
                if denom.is_zero() {
                    return Err(Error::BadRational(text.to_string()));
                }
                Ok(Rat(BigRational::new(numer, denom)))
            }
            None => {
                let numer = BigInt::from_str(s).map_err(bad)?;
                Ok(Rat(BigRational::from_integer(numer)))
            }
        }
    }

    /// Always renders with an explicit denominator, e.g. `0/1`, `23/72`.
    pub fn fraction_string(&self) -> String {
        format!("{}/{}", self.0.numer(), self.0.denom())
    }

    /// Decimal approximation with `digits` places, rounded half away
    /// from zero. Presentation only — never fed back into arithmetic.
    pub fn decimal_string(&self, digits: usize) -> String {
        let sign = if self.0.is_negative() { "-" } else { "" };
        let ten = BigInt::from(10u32);
        let scale = ten.pow(digits as u32);
        let numer = self.0.numer().abs() * &scale;
        let denom = self.0.denom().clone();
        let mut q = &numer / &denom;
        let r = &numer % &denom;
        if &r * 2 >= denom {
            q += 1;
        }
        let int_part = &q / &scale;
        let frac_part = &q % &scale;
        if digits == 0 {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac_part:0>width$}", width = digits)
        }
    }

    /// Lossy conversion used nowhere in the engine; provided for callers
    /// that want a quick plot or log line.
    pub fn to_f64_lossy(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl From<i64> for Rat {
    fn from(n: i64) -> Self {
        Rat::from_int(n)
    }
}

impl From<BigRational> for Rat {
    fn from(r: BigRational) -> Self {
        Rat(r)
    }
}

impl FromStr for Rat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rat::parse(s)
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat((self.0).$method(rhs.0))
            }
        }
        impl $trait for &Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<&Rat> for Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((self.0).$method(&rhs.0))
            }
        }
        impl $trait<Rat> for &Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat((&self.0).$method(rhs.0))
            }
        }
    };
}

impl_binop!(Add, add);
impl_binop!(Sub, sub);
impl_binop!(Mul, mul);
impl_binop!(Div, div);

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl Neg for &Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-&self.0)
    }
}

impl AddAssign<&Rat> for Rat {
    fn add_assign(&mut self, rhs: &Rat) {
        self.0 += &rhs.0;
    }
}

impl AddAssign for Rat {
    fn add_assign(&mut self, rhs: Rat) {
        self.0 += rhs.0;
    }
}

impl SubAssign<&Rat> for Rat {
    fn sub_assign(&mut self, rhs: &Rat) {
        self.0 -= &rhs.0;
    }
}

impl Sum for Rat {
    fn sum<I: Iterator<Item = Rat>>(iter: I) -> Rat {
        iter.fold(Rat::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rat> for Rat {
    fn sum<I: Iterator<Item = &'a Rat>>(iter: I) -> Rat {
        iter.fold(Rat::zero(), |acc, x| acc + x)
    }
}

impl serde::Serialize for Rat {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.fraction_string())
    }
}

/// Convenience comparison against small integers in tests and guards.
impl PartialEq<i64> for Rat {
    fn eq(&self, other: &i64) -> bool {
        self.0 == BigRational::from_integer(BigInt::from(*other))
    }
}

impl PartialOrd<i64> for Rat {
    fn partial_cmp(&self, other: &i64) -> Option<Ordering> {
        self.0
            .partial_cmp(&BigRational::from_integer(BigInt::from(*other)))
    }
}

/// Shorthand used pervasively in tests: `rat!(2, 5)` or `rat!(3)`.
#[macro_export]
macro_rules! rat {
    ($n:expr) => {
        $crate::rational::Rat::from_int($n)
    };
    ($n:expr, $d:expr) => {
        $crate::rational::Rat::new($n, $d)
    };
}
