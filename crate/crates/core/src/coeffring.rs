//! Laurent polynomials in the deformation symbol `q` with arbitrary-precision
//! integer coefficients, and the signed deformation parameters `p = ±q^w`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoeffError {
    #[error("cannot evaluate a polynomial with negative exponents at zero")]
    ZeroArgument,
    #[error("malformed polynomial text: {0}")]
    Parse(String),
    #[error("malformed deformation parameter: {0}")]
    BadParam(String),
}

/// Integer-coefficient Laurent polynomial in `q`.
///
/// Terms are kept in a `BTreeMap` keyed by exponent, so iteration is ascending
/// and equality is structural. Zero coefficients are never stored.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LaurentPoly {
    terms: BTreeMap<i64, BigInt>,
}

impl LaurentPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::monomial(1, 0)
    }

    /// `c * q^e`.
    pub fn monomial(c: impl Into<BigInt>, e: i64) -> Self {
        let c = c.into();
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(e, c);
        }
        Self { terms }
    }

    pub fn from_terms<I, C>(it: I) -> Self
    where
        I: IntoIterator<Item = (i64, C)>,
        C: Into<BigInt>,
    {
        let mut p = Self::zero();
        for (e, c) in it {
            p.add_term(e, c.into());
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.get(&0).is_some_and(|c| c.is_one())
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, &BigInt)> {
        self.terms.iter().map(|(e, c)| (*e, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, e: i64) -> BigInt {
        self.terms.get(&e).cloned().unwrap_or_default()
    }

    fn add_term(&mut self, e: i64, c: BigInt) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(e).or_default();
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&e);
        }
    }

    /// Multiply by `q^k`.
    pub fn shift(&self, k: i64) -> Self {
        Self { terms: self.terms.iter().map(|(e, c)| (e + k, c.clone())).collect() }
    }

    pub fn scale(&self, s: &BigInt) -> Self {
        if s.is_zero() {
            return Self::zero();
        }
        Self { terms: self.terms.iter().map(|(e, c)| (*e, c * s)).collect() }
    }

    /// Value at `q = 1`.
    pub fn at_one(&self) -> BigInt {
        self.terms.values().sum()
    }

    /// Coefficient of `ε` in the expansion at `q = e^ε`.
    pub fn eps_linear(&self) -> BigInt {
        self.terms.iter().map(|(e, c)| c * BigInt::from(*e)).sum()
    }

    pub fn min_exp(&self) -> Option<i64> {
        self.terms.keys().next().copied()
    }

    /// Evaluation homomorphism at a complex point.
    pub fn eval(&self, x: Complex64) -> Result<Complex64, CoeffError> {
        if x == Complex64::zero() && self.terms.keys().any(|&e| e < 0) {
            return Err(CoeffError::ZeroArgument);
        }
        let mut acc = Complex64::zero();
        for (e, c) in &self.terms {
            let cf = c.to_f64().unwrap_or(f64::NAN);
            acc += x.powi(*e as i32) * cf;
        }
        Ok(acc)
    }

    /// Real evaluation; `x` must be nonzero when negative exponents occur.
    pub fn eval_real(&self, x: f64) -> Result<f64, CoeffError> {
        if x == 0.0 && self.terms.keys().any(|&e| e < 0) {
            return Err(CoeffError::ZeroArgument);
        }
        Ok(self
            .terms
            .iter()
            .map(|(e, c)| c.to_f64().unwrap_or(f64::NAN) * x.powi(*e as i32))
            .sum())
    }
}

impl fmt::Debug for LaurentPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for LaurentPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}*q^{e}")?;
        }
        Ok(())
    }
}

impl FromStr for LaurentPoly {
    type Err = CoeffError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(CoeffError::Parse(s.to_string()));
        }
        if compact == "0" {
            return Ok(Self::zero());
        }
        let mut out = Self::zero();
        // a '+' preceded by '^' belongs to an exponent
        let mut start = 0;
        let bytes = compact.as_bytes();
        let mut pieces = Vec::new();
        for i in 0..bytes.len() {
            if bytes[i] == b'+' && i > 0 && bytes[i - 1] != b'^' {
                pieces.push(&compact[start..i]);
                start = i + 1;
            }
        }
        pieces.push(&compact[start..]);
        for piece in pieces {
            let bad = || CoeffError::Parse(piece.to_string());
            let (c, e) = match piece.split_once('*') {
                Some((c, rest)) => {
                    let e = rest.strip_prefix("q^").ok_or_else(bad)?;
                    (c.parse::<BigInt>().map_err(|_| bad())?, e.parse::<i64>().map_err(|_| bad())?)
                }
                None => match piece.strip_prefix("q^") {
                    Some(e) => (BigInt::one(), e.parse::<i64>().map_err(|_| bad())?),
                    None => (piece.parse::<BigInt>().map_err(|_| bad())?, 0),
                },
            };
            out.add_term(e, c);
        }
        Ok(out)
    }
}

impl Serialize for LaurentPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LaurentPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Add<&LaurentPoly> for &LaurentPoly {
    type Output = LaurentPoly;
    fn add(self, rhs: &LaurentPoly) -> LaurentPoly {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Add for LaurentPoly {
    type Output = LaurentPoly;
    fn add(mut self, rhs: LaurentPoly) -> LaurentPoly {
        self += &rhs;
        self
    }
}

impl AddAssign<&LaurentPoly> for LaurentPoly {
    fn add_assign(&mut self, rhs: &LaurentPoly) {
        for (e, c) in &rhs.terms {
            self.add_term(*e, c.clone());
        }
    }
}

impl Neg for &LaurentPoly {
    type Output = LaurentPoly;
    fn neg(self) -> LaurentPoly {
        LaurentPoly { terms: self.terms.iter().map(|(e, c)| (*e, -c)).collect() }
    }
}

impl Neg for LaurentPoly {
    type Output = LaurentPoly;
    fn neg(self) -> LaurentPoly {
        -&self
    }
}

impl Sub<&LaurentPoly> for &LaurentPoly {
    type Output = LaurentPoly;
    fn sub(self, rhs: &LaurentPoly) -> LaurentPoly {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(*e, -c);
        }
        out
    }
}

impl Sub for LaurentPoly {
    type Output = LaurentPoly;
    fn sub(self, rhs: LaurentPoly) -> LaurentPoly {
        &self - &rhs
    }
}

impl Mul<&LaurentPoly> for &LaurentPoly {
    type Output = LaurentPoly;
    fn mul(self, rhs: &LaurentPoly) -> LaurentPoly {
        let mut out = LaurentPoly::zero();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &rhs.terms {
                out.add_term(e1 + e2, c1 * c2);
            }
        }
        out
    }
}

impl Mul for LaurentPoly {
    type Output = LaurentPoly;
    fn mul(self, rhs: LaurentPoly) -> LaurentPoly {
        &self * &rhs
    }
}

/// Deformation parameter `p = sign * q^power` of a site algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeformParam {
    pub sign: i8,
    pub power: u32,
}

impl DeformParam {
    pub const Q: Self = Self { sign: 1, power: 1 };
    pub const NEG_Q: Self = Self { sign: -1, power: 1 };
    pub const Q2: Self = Self { sign: 1, power: 2 };
    pub const NEG_Q2: Self = Self { sign: -1, power: 2 };

    pub const ALL: [Self; 4] = [Self::Q, Self::NEG_Q, Self::Q2, Self::NEG_Q2];

    /// `p^k` as a one-term Laurent polynomial.
    pub fn pow(self, k: i64) -> LaurentPoly {
        let c = if self.sign < 0 && k.rem_euclid(2) == 1 { -1 } else { 1 };
        LaurentPoly::monomial(c, k * self.power as i64)
    }

    /// Numeric value of `p` at `q = q0`.
    pub fn value(self, q0: f64) -> f64 {
        self.sign as f64 * q0.powi(self.power as i32)
    }

    pub fn is_positive(self) -> bool {
        self.sign > 0
    }
}

impl fmt::Display for DeformParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.sign < 0 { "-" } else { "" };
        if self.power == 1 {
            write!(f, "{s}q")
        } else {
            write!(f, "{s}q^{}", self.power)
        }
    }
}

impl FromStr for DeformParam {
    type Err = CoeffError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (sign, rest) = match t.strip_prefix('-') {
            Some(r) => (-1, r),
            None => (1, t),
        };
        let power = match rest {
            "q" => 1,
            _ => rest
                .strip_prefix("q^")
                .and_then(|p| p.parse::<u32>().ok())
                .filter(|&p| p > 0)
                .ok_or_else(|| CoeffError::BadParam(s.to_string()))?,
        };
        Ok(Self { sign, power })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_monomials_cancel() {
        let a = LaurentPoly::monomial(1, 1);
        let b = LaurentPoly::monomial(1, -1);
        assert!((&a * &b).is_one());
    }

    #[test]
    fn difference_of_squares() {
        let a = LaurentPoly::from_terms([(0, 1), (1, 1)]);
        let b = LaurentPoly::from_terms([(0, 1), (1, -1)]);
        assert_eq!(&a * &b, LaurentPoly::from_terms([(0, 1), (2, -1)]));
    }

    #[test]
    fn signed_param_powers() {
        assert_eq!(DeformParam::NEG_Q.pow(2), LaurentPoly::monomial(1, 2));
        assert_eq!(DeformParam::Q2.pow(-1), LaurentPoly::monomial(1, -2));
        assert_eq!(DeformParam::NEG_Q2.pow(3), LaurentPoly::monomial(-1, 6));
        assert!((&DeformParam::NEG_Q.pow(2) * &DeformParam::NEG_Q.pow(-2)).is_one());
        assert_eq!(DeformParam::NEG_Q.pow(-1), LaurentPoly::monomial(-1, -1));
    }

    #[test]
    fn evaluation() {
        let p = LaurentPoly::from_terms([(0, 1), (1, 1)]);
        assert!((p.eval_real(0.5).unwrap() - 1.5).abs() < 1e-15);
        let inv = LaurentPoly::monomial(1, -1);
        assert!((inv.eval_real(2.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(inv.eval(Complex64::zero()), Err(CoeffError::ZeroArgument));
        assert_eq!(LaurentPoly::one().eval_real(0.0).unwrap(), 1.0);
    }

    #[test]
    fn canonical_text() {
        let p = LaurentPoly::from_terms([(5, 1), (-2, -1), (0, 3)]);
        assert_eq!(p.to_string(), "-1*q^-2 + 3*q^0 + 1*q^5");
        assert_eq!(p.to_string().parse::<LaurentPoly>().unwrap(), p);
        assert_eq!("0".parse::<LaurentPoly>().unwrap(), LaurentPoly::zero());
        assert!("1*x^2".parse::<LaurentPoly>().is_err());
    }

    #[test]
    fn param_text() {
        for p in DeformParam::ALL {
            assert_eq!(p.to_string().parse::<DeformParam>().unwrap(), p);
        }
    }

    #[test]
    fn classical_expansion_helpers() {
        // q - 1 -> eps
        let p = LaurentPoly::from_terms([(1, 1), (0, -1)]);
        assert!(p.at_one().is_zero());
        assert_eq!(p.eps_linear(), BigInt::from(1));
        // q^-2 - q^2 -> -4 eps
        let p = LaurentPoly::from_terms([(-2, 1), (2, -1)]);
        assert_eq!(p.eps_linear(), BigInt::from(-4));
    }
}
