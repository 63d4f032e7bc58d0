//! Exact scalar values shared by the catalog, the rule language and telemetry.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of fractional digits carried by [`Decimal`].
pub const DECIMAL_PLACES: u32 = 6;
const SCALE: i128 = 1_000_000;

/// Fixed-point decimal with six fractional digits, stored as a scaled integer.
///
/// Addition, subtraction and multiplication are exact within range; division
/// truncates toward zero at the sixth fractional digit.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Decimal(i128);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecimalError {
    #[error("invalid decimal literal `{0}`")]
    Invalid(String),
    #[error("decimal literal `{0}` has more than {DECIMAL_PLACES} fractional digits")]
    TooPrecise(String),
    #[error("decimal overflow")]
    Overflow,
    #[error("division by zero")]
    DivisionByZero,
}

impl Decimal {
    pub const ZERO: Decimal = Decimal(0);
    pub const ONE: Decimal = Decimal(SCALE);

    pub fn from_int(v: i64) -> Self {
        Decimal(v as i128 * SCALE)
    }

    /// Raw scaled representation (value × 10^6).
    pub fn scaled(self) -> i128 {
        self.0
    }

    pub fn from_scaled(raw: i128) -> Self {
        Decimal(raw)
    }

    pub fn is_integer(self) -> bool {
        self.0 % SCALE == 0
    }

    pub fn to_i64(self) -> Option<i64> {
        if self.is_integer() {
            i64::try_from(self.0 / SCALE).ok()
        } else {
            None
        }
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn checked_add(self, rhs: Self) -> Result<Self, DecimalError> {
        self.0.checked_add(rhs.0).map(Decimal).ok_or(DecimalError::Overflow)
    }

    pub fn checked_sub(self, rhs: Self) -> Result<Self, DecimalError> {
        self.0.checked_sub(rhs.0).map(Decimal).ok_or(DecimalError::Overflow)
    }

    pub fn checked_mul(self, rhs: Self) -> Result<Self, DecimalError> {
        let wide = self.0.checked_mul(rhs.0).ok_or(DecimalError::Overflow)?;
        Ok(Decimal(wide / SCALE))
    }

    pub fn checked_div(self, rhs: Self) -> Result<Self, DecimalError> {
        if rhs.0 == 0 {
            return Err(DecimalError::DivisionByZero);
        }
        let wide = self.0.checked_mul(SCALE).ok_or(DecimalError::Overflow)?;
        Ok(Decimal(wide / rhs.0))
    }

    pub fn checked_neg(self) -> Result<Self, DecimalError> {
        self.0.checked_neg().map(Decimal).ok_or(DecimalError::Overflow)
    }
}

impl FromStr for Decimal {
    type Err = DecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || DecimalError::Invalid(s.to_string());
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(invalid());
        }
        if body.contains('.') && frac_part.is_empty() {
            return Err(invalid());
        }
        if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(invalid());
        }
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.len() > DECIMAL_PLACES as usize {
            return Err(DecimalError::TooPrecise(s.to_string()));
        }
        let int_val: i128 = int_part.parse().map_err(|_| DecimalError::Overflow)?;
        let mut frac_val: i128 = 0;
        for (i, b) in frac_trimmed.bytes().enumerate() {
            frac_val += (b - b'0') as i128 * 10i128.pow(DECIMAL_PLACES - 1 - i as u32);
        }
        let raw = int_val.checked_mul(SCALE).and_then(|v| v.checked_add(frac_val)).ok_or(DecimalError::Overflow)?;
        Ok(Decimal(if negative { -raw } else { raw }))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let int = abs / SCALE as u128;
        let frac = abs % SCALE as u128;
        if frac == 0 {
            write!(f, "{sign}{int}")
        } else {
            let digits = format!("{frac:06}");
            write!(f, "{sign}{int}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl From<i64> for Decimal {
    fn from(v: i64) -> Self {
        Decimal::from_int(v)
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.to_i64() {
            Some(i) => serializer.serialize_i64(i),
            None => serializer.serialize_f64(self.to_f64()),
        }
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(DecimalVisitor)
    }
}

struct DecimalVisitor;

impl Visitor<'_> for DecimalVisitor {
    type Value = Decimal;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a number")
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Decimal, E> {
        Ok(Decimal::from_int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Decimal, E> {
        i64::try_from(v).map(Decimal::from_int).map_err(|_| E::custom("number out of range"))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Decimal, E> {
        if !v.is_finite() {
            return Err(E::custom("non-finite number"));
        }
        // Shortest round-trip formatting recovers the literal as written.
        let text = format!("{v}");
        text.parse().map_err(E::custom)
    }
}

/// Kind of a characteristic value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ValueKind {
    Number,
    String,
    Boolean,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Number => "number",
            ValueKind::String => "string",
            ValueKind::Boolean => "boolean",
        })
    }
}

/// A characteristic value: number, string or boolean.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Number(Decimal),
    Str(String),
}

impl Scalar {
    pub fn kind(&self) -> ValueKind {
        match self {
            Scalar::Bool(_) => ValueKind::Boolean,
            Scalar::Number(_) => ValueKind::Number,
            Scalar::Str(_) => ValueKind::String,
        }
    }

    pub fn int(v: i64) -> Self {
        Scalar::Number(Decimal::from_int(v))
    }

    pub fn str(v: impl Into<String>) -> Self {
        Scalar::Str(v.into())
    }

    pub fn as_number(&self) -> Option<Decimal> {
        match self {
            Scalar::Number(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Scalar::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Number(d) => write!(f, "{d}"),
            Scalar::Str(s) => write!(f, "{s:?}"),
        }
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Scalar::Number(a), Scalar::Number(b)) => Some(a.cmp(b)),
            (Scalar::Str(a), Scalar::Str(b)) => Some(a.cmp(b)),
            (Scalar::Bool(a), Scalar::Bool(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }
}

impl From<Decimal> for Scalar {
    fn from(d: Decimal) -> Self {
        Scalar::Number(d)
    }
}

impl From<bool> for Scalar {
    fn from(b: bool) -> Self {
        Scalar::Bool(b)
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Str(s.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let cases = [("7", "7"), ("2.50", "2.5"), ("-0.125", "-0.125"), ("0.000001", "0.000001")];
        for (input, shown) in cases {
            let d: Decimal = input.parse().unwrap();
            assert_eq!(d.to_string(), shown);
        }
        assert!(matches!("1.0000001".parse::<Decimal>(), Err(DecimalError::TooPrecise(_))));
        assert!("1.".parse::<Decimal>().is_err());
        assert!(".5".parse::<Decimal>().is_err());
        assert!("1e3".parse::<Decimal>().is_err());
    }

    #[test]
    fn arithmetic() {
        let a: Decimal = "1.5".parse().unwrap();
        let b = Decimal::from_int(4);
        assert_eq!(a.checked_mul(b).unwrap(), Decimal::from_int(6));
        assert_eq!(Decimal::from_int(1).checked_div(Decimal::from_int(3)).unwrap().to_string(), "0.333333");
        assert_eq!(b.checked_div(Decimal::ZERO), Err(DecimalError::DivisionByZero));
    }

    #[test]
    fn json_round_trip() {
        let v: Vec<Scalar> = serde_json::from_str(r#"[1, 2.5, "eMBB", true]"#).unwrap();
        assert_eq!(v[0], Scalar::int(1));
        assert_eq!(v[1], Scalar::Number("2.5".parse().unwrap()));
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[1,2.5,"eMBB",true]"#);
    }
}
