use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Serialize};

/// Currency amount in integer minor units (cents).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Money {
    pub amount: i64,
    pub currency: String,
}

pub const EUR: &str = "EUR";

impl Money {
    pub fn eur_cents(cents: i64) -> Self {
        Money { amount: cents, currency: EUR.to_string() }
    }

    pub fn eur(whole: i64) -> Self {
        Self::eur_cents(whole * 100)
    }

    pub fn zero() -> Self {
        Self::eur_cents(0)
    }

    pub fn times(&self, n: i64) -> Money {
        Money { amount: self.amount * n, currency: self.currency.clone() }
    }

    /// Parses `7100`, `7100.5` or `7100.00` (whole euros with up to two decimals).
    pub fn parse_eur(text: &str) -> Option<Money> {
        let text = text.trim().replace(',', "");
        let (whole, frac) = match text.split_once('.') {
            Some((w, f)) => (w.to_string(), f.to_string()),
            None => (text.clone(), String::new()),
        };
        if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 2 {
            return None;
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let whole: i64 = whole.parse().ok()?;
        let frac_cents: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().ok()? * 10,
            _ => frac.parse().ok()?,
        };
        Some(Money::eur_cents(whole.checked_mul(100)?.checked_add(frac_cents)?))
    }
}

impl Add for Money {
    type Output = Money;

    fn add(self, rhs: Money) -> Money {
        debug_assert_eq!(self.currency, rhs.currency);
        Money { amount: self.amount + rhs.amount, currency: self.currency }
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::zero(), |a, b| a + b)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.amount < 0 { "-" } else { "" };
        let abs = self.amount.unsigned_abs();
        write!(f, "{sign}{}.{:02} {}", abs / 100, abs % 100, self.currency)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        assert_eq!(Money::eur(7100).to_string(), "7100.00 EUR");
        assert_eq!(Money::eur_cents(5).to_string(), "0.05 EUR");
        assert_eq!(Money::parse_eur("9000"), Some(Money::eur(9000)));
        assert_eq!(Money::parse_eur("9,000.5"), Some(Money::eur_cents(900050)));
        assert_eq!(Money::parse_eur("1.234"), None);
        assert_eq!(Money::parse_eur("abc"), None);
    }
}
