//! Exact rational helpers.
//!
//! Metric identities (rates summing to WER, EID equal to range width) are
//! asserted with `==`, so every value stays a `BigRational` until it is
//! printed.

use num::bigint::BigInt;
use num::{BigRational, Integer, Signed, ToPrimitive, Zero};

/// An exact non-integer quantity: a WER, a rate, or a difference of those.
pub type Rate = BigRational;

pub fn ratio(numer: usize, denom: usize) -> Rate {
    assert!(denom != 0, "ratio with zero denominator");
    Rate::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn zero() -> Rate {
    Rate::zero()
}

/// Arithmetic mean. Returns `None` for an empty input.
pub fn mean<'a, I>(values: I) -> Option<Rate>
where
    I: IntoIterator<Item = &'a Rate>,
{
    let mut sum = Rate::zero();
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        None
    } else {
        Some(sum / BigInt::from(n))
    }
}

/// Parses a plain decimal literal (`"4.03"`, `"-1.37"`, `"12"`) exactly.
pub fn parse_decimal(text: &str) -> Option<Rate> {
    let text = text.trim();
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let joined = format!("{int_part}{frac_part}");
    let numer: BigInt = joined.parse().ok()?;
    let denom = num::pow(BigInt::from(10), frac_part.len());
    let value = Rate::new(numer, denom);
    Some(if negative { -value } else { value })
}

/// Parses a percentage literal into a fraction: `"4.03"` becomes 403/10000.
pub fn parse_percent(text: &str) -> Option<Rate> {
    parse_decimal(text).map(|v| v / BigInt::from(100))
}

/// Rounds `value * 10^places` half away from zero and returns the integer.
fn scaled_round(value: &Rate, places: usize) -> BigInt {
    let scaled = value * num::pow(BigInt::from(10), places);
    let magnitude = scaled.abs();
    let (q, r) = magnitude.numer().div_rem(magnitude.denom());
    let rounded = if r * BigInt::from(2) >= *magnitude.denom() {
        q + 1
    } else {
        q
    };
    if scaled.is_negative() {
        -rounded
    } else {
        rounded
    }
}

/// Fixed-point decimal rendering with half-away-from-zero rounding.
pub fn format_fixed(value: &Rate, places: usize) -> String {
    let rounded = scaled_round(value, places);
    let negative = rounded.is_negative();
    let digits = rounded.abs().to_string();
    let digits = if digits.len() <= places {
        format!("{}{digits}", "0".repeat(places + 1 - digits.len()))
    } else {
        digits
    };
    let split = digits.len() - places;
    let (int_part, frac_part) = digits.split_at(split);
    let sign = if negative { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part}")
    }
}

/// Fraction rendered on the percentage scale with two decimals: 0.0981 → "9.81".
pub fn format_pct(value: &Rate) -> String {
    format_fixed(&(value * BigInt::from(100)), 2)
}

pub fn to_f64(value: &Rate) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}
