//! Exact rational helpers shared by the model layer.

use num::bigint::BigInt;
use num::{One, Signed, ToPrimitive, Zero};

pub type Rational = num::BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Rational approximation of pi used wherever a model needs it.
pub fn pi() -> Rational {
    Rational::new(
        BigInt::from(314_159_265_358_979_i64),
        BigInt::from(100_000_000_000_000_i64),
    )
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Parses an unsigned decimal literal such as `12`, `0.637` or `1e-6`.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(pos) => (&mantissa[..pos], &mantissa[pos + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().ok()?
    };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        Rational::from_integer(numer * num::pow(ten, scale as usize))
    } else {
        Rational::new(numer, num::pow(ten, (-scale) as usize))
    };
    Some(value)
}

/// Exact textual form: `n` for integers, `n/d` otherwise.
pub fn format(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Rounds `x` to a multiple of `1/scale`, downward or upward.
pub fn round_to_grid(x: f64, scale: i64, upward: bool) -> Rational {
    let scaled = x * scale as f64;
    let n = if upward { scaled.ceil() } else { scaled.floor() };
    Rational::new(BigInt::from(n as i64), BigInt::from(scale))
}

pub fn nearest_on_grid(x: f64, scale: i64) -> Rational {
    let n = (x * scale as f64).round();
    Rational::new(BigInt::from(n as i64), BigInt::from(scale))
}

pub fn floor_to_i64(r: &Rational) -> i64 {
    r.floor().to_integer().to_i64().unwrap_or(if r.is_negative() { i64::MIN } else { i64::MAX })
}

pub fn ceil_to_i64(r: &Rational) -> i64 {
    r.ceil().to_integer().to_i64().unwrap_or(if r.is_negative() { i64::MIN } else { i64::MAX })
}

pub fn is_unit_interval(lo: &Rational, hi: &Rational) -> bool {
    !lo.is_negative() && *hi <= Rational::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_parse_exactly() {
        assert_eq!(parse_decimal("0.637"), Some(ratio(637, 1000)));
        assert_eq!(parse_decimal("12"), Some(int(12)));
        assert_eq!(parse_decimal("1e-6"), Some(ratio(1, 1_000_000)));
        assert_eq!(parse_decimal("2.5E2"), Some(int(250)));
        assert_eq!(parse_decimal(".5"), Some(ratio(1, 2)));
        assert_eq!(parse_decimal("abc"), None);
        assert_eq!(parse_decimal("."), None);
    }

    #[test]
    fn formatting_round_trips() {
        assert_eq!(format(&ratio(-7, 40)), "-7/40");
        assert_eq!(format(&int(3)), "3");
    }

    #[test]
    fn grid_rounding_is_directed() {
        assert!(round_to_grid(0.1234, 1000, false) <= ratio(1234, 10000));
        assert!(round_to_grid(0.1234, 1000, true) >= ratio(1234, 10000));
        assert_eq!(nearest_on_grid(-0.637, 1000), ratio(-637, 1000));
    }
}
