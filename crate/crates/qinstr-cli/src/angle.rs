//! Angle literals for command-line flags.
//!
//! Rotation angles are naturally multiples of π, and a decimal expansion
//! of π/8 typed by hand would silently differ from the value a test
//! computes. The parser therefore evaluates the symbolic forms itself:
//! `pi`, `pi/8`, `0.08pi`, `-3pi/4` all reduce to the same floats the
//! library produces, and anything without a `pi` suffix is read as plain
//! radians.

use std::f64::consts::PI;

/// Parse an angle literal: `[-]<coef>pi[/<den>]`, `[-]pi[/<den>]`, or a
/// decimal radian value. Usable directly as a clap value parser.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (sign, t) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, t.strip_prefix('+').unwrap_or(t)),
    };
    if t.is_empty() {
        return Err("empty angle".into());
    }

    let value = if let Some(pos) = t.find("pi") {
        let (coef_s, rest) = (&t[..pos], &t[pos + 2..]);
        let coef = if coef_s.is_empty() { 1.0 } else { parse_number(coef_s)? };
        let den = match rest.strip_prefix('/') {
            Some(d) => {
                let den = parse_number(d)?;
                if den == 0.0 {
                    return Err("zero denominator".into());
                }
                den
            }
            None if rest.is_empty() => 1.0,
            None => return Err(format!("unexpected trailing `{rest}` after pi")),
        };
        coef * PI / den
    } else {
        parse_number(t)?
    };

    if !value.is_finite() {
        return Err(format!("angle `{s}` is not finite"));
    }
    Ok(sign * value)
}

fn parse_number(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_8};

    #[test]
    fn symbolic_forms_are_exact() {
        assert_eq!(parse_angle("pi").unwrap(), PI);
        assert_eq!(parse_angle("pi/2").unwrap(), FRAC_PI_2);
        assert_eq!(parse_angle("pi/8").unwrap(), FRAC_PI_8);
        assert_eq!(parse_angle("-pi/2").unwrap(), -FRAC_PI_2);
        assert_eq!(parse_angle("0.08pi").unwrap(), 0.08 * PI);
        assert_eq!(parse_angle("3pi/4").unwrap(), 3.0 * PI / 4.0);
        assert_eq!(parse_angle("2pi").unwrap(), 2.0 * PI);
    }

    #[test]
    fn decimal_and_sign_forms() {
        assert_eq!(parse_angle("1.5708").unwrap(), 1.5708);
        assert_eq!(parse_angle("-0.25").unwrap(), -0.25);
        assert_eq!(parse_angle("+0.25").unwrap(), 0.25);
        assert_eq!(parse_angle("0").unwrap(), 0.0);
        assert_eq!(parse_angle(" pi ").unwrap(), PI);
    }

    #[test]
    fn junk_is_rejected() {
        for bad in ["", "-", "pie", "pi/0", "2pi/", "pi/2x", "xpi", "1e999", "nan"] {
            assert!(parse_angle(bad).is_err(), "`{bad}` should not parse");
        }
    }
}
