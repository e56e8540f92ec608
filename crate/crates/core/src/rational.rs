//! Rational helpers shared by the text and JSON formats.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

/// Parse `p/q` or `p` (q > 0 required when present).
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (s, "1"),
    };
    let p: BigInt = p.parse().map_err(|_| format!("bad rational numerator in {s:?}"))?;
    let q: BigInt = q.parse().map_err(|_| format!("bad rational denominator in {s:?}"))?;
    if q <= BigInt::zero() {
        return Err(format!("rational {s:?} needs a positive denominator"));
    }
    Ok(BigRational::new(p, q))
}

/// Canonical `p/q` form (reduced, q > 0).
pub fn fmt_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn rat_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact rational value of a finite double.
pub fn f64_to_rat(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}

pub fn rat_vec(xs: &[BigRational]) -> Vec<f64> {
    xs.iter().map(rat_to_f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        let r = parse_rational("2/6").unwrap();
        assert_eq!(fmt_rational(&r), "1/3");
        assert_eq!(fmt_rational(&parse_rational("-4").unwrap()), "-4/1");
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("1/-2").is_err());
        assert!(parse_rational("x").is_err());
        assert_eq!(rat_to_f64(&parse_rational("1/4").unwrap()), 0.25);
    }

    #[test]
    fn float_round_trip() {
        for x in [0.1, -3.75, 1e-20, 0.0] {
            assert_eq!(rat_to_f64(&f64_to_rat(x)), x);
        }
    }
}
