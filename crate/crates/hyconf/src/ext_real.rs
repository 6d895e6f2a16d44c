//! Real numbers extended with a single point at infinity.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

/// A real number or the point at infinity.
///
/// This is the value domain for all trace signals. Ordinary continuous
/// variables only ever take finite values; action indicator variables take
/// the value `0` everywhere except at the instant an action fires, where they
/// are infinite. Infinity compares greater than every finite value, and the
/// absolute difference of two infinities is zero, so two traces firing the
/// same action at comparable instants are at distance zero there.
///
/// Invariant: never NaN and never negative infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    /// Wraps a finite value. Panics on NaN or infinite input; use
    /// [`ExtReal::INFINITY`] for the point at infinity.
    pub fn finite(v: f64) -> ExtReal {
        assert!(v.is_finite(), "ExtReal::finite needs a finite value, got {v}");
        ExtReal(v)
    }

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// The underlying float; `f64::INFINITY` for the point at infinity.
    pub fn value(self) -> f64 {
        self.0
    }

    /// `|a - b|` with `|inf - inf| = 0` and `|inf - c| = inf` for finite `c`.
    pub fn abs_diff(self, other: ExtReal) -> ExtReal {
        match (self.is_infinite(), other.is_infinite()) {
            (true, true) => ExtReal::ZERO,
            (false, false) => ExtReal((self.0 - other.0).abs()),
            _ => ExtReal::INFINITY,
        }
    }
}

impl From<f64> for ExtReal {
    /// Accepts finite values and `f64::INFINITY`. Panics on NaN and negative
    /// infinity, which have no meaning in this domain.
    fn from(v: f64) -> ExtReal {
        assert!(
            v.is_finite() || v == f64::INFINITY,
            "ExtReal must be finite or +inf, got {v}"
        );
        ExtReal(v)
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        // Total by the type invariant (no NaN).
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for ExtReal {
    /// Shortest representation that parses back to the same value; the point
    /// at infinity prints as `inf`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for ExtReal {
    type Err = String;

    /// Parses either the literal `inf` or a finite decimal number.
    fn from_str(s: &str) -> Result<ExtReal, String> {
        let s = s.trim();
        if s == "inf" {
            return Ok(ExtReal::INFINITY);
        }
        let v: f64 = s.parse().map_err(|_| format!("not a number: `{s}`"))?;
        if v.is_finite() {
            Ok(ExtReal(v))
        } else {
            Err(format!("non-finite literal `{s}`; only `inf` is accepted"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_puts_infinity_on_top() {
        assert!(ExtReal::INFINITY > ExtReal::finite(1e308));
        assert!(ExtReal::finite(-3.0) < ExtReal::ZERO);
        assert_eq!(ExtReal::INFINITY, ExtReal::INFINITY);
    }

    #[test]
    fn abs_diff_handles_infinities() {
        let inf = ExtReal::INFINITY;
        let five = ExtReal::finite(5.0);
        assert_eq!(inf.abs_diff(inf), ExtReal::ZERO);
        assert_eq!(inf.abs_diff(five), inf);
        assert_eq!(five.abs_diff(inf), inf);
        assert_eq!(five.abs_diff(ExtReal::finite(2.0)), ExtReal::finite(3.0));
    }

    #[test]
    fn parses_inf_and_numbers() {
        assert_eq!("inf".parse::<ExtReal>().unwrap(), ExtReal::INFINITY);
        assert_eq!("2.5e-1".parse::<ExtReal>().unwrap(), ExtReal::finite(0.25));
        assert!("nan".parse::<ExtReal>().is_err());
        assert!("-inf".parse::<ExtReal>().is_err());
    }

    #[test]
    fn displays_round_trip() {
        for v in [0.0, -1.5, 2.0149030205422647e0, 1e-12] {
            let shown = ExtReal::finite(v).to_string();
            assert_eq!(shown.parse::<ExtReal>().unwrap(), ExtReal::finite(v));
        }
        assert_eq!(ExtReal::INFINITY.to_string(), "inf");
    }
}
