//! Named variable valuations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::ext_real::ExtReal;

#[derive(Debug, Error, PartialEq)]
pub enum ValuationError {
    #[error("variable `{0}` is not in the valuation's domain")]
    UnknownVariable(String),
}

/// A finite map from variable names to extended-real values.
///
/// The map is ordered by name, so two valuations over the same variable set
/// are comparable componentwise by iterating them in lockstep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Valuation(BTreeMap<String, ExtReal>);

impl Valuation {
    pub fn new() -> Valuation {
        Valuation(BTreeMap::new())
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<ExtReal>) {
        self.0.insert(name.into(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<ExtReal> {
        self.0.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    /// Variable names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn name_set(&self) -> BTreeSet<String> {
        self.0.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ExtReal)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Keeps exactly the variables in `vars`. Every requested variable must
    /// be present; restricting to variables outside the domain is an error.
    pub fn restrict(&self, vars: &BTreeSet<String>) -> Result<Valuation, ValuationError> {
        let mut out = BTreeMap::new();
        for name in vars {
            match self.0.get(name) {
                Some(v) => {
                    out.insert(name.clone(), *v);
                }
                None => return Err(ValuationError::UnknownVariable(name.clone())),
            }
        }
        Ok(Valuation(out))
    }

    /// True when both valuations have the same variables and every finite
    /// component differs by at most `tol`, with infinities matching exactly.
    pub fn approx_eq(&self, other: &Valuation, tol: f64) -> bool {
        if self.0.len() != other.0.len() {
            return false;
        }
        self.iter().zip(other.iter()).all(|((n1, v1), (n2, v2))| {
            n1 == n2
                && match (v1.is_infinite(), v2.is_infinite()) {
                    (true, true) => true,
                    (false, false) => (v1.value() - v2.value()).abs() <= tol,
                    _ => false,
                }
        })
    }
}

impl<N: Into<String>, V: Into<ExtReal>> FromIterator<(N, V)> for Valuation {
    fn from_iter<T: IntoIterator<Item = (N, V)>>(iter: T) -> Valuation {
        Valuation(
            iter.into_iter()
                .map(|(n, v)| (n.into(), v.into()))
                .collect(),
        )
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (name, value)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{name}: {value}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn restrict_keeps_requested_variables() {
        let v: Valuation = [("x", 5.0), ("y", 5.0), ("u", 1.0)].into_iter().collect();
        let r = v.restrict(&vars(&["y"])).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.get("y"), Some(ExtReal::finite(5.0)));
    }

    #[test]
    fn restrict_preserves_infinities() {
        let mut v = Valuation::new();
        v.insert("v_off", ExtReal::INFINITY);
        v.insert("y", 18.0);
        let r = v.restrict(&vars(&["v_off"])).unwrap();
        assert_eq!(r.get("v_off"), Some(ExtReal::INFINITY));
    }

    #[test]
    fn restrict_to_unknown_variable_fails() {
        let v: Valuation = [("x", 1.0)].into_iter().collect();
        assert_eq!(
            v.restrict(&vars(&["z"])),
            Err(ValuationError::UnknownVariable("z".into()))
        );
    }

    #[test]
    fn approx_eq_respects_tolerance_and_infinities() {
        let a: Valuation = [("x", 1.0), ("y", 2.0)].into_iter().collect();
        let b: Valuation = [("x", 1.0 + 5e-10), ("y", 2.0)].into_iter().collect();
        assert!(a.approx_eq(&b, 1e-9));
        assert!(!a.approx_eq(&b, 1e-10));

        let mut c = a.clone();
        c.insert("x", ExtReal::INFINITY);
        assert!(!a.approx_eq(&c, 1.0));
        assert!(c.approx_eq(&c.clone(), 0.0));
    }
}
