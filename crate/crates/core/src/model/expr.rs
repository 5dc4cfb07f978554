use std::collections::BTreeMap;

use num::Zero;

use super::Symbol;
use crate::rational::Rational;

/// Linear combination of symbols plus a constant. Terms are kept sorted by
/// symbol with at most one entry per symbol and no zero coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LinearExpr {
    terms: Vec<(Symbol, Rational)>,
    pub constant: Rational,
}

impl LinearExpr {
    pub fn zero() -> Self {
        LinearExpr::default()
    }

    pub fn constant(c: Rational) -> Self {
        LinearExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn symbol(s: Symbol) -> Self {
        LinearExpr::term(s, Rational::from_integer(1.into()))
    }

    pub fn term(s: Symbol, k: Rational) -> Self {
        let mut e = LinearExpr::zero();
        e.add_term(s, k);
        e
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Symbol, Rational)>, constant: Rational) -> Self {
        let mut e = LinearExpr::constant(constant);
        for (s, k) in terms {
            e.add_term(s, k);
        }
        e
    }

    pub fn terms(&self) -> &[(Symbol, Rational)] {
        &self.terms
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, s: Symbol) -> Option<Rational> {
        self.terms
            .binary_search_by(|(t, _)| t.cmp(&s))
            .ok()
            .map(|i| self.terms[i].1.clone())
    }

    pub fn remove(&mut self, s: Symbol) {
        if let Ok(i) = self.terms.binary_search_by(|(t, _)| t.cmp(&s)) {
            self.terms.remove(i);
        }
    }

    pub fn add_term(&mut self, s: Symbol, k: Rational) {
        match self.terms.binary_search_by(|(t, _)| t.cmp(&s)) {
            Ok(i) => {
                self.terms[i].1 += k;
                if self.terms[i].1.is_zero() {
                    self.terms.remove(i);
                }
            }
            Err(i) => {
                if !k.is_zero() {
                    self.terms.insert(i, (s, k));
                }
            }
        }
    }

    pub fn add(&self, other: &LinearExpr) -> LinearExpr {
        let mut out = self.clone();
        for (s, k) in &other.terms {
            out.add_term(*s, k.clone());
        }
        out.constant += &other.constant;
        out
    }

    pub fn sub(&self, other: &LinearExpr) -> LinearExpr {
        self.add(&other.scale(&-Rational::from_integer(1.into())))
    }

    pub fn scale(&self, k: &Rational) -> LinearExpr {
        if k.is_zero() {
            return LinearExpr::zero();
        }
        LinearExpr {
            terms: self.terms.iter().map(|(s, c)| (*s, c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn value(&self, assignment: &BTreeMap<Symbol, Rational>) -> Option<Rational> {
        let mut v = self.constant.clone();
        for (s, k) in &self.terms {
            v += k * assignment.get(s)?;
        }
        Some(v)
    }
}
