//! Canonical text form of a model. Numbers are printed as exact rationals so
//! that parsing the output yields a structurally equal model.

use std::fmt::Write;

use num::{One, Signed, Zero};

use super::{Constraint, Dtlhs, GuardedPredicate, Model, Symbol, VarKind};
use crate::rational::{self, Rational};

fn term_text(plant: &Dtlhs, s: Symbol) -> String {
    plant.symbol_name(s)
}

fn coeff_times(k: &Rational, name: &str) -> String {
    if k.is_one() {
        name.to_string()
    } else {
        format!("{}*{}", rational::format(k), name)
    }
}

pub(crate) fn constraint_text(plant: &Dtlhs, c: &Constraint) -> String {
    let mut out = String::new();
    if c.lhs.terms().is_empty() {
        out.push('0');
    }
    for (i, (s, k)) in c.lhs.terms().iter().enumerate() {
        let name = term_text(plant, *s);
        if i == 0 {
            if k.is_negative() {
                let _ = write!(out, "-{}", coeff_times(&-k.clone(), &name));
            } else {
                out.push_str(&coeff_times(k, &name));
            }
        } else if k.is_negative() {
            let _ = write!(out, " - {}", coeff_times(&-k.clone(), &name));
        } else {
            let _ = write!(out, " + {}", coeff_times(k, &name));
        }
    }
    debug_assert!(c.lhs.constant.is_zero());
    let _ = write!(out, " {} {}", c.relation.symbol(), rational::format(&c.rhs));
    out
}

pub(crate) fn predicate_text(plant: &Dtlhs, pred: &GuardedPredicate, indent: &str) -> String {
    let mut out = String::new();
    for c in &pred.conjuncts {
        out.push_str(indent);
        if let Some(g) = c.guard {
            let name = &plant.var(g.var).name;
            if g.positive {
                let _ = write!(out, "{name} -> ");
            } else {
                let _ = write!(out, "!{name} -> ");
            }
        }
        out.push_str(&constraint_text(plant, &c.body));
        out.push_str(";\n");
    }
    out
}

pub fn print_model(model: &Model) -> String {
    let plant = &model.plant;
    let levels = model.quantization.levels_by_name(plant);
    let mut out = String::new();
    for v in plant.vars() {
        let _ = write!(
            out,
            "{} {} {} [{}, {}]",
            v.role.keyword(),
            v.name,
            v.kind.keyword(),
            rational::format(&v.lo),
            rational::format(&v.hi)
        );
        if v.kind == VarKind::Real {
            if let Some(n) = levels.get(&v.name) {
                let _ = write!(out, " levels {n}");
            }
        }
        out.push_str(";\n");
    }
    out.push_str("trans {\n");
    out.push_str(&predicate_text(plant, plant.transition(), "  "));
    out.push_str("}\ngoal {\n");
    out.push_str(&predicate_text(plant, &model.goal, "  "));
    out.push_str("}\n");
    if let Some(init) = &model.init {
        out.push_str("init {\n");
        out.push_str(&predicate_text(plant, init, "  "));
        out.push_str("}\n");
    }
    out
}
