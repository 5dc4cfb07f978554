//! Recursive-descent parser for the model language.
//!
//! ```text
//! state  x real [-1, 5/2] levels 7;
//! input  u bool;
//! trans { !u -> x' = x + (5/4 - x)/10;  u -> x' = x + (x - 7/4)/10; }
//! goal  { x = 0; }
//! init  { -1 <= x <= 5/2; }
//! ```

use std::collections::BTreeMap;

use num::{One, Zero};

use super::{
    Constraint, Dtlhs, GuardedConstraint, GuardedPredicate, LinearExpr, Model, ModelError, Relation, Symbol, VarKind, VarRole,
    Variable,
};
use crate::quantizer::Quantization;
use crate::rational::{self, Rational};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Primed(String),
    Number(Rational),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Primed(s) => format!("`{s}'`"),
        Tok::Number(n) => format!("number {}", rational::format(n)),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of input".to_string(),
    }
}

const PUNCT: &[&str] = &["<=", ">=", "==", "->", "[", "]", ",", ";", "{", "}", "(", ")", "+", "-", "*", "/", "=", "!"];

fn tokenize(text: &str) -> Result<Vec<Token>, ModelError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, message: String| ModelError::Syntax { line, column, message };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let name: String = chars[i..j].iter().collect();
            let tok = if j < chars.len() && chars[j] == '\'' {
                j += 1;
                Tok::Primed(name)
            } else {
                Tok::Ident(name)
            };
            col += j - i;
            i = j;
            out.push(Token {
                tok,
                line: start_line,
                column: start_col,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let lit: String = chars[i..j].iter().collect();
            let value = rational::parse_decimal(&lit.replace("e+", "e").replace("E+", "E"))
                .ok_or_else(|| err(start_line, start_col, format!("malformed number `{lit}`")))?;
            col += j - i;
            i = j;
            out.push(Token {
                tok: Tok::Number(value),
                line: start_line,
                column: start_col,
            });
            continue;
        }
        let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let Some(p) = PUNCT.iter().find(|p| rest.starts_with(**p)) else {
            return Err(err(start_line, start_col, format!("unexpected character `{c}`")));
        };
        i += p.len();
        col += p.len();
        out.push(Token {
            tok: Tok::Punct(p),
            line: start_line,
            column: start_col,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Decl {
    var: Variable,
    levels: Option<u64>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    decls: Vec<Decl>,
}

/// Section in which a constraint appears; decides whether primes are legal.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Trans,
    Region,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> ModelError {
        let t = self.peek();
        ModelError::Syntax {
            line: t.line,
            column: t.column,
            message: message.into(),
        }
    }

    fn expect(&mut self, p: &'static str) -> Result<(), ModelError> {
        if self.peek().tok == Tok::Punct(p) {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{p}`, found {}", describe(&self.peek().tok))))
        }
    }

    fn eat(&mut self, p: &'static str) -> bool {
        if self.peek().tok == Tok::Punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ModelError> {
        match self.peek().tok.clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.error_here(format!("expected {what}, found {}", describe(&other)))),
        }
    }

    fn lookup(&self, name: &str) -> Option<usize> {
        self.decls.iter().position(|d| d.var.name == name)
    }

    fn parse(mut self) -> Result<(Vec<Decl>, GuardedPredicate, GuardedPredicate, Option<GuardedPredicate>), ModelError> {
        let mut trans = None;
        let mut goal = None;
        let mut init = None;
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "state" || kw == "input" || kw == "aux" => {
                    let role = match kw.as_str() {
                        "state" => VarRole::State,
                        "input" => VarRole::Input,
                        _ => VarRole::Auxiliary,
                    };
                    self.bump();
                    self.declaration(role)?;
                }
                Tok::Ident(kw) if kw == "trans" || kw == "goal" || kw == "init" => {
                    let kw = kw.clone();
                    self.bump();
                    let section = if kw == "trans" { Section::Trans } else { Section::Region };
                    let slot = match kw.as_str() {
                        "trans" => &mut trans,
                        "goal" => &mut goal,
                        _ => &mut init,
                    };
                    if slot.is_some() {
                        return Err(ModelError::Syntax {
                            line: t.line,
                            column: t.column,
                            message: format!("section `{kw}` appears more than once"),
                        });
                    }
                    let block = self.block(section)?;
                    match kw.as_str() {
                        "trans" => trans = Some(block),
                        "goal" => goal = Some(block),
                        _ => init = Some(block),
                    }
                }
                other => {
                    return Err(self.error_here(format!(
                        "expected a declaration or section, found {}",
                        describe(other)
                    )))
                }
            }
        }
        let here = self.peek().clone();
        let missing = |name: &str| ModelError::Syntax {
            line: here.line,
            column: here.column,
            message: format!("missing `{name}` section"),
        };
        let trans = trans.ok_or_else(|| missing("trans"))?;
        let goal = goal.ok_or_else(|| missing("goal"))?;
        Ok((self.decls, trans, goal, init))
    }

    fn declaration(&mut self, role: VarRole) -> Result<(), ModelError> {
        let at = self.peek().clone();
        let name = self.ident("a variable name")?;
        if self.lookup(&name).is_some() {
            return Err(ModelError::DuplicateDeclaration { name });
        }
        let kind = match self.ident("a variable kind (real, int, bool)")?.as_str() {
            "real" => VarKind::Real,
            "int" => VarKind::Integer,
            "bool" => VarKind::Boolean,
            other => {
                return Err(ModelError::Syntax {
                    line: at.line,
                    column: at.column,
                    message: format!("unknown variable kind `{other}`"),
                })
            }
        };
        let bounds = if self.eat("[") {
            let lo = self.constant_expr()?;
            self.expect(",")?;
            let hi = self.constant_expr()?;
            self.expect("]")?;
            Some((lo, hi))
        } else {
            None
        };
        let (lo, hi) = match (bounds, kind) {
            (Some(b), _) => b,
            (None, VarKind::Boolean) => (Rational::zero(), Rational::one()),
            (None, _) => return Err(ModelError::UnboundedVariable { name }),
        };
        let mut levels = None;
        if matches!(&self.peek().tok, Tok::Ident(s) if s == "levels") {
            self.bump();
            let t = self.peek().clone();
            match t.tok {
                Tok::Number(n) if n.is_integer() && n >= Rational::one() => {
                    self.bump();
                    let v: u64 = n
                        .to_integer()
                        .try_into()
                        .map_err(|_| self.error_here("level count too large"))?;
                    levels = Some(v);
                }
                _ => return Err(self.error_here("expected a positive integer level count")),
            }
        }
        self.expect(";")?;
        self.decls.push(Decl {
            var: Variable::new(name, kind, role, lo, hi),
            levels,
        });
        Ok(())
    }

    fn block(&mut self, section: Section) -> Result<GuardedPredicate, ModelError> {
        self.expect("{")?;
        let mut conjuncts = Vec::new();
        while !self.eat("}") {
            if self.peek().tok == Tok::Eof {
                return Err(self.error_here("unterminated block, expected `}`"));
            }
            conjuncts.extend(self.statement(section)?);
        }
        Ok(GuardedPredicate::new(conjuncts))
    }

    fn statement(&mut self, section: Section) -> Result<Vec<GuardedConstraint>, ModelError> {
        let guard = match (self.peek_at(0).clone(), self.peek_at(1).clone(), self.peek_at(2).clone()) {
            (Tok::Punct("!"), Tok::Ident(_), Tok::Punct("->")) => {
                self.bump();
                let g = self.guard_var()?;
                self.bump();
                Some((g, false))
            }
            (Tok::Ident(_), Tok::Punct("->"), _) => {
                let g = self.guard_var()?;
                self.bump();
                Some((g, true))
            }
            _ => None,
        };
        let mut exprs = vec![self.expr(section)?];
        let mut rels = Vec::new();
        while let Some(rel) = self.relation() {
            rels.push(rel);
            exprs.push(self.expr(section)?);
        }
        if rels.is_empty() {
            return Err(self.error_here(format!(
                "expected a relation (<=, >=, =), found {}",
                describe(&self.peek().tok)
            )));
        }
        self.expect(";")?;
        let mut out = Vec::new();
        for (k, rel) in rels.into_iter().enumerate() {
            let body = Constraint::new(exprs[k].clone(), rel, exprs[k + 1].clone());
            out.push(GuardedConstraint {
                guard: guard.map(|(var, positive)| super::Guard { var, positive }),
                body,
            });
        }
        Ok(out)
    }

    fn guard_var(&mut self) -> Result<super::VarId, ModelError> {
        let t = self.peek().clone();
        let name = self.ident("a guard variable")?;
        let idx = self.lookup(&name).ok_or(ModelError::UndeclaredVariable {
            name: name.clone(),
            line: t.line,
            column: t.column,
        })?;
        if self.decls[idx].var.kind != VarKind::Boolean {
            return Err(ModelError::NonBooleanGuard { name });
        }
        Ok(super::VarId(idx))
    }

    fn relation(&mut self) -> Option<Relation> {
        let rel = match self.peek().tok {
            Tok::Punct("<=") => Relation::Le,
            Tok::Punct(">=") => Relation::Ge,
            Tok::Punct("=") | Tok::Punct("==") => Relation::Eq,
            _ => return None,
        };
        self.bump();
        Some(rel)
    }

    fn constant_expr(&mut self) -> Result<Rational, ModelError> {
        let t = self.peek().clone();
        let e = self.expr(Section::Region)?;
        if !e.is_constant() {
            return Err(ModelError::Syntax {
                line: t.line,
                column: t.column,
                message: "bounds must be constant expressions".into(),
            });
        }
        Ok(e.constant)
    }

    fn expr(&mut self, section: Section) -> Result<LinearExpr, ModelError> {
        let mut acc = self.term(section)?;
        loop {
            if self.eat("+") {
                acc = acc.add(&self.term(section)?);
            } else if self.eat("-") {
                acc = acc.sub(&self.term(section)?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self, section: Section) -> Result<LinearExpr, ModelError> {
        let mut acc = self.factor(section)?;
        loop {
            if self.eat("*") {
                let t = self.peek().clone();
                let rhs = self.factor(section)?;
                acc = if acc.is_constant() {
                    rhs.scale(&acc.constant)
                } else if rhs.is_constant() {
                    acc.scale(&rhs.constant)
                } else {
                    return Err(ModelError::Syntax {
                        line: t.line,
                        column: t.column,
                        message: "product of two variables is not linear".into(),
                    });
                };
            } else if self.eat("/") {
                let t = self.peek().clone();
                let rhs = self.factor(section)?;
                if !rhs.is_constant() || rhs.constant.is_zero() {
                    return Err(ModelError::Syntax {
                        line: t.line,
                        column: t.column,
                        message: "division only by a nonzero constant".into(),
                    });
                }
                acc = acc.scale(&rhs.constant.recip());
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self, section: Section) -> Result<LinearExpr, ModelError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Punct("-") => {
                self.bump();
                Ok(self.factor(section)?.scale(&-Rational::one()))
            }
            Tok::Punct("+") => {
                self.bump();
                self.factor(section)
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr(section)?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Number(n) => {
                self.bump();
                Ok(LinearExpr::constant(n))
            }
            Tok::Ident(name) => {
                self.bump();
                let idx = self.lookup(&name).ok_or(ModelError::UndeclaredVariable {
                    name,
                    line: t.line,
                    column: t.column,
                })?;
                Ok(LinearExpr::symbol(Symbol::Current(super::VarId(idx))))
            }
            Tok::Primed(name) => {
                self.bump();
                let idx = self.lookup(&name).ok_or(ModelError::UndeclaredVariable {
                    name: name.clone(),
                    line: t.line,
                    column: t.column,
                })?;
                if section != Section::Trans || self.decls[idx].var.role != VarRole::State {
                    return Err(ModelError::PrimedNonState { name });
                }
                Ok(LinearExpr::symbol(Symbol::Next(super::VarId(idx))))
            }
            other => Err(self.error_here(format!("expected an expression, found {}", describe(&other)))),
        }
    }
}

/// Parses a model; level counts given in `levels` override those in the text.
pub fn parse_model_with_levels(text: &str, levels: &BTreeMap<String, u64>) -> Result<Model, ModelError> {
    let parser = Parser {
        toks: tokenize(text)?,
        pos: 0,
        decls: Vec::new(),
    };
    let (decls, trans, goal, init) = parser.parse()?;
    let mut level_map = BTreeMap::new();
    for d in &decls {
        if let Some(n) = d.levels {
            level_map.insert(d.var.name.clone(), n);
        }
    }
    for (k, v) in levels {
        if !decls.iter().any(|d| &d.var.name == k) {
            return Err(ModelError::UndeclaredVariable {
                name: k.clone(),
                line: 0,
                column: 0,
            });
        }
        level_map.insert(k.clone(), *v);
    }
    let vars = decls.into_iter().map(|d| d.var).collect();
    if trans.conjuncts.is_empty() {
        return Err(ModelError::EmptyPredicate);
    }
    let plant = Dtlhs::new(vars, trans)?;
    let quantization = Quantization::new(&plant, &level_map)?;
    Model::new(plant, quantization, goal, init)
}

pub fn parse_model(text: &str) -> Result<Model, ModelError> {
    parse_model_with_levels(text, &BTreeMap::new())
}
