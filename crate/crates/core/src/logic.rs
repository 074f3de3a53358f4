//! First-order language over hereditarily finite sets.
//!
//! Formulas speak about sets with `∈` and `=`, may mention unary class
//! predicates (`M`, `W0`, `W1`, ...), and use bounded or unbounded
//! quantifiers. The module provides Tarskian satisfaction over a
//! [`FiniteStructure`], a prenex-style complexity classifier, a set coding
//! of formulas (each formula becomes a single hereditarily finite set), and
//! a textual syntax.
//!
//! Coding scheme: a set constant `x` is coded as the ordered pair `⟨x, 3⟩`;
//! each connective and quantifier gets a fixed numeral tag paired with the
//! numeral `4`; the predicate `M` is coded by the set gathering the base
//! domain, and `Wk` by the (k+1)-fold singleton of that set. Composite nodes
//! are cons-lists (Kuratowski pairs terminated by the empty set).

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::hf::SetValue;
use crate::structure::{FiniteStructure, PredName};

/// A term: a variable or a set constant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Const(SetValue),
}

/// The range of a bounded quantifier: a term's members or a class predicate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Bound {
    Term(Term),
    Pred(PredName),
}

/// A formula of the language.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    In(Term, Term),
    Eq(Term, Term),
    /// `Pred(P, t)`: the value of `t` falls under the class predicate `P`.
    Pred(PredName, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall(String, Box<Formula>),
    Exists(String, Box<Formula>),
    ForallIn(String, Bound, Box<Formula>),
    ExistsIn(String, Bound, Box<Formula>),
}

/// Prenex-style complexity classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum ComplexityClass {
    Delta0,
    Sigma(u32),
    Pi(u32),
}

impl fmt::Display for ComplexityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComplexityClass::Delta0 => write!(f, "Delta0"),
            ComplexityClass::Sigma(n) => write!(f, "Sigma{n}"),
            ComplexityClass::Pi(n) => write!(f, "Pi{n}"),
        }
    }
}

/// Errors from evaluation, coding, and parsing.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("free variable {0} has no assignment")]
    UnassignedVariable(String),
    #[error("constant {0} lies outside the structure's domain")]
    ConstantOutsideDomain(String),
    #[error("predicate {0} has no interpretation in the structure")]
    UninterpretedPredicate(PredName),
    #[error("malformed formula: {0}")]
    Malformed(String),
    #[error("not a formula code: {0}")]
    Decode(String),
    #[error("formula syntax error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// A variable assignment. Evaluating a free variable that is absent here is
/// an error, never a silent default.
pub type Assignment = BTreeMap<String, SetValue>;

/// A signature: the base structure interpreting `M`, plus the declared
/// width predicates `W0..` with optional interpretations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    base: FiniteStructure,
    extras: Vec<ExtraPred>,
}

/// One declared width predicate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtraPred {
    pub name: String,
    pub interp: Option<ExtraInterp>,
}

/// An interpretation for a width predicate: a whole structure or a
/// designated subset of one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExtraInterp {
    Structure(FiniteStructure),
    Subset(Vec<SetValue>),
}

impl Signature {
    pub fn new(base: FiniteStructure) -> Signature {
        Signature {
            base,
            extras: Vec::new(),
        }
    }

    /// Declares the next width predicate, returning its name.
    pub fn declare_extra(&mut self, name: impl Into<String>, interp: Option<ExtraInterp>) -> PredName {
        self.extras.push(ExtraPred {
            name: name.into(),
            interp,
        });
        PredName::W(self.extras.len() as u32 - 1)
    }

    pub fn base(&self) -> &FiniteStructure {
        &self.base
    }

    pub fn extras(&self) -> &[ExtraPred] {
        &self.extras
    }

    pub fn declares(&self, pred: PredName) -> bool {
        match pred {
            PredName::M => true,
            PredName::W(k) => (k as usize) < self.extras.len(),
        }
    }

    /// The set code of a predicate: the gathered base domain for `M`,
    /// iterated singletons of it for `Wk`.
    pub fn pred_code(&self, pred: PredName) -> SetValue {
        let mut code = self.base.domain_set();
        if let PredName::W(k) = pred {
            for _ in 0..=k {
                code = SetValue::singleton(code);
            }
        }
        code
    }

    fn pred_of_code(&self, code: &SetValue) -> Option<PredName> {
        let mut candidate = self.base.domain_set();
        if *code == candidate {
            return Some(PredName::M);
        }
        for k in 0..self.extras.len() as u32 {
            candidate = SetValue::singleton(candidate);
            if *code == candidate {
                return Some(PredName::W(k));
            }
        }
        None
    }
}

impl Formula {
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }
    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }
    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }
    pub fn forall(v: impl Into<String>, f: Formula) -> Formula {
        Formula::Forall(v.into(), Box::new(f))
    }
    pub fn exists(v: impl Into<String>, f: Formula) -> Formula {
        Formula::Exists(v.into(), Box::new(f))
    }
    pub fn forall_in(v: impl Into<String>, b: Bound, f: Formula) -> Formula {
        Formula::ForallIn(v.into(), b, Box::new(f))
    }
    pub fn exists_in(v: impl Into<String>, b: Bound, f: Formula) -> Formula {
        Formula::ExistsIn(v.into(), b, Box::new(f))
    }

    /// The fixed contradiction sentence `{} in {} and not {} in {}`.
    pub fn falsum() -> Formula {
        let absurd = Formula::In(
            Term::Const(SetValue::empty()),
            Term::Const(SetValue::empty()),
        );
        Formula::and(absurd.clone(), Formula::not(absurd))
    }

    /// Free variables in order of first occurrence.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut bound = Vec::new();
        self.collect_free(&mut bound, &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut Vec<String>) {
        let visit_term = |t: &Term, bound: &Vec<String>, out: &mut Vec<String>| {
            if let Term::Var(v) = t {
                if !bound.contains(v) && !out.contains(v) {
                    out.push(v.clone());
                }
            }
        };
        match self {
            Formula::In(a, b) | Formula::Eq(a, b) => {
                visit_term(a, bound, out);
                visit_term(b, bound, out);
            }
            Formula::Pred(_, t) => visit_term(t, bound, out),
            Formula::Not(f) => f.collect_free(bound, out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Forall(v, f) | Formula::Exists(v, f) => {
                bound.push(v.clone());
                f.collect_free(bound, out);
                bound.pop();
            }
            Formula::ForallIn(v, b, f) | Formula::ExistsIn(v, b, f) => {
                if let Bound::Term(t) = b {
                    visit_term(t, bound, out);
                }
                bound.push(v.clone());
                f.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// Whether the formula has no free variables.
    pub fn is_sentence(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Checks structural well-formedness against a signature: predicate
    /// symbols must be declared and no variable may be bound twice along a
    /// path (shadowing is rejected).
    pub fn check(&self, sig: &Signature) -> Result<(), LogicError> {
        self.check_inner(sig, &mut Vec::new())
    }

    fn check_inner(&self, sig: &Signature, bound: &mut Vec<String>) -> Result<(), LogicError> {
        match self {
            Formula::In(_, _) | Formula::Eq(_, _) => Ok(()),
            Formula::Pred(p, _) => {
                if sig.declares(*p) {
                    Ok(())
                } else {
                    Err(LogicError::Malformed(format!(
                        "predicate {p} is not declared in the signature"
                    )))
                }
            }
            Formula::Not(f) => f.check_inner(sig, bound),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.check_inner(sig, bound)?;
                b.check_inner(sig, bound)
            }
            Formula::Forall(v, f) | Formula::Exists(v, f) => {
                Self::check_binder(v, bound)?;
                bound.push(v.clone());
                let r = f.check_inner(sig, bound);
                bound.pop();
                r
            }
            Formula::ForallIn(v, b, f) | Formula::ExistsIn(v, b, f) => {
                if let Bound::Pred(p) = b {
                    if !sig.declares(*p) {
                        return Err(LogicError::Malformed(format!(
                            "predicate {p} is not declared in the signature"
                        )));
                    }
                }
                Self::check_binder(v, bound)?;
                bound.push(v.clone());
                let r = f.check_inner(sig, bound);
                bound.pop();
                r
            }
        }
    }

    fn check_binder(v: &str, bound: &[String]) -> Result<(), LogicError> {
        if bound.iter().any(|b| b == v) {
            return Err(LogicError::Malformed(format!(
                "variable {v} is bound twice along a path"
            )));
        }
        Ok(())
    }

    /// Substitutes a constant for every free occurrence of `var`.
    pub fn substitute(&self, var: &str, value: &SetValue) -> Formula {
        let sub_term = |t: &Term| match t {
            Term::Var(v) if v == var => Term::Const(value.clone()),
            other => other.clone(),
        };
        match self {
            Formula::In(a, b) => Formula::In(sub_term(a), sub_term(b)),
            Formula::Eq(a, b) => Formula::Eq(sub_term(a), sub_term(b)),
            Formula::Pred(p, t) => Formula::Pred(*p, sub_term(t)),
            Formula::Not(f) => Formula::not(f.substitute(var, value)),
            Formula::And(a, b) => {
                Formula::and(a.substitute(var, value), b.substitute(var, value))
            }
            Formula::Or(a, b) => Formula::or(a.substitute(var, value), b.substitute(var, value)),
            Formula::Implies(a, b) => {
                Formula::implies(a.substitute(var, value), b.substitute(var, value))
            }
            Formula::Forall(v, f) if v != var => {
                Formula::forall(v.clone(), f.substitute(var, value))
            }
            Formula::Exists(v, f) if v != var => {
                Formula::exists(v.clone(), f.substitute(var, value))
            }
            Formula::ForallIn(v, b, f) => {
                let b = match b {
                    Bound::Term(t) => Bound::Term(sub_term(t)),
                    p => p.clone(),
                };
                if v == var {
                    Formula::ForallIn(v.clone(), b, f.clone())
                } else {
                    Formula::forall_in(v.clone(), b, f.substitute(var, value))
                }
            }
            Formula::ExistsIn(v, b, f) => {
                let b = match b {
                    Bound::Term(t) => Bound::Term(sub_term(t)),
                    p => p.clone(),
                };
                if v == var {
                    Formula::ExistsIn(v.clone(), b, f.clone())
                } else {
                    Formula::exists_in(v.clone(), b, f.substitute(var, value))
                }
            }
            shadowed => shadowed.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Satisfaction
// ---------------------------------------------------------------------------

fn term_value(
    t: &Term,
    structure: &FiniteStructure,
    asg: &Assignment,
) -> Result<SetValue, LogicError> {
    match t {
        Term::Var(v) => asg
            .get(v)
            .cloned()
            .ok_or_else(|| LogicError::UnassignedVariable(v.clone())),
        Term::Const(c) => {
            if structure.contains(c) {
                Ok(c.clone())
            } else {
                Err(LogicError::ConstantOutsideDomain(c.notation()))
            }
        }
    }
}

/// Tarskian satisfaction of `formula` in `structure` under `asg`.
///
/// Unbounded quantifiers range over the structure's domain; bounded
/// quantifiers range over the bounding term's members (or the bounding
/// predicate's interpretation). Connectives are evaluated strictly so that
/// interpretation errors surface regardless of truth values.
pub fn satisfies(
    structure: &FiniteStructure,
    formula: &Formula,
    asg: &Assignment,
) -> Result<bool, LogicError> {
    match formula {
        Formula::In(a, b) => {
            let va = term_value(a, structure, asg)?;
            let vb = term_value(b, structure, asg)?;
            Ok(vb.contains(&va))
        }
        Formula::Eq(a, b) => {
            Ok(term_value(a, structure, asg)? == term_value(b, structure, asg)?)
        }
        Formula::Pred(p, t) => {
            let v = term_value(t, structure, asg)?;
            let interp = structure
                .pred(*p)
                .ok_or(LogicError::UninterpretedPredicate(*p))?;
            Ok(interp.contains(&v))
        }
        Formula::Not(f) => Ok(!satisfies(structure, f, asg)?),
        Formula::And(a, b) => {
            let va = satisfies(structure, a, asg)?;
            let vb = satisfies(structure, b, asg)?;
            Ok(va && vb)
        }
        Formula::Or(a, b) => {
            let va = satisfies(structure, a, asg)?;
            let vb = satisfies(structure, b, asg)?;
            Ok(va || vb)
        }
        Formula::Implies(a, b) => {
            let va = satisfies(structure, a, asg)?;
            let vb = satisfies(structure, b, asg)?;
            Ok(!va || vb)
        }
        Formula::Forall(v, f) => {
            for d in structure.domain() {
                let mut asg = asg.clone();
                asg.insert(v.clone(), d.clone());
                if !satisfies(structure, f, &asg)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Exists(v, f) => {
            for d in structure.domain() {
                let mut asg = asg.clone();
                asg.insert(v.clone(), d.clone());
                if satisfies(structure, f, &asg)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::ForallIn(v, b, f) => {
            for d in bound_range(b, structure, asg)? {
                let mut asg = asg.clone();
                asg.insert(v.clone(), d);
                if !satisfies(structure, f, &asg)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::ExistsIn(v, b, f) => {
            for d in bound_range(b, structure, asg)? {
                let mut asg = asg.clone();
                asg.insert(v.clone(), d);
                if satisfies(structure, f, &asg)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

fn bound_range(
    b: &Bound,
    structure: &FiniteStructure,
    asg: &Assignment,
) -> Result<Vec<SetValue>, LogicError> {
    match b {
        Bound::Term(t) => Ok(term_value(t, structure, asg)?.elements().to_vec()),
        Bound::Pred(p) => {
            let interp = structure
                .pred(*p)
                .ok_or(LogicError::UninterpretedPredicate(*p))?;
            Ok(interp.into_iter().collect())
        }
    }
}

// ---------------------------------------------------------------------------
// Complexity classification
// ---------------------------------------------------------------------------

/// Classifies a formula: `Delta0` means every quantifier is bounded;
/// otherwise the unbounded alternation pattern is summarized prenex-style.
/// Bounded quantifiers are transparent, and a same-level `Sigma`/`Pi` join
/// resolves to `Sigma` one level up.
pub fn classify(formula: &Formula) -> ComplexityClass {
    use ComplexityClass::*;
    match formula {
        Formula::In(_, _) | Formula::Eq(_, _) | Formula::Pred(_, _) => Delta0,
        Formula::Not(f) => dual(classify(f)),
        Formula::And(a, b) | Formula::Or(a, b) => join(classify(a), classify(b)),
        Formula::Implies(a, b) => join(dual(classify(a)), classify(b)),
        Formula::ForallIn(_, _, f) | Formula::ExistsIn(_, _, f) => classify(f),
        Formula::Exists(_, f) => match classify(f) {
            Delta0 => Sigma(1),
            Sigma(n) => Sigma(n),
            Pi(n) => Sigma(n + 1),
        },
        Formula::Forall(_, f) => match classify(f) {
            Delta0 => Pi(1),
            Pi(n) => Pi(n),
            Sigma(n) => Pi(n + 1),
        },
    }
}

fn dual(c: ComplexityClass) -> ComplexityClass {
    match c {
        ComplexityClass::Delta0 => ComplexityClass::Delta0,
        ComplexityClass::Sigma(n) => ComplexityClass::Pi(n),
        ComplexityClass::Pi(n) => ComplexityClass::Sigma(n),
    }
}

fn join(a: ComplexityClass, b: ComplexityClass) -> ComplexityClass {
    use ComplexityClass::*;
    match (a, b) {
        (Delta0, c) | (c, Delta0) => c,
        (Sigma(n), Sigma(m)) => Sigma(n.max(m)),
        (Pi(n), Pi(m)) => Pi(n.max(m)),
        (Sigma(n), Pi(m)) | (Pi(m), Sigma(n)) => {
            if n > m {
                Sigma(n)
            } else if m > n {
                Pi(m)
            } else {
                Sigma(n + 1)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Set coding of formulas
// ---------------------------------------------------------------------------

const TAG_VAR: u32 = 0;
const TAG_IN: u32 = 1;
const TAG_EQ: u32 = 2;
const TAG_PRED: u32 = 3;
const TAG_NOT: u32 = 4;
const TAG_AND: u32 = 5;
const TAG_OR: u32 = 6;
const TAG_IMPLIES: u32 = 7;
const TAG_FORALL_IN: u32 = 8;
const TAG_EXISTS_IN: u32 = 9;
const TAG_FORALL: u32 = 10;
const TAG_EXISTS: u32 = 11;
const TAG_BOUND_TERM: u32 = 12;
const TAG_BOUND_PRED: u32 = 13;

/// Alphabet for variable-name coding; index = 6·q + r codes as `⟨q, r⟩`.
const NAME_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789_";

fn tag(n: u32) -> SetValue {
    SetValue::kuratowski_pair(SetValue::ordinal(n), SetValue::ordinal(4))
}

pub(crate) fn cons_list(items: Vec<SetValue>) -> SetValue {
    let mut code = SetValue::empty();
    for item in items.into_iter().rev() {
        code = SetValue::kuratowski_pair(item, code);
    }
    code
}

fn uncons_list(code: &SetValue) -> Option<Vec<SetValue>> {
    let mut items = Vec::new();
    let mut cur = code.clone();
    while !cur.is_empty() {
        let (head, tail) = cur.as_kuratowski_pair()?;
        items.push(head);
        cur = tail;
    }
    Some(items)
}

fn encode_name(name: &str) -> Result<SetValue, LogicError> {
    let mut chars = Vec::new();
    for ch in name.chars() {
        let idx = NAME_ALPHABET.find(ch).ok_or_else(|| {
            LogicError::Malformed(format!("variable name {name:?} is outside [a-z0-9_]"))
        })? as u32;
        chars.push(SetValue::kuratowski_pair(
            SetValue::ordinal(idx / 6),
            SetValue::ordinal(idx % 6),
        ));
    }
    if chars.is_empty() {
        return Err(LogicError::Malformed("empty variable name".into()));
    }
    Ok(cons_list(chars))
}

fn decode_name(code: &SetValue) -> Result<String, LogicError> {
    let items = uncons_list(code)
        .ok_or_else(|| LogicError::Decode("variable name is not a code list".into()))?;
    let mut name = String::new();
    for item in items {
        let (q, r) = item
            .as_kuratowski_pair()
            .ok_or_else(|| LogicError::Decode("character code is not a pair".into()))?;
        let (q, r) = match (q.as_nat(), r.as_nat()) {
            (Some(q), Some(r)) if r < 6 => (q, r),
            _ => return Err(LogicError::Decode("character code out of range".into())),
        };
        let idx = (q * 6 + r) as usize;
        let ch = NAME_ALPHABET
            .as_bytes()
            .get(idx)
            .copied()
            .ok_or_else(|| LogicError::Decode("character index out of range".into()))?;
        name.push(ch as char);
    }
    if name.is_empty() {
        return Err(LogicError::Decode("empty variable name".into()));
    }
    Ok(name)
}

fn encode_term(t: &Term, _sig: &Signature) -> Result<SetValue, LogicError> {
    match t {
        Term::Const(x) => Ok(SetValue::kuratowski_pair(x.clone(), SetValue::ordinal(3))),
        Term::Var(name) => Ok(cons_list(vec![tag(TAG_VAR), encode_name(name)?])),
    }
}

fn decode_term(code: &SetValue, _sig: &Signature) -> Result<Term, LogicError> {
    if let Some((x, t)) = code.as_kuratowski_pair() {
        if t == SetValue::ordinal(3) {
            return Ok(Term::Const(x));
        }
    }
    let items = uncons_list(code)
        .ok_or_else(|| LogicError::Decode("term code is neither constant nor list".into()))?;
    match items.as_slice() {
        [t, name] if *t == tag(TAG_VAR) => Ok(Term::Var(decode_name(name)?)),
        _ => Err(LogicError::Decode("unrecognized term code".into())),
    }
}

fn encode_bound(b: &Bound, sig: &Signature) -> Result<SetValue, LogicError> {
    match b {
        Bound::Term(t) => Ok(cons_list(vec![tag(TAG_BOUND_TERM), encode_term(t, sig)?])),
        Bound::Pred(p) => Ok(cons_list(vec![tag(TAG_BOUND_PRED), sig.pred_code(*p)])),
    }
}

fn decode_bound(code: &SetValue, sig: &Signature) -> Result<Bound, LogicError> {
    let items = uncons_list(code)
        .ok_or_else(|| LogicError::Decode("bound code is not a list".into()))?;
    match items.as_slice() {
        [t, term] if *t == tag(TAG_BOUND_TERM) => Ok(Bound::Term(decode_term(term, sig)?)),
        [t, pred] if *t == tag(TAG_BOUND_PRED) => {
            let p = sig
                .pred_of_code(pred)
                .ok_or_else(|| LogicError::Decode("unknown predicate code".into()))?;
            Ok(Bound::Pred(p))
        }
        _ => Err(LogicError::Decode("unrecognized bound code".into())),
    }
}

/// Codes a formula as a single hereditarily finite set.
pub fn encode_formula(formula: &Formula, sig: &Signature) -> Result<SetValue, LogicError> {
    formula.check(sig)?;
    encode_formula_inner(formula, sig)
}

fn encode_formula_inner(formula: &Formula, sig: &Signature) -> Result<SetValue, LogicError> {
    let list = match formula {
        Formula::In(a, b) => vec![tag(TAG_IN), encode_term(a, sig)?, encode_term(b, sig)?],
        Formula::Eq(a, b) => vec![tag(TAG_EQ), encode_term(a, sig)?, encode_term(b, sig)?],
        Formula::Pred(p, t) => vec![tag(TAG_PRED), sig.pred_code(*p), encode_term(t, sig)?],
        Formula::Not(f) => vec![tag(TAG_NOT), encode_formula_inner(f, sig)?],
        Formula::And(a, b) => vec![
            tag(TAG_AND),
            encode_formula_inner(a, sig)?,
            encode_formula_inner(b, sig)?,
        ],
        Formula::Or(a, b) => vec![
            tag(TAG_OR),
            encode_formula_inner(a, sig)?,
            encode_formula_inner(b, sig)?,
        ],
        Formula::Implies(a, b) => vec![
            tag(TAG_IMPLIES),
            encode_formula_inner(a, sig)?,
            encode_formula_inner(b, sig)?,
        ],
        Formula::Forall(v, f) => vec![
            tag(TAG_FORALL),
            encode_name(v)?,
            encode_formula_inner(f, sig)?,
        ],
        Formula::Exists(v, f) => vec![
            tag(TAG_EXISTS),
            encode_name(v)?,
            encode_formula_inner(f, sig)?,
        ],
        Formula::ForallIn(v, b, f) => vec![
            tag(TAG_FORALL_IN),
            encode_name(v)?,
            encode_bound(b, sig)?,
            encode_formula_inner(f, sig)?,
        ],
        Formula::ExistsIn(v, b, f) => vec![
            tag(TAG_EXISTS_IN),
            encode_name(v)?,
            encode_bound(b, sig)?,
            encode_formula_inner(f, sig)?,
        ],
    };
    Ok(cons_list(list))
}

/// Decodes a formula code produced by [`encode_formula`].
pub fn decode_formula(code: &SetValue, sig: &Signature) -> Result<Formula, LogicError> {
    let items = uncons_list(code)
        .ok_or_else(|| LogicError::Decode("formula code is not a list".into()))?;
    let tag_of = |n: u32| tag(n);
    let head = items
        .first()
        .ok_or_else(|| LogicError::Decode("empty formula code".into()))?;
    let f = match items.as_slice() {
        [t, a, b] if *t == tag_of(TAG_IN) => {
            Formula::In(decode_term(a, sig)?, decode_term(b, sig)?)
        }
        [t, a, b] if *t == tag_of(TAG_EQ) => {
            Formula::Eq(decode_term(a, sig)?, decode_term(b, sig)?)
        }
        [t, p, a] if *t == tag_of(TAG_PRED) => {
            let pred = sig
                .pred_of_code(p)
                .ok_or_else(|| LogicError::Decode("unknown predicate code".into()))?;
            Formula::Pred(pred, decode_term(a, sig)?)
        }
        [t, f] if *t == tag_of(TAG_NOT) => Formula::not(decode_formula(f, sig)?),
        [t, a, b] if *t == tag_of(TAG_AND) => {
            Formula::and(decode_formula(a, sig)?, decode_formula(b, sig)?)
        }
        [t, a, b] if *t == tag_of(TAG_OR) => {
            Formula::or(decode_formula(a, sig)?, decode_formula(b, sig)?)
        }
        [t, a, b] if *t == tag_of(TAG_IMPLIES) => {
            Formula::implies(decode_formula(a, sig)?, decode_formula(b, sig)?)
        }
        [t, v, f] if *t == tag_of(TAG_FORALL) => {
            Formula::forall(decode_name(v)?, decode_formula(f, sig)?)
        }
        [t, v, f] if *t == tag_of(TAG_EXISTS) => {
            Formula::exists(decode_name(v)?, decode_formula(f, sig)?)
        }
        [t, v, b, f] if *t == tag_of(TAG_FORALL_IN) => Formula::forall_in(
            decode_name(v)?,
            decode_bound(b, sig)?,
            decode_formula(f, sig)?,
        ),
        [t, v, b, f] if *t == tag_of(TAG_EXISTS_IN) => Formula::exists_in(
            decode_name(v)?,
            decode_bound(b, sig)?,
            decode_formula(f, sig)?,
        ),
        _ => {
            return Err(LogicError::Decode(format!(
                "unrecognized formula code with head {head}"
            )))
        }
    };
    Ok(f)
}

// ---------------------------------------------------------------------------
// Textual syntax
// ---------------------------------------------------------------------------

const KEYWORDS: [&str; 7] = ["forall", "exists", "in", "not", "and", "or", "implies"];

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Term(t) => write!(f, "{t}"),
            Bound::Pred(p) => write!(f, "{p}"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::In(a, b) => write!(f, "{a} in {b}"),
            Formula::Eq(a, b) => write!(f, "{a} = {b}"),
            Formula::Pred(p, t) => write!(f, "{t} in {p}"),
            Formula::Not(inner) => write!(f, "not {}", paren(inner)),
            Formula::And(a, b) => write!(f, "{} and {}", paren(a), paren(b)),
            Formula::Or(a, b) => write!(f, "{} or {}", paren(a), paren(b)),
            Formula::Implies(a, b) => write!(f, "{} implies {}", paren(a), paren(b)),
            Formula::Forall(v, inner) => write!(f, "forall {v} . {inner}"),
            Formula::Exists(v, inner) => write!(f, "exists {v} . {inner}"),
            Formula::ForallIn(v, b, inner) => write!(f, "forall {v} in {b} . {inner}"),
            Formula::ExistsIn(v, b, inner) => write!(f, "exists {v} in {b} . {inner}"),
        }
    }
}

/// Wraps non-atomic subformulas in parentheses for unambiguous output.
fn paren(f: &Formula) -> String {
    match f {
        Formula::In(_, _) | Formula::Eq(_, _) | Formula::Pred(_, _) => f.to_string(),
        _ => format!("({f})"),
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

/// Parses the textual formula syntax, e.g.
/// `forall x in M . (x = {} or exists y in x . y in W0)`.
pub fn parse_formula(input: &str) -> Result<Formula, LogicError> {
    let mut p = Parser { src: input, pos: 0 };
    let f = p.formula()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(LogicError::Parse {
            pos: p.pos,
            msg: "trailing input after formula".into(),
        });
    }
    Ok(f)
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len()
            && self.src.as_bytes()[self.pos].is_ascii_whitespace()
        {
            self.pos += 1;
        }
    }

    fn error(&self, msg: impl Into<String>) -> LogicError {
        LogicError::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn peek_word(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let end = rest
            .char_indices()
            .find(|(_, c)| !c.is_ascii_alphanumeric() && *c != '_')
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        if end == 0 {
            None
        } else {
            Some(&rest[..end])
        }
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if self.peek_word() == Some(word) {
            self.pos += word.len();
            true
        } else {
            false
        }
    }

    fn peek_char(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.as_bytes().get(self.pos).copied()
    }

    fn eat_char(&mut self, c: u8) -> bool {
        if self.peek_char() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn formula(&mut self) -> Result<Formula, LogicError> {
        let lhs = self.or_expr()?;
        if self.eat_word("implies") {
            let rhs = self.formula()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn or_expr(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.and_expr()?;
        while self.eat_word("or") {
            let rhs = self.and_expr()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.unary()?;
        while self.eat_word("and") {
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, LogicError> {
        if self.eat_word("not") {
            return Ok(Formula::not(self.unary()?));
        }
        if self.eat_word("forall") {
            return self.quantifier(true);
        }
        if self.eat_word("exists") {
            return self.quantifier(false);
        }
        if self.peek_char() == Some(b'(') {
            self.pos += 1;
            let f = self.formula()?;
            self.skip_ws();
            if !self.eat_char(b')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(f);
        }
        self.atom()
    }

    fn quantifier(&mut self, universal: bool) -> Result<Formula, LogicError> {
        let var = self.variable()?;
        let bound = if self.eat_word("in") {
            Some(self.bound()?)
        } else {
            None
        };
        self.skip_ws();
        if !self.eat_char(b'.') {
            return Err(self.error("expected '.' after quantifier prefix"));
        }
        let body = self.formula()?;
        Ok(match (universal, bound) {
            (true, None) => Formula::forall(var, body),
            (false, None) => Formula::exists(var, body),
            (true, Some(b)) => Formula::forall_in(var, b, body),
            (false, Some(b)) => Formula::exists_in(var, b, body),
        })
    }

    fn variable(&mut self) -> Result<String, LogicError> {
        let word = self.peek_word().ok_or_else(|| {
            LogicError::Parse {
                pos: self.pos,
                msg: "expected a variable name".into(),
            }
        })?;
        if KEYWORDS.contains(&word) || PredName::parse(word).is_some() {
            return Err(self.error(format!("'{word}' cannot be a variable name")));
        }
        if !word
            .chars()
            .next()
            .map(|c| c.is_ascii_lowercase() || c == '_')
            .unwrap_or(false)
            || !word
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        {
            return Err(self.error(format!("invalid variable name '{word}'")));
        }
        self.pos += word.len();
        Ok(word.to_string())
    }

    fn bound(&mut self) -> Result<Bound, LogicError> {
        if let Some(word) = self.peek_word() {
            if let Some(p) = PredName::parse(word) {
                self.pos += word.len();
                return Ok(Bound::Pred(p));
            }
        }
        Ok(Bound::Term(self.term()?))
    }

    fn term(&mut self) -> Result<Term, LogicError> {
        if self.peek_char() == Some(b'{') {
            let start = self.pos;
            let mut depth = 0usize;
            while self.pos < self.src.len() {
                match self.src.as_bytes()[self.pos] {
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            self.pos += 1;
                            let lit = &self.src[start..self.pos];
                            let value = SetValue::parse(lit).map_err(|e| {
                                self.error(format!("bad set literal: {e}"))
                            })?;
                            return Ok(Term::Const(value));
                        }
                    }
                    _ => {}
                }
                self.pos += 1;
            }
            return Err(self.error("unterminated set literal"));
        }
        Ok(Term::Var(self.variable()?))
    }

    fn atom(&mut self) -> Result<Formula, LogicError> {
        let lhs = self.term()?;
        if self.eat_word("in") {
            if let Some(word) = self.peek_word() {
                if let Some(p) = PredName::parse(word) {
                    self.pos += word.len();
                    return Ok(Formula::Pred(p, lhs));
                }
            }
            let rhs = self.term()?;
            return Ok(Formula::In(lhs, rhs));
        }
        self.skip_ws();
        if self.eat_char(b'=') {
            let rhs = self.term()?;
            return Ok(Formula::Eq(lhs, rhs));
        }
        Err(self.error("expected 'in' or '=' in atom"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empty_const() -> Term {
        Term::Const(SetValue::empty())
    }

    fn sig_over(values: Vec<SetValue>) -> Signature {
        Signature::new(FiniteStructure::new(values).unwrap())
    }

    /// Independently written second evaluator: substitutes constants for
    /// quantified variables and recurses on closed formulas only.
    fn oracle_eval(structure: &FiniteStructure, formula: &Formula) -> Result<bool, LogicError> {
        match formula {
            Formula::In(a, b) => {
                let (a, b) = (oracle_term(a, structure)?, oracle_term(b, structure)?);
                Ok(b.elements().iter().any(|e| *e == a))
            }
            Formula::Eq(a, b) => Ok(oracle_term(a, structure)? == oracle_term(b, structure)?),
            Formula::Pred(p, t) => {
                let v = oracle_term(t, structure)?;
                match structure.pred(*p) {
                    Some(interp) => Ok(interp.contains(&v)),
                    None => Err(LogicError::UninterpretedPredicate(*p)),
                }
            }
            Formula::Not(f) => Ok(!oracle_eval(structure, f)?),
            Formula::And(a, b) => {
                Ok(oracle_eval(structure, a)? & oracle_eval(structure, b)?)
            }
            Formula::Or(a, b) => Ok(oracle_eval(structure, a)? | oracle_eval(structure, b)?),
            Formula::Implies(a, b) => {
                Ok(!oracle_eval(structure, a)? | oracle_eval(structure, b)?)
            }
            Formula::Forall(v, f) => {
                let mut result = true;
                for d in structure.domain() {
                    result &= oracle_eval(structure, &f.substitute(v, d))?;
                }
                Ok(result)
            }
            Formula::Exists(v, f) => {
                let mut result = false;
                for d in structure.domain() {
                    result |= oracle_eval(structure, &f.substitute(v, d))?;
                }
                Ok(result)
            }
            Formula::ForallIn(v, b, f) => {
                let mut result = true;
                for d in oracle_bound(b, structure)? {
                    result &= oracle_eval(structure, &f.substitute(v, &d))?;
                }
                Ok(result)
            }
            Formula::ExistsIn(v, b, f) => {
                let mut result = false;
                for d in oracle_bound(b, structure)? {
                    result |= oracle_eval(structure, &f.substitute(v, &d))?;
                }
                Ok(result)
            }
        }
    }

    fn oracle_term(t: &Term, structure: &FiniteStructure) -> Result<SetValue, LogicError> {
        match t {
            Term::Const(c) if structure.contains(c) => Ok(c.clone()),
            Term::Const(c) => Err(LogicError::ConstantOutsideDomain(c.notation())),
            Term::Var(v) => Err(LogicError::UnassignedVariable(v.clone())),
        }
    }

    fn oracle_bound(b: &Bound, structure: &FiniteStructure) -> Result<Vec<SetValue>, LogicError> {
        match b {
            Bound::Term(t) => Ok(oracle_term(t, structure)?.elements().to_vec()),
            Bound::Pred(p) => structure
                .pred(*p)
                .map(|s| s.into_iter().collect())
                .ok_or(LogicError::UninterpretedPredicate(*p)),
        }
    }

    /// Random sentence generator over a structure's constants.
    fn random_sentence(
        rng: &mut ChaCha8Rng,
        structure: &FiniteStructure,
        vars_in_scope: &mut Vec<String>,
        depth: u32,
        bounded_only: bool,
    ) -> Formula {
        let var_names = ["x", "y", "z", "u", "v", "w"];
        let random_term = |rng: &mut ChaCha8Rng, scope: &Vec<String>| -> Term {
            if !scope.is_empty() && rng.gen_bool(0.6) {
                Term::Var(scope[rng.gen_range(0..scope.len())].clone())
            } else {
                let d: Vec<&SetValue> = structure.domain().iter().collect();
                Term::Const(d[rng.gen_range(0..d.len())].clone())
            }
        };
        if depth == 0 || rng.gen_bool(0.3) {
            let a = random_term(rng, vars_in_scope);
            let b = random_term(rng, vars_in_scope);
            return match rng.gen_range(0..3) {
                0 => Formula::In(a, b),
                1 => Formula::Eq(a, b),
                _ => Formula::Pred(PredName::M, a),
            };
        }
        match rng.gen_range(0..6) {
            0 => Formula::not(random_sentence(
                rng,
                structure,
                vars_in_scope,
                depth - 1,
                bounded_only,
            )),
            1 => Formula::and(
                random_sentence(rng, structure, vars_in_scope, depth - 1, bounded_only),
                random_sentence(rng, structure, vars_in_scope, depth - 1, bounded_only),
            ),
            2 => Formula::or(
                random_sentence(rng, structure, vars_in_scope, depth - 1, bounded_only),
                random_sentence(rng, structure, vars_in_scope, depth - 1, bounded_only),
            ),
            3 => Formula::implies(
                random_sentence(rng, structure, vars_in_scope, depth - 1, bounded_only),
                random_sentence(rng, structure, vars_in_scope, depth - 1, bounded_only),
            ),
            _ => {
                let fresh = var_names
                    .iter()
                    .find(|n| !vars_in_scope.iter().any(|v| v == *n));
                let Some(fresh) = fresh else {
                    return Formula::Eq(empty_const(), empty_const());
                };
                let v = fresh.to_string();
                let universal = rng.gen_bool(0.5);
                let bound = if bounded_only || rng.gen_bool(0.5) {
                    Some(Bound::Term(random_term(rng, vars_in_scope)))
                } else {
                    None
                };
                vars_in_scope.push(v.clone());
                let body =
                    random_sentence(rng, structure, vars_in_scope, depth - 1, bounded_only);
                vars_in_scope.pop();
                match (universal, bound) {
                    (true, Some(b)) => Formula::forall_in(v, b, body),
                    (false, Some(b)) => Formula::exists_in(v, b, body),
                    (true, None) => Formula::forall(v, body),
                    (false, None) => Formula::exists(v, body),
                }
            }
        }
    }

    fn small_structure(rng: &mut ChaCha8Rng) -> FiniteStructure {
        crate::testutil::random_structure(rng, 3)
    }

    #[test]
    fn satisfaction_examples() {
        let s = FiniteStructure::new([SetValue::empty()]).unwrap();
        let phi = Formula::Pred(PredName::M, empty_const());
        assert_eq!(satisfies(&s, &phi, &Assignment::new()), Ok(true));

        let all_empty = Formula::forall_in(
            "x",
            Bound::Pred(PredName::M),
            Formula::Eq(Term::Var("x".into()), empty_const()),
        );
        assert_eq!(satisfies(&s, &all_empty, &Assignment::new()), Ok(true));
    }

    #[test]
    fn unassigned_free_variable_is_an_error() {
        let s = FiniteStructure::new([SetValue::empty()]).unwrap();
        let phi = Formula::Eq(Term::Var("x".into()), empty_const());
        assert_eq!(
            satisfies(&s, &phi, &Assignment::new()),
            Err(LogicError::UnassignedVariable("x".into()))
        );
    }

    #[test]
    fn constant_outside_domain_is_an_error() {
        let s = FiniteStructure::new([SetValue::empty()]).unwrap();
        let phi = Formula::Eq(
            Term::Const(SetValue::ordinal(2)),
            Term::Const(SetValue::ordinal(2)),
        );
        assert!(matches!(
            satisfies(&s, &phi, &Assignment::new()),
            Err(LogicError::ConstantOutsideDomain(_))
        ));
    }

    #[test]
    fn agrees_with_substitution_evaluator_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x10c1);
        for _ in 0..200 {
            let s = small_structure(&mut rng);
            let phi = random_sentence(&mut rng, &s, &mut Vec::new(), 3, false);
            let main = satisfies(&s, &phi, &Assignment::new());
            let oracle = oracle_eval(&s, &phi);
            assert_eq!(main, oracle, "formula: {phi}");
        }
    }

    #[test]
    fn de_morgan_duals_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x10c2);
        for _ in 0..120 {
            let s = small_structure(&mut rng);
            let phi = random_sentence(&mut rng, &s, &mut vec!["x".into()], 2, false);
            let lhs = Formula::not(Formula::forall("x", phi.clone()));
            let rhs = Formula::exists("x", Formula::not(phi));
            assert_eq!(
                satisfies(&s, &lhs, &Assignment::new()),
                satisfies(&s, &rhs, &Assignment::new())
            );
        }
    }

    #[test]
    fn delta0_is_absolute_between_transitive_end_extensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x10c3);
        for _ in 0..120 {
            let small = small_structure(&mut rng);
            let mut bigger: Vec<SetValue> = small.domain().iter().cloned().collect();
            let extra = crate::testutil::random_set(&mut rng, 4);
            bigger.push(extra.clone());
            bigger.extend(extra.transitive_closure().elements().iter().cloned());
            let big = FiniteStructure::new(bigger).unwrap();

            // Pure ∈/= sentence with constants from the small structure:
            // class predicates are deliberately excluded since they are not
            // membership-absolute.
            let phi = loop {
                let f = random_sentence(&mut rng, &small, &mut Vec::new(), 3, true);
                if formula_is_pure(&f) {
                    break f;
                }
            };
            assert_eq!(
                satisfies(&small, &phi, &Assignment::new()),
                satisfies(&big, &phi, &Assignment::new()),
                "Δ0 sentence not absolute: {phi}"
            );
        }
    }

    fn formula_is_pure(f: &Formula) -> bool {
        match f {
            Formula::Pred(_, _) => false,
            Formula::In(_, _) | Formula::Eq(_, _) => true,
            Formula::Not(g) => formula_is_pure(g),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                formula_is_pure(a) && formula_is_pure(b)
            }
            Formula::Forall(_, g) | Formula::Exists(_, g) => formula_is_pure(g),
            Formula::ForallIn(_, b, g) | Formula::ExistsIn(_, b, g) => {
                matches!(b, Bound::Term(_)) && formula_is_pure(g)
            }
        }
    }

    #[test]
    fn classification_examples() {
        // ∃z ∀x∈z (x ∈ w) is Sigma1; its negation is Pi1.
        let inner = Formula::forall_in(
            "x",
            Bound::Term(Term::Var("z".into())),
            Formula::In(Term::Var("x".into()), Term::Var("w".into())),
        );
        let sigma1 = Formula::exists("z", inner);
        assert_eq!(classify(&sigma1), ComplexityClass::Sigma(1));
        assert_eq!(classify(&Formula::not(sigma1.clone())), ComplexityClass::Pi(1));

        let delta0 = parse_formula("forall x in y . x in z").unwrap();
        assert_eq!(classify(&delta0), ComplexityClass::Delta0);

        let pi2 = Formula::forall("a", Formula::exists("b", delta0));
        assert_eq!(classify(&pi2), ComplexityClass::Pi(2));
    }

    #[test]
    fn classify_respects_negation_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x10c4);
        for _ in 0..200 {
            let s = small_structure(&mut rng);
            let phi = random_sentence(&mut rng, &s, &mut Vec::new(), 3, false);
            let c = classify(&phi);
            let negated = classify(&Formula::not(phi));
            assert_eq!(negated, dual(c));
        }
    }

    /// Frozen 50-formula pool exercised by the coding tests.
    fn coding_pool() -> Vec<Formula> {
        let mut pool = Vec::new();
        let texts = [
            "{} in {{}}",
            "{} = {}",
            "x in y",
            "x = y",
            "x in M",
            "x in W0",
            "not x in y",
            "x in y and y in z",
            "x in y or y in x",
            "x in y implies y in x",
            "forall x . x in M",
            "exists x . not x in M",
            "forall x in y . x in z",
            "exists x in y . x = {}",
            "forall x in M . exists y . x in y",
            "exists x in W0 . not x in M",
            "forall x . (x in M implies x in W0)",
            "forall x in M . forall y in M . (x in y or x = y or y in x)",
            "exists x . exists y . (x in y and not y in x)",
            "forall x in {{} {{}}} . x in M",
            "not (x in y and y in z)",
            "forall a . exists b . a in b",
            "exists a . forall b in a . b = {}",
            "x = {{}}",
            "{} in M",
        ];
        for t in texts {
            pool.push(parse_formula(t).unwrap());
        }
        // Mechanical variants double the pool to 50.
        for t in texts {
            pool.push(Formula::implies(parse_formula(t).unwrap(), Formula::falsum()));
        }
        pool
    }

    #[test]
    fn coding_roundtrips_on_frozen_pool() {
        let mut sig = sig_over(vec![SetValue::empty(), SetValue::ordinal(1)]);
        sig.declare_extra("W0", None);
        let pool = coding_pool();
        assert_eq!(pool.len(), 50);
        let mut codes = Vec::new();
        for phi in &pool {
            let code = encode_formula(phi, &sig).unwrap();
            let back = decode_formula(&code, &sig).unwrap();
            assert_eq!(&back, phi, "roundtrip failed for {phi}");
            codes.push(code);
        }
        // Injectivity across the pool.
        for i in 0..codes.len() {
            for j in (i + 1)..codes.len() {
                assert_ne!(codes[i], codes[j], "codes collide: {} / {}", pool[i], pool[j]);
            }
        }
    }

    #[test]
    fn decode_rejects_non_codes() {
        let sig = sig_over(vec![SetValue::empty()]);
        assert!(decode_formula(&SetValue::ordinal(2), &sig).is_err());
        assert!(decode_formula(&SetValue::empty(), &sig).is_err());
        let junk = SetValue::kuratowski_pair(SetValue::ordinal(9), SetValue::ordinal(9));
        assert!(decode_formula(&junk, &sig).is_err());
    }

    #[test]
    fn pred_codes_follow_the_singleton_ladder() {
        let mut sig = sig_over(vec![SetValue::empty(), SetValue::ordinal(1)]);
        sig.declare_extra("W0", None);
        sig.declare_extra("W1", None);
        let base = sig.base().domain_set();
        assert_eq!(sig.pred_code(PredName::M), base);
        assert_eq!(sig.pred_code(PredName::W(0)), SetValue::singleton(base.clone()));
        assert_eq!(
            sig.pred_code(PredName::W(1)),
            SetValue::singleton(SetValue::singleton(base))
        );
    }

    #[test]
    fn parser_roundtrips_on_random_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x10c5);
        for _ in 0..200 {
            let s = small_structure(&mut rng);
            let phi = random_sentence(&mut rng, &s, &mut Vec::new(), 3, false);
            let text = phi.to_string();
            let back = parse_formula(&text)
                .unwrap_or_else(|e| panic!("reparse of {text:?} failed: {e}"));
            assert_eq!(back, phi, "text was {text}");
        }
    }

    #[test]
    fn parser_precedence_and_errors() {
        let f = parse_formula("x in y and y in z implies x in z").unwrap();
        assert!(matches!(f, Formula::Implies(_, _)));
        let g = parse_formula("not x in y or y in z").unwrap();
        assert!(matches!(g, Formula::Or(_, _)));
        assert!(parse_formula("forall forall . x in y").is_err());
        assert!(parse_formula("x in").is_err());
        assert!(parse_formula("M in x").is_err());
        assert!(parse_formula("forall x . x in y extra").is_err());
    }

    #[test]
    fn shadowing_is_rejected() {
        let sig = sig_over(vec![SetValue::empty()]);
        let phi = Formula::forall("x", Formula::exists("x", Formula::Eq(
            Term::Var("x".into()),
            empty_const(),
        )));
        assert!(phi.check(&sig).is_err());
        assert!(encode_formula(&phi, &sig).is_err());
    }

    #[test]
    fn falsum_is_a_fixed_false_sentence() {
        let s = FiniteStructure::new([SetValue::empty()]).unwrap();
        assert_eq!(satisfies(&s, &Formula::falsum(), &Assignment::new()), Ok(false));
        assert!(Formula::falsum().is_sentence());
    }
}
