//! Forcing over finite partial orders.
//!
//! A forcing notion here is a finite poset with a greatest condition. Over
//! a finite poset the fully generic filters are exactly the upward
//! closures of the minimal conditions (atoms): a set is dense exactly when
//! it contains every atom, so each atom's upward closure meets every dense
//! set, and every filter meeting the dense set of atoms is such a closure.
//!
//! Names are sets of (name, condition) pairs. A name evaluates under a
//! filter to the set of values of the entries whose condition made it in.
//! Check names pair every constituent with the top condition, so they
//! evaluate to their ground set under every filter; the generic name pairs
//! each condition's code with that condition, so it evaluates to a set
//! coding the filter itself.
//!
//! Forcing comes in two independently implemented flavors that the tests
//! and the acceptance suite play against each other: [`forces_semantic`]
//! (truth in every extension by a generic filter containing the
//! condition) and [`Forcer::forces`] (the recursive clauses on the
//! structure of the sentence, with the atomic membership and equality
//! clauses recursing on name rank).

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::hf::SetValue;
use crate::logic::{satisfies, Assignment, Bound, Formula, LogicError, Term};
use crate::structure::{FiniteStructure, PredName};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForcingError {
    #[error("poset error: {0}")]
    Poset(String),
    #[error("poset text error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("name error: {0}")]
    Name(String),
    #[error("forcing formulas support only the class predicate M")]
    UnsupportedPredicate,
    #[error("free variable {0} reached an atomic forcing clause")]
    UnboundVariable(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("structure error: {0}")]
    Structure(String),
}

// ---------------------------------------------------------------------------
// Posets
// ---------------------------------------------------------------------------

/// A finite partial order with a greatest condition and one distinct set
/// code per condition (defaulting to the finite ordinals).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poset {
    labels: Vec<String>,
    le: Vec<Vec<bool>>,
    top: usize,
    codes: Vec<SetValue>,
}

impl Poset {
    /// Builds a poset from condition labels and generating `a ≤ b` pairs.
    /// The relation is closed reflexively and transitively; cycles and a
    /// missing or non-unique greatest condition are rejected.
    pub fn new(
        labels: Vec<String>,
        le_pairs: &[(usize, usize)],
    ) -> Result<Poset, ForcingError> {
        let n = labels.len();
        if n == 0 {
            return Err(ForcingError::Poset("a poset needs at least one condition".into()));
        }
        {
            let unique: BTreeSet<&String> = labels.iter().collect();
            if unique.len() != n {
                return Err(ForcingError::Poset("condition labels must be distinct".into()));
            }
        }
        let mut le = vec![vec![false; n]; n];
        for i in 0..n {
            le[i][i] = true;
        }
        for &(a, b) in le_pairs {
            if a >= n || b >= n {
                return Err(ForcingError::Poset(format!(
                    "condition index {} out of range",
                    a.max(b)
                )));
            }
            le[a][b] = true;
        }
        // Transitive closure.
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if le[i][k] && le[k][j] {
                        le[i][j] = true;
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && le[i][j] && le[j][i] {
                    return Err(ForcingError::Poset(format!(
                        "conditions {} and {} order each other",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        let tops: Vec<usize> = (0..n).filter(|&t| (0..n).all(|i| le[i][t])).collect();
        let top = match tops.as_slice() {
            [t] => *t,
            [] => {
                return Err(ForcingError::Poset(
                    "no condition lies above all others".into(),
                ))
            }
            _ => {
                return Err(ForcingError::Poset(
                    "more than one maximal condition lies above all others".into(),
                ))
            }
        };
        let codes = (0..n).map(|i| SetValue::ordinal(i as u32)).collect();
        Ok(Poset {
            labels,
            le,
            top,
            codes,
        })
    }

    /// Replaces the code of one condition. Codes must stay distinct.
    pub fn set_code(&mut self, condition: usize, code: SetValue) -> Result<(), ForcingError> {
        let mut codes = self.codes.clone();
        codes[condition] = code;
        let unique: BTreeSet<&SetValue> = codes.iter().collect();
        if unique.len() != codes.len() {
            return Err(ForcingError::Poset("condition codes must be distinct".into()));
        }
        self.codes = codes;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn le(&self, a: usize, b: usize) -> bool {
        self.le[a][b]
    }

    pub fn top(&self) -> usize {
        self.top
    }

    pub fn code(&self, i: usize) -> &SetValue {
        &self.codes[i]
    }

    pub fn condition_of_code(&self, code: &SetValue) -> Option<usize> {
        self.codes.iter().position(|c| c == code)
    }

    /// Minimal conditions.
    pub fn atoms(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&p| (0..self.len()).all(|q| !self.le[q][p] || q == p))
            .collect()
    }

    pub fn compatible(&self, a: usize, b: usize) -> bool {
        (0..self.len()).any(|q| self.le[q][a] && self.le[q][b])
    }

    /// A largest set of pairwise incompatible conditions (the first one
    /// in subset-mask order).
    pub fn max_antichain(&self) -> Vec<usize> {
        let n = self.len();
        let mut best: Vec<usize> = Vec::new();
        for mask in 0u32..(1 << n) {
            let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let antichain = members
                .iter()
                .enumerate()
                .all(|(k, &a)| members[k + 1..].iter().all(|&b| !self.compatible(a, b)));
            if antichain && members.len() > best.len() {
                best = members;
            }
        }
        best
    }

    /// Size of the largest set of pairwise incompatible conditions.
    pub fn max_antichain_size(&self) -> usize {
        self.max_antichain().len()
    }

    /// Every antichain of a finite poset is finite, so the chain
    /// condition holds vacuously; the maximum antichain is the
    /// meaningful datum and is returned as the witness.
    pub fn is_ccc(&self) -> (bool, Vec<usize>) {
        let witness = self.max_antichain();
        (witness.len() <= self.len(), witness)
    }

    /// Whether `d` meets every condition from below.
    pub fn is_dense(&self, d: &BTreeSet<usize>) -> bool {
        (0..self.len()).all(|p| (0..self.len()).any(|q| self.le[q][p] && d.contains(&q)))
    }

    pub fn is_dense_below(&self, d: &BTreeSet<usize>, p: usize) -> bool {
        (0..self.len())
            .filter(|&r| self.le[r][p])
            .all(|r| (0..self.len()).any(|q| self.le[q][r] && d.contains(&q)))
    }

    /// Parses `cond <label>`, `le <a> <b>`, and optional `code <label>
    /// <set>` lines; `#` starts a comment. The greatest condition is
    /// inferred.
    pub fn parse(text: &str) -> Result<Poset, ForcingError> {
        let mut labels: Vec<String> = Vec::new();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut codes: Vec<(usize, SetValue)> = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line_no = line_no + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let words: Vec<&str> = t.splitn(3, ' ').collect();
            let find = |name: &str, labels: &Vec<String>| {
                labels
                    .iter()
                    .position(|l| l == name)
                    .ok_or(ForcingError::Parse {
                        line: line_no,
                        msg: format!("unknown condition '{name}'"),
                    })
            };
            match words.as_slice() {
                ["cond", name] => labels.push(name.trim().to_string()),
                ["le", a, rest] => {
                    let mut it = rest.split_whitespace();
                    let b = it.next().ok_or(ForcingError::Parse {
                        line: line_no,
                        msg: "expected 'le <a> <b>'".into(),
                    })?;
                    if it.next().is_some() {
                        return Err(ForcingError::Parse {
                            line: line_no,
                            msg: "expected 'le <a> <b>'".into(),
                        });
                    }
                    pairs.push((find(a, &labels)?, find(b, &labels)?));
                }
                ["code", name, lit] => {
                    let idx = find(name, &labels)?;
                    let value = SetValue::parse(lit).map_err(|e| ForcingError::Parse {
                        line: line_no,
                        msg: format!("bad set literal: {e}"),
                    })?;
                    codes.push((idx, value));
                }
                _ => {
                    return Err(ForcingError::Parse {
                        line: line_no,
                        msg: "expected 'cond <label>', 'le <a> <b>', or 'code <label> <set>'"
                            .into(),
                    })
                }
            }
        }
        if labels.is_empty() {
            return Err(ForcingError::Parse {
                line: 1,
                msg: "no conditions".into(),
            });
        }
        let mut poset = Poset::new(labels, &pairs)?;
        for (idx, code) in codes {
            poset.set_code(idx, code)?;
        }
        Ok(poset)
    }

    /// Renders the format accepted by [`Poset::parse`].
    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.labels {
            out.push_str(&format!("cond {l}\n"));
        }
        for a in 0..self.len() {
            for b in 0..self.len() {
                if a != b && self.le[a][b] {
                    out.push_str(&format!("le {} {}\n", self.labels[a], self.labels[b]));
                }
            }
        }
        for (i, c) in self.codes.iter().enumerate() {
            if *c != SetValue::ordinal(i as u32) {
                out.push_str(&format!("code {} {}\n", self.labels[i], c));
            }
        }
        out
    }

    /// A label-independent key identifying the poset up to isomorphism
    /// (ignoring codes): the minimal flattened order matrix over all
    /// renumberings.
    pub fn iso_key(&self) -> Vec<bool> {
        let n = self.len();
        let perms = permutations(n);
        let mut best: Option<Vec<bool>> = None;
        for perm in perms {
            let mut flat = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    flat.push(self.le[perm[i]][perm[j]]);
                }
            }
            if best.as_ref().map_or(true, |b| flat < *b) {
                best = Some(flat);
            }
        }
        best.unwrap()
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for slot in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(slot, n - 1);
            out.push(p);
        }
    }
    out
}

/// The fully generic filters: upward closures of the atoms.
pub fn generic_filters(poset: &Poset) -> Vec<BTreeSet<usize>> {
    poset
        .atoms()
        .into_iter()
        .map(|a| (0..poset.len()).filter(|&q| poset.le(a, q)).collect())
        .collect()
}

/// Every filter of the poset: the nonempty, upward-closed, downward-
/// directed condition sets.
pub fn all_filters(poset: &Poset) -> Vec<BTreeSet<usize>> {
    let n = poset.len();
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let upward = members
            .iter()
            .all(|&p| (0..n).all(|q| !poset.le(p, q) || mask & (1 << q) != 0));
        let directed = members.iter().all(|&p| {
            members.iter().all(|&q| {
                members
                    .iter()
                    .any(|&r| poset.le(r, p) && poset.le(r, q))
            })
        });
        if upward && directed {
            out.push(members.into_iter().collect());
        }
    }
    out
}

/// Enumerates all posets with a greatest condition on at most
/// `max_conditions` conditions, one representative per isomorphism class.
/// Conditions are labeled `p0..`, the greatest is labeled `top`, and codes
/// are the finite ordinals.
pub fn poset_fleet(max_conditions: usize) -> Vec<Poset> {
    let mut out = Vec::new();
    for total in 1..=max_conditions {
        let below = total - 1;
        for matrix in posets_on_points(below) {
            let mut pairs = Vec::new();
            for (i, row) in matrix.iter().enumerate() {
                for (j, &le) in row.iter().enumerate() {
                    if le && i != j {
                        pairs.push((i, j));
                    }
                }
            }
            for i in 0..below {
                pairs.push((i, below));
            }
            let labels: Vec<String> = (0..below)
                .map(|i| format!("p{i}"))
                .chain(std::iter::once("top".to_string()))
                .collect();
            out.push(Poset::new(labels, &pairs).expect("fleet posets are valid"));
        }
    }
    out
}

/// All partial orders on `k` labeled points, one per isomorphism class,
/// as reflexive `≤` matrices.
fn posets_on_points(k: usize) -> Vec<Vec<Vec<bool>>> {
    if k == 0 {
        return vec![vec![]];
    }
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let perms = permutations(k);
    let mut seen: BTreeSet<Vec<bool>> = BTreeSet::new();
    let mut out = Vec::new();
    'mask: for mask in 0u32..(1 << pairs.len()) {
        let mut le = vec![vec![false; k]; k];
        for i in 0..k {
            le[i][i] = true;
        }
        for (bit, &(i, j)) in pairs.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                le[i][j] = true;
            }
        }
        // Require transitivity and antisymmetry as given (no closure), so
        // each relation is enumerated exactly once.
        for i in 0..k {
            for j in 0..k {
                if i != j && le[i][j] && le[j][i] {
                    continue 'mask;
                }
                for l in 0..k {
                    if le[i][j] && le[j][l] && !le[i][l] {
                        continue 'mask;
                    }
                }
            }
        }
        let mut key: Option<Vec<bool>> = None;
        for perm in &perms {
            let mut flat = Vec::with_capacity(k * k);
            for i in 0..k {
                for j in 0..k {
                    flat.push(le[perm[i]][perm[j]]);
                }
            }
            if key.as_ref().map_or(true, |b| flat < *b) {
                key = Some(flat);
            }
        }
        if seen.insert(key.unwrap()) {
            out.push(le);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Names
// ---------------------------------------------------------------------------

/// A forcing name: a finite set of (name, condition) entries, kept sorted
/// and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PName {
    entries: Vec<(PName, usize)>,
}

impl PName {
    pub fn new(entries: impl IntoIterator<Item = (PName, usize)>) -> PName {
        let set: BTreeSet<(PName, usize)> = entries.into_iter().collect();
        PName {
            entries: set.into_iter().collect(),
        }
    }

    pub fn empty() -> PName {
        PName {
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[(PName, usize)] {
        &self.entries
    }

    /// The check name of a ground set: every constituent paired with the
    /// top condition, so evaluation returns the set itself.
    pub fn check(x: &SetValue, poset: &Poset) -> PName {
        PName::new(
            x.elements()
                .iter()
                .map(|y| (PName::check(y, poset), poset.top())),
        )
    }

    /// The canonical generic name: each condition's code, checked, paired
    /// with that condition. Evaluation under a filter yields the set of
    /// codes of the filter's members.
    pub fn generic(poset: &Poset) -> PName {
        PName::new(
            (0..poset.len()).map(|p| (PName::check(poset.code(p), poset), p)),
        )
    }

    pub fn rank(&self) -> u32 {
        self.entries
            .iter()
            .map(|(m, _)| m.rank() + 1)
            .max()
            .unwrap_or(0)
    }

    /// The set coding of the name: the set of pairs of the entry name's
    /// code with the condition's code.
    pub fn code(&self, poset: &Poset) -> SetValue {
        SetValue::make_set(self.entries.iter().map(|(m, p)| {
            SetValue::kuratowski_pair(m.code(poset), poset.code(*p).clone())
        }))
    }

    /// Reads a name back off a set: the set must consist of pairs whose
    /// second component is a condition code and whose first parses in
    /// turn. The empty set parses as the empty name.
    pub fn parse(x: &SetValue, poset: &Poset) -> Option<PName> {
        let mut entries = Vec::new();
        for e in x.elements() {
            let (m, c) = e.as_kuratowski_pair()?;
            let cond = poset.condition_of_code(&c)?;
            entries.push((PName::parse(&m, poset)?, cond));
        }
        Some(PName::new(entries))
    }

    /// The value of the name under a filter.
    pub fn eval(&self, filter: &BTreeSet<usize>) -> SetValue {
        SetValue::make_set(
            self.entries
                .iter()
                .filter(|(_, p)| filter.contains(p))
                .map(|(m, _)| m.eval(filter)),
        )
    }

    /// This name and every name appearing inside it.
    pub fn constituents(&self, out: &mut BTreeSet<PName>) {
        if out.insert(self.clone()) {
            for (m, _) in &self.entries {
                m.constituents(out);
            }
        }
    }
}

/// The names quantifiers range over: check names of every ground element,
/// ground elements that themselves parse as names (up to a name rank
/// cap), and the canonical generic name — closed under constituents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameSpace {
    names: Vec<PName>,
}

impl NameSpace {
    pub fn names(&self) -> &[PName] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, n: &PName) -> bool {
        self.names.binary_search(n).is_ok()
    }
}

pub fn name_space(ground: &FiniteStructure, poset: &Poset, rank_cap: u32) -> NameSpace {
    let mut set: BTreeSet<PName> = BTreeSet::new();
    for x in ground.domain() {
        PName::check(x, poset).constituents(&mut set);
        if let Some(n) = PName::parse(x, poset) {
            if n.rank() <= rank_cap {
                n.constituents(&mut set);
            }
        }
    }
    PName::generic(poset).constituents(&mut set);
    NameSpace {
        names: set.into_iter().collect(),
    }
}

// ---------------------------------------------------------------------------
// Extensions and semantic forcing
// ---------------------------------------------------------------------------

/// The extension of the ground structure by a generic filter: the values
/// of every name in the space, transitively closed, with the class `M`
/// still denoting the ground domain.
pub fn extension(
    ground: &FiniteStructure,
    filter: &BTreeSet<usize>,
    names: &NameSpace,
) -> Result<FiniteStructure, ForcingError> {
    let mut domain: BTreeSet<SetValue> = ground.domain().iter().cloned().collect();
    for n in names.names() {
        let v = n.eval(filter);
        domain.extend(v.transitive_closure().elements().iter().cloned());
        domain.insert(v);
    }
    let mut ext = FiniteStructure::new(domain)
        .map_err(|e| ForcingError::Structure(e.to_string()))?;
    ext.set_pred(
        PredName::M,
        ground.domain().iter().cloned().collect::<BTreeSet<_>>(),
    )
    .map_err(|e| ForcingError::Structure(e.to_string()))?;
    Ok(ext)
}

/// How a constant in a forcing sentence is read: sets that parse as names
/// denote those names; all other sets denote themselves (their check
/// name).
pub fn constant_name(c: &SetValue, poset: &Poset) -> PName {
    PName::parse(c, poset).unwrap_or_else(|| PName::check(c, poset))
}

/// Replaces every constant in the sentence by its value under the filter.
fn interpret_constants(f: &Formula, poset: &Poset, filter: &BTreeSet<usize>) -> Formula {
    let term = |t: &Term| match t {
        Term::Const(c) => Term::Const(constant_name(c, poset).eval(filter)),
        v => v.clone(),
    };
    match f {
        Formula::In(a, b) => Formula::In(term(a), term(b)),
        Formula::Eq(a, b) => Formula::Eq(term(a), term(b)),
        Formula::Pred(p, t) => Formula::Pred(*p, term(t)),
        Formula::Not(g) => Formula::not(interpret_constants(g, poset, filter)),
        Formula::And(a, b) => Formula::and(
            interpret_constants(a, poset, filter),
            interpret_constants(b, poset, filter),
        ),
        Formula::Or(a, b) => Formula::or(
            interpret_constants(a, poset, filter),
            interpret_constants(b, poset, filter),
        ),
        Formula::Implies(a, b) => Formula::implies(
            interpret_constants(a, poset, filter),
            interpret_constants(b, poset, filter),
        ),
        Formula::Forall(v, g) => {
            Formula::forall(v.clone(), interpret_constants(g, poset, filter))
        }
        Formula::Exists(v, g) => {
            Formula::exists(v.clone(), interpret_constants(g, poset, filter))
        }
        Formula::ForallIn(v, b, g) => {
            let b = match b {
                Bound::Term(t) => Bound::Term(term(t)),
                p => p.clone(),
            };
            Formula::forall_in(v.clone(), b, interpret_constants(g, poset, filter))
        }
        Formula::ExistsIn(v, b, g) => {
            let b = match b {
                Bound::Term(t) => Bound::Term(term(t)),
                p => p.clone(),
            };
            Formula::exists_in(v.clone(), b, interpret_constants(g, poset, filter))
        }
    }
}

/// Truth of the sentence in one extension, with constants read as names.
pub fn holds_in_extension(
    ground: &FiniteStructure,
    poset: &Poset,
    filter: &BTreeSet<usize>,
    names: &NameSpace,
    sentence: &Formula,
) -> Result<bool, ForcingError> {
    let ext = extension(ground, filter, names)?;
    let interpreted = interpret_constants(sentence, poset, filter);
    Ok(satisfies(&ext, &interpreted, &Assignment::new())?)
}

/// Semantic forcing: the sentence holds in every extension by a generic
/// filter containing `p`.
pub fn forces_semantic(
    ground: &FiniteStructure,
    poset: &Poset,
    p: usize,
    sentence: &Formula,
    names: &NameSpace,
) -> Result<bool, ForcingError> {
    for filter in generic_filters(poset) {
        if !filter.contains(&p) {
            continue;
        }
        if !holds_in_extension(ground, poset, &filter, names, sentence)? {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Syntactic forcing
// ---------------------------------------------------------------------------

/// The recursive forcing clauses. Derived connectives are rewritten to
/// negation, conjunction, and unbounded existentials first; atomic
/// membership and equality recurse on name rank with memoization.
pub struct Forcer<'a> {
    ground: &'a FiniteStructure,
    poset: &'a Poset,
    names: &'a NameSpace,
    eq_memo: HashMap<(usize, PName, PName), bool>,
    in_memo: HashMap<(usize, PName, PName), bool>,
    formula_memo: HashMap<(usize, Formula), bool>,
}

impl<'a> Forcer<'a> {
    pub fn new(ground: &'a FiniteStructure, poset: &'a Poset, names: &'a NameSpace) -> Forcer<'a> {
        Forcer {
            ground,
            poset,
            names,
            eq_memo: HashMap::new(),
            in_memo: HashMap::new(),
            formula_memo: HashMap::new(),
        }
    }

    /// Whether condition `p` forces the sentence.
    pub fn forces(&mut self, p: usize, sentence: &Formula) -> Result<bool, ForcingError> {
        let desugared = desugar(sentence);
        self.forces_core(p, &desugared)
    }

    fn forces_core(&mut self, p: usize, f: &Formula) -> Result<bool, ForcingError> {
        if let Some(&v) = self.formula_memo.get(&(p, f.clone())) {
            return Ok(v);
        }
        let value = match f {
            Formula::In(a, b) => {
                let (n1, n2) = (self.term_name(a)?, self.term_name(b)?);
                self.atomic_in(p, &n1, &n2)
            }
            Formula::Eq(a, b) => {
                let (n1, n2) = (self.term_name(a)?, self.term_name(b)?);
                self.atomic_eq(p, &n1, &n2)
            }
            Formula::Pred(PredName::M, t) => {
                let n = self.term_name(t)?;
                // Densely often the name equals the check of some ground
                // element.
                let ground_elems: Vec<SetValue> =
                    self.ground.domain().iter().cloned().collect();
                let mut d = BTreeSet::new();
                for q in 0..self.poset.len() {
                    for v in &ground_elems {
                        let check = PName::check(v, self.poset);
                        if self.atomic_eq(q, &n, &check) {
                            d.insert(q);
                            break;
                        }
                    }
                }
                self.poset.is_dense_below(&d, p)
            }
            Formula::Pred(_, _) => return Err(ForcingError::UnsupportedPredicate),
            Formula::Not(g) => {
                let mut all_fail = true;
                for q in 0..self.poset.len() {
                    if self.poset.le(q, p) && self.forces_core(q, g)? {
                        all_fail = false;
                        break;
                    }
                }
                all_fail
            }
            Formula::And(a, b) => self.forces_core(p, a)? && self.forces_core(p, b)?,
            Formula::Exists(v, g) => {
                let mut d = BTreeSet::new();
                for q in 0..self.poset.len() {
                    for n in self.names.names() {
                        let instance = g.substitute(v, &n.code(self.poset));
                        if self.forces_core(q, &instance)? {
                            d.insert(q);
                            break;
                        }
                    }
                }
                self.poset.is_dense_below(&d, p)
            }
            Formula::Or(_, _)
            | Formula::Implies(_, _)
            | Formula::Forall(_, _)
            | Formula::ForallIn(_, _, _)
            | Formula::ExistsIn(_, _, _) => {
                unreachable!("desugared sentences contain only not/and/exists")
            }
        };
        self.formula_memo.insert((p, f.clone()), value);
        Ok(value)
    }

    fn term_name(&self, t: &Term) -> Result<PName, ForcingError> {
        match t {
            Term::Const(c) => Ok(constant_name(c, self.poset)),
            Term::Var(v) => Err(ForcingError::UnboundVariable(v.clone())),
        }
    }

    /// `p` forces `n1 ∈ n2`: densely below `p`, some entry of `n2` is
    /// admitted and forced equal to `n1`.
    fn atomic_in(&mut self, p: usize, n1: &PName, n2: &PName) -> bool {
        if let Some(&v) = self.in_memo.get(&(p, n1.clone(), n2.clone())) {
            return v;
        }
        let mut d = BTreeSet::new();
        for q in 0..self.poset.len() {
            let witnessed = n2
                .entries()
                .iter()
                .any(|(m, s)| self.poset.le(q, *s) && self.atomic_eq(q, n1, m));
            if witnessed {
                d.insert(q);
            }
        }
        let value = self.poset.is_dense_below(&d, p);
        self.in_memo.insert((p, n1.clone(), n2.clone()), value);
        value
    }

    /// `p` forces `n1 = n2`: for every entry of either name, densely
    /// below `p`, admitting the entry forces its name into the other side.
    fn atomic_eq(&mut self, p: usize, n1: &PName, n2: &PName) -> bool {
        if let Some(&v) = self.eq_memo.get(&(p, n1.clone(), n2.clone())) {
            return v;
        }
        // Terminates: the membership clause compares an entry of one side
        // with the whole other side, so the rank sum strictly decreases.
        let mut value = true;
        'outer: for (src, dst) in [(n1, n2), (n2, n1)] {
            for (sigma, s) in src.entries() {
                let mut d = BTreeSet::new();
                for q in 0..self.poset.len() {
                    if !self.poset.le(q, *s) || self.atomic_in(q, sigma, dst) {
                        d.insert(q);
                    }
                }
                if !self.poset.is_dense_below(&d, p) {
                    value = false;
                    break 'outer;
                }
            }
        }
        self.eq_memo.insert((p, n1.clone(), n2.clone()), value);
        value
    }
}

/// Syntactic forcing by the recursive clauses; equivalent to
/// [`forces_semantic`] (the test suites drive the two against each other).
pub fn forces_syntactic(
    ground: &FiniteStructure,
    poset: &Poset,
    p: usize,
    sentence: &Formula,
    names: &NameSpace,
) -> Result<bool, ForcingError> {
    Forcer::new(ground, poset, names).forces(p, sentence)
}

/// Rewrites derived connectives into negation, conjunction, and unbounded
/// existentials; bounded quantifiers become guarded unbounded ones.
fn desugar(f: &Formula) -> Formula {
    match f {
        Formula::In(_, _) | Formula::Eq(_, _) | Formula::Pred(_, _) => f.clone(),
        Formula::Not(g) => Formula::not(desugar(g)),
        Formula::And(a, b) => Formula::and(desugar(a), desugar(b)),
        Formula::Or(a, b) => Formula::not(Formula::and(
            Formula::not(desugar(a)),
            Formula::not(desugar(b)),
        )),
        Formula::Implies(a, b) => {
            Formula::not(Formula::and(desugar(a), Formula::not(desugar(b))))
        }
        Formula::Forall(v, g) => Formula::not(Formula::exists(
            v.clone(),
            Formula::not(desugar(g)),
        )),
        Formula::Exists(v, g) => Formula::exists(v.clone(), desugar(g)),
        Formula::ForallIn(v, b, g) => {
            let guard = member_guard(v, b);
            desugar(&Formula::forall(
                v.clone(),
                Formula::implies(guard, (**g).clone()),
            ))
        }
        Formula::ExistsIn(v, b, g) => {
            let guard = member_guard(v, b);
            Formula::exists(
                v.clone(),
                Formula::and(desugar(&guard), desugar(g)),
            )
        }
    }
}

fn member_guard(v: &str, b: &Bound) -> Formula {
    match b {
        Bound::Term(t) => Formula::In(Term::Var(v.to_string()), t.clone()),
        Bound::Pred(p) => Formula::Pred(*p, Term::Var(v.to_string())),
    }
}

// ---------------------------------------------------------------------------
// Absoluteness of existential sentences
// ---------------------------------------------------------------------------

/// Outcome of the existential-absoluteness check: whether some condition
/// forces the existential, whether the ground structure already has a
/// witness, and whether the implication from the first to the second
/// holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsolutenessReport {
    pub forced_by: Option<usize>,
    pub ground_witness: Option<SetValue>,
    pub conclusion_holds: bool,
}

/// Checks "if some condition forces `exists var . phi`, then the ground
/// structure has a witness for `phi`". Ground evaluation that runs into a
/// constant outside the ground domain counts as having no witness there.
pub fn absoluteness_check(
    ground: &FiniteStructure,
    poset: &Poset,
    var: &str,
    phi: &Formula,
    names: &NameSpace,
) -> Result<AbsolutenessReport, ForcingError> {
    if phi.free_vars() != vec![var.to_string()] {
        return Err(ForcingError::Name(format!(
            "{phi}: expected exactly the free variable {var}"
        )));
    }
    let existential = Formula::exists(var, phi.clone());
    let mut forced_by = None;
    for p in 0..poset.len() {
        if forces_semantic(ground, poset, p, &existential, names)? {
            forced_by = Some(p);
            break;
        }
    }
    let mut ground_witness = None;
    for y in ground.domain() {
        let instance = phi.substitute(var, y);
        match satisfies(ground, &instance, &Assignment::new()) {
            Ok(true) => {
                ground_witness = Some(y.clone());
                break;
            }
            Ok(false) => {}
            Err(LogicError::ConstantOutsideDomain(_)) => {}
            Err(e) => return Err(ForcingError::Logic(e)),
        }
    }
    let conclusion_holds = forced_by.is_none() || ground_witness.is_some();
    Ok(AbsolutenessReport {
        forced_by,
        ground_witness,
        conclusion_holds,
    })
}
