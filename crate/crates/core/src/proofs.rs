//! An infinitary proof system over a finite structure.
//!
//! Proofs are finite trees of sentences. Leaves are premises of a theory,
//! true membership or class-predicate facts about constants, or instances
//! of logical axiom schemas. Internal nodes apply modus ponens, the
//! set-indexed rule (from `ψ(ā)` for every member `a` of `b`, conclude
//! `forall x in b̄ . ψ`), or the class rule (the same with the class `M`
//! as index set). Because the ambient structure is finite, both rules have
//! finitely many children and proof checking is fully mechanical.
//!
//! [`refutation_search`] drives the same rules backward from the fixed
//! contradiction sentence, so a theory can be pronounced inconsistent by
//! exhibiting a checkable refutation tree.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::hf::SetValue;
use crate::logic::{Bound, Formula, LogicError, Signature, Term};
use crate::structure::PredName;

/// How a proof node is justified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Justification {
    /// A true `∈`/`=` literal about set constants.
    MembershipFact,
    /// A true class-predicate literal about a set constant.
    ClassFact,
    /// An instance of a logical axiom schema.
    LogicalAxiom,
    /// One of the theory's sentences.
    Premise,
    /// From `φ → ψ` and `φ`, conclude `ψ`.
    ModusPonens,
    /// From `ψ(ā)` for every member `a` of the set, conclude the bounded
    /// universal sentence over that set.
    SetRule(SetValue),
    /// From `ψ(ā)` for every `a` in the class `M`, conclude
    /// `forall x in M . ψ`.
    ClassRule,
}

impl Justification {
    fn tag(&self) -> String {
        match self {
            Justification::MembershipFact => "member".into(),
            Justification::ClassFact => "class".into(),
            Justification::LogicalAxiom => "logic".into(),
            Justification::Premise => "premise".into(),
            Justification::ModusPonens => "mp".into(),
            Justification::SetRule(b) => format!("set {b}"),
            Justification::ClassRule => "m".into(),
        }
    }
}

/// A finite proof tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofTree {
    pub conclusion: Formula,
    pub justification: Justification,
    pub children: Vec<ProofTree>,
}

impl ProofTree {
    pub fn leaf(conclusion: Formula, justification: Justification) -> ProofTree {
        ProofTree {
            conclusion,
            justification,
            children: Vec::new(),
        }
    }

    pub fn node(
        conclusion: Formula,
        justification: Justification,
        children: Vec<ProofTree>,
    ) -> ProofTree {
        ProofTree {
            conclusion,
            justification,
            children,
        }
    }

    /// Height of the tree; a leaf has depth 1.
    pub fn depth(&self) -> u32 {
        1 + self
            .children
            .iter()
            .map(|c| c.depth())
            .max()
            .unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Renders the indented `<tag> :: <sentence>` format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(0, &mut out);
        out
    }

    fn render_into(&self, indent: usize, out: &mut String) {
        out.push_str(&" ".repeat(indent * 2));
        out.push_str(&format!("{} :: {}\n", self.justification.tag(), self.conclusion));
        for c in &self.children {
            c.render_into(indent + 1, out);
        }
    }

    /// Parses the format produced by [`ProofTree::render`].
    pub fn parse(text: &str) -> Result<ProofTree, ProofError> {
        let mut nodes: Vec<(usize, ProofTree)> = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line_no = line_no + 1;
            if line.trim().is_empty() || line.trim().starts_with('#') {
                continue;
            }
            let indent = line.len() - line.trim_start().len();
            if indent % 2 != 0 {
                return Err(ProofError::Text {
                    line: line_no,
                    msg: "indentation must be a multiple of two spaces".into(),
                });
            }
            let level = indent / 2;
            let body = line.trim();
            let (head, formula_text) = body.split_once(" :: ").ok_or(ProofError::Text {
                line: line_no,
                msg: "expected '<tag> :: <sentence>'".into(),
            })?;
            let justification = parse_tag(head.trim()).ok_or(ProofError::Text {
                line: line_no,
                msg: format!("unknown step tag '{head}'"),
            })?;
            let conclusion =
                crate::logic::parse_formula(formula_text.trim()).map_err(|e| ProofError::Text {
                    line: line_no,
                    msg: format!("bad sentence: {e}"),
                })?;
            let node = ProofTree::leaf(conclusion, justification);
            if level > 0 && nodes.iter().all(|(l, _)| *l != level - 1) {
                return Err(ProofError::Text {
                    line: line_no,
                    msg: "step is indented below a missing parent".into(),
                });
            }
            // Close any deeper or equal levels back into their parents.
            while let Some(&(top_level, _)) = nodes.last() {
                if top_level >= level {
                    let (l, finished) = nodes.pop().unwrap();
                    match nodes.last_mut() {
                        Some((_, parent)) if l > 0 => parent.children.push(finished),
                        _ if l == 0 => {
                            return Err(ProofError::Text {
                                line: line_no,
                                msg: "more than one root step".into(),
                            })
                        }
                        _ => {
                            return Err(ProofError::Text {
                                line: line_no,
                                msg: "step is indented below a missing parent".into(),
                            })
                        }
                    }
                } else {
                    break;
                }
            }
            nodes.push((level, node));
        }
        // Fold the remaining spine.
        let mut current: Option<ProofTree> = None;
        while let Some((level, mut node)) = nodes.pop() {
            if let Some(child) = current.take() {
                node.children.push(child);
            }
            if level == 0 && !nodes.is_empty() {
                return Err(ProofError::Text {
                    line: 1,
                    msg: "more than one root step".into(),
                });
            }
            current = Some(node);
        }
        current.ok_or(ProofError::Text {
            line: 1,
            msg: "empty proof".into(),
        })
    }
}

fn parse_tag(head: &str) -> Option<Justification> {
    match head {
        "member" => Some(Justification::MembershipFact),
        "class" => Some(Justification::ClassFact),
        "logic" => Some(Justification::LogicalAxiom),
        "premise" => Some(Justification::Premise),
        "mp" => Some(Justification::ModusPonens),
        "m" => Some(Justification::ClassRule),
        _ => head
            .strip_prefix("set ")
            .and_then(|lit| SetValue::parse(lit.trim()).ok().map(Justification::SetRule)),
    }
}

/// A theory: a signature plus finitely many premise sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Theory {
    sig: Signature,
    sentences: Vec<Formula>,
}

impl Theory {
    pub fn new(
        sig: Signature,
        sentences: impl IntoIterator<Item = Formula>,
    ) -> Result<Theory, ProofError> {
        let sentences: Vec<Formula> = sentences.into_iter().collect();
        for s in &sentences {
            s.check(&sig)?;
            if !s.is_sentence() {
                return Err(ProofError::OpenSentence(s.to_string()));
            }
        }
        Ok(Theory { sig, sentences })
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn structure(&self) -> &crate::structure::FiniteStructure {
        self.sig.base()
    }

    pub fn sentences(&self) -> &[Formula] {
        &self.sentences
    }
}

/// Proof rejection reasons, located by a node path like `0.1`.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProofError {
    #[error("theory sentence is not closed: {0}")]
    OpenSentence(String),
    #[error(transparent)]
    IllFormed(#[from] LogicError),
    #[error("step {path}: {reason}")]
    Step { path: String, reason: StepReason },
    #[error("proof text error on line {line}: {msg}")]
    Text { line: usize, msg: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepReason {
    #[error("conclusion is not a closed sentence")]
    NotASentence,
    #[error("conclusion is ill-formed: {0}")]
    IllFormed(String),
    #[error("not a true membership literal about constants")]
    NotAMembershipFact,
    #[error("not a true class literal about a constant")]
    NotAClassFact,
    #[error("not an instance of any logical axiom schema")]
    NotALogicalAxiom,
    #[error("not among the theory's premises")]
    NotAPremise,
    #[error("axiom and premise steps take no subproofs")]
    LeafExpected,
    #[error("modus ponens needs subproofs of an implication and its antecedent")]
    BadModusPonens,
    #[error("{0}")]
    BadSetRule(String),
    #[error("{0}")]
    BadClassRule(String),
}

/// Checks a proof tree against a theory, node by node.
pub fn check_proof(theory: &Theory, proof: &ProofTree) -> Result<(), ProofError> {
    check_node(theory, proof, &mut Vec::new())
}

fn check_node(theory: &Theory, node: &ProofTree, path: &mut Vec<usize>) -> Result<(), ProofError> {
    let fail = |reason: StepReason, path: &[usize]| {
        let path = if path.is_empty() {
            "root".to_string()
        } else {
            path.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(".")
        };
        Err(ProofError::Step { path, reason })
    };

    if let Err(e) = node.conclusion.check(theory.signature()) {
        return fail(StepReason::IllFormed(e.to_string()), path);
    }
    if !node.conclusion.is_sentence() {
        return fail(StepReason::NotASentence, path);
    }

    match &node.justification {
        Justification::MembershipFact => {
            if !node.children.is_empty() {
                return fail(StepReason::LeafExpected, path);
            }
            if membership_literal_truth(&node.conclusion) != Some(true) {
                return fail(StepReason::NotAMembershipFact, path);
            }
        }
        Justification::ClassFact => {
            if !node.children.is_empty() {
                return fail(StepReason::LeafExpected, path);
            }
            if class_literal_truth(&node.conclusion, theory) != Some(true) {
                return fail(StepReason::NotAClassFact, path);
            }
        }
        Justification::LogicalAxiom => {
            if !node.children.is_empty() {
                return fail(StepReason::LeafExpected, path);
            }
            if logical_axiom_name(&node.conclusion).is_none() {
                return fail(StepReason::NotALogicalAxiom, path);
            }
        }
        Justification::Premise => {
            if !node.children.is_empty() {
                return fail(StepReason::LeafExpected, path);
            }
            if !theory.sentences().contains(&node.conclusion) {
                return fail(StepReason::NotAPremise, path);
            }
        }
        Justification::ModusPonens => {
            let ok = node.children.len() == 2
                && node.children[0].conclusion
                    == Formula::implies(
                        node.children[1].conclusion.clone(),
                        node.conclusion.clone(),
                    );
            if !ok {
                return fail(StepReason::BadModusPonens, path);
            }
        }
        Justification::SetRule(b) => {
            let Formula::ForallIn(v, Bound::Term(Term::Const(bound)), body) = &node.conclusion
            else {
                return fail(
                    StepReason::BadSetRule(
                        "conclusion must be a universal sentence bounded by a set constant"
                            .into(),
                    ),
                    path,
                );
            };
            if bound != b {
                return fail(
                    StepReason::BadSetRule(format!(
                        "rule set {b} does not match the bound {bound}"
                    )),
                    path,
                );
            }
            if b.is_empty() {
                return fail(
                    StepReason::BadSetRule(
                        "the rule needs a nonempty index set; the vacuous sentence is a logical axiom"
                            .into(),
                    ),
                    path,
                );
            }
            let instances: Vec<Formula> = b
                .elements()
                .iter()
                .map(|a| body.substitute(v, a))
                .collect();
            check_rule_children(&instances, node, path, |msg| StepReason::BadSetRule(msg))?;
        }
        Justification::ClassRule => {
            let Formula::ForallIn(v, Bound::Pred(PredName::M), body) = &node.conclusion else {
                return fail(
                    StepReason::BadClassRule(
                        "conclusion must be a universal sentence bounded by the class M".into(),
                    ),
                    path,
                );
            };
            let interp = theory
                .structure()
                .pred(PredName::M)
                .expect("M is always interpreted");
            let instances: Vec<Formula> =
                interp.iter().map(|a| body.substitute(v, a)).collect();
            check_rule_children(&instances, node, path, |msg| StepReason::BadClassRule(msg))?;
        }
    }

    for (i, child) in node.children.iter().enumerate() {
        path.push(i);
        check_node(theory, child, path)?;
        path.pop();
    }
    Ok(())
}

/// Children of an indexed rule must prove exactly the instance sentences:
/// every child proves some instance (no junk) and every instance is proved
/// by some child (full coverage); duplicates are permitted.
fn check_rule_children(
    instances: &[Formula],
    node: &ProofTree,
    path: &[usize],
    wrap: impl Fn(String) -> StepReason,
) -> Result<(), ProofError> {
    let fail = |reason: StepReason| {
        let path = if path.is_empty() {
            "root".to_string()
        } else {
            path.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(".")
        };
        Err(ProofError::Step { path, reason })
    };
    for child in &node.children {
        if !instances.contains(&child.conclusion) {
            return fail(wrap(format!(
                "subproof of {} is not an instance of the rule",
                child.conclusion
            )));
        }
    }
    for instance in instances {
        if !node.children.iter().any(|c| c.conclusion == *instance) {
            return fail(wrap(format!("no subproof covers the instance {instance}")));
        }
    }
    Ok(())
}

/// Truth value of an `∈`/`=` literal about constants; `None` if the
/// sentence is not such a literal. Truth is computed directly on the sets,
/// so facts about any hereditarily finite constants are available.
fn membership_literal_truth(f: &Formula) -> Option<bool> {
    match f {
        Formula::In(Term::Const(a), Term::Const(b)) => Some(b.contains(a)),
        Formula::Eq(Term::Const(a), Term::Const(b)) => Some(a == b),
        Formula::Not(inner) => membership_literal_truth(inner).map(|v| !v),
        _ => None,
    }
}

/// Truth value of a class-predicate literal about a constant, per the
/// theory's structure; `None` if the sentence has another shape or the
/// predicate is uninterpreted.
fn class_literal_truth(f: &Formula, theory: &Theory) -> Option<bool> {
    match f {
        Formula::Pred(p, Term::Const(c)) => {
            theory.structure().pred(*p).map(|interp| interp.contains(c))
        }
        Formula::Not(inner) => class_literal_truth(inner, theory).map(|v| !v),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Logical axiom schemas
// ---------------------------------------------------------------------------

/// Recognizes instances of the logical axiom schemas, returning the schema
/// name. The schemas are a Hilbert-style propositional base (weakening,
/// distribution, contraposition, absurdity, double negation, conjunction
/// and disjunction laws), reflexivity of equality, quantifier
/// instantiation and witness axioms in bounded and unbounded forms,
/// vacuous bounded quantification over the empty set, and quantifier
/// clash axioms that let a universal and a conflicting existential
/// sentence derive anything.
pub fn logical_axiom_name(f: &Formula) -> Option<&'static str> {
    use Formula::*;

    // Reflexivity: c = c.
    if let Eq(Term::Const(a), Term::Const(b)) = f {
        if a == b {
            return Some("reflexivity");
        }
    }

    // Vacuous bounded quantification over the empty set.
    if let ForallIn(_, Bound::Term(Term::Const(b)), _) = f {
        if b.is_empty() {
            return Some("vacuous-bound");
        }
    }
    if let Not(inner) = f {
        if let ExistsIn(_, Bound::Term(Term::Const(b)), _) = inner.as_ref() {
            if b.is_empty() {
                return Some("vacuous-bound");
            }
        }
    }

    let Implies(a, b) = f else {
        return None;
    };

    // Weakening: φ → (ψ → φ).
    if let Implies(_, c) = b.as_ref() {
        if c.as_ref() == a.as_ref() {
            return Some("weakening");
        }
    }

    // Distribution: (φ → (ψ → χ)) → ((φ → ψ) → (φ → χ)).
    if let (Implies(p1, rest1), Implies(left, right)) = (a.as_ref(), b.as_ref()) {
        if let (Implies(q1, r1), Implies(p2, q2), Implies(p3, r2)) =
            (rest1.as_ref(), left.as_ref(), right.as_ref())
        {
            if p1 == p2 && p1 == p3 && q1 == q2 && r1 == r2 {
                return Some("distribution");
            }
        }
    }

    // Contraposition: (¬φ → ¬ψ) → (ψ → φ).
    if let (Implies(na, nb), Implies(q, p)) = (a.as_ref(), b.as_ref()) {
        if let (Not(phi), Not(psi)) = (na.as_ref(), nb.as_ref()) {
            if phi == p && psi == q {
                return Some("contraposition");
            }
        }
    }

    // Absurdity: φ → (¬φ → ψ).
    if let Implies(np, _) = b.as_ref() {
        if let Not(phi) = np.as_ref() {
            if phi == a {
                return Some("absurdity");
            }
        }
    }

    // Double negation, both directions.
    if let Not(inner) = a.as_ref() {
        if let Not(phi) = inner.as_ref() {
            if phi == b {
                return Some("double-negation-elim");
            }
        }
    }
    if let Not(inner) = b.as_ref() {
        if let Not(phi) = inner.as_ref() {
            if phi == a {
                return Some("double-negation-intro");
            }
        }
    }

    // Conjunction: (φ ∧ ψ) → φ, (φ ∧ ψ) → ψ, φ → (ψ → (φ ∧ ψ)).
    if let And(p, q) = a.as_ref() {
        if p == b {
            return Some("and-left");
        }
        if q == b {
            return Some("and-right");
        }
    }
    if let Implies(q, c) = b.as_ref() {
        if let And(p2, q2) = c.as_ref() {
            if p2 == a && q2 == q {
                return Some("and-intro");
            }
        }
    }

    // Disjunction: φ → (φ ∨ ψ), ψ → (φ ∨ ψ),
    // (φ → χ) → ((ψ → χ) → ((φ ∨ ψ) → χ)).
    if let Or(p, q) = b.as_ref() {
        if p == a {
            return Some("or-left");
        }
        if q == a {
            return Some("or-right");
        }
    }
    if let (Implies(p1, c1), Implies(middle, last)) = (a.as_ref(), b.as_ref()) {
        if let (Implies(q1, c2), Implies(disj, c3)) = (middle.as_ref(), last.as_ref()) {
            if let Or(p2, q2) = disj.as_ref() {
                if p1 == p2 && q1 == q2 && c1 == c2 && c1 == c3 {
                    return Some("or-elim");
                }
            }
        }
    }

    // Quantifier instantiation and witness axioms.
    if let Forall(v, body) = a.as_ref() {
        if is_instance(body, v, b) {
            return Some("universal-instance");
        }
    }
    if let Exists(v, body) = b.as_ref() {
        if is_instance(body, v, a) {
            return Some("existential-witness");
        }
    }
    if let (ForallIn(v, bound, body), Implies(atom, inst)) = (a.as_ref(), b.as_ref()) {
        if let Some(c) = bound_atom_constant(atom, bound) {
            if body.substitute(v, &c) == **inst {
                return Some("bounded-universal-instance");
            }
        }
    }
    if let Implies(inst, ex) = b.as_ref() {
        if let ExistsIn(v, bound, body) = ex.as_ref() {
            if let Some(c) = bound_atom_constant(a, bound) {
                if body.substitute(v, &c) == **inst {
                    return Some("bounded-existential-witness");
                }
            }
        }
    }

    // Quantifier clash: a universal sentence and an existential sentence
    // over the same range whose bodies negate each other prove anything.
    if let Implies(second, _) = b.as_ref() {
        if quantifiers_clash(a, second) || quantifiers_clash(second, a) {
            return Some("quantifier-clash");
        }
    }

    None
}

/// Whether `candidate` is `body` with some constant substituted for `var`
/// (including the degenerate case where `var` does not occur).
fn is_instance(body: &Formula, var: &str, candidate: &Formula) -> bool {
    if !body.free_vars().contains(&var.to_string()) {
        return body == candidate;
    }
    let mut consts = BTreeSet::new();
    constants_of(candidate, &mut consts);
    consts
        .iter()
        .any(|c| body.substitute(var, c) == *candidate)
}

fn constants_of(f: &Formula, out: &mut BTreeSet<SetValue>) {
    let visit = |t: &Term, out: &mut BTreeSet<SetValue>| {
        if let Term::Const(c) = t {
            out.insert(c.clone());
        }
    };
    match f {
        Formula::In(a, b) | Formula::Eq(a, b) => {
            visit(a, out);
            visit(b, out);
        }
        Formula::Pred(_, t) => visit(t, out),
        Formula::Not(g) => constants_of(g, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            constants_of(a, out);
            constants_of(b, out);
        }
        Formula::Forall(_, g) | Formula::Exists(_, g) => constants_of(g, out),
        Formula::ForallIn(_, b, g) | Formula::ExistsIn(_, b, g) => {
            if let Bound::Term(t) = b {
                visit(t, out);
            }
            constants_of(g, out);
        }
    }
}

/// If `atom` asserts that a constant falls in `bound`, returns that
/// constant: `c ∈ b` for a term bound, `c ∈ P` for a class bound.
fn bound_atom_constant(atom: &Formula, bound: &Bound) -> Option<SetValue> {
    match (atom, bound) {
        (Formula::In(Term::Const(c), t), Bound::Term(u)) if t == u => Some(c.clone()),
        (Formula::Pred(p, Term::Const(c)), Bound::Pred(q)) if p == q => Some(c.clone()),
        _ => None,
    }
}

/// Whether `univ` is a universal sentence and `exis` an existential one
/// over the same variable and range, with bodies that negate each other.
fn quantifiers_clash(univ: &Formula, exis: &Formula) -> bool {
    let negate = |f: &Formula, g: &Formula| {
        matches!(f, Formula::Not(inner) if inner.as_ref() == g)
            || matches!(g, Formula::Not(inner) if inner.as_ref() == f)
    };
    match (univ, exis) {
        (Formula::Forall(v, p), Formula::Exists(w, q)) => v == w && negate(p, q),
        (Formula::ForallIn(v, b, p), Formula::ExistsIn(w, c, q)) => {
            v == w && b == c && negate(p, q)
        }
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Refutation search
// ---------------------------------------------------------------------------

/// Searches for a proof of the fixed contradiction sentence from the
/// theory, deepening the proof-height budget one level at a time.
pub fn refutation_search(theory: &Theory, max_depth: u32) -> Option<ProofTree> {
    prove(theory, &Formula::falsum(), max_depth)
}

/// Searches backward for a proof of `goal` of height at most `max_depth`.
pub fn prove(theory: &Theory, goal: &Formula, max_depth: u32) -> Option<ProofTree> {
    if goal.check(theory.signature()).is_err() || !goal.is_sentence() {
        return None;
    }
    let mut prover = Prover {
        theory,
        pool: pivot_pool(theory, goal),
        proved: HashMap::new(),
        failed: HashMap::new(),
    };
    for depth in 1..=max_depth {
        if let Some(tree) = prover.prove(goal, depth) {
            debug_assert!(check_proof(theory, &tree).is_ok());
            return Some(tree);
        }
    }
    None
}

struct Prover<'a> {
    theory: &'a Theory,
    pool: Vec<Formula>,
    /// Sentence -> (height, proof) for the smallest height found.
    proved: HashMap<Formula, (u32, ProofTree)>,
    /// Sentence -> largest height budget that failed.
    failed: HashMap<Formula, u32>,
}

impl<'a> Prover<'a> {
    fn prove(&mut self, goal: &Formula, budget: u32) -> Option<ProofTree> {
        if budget == 0 {
            return None;
        }
        if let Some((d, tree)) = self.proved.get(goal) {
            if *d <= budget {
                return Some(tree.clone());
            }
        }
        if let Some(&failed_at) = self.failed.get(goal) {
            if failed_at >= budget {
                return None;
            }
        }

        if let Some(leaf) = self.try_leaf(goal) {
            self.proved.insert(goal.clone(), (1, leaf.clone()));
            return Some(leaf);
        }

        if budget >= 2 {
            if let Some(tree) = self.try_indexed_rules(goal, budget) {
                self.record(goal, tree.clone());
                return Some(tree);
            }
            if let Some(tree) = self.try_modus_ponens(goal, budget) {
                self.record(goal, tree.clone());
                return Some(tree);
            }
        }

        let entry = self.failed.entry(goal.clone()).or_insert(0);
        *entry = (*entry).max(budget);
        None
    }

    fn record(&mut self, goal: &Formula, tree: ProofTree) {
        let depth = tree.depth();
        match self.proved.get(goal) {
            Some((d, _)) if *d <= depth => {}
            _ => {
                self.proved.insert(goal.clone(), (depth, tree));
            }
        }
    }

    fn try_leaf(&self, goal: &Formula) -> Option<ProofTree> {
        if self.theory.sentences().contains(goal) {
            return Some(ProofTree::leaf(goal.clone(), Justification::Premise));
        }
        if membership_literal_truth(goal) == Some(true) {
            return Some(ProofTree::leaf(goal.clone(), Justification::MembershipFact));
        }
        if class_literal_truth(goal, self.theory) == Some(true) {
            return Some(ProofTree::leaf(goal.clone(), Justification::ClassFact));
        }
        if logical_axiom_name(goal).is_some() {
            return Some(ProofTree::leaf(goal.clone(), Justification::LogicalAxiom));
        }
        None
    }

    fn try_indexed_rules(&mut self, goal: &Formula, budget: u32) -> Option<ProofTree> {
        match goal {
            Formula::ForallIn(v, Bound::Term(Term::Const(b)), body) if !b.is_empty() => {
                let mut children = Vec::new();
                for a in b.elements() {
                    let instance = body.substitute(v, a);
                    children.push(self.prove(&instance, budget - 1)?);
                }
                Some(ProofTree::node(
                    goal.clone(),
                    Justification::SetRule(b.clone()),
                    children,
                ))
            }
            Formula::ForallIn(v, Bound::Pred(PredName::M), body) => {
                let interp = self.theory.structure().pred(PredName::M)?;
                let mut children = Vec::new();
                for a in interp {
                    let instance = body.substitute(v, &a);
                    children.push(self.prove(&instance, budget - 1)?);
                }
                Some(ProofTree::node(
                    goal.clone(),
                    Justification::ClassRule,
                    children,
                ))
            }
            _ => None,
        }
    }

    fn try_modus_ponens(&mut self, goal: &Formula, budget: u32) -> Option<ProofTree> {
        for i in 0..self.pool.len() {
            let pivot = self.pool[i].clone();
            if pivot == *goal {
                continue;
            }
            let implication = Formula::implies(pivot.clone(), goal.clone());
            let Some(left) = self.prove(&implication, budget - 1) else {
                continue;
            };
            let Some(right) = self.prove(&pivot, budget - 1) else {
                continue;
            };
            return Some(ProofTree::node(
                goal.clone(),
                Justification::ModusPonens,
                vec![left, right],
            ));
        }
        None
    }
}

/// Candidate pivot sentences for backward modus ponens: the premises,
/// their closed subsentences, instances of quantified subsentences with
/// their bound atoms, the goal's subsentences, the contradiction sentence,
/// and one level of negations of all of these.
fn pivot_pool(theory: &Theory, goal: &Formula) -> Vec<Formula> {
    const POOL_CAP: usize = 600;
    let mut pool: Vec<Formula> = Vec::new();
    let mut seen: HashSet<Formula> = HashSet::new();
    let push = |f: Formula, pool: &mut Vec<Formula>, seen: &mut HashSet<Formula>| {
        if f.is_sentence() && pool.len() < POOL_CAP && seen.insert(f.clone()) {
            pool.push(f);
        }
    };

    let mut base: Vec<Formula> = Vec::new();
    for s in theory.sentences() {
        collect_closed_subformulas(s, &mut base);
    }
    collect_closed_subformulas(goal, &mut base);
    base.push(Formula::falsum());

    // Instances of quantified sentences, the atoms that put the witnesses
    // in range, and the dual quantifier sentences (so a clash partner for
    // an existential premise is available as a pivot).
    let domain: Vec<SetValue> = theory.structure().domain().iter().cloned().collect();
    let dual_body = |body: &Formula| match body {
        Formula::Not(inner) => inner.as_ref().clone(),
        other => Formula::not(other.clone()),
    };
    let mut instances: Vec<Formula> = Vec::new();
    for f in &base {
        match f {
            Formula::ForallIn(v, Bound::Term(Term::Const(b)), body)
            | Formula::ExistsIn(v, Bound::Term(Term::Const(b)), body) => {
                for a in b.elements() {
                    instances.push(Formula::In(
                        Term::Const(a.clone()),
                        Term::Const(b.clone()),
                    ));
                    instances.push(body.substitute(v, a));
                }
            }
            Formula::ForallIn(v, Bound::Pred(p), body)
            | Formula::ExistsIn(v, Bound::Pred(p), body) => {
                if let Some(interp) = theory.structure().pred(*p) {
                    for a in interp {
                        instances.push(Formula::Pred(*p, Term::Const(a.clone())));
                        instances.push(body.substitute(v, &a));
                    }
                }
            }
            Formula::Forall(v, body) | Formula::Exists(v, body) => {
                for a in &domain {
                    instances.push(body.substitute(v, a));
                }
            }
            _ => {}
        }
        match f {
            Formula::ExistsIn(v, b, body) => {
                instances.push(Formula::forall_in(v.clone(), b.clone(), dual_body(body)));
            }
            Formula::ForallIn(v, b, body) => {
                instances.push(Formula::exists_in(v.clone(), b.clone(), dual_body(body)));
            }
            Formula::Exists(v, body) => {
                instances.push(Formula::forall(v.clone(), dual_body(body)));
            }
            Formula::Forall(v, body) => {
                instances.push(Formula::exists(v.clone(), dual_body(body)));
            }
            _ => {}
        }
    }
    base.extend(instances);

    for f in base.clone() {
        push(f, &mut pool, &mut seen);
    }
    for f in base {
        push(Formula::not(f), &mut pool, &mut seen);
    }
    pool
}

fn collect_closed_subformulas(f: &Formula, out: &mut Vec<Formula>) {
    if f.is_sentence() {
        out.push(f.clone());
    }
    match f {
        Formula::In(_, _) | Formula::Eq(_, _) | Formula::Pred(_, _) => {}
        Formula::Not(g) => collect_closed_subformulas(g, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            collect_closed_subformulas(a, out);
            collect_closed_subformulas(b, out);
        }
        Formula::Forall(_, g)
        | Formula::Exists(_, g)
        | Formula::ForallIn(_, _, g)
        | Formula::ExistsIn(_, _, g) => collect_closed_subformulas(g, out),
    }
}

// ---------------------------------------------------------------------------
// Corpus generation and mutation (fuzz support)
// ---------------------------------------------------------------------------

/// Builds a random valid proof over the theory by composing fact leaves,
/// axiom instances, premises, modus ponens chains, and the indexed rules.
pub fn sample_valid_proof<R: rand::Rng>(rng: &mut R, theory: &Theory) -> ProofTree {
    let domain: Vec<SetValue> = theory.structure().domain().iter().cloned().collect();
    let mut proved: Vec<ProofTree> = Vec::new();

    let small_sentences: Vec<Formula> = {
        let mut v = Vec::new();
        for a in domain.iter().take(3) {
            v.push(Formula::Eq(Term::Const(a.clone()), Term::Const(a.clone())));
            v.push(Formula::Pred(PredName::M, Term::Const(a.clone())));
            for b in domain.iter().take(3) {
                v.push(Formula::In(Term::Const(a.clone()), Term::Const(b.clone())));
            }
        }
        v.push(Formula::falsum());
        v
    };
    let pick_sentence = |rng: &mut R| -> Formula {
        small_sentences[rng.gen_range(0..small_sentences.len())].clone()
    };

    let steps = rng.gen_range(1..=6);
    for _ in 0..steps {
        let choice = rng.gen_range(0..6);
        match choice {
            // True membership fact about two domain constants.
            0 => {
                let a = domain[rng.gen_range(0..domain.len())].clone();
                let b = domain[rng.gen_range(0..domain.len())].clone();
                let atom = Formula::In(Term::Const(a.clone()), Term::Const(b.clone()));
                let f = if b.contains(&a) {
                    atom
                } else {
                    Formula::not(atom)
                };
                proved.push(ProofTree::leaf(f, Justification::MembershipFact));
            }
            // Class fact.
            1 => {
                let a = domain[rng.gen_range(0..domain.len())].clone();
                proved.push(ProofTree::leaf(
                    Formula::Pred(PredName::M, Term::Const(a)),
                    Justification::ClassFact,
                ));
            }
            // Premise, when the theory has any.
            2 if !theory.sentences().is_empty() => {
                let s = &theory.sentences()[rng.gen_range(0..theory.sentences().len())];
                proved.push(ProofTree::leaf(s.clone(), Justification::Premise));
            }
            // Weakening axiom plus modus ponens on an earlier conclusion.
            3 if !proved.is_empty() => {
                let phi = proved[rng.gen_range(0..proved.len())].clone();
                let psi = pick_sentence(rng);
                let axiom = Formula::implies(
                    phi.conclusion.clone(),
                    Formula::implies(psi.clone(), phi.conclusion.clone()),
                );
                let axiom_leaf = ProofTree::leaf(axiom, Justification::LogicalAxiom);
                let conclusion = Formula::implies(psi, phi.conclusion.clone());
                proved.push(ProofTree::node(
                    conclusion,
                    Justification::ModusPonens,
                    vec![axiom_leaf, phi],
                ));
            }
            // Set-indexed rule over a small nonempty set of domain elements.
            4 => {
                let size = rng.gen_range(1..=domain.len().min(3));
                let mut members = Vec::new();
                for _ in 0..size {
                    members.push(domain[rng.gen_range(0..domain.len())].clone());
                }
                let b = SetValue::make_set(members);
                let body = Formula::Eq(Term::Var("x".into()), Term::Var("x".into()));
                let mut children: Vec<ProofTree> = b
                    .elements()
                    .iter()
                    .map(|a| {
                        ProofTree::leaf(
                            Formula::Eq(Term::Const(a.clone()), Term::Const(a.clone())),
                            Justification::LogicalAxiom,
                        )
                    })
                    .collect();
                // Duplicate coverage is allowed; exercise it sometimes.
                if rng.gen_bool(0.3) {
                    children.push(children[0].clone());
                }
                proved.push(ProofTree::node(
                    Formula::forall_in("x", Bound::Term(Term::Const(b.clone())), body),
                    Justification::SetRule(b),
                    children,
                ));
            }
            // Class rule: everything in M is in M.
            _ => {
                let body = Formula::Pred(PredName::M, Term::Var("x".into()));
                let children: Vec<ProofTree> = domain
                    .iter()
                    .map(|a| {
                        ProofTree::leaf(
                            Formula::Pred(PredName::M, Term::Const(a.clone())),
                            Justification::ClassFact,
                        )
                    })
                    .collect();
                proved.push(ProofTree::node(
                    Formula::forall_in("x", Bound::Pred(PredName::M), body),
                    Justification::ClassRule,
                    children,
                ));
            }
        }
    }
    proved.pop().unwrap_or_else(|| {
        ProofTree::leaf(
            Formula::Eq(
                Term::Const(SetValue::empty()),
                Term::Const(SetValue::empty()),
            ),
            Justification::LogicalAxiom,
        )
    })
}

/// Damages exactly one node of a valid proof so that checking fails;
/// retries internally until the damage is effective.
pub fn sample_mutant<R: rand::Rng>(
    rng: &mut R,
    proof: &ProofTree,
    theory: &Theory,
) -> Option<ProofTree> {
    for _ in 0..100 {
        let mut mutant = proof.clone();
        let node_count = proof.node_count();
        let target = rng.gen_range(0..node_count);
        let kind = rng.gen_range(0..3);
        mutate_nth(&mut mutant, target, kind, &mut 0);
        if mutant != *proof && check_proof(theory, &mutant).is_err() {
            return Some(mutant);
        }
    }
    None
}

fn mutate_nth(node: &mut ProofTree, target: usize, kind: u32, counter: &mut usize) {
    if *counter == target {
        match kind {
            // Negate the conclusion.
            0 => node.conclusion = Formula::not(node.conclusion.clone()),
            // Swap the justification for a different leaf tag.
            1 => {
                node.justification = match node.justification {
                    Justification::Premise => Justification::LogicalAxiom,
                    _ => Justification::Premise,
                }
            }
            // Drop a child (or negate, for leaves).
            _ => {
                if node.children.is_empty() {
                    node.conclusion = Formula::not(node.conclusion.clone());
                } else {
                    let drop = node.children.len() - 1;
                    node.children.remove(drop);
                }
            }
        }
    }
    *counter += 1;
    for c in &mut node.children {
        mutate_nth(c, target, kind, counter);
    }
}
