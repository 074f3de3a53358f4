//! Towers of definable levels over a base set.
//!
//! Level `L_0` is the hull of a base set (the base together with its
//! transitive closure). Level `L_{n+1}` keeps everything from `L_n` and
//! adds, for each formula in a definition pool and each choice of
//! parameters from `L_n`, the subset of `L_n` the formula carves out. The
//! standard pool contains the empty-set, membership, singleton, and
//! adjunction formulas, so the tower grows at least as fast as the
//! adjunction closure of the hull.
//!
//! Because enumerated levels explode combinatorially, the module also has
//! a direct calculator ([`RankCalculator`]) for the least level at which a
//! set appears in the adjunction-only tower; that rank upper-bounds the
//! true least level for any pool containing the adjunction formula. Proof
//! trees are coded as sets ([`proof_code`]) and ranked this way
//! ([`proof_rank`]), which keeps "where in the tower does this proof
//! live?" answerable even for codes far beyond enumeration range.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::hf::SetValue;
use crate::logic::{
    cons_list, encode_formula, satisfies, Assignment, Formula, LogicError, Signature,
};
use crate::proofs::{ProofTree, Theory};
use crate::structure::FiniteStructure;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LhierError {
    #[error("level {level} exceeds the element cap ({size} > {cap})")]
    Cap { level: u32, size: usize, cap: usize },
    #[error("definition pool formula rejected: {0}")]
    BadPoolFormula(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("structure error: {0}")]
    Structure(String),
}

/// One definition-pool entry: a formula whose free variables are the
/// element variable `x` plus parameters `p1..pN`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolFormula {
    pub formula: Formula,
    pub params: u32,
}

/// A pool of defining formulas for the level-building step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefPool {
    entries: Vec<PoolFormula>,
}

impl DefPool {
    pub fn empty() -> DefPool {
        DefPool {
            entries: Vec::new(),
        }
    }

    /// Empty set, membership, singleton, and adjunction.
    pub fn standard() -> DefPool {
        let mut pool = DefPool::empty();
        for text in [
            "not x = x",
            "x in p1",
            "x = p1",
            "x in p1 or x = p2",
        ] {
            pool.push_text(text).expect("standard pool is well-formed");
        }
        pool
    }

    /// Only the formulas needed to realize adjunction (used for agreement
    /// tests against the direct rank calculator).
    pub fn adjunction_only() -> DefPool {
        let mut pool = DefPool::empty();
        for text in ["not x = x", "x in p1 or x = p2"] {
            pool.push_text(text).expect("adjunction pool is well-formed");
        }
        pool
    }

    /// The standard pool extended with bounded separation shapes.
    pub fn audit() -> DefPool {
        let mut pool = DefPool::standard();
        for text in [
            "exists y in x . y in p1",
            "forall y in x . y in p1",
            "x in p1 and not x = p2",
            "x in p1 and x in p2",
            "exists y in p1 . x in y",
        ] {
            pool.push_text(text).expect("audit pool is well-formed");
        }
        pool
    }

    pub fn entries(&self) -> &[PoolFormula] {
        &self.entries
    }

    /// Parses and validates a pool formula: free variables must be `x`
    /// with a contiguous run of parameters `p1..`, at most two parameters,
    /// and quantifier depth at most two.
    pub fn push_text(&mut self, text: &str) -> Result<(), LhierError> {
        let formula = crate::logic::parse_formula(text)?;
        self.push(formula)
    }

    pub fn push(&mut self, formula: Formula) -> Result<(), LhierError> {
        let free: BTreeSet<String> = formula.free_vars().into_iter().collect();
        if !free.contains("x") {
            return Err(LhierError::BadPoolFormula(format!(
                "{formula}: the element variable x must occur free"
            )));
        }
        let params = free.len() as u32 - 1;
        if params > 2 {
            return Err(LhierError::BadPoolFormula(format!(
                "{formula}: at most two parameters are supported"
            )));
        }
        let expected: BTreeSet<String> = std::iter::once("x".to_string())
            .chain((1..=params).map(|i| format!("p{i}")))
            .collect();
        if free != expected {
            return Err(LhierError::BadPoolFormula(format!(
                "{formula}: free variables must be x, p1, p2 in order"
            )));
        }
        if quantifier_depth(&formula) > 2 {
            return Err(LhierError::BadPoolFormula(format!(
                "{formula}: quantifier depth exceeds two"
            )));
        }
        self.entries.push(PoolFormula { formula, params });
        Ok(())
    }
}

fn quantifier_depth(f: &Formula) -> u32 {
    match f {
        Formula::In(_, _) | Formula::Eq(_, _) | Formula::Pred(_, _) => 0,
        Formula::Not(g) => quantifier_depth(g),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            quantifier_depth(a).max(quantifier_depth(b))
        }
        Formula::Forall(_, g)
        | Formula::Exists(_, g)
        | Formula::ForallIn(_, _, g)
        | Formula::ExistsIn(_, _, g) => 1 + quantifier_depth(g),
    }
}

/// An enumerated tower of levels. `levels[0]` is the hull of the base;
/// each later entry extends the previous one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelTower {
    base: SetValue,
    levels: Vec<BTreeSet<SetValue>>,
}

impl LevelTower {
    pub fn base(&self) -> &SetValue {
        &self.base
    }

    /// Number of enumerated levels, counting `L_0`.
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, n: usize) -> &BTreeSet<SetValue> {
        &self.levels[n]
    }

    pub fn top(&self) -> &BTreeSet<SetValue> {
        self.levels.last().expect("a tower has at least L_0")
    }

    /// The smallest enumerated level containing `x`, if any.
    pub fn least_level(&self, x: &SetValue) -> Option<u32> {
        self.levels
            .iter()
            .position(|l| l.contains(x))
            .map(|n| n as u32)
    }

    pub fn contains(&self, x: &SetValue) -> bool {
        self.top().contains(x)
    }

    /// A structure whose domain is the top level (top levels are
    /// transitive by construction).
    pub fn top_structure(&self) -> Result<FiniteStructure, LhierError> {
        FiniteStructure::new(self.top().iter().cloned())
            .map_err(|e| LhierError::Structure(e.to_string()))
    }
}

/// The hull of a set: the set itself together with its transitive closure.
/// This always contains the empty set.
pub fn hull(base: &SetValue) -> BTreeSet<SetValue> {
    let mut out: BTreeSet<SetValue> = base.transitive_closure().elements().iter().cloned().collect();
    out.insert(base.clone());
    out.insert(SetValue::empty());
    out
}

/// Builds `steps + 1` levels: the hull of `base`, then `steps` rounds of
/// pool-definable subsets. Fails if any level would exceed `element_cap`.
pub fn build_levels(
    base: &SetValue,
    steps: u32,
    pool: &DefPool,
    element_cap: usize,
) -> Result<LevelTower, LhierError> {
    let l0 = hull(base);
    if l0.len() > element_cap {
        return Err(LhierError::Cap {
            level: 0,
            size: l0.len(),
            cap: element_cap,
        });
    }
    let mut levels = vec![l0];
    for step in 1..=steps {
        let current = levels.last().unwrap();
        let structure = FiniteStructure::new(current.iter().cloned())
            .map_err(|e| LhierError::Structure(e.to_string()))?;
        let elements: Vec<SetValue> = current.iter().cloned().collect();
        let mut next = current.clone();
        for entry in pool.entries() {
            let param_slots: Vec<Vec<SetValue>> = match entry.params {
                0 => vec![vec![]],
                1 => elements.iter().map(|p| vec![p.clone()]).collect(),
                _ => {
                    let mut combos = Vec::new();
                    for p1 in &elements {
                        for p2 in &elements {
                            combos.push(vec![p1.clone(), p2.clone()]);
                        }
                    }
                    combos
                }
            };
            for params in param_slots {
                let mut asg = Assignment::new();
                for (i, p) in params.iter().enumerate() {
                    asg.insert(format!("p{}", i + 1), p.clone());
                }
                let mut kept = Vec::new();
                for e in &elements {
                    let mut asg = asg.clone();
                    asg.insert("x".into(), e.clone());
                    if satisfies(&structure, &entry.formula, &asg)? {
                        kept.push(e.clone());
                    }
                }
                next.insert(SetValue::make_set(kept));
                if next.len() > element_cap {
                    return Err(LhierError::Cap {
                        level: step,
                        size: next.len(),
                        cap: element_cap,
                    });
                }
            }
        }
        levels.push(next);
    }
    Ok(LevelTower {
        base: base.clone(),
        levels,
    })
}

// ---------------------------------------------------------------------------
// Direct rank calculation (adjunction closure)
// ---------------------------------------------------------------------------

/// Computes the least level of the adjunction-only tower over a base at
/// which a set appears, without enumerating levels.
///
/// Any build of `x` by adjunctions starts from some hull member that is a
/// subset of `x` and adjoins the remaining elements one at a time; once
/// the starting point is fixed, adjoining in ascending rank order is
/// optimal, so the level folds up as `level = max(level, rank(e)) + 1`.
/// The rank minimizes that fold over all hull subsets of `x` (the empty
/// set always qualifies).
pub struct RankCalculator {
    base_hull: BTreeSet<SetValue>,
    memo: HashMap<SetValue, u32>,
}

impl RankCalculator {
    pub fn new(base: &SetValue) -> RankCalculator {
        RankCalculator {
            base_hull: hull(base),
            memo: HashMap::new(),
        }
    }

    pub fn rank(&mut self, x: &SetValue) -> u32 {
        if self.base_hull.contains(x) {
            return 0;
        }
        if let Some(&r) = self.memo.get(x) {
            return r;
        }
        let element_ranks: Vec<(SetValue, u32)> = x
            .elements()
            .iter()
            .map(|e| (e.clone(), self.rank(e)))
            .collect();
        let starts: Vec<&SetValue> = self
            .base_hull
            .iter()
            .filter(|h| h.elements().iter().all(|e| x.contains(e)))
            .collect();
        let mut best = u32::MAX;
        for start in starts {
            let mut rest: Vec<u32> = element_ranks
                .iter()
                .filter(|(e, _)| !start.contains(e))
                .map(|(_, r)| *r)
                .collect();
            rest.sort_unstable();
            let mut level = 0;
            for r in rest {
                level = level.max(r) + 1;
            }
            best = best.min(level);
        }
        self.memo.insert(x.clone(), best);
        best
    }
}

// ---------------------------------------------------------------------------
// Proof codes and proof ranks
// ---------------------------------------------------------------------------

/// Codes a proof tree as a single set: the pair of the conclusion's
/// formula code and the list of child proof codes.
pub fn proof_code(proof: &ProofTree, sig: &Signature) -> Result<SetValue, LogicError> {
    let children: Result<Vec<SetValue>, LogicError> = proof
        .children
        .iter()
        .map(|c| proof_code(c, sig))
        .collect();
    Ok(SetValue::kuratowski_pair(
        encode_formula(&proof.conclusion, sig)?,
        cons_list(children?),
    ))
}

/// The adjunction-tower rank of a proof's code over the theory's domain
/// gathered as a set: the least level of the tower at which the coded
/// proof appears.
pub fn proof_rank(proof: &ProofTree, theory: &Theory) -> Result<u32, LogicError> {
    let code = proof_code(proof, theory.signature())?;
    let base = theory.structure().domain_set();
    Ok(RankCalculator::new(&base).rank(&code))
}

// ---------------------------------------------------------------------------
// Separation and collection instances
// ---------------------------------------------------------------------------

/// Outcome of an instance check: whether the instance's conclusion is
/// realized, the witnessing set, its least enumerated level (if within
/// range), and the level the adjunction calculator guarantees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceReport {
    pub holds: bool,
    pub witness: Option<SetValue>,
    pub enumerated_level: Option<u32>,
    pub adjunction_bound: Option<u32>,
}

/// Separation: carves `{x ∈ bound : φ(x)}` out with `φ` evaluated over the
/// tower's top level, then locates the resulting set in the tower. The
/// subset always exists, so `holds` reports whether it was located within
/// the enumerated levels.
pub fn separation_instance(
    tower: &LevelTower,
    var: &str,
    phi: &Formula,
    bound: &SetValue,
) -> Result<InstanceReport, LhierError> {
    if phi.free_vars() != vec![var.to_string()] {
        return Err(LhierError::BadPoolFormula(format!(
            "{phi}: expected exactly the free variable {var}"
        )));
    }
    let structure = tower.top_structure()?;
    let mut kept = Vec::new();
    for x in bound.elements() {
        let mut asg = Assignment::new();
        asg.insert(var.to_string(), x.clone());
        if satisfies(&structure, phi, &asg)? {
            kept.push(x.clone());
        }
    }
    let witness = SetValue::make_set(kept);
    let enumerated_level = tower.least_level(&witness);
    let adjunction_bound = Some(RankCalculator::new(tower.base()).rank(&witness));
    Ok(InstanceReport {
        holds: enumerated_level.is_some(),
        witness: Some(witness),
        enumerated_level,
        adjunction_bound,
    })
}

/// Collection: for each `x ∈ bound`, finds the least-level `y` in the
/// tower with `φ(x, y)`, and gathers the witnesses into one set. `holds`
/// reports whether every `x` found a witness among the enumerated levels.
pub fn collection_instance(
    tower: &LevelTower,
    xvar: &str,
    yvar: &str,
    phi: &Formula,
    bound: &SetValue,
) -> Result<InstanceReport, LhierError> {
    let mut free: Vec<String> = phi.free_vars();
    free.sort();
    let mut expected = vec![xvar.to_string(), yvar.to_string()];
    expected.sort();
    if free != expected {
        return Err(LhierError::BadPoolFormula(format!(
            "{phi}: expected exactly the free variables {xvar}, {yvar}"
        )));
    }
    let structure = tower.top_structure()?;
    let mut witnesses = Vec::new();
    for x in bound.elements() {
        let mut found = None;
        'levels: for level in 0..tower.level_count() {
            for y in tower.level(level) {
                let mut asg = Assignment::new();
                asg.insert(xvar.to_string(), x.clone());
                asg.insert(yvar.to_string(), y.clone());
                if satisfies(&structure, phi, &asg)? {
                    found = Some(y.clone());
                    break 'levels;
                }
            }
        }
        match found {
            Some(y) => witnesses.push(y),
            None => {
                return Ok(InstanceReport {
                    holds: false,
                    witness: None,
                    enumerated_level: None,
                    adjunction_bound: None,
                })
            }
        }
    }
    let witness = SetValue::make_set(witnesses);
    let enumerated_level = tower.least_level(&witness);
    let adjunction_bound = Some(RankCalculator::new(tower.base()).rank(&witness));
    Ok(InstanceReport {
        holds: true,
        witness: Some(witness),
        enumerated_level,
        adjunction_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;
    use crate::proofs::{sample_valid_proof, Justification};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: the adjunction-only tower by direct set
    /// comprehension, no formulas involved.
    fn oracle_adjunction_levels(base: &SetValue, steps: u32) -> Vec<BTreeSet<SetValue>> {
        let mut levels = vec![hull(base)];
        for _ in 0..steps {
            let current = levels.last().unwrap();
            let mut next = current.clone();
            next.insert(SetValue::empty());
            for a in current {
                for b in current {
                    next.insert(a.union_with(&SetValue::singleton(b.clone())));
                }
            }
            levels.push(next);
        }
        levels
    }

    #[test]
    fn adjunction_pool_tower_matches_the_direct_oracle() {
        for base in [
            SetValue::empty(),
            SetValue::stage(2).unwrap(),
            SetValue::ordinal(2),
        ] {
            let tower = build_levels(&base, 2, &DefPool::adjunction_only(), 20000).unwrap();
            let oracle = oracle_adjunction_levels(&base, 2);
            for (n, level) in oracle.iter().enumerate() {
                assert_eq!(
                    tower.level(n),
                    level,
                    "level {n} differs over base {base}"
                );
            }
        }
    }

    #[test]
    fn rank_calculator_agrees_with_enumerated_least_levels() {
        let base = SetValue::stage(2).unwrap();
        let tower = build_levels(&base, 2, &DefPool::adjunction_only(), 20000).unwrap();
        let mut calc = RankCalculator::new(&base);
        for x in tower.top() {
            let enumerated = tower.least_level(x).unwrap();
            let direct = calc.rank(x);
            // Within enumeration range the two must agree exactly.
            assert_eq!(direct, enumerated, "rank mismatch for {x}");
        }
    }

    #[test]
    fn standard_pool_levels_are_cumulative_transitive_and_adjunctive() {
        let base = SetValue::stage(2).unwrap();
        let tower = build_levels(&base, 2, &DefPool::standard(), 20000).unwrap();
        assert_eq!(tower.level_count(), 3);
        for n in 1..tower.level_count() {
            assert!(tower.level(n - 1).is_subset(tower.level(n)));
        }
        // Transitivity of each level.
        for level in 0..tower.level_count() {
            for x in tower.level(level) {
                for e in x.elements() {
                    assert!(
                        tower.level(level).contains(e),
                        "level {level} not transitive at {x}"
                    );
                }
            }
        }
        // Adjunction is realized one level up.
        let l0: Vec<SetValue> = tower.level(0).iter().cloned().collect();
        for a in &l0 {
            for b in &l0 {
                let adjoined = a.union_with(&SetValue::singleton(b.clone()));
                assert!(
                    tower.level(1).contains(&adjoined),
                    "{a} with {b} adjoined missing from L_1"
                );
            }
        }
        // The empty set is present from the start.
        assert!(tower.level(0).contains(&SetValue::empty()));
    }

    #[test]
    fn element_cap_is_enforced() {
        let base = SetValue::stage(3).unwrap();
        let result = build_levels(&base, 3, &DefPool::standard(), 50);
        assert!(matches!(result, Err(LhierError::Cap { .. })));
    }

    #[test]
    fn pool_validation_rejects_bad_shapes() {
        let mut pool = DefPool::empty();
        assert!(pool.push_text("p1 in p2").is_err()); // x missing
        assert!(pool.push_text("x in p2").is_err()); // gap in parameters
        assert!(pool
            .push_text("forall y in x . exists z in y . forall w in z . w = p1")
            .is_err()); // depth 3
        assert!(pool.push_text("x = p1").is_ok());
    }

    #[test]
    fn proof_codes_nest_conclusion_and_children() {
        let sig = Signature::new(
            FiniteStructure::new(SetValue::stage(3).unwrap().elements().to_vec()).unwrap(),
        );
        let leaf = ProofTree::leaf(
            parse_formula("{} = {}").unwrap(),
            Justification::LogicalAxiom,
        );
        let code = proof_code(&leaf, &sig).unwrap();
        let (conclusion_code, children_code) = code.as_kuratowski_pair().unwrap();
        assert_eq!(
            conclusion_code,
            encode_formula(&parse_formula("{} = {}").unwrap(), &sig).unwrap()
        );
        assert!(children_code.is_empty());

        let parent = ProofTree::node(
            parse_formula("{} = {}").unwrap(),
            Justification::ModusPonens,
            vec![leaf.clone(), leaf.clone()],
        );
        let parent_code = proof_code(&parent, &sig).unwrap();
        let (_, list) = parent_code.as_kuratowski_pair().unwrap();
        let (head, tail) = list.as_kuratowski_pair().unwrap();
        assert_eq!(head, code);
        let (second, nil) = tail.as_kuratowski_pair().unwrap();
        assert_eq!(second, code);
        assert!(nil.is_empty());
    }

    #[test]
    fn sampled_proofs_rank_within_a_generous_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x4a9c);
        let sig = Signature::new(
            FiniteStructure::new(SetValue::stage(3).unwrap().elements().to_vec()).unwrap(),
        );
        let theory = Theory::new(sig, [parse_formula("forall x in M . x = x").unwrap()]).unwrap();
        let mut max_rank = 0;
        for _ in 0..120 {
            let proof = sample_valid_proof(&mut rng, &theory);
            let rank = proof_rank(&proof, &theory).unwrap();
            max_rank = max_rank.max(rank);
            assert!(rank <= 128, "rank {rank} exceeds the cap");
        }
        assert!(max_rank > 0, "ranks should not collapse to zero");
    }

    #[test]
    fn combining_proofs_raises_rank_by_a_small_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x4a9d);
        let sig = Signature::new(
            FiniteStructure::new(SetValue::stage(3).unwrap().elements().to_vec()).unwrap(),
        );
        let theory = Theory::new(sig, []).unwrap();
        let mut max_delta = 0i64;
        for _ in 0..100 {
            let left = sample_valid_proof(&mut rng, &theory);
            let right = sample_valid_proof(&mut rng, &theory);
            let combined = ProofTree::node(
                Formula::implies(right.conclusion.clone(), left.conclusion.clone()),
                Justification::ModusPonens,
                vec![left.clone(), right.clone()],
            );
            let rl = proof_rank(&left, &theory).unwrap() as i64;
            let rr = proof_rank(&right, &theory).unwrap() as i64;
            let rc = proof_rank(&combined, &theory).unwrap() as i64;
            max_delta = max_delta.max(rc - rl.max(rr));
        }
        assert!(
            (1..=16).contains(&max_delta),
            "modus-ponens join overhead {max_delta} outside the expected band"
        );
    }

    #[test]
    fn separation_instances_are_located_in_the_tower() {
        let base = SetValue::stage(2).unwrap();
        let tower = build_levels(&base, 2, &DefPool::standard(), 20000).unwrap();
        let phi = parse_formula("x = {}").unwrap();
        let report = separation_instance(&tower, "x", &phi, &base).unwrap();
        assert!(report.holds);
        assert_eq!(report.witness, Some(SetValue::singleton(SetValue::empty())));
        assert!(report.enumerated_level.unwrap() <= 1);
        assert!(report.adjunction_bound.unwrap() <= 1);

        let none = parse_formula("not x = x").unwrap();
        let report = separation_instance(&tower, "x", &none, &base).unwrap();
        assert_eq!(report.witness, Some(SetValue::empty()));
        assert_eq!(report.enumerated_level, Some(0));
    }

    #[test]
    fn collection_instances_gather_least_level_witnesses() {
        let base = SetValue::stage(2).unwrap();
        let tower = build_levels(&base, 2, &DefPool::standard(), 20000).unwrap();
        // For every x in the base there is a y with x ∈ y.
        let phi = parse_formula("a in b").unwrap();
        let report = collection_instance(&tower, "a", "b", &phi, &base).unwrap();
        assert!(report.holds);
        let witness = report.witness.unwrap();
        for x in base.elements() {
            assert!(
                witness.elements().iter().any(|y| y.contains(x)),
                "no gathered witness contains {x}"
            );
        }

        // An unsatisfiable requirement reports failure.
        let bad = parse_formula("a in b and not a in b").unwrap();
        let report = collection_instance(&tower, "a", "b", &bad, &base).unwrap();
        assert!(!report.holds);
    }

    #[test]
    fn free_variable_validation_for_instances() {
        let base = SetValue::stage(2).unwrap();
        let tower = build_levels(&base, 1, &DefPool::standard(), 20000).unwrap();
        let phi = parse_formula("x in y").unwrap();
        assert!(separation_instance(&tower, "x", &phi, &base).is_err());
        assert!(collection_instance(&tower, "x", "z", &phi, &base).is_err());
    }
}
