//! Universe models and the relations between them.
//!
//! A universe model is a transitive finite structure closed under a small
//! base theory of set operations: pairing (admitted while the pair's rank
//! stays within the rank budget), binary union, sweep union, set
//! difference, and separation along a fixed pool of bounded formulas with
//! at most two parameters. Only pairing can raise rank, so closures stay
//! finite; an element cap guards runaway growth.
//!
//! A [`Lab`] fixes the budget, the separation pool, and the element cap,
//! and provides the model relations: inner and outer model enumeration
//! over the closure system, universe-level forcing extensions, the
//! inner-model reflection check, Bukovský-style covering, set-theoretic
//! geology (grounds, mantle, ground axiom), and the dual
//! refutation/outer-model search.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::forcing::{generic_filters, name_space, poset_fleet, ForcingError, Poset};
use crate::hf::{HfError, SetValue};
use crate::logic::{satisfies, Assignment, Formula, LogicError};
use crate::proofs::{refutation_search, ProofTree, Theory};
use crate::structure::{FiniteStructure, PredName};

pub use crate::lhier::DefPool;

/// Largest stage admitted for outer-model enumeration, measured in stage
/// members.
pub const MAX_STAGE_MEMBERS: usize = 64;

/// Default cap on closure size.
pub const DEFAULT_ELEMENT_CAP: usize = 512;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabError {
    #[error("rank budget must be at least 2, got {0}")]
    BudgetTooSmall(u32),
    #[error("closure exceeded the element cap {cap} (reached {size})")]
    ElementCap { size: usize, cap: usize },
    #[error("stage {stage} has {size} members, above the enumeration cap {cap}")]
    StageTooLarge { stage: u32, size: usize, cap: usize },
    #[error("model domain is not contained in stage {stage}")]
    NotInStage { stage: u32 },
    #[error("domain is not closed under the base operations: missing {missing}")]
    NotClosed { missing: String },
    #[error("not an inner/outer model pair: {0}")]
    NotInnerOuter(String),
    #[error("condition {0} has no code inside the ground model")]
    UncodedCondition(String),
    #[error("theory shape: {0}")]
    Theory(String),
    #[error("dual search returned both a refutation and a witness model")]
    DualConflict,
    #[error("structure error: {0}")]
    Structure(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Forcing(#[from] ForcingError),
    #[error(transparent)]
    Hf(#[from] HfError),
}

// ---------------------------------------------------------------------------
// Universe models
// ---------------------------------------------------------------------------

/// A transitive finite structure closed under the base operations of the
/// [`Lab`] that built it. The class `M` denotes the model's own domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniverseModel {
    structure: FiniteStructure,
}

impl UniverseModel {
    fn from_closed(domain: BTreeSet<SetValue>) -> Result<UniverseModel, LabError> {
        let structure = FiniteStructure::new(domain)
            .map_err(|e| LabError::Structure(e.to_string()))?;
        Ok(UniverseModel { structure })
    }

    pub fn structure(&self) -> &FiniteStructure {
        &self.structure
    }

    pub fn domain(&self) -> &BTreeSet<SetValue> {
        self.structure.domain()
    }

    pub fn len(&self) -> usize {
        self.structure.domain().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: &SetValue) -> bool {
        self.structure.contains(x)
    }

    /// The von Neumann naturals present in the domain.
    pub fn naturals(&self) -> BTreeSet<SetValue> {
        self.structure
            .domain()
            .iter()
            .filter(|x| x.is_ordinal())
            .cloned()
            .collect()
    }

    /// Truth of a sentence from the model's own viewpoint (`M` is the
    /// model's whole domain).
    pub fn satisfies_sentence(&self, sentence: &Formula) -> Result<bool, LabError> {
        if !sentence.free_vars().is_empty() {
            return Err(LabError::Theory(format!(
                "{sentence}: expected a closed sentence"
            )));
        }
        Ok(satisfies(&self.structure, sentence, &Assignment::new())?)
    }
}

/// An inner/outer model pair: the inner domain is contained in the outer
/// one and both have the same von Neumann naturals. End-extension is
/// automatic for transitive domains but asserted anyway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelPair {
    inner: UniverseModel,
    outer: UniverseModel,
}

impl ModelPair {
    pub fn new(inner: &UniverseModel, outer: &UniverseModel) -> Result<ModelPair, LabError> {
        if !inner.domain().is_subset(outer.domain()) {
            return Err(LabError::NotInnerOuter(
                "inner domain is not contained in the outer domain".into(),
            ));
        }
        if inner.naturals() != outer.naturals() {
            return Err(LabError::NotInnerOuter(
                "the models disagree on von Neumann naturals".into(),
            ));
        }
        for x in inner.domain() {
            for e in x.elements() {
                if !inner.contains(e) {
                    return Err(LabError::NotInnerOuter(format!(
                        "the outer model adds an element to {}",
                        x.notation()
                    )));
                }
            }
        }
        Ok(ModelPair {
            inner: inner.clone(),
            outer: outer.clone(),
        })
    }

    pub fn inner(&self) -> &UniverseModel {
        &self.inner
    }

    pub fn outer(&self) -> &UniverseModel {
        &self.outer
    }
}

// ---------------------------------------------------------------------------
// The lab context
// ---------------------------------------------------------------------------

/// Admission axis for the extensions entering the reflection check's
/// antecedent: forcing extensions only, or every outer model in budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtensionMode {
    ForcingExtensions,
    AllOuter,
}

/// Caps for searches that range over posets and names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchCaps {
    /// Largest poset size searched.
    pub poset_size: usize,
    /// Name-rank cap for extension name spaces.
    pub rank_cap: u32,
    /// How many low-rank model elements may serve as condition codes.
    pub code_pool_max: usize,
    /// Stage whose members bound outer-model enumeration.
    pub budget_stage: u32,
}

impl Default for SearchCaps {
    fn default() -> SearchCaps {
        SearchCaps {
            poset_size: 3,
            rank_cap: 1,
            code_pool_max: 4,
            budget_stage: 4,
        }
    }
}

/// Fixes the closure parameters (rank budget, separation pool, element
/// cap) and carries the memo tables that make repeated closures cheap.
pub struct Lab {
    budget: u32,
    pool: DefPool,
    element_cap: usize,
    // Truth of pool formula `entry` at element `z` under parameters; pool
    // formulas have bounded quantifiers only, so truth does not depend on
    // the ambient structure.
    mask_memo: HashMap<(usize, Vec<SetValue>, SetValue), bool>,
    // Closure fixpoints by seed: model searches revisit the same seeds
    // many times over.
    close_memo: HashMap<BTreeSet<SetValue>, BTreeSet<SetValue>>,
}

impl Lab {
    pub fn new(budget: u32, pool: &DefPool, element_cap: usize) -> Result<Lab, LabError> {
        if budget < 2 {
            return Err(LabError::BudgetTooSmall(budget));
        }
        Ok(Lab {
            budget,
            pool: pool.clone(),
            element_cap,
            mask_memo: HashMap::new(),
            close_memo: HashMap::new(),
        })
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn pool(&self) -> &DefPool {
        &self.pool
    }

    /// Closes a seed under the base operations: transitive closure, the
    /// empty set, rank-budgeted pairing, binary union, sweep union,
    /// difference, and pool separation.
    pub fn close(&mut self, seed: &BTreeSet<SetValue>) -> Result<BTreeSet<SetValue>, LabError> {
        if let Some(hit) = self.close_memo.get(seed) {
            return Ok(hit.clone());
        }
        let mut s: BTreeSet<SetValue> = BTreeSet::new();
        s.insert(SetValue::empty());
        for x in seed {
            s.insert(x.clone());
            s.extend(x.transitive_closure().elements().iter().cloned());
        }
        loop {
            if s.len() > self.element_cap {
                return Err(LabError::ElementCap {
                    size: s.len(),
                    cap: self.element_cap,
                });
            }
            let snapshot: Vec<SetValue> = s.iter().cloned().collect();
            let before = s.len();
            for (i, x) in snapshot.iter().enumerate() {
                for y in &snapshot[i..] {
                    // The pair's rank is determined by its members' cached
                    // ranks, so the budget test needs no construction.
                    if x.rank().max(y.rank()) + 1 <= self.budget {
                        s.insert(SetValue::make_set([x.clone(), y.clone()]));
                    }
                }
            }
            for x in &snapshot {
                for y in &snapshot {
                    if x == y || x.len() == 0 || y.len() == 0 {
                        // Unions and differences against oneself or the
                        // empty set only reproduce operands already here.
                        continue;
                    }
                    s.insert(x.union_with(y));
                    s.insert(x.difference(y));
                }
                s.insert(x.sweep_union());
            }
            self.separation_pass(&snapshot, &mut s)?;
            if s.len() == before {
                self.close_memo.insert(seed.clone(), s.clone());
                return Ok(s);
            }
        }
    }

    fn separation_pass(
        &mut self,
        snapshot: &[SetValue],
        s: &mut BTreeSet<SetValue>,
    ) -> Result<(), LabError> {
        let structure = FiniteStructure::new(snapshot.iter().cloned())
            .map_err(|e| LabError::Structure(e.to_string()))?;
        let entries: Vec<_> = self.pool.entries().to_vec();
        // Distinct masks only: different parameters frequently induce the
        // same mask, and applying a mask twice is a no-op.
        let mut masks: BTreeSet<BTreeSet<SetValue>> = BTreeSet::new();
        for (idx, entry) in entries.iter().enumerate() {
            let param_slots: Vec<Vec<SetValue>> = match entry.params {
                0 => vec![vec![]],
                1 => snapshot.iter().map(|p| vec![p.clone()]).collect(),
                _ => snapshot
                    .iter()
                    .flat_map(|p1| {
                        snapshot.iter().map(move |p2| vec![p1.clone(), p2.clone()])
                    })
                    .collect(),
            };
            for params in param_slots {
                // The truth of the pool formula at an element does not
                // depend on which target set it is separated out of, so
                // one mask serves every target.
                let mut mask: BTreeSet<SetValue> = BTreeSet::new();
                for z in snapshot {
                    let key = (idx, params.clone(), z.clone());
                    let value = match self.mask_memo.get(&key) {
                        Some(&v) => v,
                        None => {
                            let mut asg = Assignment::new();
                            for (i, p) in params.iter().enumerate() {
                                asg.insert(format!("p{}", i + 1), p.clone());
                            }
                            asg.insert("x".into(), z.clone());
                            let v = satisfies(&structure, &entry.formula, &asg)?;
                            self.mask_memo.insert(key, v);
                            v
                        }
                    };
                    if value {
                        mask.insert(z.clone());
                    }
                }
                masks.insert(mask);
            }
        }
        for mask in &masks {
            for t in snapshot {
                let kept: Vec<SetValue> = t
                    .elements()
                    .iter()
                    .filter(|e| mask.contains(e))
                    .cloned()
                    .collect();
                if kept.len() == t.len() || kept.is_empty() {
                    // The separation reproduces the target or the empty
                    // set, both already present.
                    continue;
                }
                s.insert(SetValue::make_set(kept));
            }
        }
        Ok(())
    }

    /// Wraps an already-closed transitive domain, verifying closure.
    pub fn model(
        &mut self,
        domain: impl IntoIterator<Item = SetValue>,
    ) -> Result<UniverseModel, LabError> {
        let domain: BTreeSet<SetValue> = domain.into_iter().collect();
        let closed = self.close(&domain)?;
        if let Some(missing) = closed.iter().find(|x| !domain.contains(x)) {
            return Err(LabError::NotClosed {
                missing: missing.notation(),
            });
        }
        UniverseModel::from_closed(domain)
    }

    /// Builds the least model containing a seed.
    pub fn model_from_seed(
        &mut self,
        seed: impl IntoIterator<Item = SetValue>,
    ) -> Result<UniverseModel, LabError> {
        let seed: BTreeSet<SetValue> = seed.into_iter().collect();
        UniverseModel::from_closed(self.close(&seed)?)
    }

    // -----------------------------------------------------------------------
    // Inner and outer models
    // -----------------------------------------------------------------------

    /// All closed transitive subsets of the model with the same von
    /// Neumann naturals, enumerated over the closure system and sorted by
    /// size then canonical order. Contains the model itself and the
    /// closure of its naturals (the minimal inner model).
    pub fn inner_models(&mut self, m: &UniverseModel) -> Result<Vec<UniverseModel>, LabError> {
        let kernel = self.close(&m.naturals())?;
        let mut seen: BTreeSet<BTreeSet<SetValue>> = BTreeSet::new();
        seen.insert(kernel.clone());
        let mut queue: VecDeque<BTreeSet<SetValue>> = VecDeque::new();
        queue.push_back(kernel);
        while let Some(current) = queue.pop_front() {
            for x in m.domain() {
                if current.contains(x) {
                    continue;
                }
                let mut seed = current.clone();
                seed.insert(x.clone());
                let closed = self.close(&seed)?;
                if seen.insert(closed.clone()) {
                    queue.push_back(closed);
                }
            }
        }
        sorted_models(seen)
    }

    /// All models between this one and the given cumulative stage with
    /// the same von Neumann naturals, including the model itself.
    pub fn outer_models(
        &mut self,
        m: &UniverseModel,
        budget_stage: u32,
    ) -> Result<Vec<UniverseModel>, LabError> {
        let stage = SetValue::stage_with_budget(budget_stage, budget_stage)?;
        if stage.len() > MAX_STAGE_MEMBERS {
            return Err(LabError::StageTooLarge {
                stage: budget_stage,
                size: stage.len(),
                cap: MAX_STAGE_MEMBERS,
            });
        }
        if m.domain().iter().any(|x| !stage.contains(x)) {
            return Err(LabError::NotInStage {
                stage: budget_stage,
            });
        }
        let naturals = m.naturals();
        let mut seen: BTreeSet<BTreeSet<SetValue>> = BTreeSet::new();
        seen.insert(m.domain().clone());
        let mut queue: VecDeque<BTreeSet<SetValue>> = VecDeque::new();
        queue.push_back(m.domain().clone());
        while let Some(current) = queue.pop_front() {
            for x in stage.elements() {
                if current.contains(x) {
                    continue;
                }
                if x.is_ordinal() && !naturals.contains(x) {
                    continue;
                }
                let mut seed = current.clone();
                seed.insert(x.clone());
                let closed = self.close(&seed)?;
                // Closing may manufacture new naturals; such branches
                // leave the same-ordinals family for good.
                if closed.iter().any(|y| y.is_ordinal() && !naturals.contains(y)) {
                    continue;
                }
                if !closed.iter().all(|y| stage.contains(y)) {
                    continue;
                }
                if seen.insert(closed.clone()) {
                    queue.push_back(closed);
                }
            }
        }
        sorted_models(seen)
    }

    // -----------------------------------------------------------------------
    // Forcing extensions of universe models
    // -----------------------------------------------------------------------

    /// The universe-level forcing extension: the least closed model
    /// containing the ground and the values of every name in the space.
    /// Every condition's code must lie inside the ground model.
    pub fn universe_extension(
        &mut self,
        w: &UniverseModel,
        poset: &Poset,
        filter: &BTreeSet<usize>,
        rank_cap: u32,
    ) -> Result<UniverseModel, LabError> {
        for i in 0..poset.len() {
            if !w.contains(poset.code(i)) {
                return Err(LabError::UncodedCondition(poset.label(i).to_string()));
            }
        }
        let names = name_space(w.structure(), poset, rank_cap);
        let mut seed = w.domain().clone();
        for n in names.names() {
            seed.insert(n.eval(filter));
        }
        UniverseModel::from_closed(self.close(&seed)?)
    }

    /// Poset shapes up to the size cap, with conditions coded by
    /// low-rank elements of the model (injectively, in every order).
    pub fn coded_posets(&self, w: &UniverseModel, caps: &SearchCaps) -> Vec<Poset> {
        let code_pool: Vec<SetValue> = w
            .domain()
            .iter()
            .filter(|x| x.rank() <= 2)
            .take(caps.code_pool_max)
            .cloned()
            .collect();
        let mut out = Vec::new();
        for shape in poset_fleet(caps.poset_size) {
            for assignment in injective_tuples(&code_pool, shape.len()) {
                let mut poset = shape.clone();
                let mut ok = true;
                for (i, code) in assignment.into_iter().enumerate() {
                    if poset.set_code(i, code).is_err() {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    out.push(poset);
                }
            }
        }
        out
    }

    /// Finds a coded poset and generic filter exhibiting `v` as a forcing
    /// extension of `w`, if one exists within the caps.
    pub fn forcing_extension_witness(
        &mut self,
        w: &UniverseModel,
        v: &UniverseModel,
        caps: &SearchCaps,
    ) -> Result<Option<(Poset, BTreeSet<usize>)>, LabError> {
        for poset in self.coded_posets(w, caps) {
            for filter in generic_filters(&poset) {
                let ext = self.universe_extension(w, &poset, &filter, caps.rank_cap)?;
                if ext.domain() == v.domain() {
                    return Ok(Some((poset, filter)));
                }
            }
        }
        Ok(None)
    }

    // -----------------------------------------------------------------------
    // Geology
    // -----------------------------------------------------------------------

    /// One way of obtaining the model by forcing over an inner model.
    pub fn grounds(
        &mut self,
        m: &UniverseModel,
        caps: &SearchCaps,
    ) -> Result<Vec<GroundWitness>, LabError> {
        let mut out = Vec::new();
        for w in self.inner_models(m)? {
            for poset in self.coded_posets(&w, caps) {
                let names = name_space(w.structure(), &poset, caps.rank_cap);
                for filter in generic_filters(&poset) {
                    // A name evaluating outside the target domain already
                    // rules the candidate out: the extension would contain
                    // that value, so it cannot equal the target.
                    if names
                        .names()
                        .iter()
                        .any(|n| !m.domain().contains(&n.eval(&filter)))
                    {
                        continue;
                    }
                    let ext = self.universe_extension(&w, &poset, &filter, caps.rank_cap)?;
                    if ext.domain() == m.domain() {
                        out.push(GroundWitness {
                            ground: w.clone(),
                            poset: poset.clone(),
                            filter,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// The closure of the intersection of all ground domains.
    pub fn mantle(
        &mut self,
        m: &UniverseModel,
        caps: &SearchCaps,
    ) -> Result<UniverseModel, LabError> {
        let witnesses = self.grounds(m, caps)?;
        let mut intersection = m.domain().clone();
        for w in &witnesses {
            intersection = intersection
                .intersection(w.ground.domain())
                .cloned()
                .collect();
        }
        UniverseModel::from_closed(self.close(&intersection)?)
    }

    /// Whether every ground equals the model itself.
    pub fn ground_axiom(
        &mut self,
        m: &UniverseModel,
        caps: &SearchCaps,
    ) -> Result<bool, LabError> {
        Ok(self
            .grounds(m, caps)?
            .iter()
            .all(|w| w.ground.domain() == m.domain()))
    }

    // -----------------------------------------------------------------------
    // Inner-model reflection
    // -----------------------------------------------------------------------

    /// Checks, per sentence: if the sentence holds in an inner model of
    /// an admitted extension of `m`, it holds in an inner model of `m`.
    pub fn reflection_check(
        &mut self,
        m: &UniverseModel,
        sentences: &[Formula],
        mode: ExtensionMode,
        caps: &SearchCaps,
    ) -> Result<ReflectionReport, LabError> {
        let outers: Vec<UniverseModel> = match mode {
            ExtensionMode::AllOuter => self.outer_models(m, caps.budget_stage)?,
            ExtensionMode::ForcingExtensions => {
                let naturals = m.naturals();
                let mut seen: BTreeSet<BTreeSet<SetValue>> = BTreeSet::new();
                seen.insert(m.domain().clone());
                for poset in self.coded_posets(m, caps) {
                    for filter in generic_filters(&poset) {
                        let ext = self.universe_extension(m, &poset, &filter, caps.rank_cap)?;
                        if ext.naturals() == naturals {
                            seen.insert(ext.domain().clone());
                        }
                    }
                }
                sorted_models(seen)?
            }
        };
        let mut chains = Vec::new();
        for outer in &outers {
            let inners = self.inner_models(outer)?;
            chains.push((outer.clone(), inners));
        }
        let own_inners = self.inner_models(m)?;
        let mut reports = Vec::new();
        for sentence in sentences {
            let mut extension_witness = None;
            'outer: for (outer, inners) in &chains {
                for inner in inners {
                    if inner.satisfies_sentence(sentence)? {
                        extension_witness = Some((outer.clone(), inner.clone()));
                        break 'outer;
                    }
                }
            }
            let mut inner_witness = None;
            for inner in &own_inners {
                if inner.satisfies_sentence(sentence)? {
                    inner_witness = Some(inner.clone());
                    break;
                }
            }
            let holds = extension_witness.is_none() || inner_witness.is_some();
            reports.push(ReflectionSentence {
                sentence: sentence.clone(),
                extension_witness,
                inner_witness,
                holds,
            });
        }
        let holds = reports.iter().all(|r| r.holds);
        Ok(ReflectionReport {
            sentences: reports,
            holds,
        })
    }

    // -----------------------------------------------------------------------
    // Dual search: refutations against outer models
    // -----------------------------------------------------------------------

    /// Runs the refutation search and the outer-model search side by
    /// side. The theory must declare exactly one width predicate over the
    /// model's domain; a witness model interprets it as the witness's own
    /// domain while `M` keeps denoting the base.
    pub fn dual_search(
        &mut self,
        theory: &Theory,
        m: &UniverseModel,
        proof_depth: u32,
        budget_stage: u32,
    ) -> Result<DualSearchReport, LabError> {
        if theory.signature().extras().len() != 1 {
            return Err(LabError::Theory(
                "expected exactly one declared width predicate".into(),
            ));
        }
        if theory.structure().domain() != m.domain() {
            return Err(LabError::Theory(
                "the theory's base structure must match the model".into(),
            ));
        }
        let refutation = refutation_search(theory, proof_depth);
        let mut model = None;
        for candidate in self.outer_models(m, budget_stage)? {
            let mut eval = FiniteStructure::new(candidate.domain().iter().cloned())
                .map_err(|e| LabError::Structure(e.to_string()))?;
            eval.set_pred(PredName::M, m.domain().iter().cloned())
                .map_err(|e| LabError::Structure(e.to_string()))?;
            eval.set_pred(PredName::W(0), candidate.domain().iter().cloned())
                .map_err(|e| LabError::Structure(e.to_string()))?;
            let mut all = true;
            for s in theory.sentences() {
                if !satisfies(&eval, s, &Assignment::new())? {
                    all = false;
                    break;
                }
            }
            if all {
                model = Some(candidate);
                break;
            }
        }
        let conflict = refutation.is_some() && model.is_some();
        Ok(DualSearchReport {
            refutation,
            model,
            conflict,
        })
    }

    /// Condenses the dual search to a three-way verdict. The forbidden
    /// state (both searches succeed) is an error, never a verdict.
    pub fn consistent(
        &mut self,
        theory: &Theory,
        m: &UniverseModel,
        proof_depth: u32,
        budget_stage: u32,
    ) -> Result<ConsistencyVerdict, LabError> {
        let report = self.dual_search(theory, m, proof_depth, budget_stage)?;
        match (report.refutation.is_some(), report.model.is_some()) {
            (true, true) => Err(LabError::DualConflict),
            (true, false) => Ok(ConsistencyVerdict::Refuted),
            (false, true) => Ok(ConsistencyVerdict::ModelFound),
            (false, false) => Ok(ConsistencyVerdict::Unknown),
        }
    }

    /// Every model whose domain sits inside the given stage, enumerated
    /// over the closure system from the least model upward.
    pub fn models_in_stage(
        &mut self,
        budget_stage: u32,
    ) -> Result<Vec<UniverseModel>, LabError> {
        let stage = SetValue::stage_with_budget(budget_stage, budget_stage)?;
        if stage.len() > MAX_STAGE_MEMBERS {
            return Err(LabError::StageTooLarge {
                stage: budget_stage,
                size: stage.len(),
                cap: MAX_STAGE_MEMBERS,
            });
        }
        let least = self.close(&BTreeSet::new())?;
        if least.iter().any(|x| !stage.contains(x)) {
            return Err(LabError::NotInStage {
                stage: budget_stage,
            });
        }
        let mut seen: BTreeSet<BTreeSet<SetValue>> = BTreeSet::new();
        seen.insert(least.clone());
        let mut queue: VecDeque<BTreeSet<SetValue>> = VecDeque::new();
        queue.push_back(least);
        while let Some(current) = queue.pop_front() {
            for x in stage.elements() {
                if current.contains(x) {
                    continue;
                }
                let mut seed = current.clone();
                seed.insert(x.clone());
                let closed = self.close(&seed)?;
                if !closed.iter().all(|y| stage.contains(y)) {
                    continue;
                }
                if seen.insert(closed.clone()) {
                    queue.push_back(closed);
                }
            }
        }
        sorted_models(seen)
    }

    /// Searches the stage's model zoo for pairs that satisfy exactly the
    /// same pool sentences yet disagree on the reflection verdict. No
    /// particular outcome is asserted; the findings are the product.
    pub fn pairwise_reflection_search(
        &mut self,
        budget_stage: u32,
        pool: &[Formula],
        mode: ExtensionMode,
        caps: &SearchCaps,
    ) -> Result<PairwiseReport, LabError> {
        let models = self.models_in_stage(budget_stage)?;
        let mut profiles = Vec::new();
        for m in &models {
            let mut profile = Vec::new();
            for s in pool {
                profile.push(m.satisfies_sentence(s)?);
            }
            profiles.push(profile);
        }
        let mut verdicts: Vec<Option<bool>> = vec![None; models.len()];
        let mut pairs_compared = 0;
        let mut agreeing_pairs = 0;
        let mut findings = Vec::new();
        for i in 0..models.len() {
            for j in i + 1..models.len() {
                pairs_compared += 1;
                if profiles[i] != profiles[j] {
                    continue;
                }
                agreeing_pairs += 1;
                for k in [i, j] {
                    if verdicts[k].is_none() {
                        let report =
                            self.reflection_check(&models[k], pool, mode, caps)?;
                        verdicts[k] = Some(report.holds);
                    }
                }
                let (first_holds, second_holds) =
                    (verdicts[i].unwrap(), verdicts[j].unwrap());
                if first_holds != second_holds {
                    findings.push(PairwiseFinding {
                        first: models[i].clone(),
                        second: models[j].clone(),
                        first_holds,
                        second_holds,
                    });
                }
            }
        }
        Ok(PairwiseReport {
            models_examined: models.len(),
            pairs_compared,
            agreeing_pairs,
            findings,
        })
    }
}

/// Three-way outcome of the tandem refutation/model search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsistencyVerdict {
    Refuted,
    ModelFound,
    Unknown,
}

/// A pool-truth-equivalent model pair with differing reflection verdicts.
#[derive(Debug, Clone)]
pub struct PairwiseFinding {
    pub first: UniverseModel,
    pub second: UniverseModel,
    pub first_holds: bool,
    pub second_holds: bool,
}

#[derive(Debug, Clone)]
pub struct PairwiseReport {
    pub models_examined: usize,
    pub pairs_compared: usize,
    pub agreeing_pairs: usize,
    pub findings: Vec<PairwiseFinding>,
}

/// A ground together with the forcing data that rebuilds the model.
#[derive(Debug, Clone)]
pub struct GroundWitness {
    pub ground: UniverseModel,
    pub poset: Poset,
    pub filter: BTreeSet<usize>,
}

/// Per-sentence outcome of the reflection check.
#[derive(Debug, Clone)]
pub struct ReflectionSentence {
    pub sentence: Formula,
    /// An admitted extension and one of its inner models satisfying the
    /// sentence, if any.
    pub extension_witness: Option<(UniverseModel, UniverseModel)>,
    /// An inner model of the base satisfying the sentence, if any.
    pub inner_witness: Option<UniverseModel>,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct ReflectionReport {
    pub sentences: Vec<ReflectionSentence>,
    pub holds: bool,
}

/// Outcome of the dual search. `conflict` flags the forbidden state where
/// a refutation and a witness model were both found.
#[derive(Debug, Clone)]
pub struct DualSearchReport {
    pub refutation: Option<ProofTree>,
    pub model: Option<UniverseModel>,
    pub conflict: bool,
}

fn sorted_models(
    domains: BTreeSet<BTreeSet<SetValue>>,
) -> Result<Vec<UniverseModel>, LabError> {
    let mut domains: Vec<BTreeSet<SetValue>> = domains.into_iter().collect();
    domains.sort_by_key(|d| d.len());
    domains.into_iter().map(UniverseModel::from_closed).collect()
}

fn injective_tuples(pool: &[SetValue], k: usize) -> Vec<Vec<SetValue>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for shorter in injective_tuples(pool, k - 1) {
        for c in pool {
            if !shorter.contains(c) {
                let mut tuple = shorter.clone();
                tuple.push(c.clone());
                out.push(tuple);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Covering
// ---------------------------------------------------------------------------

/// Reads a set as a binary relation: every element must be an ordered
/// pair. Returns the list of (first, second) components.
fn as_relation(x: &SetValue) -> Option<Vec<(SetValue, SetValue)>> {
    x.elements()
        .iter()
        .map(|e| e.as_kuratowski_pair())
        .collect()
}

/// Reads a set as a function: a relation with at most one value per key.
fn as_function(x: &SetValue) -> Option<Vec<(SetValue, SetValue)>> {
    let pairs = as_relation(x)?;
    let keys: BTreeSet<&SetValue> = pairs.iter().map(|(k, _)| k).collect();
    if keys.len() != pairs.len() {
        return None;
    }
    Some(pairs)
}

/// Whether the inner model covers the outer one with multiplicity below
/// `kappa`: every function in the outer model whose domain is a set of
/// the inner model and whose values lie in the inner model admits a
/// relation in the inner model whose fibers contain the function's
/// values and stay smaller than `kappa`.
pub fn global_covers(
    w: &UniverseModel,
    v: &UniverseModel,
    kappa: usize,
) -> Result<bool, LabError> {
    ModelPair::new(w, v)?;
    let w_relations: Vec<Vec<(SetValue, SetValue)>> =
        w.domain().iter().filter_map(as_relation).collect();
    for f in v.domain() {
        let Some(pairs) = as_function(f) else {
            continue;
        };
        let dom_set = SetValue::make_set(pairs.iter().map(|(k, _)| k.clone()));
        if !w.contains(&dom_set) {
            continue;
        }
        if pairs.iter().any(|(_, val)| !w.contains(val)) {
            continue;
        }
        let covered = w_relations.iter().any(|g| {
            pairs.iter().all(|(key, val)| {
                let fiber: Vec<&SetValue> = g
                    .iter()
                    .filter(|(gk, _)| gk == key)
                    .map(|(_, gv)| gv)
                    .collect();
                fiber.len() < kappa && fiber.contains(&val)
            })
        });
        if !covered {
            return Ok(false);
        }
    }
    Ok(true)
}
