//! Finite first-order structures over hereditarily finite sets.
//!
//! A structure is a transitive finite domain together with interpretations
//! for the unary class predicates that formulas may mention. The same type
//! serves as a base universe, an outer model, an inner model, or a
//! constructible level.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::hf::SetValue;

/// Names of the unary class predicates available to formulas: the base
/// universe `M` and the numbered width predicates `W0`, `W1`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PredName {
    M,
    W(u32),
}

impl fmt::Display for PredName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredName::M => write!(f, "M"),
            PredName::W(k) => write!(f, "W{k}"),
        }
    }
}

impl PredName {
    /// Parses `M`, `W0`, `W1`, ... Returns `None` for anything else.
    pub fn parse(s: &str) -> Option<PredName> {
        if s == "M" {
            return Some(PredName::M);
        }
        let digits = s.strip_prefix('W')?;
        if digits.is_empty() || digits.len() > 1 && digits.starts_with('0') {
            return None;
        }
        digits.parse().ok().map(PredName::W)
    }
}

/// Errors from structure construction.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("domain is not transitive: {member} ∈ {witness} but not in the domain")]
    NotTransitive { witness: String, member: String },
    #[error("well-order must enumerate the domain exactly once each")]
    WellOrderMismatch,
    #[error("interpretation of {pred} contains {value}, which is outside the domain")]
    PredOutsideDomain { pred: PredName, value: String },
}

/// A finite structure: a transitive domain, an optional well-order of it,
/// and interpretations for class predicates.
///
/// `M` is interpreted as the domain itself unless overridden, so a bare
/// domain already models its own membership predicate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteStructure {
    domain: BTreeSet<SetValue>,
    well_order: Option<Vec<SetValue>>,
    preds: BTreeMap<PredName, BTreeSet<SetValue>>,
}

impl FiniteStructure {
    /// Builds a structure over a transitive domain.
    pub fn new<I: IntoIterator<Item = SetValue>>(domain: I) -> Result<Self, StructureError> {
        let domain: BTreeSet<SetValue> = domain.into_iter().collect();
        for x in &domain {
            for y in x.elements() {
                if !domain.contains(y) {
                    return Err(StructureError::NotTransitive {
                        witness: x.notation(),
                        member: y.notation(),
                    });
                }
            }
        }
        Ok(FiniteStructure {
            domain,
            well_order: None,
            preds: BTreeMap::new(),
        })
    }

    /// The transitive closure of `{x}` as a structure (the least structure
    /// with `x` in its domain).
    pub fn hull(x: &SetValue) -> FiniteStructure {
        let mut domain: BTreeSet<SetValue> =
            x.transitive_closure().elements().iter().cloned().collect();
        domain.insert(x.clone());
        FiniteStructure::new(domain).expect("transitive closure is transitive")
    }

    pub fn domain(&self) -> &BTreeSet<SetValue> {
        &self.domain
    }

    pub fn contains(&self, x: &SetValue) -> bool {
        self.domain.contains(x)
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    /// The whole domain gathered into one set.
    pub fn domain_set(&self) -> SetValue {
        SetValue::make_set(self.domain.iter().cloned())
    }

    /// Installs a well-order; it must enumerate the domain exactly.
    pub fn set_well_order(&mut self, order: Vec<SetValue>) -> Result<(), StructureError> {
        let as_set: BTreeSet<SetValue> = order.iter().cloned().collect();
        if as_set != self.domain || order.len() != self.domain.len() {
            return Err(StructureError::WellOrderMismatch);
        }
        self.well_order = Some(order);
        Ok(())
    }

    /// The domain in well-order position (canonical order when none was set).
    pub fn well_order(&self) -> Vec<SetValue> {
        match &self.well_order {
            Some(o) => o.clone(),
            None => self.domain.iter().cloned().collect(),
        }
    }

    pub fn has_explicit_well_order(&self) -> bool {
        self.well_order.is_some()
    }

    /// Installs a predicate interpretation (must be a subset of the domain).
    pub fn set_pred<I: IntoIterator<Item = SetValue>>(
        &mut self,
        pred: PredName,
        interp: I,
    ) -> Result<(), StructureError> {
        let interp: BTreeSet<SetValue> = interp.into_iter().collect();
        if let Some(out) = interp.iter().find(|v| !self.domain.contains(v)) {
            return Err(StructureError::PredOutsideDomain {
                pred,
                value: out.notation(),
            });
        }
        self.preds.insert(pred, interp);
        Ok(())
    }

    /// The interpretation of a predicate. `M` defaults to the whole domain.
    pub fn pred(&self, pred: PredName) -> Option<BTreeSet<SetValue>> {
        match self.preds.get(&pred) {
            Some(s) => Some(s.clone()),
            None if pred == PredName::M => Some(self.domain.clone()),
            None => None,
        }
    }

    /// Number of von Neumann naturals present; transitivity makes them an
    /// initial segment, so this identifies the structure's "ordinal height".
    pub fn natural_height(&self) -> u32 {
        let mut n = 0;
        while self.domain.contains(&SetValue::ordinal(n)) {
            n += 1;
        }
        n
    }
}
