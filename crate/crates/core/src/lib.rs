//! Desk-scale laboratory for hereditarily finite set universes.
//!
//! The crate builds, layer by layer, the machinery needed to treat small
//! transitive set universes as first-class objects: canonical hereditarily
//! finite sets, a first-order language over them, tree codings of sets,
//! a finitary proof calculus with width-extension predicates, constructible
//! levels, forcing over finite posets, and a multiverse laboratory that runs
//! width-criteria experiments over enumerated inner and outer models.

pub mod coding;
#[cfg(test)]
pub(crate) mod testutil;
pub mod forcing;
pub mod hf;
pub mod lab;
pub mod lhier;
pub mod logic;
pub mod proofs;
pub mod structure;
