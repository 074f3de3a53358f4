//! Shared helpers for the unit-test suites.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::hf::SetValue;
use crate::structure::FiniteStructure;

/// A random set of rank at most `max_rank` (small widths, bias to empty).
pub(crate) fn random_set(rng: &mut ChaCha8Rng, max_rank: u32) -> SetValue {
    if max_rank == 0 || rng.gen_bool(0.2) {
        return SetValue::empty();
    }
    let width = rng.gen_range(0..=3);
    SetValue::make_set((0..width).map(|_| random_set(rng, max_rank - 1)))
}

/// A small transitive structure built from two random seeds.
pub(crate) fn random_structure(rng: &mut ChaCha8Rng, max_rank: u32) -> FiniteStructure {
    let x = random_set(rng, max_rank);
    let y = random_set(rng, max_rank);
    let mut domain: Vec<SetValue> = vec![x.clone(), y.clone()];
    domain.extend(x.transitive_closure().elements().iter().cloned());
    domain.extend(y.transitive_closure().elements().iter().cloned());
    FiniteStructure::new(domain).expect("transitive by construction")
}
