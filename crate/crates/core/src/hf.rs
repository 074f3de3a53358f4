//! Canonical hereditarily finite sets.
//!
//! Every set is stored in a canonical duplicate-free form: elements are kept
//! in canonical order (rank first, then lexicographically on element lists),
//! so two equal sets always have identical representations. Values are
//! interned process-wide, which makes equality, hashing, and sharing cheap.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

/// Default cap on cumulative-stage indices; `stage(n)` for `n` beyond this
/// is refused rather than attempted.
pub const DEFAULT_STAGE_BUDGET: u32 = 5;

/// Errors from set construction and parsing.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HfError {
    #[error("stage {requested} exceeds the stage budget {budget}")]
    StageBudget { requested: u32, budget: u32 },
    #[error("set notation error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

struct Node {
    id: u64,
    rank: u32,
    elems: Vec<SetValue>,
}

/// A hereditarily finite set in canonical form.
///
/// Equality and hashing are O(1) thanks to interning; ordering is the
/// canonical structural order (rank, then lexicographic on element lists),
/// so iterating a `BTreeSet<SetValue>` is deterministic across runs.
#[derive(Clone)]
pub struct SetValue(Arc<Node>);

struct Interner {
    map: HashMap<Vec<u64>, SetValue>,
    next_id: u64,
}

fn interner() -> &'static Mutex<Interner> {
    static INTERNER: OnceLock<Mutex<Interner>> = OnceLock::new();
    INTERNER.get_or_init(|| {
        Mutex::new(Interner {
            map: HashMap::new(),
            next_id: 0,
        })
    })
}

impl SetValue {
    /// Builds the set of the given elements; duplicates collapse and the
    /// element order is canonicalized.
    pub fn make_set<I: IntoIterator<Item = SetValue>>(elems: I) -> SetValue {
        let mut v: Vec<SetValue> = elems.into_iter().collect();
        v.sort();
        v.dedup_by(|a, b| a.id() == b.id());
        let key: Vec<u64> = v.iter().map(|e| e.id()).collect();
        let mut guard = interner().lock().expect("set interner poisoned");
        if let Some(existing) = guard.map.get(&key) {
            return existing.clone();
        }
        let rank = v.iter().map(|e| e.rank() + 1).max().unwrap_or(0);
        let id = guard.next_id;
        guard.next_id += 1;
        let value = SetValue(Arc::new(Node {
            id,
            rank,
            elems: v,
        }));
        guard.map.insert(key, value.clone());
        value
    }

    /// The empty set.
    pub fn empty() -> SetValue {
        SetValue::make_set([])
    }

    /// `{a}`.
    pub fn singleton(a: SetValue) -> SetValue {
        SetValue::make_set([a])
    }

    /// `{a, b}` (collapses to a singleton when `a = b`).
    pub fn doubleton(a: SetValue, b: SetValue) -> SetValue {
        SetValue::make_set([a, b])
    }

    /// The Kuratowski ordered pair `{{a}, {a, b}}`.
    pub fn kuratowski_pair(a: SetValue, b: SetValue) -> SetValue {
        SetValue::make_set([
            SetValue::singleton(a.clone()),
            SetValue::doubleton(a, b),
        ])
    }

    /// Splits a Kuratowski pair back into its components, if this set is one.
    pub fn as_kuratowski_pair(&self) -> Option<(SetValue, SetValue)> {
        match self.elements() {
            [s] => {
                // {{a}} encodes the pair (a, a).
                let a = match s.elements() {
                    [a] => a.clone(),
                    _ => return None,
                };
                Some((a.clone(), a))
            }
            [x, y] => {
                // One component is the singleton {a}, the other {a, b};
                // canonical order does not say which comes first.
                let (s, d) = if x.len() == 1 && y.len() == 2 {
                    (x, y)
                } else if y.len() == 1 && x.len() == 2 {
                    (y, x)
                } else {
                    return None;
                };
                let a = s.elements()[0].clone();
                let b = match d.elements() {
                    [p, q] if *p == a => q.clone(),
                    [p, q] if *q == a => p.clone(),
                    _ => return None,
                };
                Some((a, b))
            }
            _ => None,
        }
    }

    /// The von Neumann natural `n = {0, 1, ..., n-1}`.
    pub fn ordinal(n: u32) -> SetValue {
        let mut cur = SetValue::empty();
        for _ in 0..n {
            let mut elems: Vec<SetValue> = cur.elements().to_vec();
            elems.push(cur.clone());
            cur = SetValue::make_set(elems);
        }
        cur
    }

    /// The cumulative stage `V_n` (all sets of rank `< n`) under the default
    /// stage budget.
    pub fn stage(n: u32) -> Result<SetValue, HfError> {
        SetValue::stage_with_budget(n, DEFAULT_STAGE_BUDGET)
    }

    /// The cumulative stage `V_n` under an explicit budget.
    pub fn stage_with_budget(n: u32, budget: u32) -> Result<SetValue, HfError> {
        if n > budget {
            return Err(HfError::StageBudget {
                requested: n,
                budget,
            });
        }
        let mut cur = SetValue::empty();
        for _ in 0..n {
            cur = cur.powerset();
        }
        Ok(cur)
    }

    fn powerset(&self) -> SetValue {
        let elems = self.elements();
        assert!(
            elems.len() <= 20,
            "powerset of a {}-element set is out of desk scale",
            elems.len()
        );
        let mut subsets = Vec::with_capacity(1 << elems.len());
        for mask in 0u32..(1 << elems.len()) {
            let chosen = elems
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, e)| e.clone());
            subsets.push(SetValue::make_set(chosen));
        }
        SetValue::make_set(subsets)
    }

    /// The ⊆-least transitive set including this one (the set itself is not
    /// a member of its own closure).
    pub fn transitive_closure(&self) -> SetValue {
        let mut acc: BTreeSet<SetValue> = BTreeSet::new();
        let mut stack: Vec<SetValue> = self.elements().to_vec();
        while let Some(x) = stack.pop() {
            if acc.insert(x.clone()) {
                stack.extend(x.elements().iter().cloned());
            }
        }
        SetValue::make_set(acc)
    }

    /// Whether every member of a member is a member.
    pub fn is_transitive(&self) -> bool {
        self.elements()
            .iter()
            .all(|e| e.elements().iter().all(|ee| self.contains(ee)))
    }

    /// Whether this is a von Neumann natural.
    pub fn is_ordinal(&self) -> bool {
        self.is_transitive() && self.elements().iter().all(|e| e.is_ordinal())
    }

    /// The natural this set denotes, when it is a von Neumann natural.
    pub fn as_nat(&self) -> Option<u32> {
        if self.is_ordinal() {
            Some(self.len() as u32)
        } else {
            None
        }
    }

    /// Set-theoretic rank (cached at construction).
    pub fn rank(&self) -> u32 {
        self.0.rank
    }

    /// Elements in canonical order.
    pub fn elements(&self) -> &[SetValue] {
        &self.0.elems
    }

    /// Membership test.
    pub fn contains(&self, x: &SetValue) -> bool {
        self.0
            .elems
            .binary_search_by(|e| e.cmp(x))
            .is_ok()
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.0.elems.len()
    }

    /// Whether this is the empty set.
    pub fn is_empty(&self) -> bool {
        self.0.elems.is_empty()
    }

    /// Binary union (does not raise rank above the operands').
    pub fn union_with(&self, other: &SetValue) -> SetValue {
        SetValue::make_set(
            self.elements()
                .iter()
                .chain(other.elements())
                .cloned(),
        )
    }

    /// Sweep union `⋃x`.
    pub fn sweep_union(&self) -> SetValue {
        SetValue::make_set(
            self.elements()
                .iter()
                .flat_map(|e| e.elements())
                .cloned(),
        )
    }

    /// Set difference `self \ other`.
    pub fn difference(&self, other: &SetValue) -> SetValue {
        SetValue::make_set(
            self.elements()
                .iter()
                .filter(|e| !other.contains(e))
                .cloned(),
        )
    }

    fn id(&self) -> u64 {
        self.0.id
    }

    /// Renders canonical set notation, e.g. `{{} {{}}}`.
    pub fn notation(&self) -> String {
        let mut s = String::new();
        self.write_notation(&mut s);
        s
    }

    fn write_notation(&self, out: &mut String) {
        out.push('{');
        for (i, e) in self.elements().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            e.write_notation(out);
        }
        out.push('}');
    }

    /// Parses set notation: braces with whitespace-separated elements, e.g.
    /// `{}` or `{{} {{}}}`. Duplicate elements are silently canonicalized.
    pub fn parse(input: &str) -> Result<SetValue, HfError> {
        let bytes = input.as_bytes();
        let mut pos = 0usize;
        let value = parse_at(bytes, &mut pos)?;
        skip_ws(bytes, &mut pos);
        if pos != bytes.len() {
            return Err(HfError::Parse {
                pos,
                msg: "trailing input after set".into(),
            });
        }
        Ok(value)
    }
}

fn skip_ws(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && (bytes[*pos].is_ascii_whitespace() || bytes[*pos] == b',') {
        *pos += 1;
    }
}

fn parse_at(bytes: &[u8], pos: &mut usize) -> Result<SetValue, HfError> {
    skip_ws(bytes, pos);
    if *pos >= bytes.len() || bytes[*pos] != b'{' {
        return Err(HfError::Parse {
            pos: *pos,
            msg: "expected '{'".into(),
        });
    }
    *pos += 1;
    let mut elems = Vec::new();
    loop {
        skip_ws(bytes, pos);
        if *pos >= bytes.len() {
            return Err(HfError::Parse {
                pos: *pos,
                msg: "unterminated set".into(),
            });
        }
        if bytes[*pos] == b'}' {
            *pos += 1;
            return Ok(SetValue::make_set(elems));
        }
        elems.push(parse_at(bytes, pos)?);
    }
}

impl PartialEq for SetValue {
    fn eq(&self, other: &Self) -> bool {
        self.id() == other.id()
    }
}

impl Eq for SetValue {}

impl std::hash::Hash for SetValue {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        state.write_u64(self.id());
    }
}

impl Ord for SetValue {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.id() == other.id() {
            return Ordering::Equal;
        }
        self.rank()
            .cmp(&other.rank())
            .then_with(|| {
                // Lexicographic on canonically ordered element lists.
                for (a, b) in self.elements().iter().zip(other.elements()) {
                    match a.cmp(b) {
                        Ordering::Equal => continue,
                        non_eq => return non_eq,
                    }
                }
                self.len().cmp(&other.len())
            })
    }
}

impl PartialOrd for SetValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SetValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.notation())
    }
}

impl fmt::Debug for SetValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.notation())
    }
}

impl serde::Serialize for SetValue {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.notation())
    }
}

impl<'de> serde::Deserialize<'de> for SetValue {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        SetValue::parse(&s).map_err(serde::de::Error::custom)
    }
}
