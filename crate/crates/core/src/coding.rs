//! Tree codings of hereditarily finite sets.
//!
//! A set is coded by a rooted tree that unfolds its membership structure:
//! the root stands for the set, and the subtrees below a node stand for the
//! members of that node's set, one subtree per membership position. A raw
//! rooted graph qualifies as a coding pair when four structural conditions
//! hold: every node has a unique finite distance from the root, subtrees
//! below distinct children of one node are pairwise non-isomorphic, distinct
//! nodes at the same distance share no children, and the edge relation is
//! well-founded.
//!
//! Quotienting a coding tree by subtree isomorphism yields a canonical
//! extensional well-founded dag — the shape a set "is". Decoding reads the
//! set back off the quotient, and the `*_plus` operations implement pairing,
//! union, and separation directly on quotients.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::hf::SetValue;
use crate::logic::{satisfies, Assignment, Formula, LogicError};
use crate::structure::FiniteStructure;

/// Why a raw rooted graph fails to be a coding pair. Each variant names the
/// offending nodes by index.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum CodingViolation {
    /// The edge relation is not well-founded below the root.
    Cycle { node: usize },
    /// The node has no finite distance from the root.
    Unreachable { node: usize },
    /// The node can be reached at two different distances from the root.
    AmbiguousDistance { node: usize, d1: u32, d2: u32 },
    /// Two distinct same-distance nodes share a child.
    SharedChild {
        left: usize,
        right: usize,
        child: usize,
    },
    /// Two children of one node carry isomorphic subtrees.
    IsomorphicSiblings {
        parent: usize,
        left: usize,
        right: usize,
    },
}

impl fmt::Display for CodingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodingViolation::Cycle { node } => {
                write!(f, "edge relation is not well-founded at node {node}")
            }
            CodingViolation::Unreachable { node } => {
                write!(f, "node {node} has no finite distance from the root")
            }
            CodingViolation::AmbiguousDistance { node, d1, d2 } => {
                write!(f, "node {node} sits at distances {d1} and {d2} from the root")
            }
            CodingViolation::SharedChild { left, right, child } => write!(
                f,
                "same-distance nodes {left} and {right} share child {child}"
            ),
            CodingViolation::IsomorphicSiblings { parent, left, right } => write!(
                f,
                "children {left} and {right} of node {parent} carry isomorphic subtrees"
            ),
        }
    }
}

/// Errors from raw-graph construction and parsing.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodingError {
    #[error("{0}")]
    Violation(CodingViolation),
    #[error("node index {index} out of range for {count} nodes")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("tree text error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// An arbitrary finite rooted graph, conditions not yet validated.
/// Edges run from a node to the nodes directly below it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTree {
    labels: Vec<String>,
    root: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl RawTree {
    pub fn new<I: IntoIterator<Item = (usize, usize)>>(
        labels: Vec<String>,
        root: usize,
        edges: I,
    ) -> Result<RawTree, CodingError> {
        let count = labels.len();
        let check = |index: usize| {
            if index >= count {
                Err(CodingError::IndexOutOfRange { index, count })
            } else {
                Ok(())
            }
        };
        check(root)?;
        let edges: BTreeSet<(usize, usize)> = edges.into_iter().collect();
        for &(p, c) in &edges {
            check(p)?;
            check(c)?;
        }
        Ok(RawTree { labels, root, edges })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn label(&self, node: usize) -> &str {
        &self.labels[node]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    fn children_of(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(p, _)| *p == node)
            .map(|(_, c)| *c)
            .collect()
    }

    /// Parses either format:
    ///
    /// * an indented outline, one node per line, children indented deeper
    ///   than their parent (`-` or empty labels are auto-named), or
    /// * an edge list: one `root <label>` line plus `edge <parent> <child>`
    ///   lines (needed to write graphs that are not trees).
    ///
    /// `#` starts a comment in both formats.
    pub fn parse(text: &str) -> Result<RawTree, CodingError> {
        let meaningful: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| {
                let t = l.trim();
                !t.is_empty() && !t.starts_with('#')
            })
            .collect();
        if meaningful.is_empty() {
            return Err(CodingError::Parse {
                line: 1,
                msg: "no nodes".into(),
            });
        }
        let first = meaningful[0].1.trim();
        if first.starts_with("root ") || first == "root" {
            Self::parse_edge_list(&meaningful)
        } else {
            Self::parse_outline(&meaningful)
        }
    }

    fn parse_outline(lines: &[(usize, &str)]) -> Result<RawTree, CodingError> {
        let mut labels: Vec<String> = Vec::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        // Stack of (indent, node index) for the current ancestor path.
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for &(line_no, line) in lines {
            let indent = line.len() - line.trim_start().len();
            let text = line.trim();
            let label = if text == "-" {
                format!("n{}", labels.len())
            } else {
                text.to_string()
            };
            while let Some(&(top_indent, _)) = stack.last() {
                if top_indent >= indent {
                    stack.pop();
                } else {
                    break;
                }
            }
            let idx = labels.len();
            labels.push(label);
            match stack.last() {
                Some(&(_, parent)) => edges.push((parent, idx)),
                None if idx == 0 => {}
                None => {
                    return Err(CodingError::Parse {
                        line: line_no,
                        msg: "outline has more than one root".into(),
                    })
                }
            }
            stack.push((indent, idx));
        }
        RawTree::new(labels, 0, edges)
    }

    fn parse_edge_list(lines: &[(usize, &str)]) -> Result<RawTree, CodingError> {
        let mut names: Vec<String> = Vec::new();
        let mut index_of: BTreeMap<String, usize> = BTreeMap::new();
        let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
            if let Some(&i) = index_of.get(name) {
                return i;
            }
            let i = names.len();
            names.push(name.to_string());
            index_of.insert(name.to_string(), i);
            i
        };
        let mut root: Option<usize> = None;
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for &(line_no, line) in lines {
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["root", name] => {
                    if root.is_some() {
                        return Err(CodingError::Parse {
                            line: line_no,
                            msg: "duplicate root line".into(),
                        });
                    }
                    root = Some(intern(name, &mut names));
                }
                ["edge", parent, child] => {
                    let p = intern(parent, &mut names);
                    let c = intern(child, &mut names);
                    edges.push((p, c));
                }
                _ => {
                    return Err(CodingError::Parse {
                        line: line_no,
                        msg: "expected 'root <label>' or 'edge <parent> <child>'".into(),
                    })
                }
            }
        }
        let root = root.ok_or(CodingError::Parse {
            line: 1,
            msg: "missing root line".into(),
        })?;
        RawTree::new(names, root, edges)
    }

    /// Renders the edge-list format (total for any raw graph).
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("root {}\n", self.labels[self.root]);
        for &(p, c) in &self.edges {
            out.push_str(&format!("edge {} {}\n", self.labels[p], self.labels[c]));
        }
        out
    }
}

/// Checks the four coding-pair conditions, reporting the first failure in a
/// fixed scan order (well-foundedness, distances, shared children, sibling
/// isomorphism).
pub fn validate_coding_pair(raw: &RawTree) -> Result<(), CodingViolation> {
    CodingTree::from_raw(raw).map(|_| ())
}

/// A validated coding pair: a rooted tree whose sibling subtrees are
/// pairwise non-isomorphic and whose nodes sit at unique distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingTree {
    labels: Vec<String>,
    children: Vec<Vec<usize>>,
    root: usize,
}

impl CodingTree {
    pub fn from_raw(raw: &RawTree) -> Result<CodingTree, CodingViolation> {
        let n = raw.node_count();

        // Well-foundedness: depth-first search for a back edge.
        {
            let mut state = vec![0u8; n]; // 0 unvisited, 1 in progress, 2 done
            let mut stack: Vec<(usize, Vec<usize>, usize)> = Vec::new();
            for start in 0..n {
                if state[start] != 0 {
                    continue;
                }
                stack.push((start, raw.children_of(start), 0));
                state[start] = 1;
                while let Some((node, kids, next)) = stack.last_mut() {
                    if *next >= kids.len() {
                        state[*node] = 2;
                        stack.pop();
                        continue;
                    }
                    let child = kids[*next];
                    *next += 1;
                    match state[child] {
                        0 => {
                            state[child] = 1;
                            stack.push((child, raw.children_of(child), 0));
                        }
                        1 => return Err(CodingViolation::Cycle { node: child }),
                        _ => {}
                    }
                }
            }
        }

        // Unique finite distance from the root.
        let mut depth: Vec<Option<u32>> = vec![None; n];
        depth[raw.root()] = Some(0);
        let mut queue = std::collections::VecDeque::from([raw.root()]);
        while let Some(node) = queue.pop_front() {
            let d = depth[node].unwrap();
            for child in raw.children_of(node) {
                match depth[child] {
                    None => {
                        depth[child] = Some(d + 1);
                        queue.push_back(child);
                    }
                    Some(existing) if existing != d + 1 => {
                        return Err(CodingViolation::AmbiguousDistance {
                            node: child,
                            d1: existing.min(d + 1),
                            d2: existing.max(d + 1),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        if let Some(node) = (0..n).find(|&i| depth[i].is_none()) {
            return Err(CodingViolation::Unreachable { node });
        }

        // Distinct same-distance nodes share no children. Distances are
        // unique by now, so any node with two parents witnesses this.
        let mut parent_of: Vec<Option<usize>> = vec![None; n];
        for (p, c) in raw.edges() {
            if let Some(first) = parent_of[c] {
                return Err(CodingViolation::SharedChild {
                    left: first.min(p),
                    right: first.max(p),
                    child: c,
                });
            }
            parent_of[c] = Some(p);
        }

        // The graph is now a tree; reject isomorphic sibling subtrees.
        let children: Vec<Vec<usize>> = (0..n).map(|i| raw.children_of(i)).collect();
        let shapes = shape_ids(&children, raw.root());
        for parent in 0..n {
            let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
            for &child in &children[parent] {
                if let Some(&earlier) = seen.get(&shapes[child]) {
                    return Err(CodingViolation::IsomorphicSiblings {
                        parent,
                        left: earlier,
                        right: child,
                    });
                }
                seen.insert(shapes[child], child);
            }
        }

        Ok(CodingTree {
            labels: raw.labels.clone(),
            children,
            root: raw.root(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn label(&self, node: usize) -> &str {
        &self.labels[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Distance of each node from the root.
    pub fn depths(&self) -> Vec<u32> {
        let mut depth = vec![0u32; self.node_count()];
        let mut stack = vec![self.root];
        while let Some(node) = stack.pop() {
            for &c in &self.children[node] {
                depth[c] = depth[node] + 1;
                stack.push(c);
            }
        }
        depth
    }

    pub fn to_raw(&self) -> RawTree {
        let edges: Vec<(usize, usize)> = self
            .children
            .iter()
            .enumerate()
            .flat_map(|(p, cs)| cs.iter().map(move |&c| (p, c)))
            .collect();
        RawTree::new(self.labels.clone(), self.root, edges).expect("indices are in range")
    }

    /// Renders the indented-outline format.
    pub fn to_outline(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![(self.root, 0usize)];
        while let Some((node, indent)) = stack.pop() {
            out.push_str(&" ".repeat(indent * 2));
            out.push_str(&self.labels[node]);
            out.push('\n');
            for &c in self.children[node].iter().rev() {
                stack.push((c, indent + 1));
            }
        }
        out
    }
}

/// Codes a set as a membership tree: one node per membership position in
/// the unfolding of the set, labeled with the set it stands for.
pub fn encode_set(x: &SetValue) -> CodingTree {
    let mut labels = Vec::new();
    let mut children = Vec::new();
    let root = encode_into(x, &mut labels, &mut children);
    CodingTree {
        labels,
        children,
        root,
    }
}

fn encode_into(
    x: &SetValue,
    labels: &mut Vec<String>,
    children: &mut Vec<Vec<usize>>,
) -> usize {
    let kids: Vec<usize> = x
        .elements()
        .iter()
        .map(|e| encode_into(e, labels, children))
        .collect();
    let idx = labels.len();
    labels.push(x.notation());
    children.push(kids);
    idx
}

// ---------------------------------------------------------------------------
// Shapes and quotients
// ---------------------------------------------------------------------------

/// Assigns each node a shape id such that two nodes get the same id exactly
/// when their reachable subgraphs are isomorphic. Works on any acyclic
/// children table.
fn shape_ids(children: &[Vec<usize>], root: usize) -> Vec<usize> {
    let n = children.len();
    let mut shape: Vec<Option<usize>> = vec![None; n];
    let mut table: HashMap<Vec<usize>, usize> = HashMap::new();
    // Iterative post-order from every node (covers unreachable nodes too,
    // although quotients only consult reachable ones).
    let _ = root;
    for start in 0..n {
        if shape[start].is_some() {
            continue;
        }
        let mut stack = vec![(start, false)];
        while let Some((node, expanded)) = stack.pop() {
            if shape[node].is_some() {
                continue;
            }
            if expanded {
                let mut key: Vec<usize> = children[node]
                    .iter()
                    .map(|&c| shape[c].expect("children processed first"))
                    .collect();
                key.sort_unstable();
                key.dedup();
                let next = table.len();
                let id = *table.entry(key).or_insert(next);
                shape[node] = Some(id);
            } else {
                stack.push((node, true));
                for &c in &children[node] {
                    stack.push((c, false));
                }
            }
        }
    }
    shape.into_iter().map(|s| s.unwrap()).collect()
}

/// A canonical extensional well-founded dag: one node per isomorphism class
/// of subtrees, numbered in a fixed structural order (height, then child
/// count, then lexicographic on child lists), root last.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuotientTree {
    children: Vec<Vec<usize>>,
    root: usize,
}

impl QuotientTree {
    pub fn node_count(&self) -> usize {
        self.children.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(p, cs)| cs.iter().map(move |&c| (p, c)))
            .collect()
    }

    /// Reads the coded set off the dag.
    pub fn decode(&self) -> SetValue {
        decode(self)
    }

    /// The canonical dag of the subgraph hanging below `node`.
    pub fn sub_at(&self, node: usize) -> QuotientTree {
        canonical_from_children(&self.children, node)
    }

    /// Renders one `node: children` line per node, root last.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (i, kids) in self.children.iter().enumerate() {
            let kids: Vec<String> = kids.iter().map(|k| k.to_string()).collect();
            out.push_str(&format!("{i}: [{}]\n", kids.join(" ")));
        }
        out.push_str(&format!("root {}\n", self.root));
        out
    }
}

/// Collapses a coding tree to its quotient by subtree isomorphism.
pub fn quotient(tree: &CodingTree) -> QuotientTree {
    canonical_from_children(&tree.children, tree.root)
}

/// Canonicalizes the reachable part of an acyclic children table into a
/// `QuotientTree`.
fn canonical_from_children(children: &[Vec<usize>], root: usize) -> QuotientTree {
    let shapes = shape_ids(children, root);

    // Children table per reachable shape.
    let mut shape_children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut stack = vec![root];
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    while let Some(node) = stack.pop() {
        if !seen.insert(shapes[node]) {
            continue;
        }
        let mut kids: Vec<usize> = children[node].iter().map(|&c| shapes[c]).collect();
        kids.sort_unstable();
        kids.dedup();
        shape_children.insert(shapes[node], kids);
        stack.extend(children[node].iter().copied());
    }

    // Heights, then the structural order level by level: shapes of smaller
    // height come first; within a height level, fewer children first, then
    // lexicographic on (already renumbered) child lists.
    let mut height: BTreeMap<usize, u32> = BTreeMap::new();
    fn height_of(
        s: usize,
        shape_children: &BTreeMap<usize, Vec<usize>>,
        memo: &mut BTreeMap<usize, u32>,
    ) -> u32 {
        if let Some(&h) = memo.get(&s) {
            return h;
        }
        let h = shape_children[&s]
            .iter()
            .map(|&c| height_of(c, shape_children, memo) + 1)
            .max()
            .unwrap_or(0);
        memo.insert(s, h);
        h
    }
    for &s in shape_children.keys() {
        height_of(s, &shape_children, &mut height);
    }

    let mut by_level: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (&s, &h) in &height {
        by_level.entry(h).or_default().push(s);
    }
    let mut rank: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next_rank = 0usize;
    for (_, level) in by_level {
        let mut keyed: Vec<(usize, Vec<usize>, usize)> = level
            .into_iter()
            .map(|s| {
                let mut kids: Vec<usize> =
                    shape_children[&s].iter().map(|c| rank[c]).collect();
                kids.sort_unstable();
                (kids.len(), kids, s)
            })
            .collect();
        keyed.sort();
        for (_, _, s) in keyed {
            rank.insert(s, next_rank);
            next_rank += 1;
        }
    }

    let mut out_children = vec![Vec::new(); next_rank];
    for (&s, kids) in &shape_children {
        let mut mapped: Vec<usize> = kids.iter().map(|c| rank[c]).collect();
        mapped.sort_unstable();
        out_children[rank[&s]] = mapped;
    }
    QuotientTree {
        children: out_children,
        root: rank[&shapes[root]],
    }
}

/// Reads the set a quotient codes: nodes become sets bottom-up.
pub fn decode(q: &QuotientTree) -> SetValue {
    let mut values: Vec<Option<SetValue>> = vec![None; q.node_count()];
    // Canonical numbering puts children before parents.
    for i in 0..q.node_count() {
        let elems: Vec<SetValue> = q.children[i]
            .iter()
            .map(|&c| values[c].clone().expect("children precede parents"))
            .collect();
        values[i] = Some(SetValue::make_set(elems));
    }
    values[q.root].clone().expect("root decoded")
}

/// Isomorphism of coded sets: canonical forms are equal.
pub fn tt_equal(a: &QuotientTree, b: &QuotientTree) -> bool {
    a == b
}

/// Membership at the level of codes: `b` is isomorphic to a direct subtree
/// of `a` (a subtree hanging right below `a`'s root).
pub fn et_related(a: &QuotientTree, b: &QuotientTree) -> bool {
    a.children[a.root].iter().any(|&c| a.sub_at(c) == *b)
}

/// Tags the members of `x` with 1 and the members of `y` with 2, gathering
/// both into one set of ordered pairs.
pub fn rep_pair(x: &SetValue, y: &SetValue) -> SetValue {
    let one = SetValue::ordinal(1);
    let two = SetValue::ordinal(2);
    let tagged = x
        .elements()
        .iter()
        .map(|z| SetValue::kuratowski_pair(z.clone(), one.clone()))
        .chain(
            y.elements()
                .iter()
                .map(|z| SetValue::kuratowski_pair(z.clone(), two.clone())),
        );
    SetValue::make_set(tagged)
}

/// Pairing on codes: a new root whose direct subtrees are `a` and `b`.
pub fn pairing_plus(a: &QuotientTree, b: &QuotientTree) -> QuotientTree {
    let mut children: Vec<Vec<usize>> = a.children.clone();
    let offset = children.len();
    for kids in &b.children {
        children.push(kids.iter().map(|&c| c + offset).collect());
    }
    let root = children.len();
    children.push(vec![a.root, b.root + offset]);
    canonical_from_children(&children, root)
}

/// Union on codes: a new root adopting the grandchildren of the old root.
pub fn union_plus(a: &QuotientTree) -> QuotientTree {
    let mut children = a.children.clone();
    let grandchildren: BTreeSet<usize> = a.children[a.root]
        .iter()
        .flat_map(|&c| a.children[c].iter().copied())
        .collect();
    let root = children.len();
    children.push(grandchildren.into_iter().collect());
    canonical_from_children(&children, root)
}

/// Separation on codes: keeps the direct subtrees whose decoded sets make
/// `phi` true when bound to `var`, evaluated over `structure`.
pub fn separation_plus(
    a: &QuotientTree,
    var: &str,
    phi: &Formula,
    structure: &FiniteStructure,
) -> Result<QuotientTree, CodingError> {
    let mut kept = Vec::new();
    for &c in &a.children[a.root] {
        let value = a.sub_at(c).decode();
        let mut asg = Assignment::new();
        asg.insert(var.to_string(), value);
        if satisfies(structure, phi, &asg)? {
            kept.push(c);
        }
    }
    let mut children = a.children.clone();
    let root = children.len();
    children.push(kept);
    Ok(canonical_from_children(&children, root))
}

/// Transitivity at the level of codes: every child of a direct subtree is
/// itself realized as a well-formed code, and its decoded set is a member
/// of the corresponding direct subtree's decoded set.
pub fn transitivity_check(a: &QuotientTree) -> bool {
    for &c in &a.children[a.root] {
        let member = a.sub_at(c);
        let member_value = member.decode();
        for &g in &a.children[c] {
            let grand = a.sub_at(g);
            // Extraction must produce a coherent code whose value sits
            // inside the member's value.
            if grand.decode() != grand.sub_at(grand.root()).decode() {
                return false;
            }
            if !member_value.contains(&grand.decode()) {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Corpus generation and mutation (fuzz support)
// ---------------------------------------------------------------------------

/// The kinds of structural damage the mutation helpers can inflict, each
/// aimed at exactly one coding-pair condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum MutationKind {
    /// Duplicate a subtree under its own parent.
    DuplicateSibling,
    /// Attach an existing node to a second same-distance parent.
    ShareChild,
    /// Add an edge whose target already has a different distance.
    SkewDistance,
    /// Point an edge back up at an ancestor.
    BackEdge,
}

impl MutationKind {
    pub const ALL: [MutationKind; 4] = [
        MutationKind::DuplicateSibling,
        MutationKind::ShareChild,
        MutationKind::SkewDistance,
        MutationKind::BackEdge,
    ];

    /// The violation this mutation is designed to trigger.
    pub fn expected(self) -> fn(&CodingViolation) -> bool {
        match self {
            MutationKind::DuplicateSibling => {
                |v| matches!(v, CodingViolation::IsomorphicSiblings { .. })
            }
            MutationKind::ShareChild => |v| matches!(v, CodingViolation::SharedChild { .. }),
            MutationKind::SkewDistance => {
                |v| matches!(v, CodingViolation::AmbiguousDistance { .. })
            }
            MutationKind::BackEdge => |v| matches!(v, CodingViolation::Cycle { .. }),
        }
    }
}

/// A random set of rank at most `max_rank`, for corpus building.
pub fn sample_set<R: rand::Rng>(rng: &mut R, max_rank: u32) -> SetValue {
    if max_rank == 0 || rng.gen_bool(0.2) {
        return SetValue::empty();
    }
    let width = rng.gen_range(0..=3);
    SetValue::make_set((0..width).map(|_| sample_set(rng, max_rank - 1)))
}

/// A random valid coding pair: the membership tree of a random set, with
/// node indices shuffled so validation sees nontrivial layouts.
pub fn sample_coding_pair<R: rand::Rng>(rng: &mut R, max_rank: u32) -> RawTree {
    let tree = encode_set(&sample_set(rng, max_rank));
    let n = tree.node_count();
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let mut labels = vec![String::new(); n];
    for i in 0..n {
        labels[perm[i]] = tree.label(i).to_string();
    }
    let edges: Vec<(usize, usize)> = tree
        .to_raw()
        .edges()
        .map(|(p, c)| (perm[p], perm[c]))
        .collect();
    RawTree::new(labels, perm[tree.root()], edges).expect("permutation keeps indices valid")
}

/// Applies one mutation to a valid coding tree, returning the damaged raw
/// graph. `None` when the tree is too small to host this mutation.
pub fn mutate<R: rand::Rng>(
    tree: &CodingTree,
    kind: MutationKind,
    rng: &mut R,
) -> Option<RawTree> {
    let raw = tree.to_raw();
    let n = tree.node_count();
    let depths = tree.depths();
    let mut edges: Vec<(usize, usize)> = raw.edges().collect();
    let mut labels: Vec<String> = (0..n).map(|i| raw.label(i).to_string()).collect();

    match kind {
        MutationKind::DuplicateSibling => {
            let parents: Vec<usize> = (0..n).filter(|&i| !tree.children(i).is_empty()).collect();
            if parents.is_empty() {
                return None;
            }
            let parent = parents[rng.gen_range(0..parents.len())];
            let kids = tree.children(parent);
            let child = kids[rng.gen_range(0..kids.len())];
            // Copy the subtree below `child` as a fresh sibling.
            let mut map: BTreeMap<usize, usize> = BTreeMap::new();
            let mut stack = vec![child];
            let mut order = Vec::new();
            while let Some(v) = stack.pop() {
                if map.contains_key(&v) {
                    continue;
                }
                map.insert(v, labels.len());
                labels.push(format!("{}'", raw.label(v)));
                order.push(v);
                stack.extend(tree.children(v).iter().copied());
            }
            for v in order {
                for &c in tree.children(v) {
                    edges.push((map[&v], map[&c]));
                }
            }
            edges.push((parent, map[&child]));
        }
        MutationKind::ShareChild => {
            // Two distinct nodes at the same distance; one adopts a child
            // of the other.
            let mut by_depth: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for i in 0..n {
                by_depth.entry(depths[i]).or_default().push(i);
            }
            let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
            for level in by_depth.values() {
                for &a in level {
                    for &b in level {
                        if a != b {
                            for &c in tree.children(a) {
                                candidates.push((a, b, c));
                            }
                        }
                    }
                }
            }
            if candidates.is_empty() {
                return None;
            }
            let (_, adopter, child) = candidates[rng.gen_range(0..candidates.len())];
            edges.push((adopter, child));
        }
        MutationKind::SkewDistance => {
            // Edge whose target's existing distance differs from source+1,
            // and whose target is not an ancestor of the source (that would
            // be a cycle instead).
            let mut ancestors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
            let mut stack = vec![tree.root()];
            while let Some(v) = stack.pop() {
                for &c in tree.children(v) {
                    ancestors[c] = ancestors[v].clone();
                    ancestors[c].insert(v);
                    stack.push(c);
                }
            }
            let mut candidates: Vec<(usize, usize)> = Vec::new();
            for s in 0..n {
                for t in 0..n {
                    if s != t
                        && t != tree.root()
                        && depths[t] != depths[s] + 1
                        && !ancestors[s].contains(&t)
                        && !tree.children(s).contains(&t)
                    {
                        candidates.push((s, t));
                    }
                }
            }
            if candidates.is_empty() {
                return None;
            }
            let (s, t) = candidates[rng.gen_range(0..candidates.len())];
            edges.push((s, t));
        }
        MutationKind::BackEdge => {
            let mut candidates: Vec<(usize, usize)> = Vec::new();
            let mut stack = vec![(tree.root(), vec![tree.root()])];
            while let Some((v, path)) = stack.pop() {
                for anc in &path {
                    candidates.push((v, *anc));
                }
                for &c in tree.children(v) {
                    let mut path = path.clone();
                    path.push(c);
                    stack.push((c, path));
                }
            }
            let (s, t) = candidates[rng.gen_range(0..candidates.len())];
            edges.push((s, t));
        }
    }
    Some(RawTree::new(labels, raw.root(), edges).expect("mutation keeps indices valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quotient_of(x: &SetValue) -> QuotientTree {
        quotient(&encode_set(x))
    }

    #[test]
    fn membership_tree_of_three_has_eight_positions() {
        let tree = encode_set(&SetValue::ordinal(3));
        assert_eq!(tree.node_count(), 8);
        assert!(validate_coding_pair(&tree.to_raw()).is_ok());
    }

    #[test]
    fn quotient_of_three_is_the_four_node_diamond() {
        let q = quotient_of(&SetValue::ordinal(3));
        assert_eq!(q.node_count(), 4);
        assert_eq!(q.root(), 3);
        assert_eq!(q.children(0), &[] as &[usize]);
        assert_eq!(q.children(1), &[0]);
        assert_eq!(q.children(2), &[0, 1]);
        assert_eq!(q.children(3), &[0, 1, 2]);
    }

    #[test]
    fn decode_quotient_encode_is_identity_exhaustively_to_rank_three() {
        for x in SetValue::stage(4).unwrap().elements() {
            assert_eq!(quotient_of(x).decode(), *x, "roundtrip of {x}");
        }
    }

    #[test]
    fn decode_quotient_encode_on_random_rank_four_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
        for _ in 0..300 {
            let x = sample_set(&mut rng, 4);
            assert_eq!(quotient_of(&x).decode(), x);
        }
    }

    #[test]
    fn quotient_is_isomorphism_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0df);
        for _ in 0..200 {
            let x = sample_set(&mut rng, 4);
            let raw = {
                let tree = encode_set(&x);
                let n = tree.node_count();
                let mut perm: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    let j = rng.gen_range(0..=i);
                    perm.swap(i, j);
                }
                let mut labels = vec![String::new(); n];
                for i in 0..n {
                    labels[perm[i]] = tree.label(i).to_string();
                }
                let edges: Vec<(usize, usize)> = tree
                    .to_raw()
                    .edges()
                    .map(|(p, c)| (perm[p], perm[c]))
                    .collect();
                RawTree::new(labels, perm[tree.root()], edges).unwrap()
            };
            let tree = CodingTree::from_raw(&raw).expect("shuffled code stays valid");
            assert_eq!(quotient(&tree), quotient_of(&x));
        }
    }

    #[test]
    fn code_membership_matches_set_membership_exhaustively() {
        let v3: Vec<SetValue> = SetValue::stage(3).unwrap().elements().to_vec();
        for x in &v3 {
            let qx = quotient_of(x);
            for y in &v3 {
                let qy = quotient_of(y);
                assert_eq!(et_related(&qx, &qy), x.contains(y), "x={x} y={y}");
                assert_eq!(tt_equal(&qx, &qy), x == y);
            }
        }
    }

    #[test]
    fn rep_pair_tags_members_with_one_and_two() {
        let x = SetValue::singleton(SetValue::empty());
        let y = SetValue::ordinal(2);
        let got = rep_pair(&x, &y);
        let expected = SetValue::make_set([
            SetValue::kuratowski_pair(SetValue::empty(), SetValue::ordinal(1)),
            SetValue::kuratowski_pair(SetValue::empty(), SetValue::ordinal(2)),
            SetValue::kuratowski_pair(SetValue::ordinal(1), SetValue::ordinal(2)),
        ]);
        assert_eq!(got, expected);
        assert_eq!(got.len(), 3);
    }

    #[test]
    fn pairing_union_separation_commute_with_decode() {
        let v3: Vec<SetValue> = SetValue::stage(3).unwrap().elements().to_vec();
        let big = FiniteStructure::new(
            SetValue::stage(4).unwrap().elements().to_vec(),
        )
        .unwrap();
        let keep_empty = parse_formula("x = {}").unwrap();
        for x in &v3 {
            let qx = quotient_of(x);
            for y in &v3 {
                let qy = quotient_of(y);
                let paired = pairing_plus(&qx, &qy);
                assert_eq!(
                    paired.decode(),
                    SetValue::doubleton(x.clone(), y.clone()),
                    "pairing of {x}, {y}"
                );
            }
            assert_eq!(union_plus(&qx).decode(), x.sweep_union(), "union of {x}");
            let separated = separation_plus(&qx, "x", &keep_empty, &big).unwrap();
            let expected = SetValue::make_set(
                x.elements()
                    .iter()
                    .filter(|e| e.is_empty())
                    .cloned(),
            );
            assert_eq!(separated.decode(), expected, "separation of {x}");
            assert!(transitivity_check(&qx));
        }
    }

    #[test]
    fn validation_catches_each_handmade_violation() {
        // Cycle: a -> b -> a.
        let cyc = RawTree::new(
            vec!["a".into(), "b".into()],
            0,
            vec![(0, 1), (1, 0)],
        )
        .unwrap();
        assert!(matches!(
            validate_coding_pair(&cyc),
            Err(CodingViolation::Cycle { .. })
        ));

        // Unreachable node.
        let unreach = RawTree::new(vec!["a".into(), "b".into()], 0, vec![]).unwrap();
        assert_eq!(
            validate_coding_pair(&unreach),
            Err(CodingViolation::Unreachable { node: 1 })
        );

        // Ambiguous distance: both a child and a grandchild.
        let skew = RawTree::new(
            vec!["a".into(), "b".into(), "c".into()],
            0,
            vec![(0, 1), (0, 2), (1, 2)],
        )
        .unwrap();
        assert!(matches!(
            validate_coding_pair(&skew),
            Err(CodingViolation::AmbiguousDistance { node: 2, .. })
        ));

        // Same-distance parents sharing a child.
        let shared = RawTree::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into(), "e".into()],
            0,
            vec![(0, 1), (0, 2), (1, 3), (2, 3), (1, 4)],
        )
        .unwrap();
        assert!(matches!(
            validate_coding_pair(&shared),
            Err(CodingViolation::SharedChild { child: 3, .. })
        ));

        // Isomorphic siblings: two bare leaves under one parent.
        let iso = RawTree::new(
            vec!["a".into(), "b".into(), "c".into()],
            0,
            vec![(0, 1), (0, 2)],
        )
        .unwrap();
        assert!(matches!(
            validate_coding_pair(&iso),
            Err(CodingViolation::IsomorphicSiblings { parent: 0, .. })
        ));
    }

    #[test]
    fn mutations_trigger_their_own_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0e0);
        let mut per_kind = BTreeMap::new();
        let mut attempts = 0;
        while per_kind.values().map(|v: &u32| *v).sum::<u32>() < 120 && attempts < 3000 {
            attempts += 1;
            let x = sample_set(&mut rng, 3);
            if x.is_empty() {
                continue;
            }
            let tree = encode_set(&x);
            for kind in MutationKind::ALL {
                let Some(damaged) = mutate(&tree, kind, &mut rng) else {
                    continue;
                };
                let verdict = validate_coding_pair(&damaged);
                match verdict {
                    Err(v) if kind.expected()(&v) => {
                        *per_kind.entry(kind as u8).or_insert(0u32) += 1;
                    }
                    other => panic!(
                        "mutation {kind:?} on {x} produced verdict {other:?}"
                    ),
                }
            }
        }
        assert_eq!(per_kind.len(), 4, "all four mutation kinds exercised");
    }

    #[test]
    fn outline_parse_and_render_roundtrip() {
        let text = "a\n  b\n    c\n  d\n";
        let raw = RawTree::parse(text).unwrap();
        assert_eq!(raw.node_count(), 4);
        let tree = CodingTree::from_raw(&raw).unwrap();
        assert_eq!(tree.to_outline(), text);
        assert_eq!(tree.children(0).len(), 2);
    }

    #[test]
    fn edge_list_parse_handles_graphs() {
        let text = "root a\nedge a b\nedge a c\nedge b d\nedge c d\n";
        let raw = RawTree::parse(text).unwrap();
        assert_eq!(raw.node_count(), 4);
        assert!(matches!(
            validate_coding_pair(&raw),
            Err(CodingViolation::SharedChild { .. })
        ));
        let back = RawTree::parse(&raw.to_edge_list()).unwrap();
        assert_eq!(back, raw);
    }

    #[test]
    fn parse_errors_are_reported_with_lines() {
        assert!(RawTree::parse("").is_err());
        assert!(RawTree::parse("a\nb\n").is_err()); // two roots
        assert!(RawTree::parse("root a\nedge a\n").is_err());
        assert!(RawTree::parse("root a\nroot b\n").is_err());
    }

    #[test]
    fn anonymous_outline_nodes_are_autonamed() {
        let raw = RawTree::parse("-\n  -\n  x\n").unwrap();
        assert_eq!(raw.label(0), "n0");
        assert_eq!(raw.label(2), "x");
    }
}
