//! Rooted merge trees with scalar node labels.
//!
//! A tree is stored as dense node ids `0..n` with parent pointers. The root
//! has degree exactly one (a single node is the degenerate tree `bot`),
//! every non-root non-leaf node has at least two children, and each child
//! scalar strictly exceeds its parent scalar. Edge lengths are scalar
//! differences, so the edge above `v` has length `scalar(v) - scalar(parent(v))`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

pub type NodeId = usize;

/// One node as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeNodeRecord {
    pub id: usize,
    pub scalar: f64,
    /// `None` marks the root.
    pub parent: Option<usize>,
}

/// On-disk tree payload: `{"nodes": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeData {
    pub nodes: Vec<TreeNodeRecord>,
}

/// A single structural defect found during validation.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    DuplicateId { id: usize },
    IdOutOfRange { id: usize, node_count: usize },
    NoRoot,
    MultipleRoots { first: usize, second: usize },
    ParentOutOfRange { id: usize, parent: usize },
    SelfParent { id: usize },
    UnreachableFromRoot { id: usize },
    RootDegree { degree: usize },
    InnerDegree { id: usize, degree: usize },
    NonFiniteScalar { id: usize },
    /// Covers both inverted and zero-length edges.
    NonIncreasingScalar { child: usize, parent: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "tree has no nodes"),
            Violation::DuplicateId { id } => write!(f, "duplicate node id {id}"),
            Violation::IdOutOfRange { id, node_count } => {
                write!(f, "node id {id} out of range for {node_count} nodes (ids must be dense)")
            }
            Violation::NoRoot => write!(f, "no root node (expected exactly one parent-less node)"),
            Violation::MultipleRoots { first, second } => {
                write!(f, "multiple roots: nodes {first} and {second}")
            }
            Violation::ParentOutOfRange { id, parent } => {
                write!(f, "node {id} references missing parent {parent}")
            }
            Violation::SelfParent { id } => write!(f, "node {id} is its own parent"),
            Violation::UnreachableFromRoot { id } => {
                write!(f, "node {id} is not reachable from the root")
            }
            Violation::RootDegree { degree } => {
                write!(f, "root must have exactly one child, found {degree}")
            }
            Violation::InnerDegree { id, degree } => {
                write!(f, "inner node {id} must have at least two children, found {degree}")
            }
            Violation::NonFiniteScalar { id } => write!(f, "node {id} has a non-finite scalar"),
            Violation::NonIncreasingScalar { child, parent } => {
                write!(f, "scalar of node {child} must strictly exceed scalar of parent {parent}")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("invalid tree: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("epsilon must lie in [0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("edge above node {child} has nonpositive length {length}")]
    NonPositiveLength { child: usize, length: f64 },
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] TreeError),
}

/// Validated merge tree. Construct through [`AbstractMergeTree::from_data`]
/// or [`TreeBuilder`]; every instance upholds the shape invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractMergeTree {
    scalars: Vec<f64>,
    parent: Vec<Option<NodeId>>,
    /// Child lists sorted ascending by id.
    children: Vec<Vec<NodeId>>,
    root: NodeId,
}

/// Checks record-level structure and returns every violation found.
pub fn validate_records(records: &[TreeNodeRecord]) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = records.len();
    if n == 0 {
        out.push(Violation::Empty);
        return out;
    }
    let mut slot: Vec<Option<&TreeNodeRecord>> = vec![None; n];
    for rec in records {
        if rec.id >= n {
            out.push(Violation::IdOutOfRange { id: rec.id, node_count: n });
            continue;
        }
        if slot[rec.id].is_some() {
            out.push(Violation::DuplicateId { id: rec.id });
            continue;
        }
        slot[rec.id] = Some(rec);
    }
    if !out.is_empty() {
        return out;
    }
    let mut root: Option<usize> = None;
    for rec in records {
        match rec.parent {
            None => match root {
                None => root = Some(rec.id),
                Some(first) => out.push(Violation::MultipleRoots { first, second: rec.id }),
            },
            Some(p) => {
                if p >= n {
                    out.push(Violation::ParentOutOfRange { id: rec.id, parent: p });
                } else if p == rec.id {
                    out.push(Violation::SelfParent { id: rec.id });
                }
            }
        }
        if !rec.scalar.is_finite() {
            out.push(Violation::NonFiniteScalar { id: rec.id });
        }
    }
    let root = match root {
        Some(r) => r,
        None => {
            out.push(Violation::NoRoot);
            return out;
        }
    };
    if !out.is_empty() {
        return out;
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for rec in records {
        if let Some(p) = rec.parent {
            children[p].push(rec.id);
        }
    }
    // Reachability from the root rules out parent cycles.
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if seen[v] {
            continue;
        }
        seen[v] = true;
        stack.extend(children[v].iter().copied());
    }
    for id in 0..n {
        if !seen[id] {
            out.push(Violation::UnreachableFromRoot { id });
        }
    }
    if !out.is_empty() {
        return out;
    }

    if n > 1 && children[root].len() != 1 {
        out.push(Violation::RootDegree { degree: children[root].len() });
    }
    for id in 0..n {
        if id != root && !children[id].is_empty() && children[id].len() < 2 {
            out.push(Violation::InnerDegree { id, degree: children[id].len() });
        }
    }
    let scalar_of = |id: usize| slot[id].expect("dense ids checked").scalar;
    for rec in records {
        if let Some(p) = rec.parent {
            if !(rec.scalar > scalar_of(p)) {
                out.push(Violation::NonIncreasingScalar { child: rec.id, parent: p });
            }
        }
    }
    out
}

impl AbstractMergeTree {
    pub fn from_records(records: &[TreeNodeRecord]) -> Result<Self, TreeError> {
        let violations = validate_records(records);
        if !violations.is_empty() {
            return Err(TreeError::Invalid(violations));
        }
        let n = records.len();
        let mut scalars = vec![0.0; n];
        let mut parent = vec![None; n];
        let mut root = 0;
        for rec in records {
            scalars[rec.id] = rec.scalar;
            parent[rec.id] = rec.parent;
            if rec.parent.is_none() {
                root = rec.id;
            }
        }
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for id in 0..n {
            if let Some(p) = parent[id] {
                children[p].push(id);
            }
        }
        Ok(AbstractMergeTree { scalars, parent, children, root })
    }

    pub fn from_data(data: &TreeData) -> Result<Self, TreeError> {
        Self::from_records(&data.nodes)
    }

    pub fn to_data(&self) -> TreeData {
        let nodes = (0..self.node_count())
            .map(|id| TreeNodeRecord { id, scalar: self.scalars[id], parent: self.parent[id] })
            .collect();
        TreeData { nodes }
    }

    /// The single-node tree.
    pub fn bot(scalar: f64) -> Self {
        AbstractMergeTree {
            scalars: vec![scalar],
            parent: vec![None],
            children: vec![Vec::new()],
            root: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.scalars.len()
    }

    pub fn is_bot(&self) -> bool {
        self.node_count() == 1
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn scalar(&self, v: NodeId) -> f64 {
        self.scalars[v]
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    pub fn is_root(&self, v: NodeId) -> bool {
        v == self.root
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.children[v].is_empty() && v != self.root
    }

    pub fn is_inner(&self, v: NodeId) -> bool {
        v != self.root && !self.children[v].is_empty()
    }

    /// Length of the edge above `v`; `None` for the root.
    pub fn up_edge_length(&self, v: NodeId) -> Option<f64> {
        self.parent[v].map(|p| self.scalars[v] - self.scalars[p])
    }

    /// Sum of all edge lengths.
    pub fn total_persistence(&self) -> f64 {
        (0..self.node_count())
            .filter_map(|v| self.up_edge_length(v))
            .sum()
    }

    pub fn scalar_range(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in &self.scalars {
            lo = lo.min(s);
            hi = hi.max(s);
        }
        hi - lo
    }

    pub fn depth(&self, v: NodeId) -> usize {
        let mut d = 0;
        let mut cur = v;
        while let Some(p) = self.parent[cur] {
            d += 1;
            cur = p;
        }
        d
    }

    pub fn is_strict_ancestor(&self, a: NodeId, d: NodeId) -> bool {
        let mut cur = d;
        while let Some(p) = self.parent[cur] {
            if p == a {
                return true;
            }
            cur = p;
        }
        false
    }

    /// Nodes in preorder, children visited in ascending id order.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.node_count());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            // Reverse keeps ascending ids on a LIFO stack.
            stack.extend(self.children[v].iter().rev().copied());
        }
        out
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.node_count()).filter(|&v| self.is_leaf(v)).collect()
    }

    pub fn subtree_nodes(&self, v: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children[u].iter().rev().copied());
        }
        out
    }

    /// Sum of edge lengths strictly inside the subtree rooted at `v`.
    pub fn subtree_persistence(&self, v: NodeId) -> f64 {
        self.subtree_nodes(v)
            .into_iter()
            .filter(|&u| u != v)
            .map(|u| self.up_edge_length(u).expect("non-root inside subtree"))
            .sum()
    }

    /// Re-checks the invariants on the current state.
    pub fn validate(&self) -> Vec<Violation> {
        validate_records(&self.to_data().nodes)
    }

    pub fn edge_lengths(&self) -> EdgeLengthView {
        let n = self.node_count();
        let mut lengths = vec![0.0; n];
        for v in 0..n {
            if let Some(l) = self.up_edge_length(v) {
                lengths[v] = l;
            }
        }
        EdgeLengthView {
            root: self.root,
            root_scalar: self.scalars[self.root],
            parent: self.parent.clone(),
            lengths,
        }
    }

    /// Order-insensitive identity: two trees get the same signature exactly
    /// when they are isomorphic with bit-equal edge lengths.
    pub fn canonical_signature(&self) -> String {
        fn sig(t: &AbstractMergeTree, v: NodeId) -> String {
            let mut parts: Vec<String> = t
                .children(v)
                .iter()
                .map(|&c| {
                    let len = t.scalar(c) - t.scalar(v);
                    format!("{:016x}{}", len.to_bits(), sig(t, c))
                })
                .collect();
            parts.sort();
            format!("({})", parts.join(","))
        }
        sig(self, self.root)
    }

    /// Contracts every inner edge shorter than `eps` times the scalar range,
    /// repeating until none remains. Contraction removes the child node and
    /// reattaches its subtrees to the parent with edge lengths preserved, so
    /// total persistence drops by exactly the contracted length. Edges whose
    /// parent is the root are kept: removing one would give the root more
    /// than one child. Smallest child id goes first.
    pub fn epsilon_collapse(&self, eps: f64) -> Result<Self, TreeError> {
        if !(eps >= 0.0 && eps < 1.0) {
            return Err(TreeError::InvalidEpsilon(eps));
        }
        let threshold = eps * self.scalar_range();
        let n = self.node_count();
        let mut scalars = self.scalars.clone();
        let mut parent = self.parent.clone();
        let mut children = self.children.clone();
        let mut alive = vec![true; n];

        loop {
            let mut pick: Option<(NodeId, f64)> = None;
            for c in 0..n {
                if !alive[c] || children[c].is_empty() {
                    continue;
                }
                let p = match parent[c] {
                    Some(p) if p != self.root => p,
                    _ => continue,
                };
                let len = scalars[c] - scalars[p];
                if len < threshold {
                    pick = Some((c, len));
                    break; // ascending scan, so this is the lowest child id
                }
            }
            let (c, len) = match pick {
                Some(x) => x,
                None => break,
            };
            let p = parent[c].expect("candidate has a parent");
            // Shift the strict descendants of c down; their mutual edge
            // lengths and their new edges into p keep the old values.
            let mut stack: Vec<NodeId> = children[c].clone();
            while let Some(x) = stack.pop() {
                scalars[x] -= len;
                stack.extend(children[x].iter().copied());
            }
            let moved = std::mem::take(&mut children[c]);
            for &x in &moved {
                parent[x] = Some(p);
            }
            children[p].retain(|&x| x != c);
            children[p].extend(moved);
            children[p].sort_unstable();
            alive[c] = false;
            // p gained at least one child net, so no degree repair is needed.
            debug_assert!(children[p].len() >= 2 || p == self.root);
        }

        rebuild_dense(&scalars, &parent, &alive)
    }

    /// Removes leaf edges shorter than `tau` until none remains, shortest
    /// first with ties going to the lowest child id. A parent left with a
    /// single child is dissolved so the two edges merge; the tree can shrink
    /// down to `bot`.
    pub fn leaf_simplify(&self, tau: f64) -> Self {
        let n = self.node_count();
        let mut parent = self.parent.clone();
        let mut children = self.children.clone();
        let mut alive = vec![true; n];
        let scalars = &self.scalars;

        loop {
            let mut pick: Option<(f64, NodeId)> = None;
            for v in 0..n {
                if !alive[v] || v == self.root || !children[v].is_empty() {
                    continue;
                }
                let p = parent[v].expect("non-root");
                let len = scalars[v] - scalars[p];
                if len < tau {
                    let better = match pick {
                        None => true,
                        Some((best, _)) => len < best,
                    };
                    if better {
                        pick = Some((len, v));
                    }
                }
            }
            let (_, v) = match pick {
                Some(x) => x,
                None => break,
            };
            let p = parent[v].expect("non-root");
            alive[v] = false;
            children[p].retain(|&x| x != v);
            if p != self.root && children[p].len() == 1 {
                // Dissolve p: its remaining child keeps its scalar, so the
                // two edges merge into one of summed length.
                let only = children[p][0];
                let gp = parent[p].expect("inner node has a parent");
                parent[only] = Some(gp);
                let slot = children[gp].iter().position(|&x| x == p).expect("child link");
                children[gp][slot] = only;
                children[gp].sort_unstable();
                alive[p] = false;
            }
        }

        rebuild_dense(scalars, &parent, &alive).expect("leaf simplification preserves validity")
    }
}

/// Re-densifies ids after node removals; survivors keep their relative order.
fn rebuild_dense(
    scalars: &[f64],
    parent: &[Option<NodeId>],
    alive: &[bool],
) -> Result<AbstractMergeTree, TreeError> {
    let mut new_id = vec![usize::MAX; scalars.len()];
    let mut next = 0;
    for v in 0..scalars.len() {
        if alive[v] {
            new_id[v] = next;
            next += 1;
        }
    }
    let mut records = Vec::with_capacity(next);
    for v in 0..scalars.len() {
        if alive[v] {
            records.push(TreeNodeRecord {
                id: new_id[v],
                scalar: scalars[v],
                parent: parent[v].map(|p| {
                    debug_assert!(alive[p], "parent of a survivor must survive");
                    new_id[p]
                }),
            });
        }
    }
    AbstractMergeTree::from_records(&records)
}

/// Shape plus per-edge lengths, an alternative coordinate system for the
/// same tree; `lengths[root]` is zero by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLengthView {
    pub root: NodeId,
    pub root_scalar: f64,
    pub parent: Vec<Option<NodeId>>,
    pub lengths: Vec<f64>,
}

/// Rebuilds scalars from edge lengths by prefix sums from the root.
/// Every non-root length must be strictly positive.
pub fn scalars_from_lengths(view: &EdgeLengthView) -> Result<AbstractMergeTree, TreeError> {
    let n = view.parent.len();
    if view.lengths.len() != n {
        return Err(TreeError::Invalid(vec![Violation::Empty]));
    }
    for v in 0..n {
        if v != view.root && !(view.lengths[v] > 0.0) {
            return Err(TreeError::NonPositiveLength { child: v, length: view.lengths[v] });
        }
    }
    let mut scalars = vec![f64::NAN; n];
    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for v in 0..n {
        if let Some(p) = view.parent[v] {
            if p >= n {
                return Err(TreeError::Invalid(vec![Violation::ParentOutOfRange {
                    id: v,
                    parent: p,
                }]));
            }
            children[p].push(v);
        }
    }
    scalars[view.root] = view.root_scalar;
    let mut stack = vec![view.root];
    while let Some(v) = stack.pop() {
        for &c in &children[v] {
            scalars[c] = scalars[v] + view.lengths[c];
            stack.push(c);
        }
    }
    let records: Vec<TreeNodeRecord> = (0..n)
        .map(|id| TreeNodeRecord { id, scalar: scalars[id], parent: view.parent[id] })
        .collect();
    AbstractMergeTree::from_records(&records)
}

/// A root-to-leaf-directed path: at least two vertices, each the parent of
/// the next.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreePath {
    pub vertices: Vec<NodeId>,
}

impl TreePath {
    pub fn start(&self) -> NodeId {
        self.vertices[0]
    }

    pub fn end(&self) -> NodeId {
        *self.vertices.last().expect("paths are non-empty")
    }

    /// Scalar drop across the whole path.
    pub fn length_in(&self, tree: &AbstractMergeTree) -> f64 {
        tree.scalar(self.end()) - tree.scalar(self.start())
    }
}

/// All downward paths with at least two vertices, ordered by (start, end).
pub fn enumerate_paths(tree: &AbstractMergeTree) -> Vec<TreePath> {
    let mut out = Vec::new();
    for end in 0..tree.node_count() {
        let mut chain = vec![end];
        let mut cur = end;
        while let Some(p) = tree.parent(cur) {
            chain.push(p);
            let mut vertices = chain.clone();
            vertices.reverse();
            out.push(TreePath { vertices });
            cur = p;
        }
    }
    out.sort_by_key(|p| (p.start(), p.end()));
    out
}

/// Counts strict ancestor/descendant pairs through an explicit reachability
/// matrix; used as an independent check on path enumeration.
pub fn path_count_oracle(tree: &AbstractMergeTree) -> usize {
    let n = tree.node_count();
    let mut anc = vec![vec![false; n]; n];
    for v in 0..n {
        let mut cur = v;
        while let Some(p) = tree.parent(cur) {
            anc[p][v] = true;
            cur = p;
        }
    }
    anc.iter().map(|row| row.iter().filter(|&&b| b).count()).sum()
}

/// Incremental construction helper for generators and tests.
#[derive(Debug, Default)]
pub struct TreeBuilder {
    records: Vec<TreeNodeRecord>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn root(&mut self, scalar: f64) -> NodeId {
        debug_assert!(self.records.is_empty(), "root must be the first node");
        self.records.push(TreeNodeRecord { id: 0, scalar, parent: None });
        0
    }

    pub fn child(&mut self, parent: NodeId, scalar: f64) -> NodeId {
        let id = self.records.len();
        self.records.push(TreeNodeRecord { id, scalar, parent: Some(parent) });
        id
    }

    pub fn build(self) -> Result<AbstractMergeTree, TreeError> {
        AbstractMergeTree::from_records(&self.records)
    }
}

pub fn tree_from_json_str(s: &str) -> Result<AbstractMergeTree, LoadError> {
    let data: TreeData = serde_json::from_str(s).map_err(|e| LoadError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(AbstractMergeTree::from_data(&data)?)
}

pub fn tree_to_json_string(tree: &AbstractMergeTree) -> String {
    serde_json::to_string_pretty(&tree.to_data()).expect("tree serialization cannot fail")
}

pub fn load_tree(path: &Path) -> Result<AbstractMergeTree, LoadError> {
    let text = std::fs::read_to_string(path)?;
    tree_from_json_str(&text)
}

pub fn save_tree(tree: &AbstractMergeTree, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, tree_to_json_string(tree) + "\n")
}
