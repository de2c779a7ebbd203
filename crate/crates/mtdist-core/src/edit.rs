//! Edit operations, edit mappings, and the mapping cost formula.
//!
//! An edit mapping pairs nodes of two trees one-to-one, preserving strict
//! ancestor order in both directions and always pairing the roots. Unmapped
//! nodes are classified by how many of their child directions still lead to
//! a mapped node: exactly one means the node dissolves for free (pruned),
//! anything else means its up-edge is paid for (charged). The cost of a
//! mapping sums relabel terms over mapped pairs and the run lengths of
//! charged nodes, where a run extends an up-edge through consecutive pruned
//! ancestors.

use crate::solve::{SolveResult, SolveStats, SolveStatus};
use crate::tree::{AbstractMergeTree, NodeId, TreeNodeRecord};

/// Default node cap for exhaustive mapping enumeration.
pub const ORACLE_NODE_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum EditOperation {
    /// Sets the length of the edge above `child`; the subtree below keeps
    /// its internal edge lengths.
    Relabel { child: NodeId, new_length: f64 },
    /// Contracts the edge above `child`. The child's subtrees reattach to
    /// the parent with their edge lengths kept; a parent left with a single
    /// child dissolves so the adjacent edges merge.
    Contract { child: NodeId },
    /// Grows a new leaf under `parent`.
    InsertLeaf { parent: NodeId, length: f64 },
    /// Splits the edge above `child` at `offset_from_parent` below its
    /// parent and hangs a new leaf off the split node.
    InsertSplit { child: NodeId, offset_from_parent: f64, leaf_length: f64 },
    /// Interposes a new node below `parent` and moves `moved_children`
    /// (at least two, not all) onto it, their subtrees shifting up so edge
    /// lengths are preserved.
    InsertInner { parent: NodeId, moved_children: Vec<NodeId>, length: f64 },
}

#[derive(Debug, thiserror::Error)]
pub enum EditError {
    #[error("node {0} out of range")]
    NodeOutOfRange(NodeId),
    #[error("operation targets the root, which has no up-edge")]
    RootHasNoUpEdge,
    #[error("length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("contracting the root edge requires a leaf child, node {child} has {children} children")]
    ContractRootInnerChild { child: NodeId, children: usize },
    #[error("cannot insert a leaf under leaf node {parent}")]
    InsertUnderLeaf { parent: NodeId },
    #[error("cannot insert a second child under the root")]
    InsertUnderRoot,
    #[error("split offset {offset} must lie strictly inside the edge of length {edge}")]
    BadSplitOffset { offset: f64, edge: f64 },
    #[error("moved children invalid: {0}")]
    BadMovedChildren(&'static str),
}

/// Result of applying one operation: the new tree, the operation cost, and
/// the id translation (survivors are renumbered densely in old id order,
/// created nodes appended at the end).
#[derive(Debug, Clone)]
pub struct EditOutcome {
    pub tree: AbstractMergeTree,
    pub cost: f64,
    /// `id_map[old] = Some(new)` for surviving nodes.
    pub id_map: Vec<Option<NodeId>>,
    pub new_ids: Vec<NodeId>,
}

fn check_length(len: f64) -> Result<(), EditError> {
    if len.is_finite() && len > 0.0 {
        Ok(())
    } else {
        Err(EditError::BadLength(len))
    }
}

pub fn apply_edit(tree: &AbstractMergeTree, op: &EditOperation) -> Result<EditOutcome, EditError> {
    let n = tree.node_count();
    let in_range = |v: NodeId| if v < n { Ok(()) } else { Err(EditError::NodeOutOfRange(v)) };

    match *op {
        EditOperation::Relabel { child, new_length } => {
            in_range(child)?;
            check_length(new_length)?;
            let old = tree.up_edge_length(child).ok_or(EditError::RootHasNoUpEdge)?;
            let delta = new_length - old;
            let mut records = tree.to_data().nodes;
            for v in tree.subtree_nodes(child) {
                records[v].scalar += delta;
            }
            let new_tree = AbstractMergeTree::from_records(&records)
                .expect("relabel preserves validity");
            Ok(EditOutcome {
                tree: new_tree,
                cost: (new_length - old).abs(),
                id_map: (0..n).map(Some).collect(),
                new_ids: vec![],
            })
        }

        EditOperation::Contract { child } => {
            in_range(child)?;
            let p = tree.parent(child).ok_or(EditError::RootHasNoUpEdge)?;
            let len = tree.scalar(child) - tree.scalar(p);
            let child_children = tree.children(child).to_vec();
            if tree.is_root(p) && !child_children.is_empty() {
                return Err(EditError::ContractRootInnerChild {
                    child,
                    children: child_children.len(),
                });
            }
            let mut scalars: Vec<f64> = (0..n).map(|v| tree.scalar(v)).collect();
            let mut parent: Vec<Option<NodeId>> = (0..n).map(|v| tree.parent(v)).collect();
            let mut alive = vec![true; n];

            // Reattach the child's subtrees, shifted down so their edge
            // lengths survive the contraction.
            for &x in &child_children {
                parent[x] = Some(p);
            }
            let mut stack = child_children.clone();
            while let Some(x) = stack.pop() {
                scalars[x] -= len;
                stack.extend(tree.children(x).iter().copied());
            }
            alive[child] = false;

            // A non-root parent left with one child dissolves; the adjacent
            // edges merge because the remaining child keeps its scalar.
            let remaining: Vec<NodeId> = (0..n)
                .filter(|&x| alive[x] && parent[x] == Some(p))
                .collect();
            if !tree.is_root(p) && remaining.len() == 1 {
                let only = remaining[0];
                parent[only] = parent[p];
                alive[p] = false;
            }

            let (records, id_map) = densify(&scalars, &parent, &alive);
            let new_tree = AbstractMergeTree::from_records(&records)
                .expect("contraction preserves validity");
            Ok(EditOutcome { tree: new_tree, cost: len, id_map, new_ids: vec![] })
        }

        EditOperation::InsertLeaf { parent, length } => {
            in_range(parent)?;
            check_length(length)?;
            if tree.is_leaf(parent) {
                return Err(EditError::InsertUnderLeaf { parent });
            }
            if tree.is_root(parent) && !tree.children(parent).is_empty() {
                return Err(EditError::InsertUnderRoot);
            }
            let mut records = tree.to_data().nodes;
            records.push(TreeNodeRecord {
                id: n,
                scalar: tree.scalar(parent) + length,
                parent: Some(parent),
            });
            let new_tree =
                AbstractMergeTree::from_records(&records).expect("leaf insertion preserves validity");
            Ok(EditOutcome {
                tree: new_tree,
                cost: length,
                id_map: (0..n).map(Some).collect(),
                new_ids: vec![n],
            })
        }

        EditOperation::InsertSplit { child, offset_from_parent, leaf_length } => {
            in_range(child)?;
            check_length(leaf_length)?;
            let p = tree.parent(child).ok_or(EditError::RootHasNoUpEdge)?;
            let edge = tree.scalar(child) - tree.scalar(p);
            if !(offset_from_parent > 0.0 && offset_from_parent < edge) {
                return Err(EditError::BadSplitOffset { offset: offset_from_parent, edge });
            }
            let split_scalar = tree.scalar(p) + offset_from_parent;
            let mut records = tree.to_data().nodes;
            let split = n;
            let leaf = n + 1;
            records[child].parent = Some(split);
            records.push(TreeNodeRecord { id: split, scalar: split_scalar, parent: Some(p) });
            records.push(TreeNodeRecord {
                id: leaf,
                scalar: split_scalar + leaf_length,
                parent: Some(split),
            });
            let new_tree =
                AbstractMergeTree::from_records(&records).expect("split insertion preserves validity");
            Ok(EditOutcome {
                tree: new_tree,
                cost: leaf_length,
                id_map: (0..n).map(Some).collect(),
                new_ids: vec![split, leaf],
            })
        }

        EditOperation::InsertInner { parent, ref moved_children, length } => {
            in_range(parent)?;
            check_length(length)?;
            let kids = tree.children(parent);
            if moved_children.len() < 2 {
                return Err(EditError::BadMovedChildren("need at least two children to move"));
            }
            if moved_children.len() >= kids.len() {
                return Err(EditError::BadMovedChildren(
                    "at least one child must stay with the parent",
                ));
            }
            let mut seen = std::collections::HashSet::new();
            for &c in moved_children {
                if !kids.contains(&c) {
                    return Err(EditError::BadMovedChildren("not a child of the parent"));
                }
                if !seen.insert(c) {
                    return Err(EditError::BadMovedChildren("duplicate child"));
                }
            }
            let mut records = tree.to_data().nodes;
            let new_node = n;
            // Moved subtrees shift up by the new edge length so every old
            // edge keeps its length below the interposed node.
            for &c in moved_children {
                records[c].parent = Some(new_node);
                for v in tree.subtree_nodes(c) {
                    records[v].scalar += length;
                }
            }
            records.push(TreeNodeRecord {
                id: new_node,
                scalar: tree.scalar(parent) + length,
                parent: Some(parent),
            });
            let new_tree =
                AbstractMergeTree::from_records(&records).expect("inner insertion preserves validity");
            Ok(EditOutcome {
                tree: new_tree,
                cost: length,
                id_map: (0..n).map(Some).collect(),
                new_ids: vec![new_node],
            })
        }
    }
}

fn densify(
    scalars: &[f64],
    parent: &[Option<NodeId>],
    alive: &[bool],
) -> (Vec<TreeNodeRecord>, Vec<Option<NodeId>>) {
    let n = scalars.len();
    let mut id_map = vec![None; n];
    let mut next = 0;
    for v in 0..n {
        if alive[v] {
            id_map[v] = Some(next);
            next += 1;
        }
    }
    let mut records = Vec::with_capacity(next);
    for v in 0..n {
        if alive[v] {
            // Hop over dissolved ancestors to the nearest surviving one.
            let mut p = parent[v];
            while let Some(q) = p {
                if alive[q] {
                    break;
                }
                p = parent[q];
            }
            records.push(TreeNodeRecord {
                id: id_map[v].unwrap(),
                scalar: scalars[v],
                parent: p.map(|q| id_map[q].unwrap()),
            });
        }
    }
    (records, id_map)
}

/// Applies `ops` in order, summing their costs.
pub fn sequence_cost(
    tree: &AbstractMergeTree,
    ops: &[EditOperation],
) -> Result<(f64, AbstractMergeTree), EditError> {
    let mut current = tree.clone();
    let mut total = 0.0;
    for op in ops {
        let out = apply_edit(&current, op)?;
        total += out.cost;
        current = out.tree;
    }
    Ok((total, current))
}

/// One-to-one node correspondence, stored as sorted `(first, second)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditMapping {
    pairs: Vec<(NodeId, NodeId)>,
}

impl EditMapping {
    pub fn new(mut pairs: Vec<(NodeId, NodeId)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        EditMapping { pairs }
    }

    pub fn pairs(&self) -> &[(NodeId, NodeId)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Swaps the two sides.
    pub fn transposed(&self) -> EditMapping {
        EditMapping::new(self.pairs.iter().map(|&(a, b)| (b, a)).collect())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MappingError {
    #[error("node {id} out of range in tree {side}")]
    OutOfRange { side: u8, id: NodeId },
    #[error("node {id} of tree {side} is mapped twice")]
    MappedTwice { side: u8, id: NodeId },
    #[error("roots must be mapped to each other")]
    RootsNotPaired,
    #[error("pairs ({0}, {1}) and ({2}, {3}) disagree on ancestor order")]
    AncestorOrderViolated(NodeId, NodeId, NodeId, NodeId),
}

pub fn validate_mapping(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    mapping: &EditMapping,
) -> Result<(), MappingError> {
    let pairs = mapping.pairs();
    let mut used1 = vec![false; t1.node_count()];
    let mut used2 = vec![false; t2.node_count()];
    for &(a, b) in pairs {
        if a >= t1.node_count() {
            return Err(MappingError::OutOfRange { side: 1, id: a });
        }
        if b >= t2.node_count() {
            return Err(MappingError::OutOfRange { side: 2, id: b });
        }
        if std::mem::replace(&mut used1[a], true) {
            return Err(MappingError::MappedTwice { side: 1, id: a });
        }
        if std::mem::replace(&mut used2[b], true) {
            return Err(MappingError::MappedTwice { side: 2, id: b });
        }
    }
    let root_pair_ok = pairs.iter().any(|&(a, b)| a == t1.root() && b == t2.root());
    let root_misused = pairs
        .iter()
        .any(|&(a, b)| (a == t1.root()) != (b == t2.root()));
    if !root_pair_ok || root_misused {
        return Err(MappingError::RootsNotPaired);
    }
    for (i, &(a, b)) in pairs.iter().enumerate() {
        for &(x, y) in &pairs[i + 1..] {
            let down = t1.is_strict_ancestor(a, x);
            let up = t1.is_strict_ancestor(x, a);
            if down != t2.is_strict_ancestor(b, y) || up != t2.is_strict_ancestor(y, b) {
                return Err(MappingError::AncestorOrderViolated(a, b, x, y));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Mapped,
    /// Unmapped with exactly one child direction leading to a mapped node;
    /// dissolves for free.
    Pruned,
    /// Unmapped with zero or several such directions; its run is paid for.
    Charged,
}

impl NodeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeStatus::Mapped => "mapped",
            NodeStatus::Pruned => "pruned",
            NodeStatus::Charged => "charged",
        }
    }
}

/// Classifies every node of `tree` given which ones are mapped.
pub fn classify_unmapped(tree: &AbstractMergeTree, mapped: &[bool]) -> Vec<NodeStatus> {
    let n = tree.node_count();
    let has_mapped = subtree_has_mapped(tree, mapped);
    (0..n)
        .map(|v| {
            if mapped[v] {
                NodeStatus::Mapped
            } else {
                let surviving = tree.children(v).iter().filter(|&&c| has_mapped[c]).count();
                if surviving == 1 {
                    NodeStatus::Pruned
                } else {
                    NodeStatus::Charged
                }
            }
        })
        .collect()
}

/// `out[v]` is true when the subtree rooted at `v` contains a mapped node.
fn subtree_has_mapped(tree: &AbstractMergeTree, mapped: &[bool]) -> Vec<bool> {
    let n = tree.node_count();
    let mut out = vec![false; n];
    let order = tree.preorder();
    for &v in order.iter().rev() {
        out[v] = mapped[v] || tree.children(v).iter().any(|&c| out[c]);
    }
    out
}

/// Cost of a mapping, split by contribution class. `total` is the canonical
/// value: contributions are summed in sorted order, which makes the result
/// invariant under transposing the mapping.
#[derive(Debug, Clone)]
pub struct MappingCostBreakdown {
    pub total: f64,
    pub relabel_total: f64,
    pub deleted_total_t1: f64,
    pub inserted_total_t2: f64,
    pub status_t1: Vec<NodeStatus>,
    pub status_t2: Vec<NodeStatus>,
    /// Run lengths for non-root mapped and charged nodes.
    pub runs_t1: Vec<Option<f64>>,
    pub runs_t2: Vec<Option<f64>>,
}

fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.iter().sum()
}

/// Runs for all non-root mapped or charged nodes. A run climbs from the
/// node through consecutive pruned ancestors, but only while the node lies
/// in the ancestor's surviving direction; it is the scalar drop from the
/// last ancestor's parent down to the node.
fn compute_runs(
    tree: &AbstractMergeTree,
    status: &[NodeStatus],
    has_mapped: &[bool],
) -> Vec<Option<f64>> {
    let n = tree.node_count();
    let mut runs = vec![None; n];
    for v in 0..n {
        if tree.is_root(v) || status[v] == NodeStatus::Pruned {
            continue;
        }
        let mut cur = v;
        let mut top = tree.parent(v).expect("non-root");
        while status[top] == NodeStatus::Pruned && has_mapped[cur] {
            cur = top;
            top = tree.parent(top).expect("pruned nodes are never the root");
        }
        runs[v] = Some(tree.scalar(v) - tree.scalar(top));
    }
    runs
}

fn cost_core(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    mapping: &EditMapping,
) -> MappingCostBreakdown {
    let mut mapped1 = vec![false; t1.node_count()];
    let mut mapped2 = vec![false; t2.node_count()];
    for &(a, b) in mapping.pairs() {
        mapped1[a] = true;
        mapped2[b] = true;
    }
    let has_mapped1 = subtree_has_mapped(t1, &mapped1);
    let has_mapped2 = subtree_has_mapped(t2, &mapped2);
    let status_t1 = classify_unmapped(t1, &mapped1);
    let status_t2 = classify_unmapped(t2, &mapped2);
    let runs_t1 = compute_runs(t1, &status_t1, &has_mapped1);
    let runs_t2 = compute_runs(t2, &status_t2, &has_mapped2);

    let mut relabels = Vec::new();
    for &(a, b) in mapping.pairs() {
        if a != t1.root() {
            let ra = runs_t1[a].expect("mapped non-root has a run");
            let rb = runs_t2[b].expect("mapped non-root has a run");
            relabels.push((ra - rb).abs());
        }
    }
    let charged1: Vec<f64> = (0..t1.node_count())
        .filter(|&v| status_t1[v] == NodeStatus::Charged)
        .map(|v| runs_t1[v].expect("charged nodes have runs"))
        .collect();
    let charged2: Vec<f64> = (0..t2.node_count())
        .filter(|&v| status_t2[v] == NodeStatus::Charged)
        .map(|v| runs_t2[v].expect("charged nodes have runs"))
        .collect();

    let mut all = relabels.clone();
    all.extend_from_slice(&charged1);
    all.extend_from_slice(&charged2);

    MappingCostBreakdown {
        total: sorted_sum(all),
        relabel_total: sorted_sum(relabels),
        deleted_total_t1: sorted_sum(charged1),
        inserted_total_t2: sorted_sum(charged2),
        status_t1,
        status_t2,
        runs_t1,
        runs_t2,
    }
}

pub fn mapping_cost(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    mapping: &EditMapping,
) -> Result<MappingCostBreakdown, MappingError> {
    validate_mapping(t1, t2, mapping)?;
    Ok(cost_core(t1, t2, mapping))
}

/// Cost without the validity check, for callers that construct mappings
/// pair by pair and keep them valid by construction.
pub(crate) fn mapping_cost_unchecked(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    mapping: &EditMapping,
) -> MappingCostBreakdown {
    debug_assert!(validate_mapping(t1, t2, mapping).is_ok());
    cost_core(t1, t2, mapping)
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("exhaustive search is limited to {cap} nodes per tree, got {nodes}")]
    TooLarge { nodes: usize, cap: usize },
}

fn ancestor_matrix(t: &AbstractMergeTree) -> Vec<Vec<bool>> {
    let n = t.node_count();
    let mut anc = vec![vec![false; n]; n];
    for v in 0..n {
        let mut cur = v;
        while let Some(p) = t.parent(cur) {
            anc[p][v] = true;
            cur = p;
        }
    }
    anc
}

fn enumerate_mappings_inner<F: FnMut(&[(NodeId, NodeId)])>(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    visit: &mut F,
) {
    let anc1 = ancestor_matrix(t1);
    let anc2 = ancestor_matrix(t2);
    let nodes1: Vec<NodeId> = (0..t1.node_count()).filter(|&v| v != t1.root()).collect();
    let nodes2: Vec<NodeId> = (0..t2.node_count()).filter(|&v| v != t2.root()).collect();

    struct Rec<'a, F> {
        anc1: &'a [Vec<bool>],
        anc2: &'a [Vec<bool>],
        nodes1: &'a [NodeId],
        nodes2: &'a [NodeId],
        used2: Vec<bool>,
        chosen: Vec<(NodeId, NodeId)>,
        visit: &'a mut F,
    }

    impl<F: FnMut(&[(NodeId, NodeId)])> Rec<'_, F> {
        fn go(&mut self, idx: usize) {
            if idx == self.nodes1.len() {
                (self.visit)(&self.chosen);
                return;
            }
            let u = self.nodes1[idx];
            // Deleting u is always an option.
            self.go(idx + 1);
            for &v in self.nodes2 {
                if self.used2[v] {
                    continue;
                }
                let consistent = self.chosen.iter().all(|&(x, y)| {
                    self.anc1[x][u] == self.anc2[y][v] && self.anc1[u][x] == self.anc2[v][y]
                });
                if !consistent {
                    continue;
                }
                self.used2[v] = true;
                self.chosen.push((u, v));
                self.go(idx + 1);
                self.chosen.pop();
                self.used2[v] = false;
            }
        }
    }

    let mut rec = Rec {
        anc1: &anc1,
        anc2: &anc2,
        nodes1: &nodes1,
        nodes2: &nodes2,
        used2: vec![false; t2.node_count()],
        chosen: Vec::new(),
        visit: &mut *visit,
    };
    rec.go(0);
}

/// Every valid mapping between the two trees (roots always included).
/// Only intended for small trees; the count grows super-exponentially.
pub fn enumerate_valid_mappings(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
) -> Vec<EditMapping> {
    let mut out = Vec::new();
    enumerate_mappings_inner(t1, t2, &mut |chosen| {
        let mut pairs = chosen.to_vec();
        pairs.push((t1.root(), t2.root()));
        out.push(EditMapping::new(pairs));
    });
    out
}

/// Exhaustive minimum over all valid mappings. Ties resolve to the
/// lexicographically smallest sorted pair list, making the witness
/// deterministic.
pub fn brute_force_distance(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    max_nodes: usize,
) -> Result<SolveResult, OracleError> {
    for t in [t1, t2] {
        if t.node_count() > max_nodes {
            return Err(OracleError::TooLarge { nodes: t.node_count(), cap: max_nodes });
        }
    }
    let started = std::time::Instant::now();
    let mut best: Option<(f64, EditMapping)> = None;
    let mut evaluated: u64 = 0;
    enumerate_mappings_inner(t1, t2, &mut |chosen| {
        let mut pairs = chosen.to_vec();
        pairs.push((t1.root(), t2.root()));
        let mapping = EditMapping::new(pairs);
        let cost = mapping_cost_unchecked(t1, t2, &mapping).total;
        evaluated += 1;
        let replace = match &best {
            None => true,
            Some((c, m)) => match cost.total_cmp(c) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Equal => mapping.pairs() < m.pairs(),
                std::cmp::Ordering::Greater => false,
            },
        };
        if replace {
            best = Some((cost, mapping));
        }
    });
    let (value, witness) = best.expect("the root-only mapping always exists");
    Ok(SolveResult {
        value,
        status: SolveStatus::Optimal,
        witness: Some(witness),
        lower_bound: value,
        stats: SolveStats {
            nodes_expanded: evaluated,
            wall: started.elapsed(),
            iterations: 1,
        },
        log: Vec::new(),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum SkeletonError {
    #[error(transparent)]
    Edit(#[from] EditError),
    /// The operation set cannot express deleting a node whose removal would
    /// dissolve a kept neighbour; the cost formula still covers such
    /// mappings as limits of sequences.
    #[error("deleting node {node} would dissolve a kept node")]
    DissolvesKeptNode { node: NodeId },
}

/// Contracts away every non-kept node, deepest first, and reports the final
/// tree, the summed contraction cost, and where each original node ended up.
pub fn reduce_to_kept_skeleton(
    tree: &AbstractMergeTree,
    keep: &[bool],
) -> Result<(AbstractMergeTree, f64, Vec<Option<NodeId>>), SkeletonError> {
    assert_eq!(keep.len(), tree.node_count());
    let mut current = tree.clone();
    // track[orig] = current id.
    let mut track: Vec<Option<NodeId>> = (0..tree.node_count()).map(Some).collect();
    let mut total = 0.0;
    loop {
        // Deepest not-kept node still alive; ties to the lowest current id.
        let mut pick: Option<(usize, NodeId, NodeId)> = None;
        for orig in 0..tree.node_count() {
            if keep[orig] {
                continue;
            }
            if let Some(cur) = track[orig] {
                let d = current.depth(cur);
                let better = match pick {
                    None => true,
                    Some((bd, bcur, _)) => d > bd || (d == bd && cur < bcur),
                };
                if better {
                    pick = Some((d, cur, orig));
                }
            }
        }
        let (_, cur, _) = match pick {
            Some(x) => x,
            None => break,
        };
        let p = current.parent(cur).expect("only the root is kept unconditionally");
        let contracts_leaf = current.children(cur).is_empty();
        if contracts_leaf && !current.is_root(p) && current.children(p).len() == 2 {
            let kept_parent = track
                .iter()
                .enumerate()
                .any(|(orig, &c)| c == Some(p) && keep[orig]);
            if kept_parent {
                return Err(SkeletonError::DissolvesKeptNode { node: cur });
            }
        }
        let out = apply_edit(&current, &EditOperation::Contract { child: cur })?;
        total += out.cost;
        for slot in track.iter_mut() {
            *slot = slot.and_then(|c| out.id_map[c]);
        }
        current = out.tree;
    }
    Ok((current, total, track))
}
