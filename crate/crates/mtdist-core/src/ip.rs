//! Binary-program encoding of the distance. One mapping variable per
//! admissible node pair, deletion and survival indicators per node, run
//! activation per downward path, and a joint variable per path pair that
//! collects the persistence overlap in the objective. The encoding is
//! exact: feasible assignments correspond to valid edit mappings, and the
//! optimum equals the distance.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::edit::{classify_unmapped, enumerate_valid_mappings, EditMapping, NodeStatus};
use crate::solve::{
    bounded_lower_bound, complement_above, greedy_mapping, strict_ancestors,
    subtree_persistences, subtree_sizes, wrapped_subtree, BackendKind, Limits, ReencodeEntry,
    SolveError, SolveResult, SolveStats, SolveStatus,
};
use crate::tree::{enumerate_paths, AbstractMergeTree, NodeId, TreePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    One,
    Two,
}

/// What a variable stands for. Ends and starts reference node ids of the
/// respective tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    /// Node `v` of tree one maps to node `u` of tree two.
    MapPair { v: NodeId, u: NodeId },
    /// The node is unmapped.
    Deleted { side: Side, node: NodeId },
    /// The node is unmapped and its whole subtree is unmapped.
    SubtreeDeleted { side: Side, node: NodeId },
    /// At least two child directions of the node contain mapped nodes.
    Branching { side: Side, node: NodeId },
    /// The node is unmapped with exactly one surviving direction.
    Pruned { side: Side, node: NodeId },
    /// The run of the mapped end covers exactly this path.
    RunActive { side: Side, start: NodeId, end: NodeId },
    /// Both runs are active and their ends map to each other.
    RunPair { start1: NodeId, end1: NodeId, start2: NodeId, end2: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl Cmp {
    fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IpVariable {
    pub name: String,
    pub role: VarRole,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub label: String,
    /// (variable index, coefficient) pairs, unique indices.
    pub terms: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// A binary minimization program. Variables and constraints keep their
/// construction order, which is deterministic for a given input pair and
/// configuration, so two encodes of the same instance are identical.
#[derive(Debug, Clone)]
pub struct IpInstance {
    pub name: String,
    pub variables: Vec<IpVariable>,
    pub constraints: Vec<LinearConstraint>,
    /// Added to the weighted variable sum when evaluating the objective.
    pub objective_constant: f64,
    index: HashMap<String, usize>,
}

impl IpInstance {
    pub fn new(name: &str) -> Self {
        IpInstance {
            name: name.to_string(),
            variables: Vec::new(),
            constraints: Vec::new(),
            objective_constant: 0.0,
            index: HashMap::new(),
        }
    }

    fn add_variable(&mut self, name: String, role: VarRole, objective: f64) -> usize {
        assert!(name.len() <= 8, "variable name too long: {name}");
        let id = self.variables.len();
        let prev = self.index.insert(name.clone(), id);
        assert!(prev.is_none(), "duplicate variable name: {name}");
        self.variables.push(IpVariable { name, role, objective });
        id
    }

    fn add_constraint(&mut self, terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        let label = format!("r{}", self.constraints.len());
        self.constraints.push(LinearConstraint { label, terms, cmp, rhs });
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_value(&self, assignment: &[f64]) -> f64 {
        let mut v = self.objective_constant;
        for (i, var) in self.variables.iter().enumerate() {
            v += var.objective * assignment[i];
        }
        v
    }

    /// Checks every constraint; returns the label of the first violated
    /// one. Tolerance 1e-6 absorbs solver round-off in imported values.
    pub fn check_feasible(&self, assignment: &[f64]) -> Result<(), String> {
        const TOL: f64 = 1e-6;
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(i, w)| w * assignment[i]).sum();
            let ok = match c.cmp {
                Cmp::Le => lhs <= c.rhs + TOL,
                Cmp::Ge => lhs >= c.rhs - TOL,
                Cmp::Eq => (lhs - c.rhs).abs() <= TOL,
            };
            if !ok {
                return Err(c.label.clone());
            }
        }
        Ok(())
    }

    /// Variables that appear in no constraint and carry no objective
    /// weight; the encoder is expected to produce none.
    pub fn unused_variables(&self) -> Vec<String> {
        let mut used = vec![false; self.variables.len()];
        for c in &self.constraints {
            for &(i, _) in &c.terms {
                used[i] = true;
            }
        }
        self.variables
            .iter()
            .enumerate()
            .filter(|(i, v)| !used[*i] && v.objective == 0.0)
            .map(|(_, v)| v.name.clone())
            .collect()
    }

    /// Human-readable listing in storage order: the debug interface for
    /// inspecting what a configuration encodes.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "instance {}", self.name);
        let _ = writeln!(s, "objective constant {}", self.objective_constant);
        for v in &self.variables {
            let _ = writeln!(s, "var {} obj {} role {:?}", v.name, v.objective, v.role);
        }
        for c in &self.constraints {
            let mut lhs = String::new();
            for (k, &(i, w)) in c.terms.iter().enumerate() {
                if k > 0 {
                    lhs.push_str(" + ");
                }
                let _ = write!(lhs, "{}*{}", w, self.variables[i].name);
            }
            let _ = writeln!(s, "{}: {} {} {}", c.label, lhs, c.cmp.symbol(), c.rhs);
        }
        s
    }
}

/// Encoder and solver knobs. The three booleans switch the variable-set
/// reductions; the budgets drive the iterated solve and the recursive
/// bound refinement. Deterministic mode replaces wall-clock slices with
/// node-count slices so reruns are bit-identical across machines.
#[derive(Debug, Clone)]
pub struct EncodeConfig {
    pub enable_leaf_symmetry: bool,
    pub enable_root_symmetry: bool,
    pub enable_pruning: bool,
    pub initial_time_limit: Duration,
    pub backoff_factor: f64,
    pub total_budget: Duration,
    pub deterministic_budget_mode: bool,
    pub initial_node_budget: u64,
    pub total_node_budget: u64,
    pub recursion_time_limit: Duration,
    pub recursion_node_budget: u64,
    pub recursion_size_cap: usize,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            enable_leaf_symmetry: true,
            enable_root_symmetry: true,
            enable_pruning: true,
            initial_time_limit: Duration::from_secs(10),
            backoff_factor: 2.0,
            total_budget: Duration::from_secs(60),
            deterministic_budget_mode: false,
            initial_node_budget: 1 << 16,
            total_node_budget: 10 << 16,
            recursion_time_limit: Duration::from_secs(1),
            recursion_node_budget: 4_000,
            recursion_size_cap: 40,
        }
    }
}

/// Additive lower bound on the cost of any solution in which a given path
/// pair carries the runs of its mapped ends. The four parts cover disjoint
/// regions, so their sum is admissible; a sum above a known upper bound
/// proves the path pair useless.
#[derive(Debug, Clone, Copy)]
pub struct PruningBounds {
    /// Mismatch of the two run lengths.
    pub path_cost: f64,
    /// Persistence hanging off strict path interiors, unrecoverable on
    /// both sides because interiors must be pruned.
    pub forced_prune_deletions: f64,
    /// Cost below the mapped ends.
    pub subtree_bound: f64,
    /// Cost outside the start branches.
    pub complement_bound: f64,
}

impl PruningBounds {
    pub fn sum(&self) -> f64 {
        self.path_cost + self.forced_prune_deletions + self.subtree_bound + self.complement_bound
    }
}

/// Memo and precomputed data shared by all pruning-bound evaluations of
/// one tree pair.
pub struct PruneContext<'a> {
    t1: &'a AbstractMergeTree,
    t2: &'a AbstractMergeTree,
    sp1: Vec<f64>,
    sp2: Vec<f64>,
    sz1: Vec<usize>,
    sz2: Vec<usize>,
    p1: f64,
    p2: f64,
    recurse: bool,
    size_cap: usize,
    sub_limits: Limits,
    wrapped_memo: HashMap<(NodeId, NodeId), f64>,
    complement_memo: HashMap<(NodeId, NodeId), f64>,
}

impl<'a> PruneContext<'a> {
    pub fn new(
        t1: &'a AbstractMergeTree,
        t2: &'a AbstractMergeTree,
        config: &EncodeConfig,
    ) -> Self {
        let sub_limits = Limits {
            deadline: if config.deterministic_budget_mode {
                None
            } else {
                Some(Instant::now() + config.recursion_time_limit)
            },
            node_budget: Some(config.recursion_node_budget),
        };
        PruneContext {
            t1,
            t2,
            sp1: subtree_persistences(t1),
            sp2: subtree_persistences(t2),
            sz1: subtree_sizes(t1),
            sz2: subtree_sizes(t2),
            p1: t1.total_persistence(),
            p2: t2.total_persistence(),
            recurse: true,
            size_cap: config.recursion_size_cap,
            sub_limits,
            wrapped_memo: HashMap::new(),
            complement_memo: HashMap::new(),
        }
    }

    fn wrapped_lb(&mut self, e1: NodeId, e2: NodeId) -> f64 {
        if let Some(&v) = self.wrapped_memo.get(&(e1, e2)) {
            return v;
        }
        let w1 = wrapped_subtree(self.t1, e1);
        let w2 = wrapped_subtree(self.t2, e2);
        let lb = bounded_lower_bound(&w1, &w2, &self.sub_limits);
        self.wrapped_memo.insert((e1, e2), lb);
        lb
    }

    fn complement_lb(&mut self, pc1: NodeId, pc2: NodeId) -> f64 {
        if let Some(&v) = self.complement_memo.get(&(pc1, pc2)) {
            return v;
        }
        let c1 = complement_above(self.t1, pc1);
        let c2 = complement_above(self.t2, pc2);
        let lb = bounded_lower_bound(&c1, &c2, &self.sub_limits);
        self.complement_memo.insert((pc1, pc2), lb);
        lb
    }
}

fn off_path_persistence(t: &AbstractMergeTree, sp: &[f64], q: &TreePath) -> f64 {
    let vs = &q.vertices;
    let mut off = 0.0;
    for i in 1..vs.len() - 1 {
        let w = vs[i];
        let pc = vs[i + 1];
        off += sp[w] - sp[pc] - t.up_edge_length(pc).unwrap();
    }
    off
}

/// Region-wise lower bound for one path pair. Crude persistence gaps are
/// tightened by budgeted recursive solves on the wrapped subtrees and the
/// start complements when the pieces are small enough; the recursive
/// solves themselves never recurse further.
pub fn compute_pruning_bounds(
    ctx: &mut PruneContext<'_>,
    q1: &TreePath,
    q2: &TreePath,
    upper_bound: f64,
) -> PruningBounds {
    let (e1, e2) = (q1.end(), q2.end());
    let (pc1, pc2) = (q1.vertices[1], q2.vertices[1]);
    let path_cost = (q1.length_in(ctx.t1) - q2.length_in(ctx.t2)).abs();
    let forced = off_path_persistence(ctx.t1, &ctx.sp1, q1)
        + off_path_persistence(ctx.t2, &ctx.sp2, q2);
    let sub_crude = (ctx.sp1[e1] - ctx.sp2[e2]).abs();
    let branch1 = ctx.sp1[pc1] + ctx.t1.up_edge_length(pc1).unwrap();
    let branch2 = ctx.sp2[pc2] + ctx.t2.up_edge_length(pc2).unwrap();
    let comp_crude = ((ctx.p1 - branch1) - (ctx.p2 - branch2)).abs();

    let mut out = PruningBounds {
        path_cost,
        forced_prune_deletions: forced,
        subtree_bound: sub_crude,
        complement_bound: comp_crude,
    };
    if !ctx.recurse || out.sum() > upper_bound {
        return out;
    }

    let small = |a: usize, b: usize, cap: usize| a.min(b) >= 3 && a.max(b) <= cap;
    if small(ctx.sz1[e1], ctx.sz2[e2], ctx.size_cap) {
        out.subtree_bound = sub_crude.max(ctx.wrapped_lb(e1, e2));
    }
    if out.sum() > upper_bound {
        return out;
    }
    let csz1 = ctx.sz1[ctx.t1.root()] - ctx.sz1[pc1] + 1;
    let csz2 = ctx.sz2[ctx.t2.root()] - ctx.sz2[pc2] + 1;
    if small(csz1, csz2, ctx.size_cap) {
        let edge_gap = (ctx.t1.up_edge_length(pc1).unwrap()
            - ctx.t2.up_edge_length(pc2).unwrap())
        .abs();
        out.complement_bound = comp_crude.max(ctx.complement_lb(pc1, pc2) - edge_gap).max(0.0);
    }
    out
}

/// Index bookkeeping produced alongside an encoded instance.
struct SideVars {
    d: Vec<Option<usize>>,
    /// Subtree-deletion indicator; for leaves this aliases `d`.
    c: Vec<Option<usize>>,
    g: Vec<Option<usize>>,
    r: Vec<Option<usize>>,
    p: HashMap<(NodeId, NodeId), usize>,
}

fn name2(prefix: &str, a: NodeId, b: NodeId, fallback_idx: usize) -> String {
    let primary = format!("{prefix}{a}_{b}");
    if primary.len() <= 8 {
        primary
    } else {
        format!("{prefix}{fallback_idx}")
    }
}

/// Builds the binary program for a tree pair. `upper_bound` gates the
/// path-pair pruning step; symmetry reductions drop only path-pair
/// variables whose runs an optimal solution never needs.
pub fn encode(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    config: &EncodeConfig,
    upper_bound: Option<f64>,
) -> IpInstance {
    let (n1, n2) = (t1.node_count(), t2.node_count());
    let (root1, root2) = (t1.root(), t2.root());
    let anc1 = strict_ancestors(t1);
    let anc2 = strict_ancestors(t2);
    let nonroot1: Vec<NodeId> = (0..n1).filter(|&v| v != root1).collect();
    let nonroot2: Vec<NodeId> = (0..n2).filter(|&u| u != root2).collect();
    let inner1: Vec<NodeId> = nonroot1.iter().copied().filter(|&v| !t1.is_leaf(v)).collect();
    let inner2: Vec<NodeId> = nonroot2.iter().copied().filter(|&u| !t2.is_leaf(u)).collect();
    let paths1 = enumerate_paths(t1);
    let paths2 = enumerate_paths(t2);

    // Path-pair selection: symmetry reductions first, then bound pruning.
    let mut keep_pm: Vec<(usize, usize)> = Vec::new();
    for (i1, q1) in paths1.iter().enumerate() {
        for (i2, q2) in paths2.iter().enumerate() {
            if config.enable_leaf_symmetry && t1.is_leaf(q1.end()) != t2.is_leaf(q2.end()) {
                continue;
            }
            if config.enable_root_symmetry && (q1.start() == root1) != (q2.start() == root2) {
                continue;
            }
            keep_pm.push((i1, i2));
        }
    }
    let pruned = config.enable_pruning && upper_bound.is_some();
    if pruned {
        let ub = upper_bound.unwrap();
        let mut ctx = PruneContext::new(t1, t2, config);
        keep_pm.retain(|&(i1, i2)| {
            compute_pruning_bounds(&mut ctx, &paths1[i1], &paths2[i2], ub).sum() <= ub + 1e-9
        });
    }
    let mut keep_p1 = vec![!pruned; paths1.len()];
    let mut keep_p2 = vec![!pruned; paths2.len()];
    for &(i1, i2) in &keep_pm {
        keep_p1[i1] = true;
        keep_p2[i2] = true;
    }

    let mut inst = IpInstance::new("mtdist");
    inst.objective_constant = t1.total_persistence() + t2.total_persistence();

    // Variables, grouped by role, ids ascending within each group.
    let mut m_idx: HashMap<(NodeId, NodeId), usize> = HashMap::new();
    let mut fallback = 0usize;
    let root_m = inst.add_variable(
        name2("m", root1, root2, fallback),
        VarRole::MapPair { v: root1, u: root2 },
        0.0,
    );
    m_idx.insert((root1, root2), root_m);
    for &v in &nonroot1 {
        for &u in &nonroot2 {
            fallback += 1;
            let id = inst.add_variable(
                name2("m", v, u, fallback),
                VarRole::MapPair { v, u },
                0.0,
            );
            m_idx.insert((v, u), id);
        }
    }

    let side_vars = |inst: &mut IpInstance,
                         side: Side,
                         tree: &AbstractMergeTree,
                         nonroot: &[NodeId],
                         inner: &[NodeId],
                         paths: &[TreePath],
                         keep_p: &[bool],
                         n: usize|
     -> SideVars {
        let tag = if side == Side::One { "A" } else { "B" };
        let mut out = SideVars {
            d: vec![None; n],
            c: vec![None; n],
            g: vec![None; n],
            r: vec![None; n],
            p: HashMap::new(),
        };
        for &v in nonroot {
            out.d[v] =
                Some(inst.add_variable(format!("d{tag}{v}"), VarRole::Deleted { side, node: v }, 0.0));
        }
        for &v in nonroot {
            if tree.is_leaf(v) {
                out.c[v] = out.d[v];
            }
        }
        for &v in inner {
            out.c[v] = Some(inst.add_variable(
                format!("c{tag}{v}"),
                VarRole::SubtreeDeleted { side, node: v },
                0.0,
            ));
        }
        for &v in inner {
            out.g[v] = Some(inst.add_variable(
                format!("g{tag}{v}"),
                VarRole::Branching { side, node: v },
                0.0,
            ));
        }
        for &v in inner {
            out.r[v] = Some(inst.add_variable(
                format!("r{tag}{v}"),
                VarRole::Pruned { side, node: v },
                0.0,
            ));
        }
        for (i, q) in paths.iter().enumerate() {
            if !keep_p[i] {
                continue;
            }
            let (s, e) = (q.start(), q.end());
            let id = inst.add_variable(
                name2(&format!("p{tag}"), s, e, i),
                VarRole::RunActive { side, start: s, end: e },
                0.0,
            );
            out.p.insert((s, e), id);
        }
        out
    };
    let v1 = side_vars(&mut inst, Side::One, t1, &nonroot1, &inner1, &paths1, &keep_p1, n1);
    let v2 = side_vars(&mut inst, Side::Two, t2, &nonroot2, &inner2, &paths2, &keep_p2, n2);

    let mut q_idx: Vec<usize> = Vec::with_capacity(keep_pm.len());
    for (k, &(i1, i2)) in keep_pm.iter().enumerate() {
        let (q1, q2) = (&paths1[i1], &paths2[i2]);
        let (l1, l2) = (q1.length_in(t1), q2.length_in(t2));
        let coeff = (l1 - l2).abs() - l1 - l2;
        q_idx.push(inst.add_variable(
            format!("q{k}"),
            VarRole::RunPair {
                start1: q1.start(),
                end1: q1.end(),
                start2: q2.start(),
                end2: q2.end(),
            },
            coeff,
        ));
    }

    // Constraints. Roots are always paired.
    inst.add_constraint(vec![(root_m, 1.0)], Cmp::Eq, 1.0);
    for &v in &nonroot1 {
        let mut terms: Vec<(usize, f64)> =
            nonroot2.iter().map(|&u| (m_idx[&(v, u)], 1.0)).collect();
        terms.push((v1.d[v].unwrap(), 1.0));
        inst.add_constraint(terms, Cmp::Eq, 1.0);
    }
    for &u in &nonroot2 {
        let mut terms: Vec<(usize, f64)> =
            nonroot1.iter().map(|&v| (m_idx[&(v, u)], 1.0)).collect();
        terms.push((v2.d[u].unwrap(), 1.0));
        inst.add_constraint(terms, Cmp::Eq, 1.0);
    }
    // Ancestor-order agreement: conflicting pairs exclude each other.
    for (a, &v) in nonroot1.iter().enumerate() {
        for &vp in &nonroot1[a + 1..] {
            let down = anc1[v * n1 + vp];
            let up = anc1[vp * n1 + v];
            for &u in &nonroot2 {
                for &up2 in &nonroot2 {
                    if up2 == u {
                        continue;
                    }
                    if anc2[u * n2 + up2] != down || anc2[up2 * n2 + u] != up {
                        inst.add_constraint(
                            vec![(m_idx[&(v, u)], 1.0), (m_idx[&(vp, up2)], 1.0)],
                            Cmp::Le,
                            1.0,
                        );
                    }
                }
            }
        }
    }

    let side_constraints = |inst: &mut IpInstance,
                            tree: &AbstractMergeTree,
                            inner: &[NodeId],
                            paths: &[TreePath],
                            keep_p: &[bool],
                            vars: &SideVars,
                            root: NodeId| {
        for &v in inner {
            let c = vars.c[v].unwrap();
            let d = vars.d[v].unwrap();
            let kids = tree.children(v);
            inst.add_constraint(vec![(c, 1.0), (d, -1.0)], Cmp::Le, 0.0);
            for &k in kids {
                inst.add_constraint(vec![(c, 1.0), (vars.c[k].unwrap(), -1.0)], Cmp::Le, 0.0);
            }
            let mut terms = vec![(d, 1.0), (c, -1.0)];
            terms.extend(kids.iter().map(|&k| (vars.c[k].unwrap(), 1.0)));
            inst.add_constraint(terms, Cmp::Le, kids.len() as f64);
        }
        for &v in inner {
            let g = vars.g[v].unwrap();
            let kids = tree.children(v);
            let deg = kids.len() as f64;
            let mut terms = vec![(g, 2.0)];
            terms.extend(kids.iter().map(|&k| (vars.c[k].unwrap(), 1.0)));
            inst.add_constraint(terms, Cmp::Le, deg);
            let mut terms = vec![(g, deg - 1.0)];
            terms.extend(kids.iter().map(|&k| (vars.c[k].unwrap(), 1.0)));
            inst.add_constraint(terms, Cmp::Ge, deg - 1.0);
        }
        for &v in inner {
            let r = vars.r[v].unwrap();
            let d = vars.d[v].unwrap();
            let c = vars.c[v].unwrap();
            let g = vars.g[v].unwrap();
            inst.add_constraint(vec![(r, 1.0), (d, -1.0)], Cmp::Le, 0.0);
            inst.add_constraint(vec![(r, 1.0), (c, 1.0)], Cmp::Le, 1.0);
            inst.add_constraint(vec![(r, 1.0), (g, 1.0)], Cmp::Le, 1.0);
            inst.add_constraint(
                vec![(r, 1.0), (d, -1.0), (c, 1.0), (g, 1.0)],
                Cmp::Ge,
                0.0,
            );
        }
        for (i, q) in paths.iter().enumerate() {
            if !keep_p[i] {
                continue;
            }
            let p = vars.p[&(q.start(), q.end())];
            inst.add_constraint(vec![(p, 1.0), (vars.d[q.end()].unwrap(), 1.0)], Cmp::Le, 1.0);
            for &w in &q.vertices[1..q.vertices.len() - 1] {
                inst.add_constraint(vec![(p, 1.0), (vars.r[w].unwrap(), -1.0)], Cmp::Le, 0.0);
            }
            if q.start() != root {
                inst.add_constraint(
                    vec![(p, 1.0), (vars.r[q.start()].unwrap(), 1.0)],
                    Cmp::Le,
                    1.0,
                );
            }
        }
    };
    side_constraints(&mut inst, t1, &inner1, &paths1, &keep_p1, &v1, root1);
    side_constraints(&mut inst, t2, &inner2, &paths2, &keep_p2, &v2, root2);

    for (k, &(i1, i2)) in keep_pm.iter().enumerate() {
        let (q1, q2) = (&paths1[i1], &paths2[i2]);
        let q = q_idx[k];
        let m = m_idx[&(q1.end(), q2.end())];
        let p1 = v1.p[&(q1.start(), q1.end())];
        let p2 = v2.p[&(q2.start(), q2.end())];
        inst.add_constraint(vec![(q, 1.0), (m, -1.0)], Cmp::Le, 0.0);
        inst.add_constraint(vec![(q, 1.0), (p1, -1.0)], Cmp::Le, 0.0);
        inst.add_constraint(vec![(q, 1.0), (p2, -1.0)], Cmp::Le, 0.0);
    }

    inst
}

/// The assignment a valid mapping induces, with every run and overlap
/// variable at its feasible maximum, so the objective equals the mapping
/// cost whenever all needed path pairs are present.
pub fn assignment_from_mapping(
    inst: &IpInstance,
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    mapping: &EditMapping,
) -> Vec<f64> {
    let mut x = vec![0.0; inst.variable_count()];
    let mut mapped1 = vec![false; t1.node_count()];
    let mut mapped2 = vec![false; t2.node_count()];
    for &(v, u) in mapping.pairs() {
        mapped1[v] = true;
        mapped2[u] = true;
    }
    let status1 = classify_unmapped(t1, &mapped1);
    let status2 = classify_unmapped(t2, &mapped2);
    let run_top = |t: &AbstractMergeTree, status: &[NodeStatus], e: NodeId| -> NodeId {
        let mut cur = e;
        let mut top = t.parent(cur).unwrap();
        while t.parent(top).is_some() && status[top] == NodeStatus::Pruned {
            cur = top;
            top = t.parent(cur).unwrap();
        }
        top
    };
    let has_mapped = |t: &AbstractMergeTree, mapped: &[bool]| -> Vec<bool> {
        let mut h = vec![false; t.node_count()];
        for &v in t.preorder().iter().rev() {
            h[v] = mapped[v] || t.children(v).iter().any(|&c| h[c]);
        }
        h
    };
    let h1 = has_mapped(t1, &mapped1);
    let h2 = has_mapped(t2, &mapped2);

    let pair_set: std::collections::HashSet<(NodeId, NodeId)> =
        mapping.pairs().iter().copied().collect();
    let mut run_idx: HashMap<(Side, NodeId, NodeId), usize> = HashMap::new();
    for (i, var) in inst.variables.iter().enumerate() {
        match var.role {
            VarRole::MapPair { v, u } => {
                if pair_set.contains(&(v, u)) {
                    x[i] = 1.0;
                }
            }
            VarRole::Deleted { side, node } => {
                let unmapped =
                    if side == Side::One { !mapped1[node] } else { !mapped2[node] };
                if unmapped {
                    x[i] = 1.0;
                }
            }
            VarRole::SubtreeDeleted { side, node } => {
                let dead = if side == Side::One { !h1[node] } else { !h2[node] };
                if dead {
                    x[i] = 1.0;
                }
            }
            VarRole::Branching { side, node } => {
                let (t, h) = if side == Side::One { (t1, &h1) } else { (t2, &h2) };
                if t.children(node).iter().filter(|&&c| h[c]).count() >= 2 {
                    x[i] = 1.0;
                }
            }
            VarRole::Pruned { side, node } => {
                let pruned = if side == Side::One {
                    status1[node] == NodeStatus::Pruned
                } else {
                    status2[node] == NodeStatus::Pruned
                };
                if pruned {
                    x[i] = 1.0;
                }
            }
            VarRole::RunActive { side, start, end } => {
                let (t, mapped, status) = if side == Side::One {
                    (t1, &mapped1, &status1)
                } else {
                    (t2, &mapped2, &status2)
                };
                run_idx.insert((side, start, end), i);
                if mapped[end] && t.parent(end).is_some() && run_top(t, status, end) == start {
                    x[i] = 1.0;
                }
            }
            VarRole::RunPair { .. } => {}
        }
    }
    // Overlap variables need their three supports already decided.
    for (i, var) in inst.variables.iter().enumerate() {
        if let VarRole::RunPair { start1, end1, start2, end2 } = var.role {
            let p1 = run_idx.get(&(Side::One, start1, end1));
            let p2 = run_idx.get(&(Side::Two, start2, end2));
            if let (true, Some(&p1), Some(&p2)) = (pair_set.contains(&(end1, end2)), p1, p2) {
                if x[p1] == 1.0 && x[p2] == 1.0 {
                    x[i] = 1.0;
                }
            }
        }
    }
    x
}

/// Exhaustive reference optimum of an encoded instance over all valid
/// mappings; only sensible for oracle-sized trees. Every induced
/// assignment must be feasible, which doubles as an encoder check.
pub fn instance_optimum(
    inst: &IpInstance,
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
) -> (f64, EditMapping) {
    let mut best = f64::INFINITY;
    let mut best_mapping = None;
    for mapping in enumerate_valid_mappings(t1, t2) {
        let x = assignment_from_mapping(inst, t1, t2, &mapping);
        if let Err(label) = inst.check_feasible(&x) {
            panic!("induced assignment violates {label}");
        }
        let obj = inst.objective_value(&x);
        if obj < best {
            best = obj;
            best_mapping = Some(mapping);
        }
    }
    (best, best_mapping.expect("at least the root mapping exists"))
}

/// Solves a pair through the chosen backend. The builtin backend runs the
/// iterated bound-tightening search; the MPS backends share one
/// deterministic encode so an exported instance and a later import line up
/// variable for variable.
pub fn reencode_loop(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    config: &EncodeConfig,
    backend: &BackendKind,
) -> Result<SolveResult, SolveError> {
    match backend {
        BackendKind::Builtin => Ok(crate::solve::builtin_reencode(t1, t2, config)),
        BackendKind::MpsExport(path) => {
            let started = Instant::now();
            let greedy = greedy_mapping(t1, t2);
            let ub = crate::edit::mapping_cost_unchecked(t1, t2, &greedy).total;
            let inst = encode(t1, t2, config, Some(ub));
            crate::mps::export_mps(&inst, path)?;
            let lb = (t1.total_persistence() - t2.total_persistence()).abs();
            let status = if (ub - lb).abs() <= 1e-9 {
                SolveStatus::Optimal
            } else {
                SolveStatus::UpperBoundOnly
            };
            let pm = inst
                .variables
                .iter()
                .filter(|v| matches!(v.role, VarRole::RunPair { .. }))
                .count();
            let mv = inst
                .variables
                .iter()
                .filter(|v| matches!(v.role, VarRole::MapPair { .. }))
                .count();
            Ok(SolveResult {
                value: ub,
                status,
                witness: Some(greedy),
                lower_bound: lb,
                stats: SolveStats { nodes_expanded: 0, wall: started.elapsed(), iterations: 1 },
                log: vec![ReencodeEntry {
                    iteration: 0,
                    upper_bound: ub,
                    pair_candidates: mv,
                    path_pairs: Some(pm),
                    elapsed: started.elapsed(),
                }],
            })
        }
        BackendKind::MpsImport { solution } => {
            let greedy = greedy_mapping(t1, t2);
            let ub = crate::edit::mapping_cost_unchecked(t1, t2, &greedy).total;
            let inst = encode(t1, t2, config, Some(ub));
            crate::mps::import_solution(&inst, t1, t2, solution)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::random_tree;
    use crate::edit::{brute_force_distance, mapping_cost};

    fn toggles(leaf: bool, root: bool, prune: bool) -> EncodeConfig {
        EncodeConfig {
            enable_leaf_symmetry: leaf,
            enable_root_symmetry: root,
            enable_pruning: prune,
            ..EncodeConfig::default()
        }
    }

    fn all_off() -> EncodeConfig {
        toggles(false, false, false)
    }

    #[test]
    fn objective_equals_mapping_cost_without_reductions() {
        for seed in 0..6u64 {
            let t1 = random_tree(6, seed);
            let t2 = random_tree(5, 40 + seed);
            let inst = encode(&t1, &t2, &all_off(), None);
            for mapping in enumerate_valid_mappings(&t1, &t2) {
                let x = assignment_from_mapping(&inst, &t1, &t2, &mapping);
                inst.check_feasible(&x).unwrap();
                let cost = mapping_cost(&t1, &t2, &mapping).unwrap().total;
                let obj = inst.objective_value(&x);
                assert!(
                    (obj - cost).abs() <= 1e-9,
                    "seed {seed}: objective {obj} vs cost {cost} for {:?}",
                    mapping.pairs()
                );
            }
        }
    }

    #[test]
    fn optimum_is_invariant_under_all_reduction_combinations() {
        for seed in 0..4u64 {
            let t1 = random_tree(6, 7 + seed);
            let t2 = random_tree(6, 90 + seed);
            let exact = brute_force_distance(&t1, &t2, 10).unwrap().value;
            let ub = crate::edit::mapping_cost_unchecked(&t1, &t2, &greedy_mapping(&t1, &t2))
                .total;
            for bits in 0..8u8 {
                let cfg = toggles(bits & 1 != 0, bits & 2 != 0, bits & 4 != 0);
                let inst = encode(&t1, &t2, &cfg, Some(ub));
                let (opt, _) = instance_optimum(&inst, &t1, &t2);
                assert!(
                    (opt - exact).abs() <= 1e-9,
                    "seed {seed} toggles {bits:03b}: {opt} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn pruning_keeps_the_optimal_witness_fully_scored() {
        for seed in 0..6u64 {
            let t1 = random_tree(7, 3 + seed);
            let t2 = random_tree(6, 60 + seed);
            let oracle = brute_force_distance(&t1, &t2, 10).unwrap();
            // Pruning in isolation: a brute-force witness may use runs the
            // symmetry reductions are allowed to drop.
            let cfg = toggles(false, false, true);
            let inst = encode(&t1, &t2, &cfg, Some(oracle.value));
            let witness = oracle.witness.unwrap();
            let x = assignment_from_mapping(&inst, &t1, &t2, &witness);
            inst.check_feasible(&x).unwrap();
            let obj = inst.objective_value(&x);
            assert!(
                (obj - oracle.value).abs() <= 1e-9,
                "seed {seed}: pruned encode scores witness {obj} vs {}",
                oracle.value
            );
        }
    }

    #[test]
    fn tighter_upper_bounds_never_grow_the_instance() {
        let t1 = random_tree(8, 21);
        let t2 = random_tree(8, 22);
        let cfg = EncodeConfig::default();
        let loose = crate::edit::mapping_cost_unchecked(&t1, &t2, &greedy_mapping(&t1, &t2)).total;
        let exact = solve_pair(&t1, &t2);
        let mut prev = usize::MAX;
        for ub in [loose * 2.0, loose, (loose + exact) / 2.0, exact] {
            let inst = encode(&t1, &t2, &cfg, Some(ub));
            assert!(inst.variable_count() <= prev);
            prev = inst.variable_count();
        }
    }

    fn solve_pair(t1: &AbstractMergeTree, t2: &AbstractMergeTree) -> f64 {
        crate::solve::solve_builtin(t1, t2, &Limits::default()).value
    }

    #[test]
    fn single_edge_pair_encodes_to_zero() {
        let mut b = crate::tree::TreeBuilder::new();
        let r = b.root(0.0);
        b.child(r, 4.0);
        let t = b.build().unwrap();
        let inst = encode(&t, &t, &all_off(), None);
        let (opt, _) = instance_optimum(&inst, &t, &t);
        assert_eq!(opt, 0.0);
    }

    #[test]
    fn run_pair_counts_match_path_enumeration() {
        let t1 = random_tree(7, 31);
        let t2 = random_tree(6, 32);
        let c1 = enumerate_paths(&t1).len();
        let c2 = enumerate_paths(&t2).len();
        let count_q = |cfg: &EncodeConfig| {
            encode(&t1, &t2, cfg, None)
                .variables
                .iter()
                .filter(|v| matches!(v.role, VarRole::RunPair { .. }))
                .count()
        };
        assert_eq!(count_q(&all_off()), c1 * c2);
        let expected_leaf: usize = enumerate_paths(&t1)
            .iter()
            .map(|q1| {
                enumerate_paths(&t2)
                    .iter()
                    .filter(|q2| t1.is_leaf(q1.end()) == t2.is_leaf(q2.end()))
                    .count()
            })
            .sum();
        assert_eq!(count_q(&toggles(true, false, false)), expected_leaf);
    }

    #[test]
    fn every_variable_is_referenced() {
        let t1 = random_tree(7, 51);
        let t2 = random_tree(7, 52);
        for bits in 0..8u8 {
            let cfg = toggles(bits & 1 != 0, bits & 2 != 0, bits & 4 != 0);
            let ub = crate::edit::mapping_cost_unchecked(&t1, &t2, &greedy_mapping(&t1, &t2))
                .total;
            let inst = encode(&t1, &t2, &cfg, Some(ub));
            assert!(inst.unused_variables().is_empty(), "toggles {bits:03b}");
            for v in &inst.variables {
                assert!(v.name.len() <= 8);
            }
        }
    }

    #[test]
    fn encode_is_deterministic() {
        let t1 = random_tree(7, 61);
        let t2 = random_tree(6, 62);
        let cfg = EncodeConfig { deterministic_budget_mode: true, ..EncodeConfig::default() };
        let ub = crate::edit::mapping_cost_unchecked(&t1, &t2, &greedy_mapping(&t1, &t2)).total;
        let a = encode(&t1, &t2, &cfg, Some(ub));
        let b = encode(&t1, &t2, &cfg, Some(ub));
        assert_eq!(a.dump(), b.dump());
    }

    #[test]
    fn pruning_bounds_are_admissible() {
        for seed in 0..5u64 {
            let t1 = random_tree(6, 70 + seed);
            let t2 = random_tree(6, 80 + seed);
            let oracle = brute_force_distance(&t1, &t2, 10).unwrap();
            let witness = oracle.witness.unwrap();
            let mapped1: Vec<bool> = {
                let mut m = vec![false; t1.node_count()];
                witness.pairs().iter().for_each(|&(v, _)| m[v] = true);
                m
            };
            let mapped2: Vec<bool> = {
                let mut m = vec![false; t2.node_count()];
                witness.pairs().iter().for_each(|&(_, u)| m[u] = true);
                m
            };
            let breakdown = mapping_cost(&t1, &t2, &witness).unwrap();
            let cfg = EncodeConfig::default();
            let mut ctx = PruneContext::new(&t1, &t2, &cfg);
            let status1 = classify_unmapped(&t1, &mapped1);
            let status2 = classify_unmapped(&t2, &mapped2);
            // Every run pair the optimal witness realizes must keep its
            // bound at or below the optimal value.
            for (idx, &(v, u)) in witness.pairs().iter().enumerate() {
                if v == t1.root() || u == t2.root() {
                    continue;
                }
                let top1 = {
                    let mut cur = v;
                    let mut top = t1.parent(cur).unwrap();
                    while t1.parent(top).is_some() && status1[top] == NodeStatus::Pruned {
                        cur = top;
                        top = t1.parent(cur).unwrap();
                    }
                    top
                };
                let top2 = {
                    let mut cur = u;
                    let mut top = t2.parent(cur).unwrap();
                    while t2.parent(top).is_some() && status2[top] == NodeStatus::Pruned {
                        cur = top;
                        top = t2.parent(cur).unwrap();
                    }
                    top
                };
                let q1 = find_path(&t1, top1, v);
                let q2 = find_path(&t2, top2, u);
                let b = compute_pruning_bounds(&mut ctx, &q1, &q2, f64::INFINITY);
                assert!(
                    b.sum() <= oracle.value + 1e-9,
                    "seed {seed} pair {idx}: bound {} exceeds optimum {}",
                    b.sum(),
                    oracle.value
                );
                let _ = &breakdown;
            }
        }
    }

    fn find_path(t: &AbstractMergeTree, start: NodeId, end: NodeId) -> TreePath {
        let mut vertices = vec![end];
        let mut cur = end;
        while cur != start {
            cur = t.parent(cur).unwrap();
            vertices.push(cur);
        }
        vertices.reverse();
        TreePath { vertices }
    }

    #[test]
    fn builtin_reencode_cracks_a_small_reduction_pair() {
        let inst = crate::datagen::sample_x3c(3, 1, true, 5).unwrap();
        let (t1, t2) = crate::datagen::x3c_trees(&inst, 1).unwrap();
        let cfg = EncodeConfig::default();
        let res = reencode_loop(&t1, &t2, &cfg, &BackendKind::Builtin).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.value - 1.0).abs() <= 1e-9);
        assert!(!res.log.is_empty());
        let mut prev = f64::INFINITY;
        for entry in &res.log {
            assert!(entry.upper_bound <= prev + 1e-12);
            prev = entry.upper_bound;
        }
    }
}
