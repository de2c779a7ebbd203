//! Exact distance search. The built-in backend is a branch-and-bound over
//! edit mappings: tree-one nodes are decided in preorder (map to a
//! compatible tree-two node, or delete), with an admissible bound built
//! from run extensions and per-region persistence caps.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::edit::{mapping_cost_unchecked, EditMapping};
use crate::ip::EncodeConfig;
use crate::tree::{AbstractMergeTree, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    UpperBoundOnly,
    InfeasibleError,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::UpperBoundOnly => "upper_bound_only",
            SolveStatus::InfeasibleError => "infeasible_error",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveStats {
    pub nodes_expanded: u64,
    pub wall: Duration,
    pub iterations: u32,
}

/// One entry per solver iteration: the incumbent after the iteration and
/// the size of the still-open search space. `pair_candidates` counts node
/// pairs not excluded by bounds; `path_pairs` is filled only when cheap.
#[derive(Debug, Clone)]
pub struct ReencodeEntry {
    pub iteration: u32,
    pub upper_bound: f64,
    pub pair_candidates: usize,
    pub path_pairs: Option<usize>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub value: f64,
    pub status: SolveStatus,
    pub witness: Option<EditMapping>,
    pub lower_bound: f64,
    pub stats: SolveStats,
    pub log: Vec<ReencodeEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendKind {
    Builtin,
    MpsExport(PathBuf),
    MpsImport { solution: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("solution file line {line}: {reason}")]
    SolutionFormat { line: usize, reason: String },
    #[error("solution assigns unknown variable {0}")]
    UnknownVariable(String),
    #[error("solution misses variable {0}")]
    MissingVariable(String),
    #[error("variable {name} has non-binary value {value}")]
    NonBinary { name: String, value: f64 },
    #[error("assignment violates constraint {label}")]
    InfeasibleAssignment { label: String },
    #[error("solution selects an invalid mapping: {0}")]
    InvalidMapping(String),
}

/// Hard limits for one search run. `node_budget` counts expansions and is
/// machine-independent; `deadline` is wall-clock.
#[derive(Debug, Clone, Copy, Default)]
pub struct Limits {
    pub deadline: Option<Instant>,
    pub node_budget: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdOutcome {
    Yes { value: f64, witness: EditMapping },
    No { lower_bound: f64 },
    Unknown { lower_bound: f64 },
}

/// Greedy initial incumbent: pair the roots, then match leaves in order of
/// decreasing persistence to the nearest-persistence unused leaf on the
/// other side. Leaves are pairwise incomparable, so the result is always a
/// valid mapping.
pub fn greedy_mapping(t1: &AbstractMergeTree, t2: &AbstractMergeTree) -> EditMapping {
    let mut pairs = vec![(t1.root(), t2.root())];
    let collect = |t: &AbstractMergeTree| -> Vec<(f64, NodeId)> {
        let mut ls: Vec<(f64, NodeId)> = (0..t.node_count())
            .filter(|&v| v != t.root() && t.is_leaf(v))
            .map(|v| (t.up_edge_length(v).unwrap(), v))
            .collect();
        ls.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        ls
    };
    let l1 = collect(t1);
    let l2 = collect(t2);
    let mut used = vec![false; l2.len()];
    for &(len1, v) in &l1 {
        let mut pick: Option<(f64, usize)> = None;
        for (i, &(len2, _)) in l2.iter().enumerate() {
            if used[i] {
                continue;
            }
            let gap = (len1 - len2).abs();
            let better = match pick {
                None => true,
                Some((g, _)) => gap < g,
            };
            if better {
                pick = Some((gap, i));
            }
        }
        if let Some((_, i)) = pick {
            used[i] = true;
            pairs.push((v, l2[i].1));
        }
    }
    EditMapping::new(pairs)
}

/// Persistence of the strict subtree below each node.
pub(crate) fn subtree_persistences(t: &AbstractMergeTree) -> Vec<f64> {
    let n = t.node_count();
    let mut sp = vec![0.0; n];
    for &v in t.preorder().iter().rev() {
        for &c in t.children(v) {
            sp[v] += sp[c] + t.up_edge_length(c).unwrap();
        }
    }
    sp
}

pub(crate) fn subtree_sizes(t: &AbstractMergeTree) -> Vec<usize> {
    let n = t.node_count();
    let mut sz = vec![1usize; n];
    for &v in t.preorder().iter().rev() {
        for &c in t.children(v) {
            sz[v] += sz[c];
        }
    }
    sz
}

/// Flat strict-ancestor matrix: `out[a * n + b]` iff a is a strict
/// ancestor of b.
pub(crate) fn strict_ancestors(t: &AbstractMergeTree) -> Vec<bool> {
    let n = t.node_count();
    let mut out = vec![false; n * n];
    for b in 0..n {
        let mut a = t.parent(b);
        while let Some(p) = a {
            out[p * n + b] = true;
            a = t.parent(p);
        }
    }
    out
}

/// The subtree of `v` re-rooted under a fresh degree-one root one unit
/// above `v`. Pairing two such wrappings gives a lower bound on the cost
/// contributed strictly below a mapped pair.
pub(crate) fn wrapped_subtree(t: &AbstractMergeTree, v: NodeId) -> AbstractMergeTree {
    let mut b = crate::tree::TreeBuilder::new();
    b.root(t.scalar(v) - 1.0);
    let mut new_id = HashMap::new();
    for x in t.subtree_nodes(v) {
        let parent = if x == v { 0 } else { new_id[&t.parent(x).unwrap()] };
        new_id.insert(x, b.child(parent, t.scalar(x)));
    }
    b.build().expect("subtree wrapping keeps validity")
}

/// The tree with everything strictly below `v` removed; `v` becomes a
/// leaf. Bounds the cost contributed outside the subtrees of a mapped
/// pair.
pub(crate) fn complement_above(t: &AbstractMergeTree, v: NodeId) -> AbstractMergeTree {
    let n = t.node_count();
    let mut drop = vec![false; n];
    for x in t.subtree_nodes(v) {
        if x != v {
            drop[x] = true;
        }
    }
    let mut b = crate::tree::TreeBuilder::new();
    let mut new_id = HashMap::new();
    for x in t.preorder() {
        if drop[x] {
            continue;
        }
        let id = match t.parent(x) {
            None => b.root(t.scalar(x)),
            Some(p) => b.child(new_id[&p], t.scalar(x)),
        };
        new_id.insert(x, id);
    }
    b.build().expect("complement keeps validity")
}

/// Immutable per-pair data shared by every search over the same trees.
pub(crate) struct PairStatic {
    n1: usize,
    n2: usize,
    root1: NodeId,
    root2: NodeId,
    /// Preorder of non-root tree-one nodes: the decision order.
    order: Vec<NodeId>,
    pre1: Vec<NodeId>,
    pre2: Vec<NodeId>,
    anc1: Vec<bool>,
    anc2: Vec<bool>,
    sp1: Vec<f64>,
    sp2: Vec<f64>,
    sz1: Vec<usize>,
    sz2: Vec<usize>,
    p1: f64,
    p2: f64,
}

impl PairStatic {
    pub(crate) fn new(t1: &AbstractMergeTree, t2: &AbstractMergeTree) -> Self {
        let pre1 = t1.preorder();
        let pre2 = t2.preorder();
        let order = pre1.iter().copied().filter(|&v| v != t1.root()).collect();
        PairStatic {
            n1: t1.node_count(),
            n2: t2.node_count(),
            root1: t1.root(),
            root2: t2.root(),
            order,
            pre1,
            pre2,
            anc1: strict_ancestors(t1),
            anc2: strict_ancestors(t2),
            sp1: subtree_persistences(t1),
            sp2: subtree_persistences(t2),
            sz1: subtree_sizes(t1),
            sz2: subtree_sizes(t2),
            p1: t1.total_persistence(),
            p2: t2.total_persistence(),
        }
    }
}

/// Per-pair lower bounds used to exclude mapping candidates. The crude
/// bound is the subtree plus complement persistence gap; the refined bound
/// replaces the subtree term with a budgeted recursive solve, memoized
/// because it does not depend on the incumbent.
pub(crate) struct PairBounds {
    crude: Vec<f64>,
    refined: HashMap<(u32, u32), f64>,
}

impl PairBounds {
    pub(crate) fn new(st: &PairStatic) -> Self {
        let mut crude = vec![0.0; st.n1 * st.n2];
        for v in 0..st.n1 {
            for u in 0..st.n2 {
                let sub = (st.sp1[v] - st.sp2[u]).abs();
                let comp = ((st.p1 - st.sp1[v]) - (st.p2 - st.sp2[u])).abs();
                crude[v * st.n2 + u] = sub + comp;
            }
        }
        PairBounds { crude, refined: HashMap::new() }
    }
}

#[derive(Debug, Clone, Copy)]
struct RefineConfig {
    enabled: bool,
    size_cap: usize,
    node_budget: u64,
}

const DEFAULT_REFINE: RefineConfig =
    RefineConfig { enabled: true, size_cap: 40, node_budget: 4_000 };

enum Flow {
    Done,
    Abort,
    Stop,
}

struct RunOutcome {
    exhausted: bool,
    improved: bool,
    expanded: u64,
    /// Sound global lower bound proven by this run: the incumbent when the
    /// search space was exhausted, else the weakest unexplored bound.
    proof_lb: f64,
    incumbent: f64,
    witness: Option<EditMapping>,
}

struct Search<'a> {
    t1: &'a AbstractMergeTree,
    t2: &'a AbstractMergeTree,
    st: &'a PairStatic,
    bounds: &'a mut PairBounds,
    refine: RefineConfig,
    limits: Limits,
    stop_first: bool,

    map1: Vec<Option<u32>>,
    deleted1: Vec<bool>,
    used2: Vec<bool>,
    pairs: Vec<(NodeId, NodeId)>,

    incumbent: f64,
    witness: Option<EditMapping>,
    improved: bool,
    expanded: u64,
    abort_lb: f64,
    aborted: bool,
    stopped: bool,

    // Scratch buffers for the bound, reused across calls.
    has_m1: Vec<bool>,
    has_u2: Vec<bool>,
    claimed1: Vec<bool>,
    claimed2: Vec<bool>,
    anchor1: Vec<NodeId>,
    anchor2: Vec<NodeId>,
    open1: Vec<bool>,
    cap1: Vec<f64>,
    cap2: Vec<f64>,
}

impl<'a> Search<'a> {
    fn new(
        t1: &'a AbstractMergeTree,
        t2: &'a AbstractMergeTree,
        st: &'a PairStatic,
        bounds: &'a mut PairBounds,
        refine: RefineConfig,
        limits: Limits,
        incumbent: f64,
        witness: Option<EditMapping>,
        stop_first: bool,
    ) -> Self {
        Search {
            t1,
            t2,
            st,
            bounds,
            refine,
            limits,
            stop_first,
            map1: vec![None; st.n1],
            deleted1: vec![false; st.n1],
            used2: vec![false; st.n2],
            pairs: Vec::with_capacity(st.n1),
            incumbent,
            witness,
            improved: false,
            expanded: 0,
            abort_lb: f64::INFINITY,
            aborted: false,
            stopped: false,
            has_m1: vec![false; st.n1],
            has_u2: vec![false; st.n2],
            claimed1: vec![false; st.n1],
            claimed2: vec![false; st.n2],
            anchor1: vec![0; st.n1],
            anchor2: vec![0; st.n2],
            open1: vec![false; st.n1],
            cap1: vec![0.0; st.n1],
            cap2: vec![0.0; st.n2],
        }
    }

    /// Admissible lower bound for any completion of the current state:
    /// total persistence minus twice the best recoverable overlap. Each
    /// decided pair may recover the min of its maximal run extensions;
    /// undecided material may recover at most the min of the per-region
    /// caps. At a fully decided state this equals the mapping cost.
    fn state_bound(&mut self) -> f64 {
        let st = self.st;
        for &v in st.pre1.iter().rev() {
            self.has_m1[v] =
                self.map1[v].is_some() || self.t1.children(v).iter().any(|&c| self.has_m1[c]);
        }
        for &u in st.pre2.iter().rev() {
            self.has_u2[u] = self.used2[u] || self.t2.children(u).iter().any(|&c| self.has_u2[c]);
        }
        self.claimed1.iter_mut().for_each(|x| *x = false);
        self.claimed2.iter_mut().for_each(|x| *x = false);

        let mut recovered = 0.0;
        for i in 0..self.pairs.len() {
            let (v, u) = self.pairs[i];
            let mut cur = v;
            let mut top = self.t1.parent(cur).unwrap();
            loop {
                if top == st.root1 || self.map1[top].is_some() {
                    break;
                }
                let forced = self
                    .t1
                    .children(top)
                    .iter()
                    .any(|&c| c != cur && self.has_m1[c]);
                if forced {
                    break;
                }
                self.claimed1[top] = true;
                cur = top;
                top = self.t1.parent(top).unwrap();
            }
            let r1 = self.t1.scalar(v) - self.t1.scalar(top);

            let mut cur = u;
            let mut top = self.t2.parent(cur).unwrap();
            loop {
                if top == st.root2 || self.used2[top] {
                    break;
                }
                let forced = self
                    .t2
                    .children(top)
                    .iter()
                    .any(|&c| c != cur && self.has_u2[c]);
                if forced {
                    break;
                }
                self.claimed2[top] = true;
                cur = top;
                top = self.t2.parent(top).unwrap();
            }
            let r2 = self.t2.scalar(u) - self.t2.scalar(top);
            recovered += r1.min(r2);
        }

        // Region caps: undecided or still-open deleted material, keyed by
        // the nearest decided-mapped ancestor pair. Edges already claimed
        // by a run extension cannot be recovered again: with a mapped node
        // below, such an edge either belongs to that run or to no run.
        for &v in &st.pre1 {
            if v == st.root1 {
                continue;
            }
            let p = self.t1.parent(v).unwrap();
            self.anchor1[v] = if p == st.root1 || self.map1[p].is_some() { p } else { self.anchor1[p] };
        }
        for &u in &st.pre2 {
            if u == st.root2 {
                continue;
            }
            let p = self.t2.parent(u).unwrap();
            self.anchor2[u] = if p == st.root2 || self.used2[p] { p } else { self.anchor2[p] };
        }
        for &v in st.pre1.iter().rev() {
            let undecided = v != st.root1 && self.map1[v].is_none() && !self.deleted1[v];
            self.open1[v] = undecided
                || (self.deleted1[v] && self.t1.children(v).iter().any(|&c| self.open1[c]));
        }
        self.cap1.iter_mut().for_each(|x| *x = 0.0);
        self.cap2.iter_mut().for_each(|x| *x = 0.0);
        for &v in &st.pre1 {
            if v != st.root1 && self.map1[v].is_none() && self.open1[v] && !self.claimed1[v] {
                self.cap1[self.anchor1[v]] += self.t1.up_edge_length(v).unwrap();
            }
        }
        for &u in &st.pre2 {
            if u != st.root2 && !self.used2[u] && !self.claimed2[u] {
                self.cap2[self.anchor2[u]] += self.t2.up_edge_length(u).unwrap();
            }
        }
        recovered += self.cap1[st.root1].min(self.cap2[st.root2]);
        for i in 0..self.pairs.len() {
            let (v, u) = self.pairs[i];
            recovered += self.cap1[v].min(self.cap2[u]);
        }
        (st.p1 + st.p2 - 2.0 * recovered).max(0.0)
    }

    /// Lower bound on any total cost whose mapping contains the pair
    /// (v, u): lazily refined by a budgeted recursive solve on the wrapped
    /// subtrees when they are small enough to pay off.
    fn pair_lb(&mut self, v: NodeId, u: NodeId) -> f64 {
        let crude = self.bounds.crude[v * self.st.n2 + u];
        if !self.refine.enabled || crude >= self.incumbent {
            return crude;
        }
        let (s1, s2) = (self.st.sz1[v], self.st.sz2[u]);
        if s1.min(s2) < 3 || s1.max(s2) > self.refine.size_cap {
            return crude;
        }
        let key = (v as u32, u as u32);
        if let Some(&r) = self.bounds.refined.get(&key) {
            return r;
        }
        let w1 = wrapped_subtree(self.t1, v);
        let w2 = wrapped_subtree(self.t2, u);
        let sub_lb = bounded_sub_lb(&w1, &w2, self.refine.node_budget);
        let comp = ((self.st.p1 - self.st.sp1[v]) - (self.st.p2 - self.st.sp2[u])).abs();
        let refined = crude.max(sub_lb + comp);
        self.bounds.refined.insert(key, refined);
        refined
    }

    fn budget_exceeded(&self) -> bool {
        if let Some(nb) = self.limits.node_budget {
            if self.expanded >= nb {
                return true;
            }
        }
        if let Some(deadline) = self.limits.deadline {
            if self.expanded % 128 == 0 && Instant::now() >= deadline {
                return true;
            }
        }
        false
    }

    fn dfs(&mut self, pos: usize) -> Flow {
        if self.budget_exceeded() {
            self.aborted = true;
            return Flow::Abort;
        }
        self.expanded += 1;
        let bound = self.state_bound();
        if bound >= self.incumbent {
            return Flow::Done;
        }
        let st = self.st;
        if pos == st.order.len() {
            let mut ps = self.pairs.clone();
            ps.push((st.root1, st.root2));
            let mapping = EditMapping::new(ps);
            let cost = mapping_cost_unchecked(self.t1, self.t2, &mapping).total;
            if cost < self.incumbent {
                self.incumbent = cost;
                self.witness = Some(mapping);
                self.improved = true;
                if self.stop_first {
                    self.stopped = true;
                    return Flow::Stop;
                }
            }
            return Flow::Done;
        }

        let v = st.order[pos];
        let mut cands: Vec<(f64, f64, NodeId)> = Vec::new();
        'next: for u in 0..st.n2 {
            if u == st.root2 || self.used2[u] {
                continue;
            }
            for i in 0..self.pairs.len() {
                let (a, b) = self.pairs[i];
                if st.anc1[a * st.n1 + v] != st.anc2[b * st.n2 + u]
                    || st.anc1[v * st.n1 + a] != st.anc2[u * st.n2 + b]
                {
                    continue 'next;
                }
            }
            let lb = self.pair_lb(v, u);
            if lb >= self.incumbent {
                continue;
            }
            cands.push((lb, (st.sp1[v] - st.sp2[u]).abs(), u));
        }
        cands.sort_by(|a, b| {
            a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2))
        });

        for ci in 0..cands.len() {
            let u = cands[ci].2;
            // The incumbent may have improved since candidate generation.
            if self.used2[u] || cands[ci].0 >= self.incumbent {
                continue;
            }
            self.map1[v] = Some(u as u32);
            self.used2[u] = true;
            self.pairs.push((v, u));
            let flow = self.dfs(pos + 1);
            self.pairs.pop();
            self.used2[u] = false;
            self.map1[v] = None;
            match flow {
                Flow::Done => {}
                other => {
                    if matches!(other, Flow::Abort) {
                        self.abort_lb = self.abort_lb.min(bound);
                    }
                    return other;
                }
            }
        }

        self.deleted1[v] = true;
        let flow = self.dfs(pos + 1);
        self.deleted1[v] = false;
        match flow {
            Flow::Done => {}
            other => {
                if matches!(other, Flow::Abort) {
                    self.abort_lb = self.abort_lb.min(bound);
                }
                return other;
            }
        }
        Flow::Done
    }

    fn run(mut self) -> RunOutcome {
        let _ = self.dfs(0);
        let exhausted = !self.aborted && !self.stopped;
        let root_lb = (self.st.p1 - self.st.p2).abs();
        let proof_lb = if exhausted {
            self.incumbent
        } else if self.stopped {
            root_lb
        } else {
            // Unexplored siblings are covered by their parents' bounds.
            self.abort_lb.min(self.incumbent).max(root_lb)
        };
        RunOutcome {
            exhausted,
            improved: self.improved,
            expanded: self.expanded,
            proof_lb,
            incumbent: self.incumbent,
            witness: self.witness,
        }
    }
}

/// Lower bound on the distance of a (small) tree pair under explicit
/// limits: the exact distance if the search finishes, else its proven
/// bound. Runs without candidate refinement, so it never recurses.
pub(crate) fn bounded_lower_bound(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    limits: &Limits,
) -> f64 {
    let st = PairStatic::new(t1, t2);
    let mut bounds = PairBounds::new(&st);
    let greedy = greedy_mapping(t1, t2);
    let ub = mapping_cost_unchecked(t1, t2, &greedy).total;
    let refine = RefineConfig { enabled: false, ..DEFAULT_REFINE };
    let search =
        Search::new(t1, t2, &st, &mut bounds, refine, *limits, ub, Some(greedy), false);
    search.run().proof_lb
}

fn bounded_sub_lb(t1: &AbstractMergeTree, t2: &AbstractMergeTree, node_budget: u64) -> f64 {
    let limits = Limits { deadline: None, node_budget: Some(node_budget) };
    bounded_lower_bound(t1, t2, &limits)
}

fn count_open_pairs(st: &PairStatic, bounds: &PairBounds, incumbent: f64) -> usize {
    let mut open = 0;
    for v in 0..st.n1 {
        if v == st.root1 {
            continue;
        }
        for u in 0..st.n2 {
            if u == st.root2 {
                continue;
            }
            let mut lb = bounds.crude[v * st.n2 + u];
            if let Some(&r) = bounds.refined.get(&(v as u32, u as u32)) {
                lb = r;
            }
            if lb < incumbent {
                open += 1;
            }
        }
    }
    open + 1
}

fn cheap_path_pairs(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
) -> Option<usize> {
    if t1.node_count() * t2.node_count() > 400 {
        return None;
    }
    let c1 = crate::tree::enumerate_paths(t1).len();
    let c2 = crate::tree::enumerate_paths(t2).len();
    Some(c1 * c2)
}

/// One-shot exact search under explicit limits: seeds the incumbent with
/// the greedy mapping, then explores to exhaustion or budget.
pub fn solve_builtin(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    limits: &Limits,
) -> SolveResult {
    let started = Instant::now();
    let st = PairStatic::new(t1, t2);
    let mut bounds = PairBounds::new(&st);
    let greedy = greedy_mapping(t1, t2);
    let ub = mapping_cost_unchecked(t1, t2, &greedy).total;
    let search = Search::new(
        t1,
        t2,
        &st,
        &mut bounds,
        DEFAULT_REFINE,
        *limits,
        ub,
        Some(greedy),
        false,
    );
    let run = search.run();
    let status = if run.exhausted { SolveStatus::Optimal } else { SolveStatus::UpperBoundOnly };
    let entry = ReencodeEntry {
        iteration: 0,
        upper_bound: run.incumbent,
        pair_candidates: count_open_pairs(&st, &bounds, run.incumbent),
        path_pairs: cheap_path_pairs(t1, t2),
        elapsed: started.elapsed(),
    };
    SolveResult {
        value: run.incumbent,
        status,
        witness: run.witness,
        lower_bound: if run.exhausted { run.incumbent } else { run.proof_lb },
        stats: SolveStats {
            nodes_expanded: run.expanded,
            wall: started.elapsed(),
            iterations: 1,
        },
        log: vec![entry],
    }
}

/// Iterated search with exponential backoff. Each iteration runs under its
/// own slice of the budget; an improved incumbent tightens the candidate
/// exclusions for the next one, so the open variable set only shrinks.
pub(crate) fn builtin_reencode(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    config: &EncodeConfig,
) -> SolveResult {
    let started = Instant::now();
    let st = PairStatic::new(t1, t2);
    let mut bounds = PairBounds::new(&st);
    let refine = RefineConfig {
        enabled: true,
        size_cap: config.recursion_size_cap,
        node_budget: config.recursion_node_budget,
    };
    let greedy = greedy_mapping(t1, t2);
    let mut incumbent = mapping_cost_unchecked(t1, t2, &greedy).total;
    let mut witness = Some(greedy);
    let mut best_lb = (st.p1 - st.p2).abs();
    let mut log = Vec::new();
    let mut expanded_total = 0u64;
    let mut iteration = 0u32;
    let path_pairs = cheap_path_pairs(t1, t2);

    let (exhausted, final_incumbent) = loop {
        let limits = if config.deterministic_budget_mode {
            let slice = (config.initial_node_budget as f64
                * config.backoff_factor.powi(iteration as i32)) as u64;
            let left = config.total_node_budget.saturating_sub(expanded_total);
            if left == 0 {
                break (false, incumbent);
            }
            Limits { deadline: None, node_budget: Some(slice.min(left).max(1)) }
        } else {
            let slice = config.initial_time_limit.mul_f64(
                config.backoff_factor.powi(iteration as i32),
            );
            let hard_end = started + config.total_budget;
            let end = (Instant::now() + slice).min(hard_end);
            if Instant::now() >= hard_end {
                break (false, incumbent);
            }
            Limits { deadline: Some(end), node_budget: None }
        };

        let search = Search::new(
            t1,
            t2,
            &st,
            &mut bounds,
            refine,
            limits,
            incumbent,
            witness.clone(),
            false,
        );
        let run = search.run();
        expanded_total += run.expanded;
        best_lb = best_lb.max(run.proof_lb.min(run.incumbent));
        if run.improved {
            incumbent = run.incumbent;
            witness = run.witness;
        }
        log.push(ReencodeEntry {
            iteration,
            upper_bound: incumbent,
            pair_candidates: count_open_pairs(&st, &bounds, incumbent),
            path_pairs,
            elapsed: started.elapsed(),
        });
        iteration += 1;
        if run.exhausted {
            break (true, incumbent);
        }
    };

    SolveResult {
        value: final_incumbent,
        status: if exhausted { SolveStatus::Optimal } else { SolveStatus::UpperBoundOnly },
        witness,
        lower_bound: if exhausted { final_incumbent } else { best_lb },
        stats: SolveStats {
            nodes_expanded: expanded_total,
            wall: started.elapsed(),
            iterations: iteration.max(1),
        },
        log,
    }
}

/// Decides whether the distance is at most `c` without necessarily
/// computing it: the search runs against a phantom incumbent just above
/// `c` and stops at the first mapping beating it.
pub fn decide_threshold(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    c: f64,
    limits: &Limits,
) -> ThresholdOutcome {
    assert!(c >= 0.0, "threshold must be nonnegative");
    let st = PairStatic::new(t1, t2);
    let greedy = greedy_mapping(t1, t2);
    let greedy_cost = mapping_cost_unchecked(t1, t2, &greedy).total;
    if greedy_cost <= c {
        return ThresholdOutcome::Yes { value: greedy_cost, witness: greedy };
    }
    let phantom = c + 1e-9;
    let mut bounds = PairBounds::new(&st);
    let search = Search::new(
        t1,
        t2,
        &st,
        &mut bounds,
        DEFAULT_REFINE,
        *limits,
        phantom,
        None,
        true,
    );
    let run = search.run();
    if run.improved {
        let witness = run.witness.expect("improvement carries a witness");
        return ThresholdOutcome::Yes { value: run.incumbent, witness };
    }
    if run.exhausted {
        ThresholdOutcome::No { lower_bound: phantom }
    } else {
        ThresholdOutcome::Unknown { lower_bound: run.proof_lb }
    }
}

#[cfg(test)]
pub(crate) fn bound_of_forced_state(
    t1: &AbstractMergeTree,
    t2: &AbstractMergeTree,
    mapped: &[(NodeId, NodeId)],
    deleted: &[NodeId],
) -> f64 {
    let st = PairStatic::new(t1, t2);
    let mut bounds = PairBounds::new(&st);
    let refine = RefineConfig { enabled: false, ..DEFAULT_REFINE };
    let mut search = Search::new(
        t1,
        t2,
        &st,
        &mut bounds,
        refine,
        Limits::default(),
        f64::INFINITY,
        None,
        false,
    );
    for &(v, u) in mapped {
        if v == t1.root() {
            continue;
        }
        search.map1[v] = Some(u as u32);
        search.used2[u] = true;
        search.pairs.push((v, u));
    }
    for &v in deleted {
        search.deleted1[v] = true;
    }
    search.state_bound()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{random_tree, standalone_gadget};
    use crate::edit::{brute_force_distance, enumerate_valid_mappings, mapping_cost};

    fn exact(t1: &AbstractMergeTree, t2: &AbstractMergeTree) -> SolveResult {
        solve_builtin(t1, t2, &Limits::default())
    }

    #[test]
    fn identical_trees_have_distance_zero() {
        let t = random_tree(8, 3);
        let r = exact(&t, &t);
        assert_eq!(r.value, 0.0);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.lower_bound, 0.0);
    }

    #[test]
    fn search_matches_brute_force_on_random_pairs() {
        let mut checked = 0;
        for n1 in [4usize, 5, 6, 7, 8] {
            for n2 in [4usize, 6, 8] {
                for seed in 0..4u64 {
                    let t1 = random_tree(n1, seed);
                    let t2 = random_tree(n2, 1000 + seed);
                    let oracle = brute_force_distance(&t1, &t2, 10).unwrap();
                    let got = exact(&t1, &t2);
                    assert_eq!(got.status, SolveStatus::Optimal, "{n1},{n2},{seed}");
                    assert!(
                        (got.value - oracle.value).abs() <= 1e-9,
                        "{n1},{n2},{seed}: {} vs {}",
                        got.value,
                        oracle.value
                    );
                    assert_eq!(got.lower_bound, got.value);
                    let w = got.witness.unwrap();
                    let recomputed = mapping_cost(&t1, &t2, &w).unwrap().total;
                    assert!((recomputed - got.value).abs() <= 1e-12);
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 60);
    }

    #[test]
    fn fully_decided_bound_equals_mapping_cost() {
        for seed in 0..8u64 {
            let t1 = random_tree(6, seed);
            let t2 = random_tree(6, 100 + seed);
            for m in enumerate_valid_mappings(&t1, &t2) {
                let cost = mapping_cost(&t1, &t2, &m).unwrap().total;
                let mapped: Vec<(NodeId, NodeId)> = m.pairs().to_vec();
                let deleted: Vec<NodeId> = (0..t1.node_count())
                    .filter(|&v| v != t1.root() && !m.pairs().iter().any(|p| p.0 == v))
                    .collect();
                let b = bound_of_forced_state(&t1, &t2, &mapped, &deleted);
                assert!(
                    (b - cost).abs() <= 1e-9,
                    "seed {seed}: bound {b} vs cost {cost} for {:?}",
                    m.pairs()
                );
            }
        }
    }

    #[test]
    fn prefix_bounds_never_exceed_the_optimum() {
        for seed in 0..10u64 {
            let t1 = random_tree(7, seed);
            let t2 = random_tree(7, 50 + seed);
            let oracle = brute_force_distance(&t1, &t2, 10).unwrap();
            let witness = oracle.witness.unwrap();
            let order: Vec<NodeId> =
                t1.preorder().into_iter().filter(|&v| v != t1.root()).collect();
            for cut in 0..=order.len() {
                let mut mapped = Vec::new();
                let mut deleted = Vec::new();
                for &v in &order[..cut] {
                    match witness.pairs().iter().find(|p| p.0 == v) {
                        Some(&(_, u)) => mapped.push((v, u)),
                        None => deleted.push(v),
                    }
                }
                let b = bound_of_forced_state(&t1, &t2, &mapped, &deleted);
                assert!(
                    b <= oracle.value + 1e-9,
                    "seed {seed} cut {cut}: bound {b} exceeds optimum {}",
                    oracle.value
                );
            }
        }
    }

    #[test]
    fn gadget_distances_match_published_values() {
        let g = standalone_gadget(3, None);
        let g2 = standalone_gadget(3, Some(2));
        let g3 = standalone_gadget(3, Some(3));
        assert_eq!(exact(&g, &g2).value, 1.0);
        assert_eq!(exact(&g, &g3).value, 1.0);
        assert_eq!(exact(&g2, &g3).value, 2.0);
        let oracle = brute_force_distance(&g, &g2, 10).unwrap();
        assert_eq!(oracle.value, 1.0);
    }

    #[test]
    fn bot_distance_is_total_persistence() {
        let t = random_tree(7, 11);
        let bot = AbstractMergeTree::bot(0.0);
        let r = exact(&bot, &t);
        assert_eq!(r.value, t.total_persistence());
        assert_eq!(r.status, SolveStatus::Optimal);
    }

    #[test]
    fn greedy_mapping_is_valid_and_bounds_the_optimum() {
        for seed in 0..12u64 {
            let t1 = random_tree(8, seed);
            let t2 = random_tree(6, 30 + seed);
            let g = greedy_mapping(&t1, &t2);
            let ub = mapping_cost(&t1, &t2, &g).unwrap().total;
            let opt = brute_force_distance(&t1, &t2, 10).unwrap().value;
            assert!(ub >= opt - 1e-12);
        }
    }

    #[test]
    fn threshold_decisions_agree_with_the_oracle() {
        for seed in 0..8u64 {
            let t1 = random_tree(6, seed);
            let t2 = random_tree(6, 77 + seed);
            let opt = brute_force_distance(&t1, &t2, 10).unwrap().value;
            match decide_threshold(&t1, &t2, opt, &Limits::default()) {
                ThresholdOutcome::Yes { value, witness } => {
                    assert!(value <= opt + 1e-9);
                    assert!(mapping_cost(&t1, &t2, &witness).is_ok());
                }
                other => panic!("expected yes at the optimum, got {other:?}"),
            }
            if opt > 0.2 {
                match decide_threshold(&t1, &t2, opt - 0.1, &Limits::default()) {
                    ThresholdOutcome::No { lower_bound } => {
                        assert!(lower_bound > opt - 0.1);
                    }
                    other => panic!("expected no below the optimum, got {other:?}"),
                }
            }
            let trivial = t1.total_persistence() + t2.total_persistence();
            assert!(matches!(
                decide_threshold(&t1, &t2, trivial, &Limits::default()),
                ThresholdOutcome::Yes { .. }
            ));
        }
    }

    #[test]
    fn tiny_node_budget_yields_unknown_with_sound_bound() {
        let t1 = random_tree(9, 5);
        let t2 = random_tree(9, 205);
        let opt = exact(&t1, &t2);
        assert_eq!(opt.status, SolveStatus::Optimal);
        let limits = Limits { deadline: None, node_budget: Some(1) };
        match decide_threshold(&t1, &t2, opt.value - 0.05, &limits) {
            ThresholdOutcome::Unknown { lower_bound } => {
                assert!(lower_bound <= opt.value + 1e-9);
            }
            // With so few nodes the search may still finish instantly.
            ThresholdOutcome::No { .. } | ThresholdOutcome::Yes { .. } => {}
        }
    }

    #[test]
    fn wrapped_and_complement_helpers_stay_valid() {
        let t = random_tree(9, 8);
        for v in 0..t.node_count() {
            if v == t.root() {
                continue;
            }
            let w = wrapped_subtree(&t, v);
            assert!(w.validate().is_empty());
            assert_eq!(w.total_persistence(), subtree_persistences(&t)[v] + 1.0);
            let c = complement_above(&t, v);
            assert!(c.validate().is_empty());
            assert_eq!(
                c.total_persistence(),
                t.total_persistence() - subtree_persistences(&t)[v]
            );
        }
    }
}
