//! Generators: random valid trees, exact-cover hardness gadgets, synthetic
//! ensembles, and the saddle-swap example pair.
//!
//! Everything is seeded and deterministic: the same inputs reproduce the
//! same trees node for node.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edit::{apply_edit, EditOperation};
use crate::tree::{AbstractMergeTree, NodeId, TreeBuilder};

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error("perturbation {given} must lie in [0, {limit}) for this ensemble")]
    PerturbationTooLarge { given: f64, limit: f64 },
    #[error("ensemble needs at least one member")]
    NoMembers,
    #[error("peak heights must be positive and strictly decreasing, got {0:?}")]
    BadPeakHeights(Vec<f64>),
    #[error("all lengths must be positive and finite")]
    BadLengths,
    #[error("universe size must be a positive multiple of 3, got {0}")]
    BadUniverse(usize),
    #[error("need at least {need} sets, got {got}")]
    TooFewSets { need: usize, got: usize },
    #[error("set {index} has out-of-range or repeated elements")]
    BadSet { index: usize },
    #[error("could not sample a cover-free instance for m={m}, n={n}")]
    NoCoverUnreachable { m: usize, n: usize },
}

/// Seeded random valid tree on a 0.25 scalar grid, so sums and differences
/// of scalars are exact in floating point. Panics for `n == 0` or `n == 3`
/// (no valid tree has exactly three nodes).
pub fn random_tree(n: usize, seed: u64) -> AbstractMergeTree {
    assert!(
        n == 1 || n == 2 || n >= 4,
        "no valid tree exists on {n} nodes"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root_scalar = 0.25 * rng.gen_range(0..8) as f64;
    let mut tree = AbstractMergeTree::bot(root_scalar);
    if n == 1 {
        return tree;
    }
    // First leaf long enough to be splittable on the quarter grid.
    let first = 0.25 * rng.gen_range(2..=12) as f64;
    tree = apply_edit(&tree, &EditOperation::InsertLeaf { parent: 0, length: first })
        .expect("bot accepts a leaf")
        .tree;

    while tree.node_count() < n {
        let remaining = n - tree.node_count();
        let inners: Vec<NodeId> =
            (0..tree.node_count()).filter(|&v| tree.is_inner(v)).collect();
        let splittable: Vec<NodeId> = (0..tree.node_count())
            .filter(|&v| tree.up_edge_length(v).map_or(false, |l| l >= 0.5))
            .collect();
        let want_split = remaining >= 2
            && !splittable.is_empty()
            && (inners.is_empty() || rng.gen_bool(0.6));
        let op = if want_split {
            let child = splittable[rng.gen_range(0..splittable.len())];
            let quarters = (tree.up_edge_length(child).unwrap() / 0.25).round() as u32;
            let offset = 0.25 * rng.gen_range(1..quarters) as f64;
            EditOperation::InsertSplit {
                child,
                offset_from_parent: offset,
                leaf_length: 0.25 * rng.gen_range(1..=12) as f64,
            }
        } else {
            let parent = inners[rng.gen_range(0..inners.len())];
            EditOperation::InsertLeaf {
                parent,
                length: 0.25 * rng.gen_range(1..=12) as f64,
            }
        };
        tree = apply_edit(&tree, &op).expect("generator ops keep validity").tree;
    }
    debug_assert!(tree.validate().is_empty());
    tree
}

/// An exact-cover-by-3-sets instance over elements `1..=m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct X3CInstance {
    pub m: usize,
    pub sets: Vec<[usize; 3]>,
}

impl X3CInstance {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.m == 0 || self.m % 3 != 0 {
            return Err(DatagenError::BadUniverse(self.m));
        }
        for (index, s) in self.sets.iter().enumerate() {
            let ok = s[0] >= 1
                && s[0] < s[1]
                && s[1] < s[2]
                && s[2] <= self.m;
            if !ok {
                return Err(DatagenError::BadSet { index });
            }
        }
        Ok(())
    }
}

/// Exhaustively decides whether some `m/3` pairwise disjoint sets cover the
/// universe; independent of the distance machinery.
pub fn exhaustive_cover_exists(inst: &X3CInstance) -> bool {
    fn go(inst: &X3CInstance, from: usize, covered: &mut Vec<bool>, picked: usize) -> bool {
        if picked == inst.m / 3 {
            return covered.iter().skip(1).all(|&c| c);
        }
        for i in from..inst.sets.len() {
            let s = inst.sets[i];
            if s.iter().any(|&e| covered[e]) {
                continue;
            }
            for &e in &s {
                covered[e] = true;
            }
            if go(inst, i + 1, covered, picked + 1) {
                return true;
            }
            for &e in &s {
                covered[e] = false;
            }
        }
        false
    }
    let mut covered = vec![false; inst.m + 1];
    go(inst, 0, &mut covered, 0)
}

/// Samples an instance with `n` sets over `1..=m`. With `planted`, the
/// first `m/3` sets (before shuffling) partition the universe, so an exact
/// cover exists; otherwise instances are rejection-sampled until the
/// exhaustive check finds no cover.
pub fn sample_x3c(
    m: usize,
    n: usize,
    planted: bool,
    seed: u64,
) -> Result<X3CInstance, DatagenError> {
    if m == 0 || m % 3 != 0 {
        return Err(DatagenError::BadUniverse(m));
    }
    let k = m / 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_triple = |rng: &mut ChaCha8Rng| -> [usize; 3] {
        let mut all: Vec<usize> = (1..=m).collect();
        all.shuffle(rng);
        let mut t = [all[0], all[1], all[2]];
        t.sort_unstable();
        t
    };
    if planted {
        if n < k {
            return Err(DatagenError::TooFewSets { need: k, got: n });
        }
        let mut elems: Vec<usize> = (1..=m).collect();
        elems.shuffle(&mut rng);
        let mut sets: Vec<[usize; 3]> = elems
            .chunks(3)
            .map(|c| {
                let mut t = [c[0], c[1], c[2]];
                t.sort_unstable();
                t
            })
            .collect();
        while sets.len() < n {
            sets.push(random_triple(&mut rng));
        }
        sets.shuffle(&mut rng);
        let inst = X3CInstance { m, sets };
        debug_assert!(exhaustive_cover_exists(&inst));
        Ok(inst)
    } else {
        for _ in 0..10_000 {
            let sets: Vec<[usize; 3]> = (0..n).map(|_| random_triple(&mut rng)).collect();
            let inst = X3CInstance { m, sets };
            if !exhaustive_cover_exists(&inst) {
                return Ok(inst);
            }
        }
        Err(DatagenError::NoCoverUnreachable { m, n })
    }
}

/// Element gadget: a root with tip edges of length `2j` for `j = 1..=m`.
/// With `split = Some(i)`, edge `2i` is split in the middle and a unit side
/// leaf hangs off the split node.
fn build_gadget(b: &mut TreeBuilder, parent: NodeId, base: f64, m: usize, split: Option<usize>) {
    let g = b.child(parent, base);
    for j in 1..=m {
        if split == Some(j) {
            let s = b.child(g, base + j as f64);
            b.child(s, base + 2.0 * j as f64);
            b.child(s, base + j as f64 + 1.0);
        } else {
            b.child(g, base + 2.0 * j as f64);
        }
    }
}

/// Standalone element gadget under a degree-one root, suitable for direct
/// distance computations between gadget variants.
pub fn standalone_gadget(m: usize, split: Option<usize>) -> AbstractMergeTree {
    let mut b = TreeBuilder::new();
    let pr = b.root(0.0);
    build_gadget(&mut b, pr, 1.0, m, split);
    b.build().expect("gadget construction is valid")
}

/// Set gadget: a root carrying one split element gadget per member of
/// `set`, each on a unit edge.
fn build_set_gadget(b: &mut TreeBuilder, parent: NodeId, base: f64, m: usize, set: &[usize; 3]) {
    let h = b.child(parent, base);
    for &u in set {
        build_gadget(b, h, base + 1.0, m, Some(u));
    }
}

/// Unsplit variant used on the right-hand side: three full element gadgets.
fn build_h_copy(b: &mut TreeBuilder, parent: NodeId, base: f64, m: usize) {
    let h = b.child(parent, base);
    for _ in 0..3 {
        build_gadget(b, h, base + 1.0, m, None);
    }
}

/// Builds the reduction pair for an instance and target cover size `k`.
/// The left tree stacks one set gadget per set; the right tree carries one
/// split element gadget per universe element plus `n - k` unsplit copies.
/// An exact cover of size `k` exists iff the distance is `3n - 2k`.
pub fn x3c_trees(
    inst: &X3CInstance,
    k: usize,
) -> Result<(AbstractMergeTree, AbstractMergeTree), DatagenError> {
    inst.validate()?;
    let n = inst.sets.len();
    if k > n {
        return Err(DatagenError::TooFewSets { need: k, got: n });
    }
    let m = inst.m;

    let mut b1 = TreeBuilder::new();
    let pr = b1.root(0.0);
    let r = b1.child(pr, 1.0);
    for set in &inst.sets {
        build_set_gadget(&mut b1, r, 2.0, m, set);
    }
    let t1 = b1.build().expect("left reduction tree is valid");

    let mut b2 = TreeBuilder::new();
    let pr = b2.root(0.0);
    let r = b2.child(pr, 1.0);
    for i in 1..=m {
        build_gadget(&mut b2, r, 2.0, m, Some(i));
    }
    for _ in 0..(n - k) {
        build_h_copy(&mut b2, r, 2.0, m);
    }
    let t2 = b2.build().expect("right reduction tree is valid");
    Ok((t1, t2))
}

/// Expected node counts for the reduction trees, by construction.
pub fn x3c_node_counts(m: usize, n: usize, k: usize) -> (usize, usize) {
    let t1 = 2 + n * (1 + 3 * (m + 3));
    let t2 = 2 + m * (m + 3) + (n - k) * (1 + 3 * (m + 1));
    (t1, t2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Vertical,
    Horizontal,
}

/// Generator parameters for the synthetic ensembles. The vertical kind
/// perturbs the heights of four main branches so the most persistent peak
/// varies; the horizontal kind alternates which of two taller features
/// hosts the smallest one, a saddle swap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub member_count: usize,
    /// Base tip heights, strictly decreasing: four for vertical, three for
    /// horizontal.
    pub peak_heights: Vec<f64>,
    /// Uniform perturbation amplitude applied to feature edges.
    pub perturbation: f64,
    /// Swap edge length (horizontal only).
    pub swap_edge: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn vertical_default(seed: u64) -> Self {
        EnsembleSpec {
            kind: EnsembleKind::Vertical,
            member_count: 20,
            peak_heights: vec![10.0, 9.0, 8.0, 7.0],
            // Overlapping perturbed ranges for the top two peaks, so the
            // persistence order genuinely flips across members.
            perturbation: 0.75,
            swap_edge: 0.0,
            seed,
        }
    }

    pub fn horizontal_default(seed: u64) -> Self {
        EnsembleSpec {
            kind: EnsembleKind::Horizontal,
            member_count: 20,
            peak_heights: vec![10.0, 8.0, 6.0],
            // Must stay below 0.5 to keep the designed strict height order.
            perturbation: 0.25,
            swap_edge: 1.0,
            seed,
        }
    }
}

/// Generated ensemble plus its published analytic bounds: any pairwise
/// distance is at most `2 * swap_edge_length + worst_case_relabel_budget`.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub spec: EnsembleSpec,
    pub members: Vec<AbstractMergeTree>,
    /// Sum of per-edge perturbation ranges over all perturbed edges.
    pub worst_case_relabel_budget: f64,
    pub swap_edge_length: f64,
}

/// Fixed side-branch lengths for the vertical kind (five smaller maxima in
/// the 1.0..2.0 band); constant across members so zero perturbation yields
/// isomorphic trees.
const VERTICAL_SIDE_LENGTHS: [f64; 5] = [1.0, 1.25, 1.5, 1.75, 2.0];

fn check_heights(spec: &EnsembleSpec, expected: usize) -> Result<(), DatagenError> {
    let h = &spec.peak_heights;
    let ok = h.len() == expected
        && h.iter().all(|&x| x.is_finite() && x > 0.0)
        && h.windows(2).all(|w| w[0] > w[1]);
    if ok {
        Ok(())
    } else {
        Err(DatagenError::BadPeakHeights(h.clone()))
    }
}

fn perturbation_limit(spec: &EnsembleSpec) -> f64 {
    match spec.kind {
        EnsembleKind::Vertical => {
            // Peaks hang off the saddle at height 1; the main tip must stay
            // above the last chain saddle at height 6.
            let mut limit = f64::INFINITY;
            limit = limit.min(spec.peak_heights[0] - 6.0);
            for &h in &spec.peak_heights[1..] {
                limit = limit.min(h - 1.0);
            }
            limit
        }
        EnsembleKind::Horizontal => {
            let h = &spec.peak_heights;
            let s = spec.swap_edge;
            // A hosted lower feature gains `s` of height; strict order must
            // survive the worst perturbation pair.
            let mut limit = (h[0] - h[1] - s) / 2.0;
            limit = limit.min((h[1] - h[2]) / 2.0);
            // Feature edges must stay positive.
            limit = limit.min(h[2] - 1.0 - s);
            limit
        }
    }
}

pub fn make_ensemble(spec: &EnsembleSpec) -> Result<Ensemble, DatagenError> {
    if spec.member_count == 0 {
        return Err(DatagenError::NoMembers);
    }
    match spec.kind {
        EnsembleKind::Vertical => check_heights(spec, 4)?,
        EnsembleKind::Horizontal => {
            check_heights(spec, 3)?;
            if !(spec.swap_edge > 0.0 && spec.swap_edge.is_finite()) {
                return Err(DatagenError::BadLengths);
            }
        }
    }
    let limit = perturbation_limit(spec);
    if !(spec.perturbation >= 0.0 && spec.perturbation < limit) {
        return Err(DatagenError::PerturbationTooLarge { given: spec.perturbation, limit });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = |rng: &mut ChaCha8Rng| -> f64 {
        if spec.perturbation == 0.0 {
            0.0
        } else {
            rng.gen_range(-spec.perturbation..=spec.perturbation)
        }
    };

    let mut members = Vec::with_capacity(spec.member_count);
    match spec.kind {
        EnsembleKind::Vertical => {
            for _ in 0..spec.member_count {
                let mut b = TreeBuilder::new();
                let pr = b.root(0.0);
                let s0 = b.child(pr, 1.0);
                // Main branch: chain of five saddles, each with one fixed
                // side leaf, ending in the main tip.
                let mut cur = s0;
                for (i, side) in VERTICAL_SIDE_LENGTHS.iter().enumerate() {
                    let z = b.child(cur, 2.0 + i as f64);
                    b.child(z, 2.0 + i as f64 + side);
                    cur = z;
                }
                b.child(cur, spec.peak_heights[0] + noise(&mut rng));
                for &h in &spec.peak_heights[1..] {
                    b.child(s0, h + noise(&mut rng));
                }
                members.push(b.build().expect("vertical members are valid"));
            }
            let budget = 2.0 * spec.perturbation * spec.peak_heights.len() as f64;
            Ok(Ensemble {
                spec: spec.clone(),
                members,
                worst_case_relabel_budget: budget,
                swap_edge_length: 0.0,
            })
        }
        EnsembleKind::Horizontal => {
            let s = spec.swap_edge;
            // Rigid feature edges: a feature keeps its edge length whether
            // or not it hangs below the swap saddle, so opposite-parity
            // members differ by exactly one saddle swap plus noise.
            let base_len: Vec<f64> =
                spec.peak_heights.iter().map(|&h| h - 1.0 - s).collect();
            for idx in 0..spec.member_count {
                let a = base_len[0] + noise(&mut rng);
                let bf = base_len[1] + noise(&mut rng);
                let c = base_len[2] + noise(&mut rng);
                let mut b = TreeBuilder::new();
                let pr = b.root(0.0);
                let x = b.child(pr, 1.0);
                let z = b.child(x, 1.0 + s);
                if idx % 2 == 0 {
                    // C emerges from A's branch.
                    b.child(z, 1.0 + s + a);
                    b.child(z, 1.0 + s + c);
                    b.child(x, 1.0 + bf);
                } else {
                    // C emerges from B's branch.
                    b.child(z, 1.0 + s + bf);
                    b.child(z, 1.0 + s + c);
                    b.child(x, 1.0 + a);
                }
                members.push(b.build().expect("horizontal members are valid"));
            }
            let budget = 2.0 * spec.perturbation * 3.0;
            Ok(Ensemble {
                spec: spec.clone(),
                members,
                worst_case_relabel_budget: budget,
                swap_edge_length: s,
            })
        }
    }
}

/// Lengths for [`make_saddle_swap_pair`]: the shared root edge, the swap
/// edge, and the three feature edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapLengths {
    pub root_edge: f64,
    pub swap_edge: f64,
    pub feature_a: f64,
    pub feature_b: f64,
    pub feature_c: f64,
}

/// The two-tree saddle-swap example: the left tree groups features A and B
/// under the swap saddle with C beside them; the right tree groups B and C
/// instead. Feature edge lengths are identical on both sides, so an optimal
/// edit deletes the saddle and re-inserts it around the other group, paying
/// twice the swap edge.
pub fn make_saddle_swap_pair(
    lengths: SwapLengths,
) -> Result<(AbstractMergeTree, AbstractMergeTree), DatagenError> {
    let l = [
        lengths.root_edge,
        lengths.swap_edge,
        lengths.feature_a,
        lengths.feature_b,
        lengths.feature_c,
    ];
    if l.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(DatagenError::BadLengths);
    }
    let x = lengths.root_edge;
    let z = x + lengths.swap_edge;

    let mut b = TreeBuilder::new();
    let pr = b.root(0.0);
    let xv = b.child(pr, x);
    let zv = b.child(xv, z);
    b.child(zv, z + lengths.feature_a);
    b.child(zv, z + lengths.feature_b);
    b.child(xv, x + lengths.feature_c);
    let t1 = b.build().expect("swap pair left tree is valid");

    let mut b = TreeBuilder::new();
    let pr = b.root(0.0);
    let xv = b.child(pr, x);
    b.child(xv, x + lengths.feature_a);
    let zv = b.child(xv, z);
    b.child(zv, z + lengths.feature_b);
    b.child(zv, z + lengths.feature_c);
    let t2 = b.build().expect("swap pair right tree is valid");
    Ok((t1, t2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::brute_force_distance;
    use crate::tree::tree_to_json_string;

    #[test]
    fn random_trees_are_valid_deterministic_and_on_grid() {
        for n in [1usize, 2, 4, 5, 6, 7, 8, 9, 12, 15] {
            for seed in 0..8u64 {
                let t = random_tree(n, seed);
                assert_eq!(t.node_count(), n);
                assert!(t.validate().is_empty(), "n={n} seed={seed}");
                for v in 0..n {
                    let q = t.scalar(v) / 0.25;
                    assert_eq!(q, q.round(), "scalar off grid");
                }
                let again = random_tree(n, seed);
                assert_eq!(t, again);
            }
        }
    }

    #[test]
    #[should_panic(expected = "no valid tree")]
    fn random_tree_rejects_three_nodes() {
        let _ = random_tree(3, 0);
    }

    #[test]
    fn x3c_trees_match_construction_counts_and_persistences() {
        // (m, n, k) with hand-computed totals.
        for &(m, n, k, p1, p2) in
            &[(3usize, 1usize, 1usize, 44.0, 43.0), (3, 2, 1, 87.0, 83.0), (6, 3, 2, 400.0, 395.0)]
        {
            let inst = sample_x3c(m, n, true, 42).unwrap();
            let (t1, t2) = x3c_trees(&inst, k).unwrap();
            let (c1, c2) = x3c_node_counts(m, n, k);
            assert_eq!(t1.node_count(), c1);
            assert_eq!(t2.node_count(), c2);
            assert!(t1.validate().is_empty() && t2.validate().is_empty());
            assert_eq!(t1.total_persistence(), p1);
            assert_eq!(t2.total_persistence(), p2);
            // The reduction's target value equals the persistence gap.
            assert_eq!(p1 - p2, (3 * n) as f64 - (2 * k) as f64);
        }
    }

    #[test]
    fn sampled_instances_have_or_lack_covers_as_requested() {
        for seed in 0..6u64 {
            let planted = sample_x3c(6, 3, true, seed).unwrap();
            assert!(exhaustive_cover_exists(&planted));
            let free = sample_x3c(6, 2, false, seed).unwrap();
            assert!(!exhaustive_cover_exists(&free));
            assert_eq!(free.sets.len(), 2);
        }
        // A single triple over m=3 always covers; sampling must give up.
        assert!(matches!(
            sample_x3c(3, 1, false, 7),
            Err(DatagenError::NoCoverUnreachable { .. })
        ));
        assert!(matches!(sample_x3c(4, 2, true, 0), Err(DatagenError::BadUniverse(4))));
    }

    #[test]
    fn gadget_shapes_and_persistences() {
        let g = standalone_gadget(3, None);
        assert_eq!(g.node_count(), 5); // root + gadget root + 3 tips
        assert_eq!(g.subtree_persistence(1), 12.0); // 2 + 4 + 6
        let gi = standalone_gadget(3, Some(2));
        assert_eq!(gi.node_count(), 8);
        assert_eq!(gi.subtree_persistence(1), 13.0); // split halves + unit side edge
        assert!(gi.validate().is_empty());
    }

    #[test]
    fn vertical_members_are_isomorphic_without_noise() {
        let mut spec = EnsembleSpec::vertical_default(5);
        spec.perturbation = 0.0;
        let e = make_ensemble(&spec).unwrap();
        assert_eq!(e.members.len(), 20);
        let sig = e.members[0].canonical_signature();
        for m in &e.members {
            assert_eq!(m.node_count(), 16);
            assert!(m.validate().is_empty());
            assert_eq!(m.canonical_signature(), sig);
        }
        assert_eq!(e.worst_case_relabel_budget, 0.0);
    }

    #[test]
    fn horizontal_members_alternate_nesting() {
        let mut spec = EnsembleSpec::horizontal_default(9);
        spec.perturbation = 0.0;
        let e = make_ensemble(&spec).unwrap();
        assert_eq!(e.members.len(), 20);
        for m in &e.members {
            assert_eq!(m.node_count(), 6);
            assert!(m.validate().is_empty());
        }
        let even = e.members[0].canonical_signature();
        let odd = e.members[1].canonical_signature();
        assert_ne!(even, odd);
        assert_eq!(e.members[2].canonical_signature(), even);
        assert_eq!(e.members[3].canonical_signature(), odd);
        // Differing only in the swap: distance is twice the swap edge.
        let d = brute_force_distance(&e.members[0], &e.members[1], 10).unwrap();
        assert_eq!(d.value, 2.0 * e.swap_edge_length);
    }

    #[test]
    fn ensembles_are_seed_deterministic_and_reject_large_noise() {
        let spec = EnsembleSpec::horizontal_default(7);
        let a = make_ensemble(&spec).unwrap();
        let b = make_ensemble(&spec).unwrap();
        for (x, y) in a.members.iter().zip(&b.members) {
            assert_eq!(tree_to_json_string(x), tree_to_json_string(y));
        }

        let mut bad = EnsembleSpec::horizontal_default(7);
        bad.perturbation = 0.5; // breaks the strict 10 > 8 > 6 order
        assert!(matches!(
            make_ensemble(&bad),
            Err(DatagenError::PerturbationTooLarge { .. })
        ));
        let mut bad = EnsembleSpec::vertical_default(7);
        bad.perturbation = 4.0; // main tip could sink below the last saddle
        assert!(matches!(
            make_ensemble(&bad),
            Err(DatagenError::PerturbationTooLarge { .. })
        ));
    }

    #[test]
    fn saddle_swap_pair_distance_is_twice_the_swap_edge() {
        let (t1, t2) = make_saddle_swap_pair(SwapLengths {
            root_edge: 1.0,
            swap_edge: 1.0,
            feature_a: 4.0,
            feature_b: 4.0,
            feature_c: 2.0,
        })
        .unwrap();
        assert_eq!(t1.node_count(), 6);
        assert_eq!(t1.total_persistence(), t2.total_persistence());
        let d = brute_force_distance(&t1, &t2, 10).unwrap();
        assert_eq!(d.value, 2.0);

        for s in [0.5, 3.0] {
            let (t1, t2) = make_saddle_swap_pair(SwapLengths {
                root_edge: 1.0,
                swap_edge: s,
                feature_a: 4.0,
                feature_b: 4.0,
                feature_c: 2.0,
            })
            .unwrap();
            let d = brute_force_distance(&t1, &t2, 10).unwrap();
            assert_eq!(d.value, 2.0 * s);
        }

        assert!(matches!(
            make_saddle_swap_pair(SwapLengths {
                root_edge: 0.0,
                swap_edge: 1.0,
                feature_a: 1.0,
                feature_b: 1.0,
                feature_c: 1.0,
            }),
            Err(DatagenError::BadLengths)
        ));
    }
}
