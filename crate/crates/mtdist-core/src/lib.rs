//! Exact deformation-based edit distance between abstract merge trees.
//!
//! An abstract merge tree is a rooted tree with a strictly increasing
//! scalar along every root-to-leaf path and a degree-one root. The
//! distance between two such trees is the cheapest edit mapping: matched
//! node pairs pay the difference of their run persistences, unmatched
//! material pays its own. This crate provides the tree and edit model
//! ([`tree`], [`edit`]), a branch-and-bound exact solver with threshold
//! decisions ([`solve`]), a binary-program encoding with an MPS bridge for
//! external solvers ([`ip`], [`mps`]), distance-matrix computation
//! ([`matrix`]), and generators for benchmark and hardness families
//! ([`datagen`]).

pub mod datagen;
pub mod edit;
pub mod ip;
pub mod matrix;
pub mod mps;
pub mod solve;
pub mod tree;

pub use datagen::{
    make_ensemble, make_saddle_swap_pair, random_tree, sample_x3c, standalone_gadget, x3c_trees,
    DatagenError, Ensemble, EnsembleKind, EnsembleSpec, X3CInstance,
};
pub use edit::{
    brute_force_distance, enumerate_valid_mappings, mapping_cost, EditMapping, EditOperation,
    MappingCostBreakdown, MappingError, NodeStatus, OracleError, ORACLE_NODE_CAP,
};
pub use ip::{encode, instance_optimum, reencode_loop, EncodeConfig, IpInstance, PruningBounds};
pub use matrix::{compute_matrix, DistanceMatrix};
pub use mps::{export_mps, import_solution, write_solution};
pub use solve::{
    decide_threshold, greedy_mapping, solve_builtin, BackendKind, Limits, ReencodeEntry,
    SolveError, SolveResult, SolveStats, SolveStatus, ThresholdOutcome,
};
pub use tree::{
    load_tree, save_tree, tree_from_json_str, tree_to_json_string, AbstractMergeTree, LoadError,
    NodeId, TreeBuilder, TreeData, TreeError, TreeNodeRecord, Violation,
};
