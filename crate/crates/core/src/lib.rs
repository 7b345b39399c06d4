//! Exact conditional k-nearest-neighbor retrieval over binary space-partition
//! trees.
//!
//! A [`tree::Tree`] indexes a [`corpus::Corpus`] without regard to metadata.
//! A [`cond_index::CondIndex`] maps every categorical attribute value to the
//! set of tree nodes that have at least one point with that value below them.
//! Boolean conditions resolve to node sets by plain set algebra over those
//! entries, and the search skips every node outside the resolved set.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI, the
//! benchmark harness and the HTTP service live in the `condra` crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analytics;
pub mod cond_index;
pub mod corpus;
mod error;
mod hash;
mod sets;
pub mod tree;

pub use cond_index::{
    batched_brute_force, brute_force_cknn, build_cond_index, build_dedicated, cknn_query,
    query_then_filter, reconfigured_query, resolve_node_set, CondIndex, DedicatedTree, Engine,
    NodeSetCache, QueryOptions, Resolved, ResultList, Strategy, VisitCounters, DEFAULT_LEAF_SIZE,
    DEFAULT_RECONFIGURE_THRESHOLD, QTF_GROWTH, QTF_INITIAL,
};
pub use corpus::{
    condition::{parse_condition, Condition, ParseError},
    condition_members, distance, Attribute, Corpus, Metric,
};
pub use error::{Error, Result};
pub use sets::{IdSet, NodeSet};
pub use tree::{knn_query, tree_stats, Neighbor, Tree, TreeKind, TreeNode, TreeStats};
