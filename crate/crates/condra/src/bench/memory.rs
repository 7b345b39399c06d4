//! Storage sizes of the corpus, the tree and the conditional index.

use condra_core::corpus::Corpus;
use condra_core::{CondIndex, Tree};
use serde::Serialize;

use crate::format::{encode_index, encode_tree};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryTable {
    pub n: usize,
    pub d: usize,
    pub leaf_size: usize,
    pub node_count: usize,
    /// `2 n / l`.
    pub node_bound: f64,
    pub within_node_bound: bool,
    /// Distinct indexed values.
    pub values: usize,
    /// Vector payload as stored (32-bit).
    pub data_bytes: u64,
    /// Serialized tree without the index section.
    pub tree_bytes: u64,
    /// Centroid storage alone: `node_count * d * 4`.
    pub centroid_bytes: u64,
    /// Serialized index section.
    pub index_bytes: u64,
    /// `values * node_count / 8`: the bare bit-arrays.
    pub index_bit_bound: u64,
    /// The same three quantities with 8-byte entries, for comparison with
    /// tables that assume 64-bit storage.
    pub data_bytes_64: u64,
    pub centroid_bytes_64: u64,
    pub index_bytes_64: u64,
}

pub fn measure_memory(tree: &Tree, index: &CondIndex, corpus: &Corpus) -> MemoryTable {
    let (n, d) = (corpus.len() as u64, corpus.dim() as u64);
    let nodes = tree.node_count() as u64;
    let values: usize = index.attributes().iter().map(|a| a.node_sets().len()).sum();
    let node_bound = 2.0 * n as f64 / tree.leaf_size() as f64;
    MemoryTable {
        n: n as usize,
        d: d as usize,
        leaf_size: tree.leaf_size(),
        node_count: nodes as usize,
        node_bound,
        within_node_bound: nodes as f64 <= node_bound,
        values,
        data_bytes: n * d * 4,
        tree_bytes: encode_tree(tree, None).len() as u64,
        centroid_bytes: nodes * d * 4,
        index_bytes: encode_index(index).len() as u64,
        index_bit_bound: (values as u64 * nodes).div_ceil(8),
        data_bytes_64: n * d * 8,
        centroid_bytes_64: nodes * d * 8,
        index_bytes_64: values as u64 * nodes * 8,
    }
}

/// Closed-form sizes at 8 bytes per entry with `2 n / l` nodes:
/// (data, tree centroids, index) in bytes.
pub fn space_model_64(n: u64, d: u64, leaf_size: u64, values: u64) -> (u64, u64, u64) {
    let nodes = 2 * n / leaf_size;
    (n * d * 8, nodes * d * 8, values * nodes * 8)
}
