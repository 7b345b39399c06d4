//! Inverted index from attribute values to the tree nodes that dominate them,
//! plus every conditional search strategy built on top of it.
//!
//! For a value `c`, the index stores the set of nodes with at least one point
//! labelled `c` below them. That set is closed under "parent of". A
//! condition's node set is computed from these sets structurally: terms look
//! up their value, OR takes the union, AND the intersection, and NOT the union
//! over the attribute's remaining values. Union is exact. Intersection can
//! return extra nodes (two values may meet in a node without sharing a
//! point) but never drops one, so the search stays exact as long as leaves
//! also test point membership.

mod batched;
mod engine;
mod strategies;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use core::sync::atomic::{AtomicUsize, Ordering};

pub use batched::batched_brute_force;
pub use engine::{Engine, QueryOptions, DEFAULT_LEAF_SIZE};
pub use strategies::{
    brute_force_cknn, build_dedicated, cknn_query, query_then_filter, reconfigured_query,
    DedicatedTree,
};

use crate::corpus::condition::{Bound, Condition};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::sets::{IdSet, NodeSet};
use crate::tree::{Neighbor, Tree};

/// Initial candidate count for query-then-filter.
pub const QTF_INITIAL: usize = 50;
/// Geometric growth factor for query-then-filter retries.
pub const QTF_GROWTH: usize = 5;
/// Default condition size below which the reconfigured strategy switches to
/// brute force.
pub const DEFAULT_RECONFIGURE_THRESHOLD: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Pruned tree search.
    Conditional,
    QueryThenFilter,
    /// Brute force below a size threshold, query-then-filter above it.
    Reconfigured,
    BruteForce,
    /// Tree built over the condition's points only.
    Dedicated,
    Batched,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Conditional,
        Strategy::QueryThenFilter,
        Strategy::Reconfigured,
        Strategy::BruteForce,
        Strategy::Dedicated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Conditional => "cond",
            Strategy::QueryThenFilter => "qtf",
            Strategy::Reconfigured => "reconf",
            Strategy::BruteForce => "brute",
            Strategy::Dedicated => "dedicated",
            Strategy::Batched => "batched",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cond" | "conditional" => Strategy::Conditional,
            "qtf" | "query_then_filter" => Strategy::QueryThenFilter,
            "reconf" | "reconfigured" => Strategy::Reconfigured,
            "brute" | "brute_force" => Strategy::BruteForce,
            "dedicated" => Strategy::Dedicated,
            "batched" => Strategy::Batched,
            other => return Err(Error::param(alloc::format!("unknown strategy `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VisitCounters {
    pub nodes_visited: u64,
    pub points_scored: u64,
    /// Unconditional searches issued (query-then-filter only).
    pub rounds: u32,
    /// Largest candidate count requested from the unconditional search.
    pub widest_request: usize,
}

/// Ranked conditional neighbors plus an echo of the query.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultList {
    pub neighbors: Vec<Neighbor>,
    pub k: usize,
    /// Canonical condition text.
    pub condition: String,
    pub strategy: Strategy,
    /// Branch taken by [`Strategy::Reconfigured`].
    pub path: Option<Strategy>,
    pub counters: VisitCounters,
}

impl ResultList {
    pub fn ids(&self) -> Vec<u32> {
        self.neighbors.iter().map(|n| n.id).collect()
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Node sets for one attribute, indexed by the corpus value code.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedAttribute {
    name: String,
    corpus_attr: usize,
    node_sets: Vec<NodeSet>,
    counts: Vec<usize>,
}

impl IndexedAttribute {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Dominating nodes of the value with `code`.
    pub fn node_set(&self, code: u32) -> &NodeSet {
        &self.node_sets[code as usize]
    }

    pub fn node_sets(&self) -> &[NodeSet] {
        &self.node_sets
    }

    /// Points carrying each value.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

#[derive(Debug, Clone)]
pub struct CondIndex {
    corpus: Arc<Corpus>,
    tree_token: u64,
    node_count: usize,
    attributes: Vec<IndexedAttribute>,
}

/// Builds the value-to-node index for `attributes` (every attribute when
/// empty).
pub fn build_cond_index(tree: &Tree, corpus: &Corpus, attributes: &[&str]) -> Result<CondIndex> {
    if corpus.fingerprint() != tree.corpus().fingerprint() {
        return Err(Error::Mismatch);
    }
    let names: Vec<&str> = if attributes.is_empty() {
        corpus.attributes().iter().map(|a| a.name()).collect()
    } else {
        attributes.to_vec()
    };
    let node_count = tree.node_count();
    let mut indexed = Vec::with_capacity(names.len());
    for name in names {
        let corpus_attr = corpus
            .attribute_index(name)
            .ok_or_else(|| Error::UnknownAttribute(name.into()))?;
        if indexed
            .iter()
            .any(|a: &IndexedAttribute| a.corpus_attr == corpus_attr)
        {
            continue;
        }
        let column = &corpus.attributes()[corpus_attr];
        let mut node_sets = alloc::vec![NodeSet::empty(node_count); column.values().len()];
        for (leaf, node) in tree.nodes().iter().enumerate() {
            if !node.is_leaf() {
                continue;
            }
            for &p in tree.points_below(leaf as u32) {
                let set = &mut node_sets[column.code_of(p as usize) as usize];
                // Ancestors of a marked node are already marked.
                for id in tree.path_to_root(leaf as u32) {
                    if !set.put(id as usize) {
                        break;
                    }
                }
            }
        }
        let counts = (0..column.values().len())
            .map(|c| column.count(c as u32))
            .collect();
        indexed.push(IndexedAttribute {
            name: name.into(),
            corpus_attr,
            node_sets,
            counts,
        });
    }
    Ok(CondIndex {
        corpus: tree.corpus().clone(),
        tree_token: tree.token(),
        node_count,
        attributes: indexed,
    })
}

impl CondIndex {
    /// Rebuilds an index from stored per-value node sets, given in the
    /// corpus dictionary order of each attribute.
    pub fn from_parts(tree: &Tree, attributes: Vec<(String, Vec<NodeSet>)>) -> Result<CondIndex> {
        let corpus = tree.corpus();
        let mut indexed = Vec::with_capacity(attributes.len());
        for (name, node_sets) in attributes {
            let corpus_attr = corpus
                .attribute_index(&name)
                .ok_or_else(|| Error::UnknownAttribute(name.clone()))?;
            let column = &corpus.attributes()[corpus_attr];
            if node_sets.len() != column.values().len() {
                return Err(Error::InvalidTree(alloc::format!(
                    "index for `{name}` has {} values, corpus has {}",
                    node_sets.len(),
                    column.values().len()
                )));
            }
            for set in &node_sets {
                let closed = set.universe() == tree.node_count()
                    && set.iter().all(|id| {
                        let parent = tree.node(id as u32).parent;
                        parent == crate::tree::NO_NODE || set.contains(parent as usize)
                    });
                if !closed || set.is_empty() {
                    return Err(Error::InvalidTree(alloc::format!(
                        "index for `{name}` is not ancestor-closed"
                    )));
                }
            }
            let counts = (0..column.values().len())
                .map(|c| column.count(c as u32))
                .collect();
            indexed.push(IndexedAttribute {
                name,
                corpus_attr,
                node_sets,
                counts,
            });
        }
        Ok(CondIndex {
            corpus: corpus.clone(),
            tree_token: tree.token(),
            node_count: tree.node_count(),
            attributes: indexed,
        })
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn attributes(&self) -> &[IndexedAttribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&IndexedAttribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    /// Dominating nodes of `attribute = value`; `None` if either is unknown.
    pub fn class_nodes(&self, attribute: &str, value: &str) -> Option<&NodeSet> {
        let attr = self.attribute(attribute)?;
        let code = self.corpus.attributes()[attr.corpus_attr].code(value)?;
        Some(attr.node_set(code))
    }

    pub(crate) fn token(&self) -> u64 {
        self.tree_token
    }

    pub(crate) fn check_tree(&self, tree: &Tree) -> Result<()> {
        if tree.token() == self.tree_token {
            Ok(())
        } else {
            Err(Error::Mismatch)
        }
    }

    fn by_corpus_attr(&self, corpus_attr: usize) -> Result<&IndexedAttribute> {
        self.attributes
            .iter()
            .find(|a| a.corpus_attr == corpus_attr)
            .ok_or_else(|| Error::NotIndexed(self.corpus.attributes()[corpus_attr].name().into()))
    }

    fn node_set(&self, bound: &Bound) -> Result<NodeSet> {
        Ok(match bound {
            Bound::All => NodeSet::full(self.node_count),
            Bound::Empty => NodeSet::empty(self.node_count),
            Bound::Term { attr, code } => {
                let indexed = self.by_corpus_attr(*attr)?;
                match code {
                    Some(c) => indexed.node_set(*c).clone(),
                    None => NodeSet::empty(self.node_count),
                }
            }
            Bound::NotIn { attr, codes } => {
                let indexed = self.by_corpus_attr(*attr)?;
                let mut acc = NodeSet::empty(self.node_count);
                for (code, set) in indexed.node_sets.iter().enumerate() {
                    if codes.binary_search(&(code as u32)).is_err() {
                        acc.union_with(set);
                    }
                }
                acc
            }
            Bound::And(items) => {
                let mut acc = NodeSet::full(self.node_count);
                for b in items {
                    acc.intersect_with(&self.node_set(b)?);
                }
                acc
            }
            Bound::Or(items) => {
                let mut acc = NodeSet::empty(self.node_count);
                for b in items {
                    acc.union_with(&self.node_set(b)?);
                }
                acc
            }
        })
    }
}

/// A condition resolved against one index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    /// Canonical condition text (the cache key).
    pub canonical: String,
    /// Nodes the search may enter.
    pub nodes: NodeSet,
    /// Points satisfying the condition.
    pub members: IdSet,
}

/// Memo table from canonical condition text to resolved sets.
///
/// Concurrent misses on the same key may both compute; the first insert
/// wins and both callers observe identical sets.
#[derive(Debug)]
pub struct NodeSetCache {
    token: u64,
    map: spin::RwLock<BTreeMap<String, Arc<Resolved>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl NodeSetCache {
    pub fn new(index: &CondIndex) -> Self {
        NodeSetCache {
            token: index.token(),
            map: spin::RwLock::new(BTreeMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.map.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (hits, misses)
    pub fn stats(&self) -> (u64, u64) {
        (
            self.hits.load(Ordering::Relaxed) as u64,
            self.misses.load(Ordering::Relaxed) as u64,
        )
    }

    pub fn clear(&self) {
        self.map.write().clear();
    }
}

/// Resolves `expr` to its node set and member set, memoized in `cache`
/// under the canonical condition text.
///
/// Values that never occur resolve to empty sets; attributes missing from
/// the corpus or the index are errors.
pub fn resolve_node_set(
    index: &CondIndex,
    expr: &Condition,
    cache: &NodeSetCache,
) -> Result<Arc<Resolved>> {
    if cache.token != index.token() {
        return Err(Error::Mismatch);
    }
    let key = expr.canonical();
    if let Some(hit) = cache.map.read().get(&key) {
        cache.hits.fetch_add(1, Ordering::Relaxed);
        return Ok(hit.clone());
    }
    cache.misses.fetch_add(1, Ordering::Relaxed);
    let bound = expr.bind(&index.corpus)?;
    let nodes = index.node_set(&bound.0)?;
    let members = bound.members(&index.corpus);
    let resolved = Arc::new(Resolved {
        canonical: key.clone(),
        nodes,
        members,
    });
    Ok(cache.map.write().entry(key).or_insert(resolved).clone())
}
