use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::strategies::{build_dedicated, cknn_query, query_then_filter, reconfigured_query};
use super::{
    brute_force_cknn, build_cond_index, resolve_node_set, CondIndex, DedicatedTree, NodeSetCache,
    ResultList, Strategy, VisitCounters, DEFAULT_RECONFIGURE_THRESHOLD, QTF_GROWTH, QTF_INITIAL,
};
use crate::corpus::condition::Condition;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::tree::{build_ball_tree, Tree};

/// Leaf size used for retrieval trees unless configured otherwise.
pub const DEFAULT_LEAF_SIZE: usize = 40;

/// Tuning knobs for [`Engine::query`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryOptions {
    pub initial: usize,
    pub growth: usize,
    pub threshold: usize,
    /// Leaf size of dedicated trees.
    pub leaf_size: usize,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            initial: QTF_INITIAL,
            growth: QTF_GROWTH,
            threshold: DEFAULT_RECONFIGURE_THRESHOLD,
            leaf_size: DEFAULT_LEAF_SIZE,
        }
    }
}

/// A tree, its conditional index and their caches, queried by strategy.
#[derive(Debug)]
pub struct Engine {
    tree: Arc<Tree>,
    index: CondIndex,
    cache: NodeSetCache,
    dedicated: spin::RwLock<BTreeMap<(alloc::string::String, usize), Arc<DedicatedTree>>>,
}

impl Engine {
    /// Builds a ball tree and an index over every attribute.
    pub fn build(corpus: Arc<Corpus>, leaf_size: usize) -> Result<Engine> {
        let tree = build_ball_tree(corpus, leaf_size)?;
        let index = build_cond_index(&tree, &tree.corpus().clone(), &[])?;
        Engine::from_parts(Arc::new(tree), index)
    }

    pub fn from_parts(tree: Arc<Tree>, index: CondIndex) -> Result<Engine> {
        index.check_tree(&tree)?;
        let cache = NodeSetCache::new(&index);
        Ok(Engine {
            tree,
            index,
            cache,
            dedicated: spin::RwLock::new(BTreeMap::new()),
        })
    }

    pub fn tree(&self) -> &Arc<Tree> {
        &self.tree
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        self.tree.corpus()
    }

    pub fn index(&self) -> &CondIndex {
        &self.index
    }

    pub fn cache(&self) -> &NodeSetCache {
        &self.cache
    }

    /// Dedicated tree for `expr`, built on first use and kept.
    pub fn dedicated(&self, expr: &Condition, leaf_size: usize) -> Result<Arc<DedicatedTree>> {
        let key = (expr.canonical(), leaf_size);
        if let Some(t) = self.dedicated.read().get(&key) {
            return Ok(t.clone());
        }
        let built = Arc::new(build_dedicated(self.corpus(), expr, leaf_size)?);
        Ok(self.dedicated.write().entry(key).or_insert(built).clone())
    }

    pub fn query(
        &self,
        strategy: Strategy,
        q: &[f32],
        expr: &Condition,
        k: usize,
        opts: &QueryOptions,
    ) -> Result<ResultList> {
        let tree = &*self.tree;
        match strategy {
            Strategy::Conditional => cknn_query(tree, &self.index, q, expr, k, &self.cache),
            Strategy::QueryThenFilter => {
                query_then_filter(tree, q, expr, k, opts.initial, opts.growth)
            }
            Strategy::Reconfigured => {
                reconfigured_query(tree, &self.index, q, expr, k, opts.threshold, &self.cache)
            }
            Strategy::BruteForce => brute_force_cknn(self.corpus(), q, expr, k),
            Strategy::Dedicated => {
                if k == 0 {
                    return Err(Error::param("k must be at least 1"));
                }
                let resolved = resolve_node_set(&self.index, expr, &self.cache)?;
                if resolved.members.is_empty() {
                    self.corpus().prepare_query(q)?;
                    return Ok(ResultList {
                        neighbors: Vec::new(),
                        k,
                        condition: resolved.canonical.clone(),
                        strategy,
                        path: None,
                        counters: VisitCounters::default(),
                    });
                }
                self.dedicated(expr, opts.leaf_size)?.query(q, k)
            }
            Strategy::Batched => {
                let mut grid =
                    super::batched_brute_force(self.corpus(), q, core::slice::from_ref(expr), k)?;
                if grid.len() != 1 {
                    return Err(Error::DimensionMismatch {
                        expected: self.corpus().dim(),
                        found: q.len(),
                    });
                }
                Ok(grid.remove(0).remove(0))
            }
        }
    }
}
