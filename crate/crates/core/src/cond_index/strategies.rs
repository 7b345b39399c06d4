use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{resolve_node_set, CondIndex, NodeSetCache, ResultList, Strategy, VisitCounters};
use crate::corpus::condition::Condition;
use crate::corpus::{dist, Corpus};
use crate::error::{Error, Result};
use crate::sets::IdSet;
use crate::tree::{build_ball_tree, search, KBest, Neighbor, SearchStats, Tree};

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::param("k must be at least 1"))
    } else {
        Ok(())
    }
}

fn result(
    neighbors: Vec<Neighbor>,
    k: usize,
    condition: String,
    strategy: Strategy,
    counters: VisitCounters,
) -> ResultList {
    ResultList {
        neighbors,
        k,
        condition,
        strategy,
        path: None,
        counters,
    }
}

/// Pruned conditional search.
///
/// Resolves the condition to its node set, then runs the tree search
/// entering only those nodes and scoring only member points at leaves.
pub fn cknn_query(
    tree: &Tree,
    index: &CondIndex,
    q: &[f32],
    expr: &Condition,
    k: usize,
    cache: &NodeSetCache,
) -> Result<ResultList> {
    check_k(k)?;
    index.check_tree(tree)?;
    let q = tree.corpus().prepare_query(q)?;
    let resolved = resolve_node_set(index, expr, cache)?;
    let mut stats = SearchStats::default();
    let neighbors = if resolved.members.is_empty() {
        Vec::new()
    } else {
        search(
            tree,
            &q,
            k,
            Some(&resolved.nodes),
            Some(&resolved.members),
            &mut stats,
        )
    };
    Ok(result(
        neighbors,
        k,
        resolved.canonical.clone(),
        Strategy::Conditional,
        VisitCounters {
            nodes_visited: stats.nodes_visited,
            points_scored: stats.points_scored,
            ..Default::default()
        },
    ))
}

/// Scores every member of `members` against a prepared query.
pub(crate) fn scan_members(
    corpus: &Corpus,
    q: &[f32],
    members: &IdSet,
    k: usize,
) -> (Vec<Neighbor>, u64) {
    let mut best = KBest::new(k);
    let mut scored = 0;
    for id in members.iter() {
        scored += 1;
        best.offer(dist(q, corpus.point(id)), id as u32);
    }
    (best.into_sorted(), scored)
}

/// Exhaustive scan over the points satisfying `expr`.
pub fn brute_force_cknn(
    corpus: &Corpus,
    q: &[f32],
    expr: &Condition,
    k: usize,
) -> Result<ResultList> {
    check_k(k)?;
    let q = corpus.prepare_query(q)?;
    let members = expr.bind(corpus)?.members(corpus);
    let (neighbors, scored) = scan_members(corpus, &q, &members, k);
    Ok(result(
        neighbors,
        k,
        expr.canonical(),
        Strategy::BruteForce,
        VisitCounters {
            points_scored: scored,
            ..Default::default()
        },
    ))
}

/// Unconditional search with a growing candidate count, filtered by
/// `keep`. Stops once `k` candidates pass or the whole corpus was returned.
pub(crate) fn filter_rounds<F: Fn(u32) -> bool>(
    tree: &Tree,
    q: &[f32],
    k: usize,
    initial: usize,
    growth: usize,
    keep: F,
) -> Result<(Vec<Neighbor>, VisitCounters)> {
    if initial == 0 || growth < 2 {
        return Err(Error::param(
            "query-then-filter needs initial >= 1 and growth >= 2",
        ));
    }
    let n = tree.corpus().len();
    let mut counters = VisitCounters::default();
    let mut request = initial;
    loop {
        let mut stats = SearchStats::default();
        let candidates = search(tree, q, request.min(n), None, None, &mut stats);
        counters.rounds += 1;
        counters.widest_request = request;
        counters.nodes_visited += stats.nodes_visited;
        counters.points_scored += stats.points_scored;
        let mut kept: Vec<Neighbor> = candidates.into_iter().filter(|c| keep(c.id)).collect();
        if kept.len() >= k || request >= n {
            kept.truncate(k);
            return Ok((kept, counters));
        }
        request = request.saturating_mul(growth);
    }
}

/// Query-then-filter: unconditional KNN for `initial` candidates, keep the
/// ones satisfying `expr`, and multiply the candidate count by `growth`
/// until `k` survive or the corpus is exhausted.
pub fn query_then_filter(
    tree: &Tree,
    q: &[f32],
    expr: &Condition,
    k: usize,
    initial: usize,
    growth: usize,
) -> Result<ResultList> {
    check_k(k)?;
    let corpus = tree.corpus();
    let q = corpus.prepare_query(q)?;
    let bound = expr.bind(corpus)?;
    let (neighbors, counters) = filter_rounds(tree, &q, k, initial, growth, |id| {
        bound.matches(corpus, id as usize)
    })?;
    Ok(result(
        neighbors,
        k,
        expr.canonical(),
        Strategy::QueryThenFilter,
        counters,
    ))
}

/// Brute force over the members when fewer than `threshold` points satisfy
/// `expr`, query-then-filter otherwise.
pub fn reconfigured_query(
    tree: &Tree,
    index: &CondIndex,
    q: &[f32],
    expr: &Condition,
    k: usize,
    threshold: usize,
    cache: &NodeSetCache,
) -> Result<ResultList> {
    check_k(k)?;
    index.check_tree(tree)?;
    let corpus = tree.corpus();
    let q = corpus.prepare_query(q)?;
    let resolved = resolve_node_set(index, expr, cache)?;
    let members = &resolved.members;
    let (neighbors, counters, path) = if members.count() < threshold {
        let (n, scored) = scan_members(corpus, &q, members, k);
        let counters = VisitCounters {
            points_scored: scored,
            ..Default::default()
        };
        (n, counters, Strategy::BruteForce)
    } else {
        let (n, c) = filter_rounds(tree, &q, k, super::QTF_INITIAL, super::QTF_GROWTH, |id| {
            members.contains(id as usize)
        })?;
        (n, c, Strategy::QueryThenFilter)
    };
    let mut out = result(
        neighbors,
        k,
        resolved.canonical.clone(),
        Strategy::Reconfigured,
        counters,
    );
    out.path = Some(path);
    Ok(out)
}

/// Ball tree over one condition's points, queried in place of the full
/// tree. Ids are mapped back to the full corpus.
#[derive(Debug, Clone)]
pub struct DedicatedTree {
    tree: Tree,
    original_ids: Vec<u32>,
    condition: String,
}

impl DedicatedTree {
    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    /// Full-corpus id of each point of the dedicated tree's corpus.
    pub fn original_ids(&self) -> &[u32] {
        &self.original_ids
    }

    pub fn query(&self, q: &[f32], k: usize) -> Result<ResultList> {
        check_k(k)?;
        let q = self.tree.corpus().prepare_query(q)?;
        let mut stats = SearchStats::default();
        let mut neighbors = search(&self.tree, &q, k, None, None, &mut stats);
        // Subset ids ascend with original ids, so tie order is preserved.
        for n in &mut neighbors {
            n.id = self.original_ids[n.id as usize];
        }
        Ok(result(
            neighbors,
            k,
            self.condition.clone(),
            Strategy::Dedicated,
            VisitCounters {
                nodes_visited: stats.nodes_visited,
                points_scored: stats.points_scored,
                ..Default::default()
            },
        ))
    }
}

/// Builds a ball tree over the points satisfying `expr`.
pub fn build_dedicated(
    corpus: &Corpus,
    expr: &Condition,
    leaf_size: usize,
) -> Result<DedicatedTree> {
    let members = expr.bind(corpus)?.members(corpus);
    if members.is_empty() {
        return Err(Error::EmptyCondition);
    }
    let (subset, original_ids) = corpus.subset(&members)?;
    Ok(DedicatedTree {
        tree: build_ball_tree(Arc::new(subset), leaf_size)?,
        original_ids,
        condition: expr.canonical(),
    })
}
