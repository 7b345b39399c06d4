use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::Tree;
use crate::corpus::dist;
use crate::error::{Error, Result};
use crate::sets::{IdSet, NodeSet};

/// Relative slack on ball lower bounds. Bounds and point distances are
/// rounded independently; without slack a node holding a point tied with the
/// current k-th distance could be pruned.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist: f64,
    id: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

/// The `k` best (distance, id) pairs seen so far, ordered by distance then id.
#[derive(Debug)]
pub(crate) struct KBest {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl KBest {
    pub(crate) fn new(k: usize) -> Self {
        KBest {
            k,
            heap: BinaryHeap::with_capacity(k.min(4096) + 1),
        }
    }

    /// Distance a new point must not exceed to enter; infinite until full.
    #[inline]
    pub(crate) fn bound(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |c| c.dist)
        }
    }

    #[inline]
    pub(crate) fn offer(&mut self, dist: f64, id: u32) {
        let c = Candidate { dist, id };
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(mut top) = self.heap.peek_mut() {
            if c < *top {
                *top = c;
            }
        }
    }

    pub(crate) fn into_sorted(self) -> Vec<Neighbor> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                id: c.id,
                distance: c.dist,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct SearchStats {
    pub nodes_visited: u64,
    pub points_scored: u64,
}

/// Depth-first, nearer-child-first search.
///
/// Nodes outside `valid` are never entered, and at leaves only points in
/// `members` are scored. With both `None` this is plain KNN.
pub(crate) fn search(
    tree: &Tree,
    q: &[f32],
    k: usize,
    valid: Option<&NodeSet>,
    members: Option<&IdSet>,
    stats: &mut SearchStats,
) -> Vec<Neighbor> {
    let corpus = tree.corpus();
    let mut best = KBest::new(k);
    let allowed = |node: u32| valid.is_none_or(|v| v.contains(node as usize));
    let bound_of = |node: u32| {
        let dq = dist(q, tree.centroid(node));
        let r = tree.node(node).radius;
        dq - r - BOUND_SLACK * (dq + r)
    };
    if k == 0 || !allowed(0) {
        return best.into_sorted();
    }
    let mut stack: Vec<(u32, f64)> = alloc::vec![(0, bound_of(0))];
    while let Some((id, lower)) = stack.pop() {
        if lower > best.bound() {
            continue;
        }
        stats.nodes_visited += 1;
        match tree.node(id).children {
            None => {
                for &p in tree.points_below(id) {
                    if members.is_none_or(|m| m.contains(p as usize)) {
                        stats.points_scored += 1;
                        best.offer(dist(q, corpus.point(p as usize)), p);
                    }
                }
            }
            Some([l, r]) => {
                let mut near = (allowed(l)).then(|| (l, bound_of(l)));
                let mut far = (allowed(r)).then(|| (r, bound_of(r)));
                if let (Some(a), Some(b)) = (near, far) {
                    if b.1 < a.1 {
                        core::mem::swap(&mut near, &mut far);
                    }
                }
                stack.extend(far);
                stack.extend(near);
            }
        }
    }
    best.into_sorted()
}

/// Exact unconditional KNN: `min(k, n)` neighbors by ascending distance,
/// ties broken by smaller id.
pub fn knn_query(tree: &Tree, q: &[f32], k: usize) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let q = tree.corpus().prepare_query(q)?;
    let mut stats = SearchStats::default();
    Ok(search(tree, &q, k, None, None, &mut stats))
}
