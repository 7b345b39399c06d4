//! Relative Conditioner Density, blind-spot extraction, a Gaussian Fréchet
//! distance for contrast, and the empirical harness for the subset-coverage
//! theorem on random-projection trees.
//!
//! `RCD(n, c) = (|n ∩ S_c| / |n|) * (|X| / |S_c|)`: how strongly node `n`
//! over- (> 1) or under- (< 1) represents the points labelled `c`.

mod binomial;
mod coverage;
mod frechet;
mod pairs;

use alloc::vec;
use alloc::vec::Vec;

pub use binomial::binomial_two_sided;
pub use coverage::{theorem1_experiment, theorem1_fraction, CoverageCurve, CoveragePoint};
pub use frechet::frechet_distance;
pub use pairs::{matched_moment_pair, PairKind, DROPPED_COMPONENT};

use crate::error::{Error, Result};
use crate::sets::IdSet;
use crate::tree::Tree;

/// Leaf size of trees built for RCD analysis.
pub const DEFAULT_RCD_LEAF_SIZE: usize = 500;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_BLIND_SPOT_THRESHOLD: f64 = 0.6;

fn check_members(tree: &Tree, members: &IdSet) -> Result<()> {
    if members.universe() != tree.corpus().len() {
        return Err(Error::DimensionMismatch {
            expected: tree.corpus().len(),
            found: members.universe(),
        });
    }
    if members.is_empty() {
        return Err(Error::DegenerateMembers("member set is empty".into()));
    }
    Ok(())
}

/// Member count below every node, from the leaves up.
fn member_counts(tree: &Tree, members: &IdSet) -> Vec<usize> {
    let nodes = tree.nodes();
    let mut counts = vec![0usize; nodes.len()];
    // Children always carry larger ids than their parent.
    for id in (0..nodes.len()).rev() {
        counts[id] = match nodes[id].children {
            Some([l, r]) => counts[l as usize] + counts[r as usize],
            None => tree
                .points_below(id as u32)
                .iter()
                .filter(|&&p| members.contains(p as usize))
                .count(),
        };
    }
    counts
}

fn ratio(members: usize, count: usize, total: usize, member_total: usize) -> f64 {
    // Exact integer products, so equal proportions give exactly 1.
    let num = members as u128 * total as u128;
    let den = count as u128 * member_total as u128;
    num as f64 / den as f64
}

/// RCD of one node.
pub fn rcd(tree: &Tree, members: &IdSet, node: u32) -> Result<f64> {
    check_members(tree, members)?;
    if node as usize >= tree.node_count() {
        return Err(Error::param("node id out of range"));
    }
    let below = tree.points_below(node);
    let inside = below
        .iter()
        .filter(|&&p| members.contains(p as usize))
        .count();
    Ok(ratio(
        inside,
        below.len(),
        members.universe(),
        members.count(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRcd {
    pub node: u32,
    pub depth: u32,
    /// Points below the node.
    pub count: usize,
    /// Members below the node.
    pub members: usize,
    pub rcd: f64,
    /// Two-sided exact binomial p-value against the global member share.
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcdReport {
    /// Indexed by node id.
    pub nodes: Vec<NodeRcd>,
    pub total: usize,
    pub member_total: usize,
    pub alpha: f64,
}

impl RcdReport {
    pub fn flagged(&self) -> usize {
        self.nodes.iter().filter(|n| n.significant).count()
    }

    pub fn flagged_fraction(&self) -> f64 {
        self.flagged() as f64 / self.nodes.len() as f64
    }
}

/// RCD and significance for every node. No multiple-testing correction is
/// applied.
pub fn rcd_report(tree: &Tree, members: &IdSet, alpha: f64) -> Result<RcdReport> {
    check_members(tree, members)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha must lie in (0, 1)"));
    }
    let total = members.universe();
    let member_total = members.count();
    if member_total == total {
        return Err(Error::DegenerateMembers("every point is a member".into()));
    }
    let share = member_total as f64 / total as f64;
    let counts = member_counts(tree, members);
    let nodes = tree
        .nodes()
        .iter()
        .enumerate()
        .map(|(id, node)| {
            let count = node.count();
            let inside = counts[id];
            let p_value = binomial_two_sided(count as u64, inside as u64, share);
            NodeRcd {
                node: id as u32,
                depth: node.depth,
                count,
                members: inside,
                rcd: ratio(inside, count, total, member_total),
                p_value,
                significant: p_value < alpha,
            }
        })
        .collect();
    Ok(RcdReport {
        nodes,
        total,
        member_total,
        alpha,
    })
}

/// A significantly under-represented region.
#[derive(Debug, Clone, PartialEq)]
pub struct BlindSpot {
    pub node: u32,
    pub depth: u32,
    pub rcd: f64,
    pub p_value: f64,
    /// Every point below the node, members or not.
    pub points: Vec<u32>,
}

/// Significant nodes with RCD strictly below `threshold`, deepest first
/// (ties by node id).
pub fn blind_spots(report: &RcdReport, tree: &Tree, threshold: f64) -> Vec<BlindSpot> {
    let mut spots: Vec<BlindSpot> = report
        .nodes
        .iter()
        .filter(|n| n.significant && n.rcd < threshold)
        .map(|n| {
            let mut points = tree.points_below(n.node).to_vec();
            points.sort_unstable();
            BlindSpot {
                node: n.node,
                depth: n.depth,
                rcd: n.rcd,
                p_value: n.p_value,
                points,
            }
        })
        .collect();
    spots.sort_by(|a, b| b.depth.cmp(&a.depth).then(a.node.cmp(&b.node)));
    spots
}
