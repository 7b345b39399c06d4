use alloc::vec::Vec;

use super::Tree;

/// Number of equal-width bins in [`TreeStats::radius_histogram`].
pub const RADIUS_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeStats {
    pub node_count: usize,
    pub leaf_count: usize,
    /// Depth of the deepest leaf; a single-leaf tree has depth 0.
    pub depth: usize,
    /// Sum of leaf sizes; always the corpus size.
    pub leaf_points: usize,
    /// `max radius(child) / radius(parent)` over all edges with a nonzero
    /// parent radius. Never exceeds 1.
    pub gamma_hat: f64,
    /// `max radius(parent) / radius(child)` over edges with a nonzero child
    /// radius: the fastest per-level shrink of cell size. 1 when undefined.
    pub max_shrink: f64,
    /// Twice the root radius; an upper bound on the data diameter.
    pub root_diameter: f64,
    /// Node radii binned over `[0, root radius]`.
    pub radius_histogram: Vec<usize>,
}

pub fn tree_stats(tree: &Tree) -> TreeStats {
    let nodes = tree.nodes();
    let root_radius = nodes[0].radius;
    let mut histogram = alloc::vec![0usize; RADIUS_BINS];
    let mut stats = TreeStats {
        node_count: nodes.len(),
        leaf_count: 0,
        depth: 0,
        leaf_points: 0,
        gamma_hat: 0.0,
        max_shrink: 1.0,
        root_diameter: 2.0 * root_radius,
        radius_histogram: Vec::new(),
    };
    for node in nodes {
        let bin = if root_radius > 0.0 {
            ((node.radius / root_radius) * RADIUS_BINS as f64) as usize
        } else {
            0
        };
        histogram[bin.min(RADIUS_BINS - 1)] += 1;
        stats.depth = stats.depth.max(node.depth as usize);
        if node.is_leaf() {
            stats.leaf_count += 1;
            stats.leaf_points += node.count();
        }
        if node.parent != super::NO_NODE {
            let parent = nodes[node.parent as usize].radius;
            if parent > 0.0 {
                stats.gamma_hat = stats.gamma_hat.max(node.radius / parent);
            }
            if node.radius > 0.0 {
                stats.max_shrink = stats.max_shrink.max(parent / node.radius);
            }
        }
    }
    stats.radius_histogram = histogram;
    stats
}
