//! Binary space-partition trees (ball, KD and RPTree-Max) for exact KNN.
//!
//! Every node keeps a centroid and a covering radius regardless of the split
//! rule, so one lower bound drives the search for all three kinds. Points
//! below a node occupy a contiguous range of the tree's permutation array.

mod build;
mod search;
mod stats;

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use build::{build_ball_tree, build_kd_tree, build_rp_tree, build_tree};
pub use search::{knn_query, Neighbor};
pub(crate) use search::{search, KBest, SearchStats};
pub use stats::{tree_stats, TreeStats};

use crate::corpus::{dist, Corpus};
use crate::error::{Error, Result};
use crate::hash::Fnv;

/// Parent id of the root.
pub const NO_NODE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TreeKind {
    Ball,
    Kd,
    RpMax,
}

impl TreeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TreeKind::Ball => "ball",
            TreeKind::Kd => "kd",
            TreeKind::RpMax => "rp",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            TreeKind::Ball => 0,
            TreeKind::Kd => 1,
            TreeKind::RpMax => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => TreeKind::Ball,
            1 => TreeKind::Kd,
            2 => TreeKind::RpMax,
            _ => return None,
        })
    }
}

impl fmt::Display for TreeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TreeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ball" => Ok(TreeKind::Ball),
            "kd" => Ok(TreeKind::Kd),
            "rp" | "rp_max" | "rpmax" => Ok(TreeKind::RpMax),
            other => Err(Error::param(format!("unknown tree kind `{other}`"))),
        }
    }
}

/// How an internal node divided its points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Split {
    Leaf,
    /// Points with coordinate `dim` below `threshold` went left (ties are
    /// broken by point id).
    Axis {
        dim: u32,
        threshold: f64,
    },
    /// Projection onto the node's direction compared against `threshold`.
    Projection {
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub parent: u32,
    pub children: Option<[u32; 2]>,
    pub depth: u32,
    /// Range of the node's points in [`Tree::permutation`].
    pub start: u32,
    pub end: u32,
    pub radius: f64,
    pub split: Split,
}

impl TreeNode {
    pub fn count(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Raw components of a tree, used to rebuild one from storage.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeParts {
    pub kind: TreeKind,
    pub leaf_size: usize,
    pub nodes: Vec<TreeNode>,
    /// `node_count * d` centroid coordinates.
    pub centroids: Vec<f32>,
    /// `node_count * d` split directions for RPTree-Max, empty otherwise.
    pub directions: Vec<f32>,
    pub permutation: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct Tree {
    corpus: Arc<Corpus>,
    parts: TreeParts,
    leaf_of: Vec<u32>,
    token: u64,
}

/// Relative slack allowed when re-checking ball containment of loaded trees.
const CONTAINMENT_TOLERANCE: f64 = 1e-5;

impl Tree {
    /// Reassembles a tree over `corpus`, checking every structural invariant.
    pub fn from_parts(corpus: Arc<Corpus>, parts: TreeParts) -> Result<Tree> {
        validate(&corpus, &parts)?;
        Ok(Self::assemble(corpus, parts))
    }

    pub(crate) fn assemble(corpus: Arc<Corpus>, parts: TreeParts) -> Tree {
        let mut leaf_of = alloc::vec![NO_NODE; corpus.len()];
        for (id, node) in parts.nodes.iter().enumerate() {
            if node.is_leaf() {
                for &p in &parts.permutation[node.start as usize..node.end as usize] {
                    leaf_of[p as usize] = id as u32;
                }
            }
        }
        let mut h = Fnv::new();
        h.u64(corpus.fingerprint())
            .u64(u64::from(parts.kind.code()))
            .u64(parts.leaf_size as u64)
            .u64(parts.nodes.len() as u64);
        for p in &parts.permutation {
            h.u64(u64::from(*p));
        }
        let token = h.finish();
        Tree {
            corpus,
            parts,
            leaf_of,
            token,
        }
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn kind(&self) -> TreeKind {
        self.parts.kind
    }

    pub fn leaf_size(&self) -> usize {
        self.parts.leaf_size
    }

    pub fn parts(&self) -> &TreeParts {
        &self.parts
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.parts.nodes
    }

    #[inline]
    pub fn node(&self, id: u32) -> &TreeNode {
        &self.parts.nodes[id as usize]
    }

    pub fn node_count(&self) -> usize {
        self.parts.nodes.len()
    }

    #[inline]
    pub fn centroid(&self, id: u32) -> &[f32] {
        let d = self.corpus.dim();
        &self.parts.centroids[id as usize * d..(id as usize + 1) * d]
    }

    pub fn direction(&self, id: u32) -> Option<&[f32]> {
        let d = self.corpus.dim();
        (!self.parts.directions.is_empty())
            .then(|| &self.parts.directions[id as usize * d..(id as usize + 1) * d])
    }

    /// Point ids below `id`.
    #[inline]
    pub fn points_below(&self, id: u32) -> &[u32] {
        let n = self.node(id);
        &self.parts.permutation[n.start as usize..n.end as usize]
    }

    pub fn permutation(&self) -> &[u32] {
        &self.parts.permutation
    }

    /// Leaf holding `point`.
    pub fn leaf_of(&self, point: usize) -> u32 {
        self.leaf_of[point]
    }

    /// `node` followed by each of its ancestors up to the root.
    pub fn path_to_root(&self, node: u32) -> impl Iterator<Item = u32> + '_ {
        let mut next = node;
        core::iter::from_fn(move || {
            if next == NO_NODE {
                return None;
            }
            let cur = next;
            next = self.node(cur).parent;
            Some(cur)
        })
    }

    /// Identity of the tree and the corpus it was built over.
    pub fn token(&self) -> u64 {
        self.token
    }
}

fn invalid(msg: alloc::string::String) -> Error {
    Error::InvalidTree(msg)
}

fn validate(corpus: &Corpus, parts: &TreeParts) -> Result<()> {
    let n = corpus.len();
    let d = corpus.dim();
    let nodes = &parts.nodes;
    if nodes.is_empty() || parts.leaf_size == 0 {
        return Err(invalid("tree has no nodes or zero leaf size".into()));
    }
    if parts.centroids.len() != nodes.len() * d {
        return Err(invalid("centroid buffer has the wrong length".into()));
    }
    let expected_dirs = if parts.kind == TreeKind::RpMax {
        nodes.len() * d
    } else {
        0
    };
    if parts.directions.len() != expected_dirs {
        return Err(invalid("direction buffer has the wrong length".into()));
    }
    if parts.permutation.len() != n {
        return Err(invalid(format!(
            "permutation covers {} points, corpus has {n}",
            parts.permutation.len()
        )));
    }
    let mut seen = alloc::vec![false; n];
    for &p in &parts.permutation {
        let p = p as usize;
        if p >= n || core::mem::replace(&mut seen[p], true) {
            return Err(invalid("permutation is not a bijection".into()));
        }
    }
    let root = &nodes[0];
    if root.parent != NO_NODE || root.depth != 0 || root.start != 0 || root.end as usize != n {
        return Err(invalid("root must cover every point".into()));
    }
    let mut reached = alloc::vec![false; nodes.len()];
    let mut stack = alloc::vec![0u32];
    while let Some(id) = stack.pop() {
        if core::mem::replace(&mut reached[id as usize], true) {
            return Err(invalid(format!("node {id} reached twice")));
        }
        let node = &nodes[id as usize];
        if !(node.radius.is_finite() && node.radius >= 0.0) || node.start >= node.end {
            return Err(invalid(format!("node {id} has a bad radius or range")));
        }
        let centroid = &parts.centroids[id as usize * d..(id as usize + 1) * d];
        let limit = node.radius * (1.0 + CONTAINMENT_TOLERANCE) + 1e-12;
        for &p in &parts.permutation[node.start as usize..node.end as usize] {
            if dist(corpus.point(p as usize), centroid) > limit {
                return Err(invalid(format!("point {p} lies outside node {id}")));
            }
        }
        match node.children {
            None => {
                if node.count() > parts.leaf_size && nodes.len() > 1 {
                    return Err(invalid(format!("leaf {id} exceeds the leaf size")));
                }
            }
            Some([l, r]) => {
                let (Some(left), Some(right)) = (nodes.get(l as usize), nodes.get(r as usize))
                else {
                    return Err(invalid(format!("node {id} has a dangling child")));
                };
                let consistent = left.parent == id
                    && right.parent == id
                    && left.depth == node.depth + 1
                    && right.depth == node.depth + 1
                    && left.start == node.start
                    && left.end == right.start
                    && right.end == node.end;
                if !consistent {
                    return Err(invalid(format!("children of node {id} are inconsistent")));
                }
                stack.push(r);
                stack.push(l);
            }
        }
    }
    if reached.iter().any(|r| !r) {
        return Err(invalid("unreachable nodes".into()));
    }
    Ok(())
}
