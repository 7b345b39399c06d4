use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Split, Tree, TreeKind, TreeNode, TreeParts, NO_NODE};
use crate::corpus::generate::{normal, rng};
use crate::corpus::{dist, Corpus};
use crate::error::{Error, Result};

/// Jitter draws tried before an RPTree-Max split falls back to the median.
const RP_JITTER_ATTEMPTS: usize = 64;

/// Ball tree: split at the balanced rank along the dimension of maximal
/// spread.
pub fn build_ball_tree(corpus: Arc<Corpus>, leaf_size: usize) -> Result<Tree> {
    build_tree(corpus, TreeKind::Ball, leaf_size, 0)
}

/// KD tree: split at the balanced rank along `depth mod d`, falling back to
/// the widest dimension when that axis is flat.
pub fn build_kd_tree(corpus: Arc<Corpus>, leaf_size: usize) -> Result<Tree> {
    build_tree(corpus, TreeKind::Kd, leaf_size, 0)
}

/// RPTree-Max: split on a random unit direction at the median projection
/// plus a jitter drawn uniformly from `[-1, 1] * 6 * diam / sqrt(d)`, where
/// `diam` is twice the node radius.
pub fn build_rp_tree(corpus: Arc<Corpus>, leaf_size: usize, seed: u64) -> Result<Tree> {
    build_tree(corpus, TreeKind::RpMax, leaf_size, seed)
}

/// Builds any tree kind; `seed` only matters for [`TreeKind::RpMax`].
pub fn build_tree(
    corpus: Arc<Corpus>,
    kind: TreeKind,
    leaf_size: usize,
    seed: u64,
) -> Result<Tree> {
    if leaf_size == 0 {
        return Err(Error::param("leaf_size must be at least 1"));
    }
    if corpus.len() > u32::MAX as usize - 1 {
        return Err(Error::param("corpus too large for 32-bit ids"));
    }
    let parts = Builder::new(&corpus, kind, leaf_size, seed).run();
    Ok(Tree::assemble(corpus, parts))
}

/// Left child size for a node of `m > leaf_size` points.
///
/// The node will end up with exactly `ceil(m / leaf_size)` leaves below it,
/// which caps the whole tree at `2 * ceil(n / leaf_size) - 1` nodes; within
/// that constraint the split sits as close to the median as possible.
pub(crate) fn balanced_split(m: usize, leaf_size: usize) -> usize {
    let leaves = m.div_ceil(leaf_size);
    let left_leaves = leaves.div_ceil(2);
    let lo = m - (leaves / 2) * leaf_size;
    let hi = left_leaves * leaf_size;
    (m / 2).clamp(lo, hi)
}

struct Builder<'a> {
    corpus: &'a Corpus,
    kind: TreeKind,
    leaf_size: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    centroids: Vec<f32>,
    directions: Vec<f32>,
    perm: Vec<u32>,
    scratch: Vec<(f64, u32)>,
}

impl<'a> Builder<'a> {
    fn new(corpus: &'a Corpus, kind: TreeKind, leaf_size: usize, seed: u64) -> Self {
        Builder {
            corpus,
            kind,
            leaf_size,
            rng: rng(seed),
            nodes: Vec::new(),
            centroids: Vec::new(),
            directions: Vec::new(),
            perm: (0..corpus.len() as u32).collect(),
            scratch: Vec::new(),
        }
    }

    fn run(mut self) -> TreeParts {
        let d = self.corpus.dim();
        self.push_node(NO_NODE, 0, 0, self.corpus.len());
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            self.fit_ball(id);
            let node = &self.nodes[id as usize];
            let (start, end) = (node.start as usize, node.end as usize);
            if end - start <= self.leaf_size {
                continue;
            }
            let (split, left_len) = match self.kind {
                TreeKind::Ball => self.split_axis(id, None),
                TreeKind::Kd => {
                    let depth = self.nodes[id as usize].depth as usize;
                    self.split_axis(id, Some(depth % d))
                }
                TreeKind::RpMax => self.split_projection(id),
            };
            let depth = self.nodes[id as usize].depth + 1;
            let mid = start + left_len;
            let left = self.push_node(id, depth, start, mid);
            let right = self.push_node(id, depth, mid, end);
            let node = &mut self.nodes[id as usize];
            node.split = split;
            node.children = Some([left, right]);
            stack.push(right);
            stack.push(left);
        }
        TreeParts {
            kind: self.kind,
            leaf_size: self.leaf_size,
            nodes: self.nodes,
            centroids: self.centroids,
            directions: self.directions,
            permutation: self.perm,
        }
    }

    fn push_node(&mut self, parent: u32, depth: u32, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(TreeNode {
            parent,
            children: None,
            depth,
            start: start as u32,
            end: end as u32,
            radius: 0.0,
            split: Split::Leaf,
        });
        let d = self.corpus.dim();
        self.centroids.extend(core::iter::repeat_n(0.0, d));
        if self.kind == TreeKind::RpMax {
            self.directions.extend(core::iter::repeat_n(0.0, d));
        }
        id
    }

    /// Sets the node's centroid (the mean, rounded to f32) and covering
    /// radius. If the parent's centre gives a tighter ball it is used
    /// instead, so radii never grow from parent to child.
    fn fit_ball(&mut self, id: u32) {
        let d = self.corpus.dim();
        let node = &self.nodes[id as usize];
        let ids = &self.perm[node.start as usize..node.end as usize];
        let mut mean = vec![0f64; d];
        for &p in ids {
            for (m, x) in mean.iter_mut().zip(self.corpus.point(p as usize)) {
                *m += f64::from(*x);
            }
        }
        let centroid: Vec<f32> = mean.iter().map(|m| (m / ids.len() as f64) as f32).collect();
        let radius_about = |c: &[f32]| {
            ids.iter()
                .map(|&p| dist(self.corpus.point(p as usize), c))
                .fold(0.0, f64::max)
        };
        let mut radius = radius_about(&centroid);
        let mut chosen = centroid;
        if node.parent != NO_NODE {
            let parent = &self.nodes[node.parent as usize];
            if radius > parent.radius {
                let pc = &self.centroids[node.parent as usize * d..(node.parent as usize + 1) * d];
                let r = radius_about(pc);
                if r < radius {
                    radius = r;
                    chosen = pc.to_vec();
                }
            }
        }
        self.centroids[id as usize * d..(id as usize + 1) * d].copy_from_slice(&chosen);
        self.nodes[id as usize].radius = radius;
    }

    fn split_axis(&mut self, id: u32, preferred: Option<usize>) -> (Split, usize) {
        let d = self.corpus.dim();
        let node = &self.nodes[id as usize];
        let (start, end) = (node.start as usize, node.end as usize);
        let ids = &mut self.perm[start..end];
        let mut lo = vec![f32::INFINITY; d];
        let mut hi = vec![f32::NEG_INFINITY; d];
        for &p in ids.iter() {
            for (j, x) in self.corpus.point(p as usize).iter().enumerate() {
                lo[j] = lo[j].min(*x);
                hi[j] = hi[j].max(*x);
            }
        }
        let spread = |j: usize| f64::from(hi[j]) - f64::from(lo[j]);
        let widest = (0..d).fold(0, |best, j| if spread(j) > spread(best) { j } else { best });
        let dim = match preferred {
            Some(j) if spread(j) > 0.0 || spread(widest) == 0.0 => j,
            _ => widest,
        };
        let left_len = balanced_split(ids.len(), self.leaf_size);
        let corpus = self.corpus;
        let key = |p: &u32| corpus.point(*p as usize)[dim];
        ids.select_nth_unstable_by(left_len, |a, b| key(a).total_cmp(&key(b)).then(a.cmp(b)));
        let threshold = f64::from(key(&ids[left_len]));
        (
            Split::Axis {
                dim: dim as u32,
                threshold,
            },
            left_len,
        )
    }

    fn split_projection(&mut self, id: u32) -> (Split, usize) {
        let d = self.corpus.dim();
        let mut dir: Vec<f64> = (0..d).map(|_| normal(&mut self.rng)).collect();
        let norm = libm::sqrt(dir.iter().map(|v| v * v).sum::<f64>());
        if norm > 0.0 {
            dir.iter_mut().for_each(|v| *v /= norm);
        } else {
            dir[0] = 1.0;
        }
        let stored: Vec<f32> = dir.iter().map(|v| *v as f32).collect();
        self.directions[id as usize * d..(id as usize + 1) * d].copy_from_slice(&stored);

        let node = &self.nodes[id as usize];
        let (start, end, radius) = (node.start as usize, node.end as usize, node.radius);
        let m = end - start;
        self.scratch.clear();
        for &p in &self.perm[start..end] {
            let proj = self
                .corpus
                .point(p as usize)
                .iter()
                .zip(&stored)
                .map(|(x, v)| f64::from(*x) * f64::from(*v))
                .sum::<f64>();
            self.scratch.push((proj, p));
        }
        self.scratch
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (slot, (_, p)) in self.perm[start..end].iter_mut().zip(&self.scratch) {
            *slot = *p;
        }

        let median = self.scratch[m / 2].0;
        let scale = 6.0 * (2.0 * radius) / libm::sqrt(d as f64);
        for _ in 0..RP_JITTER_ATTEMPTS {
            let threshold = median + self.rng.random_range(-1.0..=1.0) * scale;
            let left_len = self.scratch.partition_point(|(proj, _)| *proj <= threshold);
            if (1..m).contains(&left_len) {
                return (Split::Projection { threshold }, left_len);
            }
        }
        // Every draw emptied a side: cut at the median rank instead.
        let left_len = m / 2;
        (
            Split::Projection {
                threshold: self.scratch[left_len].0,
            },
            left_len,
        )
    }
}
