use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::generate::rng;
use crate::corpus::{dist, Corpus};
use crate::error::{Error, Result};
use crate::sets::{IdSet, NodeSet};
use crate::tree::{build_rp_tree, tree_stats, Tree};

/// Fraction of the tree's nodes with at least one point of `subset` below
/// them.
pub fn theorem1_fraction(tree: &Tree, subset: &IdSet) -> Result<f64> {
    if subset.universe() != tree.corpus().len() {
        return Err(Error::DimensionMismatch {
            expected: tree.corpus().len(),
            found: subset.universe(),
        });
    }
    if subset.is_empty() {
        return Err(Error::DegenerateMembers("subset is empty".into()));
    }
    let mut hit = NodeSet::empty(tree.node_count());
    for id in subset.iter() {
        for node in tree.path_to_root(tree.leaf_of(id)) {
            if !hit.put(node as usize) {
                break;
            }
        }
    }
    Ok(hit.count() as f64 / tree.node_count() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoveragePoint {
    /// Ball radius as a fraction of the data diameter.
    pub radius: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// `2^(-log_g(W / R))` with `g` the measured fastest per-level shrink
    /// of cell radius, averaged over seeds. A qualitative reference only.
    pub reference: f64,
    /// Mean subset size.
    pub mean_subset: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCurve {
    /// Measured data diameter `W`.
    pub diameter: f64,
    pub leaf_size: usize,
    pub points: Vec<CoveragePoint>,
}

/// Largest pairwise distance. Quadratic in the corpus size.
fn diameter(corpus: &Corpus) -> f64 {
    let mut best = 0.0f64;
    for i in 0..corpus.len() {
        let a = corpus.point(i);
        for j in i + 1..corpus.len() {
            best = best.max(dist(a, corpus.point(j)));
        }
    }
    best
}

/// For each seed: one random-projection tree and one random center point.
/// For each radius `r` (a fraction of the diameter `W`), the subset is every
/// point within `r * W` of the center, so the subsets of one seed are nested.
/// Records the covered-node fraction per radius, aggregated over seeds.
pub fn theorem1_experiment(
    corpus: Arc<Corpus>,
    radii: &[f64],
    leaf_size: usize,
    seeds: &[u64],
) -> Result<CoverageCurve> {
    if seeds.is_empty() {
        return Err(Error::param("at least one seed is required"));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(Error::param(alloc::format!(
            "radius fraction {r} outside (0, 1]"
        )));
    }
    let w = diameter(&corpus);
    let mut fractions = vec![Vec::with_capacity(seeds.len()); radii.len()];
    let mut sizes = vec![0usize; radii.len()];
    let mut references = vec![0.0; radii.len()];
    for &seed in seeds {
        let tree = build_rp_tree(corpus.clone(), leaf_size, seed)?;
        let shrink = tree_stats(&tree).max_shrink;
        // The center is a data point, so no subset is ever empty.
        let center = corpus.point(rng(seed ^ 0x5eed).random_range(0..corpus.len()));
        let distances: Vec<f64> = (0..corpus.len())
            .map(|i| dist(center, corpus.point(i)))
            .collect();
        for (j, &r) in radii.iter().enumerate() {
            let limit = r * w;
            let subset = IdSet::from_ids(
                corpus.len(),
                (0..corpus.len()).filter(|&i| distances[i] <= limit),
            );
            sizes[j] += subset.count();
            fractions[j].push(theorem1_fraction(&tree, &subset)?);
            references[j] += if shrink > 1.0 {
                libm::exp2(-libm::log(1.0 / r) / libm::log(shrink)).min(1.0)
            } else {
                1.0
            };
        }
    }
    let k = seeds.len() as f64;
    let points = radii
        .iter()
        .enumerate()
        .map(|(j, &radius)| {
            let f = &fractions[j];
            CoveragePoint {
                radius,
                mean: f.iter().sum::<f64>() / k,
                min: f.iter().copied().fold(f64::INFINITY, f64::min),
                max: f.iter().copied().fold(0.0, f64::max),
                reference: references[j] / k,
                mean_subset: sizes[j] as f64 / k,
                seeds: seeds.len(),
            }
        })
        .collect();
    Ok(CoverageCurve {
        diameter: w,
        leaf_size,
        points,
    })
}
