//! Accuracy@N of conditional retrieval on content/style corpora.

use std::sync::Arc;

use condra_core::corpus::Corpus;
use condra_core::tree::build_ball_tree;
use condra_core::{build_cond_index, cknn_query, Condition, NodeSetCache};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::SCHEMA_VERSION;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub n: usize,
    pub accuracy: f64,
    /// Success rate of `n` uniform picks among the style's points: one
    /// point per content, so `n / contents`.
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyTable {
    pub schema_version: u32,
    pub trials: usize,
    pub contents: usize,
    pub styles: usize,
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub fn at(&self, n: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n).map(|r| r.accuracy)
    }
}

/// For each trial: a random query point and a random style other than its
/// own; retrieve its nearest neighbors under `style = <that style>` and
/// count a hit at `N` when one of the first `N` shares the query's content.
pub fn accuracy_at_n(
    corpus: Arc<Corpus>,
    ns: &[usize],
    trials: usize,
    leaf_size: usize,
    seed: u64,
) -> Result<AccuracyTable> {
    let content = corpus
        .attribute("content")
        .ok_or_else(|| Error::Config("corpus has no `content` attribute".into()))?;
    let style = corpus
        .attribute("style")
        .ok_or_else(|| Error::Config("corpus has no `style` attribute".into()))?;
    if style.values().len() < 2 {
        return Err(Error::Config("accuracy needs at least two styles".into()));
    }
    if trials == 0 || ns.is_empty() || ns.contains(&0) {
        return Err(Error::Config("trials and every N must be positive".into()));
    }
    let k = *ns.iter().max().unwrap();
    let tree = build_ball_tree(corpus.clone(), leaf_size)?;
    let index = build_cond_index(&tree, &corpus, &["style"])?;
    let cache = NodeSetCache::new(&index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = vec![0usize; ns.len()];
    for _ in 0..trials {
        let p = rng.random_range(0..corpus.len());
        let own = style.code_of(p);
        let mut s = rng.random_range(0..style.values().len() as u32 - 1);
        if s >= own {
            s += 1;
        }
        let expr = Condition::term("style", style.values()[s as usize].clone());
        // `k + 1` so that dropping the query point (never present when the
        // styles differ) cannot shorten the list.
        let result = cknn_query(&tree, &index, corpus.point(p), &expr, k + 1, &cache)?;
        let ids: Vec<u32> = result
            .ids()
            .into_iter()
            .filter(|&i| i as usize != p)
            .take(k)
            .collect();
        let want = content.code_of(p);
        let first_hit = ids
            .iter()
            .position(|&i| content.code_of(i as usize) == want);
        for (j, &n) in ns.iter().enumerate() {
            if first_hit.is_some_and(|r| r < n) {
                hits[j] += 1;
            }
        }
    }
    let contents = content.values().len();
    Ok(AccuracyTable {
        schema_version: SCHEMA_VERSION,
        trials,
        contents,
        styles: style.values().len(),
        rows: ns
            .iter()
            .zip(hits)
            .map(|(&n, h)| AccuracyRow {
                n,
                accuracy: h as f64 / trials as f64,
                baseline: (n as f64 / contents as f64).min(1.0),
            })
            .collect(),
    })
}

/// Same metadata, features replaced by standard normal noise.
pub fn noise_features(corpus: &Corpus, seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..corpus.points().len())
        .map(|_| super::data::standard_normal(&mut rng) as f32)
        .collect();
    Ok(corpus.with_points(points)?)
}
