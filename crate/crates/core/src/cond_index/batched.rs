use alloc::vec;
use alloc::vec::Vec;

use super::{ResultList, Strategy, VisitCounters};
use crate::corpus::condition::Condition;
use crate::corpus::{dist, Corpus};
use crate::error::{Error, Result};
use crate::sets::IdSet;
use crate::tree::KBest;

/// Queries per block of the distance product; bounds the scratch matrix.
const QUERY_BLOCK: usize = 32;

/// Relative error allowed between expanded squared distances
/// `|q|^2 + |x|^2 - 2 q.x` and directly accumulated ones. Far above the
/// actual float error, so candidate selection never misses a true neighbor.
const EXPANSION_SLACK: f64 = 1e-9;

/// Conditional brute force for `m` queries and `b` conditions at once.
///
/// One dense product `Q X^T` gives expanded squared distances for every
/// (query, point) pair. Each (query, condition) cell selects candidates from
/// those distances with a safety margin and re-scores the survivors with the
/// same distance routine as every other strategy, so each cell equals
/// [`super::brute_force_cknn`] exactly. Returns an `m x b` grid.
pub fn batched_brute_force(
    corpus: &Corpus,
    queries: &[f32],
    exprs: &[Condition],
    k: usize,
) -> Result<Vec<Vec<ResultList>>> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let d = corpus.dim();
    let n = corpus.len();
    if !queries.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: queries.len() % d,
        });
    }
    let m = queries.len() / d;
    let mut prepared: Vec<f32> = Vec::with_capacity(queries.len());
    for q in queries.chunks_exact(d) {
        prepared.extend_from_slice(&corpus.prepare_query(q)?);
    }
    let members: Vec<IdSet> = exprs
        .iter()
        .map(|e| Ok(e.bind(corpus)?.members(corpus)))
        .collect::<Result<_>>()?;
    let canonical: Vec<_> = exprs.iter().map(Condition::canonical).collect();

    let points: Vec<f64> = corpus.points().iter().map(|x| f64::from(*x)).collect();
    let point_norms: Vec<f64> = points
        .chunks_exact(d)
        .map(|r| r.iter().map(|x| x * x).sum())
        .collect();
    let max_point_norm = point_norms.iter().copied().fold(0.0, f64::max);

    let mut grid = Vec::with_capacity(m);
    let mut products = vec![0f64; QUERY_BLOCK.min(m.max(1)) * n];
    let mut scratch: Vec<(f64, u32)> = Vec::new();
    for block_start in (0..m).step_by(QUERY_BLOCK) {
        let rows = QUERY_BLOCK.min(m - block_start);
        let block: Vec<f64> = prepared[block_start * d..(block_start + rows) * d]
            .iter()
            .map(|x| f64::from(*x))
            .collect();
        // products[r, j] = q_r . x_j
        unsafe {
            matrixmultiply::dgemm(
                rows,
                d,
                n,
                1.0,
                block.as_ptr(),
                d as isize,
                1,
                points.as_ptr(),
                1,
                d as isize,
                0.0,
                products.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        for r in 0..rows {
            let qi = block_start + r;
            let q = &prepared[qi * d..(qi + 1) * d];
            let q_norm: f64 = block[r * d..(r + 1) * d].iter().map(|x| x * x).sum();
            let dots = &products[r * n..(r + 1) * n];
            let margin = 2.0 * EXPANSION_SLACK * (q_norm + max_point_norm);
            let mut row = Vec::with_capacity(exprs.len());
            for (b, set) in members.iter().enumerate() {
                scratch.clear();
                scratch.extend(
                    set.iter()
                        .map(|j| (q_norm + point_norms[j] - 2.0 * dots[j], j as u32)),
                );
                let cutoff = if scratch.len() > k {
                    let (_, kth, _) =
                        scratch.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
                    kth.0 + margin
                } else {
                    f64::INFINITY
                };
                let mut best = KBest::new(k);
                let mut scored = 0;
                for &(approx, j) in &scratch {
                    if approx <= cutoff {
                        scored += 1;
                        best.offer(dist(q, corpus.point(j as usize)), j);
                    }
                }
                row.push(ResultList {
                    neighbors: best.into_sorted(),
                    k,
                    condition: canonical[b].clone(),
                    strategy: Strategy::Batched,
                    path: None,
                    counters: VisitCounters {
                        points_scored: scored,
                        ..Default::default()
                    },
                });
            }
            grid.push(row);
        }
    }
    Ok(grid)
}
