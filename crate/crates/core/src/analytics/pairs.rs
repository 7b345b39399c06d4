use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;
use core::fmt;
use core::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::frechet::moments;
use crate::corpus::generate::{normal, rng};
use crate::corpus::{Attribute, Corpus, Metric};
use crate::error::{Error, Result};

/// Structured 2D sample pairs with identical first and second moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairKind {
    /// Real: standard normal blob. Generated: thin ring.
    RingVsBlob,
    /// Real: 3x3 grid of tight clusters. Generated: the same grid without
    /// its center cluster (`component = "c4"`).
    ModeDrop,
    /// Real: standard normal blob. Generated: two separated clusters.
    ClusterSplit,
    /// Both standard normal; a null pair.
    Identical,
}

impl PairKind {
    pub const ALL: [PairKind; 4] = [
        PairKind::RingVsBlob,
        PairKind::ModeDrop,
        PairKind::ClusterSplit,
        PairKind::Identical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PairKind::RingVsBlob => "ring_vs_blob",
            PairKind::ModeDrop => "mode_drop",
            PairKind::ClusterSplit => "cluster_split",
            PairKind::Identical => "identical",
        }
    }
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PairKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown pair kind `{s}`")))
    }
}

/// Component index of the dropped cluster in [`PairKind::ModeDrop`].
pub const DROPPED_COMPONENT: &str = "c4";

const GRID_SPACING: f64 = 2.0;
const GRID_SIGMA: f64 = 0.3;

fn blob(r: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<String>) {
    let points = (0..2 * n).map(|_| normal(r)).collect();
    (points, vec!["blob".into(); n])
}

fn ring(r: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<String>) {
    let mut points = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let theta = r.random::<f64>() * TAU;
        let radius = 1.0 + 0.05 * normal(r);
        points.push(radius * libm::cos(theta));
        points.push(radius * libm::sin(theta));
    }
    (points, vec!["ring".into(); n])
}

fn clusters(
    r: &mut ChaCha8Rng,
    n: usize,
    centers: &[(&str, f64, f64)],
    sigma: f64,
) -> (Vec<f64>, Vec<String>) {
    let mut points = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (name, x, y) = centers[i % centers.len()];
        points.push(x + sigma * normal(r));
        points.push(y + sigma * normal(r));
        labels.push(String::from(name));
    }
    (points, labels)
}

fn grid(skip_center: bool) -> Vec<(&'static str, f64, f64)> {
    const NAMES: [&str; 9] = ["c0", "c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8"];
    (0..9)
        .filter(|&i| !(skip_center && i == 4))
        .map(|i| {
            let x = ((i % 3) as f64 - 1.0) * GRID_SPACING;
            let y = ((i / 3) as f64 - 1.0) * GRID_SPACING;
            (NAMES[i], x, y)
        })
        .collect()
}

/// Affine map to zero sample mean and identity sample covariance.
fn standardize(points: &[f64]) -> Result<Vec<f32>> {
    let raw: Vec<f32> = points.iter().map(|x| *x as f32).collect();
    let (mean, cov) = moments(&raw, 2);
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::DegenerateMembers("sample covariance is singular".into()))?;
    let mut out = Vec::with_capacity(points.len());
    let mut v = DVector::zeros(2);
    for row in raw.chunks_exact(2) {
        v[0] = f64::from(row[0]) - mean[0];
        v[1] = f64::from(row[1]) - mean[1];
        let w = chol
            .l()
            .solve_lower_triangular(&v)
            .expect("nonsingular factor");
        out.push(w[0] as f32);
        out.push(w[1] as f32);
    }
    Ok(out)
}

fn sample(points: Vec<f64>, components: Vec<String>, source: &str) -> Result<Corpus> {
    let n = components.len();
    let attributes = vec![
        Attribute::from_values("source", core::iter::repeat_n(source, n))?,
        Attribute::from_values("component", components)?,
    ];
    Corpus::new(2, standardize(&points)?, Metric::Euclidean, attributes)
}

/// Two standardized 2D samples of `n` points each, labelled
/// `source = real / generated` and by mixture `component`.
pub fn matched_moment_pair(kind: PairKind, n: usize, seed: u64) -> Result<(Corpus, Corpus)> {
    if n < 1000 {
        return Err(Error::param(
            "matched pairs need at least 1000 points per side",
        ));
    }
    let mut r = rng(seed);
    let (real, generated) = match kind {
        PairKind::RingVsBlob => (blob(&mut r, n), ring(&mut r, n)),
        PairKind::Identical => (blob(&mut r, n), blob(&mut r, n)),
        PairKind::ClusterSplit => (
            blob(&mut r, n),
            clusters(&mut r, n, &[("left", -2.0, 0.0), ("right", 2.0, 0.0)], 0.5),
        ),
        PairKind::ModeDrop => (
            clusters(&mut r, n, &grid(false), GRID_SIGMA),
            clusters(&mut r, n, &grid(true), GRID_SIGMA),
        ),
    };
    Ok((
        sample(real.0, real.1, "real")?,
        sample(generated.0, generated.1, "generated")?,
    ))
}
