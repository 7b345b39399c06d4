//! Clustered-label corpora for the speed benchmark.

use condra_core::corpus::{Attribute, Corpus, Metric};
use condra_core::Condition;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;

pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Spread of points around their label's center; centers are standard
/// normal, so clusters are well separated in high dimension.
const CLUSTER_SIGMA: f64 = 0.3;
/// Values of the `group` attribute, independent of location.
pub const GROUPS: usize = 4;

/// Label weights proportional to `1 / rank`.
pub fn zipf_weights(labels: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=labels).map(|r| 1.0 / r as f64).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn label_name(i: usize) -> String {
    format!("l{i:03}")
}

/// Points around `labels` Gaussian centers with Zipf-distributed label
/// sizes. Attributes: `label` (the cluster) and `group` (uniform).
#[derive(Debug, Clone)]
pub struct ClusteredData {
    pub corpus: Corpus,
    pub centers: Vec<f64>,
    pub weights: Vec<f64>,
    seed: u64,
}

impl ClusteredData {
    pub fn generate(n: usize, d: usize, labels: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<f64> = (0..labels * d).map(|_| standard_normal(&mut rng)).collect();
        let weights = zipf_weights(labels);
        // Deterministic sizes by largest remainder, each label nonempty.
        let mut sizes: Vec<usize> = weights
            .iter()
            .map(|w| ((w * n as f64) as usize).max(1))
            .collect();
        let mut i = 0;
        while sizes.iter().sum::<usize>() < n {
            sizes[i % labels] += 1;
            i += 1;
        }
        while sizes.iter().sum::<usize>() > n {
            let j = sizes.iter().enumerate().max_by_key(|(_, s)| **s).unwrap().0;
            sizes[j] -= 1;
        }
        let mut points = Vec::with_capacity(n * d);
        let mut label_col = Vec::with_capacity(n);
        let mut group_col = Vec::with_capacity(n);
        for (l, &size) in sizes.iter().enumerate() {
            for _ in 0..size {
                let c = &centers[l * d..(l + 1) * d];
                points.extend(
                    c.iter()
                        .map(|m| (m + CLUSTER_SIGMA * standard_normal(&mut rng)) as f32),
                );
                label_col.push(label_name(l));
                group_col.push(format!("g{}", rng.random_range(0..GROUPS)));
            }
        }
        let attributes = vec![
            Attribute::from_values("label", label_col)?,
            Attribute::from_values("group", group_col)?,
        ];
        Ok(ClusteredData {
            corpus: Corpus::new(d, points, Metric::Euclidean, attributes)?,
            centers,
            weights,
            seed,
        })
    }

    /// Fresh query vectors drawn from the same mixture.
    pub fn queries(&self, count: usize) -> Vec<f32> {
        let d = self.corpus.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut out = Vec::with_capacity(count * d);
        for _ in 0..count {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let l = self
                .weights
                .iter()
                .position(|w| {
                    acc += w;
                    u < acc
                })
                .unwrap_or(self.weights.len() - 1);
            let c = &self.centers[l * d..(l + 1) * d];
            out.extend(
                c.iter()
                    .map(|m| (m + CLUSTER_SIGMA * standard_normal(&mut rng)) as f32),
            );
        }
        out
    }

    /// Conditions spanning the fraction range: single labels near 0.1%,
    /// 0.3%, 1%, 3% and 10%, label disjunctions reaching 30% and 60%, one
    /// cross-attribute conjunction and `ALL`.
    pub fn conditions(&self) -> Vec<Condition> {
        let label = self.corpus.attribute("label").expect("label attribute");
        let n = self.corpus.len() as f64;
        let frac = |code: usize| label.count(code as u32) as f64 / n;
        let mut by_size: Vec<usize> = (0..label.values().len()).collect();
        by_size.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        let mut out = Vec::new();
        for target in [0.001, 0.003, 0.01, 0.03, 0.1] {
            let best = *by_size
                .iter()
                .min_by(|&&a, &&b| {
                    (frac(a).ln() - f64::ln(target))
                        .abs()
                        .total_cmp(&(frac(b).ln() - f64::ln(target)).abs())
                })
                .unwrap();
            let term = Condition::term("label", label.values()[best].clone());
            if !out.contains(&term) {
                out.push(term);
            }
        }
        for target in [0.3, 0.6] {
            let mut chosen = Vec::new();
            let mut total = 0.0;
            for &code in &by_size {
                if total >= target {
                    break;
                }
                total += frac(code);
                chosen.push(label.values()[code].clone());
            }
            out.push(Condition::any_of("label", chosen));
        }
        out.push(Condition::And(vec![
            Condition::term("label", label.values()[by_size[0]].clone()),
            Condition::term("group", "g0"),
        ]));
        out.push(Condition::All);
        out
    }
}
