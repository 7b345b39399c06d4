//! Seeded synthetic corpora.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Attribute, Corpus, Metric};
use crate::error::{Error, Result};

/// How a mixture component spreads around its mean.
#[derive(Debug, Clone, PartialEq)]
pub enum Spread {
    /// Standard deviation shared by every axis.
    Isotropic(f64),
    /// Row-major `d x d` matrix `A`; samples are `mean + A z`.
    Transform(Vec<f64>),
    /// Row-major `d x d` covariance, factored by Cholesky.
    Covariance(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub label: String,
    pub count: usize,
    pub mean: Vec<f64>,
    pub spread: Spread,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub dim: usize,
    pub components: Vec<MixtureComponent>,
}

impl MixtureSpec {
    /// A single standard normal component.
    pub fn standard_normal(dim: usize, count: usize, label: &str) -> Self {
        MixtureSpec {
            dim,
            components: vec![MixtureComponent {
                label: label.into(),
                count,
                mean: vec![0.0; dim],
                spread: Spread::Isotropic(1.0),
            }],
        }
    }
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Samples every component in order; the label of each point is stored in
/// the `source` attribute.
pub fn generate_blobs(spec: &MixtureSpec, seed: u64) -> Result<Corpus> {
    let d = spec.dim;
    if d == 0 {
        return Err(Error::param("mixture dimension must be positive"));
    }
    let mut rng = rng(seed);
    let total: usize = spec.components.iter().map(|c| c.count).sum();
    let mut points = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    for comp in &spec.components {
        if comp.count == 0 {
            return Err(Error::param(format!(
                "component `{}` has a nonpositive count",
                comp.label
            )));
        }
        if comp.mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: comp.mean.len(),
            });
        }
        let transform = match &comp.spread {
            Spread::Isotropic(s) => DMatrix::from_diagonal_element(d, d, *s),
            Spread::Transform(a) | Spread::Covariance(a) if a.len() != d * d => {
                return Err(Error::DimensionMismatch {
                    expected: d * d,
                    found: a.len(),
                })
            }
            Spread::Transform(a) => DMatrix::from_row_slice(d, d, a),
            Spread::Covariance(c) => DMatrix::from_row_slice(d, d, c)
                .cholesky()
                .ok_or_else(|| Error::param("covariance is not positive definite"))?
                .unpack(),
        };
        let mut z = vec![0.0; d];
        for _ in 0..comp.count {
            for v in z.iter_mut() {
                *v = normal(&mut rng);
            }
            for row in 0..d {
                let mut x = comp.mean[row];
                for (col, zc) in z.iter().enumerate() {
                    x += transform[(row, col)] * zc;
                }
                points.push(x as f32);
            }
            labels.push(comp.label.as_str());
        }
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    Corpus::new(
        d,
        points,
        Metric::Euclidean,
        vec![Attribute::from_values("source", labels)?],
    )
}

fn label(prefix: char, i: usize, of: usize) -> String {
    let width = format!("{}", of.saturating_sub(1)).len();
    format!("{prefix}{i:0width$}")
}

/// One point per (content, style) pair:
/// `content_prototype + style_strength * style_offset + noise * z`, with
/// prototypes, offsets and `z` all standard normal. Attributes `content`
/// and `style` record the pair. Points are ordered content-major.
pub fn generate_content_style(
    n_content: usize,
    n_style: usize,
    d: usize,
    style_strength: f64,
    noise: f64,
    seed: u64,
) -> Result<Corpus> {
    if n_content < 2 || n_style < 2 {
        return Err(Error::param("need at least two contents and two styles"));
    }
    if d < 2 {
        return Err(Error::param("content/style corpora need d >= 2"));
    }
    let mut rng = rng(seed);
    let mut draw =
        |count: usize| -> Vec<f64> { (0..count * d).map(|_| normal(&mut rng)).collect() };
    let prototypes = draw(n_content);
    let offsets = draw(n_style);
    let z = draw(n_content * n_style);
    let mut points = Vec::with_capacity(n_content * n_style * d);
    let mut contents = Vec::with_capacity(n_content * n_style);
    let mut styles = Vec::with_capacity(n_content * n_style);
    for c in 0..n_content {
        for s in 0..n_style {
            let row = c * n_style + s;
            for j in 0..d {
                let x = prototypes[c * d + j]
                    + style_strength * offsets[s * d + j]
                    + noise * z[row * d + j];
                points.push(x as f32);
            }
            contents.push(label('c', c, n_content));
            styles.push(label('s', s, n_style));
        }
    }
    Corpus::new(
        d,
        points,
        Metric::Euclidean,
        vec![
            Attribute::from_values("content", contents)?,
            Attribute::from_values("style", styles)?,
        ],
    )
}
