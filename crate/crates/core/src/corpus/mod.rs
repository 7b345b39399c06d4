//! Feature vectors, categorical metadata, distance metrics and the condition
//! language.

pub mod condition;
pub mod generate;

use alloc::borrow::Cow;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::corpus::condition::Condition;
use crate::error::{Error, Result};
use crate::hash::Fnv;
use crate::sets::IdSet;

/// Vectors within this distance of unit norm are treated as already
/// normalized, which keeps angular normalization idempotent bit-for-bit.
const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Euclidean,
    /// Euclidean distance between unit-normalized vectors. Ranks exactly like
    /// cosine distance but satisfies the triangle inequality.
    Angular,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Angular => "angular",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "angular" | "cosine" => Ok(Metric::Angular),
            other => Err(Error::param(alloc::format!("unknown metric `{other}`"))),
        }
    }
}

/// Squared L2 distance accumulated in 64 bits.
///
/// Every search path in the crate scores points through this function, so
/// equal inputs always produce bit-identical distances.
#[inline]
pub(crate) fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for j in 0..4 {
            let t = f64::from(x[j]) - f64::from(y[j]);
            acc[j] += t * t;
        }
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let t = f64::from(*x) - f64::from(*y);
        acc[0] += t * t;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

#[inline]
pub(crate) fn dist(a: &[f32], b: &[f32]) -> f64 {
    libm::sqrt(sq_dist(a, b))
}

/// Distance between two vectors under `metric`.
///
/// Angular inputs are expected to be unit norm already; the value is the
/// chord length `sqrt(2 - 2 cos)`.
pub fn distance(metric: Metric, a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let _ = metric;
    Ok(dist(a, b))
}

pub(crate) fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn is_keyword(name: &str) -> bool {
    ["and", "or", "not", "all"]
        .iter()
        .any(|k| name.eq_ignore_ascii_case(k))
}

/// One dictionary-encoded categorical column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    name: String,
    dictionary: Vec<String>,
    codes: Vec<u32>,
    counts: Vec<usize>,
}

impl Attribute {
    /// Builds a column from one value per point. Values are text; the empty
    /// string counts as missing and is rejected.
    pub fn from_values<I, S>(name: impl Into<String>, values: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let name = name.into();
        if !is_identifier(&name) || is_keyword(&name) || name == "id" {
            return Err(Error::Inconsistent(alloc::format!(
                "`{name}` is not a usable attribute name"
            )));
        }
        let raw: Vec<String> = values.into_iter().map(|v| v.as_ref().to_string()).collect();
        if let Some(row) = raw.iter().position(String::is_empty) {
            return Err(Error::Inconsistent(alloc::format!(
                "attribute `{name}` has no value for point {row}"
            )));
        }
        let mut dictionary = raw.clone();
        dictionary.sort_unstable();
        dictionary.dedup();
        let mut counts = alloc::vec![0usize; dictionary.len()];
        let codes = raw
            .iter()
            .map(|v| {
                let code = dictionary.binary_search(v).expect("value is in dictionary");
                counts[code] += 1;
                code as u32
            })
            .collect();
        Ok(Attribute {
            name,
            dictionary,
            codes,
            counts,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of points covered by the column.
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Distinct values in ascending order; a value's position is its code.
    pub fn values(&self) -> &[String] {
        &self.dictionary
    }

    pub fn code(&self, value: &str) -> Option<u32> {
        self.dictionary
            .binary_search_by(|v| v.as_str().cmp(value))
            .ok()
            .map(|c| c as u32)
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    #[inline]
    pub fn code_of(&self, id: usize) -> u32 {
        self.codes[id]
    }

    pub fn value_of(&self, id: usize) -> &str {
        &self.dictionary[self.codes[id] as usize]
    }

    /// Number of points carrying the value with `code`.
    pub fn count(&self, code: u32) -> usize {
        self.counts[code as usize]
    }

    pub fn members(&self, code: u32) -> IdSet {
        IdSet::from_ids(
            self.codes.len(),
            self.codes
                .iter()
                .enumerate()
                .filter(|(_, c)| **c == code)
                .map(|(i, _)| i),
        )
    }
}

/// An immutable matrix of `n` feature vectors of dimension `d` plus one
/// categorical value per point for every attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    dim: usize,
    points: Vec<f32>,
    metric: Metric,
    attributes: Vec<Attribute>,
    fingerprint: u64,
}

impl Corpus {
    /// Validates and takes ownership of a row-major `points` buffer.
    ///
    /// Under [`Metric::Angular`] every row is rescaled to unit norm.
    pub fn new(
        dim: usize,
        mut points: Vec<f32>,
        metric: Metric,
        attributes: Vec<Attribute>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Inconsistent("dimension must be at least 1".into()));
        }
        if points.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if !points.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: points.len() % dim,
            });
        }
        let n = points.len() / dim;
        if let Some(pos) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                point: pos / dim,
                dim: pos % dim,
            });
        }
        for (i, a) in attributes.iter().enumerate() {
            if a.len() != n {
                return Err(Error::Inconsistent(alloc::format!(
                    "attribute `{}` has {} rows, corpus has {n} points",
                    a.name,
                    a.len()
                )));
            }
            if attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Inconsistent(alloc::format!(
                    "duplicate attribute `{}`",
                    a.name
                )));
            }
        }
        if metric == Metric::Angular {
            for row in points.chunks_exact_mut(dim) {
                normalize(row)?;
            }
        }
        Ok(Self::assemble(dim, points, metric, attributes))
    }

    fn assemble(dim: usize, points: Vec<f32>, metric: Metric, attributes: Vec<Attribute>) -> Self {
        let mut h = Fnv::new();
        h.u64(dim as u64).bytes(metric.as_str().as_bytes());
        for x in &points {
            h.bytes(&x.to_bits().to_le_bytes());
        }
        Corpus {
            dim,
            points,
            metric,
            attributes,
            fingerprint: h.finish(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    pub fn point(&self, id: usize) -> &[f32] {
        &self.points[id * self.dim..(id + 1) * self.dim]
    }

    /// Row-major `n * d` buffer.
    pub fn points(&self) -> &[f32] {
        &self.points
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Content hash over dimension, metric and coordinates.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Copies the rows in `ids` (ascending) into a new corpus, returning it
    /// together with the original id of each new row.
    pub fn subset(&self, ids: &IdSet) -> Result<(Corpus, Vec<u32>)> {
        let original: Vec<u32> = ids.iter().map(|i| i as u32).collect();
        if original.is_empty() {
            return Err(Error::EmptyCondition);
        }
        let mut points = Vec::with_capacity(original.len() * self.dim);
        for &i in &original {
            points.extend_from_slice(self.point(i as usize));
        }
        let attributes = self
            .attributes
            .iter()
            .map(|a| {
                Attribute::from_values(
                    a.name.clone(),
                    original.iter().map(|&i| a.value_of(i as usize)),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        // Rows are already normalized; skipping `new` keeps them bit-identical.
        Ok((
            Self::assemble(self.dim, points, self.metric, attributes),
            original,
        ))
    }

    /// Same metadata and metric, different vectors.
    pub fn with_points(&self, points: Vec<f32>) -> Result<Corpus> {
        if points.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                found: points.len(),
            });
        }
        Corpus::new(self.dim, points, self.metric, self.attributes.clone())
    }

    /// Stacks corpora that share dimension, metric and attribute names.
    pub fn concat(parts: &[&Corpus]) -> Result<Corpus> {
        let first = parts.first().ok_or(Error::EmptyCorpus)?;
        let mut points = Vec::new();
        for p in parts {
            if p.dim != first.dim {
                return Err(Error::DimensionMismatch {
                    expected: first.dim,
                    found: p.dim,
                });
            }
            let same_names = p.attributes.len() == first.attributes.len()
                && p.attributes
                    .iter()
                    .zip(&first.attributes)
                    .all(|(a, b)| a.name == b.name);
            if p.metric != first.metric || !same_names {
                return Err(Error::Inconsistent(
                    "concatenated corpora must share metric and attributes".into(),
                ));
            }
            points.extend_from_slice(&p.points);
        }
        let attributes = first
            .attributes
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let values = parts
                    .iter()
                    .flat_map(|p| (0..p.len()).map(move |i| p.attributes[j].value_of(i)));
                Attribute::from_values(a.name.clone(), values)
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(first.dim, points, first.metric, attributes)
    }

    /// Checks a query vector and, for the angular metric, normalizes it.
    pub fn prepare_query<'q>(&self, q: &'q [f32]) -> Result<Cow<'q, [f32]>> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        if let Some(pos) = q.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { point: 0, dim: pos });
        }
        match self.metric {
            Metric::Euclidean => Ok(Cow::Borrowed(q)),
            Metric::Angular => {
                let mut owned = q.to_vec();
                normalize(&mut owned)?;
                Ok(Cow::Owned(owned))
            }
        }
    }
}

fn normalize(row: &mut [f32]) -> Result<()> {
    let norm = libm::sqrt(
        row.iter()
            .map(|x| f64::from(*x) * f64::from(*x))
            .sum::<f64>(),
    );
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    if libm::fabs(norm - 1.0) > UNIT_NORM_TOLERANCE {
        for x in row.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
    Ok(())
}

/// Points of `corpus` satisfying `expr`.
pub fn condition_members(expr: &Condition, corpus: &Corpus) -> Result<IdSet> {
    Ok(expr.bind(corpus)?.members(corpus))
}
