use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Ridge added to both covariances when either is close to singular.
const RIDGE: f64 = 1e-6;

/// Sample mean and unbiased covariance of row-major `points`.
pub(crate) fn moments(points: &[f32], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = points.len() / d;
    let mut mean = DVector::zeros(d);
    for row in points.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += f64::from(*x);
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    let mut centered = DVector::zeros(d);
    for row in points.chunks_exact(d) {
        for (j, x) in row.iter().enumerate() {
            centered[j] = f64::from(*x) - mean[j];
        }
        cov.syger(1.0, &centered, &centered, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    cov /= (n.max(2) - 1) as f64;
    (mean, cov)
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|v| libm::sqrt(v.max(0.0)));
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn near_singular(c: &DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(c.clone()).eigenvalues;
    let largest = eig.iter().copied().fold(0.0, f64::max);
    let smallest = eig.iter().copied().fold(f64::INFINITY, f64::min);
    smallest <= largest * 1e-12
}

/// Fréchet distance between Gaussians fitted to two samples:
/// `|m1 - m2|^2 + tr(C1 + C2 - 2 (C1^½ C2 C1^½)^½)`, with a small ridge on
/// both covariances when either is close to singular.
pub fn frechet_distance(a: &Corpus, b: &Corpus) -> Result<f64> {
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: b.dim(),
        });
    }
    if a.len() < d + 1 || b.len() < d + 1 {
        return Err(Error::param("each sample needs at least d + 1 points"));
    }
    let (m1, mut c1) = moments(a.points(), d);
    let (m2, mut c2) = moments(b.points(), d);
    if near_singular(&c1) || near_singular(&c2) {
        for i in 0..d {
            c1[(i, i)] += RIDGE;
            c2[(i, i)] += RIDGE;
        }
    }
    // tr (C1^½ C2 C1^½)^½ is the nuclear norm of C2^½ C1^½; singular values
    // keep the small directions accurate where a second square root would not.
    let cross = (psd_sqrt(&c2) * psd_sqrt(&c1)).singular_values().sum();
    let value = (m1 - m2).norm_squared() + c1.trace() + c2.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}
