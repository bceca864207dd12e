//! Elementary vector math every other module builds on: normalization onto
//! the unit hypersphere, inner products, tempered softmax, and a 2-D PCA
//! projection for demos.
//!
//! All arithmetic is f64; finite-difference gradient checks elsewhere in the
//! crate need the headroom.

use crate::error::{Error, Result};

/// Norm at or below this is treated as the zero vector.
pub const EPS_NORM: f64 = 1e-12;

/// Tolerance for the unit-norm invariant.
pub const UNIT_TOL: f64 = 1e-6;

/// A vector in input or gradient space. Entries are finite; no norm
/// constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVector(Vec<f64>);

impl RawVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::BadDimension(coords.len()));
        }
        for &c in &coords {
            if !c.is_finite() {
                return Err(Error::NonFinite(c));
            }
        }
        Ok(RawVector(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }
}

/// An embedding on the unit hypersphere: Euclidean norm 1 within
/// [`UNIT_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wrap coordinates that are already unit norm. Prefer [`l2_normalize`]
    /// for arbitrary input.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::BadDimension(coords.len()));
        }
        let norm = norm2(&coords);
        if !norm.is_finite() {
            return Err(Error::NonFinite(norm));
        }
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::ZeroVector {
                norm,
                eps: UNIT_TOL,
            });
        }
        Ok(UnitVector(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn norm2(coords: &[f64]) -> f64 {
    coords.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Project a vector onto the unit sphere, preserving direction.
///
/// Errors with [`Error::ZeroVector`] when the norm is at or below
/// [`EPS_NORM`].
pub fn l2_normalize(v: &RawVector) -> Result<UnitVector> {
    let norm = norm2(v.coords());
    if norm <= EPS_NORM {
        return Err(Error::ZeroVector {
            norm,
            eps: EPS_NORM,
        });
    }
    Ok(UnitVector(v.coords().iter().map(|c| c / norm).collect()))
}

/// Inner product of two unit vectors; lands in [-1, 1] up to rounding.
pub fn dot(u: &UnitVector, v: &UnitVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    Ok(dot_slices(u.coords(), v.coords()))
}

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax of `logits / tau`, stabilized by max subtraction so that adding a
/// constant to every logit leaves the output unchanged.
pub fn tempered_softmax(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyInput);
    }
    if tau <= 0.0 || tau.is_nan() {
        return Err(Error::NonPositiveTemperature(tau));
    }
    for &l in logits {
        if !l.is_finite() {
            return Err(Error::NonFinite(l));
        }
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / tau).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Result of [`pca_project_2d`]: per-point coordinates on the top two
/// principal axes and the fraction of total variance those axes retain.
#[derive(Debug, Clone)]
pub struct Pca2d {
    pub coords: Vec<(f64, f64)>,
    pub retained_variance: f64,
}

/// Project a point cloud onto its top two principal axes.
///
/// The covariance of the mean-centered cloud is diagonalized with a cyclic
/// Jacobi sweep (exact for symmetric matrices at these sizes, and
/// deterministic), and points are projected onto the two leading
/// eigenvectors.
pub fn pca_project_2d(points: &[UnitVector]) -> Result<Pca2d> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let d = points[0].dim();
    for p in points {
        if p.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.dim(),
            });
        }
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, c) in mean.iter_mut().zip(p.coords()) {
            *m += c / n;
        }
    }
    // Covariance, row-major d×d.
    let mut cov = vec![0.0; d * d];
    for p in points {
        let centered: Vec<f64> = p.coords().iter().zip(&mean).map(|(c, m)| c - m).collect();
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += centered[i] * centered[j] / n;
            }
        }
    }
    let total_variance: f64 = (0..d).map(|i| cov[i * d + i]).sum();

    let (eigvals, eigvecs) = jacobi_eigen(cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigvals[b].total_cmp(&eigvals[a]));
    let (top0, top1) = (order[0], order[1]);

    let axis = |col: usize| -> Vec<f64> {
        let mut v: Vec<f64> = (0..d).map(|row| eigvecs[row * d + col]).collect();
        // Deterministic sign: largest-magnitude component is positive.
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if v[lead] < 0.0 {
            for c in &mut v {
                *c = -*c;
            }
        }
        v
    };
    let (a0, a1) = (axis(top0), axis(top1));

    let coords = points
        .iter()
        .map(|p| {
            let centered: Vec<f64> = p.coords().iter().zip(&mean).map(|(c, m)| c - m).collect();
            (dot_slices(&centered, &a0), dot_slices(&centered, &a1))
        })
        .collect();

    let retained_variance = if total_variance > 0.0 {
        (eigvals[top0] + eigvals[top1]) / total_variance
    } else {
        // degenerate cloud: all points coincide
        1.0
    };

    Ok(Pca2d {
        coords,
        retained_variance,
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major).
/// Returns (eigenvalues, eigenvector matrix with eigenvectors as columns).
fn jacobi_eigen(mut a: Vec<f64>, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|p| ((p + 1)..d).map(move |q| (p, q)))
            .map(|(p, q)| 2.0 * a[p * d + q] * a[p * d + q])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigvals = (0..d).map(|i| a[i * d + i]).collect();
    (eigvals, v)
}
