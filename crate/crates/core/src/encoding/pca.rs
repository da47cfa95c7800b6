//! Principal component analysis with a cumulative explained-variance cutoff.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{EncodingError, MODEL_FORMAT_VERSION};
use crate::vector::{l2_normalize, FeatureVector};

pub const DEFAULT_VARIANCE_TARGET: f64 = 0.95;

/// Eigenvalues below this fraction of the largest are treated as zero variance.
const RELATIVE_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub format_version: u32,
    pub r: usize,
    pub dim: usize,
    pub seed: Option<u64>,
    pub source_feature: String,
    pub mean: Vec<f64>,
    /// Row-major `r x dim`, rows orthonormal.
    pub components: Vec<f64>,
    /// Variance along each retained component, descending.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

impl PcaModel {
    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.dim..(i + 1) * self.dim]
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    /// Projection without normalization.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.components
            .chunks_exact(self.dim)
            .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &w) in self.components.chunks_exact(self.dim).zip(z) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += w * v;
            }
        }
        out
    }
}

/// Fits PCA on the rows of `vectors`, keeping the fewest leading components
/// whose cumulative variance ratio reaches `variance_target`.
pub fn fit_pca(vectors: &[Vec<f64>], variance_target: f64) -> Result<PcaModel, EncodingError> {
    let n = vectors.len();
    if n < 2 {
        return Err(EncodingError::TooFewVectors { needed: 2, got: n });
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(EncodingError::InvalidParameter(format!(
            "variance target {variance_target} outside (0, 1]"
        )));
    }
    let d = vectors[0].len();
    for v in vectors {
        if v.len() != d {
            return Err(EncodingError::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, d, |i, j| vectors[i][j] - mean[j]);
    let denom = (n - 1) as f64;

    // eigenpairs of the covariance, via the Gram matrix when that is smaller
    let (values, vectors_d): (Vec<f64>, Vec<Vec<f64>>) = if n <= d {
        let gram = (&x * x.transpose()) / denom;
        let eig = SymmetricEigen::new(gram);
        let mut pairs: Vec<(f64, Vec<f64>)> = Vec::new();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda <= 0.0 {
                continue;
            }
            let u = eig.eigenvectors.column(k);
            let v = x.transpose() * u;
            let norm = v.norm();
            if norm == 0.0 {
                continue;
            }
            pairs.push((lambda, (v / norm).iter().copied().collect()));
        }
        pairs.into_iter().unzip()
    } else {
        let cov = (x.transpose() * &x) / denom;
        let eig = SymmetricEigen::new(cov);
        eig.eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &l)| (l, eig.eigenvectors.column(k).iter().copied().collect()))
            .unzip()
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let total: f64 = x.iter().map(|v| v * v).sum::<f64>() / denom;
    let top = order.first().map(|&k| values[k]).unwrap_or(0.0);
    if total <= 0.0 || top <= 0.0 {
        return Err(EncodingError::NoVariance);
    }
    let nonzero: Vec<usize> = order
        .into_iter()
        .filter(|&k| values[k] > top * RELATIVE_RANK_TOL)
        .collect();
    if nonzero.len() < d.min(n - 1) {
        log::warn!(
            "PCA input is rank deficient: {} nonzero-variance components of {}",
            nonzero.len(),
            d.min(n - 1)
        );
    }

    let mut r = nonzero.len();
    let mut acc = 0.0;
    for (i, &k) in nonzero.iter().enumerate() {
        acc += values[k];
        if acc / total >= variance_target - 1e-12 {
            r = i + 1;
            break;
        }
    }

    let mut components = Vec::with_capacity(r * d);
    let mut explained = Vec::with_capacity(r);
    for &k in &nonzero[..r] {
        let mut c = vectors_d[k].clone();
        // sign convention: largest-magnitude entry positive
        let pivot = c
            .iter()
            .enumerate()
            .fold(
                (0, 0.0f64),
                |b, (i, v)| if v.abs() > b.1 { (i, v.abs()) } else { b },
            )
            .0;
        if c[pivot] < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        components.extend_from_slice(&c);
        explained.push(values[k]);
    }
    Ok(PcaModel {
        format_version: MODEL_FORMAT_VERSION,
        r,
        dim: d,
        seed: None,
        source_feature: String::new(),
        mean,
        components,
        explained_variance: explained,
        total_variance: total,
    })
}

/// Centered projection onto the retained components, L2-normalized.
pub fn apply_pca(x: &FeatureVector, model: &PcaModel) -> Result<FeatureVector, EncodingError> {
    if x.dim() != model.dim {
        return Err(EncodingError::DimensionMismatch {
            expected: model.dim,
            got: x.dim(),
        });
    }
    let mut z = model.project(&x.to_dense());
    l2_normalize(&mut z);
    Ok(FeatureVector::dense(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_in_3d_has_one_component() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let t = i as f64 - 3.0;
                vec![1.0 + 2.0 * t, -t, 0.5 + 0.5 * t]
            })
            .collect();
        let m = fit_pca(&rows, 0.95).unwrap();
        assert_eq!(m.r, 1);
        assert!((m.explained_variance_ratio()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mean_projects_to_zero_and_first_axis_to_e1() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64;
                vec![t, (t * 0.7).sin(), (t * 1.3).cos() * 0.2, 0.01 * t * t]
            })
            .collect();
        let m = fit_pca(&rows, 0.999).unwrap();
        let at_mean = apply_pca(&FeatureVector::dense(m.mean.clone()), &m).unwrap();
        assert!(at_mean.is_zero());
        let shifted: Vec<f64> = m
            .mean
            .iter()
            .zip(m.component(0))
            .map(|(a, b)| a + b)
            .collect();
        let e1 = apply_pca(&FeatureVector::dense(shifted), &m)
            .unwrap()
            .to_dense();
        assert!((e1[0] - 1.0).abs() < 1e-9);
        assert!(e1[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn identical_points_have_no_variance() {
        let rows = vec![vec![1.0, 2.0]; 5];
        assert_eq!(fit_pca(&rows, 0.95), Err(EncodingError::NoVariance));
        assert!(matches!(
            fit_pca(&rows[..1], 0.95),
            Err(EncodingError::TooFewVectors { .. })
        ));
    }
}
