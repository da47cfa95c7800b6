//! Dense and sparse feature vectors shared by every extractor and classifier.

use serde::{Deserialize, Serialize};

/// Vectors whose Euclidean norm falls below this are treated as zero by
/// [`l2_normalize`] and left untouched.
pub const NORM_FLOOR: f64 = 1e-10;

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a sparse vector from unordered `(index, value)` pairs, summing
    /// duplicates and dropping exact zeros.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            assert!((i as usize) < dim, "index {i} out of range for dim {dim}");
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        let (indices, values) = indices
            .into_iter()
            .zip(values)
            .filter(|&(_, v)| v != 0.0)
            .unzip();
        Self {
            dim,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }
}

/// A feature vector in either dense or sparse storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "storage", rename_all = "snake_case")]
pub enum FeatureVector {
    Dense { values: Vec<f64> },
    Sparse(SparseVector),
}

impl FeatureVector {
    pub fn dense(values: Vec<f64>) -> Self {
        FeatureVector::Dense { values }
    }

    pub fn zeros_dense(dim: usize) -> Self {
        FeatureVector::Dense {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureVector::Dense { values } => values.len(),
            FeatureVector::Sparse(s) => s.dim,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, FeatureVector::Sparse(_))
    }

    pub fn get(&self, index: usize) -> f64 {
        match self {
            FeatureVector::Dense { values } => values[index],
            FeatureVector::Sparse(s) => s.get(index),
        }
    }

    /// Iterates over stored entries as `(index, value)`; dense vectors yield every entry.
    pub fn iter_stored(&self) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match self {
            FeatureVector::Dense { values } => Box::new(values.iter().copied().enumerate()),
            FeatureVector::Sparse(s) => Box::new(
                s.indices
                    .iter()
                    .zip(&s.values)
                    .map(|(&i, &v)| (i as usize, v)),
            ),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            FeatureVector::Dense { values } => values.clone(),
            FeatureVector::Sparse(s) => {
                let mut out = vec![0.0; s.dim];
                for (&i, &v) in s.indices.iter().zip(&s.values) {
                    out[i as usize] = v;
                }
                out
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        match self {
            FeatureVector::Dense { values } => values.iter().map(|v| v * v).sum(),
            FeatureVector::Sparse(s) => s.values.iter().map(|v| v * v).sum(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.iter_stored().all(|(_, v)| v == 0.0)
    }

    /// Inner product with a dense weight slice of the same dimension.
    pub fn dot_dense(&self, weights: &[f64]) -> f64 {
        match self {
            FeatureVector::Dense { values } => values.iter().zip(weights).map(|(a, b)| a * b).sum(),
            FeatureVector::Sparse(s) => s
                .indices
                .iter()
                .zip(&s.values)
                .map(|(&i, &v)| v * weights[i as usize])
                .sum(),
        }
    }

    /// `weights += scale * self`.
    pub fn add_scaled_to(&self, scale: f64, weights: &mut [f64]) {
        match self {
            FeatureVector::Dense { values } => {
                for (w, v) in weights.iter_mut().zip(values) {
                    *w += scale * v;
                }
            }
            FeatureVector::Sparse(s) => {
                for (&i, &v) in s.indices.iter().zip(&s.values) {
                    weights[i as usize] += scale * v;
                }
            }
        }
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        match (self, other) {
            (FeatureVector::Dense { values }, other) | (other, FeatureVector::Dense { values }) => {
                other.dot_dense(values)
            }
            (FeatureVector::Sparse(a), FeatureVector::Sparse(b)) => {
                let (mut i, mut j, mut acc) = (0, 0, 0.0);
                while i < a.indices.len() && j < b.indices.len() {
                    match a.indices[i].cmp(&b.indices[j]) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            acc += a.values[i] * b.values[j];
                            i += 1;
                            j += 1;
                        }
                    }
                }
                acc
            }
        }
    }

    pub fn squared_distance(&self, other: &FeatureVector) -> f64 {
        match (self, other) {
            (FeatureVector::Dense { values: a }, FeatureVector::Dense { values: b }) => {
                squared_euclidean(a, b)
            }
            _ => (self.squared_norm() + other.squared_norm() - 2.0 * self.dot(other)).max(0.0),
        }
    }

    /// Divides by the Euclidean norm unless the vector is (numerically) zero.
    pub fn normalized(mut self) -> Self {
        match &mut self {
            FeatureVector::Dense { values } => l2_normalize(values),
            FeatureVector::Sparse(s) => l2_normalize(&mut s.values),
        }
        self
    }

    pub fn has_non_finite(&self) -> bool {
        self.iter_stored().any(|(_, v)| !v.is_finite())
    }
}

/// Concatenates vectors in the given order. The result is sparse when any
/// part is sparse, dense otherwise.
pub fn concat(parts: &[&FeatureVector]) -> FeatureVector {
    let dim: usize = parts.iter().map(|p| p.dim()).sum();
    if parts.iter().any(|p| p.is_sparse()) {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut offset = 0usize;
        for part in parts {
            for (i, v) in part.iter_stored() {
                if v != 0.0 {
                    indices.push((offset + i) as u32);
                    values.push(v);
                }
            }
            offset += part.dim();
        }
        FeatureVector::Sparse(SparseVector {
            dim,
            indices,
            values,
        })
    } else {
        let mut values = Vec::with_capacity(dim);
        for part in parts {
            if let FeatureVector::Dense { values: v } = part {
                values.extend_from_slice(v);
            }
        }
        FeatureVector::Dense { values }
    }
}

/// Scales `values` to unit Euclidean length in place. Vectors with norm below
/// [`NORM_FLOOR`] are set to exact zero.
pub fn l2_normalize(values: &mut [f64]) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < NORM_FLOOR {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v /= norm);
    }
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_dense_dot_agree() {
        let s = FeatureVector::Sparse(SparseVector::from_pairs(
            5,
            vec![(3, 2.0), (0, 1.0), (3, 1.0)],
        ));
        let d = FeatureVector::dense(vec![1.0, 0.0, 0.0, 3.0, 0.0]);
        assert_eq!(s.to_dense(), d.to_dense());
        let w = FeatureVector::dense(vec![0.5, 1.0, 1.0, 2.0, 7.0]);
        assert_eq!(s.dot(&w), d.dot(&w));
        assert_eq!(s.dot(&s), 10.0);
        assert_eq!(s.squared_distance(&d), 0.0);
    }

    #[test]
    fn concat_keeps_order_and_dims() {
        let a = FeatureVector::dense(vec![1.0, 2.0]);
        let b = FeatureVector::Sparse(SparseVector::from_pairs(3, vec![(1, 5.0)]));
        let c = concat(&[&a, &b]);
        assert!(c.is_sparse());
        assert_eq!(c.to_dense(), vec![1.0, 2.0, 0.0, 5.0, 0.0]);
        let dd = concat(&[&a, &a]);
        assert_eq!(dd.to_dense(), vec![1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn zero_vector_survives_normalization() {
        let z = FeatureVector::zeros_dense(4).normalized();
        assert!(z.is_zero());
        let v = FeatureVector::dense(vec![3.0, 4.0]).normalized();
        assert!((v.norm() - 1.0).abs() < 1e-15);
    }
}
