//! Named per-record feature vectors and early (concatenation) fusion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::vector::{concat, FeatureVector, SparseVector};

/// The feature vectors of one record, by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub record_id: String,
    pub features: Vec<(String, FeatureVector)>,
}

impl FeatureBundle {
    pub fn new(record_id: impl Into<String>) -> Self {
        Self {
            record_id: record_id.into(),
            features: Vec::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, vector: FeatureVector) -> Self {
        self.insert(name, vector);
        self
    }

    /// Adds or replaces a feature.
    pub fn insert(&mut self, name: impl Into<String>, vector: FeatureVector) {
        let name = name.into();
        match self.features.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = vector,
            None => self.features.push((name, vector)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&FeatureVector> {
        self.features
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }
}

/// Concatenates the named features in the given order. Parts are expected
/// to be normalized already; the result is not re-normalized.
pub fn early_fuse(bundle: &FeatureBundle, order: &[String]) -> Result<FeatureVector, FusionError> {
    let parts = order
        .iter()
        .map(|name| {
            bundle.get(name).ok_or_else(|| FusionError::MissingFeature {
                record: bundle.record_id.clone(),
                feature: name.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(concat(&parts))
}

/// Fuses every record; all records must agree on each part's dimension.
pub fn early_fuse_all(
    bundles: &[FeatureBundle],
    order: &[String],
) -> Result<Vec<FeatureVector>, FusionError> {
    let fused: Vec<FeatureVector> = bundles
        .par_iter()
        .map(|b| early_fuse(b, order))
        .collect::<Result<_, _>>()?;
    if let Some(first) = fused.first() {
        let dim = first.dim();
        if let Some((i, v)) = fused.iter().enumerate().find(|(_, v)| v.dim() != dim) {
            return Err(FusionError::DimensionMismatch {
                record: bundles[i].record_id.clone(),
                expected: dim,
                got: v.dim(),
            });
        }
    }
    Ok(fused)
}

/// Cuts a fused vector back into blocks of the given dimensions.
pub fn split_fused(
    fused: &FeatureVector,
    dims: &[usize],
) -> Result<Vec<FeatureVector>, FusionError> {
    let total: usize = dims.iter().sum();
    if total != fused.dim() {
        return Err(FusionError::DimensionMismatch {
            record: String::new(),
            expected: total,
            got: fused.dim(),
        });
    }
    let mut out = Vec::with_capacity(dims.len());
    let mut start = 0;
    for &d in dims {
        let end = start + d;
        out.push(match fused {
            FeatureVector::Dense { values } => FeatureVector::dense(values[start..end].to_vec()),
            FeatureVector::Sparse(s) => {
                let (mut indices, mut values) = (Vec::new(), Vec::new());
                for (&i, &v) in s.indices.iter().zip(&s.values) {
                    let i = i as usize;
                    if (start..end).contains(&i) {
                        indices.push((i - start) as u32);
                        values.push(v);
                    }
                }
                FeatureVector::Sparse(SparseVector {
                    dim: d,
                    indices,
                    values,
                })
            }
        });
        start = end;
    }
    Ok(out)
}
