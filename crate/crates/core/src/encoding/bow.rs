//! Hard-assignment bag-of-words and VLAD encodings.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::nearest;
use super::{Codebook, EncodingError};
use crate::vector::{l2_normalize, FeatureVector, NORM_FLOOR};
use crate::visual::LocalDescriptorSet;

/// Per-codeword normalization applied before the global L2 step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VladNormalization {
    #[default]
    IntraL2,
    None,
}

fn check_dim(set: &LocalDescriptorSet, codebook: &Codebook) -> Result<(), EncodingError> {
    if set.is_empty() {
        return Ok(());
    }
    let got = set.data.len() / set.len();
    if got != codebook.dim {
        return Err(EncodingError::DimensionMismatch {
            expected: codebook.dim,
            got,
        });
    }
    Ok(())
}

/// Nearest codeword per descriptor (ties to the lowest index).
pub fn assign_nearest(
    set: &LocalDescriptorSet,
    codebook: &Codebook,
) -> Result<Vec<usize>, EncodingError> {
    check_dim(set, codebook)?;
    let dim = codebook.dim;
    Ok(set
        .data
        .par_chunks_exact(dim)
        .map(|x| nearest(&codebook.centroids, dim, x).0)
        .collect())
}

/// L2-normalized histogram of nearest-codeword counts; empty input gives zeros.
pub fn encode_bow_hard(
    set: &LocalDescriptorSet,
    codebook: &Codebook,
) -> Result<FeatureVector, EncodingError> {
    let assign = assign_nearest(set, codebook)?;
    let mut hist = vec![0.0; codebook.k];
    for j in assign {
        hist[j] += 1.0;
    }
    l2_normalize(&mut hist);
    Ok(FeatureVector::dense(hist))
}

fn lexicographic(a: &[f32], b: &[f32]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Sum of residuals to the nearest codeword, block-normalized then globally
/// L2-normalized. Output dimension is `k * dim`.
///
/// Descriptors within a block are summed in lexicographic order of their
/// values, so the result does not depend on input order at all.
pub fn encode_vlad(
    set: &LocalDescriptorSet,
    codebook: &Codebook,
    normalization: VladNormalization,
) -> Result<FeatureVector, EncodingError> {
    let dim = codebook.dim;
    let assign = assign_nearest(set, codebook)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); codebook.k];
    for (i, &j) in assign.iter().enumerate() {
        members[j].push(i);
    }
    let row = |i: usize| &set.data[i * dim..(i + 1) * dim];
    let mut out = vec![0.0; codebook.k * dim];
    for (j, idx) in members.iter_mut().enumerate() {
        if idx.is_empty() {
            continue;
        }
        idx.sort_by(|&a, &b| lexicographic(row(a), row(b)));
        let c = codebook.centroid(j);
        let block = &mut out[j * dim..(j + 1) * dim];
        for &i in idx.iter() {
            for ((o, &x), &cv) in block.iter_mut().zip(row(i)).zip(c) {
                *o += x as f64 - cv;
            }
        }
        if normalization == VladNormalization::IntraL2 {
            let n = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n >= NORM_FLOOR {
                block.iter_mut().for_each(|v| *v /= n);
            } else {
                block.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    l2_normalize(&mut out);
    Ok(FeatureVector::dense(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::visual::DescriptorLocation;

    fn set_of(rows: &[Vec<f32>]) -> LocalDescriptorSet {
        LocalDescriptorSet {
            data: rows.iter().flatten().copied().collect(),
            locations: vec![
                DescriptorLocation {
                    x: 0.0,
                    y: 0.0,
                    scale: 1.0
                };
                rows.len()
            ],
        }
    }

    fn four() -> Codebook {
        Codebook::from_centroids(
            2,
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
            ],
        )
    }

    #[test]
    fn forced_assignments_histogram() {
        let set = set_of(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]]);
        let v = encode_bow_hard(&set, &four()).unwrap().to_dense();
        let s5 = 5f64.sqrt();
        assert_eq!(v, vec![2.0 / s5, 0.0, 0.0, 1.0 / s5]);
    }

    #[test]
    fn empty_set_gives_zero_vectors() {
        let empty = LocalDescriptorSet::default();
        let bow = encode_bow_hard(&empty, &four()).unwrap();
        assert_eq!(bow.dim(), 4);
        assert!(bow.is_zero());
        let vlad = encode_vlad(&empty, &four(), VladNormalization::IntraL2).unwrap();
        assert_eq!(vlad.dim(), 8);
        assert!(vlad.is_zero());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let set = set_of(&[vec![0.5, 0.0]]);
        assert_eq!(assign_nearest(&set, &four()).unwrap(), vec![0]);
    }

    #[test]
    fn dimension_mismatch() {
        let set = set_of(&[vec![0.5, 0.0, 1.0]]);
        assert_eq!(
            encode_bow_hard(&set, &four()),
            Err(EncodingError::DimensionMismatch {
                expected: 2,
                got: 3
            })
        );
    }

    #[test]
    fn vlad_zero_when_descriptors_are_centroids() {
        let set = set_of(&[vec![0.0, 1.0], vec![1.0, 1.0]]);
        let v = encode_vlad(&set, &four(), VladNormalization::IntraL2).unwrap();
        assert!(v.is_zero());
    }

    #[test]
    fn vlad_single_descriptor() {
        let set = set_of(&[vec![0.9, 0.3]]);
        let v = encode_vlad(&set, &four(), VladNormalization::IntraL2)
            .unwrap()
            .to_dense();
        // nearest is (1, 0); residual (-0.1, 0.3)
        let (rx, ry) = (0.9f32 as f64 - 1.0, 0.3f32 as f64);
        let n = (rx * rx + ry * ry).sqrt();
        let want = [0.0, 0.0, rx / n, ry / n, 0.0, 0.0, 0.0, 0.0];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
