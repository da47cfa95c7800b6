//! Class-stratified descriptor samples for codebook training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ClassLabel;
use crate::visual::LocalDescriptorSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Images drawn per class; classes with fewer images contribute all of them.
    pub images_per_class: usize,
    /// Optional cap on descriptors taken from each image (drawn at random).
    pub max_descriptors_per_image: Option<usize>,
    pub seed: u64,
}

impl SampleConfig {
    pub fn new(images_per_class: usize, seed: u64) -> Self {
        Self {
            images_per_class,
            max_descriptors_per_image: None,
            seed,
        }
    }
}

/// Row-major descriptor matrix plus a record of how it was drawn.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSample {
    pub dim: usize,
    pub data: Vec<f32>,
    /// Images used per class, indexed by [`ClassLabel::index`].
    pub images_per_class: [usize; 9],
    pub description: String,
}

impl DescriptorSample {
    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Self {
        assert!(dim > 0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "row dimension");
            data.extend(r.iter().map(|&v| v as f32));
        }
        Self {
            dim,
            data,
            images_per_class: [0; 9],
            description: format!("{} explicit rows", rows.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Draws up to `images_per_class` images from every class and pools their
/// descriptors. Images are visited in input order after a seeded shuffle per
/// class, so identical inputs and seed give an identical sample.
pub fn sample_descriptors(
    images: &[(ClassLabel, &LocalDescriptorSet)],
    config: &SampleConfig,
) -> DescriptorSample {
    let labels: Vec<ClassLabel> = images.iter().map(|(l, _)| *l).collect();
    sample_descriptors_with(&labels, config, |i| {
        Ok::<_, std::convert::Infallible>(images[i].1.clone())
    })
    .unwrap_or_else(|e| match e {})
}

/// Like [`sample_descriptors`], but loads the descriptor set of image `i`
/// through `load` only when that image is drawn.
pub fn sample_descriptors_with<E>(
    labels: &[ClassLabel],
    config: &SampleConfig,
    mut load: impl FnMut(usize) -> Result<LocalDescriptorSet, E>,
) -> Result<DescriptorSample, E> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut per_class: [Vec<usize>; 9] = Default::default();
    for (i, label) in labels.iter().enumerate() {
        per_class[label.index()].push(i);
    }

    let dim = crate::visual::DESCRIPTOR_DIM;
    let mut out = DescriptorSample {
        dim,
        ..Default::default()
    };
    for (c, members) in per_class.iter_mut().enumerate() {
        let label = ClassLabel::from_index(c).expect("nine classes");
        if members.is_empty() {
            log::warn!("class {label} has no images; skipped in descriptor sample");
            continue;
        }
        members.shuffle(&mut rng);
        members.truncate(config.images_per_class);
        members.sort_unstable();
        out.images_per_class[c] = members.len();
        for &i in members.iter() {
            let set = load(i)?;
            let mut rows: Vec<usize> = (0..set.len()).collect();
            if let Some(cap) = config.max_descriptors_per_image {
                if rows.len() > cap {
                    rows.shuffle(&mut rng);
                    rows.truncate(cap);
                    rows.sort_unstable();
                }
            }
            for r in rows {
                out.data.extend_from_slice(set.descriptor(r));
            }
        }
    }
    out.description = format!(
        "{} images per class (seed {}, per-image cap {:?}): {:?}",
        config.images_per_class,
        config.seed,
        config.max_descriptors_per_image,
        out.images_per_class
    );
    Ok(out)
}
