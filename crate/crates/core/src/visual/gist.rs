//! GIST: Gabor energy pooled over a regular block grid.
//!
//! Filters are defined in the frequency domain on a symmetrically padded image;
//! each filter output magnitude is averaged over `b x b` non-overlapping blocks.
//! The descriptor is laid out filter-major (`filter * b*b + row * b + col`) and
//! L2-normalized.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::filter::reflect;
use super::{StandardImage, VisualError};
use crate::vector::{l2_normalize, FeatureVector};

/// Block counts per side evaluated in the original experiments.
pub const GIST_BLOCK_GRID: [usize; 5] = [1, 2, 4, 8, 16];

/// Frequency-domain Gabor filter bank for one image size.
pub struct GaborBank {
    image_size: usize,
    padding: usize,
    fft_size: usize,
    orientations_per_scale: Vec<usize>,
    transfer: Vec<Vec<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GaborBank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaborBank")
            .field("image_size", &self.image_size)
            .field("padding", &self.padding)
            .field("orientations_per_scale", &self.orientations_per_scale)
            .finish()
    }
}

impl GaborBank {
    /// 4 scales x 16 orientations = 64 filters.
    pub fn standard(image_size: usize) -> Self {
        Self::new(image_size, &[16, 16, 16, 16])
    }

    pub fn new(image_size: usize, orientations_per_scale: &[usize]) -> Self {
        assert!(image_size >= 4, "image too small for a filter bank");
        assert!(
            !orientations_per_scale.is_empty() && orientations_per_scale.iter().all(|&o| o > 0),
            "every scale needs at least one orientation"
        );
        let padding = (image_size / 8).max(2);
        let n = image_size + 2 * padding;

        // (radial bandwidth, center frequency, angular concentration, orientation)
        let mut params = Vec::new();
        for (scale, &orients) in orientations_per_scale.iter().enumerate() {
            for j in 0..orients {
                params.push((
                    0.35,
                    0.3 / 1.85f64.powi(scale as i32),
                    16.0 * (orients * orients) as f64 / (32.0 * 32.0),
                    PI / orients as f64 * j as f64,
                ));
            }
        }
        let freq = |u: usize| -> f64 {
            if u < n.div_ceil(2) {
                u as f64
            } else {
                u as f64 - n as f64
            }
        };
        let transfer = params
            .iter()
            .map(|&(bw, fc, conc, theta)| {
                let mut g = vec![0.0; n * n];
                for v in 0..n {
                    let fy = freq(v);
                    for u in 0..n {
                        let fx = freq(u);
                        if u == 0 && v == 0 {
                            continue;
                        }
                        let fr = (fx * fx + fy * fy).sqrt();
                        let mut tr = fy.atan2(fx) + theta;
                        if tr < -PI {
                            tr += 2.0 * PI;
                        } else if tr > PI {
                            tr -= 2.0 * PI;
                        }
                        let radial = fr / n as f64 / fc - 1.0;
                        g[v * n + u] =
                            (-10.0 * bw * radial * radial - 2.0 * conc * PI * tr * tr).exp();
                    }
                }
                g
            })
            .collect();

        let mut planner = FftPlanner::new();
        Self {
            image_size,
            padding,
            fft_size: n,
            orientations_per_scale: orientations_per_scale.to_vec(),
            transfer,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn filter_count(&self) -> usize {
        self.transfer.len()
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn orientations_per_scale(&self) -> &[usize] {
        &self.orientations_per_scale
    }

    /// Transfer function of filter `k` in unshifted FFT layout.
    pub fn transfer_function(&self, k: usize) -> &[f64] {
        &self.transfer[k]
    }

    fn fft2(&self, buf: &mut [Complex<f64>], fft: &Arc<dyn Fft<f64>>) {
        let n = self.fft_size;
        let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        for row in buf.chunks_exact_mut(n) {
            fft.process_with_scratch(row, &mut scratch);
        }
        transpose(buf, n);
        for row in buf.chunks_exact_mut(n) {
            fft.process_with_scratch(row, &mut scratch);
        }
        transpose(buf, n);
    }

    /// Magnitude of filter `k` applied to the image, cropped back to `size x size`.
    fn response(&self, spectrum: &[Complex<f64>], k: usize) -> Vec<f64> {
        let n = self.fft_size;
        let mut buf: Vec<Complex<f64>> = spectrum
            .iter()
            .zip(&self.transfer[k])
            .map(|(s, g)| s * g)
            .collect();
        self.fft2(&mut buf, &self.inverse);
        let scale = 1.0 / (n * n) as f64;
        let s = self.image_size;
        let p = self.padding;
        let mut out = Vec::with_capacity(s * s);
        for y in 0..s {
            for x in 0..s {
                out.push(buf[(y + p) * n + x + p].norm() * scale);
            }
        }
        out
    }
}

fn transpose(buf: &mut [Complex<f64>], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// GIST descriptor of dimension `blocks^2 * bank.filter_count()`.
pub fn gist_descriptor(
    img: &StandardImage,
    blocks: usize,
    bank: &GaborBank,
) -> Result<FeatureVector, VisualError> {
    let s = img.size;
    if bank.image_size != s {
        return Err(VisualError::BankSizeMismatch {
            bank: bank.image_size,
            image: s,
        });
    }
    if blocks == 0 || !s.is_multiple_of(blocks) {
        return Err(VisualError::BlocksDoNotDivide { size: s, blocks });
    }
    let n = bank.fft_size;
    let p = bank.padding as isize;
    let mut spectrum = Vec::with_capacity(n * n);
    for y in 0..n {
        let sy = reflect(y as isize - p, s);
        for x in 0..n {
            let sx = reflect(x as isize - p, s);
            spectrum.push(Complex::new(img.at(sx, sy), 0.0));
        }
    }
    bank.fft2(&mut spectrum, &bank.forward);

    let cell = s / blocks;
    let per_filter: Vec<Vec<f64>> = (0..bank.filter_count())
        .into_par_iter()
        .map(|k| {
            let mag = bank.response(&spectrum, k);
            let mut pooled = vec![0.0; blocks * blocks];
            for by in 0..blocks {
                for bx in 0..blocks {
                    let mut acc = 0.0;
                    for y in by * cell..(by + 1) * cell {
                        acc += mag[y * s + bx * cell..y * s + (bx + 1) * cell]
                            .iter()
                            .sum::<f64>();
                    }
                    pooled[by * blocks + bx] = acc / (cell * cell) as f64;
                }
            }
            pooled
        })
        .collect();
    let mut values: Vec<f64> = per_filter.into_iter().flatten().collect();
    l2_normalize(&mut values);
    Ok(FeatureVector::dense(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grating(size: usize, theta: f64, period: f64) -> StandardImage {
        StandardImage::from_fn(size, "g", |x, y| {
            let t = (x as f64 * theta.cos() + y as f64 * theta.sin()) * 2.0 * PI / period;
            0.5 + 0.4 * t.sin()
        })
    }

    #[test]
    fn standard_bank_has_64_filters() {
        let bank = GaborBank::standard(64);
        assert_eq!(bank.filter_count(), 64);
        for k in 0..64 {
            assert_eq!(bank.transfer_function(k)[0], 0.0, "filter {k} passes DC");
        }
    }

    #[test]
    fn dimensions_follow_block_count() {
        let bank = GaborBank::standard(32);
        let img = grating(32, 0.3, 6.0);
        for b in [1, 2, 4, 8, 16] {
            let g = gist_descriptor(&img, b, &bank).unwrap();
            assert_eq!(g.dim(), b * b * 64);
            assert!((g.norm() - 1.0).abs() < 1e-6);
        }
        assert!(matches!(
            gist_descriptor(&img, 3, &bank),
            Err(VisualError::BlocksDoNotDivide { .. })
        ));
    }

    #[test]
    fn flat_image_gives_zero_vector() {
        let bank = GaborBank::standard(32);
        let img = StandardImage::new(32, vec![0.6; 32 * 32], "flat");
        let g = gist_descriptor(&img, 4, &bank).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn deterministic_and_orientation_sensitive() {
        let bank = GaborBank::standard(64);
        let a = gist_descriptor(&grating(64, 0.0, 8.0), 2, &bank).unwrap();
        let a2 = gist_descriptor(&grating(64, 0.0, 8.0), 2, &bank).unwrap();
        assert_eq!(a, a2);
        let b = gist_descriptor(&grating(64, PI / 2.0, 8.0), 2, &bank).unwrap();
        assert!(
            a.dot(&b) < 0.9,
            "different orientations should differ: {}",
            a.dot(&b)
        );
    }
}
