//! SIFT descriptors with difference-of-Gaussians keypoints (sparse) or a regular
//! grid (dense).
//!
//! Angles are `atan2(dy, dx)` in pixel coordinates with y pointing down. Both
//! samplers share the 4x4x8 descriptor layout with trilinear binning, 0.2
//! clamping and renormalization.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::filter::{gaussian_blur, gradients, Plane};
use super::{StandardImage, VisualError};

pub const DESCRIPTOR_DIM: usize = 128;
const SPATIAL_BINS: usize = 4;
const ORIENTATION_BINS: usize = 8;
const CLAMP: f64 = 0.2;
/// Histograms with raw norm below this become the all-zero descriptor.
pub const DESCRIPTOR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorLocation {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
}

/// Row-major 128-d descriptors and where they were sampled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalDescriptorSet {
    pub data: Vec<f32>,
    pub locations: Vec<DescriptorLocation>,
}

impl LocalDescriptorSet {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn descriptor(&self, i: usize) -> &[f32] {
        &self.data[i * DESCRIPTOR_DIM..(i + 1) * DESCRIPTOR_DIM]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(DESCRIPTOR_DIM)
    }

    fn push(&mut self, desc: &[f32; DESCRIPTOR_DIM], loc: DescriptorLocation) {
        self.data.extend_from_slice(desc);
        self.locations.push(loc);
    }
}

/// Detector settings; intensities are assumed to lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiftConfig {
    pub octave_layers: usize,
    pub sigma: f64,
    pub assumed_blur: f64,
    pub contrast_threshold: f64,
    pub edge_threshold: f64,
    /// Octaves stop once the shorter side would drop below this many pixels.
    pub min_octave_size: usize,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self {
            octave_layers: 3,
            sigma: 1.6,
            assumed_blur: 0.5,
            contrast_threshold: 0.04,
            edge_threshold: 10.0,
            min_octave_size: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseSiftConfig {
    pub step: usize,
    pub patch: usize,
}

impl Default for DenseSiftConfig {
    fn default() -> Self {
        Self { step: 8, patch: 16 }
    }
}

struct GradientField {
    width: usize,
    height: usize,
    mag: Vec<f64>,
    ori: Vec<f64>,
}

impl GradientField {
    fn of(plane: &Plane) -> Self {
        let (mag, ori) = gradients(plane);
        Self {
            width: plane.width,
            height: plane.height,
            mag,
            ori,
        }
    }
}

/// 4x4x8 histogram around `(cx, cy)` with spatial bins of `bin_width` pixels,
/// rotated by `angle`.
fn compute_descriptor(
    grad: &GradientField,
    cx: f64,
    cy: f64,
    bin_width: f64,
    angle: f64,
) -> [f32; DESCRIPTOR_DIM] {
    let d = SPATIAL_BINS as f64;
    let n = ORIENTATION_BINS;
    let (sin_t, cos_t) = angle.sin_cos();
    let radius = (bin_width * std::f64::consts::SQRT_2 * (d + 1.0) * 0.5).round() as isize;
    let weight_scale = -1.0 / (2.0 * (0.5 * d) * (0.5 * d));
    let mut hist = vec![0.0f64; (SPATIAL_BINS + 2) * (SPATIAL_BINS + 2) * (n + 2)];
    let idx = |r: usize, c: usize, o: usize| (r * (SPATIAL_BINS + 2) + c) * (n + 2) + o;

    let x0 = cx.round() as isize;
    let y0 = cy.round() as isize;
    for dy in -radius..=radius {
        let y = y0 + dy;
        if y < 0 || y >= grad.height as isize {
            continue;
        }
        for dx in -radius..=radius {
            let x = x0 + dx;
            if x < 0 || x >= grad.width as isize {
                continue;
            }
            let ox = x as f64 - cx;
            let oy = y as f64 - cy;
            let xr = (cos_t * ox + sin_t * oy) / bin_width;
            let yr = (-sin_t * ox + cos_t * oy) / bin_width;
            let rbin = yr + d / 2.0 - 0.5;
            let cbin = xr + d / 2.0 - 0.5;
            if rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d {
                continue;
            }
            let p = y as usize * grad.width + x as usize;
            let mag = grad.mag[p];
            if mag == 0.0 {
                continue;
            }
            let w = (weight_scale * (xr * xr + yr * yr)).exp() * mag;
            let mut rel = (grad.ori[p] - angle).rem_euclid(2.0 * PI);
            if rel >= 2.0 * PI {
                rel = 0.0;
            }
            let obin = rel * n as f64 / (2.0 * PI);

            let r0 = rbin.floor();
            let c0 = cbin.floor();
            let o0 = obin.floor();
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            let (r0, c0, o0) = ((r0 + 1.0) as usize, (c0 + 1.0) as usize, o0 as usize % n);
            for (ri, wr) in [(0, 1.0 - fr), (1, fr)] {
                for (ci, wc) in [(0, 1.0 - fc), (1, fc)] {
                    for (oi, wo) in [(0, 1.0 - fo), (1, fo)] {
                        hist[idx(r0 + ri, c0 + ci, o0 + oi)] += w * wr * wc * wo;
                    }
                }
            }
        }
    }

    let mut raw = [0.0f64; DESCRIPTOR_DIM];
    for r in 0..SPATIAL_BINS {
        for c in 0..SPATIAL_BINS {
            // orientation bin n wraps onto bin 0
            let wrap = hist[idx(r + 1, c + 1, n)];
            for o in 0..n {
                let mut v = hist[idx(r + 1, c + 1, o)];
                if o == 0 {
                    v += wrap;
                }
                raw[(r * SPATIAL_BINS + c) * n + o] = v;
            }
        }
    }
    finalize_descriptor(&raw)
}

/// Normalize, clamp at 0.2 and renormalize; near-zero histograms give zeros.
fn finalize_descriptor(raw: &[f64; DESCRIPTOR_DIM]) -> [f32; DESCRIPTOR_DIM] {
    let mut out = [0.0f32; DESCRIPTOR_DIM];
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < DESCRIPTOR_FLOOR {
        return out;
    }
    let mut v: Vec<f64> = raw.iter().map(|x| (x / norm).min(CLAMP)).collect();
    let norm2 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm2);
    for (o, x) in out.iter_mut().zip(v) {
        *o = x as f32;
    }
    out
}

/// Grid-sampled descriptors: `floor((S - patch) / step + 1)^2` upright
/// descriptors with `patch / 4` pixel spatial bins.
pub fn dense_sift(
    img: &StandardImage,
    config: &DenseSiftConfig,
) -> Result<LocalDescriptorSet, VisualError> {
    let s = img.size;
    if config.step == 0 {
        return Err(VisualError::InvalidParameter(
            "dense step must be >= 1".into(),
        ));
    }
    if config.patch == 0 {
        return Err(VisualError::InvalidParameter(
            "dense patch must be >= 1".into(),
        ));
    }
    if config.patch > s {
        return Err(VisualError::PatchTooLarge {
            patch: config.patch,
            size: s,
        });
    }
    let bin_width = config.patch as f64 / SPATIAL_BINS as f64;
    let plane = Plane::new(s, s, img.pixels.clone());
    let smoothed = gaussian_blur(&plane, bin_width / 6.0);
    let grad = GradientField::of(&smoothed);
    let per_side = (s - config.patch) / config.step + 1;
    let mut out = LocalDescriptorSet::default();
    for gy in 0..per_side {
        for gx in 0..per_side {
            let cx = (gx * config.step) as f64 + config.patch as f64 / 2.0 - 0.5;
            let cy = (gy * config.step) as f64 + config.patch as f64 / 2.0 - 0.5;
            let desc = compute_descriptor(&grad, cx, cy, bin_width, 0.0);
            out.push(
                &desc,
                DescriptorLocation {
                    x: cx,
                    y: cy,
                    scale: bin_width,
                },
            );
        }
    }
    Ok(out)
}

struct Octave {
    gauss: Vec<Plane>,
    dog: Vec<Plane>,
}

fn build_pyramid(img: &StandardImage, cfg: &SiftConfig) -> Vec<Octave> {
    let s = cfg.octave_layers;
    let k = 2f64.powf(1.0 / s as f64);
    let base_sigma = (cfg.sigma * cfg.sigma - cfg.assumed_blur * cfg.assumed_blur)
        .max(0.01)
        .sqrt();
    let mut base = gaussian_blur(
        &Plane::new(img.size, img.size, img.pixels.clone()),
        base_sigma,
    );
    // incremental blur between consecutive layers
    let increments: Vec<f64> = (1..s + 3)
        .map(|i| {
            let prev = cfg.sigma * k.powi(i as i32 - 1);
            let total = prev * k;
            (total * total - prev * prev).sqrt()
        })
        .collect();

    let mut octaves = Vec::new();
    loop {
        let mut gauss = vec![base.clone()];
        for inc in &increments {
            let next = gaussian_blur(gauss.last().unwrap(), *inc);
            gauss.push(next);
        }
        let dog = gauss.windows(2).map(|w| w[1].sub(&w[0])).collect();
        let next_base = gauss[s].decimate();
        octaves.push(Octave { gauss, dog });
        if next_base.width.min(next_base.height) < cfg.min_octave_size {
            break;
        }
        base = next_base;
    }
    octaves
}

const IMG_BORDER: usize = 5;
const MAX_INTERP_STEPS: usize = 5;

struct Refined {
    x: f64,
    y: f64,
    layer: usize,
    layer_offset: f64,
}

fn is_extremum(dog: &[Plane], layer: usize, x: usize, y: usize, threshold: f64) -> bool {
    let v = dog[layer].at(x, y);
    if v.abs() <= threshold {
        return false;
    }
    for (l, plane) in dog.iter().enumerate().take(layer + 2).skip(layer - 1) {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if l == layer && yy == y && xx == x {
                    continue;
                }
                let n = plane.at(xx, yy);
                if (v > 0.0 && n > v) || (v < 0.0 && n < v) {
                    return false;
                }
            }
        }
    }
    true
}

fn refine(
    oct: &Octave,
    mut layer: usize,
    mut x: usize,
    mut y: usize,
    cfg: &SiftConfig,
) -> Option<Refined> {
    let s = cfg.octave_layers;
    let (w, h) = (oct.dog[0].width, oct.dog[0].height);
    let mut offset = [0.0f64; 3];
    let mut grad = [0.0f64; 3];
    let mut converged = false;
    for _ in 0..MAX_INTERP_STEPS {
        let d = |l: usize, xx: usize, yy: usize| oct.dog[l].at(xx, yy);
        let v2 = 2.0 * d(layer, x, y);
        grad = [
            0.5 * (d(layer, x + 1, y) - d(layer, x - 1, y)),
            0.5 * (d(layer, x, y + 1) - d(layer, x, y - 1)),
            0.5 * (d(layer + 1, x, y) - d(layer - 1, x, y)),
        ];
        let dxx = d(layer, x + 1, y) + d(layer, x - 1, y) - v2;
        let dyy = d(layer, x, y + 1) + d(layer, x, y - 1) - v2;
        let dss = d(layer + 1, x, y) + d(layer - 1, x, y) - v2;
        let dxy = 0.25
            * (d(layer, x + 1, y + 1) - d(layer, x - 1, y + 1) - d(layer, x + 1, y - 1)
                + d(layer, x - 1, y - 1));
        let dxs = 0.25
            * (d(layer + 1, x + 1, y) - d(layer + 1, x - 1, y) - d(layer - 1, x + 1, y)
                + d(layer - 1, x - 1, y));
        let dys = 0.25
            * (d(layer + 1, x, y + 1) - d(layer + 1, x, y - 1) - d(layer - 1, x, y + 1)
                + d(layer - 1, x, y - 1));
        let hess = nalgebra::Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
        let g = nalgebra::Vector3::new(grad[0], grad[1], grad[2]);
        let sol = hess.lu().solve(&g)?;
        offset = [-sol[0], -sol[1], -sol[2]];
        if offset.iter().all(|o| o.abs() < 0.5) {
            converged = true;
            break;
        }
        if offset.iter().any(|o| o.abs() > 1e6) {
            return None;
        }
        let nx = x as isize + offset[0].round() as isize;
        let ny = y as isize + offset[1].round() as isize;
        let nl = layer as isize + offset[2].round() as isize;
        if nl < 1
            || nl > s as isize
            || nx < IMG_BORDER as isize
            || nx >= (w - IMG_BORDER) as isize
            || ny < IMG_BORDER as isize
            || ny >= (h - IMG_BORDER) as isize
        {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        layer = nl as usize;
    }
    if !converged {
        return None;
    }
    let d = &oct.dog[layer];
    let contrast =
        d.at(x, y) + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2]);
    if contrast.abs() * (s as f64) < cfg.contrast_threshold {
        return None;
    }
    let v2 = 2.0 * d.at(x, y);
    let dxx = d.at(x + 1, y) + d.at(x - 1, y) - v2;
    let dyy = d.at(x, y + 1) + d.at(x, y - 1) - v2;
    let dxy =
        0.25 * (d.at(x + 1, y + 1) - d.at(x - 1, y + 1) - d.at(x + 1, y - 1) + d.at(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = cfg.edge_threshold;
    if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
        return None;
    }
    Some(Refined {
        x: x as f64 + offset[0],
        y: y as f64 + offset[1],
        layer,
        layer_offset: offset[2],
    })
}

/// Dominant gradient orientations around a point (peaks within 80% of the maximum).
fn orientations(grad: &GradientField, x: f64, y: f64, scale: f64) -> Vec<f64> {
    const BINS: usize = 36;
    let sigma = 1.5 * scale;
    let radius = (3.0 * sigma).round() as isize;
    let mut hist = [0.0f64; BINS];
    let (xi, yi) = (x.round() as isize, y.round() as isize);
    for dy in -radius..=radius {
        let yy = yi + dy;
        if yy <= 0 || yy >= grad.height as isize - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let xx = xi + dx;
            if xx <= 0 || xx >= grad.width as isize - 1 {
                continue;
            }
            let p = yy as usize * grad.width + xx as usize;
            let w = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            let o = grad.ori[p].rem_euclid(2.0 * PI);
            let bin = ((o * BINS as f64 / (2.0 * PI)).round() as usize) % BINS;
            hist[bin] += w * grad.mag[p];
        }
    }
    let mut smooth = [0.0f64; BINS];
    for i in 0..BINS {
        let at = |k: isize| hist[(i as isize + k).rem_euclid(BINS as isize) as usize];
        smooth[i] = (at(-2) + at(2)) / 16.0 + (at(-1) + at(1)) * 4.0 / 16.0 + at(0) * 6.0 / 16.0;
    }
    let max = smooth.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..BINS {
        let l = smooth[(i + BINS - 1) % BINS];
        let r = smooth[(i + 1) % BINS];
        let c = smooth[i];
        if c > l && c > r && c >= 0.8 * max {
            let shift = 0.5 * (l - r) / (l - 2.0 * c + r);
            let bin = (i as f64 + shift).rem_euclid(BINS as f64);
            out.push(bin * 2.0 * PI / BINS as f64);
        }
    }
    out
}

/// Difference-of-Gaussians keypoints with orientation assignment and one
/// descriptor per (keypoint, dominant orientation).
pub fn sparse_sift(img: &StandardImage, cfg: &SiftConfig) -> LocalDescriptorSet {
    let mut out = LocalDescriptorSet::default();
    if img.size < 2 * IMG_BORDER + 3 {
        return out;
    }
    let pyramid = build_pyramid(img, cfg);
    let s = cfg.octave_layers;
    let threshold = 0.5 * cfg.contrast_threshold / s as f64;
    for (o, oct) in pyramid.iter().enumerate() {
        let (w, h) = (oct.dog[0].width, oct.dog[0].height);
        if w <= 2 * IMG_BORDER || h <= 2 * IMG_BORDER {
            continue;
        }
        let grads: Vec<GradientField> = oct.gauss.iter().map(GradientField::of).collect();
        let octave_scale = 2f64.powi(o as i32);
        let mut seen = std::collections::HashSet::new();
        for layer in 1..=s {
            for y in IMG_BORDER..h - IMG_BORDER {
                for x in IMG_BORDER..w - IMG_BORDER {
                    if !is_extremum(&oct.dog, layer, x, y, threshold) {
                        continue;
                    }
                    let Some(kp) = refine(oct, layer, x, y, cfg) else {
                        continue;
                    };
                    let key = (
                        (kp.x * 8.0).round() as i64,
                        (kp.y * 8.0).round() as i64,
                        kp.layer,
                    );
                    if !seen.insert(key) {
                        continue;
                    }
                    let scale =
                        cfg.sigma * 2f64.powf((kp.layer as f64 + kp.layer_offset) / s as f64);
                    let grad = &grads[kp.layer];
                    for angle in orientations(grad, kp.x, kp.y, scale) {
                        let desc = compute_descriptor(grad, kp.x, kp.y, 3.0 * scale, angle);
                        let shift = (octave_scale - 1.0) / 2.0;
                        out.push(
                            &desc,
                            DescriptorLocation {
                                x: kp.x * octave_scale + shift,
                                y: kp.y * octave_scale + shift,
                                scale: scale * octave_scale,
                            },
                        );
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(d: &[f32]) -> f64 {
        d.iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn dense_grid_count() {
        let img = StandardImage::from_fn(256, "d", |x, y| ((x ^ y) % 7) as f64 / 7.0);
        let set = dense_sift(&img, &DenseSiftConfig { step: 8, patch: 16 }).unwrap();
        assert_eq!(set.len(), 961);
        assert_eq!(set.data.len(), 961 * DESCRIPTOR_DIM);
        for d in set.iter() {
            assert!(norm(d) <= 1.0 + 1e-6);
        }
        let one = dense_sift(
            &img,
            &DenseSiftConfig {
                step: 256,
                patch: 256,
            },
        )
        .unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn dense_rejects_bad_parameters() {
        let img = StandardImage::new(32, vec![0.0; 1024], "x");
        assert!(matches!(
            dense_sift(&img, &DenseSiftConfig { step: 4, patch: 33 }),
            Err(VisualError::PatchTooLarge { .. })
        ));
        assert!(dense_sift(&img, &DenseSiftConfig { step: 0, patch: 8 }).is_err());
    }

    #[test]
    fn flat_image() {
        let img = StandardImage::new(64, vec![0.4; 64 * 64], "flat");
        assert!(sparse_sift(&img, &SiftConfig::default()).is_empty());
        let dense = dense_sift(&img, &DenseSiftConfig::default()).unwrap();
        assert_eq!(dense.len(), 49);
        assert!(dense.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corner_is_detected() {
        // bright square occupying the lower-right quadrant; corner at (32, 32)
        let img =
            StandardImage::from_fn(64, "c", |x, y| if x >= 32 && y >= 32 { 1.0 } else { 0.0 });
        let set = sparse_sift(&img, &SiftConfig::default());
        assert!(!set.is_empty());
        let near = set
            .locations
            .iter()
            .any(|l| ((l.x - 32.0).powi(2) + (l.y - 32.0).powi(2)).sqrt() < 8.0 + l.scale);
        assert!(near, "{:?}", set.locations);
        for d in set.iter() {
            let n = norm(d);
            assert!(n <= 1.0 + 1e-6 && n > 0.99);
        }
    }
}
