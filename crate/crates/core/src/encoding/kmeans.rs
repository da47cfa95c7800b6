//! k-means++ seeding followed by Lloyd iterations (squared Euclidean distance),
//! finished with Hartigan single-point transfers.
//!
//! Lloyd stops at any partition where every point is nearest its own mean;
//! the transfer pass also accounts for how moving a point shifts both means,
//! which escapes many of those shallow optima.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DescriptorSample, EncodingError, MODEL_FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves further than this (Euclidean).
    pub tol: f64,
    /// Independent seedings; the run with the lowest final inertia wins.
    pub restarts: usize,
    /// Upper bound on Hartigan transfer passes after Lloyd; 0 disables them.
    pub refine_passes: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            tol: 1e-6,
            restarts: 3,
            refine_passes: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub format_version: u32,
    pub k: usize,
    pub dim: usize,
    pub seed: u64,
    pub source_feature: String,
    pub training_sample: String,
    /// Row-major `k x dim`.
    pub centroids: Vec<f64>,
    /// Inertia after each assignment step of the winning run.
    pub inertia_history: Vec<f64>,
}

impl Codebook {
    /// Wraps explicit centroids, mostly useful for tests and imports.
    pub fn from_centroids(dim: usize, centroids: Vec<Vec<f64>>) -> Self {
        assert!(dim > 0 && !centroids.is_empty());
        let k = centroids.len();
        let mut flat = Vec::with_capacity(k * dim);
        for c in &centroids {
            assert_eq!(c.len(), dim);
            flat.extend_from_slice(c);
        }
        Self {
            format_version: MODEL_FORMAT_VERSION,
            k,
            dim,
            seed: 0,
            source_feature: String::new(),
            training_sample: String::new(),
            centroids: flat,
            inertia_history: Vec::new(),
        }
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Index of the nearest centroid and its squared distance; ties go to the lower index.
    pub fn nearest(&self, x: &[f32]) -> (usize, f64) {
        nearest(&self.centroids, self.dim, x)
    }
}

#[inline]
fn dist2(x: &[f32], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let d = a as f64 - b;
            d * d
        })
        .sum()
}

pub(crate) fn nearest(centroids: &[f64], dim: usize, x: &[f32]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = dist2(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn draw_weighted(d2: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut target = rng.gen::<f64>() * total;
    let mut chosen = d2.len() - 1;
    for (i, &w) in d2.iter().enumerate() {
        if w > 0.0 && target < w {
            chosen = i;
            break;
        }
        target -= w;
    }
    // guard against rounding landing on a zero-weight tail point
    while d2[chosen] == 0.0 {
        chosen -= 1;
    }
    chosen
}

/// Greedy k-means++: each step draws `2 + ln k` D^2-weighted candidates and
/// keeps the one giving the lowest potential.
fn seed_plus_plus(sample: &DescriptorSample, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = sample.len();
    let dim = sample.dim;
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend(sample.row(first).iter().map(|&v| v as f64));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| dist2(sample.row(i), &centroids[..dim]))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            let pick = rng.gen_range(0..n);
            centroids.extend(sample.row(pick).iter().map(|&v| v as f64));
            continue;
        }
        let candidates: Vec<usize> = (0..trials)
            .map(|_| draw_weighted(&d2, total, rng))
            .collect();
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        for &cand in &candidates {
            let c: Vec<f64> = sample.row(cand).iter().map(|&v| v as f64).collect();
            let updated: Vec<f64> = d2
                .par_iter()
                .enumerate()
                .map(|(i, &d)| d.min(dist2(sample.row(i), &c)))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, updated, cand));
            }
        }
        let (_, updated, pick) = best.expect("at least one candidate");
        d2 = updated;
        centroids.extend(sample.row(pick).iter().map(|&v| v as f64));
    }
    centroids
}

struct Run {
    centroids: Vec<f64>,
    history: Vec<f64>,
}

fn lloyd(sample: &DescriptorSample, mut centroids: Vec<f64>, config: &KMeansConfig) -> Run {
    let n = sample.len();
    let dim = sample.dim;
    let k = config.k;
    let mut history: Vec<f64> = Vec::new();
    for iter in 0..config.max_iter.max(1) {
        let mut assign: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest(&centroids, dim, sample.row(i)))
            .collect();
        let inertia: f64 = assign.iter().map(|a| a.1).sum();
        if let Some(&prev) = history.last() {
            assert!(
                inertia <= prev * (1.0 + 1e-9) + 1e-12,
                "k-means inertia increased at sweep {iter}: {prev} -> {inertia}"
            );
        }
        history.push(inertia);

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &(j, _)) in assign.iter().enumerate() {
            counts[j] += 1;
            for (s, &v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(sample.row(i)) {
                *s += v as f64;
            }
        }
        // empty clusters take over the point farthest from its centroid
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let (far, far_d) = assign
                .iter()
                .enumerate()
                .filter(|(_, a)| counts[a.0] > 1)
                .fold((usize::MAX, 0.0), |best, (i, a)| {
                    if a.1 > best.1 {
                        (i, a.1)
                    } else {
                        best
                    }
                });
            if far == usize::MAX || far_d == 0.0 {
                continue;
            }
            let old = assign[far].0;
            counts[old] -= 1;
            for (s, &v) in sums[old * dim..(old + 1) * dim]
                .iter_mut()
                .zip(sample.row(far))
            {
                *s -= v as f64;
            }
            counts[j] = 1;
            for (s, &v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(sample.row(far)) {
                *s = v as f64;
            }
            assign[far] = (j, 0.0);
            log::debug!("k-means: cluster {j} empty at sweep {iter}, reseeded to point {far}");
        }

        let mut shift = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            let mut moved = 0.0;
            for (c, s) in centroids[j * dim..(j + 1) * dim]
                .iter_mut()
                .zip(&sums[j * dim..(j + 1) * dim])
            {
                let new = s * inv;
                moved += (new - *c) * (new - *c);
                *c = new;
            }
            shift = shift.max(moved.sqrt());
        }
        if shift < config.tol {
            break;
        }
    }
    if config.refine_passes > 0 {
        hartigan(sample, &mut centroids, k, config.refine_passes);
    }
    let final_inertia: f64 = (0..n)
        .into_par_iter()
        .map(|i| nearest(&centroids, dim, sample.row(i)).1)
        .collect::<Vec<_>>()
        .iter()
        .sum();
    if let Some(&prev) = history.last() {
        assert!(final_inertia <= prev * (1.0 + 1e-9) + 1e-12);
    }
    history.push(final_inertia);
    Run { centroids, history }
}

/// Moves single points between clusters while that lowers the total
/// within-cluster sum of squares, then resets centroids to exact means.
fn hartigan(sample: &DescriptorSample, centroids: &mut [f64], k: usize, passes: usize) {
    let n = sample.len();
    let dim = sample.dim;
    let mut assign: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| nearest(centroids, dim, sample.row(i)).0)
        .collect();
    let recompute = |assign: &[usize], centroids: &mut [f64]| -> Vec<usize> {
        let mut counts = vec![0usize; k];
        let mut sums = vec![0.0f64; k * dim];
        for (i, &j) in assign.iter().enumerate() {
            counts[j] += 1;
            for (s, &v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(sample.row(i)) {
                *s += v as f64;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in centroids[j * dim..(j + 1) * dim]
                    .iter_mut()
                    .zip(&sums[j * dim..(j + 1) * dim])
                {
                    *c = s / counts[j] as f64;
                }
            }
        }
        counts
    };
    let mut counts = recompute(&assign, centroids);
    for _ in 0..passes {
        let mut moved = false;
        for (i, slot) in assign.iter_mut().enumerate() {
            let x = sample.row(i);
            let a = *slot;
            if counts[a] <= 1 {
                continue;
            }
            let na = counts[a] as f64;
            let remove_gain = na / (na - 1.0) * dist2(x, &centroids[a * dim..(a + 1) * dim]);
            let mut best = (a, remove_gain);
            for b in 0..k {
                if b == a {
                    continue;
                }
                let nb = counts[b] as f64;
                let cost = nb / (nb + 1.0) * dist2(x, &centroids[b * dim..(b + 1) * dim]);
                if cost < best.1 {
                    best = (b, cost);
                }
            }
            let b = best.0;
            if b == a || best.1 >= remove_gain * (1.0 - 1e-12) {
                continue;
            }
            let nb = counts[b] as f64;
            for (c, &v) in centroids[a * dim..(a + 1) * dim].iter_mut().zip(x) {
                *c = (na * *c - v as f64) / (na - 1.0);
            }
            for (c, &v) in centroids[b * dim..(b + 1) * dim].iter_mut().zip(x) {
                *c = (nb * *c + v as f64) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            *slot = b;
            moved = true;
        }
        if !moved {
            break;
        }
        counts = recompute(&assign, centroids);
    }
    recompute(&assign, centroids);
}

/// Trains a `k`-word codebook. Deterministic for a given sample and config.
pub fn kmeans_codebook(
    sample: &DescriptorSample,
    config: &KMeansConfig,
) -> Result<Codebook, EncodingError> {
    if config.k == 0 {
        return Err(EncodingError::InvalidParameter("k must be >= 1".into()));
    }
    if sample.len() < config.k {
        return Err(EncodingError::SampleTooSmall {
            available: sample.len(),
            k: config.k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<Run> = None;
    for _ in 0..config.restarts.max(1) {
        let init = seed_plus_plus(sample, config.k, &mut rng);
        let run = lloyd(sample, init, config);
        let better = match &best {
            None => true,
            Some(b) => run.history.last() < b.history.last(),
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one run");
    Ok(Codebook {
        format_version: MODEL_FORMAT_VERSION,
        k: config.k,
        dim: sample.dim,
        seed: config.seed,
        source_feature: String::new(),
        training_sample: sample.description.clone(),
        centroids: best.centroids,
        inertia_history: best.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_corners_are_recovered_exactly() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ];
        let sample = DescriptorSample::from_rows(2, &rows);
        let cb = kmeans_codebook(&sample, &KMeansConfig::new(4, 5)).unwrap();
        assert_eq!(cb.inertia(), 0.0);
        let mut got: Vec<Vec<f64>> = (0..4).map(|j| cb.centroid(j).to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = rows.clone();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|i| vec![i as f64, (i * i) as f64 * 0.5])
            .collect();
        let sample = DescriptorSample::from_rows(2, &rows);
        let cb = kmeans_codebook(&sample, &KMeansConfig::new(1, 0)).unwrap();
        assert!((cb.centroid(0)[0] - 3.0).abs() < 1e-12);
        assert!((cb.centroid(0)[1] - 91.0 / 7.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn too_small_sample_is_rejected() {
        let sample = DescriptorSample::from_rows(1, &[vec![1.0], vec![2.0]]);
        assert_eq!(
            kmeans_codebook(&sample, &KMeansConfig::new(3, 0)),
            Err(EncodingError::SampleTooSmall { available: 2, k: 3 })
        );
    }

    #[test]
    fn duplicates_do_not_break_seeding() {
        let sample = DescriptorSample::from_rows(1, &[vec![1.0], vec![1.0], vec![1.0], vec![4.0]]);
        let cb = kmeans_codebook(&sample, &KMeansConfig::new(3, 9)).unwrap();
        assert_eq!(cb.k, 3);
        assert!(cb.inertia() == 0.0);
        assert!(cb.centroids.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn deterministic_and_inertia_monotone() {
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.37).sin() * 3.0, (t * 0.11).cos() + (i % 5) as f64]
            })
            .collect();
        let sample = DescriptorSample::from_rows(2, &rows);
        let cfg = KMeansConfig::new(6, 42);
        let a = kmeans_codebook(&sample, &cfg).unwrap();
        let b = kmeans_codebook(&sample, &cfg).unwrap();
        assert_eq!(a, b);
        for w in a.inertia_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }
}
