//! RBF-kernel SVM trained with SMO (second-order working-set selection).

use std::collections::HashMap;

use rayon::prelude::*;

use crate::vector::FeatureVector;

pub(crate) const DEFAULT_TOLERANCE: f64 = 1e-3;
const TAU: f64 = 1e-12;
/// Full kernel matrices up to this many rows are computed once and shared
/// by every one-vs-rest subproblem and calibration fold.
const FULL_MATRIX_ROWS: usize = 4096;
const ROW_CACHE_BYTES: usize = 256 << 20;

pub fn rbf_kernel(a: &FeatureVector, b: &FeatureVector, gamma: f64) -> f64 {
    (-gamma * a.squared_distance(b)).exp()
}

/// Dense symmetric kernel matrix, row-major.
pub fn kernel_matrix(rows: &[FeatureVector], gamma: f64) -> Vec<f64> {
    let n = rows.len();
    let sq: Vec<f64> = rows.iter().map(|r| r.squared_norm()).collect();
    let mut k = vec![0.0; n * n];
    k.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, out)| {
        for j in 0..n {
            out[j] = if i == j {
                1.0
            } else {
                kernel_value(&rows[i], &rows[j], sq[i], sq[j], gamma)
            };
        }
    });
    // make symmetry exact regardless of summation order
    for i in 0..n {
        for j in (i + 1)..n {
            k[j * n + i] = k[i * n + j];
        }
    }
    k
}

#[inline]
fn kernel_value(a: &FeatureVector, b: &FeatureVector, sa: f64, sb: f64, gamma: f64) -> f64 {
    let d2 = match (a, b) {
        (FeatureVector::Dense { .. }, FeatureVector::Dense { .. }) => a.squared_distance(b),
        _ => (sa + sb - 2.0 * a.dot(b)).max(0.0),
    };
    (-gamma * d2).exp()
}

/// Kernel evaluations over a fixed row set, optionally backed by a full matrix.
pub(crate) struct KernelSource<'a> {
    rows: &'a [FeatureVector],
    gamma: f64,
    sq: Vec<f64>,
    full: Option<Vec<f64>>,
}

impl<'a> KernelSource<'a> {
    pub fn new(rows: &'a [FeatureVector], gamma: f64) -> Self {
        let sq = rows.iter().map(|r| r.squared_norm()).collect();
        let full = (rows.len() <= FULL_MATRIX_ROWS).then(|| kernel_matrix(rows, gamma));
        Self {
            rows,
            gamma,
            sq,
            full,
        }
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        match &self.full {
            Some(k) => k[i * self.rows.len() + j],
            None if i == j => 1.0,
            None => kernel_value(
                &self.rows[i],
                &self.rows[j],
                self.sq[i],
                self.sq[j],
                self.gamma,
            ),
        }
    }

    /// `K(idx[i], idx[j])` for all `j`.
    fn row(&self, idx: &[usize], i: usize) -> Vec<f64> {
        let a = idx[i];
        match &self.full {
            Some(_) => idx.iter().map(|&b| self.value(a, b)).collect(),
            None => idx.par_iter().map(|&b| self.value(a, b)).collect(),
        }
    }
}

struct RowCache<'k, 'a> {
    source: &'k KernelSource<'a>,
    idx: &'k [usize],
    rows: HashMap<usize, Vec<f64>>,
    order: std::collections::VecDeque<usize>,
    capacity: usize,
}

impl<'k, 'a> RowCache<'k, 'a> {
    fn new(source: &'k KernelSource<'a>, idx: &'k [usize]) -> Self {
        let capacity = (ROW_CACHE_BYTES / (8 * idx.len().max(1))).clamp(2, idx.len().max(2));
        Self {
            source,
            idx,
            rows: HashMap::new(),
            order: Default::default(),
            capacity,
        }
    }

    fn get(&mut self, i: usize) -> &[f64] {
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows.remove(&old);
                }
            }
            let r = self.source.row(self.idx, i);
            self.rows.insert(i, r);
            self.order.push_back(i);
        }
        &self.rows[&i]
    }
}

pub(crate) struct KernelFit {
    /// Positions into `idx` with nonzero alpha, and their `alpha * y`.
    pub support: Vec<usize>,
    pub coef: Vec<f64>,
    pub rho: f64,
}

/// C-SVC dual over rows `idx` with labels `y` in {-1, +1}.
pub(crate) fn solve(
    source: &KernelSource,
    idx: &[usize],
    y: &[f64],
    c: f64,
    eps: f64,
) -> KernelFit {
    let n = idx.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let qd: Vec<f64> = (0..n).map(|i| source.value(idx[i], idx[i])).collect();
    let mut cache = RowCache::new(source, idx);
    let max_iter = (100 * n).max(10_000_000);
    let mut iter = 0;

    while iter < max_iter {
        // first index: maximal violating from the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let v = if y[t] > 0.0 {
                (alpha[t] < c).then_some(-grad[t])
            } else {
                (alpha[t] > 0.0).then_some(grad[t])
            };
            if let Some(v) = v {
                if v >= gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        if i_sel == usize::MAX {
            break;
        }
        let i = i_sel;
        let ki = cache.get(i).to_vec();

        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            let (eligible, gt) = if y[t] > 0.0 {
                (alpha[t] > 0.0, grad[t])
            } else {
                (alpha[t] < c, -grad[t])
            };
            if !eligible {
                continue;
            }
            if gt >= gmax2 {
                gmax2 = gt;
            }
            let grad_diff = gmax + gt;
            if grad_diff > 0.0 {
                let quad = qd[i] + qd[t] - 2.0 * ki[t];
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -(grad_diff * grad_diff) / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = t;
                }
            }
        }
        if gmax + gmax2 < eps || j_sel == usize::MAX {
            break;
        }
        let j = j_sel;
        iter += 1;

        let kj = cache.get(j).to_vec();
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kij = ki[j];
        if y[i] != y[j] {
            let quad = qd[i] + qd[j] - 2.0 * kij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = qd[i] + qd[j] - 2.0 * kij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        // Q_it = y_i y_t K_it
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }
    if iter >= max_iter {
        log::warn!("SMO reached {max_iter} iterations before meeting tolerance {eps}");
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    };

    let mut support = Vec::new();
    let mut coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support.push(t);
            coef.push(alpha[t] * y[t]);
        }
    }
    KernelFit { support, coef, rho }
}
