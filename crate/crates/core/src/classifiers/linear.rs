//! L2-regularized hinge-loss SVM solved by dual coordinate descent.
//!
//! The bias is folded in as an extra constant feature of value 1, so it is
//! regularized together with the weights. Weight vectors therefore carry
//! `dim + 1` entries with the bias last.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::vector::FeatureVector;

pub(crate) const DEFAULT_TOLERANCE: f64 = 1e-4;
pub(crate) const DEFAULT_MAX_EPOCHS: usize = 2000;

fn margin(w: &[f64], x: &FeatureVector) -> f64 {
    let d = w.len() - 1;
    x.dot_dense(&w[..d]) + w[d]
}

/// Primal objective `0.5 * |w|^2 + C * sum(max(0, 1 - y_i * (w . x_i + b)))`
/// over the augmented weight vector.
pub fn linear_svm_objective(w: &[f64], rows: &[FeatureVector], y: &[f64], c: f64) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = rows
        .iter()
        .zip(y)
        .map(|(x, &yi)| (1.0 - yi * margin(w, x)).max(0.0))
        .sum();
    reg + c * loss
}

/// A subgradient of [`linear_svm_objective`]; the true gradient wherever no
/// margin sits exactly on the hinge.
pub fn linear_svm_subgradient(w: &[f64], rows: &[FeatureVector], y: &[f64], c: f64) -> Vec<f64> {
    let d = w.len() - 1;
    let mut g = w.to_vec();
    for (x, &yi) in rows.iter().zip(y) {
        if yi * margin(w, x) < 1.0 {
            x.add_scaled_to(-c * yi, &mut g[..d]);
            g[d] -= c * yi;
        }
    }
    g
}

/// Solves the binary problem over `idx` rows with labels `y` in {-1, +1} and
/// returns the augmented weight vector.
///
/// Coordinates stuck at a bound are shrunk out of the sweep while their
/// projected gradient stays outside the last sweep's range. Once the
/// projected-gradient spread over all coordinates falls below `pg_eps` the
/// exact duality gap is checked; if it is still above `tol` the spread
/// target is tightened tenfold.
pub(crate) fn solve(
    rows: &[FeatureVector],
    idx: &[usize],
    y: &[f64],
    c: f64,
    seed: u64,
    tol: f64,
    max_epochs: usize,
) -> Vec<f64> {
    let dim = rows[idx[0]].dim();
    let n = idx.len();
    let mut w = vec![0.0; dim + 1];
    let mut alpha = vec![0.0; n];
    let qd: Vec<f64> = idx.iter().map(|&i| rows[i].squared_norm() + 1.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut active = n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pg_max_old, mut pg_min_old) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut pg_eps = 0.1;

    let mut converged = false;
    let mut epochs = 0;
    while epochs < max_epochs {
        epochs += 1;
        order[..active].shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut s = 0;
        while s < active {
            let k = order[s];
            let x = &rows[idx[k]];
            let g = y[k] * margin(&w, x) - 1.0;
            let pg = if alpha[k] == 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    order.swap(s, active);
                    continue;
                }
                g.min(0.0)
            } else if alpha[k] == c {
                if g < pg_min_old {
                    active -= 1;
                    order.swap(s, active);
                    continue;
                }
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[k];
                alpha[k] = (old - g / qd[k]).clamp(0.0, c);
                let delta = (alpha[k] - old) * y[k];
                if delta != 0.0 {
                    x.add_scaled_to(delta, &mut w[..dim]);
                    w[dim] += delta;
                }
            }
            s += 1;
        }

        if pg_max - pg_min <= pg_eps || active == 0 {
            if active < n {
                // re-check every coordinate before trusting the spread
                active = n;
                pg_max_old = f64::INFINITY;
                pg_min_old = f64::NEG_INFINITY;
                continue;
            }
            let wsq: f64 = w.iter().map(|v| v * v).sum();
            let loss: f64 = idx
                .iter()
                .zip(y)
                .map(|(&i, &yi)| (1.0 - yi * margin(&w, &rows[i])).max(0.0))
                .sum();
            let primal = 0.5 * wsq + c * loss;
            let dual = alpha.iter().sum::<f64>() - 0.5 * wsq;
            if primal - dual <= tol * primal.abs().max(1e-12) {
                converged = true;
                break;
            }
            pg_eps *= 0.1;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        pg_min_old = if pg_min >= 0.0 {
            f64::NEG_INFINITY
        } else {
            pg_min
        };
    }
    if !converged {
        log::warn!(
            "linear SVM stopped after {epochs} epochs without reaching the duality-gap tolerance"
        );
    }
    w
}

pub(crate) fn decision(weights: &[f64], x: &FeatureVector) -> f64 {
    margin(weights, x)
}
