//! Platt scaling of decision scores, fitted with the Newton method of
//! Lin, Lin and Weng with prior-smoothed targets.

use serde::{Deserialize, Serialize};

/// `P(class | score) = 1 / (1 + exp(a * score + b))` with `a <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

impl PlattScaling {
    pub fn probability(&self, score: f64) -> f64 {
        let f = self.a * score + self.b;
        if f >= 0.0 {
            let e = (-f).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + f.exp())
        }
    }

    /// Fits on scores with binary targets. A fit with positive slope (which
    /// would invert the score order) is replaced by the best constant.
    pub fn fit(scores: &[f64], positive: &[bool]) -> Self {
        assert_eq!(scores.len(), positive.len());
        let n_pos = positive.iter().filter(|&&p| p).count() as f64;
        let n_neg = positive.len() as f64 - n_pos;
        let hi = (n_pos + 1.0) / (n_pos + 2.0);
        let lo = 1.0 / (n_neg + 2.0);
        let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

        let objective = |a: f64, b: f64| -> f64 {
            scores
                .iter()
                .zip(&t)
                .map(|(&s, &ti)| {
                    let f = s * a + b;
                    if f >= 0.0 {
                        ti * f + (-f).exp().ln_1p()
                    } else {
                        (ti - 1.0) * f + f.exp().ln_1p()
                    }
                })
                .sum()
        };

        let mut a = 0.0;
        let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
        let mut fval = objective(a, b);
        for _ in 0..100 {
            let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
            for (&s, &ti) in scores.iter().zip(&t) {
                let f = s * a + b;
                let (p, q) = if f >= 0.0 {
                    let e = (-f).exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                } else {
                    let e = f.exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                };
                let d2 = p * q;
                h11 += s * s * d2;
                h22 += d2;
                h21 += s * d2;
                let d1 = ti - p;
                g1 += s * d1;
                g2 += d1;
            }
            if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
                break;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let db = -(-h21 * g1 + h11 * g2) / det;
            let gd = g1 * da + g2 * db;
            let mut step = 1.0;
            while step >= 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = objective(na, nb);
                if nf < fval + 1e-4 * step * gd {
                    a = na;
                    b = nb;
                    fval = nf;
                    break;
                }
                step /= 2.0;
            }
            if step < 1e-10 {
                break;
            }
        }
        if a > 0.0 || !a.is_finite() || !b.is_finite() {
            let mean = t.iter().sum::<f64>() / t.len().max(1) as f64;
            return Self {
                a: 0.0,
                b: ((1.0 - mean) / mean).ln(),
            };
        }
        Self { a, b }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_scores_give_steep_monotone_map() {
        let scores: Vec<f64> = (-10..=10).map(|i| i as f64 / 5.0).collect();
        let pos: Vec<bool> = scores.iter().map(|&s| s > 0.0).collect();
        let p = PlattScaling::fit(&scores, &pos);
        assert!(p.a < 0.0);
        assert!(p.probability(2.0) > 0.5 && p.probability(-2.0) < 0.5);
    }

    #[test]
    fn anti_correlated_scores_become_constant() {
        let scores: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let pos: Vec<bool> = (0..20).map(|i| i < 5).collect();
        let p = PlattScaling::fit(&scores, &pos);
        assert_eq!(p.a, 0.0);
        assert!((p.probability(0.0) - p.probability(19.0)).abs() < 1e-15);
        assert!(p.probability(0.0) < 0.5);
    }
}
