//! Isometric log-ratio coordinates for points on the open simplex.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IlrError {
    #[error(
        "component {index} is {value}; compositions must be strictly positive (smooth upstream)"
    )]
    NonPositive { index: usize, value: f64 },
    #[error("composition needs at least 2 parts, got {0}")]
    TooShort(usize),
    #[error("composition sums to {0}, expected 1")]
    NotNormalized(f64),
}

const SUM_TOLERANCE: f64 = 1e-6;

/// Maps a `T`-part composition to `T-1` coordinates using the balances
/// `z_j = sqrt(j/(j+1)) * ln(gmean(x_1..x_j) / x_{j+1})`.
pub fn ilr_transform(x: &[f64]) -> Result<Vec<f64>, IlrError> {
    if x.len() < 2 {
        return Err(IlrError::TooShort(x.len()));
    }
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, &v)| v.is_nan() || v <= 0.0) {
        return Err(IlrError::NonPositive { index, value });
    }
    let sum: f64 = x.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(IlrError::NotNormalized(sum));
    }
    let logs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let mut out = Vec::with_capacity(x.len() - 1);
    // running mean of the first j logs; exact when all logs are equal
    let mut mean = 0.0;
    for j in 1..x.len() {
        let jf = j as f64;
        mean += (logs[j - 1] - mean) / jf;
        out.push((jf / (jf + 1.0)).sqrt() * (mean - logs[j]));
    }
    Ok(out)
}

/// Inverse of [`ilr_transform`]: back to the closed simplex.
pub fn ilr_inverse(z: &[f64]) -> Vec<f64> {
    let t = z.len() + 1;
    // clr_i = sum_j z_j * basis_j[i], with basis_j = (1/sqrt(j(j+1)) for i<=j, -sqrt(j/(j+1)) at i=j+1)
    let mut clr = vec![0.0; t];
    let mut tail = 0.0;
    for j in (1..t).rev() {
        let jf = j as f64;
        tail += z[j - 1] / (jf * (jf + 1.0)).sqrt();
        clr[j] -= (jf / (jf + 1.0)).sqrt() * z[j - 1];
        clr[j - 1] += tail;
    }
    let max = clr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut x: Vec<f64> = clr.iter().map(|c| (c - max).exp()).collect();
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
    x
}
