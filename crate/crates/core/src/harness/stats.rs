use serde::{Deserialize, Serialize};

use super::sweep::ResultTable;
use crate::error::{Error, Result};

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn median(v: &[f64]) -> f64 {
    quantile_sorted(&sorted(v), 0.5)
}

pub fn quartiles(v: &[f64]) -> (f64, f64) {
    let s = sorted(v);
    (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.75))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub estimator: String,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least squares of `log y` on `log x` over positive pairs.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64, usize)> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "slope fit needs >= 3 positive points, got {}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("slope fit needs distinct eps values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, intercept, r2, pts.len()))
}

/// Fits `log(median param_error)` against `log ε` for one estimator.
pub fn fit_slope(table: &ResultTable, estimator: &str) -> Result<SlopeFit> {
    let eps = table.eps_values();
    let med: Vec<f64> = eps.iter().map(|&e| table.median_param_error(e, estimator)).collect();
    let (slope, intercept, r2, points) = fit_loglog(&eps, &med)?;
    Ok(SlopeFit {
        estimator: estimator.to_string(),
        slope,
        intercept,
        r2,
        points,
    })
}
