use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustMeanMethod {
    #[default]
    Filter,
    CoordinateTrimmedMean,
}

impl std::str::FromStr for RobustMeanMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filter" => Ok(Self::Filter),
            "trimmed" | "coordinate_trimmed_mean" => Ok(Self::CoordinateTrimmedMean),
            other => Err(Error::Config(format!("unknown robust mean method '{other}'"))),
        }
    }
}

/// Row mean, summed in row order.
pub fn mean_rows(points: &DMatrix<f64>) -> DVector<f64> {
    let n = points.nrows() as f64;
    let mut s = DVector::zeros(points.ncols());
    for row in points.row_iter() {
        for (j, v) in row.iter().enumerate() {
            s[j] += v;
        }
    }
    s / n
}

/// Robust mean of the rows of `points` under an `eps` fraction of outliers.
pub fn robust_mean(points: &DMatrix<f64>, eps: f64, method: RobustMeanMethod) -> Result<DVector<f64>> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::InsufficientData("robust mean needs at least 2 points".into()));
    }
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::InvalidSpec(format!("eps = {eps} must lie in [0, 1/2)")));
    }
    if eps == 0.0 {
        return Ok(mean_rows(points));
    }
    match method {
        RobustMeanMethod::Filter => Ok(filter(points, eps)),
        RobustMeanMethod::CoordinateTrimmedMean => trimmed(points, eps),
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Per-coordinate variance from the MAD (consistent for Gaussians), then the median over coordinates.
fn median_robust_variance(points: &DMatrix<f64>) -> f64 {
    let mut vars: Vec<f64> = points
        .column_iter()
        .map(|c| {
            let mut col: Vec<f64> = c.iter().cloned().collect();
            let med = median(&mut col);
            let mut dev: Vec<f64> = c.iter().map(|v| (v - med).abs()).collect();
            let mad = 1.482_602_218_505_602 * median(&mut dev);
            mad * mad
        })
        .collect();
    median(&mut vars)
}

fn filter(points: &DMatrix<f64>, eps: f64) -> DVector<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let cap = (2.0 * eps * n as f64).ceil() as usize;
    let cap = cap.min(n - 1);
    let stop = 9.0 * median_robust_variance(points);
    let mut alive = vec![true; n];
    let mut m = n;
    let mut sum = DVector::zeros(d);
    let mut sq = DMatrix::zeros(d, d);
    for row in points.row_iter() {
        let r = row.transpose();
        sum += &r;
        sq += &r * r.transpose();
    }
    let mut removed = 0;
    loop {
        let mu = &sum / m as f64;
        if removed >= cap {
            return mu;
        }
        let cov = &sq / m as f64 - &mu * mu.transpose();
        let eig = SymmetricEigen::new(cov);
        let top = eig.eigenvalues.imax();
        let lambda = eig.eigenvalues[top];
        if lambda <= stop {
            return mu;
        }
        let u = eig.eigenvectors.column(top);
        let mut worst = None;
        let mut worst_score = f64::MIN;
        for (i, row) in points.row_iter().enumerate() {
            if !alive[i] {
                continue;
            }
            let p: f64 = row.iter().zip(mu.iter()).zip(u.iter()).map(|((x, m), u)| (x - m) * u).sum();
            if p * p > worst_score {
                worst_score = p * p;
                worst = Some(i);
            }
        }
        let i = worst.expect("retained set is never empty under the removal cap");
        alive[i] = false;
        let r = points.row(i).transpose();
        sum -= &r;
        sq -= &r * r.transpose();
        m -= 1;
        removed += 1;
    }
}

fn trimmed(points: &DMatrix<f64>, eps: f64) -> Result<DVector<f64>> {
    let n = points.nrows();
    let t = (eps * n as f64).ceil() as usize;
    if 2 * t >= n {
        return Err(Error::InsufficientData(format!("trimming {t} from each side leaves no points (n = {n})")));
    }
    Ok(DVector::from_iterator(
        points.ncols(),
        points.column_iter().map(|c| {
            let mut v: Vec<f64> = c.iter().cloned().collect();
            v.sort_by(f64::total_cmp);
            v[t..n - t].iter().sum::<f64>() / (n - 2 * t) as f64
        }),
    ))
}
