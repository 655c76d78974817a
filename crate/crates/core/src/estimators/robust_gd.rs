use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::robust_mean::{mean_rows, robust_mean, RobustMeanMethod};
use super::{elapsed_ms, EstimatorReport};
use crate::error::{Error, Result};
use crate::model::Dataset;

/// Errors below this are treated as converged when measuring the contraction ratio.
pub const TRACE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustGdConfig {
    /// Covariance eigenvalue bounds; estimated from trimmed second moments when absent.
    pub tau_l: Option<f64>,
    pub tau_u: Option<f64>,
    /// Defaults to `2 / (τℓ + τu)`.
    pub step: Option<f64>,
    pub iters: usize,
    pub method: RobustMeanMethod,
    pub eps: f64,
    /// Ground truth for the error trace; falls back to the dataset meta.
    pub theta_star: Option<Vec<f64>>,
}

impl Default for RobustGdConfig {
    fn default() -> Self {
        Self {
            tau_l: None,
            tau_u: None,
            step: None,
            iters: 100,
            method: RobustMeanMethod::Filter,
            eps: 0.0,
            theta_star: None,
        }
    }
}

/// Per-coordinate second moments with the `⌈εn⌉` largest squares trimmed; min and max.
fn trimmed_tau(x: &DMatrix<f64>, eps: f64) -> (f64, f64) {
    let n = x.nrows();
    let t = ((eps * n as f64).ceil() as usize).min(n - 1);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for c in x.column_iter() {
        let mut sq: Vec<f64> = c.iter().map(|v| v * v).collect();
        sq.sort_by(f64::total_cmp);
        let m = sq[..n - t].iter().sum::<f64>() / (n - t) as f64;
        lo = lo.min(m);
        hi = hi.max(m);
    }
    (lo, hi)
}

fn step_size(ds: &Dataset, cfg: &RobustGdConfig) -> Result<f64> {
    if let Some(s) = cfg.step {
        if !(s > 0.0) {
            return Err(Error::InvalidSpec(format!("step {s} must be positive")));
        }
        return Ok(s);
    }
    let (lo, hi) = match (cfg.tau_l, cfg.tau_u) {
        (Some(l), Some(u)) => (l, u),
        (l, u) => {
            let (el, eu) = trimmed_tau(&ds.x, cfg.eps);
            (l.unwrap_or(el), u.unwrap_or(eu))
        }
    };
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidSpec(format!("need 0 < tau_l <= tau_u (got {lo}, {hi})")));
    }
    Ok(2.0 / (lo + hi))
}

fn gd_loop(
    ds: &Dataset,
    eta: f64,
    iters: usize,
    truth: Option<DVector<f64>>,
    mean: &dyn Fn(&DMatrix<f64>) -> Result<DVector<f64>>,
) -> Result<EstimatorReport> {
    let start = Instant::now();
    let (n, d) = (ds.n(), ds.d());
    let xs = ds.x.amax().max(f64::MIN_POSITIVE);
    let limit = 1e6 * (1.0 + ds.y.amax() / xs);
    let mut theta = DVector::zeros(d);
    let mut grads = DMatrix::zeros(n, d);
    let mut rep = EstimatorReport::default();
    let record = |rep: &mut EstimatorReport, t: &DVector<f64>| {
        rep.iterates.push(t.iter().cloned().collect());
        if let Some(ts) = &truth {
            rep.trace.push((t - ts).norm());
        }
    };
    record(&mut rep, &theta);
    for it in 0..iters {
        let res = &ds.x * &theta - &ds.y;
        for i in 0..n {
            for j in 0..d {
                grads[(i, j)] = ds.x[(i, j)] * res[i];
            }
        }
        let g = mean(&grads)?;
        theta -= eta * g;
        let norm = theta.norm();
        if !norm.is_finite() || norm > limit {
            return Err(Error::Diverged { iteration: it + 1, norm });
        }
        record(&mut rep, &theta);
    }
    rep.theta_hat = theta.iter().cloned().collect();
    rep.iterations = Some(iters);
    if !rep.trace.is_empty() {
        let ratio = rep
            .trace
            .windows(2)
            .take_while(|w| w[0] > TRACE_FLOOR)
            .map(|w| w[1] / w[0])
            .fold(f64::MIN, f64::max);
        if ratio > f64::MIN {
            rep.contraction_ratio = Some(ratio);
        }
    }
    rep.wallclock_ms = elapsed_ms(start);
    Ok(rep)
}

fn truth_of(ds: &Dataset, cfg_truth: &Option<Vec<f64>>) -> Option<DVector<f64>> {
    cfg_truth
        .as_ref()
        .map(|t| DVector::from_column_slice(t))
        .or_else(|| ds.theta_star())
}

/// Gradient descent on the ½-squared loss with a robust gradient mean.
pub fn robust_gd(ds: &Dataset, cfg: &RobustGdConfig) -> Result<EstimatorReport> {
    if ds.n() < ds.d() + 2 {
        return Err(Error::InsufficientData(format!("robust GD needs n >= d + 2 (n = {})", ds.n())));
    }
    if cfg.iters == 0 {
        return Err(Error::InvalidSpec("iteration count must be at least 1".into()));
    }
    if !(0.0..0.5).contains(&cfg.eps) {
        return Err(Error::InvalidSpec(format!("eps = {} must lie in [0, 1/2)", cfg.eps)));
    }
    let eta = step_size(ds, cfg)?;
    let (eps, method) = (cfg.eps, cfg.method);
    let mut rep = gd_loop(ds, eta, cfg.iters, truth_of(ds, &cfg.theta_star), &|g| {
        robust_mean(g, eps, method)
    })?;
    rep.method = "rgd".into();
    rep.notes.push(format!("step = {eta:e}"));
    Ok(rep)
}

/// Gradient descent with exact means.
pub fn plain_gd(ds: &Dataset, eta: f64, iters: usize, theta_star: Option<Vec<f64>>) -> Result<EstimatorReport> {
    let mut rep = gd_loop(ds, eta, iters, truth_of(ds, &theta_star), &|g| Ok(mean_rows(g)))?;
    rep.method = "gd".into();
    Ok(rep)
}
