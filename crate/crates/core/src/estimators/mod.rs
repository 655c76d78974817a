//! OLS, robust gradient descent, brute-force subset search and the moment-relaxation estimator.

mod robust_gd;
mod robust_mean;
mod sos;
mod subset;

pub use robust_gd::{plain_gd, robust_gd, RobustGdConfig};
pub use robust_mean::{mean_rows, robust_mean, RobustMeanMethod};
pub use crate::pseudomoments::{SosConfig, SosMode};
pub use sos::{sos_regress, sos_report, sos_solve};
pub use subset::{subset_search, SubsetConfig, DEFAULT_SUBSET_BUDGET};

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::pseudomoments::SolverStats;

/// Condition number beyond which the normal equations are treated as singular.
pub const OLS_COND_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub method: String,
    pub theta_hat: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsets_examined: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverStats>,
    pub wallclock_ms: f64,
    /// Named feasibility residuals, all non-negative.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub residuals: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    /// `‖Θᵗ − Θ*‖₂` per iterate when ground truth is known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterates: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deleted: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction_ratio: Option<f64>,
}

impl EstimatorReport {
    pub fn theta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta_hat)
    }

    pub fn has_flag(&self, f: &str) -> bool {
        self.flags.iter().any(|x| x == f)
    }
}

pub(crate) fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Normal-equation solve; least-norm through the SVD when ill-conditioned.
pub(crate) fn solve_normal(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let n = x.nrows() as f64;
    let d = x.ncols();
    let s = x.transpose() * x / n;
    let b = x.transpose() * y / n;
    if d == 1 {
        if s[(0, 0)] > 0.0 {
            return Ok((DVector::from_element(1, b[0] / s[(0, 0)]), false));
        }
        return Ok((DVector::zeros(1), true));
    }
    let eig = s.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if hi > 0.0 && lo > hi / OLS_COND_LIMIT {
        if let Some(ch) = s.cholesky() {
            return Ok((ch.solve(&b), false));
        }
    }
    let svd = x.clone().svd(true, true);
    let tol = svd.singular_values.max() * 1e-12;
    let theta = svd
        .solve(y, tol)
        .map_err(|e| Error::Numerical(format!("least-norm solve failed: {e}")))?;
    Ok((theta, true))
}

pub fn ols(ds: &Dataset) -> Result<EstimatorReport> {
    let start = Instant::now();
    if ds.n() < ds.d() {
        return Err(Error::InsufficientData(format!("OLS needs n >= d (n = {}, d = {})", ds.n(), ds.d())));
    }
    let (theta, rank_deficient) = solve_normal(&ds.x, &ds.y)?;
    let mut rep = EstimatorReport {
        method: "ols".into(),
        theta_hat: theta.iter().cloned().collect(),
        wallclock_ms: elapsed_ms(start),
        ..Default::default()
    };
    if rank_deficient {
        rep.flags.push("rank_deficient".into());
    }
    Ok(rep)
}

/// `(1/n) Σ (yᵢ − ⟨xᵢ,θ⟩)²`.
pub fn mean_squared_residual(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    let r = y - x * theta;
    r.norm_squared() / x.nrows() as f64
}
