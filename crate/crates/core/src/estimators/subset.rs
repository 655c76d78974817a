use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{elapsed_ms, mean_squared_residual, solve_normal, EstimatorReport};
use crate::diagnostics::{hc_from_data, ncm_ratio_x, probe_directions};
use crate::error::{Error, Result};
use crate::model::Dataset;

pub const DEFAULT_SUBSET_BUDGET: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetConfig {
    pub eps: f64,
    /// Hypercontractivity order; only 4 is supported.
    pub k: u32,
    /// Budget on the subset's `C₄` (probe lower bound).
    pub lambda: f64,
    /// Budget on the NCM ratio at `r = 1, 2`.
    pub ncm_budget: f64,
    pub budget: f64,
    pub probes: usize,
    pub seed: u64,
}

impl Default for SubsetConfig {
    fn default() -> Self {
        Self {
            eps: 0.0,
            k: 4,
            lambda: 10.0,
            ncm_budget: 4.0,
            budget: DEFAULT_SUBSET_BUDGET,
            probes: 8,
            seed: 0,
        }
    }
}

fn n_choose(n: usize, m: usize) -> f64 {
    (0..m).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

/// Deletion sets of size `m` from `0..n`, in lexicographic order.
pub(crate) fn combinations(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut c: Vec<usize> = (0..m).collect();
    loop {
        out.push(c.clone());
        let mut i = m;
        while i > 0 && c[i - 1] == n - m + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        c[i - 1] += 1;
        for j in i..m {
            c[j] = c[j - 1] + 1;
        }
    }
}

struct Candidate {
    deleted: Vec<usize>,
    theta: DVector<f64>,
    loss: f64,
    feasible: bool,
}

/// Exhaustive search over deletions of `⌊εn⌋` rows.
pub fn subset_search(ds: &Dataset, cfg: &SubsetConfig) -> Result<EstimatorReport> {
    let start = Instant::now();
    if cfg.k != 4 {
        return Err(Error::InvalidSpec(format!("subset search supports k = 4 only (got {})", cfg.k)));
    }
    if !(0.0..0.5).contains(&cfg.eps) {
        return Err(Error::InvalidSpec(format!("eps = {} must lie in [0, 1/2)", cfg.eps)));
    }
    let n = ds.n();
    let m = (cfg.eps * n as f64).floor() as usize;
    let count = n_choose(n, m);
    if count > cfg.budget {
        return Err(Error::ComplexityBudget {
            subsets: count,
            budget: cfg.budget,
        });
    }
    if n - m < ds.d() {
        return Err(Error::InsufficientData("subsets smaller than the dimension".into()));
    }
    let dirs = probe_directions(&ds.x, cfg.probes, cfg.seed);
    let sets = if m == 0 { vec![Vec::new()] } else { combinations(n, m) };
    let evaluate = |deleted: &Vec<usize>| -> Result<Candidate> {
        let keep: Vec<usize> = (0..n).filter(|i| deleted.binary_search(i).is_err()).collect();
        let sub = ds.select(&keep)?;
        let (theta, _) = solve_normal(&sub.x, &sub.y)?;
        let loss = mean_squared_residual(&sub.x, &sub.y, &theta);
        let hc_ok = match hc_from_data(&sub.x, cfg.probes, cfg.seed) {
            Ok(h) => h.lower <= cfg.lambda,
            Err(_) => false,
        };
        let ncm_ok = hc_ok
            && [1, 2].iter().all(|&r| {
                ncm_ratio_x(&sub.x, &sub.y, &theta, r, &dirs)
                    .map(|e| e.ratio <= cfg.ncm_budget)
                    .unwrap_or(false)
            });
        Ok(Candidate {
            deleted: deleted.clone(),
            theta,
            loss,
            feasible: hc_ok && ncm_ok,
        })
    };
    let cands: Vec<Candidate> = sets.par_iter().map(evaluate).collect::<Result<_>>()?;
    // sequential reduction in lexicographic order: strict improvement only
    let pick = |feasible_only: bool| {
        let mut best: Option<&Candidate> = None;
        for c in cands.iter().filter(|c| c.feasible || !feasible_only) {
            if best.is_none_or(|b| c.loss < b.loss) {
                best = Some(c);
            }
        }
        best
    };
    let mut rep = EstimatorReport {
        method: "subset".into(),
        subsets_examined: Some(cands.len() as u64),
        ..Default::default()
    };
    let best = match pick(true) {
        Some(b) => b,
        None => {
            rep.flags.push("no_feasible_subset".into());
            pick(false).expect("at least one subset")
        }
    };
    rep.theta_hat = best.theta.iter().cloned().collect();
    rep.objective = Some(best.loss);
    rep.deleted = Some(best.deleted.clone());
    rep.notes.push(format!(
        "{} of {} subsets feasible",
        cands.iter().filter(|c| c.feasible).count(),
        cands.len()
    ));
    rep.wallclock_ms = elapsed_ms(start);
    Ok(rep)
}
