//! Moment relaxation over `(w, Θ)` and a first-order SDP solver.

mod basis;
mod poly;
mod solver;
mod system;

use std::sync::Arc;

pub use basis::{count_monomials, Monomial, MonomialBasis};
pub use poly::Poly;
pub use solver::{solve_sdp, HistoryEntry, SolverOptions, SolverStats};
pub use system::{
    assemble_system, solver_bytes, AssignmentCheck, ConstraintSystem, PsdBlock, Relaxation, SosConfig, SosMode,
    SparseRow, DEFAULT_MEMORY_BUDGET,
};

use serde_json::json;

use crate::error::{Error, Result};

/// Convenience wrapper around [`MonomialBasis::build`] with an unbounded size.
pub fn build_basis(n: usize, d: usize, degree: usize) -> Result<MonomialBasis> {
    MonomialBasis::build(n, d, degree, f64::INFINITY)
}

/// A moment vector with its solver statistics.
#[derive(Clone, Debug)]
pub struct PseudoDistribution {
    pub y: Vec<f64>,
    pub stats: SolverStats,
    pub moments: Option<Arc<MonomialBasis>>,
}

impl PseudoDistribution {
    pub(crate) fn new(mut y: Vec<f64>, stats: SolverStats, sys: &ConstraintSystem) -> Self {
        let moments = sys.relaxation.as_ref().map(|r| r.moments.clone());
        if moments.is_some() {
            // the constant monomial is index 0
            y[0] = 1.0;
        }
        Self { y, stats, moments }
    }

    pub fn degree(&self) -> Option<usize> {
        self.moments.as_ref().map(|m| m.degree)
    }

    /// `pE[w]`.
    pub fn weights(&self) -> Vec<f64> {
        let Some(m) = &self.moments else { return Vec::new() };
        (0..m.n).map(|i| self.y[m.get(&Monomial::w(i, m.d)).expect("degree-1 monomial")]).collect()
    }

    /// `pE[Θ]` in the relaxation's scaled coordinates.
    pub fn theta_scaled(&self) -> Vec<f64> {
        let Some(m) = &self.moments else { return Vec::new() };
        (0..m.d).map(|j| self.y[m.get(&Monomial::theta(j, m.d)).expect("degree-1 monomial")]).collect()
    }
}

/// `pE[p]`, exact given the moment vector.
pub fn pseudo_expectation(pd: &PseudoDistribution, p: &Poly) -> Result<f64> {
    let m = pd
        .moments
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("pseudo-distribution has no monomial index".into()))?;
    let mut acc = 0.0;
    for (mono, c) in &p.terms {
        if mono.degree() > m.degree {
            return Err(Error::Assembly(format!("monomial {mono} exceeds degree {}", m.degree)));
        }
        let i = m
            .get(mono)
            .ok_or_else(|| Error::Assembly(format!("monomial {mono} not in the moment index")))?;
        acc += c * pd.y[i];
    }
    Ok(acc)
}

/// Smallest eigenvalue over every PSD block at the moment vector.
pub fn min_block_eigenvalue(sys: &ConstraintSystem, y: &[f64]) -> f64 {
    sys.blocks
        .iter()
        .map(|b| crate::linalg::min_eigenvalue(&b.matrix(y)))
        .fold(f64::INFINITY, f64::min)
}

/// Diagnostic JSON: basis listing, constraint slacks at the rounded point, residual history.
pub fn dump_sdp(sys: &ConstraintSystem, pd: Option<&PseudoDistribution>) -> serde_json::Value {
    let rel = sys.relaxation.as_ref();
    let basis: Vec<String> = rel
        .map(|r| {
            let len = r.moments.prefix_len(r.degree);
            r.moments.monomials[..len].iter().map(|m| m.to_string()).collect()
        })
        .unwrap_or_default();
    let blocks: Vec<_> = sys.blocks.iter().map(|b| json!({"label": b.label, "dim": b.dim})).collect();
    let mut out = json!({
        "n_moments": sys.n_vars,
        "basis": basis,
        "equalities": sys.eq_rows.len(),
        "blocks": blocks,
    });
    if let Some(r) = rel {
        out["lambda"] = json!(r.lambda);
        out["c_ncm"] = json!(r.c_ncm);
        out["probes"] = json!(r.probes);
        out["notes"] = json!(r.notes);
        out["scaling"] = json!({"x": r.x_scale, "y": r.y_scale});
    }
    if let Some(pd) = pd {
        out["stats"] = serde_json::to_value(&pd.stats).unwrap_or_default();
        if let Some(r) = rel {
            let w = pd.weights();
            let t: Vec<f64> = pd.theta_scaled().iter().map(|v| v * r.y_scale / r.x_scale).collect();
            let chk = r.evaluate_assignment(&w, &t);
            out["rounded"] = json!({"w": w, "theta": t, "slacks": chk.slacks, "objective": chk.objective});
        }
        out["min_block_eigenvalue"] = json!(min_block_eigenvalue(sys, &pd.y));
    }
    out
}
