use std::time::Instant;

use super::{elapsed_ms, EstimatorReport};
use crate::error::Result;
use crate::model::Dataset;
use crate::pseudomoments::{assemble_system, solve_sdp, ConstraintSystem, PseudoDistribution, SolverOptions, SosConfig};

/// Assembles and solves the relaxation, returning both for inspection.
pub fn sos_solve(ds: &Dataset, cfg: &SosConfig) -> Result<(ConstraintSystem, PseudoDistribution)> {
    let sys = assemble_system(ds, cfg)?;
    let opts = SolverOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        memory_budget: cfg.memory_budget,
        ..Default::default()
    };
    let pd = solve_sdp(&sys, &opts)?;
    Ok((sys, pd))
}

/// Rounds the relaxation to `Θ̃ = pE[Θ]`.
pub fn sos_regress(ds: &Dataset, cfg: &SosConfig) -> Result<EstimatorReport> {
    let start = Instant::now();
    let (sys, pd) = sos_solve(ds, cfg)?;
    Ok(sos_report(&sys, &pd, elapsed_ms(start)))
}

pub fn sos_report(sys: &ConstraintSystem, pd: &PseudoDistribution, wallclock_ms: f64) -> EstimatorReport {
    let rel = sys.relaxation.as_ref().expect("assembled relaxation");
    let back = rel.y_scale / rel.x_scale;
    let mut rep = EstimatorReport {
        method: "sos".into(),
        theta_hat: pd.theta_scaled().iter().map(|t| t * back).collect(),
        iterations: Some(pd.stats.iterations),
        solver: Some(pd.stats.clone()),
        objective: Some(pd.stats.objective * rel.y_scale * rel.y_scale),
        wallclock_ms,
        ..Default::default()
    };
    rep.residuals.insert("primal".into(), pd.stats.primal_residual);
    rep.residuals.insert("psd".into(), pd.stats.psd_residual);
    rep.residuals.insert("dual".into(), pd.stats.dual_residual);
    rep.residuals.insert("affine".into(), pd.stats.affine_residual);
    rep.notes.push(format!(
        "objective: pE of the mean weighted squared residual at basis degree {}",
        rel.degree
    ));
    rep.notes.push(format!("lambda = {:.6}, probes = {}", rel.lambda, rel.probes.len()));
    rep.notes.extend(rel.notes.iter().cloned());
    rep
}
