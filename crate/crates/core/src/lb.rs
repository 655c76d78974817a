//! Paired, TV-close regression instances whose optima are far apart.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, HcEstimate};
use crate::error::{Error, Result};
use crate::estimators::ols;
use crate::model::{
    population_moments, sample_instance, CovariateSpec, DependentRule, Marginal, NoiseSpec, RegressionInstance,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairKind {
    TrueLinear { eps: f64, sigma: f64, k: u32 },
    DependentNoise { eps: f64 },
    BoundedCovariance { eps: f64 },
    MeanShift { delta: f64 },
}

impl PairKind {
    pub fn name(&self) -> &'static str {
        match self {
            PairKind::TrueLinear { .. } => "true_linear",
            PairKind::DependentNoise { .. } => "dependent",
            PairKind::BoundedCovariance { .. } => "bounded_cov",
            PairKind::MeanShift { .. } => "mean_shift",
        }
    }

    /// The corruption level of the construction (`ε`, or `δ` for the mean shift).
    pub fn eps(&self) -> f64 {
        match *self {
            PairKind::TrueLinear { eps, .. }
            | PairKind::DependentNoise { eps }
            | PairKind::BoundedCovariance { eps } => eps,
            PairKind::MeanShift { delta } => delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstancePair {
    pub kind: PairKind,
    pub d1: RegressionInstance,
    pub d2: RegressionInstance,
}

fn open_unit(name: &str, v: f64, hi: f64) -> Result<()> {
    if !(v > 0.0 && v < hi) {
        return Err(Error::InvalidSpec(format!("{name} = {v} must lie in (0, {hi})")));
    }
    Ok(())
}

pub fn true_linear_pair(eps: f64, sigma: f64, k: u32) -> Result<InstancePair> {
    open_unit("eps", eps, 0.5)?;
    if k < 4 || k % 2 != 0 {
        return Err(Error::InvalidSpec(format!("k = {k} must be even and at least 4")));
    }
    let spike = eps.powf(-1.0 / k as f64);
    if !(sigma > 0.0 && sigma < spike) {
        return Err(Error::InvalidSpec(format!("sigma = {sigma} must lie in (0, eps^(-1/k) = {spike})")));
    }
    let cov = CovariateSpec::new(vec![
        Marginal::uniform(-1.0, 1.0),
        Marginal::SpikeBand {
            spike,
            spike_prob: eps,
            band: eps * sigma,
        },
    ])?;
    let noise = NoiseSpec::IndependentUniform { sigma };
    Ok(InstancePair {
        kind: PairKind::TrueLinear { eps, sigma, k },
        d1: RegressionInstance::new(cov.clone(), noise.clone(), vec![1.0, 1.0])?,
        d2: RegressionInstance::new(cov, noise, vec![1.0, -1.0])?,
    })
}

pub fn dependent_pair(eps: f64) -> Result<InstancePair> {
    open_unit("eps", eps, 0.5)?;
    let spike = eps.powf(-0.25);
    let cov = CovariateSpec::new(vec![
        Marginal::uniform(-1.0, 1.0),
        Marginal::SpikeBand {
            spike,
            spike_prob: eps,
            band: 1.0,
        },
    ])?;
    Ok(InstancePair {
        kind: PairKind::DependentNoise { eps },
        d1: RegressionInstance::new(cov.clone(), NoiseSpec::Zero, vec![0.0, 1.0])?,
        d2: RegressionInstance::new(
            cov,
            NoiseSpec::DependentRule(DependentRule::SpikeZeroed { coord: 1, spike }),
            vec![0.0, 1.0],
        )?,
    })
}

pub fn bounded_cov_pair(eps: f64) -> Result<InstancePair> {
    open_unit("eps", eps, 1.0)?;
    let cov = CovariateSpec::new(vec![Marginal::ZeroInflated {
        inner: Box::new(Marginal::StudentT {
            nu: 2.0 + eps,
            scale: 1.0,
        }),
        zero_prob: 1.0 - eps,
    }])?;
    Ok(InstancePair {
        kind: PairKind::BoundedCovariance { eps },
        d1: RegressionInstance::new(cov.clone(), NoiseSpec::Zero, vec![1.0])?,
        d2: RegressionInstance::new(cov, NoiseSpec::Zero, vec![-1.0])?,
    })
}

pub fn mean_shift_pair(delta: f64) -> Result<InstancePair> {
    open_unit("delta", delta, 1.0)?;
    let spike = delta.powf(-0.25);
    let cov = CovariateSpec::new(vec![Marginal::DiscreteAtoms {
        values: vec![spike, -1.0, 1.0],
        probs: vec![delta, 0.5 * (1.0 - delta), 0.5 * (1.0 - delta)],
    }])?;
    Ok(InstancePair {
        kind: PairKind::MeanShift { delta },
        d1: RegressionInstance::new(cov.clone(), NoiseSpec::Zero, vec![1.0])?,
        d2: RegressionInstance::new(
            cov,
            NoiseSpec::DependentRule(DependentRule::SpikeZeroed { coord: 0, spike }),
            vec![1.0],
        )?,
    })
}

impl InstancePair {
    pub fn swapped(&self) -> Self {
        Self {
            kind: self.kind,
            d1: self.d2.clone(),
            d2: self.d1.clone(),
        }
    }

    /// Coordinate on which the two conditional label laws differ, and the conditional
    /// TV between them as a function of that coordinate.
    pub fn overlap_integrand(&self) -> (usize, Box<dyn Fn(f64) -> f64 + Send + Sync>) {
        match self.kind {
            PairKind::TrueLinear { sigma, .. } => {
                // y | x is uniform of half-width σ around x₁ ± x₂: overlap shrinks with |2x₂| / 2σ.
                (1, Box::new(move |x: f64| (x.abs() / sigma).min(1.0)))
            }
            PairKind::DependentNoise { eps } => {
                let spike = eps.powf(-0.25);
                (1, Box::new(move |x: f64| if x.abs() == spike { 1.0 } else { 0.0 }))
            }
            PairKind::MeanShift { delta } => {
                let spike = delta.powf(-0.25);
                (0, Box::new(move |x: f64| if x.abs() == spike { 1.0 } else { 0.0 }))
            }
            PairKind::BoundedCovariance { .. } => (0, Box::new(|x: f64| if x != 0.0 { 1.0 } else { 0.0 })),
        }
    }

    /// TV from the construction's closed form.
    pub fn tv_closed_form(&self) -> f64 {
        match self.kind {
            PairKind::TrueLinear { eps, sigma, .. } => {
                // spike mass always lies beyond σ; the band contributes E[|x₂| 1{|x₂|<σ}] / σ
                let b = eps * sigma;
                let band = if b <= sigma {
                    b / (2.0 * sigma)
                } else {
                    (b - sigma) / b + sigma / (2.0 * b)
                };
                eps + (1.0 - eps) * band
            }
            PairKind::DependentNoise { eps } | PairKind::BoundedCovariance { eps } => eps,
            PairKind::MeanShift { delta } => delta,
        }
    }

    /// Covariance of the shared covariate marginal (`E[xxᵀ]` of D1).
    pub fn shared_sigma(&self) -> DMatrix<f64> {
        self.d1.sigma.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub formula: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub closed: f64,
    pub empirical: f64,
    pub abs_diff: f64,
}

impl CrossCheck {
    fn new(closed: f64, empirical: f64) -> Self {
        Self {
            closed,
            empirical,
            abs_diff: (closed - empirical).abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub kind: PairKind,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub sigma_matrix: Vec<Vec<f64>>,
    pub tv_closed_form: f64,
    pub param_gap: f64,
    pub excess_gap: f64,
    pub hc_coefficient: Option<HcEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hc_flag: Option<String>,
    /// Instance whose optimum anchors the excess-error identity.
    pub gradient_anchor: String,
    pub gradient_residual_d1: f64,
    pub gradient_residual_d2: f64,
    /// `|excess_gap - param_gap²| <= 1e-10`.
    pub identity_holds: bool,
    pub covariates_centered: bool,
    /// Named closed-form quantities of the construction (e.g. `e_x2`, `sigma22`).
    pub quantities: BTreeMap<String, f64>,
    pub claimed: BTreeMap<String, Claim>,
    /// Monte-Carlo cross-checks: `tv`, `theta1_j`, `theta2_j`.
    pub checks: BTreeMap<String, CrossCheck>,
}

fn claim(formula: &str, value: f64) -> Claim {
    Claim {
        formula: formula.into(),
        value,
    }
}

pub fn pair_report(pair: &InstancePair, mc_samples: usize, seed: u64) -> Result<PairReport> {
    if mc_samples < 10_000 {
        return Err(Error::InvalidSpec(format!("mc_samples = {mc_samples} must be at least 10^4")));
    }
    let sigma = pair.shared_sigma();
    let t1 = pair.d1.theta_star.clone();
    let t2 = pair.d2.theta_star.clone();
    let param_gap = diagnostics::param_error(&t1, &t2, &sigma)?;
    let pop1 = pair.d1.population()?;
    let excess_gap = (pop1.err(&t2) - pop1.err(&t1)).abs();
    let g1 = pop1.gradient(&t1).amax();
    let g2 = pair.d2.population()?.gradient(&t2).amax();

    let (hc, hc_flag) = match population_moments(&pair.d1.covariates, 4) {
        Ok(m) => (Some(diagnostics::hc_from_moments(&m, 16, seed)?), None),
        Err(Error::InfiniteMoment { order, nu }) => (
            None,
            Some(format!(
                "not (c,4)-hypercontractive: moment of order {order} is infinite (nu = {nu})"
            )),
        ),
        Err(e) => return Err(e),
    };

    let mut quantities = BTreeMap::new();
    let mut claimed = BTreeMap::new();
    let e_x2 = |j: usize| sigma[(j, j)];
    match pair.kind {
        PairKind::TrueLinear { eps, sigma: s, k } => {
            let s22 = eps.powf(1.0 - 2.0 / k as f64) + (1.0 - eps) * (eps * s).powi(2) / 3.0;
            quantities.insert("sigma22".into(), s22);
            quantities.insert("param_gap_formula".into(), 2.0 * s22.sqrt());
            claimed.insert("tv".into(), claim("2ε", 2.0 * eps));
            claimed.insert(
                "sigma22".into(),
                claim("ε^{1−2/k} + (εσ)²/3", eps.powf(1.0 - 2.0 / k as f64) + (eps * s).powi(2) / 3.0),
            );
        }
        PairKind::DependentNoise { eps } => {
            quantities.insert("e_x2_2".into(), e_x2(1));
            claimed.insert("theta2".into(), claim("(1−ε)/(1+√ε)", (1.0 - eps) / (1.0 + eps.sqrt())));
            let pg = (eps.sqrt() + (1.0 - eps) / 3.0).sqrt() * (eps.sqrt() + eps) / (1.0 + eps.sqrt());
            claimed.insert("param_gap".into(), claim("√(√ε+(1−ε)/3)·(√ε+ε)/(1+√ε)", pg));
        }
        PairKind::BoundedCovariance { eps } => {
            quantities.insert("e_x2".into(), 2.0 + eps);
            quantities.insert("e_x2_marginal".into(), e_x2(0));
            quantities.insert("scaled_gap".into(), 2.0 * (2.0 + eps).sqrt());
            claimed.insert("tv_bound".into(), claim("ε", eps));
        }
        PairKind::MeanShift { delta } => {
            quantities.insert("e_x2".into(), e_x2(0));
            quantities.insert("e_x4".into(), pair.d1.covariates.marginals[0].raw_moment(4)?);
            quantities.insert("theta_gap".into(), (t1[0] - t2[0]).abs());
            let sd = delta.sqrt();
            claimed.insert("theta2".into(), claim("(1−δ)/(1+√δ)", (1.0 - delta) / (1.0 + sd)));
            claimed.insert("theta_gap".into(), claim("(δ+√δ)/(1+√δ)", (delta + sd) / (1.0 + sd)));
            claimed.insert("e_x2".into(), claim("1+√δ", 1.0 + sd));
            claimed.insert("e_x4".into(), claim("2", 2.0));
        }
    }

    let mut checks = BTreeMap::new();
    let s1 = sample_instance(&pair.d1, mc_samples, seed)?;
    let s2 = sample_instance(&pair.d2, mc_samples, seed.wrapping_add(1))?;
    let (coord, g) = pair.overlap_integrand();
    let tv_mc = s1.x.column(coord).iter().map(|&v| g(v)).sum::<f64>() / mc_samples as f64;
    let tv = pair.tv_closed_form();
    checks.insert("tv".into(), CrossCheck::new(tv, tv_mc));
    for (name, ds, t) in [("theta1", &s1, &t1), ("theta2", &s2, &t2)] {
        let fit = ols(ds)?;
        for j in 0..t.len() {
            checks.insert(format!("{name}_{j}"), CrossCheck::new(t[j], fit.theta_hat[j]));
        }
    }

    Ok(PairReport {
        kind: pair.kind,
        theta1: t1.iter().cloned().collect(),
        theta2: t2.iter().cloned().collect(),
        sigma_matrix: rows_of(&sigma),
        tv_closed_form: tv,
        param_gap,
        excess_gap,
        hc_coefficient: hc,
        hc_flag,
        gradient_anchor: "d1".into(),
        gradient_residual_d1: g1,
        gradient_residual_d2: g2,
        identity_holds: (excess_gap - param_gap * param_gap).abs() <= 1e-10,
        covariates_centered: pair.d1.covariates.is_centered(),
        quantities,
        claimed,
        checks,
    })
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_ranges() {
        assert!(true_linear_pair(0.6, 1.0, 4).is_err());
        assert!(true_linear_pair(0.05, 1.0, 3).is_err());
        assert!(true_linear_pair(0.05, 10.0, 4).is_err());
        assert!(dependent_pair(0.0).is_err());
        assert!(bounded_cov_pair(1.0).is_err());
        assert!(mean_shift_pair(-0.1).is_err());
    }

    #[test]
    fn true_linear_shares_covariates() {
        let p = true_linear_pair(0.05, 1.0, 4).unwrap();
        assert_eq!(p.d1.covariates, p.d2.covariates);
        let s22 = 0.05f64.sqrt() + 0.95 * 0.05f64.powi(2) / 3.0;
        assert!((p.d1.sigma[(1, 1)] - s22).abs() < 1e-14);
    }

    #[test]
    fn dependent_theta1() {
        let p = dependent_pair(0.04).unwrap();
        assert_eq!(p.d1.theta_star.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn true_linear_tv_limit() {
        let p = true_linear_pair(1e-9, 1.0, 4).unwrap();
        assert!(p.tv_closed_form() < 1e-8);
    }
}
