//! Hypercontractivity and NCM estimates, error metrics, TV and identifiability.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lb::InstancePair;
use crate::linalg;
use crate::model::{population_moments, CovariateSpec, Dataset, Moments, RegressionInstance};

/// Probe set: coordinate axes, then the top `⌈count/2⌉` right singular directions of `x`,
/// then seeded random unit vectors until `count` directions are collected.
pub fn probe_directions(x: &DMatrix<f64>, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let d = x.ncols();
    let mut out: Vec<DVector<f64>> = (0..d)
        .map(|j| {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            e
        })
        .collect();
    let want_svd = count.div_ceil(2).min(d);
    if want_svd > 0 && x.nrows() > 0 {
        let svd = x.clone().svd(false, true);
        if let Some(vt) = svd.v_t {
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
            for &i in order.iter().take(want_svd) {
                let mut v: DVector<f64> = vt.row(i).transpose();
                // fix the sign so the probe set is deterministic
                if v[v.iamax()] < 0.0 {
                    v = -v;
                }
                out.push(v);
            }
        }
    }
    out.extend(random_directions(d, count.saturating_sub(out.len()), seed));
    out
}

pub fn random_directions(d: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let v: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let n = v.norm();
            if n > 1e-8 {
                break v / n;
            }
        })
        .collect()
}

/// Estimate of the order-4 hypercontractivity constant `C₄`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HcEstimate {
    pub order: u32,
    /// Best ratio `E⟨v,x⟩⁴ / (E⟨v,x⟩²)²` over the probes.
    pub lower: f64,
    /// `λ_max` of the whitened flattened fourth-moment matrix.
    pub upper: f64,
    pub probes: usize,
}

pub enum HcSource<'a> {
    Data(&'a DMatrix<f64>),
    Moments(&'a Moments),
    Spec(&'a CovariateSpec),
}

pub fn hc_coefficient(source: HcSource<'_>, k: u32, probes: usize, seed: u64) -> Result<HcEstimate> {
    if k != 4 {
        return Err(Error::InvalidSpec(format!("hypercontractivity order {k} unsupported (only 4)")));
    }
    match source {
        HcSource::Data(x) => hc_from_data(x, probes, seed),
        HcSource::Moments(m) => hc_from_moments(m, probes, seed),
        HcSource::Spec(s) => hc_from_moments(&population_moments(s, 4)?, probes, seed),
    }
}

fn fourth_moment_ratio(z: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let p = z * v;
    let n = z.nrows() as f64;
    let m2 = p.iter().map(|t| t * t).sum::<f64>() / n;
    let m4 = p.iter().map(|t| t.powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2)
}

pub fn hc_from_data(x: &DMatrix<f64>, probes: usize, seed: u64) -> Result<HcEstimate> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite covariate".into()));
    }
    let z = linalg::whiten(x)?;
    let d = z.ncols();
    let n = z.nrows() as f64;
    let dirs = probe_directions(&z, probes, seed);
    let lower = dirs.iter().map(|v| fourth_moment_ratio(&z, v)).fold(f64::MIN, f64::max);
    let mut m4 = DMatrix::<f64>::zeros(d * d, d * d);
    let mut outer = vec![0.0; d * d];
    for row in z.row_iter() {
        for a in 0..d {
            for b in 0..d {
                outer[a * d + b] = row[a] * row[b];
            }
        }
        for p in 0..d * d {
            for q in p..d * d {
                m4[(p, q)] += outer[p] * outer[q];
            }
        }
    }
    for p in 0..d * d {
        for q in p..d * d {
            m4[(p, q)] /= n;
            m4[(q, p)] = m4[(p, q)];
        }
    }
    let upper = m4.symmetric_eigenvalues().max();
    Ok(HcEstimate {
        order: 4,
        lower,
        upper,
        probes: dirs.len(),
    })
}

/// Population version for independent coordinates: after standardizing, only pairings
/// survive in `E[z_a z_b z_c z_e]`.
pub fn hc_from_moments(m: &Moments, probes: usize, seed: u64) -> Result<HcEstimate> {
    if m.max_order() < 4 {
        return Err(Error::InvalidSpec("need moments up to order 4".into()));
    }
    let d = m.dim();
    let mut kurt = vec![0.0; d];
    for (j, k) in kurt.iter_mut().enumerate() {
        let var = m.central(j, 2);
        if !(var > 0.0) {
            return Err(Error::Singular(format!("coordinate {j} has zero variance")));
        }
        *k = m.central(j, 4) / (var * var);
    }
    let ratio = |v: &DVector<f64>| {
        let s2: f64 = v.iter().map(|t| t * t).sum();
        let m4 = 3.0 * s2 * s2 + v.iter().zip(&kurt).map(|(t, k)| t.powi(4) * (k - 3.0)).sum::<f64>();
        m4 / (s2 * s2)
    };
    let mut dirs: Vec<DVector<f64>> = (0..d)
        .map(|j| {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            e
        })
        .collect();
    dirs.extend(random_directions(d, probes.saturating_sub(d), seed));
    let lower = dirs.iter().map(ratio).fold(f64::MIN, f64::max);
    let mut m4 = DMatrix::<f64>::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    let v = if a == b && b == c && c == e {
                        kurt[a]
                    } else if (a == b && c == e) || (a == c && b == e) || (a == e && b == c) {
                        1.0
                    } else {
                        0.0
                    };
                    m4[(a * d + b, c * d + e)] = v;
                }
            }
        }
    }
    let upper = m4.symmetric_eigenvalues().max();
    Ok(HcEstimate {
        order: 4,
        lower,
        upper: upper.max(lower),
        probes: dirs.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcmEstimate {
    pub r: u32,
    pub ratio: f64,
    /// All residuals (numerically) zero.
    pub degenerate: bool,
    pub probes: usize,
}

pub fn ncm_ratio(ds: &Dataset, theta: &DVector<f64>, r: u32, probes: usize, seed: u64) -> Result<NcmEstimate> {
    ncm_ratio_x(&ds.x, &ds.y, theta, r, &probe_directions(&ds.x, probes, seed))
}

/// NCM ratio against an explicit probe set.
pub fn ncm_ratio_x(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    theta: &DVector<f64>,
    r: u32,
    dirs: &[DVector<f64>],
) -> Result<NcmEstimate> {
    if !(r == 1 || r == 2) {
        return Err(Error::InvalidSpec(format!("NCM order r = {r} unsupported")));
    }
    let n = x.nrows() as f64;
    let res = y - x * theta;
    let p = 2 * r as i32;
    let er: f64 = res.iter().map(|t| t.powi(p)).sum::<f64>() / n;
    let y2 = y.iter().map(|t| t * t).sum::<f64>() / n;
    let floor = (1e-24 * y2.max(f64::MIN_POSITIVE)).powi(r as i32);
    if er <= floor {
        return Ok(NcmEstimate {
            r,
            ratio: 1.0,
            degenerate: true,
            probes: dirs.len(),
        });
    }
    let mut best = f64::MIN;
    for v in dirs {
        let proj = x * v;
        let ex: f64 = proj.iter().map(|t| t.powi(p)).sum::<f64>() / n;
        if ex <= 0.0 {
            continue;
        }
        let joint: f64 = proj.iter().zip(res.iter()).map(|(a, b)| (a * b).powi(p)).sum::<f64>() / n;
        best = best.max(joint / (ex * er));
    }
    Ok(NcmEstimate {
        r,
        ratio: best,
        degenerate: false,
        probes: dirs.len(),
    })
}

/// `‖Σ^{1/2}(θ_a − θ_b)‖₂`.
pub fn param_error(a: &DVector<f64>, b: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    linalg::mahalanobis_norm(sigma, &(a - b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessError {
    pub value: f64,
    /// `err(θ) − err(θ*)` from the second-moment expansion.
    pub direct: f64,
    /// `‖Σ^{1/2}(θ − θ*)‖²`.
    pub identity: f64,
    /// `‖Σθ* − E[xy]‖_∞`.
    pub gradient_residual: f64,
    /// Gradient condition failed, so `value` is the direct expansion.
    pub gradient_violated: bool,
}

pub fn excess_error(inst: &RegressionInstance, theta: &DVector<f64>) -> Result<ExcessError> {
    let pop = inst.population()?;
    let direct = pop.err(theta) - pop.err(&inst.theta_star);
    let delta = theta - &inst.theta_star;
    let identity = (delta.transpose() * &pop.sigma * &delta)[(0, 0)];
    let g = pop.gradient(&inst.theta_star).amax();
    let violated = g > 1e-8;
    Ok(ExcessError {
        value: if violated { direct } else { identity },
        direct,
        identity,
        gradient_residual: g,
        gradient_violated: violated,
    })
}

/// Integrates the registered conditional-overlap formula over the covariate marginal.
pub fn tv_estimate(pair: &InstancePair) -> Result<f64> {
    if pair.d1 == pair.d2 {
        return Ok(0.0);
    }
    if pair.d1.covariates != pair.d2.covariates {
        return Err(Error::Unregistered("pairs with different covariate laws".into()));
    }
    let (coord, g) = pair.overlap_integrand();
    let m = &pair.d1.covariates.marginals[coord];
    Ok(m.expect(&|x| g(x)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentMode {
    Ncm,
    Arbitrary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentVerdict {
    /// Finite ratio; compare against `bound_constant`.
    Measured,
    /// Zero gap.
    TriviallySatisfied,
    /// Zero errors but a nonzero gap: no finite rate can hold.
    ImpossibilityWitness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub kind: String,
    pub mode: IdentMode,
    pub k: u32,
    pub tv: f64,
    pub exponent: f64,
    pub param_gap: f64,
    pub err1: f64,
    pub err2: f64,
    pub rho: Option<f64>,
    pub c4: Option<f64>,
    pub eta4: Option<f64>,
    /// `√(C₄·η₄)` when both are finite.
    pub bound_constant: Option<f64>,
    pub verdict: IdentVerdict,
}

pub fn identifiability_check(pair: &InstancePair, k: u32, mode: IdentMode) -> Result<IdentifiabilityReport> {
    if k < 2 || k % 2 != 0 {
        return Err(Error::InvalidSpec(format!("k = {k} must be even")));
    }
    let tv = tv_estimate(pair)?;
    let exponent = match mode {
        IdentMode::Ncm => 1.0 - 1.0 / k as f64,
        IdentMode::Arbitrary => 1.0 - 2.0 / k as f64,
    };
    let sigma = pair.shared_sigma();
    let param_gap = param_error(&pair.d1.theta_star, &pair.d2.theta_star, &sigma)?;
    let (err1, err2) = (pair.d1.err_star, pair.d2.err_star);
    let c4 = population_moments(&pair.d1.covariates, 4)
        .and_then(|m| hc_from_moments(&m, 16, 0))
        .ok()
        .map(|h| h.lower);
    let eta4 = pair
        .d1
        .residual_moments(&pair.d1.theta_star, 4)
        .ok()
        .and_then(|m| if m[2] > 0.0 { Some(m[4] / (m[2] * m[2])) } else { None });
    let bound_constant = match (c4, eta4) {
        (Some(c), Some(e)) => Some((c * e).sqrt()),
        _ => None,
    };
    let denom = tv.powf(exponent) * (err1.sqrt() + err2.sqrt());
    let (rho, verdict) = if param_gap <= 1e-15 {
        (Some(0.0), IdentVerdict::TriviallySatisfied)
    } else if denom <= 0.0 {
        (None, IdentVerdict::ImpossibilityWitness)
    } else {
        (Some(param_gap / denom), IdentVerdict::Measured)
    };
    Ok(IdentifiabilityReport {
        kind: pair.kind.name().into(),
        mode,
        k,
        tv,
        exponent,
        param_gap,
        err1,
        err2,
        rho,
        c4,
        eta4,
        bound_constant,
        verdict,
    })
}

/// `‖Σ^{-1/2} Σ̂ Σ^{-1/2} − I‖_F` with `Σ̂ = XᵀX / n`.
pub fn lowner_deviation(x: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let w = linalg::inv_sym_sqrt(sigma, linalg::EIGEN_FLOOR)?;
    let s = linalg::second_moment(x);
    let d = sigma.nrows();
    Ok((&w * s * &w - DMatrix::identity(d, d)).norm())
}
