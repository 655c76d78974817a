use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT, Uniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad;

const QUAD_REL_TOL: f64 = 1e-12;

/// One coordinate's marginal law. Coordinates of a covariate vector are independent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    UniformInterval {
        a: f64,
        b: f64,
    },
    /// `±spike` with probability `spike_prob / 2` each, otherwise uniform on `[-band, band]`.
    SpikeBand {
        spike: f64,
        spike_prob: f64,
        band: f64,
    },
    Gaussian {
        mean: f64,
        variance: f64,
    },
    StudentT {
        nu: f64,
        scale: f64,
    },
    DiscreteAtoms {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
    ZeroInflated {
        inner: Box<Marginal>,
        zero_prob: f64,
    },
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidSpec(format!("{what} = {p} is not a probability")));
    }
    Ok(())
}

impl Marginal {
    pub fn uniform(a: f64, b: f64) -> Self {
        Marginal::UniformInterval { a, b }
    }

    pub fn gaussian(mean: f64, variance: f64) -> Self {
        Marginal::Gaussian { mean, variance }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Marginal::UniformInterval { a, b } => {
                if !(a < b) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidSpec(format!("uniform interval [{a}, {b}] is empty")));
                }
            }
            Marginal::SpikeBand {
                spike,
                spike_prob,
                band,
            } => {
                check_prob(*spike_prob, "spike probability")?;
                if !(*band >= 0.0) || !(spike > band) || !spike.is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "spike-band needs spike > band >= 0, got spike {spike}, band {band}"
                    )));
                }
            }
            Marginal::Gaussian { mean, variance } => {
                if !(*variance > 0.0) || !mean.is_finite() || !variance.is_finite() {
                    return Err(Error::InvalidSpec(format!("gaussian variance {variance} must be positive")));
                }
            }
            Marginal::StudentT { nu, scale } => {
                if !(*nu > 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "student t needs nu > 1 for a defined mean, got {nu}"
                    )));
                }
                if !(*scale > 0.0) {
                    return Err(Error::InvalidSpec(format!("student t scale {scale} must be positive")));
                }
            }
            Marginal::DiscreteAtoms { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(Error::InvalidSpec(
                        "discrete atoms need matching non-empty values and probabilities".into(),
                    ));
                }
                for &p in probs {
                    check_prob(p, "atom probability")?;
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidSpec(format!("atom probabilities sum to {total}")));
                }
            }
            Marginal::ZeroInflated { inner, zero_prob } => {
                check_prob(*zero_prob, "zero probability")?;
                inner.validate()?;
            }
        }
        Ok(())
    }

    /// Raw moment `E[x^r]`, closed form for every kind.
    pub fn raw_moment(&self, r: u32) -> Result<f64> {
        if r == 0 {
            return Ok(1.0);
        }
        let ri = r as i32;
        Ok(match self {
            Marginal::UniformInterval { a, b } => {
                (b.powi(ri + 1) - a.powi(ri + 1)) / ((r as f64 + 1.0) * (b - a))
            }
            Marginal::SpikeBand {
                spike,
                spike_prob,
                band,
            } => {
                if r % 2 == 1 {
                    0.0
                } else {
                    spike_prob * spike.powi(ri) + (1.0 - spike_prob) * band.powi(ri) / (r as f64 + 1.0)
                }
            }
            Marginal::Gaussian { mean, variance } => {
                // E[x^r] = mu E[x^{r-1}] + (r-1) s^2 E[x^{r-2}]
                let mut prev2 = 1.0;
                let mut prev1 = *mean;
                for k in 2..=r {
                    let next = mean * prev1 + (k as f64 - 1.0) * variance * prev2;
                    prev2 = prev1;
                    prev1 = next;
                }
                prev1
            }
            Marginal::StudentT { nu, scale } => {
                if (r as f64) >= *nu {
                    return Err(Error::InfiniteMoment { order: r, nu: *nu });
                }
                if r % 2 == 1 {
                    0.0
                } else {
                    let rf = r as f64;
                    let log = 0.5 * rf * nu.ln() + ln_gamma(0.5 * (rf + 1.0)) + ln_gamma(0.5 * (nu - rf))
                        - 0.5 * std::f64::consts::PI.ln()
                        - ln_gamma(0.5 * nu);
                    scale.powi(ri) * log.exp()
                }
            }
            Marginal::DiscreteAtoms { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| p * v.powi(ri)).sum()
            }
            Marginal::ZeroInflated { inner, zero_prob } => (1.0 - zero_prob) * inner.raw_moment(r)?,
        })
    }

    pub fn mean(&self) -> Result<f64> {
        self.raw_moment(1)
    }

    /// Point masses of the law as `(location, probability)`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            Marginal::SpikeBand {
                spike,
                spike_prob,
                band,
            } => {
                let mut out = vec![(-spike, 0.5 * spike_prob), (*spike, 0.5 * spike_prob)];
                if *band == 0.0 {
                    out.push((0.0, 1.0 - spike_prob));
                }
                out
            }
            Marginal::DiscreteAtoms { values, probs } => {
                values.iter().cloned().zip(probs.iter().cloned()).collect()
            }
            Marginal::ZeroInflated { inner, zero_prob } => {
                let mut out = vec![(0.0, *zero_prob)];
                out.extend(inner.atoms().into_iter().map(|(v, p)| (v, p * (1.0 - zero_prob))));
                out
            }
            _ => Vec::new(),
        }
    }

    /// `E[f(x)]`: atoms summed exactly, continuous parts by adaptive quadrature
    /// (split at zero so kinks there are resolved).
    pub fn expect(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        match self {
            Marginal::UniformInterval { a, b } => {
                let dens = 1.0 / (b - a);
                split_at_zero(f, *a, *b) * dens
            }
            Marginal::SpikeBand {
                spike,
                spike_prob,
                band,
            } => {
                let atoms = 0.5 * spike_prob * (f(-spike) + f(*spike));
                if *band == 0.0 {
                    atoms + (1.0 - spike_prob) * f(0.0)
                } else {
                    atoms + (1.0 - spike_prob) / (2.0 * band) * split_at_zero(f, -band, *band)
                }
            }
            Marginal::Gaussian { mean, variance } => {
                let s = variance.sqrt();
                let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
                quad::integrate_real_line(|t| c * (-0.5 * t * t).exp() * f(mean + s * t), QUAD_REL_TOL)
            }
            Marginal::StudentT { nu, scale } => {
                let lc = ln_gamma(0.5 * (nu + 1.0))
                    - ln_gamma(0.5 * nu)
                    - 0.5 * (nu * std::f64::consts::PI).ln();
                let c = lc.exp();
                quad::integrate_real_line(
                    |t| c * (1.0 + t * t / nu).powf(-0.5 * (nu + 1.0)) * f(scale * t),
                    QUAD_REL_TOL,
                )
            }
            Marginal::DiscreteAtoms { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| p * f(*v)).sum()
            }
            Marginal::ZeroInflated { inner, zero_prob } => {
                zero_prob * f(0.0) + (1.0 - zero_prob) * inner.expect(f)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Marginal::UniformInterval { a, b } => Uniform::new(*a, *b).expect("validated").sample(rng),
            Marginal::SpikeBand {
                spike,
                spike_prob,
                band,
            } => {
                let u: f64 = rng.random();
                if u < *spike_prob {
                    if rng.random::<bool>() {
                        *spike
                    } else {
                        -spike
                    }
                } else if *band == 0.0 {
                    0.0
                } else {
                    Uniform::new(-band, *band).expect("validated").sample(rng)
                }
            }
            Marginal::Gaussian { mean, variance } => {
                Normal::new(*mean, variance.sqrt()).expect("validated").sample(rng)
            }
            Marginal::StudentT { nu, scale } => scale * StudentT::new(*nu).expect("validated").sample(rng),
            Marginal::DiscreteAtoms { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated")
            }
            Marginal::ZeroInflated { inner, zero_prob } => {
                let u: f64 = rng.random();
                if u < *zero_prob {
                    0.0
                } else {
                    inner.sample(rng)
                }
            }
        }
    }
}

fn split_at_zero(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if a < 0.0 && b > 0.0 {
        quad::integrate(f, a, 0.0, QUAD_REL_TOL) + quad::integrate(f, 0.0, b, QUAD_REL_TOL)
    } else {
        quad::integrate(f, a, b, QUAD_REL_TOL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_moments() {
        let u = Marginal::uniform(-1.0, 1.0);
        assert!((u.raw_moment(2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((u.raw_moment(4).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(u.raw_moment(3).unwrap(), 0.0);
    }

    #[test]
    fn spike_band_moments() {
        let d: f64 = 0.01;
        let eta = 0.1;
        let s = Marginal::SpikeBand {
            spike: d.powf(-0.25),
            spike_prob: d,
            band: eta,
        };
        let m4 = 1.0 + (1.0 - d) * eta.powi(4) / 5.0;
        let m2 = (1.0 - d) * eta * eta / 3.0 + d.sqrt();
        assert!((s.raw_moment(4).unwrap() - m4).abs() < 1e-12);
        assert!((s.raw_moment(2).unwrap() - m2).abs() < 1e-12);
    }

    #[test]
    fn symmetric_atoms() {
        let a = Marginal::DiscreteAtoms {
            values: vec![-1.0, 1.0],
            probs: vec![0.5, 0.5],
        };
        for r in 1..=6 {
            let expect = if r % 2 == 0 { 1.0 } else { 0.0 };
            assert_eq!(a.raw_moment(r).unwrap(), expect);
        }
    }

    #[test]
    fn student_t_infinite_fourth() {
        let t = Marginal::StudentT { nu: 2.1, scale: 1.0 };
        assert!(matches!(t.raw_moment(4), Err(Error::InfiniteMoment { order: 4, .. })));
        let v = t.raw_moment(2).unwrap();
        assert!((v - 2.1 / 0.1).abs() < 1e-9 * v);
    }

    #[test]
    fn student_t_closed_form_matches_quadrature() {
        let t = Marginal::StudentT { nu: 7.0, scale: 1.5 };
        for r in [2u32, 4] {
            let q = t.expect(&|x| x.powi(r as i32));
            let c = t.raw_moment(r).unwrap();
            assert!((q - c).abs() < 1e-8 * c, "order {r}: {q} vs {c}");
        }
    }

    #[test]
    fn gaussian_recursion() {
        let g = Marginal::gaussian(0.5, 2.0);
        // E[x^4] = mu^4 + 6 mu^2 s^2 + 3 s^4
        let m4 = 0.5f64.powi(4) + 6.0 * 0.25 * 2.0 + 3.0 * 4.0;
        assert!((g.raw_moment(4).unwrap() - m4).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(Marginal::StudentT { nu: 1.0, scale: 1.0 }.validate().is_err());
        assert!(Marginal::SpikeBand {
            spike: 0.5,
            spike_prob: 0.1,
            band: 1.0
        }
        .validate()
        .is_err());
        assert!(Marginal::DiscreteAtoms {
            values: vec![0.0, 1.0],
            probs: vec![0.3, 0.3]
        }
        .validate()
        .is_err());
    }
}
