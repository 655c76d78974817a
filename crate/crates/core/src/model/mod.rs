//! Regression instances: covariate laws, noise models, population moments and sampling.

mod dataset;
mod marginal;

pub use dataset::{meta_path_for, read_dataset, write_dataset, Dataset, DatasetMeta};
pub use marginal::Marginal;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name recorded in dataset metadata for every generator built by [`rng_from_seed`].
pub const GENERATOR_NAME: &str = "ChaCha8Rng";

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Product law over `R^d`: one independent [`Marginal`] per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub marginals: Vec<Marginal>,
}

impl CovariateSpec {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidSpec("covariate dimension must be at least 1".into()));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    pub fn iid(m: Marginal, d: usize) -> Result<Self> {
        Self::new(vec![m; d])
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    /// Whether every coordinate has zero mean (within 1e-12).
    pub fn is_centered(&self) -> bool {
        self.marginals
            .iter()
            .all(|m| m.mean().map(|v| v.abs() < 1e-12).unwrap_or(true))
    }
}

/// Per-coordinate raw moments `E[x_j^r]`, `r = 0..=max_order`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub raw: Vec<Vec<f64>>,
}

impl Moments {
    pub fn dim(&self) -> usize {
        self.raw.len()
    }

    pub fn max_order(&self) -> usize {
        self.raw.first().map(|r| r.len() - 1).unwrap_or(0)
    }

    pub fn raw(&self, j: usize, r: usize) -> f64 {
        self.raw[j][r]
    }

    /// Central moment `E[(x_j - E x_j)^r]` by binomial expansion.
    pub fn central(&self, j: usize, r: usize) -> f64 {
        let mu = self.raw[j][1];
        (0..=r)
            .map(|k| binom(r, k) * self.raw[j][k] * (-mu).powi((r - k) as i32))
            .sum()
    }
}

pub(crate) fn binom(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Moments of a sum of independent variables from each term's moment sequence.
pub(crate) fn convolve_moments(a: &[f64], b: &[f64]) -> Vec<f64> {
    let k = a.len().min(b.len());
    (0..k)
        .map(|r| (0..=r).map(|i| binom(r, i) * a[i] * b[r - i]).sum())
        .collect()
}

/// Closed-form (or quadrature-backed) population moments of every coordinate.
pub fn population_moments(spec: &CovariateSpec, max_order: u32) -> Result<Moments> {
    let raw = spec
        .marginals
        .iter()
        .map(|m| (0..=max_order).map(|r| m.raw_moment(r)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Moments { raw })
}

/// `x = matrix · z + shift` applied to the independent draw `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub matrix: DMatrix<f64>,
    pub shift: DVector<f64>,
}

/// Label rules whose noise depends on the covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DependentRule {
    /// `y = 0` when `|x_coord| == spike`, otherwise `y = ⟨x, θ_gen⟩`.
    SpikeZeroed { coord: usize, spike: f64 },
}

impl DependentRule {
    pub fn id(&self) -> &'static str {
        match self {
            DependentRule::SpikeZeroed { .. } => "spike_zeroed",
        }
    }

    fn is_active(&self, x: &[f64]) -> bool {
        match self {
            DependentRule::SpikeZeroed { coord, spike } => x[*coord].abs() != *spike,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Uniform on `[-sigma, sigma]`; variance `sigma^2 / 3`.
    IndependentUniform { sigma: f64 },
    IndependentGaussian { variance: f64 },
    Zero,
    DependentRule(DependentRule),
}

impl NoiseSpec {
    pub fn is_independent(&self) -> bool {
        !matches!(self, NoiseSpec::DependentRule(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::IndependentUniform { sigma } if !(*sigma > 0.0) => {
                Err(Error::InvalidSpec(format!("uniform noise half-width {sigma} must be positive")))
            }
            NoiseSpec::IndependentGaussian { variance } if !(*variance > 0.0) => {
                Err(Error::InvalidSpec(format!("gaussian noise variance {variance} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Raw moments of an independent noise term.
    pub fn raw_moments(&self, max_order: usize) -> Vec<f64> {
        (0..=max_order)
            .map(|r| {
                if r == 0 {
                    return 1.0;
                }
                if r % 2 == 1 {
                    return 0.0;
                }
                match self {
                    NoiseSpec::IndependentUniform { sigma } => sigma.powi(r as i32) / (r as f64 + 1.0),
                    NoiseSpec::IndependentGaussian { variance } => {
                        let dfact: f64 = (1..r).step_by(2).map(|k| k as f64).product();
                        dfact * variance.powi(r as i32 / 2)
                    }
                    NoiseSpec::Zero | NoiseSpec::DependentRule(_) => 0.0,
                }
            })
            .collect()
    }

    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseSpec::IndependentUniform { sigma } => Uniform::new(-sigma, *sigma).expect("validated").sample(rng),
            NoiseSpec::IndependentGaussian { variance } => {
                Normal::new(0.0, variance.sqrt()).expect("validated").sample(rng)
            }
            NoiseSpec::Zero | NoiseSpec::DependentRule(_) => 0.0,
        }
    }
}

/// Population second-order quantities of an instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationMoments {
    /// `E[x xᵀ]`
    pub sigma: DMatrix<f64>,
    /// `E[x y]`
    pub cross: DVector<f64>,
    /// `E[y²]`
    pub y2: f64,
}

impl PopulationMoments {
    /// `err(θ) = E[y²] - 2 θᵀE[xy] + θᵀΣθ`.
    pub fn err(&self, theta: &DVector<f64>) -> f64 {
        self.y2 - 2.0 * theta.dot(&self.cross) + (theta.transpose() * &self.sigma * theta)[(0, 0)]
    }

    /// Gradient-condition residual `Σθ - E[xy]`.
    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.sigma * theta - &self.cross
    }
}

/// A regression law: covariates, label model and its derived population optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionInstance {
    pub covariates: CovariateSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<AffineTransform>,
    pub noise: NoiseSpec,
    /// Hyperplane used to generate labels.
    pub theta_gen: DVector<f64>,
    /// Population least-squares optimum.
    pub theta_star: DVector<f64>,
    /// `E[x xᵀ]`.
    pub sigma: DMatrix<f64>,
    /// `err(θ*)`.
    pub err_star: f64,
}

impl RegressionInstance {
    pub fn new(covariates: CovariateSpec, noise: NoiseSpec, theta_gen: Vec<f64>) -> Result<Self> {
        Self::build(covariates, None, noise, theta_gen)
    }

    pub fn with_transform(
        covariates: CovariateSpec,
        transform: AffineTransform,
        noise: NoiseSpec,
        theta_gen: Vec<f64>,
    ) -> Result<Self> {
        Self::build(covariates, Some(transform), noise, theta_gen)
    }

    fn build(
        covariates: CovariateSpec,
        transform: Option<AffineTransform>,
        noise: NoiseSpec,
        theta_gen: Vec<f64>,
    ) -> Result<Self> {
        for m in &covariates.marginals {
            m.validate()?;
        }
        noise.validate()?;
        let dz = covariates.dim();
        let d = match &transform {
            Some(t) => {
                if t.matrix.ncols() != dz || t.matrix.nrows() != t.shift.len() {
                    return Err(Error::InvalidSpec("affine transform shape mismatch".into()));
                }
                t.matrix.nrows()
            }
            None => dz,
        };
        if theta_gen.len() != d {
            return Err(Error::InvalidSpec(format!(
                "theta has length {} but covariates have dimension {d}",
                theta_gen.len()
            )));
        }
        if let NoiseSpec::DependentRule(rule) = &noise {
            if transform.is_some() {
                return Err(Error::InvalidSpec("dependent label rules act on untransformed covariates".into()));
            }
            let DependentRule::SpikeZeroed { coord, .. } = rule;
            if *coord >= d {
                return Err(Error::Unregistered(format!("rule coordinate {coord} out of range")));
            }
        }
        let mut inst = Self {
            covariates,
            transform,
            noise,
            theta_gen: DVector::from_vec(theta_gen),
            theta_star: DVector::zeros(d),
            sigma: DMatrix::zeros(d, d),
            err_star: 0.0,
        };
        let pop = inst.population()?;
        inst.theta_star = if inst.noise.is_independent() {
            inst.theta_gen.clone()
        } else {
            pop.sigma
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Singular("population second-moment matrix".into()))?
                .solve(&pop.cross)
        };
        inst.err_star = pop.err(&inst.theta_star).max(0.0);
        inst.sigma = pop.sigma;
        Ok(inst)
    }

    pub fn dim(&self) -> usize {
        self.theta_gen.len()
    }

    /// Second moments of the untransformed draw `z`: `E[z zᵀ]` and `E[z]`.
    fn z_moments(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let dz = self.covariates.dim();
        let mut m = DMatrix::zeros(dz, dz);
        let mut mu = DVector::zeros(dz);
        for (j, marg) in self.covariates.marginals.iter().enumerate() {
            mu[j] = marg.raw_moment(1)?;
            m[(j, j)] = marg.raw_moment(2)?;
        }
        for i in 0..dz {
            for j in 0..dz {
                if i != j {
                    m[(i, j)] = mu[i] * mu[j];
                }
            }
        }
        Ok((m, mu))
    }

    /// `E[xxᵀ]`, `E[xy]`, `E[y²]` from closed forms (atoms exact, bands by quadrature for
    /// dependent rules).
    pub fn population(&self) -> Result<PopulationMoments> {
        let (mz, muz) = self.z_moments()?;
        let (sigma, mu) = match &self.transform {
            Some(t) => {
                let a = &t.matrix;
                let b = &t.shift;
                let amu = a * &muz;
                let s = a * &mz * a.transpose() + &amu * b.transpose() + b * amu.transpose() + b * b.transpose();
                (s, amu + b)
            }
            None => (mz, muz),
        };
        let _ = mu;
        match &self.noise {
            NoiseSpec::DependentRule(rule) => {
                let m = self.masked_second_moment(rule)?;
                let cross = &m * &self.theta_gen;
                let y2 = (self.theta_gen.transpose() * &m * &self.theta_gen)[(0, 0)];
                Ok(PopulationMoments { sigma, cross, y2 })
            }
            noise => {
                let cross = &sigma * &self.theta_gen;
                let w2 = noise.raw_moments(2)[2];
                let y2 = (self.theta_gen.transpose() * &sigma * &self.theta_gen)[(0, 0)] + w2;
                Ok(PopulationMoments { sigma, cross, y2 })
            }
        }
    }

    /// `E[x xᵀ 1{rule active}]` using coordinate independence.
    fn masked_second_moment(&self, rule: &DependentRule) -> Result<DMatrix<f64>> {
        let DependentRule::SpikeZeroed { coord, spike } = *rule;
        let d = self.dim();
        let mc = &self.covariates.marginals[coord];
        let keep = move |x: f64| if x.abs() != spike { 1.0 } else { 0.0 };
        let p_keep = mc.expect(&keep);
        let e1 = mc.expect(&|x| x * keep(x));
        let e2 = mc.expect(&|x| x * x * keep(x));
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for j in 0..d {
            mean[j] = self.covariates.marginals[j].raw_moment(1)?;
            sq[j] = self.covariates.marginals[j].raw_moment(2)?;
        }
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = match (i == coord, j == coord) {
                    (true, true) => e2,
                    (true, false) => e1 * mean[j],
                    (false, true) => mean[i] * e1,
                    (false, false) if i == j => sq[i] * p_keep,
                    (false, false) => mean[i] * mean[j] * p_keep,
                };
            }
        }
        Ok(m)
    }

    /// Raw moments `E[(y - ⟨x, θ⟩)^r]`, `r = 0..=max_order`.
    pub fn residual_moments(&self, theta: &DVector<f64>, max_order: usize) -> Result<Vec<f64>> {
        let dz = self.covariates.dim();
        let zmom = |j: usize, c: f64| -> Result<Vec<f64>> {
            (0..=max_order)
                .map(|r| Ok(c.powi(r as i32) * self.covariates.marginals[j].raw_moment(r as u32)?))
                .collect()
        };
        let point = |v: f64| -> Vec<f64> { (0..=max_order).map(|r| v.powi(r as i32)).collect() };
        match &self.noise {
            NoiseSpec::DependentRule(DependentRule::SpikeZeroed { coord, spike }) => {
                let (coord, spike) = (*coord, *spike);
                // condition on x_coord: the rest is an independent sum whose coefficients depend
                // only on whether the rule is active.
                let rest = |active: bool| -> Result<Vec<f64>> {
                    let mut acc = point(0.0);
                    for j in (0..dz).filter(|&j| j != coord) {
                        let c = if active { self.theta_gen[j] } else { 0.0 } - theta[j];
                        acc = convolve_moments(&acc, &zmom(j, c)?);
                    }
                    Ok(acc)
                };
                let (on, off) = (rest(true)?, rest(false)?);
                let tg = self.theta_gen[coord];
                let tc = theta[coord];
                let mc = &self.covariates.marginals[coord];
                Ok((0..=max_order)
                    .map(|r| {
                        mc.expect(&|x: f64| {
                            let active = x.abs() != spike;
                            let a = if active { tg * x } else { 0.0 } - tc * x;
                            let m = if active { &on } else { &off };
                            (0..=r).map(|k| binom(r, k) * a.powi(k as i32) * m[r - k]).sum()
                        })
                    })
                    .collect())
            }
            noise => {
                let diff = &self.theta_gen - theta;
                let (coef, constant) = match &self.transform {
                    Some(t) => (t.matrix.transpose() * &diff, t.shift.dot(&diff)),
                    None => (diff.clone(), 0.0),
                };
                let mut acc = point(constant);
                for j in 0..dz {
                    acc = convolve_moments(&acc, &zmom(j, coef[j])?);
                }
                Ok(convolve_moments(&acc, &noise.raw_moments(max_order)))
            }
        }
    }

    fn draw_row<R: rand::Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], x: &mut [f64]) -> f64 {
        for (zj, m) in z.iter_mut().zip(&self.covariates.marginals) {
            *zj = m.sample(rng);
        }
        match &self.transform {
            Some(t) => {
                for i in 0..x.len() {
                    x[i] = t.shift[i] + (0..z.len()).map(|j| t.matrix[(i, j)] * z[j]).sum::<f64>();
                }
            }
            None => x.copy_from_slice(z),
        }
        let lin: f64 = x.iter().zip(self.theta_gen.iter()).map(|(a, b)| a * b).sum();
        match &self.noise {
            NoiseSpec::DependentRule(rule) => {
                if rule.is_active(x) {
                    lin
                } else {
                    0.0
                }
            }
            noise => lin + noise.sample(rng),
        }
    }
}

/// Draws `n` i.i.d. rows; the same `(inst, n, seed)` always yields the same dataset.
pub fn sample_instance(inst: &RegressionInstance, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InsufficientData("sample size must be at least 1".into()));
    }
    let d = inst.dim();
    let mut rng = rng_from_seed(seed);
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    let mut z = vec![0.0; inst.covariates.dim()];
    let mut row = vec![0.0; d];
    for i in 0..n {
        y[i] = inst.draw_row(&mut rng, &mut z, &mut row);
        for j in 0..d {
            x[(i, j)] = row[j];
        }
    }
    let meta = DatasetMeta {
        theta_star: Some(inst.theta_star.iter().cloned().collect()),
        sigma: Some(inst.sigma.row_iter().map(|r| r.iter().cloned().collect()).collect()),
        seed: Some(seed),
        corruption_mask: None,
        generator: Some(GENERATOR_NAME.to_string()),
    };
    Dataset::new(x, y, Some(meta))
}
