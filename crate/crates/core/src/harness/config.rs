use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contamination::{AdversarySpec, Strategy};
use crate::error::{Error, Result};
use crate::estimators::{RobustGdConfig, SosConfig, SosMode, SubsetConfig};
use crate::lb;
use crate::model::{CovariateSpec, Marginal, NoiseSpec, RegressionInstance};

pub const REGISTERED_ESTIMATORS: [&str; 5] = ["ols", "gd", "rgd", "subset", "sos"];

/// Where the clean sample comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    Instance(Box<RegressionInstance>),
    /// One side (1 or 2) of a lower-bound pair.
    Pair { pair: String, param: f64, side: u8 },
}

impl InstanceSource {
    pub fn resolve(&self) -> Result<RegressionInstance> {
        match self {
            InstanceSource::Instance(i) => Ok((**i).clone()),
            InstanceSource::Pair { pair, param, side } => {
                let p = build_pair(pair, *param)?;
                match side {
                    1 => Ok(p.d1),
                    2 => Ok(p.d2),
                    s => Err(Error::Config(format!("instance.side = {s}; expected 1 or 2"))),
                }
            }
        }
    }
}

pub fn build_pair(kind: &str, param: f64) -> Result<lb::InstancePair> {
    match kind {
        "true_linear" => lb::true_linear_pair(param, 1.0, 4),
        "dependent" => lb::dependent_pair(param),
        "bounded_cov" => lb::bounded_cov_pair(param),
        "mean_shift" => lb::mean_shift_pair(param),
        other => Err(Error::Unregistered(format!("pair kind {other:?}"))),
    }
}

/// Corruption strategy with an optional `ε^{-p}` scaling of the plant magnitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub strategy: Strategy,
    pub magnitude_power: f64,
}

impl AdversaryConfig {
    pub fn at(&self, eps: f64, seed: u64) -> AdversarySpec {
        let mut strategy = self.strategy.clone();
        if let Strategy::LeveragePlant { magnitude, .. } = &mut strategy {
            if self.magnitude_power != 0.0 && eps > 0.0 {
                *magnitude *= eps.powf(-self.magnitude_power);
            }
        }
        AdversarySpec { eps, strategy, seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EstimatorConfig {
    Ols,
    Gd { step: Option<f64>, iters: usize },
    Rgd(RobustGdConfig),
    Subset(SubsetConfig),
    Sos(SosConfig),
}

impl EstimatorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorConfig::Ols => "ols",
            EstimatorConfig::Gd { .. } => "gd",
            EstimatorConfig::Rgd(_) => "rgd",
            EstimatorConfig::Subset(_) => "subset",
            EstimatorConfig::Sos(_) => "sos",
        }
    }

    pub fn default_for(name: &str) -> Result<Self> {
        Ok(match name {
            "ols" => EstimatorConfig::Ols,
            "gd" => EstimatorConfig::Gd { step: None, iters: 100 },
            "rgd" => EstimatorConfig::Rgd(RobustGdConfig::default()),
            "subset" => EstimatorConfig::Subset(SubsetConfig::default()),
            "sos" => EstimatorConfig::Sos(SosConfig::default()),
            other => return Err(Error::Unregistered(format!("estimator {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub adversary: AdversaryConfig,
    pub estimators: Vec<EstimatorConfig>,
    pub eps_grid: Vec<f64>,
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub record_wallclock: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() {
            return Err(Error::Config("sweep.eps is empty".into()));
        }
        for w in self.eps_grid.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config("sweep.eps must be strictly increasing".into()));
            }
        }
        if self.eps_grid.iter().any(|e| !(0.0..0.5).contains(e)) {
            return Err(Error::Config("sweep.eps values must lie in [0, 1/2)".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("sweep.reps must be >= 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Config("sweep.n must be >= 2".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators.list is empty".into()));
        }
        self.instance.resolve()?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let cfg = Self::from_keys(&mut kv)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_keys(kv: &mut KeyValues) -> Result<Self> {
        let instance = parse_instance(kv)?;
        let d = instance.resolve()?.dim();
        let adversary = parse_adversary(kv, d)?;
        let names: Vec<String> = kv.list("estimators.list")?.unwrap_or_else(|| vec!["ols".into()]);
        let mut estimators = Vec::new();
        for name in &names {
            estimators.push(parse_estimator(kv, name)?);
        }
        Ok(Self {
            instance,
            adversary,
            estimators,
            eps_grid: kv.list("sweep.eps")?.ok_or_else(|| Error::Config("missing sweep.eps".into()))?,
            reps: kv.get("sweep.reps")?.unwrap_or(1),
            n: kv.get("sweep.n")?.ok_or_else(|| Error::Config("missing sweep.n".into()))?,
            seed: kv.get("sweep.seed")?.unwrap_or(0),
            output: kv.get::<String>("sweep.output")?.map(PathBuf::from),
            record_wallclock: kv.get("sweep.record_wallclock")?.unwrap_or(false),
        })
    }
}

fn parse_instance(kv: &mut KeyValues) -> Result<InstanceSource> {
    if let Some(pair) = kv.get::<String>("instance.pair")? {
        let param = kv.get("instance.param")?.ok_or_else(|| Error::Config("missing instance.param".into()))?;
        let side = kv.get("instance.side")?.unwrap_or(1);
        return Ok(InstanceSource::Pair { pair, param, side });
    }
    let d: usize = kv.get("instance.d")?.unwrap_or(1);
    let kind: String = kv.get("instance.covariates")?.unwrap_or_else(|| "gaussian".into());
    let marginal = match kind.as_str() {
        "gaussian" => Marginal::gaussian(kv.get("instance.mean")?.unwrap_or(0.0), kv.get("instance.variance")?.unwrap_or(1.0)),
        "uniform" => Marginal::uniform(kv.get("instance.a")?.unwrap_or(-1.0), kv.get("instance.b")?.unwrap_or(1.0)),
        "student_t" => Marginal::StudentT {
            nu: kv.get("instance.nu")?.ok_or_else(|| Error::Config("missing instance.nu".into()))?,
            scale: kv.get("instance.scale")?.unwrap_or(1.0),
        },
        other => return Err(Error::Config(format!("unknown instance.covariates {other:?}"))),
    };
    let noise_kind: String = kv.get("instance.noise")?.unwrap_or_else(|| "uniform".into());
    let sigma: f64 = kv.get("instance.sigma")?.unwrap_or(1.0);
    let noise = match noise_kind.as_str() {
        "uniform" => NoiseSpec::IndependentUniform { sigma },
        "gaussian" => NoiseSpec::IndependentGaussian { variance: sigma * sigma },
        "zero" => NoiseSpec::Zero,
        other => return Err(Error::Config(format!("unknown instance.noise {other:?}"))),
    };
    let theta: Vec<f64> = kv.list("instance.theta")?.unwrap_or_else(|| vec![1.0; d]);
    if theta.len() != d {
        return Err(Error::Config(format!("instance.theta has {} entries but d = {d}", theta.len())));
    }
    let inst = RegressionInstance::new(CovariateSpec::iid(marginal, d)?, noise, theta)?;
    Ok(InstanceSource::Instance(Box::new(inst)))
}

fn parse_adversary(kv: &mut KeyValues, d: usize) -> Result<AdversaryConfig> {
    let kind: String = kv.get("adversary.strategy")?.unwrap_or_else(|| "leverage_plant".into());
    let strategy = match kind.as_str() {
        "leverage_plant" => Strategy::LeveragePlant {
            magnitude: kv.get("adversary.magnitude")?.unwrap_or(1.0),
            slope: kv.get("adversary.slope")?.unwrap_or(-1.0),
            direction: kv.list("adversary.direction")?,
        },
        "label_flip" => Strategy::LabelFlip {
            scale: kv.get("adversary.scale")?.unwrap_or(1.0),
        },
        "oblivious_replace" => Strategy::ObliviousReplace {
            x0: kv.list("adversary.x0")?.unwrap_or_else(|| vec![0.0; d]),
            y0: kv.get("adversary.y0")?.unwrap_or(0.0),
        },
        "huber_mixture" => {
            let mean: f64 = kv.get("adversary.mean")?.unwrap_or(0.0);
            let variance: f64 = kv.get("adversary.variance")?.unwrap_or(1.0);
            let theta: Vec<f64> = kv.list("adversary.theta")?.unwrap_or_else(|| vec![-1.0; d]);
            let cov = CovariateSpec::iid(Marginal::gaussian(mean, variance), d)?;
            let inst = RegressionInstance::new(cov, NoiseSpec::Zero, theta)?;
            Strategy::HuberMixture { instance: Box::new(inst) }
        }
        other => return Err(Error::Config(format!("unknown adversary.strategy {other:?}"))),
    };
    Ok(AdversaryConfig {
        strategy,
        magnitude_power: kv.get("adversary.magnitude_power")?.unwrap_or(0.0),
    })
}

fn parse_estimator(kv: &mut KeyValues, name: &str) -> Result<EstimatorConfig> {
    let mut cfg = EstimatorConfig::default_for(name)?;
    match &mut cfg {
        EstimatorConfig::Ols => {}
        EstimatorConfig::Gd { step, iters } => {
            *step = kv.get("gd.step")?.or(*step);
            *iters = kv.get("gd.iters")?.unwrap_or(*iters);
        }
        EstimatorConfig::Rgd(c) => {
            c.tau_l = kv.get("rgd.tau_l")?.or(c.tau_l);
            c.tau_u = kv.get("rgd.tau_u")?.or(c.tau_u);
            c.step = kv.get("rgd.step")?.or(c.step);
            c.iters = kv.get("rgd.iters")?.unwrap_or(c.iters);
            c.method = kv.get("rgd.method")?.unwrap_or(c.method);
        }
        EstimatorConfig::Subset(c) => {
            c.lambda = kv.get("subset.lambda")?.unwrap_or(c.lambda);
            c.ncm_budget = kv.get("subset.ncm_budget")?.unwrap_or(c.ncm_budget);
            c.budget = kv.get("subset.budget")?.unwrap_or(c.budget);
            c.probes = kv.get("subset.probes")?.unwrap_or(c.probes);
        }
        EstimatorConfig::Sos(c) => {
            c.lambda = kv.get("sos.lambda")?.or(c.lambda);
            c.mode = match kv.get::<String>("sos.mode")?.as_deref() {
                None | Some("ncm") => SosMode::WithNcm,
                Some("no_ncm") => SosMode::NoNcm,
                Some(other) => return Err(Error::Config(format!("unknown sos.mode {other:?}"))),
            };
            c.probes = kv.get("sos.probes")?.unwrap_or(c.probes);
            c.c_ncm = kv.get("sos.c_ncm")?.unwrap_or(c.c_ncm);
            c.tol = kv.get("sos.tol")?.unwrap_or(c.tol);
            c.max_iter = kv.get("sos.max_iter")?.unwrap_or(c.max_iter);
            c.memory_budget = kv.get("sos.memory_budget")?.unwrap_or(c.memory_budget);
        }
    }
    Ok(cfg)
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// `section.key = value` lines; `#` starts a comment.
struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `key = value`, got {line:?}") })?;
            let k = k.trim();
            if k.split('.').count() != 2 || k.split('.').any(str::is_empty) {
                return Err(Error::Parse { line: i + 1, msg: format!("key {k:?} is not of the form section.key") });
            }
            if entries.insert(k.to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate key {k:?}") });
            }
        }
        Ok(Self { entries })
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        let Some((line, v)) = self.entries.remove(key) else { return Ok(None) };
        v.parse()
            .map(Some)
            .map_err(|_| Error::Parse { line, msg: format!("bad value {v:?} for {key}") })
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        let Some((line, v)) = self.entries.remove(key) else { return Ok(None) };
        v.split(',')
            .map(|s| {
                let s = s.trim();
                s.parse().map_err(|_| Error::Parse { line, msg: format!("bad list item {s:?} for {key}") })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(Error::Parse { line, msg: format!("unknown key {k:?}") }),
        }
    }
}
