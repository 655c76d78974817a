//! Adversaries that replace exactly `⌊εn⌋` rows of a clean sample.

use nalgebra::DVector;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rng_from_seed, sample_instance, Dataset, DatasetMeta, RegressionInstance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Replaced rows drawn i.i.d. from another instance.
    HuberMixture { instance: Box<RegressionInstance> },
    /// `x = m·u`, `y = s·m` for a unit direction `u` (last axis by default).
    LeveragePlant {
        magnitude: f64,
        slope: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec<f64>>,
    },
    /// `y ← −c·y`, `x` kept.
    LabelFlip { scale: f64 },
    ObliviousReplace { x0: Vec<f64>, y0: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::HuberMixture { .. } => "huber_mixture",
            Strategy::LeveragePlant { .. } => "leverage_plant",
            Strategy::LabelFlip { .. } => "label_flip",
            Strategy::ObliviousReplace { .. } => "oblivious_replace",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub eps: f64,
    pub strategy: Strategy,
    pub seed: u64,
}

impl AdversarySpec {
    pub fn corruption_count(&self, n: usize) -> usize {
        (self.eps * n as f64).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminationResult {
    pub corrupted: Dataset,
    pub mask: Vec<u8>,
    pub strategy: Strategy,
}

impl ContaminationResult {
    pub fn corrupted_indices(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m == 1).map(|(i, _)| i).collect()
    }

    pub fn clean_indices(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m == 0).map(|(i, _)| i).collect()
    }
}

pub fn contaminate(ds: &Dataset, adv: &AdversarySpec) -> Result<ContaminationResult> {
    let n = ds.n();
    let d = ds.d();
    if n < 2 {
        return Err(Error::InsufficientData("contamination needs n >= 2".into()));
    }
    if !(0.0..0.5).contains(&adv.eps) {
        return Err(Error::InvalidSpec(format!("eps = {} must lie in [0, 1/2)", adv.eps)));
    }
    let k = adv.corruption_count(n);
    let mut out = ds.clone();
    let mut mask = vec![0u8; n];
    if k > 0 {
        let mut rng = rng_from_seed(adv.seed);
        let mut idx = index::sample(&mut rng, n, k).into_vec();
        idx.sort_unstable();
        match &adv.strategy {
            Strategy::HuberMixture { instance } => {
                if instance.dim() != d {
                    return Err(Error::InvalidSpec("mixture component dimension mismatch".into()));
                }
                let q = sample_instance(instance, k, adv.seed.wrapping_add(0x9e37_79b9_7f4a_7c15))?;
                for (r, &i) in idx.iter().enumerate() {
                    out.x.set_row(i, &q.x.row(r));
                    out.y[i] = q.y[r];
                }
            }
            Strategy::LeveragePlant {
                magnitude,
                slope,
                direction,
            } => {
                let u = match direction {
                    Some(v) => {
                        let v = DVector::from_column_slice(v);
                        let norm = v.norm();
                        if v.len() != d || !(norm > 0.0) {
                            return Err(Error::InvalidSpec("plant direction must be a nonzero d-vector".into()));
                        }
                        v / norm
                    }
                    None => {
                        let mut e = DVector::zeros(d);
                        e[d - 1] = 1.0;
                        e
                    }
                };
                let row = (&u * *magnitude).transpose();
                for &i in &idx {
                    out.x.set_row(i, &row);
                    out.y[i] = slope * magnitude;
                }
            }
            Strategy::LabelFlip { scale } => {
                for &i in &idx {
                    out.y[i] = -scale * ds.y[i];
                }
            }
            Strategy::ObliviousReplace { x0, y0 } => {
                if x0.len() != d {
                    return Err(Error::InvalidSpec("replacement point dimension mismatch".into()));
                }
                for &i in &idx {
                    for j in 0..d {
                        out.x[(i, j)] = x0[j];
                    }
                    out.y[i] = *y0;
                }
            }
        }
        for &i in &idx {
            mask[i] = 1;
        }
    }
    let mut meta = out.meta.take().unwrap_or_else(DatasetMeta::default);
    meta.corruption_mask = Some(mask.clone());
    out.meta = Some(meta);
    Ok(ContaminationResult {
        corrupted: out,
        mask,
        strategy: adv.strategy.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CovariateSpec, Marginal, NoiseSpec};

    fn clean(n: usize) -> Dataset {
        let cov = CovariateSpec::iid(Marginal::gaussian(0.0, 1.0), 2).unwrap();
        let inst = RegressionInstance::new(cov, NoiseSpec::IndependentUniform { sigma: 1.0 }, vec![1.0, 1.0]).unwrap();
        sample_instance(&inst, n, 5).unwrap()
    }

    #[test]
    fn zero_budget_is_identity() {
        let ds = clean(20);
        let adv = AdversarySpec {
            eps: 0.0,
            strategy: Strategy::LabelFlip { scale: 1.0 },
            seed: 1,
        };
        let r = contaminate(&ds, &adv).unwrap();
        assert_eq!(r.corrupted.x, ds.x);
        assert_eq!(r.corrupted.y, ds.y);
        assert!(r.mask.iter().all(|&m| m == 0));
    }

    #[test]
    fn counting_contract() {
        let ds = clean(100);
        let adv = AdversarySpec {
            eps: 0.07,
            strategy: Strategy::LeveragePlant {
                magnitude: 5.0,
                slope: -1.0,
                direction: None,
            },
            seed: 3,
        };
        let r = contaminate(&ds, &adv).unwrap();
        assert_eq!(r.mask.iter().filter(|&&m| m == 1).count(), 7);
        let same = (0..100)
            .filter(|&i| r.corrupted.x.row(i) == ds.x.row(i) && r.corrupted.y[i] == ds.y[i])
            .count();
        assert_eq!(same, 93);
        assert_eq!(r.corrupted.meta.unwrap().corruption_mask.unwrap(), r.mask);
    }
}
