use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EstimatorConfig, ExperimentConfig};
use super::stats::{median, quartiles};
use crate::contamination::contaminate;
use crate::diagnostics::{excess_error, param_error};
use crate::error::{Error, Result};
use crate::estimators::{ols, robust_gd, sos_regress, subset_search, EstimatorReport, RobustGdConfig};
use crate::model::{sample_instance, Dataset, RegressionInstance};

pub const RESULTS_HEADER: [&str; 8] = [
    "eps",
    "estimator",
    "rep",
    "seed",
    "param_error",
    "excess_error",
    "wallclock_ms",
    "flags",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub eps: f64,
    pub estimator: String,
    pub rep: usize,
    pub seed: u64,
    pub param_error: f64,
    pub excess_error: f64,
    pub wallclock_ms: f64,
    /// `;`-separated.
    pub flags: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub eps: f64,
    pub estimator: String,
    pub count: usize,
    pub median_param_error: f64,
    pub q1_param_error: f64,
    pub q3_param_error: f64,
    pub iqr_param_error: f64,
    pub median_excess_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn estimators(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.estimator) {
                out.push(r.estimator.clone());
            }
        }
        out
    }

    pub fn eps_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.rows.iter().map(|r| r.eps).collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Finite errors for one `(ε, estimator)` cell, in row order.
    pub fn cell(&self, eps: f64, estimator: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.eps == eps && r.estimator == estimator).collect()
    }

    /// Median and interquartile range across replications; failed rows are excluded.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for eps in self.eps_values() {
            for est in self.estimators() {
                let cell = self.cell(eps, &est);
                if cell.is_empty() {
                    continue;
                }
                let pe: Vec<f64> = cell.iter().map(|r| r.param_error).filter(|v| v.is_finite()).collect();
                let ee: Vec<f64> = cell.iter().map(|r| r.excess_error).filter(|v| v.is_finite()).collect();
                let (q1, q3) = quartiles(&pe);
                out.push(SummaryRow {
                    eps,
                    estimator: est,
                    count: pe.len(),
                    median_param_error: median(&pe),
                    q1_param_error: q1,
                    q3_param_error: q3,
                    iqr_param_error: q3 - q1,
                    median_excess_error: median(&ee),
                });
            }
        }
        out
    }

    pub fn median_param_error(&self, eps: f64, estimator: &str) -> f64 {
        let v: Vec<f64> = self.cell(eps, estimator).iter().map(|r| r.param_error).filter(|v| v.is_finite()).collect();
        median(&v)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(RESULTS_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                fmt_f(r.eps),
                r.estimator.clone(),
                r.rep.to_string(),
                r.seed.to_string(),
                fmt_f(r.param_error),
                fmt_f(r.excess_error),
                fmt_f(r.wallclock_ms),
                r.flags.clone(),
            ])
            .map_err(csv_err)?;
        }
        into_string(w)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header != RESULTS_HEADER {
            return Err(Error::Parse { line: 1, msg: format!("unexpected header {header:?}") });
        }
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            let num = |k: usize| -> Result<f64> {
                rec[k].parse().map_err(|_| Error::Parse { line, msg: format!("bad number {:?} in row {}", &rec[k], i + 1) })
            };
            let int = |k: usize| -> Result<u64> {
                rec[k].parse().map_err(|_| Error::Parse { line, msg: format!("bad integer {:?} in row {}", &rec[k], i + 1) })
            };
            rows.push(ResultRow {
                eps: num(0)?,
                estimator: rec[1].to_string(),
                rep: int(2)? as usize,
                seed: int(3)?,
                param_error: num(4)?,
                excess_error: num(5)?,
                wallclock_ms: num(6)?,
                flags: rec[7].to_string(),
            });
        }
        Ok(Self { rows })
    }

    pub fn summary_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "eps",
            "estimator",
            "count",
            "median_param_error",
            "q1_param_error",
            "q3_param_error",
            "iqr_param_error",
            "median_excess_error",
        ])
        .map_err(csv_err)?;
        for s in self.summary() {
            w.write_record([
                fmt_f(s.eps),
                s.estimator,
                s.count.to_string(),
                fmt_f(s.median_param_error),
                fmt_f(s.q1_param_error),
                fmt_f(s.q3_param_error),
                fmt_f(s.iqr_param_error),
                fmt_f(s.median_excess_error),
            ])
            .map_err(csv_err)?;
        }
        into_string(w)
    }

    /// Writes `results.csv` and `summary.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.csv"), self.to_csv_string()?)?;
        fs::write(dir.join("summary.csv"), self.summary_csv_string()?)?;
        Ok(())
    }
}

/// Shortest representation that round-trips.
fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}

/// Clean samples depend only on the replication, so every ε sees the same draw.
pub fn sample_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(rep as u64)
}

pub fn adversary_seed(base: u64, rep: usize, eps_index: usize) -> u64 {
    sample_seed(base, rep) ^ ((eps_index as u64 + 1) << 40)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ROBREG_THREADS") {
        let t: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("ROBREG_THREADS = {v:?} is not a thread count")))?;
        b = b.num_threads(t.max(1));
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

pub fn run_estimator(est: &EstimatorConfig, ds: &Dataset, eps: f64, seed: u64) -> Result<EstimatorReport> {
    match est {
        EstimatorConfig::Ols => ols(ds),
        EstimatorConfig::Gd { step, iters } => {
            let cfg = RobustGdConfig {
                step: *step,
                iters: *iters,
                ..Default::default()
            };
            let mut rep = robust_gd(ds, &cfg)?;
            rep.method = "gd".into();
            Ok(rep)
        }
        EstimatorConfig::Rgd(c) => robust_gd(ds, &RobustGdConfig { eps, ..c.clone() }),
        EstimatorConfig::Subset(c) => subset_search(ds, &crate::estimators::SubsetConfig { eps, seed, ..c.clone() }),
        EstimatorConfig::Sos(c) => sos_regress(ds, &crate::estimators::SosConfig { eps, seed, ..c.clone() }),
    }
}

fn run_cell(
    cfg: &ExperimentConfig,
    inst: &RegressionInstance,
    eps_index: usize,
    rep: usize,
) -> Vec<ResultRow> {
    let eps = cfg.eps_grid[eps_index];
    let seed = sample_seed(cfg.seed, rep);
    let failed = |est: &str, msg: String| ResultRow {
        eps,
        estimator: est.to_string(),
        rep,
        seed,
        param_error: f64::NAN,
        excess_error: f64::NAN,
        wallclock_ms: 0.0,
        flags: format!("error:{}", msg.replace([',', ';', '\n'], " ")),
    };
    let corrupted = sample_instance(inst, cfg.n, seed)
        .and_then(|ds| contaminate(&ds, &cfg.adversary.at(eps, adversary_seed(cfg.seed, rep, eps_index))));
    let corrupted = match corrupted {
        Ok(c) => c.corrupted,
        Err(e) => return cfg.estimators.iter().map(|est| failed(est.name(), e.to_string())).collect(),
    };
    cfg.estimators
        .iter()
        .map(|est| {
            let start = Instant::now();
            let rep_out = run_estimator(est, &corrupted, eps, seed);
            let ms = if cfg.record_wallclock { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            match rep_out.and_then(|r| {
                let t = r.theta();
                let pe = param_error(&t, &inst.theta_star, &inst.sigma)?;
                let ee = excess_error(inst, &t)?.value.max(0.0);
                Ok((r, pe, ee))
            }) {
                Ok((r, pe, ee)) => ResultRow {
                    eps,
                    estimator: est.name().to_string(),
                    rep,
                    seed,
                    param_error: pe,
                    excess_error: ee,
                    wallclock_ms: ms,
                    flags: r.flags.join(";"),
                },
                Err(e) => failed(est.name(), e.to_string()),
            }
        })
        .collect()
}

/// Runs every `(ε, replication)` cell; per-row failures become flags.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let inst = cfg.instance.resolve()?;
    if let Some(dir) = &cfg.output {
        fs::create_dir_all(dir)?;
    }
    let cells: Vec<(usize, usize)> =
        (0..cfg.eps_grid.len()).flat_map(|e| (0..cfg.reps).map(move |r| (e, r))).collect();
    let pool = thread_pool()?;
    let per_cell: Vec<Vec<ResultRow>> =
        pool.install(|| cells.par_iter().map(|&(e, r)| run_cell(cfg, &inst, e, r)).collect());
    let table = ResultTable {
        rows: per_cell.into_iter().flatten().collect(),
    };
    if let Some(dir) = &cfg.output {
        table.write(dir)?;
    }
    Ok(table)
}
