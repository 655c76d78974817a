use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use robreg::contamination::{contaminate, AdversarySpec, Strategy};
use robreg::diagnostics::{identifiability_check, IdentMode};
use robreg::estimators::{
    ols, robust_gd, sos_solve, subset_search, RobustGdConfig, RobustMeanMethod, SosConfig, SosMode, SubsetConfig,
};
use robreg::harness::{build_pair, fit_slope, run_sweep, ExperimentConfig, ResultTable};
use robreg::lb::pair_report;
use robreg::model::{read_dataset, sample_instance, write_dataset, CovariateSpec, Marginal, NoiseSpec, RegressionInstance};
use robreg::pseudomoments::{dump_sdp, DEFAULT_MEMORY_BUDGET};

#[derive(Parser)]
#[command(name = "robreg", version, about = "Outlier-robust linear regression experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from an instance.
    Gen(GenArgs),
    /// Replace floor(eps*n) rows of a dataset.
    Contaminate(ContaminateArgs),
    /// Run one estimator on a dataset.
    Estimate(EstimateArgs),
    /// Run an eps sweep from a config file.
    Sweep(SweepArgs),
    /// Lower-bound pair report and identifiability table.
    Lb(LbArgs),
    /// Fit log-log slopes from a results.csv.
    Slopes(SlopesArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "gaussian")]
    covariates: String,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "uniform")]
    noise: String,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Comma-separated generating hyperplane; defaults to all ones.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    /// Student's t degrees of freedom.
    #[arg(long)]
    nu: Option<f64>,
    /// Sample one side of a lower-bound pair instead.
    #[arg(long)]
    pair: Option<String>,
    #[arg(long, default_value_t = 0.04)]
    param: f64,
    #[arg(long, default_value_t = 1)]
    side: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ContaminateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value = "leverage_plant")]
    strategy: String,
    #[arg(long, default_value_t = 10.0)]
    magnitude: f64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    slope: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    direction: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    y0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// ols, gd, rgd, subset or sos.
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long)]
    step: Option<f64>,
    /// Robust mean for rgd: filter or trimmed.
    #[arg(long, default_value = "filter")]
    mean: String,
    /// Hypercontractivity budget (subset, sos).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    ncm_budget: Option<f64>,
    #[arg(long)]
    no_ncm: bool,
    /// Probe directions; defaults to max(4, d).
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_MEMORY_BUDGET)]
    memory_budget: f64,
    /// Write the relaxation, rounded slacks and residual history as JSON.
    #[arg(long)]
    dump_sdp: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `sweep.output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `sweep.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct LbArgs {
    /// true_linear, dependent, bounded_cov or mean_shift.
    #[arg(long)]
    kind: String,
    /// eps, or delta for mean_shift.
    #[arg(long, alias = "delta")]
    eps: f64,
    #[arg(long, default_value_t = 4)]
    k: u32,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SlopesArgs {
    #[arg(long)]
    input: PathBuf,
    /// Restrict to one estimator.
    #[arg(long)]
    estimator: Option<String>,
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn gen(a: GenArgs) -> anyhow::Result<()> {
    let inst = match &a.pair {
        Some(kind) => {
            let p = build_pair(kind, a.param)?;
            match a.side {
                1 => p.d1,
                2 => p.d2,
                s => anyhow::bail!("--side {s}: expected 1 or 2"),
            }
        }
        None => {
            let m = match a.covariates.as_str() {
                "gaussian" => Marginal::gaussian(0.0, 1.0),
                "uniform" => Marginal::uniform(-1.0, 1.0),
                "student_t" => Marginal::StudentT {
                    nu: a.nu.ok_or_else(|| anyhow::anyhow!("--nu is required for student_t"))?,
                    scale: 1.0,
                },
                other => anyhow::bail!("unknown covariates {other:?}"),
            };
            let noise = match a.noise.as_str() {
                "uniform" => NoiseSpec::IndependentUniform { sigma: a.sigma },
                "gaussian" => NoiseSpec::IndependentGaussian { variance: a.sigma * a.sigma },
                "zero" => NoiseSpec::Zero,
                other => anyhow::bail!("unknown noise {other:?}"),
            };
            let theta = a.theta.clone().unwrap_or_else(|| vec![1.0; a.d]);
            RegressionInstance::new(CovariateSpec::iid(m, a.d)?, noise, theta)?
        }
    };
    let ds = sample_instance(&inst, a.n, a.seed)?;
    write_dataset(&ds, &a.out)?;
    eprintln!("wrote {} rows to {}", ds.n(), a.out.display());
    Ok(())
}

fn contaminate_cmd(a: ContaminateArgs) -> anyhow::Result<()> {
    let ds = read_dataset(&a.input)?;
    let strategy = match a.strategy.as_str() {
        "leverage_plant" => Strategy::LeveragePlant {
            magnitude: a.magnitude,
            slope: a.slope,
            direction: a.direction.clone(),
        },
        "label_flip" => Strategy::LabelFlip { scale: a.scale },
        "oblivious_replace" => Strategy::ObliviousReplace {
            x0: a.x0.clone().unwrap_or_else(|| vec![0.0; ds.d()]),
            y0: a.y0,
        },
        other => anyhow::bail!("unknown strategy {other:?}"),
    };
    let r = contaminate(
        &ds,
        &AdversarySpec {
            eps: a.eps,
            strategy,
            seed: a.seed,
        },
    )?;
    write_dataset(&r.corrupted, &a.out)?;
    eprintln!("replaced {} of {} rows", r.corrupted_indices().len(), ds.n());
    Ok(())
}

fn estimate(a: EstimateArgs) -> anyhow::Result<()> {
    let ds = read_dataset(&a.input)?;
    let report = match a.method.as_str() {
        "ols" => ols(&ds)?,
        "gd" | "rgd" => {
            let cfg = RobustGdConfig {
                step: a.step,
                iters: a.iters,
                method: a.mean.parse::<RobustMeanMethod>()?,
                eps: if a.method == "gd" { 0.0 } else { a.eps },
                ..Default::default()
            };
            let mut r = robust_gd(&ds, &cfg)?;
            r.method = a.method.clone();
            r
        }
        "subset" => {
            let d = SubsetConfig::default();
            subset_search(
                &ds,
                &SubsetConfig {
                    eps: a.eps,
                    lambda: a.lambda.unwrap_or(d.lambda),
                    ncm_budget: a.ncm_budget.unwrap_or(d.ncm_budget),
                    seed: a.seed,
                    ..d
                },
            )?
        }
        "sos" => {
            let cfg = SosConfig {
                eps: a.eps,
                lambda: a.lambda,
                mode: if a.no_ncm { SosMode::NoNcm } else { SosMode::WithNcm },
                probes: a.probes.unwrap_or(ds.d().max(4)),
                c_ncm: a.ncm_budget.unwrap_or(4.0),
                seed: a.seed,
                tol: a.tol,
                max_iter: a.max_iter,
                memory_budget: a.memory_budget,
                ..Default::default()
            };
            let start = std::time::Instant::now();
            let (sys, pd) = sos_solve(&ds, &cfg)?;
            if let Some(p) = &a.dump_sdp {
                emit(&dump_sdp(&sys, Some(&pd)), Some(p))?;
            }
            robreg::estimators::sos_report(&sys, &pd, start.elapsed().as_secs_f64() * 1e3)
        }
        other => anyhow::bail!(robreg::Error::Unregistered(format!("estimator {other:?}"))),
    };
    emit(&serde_json::to_value(&report)?, a.out.as_deref())
}

fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&a.config)?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(o) = a.out {
        cfg.output = Some(o);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if cfg.output.is_none() {
        anyhow::bail!("no output directory: set sweep.output or pass --out");
    }
    let table = run_sweep(&cfg)?;
    print!("{}", table.summary_csv_string()?);
    Ok(())
}

fn lb(a: LbArgs) -> anyhow::Result<()> {
    let pair = build_pair(&a.kind, a.eps)?;
    let report = pair_report(&pair, a.mc_samples, a.seed)?;
    let table: Vec<_> = [IdentMode::Ncm, IdentMode::Arbitrary]
        .into_iter()
        .map(|m| identifiability_check(&pair, a.k, m))
        .collect::<Result<_, _>>()?;
    let mut v = serde_json::to_value(&report)?;
    v["tv"] = json!(report.tv_closed_form);
    v["identifiability"] = serde_json::to_value(&table)?;
    emit(&v, a.out.as_deref())
}

fn slopes(a: SlopesArgs) -> anyhow::Result<()> {
    let table = ResultTable::from_csv_str(&fs::read_to_string(&a.input)?)?;
    let names = match a.estimator {
        Some(e) => vec![e],
        None => table.estimators(),
    };
    let fits: Vec<serde_json::Value> = names
        .iter()
        .map(|e| match fit_slope(&table, e) {
            Ok(f) => serde_json::to_value(f).unwrap_or_default(),
            Err(err) => json!({"estimator": e, "error": err.to_string()}),
        })
        .collect();
    emit(&json!(fits), None)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.cmd {
        Command::Gen(a) => gen(a),
        Command::Contaminate(a) => contaminate_cmd(a),
        Command::Estimate(a) => estimate(a),
        Command::Sweep(a) => sweep(a),
        Command::Lb(a) => lb(a),
        Command::Slopes(a) => slopes(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
