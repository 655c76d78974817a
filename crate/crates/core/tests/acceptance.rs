//! End-to-end acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;

use robreg::contamination::{contaminate, AdversarySpec, Strategy};
use robreg::diagnostics::{excess_error, hc_coefficient, hc_from_data, lowner_deviation, tv_estimate, HcSource};
use robreg::estimators::{
    ols, plain_gd, robust_gd, sos_solve, subset_search, RobustGdConfig, SubsetConfig,
};
use robreg::harness::{fit_slope, run_sweep, ExperimentConfig};
use robreg::lb::{bounded_cov_pair, dependent_pair, mean_shift_pair, pair_report, true_linear_pair, InstancePair};
use robreg::model::*;
use robreg::pseudomoments::{min_block_eigenvalue, pseudo_expectation, Poly, PseudoDistribution, SosConfig};
use robreg::pseudomoments::ConstraintSystem;
use robreg::quad;
use robreg::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

fn tv_oracle(pair: &InstancePair) -> f64 {
    use robreg::lb::PairKind::*;
    match pair.kind {
        TrueLinear { eps, sigma, .. } => {
            // spike atoms lie beyond σ (full overlap loss); band points lose |x₂|/σ
            let b = eps * sigma;
            eps + (1.0 - eps) * quad::integrate(|t| t.abs() / sigma / (2.0 * b), -b, b, 1e-13)
        }
        DependentNoise { eps } => eps,
        BoundedCovariance { eps } => eps,
        MeanShift { delta } => delta,
    }
}

fn criterion_1() -> Outcome {
    let mut fails = Vec::new();
    let pairs = [
        true_linear_pair(0.05, 1.0, 4).unwrap(),
        dependent_pair(0.04).unwrap(),
        bounded_cov_pair(0.1).unwrap(),
        mean_shift_pair(0.04).unwrap(),
    ];
    for p in &pairs {
        let tv = tv_estimate(p).unwrap();
        let oracle = tv_oracle(p);
        if (tv - oracle).abs() > 1e-6 || (p.tv_closed_form() - oracle).abs() > 1e-6 {
            fails.push(format!("{} tv {tv} vs {oracle}", p.kind.name()));
        }
    }

    let eps = 0.04_f64;
    let dep = &pairs[1];
    let spike = eps.powf(-0.25);
    let band_xx = quad::integrate(|t| t * t / 2.0, -1.0, 1.0, 1e-14);
    let exx = (1.0 - eps) * band_xx + eps * spike * spike;
    let exy = (1.0 - eps) * band_xx;
    let theta2 = exy / exx;
    let got = dep.d2.theta_star[1];
    if (got - theta2).abs() > 1e-9 {
        fails.push(format!("dependent theta2 {got} vs {theta2}"));
    }

    let bc = pair_report(&pairs[2], 100_000, 0).unwrap();
    let e = 0.1_f64;
    if bc.quantities["e_x2"] != 2.0 + e || (bc.quantities["e_x2_marginal"] - (2.0 + e)).abs() > 1e-12 {
        fails.push(format!("bounded_cov E[x^2] {:?}", bc.quantities));
    }

    let delta = 0.04_f64;
    let ms = &pairs[3];
    let s = delta.powf(-0.25);
    let e2 = delta * s * s + (1.0 - delta);
    let gap_oracle = 1.0 - (1.0 - delta) / e2;
    let gap_impl = (ms.d1.theta_star[0] - ms.d2.theta_star[0]).abs();
    let gap_formula = (delta + delta.sqrt()) / (1.0 + delta.sqrt());
    if (gap_impl - gap_oracle).abs() > 1e-12 {
        fails.push(format!("mean_shift implementation gap {gap_impl} vs oracle {gap_oracle}"));
    }
    if (gap_formula - gap_oracle).abs() > 1e-12 {
        fails.push(format!(
            "mean_shift gap formula (δ+√δ)/(1+√δ) = {gap_formula:.6} vs oracle {gap_oracle:.6} (E[x²] = {e2:.4}, not 1+√δ)"
        ));
    }
    let pass = fails.is_empty();
    outcome(
        pass,
        if pass {
            "tv, theta2, E[x^2] and gap checks agree with oracles".into()
        } else {
            fails.join("; ")
        },
    )
}

fn criterion_2() -> Outcome {
    let mut worst_mc: f64 = 0.0;
    let mut ok = true;
    for (i, eps) in [0.01, 0.05, 0.1].into_iter().enumerate() {
        let p = true_linear_pair(eps, 1.0, 4).unwrap();
        let tv = p.tv_closed_form();
        ok &= tv <= 2.0 * eps;
        let r = pair_report(&p, 1_000_000, 100 + i as u64).unwrap();
        let d = r.checks["tv"].abs_diff;
        worst_mc = worst_mc.max(d);
        ok &= d <= 0.005;
    }
    outcome(ok, format!("tv <= 2 eps at all three eps; worst MC deviation {worst_mc:.5}"))
}

fn criterion_3() -> Outcome {
    let uni = CovariateSpec::iid(Marginal::uniform(-1.0, 1.0), 1).unwrap();
    let hu = hc_coefficient(HcSource::Spec(&uni), 4, 4, 0).unwrap();
    let ok_u = (hu.lower - 1.8).abs() <= 1e-10 && (hu.upper - 1.8).abs() <= 1e-10;
    let gauss = RegressionInstance::new(
        CovariateSpec::iid(Marginal::gaussian(0.0, 1.0), 1).unwrap(),
        NoiseSpec::Zero,
        vec![1.0],
    )
    .unwrap();
    let ds = sample_instance(&gauss, 1_000_000, 3).unwrap();
    let hg = hc_from_data(&ds.x, 4, 0).unwrap();
    let ok_g = (hg.lower - 3.0).abs() <= 0.15;
    let t = CovariateSpec::iid(Marginal::StudentT { nu: 2.1, scale: 1.0 }, 1).unwrap();
    let ok_t = matches!(
        hc_coefficient(HcSource::Spec(&t), 4, 4, 0),
        Err(Error::InfiniteMoment { .. })
    );
    outcome(
        ok_u && ok_g && ok_t,
        format!("uniform {:.12}, gaussian {:.4}, student t infinite moment {ok_t}", hu.lower, hg.lower),
    )
}

fn random_marginal(rng: &mut impl Rng) -> Marginal {
    match rng.random_range(0..4) {
        0 => {
            let a = rng.random_range(-2.0..0.0);
            Marginal::uniform(a, a + rng.random_range(0.5..3.0))
        }
        1 => Marginal::gaussian(rng.random_range(-1.0..1.0), rng.random_range(0.2..3.0)),
        2 => Marginal::DiscreteAtoms {
            values: vec![rng.random_range(-3.0..-0.5), 0.0, rng.random_range(0.5..3.0)],
            probs: vec![0.3, 0.3, 0.4],
        },
        _ => {
            let delta: f64 = rng.random_range(0.01..0.3);
            Marginal::SpikeBand {
                spike: delta.powf(-0.25),
                spike_prob: delta,
                band: rng.random_range(0.1..1.0),
            }
        }
    }
}

fn criterion_4() -> Outcome {
    let mut rng = rng_from_seed(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..5);
        let marginals = (0..d).map(|_| random_marginal(&mut rng)).collect();
        let noise = if rng.random_bool(0.5) {
            NoiseSpec::IndependentUniform {
                sigma: rng.random_range(0.1..2.0),
            }
        } else {
            NoiseSpec::IndependentGaussian {
                variance: rng.random_range(0.1..2.0),
            }
        };
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let inst = RegressionInstance::new(CovariateSpec::new(marginals).unwrap(), noise, theta).unwrap();
        let probe = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let e = excess_error(&inst, &probe).unwrap();
        worst = worst.max((e.direct - e.identity).abs());
    }
    outcome(worst <= 1e-10, format!("max |direct - identity| over 100 instances = {worst:.3e}"))
}

fn criterion_5() -> Outcome {
    let inst = RegressionInstance::new(
        CovariateSpec::iid(Marginal::gaussian(0.0, 1.0), 3).unwrap(),
        NoiseSpec::Zero,
        vec![1.0, -2.0, 0.5],
    )
    .unwrap();
    let ds = sample_instance(&inst, 500, 5).unwrap();
    let eta = 1.0;
    let cfg = RobustGdConfig {
        step: Some(eta),
        iters: 80,
        ..Default::default()
    };
    let rep = robust_gd(&ds, &cfg).unwrap();
    let s = ds.x.transpose() * &ds.x / ds.n() as f64;
    let kappa = s
        .symmetric_eigenvalues()
        .iter()
        .map(|l| (1.0 - eta * l).abs())
        .fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    let mut ok = kappa < 1.0;
    for w in rep.trace.windows(2).take_while(|w| w[0] > 1e-12) {
        let r = w[1] / w[0];
        worst = worst.max(r);
        ok &= r <= kappa * (1.0 + 1e-9);
    }
    let gd = plain_gd(&ds, eta, 80, None).unwrap();
    let bitwise = rep.iterates == gd.iterates;
    outcome(
        ok && bitwise,
        format!("max step ratio {worst:.4} <= kappa_emp {kappa:.4}; bitwise equal to plain GD: {bitwise}"),
    )
}

fn criterion_6() -> Outcome {
    let text = "
        instance.d = 4
        instance.noise = uniform
        instance.sigma = 1
        adversary.strategy = leverage_plant
        adversary.magnitude = 1
        adversary.magnitude_power = 0.25
        adversary.slope = -1
        estimators.list = ols, rgd
        rgd.method = trimmed
        sweep.eps = 0.01, 0.02, 0.04, 0.08
        sweep.reps = 20
        sweep.n = 4000
        sweep.seed = 1
    ";
    let t = run_sweep(&ExperimentConfig::parse(text).unwrap()).unwrap();
    let fit = fit_slope(&t, "rgd").unwrap();
    let rgd = t.median_param_error(0.08, "rgd");
    let ols_err = t.median_param_error(0.08, "ols");
    let ok = (0.55..=0.95).contains(&fit.slope) && rgd <= ols_err / 3.0;
    outcome(
        ok,
        format!(
            "slope {:.4} (r2 {:.3}); at eps 0.08 rgd {rgd:.4} vs ols {ols_err:.4}",
            fit.slope, fit.r2
        ),
    )
}

struct SosRun {
    seed: u64,
    sos_err: f64,
    ols_err: f64,
    subset_err: f64,
    subset_objective: Option<f64>,
    clean_min_slack: f64,
    clean_eq_residual: f64,
    sos_objective: f64,
    tol: f64,
    sys: ConstraintSystem,
    pd: PseudoDistribution,
}

fn sos_runs() -> Vec<SosRun> {
    let inst = RegressionInstance::new(
        CovariateSpec::iid(Marginal::gaussian(0.0, 1.0), 2).unwrap(),
        NoiseSpec::IndependentUniform { sigma: 0.5 },
        vec![1.0, 1.0],
    )
    .unwrap();
    let eps = 1.0 / 6.0;
    (0..10u64)
        .map(|seed| {
            let ds = sample_instance(&inst, 12, seed).unwrap();
            let adv = AdversarySpec {
                eps,
                strategy: Strategy::LeveragePlant {
                    magnitude: 8.0,
                    slope: -1.0,
                    direction: None,
                },
                seed,
            };
            let c = contaminate(&ds, &adv).unwrap();
            let err = |t: &[f64]| (DVector::from_column_slice(t) - &inst.theta_star).norm();
            let o = ols(&c.corrupted).unwrap();
            let sub = subset_search(
                &c.corrupted,
                &SubsetConfig {
                    eps,
                    seed,
                    ncm_budget: 10.0,
                    ..Default::default()
                },
            )
            .unwrap();
            let cfg = SosConfig {
                eps,
                seed,
                ..Default::default()
            };
            let (sys, pd) = sos_solve(&c.corrupted, &cfg).unwrap();
            let rel = sys.relaxation.as_ref().unwrap();
            let back = rel.y_scale / rel.x_scale;
            let theta: Vec<f64> = pd.theta_scaled().iter().map(|v| v * back).collect();
            let w: Vec<f64> = c.mask.iter().map(|&m| 1.0 - m as f64).collect();
            let clean = c.corrupted.select(&c.clean_indices()).unwrap();
            let chk = rel.evaluate_assignment(&w, &ols(&clean).unwrap().theta_hat);
            let sos_objective = pd.stats.objective * rel.y_scale * rel.y_scale;
            SosRun {
                seed,
                sos_err: err(&theta),
                ols_err: err(&o.theta_hat),
                subset_err: err(&sub.theta_hat),
                subset_objective: if sub.has_flag("no_feasible_subset") { None } else { sub.objective },
                clean_min_slack: chk.min_slack,
                clean_eq_residual: chk.eq_residual,
                sos_objective,
                tol: cfg.tol,
                sys,
                pd,
            }
        })
        .collect()
}

fn criterion_7(runs: &[SosRun]) -> Outcome {
    let slack_ok = runs.iter().all(|r| r.clean_min_slack >= 0.0 && r.clean_eq_residual <= 1e-9);
    let resid = runs
        .iter()
        .map(|r| {
            let s = &r.pd.stats;
            s.primal_residual.max(s.affine_residual).max(s.psd_residual)
        })
        .fold(0.0, f64::max);
    let converged = runs.iter().all(|r| r.pd.stats.converged);
    let sos = median(&runs.iter().map(|r| r.sos_err).collect::<Vec<_>>());
    let o = median(&runs.iter().map(|r| r.ols_err).collect::<Vec<_>>());
    let sub = median(&runs.iter().map(|r| r.subset_err).collect::<Vec<_>>());
    let ok = slack_ok && converged && resid <= 1e-5 && sos <= 0.5 * o && sos <= 2.0 * sub;
    let min_slack = runs.iter().map(|r| r.clean_min_slack).fold(f64::INFINITY, f64::min);
    outcome(
        ok,
        format!(
            "median errors sos {sos:.4}, ols {o:.4}, subset {sub:.4}; max residual {resid:.2e}; min clean slack {min_slack:.2e}; all converged {converged}"
        ),
    )
}

fn criterion_8(runs: &[SosRun]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut compared = 0;
    let mut ok = true;
    for r in runs.iter().filter(|r| r.pd.stats.converged) {
        if let Some(best) = r.subset_objective {
            compared += 1;
            let gap = r.sos_objective - best;
            worst = worst.max(gap);
            if gap > 10.0 * r.tol {
                ok = false;
                eprintln!("seed {}: sos {} > subset {}", r.seed, r.sos_objective, best);
            }
        }
    }
    outcome(
        ok && compared > 0,
        format!("{compared} instances compared; max (sos - subset) objective = {worst:.3e}"),
    )
}

fn criterion_9(runs: &[SosRun]) -> Outcome {
    let mut ok = true;
    let mut worst_cs = f64::NEG_INFINITY;
    let mut worst_eig = f64::INFINITY;
    let mut rng = rng_from_seed(9);
    for r in runs.iter().filter(|r| r.pd.stats.converged) {
        let rel = r.sys.relaxation.as_ref().unwrap();
        let d = rel.d;
        ok &= pseudo_expectation(&r.pd, &Poly::constant(1.0, d)).unwrap() == 1.0;
        let eig = min_block_eigenvalue(&r.sys, &r.pd.y);
        worst_eig = worst_eig.min(eig);
        ok &= eig >= -10.0 * r.tol;
        let basis = &rel.moments.monomials[..rel.moments.prefix_len(rel.degree)];
        let mut random_poly = || {
            let c: Vec<f64> = basis.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut p = Poly::zero(d);
            for (q, v) in basis.iter().zip(&c) {
                p.add_term(q.clone(), v / norm);
            }
            p
        };
        for _ in 0..100 {
            let f = random_poly();
            let g = random_poly();
            let fg = pseudo_expectation(&r.pd, &(&f * &g)).unwrap();
            let ff = pseudo_expectation(&r.pd, &(&f * &f)).unwrap();
            let gg = pseudo_expectation(&r.pd, &(&g * &g)).unwrap();
            let excess = fg * fg - ff * gg;
            worst_cs = worst_cs.max(excess);
            ok &= excess <= 10.0 * r.tol;
        }
    }
    outcome(
        ok,
        format!("min block eigenvalue {worst_eig:.2e}; max Cauchy-Schwarz excess {worst_cs:.2e}"),
    )
}

fn criterion_10() -> Outcome {
    let (n, d, delta) = (2000usize, 3usize, 0.1_f64);
    let inst = RegressionInstance::new(
        CovariateSpec::iid(Marginal::gaussian(0.0, 1.0), d).unwrap(),
        NoiseSpec::Zero,
        vec![1.0; d],
    )
    .unwrap();
    let c4 = hc_coefficient(HcSource::Spec(&inst.covariates), 4, 8, 0).unwrap().lower;
    let bound = c4 * (d * d) as f64 / ((n as f64).sqrt() * delta.sqrt());
    let ok_count = (0..200u64)
        .filter(|&t| {
            let ds = sample_instance(&inst, n, 10_000 + t).unwrap();
            lowner_deviation(&ds.x, &inst.sigma).unwrap() <= bound
        })
        .count();
    outcome(ok_count >= 170, format!("{ok_count}/200 trials within bound {bound:.4}"))
}

fn criterion_11() -> Outcome {
    let inst = RegressionInstance::new(
        CovariateSpec::iid(Marginal::gaussian(0.0, 1.0), 2).unwrap(),
        NoiseSpec::IndependentUniform { sigma: 0.5 },
        vec![1.0, 1.0],
    )
    .unwrap();
    let eps = 0.125;
    let mut good = 0;
    for seed in 0..10u64 {
        let ds = sample_instance(&inst, 16, seed).unwrap();
        let adv = AdversarySpec {
            eps,
            strategy: Strategy::LeveragePlant {
                magnitude: 10.0,
                slope: -1.0,
                direction: None,
            },
            seed,
        };
        let c = contaminate(&ds, &adv).unwrap();
        let sub = subset_search(
            &c.corrupted,
            &SubsetConfig {
                eps,
                seed,
                ncm_budget: 10.0,
                ..Default::default()
            },
        )
        .unwrap();
        let e_sub = (sub.theta() - &inst.theta_star).norm();
        let e_ols = (ols(&c.corrupted).unwrap().theta() - &inst.theta_star).norm();
        let excluded = sub.deleted.as_deref() == Some(c.corrupted_indices().as_slice());
        if excluded && e_sub * 5.0 <= e_ols {
            good += 1;
        }
    }
    outcome(good >= 9, format!("{good}/10 seeds exclude both planted points with a 5x gain"))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id:>2}: {} [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    };
    report(1, &criterion_1);
    report(2, &criterion_2);
    report(3, &criterion_3);
    report(4, &criterion_4);
    report(5, &criterion_5);
    report(6, &criterion_6);
    let t = Instant::now();
    let runs = sos_runs();
    let solve_time = t.elapsed().as_secs_f64();
    println!("(shared relaxation solves for criteria 7-9 took {solve_time:.1}s)");
    report(7, &|| criterion_7(&runs));
    report(8, &|| criterion_8(&runs));
    report(9, &|| criterion_9(&runs));
    report(10, &criterion_10);
    report(11, &criterion_11);
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
