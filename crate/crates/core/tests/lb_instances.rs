use proptest::prelude::*;
use robreg::lb::*;
use robreg::model::sample_instance;
use robreg::quad;

fn band_second_moment(eta: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    quad::integrate(|t| t * t / (2.0 * eta), -eta, eta, 1e-13)
}

#[test]
fn true_linear_sigma_and_gap() {
    let (eps, sigma, k) = (0.05_f64, 1.0_f64, 4u32);
    let p = true_linear_pair(eps, sigma, k).unwrap();
    let r = pair_report(&p, 100_000, 1).unwrap();
    let s22 = eps.powf(1.0 - 2.0 / k as f64) + (1.0 - eps) * band_second_moment(eps * sigma);
    assert!((r.sigma_matrix[1][1] - s22).abs() < 1e-12);
    assert!((r.param_gap - 2.0 * s22.sqrt()).abs() < 1e-12);
    assert!(r.identity_holds);
    assert_eq!(r.theta1, vec![1.0, 1.0]);
    assert_eq!(r.theta2, vec![1.0, -1.0]);
}

#[test]
fn true_linear_tv_formula() {
    for (eps, sigma) in [(0.01, 0.5), (0.05, 1.0), (0.2, 1.2), (0.4, 0.1)] {
        let p = true_linear_pair(eps, sigma, 4).unwrap();
        // band mass |x₂| ≤ εσ < σ, so each band point contributes |x₂|/σ with mean εσ/2 / σ.
        let oracle = eps + (1.0 - eps) * quad::integrate(|t| t.abs() / sigma / (2.0 * eps * sigma), -eps * sigma, eps * sigma, 1e-13);
        let tv = p.tv_closed_form();
        assert!((tv - oracle).abs() < 1e-12, "{tv} vs {oracle}");
        assert!(tv <= 2.0 * eps);
    }
    let tiny = true_linear_pair(1e-8, 1.0, 6).unwrap();
    assert!(tiny.tv_closed_form() < 2e-8);
}

#[test]
fn true_linear_tv_monte_carlo() {
    let p = true_linear_pair(0.05, 1.0, 4).unwrap();
    let r = pair_report(&p, 1_000_000, 3).unwrap();
    let c = &r.checks["tv"];
    assert!(c.abs_diff < 0.005, "{c:?}");
}

#[test]
fn dependent_pair_oracle() {
    for eps in [0.01_f64, 0.04, 0.1, 0.3] {
        let p = dependent_pair(eps).unwrap();
        let band = band_second_moment(1.0);
        let e_xy = (1.0 - eps) * band;
        let e_xx = (1.0 - eps) * band + eps * eps.powf(-0.5);
        let theta2 = e_xy / e_xx;
        assert!((p.d2.theta_star[1] - theta2).abs() < 1e-9, "{} vs {theta2}", p.d2.theta_star[1]);
        assert!(p.d2.theta_star[0].abs() < 1e-12);
        assert_eq!(p.tv_closed_form(), eps);
        let r = pair_report(&p, 100_000, 0).unwrap();
        assert!((r.param_gap - e_xx.sqrt() * (1.0 - theta2)).abs() < 1e-9);
        assert!(r.gradient_residual_d1 < 1e-12 && r.gradient_residual_d2 < 1e-12);
        assert!(r.claimed.contains_key("theta2"));
    }
}

#[test]
fn dependent_pair_ols_recovers_theta2() {
    let p = dependent_pair(0.04).unwrap();
    let ds = sample_instance(&p.d2, 1_000_000, 17).unwrap();
    let fit = robreg::estimators::ols(&ds).unwrap();
    assert!((fit.theta_hat[1] - p.d2.theta_star[1]).abs() < 0.01);
}

#[test]
fn bounded_cov_moments_and_flag() {
    for eps in [0.1_f64, 0.5, 0.9] {
        let p = bounded_cov_pair(eps).unwrap();
        let r = pair_report(&p, 100_000, 0).unwrap();
        let nu = 2.0 + eps;
        let marginal = eps * nu / (nu - 2.0);
        assert!((r.quantities["e_x2"] - marginal).abs() < 1e-12);
        assert!((r.quantities["e_x2_marginal"] - marginal).abs() < 1e-12);
        assert!(r.hc_coefficient.is_none());
        assert!(r.hc_flag.as_deref().unwrap().contains("infinite"));
        assert_eq!(r.theta1, vec![1.0]);
        assert_eq!(r.theta2, vec![-1.0]);
        assert!((r.param_gap - 2.0 * marginal.sqrt()).abs() < 1e-12);
        assert!(r.tv_closed_form <= eps);
    }
}

#[test]
fn mean_shift_oracle() {
    let delta = 0.04_f64;
    let p = mean_shift_pair(delta).unwrap();
    let r = pair_report(&p, 100_000, 0).unwrap();
    let spike = delta.powf(-0.25);
    let e2 = delta * spike * spike + (1.0 - delta);
    let e4 = delta * spike.powi(4) + (1.0 - delta);
    assert!((r.quantities["e_x2"] - e2).abs() < 1e-12);
    assert!((r.quantities["e_x4"] - e4).abs() < 1e-12);
    let theta2 = (1.0 - delta) / e2;
    assert!((r.theta2[0] - theta2).abs() < 1e-12);
    assert!((r.quantities["theta_gap"] - (1.0 - theta2)).abs() < 1e-12);
    assert_eq!(r.claimed["e_x4"].value, 2.0);
    assert!(r.tv_closed_form == delta);
}

#[test]
fn swapping_sides_preserves_gap_and_tv() {
    let p = dependent_pair(0.1).unwrap();
    let q = p.swapped();
    assert_eq!(q.d1, p.d2);
    assert_eq!(q.tv_closed_form(), p.tv_closed_form());
    let a = pair_report(&p, 10_000, 0).unwrap();
    let b = pair_report(&q, 10_000, 0).unwrap();
    assert!((a.param_gap - b.param_gap).abs() < 1e-12);
}

#[test]
fn small_eps_gives_larger_hc_constant() {
    let c = |eps: f64| {
        let r = pair_report(&true_linear_pair(eps, 1.0, 4).unwrap(), 10_000, 0).unwrap();
        r.hc_coefficient.unwrap().lower
    };
    assert!(c(0.025) > c(0.05));
}

#[test]
fn mc_samples_floor() {
    assert!(pair_report(&dependent_pair(0.1).unwrap(), 9_999, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tv_in_unit_interval(eps in 1e-6f64..0.499, sigma in 0.01f64..1.0) {
        for p in [
            true_linear_pair(eps, sigma, 4).unwrap(),
            dependent_pair(eps).unwrap(),
            bounded_cov_pair(eps).unwrap(),
            mean_shift_pair(eps).unwrap(),
        ] {
            let tv = p.tv_closed_form();
            prop_assert!((0.0..=1.0).contains(&tv));
            prop_assert!(tv <= 2.0 * eps + 1e-15);
        }
    }

    #[test]
    fn true_linear_gap_grows_with_eps(a in 1e-4f64..0.2, b in 1e-4f64..0.2) {
        prop_assume!(a < b);
        let g = |e: f64| 2.0 * true_linear_pair(e, 0.5, 4).unwrap().d1.sigma[(1, 1)].sqrt();
        prop_assert!(g(a) < g(b));
    }
}
