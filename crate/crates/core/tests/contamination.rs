use proptest::prelude::{any, prop_assert_eq, proptest, ProptestConfig};
use robreg::contamination::{contaminate, AdversarySpec, Strategy};
use robreg::estimators::ols;
use robreg::lb::true_linear_pair;
use robreg::model::*;

fn gaussian_sample(d: usize, n: usize, seed: u64) -> Dataset {
    let inst = RegressionInstance::new(
        CovariateSpec::iid(Marginal::gaussian(0.0, 1.0), d).unwrap(),
        NoiseSpec::IndependentUniform { sigma: 1.0 },
        vec![1.0; d],
    )
    .unwrap();
    sample_instance(&inst, n, seed).unwrap()
}

fn strategies(d: usize) -> Vec<Strategy> {
    let q = RegressionInstance::new(
        CovariateSpec::iid(Marginal::gaussian(5.0, 1.0), d).unwrap(),
        NoiseSpec::Zero,
        vec![-3.0; d],
    )
    .unwrap();
    vec![
        Strategy::HuberMixture { instance: Box::new(q) },
        Strategy::LeveragePlant {
            magnitude: 10.0,
            slope: -1.0,
            direction: None,
        },
        Strategy::LabelFlip { scale: 2.0 },
        Strategy::ObliviousReplace {
            x0: vec![3.0; d],
            y0: -7.0,
        },
    ]
}

#[test]
fn zero_budget_returns_input() {
    let ds = gaussian_sample(2, 30, 0);
    for s in strategies(2) {
        let r = contaminate(&ds, &AdversarySpec { eps: 0.0, strategy: s, seed: 4 }).unwrap();
        assert_eq!(r.corrupted.x, ds.x);
        assert_eq!(r.corrupted.y, ds.y);
        assert!(r.mask.iter().all(|&m| m == 0));
    }
}

#[test]
fn seven_of_a_hundred() {
    let ds = gaussian_sample(3, 100, 1);
    let r = contaminate(
        &ds,
        &AdversarySpec {
            eps: 0.07,
            strategy: strategies(3)[1].clone(),
            seed: 2,
        },
    )
    .unwrap();
    assert_eq!(r.mask.iter().filter(|&&m| m == 1).count(), 7);
    let unchanged = (0..100)
        .filter(|&i| r.corrupted.x.row(i) == ds.x.row(i) && r.corrupted.y[i].to_bits() == ds.y[i].to_bits())
        .count();
    assert_eq!(unchanged, 93);
    assert_eq!(r.corrupted.meta.as_ref().unwrap().corruption_mask.as_ref().unwrap(), &r.mask);
}

#[test]
fn strategy_shapes() {
    let ds = gaussian_sample(2, 50, 3);
    let s = strategies(2);
    let adv = |k: usize| AdversarySpec {
        eps: 0.2,
        strategy: s[k].clone(),
        seed: 9,
    };
    let plant = contaminate(&ds, &adv(1)).unwrap();
    for i in plant.corrupted_indices() {
        assert_eq!(plant.corrupted.x.row(i).iter().cloned().collect::<Vec<_>>(), vec![0.0, 10.0]);
        assert_eq!(plant.corrupted.y[i], -10.0);
    }
    let flip = contaminate(&ds, &adv(2)).unwrap();
    for i in flip.corrupted_indices() {
        assert_eq!(flip.corrupted.x.row(i), ds.x.row(i));
        assert_eq!(flip.corrupted.y[i], -2.0 * ds.y[i]);
    }
    let fixed = contaminate(&ds, &adv(3)).unwrap();
    for i in fixed.corrupted_indices() {
        assert_eq!(fixed.corrupted.y[i], -7.0);
    }
    let huber = contaminate(&ds, &adv(0)).unwrap();
    let idx = huber.corrupted_indices();
    assert_eq!(idx.len(), 10);
    let mean_x: f64 = idx.iter().map(|&i| huber.corrupted.x[(i, 0)]).sum::<f64>() / idx.len() as f64;
    assert!(mean_x > 3.0);
}

#[test]
fn invalid_budgets_rejected() {
    let ds = gaussian_sample(1, 10, 0);
    let s = strategies(1)[2].clone();
    assert!(contaminate(&ds, &AdversarySpec { eps: 0.5, strategy: s.clone(), seed: 0 }).is_err());
    assert!(contaminate(&ds, &AdversarySpec { eps: -0.1, strategy: s.clone(), seed: 0 }).is_err());
    let one = Dataset::from_rows(&[vec![1.0]], &[1.0]).unwrap();
    assert!(contaminate(&one, &AdversarySpec { eps: 0.1, strategy: s, seed: 0 }).is_err());
}

#[test]
fn leverage_plant_flips_planted_coordinate() {
    let eps = 0.1_f64;
    let pair = true_linear_pair(eps, 1.0, 4).unwrap();
    let ds = sample_instance(&pair.d1, 5000, 21).unwrap();
    let r = contaminate(
        &ds,
        &AdversarySpec {
            eps,
            strategy: Strategy::LeveragePlant {
                magnitude: eps.powf(-0.25),
                slope: -1.0,
                direction: None,
            },
            seed: 22,
        },
    )
    .unwrap();
    let fit = ols(&r.corrupted).unwrap();
    assert!(fit.theta_hat[1] < 0.0, "{:?}", fit.theta_hat);
    assert!(ols(&ds).unwrap().theta_hat[1] > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn counting_determinism_and_clean_ols(
        n in 4usize..80,
        d in 1usize..4,
        eps in 0.0f64..0.49,
        k in 0usize..4,
        seed in any::<u64>(),
    ) {
        let ds = gaussian_sample(d, n, seed ^ 0x55);
        let adv = AdversarySpec { eps, strategy: strategies(d)[k].clone(), seed };
        let a = contaminate(&ds, &adv).unwrap();
        let b = contaminate(&ds, &adv).unwrap();
        prop_assert_eq!(&a.corrupted, &b.corrupted);
        prop_assert_eq!(&a.mask, &b.mask);

        let m = (eps * n as f64).floor() as usize;
        prop_assert_eq!(adv.corruption_count(n), m);
        prop_assert_eq!(a.mask.iter().filter(|&&v| v == 1).count(), m);
        prop_assert_eq!(a.mask.len(), n);
        for i in a.clean_indices() {
            prop_assert_eq!(a.corrupted.x.row(i), ds.x.row(i));
            prop_assert_eq!(a.corrupted.y[i].to_bits(), ds.y[i].to_bits());
        }

        let keep = a.clean_indices();
        let from_corrupted = a.corrupted.select(&keep).unwrap();
        let from_clean = ds.select(&keep).unwrap();
        prop_assert_eq!(&from_corrupted.x, &from_clean.x);
        prop_assert_eq!(&from_corrupted.y, &from_clean.y);
        if keep.len() >= d {
            let t1 = ols(&from_corrupted).unwrap().theta_hat;
            let t2 = ols(&from_clean).unwrap().theta_hat;
            prop_assert_eq!(
                t1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                t2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
