use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use xfolio_core::decision_log::run_trading;
use xfolio_core::env::{EnvConfig, PortfolioEnv};
use xfolio_core::explain::{
    exact_shapley, explain_log, kernel_shap, lime_explain, permutation_importance, perturbations,
    write_bundle, Background, ExplainConfig, ExplainError, FeatureStats, FnModel, InstanceSelection,
    KernelSamples, LimeConfig, Perturbation, PredictFn,
};
use xfolio_core::market_data::{align_panel, build_features, split_by_date, DateRange, FillPolicy};
use xfolio_core::policy::{NetConfig, PolicyNet};
use xfolio_core::synthetic::{random_walk_market, weekdays_between};

fn random_net(d: usize, seed: u64) -> PolicyNet {
    let mut net = PolicyNet::init(&NetConfig {
        input_dim: d,
        hidden: vec![12],
        n_outputs: 3,
        seed,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in net.params_mut() {
        *p = rng.random_range(-1.0..1.0);
    }
    net
}

#[test]
fn permutation_importance_ratio_follows_weights() {
    // E|3(x - x')| / E|x - x'| = 3 for i.i.d. columns.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<Vec<f64>> = (0..4000)
        .map(|_| (0..2).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let f = FnModel::new(2, |x: &[f64]| 3.0 * x[0] + x[1]);
    let iv = permutation_importance(&f, &data, 20, 9).unwrap();
    let ratio = iv.values[0] / iv.values[1];
    assert!((ratio - 3.0).abs() < 0.15 * 3.0, "ratio {ratio}");
}

#[test]
fn sampled_kernel_shap_approaches_exact() {
    let d = 12;
    let net = random_net(d, 4);
    let f = PredictFn::new(&net, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bg = Background::new(
        (0..8).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        "random",
    )
    .unwrap();
    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let exact = exact_shapley(&f, &x, &bg).unwrap();
    let scale = exact.phi.iter().map(|p| p.abs()).fold(0.0, f64::max);
    let mut errs = Vec::new();
    for n in [200, 3000] {
        let k = kernel_shap(&f, &x, &bg, KernelSamples::Sampled(n), &mut rng).unwrap();
        assert!(k.additivity_residual().abs() < 1e-10);
        errs.push(exact.phi.iter().zip(&k.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    assert!(errs[1] < 0.05 * scale, "{errs:?} vs scale {scale}");
    assert!(errs[1] < errs[0]);
}

#[test]
fn wide_lime_kernel_is_ordinary_least_squares() {
    let d = 4;
    let f = FnModel::new(d, |x: &[f64]| (x[0] * x[1]).sin() + x[2].powi(2) - 0.5 * x[3]);
    let x = [0.3, -0.7, 1.1, 0.2];
    let stats = FeatureStats {
        mean: vec![0.0; d],
        std: vec![1.0, 0.5, 2.0, 1.5],
    };
    for perturbation in [Perturbation::Gaussian, Perturbation::Uniform] {
        let cfg = LimeConfig {
            n_samples: 3000,
            kernel_width: Some(1e8),
            ridge: 0.0,
            perturbation,
            ..Default::default()
        };
        let lime = lime_explain(&f, &x, &stats, &cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let cloud = perturbations(&x, &stats, &cfg, &mut ChaCha8Rng::seed_from_u64(6));
        let design = DMatrix::from_fn(cloud.len(), d + 1, |i, j| if j == 0 { 1.0 } else { cloud[i].1[j - 1] });
        let y = DVector::from_iterator(cloud.len(), cloud.iter().map(|(z, _)| f.eval_point(z)));
        let beta = (design.transpose() * &design)
            .lu()
            .solve(&(design.transpose() * y))
            .unwrap();
        for j in 0..d {
            assert!((lime.coefficients[j] - beta[j + 1]).abs() < 1e-8, "{j}");
        }
        assert!((lime.intercept - beta[0]).abs() < 1e-8);
    }
}

trait EvalPoint {
    fn eval_point(&self, z: &[f64]) -> f64;
}

impl<M: xfolio_core::explain::ScalarModel> EvalPoint for M {
    fn eval_point(&self, z: &[f64]) -> f64 {
        self.eval(z)
    }
}

struct Fixture {
    train: xfolio_core::market_data::FeatureMatrix,
    trade: xfolio_core::market_data::FeatureMatrix,
    net: PolicyNet,
}

fn fixture() -> Fixture {
    let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
    let dates = weekdays_between(d(2016, 1, 1), d(2016, 12, 31));
    let series = random_walk_market(&["AA", "BB"], &dates, 0.02, 2);
    let features = build_features(&align_panel(&series, FillPolicy::ForwardFill).unwrap()).unwrap();
    let (train, trade) = split_by_date(
        &features,
        DateRange::new(d(2016, 1, 1), d(2016, 9, 30)),
        DateRange::new(d(2016, 10, 1), d(2016, 12, 31)),
    )
    .unwrap();
    let net = PolicyNet::init(&NetConfig {
        input_dim: 8,
        hidden: vec![16],
        n_outputs: 3,
        seed: 3,
    })
    .unwrap();
    Fixture { train, trade, net }
}

fn small_cfg() -> ExplainConfig {
    ExplainConfig {
        background_size: 20,
        importance_repeats: 3,
        shap_samples: KernelSamples::Sampled(300),
        lime: LimeConfig {
            n_samples: 500,
            ..Default::default()
        },
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn bundle_covers_every_output_and_is_reproducible() {
    let fx = fixture();
    let mut env = PortfolioEnv::new(&fx.trade, EnvConfig::default()).unwrap();
    let (log, _) = run_trading(&mut env, &fx.net).unwrap();
    let a = explain_log(&log, &fx.net, &fx.train, &small_cfg()).unwrap();
    let b = explain_log(&log, &fx.net, &fx.train, &small_cfg()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.outputs.len(), 3);
    assert_eq!(a.outputs[0].label, "CASH");
    assert_eq!(a.outputs[2].label, "BB");
    for g in &a.outputs {
        assert_eq!(g.instances.len(), 3);
        assert_eq!(g.by_asset.len(), 2);
        assert_eq!(g.by_indicator.len(), 4);
        for inst in &g.instances {
            assert!(inst.shap.additivity_residual().abs() < 1e-10);
        }
    }
    assert_eq!(a.provenance.instance_dates.first(), Some(&log.records[0].date));
    assert_eq!(a.provenance.instance_dates.last(), Some(&log.records[log.len() - 1].date));

    let dir = tempfile::tempdir().unwrap();
    write_bundle(&a, dir.path()).unwrap();
    let date = a.provenance.instance_dates[1];
    let shap: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("shap_2_{date}.json"))).unwrap()).unwrap();
    let keys: Vec<&String> = shap["phi"].as_object().unwrap().keys().collect();
    assert_eq!(keys, log.feature_names.iter().collect::<Vec<_>>());
    assert_eq!(shap["seed"], a.outputs[2].instances[1].shap_seed);
    for name in ["importance_0.csv", "importance_1_by_asset.csv", "provenance.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let first = std::fs::read(dir.path().join("provenance.json")).unwrap();
    write_bundle(&b, dir.path()).unwrap();
    assert_eq!(std::fs::read(dir.path().join("provenance.json")).unwrap(), first);
}

#[test]
fn instance_selection_filters() {
    let fx = fixture();
    let mut env = PortfolioEnv::new(&fx.trade, EnvConfig::default()).unwrap();
    let (log, _) = run_trading(&mut env, &fx.net).unwrap();

    let mut cfg = small_cfg();
    cfg.instances = InstanceSelection::Spread(0);
    cfg.outputs = Some(vec![1]);
    let global = explain_log(&log, &fx.net, &fx.train, &cfg).unwrap();
    assert_eq!(global.outputs.len(), 1);
    assert!(global.outputs[0].instances.is_empty());
    assert_eq!(global.outputs[0].importance.values.len(), 8);

    let day = log.records[5].date;
    cfg.instances = InstanceSelection::Dates(vec![day]);
    let one = explain_log(&log, &fx.net, &fx.train, &cfg).unwrap();
    assert_eq!(one.outputs[0].instances.len(), 1);
    assert_eq!(one.outputs[0].instances[0].date, day);

    cfg.instances = InstanceSelection::Dates(vec![NaiveDate::from_ymd_opt(2030, 1, 1).unwrap()]);
    assert!(matches!(
        explain_log(&log, &fx.net, &fx.train, &cfg),
        Err(ExplainError::InvalidInput(_))
    ));
    cfg.outputs = Some(vec![3]);
    cfg.instances = InstanceSelection::Spread(1);
    assert!(explain_log(&log, &fx.net, &fx.train, &cfg).is_err());
}

#[test]
fn foreign_model_is_a_log_mismatch() {
    let fx = fixture();
    let mut env = PortfolioEnv::new(&fx.trade, EnvConfig::default()).unwrap();
    let (log, _) = run_trading(&mut env, &fx.net).unwrap();
    let mut other = fx.net.clone();
    other.params_mut()[0] += 0.5;
    assert!(matches!(
        explain_log(&log, &other, &fx.train, &small_cfg()),
        Err(ExplainError::LogModelMismatch(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn efficiency_holds_for_random_nets(seed in 0u64..10_000, d in 2usize..9, rows in 1usize..6) {
        let net = random_net(d, seed);
        let f = PredictFn::new(&net, (seed % 3) as usize).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bg = Background::new(
            (0..rows).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
            "random",
        ).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let e = exact_shapley(&f, &x, &bg).unwrap();
        let k = kernel_shap(&f, &x, &bg, KernelSamples::All, &mut rng).unwrap();
        prop_assert!(e.additivity_residual().abs() < 1e-10);
        prop_assert!(k.additivity_residual().abs() < 1e-10);
        for j in 0..d {
            prop_assert!((e.phi[j] - k.phi[j]).abs() < 1e-9);
        }
    }
}
