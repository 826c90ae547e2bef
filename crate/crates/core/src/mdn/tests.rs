use super::*;
use crate::embedding::TrajectoryWeights;

fn reduced_config(family: Family) -> MdnConfig {
    MdnConfig {
        input_dim: 5,
        hidden: vec![8, 8],
        batch_norm: true,
        dropout_rate: 0.0,
        dropout_after: vec![],
        num_components: 3,
        weight_dim: 4,
        family,
    }
}

fn random_fixture(family: Family, seed: u64) -> (Mdn, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mdn = Mdn::init(reduced_config(family), TrainConfig::default(), &mut rng).unwrap();
    for p in mdn.parameters_mut() {
        for v in p.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let (mean, var) = mdn.running_stats_mut().unwrap();
    for (m, v) in mean.iter_mut().zip(var.iter_mut()) {
        *m = rng.random_range(0.0..1.0);
        *v = rng.random_range(0.5..2.0);
    }
    let phis = (0..3)
        .map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let ws = (0..3)
        .map(|_| (0..4).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    (mdn, phis, ws)
}

/// Largest relative error between analytic and central-difference gradients.
fn max_gradient_error(mdn: &mut Mdn, phis: &[Vec<f64>], ws: &[Vec<f64>], mode: Mode) -> f64 {
    let refs: Vec<&[f64]> = phis.iter().map(Vec::as_slice).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, grads) = mdn.loss_and_gradients(&refs, ws, mode, &mut rng).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let shapes: Vec<usize> = mdn.parameters_mut().iter().map(|p| p.len()).collect();
    for (t, &len) in shapes.iter().enumerate() {
        for j in 0..len {
            let orig = mdn.parameters_mut()[t][j];
            mdn.parameters_mut()[t][j] = orig + h;
            let (lp, _) = mdn.loss_and_gradients(&refs, ws, mode, &mut rng).unwrap();
            mdn.parameters_mut()[t][j] = orig - h;
            let (lm, _) = mdn.loss_and_gradients(&refs, ws, mode, &mut rng).unwrap();
            mdn.parameters_mut()[t][j] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads[t][j];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_eval_mode() {
    for family in [Family::Normal, Family::Laplace] {
        for seed in 0..4 {
            let (mut mdn, phis, ws) = random_fixture(family, seed);
            let err = max_gradient_error(&mut mdn, &phis, &ws, Mode::Eval);
            assert!(err <= 1e-4, "{family} seed {seed}: {err}");
        }
    }
}

#[test]
fn gradients_match_finite_differences_batch_statistics() {
    // dropout is off, so train mode is deterministic and differentiable
    for family in [Family::Normal, Family::Laplace] {
        let (mut mdn, phis, ws) = random_fixture(family, 42);
        let err = max_gradient_error(&mut mdn, &phis, &ws, Mode::Train);
        assert!(err <= 1e-4, "{family}: {err}");
    }
}

#[test]
fn forward_shapes_and_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = MdnConfig::new(6, 20, Family::Laplace);
    let mdn = Mdn::init(cfg, TrainConfig::default(), &mut rng).unwrap();
    for mode in [Mode::Train, Mode::Eval] {
        for _ in 0..5 {
            let phi: Vec<f64> = (0..6).map(|_| rng.random()).collect();
            let p = mdn.forward(&phi, mode, &mut rng).unwrap();
            assert_eq!(p.alpha.len(), 4);
            assert_eq!((p.mu.len(), p.mu[0].len()), (4, 20));
            assert_eq!((p.scale.len(), p.scale[0].len()), (4, 20));
            p.validate().unwrap();
        }
    }
    assert!(matches!(
        mdn.predict(&[0.0; 5]),
        Err(Error::Dimension { expected: 6, got: 5 })
    ));
}

#[test]
fn zero_heads_give_uniform_weights_and_unit_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mdn = Mdn::init(reduced_config(Family::Normal), TrainConfig::default(), &mut rng).unwrap();
    for head in [
        &mut mdn.network.mu_head,
        &mut mdn.network.scale_head,
        &mut mdn.network.alpha_head,
    ] {
        head.w.fill(0.0);
        head.b.fill(0.0);
    }
    let p = mdn.predict(&[0.3, 0.1, 0.9, 0.5, 0.2]).unwrap();
    for a in &p.alpha {
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
    }
    for s in p.scale.iter().flatten() {
        assert!((s - 1.0).abs() < 1e-5);
    }
}

#[test]
fn eval_forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mdn = Mdn::init(MdnConfig::new(4, 6, Family::Normal), TrainConfig::default(), &mut rng).unwrap();
    let phi = [0.2, 0.4, 0.6, 0.8];
    let a = mdn
        .forward(&phi, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap();
    let b = mdn
        .forward(&phi, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(2))
        .unwrap();
    assert_eq!(a, b);
}

fn single_pair() -> Vec<(SimilarityFeature, Vec<TrajectoryWeights>)> {
    vec![(
        SimilarityFeature {
            values: vec![1.0, 0.8, 0.6],
            reference_ids: vec!["a".into(), "b".into(), "c".into()],
        },
        vec![TrajectoryWeights {
            wx: vec![1.0, 2.0, 3.0],
            wy: vec![-1.0, 0.5, 4.0],
        }],
    )]
}

#[test]
fn training_lowers_loss_on_single_pair() {
    let data = single_pair();
    let mut cfg = MdnConfig::new(3, 6, Family::Normal);
    cfg.num_components = 1;
    let tc = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let initial = Mdn::init(cfg.clone(), tc.clone(), &mut ChaCha8Rng::seed_from_u64(tc.seed)).unwrap();
    let before = initial.mean_nll(&data).unwrap();
    let trained = train(&data, &cfg, &tc).unwrap();
    let after = trained.mean_nll(&data).unwrap();
    assert!(after < before, "{after} !< {before}");
    assert!(trained.history().last().unwrap() < &trained.history()[0]);
}

#[test]
fn training_is_bit_reproducible() {
    let data = single_pair();
    let mut cfg = MdnConfig::new(3, 6, Family::Laplace);
    cfg.hidden = vec![16, 16, 16];
    cfg.dropout_after = vec![1, 2];
    let tc = TrainConfig {
        epochs: 5,
        seed: 77,
        ..TrainConfig::default()
    };
    let a = train(&data, &cfg, &tc).unwrap();
    let b = train(&data, &cfg, &tc).unwrap();
    assert_eq!(a, b);
}

#[test]
fn training_preconditions() {
    let cfg = MdnConfig::new(3, 6, Family::Normal);
    let zero_epochs = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(train(&single_pair(), &cfg, &zero_epochs).is_err());
    assert!(train(&[], &cfg, &TrainConfig::default()).is_err());
    let wrong_dim = MdnConfig::new(4, 6, Family::Normal);
    assert!(matches!(
        train(&single_pair(), &wrong_dim, &TrainConfig::default()),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn sampling_statistics_match_mixture() {
    let p = MixtureParams {
        family: Family::Laplace,
        alpha: vec![0.2, 0.5, 0.3],
        mu: vec![vec![-2.0, 1.0], vec![0.5, 3.0], vec![4.0, -1.0]],
        scale: vec![vec![0.5, 1.0], vec![1.5, 0.2], vec![0.7, 0.7]],
    };
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[sample_component(&p.alpha, &mut rng)] += 1;
    }
    for (c, a) in counts.iter().zip(&p.alpha) {
        let se = (a * (1.0 - a) / n as f64).sqrt();
        assert!((*c as f64 / n as f64 - a).abs() <= 4.0 * se);
    }
    let mut sum = [0.0; 2];
    let mut sum_sq = [0.0; 2];
    for _ in 0..n {
        let s = sample_weights(&p, &mut rng);
        for m in 0..2 {
            sum[m] += s[m];
            sum_sq[m] += s[m] * s[m];
        }
    }
    for m in 0..2 {
        let mean = sum[m] / n as f64;
        let var = sum_sq[m] / n as f64 - mean * mean;
        let expected: f64 = (0..3).map(|q| p.alpha[q] * p.mu[q][m]).sum();
        assert!((mean - expected).abs() <= 4.0 * (var / n as f64).sqrt());
    }
}

#[test]
fn model_file_round_trip() {
    use crate::grid::PointSet;
    use crate::similarity::ReferenceMaps;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut cfg = MdnConfig::new(2, 4, Family::Normal);
    cfg.hidden = vec![7, 5, 3];
    cfg.dropout_after = vec![1];
    let mut mdn = Mdn::init(cfg, TrainConfig::default(), &mut rng).unwrap();
    mdn.scaling = TargetScaling {
        mean: vec![0.1, -2.0, 3.0, 0.7],
        std: vec![1.0 / 3.0, 2.0, 0.5, 7.25],
    };
    let refs = ReferenceMaps::new(
        vec!["m0".into(), "m1".into()],
        vec![
            PointSet(vec![crate::Point::new(0.5, 0.5), crate::Point::new(1.0 / 3.0, 2.5)]),
            PointSet(vec![crate::Point::new(3.5, 0.1)]),
        ],
    )
    .unwrap();
    let model = MdnModel::new(
        mdn,
        crate::embedding::BasisConfig::evenly_spaced(2, 0.3),
        crate::embedding::RidgeConfig::default(),
        crate::similarity::KernelConfig::default(),
        refs,
    )
    .unwrap();
    let json = model.to_json().unwrap();
    let back = MdnModel::from_json(&json).unwrap();
    assert_eq!(back.mdn, model.mdn);
    assert_eq!(back.references().point_sets(), model.references().point_sets());
    assert_eq!(back.to_json().unwrap(), json);
    let phi = [0.9, 0.4];
    assert_eq!(back.mdn.predict(&phi).unwrap(), model.mdn.predict(&phi).unwrap());

    let wrong_version = json.replacen("\"format_version\":1", "\"format_version\":99", 1);
    assert!(matches!(
        MdnModel::from_json(&wrong_version),
        Err(Error::ModelFormat(_))
    ));
    let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
    value["mu_head"]["bias"].as_array_mut().unwrap().pop();
    assert!(matches!(
        MdnModel::from_json(&value.to_string()),
        Err(Error::ModelFormat(_))
    ));
    let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
    value["target_scaling"]["std"][1] = serde_json::json!(0.0);
    assert!(matches!(
        MdnModel::from_json(&value.to_string()),
        Err(Error::ModelFormat(_))
    ));
    assert!(MdnModel::from_json(&json[..json.len() / 2]).is_err());
}

#[test]
fn target_scaling_maps_heads_to_weight_space() {
    let mut mdn = Mdn::init(
        reduced_config(Family::Laplace),
        TrainConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    let n = mdn.parameters_mut().len();
    for p in mdn.parameters_mut().into_iter().skip(n - 6) {
        p.fill(0.0);
    }
    mdn.scaling = TargetScaling {
        mean: vec![1.0, 2.0, 3.0, 4.0],
        std: vec![0.5, 2.0, 4.0, 1.0],
    };
    let p = mdn.predict(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
    for q in 0..3 {
        assert_eq!(p.mu[q], mdn.scaling.mean);
        for j in 0..4 {
            assert!((p.scale[q][j] - mdn.scaling.std[j] * (1.0 + 1e-6)).abs() < 1e-12);
        }
    }
}

#[test]
fn standardised_loss_is_weight_space_nll() {
    let (mut mdn, phis, ws) = random_fixture(Family::Normal, 11);
    mdn.scaling = TargetScaling::fit(&[vec![0.0, 1.0, -3.0, 2.0], vec![2.0, 5.0, 1.0, 2.0]]);
    assert_eq!(mdn.scaling.std, vec![1.0, 2.0, 2.0, 1.0]);
    let refs: Vec<&[f64]> = phis.iter().map(Vec::as_slice).collect();
    let (loss, _) = mdn
        .loss_and_gradients(&refs, &ws, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    let params = mdn.predict_batch(&refs).unwrap();
    let direct = nll_loss(&params, &ws).unwrap();
    assert!((loss - direct).abs() < 1e-10, "{loss} vs {direct}");
}

#[test]
fn standardised_training_learns_offset_targets() {
    let data = vec![(
        SimilarityFeature {
            values: vec![1.0, 0.5],
            reference_ids: vec!["a".into(), "b".into()],
        },
        vec![
            TrajectoryWeights {
                wx: vec![100.0, 101.0],
                wy: vec![-50.0, -52.0],
            },
            TrajectoryWeights {
                wx: vec![102.0, 99.0],
                wy: vec![-48.0, -50.0],
            },
        ],
    )];
    let mut cfg = MdnConfig::new(2, 4, Family::Normal);
    cfg.hidden = vec![16, 16];
    cfg.dropout_after = vec![];
    cfg.num_components = 2;
    let tc = TrainConfig {
        epochs: 300,
        ..TrainConfig::default()
    };
    let mdn = train(&data, &cfg, &tc).unwrap();
    assert_eq!(mdn.scaling().mean, vec![101.0, 100.0, -49.0, -51.0]);
    let p = mdn.predict(&[1.0, 0.5]).unwrap();
    let mean: Vec<f64> = (0..4).map(|j| (0..2).map(|q| p.alpha[q] * p.mu[q][j]).sum()).collect();
    for (m, t) in mean.iter().zip(&mdn.scaling().mean) {
        assert!((m - t).abs() < 1.0, "{mean:?}");
    }
}
