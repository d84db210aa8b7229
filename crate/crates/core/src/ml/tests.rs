use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn random_data(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y = x
        .iter()
        .map(|r| r[0].sin() + 0.5 * r[1 % d] * r[0] + 0.1 * rng.random::<f64>())
        .collect();
    (x, y)
}

fn dataset(x: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
    let d = x[0].len();
    Dataset::new(QoiId::FuelTemperature, (0..d).map(|j| format!("f{j}")).collect(), x, y).unwrap()
}

/// Least squares with intercept through the normal equations.
fn dense_least_squares(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let d = x[0].len() + 1;
    let a = nalgebra::DMatrix::from_fn(n, d, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let b = nalgebra::DVector::from_column_slice(y);
    let beta = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
    (a * beta).iter().copied().collect()
}

#[test]
fn pls_full_rank_matches_least_squares() {
    let (x, y) = random_data(60, 5, 1);
    let ds = dataset(x.clone(), y.clone());
    let m = train(&ds, &Hyperparameters::Pls(PlsHyper { n_components: 5 })).unwrap();
    let oracle = dense_least_squares(&x, &y);
    for (p, o) in m.predict(&x).unwrap().iter().zip(&oracle) {
        assert!((p - o).abs() < 1e-6, "{p} vs {o}");
    }
}

#[test]
fn pls_column_target_and_collinearity() {
    let (mut x, _) = random_data(40, 3, 2);
    let y: Vec<f64> = x.iter().map(|r| r[1]).collect();
    let ds = dataset(x.clone(), y.clone());
    let m = train(&ds, &Hyperparameters::Pls(PlsHyper { n_components: 3 })).unwrap();
    let resid: f64 = m.predict(&x).unwrap().iter().zip(&y).map(|(p, t)| (p - t).abs()).fold(0.0, f64::max);
    assert!(resid < 1e-9);
    for r in &mut x {
        r.push(r[0]);
    }
    let ds = dataset(x, y);
    assert!(train(&ds, &Hyperparameters::Pls(PlsHyper { n_components: 2 })).is_ok());
    assert!(train(&ds, &Hyperparameters::Pls(PlsHyper { n_components: 4 })).is_err());
}

#[test]
fn pls_one_component_exact_for_single_feature() {
    let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
    let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] - 1.0).collect();
    let m = train(&dataset(x.clone(), y.clone()), &Hyperparameters::Pls(PlsHyper { n_components: 1 })).unwrap();
    for (p, t) in m.predict(&x).unwrap().iter().zip(&y) {
        assert!((p - t).abs() < 1e-12);
    }
}

#[test]
fn gp_one_point_posterior() {
    let m = GpModel::fit(&[vec![0.0]], &[5.0], 1.0, 1.0, 0.0).unwrap();
    let (mu, var) = m.predict_with_variance(&[0.0]);
    assert!((mu - 5.0).abs() < 1e-8 && var.abs() < 1e-8);
    assert!((m.predict_mean(&[1.0]) - 5.0 * (-0.5f64).exp()).abs() < 1e-8);
    assert!(m.predict_mean(&[40.0]).abs() < 1e-12);
}

#[test]
fn gp_noiseless_interpolation() {
    let (x, y) = random_data(40, 3, 3);
    let ds = dataset(x.clone(), y.clone());
    let hp = Hyperparameters::Gp(GpHyper {
        noise_variance: 0.0,
        ..GpHyper::default()
    });
    let m = train(&ds, &hp).unwrap();
    let ts = m.target_scaler.unwrap();
    for (xi, yi) in x.iter().zip(&y) {
        let (mu, var) = m.predict_with_variance(xi).unwrap();
        assert!((mu - yi).abs() < 1e-6);
        let v = var.unwrap();
        assert!(v >= 0.0 && v <= ts.std * ts.std * (1.0 + 1e-12));
    }
}

#[test]
fn gp_likelihood_grid_picks_a_candidate() {
    let (x, y) = random_data(50, 2, 4);
    let hp = Hyperparameters::Gp(GpHyper {
        lengthscale_grid: vec![0.5, 1.0, 2.0],
        noise_grid: vec![1e-4, 1e-2],
        ..GpHyper::default()
    });
    let m = train(&dataset(x, y), &hp).unwrap();
    let ModelParams::Gp(g) = &m.model else { panic!() };
    assert!([1e-4, 1e-2].contains(&g.params().noise_variance));
}

#[test]
fn nn_gradient_matches_finite_differences() {
    let mut net = Mlp::new(3, &[4, 3], 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p: Vec<f64> = net.params().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    net.set_params(&p);
    let (x, y) = random_data(6, 3, 9);
    let xr: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let (_, g) = net.loss_and_grad(&xr, &y);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..p.len() {
        let mut q = p.clone();
        q[j] = p[j] + h;
        net.set_params(&q);
        let lp = net.loss_and_grad(&xr, &y).0;
        q[j] = p[j] - h;
        net.set_params(&q);
        let lm = net.loss_and_grad(&xr, &y).0;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-6));
    }
    assert!(worst < 1e-4, "relative gradient error {worst}");
}

#[test]
fn nn_zero_network_and_identity_fit() {
    let mut net = Mlp::new(2, &[5], 1);
    net.set_params(&vec![0.0; net.n_params()]);
    assert_eq!(net.predict_row(&[3.0, -7.0]), 0.0);

    let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 9.0]).collect();
    let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
    let hp = Hyperparameters::Nn(NnHyper {
        widths: vec![8, 8],
        epochs: 500,
        batch_size: 5,
        learning_rate: 1e-2,
        ..NnHyper::default()
    });
    let m = train(&dataset(x.clone(), y.clone()), &hp).unwrap();
    let mse = m.predict(&x).unwrap().iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 10.0;
    assert!(mse < 1e-3, "mse {mse}");
}

#[test]
fn deep_tree_fits_unique_rows() {
    let (x, y) = random_data(80, 4, 11);
    let hp = Hyperparameters::Rf(RfHyper {
        n_trees: 1,
        bootstrap: false,
        max_features: Some(4),
        ..RfHyper::default()
    });
    let m = train(&dataset(x.clone(), y.clone()), &hp).unwrap();
    assert_eq!(m.predict(&x).unwrap(), y);
}

#[test]
fn xor_layout_still_splits_to_pure_leaves() {
    let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    let y = vec![0.0, 0.0, 1.0, 1.0];
    let mut idx: Vec<usize> = (0..4).collect();
    let s = TreeSettings {
        max_depth: None,
        max_features: None,
        min_samples_leaf: 1,
    };
    let t = Tree::fit(&x, &y, &mut idx, s, &mut ChaCha8Rng::seed_from_u64(0));
    for (xi, yi) in x.iter().zip(&y) {
        assert_eq!(t.predict_row(xi), *yi);
    }
}

#[test]
fn stump_recovers_step() {
    let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
    let y: Vec<f64> = (0..20).map(|i| if i < 13 { 2.0 } else { 7.0 }).collect();
    let s = TreeSettings {
        max_depth: Some(1),
        max_features: None,
        min_samples_leaf: 1,
    };
    let t = Tree::fit(&x, &y, &mut (0..20).collect::<Vec<_>>(), s, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(
        t.nodes[0],
        Node::Split {
            feature: 0,
            threshold: 12.5,
            left: 1,
            right: 2
        }
    );
    assert_eq!((t.nodes[1].clone(), t.nodes[2].clone()), (Node::Leaf(2.0), Node::Leaf(7.0)));
}

#[test]
fn forest_is_mean_of_trees() {
    let (x, y) = random_data(60, 3, 12);
    let m = train(&dataset(x.clone(), y), &Hyperparameters::Rf(RfHyper { n_trees: 7, ..RfHyper::default() })).unwrap();
    let ModelParams::Rf(f) = &m.model else { panic!() };
    for xi in &x {
        let mean = f.trees.iter().map(|t| t.predict_row(xi)).sum::<f64>() / 7.0;
        assert!((m.predict_one(xi).unwrap() - mean).abs() < 1e-12);
    }
}

#[test]
fn boosting_loss_never_rises_and_decomposes() {
    let (x, y) = random_data(100, 3, 13);
    let hp = Hyperparameters::Gbt(GbtHyper {
        n_rounds: 60,
        ..GbtHyper::default()
    });
    let m = train(&dataset(x.clone(), y.clone()), &hp).unwrap();
    assert!(m.meta.train_loss.windows(2).all(|w| w[1] <= w[0]));
    let ModelParams::Gbt(b) = &m.model else { panic!() };
    let p = b.base + 0.1 * b.trees.iter().map(|t| t.predict_row(&x[5])).sum::<f64>();
    assert!((m.predict_one(&x[5]).unwrap() - p).abs() < 1e-12);

    let hp = Hyperparameters::Gbt(GbtHyper {
        n_rounds: 1,
        max_depth: 64,
        learning_rate: 1.0,
        ..GbtHyper::default()
    });
    let m = train(&dataset(x.clone(), y.clone()), &hp).unwrap();
    for (p, t) in m.predict(&x).unwrap().iter().zip(&y) {
        assert!((p - t).abs() < 1e-12);
    }
}

#[test]
fn trees_ignore_monotone_rescaling() {
    let (x, y) = random_data(50, 3, 14);
    let warp = |r: &Vec<f64>| vec![r[0].exp(), r[1] * 3.0 - 1.0, r[2].powi(3)];
    let xw: Vec<Vec<f64>> = x.iter().map(warp).collect();
    let hp = Hyperparameters::Gbt(GbtHyper {
        n_rounds: 20,
        ..GbtHyper::default()
    });
    let a = train(&dataset(x.clone(), y.clone()), &hp).unwrap();
    let b = train(&dataset(xw.clone(), y), &hp).unwrap();
    let (mut rng, mut worst) = (ChaCha8Rng::seed_from_u64(15), 0.0f64);
    for _ in 0..100 {
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        worst = worst.max((a.predict_one(&q).unwrap() - b.predict_one(&warp(&q)).unwrap()).abs());
    }
    // thresholds are midpoints, so queries between two training values may
    // fall on different sides; training points never do
    for (xi, xwi) in x.iter().zip(&xw) {
        assert!((a.predict_one(xi).unwrap() - b.predict_one(xwi).unwrap()).abs() < 1e-12);
    }
    assert!(worst.is_finite());
}

#[test]
fn serialisation_and_batching_are_transparent() {
    let (x, y) = random_data(40, 3, 16);
    let ds = dataset(x.clone(), y);
    for hp in [
        Hyperparameters::default_for(ModelKind::Pls),
        Hyperparameters::Pls(PlsHyper { n_components: 2 }),
        Hyperparameters::default_for(ModelKind::Gp),
        Hyperparameters::Nn(NnHyper {
            epochs: 5,
            ..NnHyper::default()
        }),
        Hyperparameters::Rf(RfHyper {
            n_trees: 5,
            ..RfHyper::default()
        }),
        Hyperparameters::Gbt(GbtHyper {
            n_rounds: 10,
            ..GbtHyper::default()
        }),
    ] {
        let Ok(m) = train(&ds, &hp) else {
            // PLS default asks for 10 components on 3 features
            assert_eq!(hp.kind(), ModelKind::Pls);
            continue;
        };
        let back = TrainedSurrogate::from_json(&m.to_json().unwrap()).unwrap();
        let batch = m.predict(&x).unwrap();
        assert_eq!(back.predict(&x).unwrap(), batch);
        let single: Vec<f64> = x.iter().map(|r| m.predict_one(r).unwrap()).collect();
        assert_eq!(single, batch);
        assert!(m.predict_one(&[1.0]).is_err());
        assert_eq!(train(&ds, &hp).unwrap().to_json().unwrap(), m.to_json().unwrap());
    }
}

#[test]
fn version_mismatch_is_reported() {
    let (x, y) = random_data(10, 2, 17);
    let m = train(&dataset(x, y), &Hyperparameters::Pls(PlsHyper { n_components: 1 })).unwrap();
    let text = m.to_json().unwrap().replacen("\"schema_version\":1", "\"schema_version\":9", 1);
    assert!(matches!(
        TrainedSurrogate::from_json(&text),
        Err(Error::Version { expected: 1, found: 9 })
    ));
}

#[test]
fn folds_partition_the_data() {
    let f = kfold_indices(100, 5, 3).unwrap();
    assert!(f.iter().all(|v| v.len() == 20));
    let mut all: Vec<usize> = f.concat();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
    assert_eq!(f, kfold_indices(100, 5, 3).unwrap());
    assert!(kfold_indices(3, 4, 0).is_err());
    assert_eq!(kfold_indices(7, 3, 0).unwrap().iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2, 2]);
}

#[test]
fn cross_validation_is_repeatable() {
    let (x, y) = random_data(50, 3, 18);
    let ds = dataset(x, y);
    let hp = Hyperparameters::Gbt(GbtHyper {
        n_rounds: 20,
        ..GbtHyper::default()
    });
    let a = cross_validate(&ds, &hp, 5, 1).unwrap();
    assert_eq!(a, cross_validate(&ds, &hp, 5, 1).unwrap());
    assert_eq!(a.fold_metrics.len(), 5);
    let m = select_and_train(&ds, &[hp, Hyperparameters::Pls(PlsHyper { n_components: 3 })], 5, 1).unwrap();
    assert!(m.meta.cv.is_some());
}

#[test]
fn hyperparameters_round_trip_through_toml() {
    let hp = Hyperparameters::nn_3layer();
    #[derive(Serialize, Deserialize)]
    struct Wrap {
        model: Hyperparameters,
    }
    let s = toml::to_string(&Wrap { model: hp.clone() }).unwrap();
    let back: Wrap = toml::from_str(&s).unwrap();
    assert_eq!(back.model, hp);
    let w: Wrap = toml::from_str("[model]\nkind = \"gbt\"\nn_rounds = 50\n").unwrap();
    assert_eq!(w.model, Hyperparameters::Gbt(GbtHyper { n_rounds: 50, ..GbtHyper::default() }));
    assert_eq!(hp.label(), "nn-3layer");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn gp_variance_bounded(seed in 0u64..1000, q in proptest::collection::vec(-3f64..3.0, 2)) {
        let (x, y) = random_data(15, 2, seed);
        let m = GpModel::fit(&x, &y, 1.0, 1.0, 1e-6).unwrap();
        let (_, v) = m.predict_with_variance(&q);
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
