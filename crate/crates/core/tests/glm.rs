mod support;

use dlcr::gibbs::conditionals::{beta_row_posterior, g_block_conditional, w_block_conditional, z_conditional};
use dlcr::glm::update_categorical_rows;
use dlcr::math::softmax;
use dlcr::model::{
    draw_params_from_prior, linear_predictor, simulate_dataset, simulate_meta_covariates, Dataset, EntryKind,
    Hyperparams, ModelConfig, Params, PriorConstraints, StandardNormalCovariates,
};
use dlcr::pg::draw_pg1;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{as_categorical, poisson_mh_check, two_level_zscores};

fn categorical_twin(config: &ModelConfig, params: &Params) -> (ModelConfig, Params) {
    let mut cat = config.clone();
    cat.entries = vec![EntryKind::Categorical(2); config.p];
    let mut p = params.clone();
    for coefs in &mut p.beta {
        coefs.push(DVector::zeros(config.q + 1));
    }
    (cat, p)
}

fn instance(seed: u64) -> (ModelConfig, Params, Dataset) {
    let config = ModelConfig::binary(5, 2, 3, 1, 1);
    let meta = simulate_meta_covariates(5, 1, seed);
    let params = draw_params_from_prior(
        &config,
        &Hyperparams::default_for(&config),
        &meta,
        seed + 1,
        &PriorConstraints::default(),
    )
    .unwrap();
    let sim = simulate_dataset(&config, &params, &meta, 6, &mut StandardNormalCovariates, seed + 2).unwrap();
    (config, params, sim.data)
}

#[test]
fn two_level_categorical_conditionals_match_binary() {
    let (config, params, data) = instance(1);
    let (cat_config, cat_params) = categorical_twin(&config, &params);
    for n in 0..data.n() {
        let y: Vec<u32> = data.y.row(n).iter().copied().collect();
        let yc: Vec<u32> = y.iter().map(|&v| as_categorical(v)).collect();
        for z in 0..config.d {
            let a = w_block_conditional(&config, &params, &y, z).unwrap();
            let b = w_block_conditional(&cat_config, &cat_params, &yc, z).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-10);
            }
        }
        let x: Vec<f64> = data.x.row(n).iter().copied().collect();
        let w = [1u8, 0];
        let (za, zb) = (z_conditional(&x, &w, &params).unwrap(), z_conditional(&x, &w, &cat_params).unwrap());
        assert_eq!(za, zb);
    }
    let w = DMatrix::from_fn(data.n(), 2, |n, j| ((n + j) % 2) as u8);
    let t = data.t_design(0);
    let yc: Vec<u32> = data.y.column(0).iter().map(|&v| as_categorical(v)).collect();
    let y0: Vec<u32> = data.y.column(0).iter().copied().collect();
    let a = g_block_conditional(&config, &params, &w, &y0, &t, 0).unwrap();
    let b = g_block_conditional(&cat_config, &cat_params, &w, &yc, &t, 0).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-10);
    }
}

#[test]
fn two_level_categorical_update_matches_binary_update() {
    let actives: Vec<u64> = vec![0b00, 0b01, 0b11, 0b10, 0b11, 0b01, 0b00];
    let y: Vec<u8> = vec![1, 0, 1, 1, 0, 0, 1];
    let hyper = Hyperparams {
        b: 1.0,
        m_beta: DVector::from_vec(vec![0.3, -0.2, 0.1]),
        v_beta: DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]),
        m_gamma: DVector::zeros(1),
        v_gamma: DMatrix::identity(1, 1),
    };
    let start = DVector::from_vec(vec![0.4, -1.0, 0.7]);
    let prec = hyper.v_beta.clone().try_inverse().unwrap();
    let shift = &prec * &hyper.m_beta;

    let mut coefs = vec![start.clone(), DVector::zeros(3)];
    let mut omega = vec![0.0; 2 * actives.len()];
    let yc: Vec<u32> = y.iter().map(|&v| as_categorical(v as u32)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    update_categorical_rows(&mut coefs, &actives, &yc, &mut omega, &prec, &shift, &mut rng).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let om: Vec<f64> = actives.iter().map(|&a| draw_pg1(linear_predictor(&start, a), &mut rng)).collect();
    let designs: Vec<DVector<f64>> = actives
        .iter()
        .map(|&a| DVector::from_fn(3, |k, _| if k == 0 { 1.0 } else { ((a >> (k - 1)) & 1) as f64 }))
        .collect();
    let expect = beta_row_posterior(&hyper, &designs, &om, &y).unwrap().sample(&mut rng);

    assert!((&coefs[0] - &expect).amax() < 1e-10, "{} vs {}", coefs[0], expect);
    assert!(coefs[1].iter().all(|&v| v == 0.0));
    for (a, b) in omega.iter().zip(&om) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn categorical_update_without_observations_draws_the_prior() {
    let prec = DMatrix::identity(2, 2) * 4.0;
    let mean = DVector::from_vec(vec![1.0, -2.0]);
    let shift = &prec * &mean;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let reps = 20_000;
    let mut acc = DVector::zeros(2);
    for _ in 0..reps {
        let mut coefs = vec![DVector::zeros(2); 3];
        update_categorical_rows(&mut coefs, &[], &[], &mut [], &prec, &shift, &mut rng).unwrap();
        acc += &coefs[0] + &coefs[1];
        assert!(coefs[2].iter().all(|&v| v == 0.0));
        let probs = softmax(&coefs.iter().map(|c| c[0]).collect::<Vec<_>>());
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    // each free row has mean `mean`, sd 0.5
    let avg = acc / (2.0 * reps as f64);
    let se = 0.5 / (2.0 * reps as f64).sqrt();
    assert!((avg[0] - 1.0).abs() < 4.0 * se && (avg[1] + 2.0).abs() < 4.0 * se, "{avg}");
}

#[test]
fn poisson_mh_targets_the_exact_posterior() {
    let check = poisson_mh_check(&[2, 0, 3, 1, 1], 100_000, 0.6, 8);
    assert!(check.acceptance > 0.0 && check.acceptance <= 1.0);
    assert!(check.tv < 0.05, "total variation {}", check.tv);
    assert!(check.mean_z.abs() < 3.0, "mean z-score {}", check.mean_z);
}

#[test]
fn two_level_chain_agrees_with_binary_chain() {
    for (i, z) in two_level_zscores(3000, 500, 21).iter().enumerate() {
        assert!(z.abs() < 4.0, "entry {i}: z = {z:.2}");
    }
}
