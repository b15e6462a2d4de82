//! Oracle clustering probabilities and their distance to posterior class
//! probabilities as the outcome dimension grows.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainState, Sampler, SamplerSchedule};
use crate::math::{sample_probs, softmax};
use crate::model::{
    draw_params_with_rng, simulate_meta_covariates, simulate_outcomes, Dataset, Hyperparams, LatentState, ModelConfig,
    PriorConstraints,
};
use crate::rng::{stream, stream_key, Phase};

/// Empirical `P(z_n = h)` from retained class draws.
pub fn class_frequencies(z_draws: &[Vec<usize>], d: usize) -> Result<DMatrix<f64>> {
    let first = z_draws.first().ok_or_else(|| Error::Empty("class draws".into()))?;
    let mut freq = DMatrix::zeros(first.len(), d);
    for z in z_draws {
        if z.len() != first.len() {
            return Err(Error::DimensionMismatch("class draws differ in length".into()));
        }
        for (n, &h) in z.iter().enumerate() {
            if h >= d {
                return Err(Error::InvalidParameter(format!("class label {h} out of range for d={d}")));
            }
            freq[(n, h)] += 1.0;
        }
    }
    Ok(freq / z_draws.len() as f64)
}

/// Runs the sampler with `W` fixed at `w_star` and returns the retained
/// frequency of each class per observation.
pub fn oracle_probability_chain(
    data: &Dataset,
    w_star: &DMatrix<u8>,
    config: &ModelConfig,
    hyper: &Hyperparams,
    schedule: &SamplerSchedule,
) -> Result<DMatrix<f64>> {
    if w_star.shape() != (data.n(), config.q) {
        return Err(Error::DimensionMismatch(format!(
            "w_star is {:?}, expected {:?}",
            w_star.shape(),
            (data.n(), config.q)
        )));
    }
    if w_star.iter().any(|&v| v > 1) {
        return Err(Error::InvalidParameter("w_star must be binary".into()));
    }
    if schedule.n_kept() == 0 {
        return Err(Error::InvalidParameter("schedule retains no sweeps".into()));
    }
    let mut sampler = Sampler::new(config, data, hyper, schedule.clone())?;
    sampler.pinned_w = true;
    let mut state: ChainState = sampler.init_from_prior()?;
    state.latents.w = w_star.clone();
    let mut draws = Vec::with_capacity(schedule.n_kept());
    for iter in 0..schedule.n_iters {
        sampler.sweep(&mut state, iter as u64)?;
        if schedule.keeps(iter) {
            draws.push(state.latents.z.clone());
        }
    }
    class_frequencies(&draws, config.d)
}

fn check_stochastic(m: &DMatrix<f64>, what: &str) -> Result<()> {
    for r in 0..m.nrows() {
        let row = m.row(r);
        if row.iter().any(|v| !(0.0..=1.0 + 1e-9).contains(v)) || (row.sum() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("{what} row {r} is not a probability vector")));
        }
    }
    Ok(())
}

/// `(1 / (N d)) Σ_n Σ_h |P_nh − O_nh|`.
pub fn oracle_distance(posterior: &DMatrix<f64>, oracle: &DMatrix<f64>) -> Result<f64> {
    if posterior.shape() != oracle.shape() {
        return Err(Error::DimensionMismatch(format!(
            "posterior is {:?} but oracle is {:?}",
            posterior.shape(),
            oracle.shape()
        )));
    }
    if posterior.is_empty() {
        return Err(Error::Empty("class probability matrix".into()));
    }
    check_stochastic(posterior, "posterior")?;
    check_stochastic(oracle, "oracle")?;
    Ok((posterior - oracle).abs().sum() / posterior.len() as f64)
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(d - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, d - 1);
            out.push(p);
        }
    }
    out
}

/// Relabels the columns of `posterior` by the class permutation minimizing the
/// distance to `oracle`. Returns the permutation (`new[h] = old[perm[h]]`) and
/// the minimized distance.
pub fn align_classes(posterior: &DMatrix<f64>, oracle: &DMatrix<f64>) -> Result<(Vec<usize>, f64)> {
    let d = posterior.ncols();
    if d > 8 {
        return Err(Error::InvalidParameter(format!("class alignment limited to d <= 8, got {d}")));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for perm in permutations(d) {
        let permuted = DMatrix::from_fn(posterior.nrows(), d, |n, h| posterior[(n, perm[h])]);
        let dist = oracle_distance(&permuted, oracle)?;
        if best.as_ref().is_none_or(|(_, b)| dist < *b) {
            best = Some((perm, dist));
        }
    }
    Ok(best.expect("at least one permutation"))
}

/// Settings of the dimension study; `p` varies, everything else is shared.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleDesign {
    pub n: usize,
    pub q: usize,
    pub d: usize,
    pub px: usize,
    pub pt: usize,
    pub p_grid: Vec<usize>,
    pub n_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl OracleDesign {
    pub fn new(p_grid: Vec<usize>, seed: u64) -> Self {
        Self { n: 1000, q: 2, d: 2, px: 4, pt: 4, p_grid, n_iters: 2000, burn_in: 1000, thin: 1, seed }
    }

    fn schedule(&self, seed: u64) -> SamplerSchedule {
        let mut s = SamplerSchedule::new(self.n_iters, self.burn_in, seed);
        s.thin = self.thin;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub p: usize,
    pub distance: f64,
    /// Class permutation applied to the posterior before comparison.
    pub class_perm: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    pub oracle: DMatrix<f64>,
}

/// Shared class layer and latents, then per `p` a fresh `T`, `G`, `B`, `Y`
/// and a full fit compared against one `W`-pinned oracle chain.
pub fn oracle_convergence_study(design: &OracleDesign) -> Result<OracleReport> {
    let OracleDesign { n, q, d, px, pt, .. } = *design;
    if design.p_grid.is_empty() {
        return Err(Error::InvalidParameter("empty p grid".into()));
    }
    let param_seed = stream_key(design.seed, 0, Phase::Init, 0);

    // A, Γ and Θ come from a draw whose stream starts identically for every p
    let base = ModelConfig::binary(3 * q, q, d, px, pt);
    let base_params = draw_params_with_rng(
        &base,
        &Hyperparams::default_for(&base),
        &simulate_meta_covariates(3 * q, pt, param_seed),
        &mut ChaCha8Rng::seed_from_u64(param_seed),
        &PriorConstraints::simulation_truth(),
    )?;
    let mut rng = stream(design.seed, 0, Phase::Data, 0);
    let x = DMatrix::from_fn(n, px, |_, _| rng.sample(StandardNormal));
    let mut latents = LatentState::new(&base, n);
    for obs in 0..n {
        let xn: Vec<f64> = x.row(obs).iter().copied().collect();
        let h = sample_probs(&softmax(&base_params.class_logits(&xn)), &mut rng);
        latents.z[obs] = h;
        for j in 0..q {
            latents.w[(obs, j)] = rng.random_bool(base_params.alpha[(j, h)]) as u8;
        }
    }

    let per_p: Vec<(usize, ModelConfig, Dataset)> = design
        .p_grid
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let config = ModelConfig::binary(p, q, d, px, pt);
            let meta = simulate_meta_covariates(p, pt, stream_key(design.seed, k as u64, Phase::Data, 1));
            let constraints = PriorConstraints { identity_blocks: p >= 3 * q, ..PriorConstraints::simulation_truth() };
            let mut params = draw_params_with_rng(
                &config,
                &Hyperparams::default_for(&config),
                &meta,
                &mut ChaCha8Rng::seed_from_u64(param_seed),
                &constraints,
            )?;
            params.alpha = base_params.alpha.clone();
            params.gamma = base_params.gamma.clone();
            params.theta = base_params.theta.clone();
            let mut y_rng = stream(design.seed, k as u64, Phase::Data, 2);
            let y = simulate_outcomes(&config, &params, &latents, &mut y_rng)?;
            Ok((p, config, Dataset::new(y, x.clone(), meta)?))
        })
        .collect::<Result<_>>()?;

    // the oracle does not depend on Y, so one chain serves every p
    let (_, config0, data0) = &per_p[0];
    let oracle = oracle_probability_chain(
        data0,
        &latents.w,
        config0,
        &Hyperparams::default_for(config0),
        &design.schedule(stream_key(design.seed, 0, Phase::Z, 0)),
    )?;

    let rows = per_p
        .par_iter()
        .enumerate()
        .map(|(k, (p, config, data))| {
            let schedule = design.schedule(stream_key(design.seed, k as u64, Phase::W, 0));
            let samples = run_chain(data, config, &Hyperparams::default_for(config), &schedule, None)?;
            let posterior = class_frequencies(&samples.z, d)?;
            let (class_perm, distance) = align_classes(&posterior, &oracle)?;
            Ok(OracleRow { p: *p, distance, class_perm })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleReport { rows, oracle })
}
