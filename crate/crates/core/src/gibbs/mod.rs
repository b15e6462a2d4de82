//! Data-augmented Gibbs sampler.
//!
//! One sweep runs three barriers in order:
//!
//! 1. latents: `z` (collapsed over `ω`), then `w` (block or entrywise);
//! 2. augmentation: every Polya-Gamma variable, drawn from the current state;
//! 3. parameters: `A`, `B`, `Θ`, `G`, `Γ`.
//!
//! The `w` draw integrates the outcome augmentation out, so the outcome `ω`
//! must be refreshed after it and before the `B` rows that consume it. Class
//! `ω` are redrawn per `Γ` row because each row's tilt depends on the rows
//! updated before it; categorical levels are handled the same way.

pub mod conditionals;
pub mod surrogate;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{mh_update_poisson_row, update_categorical_rows, MhTuning};
use crate::math::{logistic, logsumexp, sample_log_weights, spd_inverse, GaussianPosterior};
use crate::model::{
    clamp_alpha, draw_params_with_rng, linear_predictor, row_mask, Dataset, EntryKind, Hyperparams, LatentState, Mask,
    ModelConfig, Params, PriorConstraints,
};
use crate::pg::draw_pg1;
use crate::rng::{stream, Phase};

use conditionals::{
    check_block_q, g_block_log_weights, g_entry_log_odds, g_prior_logits, gaussian_posterior_dense,
    gaussian_posterior_masked, pattern_counts, w_block_log_weights, w_entry_log_odds, z_log_weights, LikTable,
};
pub use surrogate::{surrogate_loglik, SurrogateConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    Block,
    Entrywise,
}

impl std::str::FromStr for UpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(UpdateMode::Block),
            "entrywise" => Ok(UpdateMode::Entrywise),
            _ => Err(Error::Config(format!("update mode must be `block` or `entrywise`, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSchedule {
    pub n_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub w_mode: UpdateMode,
    pub g_mode: UpdateMode,
    pub surrogate: Option<SurrogateConfig>,
    #[serde(default)]
    pub mh: MhTuning,
}

impl SamplerSchedule {
    /// Block updates, thin 1, no surrogate.
    pub fn new(n_iters: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            n_iters,
            burn_in,
            thin: 1,
            seed,
            w_mode: UpdateMode::Block,
            g_mode: UpdateMode::Block,
            surrogate: None,
            mh: MhTuning::default(),
        }
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        self.validate_basic()?;
        if self.w_mode == UpdateMode::Block || self.g_mode == UpdateMode::Block {
            check_block_q(config.q)?;
        }
        if let Some(s) = &self.surrogate {
            s.validate(config.p)?;
        }
        Ok(())
    }

    /// Checks that do not depend on the model dimensions.
    pub fn validate_basic(&self) -> Result<()> {
        if self.burn_in >= self.n_iters {
            return Err(Error::Config(format!(
                "burn-in {} must be smaller than the number of iterations {}",
                self.burn_in, self.n_iters
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        self.mh.validate()
    }

    /// Number of retained samples.
    pub fn n_kept(&self) -> usize {
        (self.n_iters - self.burn_in) / self.thin
    }

    /// Whether sweep `iter` (0-based) is retained.
    pub fn keeps(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter - self.burn_in + 1) % self.thin == 0
    }
}

/// Current parameters and latent variables of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub params: Params,
    pub latents: LatentState,
}

/// Retained draws of one chain.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub params: Vec<Params>,
    pub z: Vec<Vec<usize>>,
    pub w: Vec<DMatrix<u8>>,
    /// `S × N` matrix of `log p(y^{(n)} | w^{(n;s)}, G^{(s)}, B^{(s)})`.
    pub loglik: DMatrix<f64>,
    /// 0-based sweep index of every retained draw.
    pub iterations: Vec<usize>,
    /// Metropolis acceptance rate per count entry, `None` for other kinds.
    pub mh_acceptance: Vec<Option<f64>>,
    pub config: ModelConfig,
    pub schedule: SamplerSchedule,
    /// Set once labels have been canonicalized.
    pub relabeled: bool,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// Sweep driver holding the data and precomputed prior quantities.
pub struct Sampler<'a> {
    pub config: &'a ModelConfig,
    pub data: &'a Dataset,
    pub hyper: &'a Hyperparams,
    pub schedule: SamplerSchedule,
    /// Keep `W` fixed and update only the class layer (`z`, `A`, `Γ`).
    pub pinned_w: bool,
    prec_beta: DMatrix<f64>,
    shift_beta: DVector<f64>,
    prec_gamma: DMatrix<f64>,
    shift_gamma: DVector<f64>,
    prec_theta: DMatrix<f64>,
    shift_theta: DVector<f64>,
    x_rows: Vec<Vec<f64>>,
    x_design: Vec<DVector<f64>>,
    t_design: Vec<DVector<f64>>,
    mh_accepted: Vec<u64>,
    mh_trials: Vec<u64>,
}

impl<'a> Sampler<'a> {
    pub fn new(
        config: &'a ModelConfig,
        data: &'a Dataset,
        hyper: &'a Hyperparams,
        schedule: SamplerSchedule,
    ) -> Result<Self> {
        config.validate()?;
        data.validate(config)?;
        hyper.validate(config)?;
        schedule.validate(config)?;
        let prec_beta = spd_inverse(&hyper.v_beta, "V_beta")?;
        let shift_beta = &prec_beta * &hyper.m_beta;
        let prec_gamma = spd_inverse(&hyper.v_gamma, "V_gamma")?;
        let shift_gamma = &prec_gamma * &hyper.m_gamma;
        let x_rows = (0..data.n()).map(|n| data.x.row(n).iter().copied().collect()).collect();
        let x_design = (0..data.n()).map(|n| data.x_design(n)).collect();
        let t_design = (0..data.p()).map(|i| data.t_design(i)).collect();
        Ok(Self {
            config,
            data,
            hyper,
            schedule,
            pinned_w: false,
            prec_beta,
            shift_beta,
            prec_gamma,
            shift_gamma,
            prec_theta: DMatrix::identity(config.pt + 1, config.pt + 1),
            shift_theta: DVector::zeros(config.pt + 1),
            x_rows,
            x_design,
            t_design,
            mh_accepted: vec![0; config.p],
            mh_trials: vec![0; config.p],
        })
    }

    fn seed(&self) -> u64 {
        self.schedule.seed
    }

    fn n(&self) -> usize {
        self.data.n()
    }

    /// Parameters from the prior, then `z | x` and `w | z` from the generative model.
    pub fn init_from_prior(&self) -> Result<ChainState> {
        let mut rng = stream(self.seed(), 0, Phase::Init, 0);
        let params =
            draw_params_with_rng(self.config, self.hyper, &self.data.t, &mut rng, &PriorConstraints::default())?;
        let mut latents = LatentState::new(self.config, self.n());
        for n in 0..self.n() {
            let logits = params.class_logits(&self.x_rows[n]);
            let h = sample_log_weights(&logits, &mut rng);
            latents.z[n] = h;
            for j in 0..self.config.q {
                latents.w[(n, j)] = rng.random_bool(params.alpha[(j, h)]) as u8;
            }
        }
        Ok(ChainState { params, latents })
    }

    /// Checks a user-supplied starting state.
    pub fn check_state(&self, state: &ChainState) -> Result<()> {
        state.params.validate(self.config)?;
        let l = &state.latents;
        if l.z.len() != self.n() || l.w.shape() != (self.n(), self.config.q) {
            return Err(Error::DimensionMismatch("initial latents do not match the data".into()));
        }
        if l.z.iter().any(|&z| z >= self.config.d) || l.w.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter("initial latents out of range".into()));
        }
        Ok(())
    }

    /// Metropolis acceptance rate per entry so far.
    pub fn mh_acceptance(&self) -> Vec<Option<f64>> {
        self.config
            .entries
            .iter()
            .enumerate()
            .map(|(i, k)| {
                (*k == EntryKind::Count && self.mh_trials[i] > 0)
                    .then(|| self.mh_accepted[i] as f64 / self.mh_trials[i] as f64)
            })
            .collect()
    }

    /// Outcome weights for sweep `iter`: all ones, or the surrogate weights.
    pub fn likelihood_weights(&self, iter: u64) -> Option<Vec<f64>> {
        self.schedule.surrogate.as_ref().map(|s| {
            let mut rng = stream(self.seed(), iter, Phase::Subsample, 0);
            s.draw_weights(self.config.p, &mut rng)
        })
    }

    /// One full sweep.
    pub fn sweep(&mut self, state: &mut ChainState, iter: u64) -> Result<()> {
        let weights = self.likelihood_weights(iter);
        self.update_latents(state, iter, weights.as_deref())?;
        self.update_augmented(state, iter)?;
        self.update_params(state, iter, weights.as_deref())
    }

    /// Draws `z` then `w` for every observation.
    pub fn update_latents(&self, state: &mut ChainState, iter: u64, weights: Option<&[f64]>) -> Result<()> {
        let seed = self.seed();
        let params = &state.params;
        if self.config.d > 1 {
            let w = &state.latents.w;
            let z: Vec<usize> = (0..self.n())
                .into_par_iter()
                .map(|n| {
                    let mut rng = stream(seed, iter, Phase::Z, n as u64);
                    sample_log_weights(&z_log_weights(&self.x_rows[n], row_mask(w, n), params), &mut rng)
                })
                .collect();
            state.latents.z = z;
        }
        if self.pinned_w {
            return Ok(());
        }
        let table = LikTable::new(self.config, params);
        let g_masks: Vec<Mask> = (0..self.config.p).map(|i| params.g_mask(i)).collect();
        let latents = &state.latents;
        let q = self.config.q;
        let masks: Vec<Mask> = (0..self.n())
            .into_par_iter()
            .map(|n| {
                let mut rng = stream(seed, iter, Phase::W, n as u64);
                let y: Vec<u32> = self.data.y.row(n).iter().copied().collect();
                let z = latents.z[n];
                match self.schedule.w_mode {
                    UpdateMode::Block => {
                        sample_log_weights(&w_block_log_weights(&table, &y, z, params, &g_masks, weights), &mut rng)
                            as Mask
                    }
                    UpdateMode::Entrywise => {
                        let mut m = latents.w_mask(n);
                        for j in 0..q {
                            let lo = w_entry_log_odds(&table, &y, m, j, z, params, &g_masks, weights);
                            if rng.random::<f64>() < logistic(lo) {
                                m |= 1 << j;
                            } else {
                                m &= !(1 << j);
                            }
                        }
                        m
                    }
                }
            })
            .collect();
        for (n, m) in masks.into_iter().enumerate() {
            state.latents.set_w_mask(n, m);
        }
        Ok(())
    }

    /// Draws the outcome, class and loading augmentation variables.
    pub fn update_augmented(&self, state: &mut ChainState, iter: u64) -> Result<()> {
        let seed = self.seed();
        let (n_obs, p, q, d) = (self.n(), self.config.p, self.config.q, self.config.d);
        let params = &state.params;

        if !self.pinned_w {
            let w_masks: Vec<Mask> = (0..n_obs).map(|n| state.latents.w_mask(n)).collect();
            let omega_y: Vec<Option<Vec<f64>>> = (0..p)
                .into_par_iter()
                .map(|i| {
                    if self.config.entries[i] != EntryKind::Binary {
                        return Ok(None);
                    }
                    let mut rng = stream(seed, iter, Phase::OmegaY, i as u64);
                    let g = params.g_mask(i);
                    let coef = &params.beta[i][0];
                    (0..n_obs)
                        .map(|n| {
                            let eta = linear_predictor(coef, g & w_masks[n]);
                            if !eta.is_finite() {
                                return Err(Error::NonFinite(format!("outcome logit for entry {i}")));
                            }
                            Ok(draw_pg1(eta, &mut rng))
                        })
                        .collect::<Result<Vec<f64>>>()
                        .map(Some)
                })
                .collect::<Result<_>>()?;
            for (i, om) in omega_y.into_iter().enumerate() {
                if let Some(om) = om {
                    state.latents.omega_y[i] = om;
                }
            }

            let omega_g: Vec<Vec<f64>> = (0..p)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(seed, iter, Phase::OmegaG, i as u64);
                    g_prior_logits(&params.theta, &self.t_design[i])
                        .into_iter()
                        .map(|l| {
                            if !l.is_finite() {
                                return Err(Error::NonFinite(format!("loading logit for row {i}")));
                            }
                            Ok(draw_pg1(l, &mut rng))
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            for (i, row) in omega_g.into_iter().enumerate() {
                for j in 0..q {
                    state.latents.omega_g[(i, j)] = row[j];
                }
            }
        }

        if d > 1 {
            let omega_z: Vec<Vec<f64>> = (0..n_obs)
                .into_par_iter()
                .map(|n| {
                    let mut rng = stream(seed, iter, Phase::OmegaZ, n as u64);
                    let logits = params.class_logits(&self.x_rows[n]);
                    (0..d)
                        .map(|h| {
                            let tilt = class_tilt(&logits, h);
                            if !tilt.is_finite() {
                                return Err(Error::NonFinite(format!("class logit at observation {n}")));
                            }
                            Ok(draw_pg1(tilt, &mut rng))
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            for (n, row) in omega_z.into_iter().enumerate() {
                for h in 0..d {
                    state.latents.omega_z[(n, h)] = row[h];
                }
            }
        }
        Ok(())
    }

    /// Redraws `A`, `B`, `Θ`, `G`, `Γ` in that order.
    pub fn update_params(&mut self, state: &mut ChainState, iter: u64, weights: Option<&[f64]>) -> Result<()> {
        self.update_alpha(state, iter)?;
        if !self.pinned_w {
            self.update_beta(state, iter)?;
            self.update_theta(state, iter)?;
            self.update_g(state, iter, weights)?;
        }
        self.update_gamma(state, iter)
    }

    pub fn update_alpha(&self, state: &mut ChainState, iter: u64) -> Result<()> {
        let (q, d) = (self.config.q, self.config.d);
        let mut ones = DMatrix::<f64>::zeros(q, d);
        let mut zeros = DMatrix::<f64>::zeros(q, d);
        for n in 0..self.n() {
            let h = state.latents.z[n];
            for j in 0..q {
                if state.latents.w[(n, j)] == 1 {
                    ones[(j, h)] += 1.0;
                } else {
                    zeros[(j, h)] += 1.0;
                }
            }
        }
        let b = self.hyper.b;
        for h in 0..d {
            for j in 0..q {
                let mut rng = stream(self.seed(), iter, Phase::Alpha, (h * q + j) as u64);
                let dist = rand_distr::Beta::new(b + ones[(j, h)], b + zeros[(j, h)])
                    .map_err(|e| Error::NonFinite(format!("alpha conditional: {e}")))?;
                state.params.alpha[(j, h)] = clamp_alpha(rng.sample(dist));
            }
        }
        Ok(())
    }

    pub fn update_beta(&mut self, state: &mut ChainState, iter: u64) -> Result<()> {
        let seed = self.seed();
        let n_obs = self.n();
        let w_masks: Vec<Mask> = (0..n_obs).map(|n| state.latents.w_mask(n)).collect();
        let params = &state.params;
        let latents = &state.latents;
        let results: Vec<(Vec<DVector<f64>>, Option<Vec<f64>>, Option<bool>)> = (0..self.config.p)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, iter, Phase::Beta, i as u64);
                let g = params.g_mask(i);
                let actives: Vec<Mask> = w_masks.iter().map(|w| g & w).collect();
                let y: Vec<u32> = self.data.y.column(i).iter().copied().collect();
                let mut coefs = params.beta[i].clone();
                match self.config.entries[i] {
                    EntryKind::Binary => {
                        let omega = &latents.omega_y[i];
                        let post = gaussian_posterior_masked(
                            &self.prec_beta,
                            &self.shift_beta,
                            (0..n_obs).map(|n| (actives[n], omega[n], y[n] as f64 - 0.5)),
                            "beta row",
                        )?;
                        coefs[0] = post.sample(&mut rng);
                        Ok((coefs, None, None))
                    }
                    EntryKind::Categorical(_) => {
                        let mut omega = latents.omega_y[i].clone();
                        update_categorical_rows(
                            &mut coefs,
                            &actives,
                            &y,
                            &mut omega,
                            &self.prec_beta,
                            &self.shift_beta,
                            &mut rng,
                        )?;
                        Ok((coefs, Some(omega), None))
                    }
                    EntryKind::Count => {
                        let accepted = mh_update_poisson_row(
                            &mut coefs[0],
                            &actives,
                            &y,
                            &self.prec_beta,
                            &self.hyper.m_beta,
                            &self.schedule.mh,
                            &mut rng,
                        );
                        Ok((coefs, None, Some(accepted)))
                    }
                }
            })
            .collect::<Result<_>>()?;
        for (i, (coefs, omega, accepted)) in results.into_iter().enumerate() {
            state.params.beta[i] = coefs;
            if let Some(om) = omega {
                state.latents.omega_y[i] = om;
            }
            if let Some(a) = accepted {
                self.mh_trials[i] += 1;
                self.mh_accepted[i] += a as u64;
            }
        }
        Ok(())
    }

    pub fn update_theta(&self, state: &mut ChainState, iter: u64) -> Result<()> {
        let seed = self.seed();
        let rows: Vec<DVector<f64>> = (0..self.config.q)
            .into_par_iter()
            .map(|j| {
                let mut rng = stream(seed, iter, Phase::Theta, j as u64);
                let post = gaussian_posterior_dense(
                    &self.prec_theta,
                    &self.shift_theta,
                    (0..self.config.p).map(|i| {
                        (&self.t_design[i], state.latents.omega_g[(i, j)], state.params.g[(i, j)] as f64 - 0.5)
                    }),
                    "theta row",
                )?;
                Ok(post.sample(&mut rng))
            })
            .collect::<Result<_>>()?;
        for (j, row) in rows.into_iter().enumerate() {
            for k in 0..row.len() {
                state.params.theta[(j, k)] = row[k];
            }
        }
        Ok(())
    }

    pub fn update_g(&self, state: &mut ChainState, iter: u64, weights: Option<&[f64]>) -> Result<()> {
        let seed = self.seed();
        let q = self.config.q;
        let params = &state.params;
        let table = LikTable::new(self.config, params);
        let w_masks: Vec<Mask> = (0..self.n()).map(|n| state.latents.w_mask(n)).collect();
        let rows: Vec<Mask> = (0..self.config.p)
            .into_par_iter()
            .map(|i| {
                let current = params.g_mask(i);
                let weight = weights.map_or(1.0, |w| w[i]);
                if weight == 0.0 {
                    return current;
                }
                let mut rng = stream(seed, iter, Phase::G, i as u64);
                let counts = pattern_counts(&w_masks, self.data.y.column(i).iter().copied());
                let logits = g_prior_logits(&params.theta, &self.t_design[i]);
                match self.schedule.g_mode {
                    UpdateMode::Block => {
                        sample_log_weights(&g_block_log_weights(&table, i, &logits, &counts, weight), &mut rng) as Mask
                    }
                    UpdateMode::Entrywise => {
                        let mut g = current;
                        for j in 0..q {
                            let lo = g_entry_log_odds(&table, i, g, j, logits[j], &counts, weight);
                            if rng.random::<f64>() < logistic(lo) {
                                g |= 1 << j;
                            } else {
                                g &= !(1 << j);
                            }
                        }
                        g
                    }
                }
            })
            .collect();
        for (i, m) in rows.into_iter().enumerate() {
            for j in 0..q {
                state.params.g[(i, j)] = ((m >> j) & 1) as u8;
            }
        }
        Ok(())
    }

    pub fn update_gamma(&self, state: &mut ChainState, iter: u64) -> Result<()> {
        let d = self.config.d;
        if d == 1 {
            return Ok(());
        }
        let seed = self.seed();
        let n_obs = self.n();
        for h in 0..d - 1 {
            let offsets: Vec<f64> = (0..n_obs)
                .map(|n| {
                    let logits = state.params.class_logits(&self.x_rows[n]);
                    logsumexp_except(&logits, h)
                })
                .collect();
            if h > 0 {
                let params = &state.params;
                let redrawn: Vec<f64> = (0..n_obs)
                    .into_par_iter()
                    .map(|n| {
                        let mut rng = stream(seed, iter, Phase::Gamma, (h * n_obs + n) as u64 + d as u64);
                        let tilt = params.class_logits(&self.x_rows[n])[h] - offsets[n];
                        if !tilt.is_finite() {
                            return Err(Error::NonFinite(format!("class logit at observation {n}")));
                        }
                        Ok(draw_pg1(tilt, &mut rng))
                    })
                    .collect::<Result<_>>()?;
                for (n, v) in redrawn.into_iter().enumerate() {
                    state.latents.omega_z[(n, h)] = v;
                }
            }
            let latents = &state.latents;
            let post = gaussian_posterior_dense(
                &self.prec_gamma,
                &self.shift_gamma,
                (0..n_obs).map(|n| {
                    let om = latents.omega_z[(n, h)];
                    let kappa = if latents.z[n] == h { 0.5 } else { -0.5 };
                    (&self.x_design[n], om, kappa + om * offsets[n])
                }),
                "gamma row",
            )?;
            let mut rng = stream(seed, iter, Phase::Gamma, h as u64);
            let row = post.sample(&mut rng);
            for k in 0..row.len() {
                state.params.gamma[(h, k)] = row[k];
            }
        }
        Ok(())
    }

    /// `log p(y^{(n)} | w^{(n)}, G, B)` for every observation.
    pub fn observation_loglik(&self, state: &ChainState) -> Vec<f64> {
        let table = LikTable::new(self.config, &state.params);
        let g_masks: Vec<Mask> = (0..self.config.p).map(|i| state.params.g_mask(i)).collect();
        (0..self.n())
            .into_par_iter()
            .map(|n| table.row_loglik(self.data.y.row(n).iter().copied(), state.latents.w_mask(n), &g_masks, None))
            .collect()
    }
}

/// `log Σ_{h'≠h} exp(η_{h'})`.
pub fn logsumexp_except(logits: &[f64], h: usize) -> f64 {
    let others: Vec<f64> = logits.iter().enumerate().filter(|(k, _)| *k != h).map(|(_, v)| *v).collect();
    logsumexp(&others)
}

/// Polya-Gamma tilt `η_h − log Σ_{h'≠h} exp(η_{h'})` of class `h`.
pub fn class_tilt(logits: &[f64], h: usize) -> f64 {
    logits[h] - logsumexp_except(logits, h)
}

/// Runs a chain from `init` (or a prior draw) and records retained sweeps.
pub fn run_chain(
    data: &Dataset,
    config: &ModelConfig,
    hyper: &Hyperparams,
    schedule: &SamplerSchedule,
    init: Option<ChainState>,
) -> Result<PosteriorSamples> {
    let mut sampler = Sampler::new(config, data, hyper, schedule.clone())?;
    let mut state = match init {
        Some(s) => {
            sampler.check_state(&s)?;
            s
        }
        None => sampler.init_from_prior()?,
    };
    let kept = schedule.n_kept();
    let mut out = PosteriorSamples {
        params: Vec::with_capacity(kept),
        z: Vec::with_capacity(kept),
        w: Vec::with_capacity(kept),
        loglik: DMatrix::zeros(kept, data.n()),
        iterations: Vec::with_capacity(kept),
        mh_acceptance: Vec::new(),
        config: config.clone(),
        schedule: schedule.clone(),
        relabeled: false,
    };
    for iter in 0..schedule.n_iters {
        sampler.sweep(&mut state, iter as u64)?;
        if schedule.keeps(iter) {
            let s = out.params.len();
            let ll = sampler.observation_loglik(&state);
            if let Some(n) = ll.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("log-likelihood of observation {n} at sweep {iter}")));
            }
            out.loglik.row_mut(s).copy_from_slice(&ll);
            out.params.push(state.params.clone());
            out.z.push(state.latents.z.clone());
            out.w.push(state.latents.w.clone());
            out.iterations.push(iter);
        }
    }
    out.mh_acceptance = sampler.mh_acceptance();
    Ok(out)
}

/// Full-conditional Gaussian of a `Γ` row given class `ω`, for inspection.
pub fn gamma_row_posterior(
    hyper: &Hyperparams,
    params: &Params,
    data: &Dataset,
    z: &[usize],
    omega: &[f64],
    h: usize,
) -> Result<GaussianPosterior> {
    let prec = spd_inverse(&hyper.v_gamma, "V_gamma")?;
    let shift = &prec * &hyper.m_gamma;
    let designs: Vec<DVector<f64>> = (0..data.n()).map(|n| data.x_design(n)).collect();
    let offsets: Vec<f64> =
        (0..data.n()).map(|n| logsumexp_except(&params.class_logits(&designs[n].as_slice()[1..]), h)).collect();
    gaussian_posterior_dense(
        &prec,
        &shift,
        (0..data.n()).map(|n| {
            let kappa = if z[n] == h { 0.5 } else { -0.5 };
            (&designs[n], omega[n], kappa + omega[n] * offsets[n])
        }),
        "gamma row",
    )
}
