//! Domain types, per-layer densities, and forward simulation.
//!
//! Observation `n` has covariates `x`, a deep class `z ∈ {0..d}`, a binary
//! attribute vector `w ∈ {0,1}^q`, and outcomes `y ∈ ...^p`. Classes are
//! 0-based in memory; the last class is the baseline whose `Γ` row is zero.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ln_factorial, log1pexp, logistic, sample_mvn, sample_probs, softmax};

/// Lower clamp applied to attribute probabilities; the upper is `1 - ALPHA_EPS`.
pub const ALPHA_EPS: f64 = 1e-12;

/// Bit mask over attributes; bit `j` is attribute `j`.
pub type Mask = u64;

/// Largest `q` representable in a [`Mask`].
pub const MAX_ATTRIBUTES: usize = 64;

/// Outcome type of one observed dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Binary,
    /// Levels `1..=D`; level `D` is the baseline.
    Categorical(u32),
    Count,
}

impl EntryKind {
    /// Number of coefficient rows stored for the entry, including a pinned
    /// baseline row for categorical entries.
    pub fn n_levels(&self) -> usize {
        match self {
            EntryKind::Binary | EntryKind::Count => 1,
            EntryKind::Categorical(levels) => *levels as usize,
        }
    }

    pub fn in_support(&self, y: u32) -> bool {
        match self {
            EntryKind::Binary => y <= 1,
            EntryKind::Categorical(levels) => y >= 1 && y <= *levels,
            EntryKind::Count => true,
        }
    }

    /// Parses `binary`, `count`, or `categorical:D`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "binary" => Ok(EntryKind::Binary),
            "count" => Ok(EntryKind::Count),
            _ => {
                let levels = s
                    .strip_prefix("categorical:")
                    .and_then(|d| d.parse::<u32>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown entry kind `{s}`")))?;
                if levels < 2 {
                    return Err(Error::Config(format!("categorical entry needs at least 2 levels, got {levels}")));
                }
                Ok(EntryKind::Categorical(levels))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            EntryKind::Binary => "binary".into(),
            EntryKind::Count => "count".into(),
            EntryKind::Categorical(d) => format!("categorical:{d}"),
        }
    }
}

/// Model dimensions and the outcome type of every observed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub p: usize,
    pub q: usize,
    pub d: usize,
    pub px: usize,
    pub pt: usize,
    pub entries: Vec<EntryKind>,
}

impl ModelConfig {
    /// All-binary configuration.
    pub fn binary(p: usize, q: usize, d: usize, px: usize, pt: usize) -> Self {
        Self { p, q, d, px, pt, entries: vec![EntryKind::Binary; p] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 || self.d == 0 {
            return Err(Error::Config(format!("p, q, d must be positive (p={}, q={}, d={})", self.p, self.q, self.d)));
        }
        if self.q > MAX_ATTRIBUTES {
            return Err(Error::Config(format!("q={} exceeds the supported maximum {MAX_ATTRIBUTES}", self.q)));
        }
        if self.entries.len() != self.p {
            return Err(Error::Config(format!("{} entry kinds given for p={}", self.entries.len(), self.p)));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if let EntryKind::Categorical(l) = e {
                if *l < 2 {
                    return Err(Error::Config(format!("entry {i}: categorical needs D >= 2")));
                }
            }
        }
        Ok(())
    }

    pub fn all_binary(&self) -> bool {
        self.entries.iter().all(|e| *e == EntryKind::Binary)
    }
}

/// Observed outcomes, covariates and meta-covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `N × p` outcomes.
    pub y: DMatrix<u32>,
    /// `N × p_x` covariates.
    pub x: DMatrix<f64>,
    /// `p × p_t` meta-covariates.
    pub t: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DMatrix<u32>, x: DMatrix<f64>, t: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch(format!("Y has {} rows but X has {}", y.nrows(), x.nrows())));
        }
        if t.nrows() != y.ncols() {
            return Err(Error::DimensionMismatch(format!("Y has {} columns but T has {} rows", y.ncols(), t.nrows())));
        }
        Ok(Self { y, x, t })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    /// Checks shapes against `config` and every outcome against its support.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.p() != config.p || self.x.ncols() != config.px || self.t.ncols() != config.pt {
            return Err(Error::DimensionMismatch(format!(
                "dataset is (p={}, p_x={}, p_t={}) but config is (p={}, p_x={}, p_t={})",
                self.p(),
                self.x.ncols(),
                self.t.ncols(),
                config.p,
                config.px,
                config.pt
            )));
        }
        for n in 0..self.n() {
            for (i, kind) in config.entries.iter().enumerate() {
                let v = self.y[(n, i)];
                if !kind.in_support(v) {
                    return Err(Error::OutOfSupport { row: n, col: i, value: v.to_string(), kind: kind.label() });
                }
            }
        }
        if self.x.iter().chain(self.t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("covariates must be finite".into()));
        }
        Ok(())
    }

    /// Row `n` of `X` with a leading one.
    pub fn x_design(&self, n: usize) -> DVector<f64> {
        design_row(self.x.row(n).iter().copied())
    }

    /// Row `i` of `T` with a leading one.
    pub fn t_design(&self, i: usize) -> DVector<f64> {
        design_row(self.t.row(i).iter().copied())
    }
}

pub(crate) fn design_row(values: impl Iterator<Item = f64>) -> DVector<f64> {
    let v: Vec<f64> = std::iter::once(1.0).chain(values).collect();
    DVector::from_vec(v)
}

/// Coefficient rows of one outcome dimension, one `(q+1)`-vector per level.
pub type EntryCoefs = Vec<DVector<f64>>;

/// Population-level parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `q × d`, entries in `(0, 1)`.
    pub alpha: DMatrix<f64>,
    /// Per dimension: intercept followed by `q` attribute effects, per level.
    pub beta: Vec<EntryCoefs>,
    /// `d × (p_x + 1)`; last row pinned to zero.
    pub gamma: DMatrix<f64>,
    /// `p × q` binary loading matrix.
    pub g: DMatrix<u8>,
    /// `q × (p_t + 1)` prior hyperparameters for `G`.
    pub theta: DMatrix<f64>,
}

impl Params {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            alpha: DMatrix::from_element(config.q, config.d, 0.5),
            beta: config.entries.iter().map(|e| vec![DVector::zeros(config.q + 1); e.n_levels()]).collect(),
            gamma: DMatrix::zeros(config.d, config.px + 1),
            g: DMatrix::zeros(config.p, config.q),
            theta: DMatrix::zeros(config.q, config.pt + 1),
        }
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let (p, q, d) = (config.p, config.q, config.d);
        if self.alpha.shape() != (q, d)
            || self.gamma.shape() != (d, config.px + 1)
            || self.g.shape() != (p, q)
            || self.theta.shape() != (q, config.pt + 1)
            || self.beta.len() != p
        {
            return Err(Error::DimensionMismatch("parameter shapes do not match config".into()));
        }
        if self.alpha.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::InvalidParameter("alpha entries must lie strictly inside (0,1)".into()));
        }
        if self.gamma.row(d - 1).iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidParameter("baseline row of Gamma must be zero".into()));
        }
        if self.g.iter().any(|v| *v > 1) {
            return Err(Error::InvalidParameter("G entries must be 0 or 1".into()));
        }
        for (i, (coefs, kind)) in self.beta.iter().zip(&config.entries).enumerate() {
            if coefs.len() != kind.n_levels() || coefs.iter().any(|c| c.len() != q + 1) {
                return Err(Error::DimensionMismatch(format!("coefficients of entry {i} have the wrong shape")));
            }
            if let EntryKind::Categorical(_) = kind {
                if coefs.last().unwrap().iter().any(|v| *v != 0.0) {
                    return Err(Error::InvalidParameter(format!("baseline level of entry {i} must be zero")));
                }
            }
        }
        let finite = self.alpha.iter().chain(self.gamma.iter()).chain(self.theta.iter()).all(|v| v.is_finite())
            && self.beta.iter().flatten().flat_map(|c| c.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("parameters".into()));
        }
        Ok(())
    }

    /// Mask of the attributes dimension `i` depends on.
    pub fn g_mask(&self, i: usize) -> Mask {
        row_mask(&self.g, i)
    }

    /// Class logits `γ_{h,0} + γ_hᵀx` for every class.
    pub fn class_logits(&self, x: &[f64]) -> Vec<f64> {
        class_logits(x, &self.gamma)
    }
}

/// Per-observation latent variables together with every augmentation variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    /// 0-based deep class per observation.
    pub z: Vec<usize>,
    /// `N × q` attribute matrix.
    pub w: DMatrix<u8>,
    /// Per dimension: binary entries hold `N` values, categorical entries
    /// `N · D` values laid out level-major, count entries none.
    pub omega_y: Vec<Vec<f64>>,
    /// `N × d`.
    pub omega_z: DMatrix<f64>,
    /// `p × q`.
    pub omega_g: DMatrix<f64>,
}

impl LatentState {
    pub fn new(config: &ModelConfig, n: usize) -> Self {
        Self {
            z: vec![0; n],
            w: DMatrix::zeros(n, config.q),
            omega_y: config
                .entries
                .iter()
                .map(|e| match e {
                    EntryKind::Binary => vec![0.25; n],
                    EntryKind::Categorical(l) => vec![0.25; n * *l as usize],
                    EntryKind::Count => Vec::new(),
                })
                .collect(),
            omega_z: DMatrix::from_element(n, config.d, 0.25),
            omega_g: DMatrix::from_element(config.p, config.q, 0.25),
        }
    }

    pub fn w_mask(&self, n: usize) -> Mask {
        row_mask(&self.w, n)
    }

    pub fn set_w_mask(&mut self, n: usize, mask: Mask) {
        for j in 0..self.w.ncols() {
            self.w[(n, j)] = ((mask >> j) & 1) as u8;
        }
    }
}

pub fn row_mask(m: &DMatrix<u8>, row: usize) -> Mask {
    let mut mask = 0;
    for j in 0..m.ncols() {
        if m[(row, j)] != 0 {
            mask |= 1 << j;
        }
    }
    mask
}

/// Mask of a 0/1 slice.
pub fn mask_of(v: &[u8]) -> Mask {
    v.iter().enumerate().fold(0, |acc, (j, &b)| if b != 0 { acc | (1 << j) } else { acc })
}

/// Prior hyperparameters for the continuous parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Symmetric Beta prior on each `α_{j,h}`.
    pub b: f64,
    pub m_beta: DVector<f64>,
    pub v_beta: DMatrix<f64>,
    pub m_gamma: DVector<f64>,
    pub v_gamma: DMatrix<f64>,
}

impl Hyperparams {
    /// `b = 1`, zero means, identity covariances.
    pub fn default_for(config: &ModelConfig) -> Self {
        Self {
            b: 1.0,
            m_beta: DVector::zeros(config.q + 1),
            v_beta: DMatrix::identity(config.q + 1, config.q + 1),
            m_gamma: DVector::zeros(config.px + 1),
            v_gamma: DMatrix::identity(config.px + 1, config.px + 1),
        }
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if !(self.b > 0.0) {
            return Err(Error::InvalidParameter(format!("Beta parameter b must be positive, got {}", self.b)));
        }
        if self.m_beta.len() != config.q + 1 || self.v_beta.shape() != (config.q + 1, config.q + 1) {
            return Err(Error::DimensionMismatch("beta prior must have dimension q+1".into()));
        }
        if self.m_gamma.len() != config.px + 1 || self.v_gamma.shape() != (config.px + 1, config.px + 1) {
            return Err(Error::DimensionMismatch("gamma prior must have dimension p_x+1".into()));
        }
        for (m, name) in [(&self.v_beta, "V_beta"), (&self.v_gamma, "V_gamma")] {
            if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                return Err(Error::InvalidParameter(format!("{name} must be symmetric")));
            }
            if m.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite(name.into()));
            }
        }
        Ok(())
    }
}

/// Linear predictor `β_0 + Σ_{j ∈ active} β_j` for an active-attribute mask.
#[inline]
pub fn linear_predictor(coef: &DVector<f64>, active: Mask) -> f64 {
    let mut eta = coef[0];
    let mut m = active;
    while m != 0 {
        let j = m.trailing_zeros() as usize;
        eta += coef[1 + j];
        m &= m - 1;
    }
    eta
}

/// Binary-outcome log-likelihood `yη − log(1 + e^η)` with
/// `η = β_0 + (g ∘ β)ᵀ w`.
pub fn log_lik_binary_entry(y: u8, w: &[u8], g: &[u8], beta0: f64, beta: &[f64]) -> Result<f64> {
    if w.len() != g.len() || w.len() != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "w has length {}, g has {}, beta has {}",
            w.len(),
            g.len(),
            beta.len()
        )));
    }
    if y > 1 {
        return Err(Error::OutOfSupport { row: 0, col: 0, value: y.to_string(), kind: "binary".into() });
    }
    let eta =
        beta0 + w.iter().zip(g).zip(beta).map(|((&wj, &gj), b)| if wj != 0 && gj != 0 { *b } else { 0.0 }).sum::<f64>();
    Ok(binary_loglik_eta(y as u32, eta))
}

#[inline]
pub fn binary_loglik_eta(y: u32, eta: f64) -> f64 {
    if y == 1 {
        -log1pexp(-eta)
    } else {
        -log1pexp(eta)
    }
}

/// Log-likelihood of a single outcome of any kind, where `active = g_i & w`.
pub fn entry_loglik(kind: EntryKind, y: u32, coefs: &EntryCoefs, active: Mask) -> f64 {
    match kind {
        EntryKind::Binary => binary_loglik_eta(y, linear_predictor(&coefs[0], active)),
        EntryKind::Count => {
            let eta = linear_predictor(&coefs[0], active);
            y as f64 * eta - eta.exp() - ln_factorial(y as u64)
        }
        EntryKind::Categorical(levels) => {
            let etas: Vec<f64> = (0..levels as usize).map(|l| linear_predictor(&coefs[l], active)).collect();
            etas[y as usize - 1] - crate::math::logsumexp(&etas)
        }
    }
}

/// `P(w | z, A) = Π_j α_{j,z}^{w_j} (1 − α_{j,z})^{1−w_j}`.
pub fn prob_w_given_z(w: &[u8], z: usize, alpha: &DMatrix<f64>) -> Result<f64> {
    if w.len() != alpha.nrows() || z >= alpha.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "w has length {} and z={z} for A of shape {:?}",
            w.len(),
            alpha.shape()
        )));
    }
    let mut prob = 1.0;
    for (j, &wj) in w.iter().enumerate() {
        let a = alpha[(j, z)];
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha[{j},{z}] = {a} is outside (0,1)")));
        }
        prob *= if wj != 0 { a } else { 1.0 - a };
    }
    Ok(prob)
}

/// `log P(w | z, A)` for a mask; assumes valid `α`.
#[inline]
pub fn log_prob_w_mask(mask: Mask, z: usize, alpha: &DMatrix<f64>) -> f64 {
    (0..alpha.nrows())
        .map(|j| {
            let a = alpha[(j, z)];
            if (mask >> j) & 1 == 1 {
                a.ln()
            } else {
                (1.0 - a).ln()
            }
        })
        .sum()
}

pub fn class_logits(x: &[f64], gamma: &DMatrix<f64>) -> Vec<f64> {
    (0..gamma.nrows())
        .map(|h| gamma[(h, 0)] + x.iter().enumerate().map(|(k, xk)| gamma[(h, k + 1)] * xk).sum::<f64>())
        .collect()
}

/// Multinomial-logistic class probabilities `P(z | x, Γ)`.
pub fn class_probs_given_x(x: &[f64], gamma: &DMatrix<f64>) -> Result<Vec<f64>> {
    if gamma.ncols() != x.len() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "x has length {} but Gamma has {} columns",
            x.len(),
            gamma.ncols()
        )));
    }
    Ok(softmax(&class_logits(x, gamma)))
}

/// Source of covariate vectors for simulation.
pub trait CovariateSampler {
    fn sample(&mut self, rng: &mut dyn RngCore, px: usize) -> Vec<f64>;
}

/// I.i.d. standard normal covariates.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNormalCovariates;

impl CovariateSampler for StandardNormalCovariates {
    fn sample(&mut self, rng: &mut dyn RngCore, px: usize) -> Vec<f64> {
        (0..px).map(|_| rng.sample(StandardNormal)).collect()
    }
}

impl<F> CovariateSampler for F
where
    F: FnMut(&mut dyn RngCore, usize) -> Vec<f64>,
{
    fn sample(&mut self, rng: &mut dyn RngCore, px: usize) -> Vec<f64> {
        self(rng, px)
    }
}

/// Simulated data together with the latent truth that generated it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    pub z: Vec<usize>,
    pub w: DMatrix<u8>,
}

/// Draws `n` observations from the generative hierarchy `x → z → w → y`.
pub fn simulate_dataset(
    config: &ModelConfig,
    params: &Params,
    meta: &DMatrix<f64>,
    n: usize,
    covariates: &mut dyn CovariateSampler,
    seed: u64,
) -> Result<Simulated> {
    config.validate()?;
    params.validate(config)?;
    if meta.shape() != (config.p, config.pt) {
        return Err(Error::DimensionMismatch("meta-covariates must be p × p_t".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, config.px);
    let mut z = vec![0; n];
    let mut w = DMatrix::zeros(n, config.q);
    for row in 0..n {
        let xn = covariates.sample(&mut rng, config.px);
        if xn.len() != config.px {
            return Err(Error::DimensionMismatch("covariate sampler returned the wrong length".into()));
        }
        let probs = softmax(&params.class_logits(&xn));
        z[row] = sample_probs(&probs, &mut rng);
        for (k, v) in xn.into_iter().enumerate() {
            x[(row, k)] = v;
        }
        for j in 0..config.q {
            w[(row, j)] = rng.random_bool(params.alpha[(j, z[row])]) as u8;
        }
    }
    let mut state = LatentState::new(config, n);
    state.w = w;
    state.z = z;
    let y = simulate_outcomes(config, params, &state, &mut rng)?;
    Ok(Simulated { data: Dataset::new(y, x, meta.clone())?, z: state.z, w: state.w })
}

/// Draws `Y | W, G, B`.
pub fn simulate_outcomes<R: Rng + ?Sized>(
    config: &ModelConfig,
    params: &Params,
    latents: &LatentState,
    rng: &mut R,
) -> Result<DMatrix<u32>> {
    let n = latents.z.len();
    let mut y = DMatrix::zeros(n, config.p);
    let g_masks: Vec<Mask> = (0..config.p).map(|i| params.g_mask(i)).collect();
    for row in 0..n {
        let wm = latents.w_mask(row);
        for (i, kind) in config.entries.iter().enumerate() {
            let active = g_masks[i] & wm;
            let coefs = &params.beta[i];
            y[(row, i)] = match kind {
                EntryKind::Binary => rng.random_bool(logistic(linear_predictor(&coefs[0], active))) as u32,
                EntryKind::Count => {
                    let rate = linear_predictor(&coefs[0], active).exp();
                    if rate <= 0.0 {
                        0
                    } else {
                        let pois =
                            Poisson::new(rate).map_err(|e| Error::NonFinite(format!("Poisson rate {rate}: {e}")))?;
                        pois.sample(rng) as u32
                    }
                }
                EntryKind::Categorical(levels) => {
                    let etas: Vec<f64> = (0..*levels as usize).map(|l| linear_predictor(&coefs[l], active)).collect();
                    sample_probs(&softmax(&etas), rng) as u32 + 1
                }
            };
        }
    }
    Ok(y)
}

/// Optional structure imposed when drawing simulation truths.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConstraints {
    /// Force the first `3q` rows of `G` to be three stacked `I_q` blocks.
    pub identity_blocks: bool,
    /// Rejection-sample active `β_{i,j}` until `|β_{i,j}| ≥ bound`.
    pub min_abs_beta: Option<f64>,
}

impl Default for PriorConstraints {
    fn default() -> Self {
        Self { identity_blocks: false, min_abs_beta: None }
    }
}

impl PriorConstraints {
    /// Bound used for simulation truths unless overridden.
    pub const DEFAULT_BETA_BOUND: f64 = 2.0;

    pub fn simulation_truth() -> Self {
        Self { identity_blocks: true, min_abs_beta: Some(Self::DEFAULT_BETA_BOUND) }
    }
}

/// Draws `(A, B, Γ, G, Θ)` from the hierarchical prior.
pub fn draw_params_from_prior(
    config: &ModelConfig,
    hyper: &Hyperparams,
    meta: &DMatrix<f64>,
    seed: u64,
    constraints: &PriorConstraints,
) -> Result<Params> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_params_with_rng(config, hyper, meta, &mut rng, constraints)
}

pub fn draw_params_with_rng<R: Rng + ?Sized>(
    config: &ModelConfig,
    hyper: &Hyperparams,
    meta: &DMatrix<f64>,
    rng: &mut R,
    constraints: &PriorConstraints,
) -> Result<Params> {
    config.validate()?;
    hyper.validate(config)?;
    if meta.shape() != (config.p, config.pt) {
        return Err(Error::DimensionMismatch("meta-covariates must be p × p_t".into()));
    }
    let (p, q, d) = (config.p, config.q, config.d);
    if constraints.identity_blocks && p < 3 * q {
        return Err(Error::Infeasible(format!("three identity blocks need p >= 3q, but p={p}, q={q}")));
    }
    if let Some(bound) = constraints.min_abs_beta {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta bound must be finite and non-negative, got {bound}")));
        }
    }
    let mut params = Params::zeros(config);

    for v in params.theta.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for i in 0..p {
        let t = design_row(meta.row(i).iter().copied());
        for j in 0..q {
            let logit = params.theta.row(j).iter().zip(t.iter()).map(|(a, b)| a * b).sum::<f64>();
            params.g[(i, j)] = rng.random_bool(logistic(logit)) as u8;
        }
    }
    if constraints.identity_blocks {
        for i in 0..3 * q {
            for j in 0..q {
                params.g[(i, j)] = (i % q == j) as u8;
            }
        }
    }

    let beta_dist =
        Beta::new(hyper.b, hyper.b).map_err(|e| Error::InvalidParameter(format!("Beta({0},{0}): {e}", hyper.b)))?;
    for a in params.alpha.iter_mut() {
        *a = clamp_alpha(beta_dist.sample(rng));
    }

    for i in 0..p {
        let kind = config.entries[i];
        let free_levels = match kind {
            EntryKind::Categorical(l) => l as usize - 1,
            _ => 1,
        };
        for level in 0..free_levels {
            let mut coef = sample_mvn(&hyper.m_beta, &hyper.v_beta, rng)?;
            if let Some(bound) = constraints.min_abs_beta {
                for j in 0..q {
                    if params.g[(i, j)] == 1 {
                        let mut tries = 0usize;
                        while coef[1 + j].abs() < bound {
                            coef = resample_coordinate(&coef, 1 + j, hyper, rng)?;
                            tries += 1;
                            if tries > 1_000_000 {
                                return Err(Error::Infeasible(format!(
                                    "could not draw |beta| >= {bound} under the prior"
                                )));
                            }
                        }
                    }
                }
            }
            params.beta[i][level] = coef;
        }
    }

    for h in 0..d.saturating_sub(1) {
        let row = sample_mvn(&hyper.m_gamma, &hyper.v_gamma, rng)?;
        for k in 0..=config.px {
            params.gamma[(h, k)] = row[k];
        }
    }
    Ok(params)
}

/// Redraws one coordinate from its prior conditional given the others.
fn resample_coordinate<R: Rng + ?Sized>(
    coef: &DVector<f64>,
    k: usize,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let prec = crate::math::spd_inverse(&hyper.v_beta, "V_beta")?;
    let diag = prec[(k, k)];
    let mut shift = 0.0;
    for l in 0..coef.len() {
        if l != k {
            shift += prec[(k, l)] * (coef[l] - hyper.m_beta[l]);
        }
    }
    let mean = hyper.m_beta[k] - shift / diag;
    let sd = (1.0 / diag).sqrt();
    let mut out = coef.clone();
    out[k] = mean + sd * rng.sample::<f64, _>(StandardNormal);
    Ok(out)
}

#[inline]
pub fn clamp_alpha(a: f64) -> f64 {
    a.clamp(ALPHA_EPS, 1.0 - ALPHA_EPS)
}

/// A simulation truth together with data drawn from it.
#[derive(Debug, Clone)]
pub struct Study {
    pub truth: Params,
    pub sim: Simulated,
}

/// Draws meta-covariates, a truth under `constraints` and `n` observations
/// with standard-normal covariates, each from its own stream of `seed`.
/// Identity blocks are dropped when `p < 3q`.
pub fn simulate_study(
    config: &ModelConfig,
    hyper: &Hyperparams,
    n: usize,
    seed: u64,
    constraints: &PriorConstraints,
) -> Result<Study> {
    use crate::rng::{stream_key, Phase};
    let meta = simulate_meta_covariates(config.p, config.pt, stream_key(seed, 0, Phase::Data, 1));
    let constraints = PriorConstraints {
        identity_blocks: constraints.identity_blocks && config.p >= 3 * config.q,
        ..constraints.clone()
    };
    let truth = draw_params_from_prior(config, hyper, &meta, stream_key(seed, 0, Phase::Init, 0), &constraints)?;
    let sim =
        simulate_dataset(config, &truth, &meta, n, &mut StandardNormalCovariates, stream_key(seed, 0, Phase::Data, 2))?;
    Ok(Study { truth, sim })
}

/// Standard-normal `p × p_t` meta-covariates.
pub fn simulate_meta_covariates(p: usize, pt: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(p, pt, |_, _| rng.sample(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_loglik_examples() {
        let l = log_lik_binary_entry(1, &[0], &[1], 0.0, &[3.0]).unwrap();
        assert!((l - 0.5f64.ln()).abs() < 1e-15);

        let l = log_lik_binary_entry(0, &[1, 0], &[1, 1], 0.0, &[2.0, 5.0]).unwrap();
        assert!((l + (1.0 + 2f64.exp()).ln()).abs() < 1e-12);
        assert!((l + 2.126_928).abs() < 1e-6);

        let l = log_lik_binary_entry(1, &[1], &[1], 0.0, &[1000.0]).unwrap();
        assert!(l.is_finite() && l.abs() < 1e-300);
        let l = log_lik_binary_entry(0, &[1], &[1], 0.0, &[1000.0]).unwrap();
        assert_eq!(l, -1000.0);
    }

    #[test]
    fn binary_loglik_rejects_mismatch() {
        assert!(matches!(log_lik_binary_entry(1, &[0, 1], &[1], 0.0, &[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn prob_w_examples() {
        let a = DMatrix::from_element(2, 1, 0.5);
        for w in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            assert!((prob_w_given_z(&w, 0, &a).unwrap() - 0.25).abs() < 1e-15);
        }
        let a = DMatrix::from_element(1, 1, 0.9);
        assert!((prob_w_given_z(&[1], 0, &a).unwrap() - 0.9).abs() < 1e-15);
        let a = DMatrix::from_column_slice(2, 1, &[0.2, 0.7]);
        assert!((prob_w_given_z(&[1, 0], 0, &a).unwrap() - 0.06).abs() < 1e-15);
        let bad = DMatrix::from_element(1, 1, 1.0);
        assert!(prob_w_given_z(&[1], 0, &bad).is_err());
    }

    #[test]
    fn class_prob_examples() {
        let g = DMatrix::zeros(3, 3);
        let p = class_probs_given_x(&[0.3, -2.0], &g).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

        let mut g = DMatrix::zeros(2, 2);
        g[(0, 0)] = 3f64.ln();
        let p = class_probs_given_x(&[17.0], &g).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);

        g[(0, 0)] = -1.5;
        g[(0, 1)] = 0.5;
        let p = class_probs_given_x(&[3.0], &g).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);

        assert!(class_probs_given_x(&[1.0, 2.0], &g).is_err());
    }

    #[test]
    fn entry_kind_parsing() {
        assert_eq!(EntryKind::parse("binary").unwrap(), EntryKind::Binary);
        assert_eq!(EntryKind::parse("Categorical:4").unwrap(), EntryKind::Categorical(4));
        assert_eq!(EntryKind::parse("count").unwrap(), EntryKind::Count);
        assert!(EntryKind::parse("categorical:1").is_err());
        assert!(EntryKind::parse("ordinal").is_err());
    }

    #[test]
    fn identity_block_constraint() {
        let config = ModelConfig::binary(6, 2, 2, 0, 0);
        let hyper = Hyperparams::default_for(&config);
        let meta = DMatrix::zeros(6, 0);
        let params = draw_params_from_prior(&config, &hyper, &meta, 1, &PriorConstraints::simulation_truth()).unwrap();
        let expected = DMatrix::from_row_slice(6, 2, &[1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1]);
        assert_eq!(params.g, expected);
        for i in 0..6 {
            for j in 0..2 {
                if params.g[(i, j)] == 1 {
                    assert!(params.beta[i][0][1 + j].abs() >= 2.0);
                }
            }
        }

        let small = ModelConfig::binary(5, 2, 2, 0, 0);
        let r = draw_params_from_prior(
            &small,
            &Hyperparams::default_for(&small),
            &DMatrix::zeros(5, 0),
            1,
            &PriorConstraints::simulation_truth(),
        );
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn uniform_alpha_prior() {
        let config = ModelConfig::binary(5, 4, 5, 1, 0);
        let hyper = Hyperparams::default_for(&config);
        let meta = DMatrix::zeros(5, 0);
        let mut alphas = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let params = draw_params_with_rng(&config, &hyper, &meta, &mut rng, &PriorConstraints::default()).unwrap();
            alphas.extend(params.alpha.iter().copied());
            assert!(params.gamma.row(config.d - 1).iter().all(|v| *v == 0.0));
        }
        let m = alphas.iter().sum::<f64>() / alphas.len() as f64;
        let se = (1.0f64 / 12.0 / alphas.len() as f64).sqrt();
        assert!((m - 0.5).abs() < 3.0 * se, "alpha mean {m}");
        let below = alphas.iter().filter(|a| **a < 0.25).count() as f64 / alphas.len() as f64;
        assert!((below - 0.25).abs() < 0.02);
    }

    #[test]
    fn g_prior_with_zero_theta_is_fair() {
        // Θ = 0 makes every g_{i,j} Bernoulli(1/2); exercise the prior through t = 0 rows.
        let config = ModelConfig::binary(200, 3, 2, 0, 2);
        let hyper = Hyperparams::default_for(&config);
        let meta = DMatrix::zeros(200, 2);
        let mut ones = 0usize;
        let mut total = 0usize;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = draw_params_with_rng(&config, &hyper, &meta, &mut rng, &PriorConstraints::default()).unwrap();
            // with t = 0 only the intercept θ_{j,0} matters; condition on it being small
            for j in 0..3 {
                if params.theta[(j, 0)].abs() < 0.05 {
                    ones += params.g.column(j).iter().map(|v| *v as usize).sum::<usize>();
                    total += 200;
                }
            }
        }
        assert!(total > 0);
        let f = ones as f64 / total as f64;
        assert!((f - 0.5).abs() < 0.05, "{f}");
    }

    #[test]
    fn near_degenerate_attributes() {
        let config = ModelConfig::binary(3, 1, 1, 2, 0);
        let mut params = Params::zeros(&config);
        params.alpha[(0, 0)] = 1.0 - 1e-9;
        params.g.fill(1);
        let sim =
            simulate_dataset(&config, &params, &DMatrix::zeros(3, 0), 500, &mut StandardNormalCovariates, 4).unwrap();
        assert!(sim.w.iter().all(|v| *v == 1));
        assert!(sim.z.iter().all(|z| *z == 0));
    }

    #[test]
    fn simulated_outcomes_match_logistic_rate() {
        let config = ModelConfig::binary(1, 2, 1, 0, 0);
        let mut params = Params::zeros(&config);
        params.g.fill(1);
        params.beta[0][0] = DVector::from_vec(vec![-0.4, 1.1, 0.7]);
        let mut latents = LatentState::new(&config, 100_000);
        for n in 0..100_000 {
            latents.set_w_mask(n, 0b01);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y = simulate_outcomes(&config, &params, &latents, &mut rng).unwrap();
        let rate = logistic(-0.4 + 1.1);
        let mean = y.iter().map(|v| *v as f64).sum::<f64>() / 100_000.0;
        let se = (rate * (1.0 - rate) / 100_000.0).sqrt();
        assert!((mean - rate).abs() < 3.0 * se);
    }

    #[test]
    fn simulation_is_reproducible() {
        let config = ModelConfig::binary(20, 2, 2, 4, 4);
        let hyper = Hyperparams::default_for(&config);
        let meta = simulate_meta_covariates(20, 4, 1);
        let params = draw_params_from_prior(&config, &hyper, &meta, 2, &PriorConstraints::simulation_truth()).unwrap();
        let a = simulate_dataset(&config, &params, &meta, 1000, &mut StandardNormalCovariates, 3).unwrap();
        let b = simulate_dataset(&config, &params, &meta, 1000, &mut StandardNormalCovariates, 3).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.z, b.z);
        assert_eq!(a.data.n(), 1000);
        assert_eq!(a.data.p(), 20);
        assert_eq!(a.data.x.ncols(), 4);
        assert_eq!(a.data.t.ncols(), 4);
        let bits: Vec<u64> = a.data.x.iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.data.x.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, bits_b);
    }

    #[test]
    fn general_entry_examples() {
        let coefs = vec![DVector::zeros(2); 3];
        for y in 1..=3 {
            let l = entry_loglik(EntryKind::Categorical(3), y, &coefs, 1);
            assert!((l - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        }
        let l = entry_loglik(EntryKind::Count, 0, &vec![DVector::zeros(2)], 0);
        assert!((l + 1.0).abs() < 1e-15);
        let c = vec![DVector::from_vec(vec![2f64.ln(), 0.0])];
        let l = entry_loglik(EntryKind::Count, 3, &c, 0);
        assert!((l - (3.0 * 2f64.ln() - 2.0 - 6f64.ln())).abs() < 1e-12);
        assert!((l + 1.712_318).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn w_probabilities_sum_to_one(alphas in proptest::collection::vec(0.001f64..0.999, 1..6)) {
            let q = alphas.len();
            let a = DMatrix::from_column_slice(q, 1, &alphas);
            let total: f64 = (0..1u64 << q)
                .map(|m| {
                    let w: Vec<u8> = (0..q).map(|j| ((m >> j) & 1) as u8).collect();
                    prob_w_given_z(&w, 0, &a).unwrap()
                })
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn binary_probabilities_complement(eta in -30.0f64..30.0) {
            let p1 = log_lik_binary_entry(1, &[1], &[1], 0.0, &[eta]).unwrap().exp();
            let p0 = log_lik_binary_entry(0, &[1], &[1], 0.0, &[eta]).unwrap().exp();
            prop_assert!((p1 + p0 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn class_probs_shift_invariant(
            logits in proptest::collection::vec(-20.0f64..20.0, 2..5),
            shift in -50.0f64..50.0,
            x in -3.0f64..3.0,
        ) {
            let d = logits.len() + 1;
            let mut gamma = DMatrix::zeros(d, 2);
            for (h, l) in logits.iter().enumerate() {
                gamma[(h, 0)] = *l;
                gamma[(h, 1)] = 0.1 * *l;
            }
            let base = class_probs_given_x(&[x], &gamma).unwrap();
            let mut shifted = gamma.clone();
            for h in 0..d {
                shifted[(h, 0)] += shift;
            }
            let un_pinned = class_probs_given_x(&[x], &shifted).unwrap();
            // re-pin by subtracting the baseline row
            let base_row = shifted.row(d - 1).into_owned();
            for h in 0..d {
                let r = shifted.row(h) - &base_row;
                shifted.set_row(h, &r);
            }
            let repinned = class_probs_given_x(&[x], &shifted).unwrap();
            let sum: f64 = base.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for h in 0..d {
                prop_assert!((base[h] - un_pinned[h]).abs() < 1e-12);
                prop_assert!((base[h] - repinned[h]).abs() < 1e-12);
            }
        }
    }
}
