//! Reference computations shared by the integration tests and the acceptance
//! harness.

#![allow(dead_code)]

use dlcr::gibbs::conditionals::{
    g_block_conditional, g_entry_conditional, w_block_conditional, w_entry_conditional, z_conditional,
};
use dlcr::gibbs::{run_chain, ChainState, PosteriorSamples, Sampler, SamplerSchedule, UpdateMode};
use dlcr::glm::{mh_update_poisson_row, MhTuning};
use dlcr::math::{logistic, logsumexp};
use dlcr::model::{
    draw_params_from_prior, draw_params_with_rng, log_lik_binary_entry, simulate_dataset, simulate_meta_covariates,
    simulate_outcomes, Dataset, EntryKind, Hyperparams, LatentState, ModelConfig, Params, PriorConstraints,
    StandardNormalCovariates,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_instance(
    p: usize,
    q: usize,
    d: usize,
    px: usize,
    pt: usize,
    n: usize,
    seed: u64,
) -> (ModelConfig, Params, Dataset, Vec<usize>, DMatrix<u8>) {
    let config = ModelConfig::binary(p, q, d, px, pt);
    let meta = simulate_meta_covariates(p, pt, seed);
    let params = draw_params_from_prior(
        &config,
        &Hyperparams::default_for(&config),
        &meta,
        seed + 1,
        &PriorConstraints::default(),
    )
    .unwrap();
    let sim = simulate_dataset(&config, &params, &meta, n, &mut StandardNormalCovariates, seed + 2).unwrap();
    (config, params, sim.data, sim.z, sim.w)
}

pub fn bits(m: usize, q: usize) -> Vec<u8> {
    (0..q).map(|j| ((m >> j) & 1) as u8).collect()
}

/// Direct evaluation of `log p(y | w, G, B)` entry by entry.
pub fn direct_row_loglik(params: &Params, y: &[u32], w: &[u8]) -> f64 {
    (0..y.len())
        .map(|i| {
            let g: Vec<u8> = params.g.row(i).iter().copied().collect();
            let b = &params.beta[i][0];
            log_lik_binary_entry(y[i] as u8, w, &g, b[0], &b.as_slice()[1..]).unwrap()
        })
        .sum()
}

pub fn normalize_log(lw: &[f64]) -> Vec<f64> {
    let lse = logsumexp(lw);
    lw.iter().map(|v| (v - lse).exp()).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// Largest absolute deviation between the `z`, `w` and `g` conditionals and a
/// brute-force normalization of the joint over every configuration.
pub fn conditional_max_error(p: usize, q: usize, d: usize, px: usize, pt: usize, n_obs: usize, seed: u64) -> f64 {
    let (config, params, data, z, w) = random_instance(p, q, d, px, pt, n_obs, seed);
    let mut worst: f64 = 0.0;
    for n in 0..data.n() {
        let x: Vec<f64> = data.x.row(n).iter().copied().collect();
        let wn: Vec<u8> = w.row(n).iter().copied().collect();
        let y: Vec<u32> = data.y.row(n).iter().copied().collect();

        let eta: Vec<f64> = (0..config.d)
            .map(|k| {
                params.gamma[(k, 0)] + x.iter().enumerate().map(|(c, v)| params.gamma[(k, c + 1)] * v).sum::<f64>()
            })
            .collect();
        let lw: Vec<f64> = (0..config.d)
            .map(|h| {
                eta[h] - logsumexp(&eta)
                    + (0..config.q)
                        .map(|j| if wn[j] == 1 { params.alpha[(j, h)].ln() } else { (1.0 - params.alpha[(j, h)]).ln() })
                        .sum::<f64>()
            })
            .collect();
        worst = worst.max(max_diff(&z_conditional(&x, &wn, &params).unwrap(), &normalize_log(&lw)));

        let lw: Vec<f64> = (0..1usize << config.q)
            .map(|m| {
                let wm = bits(m, config.q);
                let prior: f64 = (0..config.q)
                    .map(|j| {
                        let a = params.alpha[(j, z[n])];
                        if wm[j] == 1 {
                            a.ln()
                        } else {
                            (1.0 - a).ln()
                        }
                    })
                    .sum();
                prior + direct_row_loglik(&params, &y, &wm)
            })
            .collect();
        let expected = normalize_log(&lw);
        worst = worst.max(max_diff(&w_block_conditional(&config, &params, &y, z[n]).unwrap(), &expected));
        let idx = |v: &[u8]| v.iter().enumerate().map(|(k, b)| (*b as usize) << k).sum::<usize>();
        for j in 0..config.q {
            let (mut on, mut off) = (wn.clone(), wn.clone());
            on[j] = 1;
            off[j] = 0;
            let pe = expected[idx(&on)] / (expected[idx(&on)] + expected[idx(&off)]);
            worst = worst.max((w_entry_conditional(&config, &params, &y, &wn, j, z[n]).unwrap() - pe).abs());
        }
    }

    for i in 0..config.p {
        let t = data.t_design(i);
        let y_col: Vec<u32> = data.y.column(i).iter().copied().collect();
        let lw: Vec<f64> = (0..1usize << config.q)
            .map(|m| {
                let gm = bits(m, config.q);
                let prior: f64 = (0..config.q)
                    .map(|j| {
                        let l: f64 = params.theta.row(j).iter().zip(t.iter()).map(|(a, b)| a * b).sum();
                        if gm[j] == 1 {
                            logistic(l).ln()
                        } else {
                            (1.0 - logistic(l)).ln()
                        }
                    })
                    .sum();
                let b = &params.beta[i][0];
                let lik: f64 = (0..data.n())
                    .map(|n| {
                        let wn: Vec<u8> = w.row(n).iter().copied().collect();
                        log_lik_binary_entry(y_col[n] as u8, &wn, &gm, b[0], &b.as_slice()[1..]).unwrap()
                    })
                    .sum();
                prior + lik
            })
            .collect();
        let expected = normalize_log(&lw);
        worst = worst.max(max_diff(&g_block_conditional(&config, &params, &w, &y_col, &t, i).unwrap(), &expected));
        let gi: usize = (0..config.q).map(|j| (params.g[(i, j)] as usize) << j).sum();
        for j in 0..config.q {
            let (on, off) = (gi | (1 << j), gi & !(1 << j));
            let pe = expected[on] / (expected[on] + expected[off]);
            worst = worst.max((g_entry_conditional(&config, &params, &w, &y_col, &t, i, j).unwrap() - pe).abs());
        }
    }
    worst
}

// Joint-distribution ("getting it right") check. The marginal-conditional
// simulator draws parameters from the prior and data from the likelihood
// independently each step; the successive-conditional simulator alternates one
// Gibbs sweep with a fresh draw of `Y` given the current state. Both target the
// same joint, so test-statistic means agree when every conditional is correct.

fn statistics(config: &ModelConfig, params: &Params, z: &[usize], w: &DMatrix<u8>) -> Vec<f64> {
    let binary: Vec<usize> = (0..config.p).filter(|&i| config.entries[i] == EntryKind::Binary).collect();
    let mean_intercept = binary.iter().map(|&i| params.beta[i][0][0]).sum::<f64>() / binary.len() as f64;
    let mean_slope = binary.iter().map(|&i| params.beta[i][0][1]).sum::<f64>() / binary.len() as f64;
    let mean_sq =
        binary.iter().map(|&i| params.beta[i][0].iter().map(|b| b * b).sum::<f64>()).sum::<f64>() / binary.len() as f64;
    let mut s = vec![
        params.alpha[(0, 0)],
        params.alpha[(1, 1)],
        params.alpha.mean(),
        mean_intercept,
        mean_slope,
        mean_sq,
        params.gamma[(0, 0)],
        params.gamma[(0, 1)],
        w.iter().map(|v| *v as f64).sum::<f64>() / w.len() as f64,
        z.iter().filter(|&&h| h == 0).count() as f64 / z.len() as f64,
        params.theta[(0, 0)],
        params.theta[(1, 1)],
        params.g.iter().map(|v| *v as f64).sum::<f64>() / params.g.len() as f64,
    ];
    for (i, kind) in config.entries.iter().enumerate() {
        match kind {
            EntryKind::Categorical(_) => {
                s.push(params.beta[i][0][0]);
                s.push(params.beta[i][1][2]);
            }
            EntryKind::Count => {
                s.push(params.beta[i][0][0]);
                s.push(params.beta[i][0][1]);
            }
            EntryKind::Binary => {}
        }
    }
    s
}

struct Moments {
    values: Vec<Vec<f64>>,
}

impl Moments {
    fn mean(&self, k: usize) -> f64 {
        self.values.iter().map(|v| v[k]).sum::<f64>() / self.values.len() as f64
    }

    fn iid_se(&self, k: usize) -> f64 {
        let m = self.mean(k);
        let n = self.values.len() as f64;
        (self.values.iter().map(|v| (v[k] - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    }

    fn batch_se(&self, k: usize, batches: usize) -> f64 {
        let len = self.values.len() / batches;
        let means: Vec<f64> = (0..batches)
            .map(|b| self.values[b * len..(b + 1) * len].iter().map(|v| v[k]).sum::<f64>() / len as f64)
            .collect();
        let m = means.iter().sum::<f64>() / batches as f64;
        (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0) / batches as f64).sqrt()
    }
}

/// z-scores of the difference in test-statistic means between the two
/// simulators, `n` observations, `steps` draws from each.
pub fn geweke(
    config: &ModelConfig,
    n: usize,
    w_mode: UpdateMode,
    g_mode: UpdateMode,
    steps: usize,
    seed: u64,
) -> Vec<f64> {
    let hyper = Hyperparams::default_for(config);
    let meta = simulate_meta_covariates(config.p, config.pt, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, config.px, |_, _| rng.sample(StandardNormal));

    let mut marginal = Moments { values: Vec::with_capacity(steps) };
    for step in 0..steps {
        let params = draw_params_with_rng(config, &hyper, &meta, &mut rng, &PriorConstraints::default()).unwrap();
        let mut row = 0;
        let mut xs = |_: &mut dyn RngCore, px: usize| {
            let v: Vec<f64> = (0..px).map(|k| x[(row, k)]).collect();
            row += 1;
            v
        };
        let sim = simulate_dataset(config, &params, &meta, n, &mut xs, seed ^ (step as u64 + 1)).unwrap();
        marginal.values.push(statistics(config, &params, &sim.z, &sim.w));
    }

    let mut schedule = SamplerSchedule::new(2, 1, seed + 17);
    schedule.w_mode = w_mode;
    schedule.g_mode = g_mode;
    let params = draw_params_with_rng(config, &hyper, &meta, &mut rng, &PriorConstraints::default()).unwrap();
    let mut latents = LatentState::new(config, n);
    for r in 0..n {
        let xn: Vec<f64> = x.row(r).iter().copied().collect();
        let probs = dlcr::model::class_probs_given_x(&xn, &params.gamma).unwrap();
        latents.z[r] = dlcr::math::sample_probs(&probs, &mut rng);
        for j in 0..config.q {
            latents.w[(r, j)] = rng.random_bool(params.alpha[(j, latents.z[r])]) as u8;
        }
    }
    let mut state = ChainState { params, latents };
    let mut successive = Moments { values: Vec::with_capacity(steps) };
    for step in 0..steps {
        let y = simulate_outcomes(config, &state.params, &state.latents, &mut rng).unwrap();
        let data = Dataset::new(y, x.clone(), meta.clone()).unwrap();
        let mut sampler = Sampler::new(config, &data, &hyper, schedule.clone()).unwrap();
        sampler.sweep(&mut state, step as u64).unwrap();
        successive.values.push(statistics(config, &state.params, &state.latents.z, &state.latents.w));
    }

    (0..marginal.values[0].len())
        .map(|s| {
            let se = (marginal.iid_se(s).powi(2) + successive.batch_se(s, 50).powi(2)).sqrt();
            (marginal.mean(s) - successive.mean(s)) / se
        })
        .collect()
}

/// Three disjoint identity blocks by exhaustive search.
pub fn brute_strict(g: &DMatrix<u8>) -> bool {
    let (p, q) = g.shape();
    let slots = 3 * q;
    fn rec(g: &DMatrix<u8>, k: usize, slots: usize, used: &mut Vec<bool>) -> bool {
        if k == slots {
            return true;
        }
        let j = k % g.ncols();
        for i in 0..g.nrows() {
            let basis = (0..g.ncols()).all(|c| g[(i, c)] == (c == j) as u8);
            if !used[i] && basis {
                used[i] = true;
                if rec(g, k + 1, slots, used) {
                    return true;
                }
                used[i] = false;
            }
        }
        false
    }
    q > 0 && p >= slots && rec(g, 0, slots, &mut vec![false; p])
}

/// Distinct columns plus two disjoint unit-diagonal blocks with every column
/// still loaded in the remaining rows, by exhaustive search.
pub fn brute_generic(g: &DMatrix<u8>) -> bool {
    let (p, q) = g.shape();
    let distinct = (0..q).all(|a| (a + 1..q).all(|b| g.column(a) != g.column(b)));
    fn rec(g: &DMatrix<u8>, k: usize, used: &mut Vec<bool>) -> bool {
        let q = g.ncols();
        if k == 2 * q {
            return (0..q).all(|j| (0..g.nrows()).any(|i| !used[i] && g[(i, j)] == 1));
        }
        for i in 0..g.nrows() {
            if !used[i] && g[(i, k % q)] == 1 {
                used[i] = true;
                if rec(g, k + 1, used) {
                    return true;
                }
                used[i] = false;
            }
        }
        false
    }
    q > 0 && distinct && rec(g, 0, &mut vec![false; p])
}

/// Exact marginal posterior of `β₀` on a grid for an unloaded count row with a
/// standard normal prior.
pub fn poisson_grid_posterior(y: &[u32], grid: &[f64]) -> Vec<f64> {
    let total: f64 = y.iter().map(|&v| v as f64).sum();
    let n = y.len() as f64;
    let logs: Vec<f64> = grid.iter().map(|b| -0.5 * b * b + total * b - n * b.exp()).collect();
    normalize_log(&logs)
}

pub struct PoissonCheck {
    pub tv: f64,
    pub mean_z: f64,
    pub acceptance: f64,
}

/// Runs the count-row Metropolis kernel on an unloaded row and compares its
/// histogram on `[-2, 2]` (40 bins) with quadrature.
pub fn poisson_mh_check(y: &[u32], steps: usize, step_scale: f64, seed: u64) -> PoissonCheck {
    let actives = vec![0u64; y.len()];
    let prec = DMatrix::identity(2, 2);
    let mean = DVector::zeros(2);
    let tuning = MhTuning { step_scale };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coef = DVector::zeros(2);
    let (lo, hi, bins) = (-2.0, 2.0, 40usize);
    let width = (hi - lo) / bins as f64;
    let mut hist = vec![0.0; bins];
    let mut accepted = 0;
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        accepted += mh_update_poisson_row(&mut coef, &actives, y, &prec, &mean, &tuning, &mut rng) as usize;
        let b = ((coef[0] - lo) / width).floor();
        if (0.0..bins as f64).contains(&b) {
            hist[b as usize] += 1.0;
        }
        trace.push(coef[0]);
    }

    let fine = 200;
    let grid: Vec<f64> = (0..bins * fine).map(|k| lo + (k as f64 + 0.5) * width / fine as f64).collect();
    let dens = poisson_grid_posterior(y, &grid);
    let exact: Vec<f64> = (0..bins).map(|b| dens[b * fine..(b + 1) * fine].iter().sum()).collect();
    let tv = 0.5 * hist.iter().zip(&exact).map(|(h, e)| (h / steps as f64 - e).abs()).sum::<f64>();

    let exact_mean: f64 = grid.iter().zip(&dens).map(|(g, d)| g * d).sum();
    let (m, se) = batch_mean(&trace, 50);
    PoissonCheck { tv, mean_z: (m - exact_mean) / se.max(1e-3), acceptance: accepted as f64 / steps as f64 }
}

/// Mean and batch-means standard error.
pub fn batch_mean(v: &[f64], batches: usize) -> (f64, f64) {
    let len = v.len() / batches;
    let means: Vec<f64> = (0..batches).map(|j| v[j * len..(j + 1) * len].iter().sum::<f64>() / len as f64).collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (m, (var / batches as f64).sqrt())
}

/// Binary `y ∈ {0,1}` as a two-level categorical: 1 → level 1, 0 → baseline 2.
pub fn as_categorical(y: u32) -> u32 {
    if y == 1 {
        1
    } else {
        2
    }
}

/// Fits the same binary data as binary entries and as two-level categorical
/// entries and returns, per entry, the z-score of the difference in the
/// posterior mean of `β₀ + ½ g β₁`. That statistic is invariant under the
/// `w ↔ 1−w` symmetry at `q = 1`.
pub fn two_level_zscores(n_iters: usize, burn_in: usize, seed: u64) -> Vec<f64> {
    let config = ModelConfig::binary(6, 1, 2, 1, 1);
    let meta = simulate_meta_covariates(6, 1, seed);
    let hyper = Hyperparams::default_for(&config);
    let truth = draw_params_from_prior(&config, &hyper, &meta, seed + 1, &PriorConstraints::default()).unwrap();
    let sim = simulate_dataset(&config, &truth, &meta, 80, &mut StandardNormalCovariates, seed + 2).unwrap();
    let mut cat_config = config.clone();
    cat_config.entries = vec![EntryKind::Categorical(2); 6];
    let cat_data = Dataset::new(sim.data.y.map(as_categorical), sim.data.x.clone(), meta.clone()).unwrap();

    let schedule = SamplerSchedule::new(n_iters, burn_in, seed + 3);
    let a = run_chain(&sim.data, &config, &hyper, &schedule, None).unwrap();
    let mut schedule_b = schedule.clone();
    schedule_b.seed = seed + 4;
    let b = run_chain(&cat_data, &cat_config, &hyper, &schedule_b, None).unwrap();

    (0..6)
        .map(|i| {
            let stat = |s: &PosteriorSamples| -> Vec<f64> {
                s.params.iter().map(|p| p.beta[i][0][0] + 0.5 * p.g[(i, 0)] as f64 * p.beta[i][0][1]).collect()
            };
            let ((ma, sea), (mb, seb)) = (batch_mean(&stat(&a), 25), batch_mean(&stat(&b), 25));
            (ma - mb) / (sea * sea + seb * seb).sqrt()
        })
        .collect()
}
