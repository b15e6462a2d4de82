use dlcr::gibbs::{run_chain, PosteriorSamples, SamplerSchedule};
use dlcr::model::{
    draw_params_from_prior, simulate_dataset, simulate_meta_covariates, Hyperparams, ModelConfig, PriorConstraints,
    StandardNormalCovariates,
};
use dlcr::postproc::{apply_relabeling, refine_g, relabel, relabeling_for, summarize, waic, Interval, Relabeling};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn short_chain(q: usize, d: usize, seed: u64) -> PosteriorSamples {
    let config = ModelConfig::binary(9, q, d, 1, 1);
    let meta = simulate_meta_covariates(9, 1, seed);
    let hyper = Hyperparams::default_for(&config);
    let truth =
        draw_params_from_prior(&config, &hyper, &meta, seed + 1, &PriorConstraints::simulation_truth()).unwrap();
    let sim = simulate_dataset(&config, &truth, &meta, 60, &mut StandardNormalCovariates, seed + 2).unwrap();
    run_chain(&sim.data, &config, &hyper, &SamplerSchedule::new(80, 40, seed + 3), None).unwrap()
}

fn assert_same_archive(a: &PosteriorSamples, b: &PosteriorSamples) {
    assert_eq!(a.z, b.z);
    assert_eq!(a.w, b.w);
    for (x, y) in a.params.iter().zip(&b.params) {
        assert_eq!(x.g, y.g);
        assert!((&x.alpha - &y.alpha).abs().max() < 1e-12);
        assert!((&x.gamma - &y.gamma).abs().max() < 1e-12);
        assert!((&x.theta - &y.theta).abs().max() < 1e-12);
        for (bx, by) in x.beta.iter().zip(&y.beta) {
            for (lx, ly) in bx.iter().zip(by) {
                assert!((lx - ly).abs().max() < 1e-12);
            }
        }
    }
}

#[test]
fn relabel_is_idempotent() {
    let (once, _) = relabel(&short_chain(2, 3, 10)).unwrap();
    let (twice, perm) = relabel(&once).unwrap();
    assert!(perm.is_identity());
    assert_same_archive(&once, &twice);
}

#[test]
fn sorted_archive_is_unchanged() {
    let (sorted, _) = relabel(&short_chain(2, 2, 20)).unwrap();
    assert!(relabeling_for(&sorted.params).unwrap().is_identity());
}

#[test]
fn swapped_attributes_are_recovered() {
    let (canonical, _) = relabel(&short_chain(2, 2, 30)).unwrap();
    let swap = Relabeling { attributes: vec![1, 0], classes: vec![0, 1] };
    let scrambled = apply_relabeling(&canonical, &swap);
    let (recovered, perm) = relabel(&scrambled).unwrap();
    assert_eq!(perm.attributes, vec![1, 0]);
    assert_same_archive(&canonical, &recovered);
}

#[test]
fn class_permutations_give_equal_summaries() {
    let base = short_chain(2, 3, 40);
    let shifted = apply_relabeling(&base, &Relabeling { attributes: vec![0, 1], classes: vec![2, 0, 1] });
    let (a, _) = relabel(&base).unwrap();
    let (b, _) = relabel(&shifted).unwrap();
    let (sa, sb) = (summarize(&a).unwrap(), summarize(&b).unwrap());
    assert_eq!(sa.z_mode, sb.z_mode);
    assert_eq!(sa.g_mode, sb.g_mode);
    assert!((&sa.class_probs - &sb.class_probs).abs().max() < 1e-12);
    for (x, y) in sa.alpha.iter().zip(sb.alpha.iter()) {
        assert!((x.mean - y.mean).abs() < 1e-12);
    }
    for (x, y) in sa.gamma.iter().zip(sb.gamma.iter()) {
        assert!((x.mean - y.mean).abs() < 1e-9);
    }
}

#[test]
fn relabel_keeps_gamma_baseline_pinned() {
    let (out, _) = relabel(&short_chain(2, 3, 50)).unwrap();
    for p in &out.params {
        assert!(p.gamma.row(2).iter().all(|v| *v == 0.0));
    }
}

#[test]
fn refine_examples() {
    let samples = short_chain(2, 2, 60);
    let tiny = refine_g(&samples, 1e-300).unwrap();
    for (a, b) in samples.params.iter().zip(&tiny.params) {
        assert_eq!(a.g, b.g);
    }
    let huge = refine_g(&samples, 1e9).unwrap();
    assert!(huge.params.iter().all(|p| p.g.iter().all(|&v| v == 0)));
    assert!(refine_g(&samples, 0.0).is_err());
    assert!(refine_g(&samples, f64::NAN).is_err());

    let mut one = samples.clone();
    one.params.truncate(1);
    one.params[0].g[(0, 0)] = 1;
    one.params[0].beta[0][0][1] = 1.5;
    one.params[0].g[(1, 0)] = 1;
    one.params[0].beta[1][0][1] = -2.5;
    let refined = refine_g(&one, 2.0).unwrap();
    assert_eq!(refined.params[0].g[(0, 0)], 0);
    assert_eq!(refined.params[0].g[(1, 0)], 1);
}

#[test]
fn refine_is_monotone_and_never_adds() {
    let samples = short_chain(2, 2, 70);
    let mut prev = samples.clone();
    for thr in [0.1, 0.5, 1.0, 2.0, 4.0] {
        let next = refine_g(&samples, thr).unwrap();
        for ((a, b), orig) in prev.params.iter().zip(&next.params).zip(&samples.params) {
            assert!(a.g.iter().zip(b.g.iter()).all(|(x, y)| y <= x));
            assert!(orig.g.iter().zip(b.g.iter()).all(|(x, y)| y <= x));
        }
        prev = next;
    }
}

#[test]
fn identical_samples_summarize_to_themselves() {
    let mut samples = short_chain(2, 2, 80);
    let p0 = samples.params[0].clone();
    let (z0, w0) = (samples.z[0].clone(), samples.w[0].clone());
    for k in 0..samples.len() {
        samples.params[k] = p0.clone();
        samples.z[k] = z0.clone();
        samples.w[k] = w0.clone();
    }
    let s = summarize(&samples).unwrap();
    for (iv, v) in s.alpha.iter().zip(p0.alpha.iter()) {
        assert!((iv.mean - v).abs() < 1e-12 && iv.lower == *v && iv.upper == *v);
    }
    assert_eq!(s.g_mode, p0.g);
    assert_eq!(s.z_mode, z0);
    assert_eq!(s.w_mode, w0);
    assert!(!s.warnings.is_empty());
}

#[test]
fn class_mode_by_counting() {
    let mut samples = short_chain(1, 2, 90);
    samples.params.truncate(3);
    samples.z = vec![vec![0; 60], vec![0; 60], vec![1; 60]];
    samples.w.truncate(3);
    let s = summarize(&samples).unwrap();
    assert_eq!(s.z_mode[0], 0);
    assert!((s.class_probs[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn mode_ties_go_to_the_smaller_label() {
    let mut samples = short_chain(1, 2, 95);
    samples.params.truncate(2);
    samples.z = vec![vec![0; 60], vec![1; 60]];
    samples.w.truncate(2);
    assert_eq!(summarize(&samples).unwrap().z_mode[0], 0);
}

#[test]
fn alpha_means_are_interior() {
    let s = summarize(&short_chain(2, 2, 100)).unwrap();
    assert!(s.alpha.iter().all(|iv| iv.mean > 0.0 && iv.mean < 1.0));
    assert!(s.class_probs.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn gaussian_interval_coverage_is_nominal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reps = 2000;
    let mut covered = 0;
    for _ in 0..reps {
        let mut draws: Vec<f64> = (0..400).map(|_| rng.sample(StandardNormal)).collect();
        let iv = Interval::from_draws(&mut draws);
        let fresh: f64 = rng.sample(StandardNormal);
        covered += iv.contains(fresh) as usize;
    }
    let rate = covered as f64 / reps as f64;
    // nominal 0.95 with sd ≈ 0.005 over replicates
    assert!((rate - 0.95).abs() < 0.02, "coverage {rate}");
}

#[test]
fn empty_archive_is_an_error() {
    let mut samples = short_chain(1, 1, 110);
    samples.params.clear();
    samples.z.clear();
    samples.w.clear();
    assert!(summarize(&samples).is_err());
    assert!(relabel(&samples).is_err());
}

proptest! {
    #[test]
    fn waic_is_invariant_to_sample_order(
        values in proptest::collection::vec(-8.0f64..0.0, 12),
        shift in 1usize..4,
    ) {
        let m = DMatrix::from_row_slice(4, 3, &values);
        let permuted = DMatrix::from_fn(4, 3, |s, n| m[((s + shift) % 4, n)]);
        let (a, b) = (waic(&m).unwrap(), waic(&permuted).unwrap());
        prop_assert!((a.waic - b.waic).abs() < 1e-10);
        prop_assert!(a.p_waic >= 0.0);
        prop_assert!((a.waic + 2.0 * (a.lppd - a.p_waic)).abs() < 1e-10);
    }
}
