//! Structural properties of the Monte-Carlo set acquisition on shared draws.

use beamtrack_core::acquisition::{believed_best, AcquisitionContext, OverheadPenalty};
use beamtrack_core::Posterior;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_posterior(n: usize, seed: u64) -> Posterior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
    let cov = &a * a.transpose() / n as f64;
    let mean = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    Posterior::from_mean_cov(rng.random_range(0..1000), mean, cov).unwrap()
}

fn context(n: usize, seed: u64, samples: usize) -> AcquisitionContext {
    AcquisitionContext::new(random_posterior(n, seed), samples, seed ^ 0xabc).unwrap()
}

/// Random disjoint `B ⊂ B'` and `b* ∉ B'` over `0..n`.
fn nested_sets(n: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>, usize) {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let b_star = perm[0];
    let big = rng.random_range(1..n);
    let small = rng.random_range(0..=big);
    (
        perm[1..1 + small].to_vec(),
        perm[1..1 + big].to_vec(),
        b_star,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn monotone_and_submodular_on_every_sample(n in 3usize..12, seed in any::<u64>()) {
        let ctx = context(n, seed, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let (b, bp, b_star) = nested_sets(n, &mut rng);
            let with = |s: &[usize]| { let mut v = s.to_vec(); v.push(b_star); v };
            let (f_b, f_bp) = (ctx.pathwise_improvement(&b), ctx.pathwise_improvement(&bp));
            let (g_b, g_bp) = (ctx.pathwise_improvement(&with(&b)), ctx.pathwise_improvement(&with(&bp)));
            for s in 0..ctx.mc_samples() {
                prop_assert!(f_b[s] <= f_bp[s]);
                prop_assert!(g_bp[s] - f_bp[s] <= g_b[s] - f_b[s] + 1e-12);
            }
            prop_assert!(ctx.j_estimate(&b) <= ctx.j_estimate(&bp));
            prop_assert!(ctx.j_estimate(&b) >= 0.0);
        }
    }

    #[test]
    fn chosen_beamset_is_greedy_prefix(n in 2usize..16, seed in any::<u64>(), c1 in 0.0f64..0.5, c2 in 0.0f64..0.05, cap in 1usize..16) {
        let ctx = context(n, seed, 256);
        let penalty = OverheadPenalty::new(c1, c2, cap.min(n)).unwrap();
        let choice = ctx.choose_beamset(&penalty);
        let full = ctx.greedy_fixed_size(penalty.n_max).unwrap();
        prop_assert!(!choice.beams.is_empty());
        prop_assert!(choice.beams.len() <= penalty.n_max);
        prop_assert_eq!(&choice.beams[..], &full.beams[..choice.beams.len()]);
        prop_assert_eq!(&choice.j_values[..], &full.j_values[..choice.beams.len()]);
        prop_assert!(choice.j_values.windows(2).all(|w| w[0] <= w[1]));
        let mut sorted = choice.beams.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), choice.beams.len());
    }

    #[test]
    fn believed_best_shifts_with_the_mean(n in 1usize..10, seed in any::<u64>(), c in -50.0f64..50.0) {
        let p = random_posterior(n, seed);
        let shifted = Posterior::from_mean_cov(p.slot, p.mean.add_scalar(c), p.cov.clone()).unwrap();
        prop_assert!((believed_best(&shifted) - believed_best(&p) - c).abs() < 1e-12);
    }

    #[test]
    fn penalty_is_convex_and_increasing(c1 in 0.0f64..5.0, c2 in 0.0f64..5.0, n in 1usize..60) {
        let p = OverheadPenalty::new(c1, c2, 64).unwrap();
        prop_assert_eq!(p.cost(0), 0.0);
        prop_assert!(p.cost(n + 1) >= p.cost(n));
        prop_assert!(p.cost(n + 1) - p.cost(n) >= p.cost(n) - p.cost(n - 1) - 1e-9);
    }
}

#[test]
fn extreme_penalty_always_gives_a_singleton() {
    for seed in 0..50 {
        let ctx = context(8, seed, 128);
        let choice = ctx.choose_beamset(&OverheadPenalty::new(1e6, 0.0, 8).unwrap());
        assert_eq!(choice.beams.len(), 1);
        let best_ei = (0..8)
            .map(|b| ctx.j_estimate(&[b]))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(choice.j_values[0], best_ei);
    }
}

#[test]
fn full_dictionary_value_is_order_independent() {
    let ctx = context(9, 3, 512);
    let forward: Vec<usize> = (0..9).collect();
    let backward: Vec<usize> = (0..9).rev().collect();
    assert_eq!(ctx.j_estimate(&forward), ctx.j_estimate(&backward));
    let greedy = ctx.greedy_fixed_size(9).unwrap();
    assert_eq!(*greedy.j_values.last().unwrap(), ctx.j_estimate(&forward));
}
