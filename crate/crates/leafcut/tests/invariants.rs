//! Cross-module statistical invariants and property tests that go beyond
//! the per-module unit suites.

use leafcut::coding::{decode, encode, leaf_time_change};
use leafcut::cut::{mb_tree_sample_with, mod_cut_tree};
use leafcut::metric::erasure_ghp_gap;
use leafcut::offspring::{leaf_count_pmf, norming, LeafCountDp, OffspringDist};
use leafcut::rng::substream;
use leafcut::sampler::{sample_gw_n_leaves, SamplerConfig};
use leafcut::stats::ks_two_sample;
use leafcut::tree::{enumerate_trees, gw_weight, PlanarTree};
use proptest::prelude::*;
use rand::Rng;
use std::collections::HashMap;

fn binary() -> OffspringDist {
    OffspringDist::new_critical(&[(0, 0.5), (2, 0.5)]).unwrap()
}

fn mixed() -> OffspringDist {
    OffspringDist::new_critical(&[(0, 7.0 / 12.0), (2, 0.25), (3, 1.0 / 6.0)]).unwrap()
}

proptest! {
    // Any valid parent array canonicalizes to a stable depth-first form.
    #[test]
    fn parent_array_canonicalization_is_idempotent(seed in 0u64..1_000_000) {
        let mut rng = substream(seed, 17);
        let n = rng.gen_range(1..40usize);
        let mut parents = vec![-1i64];
        for v in 1..n {
            parents.push(rng.gen_range(0..v) as i64);
        }
        let t = PlanarTree::from_parents(&parents).unwrap();
        let again = PlanarTree::from_parents(&t.to_parents()).unwrap();
        prop_assert_eq!(t.to_parents(), again.to_parents());
    }

    // Coding invariants on sampled conditioned trees.
    #[test]
    fn coding_invariants_hold(seed in 0u64..1_000_000) {
        let nu = mixed();
        let mut rng = substream(seed, 23);
        let sizes = [1usize, 2, 3, 5, 8, 13, 21];
        let n = sizes[rng.gen_range(0..sizes.len())];
        let cfg = SamplerConfig::for_n_leaves(n);
        let t = sample_gw_n_leaves(&nu, n, &cfg, &mut rng).unwrap().tree;
        let b = encode(&t);
        prop_assert_eq!(decode(&b.lukasiewicz).unwrap(), t.clone());
        prop_assert_eq!(*b.leaf_count.last().unwrap() as usize, t.n_leaves());
        prop_assert_eq!(*b.lukasiewicz.values().last().unwrap(), -1);
        let max_h = *b.height.iter().max().unwrap();
        prop_assert_eq!(max_h as usize, t.stats().max_gen);
        prop_assert_eq!(*b.contour.iter().max().unwrap(), max_h);
        // The leaf time change visits one value per leaf and ends at -1.
        let tc = leaf_time_change(&b.lukasiewicz);
        prop_assert_eq!(tc.len_steps(), t.n_leaves());
        prop_assert_eq!(*tc.values().last().unwrap(), -1);
    }
}

#[test]
fn conditional_shape_frequencies_match_enumeration() {
    // Shape frequencies of the conditioned sampler against the enumerated
    // conditional weights, four standard errors at 1e5 replicates.
    let cases: Vec<(OffspringDist, usize, u64)> = (2..=5usize)
        .flat_map(|n| [(binary(), n, 50 + n as u64), (mixed(), n, 60 + n as u64)])
        .collect();
    for (nu, n, seed) in cases {
        let trees = enumerate_trees(n, &nu.branch_support(), 8).unwrap();
        let weights: Vec<f64> = trees.iter().map(|t| gw_weight(t, &nu)).collect();
        let total: f64 = weights.iter().sum();
        let expected: HashMap<Vec<i64>, f64> = trees
            .iter()
            .zip(&weights)
            .map(|(t, w)| (t.to_parents(), w / total))
            .collect();
        let reps = 100_000;
        let cfg = SamplerConfig::for_n_leaves(n);
        let mut freq: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut rng = substream(seed, 0);
        for _ in 0..reps {
            let t = sample_gw_n_leaves(&nu, n, &cfg, &mut rng).unwrap().tree;
            *freq.entry(t.to_parents()).or_default() += 1;
        }
        for (shape, &p) in &expected {
            let obs = freq.get(shape).copied().unwrap_or(0) as f64 / reps as f64;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!(
                (obs - p).abs() <= 4.0 * se,
                "shape {shape:?}: observed {obs}, expected {p}"
            );
        }
        for shape in freq.keys() {
            assert!(expected.contains_key(shape), "unexpected shape {shape:?}");
        }
    }
}

#[test]
fn rejection_acceptance_rate_matches_leaf_pmf() {
    // The acceptance rate at n = 20 is the exact leaf-count probability.
    let nu = binary();
    let n = 20;
    let p = leaf_count_pmf(&nu, 1, n, 500).unwrap();
    let cfg = SamplerConfig::for_n_leaves(n);
    let mut rng = substream(53, 0);
    let samples = 3_000u64;
    let mut attempts = 0u64;
    for _ in 0..samples {
        attempts += sample_gw_n_leaves(&nu, n, &cfg, &mut rng).unwrap().attempts;
    }
    let rate = samples as f64 / attempts as f64;
    let se = (p * (1.0 - p) / attempts as f64).sqrt();
    assert!(
        (rate - p).abs() <= 3.0 * se,
        "acceptance rate {rate} vs pmf {p} (se {se})"
    );
}

#[test]
fn vertex_count_concentrates_at_inverse_nu0() {
    // zeta(G)/n near 1/nu0 within five percent at n = 1000.
    for (nu, seed) in [(binary(), 54u64), (mixed(), 55)] {
        let n = 1000;
        let cfg = SamplerConfig::for_n_leaves(n);
        let reps = 120;
        let mut sum = 0.0;
        for rep in 0..reps {
            let mut rng = substream(seed, rep);
            let t = sample_gw_n_leaves(&nu, n, &cfg, &mut rng).unwrap().tree;
            sum += t.n_vertices() as f64 / n as f64;
        }
        let mean = sum / reps as f64;
        let target = 1.0 / nu.nu0();
        assert!(
            (mean / target - 1.0).abs() < 0.05,
            "mean zeta/n {mean} vs 1/nu0 {target}"
        );
    }
}

#[test]
fn mb_tree_matches_mod_cut_tree_leaf_depths() {
    // The Markov branching sampler and the modified cut-tree produce the
    // same leaf-depth law: two-sample KS at n = 300, majority of three
    // seeds at the one-percent level.
    let nu = binary();
    let n = 300;
    let reps = 2000u64;
    let cfg = SamplerConfig::for_n_leaves(n);
    let mut dp = LeafCountDp::new(&nu, n + 1);
    dp.warm(nu.max_k() + 1).unwrap();
    let mut passes = 0;
    for seed in [56u64, 57, 58] {
        let mut xs = Vec::with_capacity(reps as usize);
        let mut ys = Vec::with_capacity(reps as usize);
        for rep in 0..reps {
            let mut rng = substream(seed, rep);
            let t = sample_gw_n_leaves(&nu, n, &cfg, &mut rng).unwrap().tree;
            let ct = mod_cut_tree(&t, &mut rng).unwrap();
            let depths = ct.leaf_depths();
            xs.push(depths[rng.gen_range(0..depths.len())] as f64);
            let mut dp_local = dp.clone();
            let mb = mb_tree_sample_with(&nu, &mut dp_local, n, &mut rng).unwrap();
            let mb_depths = mb.depths();
            let leaves = mb.leaves();
            ys.push(mb_depths[leaves[rng.gen_range(0..leaves.len())]] as f64);
        }
        let ks = ks_two_sample(&xs, &ys).unwrap();
        if ks.p_value > 0.01 {
            passes += 1;
        }
    }
    assert!(passes >= 2, "only {passes} of 3 seeds passed");
}

#[test]
fn erasure_ghp_gap_decreases_at_n500() {
    // The bound between the rescaled tree and its erased version shrinks
    // as the erasure depth drops.
    let nu = binary();
    let n = 500;
    let cfg = SamplerConfig::for_n_leaves(n);
    let mut rng = substream(59, 0);
    let t = sample_gw_n_leaves(&nu, n, &cfg, &mut rng).unwrap().tree;
    let c_n = norming(&nu, n).unwrap().c_n.unwrap();
    let gaps: Vec<f64> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&eps| erasure_ghp_gap(&t, c_n, eps, 1e-6).unwrap())
        .collect();
    assert!(
        gaps[0] > gaps[1] && gaps[1] > gaps[2],
        "gaps not decreasing: {gaps:?}"
    );
}
