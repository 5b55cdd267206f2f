//! Sampling Galton-Watson trees, unconditioned and conditioned to have
//! exactly `n` leaves.
//!
//! The conditioned sampler is plain rejection: the tree cannot in general be
//! rebuilt from the leaf-time-changed walk, so there is no direct
//! construction to shortcut it. Generation is depth-first so vertex order
//! matches the Lukasiewicz indexing.

use crate::error::Error;
use crate::offspring::OffspringDist;
use crate::tree::{enumerate_trees, gw_weight, PlanarTree};
use crate::Result;
use rand::Rng;

/// Caps and method selection for the conditioned sampler.
#[derive(Clone, Copy, Debug)]
pub struct SamplerConfig {
    pub max_attempts: u64,
    pub max_vertices: usize,
    pub method: SampleMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMethod {
    Rejection,
    /// Exact sampling from the enumerated shape table; only for small `n`.
    ExactEnum,
}

impl SamplerConfig {
    /// Attempt and size caps comfortable for the given target leaf count.
    pub fn for_n_leaves(n: usize) -> Self {
        SamplerConfig {
            // Acceptance decays like n^{-3/2}; leave two orders of headroom.
            max_attempts: 2_000 + 4_000 * (n as u64).pow(2) / (n as u64).max(1).isqrt().max(1),
            max_vertices: 16 * n + 64,
            method: SampleMethod::Rejection,
        }
    }
}

/// Inverse-cdf offspring sampler over precomputed integer thresholds; one
/// unsigned draw and a short scan per child count. Laws of the form
/// `{0: 1/2, k: 1/2}` spend a single buffered coin flip per draw instead.
pub enum OffspringSampler {
    Table {
        thresholds: Vec<u64>,
        values: Vec<usize>,
    },
    FairCoin {
        branch_k: usize,
        buf: u64,
        left: u32,
    },
}

impl OffspringSampler {
    pub fn new(nu: &OffspringDist) -> Self {
        let support = nu.support();
        if support.len() == 2 && support[0] == 0 && nu.pmf(0) == 0.5 {
            return OffspringSampler::FairCoin {
                branch_k: support[1],
                buf: 0,
                left: 0,
            };
        }
        let mut thresholds = Vec::with_capacity(support.len());
        let mut acc = 0.0f64;
        for &k in &support {
            acc += nu.pmf(k);
            let t = if acc >= 1.0 {
                u64::MAX
            } else {
                (acc * u64::MAX as f64) as u64
            };
            thresholds.push(t);
        }
        *thresholds.last_mut().expect("nonempty support") = u64::MAX;
        OffspringSampler::Table {
            thresholds,
            values: support,
        }
    }

    #[inline]
    pub fn draw<R: Rng>(&mut self, rng: &mut R) -> usize {
        match self {
            OffspringSampler::Table { thresholds, values } => {
                let u: u64 = rng.gen();
                for (i, &t) in thresholds.iter().enumerate() {
                    if u <= t {
                        return values[i];
                    }
                }
                *values.last().unwrap()
            }
            OffspringSampler::FairCoin { branch_k, buf, left } => {
                if *left == 0 {
                    *buf = rng.gen();
                    *left = 64;
                }
                let bit = *buf & 1;
                *buf >>= 1;
                *left -= 1;
                if bit == 1 {
                    0
                } else {
                    *branch_k
                }
            }
        }
    }
}

/// One unconditioned Galton-Watson tree in depth-first order; fails with an
/// explicit overflow (never a truncated tree) once `max_vertices` is hit.
pub fn sample_gw<R: Rng>(nu: &OffspringDist, max_vertices: usize, rng: &mut R) -> Result<PlanarTree> {
    nu.require_critical()?;
    let mut sampler = OffspringSampler::new(nu);
    let mut counts = Vec::new();
    if grow_into(&mut sampler, max_vertices, usize::MAX, &mut counts, rng) {
        PlanarTree::from_child_counts(&counts)
    } else {
        Err(Error::SampleOverflow(max_vertices))
    }
}

/// Depth-first growth of offspring counts into a reused buffer; `false`
/// when a cap trips. Growth aborts as soon as the final leaf count is
/// forced past `max_leaves` (every pending subtree contributes at least
/// one leaf), which rejects exactly the trees a conditioned sampler would
/// discard anyway.
fn grow_into<R: Rng>(
    sampler: &mut OffspringSampler,
    max_vertices: usize,
    max_leaves: usize,
    counts: &mut Vec<usize>,
    rng: &mut R,
) -> bool {
    counts.clear();
    let mut pending = 1usize;
    let mut leaves = 0usize;
    while pending > 0 {
        if counts.len() >= max_vertices {
            return false;
        }
        let k = sampler.draw(rng);
        counts.push(k);
        pending += k;
        pending -= 1;
        if k == 0 {
            leaves += 1;
        }
        if leaves + pending > max_leaves {
            return false;
        }
    }
    true
}

/// A conditioned tree together with the number of rejection attempts spent.
pub struct ConditionedSample {
    pub tree: PlanarTree,
    pub attempts: u64,
}

/// Exact sampling of a Galton-Watson tree conditioned to have `n` leaves.
pub fn sample_gw_n_leaves<R: Rng>(
    nu: &OffspringDist,
    n: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<ConditionedSample> {
    nu.require_critical()?;
    if !nu.feasible_leaf_count(n) {
        return Err(Error::InfeasibleLeafCount(n));
    }
    match cfg.method {
        SampleMethod::ExactEnum => sample_by_enumeration(nu, n, rng),
        SampleMethod::Rejection => {
            let mut sampler = OffspringSampler::new(nu);
            let mut counts = Vec::with_capacity(4 * n);
            for attempt in 1..=cfg.max_attempts {
                if grow_into(&mut sampler, cfg.max_vertices, n, &mut counts, rng) {
                    let leaves = counts.iter().filter(|&&k| k == 0).count();
                    if leaves == n {
                        return Ok(ConditionedSample {
                            tree: PlanarTree::from_child_counts(&counts)?,
                            attempts: attempt,
                        });
                    }
                }
            }
            Err(Error::CapExceeded(format!(
                "no {n}-leaf tree accepted in {} attempts",
                cfg.max_attempts
            )))
        }
    }
}

const ENUM_CAP: usize = 8;

fn sample_by_enumeration<R: Rng>(nu: &OffspringDist, n: usize, rng: &mut R) -> Result<ConditionedSample> {
    let trees = enumerate_trees(n, &nu.branch_support(), ENUM_CAP)?;
    let weights: Vec<f64> = trees.iter().map(|t| gw_weight(t, nu)).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InfeasibleLeafCount(n));
    }
    let mut u = rng.gen::<f64>() * total;
    for (t, w) in trees.iter().zip(&weights) {
        u -= w;
        if u < 0.0 {
            return Ok(ConditionedSample {
                tree: t.clone(),
                attempts: 1,
            });
        }
    }
    Ok(ConditionedSample {
        tree: trees.last().unwrap().clone(),
        attempts: 1,
    })
}

/// Monte Carlo estimate of the expected generation sizes of the conditioned
/// tree, with standard errors.
pub struct GenerationProfile {
    /// `means[k]` estimates the expected number of vertices at generation k.
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub replicates: usize,
}

pub fn empirical_generation_profile(
    nu: &OffspringDist,
    n: usize,
    k_max: usize,
    replicates: usize,
    master_seed: u64,
) -> Result<GenerationProfile> {
    use rayon::prelude::*;
    nu.require_critical()?;
    if !nu.feasible_leaf_count(n) {
        return Err(Error::InfeasibleLeafCount(n));
    }
    let cfg = SamplerConfig::for_n_leaves(n);
    let rows: Vec<Vec<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = crate::rng::substream(master_seed, rep);
            let t = sample_gw_n_leaves(nu, n, &cfg, &mut rng)
                .expect("attempt cap sized for n")
                .tree;
            let stats = t.stats();
            (0..=k_max)
                .map(|k| stats.zeta_k.get(k).copied().unwrap_or(0) as f64)
                .collect()
        })
        .collect();
    let m = replicates as f64;
    let mut means = vec![0.0; k_max + 1];
    let mut std_errors = vec![0.0; k_max + 1];
    for k in 0..=k_max {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / m;
        let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        means[k] = mean;
        std_errors[k] = (var / m).sqrt();
    }
    Ok(GenerationProfile {
        means,
        std_errors,
        replicates,
    })
}
