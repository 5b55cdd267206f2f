//! Offspring distributions, norming constants, and the exact probability
//! kernels: the leaf-count and vertex-count convolution DPs, the pmf of the
//! leaf-time-changed walk, the cyclic-lemma identities and the local limit
//! gap.
//!
//! All kernels are deterministic double-precision computations with
//! compensated summation; nothing here samples.

use crate::error::Error;
use crate::Result;

const PROB_SUM_TOL: f64 = 1e-12;
const CRITICAL_TOL: f64 = 1e-9;

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a slice.
pub fn ksum(xs: &[f64]) -> f64 {
    let mut k = Kahan::default();
    for &x in xs {
        k.add(x);
    }
    k.value()
}

/// Finite-support offspring distribution with no single-child probability.
#[derive(Clone, Debug)]
pub struct OffspringDist {
    /// Probability of `k` children at index `k`.
    probs: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl OffspringDist {
    /// Validates a finite-support pmf: probabilities nonnegative and summing
    /// to one, no mass on one child, positive mass on zero children.
    pub fn new(pairs: &[(usize, f64)]) -> Result<Self> {
        let max_k = pairs.iter().map(|&(k, _)| k).max().unwrap_or(0);
        let mut probs = vec![0.0; max_k + 1];
        for &(k, p) in pairs {
            if p < 0.0 || !p.is_finite() {
                return Err(Error::InvalidOffspring(format!("p({k}) = {p}")));
            }
            if probs[k] != 0.0 {
                return Err(Error::InvalidOffspring(format!("duplicate entry for k = {k}")));
            }
            probs[k] = p;
        }
        let total = ksum(&probs);
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidOffspring(format!("probabilities sum to {total}")));
        }
        if probs.len() > 1 && probs[1] != 0.0 {
            return Err(Error::InvalidOffspring(
                "mass on exactly one child is not allowed".into(),
            ));
        }
        if probs.is_empty() || probs[0] <= 0.0 {
            return Err(Error::InvalidOffspring("need positive mass on zero children".into()));
        }
        let mean = ksum(&probs.iter().enumerate().map(|(k, &p)| k as f64 * p).collect::<Vec<_>>());
        let second =
            ksum(&probs.iter().enumerate().map(|(k, &p)| (k * k) as f64 * p).collect::<Vec<_>>());
        Ok(OffspringDist {
            probs,
            mean,
            variance: second - mean * mean,
        })
    }

    /// As [`OffspringDist::new`] but additionally requires mean one.
    pub fn new_critical(pairs: &[(usize, f64)]) -> Result<Self> {
        let d = Self::new(pairs)?;
        d.require_critical()?;
        Ok(d)
    }

    /// Parses `"k:p,k:p,..."`, e.g. `"0:0.5,2:0.5"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in spec.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let (k, p) = item
                .split_once(':')
                .ok_or_else(|| Error::InvalidOffspring(format!("bad entry {item:?}")))?;
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| Error::InvalidOffspring(format!("bad child count {k:?}")))?;
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::InvalidOffspring(format!("bad probability {p:?}")))?;
            if k == 1 {
                return Err(Error::InvalidOffspring("entries with k = 1 are rejected".into()));
            }
            pairs.push((k, p));
        }
        Self::new(&pairs)
    }

    pub fn pmf(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn nu0(&self) -> f64 {
        self.probs[0]
    }

    pub fn max_k(&self) -> usize {
        self.probs.len() - 1
    }

    /// Child counts with positive probability.
    pub fn support(&self) -> Vec<usize> {
        (0..self.probs.len()).filter(|&k| self.probs[k] > 0.0).collect()
    }

    /// Branch-point degrees with positive probability (k >= 2).
    pub fn branch_support(&self) -> Vec<usize> {
        self.support().into_iter().filter(|&k| k >= 2).collect()
    }

    pub fn is_critical(&self) -> bool {
        (self.mean - 1.0).abs() <= CRITICAL_TOL
    }

    pub fn require_critical(&self) -> Result<()> {
        if self.is_critical() {
            Ok(())
        } else {
            Err(Error::NotCritical(self.mean))
        }
    }

    /// (mean, variance, probability of zero children).
    pub fn moments(&self) -> (f64, f64, f64) {
        (self.mean, self.variance, self.nu0())
    }

    /// Whether some tree with exactly `n` leaves has positive probability:
    /// `n - 1` must be a nonnegative combination of the degree increments
    /// `k - 1` over the branch support.
    pub fn feasible_leaf_count(&self, n: usize) -> bool {
        if n == 0 {
            return false;
        }
        let target = n - 1;
        let incs: Vec<usize> = self.branch_support().iter().map(|&k| k - 1).collect();
        let mut reach = vec![false; target + 1];
        reach[0] = true;
        for t in 1..=target {
            for &d in &incs {
                if d <= t && reach[t - d] {
                    reach[t] = true;
                    break;
                }
            }
        }
        reach[target]
    }
}

/// Scaling constants attached to an offspring law at size `n`. In the
/// finite-variance regime all four constants are explicit; for other
/// stability indices only the walk normings are available and must be
/// supplied by the caller.
#[derive(Clone, Copy, Debug)]
pub struct NormingConstants {
    pub alpha: f64,
    pub a_n: f64,
    pub a_tilde_n: f64,
    /// Tree-side scaling; finite-variance mode only.
    pub c_n: Option<f64>,
    /// Cut-tree-side scaling; finite-variance mode only.
    pub c_prime_n: Option<f64>,
}

impl NormingConstants {
    /// General-index constants from a caller-supplied `a_n`.
    pub fn with_custom_a_n(alpha: f64, a_n: f64, nu0: f64) -> Result<Self> {
        if !(1.0 < alpha && alpha <= 2.0) || a_n <= 0.0 || !(0.0 < nu0 && nu0 < 1.0) {
            return Err(Error::InvalidArgument("need alpha in (1,2], a_n > 0, nu0 in (0,1)".into()));
        }
        Ok(NormingConstants {
            alpha,
            a_n,
            a_tilde_n: a_n / nu0.powf(1.0 / alpha),
            c_n: None,
            c_prime_n: None,
        })
    }
}

/// Finite-variance norming constants at size `n`:
/// `a_n = sigma sqrt(n/2)`, `a~_n = a_n / sqrt(nu0)`,
/// `c_n = sqrt(n) / (sigma sqrt(nu0))`, `c'_n = sqrt(nu0) sqrt(n) / sigma`.
pub fn norming(nu: &OffspringDist, n: usize) -> Result<NormingConstants> {
    nu.require_critical()?;
    if n == 0 {
        return Err(Error::InvalidArgument("norming needs n >= 1".into()));
    }
    let sigma2 = nu.variance();
    if sigma2 <= 0.0 {
        return Err(Error::InvalidArgument("zero offspring variance".into()));
    }
    let sigma = sigma2.sqrt();
    let nu0 = nu.nu0();
    let a_n = sigma * (n as f64 / 2.0).sqrt();
    Ok(NormingConstants {
        alpha: 2.0,
        a_n,
        a_tilde_n: a_n / nu0.sqrt(),
        c_n: Some((n as f64).sqrt() / (sigma * nu0.sqrt())),
        c_prime_n: Some(nu0.sqrt() * (n as f64).sqrt() / sigma),
    })
}

/// Exact law of the number of leaves in one or several independent trees.
///
/// `single[m] = P(lambda(G) = m)` follows the recursion
/// `P(lambda = m) = nu0 1{m=1} + sum_k nu_k P(S_k = m)` and
/// `s_pmf(j, n) = P(S_j = n)` is the `j`-fold convolution.
#[derive(Clone)]
pub struct LeafCountDp {
    single: Vec<f64>,
    /// `s[j]` is the pmf of the leaf count of `j + 1` independent trees.
    s: Vec<Vec<f64>>,
    cap: usize,
}

impl LeafCountDp {
    pub const DEFAULT_CAP: usize = 500;

    pub fn new(nu: &OffspringDist, cap: usize) -> Self {
        let ks = nu.branch_support();
        let kmax = ks.iter().copied().max().unwrap_or(0);
        let mut single = vec![0.0; cap + 1];
        // conv[k][m] = k-fold convolution of `single` at m.
        let mut conv: Vec<Vec<f64>> = vec![vec![0.0; cap + 1]; kmax + 1];
        if cap >= 1 {
            single[1] = nu.nu0();
            if kmax >= 1 {
                conv[1][1] = single[1];
            }
        }
        for m in 2..=cap {
            for k in 2..=kmax {
                let mut acc = Kahan::default();
                for i in 1..=m.saturating_sub(k - 1) {
                    acc.add(single[i] * conv[k - 1][m - i]);
                }
                conv[k][m] = acc.value();
            }
            let mut p = Kahan::default();
            for &k in &ks {
                p.add(nu.pmf(k) * conv[k][m]);
            }
            single[m] = p.value();
            conv[1][m] = single[m];
        }
        LeafCountDp {
            s: vec![single.clone()],
            single,
            cap,
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// `P(lambda(G) = m)` for a single tree.
    pub fn single_pmf(&self, m: usize) -> f64 {
        self.single.get(m).copied().unwrap_or(0.0)
    }

    /// `P(S_j = n)`, the chance that `j` independent trees have `n` leaves
    /// in total.
    pub fn s_pmf(&mut self, j: usize, n: usize) -> Result<f64> {
        if j == 0 || n > self.cap {
            return Err(Error::CapExceeded(format!("leaf-count DP query j={j}, n={n}, cap={}", self.cap)));
        }
        while self.s.len() < j {
            let prev = self.s.last().unwrap();
            let mut next = vec![0.0; self.cap + 1];
            for (m, slot) in next.iter_mut().enumerate().skip(1) {
                let mut acc = Kahan::default();
                for i in 1..m {
                    acc.add(self.single[i] * prev[m - i]);
                }
                *slot = acc.value();
            }
            self.s.push(next);
        }
        Ok(self.s[j - 1][n])
    }

    /// Precomputes the convolution tables up to `j_max` so later queries
    /// never extend them; clones of a warmed table stay cheap.
    pub fn warm(&mut self, j_max: usize) -> Result<()> {
        let cap = self.cap;
        self.s_pmf(j_max.max(1), cap)?;
        Ok(())
    }
}

/// Exact law of the number of vertices in one or several independent trees;
/// same structure as [`LeafCountDp`] with the root adding one to each count.
pub struct VertexCountDp {
    single: Vec<f64>,
    s: Vec<Vec<f64>>,
    cap: usize,
}

impl VertexCountDp {
    pub fn new(nu: &OffspringDist, cap: usize) -> Self {
        let ks = nu.branch_support();
        let kmax = ks.iter().copied().max().unwrap_or(0);
        let mut single = vec![0.0; cap + 1];
        let mut conv: Vec<Vec<f64>> = vec![vec![0.0; cap + 1]; kmax + 1];
        if cap >= 1 {
            single[1] = nu.nu0();
            if kmax >= 1 {
                conv[1][1] = single[1];
            }
        }
        for m in 2..=cap {
            // P(zeta = m) = sum_k nu_k P(zeta_1 + .. + zeta_k = m - 1).
            let mut p = Kahan::default();
            for &k in &ks {
                p.add(nu.pmf(k) * conv[k][m - 1]);
            }
            single[m] = p.value();
            conv[1][m] = single[m];
            for k in 2..=kmax {
                let mut acc = Kahan::default();
                for i in 1..=m.saturating_sub(k - 1) {
                    acc.add(single[i] * conv[k - 1][m - i]);
                }
                conv[k][m] = acc.value();
            }
        }
        VertexCountDp {
            s: vec![single.clone()],
            single,
            cap,
        }
    }

    pub fn single_pmf(&self, m: usize) -> f64 {
        self.single.get(m).copied().unwrap_or(0.0)
    }

    pub fn s_pmf(&mut self, j: usize, n: usize) -> Result<f64> {
        if j == 0 || n > self.cap {
            return Err(Error::CapExceeded(format!("vertex-count DP query j={j}, n={n}, cap={}", self.cap)));
        }
        while self.s.len() < j {
            let prev = self.s.last().unwrap();
            let mut next = vec![0.0; self.cap + 1];
            for (m, slot) in next.iter_mut().enumerate().skip(1) {
                let mut acc = Kahan::default();
                for i in 1..m {
                    acc.add(self.single[i] * prev[m - i]);
                }
                *slot = acc.value();
            }
            self.s.push(next);
        }
        Ok(self.s[j - 1][n])
    }
}

/// `P(lambda(G) = n)` convenience wrapper for a single query.
pub fn leaf_count_pmf(nu: &OffspringDist, j: usize, n: usize, cap: usize) -> Result<f64> {
    if n > cap || j > n.max(1) {
        return Err(Error::CapExceeded(format!("j={j}, n={n} beyond cap {cap}")));
    }
    LeafCountDp::new(nu, n.max(1)).s_pmf(j, n)
}

/// Integer-lattice pmf with explicit support offset and a certified
/// truncation deficit (`1 - total mass`).
#[derive(Clone, Debug)]
pub struct LatticePmf {
    pub min: i64,
    pub probs: Vec<f64>,
    pub deficit: f64,
}

impl LatticePmf {
    pub fn point(v: i64) -> Self {
        LatticePmf {
            min: v,
            probs: vec![1.0],
            deficit: 0.0,
        }
    }

    pub fn max(&self) -> i64 {
        self.min + self.probs.len() as i64 - 1
    }

    pub fn prob_at(&self, v: i64) -> f64 {
        if v < self.min || v > self.max() {
            0.0
        } else {
            self.probs[(v - self.min) as usize]
        }
    }

    pub fn mass(&self) -> f64 {
        ksum(&self.probs)
    }

    fn convolve(&self, other: &LatticePmf, trim_per_side: f64) -> LatticePmf {
        let n = self.probs.len() + other.probs.len() - 1;
        let mut probs = vec![0.0; n];
        let mut comp = vec![0.0; n];
        for (i, &a) in self.probs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.probs.iter().enumerate() {
                let x = a * b;
                let idx = i + j;
                // Neumaier step per output cell.
                let s = probs[idx];
                let t = s + x;
                comp[idx] += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
                probs[idx] = t;
            }
        }
        for (p, c) in probs.iter_mut().zip(&comp) {
            *p += c;
        }
        let mut out = LatticePmf {
            min: self.min + other.min,
            probs,
            deficit: 0.0,
        };
        let trimmed = out.trim_tails(trim_per_side);
        out.deficit = (1.0 - ((1.0 - self.deficit) * (1.0 - other.deficit) - trimmed)).max(0.0);
        out
    }

    /// Drops leading/trailing entries while the cumulative dropped mass per
    /// side stays below `budget`; returns the total mass dropped.
    fn trim_tails(&mut self, budget: f64) -> f64 {
        if budget <= 0.0 {
            return 0.0;
        }
        let mut dropped = 0.0;
        let mut lead = 0usize;
        let mut acc = 0.0;
        while lead < self.probs.len() - 1 && acc + self.probs[lead] < budget {
            acc += self.probs[lead];
            lead += 1;
        }
        dropped += acc;
        let mut tail = self.probs.len();
        acc = 0.0;
        while tail > lead + 1 && acc + self.probs[tail - 1] < budget {
            acc += self.probs[tail - 1];
            tail -= 1;
        }
        dropped += acc;
        if lead > 0 || tail < self.probs.len() {
            self.probs = self.probs[lead..tail].to_vec();
            self.min += lead as i64;
        }
        dropped
    }
}

/// Pmf of one step of the leaf-time-changed walk: a geometric number of
/// up-moves (success probability `nu0`) followed by the final down-step.
/// Truncated where the remaining tail mass drops below `budget`.
pub fn tilde_step_pmf(nu: &OffspringDist, budget: f64) -> Result<LatticePmf> {
    let nu0 = nu.nu0();
    // f[s] = P(A_1 + ... + A_G = s) with A = k - 1 on the branch support.
    let mut f = vec![nu0];
    let mut mass = nu0;
    let incs: Vec<(usize, f64)> = nu.branch_support().iter().map(|&k| (k - 1, nu.pmf(k))).collect();
    const HARD_CAP: usize = 1_000_000;
    while 1.0 - mass >= budget {
        let s = f.len();
        if s > HARD_CAP {
            return Err(Error::CapExceeded("time-changed step pmf did not concentrate".into()));
        }
        let mut acc = Kahan::default();
        for &(a, p) in &incs {
            if a <= s {
                acc.add(p * f[s - a]);
            }
        }
        let v = acc.value();
        f.push(v);
        mass += v;
    }
    Ok(LatticePmf {
        min: -1,
        probs: f,
        deficit: (1.0 - mass).max(0.0),
    })
}

/// Exact pmf of the `n`-step leaf-time-changed walk by iterated convolution
/// of the one-step law. The returned deficit is certified to stay below
/// `n * tail_eps`.
pub fn tilde_walk_pmf(nu: &OffspringDist, n: usize, tail_eps: f64, cap: usize) -> Result<LatticePmf> {
    if n > cap {
        return Err(Error::CapExceeded(format!("tilde walk length {n} beyond cap {cap}")));
    }
    if n == 0 {
        return Ok(LatticePmf::point(0));
    }
    let step = tilde_step_pmf(nu, tail_eps / 2.0)?;
    let mut acc = LatticePmf::point(0);
    for _ in 0..n {
        acc = acc.convolve(&step, tail_eps / 4.0);
    }
    Ok(acc)
}

/// Exact pmf of the plain `n`-step walk with step law `P(step = k - 1) = nu_k`.
/// The step has finite support, so there is no truncation.
pub fn walk_pmf(nu: &OffspringDist, n: usize) -> LatticePmf {
    if n == 0 {
        return LatticePmf::point(0);
    }
    let probs: Vec<f64> = (0..=nu.max_k()).map(|k| nu.pmf(k)).collect();
    let step = LatticePmf {
        min: -1,
        probs,
        deficit: 0.0,
    };
    let mut acc = LatticePmf::point(0);
    for _ in 0..n {
        acc = acc.convolve(&step, 0.0);
    }
    acc
}

/// `|P(S_j = n) - (j/n) P(W~_n = -j)|`: the leaf-count cyclic identity.
pub fn cyclic_identity_gap(
    dp: &mut LeafCountDp,
    tilde: &LatticePmf,
    j: usize,
    n: usize,
) -> Result<f64> {
    let lhs = dp.s_pmf(j, n)?;
    let rhs = j as f64 / n as f64 * tilde.prob_at(-(j as i64));
    Ok((lhs - rhs).abs())
}

/// `|P(S^V_j = n) - (j/n) P(W_n = -j)|`: the vertex-count cyclic identity.
pub fn cyclic_identity_gap_vertices(
    dp: &mut VertexCountDp,
    walk: &LatticePmf,
    j: usize,
    n: usize,
) -> Result<f64> {
    let lhs = dp.s_pmf(j, n)?;
    let rhs = j as f64 / n as f64 * walk.prob_at(-(j as i64));
    Ok((lhs - rhs).abs())
}

/// Limit density of the rescaled walk at stability index two.
pub fn p1_density(x: f64) -> f64 {
    (-x * x / 4.0).exp() / (2.0 * std::f64::consts::PI.sqrt())
}

/// `sup_k | a~_n P(W~_n = k) - p1(k / a~_n) |` over the truncated support.
pub fn local_limit_gap(nu: &OffspringDist, n: usize, tail_eps: f64, cap: usize) -> Result<f64> {
    let norms = norming(nu, n)?;
    let at = norms.a_tilde_n;
    let pmf = tilde_walk_pmf(nu, n, tail_eps, cap)?;
    let mut sup: f64 = 0.0;
    for v in pmf.min..=pmf.max() {
        let gap = (at * pmf.prob_at(v) - p1_density(v as f64 / at)).abs();
        sup = sup.max(gap);
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{enumerate_trees, gw_weight};
    use approx::assert_abs_diff_eq;

    pub(crate) fn binary() -> OffspringDist {
        OffspringDist::new_critical(&[(0, 0.5), (2, 0.5)]).unwrap()
    }

    fn ternary() -> OffspringDist {
        OffspringDist::new_critical(&[(0, 2.0 / 3.0), (3, 1.0 / 3.0)]).unwrap()
    }

    fn mixed() -> OffspringDist {
        OffspringDist::new_critical(&[(0, 7.0 / 12.0), (2, 0.25), (3, 1.0 / 6.0)]).unwrap()
    }

    #[test]
    fn moments_examples() {
        let (m, v, n0) = binary().moments();
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n0, 0.5, epsilon = 1e-15);

        let (m, v, n0) = ternary().moments();
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(n0, 2.0 / 3.0, epsilon = 1e-15);

        // Pure-death law has mean zero: rejected in critical mode.
        assert!(OffspringDist::new_critical(&[(0, 1.0)]).is_err());
        assert!(OffspringDist::new(&[(0, 1.0)]).is_ok());
    }

    #[test]
    fn parse_rejects_unary_mass() {
        assert!(OffspringDist::parse("0:0.5,1:0.1,2:0.4").is_err());
        let d = OffspringDist::parse("0:0.5,2:0.5").unwrap();
        assert_eq!(d.support(), vec![0, 2]);
    }

    #[test]
    fn norming_examples() {
        let c = norming(&binary(), 50).unwrap();
        assert_abs_diff_eq!(c.a_n, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.a_tilde_n, 5.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.c_n.unwrap(), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.c_prime_n.unwrap(), 5.0, epsilon = 1e-12);

        let c = norming(&binary(), 2).unwrap();
        assert_abs_diff_eq!(c.a_tilde_n, 2f64.sqrt(), epsilon = 1e-14);

        assert!(norming(&binary(), 0).is_err());
    }

    #[test]
    fn custom_norming_for_other_stability_indices() {
        // Below index two only the walk normings are defined, from a
        // caller-supplied a_n.
        let c = NormingConstants::with_custom_a_n(1.5, 8.0, 0.5).unwrap();
        assert_abs_diff_eq!(c.a_tilde_n, 8.0 / 0.5f64.powf(1.0 / 1.5), epsilon = 1e-12);
        assert!(c.c_n.is_none() && c.c_prime_n.is_none());
        assert!(NormingConstants::with_custom_a_n(2.5, 1.0, 0.5).is_err());
        assert!(NormingConstants::with_custom_a_n(1.5, -1.0, 0.5).is_err());
    }

    #[test]
    fn leaf_count_examples() {
        assert_abs_diff_eq!(leaf_count_pmf(&binary(), 1, 3, 500).unwrap(), 1.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(leaf_count_pmf(&binary(), 2, 3, 500).unwrap(), 1.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(leaf_count_pmf(&ternary(), 4, 4, 500).unwrap(), 16.0 / 81.0, epsilon = 1e-15);
    }

    #[test]
    fn leaf_count_matches_enumeration_oracle() {
        for nu in [binary(), ternary(), mixed()] {
            let support = nu.branch_support();
            let mut dp = LeafCountDp::new(&nu, 8);
            for n in 1..=7usize {
                let mass: f64 = enumerate_trees(n, &support, 8)
                    .unwrap()
                    .iter()
                    .map(|t| gw_weight(t, &nu))
                    .sum();
                assert!(
                    (dp.s_pmf(1, n).unwrap() - mass).abs() <= 1e-12,
                    "n = {n}: dp {} vs enum {mass}",
                    dp.s_pmf(1, n).unwrap()
                );
            }
        }
    }

    #[test]
    fn feasibility() {
        assert!(binary().feasible_leaf_count(7));
        assert!(ternary().feasible_leaf_count(5));
        assert!(!ternary().feasible_leaf_count(4));
        assert!(!binary().feasible_leaf_count(0));
        assert!(mixed().feasible_leaf_count(6));
    }

    #[test]
    fn tilde_step_values() {
        // Binary: one step is geometric(1/2) minus one.
        let s = tilde_step_pmf(&binary(), 1e-15).unwrap();
        assert_abs_diff_eq!(s.prob_at(-1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.prob_at(0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s.prob_at(1), 0.125, epsilon = 1e-15);
        assert!(s.deficit < 1e-15);

        let w2 = tilde_walk_pmf(&binary(), 2, 1e-15, 4000).unwrap();
        assert_abs_diff_eq!(w2.prob_at(-2), 0.25, epsilon = 1e-14);

        let w0 = tilde_walk_pmf(&binary(), 0, 1e-15, 4000).unwrap();
        assert_eq!((w0.min, w0.probs.len()), (0, 1));
    }

    #[test]
    fn cyclic_identity_small_cases() {
        let nu = binary();
        let mut dp = LeafCountDp::new(&nu, 50);
        for (j, n) in [(1usize, 2usize), (2, 3), (1, 1)] {
            let tilde = tilde_walk_pmf(&nu, n, 1e-15, 4000).unwrap();
            let gap = cyclic_identity_gap(&mut dp, &tilde, j, n).unwrap();
            assert!(gap <= 1e-14, "gap {gap} at (j={j}, n={n})");
        }
        // Both sides of (1, 2) equal 1/8.
        let tilde = tilde_walk_pmf(&nu, 2, 1e-15, 4000).unwrap();
        assert_abs_diff_eq!(0.5 * tilde.prob_at(-1), 1.0 / 8.0, epsilon = 1e-14);
    }

    #[test]
    fn cyclic_identity_vertices_small_cases() {
        let nu = binary();
        let mut dp = VertexCountDp::new(&nu, 50);
        // P(zeta = 3) = 1/8 and (1/3) P(W_3 = -1) = (1/3)(3/8).
        let w = walk_pmf(&nu, 3);
        assert_abs_diff_eq!(w.prob_at(-1), 3.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dp.s_pmf(1, 3).unwrap(), 1.0 / 8.0, epsilon = 1e-15);
        let gap = cyclic_identity_gap_vertices(&mut dp, &w, 1, 3).unwrap();
        assert!(gap <= 1e-14);
    }

    #[test]
    fn local_limit_point_values() {
        // At n = 1 the scaled pmf sits far from the density: the k = 0 term
        // contributes |1/4 - p1(0)| and the supremum is at k = -1.
        let nu = binary();
        assert_abs_diff_eq!(p1_density(0.0), 0.28209479177387814, epsilon = 1e-15);
        let at = norming(&nu, 1).unwrap().a_tilde_n;
        assert_abs_diff_eq!(at, 1.0, epsilon = 1e-14);
        let pmf = tilde_walk_pmf(&nu, 1, 1e-15, 4000).unwrap();
        let k0 = (at * pmf.prob_at(0) - p1_density(0.0)).abs();
        assert_abs_diff_eq!(k0, 0.03209479177387814, epsilon = 1e-12);
        let sup = local_limit_gap(&nu, 1, 1e-15, 4000).unwrap();
        let km1 = (at * pmf.prob_at(-1) - p1_density(-1.0)).abs();
        assert_abs_diff_eq!(sup, km1, epsilon = 1e-12);
        assert!(sup > k0);
    }

    #[test]
    fn tilde_pmf_symmetric_step_peaks_near_zero() {
        // A symmetric one-step law keeps the n-step pmf peaked at its mean.
        let nu = binary();
        let pmf = tilde_walk_pmf(&nu, 200, 1e-15, 4000).unwrap();
        let argmax = (pmf.min..=pmf.max())
            .max_by(|&a, &b| pmf.prob_at(a).partial_cmp(&pmf.prob_at(b)).unwrap())
            .unwrap();
        assert!(argmax.abs() <= 2, "argmax {argmax}");
        assert!(pmf.deficit <= 200.0 * 1e-15);
    }
}
