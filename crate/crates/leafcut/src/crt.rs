//! Independent Brownian-CRT reference sampler via line breaking, plus the
//! bookkeeping between the normalization conventions found in the
//! literature.
//!
//! The half-line is broken at the arrival times of an inhomogeneous Poisson
//! process of rate `t dt`; segment `m` spans `(J_{m-1}, J_m]` and attaches
//! at a uniform point of the structure built so far. Leaf `m` is the far
//! endpoint `J_m`. Everything is sampled by inversion and kept exact.

use crate::error::Error;
use crate::Result;
use rand::Rng;
use std::io::Write;

/// Distances between the root and `k` sampled leaves, in units where the
/// tree is the line-breaking tree itself.
#[derive(Clone, Debug)]
pub struct CrtSample {
    pub k: usize,
    /// Row-major `(k+1) x (k+1)` matrix over `{root = 0, leaves 1..=k}`.
    pub dist: Vec<f64>,
}

impl CrtSample {
    pub fn d(&self, a: usize, b: usize) -> f64 {
        self.dist[a * (self.k + 1) + b]
    }

    /// Checks the four-point condition of tree metrics on all quadruples.
    pub fn is_tree_metric(&self, tol: f64) -> bool {
        let m = self.k + 1;
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for e in 0..m {
                        let s1 = self.d(a, b) + self.d(c, e);
                        let s2 = self.d(a, c) + self.d(b, e);
                        let s3 = self.d(a, e) + self.d(b, c);
                        let mx = s1.max(s2).max(s3);
                        // The two largest of the three sums must agree.
                        let mut sums = [s1, s2, s3];
                        sums.sort_by(|x, y| x.partial_cmp(y).unwrap());
                        if (mx - sums[1]).abs() > tol {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// A point of the broken line: segment index and coordinate within it.
#[derive(Clone, Copy)]
struct LinePoint {
    seg: usize,
    pos: f64,
}

/// Samples the subtree spanned by the root and `k` leaves of the
/// line-breaking tree.
pub fn line_break_sample<R: Rng>(k: usize, rng: &mut R) -> Result<CrtSample> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one leaf".into()));
    }
    // Arrival times: P(J_1 > x) = exp(-x^2 / 2) and
    // J_m = sqrt(J_{m-1}^2 - 2 ln U) by inversion.
    let mut breaks = Vec::with_capacity(k + 1);
    breaks.push(0.0f64);
    let mut j2 = 0.0f64;
    for _ in 0..k {
        j2 -= 2.0 * (1.0 - rng.gen::<f64>()).ln();
        breaks.push(j2.sqrt());
    }
    // attach[m] = where segment m (spanning (J_{m-1}, J_m]) glues on.
    let mut attach: Vec<LinePoint> = vec![LinePoint { seg: 0, pos: 0.0 }];
    for m in 1..k {
        let u = rng.gen::<f64>() * breaks[m];
        // Locate the segment containing position u; breaks are sorted.
        let seg = match breaks[..=m].binary_search_by(|b| b.partial_cmp(&u).unwrap()) {
            Ok(idx) => idx.max(1),
            Err(idx) => idx,
        };
        attach.push(LinePoint { seg, pos: u });
    }

    // Tree distance of two line points: lift the higher segment to its
    // attachment until both live on the same segment.
    let dist = |mut a: LinePoint, mut b: LinePoint| -> f64 {
        let mut acc = 0.0;
        while a.seg != b.seg {
            if a.seg > b.seg {
                acc += a.pos - breaks[a.seg - 1];
                a = attach[a.seg - 1];
            } else {
                acc += b.pos - breaks[b.seg - 1];
                b = attach[b.seg - 1];
            }
        }
        acc + (a.pos - b.pos).abs()
    };

    let points: Vec<LinePoint> = std::iter::once(LinePoint { seg: 1, pos: 0.0 })
        .chain((1..=k).map(|m| LinePoint {
            seg: m,
            pos: breaks[m],
        }))
        .collect();
    let m = k + 1;
    let mut out = vec![0.0; m * m];
    for a in 0..m {
        for b in a + 1..m {
            let d = dist(points[a], points[b]);
            out[a * m + b] = d;
            out[b * m + a] = d;
        }
    }
    Ok(CrtSample { k, dist: out })
}

/// Normalization conventions for the limit tree, as factors relative to
/// the doubled-excursion convention used here.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormConvention {
    /// The line-breaking tree itself (factor 1).
    Br,
    /// Half of it.
    Hm,
    /// One over square root of two of it.
    Kor,
}

impl NormConvention {
    pub fn factor(self) -> f64 {
        match self {
            NormConvention::Br => 1.0,
            NormConvention::Hm => 0.5,
            NormConvention::Kor => 1.0 / 2f64.sqrt(),
        }
    }
}

/// Re-expresses a length between conventions.
pub fn convert(x: f64, from: NormConvention, to: NormConvention) -> f64 {
    x * to.factor() / from.factor()
}

/// Writes sampled distances as CSV rows `(replicate, a, b, distance)`.
pub fn write_samples_csv<W: Write>(out: &mut W, samples: &[CrtSample]) -> std::io::Result<()> {
    writeln!(out, "replicate,a,b,distance")?;
    for (rep, s) in samples.iter().enumerate() {
        let m = s.k + 1;
        for a in 0..m {
            for b in a + 1..m {
                writeln!(out, "{rep},{a},{b},{}", s.d(a, b))?;
            }
        }
    }
    Ok(())
}
