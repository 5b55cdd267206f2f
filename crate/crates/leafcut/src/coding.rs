//! Coding functions of planar trees: the Lukasiewicz path, height and
//! contour functions and the leaf counting process, the inverse decoding,
//! the leaf-time change of downward skip-free walks, and the index maps
//! between a tree and its hat transform.

use crate::error::Error;
use crate::tree::{HatTree, PlanarTree};
use crate::Result;
use std::io::Write;

/// Integer lattice path with increments bounded below by -1, starting at 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkPath {
    values: Vec<i64>,
}

impl WalkPath {
    pub fn from_values(values: Vec<i64>) -> Result<Self> {
        if values.first() != Some(&0) {
            return Err(Error::InvalidWalk("walk must start at 0".into()));
        }
        for w in values.windows(2) {
            if w[1] - w[0] < -1 {
                return Err(Error::InvalidWalk(format!("increment {} below -1", w[1] - w[0])));
            }
        }
        Ok(WalkPath { values })
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn len_steps(&self) -> usize {
        self.values.len() - 1
    }

    /// Positions `p >= 1` with `values[p] - values[p-1] = -1`.
    pub fn down_steps(&self) -> Vec<usize> {
        (1..self.values.len())
            .filter(|&p| self.values[p] - self.values[p - 1] == -1)
            .collect()
    }
}

/// The four coding functions of one tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodingBundle {
    /// Lukasiewicz path, length `zeta + 1`, terminal value -1.
    pub lukasiewicz: WalkPath,
    /// Height (generation) of the j-th vertex in planar order, length `zeta`.
    pub height: Vec<u64>,
    /// Unit-speed contour on the integer grid of `[0, 2 zeta]`, padded with
    /// zeros after time `2 (zeta - 1)`.
    pub contour: Vec<u64>,
    /// Leaf counting process, length `zeta + 1`, nondecreasing.
    pub leaf_count: Vec<u64>,
}

/// Computes all coding functions of a tree in one pass.
pub fn encode(t: &PlanarTree) -> CodingBundle {
    let zeta = t.n_vertices();
    let depths = t.depths();
    let mut x = Vec::with_capacity(zeta + 1);
    x.push(0i64);
    for v in 0..zeta {
        x.push(x[v] + t.degree(v) as i64 - 1);
    }
    let height: Vec<u64> = depths.iter().map(|&d| d as u64).collect();
    let mut leaf_count = Vec::with_capacity(zeta + 1);
    leaf_count.push(0u64);
    for p in 1..=zeta {
        let inc = (x[p] - x[p - 1] == -1) as u64;
        leaf_count.push(leaf_count[p - 1] + inc);
    }

    // Euler tour at unit speed: one entry per integer time in [0, 2 zeta].
    let mut contour = Vec::with_capacity(2 * zeta + 1);
    contour.push(0u64);
    // (vertex, next child slot) stack.
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    while let Some(&mut (v, ref mut slot)) = stack.last_mut() {
        if *slot < t.degree(v) {
            let c = t.children(v)[*slot];
            *slot += 1;
            stack.push((c, 0));
            contour.push(depths[c] as u64);
        } else {
            stack.pop();
            if let Some(&(p, _)) = stack.last() {
                contour.push(depths[p] as u64);
            }
        }
    }
    while contour.len() < 2 * zeta + 1 {
        contour.push(0);
    }
    CodingBundle {
        lukasiewicz: WalkPath { values: x },
        height,
        contour,
        leaf_count,
    }
}

/// Rebuilds the tree from its Lukasiewicz path. The path must be the
/// excursion of a single tree: it stays above -1 until its final step.
pub fn decode(w: &WalkPath) -> Result<PlanarTree> {
    let v = w.values();
    let zeta = v.len() - 1;
    if zeta == 0 {
        return Err(Error::InvalidWalk("walk has no steps".into()));
    }
    if v[zeta] != -1 {
        return Err(Error::InvalidWalk("walk must end at -1".into()));
    }
    for (p, &val) in v.iter().enumerate().take(zeta) {
        if val < 0 {
            return Err(Error::InvalidWalk(format!("walk hits -1 early at step {p}")));
        }
    }
    let counts: Vec<usize> = (0..zeta).map(|j| (v[j + 1] - v[j] + 1) as usize).collect();
    PlanarTree::from_child_counts(&counts)
}

/// Observes a downward skip-free walk at its down-steps: the output value at
/// `m` is the input value at the `m`-th down-step (the value at 0 is 0).
pub fn leaf_time_change(w: &WalkPath) -> WalkPath {
    let mut values = vec![0i64];
    values.extend(w.down_steps().iter().map(|&p| w.values[p]));
    WalkPath { values }
}

/// The index maps between a tree and its hat transform: `phi` sends hat
/// indices to original indices (extra children to their parent) and `psi`
/// counts hat vertices strictly preceding an original vertex, i.e. gives
/// its index in the hat tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexMaps {
    pub phi: Vec<usize>,
    pub psi: Vec<usize>,
}

pub fn index_maps(t: &PlanarTree, hat: &HatTree) -> Result<IndexMaps> {
    if hat.from_original.len() != t.n_vertices()
        || hat
            .to_original
            .iter()
            .flatten()
            .any(|&v| v >= t.n_vertices())
    {
        return Err(Error::InvalidArgument(
            "hat tree does not reference the given tree".into(),
        ));
    }
    for (v, &i) in hat.from_original.iter().enumerate() {
        if hat.to_original[i] != Some(v) {
            return Err(Error::InvalidArgument(
                "hat back-references are inconsistent with the given tree".into(),
            ));
        }
    }
    let phi = (0..hat.tree.n_vertices())
        .map(|i| hat.original_or_parent(i))
        .collect();
    let psi = hat.from_original.clone();
    Ok(IndexMaps { phi, psi })
}

/// Writes `(index, X, H, Lambda)` rows; the height column is empty on the
/// final row, which only the walk and leaf count reach.
pub fn write_coding_csv<W: Write>(out: &mut W, bundle: &CodingBundle) -> std::io::Result<()> {
    writeln!(out, "index,X,H,Lambda")?;
    let zeta = bundle.height.len();
    for j in 0..=zeta {
        let h = if j < zeta {
            bundle.height[j].to_string()
        } else {
            String::new()
        };
        writeln!(out, "{},{},{},{}", j, bundle.lukasiewicz.values()[j], h, bundle.leaf_count[j])?;
    }
    Ok(())
}

/// Writes `(time, C)` rows for the contour function.
pub fn write_contour_csv<W: Write>(out: &mut W, bundle: &CodingBundle) -> std::io::Result<()> {
    writeln!(out, "time,C")?;
    for (s, c) in bundle.contour.iter().enumerate() {
        writeln!(out, "{s},{c}")?;
    }
    Ok(())
}
