//! Rooted planar trees: representation, validation, enumeration and the
//! hat transform that pads every degree-`k` branch point with `k - 2`
//! extra leaf children.
//!
//! Vertices are always stored in depth-first (planar) order, so the vertex
//! index coincides with the rank of the vertex in the planar enumeration
//! used by the coding functions.

use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};

/// A rooted planar tree. Vertex 0 is the root and vertices are numbered in
/// depth-first order; each children list is in planar (left-to-right) order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanarTree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

/// Wire format: `{"parents": [-1, 0, 0, ...]}` with children order implied
/// by index order.
#[derive(Serialize, Deserialize)]
struct TreeJson {
    parents: Vec<i64>,
}

impl PlanarTree {
    /// The one-vertex tree.
    pub fn single() -> Self {
        PlanarTree {
            parent: vec![None],
            children: vec![Vec::new()],
        }
    }

    /// Builds a tree from a parent array (root marked with -1). The array
    /// may be in any valid order; vertices are relabelled to depth-first
    /// order with sibling order given by index order.
    pub fn from_parents(parents: &[i64]) -> Result<Self> {
        let n = parents.len();
        if n == 0 {
            return Err(Error::InvalidTree("empty parent array".into()));
        }
        let mut root = None;
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (v, &p) in parents.iter().enumerate() {
            if p < 0 {
                if root.is_some() {
                    return Err(Error::InvalidTree("multiple roots".into()));
                }
                root = Some(v);
            } else {
                let p = p as usize;
                if p >= n {
                    return Err(Error::InvalidTree(format!(
                        "parent index {p} out of range for vertex {v}"
                    )));
                }
                if p == v {
                    return Err(Error::InvalidTree(format!("vertex {v} is its own parent")));
                }
                children[p].push(v);
            }
        }
        let root = root.ok_or_else(|| Error::InvalidTree("no root".into()))?;

        // Depth-first relabelling; also detects unreachable vertices (cycles).
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            order.push(v);
            for &c in children[v].iter().rev() {
                stack.push(c);
            }
        }
        if order.len() != n {
            return Err(Error::InvalidTree(
                "cycle or vertex unreachable from root".into(),
            ));
        }
        let mut new_index = vec![0usize; n];
        for (i, &v) in order.iter().enumerate() {
            new_index[v] = i;
        }
        let mut parent = vec![None; n];
        let mut new_children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, &v) in order.iter().enumerate() {
            if let Some(p) = parents[v].try_into().ok().filter(|_| parents[v] >= 0) {
                let p: usize = p;
                parent[i] = Some(new_index[p]);
            }
            new_children[i] = children[v].iter().map(|&c| new_index[c]).collect();
        }
        Ok(PlanarTree {
            parent,
            children: new_children,
        })
    }

    /// Builds a tree from depth-first child counts, e.g. `[2, 0, 0]` for the
    /// cherry. This is the natural output format of the samplers.
    pub fn from_child_counts(counts: &[usize]) -> Result<Self> {
        let n = counts.len();
        if n == 0 {
            return Err(Error::InvalidTree("empty child-count sequence".into()));
        }
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        // Stack of (vertex, remaining child slots).
        let mut stack: Vec<(usize, usize)> = vec![(0, counts[0])];
        for v in 1..n {
            while matches!(stack.last(), Some(&(_, 0))) {
                stack.pop();
            }
            let &mut (p, ref mut slots) = stack
                .last_mut()
                .ok_or_else(|| Error::InvalidTree("child counts close properly before end".into()))?;
            *slots -= 1;
            parent[v] = Some(p);
            children[p].push(v);
            stack.push((v, counts[v]));
        }
        if stack.iter().any(|&(_, s)| s != 0) {
            return Err(Error::InvalidTree("child counts leave open slots".into()));
        }
        Ok(PlanarTree { parent, children })
    }

    pub fn n_vertices(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Number of children of `v`.
    pub fn degree(&self, v: usize) -> usize {
        self.children[v].len()
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn n_leaves(&self) -> usize {
        self.children.iter().filter(|c| c.is_empty()).count()
    }

    /// Branch points in depth-first order.
    pub fn branch_points(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| !self.is_leaf(v)).collect()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| self.is_leaf(v)).collect()
    }

    /// Generation of every vertex.
    pub fn depths(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.n_vertices()];
        for v in 1..self.n_vertices() {
            d[v] = d[self.parent[v].unwrap()] + 1;
        }
        d
    }

    /// Graph distance between two vertices (unit edges).
    pub fn distance(&self, mut a: usize, mut b: usize) -> usize {
        let depths = self.depths();
        let mut dist = 0;
        while depths[a] > depths[b] {
            a = self.parent[a].unwrap();
            dist += 1;
        }
        while depths[b] > depths[a] {
            b = self.parent[b].unwrap();
            dist += 1;
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
            dist += 2;
        }
        dist
    }

    /// First vertex with exactly one child, if any.
    pub fn unary_vertex(&self) -> Option<usize> {
        (0..self.n_vertices()).find(|&v| self.degree(v) == 1)
    }

    /// Checks structural invariants; with `no_unary` also rejects vertices
    /// with exactly one child. Structural consistency holds by construction,
    /// so this is mainly the unary check plus internal sanity assertions.
    pub fn validate(&self, no_unary: bool) -> Result<()> {
        for (v, &p) in self.parent.iter().enumerate() {
            match p {
                None => {
                    if v != 0 {
                        return Err(Error::InvalidTree("root is not vertex 0".into()));
                    }
                }
                Some(p) => {
                    if !self.children[p].contains(&v) {
                        return Err(Error::InvalidTree(format!(
                            "vertex {v} missing from its parent's child list"
                        )));
                    }
                }
            }
        }
        if no_unary {
            if let Some(v) = self.unary_vertex() {
                return Err(Error::UnaryVertex(v));
            }
        }
        Ok(())
    }

    /// Per-generation vertex and leaf counts.
    pub fn stats(&self) -> TreeStats {
        let depths = self.depths();
        let max_gen = depths.iter().copied().max().unwrap_or(0);
        let mut zeta_k = vec![0usize; max_gen + 1];
        let mut lambda_k = vec![0usize; max_gen + 1];
        for v in 0..self.n_vertices() {
            zeta_k[depths[v]] += 1;
            if self.is_leaf(v) {
                lambda_k[depths[v]] += 1;
            }
        }
        TreeStats {
            n_vertices: self.n_vertices(),
            n_leaves: self.n_leaves(),
            zeta_k,
            lambda_k,
            max_gen,
        }
    }

    /// Adds `k - 2` extra leaf children to every branch point with `k`
    /// children, placed leftmost so they are enumerated immediately after
    /// their parent in depth-first order. Fails on unary vertices.
    pub fn hat(&self) -> Result<HatTree> {
        self.validate(true)?;
        let extra: usize = self
            .branch_points()
            .iter()
            .map(|&v| self.degree(v) - 2)
            .sum();
        let m = self.n_vertices() + extra;
        let mut parent: Vec<Option<usize>> = Vec::with_capacity(m);
        let mut children: Vec<Vec<usize>> = Vec::with_capacity(m);
        let mut to_original: Vec<Option<usize>> = Vec::with_capacity(m);
        let mut from_original = vec![0usize; self.n_vertices()];

        // Depth-first emission: vertex, its extra children, then original
        // subtrees in planar order.
        let mut stack: Vec<(usize, Option<usize>)> = vec![(0, None)];
        while let Some((v, hat_parent)) = stack.pop() {
            let idx = parent.len();
            parent.push(hat_parent);
            children.push(Vec::new());
            to_original.push(Some(v));
            from_original[v] = idx;
            if let Some(p) = hat_parent {
                children[p].push(idx);
            }
            let k = self.degree(v);
            if k >= 2 {
                for _ in 0..k - 2 {
                    let e = parent.len();
                    parent.push(Some(idx));
                    children.push(Vec::new());
                    to_original.push(None);
                    children[idx].push(e);
                }
            }
            for &c in self.children[v].iter().rev() {
                stack.push((c, Some(idx)));
            }
        }
        // The stack emits extras before originals but pops subtrees in
        // planar order, so child lists need no reordering; still, the
        // leftmost placement must hold: extras were pushed first.
        debug_assert_eq!(parent.len(), m);
        Ok(HatTree {
            tree: PlanarTree { parent, children },
            to_original,
            from_original,
        })
    }

    /// Parent array with -1 for the root.
    pub fn to_parents(&self) -> Vec<i64> {
        self.parent
            .iter()
            .map(|p| p.map_or(-1, |p| p as i64))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TreeJson {
            parents: self.to_parents(),
        })
        .expect("tree serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: TreeJson = serde_json::from_str(s)?;
        Self::from_parents(&t.parents)
    }

    /// Child counts in depth-first order.
    pub fn child_counts(&self) -> Vec<usize> {
        (0..self.n_vertices()).map(|v| self.degree(v)).collect()
    }

    /// Canonical key of the unordered shape: children subtree keys sorted.
    pub fn unordered_key(&self) -> String {
        fn rec(t: &PlanarTree, v: usize, out: &mut String) {
            let mut keys: Vec<String> = t.children(v)
                .iter()
                .map(|&c| {
                    let mut s = String::new();
                    rec(t, c, &mut s);
                    s
                })
                .collect();
            keys.sort();
            out.push('(');
            for k in keys {
                out.push_str(&k);
            }
            out.push(')');
        }
        let mut s = String::new();
        rec(self, 0, &mut s);
        s
    }
}

/// Per-generation summary of a tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeStats {
    pub n_vertices: usize,
    pub n_leaves: usize,
    pub zeta_k: Vec<usize>,
    pub lambda_k: Vec<usize>,
    pub max_gen: usize,
}

/// Result of the hat transform, with back-references between the padded
/// tree and the original.
#[derive(Clone, Debug)]
pub struct HatTree {
    pub tree: PlanarTree,
    /// Hat vertex -> original vertex; `None` for the added leaves.
    pub to_original: Vec<Option<usize>>,
    /// Original vertex -> its index in the hat tree.
    pub from_original: Vec<usize>,
}

impl HatTree {
    /// Original vertex behind a hat vertex: itself if it existed before,
    /// otherwise the parent it was attached to.
    pub fn original_or_parent(&self, hat_v: usize) -> usize {
        match self.to_original[hat_v] {
            Some(v) => v,
            None => {
                let p = self.tree.parent(hat_v).expect("added leaves are never the root");
                self.to_original[p].expect("added leaves attach to original vertices")
            }
        }
    }

    /// Edge ids of the hat tree: every non-root vertex names the edge to its
    /// parent, so ids run over `1..n_vertices`.
    pub fn n_edges(&self) -> usize {
        self.tree.n_vertices() - 1
    }
}

/// All planar trees with exactly `n_leaves` leaves and all branch-point
/// degrees drawn from `support`, each exactly once. Used as the exact-law
/// oracle, hence the small default cap.
pub fn enumerate_trees(n_leaves: usize, support: &[usize], cap: usize) -> Result<Vec<PlanarTree>> {
    if n_leaves == 0 {
        return Err(Error::InvalidArgument("need at least one leaf".into()));
    }
    if n_leaves > cap {
        return Err(Error::CapExceeded(format!(
            "enumeration of {n_leaves}-leaf trees exceeds cap {cap}"
        )));
    }
    if support.contains(&1) || support.contains(&0) {
        return Err(Error::InvalidArgument(
            "branch-point degree support must exclude 0 and 1".into(),
        ));
    }
    // memo[m] = all child-count sequences of trees with m leaves.
    let mut memo: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n_leaves + 1];
    memo[1] = vec![vec![0]];
    for m in 2..=n_leaves {
        let mut seqs = Vec::new();
        for &k in support {
            if k > m {
                continue;
            }
            // Compositions of m into k positive parts.
            let mut parts = vec![1usize; k];
            compose(m, k, &mut parts, 0, &memo, &mut |counts| {
                seqs.push(counts);
            });
        }
        memo[m] = seqs;
    }
    memo[n_leaves]
        .iter()
        .map(|seq| PlanarTree::from_child_counts(seq))
        .collect()
}

fn compose(
    m: usize,
    k: usize,
    parts: &mut Vec<usize>,
    pos: usize,
    memo: &[Vec<Vec<usize>>],
    emit: &mut impl FnMut(Vec<usize>),
) {
    if pos == k {
        // Cartesian product of subtree sequences for this composition.
        let mut acc: Vec<Vec<usize>> = vec![vec![k]];
        for &p in parts.iter() {
            let mut next = Vec::new();
            for prefix in &acc {
                for sub in &memo[p] {
                    let mut s = prefix.clone();
                    s.extend_from_slice(sub);
                    next.push(s);
                }
            }
            acc = next;
        }
        for s in acc {
            emit(s);
        }
        return;
    }
    let remaining_min = k - pos - 1;
    let used: usize = parts[..pos].iter().sum();
    if pos == k - 1 {
        // Final part is forced by the total.
        if m - used >= 1 {
            parts[pos] = m - used;
            compose(m, k, parts, pos + 1, memo, emit);
        }
        return;
    }
    for p in 1..=(m - used).saturating_sub(remaining_min) {
        parts[pos] = p;
        compose(m, k, parts, pos + 1, memo, emit);
    }
}

/// Product of offspring probabilities over the vertices; the unnormalized
/// Galton-Watson weight of a fixed shape.
pub fn gw_weight(t: &PlanarTree, nu: &crate::offspring::OffspringDist) -> f64 {
    (0..t.n_vertices()).map(|v| nu.pmf(t.degree(v))).product()
}
