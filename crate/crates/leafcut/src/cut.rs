//! The vertex cut-tree constructions and everything layered on them: the
//! exact first-split law, the Markov-branching sampler, the coupled
//! construction on a tree and its hat transform, and the continuous-time
//! fragmentation with mass processes and modified distances.
//!
//! All constructions assign one exponential clock per branch point up front
//! and replay the rings in time order, so within every component the next
//! cut lands on a branch point with probability proportional to its rate.
//! The cut-trees themselves are assembled by processing the rings in
//! reverse with a union-find over vertices (or edges), merging the pieces
//! each split produced.

use crate::error::Error;
use crate::offspring::{LeafCountDp, OffspringDist};
use crate::rng::exponential;
use crate::tree::{enumerate_trees, gw_weight, HatTree, PlanarTree};
use crate::Result;
use rand::Rng;
use serde::Serialize;
use std::collections::HashMap;

/// Which construction produced a cut-tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    Hw,
    HwModified,
    Dieuleveut,
}

/// How component mass is counted in the timed fragmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassConvention {
    /// Edges in the component over all edges of the hat tree. This is the
    /// measure the fragmentation rates integrate exactly.
    Edges,
    /// Leaves of the hat tree whose edge lies in the component, over the
    /// total number of hat leaves.
    HatLeaves,
}

/// Members are stored only for components at most this large.
pub const MEMBER_THRESHOLD: usize = 64;

/// Genealogical tree of the components of a fragmentation. Node 0 is the
/// initial full component; leaves are the final fragments.
#[derive(Clone, Debug)]
pub struct TimedCutTree {
    pub kind: CutKind,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Component size: vertices for the vertex cut-trees (appended
    /// singletons count zero), edges for the Dieuleveut cut-tree.
    pub size: Vec<usize>,
    /// Member list for small components, in increasing id order.
    pub members: Vec<Option<Vec<usize>>>,
    /// The branch point whose ring split this component (internal nodes).
    pub cut_vertex: Vec<Option<usize>>,
    /// When that ring happened (internal nodes).
    pub cut_time: Vec<Option<f64>>,
    /// Payload of a leaf: the vertex (HW) or edge (Dieuleveut) it carries;
    /// `None` for the appended singletons of the modified construction.
    pub leaf_item: Vec<Option<usize>>,
}

impl TimedCutTree {
    pub fn n_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&v| self.is_leaf(v)).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.children.iter().filter(|c| c.is_empty()).count()
    }

    pub fn depths(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.n_nodes()];
        for v in 1..self.n_nodes() {
            d[v] = d[self.parent[v].unwrap()] + 1;
        }
        d
    }

    /// Depth of every leaf node, in node order.
    pub fn leaf_depths(&self) -> Vec<usize> {
        let d = self.depths();
        self.leaves().into_iter().map(|v| d[v]).collect()
    }

    /// Graph distance between two nodes.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let d = self.depths();
        self.distance_with_depths(&d, a, b)
    }

    fn distance_with_depths(&self, depths: &[usize], mut a: usize, mut b: usize) -> usize {
        let mut dist = 0usize;
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

    /// Lowest common ancestor.
    pub fn lca(&self, mut a: usize, mut b: usize) -> usize {
        let depths = self.depths();
        while depths[a] > depths[b] {
            a = self.parent[a].unwrap();
        }
        while depths[b] > depths[a] {
            b = self.parent[b].unwrap();
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        a
    }

    /// Full distance matrix; intended for small trees.
    #[allow(clippy::needless_range_loop)]
    pub fn all_pairs_distances(&self) -> Vec<Vec<usize>> {
        let n = self.n_nodes();
        let depths = self.depths();
        let mut m = vec![vec![0usize; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let d = self.distance_with_depths(&depths, a, b);
                m[a][b] = d;
                m[b][a] = d;
            }
        }
        m
    }

    /// Leaf node carrying a given item (vertex or edge id).
    pub fn leaf_node_of_item(&self, item: usize) -> Option<usize> {
        (0..self.n_nodes()).find(|&v| self.is_leaf(v) && self.leaf_item[v] == Some(item))
    }

    /// Serializes as a parent array plus per-node payloads.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct NodeJson {
            size: usize,
            cut_vertex: Option<usize>,
            time: Option<f64>,
            leaf_item: Option<usize>,
        }
        #[derive(Serialize)]
        struct CutTreeJson {
            kind: CutKind,
            parents: Vec<i64>,
            nodes: Vec<NodeJson>,
        }
        let parents = self
            .parent
            .iter()
            .map(|p| p.map_or(-1, |x| x as i64))
            .collect();
        let nodes = (0..self.n_nodes())
            .map(|v| NodeJson {
                size: self.size[v],
                cut_vertex: self.cut_vertex[v],
                time: self.cut_time[v],
                leaf_item: self.leaf_item[v],
            })
            .collect();
        serde_json::to_string(&CutTreeJson {
            kind: self.kind,
            parents,
            nodes,
        })
        .expect("cut-tree serialization cannot fail")
    }
}

/// Union-find with path compression.
struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        self.parent[ra] = rb;
        rb
    }
}

/// Scratch arena for assembling a cut-tree before the preorder relabel.
struct Arena {
    kind: CutKind,
    children: Vec<Vec<usize>>,
    size: Vec<usize>,
    members: Vec<Option<Vec<usize>>>,
    cut_vertex: Vec<Option<usize>>,
    cut_time: Vec<Option<f64>>,
    leaf_item: Vec<Option<usize>>,
}

impl Arena {
    fn new(kind: CutKind) -> Self {
        Arena {
            kind,
            children: Vec::new(),
            size: Vec::new(),
            members: Vec::new(),
            cut_vertex: Vec::new(),
            cut_time: Vec::new(),
            leaf_item: Vec::new(),
        }
    }

    fn leaf(&mut self, size: usize, member: Option<usize>, item: Option<usize>) -> usize {
        self.children.push(Vec::new());
        self.size.push(size);
        self.members.push(Some(member.into_iter().collect()));
        self.cut_vertex.push(None);
        self.cut_time.push(None);
        self.leaf_item.push(item);
        self.size.len() - 1
    }

    fn internal(&mut self, children: Vec<usize>, cut_vertex: usize, cut_time: f64) -> usize {
        let size = children.iter().map(|&c| self.size[c]).sum();
        let members = {
            let mut acc: Option<Vec<usize>> = Some(Vec::new());
            for &c in &children {
                match (&mut acc, &self.members[c]) {
                    (Some(a), Some(m)) if a.len() + m.len() <= MEMBER_THRESHOLD => {
                        a.extend_from_slice(m)
                    }
                    _ => {
                        acc = None;
                        break;
                    }
                }
            }
            acc.map(|mut v| {
                v.sort_unstable();
                v
            })
        };
        self.children.push(children);
        self.size.push(size);
        self.members.push(members);
        self.cut_vertex.push(Some(cut_vertex));
        self.cut_time.push(Some(cut_time));
        self.leaf_item.push(None);
        self.size.len() - 1
    }

    /// Relabels nodes in depth-first order from `root` into a `TimedCutTree`.
    fn into_tree(self, root: usize) -> TimedCutTree {
        let n = self.size.len();
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            order.push(v);
            for &c in self.children[v].iter().rev() {
                stack.push(c);
            }
        }
        let mut new_index = vec![usize::MAX; n];
        for (i, &v) in order.iter().enumerate() {
            new_index[v] = i;
        }
        let mut parent = vec![None; order.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); order.len()];
        for (i, &v) in order.iter().enumerate() {
            children[i] = self.children[v].iter().map(|&c| new_index[c]).collect();
            for &c in &children[i] {
                parent[c] = Some(i);
            }
        }
        TimedCutTree {
            kind: self.kind,
            parent,
            children,
            size: order.iter().map(|&v| self.size[v]).collect(),
            members: order.iter().map(|&v| self.members[v].clone()).collect(),
            cut_vertex: order.iter().map(|&v| self.cut_vertex[v]).collect(),
            cut_time: order.iter().map(|&v| self.cut_time[v]).collect(),
            leaf_item: order.iter().map(|&v| self.leaf_item[v]).collect(),
        }
    }
}

/// One clock per branch point, exponential with rate `rate(k_v)`.
fn draw_clocks<R: Rng>(t: &PlanarTree, rng: &mut R, rate: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..t.n_vertices())
        .map(|v| {
            let k = t.degree(v);
            if k >= 2 {
                exponential(rng, rate(k))
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Builds the vertex cut-tree of `t` from per-vertex ring times: rings are
/// replayed in reverse, merging the root piece of the split (the component
/// keeping `v` as a new leaf) with the child subtree pieces. With `modified`
/// every split also appends `k - 2` singleton components.
fn vertex_cut_tree_from_clocks(t: &PlanarTree, clocks: &[f64], modified: bool) -> TimedCutTree {
    let kind = if modified { CutKind::HwModified } else { CutKind::Hw };
    let mut arena = Arena::new(kind);
    let mut dsu = Dsu::new(t.n_vertices());
    let mut node_of: Vec<usize> = (0..t.n_vertices())
        .map(|v| arena.leaf(1, Some(v), Some(v)))
        .collect();
    let mut events: Vec<usize> = t.branch_points();
    events.sort_by(|&a, &b| clocks[a].partial_cmp(&clocks[b]).unwrap());
    for &v in events.iter().rev() {
        let mut kids = Vec::with_capacity(t.degree(v) + 1);
        kids.push(node_of[dsu.find(v)]);
        for &c in t.children(v) {
            kids.push(node_of[dsu.find(c)]);
        }
        if modified {
            for _ in 0..t.degree(v) - 2 {
                let e = arena.leaf(0, None, None);
                kids.push(e);
            }
        }
        let node = arena.internal(kids, v, clocks[v]);
        let mut class = dsu.find(v);
        for &c in t.children(v) {
            let rc = dsu.find(c);
            class = dsu.union(class, rc);
        }
        node_of[class] = node;
    }
    arena.into_tree(node_of[dsu.find(t.root())])
}

/// Our vertex cut-tree: each branch point is cut at rate `k_v - 1`, so
/// within every component it is selected with probability
/// `(k_v - 1) / (leaves - 1)`.
pub fn hw_cut_tree<R: Rng>(t: &PlanarTree, rng: &mut R) -> Result<TimedCutTree> {
    t.validate(true)?;
    let clocks = draw_clocks(t, rng, |k| (k - 1) as f64);
    Ok(vertex_cut_tree_from_clocks(t, &clocks, false))
}

/// The modified vertex cut-tree: the same splits, plus `k - 2` appended
/// singleton components per split. Given the same stream this uses the same
/// cut sequence as [`hw_cut_tree`].
pub fn mod_cut_tree<R: Rng>(t: &PlanarTree, rng: &mut R) -> Result<TimedCutTree> {
    t.validate(true)?;
    let clocks = draw_clocks(t, rng, |k| (k - 1) as f64);
    Ok(vertex_cut_tree_from_clocks(t, &clocks, true))
}

/// Dieuleveut cut-tree of a hat tree from per-vertex ring times. Components
/// are edge sets; a ring at `v` removes all edges above `v` as singletons.
/// Edges are identified by their child endpoint, so ids run over
/// `1..n_vertices`. Empty residual components are not materialized.
fn dieuleveut_from_clocks(hat: &HatTree, clocks: &[f64]) -> TimedCutTree {
    let t = &hat.tree;
    let n = t.n_vertices();
    let mut arena = Arena::new(CutKind::Dieuleveut);
    if n == 1 {
        let root = arena.leaf(0, None, None);
        return arena.into_tree(root);
    }
    // Edge e_w = (w -> parent(w)) is indexed by w - 1 in the union-find.
    let mut dsu = Dsu::new(n - 1);
    let mut node_of: Vec<usize> = (1..n).map(|w| arena.leaf(1, Some(w), Some(w))).collect();
    let mut events: Vec<usize> = t.branch_points();
    events.sort_by(|&a, &b| clocks[a].partial_cmp(&clocks[b]).unwrap());
    for &v in events.iter().rev() {
        let mut kids = Vec::new();
        let mut classes = Vec::new();
        // Piece below v: present while v's own downward edge is still uncut.
        if v != t.root() {
            let p = t.parent(v).unwrap();
            if clocks[p] > clocks[v] {
                let c = dsu.find(v - 1);
                kids.push(node_of[c]);
                classes.push(c);
            }
        }
        for &c in t.children(v) {
            let cls = dsu.find(c - 1);
            kids.push(node_of[cls]);
            classes.push(cls);
            // Piece above c: its subtree edges, still together iff c uncut.
            if !t.is_leaf(c) && clocks[c] > clocks[v] {
                let first_grandchild = t.children(c)[0];
                let cls = dsu.find(first_grandchild - 1);
                kids.push(node_of[cls]);
                classes.push(cls);
            }
        }
        let node = arena.internal(kids, v, clocks[v]);
        let mut class = classes[0];
        for &c in &classes[1..] {
            class = dsu.union(class, c);
        }
        node_of[dsu.find(class)] = node;
    }
    arena.into_tree(node_of[dsu.find(0)])
}

/// Dieuleveut cut-tree of a hat tree: each branch point rings at rate `k_v`.
pub fn dieuleveut_cut_tree<R: Rng>(hat: &HatTree, rng: &mut R) -> Result<TimedCutTree> {
    hat.tree.validate(true)?;
    let clocks = draw_clocks(&hat.tree, rng, |k| k as f64);
    Ok(dieuleveut_from_clocks(hat, &clocks))
}

/// The coupled pair of cut-trees driven by one clock vector: branch point
/// `v` of the base tree rings at rate `k_v - 1` for the modified vertex
/// cut-tree and, as a branch point of the hat tree with `2 k_v - 2`
/// children, at the proportional rate `2 (k_v - 1)` for the Dieuleveut
/// cut-tree, i.e. at half the time, preserving the ring order.
pub struct CoupledCutTrees {
    pub hat: HatTree,
    pub mod_tree: TimedCutTree,
    pub d_tree: TimedCutTree,
    /// Node pairs (modified tree, Dieuleveut tree) covering both node sets.
    pub correspondence: Vec<(usize, usize)>,
}

pub fn coupled_cut_trees<R: Rng>(t: &PlanarTree, rng: &mut R) -> Result<CoupledCutTrees> {
    t.validate(true)?;
    let hat = t.hat()?;
    let clocks = draw_clocks(t, rng, |k| (k - 1) as f64);
    let mod_tree = vertex_cut_tree_from_clocks(t, &clocks, true);
    let mut hat_clocks = vec![f64::INFINITY; hat.tree.n_vertices()];
    for v in t.branch_points() {
        hat_clocks[hat.from_original[v]] = clocks[v] / 2.0;
    }
    let d_tree = dieuleveut_from_clocks(&hat, &hat_clocks);

    // Internal nodes pair up through the branch point they split at.
    let mut mod_node_of_vertex: HashMap<usize, usize> = HashMap::new();
    for i in 0..mod_tree.n_nodes() {
        if let Some(v) = mod_tree.cut_vertex[i] {
            mod_node_of_vertex.insert(v, i);
        }
    }
    let mut d_node_of_vertex: HashMap<usize, usize> = HashMap::new();
    for i in 0..d_tree.n_nodes() {
        if let Some(v) = d_tree.cut_vertex[i] {
            d_node_of_vertex
                .insert(hat.to_original[v].expect("cuts happen at original vertices"), i);
        }
    }
    let mut correspondence = Vec::new();
    if t.branch_points().is_empty() {
        correspondence.push((mod_tree.root(), d_tree.root()));
    } else {
        for v in t.branch_points() {
            correspondence.push((mod_node_of_vertex[&v], d_node_of_vertex[&v]));
        }
        // Every leaf is related to the other tree's node at its parent's
        // cut vertex, keeping the distortion within two.
        for leaf in mod_tree.leaves() {
            let v = mod_tree.cut_vertex[mod_tree.parent[leaf].unwrap()].unwrap();
            correspondence.push((leaf, d_node_of_vertex[&v]));
        }
        for leaf in d_tree.leaves() {
            let v = d_tree.cut_vertex[d_tree.parent[leaf].unwrap()].unwrap();
            let v = hat.to_original[v].expect("cuts happen at original vertices");
            correspondence.push((mod_node_of_vertex[&v], leaf));
        }
    }
    Ok(CoupledCutTrees {
        hat,
        mod_tree,
        d_tree,
        correspondence,
    })
}

/// The first-split degree law of the conditioned tree, computed two ways:
/// by exhaustive enumeration of shapes, and by the closed-form splitting
/// probability
/// `q(k) = (k-1)/(k+1) nu_k (n+1)/(n-1) P(S_{k+1} = n+1) / (nu0 P(S_1 = n))`.
pub struct FirstCutLaw {
    pub by_enumeration: Vec<(usize, f64)>,
    pub by_formula: Vec<(usize, f64)>,
}

pub fn first_cut_law_exact(nu: &OffspringDist, n: usize, enum_cap: usize) -> Result<FirstCutLaw> {
    if n < 2 {
        return Err(Error::InvalidArgument("first split needs n >= 2".into()));
    }
    if !nu.feasible_leaf_count(n) {
        return Err(Error::InfeasibleLeafCount(n));
    }
    let support = nu.branch_support();
    let trees = enumerate_trees(n, &support, enum_cap)?;
    let weights: Vec<f64> = trees.iter().map(|t| gw_weight(t, nu)).collect();
    let total: f64 = weights.iter().sum();
    let mut by_enum: HashMap<usize, f64> = HashMap::new();
    for (t, w) in trees.iter().zip(&weights) {
        for v in t.branch_points() {
            let k = t.degree(v);
            *by_enum.entry(k).or_default() += w / total * (k - 1) as f64 / (n - 1) as f64;
        }
    }
    let mut dp = LeafCountDp::new(nu, n + 1);
    let mut by_formula = Vec::new();
    for &k in &support {
        let q = splitting_probability(nu, &mut dp, n, k)?;
        by_formula.push((k, q));
    }
    let mut by_enumeration: Vec<(usize, f64)> = support
        .iter()
        .map(|&k| (k, by_enum.get(&k).copied().unwrap_or(0.0)))
        .collect();
    by_enumeration.sort_unstable_by_key(|&(k, _)| k);
    by_formula.sort_unstable_by_key(|&(k, _)| k);
    Ok(FirstCutLaw {
        by_enumeration,
        by_formula,
    })
}

/// Closed-form probability that the first cut of the `n`-leaf tree hits a
/// branch point with `k` children.
pub fn splitting_probability(
    nu: &OffspringDist,
    dp: &mut LeafCountDp,
    n: usize,
    k: usize,
) -> Result<f64> {
    let p_n = dp.s_pmf(1, n)?;
    if p_n <= 0.0 {
        return Err(Error::InfeasibleLeafCount(n));
    }
    let s = dp.s_pmf(k + 1, n + 1)?;
    Ok((k - 1) as f64 / (k + 1) as f64 * nu.pmf(k) * (n + 1) as f64 / (n - 1) as f64 * s
        / (nu.nu0() * p_n))
}

/// Samples the number of children at the first cut from the closed-form law.
fn sample_split_degree<R: Rng>(
    nu: &OffspringDist,
    dp: &mut LeafCountDp,
    n: usize,
    rng: &mut R,
) -> Result<usize> {
    let support = nu.branch_support();
    let qs: Vec<f64> = support
        .iter()
        .map(|&k| splitting_probability(nu, dp, n, k))
        .collect::<Result<_>>()?;
    let total: f64 = qs.iter().sum();
    debug_assert!((total - 1.0).abs() < 1e-9, "split law sums to {total}");
    let mut u = rng.gen::<f64>() * total;
    for (&k, &q) in support.iter().zip(&qs) {
        u -= q;
        if u < 0.0 {
            return Ok(k);
        }
    }
    Ok(*support.last().unwrap())
}

/// Sequential exact sampling of i.i.d. leaf counts conditioned on their sum.
fn sample_conditioned_leaf_counts<R: Rng>(
    dp: &mut LeafCountDp,
    parts: usize,
    total: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(parts);
    let mut remaining_sum = total;
    for remaining in (1..=parts).rev() {
        if remaining == 1 {
            out.push(remaining_sum);
            break;
        }
        let denom = dp.s_pmf(remaining, remaining_sum)?;
        let mut u = rng.gen::<f64>() * denom;
        let mut chosen = remaining_sum - (remaining - 1);
        for m in 1..=remaining_sum - (remaining - 1) {
            let w = dp.single_pmf(m) * dp.s_pmf(remaining - 1, remaining_sum - m)?;
            u -= w;
            if u < 0.0 {
                chosen = m;
                break;
            }
        }
        out.push(chosen);
        remaining_sum -= chosen;
    }
    Ok(out)
}

/// One split of the Markov branching recursion: block sizes in doubled
/// units (`2 X_i - 1` for the main blocks plus `k - 2` appended ones), so
/// they sum to `2n - 1`.
pub fn mb_split_sample<R: Rng>(
    nu: &OffspringDist,
    dp: &mut LeafCountDp,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::InvalidArgument("splits need n >= 2".into()));
    }
    if !nu.feasible_leaf_count(n) {
        return Err(Error::InfeasibleLeafCount(n));
    }
    let k = sample_split_degree(nu, dp, n, rng)?;
    let xs = sample_conditioned_leaf_counts(dp, k + 1, n + 1, rng)?;
    let mut blocks: Vec<usize> = xs.into_iter().map(|x| 2 * x - 1).collect();
    blocks.extend(std::iter::repeat_n(1, k - 2));
    Ok(blocks)
}

/// Recursive Markov branching tree with the first-split law above; blocks
/// of size one are leaves. The result has `2n - 1` leaves and mirrors the
/// law of the modified vertex cut-tree.
pub fn mb_tree_sample<R: Rng>(nu: &OffspringDist, n: usize, rng: &mut R) -> Result<PlanarTree> {
    let mut dp = LeafCountDp::new(nu, n + 1);
    mb_tree_sample_with(nu, &mut dp, n, rng)
}

/// As [`mb_tree_sample`] but reusing a caller-held leaf-count table, which
/// must cover `n + 1`.
pub fn mb_tree_sample_with<R: Rng>(
    nu: &OffspringDist,
    dp: &mut LeafCountDp,
    n: usize,
    rng: &mut R,
) -> Result<PlanarTree> {
    if !nu.feasible_leaf_count(n) {
        return Err(Error::InfeasibleLeafCount(n));
    }
    fn rec<R: Rng>(
        nu: &OffspringDist,
        dp: &mut LeafCountDp,
        m: usize,
        counts: &mut Vec<usize>,
        rng: &mut R,
    ) -> Result<()> {
        if m == 1 {
            counts.push(0);
            return Ok(());
        }
        let k = sample_split_degree(nu, dp, m, rng)?;
        let xs = sample_conditioned_leaf_counts(dp, k + 1, m + 1, rng)?;
        counts.push(2 * k - 1);
        for &x in &xs {
            rec(nu, dp, x, counts, rng)?;
        }
        for _ in 0..k - 2 {
            counts.push(0);
        }
        Ok(())
    }
    let mut counts = Vec::with_capacity(4 * n);
    rec(nu, dp, n, &mut counts, rng)?;
    PlanarTree::from_child_counts(&counts)
}

/// Exact expected depth of a uniform leaf of the Markov branching tree at
/// leaf count `n`, by the recursion on total leaf depth: a split into
/// blocks `X_1..X_{k+1}` plus `k - 2` singletons pushes all `2n - 1`
/// leaves one level down, so
/// `D(n) = (2n - 1) + (k+1) E[D(X_1)]` averaged over the split law,
/// and the mean is `D(n) / (2n - 1)`.
pub fn mb_mean_leaf_depth(nu: &OffspringDist, n: usize) -> Result<f64> {
    if !nu.feasible_leaf_count(n) {
        return Err(Error::InfeasibleLeafCount(n));
    }
    let mut dp = LeafCountDp::new(nu, n + 1);
    dp.warm(nu.max_k() + 1)?;
    let mut total_depth = vec![0.0f64; n + 1];
    for m in 2..=n {
        if !nu.feasible_leaf_count(m) {
            continue;
        }
        let mut acc = (2 * m - 1) as f64;
        for k in nu.branch_support() {
            let q = splitting_probability(nu, &mut dp, m, k)?;
            if q <= 0.0 {
                continue;
            }
            let denom = dp.s_pmf(k + 1, m + 1)?;
            let mut inner = 0.0;
            for (x, td) in total_depth.iter().enumerate().take(m).skip(1) {
                let w = dp.single_pmf(x) * dp.s_pmf(k, m + 1 - x)?;
                if w > 0.0 {
                    inner += w / denom * td;
                }
            }
            acc += q * (k + 1) as f64 * inner;
        }
        total_depth[m] = acc;
    }
    Ok(total_depth[n] / (2 * n - 1) as f64)
}

/// Piecewise-constant mass of one tracked edge's component chain: value
/// `masses[i]` on `[times[i], times[i+1])` and zero from the last time on.
#[derive(Clone, Debug)]
pub struct MassHistory {
    pub times: Vec<f64>,
    pub masses: Vec<f64>,
}

impl MassHistory {
    /// Exact integral of the mass over `[from, infinity)`.
    pub fn integral(&self, from: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.masses.len() {
            let lo = self.times[i].max(from);
            let hi = self.times[i + 1];
            if hi > lo {
                acc += self.masses[i] * (hi - lo);
            }
        }
        acc
    }
}

/// Outcome of the continuous-time fragmentation of a hat tree.
pub struct FragmentationTrace {
    pub tree: TimedCutTree,
    /// Ring events in time order: (time, hat vertex).
    pub events: Vec<(f64, usize)>,
    pub tracked: Vec<usize>,
    pub histories: Vec<MassHistory>,
    /// Leaf node of each edge id, for distance queries.
    leaf_node: Vec<Option<usize>>,
}

impl FragmentationTrace {
    fn tracked_index(&self, edge: usize) -> Result<usize> {
        self.tracked
            .iter()
            .position(|&e| e == edge)
            .ok_or_else(|| Error::InvalidArgument(format!("edge {edge} is not tracked")))
    }

    /// First time the two edges sit in different components: the ring that
    /// split their components apart.
    pub fn separation_time(&self, i: usize, j: usize) -> Result<f64> {
        let a = self.leaf_node[i]
            .ok_or_else(|| Error::InvalidArgument(format!("unknown edge {i}")))?;
        let b = self.leaf_node[j]
            .ok_or_else(|| Error::InvalidArgument(format!("unknown edge {j}")))?;
        let lca = self.tree.lca(a, b);
        Ok(self.tree.cut_time[lca].expect("leaves of distinct edges have an internal lca"))
    }
}

/// Runs the timed vertex fragmentation of a hat tree: branch point `v`
/// rings at rate `k_v / (2 a~_n)`, removing the edges above it. Tracked
/// edges get exact mass histories.
pub fn timed_fragmentation<R: Rng>(
    hat: &HatTree,
    a_tilde: f64,
    tracked: &[usize],
    mass: MassConvention,
    rng: &mut R,
) -> Result<FragmentationTrace> {
    hat.tree.validate(true)?;
    if a_tilde <= 0.0 {
        return Err(Error::InvalidArgument("a~_n must be positive".into()));
    }
    let n_edges = hat.n_edges();
    for &e in tracked {
        if e == 0 || e > n_edges {
            return Err(Error::InvalidArgument(format!("edge id {e} out of range")));
        }
    }
    let clocks = draw_clocks(&hat.tree, rng, |k| k as f64 / (2.0 * a_tilde));
    let tree = dieuleveut_from_clocks(hat, &clocks);

    let mut events: Vec<(f64, usize)> = hat
        .tree
        .branch_points()
        .into_iter()
        .map(|v| (clocks[v], v))
        .collect();
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut leaf_node = vec![None; n_edges + 1];
    for v in 0..tree.n_nodes() {
        if tree.is_leaf(v) {
            if let Some(e) = tree.leaf_item[v] {
                leaf_node[e] = Some(v);
            }
        }
    }

    // Mass numerators per node under the chosen convention.
    let (numer, denom) = match mass {
        MassConvention::Edges => (
            tree.size.iter().map(|&s| s as f64).collect::<Vec<_>>(),
            n_edges as f64,
        ),
        MassConvention::HatLeaves => {
            let mut numer = vec![0.0; tree.n_nodes()];
            for v in (0..tree.n_nodes()).rev() {
                if tree.is_leaf(v) {
                    let e = tree.leaf_item[v].expect("dieuleveut leaves carry edges");
                    numer[v] = hat.tree.is_leaf(e) as usize as f64;
                } else {
                    numer[v] = tree.children[v].iter().map(|&c| numer[c]).sum();
                }
            }
            (numer, hat.tree.n_leaves() as f64)
        }
    };

    let histories = tracked
        .iter()
        .map(|&e| {
            let leaf = leaf_node[e].expect("edge ids were range-checked");
            let mut chain = Vec::new();
            let mut v = leaf;
            loop {
                chain.push(v);
                match tree.parent[v] {
                    Some(p) => v = p,
                    None => break,
                }
            }
            chain.reverse();
            // Root component is born at time zero; each component dies at
            // its own ring, which is the birth of the next in the chain.
            let mut times = vec![0.0];
            let mut masses = Vec::new();
            for &node in chain.iter().take(chain.len() - 1) {
                masses.push(numer[node] / denom);
                times.push(tree.cut_time[node].expect("chain interiors are internal"));
            }
            MassHistory { times, masses }
        })
        .collect();

    Ok(FragmentationTrace {
        tree,
        events,
        tracked: tracked.to_vec(),
        histories,
        leaf_node,
    })
}

/// The cut-tree and mass-integral distances of a pair of tracked edges.
pub struct CutDistances {
    /// Graph distance between the edges' leaves in the cut-tree.
    pub delta: usize,
    /// Cuts experienced by edge `i`: its leaf depth.
    pub delta_root_i: usize,
    pub delta_root_j: usize,
    /// Integral of both masses from the separation time on.
    pub delta_prime: f64,
    /// Integral of edge `i`'s mass from time zero.
    pub delta_prime_root_i: f64,
    pub delta_prime_root_j: f64,
    pub tau: f64,
}

pub fn cut_distances(trace: &FragmentationTrace, i: usize, j: usize) -> Result<CutDistances> {
    let ti = trace.tracked_index(i)?;
    let tj = trace.tracked_index(j)?;
    let a = trace.leaf_node[i].unwrap();
    let b = trace.leaf_node[j].unwrap();
    let depths = trace.tree.depths();
    let tau = trace.separation_time(i, j)?;
    Ok(CutDistances {
        delta: trace.tree.distance(a, b),
        delta_root_i: depths[a],
        delta_root_j: depths[b],
        delta_prime: trace.histories[ti].integral(tau) + trace.histories[tj].integral(tau),
        delta_prime_root_i: trace.histories[ti].integral(0.0),
        delta_prime_root_j: trace.histories[tj].integral(0.0),
        tau,
    })
}

/// Monte Carlo check of the second-moment inequality
/// `E[((a~/(n-1)) d - d')^2] <= (a~/(n-1)) E[d'(0,i) + d'(0,j)]`
/// in both its pair and root form, plus the tail integrals
/// `E[int_{2^l}^inf mu dt]` for `l = 0..=l_max`.
pub struct LemmaMcReport {
    pub n: usize,
    pub replicates: usize,
    pub pair_lhs_mean: f64,
    pub pair_rhs_mean: f64,
    pub pair_diff_se: f64,
    pub root_lhs_mean: f64,
    pub root_lhs_se: f64,
    pub root_rhs_mean: f64,
    pub root_diff_se: f64,
    pub delta_prime_root_mean: f64,
    pub delta_prime_root_se: f64,
    pub tail_means: Vec<f64>,
}

impl LemmaMcReport {
    pub fn pair_pass(&self) -> bool {
        self.pair_lhs_mean <= self.pair_rhs_mean + 3.0 * self.pair_diff_se
    }

    pub fn root_pass(&self) -> bool {
        self.root_lhs_mean <= self.root_rhs_mean + 3.0 * self.root_diff_se
    }

    pub fn tails_decreasing(&self) -> bool {
        self.tail_means.windows(2).all(|w| w[1] <= w[0] + 1e-12)
    }
}

pub fn lemma_inequality_mc(
    nu: &OffspringDist,
    n: usize,
    replicates: usize,
    l_max: u32,
    mass: MassConvention,
    master_seed: u64,
) -> Result<LemmaMcReport> {
    use rayon::prelude::*;
    nu.require_critical()?;
    if n < 2 {
        return Err(Error::InvalidArgument("fragmentation needs n >= 2".into()));
    }
    if !nu.feasible_leaf_count(n) {
        return Err(Error::InfeasibleLeafCount(n));
    }
    let norms = crate::offspring::norming(nu, n)?;
    let a_tilde = norms.a_tilde_n;
    let scale = a_tilde / (n - 1) as f64;
    let cfg = crate::sampler::SamplerConfig::for_n_leaves(n);

    struct Row {
        pair_lhs: f64,
        root_lhs: f64,
        rhs: f64,
        dp_root: f64,
        tails: Vec<f64>,
    }
    let rows: Vec<Row> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = crate::rng::substream(master_seed, rep);
            let tree = crate::sampler::sample_gw_n_leaves(nu, n, &cfg, &mut rng)
                .expect("attempt cap sized for n")
                .tree;
            let hat = tree.hat().expect("conditioned trees have no unary vertices");
            let n_edges = hat.n_edges();
            let i = rng.gen_range(1..=n_edges);
            let j = loop {
                let j = rng.gen_range(1..=n_edges);
                if j != i || n_edges == 1 {
                    break j;
                }
            };
            let trace = timed_fragmentation(&hat, a_tilde, &[i, j], mass, &mut rng)
                .expect("tracked edges are in range");
            let d = cut_distances(&trace, i, j).expect("edges are tracked");
            let pair_lhs = (scale * d.delta as f64 - d.delta_prime).powi(2);
            let root_lhs = (scale * d.delta_root_i as f64 - d.delta_prime_root_i).powi(2);
            let rhs = scale * (d.delta_prime_root_i + d.delta_prime_root_j);
            let hist = &trace.histories[0];
            let tails = (0..=l_max).map(|l| hist.integral((1u64 << l) as f64)).collect();
            Row {
                pair_lhs,
                root_lhs,
                rhs,
                dp_root: d.delta_prime_root_i,
                tails,
            }
        })
        .collect();

    let m = replicates as f64;
    let mean = |f: &dyn Fn(&Row) -> f64| rows.iter().map(f).sum::<f64>() / m;
    let se = |f: &dyn Fn(&Row) -> f64, mu: f64| {
        (rows.iter().map(|r| (f(r) - mu).powi(2)).sum::<f64>() / (m - 1.0).max(1.0) / m).sqrt()
    };
    let pair_lhs_mean = mean(&|r: &Row| r.pair_lhs);
    let root_lhs_mean = mean(&|r: &Row| r.root_lhs);
    let rhs_mean = mean(&|r: &Row| r.rhs);
    let pair_diff_mean = mean(&|r: &Row| r.pair_lhs - r.rhs);
    let root_diff_mean = mean(&|r: &Row| r.root_lhs - r.rhs);
    let dp_root_mean = mean(&|r: &Row| r.dp_root);
    let mut tail_means = vec![0.0; l_max as usize + 1];
    for (l, t) in tail_means.iter_mut().enumerate() {
        *t = rows.iter().map(|r| r.tails[l]).sum::<f64>() / m;
    }
    Ok(LemmaMcReport {
        n,
        replicates,
        pair_lhs_mean,
        pair_rhs_mean: rhs_mean,
        pair_diff_se: se(&|r: &Row| r.pair_lhs - r.rhs, pair_diff_mean),
        root_lhs_mean,
        root_lhs_se: se(&|r: &Row| r.root_lhs, root_lhs_mean),
        root_rhs_mean: rhs_mean,
        root_diff_se: se(&|r: &Row| r.root_lhs - r.rhs, root_diff_mean),
        delta_prime_root_mean: dp_root_mean,
        delta_prime_root_se: se(&|r: &Row| r.dp_root, dp_root_mean),
        tail_means,
    })
}

/// Exact law of the unordered shape of the modified vertex cut-tree of one
/// fixed tree, by recursion over components; keys are canonical unordered
/// shape strings.
pub struct ModCutLaw {
    memo: HashMap<Vec<i64>, HashMap<String, f64>>,
}

impl ModCutLaw {
    pub fn new() -> Self {
        ModCutLaw {
            memo: HashMap::new(),
        }
    }

    pub fn law(&mut self, t: &PlanarTree) -> HashMap<String, f64> {
        let key = t.to_parents();
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        let mut out: HashMap<String, f64> = HashMap::new();
        if t.n_vertices() == 1 {
            out.insert("()".into(), 1.0);
        } else {
            let branch = t.branch_points();
            let total: f64 = branch.iter().map(|&v| (t.degree(v) - 1) as f64).sum();
            for &v in &branch {
                let p_v = (t.degree(v) - 1) as f64 / total;
                let mut pieces = vec![root_part(t, v)];
                pieces.extend(t.children(v).iter().map(|&c| subtree_of(t, c)));
                let extra_leaves = t.degree(v) - 2;
                let piece_laws: Vec<HashMap<String, f64>> =
                    pieces.iter().map(|p| self.law(p)).collect();
                let mut acc: Vec<(Vec<String>, f64)> = vec![(Vec::new(), p_v)];
                for law in &piece_laws {
                    let mut next = Vec::new();
                    for (keys, prob) in &acc {
                        for (k, q) in law {
                            let mut ks = keys.clone();
                            ks.push(k.clone());
                            next.push((ks, prob * q));
                        }
                    }
                    acc = next;
                }
                for (mut keys, prob) in acc {
                    keys.extend(std::iter::repeat_n("()".to_string(), extra_leaves));
                    keys.sort();
                    let shape = format!("({})", keys.concat());
                    *out.entry(shape).or_default() += prob;
                }
            }
        }
        self.memo.insert(key, out.clone());
        out
    }

    /// Mixture of the per-shape laws over the conditioned tree.
    pub fn conditioned_law(
        &mut self,
        nu: &OffspringDist,
        n: usize,
        enum_cap: usize,
    ) -> Result<HashMap<String, f64>> {
        let trees = enumerate_trees(n, &nu.branch_support(), enum_cap)?;
        let weights: Vec<f64> = trees.iter().map(|t| gw_weight(t, nu)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InfeasibleLeafCount(n));
        }
        let mut out: HashMap<String, f64> = HashMap::new();
        for (t, w) in trees.iter().zip(&weights) {
            for (shape, p) in self.law(t) {
                *out.entry(shape).or_default() += w / total * p;
            }
        }
        Ok(out)
    }
}

impl Default for ModCutLaw {
    fn default() -> Self {
        Self::new()
    }
}

/// The subtree rooted at `v` as a standalone tree.
pub fn subtree_of(t: &PlanarTree, v: usize) -> PlanarTree {
    let mut counts = Vec::new();
    let mut stack = vec![v];
    while let Some(u) = stack.pop() {
        counts.push(t.degree(u));
        for &c in t.children(u).iter().rev() {
            stack.push(c);
        }
    }
    PlanarTree::from_child_counts(&counts).expect("subtrees of valid trees are valid")
}

/// The tree with the strict descendants of `v` removed, leaving `v` a leaf.
pub fn root_part(t: &PlanarTree, v: usize) -> PlanarTree {
    let mut counts = Vec::new();
    let mut stack = vec![t.root()];
    while let Some(u) = stack.pop() {
        if u == v {
            counts.push(0);
            continue;
        }
        counts.push(t.degree(u));
        for &c in t.children(u).iter().rev() {
            stack.push(c);
        }
    }
    PlanarTree::from_child_counts(&counts).expect("pruned trees are valid")
}

/// Exact recursive law of the unordered Markov branching shape at leaf
/// count `n`, generated by the closed-form splitting probabilities.
pub struct MbLaw<'a> {
    nu: &'a OffspringDist,
    dp: LeafCountDp,
    memo: HashMap<usize, HashMap<String, f64>>,
}

impl<'a> MbLaw<'a> {
    pub fn new(nu: &'a OffspringDist, n_max: usize) -> Self {
        MbLaw {
            nu,
            dp: LeafCountDp::new(nu, n_max + 1),
            memo: HashMap::new(),
        }
    }

    pub fn law(&mut self, n: usize) -> Result<HashMap<String, f64>> {
        if let Some(hit) = self.memo.get(&n) {
            return Ok(hit.clone());
        }
        let mut out: HashMap<String, f64> = HashMap::new();
        if n == 1 {
            out.insert("()".into(), 1.0);
        } else {
            for k in self.nu.branch_support() {
                let q = splitting_probability(self.nu, &mut self.dp, n, k)?;
                if q <= 0.0 {
                    continue;
                }
                let denom = self.dp.s_pmf(k + 1, n + 1)?;
                let mut comp = Vec::new();
                compositions(n + 1, k + 1, &mut Vec::new(), &mut comp);
                for sizes in comp {
                    let p_sizes: f64 =
                        sizes.iter().map(|&m| self.dp.single_pmf(m)).product::<f64>() / denom;
                    if p_sizes <= 0.0 {
                        continue;
                    }
                    let laws: Vec<HashMap<String, f64>> =
                        sizes.iter().map(|&m| self.law(m)).collect::<Result<_>>()?;
                    let mut acc: Vec<(Vec<String>, f64)> = vec![(Vec::new(), q * p_sizes)];
                    for law in &laws {
                        let mut next = Vec::new();
                        for (keys, prob) in &acc {
                            for (key, p) in law {
                                let mut ks = keys.clone();
                                ks.push(key.clone());
                                next.push((ks, prob * p));
                            }
                        }
                        acc = next;
                    }
                    for (mut keys, prob) in acc {
                        keys.extend(std::iter::repeat_n("()".to_string(), k - 2));
                        keys.sort();
                        let shape = format!("({})", keys.concat());
                        *out.entry(shape).or_default() += prob;
                    }
                }
            }
        }
        self.memo.insert(n, out.clone());
        Ok(out)
    }
}

fn compositions(total: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        if total >= 1 {
            let mut c = cur.clone();
            c.push(total);
            out.push(c);
        }
        return;
    }
    for m in 1..=total.saturating_sub(parts - 1) {
        cur.push(m);
        compositions(total - m, parts - 1, cur, out);
        cur.pop();
    }
}

/// Exact ranked-block-size law of the first split, from enumeration: for
/// each shape and branch point, the doubled block sizes ranked decreasing.
pub fn ranked_split_law_enum(
    nu: &OffspringDist,
    n: usize,
    enum_cap: usize,
) -> Result<HashMap<Vec<usize>, f64>> {
    let trees = enumerate_trees(n, &nu.branch_support(), enum_cap)?;
    let weights: Vec<f64> = trees.iter().map(|t| gw_weight(t, nu)).collect();
    let total: f64 = weights.iter().sum();
    let mut out: HashMap<Vec<usize>, f64> = HashMap::new();
    for (t, w) in trees.iter().zip(&weights) {
        for v in t.branch_points() {
            let k = t.degree(v);
            let p = w / total * (k - 1) as f64 / (n - 1) as f64;
            let mut blocks: Vec<usize> = t
                .children(v)
                .iter()
                .map(|&c| 2 * subtree_of(t, c).n_leaves() - 1)
                .collect();
            let sub_leaves: usize =
                t.children(v).iter().map(|&c| subtree_of(t, c).n_leaves()).sum();
            // The root part keeps v as a fresh leaf.
            blocks.push(2 * (n - sub_leaves + 1) - 1);
            blocks.extend(std::iter::repeat_n(1, k - 2));
            blocks.sort_unstable_by(|a, b| b.cmp(a));
            *out.entry(blocks).or_default() += p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn binary() -> OffspringDist {
        OffspringDist::new_critical(&[(0, 0.5), (2, 0.5)]).unwrap()
    }

    fn ternary() -> OffspringDist {
        OffspringDist::new_critical(&[(0, 2.0 / 3.0), (3, 1.0 / 3.0)]).unwrap()
    }

    fn mixed() -> OffspringDist {
        OffspringDist::new_critical(&[(0, 7.0 / 12.0), (2, 0.25), (3, 1.0 / 6.0)]).unwrap()
    }

    fn cherry() -> PlanarTree {
        PlanarTree::from_parents(&[-1, 0, 0]).unwrap()
    }

    fn ternary_star() -> PlanarTree {
        PlanarTree::from_parents(&[-1, 0, 0, 0]).unwrap()
    }

    #[test]
    fn hw_cut_tree_small_shapes() {
        let mut rng = substream(1, 0);
        // Cherry: a single cut into {root}, {a}, {b}.
        let ct = hw_cut_tree(&cherry(), &mut rng).unwrap();
        assert_eq!(ct.n_nodes(), 4);
        assert_eq!(ct.children[0].len(), 3);
        assert_eq!(ct.n_leaves(), 3);
        assert_eq!(ct.size[0], 3);
        // Planar order: the component of the cut vertex (the old root) first.
        assert_eq!(ct.leaf_item[ct.children[0][0]], Some(0));

        // Single vertex: no cuts at all.
        let ct = hw_cut_tree(&PlanarTree::single(), &mut rng).unwrap();
        assert_eq!(ct.n_nodes(), 1);
        assert_eq!(ct.n_leaves(), 1);

        // Ternary star: one cut, four components.
        let ct = hw_cut_tree(&ternary_star(), &mut rng).unwrap();
        assert_eq!(ct.children[0].len(), 4);
        assert_eq!(ct.n_leaves(), 4);
    }

    #[test]
    fn mod_cut_tree_small_shapes() {
        let mut rng = substream(2, 0);
        // Cherry: k - 2 = 0 extras, identical to the plain construction.
        let ct = mod_cut_tree(&cherry(), &mut rng).unwrap();
        assert_eq!(ct.n_leaves(), 3);

        // Ternary star: one extra singleton appended, 5 = 2*3 - 1 leaves.
        let ct = mod_cut_tree(&ternary_star(), &mut rng).unwrap();
        assert_eq!(ct.children[0].len(), 5);
        assert_eq!(ct.n_leaves(), 5);
        assert_eq!(ct.size[0], 4); // vertices only; the extra counts zero
    }

    #[test]
    fn mod_equals_hw_on_binary_trees_with_same_stream() {
        let nu = binary();
        let cfg = crate::sampler::SamplerConfig::for_n_leaves(10);
        for rep in 0..20 {
            let mut rng = substream(3, rep);
            let t = crate::sampler::sample_gw_n_leaves(&nu, 10, &cfg, &mut rng)
                .unwrap()
                .tree;
            let mut r1 = substream(4, rep);
            let mut r2 = substream(4, rep);
            let a = hw_cut_tree(&t, &mut r1).unwrap();
            let b = mod_cut_tree(&t, &mut r2).unwrap();
            assert_eq!(a.parent, b.parent);
            assert_eq!(a.cut_vertex, b.cut_vertex);
            assert_eq!(a.cut_time, b.cut_time);
        }
    }

    #[test]
    fn cut_tree_leaf_counts_and_times() {
        // Leaves: 2n - 1 for the modified tree, zeta for the plain one,
        // 2n - 2 for the Dieuleveut tree of the hat; times increase.
        for (seed, nu) in [(5u64, binary()), (6, ternary()), (7, mixed())] {
            let mut rng = substream(seed, 0);
            for n in [2usize, 3, 5, 7, 9, 13] {
                if !nu.feasible_leaf_count(n) {
                    continue;
                }
                let cfg = crate::sampler::SamplerConfig::for_n_leaves(n);
                let t = crate::sampler::sample_gw_n_leaves(&nu, n, &cfg, &mut rng)
                    .unwrap()
                    .tree;
                let plain = hw_cut_tree(&t, &mut rng).unwrap();
                assert_eq!(plain.n_leaves(), t.n_vertices());
                let modified = mod_cut_tree(&t, &mut rng).unwrap();
                assert_eq!(modified.n_leaves(), 2 * n - 1);
                let hat = t.hat().unwrap();
                let d = dieuleveut_cut_tree(&hat, &mut rng).unwrap();
                assert_eq!(d.n_leaves(), 2 * n - 2);
                for tree in [&plain, &modified, &d] {
                    for v in 0..tree.n_nodes() {
                        if let (Some(tv), Some(p)) = (tree.cut_time[v], tree.parent[v]) {
                            if let Some(tp) = tree.cut_time[p] {
                                assert!(tp < tv, "times must increase along paths");
                            }
                        }
                        if !tree.is_leaf(v) {
                            assert!(tree.children[v].len() >= 2);
                        }
                    }
                }
                // Arity checks: k + 1 children plain, 2k - 1 modified.
                for v in 0..plain.n_nodes() {
                    if let Some(cv) = plain.cut_vertex[v] {
                        assert_eq!(plain.children[v].len(), t.degree(cv) + 1);
                    }
                }
                for v in 0..modified.n_nodes() {
                    if let Some(cv) = modified.cut_vertex[v] {
                        assert_eq!(modified.children[v].len(), 2 * t.degree(cv) - 1);
                    }
                }
            }
        }
    }

    #[test]
    fn cut_constructions_reject_unary_vertices() {
        let unary = PlanarTree::from_parents(&[-1, 0]).unwrap();
        let mut rng = substream(99, 0);
        assert!(hw_cut_tree(&unary, &mut rng).is_err());
        assert!(mod_cut_tree(&unary, &mut rng).is_err());
        // A hand-built hat wrapper around a unary tree is rejected too.
        let fake = HatTree {
            tree: unary.clone(),
            to_original: vec![Some(0), Some(1)],
            from_original: vec![0, 1],
        };
        assert!(dieuleveut_cut_tree(&fake, &mut rng).is_err());
    }

    #[test]
    fn dieuleveut_small_shapes() {
        let mut rng = substream(8, 0);
        // Hat of the cherry is the cherry; one cut removes both edges.
        let hat = cherry().hat().unwrap();
        let ct = dieuleveut_cut_tree(&hat, &mut rng).unwrap();
        assert_eq!(ct.n_nodes(), 3);
        assert_eq!(ct.children[0].len(), 2);
        assert_eq!(ct.n_leaves(), 2);

        // Hatted ternary star: root of degree 4, one cut, 4 singletons.
        let hat = ternary_star().hat().unwrap();
        let ct = dieuleveut_cut_tree(&hat, &mut rng).unwrap();
        assert_eq!(ct.children[0].len(), 4);
        assert_eq!(ct.n_leaves(), 4);
    }

    #[test]
    fn first_cut_law_hand_values() {
        let law = first_cut_law_exact(&binary(), 2, 8).unwrap();
        assert_eq!(law.by_formula.len(), 1);
        assert!((law.by_formula[0].1 - 1.0).abs() < 1e-12);
        assert!((law.by_enumeration[0].1 - 1.0).abs() < 1e-12);

        let law = first_cut_law_exact(&binary(), 3, 8).unwrap();
        assert!((law.by_formula[0].1 - 1.0).abs() < 1e-12);

        let law = first_cut_law_exact(&ternary(), 3, 8).unwrap();
        assert!((law.by_formula[0].1 - 1.0).abs() < 1e-12);
        assert!((law.by_enumeration[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_cut_law_enumeration_matches_formula() {
        for nu in [binary(), ternary(), mixed()] {
            for n in 2..=6usize {
                if !nu.feasible_leaf_count(n) {
                    continue;
                }
                let law = first_cut_law_exact(&nu, n, 8).unwrap();
                let mut total = 0.0;
                for ((k1, a), (k2, b)) in law.by_enumeration.iter().zip(&law.by_formula) {
                    assert_eq!(k1, k2);
                    assert!((a - b).abs() <= 1e-12, "k={k1}, n={n}: {a} vs {b}");
                    total += b;
                }
                assert!((total - 1.0).abs() <= 1e-12, "law sums to {total} at n={n}");
            }
        }
    }

    #[test]
    fn negative_control_tampered_splitting_formula() {
        // Swapping the (k-1)/(k+1) factor must be caught by the enumeration
        // side.
        let nu = mixed();
        let n = 4;
        let mut dp = LeafCountDp::new(&nu, n + 1);
        let law = first_cut_law_exact(&nu, n, 8).unwrap();
        for (k, good) in law.by_formula {
            let honest = splitting_probability(&nu, &mut dp, n, k).unwrap();
            assert!((good - honest).abs() < 1e-15);
            let tampered = honest * ((k + 1) as f64 / (k - 1) as f64).powi(2);
            let enumerated = law
                .by_enumeration
                .iter()
                .find(|&&(kk, _)| kk == k)
                .unwrap()
                .1;
            assert!(
                (tampered - enumerated).abs() > 1e-6,
                "tampered value should disagree at k={k}"
            );
        }
    }

    #[test]
    fn mb_split_sizes_sum() {
        let nu = mixed();
        let mut dp = LeafCountDp::new(&nu, 40);
        let mut rng = substream(9, 0);
        for n in [2usize, 3, 5, 8, 13] {
            for _ in 0..200 {
                let blocks = mb_split_sample(&nu, &mut dp, n, &mut rng).unwrap();
                assert_eq!(blocks.iter().sum::<usize>(), 2 * n - 1);
                assert!(blocks.iter().all(|&b| b % 2 == 1));
            }
        }
    }

    #[test]
    fn mb_split_binary_n2_is_all_ones() {
        let nu = binary();
        let mut dp = LeafCountDp::new(&nu, 10);
        let mut rng = substream(10, 0);
        for _ in 0..50 {
            let mut blocks = mb_split_sample(&nu, &mut dp, 2, &mut rng).unwrap();
            blocks.sort_unstable();
            assert_eq!(blocks, vec![1, 1, 1]);
        }
    }

    #[test]
    fn mb_split_matches_enumerated_ranked_law() {
        let nu = binary();
        let n = 4;
        let oracle = ranked_split_law_enum(&nu, n, 8).unwrap();
        let mut dp = LeafCountDp::new(&nu, n + 1);
        let mut rng = substream(11, 0);
        let reps = 100_000;
        let mut freq: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..reps {
            let mut blocks = mb_split_sample(&nu, &mut dp, n, &mut rng).unwrap();
            blocks.sort_unstable_by(|a, b| b.cmp(a));
            *freq.entry(blocks).or_default() += 1;
        }
        let mut oracle_total = 0.0;
        for (blocks, &p) in &oracle {
            oracle_total += p;
            let observed = freq.get(blocks).copied().unwrap_or(0) as f64 / reps as f64;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!(
                (observed - p).abs() <= 4.0 * se.max(1e-4),
                "ranked split {blocks:?}: {observed} vs {p}"
            );
        }
        assert!((oracle_total - 1.0).abs() < 1e-12);
        for blocks in freq.keys() {
            assert!(oracle.contains_key(blocks), "unexpected split {blocks:?}");
        }
    }

    #[test]
    fn mb_tree_sample_leaf_counts() {
        let nu = binary();
        let mut rng = substream(12, 0);
        let t = mb_tree_sample(&nu, 1, &mut rng).unwrap();
        assert_eq!(t.n_vertices(), 1);

        for _ in 0..20 {
            let t = mb_tree_sample(&nu, 2, &mut rng).unwrap();
            assert_eq!(t.n_leaves(), 3);
            assert_eq!(t.n_vertices(), 4);
        }
        for n in [5usize, 9, 17] {
            let t = mb_tree_sample(&nu, n, &mut rng).unwrap();
            assert_eq!(t.n_leaves(), 2 * n - 1);
        }
    }

    #[test]
    fn mb_mean_leaf_depth_exact_small_case_and_sampler_agreement() {
        // At n = 3 the binary Markov branching tree always has the shape
        // root{leaf, leaf, inner{leaf, leaf, leaf}}: mean leaf depth 8/5.
        let nu = binary();
        let exact = mb_mean_leaf_depth(&nu, 3).unwrap();
        assert!((exact - 1.6).abs() < 1e-12, "exact {exact}");

        // The sampler mean matches the recursion at a moderate size.
        let n = 25;
        let exact = mb_mean_leaf_depth(&nu, n).unwrap();
        let mut dp = LeafCountDp::new(&nu, n + 1);
        dp.warm(nu.max_k() + 1).unwrap();
        let mut rng = substream(20, 0);
        let reps = 20_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..reps {
            let t = mb_tree_sample_with(&nu, &mut dp, n, &mut rng).unwrap();
            let depths = t.depths();
            let leaves = t.leaves();
            let d = depths[leaves[rng.gen_range(0..leaves.len())]] as f64;
            sum += d;
            sumsq += d * d;
        }
        let mean = sum / reps as f64;
        let se = ((sumsq / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 4.0 * se,
            "sampler mean {mean} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn full_mod_cut_law_equals_mb_law() {
        // The entire unordered cut-tree law from exhaustive recursion over
        // conditioned shapes equals the generative Markov branching law.
        for (nu, ns) in [
            (binary(), vec![2usize, 3, 4]),
            (ternary(), vec![3usize]),
            (mixed(), vec![2usize, 3, 4]),
        ] {
            let mut cut_law = ModCutLaw::new();
            let mut mb = MbLaw::new(&nu, 8);
            for n in ns {
                let a = cut_law.conditioned_law(&nu, n, 8).unwrap();
                let b = mb.law(n).unwrap();
                let sum_a: f64 = a.values().sum();
                let sum_b: f64 = b.values().sum();
                assert!((sum_a - 1.0).abs() < 1e-12);
                assert!((sum_b - 1.0).abs() < 1e-12);
                assert_eq!(a.len(), b.len(), "n = {n}");
                for (shape, p) in &a {
                    let q = b.get(shape).copied().unwrap_or(-1.0);
                    assert!((p - q).abs() <= 1e-12, "n={n} shape {shape}: {p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn coupled_trees_leaf_counts_and_root_pairing() {
        let nu = mixed();
        let mut rng = substream(13, 0);
        for n in [2usize, 4, 6, 9] {
            let cfg = crate::sampler::SamplerConfig::for_n_leaves(n);
            let t = crate::sampler::sample_gw_n_leaves(&nu, n, &cfg, &mut rng)
                .unwrap()
                .tree;
            let coupled = coupled_cut_trees(&t, &mut rng).unwrap();
            assert_eq!(coupled.mod_tree.n_leaves(), 2 * n - 1);
            assert_eq!(coupled.d_tree.n_leaves(), 2 * n - 2);
            assert!(coupled
                .correspondence
                .contains(&(coupled.mod_tree.root(), coupled.d_tree.root())));
            // Coverage of both node sets.
            let mut left = vec![false; coupled.mod_tree.n_nodes()];
            let mut right = vec![false; coupled.d_tree.n_nodes()];
            for &(a, b) in &coupled.correspondence {
                left[a] = true;
                right[b] = true;
            }
            assert!(left.into_iter().all(|x| x));
            assert!(right.into_iter().all(|x| x));
        }
    }

    #[test]
    fn coupled_single_vertex() {
        let coupled = coupled_cut_trees(&PlanarTree::single(), &mut substream(14, 0)).unwrap();
        assert_eq!(coupled.correspondence, vec![(0, 0)]);
        assert_eq!(coupled.mod_tree.n_nodes(), 1);
        assert_eq!(coupled.d_tree.n_nodes(), 1);
    }

    #[test]
    fn coupled_distortion_is_at_most_two() {
        let nu = mixed();
        let mut rng = substream(15, 0);
        for n in [2usize, 3, 5, 8, 12] {
            let cfg = crate::sampler::SamplerConfig::for_n_leaves(n);
            for _ in 0..30 {
                let t = crate::sampler::sample_gw_n_leaves(&nu, n, &cfg, &mut rng)
                    .unwrap()
                    .tree;
                let coupled = coupled_cut_trees(&t, &mut rng).unwrap();
                let da = coupled.mod_tree.all_pairs_distances();
                let db = coupled.d_tree.all_pairs_distances();
                let mut dis = 0i64;
                for &(a, b) in &coupled.correspondence {
                    for &(c, d) in &coupled.correspondence {
                        let diff = (da[a][c] as i64 - db[b][d] as i64).abs();
                        dis = dis.max(diff);
                    }
                }
                assert!(dis <= 2, "distortion {dis} at n={n}");
            }
        }
    }

    #[test]
    fn fragmentation_masses_and_distances_on_cherry() {
        // The hat of the cherry has one branch point ringing at rate
        // 2 / (2 sqrt(2)); both edges share the single event.
        let nu = binary();
        let norms = crate::offspring::norming(&nu, 2).unwrap();
        assert!((norms.a_tilde_n - 2f64.sqrt()).abs() < 1e-12);
        let hat = cherry().hat().unwrap();
        let mut rng = substream(16, 0);
        let reps = 40_000;
        let mut sum_dp = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..reps {
            let trace = timed_fragmentation(
                &hat,
                norms.a_tilde_n,
                &[1, 2],
                MassConvention::Edges,
                &mut rng,
            )
            .unwrap();
            assert_eq!(trace.events.len(), 1);
            let d = cut_distances(&trace, 1, 2).unwrap();
            assert_eq!(d.delta_root_i, 1);
            assert_eq!(d.delta, 2);
            assert!((d.tau - trace.events[0].0).abs() < 1e-12);
            // mu is identically one until the event.
            assert!((d.delta_prime_root_i - d.tau).abs() < 1e-12);
            sum_dp += d.delta_prime_root_i;
            sum_sq += (2f64.sqrt() * 1.0 - d.delta_prime_root_i).powi(2);
        }
        let mean = sum_dp / reps as f64;
        // E[delta'(0,i)] = sqrt(2); the squared deviation from sqrt(2) has
        // mean Var(Exp(1/sqrt 2)) = 2.
        assert!((mean - 2f64.sqrt()).abs() < 0.03, "mean {mean}");
        assert!((sum_sq / reps as f64 - 2.0).abs() < 0.1);
    }

    #[test]
    fn fragmentation_masses_start_at_one_and_decrease() {
        let nu = mixed();
        let cfg = crate::sampler::SamplerConfig::for_n_leaves(9);
        let mut rng = substream(17, 0);
        let t = crate::sampler::sample_gw_n_leaves(&nu, 9, &cfg, &mut rng)
            .unwrap()
            .tree;
        let hat = t.hat().unwrap();
        let a_tilde = crate::offspring::norming(&nu, 9).unwrap().a_tilde_n;
        for convention in [MassConvention::Edges, MassConvention::HatLeaves] {
            let trace =
                timed_fragmentation(&hat, a_tilde, &[1, 2, 3], convention, &mut rng).unwrap();
            for h in &trace.histories {
                assert!(
                    (h.masses[0] - 1.0).abs() < 1e-12,
                    "initial mass {}",
                    h.masses[0]
                );
                for w in h.masses.windows(2) {
                    assert!(w[1] <= w[0] + 1e-12);
                }
                assert!(h.integral(0.0).is_finite());
            }
        }
    }

    #[test]
    fn lemma_mc_cherry_analytics() {
        let report =
            lemma_inequality_mc(&binary(), 2, 30_000, 6, MassConvention::Edges, 18).unwrap();
        // E[delta'(0, xi)] = sqrt(2).
        assert!(
            (report.delta_prime_root_mean - 2f64.sqrt()).abs()
                <= 3.0 * report.delta_prime_root_se,
            "mean {} se {}",
            report.delta_prime_root_mean,
            report.delta_prime_root_se
        );
        // E[(sqrt(2) - E)^2] = Var(E) = 2, and the root inequality holds
        // with slack (rhs = 4).
        assert!((report.root_lhs_mean - 2.0).abs() <= 3.0 * report.root_lhs_se + 0.05);
        assert!(report.root_pass());
        // Tail integrals sqrt(2) e^{-2^l / sqrt 2} decrease in l.
        assert!(report.tails_decreasing());
        let expect0 = 2f64.sqrt() * (-1.0 / 2f64.sqrt()).exp();
        assert!((report.tail_means[0] - expect0).abs() < 0.03);
    }
}
