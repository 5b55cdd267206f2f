//! Finite rooted measured metric trees and the distance toolkit:
//! correspondence distortion with Gromov-Hausdorff bounds, exact Prokhorov
//! distance by Strassen feasibility over a max-flow, glued-space
//! Gromov-Hausdorff-Prokhorov upper bounds, erasure of low fringe, and the
//! lower mass bound.

use crate::cut::TimedCutTree;
use crate::error::Error;
use crate::tree::PlanarTree;
use crate::Result;
use std::io::Write;

const MASS_TOL: f64 = 1e-9;
const FLOW_EPS: f64 = 1e-12;

/// Dense symmetric distance matrix over `n` points.
#[derive(Clone, Debug)]
pub struct FiniteMetric {
    n: usize,
    d: Vec<f64>,
}

impl FiniteMetric {
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::InvalidArgument("distance matrix shape mismatch".into()));
        }
        Ok(FiniteMetric { n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut d = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::InvalidArgument("distance matrix not square".into()));
            }
            d.extend_from_slice(r);
        }
        Ok(FiniteMetric { n, d })
    }

    /// Unit-edge tree metric by breadth-first search from every vertex.
    pub fn from_tree_unit_edges(t: &PlanarTree) -> Self {
        let n = t.n_vertices();
        let mut d = vec![0.0; n * n];
        let mut queue = std::collections::VecDeque::new();
        for s in 0..n {
            let mut dist = vec![usize::MAX; n];
            dist[s] = 0;
            queue.clear();
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                let push = |u: usize, dist: &mut Vec<usize>, queue: &mut std::collections::VecDeque<usize>| {
                    if dist[u] == usize::MAX {
                        dist[u] = dist[v] + 1;
                        queue.push_back(u);
                    }
                };
                if let Some(p) = t.parent(v) {
                    push(p, &mut dist, &mut queue);
                }
                for &c in t.children(v) {
                    push(c, &mut dist, &mut queue);
                }
            }
            for (u, &x) in dist.iter().enumerate() {
                d[s * n + u] = x as f64;
            }
        }
        FiniteMetric { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn d(&self, a: usize, b: usize) -> f64 {
        self.d[a * self.n + b]
    }

    pub fn diameter(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    pub fn scale(&self, factor: f64) -> Self {
        FiniteMetric {
            n: self.n,
            d: self.d.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for a in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|b| format!("{}", self.d(a, b))).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Which atoms a tree-derived measure charges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeMeasure {
    UniformLeaves,
    /// Uniform on edges, realized as atoms at the child endpoints.
    UniformEdges,
    UniformVertices,
}

/// A finite rooted metric space with an atomic probability measure.
#[derive(Clone, Debug)]
pub struct MeasuredTree {
    pub metric: FiniteMetric,
    pub root: usize,
    pub mass: Vec<f64>,
}

impl MeasuredTree {
    pub fn new(metric: FiniteMetric, root: usize, mass: Vec<f64>) -> Result<Self> {
        if root >= metric.len() || mass.len() != metric.len() {
            return Err(Error::InvalidArgument("root or measure out of range".into()));
        }
        check_probability(&mass)?;
        Ok(MeasuredTree { metric, root, mass })
    }

    /// A tree with unit edge lengths and the chosen uniform measure.
    pub fn from_tree(t: &PlanarTree, measure: TreeMeasure) -> Result<Self> {
        let n = t.n_vertices();
        let mut mass = vec![0.0; n];
        match measure {
            TreeMeasure::UniformLeaves => {
                let leaves = t.leaves();
                for &v in &leaves {
                    mass[v] = 1.0 / leaves.len() as f64;
                }
            }
            TreeMeasure::UniformEdges => {
                if n == 1 {
                    return Err(Error::InvalidMeasure("tree has no edges".into()));
                }
                for m in mass.iter_mut().skip(1) {
                    *m = 1.0 / (n - 1) as f64;
                }
            }
            TreeMeasure::UniformVertices => {
                for m in mass.iter_mut() {
                    *m = 1.0 / n as f64;
                }
            }
        }
        MeasuredTree::new(FiniteMetric::from_tree_unit_edges(t), 0, mass)
    }

    /// A cut-tree with unit edge lengths and the uniform measure on its
    /// leaves.
    pub fn from_cut_tree(ct: &TimedCutTree) -> Result<Self> {
        let n = ct.n_nodes();
        let rows: Vec<Vec<f64>> = ct
            .all_pairs_distances()
            .into_iter()
            .map(|r| r.into_iter().map(|x| x as f64).collect())
            .collect();
        let mut mass = vec![0.0; n];
        let leaves = ct.leaves();
        for &v in &leaves {
            mass[v] = 1.0 / leaves.len() as f64;
        }
        MeasuredTree::new(FiniteMetric::from_rows(&rows)?, ct.root(), mass)
    }

    /// Divides all distances by `c`, keeping the measure.
    pub fn rescale(&self, c: f64) -> Result<Self> {
        if c <= 0.0 {
            return Err(Error::InvalidArgument(format!("scale factor {c} must be positive")));
        }
        Ok(MeasuredTree {
            metric: self.metric.scale(1.0 / c),
            root: self.root,
            mass: self.mass.clone(),
        })
    }

    pub fn write_measure_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "point,mass")?;
        for (p, m) in self.mass.iter().enumerate() {
            writeln!(out, "{p},{m}")?;
        }
        Ok(())
    }
}

fn check_probability(mass: &[f64]) -> Result<()> {
    if mass.iter().any(|&m| m < 0.0 || !m.is_finite()) {
        return Err(Error::InvalidMeasure("negative or non-finite mass".into()));
    }
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidMeasure(format!("measure sums to {total}")));
    }
    Ok(())
}

/// A relation between two point sets, kept as explicit index pairs.
#[derive(Clone, Debug)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
}

impl Correspondence {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Correspondence { pairs }
    }

    pub fn identity(n: usize) -> Self {
        Correspondence {
            pairs: (0..n).map(|i| (i, i)).collect(),
        }
    }

    /// Both projections must be surjective.
    pub fn validate_covering(&self, left: usize, right: usize) -> Result<()> {
        let mut l = vec![false; left];
        let mut r = vec![false; right];
        for &(a, b) in &self.pairs {
            if a >= left || b >= right {
                return Err(Error::InvalidCorrespondence(format!("pair ({a}, {b}) out of range")));
            }
            l[a] = true;
            r[b] = true;
        }
        if l.iter().any(|&x| !x) || r.iter().any(|&x| !x) {
            return Err(Error::InvalidCorrespondence("relation does not cover both sides".into()));
        }
        Ok(())
    }

    pub fn relates_roots(&self, root_left: usize, root_right: usize) -> bool {
        self.pairs.contains(&(root_left, root_right))
    }
}

/// `sup |d(x, y) - d'(x', y')|` over related pairs.
pub fn distortion(r: &Correspondence, left: &MeasuredTree, right: &MeasuredTree) -> Result<f64> {
    r.validate_covering(left.metric.len(), right.metric.len())?;
    let mut sup: f64 = 0.0;
    for &(a, b) in &r.pairs {
        for &(c, d) in &r.pairs {
            sup = sup.max((left.metric.d(a, c) - right.metric.d(b, d)).abs());
        }
    }
    Ok(sup)
}

/// Certified upper bound on the pointed Gromov-Hausdorff distance: half the
/// distortion of a correspondence that relates the roots.
pub fn gh_upper(r: &Correspondence, left: &MeasuredTree, right: &MeasuredTree) -> Result<f64> {
    if !r.relates_roots(left.root, right.root) {
        return Err(Error::InvalidCorrespondence("roots must be related".into()));
    }
    Ok(distortion(r, left, right)? / 2.0)
}

/// Cheap lower bound from diameters.
pub fn gh_lower_diameter(left: &MeasuredTree, right: &MeasuredTree) -> f64 {
    (left.metric.diameter() - right.metric.diameter()).abs() / 2.0
}

/// Dinic max-flow with floating-point capacities.
struct MaxFlow {
    graph: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl MaxFlow {
    fn new(n: usize) -> Self {
        MaxFlow {
            graph: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: f64) {
        let id = self.to.len();
        self.to.push(v);
        self.cap.push(c);
        self.graph[u].push(id);
        self.to.push(u);
        self.cap.push(0.0);
        self.graph[v].push(id + 1);
    }

    fn bfs(&self, s: usize, t: usize, level: &mut [i32]) -> bool {
        level.fill(-1);
        level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.graph[v] {
                if self.cap[e] > FLOW_EPS && level[self.to[e]] < 0 {
                    level[self.to[e]] = level[v] + 1;
                    queue.push_back(self.to[e]);
                }
            }
        }
        level[t] >= 0
    }

    fn dfs(&mut self, v: usize, t: usize, pushed: f64, level: &[i32], iter: &mut [usize]) -> f64 {
        if v == t {
            return pushed;
        }
        while iter[v] < self.graph[v].len() {
            let e = self.graph[v][iter[v]];
            let u = self.to[e];
            if self.cap[e] > FLOW_EPS && level[u] == level[v] + 1 {
                let d = self.dfs(u, t, pushed.min(self.cap[e]), level, iter);
                if d > FLOW_EPS {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            iter[v] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let n = self.graph.len();
        let mut flow = 0.0;
        let mut level = vec![-1; n];
        while self.bfs(s, t, &mut level) {
            let mut iter = vec![0usize; n];
            loop {
                let f = self.dfs(s, t, f64::INFINITY, &level, &mut iter);
                if f <= FLOW_EPS {
                    break;
                }
                flow += f;
            }
        }
        flow
    }
}

/// Strassen feasibility: is there a coupling of `mu` and `nu` putting mass
/// at least `1 - eps` on pairs at distance at most `eps`?
fn prokhorov_feasible(metric: &FiniteMetric, mu: &[f64], nu: &[f64], eps: f64) -> bool {
    let n = metric.len();
    let (source, sink) = (2 * n, 2 * n + 1);
    let mut flow = MaxFlow::new(2 * n + 2);
    for (i, &m) in mu.iter().enumerate() {
        if m > 0.0 {
            flow.add_edge(source, i, m);
        }
    }
    for (j, &m) in nu.iter().enumerate() {
        if m > 0.0 {
            flow.add_edge(n + j, sink, m);
        }
    }
    for (i, &mi) in mu.iter().enumerate() {
        if mi <= 0.0 {
            continue;
        }
        for (j, &nj) in nu.iter().enumerate() {
            if nj > 0.0 && metric.d(i, j) <= eps + FLOW_EPS {
                flow.add_edge(i, n + j, 2.0);
            }
        }
    }
    flow.max_flow(source, sink) >= 1.0 - eps - 1e-9
}

/// Exact Prokhorov distance between two probability measures on a common
/// finite metric space, by bisection over the Strassen feasibility check.
pub fn prokhorov(metric: &FiniteMetric, mu: &[f64], nu: &[f64], tol: f64) -> Result<f64> {
    if mu.len() != metric.len() || nu.len() != metric.len() {
        return Err(Error::InvalidMeasure("measure length mismatch".into()));
    }
    check_probability(mu)?;
    check_probability(nu)?;
    let mut lo = 0.0;
    // A probability coupling always fits at eps = 1.
    let mut hi = 1.0f64.min(metric.diameter().max(0.0) + tol);
    if prokhorov_feasible(metric, mu, nu, lo) {
        return Ok(0.0);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if prokhorov_feasible(metric, mu, nu, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Reference value straight from the defining inequalities, scanning all
/// subsets: only for small spaces.
pub fn prokhorov_bruteforce(metric: &FiniteMetric, mu: &[f64], nu: &[f64]) -> Result<f64> {
    let n = metric.len();
    if n > 16 {
        return Err(Error::CapExceeded("subset scan limited to 16 points".into()));
    }
    check_probability(mu)?;
    check_probability(nu)?;
    let mut worst: f64 = 0.0;
    for (from, to) in [(mu, nu), (nu, mu)] {
        for set in 1u32..(1 << n) {
            let members: Vec<usize> = (0..n).filter(|&i| set >> i & 1 == 1).collect();
            let from_mass: f64 = members.iter().map(|&i| from[i]).sum();
            // Distance of every point to the set, the thresholds where the
            // eps-fattening changes.
            let dist_to_set: Vec<f64> = (0..n)
                .map(|y| members.iter().map(|&a| metric.d(y, a)).fold(f64::INFINITY, f64::min))
                .collect();
            let mut taus: Vec<f64> = dist_to_set.clone();
            taus.push(0.0);
            taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
            taus.dedup();
            let mut best = f64::INFINITY;
            for &tau in &taus {
                let fat_mass: f64 = (0..n)
                    .filter(|&y| dist_to_set[y] <= tau + FLOW_EPS)
                    .map(|y| to[y])
                    .sum();
                best = best.min(tau.max(from_mass - fat_mass));
            }
            worst = worst.max(best);
        }
    }
    Ok(worst.max(0.0))
}

/// The three summands of the Gromov-Hausdorff-Prokhorov bound obtained by
/// gluing the spaces along a correspondence.
#[derive(Clone, Copy, Debug)]
pub struct GhpBound {
    pub hausdorff: f64,
    pub root_term: f64,
    pub prokhorov: f64,
}

impl GhpBound {
    pub fn total(&self) -> f64 {
        self.hausdorff + self.root_term + self.prokhorov
    }
}

/// Evaluates Hausdorff, root and Prokhorov terms exactly in the space glued
/// along `r` at half its distortion.
pub fn ghp_upper(
    left: &MeasuredTree,
    right: &MeasuredTree,
    r: &Correspondence,
    tol: f64,
) -> Result<GhpBound> {
    if !r.relates_roots(left.root, right.root) {
        return Err(Error::InvalidCorrespondence("roots must be related".into()));
    }
    let dis = distortion(r, left, right)?;
    let half = dis / 2.0;
    let (nl, nr) = (left.metric.len(), right.metric.len());
    // Cross distances through the correspondence.
    let mut cross = vec![f64::INFINITY; nl * nr];
    for x in 0..nl {
        for &(a, b) in &r.pairs {
            let base = left.metric.d(x, a) + half;
            for y in 0..nr {
                let v = base + right.metric.d(b, y);
                if v < cross[x * nr + y] {
                    cross[x * nr + y] = v;
                }
            }
        }
    }
    let mut hausdorff: f64 = 0.0;
    for x in 0..nl {
        let best = (0..nr).map(|y| cross[x * nr + y]).fold(f64::INFINITY, f64::min);
        hausdorff = hausdorff.max(best);
    }
    for y in 0..nr {
        let best = (0..nl).map(|x| cross[x * nr + y]).fold(f64::INFINITY, f64::min);
        hausdorff = hausdorff.max(best);
    }
    let root_term = cross[left.root * nr + right.root];

    let n = nl + nr;
    let mut d = vec![0.0; n * n];
    for x in 0..nl {
        for y in 0..nl {
            d[x * n + y] = left.metric.d(x, y);
        }
    }
    for x in 0..nr {
        for y in 0..nr {
            d[(nl + x) * n + nl + y] = right.metric.d(x, y);
        }
    }
    for x in 0..nl {
        for y in 0..nr {
            d[x * n + nl + y] = cross[x * nr + y];
            d[(nl + y) * n + x] = cross[x * nr + y];
        }
    }
    let glued = FiniteMetric::new(n, d)?;
    let mut mu = vec![0.0; n];
    let mut nu = vec![0.0; n];
    mu[..nl].copy_from_slice(&left.mass);
    nu[nl..].copy_from_slice(&right.mass);
    let prokhorov = prokhorov(&glued, &mu, &nu, tol)?;
    Ok(GhpBound {
        hausdorff,
        root_term,
        prokhorov,
    })
}

/// Rooted tree with real edge lengths; vertices may have any degree, so
/// erasure stubs are representable.
#[derive(Clone, Debug, PartialEq)]
pub struct RootedMetricTree {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Length of the edge to the parent; zero for the root.
    pub edge_len: Vec<f64>,
}

impl RootedMetricTree {
    pub fn from_planar_unit(t: &PlanarTree) -> Self {
        let n = t.n_vertices();
        RootedMetricTree {
            parent: (0..n).map(|v| t.parent(v)).collect(),
            children: (0..n).map(|v| t.children(v).to_vec()).collect(),
            edge_len: (0..n).map(|v| if v == 0 { 0.0 } else { 1.0 }).collect(),
        }
    }

    /// A root-to-leaf path made of unit segments.
    pub fn path(len: usize) -> Self {
        let n = len + 1;
        RootedMetricTree {
            parent: (0..n).map(|v| if v == 0 { None } else { Some(v - 1) }).collect(),
            children: (0..n).map(|v| if v + 1 < n { vec![v + 1] } else { vec![] }).collect(),
            edge_len: (0..n).map(|v| if v == 0 { 0.0 } else { 1.0 }).collect(),
        }
    }

    /// A root with one arm per entry, each a single edge of that length.
    pub fn star(arms: &[f64]) -> Self {
        let n = arms.len() + 1;
        RootedMetricTree {
            parent: (0..n).map(|v| if v == 0 { None } else { Some(0) }).collect(),
            children: (0..n)
                .map(|v| if v == 0 { (1..n).collect() } else { vec![] })
                .collect(),
            edge_len: std::iter::once(0.0).chain(arms.iter().copied()).collect(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.parent.len()
    }

    pub fn rescale(&self, c: f64) -> Result<Self> {
        if c <= 0.0 {
            return Err(Error::InvalidArgument("scale factor must be positive".into()));
        }
        Ok(RootedMetricTree {
            parent: self.parent.clone(),
            children: self.children.clone(),
            edge_len: self.edge_len.iter().map(|l| l / c).collect(),
        })
    }

    pub fn total_length(&self) -> f64 {
        self.edge_len.iter().sum()
    }

    /// Distance from the root to every vertex.
    pub fn depths(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_vertices()];
        for v in 1..self.n_vertices() {
            d[v] = d[self.parent[v].unwrap()] + self.edge_len[v];
        }
        d
    }

    pub fn height(&self) -> f64 {
        self.depths().iter().copied().fold(0.0, f64::max)
    }

    /// Height of the subtree above each vertex.
    pub fn subtree_heights(&self) -> Vec<f64> {
        let mut h = vec![0.0f64; self.n_vertices()];
        for v in (1..self.n_vertices()).rev() {
            let p = self.parent[v].unwrap();
            h[p] = h[p].max(h[v] + self.edge_len[v]);
        }
        h
    }

    /// Keeps the root and all points whose subtree reaches at least `eps`
    /// above them; edges into dropped fringe are shortened to the surviving
    /// stub, realized as a fresh endpoint.
    pub fn erase(&self, eps: f64) -> Result<RootedMetricTree> {
        if eps < 0.0 {
            return Err(Error::InvalidArgument("erasure depth must be nonnegative".into()));
        }
        if eps == 0.0 {
            return Ok(self.clone());
        }
        let h = self.subtree_heights();
        let mut parent = vec![None];
        let mut children: Vec<Vec<usize>> = vec![Vec::new()];
        let mut edge_len = vec![0.0];
        // (old vertex, new parent index)
        let mut stack: Vec<(usize, usize)> = self.children[0].iter().rev().map(|&c| (c, 0)).collect();
        while let Some((v, new_p)) = stack.pop() {
            let len = self.edge_len[v];
            if h[v] >= eps {
                let idx = parent.len();
                parent.push(Some(new_p));
                children.push(Vec::new());
                edge_len.push(len);
                children[new_p].push(idx);
                for &c in self.children[v].iter().rev() {
                    stack.push((c, idx));
                }
            } else {
                let stub = len + h[v] - eps;
                if stub > 1e-12 {
                    let idx = parent.len();
                    parent.push(Some(new_p));
                    children.push(Vec::new());
                    edge_len.push(stub);
                    children[new_p].push(idx);
                }
            }
        }
        Ok(RootedMetricTree {
            parent,
            children,
            edge_len,
        })
    }

    /// Canonical unordered description with lengths rounded to 1e-9, for
    /// isometry comparisons of small trees.
    pub fn canonical_key(&self) -> String {
        fn rec(t: &RootedMetricTree, v: usize, out: &mut String) {
            let mut keys: Vec<String> = t.children[v]
                .iter()
                .map(|&c| {
                    let mut s = format!("[{:.9}", t.edge_len[c]);
                    rec(t, c, &mut s);
                    s.push(']');
                    s
                })
                .collect();
            keys.sort();
            for k in keys {
                out.push_str(&k);
            }
        }
        let mut s = String::new();
        rec(self, 0, &mut s);
        s
    }
}

/// Smallest closed-ball mass over the support points.
pub fn lower_mass(t: &MeasuredTree, delta: f64) -> Result<f64> {
    if delta <= 0.0 {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    let n = t.metric.len();
    let mut inf = f64::INFINITY;
    for x in 0..n {
        if t.mass[x] <= 0.0 {
            continue;
        }
        let ball: f64 = (0..n)
            .filter(|&y| t.metric.d(x, y) <= delta + FLOW_EPS)
            .map(|y| t.mass[y])
            .sum();
        inf = inf.min(ball);
    }
    Ok(if inf.is_finite() { inf } else { 0.0 })
}

/// Gromov-Hausdorff-Prokhorov gap between a rescaled tree with uniform leaf
/// measure and its erased version carrying `eps` times the retained length
/// measure (normalized). The erased tree is discretized onto the surviving
/// vertices: each retained kept-to-kept edge charges its child endpoint and
/// each stub charges the kept endpoint it hangs from, so the whole
/// comparison lives inside the original tree and needs no extra gluing.
pub fn erasure_ghp_gap(t: &PlanarTree, scale: f64, eps: f64, tol: f64) -> Result<f64> {
    let metric = FiniteMetric::from_tree_unit_edges(t).scale(1.0 / scale);
    let n = t.n_vertices();
    let real = RootedMetricTree::from_planar_unit(t).rescale(scale)?;
    let h = real.subtree_heights();
    let kept: Vec<bool> = (0..n).map(|v| v == 0 || h[v] >= eps).collect();

    // Retained length charged to surviving vertices.
    let mut length_at = vec![0.0; n];
    for v in 1..n {
        let p = t.parent(v).unwrap();
        if kept[v] {
            length_at[v] += real.edge_len[v];
        } else if kept[p] {
            let stub = real.edge_len[v] + h[v] - eps;
            if stub > 0.0 {
                length_at[p] += stub;
            }
        }
    }
    let total: f64 = length_at.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("erasure removed the whole tree".into()));
    }
    let nu: Vec<f64> = length_at.iter().map(|l| l / total).collect();

    // Hausdorff part: distance from every vertex to the erased set.
    let mut hausdorff: f64 = 0.0;
    for x in 0..n {
        let best = (0..n)
            .filter(|&y| kept[y])
            .map(|y| metric.d(x, y))
            .fold(f64::INFINITY, f64::min);
        hausdorff = hausdorff.max(best);
    }

    let leaves = t.leaves();
    let mut mu = vec![0.0; n];
    for &v in &leaves {
        mu[v] = 1.0 / leaves.len() as f64;
    }
    let dp = prokhorov(&metric, &mu, &nu, tol)?;
    Ok(hausdorff + dp)
}
