//! Grid estimates of the weighted distance `d_K` and the ball sandwich bounds.
//!
//! The domain box is sampled on a regular lattice with the king-move stencil (`3^n - 1`
//! neighbours). Each edge carries the trapezoid weight `(K(u) + K(v)) / 2 * |u - v|`, the same
//! quadrature [`curve_length_k`] applies to any polyline, so a grid path and its recomputed
//! weighted length agree up to rounding.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::potential::{distance, PotentialSpec};

pub const DEFAULT_NODE_CAP: usize = 20_000_000;

/// `int K |dgamma|` on a polyline by the trapezoid rule on every edge.
pub fn curve_length_k(p: &PotentialSpec, c: &Curve) -> Result<f64> {
    polyline_length_k(p, c.vertices())
}

pub(crate) fn polyline_length_k(p: &PotentialSpec, vertices: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    let mut k_prev = match vertices.first() {
        Some(v) => p.eval_k(v)?,
        None => return Ok(0.0),
    };
    for w in vertices.windows(2) {
        let k_next = p.eval_k(&w[1])?;
        total += 0.5 * (k_prev + k_next) * distance(&w[0], &w[1]);
        k_prev = k_next;
    }
    Ok(total)
}

/// Worst-case ratio between the stencil path length and the Euclidean length of a
/// displacement; `sec(pi/8)` in two dimensions.
///
/// A king-move path realises `sum_k (a_k - a_{k+1}) sqrt(k)` for sorted absolute components
/// `a_1 >= a_2 >= ...`, i.e. `sum_k a_k (sqrt(k) - sqrt(k-1))`; its maximum over the unit
/// sphere is the Euclidean norm of those weights.
pub fn stencil_anisotropy(n: usize) -> f64 {
    (1..=n)
        .map(|k| {
            let w = (k as f64).sqrt() - ((k - 1) as f64).sqrt();
            w * w
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone)]
pub struct GridGraph {
    potential: PotentialSpec,
    lo: Vec<f64>,
    hi: Vec<f64>,
    resolution: Vec<usize>,
    strides: Vec<usize>,
    k: Vec<f64>,
    stencil: Vec<(Vec<isize>, f64)>,
    mesh: f64,
}

impl GridGraph {
    /// Samples `K` on a regular grid over `bounds` with `resolution[i]` nodes on axis `i`.
    pub fn build(
        p: &PotentialSpec,
        bounds: &[(f64, f64)],
        resolution: &[usize],
    ) -> Result<GridGraph> {
        Self::build_with_cap(p, bounds, resolution, DEFAULT_NODE_CAP)
    }

    pub fn build_with_cap(
        p: &PotentialSpec,
        bounds: &[(f64, f64)],
        resolution: &[usize],
        cap: usize,
    ) -> Result<GridGraph> {
        let n = p.dimension();
        if bounds.len() != n || resolution.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: bounds.len().min(resolution.len()),
            });
        }
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::Invalid(format!(
                    "degenerate box on axis {}: [{lo}, {hi}]",
                    axis + 1
                )));
            }
        }
        if let Some(r) = resolution.iter().find(|&&r| r < 2) {
            return Err(Error::Invalid(format!("resolution {r} is below 2")));
        }
        let nodes = resolution
            .iter()
            .try_fold(1usize, |acc, &r| acc.checked_mul(r))
            .unwrap_or(usize::MAX);
        if nodes > cap {
            return Err(Error::NodeCap { nodes, cap });
        }
        let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
        for w in p.wells() {
            if w.iter().enumerate().any(|(i, &c)| c < lo[i] || c > hi[i]) {
                return Err(Error::OutsideBox { point: w.clone() });
            }
        }
        let mut strides = vec![1usize; n];
        for axis in 1..n {
            strides[axis] = strides[axis - 1] * resolution[axis - 1];
        }
        let spacing: Vec<f64> = (0..n)
            .map(|i| (hi[i] - lo[i]) / (resolution[i] - 1) as f64)
            .collect();
        let mesh = spacing.iter().map(|h| h * h).sum::<f64>().sqrt();
        let mut grid = GridGraph {
            potential: p.clone(),
            lo,
            hi,
            resolution: resolution.to_vec(),
            strides,
            k: Vec::new(),
            stencil: stencil(&spacing),
            mesh,
        };
        let mut k = Vec::with_capacity(nodes);
        let mut x = vec![0.0; n];
        for node in 0..nodes {
            grid.fill_coords(node, &mut x);
            k.push(p.eval_k(&x)?);
        }
        grid.k = k;
        Ok(grid)
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn node_count(&self) -> usize {
        self.k.len()
    }

    /// Length of one cell diagonal.
    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.lo
            .iter()
            .copied()
            .zip(self.hi.iter().copied())
            .collect()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn k_at(&self, node: usize) -> f64 {
        self.k[node]
    }

    /// Number of stencil neighbours of `node` inside the grid.
    pub fn degree(&self, node: usize) -> usize {
        let idx = self.multi_index(node);
        self.stencil
            .iter()
            .filter(|(off, _)| self.shift(&idx, off).is_some())
            .count()
    }

    fn coordinate(&self, axis: usize, i: usize) -> f64 {
        let span = self.hi[axis] - self.lo[axis];
        self.lo[axis] + span * i as f64 / (self.resolution[axis] - 1) as f64
    }

    fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut rest = node;
        self.resolution
            .iter()
            .map(|&r| {
                let i = rest % r;
                rest /= r;
                i
            })
            .collect()
    }

    fn fill_coords(&self, node: usize, out: &mut [f64]) {
        let mut rest = node;
        for (axis, &r) in self.resolution.iter().enumerate() {
            out[axis] = self.coordinate(axis, rest % r);
            rest /= r;
        }
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.resolution.len()];
        self.fill_coords(node, &mut out);
        out
    }

    fn shift(&self, idx: &[usize], off: &[isize]) -> Option<usize> {
        let mut node = 0;
        for axis in 0..idx.len() {
            let j = idx[axis] as isize + off[axis];
            if j < 0 || j >= self.resolution[axis] as isize {
                return None;
            }
            node += j as usize * self.strides[axis];
        }
        Some(node)
    }

    /// Nearest grid node to `x`. Errors if `x` lies outside the box.
    pub fn snap(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.lo.len() {
            return Err(Error::Dimension {
                expected: self.lo.len(),
                got: x.len(),
            });
        }
        let mut node = 0;
        for (axis, &c) in x.iter().enumerate() {
            if !(c >= self.lo[axis] && c <= self.hi[axis]) {
                return Err(Error::OutsideBox { point: x.to_vec() });
            }
            let span = self.hi[axis] - self.lo[axis];
            let r = self.resolution[axis];
            let i = ((c - self.lo[axis]) / span * (r - 1) as f64).round() as usize;
            node += i.min(r - 1) * self.strides[axis];
        }
        Ok(node)
    }

    /// Snaps every point, requiring distinct nodes.
    pub fn snap_distinct(&self, points: &[Vec<f64>]) -> Result<Vec<usize>> {
        let nodes = points
            .iter()
            .map(|x| self.snap(x))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                if nodes[i] == nodes[j] {
                    return Err(Error::SnapCollision(points[i].clone(), points[j].clone()));
                }
            }
        }
        Ok(nodes)
    }

    /// Label-setting shortest paths from `source`, stopping once `target` is settled.
    ///
    /// Equal tentative distances are settled in increasing node index.
    pub fn shortest_paths(&self, source: usize, target: Option<usize>) -> ShortestPaths {
        let nodes = self.node_count();
        let mut dist = vec![f64::INFINITY; nodes];
        let mut pred = vec![usize::MAX; nodes];
        let mut settled = vec![false; nodes];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            node: source,
        });
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            if settled[node] {
                continue;
            }
            settled[node] = true;
            if Some(node) == target {
                break;
            }
            let idx = self.multi_index(node);
            for (off, len) in &self.stencil {
                let Some(next) = self.shift(&idx, off) else {
                    continue;
                };
                if settled[next] {
                    continue;
                }
                let nd = d + 0.5 * (self.k[node] + self.k[next]) * len;
                if nd < dist[next] {
                    dist[next] = nd;
                    pred[next] = node;
                    heap.push(HeapEntry {
                        dist: nd,
                        node: next,
                    });
                }
            }
        }
        ShortestPaths { source, dist, pred }
    }

    /// Graph distance between two nodes, computed from the lower index so that it is
    /// bit-for-bit symmetric.
    pub fn node_distance(&self, a: usize, b: usize) -> f64 {
        self.node_path(a, b).0
    }

    /// Graph distance and node sequence from `a` to `b`.
    pub fn node_path(&self, a: usize, b: usize) -> (f64, Vec<usize>) {
        if a == b {
            return (0.0, vec![a]);
        }
        let (s, t) = if a < b { (a, b) } else { (b, a) };
        let sp = self.shortest_paths(s, Some(t));
        let mut path = sp.path_to(t).unwrap_or_default();
        if a > b {
            path.reverse();
        }
        (sp.dist[t], path)
    }

    /// Upper estimate of `d_K(x, y)`: the grid shortest path between the snapped nodes,
    /// joined to the exact query points by straight connectors.
    pub fn dk_upper(&self, x: &[f64], y: &[f64]) -> Result<DkEstimate> {
        let p = &self.potential;
        let (lower_bound, upper_bound) = dk_bounds(p, x, y, Sampler::Grid(self))?;
        if distance(x, y) == 0.0 {
            return Ok(DkEstimate {
                value: 0.0,
                graph_value: 0.0,
                path: Curve::from_vertices(vec![x.to_vec()])?,
                lower_bound,
                upper_bound,
                mesh: self.mesh,
            });
        }
        let a = self.snap(x)?;
        let b = self.snap(y)?;
        let (graph_value, nodes) = self.node_path(a, b);
        if !graph_value.is_finite() || nodes.is_empty() {
            return Err(Error::Unreachable);
        }
        let mut value = graph_value;
        let mut vertices = Vec::with_capacity(nodes.len() + 2);
        let first = self.coords(a);
        if distance(x, &first) > 0.0 {
            value += 0.5 * (p.eval_k(x)? + self.k[a]) * distance(x, &first);
            vertices.push(x.to_vec());
        }
        vertices.extend(nodes.iter().map(|&v| self.coords(v)));
        let last = self.coords(b);
        if distance(y, &last) > 0.0 {
            value += 0.5 * (p.eval_k(y)? + self.k[b]) * distance(y, &last);
            vertices.push(y.to_vec());
        }
        Ok(DkEstimate {
            value,
            graph_value,
            path: Curve::from_vertices(vertices)?,
            lower_bound,
            upper_bound,
            mesh: self.mesh,
        })
    }

    /// Indices and `K` values of nodes within `radius` of `center`.
    fn nodes_in_ball(&self, center: &[f64], radius: f64) -> Vec<f64> {
        let n = self.lo.len();
        let mut ranges = Vec::with_capacity(n);
        for (axis, &c) in center.iter().enumerate() {
            let span = self.hi[axis] - self.lo[axis];
            let r = self.resolution[axis] - 1;
            let to_index = |v: f64| (v - self.lo[axis]) / span * r as f64;
            let lo = to_index(c - radius).floor().max(0.0);
            let hi = to_index(c + radius).ceil().min(r as f64);
            if lo > hi {
                return Vec::new();
            }
            ranges.push((lo as usize, hi as usize));
        }
        let mut out = Vec::new();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        let mut x = vec![0.0; n];
        loop {
            let mut node = 0;
            for axis in 0..n {
                x[axis] = self.coordinate(axis, idx[axis]);
                node += idx[axis] * self.strides[axis];
            }
            if distance(&x, center) <= radius {
                out.push(self.k[node]);
            }
            let mut axis = 0;
            loop {
                if axis == n {
                    return out;
                }
                if idx[axis] < ranges[axis].1 {
                    idx[axis] += 1;
                    break;
                }
                idx[axis] = ranges[axis].0;
                axis += 1;
            }
        }
    }
}

/// Result of a single-source shortest path run.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    pred: Vec<usize>,
}

impl ShortestPaths {
    pub fn path_to(&self, target: usize) -> Option<Vec<usize>> {
        if !self.dist[target].is_finite() {
            return None;
        }
        let mut path = vec![target];
        let mut v = target;
        while v != self.source {
            v = self.pred[v];
            path.push(v);
        }
        path.reverse();
        Some(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn stencil(spacing: &[f64]) -> Vec<(Vec<isize>, f64)> {
    let n = spacing.len();
    let mut out = Vec::with_capacity(3usize.pow(n as u32) - 1);
    let mut off = vec![-1isize; n];
    loop {
        if off.iter().any(|&o| o != 0) {
            let len = off
                .iter()
                .zip(spacing)
                .map(|(&o, h)| (o as f64 * h).powi(2))
                .sum::<f64>()
                .sqrt();
            out.push((off.clone(), len));
        }
        let mut axis = 0;
        loop {
            if axis == n {
                return out;
            }
            if off[axis] < 1 {
                off[axis] += 1;
                break;
            }
            off[axis] = -1;
            axis += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct DkEstimate {
    /// Weighted length of `path`.
    pub value: f64,
    /// Graph distance between the snapped endpoints.
    pub graph_value: f64,
    pub path: Curve,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub mesh: f64,
}

/// Where `dk_bounds` samples `K` inside the balls.
#[derive(Debug, Clone, Copy)]
pub enum Sampler<'a> {
    /// Nodes of an existing grid; `epsilon` is its cell diagonal.
    Grid(&'a GridGraph),
    /// A cubic lattice with `per_axis` points across the bounding cube of each ball.
    Lattice { per_axis: usize },
}

/// Sampled version of the ball bounds
/// `inf_{B(x,r)} K * r <= d_K(x, y) <= sup_{B(x,r)} K * r` with `r = |x - y|`.
///
/// The lower bound takes the minimum over the ball of radius `r + eps` and the upper bound
/// the maximum over the same ball, scaled by `r + eps`, where `eps` is the sampling mesh.
/// `x` and `y` themselves are always part of the sample.
pub fn dk_bounds(p: &PotentialSpec, x: &[f64], y: &[f64], sampler: Sampler) -> Result<(f64, f64)> {
    let r = distance(x, y);
    if r == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (eps, mut samples) = match sampler {
        Sampler::Grid(g) => {
            let eps = g.mesh();
            (eps, g.nodes_in_ball(x, r + eps))
        }
        Sampler::Lattice { per_axis } => {
            let per_axis = per_axis.max(2);
            let n = x.len();
            let step = 2.0 * r / (per_axis - 1) as f64;
            let eps = step * (n as f64).sqrt();
            let radius = r + eps;
            let count = (2.0 * radius / step).ceil() as usize + 1;
            let mut samples = Vec::new();
            let mut idx = vec![0usize; n];
            let mut pt = vec![0.0; n];
            'outer: loop {
                for axis in 0..n {
                    pt[axis] = x[axis] - radius + step * idx[axis] as f64;
                }
                if distance(&pt, x) <= radius {
                    samples.push(p.eval_k(&pt)?);
                }
                let mut axis = 0;
                loop {
                    if axis == n {
                        break 'outer;
                    }
                    if idx[axis] + 1 < count {
                        idx[axis] += 1;
                        break;
                    }
                    idx[axis] = 0;
                    axis += 1;
                }
            }
            (eps, samples)
        }
    };
    samples.push(p.eval_k(x)?);
    samples.push(p.eval_k(y)?);
    let kmin = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let kmax = samples.iter().copied().fold(0.0, f64::max);
    Ok((kmin * r, kmax * (r + eps)))
}
