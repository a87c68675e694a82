//! Polylines in R^n with a strictly increasing parameter.

use crate::error::{Error, Result};
use crate::potential::distance;

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    vertices: Vec<Vec<f64>>,
    params: Vec<f64>,
}

impl Curve {
    /// Builds a curve with explicit parameter values.
    pub fn new(vertices: Vec<Vec<f64>>, params: Vec<f64>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::DegenerateCurve("no vertices".into()));
        }
        if vertices.len() != params.len() {
            return Err(Error::DegenerateCurve(format!(
                "{} vertices but {} parameters",
                vertices.len(),
                params.len()
            )));
        }
        let n = vertices[0].len();
        if n == 0 || vertices.iter().any(|v| v.len() != n) {
            return Err(Error::DegenerateCurve(
                "inconsistent vertex dimension".into(),
            ));
        }
        if params.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateCurve(
                "parameters must be strictly increasing".into(),
            ));
        }
        Ok(Curve { vertices, params })
    }

    /// Builds a curve parametrized by cumulative Euclidean arclength, dropping repeated
    /// consecutive vertices. A curve whose vertices all coincide collapses to one point.
    pub fn from_vertices(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let mut cleaned: Vec<Vec<f64>> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if cleaned.last().is_none_or(|last| distance(last, &v) > 0.0) {
                cleaned.push(v);
            }
        }
        let params = cumulative_lengths(&cleaned);
        Curve::new(cleaned, params)
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn first(&self) -> &[f64] {
        &self.vertices[0]
    }

    pub fn last(&self) -> &[f64] {
        self.vertices.last().unwrap()
    }

    pub fn into_vertices(self) -> Vec<Vec<f64>> {
        self.vertices
    }

    /// Euclidean length.
    pub fn length(&self) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| distance(&w[0], &w[1]))
            .sum()
    }

    /// Same vertices, reversed, reparametrized by arclength.
    pub fn reversed(&self) -> Curve {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        let params = cumulative_lengths(&vertices);
        Curve { vertices, params }
    }

    /// Resamples to `m` vertices spaced uniformly in arclength along this polyline.
    ///
    /// Endpoints are copied exactly; the result is parametrized by its own arclength.
    pub fn resample_arclength(&self, m: usize) -> Result<Curve> {
        if m < 2 {
            return Err(Error::DegenerateCurve(format!(
                "cannot resample to {m} vertices"
            )));
        }
        let along = cumulative_lengths(&self.vertices);
        let total = *along.last().unwrap();
        if !(total > 0.0) {
            return Err(Error::DegenerateCurve(
                "zero-length curve cannot be resampled".into(),
            ));
        }
        let mut out = Vec::with_capacity(m);
        out.push(self.vertices[0].clone());
        let mut seg = 0;
        for k in 1..m - 1 {
            let s = total * k as f64 / (m - 1) as f64;
            while seg + 2 < along.len() && along[seg + 1] < s {
                seg += 1;
            }
            out.push(lerp_on_segment(&self.vertices, &along, seg, s));
        }
        out.push(self.last().to_vec());
        Curve::from_vertices(out)
    }

    /// Point at arclength `s` (clamped to `[0, length]`).
    pub fn point_at_arclength(&self, s: f64) -> Vec<f64> {
        let along = cumulative_lengths(&self.vertices);
        point_at(&self.vertices, &along, s)
    }

    /// Pairs of non-adjacent edges closer than `tol`.
    pub fn self_intersections(&self, tol: f64) -> usize {
        let v = &self.vertices;
        let edges = v.len().saturating_sub(1);
        let mut count = 0;
        for i in 0..edges {
            for j in i + 2..edges {
                if segment_distance(&v[i], &v[i + 1], &v[j], &v[j + 1]) <= tol {
                    count += 1;
                }
            }
        }
        count
    }
}

pub(crate) fn cumulative_lengths(vertices: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(vertices.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in vertices.windows(2) {
        acc += distance(&w[0], &w[1]);
        out.push(acc);
    }
    out
}

fn lerp_on_segment(vertices: &[Vec<f64>], along: &[f64], seg: usize, s: f64) -> Vec<f64> {
    let (a, b) = (&vertices[seg], &vertices[seg + 1]);
    let len = along[seg + 1] - along[seg];
    let theta = if len > 0.0 {
        ((s - along[seg]) / len).clamp(0.0, 1.0)
    } else {
        0.0
    };
    a.iter().zip(b).map(|(x, y)| x + theta * (y - x)).collect()
}

/// Linear interpolation at arclength `s` given precomputed cumulative lengths.
pub(crate) fn point_at(vertices: &[Vec<f64>], along: &[f64], s: f64) -> Vec<f64> {
    if vertices.len() == 1 {
        return vertices[0].clone();
    }
    let total = *along.last().unwrap();
    if s <= 0.0 {
        return vertices[0].clone();
    }
    if s >= total {
        return vertices.last().unwrap().clone();
    }
    let seg = along.partition_point(|&a| a <= s).clamp(1, along.len() - 1) - 1;
    lerp_on_segment(vertices, along, seg, s)
}

/// Smallest distance between segments `[p0, p1]` and `[q0, q1]` in R^n.
fn segment_distance(p0: &[f64], p1: &[f64], q0: &[f64], q1: &[f64]) -> f64 {
    let d1: Vec<f64> = p1.iter().zip(p0).map(|(a, b)| a - b).collect();
    let d2: Vec<f64> = q1.iter().zip(q0).map(|(a, b)| a - b).collect();
    let r: Vec<f64> = p0.iter().zip(q0).map(|(a, b)| a - b).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let a = dot(&d1, &d1);
    let e = dot(&d2, &d2);
    let f = dot(&d2, &r);
    let c = dot(&d1, &r);
    let b = dot(&d1, &d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-300 {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = if e > 0.0 { (b * s + f) / e } else { 0.0 };
    if t < 0.0 {
        t = 0.0;
        s = if a > 0.0 {
            (-c / a).clamp(0.0, 1.0)
        } else {
            0.0
        };
    } else if t > 1.0 {
        t = 1.0;
        s = if a > 0.0 {
            ((b - c) / a).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
    let mut best = f64::INFINITY;
    // Parallel segments: also test the endpoint projections.
    let candidates = [(s, t), (0.0, proj(f, e)), (1.0, proj(f + b, e))];
    for (s, t) in candidates {
        let d: f64 = (0..p0.len())
            .map(|i| {
                let x = p0[i] + s * d1[i] - q0[i] - t * d2[i];
                x * x
            })
            .sum();
        best = best.min(d.sqrt());
    }
    best
}

fn proj(num: f64, e: f64) -> f64 {
    if e > 0.0 {
        (num / e).clamp(0.0, 1.0)
    } else {
        0.0
    }
}
