//! Strict triangle inequality over the declared wells, and chain decomposition through
//! intermediate wells when it fails.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric::GridGraph;
use crate::potential::distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Strict,
    Tight,
    Violated,
}

impl Verdict {
    pub fn classify(direct: f64, via: f64, tol: f64) -> Verdict {
        if via - direct > tol {
            Verdict::Strict
        } else if direct - via > tol {
            Verdict::Violated
        } else {
            Verdict::Tight
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StiEntry {
    /// Index of the third well.
    pub well: usize,
    pub point: Vec<f64>,
    pub direct: f64,
    pub via: f64,
    /// `direct - via`.
    pub margin: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StiReport {
    pub pair: (usize, usize),
    pub endpoints: (Vec<f64>, Vec<f64>),
    pub direct: f64,
    pub entries: Vec<StiEntry>,
    pub tolerance: f64,
}

impl StiReport {
    /// True when every third well is strict (vacuously so without third wells).
    pub fn holds(&self) -> bool {
        self.entries.iter().all(|e| e.verdict == Verdict::Strict)
    }
}

/// Grid estimates of `d_K` between every pair of wells.
///
/// Each well is joined to its snapped node by a straight connector; the graph part of a
/// pair is read from the shortest-path tree rooted at the lower node index, so the table is
/// exactly symmetric.
#[derive(Debug, Clone)]
pub struct WellDistances {
    wells: Vec<Vec<f64>>,
    table: Vec<Vec<f64>>,
    /// Largest `|K(u) - K(v)| / |u - v|` over the edges of the path behind each entry.
    slopes: Vec<Vec<f64>>,
    mesh: f64,
}

impl WellDistances {
    pub fn compute(g: &GridGraph, wells: &[Vec<f64>]) -> Result<WellDistances> {
        let p = g.potential();
        let nodes = g.snap_distinct(wells)?;
        let n = wells.len();
        let mut connector = Vec::with_capacity(n);
        let mut connector_slope = Vec::with_capacity(n);
        for (w, &node) in wells.iter().zip(&nodes) {
            let c = g.coords(node);
            let (kw, kc) = (p.eval_k(w)?, g.k_at(node));
            let len = distance(w, &c);
            connector.push(0.5 * (kw + kc) * len);
            connector_slope.push(if len > 0.0 {
                (kw - kc).abs() / len
            } else {
                0.0
            });
        }
        let mut table = vec![vec![0.0; n]; n];
        let mut slopes = vec![vec![0.0; n]; n];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| nodes[i]);
        for (rank, &i) in order.iter().enumerate() {
            if rank + 1 == n {
                break;
            }
            let tree = g.shortest_paths(nodes[i], None);
            for &j in &order[rank + 1..] {
                let graph = tree.dist[nodes[j]];
                if !graph.is_finite() {
                    return Err(Error::Unreachable);
                }
                let path = tree.path_to(nodes[j]).unwrap_or_default();
                let mut slope = connector_slope[i].max(connector_slope[j]);
                for e in path.windows(2) {
                    let len = distance(&g.coords(e[0]), &g.coords(e[1]));
                    slope = slope.max((g.k_at(e[0]) - g.k_at(e[1])).abs() / len);
                }
                let d = connector[i] + graph + connector[j];
                table[i][j] = d;
                table[j][i] = d;
                slopes[i][j] = slope;
                slopes[j][i] = slope;
            }
        }
        Ok(WellDistances {
            wells: wells.to_vec(),
            table,
            slopes,
            mesh: g.mesh(),
        })
    }

    pub fn len(&self) -> usize {
        self.wells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wells.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.table[i][j]
    }

    /// Five times `mesh * max |grad K|`, with the gradient proxied by the steepest edge on
    /// the paths compared for `pair`.
    pub fn default_tolerance(&self, pair: (usize, usize)) -> f64 {
        let (a, b) = pair;
        let mut slope = self.slopes[a][b];
        for w in (0..self.len()).filter(|&w| w != a && w != b) {
            slope = slope.max(self.slopes[a][w]).max(self.slopes[w][b]);
        }
        5.0 * self.mesh * slope
    }

    fn check_pair(&self, pair: (usize, usize)) -> Result<()> {
        let (a, b) = pair;
        if a >= self.len() || b >= self.len() || a == b {
            return Err(Error::Invalid(format!(
                "pair ({a}, {b}) must name two distinct wells out of {}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn report(&self, pair: (usize, usize), tol: Option<f64>) -> Result<StiReport> {
        self.check_pair(pair)?;
        let (a, b) = pair;
        let tolerance = tol.unwrap_or_else(|| self.default_tolerance(pair));
        let direct = self.table[a][b];
        let entries = (0..self.len())
            .filter(|&w| w != a && w != b)
            .map(|w| {
                let via = self.table[a][w] + self.table[w][b];
                StiEntry {
                    well: w,
                    point: self.wells[w].clone(),
                    direct,
                    via,
                    margin: direct - via,
                    verdict: Verdict::classify(direct, via, tolerance),
                }
            })
            .collect();
        Ok(StiReport {
            pair,
            endpoints: (self.wells[a].clone(), self.wells[b].clone()),
            direct,
            entries,
            tolerance,
        })
    }

    /// Shortest well sequence from `pair.0` to `pair.1` on the complete well graph with
    /// every tight or violated edge removed; ties go to the lexicographically smallest
    /// sequence.
    pub fn chain(&self, pair: (usize, usize), tol: Option<f64>) -> Result<Vec<(usize, usize)>> {
        self.check_pair(pair)?;
        let tolerance = tol.unwrap_or_else(|| self.default_tolerance(pair));
        let n = self.len();
        let usable = |i: usize, j: usize| {
            (0..n)
                .filter(|&w| w != i && w != j)
                .all(|w| self.table[i][w] + self.table[w][j] - self.table[i][j] > tolerance)
        };
        let (source, target) = pair;
        let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; n];
        let mut done = vec![false; n];
        best[source] = Some((0.0, vec![source]));
        loop {
            let next = (0..n)
                .filter(|&v| !done[v])
                .filter_map(|v| best[v].as_ref().map(|b| (v, b)))
                .min_by(|x, y| x.1 .0.total_cmp(&y.1 .0).then_with(|| x.1 .1.cmp(&y.1 .1)))
                .map(|(v, _)| v);
            let Some(v) = next else { break };
            done[v] = true;
            if v == target {
                break;
            }
            let (dv, path) = best[v].clone().unwrap();
            for u in (0..n).filter(|&u| !done[u] && usable(v, u)) {
                let du = dv + self.table[v][u];
                let mut cand = path.clone();
                cand.push(u);
                let better = match &best[u] {
                    None => true,
                    Some((d, p)) => du < *d || (du == *d && cand < *p),
                };
                if better {
                    best[u] = Some((du, cand));
                }
            }
        }
        let Some((_, seq)) = best[target].take() else {
            return Err(Error::Chain(format!(
                "no chain of wells joins {source} and {target}"
            )));
        };
        let mut seen = vec![false; n];
        for &w in &seq {
            if std::mem::replace(&mut seen[w], true) {
                return Err(Error::Chain(format!("well {w} repeats in the chain")));
            }
        }
        Ok(seq.windows(2).map(|w| (w[0], w[1])).collect())
    }
}

pub fn check_sti(
    g: &GridGraph,
    wells: &[Vec<f64>],
    pair: (usize, usize),
    tol: Option<f64>,
) -> Result<StiReport> {
    WellDistances::compute(g, wells)?.report(pair, tol)
}

pub fn chain_decompose(
    g: &GridGraph,
    wells: &[Vec<f64>],
    pair: (usize, usize),
    tol: Option<f64>,
) -> Result<Vec<(usize, usize)>> {
    WellDistances::compute(g, wells)?.chain(pair, tol)
}
