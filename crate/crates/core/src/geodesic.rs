//! Local refinement of a seed polyline towards an `L_K`-minimizing curve.
//!
//! The unknowns are the interior vertex positions; the endpoints never move. The objective is
//! the trapezoid weighted length `sum_i (K_i + K_{i+1}) / 2 * |v_{i+1} - v_i|`. Gradients of `K`
//! come from central finite differences. As in the string method, only the component of the
//! gradient normal to the curve drives the vertices; the distribution along the curve is
//! restored by periodic uniform-arclength resampling. Without the projection, the trapezoid
//! objective rewards piling vertices into the wells and leaving long zero-weight edges between
//! them. Steps are preconditioned by the weighted stiffness matrix of the polyline
//! (tridiagonal, one solve per axis), which keeps the iteration count roughly independent of
//! the vertex count, and accepted by an Armijo backtracking search.

use crate::curve::{cumulative_lengths, Curve};
use crate::error::{Error, Result};
use crate::metric::{curve_length_k, DkEstimate};
use crate::potential::{distance, PotentialSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOptions {
    pub max_iters: usize,
    /// Initial trial step of the line search.
    pub step: f64,
    /// Stop when the max-norm of the gradient falls below this; `None` means
    /// `1e-6 * initial objective`.
    pub grad_tol: Option<f64>,
    pub resample_every: usize,
    /// Vertex count of the refined curve.
    pub m: usize,
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            max_iters: 5000,
            step: 1.0,
            grad_tol: None,
            resample_every: 25,
            m: 200,
            armijo: 1e-4,
            max_halvings: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeodesicResult {
    pub curve: Curve,
    pub lk_value: f64,
    /// Weighted length of the seed.
    pub initial_lk: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting from the resampled seed.
    pub history: Vec<f64>,
    /// Pairs of non-adjacent edges that touch; a diagnostic, the refinement does not
    /// enforce injectivity.
    pub self_intersections: usize,
    pub dk_estimate: Option<DkEstimate>,
}

/// Refines the path of a grid estimate and keeps the estimate attached.
pub fn refine_estimate(
    p: &PotentialSpec,
    estimate: DkEstimate,
    opts: &RefineOptions,
) -> Result<GeodesicResult> {
    let mut result = refine_geodesic(p, &estimate.path, opts)?;
    result.dk_estimate = Some(estimate);
    Ok(result)
}

pub fn refine_geodesic(
    p: &PotentialSpec,
    seed: &Curve,
    opts: &RefineOptions,
) -> Result<GeodesicResult> {
    if opts.m < 2 {
        return Err(Error::Invalid(format!(
            "vertex count m = {} is below 2",
            opts.m
        )));
    }
    if !(opts.step > 0.0) {
        return Err(Error::Invalid(format!(
            "step must be positive, got {}",
            opts.step
        )));
    }
    let initial_lk = curve_length_k(p, seed)?;
    if seed.len() < 2 {
        return Ok(GeodesicResult {
            curve: seed.clone(),
            lk_value: initial_lk,
            initial_lk,
            iterations: 0,
            converged: true,
            history: vec![initial_lk],
            self_intersections: 0,
            dk_estimate: None,
        });
    }
    let fd_step = 1e-6 * bbox_diameter(seed.vertices()).max(f64::MIN_POSITIVE);
    let resample_every = opts.resample_every.max(1);

    let mut verts = seed.resample_arclength(opts.m)?.into_vertices();
    let (mut f, mut ks) = objective(p, &verts)?;
    let grad_tol = opts.grad_tol.unwrap_or(1e-6 * f).max(f64::MIN_POSITIVE);
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = false;

    for iter in 0..opts.max_iters {
        if iter > 0 && iter % resample_every == 0 {
            let resampled = Curve::from_vertices(verts.clone())?
                .resample_arclength(opts.m)?
                .into_vertices();
            let (fr, kr) = objective(p, &resampled)?;
            if fr <= f {
                verts = resampled;
                f = fr;
                ks = kr;
                history.push(f);
            }
        }
        let tangents = tangents(&verts);
        let mut grad = objective_gradient(p, &verts, &ks, fd_step)?;
        project_normal(&mut grad, &tangents);
        let gmax = grad
            .iter()
            .flatten()
            .fold(0.0f64, |acc, g| acc.max(g.abs()));
        if gmax < grad_tol {
            converged = true;
            break;
        }
        let mut dir = preconditioned_direction(&verts, &ks, &grad);
        project_normal(&mut dir, &tangents);
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            dir = grad
                .iter()
                .map(|g| g.iter().map(|x| -x).collect())
                .collect();
            slope = dot(&grad, &dir);
        }
        if !(slope < 0.0) {
            break;
        }
        let mut alpha = opts.step;
        let mut accepted = None;
        for _ in 0..opts.max_halvings {
            let trial = displaced(&verts, &dir, alpha);
            if let Ok((ft, kt)) = objective(p, &trial) {
                if ft <= f + opts.armijo * alpha * slope {
                    accepted = Some((trial, ft, kt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, ft, kt)) = accepted else {
            break;
        };
        debug_assert!(ft <= f);
        verts = trial;
        f = ft;
        ks = kt;
        history.push(f);
        iterations += 1;
    }

    // a seed coarser than the string under-resolves its own weighted length, so it only
    // competes when it is at least as fine
    let (curve, lk_value) = if f <= initial_lk || seed.len() < opts.m {
        (Curve::from_vertices(verts)?, f)
    } else {
        converged = false;
        (seed.clone(), initial_lk)
    };
    let self_intersections = curve.self_intersections(1e-12 * curve.length());
    Ok(GeodesicResult {
        curve,
        lk_value,
        initial_lk,
        iterations,
        converged,
        history,
        self_intersections,
        dk_estimate: None,
    })
}

/// Discrete weighted length and the `K` values at the vertices.
pub fn objective(p: &PotentialSpec, verts: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let ks = verts
        .iter()
        .map(|v| p.eval_k(v))
        .collect::<Result<Vec<_>>>()?;
    let f = verts
        .windows(2)
        .zip(ks.windows(2))
        .map(|(v, k)| 0.5 * (k[0] + k[1]) * distance(&v[0], &v[1]))
        .sum();
    Ok((f, ks))
}

/// `grad K(x)` by central differences with spacing `h`.
pub fn k_gradient(p: &PotentialSpec, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            probe[j] = x[j] + h;
            let plus = p.eval_k(&probe)?;
            probe[j] = x[j] - h;
            let minus = p.eval_k(&probe)?;
            probe[j] = x[j];
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// Gradient of [`objective`] with respect to the interior vertices; entry `i` belongs to
/// vertex `i + 1`.
pub fn objective_gradient(
    p: &PotentialSpec,
    verts: &[Vec<f64>],
    ks: &[f64],
    fd_step: f64,
) -> Result<Vec<Vec<f64>>> {
    let m = verts.len();
    let n = verts[0].len();
    let mut out = Vec::with_capacity(m.saturating_sub(2));
    for i in 1..m.saturating_sub(1) {
        let (prev, cur, next) = (&verts[i - 1], &verts[i], &verts[i + 1]);
        let lp = distance(prev, cur);
        let ln = distance(cur, next);
        let gk = k_gradient(p, cur, fd_step)?;
        let wp = 0.5 * (ks[i - 1] + ks[i]);
        let wn = 0.5 * (ks[i] + ks[i + 1]);
        let g: Vec<f64> = (0..n)
            .map(|j| {
                let mut gj = 0.5 * gk[j] * (lp + ln);
                if lp > 0.0 {
                    gj += wp * (cur[j] - prev[j]) / lp;
                }
                if ln > 0.0 {
                    gj -= wn * (next[j] - cur[j]) / ln;
                }
                gj
            })
            .collect();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NanGradient);
        }
        out.push(g);
    }
    Ok(out)
}

/// Unit tangents at the interior vertices from the neighbouring vertices.
fn tangents(verts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    verts
        .windows(3)
        .map(|w| {
            let t: Vec<f64> = w[2].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
            let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                t.into_iter().map(|x| x / norm).collect()
            } else {
                t
            }
        })
        .collect()
}

/// Removes the tangential part of every interior vector, leaving arclength distribution to
/// the resampling step.
fn project_normal(field: &mut [Vec<f64>], tangents: &[Vec<f64>]) {
    for (v, t) in field.iter_mut().zip(tangents) {
        let along: f64 = v.iter().zip(t).map(|(a, b)| a * b).sum();
        for (x, tj) in v.iter_mut().zip(t) {
            *x -= along * tj;
        }
    }
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| x * y)
        .sum()
}

/// `-A^{-1} g` with `A` the stiffness matrix of the weighted polyline length.
fn preconditioned_direction(verts: &[Vec<f64>], ks: &[f64], grad: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let interior = grad.len();
    if interior == 0 {
        return Vec::new();
    }
    let n = verts[0].len();
    let lengths: Vec<f64> = verts.windows(2).map(|w| distance(&w[0], &w[1])).collect();
    let mut weights: Vec<f64> = ks.windows(2).map(|k| 0.5 * (k[0] + k[1])).collect();
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    let floor = (1e-3 * mean).max(f64::MIN_POSITIVE);
    let mean_len = lengths.iter().sum::<f64>() / lengths.len() as f64;
    let conductance: Vec<f64> = weights
        .iter_mut()
        .zip(&lengths)
        .map(|(w, &l)| w.max(floor) / l.max(1e-3 * mean_len).max(f64::MIN_POSITIVE))
        .collect();
    // interior row i couples edges i and i + 1
    let diag: Vec<f64> = (0..interior)
        .map(|i| conductance[i] + conductance[i + 1])
        .collect();
    let off: Vec<f64> = (0..interior.saturating_sub(1))
        .map(|i| -conductance[i + 1])
        .collect();
    let mut dir = vec![vec![0.0; n]; interior];
    let mut rhs = vec![0.0; interior];
    for j in 0..n {
        for i in 0..interior {
            rhs[i] = -grad[i][j];
        }
        let sol = solve_tridiagonal(&diag, &off, &rhs);
        for i in 0..interior {
            dir[i][j] = sol[i];
        }
    }
    dir
}

/// Thomas algorithm for a symmetric tridiagonal system.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - off[i - 1] * c[i - 1];
        c[i] = if i + 1 < n { off[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

fn displaced(verts: &[Vec<f64>], dir: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    let mut out = verts.to_vec();
    for (v, d) in out[1..verts.len() - 1].iter_mut().zip(dir) {
        for (x, dx) in v.iter_mut().zip(d) {
            *x += alpha * dx;
        }
    }
    out
}

fn bbox_diameter(verts: &[Vec<f64>]) -> f64 {
    let n = verts[0].len();
    (0..n)
        .map(|j| {
            let (lo, hi) = verts
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v[j]), hi.max(v[j]))
                });
            (hi - lo).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Cumulative Euclidean arclength of the refined curve's vertices.
pub fn arclengths(c: &Curve) -> Vec<f64> {
    cumulative_lengths(c.vertices())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_one(n: usize) -> PotentialSpec {
        PotentialSpec::new(n, "0.5", vec![vec![0.0; n]], 1e9, None).unwrap()
    }

    fn double_well_2d() -> PotentialSpec {
        PotentialSpec::new(
            2,
            "0.5*((x1^2-1)^2 + x2^2)",
            vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            1e-12,
            None,
        )
        .unwrap()
    }

    fn assert_monotone(history: &[f64]) {
        for w in history.windows(2) {
            assert!(w[1] <= w[0], "objective increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zigzag_straightens_under_constant_weight() {
        let a = [-0.7, 0.2];
        let b = [0.9, -0.4];
        let verts: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let s = i as f64 / 49.0;
                let bump = if i == 0 || i == 49 {
                    0.0
                } else if i % 2 == 0 {
                    0.1
                } else {
                    -0.1
                };
                vec![
                    a[0] + s * (b[0] - a[0]) + bump,
                    a[1] + s * (b[1] - a[1]) + bump,
                ]
            })
            .collect();
        let seed = Curve::from_vertices(verts).unwrap();
        let r = refine_geodesic(&constant_one(2), &seed, &RefineOptions::default()).unwrap();
        let straight = distance(&a, &b);
        assert!(
            (r.lk_value - straight).abs() < 1e-6,
            "{} vs {}",
            r.lk_value,
            straight
        );
        assert_monotone(&r.history);
        assert_eq!(r.curve.first(), seed.first());
        assert_eq!(r.curve.last(), seed.last());
    }

    #[test]
    fn one_dimensional_double_well() {
        let p = PotentialSpec::new(
            1,
            "0.5*(1-x1^2)^2",
            vec![vec![-1.0], vec![1.0]],
            1e-12,
            None,
        )
        .unwrap();
        let seed = Curve::from_vertices((0..=400).map(|i| vec![-1.0 + i as f64 / 200.0]).collect())
            .unwrap();
        let r = refine_geodesic(&p, &seed, &RefineOptions::default()).unwrap();
        assert!((r.lk_value - 4.0 / 3.0).abs() < 1e-4, "{}", r.lk_value);
        assert!(r.lk_value <= r.initial_lk + 1e-12);
        assert_monotone(&r.history);
    }

    #[test]
    fn two_vertex_seed_between_wells() {
        // the seed's own trapezoid length is zero since K vanishes at both ends
        let p = PotentialSpec::new(
            1,
            "0.5*(1-x1^2)^2",
            vec![vec![-1.0], vec![1.0]],
            1e-12,
            None,
        )
        .unwrap();
        let seed = Curve::from_vertices(vec![vec![-1.0], vec![1.0]]).unwrap();
        let r = refine_geodesic(&p, &seed, &RefineOptions::default()).unwrap();
        assert_eq!(r.initial_lk, 0.0);
        assert_eq!(r.curve.len(), 200);
        assert!((r.lk_value - 4.0 / 3.0).abs() < 1e-4, "{}", r.lk_value);
        assert!(r.converged);
    }

    #[test]
    fn bowed_seed_collapses_to_axis() {
        let p = double_well_2d();
        let seed = Curve::from_vertices(
            (0..=60)
                .map(|i| {
                    let s = i as f64 / 60.0;
                    let x = -1.0 + 2.0 * s;
                    vec![x, 0.6 * (std::f64::consts::PI * s).sin()]
                })
                .collect(),
        )
        .unwrap();
        let r = refine_geodesic(&p, &seed, &RefineOptions::default()).unwrap();
        assert_monotone(&r.history);
        assert!((r.lk_value - 4.0 / 3.0).abs() < 1e-4, "{}", r.lk_value);
        let off_axis = r
            .curve
            .vertices()
            .iter()
            .map(|v| v[1].abs())
            .fold(0.0, f64::max);
        assert!(off_axis < 1e-3, "{off_axis}");
        assert_eq!(r.curve.first(), seed.first());
        assert_eq!(r.curve.last(), seed.last());
    }

    #[test]
    fn resampling_changes_objective_by_second_order_only() {
        let p = double_well_2d();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let verts: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let s = i as f64 / 39.0;
                vec![
                    -1.0 + 2.0 * s + rng.gen_range(-0.01..0.01),
                    0.3 * s * (1.0 - s),
                ]
            })
            .collect();
        let c = Curve::from_vertices(verts).unwrap();
        let r = c.resample_arclength(400).unwrap();
        let a = curve_length_k(&p, &c).unwrap();
        let b = curve_length_k(&p, &r).unwrap();
        let max_gap = c
            .vertices()
            .windows(2)
            .map(|w| distance(&w[0], &w[1]))
            .fold(0.0, f64::max);
        assert!(
            (a - b).abs() <= 10.0 * max_gap * max_gap,
            "{}",
            (a - b).abs()
        );

        let q = constant_one(2);
        let a = curve_length_k(&q, &c).unwrap();
        let r = c.resample_arclength(c.len()).unwrap();
        // corners that land on samples are preserved, others get cut
        assert!(curve_length_k(&q, &r).unwrap() <= a + 1e-12);
        let uniform =
            Curve::from_vertices((0..11).map(|i| vec![i as f64 * 0.1, 0.0]).collect()).unwrap();
        let ru = uniform.resample_arclength(37).unwrap();
        assert!(
            (curve_length_k(&q, &uniform).unwrap() - curve_length_k(&q, &ru).unwrap()).abs()
                < 1e-12
        );
    }

    #[test]
    fn gradient_matches_secant_slopes() {
        let p = double_well_2d();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let verts: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let s = i as f64 / 29.0;
                vec![-1.0 + 2.0 * s, 0.4 * (3.0 * s).sin() * s * (1.0 - s) + 0.05]
            })
            .collect();
        let (_, ks) = objective(&p, &verts).unwrap();
        let grad = objective_gradient(&p, &verts, &ks, 1e-6 * 2.0).unwrap();
        for _ in 0..20 {
            let i = rng.gen_range(1..29);
            let dir: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let mut plus = verts.clone();
            let mut minus = verts.clone();
            for j in 0..2 {
                plus[i][j] += h * dir[j];
                minus[i][j] -= h * dir[j];
            }
            let secant =
                (objective(&p, &plus).unwrap().0 - objective(&p, &minus).unwrap().0) / (2.0 * h);
            let analytic: f64 = (0..2).map(|j| grad[i - 1][j] * dir[j]).sum();
            assert!(
                (secant - analytic).abs() <= 1e-4 * secant.abs().max(1e-3),
                "{secant} vs {analytic}"
            );
        }
    }

    #[test]
    fn tridiagonal_solver() {
        let diag = [4.0, 4.0, 4.0];
        let off = [-1.0, -1.0];
        let x = solve_tridiagonal(&diag, &off, &[3.0, 2.0, 3.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_point_seed() {
        let seed = Curve::from_vertices(vec![vec![0.2, 0.2]]).unwrap();
        let r = refine_geodesic(&double_well_2d(), &seed, &RefineOptions::default()).unwrap();
        assert_eq!(r.lk_value, 0.0 + r.initial_lk);
        assert!(r.converged);
    }
}
