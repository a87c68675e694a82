//! Time reparametrization of a weighted geodesic into an equipartitioned orbit.
//!
//! With `gamma_0` parametrized by Euclidean arclength on `[0, L]`, the orbit
//! `gamma(t) = gamma_0(phi(t))` with `phi' = K(gamma_0(phi))` has `|gamma'| = K(gamma)`, which
//! turns Young's inequality `|v|^2 / 2 + W >= K |v|` into an equality along the orbit.

use crate::curve::{cumulative_lengths, point_at};
use crate::error::{Error, Result};
use crate::geodesic::GeodesicResult;
use crate::metric::polyline_length_k;
use crate::potential::{distance, PotentialSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ReparamOptions {
    /// Integration stops once the orbit is this close (Euclidean) to the target well.
    pub eps_well: f64,
    pub dt: f64,
    /// Step budget per direction before the integration is declared stalled.
    pub max_steps: usize,
    pub max_halvings: usize,
}

impl Default for ReparamOptions {
    fn default() -> Self {
        ReparamOptions {
            eps_well: 1e-4,
            dt: 1e-3,
            max_steps: 2_000_000,
            max_halvings: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeteroclinicOrbit {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Arclength position `phi(t)` on the geodesic for every sample.
    pub arclength: Vec<f64>,
    /// Action over the sampled window.
    pub energy: f64,
    /// Weighted length of the two geodesic pieces cut off by the truncation.
    pub tail_bound: f64,
    pub equip_residual: f64,
    pub eps_well: f64,
    /// Step actually used after any halving.
    pub dt: f64,
}

impl HeteroclinicOrbit {
    /// Wraps arbitrary time samples of a curve; no tail is attributed.
    pub fn from_samples(
        p: &PotentialSpec,
        times: Vec<f64>,
        points: Vec<Vec<f64>>,
        eps_well: f64,
    ) -> Result<Self> {
        if times.len() != points.len() || times.is_empty() {
            return Err(Error::Invalid(
                "orbit needs matching, nonempty samples".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid(
                "orbit times must be strictly increasing".into(),
            ));
        }
        let energy = energy(p, &times, &points)?;
        let equip_residual = equipartition_residual(p, &times, &points)?;
        let dt = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        Ok(HeteroclinicOrbit {
            arclength: cumulative_lengths(&points),
            times,
            points,
            energy,
            tail_bound: 0.0,
            equip_residual,
            eps_well,
            dt,
        })
    }

    /// `|gamma'|` at every sample by central differences, one-sided at the ends.
    pub fn speeds(&self) -> Vec<f64> {
        velocities(&self.times, &self.points)
            .iter()
            .map(|v| norm(v))
            .collect()
    }

    /// Same orbit with every time shifted by `shift`.
    pub fn shifted(&self, p: &PotentialSpec, shift: f64) -> Result<Self> {
        let times: Vec<f64> = self.times.iter().map(|t| t + shift).collect();
        let mut out =
            HeteroclinicOrbit::from_samples(p, times, self.points.clone(), self.eps_well)?;
        out.tail_bound = self.tail_bound;
        out.arclength = self.arclength.clone();
        out.dt = self.dt;
        Ok(out)
    }
}

/// Integrates `phi' = F(phi)`, `F = K o gamma_0` on `[0, L]` and zero outside, from the
/// midpoint `phi(0) = L / 2` forwards to `x+` and backwards to `x-`.
pub fn time_reparametrize(
    p: &PotentialSpec,
    g: &GeodesicResult,
    opts: &ReparamOptions,
) -> Result<HeteroclinicOrbit> {
    if !(opts.dt > 0.0) || !(opts.eps_well > 0.0) {
        return Err(Error::Invalid(format!(
            "dt and eps_well must be positive (dt = {}, eps_well = {})",
            opts.dt, opts.eps_well
        )));
    }
    let verts = g.curve.vertices();
    let along = cumulative_lengths(verts);
    let total = *along.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::DegenerateCurve("geodesic has zero length".into()));
    }
    let path = ArclengthPath {
        p,
        verts,
        along: &along,
        total,
    };
    let start = verts[0].clone();
    let end = verts.last().unwrap().clone();
    check_interior_zeros(&path, &start, &end, opts.eps_well)?;

    let mut dt = opts.dt;
    let mut halvings = 0;
    let (backward, forward) = loop {
        let attempt = path
            .integrate(-dt, &start, opts)
            .and_then(|b| Ok((b, path.integrate(dt, &end, opts)?)));
        match attempt {
            Err(Error::StepTooLarge { .. }) if halvings < opts.max_halvings => {
                dt *= 0.5;
                halvings += 1;
            }
            Err(Error::StepTooLarge { .. }) => return Err(Error::StepTooLarge { halvings }),
            other => break other?,
        }
    };

    let mut times = Vec::with_capacity(backward.len() + forward.len());
    let mut phis = Vec::with_capacity(backward.len() + forward.len());
    for &(t, phi) in backward.iter().rev() {
        times.push(t);
        phis.push(phi);
    }
    for &(t, phi) in forward.iter().skip(1) {
        times.push(t);
        phis.push(phi);
    }
    let points: Vec<Vec<f64>> = phis.iter().map(|&s| path.point(s)).collect();

    let first_phi = phis[0];
    let last_phi = *phis.last().unwrap();
    let mut head = vec![start.clone()];
    head.extend(
        along
            .iter()
            .zip(verts)
            .filter(|(&s, _)| s > 0.0 && s < first_phi)
            .map(|(_, v)| v.clone()),
    );
    head.push(points[0].clone());
    let mut tail = vec![points.last().unwrap().clone()];
    tail.extend(
        along
            .iter()
            .zip(verts)
            .filter(|(&s, _)| s > last_phi && s < total)
            .map(|(_, v)| v.clone()),
    );
    tail.push(end);
    let tail_bound = polyline_length_k(p, &head)? + polyline_length_k(p, &tail)?;

    let energy = energy(p, &times, &points)?;
    let equip_residual = equipartition_residual(p, &times, &points)?;
    Ok(HeteroclinicOrbit {
        times,
        points,
        arclength: phis,
        energy,
        tail_bound,
        equip_residual,
        eps_well: opts.eps_well,
        dt,
    })
}

struct ArclengthPath<'a> {
    p: &'a PotentialSpec,
    verts: &'a [Vec<f64>],
    along: &'a [f64],
    total: f64,
}

impl ArclengthPath<'_> {
    fn point(&self, s: f64) -> Vec<f64> {
        point_at(self.verts, self.along, s)
    }

    fn speed(&self, s: f64) -> Result<f64> {
        if s <= 0.0 || s >= self.total {
            return Ok(0.0);
        }
        self.p.eval_k(&self.point(s))
    }

    /// `(t, phi)` samples from `t = 0` until `gamma_0(phi)` is within `eps_well` of `target`.
    fn integrate(&self, h: f64, target: &[f64], opts: &ReparamOptions) -> Result<Vec<(f64, f64)>> {
        let mut phi = 0.5 * self.total;
        let mut out = vec![(0.0, phi)];
        for step in 1..=opts.max_steps {
            if distance(&self.point(phi), target) <= opts.eps_well {
                return Ok(out);
            }
            let k1 = self.speed(phi)?;
            let k2 = self.speed(phi + 0.5 * h * k1)?;
            let k3 = self.speed(phi + 0.5 * h * k2)?;
            let k4 = self.speed(phi + h * k3)?;
            let next = phi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if next > self.total || next < 0.0 {
                return Err(Error::StepTooLarge { halvings: 0 });
            }
            phi = next;
            out.push((step as f64 * h, phi));
        }
        if distance(&self.point(phi), target) <= opts.eps_well {
            return Ok(out);
        }
        Err(Error::StiViolationAlongPath {
            point: self.point(phi),
        })
    }
}

/// A declared well, or an interior vertex with `K = 0`, away from both endpoints stops the
/// reparametrization: `phi` cannot cross it.
fn check_interior_zeros(
    path: &ArclengthPath,
    start: &[f64],
    end: &[f64],
    eps_well: f64,
) -> Result<()> {
    let away = |x: &[f64]| distance(x, start) > eps_well && distance(x, end) > eps_well;
    for w in path.p.wells() {
        if away(w) && distance_to_polyline(w, path.verts) <= eps_well {
            return Err(Error::StiViolationAlongPath { point: w.clone() });
        }
    }
    for v in &path.verts[1..path.verts.len() - 1] {
        if away(v) && path.p.eval_k(v)? == 0.0 {
            return Err(Error::StiViolationAlongPath { point: v.clone() });
        }
    }
    if path.speed(0.5 * path.total)? == 0.0 {
        return Err(Error::StiViolationAlongPath {
            point: path.point(0.5 * path.total),
        });
    }
    Ok(())
}

fn distance_to_polyline(x: &[f64], verts: &[Vec<f64>]) -> f64 {
    if verts.len() == 1 {
        return distance(x, &verts[0]);
    }
    verts
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
            let len2: f64 = d.iter().map(|v| v * v).sum();
            let theta = if len2 > 0.0 {
                let proj: f64 = x
                    .iter()
                    .zip(&w[0])
                    .zip(&d)
                    .map(|((a, b), c)| (a - b) * c)
                    .sum();
                (proj / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q: Vec<f64> = w[0].iter().zip(&d).map(|(a, c)| a + theta * c).collect();
            distance(x, &q)
        })
        .fold(f64::INFINITY, f64::min)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn velocities(times: &[f64], points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    if n < 2 {
        return vec![vec![0.0; points.first().map_or(0, |p| p.len())]; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            let dt = times[b] - times[a];
            points[b]
                .iter()
                .zip(&points[a])
                .map(|(x, y)| (x - y) / dt)
                .collect()
        })
        .collect()
}

/// Trapezoid rule in time of `|gamma'|^2 / 2 + W(gamma)` with finite-difference velocities.
pub fn energy(p: &PotentialSpec, times: &[f64], points: &[Vec<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Ok(0.0);
    }
    let density = velocities(times, points)
        .iter()
        .zip(points)
        .map(|(v, x)| Ok(0.5 * norm(v).powi(2) + p.eval_w(x)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(times
        .windows(2)
        .zip(density.windows(2))
        .map(|(t, e)| 0.5 * (e[0] + e[1]) * (t[1] - t[0]))
        .sum())
}

/// `max_i | |gamma'(t_i)|^2 / 2 - W(gamma(t_i)) |` over interior samples.
pub fn equipartition_residual(
    p: &PotentialSpec,
    times: &[f64],
    points: &[Vec<f64>],
) -> Result<f64> {
    if points.len() < 3 {
        return Ok(0.0);
    }
    let vel = velocities(times, points);
    let mut worst = 0.0f64;
    for i in 1..points.len() - 1 {
        let r = (0.5 * norm(&vel[i]).powi(2) - p.eval_w(&points[i])?).abs();
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Action of the piecewise-linear interpolant of `(times, points)`: kinetic energy exact on
/// every segment, potential by the trapezoid rule.
///
/// Segment by segment `|e|^2 / (2 dt) + dt (W_a + W_b) / 2 >= |e| sqrt(W_a + W_b)
/// >= |e| (K_a + K_b) / 2`, so this never falls below the trapezoid weighted length.
pub fn polyline_action(p: &PotentialSpec, times: &[f64], points: &[Vec<f64>]) -> Result<f64> {
    let ws = points
        .iter()
        .map(|x| p.eval_w(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(times
        .windows(2)
        .zip(points.windows(2))
        .zip(ws.windows(2))
        .map(|((t, x), w)| {
            let dt = t[1] - t[0];
            let len = distance(&x[0], &x[1]);
            0.5 * len * len / dt + dt * 0.5 * (w[0] + w[1])
        })
        .sum())
}

/// `E_W(orbit) + tail - L_K(geodesic)`: nonnegative by Young's inequality, zero for an exact
/// equipartitioned reparametrization.
pub fn young_gap(o: &HeteroclinicOrbit, g: &GeodesicResult) -> f64 {
    o.energy + o.tail_bound - g.lk_value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::Curve;
    use crate::geodesic::{refine_geodesic, RefineOptions};

    fn double_well() -> PotentialSpec {
        PotentialSpec::new(
            1,
            "0.5*(1-x1^2)^2",
            vec![vec![-1.0], vec![1.0]],
            1e-12,
            None,
        )
        .unwrap()
    }

    fn geodesic_of(p: &PotentialSpec, verts: Vec<Vec<f64>>) -> GeodesicResult {
        let curve = Curve::from_vertices(verts).unwrap();
        let lk = crate::metric::curve_length_k(p, &curve).unwrap();
        GeodesicResult {
            curve,
            lk_value: lk,
            initial_lk: lk,
            iterations: 0,
            converged: true,
            history: vec![lk],
            self_intersections: 0,
            dk_estimate: None,
        }
    }

    fn double_well_geodesic() -> GeodesicResult {
        let p = double_well();
        let seed = Curve::from_vertices(vec![vec![-1.0], vec![1.0]]).unwrap();
        refine_geodesic(&p, &seed, &RefineOptions::default()).unwrap()
    }

    #[test]
    fn double_well_orbit_is_tanh() {
        let p = double_well();
        let g = double_well_geodesic();
        let o = time_reparametrize(&p, &g, &ReparamOptions::default()).unwrap();
        // gamma(0) sits at the midpoint x = 0, so the orbit is tanh(t) with no shift
        let worst = o
            .times
            .iter()
            .zip(&o.points)
            .map(|(t, x)| (x[0] - t.tanh()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        assert!((o.points[0][0] + 1.0).abs() <= 1e-4);
        assert!((o.points.last().unwrap()[0] - 1.0).abs() <= 1e-4);
        assert!(o.arclength.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn double_well_energy_and_residual() {
        let p = double_well();
        let g = double_well_geodesic();
        let o = time_reparametrize(&p, &g, &ReparamOptions::default()).unwrap();
        // oracle: int sech^4 over R = 4/3 by Simpson on [-20, 20]
        let n = 200_000;
        let h = 40.0 / n as f64;
        let f = |t: f64| 1.0 / t.cosh().powi(4);
        let mut s = f(-20.0) + f(20.0);
        for i in 1..n {
            s += f(-20.0 + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let oracle = s * h / 3.0;
        assert!((oracle - 4.0 / 3.0).abs() < 1e-10);
        assert!((o.energy - oracle).abs() < 2e-3, "{}", o.energy);
        assert!(o.equip_residual < 1e-4, "{}", o.equip_residual);
        assert!(young_gap(&o, &g).abs() < 2e-3);
        // |gamma'| = K(gamma) at interior samples
        let speeds = o.speeds();
        let n = o.points.len();
        for (x, v) in o.points.iter().zip(&speeds).take(n - 1).skip(1) {
            let k = p.eval_k(x).unwrap();
            assert!((v - k).abs() <= 10.0 * o.dt * o.dt + 1e-9);
        }
    }

    #[test]
    fn residual_is_second_order_in_dt() {
        let p = double_well();
        let g = double_well_geodesic();
        let coarse = time_reparametrize(
            &p,
            &g,
            &ReparamOptions {
                dt: 2e-2,
                ..Default::default()
            },
        )
        .unwrap();
        let fine = time_reparametrize(
            &p,
            &g,
            &ReparamOptions {
                dt: 1e-2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            coarse.equip_residual >= 3.0 * fine.equip_residual,
            "{} vs {}",
            coarse.equip_residual,
            fine.equip_residual
        );
    }

    #[test]
    fn exact_tanh_samples_have_small_residual() {
        let p = double_well();
        let dt = 1e-3;
        let times: Vec<f64> = (-5000..=5000).map(|i| i as f64 * dt).collect();
        let points: Vec<Vec<f64>> = times.iter().map(|t| vec![t.tanh()]).collect();
        let r = equipartition_residual(&p, &times, &points).unwrap();
        // Taylor: central difference error <= dt^2 / 6 * max|tanh'''| = dt^2 / 3
        assert!(r < dt * dt / 3.0 + 1e-12 && r < 1e-4, "{r}");
    }

    #[test]
    fn unit_weight_segment() {
        let p = PotentialSpec::new(1, "0.5", vec![vec![0.0]], 1e9, None).unwrap();
        let g = geodesic_of(&p, vec![vec![0.0], vec![3.0]]);
        let opts = ReparamOptions {
            eps_well: 1e-3,
            ..Default::default()
        };
        let o = time_reparametrize(&p, &g, &opts).unwrap();
        for (t, x) in o.times.iter().zip(&o.points) {
            assert!((x[0] - (1.5 + t)).abs() < 1e-9);
        }
        assert!(o.equip_residual < 1e-9);
        let window = o.times.last().unwrap() - o.times[0];
        assert!((o.energy - window).abs() < 1e-9);
        assert!((window - 3.0).abs() < 2e-3);
    }

    #[test]
    fn interior_zero_is_sti_violation() {
        let p = PotentialSpec::new(
            1,
            "0.5*x1^2*(x1^2-1)^2",
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            1e-12,
            None,
        )
        .unwrap();
        let g = geodesic_of(
            &p,
            (0..=200).map(|i| vec![-1.0 + i as f64 / 100.0]).collect(),
        );
        let err = time_reparametrize(&p, &g, &ReparamOptions::default()).unwrap_err();
        assert!(matches!(err, Error::StiViolationAlongPath { .. }), "{err}");
        assert!(err.to_string().contains("STI violation along path"));
    }

    #[test]
    fn undeclared_interior_zero_stalls() {
        // same potential, zero at the origin not declared
        let p = PotentialSpec::new(
            1,
            "0.5*x1^2*(x1^2-1)^2",
            vec![vec![-1.0], vec![1.0]],
            1e-12,
            None,
        )
        .unwrap();
        let g = geodesic_of(&p, vec![vec![-1.0], vec![1.0]]);
        let err = time_reparametrize(&p, &g, &ReparamOptions::default()).unwrap_err();
        assert!(matches!(err, Error::StiViolationAlongPath { .. }));
    }

    #[test]
    fn constant_orbit_at_well() {
        let p = double_well();
        let times = vec![0.0, 0.5, 1.0, 1.5];
        let points = vec![vec![1.0]; 4];
        let o = HeteroclinicOrbit::from_samples(&p, times, points, 1e-4).unwrap();
        assert_eq!(o.energy, 0.0);
        assert_eq!(o.equip_residual, 0.0);
        let g = geodesic_of(&p, vec![vec![1.0]]);
        assert_eq!(young_gap(&o, &g), 0.0);
    }

    #[test]
    fn uniform_time_parametrization_has_positive_gap() {
        let p = double_well();
        let g = double_well_geodesic();
        let n = 2001;
        let total_time = 3.0;
        let times: Vec<f64> = (0..n)
            .map(|i| total_time * i as f64 / (n - 1) as f64)
            .collect();
        let points: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![-1.0 + 2.0 * i as f64 / (n - 1) as f64])
            .collect();
        let o = HeteroclinicOrbit::from_samples(&p, times.clone(), points.clone(), 1e-4).unwrap();
        // brute force: speed 2/3, so E = (2/9) * 3 + (1/v) int W ds = 2/3 + (3/2)(8/15)
        let expected = 2.0 / 3.0 + 1.5 * 8.0 / 15.0;
        assert!((o.energy - expected).abs() < 1e-5, "{}", o.energy);
        assert!(young_gap(&o, &g) > 0.1);
        assert!(polyline_action(&p, &times, &points).unwrap() > g.lk_value);
    }

    #[test]
    fn time_shift_is_exact_for_dyadic_samples() {
        let p = double_well();
        let dt = 1.0 / 1024.0;
        let times: Vec<f64> = (-3000..=3000).map(|i| i as f64 * dt).collect();
        let points: Vec<Vec<f64>> = times.iter().map(|t| vec![t.tanh()]).collect();
        let o = HeteroclinicOrbit::from_samples(&p, times, points, 1e-4).unwrap();
        let s = o.shifted(&p, 4.0).unwrap();
        assert_eq!(o.energy, s.energy);
        assert_eq!(o.equip_residual, s.equip_residual);
    }
}
