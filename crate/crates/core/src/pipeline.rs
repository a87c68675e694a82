//! End-to-end solve: problem file to geodesic, orbit, CSV curves and a JSON report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::geodesic::{refine_estimate, GeodesicResult, RefineOptions};
use crate::metric::{curve_length_k, GridGraph};
use crate::potential::{ConfinementBound, PotentialSpec};
use crate::problem::Problem;
use crate::reparam::{time_reparametrize, young_gap, HeteroclinicOrbit, ReparamOptions};
use crate::sti::{StiReport, WellDistances};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_YOUNG_TOL: f64 = 2e-3;
pub const DEFAULT_EQUIP_TOL: f64 = 1e-4;

/// Vertices of the straight segments used to size the confinement budget.
const BUDGET_SEGMENTS: usize = 1000;

#[derive(Debug, Clone)]
pub enum Resolution {
    /// Same node count on every axis.
    Uniform(usize),
    PerAxis(Vec<usize>),
}

impl Resolution {
    pub fn default_for(dimension: usize) -> Resolution {
        Resolution::Uniform(match dimension {
            1 => 4001,
            2 => 401,
            3 => 61,
            _ => 21,
        })
    }

    fn axes(&self, dimension: usize) -> Result<Vec<usize>> {
        let axes = match self {
            Resolution::Uniform(r) => vec![*r; dimension],
            Resolution::PerAxis(v) if v.len() == dimension => v.clone(),
            Resolution::PerAxis(v) => {
                return Err(Error::Dimension {
                    expected: dimension,
                    got: v.len(),
                })
            }
        };
        if let Some(r) = axes.iter().find(|&&r| r < 2) {
            return Err(Error::Invalid(format!("resolution {r} is below 2")));
        }
        Ok(axes)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Well indices; `None` joins the first and the last declared well.
    pub pair: Option<(usize, usize)>,
    pub resolution: Option<Resolution>,
    pub refine: RefineOptions,
    pub reparam: ReparamOptions,
    pub decompose: bool,
    /// Stop after refinement.
    pub seed_only: bool,
    /// `None` uses the mesh-based default of the STI check.
    pub sti_tol: Option<f64>,
    pub young_tol: f64,
    pub equip_tol: f64,
    /// Where to write CSV curves and `report.json`; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    pub emit_csv: bool,
    pub emit_json: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pair: None,
            resolution: None,
            refine: RefineOptions::default(),
            reparam: ReparamOptions::default(),
            decompose: true,
            seed_only: false,
            sti_tol: None,
            young_tol: DEFAULT_YOUNG_TOL,
            equip_tol: DEFAULT_EQUIP_TOL,
            out_dir: None,
            emit_csv: true,
            emit_json: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemSummary {
    pub dimension: usize,
    pub potential: String,
    pub wells: Vec<Vec<f64>>,
    /// `W` at each declared well.
    pub well_residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainReport {
    /// `domain_box` or `confinement`.
    pub source: &'static str,
    pub bounds: Vec<(f64, f64)>,
    pub confinement_radius: Option<f64>,
    pub budget: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub resolution: Vec<usize>,
    pub nodes: usize,
    pub mesh: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitReport {
    pub samples: usize,
    pub window: (f64, f64),
    pub dt: f64,
    pub eps_well: f64,
    pub energy: f64,
    pub tail_bound: f64,
    pub equip_residual: f64,
    /// `energy + tail_bound - refined_lk`.
    pub young_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentReport {
    pub pair: (usize, usize),
    pub sti: StiReport,
    /// Weighted length of the grid path with its connectors.
    pub dk_grid: f64,
    pub dk_graph: f64,
    pub dk_lower: f64,
    pub dk_upper: f64,
    pub seed_lk: f64,
    pub refined_lk: f64,
    pub iterations: usize,
    pub converged: bool,
    pub descent_monotone: bool,
    pub self_intersections: usize,
    pub vertices: usize,
    pub orbit: Option<OrbitReport>,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub young: f64,
    pub equipartition: f64,
    pub sti: f64,
    pub well: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub grid: Duration,
    pub sti: Duration,
    pub segments: Vec<Duration>,
    pub total: Duration,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub problem: ProblemSummary,
    pub pair: (usize, usize),
    pub domain: DomainReport,
    pub grid: GridReport,
    pub sti: StiReport,
    pub decomposed: bool,
    pub chain: Vec<(usize, usize)>,
    pub segments: Vec<SegmentReport>,
    pub tolerances: Tolerances,
    pub checks: Vec<Check>,
    pub passed: bool,
    /// Wall-clock times; kept out of the JSON so reports are reproducible.
    #[serde(skip)]
    pub timings: Timings,
}

/// Curves behind each segment, for callers that want more than the report.
#[derive(Debug, Clone)]
pub struct SegmentCurves {
    pub geodesic: GeodesicResult,
    pub orbit: Option<HeteroclinicOrbit>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub curves: Vec<SegmentCurves>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Loads `problem_path`, solves and writes the requested outputs.
pub fn run_pipeline(problem_path: &Path, cfg: &RunConfig) -> Result<RunOutput> {
    let problem = Problem::load(problem_path).map_err(|e| e.at_stage("load"))?;
    let out = solve(&problem, cfg)?;
    if let Some(dir) = &cfg.out_dir {
        emit(dir, cfg, &problem.spec, &out).map_err(|e| e.at_stage("emit"))?;
    }
    Ok(out)
}

pub fn solve(problem: &Problem, cfg: &RunConfig) -> Result<RunOutput> {
    let start = Instant::now();
    if !(cfg.reparam.dt > 0.0) || !(cfg.reparam.eps_well > 0.0) {
        return Err(Error::Invalid("dt and eps_well must be positive".into()).at_stage("config"));
    }
    let p = &problem.spec;
    let n_wells = p.wells().len();
    let checked = p.validate_wells().map_err(|e| e.at_stage("validate"))?;
    if n_wells < 2 {
        return Err(Error::Invalid("at least two wells are needed".into()).at_stage("validate"));
    }
    let pair = cfg.pair.unwrap_or((0, n_wells - 1));
    if pair.0 >= n_wells || pair.1 >= n_wells || pair.0 == pair.1 {
        return Err(Error::Invalid(format!(
            "pair ({}, {}) must name two distinct wells out of {n_wells}",
            pair.0, pair.1
        ))
        .at_stage("validate"));
    }

    let domain = domain(problem, pair).map_err(|e| e.at_stage("box"))?;
    let resolution = cfg
        .resolution
        .clone()
        .unwrap_or_else(|| Resolution::default_for(p.dimension()))
        .axes(p.dimension())
        .map_err(|e| e.at_stage("grid"))?;
    let grid = GridGraph::build(p, &domain.bounds, &resolution).map_err(|e| e.at_stage("grid"))?;
    let grid_time = start.elapsed();

    let sti_start = Instant::now();
    let dists = WellDistances::compute(&grid, p.wells()).map_err(|e| e.at_stage("sti"))?;
    let sti = dists
        .report(pair, cfg.sti_tol)
        .map_err(|e| e.at_stage("sti"))?;
    let decomposed = cfg.decompose && !sti.holds();
    let chain = if decomposed {
        dists
            .chain(pair, cfg.sti_tol)
            .map_err(|e| e.at_stage("chain"))?
    } else {
        vec![pair]
    };
    let sti_time = sti_start.elapsed();

    let mut segments = Vec::with_capacity(chain.len());
    let mut curves = Vec::with_capacity(chain.len());
    let mut seg_times = Vec::with_capacity(chain.len());
    for &sub in &chain {
        let seg_start = Instant::now();
        let sub_sti = if sub == pair {
            sti.clone()
        } else {
            dists
                .report(sub, cfg.sti_tol)
                .map_err(|e| e.at_stage("sti"))?
        };
        let (seg, curve) = solve_segment(&grid, sub, sub_sti, cfg)?;
        segments.push(seg);
        curves.push(curve);
        seg_times.push(seg_start.elapsed());
    }

    let tolerances = Tolerances {
        young: cfg.young_tol,
        equipartition: cfg.equip_tol,
        sti: sti.tolerance,
        well: p.well_tolerance(),
    };
    let checks = checks(&sti, decomposed, &segments, &tolerances);
    let passed = checks.iter().all(|c| c.passed);
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        problem: ProblemSummary {
            dimension: p.dimension(),
            potential: p.source().to_string(),
            wells: p.wells().to_vec(),
            well_residuals: checked.iter().map(|c| c.residual).collect(),
        },
        pair,
        domain,
        grid: GridReport {
            resolution,
            nodes: grid.node_count(),
            mesh: grid.mesh(),
        },
        sti,
        decomposed,
        chain,
        segments,
        tolerances,
        checks,
        passed,
        timings: Timings {
            grid: grid_time,
            sti: sti_time,
            segments: seg_times,
            total: start.elapsed(),
        },
    };
    Ok(RunOutput { report, curves })
}

fn solve_segment(
    grid: &GridGraph,
    pair: (usize, usize),
    sti: StiReport,
    cfg: &RunConfig,
) -> Result<(SegmentReport, SegmentCurves)> {
    let p = grid.potential();
    let (x, y) = (&p.wells()[pair.0], &p.wells()[pair.1]);
    let est = grid.dk_upper(x, y).map_err(|e| e.at_stage("dk_upper"))?;
    let (dk_grid, dk_graph, dk_lower, dk_upper) =
        (est.value, est.graph_value, est.lower_bound, est.upper_bound);
    let geodesic = refine_estimate(p, est, &cfg.refine).map_err(|e| e.at_stage("refine"))?;
    let descent_monotone = geodesic.history.windows(2).all(|w| w[1] <= w[0]);
    let orbit = if cfg.seed_only {
        None
    } else {
        Some(time_reparametrize(p, &geodesic, &cfg.reparam).map_err(|e| e.at_stage("reparam"))?)
    };
    let orbit_report = orbit.as_ref().map(|o| OrbitReport {
        samples: o.times.len(),
        window: (o.times[0], *o.times.last().unwrap()),
        dt: o.dt,
        eps_well: o.eps_well,
        energy: o.energy,
        tail_bound: o.tail_bound,
        equip_residual: o.equip_residual,
        young_gap: young_gap(o, &geodesic),
    });
    let csv = cfg.emit_csv.then(|| csv_name(pair, cfg.seed_only));
    let report = SegmentReport {
        pair,
        sti,
        dk_grid,
        dk_graph,
        dk_lower,
        dk_upper,
        seed_lk: geodesic.initial_lk,
        refined_lk: geodesic.lk_value,
        iterations: geodesic.iterations,
        converged: geodesic.converged,
        descent_monotone,
        self_intersections: geodesic.self_intersections,
        vertices: geodesic.curve.len(),
        orbit: orbit_report,
        csv,
    };
    Ok((report, SegmentCurves { geodesic, orbit }))
}

fn csv_name(pair: (usize, usize), seed_only: bool) -> String {
    let kind = if seed_only { "geodesic" } else { "orbit" };
    format!("{kind}_{}_{}.csv", pair.0, pair.1)
}

/// Box from `domain_box` if given, otherwise the bounding box of the wells grown by the
/// confinement radius for the largest straight-segment weighted length between wells.
fn domain(problem: &Problem, pair: (usize, usize)) -> Result<DomainReport> {
    if let Some(bounds) = &problem.domain_box {
        return Ok(DomainReport {
            source: "domain_box",
            bounds: bounds.clone(),
            confinement_radius: None,
            budget: None,
        });
    }
    let p = &problem.spec;
    if p.confinement().is_none() {
        return Err(Error::Invalid(
            "no domain_box and no confinement_k: supply one of them".into(),
        ));
    }
    let budget = straight_budget(p)?;
    let radius = match p.confinement_radius(&p.wells()[pair.0], budget)? {
        ConfinementBound::Radius(r) => r,
        ConfinementBound::UnboundedGuard => {
            return Err(Error::Invalid("confinement radius unavailable".into()))
        }
    };
    let bounds = (0..p.dimension())
        .map(|axis| {
            let coords = p.wells().iter().map(|w| w[axis]);
            let lo = coords.clone().fold(f64::INFINITY, f64::min);
            let hi = coords.fold(f64::NEG_INFINITY, f64::max);
            (lo - radius, hi + radius)
        })
        .collect();
    Ok(DomainReport {
        source: "confinement",
        bounds,
        confinement_radius: Some(radius),
        budget: Some(budget),
    })
}

/// Largest weighted length of a straight segment between two declared wells.
pub fn straight_budget(p: &PotentialSpec) -> Result<f64> {
    let wells = p.wells();
    let mut budget = 0.0f64;
    for i in 0..wells.len() {
        for j in i + 1..wells.len() {
            let verts = (0..=BUDGET_SEGMENTS)
                .map(|s| {
                    let theta = s as f64 / BUDGET_SEGMENTS as f64;
                    wells[i]
                        .iter()
                        .zip(&wells[j])
                        .map(|(a, b)| a + theta * (b - a))
                        .collect()
                })
                .collect();
            budget = budget.max(curve_length_k(p, &Curve::from_vertices(verts)?)?);
        }
    }
    Ok(budget)
}

fn checks(
    sti: &StiReport,
    decomposed: bool,
    segments: &[SegmentReport],
    tol: &Tolerances,
) -> Vec<Check> {
    let mut out = vec![Check {
        name: "sti".into(),
        passed: sti.holds() || decomposed,
    }];
    for s in segments {
        let tag = format!("{}_{}", s.pair.0, s.pair.1);
        out.push(Check {
            name: format!("sti_{tag}"),
            passed: s.sti.holds(),
        });
        out.push(Check {
            name: format!("descent_monotone_{tag}"),
            passed: s.descent_monotone,
        });
        if let Some(o) = &s.orbit {
            out.push(Check {
                name: format!("young_gap_{tag}"),
                passed: o.young_gap.abs() <= tol.young,
            });
            out.push(Check {
                name: format!("equipartition_{tag}"),
                passed: o.equip_residual <= tol.equipartition,
            });
        }
    }
    out
}

/// CSV of an orbit: `t, x1..xn, W, K, speed`.
pub fn orbit_csv(p: &PotentialSpec, o: &HeteroclinicOrbit) -> Result<String> {
    let speeds = o.speeds();
    let mut s = header("t", p.dimension(), true);
    for ((t, x), v) in o.times.iter().zip(&o.points).zip(&speeds) {
        row(&mut s, *t, x, p.eval_w(x)?, p.eval_k(x)?, Some(*v));
    }
    Ok(s)
}

/// CSV of a geodesic polyline: `s, x1..xn, W, K` with `s` the arclength.
pub fn geodesic_csv(p: &PotentialSpec, c: &Curve) -> Result<String> {
    let mut s = header("s", p.dimension(), false);
    for (arc, x) in c.params().iter().zip(c.vertices()) {
        row(&mut s, *arc, x, p.eval_w(x)?, p.eval_k(x)?, None);
    }
    Ok(s)
}

fn header(first: &str, n: usize, speed: bool) -> String {
    let mut s = first.to_string();
    for i in 1..=n {
        let _ = write!(s, ",x{i}");
    }
    s.push_str(",W,K");
    if speed {
        s.push_str(",speed");
    }
    s.push('\n');
    s
}

fn row(s: &mut String, t: f64, x: &[f64], w: f64, k: f64, speed: Option<f64>) {
    let _ = write!(s, "{t}");
    for c in x {
        let _ = write!(s, ",{c}");
    }
    let _ = write!(s, ",{w},{k}");
    if let Some(v) = speed {
        let _ = write!(s, ",{v}");
    }
    s.push('\n');
}

fn emit(dir: &Path, cfg: &RunConfig, p: &PotentialSpec, out: &RunOutput) -> Result<()> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| Error::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    if cfg.emit_csv {
        for (seg, curves) in out.report.segments.iter().zip(&out.curves) {
            let text = match &curves.orbit {
                Some(o) => orbit_csv(p, o)?,
                None => geodesic_csv(p, &curves.geodesic.curve)?,
            };
            let path = dir.join(seg.csv.as_deref().unwrap_or("curve.csv"));
            std::fs::write(&path, text).map_err(io(&path))?;
        }
    }
    if cfg.emit_json {
        let path = dir.join("report.json");
        std::fs::write(&path, out.report.to_json()).map_err(io(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ProblemFile;

    fn problem(json: &str) -> Problem {
        ProblemFile::from_json(json)
            .unwrap()
            .into_problem()
            .unwrap()
    }

    fn double_well() -> Problem {
        problem(
            r#"{"dimension": 1, "potential": "0.5*(1-x1^2)^2", "wells": [[-1], [1]],
                "well_tolerance": 1e-12, "confinement_k": "t"}"#,
        )
    }

    #[test]
    fn double_well_passes() {
        let out = solve(&double_well(), &RunConfig::default()).unwrap();
        let r = &out.report;
        assert!(r.passed, "{:?}", r.checks);
        assert_eq!(r.chain, vec![(0, 1)]);
        assert_eq!(r.domain.source, "confinement");
        let seg = &r.segments[0];
        assert!((seg.dk_grid - 4.0 / 3.0).abs() < 1e-3);
        assert!((seg.refined_lk - 4.0 / 3.0).abs() < 1e-3);
        let o = seg.orbit.as_ref().unwrap();
        assert!((o.energy - 4.0 / 3.0).abs() < 2e-3);
        assert_eq!(o.young_gap, o.energy + o.tail_bound - seg.refined_lk);
    }

    #[test]
    fn tight_triple_well_decomposes() {
        let p = problem(
            r#"{"dimension": 1, "potential": "0.5*x1^2*(x1^2-1)^2", "wells": [[-1], [0], [1]],
                "well_tolerance": 1e-12, "domain_box": [[-2, 2]]}"#,
        );
        let out = solve(&p, &RunConfig::default()).unwrap();
        assert!(out.report.decomposed);
        assert_eq!(out.report.chain, vec![(0, 1), (1, 2)]);
        assert!(out.report.passed, "{:?}", out.report.checks);

        let cfg = RunConfig {
            decompose: false,
            ..Default::default()
        };
        let err = solve(&p, &cfg).unwrap_err();
        assert!(
            matches!(err.root(), Error::StiViolationAlongPath { .. }),
            "{err}"
        );
    }

    #[test]
    fn missing_box_is_an_error() {
        let p = problem(r#"{"dimension": 1, "potential": "(1-x1^2)^2", "wells": [[-1], [1]]}"#);
        let err = solve(&p, &RunConfig::default()).unwrap_err();
        assert!(err.to_string().starts_with("box:"), "{err}");
    }

    #[test]
    fn seed_only_skips_orbit() {
        let cfg = RunConfig {
            seed_only: true,
            ..Default::default()
        };
        let out = solve(&double_well(), &cfg).unwrap();
        assert!(out.report.segments[0].orbit.is_none());
        assert!(out.curves[0].orbit.is_none());
        assert_eq!(
            out.report.segments[0].csv.as_deref(),
            Some("geodesic_0_1.csv")
        );
    }

    #[test]
    fn csv_layout() {
        let out = solve(&double_well(), &RunConfig::default()).unwrap();
        let p = double_well().spec;
        let text = orbit_csv(&p, out.curves[0].orbit.as_ref().unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x1,W,K,speed"));
        let first: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(first.len(), 5);
        assert!(!text.contains('\r'));
        let g = geodesic_csv(&p, &out.curves[0].geodesic.curve).unwrap();
        assert!(g.starts_with("s,x1,W,K\n"));
    }

    #[test]
    fn bad_pair() {
        let cfg = RunConfig {
            pair: Some((0, 0)),
            ..Default::default()
        };
        assert!(solve(&double_well(), &cfg).is_err());
    }
}
