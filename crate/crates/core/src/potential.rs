//! Potentials `W >= 0`, their weight `K = sqrt(2W)`, declared wells and the confinement radius.

use crate::error::{Error, Result};
use crate::expr::{Expr, Variables};

/// Absolute tolerance on `W` at a declared well when none is given.
pub const DEFAULT_WELL_TOLERANCE: f64 = 1e-9;

/// Largest radius searched when inverting the confinement integral.
pub const DEFAULT_MAX_RADIUS: f64 = 1e6;

/// Relative tolerance of the bisection that inverts the confinement integral.
const RADIUS_REL_TOL: f64 = 1e-6;

/// Trapezoid panels per cell of the geometric table.
const PANELS_PER_CELL: usize = 256;

#[derive(Debug, Clone)]
pub struct PotentialSpec {
    dimension: usize,
    source: String,
    expression: Expr,
    wells: Vec<Vec<f64>>,
    well_tolerance: f64,
    confinement: Option<Expr>,
}

impl PotentialSpec {
    pub fn new(
        dimension: usize,
        potential: &str,
        wells: Vec<Vec<f64>>,
        well_tolerance: f64,
        confinement: Option<&str>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Invalid("dimension must be positive".into()));
        }
        if !(well_tolerance >= 0.0 && well_tolerance.is_finite()) {
            return Err(Error::Invalid(format!(
                "well tolerance must be a nonnegative number, got {well_tolerance}"
            )));
        }
        if wells.is_empty() {
            return Err(Error::Invalid("at least one well must be declared".into()));
        }
        for w in &wells {
            check_dim(dimension, w)?;
            if w.iter().any(|c| !c.is_finite()) {
                return Err(Error::Invalid(format!(
                    "well {w:?} has non-finite coordinates"
                )));
            }
        }
        let expression =
            Expr::parse(potential, Variables::Coordinates(dimension)).map_err(|source| {
                Error::Parse {
                    what: "potential",
                    source,
                }
            })?;
        let confinement = confinement
            .map(|src| {
                Expr::parse(src, Variables::Scalar).map_err(|source| Error::Parse {
                    what: "confinement minorant",
                    source,
                })
            })
            .transpose()?;
        Ok(PotentialSpec {
            dimension,
            source: potential.to_string(),
            expression,
            wells,
            well_tolerance,
            confinement,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expression(&self) -> &Expr {
        &self.expression
    }

    pub fn wells(&self) -> &[Vec<f64>] {
        &self.wells
    }

    pub fn well_tolerance(&self) -> f64 {
        self.well_tolerance
    }

    pub fn confinement(&self) -> Option<&Expr> {
        self.confinement.as_ref()
    }

    /// `W(x)`. A negative value is an error, never clamped.
    pub fn eval_w(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dimension, x)?;
        let value = self.expression.eval(x)?;
        if value < 0.0 {
            return Err(Error::NegativePotential {
                point: x.to_vec(),
                value,
            });
        }
        Ok(value)
    }

    /// `K(x) = sqrt(2 W(x))`; exactly zero iff `W(x)` is.
    pub fn eval_k(&self, x: &[f64]) -> Result<f64> {
        Ok((2.0 * self.eval_w(x)?).sqrt())
    }

    /// Euclidean distance from `x` to the nearest declared well.
    pub fn distance_to_wells(&self, x: &[f64]) -> f64 {
        self.wells
            .iter()
            .map(|w| distance(w, x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks every declared well against the tolerance and for duplicates.
    pub fn validate_wells(&self) -> Result<Vec<CheckedWell>> {
        for i in 0..self.wells.len() {
            for j in i + 1..self.wells.len() {
                if distance(&self.wells[i], &self.wells[j]) == 0.0 {
                    return Err(Error::DuplicateWell(i, j));
                }
            }
        }
        self.wells
            .iter()
            .enumerate()
            .map(|(index, w)| {
                let residual = self.eval_w(w)?;
                if residual > self.well_tolerance {
                    return Err(Error::WellAboveTolerance {
                        index,
                        point: w.clone(),
                        value: residual,
                        tolerance: self.well_tolerance,
                    });
                }
                Ok(CheckedWell {
                    point: w.clone(),
                    residual,
                })
            })
            .collect()
    }

    /// `k(t)` for the confinement minorant, if one is declared.
    pub fn minorant(&self, t: f64) -> Option<Result<f64>> {
        let k = self.confinement.as_ref()?;
        Some(k.eval(&[t]).map_err(Error::from).and_then(|value| {
            if value < 0.0 {
                Err(Error::NegativeMinorant { t, value })
            } else {
                Ok(value)
            }
        }))
    }

    /// Radius `R` such that every curve leaving `x0` with weighted length at most `budget`
    /// stays within distance `R` of the wells.
    ///
    /// With `h(s) = int_0^s k`, any such curve satisfies
    /// `h(d(gamma(t), wells)) <= h(d(x0, wells)) + budget`, so
    /// `R = h^-1(h(d(x0, wells)) + budget + 1)`.
    pub fn confinement_radius(&self, x0: &[f64], budget: f64) -> Result<ConfinementBound> {
        self.confinement_radius_with(x0, budget, DEFAULT_MAX_RADIUS)
    }

    pub fn confinement_radius_with(
        &self,
        x0: &[f64],
        budget: f64,
        max_radius: f64,
    ) -> Result<ConfinementBound> {
        check_dim(self.dimension, x0)?;
        if self.confinement.is_none() {
            return Ok(ConfinementBound::UnboundedGuard);
        }
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(Error::Invalid(format!(
                "budget must be nonnegative, got {budget}"
            )));
        }
        let k = |t: f64| self.minorant(t).expect("minorant present");
        let table = ConfinementTable::new(&k, max_radius)?;
        let d0 = self.distance_to_wells(x0);
        let target = table.h(&k, d0)? + budget + 1.0;
        table.invert(&k, target).map(ConfinementBound::Radius)
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Dimension {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckedWell {
    pub point: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfinementBound {
    Radius(f64),
    /// No minorant declared; the caller must supply a domain box.
    UnboundedGuard,
}

impl ConfinementBound {
    pub fn radius(self) -> Option<f64> {
        match self {
            ConfinementBound::Radius(r) => Some(r),
            ConfinementBound::UnboundedGuard => None,
        }
    }
}

/// `h(s) = int_0^s k` tabulated on a fixed geometric grid `0, s0, s0 q, s0 q^2, ...`.
///
/// The grid does not depend on the target, which keeps the inverse monotone in the budget.
struct ConfinementTable {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ConfinementTable {
    const FIRST: f64 = 1e-4;
    const RATIO: f64 = 1.25;

    fn new(k: &dyn Fn(f64) -> Result<f64>, max_radius: f64) -> Result<Self> {
        let mut nodes = vec![0.0];
        let mut s = Self::FIRST;
        while s < max_radius {
            nodes.push(s);
            s *= Self::RATIO;
        }
        nodes.push(max_radius);
        let mut cumulative = Vec::with_capacity(nodes.len());
        cumulative.push(0.0);
        for w in nodes.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + trapezoid(k, w[0], w[1])?);
        }
        Ok(ConfinementTable { nodes, cumulative })
    }

    fn cell_of(&self, s: f64) -> usize {
        self.nodes
            .partition_point(|&node| node <= s)
            .saturating_sub(1)
            .min(self.nodes.len() - 2)
    }

    fn h(&self, k: &dyn Fn(f64) -> Result<f64>, s: f64) -> Result<f64> {
        if s > *self.nodes.last().unwrap() {
            return Err(Error::Invalid(format!(
                "distance {s} exceeds the confinement search radius"
            )));
        }
        let j = self.cell_of(s);
        Ok(self.cumulative[j] + trapezoid(k, self.nodes[j], s)?)
    }

    /// Smallest tabulated-then-bisected `s` with `h(s) >= target`.
    fn invert(&self, k: &dyn Fn(f64) -> Result<f64>, target: f64) -> Result<f64> {
        let j = self.cumulative.partition_point(|&c| c < target);
        if j >= self.nodes.len() {
            return Err(Error::ConfinementNotDivergent {
                target,
                max_radius: *self.nodes.last().unwrap(),
            });
        }
        if j == 0 {
            return Ok(0.0);
        }
        let base = self.nodes[j - 1];
        let (mut lo, mut hi) = (base, self.nodes[j]);
        while hi - lo > RADIUS_REL_TOL * hi {
            let mid = 0.5 * (lo + hi);
            if self.cumulative[j - 1] + trapezoid(k, base, mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

fn trapezoid(k: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let h = (b - a) / PANELS_PER_CELL as f64;
    let mut sum = 0.5 * (k(a)? + k(b)?);
    for i in 1..PANELS_PER_CELL {
        sum += k(a + h * i as f64)?;
    }
    Ok(sum * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

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

    #[test]
    fn eval_w_double_well() {
        let p = double_well();
        assert_eq!(p.eval_w(&[0.0]).unwrap(), 0.5);
        assert_eq!(p.eval_w(&[1.0]).unwrap(), 0.0);
        assert_eq!(p.eval_w(&[2.0]).unwrap(), 4.5);
    }

    #[test]
    fn eval_k_double_well() {
        let p = double_well();
        assert_eq!(p.eval_k(&[0.0]).unwrap(), 1.0);
        assert_eq!(p.eval_k(&[-1.0]).unwrap(), 0.0);
        assert_eq!(p.eval_k(&[2.0]).unwrap(), 3.0);
    }

    #[test]
    fn negative_potential_is_an_error() {
        let p = PotentialSpec::new(1, "x1", vec![vec![0.0]], 1e-9, None).unwrap();
        assert!(matches!(
            p.eval_w(&[-0.5]),
            Err(Error::NegativePotential { .. })
        ));
        assert!(matches!(
            p.eval_k(&[-0.5]),
            Err(Error::NegativePotential { .. })
        ));
    }

    #[test]
    fn wrong_dimension() {
        let p = double_well();
        assert!(matches!(
            p.eval_w(&[0.0, 1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn validate_double_well() {
        let checked = double_well().validate_wells().unwrap();
        assert_eq!(checked.len(), 2);
        assert!(checked.iter().all(|w| w.residual == 0.0));
    }

    #[test]
    fn well_above_tolerance() {
        let p = PotentialSpec::new(1, "0.5*(1-x1^2)^2", vec![vec![0.9]], 1e-12, None).unwrap();
        // direct evaluation: 0.5 * (1 - 0.81)^2
        let expected = 0.5 * (1.0f64 - 0.81).powi(2);
        match p.validate_wells() {
            Err(Error::WellAboveTolerance { value, .. }) => {
                assert!((value - expected).abs() < 1e-12);
                assert!((value - 0.018).abs() < 1e-3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn triple_well_factorized() {
        let p = PotentialSpec::new(
            1,
            "0.5*x1^2*(x1^2-1)^2",
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            1e-12,
            None,
        )
        .unwrap();
        assert_eq!(p.validate_wells().unwrap().len(), 3);
    }

    #[test]
    fn duplicate_wells_rejected() {
        let p = PotentialSpec::new(
            1,
            "0.5*(1-x1^2)^2",
            vec![vec![1.0], vec![-1.0], vec![1.0]],
            1e-12,
            None,
        )
        .unwrap();
        assert!(matches!(
            p.validate_wells(),
            Err(Error::DuplicateWell(0, 2))
        ));
    }

    #[test]
    fn construction_errors() {
        assert!(PotentialSpec::new(1, "x1^2", vec![], 1e-9, None).is_err());
        assert!(PotentialSpec::new(2, "x1^2", vec![vec![0.0]], 1e-9, None).is_err());
        assert!(PotentialSpec::new(1, "x1^2 +", vec![vec![0.0]], 1e-9, None).is_err());
        assert!(PotentialSpec::new(1, "x1^2", vec![vec![0.0]], 1e-9, Some("x1")).is_err());
    }

    fn with_minorant(k: &str) -> PotentialSpec {
        PotentialSpec::new(
            1,
            "0.5*(1-x1^2)^2",
            vec![vec![-1.0], vec![1.0]],
            1e-12,
            Some(k),
        )
        .unwrap()
    }

    #[test]
    fn radius_constant_minorant() {
        let r = with_minorant("1")
            .confinement_radius(&[-1.0], 4.0 / 3.0)
            .unwrap()
            .radius()
            .unwrap();
        assert!((r - 7.0 / 3.0).abs() <= 1e-6 * 7.0 / 3.0, "{r}");
    }

    #[test]
    fn radius_linear_minorant() {
        let r = with_minorant("t")
            .confinement_radius(&[-1.0], 4.0 / 3.0)
            .unwrap()
            .radius()
            .unwrap();
        // bisection oracle on the closed form h(s) = s^2/2
        let target = 4.0 / 3.0 + 1.0;
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid / 2.0 >= target {
                hi = mid
            } else {
                lo = mid
            }
        }
        assert!((r - hi).abs() <= 1e-6 * hi, "{r} vs {hi}");
        assert!((r - (14.0f64 / 3.0).sqrt()).abs() < 1e-5);
        assert!((r - 2.160).abs() < 1e-3);
    }

    #[test]
    fn radius_accounts_for_start_distance() {
        // x0 at distance 1 from the wells, k = 1: R = 1 + budget + 1
        let r = with_minorant("1")
            .confinement_radius(&[0.0], 2.0)
            .unwrap()
            .radius()
            .unwrap();
        assert!((r - 4.0).abs() <= 1e-5, "{r}");
    }

    #[test]
    fn radius_without_minorant() {
        assert_eq!(
            double_well().confinement_radius(&[0.0], 1.0).unwrap(),
            ConfinementBound::UnboundedGuard
        );
    }

    #[test]
    fn radius_errors() {
        assert!(matches!(
            with_minorant("-1").confinement_radius(&[-1.0], 1.0),
            Err(Error::NegativeMinorant { .. })
        ));
        assert!(matches!(
            with_minorant("exp(-t)").confinement_radius(&[-1.0], 1.0),
            Err(Error::ConfinementNotDivergent { .. })
        ));
    }

    proptest! {
        #[test]
        fn k_squared_is_twice_w(x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let p = PotentialSpec::new(
                2,
                "0.5*((x1^2-1)^2 + x2^2) + 0.1*sin(x1*x2)^2",
                vec![vec![1.0, 0.0]],
                1e-9,
                None,
            ).unwrap();
            let w = p.eval_w(&[x, y]).unwrap();
            let k = p.eval_k(&[x, y]).unwrap();
            prop_assert!((k * k - 2.0 * w).abs() <= 4.0 * f64::EPSILON * (2.0 * w).max(f64::MIN_POSITIVE));
            prop_assert_eq!(w, p.eval_w(&[x, y]).unwrap());
        }

        #[test]
        fn validate_wells_is_order_independent(perm in Just(vec![0usize, 1, 2]).prop_shuffle()) {
            let wells = [vec![-1.0], vec![0.0], vec![1.0]];
            let p = PotentialSpec::new(1, "0.5*x1^2*(x1^2-1)^2", wells.to_vec(), 1e-12, None).unwrap();
            let base = p.validate_wells().unwrap();
            let shuffled: Vec<_> = perm.iter().map(|&i| wells[i].clone()).collect();
            let q = PotentialSpec::new(1, "0.5*x1^2*(x1^2-1)^2", shuffled, 1e-12, None).unwrap();
            let out = q.validate_wells().unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(&out[k], &base[i]);
            }
        }

        #[test]
        fn radius_monotone_in_budget(a in 0.0f64..50.0, b in 0.0f64..50.0) {
            let p = with_minorant("t/(1+t)");
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let r_lo = p.confinement_radius(&[0.3], lo).unwrap().radius().unwrap();
            let r_hi = p.confinement_radius(&[0.3], hi).unwrap().radius().unwrap();
            prop_assert!(r_lo <= r_hi);
        }
    }
}
