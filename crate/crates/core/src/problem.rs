//! Problem files: JSON, or TOML when the file name ends in `.toml`.
//!
//! ```json
//! {
//!   "dimension": 1,
//!   "potential": "0.5*(1-x1^2)^2",
//!   "wells": [[-1], [1]],
//!   "well_tolerance": 1e-9,
//!   "confinement_k": "t",
//!   "domain_box": [[-2, 2]]
//! }
//! ```
//!
//! `well_tolerance` defaults to `1e-9`; `confinement_k` and `domain_box` are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{PotentialSpec, DEFAULT_WELL_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dimension: usize,
    pub potential: String,
    pub wells: Vec<Vec<f64>>,
    #[serde(default = "default_tolerance")]
    pub well_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confinement_k: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_box: Option<Vec<[f64; 2]>>,
}

fn default_tolerance() -> f64 {
    DEFAULT_WELL_TOLERANCE
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: PotentialSpec,
    pub domain_box: Option<Vec<(f64, f64)>>,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let is_toml = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let parsed = if is_toml {
            Self::from_toml(&text)
        } else {
            Self::from_json(&text)
        };
        parsed.map_err(|message| Error::Format {
            path: path.display().to_string(),
            message,
        })
    }

    /// Parses the expressions and checks shapes; does not evaluate the wells.
    pub fn into_problem(self) -> Result<Problem> {
        let spec = PotentialSpec::new(
            self.dimension,
            &self.potential,
            self.wells,
            self.well_tolerance,
            self.confinement_k.as_deref(),
        )?;
        let domain_box = self
            .domain_box
            .map(|b| {
                if b.len() != self.dimension {
                    return Err(Error::Dimension {
                        expected: self.dimension,
                        got: b.len(),
                    });
                }
                b.iter()
                    .enumerate()
                    .map(|(axis, &[lo, hi])| {
                        if lo.is_finite() && hi.is_finite() && hi > lo {
                            Ok((lo, hi))
                        } else {
                            Err(Error::Invalid(format!(
                                "domain_box axis {} is empty: [{lo}, {hi}]",
                                axis + 1
                            )))
                        }
                    })
                    .collect()
            })
            .transpose()?;
        Ok(Problem { spec, domain_box })
    }
}

impl Problem {
    pub fn load(path: &Path) -> Result<Problem> {
        ProblemFile::read(path)?.into_problem()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_with_defaults() {
        let f = ProblemFile::from_json(
            r#"{"dimension": 1, "potential": "0.5*(1-x1^2)^2", "wells": [[-1], [1]]}"#,
        )
        .unwrap();
        assert_eq!(f.well_tolerance, 1e-9);
        assert!(f.confinement_k.is_none() && f.domain_box.is_none());
        let p = f.into_problem().unwrap();
        assert_eq!(p.spec.wells().len(), 2);
        assert_eq!(p.spec.eval_w(&[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn toml_with_everything() {
        let f = ProblemFile::from_toml(
            r#"
dimension = 2
potential = "0.5*((x1^2-1)^2 + x2^2)"
wells = [[-1.0, 0.0], [1.0, 0.0]]
well_tolerance = 1e-12
confinement_k = "t"
domain_box = [[-2.0, 2.0], [-1.0, 1.0]]
"#,
        )
        .unwrap();
        let p = f.into_problem().unwrap();
        assert_eq!(p.domain_box, Some(vec![(-2.0, 2.0), (-1.0, 1.0)]));
        assert!(p.spec.confinement().is_some());
    }

    #[test]
    fn round_trip_json() {
        let f = ProblemFile {
            dimension: 1,
            potential: "x1^2".into(),
            wells: vec![vec![0.0]],
            well_tolerance: 1e-9,
            confinement_k: Some("t".into()),
            domain_box: Some(vec![[-1.0, 1.0]]),
        };
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(ProblemFile::from_json(&text).unwrap(), f);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ProblemFile::from_json(r#"{"dimension": 1}"#).is_err());
        assert!(ProblemFile::from_json(
            r#"{"dimension": 1, "potential": "x1", "wells": [[0]], "extra": 3}"#
        )
        .is_err());
        let bad_box = ProblemFile::from_json(
            r#"{"dimension": 1, "potential": "x1^2", "wells": [[0]], "domain_box": [[1, -1]]}"#,
        )
        .unwrap();
        assert!(matches!(bad_box.into_problem(), Err(Error::Invalid(_))));
        let parse =
            ProblemFile::from_json(r#"{"dimension": 1, "potential": "x1^2 +", "wells": [[0]]}"#)
                .unwrap();
        let err = parse.into_problem().unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn read_dispatches_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("p.json");
        std::fs::write(
            &json,
            r#"{"dimension": 1, "potential": "x1^2", "wells": [[0]]}"#,
        )
        .unwrap();
        let toml_path = dir.path().join("p.toml");
        std::fs::write(
            &toml_path,
            "dimension = 1\npotential = \"x1^2\"\nwells = [[0.0]]\n",
        )
        .unwrap();
        assert_eq!(Problem::load(&json).unwrap().spec.dimension(), 1);
        assert_eq!(Problem::load(&toml_path).unwrap().spec.dimension(), 1);
        let missing = dir.path().join("nope.json");
        assert!(matches!(Problem::load(&missing), Err(Error::Io { .. })));
    }
}
