//! Problem documents: a stochastic program written as JSON or TOML.
//!
//! A document either names a built-in problem (`desk = "QUAD2"`) or spells the
//! problem out with `region`, `scenarios`, `cost` and `constants`. Matrices are
//! lists of rows.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::desk;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{CostModel, DeclaredConstants, FeasibleRegion, ScenarioSpace, StochasticProgram};
use crate::sqqp::SqqpProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionDoc {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `{x : A x ≤ b}`; `diameter` overrides the bounding-box diameter.
    Polyhedron {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diameter: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    /// For `sqqp` costs each atom is `e(ξ)` followed by the rows of `C(ξ)`.
    pub atoms: Vec<Vec<f64>>,
    /// Omitted means equiprobable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqqpDoc {
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    /// Recourse matrix D (m2 × n2), full row rank.
    pub recourse: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostDoc {
    /// `½‖x − ξ‖²`
    SquaredDistance,
    /// `⟨ξ, x⟩`
    Linear,
    Sqqp(SqqpDoc),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsDoc {
    pub lipschitz: f64,
    pub holder: f64,
    pub bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recourse_lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemDoc {
    Desk {
        desk: String,
    },
    Inline {
        name: String,
        region: RegionDoc,
        scenarios: ScenarioDoc,
        cost: CostDoc,
        constants: ConstantsDoc,
    },
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    linalg::from_rows(rows).ok_or_else(|| Error::InvalidInput(format!("{what}: ragged or empty matrix")))
}

impl ProblemDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("problem document: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("problem document: {e}")))
    }

    /// Reads `.toml` as TOML and anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml(&text)
        } else {
            Self::from_json(&text)
        }
    }

    pub fn build(&self) -> Result<StochasticProgram> {
        let (name, region, scenarios, cost, constants) = match self {
            ProblemDoc::Desk { desk } => {
                return match desk.to_ascii_uppercase().as_str() {
                    "QUAD2" => Ok(desk::quad2()),
                    "SQQP2" => desk::sqqp2(),
                    other => Err(Error::InvalidInput(format!("unknown desk problem {other}"))),
                }
            }
            ProblemDoc::Inline {
                name,
                region,
                scenarios,
                cost,
                constants,
            } => (name, region, scenarios, cost, constants),
        };
        let region = match region {
            RegionDoc::Box { lower, upper } => {
                FeasibleRegion::cube(Vector::from_column_slice(lower), Vector::from_column_slice(upper))?
            }
            RegionDoc::Polyhedron { a, b, diameter } => {
                let r = FeasibleRegion::polyhedron(matrix(a, "region.a")?, Vector::from_column_slice(b))?;
                match diameter {
                    Some(d) => r.with_diameter(*d),
                    None => r,
                }
            }
        };
        let atoms: Vec<Vector> = scenarios.atoms.iter().map(|a| Vector::from_column_slice(a)).collect();
        let scenario_space = match &scenarios.probabilities {
            Some(p) => ScenarioSpace::finite(atoms, p.clone())?,
            None => ScenarioSpace::equiprobable(atoms)?,
        };
        let cost = match cost {
            CostDoc::SquaredDistance => {
                if scenario_space.dim() != region.dim() {
                    return Err(Error::InvalidInput("atoms must match the decision dimension".into()));
                }
                CostModel::SquaredDistance
            }
            CostDoc::Linear => {
                if scenario_space.dim() != region.dim() {
                    return Err(Error::InvalidInput("atoms must match the decision dimension".into()));
                }
                CostModel::Linear
            }
            CostDoc::Sqqp(s) => {
                let prob = SqqpProblem::new(
                    matrix(&s.q, "cost.q")?,
                    Vector::from_column_slice(&s.c),
                    matrix(&s.p, "cost.p")?,
                    Vector::from_column_slice(&s.d),
                    matrix(&s.recourse, "cost.recourse")?,
                )?;
                if prob.n1() != region.dim() || scenario_space.dim() != prob.scenario_dim() {
                    return Err(Error::InvalidInput("SQQP dimensions disagree with region or atoms".into()));
                }
                CostModel::Sqqp(Arc::new(prob))
            }
        };
        if !(constants.holder > 0.0 && constants.holder <= 1.0) {
            return Err(Error::InvalidInput("Hölder exponent must lie in (0, 1]".into()));
        }
        if constants.lipschitz < 0.0 || constants.bound < 0.0 || constants.recourse_lipschitz.is_some_and(|l| l < 0.0) {
            return Err(Error::InvalidInput("declared constants must be nonnegative".into()));
        }
        Ok(StochasticProgram {
            name: name.clone(),
            region,
            scenarios: scenario_space,
            cost,
            constants: DeclaredConstants {
                lipschitz: constants.lipschitz,
                holder: constants.holder,
                bound: constants.bound,
                recourse_lipschitz: constants.recourse_lipschitz,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::true_objective;

    const QUAD_TOML: &str = r#"
name = "two atoms"
[region]
kind = "box"
lower = [0.0, 0.0]
upper = [1.0, 1.0]
[scenarios]
atoms = [[0.0, 0.0], [1.0, 1.0]]
[cost]
type = "squared_distance"
[constants]
lipschitz = 1.4142135623730951
holder = 1.0
bound = 1.0
"#;

    #[test]
    fn toml_document_builds() {
        let p = ProblemDoc::from_toml(QUAD_TOML).unwrap().build().unwrap();
        let f = true_objective(&p, &Vector::from_element(2, 0.5)).unwrap();
        assert!((f - 0.25).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let doc = ProblemDoc::from_toml(QUAD_TOML).unwrap();
        let text = serde_json::to_string(&doc).unwrap();
        assert_eq!(ProblemDoc::from_json(&text).unwrap(), doc);
    }

    #[test]
    fn desk_reference() {
        let doc = ProblemDoc::from_json(r#"{"desk": "sqqp2"}"#).unwrap();
        assert_eq!(doc.build().unwrap().name, "SQQP2");
        assert!(ProblemDoc::from_json(r#"{"desk": "nope"}"#).unwrap().build().is_err());
    }

    #[test]
    fn sqqp_document_checks_dimensions() {
        let good = r#"{
            "name": "one scenario",
            "region": {"kind": "box", "lower": [0, 0], "upper": [1, 1]},
            "scenarios": {"atoms": [[1.0, 0.5, -0.5]]},
            "cost": {"type": "sqqp", "q": [[1, 0], [0, 1]], "c": [0, 0],
                     "p": [[1, 0], [0, 1]], "d": [0, 0], "recourse": [[1, -1]]},
            "constants": {"lipschitz": 5, "holder": 1, "bound": 5, "recourse_lipschitz": 2}
        }"#;
        let p = ProblemDoc::from_json(good).unwrap().build().unwrap();
        assert!(p.sqqp().is_some());
        let bad = good.replace("[[1.0, 0.5, -0.5]]", "[[1.0, 0.5]]");
        assert!(ProblemDoc::from_json(&bad).unwrap().build().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = QUAD_TOML.replace("holder = 1.0", "holder = 1.0\nextra = 2");
        assert!(ProblemDoc::from_toml(&text).is_err());
    }
}
