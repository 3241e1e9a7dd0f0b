//! Scenario files and the batch drivers behind the `proxsweep` binary.
//!
//! A scenario file is TOML: top-level `x0`, `T`, `h`, optional `seed`, a
//! `[set]` and `[field]` table, an optional `[[checks]]` list, optional
//! `[constants]` overrides, and an `[output]` table with file names. Unknown
//! keys are rejected; every diagnostic names the offending field.

mod runner;

pub use runner::{run, sweep, RunOptions, RunOutcome, SweepOutcome, SweepRow};

use crate::fields::{Field, Potential};
use crate::integrator::{Scenario, ScenarioError};
use crate::proxsets::{HalfSpace, ProxSet};
use crate::vector::Vector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}:\n{message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario {path}: {message}")]
    Validation { path: PathBuf, message: String },
    #[error("integration failed: {message}")]
    Integration { message: String },
    #[error("check '{name}' could not run: {message}")]
    Check { name: String, message: String },
}

/// Check names the runner understands, in canonical execution order.
pub const KNOWN_CHECKS: &[&str] = &[
    "velocity_field_bound",
    "two_solution",
    "velocity_decay",
    "right_derivative",
    "right_continuity",
    "liminf_lower",
    "difference_quotient",
    "energy_identity",
    "dissipation",
    "convex_minimization",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub x0: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub set: SetSpec,
    pub field: FieldSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckSpec>,
    #[serde(default, skip_serializing_if = "ConstantsSpec::is_empty")]
    pub constants: ConstantsSpec,
    #[serde(default, skip_serializing_if = "OutputSpec::is_default")]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpec {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub faces: Option<Vec<FaceSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<SetSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prox_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_term: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_dissipation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_check: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
}

impl ConstantsSpec {
    fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

impl OutputSpec {
    fn is_default(&self) -> bool {
        self == &Self::default()
    }

    pub fn trajectory_name(&self) -> &str {
        self.trajectory.as_deref().unwrap_or("trajectory.csv")
    }

    pub fn report_name(&self) -> &str {
        self.report.as_deref().unwrap_or("report.json")
    }
}

/// A parsed file together with the validated problem it describes and the
/// content digest that names it in reports.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub doc: ScenarioDoc,
    pub scenario: Scenario,
    pub digest: String,
}

fn first_stray(present: &[(&'static str, bool)], allowed: &[&str]) -> Option<&'static str> {
    present.iter().find(|(n, p)| *p && !allowed.contains(n)).map(|(n, _)| *n)
}

fn req<'a, T>(opt: &'a Option<T>, section: &str, field: &str, kind: &str) -> Result<&'a T, String> {
    opt.as_ref().ok_or_else(|| format!("[{section}] kind '{kind}' requires field '{field}'"))
}

fn vector(values: &[f64], what: &str) -> Result<Vector, String> {
    Vector::new(values.to_vec()).map_err(|e| format!("{what}: {e}"))
}

impl SetSpec {
    pub fn build(&self) -> Result<ProxSet, String> {
        let present = [
            ("dim", self.dim.is_some()),
            ("normal", self.normal.is_some()),
            ("offset", self.offset.is_some()),
            ("lower", self.lower.is_some()),
            ("upper", self.upper.is_some()),
            ("center", self.center.is_some()),
            ("radius", self.radius.is_some()),
            ("faces", self.faces.is_some()),
            ("members", self.members.is_some()),
        ];
        let kind = self.kind.as_str();
        let allowed: &[&str] = match kind {
            "whole_space" => &["dim"],
            "half_space" => &["normal", "offset"],
            "box" => &["lower", "upper"],
            "ball" | "ball_complement" => &["center", "radius"],
            "polytope" => &["faces"],
            "disjoint_union" => &["members"],
            other => {
                return Err(format!(
                    "[set] unknown kind '{other}'; expected one of whole_space, half_space, \
                     box, ball, ball_complement, polytope, disjoint_union"
                ))
            }
        };
        if let Some(stray) = first_stray(&present, allowed) {
            return Err(format!("[set] field '{stray}' does not apply to kind '{kind}'"));
        }
        let set = match kind {
            "whole_space" => ProxSet::whole_space(*req(&self.dim, "set", "dim", kind)?),
            "half_space" => ProxSet::half_space(
                vector(req(&self.normal, "set", "normal", kind)?, "[set] normal")?,
                *req(&self.offset, "set", "offset", kind)?,
            ),
            "box" => ProxSet::axis_box(
                req(&self.lower, "set", "lower", kind)?.clone(),
                req(&self.upper, "set", "upper", kind)?.clone(),
            ),
            "ball" | "ball_complement" => {
                let center = vector(req(&self.center, "set", "center", kind)?, "[set] center")?;
                let radius = *req(&self.radius, "set", "radius", kind)?;
                if kind == "ball" {
                    ProxSet::ball(center, radius)
                } else {
                    ProxSet::ball_complement(center, radius)
                }
            }
            "polytope" => {
                let mut faces = Vec::new();
                for (i, f) in req(&self.faces, "set", "faces", kind)?.iter().enumerate() {
                    let n = vector(&f.normal, &format!("[set] faces[{i}].normal"))?;
                    faces.push(
                        HalfSpace::new(n, f.offset)
                            .map_err(|e| format!("[set] faces[{i}]: {e}"))?,
                    );
                }
                ProxSet::polytope(faces)
            }
            "disjoint_union" => {
                let mut members = Vec::new();
                for (i, m) in req(&self.members, "set", "members", kind)?.iter().enumerate() {
                    members.push(m.build().map_err(|e| format!("members[{i}] {e}"))?);
                }
                ProxSet::disjoint_union(members)
            }
            _ => unreachable!("kind filtered above"),
        }
        .map_err(|e| format!("[set] {e}"))?;
        match self.prox_r {
            None => Ok(set),
            Some(r) => set.with_prox_r(r).map_err(|e| format!("[set] prox_r: {e}")),
        }
    }
}

impl FieldSpec {
    pub fn build(&self) -> Result<Field, String> {
        let present = [
            ("value", self.value.is_some()),
            ("matrix", self.matrix.is_some()),
            ("offset", self.offset.is_some()),
            ("lipschitz_k", self.lipschitz_k.is_some()),
            ("linear_term", self.linear_term.is_some()),
            ("coefficients", self.coefficients.is_some()),
        ];
        let kind = self.kind.as_str();
        let allowed: &[&str] = match kind {
            "constant" => &["value"],
            "linear" => &["matrix", "offset", "lipschitz_k"],
            "quadratic_descent" => &["matrix", "linear_term"],
            "polynomial_descent" => &["coefficients"],
            other => {
                return Err(format!(
                    "[field] unknown kind '{other}'; expected one of constant, linear, \
                     quadratic_descent, polynomial_descent"
                ))
            }
        };
        if let Some(stray) = first_stray(&present, allowed) {
            return Err(format!("[field] field '{stray}' does not apply to kind '{kind}'"));
        }
        match kind {
            "constant" => {
                let v = vector(req(&self.value, "field", "value", kind)?, "[field] value")?;
                Ok(Field::constant(v))
            }
            "linear" => {
                let matrix = req(&self.matrix, "field", "matrix", kind)?.clone();
                let n = matrix.len();
                let offset = match &self.offset {
                    Some(o) => vector(o, "[field] offset")?,
                    None => Vector::zeros(n),
                };
                Field::linear(matrix, offset, self.lipschitz_k).map_err(|e| format!("[field] {e}"))
            }
            "quadratic_descent" => {
                let matrix = req(&self.matrix, "field", "matrix", kind)?.clone();
                let n = matrix.len();
                let lin = match &self.linear_term {
                    Some(q) => vector(q, "[field] linear_term")?,
                    None => Vector::zeros(n),
                };
                let p = Potential::quadratic(matrix, lin).map_err(|e| format!("[field] {e}"))?;
                Ok(Field::neg_gradient(p))
            }
            "polynomial_descent" => {
                let coeffs = req(&self.coefficients, "field", "coefficients", kind)?.clone();
                let p =
                    Potential::separable_polynomial(coeffs).map_err(|e| format!("[field] {e}"))?;
                Ok(Field::neg_gradient(p))
            }
            _ => unreachable!("kind filtered above"),
        }
    }
}

/// Canonical serialization of a parsed document; digest input and the
/// round-trip surface.
pub fn doc_to_toml(doc: &ScenarioDoc) -> Result<String, CliError> {
    toml::to_string(doc).map_err(|e| CliError::Parse {
        path: PathBuf::from("<serialized>"),
        message: e.to_string(),
    })
}

fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn invalid(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Validation { path: path.to_path_buf(), message: message.into() }
}

/// Validate a parsed document into a runnable problem.
pub fn load_doc(doc: ScenarioDoc, origin: &Path) -> Result<LoadedScenario, CliError> {
    for c in &doc.checks {
        if !KNOWN_CHECKS.contains(&c.name.as_str()) {
            return Err(invalid(
                origin,
                format!("unknown check '{}'; expected one of {}", c.name, KNOWN_CHECKS.join(", ")),
            ));
        }
        if let Some(s) = c.slack {
            if !(s >= 0.0) {
                return Err(invalid(origin, format!("check '{}': slack must be >= 0", c.name)));
            }
        }
        if let Some(a) = c.abs_tol {
            if !(a >= 0.0) {
                return Err(invalid(origin, format!("check '{}': abs_tol must be >= 0", c.name)));
            }
        }
    }
    for (name, value) in [
        ("c_energy", doc.constants.c_energy),
        ("c_dissipation", doc.constants.c_dissipation),
        ("c_check", doc.constants.c_check),
        ("l_v", doc.constants.l_v),
    ] {
        if let Some(v) = value {
            if !(v >= 0.0) {
                return Err(invalid(origin, format!("[constants] {name} must be >= 0")));
            }
        }
    }
    if let Some(s) = doc.constants.stop_tol {
        if !(s > 0.0) {
            return Err(invalid(origin, "[constants] stop_tol must be > 0"));
        }
    }
    let set = doc.set.build().map_err(|m| invalid(origin, m))?;
    let field = doc.field.build().map_err(|m| invalid(origin, m))?;
    let x0 = Vector::new(doc.x0.clone()).map_err(|e| invalid(origin, format!("x0: {e}")))?;
    let scenario = Scenario::new(set, field, x0, doc.horizon, doc.h).map_err(|e| {
        let message = match &e {
            ScenarioError::InfeasibleStart { .. } => format!("x0 is not in C ({e})"),
            ScenarioError::StepTooLarge { .. } => format!("h violates step safety: {e}"),
            ScenarioError::NonConformingGrid { .. } => format!("T and h: {e}"),
            _ => e.to_string(),
        };
        invalid(origin, message)
    })?;
    let digest = sha256_hex(&doc_to_toml(&doc)?);
    Ok(LoadedScenario { doc, scenario, digest })
}

/// Read, parse, and validate a scenario file.
pub fn parse_scenario(path: &Path) -> Result<LoadedScenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let doc: ScenarioDoc = toml::from_str(&text)
        .map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    load_doc(doc, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
x0 = [1.0]
T = 2.0
h = 1e-3

[set]
kind = "half_space"
normal = [-1.0]
offset = 0.0

[field]
kind = "constant"
value = [-1.0]
"#;

    fn parse_str(text: &str) -> Result<LoadedScenario, CliError> {
        let doc: ScenarioDoc = toml::from_str(text).map_err(|e| CliError::Parse {
            path: PathBuf::from("<test>"),
            message: e.to_string(),
        })?;
        load_doc(doc, Path::new("<test>"))
    }

    #[test]
    fn minimal_file_parses_to_a_scenario() {
        let loaded = parse_str(MINIMAL).unwrap();
        assert_eq!(loaded.scenario.n_steps(), 2000);
        assert_eq!(loaded.scenario.set().kind_name(), "half_space");
        assert_eq!(loaded.digest.len(), 64);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = MINIMAL.replace("offset = 0.0", "offset = 0.0\nbogus = 1.0");
        let err = parse_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"), "diagnostic should name the key: {msg}");
    }

    #[test]
    fn infeasible_start_names_x0() {
        let text = MINIMAL.replace("x0 = [1.0]", "x0 = [-1.0]");
        let err = parse_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x0 is not in C"), "{msg}");
    }

    #[test]
    fn step_safety_violation_names_h_magnitude_and_prox_r() {
        let text = r#"
x0 = [2.0, 0.5]
T = 1.8
h = 0.9

[set]
kind = "ball_complement"
center = [0.0, 0.0]
radius = 1.0

[field]
kind = "constant"
value = [-1.0, 0.0]
"#;
        let err = parse_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("step safety"), "{msg}");
        assert!(msg.contains("9.000e-1"), "step value: {msg}");
        assert!(msg.contains("magnitude"), "field magnitude: {msg}");
        assert!(msg.contains("prox constant"), "prox constant: {msg}");
    }

    #[test]
    fn unknown_check_names_are_rejected() {
        let text = format!("{MINIMAL}\n[[checks]]\nname = \"energy_ideniity\"\n");
        let err = parse_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("energy_ideniity"), "{msg}");
        assert!(msg.contains("energy_identity"), "should list valid names: {msg}");
    }

    #[test]
    fn stray_fields_are_rejected_per_kind() {
        let text = MINIMAL.replace("offset = 0.0", "offset = 0.0\nradius = 1.0");
        let err = parse_str(&text).unwrap_err();
        assert!(err.to_string().contains("'radius' does not apply"), "{err}");
        let text = MINIMAL.replace("value = [-1.0]", "value = [-1.0]\nlipschitz_k = 2.0");
        let err = parse_str(&text).unwrap_err();
        assert!(err.to_string().contains("'lipschitz_k' does not apply"), "{err}");
    }

    #[test]
    fn union_and_polytope_specs_build() {
        let text = r#"
x0 = [2.5]
T = 1.0
h = 1e-3
seed = 7

[set]
kind = "disjoint_union"
members = [
  { kind = "box", lower = [0.0], upper = [1.0] },
  { kind = "box", lower = [2.0], upper = [3.0] },
]

[field]
kind = "quadratic_descent"
matrix = [[1.0]]
"#;
        let loaded = parse_str(text).unwrap();
        assert_eq!(loaded.scenario.set().prox_r(), 0.5);

        let text = r#"
x0 = [0.1, 0.1]
T = 1.0
h = 1e-3

[set]
kind = "polytope"
faces = [
  { normal = [-1.0, 0.0], offset = 0.0 },
  { normal = [0.0, -1.0], offset = 0.0 },
  { normal = [1.0, 1.0], offset = 1.0 },
]

[field]
kind = "constant"
value = [1.0, 0.5]
"#;
        let loaded = parse_str(text).unwrap();
        assert!(loaded.scenario.set().is_convex());
    }

    #[test]
    fn round_trip_preserves_document_and_digest() {
        let text = format!(
            "{MINIMAL}\n[[checks]]\nname = \"velocity_field_bound\"\nslack = 0.02\n\n\
             [constants]\nc_check = 3.5\n\n[output]\ntrajectory = \"t.csv\"\n"
        );
        let doc: ScenarioDoc = toml::from_str(&text).unwrap();
        let first = load_doc(doc.clone(), Path::new("<test>")).unwrap();
        let serialized = doc_to_toml(&doc).unwrap();
        let reparsed: ScenarioDoc = toml::from_str(&serialized).unwrap();
        assert_eq!(doc, reparsed);
        let second = load_doc(reparsed, Path::new("<test>")).unwrap();
        assert_eq!(first.digest, second.digest);
        assert_eq!(first.scenario.n_steps(), second.scenario.n_steps());
    }

    #[test]
    fn digest_ignores_formatting_but_not_content() {
        let spaced = MINIMAL.replace("T = 2.0", "T    = 2.0  # horizon");
        let a = parse_str(MINIMAL).unwrap().digest;
        let b = parse_str(&spaced).unwrap().digest;
        assert_eq!(a, b, "formatting and comments must not change the digest");
        let c = parse_str(&MINIMAL.replace("T = 2.0", "T = 4.0")).unwrap().digest;
        assert_ne!(a, c);
    }

    #[test]
    fn infinite_box_bounds_parse() {
        let text = r#"
x0 = [1.0]
T = 1.0
h = 1e-3

[set]
kind = "box"
lower = [0.0]
upper = [inf]

[field]
kind = "constant"
value = [1.0]
"#;
        let loaded = parse_str(text).unwrap();
        assert!(loaded.scenario.set().contains(&Vector::new(vec![1e9]).unwrap(), 1e-9).unwrap());
        // The digest must survive serialization of the infinity.
        let round = doc_to_toml(&loaded.doc).unwrap();
        let re: ScenarioDoc = toml::from_str(&round).unwrap();
        assert_eq!(re, loaded.doc);
    }
}
