//! System definition files.

use std::path::Path;

use liftctl_core::fields::{Monomial, PolyField, Polynomial};
use liftctl_core::flow::DEFAULT_STEP;
use liftctl_core::{AffineSystem, Manifold, Matrix, MetricMode, SteeringOracle, TangentMetric, Vector, VectorField};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "LIFTCTL_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianChoice {
    #[default]
    Analytic,
    Fd,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    Constant {
        value: Vec<f64>,
        #[serde(default)]
        jacobian: JacobianChoice,
    },
    /// Row-major matrix `A` of the field `x ↦ A x`.
    Linear {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        jacobian: JacobianChoice,
    },
    /// One list of monomials per component.
    Polynomial {
        components: Vec<Vec<Monomial>>,
        #[serde(default)]
        jacobian: JacobianChoice,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    LinearGramian { horizon: f64 },
    SphereRotation,
    Search { budget: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDefinition {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub manifold: Manifold,
    pub drift: FieldSpec,
    pub controlled: Vec<FieldSpec>,
    pub bounds: Vec<(f64, f64)>,
    #[serde(default)]
    pub metric: Option<MetricMode>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
}

/// A parsed definition with its system and resolved settings.
pub struct Loaded {
    pub definition: SystemDefinition,
    pub system: AffineSystem,
    pub metric: TangentMetric,
    pub step: f64,
    pub seed: u64,
}

impl FieldSpec {
    fn build(&self, n: usize, path: &str) -> Result<VectorField, CliError> {
        let bad = |msg: String| CliError::Usage(format!("{path}: {msg}"));
        let (field, jac) = match self {
            FieldSpec::Zero => (VectorField::zero(n), JacobianChoice::Analytic),
            FieldSpec::Constant { value, jacobian } => {
                if value.len() != n {
                    return Err(bad(format!("expected {n} components, got {}", value.len())));
                }
                (VectorField::constant(Vector::from_column_slice(value)), *jacobian)
            }
            FieldSpec::Linear { matrix, jacobian } => {
                if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                    return Err(bad(format!("matrix must be {n}x{n}")));
                }
                let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                (VectorField::linear(Matrix::from_row_slice(n, n, &flat)), *jacobian)
            }
            FieldSpec::Polynomial { components, jacobian } => {
                if components.len() != n {
                    return Err(bad(format!("expected {n} components, got {}", components.len())));
                }
                let polys = components
                    .iter()
                    .enumerate()
                    .map(|(i, c)| Polynomial::from_monomials(n, c).map_err(|e| bad(format!("components[{i}]: {e}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                (VectorField::polynomial(PolyField::new(polys)), *jacobian)
            }
        };
        Ok(match jac {
            JacobianChoice::Analytic => field,
            JacobianChoice::Fd => field.with_fd_jacobian(),
        })
    }
}

impl SystemDefinition {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let def: SystemDefinition = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Usage(format!("{origin}: {path}: {inner}"))
        })?;
        if def.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "{origin}: schema_version: unsupported version {} (expected {SCHEMA_VERSION})",
                def.schema_version
            )));
        }
        Ok(def)
    }

    pub fn load(path: &Path) -> Result<Loaded, CliError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{origin}: {e}")))?;
        Self::parse(&text, &origin)?.resolve(&origin)
    }

    pub fn resolve(self, origin: &str) -> Result<Loaded, CliError> {
        if let Manifold::Flat { dim: 0 } = self.manifold {
            return Err(CliError::Usage(format!("{origin}: manifold.dim: must be at least 1")));
        }
        let n = self.manifold.ambient_dim();
        let drift = self.drift.build(n, &format!("{origin}: drift"))?;
        let controlled = self
            .controlled
            .iter()
            .enumerate()
            .map(|(i, f)| f.build(n, &format!("{origin}: controlled[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let system = AffineSystem::new(self.manifold, drift, controlled, self.bounds.clone())
            .map_err(|e| CliError::Usage(format!("{origin}: {e}")))?;
        let metric = match self.metric {
            Some(mode) => TangentMetric::new(self.manifold, mode).map_err(|e| CliError::Usage(format!("{origin}: metric: {e}")))?,
            None => TangentMetric::default_for(self.manifold),
        };
        let step = self.step.unwrap_or(DEFAULT_STEP);
        if !(step > 0.0 && step.is_finite()) {
            return Err(CliError::Usage(format!("{origin}: step: must be positive, got {step}")));
        }
        let seed = match std::env::var(SEED_ENV) {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}: not an unsigned 64-bit integer: {s:?}")))?,
            Err(_) => self.seed,
        };
        Ok(Loaded { definition: self, system, metric, step, seed })
    }
}

impl Loaded {
    pub fn oracle(&self) -> Result<SteeringOracle, CliError> {
        resolve_oracle(self.definition.oracle.as_ref(), &self.system, self.seed)
    }
}

/// The oracle named by `spec`, or the one that fits the system.
pub fn resolve_oracle(spec: Option<&OracleSpec>, sys: &AffineSystem, seed: u64) -> Result<SteeringOracle, CliError> {
    match spec {
        None => Ok(SteeringOracle::for_system(sys, 1.0, seed)),
        Some(OracleSpec::LinearGramian { horizon }) => {
            SteeringOracle::linear_gramian(sys, *horizon).map_err(|e| CliError::Domain(e.to_string()))
        }
        Some(OracleSpec::SphereRotation) => SteeringOracle::sphere_rotation(sys).map_err(|e| CliError::Domain(e.to_string())),
        Some(OracleSpec::Search { budget }) => Ok(SteeringOracle::search(*budget, seed)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLANE: &str = r#"{
        "schema_version": 1,
        "manifold": {"kind": "flat", "dim": 2},
        "drift": {"type": "linear", "matrix": [[0, -1], [1, 0]]},
        "controlled": [{"type": "constant", "value": [0, 1]}],
        "bounds": [[-20, 20]]
    }"#;

    #[test]
    fn parses_linear_definition() {
        let loaded = SystemDefinition::parse(PLANE, "plane").unwrap().resolve("plane").unwrap();
        assert_eq!(loaded.system.channels(), 1);
        assert_eq!(loaded.step, DEFAULT_STEP);
        assert_eq!(loaded.metric.mode(), MetricMode::FlatProduct);
        let x = Vector::from_column_slice(&[1.0, 0.0]);
        assert_eq!(loaded.system.drift().value(&x), Vector::from_column_slice(&[0.0, 1.0]));
    }

    #[test]
    fn diagnostics_name_the_field() {
        let broken = PLANE.replace(r#""value": [0, 1]"#, r#""value": "up""#);
        match SystemDefinition::parse(&broken, "plane") {
            Err(CliError::Usage(msg)) => assert!(msg.contains("controlled[0]"), "{msg}"),
            _ => panic!("expected a usage error"),
        }
        let wrong_dim = PLANE.replace("[[0, -1], [1, 0]]", "[[0, -1, 0], [1, 0, 0]]");
        let err = SystemDefinition::parse(&wrong_dim, "plane").unwrap().resolve("plane").err().unwrap();
        assert!(matches!(err, CliError::Usage(ref m) if m.contains("drift")));
    }

    #[test]
    fn rejects_other_schema_versions() {
        let v2 = PLANE.replace(r#""schema_version": 1"#, r#""schema_version": 2"#);
        assert!(matches!(SystemDefinition::parse(&v2, "plane"), Err(CliError::Usage(_))));
    }

    #[test]
    fn polynomial_fields_parse() {
        let text = r#"{
            "schema_version": 1,
            "manifold": {"kind": "flat", "dim": 2},
            "drift": {"type": "polynomial", "components": [
                [{"coeff": 1.0, "exponents": [0, 2]}],
                [{"coeff": -1.0, "exponents": [1, 0]}]
            ]},
            "controlled": [{"type": "constant", "value": [0, 1], "jacobian": "fd"}],
            "bounds": [[-1, 1]]
        }"#;
        let loaded = SystemDefinition::parse(text, "poly").unwrap().resolve("poly").unwrap();
        let x = Vector::from_column_slice(&[2.0, 3.0]);
        assert_eq!(loaded.system.drift().value(&x), Vector::from_column_slice(&[9.0, -2.0]));
    }
}
