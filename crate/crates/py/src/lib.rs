//! Python bindings.

use std::path::Path;

use liftctl_cli::definition::{resolve_oracle, Loaded, OracleSpec, SystemDefinition};
use liftctl_cli::CliError;
use liftctl_core::flow::check_flow_formula;
use liftctl_core::liealg::{lifted_rank_at, rank_at};
use liftctl_core::planner::{plan_chain, verify_chain, Chain, ChainOptions};
use liftctl_core::{integrate_base, integrate_lifted, systems, AffineSystem, ControlSignal, Error, TangentPoint, TangentMetric, Vector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn core_err(e: Error) -> PyErr {
    match e {
        Error::PlanningBudget { max_legs, partial } => PyRuntimeError::new_err((
            format!("chain planning exceeded {max_legs} legs"),
            serde_json::to_string(&partial).unwrap_or_default(),
        )),
        Error::Steering(_) | Error::UncontrollablePair { .. } | Error::Integration { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn cli_err(e: CliError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<PyObject> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any().unbind(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any().unbind(),
            _ => py.None(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let list = PyList::empty(py);
            for item in a {
                list.append(to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(o) => {
            let dict = PyDict::new(py);
            for (k, item) in o {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn serialized<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

fn control_from(segments: Vec<(f64, Vec<f64>)>, channels: usize) -> PyResult<ControlSignal> {
    let segs = segments
        .into_iter()
        .map(|(duration, value)| liftctl_core::Segment { duration, value })
        .collect();
    ControlSignal::new(channels, segs).map_err(core_err)
}

fn vector(xs: Vec<f64>) -> Vector {
    Vector::from_vec(xs)
}

/// An affine control system with its metric, step, and seed.
#[pyclass(name = "System", module = "liftctl", frozen)]
struct PySystem {
    system: AffineSystem,
    metric: TangentMetric,
    step: f64,
    seed: u64,
    name: Option<String>,
    oracle: Option<OracleSpec>,
}

impl PySystem {
    fn sys(&self) -> &AffineSystem {
        &self.system
    }
}

impl From<Loaded> for PySystem {
    fn from(l: Loaded) -> Self {
        PySystem {
            system: l.system,
            metric: l.metric,
            step: l.step,
            seed: l.seed,
            name: l.definition.name,
            oracle: l.definition.oracle,
        }
    }
}

#[pymethods]
impl PySystem {
    /// Parses a JSON system definition.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let loaded = SystemDefinition::parse(text, "<string>")
            .and_then(|d| d.resolve("<string>"))
            .map_err(cli_err)?;
        Ok(loaded.into())
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(SystemDefinition::load(Path::new(path)).map_err(cli_err)?.into())
    }

    /// One of `line`, `plane_rotation`, `sphere_bilinear`, `sphere_rotations`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        let system = match name {
            "line" => systems::line_integrator(),
            "plane_rotation" => systems::plane_rotation(),
            "sphere_bilinear" => systems::sphere_bilinear(),
            "sphere_rotations" => systems::sphere_rotations(),
            _ => return Err(PyValueError::new_err(format!("unknown builtin system {name:?}"))),
        };
        Ok(PySystem {
            metric: TangentMetric::default_for(*system.manifold()),
            system,
            step: liftctl_core::flow::DEFAULT_STEP,
            seed: 0,
            name: Some(name.to_string()),
            oracle: None,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.sys().manifold().ambient_dim()
    }

    #[getter]
    fn intrinsic_dim(&self) -> usize {
        self.sys().manifold().intrinsic_dim()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.sys().channels()
    }

    #[getter]
    fn step(&self) -> f64 {
        self.step
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.seed
    }

    /// Integrates from `x0` under `control = [(duration, [u...]), ...]`;
    /// with `v0`, integrates the complete lift.
    #[pyo3(signature = (x0, control, v0=None, step=None))]
    fn simulate(
        &self,
        py: Python<'_>,
        x0: Vec<f64>,
        control: Vec<(f64, Vec<f64>)>,
        v0: Option<Vec<f64>>,
        step: Option<f64>,
    ) -> PyResult<PyObject> {
        let u = control_from(control, self.sys().channels())?;
        let h = step.unwrap_or(self.step);
        let traj = match v0 {
            Some(v0) => integrate_lifted(self.sys(), &TangentPoint::new(vector(x0), vector(v0)), &u, h),
            None => integrate_base(self.sys(), &vector(x0), &u, h),
        }
        .map_err(core_err)?;
        serialized(py, &traj)
    }

    #[pyo3(signature = (x0, v0, control, step=None))]
    fn check_flow_formula(&self, x0: Vec<f64>, v0: Vec<f64>, control: Vec<(f64, Vec<f64>)>, step: Option<f64>) -> PyResult<f64> {
        let u = control_from(control, self.sys().channels())?;
        check_flow_formula(self.sys(), &vector(x0), &vector(v0), &u, step.unwrap_or(self.step)).map_err(core_err)
    }

    #[pyo3(signature = (x, depth=4))]
    fn rank(&self, py: Python<'_>, x: Vec<f64>, depth: usize) -> PyResult<PyObject> {
        let r = rank_at(&self.sys().fields(), &vector(x), depth, self.sys().manifold()).map_err(core_err)?;
        serialized(py, &r)
    }

    #[pyo3(signature = (x, v, depth=4))]
    fn lifted_rank(&self, py: Python<'_>, x: Vec<f64>, v: Vec<f64>, depth: usize) -> PyResult<PyObject> {
        let p = TangentPoint::new(vector(x), vector(v));
        let r = lifted_rank_at(&self.sys().fields(), &p, depth, self.sys().manifold()).map_err(core_err)?;
        serialized(py, &r)
    }

    /// Tangent-bundle distance between `(px, pv)` and `(qx, qv)`.
    fn distance(&self, px: Vec<f64>, pv: Vec<f64>, qx: Vec<f64>, qv: Vec<f64>) -> PyResult<f64> {
        let p = TangentPoint::new(vector(px), vector(pv));
        let q = TangentPoint::new(vector(qx), vector(qv));
        self.metric.distance(&p, &q).map_err(core_err)
    }

    /// Plans an (eps, T)-chain and returns it as JSON.
    #[pyo3(signature = (source_x, source_v, target_x, target_v, eps, t_min, max_legs=None))]
    #[allow(clippy::too_many_arguments)]
    fn plan_chain(
        &self,
        source_x: Vec<f64>,
        source_v: Vec<f64>,
        target_x: Vec<f64>,
        target_v: Vec<f64>,
        eps: f64,
        t_min: f64,
        max_legs: Option<usize>,
    ) -> PyResult<String> {
        let oracle = resolve_oracle(self.oracle.as_ref(), self.sys(), self.seed).map_err(cli_err)?;
        let opts = ChainOptions { epsilon: eps, min_duration: t_min, max_legs, step: self.step, seed: self.seed };
        let source = TangentPoint::new(vector(source_x), vector(source_v));
        let target = TangentPoint::new(vector(target_x), vector(target_v));
        let chain = plan_chain(self.sys(), &oracle, &self.metric, &source, &target, &opts).map_err(core_err)?;
        serde_json::to_string(&chain).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Verifies a chain given as JSON; returns the report.
    fn verify_chain(&self, py: Python<'_>, chain_json: &str) -> PyResult<PyObject> {
        let chain: Chain = serde_json::from_str(chain_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        serialized(py, &verify_chain(self.sys(), &self.metric, &chain))
    }

    fn __repr__(&self) -> String {
        let name = self.name.clone().unwrap_or_else(|| "unnamed".into());
        format!("System({name:?}, dim={}, channels={})", self.dim(), self.channels())
    }
}

#[pymodule]
fn liftctl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add("SCHEMA_VERSION", liftctl_cli::definition::SCHEMA_VERSION)?;
    Ok(())
}
