//! Python bindings for `khessian`.
//!
//! Reports cross the boundary as plain dicts and lists; fields stay opaque
//! `Field` objects with accessors.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;

use ::khessian::gallery::{self, ExampleSpec, Variant};
use ::khessian::probe;
use ::khessian::radial::{self, DoublyRadialField, Scheme, SolveOptions};
use ::khessian::suites;
use ::khessian::symmetric::{self, ConeLevel, Spectrum};

fn to_py(e: ::khessian::Error) -> PyErr {
    use ::khessian::Error as E;
    match e {
        E::Numerical(_) | E::Convergence(_) | E::Scheme(_) | E::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn level(k: usize) -> PyResult<ConeLevel> {
    ConeLevel::new(k).map_err(to_py)
}

/// `σ_m` of a list of numbers.
#[pyfunction]
fn sigma(values: Vec<f64>, m: usize) -> f64 {
    symmetric::sigma(&values, m)
}

/// Whether `σ_1, …, σ_k` are all positive.
#[pyfunction]
fn in_cone(values: Vec<f64>, k: usize) -> PyResult<bool> {
    let lam = Spectrum::new(values).map_err(to_py)?;
    Ok(symmetric::in_cone(&lam, level(k)?))
}

/// Both sides of the key inequality, `(lhs, rhs)`.
#[pyfunction]
fn key_inequality_sides(values: Vec<f64>, k: usize, delta: f64, p: usize) -> PyResult<(f64, f64)> {
    let lam = Spectrum::new(values).map_err(to_py)?;
    ::khessian::linearization::key_inequality_sides(&lam, level(k)?, delta, p).map_err(to_py)
}

/// Gallery datum `F = η(t/r^a) r^b` on the real ball.
#[pyclass(name = "ExampleSpec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyExampleSpec {
    inner: ExampleSpec,
}

#[pymethods]
impl PyExampleSpec {
    #[new]
    #[pyo3(signature = (n, k, a, b, variant = "real-ball"))]
    fn new(n: usize, k: usize, a: f64, b: f64, variant: &str) -> PyResult<Self> {
        let variant: Variant = variant.parse().map_err(to_py)?;
        Ok(Self { inner: ExampleSpec::new(n, k, a, b, variant).map_err(to_py)? })
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta()
    }

    #[getter]
    fn irregular_threshold(&self) -> f64 {
        self.inner.irregular_threshold()
    }

    /// `F` at a point of `ℝ^n`.
    fn rhs(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.n {
            return Err(PyValueError::new_err(format!("expected {} coordinates", self.inner.n)));
        }
        Ok(gallery::rhs_real(&x, &self.inner))
    }

    /// `F` in the doubly radial variables.
    fn rhs_radial(&self, r: f64, t: f64) -> f64 {
        self.inner.rhs_radial(r, t)
    }

    #[pyo3(signature = (p_or_gamma = None))]
    fn predict<'py>(&self, py: Python<'py>, p_or_gamma: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &gallery::predict(&self.inner, p_or_gamma).map_err(to_py)?)
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!("ExampleSpec(n={}, k={}, a={}, b={})", s.n, s.k.get(), s.a, s.b)
    }
}

/// Doubly radial grid function on the quarter disk.
#[pyclass(name = "Field", frozen)]
struct PyField {
    inner: DoublyRadialField,
}

#[pymethods]
impl PyField {
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    #[getter]
    fn side(&self) -> usize {
        self.inner.grid.side()
    }

    /// Node values as rows indexed by the `r` index, then the `t` index; zero off the domain.
    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.values().chunks(self.inner.grid.side()).map(<[f64]>::to_vec).collect()
    }

    fn at(&self, i: usize, j: usize) -> PyResult<f64> {
        let side = self.inner.grid.side();
        if i >= side || j >= side {
            return Err(PyValueError::new_err("index outside the grid"));
        }
        Ok(self.inner.at(i, j))
    }

    /// Bilinear interpolation at `(r, t)`.
    fn interpolate(&self, r: f64, t: f64) -> f64 {
        self.inner.interpolate(r, t)
    }

    fn save(&self, dir: std::path::PathBuf) -> PyResult<()> {
        radial::write_field(&dir, &self.inner).map_err(to_py)
    }

    #[staticmethod]
    fn load(dir: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { inner: radial::read_field(&dir).map_err(to_py)? })
    }
}

/// Solves the doubly radial Dirichlet problem; returns `(field, report)`.
///
/// The datum is a gallery `spec`, or the constant `constant` in dimension `n`
/// with level `k` when no spec is given.
#[pyfunction]
#[pyo3(signature = (h, spec = None, constant = None, n = 3, k = 2, tol = 1e-6, max_iter = 500, scheme = "newton"))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    h: f64,
    spec: Option<PyRef<'py, PyExampleSpec>>,
    constant: Option<f64>,
    n: usize,
    k: usize,
    tol: f64,
    max_iter: usize,
    scheme: &str,
) -> PyResult<(PyField, Bound<'py, PyAny>)> {
    let scheme: Scheme = scheme.parse().map_err(to_py)?;
    let opts = SolveOptions { tol, max_iter, scheme, ..Default::default() };
    let result = match (spec, constant) {
        (Some(s), None) => {
            let inner = s.inner.clone();
            py.detach(|| radial::solve(&|r, t| inner.rhs_radial(r, t), inner.n, inner.k, h, &opts))
        }
        (None, Some(c)) => {
            let lvl = level(k)?;
            py.detach(|| radial::solve(&|_, _| c, n, lvl, h, &opts))
        }
        _ => return Err(PyValueError::new_err("give exactly one of `spec` and `constant`")),
    };
    let (field, report) = result.map_err(to_py)?;
    Ok((PyField { inner: field }, to_dict(py, &report)?))
}

/// Monotonicity flags of a field.
#[pyfunction]
fn monotonicity_check<'py>(py: Python<'py>, field: &PyField) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &probe::monotonicity_check(&field.inner))
}

/// Growth fit, dyadic second-difference scan and verdict.
#[pyfunction]
#[pyo3(signature = (field, spec, m_max = 5, levels = 5))]
fn regularity_report<'py>(
    py: Python<'py>,
    field: &PyField,
    spec: &PyExampleSpec,
    m_max: usize,
    levels: usize,
) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &probe::regularity_report(&field.inner, &spec.inner, m_max, levels).map_err(to_py)?)
}

/// Symmetric-function property suite.
#[pyfunction]
#[pyo3(signature = (seed = 42, samples = 1000, max_n = 6))]
fn algebra_suite<'py>(py: Python<'py>, seed: u64, samples: usize, max_n: usize) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(|| suites::algebra_suite(seed, samples, max_n)).map_err(to_py)?;
    to_dict(py, &report)
}

#[pymodule(name = "khessian")]
fn khessian_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyExampleSpec>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(sigma, m)?)?;
    m.add_function(wrap_pyfunction!(in_cone, m)?)?;
    m.add_function(wrap_pyfunction!(key_inequality_sides, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(monotonicity_check, m)?)?;
    m.add_function(wrap_pyfunction!(regularity_report, m)?)?;
    m.add_function(wrap_pyfunction!(algebra_suite, m)?)?;
    Ok(())
}
