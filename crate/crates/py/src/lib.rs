//! Python bindings for the qcurv engine: jet arithmetic, metric specs,
//! pointwise Q-curvature reports, lattice integrals, and the verification
//! suites.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use qcurv::curvature::CurvatureBundle;
use qcurv::quadrature::{self, Budget};
use qcurv::tensor::MetricSpec;
use qcurv::{expr, holographic, models, verify};

fn to_py_err(e: qcurv::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Truncated multivariate Taylor expansion of a scalar at a point.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Jet {
    inner: qcurv::jets::Jet,
}

#[pymethods]
impl Jet {
    #[staticmethod]
    fn constant(c: f64, dim: usize, order: usize) -> Jet {
        Jet {
            inner: qcurv::jets::Jet::constant(c, dim, order),
        }
    }

    #[staticmethod]
    fn variable(i: usize, value: f64, dim: usize, order: usize) -> PyResult<Jet> {
        Ok(Jet {
            inner: qcurv::jets::Jet::variable(i, value, dim, order).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    fn value(&self) -> f64 {
        self.inner.value()
    }

    fn coeff(&self, alpha: Vec<usize>) -> f64 {
        self.inner.coeff(&alpha)
    }

    /// Mixed partial derivative ∂^α at the base point (α!·c_α).
    fn partial(&self, alpha: Vec<usize>) -> PyResult<f64> {
        self.inner.partial(&alpha).map_err(to_py_err)
    }

    fn deriv(&self, axis: usize) -> PyResult<Jet> {
        Ok(Jet {
            inner: self.inner.deriv(axis).map_err(to_py_err)?,
        })
    }

    fn truncated(&self, order: usize) -> PyResult<Jet> {
        Ok(Jet {
            inner: self.inner.truncated(order).map_err(to_py_err)?,
        })
    }

    fn exp(&self) -> Jet {
        Jet {
            inner: self.inner.exp(),
        }
    }

    fn log(&self) -> PyResult<Jet> {
        Ok(Jet {
            inner: self.inner.ln().map_err(to_py_err)?,
        })
    }

    fn sin(&self) -> Jet {
        Jet {
            inner: self.inner.sin(),
        }
    }

    fn cos(&self) -> Jet {
        Jet {
            inner: self.inner.cos(),
        }
    }

    fn sqrt(&self) -> PyResult<Jet> {
        Ok(Jet {
            inner: self.inner.sqrt().map_err(to_py_err)?,
        })
    }

    fn powi(&self, k: i32) -> PyResult<Jet> {
        Ok(Jet {
            inner: self.inner.powi(k).map_err(to_py_err)?,
        })
    }

    fn __add__(&self, other: &Bound<'_, PyAny>) -> PyResult<Jet> {
        let rhs = coerce(other, &self.inner)?;
        Ok(Jet {
            inner: self.inner.try_add(&rhs).map_err(to_py_err)?,
        })
    }

    fn __radd__(&self, other: &Bound<'_, PyAny>) -> PyResult<Jet> {
        self.__add__(other)
    }

    fn __sub__(&self, other: &Bound<'_, PyAny>) -> PyResult<Jet> {
        let rhs = coerce(other, &self.inner)?;
        Ok(Jet {
            inner: self.inner.try_sub(&rhs).map_err(to_py_err)?,
        })
    }

    fn __rsub__(&self, other: &Bound<'_, PyAny>) -> PyResult<Jet> {
        let lhs = coerce(other, &self.inner)?;
        Ok(Jet {
            inner: lhs.try_sub(&self.inner).map_err(to_py_err)?,
        })
    }

    fn __mul__(&self, other: &Bound<'_, PyAny>) -> PyResult<Jet> {
        let rhs = coerce(other, &self.inner)?;
        Ok(Jet {
            inner: self.inner.try_mul(&rhs).map_err(to_py_err)?,
        })
    }

    fn __rmul__(&self, other: &Bound<'_, PyAny>) -> PyResult<Jet> {
        self.__mul__(other)
    }

    fn __truediv__(&self, other: &Bound<'_, PyAny>) -> PyResult<Jet> {
        let rhs = coerce(other, &self.inner)?;
        Ok(Jet {
            inner: self.inner.try_div(&rhs).map_err(to_py_err)?,
        })
    }

    fn __neg__(&self) -> Jet {
        Jet {
            inner: self.inner.scale(-1.0),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Jet(dim={}, order={}, value={})",
            self.inner.dim(),
            self.inner.order(),
            self.inner.value()
        )
    }
}

fn coerce(other: &Bound<'_, PyAny>, like: &qcurv::jets::Jet) -> PyResult<qcurv::jets::Jet> {
    if let Ok(jet) = other.extract::<Jet>() {
        return Ok(jet.inner);
    }
    if let Ok(x) = other.extract::<f64>() {
        return Ok(like.constant_like(x));
    }
    Err(PyValueError::new_err("expected a Jet or a float"))
}

/// Evaluate a scalar expression as a jet about a base point.
#[pyfunction]
#[pyo3(signature = (src, base, order, params = None))]
fn eval_expression(
    src: &str,
    base: Vec<f64>,
    order: usize,
    params: Option<BTreeMap<String, f64>>,
) -> PyResult<Jet> {
    let e = expr::parse(src, base.len()).map_err(to_py_err)?;
    let inner = e
        .eval_jet(&base, order, &params.unwrap_or_default())
        .map_err(to_py_err)?;
    Ok(Jet { inner })
}

/// A chart description of a Riemannian metric.
#[pyclass(frozen)]
struct Metric {
    spec: MetricSpec,
}

#[pymethods]
impl Metric {
    /// Instantiate a builtin family: flat, round_sphere, conf_flat_torus,
    /// or perturbed_flat.
    #[staticmethod]
    #[pyo3(signature = (name, dim, params = None, phi = None))]
    fn builtin(
        name: &str,
        dim: usize,
        params: Option<BTreeMap<String, f64>>,
        phi: Option<&str>,
    ) -> PyResult<Metric> {
        let spec =
            models::builtin(name, dim, &params.unwrap_or_default(), phi).map_err(to_py_err)?;
        Ok(Metric { spec })
    }

    /// Load a metric spec file (TOML schema).
    #[staticmethod]
    fn load(path: &str) -> PyResult<Metric> {
        let spec = MetricSpec::from_path(path).map_err(to_py_err)?;
        let spec = models::resolve(&spec).map_err(to_py_err)?;
        Ok(Metric { spec })
    }

    #[staticmethod]
    fn from_toml(text: &str, label: &str) -> PyResult<Metric> {
        let spec = MetricSpec::from_toml_str(text, label).map_err(to_py_err)?;
        let spec = models::resolve(&spec).map_err(to_py_err)?;
        Ok(Metric { spec })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spec.dim
    }

    #[getter]
    fn label(&self) -> String {
        self.spec.label.clone()
    }

    /// Q-curvature data at a chart point: both Q routes, the volume
    /// coefficients, divergence combinations, and curvature scalars.
    #[pyo3(signature = (point, order = None))]
    fn q_report<'py>(
        &self,
        py: Python<'py>,
        point: Vec<f64>,
        order: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let n = self.spec.dim;
        let order = order.unwrap_or_else(|| holographic::default_order(n));
        let bundle = CurvatureBundle::build(&self.spec, &point, order).map_err(to_py_err)?;
        let data = holographic::evaluate(&bundle).map_err(to_py_err)?;
        let out = PyDict::new(py);
        out.set_item("n", data.n)?;
        out.set_item("q_holographic", data.q_holographic)?;
        out.set_item("q_direct", data.q_direct)?;
        out.set_item("v", data.v.clone())?;
        out.set_item("divergence_term", data.divergence_term)?;
        out.set_item("divergence_dual", data.divergence_dual)?;
        out.set_item("r", bundle.r().value())?;
        out.set_item("j", bundle.j().value())?;
        Ok(out)
    }

    /// Lattice integrals of Q and v^(n) over the declared torus periods.
    #[pyo3(signature = (m, allow_n6 = false))]
    fn total_q<'py>(&self, py: Python<'py>, m: usize, allow_n6: bool) -> PyResult<Bound<'py, PyDict>> {
        let budget = Budget {
            allow_n6,
            ..Budget::default()
        };
        let t = quadrature::total_q(&self.spec, m, &budget).map_err(to_py_err)?;
        let out = PyDict::new(py);
        out.set_item("n", t.n)?;
        out.set_item("m", t.m)?;
        out.set_item("int_q", t.int_q)?;
        out.set_item("int_v_top", t.int_v_top)?;
        out.set_item("int_divergence", t.int_divergence)?;
        out.set_item("int_divergence_dual", t.int_divergence_dual)?;
        out.set_item("volume", t.volume)?;
        out.set_item("global_identity_residual", t.global_identity_residual)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("Metric({})", self.spec.label)
    }
}

/// Run a verification suite; returns a list of check dicts.
#[pyfunction]
#[pyo3(signature = (name, tol_scale = 1.0))]
fn verify_suite<'py>(py: Python<'py>, name: &str, tol_scale: f64) -> PyResult<Bound<'py, PyList>> {
    let suite = verify::Suite::from_name(name).map_err(to_py_err)?;
    let checks = verify::run_suite(suite, tol_scale).map_err(to_py_err)?;
    let list = PyList::empty(py);
    for c in checks {
        let d = PyDict::new(py);
        d.set_item("name", c.name)?;
        d.set_item("residual", c.residual)?;
        d.set_item("tol", c.tol)?;
        d.set_item("pass", c.pass)?;
        list.append(d)?;
    }
    Ok(list)
}

#[pymodule]
fn qcurv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Jet>()?;
    m.add_class::<Metric>()?;
    m.add_function(wrap_pyfunction!(eval_expression, m)?)?;
    m.add_function(wrap_pyfunction!(verify_suite, m)?)?;
    Ok(())
}
