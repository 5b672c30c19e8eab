//! Python bindings for the core analyses: model construction and parsing,
//! termination probabilities, expected termination times, finiteness
//! classification, divergence certificates, omega-regular model checking,
//! and the sampling estimators.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::IntoPyObjectExt;

use pocan::exptime::PrecisionMode;
use pocan::numeric::{rat, rat_of_f64, rat_to_f64};
use pocan::omega::CheckMode;
use pocan::Config;

#[pyclass(frozen)]
struct Poc {
    inner: pocan::Poc,
}

fn rational(pair: (i64, i64), what: &str) -> PyResult<pocan::numeric::Rat> {
    if pair.1 <= 0 {
        return Err(PyValueError::new_err(format!("{what}: denominator must be positive")));
    }
    Ok(rat(pair.0, pair.1))
}

fn state_of(m: &pocan::Poc, name: &str) -> PyResult<usize> {
    m.state_index(name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown state {name:?}")))
}

#[pymethods]
impl Poc {
    /// Parse the `poc v1` text format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        pocan::parse::parse_poc(text)
            .map(|inner| Poc { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// The nested AND-OR evaluation model; parameters are exact fractions
    /// given as (numerator, denominator) pairs.
    #[staticmethod]
    fn and_or(z: (i64, i64), y: (i64, i64), x_a: (i64, i64), x_o: (i64, i64)) -> PyResult<Self> {
        let m = pocan::model::and_or_model(
            &rational(z, "z")?,
            &rational(y, "y")?,
            &rational(x_a, "x_a")?,
            &rational(x_o, "x_o")?,
        )
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Poc { inner: m })
    }

    /// One-state random walk stepping down with the given probability.
    #[staticmethod]
    fn walk(down: (i64, i64)) -> PyResult<Self> {
        let m = pocan::model::walk_model(&rational(down, "down")?)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Poc { inner: m })
    }

    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    fn state_index(&self, name: &str) -> Option<usize> {
        self.inner.state_index(name)
    }

    fn x_min(&self) -> f64 {
        rat_to_f64(self.inner.x_min())
    }

    fn render(&self) -> String {
        pocan::model::render_poc(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("<Poc with {} states>", self.inner.n_states())
    }
}

#[pyclass(frozen)]
struct Dra {
    inner: pocan::Dra,
}

#[pymethods]
impl Dra {
    /// Parse the `dra v1` text format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        pocan::parse::parse_dra(text)
            .map(|inner| Dra { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    fn __repr__(&self) -> String {
        format!("<Dra with {} states>", self.inner.n_states())
    }
}

fn row(py: Python<'_>, items: Vec<(&str, Py<PyAny>)>) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in items {
        d.set_item(k, v)?;
    }
    Ok(d.into())
}

/// Termination probabilities for every pair with positive value.
#[pyfunction]
#[pyo3(signature = (m, rel_err=1e-6))]
fn termination(py: Python<'_>, m: &Poc, rel_err: f64) -> PyResult<Vec<Py<PyDict>>> {
    if !(rel_err > 0.0 && rel_err < 1.0) {
        return Err(PyValueError::new_err("rel_err must be in (0, 1)"));
    }
    let sol = pocan::newton::solve_termination(&m.inner, rel_err);
    let mut rows = Vec::new();
    for (p, q) in pocan::reach::positive_pairs(&m.inner) {
        rows.push(row(
            py,
            vec![
                ("p", m.inner.name(p).into_py_any(py)?),
                ("q", m.inner.name(q).into_py_any(py)?),
                ("prob", sol.prob(p, q).into_py_any(py)?),
                ("rel_err", rel_err.into_py_any(py)?),
            ],
        )?);
    }
    Ok(rows)
}

/// Expected termination times with finiteness reasons; infinite pairs carry
/// value None.
#[pyfunction]
#[pyo3(signature = (m, abs_err=1e-3))]
fn expected_times(py: Python<'_>, m: &Poc, abs_err: f64) -> PyResult<Py<PyDict>> {
    if !(abs_err > 0.0 && abs_err < 1.0) {
        return Err(PyValueError::new_err("abs_err must be in (0, 1)"));
    }
    let report = pocan::exptime::expected_times(&m.inner, &rat_of_f64(abs_err), PrecisionMode::Adaptive)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let mut rows = Vec::new();
    for &(p, q) in &report.finiteness.pairs {
        let reason = report.finiteness.reason(p, q).expect("classified pair");
        rows.push(row(
            py,
            vec![
                ("p", m.inner.name(p).into_py_any(py)?),
                ("q", m.inner.name(q).into_py_any(py)?),
                ("value", report.value(p, q).into_py_any(py)?),
                ("reason", reason.token().into_py_any(py)?),
            ],
        )?);
    }
    let budget = row(
        py,
        vec![
            ("b_log2", report.budget.b.log2.into_py_any(py)?),
            ("delta_log2", report.budget.delta.log2.into_py_any(py)?),
        ],
    )?;
    row(py, vec![("pairs", rows.into_py_any(py)?), ("budget", budget.into_py_any(py)?)])
}

/// FINITE/INFINITE verdict and reason for every positive-probability pair.
#[pyfunction]
fn classify(py: Python<'_>, m: &Poc) -> PyResult<Vec<Py<PyDict>>> {
    let pairs = pocan::reach::positive_pairs(&m.inner);
    let report = pocan::exptime::classify_finiteness(&m.inner, &pairs);
    let mut rows = Vec::new();
    for &(p, q) in &report.pairs {
        let reason = report.reason(p, q).expect("classified pair");
        rows.push(row(
            py,
            vec![
                ("p", m.inner.name(p).into_py_any(py)?),
                ("q", m.inner.name(q).into_py_any(py)?),
                ("verdict", if reason.is_finite() { "FINITE" } else { "INFINITE" }.into_py_any(py)?),
                ("reason", reason.token().into_py_any(py)?),
            ],
        )?);
    }
    Ok(rows)
}

/// Divergence flag, certified lower bound, and numeric value for one state.
#[pyfunction]
#[pyo3(signature = (m, state, rel_err=1e-6))]
fn diverge(py: Python<'_>, m: &Poc, state: &str, rel_err: f64) -> PyResult<Py<PyDict>> {
    if !(rel_err > 0.0 && rel_err < 1.0) {
        return Err(PyValueError::new_err("rel_err must be in (0, 1)"));
    }
    let p = state_of(&m.inner, state)?;
    let info = pocan::omega::divergence(&m.inner, p)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let (bound_log2, value) = if info.positive {
        let lb = info.lower_bound.as_ref().expect("positive state carries a bound");
        let v = pocan::omega::nonterm_prob(&m.inner, p, &rat_of_f64(rel_err))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        (Some(pocan::numeric::log2_rat(lb)), Some(v))
    } else {
        (None, Some(0.0))
    };
    row(
        py,
        vec![
            ("state", state.into_py_any(py)?),
            ("positive", info.positive.into_py_any(py)?),
            ("lower_bound_log2", bound_log2.into_py_any(py)?),
            ("value", value.into_py_any(py)?),
        ],
    )
}

/// Probability that a run from `state` (at the given counter) satisfies the
/// Rabin condition of `d` over the letters the model emits.
#[pyfunction]
#[pyo3(signature = (m, d, state, counter=0, rel_err=1e-3))]
fn model_check(
    py: Python<'_>,
    m: &Poc,
    d: &Dra,
    state: &str,
    counter: u64,
    rel_err: f64,
) -> PyResult<Py<PyDict>> {
    if !(rel_err > 0.0 && rel_err < 1.0) {
        return Err(PyValueError::new_err("rel_err must be in (0, 1)"));
    }
    let p = state_of(&m.inner, state)?;
    let val = m.inner.valuation();
    let result = pocan::omega::model_check_from(
        &m.inner,
        &val,
        &d.inner,
        Config { state: p, counter },
        &rat_of_f64(rel_err),
        CheckMode::Adaptive,
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    row(
        py,
        vec![
            ("probability", result.probability.into_py_any(py)?),
            ("qualitative", result.qualitative.into_py_any(py)?),
            ("rel_err", result.rel_err.into_py_any(py)?),
            ("product_states", result.product_states.into_py_any(py)?),
        ],
    )
}

/// Monte-Carlo estimate of one termination probability; fully determined by
/// (seed, n, horizon).
#[pyfunction]
fn estimate_termination(
    py: Python<'_>,
    m: &Poc,
    p: &str,
    q: &str,
    n: u64,
    horizon: u64,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    if n == 0 || horizon == 0 {
        return Err(PyValueError::new_err("n and horizon must be at least 1"));
    }
    let pi = state_of(&m.inner, p)?;
    let qi = state_of(&m.inner, q)?;
    let e = pocan::sim::estimate_termination(&m.inner, pi, qi, n, horizon, seed);
    row(
        py,
        vec![
            ("mean", e.mean.into_py_any(py)?),
            ("stderr", e.stderr.into_py_any(py)?),
            ("n", e.n.into_py_any(py)?),
            ("horizon", e.horizon.into_py_any(py)?),
            ("seed", e.seed.into_py_any(py)?),
        ],
    )
}

#[pymodule]
fn pocan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Poc>()?;
    m.add_class::<Dra>()?;
    m.add_function(wrap_pyfunction!(termination, m)?)?;
    m.add_function(wrap_pyfunction!(expected_times, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(diverge, m)?)?;
    m.add_function(wrap_pyfunction!(model_check, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_termination, m)?)?;
    Ok(())
}
