use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sigmafluid::catalog::{case_names, load_case, parse_axis_override, registry_json};
use sigmafluid::energy_stress::parse_rational;
use sigmafluid::reductions::{self, AnsatzFamily, IntegratorOptions};
use sigmafluid::verify::{verify_case, Equation, VerifyOptions};

fn err(e: sigmafluid::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_loads<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Names of the registered cases.
#[pyfunction]
fn list_cases() -> Vec<&'static str> {
    case_names()
}

/// Registry summary: parameters, charts, equation of state and flags per case.
#[pyfunction]
fn registry(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    json_loads(py, &registry_json().map_err(err)?.to_string())
}

fn options(
    equations: Option<Vec<String>>,
    grid: Option<Vec<String>>,
    tolerances: Option<Vec<(String, f64)>>,
    force_fd: bool,
    fd_step: Option<f64>,
    threads: Option<usize>,
) -> PyResult<VerifyOptions> {
    let equations = equations
        .unwrap_or_default()
        .iter()
        .map(|e| Equation::parse(e))
        .collect::<sigmafluid::Result<Vec<_>>>()
        .map_err(err)?;
    let tolerances = tolerances
        .unwrap_or_default()
        .into_iter()
        .map(|(e, t)| Equation::parse(&e).map(|e| (e, t)))
        .collect::<sigmafluid::Result<Vec<_>>>()
        .map_err(err)?;
    let grid = grid
        .unwrap_or_default()
        .iter()
        .map(|g| parse_axis_override(g))
        .collect::<sigmafluid::Result<Vec<_>>>()
        .map_err(err)?;
    Ok(VerifyOptions {
        equations,
        tolerances,
        grid,
        force_fd,
        fd_base: fd_step,
        threads,
    })
}

/// Verify a case; returns the report as a dict, or as CSV text with `csv=True`.
#[pyfunction]
#[pyo3(signature = (case, equations=None, grid=None, tolerances=None, force_fd=false, fd_step=None, threads=None, csv=false))]
#[allow(clippy::too_many_arguments)]
fn verify(
    py: Python<'_>,
    case: &str,
    equations: Option<Vec<String>>,
    grid: Option<Vec<String>>,
    tolerances: Option<Vec<(String, f64)>>,
    force_fd: bool,
    fd_step: Option<f64>,
    threads: Option<usize>,
    csv: bool,
) -> PyResult<Py<PyAny>> {
    let opts = options(equations, grid, tolerances, force_fd, fd_step, threads)?;
    let case = load_case(case).map_err(err)?;
    let report = py.detach(|| verify_case(&case, &opts)).map_err(err)?;
    if csv {
        Ok(report.to_csv().into_pyobject(py)?.into_any().unbind())
    } else {
        Ok(json_loads(py, &report.to_json())?.unbind())
    }
}

/// Cauchy-Green eigenvalues of a case map at a chart point, descending.
#[pyfunction]
fn eigenvalues(case: &str, point: Vec<f64>) -> PyResult<Vec<f64>> {
    let case = load_case(case).map_err(err)?;
    let mut v = case.model.decompose(&point).map_err(err)?.eigenvalues;
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

/// Expected closed-form `(ρ, p, U)` of a case at a chart point.
#[pyfunction]
fn fluid(case: &str, point: Vec<f64>) -> PyResult<(f64, f64, Vec<f64>)> {
    let case = load_case(case).map_err(err)?;
    let s = case.evaluate_expected(&point).map_err(err)?;
    Ok((s.rho, s.p, s.u.to_vec()))
}

/// Closed-form profile of an ansatz family.
#[pyfunction]
#[pyo3(signature = (family, z, c=1.0))]
fn closed_form_profile(family: &str, z: f64, c: f64) -> PyResult<f64> {
    let family = AnsatzFamily::parse(family).map_err(err)?;
    reductions::closed_form_profile(family, z, c).map_err(err)
}

/// Integrate a reduced profile equation and compare with the closed form.
/// Rows are `(z, numeric, closed, abs_error)`.
#[pyfunction]
#[pyo3(signature = (family, k="1", c=1.0, z0=None, z_end=None, samples=81))]
fn cross_validate(
    family: &str,
    k: &str,
    c: f64,
    z0: Option<f64>,
    z_end: Option<f64>,
    samples: usize,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let family = AnsatzFamily::parse(family).map_err(err)?;
    let k = parse_rational(k).map_err(err)?;
    let (lo, hi) = match family {
        AnsatzFamily::MorawetzLog => (-1.0, 2.0),
        _ => (0.1, 0.9),
    };
    let rows = reductions::cross_validate(
        family,
        k,
        c,
        z0.unwrap_or(lo),
        z_end.unwrap_or(hi),
        samples,
        &IntegratorOptions::default(),
    )
    .map_err(err)?;
    Ok(rows.iter().map(|r| (r.z, r.numeric, r.closed, r.error)).collect())
}

#[pymodule]
#[pyo3(name = "sigmafluid")]
fn sigmafluid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(list_cases, m)?)?;
    m.add_function(wrap_pyfunction!(registry, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(fluid, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_profile, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    Ok(())
}
