//! Python bindings: the dimensionless parameters, dispersion and symbol
//! analysis, the half-space mode oracle, and whole simulation runs driven by
//! a TOML configuration string.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use evapfront::config::{nondimensionalize, PhysicalParams, RunConfig};
use evapfront::error::SimError;
use evapfront::fields::Params as CoreParams;
use evapfront::modelproblem::{
    flat_front_growth_rate, solve_halfspace_mode, HalfspaceOptions,
};
use evapfront::simulation::run_simulation;
use evapfront::symbol::{
    dispersion_root, eval_symbol as eval_symbol_core, layered_dispersion_root,
    n_parabolicity_scan, newton_polygon as newton_polygon_core, principal_part, SectorSpec,
    SymbolParams,
};

fn to_py_err(e: SimError) -> PyErr {
    match e {
        SimError::InvalidParameter(_) | SimError::SnapshotMismatch(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Dimensionless constants of the front problem.
#[pyclass(name = "Params", from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: CoreParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (alpha, beta, mu, h, omega0 = 1e-3, gamma_diff = 1.0))]
    fn new(alpha: f64, beta: f64, mu: f64, h: f64, omega0: f64, gamma_diff: f64) -> PyResult<Self> {
        let inner = CoreParams {
            alpha,
            beta,
            gamma_diff,
            mu,
            h,
            omega0,
        };
        inner.validate_relaxed().map_err(to_py_err)?;
        Ok(PyParams { inner })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn omega0(&self) -> f64 {
        self.inner.omega0
    }

    #[getter]
    fn gamma_diff(&self) -> f64 {
        self.inner.gamma_diff
    }

    /// Well-posedness margin of the flat state: alpha/H - beta/(1-H)
    /// (for mu > 0).
    fn flat_margin(&self) -> f64 {
        self.inner.mu.signum() * (self.inner.alpha / self.inner.h
            - self.inner.beta / (1.0 - self.inner.h))
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(alpha={}, beta={}, mu={}, h={}, omega0={}, gamma_diff={})",
            self.inner.alpha,
            self.inner.beta,
            self.inner.mu,
            self.inner.h,
            self.inner.omega0,
            self.inner.gamma_diff
        )
    }
}

/// Dimensionless numbers from SI constants. Returns (Params, time units dict).
#[pyfunction]
#[pyo3(signature = (porosity_m, permeability_k, viscosity_w, diffusivity_d, density_w,
                    density_a, gravity_g, p_a, p_c, p_0, nu_star, nu_a, layer_l, level_h))]
#[allow(clippy::too_many_arguments)]
fn nondim(
    py: Python<'_>,
    porosity_m: f64,
    permeability_k: f64,
    viscosity_w: f64,
    diffusivity_d: f64,
    density_w: f64,
    density_a: f64,
    gravity_g: f64,
    p_a: f64,
    p_c: f64,
    p_0: f64,
    nu_star: f64,
    nu_a: f64,
    layer_l: f64,
    level_h: f64,
) -> PyResult<(PyParams, Py<PyAny>)> {
    let phys = PhysicalParams {
        porosity_m,
        permeability_k,
        viscosity_w,
        diffusivity_d,
        density_w,
        density_a,
        gravity_g,
        p_a,
        p_c,
        p_0,
        nu_star,
        nu_a,
        layer_l,
        level_h,
    };
    let (params, units) = nondimensionalize(&phys).map_err(to_py_err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("pressure_unit_s", units.pressure_unit_s)?;
    dict.set_item("diffusion_unit_s", units.diffusion_unit_s)?;
    Ok((PyParams { inner: params }, dict.into_any().unbind()))
}

/// P(lambda, z) for the boundary symbol with coefficients (alpha, beta, c).
#[pyfunction]
fn eval_symbol(
    alpha: f64,
    beta: f64,
    c: Vec<f64>,
    lam: Complex64,
    z: Vec<Complex64>,
) -> PyResult<Complex64> {
    let p = SymbolParams::new(alpha, beta, c);
    eval_symbol_core(&p, lam, &z).map_err(to_py_err)
}

/// gamma-principal part of the symbol (gamma may be float('inf')).
#[pyfunction]
fn symbol_principal_part(
    alpha: f64,
    beta: f64,
    c: Vec<f64>,
    gamma: f64,
    lam: Complex64,
    z: Vec<Complex64>,
) -> PyResult<Complex64> {
    let p = SymbolParams::new(alpha, beta, c);
    principal_part(&p, gamma, lam, &z).map_err(to_py_err)
}

/// Newton polygon vertices and a degeneracy flag.
#[pyfunction]
fn newton_polygon(alpha: f64, beta: f64, c: Vec<f64>) -> (Vec<(f64, f64)>, bool) {
    let p = SymbolParams::new(alpha, beta, c);
    let np = newton_polygon_core(&p);
    (np.vertices, np.degenerate)
}

/// Root of the half-space boundary symbol at z = i k.
/// Returns (lambda, residual, note).
#[pyfunction]
#[pyo3(signature = (alpha, beta, c, k, lambda0 = None))]
fn dispersion(
    alpha: f64,
    beta: f64,
    c: Vec<f64>,
    k: Vec<f64>,
    lambda0: Option<Complex64>,
) -> PyResult<(Complex64, f64, String)> {
    let p = SymbolParams::new(alpha, beta, c);
    let r = dispersion_root(&p, &k, lambda0).map_err(to_py_err)?;
    Ok((r.lambda, r.residual, r.branch_note))
}

/// Root of the finite-layer dispersion relation with interface level h.
#[pyfunction]
fn layered_dispersion(
    alpha: f64,
    beta: f64,
    c: Vec<f64>,
    k: Vec<f64>,
    h: f64,
) -> PyResult<(Complex64, f64, String)> {
    let p = SymbolParams::new(alpha, beta, c);
    let r = layered_dispersion_root(&p, &k, h).map_err(to_py_err)?;
    Ok((r.lambda, r.residual, r.branch_note))
}

/// Growth rate of transverse mode k of the flat front (shooting eigenvalue).
#[pyfunction]
fn flat_growth_rate(params: &PyParams, k: f64) -> PyResult<(Complex64, f64)> {
    let r = flat_front_growth_rate(&params.inner, k).map_err(to_py_err)?;
    Ok((r.lambda, r.residual))
}

/// Parabolicity scan over the widened sectors; returns the report as a dict
/// (parsed from the JSON serialization).
#[pyfunction]
#[pyo3(signature = (alpha, beta, c, delta = 0.1, eta_sector = 0.05, n_radial = 32, n_angular = 64))]
fn parabolicity_scan(
    py: Python<'_>,
    alpha: f64,
    beta: f64,
    c: Vec<f64>,
    delta: f64,
    eta_sector: f64,
    n_radial: usize,
    n_angular: usize,
) -> PyResult<Py<PyAny>> {
    let p = SymbolParams::new(alpha, beta, c);
    let spec = SectorSpec::widened(delta, eta_sector, n_radial, n_angular).map_err(to_py_err)?;
    let report = n_parabolicity_scan(&p, &spec, eta_sector).map_err(to_py_err)?;
    let json = serde_json::to_string(&report)
        .map_err(|e| PyRuntimeError::new_err(format!("report serialize error: {e}")))?;
    let loads = py.import("json")?.getattr("loads")?;
    Ok(loads.call1((json,))?.unbind())
}

/// Half-space mode evolution under a forcing preset ("ramp" or "impulse").
/// Returns (times, phi_hat) lists.
#[pyfunction]
#[pyo3(signature = (alpha, beta, c, k, forcing = "impulse", t_end = 4.0, dt = 0.01))]
#[allow(clippy::too_many_arguments)]
fn halfspace_mode(
    alpha: f64,
    beta: f64,
    c: Vec<f64>,
    k: Vec<f64>,
    forcing: &str,
    t_end: f64,
    dt: f64,
) -> PyResult<(Vec<f64>, Vec<Complex64>)> {
    let g: Box<dyn Fn(f64) -> Complex64> = match forcing {
        "ramp" => Box::new(|t: f64| Complex64::new(1.0 - (-t).exp(), 0.0)),
        "impulse" => Box::new(|t: f64| Complex64::new(t * (-10.0 * t).exp(), 0.0)),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown forcing preset '{other}'"
            )))
        }
    };
    let sol = solve_halfspace_mode(
        alpha,
        beta,
        &c,
        &k,
        g.as_ref(),
        t_end,
        dt,
        &HalfspaceOptions::default(),
    )
    .map_err(to_py_err)?;
    Ok((sol.times, sol.phi_hat))
}

/// Run a full simulation from a TOML configuration string. Returns the run
/// report and the monitoring series as dicts.
#[pyfunction]
fn simulate(py: Python<'_>, config_toml: &str) -> PyResult<Py<PyAny>> {
    let cfg = RunConfig::from_toml(config_toml).map_err(to_py_err)?;
    let outcome = run_simulation(&cfg, None).map_err(to_py_err)?;
    let json = serde_json::json!({
        "report": outcome.report,
        "series": outcome.records,
    });
    let loads = py.import("json")?.getattr("loads")?;
    Ok(loads.call1((json.to_string(),))?.unbind())
}

#[pymodule]
fn evapfront_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(nondim, m)?)?;
    m.add_function(wrap_pyfunction!(eval_symbol, m)?)?;
    m.add_function(wrap_pyfunction!(symbol_principal_part, m)?)?;
    m.add_function(wrap_pyfunction!(newton_polygon, m)?)?;
    m.add_function(wrap_pyfunction!(dispersion, m)?)?;
    m.add_function(wrap_pyfunction!(layered_dispersion, m)?)?;
    m.add_function(wrap_pyfunction!(flat_growth_rate, m)?)?;
    m.add_function(wrap_pyfunction!(parabolicity_scan, m)?)?;
    m.add_function(wrap_pyfunction!(halfspace_mode, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
