//! Python module `privquad`.
//!
//! Randomized functions take an integer `seed`; the same seed gives the
//! same draws as the Rust API with `privquad::rng::seeded(seed)`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use privquad::audit;
use privquad::channel_ni::{self, SigmaVariant};
use privquad::channel_si::{self, Stage1Mode};
use privquad::density::{self, make_besov_density, BesovSpec};
use privquad::functionals::{self, SmoothFunctional};
use privquad::gof;
use privquad::haar;
use privquad::rng::seeded;
use privquad::Protocol;

fn py_err(e: privquad::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn protocol(name: &str) -> PyResult<Protocol> {
    name.parse().map_err(py_err)
}

/// Piecewise-constant density on `2^R` equal cells of `[0, 1]`.
#[pyclass(name = "DyadicDensity", module = "privquad", skip_from_py_object)]
#[derive(Clone)]
struct PyDensity {
    inner: privquad::DyadicDensity,
}

#[pymethods]
impl PyDensity {
    #[new]
    fn new(cells: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: privquad::DyadicDensity::new(cells).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn uniform(resolution: u32) -> Self {
        Self {
            inner: privquad::DyadicDensity::uniform(resolution),
        }
    }

    /// `1 + δ Σ_m 2^{-m(s+½)} Σ_k ν_k ψ_{mk}` with signs drawn from `seed`.
    #[staticmethod]
    fn besov(s: f64, delta: f64, levels: Vec<u32>, seed: u64) -> PyResult<Self> {
        let spec = BesovSpec::multi_seeded(s, delta, &levels, seed);
        Ok(Self {
            inner: make_besov_density(&spec).map_err(py_err)?,
        })
    }

    #[getter]
    fn resolution(&self) -> u32 {
        self.inner.resolution()
    }

    #[getter]
    fn cells(&self) -> Vec<f64> {
        self.inner.cells().to_vec()
    }

    fn eval(&self, x: f64) -> PyResult<f64> {
        self.inner.eval(x).map_err(py_err)
    }

    fn quad_functional(&self) -> f64 {
        self.inner.quad_functional()
    }

    fn l2_distance(&self, other: &PyDensity) -> f64 {
        self.inner.l2_distance(&other.inner)
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        density::sample(&self.inner, n, &mut seeded(seed))
    }

    /// Haar coefficients in flat order: scaling function first, then `(j, k)` at `2^j + k`.
    fn coefficients(&self, levels: u32) -> Vec<f64> {
        haar::exact_coeffs(&self.inner, levels).into_values()
    }

    /// `Σ_{j ≥ levels} ‖β_j‖²`.
    fn tail_energy(&self, levels: u32) -> f64 {
        haar::tail_energy(&self.inner, levels)
    }

    fn __repr__(&self) -> String {
        format!("DyadicDensity(resolution={})", self.inner.resolution())
    }
}

/// Non-interactive Laplace channel.
#[pyclass(name = "NiConfig", module = "privquad", skip_from_py_object)]
#[derive(Clone)]
struct PyNiConfig {
    inner: channel_ni::NiConfig,
}

#[pymethods]
impl PyNiConfig {
    #[new]
    #[pyo3(signature = (alpha, a, levels, sigma = "normalized"))]
    fn new(alpha: f64, a: f64, levels: u32, sigma: &str) -> PyResult<Self> {
        let variant: SigmaVariant = sigma.parse().map_err(py_err)?;
        Ok(Self {
            inner: channel_ni::NiConfig::with_variant(alpha, a, levels, variant).map_err(py_err)?,
        })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn levels(&self) -> u32 {
        self.inner.levels()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    fn noise_scale(&self, level: i32) -> f64 {
        self.inner.noise_scale(level)
    }

    /// Certified bound on the log-likelihood ratio.
    fn logratio_bound(&self) -> f64 {
        channel_ni::ni_logratio_bound(&self.inner)
    }

    /// Sanitized arrays, one list per datum.
    fn sanitize(&self, sample: Vec<f64>, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let recs = channel_ni::sanitize_sample(&sample, &self.inner, &mut seeded(seed)).map_err(py_err)?;
        Ok(recs.into_iter().map(|r| r.values().to_vec()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "NiConfig(alpha={}, a={}, levels={}, sigma={:.6})",
            self.inner.alpha(),
            self.inner.a(),
            self.inner.levels(),
            self.inner.sigma()
        )
    }
}

/// Result of a privacy audit.
#[pyclass(name = "AuditReport", module = "privquad", get_all)]
struct PyAuditReport {
    channel: String,
    alpha: f64,
    analytic_bound: f64,
    empirical_max: f64,
    worst_ratio: f64,
    samples: usize,
    passed: bool,
}

impl From<audit::AuditReport> for PyAuditReport {
    fn from(r: audit::AuditReport) -> Self {
        Self {
            channel: r.channel,
            alpha: r.alpha,
            analytic_bound: r.analytic_bound,
            empirical_max: r.empirical_max,
            worst_ratio: r.worst_ratio,
            samples: r.samples,
            passed: r.pass,
        }
    }
}

#[pymethods]
impl PyAuditReport {
    fn __repr__(&self) -> String {
        format!(
            "AuditReport(channel={:?}, alpha={}, analytic_bound={}, empirical_max={}, passed={})",
            self.channel, self.alpha, self.analytic_bound, self.empirical_max, self.passed
        )
    }
}

#[pyfunction]
fn select_j_ni(n: usize, alpha: f64, s: f64, a: f64) -> PyResult<u32> {
    channel_ni::select_j_ni(n, alpha, s, a).map_err(py_err)
}

#[pyfunction]
fn select_j_si(n: usize, alpha: f64, s: f64) -> PyResult<u32> {
    channel_si::select_j_si(n, alpha, s).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (levels, a, s, k = 2.0, m = 2.0))]
fn select_tau(levels: u32, a: f64, s: f64, k: f64, m: f64) -> PyResult<f64> {
    channel_si::select_tau(k, m, levels, a, s).map_err(py_err)
}

#[pyfunction]
fn zeta(a: f64) -> PyResult<f64> {
    channel_ni::zeta(a).map_err(py_err)
}

/// U-statistic estimate of `∫ f²` through the non-interactive channel.
#[pyfunction]
fn estimate_ni(sample: Vec<f64>, cfg: &PyNiConfig, seed: u64) -> PyResult<f64> {
    channel_ni::estimate_from_sample(&sample, &cfg.inner, None, &mut seeded(seed)).map_err(py_err)
}

/// Two-stage interactive estimate; the first half of `sample` feeds stage 1.
#[pyfunction]
#[pyo3(signature = (sample, cfg, s, seed, k = 2.0, m = 2.0))]
fn estimate_si(sample: Vec<f64>, cfg: &PyNiConfig, s: f64, seed: u64, k: f64, m: f64) -> PyResult<f64> {
    let si = channel_si::SiConfig::tuned(cfg.inner.clone(), k, m, s)
        .map_err(py_err)?
        .with_stage1(Stage1Mode::PerRecord);
    channel_si::run_si_protocol(&sample, &si, &mut seeded(seed)).map_err(py_err)
}

/// Private estimate of `∫ φ(f)` for `φ` in {"quadratic", "entropy"}.
#[pyfunction]
#[pyo3(signature = (sample, functional, cfg, s, seed, upper = 2.0, lower = 0.5, k = 2.0))]
#[allow(clippy::too_many_arguments)]
fn estimate_functional(
    sample: Vec<f64>,
    functional: &str,
    cfg: &PyNiConfig,
    s: f64,
    seed: u64,
    upper: f64,
    lower: f64,
    k: f64,
) -> PyResult<f64> {
    let phi = match functional {
        "quadratic" => SmoothFunctional::quadratic(),
        "entropy" => SmoothFunctional::entropy(lower).map_err(py_err)?,
        other => return Err(PyValueError::new_err(format!("unknown functional `{other}`"))),
    };
    let fcfg = functionals::FunctionalConfig {
        ni: cfg.inner.clone(),
        upper,
        k,
        s_eff: s,
        stage1: Stage1Mode::PerRecord,
    };
    functionals::integral_functional_estimate(&sample, &phi, &fcfg, &mut seeded(seed))
        .map(|e| e.estimate)
        .map_err(py_err)
}

#[pyfunction]
fn gof_threshold(protocol_name: &str, n: usize, alpha: f64, s: f64, a: f64) -> PyResult<f64> {
    gof::gof_threshold(protocol(protocol_name)?, n, alpha, s, a).map_err(py_err)
}

#[pyfunction]
fn audit_ni(cfg: &PyNiConfig, trials: usize, seed: u64) -> PyResult<PyAuditReport> {
    audit::audit_ni(&cfg.inner, trials, &mut seeded(seed))
        .map(Into::into)
        .map_err(py_err)
}

#[pyfunction]
fn audit_rr(tau: f64, alpha: f64, grid: usize) -> PyResult<PyAuditReport> {
    audit::audit_rr(tau, alpha, grid).map(Into::into).map_err(py_err)
}

#[pymodule]
#[pyo3(name = "privquad")]
pub fn privquad_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDensity>()?;
    m.add_class::<PyNiConfig>()?;
    m.add_class::<PyAuditReport>()?;
    m.add_function(wrap_pyfunction!(select_j_ni, m)?)?;
    m.add_function(wrap_pyfunction!(select_j_si, m)?)?;
    m.add_function(wrap_pyfunction!(select_tau, m)?)?;
    m.add_function(wrap_pyfunction!(zeta, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_ni, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_si, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_functional, m)?)?;
    m.add_function(wrap_pyfunction!(gof_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(audit_ni, m)?)?;
    m.add_function(wrap_pyfunction!(audit_rr, m)?)?;
    Ok(())
}
