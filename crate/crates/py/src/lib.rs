//! Python bindings: attention validation, spectral diagnostics, landscapes,
//! length-controlled evaluation and the batch pipeline.

use nalgebra::DMatrix;
use pyo3::prelude::*;
use pyo3::types::PyModule;

use transport_core::evalmetrics::{self, EvalSample};
use transport_core::io::json;
use transport_core::io::matrix_file::{self, Dtype};
use transport_core::io::pipeline::{
    self, error_kind, BinsOption, DiagnoseOptions, EvalOptions, LandscapeOptions, LandscapeSource,
};
use transport_core::io::Manifest;
use transport_core::{landscape, spectral, transport, CanonicalSpec, MaskKind};

pyo3::create_exception!(attn_transport, TransportError, pyo3::exceptions::PyValueError);

fn to_py(e: transport_core::Error) -> PyErr {
    TransportError::new_err(format!("{}: {e}", error_kind(&e)))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Validated non-negative attention matrix.
#[pyclass(name = "AttentionMatrix", module = "attn_transport", frozen)]
pub struct PyAttention {
    inner: transport::AttentionMatrix,
}

#[pymethods]
impl PyAttention {
    #[new]
    #[pyo3(signature = (rows, mask = "none"))]
    fn new(rows: Vec<Vec<f64>>, mask: &str) -> PyResult<Self> {
        let mask: MaskKind = mask.parse().map_err(to_py)?;
        let inner = transport::validate_rows(&rows, mask).map_err(to_py)?;
        Ok(PyAttention { inner })
    }

    /// Canonical matrix from `uniform:N`, `window:W:N`, `diagonal:N` or `exp:ALPHA:N`.
    #[staticmethod]
    fn canonical(spec: &str) -> PyResult<Self> {
        let spec: CanonicalSpec = spec.parse().map_err(to_py)?;
        let inner = landscape::generate(&spec).map_err(to_py)?;
        Ok(PyAttention { inner })
    }

    /// Reads an ATM1 file, or a CSV grid when the extension is `.csv`.
    #[staticmethod]
    #[pyo3(signature = (path, mask = "none"))]
    fn read(path: &str, mask: &str) -> PyResult<Self> {
        let mask: MaskKind = mask.parse().map_err(to_py)?;
        let values = matrix_file::read_matrix(path).map_err(to_py)?;
        let inner = transport::validate(values, mask).map_err(to_py)?;
        Ok(PyAttention { inner })
    }

    #[pyo3(signature = (path, dtype = "f64"))]
    fn write(&self, path: &str, dtype: &str) -> PyResult<()> {
        let dtype = match dtype {
            "f64" => Dtype::F64,
            "f32" => Dtype::F32,
            other => return Err(TransportError::new_err(format!("unknown dtype `{other}`"))),
        };
        matrix_file::write_matrix(path, self.inner.values(), dtype).map_err(to_py)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_queries(), self.inner.n_keys())
    }

    #[getter]
    fn mask(&self) -> String {
        self.inner.mask().to_string()
    }

    #[getter]
    fn is_row_stochastic(&self) -> bool {
        self.inner.is_row_stochastic()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.values())
    }

    fn transpose(&self) -> Self {
        PyAttention {
            inner: self.inner.transpose(),
        }
    }

    fn normalize(&self) -> PyResult<PyOperator> {
        let inner = transport::normalize(&self.inner).map_err(to_py)?;
        Ok(PyOperator { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "AttentionMatrix(shape=({}, {}), mask='{}')",
            self.inner.n_queries(),
            self.inner.n_keys(),
            self.inner.mask()
        )
    }
}

/// Degree-normalized transport operator `D_Q^-1/2 B D_K^-1/2`.
#[pyclass(name = "TransportOperator", module = "attn_transport", frozen)]
pub struct PyOperator {
    inner: transport::TransportOperator,
}

#[pymethods]
impl PyOperator {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    #[getter]
    fn d_q(&self) -> Vec<f64> {
        self.inner.degrees().d_q.to_vec()
    }

    #[getter]
    fn d_k(&self) -> Vec<f64> {
        self.inner.degrees().d_k.to_vec()
    }

    #[getter]
    fn d_bar(&self) -> f64 {
        self.inner.degrees().d_bar
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.degrees().kappa
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.values())
    }

    #[pyo3(signature = (eps = 0.0))]
    fn asymmetry_g(&self, eps: f64) -> PyResult<f64> {
        transport::asymmetry_g(&self.inner, eps).map_err(to_py)
    }

    #[pyo3(signature = (k = 2, dense_limit = spectral::DEFAULT_DENSE_LIMIT))]
    fn svd(&self, py: Python<'_>, k: usize, dense_limit: usize) -> PyResult<PySpectrum> {
        let s = py
            .detach(|| spectral::svd_summary(&self.inner, k, dense_limit))
            .map_err(to_py)?;
        Ok(PySpectrum {
            singular_values: s.singular_values.clone(),
            sigma2: s.sigma2,
            gap: s.gap,
            left2: s.left2.clone(),
            right2: s.right2.clone(),
            method: format!("{:?}", s.method).to_lowercase(),
        })
    }
}

#[pyclass(name = "SpectralSummary", module = "attn_transport", frozen, get_all)]
pub struct PySpectrum {
    singular_values: Vec<f64>,
    sigma2: f64,
    gap: f64,
    left2: Vec<f64>,
    right2: Vec<f64>,
    method: String,
}

#[pyclass(name = "Cut", module = "attn_transport", frozen, get_all)]
pub struct PyCut {
    phi: f64,
    members: Vec<bool>,
    cut_weight: f64,
    vol_s: f64,
    vol_comp: f64,
}

impl From<spectral::CutResult> for PyCut {
    fn from(c: spectral::CutResult) -> Self {
        PyCut {
            phi: c.phi,
            members: c.members,
            cut_weight: c.cut_weight,
            vol_s: c.vol_s,
            vol_comp: c.vol_comp,
        }
    }
}

#[pyclass(name = "LandscapeCurve", module = "attn_transport", frozen, get_all)]
pub struct PyCurve {
    n: usize,
    t: Vec<usize>,
    phi: Vec<f64>,
    t_star: usize,
    phi_min: f64,
    floor_pierced: bool,
    disconnected: bool,
}

impl From<landscape::LandscapeCurve> for PyCurve {
    fn from(c: landscape::LandscapeCurve) -> Self {
        PyCurve {
            n: c.n,
            t: c.t_values(),
            phi: c.phi_values(),
            t_star: c.t_star,
            phi_min: c.phi_min,
            floor_pierced: c.floor_pierced,
            disconnected: c.any_disconnected(),
        }
    }
}

/// Sweep estimate of conductance on the bipartite dilation.
#[pyfunction]
fn sweep_conductance(py: Python<'_>, a: &PyAttention) -> PyResult<PyCut> {
    let (_, cut) = py.detach(|| spectral::sweep_conductance(&a.inner)).map_err(to_py)?;
    Ok(cut.into())
}

/// Exact conductance by enumeration (at most 22 vertices).
#[pyfunction]
fn exact_conductance(py: Python<'_>, a: &PyAttention) -> PyResult<PyCut> {
    let (_, cut) = py.detach(|| spectral::exact_conductance(&a.inner)).map_err(to_py)?;
    Ok(cut.into())
}

#[pyfunction]
fn temporal_sweep(a: &PyAttention) -> PyResult<PyCurve> {
    landscape::temporal_sweep(&a.inner).map(Into::into).map_err(to_py)
}

#[pyfunction]
fn closed_form_landscape(n: usize) -> PyResult<PyCurve> {
    landscape::closed_form_landscape(n).map(Into::into).map_err(to_py)
}

#[pyfunction]
fn closed_form_phi_uc(n: usize, t: usize) -> PyResult<f64> {
    landscape::closed_form_phi_uc(n, t).map_err(to_py)
}

fn samples(scores: &[f64], labels: &[u8], lengths: Option<&[u32]>) -> PyResult<Vec<EvalSample>> {
    if scores.len() != labels.len() || lengths.is_some_and(|l| l.len() != scores.len()) {
        return Err(TransportError::new_err("scores, labels and lengths must have equal length"));
    }
    scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&s, &l))| EvalSample::new(s, l, lengths.map_or(1, |x| x[i])).map_err(to_py))
        .collect()
}

#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    evalmetrics::auroc(&samples(&scores, &labels, None)?).map_err(to_py)
}

/// Length-controlled AUROC. Returns `(value, reported, bins, fallback)`.
#[pyfunction]
#[pyo3(signature = (scores, labels, lengths, bins = None))]
fn lc_auroc(
    scores: Vec<f64>,
    labels: Vec<u8>,
    lengths: Vec<u32>,
    bins: Option<usize>,
) -> PyResult<(f64, f64, usize, bool)> {
    let s = samples(&scores, &labels, Some(&lengths))?;
    let r = match bins {
        None => evalmetrics::lc_auroc(&s),
        Some(b) => evalmetrics::lc_auroc_fixed(&s, b),
    }
    .map_err(to_py)?;
    Ok((r.value, r.reported(), r.bins, r.fallback))
}

/// Diagnose every entry of a manifest; returns the JSON report.
#[pyfunction]
#[pyo3(signature = (manifest, eps = pipeline::DEFAULT_EPS, dense_limit = spectral::DEFAULT_DENSE_LIMIT, seed = 0))]
fn run_diagnose(py: Python<'_>, manifest: &str, eps: f64, dense_limit: usize, seed: u64) -> PyResult<String> {
    let m = Manifest::load(manifest).map_err(to_py)?;
    let opts = DiagnoseOptions {
        eps,
        dense_limit,
        drop_zero_degrees: false,
        seed,
    };
    py.detach(|| pipeline::run_diagnose(&m, &opts).and_then(|r| json::to_string(&r)))
        .map_err(to_py)
}

/// Landscape summary for canonical spec strings; returns the JSON report.
#[pyfunction]
#[pyo3(signature = (specs, floor = pipeline::DEFAULT_FLOOR))]
fn run_landscape(py: Python<'_>, specs: Vec<String>, floor: f64) -> PyResult<String> {
    let specs = specs
        .iter()
        .map(|s| s.parse::<CanonicalSpec>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    py.detach(|| {
        pipeline::run_landscape(&LandscapeSource::Specs(specs), &LandscapeOptions::with_floor(floor))
            .and_then(|r| json::to_string(&r))
    })
    .map_err(to_py)
}

/// Evaluate a per-head feature CSV; `bins` is `"auto"` or an integer string.
#[pyfunction]
#[pyo3(signature = (features, bins = "auto", seed = 0, resamples = evalmetrics::DEFAULT_RESAMPLES))]
fn run_eval(py: Python<'_>, features: &str, bins: &str, seed: u64, resamples: usize) -> PyResult<String> {
    let bins: BinsOption = bins.parse().map_err(to_py)?;
    let opts = EvalOptions { bins, seed, resamples };
    py.detach(|| pipeline::run_eval(features, &opts).and_then(|r| json::to_string(&r)))
        .map_err(to_py)
}

#[pymodule]
pub fn attn_transport(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TransportError", m.py().get_type::<TransportError>())?;
    m.add_class::<PyAttention>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyCut>()?;
    m.add_class::<PyCurve>()?;
    m.add_function(wrap_pyfunction!(sweep_conductance, m)?)?;
    m.add_function(wrap_pyfunction!(exact_conductance, m)?)?;
    m.add_function(wrap_pyfunction!(temporal_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_landscape, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_phi_uc, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(lc_auroc, m)?)?;
    m.add_function(wrap_pyfunction!(run_diagnose, m)?)?;
    m.add_function(wrap_pyfunction!(run_landscape, m)?)?;
    m.add_function(wrap_pyfunction!(run_eval, m)?)?;
    Ok(())
}
