//! Python bindings. Structured results cross the boundary as plain dicts and
//! lists built from the core types' serde form.

use msw_core::circuits::{self, Topology};
use msw_core::extraction::{self, DEFAULT_PROMINENCE};
use msw_core::fitting::{guess_baseline, two_stage_fit, FitOptions, TwoStageOptions};
use msw_core::magnetics::{self, CoupledModes, NoiseSpec};
use msw_core::spectra::{
    self, BiasPoint, BiasSweep, ComplexSpectrum, FrequencyGrid, SpectrumKind, TouchstoneFormat,
};
use msw_core::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &impl Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn grid(freqs: Vec<f64>) -> PyResult<FrequencyGrid> {
    FrequencyGrid::new(freqs).map_err(err)
}

fn tuning(gamma_eff: Option<f64>, b_off: Option<f64>) -> PyResult<magnetics::TuningModel> {
    let d = magnetics::TuningModel::default();
    magnetics::TuningModel::new(gamma_eff.unwrap_or(d.gamma_eff), b_off.unwrap_or(d.b_off)).map_err(err)
}

/// One-port spectrum: reflection S11 or impedance Z11 on a frequency grid.
#[pyclass(name = "Spectrum", frozen, from_py_object, module = "mswkit")]
#[derive(Clone)]
pub struct PySpectrum {
    inner: ComplexSpectrum,
}

#[pymethods]
impl PySpectrum {
    #[new]
    #[pyo3(signature = (freqs, values, kind = "reflection", z_ref = spectra::DEFAULT_Z_REF))]
    fn new(freqs: Vec<f64>, values: Vec<Complex64>, kind: &str, z_ref: f64) -> PyResult<Self> {
        let kind = match kind {
            "reflection" | "s" => SpectrumKind::Reflection,
            "impedance" | "z" => SpectrumKind::Impedance,
            other => return Err(err(format!("unknown kind '{other}'"))),
        };
        let inner = ComplexSpectrum::new(grid(freqs)?, values, kind, z_ref).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_touchstone(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: spectra::parse_touchstone(text).map_err(err)?,
        })
    }

    #[pyo3(signature = (format = "ri"))]
    fn to_touchstone(&self, format: &str) -> PyResult<String> {
        let format: TouchstoneFormat = format.parse().map_err(err)?;
        spectra::write_touchstone(&self.inner, format).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    #[getter]
    fn freqs(&self) -> Vec<f64> {
        self.inner.freqs().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<Complex64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind() {
            SpectrumKind::Reflection => "reflection",
            SpectrumKind::Impedance => "impedance",
        }
    }

    #[getter]
    fn z_ref(&self) -> f64 {
        self.inner.z_ref()
    }

    fn to_impedance(&self) -> PyResult<Self> {
        Ok(Self {
            inner: spectra::s_to_z(&self.inner).map_err(err)?,
        })
    }

    fn to_reflection(&self) -> PyResult<Self> {
        Ok(Self {
            inner: spectra::z_to_s(&self.inner).map_err(err)?,
        })
    }

    /// `1 - |S|²` per frequency, as `(freq, loss)` pairs.
    fn tline_loss(&self) -> PyResult<Vec<(f64, f64)>> {
        spectra::tline_loss(&self.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrum(kind={}, points={}, {}..{} Hz)",
            self.kind(),
            self.inner.len(),
            self.inner.grid().start(),
            self.inner.grid().stop()
        )
    }
}

/// Equivalent-circuit model (shorted-line or series-LCR baseline plus MSW branches).
#[pyclass(name = "CircuitModel", frozen, from_py_object, module = "mswkit")]
#[derive(Clone)]
pub struct PyCircuitModel {
    inner: circuits::CircuitModel,
}

#[pymethods]
impl PyCircuitModel {
    /// Builds a model from its dict form, e.g.
    /// `{"topology": "rhyg", "series": {...}, "msw_branches": [...]}`.
    #[staticmethod]
    fn from_dict(d: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(Self { inner: from_py(d)? })
    }

    /// Resonantly coupled model with cavity frequency `f_c` and coupling `g` (Hz).
    #[staticmethod]
    fn coupled(f_c: f64, g: f64, l_0: f64, r_0: f64, r_m: f64) -> PyResult<Self> {
        let inner = CoupledModes::new(f_c, g)
            .and_then(|c| c.to_circuit(l_0, r_0, r_m))
            .map_err(err)?;
        Ok(Self { inner })
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn topology(&self) -> &'static str {
        match self.inner.topology() {
            Topology::HygShortedLine => "hyg",
            Topology::RhygSeries => "rhyg",
        }
    }

    /// Branch resonance frequencies (Hz).
    #[getter]
    fn branch_frequencies(&self) -> Vec<f64> {
        self.inner.branches().iter().map(|b| b.resonance_hz()).collect()
    }

    /// Model impedance on `freqs` as an impedance spectrum.
    fn impedance(&self, freqs: Vec<f64>) -> PyResult<PySpectrum> {
        Ok(PySpectrum {
            inner: circuits::z_model(&self.inner, &grid(freqs)?),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "CircuitModel(topology={}, branches={})",
            self.topology(),
            self.inner.branches().len()
        )
    }
}

/// Resonances of an impedance spectrum as dicts tagged by `type`.
#[pyfunction]
#[pyo3(signature = (z, prominence = DEFAULT_PROMINENCE))]
fn find_resonances(py: Python<'_>, z: &PySpectrum, prominence: f64) -> PyResult<Py<PyAny>> {
    let res = extraction::find_resonances(&z.inner, prominence).map_err(err)?;
    to_py(py, &res)
}

/// Q, kt² and FOM for every pair or triple found in `z`.
#[pyfunction]
#[pyo3(signature = (z, prominence = DEFAULT_PROMINENCE))]
fn resonance_metrics(py: Python<'_>, z: &PySpectrum, prominence: f64) -> PyResult<Py<PyAny>> {
    let res = extraction::find_resonances(&z.inner, prominence).map_err(err)?;
    let mut out = Vec::new();
    for r in &res {
        if let Some(m) = extraction::metrics(&z.inner, r).map_err(err)? {
            out.push(m);
        }
    }
    to_py(py, &out)
}

#[pyfunction]
fn q_3db(z: &PySpectrum, peak_hz: f64) -> PyResult<f64> {
    extraction::q_3db(&z.inner, peak_hz).map_err(err)
}

/// kt² from the ratio of the lower to the higher resonance frequency.
#[pyfunction]
fn coupling_from_ratio(r: f64) -> PyResult<f64> {
    extraction::coupling_from_ratio(r).map_err(err)
}

#[pyfunction]
fn fom(q: f64, kt2: f64) -> f64 {
    extraction::fom(q, kt2)
}

/// Closed-loop count and trajectory of a reflection spectrum.
#[pyfunction]
fn q_circle(py: Python<'_>, s: &PySpectrum) -> PyResult<Py<PyAny>> {
    to_py(py, &extraction::q_circle(&s.inner).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (bias_t, gamma_eff = None, b_off = None))]
fn msw_frequency(bias_t: f64, gamma_eff: Option<f64>, b_off: Option<f64>) -> PyResult<f64> {
    magnetics::msw_frequency(&tuning(gamma_eff, b_off)?, bias_t).map_err(err)
}

/// Least-squares tuning law from `(bias_t, freq_hz)` pairs.
#[pyfunction]
fn calibrate_tuning(py: Python<'_>, pairs: Vec<(f64, f64)>) -> PyResult<Py<PyAny>> {
    to_py(py, &magnetics::calibrate_tuning(&pairs).map_err(err)?)
}

/// |Z| heatmap of a coupled model over bias plus the extracted splitting.
///
/// The returned dict holds `heatmap` and `splitting`; the latter is `None`
/// when no anti-crossing is visible.
#[pyfunction]
#[pyo3(signature = (model, freqs, biases_t, gamma_eff = None, b_off = None))]
fn anticross(
    py: Python<'_>,
    model: &PyCircuitModel,
    freqs: Vec<f64>,
    biases_t: Vec<f64>,
    gamma_eff: Option<f64>,
    b_off: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let hm = magnetics::heatmap(&model.inner, &tuning(gamma_eff, b_off)?, &biases_t, &grid(freqs)?)
        .map_err(err)?;
    let split = match magnetics::extract_splitting(&hm) {
        Ok(s) => Some(s),
        Err(magnetics::MagneticsError::NoAntiCrossing) => None,
        Err(e) => return Err(err(e)),
    };
    to_py(py, &serde_json::json!({ "heatmap": hm, "splitting": split }))
}

/// Synthetic reflection sweep as a list of `(bias_t, Spectrum)` pairs.
#[pyfunction]
#[pyo3(signature = (model, freqs, biases_t, snr_db = None, seed = 0, gamma_eff = None, b_off = None))]
#[allow(clippy::too_many_arguments)]
fn synth_sweep(
    model: &PyCircuitModel,
    freqs: Vec<f64>,
    biases_t: Vec<f64>,
    snr_db: Option<f64>,
    seed: u64,
    gamma_eff: Option<f64>,
    b_off: Option<f64>,
) -> PyResult<Vec<(f64, PySpectrum)>> {
    let out = magnetics::synth_sweep(
        &model.inner,
        &tuning(gamma_eff, b_off)?,
        &biases_t,
        &grid(freqs)?,
        NoiseSpec { snr_db, seed },
    )
    .map_err(err)?;
    Ok(out
        .sweep
        .entries()
        .iter()
        .map(|e| (e.bias_t, PySpectrum { inner: e.spectrum.clone() }))
        .collect())
}

/// Two-stage fit of a zero-bias trace and a bias sweep.
///
/// The baseline starts from `init` when given, otherwise from a guess for
/// `topology` ("hyg" or "rhyg").
#[pyfunction]
#[pyo3(signature = (zero_bias, sweep, topology = "rhyg", init = None, seed = 0, n_starts = 8, n_branches = 1))]
#[allow(clippy::too_many_arguments)]
fn fit_two_stage(
    py: Python<'_>,
    zero_bias: &PySpectrum,
    sweep: Vec<(f64, PySpectrum)>,
    topology: &str,
    init: Option<PyCircuitModel>,
    seed: u64,
    n_starts: usize,
    n_branches: usize,
) -> PyResult<Py<PyAny>> {
    let topology: Topology = topology.parse().map_err(err)?;
    let zero = match zero_bias.inner.kind() {
        SpectrumKind::Impedance => zero_bias.inner.clone(),
        SpectrumKind::Reflection => spectra::s_to_z(&zero_bias.inner).map_err(err)?,
    };
    let mut points: Vec<BiasPoint> = sweep
        .into_iter()
        .map(|(bias_t, s)| BiasPoint { bias_t, spectrum: s.inner })
        .collect();
    points.sort_by(|a, b| a.bias_t.total_cmp(&b.bias_t));
    let sweep = BiasSweep::new(points).map_err(err)?;
    let init = match init {
        Some(m) => m.inner.baseline(),
        None => guess_baseline(topology, &zero).map_err(err)?,
    };
    let opts = TwoStageOptions {
        fit: FitOptions {
            seed,
            n_starts,
            ..FitOptions::default()
        },
        n_branches,
        ..TwoStageOptions::default()
    };
    let result = py
        .detach(|| two_stage_fit(&zero, &sweep, &init, &opts))
        .map_err(err)?;
    to_py(py, &result)
}

#[pymodule]
fn mswkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyCircuitModel>()?;
    m.add("DEFAULT_PROMINENCE", DEFAULT_PROMINENCE)?;
    m.add_function(wrap_pyfunction!(find_resonances, m)?)?;
    m.add_function(wrap_pyfunction!(resonance_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(q_3db, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_from_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(fom, m)?)?;
    m.add_function(wrap_pyfunction!(q_circle, m)?)?;
    m.add_function(wrap_pyfunction!(msw_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_tuning, m)?)?;
    m.add_function(wrap_pyfunction!(anticross, m)?)?;
    m.add_function(wrap_pyfunction!(synth_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(fit_two_stage, m)?)?;
    Ok(())
}
