//! Python bindings. Structured results cross the boundary as plain dicts and
//! lists, built from the same JSON the CLI and service emit.

use std::sync::Arc;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use vocabsize_core::bank::{bank_summary, demo_bank, load_bank, save_bank};
use vocabsize_core::calibration::{
    calibrate as calibrate_matrix, fit_conversion_with_cap, prune_items, CalibrationOptions, CalibrationResult,
    ResponseMatrix,
};
use vocabsize_core::cat::{attention_index as index_of, logits_to_words as to_words, AttentionCounters};
use vocabsize_core::irt::estimate_ability as eap;
use vocabsize_core::sim::{honest_population, run_recovery, synthetic_study as planted_study, RespondentProfile};
use vocabsize_core::study::{analyze as analyze_records, clean as clean_records, CleaningConfig, StudyRecord};
use vocabsize_core::{
    Answer, ConversionCoefficients, Demographics, ItemBank as CoreBank, Prior, ScoredResponse,
    Session as CoreSession, SessionConfig,
};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

/// EAP ability estimate from `(difficulty, correct)` pairs. Returns `(theta, se)`.
#[pyfunction]
#[pyo3(signature = (responses, prior_mean = 0.0, prior_sd = 3.0))]
fn estimate_ability(responses: Vec<(f64, bool)>, prior_mean: f64, prior_sd: f64) -> PyResult<(f64, f64)> {
    let prior = Prior::new(prior_mean, prior_sd).map_err(value_err)?;
    let scored: Vec<ScoredResponse> = responses.into_iter().map(|(b, c)| ScoredResponse::new(b, c)).collect();
    let a = eap(&scored, &prior);
    Ok((a.theta, a.se))
}

/// `(x + y) / (ax + ay)`, or `None` without control items.
#[pyfunction]
fn attention_index(x: u32, ax: u32, y: u32, ay: u32) -> Option<f64> {
    index_of(&AttentionCounters { x, ax, y, ay })
}

#[pyfunction]
#[pyo3(signature = (theta, slope, midpoint, cap = 140_000.0))]
fn logits_to_words(theta: f64, slope: f64, midpoint: f64, cap: f64) -> PyResult<u32> {
    to_words(theta, &ConversionCoefficients { cap, slope, midpoint }).map_err(value_err)
}

#[pyclass(module = "vocabsize", frozen)]
struct ItemBank {
    inner: Arc<CoreBank>,
}

#[pymethods]
impl ItemBank {
    /// The bundled demonstration bank.
    #[staticmethod]
    fn demo() -> Self {
        ItemBank { inner: Arc::new(demo_bank()) }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(ItemBank { inner: Arc::new(CoreBank::from_json_str(text).map_err(value_err)?) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(ItemBank { inner: Arc::new(load_bank(path).map_err(value_err)?) })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_bank(&self.inner, path).map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    fn summary(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &bank_summary(&self.inner))
    }

    fn __len__(&self) -> usize {
        self.inner.stimuli.len()
    }
}

fn parse_answer(answer: &Bound<'_, PyAny>) -> PyResult<Answer> {
    if let Ok(i) = answer.extract::<i64>() {
        return u8::try_from(i)
            .ok()
            .filter(|i| *i < 4)
            .map(Answer::Choice)
            .ok_or_else(|| value_err(format!("choice must be 0..=3, got {i}")));
    }
    match answer.extract::<String>()?.as_str() {
        "know" => Ok(Answer::Know),
        "dont_know" => Ok(Answer::DontKnow),
        other => Err(value_err(format!("answer must be \"know\", \"dont_know\" or a choice index, got {other:?}"))),
    }
}

/// One adaptive test. Answers are `"know"`, `"dont_know"` or a presented
/// option index at the definition stage.
#[pyclass(module = "vocabsize")]
struct Session {
    bank: Arc<CoreBank>,
    inner: CoreSession,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (bank, seed = None, total_items = 30, session_id = "py"))]
    fn new(bank: &ItemBank, seed: Option<u64>, total_items: usize, session_id: &str) -> PyResult<Self> {
        let mut config = SessionConfig::with_length(total_items).map_err(value_err)?;
        config.rng_seed = seed;
        let inner = CoreSession::start(session_id, &bank.inner, config).map_err(value_err)?;
        Ok(Session { bank: Arc::clone(&bank.inner), inner })
    }

    /// The pending prompt as a dict.
    fn next_item(&mut self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let p = self.inner.next_item(&self.bank).map_err(value_err)?;
        to_py(py, &p)
    }

    #[pyo3(signature = (item_id, answer, latency_ms = 0))]
    fn answer(
        &mut self,
        py: Python<'_>,
        item_id: &str,
        answer: &Bound<'_, PyAny>,
        latency_ms: u64,
    ) -> PyResult<Py<PyAny>> {
        let answer = parse_answer(answer)?;
        let out = self.inner.submit_response(&self.bank, item_id, answer, latency_ms).map_err(value_err)?;
        to_py(py, &out)
    }

    /// Closes the session. Demographics are all-or-nothing.
    #[pyo3(signature = (age = None, native = None, honest = None))]
    fn finalize(
        &mut self,
        py: Python<'_>,
        age: Option<u32>,
        native: Option<bool>,
        honest: Option<bool>,
    ) -> PyResult<Py<PyAny>> {
        let demographics = match (age, native, honest) {
            (Some(age), Some(native), Some(honest)) => Some(Demographics { age, native, honest }),
            (None, None, None) => None,
            _ => return Err(value_err("give all of age, native and honest, or none")),
        };
        let result = self.inner.finalize(&self.bank, demographics).map_err(value_err)?;
        to_py(py, &result)
    }

    #[getter]
    fn state(&self) -> String {
        self.inner.state().to_string()
    }

    #[getter]
    fn position(&self) -> usize {
        self.inner.position()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    /// Current `(theta, se)`.
    #[getter]
    fn ability(&self) -> (f64, f64) {
        let a = self.inner.ability();
        (a.theta, a.se)
    }

    fn result(&self, py: Python<'_>) -> PyResult<Option<Py<PyAny>>> {
        self.inner.result().map(|r| to_py(py, r)).transpose()
    }

    fn transcript_jsonl(&self) -> String {
        self.inner.transcript_jsonl()
    }
}

/// Marginal ML calibration from `(person, item, correct)` triples.
#[pyfunction]
#[pyo3(signature = (responses, max_iterations = 1000, tolerance = 1e-4, estimate_latent_sd = true))]
fn calibrate(
    py: Python<'_>,
    responses: Vec<(String, String, u8)>,
    max_iterations: usize,
    tolerance: f64,
    estimate_latent_sd: bool,
) -> PyResult<Py<PyAny>> {
    let matrix = ResponseMatrix::from_triples(responses).map_err(value_err)?;
    let options = CalibrationOptions { max_iterations, tolerance, estimate_latent_sd, ..Default::default() };
    let result = py.detach(|| calibrate_matrix(&matrix, &options)).map_err(value_err)?;
    to_py(py, &result)
}

/// Splits a calibration result into retained and removed items.
#[pyfunction]
#[pyo3(signature = (calibration, fit_cap = 1.3, z_cap = 2.0))]
fn prune(py: Python<'_>, calibration: &Bound<'_, PyAny>, fit_cap: f64, z_cap: f64) -> PyResult<Py<PyAny>> {
    let result: CalibrationResult = from_py(py, calibration)?;
    to_py(py, &prune_items(&result, fit_cap, z_cap))
}

/// Fits slope and midpoint of the logit-to-words curve to `(rank, difficulty)` pairs.
#[pyfunction]
#[pyo3(signature = (points, cap = 140_000.0))]
fn fit_conversion(py: Python<'_>, points: Vec<(f64, f64)>, cap: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &fit_conversion_with_cap(&points, cap).map_err(value_err)?)
}

/// Applies the cleaning rules to a list of record dicts. Returns `(kept, report)`.
#[pyfunction]
#[pyo3(signature = (records, min_attention = 0.70, min_duration_s = 60.0, min_age = 7, sd_k = 2.0))]
fn clean(
    py: Python<'_>,
    records: &Bound<'_, PyAny>,
    min_attention: f64,
    min_duration_s: f64,
    min_age: u32,
    sd_k: f64,
) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
    let records: Vec<StudyRecord> = from_py(py, records)?;
    let config = CleaningConfig { min_attention, min_duration_s, min_age, sd_k };
    let (kept, report) = clean_records(&records, &config);
    Ok((to_py(py, &kept)?, to_py(py, &report)?))
}

#[pyfunction]
#[pyo3(signature = (records, age_bins = 5))]
fn analyze(py: Python<'_>, records: &Bound<'_, PyAny>, age_bins: usize) -> PyResult<Py<PyAny>> {
    let records: Vec<StudyRecord> = from_py(py, records)?;
    to_py(py, &analyze_records(&records, age_bins).map_err(value_err)?)
}

/// Synthetic study records with planted violations: `{"records", "planted"}`.
#[pyfunction]
#[pyo3(signature = (n = 1000, seed = 1))]
fn synthetic_study(py: Python<'_>, n: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let study = planted_study(n, seed).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("records", to_py(py, &study.records)?)?;
    out.set_item("planted", to_py(py, &study.planted)?)?;
    Ok(out.into_any().unbind())
}

/// Ability recovery of `n` honest simulated respondents drawn from `N(mean, sd)`.
#[pyfunction]
#[pyo3(signature = (n = 500, mean = 0.0, sd = 2.0, seed = 1, bank = None, random_respondents = false))]
fn simulate_recovery(
    py: Python<'_>,
    n: usize,
    mean: f64,
    sd: f64,
    seed: u64,
    bank: Option<&ItemBank>,
    random_respondents: bool,
) -> PyResult<Py<PyAny>> {
    let bank = bank.map_or_else(|| Arc::new(demo_bank()), |b| Arc::clone(&b.inner));
    let profiles = if random_respondents {
        vec![RespondentProfile::random(); n]
    } else {
        honest_population(n, mean, sd, seed).map_err(value_err)?
    };
    let report = py
        .detach(|| run_recovery(&bank, &SessionConfig::default(), &profiles, seed))
        .map_err(value_err)?;
    to_py(py, &report)
}

#[pyfunction]
fn item(py: Python<'_>, bank: &ItemBank, item_id: &str) -> PyResult<Py<PyAny>> {
    let s = bank.inner.get(item_id).ok_or_else(|| PyKeyError::new_err(item_id.to_string()))?;
    to_py(py, s)
}

#[pymodule]
pub fn vocabsize(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ItemBank>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(estimate_ability, m)?)?;
    m.add_function(wrap_pyfunction!(attention_index, m)?)?;
    m.add_function(wrap_pyfunction!(logits_to_words, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(prune, m)?)?;
    m.add_function(wrap_pyfunction!(fit_conversion, m)?)?;
    m.add_function(wrap_pyfunction!(clean, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_study, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_recovery, m)?)?;
    m.add_function(wrap_pyfunction!(item, m)?)?;
    Ok(())
}
