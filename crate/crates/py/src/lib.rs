//! Python bindings. Structured results cross the boundary as JSON and come
//! out as plain dicts and lists.

use std::sync::Arc;

use chrono::NaiveDateTime;
use fitbot_core::engine::{parse_reference_time, Engine as CoreEngine, ReformulationInput};
use fitbot_core::reformulation::{ReformulationConfig, TaskCatalog, UserProfile};
use fitbot_core::SessionState;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: serde::de::DeserializeOwned>(
    py: Python<'_>,
    value: &Bound<'_, PyAny>,
) -> PyResult<T> {
    let text: String = py
        .import("json")?
        .call_method1("dumps", (value,))?
        .extract()?;
    serde_json::from_str(&text).map_err(value_error)
}

fn reference(time: Option<&str>) -> PyResult<NaiveDateTime> {
    match time {
        Some(t) => {
            parse_reference_time(t).ok_or_else(|| value_error(format!("bad reference time '{t}'")))
        }
        None => Ok(chrono::Local::now().naive_local()),
    }
}

/// A trained skill.
#[pyclass(frozen)]
struct Engine {
    inner: Arc<CoreEngine>,
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (skill_json, wordlist=None))]
    fn new(skill_json: &str, wordlist: Option<&str>) -> PyResult<Self> {
        let mut engine = CoreEngine::from_json(skill_json.as_bytes()).map_err(value_error)?;
        if let Some(w) = wordlist {
            engine = engine.with_wordlist(w).map_err(value_error)?;
        }
        Ok(Engine {
            inner: Arc::new(engine),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, wordlist=None))]
    fn load(path: &str, wordlist: Option<&str>) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(value_error)?;
        Self::new(&text, wordlist)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.skill().name.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings().to_vec()
    }

    #[pyo3(signature = (text, reference_time=None))]
    fn analyze(
        &self,
        py: Python<'_>,
        text: &str,
        reference_time: Option<&str>,
    ) -> PyResult<Py<PyAny>> {
        let nlu = self
            .inner
            .analyze(text, reference(reference_time)?)
            .map_err(value_error)?;
        to_py(py, &nlu)
    }

    /// A fresh conversation. With a task catalog every turn is also
    /// reformulated against the conversation's profile.
    #[pyo3(signature = (session_id="py", catalog_json=None, user_id="anonymous"))]
    fn conversation(
        &self,
        session_id: &str,
        catalog_json: Option<&str>,
        user_id: &str,
    ) -> PyResult<Conversation> {
        let catalog = catalog_json
            .map(TaskCatalog::from_json)
            .transpose()
            .map_err(value_error)?;
        Ok(Conversation {
            engine: self.inner.clone(),
            session: SessionState::new(session_id, ""),
            catalog,
            profile: UserProfile::new(user_id),
        })
    }
}

/// One session against an engine, carrying context between turns.
#[pyclass]
struct Conversation {
    engine: Arc<CoreEngine>,
    session: SessionState,
    catalog: Option<TaskCatalog>,
    profile: UserProfile,
}

#[pymethods]
impl Conversation {
    /// Runs a turn and returns its full record.
    #[pyo3(signature = (text, reference_time=None))]
    fn send(
        &mut self,
        py: Python<'_>,
        text: &str,
        reference_time: Option<&str>,
    ) -> PyResult<Py<PyAny>> {
        let input = self.catalog.as_ref().map(|catalog| ReformulationInput {
            catalog,
            profile: &self.profile,
        });
        let turn = self
            .engine
            .turn(&self.session, text, reference(reference_time)?, input)
            .map_err(value_error)?;
        self.session = turn.result.updated_session.clone();
        if let Some(p) = &turn.profile {
            self.profile = p.clone();
        }
        to_py(py, &turn)
    }

    /// Response lines of a turn.
    #[pyo3(signature = (text, reference_time=None))]
    fn reply(
        &mut self,
        py: Python<'_>,
        text: &str,
        reference_time: Option<&str>,
    ) -> PyResult<Vec<String>> {
        let turn = self.send(py, text, reference_time)?;
        turn.bind(py)
            .get_item("result")?
            .get_item("responses")?
            .extract()
    }

    #[getter]
    fn session(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.session)
    }

    #[getter]
    fn profile(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.profile)
    }
}

#[pyfunction]
fn levenshtein(a: &str, b: &str) -> usize {
    fitbot_core::levenshtein(a, b)
}

#[pyfunction]
fn phonetic_code(word: &str) -> PyResult<String> {
    fitbot_core::phonetic_code(word).map_err(value_error)
}

#[pyfunction]
fn tokenize(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    to_py(py, &fitbot_core::tokenize(text).map_err(value_error)?)
}

/// Canonical and fully parenthesized forms of a dialog condition.
#[pyfunction]
fn parse_condition(text: &str) -> PyResult<(String, String)> {
    let c = fitbot_core::parse_condition(text).map_err(value_error)?;
    Ok((c.to_string(), c.to_parenthesized()))
}

#[pyfunction]
#[pyo3(signature = (terms, catalog_json, profile=None, k=3))]
fn reformulate(
    py: Python<'_>,
    terms: Vec<String>,
    catalog_json: &str,
    profile: Option<&Bound<'_, PyAny>>,
    k: usize,
) -> PyResult<Py<PyAny>> {
    let catalog = TaskCatalog::from_json(catalog_json).map_err(value_error)?;
    let profile = match profile {
        Some(p) => from_py(py, p)?,
        None => UserProfile::new("anonymous"),
    };
    let config = ReformulationConfig {
        expansion_k: k,
        ..ReformulationConfig::default()
    };
    let q =
        fitbot_core::reformulate(&terms, &profile, &catalog, None, &config).map_err(value_error)?;
    to_py(py, &q)
}

#[pymodule]
fn fitbot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Engine>()?;
    m.add_class::<Conversation>()?;
    m.add_function(wrap_pyfunction!(levenshtein, m)?)?;
    m.add_function(wrap_pyfunction!(phonetic_code, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(parse_condition, m)?)?;
    m.add_function(wrap_pyfunction!(reformulate, m)?)?;
    Ok(())
}
