//! Python bindings: phenomena, templates, answer sets and the dataset pipeline.
//! Structured values cross the boundary as JSON strings.

use std::path::PathBuf;

use blm_core::answers::{build_answer_set, AnswerConfig};
use blm_core::augment::{AugmentConfig, StubScorer};
use blm_core::dataset::{self, DatasetFile, GenerationConfig};
use blm_core::dsl::{parse_phenomenon, serialize_phenomenon};
use blm_core::grammar::PhenomenonGrammar;
use blm_core::realize::{realize_context, LexicalizationMode};
use blm_core::solver::verify_unique;
use blm_core::template::{build_template, Operator, Shape, TemplateMatrix};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(blm, BlmError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    BlmError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("value serializes")
}

/// A parsed and validated phenomenon grammar.
#[pyclass(frozen, name = "Phenomenon")]
pub struct PyPhenomenon {
    inner: PhenomenonGrammar,
}

#[pymethods]
impl PyPhenomenon {
    #[staticmethod]
    fn parse(source: &str) -> PyResult<Self> {
        Ok(PyPhenomenon {
            inner: parse_phenomenon(source).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let source = std::fs::read_to_string(&path).map_err(err)?;
        Self::parse(&source)
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    /// `Object.attribute` names of every slot.
    fn slots(&self) -> Vec<String> {
        self.inner.slots().iter().map(|s| s.to_string()).collect()
    }

    /// Canonical `.blm` text.
    fn serialize(&self) -> String {
        serialize_phenomenon(&self.inner)
    }

    /// Build the abstract template for `n` rows of at most `l` tokens.
    fn template(&self, n: usize, l: usize, operators: Vec<String>) -> PyResult<PyTemplate> {
        let ops = operators
            .iter()
            .map(|s| s.parse::<Operator>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let shape = Shape::new(n, l).map_err(err)?;
        Ok(PyTemplate {
            inner: build_template(&self.inner, shape, &ops).map_err(err)?,
        })
    }

    /// Realize a template into a full instance and check it with the solver.
    /// Returns the instance as JSON.
    #[pyo3(signature = (template, seed, shared=false))]
    fn instance(&self, template: &PyTemplate, seed: u64, shared: bool) -> PyResult<String> {
        let mode = if shared {
            LexicalizationMode::Shared
        } else {
            LexicalizationMode::Varied
        };
        let t = &template.inner;
        let context = realize_context(t, &self.inner, seed, mode).map_err(err)?;
        let answers = build_answer_set(t, &self.inner, &AnswerConfig::default(), seed).map_err(err)?;
        verify_unique(&context, &answers, &self.inner).map_err(err)?;
        let inst = blm_core::BlmInstance {
            id: format!("{}-py", self.inner.id),
            seed: Some(seed),
            template: Some(t.clone()),
            context,
            answers,
            augmentation: None,
        };
        Ok(to_json(&inst))
    }

    fn __repr__(&self) -> String {
        format!("Phenomenon({:?})", self.inner.id)
    }
}

#[pyclass(frozen, name = "Template")]
pub struct PyTemplate {
    inner: TemplateMatrix,
}

#[pymethods]
impl PyTemplate {
    /// Rows in compact notation, e.g. `NP1:s NP2:p V:s`.
    fn rows(&self) -> Vec<String> {
        self.inner.rows.iter().map(|r| r.render()).collect()
    }

    fn to_json(&self) -> String {
        to_json(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }
}

/// Generate a dataset from a TOML config file; returns the dataset JSON.
#[pyfunction]
#[pyo3(signature = (config_path, count=None, seed=None))]
fn generate(config_path: PathBuf, count: Option<usize>, seed: Option<u64>) -> PyResult<String> {
    let mut cfg = GenerationConfig::load(&config_path).map_err(err)?;
    if let Some(c) = count {
        cfg.count = c;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (file, _) = dataset::generate_from_config(&cfg).map_err(err)?;
    Ok(file.to_json())
}

/// Validation report (JSON) of a dataset given as JSON text.
#[pyfunction]
fn validate(dataset_json: &str) -> PyResult<String> {
    let file = DatasetFile::from_json(dataset_json).map_err(err)?;
    Ok(to_json(&dataset::validate(&file)))
}

/// Solver report (JSON) of a dataset given as JSON text.
#[pyfunction]
fn solve(dataset_json: &str) -> PyResult<String> {
    let file = DatasetFile::from_json(dataset_json).map_err(err)?;
    Ok(to_json(&dataset::solve_dataset(&file).map_err(err)?))
}

/// Augment with the built-in stub scorer; returns the augmented dataset JSON.
#[pyfunction]
#[pyo3(signature = (dataset_json, table_path, epsilon=1.0, budget=1, seed=0))]
fn augment(dataset_json: &str, table_path: PathBuf, epsilon: f64, budget: usize, seed: u64) -> PyResult<String> {
    let file = DatasetFile::from_json(dataset_json).map_err(err)?;
    let stub = StubScorer::load(&table_path).map_err(err)?;
    let config = AugmentConfig {
        epsilon,
        budget,
        ..AugmentConfig::default()
    };
    let (out, _) = dataset::augment_dataset(&file, &stub, &config, seed).map_err(err)?;
    Ok(out.to_json())
}

/// Evaluation export without answers.
#[pyfunction]
fn strip_answers(dataset_json: &str) -> PyResult<String> {
    let file = DatasetFile::from_json(dataset_json).map_err(err)?;
    Ok(dataset::strip_answers(&file).to_json())
}

#[pymodule]
fn blm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BlmError", m.py().get_type::<BlmError>())?;
    m.add_class::<PyPhenomenon>()?;
    m.add_class::<PyTemplate>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(augment, m)?)?;
    m.add_function(wrap_pyfunction!(strip_answers, m)?)?;
    Ok(())
}
