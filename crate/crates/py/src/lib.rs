//! Python bindings: datasets, synthetic pools, ensembles, metrics and the
//! experiment commands. Structured results come back as plain dicts.

use std::path::PathBuf;

use dare_core::augment::{Ensemble, SyntheticPool};
use dare_core::classifier::LinearTextClassifier;
use dare_core::corpus::{self, Dataset as CoreDataset, RelationInstance, RelationSchema};
use dare_core::eval;
use dare_core::experiment::{self, BaseMode, ExperimentConfig, Inputs, Pipeline, PositiveCount};
use dare_core::external::PROTOCOL;
use dare_core::synth::{self, TaskSpec};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pythonize::{depythonize, pythonize};
use serde::Serialize;

create_exception!(dare_re, DareError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    DareError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize + ?Sized>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    Ok(pythonize(py, value)?)
}

fn config_from(config: Option<&Bound<'_, PyAny>>) -> PyResult<ExperimentConfig> {
    let c: ExperimentConfig = match config {
        Some(obj) if !obj.is_none() => depythonize(obj)?,
        _ => ExperimentConfig::default(),
    };
    c.validate().map_err(err)?;
    Ok(c)
}

fn pipeline_from(name: &str) -> PyResult<Pipeline> {
    Pipeline::parse(name).ok_or_else(|| err(format!("unknown pipeline {name:?}")))
}

fn instances(tokens: Vec<Vec<String>>) -> Vec<RelationInstance> {
    tokens.into_iter().enumerate().map(|(i, t)| RelationInstance::new(format!("py-{i}"), t, "")).collect()
}

/// A relation-extraction dataset: schema plus train/dev/test splits.
#[pyclass(module = "dare_re", frozen)]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    /// Loads `dataset.json` and the JSON-lines splits from a directory.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: corpus::load_dataset_dir(&dir).map_err(err)? })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        corpus::write_dataset(&dir, &self.inner).map_err(err)
    }

    #[getter]
    fn relation_types(&self) -> Vec<String> {
        self.inner.schema.relation_types().to_vec()
    }

    #[getter]
    fn null_label(&self) -> String {
        self.inner.schema.null_label().to_owned()
    }

    /// Instances of one split as dicts with `id`, `tokens` and `label`.
    fn split<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.split_ref(name)?)
    }

    /// `{"total": n, "positive": k}` for one split.
    fn counts<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.counts(self.split_ref(name)?))
    }

    /// Keeps `n` randomly chosen training positives and every negative.
    fn subsample_positives(&self, n: usize, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: corpus::subsample_positives(&self.inner, n, seed).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(relation_types={:?}, train={}, dev={}, test={})",
            self.inner.schema.relation_types(),
            self.inner.train.len(),
            self.inner.dev.len(),
            self.inner.test.len()
        )
    }
}

impl Dataset {
    fn split_ref(&self, name: &str) -> PyResult<&[RelationInstance]> {
        match name {
            "train" => Ok(&self.inner.train),
            "dev" => Ok(&self.inner.dev),
            "test" => Ok(&self.inner.test),
            other => Err(err(format!("unknown split {other:?}"))),
        }
    }
}

/// Label-conditioned synthetic instances, keyed by relation type.
#[pyclass(module = "dare_re", frozen)]
struct Pool {
    inner: SyntheticPool,
}

#[pymethods]
impl Pool {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: SyntheticPool::load(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn digest(&self) -> String {
        self.inner.digest()
    }

    #[getter]
    fn sizes(&self) -> std::collections::BTreeMap<String, usize> {
        self.inner.per_class.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }

    /// Generation metadata: generator id, digest, sizes, attempts, rejections.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &experiment::PoolSummary::of(&self.inner))
    }

    fn instances<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.instances().collect::<Vec<_>>())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// A voting ensemble of linear text classifiers.
#[pyclass(module = "dare_re", frozen, name = "Ensemble")]
struct PyEnsemble {
    inner: Ensemble<LinearTextClassifier>,
}

#[pymethods]
impl PyEnsemble {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: Ensemble::load(&dir).map_err(err)? })
    }

    #[pyo3(signature = (dir, pool_digest=None))]
    fn save(&self, dir: PathBuf, pool_digest: Option<&str>) -> PyResult<()> {
        self.inner.save(&dir, pool_digest).map_err(err)
    }

    /// Voted labels for entity-masked token sequences.
    fn predict(&self, py: Python<'_>, tokens: Vec<Vec<String>>) -> Vec<String> {
        let batch = instances(tokens);
        py.detach(|| self.inner.predict_all(&batch))
    }

    /// Voted labels for one split of a dataset, in split order.
    fn predict_split(&self, py: Python<'_>, dataset: &Dataset, split: &str) -> PyResult<Vec<String>> {
        let split = dataset.split_ref(split)?;
        Ok(py.detach(|| self.inner.predict_all(split)))
    }

    /// Micro and per-class scores on the dataset's test split.
    fn evaluate<'py>(&self, py: Python<'py>, dataset: &Dataset) -> PyResult<Bound<'py, PyAny>> {
        let test = &dataset.inner.test;
        let preds = py.detach(|| self.inner.predict_all(test));
        let gold: Vec<&str> = test.iter().map(|i| i.label.as_str()).collect();
        let r = eval::evaluate(&preds.iter().map(String::as_str).collect::<Vec<_>>(), &gold, &self.inner.schema)
            .map_err(err)?;
        to_py(py, &r)
    }

    /// Per-member training metadata (seed, threshold, label and synthetic counts).
    fn members<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.members.iter().map(|m| &m.info).collect::<Vec<_>>())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// The synthetic imbalanced benchmark and its unlabelled in-domain corpus.
#[pyfunction]
#[pyo3(signature = (train_positives=50, train_negatives=2000, in_domain=5000, seed=0))]
fn imbalance_task(
    train_positives: usize,
    train_negatives: usize,
    in_domain: usize,
    seed: u64,
) -> (Dataset, Vec<Vec<String>>) {
    let task = synth::imbalance_task(&TaskSpec { train_positives, train_negatives, in_domain, seed, ..TaskSpec::default() });
    (Dataset { inner: task.dataset }, task.in_domain)
}

/// Builds a synthetic pool with the configured generator.
#[pyfunction]
#[pyo3(signature = (dataset, config=None, base_corpus=None, seed=0, vanilla=false))]
fn make_pool(
    py: Python<'_>,
    dataset: &Dataset,
    config: Option<&Bound<'_, PyAny>>,
    base_corpus: Option<Vec<Vec<String>>>,
    seed: u64,
    vanilla: bool,
) -> PyResult<Pool> {
    let config = config_from(config)?;
    let mode = if vanilla { BaseMode::Vanilla } else { BaseMode::Fitted };
    let pool = py
        .detach(|| experiment::make_pool(&dataset.inner, base_corpus.as_deref(), &config, mode, seed))
        .map_err(err)?;
    Ok(Pool { inner: pool })
}

/// Trains one pipeline's ensemble; `dare` requires a pool.
#[pyfunction]
#[pyo3(signature = (dataset, pipeline="dare", pool=None, config=None, ratio=None, seed=0))]
fn train(
    py: Python<'_>,
    dataset: &Dataset,
    pipeline: &str,
    pool: Option<&Pool>,
    config: Option<&Bound<'_, PyAny>>,
    ratio: Option<f64>,
    seed: u64,
) -> PyResult<PyEnsemble> {
    let config = config_from(config)?;
    let pipeline = pipeline_from(pipeline)?;
    let ratio = ratio.unwrap_or(config.ratio);
    let pool = pool.map(|p| &p.inner);
    let ensemble = py
        .detach(|| experiment::train_pipeline(&dataset.inner, pool, &config, pipeline, ratio, seed))
        .map_err(err)?;
    Ok(PyEnsemble { inner: ensemble })
}

/// Micro/per-class precision, recall and F1 of label predictions.
#[pyfunction]
#[pyo3(signature = (predictions, gold, relation_types, null_label="null"))]
fn evaluate<'py>(
    py: Python<'py>,
    predictions: Vec<String>,
    gold: Vec<String>,
    relation_types: Vec<String>,
    null_label: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let schema = RelationSchema::new(relation_types, null_label, "ENTITY_A", "ENTITY_B").map_err(err)?;
    to_py(py, &eval::evaluate(&predictions, &gold, &schema).map_err(err)?)
}

/// Continuity-corrected McNemar test on two prediction lists.
#[pyfunction]
fn mcnemar<'py>(py: Python<'py>, a: Vec<String>, b: Vec<String>, gold: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &eval::mcnemar(&a, &b, &gold).map_err(err)?)
}

fn inputs_for(config: &ExperimentConfig, dataset: Option<&Dataset>, base_corpus: Option<Vec<Vec<String>>>) -> PyResult<Inputs> {
    match dataset {
        Some(d) => Ok(Inputs { dataset: d.inner.clone(), base_corpus }),
        None => {
            let mut inputs = Inputs::load(config).map_err(err)?;
            if base_corpus.is_some() {
                inputs.base_corpus = base_corpus;
            }
            Ok(inputs)
        }
    }
}

/// The `run` command: every seed of the configured pipeline (and comparison).
#[pyfunction]
#[pyo3(signature = (config=None, dataset=None, base_corpus=None))]
fn run<'py>(
    py: Python<'py>,
    config: Option<&Bound<'py, PyAny>>,
    dataset: Option<&Dataset>,
    base_corpus: Option<Vec<Vec<String>>>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = config_from(config)?;
    let inputs = inputs_for(&config, dataset, base_corpus)?;
    let report = py.detach(|| experiment::cmd_run(&inputs, &config)).map_err(err)?;
    to_py(py, &report)
}

/// DARE against balanced bagging per number of training positives; counts
/// are integers or `"all"`.
#[pyfunction]
#[pyo3(signature = (counts, config=None, dataset=None, base_corpus=None))]
fn imbalance_curve<'py>(
    py: Python<'py>,
    counts: Vec<Bound<'py, PyAny>>,
    config: Option<&Bound<'py, PyAny>>,
    dataset: Option<&Dataset>,
    base_corpus: Option<Vec<Vec<String>>>,
) -> PyResult<Bound<'py, PyAny>> {
    let counts = counts
        .iter()
        .map(|c| match c.extract::<usize>() {
            Ok(n) => Ok(PositiveCount::Count(n)),
            Err(_) => {
                let s: String = c.extract()?;
                PositiveCount::parse(&s).ok_or_else(|| err(format!("invalid positive count {s:?}")))
            }
        })
        .collect::<PyResult<Vec<_>>>()?;
    let config = config_from(config)?;
    let inputs = inputs_for(&config, dataset, base_corpus)?;
    let report = py.detach(|| experiment::cmd_imbalance_curve(&inputs, &config, &counts)).map_err(err)?;
    to_py(py, &report)
}

/// DARE at several synthetic-to-gold ratios.
#[pyfunction]
#[pyo3(signature = (ratios=None, config=None, dataset=None, base_corpus=None))]
fn ratio_study<'py>(
    py: Python<'py>,
    ratios: Option<Vec<f64>>,
    config: Option<&Bound<'py, PyAny>>,
    dataset: Option<&Dataset>,
    base_corpus: Option<Vec<Vec<String>>>,
) -> PyResult<Bound<'py, PyAny>> {
    let ratios = ratios.unwrap_or_else(|| experiment::DEFAULT_RATIOS.to_vec());
    let config = config_from(config)?;
    let inputs = inputs_for(&config, dataset, base_corpus)?;
    let report = py.detach(|| experiment::cmd_ratio_study(&inputs, &config, &ratios)).map_err(err)?;
    to_py(py, &report)
}

/// DARE with a vanilla generator base against an in-domain one.
#[pyfunction]
#[pyo3(signature = (config=None, dataset=None, base_corpus=None))]
fn generator_study<'py>(
    py: Python<'py>,
    config: Option<&Bound<'py, PyAny>>,
    dataset: Option<&Dataset>,
    base_corpus: Option<Vec<Vec<String>>>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = config_from(config)?;
    let inputs = inputs_for(&config, dataset, base_corpus)?;
    let report = py.detach(|| experiment::cmd_generator_study(&inputs, &config)).map_err(err)?;
    to_py(py, &report)
}

/// The default experiment configuration as a dict.
#[pyfunction]
fn default_config(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &ExperimentConfig::default())
}

#[pymodule]
pub fn dare_re(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PROTOCOL", PROTOCOL)?;
    m.add("DareError", m.py().get_type::<DareError>())?;
    m.add_class::<Dataset>()?;
    m.add_class::<Pool>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(imbalance_task, m)?)?;
    m.add_function(wrap_pyfunction!(make_pool, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mcnemar, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(imbalance_curve, m)?)?;
    m.add_function(wrap_pyfunction!(ratio_study, m)?)?;
    m.add_function(wrap_pyfunction!(generator_study, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
