//! Experiment orchestration: seeded pipeline runs, the imbalance curve, the
//! ratio study and the generator study, with JSON / text / CSV reports.
//!
//! Every random choice derives from the run seed, so a config echo plus its
//! seed list reproduces a report exactly with the built-in backends.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{
    self, AugmentError, Ensemble, EnsembleConfig, MemberInfo, SyntheticPool, ThresholdPolicy, DEFAULT_POOL_MULTIPLIER,
};
use crate::classifier::{LinearBackend, LinearTextClassifier, TrainConfig};
use crate::corpus::{self, CorpusError, Dataset};
use crate::eval::{self, EvalError, EvalResult, McNemarResult, MeanStd, RunSummary};
use crate::external::{ExternalGenerator, DEFAULT_TIMEOUT};
use crate::generator::{BuiltinGenerator, GeneratorBackend, GeneratorError, GeneratorParams, DEFAULT_ALPHA, DEFAULT_LAMBDA, DEFAULT_ORDER};
use crate::seed;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("this study needs an in-domain base corpus")]
    MissingBaseCorpus,
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Dare,
    BalancedBagging,
    ClassWeighting,
    GoldOnly,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Dare => "dare",
            Pipeline::BalancedBagging => "balanced_bagging",
            Pipeline::ClassWeighting => "class_weighting",
            Pipeline::GoldOnly => "gold_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.replace('-', "_").as_str() {
            "dare" => Some(Pipeline::Dare),
            "balanced_bagging" | "bb" => Some(Pipeline::BalancedBagging),
            "class_weighting" | "cw" => Some(Pipeline::ClassWeighting),
            "gold_only" | "gold" => Some(Pipeline::GoldOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorSpec {
    Builtin,
    /// Command line of a `dare-gen/1` server.
    External(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub order: usize,
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { order: DEFAULT_ORDER, alpha: DEFAULT_ALPHA, lambda: DEFAULT_LAMBDA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    /// Whitespace-tokenised sentences, one per line, for the generator's base fit.
    pub base_corpus: Option<PathBuf>,
    pub pipeline: Pipeline,
    /// Second pipeline run on the same seeds and compared with McNemar's test.
    pub compare_with: Option<Pipeline>,
    pub generator: GeneratorSpec,
    pub generator_params: GeneratorParams,
    pub lm: LmConfig,
    pub pool_multiplier: f64,
    pub ratio: f64,
    pub dare_members: usize,
    pub baseline_members: usize,
    pub gold_only_members: usize,
    pub threshold_policy: ThresholdPolicy,
    pub classifier: TrainConfig,
    pub seeds: Vec<u64>,
    /// Used to carve a dev split out of train when the dataset has none.
    pub dev_fraction: f64,
    pub timeout_secs: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            base_corpus: None,
            pipeline: Pipeline::Dare,
            compare_with: None,
            generator: GeneratorSpec::Builtin,
            generator_params: GeneratorParams::default(),
            lm: LmConfig::default(),
            pool_multiplier: DEFAULT_POOL_MULTIPLIER,
            ratio: 1.0,
            dare_members: augment::DEFAULT_DARE_MEMBERS,
            baseline_members: augment::DEFAULT_BASELINE_MEMBERS,
            gold_only_members: 1,
            threshold_policy: ThresholdPolicy::PerMember,
            classifier: TrainConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            dev_fraction: 0.1,
            timeout_secs: DEFAULT_TIMEOUT.as_secs(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_owned()));
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty");
        }
        if self.compare_with == Some(self.pipeline) {
            return bad("compare_with must differ from pipeline");
        }
        if self.dare_members == 0 || self.baseline_members == 0 || self.gold_only_members == 0 {
            return bad("member counts must be at least 1");
        }
        if !(self.ratio >= 0.0 && self.ratio.is_finite()) {
            return bad("ratio must be non-negative");
        }
        if !(self.pool_multiplier >= 0.0 && self.pool_multiplier.is_finite()) {
            return bad("pool_multiplier must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.lm.lambda) {
            return bad("lm.lambda must lie in [0, 1]");
        }
        self.generator_params.validate()?;
        Ok(())
    }

    /// Reads a JSON or (by extension) TOML config file.
    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io(path.display().to_string(), e))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
        };
        parsed
    }

    pub fn members(&self, pipeline: Pipeline) -> usize {
        match pipeline {
            Pipeline::Dare => self.dare_members,
            Pipeline::BalancedBagging | Pipeline::ClassWeighting => self.baseline_members,
            Pipeline::GoldOnly => self.gold_only_members,
        }
    }

    fn ensemble_config(&self, pipeline: Pipeline, ratio: f64, run_seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            n_members: self.members(pipeline),
            ratio,
            seed: seed::derive(run_seed, 200),
            threshold_policy: self.threshold_policy,
            ..EnsembleConfig::dare()
        }
    }

    fn backend(&self) -> LinearBackend {
        LinearBackend { config: self.classifier.clone() }
    }
}

/// Loaded inputs of an experiment.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub dataset: Dataset,
    pub base_corpus: Option<Vec<Vec<String>>>,
}

impl Inputs {
    pub fn load(config: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let dir = config.dataset.as_ref().ok_or_else(|| ExperimentError::Config("no dataset given".into()))?;
        let dataset = corpus::load_dataset_dir(dir)?;
        let base_corpus = config.base_corpus.as_deref().map(read_token_lines).transpose()?;
        Ok(Self { dataset, base_corpus })
    }
}

/// Reads whitespace-tokenised sentences, one per non-empty line.
pub fn read_token_lines(path: &Path) -> Result<Vec<Vec<String>>, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io(path.display().to_string(), e))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
        .filter(|l| !l.is_empty())
        .collect())
}

pub fn write_token_lines(path: &Path, corpus: &[Vec<String>]) -> Result<(), ExperimentError> {
    let text: String = corpus.iter().map(|s| s.join(" ") + "\n").collect();
    fs::write(path, text).map_err(|e| ExperimentError::Io(path.display().to_string(), e))
}

/// How the generator's base model is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMode {
    /// Fit on the in-domain corpus, or on the training sentences when there is none.
    Fitted,
    /// Uniform over the vocabulary, no in-domain knowledge.
    Vanilla,
}

/// Per-seed dataset: carves a dev split out of train when none exists.
fn prepare(dataset: &Dataset, config: &ExperimentConfig, run_seed: u64) -> Result<Dataset, ExperimentError> {
    if !dataset.dev.is_empty() {
        return Ok(dataset.clone());
    }
    let (train, dev) = corpus::split_dev(&dataset.train, config.dev_fraction, seed::derive(run_seed, 300))?;
    Ok(Dataset { schema: dataset.schema.clone(), train, dev, test: dataset.test.clone() })
}

fn base_sentences(dataset: &Dataset, base_corpus: Option<&[Vec<String>]>) -> Vec<Vec<String>> {
    match base_corpus {
        Some(c) if !c.is_empty() => c.to_vec(),
        _ => dataset.train.iter().map(|i| i.tokens.clone()).collect(),
    }
}

/// Builds the synthetic pool for one run with the configured generator.
pub fn make_pool(
    dataset: &Dataset,
    base_corpus: Option<&[Vec<String>]>,
    config: &ExperimentConfig,
    mode: BaseMode,
    run_seed: u64,
) -> Result<SyntheticPool, ExperimentError> {
    let params = config.generator_params.with_seed(seed::derive(run_seed, 100));
    let base = base_sentences(dataset, base_corpus);
    let lm = &config.lm;
    let mut backend: Box<dyn GeneratorBackend> = match &config.generator {
        GeneratorSpec::Builtin => Box::new(match mode {
            BaseMode::Fitted => BuiltinGenerator::fitted(&base, lm.order, lm.alpha, lm.lambda)?,
            BaseMode::Vanilla => {
                let mut vocab_source = base.clone();
                vocab_source.extend(dataset.train.iter().map(|i| i.tokens.clone()));
                BuiltinGenerator::vanilla(&vocab_source, lm.order, lm.alpha, lm.lambda)?
            }
        }),
        GeneratorSpec::External(cmd) => {
            let mut session = ExternalGenerator::spawn_command_line(cmd, Duration::from_secs(config.timeout_secs))?;
            if mode == BaseMode::Fitted {
                session.fit_base(&base)?;
            }
            Box::new(session)
        }
    };
    Ok(augment::build_pool(dataset, backend.as_mut(), &params, config.pool_multiplier)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub generator: String,
    pub digest: String,
    pub sizes: BTreeMap<String, usize>,
    pub attempts: usize,
    pub rejected: usize,
}

impl PoolSummary {
    pub fn of(pool: &SyntheticPool) -> Self {
        Self {
            generator: pool.generator.clone(),
            digest: pool.digest(),
            sizes: pool.per_class.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
            attempts: pool.provenance.values().map(|p| p.attempts).sum(),
            rejected: pool.provenance.values().map(|p| p.rejected_mask + p.rejected_length).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub eval: EvalResult,
    pub members: Vec<MemberInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool: Option<PoolSummary>,
    /// Voted test predictions, in test order.
    pub predictions: Vec<String>,
}

/// Trains the pipeline's ensemble on `dataset` for one run seed.
pub fn train_pipeline(
    dataset: &Dataset,
    pool: Option<&SyntheticPool>,
    config: &ExperimentConfig,
    pipeline: Pipeline,
    ratio: f64,
    run_seed: u64,
) -> Result<Ensemble<LinearTextClassifier>, ExperimentError> {
    let ens = config.ensemble_config(pipeline, ratio, run_seed);
    let backend = config.backend();
    let ensemble = match pipeline {
        Pipeline::Dare => {
            let pool = pool.ok_or_else(|| ExperimentError::Config("DARE needs a synthetic pool".into()))?;
            augment::train_dare(dataset, pool, &ens, &backend)?
        }
        Pipeline::BalancedBagging => augment::train_balanced_bagging(dataset, &ens, &backend)?,
        Pipeline::ClassWeighting => augment::train_class_weighted(dataset, &ens, &backend)?,
        Pipeline::GoldOnly => augment::train_gold_only(dataset, &ens, &backend)?,
    };
    Ok(ensemble)
}

fn evaluate_ensemble(
    dataset: &Dataset,
    ensemble: &Ensemble<LinearTextClassifier>,
    pool: Option<&SyntheticPool>,
    run_seed: u64,
) -> Result<RunRecord, ExperimentError> {
    let predictions = ensemble.predict_all(&dataset.test);
    let gold: Vec<&str> = dataset.test.iter().map(|i| i.label.as_str()).collect();
    let pred_refs: Vec<&str> = predictions.iter().map(String::as_str).collect();
    let eval = eval::evaluate(&pred_refs, &gold, &dataset.schema)?;
    Ok(RunRecord {
        seed: run_seed,
        eval,
        members: ensemble.members.iter().map(|m| m.info.clone()).collect(),
        pool: pool.map(PoolSummary::of),
        predictions,
    })
}

/// One seeded run of `pipeline` with a freshly built pool when needed.
pub fn run_once(
    inputs: &Inputs,
    config: &ExperimentConfig,
    pipeline: Pipeline,
    run_seed: u64,
) -> Result<RunRecord, ExperimentError> {
    let dataset = prepare(&inputs.dataset, config, run_seed)?;
    let pool = match pipeline {
        Pipeline::Dare => Some(make_pool(&dataset, inputs.base_corpus.as_deref(), config, BaseMode::Fitted, run_seed)?),
        _ => None,
    };
    let ensemble = train_pipeline(&dataset, pool.as_ref(), config, pipeline, config.ratio, run_seed)?;
    evaluate_ensemble(&dataset, &ensemble, pool.as_ref(), run_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub pipeline: Pipeline,
    pub n_members: usize,
    pub runs: Vec<RunRecord>,
    pub summary: RunSummary,
}

impl PipelineReport {
    fn from_runs(pipeline: Pipeline, n_members: usize, runs: Vec<RunRecord>) -> Result<Self, ExperimentError> {
        let evals: Vec<EvalResult> = runs.iter().map(|r| r.eval.clone()).collect();
        Ok(Self { pipeline, n_members, summary: eval::aggregate_runs(&evals)?, runs })
    }

    pub fn mean_f1(&self) -> f64 {
        self.summary.micro_f1.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarRecord {
    /// `None` for the comparison pooled over all seeds.
    pub seed: Option<u64>,
    pub first: Pipeline,
    pub second: Pipeline,
    pub result: McNemarResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub relation_types: Vec<String>,
    pub train: usize,
    pub train_positive: usize,
    pub dev: usize,
    pub test: usize,
}

impl DatasetSummary {
    pub fn of(d: &Dataset) -> Self {
        Self {
            relation_types: d.schema.relation_types().to_vec(),
            train: d.train.len(),
            train_positive: d.positives(),
            dev: d.dev.len(),
            test: d.test.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub pipelines: Vec<PipelineReport>,
    pub mcnemar: Vec<McNemarRecord>,
}

fn compare(first: &PipelineReport, second: &PipelineReport, gold: &[String]) -> Result<Vec<McNemarRecord>, ExperimentError> {
    let mut out = Vec::new();
    let (mut all_a, mut all_b, mut all_g) = (Vec::new(), Vec::new(), Vec::new());
    for (ra, rb) in first.runs.iter().zip(&second.runs) {
        let result = eval::mcnemar(&ra.predictions, &rb.predictions, gold)?;
        out.push(McNemarRecord { seed: Some(ra.seed), first: first.pipeline, second: second.pipeline, result });
        all_a.extend(ra.predictions.iter().cloned());
        all_b.extend(rb.predictions.iter().cloned());
        all_g.extend(gold.iter().cloned());
    }
    let pooled = eval::mcnemar(&all_a, &all_b, &all_g)?;
    out.push(McNemarRecord { seed: None, first: first.pipeline, second: second.pipeline, result: pooled });
    Ok(out)
}

/// Runs the configured pipeline (and the comparison pipeline, if any) over every seed.
pub fn cmd_run(inputs: &Inputs, config: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    config.validate()?;
    let mut pipelines = Vec::new();
    for p in std::iter::once(config.pipeline).chain(config.compare_with) {
        let runs = config
            .seeds
            .iter()
            .map(|&s| {
                log::info!("{} seed {s}", p.name());
                run_once(inputs, config, p, s)
            })
            .collect::<Result<Vec<_>, _>>()?;
        pipelines.push(PipelineReport::from_runs(p, config.members(p), runs)?);
    }
    let gold: Vec<String> = inputs.dataset.test.iter().map(|i| i.label.clone()).collect();
    let mcnemar = if pipelines.len() == 2 { compare(&pipelines[0], &pipelines[1], &gold)? } else { Vec::new() };
    Ok(RunReport {
        command: "run".into(),
        config: config.clone(),
        dataset: DatasetSummary::of(&inputs.dataset),
        pipelines,
        mcnemar,
    })
}

/// One row of a method-comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    /// Row key: positive count, ratio, or base mode.
    pub key: String,
    pub cells: Vec<StudyCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub method: String,
    pub micro_precision: MeanStd,
    pub micro_recall: MeanStd,
    pub micro_f1: MeanStd,
    pub per_seed_f1: Vec<f64>,
    /// Synthetic instances per relation type seen by each member, per seed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub synthetic_counts: Vec<BTreeMap<String, usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pool_digests: Vec<String>,
}

impl StudyCell {
    fn from_runs(method: &str, runs: &[RunRecord]) -> Result<Self, ExperimentError> {
        let evals: Vec<EvalResult> = runs.iter().map(|r| r.eval.clone()).collect();
        let s = eval::aggregate_runs(&evals)?;
        Ok(Self {
            method: method.to_owned(),
            micro_precision: s.micro_precision,
            micro_recall: s.micro_recall,
            micro_f1: s.micro_f1,
            per_seed_f1: evals.iter().map(|e| e.micro_f1).collect(),
            synthetic_counts: runs
                .iter()
                .flat_map(|r| r.members.iter().map(|m| m.synthetic_counts.clone()))
                .filter(|c| !c.is_empty())
                .collect(),
            pool_digests: runs.iter().filter_map(|r| r.pool.as_ref().map(|p| p.digest.clone())).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub command: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub row_label: String,
    pub rows: Vec<StudyRow>,
}

impl StudyReport {
    pub fn cell(&self, key: &str, method: &str) -> Option<&StudyCell> {
        self.rows.iter().find(|r| r.key == key)?.cells.iter().find(|c| c.method == method)
    }
}

/// A positive-count request: an explicit number or every available positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositiveCount {
    Count(usize),
    All,
}

impl PositiveCount {
    pub fn parse(s: &str) -> Option<Self> {
        if s.eq_ignore_ascii_case("all") {
            Some(PositiveCount::All)
        } else {
            s.parse().ok().map(PositiveCount::Count)
        }
    }

    fn resolve(self, available: usize) -> usize {
        match self {
            PositiveCount::Count(n) => n,
            PositiveCount::All => available,
        }
    }
}

/// DARE against balanced bagging for each number of training positives.
pub fn cmd_imbalance_curve(
    inputs: &Inputs,
    config: &ExperimentConfig,
    counts: &[PositiveCount],
) -> Result<StudyReport, ExperimentError> {
    config.validate()?;
    let available = inputs.dataset.positives();
    let resolved: Vec<usize> = counts.iter().map(|c| c.resolve(available)).collect();
    if resolved.is_empty() {
        return Err(ExperimentError::Config("no positive counts given".into()));
    }
    if resolved.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExperimentError::Config(format!("positive counts must be strictly ascending: {resolved:?}")));
    }
    if let Some(&n) = resolved.iter().find(|&&n| n == 0 || n > available) {
        return Err(ExperimentError::Config(format!("positive count {n} is outside 1..={available}")));
    }
    let mut rows = Vec::new();
    for (count, &n) in counts.iter().zip(&resolved) {
        let mut dare_runs = Vec::new();
        let mut bb_runs = Vec::new();
        for &s in &config.seeds {
            let sub = if n == available {
                inputs.dataset.clone()
            } else {
                corpus::subsample_positives(&inputs.dataset, n, seed::derive(s, 400))?
            };
            let sub_inputs = Inputs { dataset: sub, base_corpus: inputs.base_corpus.clone() };
            log::info!("imbalance curve: {n} positives, seed {s}");
            dare_runs.push(run_once(&sub_inputs, config, Pipeline::Dare, s)?);
            bb_runs.push(run_once(&sub_inputs, config, Pipeline::BalancedBagging, s)?);
        }
        let key = match count {
            PositiveCount::All => format!("all({n})"),
            PositiveCount::Count(_) => n.to_string(),
        };
        rows.push(StudyRow {
            key,
            cells: vec![StudyCell::from_runs("dare", &dare_runs)?, StudyCell::from_runs("balanced_bagging", &bb_runs)?],
        });
    }
    Ok(StudyReport {
        command: "imbalance-curve".into(),
        config: config.clone(),
        dataset: DatasetSummary::of(&inputs.dataset),
        row_label: "positives".into(),
        rows,
    })
}

pub const DEFAULT_RATIOS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// DARE at each ratio over one pool per seed; balanced bagging, which has
/// no ratio, is trained once per seed and repeated on every row.
pub fn cmd_ratio_study(inputs: &Inputs, config: &ExperimentConfig, ratios: &[f64]) -> Result<StudyReport, ExperimentError> {
    config.validate()?;
    if ratios.is_empty() || ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(ExperimentError::Config(format!("ratios must be positive: {ratios:?}")));
    }
    let mut dare_runs: Vec<Vec<RunRecord>> = vec![Vec::new(); ratios.len()];
    let mut bb_runs = Vec::new();
    for &s in &config.seeds {
        let dataset = prepare(&inputs.dataset, config, s)?;
        let pool = make_pool(&dataset, inputs.base_corpus.as_deref(), config, BaseMode::Fitted, s)?;
        for (k, &r) in ratios.iter().enumerate() {
            log::info!("ratio study: r={r}, seed {s}");
            let ens = train_pipeline(&dataset, Some(&pool), config, Pipeline::Dare, r, s)?;
            dare_runs[k].push(evaluate_ensemble(&dataset, &ens, Some(&pool), s)?);
        }
        let bb = train_pipeline(&dataset, None, config, Pipeline::BalancedBagging, 0.0, s)?;
        bb_runs.push(evaluate_ensemble(&dataset, &bb, None, s)?);
    }
    let bb_cell = StudyCell::from_runs("balanced_bagging", &bb_runs)?;
    let rows = ratios
        .iter()
        .zip(&dare_runs)
        .map(|(r, runs)| {
            Ok(StudyRow { key: format_ratio(*r), cells: vec![StudyCell::from_runs("dare", runs)?, bb_cell.clone()] })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(StudyReport {
        command: "ratio-study".into(),
        config: config.clone(),
        dataset: DatasetSummary::of(&inputs.dataset),
        row_label: "ratio".into(),
        rows,
    })
}

fn format_ratio(r: f64) -> String {
    format!("{r}")
}

/// DARE with a vanilla (uniform) generator base against a base fitted on the
/// in-domain corpus.
pub fn cmd_generator_study(inputs: &Inputs, config: &ExperimentConfig) -> Result<StudyReport, ExperimentError> {
    config.validate()?;
    let base = inputs.base_corpus.as_deref().filter(|c| !c.is_empty()).ok_or(ExperimentError::MissingBaseCorpus)?;
    let mut rows = Vec::new();
    for (mode, key) in [(BaseMode::Vanilla, "vanilla"), (BaseMode::Fitted, "in-domain")] {
        let mut runs = Vec::new();
        for &s in &config.seeds {
            log::info!("generator study: {key} base, seed {s}");
            let dataset = prepare(&inputs.dataset, config, s)?;
            let pool = make_pool(&dataset, Some(base), config, mode, s)?;
            let ens = train_pipeline(&dataset, Some(&pool), config, Pipeline::Dare, config.ratio, s)?;
            runs.push(evaluate_ensemble(&dataset, &ens, Some(&pool), s)?);
        }
        rows.push(StudyRow { key: key.into(), cells: vec![StudyCell::from_runs("dare", &runs)?] });
    }
    Ok(StudyReport {
        command: "generator-study".into(),
        config: config.clone(),
        dataset: DatasetSummary::of(&inputs.dataset),
        row_label: "generator base".into(),
        rows,
    })
}

fn fmt_ms(m: &MeanStd) -> String {
    format!("{:.4} ± {:.4}", m.mean, m.std)
}

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> =
            cells.iter().zip(&widths).map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
        padded.join("  ").trim_end().to_owned() + "\n"
    };
    let mut out = line(header);
    out += &line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for r in rows {
        out += &line(r);
    }
    out
}

impl RunReport {
    /// Precision / recall / F1 table, one row per pipeline, then per-class F1
    /// and any McNemar comparisons.
    pub fn to_table(&self) -> String {
        let header: Vec<String> =
            ["configuration", "members", "precision", "recall", "F1"].iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<String>> = self
            .pipelines
            .iter()
            .map(|p| {
                vec![
                    p.pipeline.name().to_owned(),
                    p.n_members.to_string(),
                    fmt_ms(&p.summary.micro_precision),
                    fmt_ms(&p.summary.micro_recall),
                    fmt_ms(&p.summary.micro_f1),
                ]
            })
            .collect();
        let mut out = aligned(&header, &rows);
        let labels = &self.dataset.relation_types;
        let mut header = vec!["per-class F1".to_owned()];
        header.extend(labels.iter().cloned());
        let rows: Vec<Vec<String>> = self
            .pipelines
            .iter()
            .map(|p| {
                let mut r = vec![p.pipeline.name().to_owned()];
                r.extend(labels.iter().map(|l| p.summary.per_class_f1.get(l).map_or("-".into(), fmt_ms)));
                r
            })
            .collect();
        out.push('\n');
        out += &aligned(&header, &rows);
        if !self.mcnemar.is_empty() {
            out.push('\n');
            let header: Vec<String> =
                ["mcnemar", "seed", "b", "c", "statistic", "p<0.05"].iter().map(|s| s.to_string()).collect();
            let rows: Vec<Vec<String>> = self
                .mcnemar
                .iter()
                .map(|m| {
                    vec![
                        format!("{} vs {}", m.first.name(), m.second.name()),
                        m.seed.map_or("pooled".into(), |s| s.to_string()),
                        m.result.b.to_string(),
                        m.result.c.to_string(),
                        format!("{:.3}", m.result.statistic),
                        if m.result.significant_at_05 { "yes".into() } else { "no".into() },
                    ]
                })
                .collect();
            out += &aligned(&header, &rows);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("pipeline,seed,micro_precision,micro_recall,micro_f1\n");
        for p in &self.pipelines {
            for r in &p.runs {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    p.pipeline.name(),
                    r.seed,
                    r.eval.micro_precision,
                    r.eval.micro_recall,
                    r.eval.micro_f1
                );
            }
        }
        out
    }
}

impl StudyReport {
    /// Rows are the study variable, columns the methods' mean ± std micro-F1.
    pub fn to_table(&self) -> String {
        let methods: Vec<String> = self.rows.first().map_or(Vec::new(), |r| r.cells.iter().map(|c| c.method.clone()).collect());
        let mut header = vec![self.row_label.clone()];
        for m in &methods {
            header.extend([format!("{m} P"), format!("{m} R"), format!("{m} F1")]);
        }
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.key.clone()];
                for c in &r.cells {
                    row.push(format!("{:.4}", c.micro_precision.mean));
                    row.push(format!("{:.4}", c.micro_recall.mean));
                    row.push(fmt_ms(&c.micro_f1));
                }
                row
            })
            .collect();
        aligned(&header, &rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},method,micro_precision,micro_recall,micro_f1,micro_f1_std\n", self.row_label.replace(' ', "_"));
        for r in &self.rows {
            for c in &r.cells {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.key, c.method, c.micro_precision.mean, c.micro_recall.mean, c.micro_f1.mean, c.micro_f1.std
                );
            }
        }
        out
    }
}

/// Writes `<stem>.json`, `<stem>.txt` and `<stem>.csv` under `dir`.
pub fn write_report<T: Serialize>(
    dir: &Path,
    stem: &str,
    report: &T,
    table: &str,
    csv: &str,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let io = |p: &Path, e| ExperimentError::Io(p.display().to_string(), e);
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    for (ext, body) in [("json", json.as_str()), ("txt", table), ("csv", csv)] {
        let path = dir.join(format!("{stem}.{ext}"));
        fs::write(&path, body).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
