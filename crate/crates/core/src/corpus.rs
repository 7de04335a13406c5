//! Relation-extraction data model, dataset I/O and split utilities.
//!
//! A dataset lives in a directory holding a `dataset.json` manifest and
//! `train.jsonl` / `dev.jsonl` / `test.jsonl` split files, one JSON object per
//! line with `id`, `tokens` and `label`. Entity mentions are masked: every
//! instance carries the schema's `mask_a` and `mask_b` tokens exactly once.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub const DEFAULT_MASK_A: &str = "ENTITY_A";
pub const DEFAULT_MASK_B: &str = "ENTITY_B";
pub const DEFAULT_NULL_LABEL: &str = "null";
pub const MANIFEST_FILE: &str = "dataset.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {} invalid line(s); first: {}", .errors.len(), .errors[0])]
    Lines { path: PathBuf, errors: Vec<LineError> },
    #[error("split fraction {0} is outside (0, 1)")]
    Fraction(f64),
    #[error("split of {n} instances at fraction {fraction} leaves an empty side")]
    EmptySplit { n: usize, fraction: f64 },
    #[error("requested {requested} positives but only {available} are available")]
    TooManyPositives { requested: usize, available: usize },
    #[error("instance {id}: {problem}")]
    Instance { id: String, problem: InstanceProblem },
}

/// What is wrong with a single instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstanceProblem {
    UnknownLabel(String),
    MaskCount { mask: String, count: usize },
    EmptyTokens,
}

impl fmt::Display for InstanceProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceProblem::UnknownLabel(l) => write!(f, "unknown label {l:?}"),
            InstanceProblem::MaskCount { mask, count: 0 } => write!(f, "missing mask token {mask}"),
            InstanceProblem::MaskCount { mask, count } => {
                write!(f, "mask token {mask} occurs {count} times")
            }
            InstanceProblem::EmptyTokens => write!(f, "empty token list"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// The ordered relation-type inventory plus the null label and mask pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    relation_types: Vec<String>,
    null_label: String,
    mask_a: String,
    mask_b: String,
    /// Dataset-specific surface forms rewritten to `mask_a` on load.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    surface_masks_a: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    surface_masks_b: Vec<String>,
}

impl RelationSchema {
    pub fn new<S: Into<String>>(
        relation_types: impl IntoIterator<Item = S>,
        null_label: impl Into<String>,
        mask_a: impl Into<String>,
        mask_b: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let schema = Self {
            relation_types: relation_types.into_iter().map(Into::into).collect(),
            null_label: null_label.into(),
            mask_a: mask_a.into(),
            mask_b: mask_b.into(),
            surface_masks_a: Vec::new(),
            surface_masks_b: Vec::new(),
        };
        schema.check()?;
        Ok(schema)
    }

    /// Schema with the canonical `ENTITY_A` / `ENTITY_B` masks and `null` label.
    pub fn with_types<S: Into<String>>(
        relation_types: impl IntoIterator<Item = S>,
    ) -> Result<Self, CorpusError> {
        Self::new(relation_types, DEFAULT_NULL_LABEL, DEFAULT_MASK_A, DEFAULT_MASK_B)
    }

    pub fn with_surface_masks(
        mut self,
        a: impl IntoIterator<Item = String>,
        b: impl IntoIterator<Item = String>,
    ) -> Result<Self, CorpusError> {
        self.surface_masks_a = a.into_iter().collect();
        self.surface_masks_b = b.into_iter().collect();
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<(), CorpusError> {
        let err = |m: String| Err(CorpusError::Schema(m));
        if self.relation_types.is_empty() {
            return err("relation_types is empty".into());
        }
        let mut seen = HashSet::new();
        for t in &self.relation_types {
            if t.is_empty() {
                return err("empty relation type".into());
            }
            if !seen.insert(t.as_str()) {
                return err(format!("duplicate relation type {t:?}"));
            }
        }
        if seen.contains(self.null_label.as_str()) {
            return err(format!("null label {:?} is also a relation type", self.null_label));
        }
        for m in [&self.mask_a, &self.mask_b] {
            if m.is_empty() || m.split_whitespace().count() != 1 || m.trim() != m {
                return err(format!("mask {m:?} is not a single token"));
            }
        }
        if self.mask_a == self.mask_b {
            return err("mask_a and mask_b coincide".into());
        }
        let overlap = self.surface_masks_a.iter().any(|s| self.surface_masks_b.contains(s));
        if overlap {
            return err("a surface mask is declared for both entities".into());
        }
        Ok(())
    }

    pub fn relation_types(&self) -> &[String] {
        &self.relation_types
    }

    /// Number of relation types, excluding null.
    pub fn num_relations(&self) -> usize {
        self.relation_types.len()
    }

    /// Number of classifier outputs: relation types plus null.
    pub fn num_labels(&self) -> usize {
        self.relation_types.len() + 1
    }

    pub fn null_label(&self) -> &str {
        &self.null_label
    }

    pub fn mask_a(&self) -> &str {
        &self.mask_a
    }

    pub fn mask_b(&self) -> &str {
        &self.mask_b
    }

    /// Label index: relation types in declared order, null last.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        if label == self.null_label {
            return Some(self.relation_types.len());
        }
        self.relation_types.iter().position(|t| t == label)
    }

    pub fn null_index(&self) -> usize {
        self.relation_types.len()
    }

    pub fn label_name(&self, index: usize) -> &str {
        if index == self.relation_types.len() {
            &self.null_label
        } else {
            &self.relation_types[index]
        }
    }

    pub fn is_null(&self, label: &str) -> bool {
        label == self.null_label
    }

    /// Rewrites declared surface masks to the canonical pair.
    pub fn normalize_masks(&self, tokens: &mut [String]) {
        if self.surface_masks_a.is_empty() && self.surface_masks_b.is_empty() {
            return;
        }
        for tok in tokens.iter_mut() {
            if self.surface_masks_a.iter().any(|s| s == tok) {
                *tok = self.mask_a.clone();
            } else if self.surface_masks_b.iter().any(|s| s == tok) {
                *tok = self.mask_b.clone();
            }
        }
    }

    pub fn validate(&self, instance: &RelationInstance) -> Result<(), InstanceProblem> {
        if instance.tokens.is_empty() {
            return Err(InstanceProblem::EmptyTokens);
        }
        if self.label_index(&instance.label).is_none() {
            return Err(InstanceProblem::UnknownLabel(instance.label.clone()));
        }
        for mask in [&self.mask_a, &self.mask_b] {
            let count = instance.tokens.iter().filter(|t| *t == mask).count();
            if count != 1 {
                return Err(InstanceProblem::MaskCount { mask: mask.clone(), count });
            }
        }
        Ok(())
    }

    /// True when `tokens` holds each mask exactly once.
    pub fn has_mask_pair(&self, tokens: &[String]) -> bool {
        let a = tokens.iter().filter(|t| **t == self.mask_a).count();
        let b = tokens.iter().filter(|t| **t == self.mask_b).count();
        a == 1 && b == 1
    }
}

/// One masked sentence with its relation label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationInstance {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: String,
}

impl RelationInstance {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, label: impl Into<String>) -> Self {
        Self { id: id.into(), tokens, label: label.into() }
    }

    /// Whitespace-splitting convenience for fixtures; no other tokenization is done.
    pub fn from_text(id: impl Into<String>, text: &str, label: impl Into<String>) -> Self {
        Self::new(id, text.split_whitespace().map(str::to_owned).collect(), label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: RelationSchema,
    pub train: Vec<RelationInstance>,
    pub dev: Vec<RelationInstance>,
    pub test: Vec<RelationInstance>,
}

/// Split sizes: total and non-null counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub total: usize,
    pub positive: usize,
}

impl Dataset {
    pub fn new(
        schema: RelationSchema,
        train: Vec<RelationInstance>,
        dev: Vec<RelationInstance>,
        test: Vec<RelationInstance>,
    ) -> Result<Self, CorpusError> {
        for split in [&train, &dev, &test] {
            check_split(&schema, split)?;
        }
        Ok(Self { schema, train, dev, test })
    }

    pub fn counts(&self, split: &[RelationInstance]) -> SplitCounts {
        SplitCounts {
            total: split.len(),
            positive: split.iter().filter(|i| !self.schema.is_null(&i.label)).count(),
        }
    }

    pub fn train_counts(&self) -> SplitCounts {
        self.counts(&self.train)
    }

    pub fn positives(&self) -> usize {
        self.train_counts().positive
    }
}

fn check_split(schema: &RelationSchema, split: &[RelationInstance]) -> Result<(), CorpusError> {
    let mut ids = HashSet::new();
    for inst in split {
        schema
            .validate(inst)
            .map_err(|problem| CorpusError::Instance { id: inst.id.clone(), problem })?;
        if !ids.insert(inst.id.as_str()) {
            return Err(CorpusError::Schema(format!("duplicate id {:?}", inst.id)));
        }
    }
    Ok(())
}

/// Reads the schema from a dataset directory's manifest.
pub fn load_schema(dir: &Path) -> Result<RelationSchema, CorpusError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
    let schema: RelationSchema =
        serde_json::from_str(&text).map_err(|source| CorpusError::Manifest { path, source })?;
    schema.check()?;
    Ok(schema)
}

/// Loads a dataset directory, taking the schema from its manifest.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset, CorpusError> {
    let schema = load_schema(dir)?;
    load_dataset(dir, &schema)
}

/// Loads `train.jsonl`, optional `dev.jsonl`, and `test.jsonl` under `dir`.
///
/// Every line is checked; the error lists every offending line of the first
/// split that has any.
pub fn load_dataset(dir: &Path, schema: &RelationSchema) -> Result<Dataset, CorpusError> {
    let train = load_split(&dir.join("train.jsonl"), schema)?;
    let dev_path = dir.join("dev.jsonl");
    let dev = if dev_path.exists() { load_split(&dev_path, schema)? } else { Vec::new() };
    let test_path = dir.join("test.jsonl");
    let test = if test_path.exists() { load_split(&test_path, schema)? } else { Vec::new() };
    Ok(Dataset { schema: schema.clone(), train, dev, test })
}

/// Parses one JSON-lines split file.
pub fn load_split(path: &Path, schema: &RelationSchema) -> Result<Vec<RelationInstance>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io { path: path.to_owned(), source })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: path.to_owned(), source })?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut inst: RelationInstance = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                errors.push(LineError { line: lineno, message: format!("malformed record: {e}") });
                continue;
            }
        };
        schema.normalize_masks(&mut inst.tokens);
        if let Err(problem) = schema.validate(&inst) {
            errors.push(LineError { line: lineno, message: format!("instance {:?}: {problem}", inst.id) });
            continue;
        }
        if !ids.insert(inst.id.clone()) {
            errors.push(LineError { line: lineno, message: format!("duplicate id {:?}", inst.id) });
            continue;
        }
        out.push(inst);
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(CorpusError::Lines { path: path.to_owned(), errors })
    }
}

pub fn write_split(path: &Path, split: &[RelationInstance]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io { path: path.to_owned(), source };
    let mut w = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for inst in split {
        let line = serde_json::to_string(inst).expect("instance serializes");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes the manifest and split files. An empty dev split is not written.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io { path: dir.to_owned(), source };
    fs::create_dir_all(dir).map_err(io)?;
    let manifest = serde_json::to_string_pretty(&dataset.schema).expect("schema serializes");
    fs::write(dir.join(MANIFEST_FILE), manifest + "\n").map_err(io)?;
    write_split(&dir.join("train.jsonl"), &dataset.train)?;
    if !dataset.dev.is_empty() {
        write_split(&dir.join("dev.jsonl"), &dataset.dev)?;
    }
    write_split(&dir.join("test.jsonl"), &dataset.test)
}

/// Per-relation-type partition of a split. Null instances are only counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    pub by_class: BTreeMap<String, Vec<RelationInstance>>,
    pub null_count: usize,
}

impl ClassPartition {
    pub fn get(&self, label: &str) -> &[RelationInstance] {
        self.by_class.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sizes(&self) -> BTreeMap<String, usize> {
        self.by_class.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }
}

/// Groups non-null instances by label; every relation type gets an entry.
pub fn partition_by_class(split: &[RelationInstance], schema: &RelationSchema) -> ClassPartition {
    let mut by_class: BTreeMap<String, Vec<RelationInstance>> =
        schema.relation_types().iter().map(|t| (t.clone(), Vec::new())).collect();
    let mut null_count = 0;
    for inst in split {
        if schema.is_null(&inst.label) {
            null_count += 1;
        } else if let Some(bucket) = by_class.get_mut(&inst.label) {
            bucket.push(inst.clone());
        }
    }
    ClassPartition { by_class, null_count }
}

/// Seeded random dev split. `|dev| = round_half_up(fraction·|train|)`; both
/// sides keep the input order.
pub fn split_dev(
    train: &[RelationInstance],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<RelationInstance>, Vec<RelationInstance>), CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::Fraction(fraction));
    }
    let n = train.len();
    let k = seed::round_half_up(fraction * n as f64);
    if k == 0 || k >= n {
        return Err(CorpusError::EmptySplit { n, fraction });
    }
    let mut rng = seed::rng(seed);
    let mut in_dev = vec![false; n];
    for i in index::sample(&mut rng, n, k) {
        in_dev[i] = true;
    }
    let (mut rest, mut dev) = (Vec::with_capacity(n - k), Vec::with_capacity(k));
    for (inst, d) in train.iter().zip(in_dev) {
        if d { dev.push(inst.clone()) } else { rest.push(inst.clone()) }
    }
    Ok((rest, dev))
}

/// Keeps `n_positives` uniformly chosen non-null train instances and every
/// null one, preserving order. Dev and test are untouched.
pub fn subsample_positives(dataset: &Dataset, n_positives: usize, seed: u64) -> Result<Dataset, CorpusError> {
    let positive_idx: Vec<usize> = dataset
        .train
        .iter()
        .enumerate()
        .filter(|(_, i)| !dataset.schema.is_null(&i.label))
        .map(|(k, _)| k)
        .collect();
    if n_positives > positive_idx.len() {
        return Err(CorpusError::TooManyPositives { requested: n_positives, available: positive_idx.len() });
    }
    let mut keep = vec![false; dataset.train.len()];
    let mut rng = seed::rng(seed);
    for j in index::sample(&mut rng, positive_idx.len(), n_positives) {
        keep[positive_idx[j]] = true;
    }
    let train = dataset
        .train
        .iter()
        .enumerate()
        .filter(|(k, i)| keep[*k] || dataset.schema.is_null(&i.label))
        .map(|(_, i)| i.clone())
        .collect();
    Ok(Dataset { schema: dataset.schema.clone(), train, dev: dataset.dev.clone(), test: dataset.test.clone() })
}
