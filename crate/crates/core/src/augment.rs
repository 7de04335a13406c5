//! The augmentation pipeline and its ensemble baselines.
//!
//! [`build_pool`] adapts a generator to every relation type and keeps a
//! filtered synthetic pool; [`train_dare`] trains each ensemble member on all
//! gold data plus its own ratio-controlled draw from that pool.
//! [`train_balanced_bagging`] and [`train_class_weighted`] are the
//! imbalance baselines. Every ensemble predicts by plurality vote over the
//! members' thresholded decisions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{
    compute_class_weights, default_threshold_grid, tune_threshold, tune_threshold_from_probs, ClassWeights,
    ClassifierBackend, ClassifierError, LinearTextClassifier, PredictionRule, ProbabilisticClassifier,
};
use crate::corpus::{partition_by_class, Dataset, RelationInstance, RelationSchema};
use crate::eval;
use crate::generator::{generate_filtered, GeneratorBackend, GeneratorError, GeneratorParams};
use crate::seed;

pub const DEFAULT_POOL_MULTIPLIER: f64 = 5.0;
pub const DEFAULT_DARE_MEMBERS: usize = 20;
pub const DEFAULT_BASELINE_MEMBERS: usize = 10;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("relation type {0:?} has no gold training instances")]
    NoGold(String),
    #[error("synthetic generation failed for {}", .0.iter().map(|(c, e)| format!("{c:?} ({e})")).collect::<Vec<_>>().join(", "))]
    Generation(Vec<(String, GeneratorError)>),
    #[error("generator: {0}")]
    Generator(#[from] GeneratorError),
    #[error("classifier: {0}")]
    Classifier(#[from] ClassifierError),
    #[error("invalid ensemble configuration: {0}")]
    Config(String),
    #[error("the dataset has no development split for threshold tuning")]
    NoDev,
    #[error("synthetic pool has no entry for {0:?}")]
    PoolMissing(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("ensemble format: {0}")]
    Format(String),
}

/// Generation record for one relation type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProvenance {
    pub gold: usize,
    pub requested: usize,
    pub attempts: usize,
    pub rejected_mask: usize,
    pub rejected_length: usize,
    pub params: GeneratorParams,
    /// Draw seed per accepted instance, parallel to the pool entries.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPool {
    pub generator: String,
    pub per_class: BTreeMap<String, Vec<RelationInstance>>,
    pub provenance: BTreeMap<String, ClassProvenance>,
}

impl SyntheticPool {
    pub fn len(&self) -> usize {
        self.per_class.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn instances(&self) -> impl Iterator<Item = &RelationInstance> {
        self.per_class.values().flatten()
    }

    /// SHA-256 over the generator id and every instance, in class order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.generator.as_bytes());
        for (label, insts) in &self.per_class {
            h.update(b"\x00");
            h.update(label.as_bytes());
            for i in insts {
                h.update(b"\x01");
                h.update(i.id.as_bytes());
                for t in &i.tokens {
                    h.update(b"\x02");
                    h.update(t.as_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<(), AugmentError> {
        let text = serde_json::to_string(self).expect("pool serializes");
        fs::write(path, text).map_err(|e| AugmentError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, AugmentError> {
        let text = fs::read_to_string(path).map_err(|e| AugmentError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| AugmentError::Format(e.to_string()))
    }
}

/// Adapts the generator to each relation type and draws
/// `round(multiplier·|D_c|)` filtered instances per type.
///
/// Class `k` samples with seed `derive(params.seed, k)`. Failures are
/// collected over all classes before returning.
pub fn build_pool(
    dataset: &Dataset,
    backend: &mut dyn GeneratorBackend,
    params: &GeneratorParams,
    multiplier: f64,
) -> Result<SyntheticPool, AugmentError> {
    if !(multiplier >= 0.0 && multiplier.is_finite()) {
        return Err(AugmentError::Config(format!("pool multiplier must be non-negative, got {multiplier}")));
    }
    params.validate()?;
    let schema = &dataset.schema;
    let partition = partition_by_class(&dataset.train, schema);
    if let Some(t) = schema.relation_types().iter().find(|t| partition.get(t).is_empty()) {
        return Err(AugmentError::NoGold(t.clone()));
    }
    let mut pool = SyntheticPool { generator: backend.id(), per_class: BTreeMap::new(), provenance: BTreeMap::new() };
    let mut failures = Vec::new();
    for (k, label) in schema.relation_types().iter().enumerate() {
        let gold = partition.get(label);
        let requested = seed::round_half_up(multiplier * gold.len() as f64);
        let class_params = params.with_seed(seed::derive(params.seed, k as u64));
        let mut prov = ClassProvenance {
            gold: gold.len(),
            requested,
            attempts: 0,
            rejected_mask: 0,
            rejected_length: 0,
            params: class_params.clone(),
            seeds: Vec::new(),
        };
        if requested == 0 {
            pool.per_class.insert(label.clone(), Vec::new());
            pool.provenance.insert(label.clone(), prov);
            continue;
        }
        let corpus: Vec<Vec<String>> = gold.iter().map(|i| i.tokens.clone()).collect();
        let outcome = backend
            .adapt(label, &corpus)
            .and_then(|mut source| generate_filtered(source.as_mut(), &class_params, schema, requested, label, None));
        match outcome {
            Ok(batch) => {
                log::info!(
                    "{label}: {} synthetic instances, {} rejected of {} draws",
                    batch.instances.len(),
                    batch.rejected(),
                    batch.attempts
                );
                prov.attempts = batch.attempts;
                prov.rejected_mask = batch.rejected_mask;
                prov.rejected_length = batch.rejected_length;
                prov.seeds = batch.seeds;
                pool.per_class.insert(label.clone(), batch.instances);
                pool.provenance.insert(label.clone(), prov);
            }
            Err(e) => failures.push((label.clone(), e)),
        }
    }
    if failures.is_empty() {
        Ok(pool)
    } else {
        Err(AugmentError::Generation(failures))
    }
}

/// Per relation type, `round(r·|D_c|)` pool instances: without replacement
/// when the pool is large enough, with replacement otherwise.
pub fn subsample_pool(
    pool: &SyntheticPool,
    dataset: &Dataset,
    ratio: f64,
    seed: u64,
) -> Result<Vec<RelationInstance>, AugmentError> {
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(AugmentError::Config(format!("ratio must be non-negative, got {ratio}")));
    }
    let schema = &dataset.schema;
    let partition = partition_by_class(&dataset.train, schema);
    let mut out = Vec::new();
    for (k, label) in schema.relation_types().iter().enumerate() {
        let want = seed::round_half_up(ratio * partition.get(label).len() as f64);
        if want == 0 {
            continue;
        }
        let available = pool.per_class.get(label).ok_or_else(|| AugmentError::PoolMissing(label.clone()))?;
        if available.is_empty() {
            return Err(AugmentError::PoolMissing(label.clone()));
        }
        let mut rng = seed::rng(seed::derive(seed, k as u64));
        if want <= available.len() {
            let mut picked = index::sample(&mut rng, available.len(), want).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| available[i].clone()));
        } else {
            log::warn!("{label}: pool of {} is smaller than {want}; sampling with replacement", available.len());
            out.extend((0..want).map(|_| available[rng.gen_range(0..available.len())].clone()));
        }
    }
    Ok(out)
}

/// Per-member undersample: every label cut down to the rarest label's count.
pub fn balanced_undersample(train: &[RelationInstance], schema: &RelationSchema, seed: u64) -> Vec<RelationInstance> {
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); schema.num_labels()];
    for (i, inst) in train.iter().enumerate() {
        if let Some(k) = schema.label_index(&inst.label) {
            by_label[k].push(i);
        }
    }
    let minority = by_label.iter().map(Vec::len).filter(|&n| n > 0).min().unwrap_or(0);
    let mut keep = vec![false; train.len()];
    for (k, idx) in by_label.iter().enumerate() {
        if idx.len() <= minority {
            idx.iter().for_each(|&i| keep[i] = true);
        } else {
            let mut rng = seed::rng(seed::derive(seed, k as u64));
            for j in index::sample(&mut rng, idx.len(), minority) {
                keep[idx[j]] = true;
            }
        }
    }
    train.iter().zip(keep).filter(|(_, k)| *k).map(|(i, _)| i.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdPolicy {
    /// Each member tunes its own threshold on gold dev.
    PerMember,
    /// One threshold for all members, chosen by voted dev micro-F1.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub n_members: usize,
    pub ratio: f64,
    pub seed: u64,
    pub threshold_policy: ThresholdPolicy,
    pub threshold_grid: Vec<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self::dare()
    }
}

impl EnsembleConfig {
    pub fn dare() -> Self {
        Self {
            n_members: DEFAULT_DARE_MEMBERS,
            ratio: 1.0,
            seed: 0,
            threshold_policy: ThresholdPolicy::PerMember,
            threshold_grid: default_threshold_grid(),
        }
    }

    pub fn baseline() -> Self {
        Self { n_members: DEFAULT_BASELINE_MEMBERS, ..Self::dare() }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.n_members == 0 {
            return Err(AugmentError::Config("n_members must be at least 1".into()));
        }
        if !(self.ratio >= 0.0 && self.ratio.is_finite()) {
            return Err(AugmentError::Config(format!("ratio must be non-negative, got {}", self.ratio)));
        }
        if self.threshold_grid.is_empty() || self.threshold_grid.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(AugmentError::Config("threshold grid must be non-empty and inside (0, 1)".into()));
        }
        Ok(())
    }

    /// Seed of member `m`; its data draw and training use derived streams.
    pub fn member_seed(&self, m: usize) -> u64 {
        seed::derive(self.seed, m as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberInfo {
    pub seed: u64,
    pub threshold: f64,
    pub dev_micro_f1: f64,
    pub train_size: usize,
    /// Training instances per label, null included.
    pub label_counts: BTreeMap<String, usize>,
    /// Synthetic instances per relation type (empty for baselines).
    pub synthetic_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct Member<M> {
    pub model: M,
    pub rule: PredictionRule,
    pub info: MemberInfo,
}

#[derive(Debug, Clone)]
pub struct Ensemble<M> {
    pub members: Vec<Member<M>>,
    pub config: EnsembleConfig,
    pub schema: RelationSchema,
}

/// Plurality over label indices (null = `null_index`). Ties go to null when
/// null is tied for the lead, otherwise to the lowest index.
pub fn plurality(decisions: &[usize], null_index: usize) -> usize {
    let mut counts = vec![0usize; null_index + 1];
    for &d in decisions {
        counts[d] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    if counts[null_index] == top {
        null_index
    } else {
        counts.iter().position(|&c| c == top).expect("a maximum exists")
    }
}

impl<M: ProbabilisticClassifier> Ensemble<M> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Each member's thresholded decision for `instance`.
    pub fn member_decisions(&self, instance: &RelationInstance) -> Vec<usize> {
        self.members.iter().map(|m| m.rule.decide(&m.model.predict_proba(instance))).collect()
    }

    pub fn vote_index(&self, instance: &RelationInstance) -> usize {
        plurality(&self.member_decisions(instance), self.schema.null_index())
    }

    pub fn vote(&self, instance: &RelationInstance) -> String {
        self.schema.label_name(self.vote_index(instance)).to_owned()
    }

    pub fn predict_all(&self, instances: &[RelationInstance]) -> Vec<String> {
        instances.par_iter().map(|i| self.vote(i)).collect()
    }
}

pub fn vote<M: ProbabilisticClassifier>(ensemble: &Ensemble<M>, instance: &RelationInstance) -> String {
    ensemble.vote(instance)
}

fn label_counts(train: &[RelationInstance], schema: &RelationSchema) -> BTreeMap<String, usize> {
    let mut out: BTreeMap<String, usize> =
        (0..schema.num_labels()).map(|k| (schema.label_name(k).to_owned(), 0)).collect();
    for i in train {
        *out.entry(i.label.clone()).or_default() += 1;
    }
    out
}

struct MemberPlan {
    train: Vec<RelationInstance>,
    weights: ClassWeights,
    synthetic_counts: BTreeMap<String, usize>,
}

/// Trains `config.n_members` members in parallel; `plan(m, member_seed)`
/// supplies each member's training data and class weights.
fn train_ensemble<B, F>(
    dataset: &Dataset,
    config: &EnsembleConfig,
    backend: &B,
    plan: F,
) -> Result<Ensemble<B::Model>, AugmentError>
where
    B: ClassifierBackend,
    B::Model: Send,
    F: Fn(usize, u64) -> Result<MemberPlan, AugmentError> + Sync,
{
    config.validate()?;
    if dataset.dev.is_empty() {
        return Err(AugmentError::NoDev);
    }
    let schema = &dataset.schema;
    let grid = &config.threshold_grid;
    let members: Vec<Member<B::Model>> = (0..config.n_members)
        .into_par_iter()
        .map(|m| {
            let member_seed = config.member_seed(m);
            let p = plan(m, member_seed)?;
            let model = backend.train(&p.train, schema, &p.weights, seed::derive(member_seed, 2))?;
            let choice = match config.threshold_policy {
                ThresholdPolicy::PerMember => tune_threshold(&model, &dataset.dev, schema, grid)?,
                // Replaced below once all members exist.
                ThresholdPolicy::Shared => tune_threshold(&model, &dataset.dev, schema, &grid[..1])?,
            };
            let info = MemberInfo {
                seed: member_seed,
                threshold: choice.rule.threshold(),
                dev_micro_f1: choice.dev_micro_f1,
                train_size: p.train.len(),
                label_counts: label_counts(&p.train, schema),
                synthetic_counts: p.synthetic_counts,
            };
            Ok(Member { model, rule: choice.rule, info })
        })
        .collect::<Result<_, AugmentError>>()?;
    let mut ensemble = Ensemble { members, config: config.clone(), schema: schema.clone() };
    if config.threshold_policy == ThresholdPolicy::Shared {
        share_threshold(&mut ensemble, &dataset.dev)?;
    }
    Ok(ensemble)
}

/// Sets one threshold on every member, maximising the voted dev micro-F1.
fn share_threshold<M: ProbabilisticClassifier>(ensemble: &mut Ensemble<M>, dev: &[RelationInstance]) -> Result<(), AugmentError> {
    let schema = &ensemble.schema;
    let null = schema.null_index();
    let gold: Vec<usize> = dev.iter().map(|i| schema.label_index(&i.label).unwrap_or(null)).collect();
    let probs: Vec<Vec<Vec<f64>>> =
        ensemble.members.iter().map(|m| dev.iter().map(|i| m.model.predict_proba(i)).collect()).collect();
    let mut grid = ensemble.config.threshold_grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
    let mut best: Option<(PredictionRule, f64)> = None;
    for t in grid {
        let rule = PredictionRule::new(t)?;
        let voted: Vec<usize> = (0..dev.len())
            .map(|j| plurality(&probs.iter().map(|p| rule.decide(&p[j])).collect::<Vec<_>>(), null))
            .collect();
        let f1 = eval::micro_f1_indices(&voted, &gold, null);
        if best.is_none_or(|(_, b)| f1 > b) {
            best = Some((rule, f1));
        }
    }
    let (rule, _) = best.expect("validated non-empty grid");
    for (m, p) in ensemble.members.iter_mut().zip(&probs) {
        let own = tune_threshold_from_probs(p, &gold, null, &[rule.threshold()])?;
        m.rule = rule;
        m.info.threshold = rule.threshold();
        m.info.dev_micro_f1 = own.dev_micro_f1;
    }
    Ok(())
}

/// Each member: all gold training data plus an independently seeded pool
/// draw of `round(ratio·|D_c|)` per relation type, uniform class weights.
pub fn train_dare<B>(
    dataset: &Dataset,
    pool: &SyntheticPool,
    config: &EnsembleConfig,
    backend: &B,
) -> Result<Ensemble<B::Model>, AugmentError>
where
    B: ClassifierBackend,
    B::Model: Send,
{
    let schema = &dataset.schema;
    if config.ratio > 0.0 {
        if let Some(t) = schema.relation_types().iter().find(|t| !pool.per_class.contains_key(*t)) {
            return Err(AugmentError::PoolMissing(t.clone()));
        }
    }
    let uniform = ClassWeights::uniform(schema);
    train_ensemble(dataset, config, backend, |_, member_seed| {
        let synthetic = subsample_pool(pool, dataset, config.ratio, seed::derive(member_seed, 1))?;
        let mut synthetic_counts: BTreeMap<String, usize> =
            schema.relation_types().iter().map(|t| (t.clone(), 0)).collect();
        for s in &synthetic {
            *synthetic_counts.entry(s.label.clone()).or_default() += 1;
        }
        let mut train = dataset.train.clone();
        train.extend(synthetic);
        Ok(MemberPlan { train, weights: uniform.clone(), synthetic_counts })
    })
}

/// Each member trains on a seeded undersample where every label has the
/// rarest label's count.
pub fn train_balanced_bagging<B>(
    dataset: &Dataset,
    config: &EnsembleConfig,
    backend: &B,
) -> Result<Ensemble<B::Model>, AugmentError>
where
    B: ClassifierBackend,
    B::Model: Send,
{
    let uniform = ClassWeights::uniform(&dataset.schema);
    train_ensemble(dataset, config, backend, |_, member_seed| {
        Ok(MemberPlan {
            train: balanced_undersample(&dataset.train, &dataset.schema, seed::derive(member_seed, 1)),
            weights: uniform.clone(),
            synthetic_counts: BTreeMap::new(),
        })
    })
}

/// Each member trains on the full gold split with `freq_min / freq_c` class weights.
pub fn train_class_weighted<B>(
    dataset: &Dataset,
    config: &EnsembleConfig,
    backend: &B,
) -> Result<Ensemble<B::Model>, AugmentError>
where
    B: ClassifierBackend,
    B::Model: Send,
{
    let weights = compute_class_weights(&dataset.train, &dataset.schema)?;
    train_ensemble(dataset, config, backend, |_, _| {
        Ok(MemberPlan { train: dataset.train.clone(), weights: weights.clone(), synthetic_counts: BTreeMap::new() })
    })
}

/// Members train on the full gold split with uniform weights; only the
/// training seed differs.
pub fn train_gold_only<B>(
    dataset: &Dataset,
    config: &EnsembleConfig,
    backend: &B,
) -> Result<Ensemble<B::Model>, AugmentError>
where
    B: ClassifierBackend,
    B::Model: Send,
{
    let uniform = ClassWeights::uniform(&dataset.schema);
    train_ensemble(dataset, config, backend, |_, _| {
        Ok(MemberPlan { train: dataset.train.clone(), weights: uniform.clone(), synthetic_counts: BTreeMap::new() })
    })
}

const ENSEMBLE_FORMAT: &str = "dare-ensemble/1";

#[derive(Serialize, Deserialize)]
struct EnsembleManifest {
    format: String,
    config: EnsembleConfig,
    schema: RelationSchema,
    members: Vec<ManifestMember>,
    #[serde(default)]
    pool_digest: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ManifestMember {
    file: String,
    info: MemberInfo,
}

impl Ensemble<LinearTextClassifier> {
    /// Writes `manifest.json` and one `member-NN.json` per member under `dir`.
    pub fn save(&self, dir: &Path, pool_digest: Option<&str>) -> Result<(), AugmentError> {
        let io = |e| AugmentError::Io(dir.display().to_string(), e);
        fs::create_dir_all(dir).map_err(io)?;
        let mut members = Vec::new();
        for (m, member) in self.members.iter().enumerate() {
            let file = format!("member-{m:02}.json");
            member
                .model
                .save(&dir.join(&file), Some(&member.rule))
                .map_err(AugmentError::Classifier)?;
            members.push(ManifestMember { file, info: member.info.clone() });
        }
        let manifest = EnsembleManifest {
            format: ENSEMBLE_FORMAT.into(),
            config: self.config.clone(),
            schema: self.schema.clone(),
            members,
            pool_digest: pool_digest.map(str::to_owned),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), text).map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self, AugmentError> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| AugmentError::Io(path.display().to_string(), e))?;
        let manifest: EnsembleManifest = serde_json::from_str(&text).map_err(|e| AugmentError::Format(e.to_string()))?;
        if manifest.format != ENSEMBLE_FORMAT {
            return Err(AugmentError::Format(format!("unsupported ensemble format {:?}", manifest.format)));
        }
        let members = manifest
            .members
            .into_iter()
            .map(|m| {
                let (model, rule) = LinearTextClassifier::load(&dir.join(&m.file))?;
                let rule = rule.ok_or_else(|| ClassifierError::Format(format!("{} has no threshold", m.file)))?;
                Ok(Member { model, rule, info: m.info })
            })
            .collect::<Result<Vec<_>, ClassifierError>>()?;
        Ok(Ensemble { members, config: manifest.config, schema: manifest.schema })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plurality_rules() {
        // labels: A=0, B=1, null=2
        assert_eq!(plurality(&[0, 0, 2], 2), 0);
        assert_eq!(plurality(&[0, 2], 2), 2);
        assert_eq!(plurality(&[1, 0], 2), 0);
        assert_eq!(plurality(&[1, 1, 0, 0, 2], 2), 0);
        assert_eq!(plurality(&[1, 1, 0, 0, 2, 2], 2), 2);
        assert_eq!(plurality(&[2], 2), 2);
    }

    fn inst(id: &str, label: &str) -> RelationInstance {
        RelationInstance::from_text(id, "ENTITY_A x ENTITY_B", label)
    }

    #[test]
    fn undersample_equalises() {
        let schema = RelationSchema::with_types(["a"]).unwrap();
        let mut train: Vec<_> = (0..7).map(|k| inst(&format!("p{k}"), "a")).collect();
        train.extend((0..30).map(|k| inst(&format!("n{k}"), "null")));
        let s1 = balanced_undersample(&train, &schema, 1);
        let s2 = balanced_undersample(&train, &schema, 2);
        assert_eq!(s1.len(), 14);
        assert_eq!(s1.iter().filter(|i| i.label == "a").count(), 7);
        assert_ne!(s1, s2);
        let balanced: Vec<_> = train.iter().take(14).cloned().collect::<Vec<_>>();
        let b: Vec<_> = balanced.iter().filter(|i| i.label == "a").cloned().chain(train.iter().skip(7).take(7).cloned()).collect();
        assert_eq!(balanced_undersample(&b, &schema, 3), b);
    }

    fn pool_fixture() -> (Dataset, SyntheticPool) {
        let schema = RelationSchema::with_types(["a", "b"]).unwrap();
        let mut train: Vec<_> = (0..100).map(|k| inst(&format!("a{k}"), "a")).collect();
        train.extend((0..3).map(|k| inst(&format!("b{k}"), "b")));
        train.push(inst("n0", "null"));
        let ds = Dataset::new(schema, train, vec![], vec![]).unwrap();
        let mut per_class = BTreeMap::new();
        per_class.insert("a".to_string(), (0..500).map(|k| inst(&format!("sa{k}"), "a")).collect());
        per_class.insert("b".to_string(), (0..2).map(|k| inst(&format!("sb{k}"), "b")).collect());
        (ds, SyntheticPool { generator: "test".into(), per_class, provenance: BTreeMap::new() })
    }

    #[test]
    fn pool_subsample_counts() {
        let (ds, pool) = pool_fixture();
        let s = subsample_pool(&pool, &ds, 4.0, 9).unwrap();
        let a: Vec<_> = s.iter().filter(|i| i.label == "a").collect();
        assert_eq!(a.len(), 400);
        let distinct: std::collections::HashSet<_> = a.iter().map(|i| &i.id).collect();
        assert_eq!(distinct.len(), 400);
        // b: want 12 from a pool of 2, so with replacement.
        assert_eq!(s.iter().filter(|i| i.label == "b").count(), 12);
        assert!(subsample_pool(&pool, &ds, 0.0, 9).unwrap().is_empty());
        assert_eq!(subsample_pool(&pool, &ds, 4.0, 9).unwrap(), s);
        assert_ne!(subsample_pool(&pool, &ds, 4.0, 10).unwrap(), s);
    }

    #[test]
    fn digest_changes_with_content() {
        let (_, pool) = pool_fixture();
        let mut other = pool.clone();
        other.per_class.get_mut("b").unwrap()[0].tokens.push("x".into());
        assert_ne!(pool.digest(), other.digest());
        assert_eq!(pool.digest(), pool.clone().digest());
    }

    #[test]
    fn config_validation() {
        assert!(EnsembleConfig::dare().validate().is_ok());
        assert_eq!(EnsembleConfig::dare().n_members, 20);
        assert_eq!(EnsembleConfig::baseline().n_members, 10);
        assert!(EnsembleConfig { n_members: 0, ..EnsembleConfig::dare() }.validate().is_err());
        assert!(EnsembleConfig { ratio: -1.0, ..EnsembleConfig::dare() }.validate().is_err());
    }
}
