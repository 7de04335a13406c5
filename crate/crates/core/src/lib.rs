//! Generative data augmentation for relation extraction.
//!
//! The crate is organised around the augmentation loop: a relation dataset
//! ([`corpus`]) is split per relation type, a generator ([`generator`]) is
//! adapted to each split and sampled under entity-mask and length filters,
//! and an ensemble of classifiers ([`classifier`], [`augment`]) is trained on
//! gold plus synthetic data and combined by majority vote. [`eval`] scores the
//! voted output and [`experiment`] drives the imbalance, ratio and generator
//! studies. [`external`] speaks the `dare-gen/1` stdio protocol so that an
//! out-of-process neural generator can stand in for the built-in n-gram model.

pub mod augment;
pub mod classifier;
pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod external;
pub mod generator;
pub mod seed;
pub mod synth;

pub use augment::{Ensemble, EnsembleConfig, SyntheticPool, ThresholdPolicy};
pub use classifier::{ClassWeights, LinearTextClassifier, PredictionRule, TrainConfig};
pub use corpus::{Dataset, RelationInstance, RelationSchema};
pub use eval::{EvalResult, McNemarResult};
pub use generator::{AdaptedLM, GeneratorParams, LanguageModel, NGramLM};
