//! Desk-scale models: embedding providers, the constrained linear-chain
//! tagger, the pooled polarity classifier and the expression ensemble.

use thiserror::Error;

use crate::augment::AugmentError;
use crate::eval::EvalError;
use crate::tagscheme::TagError;

pub mod classifier;
pub mod config;
pub mod embedding;
pub mod ensemble;
pub mod persist;
pub mod pooling;
pub mod source;
pub mod tagger;
pub mod viterbi;

pub use classifier::{
    build_classifier_input, predict_polarity, target_examples, train_classifier, ClassifierExample,
    ClassifierInput, ClassifierModel, PolarityPrediction,
};
pub use config::TrainConfig;
pub use embedding::{EmbeddingMatrix, EmbeddingProvider, FileEmbeddings, HashedStatic, ProviderSpec};
pub use ensemble::{ensemble_union, expression_only};
pub use persist::{ModelKind, ModelMeta, SavedModel};
pub use pooling::{pool, PoolingStrategy};
pub use source::ExpressionSource;
pub use tagger::{predict_tags, train_tagger, TaggerModel, TrainingSummary};
pub use viterbi::{path_score, viterbi, TransitionMask};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training data is empty")]
    EmptyCorpus,
    #[error("degenerate class distribution: training data needs at least two polarity classes")]
    DegenerateClasses,
    #[error("conflict-polarity examples must be removed before classification")]
    ConflictExample,
    #[error("embedding dimension mismatch: expected d={expected}, got d={actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("no embedding record for `{0}`")]
    MissingRecord(String),
    #[error("embedding record `{key}` has {actual} rows, input has {expected} tokens")]
    TokenCount {
        key: String,
        expected: usize,
        actual: usize,
    },
    #[error("target is empty")]
    EmptyTarget,
    #[error("target index {index} out of range for {len} rows")]
    TargetOutOfRange { index: usize, len: usize },
    #[error("sentence `{sent_id}`: target does not fit in {max_len} tokens")]
    TargetTruncated { sent_id: String, max_len: usize },
    #[error("every label path is masked")]
    AllPathsMasked,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tag(#[from] TagError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
