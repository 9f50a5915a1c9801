use std::fmt;

use ndarray::{concatenate, Array1, Axis};
use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingMatrix;
use super::ModelError;
use crate::corpus::Span;

/// How a target's token vectors become one classifier input vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingStrategy {
    /// Sentence-level vector; the target is ignored.
    Cls,
    First,
    Mean,
    Max,
    /// `[max ; min ; mean]`, three times the embedding width.
    MaxMM,
}

impl PoolingStrategy {
    pub const ALL: [PoolingStrategy; 5] = [
        PoolingStrategy::Cls,
        PoolingStrategy::First,
        PoolingStrategy::Mean,
        PoolingStrategy::Max,
        PoolingStrategy::MaxMM,
    ];

    pub fn output_dim(&self, d: usize) -> usize {
        match self {
            PoolingStrategy::MaxMM => 3 * d,
            _ => d,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PoolingStrategy::Cls => "cls",
            PoolingStrategy::First => "first",
            PoolingStrategy::Mean => "mean",
            PoolingStrategy::Max => "max",
            PoolingStrategy::MaxMM => "maxmm",
        }
    }
}

impl fmt::Display for PoolingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PoolingStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        PoolingStrategy::ALL
            .into_iter()
            .find(|p| p.as_str() == s.to_lowercase())
            .ok_or_else(|| format!("unknown pooling strategy `{s}`"))
    }
}

/// Pools the rows selected by `target` (spans in the matrix's own
/// coordinates, ordered by start).
pub fn pool(
    matrix: &EmbeddingMatrix,
    target: &[Span],
    strategy: PoolingStrategy,
) -> Result<Array1<f64>, ModelError> {
    if strategy == PoolingStrategy::Cls {
        return Ok(matrix.sentence_vector.clone());
    }
    let rows: Vec<usize> = target.iter().flat_map(Span::indices).collect();
    if rows.is_empty() {
        return Err(ModelError::EmptyTarget);
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= matrix.len()) {
        return Err(ModelError::TargetOutOfRange {
            index: bad,
            len: matrix.len(),
        });
    }
    let selected = matrix.token_vectors.select(Axis(0), &rows);
    let fold = |init: f64, f: fn(f64, f64) -> f64| selected.fold_axis(Axis(0), init, |&a, &b| f(a, b));
    Ok(match strategy {
        PoolingStrategy::First => selected.row(0).to_owned(),
        PoolingStrategy::Mean => selected.mean_axis(Axis(0)).expect("non-empty"),
        PoolingStrategy::Max => fold(f64::NEG_INFINITY, f64::max),
        PoolingStrategy::MaxMM => {
            let max = fold(f64::NEG_INFINITY, f64::max);
            let min = fold(f64::INFINITY, f64::min);
            let mean = selected.mean_axis(Axis(0)).expect("non-empty");
            concatenate(Axis(0), &[max.view(), min.view(), mean.view()]).expect("same rank")
        }
        PoolingStrategy::Cls => unreachable!(),
    })
}
