//! Constrained first-order Viterbi decoding.

use ndarray::Array2;

use super::ModelError;
use crate::tagscheme::Tag;

/// Which label transitions (and which start labels) are legal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionMask {
    labels: usize,
    allowed: Vec<bool>,
    start: Vec<bool>,
}

impl TransitionMask {
    pub fn unconstrained(labels: usize) -> Self {
        TransitionMask {
            labels,
            allowed: vec![true; labels * labels],
            start: vec![true; labels],
        }
    }

    /// Forbids exactly the transitions that break BIO validity: an `I`
    /// may only follow a `B` or `I` of the same chunk, and never starts.
    pub fn bio(labels: &[Tag]) -> Self {
        let l = labels.len();
        let mut allowed = vec![true; l * l];
        for (p, prev) in labels.iter().enumerate() {
            for (n, next) in labels.iter().enumerate() {
                allowed[p * l + n] = next.may_follow(Some(prev));
            }
        }
        TransitionMask {
            labels: l,
            allowed,
            start: labels.iter().map(|t| t.may_follow(None)).collect(),
        }
    }

    pub fn from_fn(labels: usize, start: impl Fn(usize) -> bool, allow: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = vec![false; labels * labels];
        for p in 0..labels {
            for n in 0..labels {
                allowed[p * labels + n] = allow(p, n);
            }
        }
        TransitionMask {
            labels,
            allowed,
            start: (0..labels).map(start).collect(),
        }
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn allows(&self, prev: usize, next: usize) -> bool {
        self.allowed[prev * self.labels + next]
    }

    pub fn allows_start(&self, label: usize) -> bool {
        self.start[label]
    }

    pub fn path_is_legal(&self, path: &[usize]) -> bool {
        match path.first() {
            None => true,
            Some(&first) => {
                self.allows_start(first) && path.windows(2).all(|w| self.allows(w[0], w[1]))
            }
        }
    }
}

/// Σ emissions[i, yᵢ] + Σ transitions[yᵢ₋₁, yᵢ], summed left to right.
pub fn path_score(emissions: &Array2<f64>, transitions: &Array2<f64>, path: &[usize]) -> f64 {
    let mut score = 0.0;
    for (i, &y) in path.iter().enumerate() {
        score += emissions[[i, y]];
        if i > 0 {
            score += transitions[[path[i - 1], y]];
        }
    }
    score
}

/// Best mask-legal label path and its score.
///
/// Among equally scoring paths the lexicographically smallest one wins:
/// at the leftmost position where two optimal paths differ, the lower
/// label index is kept. This is done with a backward pass of best suffix
/// scores followed by a greedy forward walk.
pub fn viterbi(
    emissions: &Array2<f64>,
    transitions: &Array2<f64>,
    mask: &TransitionMask,
) -> Result<(Vec<usize>, f64), ModelError> {
    let (n, l) = emissions.dim();
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    if transitions.dim() != (l, l) || mask.labels() != l {
        return Err(ModelError::DimensionMismatch {
            expected: l,
            actual: transitions.nrows().max(mask.labels()),
        });
    }
    // suffix[i][y]: best score of positions i.. given label y at i
    let mut suffix = Array2::from_elem((n, l), f64::NEG_INFINITY);
    for y in 0..l {
        suffix[[n - 1, y]] = emissions[[n - 1, y]];
    }
    for i in (0..n - 1).rev() {
        for y in 0..l {
            let mut best = f64::NEG_INFINITY;
            for next in 0..l {
                if mask.allows(y, next) {
                    let s = transitions[[y, next]] + suffix[[i + 1, next]];
                    if s > best {
                        best = s;
                    }
                }
            }
            suffix[[i, y]] = emissions[[i, y]] + best;
        }
    }
    let mut path = Vec::with_capacity(n);
    let mut best = f64::NEG_INFINITY;
    let mut first = None;
    for y in 0..l {
        if mask.allows_start(y) && suffix[[0, y]] > best {
            best = suffix[[0, y]];
            first = Some(y);
        }
    }
    let Some(mut prev) = first else {
        return Err(ModelError::AllPathsMasked);
    };
    path.push(prev);
    for i in 1..n {
        let mut best_next = None;
        let mut best = f64::NEG_INFINITY;
        for next in 0..l {
            if mask.allows(prev, next) {
                let s = transitions[[prev, next]] + suffix[[i, next]];
                if s > best {
                    best = s;
                    best_next = Some(next);
                }
            }
        }
        prev = best_next.ok_or(ModelError::AllPathsMasked)?;
        path.push(prev);
    }
    let score = path_score(emissions, transitions, &path);
    Ok((path, score))
}
