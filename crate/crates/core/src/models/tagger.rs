//! Linear-chain sequence tagger over provider embeddings.
//!
//! Scores are `W[y] · x_i` per token plus a label-bigram transition
//! score; decoding is Viterbi restricted to BIO-legal paths. Weights are
//! learned with the averaged structured perceptron.

use std::collections::HashMap;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::{EmbeddingMatrix, EmbeddingProvider, ProviderSpec};
use super::source::ExpressionSource;
use super::viterbi::{viterbi, TransitionMask};
use super::{ModelError, TrainConfig};
use crate::augment::{insert_tags, AugmentMode};
use crate::corpus::{Corpus, Sentence};
use crate::eval::token_f1;
use crate::tagscheme::{self, label_inventory, Tag, TagScheme, TagSequence};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    /// 1-based epoch whose averaged weights were kept.
    pub selected_epoch: usize,
    /// Dev selection metric after each epoch (empty without dev data).
    pub dev_scores: Vec<f64>,
    /// Mean dev cross-entropy after each epoch; recorded by the classifier
    /// only, not used for selection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dev_losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggerModel {
    pub scheme: TagScheme,
    pub mode: AugmentMode,
    pub labels: Vec<Tag>,
    /// L x d
    pub emissions: Array2<f64>,
    /// L x L, indexed `[prev, next]`
    pub transitions: Array2<f64>,
    pub mask: TransitionMask,
    pub provider: ProviderSpec,
    pub config: TrainConfig,
    pub summary: TrainingSummary,
}

/// A sentence prepared for the tagger: augmented tokens, their
/// embeddings (truncated), and where each original token landed.
struct Prepared {
    span_map: Vec<usize>,
    matrix: EmbeddingMatrix,
}

fn prepare(
    sentence: &Sentence,
    mode: AugmentMode,
    source: &ExpressionSource,
    provider: &EmbeddingProvider,
    max_len: usize,
) -> Result<Prepared, ModelError> {
    let exps = if mode.marks_expressions() {
        source.spans_for(sentence)?
    } else {
        None
    };
    let aug = insert_tags(sentence, mode, exps.as_deref())?;
    let mut matrix = provider.embed(&sentence.sent_id, &aug.tokens)?;
    if matrix.dim() != provider.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: provider.dim(),
            actual: matrix.dim(),
        });
    }
    matrix.truncate(max_len);
    Ok(Prepared {
        span_map: aug.span_map,
        matrix,
    })
}

impl TaggerModel {
    /// A model with all weights zero.
    pub fn zeros(scheme: TagScheme, mode: AugmentMode, provider: ProviderSpec, dim: usize) -> Self {
        let labels = label_inventory(scheme);
        let l = labels.len();
        TaggerModel {
            scheme,
            mode,
            mask: TransitionMask::bio(&labels),
            labels,
            emissions: Array2::zeros((l, dim)),
            transitions: Array2::zeros((l, l)),
            provider,
            config: TrainConfig::default(),
            summary: TrainingSummary::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.emissions.ncols()
    }

    fn decode_matrix(&self, x: &Array2<f64>) -> Result<Vec<usize>, ModelError> {
        let scores = x.dot(&self.emissions.t());
        Ok(viterbi(&scores, &self.transitions, &self.mask)?.0)
    }

    fn predict_prepared(&self, p: &Prepared, n: usize) -> TagSequence {
        let path = if p.matrix.is_empty() {
            Vec::new()
        } else {
            self.decode_matrix(&p.matrix.token_vectors)
                .expect("O is always reachable")
        };
        let tags: Vec<Tag> = (0..n)
            .map(|i| path.get(p.span_map[i]).map_or(Tag::O, |&y| self.labels[y]))
            .collect();
        // dropping bracket positions can orphan an I
        tagscheme::repair_unchecked(&tags)
    }

    /// Tags the original tokens of `sentence`. Tokens cut off by the
    /// length limit are tagged `O`.
    pub fn predict(
        &self,
        sentence: &Sentence,
        provider: &EmbeddingProvider,
        source: &ExpressionSource,
    ) -> Result<TagSequence, ModelError> {
        if provider.dim() != self.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim(),
                actual: provider.dim(),
            });
        }
        let p = prepare(sentence, self.mode, source, provider, self.config.max_seq_len)?;
        Ok(self.predict_prepared(&p, sentence.tokens.len()))
    }
}

/// Free-function form of [`TaggerModel::predict`].
pub fn predict_tags(
    model: &TaggerModel,
    sentence: &Sentence,
    provider: &EmbeddingProvider,
    source: &ExpressionSource,
) -> Result<TagSequence, ModelError> {
    model.predict(sentence, provider, source)
}

/// Averaged weights: `w - acc / steps`.
struct Averager {
    w: Array2<f64>,
    t: Array2<f64>,
    acc_w: Array2<f64>,
    acc_t: Array2<f64>,
    step: f64,
}

impl Averager {
    fn averaged(&self) -> (Array2<f64>, Array2<f64>) {
        (
            &self.w - &(&self.acc_w / self.step),
            &self.t - &(&self.acc_t / self.step),
        )
    }
}

/// Trains a tagger on `train`, keeping the epoch with the best dev
/// token F1 (over the scheme's elements) when `dev` is given.
pub fn train_tagger(
    train: &Corpus,
    dev: Option<&Corpus>,
    scheme: TagScheme,
    mode: AugmentMode,
    provider: &EmbeddingProvider,
    source: &ExpressionSource,
    config: &TrainConfig,
) -> Result<TaggerModel, ModelError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut model = TaggerModel::zeros(scheme, mode, provider.spec(), provider.dim());
    model.config = config.clone();
    let index: HashMap<Tag, usize> = model
        .labels
        .iter()
        .enumerate()
        .map(|(i, t)| (*t, i))
        .collect();

    let mut data = Vec::with_capacity(train.len());
    for s in &train.sentences {
        let p = prepare(s, mode, source, provider, config.max_seq_len)?;
        let gold = tagscheme::encode(s, scheme)?;
        let mut aug_gold = vec![Tag::O; p.matrix.len()];
        for (i, &j) in p.span_map.iter().enumerate() {
            if j < aug_gold.len() {
                aug_gold[j] = gold[i];
            }
        }
        let gold: Vec<usize> = tagscheme::repair_unchecked(&aug_gold)
            .iter()
            .map(|t| index[t])
            .collect();
        data.push((p.matrix.token_vectors, gold));
    }
    let dev_data = match dev {
        Some(d) => Some(
            d.sentences
                .iter()
                .map(|s| {
                    let p = prepare(s, mode, source, provider, config.max_seq_len)?;
                    Ok((p, tagscheme::encode(s, scheme)?))
                })
                .collect::<Result<Vec<_>, ModelError>>()?,
        ),
        None => None,
    };

    let l = model.labels.len();
    let d = provider.dim();
    let mut avg = Averager {
        w: Array2::zeros((l, d)),
        t: Array2::zeros((l, l)),
        acc_w: Array2::zeros((l, d)),
        acc_t: Array2::zeros((l, l)),
        step: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best: Option<(f64, Array2<f64>, Array2<f64>)> = None;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let (x, gold) = &data[k];
            if !gold.is_empty() {
                let scores = x.dot(&avg.w.t());
                let (pred, _) = viterbi(&scores, &avg.t, &model.mask)?;
                if pred != *gold {
                    perceptron_update(&mut avg, x, gold, &pred);
                }
            }
            avg.step += 1.0;
        }
        let (w, t) = avg.averaged();
        if let Some(dev_data) = &dev_data {
            model.emissions = w;
            model.transitions = t;
            let (golds, preds): (Vec<TagSequence>, Vec<TagSequence>) = dev_data
                .iter()
                .map(|(p, g)| (g.clone(), model.predict_prepared(p, g.len())))
                .unzip();
            let f1 = token_f1(&golds, &preds, scheme.elements())?.micro().f1;
            model.summary.dev_scores.push(f1);
            if best.as_ref().is_none_or(|(b, ..)| f1 > *b) {
                model.summary.selected_epoch = epoch + 1;
                best = Some((f1, model.emissions.clone(), model.transitions.clone()));
            }
        } else {
            model.summary.selected_epoch = epoch + 1;
            best = Some((0.0, w, t));
        }
    }
    let (_, w, t) = best.expect("at least one epoch");
    model.emissions = w;
    model.transitions = t;
    Ok(model)
}

fn perceptron_update(avg: &mut Averager, x: &Array2<f64>, gold: &[usize], pred: &[usize]) {
    let c = avg.step;
    for i in 0..gold.len() {
        let (g, p) = (gold[i], pred[i]);
        if g != p {
            let xi = x.index_axis(Axis(0), i);
            avg.w.row_mut(g).scaled_add(1.0, &xi);
            avg.w.row_mut(p).scaled_add(-1.0, &xi);
            avg.acc_w.row_mut(g).scaled_add(c, &xi);
            avg.acc_w.row_mut(p).scaled_add(-c, &xi);
        }
        if i > 0 && (gold[i - 1], g) != (pred[i - 1], p) {
            avg.t[[gold[i - 1], g]] += 1.0;
            avg.t[[pred[i - 1], p]] -= 1.0;
            avg.acc_t[[gold[i - 1], g]] += c;
            avg.acc_t[[pred[i - 1], p]] -= c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::synth::{pivot_corpus, PIVOT};
    use crate::tagscheme::{Strategy, TaskMode};

    const TARGET: TagScheme = TagScheme::new(Strategy::Target, TaskMode::Targeted);

    fn provider() -> EmbeddingProvider {
        EmbeddingProvider::hashed(32, 11, 0)
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_model_predicts_outside() {
        let p = provider();
        let m = TaggerModel::zeros(TARGET, AugmentMode::Original, p.spec(), 32);
        let s = Sentence::new("z", ["a", "b", "c"].map(String::from).to_vec());
        let tags = m.predict(&s, &p, &ExpressionSource::Gold).unwrap();
        assert_eq!(tags, TagSequence::outside(3));
    }

    #[test]
    fn learns_pivot_rule() {
        let p = provider();
        let train = pivot_corpus(300, 1, Split::Train);
        let model = train_tagger(&train, None, TARGET, AugmentMode::Original, &p, &ExpressionSource::Gold, &quick()).unwrap();
        let s = Sentence::new("t", ["a", PIVOT, "b"].map(String::from).to_vec());
        let tags: Vec<String> = model
            .predict(&s, &p, &ExpressionSource::Gold)
            .unwrap()
            .iter()
            .map(Tag::to_string)
            .collect();
        assert_eq!(tags, ["O", "B-targ", "O"]);
    }

    #[test]
    fn training_is_deterministic() {
        let p = provider();
        let train = pivot_corpus(120, 2, Split::Train);
        let dev = pivot_corpus(30, 3, Split::Dev);
        let run = || {
            train_tagger(&train, Some(&dev), TARGET, AugmentMode::Original, &p, &ExpressionSource::Gold, &quick())
                .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.emissions, b.emissions);
        assert_eq!(a.transitions, b.transitions);
        assert_eq!(a.summary.dev_scores.len(), 4);
    }

    #[test]
    fn precondition_errors() {
        let p = provider();
        let train = pivot_corpus(10, 1, Split::Train);
        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_tagger(&train, None, TARGET, AugmentMode::Original, &p, &ExpressionSource::Gold, &zero),
            Err(ModelError::InvalidConfig(_))
        ));
        let empty = Corpus::new("e", Split::Train, vec![]);
        assert!(matches!(
            train_tagger(&empty, None, TARGET, AugmentMode::Original, &p, &ExpressionSource::Gold, &quick()),
            Err(ModelError::EmptyCorpus)
        ));
        let m = TaggerModel::zeros(TARGET, AugmentMode::Original, p.spec(), 8);
        let s = Sentence::new("z", vec!["a".into()]);
        assert!(matches!(
            m.predict(&s, &p, &ExpressionSource::Gold),
            Err(ModelError::DimensionMismatch { expected: 8, actual: 32 })
        ));
    }

    #[test]
    fn long_sentences_are_truncated() {
        let p = provider();
        let m = TaggerModel {
            config: TrainConfig {
                max_seq_len: 4,
                ..TrainConfig::default()
            },
            ..TaggerModel::zeros(TARGET, AugmentMode::Original, p.spec(), 32)
        };
        let s = Sentence::new("l", (0..10).map(|i| format!("w{i}")).collect());
        assert_eq!(m.predict(&s, &p, &ExpressionSource::Gold).unwrap().len(), 10);
    }
}
