//! Target polarity classifier: a softmax layer over a pooled target
//! representation, trained by mini-batch SGD on cross-entropy.
//!
//! The input is two segments, `target tokens ++ [SEP] ++ sentence`, with
//! the sentence optionally augmented by bracket tokens. Pooling looks at
//! the in-sentence occurrence of the target.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::embedding::{target_key, EmbeddingProvider, ProviderSpec, SEPARATOR};
use super::pooling::{pool, PoolingStrategy};
use super::source::ExpressionSource;
use super::tagger::TrainingSummary;
use super::{ModelError, TrainConfig};
use crate::augment::{insert_tags, AugmentMode};
use crate::corpus::{Corpus, Polarity, Sentence, Span};
use crate::eval::macro_f1;

/// One classification instance: a target inside a sentence.
#[derive(Clone, Debug)]
pub struct ClassifierExample<'a> {
    pub sentence: &'a Sentence,
    pub target: Vec<Span>,
    pub gold: Polarity,
}

/// Every opinion target of the corpus, skipping conflict polarity.
pub fn target_examples(corpus: &Corpus) -> Vec<ClassifierExample<'_>> {
    corpus
        .sentences
        .iter()
        .flat_map(|s| {
            s.opinions
                .iter()
                .filter(|op| op.polarity != Polarity::Conflict)
                .map(move |op| ClassifierExample {
                    sentence: s,
                    target: op.target.clone(),
                    gold: op.polarity,
                })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassifierInput {
    pub tokens: Vec<String>,
    /// Target spans in `tokens` coordinates (inside the sentence segment).
    pub target: Vec<Span>,
}

/// Builds `target ++ [SEP] ++ augmented sentence`, truncated to
/// `max_len` tokens. When the sentence segment does not fit, the window
/// is slid right just far enough to keep the whole target.
pub fn build_classifier_input(
    sentence: &Sentence,
    target: &[Span],
    mode: AugmentMode,
    expressions: Option<&[Span]>,
    max_len: usize,
) -> Result<ClassifierInput, ModelError> {
    if target.is_empty() {
        return Err(ModelError::EmptyTarget);
    }
    let n = sentence.tokens.len();
    if let Some(bad) = target.iter().find(|s| s.start >= s.end || s.end > n) {
        return Err(ModelError::TargetOutOfRange {
            index: bad.end,
            len: n,
        });
    }
    let aug = insert_tags(sentence, mode, expressions)?;
    let mut tokens: Vec<String> = target
        .iter()
        .flat_map(|s| sentence.tokens[s.indices()].iter().cloned())
        .collect();
    tokens.push(SEPARATOR.to_string());
    let offset = tokens.len();
    let in_sentence = aug.remap_all(target);
    let room = max_len.saturating_sub(offset);
    let lo = in_sentence.first().map_or(0, |s| s.start);
    let hi = in_sentence.last().map_or(0, |s| s.end);
    if hi - lo > room {
        return Err(ModelError::TargetTruncated {
            sent_id: sentence.sent_id.clone(),
            max_len,
        });
    }
    let window_start = hi.saturating_sub(room);
    let window_end = (window_start + room).min(aug.tokens.len());
    tokens.extend(aug.tokens[window_start..window_end].iter().cloned());
    let target = in_sentence
        .iter()
        .map(|s| Span::new(s.start - window_start + offset, s.end - window_start + offset))
        .collect();
    Ok(ClassifierInput { tokens, target })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub strategy: PoolingStrategy,
    pub mode: AugmentMode,
    /// C x d', classes ordered positive/neutral/negative
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub provider: ProviderSpec,
    pub config: TrainConfig,
    pub summary: TrainingSummary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolarityPrediction {
    pub polarity: Polarity,
    /// Softmax probabilities in class order positive/neutral/negative.
    pub probabilities: [f64; 3],
}

pub fn softmax(scores: &Array1<f64>) -> Array1<f64> {
    let max = scores.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = scores.mapv(|s| (s - max).exp());
    let z = e.sum();
    e / z
}

impl ClassifierModel {
    pub fn zeros(strategy: PoolingStrategy, mode: AugmentMode, provider: ProviderSpec, dim: usize) -> Self {
        let width = strategy.output_dim(dim);
        ClassifierModel {
            strategy,
            mode,
            weights: Array2::zeros((3, width)),
            bias: Array1::zeros(3),
            provider,
            config: TrainConfig::default(),
            summary: TrainingSummary::default(),
        }
    }

    /// Embedding width the model expects from its provider.
    pub fn embedding_dim(&self) -> usize {
        match self.strategy {
            PoolingStrategy::MaxMM => self.weights.ncols() / 3,
            _ => self.weights.ncols(),
        }
    }

    pub fn scores(&self, x: &Array1<f64>) -> Array1<f64> {
        self.weights.dot(x) + &self.bias
    }

    /// Mean cross-entropy over a batch.
    pub fn loss(&self, xs: &[Array1<f64>], ys: &[usize]) -> f64 {
        let total: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| {
                let s = self.scores(x);
                let max = s.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = max + s.mapv(|v| (v - max).exp()).sum().ln();
                lse - s[y]
            })
            .sum();
        total / xs.len() as f64
    }

    /// Analytic gradient of [`ClassifierModel::loss`] with respect to
    /// weights and bias: `(softmax - onehot) x^T`, averaged.
    pub fn gradient(&self, xs: &[Array1<f64>], ys: &[usize]) -> (Array2<f64>, Array1<f64>) {
        let mut gw = Array2::zeros(self.weights.raw_dim());
        let mut gb = Array1::zeros(3);
        for (x, &y) in xs.iter().zip(ys) {
            let mut delta = softmax(&self.scores(x));
            delta[y] -= 1.0;
            for c in 0..3 {
                gw.row_mut(c).scaled_add(delta[c], x);
            }
            gb += &delta;
        }
        let n = xs.len() as f64;
        (gw / n, gb / n)
    }

    fn predict_vector(&self, x: &Array1<f64>) -> PolarityPrediction {
        let p = softmax(&self.scores(x));
        let mut best = 0;
        for c in 1..3 {
            if p[c] > p[best] {
                best = c;
            }
        }
        PolarityPrediction {
            polarity: Polarity::CLASSES[best],
            probabilities: [p[0], p[1], p[2]],
        }
    }

    pub fn features(
        &self,
        sentence: &Sentence,
        target: &[Span],
        provider: &EmbeddingProvider,
        source: &ExpressionSource,
    ) -> Result<Array1<f64>, ModelError> {
        if provider.dim() != self.embedding_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.embedding_dim(),
                actual: provider.dim(),
            });
        }
        featurize(sentence, target, self.strategy, self.mode, provider, source, self.config.max_seq_len)
    }

    /// Argmax class; ties go to the earlier class in positive/neutral/negative order.
    pub fn predict(
        &self,
        sentence: &Sentence,
        target: &[Span],
        provider: &EmbeddingProvider,
        source: &ExpressionSource,
    ) -> Result<PolarityPrediction, ModelError> {
        Ok(self.predict_vector(&self.features(sentence, target, provider, source)?))
    }
}

pub fn predict_polarity(
    model: &ClassifierModel,
    sentence: &Sentence,
    target: &[Span],
    provider: &EmbeddingProvider,
    source: &ExpressionSource,
) -> Result<PolarityPrediction, ModelError> {
    model.predict(sentence, target, provider, source)
}

fn featurize(
    sentence: &Sentence,
    target: &[Span],
    strategy: PoolingStrategy,
    mode: AugmentMode,
    provider: &EmbeddingProvider,
    source: &ExpressionSource,
    max_len: usize,
) -> Result<Array1<f64>, ModelError> {
    let exps = if mode.marks_expressions() {
        source.spans_for(sentence)?
    } else {
        None
    };
    let input = build_classifier_input(sentence, target, mode, exps.as_deref(), max_len)?;
    let m = provider.embed(&target_key(&sentence.sent_id, target), &input.tokens)?;
    pool(&m, &input.target, strategy)
}

/// Trains the softmax layer. With `dev`, the epoch with the best dev
/// macro F1 is kept.
pub fn train_classifier(
    train: &[ClassifierExample<'_>],
    dev: Option<&[ClassifierExample<'_>]>,
    strategy: PoolingStrategy,
    mode: AugmentMode,
    provider: &EmbeddingProvider,
    source: &ExpressionSource,
    config: &TrainConfig,
) -> Result<ClassifierModel, ModelError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let encode = |examples: &[ClassifierExample<'_>]| -> Result<(Vec<Array1<f64>>, Vec<usize>), ModelError> {
        let mut xs = Vec::with_capacity(examples.len());
        let mut ys = Vec::with_capacity(examples.len());
        for ex in examples {
            let y = ex.gold.class_index().ok_or(ModelError::ConflictExample)?;
            xs.push(featurize(ex.sentence, &ex.target, strategy, mode, provider, source, config.max_seq_len)?);
            ys.push(y);
        }
        Ok((xs, ys))
    };
    let (xs, ys) = encode(train)?;
    let mut present = [false; 3];
    ys.iter().for_each(|&y| present[y] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(ModelError::DegenerateClasses);
    }
    let dev_data = dev.map(encode).transpose()?;

    let mut model = ClassifierModel::zeros(strategy, mode, provider.spec(), provider.dim());
    model.config = config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let batches_per_epoch = xs.len().div_ceil(config.batch_size);
    let total_steps = config.epochs * batches_per_epoch;
    let keep = 1.0 - config.dropout;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut step = 0;
    let mut best: Option<(f64, Array2<f64>, Array1<f64>)> = None;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let bx: Vec<Array1<f64>> = batch
                .iter()
                .map(|&i| {
                    if config.dropout > 0.0 {
                        xs[i].mapv(|v| if rng.gen::<f64>() < keep { v / keep } else { 0.0 })
                    } else {
                        xs[i].clone()
                    }
                })
                .collect();
            let by: Vec<usize> = batch.iter().map(|&i| ys[i]).collect();
            let (gw, gb) = model.gradient(&bx, &by);
            let lr = config.learning_rate_at(step, total_steps);
            model.weights.scaled_add(-lr, &gw);
            model.bias.scaled_add(-lr, &gb);
            step += 1;
        }
        if let Some((dx, dy)) = &dev_data {
            let pred: Vec<Polarity> = dx.iter().map(|x| model.predict_vector(x).polarity).collect();
            let gold: Vec<Polarity> = dy.iter().map(|&y| Polarity::CLASSES[y]).collect();
            let f1 = macro_f1(&gold, &pred)?.macro_f1;
            model.summary.dev_scores.push(f1);
            if !dx.is_empty() {
                model.summary.dev_losses.push(model.loss(dx, dy));
            }
            if best.as_ref().is_none_or(|(b, ..)| f1 > *b) {
                model.summary.selected_epoch = epoch + 1;
                best = Some((f1, model.weights.clone(), model.bias.clone()));
            }
        } else {
            model.summary.selected_epoch = epoch + 1;
        }
    }
    if let Some((_, w, b)) = best {
        model.weights = w;
        model.bias = b;
    }
    Ok(model)
}

/// Pooled feature rows for a set of examples, as the trainer sees them.
pub fn example_features(
    examples: &[ClassifierExample<'_>],
    strategy: PoolingStrategy,
    mode: AugmentMode,
    provider: &EmbeddingProvider,
    source: &ExpressionSource,
    max_len: usize,
) -> Result<Array2<f64>, ModelError> {
    let rows = examples
        .iter()
        .map(|ex| featurize(ex.sentence, &ex.target, strategy, mode, provider, source, max_len))
        .collect::<Result<Vec<_>, _>>()?;
    let views: Vec<_> = rows.iter().map(|r| r.view().insert_axis(Axis(0))).collect();
    if views.is_empty() {
        return Ok(Array2::zeros((0, strategy.output_dim(provider.dim()))));
    }
    Ok(ndarray::concatenate(Axis(0), &views).expect("equal widths"))
}
