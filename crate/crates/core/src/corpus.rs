//! Unified opinion corpus: data model, JSON and CoNLL serialization,
//! polarity normalization, deterministic splits, and dataset reports.
//!
//! Every dataset is stored in one canonical JSON layout. Spans are
//! token-indexed half-open intervals `[start, end)`; an element (holder,
//! target, expression) is a list of spans so that discontinuous
//! annotations survive conversion.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::tagscheme::{self, Tag, TagScheme, TagSequence};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("sentence `{sent_id}` at {path}: {message}")]
    Invalid {
        sent_id: String,
        path: String,
        message: String,
    },
    #[error("unmapped polarity label `{0}`")]
    UnmappedPolarity(String),
    #[error("cannot split corpus `{name}`: {reason}")]
    Split { name: String, reason: String },
    #[error("CoNLL line {line}: {message}")]
    Conll { line: usize, message: String },
    #[error(transparent)]
    Tagging(#[from] tagscheme::TagError),
}

/// Half-open token interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.start <= idx && idx < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

impl Serialize for Span {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.start, self.end).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (start, end) = <(usize, usize)>::deserialize(d)?;
        Ok(Span { start, end })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
    Conflict,
}

impl Polarity {
    /// The three classes used for classification, in report order.
    pub const CLASSES: [Polarity; 3] = [Polarity::Positive, Polarity::Neutral, Polarity::Negative];

    pub fn as_str(&self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
            Polarity::Conflict => "conflict",
        }
    }

    /// Index into [`Polarity::CLASSES`]; `None` for conflict.
    pub fn class_index(&self) -> Option<usize> {
        match self {
            Polarity::Positive => Some(0),
            Polarity::Neutral => Some(1),
            Polarity::Negative => Some(2),
            Polarity::Conflict => None,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            "conflict" => Ok(Polarity::Conflict),
            other => Err(CorpusError::UnmappedPolarity(other.to_string())),
        }
    }
}

/// Table-driven mapping from a source dataset's raw polarity labels.
#[derive(Clone, Debug, Default)]
pub struct PolarityMap {
    table: HashMap<String, Polarity>,
}

impl PolarityMap {
    /// Maps the four canonical names onto themselves.
    pub fn identity() -> Self {
        let mut map = PolarityMap::default();
        for p in [
            Polarity::Positive,
            Polarity::Negative,
            Polarity::Neutral,
            Polarity::Conflict,
        ] {
            map.insert(p.as_str(), p);
        }
        map
    }

    pub fn insert(&mut self, raw: &str, polarity: Polarity) {
        self.table.insert(raw.to_string(), polarity);
    }

    /// Parses `raw<TAB>canonical` lines on top of the identity table.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse_tsv(text: &str) -> Result<Self, CorpusError> {
        let mut map = PolarityMap::identity();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (raw, canon) = line.split_once('\t').ok_or_else(|| CorpusError::Conll {
                line: i + 1,
                message: "polarity map line must be `raw<TAB>polarity`".into(),
            })?;
            map.insert(raw.trim(), canon.trim().parse()?);
        }
        Ok(map)
    }

    pub fn normalize(&self, raw: &str) -> Result<Polarity, CorpusError> {
        self.table
            .get(raw)
            .or_else(|| self.table.get(&raw.trim().to_lowercase()))
            .copied()
            .ok_or_else(|| CorpusError::UnmappedPolarity(raw.to_string()))
    }
}

/// Maps a raw polarity label through the identity table.
pub fn normalize_polarity(raw_label: &str) -> Result<Polarity, CorpusError> {
    PolarityMap::identity().normalize(raw_label)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Opinion {
    #[serde(default)]
    pub holder: Vec<Span>,
    pub target: Vec<Span>,
    #[serde(default)]
    pub expression: Vec<Span>,
    pub polarity: Polarity,
    #[serde(default)]
    pub intensity: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Opinion {
    pub fn targeted(target: Vec<Span>, polarity: Polarity) -> Self {
        Opinion {
            holder: Vec::new(),
            target,
            expression: Vec::new(),
            polarity,
            intensity: None,
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub sent_id: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub opinions: Vec<Opinion>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Sentence {
    pub fn new(sent_id: impl Into<String>, tokens: Vec<String>) -> Self {
        Sentence {
            sent_id: sent_id.into(),
            tokens,
            opinions: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    /// Space-joined surface form of a span list.
    pub fn surface(&self, spans: &[Span]) -> String {
        spans
            .iter()
            .flat_map(|s| self.tokens[s.start..s.end].iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Checks every opinion span against the token count.
    pub fn validate(&self, index: usize) -> Result<(), CorpusError> {
        let invalid = |path: String, message: String| CorpusError::Invalid {
            sent_id: self.sent_id.clone(),
            path,
            message,
        };
        if self.tokens.is_empty() {
            return Err(invalid(
                format!("sentences[{index}].tokens"),
                "sentence has no tokens".into(),
            ));
        }
        let n = self.tokens.len();
        for (oi, op) in self.opinions.iter().enumerate() {
            let base = format!("sentences[{index}].opinions[{oi}]");
            if op.target.is_empty() {
                return Err(invalid(format!("{base}.target"), "empty target list".into()));
            }
            for (field, spans) in [
                ("holder", &op.holder),
                ("target", &op.target),
                ("expression", &op.expression),
            ] {
                for (si, span) in spans.iter().enumerate() {
                    if span.start >= span.end || span.end > n {
                        return Err(invalid(
                            format!("{base}.{field}[{si}]"),
                            format!("span out of range: {span} on {n} tokens"),
                        ));
                    }
                    if si > 0 && spans[si - 1].end > span.start {
                        return Err(invalid(
                            format!("{base}.{field}[{si}]"),
                            format!(
                                "spans must be sorted and non-overlapping: {} then {span}",
                                spans[si - 1]
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    Unsplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub split: Split,
    pub sentences: Vec<Sentence>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

// Mirrors of the public types with raw polarity strings, so that parse
// errors can name the sentence and field instead of a serde position.
#[derive(Deserialize)]
struct RawCorpus {
    name: String,
    split: Split,
    sentences: Vec<RawSentence>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct RawSentence {
    sent_id: String,
    tokens: Vec<String>,
    #[serde(default)]
    opinions: Vec<RawOpinion>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct RawOpinion {
    #[serde(default)]
    holder: Vec<Span>,
    target: Vec<Span>,
    #[serde(default)]
    expression: Vec<Span>,
    polarity: String,
    #[serde(default)]
    intensity: Option<String>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, split: Split, sentences: Vec<Sentence>) -> Self {
        Corpus {
            name: name.into(),
            split,
            sentences,
            extra: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for (i, s) in self.sentences.iter().enumerate() {
            if !seen.insert(s.sent_id.as_str()) {
                return Err(CorpusError::Invalid {
                    sent_id: s.sent_id.clone(),
                    path: format!("sentences[{i}].sent_id"),
                    message: "duplicate sent_id".into(),
                });
            }
            s.validate(i)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("corpus serializes");
        out.push('\n');
        out
    }
}

/// Parses and validates a canonical JSON corpus.
pub fn parse_corpus(json: &[u8]) -> Result<Corpus, CorpusError> {
    parse_corpus_with(json, &PolarityMap::identity())
}

/// Like [`parse_corpus`] with a source-specific polarity table.
pub fn parse_corpus_with(json: &[u8], polarities: &PolarityMap) -> Result<Corpus, CorpusError> {
    let raw: RawCorpus = serde_json::from_slice(json)?;
    let mut sentences = Vec::with_capacity(raw.sentences.len());
    for (i, rs) in raw.sentences.into_iter().enumerate() {
        let mut opinions = Vec::with_capacity(rs.opinions.len());
        for (oi, ro) in rs.opinions.into_iter().enumerate() {
            let polarity =
                polarities
                    .normalize(&ro.polarity)
                    .map_err(|_| CorpusError::Invalid {
                        sent_id: rs.sent_id.clone(),
                        path: format!("sentences[{i}].opinions[{oi}].polarity"),
                        message: format!("unknown polarity `{}`", ro.polarity),
                    })?;
            opinions.push(Opinion {
                holder: ro.holder,
                target: ro.target,
                expression: ro.expression,
                polarity,
                intensity: ro.intensity,
                extra: ro.extra,
            });
        }
        sentences.push(Sentence {
            sent_id: rs.sent_id,
            tokens: rs.tokens,
            opinions,
            extra: rs.extra,
        });
    }
    let corpus = Corpus {
        name: raw.name,
        split: raw.split,
        sentences,
        extra: raw.extra,
    };
    corpus.validate()?;
    Ok(corpus)
}

/// Deterministic 80/10/10 partition: dev and test each take
/// `floor(N / 10)` sentences, train keeps the rest. Each part keeps the
/// original sentence order.
pub fn split_corpus(corpus: &Corpus, seed: u64) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    let fail = |reason: String| CorpusError::Split {
        name: corpus.name.clone(),
        reason,
    };
    if corpus.split != Split::Unsplit {
        return Err(fail(format!("expected an unsplit corpus, got {:?}", corpus.split)));
    }
    let n = corpus.len();
    if n < 10 {
        return Err(fail(format!("{n} sentences is fewer than 10; splits would be empty")));
    }
    let held = n / 10;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut dev_idx = order[..held].to_vec();
    let mut test_idx = order[held..2 * held].to_vec();
    let mut train_idx = order[2 * held..].to_vec();
    let build = |idx: &mut Vec<usize>, split| {
        idx.sort_unstable();
        let mut c = Corpus::new(
            corpus.name.clone(),
            split,
            idx.iter().map(|&i| corpus.sentences[i].clone()).collect(),
        );
        c.extra = corpus.extra.clone();
        c
    };
    Ok((
        build(&mut train_idx, Split::Train),
        build(&mut dev_idx, Split::Dev),
        build(&mut test_idx, Split::Test),
    ))
}

/// Rounds half-up to one decimal place.
pub fn round1(x: f64) -> f64 {
    (x * 10.0 + 0.5).floor() / 10.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElementStats {
    pub count: usize,
    pub total_tokens: usize,
    pub avg_length: f64,
    pub max_length: usize,
}

impl ElementStats {
    fn add(&mut self, len: usize) {
        self.count += 1;
        self.total_tokens += len;
        self.max_length = self.max_length.max(len);
    }

    fn finish(&mut self) {
        self.avg_length = if self.count == 0 {
            0.0
        } else {
            round1(self.total_tokens as f64 / self.count as f64)
        };
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarityCounts {
    pub positive: usize,
    pub neutral: usize,
    pub negative: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub name: String,
    pub split: Option<Split>,
    pub sentences: usize,
    pub total_tokens: usize,
    pub avg_sentence_length: f64,
    pub holders: ElementStats,
    pub targets: ElementStats,
    pub expressions: ElementStats,
    pub polarity: PolarityCounts,
}

pub fn compute_stats(corpus: &Corpus) -> StatsReport {
    let mut report = StatsReport {
        name: corpus.name.clone(),
        split: Some(corpus.split),
        sentences: corpus.len(),
        ..Default::default()
    };
    for s in &corpus.sentences {
        report.total_tokens += s.tokens.len();
        for op in &s.opinions {
            let total = |spans: &[Span]| spans.iter().map(Span::len).sum::<usize>();
            if !op.holder.is_empty() {
                report.holders.add(total(&op.holder));
            }
            if !op.target.is_empty() {
                report.targets.add(total(&op.target));
            }
            if !op.expression.is_empty() {
                report.expressions.add(total(&op.expression));
            }
            match op.polarity {
                Polarity::Positive => report.polarity.positive += 1,
                Polarity::Neutral => report.polarity.neutral += 1,
                Polarity::Negative => report.polarity.negative += 1,
                Polarity::Conflict => {}
            }
        }
    }
    if report.sentences > 0 {
        report.avg_sentence_length = round1(report.total_tokens as f64 / report.sentences as f64);
    }
    report.holders.finish();
    report.targets.finish();
    report.expressions.finish();
    report
}

/// Target-string overlap across splits, in percent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub unique_train: f64,
    pub unique_dev: f64,
    pub unique_test: f64,
    pub dev_in_train: f64,
    pub test_in_train: f64,
}

/// Distinct space-joined target surface forms of a corpus.
pub fn target_forms(corpus: &Corpus) -> HashSet<String> {
    corpus
        .sentences
        .iter()
        .flat_map(|s| s.opinions.iter().map(move |op| s.surface(&op.target)))
        .collect()
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Exact-match target overlap; partial matches are not counted.
pub fn compute_overlap(train: &Corpus, dev: &Corpus, test: &Corpus) -> OverlapReport {
    let tr = target_forms(train);
    let dv = target_forms(dev);
    let te = target_forms(test);
    let unique = |own: &HashSet<String>, a: &HashSet<String>, b: &HashSet<String>| {
        percent(
            own.iter().filter(|t| !a.contains(*t) && !b.contains(*t)).count(),
            own.len(),
        )
    };
    OverlapReport {
        unique_train: unique(&tr, &dv, &te),
        unique_dev: unique(&dv, &tr, &te),
        unique_test: unique(&te, &tr, &dv),
        dev_in_train: percent(dv.intersection(&tr).count(), dv.len()),
        test_in_train: percent(te.intersection(&tr).count(), te.len()),
    }
}

/// One sentence read back from CoNLL text.
#[derive(Clone, Debug, PartialEq)]
pub struct ConllSentence {
    pub sent_id: String,
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
}

const SENT_ID_PREFIX: &str = "# sent_id = ";

/// Writes one `token<TAB>tag` line per token, a `# sent_id = ` comment
/// before each sentence and a blank line after it.
pub fn to_conll(corpus: &Corpus, scheme: TagScheme) -> Result<String, CorpusError> {
    let mut out = String::new();
    for s in &corpus.sentences {
        let tags = tagscheme::encode(s, scheme)?;
        write_conll_sentence(&mut out, &s.sent_id, &s.tokens, tags.as_slice())?;
    }
    Ok(out)
}

/// Appends one sentence block in the format produced by [`to_conll`].
pub fn write_conll_sentence(
    out: &mut String,
    sent_id: &str,
    tokens: &[String],
    tags: &[Tag],
) -> Result<(), CorpusError> {
    if sent_id.contains('\n') {
        return Err(CorpusError::Invalid {
            sent_id: sent_id.to_string(),
            path: "sent_id".into(),
            message: "sent_id contains a newline".into(),
        });
    }
    out.push_str(SENT_ID_PREFIX);
    out.push_str(sent_id);
    out.push('\n');
    for (i, (tok, tag)) in tokens.iter().zip(tags).enumerate() {
        if tok.contains(['\t', '\n', '\r']) {
            return Err(CorpusError::Invalid {
                sent_id: sent_id.to_string(),
                path: format!("tokens[{i}]"),
                message: "token contains a tab or line break".into(),
            });
        }
        out.push_str(tok);
        out.push('\t');
        out.push_str(&tag.to_string());
        out.push('\n');
    }
    out.push('\n');
    Ok(())
}

/// Inverse of [`to_conll`] at the token/tag level. Tags are checked
/// against the label inventory of `scheme`.
pub fn from_conll(text: &str, scheme: TagScheme) -> Result<Vec<ConllSentence>, CorpusError> {
    let inventory: HashSet<Tag> = tagscheme::label_inventory(scheme).into_iter().collect();
    let mut out = Vec::new();
    let mut current: Option<ConllSentence> = None;
    let mut anonymous = 0usize;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            if let Some(s) = current.take() {
                out.push(s);
            }
            continue;
        }
        if !line.contains('\t') {
            if let Some(id) = line.strip_prefix(SENT_ID_PREFIX) {
                if let Some(s) = current.take() {
                    out.push(s);
                }
                current = Some(ConllSentence {
                    sent_id: id.to_string(),
                    tokens: Vec::new(),
                    tags: Vec::new(),
                });
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            return Err(CorpusError::Conll {
                line: lineno,
                message: format!("expected `token<TAB>tag`, found `{line}`"),
            });
        }
        let mut parts = line.split('\t');
        let (tok, tag) = match (parts.next(), parts.next(), parts.next()) {
            (Some(tok), Some(tag), None) => (tok, tag),
            _ => {
                return Err(CorpusError::Conll {
                    line: lineno,
                    message: "expected exactly one tab".into(),
                })
            }
        };
        let tag: Tag = tag.parse().map_err(|e: tagscheme::TagError| CorpusError::Conll {
            line: lineno,
            message: e.to_string(),
        })?;
        if !inventory.contains(&tag) {
            return Err(CorpusError::Conll {
                line: lineno,
                message: format!("tag `{tag}` is not in the {scheme} inventory"),
            });
        }
        let s = current.get_or_insert_with(|| {
            anonymous += 1;
            ConllSentence {
                sent_id: format!("conll-{anonymous}"),
                tokens: Vec::new(),
                tags: Vec::new(),
            }
        });
        s.tokens.push(tok.to_string());
        s.tags.push(tag);
    }
    if let Some(s) = current.take() {
        out.push(s);
    }
    Ok(out)
}

/// Convenience: validated tag sequences for each CoNLL sentence.
pub fn conll_sequences(sentences: &[ConllSentence]) -> Result<Vec<TagSequence>, CorpusError> {
    sentences
        .iter()
        .map(|s| TagSequence::new(s.tags.clone()).map_err(CorpusError::from))
        .collect()
}
