//! BIO tagging schemes for opinion element extraction.
//!
//! Three strategies are supported: targets only, all elements (holders,
//! targets, expressions), and all elements with the owning opinion's
//! polarity folded into the label (the collapsed tagset). Tags render as
//! `O`, `B-targ`, `I-exp-negative`, `B-holder-positive` and so on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Polarity, Sentence, Span};

#[derive(Debug, Error, PartialEq)]
pub enum TagError {
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
    #[error("tag `{tag}` is not in the {scheme} inventory")]
    NotInInventory { tag: String, scheme: String },
    #[error("invalid BIO sequence at token {index}: `{tag}` cannot follow `{prev}`")]
    InvalidBio {
        index: usize,
        tag: String,
        prev: String,
    },
    #[error("sentence `{sent_id}`: span {span} out of range for {len} tokens")]
    SpanOutOfRange {
        sent_id: String,
        span: Span,
        len: usize,
    },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Targets only.
    Target,
    /// Holders, targets and expressions.
    Joint,
    /// Joint, with polarity attached to every element tag.
    JointPolarity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    Targeted,
    Full,
}

/// Serialized as its `strategy/mode` string.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TagScheme {
    pub strategy: Strategy,
    pub mode: TaskMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Element {
    Holder,
    #[serde(rename = "targ")]
    Target,
    #[serde(rename = "exp")]
    Expression,
}

impl Element {
    pub const ALL: [Element; 3] = [Element::Holder, Element::Target, Element::Expression];

    pub fn as_str(&self) -> &'static str {
        match self {
            Element::Holder => "holder",
            Element::Target => "targ",
            Element::Expression => "exp",
        }
    }

    /// Cross-element overlap priority: targ > exp > holder.
    fn priority(&self) -> u8 {
        match self {
            Element::Target => 2,
            Element::Expression => 1,
            Element::Holder => 0,
        }
    }

    fn spans<'a>(&self, op: &'a crate::corpus::Opinion) -> &'a [Span] {
        match self {
            Element::Holder => &op.holder,
            Element::Target => &op.target,
            Element::Expression => &op.expression,
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl TagScheme {
    pub const fn new(strategy: Strategy, mode: TaskMode) -> Self {
        TagScheme { strategy, mode }
    }

    /// Elements that receive tags, in inventory order.
    pub fn elements(&self) -> &'static [Element] {
        match (self.strategy, self.mode) {
            (Strategy::Target, _) | (_, TaskMode::Targeted) => &[Element::Target],
            _ => &Element::ALL,
        }
    }

    pub fn is_polar(&self) -> bool {
        self.strategy == Strategy::JointPolarity
    }

    pub fn includes(&self, element: Element) -> bool {
        self.elements().contains(&element)
    }

    /// Whether `tag` belongs to this scheme's label inventory.
    pub fn admits(&self, tag: &Tag) -> bool {
        match tag.chunk() {
            None => true,
            Some(c) => {
                self.includes(c.element)
                    && match c.polarity {
                        None => !self.is_polar(),
                        Some(p) => self.is_polar() && p != Polarity::Conflict,
                    }
            }
        }
    }
}

impl fmt::Display for TagScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.strategy {
            Strategy::Target => "target",
            Strategy::Joint => "joint",
            Strategy::JointPolarity => "joint_polarity",
        };
        let m = match self.mode {
            TaskMode::Targeted => "targeted",
            TaskMode::Full => "full",
        };
        write!(f, "{s}/{m}")
    }
}

/// Parses the `strategy/mode` form produced by `Display`.
impl FromStr for TagScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (strategy, mode) = s
            .split_once('/')
            .ok_or_else(|| format!("expected `strategy/mode`, got `{s}`"))?;
        let strategy = match strategy {
            "target" => Strategy::Target,
            "joint" => Strategy::Joint,
            "joint_polarity" => Strategy::JointPolarity,
            other => return Err(format!("unknown strategy `{other}`")),
        };
        let mode = match mode {
            "targeted" => TaskMode::Targeted,
            "full" => TaskMode::Full,
            other => return Err(format!("unknown task mode `{other}`")),
        };
        Ok(TagScheme::new(strategy, mode))
    }
}

impl Serialize for TagScheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TagScheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Element type plus optional polarity: what a B/I tag labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chunk {
    pub element: Element,
    pub polarity: Option<Polarity>,
}

impl Chunk {
    pub fn new(element: Element, polarity: Option<Polarity>) -> Self {
        Chunk { element, polarity }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    O,
    B(Chunk),
    I(Chunk),
}

impl Tag {
    pub fn chunk(&self) -> Option<Chunk> {
        match self {
            Tag::O => None,
            Tag::B(c) | Tag::I(c) => Some(*c),
        }
    }

    pub fn element(&self) -> Option<Element> {
        self.chunk().map(|c| c.element)
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, Tag::O)
    }

    /// Whether `self` may directly follow `prev` (`None` = sentence start).
    pub fn may_follow(&self, prev: Option<&Tag>) -> bool {
        match self {
            Tag::I(c) => matches!(prev.and_then(Tag::chunk), Some(p) if p == *c),
            _ => true,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (pos, c) = match self {
            Tag::O => return f.write_str("O"),
            Tag::B(c) => ("B", c),
            Tag::I(c) => ("I", c),
        };
        write!(f, "{pos}-{}", c.element)?;
        if let Some(p) = c.polarity {
            write!(f, "-{p}")?;
        }
        Ok(())
    }
}

impl FromStr for Tag {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::O);
        }
        let unknown = || TagError::UnknownTag(s.to_string());
        let mut parts = s.split('-');
        let pos = parts.next().ok_or_else(unknown)?;
        let element = match parts.next() {
            Some("holder") => Element::Holder,
            Some("targ") => Element::Target,
            Some("exp") => Element::Expression,
            _ => return Err(unknown()),
        };
        let polarity = match parts.next() {
            None => None,
            Some("positive") => Some(Polarity::Positive),
            Some("neutral") => Some(Polarity::Neutral),
            Some("negative") => Some(Polarity::Negative),
            Some(_) => return Err(unknown()),
        };
        if parts.next().is_some() {
            return Err(unknown());
        }
        let chunk = Chunk { element, polarity };
        match pos {
            "B" => Ok(Tag::B(chunk)),
            "I" => Ok(Tag::I(chunk)),
            _ => Err(unknown()),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered label set: `O`, then every `B-` label, then every `I-` label;
/// elements ordered holder/targ/exp and polarities positive/neutral/negative.
pub fn label_inventory(scheme: TagScheme) -> Vec<Tag> {
    let polarities: &[Option<Polarity>] = if scheme.is_polar() {
        &[
            Some(Polarity::Positive),
            Some(Polarity::Neutral),
            Some(Polarity::Negative),
        ]
    } else {
        &[None]
    };
    let chunks: Vec<Chunk> = scheme
        .elements()
        .iter()
        .flat_map(|&e| polarities.iter().map(move |&p| Chunk::new(e, p)))
        .collect();
    std::iter::once(Tag::O)
        .chain(chunks.iter().map(|&c| Tag::B(c)))
        .chain(chunks.iter().map(|&c| Tag::I(c)))
        .collect()
}

/// Index of the first BIO violation, if any.
pub fn first_violation(tags: &[Tag]) -> Option<usize> {
    (0..tags.len()).find(|&i| !tags[i].may_follow(i.checked_sub(1).map(|j| &tags[j])))
}

/// A per-token tag sequence that satisfies BIO validity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct TagSequence(Vec<Tag>);

impl TagSequence {
    pub fn new(tags: Vec<Tag>) -> Result<Self, TagError> {
        match first_violation(&tags) {
            None => Ok(TagSequence(tags)),
            Some(i) => Err(TagError::InvalidBio {
                index: i,
                tag: tags[i].to_string(),
                prev: i
                    .checked_sub(1)
                    .map(|j| tags[j].to_string())
                    .unwrap_or_else(|| "<start>".into()),
            }),
        }
    }

    pub fn outside(len: usize) -> Self {
        TagSequence(vec![Tag::O; len])
    }

    pub fn as_slice(&self) -> &[Tag] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Tag> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tag> {
        self.0.iter()
    }
}

impl AsRef<[Tag]> for TagSequence {
    fn as_ref(&self) -> &[Tag] {
        &self.0
    }
}

impl<'de> Deserialize<'de> for TagSequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tags = Vec::<Tag>::deserialize(d)?;
        TagSequence::new(tags).map_err(serde::de::Error::custom)
    }
}

impl std::ops::Index<usize> for TagSequence {
    type Output = Tag;
    fn index(&self, i: usize) -> &Tag {
        &self.0[i]
    }
}

/// An element occurrence recovered from (or fed to) a tag sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub element: Element,
    pub span: Span,
    pub polarity: Option<Polarity>,
}

/// Tags the spans of every element the scheme includes.
///
/// Overlaps are flattened deterministically: a higher-priority element
/// (targ > exp > holder) takes the token, and among claims of the same
/// element the opinion listed first keeps it. Under the polar scheme,
/// conflict opinions are not tagged at all. Discontinuous pieces, and
/// pieces left over after losing tokens to another claim, each start with
/// a fresh `B`.
pub fn encode(sentence: &Sentence, scheme: TagScheme) -> Result<TagSequence, TagError> {
    let n = sentence.tokens.len();
    // (priority, opinion, element, span index) of the claiming span
    let mut owner: Vec<Option<(u8, usize, Element, usize)>> = vec![None; n];
    for (oi, op) in sentence.opinions.iter().enumerate() {
        if scheme.is_polar() && op.polarity == Polarity::Conflict {
            continue;
        }
        for &element in scheme.elements() {
            for (si, span) in element.spans(op).iter().enumerate() {
                if span.start >= span.end || span.end > n {
                    return Err(TagError::SpanOutOfRange {
                        sent_id: sentence.sent_id.clone(),
                        span: *span,
                        len: n,
                    });
                }
                for slot in &mut owner[span.indices()] {
                    let wins = match slot {
                        None => true,
                        Some((p, ..)) => element.priority() > *p,
                    };
                    if wins {
                        *slot = Some((element.priority(), oi, element, si));
                    }
                }
            }
        }
    }
    let tags = (0..n)
        .map(|i| match owner[i] {
            None => Tag::O,
            Some((_, oi, element, _)) => {
                let polarity = scheme
                    .is_polar()
                    .then_some(sentence.opinions[oi].polarity);
                let chunk = Chunk::new(element, polarity);
                if i > 0 && owner[i - 1] == owner[i] {
                    Tag::I(chunk)
                } else {
                    Tag::B(chunk)
                }
            }
        })
        .collect();
    TagSequence::new(tags)
}

/// Turns maximal `B I*` runs back into spans, ordered by start.
pub fn decode(tags: &[Tag], scheme: TagScheme) -> Result<Vec<LabeledSpan>, TagError> {
    check_inventory(tags, scheme)?;
    let seq = TagSequence::new(tags.to_vec())?;
    Ok(spans_of(seq.as_slice()))
}

fn spans_of(tags: &[Tag]) -> Vec<LabeledSpan> {
    let mut out: Vec<LabeledSpan> = Vec::new();
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::O => {}
            Tag::B(c) => out.push(LabeledSpan {
                element: c.element,
                span: Span::new(i, i + 1),
                polarity: c.polarity,
            }),
            Tag::I(_) => {
                if let Some(last) = out.last_mut() {
                    last.span.end = i + 1;
                }
            }
        }
    }
    out
}

/// Spans of a valid sequence, without an inventory check.
pub fn sequence_spans(seq: &TagSequence) -> Vec<LabeledSpan> {
    spans_of(seq.as_slice())
}

fn check_inventory(tags: &[Tag], scheme: TagScheme) -> Result<(), TagError> {
    match tags.iter().find(|t| !scheme.admits(t)) {
        Some(t) => Err(TagError::NotInInventory {
            tag: t.to_string(),
            scheme: scheme.to_string(),
        }),
        None => Ok(()),
    }
}

/// Minimal rewrite to valid BIO: an `I` that does not continue a run of
/// the same chunk becomes a `B` of its own chunk.
pub fn repair(tags: &[Tag], scheme: TagScheme) -> Result<TagSequence, TagError> {
    check_inventory(tags, scheme)?;
    Ok(repair_unchecked(tags))
}

pub(crate) fn repair_unchecked(tags: &[Tag]) -> TagSequence {
    let mut out: Vec<Tag> = Vec::with_capacity(tags.len());
    for tag in tags {
        let fixed = match *tag {
            Tag::I(c) if !tag.may_follow(out.last()) => Tag::B(c),
            t => t,
        };
        out.push(fixed);
    }
    TagSequence(out)
}

/// [`repair`] over surface-form labels.
pub fn repair_labels<S: AsRef<str>>(labels: &[S], scheme: TagScheme) -> Result<TagSequence, TagError> {
    let tags = labels
        .iter()
        .map(|l| l.as_ref().parse())
        .collect::<Result<Vec<Tag>, _>>()?;
    repair(&tags, scheme)
}
