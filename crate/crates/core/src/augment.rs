//! Bracket-token input augmentation.
//!
//! Holder and expression spans are marked in the token stream by inserting
//! `[<H]`/`[H>]` and `[<E]`/`[E>]` around them, so a model sees where they
//! are without predicting them. Every insertion is recorded, so the
//! original sentence and span addressing can be restored exactly.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Sentence, Span};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("sentence `{sent_id}`: overlapping {kind} regions {a} and {b}")]
    Overlap {
        sent_id: String,
        kind: &'static str,
        a: Span,
        b: Span,
    },
    #[error("sentence `{sent_id}`: span {span} out of range for {len} tokens")]
    OutOfRange {
        sent_id: String,
        span: Span,
        len: usize,
    },
    #[error("bracket token `{token}` at position {position} has no insertion record")]
    UnrecordedBracket { token: String, position: usize },
    #[error("insertion record at position {position} does not match token `{token}`")]
    BadRecord { token: String, position: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    #[default]
    Original,
    Holders,
    Expressions,
    Full,
}

impl AugmentMode {
    pub const ALL: [AugmentMode; 4] = [
        AugmentMode::Original,
        AugmentMode::Holders,
        AugmentMode::Expressions,
        AugmentMode::Full,
    ];

    pub fn marks_holders(&self) -> bool {
        matches!(self, AugmentMode::Holders | AugmentMode::Full)
    }

    pub fn marks_expressions(&self) -> bool {
        matches!(self, AugmentMode::Expressions | AugmentMode::Full)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AugmentMode::Original => "original",
            AugmentMode::Holders => "holders",
            AugmentMode::Expressions => "expressions",
            AugmentMode::Full => "full",
        }
    }
}

impl fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AugmentMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        AugmentMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown augment mode `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bracket {
    HolderOpen,
    HolderClose,
    ExpressionOpen,
    ExpressionClose,
}

impl Bracket {
    pub const ALL: [Bracket; 4] = [
        Bracket::HolderOpen,
        Bracket::HolderClose,
        Bracket::ExpressionOpen,
        Bracket::ExpressionClose,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Bracket::HolderOpen => "[<H]",
            Bracket::HolderClose => "[H>]",
            Bracket::ExpressionOpen => "[<E]",
            Bracket::ExpressionClose => "[E>]",
        }
    }

    pub fn from_token(tok: &str) -> Option<Bracket> {
        Bracket::ALL.into_iter().find(|b| b.as_str() == tok)
    }
}

pub fn is_bracket_token(tok: &str) -> bool {
    Bracket::from_token(tok).is_some()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentedSentence {
    pub tokens: Vec<String>,
    /// `span_map[i]` is the augmented position of original token `i`.
    pub span_map: Vec<usize>,
    /// Augmented position and kind of every inserted bracket, ascending.
    pub inserted: Vec<(usize, Bracket)>,
}

impl AugmentedSentence {
    pub fn identity(tokens: &[String]) -> Self {
        AugmentedSentence {
            tokens: tokens.to_vec(),
            span_map: (0..tokens.len()).collect(),
            inserted: Vec::new(),
        }
    }

    /// Re-addresses an original span. Inserted brackets inside the span
    /// split it, so the result selects exactly the original tokens.
    pub fn remap(&self, span: Span) -> Vec<Span> {
        let mut out: Vec<Span> = Vec::new();
        for i in span.indices() {
            let j = self.span_map[i];
            match out.last_mut() {
                Some(last) if last.end == j => last.end = j + 1,
                _ => out.push(Span::new(j, j + 1)),
            }
        }
        out
    }

    pub fn remap_all(&self, spans: &[Span]) -> Vec<Span> {
        spans.iter().flat_map(|&s| self.remap(s)).collect()
    }
}

fn collect_regions(
    sentence: &Sentence,
    spans: impl Iterator<Item = Span>,
    kind: &'static str,
) -> Result<Vec<Span>, AugmentError> {
    let n = sentence.tokens.len();
    let set: BTreeSet<Span> = spans.collect();
    let regions: Vec<Span> = set.into_iter().collect();
    for s in &regions {
        if s.start >= s.end || s.end > n {
            return Err(AugmentError::OutOfRange {
                sent_id: sentence.sent_id.clone(),
                span: *s,
                len: n,
            });
        }
    }
    for w in regions.windows(2) {
        if w[0].overlaps(&w[1]) {
            return Err(AugmentError::Overlap {
                sent_id: sentence.sent_id.clone(),
                kind,
                a: w[0],
                b: w[1],
            });
        }
    }
    Ok(regions)
}

/// Inserts bracket tokens around holders and/or expressions.
///
/// `expressions` replaces the gold expression spans when given (predicted
/// or lexicon spans). All annotated holders in the sentence are marked.
/// At a shared boundary closing brackets come first; among brackets of
/// the same direction the enclosing region is outermost.
pub fn insert_tags(
    sentence: &Sentence,
    mode: AugmentMode,
    expressions: Option<&[Span]>,
) -> Result<AugmentedSentence, AugmentError> {
    let n = sentence.tokens.len();
    let mut regions: Vec<(Span, Bracket, Bracket)> = Vec::new();
    if mode.marks_holders() {
        let holders = sentence
            .opinions
            .iter()
            .flat_map(|op| op.holder.iter().copied());
        for s in collect_regions(sentence, holders, "holder")? {
            regions.push((s, Bracket::HolderOpen, Bracket::HolderClose));
        }
    }
    if mode.marks_expressions() {
        let exps: Vec<Span> = match expressions {
            Some(spans) => spans.to_vec(),
            None => sentence
                .opinions
                .iter()
                .flat_map(|op| op.expression.iter().copied())
                .collect(),
        };
        for s in collect_regions(sentence, exps.into_iter(), "expression")? {
            regions.push((s, Bracket::ExpressionOpen, Bracket::ExpressionClose));
        }
    }
    if regions.is_empty() {
        return Ok(AugmentedSentence::identity(&sentence.tokens));
    }

    let mut tokens = Vec::with_capacity(n + 2 * regions.len());
    let mut span_map = Vec::with_capacity(n);
    let mut inserted = Vec::with_capacity(2 * regions.len());
    for p in 0..=n {
        let mut closing: Vec<&(Span, Bracket, Bracket)> =
            regions.iter().filter(|r| r.0.end == p).collect();
        // innermost first; expressions before holders on a tie
        closing.sort_by(|a, b| b.0.start.cmp(&a.0.start).then(b.1.cmp(&a.1)));
        let mut opening: Vec<&(Span, Bracket, Bracket)> =
            regions.iter().filter(|r| r.0.start == p).collect();
        // outermost first; holders before expressions on a tie
        opening.sort_by(|a, b| b.0.end.cmp(&a.0.end).then(a.1.cmp(&b.1)));
        for r in closing {
            inserted.push((tokens.len(), r.2));
            tokens.push(r.2.as_str().to_string());
        }
        for r in opening {
            inserted.push((tokens.len(), r.1));
            tokens.push(r.1.as_str().to_string());
        }
        if p < n {
            span_map.push(tokens.len());
            tokens.push(sentence.tokens[p].clone());
        }
    }
    Ok(AugmentedSentence {
        tokens,
        span_map,
        inserted,
    })
}

/// Original tokens recovered from an augmented sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrippedSentence {
    pub tokens: Vec<String>,
    /// For each augmented position, the original index (`None` for brackets).
    pub inverse_map: Vec<Option<usize>>,
}

impl StrippedSentence {
    /// Maps an augmented span back, dropping bracket positions.
    pub fn to_original(&self, span: Span) -> Option<Span> {
        let idx: Vec<usize> = span
            .indices()
            .filter_map(|i| self.inverse_map.get(i).copied().flatten())
            .collect();
        Some(Span::new(*idx.first()?, idx.last()? + 1))
    }
}

/// Removes the recorded brackets. A bracket-shaped token without a record
/// is an error.
pub fn strip_tags(aug: &AugmentedSentence) -> Result<StrippedSentence, AugmentError> {
    let records: HashMap<usize, Bracket> = aug.inserted.iter().copied().collect();
    let mut tokens = Vec::with_capacity(aug.tokens.len() - records.len().min(aug.tokens.len()));
    let mut inverse_map = Vec::with_capacity(aug.tokens.len());
    for (i, tok) in aug.tokens.iter().enumerate() {
        match records.get(&i) {
            Some(b) if b.as_str() == tok => inverse_map.push(None),
            Some(_) => {
                return Err(AugmentError::BadRecord {
                    token: tok.clone(),
                    position: i,
                })
            }
            None if is_bracket_token(tok) => {
                return Err(AugmentError::UnrecordedBracket {
                    token: tok.clone(),
                    position: i,
                })
            }
            None => {
                inverse_map.push(Some(tokens.len()));
                tokens.push(tok.clone());
            }
        }
    }
    if let Some(&(pos, b)) = aug.inserted.iter().find(|(p, _)| *p >= aug.tokens.len()) {
        return Err(AugmentError::BadRecord {
            token: b.as_str().to_string(),
            position: pos,
        });
    }
    Ok(StrippedSentence {
        tokens,
        inverse_map,
    })
}
