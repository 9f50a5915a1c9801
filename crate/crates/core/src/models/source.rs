use std::collections::HashMap;
use std::sync::Arc;

use super::ModelError;
use crate::corpus::{Sentence, Span};
use crate::lexicon::{mark_expressions, Lexicon};

/// Where expression spans for augmentation come from.
#[derive(Clone, Debug, Default)]
pub enum ExpressionSource {
    /// The sentence's own annotated expressions.
    #[default]
    Gold,
    /// Every lexicon word is an expression.
    Lexicon(Arc<Lexicon>),
    /// Precomputed spans (model predictions), keyed by sent_id.
    Fixed(Arc<HashMap<String, Vec<Span>>>),
}

impl ExpressionSource {
    /// `None` means "use gold".
    pub fn spans_for(&self, sentence: &Sentence) -> Result<Option<Vec<Span>>, ModelError> {
        match self {
            ExpressionSource::Gold => Ok(None),
            ExpressionSource::Lexicon(lex) => Ok(Some(mark_expressions(&sentence.tokens, lex))),
            ExpressionSource::Fixed(map) => map
                .get(&sentence.sent_id)
                .cloned()
                .map(Some)
                .ok_or_else(|| ModelError::MissingRecord(sentence.sent_id.clone())),
        }
    }
}
