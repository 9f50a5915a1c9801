use super::ModelError;
use crate::tagscheme::{self, Element, Tag, TagSequence};

/// Keeps only expression tags; everything else becomes `O`.
pub fn expression_only(seq: &TagSequence) -> TagSequence {
    let tags: Vec<Tag> = seq
        .iter()
        .map(|t| match t.element() {
            Some(Element::Expression) => *t,
            _ => Tag::O,
        })
        .collect();
    tagscheme::repair_unchecked(&tags)
}

/// Per-token union of expression predictions from several models.
///
/// A token is `O` only if every member says `O`. Otherwise it is `B` if
/// any member says `B`, else `I`; the chunk (polarity) comes from the
/// first member that tagged the token with the chosen position. The
/// result is repaired to valid BIO.
///
/// Members may be raw (unrepaired) model outputs.
pub fn ensemble_union<P: AsRef<[Tag]>>(predictions: &[P]) -> Result<TagSequence, ModelError> {
    let Some(first) = predictions.first() else {
        return Ok(TagSequence::outside(0));
    };
    let n = first.as_ref().len();
    if let Some(bad) = predictions.iter().find(|p| p.as_ref().len() != n) {
        return Err(ModelError::LengthMismatch(n, bad.as_ref().len()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let column: Vec<Tag> = predictions
            .iter()
            .map(|p| p.as_ref()[i])
            .filter(|t| t.element() == Some(Element::Expression))
            .collect();
        let begin = column.iter().find(|t| matches!(t, Tag::B(_)));
        let tag = match (begin, column.first()) {
            (Some(Tag::B(c)), _) => Tag::B(*c),
            (_, Some(Tag::I(c))) => Tag::I(*c),
            _ => Tag::O,
        };
        out.push(tag);
    }
    Ok(tagscheme::repair_unchecked(&out))
}
