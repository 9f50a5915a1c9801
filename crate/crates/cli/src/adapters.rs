//! Readers that turn source-format files into the canonical corpus.

use std::str::FromStr;

use finesent_core::corpus::{
    from_conll, parse_corpus_with, Corpus, Opinion, PolarityMap, Sentence, Split,
};
use finesent_core::tagscheme::{decode, Element, Strategy, TagScheme, TaskMode};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Adapter {
    /// Canonical JSON, re-validated and re-serialized.
    Canonical,
    /// `token<TAB>tag` lines with polar target tags, one opinion per target.
    Conll,
}

impl FromStr for Adapter {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" | "json" => Ok(Adapter::Canonical),
            "conll" => Ok(Adapter::Conll),
            other => Err(CliError::Usage(format!(
                "unknown adapter `{other}` (expected canonical or conll)"
            ))),
        }
    }
}

pub struct ConvertOptions {
    pub adapter: Adapter,
    /// Tag set of CoNLL input.
    pub scheme: TagScheme,
    pub polarities: PolarityMap,
    /// Corpus name for formats that do not carry one.
    pub name: String,
}

impl ConvertOptions {
    pub fn new(adapter: Adapter, name: impl Into<String>) -> Self {
        ConvertOptions {
            adapter,
            scheme: TagScheme::new(Strategy::JointPolarity, TaskMode::Targeted),
            polarities: PolarityMap::identity(),
            name: name.into(),
        }
    }
}

pub fn convert(input: &[u8], opts: &ConvertOptions) -> Result<Corpus, CliError> {
    match opts.adapter {
        Adapter::Canonical => Ok(parse_corpus_with(input, &opts.polarities)?),
        Adapter::Conll => conll_corpus(input, opts),
    }
}

fn conll_corpus(input: &[u8], opts: &ConvertOptions) -> Result<Corpus, CliError> {
    let scheme = opts.scheme;
    if !scheme.is_polar() || scheme.mode != TaskMode::Targeted {
        return Err(CliError::Usage(format!(
            "the conll adapter reads polar targeted tags, not {scheme}"
        )));
    }
    let text = std::str::from_utf8(input)
        .map_err(|e| CliError::Validation(format!("input is not UTF-8: {e}")))?;
    let mut sentences = Vec::new();
    for cs in from_conll(text, scheme)? {
        let spans = decode(&cs.tags, scheme)
            .map_err(|e| CliError::Validation(format!("sentence `{}`: {e}", cs.sent_id)))?;
        let mut s = Sentence::new(cs.sent_id, cs.tokens);
        s.opinions = spans
            .into_iter()
            .filter(|ls| ls.element == Element::Target)
            .map(|ls| {
                let polarity = ls.polarity.expect("polar scheme tags carry polarity");
                Opinion::targeted(vec![ls.span], polarity)
            })
            .collect();
        sentences.push(s);
    }
    let corpus = Corpus::new(opts.name.clone(), Split::Unsplit, sentences);
    corpus.validate()?;
    Ok(corpus)
}
