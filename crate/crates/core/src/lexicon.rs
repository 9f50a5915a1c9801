//! Sentiment lexicons used as an expression oracle: any token found in
//! the lexicon is treated as a one-word sentiment expression.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Polarity, Span};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon `{0}` has no entries")]
    Empty(String),
    #[error("lexicon `{name}` line {line}: {message}")]
    Malformed {
        name: String,
        line: usize,
        message: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexiconFormat {
    /// One term per line. Lines starting with `;` are comments.
    Plain,
    /// `term<TAB>positive|negative|neutral`
    Tsv,
}

impl std::str::FromStr for LexiconFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" => Ok(LexiconFormat::Plain),
            "tsv" => Ok(LexiconFormat::Tsv),
            other => Err(format!("unknown lexicon format `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pub name: String,
    entries: IndexMap<String, Option<Polarity>>,
}

/// Lowercases and collapses internal whitespace.
pub fn normalize_term(term: &str) -> String {
    term.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

impl Lexicon {
    pub fn from_terms<I, S>(name: &str, terms: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (S, Option<Polarity>)>,
        S: AsRef<str>,
    {
        let mut entries = IndexMap::new();
        for (t, p) in terms {
            let t = normalize_term(t.as_ref());
            if !t.is_empty() {
                entries.entry(t).or_insert(p);
            }
        }
        if entries.is_empty() {
            return Err(LexiconError::Empty(name.to_string()));
        }
        Ok(Lexicon {
            name: name.to_string(),
            entries,
        })
    }

    /// Parses lexicon text. Duplicate terms keep their first occurrence
    /// and are returned alongside the lexicon.
    pub fn parse(
        name: &str,
        text: &str,
        format: LexiconFormat,
    ) -> Result<(Lexicon, Vec<String>), LexiconError> {
        let mut entries = IndexMap::new();
        let mut duplicates = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with(';') {
                continue;
            }
            let (term, polarity) = match format {
                LexiconFormat::Plain => (line, None),
                LexiconFormat::Tsv => {
                    let malformed = |message: String| LexiconError::Malformed {
                        name: name.to_string(),
                        line: i + 1,
                        message,
                    };
                    let (term, pol) = line
                        .split_once('\t')
                        .ok_or_else(|| malformed("expected `term<TAB>polarity`".into()))?;
                    let pol = match pol.trim() {
                        "positive" => Polarity::Positive,
                        "negative" => Polarity::Negative,
                        "neutral" => Polarity::Neutral,
                        other => return Err(malformed(format!("unknown polarity `{other}`"))),
                    };
                    (term, Some(pol))
                }
            };
            let term = normalize_term(term);
            if term.is_empty() {
                continue;
            }
            if entries.contains_key(&term) {
                duplicates.push(term);
            } else {
                entries.insert(term, polarity);
            }
        }
        if entries.is_empty() {
            return Err(LexiconError::Empty(name.to_string()));
        }
        Ok((
            Lexicon {
                name: name.to_string(),
                entries,
            },
            duplicates,
        ))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token) || self.entries.contains_key(&token.to_lowercase())
    }

    pub fn polarity(&self, term: &str) -> Option<Polarity> {
        self.entries.get(&normalize_term(term)).copied().flatten()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Reads a lexicon file; its name is the file stem. Invalid UTF-8 bytes
/// are replaced rather than rejected, since several public lexicons ship
/// in Latin-1.
pub fn load_lexicon(path: &Path, format: LexiconFormat) -> Result<Lexicon, LexiconError> {
    let bytes = fs::read(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = String::from_utf8_lossy(&bytes);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "lexicon".into());
    let (lexicon, duplicates) = Lexicon::parse(&name, &text, format)?;
    if !duplicates.is_empty() {
        log::warn!(
            "lexicon {}: {} duplicate term(s) ignored, first: `{}`",
            name,
            duplicates.len(),
            duplicates[0]
        );
    }
    log::info!("lexicon {}: {} entries", name, lexicon.len());
    Ok(lexicon)
}

/// One length-1 expression span per token whose lowercased form is in
/// the lexicon, left to right. Multiword entries never match.
pub fn mark_expressions<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon) -> Vec<Span> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| lexicon.contains(t.as_ref()))
        .map(|(i, _)| Span::new(i, i + 1))
        .collect()
}
