//! Targeted sentiment toolkit: unified opinion corpora, BIO extraction
//! schemes, input augmentation with holder/expression brackets, lexicon
//! expression sources, small trainable models and evaluation.

pub mod augment;
pub mod corpus;
pub mod eval;
pub mod lexicon;
pub mod models;
pub mod synth;
pub mod tagscheme;

pub use augment::{insert_tags, strip_tags, AugmentMode, AugmentedSentence};
pub use corpus::{parse_corpus, Corpus, CorpusError, Opinion, Polarity, Sentence, Span, Split};
pub use eval::{aggregate_runs, macro_f1, pearson, token_f1, EvalError};
pub use lexicon::{load_lexicon, mark_expressions, Lexicon};
pub use tagscheme::{decode, encode, repair, Element, Strategy, Tag, TagScheme, TagSequence, TaskMode};
