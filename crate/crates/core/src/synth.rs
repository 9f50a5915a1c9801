//! Small hand-built fixtures and seeded synthetic corpora used by tests,
//! benchmarks and the acceptance suite.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Opinion, Polarity, Sentence, Span, Split};

/// The token that always forms a length-one target in [`pivot_corpus`].
pub const PIVOT: &str = "PIVOT";

/// Tokens that decide the class of a [`class_corpus`] target.
pub const CLASS_MARKERS: [(&str, Polarity); 3] = [
    ("MARK_POS", Polarity::Positive),
    ("MARK_NEU", Polarity::Neutral),
    ("MARK_NEG", Polarity::Negative),
];

const FILLER: [&str; 24] = [
    "the", "a", "service", "was", "food", "and", "we", "they", "said", "room", "staff", "it", "is",
    "very", "quite", "not", "price", "hotel", "phone", "battery", "screen", "of", "to", "really",
];

fn toks(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

fn split_tag(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Dev => "dev",
        Split::Test => "test",
        Split::Unsplit => "all",
    }
}

/// "Have seen some others giving UMUC 5 stars - don't believe them ."
/// with a positive opinion held by "some others" and a negative one from
/// the author.
pub fn figure_one() -> Sentence {
    let mut s = Sentence::new(
        "fig1",
        toks(&[
            "Have", "seen", "some", "others", "giving", "UMUC", "5", "stars", "-", "don't", "believe",
            "them", ".",
        ]),
    );
    let mut first = Opinion::targeted(vec![Span::new(5, 6)], Polarity::Positive);
    first.holder = vec![Span::new(2, 4)];
    first.expression = vec![Span::new(6, 8)];
    let mut second = Opinion::targeted(vec![Span::new(11, 12)], Polarity::Negative);
    second.expression = vec![Span::new(9, 11)];
    s.opinions = vec![first, second];
    s
}

/// "Money Magazine rated E-Trade highly ." with a discontinuous
/// expression.
pub fn money_magazine() -> Sentence {
    let mut s = Sentence::new("money", toks(&["Money", "Magazine", "rated", "E-Trade", "highly", "."]));
    let mut op = Opinion::targeted(vec![Span::new(3, 4)], Polarity::Positive);
    op.holder = vec![Span::new(0, 2)];
    op.expression = vec![Span::new(2, 3), Span::new(4, 5)];
    s.opinions = vec![op];
    s
}

/// Sentences of filler words where every [`PIVOT`] token is its own
/// length-one target and nothing else is annotated.
pub fn pivot_corpus(n: usize, seed: u64, split: Split) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = split_tag(split);
    let sentences = (0..n)
        .map(|i| {
            let len = rng.gen_range(5..=15);
            let mut tokens: Vec<String> = (0..len)
                .map(|_| FILLER.choose(&mut rng).expect("non-empty").to_string())
                .collect();
            let pivots = rng.gen_range(0..=2);
            for _ in 0..pivots {
                tokens[rng.gen_range(0..len)] = PIVOT.to_string();
            }
            let mut s = Sentence::new(format!("pivot-{tag}-{i}"), tokens);
            s.opinions = s
                .tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| *t == PIVOT)
                .map(|(k, _)| {
                    let pol = Polarity::CLASSES[rng.gen_range(0..3)];
                    Opinion::targeted(vec![Span::new(k, k + 1)], pol)
                })
                .collect();
            s
        })
        .collect();
    Corpus::new("pivot", split, sentences)
}

/// One target per sentence; the target contains a class marker token that
/// decides its polarity. Some sentences also carry a holder and an
/// expression so augmentation has something to mark.
pub fn class_corpus(n: usize, seed: u64, split: Split) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = split_tag(split);
    let sentences = (0..n)
        .map(|i| {
            let (marker, pol) = CLASS_MARKERS[i % 3];
            let before = rng.gen_range(1..=5);
            let after = rng.gen_range(1..=5);
            let target_len = rng.gen_range(1..=3);
            let mut tokens: Vec<String> = (0..before + target_len + after)
                .map(|_| FILLER.choose(&mut rng).expect("non-empty").to_string())
                .collect();
            tokens[before + rng.gen_range(0..target_len)] = marker.to_string();
            let mut op = Opinion::targeted(vec![Span::new(before, before + target_len)], pol);
            if rng.gen_bool(0.5) {
                op.holder = vec![Span::new(0, 1)];
                let e = before + target_len;
                op.expression = vec![Span::new(e, e + 1)];
            }
            let mut s = Sentence::new(format!("class-{tag}-{i}"), tokens);
            s.opinions = vec![op];
            s
        })
        .collect();
    Corpus::new("class", split, sentences)
}

/// Parameters for [`random_sentence`].
#[derive(Clone, Copy, Debug)]
pub struct RandomShape {
    pub max_len: usize,
    pub max_opinions: usize,
    pub allow_conflict: bool,
    /// Probability that an opinion has a holder / an expression.
    pub element_rate: f64,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape {
            max_len: 12,
            max_opinions: 3,
            allow_conflict: true,
            element_rate: 0.6,
        }
    }
}

/// Sorted, non-overlapping list of one or two spans inside `0..len`.
fn random_spans(rng: &mut impl Rng, len: usize) -> Vec<Span> {
    let count = if len >= 3 && rng.gen_bool(0.25) { 2 } else { 1 };
    let mut cuts: Vec<usize> = (0..=len).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(2 * count).collect();
    cuts.sort_unstable();
    cuts.chunks(2).map(|c| Span::new(c[0], c[1])).collect()
}

/// A valid sentence with random tokens and overlapping opinions.
pub fn random_sentence(rng: &mut impl Rng, id: &str, shape: RandomShape) -> Sentence {
    let len = rng.gen_range(1..=shape.max_len.max(1));
    let tokens = (0..len)
        .map(|_| FILLER.choose(rng).expect("non-empty").to_string())
        .collect();
    let mut s = Sentence::new(id, tokens);
    for _ in 0..rng.gen_range(0..=shape.max_opinions) {
        let pol = if shape.allow_conflict {
            [Polarity::Positive, Polarity::Negative, Polarity::Neutral, Polarity::Conflict][rng.gen_range(0..4)]
        } else {
            Polarity::CLASSES[rng.gen_range(0..3)]
        };
        let mut op = Opinion::targeted(random_spans(rng, len), pol);
        if rng.gen_bool(shape.element_rate) {
            op.holder = random_spans(rng, len);
        }
        if rng.gen_bool(shape.element_rate) {
            op.expression = random_spans(rng, len);
        }
        s.opinions.push(op);
    }
    s
}

pub fn random_corpus(seed: u64, n: usize, shape: RandomShape) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..n).map(|i| random_sentence(&mut rng, &format!("r{i}"), shape)).collect();
    Corpus::new("random", Split::Unsplit, sentences)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_validate() {
        assert!(figure_one().validate(0).is_ok());
        assert!(money_magazine().validate(0).is_ok());
        assert!(pivot_corpus(50, 1, Split::Train).validate().is_ok());
        assert!(class_corpus(50, 1, Split::Train).validate().is_ok());
        assert!(random_corpus(3, 200, RandomShape::default()).validate().is_ok());
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(pivot_corpus(20, 7, Split::Dev), pivot_corpus(20, 7, Split::Dev));
        assert_ne!(pivot_corpus(20, 7, Split::Dev), pivot_corpus(20, 8, Split::Dev));
        assert_eq!(random_corpus(1, 10, RandomShape::default()), random_corpus(1, 10, RandomShape::default()));
    }

    #[test]
    fn pivot_tokens_are_targets() {
        for s in &pivot_corpus(100, 2, Split::Train).sentences {
            let pivots = s.tokens.iter().filter(|t| *t == PIVOT).count();
            assert_eq!(s.opinions.len(), pivots);
        }
    }
}
