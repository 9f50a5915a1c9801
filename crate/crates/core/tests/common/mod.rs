//! Independent reference implementations and generators shared by the
//! property tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use finesent_core::corpus::{Corpus, Opinion, Polarity, Sentence, Span, Split};
use finesent_core::tagscheme::{Element, LabeledSpan, Tag, TagScheme};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

pub const WORDS: [&str; 16] = [
    "good", "Bad", "the", "phone", "great", "awful", "Screen", "is", "and", "I", "love", "hate",
    "battery", "meh", "OK", "it",
];

fn words(rng: &mut impl Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect()
}

/// Sentence whose annotated spans are pairwise disjoint across all
/// opinions and elements, without conflict polarity. Every opinion has a
/// target; discontinuous spans appear.
pub fn disjoint_sentence(rng: &mut impl Rng, id: &str) -> Sentence {
    let n = rng.gen_range(1..=14);
    let mut s = Sentence::new(id, words(rng, n));
    // cut the sentence into segments; each segment is either unused or one span
    let mut segments = Vec::new();
    let mut i = 0;
    while i < n {
        let len = rng.gen_range(1..=3).min(n - i);
        segments.push(Span::new(i, i + len));
        i += len;
    }
    let opinions = rng.gen_range(0..=3usize);
    let mut ops: Vec<Opinion> = (0..opinions)
        .map(|_| Opinion::targeted(Vec::new(), Polarity::CLASSES[rng.gen_range(0..3)]))
        .collect();
    for seg in segments {
        if ops.is_empty() || rng.gen_bool(0.3) {
            continue;
        }
        let k = rng.gen_range(0..ops.len());
        let op = &mut ops[k];
        match rng.gen_range(0..3) {
            0 => op.target.push(seg),
            1 => op.holder.push(seg),
            _ => op.expression.push(seg),
        }
    }
    ops.retain(|op| !op.target.is_empty());
    s.opinions = ops;
    s
}

/// Opinions may overlap freely and carry any polarity.
pub fn overlapping_sentence(rng: &mut impl Rng, id: &str) -> Sentence {
    let n = rng.gen_range(1..=12);
    let mut s = Sentence::new(id, words(rng, n));
    let spans = |rng: &mut dyn rand::RngCore| {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(a + 1..=n);
        vec![Span::new(a, b)]
    };
    for _ in 0..rng.gen_range(0..=3) {
        let pol = [Polarity::Positive, Polarity::Negative, Polarity::Neutral, Polarity::Conflict]
            [rng.gen_range(0..4)];
        let mut op = Opinion::targeted(spans(rng), pol);
        if rng.gen_bool(0.5) {
            op.holder = spans(rng);
        }
        if rng.gen_bool(0.5) {
            op.expression = spans(rng);
        }
        s.opinions.push(op);
    }
    s
}

pub fn disjoint_corpus(rng: &mut impl Rng, sentences: usize) -> Corpus {
    let s = (0..sentences).map(|i| disjoint_sentence(rng, &format!("s{i}"))).collect();
    Corpus::new("generated", Split::Unsplit, s)
}

/// Every span the scheme tags, read straight off the opinions.
pub fn included_spans(s: &Sentence, scheme: TagScheme) -> BTreeSet<LabeledSpan> {
    let mut out = BTreeSet::new();
    for op in &s.opinions {
        if scheme.is_polar() && op.polarity == Polarity::Conflict {
            continue;
        }
        let polarity = scheme.is_polar().then_some(op.polarity);
        for (element, spans) in [
            (Element::Holder, &op.holder),
            (Element::Target, &op.target),
            (Element::Expression, &op.expression),
        ] {
            if !scheme.includes(element) {
                continue;
            }
            for &span in spans {
                out.insert(LabeledSpan {
                    element,
                    span,
                    polarity,
                });
            }
        }
    }
    out
}

/// Random tags from a label set, not necessarily valid BIO.
pub fn random_tags(rng: &mut impl Rng, labels: &[Tag], n: usize) -> Vec<Tag> {
    (0..n).map(|_| *labels.choose(rng).unwrap()).collect()
}

pub fn is_valid_bio(tags: &[Tag]) -> bool {
    tags.iter().enumerate().all(|(i, t)| match t {
        Tag::I(c) => i > 0 && tags[i - 1].chunk() == Some(*c),
        _ => true,
    })
}

/// Token F1 by materialising (sentence, token) sets per element.
pub fn token_f1_oracle(gold: &[Vec<Tag>], pred: &[Vec<Tag>], element: Element) -> (u64, u64, u64, f64) {
    let set = |seqs: &[Vec<Tag>]| -> HashSet<(usize, usize)> {
        seqs.iter()
            .enumerate()
            .flat_map(|(s, seq)| {
                seq.iter()
                    .enumerate()
                    .filter(|(_, t)| t.chunk().map(|c| c.element) == Some(element))
                    .map(move |(i, _)| (s, i))
            })
            .collect()
    };
    let (g, p) = (set(gold), set(pred));
    let tp = g.intersection(&p).count() as u64;
    let fp = p.difference(&g).count() as u64;
    let fn_ = g.difference(&p).count() as u64;
    // F1 = 2TP / (2TP + FP + FN), equivalent to 2PR/(P+R) with 0/0 = 0
    let f1 = if tp == 0 { 0.0 } else { (2 * tp) as f64 / (2 * tp + fp + fn_) as f64 };
    (tp, fp, fn_, f1)
}

/// Macro F1 via an explicit 4x4 confusion matrix (conflict as index 3).
pub fn macro_f1_oracle(gold: &[Polarity], pred: &[Polarity]) -> (f64, [f64; 3]) {
    let idx = |p: Polarity| match p {
        Polarity::Positive => 0,
        Polarity::Neutral => 1,
        Polarity::Negative => 2,
        Polarity::Conflict => 3,
    };
    let mut m = [[0u64; 4]; 4];
    for (&g, &p) in gold.iter().zip(pred) {
        if g != Polarity::Conflict {
            m[idx(g)][idx(p)] += 1;
        }
    }
    let mut f = [0.0; 3];
    for c in 0..3 {
        let tp = m[c][c];
        let row: u64 = m[c].iter().sum();
        let col: u64 = (0..4).map(|r| m[r][c]).sum();
        f[c] = if tp == 0 { 0.0 } else { (2 * tp) as f64 / (row + col) as f64 };
    }
    ((f[0] + f[1] + f[2]) / 3.0, f)
}

pub fn two_pass_mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, 1e-15, 50)
}

/// Pearson r by the textbook formula and the two-sided t-test p-value by
/// quadrature. With x = sqrt(df) tan(theta) the t tail becomes the
/// integral of cos^(df-1) over [atan(|t|/sqrt(df)), pi/2], normalised by
/// the same integral from 0.
pub fn pearson_oracle(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r = cov / (vx * vy).sqrt();
    let df = n - 2.0;
    if r.abs() >= 1.0 {
        return (r.clamp(-1.0, 1.0), 0.0);
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let theta0 = (t.abs() / df.sqrt()).atan();
    let f = move |th: f64| th.cos().powf(df - 1.0);
    let half = std::f64::consts::FRAC_PI_2;
    let p = integrate(&f, theta0, half) / integrate(&f, 0.0, half);
    (r, p)
}

/// Exhaustive Viterbi: scores every legal path left to right (emission,
/// then incoming transition, per position), keeping the first maximum in
/// lexicographic order.
pub fn brute_force_viterbi(
    emissions: &Array2<f64>,
    transitions: &Array2<f64>,
    legal_start: &dyn Fn(usize) -> bool,
    legal: &dyn Fn(usize, usize) -> bool,
) -> Option<(Vec<usize>, f64)> {
    let (n, l) = emissions.dim();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let total = l.pow(n as u32);
    for code in 0..total {
        let mut path = vec![0; n];
        let mut c = code;
        for k in (0..n).rev() {
            path[k] = c % l;
            c /= l;
        }
        if n > 0 && !legal_start(path[0]) {
            continue;
        }
        if path.windows(2).any(|w| !legal(w[0], w[1])) {
            continue;
        }
        let mut score = 0.0;
        for (i, &y) in path.iter().enumerate() {
            score += emissions[[i, y]];
            if i > 0 {
                score += transitions[[path[i - 1], y]];
            }
        }
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((path, score));
        }
    }
    best
}

/// Mean cross-entropy of a softmax classifier, written out directly.
pub fn cross_entropy(w: &Array2<f64>, b: &Array1<f64>, xs: &[Array1<f64>], ys: &[usize]) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: Vec<f64> = (0..w.nrows())
            .map(|c| b[c] + (0..x.len()).map(|j| w[[c, j]] * x[j]).sum::<f64>())
            .collect();
        let norm: f64 = z.iter().map(|v| v.exp()).sum();
        total -= (z[y].exp() / norm).ln();
    }
    total / xs.len() as f64
}

/// Lexicon marking by comparing each token with every entry.
pub fn lexicon_oracle(tokens: &[String], entries: &[String]) -> Vec<Span> {
    let mut out = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        let lower = t.to_lowercase();
        if entries.iter().any(|e| *e == lower || e == t) {
            out.push(Span::new(i, i + 1));
        }
    }
    out
}

/// Target-string overlap by pairwise comparison of surface forms.
pub fn overlap_oracle(train: &Corpus, dev: &Corpus, test: &Corpus) -> [f64; 5] {
    let forms = |c: &Corpus| -> Vec<String> {
        let mut v: Vec<String> = Vec::new();
        for s in &c.sentences {
            for op in &s.opinions {
                let f = op
                    .target
                    .iter()
                    .flat_map(|sp| s.tokens[sp.start..sp.end].iter().cloned())
                    .collect::<Vec<_>>()
                    .join(" ");
                if !v.contains(&f) {
                    v.push(f);
                }
            }
        }
        v
    };
    let (tr, dv, te) = (forms(train), forms(dev), forms(test));
    let has = |v: &[String], f: &String| v.iter().any(|x| x == f);
    let pct = |k: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
    let uniq = |own: &[String], a: &[String], b: &[String]| {
        pct(own.iter().filter(|f| !has(a, f) && !has(b, f)).count(), own.len())
    };
    [
        uniq(&tr, &dv, &te),
        uniq(&dv, &tr, &te),
        uniq(&te, &tr, &dv),
        pct(dv.iter().filter(|f| has(&tr, f)).count(), dv.len()),
        pct(te.iter().filter(|f| has(&tr, f)).count(), te.len()),
    ]
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}
