//! Evaluation: token-level F1 for extraction, macro F1 for polarity,
//! multi-seed aggregation and Pearson correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::corpus::Polarity;
use crate::tagscheme::{Element, Tag};

/// Recorded in every polarity report header.
pub const MACRO_F1_NOTE: &str =
    "macro F1 averages positive/neutral/negative; a class absent from gold contributes F1 = 0; conflict gold items are dropped";

/// Recorded in every extraction report header.
pub const TOKEN_F1_NOTE: &str =
    "token F1 counts tokens inside spans of the element; B/I and polarity suffixes are ignored";

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: gold has {gold}, prediction has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no values to aggregate")]
    Empty,
    #[error("pearson needs at least 3 pairs, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance")]
    ZeroVariance,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Counts with precision, recall and F1 derived from them (0/0 is 0).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementScore {
    pub element: Element,
    #[serde(flatten)]
    pub score: Prf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenF1Report {
    pub per_element: Vec<ElementScore>,
}

impl TokenF1Report {
    pub fn get(&self, element: Element) -> Option<&Prf> {
        self.per_element.iter().find(|e| e.element == element).map(|e| &e.score)
    }

    /// Pools counts over all scored elements.
    pub fn micro(&self) -> Prf {
        let (tp, fp, fn_) = self.per_element.iter().fold((0, 0, 0), |(a, b, c), e| {
            (a + e.score.tp, b + e.score.fp, c + e.score.fn_)
        });
        Prf::from_counts(tp, fp, fn_)
    }
}

/// Micro-aggregated token F1 over aligned sentence pairs.
pub fn token_f1<G, P>(gold: &[G], pred: &[P], elements: &[Element]) -> Result<TokenF1Report, EvalError>
where
    G: AsRef<[Tag]>,
    P: AsRef<[Tag]>,
{
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut counts = vec![(0u64, 0u64, 0u64); elements.len()];
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        if g.len() != p.len() {
            return Err(EvalError::LengthMismatch {
                gold: g.len(),
                pred: p.len(),
            });
        }
        for (gt, pt) in g.iter().zip(p) {
            for (k, &el) in elements.iter().enumerate() {
                match (gt.element() == Some(el), pt.element() == Some(el)) {
                    (true, true) => counts[k].0 += 1,
                    (false, true) => counts[k].1 += 1,
                    (true, false) => counts[k].2 += 1,
                    (false, false) => {}
                }
            }
        }
    }
    Ok(TokenF1Report {
        per_element: elements
            .iter()
            .zip(counts)
            .map(|(&element, (tp, fp, fn_))| ElementScore {
                element,
                score: Prf::from_counts(tp, fp, fn_),
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: Polarity,
    #[serde(flatten)]
    pub score: Prf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroF1Report {
    pub per_class: Vec<ClassScore>,
    pub macro_f1: f64,
    /// Gold items dropped because they carry the conflict label.
    pub discarded_conflict: usize,
}

impl MacroF1Report {
    pub fn get(&self, class: Polarity) -> Option<&Prf> {
        self.per_class.iter().find(|c| c.class == class).map(|c| &c.score)
    }
}

/// Macro F1 over positive/neutral/negative. Pairs whose gold label is
/// conflict are dropped; a conflict prediction counts as wrong for every
/// class.
pub fn macro_f1(gold: &[Polarity], pred: &[Polarity]) -> Result<MacroF1Report, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut counts = [(0u64, 0u64, 0u64); 3];
    let mut discarded = 0;
    for (&g, &p) in gold.iter().zip(pred) {
        let Some(gi) = g.class_index() else {
            discarded += 1;
            continue;
        };
        match p.class_index() {
            Some(pi) if pi == gi => counts[gi].0 += 1,
            Some(pi) => {
                counts[pi].1 += 1;
                counts[gi].2 += 1;
            }
            None => counts[gi].2 += 1,
        }
    }
    let per_class: Vec<ClassScore> = Polarity::CLASSES
        .iter()
        .zip(counts)
        .map(|(&class, (tp, fp, fn_))| ClassScore {
            class,
            score: Prf::from_counts(tp, fp, fn_),
        })
        .collect();
    let macro_f1 = per_class.iter().map(|c| c.score.f1).sum::<f64>() / 3.0;
    Ok(MacroF1Report {
        per_class,
        macro_f1,
        discarded_conflict: discarded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator), 0 for one run.
    pub std: f64,
}

impl RunAggregate {
    /// `mean (std)` scaled by 100 with one decimal.
    pub fn percent_cell(&self) -> String {
        format!("{:.1} ({:.1})", self.mean * 100.0, self.std * 100.0)
    }
}

pub fn aggregate_runs(values: &[f64]) -> Result<RunAggregate, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = values.len();
    let std = if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 };
    Ok(RunAggregate { n, mean, std })
}

/// Product-moment correlation with a two-sided p-value from the t
/// distribution with n - 2 degrees of freedom.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch {
            gold: xs.len(),
            pred: ys.len(),
        });
    }
    let n = xs.len();
    if n < 3 {
        return Err(EvalError::TooFewPoints(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok((r, p))
}

/// Scores `pred` against `gold` and `gold` against `pred`. The first
/// report's precision equals the second's recall and vice versa.
pub fn significance_swap<G, P>(
    gold: &[G],
    pred: &[P],
    elements: &[Element],
) -> Result<(TokenF1Report, TokenF1Report), EvalError>
where
    G: AsRef<[Tag]>,
    P: AsRef<[Tag]>,
{
    Ok((token_f1(gold, pred, elements)?, token_f1(pred, gold, elements)?))
}

/// Plain-text table with left-aligned first column and right-aligned
/// value columns.
pub fn format_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (k, cell) in row.iter().enumerate().take(cols) {
            widths[k] = widths[k].max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .take(cols)
            .map(|(k, c)| {
                if k == 0 {
                    format!("{c:<w$}", w = widths[k])
                } else {
                    format!("{c:>w$}", w = widths[k])
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}
