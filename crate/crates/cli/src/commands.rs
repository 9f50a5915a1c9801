//! Subcommand bodies. Each returns the text destined for stdout.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use finesent_core::corpus::{
    compute_overlap, compute_stats, from_conll, split_corpus, write_conll_sentence, ElementStats,
    OverlapReport, Polarity, PolarityMap, Span, StatsReport,
};
use finesent_core::eval::{format_table, macro_f1, token_f1, MacroF1Report, TokenF1Report, MACRO_F1_NOTE, TOKEN_F1_NOTE};
use finesent_core::lexicon::{load_lexicon, LexiconFormat};
use finesent_core::models::{EmbeddingProvider, ExpressionSource, FileEmbeddings, SavedModel};
use finesent_core::tagscheme::{encode, TagScheme};
use serde::{Deserialize, Serialize};

use crate::adapters::{convert, Adapter, ConvertOptions};
use crate::error::{read_file, write_file, CliError};
use crate::experiment::load_corpus;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

pub struct ConvertArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub adapter: Adapter,
    pub scheme: Option<TagScheme>,
    pub polarity_map: Option<PathBuf>,
    pub name: Option<String>,
    /// Also write train/dev/test files split with this seed.
    pub split_seed: Option<u64>,
}

fn split_path(output: &Path, part: &str) -> PathBuf {
    let stem = output.file_stem().unwrap_or_default().to_string_lossy();
    output.with_file_name(format!("{stem}.{part}.json"))
}

pub fn cmd_convert(args: &ConvertArgs) -> Result<String, CliError> {
    let name = args.name.clone().unwrap_or_else(|| {
        args.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into())
    });
    let mut opts = ConvertOptions::new(args.adapter, name);
    if let Some(scheme) = args.scheme {
        opts.scheme = scheme;
    }
    if let Some(map) = &args.polarity_map {
        let text = String::from_utf8(read_file(map)?)
            .map_err(|_| CliError::Validation(format!("{} is not UTF-8", map.display())))?;
        opts.polarities = PolarityMap::parse_tsv(&text)?;
    }
    let input = read_file(&args.input)?;
    let corpus = convert(&input, &opts).map_err(|e| e.context(args.input.display()))?;
    let opinions: usize = corpus.sentences.iter().map(|s| s.opinions.len()).sum();
    let mut out = format!(
        "{}: {} sentences, {} opinions, 0 validation errors\n",
        corpus.name,
        corpus.len(),
        opinions
    );
    write_file(&args.output, corpus.to_json().as_bytes())?;
    out.push_str(&format!("wrote {}\n", args.output.display()));
    if let Some(seed) = args.split_seed {
        let (train, dev, test) = split_corpus(&corpus, seed)?;
        for (part, c) in [("train", train), ("dev", dev), ("test", test)] {
            let path = split_path(&args.output, part);
            write_file(&path, c.to_json().as_bytes())?;
            out.push_str(&format!("wrote {} ({} sentences)\n", path.display(), c.len()));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct StatsOutput {
    stats: Vec<StatsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    overlap: Option<OverlapReport>,
}

fn element_cells(e: &ElementStats) -> [String; 3] {
    [e.count.to_string(), format!("{:.1}", e.avg_length), e.max_length.to_string()]
}

pub fn cmd_stats(paths: &[PathBuf], format: OutputFormat) -> Result<String, CliError> {
    if paths.len() != 1 && paths.len() != 3 {
        return Err(CliError::Usage("stats takes one corpus or three (train dev test)".into()));
    }
    let corpora = paths.iter().map(|p| load_corpus(p)).collect::<Result<Vec<_>, _>>()?;
    let stats: Vec<StatsReport> = corpora.iter().map(compute_stats).collect();
    let overlap = (corpora.len() == 3).then(|| compute_overlap(&corpora[0], &corpora[1], &corpora[2]));
    if format == OutputFormat::Json {
        return Ok(to_json(&StatsOutput { stats, overlap }));
    }
    let header: Vec<String> = [
        "corpus", "split", "sents", "avg len", "holders", "avg", "max", "targets", "avg", "max", "exps", "avg",
        "max", "pos", "neu", "neg",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = stats
        .iter()
        .map(|r| {
            let mut row = vec![
                r.name.clone(),
                r.split.map(|s| format!("{s:?}").to_lowercase()).unwrap_or_default(),
                r.sentences.to_string(),
                format!("{:.1}", r.avg_sentence_length),
            ];
            row.extend(element_cells(&r.holders));
            row.extend(element_cells(&r.targets));
            row.extend(element_cells(&r.expressions));
            row.extend([
                r.polarity.positive.to_string(),
                r.polarity.neutral.to_string(),
                r.polarity.negative.to_string(),
            ]);
            row
        })
        .collect();
    let mut out = format_table(&header, &rows);
    if let Some(o) = overlap {
        out.push('\n');
        let header: Vec<String> = ["unique train", "unique dev", "unique test", "dev in train", "test in train"]
            .map(String::from)
            .to_vec();
        let row = [o.unique_train, o.unique_dev, o.unique_test, o.dev_in_train, o.test_in_train]
            .map(|v| format!("{v:.1}"))
            .to_vec();
        out.push_str(&format_table(&header, &[row]));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities {
    pub positive: f64,
    pub neutral: f64,
    pub negative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPrediction {
    pub sent_id: String,
    pub target: Vec<Span>,
    pub polarity: Polarity,
    pub probabilities: ClassProbabilities,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub model: String,
    pub predictions: Vec<TargetPrediction>,
}

pub struct PredictArgs {
    pub model: PathBuf,
    pub corpus: PathBuf,
    pub output: PathBuf,
    /// Embedding file replacing the model's own provider.
    pub embeddings: Option<PathBuf>,
    /// Lexicon used as the expression source instead of gold expressions.
    pub lexicon: Option<PathBuf>,
}

pub fn cmd_predict(args: &PredictArgs) -> Result<String, CliError> {
    let model = SavedModel::load(&args.model).map_err(|e| CliError::from(e).context(args.model.display()))?;
    let meta = model.meta();
    let provider = match &args.embeddings {
        Some(path) => {
            let f = FileEmbeddings::load(path).map_err(|e| CliError::from(e).context(path.display()))?;
            if f.dim != meta.dim {
                return Err(CliError::Validation(format!(
                    "embedding dimension mismatch: model {} expects d={}, embeddings {} have d={}",
                    args.model.display(),
                    meta.dim,
                    path.display(),
                    f.dim
                )));
            }
            EmbeddingProvider::File(Arc::new(f))
        }
        None => meta.provider.build()?,
    };
    let source = match &args.lexicon {
        Some(path) => {
            let format = if path.extension().is_some_and(|e| e == "tsv") {
                LexiconFormat::Tsv
            } else {
                LexiconFormat::Plain
            };
            ExpressionSource::Lexicon(Arc::new(load_lexicon(path, format)?))
        }
        None => ExpressionSource::Gold,
    };
    let corpus = load_corpus(&args.corpus)?;
    let diag = |e: finesent_core::models::ModelError, sent_id: &str| {
        CliError::from(e).context(format!(
            "model {} on corpus {} (sentence `{sent_id}`)",
            args.model.display(),
            args.corpus.display()
        ))
    };
    let (text, count) = match &model {
        SavedModel::Tagger(t) => {
            let mut out = String::new();
            for s in &corpus.sentences {
                let tags = t.predict(s, &provider, &source).map_err(|e| diag(e, &s.sent_id))?;
                write_conll_sentence(&mut out, &s.sent_id, &s.tokens, tags.as_slice())?;
            }
            (out, corpus.len())
        }
        SavedModel::Classifier(c) => {
            let mut predictions = Vec::new();
            for s in &corpus.sentences {
                let targets: BTreeSet<&Vec<Span>> = s.opinions.iter().map(|op| &op.target).collect();
                for target in targets {
                    let p = c.predict(s, target, &provider, &source).map_err(|e| diag(e, &s.sent_id))?;
                    predictions.push(TargetPrediction {
                        sent_id: s.sent_id.clone(),
                        target: target.clone(),
                        polarity: p.polarity,
                        probabilities: ClassProbabilities {
                            positive: p.probabilities[0],
                            neutral: p.probabilities[1],
                            negative: p.probabilities[2],
                        },
                    });
                }
            }
            let n = predictions.len();
            let file = PredictionFile {
                model: args.model.display().to_string(),
                predictions,
            };
            (to_json(&file), n)
        }
    };
    write_file(&args.output, text.as_bytes())?;
    let unit = if matches!(model, SavedModel::Tagger(_)) { "sentences" } else { "targets" };
    Ok(format!("wrote {} ({count} {unit})\n", args.output.display()))
}

#[derive(Serialize)]
#[serde(untagged)]
enum EvalOutput {
    Extraction { note: &'static str, scheme: String, report: TokenF1Report },
    Classification { note: &'static str, report: MacroF1Report },
}

fn looks_like_json(bytes: &[u8]) -> bool {
    bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{')
}

/// Scores CoNLL tag predictions or JSON polarity predictions against a
/// gold corpus.
pub fn cmd_eval(gold: &Path, pred: &Path, scheme: TagScheme, format: OutputFormat) -> Result<String, CliError> {
    let corpus = load_corpus(gold)?;
    let bytes = read_file(pred)?;
    let output = if looks_like_json(&bytes) {
        let file: PredictionFile = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Validation(format!("{}: {e}", pred.display())))?;
        let index: HashMap<(&str, &[Span]), Polarity> = file
            .predictions
            .iter()
            .map(|p| ((p.sent_id.as_str(), p.target.as_slice()), p.polarity))
            .collect();
        let mut g = Vec::new();
        let mut p = Vec::new();
        for s in &corpus.sentences {
            for op in &s.opinions {
                let found = index.get(&(s.sent_id.as_str(), op.target.as_slice())).ok_or_else(|| {
                    CliError::Validation(format!(
                        "no prediction for target {:?} of sentence `{}`",
                        op.target, s.sent_id
                    ))
                })?;
                g.push(op.polarity);
                p.push(*found);
            }
        }
        let report = macro_f1(&g, &p).map_err(|e| CliError::Validation(e.to_string()))?;
        EvalOutput::Classification {
            note: MACRO_F1_NOTE,
            report,
        }
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::Validation(format!("{} is not UTF-8", pred.display())))?;
        let predicted = from_conll(&text, scheme).map_err(|e| CliError::from(e).context(pred.display()))?;
        let by_id: HashMap<&str, &finesent_core::corpus::ConllSentence> =
            predicted.iter().map(|s| (s.sent_id.as_str(), s)).collect();
        let mut g = Vec::new();
        let mut p = Vec::new();
        for s in &corpus.sentences {
            let ps = by_id.get(s.sent_id.as_str()).ok_or_else(|| {
                CliError::Validation(format!("no predicted tags for sentence `{}`", s.sent_id))
            })?;
            if ps.tags.len() != s.tokens.len() {
                return Err(CliError::Validation(format!(
                    "sentence `{}`: {} gold tokens, {} predicted tags",
                    s.sent_id,
                    s.tokens.len(),
                    ps.tags.len()
                )));
            }
            g.push(encode(s, scheme).map_err(|e| CliError::Validation(e.to_string()))?.into_vec());
            p.push(ps.tags.clone());
        }
        let report = token_f1(&g, &p, scheme.elements()).map_err(|e| CliError::Validation(e.to_string()))?;
        EvalOutput::Extraction {
            note: TOKEN_F1_NOTE,
            scheme: scheme.to_string(),
            report,
        }
    };
    if format == OutputFormat::Json {
        return Ok(to_json(&output));
    }
    let header: Vec<String> = ["label", "tp", "fp", "fn", "precision", "recall", "f1"].map(String::from).to_vec();
    let row = |name: &str, s: &finesent_core::eval::Prf| {
        vec![
            name.to_string(),
            s.tp.to_string(),
            s.fp.to_string(),
            s.fn_.to_string(),
            format!("{:.1}", s.precision * 100.0),
            format!("{:.1}", s.recall * 100.0),
            format!("{:.1}", s.f1 * 100.0),
        ]
    };
    Ok(match output {
        EvalOutput::Extraction { note, scheme, report } => {
            let mut rows: Vec<Vec<String>> =
                report.per_element.iter().map(|e| row(e.element.as_str(), &e.score)).collect();
            rows.push(row("micro", &report.micro()));
            format!("scheme: {scheme}\nnote: {note}\n\n{}", format_table(&header, &rows))
        }
        EvalOutput::Classification { note, report } => {
            let rows: Vec<Vec<String>> = report.per_class.iter().map(|c| row(c.class.as_str(), &c.score)).collect();
            format!(
                "note: {note}\n\n{}\nmacro F1: {:.1}\nconflict gold items dropped: {}\n",
                format_table(&header, &rows),
                report.macro_f1 * 100.0,
                report.discarded_conflict
            )
        }
    })
}
