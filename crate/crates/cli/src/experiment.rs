//! Experiment matrix: spec files, cell enumeration, cached runs and the
//! run registry.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use finesent_core::augment::AugmentMode;
use finesent_core::corpus::{parse_corpus, Corpus, Polarity, Span};
use finesent_core::eval::{macro_f1, token_f1};
use finesent_core::lexicon::{load_lexicon, LexiconFormat};
use finesent_core::models::{
    ensemble_union, expression_only, target_examples, train_classifier, train_tagger, EmbeddingProvider,
    ExpressionSource, PoolingStrategy, ProviderSpec, SavedModel, TaggerModel, TrainConfig,
};
use finesent_core::tagscheme::{encode, sequence_spans, Element, TagScheme, TagSequence};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{read_file, write_file, CliError};
use crate::report::{build_report, Report};

/// Environment variable naming the root for relative dataset paths.
pub const DATA_DIR_VAR: &str = "FGS_DATA_DIR";

/// Bumped when cell semantics change, so old cached runs are not reused.
const CELL_FORMAT: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Extract,
    Classify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
}

/// Where augmentation expressions come from in a cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceSpec {
    Gold,
    Lexicon {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<String>,
    },
    /// A saved tagger whose predicted expressions are used.
    Model { path: PathBuf },
    /// Token-wise union of several taggers' predicted expressions.
    Ensemble { paths: Vec<PathBuf> },
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

impl SourceSpec {
    pub fn label(&self) -> String {
        match self {
            SourceSpec::Gold => "gold".into(),
            SourceSpec::Lexicon { path, .. } => format!("lexicon:{}", stem(path)),
            SourceSpec::Model { path } => format!("model:{}", stem(path)),
            SourceSpec::Ensemble { paths } => {
                let names: Vec<String> = paths.iter().map(|p| stem(p)).collect();
                format!("ensemble:{}", names.join("+"))
            }
        }
    }

    fn paths(&self) -> Vec<&Path> {
        match self {
            SourceSpec::Gold => Vec::new(),
            SourceSpec::Lexicon { path, .. } | SourceSpec::Model { path } => vec![path],
            SourceSpec::Ensemble { paths } => paths.iter().map(PathBuf::as_path).collect(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        match self {
            SourceSpec::Gold => {}
            SourceSpec::Lexicon { path, .. } | SourceSpec::Model { path } => *path = base.join(&*path),
            SourceSpec::Ensemble { paths } => {
                for p in paths {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

fn default_modes() -> Vec<AugmentMode> {
    vec![AugmentMode::Original]
}

fn default_sources() -> Vec<SourceSpec> {
    vec![SourceSpec::Gold]
}

fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}

fn default_provider() -> ProviderSpec {
    ProviderSpec::Hashed {
        dim: 64,
        seed: 1,
        window: 2,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: String,
    pub task: Task,
    pub data: DataPaths,
    /// Extraction schemes to sweep.
    #[serde(default)]
    pub schemes: Vec<TagScheme>,
    /// Classification pooling strategies to sweep.
    #[serde(default)]
    pub strategies: Vec<PoolingStrategy>,
    #[serde(default = "default_modes")]
    pub augment_modes: Vec<AugmentMode>,
    #[serde(default = "default_sources")]
    pub expression_sources: Vec<SourceSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub config: TrainConfig,
    #[serde(default = "default_provider")]
    pub provider: ProviderSpec,
    pub output_dir: PathBuf,
}

impl ExperimentSpec {
    /// Reads a spec file and resolves relative paths. Dataset, lexicon,
    /// model and embedding paths are taken relative to `$FGS_DATA_DIR`
    /// when it is set, else to the experiment file's directory; the output
    /// directory is always relative to the experiment file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = read_file(path)?;
        let mut spec: ExperimentSpec = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let spec_dir = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let data_dir = std::env::var_os(DATA_DIR_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| spec_dir.clone());
        spec.resolve(&data_dir, &spec_dir);
        if spec.name.is_empty() {
            spec.name = stem(path);
        }
        Ok(spec)
    }

    pub fn resolve(&mut self, data_dir: &Path, spec_dir: &Path) {
        for p in [&mut self.data.train, &mut self.data.dev, &mut self.data.test] {
            *p = data_dir.join(&*p);
        }
        for s in &mut self.expression_sources {
            s.resolve(data_dir);
        }
        if let ProviderSpec::File { path } = &mut self.provider {
            *path = data_dir.join(&*path);
        }
        self.output_dir = spec_dir.join(&self.output_dir);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        let mut paths: Vec<&Path> = vec![&self.data.train, &self.data.dev, &self.data.test];
        for s in &self.expression_sources {
            paths.extend(s.paths());
        }
        if let ProviderSpec::File { path } = &self.provider {
            paths.push(path);
        }
        for p in paths {
            if !p.exists() {
                return bad(format!("path does not exist: {}", p.display()));
            }
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.augment_modes.is_empty() || self.expression_sources.is_empty() {
            return bad("augment_modes and expression_sources must not be empty".into());
        }
        match self.task {
            Task::Extract if self.schemes.is_empty() => return bad("an extract spec needs schemes".into()),
            Task::Classify if self.strategies.is_empty() => {
                return bad("a classify spec needs strategies".into())
            }
            _ => {}
        }
        if self
            .expression_sources
            .iter()
            .any(|s| matches!(s, SourceSpec::Ensemble { paths } if paths.is_empty()))
        {
            return bad("an ensemble source needs at least one model".into());
        }
        self.config.validate()?;
        Ok(())
    }

    /// Cells in sweep order: setting, source, mode, seed.
    pub fn cells(&self) -> Vec<Cell> {
        let settings: Vec<Setting> = match self.task {
            Task::Extract => self.schemes.iter().map(|&s| Setting::Scheme(s)).collect(),
            Task::Classify => self.strategies.iter().map(|&s| Setting::Strategy(s)).collect(),
        };
        let mut out = Vec::new();
        for setting in &settings {
            for source in &self.expression_sources {
                for &mode in &self.augment_modes {
                    for &seed in &self.seeds {
                        out.push(Cell {
                            setting: *setting,
                            mode,
                            source: source.clone(),
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

/// What is being swept besides mode, source and seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Scheme(TagScheme),
    Strategy(PoolingStrategy),
}

impl Setting {
    pub fn label(&self) -> String {
        match self {
            Setting::Scheme(s) => s.to_string(),
            Setting::Strategy(s) => s.as_str().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub setting: Setting,
    pub mode: AugmentMode,
    pub source: SourceSpec,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell_hash: String,
    pub experiment: String,
    pub cell: Cell,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    /// Relative to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    pub wall_clock_secs: f64,
    pub timestamp: String,
}

/// Serializes a JSON value with object keys sorted at every level.
pub fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let parts: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", parts.join(","))
        }
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", parts.join(","))
        }
        other => other.to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&read_file(path)?))
}

/// Content hash of a spec, independent of field order and of where the
/// files live.
pub fn spec_hash(spec: &ExperimentSpec, digests: &Digests) -> Result<String, CliError> {
    let mut v = serde_json::to_value(spec).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Value::Object(map) = &mut v {
        map.remove("output_dir");
        map.remove("name");
        map.insert("data".into(), serde_json::to_value(&digests.data).expect("plain map"));
        let sources: Vec<Value> = spec.expression_sources.iter().map(|s| digests.source_key(s)).collect();
        map.insert("expression_sources".into(), Value::Array(sources));
        map.insert("provider".into(), digests.provider_key(&spec.provider));
    }
    Ok(sha256_hex(canonical_json(&v).as_bytes()))
}

/// File digests that stand in for paths inside hashes.
#[derive(Clone, Debug, Default)]
pub struct Digests {
    pub data: BTreeMap<String, String>,
    pub files: HashMap<PathBuf, String>,
}

impl Digests {
    pub fn compute(spec: &ExperimentSpec) -> Result<Self, CliError> {
        let mut d = Digests::default();
        for (k, p) in [("train", &spec.data.train), ("dev", &spec.data.dev), ("test", &spec.data.test)] {
            d.data.insert(k.into(), file_digest(p)?);
        }
        let mut extra: Vec<&Path> = spec.expression_sources.iter().flat_map(|s| s.paths()).collect();
        if let ProviderSpec::File { path } = &spec.provider {
            extra.push(path);
        }
        for p in extra {
            let digest = file_digest(p)?;
            d.files.insert(p.to_path_buf(), digest);
            let side = finesent_core::models::persist::sidecar_path(p);
            if side.exists() {
                d.files.insert(side.clone(), file_digest(&side)?);
            }
        }
        Ok(d)
    }

    fn digest_of(&self, p: &Path) -> Value {
        let side = finesent_core::models::persist::sidecar_path(p);
        serde_json::json!({
            "file": self.files.get(p),
            "sidecar": self.files.get(&side),
        })
    }

    fn source_key(&self, s: &SourceSpec) -> Value {
        match s {
            SourceSpec::Gold => serde_json::json!({"kind": "gold"}),
            SourceSpec::Lexicon { path, format } => {
                serde_json::json!({"kind": "lexicon", "format": format, "digest": self.digest_of(path)})
            }
            SourceSpec::Model { path } => serde_json::json!({"kind": "model", "digest": self.digest_of(path)}),
            SourceSpec::Ensemble { paths } => {
                let d: Vec<Value> = paths.iter().map(|p| self.digest_of(p)).collect();
                serde_json::json!({"kind": "ensemble", "digests": d})
            }
        }
    }

    fn provider_key(&self, p: &ProviderSpec) -> Value {
        match p {
            ProviderSpec::File { path } => serde_json::json!({"kind": "file", "digest": self.digest_of(path)}),
            other => serde_json::to_value(other).expect("plain enum"),
        }
    }
}

pub fn cell_hash(spec: &ExperimentSpec, digests: &Digests, cell: &Cell) -> String {
    let v = serde_json::json!({
        "format": CELL_FORMAT,
        "task": spec.task,
        "setting": cell.setting,
        "mode": cell.mode,
        "source": digests.source_key(&cell.source),
        "seed": cell.seed,
        "config": spec.config.clone().with_seed(cell.seed),
        "provider": digests.provider_key(&spec.provider),
        "data": digests.data,
    });
    sha256_hex(canonical_json(&v).as_bytes())
}

/// Read-only inputs shared by every cell.
pub struct Prepared {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub provider: EmbeddingProvider,
    sources: Vec<(SourceSpec, ExpressionSource)>,
}

impl Prepared {
    pub fn source(&self, spec: &SourceSpec) -> &ExpressionSource {
        &self
            .sources
            .iter()
            .find(|(s, _)| s == spec)
            .expect("every cell source is prepared")
            .1
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    parse_corpus(&read_file(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn load_tagger(path: &Path) -> Result<TaggerModel, CliError> {
    match SavedModel::load(path).map_err(|e| CliError::from(e).context(path.display()))? {
        SavedModel::Tagger(t) => Ok(t),
        SavedModel::Classifier(_) => Err(CliError::Validation(format!(
            "{} is a classifier; an expression source needs a tagger",
            path.display()
        ))),
    }
}

/// Predicted expression spans of `model` for every sentence.
pub fn predicted_expressions(
    model: &TaggerModel,
    corpora: &[&Corpus],
) -> Result<HashMap<String, TagSequence>, CliError> {
    if !model.scheme.includes(Element::Expression) {
        return Err(CliError::Validation(format!(
            "an expression source needs a scheme with expressions, got {}",
            model.scheme
        )));
    }
    if model.mode.marks_expressions() {
        return Err(CliError::Validation(
            "an expression source model must not itself read expression brackets".into(),
        ));
    }
    let provider = model.provider.build()?;
    let mut out = HashMap::new();
    for c in corpora {
        for s in &c.sentences {
            let tags = model.predict(s, &provider, &ExpressionSource::Gold)?;
            out.insert(s.sent_id.clone(), expression_only(&tags));
        }
    }
    Ok(out)
}

fn expression_spans(seq: &TagSequence) -> Vec<Span> {
    sequence_spans(seq).into_iter().map(|ls| ls.span).collect()
}

fn build_source(spec: &SourceSpec, corpora: &[&Corpus]) -> Result<ExpressionSource, CliError> {
    Ok(match spec {
        SourceSpec::Gold => ExpressionSource::Gold,
        SourceSpec::Lexicon { path, format } => {
            let format = match format {
                Some(f) => f.parse::<LexiconFormat>().map_err(CliError::Validation)?,
                None if path.extension().is_some_and(|e| e == "tsv") => LexiconFormat::Tsv,
                None => LexiconFormat::Plain,
            };
            ExpressionSource::Lexicon(Arc::new(load_lexicon(path, format)?))
        }
        SourceSpec::Model { path } => {
            let preds = predicted_expressions(&load_tagger(path)?, corpora)?;
            let map = preds.iter().map(|(k, v)| (k.clone(), expression_spans(v))).collect();
            ExpressionSource::Fixed(Arc::new(map))
        }
        SourceSpec::Ensemble { paths } => {
            let members = paths
                .iter()
                .map(|p| predicted_expressions(&load_tagger(p)?, corpora))
                .collect::<Result<Vec<_>, _>>()?;
            let mut map = HashMap::new();
            for c in corpora {
                for s in &c.sentences {
                    let seqs: Vec<&TagSequence> = members.iter().map(|m| &m[&s.sent_id]).collect();
                    let union = ensemble_union(&seqs.iter().map(|s| s.as_slice()).collect::<Vec<_>>())?;
                    map.insert(s.sent_id.clone(), expression_spans(&union));
                }
            }
            ExpressionSource::Fixed(Arc::new(map))
        }
    })
}

pub fn prepare(spec: &ExperimentSpec) -> Result<Prepared, CliError> {
    let train = load_corpus(&spec.data.train)?;
    let dev = load_corpus(&spec.data.dev)?;
    let test = load_corpus(&spec.data.test)?;
    let mut seen = HashSet::new();
    for c in [&train, &dev, &test] {
        for s in &c.sentences {
            if !seen.insert(s.sent_id.as_str()) {
                return Err(CliError::Validation(format!(
                    "sent_id `{}` appears in more than one split",
                    s.sent_id
                )));
            }
        }
    }
    let provider = spec.provider.build()?;
    let corpora = [&train, &dev, &test];
    let mut sources = Vec::new();
    for s in &spec.expression_sources {
        if !sources.iter().any(|(k, _)| k == s) {
            sources.push((s.clone(), build_source(s, &corpora)?));
        }
    }
    Ok(Prepared {
        train,
        dev,
        test,
        provider,
        sources,
    })
}

/// Trains and scores one cell, returning its metrics and model.
pub fn run_cell(
    task: Task,
    prepared: &Prepared,
    config: &TrainConfig,
    cell: &Cell,
) -> Result<(BTreeMap<String, f64>, SavedModel), CliError> {
    let config = config.clone().with_seed(cell.seed);
    let source = prepared.source(&cell.source);
    let p = &prepared.provider;
    let mut metrics = BTreeMap::new();
    match (task, cell.setting) {
        (Task::Extract, Setting::Scheme(scheme)) => {
            let model = train_tagger(&prepared.train, Some(&prepared.dev), scheme, cell.mode, p, source, &config)?;
            let mut gold = Vec::new();
            let mut pred = Vec::new();
            for s in &prepared.test.sentences {
                gold.push(encode(s, scheme).map_err(|e| CliError::Validation(e.to_string()))?);
                pred.push(model.predict(s, p, source)?);
            }
            let report = token_f1(&gold, &pred, scheme.elements()).map_err(|e| CliError::Runtime(e.to_string()))?;
            for es in &report.per_element {
                let name = es.element.as_str();
                metrics.insert(format!("{name}_f1"), es.score.f1);
                metrics.insert(format!("{name}_precision"), es.score.precision);
                metrics.insert(format!("{name}_recall"), es.score.recall);
            }
            metrics.insert("micro_f1".into(), report.micro().f1);
            if let Some(best) = model.summary.dev_scores.get(model.summary.selected_epoch.wrapping_sub(1)) {
                metrics.insert("dev_f1".into(), *best);
            }
            Ok((metrics, SavedModel::Tagger(model)))
        }
        (Task::Classify, Setting::Strategy(strategy)) => {
            let train = target_examples(&prepared.train);
            let dev = target_examples(&prepared.dev);
            let test = target_examples(&prepared.test);
            let model = train_classifier(&train, Some(&dev), strategy, cell.mode, p, source, &config)?;
            let mut gold: Vec<Polarity> = Vec::with_capacity(test.len());
            let mut pred = Vec::with_capacity(test.len());
            for ex in &test {
                gold.push(ex.gold);
                pred.push(model.predict(ex.sentence, &ex.target, p, source)?.polarity);
            }
            let report = macro_f1(&gold, &pred).map_err(|e| CliError::Runtime(e.to_string()))?;
            metrics.insert("macro_f1".into(), report.macro_f1);
            for cs in &report.per_class {
                metrics.insert(format!("{}_f1", cs.class.as_str()), cs.score.f1);
            }
            if let Some(best) = model.summary.dev_scores.get(model.summary.selected_epoch.wrapping_sub(1)) {
                metrics.insert("dev_macro_f1".into(), *best);
            }
            Ok((metrics, SavedModel::Classifier(model)))
        }
        (task, setting) => Err(CliError::Validation(format!(
            "setting {} does not belong to a {task:?} experiment",
            setting.label()
        ))),
    }
}

/// The headline metric reported for a task.
pub fn primary_metric(task: Task) -> &'static str {
    match task {
        Task::Extract => "targ_f1",
        Task::Classify => "macro_f1",
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SweepOptions {
    pub jobs: usize,
    pub force: bool,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub spec_hash: String,
    /// One record per cell, in sweep order.
    pub records: Vec<RunRecord>,
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub report: Report,
}

pub const RUNS_DIR: &str = "runs";
pub const MODELS_DIR: &str = "models";
pub const REGISTRY_FILE: &str = "registry.jsonl";

fn cached_record(path: &Path) -> Option<RunRecord> {
    let bytes = fs::read(path).ok()?;
    let r: RunRecord = serde_json::from_slice(&bytes).ok()?;
    (r.status == RunStatus::Ok).then_some(r)
}

/// Appends one JSON line per executed cell.
struct Registry {
    file: Mutex<fs::File>,
}

impl Registry {
    fn open(path: &Path) -> Result<Self, CliError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
        Ok(Registry { file: Mutex::new(file) })
    }

    fn append(&self, record: &RunRecord) -> Result<(), CliError> {
        let mut line = serde_json::to_string(record).map_err(|e| CliError::Runtime(e.to_string()))?;
        line.push('\n');
        let mut f = self.file.lock().expect("registry lock");
        f.write_all(line.as_bytes())
            .map_err(|e| CliError::Runtime(format!("cannot append to registry: {e}")))
    }
}

fn execute(
    spec: &ExperimentSpec,
    prepared: &Prepared,
    hash: &str,
    spec_hash: &str,
    cell: &Cell,
    registry: &Registry,
) -> Result<RunRecord, CliError> {
    let started = Instant::now();
    let result = run_cell(spec.task, prepared, &spec.config, cell);
    let rel_model = PathBuf::from(MODELS_DIR).join(format!("{hash}.bin"));
    let (status, error, metrics, model_path) = match result {
        Ok((metrics, model)) => {
            model
                .save(&spec.output_dir.join(&rel_model))
                .map_err(|e| CliError::Runtime(format!("cannot save model: {e}")))?;
            (RunStatus::Ok, None, metrics, Some(rel_model))
        }
        Err(e) => {
            log::warn!("cell {} ({}) failed: {e}", &hash[..12], cell.setting.label());
            (RunStatus::Failed, Some(e.to_string()), BTreeMap::new(), None)
        }
    };
    let record = RunRecord {
        cell_hash: hash.to_string(),
        experiment: spec_hash.to_string(),
        cell: cell.clone(),
        seed: cell.seed,
        status,
        error,
        metrics,
        model_path,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        timestamp: chrono::Utc::now().to_rfc3339(),
    };
    let json = serde_json::to_vec_pretty(&record).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&spec.output_dir.join(RUNS_DIR).join(format!("{hash}.json")), &json)?;
    registry.append(&record)?;
    Ok(record)
}

/// Runs every cell not already completed (all of them with `force`),
/// then writes `report.txt`, `report.json` and `matrix.csv`.
pub fn run_experiment(spec: &ExperimentSpec, opts: SweepOptions) -> Result<SweepOutcome, CliError> {
    spec.validate()?;
    let digests = Digests::compute(spec)?;
    let spec_hash = spec_hash(spec, &digests)?;
    let cells = spec.cells();
    let hashes: Vec<String> = cells.iter().map(|c| cell_hash(spec, &digests, c)).collect();
    let runs_dir = spec.output_dir.join(RUNS_DIR);
    fs::create_dir_all(&runs_dir)
        .and_then(|_| fs::create_dir_all(spec.output_dir.join(MODELS_DIR)))
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", spec.output_dir.display())))?;

    let cached: Vec<Option<RunRecord>> = hashes
        .iter()
        .map(|h| if opts.force { None } else { cached_record(&runs_dir.join(format!("{h}.json"))) })
        .collect();
    let pending: Vec<usize> = (0..cells.len()).filter(|&i| cached[i].is_none()).collect();
    log::info!(
        "experiment {}: {} cells, {} cached, {} to run",
        spec.name,
        cells.len(),
        cells.len() - pending.len(),
        pending.len()
    );

    let mut records: Vec<Option<RunRecord>> = cached;
    if !pending.is_empty() {
        let prepared = prepare(spec)?;
        let registry = Registry::open(&spec.output_dir.join(REGISTRY_FILE))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs.max(1))
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let fresh: Vec<(usize, Result<RunRecord, CliError>)> = pool.install(|| {
            pending
                .par_iter()
                .map(|&i| (i, execute(spec, &prepared, &hashes[i], &spec_hash, &cells[i], &registry)))
                .collect()
        });
        for (i, r) in fresh {
            records[i] = Some(r?);
        }
    }
    let records: Vec<RunRecord> = records.into_iter().map(|r| r.expect("every cell resolved")).collect();
    let failed = records.iter().filter(|r| r.status == RunStatus::Failed).count();
    let report = build_report(spec, &spec_hash, &records)?;
    write_file(&spec.output_dir.join("report.txt"), report.to_text().as_bytes())?;
    let json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&spec.output_dir.join("report.json"), &json)?;
    write_file(&spec.output_dir.join("matrix.csv"), report.to_csv().as_bytes())?;
    Ok(SweepOutcome {
        spec_hash,
        executed: pending.len(),
        skipped: cells.len() - pending.len(),
        failed,
        records,
        report,
    })
}
