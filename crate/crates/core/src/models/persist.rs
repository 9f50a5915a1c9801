//! Model files: a versioned little-endian binary dump of the label map and
//! weight matrices, plus a `<file>.meta.json` sidecar describing how the
//! model was trained.
//!
//! ```text
//! "FGSM" | u32 version = 1 | u8 kind (1 tagger, 2 classifier)
//! u32 label count | per label: u32 len | UTF-8 bytes
//! two matrices:   u32 rows | u32 cols | rows*cols f64 (row-major)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::classifier::ClassifierModel;
use super::embedding::ProviderSpec;
use super::pooling::PoolingStrategy;
use super::tagger::{TaggerModel, TrainingSummary};
use super::viterbi::TransitionMask;
use super::{ModelError, TrainConfig};
use crate::augment::AugmentMode;
use crate::corpus::Polarity;
use crate::tagscheme::{label_inventory, Tag, TagScheme};

const MAGIC: &[u8; 4] = b"FGSM";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tagger,
    Classifier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format_version: u32,
    pub kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scheme: Option<TagScheme>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub strategy: Option<PoolingStrategy>,
    pub mode: AugmentMode,
    pub provider: ProviderSpec,
    pub dim: usize,
    pub config: TrainConfig,
    pub seed: u64,
    pub summary: TrainingSummary,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Tagger(TaggerModel),
    Classifier(ClassifierModel),
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ModelError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().unwrap_or_default().to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_matrix(out: &mut Vec<u8>, m: &Array2<f64>) {
    put_u32(out, m.nrows());
    put_u32(out, m.ncols());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn get_u32(r: &mut impl Read) -> Result<usize, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_matrix(r: &mut impl Read) -> Result<Array2<f64>, ModelError> {
    let rows = get_u32(r)?;
    let cols = get_u32(r)?;
    let mut buf = vec![0u8; rows * cols * 8];
    r.read_exact(&mut buf)?;
    let vals = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Array2::from_shape_vec((rows, cols), vals).map_err(|e| ModelError::Format(e.to_string()))
}

impl SavedModel {
    pub fn meta(&self) -> ModelMeta {
        match self {
            SavedModel::Tagger(m) => ModelMeta {
                format_version: VERSION,
                kind: ModelKind::Tagger,
                scheme: Some(m.scheme),
                strategy: None,
                mode: m.mode,
                provider: m.provider.clone(),
                dim: m.dim(),
                config: m.config.clone(),
                seed: m.config.seed,
                summary: m.summary.clone(),
            },
            SavedModel::Classifier(m) => ModelMeta {
                format_version: VERSION,
                kind: ModelKind::Classifier,
                scheme: None,
                strategy: Some(m.strategy),
                mode: m.mode,
                provider: m.provider.clone(),
                dim: m.embedding_dim(),
                config: m.config.clone(),
                seed: m.config.seed,
                summary: m.summary.clone(),
            },
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let (kind, labels, a, b) = match self {
            SavedModel::Tagger(m) => (
                1u8,
                m.labels.iter().map(Tag::to_string).collect::<Vec<_>>(),
                m.emissions.clone(),
                m.transitions.clone(),
            ),
            SavedModel::Classifier(m) => (
                2u8,
                Polarity::CLASSES.iter().map(|p| p.to_string()).collect(),
                m.weights.clone(),
                m.bias.clone().insert_axis(ndarray::Axis(0)),
            ),
        };
        out.push(kind);
        put_u32(&mut out, labels.len());
        for l in &labels {
            put_u32(&mut out, l.len());
            out.extend_from_slice(l.as_bytes());
        }
        put_matrix(&mut out, &a);
        put_matrix(&mut out, &b);
        out
    }

    pub fn from_parts(bytes: &[u8], meta: ModelMeta) -> Result<Self, ModelError> {
        let fmt = |m: String| ModelError::Format(format!("model file: {m}"));
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(fmt("bad magic".into()));
        }
        let version = get_u32(&mut r)? as u32;
        if version != VERSION || meta.format_version != VERSION {
            return Err(fmt(format!("unsupported version {version}")));
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let mut labels = Vec::new();
        for _ in 0..get_u32(&mut r)? {
            let len = get_u32(&mut r)?;
            let mut b = vec![0u8; len];
            r.read_exact(&mut b)?;
            labels.push(String::from_utf8(b).map_err(|_| fmt("label is not UTF-8".into()))?);
        }
        let a = get_matrix(&mut r)?;
        let b = get_matrix(&mut r)?;
        match (kind[0], meta.kind) {
            (1, ModelKind::Tagger) => {
                let scheme = meta.scheme.ok_or_else(|| fmt("tagger sidecar lacks a scheme".into()))?;
                let labels: Vec<Tag> = labels
                    .iter()
                    .map(|l| l.parse())
                    .collect::<Result<_, _>>()?;
                if labels != label_inventory(scheme) {
                    return Err(fmt(format!("label map does not match scheme {scheme}")));
                }
                let l = labels.len();
                if a.dim() != (l, meta.dim) || b.dim() != (l, l) {
                    return Err(fmt("weight shapes do not match the label map".into()));
                }
                Ok(SavedModel::Tagger(TaggerModel {
                    scheme,
                    mode: meta.mode,
                    mask: TransitionMask::bio(&labels),
                    labels,
                    emissions: a,
                    transitions: b,
                    provider: meta.provider,
                    config: meta.config,
                    summary: meta.summary,
                }))
            }
            (2, ModelKind::Classifier) => {
                let strategy = meta
                    .strategy
                    .ok_or_else(|| fmt("classifier sidecar lacks a strategy".into()))?;
                if a.dim() != (3, strategy.output_dim(meta.dim)) || b.dim() != (1, 3) {
                    return Err(fmt("weight shapes do not match the strategy".into()));
                }
                Ok(SavedModel::Classifier(ClassifierModel {
                    strategy,
                    mode: meta.mode,
                    weights: a,
                    bias: Array1::from_iter(b.iter().copied()),
                    provider: meta.provider,
                    config: meta.config,
                    summary: meta.summary,
                }))
            }
            (k, kind) => Err(fmt(format!("binary kind {k} does not match sidecar kind {kind:?}"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        write_atomic(path, &self.to_bytes())?;
        let meta = serde_json::to_vec_pretty(&self.meta()).map_err(|e| ModelError::Format(e.to_string()))?;
        write_atomic(&sidecar_path(path), &meta)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path)?;
        let meta: ModelMeta = serde_json::from_slice(&fs::read(sidecar_path(path))?)
            .map_err(|e| ModelError::Format(format!("model sidecar: {e}")))?;
        SavedModel::from_parts(&bytes, meta)
    }
}
