//! Embedding providers: per-token vectors plus one sentence-level vector.
//!
//! `HashedStatic` derives a unit vector for every token string from a
//! seeded hash and averages it over a symmetric context window.
//! `FileEmbeddings` serves vectors precomputed by an external encoder in
//! the `FGSE` binary format:
//!
//! ```text
//! "FGSE" | u32 version = 1 | u32 d | u32 count
//! per record: u32 id_len | id bytes | u32 n | n*d f32 (row-major) | d f32
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelError;

pub const SEPARATOR: &str = "[SEP]";
const MAGIC: &[u8; 4] = b"FGSE";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    /// n x d
    pub token_vectors: Array2<f64>,
    pub sentence_vector: Array1<f64>,
}

impl EmbeddingMatrix {
    pub fn len(&self) -> usize {
        self.token_vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.token_vectors.ncols()
    }

    /// Keeps the first `n` rows; the sentence vector is left as is.
    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            self.token_vectors = self.token_vectors.slice(ndarray::s![..n, ..]).to_owned();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashedStatic {
    pub dim: usize,
    pub seed: u64,
    pub window: usize,
}

impl HashedStatic {
    pub fn new(dim: usize, seed: u64, window: usize) -> Self {
        HashedStatic { dim, seed, window }
    }

    /// Unit vector derived from `(seed, token)`; the separator maps to zero.
    pub fn base_vector(&self, token: &str) -> Array1<f64> {
        if token == SEPARATOR {
            return Array1::zeros(self.dim);
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let v: Array1<f64> = (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            v / norm
        } else {
            v
        }
    }

    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> EmbeddingMatrix {
        let n = tokens.len();
        let mut base = Array2::zeros((n, self.dim));
        for (i, t) in tokens.iter().enumerate() {
            base.row_mut(i).assign(&self.base_vector(t.as_ref()));
        }
        let mut ctx = Array2::zeros((n, self.dim));
        for i in 0..n {
            let lo = i.saturating_sub(self.window);
            let hi = (i + self.window + 1).min(n);
            let mean = base
                .slice(ndarray::s![lo..hi, ..])
                .mean_axis(Axis(0))
                .expect("non-empty window");
            ctx.row_mut(i).assign(&mean);
        }
        let sentence_vector = ctx
            .mean_axis(Axis(0))
            .unwrap_or_else(|| Array1::zeros(self.dim));
        EmbeddingMatrix {
            token_vectors: ctx,
            sentence_vector,
        }
    }
}

/// Precomputed contextual embeddings keyed by record id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileEmbeddings {
    pub dim: usize,
    pub path: Option<PathBuf>,
    records: HashMap<String, EmbeddingMatrix>,
    order: Vec<String>,
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

impl FileEmbeddings {
    pub fn new(dim: usize) -> Self {
        FileEmbeddings {
            dim,
            ..Default::default()
        }
    }

    pub fn insert(&mut self, id: &str, m: EmbeddingMatrix) -> Result<(), ModelError> {
        if m.dim() != self.dim || m.sentence_vector.len() != self.dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim,
                actual: m.dim(),
            });
        }
        if self.records.insert(id.to_string(), m).is_none() {
            self.order.push(id.to_string());
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingMatrix> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, ModelError> {
        let fmt = |m: &str| ModelError::Format(format!("embedding file: {m}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(fmt("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(fmt(&format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let count = read_u32(&mut r)? as usize;
        let mut out = FileEmbeddings::new(dim);
        for _ in 0..count {
            let id_len = read_u32(&mut r)? as usize;
            let mut id = vec![0u8; id_len];
            r.read_exact(&mut id)?;
            let id = String::from_utf8(id).map_err(|_| fmt("sent_id is not UTF-8"))?;
            let n = read_u32(&mut r)? as usize;
            let rows = read_f32s(&mut r, n * dim)?;
            let sent = read_f32s(&mut r, dim)?;
            let m = EmbeddingMatrix {
                token_vectors: Array2::from_shape_vec((n, dim), rows)
                    .map_err(|e| fmt(&e.to_string()))?,
                sentence_vector: Array1::from_vec(sent),
            };
            if out.records.contains_key(&id) {
                return Err(fmt(&format!("duplicate record `{id}`")));
            }
            out.insert(&id, m)?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path)?;
        let mut out = FileEmbeddings::read_from(bytes.as_slice())?;
        out.path = Some(path.to_path_buf());
        Ok(out)
    }

    /// Writes records in insertion order. Values are narrowed to f32.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), ModelError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.order.len() as u32).to_le_bytes())?;
        for id in &self.order {
            let m = &self.records[id];
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            w.write_all(&(m.len() as u32).to_le_bytes())?;
            for v in m.token_vectors.iter().chain(m.sentence_vector.iter()) {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        super::persist::write_atomic(path, &buf)
    }
}

/// Serializable description of a provider, stored with trained models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    Hashed { dim: usize, seed: u64, window: usize },
    File { path: PathBuf },
}

impl ProviderSpec {
    pub fn build(&self) -> Result<EmbeddingProvider, ModelError> {
        Ok(match self {
            ProviderSpec::Hashed { dim, seed, window } => {
                EmbeddingProvider::Hashed(HashedStatic::new(*dim, *seed, *window))
            }
            ProviderSpec::File { path } => {
                EmbeddingProvider::File(Arc::new(FileEmbeddings::load(path)?))
            }
        })
    }
}

#[derive(Clone, Debug)]
pub enum EmbeddingProvider {
    Hashed(HashedStatic),
    File(Arc<FileEmbeddings>),
}

impl EmbeddingProvider {
    pub fn hashed(dim: usize, seed: u64, window: usize) -> Self {
        EmbeddingProvider::Hashed(HashedStatic::new(dim, seed, window))
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::Hashed(h) => h.dim,
            EmbeddingProvider::File(f) => f.dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EmbeddingProvider::Hashed(_) => "hashed",
            EmbeddingProvider::File(_) => "file",
        }
    }

    pub fn spec(&self) -> ProviderSpec {
        match self {
            EmbeddingProvider::Hashed(h) => ProviderSpec::Hashed {
                dim: h.dim,
                seed: h.seed,
                window: h.window,
            },
            EmbeddingProvider::File(f) => ProviderSpec::File {
                path: f.path.clone().unwrap_or_default(),
            },
        }
    }

    /// Vectors for `tokens`. File-backed lookups use `key` and must hold
    /// exactly one row per token.
    pub fn embed<S: AsRef<str>>(&self, key: &str, tokens: &[S]) -> Result<EmbeddingMatrix, ModelError> {
        match self {
            EmbeddingProvider::Hashed(h) => Ok(h.embed(tokens)),
            EmbeddingProvider::File(f) => {
                let m = f
                    .get(key)
                    .ok_or_else(|| ModelError::MissingRecord(key.to_string()))?;
                if m.len() != tokens.len() {
                    return Err(ModelError::TokenCount {
                        key: key.to_string(),
                        expected: tokens.len(),
                        actual: m.len(),
                    });
                }
                Ok(m.clone())
            }
        }
    }
}

/// Record key for a classifier input built around `target`.
pub fn target_key(sent_id: &str, target: &[crate::corpus::Span]) -> String {
    let spans: Vec<String> = target
        .iter()
        .map(|s| format!("{}-{}", s.start, s.end))
        .collect();
    format!("{sent_id}#{}", spans.join(","))
}
