//! Exact cosine top-k over assay embeddings, with a flat binary file format.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::llm::{Embedder, LlmError};
use crate::store::BioAssayRecord;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector has a non-finite component")]
    NonFinite,
    #[error("vector has no components")]
    EmptyVector,
    #[error("index is empty")]
    EmptyIndex,
    #[error("aid {0} indexed twice")]
    DuplicateAid(u64),
    #[error("record serializes to an empty payload")]
    EmptySerialization,
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Finite real vector with at least one component.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Result<Self, IndexError> {
        if components.is_empty() {
            return Err(IndexError::EmptyVector);
        }
        if components.iter().any(|x| !x.is_finite()) {
            return Err(IndexError::NonFinite);
        }
        Ok(EmbeddingVector(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a·b / (‖a‖‖b‖)`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, IndexError> {
    if a.dim() != b.dim() {
        return Err(IndexError::DimMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(IndexError::ZeroNorm);
    }
    Ok(cosine_with_norms(&a.0, na, &b.0, nb))
}

fn cosine_with_norms(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    // Adding 0.0 maps -0.0 to 0.0 so orthogonal hits tie on aid.
    dot(a, b) / (na * nb) + 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RetrievalHit {
    pub aid: u64,
    pub similarity: f64,
}

/// Keys of the embedded payload, in emission order. Activity rows are never embedded.
#[derive(Serialize)]
struct Payload<'a> {
    aid: u64,
    title: &'a str,
    description: &'a str,
    protocol: &'a str,
    comment: &'a str,
}

/// JSON text embedded for a record: `aid, title, description, protocol, comment`.
pub fn canonical_payload(record: &BioAssayRecord) -> Result<String, IndexError> {
    let texts = [&record.title, &record.description, &record.protocol, &record.comment];
    if texts.iter().all(|t| t.trim().is_empty()) {
        return Err(IndexError::EmptySerialization);
    }
    let payload = Payload {
        aid: record.aid,
        title: &record.title,
        description: &record.description,
        protocol: &record.protocol,
        comment: &record.comment,
    };
    Ok(serde_json::to_string(&payload).expect("payload serializes"))
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Serialization(#[from] IndexError),
    #[error(transparent)]
    Provider(#[from] LlmError),
}

/// Embeds the canonical payload of a record.
pub fn embed_record(record: &BioAssayRecord, embedder: &dyn Embedder) -> Result<EmbeddingVector, EmbedError> {
    let payload = canonical_payload(record)?;
    Ok(embedder.embed_text(&payload)?)
}

/// Immutable in-memory index; rows are stored as read from f32 storage.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    dim: usize,
    aids: Vec<u64>,
    data: Vec<f64>,
    norms: Vec<f64>,
}

#[derive(Debug)]
pub struct IndexBuilder {
    dim: usize,
    aids: Vec<u64>,
    seen: HashSet<u64>,
    data: Vec<f64>,
}

impl IndexBuilder {
    pub fn new(dim: usize) -> Self {
        IndexBuilder {
            dim,
            aids: Vec::new(),
            seen: HashSet::new(),
            data: Vec::new(),
        }
    }

    /// Components are rounded to f32 so that a saved and reloaded index is identical.
    pub fn add(&mut self, aid: u64, vector: &EmbeddingVector) -> Result<(), IndexError> {
        if vector.dim() != self.dim {
            return Err(IndexError::DimMismatch(self.dim, vector.dim()));
        }
        let rounded: Vec<f64> = vector.as_slice().iter().map(|&x| x as f32 as f64).collect();
        if rounded.iter().any(|x| !x.is_finite()) {
            return Err(IndexError::NonFinite);
        }
        if norm(&rounded) == 0.0 {
            return Err(IndexError::ZeroNorm);
        }
        if !self.seen.insert(aid) {
            return Err(IndexError::DuplicateAid(aid));
        }
        self.aids.push(aid);
        self.data.extend(rounded);
        Ok(())
    }

    pub fn build(self) -> EmbeddingIndex {
        let norms = self.data.chunks(self.dim.max(1)).map(norm).collect();
        EmbeddingIndex {
            dim: self.dim,
            aids: self.aids,
            data: self.data,
            norms,
        }
    }
}

const MAGIC: &[u8; 4] = b"AMVX";

impl EmbeddingIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.aids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aids.is_empty()
    }

    pub fn aids(&self) -> &[u64] {
        &self.aids
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Hits sorted by similarity descending, ties by ascending aid;
    /// length `min(k, len)`.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit>, IndexError> {
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch(self.dim, query.dim()));
        }
        let qn = query.norm();
        if qn == 0.0 {
            return Err(IndexError::ZeroNorm);
        }
        let q = query.as_slice();
        let mut hits: Vec<RetrievalHit> = (0..self.len())
            .into_par_iter()
            .map(|i| RetrievalHit {
                aid: self.aids[i],
                similarity: cosine_with_norms(q, qn, self.vector(i), self.norms[i]),
            })
            .collect();
        let order = |a: &RetrievalHit, b: &RetrievalHit| b.similarity.total_cmp(&a.similarity).then(a.aid.cmp(&b.aid));
        let k = k.min(hits.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, order);
            hits.truncate(k);
        }
        hits.sort_unstable_by(order);
        Ok(hits)
    }

    pub fn aid_sidecar(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".aids");
        PathBuf::from(s)
    }

    /// Header `AMVX`, `dim: u32`, `count: u64` (little-endian), then
    /// `count × dim` little-endian f32; aids go to `<path>.aids`.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(MAGIC)?;
        let dim = u32::try_from(self.dim).map_err(|_| IndexError::Format("dimension too large".into()))?;
        w.write_all(&dim.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for &x in &self.data {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        w.flush()?;
        let mut a = BufWriter::new(fs::File::create(Self::aid_sidecar(path))?);
        for aid in &self.aids {
            writeln!(a, "{aid}")?;
        }
        a.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EmbeddingIndex, IndexError> {
        let mut r = io::BufReader::new(fs::File::open(path)?);
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|_| IndexError::Format("truncated header".into()))?;
        if &header[..4] != MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let dim = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
        let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
        let aids: Vec<u64> = io::BufReader::new(fs::File::open(Self::aid_sidecar(path))?)
            .lines()
            .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
            .map(|l| {
                let l = l?;
                l.trim()
                    .parse::<u64>()
                    .map_err(|_| IndexError::Format(format!("bad aid line `{l}`")))
            })
            .collect::<Result<_, _>>()?;
        if aids.len() != count {
            return Err(IndexError::Format(format!(
                "header count {count} but {} aids",
                aids.len()
            )));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * dim * 4 {
            return Err(IndexError::Format(format!(
                "payload has {} bytes, expected {}",
                bytes.len(),
                count * dim * 4
            )));
        }
        let mut builder = IndexBuilder::new(dim);
        for (i, row) in bytes.chunks_exact(dim * 4).enumerate() {
            let v: Vec<f64> = row
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect();
            builder.add(aids[i], &EmbeddingVector::new(v)?)?;
        }
        Ok(builder.build())
    }
}
