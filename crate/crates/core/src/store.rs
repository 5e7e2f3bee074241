//! Embedding matrices, caption records and their on-disk formats.
//!
//! An `EMB1` file is a 12-byte header followed by a row-major payload:
//!
//! ```text
//! bytes 0..4   b"EMB1"
//! bytes 4..8   N, u32 little-endian
//! bytes 8..12  D, u32 little-endian
//! bytes 12..   N * D f32 little-endian
//! ```
//!
//! Row identifiers live in a sidecar at `<path>.ids`, one UTF-8 id per line.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const HEADER_LEN: usize = 12;

/// Allowed deviation of a row norm from 1.0 for a matrix to count as normalized.
pub const NORM_TOLERANCE: f32 = 1e-4;

/// N rows of D-dimensional f32 vectors keyed by unique string ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    data: Vec<f32>,
    dim: usize,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major `data`. The normalized flag is set when
    /// every row norm is within [`NORM_TOLERANCE`] of one.
    pub fn new(ids: Vec<String>, data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::RaggedData { len: data.len(), dim });
        }
        let rows = data.len() / dim;
        if ids.len() != rows {
            return Err(Error::IdCountMismatch {
                expected: rows,
                found: ids.len(),
            });
        }
        validate_ids(&ids)?;
        let normalized = data
            .chunks_exact(dim)
            .all(|row| (norm(row) - 1.0).abs() <= NORM_TOLERANCE);
        Ok(Self {
            ids,
            data,
            dim,
            normalized,
        })
    }

    pub fn from_rows(ids: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        let dim = match rows.first() {
            Some(r) => r.len(),
            None => return Err(Error::Empty("rows; use EmbeddingMatrix::empty")),
        };
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(ids, data, dim)
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), dim)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Map from id to row index.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    /// Errors with the first offending row unless the matrix is unit-norm.
    pub fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            return Ok(());
        }
        for (id, row) in self.ids.iter().zip(self.rows()) {
            let n = norm(row);
            if (n - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::NotNormalized {
                    id: id.clone(),
                    norm: n,
                });
            }
        }
        Ok(())
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<f32>, usize) {
        (self.ids, self.data, self.dim)
    }
}

fn validate_ids(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if id.contains('\n') || id.contains('\r') {
            return Err(Error::InvalidId(id.clone()));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

fn norm(row: &[f32]) -> f32 {
    row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt() as f32
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

/// Serializes a matrix to its `EMB1` byte representation (without ids).
pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.len() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim as u32).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    fs::write(path, encode_embeddings(m)).map_err(|e| Error::io(path, e))?;
    let mut ids = String::new();
    for id in &m.ids {
        ids.push_str(id);
        ids.push('\n');
    }
    let side = sidecar_path(path);
    fs::write(&side, ids).map_err(|e| Error::io(side, e))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic(path.to_owned()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = rows as u64 * dim as u64 * 4;
    let found = (bytes.len() - HEADER_LEN) as u64;
    if expected != found {
        return Err(Error::SizeMismatch {
            path: path.to_owned(),
            expected,
            found,
        });
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let ids = parse_sidecar(&text);
    if ids.len() != rows {
        return Err(Error::IdCountMismatch {
            expected: rows,
            found: ids.len(),
        });
    }
    EmbeddingMatrix::new(ids, data, dim)
}

fn parse_sidecar(text: &str) -> Vec<String> {
    if text.is_empty() {
        return Vec::new();
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split('\n').map(str::to_owned).collect()
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_rows(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(m.data.len());
    for (id, row) in m.ids.iter().zip(m.rows()) {
        let n = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm { id: id.clone() });
        }
        data.extend(row.iter().map(|&x| (f64::from(x) / n) as f32));
    }
    let mut out = EmbeddingMatrix::new(m.ids.clone(), data, m.dim)?;
    out.normalized = true;
    Ok(out)
}

/// A caption with its derived unigram set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRecord {
    pub id: String,
    pub text: String,
    pub unigrams: BTreeSet<String>,
}

impl CaptionRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            id: id.into(),
            unigrams: unigrams(&text),
            text,
        }
    }
}

/// Lowercases, splits on Unicode whitespace and strips non-alphanumeric
/// characters from both ends of each token. Tokens that strip to nothing are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn unigrams(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

#[derive(Deserialize)]
struct CaptionLine {
    id: String,
    caption: String,
}

pub fn parse_captions(reader: impl Read) -> Result<Vec<CaptionRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptionLine = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        out.push(CaptionRecord::new(rec.id, rec.caption));
    }
    Ok(out)
}

pub fn read_captions(path: &Path) -> Result<Vec<CaptionRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_captions(f)
}

/// Reads a newline-delimited token list, skipping blank lines.
pub fn read_token_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}
