//! Labeled embedding datasets and their on-disk formats.
//!
//! Two formats are supported:
//!
//! * **JSONL**: one object per line, `{"id": str, "label": "ks"|"nk"|null, "vec": [f32...]}`.
//!   Unknown fields (e.g. a pass-through `"text"`) are ignored on load.
//! * **Binary**: little-endian throughout.
//!
//!   | field          | type                   |
//!   |----------------|------------------------|
//!   | magic          | `b"REDE"`              |
//!   | version        | `u32` (= 1)            |
//!   | rows `N`       | `u64`                  |
//!   | dim `d`        | `u32`                  |
//!   | flags          | `u8`, bit 0 = labels   |
//!   | labels         | `N` x `u8` if flagged: 1 = ks, 0 = nk, 255 = unlabeled |
//!   | matrix         | `N * d` x `f32`, row-major |
//!   | ids            | `N` x (`u32` byte length + UTF-8 bytes) |
//!
//! Sub-sampling uses ChaCha8 (`rand_chacha`) seeded with
//! `SeedableRng::seed_from_u64(seed)` and a partial Fisher-Yates shuffle, so
//! the same seed selects the same rows on every platform.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"REDE";
pub const BINARY_VERSION: u32 = 1;
/// magic + version + N + d + flags
pub const BINARY_HEADER_LEN: usize = 4 + 4 + 8 + 4 + 1;

const FLAG_LABELS: u8 = 0b1;

/// Whether a turn needs external knowledge. Knowledge-seeking turns are the
/// out-of-distribution (positive) class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TurnLabel {
    KnowledgeSeeking,
    NonKnowledgeSeeking,
    Unlabeled,
}

impl TurnLabel {
    pub fn code(self) -> Option<&'static str> {
        match self {
            TurnLabel::KnowledgeSeeking => Some("ks"),
            TurnLabel::NonKnowledgeSeeking => Some("nk"),
            TurnLabel::Unlabeled => None,
        }
    }

    pub fn from_code(code: Option<&str>) -> Result<Self> {
        match code {
            Some("ks") => Ok(TurnLabel::KnowledgeSeeking),
            Some("nk") => Ok(TurnLabel::NonKnowledgeSeeking),
            None => Ok(TurnLabel::Unlabeled),
            Some(other) => Err(Error::Format(format!(
                "unknown label {other:?} (expected \"ks\", \"nk\" or null)"
            ))),
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            TurnLabel::KnowledgeSeeking => 1,
            TurnLabel::NonKnowledgeSeeking => 0,
            TurnLabel::Unlabeled => 255,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            1 => Ok(TurnLabel::KnowledgeSeeking),
            0 => Ok(TurnLabel::NonKnowledgeSeeking),
            255 => Ok(TurnLabel::Unlabeled),
            other => Err(Error::Format(format!("invalid label byte {other}"))),
        }
    }

    pub fn is_labeled(self) -> bool {
        self != TurnLabel::Unlabeled
    }
}

impl fmt::Display for TurnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code().unwrap_or("unlabeled"))
    }
}

impl FromStr for TurnLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ks" | "knowledge-seeking" => Ok(TurnLabel::KnowledgeSeeking),
            "nk" | "non-knowledge-seeking" => Ok(TurnLabel::NonKnowledgeSeeking),
            "unlabeled" | "null" => Ok(TurnLabel::Unlabeled),
            other => Err(Error::arg(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetFormat {
    Jsonl,
    Binary,
}

impl DatasetFormat {
    /// `.jsonl` / `.json` map to JSONL, anything else to binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DatasetFormat::Jsonl,
            _ => DatasetFormat::Binary,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "binary" | "bin" => Ok(DatasetFormat::Binary),
            other => Err(Error::arg(format!("unknown dataset format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LabelCounts {
    pub total: usize,
    pub knowledge_seeking: usize,
    pub non_knowledge_seeking: usize,
    pub unlabeled: usize,
}

/// Sentence embeddings, one row per utterance, with ids and labels.
///
/// Immutable once built; every constructor validates the invariants
/// (matching lengths, unique ids, finite values).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    ids: Vec<String>,
    labels: Vec<TurnLabel>,
    matrix: Array2<f32>,
}

impl EmbeddingDataset {
    pub fn new(ids: Vec<String>, labels: Vec<TurnLabel>, matrix: Array2<f32>) -> Result<Self> {
        if ids.len() != matrix.nrows() || labels.len() != matrix.nrows() {
            return Err(Error::Format(format!(
                "{} ids and {} labels for {} rows",
                ids.len(),
                labels.len(),
                matrix.nrows()
            )));
        }
        if matrix.ncols() == 0 {
            return Err(Error::Format("embedding dimension must be at least 1".into()));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Format(format!("duplicate id {id:?}")));
            }
        }
        for (i, row) in matrix.rows().into_iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Format(format!(
                    "non-finite value at row {:?}, column {j}",
                    ids[i]
                )));
            }
        }
        Ok(Self {
            ids,
            labels,
            matrix,
        })
    }

    /// Build from `f64` rows (values are stored as `f32`).
    pub fn from_f64(ids: Vec<String>, labels: Vec<TurnLabel>, matrix: &Array2<f64>) -> Result<Self> {
        Self::new(ids, labels, matrix.mapv(|v| v as f32))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[TurnLabel] {
        &self.labels
    }

    pub fn matrix(&self) -> &Array2<f32> {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.matrix.row(i)
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.matrix.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn counts(&self) -> LabelCounts {
        let mut c = LabelCounts {
            total: self.len(),
            ..LabelCounts::default()
        };
        for l in &self.labels {
            match l {
                TurnLabel::KnowledgeSeeking => c.knowledge_seeking += 1,
                TurnLabel::NonKnowledgeSeeking => c.non_knowledge_seeking += 1,
                TurnLabel::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }

    pub fn indices_with_label(&self, label: TurnLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let d = self.dim();
        let mut matrix = Array2::zeros((indices.len(), d));
        for (out, &i) in indices.iter().enumerate() {
            matrix.row_mut(out).assign(&self.matrix.row(i));
        }
        Self {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            matrix,
        }
    }

    pub fn with_label(&self, label: TurnLabel) -> Self {
        self.select(&self.indices_with_label(label))
    }

    /// All rows widened to `f64`, the precision every numerical routine uses.
    pub fn features(&self) -> Array2<f64> {
        self.matrix.mapv(f64::from)
    }

    /// `f64` rows carrying `label`.
    pub fn features_with_label(&self, label: TurnLabel) -> Array2<f64> {
        self.with_label(label).features()
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    id: String,
    #[serde(default)]
    label: Option<String>,
    vec: Vec<f64>,
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let ds = match format {
        DatasetFormat::Jsonl => read_jsonl(reader, path)?,
        DatasetFormat::Binary => read_binary(reader, path)?,
    };
    if ds.is_empty() {
        return Err(Error::Format(format!("empty dataset: {}", path.display())));
    }
    Ok(ds)
}

pub fn save_dataset(ds: &EmbeddingDataset, path: impl AsRef<Path>, format: DatasetFormat) -> Result<()> {
    let path = path.as_ref();
    if ds.is_empty() {
        return Err(Error::arg("refusing to write an empty dataset"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        DatasetFormat::Jsonl => write_jsonl(ds, &mut w),
        DatasetFormat::Binary => write_binary(ds, &mut w),
    }
    .and_then(|_| w.flush())
    .map_err(|e| Error::io(path, e))
}

fn read_jsonl(reader: impl BufRead, path: &Path) -> Result<EmbeddingDataset> {
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values: Vec<f32> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut seen = HashSet::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonlRow = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        match dim {
            None => {
                if row.vec.is_empty() {
                    return Err(Error::Format(format!("row {:?}: empty vector", row.id)));
                }
                dim = Some(row.vec.len());
            }
            Some(d) if d != row.vec.len() => {
                return Err(Error::Format(format!(
                    "row {:?}: dimension {} differs from {}",
                    row.id,
                    row.vec.len(),
                    d
                )));
            }
            _ => {}
        }
        if !seen.insert(row.id.clone()) {
            return Err(Error::Format(format!("duplicate id {:?}", row.id)));
        }
        for (j, &v) in row.vec.iter().enumerate() {
            let narrowed = v as f32;
            if !narrowed.is_finite() {
                return Err(Error::Format(format!(
                    "row {:?}: non-finite value at column {j}",
                    row.id
                )));
            }
            values.push(narrowed);
        }
        labels.push(
            TurnLabel::from_code(row.label.as_deref())
                .map_err(|e| Error::Format(format!("row {:?}: {e}", row.id)))?,
        );
        ids.push(row.id);
    }

    let d = dim.unwrap_or(1);
    let matrix = Array2::from_shape_vec((ids.len(), d), values)
        .map_err(|e| Error::Format(e.to_string()))?;
    EmbeddingDataset::new(ids, labels, matrix)
}

fn write_jsonl(ds: &EmbeddingDataset, w: &mut impl Write) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Out<'a> {
        id: &'a str,
        label: Option<&'static str>,
        vec: Vec<f32>,
    }
    for i in 0..ds.len() {
        let row = Out {
            id: &ds.ids[i],
            label: ds.labels[i].code(),
            vec: ds.matrix.row(i).to_vec(),
        };
        serde_json::to_writer(&mut *w, &row)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn write_binary(ds: &EmbeddingDataset, w: &mut impl Write) -> std::io::Result<()> {
    let labeled = ds.labels.iter().any(|l| l.is_labeled());
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    w.write_all(&(ds.dim() as u32).to_le_bytes())?;
    w.write_all(&[if labeled { FLAG_LABELS } else { 0 }])?;
    if labeled {
        let bytes: Vec<u8> = ds.labels.iter().map(|l| l.to_byte()).collect();
        w.write_all(&bytes)?;
    }
    for v in ds.matrix.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    for id in &ds.ids {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
    }
    Ok(())
}

fn read_binary(mut reader: impl Read, path: &Path) -> Result<EmbeddingDataset> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    if buf.is_empty() {
        return Err(Error::Format(format!("empty dataset: {}", path.display())));
    }
    let mut cur = Cursor { buf: &buf, pos: 0 };

    if cur.take(4)? != BINARY_MAGIC {
        return Err(Error::Format("bad magic: not a REDE binary dataset".into()));
    }
    let version = u32::from_le_bytes(cur.array()?);
    if version != BINARY_VERSION {
        return Err(Error::Format(format!(
            "unsupported binary dataset version {version} (expected {BINARY_VERSION})"
        )));
    }
    let n = u64::from_le_bytes(cur.array()?);
    let d = u32::from_le_bytes(cur.array()?) as usize;
    let flags = cur.array::<1>()?[0];
    let n = usize::try_from(n).map_err(|_| Error::Format("row count too large".into()))?;

    let labels = if flags & FLAG_LABELS != 0 {
        cur.take(n)?
            .iter()
            .map(|&b| TurnLabel::from_byte(b))
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![TurnLabel::Unlabeled; n]
    };

    let payload_len = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    let payload = cur.take(payload_len)?;
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let len = u32::from_le_bytes(cur.array()?) as usize;
        let bytes = cur.take(len)?;
        let id = std::str::from_utf8(bytes)
            .map_err(|e| Error::Format(format!("id is not UTF-8: {e}")))?;
        ids.push(id.to_owned());
    }
    if cur.pos != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after id block",
            buf.len() - cur.pos
        )));
    }

    if n == 0 {
        return Ok(EmbeddingDataset {
            ids,
            labels,
            matrix: Array2::zeros((0, d.max(1))),
        });
    }
    let matrix =
        Array2::from_shape_vec((n, d), values).map_err(|e| Error::Format(e.to_string()))?;
    EmbeddingDataset::new(ids, labels, matrix)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated binary dataset: needed {len} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let s = self.take(N)?;
        let mut out = [0u8; N];
        out.copy_from_slice(s);
        Ok(out)
    }
}

/// Keep exactly `n` randomly chosen rows labeled `label` plus every row with
/// another label. Row order from `ds` is preserved.
pub fn subsample(ds: &EmbeddingDataset, label: TurnLabel, n: usize, seed: u64) -> Result<EmbeddingDataset> {
    let mut pool = ds.indices_with_label(label);
    if n > pool.len() {
        return Err(Error::arg(format!(
            "cannot sub-sample {n} rows labeled {label}: only {} available",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // partial Fisher-Yates: the first n slots end up a uniform n-subset.
    for i in 0..n {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut keep = vec![false; ds.len()];
    for &i in &pool[..n] {
        keep[i] = true;
    }
    let indices: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.labels[i] != label || keep[i])
        .collect();
    Ok(ds.select(&indices))
}
