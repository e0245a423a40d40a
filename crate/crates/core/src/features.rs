//! Frozen-extractor feature files (FRZF), layer views and static word
//! embedding tables.
//!
//! FRZF layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "FRZF"
//! version    u16      1
//! dim        u32      feature dimension d
//! layers     u32      stored layer count L (shallowest first)
//! name       u32 byte length + UTF-8 extractor name
//! records    until EOF:
//!   id       u32 byte length + UTF-8
//!   seq_len  u32      T
//!   payload  L·T·d f32, layer-major then position then feature
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FRZF";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not an FRZF file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported FRZF version {0}")]
    Version(u16),
    #[error("view {view:?} needs {needed} stored layers, file has {stored}")]
    ViewUnsatisfiable {
        view: LayerView,
        needed: usize,
        stored: usize,
    },
    #[error("truncated payload{}", .id.as_ref().map(|i| format!(" in record {i:?}")).unwrap_or_default())]
    Truncated { id: Option<String> },
    #[error("duplicate example id {0:?}")]
    DuplicateId(String),
    #[error("record {id:?}: payload has {got} floats, expected {expected}")]
    PayloadSize {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("record {0:?} has zero length")]
    EmptyRecord(String),
    #[error("invalid UTF-8 in {0}")]
    Utf8(&'static str),
    #[error("embedding file line {line}: {message}")]
    EmbeddingParse { line: usize, message: String },
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("cannot embed an empty token list")]
    EmptyTokens,
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Which stored layer(s) of an FRZF record become the feature sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerView {
    /// Deepest stored layer, full sequence.
    FinalLayer,
    /// Shallowest stored layer, full sequence.
    FirstLayer,
    /// Last four stored layers concatenated per position (`4d` wide, the
    /// shallowest of the four first).
    ConcatLast4,
    /// Position 0 of the deepest stored layer.
    FirstTokenFinal,
}

/// A `T×d` matrix of token representations with its validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub matrix: Tensor<f32>,
    pub mask: Vec<bool>,
}

impl FeatureSequence {
    pub fn new(matrix: Tensor<f32>) -> Self {
        let len = matrix.shape()[0];
        Self {
            matrix,
            mask: vec![true; len],
        }
    }

    pub fn len(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureHeader {
    pub version: u16,
    pub dim: usize,
    pub layers: usize,
    pub extractor: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub seq_len: usize,
    /// `layers × seq_len × dim` floats, layer-major.
    pub payload: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFile {
    pub header: FeatureHeader,
    pub records: Vec<FeatureRecord>,
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

/// Serializes records to any writer. Fails before writing a record whose
/// payload size is wrong or whose id was already written.
pub fn write_features_to<W: Write>(
    mut w: W,
    extractor: &str,
    dim: usize,
    layers: usize,
    records: &[FeatureRecord],
) -> Result<()> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(FeatureError::DuplicateId(r.id.clone()));
        }
        if r.seq_len == 0 {
            return Err(FeatureError::EmptyRecord(r.id.clone()));
        }
        let expected = layers * r.seq_len * dim;
        if r.payload.len() != expected {
            return Err(FeatureError::PayloadSize {
                id: r.id.clone(),
                expected,
                got: r.payload.len(),
            });
        }
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(layers as u32).to_le_bytes())?;
    write_str(&mut w, extractor)?;
    for r in records {
        write_str(&mut w, &r.id)?;
        w.write_all(&(r.seq_len as u32).to_le_bytes())?;
        for v in &r.payload {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_features(
    path: impl AsRef<Path>,
    extractor: &str,
    dim: usize,
    layers: usize,
    records: &[FeatureRecord],
) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_features_to(file, extractor, dim, layers, records)
}

/// Reads exactly `buf.len()` bytes; `Ok(false)` on clean EOF before the first byte.
fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

fn truncated(id: Option<&str>) -> impl Fn(io::Error) -> FeatureError + '_ {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            FeatureError::Truncated {
                id: id.map(str::to_owned),
            }
        } else {
            FeatureError::Io(e)
        }
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize, what: &'static str) -> Result<String> {
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes).map_err(truncated(None))?;
    String::from_utf8(bytes).map_err(|_| FeatureError::Utf8(what))
}

pub fn read_features_from<R: Read>(mut r: R) -> Result<FeatureFile> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated(None))?;
    if &magic != MAGIC {
        return Err(FeatureError::BadMagic(magic));
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v).map_err(truncated(None))?;
    let version = u16::from_le_bytes(v);
    if version != VERSION {
        return Err(FeatureError::Version(version));
    }
    let dim = read_u32(&mut r).map_err(truncated(None))? as usize;
    let layers = read_u32(&mut r).map_err(truncated(None))? as usize;
    let name_len = read_u32(&mut r).map_err(truncated(None))? as usize;
    let extractor = read_string(&mut r, name_len, "extractor name")?;
    let header = FeatureHeader {
        version,
        dim,
        layers,
        extractor,
    };

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    loop {
        let mut len_buf = [0u8; 4];
        if !read_exact_or_eof(&mut r, &mut len_buf).map_err(truncated(None))? {
            break;
        }
        let id = read_string(&mut r, u32::from_le_bytes(len_buf) as usize, "record id")?;
        if !seen.insert(id.clone()) {
            return Err(FeatureError::DuplicateId(id));
        }
        let seq_len = read_u32(&mut r).map_err(truncated(Some(&id)))? as usize;
        if seq_len == 0 {
            return Err(FeatureError::EmptyRecord(id));
        }
        let mut raw = vec![0u8; layers * seq_len * dim * 4];
        r.read_exact(&mut raw).map_err(truncated(Some(&id)))?;
        let payload = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(FeatureRecord {
            id,
            seq_len,
            payload,
        });
    }
    Ok(FeatureFile { header, records })
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureFile> {
    read_features_from(BufReader::new(File::open(path)?))
}

impl LayerView {
    fn layers_needed(self) -> usize {
        match self {
            LayerView::ConcatLast4 => 4,
            _ => 1,
        }
    }
}

/// Slices one record according to `view`.
pub fn apply_view(header: &FeatureHeader, record: &FeatureRecord, view: LayerView) -> Result<FeatureSequence> {
    let (l, t, d) = (header.layers, record.seq_len, header.dim);
    let needed = view.layers_needed();
    if l < needed {
        return Err(FeatureError::ViewUnsatisfiable {
            view,
            needed,
            stored: l,
        });
    }
    let layer = |k: usize| &record.payload[k * t * d..(k + 1) * t * d];
    let (rows, width, data) = match view {
        LayerView::FinalLayer => (t, d, layer(l - 1).to_vec()),
        LayerView::FirstLayer => (t, d, layer(0).to_vec()),
        LayerView::FirstTokenFinal => (1, d, layer(l - 1)[..d].to_vec()),
        LayerView::ConcatLast4 => {
            let mut data = Vec::with_capacity(t * 4 * d);
            for pos in 0..t {
                for k in l - 4..l {
                    data.extend_from_slice(&layer(k)[pos * d..(pos + 1) * d]);
                }
            }
            (t, 4 * d, data)
        }
    };
    let matrix = Tensor::new(vec![rows, width], data).map_err(|_| FeatureError::PayloadSize {
        id: record.id.clone(),
        expected: rows * width,
        got: record.payload.len(),
    })?;
    Ok(FeatureSequence::new(matrix))
}

/// Loads every record of an FRZF file through `view`, keyed by example id.
pub fn load_features(path: impl AsRef<Path>, view: LayerView) -> Result<BTreeMap<String, FeatureSequence>> {
    let file = read_feature_file(path)?;
    file.records
        .iter()
        .map(|r| Ok((r.id.clone(), apply_view(&file.header, r, view)?)))
        .collect()
}

/// Word → vector table with a zero-vector out-of-vocabulary policy.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (String, Vec<f32>)>) -> Self {
        let vectors = entries
            .into_iter()
            .filter(|(_, v)| v.len() == dim)
            .collect();
        Self { dim, vectors }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(word)
    }

    /// Vector for `word`, or zeros when the word is unknown.
    pub fn lookup(&self, word: &str) -> Vec<f32> {
        self.vectors
            .get(word)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.dim])
    }

    /// Parses the `word v1 … vD` text format. A leading `count dim` line is
    /// skipped; the dimension is fixed by the first vector line.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut dim: Option<usize> = None;
        let mut vectors = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else {
                continue;
            };
            let rest: Vec<&str> = parts.collect();
            if line_no == 1 && rest.len() == 1 && word.parse::<u64>().is_ok() && rest[0].parse::<u64>().is_ok() {
                continue;
            }
            let values = rest
                .iter()
                .map(|v| v.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| FeatureError::EmbeddingParse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let expected = *dim.get_or_insert(values.len());
            if values.len() != expected || expected == 0 {
                return Err(FeatureError::EmbeddingParse {
                    line: line_no,
                    message: format!("expected {expected} values, found {}", values.len()),
                });
            }
            vectors.insert(word.to_owned(), values);
        }
        Ok(Self {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }
}

/// Vocabulary coverage of a tokenized corpus, in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub unique_word_coverage: f64,
    pub full_text_coverage: f64,
    pub vocabulary: usize,
    pub tokens: usize,
}

pub fn coverage_report<S: AsRef<str>>(corpus: &[Vec<S>], table: &EmbeddingTable) -> Result<Coverage> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in corpus.iter().flatten() {
        *counts.entry(tok.as_ref()).or_default() += 1;
    }
    let tokens: usize = counts.values().sum();
    if tokens == 0 {
        return Err(FeatureError::EmptyCorpus);
    }
    let (mut known_words, mut known_tokens) = (0usize, 0usize);
    for (word, n) in &counts {
        if table.contains(word) {
            known_words += 1;
            known_tokens += n;
        }
    }
    Ok(Coverage {
        unique_word_coverage: 100.0 * known_words as f64 / counts.len() as f64,
        full_text_coverage: 100.0 * known_tokens as f64 / tokens as f64,
        vocabulary: counts.len(),
        tokens,
    })
}

/// Stacks the table vectors of `tokens` into a `T×dim` sequence.
pub fn embed_sequence<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Result<FeatureSequence> {
    if tokens.is_empty() {
        return Err(FeatureError::EmptyTokens);
    }
    let data = tokens.iter().flat_map(|t| table.lookup(t.as_ref())).collect();
    let matrix = Tensor::new(vec![tokens.len(), table.dim()], data).map_err(|_| FeatureError::EmbeddingParse {
        line: 0,
        message: "embedding table has dimension 0".into(),
    })?;
    Ok(FeatureSequence::new(matrix))
}
