//! Embedding sets, per-item metadata, and their on-disk formats.
//!
//! The binary container (`.raln`) has a fixed 32-byte header followed by a
//! row-major payload of little-endian `f32` values:
//!
//! | bytes  | content                                  |
//! |--------|------------------------------------------|
//! | 0..4   | magic `RALN`                             |
//! | 4..8   | format version, `u32` LE, currently 1    |
//! | 8..16  | number of items, `u64` LE                |
//! | 16..24 | embedding dimension, `u64` LE            |
//! | 24     | dtype code, 1 = `f32` LE                 |
//! | 25..32 | zero padding                             |
//!
//! Item identifiers, scores and the source tag live in a JSON sidecar next to
//! the container (`<path>.meta.json`). The sidecar is optional; without it,
//! identifiers are synthesized as `row_<index>`.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RALN";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32_LE: u8 = 1;
pub const HEADER_LEN: usize = 32;

/// Opaque item identifier.
pub type ItemId = String;

/// An `n x d` matrix of embeddings, one row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    items: Vec<ItemId>,
    dim: usize,
    data: Vec<f32>,
    source_tag: String,
}

impl EmbeddingSet {
    /// Builds a set from row-major `data`, validating shape, finiteness and
    /// identifier uniqueness.
    pub fn new(
        items: Vec<ItemId>,
        dim: usize,
        data: Vec<f32>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Shape("an embedding set needs at least one item".into()));
        }
        if dim == 0 {
            return Err(Error::Shape("embedding dimension must be at least 1".into()));
        }
        if items.len().checked_mul(dim) != Some(data.len()) {
            return Err(Error::Shape(format!(
                "{} values cannot fill {} rows of dimension {}",
                data.len(),
                items.len(),
                dim
            )));
        }
        check_finite(&data, dim)?;
        check_unique(&items)?;
        Ok(Self {
            items,
            dim,
            data,
            source_tag: source_tag.into(),
        })
    }

    /// Builds a set from `f64` rows, narrowing to storage precision.
    pub fn from_rows(
        items: Vec<ItemId>,
        rows: &[Vec<f64>],
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: bad.len(),
            });
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(items, dim, data, source_tag)
    }

    /// Identifiers `row_0 .. row_{n-1}`.
    pub fn synthetic_ids(n: usize) -> Vec<ItemId> {
        (0..n).map(|i| format!("row_{i}")).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Position of the first item where `self` and `other` disagree, or
    /// `None` when both carry identical item lists.
    pub fn first_item_mismatch(&self, other: &EmbeddingSet) -> Option<usize> {
        first_mismatch(&self.items, &other.items)
    }
}

pub(crate) fn first_mismatch(a: &[ItemId], b: &[ItemId]) -> Option<usize> {
    match a.iter().zip(b).position(|(x, y)| x != y) {
        Some(p) => Some(p),
        None if a.len() != b.len() => Some(a.len().min(b.len())),
        None => None,
    }
}

fn check_finite(data: &[f32], dim: usize) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(p) => Err(Error::NonFinite {
            row: p / dim,
            col: p % dim,
        }),
        None => Ok(()),
    }
}

fn check_unique(items: &[ItemId]) -> Result<()> {
    let mut seen = HashSet::with_capacity(items.len());
    for id in items {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

/// Per-item metadata: identifier and optional mean rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub id: ItemId,
    pub score: Option<f64>,
}

impl ItemMeta {
    pub fn new(id: impl Into<ItemId>, score: Option<f64>) -> Self {
        Self {
            id: id.into(),
            score,
        }
    }
}

/// Closed interval of admissible scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub min: f64,
    pub max: f64,
}

impl Default for ScoreRange {
    /// The 1-10 rating scale used by AVA.
    fn default() -> Self {
        Self {
            min: 1.0,
            max: 10.0,
        }
    }
}

impl ScoreRange {
    pub fn validate(&self, metas: &[ItemMeta]) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::InvalidParameter(format!(
                "score range [{}, {}] is empty or not finite",
                self.min, self.max
            )));
        }
        for meta in metas {
            if let Some(score) = meta.score {
                if !(self.min..=self.max).contains(&score) {
                    return Err(Error::ScoreOutOfRange {
                        id: meta.id.clone(),
                        score,
                        min: self.min,
                        max: self.max,
                    });
                }
            }
        }
        Ok(())
    }
}

/// An ordered stack of layer embeddings over one shared item list.
#[derive(Debug, Clone)]
pub struct LayerStack {
    layers: Vec<EmbeddingSet>,
    names: Vec<String>,
}

impl LayerStack {
    pub fn new(layers: Vec<EmbeddingSet>, names: Vec<String>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a layer stack needs at least one layer".into()));
        }
        if layers.len() != names.len() {
            return Err(Error::Shape(format!(
                "{} layers but {} layer names",
                layers.len(),
                names.len()
            )));
        }
        for layer in &layers[1..] {
            if let Some(position) = layers[0].first_item_mismatch(layer) {
                return Err(Error::ItemMismatch { position });
            }
        }
        Ok(Self { layers, names })
    }

    pub fn layers(&self) -> &[EmbeddingSet] {
        &self.layers
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn items(&self) -> &[ItemId] {
        self.layers[0].items()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    source_tag: String,
    items: Vec<ItemMeta>,
}

/// Path of the JSON sidecar belonging to a container.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Encodes the container bytes for `set`.
pub fn encode_container(set: &EmbeddingSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + set.data.len() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    out.extend_from_slice(&(set.dim as u64).to_le_bytes());
    out.push(DTYPE_F32_LE);
    out.extend_from_slice(&[0u8; 7]);
    for v in &set.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes container bytes into `(n, dim, values)`.
pub fn decode_container(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        let take = bytes.len().min(4);
        found[..take].copy_from_slice(&bytes[..take]);
        return Err(Error::BadMagic { found });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if bytes[24] != DTYPE_F32_LE {
        return Err(Error::UnsupportedDtype(bytes[24]));
    }
    if n == 0 || dim == 0 {
        return Err(Error::Shape(format!("header declares shape ({n}, {dim})")));
    }
    let expected = n
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .and_then(|b| b.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::Shape(format!("header shape ({n}, {dim}) overflows")))?;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes { expected, found });
    }
    let (n, dim) = (n as usize, dim as usize);
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    check_finite(&values, dim)?;
    Ok((n, dim, values))
}

/// Writes `set` as a container plus a sidecar with empty scores.
pub fn save_container(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let metas: Vec<ItemMeta> = set
        .items
        .iter()
        .map(|id| ItemMeta::new(id.clone(), None))
        .collect();
    save_container_with_meta(set, &metas, path)
}

/// Writes `set` as a container plus a sidecar carrying `metas`.
pub fn save_container_with_meta(
    set: &EmbeddingSet,
    metas: &[ItemMeta],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if metas.len() != set.len() {
        return Err(Error::MetadataLengthMismatch {
            items: metas.len(),
            rows: set.len(),
        });
    }
    if let Some(position) = metas.iter().zip(&set.items).position(|(m, id)| &m.id != id) {
        return Err(Error::ItemMismatch { position });
    }
    let mut file = BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    file.write_all(&encode_container(set))
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path, e))?;

    let sidecar = Sidecar {
        source_tag: set.source_tag.clone(),
        items: metas.to_vec(),
    };
    let meta_path = sidecar_path(path);
    let mut json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    json.push('\n');
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))
}

/// Loads a container. Identifiers come from the sidecar when present.
pub fn load_container(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    load_container_with_meta(path).map(|(set, _)| set)
}

/// Loads a container together with its sidecar metadata, if any.
pub fn load_container_with_meta(
    path: impl AsRef<Path>,
) -> Result<(EmbeddingSet, Option<Vec<ItemMeta>>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (n, dim, values) = decode_container(&bytes)?;

    let meta_path = sidecar_path(path);
    if !meta_path.exists() {
        let tag = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let set = EmbeddingSet::new(EmbeddingSet::synthetic_ids(n), dim, values, tag)?;
        return Ok((set, None));
    }
    let sidecar = read_sidecar(&meta_path)?;
    if sidecar.items.len() != n {
        return Err(Error::MetadataLengthMismatch {
            items: sidecar.items.len(),
            rows: n,
        });
    }
    let ids = sidecar.items.iter().map(|m| m.id.clone()).collect();
    let set = EmbeddingSet::new(ids, dim, values, sidecar.source_tag)?;
    Ok((set, Some(sidecar.items)))
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Metadata {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    if let Some(bad) = sidecar
        .items
        .iter()
        .find(|m| m.score.is_some_and(|s| !s.is_finite()))
    {
        return Err(Error::Metadata {
            path: path.to_owned(),
            message: format!("non-finite score for {:?}", bad.id),
        });
    }
    Ok(sidecar)
}

/// Reads item metadata from a standalone sidecar-format JSON file.
pub fn load_meta(path: impl AsRef<Path>) -> Result<Vec<ItemMeta>> {
    let path = path.as_ref();
    let sidecar = read_sidecar(path)?;
    let ids: Vec<ItemId> = sidecar.items.iter().map(|m| m.id.clone()).collect();
    check_unique(&ids)?;
    Ok(sidecar.items)
}

/// Parses a CSV with header `id,score,e0,...,e{d-1}`.
///
/// An empty score field means the item is unscored.
pub fn load_csv(path: impl AsRef<Path>) -> Result<(EmbeddingSet, Vec<ItemMeta>)> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, tag)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(
    reader: R,
    source_tag: impl Into<String>,
) -> Result<(EmbeddingSet, Vec<ItemMeta>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let width = header.len();
    if width < 3 || &header[0] != "id" || &header[1] != "score" {
        return Err(Error::BadHeader(
            "expected `id,score,e0,...` with at least one embedding column".into(),
        ));
    }
    for (j, name) in header.iter().skip(2).enumerate() {
        if name != format!("e{j}") {
            return Err(Error::BadHeader(format!("column {} is {name:?}, expected \"e{j}\"", j + 2)));
        }
    }
    let dim = width - 2;

    let mut ids = Vec::new();
    let mut metas = Vec::new();
    let mut data = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::RaggedRow {
                line,
                expected: width,
                found: record.len(),
            });
        }
        let id = record[0].to_owned();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let score = match &record[1] {
            "" => None,
            s => Some(parse_finite(s, line)?),
        };
        for field in record.iter().skip(2) {
            let v = parse_finite(field, line)? as f32;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    field: field.to_owned(),
                });
            }
            data.push(v);
        }
        metas.push(ItemMeta::new(id.clone(), score));
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(Error::Shape("csv contains no data rows".into()));
    }
    let set = EmbeddingSet::new(ids, dim, data, source_tag)?;
    Ok((set, metas))
}

fn parse_finite(field: &str, line: u64) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            field: field.to_owned(),
        }),
    }
}
