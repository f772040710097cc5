//! On-disk embedding format and view-set access.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MGM1" | version u32 | N u64 | T u64 | D u64 | flags u32
//!        | manifest length u32 | manifest JSON (UTF-8)
//!        | N*T*D f32 values in (item, view, dim) order
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MGM1";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 * 3 + 4;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {0:?}, expected \"MGM1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("manifest JSON could not be parsed: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("invalid field `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },
    #[error("policy Sem requires labels on every item")]
    MissingLabels,
    #[error("semantic label {label} has {size} member(s); at least 2 are required")]
    SmallLabelGroup { label: i64, size: usize },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> StoreError {
    StoreError::Validation { field, reason: reason.into() }
}

/// Direction along which views of an item were produced.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    /// Items sharing a class label are treated as views of each other.
    Sem,
    Augs,
    Crop,
    Colorjit,
    Rotate,
    Custom(String),
}

impl Policy {
    pub const STANDARD: [Policy; 5] =
        [Policy::Sem, Policy::Augs, Policy::Crop, Policy::Colorjit, Policy::Rotate];

    pub fn as_str(&self) -> &str {
        match self {
            Policy::Sem => "Sem",
            Policy::Augs => "Augs",
            Policy::Crop => "Crop",
            Policy::Colorjit => "Colorjit",
            Policy::Rotate => "Rotate",
            Policy::Custom(s) => s,
        }
    }

    pub fn is_semantic(&self) -> bool {
        matches!(self, Policy::Sem)
    }
}

impl From<&str> for Policy {
    fn from(s: &str) -> Self {
        match s {
            "Sem" => Policy::Sem,
            "Augs" => Policy::Augs,
            "Crop" => Policy::Crop,
            "Colorjit" => Policy::Colorjit,
            "Rotate" => Policy::Rotate,
            other => Policy::Custom(other.to_string()),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Policy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Policy::from(s.as_str()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model_id: String,
    pub policy_id: Policy,
    pub labels: Option<Vec<i64>>,
    pub created: DateTime<Utc>,
    pub version: u32,
}

impl Manifest {
    pub fn new(model_id: impl Into<String>, policy_id: Policy, labels: Option<Vec<i64>>) -> Self {
        Self {
            model_id: model_id.into(),
            policy_id,
            labels,
            created: Utc::now(),
            version: FORMAT_VERSION,
        }
    }

    /// Label groups in ascending label order, members in ascending item order.
    fn label_groups(&self) -> Result<BTreeMap<i64, Vec<usize>>, StoreError> {
        let labels = self.labels.as_ref().ok_or(StoreError::MissingLabels)?;
        let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (item, &label) in labels.iter().enumerate() {
            groups.entry(label).or_default().push(item);
        }
        Ok(groups)
    }
}

/// An N x T x D block of embeddings plus its manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub n_items: usize,
    pub t_views: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    pub manifest: Manifest,
}

impl EmbeddingSet {
    pub fn new(
        n_items: usize,
        t_views: usize,
        dim: usize,
        data: Vec<f32>,
        manifest: Manifest,
    ) -> Result<Self, StoreError> {
        let set = Self { n_items, t_views, dim, data, manifest };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.n_items < 1 {
            return Err(invalid("n_items", "must be at least 1"));
        }
        if self.dim < 1 {
            return Err(invalid("dim", "must be at least 1"));
        }
        // Sem stores one clean view per item; every other policy needs at
        // least two views to form a graph.
        if self.manifest.policy_id.is_semantic() {
            if self.t_views != 1 {
                return Err(invalid("t_views", "policy Sem stores exactly one view per item"));
            }
        } else if self.t_views < 2 {
            return Err(invalid("t_views", "must be at least 2"));
        }
        let expected = self.n_items * self.t_views * self.dim;
        if self.data.len() != expected {
            return Err(invalid(
                "data",
                format!("length {} does not match N*T*D = {expected}", self.data.len()),
            ));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(invalid("data", format!("non-finite value at offset {pos}")));
        }
        if let Some(labels) = &self.manifest.labels {
            if labels.len() != self.n_items {
                return Err(invalid(
                    "labels",
                    format!("{} labels for {} items", labels.len(), self.n_items),
                ));
            }
        }
        if self.manifest.version != FORMAT_VERSION {
            return Err(invalid("version", format!("manifest version {}", self.manifest.version)));
        }
        if self.manifest.policy_id.is_semantic() {
            for (label, members) in self.manifest.label_groups()? {
                if members.len() < 2 {
                    return Err(StoreError::SmallLabelGroup { label, size: members.len() });
                }
            }
        }
        Ok(())
    }

    pub fn vector(&self, item: usize, view: usize) -> &[f32] {
        let start = (item * self.t_views + view) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Groups of (item, view) ids, one group per view-set.
    pub fn view_set_ids(&self) -> Result<Vec<ViewSetIds>, StoreError> {
        if self.manifest.policy_id.is_semantic() {
            if self.t_views != 1 {
                return Err(invalid("t_views", "policy Sem stores exactly one view per item"));
            }
            let groups = self.manifest.label_groups()?;
            groups
                .into_iter()
                .map(|(label, members)| {
                    if members.len() < 2 {
                        return Err(StoreError::SmallLabelGroup { label, size: members.len() });
                    }
                    Ok(ViewSetIds {
                        label: Some(label),
                        source_ids: members.into_iter().map(|item| (item, 0)).collect(),
                    })
                })
                .collect()
        } else {
            Ok((0..self.n_items)
                .map(|item| ViewSetIds {
                    label: self.manifest.labels.as_ref().map(|l| l[item]),
                    source_ids: (0..self.t_views).map(|view| (item, view)).collect(),
                })
                .collect())
        }
    }

    pub fn materialize(&self, ids: &ViewSetIds) -> ViewSet {
        ViewSet {
            label: ids.label,
            source_ids: ids.source_ids.clone(),
            members: ids
                .source_ids
                .iter()
                .map(|&(item, view)| self.vector(item, view).iter().map(|&v| v as f64).collect())
                .collect(),
        }
    }

    /// All view-sets of this set: the T views of each item, or one group per
    /// label for the semantic policy.
    pub fn view_sets(&self) -> Result<Vec<ViewSet>, StoreError> {
        Ok(self.view_set_ids()?.iter().map(|ids| self.materialize(ids)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewSetIds {
    pub label: Option<i64>,
    pub source_ids: Vec<(usize, usize)>,
}

/// The vectors over which one NNK graph is built.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSet {
    pub label: Option<i64>,
    pub source_ids: Vec<(usize, usize)>,
    pub members: Vec<Vec<f64>>,
}

impl ViewSet {
    /// A view-set with synthetic source ids `(0, t)`.
    pub fn from_vectors(members: Vec<Vec<f64>>) -> Self {
        Self {
            label: None,
            source_ids: (0..members.len()).map(|t| (0, t)).collect(),
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members.first().map_or(0, Vec::len)
    }

    pub fn position_of(&self, source: (usize, usize)) -> Option<usize> {
        self.source_ids.iter().position(|&s| s == source)
    }
}

pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<(), StoreError> {
    set.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    write_to(set, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_to<W: Write>(set: &EmbeddingSet, w: &mut W) -> Result<(), StoreError> {
    let manifest = serde_json::to_vec(&set.manifest)?;
    let manifest_len = u32::try_from(manifest.len())
        .map_err(|_| invalid("manifest", "longer than 4 GiB"))?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(set.n_items as u64).to_le_bytes())?;
    w.write_all(&(set.t_views as u64).to_le_bytes())?;
    w.write_all(&(set.dim as u64).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&manifest_len.to_le_bytes())?;
    w.write_all(&manifest)?;
    let mut buf = Vec::with_capacity(set.data.len() * 4);
    for v in &set.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet, StoreError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

pub fn from_bytes(bytes: &[u8]) -> Result<EmbeddingSet, StoreError> {
    if bytes.len() < 4 {
        return Err(StoreError::Truncated(format!("{} bytes, no magic", bytes.len())));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(StoreError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(StoreError::Truncated(format!("{} bytes, header incomplete", bytes.len())));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());

    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let to_usize = |v: u64, field: &'static str| {
        usize::try_from(v).map_err(|_| invalid(field, format!("{v} does not fit in memory")))
    };
    let n_items = to_usize(u64_at(8), "n_items")?;
    let t_views = to_usize(u64_at(16), "t_views")?;
    let dim = to_usize(u64_at(24), "dim")?;
    let _flags = u32_at(32);
    let manifest_len = u32_at(HEADER_LEN) as usize;

    let manifest_start = HEADER_LEN + 4;
    let payload_start = manifest_start + manifest_len;
    if bytes.len() < payload_start {
        return Err(StoreError::Truncated(format!(
            "manifest needs {manifest_len} bytes, {} available",
            bytes.len() - manifest_start
        )));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[manifest_start..payload_start])?;

    let count = n_items
        .checked_mul(t_views)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| invalid("data", "N*T*D overflows"))?;
    let payload = &bytes[payload_start..];
    let needed = count * 4;
    if payload.len() < needed {
        return Err(StoreError::Truncated(format!(
            "payload has {} bytes, header promises {needed}",
            payload.len()
        )));
    }
    if payload.len() > needed {
        return Err(invalid("data", format!("{} trailing bytes", payload.len() - needed)));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingSet::new(n_items, t_views, dim, data, manifest)
}
