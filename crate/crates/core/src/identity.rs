//! Face identities: bounding boxes, the embedding gallery, cosine matching
//! and a seam for remote identification services.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ImageRecord;
use crate::error::{json_error, Error, Result};

/// Face rectangle in pixels, origin top-left. Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn is_empty(&self) -> bool {
        !(self.w > 0.0 && self.h > 0.0)
    }

    pub fn fits_within(&self, width: f64, height: f64) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite())
            && self.x >= 0.0
            && self.y >= 0.0
            && self.right() <= width
            && self.bottom() <= height
    }
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        BBox { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// A detected face. Detection and embedding extraction happen upstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceObservation {
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

impl FaceObservation {
    pub fn new(bbox: BBox) -> Self {
        FaceObservation {
            bbox,
            embedding: None,
            identity: None,
            similarity: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn identified(mut self, name: impl Into<String>, similarity: f64) -> Self {
        self.identity = Some(name.into());
        self.similarity = Some(similarity);
        self
    }

    /// Identity gated by `threshold`: `None` unless the face carries a name
    /// with similarity at or above the threshold.
    pub fn identity_at(&self, threshold: f64) -> Option<&str> {
        match (&self.identity, self.similarity) {
            (Some(name), Some(sim)) if sim >= threshold => Some(name),
            _ => None,
        }
    }

    pub(crate) fn validate(&self, record: &str, index: usize) -> Result<()> {
        let field = |f: &str| format!("faces[{index}].{f}");
        if self.bbox.is_empty() {
            return Err(Error::invalid(record, field("bbox"), "width and height must be positive"));
        }
        if let Some(e) = &self.embedding {
            if e.is_empty() || e.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(record, field("embedding"), "must be a non-empty finite vector"));
            }
        }
        if let Some(s) = self.similarity {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid(record, field("similarity"), format!("{s} outside [0, 1]")));
            }
        }
        if self.identity.is_some() && self.similarity.is_none() {
            return Err(Error::invalid(record, field("similarity"), "identity given without similarity"));
        }
        Ok(())
    }
}

/// How a raw cosine is turned into a similarity in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityScale {
    /// `(cos + 1) / 2`
    #[default]
    Mapped,
    /// `max(cos, 0)`
    RawCosine,
}

impl SimilarityScale {
    pub fn apply(self, cosine: f64) -> f64 {
        let s = match self {
            SimilarityScale::Mapped => (cosine + 1.0) / 2.0,
            SimilarityScale::RawCosine => cosine,
        };
        s.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub threshold: f64,
    #[serde(default)]
    pub scale: SimilarityScale,
}

impl MatchConfig {
    pub const DEFAULT_THRESHOLD: f64 = 0.90;

    pub fn new(threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::parameter("sim-threshold", format!("{threshold} outside [0, 1]")));
        }
        Ok(MatchConfig {
            threshold,
            scale: SimilarityScale::Mapped,
        })
    }

    pub fn with_scale(mut self, scale: SimilarityScale) -> Self {
        self.scale = scale;
        self
    }
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            threshold: Self::DEFAULT_THRESHOLD,
            scale: SimilarityScale::Mapped,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub name: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub name: String,
    pub embeddings: Vec<Vec<f64>>,
}

/// Known identities with their reference embeddings. Immutable once built.
#[derive(Debug, Clone)]
pub struct Gallery {
    entries: Vec<GalleryEntry>,
    // unit-normalized copies, parallel to `entries`
    unit: Vec<Vec<Vec<f64>>>,
    dim: usize,
}

impl Gallery {
    pub fn new(entries: Vec<GalleryEntry>) -> Result<Self> {
        let dim = entries
            .iter()
            .flat_map(|e| e.embeddings.first())
            .map(Vec::len)
            .next()
            .unwrap_or(0);
        let mut seen = std::collections::HashSet::new();
        let mut unit = Vec::with_capacity(entries.len());
        for entry in &entries {
            if !seen.insert(entry.name.as_str()) {
                return Err(Error::Gallery(format!("duplicate name `{}`", entry.name)));
            }
            if entry.embeddings.is_empty() {
                return Err(Error::Gallery(format!("`{}` has no embeddings", entry.name)));
            }
            let mut normalized = Vec::with_capacity(entry.embeddings.len());
            for e in &entry.embeddings {
                if e.len() != dim || dim == 0 {
                    return Err(Error::Gallery(format!(
                        "`{}`: embedding of length {} (gallery dimension {dim})",
                        entry.name,
                        e.len()
                    )));
                }
                let n = norm(e);
                if !n.is_finite() {
                    return Err(Error::Gallery(format!("`{}`: non-finite embedding", entry.name)));
                }
                if n == 0.0 {
                    return Err(Error::Gallery(format!("`{}`: zero embedding", entry.name)));
                }
                normalized.push(e.iter().map(|v| v / n).collect());
            }
            unit.push(normalized);
        }
        Ok(Gallery { entries, unit, dim })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<GalleryEntry> =
            serde_json::from_str(&text).map_err(|e| json_error(&path.display().to_string(), e))?;
        Gallery::new(entries)
    }

    pub fn embedding_dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[GalleryEntry] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Best-scoring entry index and its scaled similarity. Ties keep the
    /// earlier entry.
    pub fn best(&self, query: &[f64], scale: SimilarityScale) -> Result<Option<(usize, f64)>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let n = norm(query);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroVector);
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, embeddings) in self.unit.iter().enumerate() {
            let cos = embeddings
                .iter()
                .map(|u| dot(u, query) / n)
                .fold(f64::NEG_INFINITY, f64::max);
            let sim = scale.apply(cos);
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((i, sim));
            }
        }
        Ok(best)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Match one embedding against the gallery. Returns the best identity when
/// its similarity reaches the threshold.
pub fn match_face(embedding: &[f64], gallery: &Gallery, config: &MatchConfig) -> Result<Option<Match>> {
    Ok(gallery
        .best(embedding, config.scale)?
        .filter(|&(_, sim)| sim >= config.threshold)
        .map(|(i, similarity)| Match {
            name: gallery.entries[i].name.clone(),
            similarity,
        }))
}

/// Resolve every face that carries an embedding. Faces without an embedding
/// are left as they are.
pub fn resolve_all(records: &[ImageRecord], gallery: &Gallery, config: &MatchConfig) -> Result<Vec<ImageRecord>> {
    records
        .iter()
        .map(|record| {
            let mut record = record.clone();
            for (index, face) in record.faces.iter_mut().enumerate() {
                let Some(embedding) = &face.embedding else {
                    continue;
                };
                let best = gallery
                    .best(embedding, config.scale)
                    .map_err(|e| e.in_image(&record.id, Some(index)))?;
                face.identity = None;
                face.similarity = best.map(|(_, s)| s);
                if let Some((i, sim)) = best {
                    if sim >= config.threshold {
                        face.identity = Some(gallery.entries[i].name.clone());
                    }
                }
            }
            Ok(record)
        })
        .collect()
}

/// Drop identities whose similarity falls below `threshold`, including
/// identities that came pre-resolved in the manifest.
pub fn gate_identities(records: &mut [ImageRecord], threshold: f64) {
    for face in records.iter_mut().flat_map(|r| r.faces.iter_mut()) {
        if face.identity_at(threshold).is_none() {
            face.identity = None;
        }
    }
}

/// Per-image faces file: `{ "<image id>": [face, ...], ... }`.
pub fn load_faces(path: &Path) -> Result<BTreeMap<String, Vec<FaceObservation>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_error(&path.display().to_string(), e))
}

/// Replace the faces of the named records. Unknown ids are an error.
pub fn attach_faces(records: &mut [ImageRecord], faces: BTreeMap<String, Vec<FaceObservation>>) -> Result<()> {
    let mut faces = faces;
    for record in records.iter_mut() {
        if let Some(f) = faces.remove(&record.id) {
            record.faces = f;
            record.validate()?;
        }
    }
    if !faces.is_empty() {
        let orphans: Vec<_> = faces.into_keys().collect();
        return Err(Error::Alignment(format!(
            "faces file names unknown images: {}",
            orphans.join(", ")
        )));
    }
    Ok(())
}

/// What the remote service is asked to identify.
#[derive(Debug, Clone, PartialEq)]
pub struct CropRef {
    pub image_id: String,
    pub face_index: usize,
    pub bbox: BBox,
}

/// Outcome reported by a backend: `Ok(None)` means "no match", which is
/// distinct from the service failing.
pub type BackendVerdict = std::result::Result<Option<(String, f64)>, String>;

/// A remote identification service. Implementations must be callable from
/// several workers at once.
pub trait IdentificationBackend: Send + Sync {
    fn identify(&self, crop: &CropRef) -> BackendVerdict;
}

/// Ask a backend to identify a crop, applying the same similarity gate as
/// [`match_face`].
pub fn remote_identify(
    crop: &CropRef,
    backend: &dyn IdentificationBackend,
    threshold: f64,
) -> Result<Option<Match>> {
    match backend.identify(crop) {
        Ok(Some((name, similarity))) if similarity >= threshold => Ok(Some(Match { name, similarity })),
        Ok(_) => Ok(None),
        Err(reason) => Err(Error::BackendUnavailable(reason)),
    }
}

/// Resolve every face through a remote backend. A failing call leaves that
/// face unresolved and is reported; the rest of the corpus continues.
pub fn resolve_remote(
    records: &[ImageRecord],
    backend: &dyn IdentificationBackend,
    threshold: f64,
) -> (Vec<ImageRecord>, Vec<Error>) {
    let mut failures = Vec::new();
    let resolved = records
        .iter()
        .map(|record| {
            let mut record = record.clone();
            for (index, face) in record.faces.iter_mut().enumerate() {
                let crop = CropRef {
                    image_id: record.id.clone(),
                    face_index: index,
                    bbox: face.bbox,
                };
                match remote_identify(&crop, backend, threshold) {
                    Ok(m) => {
                        face.similarity = m.as_ref().map(|m| m.similarity);
                        face.identity = m.map(|m| m.name);
                    }
                    Err(e) => {
                        face.identity = None;
                        face.similarity = None;
                        failures.push(e.in_image(&record.id, Some(index)));
                    }
                }
            }
            record
        })
        .collect();
    (resolved, failures)
}

/// Canned backend for tests and offline runs: verdicts keyed by
/// `(image id, face index)`; anything else is "no match".
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    verdicts: BTreeMap<(String, usize), BackendVerdict>,
}

impl FixtureBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, image_id: &str, face_index: usize, verdict: BackendVerdict) -> Self {
        self.verdicts.insert((image_id.to_string(), face_index), verdict);
        self
    }
}

impl IdentificationBackend for FixtureBackend {
    fn identify(&self, crop: &CropRef) -> BackendVerdict {
        self.verdicts
            .get(&(crop.image_id.clone(), crop.face_index))
            .cloned()
            .unwrap_or(Ok(None))
    }
}
