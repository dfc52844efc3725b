use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::candidates::{CandidateKind, CandidateToken};
use super::MergeConfig;
use crate::error::Result;
use crate::identity::BBox;
use crate::saliency::{bbox_to_grid, binarize, overlap_counts, AttentionMap, ImageMaps};

/// A face that passed the similarity gate.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedFace {
    /// Index into the record's face list.
    pub index: usize,
    pub name: String,
    pub similarity: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedPair {
    /// Index into [`Assignment::candidates`].
    pub candidate: usize,
    /// Index into the record's face list.
    pub face_index: usize,
    pub name: String,
    pub similarity: f64,
    pub overlap: f64,
    #[serde(skip)]
    pub face_x: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub candidates: Vec<CandidateToken>,
    /// In selection order (descending overlap).
    pub pairs: Vec<AssignedPair>,
    pub trace: Vec<String>,
}

impl Assignment {
    /// Pairs of one candidate, left to right by face position.
    pub fn pairs_for(&self, candidate: usize) -> Vec<&AssignedPair> {
        let mut p: Vec<_> = self.pairs.iter().filter(|p| p.candidate == candidate).collect();
        p.sort_by(|a, b| a.face_x.total_cmp(&b.face_x).then(a.face_index.cmp(&b.face_index)));
        p
    }
}

/// Map used for a candidate plus the faces it may be paired with
/// (`None` means all faces).
struct Grounding<'a> {
    map: &'a AttentionMap,
    only_face: Option<usize>,
}

/// Pair identified faces with candidates.
///
/// Every (candidate, face) pair is scored by the overlap between the
/// candidate's activation mask and the face box; pairs under Θ are dropped
/// and the rest are taken greedily by descending overlap (ties: smaller face
/// x, then earlier candidate). Each face and each name is used once, and a
/// candidate takes at most [`CandidateToken::capacity`] faces. A face whose
/// name already appears in the caption can only go to that mention.
pub fn assign_faces(
    candidates: Vec<CandidateToken>,
    faces: &[IdentifiedFace],
    maps: &ImageMaps,
    image: (u32, u32),
    config: &MergeConfig,
) -> Result<Assignment> {
    let mut trace = Vec::new();
    let mentioned: BTreeSet<&str> = candidates.iter().filter_map(|c| c.associated_name()).collect();

    let mut scored: Vec<AssignedPair> = Vec::new();
    for (ci, cand) in candidates.iter().enumerate() {
        let Some(grounding) = ground(cand, faces, maps, image, config, &mut trace)? else {
            trace.push(format!("skip `{}`: no attention map", cand.surface));
            continue;
        };
        let mask = binarize(grounding.map, config.alpha)?;
        for (fi, face) in faces.iter().enumerate() {
            if grounding.only_face.is_some_and(|only| only != fi) {
                continue;
            }
            if mentioned.contains(face.name.as_str()) && cand.associated_name() != Some(face.name.as_str()) {
                continue;
            }
            let rect = bbox_to_grid(&face.bbox, image, (mask.height(), mask.width()))?;
            let overlap = overlap_counts(&mask, &rect, config.denominator)?.ratio();
            if !config.passes_theta(overlap) {
                trace.push(format!(
                    "`{}` x {}: overlap {overlap:.4} below theta {}",
                    cand.surface, face.name, config.theta
                ));
                continue;
            }
            scored.push(AssignedPair {
                candidate: ci,
                face_index: face.index,
                name: face.name.clone(),
                similarity: face.similarity,
                overlap,
                face_x: face.bbox.x,
            });
        }
    }

    scored.sort_by(|a, b| {
        b.overlap
            .total_cmp(&a.overlap)
            .then(a.face_x.total_cmp(&b.face_x))
            .then(candidates[a.candidate].span.start.cmp(&candidates[b.candidate].span.start))
            .then(a.face_index.cmp(&b.face_index))
            .then(a.candidate.cmp(&b.candidate))
    });

    let mut used_faces = BTreeSet::new();
    let mut used_names = BTreeSet::new();
    let mut load: BTreeMap<usize, usize> = BTreeMap::new();
    let mut pairs = Vec::new();
    for pair in scored {
        let n = load.entry(pair.candidate).or_insert(0);
        if used_faces.contains(&pair.face_index)
            || used_names.contains(&pair.name)
            || *n >= candidates[pair.candidate].capacity()
        {
            continue;
        }
        *n += 1;
        used_faces.insert(pair.face_index);
        used_names.insert(pair.name.clone());
        trace.push(format!(
            "assign {} -> `{}` (overlap {:.4}, similarity {:.4})",
            pair.name, candidates[pair.candidate].surface, pair.overlap, pair.similarity
        ));
        pairs.push(pair);
    }

    Ok(Assignment {
        candidates,
        pairs,
        trace,
    })
}

fn ground<'a>(
    cand: &CandidateToken,
    faces: &[IdentifiedFace],
    maps: &'a ImageMaps,
    image: (u32, u32),
    config: &MergeConfig,
    trace: &mut Vec<String>,
) -> Result<Option<Grounding<'a>>> {
    if let Some(map) = maps.get(&cand.surface) {
        return Ok(Some(Grounding { map, only_face: None }));
    }
    if !matches!(cand.kind, CandidateKind::ExistingName { .. }) {
        return Ok(None);
    }
    // No map for the name itself: borrow the first person-word map whose
    // peak falls inside a face, and restrict the name to that face.
    for map in maps.iter().filter(|m| config.lexicon.is_person_word(&m.word)) {
        let (row, col) = map.argmax();
        let mut hit: Option<(usize, f64)> = None;
        for (fi, face) in faces.iter().enumerate() {
            let rect = bbox_to_grid(&face.bbox, image, (map.height(), map.width()))?;
            if rect.contains(row, col)
                && hit.is_none_or(|(_, x)| face.bbox.x.partial_cmp(&x) == Some(Ordering::Less))
            {
                hit = Some((fi, face.bbox.x));
            }
        }
        if let Some((fi, _)) = hit {
            trace.push(format!(
                "`{}`: grounded through the `{}` map peak on {}",
                cand.surface, map.word, faces[fi].name
            ));
            return Ok(Some(Grounding { map, only_face: Some(fi) }));
        }
    }
    Ok(None)
}
