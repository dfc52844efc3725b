//! Attention-guided insertion of identified names into a base caption:
//! candidate detection, face assignment, and rule-based rewriting.

mod assign;
mod candidates;
mod lexicon;
mod rewrite;

use serde::{Deserialize, Serialize};

pub use assign::{assign_faces, AssignedPair, Assignment, IdentifiedFace};
pub use candidates::{detect_candidates, CandidateKind, CandidateToken};
pub use lexicon::Lexicon;
pub use rewrite::{apply_merge, Insertion, MergePlan, Rule, Substitution};

use crate::corpus::{ImageRecord, NameDictionary};
use crate::error::{Error, Result};
use crate::identity::MatchConfig;
use crate::saliency::{validate_alpha, ImageMaps, OverlapDenominator};

/// How an overlap is compared with Θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaGate {
    /// overlap ≥ Θ
    #[default]
    Inclusive,
    /// overlap > Θ
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    /// Minimum overlap between a word's activated area and a face box.
    pub theta: f64,
    pub theta_gate: ThetaGate,
    /// Activation level applied to min-max normalized attention maps.
    pub alpha: f64,
    pub sim_threshold: f64,
    pub denominator: OverlapDenominator,
    pub lexicon: Lexicon,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            theta: Self::DEFAULT_THETA,
            theta_gate: ThetaGate::Inclusive,
            alpha: Self::DEFAULT_ALPHA,
            sim_threshold: MatchConfig::DEFAULT_THRESHOLD,
            denominator: OverlapDenominator::BoxArea,
            lexicon: Lexicon::default(),
        }
    }
}

impl MergeConfig {
    pub const DEFAULT_THETA: f64 = 0.05;
    pub const DEFAULT_ALPHA: f64 = 0.5;

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::parameter("theta", format!("{} outside [0, 1]", self.theta)));
        }
        if !(0.0..=1.0).contains(&self.sim_threshold) {
            return Err(Error::parameter(
                "sim-threshold",
                format!("{} outside [0, 1]", self.sim_threshold),
            ));
        }
        validate_alpha(self.alpha)
    }

    pub fn passes_theta(&self, overlap: f64) -> bool {
        match self.theta_gate {
            ThetaGate::Inclusive => overlap >= self.theta,
            ThetaGate::Strict => overlap > self.theta,
        }
    }
}

/// Faces of a record that pass the similarity gate.
pub fn identified_faces(record: &ImageRecord, sim_threshold: f64) -> Vec<IdentifiedFace> {
    record
        .faces
        .iter()
        .enumerate()
        .filter_map(|(index, face)| {
            face.identity_at(sim_threshold).map(|name| IdentifiedFace {
                index,
                name: name.to_string(),
                similarity: face.similarity.unwrap_or_default(),
                bbox: face.bbox,
            })
        })
        .collect()
}

/// Full merge for one image: detect candidates, assign faces, rewrite.
pub fn enhance(
    record: &ImageRecord,
    base_caption: &str,
    maps: &ImageMaps,
    names: &NameDictionary,
    config: &MergeConfig,
) -> Result<MergePlan> {
    let faces = identified_faces(record, config.sim_threshold);
    if faces.is_empty() {
        return Ok(MergePlan::unchanged(
            &record.id,
            base_caption,
            vec!["no identified faces".into()],
        ));
    }
    let candidates = detect_candidates(base_caption, &config.lexicon, names);
    if candidates.is_empty() {
        return Ok(MergePlan::unchanged(
            &record.id,
            base_caption,
            vec!["no candidate words".into()],
        ));
    }
    let assignment = assign_faces(candidates, &faces, maps, (record.width, record.height), config)
        .map_err(|e| e.in_image(&record.id, None))?;
    Ok(apply_merge(&record.id, base_caption, &assignment, &config.lexicon))
}

/// External rewriter for captions the rules flag as complex (for instance a
/// prompted language model). None ships with this crate.
pub trait ComplexRewriter: Send + Sync {
    fn rewrite(&self, caption: &str, names: &[String]) -> Option<String>;
}
