//! Insert identified people's names into image captions where per-word
//! attention maps ground them, and score the captions with BLEU, ROUGE-L,
//! CIDEr-D and METEOR.
//!
//! All model outputs are consumed as files: base captions, attention maps,
//! face boxes and embeddings. The flow for one image is
//!
//! 1. resolve faces against an embedding [`Gallery`],
//! 2. find person words in the caption ([`detect_candidates`]),
//! 3. score each (word, face) pair by how much of the face box the word's
//!    activated attention area covers ([`overlap_ratio`]) and keep pairs at
//!    or above Θ ([`assign_faces`]),
//! 4. rewrite the caption ([`apply_merge`]).
//!
//! [`pipeline`] runs this over a whole manifest.

pub mod corpus;
pub mod error;
pub mod identity;
pub mod merge;
pub mod metrics;
pub mod pipeline;
pub mod saliency;

pub use corpus::{
    extract_names, load_manifest, person_count_histogram, split_first_sentence, Abbreviations, ImageRecord,
    NameDictionary, NameMatch, Span,
};
pub use error::{Error, Result};
pub use identity::{
    match_face, remote_identify, resolve_all, BBox, FaceObservation, Gallery, GalleryEntry, IdentificationBackend,
    Match, MatchConfig, SimilarityScale,
};
pub use merge::{
    apply_merge, assign_faces, detect_candidates, enhance, Assignment, CandidateKind, CandidateToken,
    ComplexRewriter, IdentifiedFace, Lexicon, MergeConfig, MergePlan, Rule, ThetaGate,
};
pub use metrics::{bleu, cider, meteor, relative_improvement, rouge_l, CorpusScores, Metric, ScoredPair};
pub use pipeline::{InsertionStats, RefField, RunConfig};
pub use saliency::{
    binarize, bbox_to_grid, overlap_ratio, ActivationMask, AttentionIndex, AttentionMap, GridRect, ImageMaps,
    OverlapDenominator,
};
