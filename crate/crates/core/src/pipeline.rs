//! Batch runs: load inputs, resolve identities, enhance captions, score them
//! and summarize the corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::corpus::{
    load_manifest, person_count_histogram, split_first_sentence, Abbreviations, ImageRecord,
    NameDictionary,
};
use crate::error::{Error, Result};
use crate::identity::{
    attach_faces, gate_identities, load_faces, match_face, resolve_all, Gallery, MatchConfig,
    SimilarityScale,
};
use crate::merge::{enhance, identified_faces, ComplexRewriter, MergeConfig, MergePlan};
use crate::metrics::{relative_improvement, score_corpus, CorpusScores, Metric, PairScores, ScoredPair};
use crate::saliency::AttentionIndex;

/// Which manifest caption serves as the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefField {
    /// `first_sentence`, or the first sentence of `description` when absent.
    #[default]
    FirstSentence,
    /// `synthetic_caption`; records without one are left out.
    Synthetic,
}

impl std::str::FromStr for RefField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-sentence" | "first_sentence" => Ok(RefField::FirstSentence),
            "synthetic" | "synthetic_caption" => Ok(RefField::Synthetic),
            other => Err(Error::parameter("ref-field", format!("unknown field `{other}`"))),
        }
    }
}

/// Everything a run needs. Loadable from TOML; unset paths are simply not
/// used, and each run checks the ones it requires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    /// Base captions, one JSON object `{"id", "caption"}` per line.
    pub captions: Option<PathBuf>,
    pub attention_index: Option<PathBuf>,
    pub faces: Option<PathBuf>,
    pub gallery: Option<PathBuf>,
    /// Extra names/aliases for caption name matching.
    pub names: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub output: Option<PathBuf>,
    #[serde(flatten)]
    pub merge: MergeConfig,
    pub similarity_scale: SimilarityScale,
    pub metrics: Vec<Metric>,
    pub ref_field: RefField,
    pub jobs: usize,
    /// Added to the default abbreviation list used for sentence splitting.
    pub abbreviations: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            captions: None,
            attention_index: None,
            faces: None,
            gallery: None,
            names: None,
            predictions: None,
            output: None,
            merge: MergeConfig::default(),
            similarity_scale: SimilarityScale::Mapped,
            metrics: Metric::ALL.to_vec(),
            ref_field: RefField::FirstSentence,
            jobs: 1,
            abbreviations: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            origin: "config".into(),
            line: None,
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                origin: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }

    /// Check thresholds and that every configured input exists.
    pub fn validate(&self) -> Result<()> {
        self.merge.validate()?;
        if self.jobs == 0 {
            return Err(Error::parameter("jobs", "must be at least 1"));
        }
        let inputs = [
            &self.manifest,
            &self.captions,
            &self.attention_index,
            &self.faces,
            &self.gallery,
            &self.names,
            &self.predictions,
        ];
        for path in inputs.into_iter().flatten() {
            if !path.is_file() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Ok(())
    }

    fn require<'a>(&self, path: &'a Option<PathBuf>, name: &'static str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::parameter(name, "required for this command"))
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            threshold: self.merge.sim_threshold,
            scale: self.similarity_scale,
        }
    }

    pub fn abbreviation_list(&self) -> Abbreviations {
        let mut a = Abbreviations::default();
        a.extend(self.abbreviations.iter().cloned());
        a
    }
}

/// Manifest with faces attached, resolved against the gallery (if any) and
/// gated at the similarity threshold.
pub fn load_records(config: &RunConfig) -> Result<(Vec<ImageRecord>, Option<Gallery>)> {
    let mut records = load_manifest(config.require(&config.manifest, "manifest")?)?;
    if let Some(path) = &config.faces {
        attach_faces(&mut records, load_faces(path)?)?;
    }
    let gallery = config.gallery.as_deref().map(Gallery::load).transpose()?;
    if let Some(g) = &gallery {
        records = resolve_all(&records, g, &config.match_config())?;
    }
    gate_identities(&mut records, config.merge.sim_threshold);
    Ok((records, gallery))
}

/// Names recognized in captions: the gallery, every identity and
/// ground-truth name in the corpus, and the optional names file.
pub fn build_names(config: &RunConfig, records: &[ImageRecord], gallery: Option<&Gallery>) -> Result<NameDictionary> {
    let mut dict = match &config.names {
        Some(p) => NameDictionary::load(p)?,
        None => NameDictionary::default(),
    };
    if let Some(g) = gallery {
        dict.extend_names(g.names());
    }
    dict.extend_names(records.iter().flat_map(|r| {
        r.faces
            .iter()
            .filter_map(|f| f.identity.as_deref())
            .chain(r.ground_truth_names.iter().map(String::as_str))
    }));
    Ok(dict)
}

#[derive(Deserialize)]
struct CaptionLine {
    id: String,
    caption: String,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

fn line_error(path: &Path, line: usize, message: impl fmt::Display) -> Error {
    Error::Parse {
        origin: path.display().to_string(),
        line: Some(line),
        message: message.to_string(),
    }
}

/// Base captions keyed by image id.
pub fn load_captions(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in read_lines(path)? {
        let c: CaptionLine = serde_json::from_str(&line).map_err(|e| line_error(path, n, e))?;
        if out.insert(c.id.clone(), c.caption).is_some() {
            return Err(line_error(path, n, format!("duplicate id `{}`", c.id)));
        }
    }
    Ok(out)
}

fn round_half_up(x: f64, decimals: i32) -> f64 {
    let k = 10f64.powi(decimals);
    ((x * k) + 0.5 + 1e-9).floor() / k
}

fn serialize_2dp<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_half_up(*v, 2))
}

/// Share of identified persons whose names made it into captions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct InsertionStats {
    pub persons_detected: usize,
    pub persons_inserted: usize,
    pub unique_images_with_identifications: usize,
    /// Unrounded; serialized and displayed at 2 decimals.
    #[serde(serialize_with = "serialize_2dp")]
    pub percent_inserted: f64,
}

impl InsertionStats {
    pub fn from_counts(detected: usize, inserted: usize, unique_images: usize) -> Self {
        InsertionStats {
            persons_detected: detected,
            persons_inserted: inserted,
            unique_images_with_identifications: unique_images,
            percent_inserted: if detected > 0 {
                100.0 * inserted as f64 / detected as f64
            } else {
                0.0
            },
        }
    }
}

impl fmt::Display for InsertionStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} of {} identified persons inserted ({:.2}%) over {} images",
            self.persons_inserted,
            self.persons_detected,
            round_half_up(self.percent_inserted, 2),
            self.unique_images_with_identifications
        )
    }
}

/// One line of the enhanced-caption output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnhancedRecord {
    #[serde(flatten)]
    pub plan: MergePlan,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_rewrite: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub persons_detected: usize,
}

/// Enhance every record with a pool of `jobs` workers. Output is sorted by
/// image id; per-image failures become warnings on that image only.
pub fn enhance_corpus(
    records: &[ImageRecord],
    captions: &BTreeMap<String, String>,
    index: &AttentionIndex,
    names: &NameDictionary,
    config: &MergeConfig,
    jobs: usize,
    rewriter: Option<&dyn ComplexRewriter>,
) -> Result<Vec<EnhancedRecord>> {
    let manifest_ids: BTreeSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let missing: Vec<&str> = manifest_ids
        .iter()
        .copied()
        .filter(|id| !captions.contains_key(*id))
        .collect();
    let extra: Vec<&str> = captions
        .keys()
        .map(String::as_str)
        .filter(|id| !manifest_ids.contains(id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Alignment(format!(
            "images without captions: [{}]; captions for unknown images: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let mut out: Vec<EnhancedRecord> = pool.install(|| {
        records
            .par_iter()
            .map(|record| enhance_one(record, &captions[&record.id], index, names, config, rewriter))
            .collect()
    });
    out.sort_by(|a, b| a.plan.image_id.cmp(&b.plan.image_id));
    Ok(out)
}

fn enhance_one(
    record: &ImageRecord,
    caption: &str,
    index: &AttentionIndex,
    names: &NameDictionary,
    config: &MergeConfig,
    rewriter: Option<&dyn ComplexRewriter>,
) -> EnhancedRecord {
    let persons_detected = identified_faces(record, config.sim_threshold).len();
    let mut warnings = Vec::new();
    let pass_through = |warnings: Vec<String>| EnhancedRecord {
        plan: MergePlan::unchanged(&record.id, caption, Vec::new()),
        external_rewrite: None,
        warnings,
        persons_detected,
    };
    if persons_detected > 0 && !index.has_image(&record.id) {
        warnings.push("no attention maps indexed for this image".to_string());
        log::warn!("{}: no attention maps indexed", record.id);
        return pass_through(warnings);
    }
    let result = index
        .load_image(&record.id)
        .map_err(|e| e.in_image(&record.id, None))
        .and_then(|maps| enhance(record, caption, &maps, names, config));
    match result {
        Ok(plan) => {
            let external_rewrite = match rewriter {
                Some(r) if plan.complex => r.rewrite(caption, &plan.routed_names),
                _ => None,
            };
            EnhancedRecord {
                plan,
                external_rewrite,
                warnings,
                persons_detected,
            }
        }
        Err(e) => {
            log::warn!("{e}");
            warnings.push(e.to_string());
            pass_through(warnings)
        }
    }
}

pub fn insertion_stats(records: &[ImageRecord], enhanced: &[EnhancedRecord], sim_threshold: f64) -> InsertionStats {
    let detected = enhanced.iter().map(|e| e.persons_detected).sum();
    let inserted = enhanced.iter().map(|e| e.plan.inserted_count()).sum();
    let unique = records
        .iter()
        .filter(|r| !identified_faces(r, sim_threshold).is_empty())
        .count();
    InsertionStats::from_counts(detected, inserted, unique)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| Error::Internal(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug)]
pub struct EnhanceOutcome {
    pub records: Vec<EnhancedRecord>,
    pub stats: InsertionStats,
}

/// Load everything, enhance the corpus and write the JSONL output if an
/// output path is configured.
pub fn run_enhance(config: &RunConfig, rewriter: Option<&dyn ComplexRewriter>) -> Result<EnhanceOutcome> {
    config.validate()?;
    let (records, gallery) = load_records(config)?;
    let captions = load_captions(config.require(&config.captions, "captions")?)?;
    let index = AttentionIndex::load(config.require(&config.attention_index, "attention-index")?)?;
    let names = build_names(config, &records, gallery.as_ref())?;
    let enhanced = enhance_corpus(&records, &captions, &index, &names, &config.merge, config.jobs, rewriter)?;
    let stats = insertion_stats(&records, &enhanced, config.merge.sim_threshold);
    if let Some(out) = &config.output {
        write_jsonl(out, &enhanced)?;
    }
    Ok(EnhanceOutcome {
        records: enhanced,
        stats,
    })
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    id: String,
    #[serde(default)]
    caption: Option<String>,
    #[serde(default)]
    base_caption: Option<String>,
    #[serde(default)]
    enhanced_caption: Option<String>,
}

/// A prediction: the base caption and, when present, its enhanced version.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub base: String,
    pub enhanced: Option<String>,
}

/// Read predictions: lines of `{"id", "caption"}` or enhance output
/// (`{"id", "base_caption", "enhanced_caption", ...}`).
pub fn load_predictions(path: &Path) -> Result<BTreeMap<String, Prediction>> {
    let mut out = BTreeMap::new();
    for (n, line) in read_lines(path)? {
        let p: PredictionLine = serde_json::from_str(&line).map_err(|e| line_error(path, n, e))?;
        let base = p
            .base_caption
            .or(p.caption)
            .ok_or_else(|| line_error(path, n, "expected `caption` or `base_caption`"))?;
        if out.contains_key(&p.id) {
            return Err(line_error(path, n, format!("duplicate id `{}`", p.id)));
        }
        out.insert(
            p.id,
            Prediction {
                base,
                enhanced: p.enhanced_caption,
            },
        );
    }
    Ok(out)
}

/// Reference text of a record for the chosen field.
pub fn reference_for(record: &ImageRecord, field: RefField, abbreviations: &Abbreviations) -> Option<String> {
    match field {
        RefField::Synthetic => record.synthetic_caption.clone(),
        RefField::FirstSentence => record.first_sentence.clone().or_else(|| {
            split_first_sentence(&record.description, abbreviations)
                .ok()
                .map(|s| s.text.to_string())
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub id: String,
    pub base: PairScores,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enhanced: Option<PairScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub reference_field: RefField,
    pub pairs: usize,
    /// Records left out because they lack the reference field.
    pub excluded: usize,
    pub base: CorpusScores,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enhanced: Option<CorpusScores>,
    /// Percentage change base -> enhanced, per metric.
    pub improvement: BTreeMap<String, f64>,
    pub per_pair: Vec<PairReport>,
}

/// Score predictions against manifest references. Enhanced scores and
/// improvements are included when every prediction has an enhanced caption.
pub fn evaluate(
    records: &[ImageRecord],
    predictions: &BTreeMap<String, Prediction>,
    field: RefField,
    metrics: &[Metric],
    abbreviations: &Abbreviations,
) -> Result<EvaluationReport> {
    let known: BTreeSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let orphans: Vec<&str> = predictions
        .keys()
        .map(String::as_str)
        .filter(|id| !known.contains(id))
        .collect();
    let mut excluded = 0;
    let mut ids = Vec::new();
    let mut references = Vec::new();
    let mut unpredicted = Vec::new();
    for record in records {
        let Some(reference) = reference_for(record, field, abbreviations) else {
            excluded += 1;
            continue;
        };
        if !predictions.contains_key(&record.id) {
            unpredicted.push(record.id.as_str());
            continue;
        }
        ids.push(record.id.clone());
        references.push(reference);
    }
    if !orphans.is_empty() || !unpredicted.is_empty() {
        return Err(Error::Alignment(format!(
            "predictions for unknown images: [{}]; images without predictions: [{}]",
            orphans.join(", "),
            unpredicted.join(", ")
        )));
    }

    let pairs_for = |pick: &dyn Fn(&Prediction) -> Option<String>| -> Option<Result<Vec<ScoredPair>>> {
        ids.iter()
            .zip(&references)
            .map(|(id, r)| pick(&predictions[id]).map(|c| ScoredPair::from_text(&c, &[r])))
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().collect())
    };
    let base_pairs = pairs_for(&|p| Some(p.base.clone())).expect("base always present")?;
    let (base, base_each) = score_corpus(&base_pairs, metrics)?;
    let enhanced = match pairs_for(&|p| p.enhanced.clone()) {
        Some(pairs) if !pairs.as_ref().map_or(true, Vec::is_empty) => Some(score_corpus(&pairs?, metrics)?),
        _ => None,
    };

    let mut improvement = BTreeMap::new();
    if let Some((after, _)) = &enhanced {
        for m in metrics {
            if let (Some(b), Some(a)) = (base.get(*m), after.get(*m)) {
                if b > 0.0 {
                    improvement.insert(m.to_string(), relative_improvement(b, a)?);
                }
            }
        }
    }
    let per_pair = ids
        .iter()
        .enumerate()
        .map(|(i, id)| PairReport {
            id: id.clone(),
            base: base_each[i].clone(),
            enhanced: enhanced.as_ref().map(|(_, each)| each[i].clone()),
        })
        .collect();
    Ok(EvaluationReport {
        reference_field: field,
        pairs: ids.len(),
        excluded,
        base,
        enhanced: enhanced.map(|(s, _)| s),
        improvement,
        per_pair,
    })
}

pub fn run_evaluate(config: &RunConfig) -> Result<EvaluationReport> {
    config.validate()?;
    let records = load_manifest(config.require(&config.manifest, "manifest")?)?;
    let predictions = load_predictions(config.require(&config.predictions, "predictions")?)?;
    let report = evaluate(
        &records,
        &predictions,
        config.ref_field,
        &config.metrics,
        &config.abbreviation_list(),
    )?;
    if let Some(out) = &config.output {
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(out, json + "\n").map_err(|e| Error::io(out, e))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CorpusSummary {
    pub images: usize,
    pub identified_persons: usize,
    pub unique_images_with_identifications: usize,
    /// identified faces per image -> number of images
    pub histogram: BTreeMap<usize, usize>,
}

pub fn corpus_summary(records: &[ImageRecord]) -> CorpusSummary {
    CorpusSummary {
        images: records.len(),
        identified_persons: records.iter().map(ImageRecord::identified_count).sum(),
        unique_images_with_identifications: records.iter().filter(|r| r.identified_count() > 0).count(),
        histogram: person_count_histogram(records),
    }
}

pub fn run_stats(config: &RunConfig) -> Result<CorpusSummary> {
    config.validate()?;
    let (records, _) = load_records(config)?;
    let summary = corpus_summary(&records);
    if let Some(out) = &config.output {
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(out, json + "\n").map_err(|e| Error::io(out, e))?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceMatch {
    pub id: String,
    pub face_index: usize,
    pub identity: Option<String>,
    pub similarity: f64,
}

/// Match every face embedding in the corpus against the gallery.
pub fn run_gallery_match(config: &RunConfig) -> Result<Vec<FaceMatch>> {
    config.validate()?;
    let mut records = load_manifest(config.require(&config.manifest, "manifest")?)?;
    if let Some(path) = &config.faces {
        attach_faces(&mut records, load_faces(path)?)?;
    }
    let gallery = Gallery::load(config.require(&config.gallery, "gallery")?)?;
    let cfg = config.match_config();
    let mut out = Vec::new();
    for record in &records {
        for (i, face) in record.faces.iter().enumerate() {
            let Some(e) = &face.embedding else { continue };
            let best = gallery.best(e, cfg.scale).map_err(|e| e.in_image(&record.id, Some(i)))?;
            let matched = match_face(e, &gallery, &cfg).map_err(|e| e.in_image(&record.id, Some(i)))?;
            out.push(FaceMatch {
                id: record.id.clone(),
                face_index: i,
                identity: matched.map(|m| m.name),
                similarity: best.map_or(0.0, |(_, s)| s),
            });
        }
    }
    if let Some(path) = &config.output {
        write_jsonl(path, &out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounding_is_half_up() {
        assert_eq!(round_half_up(93.19727, 2), 93.20);
        assert_eq!(round_half_up(71.955, 2), 71.96);
        assert_eq!(round_half_up(0.125, 2), 0.13);
        let s = InsertionStats::from_counts(13083, 12193, 7820);
        assert_eq!(s.to_string(), "12193 of 13083 identified persons inserted (93.20%) over 7820 images");
        assert_eq!(InsertionStats::from_counts(0, 0, 0).percent_inserted, 0.0);
    }

    #[test]
    fn config_from_toml_with_overrides() {
        let cfg = RunConfig::from_toml(
            r#"
            manifest = "m.json"
            theta = 0.1
            alpha = 0.4
            sim_threshold = 0.8
            metrics = ["bleu", "rouge"]
            ref_field = "synthetic"
            jobs = 4
            "#,
        )
        .unwrap();
        assert_eq!(cfg.merge.theta, 0.1);
        assert_eq!(cfg.merge.alpha, 0.4);
        assert_eq!(cfg.metrics, [Metric::Bleu, Metric::Rouge]);
        assert_eq!(cfg.ref_field, RefField::Synthetic);
        assert_eq!(cfg.jobs, 4);
        let d = RunConfig::default();
        assert_eq!((d.merge.theta, d.merge.alpha, d.merge.sim_threshold), (0.05, 0.5, 0.90));
        assert!(RunConfig { jobs: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn summary_of_empty_corpus() {
        assert_eq!(corpus_summary(&[]), CorpusSummary::default());
    }
}
