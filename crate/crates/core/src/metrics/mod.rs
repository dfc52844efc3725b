//! Corpus-level caption metrics: BLEU, ROUGE-L, CIDEr-D and a METEOR
//! variant with exact and stem matching.

mod bleu;
mod cider;
mod meteor;
mod rouge;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu, bleu_breakdown, sentence_bleu, BleuBreakdown, BLEU_EPSILON};
pub use cider::{cider, CiderScorer, CIDER_SIGMA};
pub use meteor::{align, meteor, meteor_pair, Alignment};
pub use rouge::{lcs_len, rouge_l, rouge_l_pair};

use crate::error::{Error, Result};

/// Lowercase, drop apostrophes, turn other punctuation into spaces, split
/// on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| !matches!(c, '\'' | '\u{2019}'))
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_lowercase).collect()
}

/// A candidate caption with its references, already tokenized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl ScoredPair {
    pub fn new(candidate: Vec<String>, references: Vec<Vec<String>>) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::Metric {
                metric: "pair",
                message: "at least one reference is required".into(),
            });
        }
        Ok(ScoredPair { candidate, references })
    }

    /// Tokenize raw strings with [`tokenize`].
    pub fn from_text<S: AsRef<str>>(candidate: &str, references: &[S]) -> Result<Self> {
        ScoredPair::new(
            tokenize(candidate),
            references.iter().map(|r| tokenize(r.as_ref())).collect(),
        )
    }
}

pub(crate) fn require_pairs(metric: &'static str, pairs: &[ScoredPair]) -> Result<()> {
    if pairs.is_empty() {
        Err(Error::Metric {
            metric,
            message: "empty corpus".into(),
        })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bleu,
    Rouge,
    Cider,
    Meteor,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Bleu, Metric::Rouge, Metric::Cider, Metric::Meteor];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Bleu => "bleu",
            Metric::Rouge => "rouge",
            Metric::Cider => "cider",
            Metric::Meteor => "meteor",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "bleu" => Ok(Metric::Bleu),
            "rouge" | "rouge-l" | "rouge_l" => Ok(Metric::Rouge),
            "cider" | "cider-d" => Ok(Metric::Cider),
            "meteor" => Ok(Metric::Meteor),
            other => Err(Error::parameter("metrics", format!("unknown metric `{other}`"))),
        }
    }
}

/// Corpus scores for the selected metrics. BLEU is reported in `[0, 1]`
/// and as `bleu_100`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusScores {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu_100: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cider: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meteor: Option<f64>,
    pub count: usize,
}

impl CorpusScores {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Bleu => self.bleu,
            Metric::Rouge => self.rouge_l,
            Metric::Cider => self.cider,
            Metric::Meteor => self.meteor,
        }
    }
}

/// Per-pair scores for the report breakdown.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairScores {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cider: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meteor: Option<f64>,
}

/// Score a corpus on the selected metrics, with a per-pair breakdown.
/// Per-pair BLEU is sentence-level BLEU.
pub fn score_corpus(pairs: &[ScoredPair], metrics: &[Metric]) -> Result<(CorpusScores, Vec<PairScores>)> {
    let mut scores = CorpusScores {
        count: pairs.len(),
        ..Default::default()
    };
    let mut per_pair = vec![PairScores::default(); pairs.len()];
    for metric in metrics {
        match metric {
            Metric::Bleu => {
                let b = bleu(pairs, 4)?;
                scores.bleu = Some(b);
                scores.bleu_100 = Some(100.0 * b);
                for (p, s) in pairs.iter().zip(per_pair.iter_mut()) {
                    s.bleu = Some(sentence_bleu(p, 4));
                }
            }
            Metric::Rouge => {
                scores.rouge_l = Some(rouge_l(pairs)?);
                for (p, s) in pairs.iter().zip(per_pair.iter_mut()) {
                    s.rouge_l = Some(rouge_l_pair(p));
                }
            }
            Metric::Cider => {
                let scorer = CiderScorer::new(pairs)?;
                let each = scorer.score_all(pairs);
                scores.cider = Some(each.iter().sum::<f64>() / each.len() as f64);
                for (v, s) in each.into_iter().zip(per_pair.iter_mut()) {
                    s.cider = Some(v);
                }
            }
            Metric::Meteor => {
                scores.meteor = Some(meteor(pairs)?);
                for (p, s) in pairs.iter().zip(per_pair.iter_mut()) {
                    s.meteor = Some(meteor_pair(p));
                }
            }
        }
    }
    Ok((scores, per_pair))
}

/// Percentage change from `before` to `after`.
pub fn relative_improvement(before: f64, after: f64) -> Result<f64> {
    if before.is_nan() || before <= 0.0 {
        return Err(Error::parameter("before", format!("{before} must be positive")));
    }
    Ok(100.0 * (after - before) / before)
}
