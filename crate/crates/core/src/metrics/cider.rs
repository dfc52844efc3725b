use std::collections::{HashMap, HashSet};

use super::ScoredPair;
use crate::error::{Error, Result};

/// Gaussian length-penalty width.
pub const CIDER_SIGMA: f64 = 6.0;
const MAX_N: usize = 4;

type Gram = Vec<String>;

fn counts(tokens: &[String], n: usize) -> HashMap<Gram, f64> {
    let mut c = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *c.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    c
}

/// TF-IDF vector and its norm for one order.
struct Vector {
    weights: HashMap<Gram, f64>,
    norm: f64,
}

/// CIDEr-D scorer. Document frequencies come from the reference sets of the
/// whole corpus and are fixed at construction; scoring is then per pair.
#[derive(Debug, Clone)]
pub struct CiderScorer {
    df: HashMap<Gram, f64>,
    log_corpus: f64,
    sigma: f64,
}

impl CiderScorer {
    pub fn new(pairs: &[ScoredPair]) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::Metric {
                metric: "cider",
                message: format!(
                    "needs at least 2 pairs to estimate document frequencies, got {}",
                    pairs.len()
                ),
            });
        }
        let mut df: HashMap<Gram, f64> = HashMap::new();
        for pair in pairs {
            let mut seen: HashSet<Gram> = HashSet::new();
            for r in &pair.references {
                for n in 1..=MAX_N {
                    seen.extend(counts(r, n).into_keys());
                }
            }
            for g in seen {
                *df.entry(g).or_insert(0.0) += 1.0;
            }
        }
        Ok(CiderScorer {
            df,
            log_corpus: (pairs.len() as f64).ln(),
            sigma: CIDER_SIGMA,
        })
    }

    fn vector(&self, tokens: &[String], n: usize) -> Vector {
        let mut norm = 0.0;
        let weights: HashMap<Gram, f64> = counts(tokens, n)
            .into_iter()
            .map(|(g, tf)| {
                let df = self.df.get(&g).copied().unwrap_or(0.0).max(1.0);
                let w = tf * (self.log_corpus - df.ln());
                norm += w * w;
                (g, w)
            })
            .collect();
        Vector {
            weights,
            norm: norm.sqrt(),
        }
    }

    fn similarity(&self, hyp: &Vector, reference: &Vector, len_delta: f64) -> f64 {
        let mut val: f64 = hyp
            .weights
            .iter()
            .map(|(g, h)| {
                let r = reference.weights.get(g).copied().unwrap_or(0.0);
                h.min(r) * r
            })
            .sum();
        if hyp.norm != 0.0 && reference.norm != 0.0 {
            val /= hyp.norm * reference.norm;
        }
        val * (-(len_delta * len_delta) / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// CIDEr-D of one pair, on the 0..10 scale.
    pub fn score(&self, pair: &ScoredPair) -> f64 {
        let hyp: Vec<Vector> = (1..=MAX_N).map(|n| self.vector(&pair.candidate, n)).collect();
        let mut total = 0.0;
        for r in &pair.references {
            let delta = pair.candidate.len() as f64 - r.len() as f64;
            for (n, h) in hyp.iter().enumerate() {
                total += self.similarity(h, &self.vector(r, n + 1), delta);
            }
        }
        10.0 * total / (MAX_N as f64 * pair.references.len() as f64)
    }

    pub fn score_all(&self, pairs: &[ScoredPair]) -> Vec<f64> {
        pairs.iter().map(|p| self.score(p)).collect()
    }
}

/// Corpus CIDEr-D: mean of per-pair scores.
pub fn cider(pairs: &[ScoredPair]) -> Result<f64> {
    let scorer = CiderScorer::new(pairs)?;
    Ok(scorer.score_all(pairs).iter().sum::<f64>() / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(c: &str, r: &str) -> ScoredPair {
        ScoredPair::from_text(c, &[r]).unwrap()
    }

    #[test]
    fn identical_pair_disjoint_corpus_scores_ten() {
        let pairs = [
            pair("an astronaut floats in the station", "an astronaut floats in the station"),
            pair("rocket engines fire during testing", "some other words entirely here"),
        ];
        let s = CiderScorer::new(&pairs).unwrap();
        assert!((s.score(&pairs[0]) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn no_shared_ngrams_scores_zero() {
        let pairs = [pair("red blue green", "cat dog bird"), pair("x y z", "u v w")];
        assert_eq!(cider(&pairs).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_is_rejected() {
        assert!(cider(&[pair("a", "a")]).is_err());
    }
}
