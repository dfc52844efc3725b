use std::collections::HashMap;

use super::{require_pairs, ScoredPair};
use crate::error::Result;

/// Numerator used in place of a zero n-gram match count.
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BleuBreakdown {
    /// Modified precision p_n for n = 1..=max_n (smoothed where zero).
    pub precisions: Vec<f64>,
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub candidate_len: u64,
    pub reference_len: u64,
    pub brevity_penalty: f64,
    pub score: f64,
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Reference length closest to the candidate's; the shorter one on ties.
fn closest_ref_len(pair: &ScoredPair) -> u64 {
    let c = pair.candidate.len() as i64;
    pair.references
        .iter()
        .map(|r| r.len() as i64)
        .min_by_key(|&r| ((r - c).abs(), r))
        .unwrap_or(0) as u64
}

/// Clipped matches and totals per order, accumulated over `pairs`.
fn accumulate(pairs: &[ScoredPair], max_n: usize) -> (Vec<u64>, Vec<u64>, u64, u64) {
    let mut matches = vec![0u64; max_n];
    let mut totals = vec![0u64; max_n];
    let (mut c_len, mut r_len) = (0u64, 0u64);
    for pair in pairs {
        c_len += pair.candidate.len() as u64;
        r_len += closest_ref_len(pair);
        for n in 1..=max_n {
            let cand = ngrams(&pair.candidate, n);
            let mut max_ref: HashMap<&[String], u64> = HashMap::new();
            for r in &pair.references {
                for (g, c) in ngrams(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in cand {
                matches[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
                totals[n - 1] += c;
            }
        }
    }
    (matches, totals, c_len, r_len)
}

fn combine(matches: Vec<u64>, totals: Vec<u64>, c_len: u64, r_len: u64) -> BleuBreakdown {
    let mut smoothed = false;
    let precisions: Vec<f64> = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| {
            if m == 0 {
                smoothed = true;
                BLEU_EPSILON / t.max(1) as f64
            } else {
                m as f64 / t as f64
            }
        })
        .collect();
    if smoothed {
        log::warn!("BLEU: zero n-gram precision smoothed with epsilon {BLEU_EPSILON}");
    }
    let brevity_penalty = if c_len == 0 {
        0.0
    } else if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / precisions.len() as f64;
    BleuBreakdown {
        score: brevity_penalty * log_mean.exp(),
        precisions,
        matches,
        totals,
        candidate_len: c_len,
        reference_len: r_len,
        brevity_penalty,
    }
}

/// Corpus BLEU with its components.
pub fn bleu_breakdown(pairs: &[ScoredPair], max_n: usize) -> Result<BleuBreakdown> {
    require_pairs("bleu", pairs)?;
    if max_n == 0 {
        return Err(crate::error::Error::parameter("max_n", "must be at least 1"));
    }
    let (m, t, c, r) = accumulate(pairs, max_n);
    Ok(combine(m, t, c, r))
}

/// Corpus BLEU: clipped n-gram precisions pooled over the corpus, uniform
/// geometric mean, brevity penalty against closest reference lengths.
pub fn bleu(pairs: &[ScoredPair], max_n: usize) -> Result<f64> {
    Ok(bleu_breakdown(pairs, max_n)?.score)
}

/// BLEU of a single pair.
pub fn sentence_bleu(pair: &ScoredPair, max_n: usize) -> f64 {
    let (m, t, c, r) = accumulate(std::slice::from_ref(pair), max_n.max(1));
    combine(m, t, c, r).score
}
