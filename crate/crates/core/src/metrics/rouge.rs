use super::{require_pairs, ScoredPair};
use crate::error::Result;

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

fn f_measure(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(cand, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / cand.len() as f64;
    let r = lcs / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-L F1 against the best reference.
pub fn rouge_l_pair(pair: &ScoredPair) -> f64 {
    if pair.candidate.is_empty() && pair.references.iter().all(Vec::is_empty) {
        log::warn!("ROUGE-L: empty candidate and references scored 0");
    }
    pair.references
        .iter()
        .map(|r| f_measure(&pair.candidate, r))
        .fold(0.0, f64::max)
}

/// Mean ROUGE-L F1 over the corpus.
pub fn rouge_l(pairs: &[ScoredPair]) -> Result<f64> {
    require_pairs("rouge", pairs)?;
    Ok(pairs.iter().map(rouge_l_pair).sum::<f64>() / pairs.len() as f64)
}
