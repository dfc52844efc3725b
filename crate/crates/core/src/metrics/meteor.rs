use std::collections::HashMap;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

use super::{require_pairs, ScoredPair};
use crate::error::Result;

// Search nodes explored before settling for the best alignment found so far.
const NODE_BUDGET: usize = 200_000;

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

pub(crate) fn stem(word: &str) -> String {
    stemmer().stem(word).into_owned()
}

/// Unigram alignment between a candidate and a reference.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Alignment {
    /// (candidate index, reference index), ascending by candidate index.
    pub pairs: Vec<(usize, usize)>,
    /// How many of the pairs are exact (not stem-only) matches.
    pub exact: usize,
    /// Runs of pairs adjacent in both candidate and reference.
    pub chunks: usize,
}

impl Alignment {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }
}

fn intern<'a>(items: impl Iterator<Item = &'a str>, table: &mut HashMap<&'a str, usize>) -> Vec<usize> {
    items
        .map(|s| {
            let n = table.len();
            *table.entry(s).or_insert(n)
        })
        .collect()
}

/// (hypothesis index, reference index, exact match)
type Link = (usize, usize, bool);

struct Search {
    ctype: Vec<usize>,
    cclass: Vec<usize>,
    rtype: Vec<usize>,
    rclass: Vec<usize>,
    // occurrences of the same type/class at positions >= i, including i
    rest_type: Vec<usize>,
    rest_class: Vec<usize>,
    exact_target: Vec<usize>,
    class_target: Vec<usize>,
    done_type: Vec<usize>,
    done_class: Vec<usize>,
    ref_free_type: Vec<usize>,
    used: Vec<bool>,
    path: Vec<Link>,
    best: Option<(usize, Vec<Link>)>,
    nodes: usize,
}

impl Search {
    fn dfs(&mut self, i: usize, prev: Option<usize>, chunks: usize) {
        if let Some((best, _)) = &self.best {
            if chunks >= *best || self.nodes >= NODE_BUDGET {
                return;
            }
        }
        self.nodes += 1;
        if i == self.ctype.len() {
            let complete = self.done_type == self.exact_target && self.done_class == self.class_target;
            if complete {
                self.best = Some((chunks, self.path.clone()));
            }
            return;
        }
        let (t, s) = (self.ctype[i], self.cclass[i]);
        let type_left = self.rest_type[i] - 1;
        let class_left = self.rest_class[i] - 1;

        let mut options: Vec<usize> = (0..self.rtype.len())
            .filter(|&j| !self.used[j] && self.rclass[j] == s)
            .collect();
        // continue the current chunk first, exact before stem
        let next = prev.map(|p| p + 1);
        options.sort_by_key(|&j| (Some(j) != next, self.rtype[j] != t, j));

        for j in options {
            let u = self.rtype[j];
            let exact = u == t;
            if exact {
                if self.done_type[t] >= self.exact_target[t] {
                    continue;
                }
            } else {
                if self.done_class[s] >= self.class_target[s]
                    || self.exact_target[t] - self.done_type[t] > type_left
                    || self.ref_free_type[u] - 1 < self.exact_target[u] - self.done_type[u]
                {
                    continue;
                }
            }
            self.used[j] = true;
            self.ref_free_type[u] -= 1;
            self.done_class[s] += 1;
            if exact {
                self.done_type[t] += 1;
            }
            self.path.push((i, j, exact));
            let extends = prev.is_some() && next == Some(j);
            self.dfs(i + 1, Some(j), chunks + usize::from(!extends));
            self.path.pop();
            if exact {
                self.done_type[t] -= 1;
            }
            self.done_class[s] -= 1;
            self.ref_free_type[u] += 1;
            self.used[j] = false;
        }

        if self.exact_target[t] - self.done_type[t] <= type_left
            && self.class_target[s] - self.done_class[s] <= class_left
        {
            self.dfs(i + 1, None, chunks);
        }
    }
}

/// Align candidate and reference unigrams: as many matches as possible,
/// exact matches preferred over stem matches, then the fewest chunks.
pub fn align(candidate: &[String], reference: &[String]) -> Alignment {
    let cstem: Vec<String> = candidate.iter().map(|w| stem(w)).collect();
    let rstem: Vec<String> = reference.iter().map(|w| stem(w)).collect();
    let mut types = HashMap::new();
    let ctype = intern(candidate.iter().map(String::as_str), &mut types);
    let rtype = intern(reference.iter().map(String::as_str), &mut types);
    let mut classes = HashMap::new();
    let cclass = intern(cstem.iter().map(String::as_str), &mut classes);
    let rclass = intern(rstem.iter().map(String::as_str), &mut classes);

    let count = |ids: &[usize], n: usize| {
        let mut c = vec![0usize; n];
        for &x in ids {
            c[x] += 1;
        }
        c
    };
    let (nt, nc) = (types.len(), classes.len());
    let (ct, rt) = (count(&ctype, nt), count(&rtype, nt));
    let (cc, rc) = (count(&cclass, nc), count(&rclass, nc));
    let exact_target: Vec<usize> = ct.iter().zip(&rt).map(|(a, b)| *a.min(b)).collect();
    let class_target: Vec<usize> = cc.iter().zip(&rc).map(|(a, b)| *a.min(b)).collect();

    let suffix = |ids: &[usize], n: usize| {
        let mut seen = vec![0usize; n];
        let mut out = vec![0usize; ids.len()];
        for k in (0..ids.len()).rev() {
            seen[ids[k]] += 1;
            out[k] = seen[ids[k]];
        }
        out
    };

    let mut search = Search {
        rest_type: suffix(&ctype, nt),
        rest_class: suffix(&cclass, nc),
        ctype,
        cclass,
        rtype,
        rclass,
        exact_target,
        class_target,
        done_type: vec![0; nt],
        done_class: vec![0; nc],
        ref_free_type: rt,
        used: vec![false; reference.len()],
        path: Vec::new(),
        best: None,
        nodes: 0,
    };
    search.dfs(0, None, 0);
    let (chunks, path) = search.best.expect("a maximal alignment always exists");
    Alignment {
        exact: path.iter().filter(|p| p.2).count(),
        pairs: path.into_iter().map(|(i, j, _)| (i, j)).collect(),
        chunks,
    }
}

fn score_alignment(a: &Alignment, cand_len: usize, ref_len: usize) -> f64 {
    let m = a.matches() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let p = m / cand_len as f64;
    let r = m / ref_len as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (a.chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

/// METEOR of one pair against its best reference.
pub fn meteor_pair(pair: &ScoredPair) -> f64 {
    pair.references
        .iter()
        .map(|r| score_alignment(&align(&pair.candidate, r), pair.candidate.len(), r.len()))
        .fold(0.0, f64::max)
}

/// Mean METEOR over the corpus.
pub fn meteor(pairs: &[ScoredPair]) -> Result<f64> {
    require_pairs("meteor", pairs)?;
    Ok(pairs.iter().map(meteor_pair).sum::<f64>() / pairs.len() as f64)
}
