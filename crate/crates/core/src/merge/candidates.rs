use serde::{Deserialize, Serialize};

use super::lexicon::{tokenize, Lexicon};
use crate::corpus::{extract_names, NameDictionary, Span};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CandidateKind {
    GenericSingular,
    GenericPlural,
    /// `two men`: the plural plus the number word in front of it.
    NumeralGroup { count: u32, numeral_span: Span },
    /// A known name already present in the caption.
    ExistingName { name: String },
}

/// A place in the caption where a name could go.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateToken {
    /// Caption text of the head word (or of the whole name).
    pub surface: String,
    /// Character span of the head word (or of the whole name).
    pub span: Span,
    #[serde(flatten)]
    pub kind: CandidateKind,
}

impl CandidateToken {
    pub fn numeral(&self) -> Option<u32> {
        match self.kind {
            CandidateKind::NumeralGroup { count, .. } => Some(count),
            _ => None,
        }
    }

    pub fn associated_name(&self) -> Option<&str> {
        match &self.kind {
            CandidateKind::ExistingName { name } => Some(name),
            _ => None,
        }
    }

    /// Span the candidate occupies, numeral included.
    pub fn full_span(&self) -> Span {
        match &self.kind {
            CandidateKind::NumeralGroup { numeral_span, .. } => numeral_span.cover(&self.span),
            _ => self.span,
        }
    }

    /// Most faces this candidate may receive.
    pub fn capacity(&self) -> usize {
        match &self.kind {
            CandidateKind::GenericSingular | CandidateKind::ExistingName { .. } => 1,
            CandidateKind::NumeralGroup { count, .. } => *count as usize,
            CandidateKind::GenericPlural => usize::MAX,
        }
    }
}

/// Person words and known names in `caption`, left to right. Name matches
/// take precedence over the lexicon words they contain.
pub fn detect_candidates(caption: &str, lexicon: &Lexicon, names: &NameDictionary) -> Vec<CandidateToken> {
    let mut out: Vec<CandidateToken> = extract_names(caption, names)
        .into_iter()
        .map(|m| CandidateToken {
            surface: caption.chars().skip(m.span.start).take(m.span.len()).collect(),
            span: m.span,
            kind: CandidateKind::ExistingName { name: m.name },
        })
        .collect();
    let name_spans: Vec<Span> = out.iter().map(|c| c.span).collect();
    let free = |s: &Span| !name_spans.iter().any(|n| n.overlaps(s));

    let tokens = tokenize(caption);
    for (k, tok) in tokens.iter().enumerate() {
        if !tok.is_word || !free(&tok.span) {
            continue;
        }
        let kind = if lexicon.is_singular(&tok.text) {
            CandidateKind::GenericSingular
        } else if lexicon.singular_of(&tok.text).is_some() {
            let numeral = k
                .checked_sub(1)
                .map(|p| &tokens[p])
                .filter(|p| p.is_word && free(&p.span))
                .and_then(|p| lexicon.number(&p.text).map(|n| (n, p.span)));
            match numeral {
                Some((count, numeral_span)) => CandidateKind::NumeralGroup { count, numeral_span },
                None => CandidateKind::GenericPlural,
            }
        } else {
            continue;
        };
        out.push(CandidateToken {
            surface: tok.text.clone(),
            span: tok.span,
            kind,
        });
    }
    out.sort_by_key(|c| c.span.start);
    out
}
