use serde::{Deserialize, Serialize};

use super::assign::{AssignedPair, Assignment};
use super::candidates::{CandidateKind, CandidateToken};
use super::lexicon::{tokenize, Lexicon, Token};
use crate::corpus::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// Generic singular replaced by a name, leading article dropped.
    R1,
    /// Existing name corrected.
    R2,
    /// Numeral group replaced by a list of names.
    R3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insertion {
    pub name: String,
    pub face_index: usize,
    pub similarity: f64,
    pub overlap: f64,
}

impl From<&AssignedPair> for Insertion {
    fn from(p: &AssignedPair) -> Self {
        Insertion {
            name: p.name.clone(),
            face_index: p.face_index,
            similarity: p.similarity,
            overlap: p.overlap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substitution {
    pub candidate: CandidateToken,
    /// Characters of the base caption that were replaced.
    pub replaced: Span,
    pub names: Vec<Insertion>,
    pub rule: Rule,
}

/// Result of merging names into one caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergePlan {
    #[serde(rename = "id")]
    pub image_id: String,
    pub base_caption: String,
    pub enhanced_caption: String,
    pub substitutions: Vec<Substitution>,
    /// Set when the rules could not place every assigned name; the caption
    /// is then left unchanged.
    pub complex: bool,
    /// Names that would have been inserted into a complex caption.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routed_names: Vec<String>,
    pub trace: Vec<String>,
}

impl MergePlan {
    pub fn unchanged(image_id: &str, caption: &str, trace: Vec<String>) -> Self {
        MergePlan {
            image_id: image_id.to_string(),
            base_caption: caption.to_string(),
            enhanced_caption: caption.to_string(),
            substitutions: Vec::new(),
            complex: false,
            routed_names: Vec::new(),
            trace,
        }
    }

    /// Names inserted into the caption.
    pub fn inserted(&self) -> impl Iterator<Item = &Insertion> {
        self.substitutions.iter().flat_map(|s| s.names.iter())
    }

    pub fn inserted_count(&self) -> usize {
        self.inserted().count()
    }
}

const ARTICLES: &[&str] = &["a", "an", "the"];

// Words in front of a singular that the rules cannot rewrite around.
const BLOCKING_DETERMINERS: &[&str] = &[
    "this", "that", "another", "each", "every", "no", "some", "any", "his", "her", "their", "our", "my",
    "your", "its", "which", "what", "whose",
];

struct Edit {
    span: Span,
    text: String,
}

struct Context<'a> {
    tokens: &'a [Token],
}

impl Context<'_> {
    fn index_at(&self, start: usize) -> Option<usize> {
        self.tokens.iter().position(|t| t.span.start == start)
    }

    /// Word directly before the token starting at `start`, with nothing but
    /// whitespace in between.
    fn word_before(&self, start: usize) -> Option<&Token> {
        let i = self.index_at(start)?;
        i.checked_sub(1).map(|p| &self.tokens[p]).filter(|t| t.is_word)
    }

    fn token_after(&self, end: usize) -> Option<&Token> {
        self.tokens.iter().find(|t| t.span.start >= end)
    }

    fn possessive_after(&self, end: usize) -> bool {
        self.tokens
            .iter()
            .find(|t| t.span.start == end)
            .is_some_and(|t| t.text == "'" || t.text == "\u{2019}")
    }

    /// Extend `start` backwards over a directly preceding article.
    fn absorb_article(&self, start: usize) -> usize {
        match self.word_before(start) {
            Some(t) if ARTICLES.contains(&t.text.to_lowercase().as_str()) => t.span.start,
            _ => start,
        }
    }
}

fn join_names(names: &[&str]) -> String {
    match names {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn indefinite_article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn plan_edit(
    cand: &CandidateToken,
    names: &[&str],
    ctx: &Context<'_>,
    lexicon: &Lexicon,
) -> Result<Option<(Edit, Rule)>, String> {
    if ctx.possessive_after(cand.span.end) && !matches!(cand.kind, CandidateKind::ExistingName { .. }) {
        return Err(format!("`{}` is possessive", cand.surface));
    }
    match &cand.kind {
        CandidateKind::GenericPlural => Err(format!("no rule for bare plural `{}`", cand.surface)),
        CandidateKind::GenericSingular => {
            if let Some(prev) = ctx.word_before(cand.span.start) {
                let w = prev.text.to_lowercase();
                if BLOCKING_DETERMINERS.contains(&w.as_str()) || lexicon.number(&w).is_some() {
                    return Err(format!("`{} {}` cannot take a name", prev.text, cand.surface));
                }
            }
            if ctx
                .token_after(cand.span.end)
                .is_some_and(|t| t.is_word && lexicon.is_person_word(&t.text))
            {
                return Err(format!("`{}` is part of a compound", cand.surface));
            }
            let start = ctx.absorb_article(cand.span.start);
            Ok(Some((
                Edit {
                    span: Span::new(start, cand.span.end),
                    text: names[0].to_string(),
                },
                Rule::R1,
            )))
        }
        CandidateKind::ExistingName { name } => {
            if names[0] == name {
                return Ok(None);
            }
            Ok(Some((
                Edit {
                    span: cand.span,
                    text: names[0].to_string(),
                },
                Rule::R2,
            )))
        }
        CandidateKind::NumeralGroup { count, numeral_span } => {
            let n = *count as usize;
            let k = names.len();
            if k > n {
                return Err(format!("{k} names for `{}` of {n}", cand.surface));
            }
            let text = if k == n {
                join_names(names)
            } else {
                let rest = (n - k) as u32;
                let remainder = if rest == 1 {
                    let singular = lexicon
                        .singular_of(&cand.surface)
                        .ok_or_else(|| format!("no singular for `{}`", cand.surface))?;
                    format!("{} {singular}", indefinite_article(singular))
                } else {
                    format!("{} {}", lexicon.spell(rest), cand.surface)
                };
                format!("{} and {remainder}", names.join(", "))
            };
            let start = ctx.absorb_article(numeral_span.start);
            Ok(Some((
                Edit {
                    span: Span::new(start, cand.span.end),
                    text,
                },
                Rule::R3,
            )))
        }
    }
}

/// Rewrite the caption according to an assignment.
///
/// Edits are applied right to left so earlier spans stay valid. If any
/// assigned candidate sits in a construction the rules cannot handle the
/// plan is marked complex and the caption is returned untouched.
pub fn apply_merge(image_id: &str, caption: &str, assignment: &Assignment, lexicon: &Lexicon) -> MergePlan {
    let tokens = tokenize(caption);
    let ctx = Context { tokens: &tokens };
    let mut trace = assignment.trace.clone();
    let mut planned: Vec<(Edit, Substitution)> = Vec::new();
    let mut problems = Vec::new();

    for (ci, cand) in assignment.candidates.iter().enumerate() {
        let pairs = assignment.pairs_for(ci);
        if pairs.is_empty() {
            continue;
        }
        let names: Vec<&str> = pairs.iter().map(|p| p.name.as_str()).collect();
        match plan_edit(cand, &names, &ctx, lexicon) {
            Ok(Some((edit, rule))) => {
                trace.push(format!("{rule:?}: `{}` -> `{}`", cand.surface, edit.text));
                let sub = Substitution {
                    candidate: cand.clone(),
                    replaced: edit.span,
                    names: pairs.iter().map(|p| Insertion::from(*p)).collect(),
                    rule,
                };
                planned.push((edit, sub));
            }
            Ok(None) => trace.push(format!("`{}` confirmed by face identity", cand.surface)),
            Err(reason) => problems.push(reason),
        }
    }

    if !problems.is_empty() {
        trace.extend(problems.into_iter().map(|p| format!("complex: {p}")));
        let mut plan = MergePlan::unchanged(image_id, caption, trace);
        plan.complex = true;
        plan.routed_names = assignment.pairs.iter().map(|p| p.name.clone()).collect();
        return plan;
    }

    let mut chars: Vec<char> = caption.chars().collect();
    planned.sort_by_key(|(edit, _)| std::cmp::Reverse(edit.span.start));
    for (edit, _) in &planned {
        chars.splice(edit.span.start..edit.span.end, edit.text.chars());
    }
    let mut substitutions: Vec<Substitution> = planned.into_iter().map(|(_, s)| s).collect();
    substitutions.reverse();

    MergePlan {
        image_id: image_id.to_string(),
        base_caption: caption.to_string(),
        enhanced_caption: chars.into_iter().collect(),
        substitutions,
        complex: false,
        routed_names: Vec::new(),
        trace,
    }
}
