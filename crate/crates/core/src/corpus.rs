//! Dataset manifest, reference-caption preprocessing and the known-names
//! dictionary.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{json_error, Error, Result};
use crate::identity::FaceObservation;

/// Half-open range of character (not byte) offsets. Serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn cover(&self, other: &Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

/// One dataset entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_sentence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_caption: Option<String>,
    #[serde(default)]
    pub ground_truth_names: Vec<String>,
    #[serde(default)]
    pub faces: Vec<FaceObservation>,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, width: u32, height: u32, description: impl Into<String>) -> Self {
        ImageRecord {
            id: id.into(),
            width,
            height,
            description: description.into(),
            first_sentence: None,
            synthetic_caption: None,
            ground_truth_names: Vec::new(),
            faces: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("", "id", "must not be empty"));
        }
        if self.width == 0 {
            return Err(Error::invalid(&self.id, "width", "must be positive"));
        }
        if self.height == 0 {
            return Err(Error::invalid(&self.id, "height", "must be positive"));
        }
        for (i, face) in self.faces.iter().enumerate() {
            face.validate(&self.id, i)?;
            if !face.bbox.fits_within(self.width as f64, self.height as f64) {
                return Err(Error::invalid(
                    &self.id,
                    format!("faces[{i}].bbox"),
                    format!(
                        "{:?} exceeds the {}x{} image",
                        <[f64; 4]>::from(face.bbox),
                        self.width,
                        self.height
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Number of faces carrying an identity.
    pub fn identified_count(&self) -> usize {
        self.faces.iter().filter(|f| f.identity.is_some()).count()
    }
}

/// Parse and validate a manifest held in memory. `origin` labels errors.
pub fn parse_manifest(text: &str, origin: &str) -> Result<Vec<ImageRecord>> {
    let records: Vec<ImageRecord> = serde_json::from_str(text).map_err(|e| json_error(origin, e))?;
    let mut ids = HashSet::with_capacity(records.len());
    for record in &records {
        record.validate()?;
        if !ids.insert(record.id.as_str()) {
            return Err(Error::invalid(&record.id, "id", "duplicate id in manifest"));
        }
    }
    Ok(records)
}

/// Load the manifest: a JSON list of records, kept in file order.
pub fn load_manifest(path: &Path) -> Result<Vec<ImageRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}

/// Tokens whose trailing period never ends a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abbreviations(HashSet<String>);

impl Abbreviations {
    pub const DEFAULT: &'static [&'static str] = &[
        "Dr.", "Mr.", "Mrs.", "Ms.", "Prof.", "St.", "Jr.", "Sr.", "U.S.", "Inc.", "vs.",
    ];

    pub fn empty() -> Self {
        Abbreviations(HashSet::new())
    }

    pub fn from_list<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut a = Self::empty();
        a.extend(items);
        a
    }

    /// Add entries; a missing trailing period is appended.
    pub fn extend<I, S>(&mut self, items: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for item in items {
            let mut s: String = item.into();
            if !s.ends_with('.') {
                s.push('.');
            }
            self.0.insert(s);
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }
}

impl Default for Abbreviations {
    fn default() -> Self {
        Abbreviations::from_list(Self::DEFAULT.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FirstSentence<'a> {
    pub text: &'a str,
    /// `false` when no sentence terminator was found and the whole input
    /// was returned.
    pub terminated: bool,
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{2019}' | '\u{201D}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '{' | '\u{2018}' | '\u{201C}')
}

/// Cut `text` after its first sentence.
///
/// A terminator (`.`, `?`, `!`, plus any trailing run of terminators and
/// closing quotes/brackets) ends the sentence when followed by whitespace or
/// the end of the text, unless the period belongs to a listed abbreviation or
/// to an initial. A single capital letter with a period counts as an initial
/// when the next word is capitalized and the word before it is not itself an
/// abbreviation (`Mark E. Kelly`, but not `Mrs. B. They`).
pub fn split_first_sentence<'a>(text: &'a str, abbreviations: &Abbreviations) -> Result<FirstSentence<'a>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::EmptyText);
    }
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (is_terminator(chars[j].1) || is_closer(chars[j].1)) {
            j += 1;
        }
        let at_boundary = j == chars.len() || chars[j].1.is_whitespace();
        if at_boundary && !(c == '.' && period_is_internal(text, &chars, i, j, abbreviations)) {
            let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
            return Ok(FirstSentence {
                text: &text[..end],
                terminated: true,
            });
        }
        i = j;
    }
    Ok(FirstSentence {
        text,
        terminated: false,
    })
}

/// Word (maximal non-whitespace run) ending right before char index `end`,
/// as (start char index, str).
fn word_before<'a>(text: &'a str, chars: &[(usize, char)], end: usize) -> Option<(usize, &'a str)> {
    let mut start = end;
    while start > 0 && !chars[start - 1].1.is_whitespace() {
        start -= 1;
    }
    (start < end).then(|| {
        let b1 = chars.get(end).map_or(text.len(), |&(b, _)| b);
        (start, &text[chars[start].0..b1])
    })
}

fn period_is_internal(
    text: &str,
    chars: &[(usize, char)],
    period: usize,
    run_end: usize,
    abbreviations: &Abbreviations,
) -> bool {
    // token up to and including the period
    let Some((start, token)) = word_before(text, chars, period + 1) else {
        return false;
    };
    let token = token.trim_start_matches(is_opener);
    if abbreviations.contains(token) {
        return true;
    }
    let mut letters = token[..token.len() - 1].chars();
    let is_initial = matches!((letters.next(), letters.next()), (Some(l), None) if l.is_uppercase());
    if !is_initial {
        return false;
    }
    let next_capitalized = chars[run_end..]
        .iter()
        .map(|&(_, c)| c)
        .skip_while(|c| c.is_whitespace())
        .find(|c| !is_opener(*c))
        .is_some_and(char::is_uppercase);
    if !next_capitalized {
        return false;
    }
    // skip the whitespace before this token, then look at the previous word
    let mut k = start;
    while k > 0 && chars[k - 1].1.is_whitespace() {
        k -= 1;
    }
    match word_before(text, chars, k) {
        None => true,
        Some((_, prev)) => !abbreviations.contains(prev.trim_start_matches(is_opener)),
    }
}

/// Known people: canonical names plus aliases that resolve to them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NameDictionaryFile", into = "NameDictionaryFile")]
pub struct NameDictionary {
    names: BTreeSet<String>,
    aliases: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct NameDictionaryFile {
    names: Vec<String>,
    #[serde(default)]
    aliases: BTreeMap<String, String>,
}

impl TryFrom<NameDictionaryFile> for NameDictionary {
    type Error = Error;

    fn try_from(f: NameDictionaryFile) -> Result<Self> {
        NameDictionary::new(f.names, f.aliases)
    }
}

impl From<NameDictionary> for NameDictionaryFile {
    fn from(d: NameDictionary) -> Self {
        NameDictionaryFile {
            names: d.names.into_iter().collect(),
            aliases: d.aliases,
        }
    }
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl NameDictionary {
    pub fn new<I, S>(names: I, aliases: BTreeMap<String, String>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let names: BTreeSet<String> = names
            .into_iter()
            .map(|n| normalize_whitespace(n.as_ref()))
            .filter(|n| !n.is_empty())
            .collect();
        let mut normalized = BTreeMap::new();
        for (alias, target) in aliases {
            let target = normalize_whitespace(&target);
            if !names.contains(&target) {
                return Err(Error::invalid(alias, "alias", format!("target `{target}` is not a known name")));
            }
            let alias = normalize_whitespace(&alias);
            if !alias.is_empty() {
                normalized.insert(alias, target);
            }
        }
        Ok(NameDictionary {
            names,
            aliases: normalized,
        })
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        NameDictionary::new(names, BTreeMap::new()).expect("no aliases to validate")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| json_error(&path.display().to_string(), e))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    /// Canonical form of a name or alias.
    pub fn canonical<'a>(&'a self, surface: &str) -> Option<&'a str> {
        let surface = normalize_whitespace(surface);
        self.names
            .get(&surface)
            .or_else(|| self.aliases.get(&surface))
            .map(String::as_str)
    }

    /// Merge another dictionary into this one.
    pub fn extend_names<I, S>(&mut self, names: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.names.extend(
            names
                .into_iter()
                .map(|n| normalize_whitespace(n.as_ref()))
                .filter(|n| !n.is_empty()),
        );
    }

    /// (pattern, canonical) pairs, longest pattern first.
    fn patterns(&self) -> Vec<(Vec<char>, &str)> {
        let mut p: Vec<(Vec<char>, &str)> = self
            .names
            .iter()
            .map(|n| (n.chars().collect(), n.as_str()))
            .chain(self.aliases.iter().map(|(a, n)| (a.chars().collect(), n.as_str())))
            .collect();
        p.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        p
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameMatch {
    /// Canonical name (aliases are resolved).
    pub name: String,
    pub span: Span,
}

/// All leftmost-longest, non-overlapping occurrences of known names and
/// aliases. Matching is case-sensitive, insensitive to whitespace runs, and
/// only at word boundaries.
pub fn extract_names(caption: &str, dict: &NameDictionary) -> Vec<NameMatch> {
    // collapse whitespace runs to one space, remembering original offsets
    let mut norm: Vec<char> = Vec::new();
    let mut origin: Vec<usize> = Vec::new();
    let mut in_space = false;
    for (i, c) in caption.chars().enumerate() {
        if c.is_whitespace() {
            if !in_space {
                norm.push(' ');
                origin.push(i);
            }
            in_space = true;
        } else {
            norm.push(c);
            origin.push(i);
            in_space = false;
        }
    }
    let patterns = dict.patterns();
    let mut found = Vec::new();
    let mut i = 0;
    while i < norm.len() {
        if i > 0 && norm[i - 1].is_alphanumeric() {
            i += 1;
            continue;
        }
        let hit = patterns.iter().find(|(p, _)| {
            let end = i + p.len();
            end <= norm.len()
                && norm[i..end] == p[..]
                && norm.get(end).is_none_or(|c| !c.is_alphanumeric())
        });
        match hit {
            Some((p, name)) => {
                let end = i + p.len();
                found.push(NameMatch {
                    name: name.to_string(),
                    span: Span::new(origin[i], origin[end - 1] + 1),
                });
                i = end;
            }
            None => i += 1,
        }
    }
    found
}

/// Number of images per count of identified faces.
pub fn person_count_histogram(records: &[ImageRecord]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for record in records {
        *hist.entry(record.identified_count()).or_insert(0) += 1;
    }
    hist
}
