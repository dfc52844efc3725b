use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Span;

/// Person-denoting words eligible for replacement, with their plural forms
/// and the number words that can quantify them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub singular: BTreeSet<String>,
    /// plural -> singular
    pub plural: BTreeMap<String, String>,
    pub numbers: BTreeMap<String, u32>,
}

impl Default for Lexicon {
    fn default() -> Self {
        let pairs = [
            ("man", "men"),
            ("woman", "women"),
            ("person", "people"),
            ("astronaut", "astronauts"),
        ];
        let numbers = [
            "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        ];
        Lexicon {
            singular: pairs.iter().map(|(s, _)| s.to_string()).collect(),
            plural: pairs.iter().map(|(s, p)| (p.to_string(), s.to_string())).collect(),
            numbers: numbers
                .iter()
                .enumerate()
                .map(|(i, w)| (w.to_string(), i as u32 + 1))
                .collect(),
        }
    }
}

impl Lexicon {
    pub fn is_singular(&self, word: &str) -> bool {
        self.singular.contains(&word.to_lowercase())
    }

    pub fn singular_of(&self, plural: &str) -> Option<&str> {
        self.plural.get(&plural.to_lowercase()).map(String::as_str)
    }

    pub fn is_person_word(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.singular.contains(&w) || self.plural.contains_key(&w)
    }

    /// Value of a number word or a plain decimal numeral.
    pub fn number(&self, word: &str) -> Option<u32> {
        let w = word.to_lowercase();
        self.numbers
            .get(&w)
            .copied()
            .or_else(|| w.parse::<u32>().ok().filter(|&n| n > 0))
    }

    pub fn spell(&self, n: u32) -> String {
        self.numbers
            .iter()
            .find(|(_, &v)| v == n)
            .map(|(w, _)| w.clone())
            .unwrap_or_else(|| n.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub text: String,
    pub span: Span,
    pub is_word: bool,
}

/// Words are alphanumeric runs, with single inner hyphens (`branch-like`);
/// every other non-space character is its own punctuation token.
pub(crate) fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            i += 1;
            while i < chars.len() {
                if chars[i].is_alphanumeric() {
                    i += 1;
                } else if chars[i] == '-' && chars.get(i + 1).is_some_and(|c| c.is_alphanumeric()) {
                    i += 2;
                } else {
                    break;
                }
            }
            tokens.push(Token {
                text: chars[start..i].iter().collect(),
                span: Span::new(start, i),
                is_word: true,
            });
        } else {
            tokens.push(Token {
                text: c.to_string(),
                span: Span::new(i, i + 1),
                is_word: false,
            });
            i += 1;
        }
    }
    tokens
}
