//! Title and tag cleanup into a filtered token list.
//!
//! Order of operations: HTML tags and entities are deleted, whitespace-delimited
//! ASCII emoticons are dropped, the text is lowercased, and every non-alphabetic
//! character (digits, punctuation, symbols, emoji) becomes a token boundary.
//! Tokens shorter than [`MIN_TOKEN_CHARS`] or on the stop-word list are removed.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const MIN_TOKEN_CHARS: usize = 4;

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");
pub const BUNDLED_STOPWORDS_VERSION: &str = "en-1";

const ASCII_EMOTICONS: &[&str] = &[
    ":)", ":-)", ":(", ":-(", ":d", ":-d", ";)", ";-)", ":p", ":-p", ":o", ":-o", "<3", "</3",
    ":/", ":-/", ":'(", "xd", "^^", "^_^", "-_-", "o_o", ":*", ":-*", ":|", "=)", "=(", "8)",
];

/// Ordered, lowercase tokens that survived preprocessing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenList(pub Vec<String>);

impl TokenList {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords {
    version: String,
    words: HashSet<String>,
}

impl StopWords {
    /// The English list shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_STOPWORDS.as_bytes(), BUNDLED_STOPWORDS_VERSION)
            .expect("bundled stop-word list is valid UTF-8")
    }

    /// One term per line, UTF-8. Blank lines and `#` comments are ignored.
    pub fn parse<R: Read>(reader: R, version: &str) -> std::io::Result<Self> {
        let mut words = HashSet::new();
        for line in BufReader::new(reader).lines() {
            let line = line?;
            let w = line.trim();
            if w.is_empty() || w.starts_with('#') {
                continue;
            }
            words.insert(w.to_lowercase());
        }
        Ok(Self {
            version: version.to_string(),
            words,
        })
    }

    pub fn empty() -> Self {
        Self {
            version: "none".into(),
            words: HashSet::new(),
        }
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn markup_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)<[^<>]*>|&#?[A-Za-z0-9]+;").unwrap())
}

fn clean_into(text: &str, stop: &StopWords, out: &mut Vec<String>) {
    let stripped = markup_regex().replace_all(text, "");
    for chunk in stripped.split_whitespace() {
        if ASCII_EMOTICONS.contains(&chunk.to_lowercase().as_str()) {
            continue;
        }
        let lower = chunk.to_lowercase();
        for word in lower.split(|c: char| !c.is_alphabetic()) {
            if word.chars().count() >= MIN_TOKEN_CHARS && !stop.contains(word) {
                out.push(word.to_string());
            }
        }
    }
}

/// Pools title terms and all tags (title first, then tags in order) into one token list.
pub fn preprocess(title: Option<&str>, tags: &[String], stop: &StopWords) -> TokenList {
    let mut out = Vec::new();
    if let Some(t) = title {
        clean_into(t, stop, &mut out);
    }
    for tag in tags {
        clean_into(tag, stop, &mut out);
    }
    TokenList(out)
}
