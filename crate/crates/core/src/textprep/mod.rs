//! Tweet normalisation and descriptive corpus statistics.
//!
//! [`clean`] applies, in order: mention removal, URL removal, genitive and
//! apostrophe removal, contraction expansion, dash normalisation, ordinal
//! expansion, abbreviation expansion, camel-case splitting, emoji naming,
//! and finally lowercasing plus punctuation-aware whitespace tokenisation.
//!
//! The rule tables are plain `key<TAB>value` files. Bundled defaults live in
//! `rules/`; [`RuleSet::load_dir`] replaces any of them at run time.

mod ordinal;
mod stats;

pub use ordinal::ordinal_words;
pub use stats::{corpus_stats, detect_outliers, tweet_counts, CorpusStats, GroupStats, StatsError, TweetCounts};

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::LazyLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RawTweet;

const DEFAULT_CONTRACTIONS: &str = include_str!("rules/contractions.tsv");
const DEFAULT_ABBREVIATIONS: &str = include_str!("rules/abbreviations.tsv");
const DEFAULT_EMOJI: &str = include_str!("rules/emoji.tsv");

pub const CONTRACTIONS_FILE: &str = "contractions.tsv";
pub const ABBREVIATIONS_FILE: &str = "abbreviations.tsv";
pub const EMOJI_FILE: &str = "emoji.tsv";

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("i/o error reading {file}: {source}")]
    Io { file: String, source: io::Error },
    #[error("{file} line {line}: expected key<TAB>value")]
    Malformed { file: String, line: usize },
}

static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\S*").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\S*(?:http|www\.)\S*").unwrap());
static APOSTROPHE_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\p{L}\p{N}_]+(?:'[\p{L}\p{N}_]+)+").unwrap());
static GENITIVE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"'[sS]$").unwrap());
static ORDINAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(\d+)(?:st|nd|rd|th)\b").unwrap());
static CAMEL_LOWER_UPPER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\p{Ll})(\p{Lu})").unwrap());
static CAMEL_ACRONYM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\p{Lu})(\p{Lu}\p{Ll})").unwrap());

/// Contraction, abbreviation and emoji tables with their compiled matchers.
#[derive(Clone, Debug)]
pub struct RuleSet {
    contractions: HashMap<String, String>,
    abbreviations: HashMap<String, String>,
    emoji: HashMap<String, String>,
    abbreviation_re: Option<Regex>,
    emoji_re: Option<Regex>,
}

fn parse_table(text: &str, file: &str) -> Result<Vec<(String, String)>, RuleError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((k, v)) if !k.is_empty() => out.push((k.to_owned(), v.trim().to_owned())),
            _ => {
                return Err(RuleError::Malformed {
                    file: file.to_owned(),
                    line: idx + 1,
                })
            }
        }
    }
    Ok(out)
}

/// Alternation of escaped keys, longest first so that prefixes never win.
fn alternation(keys: impl Iterator<Item = String>) -> Vec<String> {
    let mut keys: Vec<String> = keys.map(|k| regex::escape(&k)).collect();
    keys.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    keys
}

impl RuleSet {
    pub fn new(
        contractions: Vec<(String, String)>,
        abbreviations: Vec<(String, String)>,
        emoji: Vec<(String, String)>,
    ) -> Self {
        let contractions: HashMap<_, _> = contractions
            .into_iter()
            .map(|(k, v)| (normalize_apostrophes(&k).to_lowercase(), v))
            .collect();
        let abbreviations: HashMap<_, _> = abbreviations.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect();
        let emoji: HashMap<_, _> = emoji
            .into_iter()
            .map(|(k, v)| (k.replace('\u{FE0F}', ""), v))
            .filter(|(k, _)| !k.is_empty())
            .collect();

        let abbreviation_re = (!abbreviations.is_empty()).then(|| {
            let alt = alternation(abbreviations.keys().cloned()).join("|");
            Regex::new(&format!(r"(?i)\b(?:{alt})\b")).expect("escaped alternation compiles")
        });
        let emoji_re = (!emoji.is_empty()).then(|| {
            let alt = alternation(emoji.keys().cloned()).join("|");
            Regex::new(&alt).expect("escaped alternation compiles")
        });
        Self {
            contractions,
            abbreviations,
            emoji,
            abbreviation_re,
            emoji_re,
        }
    }

    /// Tables with no entries: only the structural rules apply.
    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new(), Vec::new())
    }

    /// Bundled tables, with any of the three files present in `dir` taking
    /// their place.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, RuleError> {
        let dir = dir.as_ref();
        let read = |name: &str, default: &str| -> Result<Vec<(String, String)>, RuleError> {
            let path = dir.join(name);
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|source| RuleError::Io {
                    file: path.display().to_string(),
                    source,
                })?;
                parse_table(&text, &path.display().to_string())
            } else {
                parse_table(default, name)
            }
        };
        Ok(Self::new(
            read(CONTRACTIONS_FILE, DEFAULT_CONTRACTIONS)?,
            read(ABBREVIATIONS_FILE, DEFAULT_ABBREVIATIONS)?,
            read(EMOJI_FILE, DEFAULT_EMOJI)?,
        ))
    }

    pub fn contractions(&self) -> &HashMap<String, String> {
        &self.contractions
    }

    pub fn abbreviations(&self) -> &HashMap<String, String> {
        &self.abbreviations
    }

    pub fn emoji(&self) -> &HashMap<String, String> {
        &self.emoji
    }

    fn expand_abbreviations(&self, text: &str) -> String {
        match &self.abbreviation_re {
            Some(re) => re
                .replace_all(text, |c: &Captures| self.abbreviations[&c[0].to_lowercase()].clone())
                .into_owned(),
            None => text.to_owned(),
        }
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        let table = |text, name| parse_table(text, name).expect("bundled rule tables are well formed");
        Self::new(
            table(DEFAULT_CONTRACTIONS, CONTRACTIONS_FILE),
            table(DEFAULT_ABBREVIATIONS, ABBREVIATIONS_FILE),
            table(DEFAULT_EMOJI, EMOJI_FILE),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanTweet {
    pub id: String,
    /// Tokens joined by single spaces.
    pub text: String,
    pub tokens: Vec<String>,
}

fn normalize_apostrophes(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' | '\u{02BC}' | '\u{0060}' | '\u{00B4}' => '\'',
            c => c,
        })
        .collect()
}

fn is_separated(c: char) -> bool {
    !(c.is_alphanumeric() || c.is_whitespace() || c == '-' || c == '_')
}

fn expand_ordinals(text: &str) -> String {
    ORDINAL
        .replace_all(text, |c: &Captures| {
            c[1].parse::<u64>()
                .ok()
                .and_then(ordinal_words)
                .map(|w| format!(" {w} "))
                .unwrap_or_else(|| c[0].to_owned())
        })
        .into_owned()
}

/// Runs the full pipeline on one text and returns its tokens.
pub fn clean_text(text: &str, rules: &RuleSet) -> Vec<String> {
    // U+FE0F is a word character to `\b`; it only ever selects emoji presentation.
    let s = text.replace('\u{FE0F}', "");
    let s = MENTION.replace_all(&s, " ");
    let s = URL.replace_all(&s, " ");

    // Genitives and apostrophes, sparing words the contraction table knows.
    let s = normalize_apostrophes(&s);
    let s = APOSTROPHE_WORD.replace_all(&s, |c: &Captures| {
        let word = &c[0];
        if rules.contractions.contains_key(&word.to_lowercase()) {
            word.to_owned()
        } else {
            GENITIVE.replace(word, "").replace('\'', "")
        }
    });

    let s = APOSTROPHE_WORD.replace_all(&s, |c: &Captures| {
        rules
            .contractions
            .get(&c[0].to_lowercase())
            .cloned()
            .unwrap_or_else(|| c[0].to_owned())
    });
    let s = s.replace('\'', "");

    let s = s.replace(['\u{2013}', '\u{2014}'], "-");

    let s = expand_ordinals(&s);

    // Ordinals and abbreviations run on either side of the camel-case split:
    // the first pass keeps acronyms whole, the second catches matches the
    // split exposes ("#MagaCountry", "1stPlace").
    let s = rules.expand_abbreviations(&s);
    let s = CAMEL_LOWER_UPPER.replace_all(&s, "$1 $2");
    let s = CAMEL_ACRONYM.replace_all(&s, "$1 $2");
    let s = s.replace('#', " ");
    let s = expand_ordinals(&s);
    let s = rules.expand_abbreviations(&s);

    let s = match &rules.emoji_re {
        Some(re) => re
            .replace_all(&s, |c: &Captures| format!(" {} ", rules.emoji[&c[0]]))
            .into_owned(),
        None => s,
    };

    let lower = s.to_lowercase();
    let mut spaced = String::with_capacity(lower.len() + 8);
    for ch in lower.chars() {
        if is_separated(ch) {
            spaced.push(' ');
            spaced.push(ch);
            spaced.push(' ');
        } else {
            spaced.push(ch);
        }
    }
    spaced
        .split_whitespace()
        .filter(|t| !t.contains('@') && !t.contains("http"))
        .map(str::to_owned)
        .collect()
}

pub fn clean(raw: &RawTweet, rules: &RuleSet) -> CleanTweet {
    let tokens = clean_text(&raw.text, rules);
    CleanTweet {
        id: raw.id.clone(),
        text: tokens.join(" "),
        tokens,
    }
}

/// Cleans every tweet, keeping id, label and language. Texts become the
/// space-joined token lists.
pub fn clean_corpus(tweets: &[RawTweet], rules: &RuleSet) -> Vec<RawTweet> {
    tweets
        .iter()
        .map(|t| RawTweet {
            text: clean_text(&t.text, rules).join(" "),
            ..t.clone()
        })
        .collect()
}
