//! Tab-separated corpus files: `id<TAB>text<TAB>HS<TAB>lang`.
//!
//! A first line whose id column is literally `id` is a header and is
//! skipped. Texts may not contain tabs or newlines.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Es,
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "es" => Ok(Language::Es),
            other => Err(format!("unknown language {other:?} (expected en or es)")),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::En => "en",
            Language::Es => "es",
        })
    }
}

/// One labelled tweet. `label` is 1 for hate speech.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTweet {
    pub id: String,
    pub text: String,
    pub label: u8,
    pub language: Language,
}

fn parse_row(line: &str, line_no: usize) -> Result<RawTweet> {
    let row_err = |message: String| CorpusError::Row {
        line: line_no,
        message,
    };
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 4 {
        return Err(row_err(format!("expected 4 tab-separated columns, found {}", cols.len())));
    }
    let id = cols[0].trim();
    if id.is_empty() {
        return Err(row_err("empty id".into()));
    }
    if cols[1].trim().is_empty() {
        return Err(row_err("empty text".into()));
    }
    let label = match cols[2].trim() {
        "0" => 0,
        "1" => 1,
        other => return Err(row_err(format!("label must be 0 or 1, found {other:?}"))),
    };
    let language = cols[3].parse().map_err(row_err)?;
    Ok(RawTweet {
        id: id.to_owned(),
        text: cols[1].to_owned(),
        label,
        language,
    })
}

/// Parses a corpus. Blank lines are ignored; ids must be unique.
pub fn read_corpus_from<R: BufRead>(reader: R) -> Result<Vec<RawTweet>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        if out.is_empty() && seen.is_empty() && line.split('\t').next() == Some("id") {
            seen.insert(String::new());
            continue;
        }
        let tweet = parse_row(line, line_no)?;
        if !seen.insert(tweet.id.clone()) {
            return Err(CorpusError::Row {
                line: line_no,
                message: format!("duplicate id {:?}", tweet.id),
            });
        }
        out.push(tweet);
    }
    Ok(out)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<RawTweet>> {
    read_corpus_from(BufReader::new(File::open(path)?))
}

/// Writes rows without a header. Tabs and newlines inside texts become spaces.
pub fn write_corpus_to<W: Write>(mut w: W, tweets: &[RawTweet]) -> Result<()> {
    for t in tweets {
        let text: String = t
            .text
            .chars()
            .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
            .collect();
        writeln!(w, "{}\t{}\t{}\t{}", t.id, text, t.label, t.language)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus(path: impl AsRef<Path>, tweets: &[RawTweet]) -> Result<()> {
    write_corpus_to(BufWriter::new(File::create(path)?), tweets)
}
