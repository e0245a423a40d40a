use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RawTweet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("word threshold must be positive")]
    Threshold,
}

/// Surface counts of one raw tweet. Words are whitespace-separated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetCounts {
    pub words: usize,
    pub chars: usize,
    /// Words with at least two uppercase letters and no lowercase letter.
    pub caps_words: usize,
    pub exclamation: usize,
    pub question: usize,
    pub hash: usize,
    pub period: usize,
    pub at: usize,
}

fn is_caps_word(word: &str) -> bool {
    word.chars().filter(|c| c.is_uppercase()).count() >= 2 && !word.chars().any(char::is_lowercase)
}

pub fn tweet_counts(text: &str) -> TweetCounts {
    let count = |ch| text.chars().filter(|&c| c == ch).count();
    TweetCounts {
        words: text.split_whitespace().count(),
        chars: text.chars().count(),
        caps_words: text.split_whitespace().filter(|w| is_caps_word(w)).count(),
        exclamation: count('!'),
        question: count('?'),
        hash: count('#'),
        period: count('.'),
        at: count('@'),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
}

impl MeanSd {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, sd: var.sqrt() }
    }
}

/// Statistics of one split × label group; the `*_mean` fields are per-tweet means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub split: String,
    pub label: u8,
    pub tweets: usize,
    pub words: MeanSd,
    pub chars: MeanSd,
    pub caps_words_mean: f64,
    pub exclamation_mean: f64,
    pub question_mean: f64,
    pub hash_mean: f64,
    pub period_mean: f64,
    pub at_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Ordered by split name, then label. Empty groups are omitted.
    pub groups: Vec<GroupStats>,
}

impl CorpusStats {
    pub fn group(&self, split: &str, label: u8) -> Option<&GroupStats> {
        self.groups.iter().find(|g| g.split == split && g.label == label)
    }
}

/// Per split × label statistics over raw tweets.
pub fn corpus_stats<'a, I>(splits: I) -> Result<CorpusStats, StatsError>
where
    I: IntoIterator<Item = (&'a str, &'a [RawTweet])>,
{
    let mut buckets: BTreeMap<(String, u8), Vec<TweetCounts>> = BTreeMap::new();
    for (split, tweets) in splits {
        for t in tweets {
            buckets
                .entry((split.to_owned(), t.label))
                .or_default()
                .push(tweet_counts(&t.text));
        }
    }
    if buckets.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let groups = buckets
        .into_iter()
        .map(|((split, label), counts)| {
            let n = counts.len() as f64;
            let mean = |f: fn(&TweetCounts) -> usize| counts.iter().map(|c| f(c) as f64).sum::<f64>() / n;
            GroupStats {
                split,
                label,
                tweets: counts.len(),
                words: MeanSd::of(counts.iter().map(|c| c.words as f64)),
                chars: MeanSd::of(counts.iter().map(|c| c.chars as f64)),
                caps_words_mean: mean(|c| c.caps_words),
                exclamation_mean: mean(|c| c.exclamation),
                question_mean: mean(|c| c.question),
                hash_mean: mean(|c| c.hash),
                period_mean: mean(|c| c.period),
                at_mean: mean(|c| c.at),
            }
        })
        .collect();
    Ok(CorpusStats { groups })
}

/// Ids of tweets with more than `max_words` words, in input order.
pub fn detect_outliers(corpus: &[RawTweet], max_words: usize) -> Result<Vec<String>, StatsError> {
    if max_words == 0 {
        return Err(StatsError::Threshold);
    }
    Ok(corpus
        .iter()
        .filter(|t| t.text.split_whitespace().count() > max_words)
        .map(|t| t.id.clone())
        .collect())
}
