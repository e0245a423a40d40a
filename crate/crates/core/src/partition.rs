//! Key-phrase audit and six-category stratified re-splitting.
//!
//! Every example falls into exactly one of six categories: a phrase family
//! (none, anti-immigration, anti-women) crossed with its binary label. Phrase
//! matching is a case-insensitive substring test over cleaned text.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RawTweet;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("phrase file line {line}: {message}")]
    PhraseFile { line: usize, message: String },
    #[error("family {0} has no patterns")]
    EmptyFamily(Family),
    #[error("invalid ratios {0:?}: need three non-negative weights with a positive sum")]
    Ratios(Vec<f64>),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("id {0:?} appears in more than one split")]
    OverlappingSplits(String),
}

pub type Result<T> = std::result::Result<T, PartitionError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    None,
    AntiImmigration,
    AntiWomen,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::None, Family::AntiImmigration, Family::AntiWomen];

    pub fn name(self) -> &'static str {
        match self {
            Family::None => "none",
            Family::AntiImmigration => "anti_immigration",
            Family::AntiWomen => "anti_women",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "anti_immigration" => Ok(Family::AntiImmigration),
            "anti_women" => Ok(Family::AntiWomen),
            "none" => Ok(Family::None),
            other => Err(format!("unknown phrase family {other:?}")),
        }
    }
}

/// Family × label. `index()` enumerates the six values densely.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Category {
    pub family: Family,
    pub hateful: bool,
}

impl Category {
    pub const COUNT: usize = 6;

    pub fn all() -> impl Iterator<Item = Category> {
        Family::ALL
            .into_iter()
            .flat_map(|family| [true, false].map(|hateful| Category { family, hateful }))
    }

    pub fn index(self) -> usize {
        let f = Family::ALL.iter().position(|&x| x == self.family).unwrap();
        2 * f + usize::from(!self.hateful)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = if self.hateful { "hateful" } else { "not_hateful" };
        write!(f, "{}:{label}", self.family)
    }
}

/// Display name plus the literal lowercase patterns it stands for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPhrase {
    pub family: Family,
    pub name: String,
    pub patterns: Vec<String>,
}

impl KeyPhrase {
    pub fn matches(&self, lowered: &str) -> bool {
        self.patterns.iter().any(|p| lowered.contains(p.as_str()))
    }
}

/// Expands `*` to "the" and "that"; other patterns are returned lowercased.
pub fn expand_pattern(pattern: &str) -> Vec<String> {
    let p = pattern.trim().to_lowercase();
    if p.contains('*') {
        ["the", "that"].iter().map(|w| p.replacen('*', w, 1)).collect()
    } else {
        vec![p]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPhraseSet {
    pub phrases: Vec<KeyPhrase>,
    /// Family assigned when both families match.
    pub precedence: Family,
}

impl Default for KeyPhraseSet {
    fn default() -> Self {
        let phrase = |family, name: &str, patterns: &[&str]| KeyPhrase {
            family,
            name: name.to_owned(),
            patterns: patterns.iter().flat_map(|p| expand_pattern(p)).collect(),
        };
        Self {
            phrases: vec![
                phrase(Family::AntiImmigration, "build * wall", &["build * wall"]),
                phrase(Family::AntiImmigration, "maga", &["maga", "make america great again"]),
                phrase(Family::AntiImmigration, "illegal aliens", &["illegal aliens"]),
                phrase(Family::AntiWomen, "bitch", &["bitch"]),
            ],
            precedence: Family::AntiImmigration,
        }
    }
}

impl KeyPhraseSet {
    /// Parses `family<TAB>name<TAB>pattern` lines. Rows sharing a family and
    /// name are merged; `*` in a pattern expands to the/that.
    pub fn parse(text: &str) -> Result<Self> {
        let mut phrases: Vec<KeyPhrase> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let err = |message: String| PartitionError::PhraseFile { line: idx + 1, message };
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with("//") {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [family, name, pattern] = cols[..] else {
                return Err(err(format!("expected 3 tab-separated columns, found {}", cols.len())));
            };
            let family: Family = family.parse().map_err(err)?;
            if family == Family::None {
                return Err(err("family none cannot carry patterns".into()));
            }
            if pattern.trim().is_empty() {
                return Err(err("empty pattern".into()));
            }
            let patterns = expand_pattern(pattern);
            match phrases.iter_mut().find(|p| p.family == family && p.name == name) {
                Some(p) => p.patterns.extend(patterns),
                None => phrases.push(KeyPhrase {
                    family,
                    name: name.to_owned(),
                    patterns,
                }),
            }
        }
        let set = Self {
            phrases,
            precedence: Family::AntiImmigration,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for family in [Family::AntiImmigration, Family::AntiWomen] {
            if !self.phrases.iter().any(|p| p.family == family && !p.patterns.is_empty()) {
                return Err(PartitionError::EmptyFamily(family));
            }
        }
        Ok(())
    }

    pub fn with_precedence(mut self, family: Family) -> Self {
        self.precedence = family;
        self
    }

    pub fn families_in(&self, clean_text: &str) -> HashSet<Family> {
        let lowered = clean_text.to_lowercase();
        self.phrases
            .iter()
            .filter(|p| p.matches(&lowered))
            .map(|p| p.family)
            .collect()
    }

    pub fn family_of(&self, clean_text: &str) -> Family {
        let found = self.families_in(clean_text);
        match found.len() {
            0 => Family::None,
            1 => *found.iter().next().unwrap(),
            _ => self.precedence,
        }
    }
}

pub fn categorize(clean_text: &str, label: u8, phrases: &KeyPhraseSet) -> Category {
    Category {
        family: phrases.family_of(clean_text),
        hateful: label == 1,
    }
}

/// Hateful count over total count; `ratio` is `None` when nothing matched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioCell {
    pub hateful: usize,
    pub total: usize,
}

impl RatioCell {
    pub fn ratio(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hateful as f64 / self.total as f64)
    }

    fn add(&mut self, label: u8) {
        self.total += 1;
        self.hateful += usize::from(label == 1);
    }
}

impl fmt::Display for RatioCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ratio() {
            Some(r) => write!(f, "{:.0}%", 100.0 * r),
            None => f.write_str("n/a"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub phrase: String,
    pub family: Family,
    pub train_val: RatioCell,
    pub test: RatioCell,
}

/// Per-phrase rows followed by one total row per family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HateRatioTable {
    pub rows: Vec<RatioRow>,
    pub totals: Vec<RatioRow>,
}

impl HateRatioTable {
    pub fn row(&self, phrase: &str) -> Option<&RatioRow> {
        self.rows.iter().find(|r| r.phrase == phrase)
    }

    pub fn total(&self, family: Family) -> Option<&RatioRow> {
        self.totals.iter().find(|r| r.family == family)
    }

    /// Aligned plain-text rendering.
    pub fn render(&self) -> String {
        let mut lines = vec![format!("{:<28} {:>10} {:>8}", "key phrase", "train+val", "test")];
        for r in &self.rows {
            lines.push(format!("{:<28} {:>10} {:>8}", r.phrase, r.train_val.to_string(), r.test.to_string()));
        }
        for r in &self.totals {
            lines.push(format!(
                "{:<28} {:>10} {:>8}",
                format!("total {}", r.family),
                r.train_val.to_string(),
                r.test.to_string()
            ));
        }
        lines.join("\n") + "\n"
    }
}

/// Which side of the audit an id belongs to.
fn audit_side<'a>(bundle: &'a SplitBundle) -> HashMap<&'a str, bool> {
    let mut side = HashMap::new();
    for id in bundle.train.iter().chain(&bundle.validation) {
        side.insert(id.as_str(), false);
    }
    for id in &bundle.test {
        side.insert(id.as_str(), true);
    }
    side
}

/// Hate ratios of every phrase on train+validation versus test. Tweets whose
/// id is in no split are ignored.
pub fn hate_ratio_table(corpus: &[RawTweet], splits: &SplitBundle, phrases: &KeyPhraseSet) -> HateRatioTable {
    let side = audit_side(splits);
    let mut rows: Vec<RatioRow> = phrases
        .phrases
        .iter()
        .map(|p| RatioRow {
            phrase: p.name.clone(),
            family: p.family,
            train_val: RatioCell::default(),
            test: RatioCell::default(),
        })
        .collect();
    let mut totals: Vec<RatioRow> = [Family::AntiImmigration, Family::AntiWomen]
        .into_iter()
        .map(|family| RatioRow {
            phrase: format!("total {family}"),
            family,
            train_val: RatioCell::default(),
            test: RatioCell::default(),
        })
        .collect();
    for t in corpus {
        let Some(&is_test) = side.get(t.id.as_str()) else {
            continue;
        };
        let lowered = t.text.to_lowercase();
        fn pick(row: &mut RatioRow, is_test: bool) -> &mut RatioCell {
            if is_test {
                &mut row.test
            } else {
                &mut row.train_val
            }
        }
        let mut hit = HashSet::new();
        for (phrase, row) in phrases.phrases.iter().zip(rows.iter_mut()) {
            if phrase.matches(&lowered) {
                pick(row, is_test).add(t.label);
                hit.insert(phrase.family);
            }
        }
        for row in totals.iter_mut().filter(|r| hit.contains(&r.family)) {
            pick(row, is_test).add(t.label);
        }
    }
    HateRatioTable { rows, totals }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhraseFalsePositives {
    pub phrase: String,
    pub false_positives: usize,
    pub matches: usize,
}

/// False positives on the test split, overall and per phrase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FalsePositiveReport {
    pub test_samples: usize,
    pub predicted: usize,
    pub false_positives: usize,
    pub per_phrase: Vec<PhraseFalsePositives>,
}

/// Counts test tweets predicted hateful but labelled not hateful. Test ids
/// without a prediction are skipped and excluded from `predicted`.
pub fn false_positive_breakdown(
    corpus: &[RawTweet],
    splits: &SplitBundle,
    predictions: &HashMap<String, u8>,
    phrases: &KeyPhraseSet,
) -> FalsePositiveReport {
    let test: HashSet<&str> = splits.test.iter().map(String::as_str).collect();
    let mut report = FalsePositiveReport {
        test_samples: 0,
        predicted: 0,
        false_positives: 0,
        per_phrase: phrases
            .phrases
            .iter()
            .map(|p| PhraseFalsePositives {
                phrase: p.name.clone(),
                false_positives: 0,
                matches: 0,
            })
            .collect(),
    };
    for t in corpus.iter().filter(|t| test.contains(t.id.as_str())) {
        report.test_samples += 1;
        let Some(&pred) = predictions.get(&t.id) else {
            continue;
        };
        report.predicted += 1;
        let fp = pred == 1 && t.label == 0;
        report.false_positives += usize::from(fp);
        let lowered = t.text.to_lowercase();
        for (phrase, row) in phrases.phrases.iter().zip(report.per_phrase.iter_mut()) {
            if phrase.matches(&lowered) {
                row.matches += 1;
                row.false_positives += usize::from(fp);
            }
        }
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Stratified,
}

/// Original HatEval EN proportions, train 9000 : validation 1000 : test 2971.
pub const DEFAULT_RATIOS: [f64; 3] = [9000.0 / 12971.0, 1000.0 / 12971.0, 2971.0 / 12971.0];

pub const SPLIT_NAMES: [&str; 3] = ["train", "validation", "test"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitBundle {
    pub provenance: Provenance,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub ratios: Option<[f64; 3]>,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    /// Category name → [train, validation, test] counts.
    #[serde(default)]
    pub histogram: BTreeMap<String, [usize; 3]>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SplitBundle {
    /// A bundle describing pre-existing partitions.
    pub fn original(train: Vec<String>, validation: Vec<String>, test: Vec<String>) -> Result<Self> {
        let bundle = Self {
            provenance: Provenance::Original,
            seed: None,
            ratios: None,
            train,
            validation,
            test,
            histogram: BTreeMap::new(),
            warnings: Vec::new(),
        };
        bundle.check_disjoint()?;
        Ok(bundle)
    }

    pub fn splits(&self) -> [&Vec<String>; 3] {
        [&self.train, &self.validation, &self.test]
    }

    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.splits().into_iter().flatten() {
            if !seen.insert(id.as_str()) {
                return Err(PartitionError::OverlappingSplits(id.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.splits().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Normalises three non-negative weights to proportions.
pub fn normalize_ratios(weights: &[f64]) -> Result<[f64; 3]> {
    let bad = || PartitionError::Ratios(weights.to_vec());
    let [a, b, c] = weights else {
        return Err(bad());
    };
    let sum = a + b + c;
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || sum <= 0.0 {
        return Err(bad());
    }
    Ok([a / sum, b / sum, c / sum])
}

/// Floor/ceil allocations of `n` items over three splits whose sizes stay
/// within one of `n·ratio`, best largest-remainder choice first.
fn allocations(n: usize, ratios: &[f64; 3]) -> Vec<[usize; 3]> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let floors: [usize; 3] = std::array::from_fn(|i| exact[i].floor() as usize);
    let short = n.saturating_sub(floors.iter().sum());
    // Splits eligible for the extra item, by descending remainder then index.
    let mut order: Vec<usize> = (0..3).filter(|&i| exact[i] > floors[i] as f64).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - floors[a] as f64;
        let rb = exact[b] - floors[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    if short == 0 {
        return vec![floors];
    }
    let mut out = Vec::new();
    let k = order.len();
    // Every subset of `order` of size `short`, ranked so the largest
    // remainders are preferred.
    let mut subsets: Vec<Vec<usize>> = (0u32..(1 << k))
        .filter(|m| m.count_ones() as usize == short)
        .map(|m| (0..k).filter(|&j| m & (1 << j) != 0).map(|j| order[j]).collect())
        .collect();
    subsets.sort_by_key(|s: &Vec<usize>| s.iter().map(|&i| order.iter().position(|&o| o == i).unwrap()).collect::<Vec<_>>());
    for s in subsets {
        let mut alloc = floors;
        for i in s {
            alloc[i] += 1;
        }
        out.push(alloc);
    }
    out
}

/// Re-partitions the corpus with each of the six categories split by
/// `ratios` (normalised weights).
///
/// Within a category ids are sorted, then shuffled by the seed, then cut.
/// Sizes are rounded by largest remainder; among the floor/ceil roundings
/// that keep every category within one item of its target, the one with the
/// smallest train/test hate-ratio gap is used.
pub fn stratified_resplit(
    corpus: &[RawTweet],
    phrases: &KeyPhraseSet,
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitBundle> {
    if corpus.is_empty() {
        return Err(PartitionError::EmptyCorpus);
    }
    let ratios = normalize_ratios(&ratios)?;
    let mut buckets: Vec<Vec<&str>> = vec![Vec::new(); Category::COUNT];
    for t in corpus {
        buckets[categorize(&t.text, t.label, phrases).index()].push(&t.id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for b in buckets.iter_mut() {
        b.sort_unstable();
        b.shuffle(&mut rng);
    }

    let categories: Vec<Category> = Category::all().collect();
    let active_splits = ratios.iter().filter(|&&r| r > 0.0).count();
    let mut warnings = Vec::new();
    for (c, b) in categories.iter().zip(&buckets) {
        if !b.is_empty() && b.len() < active_splits {
            warnings.push(format!(
                "category {c} has {} examples for {active_splits} splits; assigned by rounding",
                b.len()
            ));
        }
    }

    let options: Vec<Vec<[usize; 3]>> = buckets.iter().map(|b| allocations(b.len(), &ratios)).collect();
    let choice = best_allocation(&options, &categories);

    let mut bundle = SplitBundle {
        provenance: Provenance::Stratified,
        seed: Some(seed),
        ratios: Some(ratios),
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        histogram: BTreeMap::new(),
        warnings,
    };
    for ((cat, ids), alloc) in categories.iter().zip(&buckets).zip(&choice) {
        let (train, rest) = ids.split_at(alloc[0]);
        let (val, test) = rest.split_at(alloc[1]);
        bundle.train.extend(train.iter().map(|s| s.to_string()));
        bundle.validation.extend(val.iter().map(|s| s.to_string()));
        bundle.test.extend(test.iter().map(|s| s.to_string()));
        bundle.histogram.insert(cat.to_string(), *alloc);
    }
    for split in [&mut bundle.train, &mut bundle.validation, &mut bundle.test] {
        split.sort_unstable();
    }
    Ok(bundle)
}

fn hate_gap(allocs: &[[usize; 3]], categories: &[Category]) -> f64 {
    let (mut hate, mut size) = ([0usize; 3], [0usize; 3]);
    for (a, c) in allocs.iter().zip(categories) {
        for s in 0..3 {
            size[s] += a[s];
            if c.hateful {
                hate[s] += a[s];
            }
        }
    }
    if size[0] == 0 || size[2] == 0 {
        return 0.0;
    }
    (hate[0] as f64 / size[0] as f64 - hate[2] as f64 / size[2] as f64).abs()
}

/// Exhaustive search over per-category roundings (at most 3⁶ combinations).
/// Ties keep the earlier, i.e. largest-remainder-preferred, combination.
fn best_allocation(options: &[Vec<[usize; 3]>], categories: &[Category]) -> Vec<[usize; 3]> {
    let mut idx = vec![0usize; options.len()];
    let mut best: Vec<[usize; 3]> = options.iter().map(|o| o[0]).collect();
    let mut best_gap = hate_gap(&best, categories);
    loop {
        let mut pos = options.len();
        loop {
            if pos == 0 {
                return best;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < options[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
        let current: Vec<[usize; 3]> = options.iter().zip(&idx).map(|(o, &i)| o[i]).collect();
        let gap = hate_gap(&current, categories);
        if gap < best_gap - 1e-12 {
            best_gap = gap;
            best = current;
        }
    }
}

/// Hate ratio (hateful fraction) of the ids in `split`.
pub fn split_hate_ratio(corpus: &[RawTweet], split: &[String]) -> Option<f64> {
    let ids: HashSet<&str> = split.iter().map(String::as_str).collect();
    let (mut hate, mut total) = (0usize, 0usize);
    for t in corpus.iter().filter(|t| ids.contains(t.id.as_str())) {
        total += 1;
        hate += usize::from(t.label == 1);
    }
    (total > 0).then(|| hate as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use proptest::prelude::*;

    fn tweet(id: impl Into<String>, text: &str, label: u8) -> RawTweet {
        RawTweet {
            id: id.into(),
            text: text.into(),
            label,
            language: Language::En,
        }
    }

    #[test]
    fn categorize_examples() {
        let p = KeyPhraseSet::default();
        let c = categorize("build the wall now", 1, &p);
        assert_eq!((c.family, c.hateful), (Family::AntiImmigration, true));
        let c = categorize("nice weather", 0, &p);
        assert_eq!((c.family, c.hateful), (Family::None, false));
        assert_eq!(categorize("maga bitch", 1, &p).family, Family::AntiImmigration);
        let women_first = p.clone().with_precedence(Family::AntiWomen);
        assert_eq!(categorize("maga bitch", 1, &women_first).family, Family::AntiWomen);
        assert_eq!(categorize("BUILD THAT WALL", 0, &p).family, Family::AntiImmigration);
        assert_eq!(categorize("build a wall", 0, &p).family, Family::None);
    }

    #[test]
    fn star_expands_to_the_and_that() {
        assert_eq!(expand_pattern("Build * wall"), ["build the wall", "build that wall"]);
        let build = &KeyPhraseSet::default().phrases[0];
        assert_eq!(build.patterns, ["build the wall", "build that wall"]);
    }

    #[test]
    fn category_indices_are_dense() {
        let mut seen: Vec<usize> = Category::all().map(Category::index).collect();
        seen.sort();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn phrase_file_parsing() {
        let text = "anti_immigration\tbuild * wall\tbuild * wall\nanti_immigration\tmaga\tmaga\nanti_immigration\tmaga\tmake america great again\nanti_women\tb\tbitch\n";
        let set = KeyPhraseSet::parse(text).unwrap();
        assert_eq!(set.phrases.len(), 3);
        assert_eq!(set.phrases[1].patterns, ["maga", "make america great again"]);
        assert!(matches!(
            KeyPhraseSet::parse("anti_women\tb\tbitch\n"),
            Err(PartitionError::EmptyFamily(Family::AntiImmigration))
        ));
        assert!(matches!(
            KeyPhraseSet::parse("anti_women\tbitch\n"),
            Err(PartitionError::PhraseFile { line: 1, .. })
        ));
    }

    #[test]
    fn hate_ratio_hand_counts() {
        let mut corpus = Vec::new();
        for i in 0..10 {
            corpus.push(tweet(format!("tv{i}"), "maga rally", u8::from(i < 9)));
        }
        corpus.push(tweet("t0", "maga", 0));
        corpus.push(tweet("t1", "illegal aliens", 1));
        let ids = |p: &str| corpus.iter().filter(|t| t.id.starts_with(p)).map(|t| t.id.clone()).collect::<Vec<_>>();
        let bundle = SplitBundle::original(ids("tv"), vec![], ids("t0").into_iter().chain(ids("t1")).collect()).unwrap();
        let table = hate_ratio_table(&corpus, &bundle, &KeyPhraseSet::default());
        let maga = table.row("maga").unwrap();
        assert_eq!(maga.train_val, RatioCell { hateful: 9, total: 10 });
        assert_eq!(maga.train_val.to_string(), "90%");
        assert_eq!(maga.test.ratio(), Some(0.0));
        assert_eq!(table.row("bitch").unwrap().test.to_string(), "n/a");
        let total = table.total(Family::AntiImmigration).unwrap();
        assert_eq!(total.test, RatioCell { hateful: 1, total: 2 });
        assert!(table.render().contains("total anti_immigration"));
    }

    #[test]
    fn false_positives() {
        let corpus = vec![tweet("a", "bitch", 0), tweet("b", "bitch", 1), tweet("c", "hello", 0), tweet("d", "x", 0)];
        let bundle = SplitBundle::original(vec!["d".into()], vec![], vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let preds: HashMap<String, u8> = [("a", 1), ("b", 1), ("c", 1), ("d", 1)].map(|(k, v)| (k.to_string(), v)).into();
        let r = false_positive_breakdown(&corpus, &bundle, &preds, &KeyPhraseSet::default());
        assert_eq!((r.test_samples, r.false_positives), (3, 2));
        let bitch = r.per_phrase.iter().find(|p| p.phrase == "bitch").unwrap();
        assert_eq!((bitch.matches, bitch.false_positives), (2, 1));
    }

    fn category_corpus(per_category: usize) -> Vec<RawTweet> {
        let texts = ["nothing here", "build the wall", "you bitch"];
        let mut out = Vec::new();
        for (f, text) in texts.iter().enumerate() {
            for label in [0u8, 1] {
                for i in 0..per_category {
                    out.push(tweet(format!("{f}{label}-{i:04}"), text, label));
                }
            }
        }
        out
    }

    #[test]
    fn resplit_arithmetic_example() {
        let corpus = category_corpus(100);
        let b = stratified_resplit(&corpus, &KeyPhraseSet::default(), [0.7, 0.1, 0.2], 7).unwrap();
        for counts in b.histogram.values() {
            assert_eq!(counts, &[70, 10, 20]);
        }
        assert_eq!((b.train.len(), b.validation.len(), b.test.len()), (420, 60, 120));
        assert!(b.warnings.is_empty());
    }

    #[test]
    fn resplit_degenerate_ratios_and_errors() {
        let corpus = category_corpus(5);
        let b = stratified_resplit(&corpus, &KeyPhraseSet::default(), [1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(b.train.len(), 30);
        assert!(b.validation.is_empty() && b.test.is_empty());
        assert!(matches!(
            stratified_resplit(&corpus, &KeyPhraseSet::default(), [0.0, 0.0, 0.0], 1),
            Err(PartitionError::Ratios(_))
        ));
        assert!(matches!(
            stratified_resplit(&[], &KeyPhraseSet::default(), DEFAULT_RATIOS, 1),
            Err(PartitionError::EmptyCorpus)
        ));
        let tiny = vec![tweet("a", "hi", 0), tweet("b", "hi", 1)];
        let b = stratified_resplit(&tiny, &KeyPhraseSet::default(), DEFAULT_RATIOS, 1).unwrap();
        assert_eq!(b.warnings.len(), 2);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn allocations_stay_within_one() {
        let r = normalize_ratios(&[9000.0, 1000.0, 2971.0]).unwrap();
        for n in 0..200 {
            let opts = allocations(n, &r);
            assert!(!opts.is_empty());
            for a in opts {
                assert_eq!(a.iter().sum::<usize>(), n);
                for i in 0..3 {
                    assert!((a[i] as f64 - r[i] * n as f64).abs() < 1.0 + 1e-9, "{n} {a:?}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn resplit_is_a_partition(
            sizes in proptest::collection::vec(0usize..40, 6),
            seed in any::<u64>(),
            w in proptest::collection::vec(0.0f64..1.0, 3),
        ) {
            prop_assume!(w.iter().sum::<f64>() > 0.01);
            let texts = ["plain", "build that wall", "bitch"];
            let mut corpus = Vec::new();
            for (c, &n) in sizes.iter().enumerate() {
                for i in 0..n {
                    corpus.push(tweet(format!("{c}-{i}"), texts[c / 2], (c % 2) as u8));
                }
            }
            prop_assume!(!corpus.is_empty());
            let p = KeyPhraseSet::default();
            let b = stratified_resplit(&corpus, &p, [w[0], w[1], w[2]], seed).unwrap();
            b.check_disjoint().unwrap();
            let mut all: Vec<String> = b.splits().into_iter().flatten().cloned().collect();
            all.sort();
            let mut ids: Vec<String> = corpus.iter().map(|t| t.id.clone()).collect();
            ids.sort();
            prop_assert_eq!(all, ids);

            let ratios = b.ratios.unwrap();
            for (cat, counts) in &b.histogram {
                let n: usize = counts.iter().sum();
                for s in 0..3 {
                    prop_assert!((counts[s] as f64 - ratios[s] * n as f64).abs() < 1.0 + 1e-9, "{} {:?}", cat, counts);
                }
            }

            let mut shuffled = corpus.clone();
            shuffled.reverse();
            prop_assert_eq!(&b, &stratified_resplit(&shuffled, &p, [w[0], w[1], w[2]], seed).unwrap());
        }
    }
}
