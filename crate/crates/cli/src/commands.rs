use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use frozenfeat::corpus::{read_corpus, write_corpus, RawTweet};
use frozenfeat::features::{coverage_report, Coverage, EmbeddingTable};
use frozenfeat::partition::{
    false_positive_breakdown, hate_ratio_table, split_hate_ratio, stratified_resplit, Family, FalsePositiveReport,
    HateRatioTable, KeyPhraseSet, SplitBundle, DEFAULT_RATIOS, SPLIT_NAMES,
};
use frozenfeat::textprep::{clean_corpus, clean_text, corpus_stats, detect_outliers, CorpusStats, RuleSet};
use frozenfeat::trainer::{run_baseline, MetricsReport, SvmConfig};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::output::{render_table, write_json};

pub fn load_corpus(path: &Path) -> Result<Vec<RawTweet>> {
    read_corpus(path).map_err(|e| CliError::data_at(path, e))
}

pub fn load_rules(dir: Option<&Path>) -> Result<RuleSet> {
    match dir {
        Some(d) => RuleSet::load_dir(d).map_err(|e| CliError::data_at(d, e)),
        None => Ok(RuleSet::default()),
    }
}

pub fn load_phrases(path: Option<&Path>, precedence: Option<Family>) -> Result<KeyPhraseSet> {
    let set = match path {
        Some(p) => KeyPhraseSet::load(p).map_err(|e| CliError::data_at(p, e))?,
        None => KeyPhraseSet::default(),
    };
    Ok(match precedence {
        Some(f) => set.with_precedence(f),
        None => set,
    })
}

pub fn load_splits(path: &Path) -> Result<SplitBundle> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data_at(path, e))?;
    let bundle: SplitBundle = serde_json::from_str(&text).map_err(|e| CliError::data_at(path, e))?;
    bundle.check_disjoint().map_err(|e| CliError::data_at(path, e))?;
    Ok(bundle)
}

/// Corpus texts as token lists, cleaned first when `rules` is given.
fn tokenize(corpus: &[RawTweet], rules: Option<&RuleSet>) -> Vec<Vec<String>> {
    corpus
        .iter()
        .map(|t| match rules {
            Some(r) => clean_text(&t.text, r),
            None => t.text.split_whitespace().map(str::to_owned).collect(),
        })
        .collect()
}

fn maybe_clean(corpus: Vec<RawTweet>, clean: bool, rules_dir: Option<&Path>) -> Result<Vec<RawTweet>> {
    if clean {
        Ok(clean_corpus(&corpus, &load_rules(rules_dir)?))
    } else {
        Ok(corpus)
    }
}

#[derive(Serialize)]
struct CleanSummary {
    tweets_in: usize,
    tweets_out: usize,
    /// Dropped for exceeding the word limit.
    outliers: Vec<String>,
    /// Dropped because nothing survived cleaning.
    emptied: Vec<String>,
    tokens: usize,
    raw: Option<CorpusStats>,
    cleaned: Option<CorpusStats>,
}

pub struct CleanArgs<'a> {
    pub input: &'a Path,
    pub out: &'a Path,
    pub rules: Option<&'a Path>,
    pub stats: Option<&'a Path>,
    pub max_words: Option<usize>,
}

pub fn clean(args: CleanArgs) -> Result<()> {
    let corpus = load_corpus(args.input)?;
    let rules = load_rules(args.rules)?;
    let stats_path = args
        .stats
        .map(Path::to_path_buf)
        .unwrap_or_else(|| args.out.with_extension("stats.json"));
    if corpus.is_empty() {
        log::warn!("{} contains no tweets", args.input.display());
    }
    let outliers = match args.max_words {
        Some(m) => detect_outliers(&corpus, m)?,
        None => Vec::new(),
    };
    let dropped: HashSet<&str> = outliers.iter().map(String::as_str).collect();
    let kept: Vec<RawTweet> = corpus.iter().filter(|t| !dropped.contains(t.id.as_str())).cloned().collect();
    let (cleaned, emptied): (Vec<RawTweet>, Vec<RawTweet>) =
        clean_corpus(&kept, &rules).into_iter().partition(|t| !t.text.is_empty());
    for t in &emptied {
        log::warn!("tweet {} is empty after cleaning and was dropped", t.id);
    }
    write_corpus(args.out, &cleaned).map_err(|e| CliError::data_at(args.out, e))?;

    let stats_of = |tweets: &[RawTweet]| {
        if tweets.is_empty() {
            Ok(None)
        } else {
            corpus_stats([("corpus", tweets)]).map(Some)
        }
    };
    let summary = CleanSummary {
        tweets_in: corpus.len(),
        tweets_out: cleaned.len(),
        outliers,
        emptied: emptied.into_iter().map(|t| t.id).collect(),
        tokens: cleaned.iter().map(|t| t.text.split(' ').count()).sum(),
        raw: stats_of(&kept)?,
        cleaned: stats_of(&cleaned)?,
    };
    write_json(&stats_path, &summary)?;
    println!(
        "cleaned {} of {} tweets into {}",
        summary.tweets_out,
        summary.tweets_in,
        args.out.display()
    );
    Ok(())
}

/// `id<TAB>prediction` rows, optional `id` header.
pub fn read_predictions(path: &Path) -> Result<HashMap<String, u8>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data_at(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (i == 0 && line.starts_with("id\t")) {
            continue;
        }
        let bad = |m: &str| CliError::Data(format!("{} line {}: {m}", path.display(), i + 1));
        let (id, pred) = line.split_once('\t').ok_or_else(|| bad("expected id<TAB>prediction"))?;
        let pred = match pred.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(&format!("prediction {other:?} is not 0 or 1"))),
        };
        if out.insert(id.to_string(), pred).is_some() {
            return Err(bad(&format!("duplicate id {id:?}")));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct AuditOutput {
    table: HateRatioTable,
    false_positives: Option<FalsePositiveReport>,
}

pub struct AuditArgs<'a> {
    pub input: &'a Path,
    pub splits: &'a Path,
    pub phrases: Option<&'a Path>,
    pub precedence: Option<Family>,
    pub predictions: Option<&'a Path>,
    pub clean: bool,
    pub rules: Option<&'a Path>,
    pub json: Option<&'a Path>,
}

pub fn audit(args: AuditArgs) -> Result<()> {
    let corpus = maybe_clean(load_corpus(args.input)?, args.clean, args.rules)?;
    let splits = load_splits(args.splits)?;
    let phrases = load_phrases(args.phrases, args.precedence)?;
    let table = hate_ratio_table(&corpus, &splits, &phrases);
    print!("{}", table.render());
    let false_positives = match args.predictions {
        Some(p) => {
            let report = false_positive_breakdown(&corpus, &splits, &read_predictions(p)?, &phrases);
            println!(
                "\n{} false positives in {} test samples ({} with predictions)",
                report.false_positives, report.test_samples, report.predicted
            );
            let rows: Vec<Vec<String>> = report
                .per_phrase
                .iter()
                .map(|r| vec![r.phrase.clone(), r.false_positives.to_string(), r.matches.to_string()])
                .collect();
            print!("{}", render_table(&["phrase", "false positives", "matches"], &rows));
            Some(report)
        }
        None => None,
    };
    if let Some(path) = args.json {
        write_json(
            path,
            &AuditOutput {
                table,
                false_positives,
            },
        )?;
    }
    Ok(())
}

/// Three comma-separated non-negative weights.
pub fn parse_ratios(text: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated ratios, got {text:?}"));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = part.parse::<f64>().map_err(|e| format!("ratio {part:?}: {e}"))?;
    }
    Ok(out)
}

pub struct ResplitArgs<'a> {
    pub input: &'a Path,
    pub out: &'a Path,
    pub ratios: Option<[f64; 3]>,
    pub seed: u64,
    pub phrases: Option<&'a Path>,
    pub precedence: Option<Family>,
    pub clean: bool,
    pub rules: Option<&'a Path>,
}

pub fn resplit(args: ResplitArgs) -> Result<()> {
    let corpus = maybe_clean(load_corpus(args.input)?, args.clean, args.rules)?;
    let phrases = load_phrases(args.phrases, args.precedence)?;
    let bundle = stratified_resplit(&corpus, &phrases, args.ratios.unwrap_or(DEFAULT_RATIOS), args.seed)?;
    for w in &bundle.warnings {
        log::warn!("{w}");
    }
    write_json(args.out, &bundle)?;
    let rows: Vec<Vec<String>> = SPLIT_NAMES
        .iter()
        .zip(bundle.splits())
        .map(|(name, ids)| {
            let ratio = split_hate_ratio(&corpus, ids).map_or("n/a".to_string(), |r| format!("{:.2}%", 100.0 * r));
            vec![name.to_string(), ids.len().to_string(), ratio]
        })
        .collect();
    print!("{}", render_table(&["split", "tweets", "hate ratio"], &rows));
    Ok(())
}

pub struct CoverageArgs<'a> {
    pub input: &'a Path,
    pub emb: &'a Path,
    pub clean: bool,
    pub rules: Option<&'a Path>,
    pub json: Option<&'a Path>,
}

pub fn coverage(args: CoverageArgs) -> Result<Coverage> {
    let corpus = load_corpus(args.input)?;
    let table = EmbeddingTable::load(args.emb).map_err(|e| CliError::data_at(args.emb, e))?;
    let rules = if args.clean { Some(load_rules(args.rules)?) } else { None };
    let tokens = tokenize(&corpus, rules.as_ref());
    let report = coverage_report(&tokens, &table)?;
    println!("unique word coverage: {:.2}%", report.unique_word_coverage);
    println!("full text coverage:   {:.2}%", report.full_text_coverage);
    println!("vocabulary: {}, tokens: {}", report.vocabulary, report.tokens);
    if let Some(path) = args.json {
        write_json(path, &report)?;
    }
    Ok(report)
}

#[derive(Serialize)]
struct BaselineOutput {
    c: f64,
    vocabulary: usize,
    iterations: usize,
    final_objective: f64,
    report: MetricsReport,
}

pub struct BaselineArgs<'a> {
    pub input: &'a Path,
    pub splits: &'a Path,
    pub c: f64,
    pub clean: bool,
    pub rules: Option<&'a Path>,
    pub json: Option<&'a Path>,
}

pub fn baseline(args: BaselineArgs) -> Result<()> {
    let corpus = load_corpus(args.input)?;
    let splits = load_splits(args.splits)?;
    let rules = if args.clean { Some(load_rules(args.rules)?) } else { None };
    let by_id: HashMap<&str, &RawTweet> = corpus.iter().map(|t| (t.id.as_str(), t)).collect();
    let select = |ids: &[String]| -> Result<(Vec<Vec<String>>, Vec<u8>)> {
        let tweets = ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|&t| t.clone())
                    .ok_or_else(|| CliError::Data(format!("split id {id:?} is not in {}", args.input.display())))
            })
            .collect::<Result<Vec<RawTweet>>>()?;
        Ok((tokenize(&tweets, rules.as_ref()), tweets.iter().map(|t| t.label).collect()))
    };
    let (train_docs, train_labels) = select(&splits.train)?;
    let (test_docs, test_labels) = select(&splits.test)?;
    let cfg = SvmConfig {
        c: args.c,
        ..SvmConfig::default()
    };
    let (tfidf, model, report) = run_baseline(&train_docs, &train_labels, &test_docs, &test_labels, &cfg)?;
    println!(
        "accuracy {:.2}  precision {:.2}  recall {:.2}  F1 {:.2}  macro-F1 {:.2}",
        report.accuracy, report.precision, report.recall, report.f1, report.macro_f1
    );
    if let Some(path) = args.json {
        write_json(
            path,
            &BaselineOutput {
                c: args.c,
                vocabulary: tfidf.len(),
                iterations: model.objective_history.len() - 1,
                final_objective: *model.objective_history.last().expect("initial objective recorded"),
                report,
            },
        )?;
    }
    Ok(())
}
