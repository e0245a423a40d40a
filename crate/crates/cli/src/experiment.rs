use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use frozenfeat::blocks::BlockConfig;
use frozenfeat::features::{load_features, FeatureSequence, LayerView};
use frozenfeat::trainer::{
    few_shot_sweep, join_examples, run_experiment, ExperimentData, ExperimentSpec, Protocol, RunRecord, Splits,
    TrainSpec,
};
use serde::{Deserialize, Serialize};

use crate::commands::{load_corpus, load_splits};
use crate::error::{CliError, Result};
use crate::output::{render_table, write_json, write_text};

fn default_view() -> LayerView {
    LayerView::FinalLayer
}

/// One language: labelled corpus, its FRZF features and a split file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub corpus: PathBuf,
    pub features: PathBuf,
    #[serde(default = "default_view")]
    pub view: LayerView,
    pub splits: PathBuf,
}

/// An experiment file. Relative paths are taken from the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub source: DataSource,
    #[serde(default)]
    pub target: Option<DataSource>,
    pub protocol: Protocol,
    pub block: BlockConfig,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentFile {
    /// Parses and validates everything that can be checked without
    /// touching the data files.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::data_at(path, e))?;
        let mut file: ExperimentFile = serde_json::from_str(&text).map_err(|e| CliError::schema(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        file.source.resolve(base);
        if let Some(t) = file.target.as_mut() {
            t.resolve(base);
        }
        if let Some(dir) = file.output_dir.as_mut() {
            *dir = base.join(&*dir);
        }
        file.validate().map_err(|m| CliError::schema(path, m))?;
        Ok(file)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        self.protocol.validate().map_err(|e| e.to_string())?;
        self.block.validate().map_err(|e| e.to_string())?;
        self.train.resolve(&self.block, self.seed).map_err(|e| e.to_string())?;
        if self.protocol != Protocol::Unilingual && self.target.is_none() {
            return Err(format!("protocol {} needs a target data source", self.protocol));
        }
        Ok(())
    }

    pub fn spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            protocol: self.protocol,
            block: self.block.clone(),
            train: self.train.clone(),
            seed: self.seed,
        }
    }

    /// Loads the source and, when present, the target splits. The target
    /// is skipped for `unilingual`, which never reads it.
    pub fn load_data(&self, with_target: bool) -> Result<ExperimentData> {
        let target = match (&self.target, with_target) {
            (Some(t), true) => Some(t.load()?),
            _ => None,
        };
        Ok(ExperimentData {
            source: self.source.load()?,
            target,
        })
    }

    pub fn output_dir(&self, cli_override: Option<&Path>) -> Result<PathBuf> {
        cli_override
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .ok_or_else(|| CliError::Usage("no output directory: pass --out or set output_dir".into()))
    }
}

impl DataSource {
    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.corpus, &mut self.features, &mut self.splits] {
            *p = base.join(&*p);
        }
    }

    pub fn load(&self) -> Result<Splits> {
        let corpus = load_corpus(&self.corpus)?;
        let bundle = load_splits(&self.splits)?;
        let features: BTreeMap<String, FeatureSequence> =
            load_features(&self.features, self.view).map_err(|e| CliError::data_at(&self.features, e))?;
        let join = |ids: &[String]| join_examples(ids, &corpus, &features).map_err(CliError::from);
        Ok(Splits {
            train: join(&bundle.train)?,
            validation: join(&bundle.validation)?,
            test: join(&bundle.test)?,
        })
    }
}

fn predictions_tsv(record: &RunRecord) -> String {
    let mut out = String::from("id\tprediction\n");
    for (id, p) in &record.predictions {
        out.push_str(&format!("{id}\t{p}\n"));
    }
    out
}

fn summary_row(label: String, r: &RunRecord) -> Vec<String> {
    vec![
        label,
        r.sizes.train.to_string(),
        r.sizes.injected.to_string(),
        r.best_epoch.to_string(),
        format!("{:.2}", r.report.accuracy),
        format!("{:.2}", r.report.f1),
        format!("{:.2}", r.report.macro_f1),
    ]
}

const SUMMARY_HEADER: [&str; 7] = ["run", "train", "injected", "best epoch", "accuracy", "F1", "macro-F1"];

pub fn run(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<RunRecord> {
    let mut file = ExperimentFile::load(path)?;
    if let Some(s) = seed {
        file.seed = s;
    }
    let out_dir = file.output_dir(out)?;
    let data = file.load_data(file.protocol != Protocol::Unilingual)?;
    let record = run_experiment(&file.spec(), &data)?;
    write_json(&out_dir.join("run.json"), &record)?;
    write_text(&out_dir.join("predictions.tsv"), &predictions_tsv(&record))?;
    let table = render_table(&SUMMARY_HEADER, &[summary_row(record.protocol.to_string(), &record)]);
    write_text(&out_dir.join("summary.txt"), &table)?;
    print!("{table}");
    Ok(record)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub pct: u32,
    pub record: String,
    pub injected: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub macro_f1: f64,
}

/// Comma-separated percentages in `0..=100`.
pub fn parse_pcts(text: &str) -> std::result::Result<Vec<u32>, String> {
    let pcts = text
        .split(',')
        .map(|p| {
            let v: u32 = p.trim().parse().map_err(|e| format!("percentage {p:?}: {e}"))?;
            if v > 100 {
                return Err(format!("percentage {v} exceeds 100"));
            }
            Ok(v)
        })
        .collect::<std::result::Result<Vec<u32>, String>>()?;
    if pcts.is_empty() {
        return Err("no percentages given".into());
    }
    Ok(pcts)
}

/// Runs `few_shot` once per percentage. The protocol in the file only has
/// to name a target; its percentage is ignored.
pub fn sweep(path: &Path, pcts: &[u32], seed: Option<u64>, out: Option<&Path>) -> Result<Vec<RunRecord>> {
    let mut file = ExperimentFile::load(path)?;
    if let Some(s) = seed {
        file.seed = s;
    }
    if file.target.is_none() {
        return Err(CliError::schema(path, "a sweep needs a target data source"));
    }
    let out_dir = file.output_dir(out)?;
    let data = file.load_data(true)?;
    let records = few_shot_sweep(&file.spec(), &data, pcts)?;

    let mut entries = Vec::with_capacity(records.len());
    let mut rows = Vec::with_capacity(records.len());
    for (&pct, record) in pcts.iter().zip(&records) {
        let name = format!("few_shot_{pct}.json");
        write_json(&out_dir.join(&name), record)?;
        write_text(&out_dir.join(format!("few_shot_{pct}.predictions.tsv")), &predictions_tsv(record))?;
        rows.push(summary_row(format!("few_shot({pct})"), record));
        entries.push(SweepEntry {
            pct,
            record: name,
            injected: record.sizes.injected,
            accuracy: record.report.accuracy,
            f1: record.report.f1,
            macro_f1: record.report.macro_f1,
        });
    }
    write_json(&out_dir.join("summary.json"), &entries)?;
    let table = render_table(&SUMMARY_HEADER, &rows);
    write_text(&out_dir.join("summary.txt"), &table)?;
    print!("{table}");
    Ok(records)
}
