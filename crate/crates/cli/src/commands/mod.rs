mod blockmodel;
mod evaluate;
mod generate;
mod perturb;
mod select;
mod sweep;

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use blocksel_core::blockmodel::BlockModelRecord;
use blocksel_core::evaluation::evaluate_columns;
use blocksel_core::{
    evaluate_selection, load_dataset, AttributedNetwork, BlockModel, DatasetManifest, Error,
    FeatureScores,
};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::args::Command;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => generate::run(&args),
        Command::Blockmodel(args) => blockmodel::run(&args),
        Command::Select(args) => select::run(&args),
        Command::Evaluate(args) => evaluate::run(&args),
        Command::Sweep(args) => sweep::run(&args),
        Command::Perturb(args) => perturb::run(&args),
    }
}

pub struct Dataset {
    pub name: String,
    pub net: AttributedNetwork,
}

pub fn load_network(manifest: &Path) -> Result<Dataset> {
    let parsed = DatasetManifest::load(manifest)
        .with_context(|| format!("loading dataset manifest {}", manifest.display()))?;
    let net = load_dataset(&parsed).with_context(|| format!("loading dataset {:?}", parsed.name))?;
    Ok(Dataset {
        name: parsed.name,
        net,
    })
}

/// Block count from `--k`, else the dataset's class count.
pub fn resolve_k(net: &AttributedNetwork, k: Option<usize>) -> Result<usize> {
    match (k, net.class_count()) {
        (Some(k), _) => Ok(k),
        (None, Some(c)) => Ok(c),
        (None, None) => bail!("dataset has no labels; pass --k"),
    }
}

pub fn load_block_model(path: &Path, net: &AttributedNetwork) -> Result<(String, BlockModel)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let record: BlockModelRecord =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if record.n != net.node_count() {
        bail!(
            "block model {} covers {} nodes but the dataset has {}",
            path.display(),
            record.n,
            net.node_count()
        );
    }
    let model = record.to_block_model()?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok((id, model))
}

pub fn candidate_id(index: usize) -> String {
    format!("candidate_{index:02}")
}

/// Scores written by `select`, tagged with the configuration that produced them.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScoresFile {
    pub blockmodel_id: String,
    pub beta_bar: f64,
    pub gamma: f64,
    pub scores: Vec<f64>,
}

impl ScoresFile {
    pub fn new(blockmodel_id: &str, beta_bar: f64, gamma: f64, scores: &FeatureScores) -> Self {
        Self {
            blockmodel_id: blockmodel_id.to_string(),
            beta_bar,
            gamma,
            scores: scores.values().to_vec(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn feature_scores(&self) -> Result<FeatureScores> {
        Ok(FeatureScores::new(Array1::from(self.scores.clone()))?)
    }
}

/// One flat report row. ACC and NMI are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub d: usize,
    pub beta_bar: Option<f64>,
    pub gamma: Option<f64>,
    pub blockmodel_id: String,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
    pub insufficient_support: bool,
}

pub struct RowContext<'a> {
    pub dataset: &'a str,
    pub beta_bar: Option<f64>,
    pub gamma: Option<f64>,
    pub blockmodel_id: &'a str,
}

impl RowContext<'_> {
    fn row(&self, d: usize, insufficient: bool) -> ReportRow {
        ReportRow {
            dataset: self.dataset.to_string(),
            d,
            beta_bar: self.beta_bar,
            gamma: self.gamma,
            blockmodel_id: self.blockmodel_id.to_string(),
            acc_mean: 0.0,
            acc_std: 0.0,
            nmi_mean: 0.0,
            nmi_std: 0.0,
            insufficient_support: insufficient,
        }
    }

    /// Evaluates the top-`d` features. Too few nonzero scores gives a row of
    /// zeros flagged `insufficient_support`.
    pub fn evaluate(
        &self,
        net: &AttributedNetwork,
        scores: &FeatureScores,
        d: usize,
        runs: usize,
        seed: u64,
    ) -> Result<ReportRow> {
        match evaluate_selection(net, scores, d, runs, seed) {
            Ok(report) => Ok(self.fill(d, &report)),
            Err(Error::InsufficientSupport { .. }) => Ok(self.row(d, true)),
            Err(e) => Err(e.into()),
        }
    }

    pub fn all_features(&self, net: &AttributedNetwork, runs: usize, seed: u64) -> Result<ReportRow> {
        let columns: Vec<usize> = (0..net.feature_count()).collect();
        let report = evaluate_columns(net, &columns, runs, seed)?;
        Ok(self.fill(columns.len(), &report))
    }

    pub fn zeros(&self, d: usize) -> ReportRow {
        self.row(d, false)
    }

    fn fill(&self, d: usize, report: &blocksel_core::EvaluationReport) -> ReportRow {
        ReportRow {
            acc_mean: 100.0 * report.acc_mean,
            acc_std: 100.0 * report.acc_std,
            nmi_mean: 100.0 * report.nmi_mean,
            nmi_std: 100.0 * report.nmi_std,
            ..self.row(d, false)
        }
    }
}

pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    Ok(writer.into_inner().map_err(|e| e.into_error())?)
}

pub fn rows_from_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    reader
        .deserialize()
        .map(|row| row.with_context(|| format!("parsing {}", path.display())))
        .collect()
}

/// Writes `config.json` into `dir`, or, when one exists already, checks that
/// it matches `config` byte for byte.
pub fn claim_output<T: Serialize>(dir: &Path, config: &T) -> Result<bool> {
    let mut text = serde_json::to_string_pretty(config)?;
    text.push('\n');
    let path = dir.join("config.json");
    match fs::read_to_string(&path) {
        Ok(existing) if existing == text => Ok(true),
        Ok(_) => bail!(
            "{} holds a different configuration; choose another --out",
            path.display()
        ),
        Err(_) => Ok(false),
    }
}
