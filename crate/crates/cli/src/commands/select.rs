use anyhow::{bail, Result};
use blocksel_core::solver::{ObjectiveTrace, Termination};
use blocksel_core::{optimize, FeatureScores, SolverConfig};
use serde::Serialize;

use super::{load_block_model, load_network, ScoresFile};
use crate::args::SelectArgs;
use crate::rundir::RunDir;

#[derive(Serialize)]
pub struct SolveSummary {
    pub status: &'static str,
    pub termination: Option<Termination>,
    pub iterations: usize,
    pub loss_b: Option<f64>,
    pub loss_m: Option<f64>,
    pub loss_total: Option<f64>,
    pub nnz: Option<usize>,
    pub error: Option<String>,
    pub warnings: Vec<String>,
}

impl SolveSummary {
    pub fn new(trace: &ObjectiveTrace, error: Option<String>) -> Self {
        let last = trace.records.last();
        Self {
            status: if error.is_some() { "failed" } else { "ok" },
            termination: error.is_none().then_some(trace.termination),
            iterations: trace.records.len().saturating_sub(1),
            loss_b: last.map(|r| r.loss_b),
            loss_m: last.map(|r| r.loss_m),
            loss_total: last.map(|r| r.loss_total),
            nnz: last.map(|r| r.nnz),
            error,
            warnings: trace.warnings.clone(),
        }
    }
}

/// Solves and writes `trace.csv`, `result.json` and, on success,
/// `scores.json`. A solver failure still leaves the partial trace on disk.
pub fn solve_into(
    out: &mut RunDir,
    solve: impl FnOnce() -> Result<(FeatureScores, ObjectiveTrace), blocksel_core::solver::SolveError>,
    blockmodel_id: &str,
    cfg: &SolverConfig,
) -> Result<Result<FeatureScores, String>> {
    match solve() {
        Ok((scores, trace)) => {
            out.write("trace.csv", trace.to_csv())?;
            out.write_json("result.json", &SolveSummary::new(&trace, None))?;
            out.write_json(
                "scores.json",
                &ScoresFile::new(blockmodel_id, cfg.beta_bar, cfg.gamma, &scores),
            )?;
            Ok(Ok(scores))
        }
        Err(e) => {
            let message = e.to_string();
            out.write("trace.csv", e.trace.to_csv())?;
            out.write_json("result.json", &SolveSummary::new(&e.trace, Some(message.clone())))?;
            Ok(Err(message))
        }
    }
}

pub fn run(args: &SelectArgs) -> Result<()> {
    let cfg = args.solver.config(args.seed);
    cfg.validate()?;
    let data = load_network(&args.dataset.manifest)?;
    let (id, model) = load_block_model(&args.blockmodel, &data.net)?;
    let mut out = RunDir::create(&args.out)?;
    out.write_json("config.json", args)?;
    let outcome = solve_into(&mut out, || optimize(&data.net, &model, &cfg), &id, &cfg)?;
    out.finish()?;
    match outcome {
        Ok(scores) => {
            eprintln!("selected with {} nonzero scores of {}", scores.nnz(), scores.len());
            Ok(())
        }
        Err(message) => bail!("solver failed: {message}"),
    }
}
