use std::path::Path;

use anyhow::{bail, Result};
use blocksel_core::solver::{optimize_with_context, ObjectiveTrace, SolveError, Termination};
use blocksel_core::{AttributedNetwork, BlockModel, ObjectiveContext};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::blockmodel::{fit, write_candidates};
use super::select::solve_into;
use super::{
    candidate_id, claim_output, load_block_model, load_network, resolve_k, rows_from_csv,
    rows_to_csv, ReportRow, RowContext,
};
use crate::args::SweepArgs;
use crate::rundir::{is_complete, RunDir};

/// A report row plus the solver outcome of its cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SweepRow {
    dataset: String,
    d: usize,
    beta_bar: f64,
    gamma: f64,
    blockmodel_id: String,
    acc_mean: f64,
    acc_std: f64,
    nmi_mean: f64,
    nmi_std: f64,
    insufficient_support: bool,
    solver_status: String,
}

impl SweepRow {
    fn new(row: ReportRow, beta_bar: f64, gamma: f64, status: &str) -> Self {
        Self {
            dataset: row.dataset,
            d: row.d,
            beta_bar,
            gamma,
            blockmodel_id: row.blockmodel_id,
            acc_mean: row.acc_mean,
            acc_std: row.acc_std,
            nmi_mean: row.nmi_mean,
            nmi_std: row.nmi_std,
            insufficient_support: row.insufficient_support,
            solver_status: status.to_string(),
        }
    }
}

struct Cell {
    candidate: usize,
    beta_bar: f64,
    gamma: f64,
}

impl Cell {
    fn dir_name(&self) -> String {
        format!("{}_b{}_g{}", candidate_id(self.candidate), self.beta_bar, self.gamma)
    }
}

fn validate(args: &SweepArgs) -> Result<()> {
    if args.beta_bar.is_empty() || args.gamma.is_empty() || args.d.is_empty() {
        bail!("--beta-bar, --gamma and --d grids must be non-empty");
    }
    if args.d.contains(&0) {
        bail!("--d values must be positive");
    }
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    for &b in &args.beta_bar {
        for &g in &args.gamma {
            args.config(b, g).validate()?;
        }
    }
    Ok(())
}

/// Fits the candidate block models, or reloads them from a complete earlier run.
fn candidates(args: &SweepArgs, net: &AttributedNetwork, dir: &Path) -> Result<Vec<BlockModel>> {
    if !is_complete(dir) {
        let k = resolve_k(net, args.k)?;
        let set = fit(net, k, args.count, args.onmtf_iters, args.seed)?;
        let mut out = RunDir::create(dir)?;
        write_candidates(&mut out, &set)?;
        out.finish()?;
    }
    (0..args.count)
        .map(|i| Ok(load_block_model(&dir.join(format!("{}.json", candidate_id(i))), net)?.1))
        .collect()
}

fn run_cell(
    args: &SweepArgs,
    dataset: &str,
    net: &AttributedNetwork,
    context: &Result<ObjectiveContext, String>,
    cell: &Cell,
    dir: &Path,
) -> Result<Vec<SweepRow>> {
    let cfg = args.config(cell.beta_bar, cell.gamma);
    let id = candidate_id(cell.candidate);
    let mut out = RunDir::create(dir)?;
    out.write_json("config.json", &cfg)?;
    let outcome = solve_into(
        &mut out,
        || match context {
            Ok(ctx) => optimize_with_context(ctx, &cfg),
            Err(message) => Err(SolveError {
                error: blocksel_core::Error::InvalidArgument(message.clone()),
                trace: ObjectiveTrace {
                    records: Vec::new(),
                    termination: Termination::IterationCap,
                    warnings: Vec::new(),
                },
            }),
        },
        &id,
        &cfg,
    )?;
    let row_ctx = RowContext {
        dataset,
        beta_bar: Some(cell.beta_bar),
        gamma: Some(cell.gamma),
        blockmodel_id: &id,
    };
    let mut rows = Vec::with_capacity(args.d.len());
    for &d in &args.d {
        rows.push(match &outcome {
            Ok(scores) => SweepRow::new(
                row_ctx.evaluate(net, scores, d, args.runs, args.seed)?,
                cell.beta_bar,
                cell.gamma,
                "ok",
            ),
            Err(_) => SweepRow::new(row_ctx.zeros(d), cell.beta_bar, cell.gamma, "failed"),
        });
    }
    out.write("report.csv", rows_to_csv(&rows)?)?;
    out.finish()?;
    Ok(rows)
}

pub fn run(args: &SweepArgs) -> Result<()> {
    validate(args)?;
    let resumed = args.out.is_dir() && claim_output(&args.out, args)?;
    let data = load_network(&args.dataset.manifest)?;
    let mut out = RunDir::create(&args.out)?;
    out.write_json("config.json", args)?;

    let models = candidates(args, &data.net, &args.out.join("blockmodels"))?;
    let contexts: Vec<Result<ObjectiveContext, String>> = models
        .par_iter()
        .map(|m| ObjectiveContext::new(&data.net, m, args.delta).map_err(|e| e.to_string()))
        .collect();

    let mut cells = Vec::new();
    for candidate in 0..models.len() {
        for &beta_bar in &args.beta_bar {
            for &gamma in &args.gamma {
                cells.push(Cell {
                    candidate,
                    beta_bar,
                    gamma,
                });
            }
        }
    }

    let cells_root = args.out.join("cells");
    let results = cells
        .par_iter()
        .map(|cell| {
            let dir = cells_root.join(cell.dir_name());
            if is_complete(&dir) {
                return Ok((true, rows_from_csv::<SweepRow>(&dir.join("report.csv"))?));
            }
            let rows = run_cell(args, &data.name, &data.net, &contexts[cell.candidate], cell, &dir)?;
            Ok((false, rows))
        })
        .collect::<Result<Vec<_>>>()?;

    let skipped = results.iter().filter(|(s, _)| *s).count();
    let failed = results
        .iter()
        .filter(|(_, rows)| rows.first().is_some_and(|r| r.solver_status != "ok"))
        .count();
    let rows: Vec<SweepRow> = results.into_iter().flat_map(|(_, rows)| rows).collect();
    out.write("results.csv", rows_to_csv(&rows)?)?;
    out.finish()?;

    eprintln!(
        "{} cells ({} reused{}), {} failed; {} rows in {}",
        cells.len(),
        skipped,
        if resumed { ", resumed run" } else { "" },
        failed,
        rows.len(),
        args.out.join("results.csv").display()
    );
    Ok(())
}
