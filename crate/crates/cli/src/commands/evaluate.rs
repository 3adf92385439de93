use anyhow::{bail, Result};
use serde::Serialize;

use super::{load_network, rows_to_csv, ReportRow, RowContext, ScoresFile};
use crate::args::EvaluateArgs;
use crate::rundir::RunDir;

#[derive(Serialize)]
struct Report<'a> {
    dataset: &'a str,
    runs: usize,
    seed: u64,
    rows: &'a [ReportRow],
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    if args.d.is_empty() || args.d.contains(&0) {
        bail!("--d needs at least one positive value");
    }
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let data = load_network(&args.dataset.manifest)?;
    let file = ScoresFile::load(&args.scores)?;
    let scores = file.feature_scores()?;
    if scores.len() != data.net.feature_count() {
        bail!(
            "{} holds {} scores but the dataset has {} features",
            args.scores.display(),
            scores.len(),
            data.net.feature_count()
        );
    }
    let ctx = RowContext {
        dataset: &data.name,
        beta_bar: Some(file.beta_bar),
        gamma: Some(file.gamma),
        blockmodel_id: &file.blockmodel_id,
    };
    let mut rows = Vec::with_capacity(args.d.len() + 1);
    for &d in &args.d {
        rows.push(ctx.evaluate(&data.net, &scores, d, args.runs, args.seed)?);
    }
    if !args.no_baseline {
        let baseline = RowContext {
            dataset: &data.name,
            beta_bar: None,
            gamma: None,
            blockmodel_id: "all_features",
        };
        rows.push(baseline.all_features(&data.net, args.runs, args.seed)?);
    }

    let mut out = RunDir::create(&args.out)?;
    out.write_json("config.json", args)?;
    out.write("report.csv", rows_to_csv(&rows)?)?;
    out.write_json(
        "report.json",
        &Report {
            dataset: &data.name,
            runs: args.runs,
            seed: args.seed,
            rows: &rows,
        },
    )?;
    out.finish()?;
    for row in &rows {
        eprintln!(
            "d = {:>4} {:<14} ACC {:6.2} ± {:5.2}  NMI {:6.2} ± {:5.2}{}",
            row.d,
            row.blockmodel_id,
            row.acc_mean,
            row.acc_std,
            row.nmi_mean,
            row.nmi_std,
            if row.insufficient_support { "  (insufficient support)" } else { "" }
        );
    }
    Ok(())
}
