use anyhow::{bail, Context, Result};
use blocksel_core::solver::cosine_distance;
use blocksel_core::{optimize, perturb_allocation, PerturbMode};
use rayon::prelude::*;
use serde::Serialize;

use super::{load_block_model, load_network, rows_to_csv, ScoresFile};
use crate::args::PerturbArgs;
use crate::rundir::RunDir;

#[derive(Serialize)]
struct DistanceRow {
    fraction: f64,
    mode: PerturbMode,
    repeat: u64,
    cosine_distance: f64,
}

#[derive(Serialize)]
struct SummaryRow {
    fraction: f64,
    mode: PerturbMode,
    repeats: u64,
    mean: f64,
    std: f64,
}

pub fn run(args: &PerturbArgs) -> Result<()> {
    let cfg = args.solver.config(args.seed);
    cfg.validate()?;
    if args.fractions.is_empty() || args.modes.is_empty() || args.repeats == 0 {
        bail!("--fractions, --modes and --repeats must be non-empty");
    }
    if let Some(f) = args.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        bail!("perturbation fraction {f} outside [0, 1]");
    }
    let data = load_network(&args.dataset.manifest)?;
    let (id, model) = load_block_model(&args.blockmodel, &data.net)?;
    let (r0, _) = optimize(&data.net, &model, &cfg).context("solving on the unperturbed block model")?;

    let mut jobs = Vec::new();
    for &fraction in &args.fractions {
        for &mode in &args.modes {
            for repeat in 0..args.repeats {
                jobs.push((fraction, mode, repeat));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(fraction, mode, repeat)| {
            let seed = args.seed.wrapping_add(repeat);
            let perturbed = perturb_allocation(&model, data.net.adjacency(), fraction, mode, seed)?;
            let (r, _) = optimize(&data.net, &perturbed, &cfg).with_context(|| {
                format!("solving with fraction {fraction}, mode {mode}, repeat {repeat}")
            })?;
            Ok(DistanceRow {
                fraction,
                mode,
                repeat,
                cosine_distance: cosine_distance(r.view(), r0.view()),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary: Vec<SummaryRow> = rows
        .chunks(args.repeats as usize)
        .map(|group| {
            let n = group.len() as f64;
            let mean = group.iter().map(|r| r.cosine_distance).sum::<f64>() / n;
            let var = group.iter().map(|r| (r.cosine_distance - mean).powi(2)).sum::<f64>() / n;
            SummaryRow {
                fraction: group[0].fraction,
                mode: group[0].mode,
                repeats: args.repeats,
                mean,
                std: var.sqrt(),
            }
        })
        .collect();

    let mut out = RunDir::create(&args.out)?;
    out.write_json("config.json", args)?;
    out.write_json("r0_scores.json", &ScoresFile::new(&id, cfg.beta_bar, cfg.gamma, &r0))?;
    out.write("cosine.csv", rows_to_csv(&rows)?)?;
    out.write("summary.csv", rows_to_csv(&summary)?)?;
    out.finish()?;
    for s in &summary {
        eprintln!(
            "fraction {:<5} {:<12} cosine distance {:.3e} ± {:.3e}",
            s.fraction, s.mode, s.mean, s.std
        );
    }
    Ok(())
}
