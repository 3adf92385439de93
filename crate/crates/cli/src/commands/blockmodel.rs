use anyhow::Result;
use blocksel_core::blockmodel::{generate_candidates_with, BlockModelRecord};
use blocksel_core::{CandidateSet, OnmtfConfig};
use serde::Serialize;

use super::{candidate_id, load_network, resolve_k, rows_to_csv};
use crate::args::BlockmodelArgs;
use crate::rundir::RunDir;

#[derive(Serialize)]
struct SummaryRow {
    rank: usize,
    candidate: String,
    seed: u64,
    rre: f64,
    file: String,
}

#[derive(Serialize)]
struct TraceRow {
    candidate: String,
    iteration: usize,
    objective: f64,
}

pub fn fit(
    net: &blocksel_core::AttributedNetwork,
    k: usize,
    count: usize,
    iterations: usize,
    seed: u64,
) -> Result<CandidateSet> {
    let template = OnmtfConfig {
        iterations,
        ..OnmtfConfig::new(k, seed)
    };
    Ok(generate_candidates_with(net.adjacency(), &template, count)?)
}

/// Writes one JSON file per candidate, `summary.csv` ranked by RRE and the
/// factorization objective traces.
pub fn write_candidates(out: &mut RunDir, set: &CandidateSet) -> Result<()> {
    for (i, c) in set.candidates.iter().enumerate() {
        out.write_json(&format!("{}.json", candidate_id(i)), &BlockModelRecord::from_candidate(c))?;
    }
    let summary: Vec<SummaryRow> = set
        .ranking()
        .into_iter()
        .enumerate()
        .map(|(rank, i)| SummaryRow {
            rank: rank + 1,
            candidate: candidate_id(i),
            seed: set.candidates[i].seed,
            rre: set.candidates[i].rre,
            file: format!("{}.json", candidate_id(i)),
        })
        .collect();
    out.write("summary.csv", rows_to_csv(&summary)?)?;
    let traces: Vec<TraceRow> = set
        .candidates
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            c.objective_trace.iter().enumerate().map(move |(it, &objective)| TraceRow {
                candidate: candidate_id(i),
                iteration: it,
                objective,
            })
        })
        .collect();
    out.write("onmtf_trace.csv", rows_to_csv(&traces)?)?;
    Ok(())
}

pub fn run(args: &BlockmodelArgs) -> Result<()> {
    let data = load_network(&args.dataset.manifest)?;
    let k = resolve_k(&data.net, args.k)?;
    let set = fit(&data.net, k, args.count, args.onmtf_iters, args.seed)?;
    let mut out = RunDir::create(&args.out)?;
    out.write_json("config.json", args)?;
    write_candidates(&mut out, &set)?;
    out.finish()?;
    let best = set.ranking()[0];
    eprintln!(
        "{} candidates with k = {k}; lowest RRE {:.6} ({})",
        set.len(),
        set.candidates[best].rre,
        candidate_id(best)
    );
    Ok(())
}
