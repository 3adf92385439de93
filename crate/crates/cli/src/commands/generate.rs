use anyhow::Result;
use blocksel_core::data::save_dataset;
use blocksel_core::{generate_planted, PlantedSpec};

use crate::args::GenerateArgs;
use crate::rundir::RunDir;

pub fn run(args: &GenerateArgs) -> Result<()> {
    let spec = PlantedSpec {
        n: args.n,
        k: args.k,
        d_informative: args.d_informative,
        d_noise: args.d_noise,
        intra_p: args.intra_p,
        inter_p: args.inter_p,
        signal_strength: args.signal,
        noise_scale: args.noise_scale,
        seed: args.seed,
    };
    let net = generate_planted(&spec)?;
    let mut out = RunDir::create(&args.out)?;
    out.write_json("config.json", args)?;
    save_dataset(&net, out.path(), &args.name)?;
    for file in ["edges.txt", "features.txt", "labels.txt", "manifest.json"] {
        out.record(file);
    }
    out.finish()?;
    eprintln!(
        "wrote {} nodes, {} edges, {} features to {}",
        net.node_count(),
        net.undirected_edge_count(),
        net.feature_count(),
        args.out.join("manifest.json").display()
    );
    Ok(())
}
