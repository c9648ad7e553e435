// Small simulation study across the five model variants, aggregated into
// the replicate summary table.
//
// cargo run --release --example simulation_study -- [iterations] [replicates]

use rayon::prelude::*;
use sgl_poisson::inference::select_regions_hpd;
use sgl_poisson::metrics::{estimation_metrics, selection_metrics, summarize_replicates, ReplicateRecord};
use sgl_poisson::model::{ModelName, ModelSpec};
use sgl_poisson::sampler::{pooled_beta, run_chains, SamplerConfig};
use sgl_poisson::simgen::{simulate, SimConfig};

pub fn run(n_iter: usize, replicates: usize) -> sgl_poisson::Result<()> {
    let base = SimConfig {
        n_train: 100,
        rows: 6,
        cols: 6,
        seed: 42,
        ..SimConfig::default()
    };
    let config = SamplerConfig {
        n_iter,
        burn_in: n_iter * 2 / 5,
        n_chains: 2,
        seed: 1,
        ..SamplerConfig::default()
    };
    let jobs: Vec<(usize, ModelName)> = (0..replicates)
        .flat_map(|r| ModelName::ALL.into_iter().map(move |m| (r, m)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(r, model)| {
            let sim = base.replicate(r);
            let data = simulate(&sim)?;
            let spec = ModelSpec::named(model, data.graph.clone());
            let beta = pooled_beta(&run_chains(&spec, &data.train, &config)?);
            let hat: Vec<f64> = (0..beta.ncols()).map(|j| beta.column(j).mean()).collect();
            Ok(ReplicateRecord {
                signal: sim.pattern.label().to_string(),
                corr: sim.rho_x,
                model: model.to_string(),
                replicate: r,
                estimation: estimation_metrics(&hat, &data.beta_star, &data.active_mask)?,
                selection: selection_metrics(&select_regions_hpd(&beta, 0.95)?.active, &data.active_mask)?,
            })
        })
        .collect::<sgl_poisson::Result<Vec<_>>>()?;

    println!("{:<6} {:>10} {:>10} {:>8} {:>8}", "model", "beta_rmse", "signal", "FPR", "FNR");
    for row in summarize_replicates(&records) {
        let get = |name: &str| {
            row.metrics
                .iter()
                .find(|(n, _)| n == name)
                .and_then(|(_, a)| a.mean)
                .map_or("NA".to_string(), |v| format!("{v:.4}"))
        };
        println!(
            "{:<6} {:>10} {:>10} {:>8} {:>8}",
            row.model,
            get("beta_rmse"),
            get("signal_rmse"),
            get("fpr"),
            get("fnr")
        );
    }
    Ok(())
}

fn main() -> sgl_poisson::Result<()> {
    let mut args = std::env::args().skip(1).filter_map(|s| s.parse().ok());
    let iters = args.next().unwrap_or(10_000);
    let reps = args.next().unwrap_or(3);
    run(iters, reps)
}
