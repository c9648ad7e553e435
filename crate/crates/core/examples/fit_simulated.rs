// Simulate a lattice scenario, run the sampler and inspect diagnostics.
//
// cargo run --release --example fit_simulated -- [iterations]

use sgl_poisson::model::{ModelName, ModelSpec};
use sgl_poisson::sampler::{pooled_beta, rhat_table, run_chains, SamplerConfig};
use sgl_poisson::simgen::{simulate, Pattern, SimConfig};

pub fn run(n_iter: usize) -> sgl_poisson::Result<()> {
    let sim = SimConfig {
        n_train: 300,
        rows: 4,
        cols: 4,
        b_star: 8.0,
        pattern: Pattern::Adjacent { block_rows: 2, block_cols: 2 },
        seed: 3,
        ..SimConfig::default()
    };
    let data = simulate(&sim)?;
    let spec = ModelSpec::named(ModelName::Dlc, data.graph.clone());
    let config = SamplerConfig {
        n_iter,
        burn_in: n_iter * 2 / 5,
        n_chains: 3,
        seed: 11,
        ..SamplerConfig::default()
    };
    let chains = run_chains(&spec, &data.train, &config)?;
    println!("{} chains x {} retained draws", chains.len(), chains[0].len());
    println!("acceptance (chain 0): {:?}", chains[0].accept_rates);

    let rhat = rhat_table(&chains, false, false)?;
    let worst = rhat.iter().max_by(|a, b| a.1.value.total_cmp(&b.1.value)).expect("monitored");
    println!("worst R-hat: {} = {:.3}", worst.0, worst.1.value);

    let beta = pooled_beta(&chains);
    println!("\nregion  truth  posterior mean");
    for j in 0..beta.ncols() {
        println!("{j:>6} {:>6.2} {:>15.3}", data.beta_star[j], beta.column(j).mean());
    }
    Ok(())
}

fn main() -> sgl_poisson::Result<()> {
    let iters = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    run(iters)
}
