// Compare the HPD and sign-probability selection rules on one scenario.
//
// cargo run --release --example region_selection -- [iterations]

use sgl_poisson::inference::{select_regions_hpd, select_regions_sn};
use sgl_poisson::metrics::selection_metrics;
use sgl_poisson::model::{ModelName, ModelSpec};
use sgl_poisson::sampler::{pooled_beta, run_chains, SamplerConfig};
use sgl_poisson::simgen::{simulate, Pattern, SimConfig};

fn show(mask: &[bool], cols: usize) {
    for row in mask.chunks(cols) {
        println!("  {}", row.iter().map(|&a| if a { '#' } else { '.' }).collect::<String>());
    }
}

pub fn run(n_iter: usize) -> sgl_poisson::Result<()> {
    let sim = SimConfig {
        n_train: 200,
        rows: 6,
        cols: 6,
        b_star: 6.0,
        pattern: Pattern::Scattered { count: 4, min_distance: 2 },
        seed: 8,
        ..SimConfig::default()
    };
    let data = simulate(&sim)?;
    let spec = ModelSpec::named(ModelName::Dlc, data.graph.clone());
    let config = SamplerConfig {
        n_iter,
        burn_in: n_iter * 2 / 5,
        n_chains: 2,
        seed: 2,
        ..SamplerConfig::default()
    };
    let beta = pooled_beta(&run_chains(&spec, &data.train, &config)?);

    println!("truth:");
    show(&data.active_mask, sim.cols);
    let hpd = select_regions_hpd(&beta, 0.95)?;
    println!("95% HPD excludes zero:");
    show(&hpd.active, sim.cols);
    let sn = select_regions_sn(&beta);
    println!("sign probability rule:");
    show(&sn.active, sim.cols);
    for (name, sel) in [("HPD", &hpd.active), ("SN", &sn.active)] {
        let m = selection_metrics(sel, &data.active_mask)?;
        println!("{name}: FPR {:?} FNR {:?}", m.fpr, m.fnr);
    }
    Ok(())
}

fn main() -> sgl_poisson::Result<()> {
    let iters = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    run(iters)
}
