// Rolling one-year-ahead comparison on a synthetic 30-year series.
//
// cargo run --release --example backtest -- [iterations]

use sgl_poisson::backtest::{run_backtest, BacktestConfig, Method, TimeSeriesData};
use sgl_poisson::model::{ModelName, ModelSpec};
use sgl_poisson::sampler::SamplerConfig;
use sgl_poisson::simgen::{simulate, Pattern, SimConfig};

pub fn run(n_iter: usize) -> sgl_poisson::Result<()> {
    let sim = SimConfig {
        n_train: 30,
        n_test: 1,
        rows: 3,
        cols: 3,
        b_star: 6.0,
        pattern: Pattern::Adjacent { block_rows: 1, block_cols: 2 },
        seed: 500,
        ..SimConfig::default()
    };
    let data = simulate(&sim)?;
    let series = TimeSeriesData::new((1991..=2020).collect(), data.train)?;
    let cfg = BacktestConfig {
        first_target: 2011,
        last_target: 2020,
        methods: vec![
            Method::Sgl(ModelName::Dlc),
            Method::MovingAverage,
            Method::TStat,
            Method::FixedRegion,
        ],
        region: vec![0, 1],
        ..BacktestConfig::default()
    };
    let sampler = SamplerConfig {
        n_iter,
        burn_in: n_iter / 2,
        n_chains: 2,
        seed: 7,
        ..SamplerConfig::default()
    };
    let template = ModelSpec::named(ModelName::Dlc, data.graph.clone());
    let result = run_backtest(&series, &cfg, &template, &sampler)?;

    println!("{:<6} {:>8} {:>8} {:>8} {:>8}", "method", "MAE", "RMSE", "MaxAE", "SDR");
    for row in &result.table {
        let r = &row.report;
        let sdr = r.sdr.map_or("NA".into(), |v| format!("{v:.3}"));
        println!("{:<6} {:>8.3} {:>8.3} {:>8.3} {:>8}", row.method, r.mae, r.rmse, r.max_ae, sdr);
    }
    if let Some(p) = result.method(Method::Sgl(ModelName::Dlc)).and_then(|m| m.persistent.as_ref()) {
        println!("regions active in every DLC fit: {:?}", (0..p.len()).filter(|&j| p[j]).collect::<Vec<_>>());
    }
    Ok(())
}

fn main() -> sgl_poisson::Result<()> {
    let iters = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6_000);
    run(iters)
}
