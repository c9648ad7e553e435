// Frequentist baselines: IRLS Poisson GLM, per-region screening, a
// fixed-region regression and a moving average.
//
// cargo run --example glm_baselines

use nalgebra::DMatrix;
use sgl_poisson::baselines::{fit_poisson_glm_irls, fixed_region_forecast, moving_average_forecast, tstat_screen};
use sgl_poisson::simgen::{simulate, Pattern, SimConfig};

pub fn run() -> sgl_poisson::Result<()> {
    let sim = SimConfig {
        n_train: 200,
        n_test: 5,
        rows: 3,
        cols: 4,
        b_star: 6.0,
        pattern: Pattern::Adjacent { block_rows: 1, block_cols: 2 },
        seed: 4,
        ..SimConfig::default()
    };
    let data = simulate(&sim)?;
    let y: Vec<f64> = data.train.y().iter().map(|&v| v as f64).collect();

    let fit = fit_poisson_glm_irls(&y, data.train.w())?;
    println!(
        "GLM on the scalar covariates: coefficients {:?}, converged {} after {} iterations",
        fit.coefficients, fit.converged, fit.iterations
    );

    let screen = tstat_screen(&y, data.train.w(), data.train.x(), 0.05)?;
    println!("\nregion  truth  z-stat  selected");
    for j in 0..screen.z.len() {
        println!("{j:>6} {:>6} {:>7.2} {:>9}", data.active_mask[j], screen.z[j], screen.active[j]);
    }

    let region = fixed_region_forecast(
        &y,
        data.train.w(),
        data.train.x(),
        &data.active_mask,
        data.test.w(),
        data.test.x(),
    )?;
    let observed: Vec<u64> = data.test.y().to_vec();
    println!("\nfixed-region forecasts {:.2?} vs observed {observed:?}", region.predictions);

    let history = DMatrix::from_column_slice(y.len(), 1, &y);
    let ma = moving_average_forecast(history.as_slice(), 5)?;
    println!("5-step moving average of the last counts: {ma:.2}");
    Ok(())
}

fn main() -> sgl_poisson::Result<()> {
    run()
}
