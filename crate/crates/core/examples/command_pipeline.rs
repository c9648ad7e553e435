// The `sgl` command sequence driven from code: simulate, fit, select,
// predict and report inside a temporary directory.
//
// cargo run --release --example command_pipeline

use sgl_poisson::cli::run_from_args;

pub fn run() -> sgl_poisson::Result<()> {
    let dir = std::env::temp_dir().join(format!("sgl_pipeline_{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let sim = dir.join("sim.toml");
    std::fs::write(
        &sim,
        "seed = 5\n[simulation]\nn_train = 150\nn_test = 10\nrows = 3\ncols = 3\nreplicates = 1\n\
         pattern = { kind = \"adjacent\", block_rows = 1, block_cols = 2 }\n",
    )?;
    let fit = dir.join("fit.toml");
    std::fs::write(
        &fit,
        "[data]\nscenario = \"sims/rep_000\"\n[sampler]\nn_iter = 4000\nburn_in = 2000\nn_chains = 2\n",
    )?;
    let p = |s: &std::path::Path| s.display().to_string();
    let out = |s: &str| p(&dir.join(s));
    let steps: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--config".into(), p(&sim), "--out".into(), out("sims")],
        vec!["fit".into(), "--config".into(), p(&fit), "--out".into(), out("run"), "--allow-unconverged".into()],
        vec!["select".into(), out("run")],
        vec!["predict".into(), out("run")],
        vec!["report".into(), out("run"), "--out".into(), out("report")],
    ];
    for args in steps {
        let code = run_from_args(std::iter::once("sgl".to_string()).chain(args.iter().cloned()));
        println!("sgl {:<8} -> exit {code}", args[0]);
    }
    println!("\n{}", std::fs::read_to_string(dir.join("run/selection_grid.csv"))?);
    println!("{}", std::fs::read_to_string(dir.join("report/simulation_summary.csv"))?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() -> sgl_poisson::Result<()> {
    run()
}
