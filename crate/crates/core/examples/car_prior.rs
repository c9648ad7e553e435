// Conditional autoregressive field on a lattice: log-determinant, draws
// and the coefficient covariance it induces.
//
// cargo run --example car_prior

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgl_poisson::graph::{car_log_det, induced_covariance, CarField, LatticeGraph};

pub fn run() -> sgl_poisson::Result<()> {
    let g = LatticeGraph::lattice(4, 4)?;
    println!("4x4 lattice: {} nodes, {} edges", g.len(), g.edge_count());
    for rho in [0.0, 0.5, 0.9, 0.99] {
        println!("  rho={rho:<5} log|D - rho A| = {:.4}", car_log_det(&g, rho)?);
    }

    let field = CarField::new(&g, 0.9)?;
    let sampler = field.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draw = sampler.sample(&mut rng);
    println!("\none draw at rho=0.9 (rows of the lattice):");
    for r in draw.chunks(4) {
        println!("  {}", r.iter().map(|v| format!("{v:>7.3}")).collect::<Vec<_>>().join(""));
    }

    // Correlation of node 0 with every other node, by graph distance.
    let cov = induced_covariance(&field, 1.0, &vec![1.0; g.len()])?;
    let dist = g.distances_from(0);
    println!("\ncorrelation with the corner node by distance:");
    for d in 1..=6 {
        let cors: Vec<f64> = (0..g.len())
            .filter(|&k| dist[k] == d)
            .map(|k| cov[(0, k)] / (cov[(0, 0)] * cov[(k, k)]).sqrt())
            .collect();
        let mean = cors.iter().sum::<f64>() / cors.len() as f64;
        println!("  distance {d}: {mean:.3}");
    }
    Ok(())
}

fn main() -> sgl_poisson::Result<()> {
    run()
}
