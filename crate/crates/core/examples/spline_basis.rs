// Tensor-product B-spline basis over a coordinate box, and reduction of a
// lattice design to basis coefficients.
//
// cargo run --example spline_basis

use nalgebra::DMatrix;
use sgl_poisson::basis::{expand_design, tensor_basis_matrix, BSplineAxis, BasisConfig, TensorProductBasis};
use sgl_poisson::config::lattice_locations;

pub fn run() -> sgl_poisson::Result<()> {
    let axis = BSplineAxis::uniform(0.0, 1.0, 5, 3)?;
    println!("cubic axis with 5 breakpoints: {} functions", axis.len());
    for t in [0.0, 0.3, 0.5, 1.0] {
        let v = axis.eval(t)?;
        let shown: Vec<String> = v.iter().map(|b| format!("{b:.3}")).collect();
        println!("  t={t:.1}: [{}] sum {:.3}", shown.join(", "), v.iter().sum::<f64>());
    }

    let default = TensorProductBasis::from_config(&BasisConfig::default())?;
    println!("\ndefault tensor basis: {} functions", default.len());

    // A 10x12 lattice summarised by a quadratic basis; cells sit at their
    // (column, row) coordinates.
    let basis = TensorProductBasis::new(BSplineAxis::uniform(0.0, 11.0, 6, 2)?, BSplineAxis::uniform(0.0, 9.0, 5, 2)?);
    let m = tensor_basis_matrix(&lattice_locations(10, 12), &basis)?;
    println!("basis matrix for 120 cells: {} x {}", m.nrows(), m.ncols());
    let x = DMatrix::from_fn(5, 120, |i, j| ((i + 1) * (j % 7)) as f64);
    let z = expand_design(&x, &m)?;
    println!("design reduced from {} to {} columns", x.ncols(), z.ncols());
    let sums: Vec<f64> = m.row_iter().map(|r| r.sum()).collect();
    let worst = sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    println!("largest partition-of-unity error over cells: {worst:.1e}");
    Ok(())
}

fn main() -> sgl_poisson::Result<()> {
    run()
}
