use nalgebra::DMatrix;
use proptest::prelude::*;

use sgl_poisson::basis::{BSplineAxis, TensorProductBasis};
use sgl_poisson::graph::{car_log_det, CarField, LatticeGraph};
use sgl_poisson::inference::{hpd_interval, select_regions_hpd, select_regions_sn};
use sgl_poisson::metrics::{estimation_metrics, forecast_metrics, selection_metrics};
use sgl_poisson::model::ColumnMoments;

fn finite_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, len)
}

proptest! {
    #[test]
    fn hpd_is_the_shortest_covering_window(xs in finite_vec(1..200), level in 0.05f64..0.99) {
        let (lo, hi) = hpd_interval(&xs, level).unwrap();
        let need = (level * xs.len() as f64).ceil() as usize;
        let covered = xs.iter().filter(|&&v| v >= lo && v <= hi).count();
        prop_assert!(covered >= need);
        let mut s = xs.clone();
        s.sort_by(f64::total_cmp);
        let best = (0..=s.len() - need).map(|i| s[i + need - 1] - s[i]).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(hi - lo, best);
    }

    #[test]
    fn selection_ignores_sign_and_scale(
        draws in prop::collection::vec(-3.0f64..3.0, 60..61),
        shift in -4.0f64..4.0,
        scale in 0.1f64..10.0,
    ) {
        let base = DMatrix::from_fn(30, 2, |i, j| draws[i + 30 * j] + shift);
        let flipped = base.map(|v| -v);
        let scaled = base.map(|v| v * scale);
        let a = select_regions_hpd(&base, 0.9).unwrap().active;
        prop_assert_eq!(&a, &select_regions_hpd(&flipped, 0.9).unwrap().active);
        prop_assert_eq!(&a, &select_regions_hpd(&scaled, 0.9).unwrap().active);
        let s = select_regions_sn(&base).active;
        prop_assert_eq!(&s, &select_regions_sn(&flipped).active);
        prop_assert_eq!(&s, &select_regions_sn(&scaled).active);
    }

    #[test]
    fn one_signed_columns_are_selected(draws in prop::collection::vec(0.01f64..5.0, 20..80)) {
        let m = DMatrix::from_column_slice(draws.len(), 1, &draws);
        prop_assert!(select_regions_hpd(&m, 0.95).unwrap().active[0]);
    }

    #[test]
    fn selection_counts_partition(hat in prop::collection::vec(any::<bool>(), 1..80), seed in any::<u64>()) {
        let mask: Vec<bool> = hat.iter().enumerate().map(|(i, _)| (seed >> (i % 64)) & 1 == 1).collect();
        let r = selection_metrics(&hat, &mask).unwrap();
        prop_assert_eq!(r.tp + r.fp + r.tn + r.false_neg, hat.len());
        for v in [r.fpr, r.fnr].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn forecast_metric_ordering(pairs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..60)) {
        let (y, yh): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let f = forecast_metrics(&y, &yh).unwrap();
        prop_assert!(f.mae <= f.rmse * (1.0 + 1e-12));
        prop_assert!(f.rmse <= f.max_ae * (1.0 + 1e-12));
        if let Some(sdr) = f.sdr {
            prop_assert!(sdr >= 0.0);
        }
    }

    #[test]
    fn perfect_estimates_have_zero_error(star in finite_vec(1..50)) {
        let mask: Vec<bool> = star.iter().map(|v| *v > 0.0).collect();
        let e = estimation_metrics(&star, &star, &mask).unwrap();
        prop_assert_eq!(e.beta_rmse, 0.0);
    }

    #[test]
    fn bspline_partition_of_unity(
        count in 2usize..20,
        degree in 0usize..5,
        lo in -10.0f64..10.0,
        width in 0.1f64..20.0,
        frac in 0.0f64..=1.0,
    ) {
        let axis = BSplineAxis::uniform(lo, lo + width, count, degree).unwrap();
        let v = axis.eval(lo + frac * width).unwrap();
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(v.iter().all(|&b| b >= -1e-15));
    }

    #[test]
    fn tensor_basis_partition_of_unity(a in 0.0f64..=1.0, b in 0.0f64..=1.0, na in 2usize..8, nb in 2usize..8) {
        let basis = TensorProductBasis::new(
            BSplineAxis::uniform(0.0, 1.0, na, 3).unwrap(),
            BSplineAxis::uniform(0.0, 1.0, nb, 2).unwrap(),
        );
        let v = basis.eval(a, b).unwrap();
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn car_quadratic_form_matches_dense(
        rows in 1usize..5,
        cols in 2usize..5,
        rho in 0.0f64..0.99,
        xs in prop::collection::vec(-3.0f64..3.0, 20),
    ) {
        let g = LatticeGraph::lattice(rows, cols).unwrap();
        let field = CarField::new(&g, rho).unwrap();
        let x = &xs[..g.len()];
        let q = field.precision().to_dense();
        let v = nalgebra::DVector::from_column_slice(x);
        let dense = (v.transpose() * &q * &v)[(0, 0)];
        prop_assert!((field.quad_form(x) - dense).abs() < 1e-9 * (1.0 + dense.abs()));
        let ld = car_log_det(&g, rho).unwrap();
        prop_assert!((ld - q.determinant().ln()).abs() < 1e-8 * (1.0 + ld.abs()));
        prop_assert!(dense >= -1e-12);
    }

    #[test]
    fn standardized_columns_have_unit_moments(vals in prop::collection::vec(-100.0f64..100.0, 30)) {
        let mut m = DMatrix::from_column_slice(10, 3, &vals);
        ColumnMoments::fit(&m).apply(&mut m);
        for c in m.column_iter() {
            let mean = c.mean();
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9 || var == 0.0);
        }
    }
}
