//! Property-based checks of the numerical core over randomized inputs.

use num_complex::Complex;
use proptest::prelude::*;

use rmtlab::contour::build_contour;
use rmtlab::linalg::Matrix;
use rmtlab::spectral::eig_sym;

type C64 = Complex<f64>;

fn symmetric_matrix() -> impl Strategy<Value = Matrix<f64>> {
    (1usize..=6).prop_flat_map(|dim| {
        prop::collection::vec(-10.0..10.0f64, dim * dim).prop_map(move |v| {
            Matrix::from_fn(dim, dim, |i, j| {
                let (a, b) = (v[i * dim + j], v[j * dim + i]);
                0.5 * (a + b)
            })
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eig_reconstructs_and_sorts(a in symmetric_matrix()) {
        let d = eig_sym(&a).unwrap();
        let recon = d.reconstruct();
        let scale = a.max_abs().max(1.0);
        prop_assert!(recon.max_abs_diff(&a) <= 1e-9 * scale);
        for w in d.eigenvalues.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn residue_theorem_inside_outside(re in -4.0..4.0f64, im in -3.0..3.0f64) {
        let contour = build_contour(0.5, 1.0, 128);
        let a = C64::new(re, im);
        // skip poles close to the boundary, where Gauss-Legendre convergence
        // in the Bernstein-ellipse parameter becomes slow
        let near_edge = (re - 0.5).abs() < 0.2
            || (re - 1.5).abs() < 0.2
            || (im.abs() - 1.0).abs() < 0.2;
        prop_assume!(!near_edge);
        let inside = (0.5..1.5).contains(&re) && im.abs() < 1.0;
        let integral = contour.integrate(|z| C64::new(1.0, 0.0) / (z - a));
        let target = if inside {
            C64::new(0.0, 2.0 * std::f64::consts::PI)
        } else {
            C64::new(0.0, 0.0)
        };
        prop_assert!((integral - target).norm() <= 1e-6,
            "pole at {a}, integral {integral}, target {target}");
    }

    #[test]
    fn config_values_survive_round_trip(
        key in "[a-z_]{1,12}",
        value in "[a-zA-Z0-9_.:,\\[\\]-]{1,20}",
    ) {
        let text = format!("{key} = {value}\n");
        let cfg = rmtlab::config::ConfigMap::from_str(&text).unwrap();
        prop_assert_eq!(cfg.get(&key), Some(value.as_str()));
    }
}
