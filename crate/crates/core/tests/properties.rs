use dynconn::base_measure::{ar1_covariance, log_density, stick_weights, BaseMeasure, BaseMeasureParams};
use dynconn::diagnostics::{equal_tail_interval, hpd_interval};
use dynconn::signal::{convolve_sequence, fit_sinusoid, fourier_grid, glover_hrf, HrfParams};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, 20..300)
}

proptest! {
    #[test]
    fn hpd_is_no_wider_than_equal_tail(s in samples(), level in 0.51f64..0.99) {
        let h = hpd_interval(&s, level).unwrap();
        let e = equal_tail_interval(&s, level).unwrap();
        prop_assert!(h.lo <= h.hi);
        prop_assert!(h.width() <= e.width() + 1e-12);
    }

    #[test]
    fn hpd_holds_required_mass(s in samples(), level in 0.51f64..0.99) {
        let h = hpd_interval(&s, level).unwrap();
        let inside = s.iter().filter(|v| h.contains(**v)).count();
        prop_assert!(inside >= (level * s.len() as f64).ceil() as usize);
    }

    #[test]
    fn hpd_ignores_order(mut s in samples(), level in 0.51f64..0.99) {
        let h = hpd_interval(&s, level).unwrap();
        s.reverse();
        prop_assert_eq!(hpd_interval(&s, level).unwrap(), h);
    }

    #[test]
    fn covariance_is_symmetric_and_inverted_by_precision(
        rho in -0.98f64..0.98,
        sg in 0.05f64..5.0,
        sd in 0.01f64..3.0,
        n in 1usize..25,
    ) {
        let p = BaseMeasureParams::new(0.3, sg, sd, rho, n).unwrap();
        let cov = ar1_covariance(&p).unwrap();
        prop_assert!((&cov - cov.transpose()).amax() == 0.0);
        let q = BaseMeasure::new(p).unwrap().precision().to_dense();
        let err = (&q * &cov - DMatrix::<f64>::identity(n, n)).amax();
        prop_assert!(err < 1e-8, "{}", err);
    }

    #[test]
    fn tridiagonal_and_dense_densities_agree(
        rho in -0.95f64..1.0,
        sd in 0.05f64..2.0,
        g in prop::collection::vec(-3.0f64..3.0, 1..15),
    ) {
        let p = BaseMeasureParams::new(-0.4, 0.7, sd, rho, g.len()).unwrap();
        let fast = BaseMeasure::new(p).unwrap().log_density(&g);
        let dense = log_density(&g, &p).unwrap();
        prop_assert!((fast - dense).abs() < 1e-7 * dense.abs().max(1.0));
    }

    #[test]
    fn stick_weights_leave_the_deficit(b in prop::collection::vec(0.0f64..1.0, 1..60)) {
        let w = stick_weights(&b);
        let deficit: f64 = b.iter().map(|v| 1.0 - v).product();
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() + deficit - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convolution_is_additive(
        a in prop::collection::vec(-2.0f64..2.0, 30),
        b in prop::collection::vec(-2.0f64..2.0, 30),
    ) {
        let hrf = HrfParams::default();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let ca = convolve_sequence(&a, &hrf, 2.0).unwrap();
        let cb = convolve_sequence(&b, &hrf, 2.0).unwrap();
        let cs = convolve_sequence(&sum, &hrf, 2.0).unwrap();
        for k in 0..30 {
            prop_assert!((cs[k] - ca[k] - cb[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_fourier_sinusoid_is_recovered(j in 1usize..50, b1 in -2.0f64..2.0, b2 in -2.0f64..2.0) {
        prop_assume!(b1.abs() + b2.abs() > 0.1);
        let n = 200;
        let omega = j as f64 / n as f64;
        let x: Vec<f64> = (1..=n)
            .map(|t| {
                let a = 2.0 * std::f64::consts::PI * omega * t as f64;
                b1 * a.cos() + b2 * a.sin()
            })
            .collect();
        let f = fit_sinusoid(&x, &fourier_grid(n)).unwrap();
        prop_assert!((f.omega_hat - omega).abs() < 1e-12);
        prop_assert!((f.beta1 - b1).abs() < 1e-6 && (f.beta2 - b2).abs() < 1e-6);
    }
}

#[test]
fn hrf_vanishes_at_origin() {
    assert_eq!(glover_hrf(&HrfParams::default(), 0.0).unwrap(), 0.0);
}
