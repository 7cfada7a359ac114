//! Randomized invariants of the message algebra.

use num_complex::Complex64;
use proptest::prelude::*;

use cfep::gaussian::{CategoricalMsg, Constellation, DiagGaussianMsg};

fn qam() -> Constellation {
    Constellation::square_qam(4, 1.0).unwrap()
}

fn pmf() -> impl Strategy<Value = CategoricalMsg> {
    prop::collection::vec(1e-6f64..1.0, 4).prop_map(|w| {
        let z: f64 = w.iter().sum();
        CategoricalMsg::new(&qam(), w.iter().map(|v| v / z).collect()).unwrap()
    })
}

fn gaussian(n: usize) -> impl Strategy<Value = DiagGaussianMsg> {
    (
        prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), n),
        prop::collection::vec(0.01f64..10.0, n),
    )
        .prop_map(|(m, v)| {
            let mean: Vec<Complex64> = m.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
            DiagGaussianMsg::from_moments(&mean, &v).unwrap()
        })
}

proptest! {
    #[test]
    fn categorical_products_are_normalized_and_commute(a in pmf(), b in pmf(), c in pmf()) {
        let s = qam();
        let abc = CategoricalMsg::product(&s, [&a, &b, &c]).unwrap();
        let cba = CategoricalMsg::product(&s, [&c, &b, &a]).unwrap();
        prop_assert!((abc.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(abc.total_variation(&cba) < 1e-12);
    }

    #[test]
    fn log_weights_are_shift_invariant(w in prop::collection::vec(-50.0f64..50.0, 4), shift in -1e3f64..1e3) {
        let s = qam();
        let a = CategoricalMsg::from_log_weights(&s, &w).unwrap();
        let shifted: Vec<f64> = w.iter().map(|v| v + shift).collect();
        let b = CategoricalMsg::from_log_weights(&s, &shifted).unwrap();
        prop_assert!(a.total_variation(&b) < 1e-12);
    }

    #[test]
    fn gaussian_product_commutes(a in gaussian(2), b in gaussian(2)) {
        let ab = a.product(&b).unwrap();
        let ba = b.product(&a).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn division_undoes_product(a in gaussian(3), b in gaussian(3)) {
        let (q, clamps) = DiagGaussianMsg::divide(&a.product(&b).unwrap(), &b, 1e-12).unwrap();
        prop_assert_eq!(clamps, 0);
        for i in 0..3 {
            prop_assert!((q.prec()[i] - a.prec()[i]).abs() < 1e-9 * a.prec()[i].max(1.0));
            prop_assert!((q.mean()[i] - a.mean()[i]).norm() < 1e-8 * a.mean()[i].norm().max(1.0));
        }
    }

    #[test]
    fn damping_stays_between_endpoints(a in gaussian(2), b in gaussian(2), beta in 0.0f64..1.0) {
        let d = a.damped(&b, beta);
        for i in 0..2 {
            let (lo, hi) = (a.prec()[i].min(b.prec()[i]), a.prec()[i].max(b.prec()[i]));
            prop_assert!(d.prec()[i] >= lo * (1.0 - 1e-12) && d.prec()[i] <= hi * (1.0 + 1e-12));
        }
    }

    #[test]
    fn total_variation_is_a_bounded_metric(a in pmf(), b in pmf()) {
        let d = a.total_variation(&b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - b.total_variation(&a)).abs() < 1e-15);
        prop_assert!(a.total_variation(&a) == 0.0);
    }
}
