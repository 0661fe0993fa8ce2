use proptest::prelude::*;
use rankflow_core::measures::{
    bounded_lipschitz_distance, ks_distance, levy_distance, DiscreteCdf, EmpiricalCdf, GridSlice,
};

fn sample() -> impl Strategy<Value = EmpiricalCdf> {
    prop::collection::vec(-4.0f64..4.0, 1..30).prop_map(|v| EmpiricalCdf::new(v, 0.0).unwrap())
}

fn slice() -> impl Strategy<Value = GridSlice<'static>> {
    (prop::collection::vec(0.0f64..1.0, 1..20), -3.0f64..0.0, 0.05f64..0.4).prop_map(|(mut v, x0, dx)| {
        v.sort_by(f64::total_cmp);
        v.insert(0, 0.0);
        v.push(1.0);
        GridSlice::new(x0, dx, v.into())
    })
}

proptest! {
    #[test]
    fn levy_is_a_bounded_metric(f in sample(), g in sample(), h in sample()) {
        let (fg, gf) = (levy_distance(&f, &g), levy_distance(&g, &f));
        prop_assert!((0.0..=1.0).contains(&fg));
        prop_assert!((fg - gf).abs() <= 1e-9);
        prop_assert_eq!(levy_distance(&f, &f), 0.0);
        let triangle = levy_distance(&f, &g) + levy_distance(&g, &h);
        prop_assert!(levy_distance(&f, &h) <= triangle + 2e-9);
    }

    #[test]
    fn levy_below_ks(f in sample(), g in slice()) {
        prop_assert!(levy_distance(&f, &g) <= ks_distance(&f, &g) + 1e-9);
        prop_assert!(levy_distance(&g, &f) <= ks_distance(&g, &f) + 1e-9);
    }

    #[test]
    fn levy_of_shift_bounded_by_shift(v in prop::collection::vec(-4.0f64..4.0, 1..30), a in -2.0f64..2.0) {
        let f = EmpiricalCdf::new(v.clone(), 0.0).unwrap();
        let g = EmpiricalCdf::new(v.iter().map(|x| x + a).collect(), 0.0).unwrap();
        prop_assert!(levy_distance(&f, &g) <= a.abs() + 1e-9);
    }

    #[test]
    fn bounded_lipschitz_point_masses(a in 0.01f64..6.0) {
        let d = bounded_lipschitz_distance(&DiscreteCdf::point_mass(0.0), &DiscreteCdf::point_mass(a)).distance;
        prop_assert!((d - 2.0 * a / (2.0 + a)).abs() <= 1e-9, "{} vs {}", d, 2.0 * a / (2.0 + a));
    }

    #[test]
    fn bounded_lipschitz_is_symmetric_and_bounded(f in sample(), g in sample()) {
        let (fg, gf) = (bounded_lipschitz_distance(&f, &g).distance, bounded_lipschitz_distance(&g, &f).distance);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&fg));
        prop_assert!((fg - gf).abs() <= 1e-9);
    }
}
