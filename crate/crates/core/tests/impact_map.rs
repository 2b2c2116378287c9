use impact_melnikov::flow::FlowOptions;
use impact_melnikov::impact_map::{self, SectionPoint};
use impact_melnikov::*;
use proptest::prelude::*;

fn builtins() -> Vec<TwoZoneSystem> {
    vec![TwoZoneSystem::linear_block(5.0), TwoZoneSystem::nonlinear_block(0.25, 5.0).unwrap()]
}

#[test]
fn period_is_monotone_in_velocity() {
    for sys in builtins() {
        let h = 1e-5;
        for i in 1..=19 {
            let y = 0.05 * i as f64;
            let slope = (impact_map::alpha(&sys, y + h).unwrap() - impact_map::alpha(&sys, y - h).unwrap()) / (2.0 * h);
            assert!(slope > 0.0, "alpha' = {slope} at y = {y}");
        }
    }
}

#[test]
fn compact_set_limit() {
    let sys = TwoZoneSystem::linear_block(5.0);
    let top = impact_map::compact_limit(&sys);
    assert!((top - 0.995).abs() < 1e-15);
    let too_long = impact_map::alpha(&sys, top).unwrap() + 1.0;
    assert!(matches!(impact_map::alpha_inverse(&sys, too_long), Err(Error::Domain(_))));
}

// Central-difference Jacobians of a C² map converge at second order.
#[test]
fn impact_map_jacobian_converges_at_second_order() {
    let sys = TwoZoneSystem::linear_block(5.0).with_epsilon(0.01).unwrap();
    let opts = FlowOptions::precise().with_tolerance(1e-13);
    let map = |y: f64, t: f64| {
        let p = impact_map::impact_map_p(&sys, SectionPoint::new(&sys, y, t).unwrap(), 1, &opts).unwrap();
        [p.y, p.t]
    };
    let (y, t) = (0.5, 0.3);
    let jac = |h: f64| {
        let (a, b) = (map(y + h, t), map(y - h, t));
        let (c, d) = (map(y, t + h), map(y, t - h));
        [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h), (c[0] - d[0]) / (2.0 * h), (c[1] - d[1]) / (2.0 * h)]
    };
    let (j1, j2, j3) = (jac(0.04), jac(0.02), jac(0.01));
    for k in 0..4 {
        let (e1, e2) = ((j1[k] - j2[k]).abs(), (j2[k] - j3[k]).abs());
        if e1 < 1e-9 {
            continue;
        }
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "entry {k}: order {order}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn map_commutes_with_forcing_period(y in 0.2f64..0.9, t in 0.0f64..1.3, eps in 0.0f64..0.02, r in 0.95f64..=1.0) {
        let sys = TwoZoneSystem::linear_block(5.0).with_epsilon(eps).unwrap().with_restitution(r).unwrap();
        let opts = FlowOptions::precise();
        let period = sys.period();
        let a = impact_map::impact_map_p(&sys, SectionPoint::new(&sys, y, t).unwrap(), 1, &opts).unwrap();
        let b = impact_map::impact_map_p(&sys, SectionPoint::new(&sys, y, t + period).unwrap(), 1, &opts).unwrap();
        prop_assert!((a.y - b.y).abs() < 1e-9);
        prop_assert!((b.t - a.t - period).abs() < 1e-9);
    }

    #[test]
    fn inverse_period_round_trip(y in 0.05f64..0.98) {
        for sys in builtins() {
            let p = impact_map::alpha(&sys, y).unwrap();
            let back = impact_map::alpha_inverse(&sys, p).unwrap();
            prop_assert!((back - y).abs() < 1e-10);
        }
    }
}
