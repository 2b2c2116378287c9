use impact_melnikov::flow::{self, Direction, FlowOptions};
use impact_melnikov::model::{Harmonic, ParametricPerturbation, SpatialProfile};
use impact_melnikov::*;
use proptest::prelude::*;

fn systems() -> Vec<TwoZoneSystem> {
    let custom = Perturbation::custom(
        3.0,
        ParametricPerturbation {
            plus: SpatialProfile::Polynomial { coefficients: vec![0.0, 1.0, 0.5] },
            minus: SpatialProfile::Polynomial { coefficients: vec![0.0, 1.0, -0.5] },
            velocity_coefficient: 0.3,
            harmonics: vec![Harmonic { order: 1, cos: 1.0, sin: 0.2 }, Harmonic { order: 2, cos: 0.0, sin: 0.5 }],
        },
    );
    vec![
        TwoZoneSystem::linear_block(5.0).with_epsilon(0.2).unwrap(),
        TwoZoneSystem::nonlinear_block(0.3, 2.0).unwrap().with_epsilon(0.1).unwrap(),
        TwoZoneSystem::linear_block(3.0).with_perturbation(custom).unwrap().with_epsilon(0.15).unwrap(),
    ]
}

fn full_h(sys: &TwoZoneSystem, zone: Zone, x: f64, y: f64, t: f64) -> f64 {
    sys.zone_h0(zone, x, y) + sys.epsilon() * sys.h1(zone, x, y, t)
}

#[test]
fn h0_is_continuous_on_the_switching_line() {
    for sys in systems() {
        for i in -20..=20 {
            let y = 0.05 * i as f64;
            assert_eq!(sys.zone_h0(Zone::Plus, 0.0, y), sys.zone_h0(Zone::Minus, 0.0, y));
        }
    }
}

#[test]
fn h1_is_continuous_on_the_switching_line() {
    for sys in systems() {
        for i in -10..=10 {
            for k in 0..8 {
                let (y, t) = (0.1 * i as f64, 0.37 * k as f64);
                let gap = sys.h1(Zone::Plus, 0.0, y, t) - sys.h1(Zone::Minus, 0.0, y, t);
                assert!(gap.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fold_point_is_rejected() {
    let sys = TwoZoneSystem::linear_block(5.0);
    assert_eq!(sys.vector_field(&PhaseState::new(0.0, 0.0, 0.0)), Err(Error::FoldPoint));
    assert_eq!(Zone::of(0.0, 0.3).unwrap(), Zone::Plus);
    assert_eq!(Zone::of(0.0, -0.3).unwrap(), Zone::Minus);
}

#[test]
fn linear_block_field_values() {
    let sys = TwoZoneSystem::linear_block(5.0).with_epsilon(0.1).unwrap();
    let (dx, dy) = sys.vector_field(&PhaseState::new(0.5, 0.2, 0.0)).unwrap();
    assert_eq!(dx, 0.2);
    assert!((dy - (0.5 - 1.0 - 0.1)).abs() < 1e-15);
    let (_, dy) = sys.vector_field(&PhaseState::new(-0.5, 0.2, 0.0)).unwrap();
    assert!((dy - (-0.5 + 1.0 - 0.1)).abs() < 1e-15);
}

#[test]
fn config_round_trip_and_rejection() {
    for sys in systems() {
        let config = sys.to_config();
        let back = SystemConfig::from_json(&config.to_json()).unwrap().build().unwrap();
        assert_eq!(back, sys);
    }
    let bad = r#"{"potential_plus":{"kind":"linear_block_plus"},"potential_minus":{"kind":"linear_block_minus"},
        "perturbation":{"kind":"cos_forcing"},"omega":5.0,"r":1.5}"#;
    assert!(matches!(SystemConfig::from_json(bad).unwrap().build(), Err(Error::InvalidSystem(_))));
    assert!(SystemConfig::from_json(r#"{"omega": 5.0}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn vector_field_is_hamiltonian(x in -0.95f64..0.95, y in -1.5f64..1.5, t in 0.0f64..10.0, which in 0usize..3) {
        prop_assume!(x != 0.0);
        let sys = &systems()[which];
        let zone = Zone::of(x, y).unwrap();
        let h = 1e-5;
        let dh_dy = (full_h(sys, zone, x, y + h, t) - full_h(sys, zone, x, y - h, t)) / (2.0 * h);
        let dh_dx = (full_h(sys, zone, x + h, y, t) - full_h(sys, zone, x - h, y, t)) / (2.0 * h);
        let (dx, dy) = sys.vector_field(&PhaseState::new(x, y, t)).unwrap();
        prop_assert!((dx - dh_dy).abs() < 1e-8, "dx {} vs {}", dx, dh_dy);
        prop_assert!((dy + dh_dx).abs() < 1e-8, "dy {} vs {}", dy, -dh_dx);
    }

    #[test]
    fn unperturbed_zone_flow_conserves_energy(y in 0.1f64..0.95, which in 0usize..3) {
        let sys = systems()[which].unperturbed();
        let opts = FlowOptions::default();
        let start = PhaseState::on_switching_line(y, 0.0);
        let tr = flow::transit(&sys, start, Zone::Plus, Direction::Forward, None, &opts, false).unwrap();
        let drift = (sys.h0(tr.end.x, tr.end.y) - sys.h0(0.0, y)).abs();
        prop_assert!(drift < 1e-10 * tr.duration.max(1.0) * 10.0, "drift {}", drift);
    }

    #[test]
    fn energy_changes_by_the_bracket_integral(y in 0.2f64..0.9, t0 in 0.0f64..2.0, which in 0usize..3) {
        let sys = &systems()[which];
        let opts = FlowOptions::precise();
        let start = PhaseState::on_switching_line(y, t0);
        let tr = flow::transit(sys, start, Zone::Plus, Direction::Forward, None, &opts, false).unwrap();
        let change = sys.h0(tr.end.x, tr.end.y) - sys.h0(0.0, y);
        prop_assert!((change - sys.epsilon() * tr.integral).abs() < 1e-9, "{} vs {}", change, sys.epsilon() * tr.integral);
    }
}
