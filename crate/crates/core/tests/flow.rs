use impact_melnikov::flow::{self, Direction, FlowOptions};
use impact_melnikov::impact_map::{self, SectionPoint};
use impact_melnikov::*;
use proptest::prelude::*;

fn block() -> TwoZoneSystem {
    TwoZoneSystem::linear_block(5.0)
}

#[test]
fn saddle_is_a_fixed_point() {
    let sys = block();
    let opts = FlowOptions { stall_radius: 0.0, ..FlowOptions::default() };
    let tr = flow::transit(&sys, PhaseState::new(1.0, 0.0, 0.0), Zone::Plus, Direction::Forward, Some(5.0), &opts, false)
        .unwrap();
    assert!(!tr.crossed);
    assert_eq!((tr.end.x, tr.end.y), (1.0, 0.0));
}

#[test]
fn reversal_returns_to_the_start() {
    let sys = block();
    let opts = FlowOptions::precise();
    for &y in &[0.2, 0.5, 0.8, 0.95] {
        let period = impact_map::alpha(&sys, y).unwrap();
        let seq = flow::impact_sequence(&sys, y, 0.0, 2, &opts).unwrap();
        let last = seq.last();
        assert!((last.y - y).abs() < 1e-8);
        assert!((last.t - period).abs() < 1e-8);
    }
}

#[test]
fn grazing_start_is_reported() {
    let sys = block();
    let err = flow::impact_sequence(&sys, 1e-10, 0.0, 2, &FlowOptions::default()).unwrap_err();
    assert!(matches!(err, Error::GrazingImpact { index: 0, .. }), "{err:?}");
}

#[test]
fn escape_past_the_saddle_is_reported() {
    let sys = block();
    let opts = FlowOptions { max_transit_time: 20.0, ..FlowOptions::default() };
    let err = flow::impact_sequence(&sys, 1.2, 0.0, 2, &opts).unwrap_err();
    assert!(matches!(err, Error::NoCrossing { index: 0, .. }), "{err:?}");
}

#[test]
fn trajectory_csv_shape() {
    let sys = block().with_epsilon(0.01).unwrap();
    let traj = flow::simulate(&sys, PhaseState::on_switching_line(0.6, 0.0), 10.0, &FlowOptions::default()).unwrap();
    let csv = traj.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,y,zone,impact_flag"));
    let impacts = lines.filter(|l| l.ends_with(",1")).count();
    assert!(impacts >= traj.impacts.impacts());
}

#[test]
fn unit_restitution_map_is_the_plain_composition() {
    let sys = block().with_epsilon(0.02).unwrap();
    let opts = FlowOptions::precise();
    for &(y, t) in &[(0.4, 0.0), (0.7, 0.9), (0.9, 2.1)] {
        let p = SectionPoint::new(&sys, y, t).unwrap();
        let composed = impact_map::half_map(&sys, impact_map::half_map(&sys, p, &opts).unwrap(), &opts).unwrap();
        let mapped = impact_map::impact_map_p(&sys, p, 1, &opts).unwrap();
        assert_eq!((mapped.y, mapped.t), (composed.y, composed.t));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn numeric_transit_matches_closed_form(y in 0.05f64..0.97, t0 in 0.0f64..2.0, eps in 0.0f64..0.3, plus in any::<bool>()) {
        let sys = block().with_epsilon(eps).unwrap();
        let opts = FlowOptions::precise();
        let (zone, y) = if plus { (Zone::Plus, y) } else { (Zone::Minus, -y) };
        let start = PhaseState::on_switching_line(y, t0);
        let t_stop = t0 + 0.7;
        let tr = flow::transit(&sys, start, zone, Direction::Forward, Some(t_stop), &opts, false);
        prop_assume!(tr.is_ok());
        let tr = tr.unwrap();
        let exact = flow::closed_form_flow_linear(&sys, start, zone, tr.end.t).unwrap();
        prop_assert!((tr.end.x - exact.x).abs() < 1e-9 && (tr.end.y - exact.y).abs() < 1e-9,
            "{:?} vs {:?}", tr.end, exact);
    }

    #[test]
    fn impact_sequence_structure(y in 0.1f64..0.95, t0 in 0.0f64..1.3, eps in 0.0f64..0.02, r in 0.9f64..1.0) {
        let sys = block().with_epsilon(eps).unwrap().with_restitution(r).unwrap();
        let seq = flow::impact_sequence(&sys, y, t0, 6, &FlowOptions::default());
        prop_assume!(seq.is_ok());
        let seq = seq.unwrap();
        for (i, w) in seq.records.windows(2).enumerate() {
            prop_assert!(w[1].t > w[0].t);
            let expected = if i % 2 == 0 { -1.0 } else { 1.0 };
            prop_assert_eq!(w[1].y.signum(), expected);
            prop_assert!((w[1].y - r * w[1].y_pre).abs() < 1e-15);
        }
    }

    #[test]
    fn x_changes_sign_only_at_impacts(y in 0.2f64..0.9, eps in 0.0f64..0.05) {
        let sys = block().with_epsilon(eps).unwrap();
        let traj = flow::simulate(&sys, PhaseState::on_switching_line(y, 0.0), 8.0, &FlowOptions::default()).unwrap();
        for w in traj.samples.windows(2) {
            let (a, b) = (w[0].state.x, w[1].state.x);
            if a * b < 0.0 {
                prop_assert!(w[0].impact || w[1].impact);
            }
            if !w[1].impact && w[1].state.x != 0.0 {
                prop_assert_eq!(w[1].zone, Zone::of(w[1].state.x, w[1].state.y).unwrap());
            }
        }
    }
}
