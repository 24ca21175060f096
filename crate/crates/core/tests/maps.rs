use reszone_core::equilibria::closed_form_equilibria;
use reszone_core::maps::{approximating_zone, iterate_orbit, Approximation, MapSpec};
use reszone_core::reconnection::region_signature;
use reszone_core::{PhaseState, ZoneParameters};

#[test]
fn euler_orbits_stay_finite_at_figure_parameters() {
    for (mu1, mu2) in [(1.4, 2.0), (0.87, 2.57)] {
        let zone = ZoneParameters::reference(mu1, mu2);
        let spec = MapSpec::EulerConservative { alpha: 0.17, zone };
        let orbit = iterate_orbit(&spec, PhaseState::new(0.1, 0.1), 10_000).unwrap();
        assert_eq!(orbit.points.len(), 10_001);
        assert!(orbit
            .points
            .iter()
            .all(|p| p.u.is_finite() && p.v_unwrapped.is_finite()));
    }
}

#[test]
fn figure_parameters_sit_in_vortex_pair_regions() {
    let a = region_signature(&ZoneParameters::reference(1.4, 2.0)).unwrap();
    assert!(a.has_off_axis);
    assert_eq!(
        a.to_string(),
        "saddles=2 centers=2 off_axis=true order=O3=O4 center_labels=O2+,O2-"
    );
    let b = region_signature(&ZoneParameters::reference(0.87, 2.57)).unwrap();
    assert_eq!(
        b.to_string(),
        "saddles=3 centers=3 off_axis=true order=O1+<O3=O4 center_labels=O1-,O2+,O2-"
    );
}

#[test]
fn first_iterate_has_no_vortex_pairs() {
    for a in [0.1, 0.5, 1.0, 2.0, 5.0] {
        for beta in [0.05, 0.3, 1.0, 3.0] {
            let eqs = closed_form_equilibria(&approximating_zone(Approximation::T, a, beta));
            assert!(eqs.iter().all(|e| !e.label.is_off_axis()), "a={a} beta={beta}");
        }
    }
}

#[test]
fn second_iterate_has_vortex_pairs_on_the_rotation_extremum() {
    let (a, beta) = (2.0, 1.0);
    let eqs = closed_form_equilibria(&approximating_zone(Approximation::T2, a, beta));
    let off: Vec<_> = eqs.iter().filter(|e| e.label.is_off_axis()).collect();
    assert_eq!(off.len(), 2);
    for e in off {
        assert!((e.state.u - 1.0 / (2.0 * beta)).abs() < 1e-12);
    }
    // below a beta = sqrt 2 the pair has not been born yet
    let eqs = closed_form_equilibria(&approximating_zone(Approximation::T2, 1.0, 1.0));
    assert!(eqs.iter().all(|e| !e.label.is_off_axis()));
}
