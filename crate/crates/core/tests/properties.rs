use proptest::prelude::*;
use reszone_core::equilibria::{closed_form_equilibria, curve_function, refine_equilibrium, CurveTag, Kind, Label};
use reszone_core::flow::{integrate_orbit, Sampling};
use reszone_core::maps::{finite_difference_det, inverse_step, map_jacobian_det, map_step, MapSpec, DENOMINATOR_FLOOR};
use reszone_core::math::{angle_diff, TAU};
use reszone_core::reconnection::{on_curve, reconnection_residual, region_signature, trace_reconnection_curve};
use reszone_core::zone::{eval_hamiltonian, eval_vector_field, jacobian};
use reszone_core::{PhaseState, ZoneParameters};

fn zone() -> impl Strategy<Value = ZoneParameters> {
    (
        -3.0..3.0f64,
        prop_oneof![-2.0..-0.5f64, 0.5..2.0f64],
        1u32..4,
        -3.0..3.0f64,
        -3.0..3.0f64,
    )
        .prop_map(|(a, b, p, mu1, mu2)| ZoneParameters::new(a, b, p, mu1, mu2).unwrap())
}

fn state() -> impl Strategy<Value = PhaseState> {
    (-3.0..3.0f64, 0.0..TAU).prop_map(|(u, v)| PhaseState::new(u, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn field_is_hamiltonian(params in zone(), s in state()) {
        let h = 1e-6;
        let hu = (eval_hamiltonian(&params, PhaseState::new(s.u + h, s.v))
            - eval_hamiltonian(&params, PhaseState::new(s.u - h, s.v))) / (2.0 * h);
        let hv = (eval_hamiltonian(&params, PhaseState::new(s.u, s.v + h))
            - eval_hamiltonian(&params, PhaseState::new(s.u, s.v - h))) / (2.0 * h);
        let (du, dv) = eval_vector_field(&params, s);
        prop_assert!((du + hv).abs() < 1e-6);
        prop_assert!((dv - hu).abs() < 1e-6);
    }

    #[test]
    fn field_is_divergence_free(params in zone(), s in state()) {
        let j = jacobian(&params, s);
        prop_assert_eq!(j[0][0] + j[1][1], 0.0);
    }

    #[test]
    fn field_is_periodic_and_reversible(params in zone(), s in state()) {
        let (du, dv) = eval_vector_field(&params, s);
        let (pu, pv) = eval_vector_field(&params, PhaseState::new(s.u, s.v + TAU));
        prop_assert!((du - pu).abs() < 1e-12 && (dv - pv).abs() < 1e-12);
        let (ru, rv) = eval_vector_field(&params, PhaseState::new(s.u, -s.v));
        prop_assert_eq!(ru, -du);
        prop_assert_eq!(rv, dv);
    }

    #[test]
    fn newton_recovers_closed_form(params in zone(), du in -1e-3..1e-3f64, dv in -1e-3..1e-3f64) {
        let eqs = closed_form_equilibria(&params);
        for e in &eqs {
            prop_assert_eq!(e.energy, eval_hamiltonian(&params, e.state));
            let isolated = eqs.iter().all(|o| o.label == e.label
                || reszone_core::equilibria::phase_distance(o.state, e.state) > 0.1);
            if e.delta.abs() < 0.05 || !isolated {
                continue;
            }
            let guess = PhaseState::new(e.state.u + du, e.state.v + dv);
            let r = refine_equilibrium(&params, guess).unwrap();
            prop_assert!(reszone_core::equilibria::phase_distance(r.state, e.state) < 1e-10);
        }
    }

    #[test]
    fn axis_counts_have_parity(mu2 in 0.5..3.0f64, off in 1e-3..0.5f64, p in 1u32..3) {
        let count = |params: &ZoneParameters, labels: [Label; 2]| {
            closed_form_equilibria(params).iter().filter(|e| labels.contains(&e.label)).count()
        };
        let base = ZoneParameters::new(2.0, 1.0, p, 0.0, mu2).unwrap();
        let on_m3 = f64::from(p) * mu2 * mu2 / 4.0;
        for mu1 in [on_m3 - off, on_m3 + off] {
            let n = count(&base.with_mu(mu1, mu2), [Label::O1Plus, Label::O1Minus]);
            prop_assert!(n == 0 || n == 2);
        }
        let on = base.with_mu(on_m3, mu2);
        prop_assert!(curve_function(&on, CurveTag::M3, on_m3, mu2).abs() < 1e-12);
        prop_assert_eq!(count(&on, [Label::O1Plus, Label::O1Minus]), 1);
        let n = count(&base.with_mu(-on_m3 - off, mu2), [Label::O2Plus, Label::O2Minus]);
        prop_assert!(n == 0 || n == 2);
        prop_assert_eq!(count(&base.with_mu(-on_m3, mu2), [Label::O2Plus, Label::O2Minus]), 1);
    }

    #[test]
    fn vertical_pair_is_saddle_and_center(mu2 in 0.5..3.0f64) {
        // point A, where the off-axis pair lands on the merging pair
        prop_assume!((mu2 - 16f64.cbrt()).abs() > 0.05);
        let mu1 = mu2 * mu2 / 4.0 - 1e-4;
        let eqs = closed_form_equilibria(&ZoneParameters::reference(mu1, mu2));
        let kind = |l: Label| eqs.iter().find(|e| e.label == l).map(|e| e.kind);
        let pair = [kind(Label::O1Plus).unwrap(), kind(Label::O1Minus).unwrap()];
        prop_assert!(pair.contains(&Kind::Saddle) && pair.contains(&Kind::Center));
    }

    #[test]
    fn small_mu1_has_no_vortex_pairs(mu2 in -10.0..10.0f64) {
        let params = ZoneParameters::reference(0.01, mu2);
        prop_assume!(on_curve(&params).is_none());
        prop_assert!(!region_signature(&params).unwrap().has_off_axis);
    }

    #[test]
    fn signatures_are_deterministic(mu1 in -3.0..3.0f64, mu2 in -3.0..3.0f64) {
        let params = ZoneParameters::reference(mu1, mu2);
        prop_assume!(on_curve(&params).is_none());
        prop_assert_eq!(region_signature(&params).unwrap(), region_signature(&params).unwrap());
    }

    #[test]
    fn maps_preserve_area_and_invert(s in state(), alpha in 0.005..0.2f64, params in zone()) {
        let standard = MapSpec::StandardNonmonotone { a: params.a, beta: params.mu2.abs() / 3.0 };
        let euler = MapSpec::EulerConservative { alpha, zone: params };
        prop_assume!((1.0 - alpha * params.mu1 * s.v.sin()).abs() > 1e3 * DENOMINATOR_FLOOR);
        for spec in [standard, euler] {
            prop_assert!((map_jacobian_det(&spec, s).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((finite_difference_det(&spec, s, 1e-5).unwrap() - 1.0).abs() < 1e-6);
            let back = inverse_step(&spec, map_step(&spec, s).unwrap()).unwrap();
            prop_assert!((back.u - s.u).abs() < 1e-10);
            prop_assert!(angle_diff(back.v, s.v).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn orbits_conserve_energy(params in zone(), s in state()) {
        let trace = integrate_orbit(&params, s, (0.0, 20.0), 1e-10, &Sampling::Uniform(4)).unwrap();
        prop_assert!(trace.relative_drift().unwrap() < 1e-8);
    }

    #[test]
    fn reconnection_levels_are_strictly_ordered(mu1 in 0.1..0.5f64) {
        let base = ZoneParameters::reference(mu1, 2.0);
        let pair = (Label::O1Plus, Label::O2Minus);
        let curve = trace_reconnection_curve(&base, &[mu1], (0.0, 3.0), pair).unwrap();
        let (_, mu2) = curve.points().next().copied().unwrap();
        prop_assert!(reconnection_residual(&base.with_mu(mu1, mu2), pair).unwrap().abs() < 1e-10);
        let below = reconnection_residual(&base.with_mu(mu1, mu2 - 1e-3), pair).unwrap();
        let above = reconnection_residual(&base.with_mu(mu1, mu2 + 1e-3), pair).unwrap();
        prop_assert!(below * above < 0.0);
    }
}
