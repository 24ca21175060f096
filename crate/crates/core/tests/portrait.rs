use reszone_core::equilibria::closed_form_equilibria;
use reszone_core::flow::{trace_separatrices, BranchEnd, SeparatrixBudget};
use reszone_core::math::{PI, TAU};
use reszone_core::portrait::{sample_phase_portrait_with, Window};
use reszone_core::ZoneParameters;

#[test]
fn every_center_is_enclosed() {
    let window = Window::new((-4.0, 4.0), (-PI / 2.0, 3.0 * PI / 2.0)).unwrap();
    for (mu1, mu2) in [
        (0.3, 1.0),
        (-1.4, 1.3),
        (0.9, 2.5),
        (2.16, 2.745),
        (1.4, 3.3),
        (-3.1, 1.6),
        (2.7, 1.7),
    ] {
        let params = ZoneParameters::reference(mu1, mu2);
        let portrait = sample_phase_portrait_with(&params, window, 12, 256).unwrap();
        for e in portrait.equilibria.iter().filter(|e| e.is_center()) {
            assert!(portrait.encloses(e.state), "({mu1}, {mu2}) {e:?}");
        }
    }
}

#[test]
fn homoclinic_branches_close_on_their_saddle() {
    // a = 2, mu1 = 0: the v = pi saddle has a loop around the cylinder
    let params = ZoneParameters::reference(0.0, 1.0);
    let eqs = closed_form_equilibria(&params);
    let mut closed = 0;
    for saddle in eqs.iter().filter(|e| e.is_saddle()) {
        let branches = trace_separatrices(&params, saddle, &eqs, SeparatrixBudget::default()).unwrap();
        for b in &branches {
            if let BranchEnd::Saddle { label, at } = b.end {
                if label == saddle.label {
                    closed += 1;
                    let end = b.points.last().unwrap();
                    let dv = ((end.v - at.v) / TAU).round() * TAU;
                    assert!((end.u - at.u).hypot(end.v - at.v - dv) < 1e-5);
                }
            }
        }
    }
    assert!(closed > 0);
}
