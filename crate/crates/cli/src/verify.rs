//! The invariant suite run by `reszone verify`: one check per module
//! invariant, evaluated at seeded random points.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use reszone_core::averaging::{
    compute_averaged_coefficients, verify_hamiltonian_identities, PerturbationSpec, ResonanceSpec,
};
use reszone_core::equilibria::{
    closed_form_equilibria, curve_function, phase_distance, refine_equilibrium, CurveTag, Label,
};
use reszone_core::flow::{integrate_orbit, trace_separatrices, BranchEnd, Sampling, SeparatrixBudget};
use reszone_core::maps::{
    approximating_zone, euler_flow_defect, finite_difference_det, inverse_step, map_jacobian_det, map_step,
    Approximation, MapSpec,
};
use reszone_core::math::{angle_diff, TAU};
use reszone_core::portrait::{sample_phase_portrait_with, Window};
use reszone_core::reconnection::{reconnection_residual, region_signature, trace_reconnection_curve};
use reszone_core::zone::{eval_hamiltonian, eval_vector_field, jacobian};
use reszone_core::{PhaseState, ZoneParameters};

use crate::commands::Outcome;
use crate::config::{parse_config, Command};
use crate::output::{read_csv, to_csv, Artifact, CheckRow, CurveRow, Meta};
use crate::svg::{self, Figure, Glyph, GlyphKind, Path};

pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

struct Points {
    rng: ChaCha8Rng,
}

impl Points {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    fn params(&mut self) -> ZoneParameters {
        ZoneParameters::reference(self.uniform(-3.0, 3.0), self.uniform(-3.0, 3.0))
    }

    fn state(&mut self) -> PhaseState {
        PhaseState::new(self.uniform(-3.0, 3.0), self.uniform(0.0, TAU))
    }
}

fn check(module: &'static str, name: &'static str, pass: bool, detail: String) -> Check {
    Check {
        module,
        name,
        pass,
        detail,
    }
}

fn field_is_hamiltonian(pts: &mut Points, n: usize) -> Check {
    let (mut grad, mut div) = (0.0f64, 0.0f64);
    let h = 1e-6;
    for _ in 0..n {
        let (z, s) = (pts.params(), pts.state());
        let at = |du: f64, dv: f64| eval_hamiltonian(&z, PhaseState::new(s.u + du, s.v + dv));
        let hu = (at(h, 0.0) - at(-h, 0.0)) / (2.0 * h);
        let hv = (at(0.0, h) - at(0.0, -h)) / (2.0 * h);
        let (fu, fv) = eval_vector_field(&z, s);
        grad = grad.max((fu + hv).abs().max((fv - hu).abs()));
        let j = jacobian(&z, s);
        div = div.max((j[0][0] + j[1][1]).abs());
    }
    check(
        "zone",
        "field is (-H_v, H_u) and divergence-free",
        grad < 1e-6 && div == 0.0,
        format!("max gradient mismatch {grad:.1e} (tol 1e-6), max divergence {div:.1e}"),
    )
}

fn newton_agreement(pts: &mut Points, n: usize) -> Check {
    let (mut shift, mut residual, mut count) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..n {
        let z = pts.params();
        for e in closed_form_equilibria(&z) {
            let (du, dv) = eval_vector_field(&z, e.state);
            residual = residual.max(du.hypot(dv));
            shift =
                shift.max(refine_equilibrium(&z, e.state).map_or(f64::INFINITY, |r| phase_distance(r.state, e.state)));
            count += 1;
        }
    }
    check(
        "equilibria",
        "Newton reproduces the closed form",
        shift < 1e-10 && residual < 1e-12,
        format!("{count} equilibria, shift {shift:.1e} (tol 1e-10), residual {residual:.1e} (tol 1e-12)"),
    )
}

fn curve_identities() -> Check {
    let z = ZoneParameters::reference(0.0, 0.0);
    let worst = [
        (CurveTag::M3, 1.0, 2.0),
        (CurveTag::M4, -1.0, 2.0),
        (CurveTag::M5Plus, 1.0, 2.5),
        (CurveTag::M5Minus, 1.0, 1.5),
    ]
    .iter()
    .map(|&(t, a, b)| curve_function(&z, t, a, b).abs())
    .fold(0.0, f64::max);
    check(
        "equilibria",
        "local curves through their reference points",
        worst <= 1e-12,
        format!("max |curve function| {worst:.1e} (tol 1e-12)"),
    )
}

fn axis_parity(pts: &mut Points, n: usize) -> Check {
    let mut bad = 0;
    for _ in 0..n {
        let z = pts.params();
        let count = |ls: [Label; 2]| {
            closed_form_equilibria(&z)
                .iter()
                .filter(|e| ls.contains(&e.label))
                .count()
        };
        for ls in [[Label::O1Plus, Label::O1Minus], [Label::O2Plus, Label::O2Minus]] {
            if count(ls) % 2 != 0 {
                bad += 1;
            }
        }
    }
    check(
        "equilibria",
        "axis equilibria come in pairs off the curves",
        bad == 0,
        format!("{bad} odd counts over {n} parameter sets"),
    )
}

fn reconnection_bisection() -> Check {
    let base = ZoneParameters::reference(0.0, 0.0);
    let pair = (Label::O1Plus, Label::O2Minus);
    let mu1s = [0.1, 0.2, 0.3, 0.4, 0.5];
    let (found, worst) = match trace_reconnection_curve(&base, &mu1s, (0.0, 3.0), pair) {
        Ok(curve) => {
            let pts: Vec<_> = curve.points().copied().collect();
            let worst = pts
                .iter()
                .map(|&(a, b)| reconnection_residual(&base.with_mu(a, b), pair).map_or(f64::INFINITY, f64::abs))
                .fold(0.0, f64::max);
            (pts.len(), worst)
        }
        Err(_) => (0, f64::INFINITY),
    };
    check(
        "reconnection",
        "bisection reaches |h1 - h2| < 1e-10",
        found == mu1s.len() && worst < 1e-10,
        format!("{found}/{} roots, max residual {worst:.1e}", mu1s.len()),
    )
}

fn vortex_pairs() -> Check {
    let z = ZoneParameters::reference(0.0, 0.0);
    let flips = [(2.45, 2.55), (1.45, 1.55)]
        .iter()
        .filter(|&&(lo, hi)| {
            match (
                region_signature(&z.with_mu(1.0, lo)),
                region_signature(&z.with_mu(1.0, hi)),
            ) {
                (Ok(a), Ok(b)) => a.has_off_axis != b.has_off_axis,
                _ => false,
            }
        })
        .count();
    let off_axis = (0..=2000)
        .map(|k| -10.0 + 20.0 * k as f64 / 2000.0)
        .filter(|&mu2| {
            closed_form_equilibria(&z.with_mu(0.01, mu2))
                .iter()
                .any(|e| e.label.is_off_axis())
        })
        .count();
    check(
        "reconnection",
        "m5 crossings flip has_off_axis; none at mu1 = 0.01",
        flips == 2 && off_axis == 0,
        format!("{flips}/2 flips, {off_axis} off-axis samples at mu1 = 0.01"),
    )
}

fn averaging_identities() -> Check {
    const K: f64 = 0.3;
    let x = |i: f64, t: f64| (2.0 * i).sqrt() * t.cos() + K * i.powf(1.5) * (3.0 * t).cos();
    let pert = PerturbationSpec {
        f: |i: f64, t: f64, phi: f64| {
            let x_t = -(2.0 * i).sqrt() * t.sin() - 3.0 * K * i.powf(1.5) * (3.0 * t).sin();
            (x(i, t) - phi).sin() * x_t
        },
        g: |i: f64, t: f64, phi: f64| {
            let x_i = t.cos() / (2.0 * i).sqrt() + 1.5 * K * i.sqrt() * (3.0 * t).cos();
            -(x(i, t) - phi).sin() * x_i
        },
    };
    let spec = ResonanceSpec {
        p: 1,
        q: 1,
        i_pq: 0.8,
        j: 2,
        bj: 1.0,
        bj1: 0.0,
    };
    let simple = PerturbationSpec {
        f: |_: f64, t: f64, phi: f64| (t - phi).sin(),
        g: |_: f64, _: f64, _: f64| 0.0,
    };
    let (Ok(c), Ok(s)) = (
        compute_averaged_coefficients(&pert, &spec, 2048),
        compute_averaged_coefficients(&simple, &spec, 2048),
    ) else {
        return check("averaging", "Hamiltonian identities", false, "quadrature failed".into());
    };
    let r = verify_hamiltonian_identities(&c);
    let sin_err = s
        .v_grid
        .iter()
        .zip(&s.a0)
        .map(|(v, a)| (a - v.sin()).abs())
        .fold(0.0, f64::max);
    check(
        "averaging",
        "Hamiltonian identities and A0 = sin v",
        r.passed() && sin_err < 1e-10,
        format!(
            "max|P0+dQ0/dv| {:.1e}, |B0| {:.1e}, |B1| {:.1e}; max|A0-sin v| {sin_err:.1e}",
            r.identity_residual,
            r.b0.abs(),
            r.b1.abs()
        ),
    )
}

fn energy_conservation(pts: &mut Points, n: usize) -> Check {
    let cases: Vec<_> = (0..n.min(20))
        .map(|_| {
            (
                pts.params(),
                PhaseState::new(pts.uniform(-2.0, 2.0), pts.uniform(0.0, TAU)),
            )
        })
        .collect();
    let worst = cases
        .par_iter()
        .map(|(z, s)| {
            integrate_orbit(z, *s, (0.0, 100.0), 1e-10, &Sampling::Uniform(4))
                .ok()
                .and_then(|t| t.relative_drift())
                .unwrap_or(f64::INFINITY)
        })
        .reduce(|| 0.0, f64::max);
    check(
        "flow",
        "relative energy drift over tau = 100",
        worst < 1e-8,
        format!("max drift {worst:.1e} over {} orbits (tol 1e-8)", cases.len()),
    )
}

fn centers_enclosed() -> Check {
    let window = Window::new((-4.0, 4.0), (-std::f64::consts::FRAC_PI_2, 1.5 * std::f64::consts::PI)).expect("window");
    let sets = [(0.3, 1.0), (-1.4, 1.3), (0.9, 2.5), (1.4, 3.3)];
    let missed: usize = sets
        .par_iter()
        .map(|&(a, b)| {
            let z = ZoneParameters::reference(a, b);
            match sample_phase_portrait_with(&z, window, 12, 256) {
                Ok(p) => p
                    .equilibria
                    .iter()
                    .filter(|e| e.is_center() && !p.encloses(e.state))
                    .count(),
                Err(_) => 1,
            }
        })
        .sum();
    check(
        "portrait",
        "every center is enclosed by a closed contour",
        missed == 0,
        format!("{missed} unenclosed centers over {} parameter sets", sets.len()),
    )
}

fn homoclinic_closure() -> Check {
    let z = ZoneParameters::reference(0.0, 1.0);
    let eqs = closed_form_equilibria(&z);
    let mut gaps = Vec::new();
    for s in eqs.iter().filter(|e| e.is_saddle()) {
        let Ok(branches) = trace_separatrices(&z, s, &eqs, SeparatrixBudget::default()) else {
            gaps.push(f64::INFINITY);
            continue;
        };
        for b in &branches {
            if let (BranchEnd::Saddle { label, at }, Some(end)) = (b.end, b.points.last()) {
                if label == s.label {
                    let dv = ((end.v - at.v) / TAU).round() * TAU;
                    gaps.push((end.u - at.u).hypot(end.v - at.v - dv));
                }
            }
        }
    }
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    check(
        "flow",
        "homoclinic branches return within 1e-5",
        !gaps.is_empty() && worst < 1e-5,
        format!("{} returning branches, max gap {worst:.1e}", gaps.len()),
    )
}

fn area_preservation(pts: &mut Points, n: usize) -> Check {
    let specs = [
        MapSpec::StandardNonmonotone { a: 0.8, beta: 0.3 },
        MapSpec::EulerConservative {
            alpha: 0.17,
            zone: ZoneParameters::reference(1.4, 2.0),
        },
    ];
    let (mut analytic, mut fd, mut inverse) = (0.0f64, 0.0f64, 0.0f64);
    for spec in &specs {
        for _ in 0..n {
            let s = pts.state();
            let det = map_jacobian_det(spec, s).unwrap_or(f64::INFINITY);
            let det_fd = finite_difference_det(spec, s, 1e-5).unwrap_or(f64::INFINITY);
            analytic = analytic.max((det - 1.0).abs());
            fd = fd.max((det_fd - 1.0).abs());
            let back = map_step(spec, s).and_then(|t| inverse_step(spec, t));
            inverse = inverse.max(back.map_or(f64::INFINITY, |b| (b.u - s.u).abs().max(angle_diff(b.v, s.v).abs())));
        }
    }
    check(
        "maps",
        "area preservation and inversion",
        analytic < 1e-12 && fd < 1e-6 && inverse < 1e-10,
        format!("|det-1| analytic {analytic:.1e}, finite differences {fd:.1e}; inverse error {inverse:.1e}"),
    )
}

fn euler_order() -> Check {
    let z = ZoneParameters::reference(0.5, 1.0);
    let starts = [(0.4, 1.1), (-0.7, 2.5), (1.2, 4.0)];
    let min = starts
        .iter()
        .map(|&(u, v)| {
            let s = PhaseState::new(u, v);
            match (
                euler_flow_defect(&z, s, 0.01, 1e-12),
                euler_flow_defect(&z, s, 0.005, 1e-12),
            ) {
                (Ok(a), Ok(b)) => (a / b).log2(),
                _ => f64::NEG_INFINITY,
            }
        })
        .fold(f64::INFINITY, f64::min);
    check(
        "maps",
        "Euler map one-step error is O(alpha^2)",
        min >= 1.8,
        format!("observed order min {min:.3} (need >= 1.8)"),
    )
}

fn t_versus_t2(pts: &mut Points, n: usize) -> Check {
    let t_off: usize = (0..n)
        .map(|_| {
            let (a, beta) = (pts.uniform(0.01, 5.0), pts.uniform(0.01, 5.0));
            closed_form_equilibria(&approximating_zone(Approximation::T, a, beta))
                .iter()
                .filter(|e| e.label.is_off_axis())
                .count()
        })
        .sum();
    let t2: Vec<f64> = closed_form_equilibria(&approximating_zone(Approximation::T2, 2.0, 1.0))
        .iter()
        .filter(|e| e.label.is_off_axis())
        .map(|e| (e.state.u - 0.5).abs())
        .collect();
    check(
        "maps",
        "T has no off-axis equilibria, T^2 has them on u = 1/(2 beta)",
        t_off == 0 && t2.len() == 2 && t2.iter().all(|d| *d < 1e-12),
        format!(
            "T: {t_off} off-axis over {n} samples; T^2 at a=2, beta=1: {} on the line",
            t2.len()
        ),
    )
}

fn csv_round_trip(pts: &mut Points, n: usize) -> Check {
    let meta = Meta::new(&parse_config("", Some(Command::Verify)).expect("empty verify config"));
    let rows: Vec<CurveRow> = (0..n)
        .map(|k| CurveRow {
            curve_id: format!("m6[O1+,O2-]#{k}"),
            mu1: pts.uniform(-1e3, 1e3),
            mu2: pts.uniform(-1.0, 1.0) * 1e-200,
        })
        .collect();
    let worst = to_csv(&meta, &rows)
        .and_then(|s| read_csv::<CurveRow>(&s))
        .map(|(m, back)| {
            if m != meta || back.len() != rows.len() {
                return f64::INFINITY;
            }
            rows.iter()
                .zip(&back)
                .map(|(a, b)| (a.mu1 - b.mu1).abs().max((a.mu2 - b.mu2).abs()))
                .fold(0.0, f64::max)
        })
        .unwrap_or(f64::INFINITY);
    check(
        "cli-io",
        "CSV round trip is lossless",
        worst < 1e-15,
        format!("max value loss {worst:.1e} over {n} rows"),
    )
}

fn svg_determinism() -> Check {
    let build = || {
        let mut fig = Figure::new("check", "mu1", "mu2", (-1.0, 1.0), (0.0, 2.0));
        fig.paths.push(Path {
            tag: "m3".into(),
            points: vec![(-1.0, 0.5), (0.0, 1.0), (1.0, 1.5)],
            closed: false,
        });
        fig.glyphs.push(Glyph {
            kind: GlyphKind::Saddle,
            at: (0.2, 0.3),
            label: "O1+".into(),
        });
        svg::render(&fig)
    };
    let (a, b) = (build(), build());
    check(
        "cli-io",
        "SVG output is deterministic",
        a == b && a.contains(r#"data-tag="m3""#),
        format!("{} bytes, identical: {}", a.len(), a == b),
    )
}

/// Runs every check and prints a pass/fail table.
pub fn run(meta: &Meta, samples: usize, seed: u64) -> anyhow::Result<Outcome> {
    let mut pts = Points {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut checks = Vec::new();
    let mut times = Vec::new();
    macro_rules! timed {
        ($e:expr) => {{
            let t = Instant::now();
            checks.push($e);
            times.push(t.elapsed().as_secs_f64());
        }};
    }
    timed!(field_is_hamiltonian(&mut pts, samples));
    timed!(newton_agreement(&mut pts, samples));
    timed!(curve_identities());
    timed!(axis_parity(&mut pts, samples));
    timed!(reconnection_bisection());
    timed!(vortex_pairs());
    timed!(averaging_identities());
    timed!(energy_conservation(&mut pts, samples));
    timed!(centers_enclosed());
    timed!(homoclinic_closure());
    timed!(area_preservation(&mut pts, samples));
    timed!(euler_order());
    timed!(t_versus_t2(&mut pts, samples));
    timed!(csv_round_trip(&mut pts, samples));
    timed!(svg_determinism());

    let width = checks
        .iter()
        .map(|c| c.module.len() + c.name.len() + 2)
        .max()
        .unwrap_or(0);
    let summary: Vec<String> = checks
        .iter()
        .zip(&times)
        .map(|(c, t)| {
            let name = format!("{}: {}", c.module, c.name);
            format!(
                "{} {name:width$}  {} ({t:.2} s)",
                if c.pass { "PASS" } else { "FAIL" },
                c.detail
            )
        })
        .collect();
    let rows: Vec<CheckRow> = checks
        .iter()
        .map(|c| CheckRow {
            check: format!("{}: {}", c.module, c.name),
            status: if c.pass { "pass" } else { "fail" }.to_string(),
            detail: c.detail.clone(),
        })
        .collect();
    let failed = checks.iter().any(|c| !c.pass);
    Ok(Outcome {
        artifacts: vec![Artifact::new("verify.csv", to_csv(meta, &rows)?)],
        summary,
        failed,
    })
}
