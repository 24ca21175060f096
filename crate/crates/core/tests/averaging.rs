use reszone_core::averaging::{
    classify_resonance, compute_averaged_coefficients, verify_hamiltonian_identities, AveragedCoefficients,
    PerturbationSpec, ResonanceClass, ResonanceSpec,
};
use reszone_core::fourier::project;

fn spec(p: u32) -> ResonanceSpec {
    ResonanceSpec {
        p,
        q: 1,
        i_pq: 0.8,
        j: 2,
        bj: 1.0,
        bj1: 0.0,
    }
}

/// `H1 = cos(x - phi)` with `x = sqrt(2I) cos(theta) + k I^{3/2} cos(3 theta)`;
/// `F = -dH1/dtheta`, `G = dH1/dI`.
#[allow(clippy::type_complexity)]
fn hamiltonian_perturbation() -> PerturbationSpec<impl Fn(f64, f64, f64) -> f64, impl Fn(f64, f64, f64) -> f64> {
    const K: f64 = 0.3;
    let x = |i: f64, t: f64| (2.0 * i).sqrt() * t.cos() + K * i.powf(1.5) * (3.0 * t).cos();
    PerturbationSpec {
        f: move |i: f64, t: f64, phi: f64| {
            let x_t = -(2.0 * i).sqrt() * t.sin() - 3.0 * K * i.powf(1.5) * (3.0 * t).sin();
            (x(i, t) - phi).sin() * x_t
        },
        g: move |i: f64, t: f64, phi: f64| {
            let x_i = t.cos() / (2.0 * i).sqrt() + 1.5 * K * i.sqrt() * (3.0 * t).cos();
            -(x(i, t) - phi).sin() * x_i
        },
    }
}

#[test]
fn hamiltonian_perturbation_satisfies_identities() {
    for p in [1, 2] {
        let c = compute_averaged_coefficients(&hamiltonian_perturbation(), &spec(p), 2048).unwrap();
        let r = verify_hamiltonian_identities(&c);
        assert!(r.identity_residual < 1e-8, "p={p}: {}", r.identity_residual);
        assert!(r.b0.abs() < 1e-8 && r.b1.abs() < 1e-8, "{r:?}");
        assert!(c.a0.iter().any(|x| x.abs() > 1e-3));
    }
}

#[test]
fn quadrature_converges_spectrally() {
    let coarse = compute_averaged_coefficients(&hamiltonian_perturbation(), &spec(1), 256).unwrap();
    let fine = compute_averaged_coefficients(&hamiltonian_perturbation(), &spec(1), 512).unwrap();
    for (k, x) in coarse.a0.iter().enumerate() {
        assert!((x - fine.a0[2 * k]).abs() < 1e-10);
    }
}

#[test]
fn single_harmonic_averages_exactly() {
    let pert = PerturbationSpec {
        f: |_: f64, t: f64, phi: f64| (t - phi).sin(),
        g: |_: f64, _: f64, _: f64| 0.0,
    };
    let c = compute_averaged_coefficients(&pert, &spec(1), 2048).unwrap();
    let worst = c
        .v_grid
        .iter()
        .zip(&c.a0)
        .map(|(v, a)| (a - v.sin()).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn mean_split_is_exact() {
    let c = compute_averaged_coefficients(&hamiltonian_perturbation(), &spec(2), 256).unwrap();
    for (a, t) in c.a0.iter().zip(&c.a0_tilde) {
        assert!((t + c.b0 - a).abs() <= 4.0 * f64::EPSILON * a.abs().max(1.0));
    }
}

#[test]
fn resonant_amplitude_decreases_with_order() {
    // H1 = I X(theta) cos(phi) with the Poisson kernel X = 1 + 2 sum r^k cos(k theta)
    const R: f64 = 0.3;
    let pert = PerturbationSpec {
        f: |i: f64, t: f64, phi: f64| {
            let d = 1.0 - 2.0 * R * t.cos() + R * R;
            let x_t = -2.0 * R * (1.0 - R * R) * t.sin() / (d * d);
            -i * x_t * phi.cos()
        },
        g: |_: f64, t: f64, phi: f64| (1.0 - R * R) / (1.0 - 2.0 * R * t.cos() + R * R) * phi.cos(),
    };
    let amps: Vec<f64> = (1..=5)
        .map(|p| {
            let c = compute_averaged_coefficients(&pert, &spec(p), 1024).unwrap();
            project(&c.a0_tilde, c.period(), 1).1.abs()
        })
        .collect();
    for (k, a) in amps.iter().enumerate() {
        let p = (k + 1) as f64;
        assert!((a - 0.8 * p * R.powf(p)).abs() < 1e-10, "p={p}: {a}");
    }
    assert!(amps.windows(2).all(|w| w[0] > w[1]), "{amps:?}");
}

#[test]
fn classification_is_stable_under_refinement() {
    for n in [128, 512, 2048] {
        let c = |f: fn(f64) -> f64| AveragedCoefficients::from_fns(1, n, f, |_| 0.0, |_| 0.0).unwrap();
        assert_eq!(
            classify_resonance(&c(|v| 0.5 * v.sin() + 2.0)).class,
            ResonanceClass::Passable
        );
        assert_eq!(classify_resonance(&c(f64::sin)).class, ResonanceClass::NonPassable);
        assert_eq!(
            classify_resonance(&c(|v| v.sin() + 0.5)).class,
            ResonanceClass::PartiallyPassable
        );
    }
}
