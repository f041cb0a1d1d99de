mod common;

use std::f64::consts::PI;

use coherent_flux_core::angular::{HalfInt, SpinQuantumNumber};
use coherent_flux_core::models::*;
use coherent_flux_core::Error;
use common::*;
use proptest::prelude::*;

#[test]
fn parameter_validation() {
    assert!(TwoLevelParams::new(0.0, 1.0, 0.5).is_err());
    assert!(TwoLevelParams::new(1.0, 1.0, -0.1).is_err());
    assert!(TwoLevelParams::new(1.0, f64::NAN, 0.5).is_err());
    let j2 = SpinQuantumNumber::from_twice(4);
    assert!(HighSpinParams::new(j2, 1.0, 0.3, 0.5, HalfInt::from_twice(1)).is_err());
    assert!(HighSpinParams::new(j2, -1.0, 0.3, 0.5, HalfInt::from_twice(2)).is_err());
    assert!(HighSpinParams::new(j2, 1.0, 0.3, 0.5, HalfInt::from_twice(-4)).is_ok());
}

#[test]
fn resonant_static_field_has_no_frame() {
    // omega = gamma B0 with theta = 0: the effective field vanishes.
    let p = HighSpinParams::from_lambda0(SpinQuantumNumber::from_twice(2), 1.0, 0.0, 1.0, HalfInt::from_twice(2)).unwrap();
    assert!(matches!(rotating_frame_params(&p), Err(Error::DegenerateFrame)));
    assert!(highspin_exact_state(&p, 1.0).is_err());
    let two = TwoLevelParams::new(1.0, 1.0, 0.0).unwrap();
    assert_eq!(two.lambda(), 0.0);
    assert!(two.period().is_none());
}

#[test]
fn lambda_is_stable_near_resonance() {
    for &eps in &[1e-3, 1e-6, 1e-9] {
        let p = TwoLevelParams::new(1.0, 1.0 - eps, eps).unwrap();
        // lambda^2 = (w1 - w)^2 + 4 w w1 sin^2(a/2)
        let d = p.omega1 - p.omega;
        let expected = (d * d + 4.0 * p.omega * p.omega1 * (0.5 * eps).sin().powi(2)).sqrt();
        assert!((p.lambda() - expected).abs() < 1e-14 * expected);
        let (p0, p1) = two_level_populations(&p, 3.0);
        assert!((p0 + p1 - 1.0).abs() < 1e-15);
        assert!((two_level_exact_state(&p, 3.0).amplitudes().iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn energies_are_descending_multiples() {
    let p = HighSpinParams::new(SpinQuantumNumber::from_twice(5), 0.7, 0.4, 0.2, HalfInt::from_twice(1)).unwrap();
    let e = p.energies();
    assert_eq!(e.len(), 6);
    for (k, &x) in e.iter().enumerate() {
        assert!((x - 0.7 * (2.5 - k as f64)).abs() < 1e-15);
    }
}

#[test]
fn two_level_drive_matches_precessing_field() {
    let p = TwoLevelParams::new(1.3, 0.4, 1.1).unwrap();
    let drive = two_level_drive(&p).unwrap();
    for &t in &[0.0, 0.7, 5.2] {
        let h = raw(&drive.hamiltonian_at(t));
        let oracle = precessing_h(1, p.omega1, p.alpha, p.omega, t);
        assert!(max_abs(&(h - oracle)) < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn two_level_state_matches_rotating_frame(w1 in 0.2f64..3.0, w in -2.0f64..2.0, a in 0.05f64..3.1, t in 0.0f64..20.0) {
        let p = TwoLevelParams::new(w1, w, a).unwrap();
        let psi0 = precessing_eigenstate(1, w1, a, w, 0);
        let oracle = precessing_state(1, w1, a, w, &psi0, t);
        let psi = V::from_vec(two_level_exact_state(&p, t).amplitudes().to_vec());
        // equal up to a global phase
        let overlap = (psi.adjoint() * &oracle)[(0, 0)].norm();
        prop_assert!((overlap - 1.0).abs() < 1e-11);
        // coherence flux and work
        let rho = projector(&oracle);
        let h = precessing_h(1, w1, a, w, t);
        let hdot = precessing_hdot(1, w1, a, w, t);
        let coh = coherence_sum(&h, &hdot, &rho);
        prop_assert!((two_level_coherence_flux(&p, t) - coh.re).abs() < 1e-10);
        // in a static spectrum the whole power is the coherence term
        let power = (rho * hdot).trace().re;
        prop_assert!((power - coh.re).abs() < 1e-10);
        prop_assert!((two_level_coherence_flux(&p, t) - two_level_flux(w1, w, a, t)).abs() < 1e-10);
        // cumulative work is the integral of the power
        let n = 4000;
        let simpson: f64 = (0..=n)
            .map(|k| {
                let wt = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                wt * two_level_flux(w1, w, a, t * k as f64 / n as f64)
            })
            .sum::<f64>()
            * t / (3.0 * n as f64);
        prop_assert!((two_level_work(&p, t) - simpson).abs() < 1e-9);
    }

    #[test]
    fn high_spin_state_matches_rotating_frame(twice in 1u32..=6, level in 0usize..7, th in 0.05f64..3.0, l0 in -1.5f64..1.5, t in 0.0f64..15.0) {
        let jj = SpinQuantumNumber::from_twice(twice);
        let idx = level % jj.dim();
        let g = 0.8;
        let p = HighSpinParams::from_lambda0(jj, g, th, l0, jj.m_at(idx)).unwrap();
        prop_assume!(rotating_frame_params(&p).is_ok());
        let psi0 = precessing_eigenstate(twice, g, th, p.omega, idx);
        let oracle = precessing_state(twice, g, th, p.omega, &psi0, t);
        let psi = V::from_vec(highspin_exact_state(&p, t).unwrap().amplitudes().to_vec());
        prop_assert!(((psi.adjoint() * &oracle)[(0, 0)].norm() - 1.0).abs() < 1e-10);

        let h = precessing_h(twice, g, th, p.omega, t);
        let hdot = precessing_hdot(twice, g, th, p.omega, t);
        let rho = projector(&oracle);
        prop_assert!((highspin_coherence_flux(&p, t).unwrap() - coherence_sum(&h, &hdot, &rho).re).abs() < 1e-9);

        // density elements in the instantaneous basis
        let basis = highspin_eigenbasis(&p, t).unwrap();
        let elems = highspin_density_elements(&p, t).unwrap();
        for (a, va) in basis.iter().enumerate() {
            for (b, vb) in basis.iter().enumerate() {
                let va = V::from_vec(va.amplitudes().to_vec());
                let vb = V::from_vec(vb.amplitudes().to_vec());
                let expected = (va.adjoint() * &rho * vb)[(0, 0)];
                prop_assert!((elems.get(a, b) - expected).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn two_level_is_the_spin_half_case(w1 in 0.2f64..3.0, w in -2.0f64..2.0, a in 0.05f64..PI, t in 0.0f64..10.0) {
        let p = TwoLevelParams::new(w1, w, a).unwrap();
        let hs = p.as_high_spin();
        prop_assume!(rotating_frame_params(&hs).is_ok());
        prop_assert!((highspin_coherence_flux(&hs, t).unwrap() - two_level_coherence_flux(&p, t)).abs() < 1e-11);
        let (p0, _) = two_level_populations(&p, t);
        let elems = highspin_density_elements(&hs, t).unwrap();
        prop_assert!((elems.get(0, 0).re - p0).abs() < 1e-11);
        prop_assert!((two_level_adiabatic_parameter(&p) - highspin_adiabatic_parameter(&hs)).abs() < 1e-12);
    }
}
