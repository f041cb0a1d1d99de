mod common;

use coherent_flux_core::linalg::{
    commutator, expectation, pure_state_density, trace_product, ComplexMatrix, DensityMatrix, QuantumState,
};
use coherent_flux_core::spectra::{
    adiabatic_parameter, diagonalize_instantaneous, nonadiabatic_coupling, transition_elements,
};
use coherent_flux_core::{Complex64, Error};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reconstruct(energies: &[f64], vectors: &[QuantumState]) -> M {
    let dim = energies.len();
    let mut out = M::zeros(dim, dim);
    for (e, v) in energies.iter().zip(vectors) {
        let col = V::from_vec(v.amplitudes().to_vec());
        out += &col * col.adjoint() * c(*e);
    }
    out
}

#[test]
fn rejects_bad_inputs() {
    let non_hermitian = ComplexMatrix::from_rows(&[vec![c(0.0), c(1.0)], vec![c(0.0), c(0.0)]]).unwrap();
    assert!(matches!(
        diagonalize_instantaneous(&non_hermitian, 0.0, None),
        Err(Error::NotHermitian { .. })
    ));
    assert!(ComplexMatrix::from_rows(&[vec![c(1.0)], vec![c(0.0), c(1.0)]]).is_err());
    assert!(QuantumState::new(vec![c(1.0), c(1.0)]).is_err());
    assert!(DensityMatrix::new(wrap(M::from_diagonal(&V::from_vec(vec![c(1.5), c(-0.5)])))).is_err());
    assert!(DensityMatrix::new(wrap(M::from_diagonal(&V::from_vec(vec![c(0.5), c(0.4)])))).is_err());
}

#[test]
fn degenerate_levels_have_no_coupling() {
    let h = wrap(M::from_diagonal(&V::from_vec(vec![c(1.0), c(1.0), c(-2.0)])));
    let frame = diagonalize_instantaneous(&h, 0.0, None).unwrap();
    let hdot = wrap(M::from_fn(3, 3, |r, k| if r != k { c(0.1) } else { c(0.0) }));
    let m = transition_elements(&frame, &hdot).unwrap();
    assert!(matches!(nonadiabatic_coupling(&frame, &m, None), Err(Error::Degenerate { .. })));
    assert!(matches!(adiabatic_parameter(&frame, &m, None), Err(Error::Degenerate { .. })));
}

#[test]
fn continuity_follows_a_slow_sweep() {
    // Avoided crossing: each tracked level swaps character across the gap.
    let h_at = |t: f64| wrap(M::from_fn(2, 2, |r, k| match (r, k) {
        (0, 0) => c(t),
        (1, 1) => c(-t),
        _ => c(0.05),
    }));
    let mut prev = diagonalize_instantaneous(&h_at(-1.0), -1.0, None).unwrap();
    let tracked = (0..2)
        .find(|&i| prev.eigenvectors()[i].amplitudes()[0].norm() > 0.99)
        .unwrap();
    for k in 1..=400 {
        let t = -1.0 + k as f64 * 0.005;
        let frame = diagonalize_instantaneous(&h_at(t), t, Some(&prev)).unwrap();
        for (a, b) in frame.eigenvectors().iter().zip(prev.eigenvectors()) {
            let ov = a.inner(b);
            assert!(ov.re > 0.5, "t = {t}: {ov}");
            assert!(ov.im.abs() < 1e-9);
        }
        prev = frame;
    }
    // The level that started on |0> ends on |1>.
    assert!(prev.eigenvectors()[tracked].amplitudes()[1].norm() > 0.99);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frames_reconstruct_and_order(seed in any::<u64>(), dim in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(dim, 2.0, &mut rng);
        let frame = diagonalize_instantaneous(&wrap(h.clone()), 0.3, None).unwrap();
        let e = frame.energies();
        prop_assert!(e.windows(2).all(|w| w[0] >= w[1]) || e.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(max_abs(&(reconstruct(e, frame.eigenvectors()) - &h)) < 1e-11);
        let (oracle, _) = eigh(&h);
        let mut sorted = e.to_vec();
        sorted.sort_by(f64::total_cmp);
        for (a, b) in sorted.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-11);
        }
        let u = raw(frame.basis());
        prop_assert!(max_abs(&(u.adjoint() * &u - M::identity(dim, dim))) < 1e-12);
    }

    #[test]
    fn transition_elements_are_gauge_covariant(seed in any::<u64>(), dim in 2usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(dim, 1.0, &mut rng);
        let hdot = random_hermitian(dim, 1.0, &mut rng);
        let frame = diagonalize_instantaneous(&wrap(h), 0.0, None).unwrap();
        let m = transition_elements(&frame, &wrap(hdot.clone())).unwrap();
        prop_assert!(m.matrix().is_hermitian(1e-12));
        let phases: Vec<Complex64> = (0..dim).map(|k| Complex64::from_polar(1.0, 0.7 * k as f64 + 0.1)).collect();
        let m2 = transition_elements(&frame.rephased(&phases).unwrap(), &wrap(hdot)).unwrap();
        for a in 0..dim {
            for b in 0..dim {
                prop_assert!((m.get(a, b).norm() - m2.get(a, b).norm()).abs() < 1e-12);
                let expected = phases[a].conj() * m.get(a, b) * phases[b];
                prop_assert!((m2.get(a, b) - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn trace_algebra(seed in any::<u64>(), dim in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = wrap(random_hermitian(dim, 1.0, &mut rng));
        let b = wrap(random_hermitian(dim, 1.0, &mut rng));
        let rho = DensityMatrix::new(wrap(random_density(dim, &mut rng))).unwrap();
        let comm = commutator(&a, &b).unwrap();
        prop_assert!(comm.trace().norm() < 1e-12);
        prop_assert!((trace_product(&a, &b).unwrap() - trace_product(&b, &a).unwrap()).norm() < 1e-12);
        // Tr(rho [A, rho]) = 0
        let inner = commutator(&a, rho.matrix()).unwrap();
        prop_assert!(trace_product(rho.matrix(), &inner).unwrap().norm() < 1e-12);
        let e = expectation(&rho, &a).unwrap();
        prop_assert!((e - (raw(rho.matrix()) * raw(&a)).trace().re).abs() < 1e-12);
        prop_assert!(rho.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn pure_states(re in proptest::collection::vec(-1.0f64..1.0, 3), im in proptest::collection::vec(-1.0f64..1.0, 3)) {
        let amps: Vec<Complex64> = re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        prop_assume!(amps.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-6);
        let psi = QuantumState::normalized(amps).unwrap();
        let rho = pure_state_density(&psi).unwrap();
        prop_assert!((coherent_flux_core::linalg::purity(&rho) - 1.0).abs() < 1e-12);
        prop_assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
    }
}
