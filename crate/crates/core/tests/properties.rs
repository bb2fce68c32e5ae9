//! Randomized invariants spanning module boundaries: algebraic round trips,
//! state- and estimate-validity, and monotonicity of the interval bounds in
//! the scale parameter.

use proptest::prelude::*;
use sdptomo::bounds::{refine_estimates, solve_at_alpha, ConstraintLevel};
use sdptomo::cooling::optimal_time;
use sdptomo::eig::min_eigenvalue;
use sdptomo::rng::{substream, StreamKind};
use sdptomo::sdp::{Sense, SolverOptions};
use sdptomo::tomography::{
    collect_random_pauli_shots, estimate_local_bloch, reconstruct_rdm, required_shots,
};
use sdptomo::{
    bloch_decompose, bloch_reconstruct, build_xy_chain, ground_state, Matrix, PauliString, State,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdptomo::scalar::C;

fn random_hermitian(k: usize, seed: u64) -> Matrix {
    let dim = 1usize << k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    m.hermitize()
}

fn random_state(n: usize, seed: u64) -> State {
    let dim = 1usize << n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amps: Vec<C<f64>> =
        (0..dim).map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    State::new(n, amps).expect("normalized amplitudes")
}

proptest! {
    #[test]
    fn bloch_round_trip_is_identity(k in 1usize..=3, seed in 0u64..1000) {
        let m = random_hermitian(k, seed);
        let coeffs = bloch_decompose(&m).expect("decompose");
        let back = bloch_reconstruct(&coeffs, k);
        prop_assert!((&m - &back).frobenius_norm() <= 1e-10 * (1.0 + m.frobenius_norm()));
    }

    #[test]
    fn pauli_words_are_orthogonal(k in 1usize..=3, i in 0usize..64, j in 0usize..64) {
        let words = 4usize.pow(k as u32);
        let (i, j) = (i % words, j % words);
        let a = PauliString::from_index(i, k);
        let b = PauliString::from_index(j, k);
        let overlap = a.trace_with::<f64>(&b.matrix());
        let want = if i == j { (1usize << k) as f64 } else { 0.0 };
        prop_assert!((overlap.re - want).abs() <= 1e-12 && overlap.im.abs() <= 1e-12);
    }

    #[test]
    fn exact_rdms_are_density_matrices(n in 2usize..=4, seed in 0u64..500) {
        let psi = random_state(n, seed);
        for lo in 0..n - 1 {
            let rdm = psi.exact_rdm(&[lo, lo + 1]).expect("rdm");
            let m = rdm.matrix();
            prop_assert!((m.trace().re - 1.0).abs() <= 1e-10);
            prop_assert!((m - &m.adjoint()).frobenius_norm() <= 1e-10);
            prop_assert!(min_eigenvalue(m).expect("eig") >= -1e-10);
        }
    }

    #[test]
    fn restriction_commutes_with_partial_trace(seed in 0u64..500) {
        let psi = random_state(3, seed);
        let wide = psi.exact_rdm(&[0, 1, 2]).expect("rdm");
        let narrowed = wide.partial_trace(&[2]).expect("trace out");
        let direct = psi.exact_rdm(&[0, 1]).expect("rdm");
        prop_assert!(
            (narrowed.matrix() - direct.matrix()).frobenius_norm() <= 1e-10
        );
    }

    #[test]
    fn exact_marginals_reproduce_the_energy(seed in 0u64..300) {
        let h = build_xy_chain::<f64>(3, 1.0);
        let psi = random_state(3, seed);
        let rdms: Vec<Matrix> = h
            .terms()
            .iter()
            .map(|t| psi.exact_rdm(t.op.qubits()).expect("rdm").into_matrix())
            .collect();
        let via_rdms = h.energy_from_rdms(&rdms).expect("energy");
        prop_assert!((via_rdms - psi.energy(&h)).abs() <= 1e-9);
    }

    #[test]
    fn estimates_are_well_formed(shots in 10usize..400, seed in 0u64..500) {
        let psi = random_state(2, seed);
        let mut rng = substream(seed, StreamKind::Shots, 0, 0);
        let ds = collect_random_pauli_shots(&psi, shots, &mut rng).expect("sampling");
        let set = estimate_local_bloch(&ds, &[0, 1]).expect("estimation");
        prop_assert_eq!(set.entry(0).value, 1.0);
        for idx in 1..16 {
            let e = set.entry(idx);
            prop_assert!(e.value.abs() <= 1.0 && e.matches <= shots);
            prop_assert!(e.variance > 0.0 && e.variance <= 1.0);
        }
        let rho = reconstruct_rdm(&set);
        prop_assert!((rho.trace().re - 1.0).abs() <= 1e-12);
        prop_assert!((&rho - &rho.adjoint()).frobenius_norm() <= 1e-12);
    }

    #[test]
    fn shot_budget_is_monotone(n in 1usize..=8, eps in 0.01f64..1.0, factor in 1.1f64..4.0) {
        let coarse = required_shots(n, eps * factor).expect("shots");
        let fine = required_shots(n, eps).expect("shots");
        prop_assert!(fine >= coarse);
        if n < 8 {
            prop_assert!(required_shots(n + 1, eps).expect("shots") >= fine);
        }
    }

    #[test]
    fn substreams_are_keyed_and_reproducible(
        seed in 0u64..1000,
        rep in 0u64..50,
        step in 0u64..50,
    ) {
        let draw = |kind, r, s| -> u64 { substream(seed, kind, r, s).gen() };
        prop_assert_eq!(
            draw(StreamKind::Shots, rep, step),
            draw(StreamKind::Shots, rep, step)
        );
        prop_assert_ne!(
            draw(StreamKind::Shots, rep, step),
            draw(StreamKind::Bootstrap, rep, step)
        );
        prop_assert_ne!(
            draw(StreamKind::Shots, rep, step),
            draw(StreamKind::Shots, rep + 1, step)
        );
        prop_assert_ne!(
            draw(StreamKind::Shots, rep, step),
            draw(StreamKind::Shots, rep, step + 1)
        );
    }

    #[test]
    fn rotation_time_is_the_grid_argmin(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (t, decrease) = optimal_time(a, b);
        prop_assert!(t > -std::f64::consts::FRAC_PI_2 && t <= std::f64::consts::FRAC_PI_2);
        prop_assert!(decrease >= 0.0);
        // Energy shift of the closed-form model at angle s.
        let shift = |s: f64| a * s.sin() * s.sin() + 0.5 * b * (2.0 * s).sin();
        for g in 0..128 {
            let s = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * (g as f64 + 1.0) / 128.0;
            prop_assert!(shift(s) >= shift(t) - 1e-9);
        }
        prop_assert!((shift(t) + decrease).abs() <= 1e-9);
    }
}

proptest! {
    // Each case runs two interior-point-quality solves; keep the count low.
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn interval_minimum_is_monotone_in_the_scale(
        offset in 0.0f64..6.0,
        growth in 1.05f64..4.0,
    ) {
        let h = build_xy_chain::<f64>(2, 1.0);
        let gs = ground_state(&h).expect("diagonalization");
        let mut rng = substream(3, StreamKind::Shots, 0, 0);
        let ds = collect_random_pauli_shots(&gs.state, 200, &mut rng).expect("sampling");
        let sets = vec![estimate_local_bloch(&ds, &[0, 1]).expect("estimation")];
        let solver = SolverOptions::default();
        // Monotonicity only makes sense above the feasibility threshold.
        let star = refine_estimates(&h, &sets, ConstraintLevel::OcEc, Sense::Minimize, 0.1, &solver)
            .expect("threshold")
            .alpha;
        let solve_min = |a: f64| {
            solve_at_alpha(&h, &sets, ConstraintLevel::OcEc, a, Sense::Minimize, &solver)
                .expect("solve")
                .0
        };
        let alpha = star + offset;
        let tight = solve_min(alpha);
        let loose = solve_min(alpha * growth);
        prop_assert!(tight >= loose - 1e-6, "tight {tight} vs loose {loose}");
    }
}
