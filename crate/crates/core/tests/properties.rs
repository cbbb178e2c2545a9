use nalgebra::SymmetricEigen;
use proptest::prelude::*;

use lqswitch::control::{
    dare_residual, dare_solve, linear_feedback_cost, norm2, solve_stein, spectral_radius, weighted_operator_norm,
    LQWeights, LinearPlant, Matrix, SteinOrientation, Vector,
};
use lqswitch::switching::{switch_step, Mode, SwitchConfig, SwitchState};

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0..1.0f64, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v) * scale)
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=6).prop_flat_map(|n| (Just(n), 1usize..=n.min(3)))
}

/// Controllable plants with W = I, Q = I, R = I.
fn system() -> impl Strategy<Value = (LinearPlant, LQWeights)> {
    dims()
        .prop_flat_map(|(n, m)| (matrix(n, n, 1.5 / (n as f64).sqrt()), matrix(n, m, 1.0)))
        .prop_filter_map("uncontrollable", |(a, b)| {
            let (n, m) = (a.nrows(), b.ncols());
            let plant = LinearPlant::new(a, b, Matrix::identity(n, n)).ok()?;
            Some((plant, LQWeights::new(Matrix::identity(n, n), Matrix::identity(m, m)).unwrap()))
        })
}

fn stable(n: usize, radius: f64) -> impl Strategy<Value = Matrix> {
    matrix(n, n, 1.0).prop_filter_map("zero matrix", move |a| {
        let r = spectral_radius(&a).ok()?;
        (r > 1e-6).then(|| a * (radius / r))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn riccati_fixed_point((plant, weights) in system()) {
        let sol = dare_solve(&plant, &weights).unwrap();
        let res = dare_residual(plant.a(), plant.b(), weights.q(), weights.r(), &sol.p_star).unwrap();
        prop_assert!(res <= 1e-9 * (1.0 + norm2(&sol.p_star)));
        prop_assert!(spectral_radius(&plant.closed_loop(&sol.k_star).unwrap()).unwrap() < 1.0);
        let asym = (&sol.p_star - sol.p_star.transpose()).amax();
        prop_assert!(asym <= 1e-12 * (1.0 + sol.p_star.amax()));
    }

    #[test]
    fn optimal_gain_beats_perturbations(
        (plant, weights) in system(),
        dir in matrix(3, 6, 1.0),
        size in 1e-4..0.1f64,
    ) {
        let sol = dare_solve(&plant, &weights).unwrap();
        let (m, n) = (plant.m(), plant.n());
        let delta = dir.view((0, 0), (m, n)).into_owned() * size;
        let best = linear_feedback_cost(&plant, &weights, &sol.k_star).unwrap().to_f64();
        prop_assert!((best - sol.j_star).abs() <= 1e-8 * (1.0 + best));
        let other = linear_feedback_cost(&plant, &weights, &(&sol.k_star + delta)).unwrap().to_f64();
        prop_assert!(best <= other * (1.0 + 1e-10), "{best} > {other}");
    }

    #[test]
    fn stein_solution_is_positive(
        a in (1usize..=5).prop_flat_map(|n| stable(n, 0.95)),
        c_root in matrix(5, 5, 1.0),
        pd in any::<bool>(),
    ) {
        let n = a.nrows();
        let f = c_root.view((0, 0), (n, n)).into_owned();
        let mut c = &f * f.transpose();
        if pd {
            c += Matrix::identity(n, n) * 0.1;
        }
        for orientation in [SteinOrientation::Forward, SteinOrientation::Adjoint] {
            let x = solve_stein(&a, &c, orientation).unwrap();
            prop_assert!((&x - x.transpose()).amax() <= 1e-12 * (1.0 + x.amax()));
            let eig = SymmetricEigen::new(x.clone()).eigenvalues;
            prop_assert!(eig.min() >= -1e-10 * norm2(&x));
            if pd {
                prop_assert!(eig.min() > 0.0);
            }
        }
    }

    #[test]
    fn weighted_norm_is_submultiplicative(
        a in matrix(4, 4, 2.0),
        b in matrix(4, 4, 2.0),
        root in matrix(4, 4, 1.0),
    ) {
        let p = &root * root.transpose() + Matrix::identity(4, 4) * 0.05;
        let ab = weighted_operator_norm(&(&a * &b), &p).unwrap();
        let bound = weighted_operator_norm(&a, &p).unwrap() * weighted_operator_norm(&b, &p).unwrap();
        prop_assert!(ab <= bound * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn switch_counter_stays_bounded(
        dwell in 1usize..12,
        threshold in 0.1..5.0f64,
        norms in prop::collection::vec(0.0..6.0f64, 1..200),
    ) {
        let cfg = SwitchConfig::new(Matrix::zeros(1, 1), Matrix::identity(1, 1), threshold, dwell).unwrap();
        let mut state = SwitchState::default();
        let mut remaining = 0usize;
        for &r in &norms {
            let x = Vector::from_element(1, r);
            let d = switch_step(&x, state, &cfg).unwrap();
            prop_assert!(d.next_state.xi < dwell);
            if remaining > 0 {
                prop_assert_eq!(d.mode, Mode::Fallback);
                prop_assert!(!d.triggered);
                remaining -= 1;
            } else if r >= threshold {
                prop_assert!(d.triggered);
                remaining = dwell - 1;
            } else {
                prop_assert_eq!(d.mode, Mode::Primary);
            }
            prop_assert_eq!(d.next_state.xi, remaining);
            prop_assert_eq!(switch_step(&x, state, &cfg).unwrap(), d.clone());
            state = d.next_state;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The exact cost agrees with a covariance recursion Σ_{k+1} = A_K Σ_k A_Kᵀ + W
    /// from Σ₀ = 0 averaged over T = 10⁵ steps, once the start-up transient
    /// Σ_k tr(Q_K(Σ_∞ − Σ_k)) = tr(Q_K X), X = A_K X A_Kᵀ + Σ_∞, is accounted for.
    #[test]
    fn cost_matches_covariance_recursion((plant, weights) in system(), shrink in 0.2..0.9f64) {
        let k = dare_solve(&plant, &weights).unwrap().k_star * shrink;
        let acl = plant.closed_loop(&k).unwrap();
        prop_assume!(spectral_radius(&acl).unwrap() < 0.97);
        let j = linear_feedback_cost(&plant, &weights, &k).unwrap().to_f64();
        let qk = weights.closed_loop_weight(&k);
        const T: usize = 100_000;
        let n = plant.n();
        let mut sigma = Matrix::zeros(n, n);
        let mut total = 0.0;
        for _ in 0..T {
            total += (&qk * &sigma).trace();
            sigma = &acl * &sigma * acl.transpose() + plant.w();
        }
        let average = total / T as f64;
        let stationary = solve_stein(&acl, plant.w(), SteinOrientation::Forward).unwrap();
        let transient = solve_stein(&acl, &stationary, SteinOrientation::Forward).unwrap();
        let corrected = average + (&qk * transient).trace() / T as f64;
        prop_assert!((corrected - j).abs() <= 1e-6 * j, "{corrected} vs {j}");
        prop_assert!(average <= j);
    }
}
