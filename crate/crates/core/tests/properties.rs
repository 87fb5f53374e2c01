mod common;

use nalgebra::{DMatrix, DVector};
use orbitfix::ambiguity::{brute_force_oracle, decorrelate, ils_search, integer_determinant, FloatAmbiguities};
use orbitfix::measurement::{epoch_times, plan_window, ClockModel, ClockSet, WindowGenerator};
use orbitfix::orbit::Vec3;
use orbitfix::phase::{
    doppler_phase_approx, doppler_state, max_tolerable_frequency_error, phase_approx_error, true_carrier_phase,
    LinearTrajectory, SPEED_OF_LIGHT,
};
use orbitfix::positioning::{
    condition_number, delay_only_solve, fix_and_solve, linearize_epoch, solve_float, PhaseGram, RwlsState, SolveMode,
};
use orbitfix::scenario::{DdCovariance, Scenario, System};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spd_case(max_dim: usize) -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (1..=max_dim, any::<u64>(), -50.0..50.0f64).prop_map(|(n, seed, offset)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = common::random_spd(&mut rng, n, 0.1);
        let a = DVector::from_fn(n, |_, _| offset + rand::Rng::random_range(&mut rng, -3.0..3.0));
        (q, a)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ils_matches_brute_force((q, a) in spd_case(3)) {
        let radius = common::safe_box_radius(&q);
        let fa = FloatAmbiguities::new(a, q).unwrap();
        let found = ils_search(&fa, 2).unwrap();
        let oracle = brute_force_oracle(&fa, radius).unwrap();
        let tol = 1e-9 * (1.0 + oracle.quadratic_residual);
        prop_assert!((found[0].quadratic_residual - oracle.quadratic_residual).abs() <= tol);
        prop_assert!(found[1].quadratic_residual >= found[0].quadratic_residual);
        if (found[1].quadratic_residual - found[0].quadratic_residual).abs() > tol {
            prop_assert_eq!(&found[0].values, &oracle.values);
        }
    }

    #[test]
    fn decorrelation_is_unimodular(n in 1usize..=6, seed in any::<u64>(), floor in 1e-4..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = common::random_spd(&mut rng, n, floor);
        let dec = decorrelate(&q).unwrap();
        prop_assert_eq!(integer_determinant(&dec.z_transform).abs(), 1);
        let prod = &dec.z_transform * &dec.z_inverse;
        prop_assert_eq!(prod, DMatrix::<i64>::identity(n, n));
        let zf = dec.z_transform.map(|v| v as f64);
        let qz = zf.transpose() * &q * &zf;
        prop_assert!(common::max_relative_diff(&qz, &dec.transformed_cov) < 1e-9);
    }

    #[test]
    fn condition_matches_gram_oracle(rows in 6usize..60, cols in 1usize..7, seed in any::<u64>()) {
        prop_assume!(rows >= cols);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(rows, cols, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let k = condition_number(&a).unwrap();
        let oracle = common::gram_eigen_condition(&a);
        prop_assert!((k - oracle).abs() / oracle < 1e-9, "{} vs {}", k, oracle);
    }

    #[test]
    fn identity_condition_is_one(n in 1usize..12) {
        prop_assert_eq!(condition_number(&DMatrix::identity(n, n)).unwrap(), 1.0);
    }

    #[test]
    fn phase_increments_track_range(r0 in 5e5..3e7f64, steps in prop::collection::vec(-1e3..1e3f64, 1..20), f_c in 1e9..3e9f64) {
        let ue = Vec3::zeros();
        let mut times = vec![0.0];
        let mut ranges = vec![r0];
        for (k, d) in steps.iter().enumerate() {
            times.push((k + 1) as f64);
            ranges.push(ranges[k] + d);
        }
        // Piecewise-constant-velocity radial track reproducing the ranges at the grid.
        for k in 1..times.len() {
            let traj = LinearTrajectory {
                position: Vec3::new(ranges[k - 1], 0.0, 0.0),
                velocity: Vec3::new(ranges[k] - ranges[k - 1], 0.0, 0.0),
                t0: times[k - 1],
            };
            let tr = true_carrier_phase(&ue, &traj, f_c, &[times[k - 1], times[k]]).unwrap();
            let expected = (ranges[k] - ranges[k - 1]) * f_c / SPEED_OF_LIGHT;
            prop_assert!((tr.phase[1] - expected).abs() < 1e-9 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn linear_range_has_exact_doppler_phase(v in -7e3..7e3f64, f_c in 1e9..3e9f64) {
        let ue = Vec3::zeros();
        let traj = LinearTrajectory { position: Vec3::new(7e5, 0.0, 0.0), velocity: Vec3::new(v, 0.0, 0.0), t0: 0.0 };
        let times: Vec<f64> = (0..=30).map(|k| k as f64 * 1e-3).collect();
        let updates: Vec<_> = (0..3).map(|k| doppler_state(&ue, &traj, k as f64 * 0.01, f_c).unwrap()).collect();
        let truth = true_carrier_phase(&ue, &traj, f_c, &times).unwrap();
        let approx = doppler_phase_approx(&updates, &times, f_c).unwrap();
        let err = phase_approx_error(&truth, &approx).unwrap();
        prop_assert!(err.iter().all(|e| e.abs() < 1e-6));
    }

    #[test]
    fn doppler_matches_range_derivative(h in 5e5..2.5e7f64, vx in -8e3..8e3f64, vy in -8e3..8e3f64, t in 0.0..100.0f64) {
        let ue = Vec3::zeros();
        let traj = LinearTrajectory { position: Vec3::new(h, 0.0, 1e5), velocity: Vec3::new(vx, vy, 0.0), t0: 0.0 };
        let f_c = 2e9;
        let d = doppler_state(&ue, &traj, t, f_c).unwrap();
        let r = |s: f64| (traj.position + traj.velocity * s).norm();
        let step = 1e-3;
        let fd = (r(t + step) - r(t - step)) / (2.0 * step);
        prop_assert!((-d.doppler * SPEED_OF_LIGHT / f_c - fd).abs() < 1e-3);
    }
}

#[test]
fn frequency_budget_at_forty_ms() {
    assert_eq!(max_tolerable_frequency_error(0.040).unwrap(), 25.0);
}

fn window_plan(s: &Scenario, t0: f64, duration: f64) -> Vec<orbitfix::measurement::EpochGeometry> {
    let times = epoch_times(t0, duration, s.epoch_interval).unwrap();
    plan_window(s, &times).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn double_difference_cancels_clocks(seed in any::<u64>(), t0 in 0.0..3000.0f64, gnss in any::<bool>()) {
        let system = if gnss { System::Gnss } else { System::Leo };
        let s = Scenario::default_for(system).unwrap().noiseless();
        let plan = window_plan(&s, t0, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut clock = || ClockModel {
            bias: rand::Rng::random_range(&mut rng, -1e-3..1e-3),
            drift: rand::Rng::random_range(&mut rng, -1e-8..1e-8),
        };
        let clocks = ClockSet {
            ue: clock(),
            reference: clock(),
            satellites: (0..s.elements.len()).map(|_| clock()).collect(),
        };
        let biased = WindowGenerator::new(&s, seed).with_clocks(clocks).window(&plan).unwrap();
        let clean = WindowGenerator::new(&s, seed).window(&plan).unwrap();
        for (b, c) in biased.iter().zip(&clean) {
            prop_assert_eq!(b.rows.len(), c.rows.len());
            for (rb, rc) in b.rows.iter().zip(&c.rows) {
                prop_assert!((rb.dd_pseudorange - rc.dd_pseudorange).abs() < 1e-6);
                prop_assert!((rb.dd_phase - rc.dd_phase).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn dd_ambiguities_are_constant_for_a_fixed_set(seed in any::<u64>(), t0 in 0.0..3000.0f64) {
        let s = Scenario::default_for(System::Leo).unwrap();
        let plan = window_plan(&s, t0, 0.5);
        let w = WindowGenerator::new(&s, seed).window(&plan).unwrap();
        let mut seen = std::collections::BTreeMap::new();
        for dd in &w {
            for row in &dd.rows {
                let v = *seen.entry(row.ambiguity_id(dd.ref_sat_id)).or_insert(row.true_dd_ambiguity);
                prop_assert_eq!(v, row.true_dd_ambiguity);
            }
        }
    }

    #[test]
    fn rwls_sequential_equals_batch(seed in any::<u64>(), t0 in 0.0..3000.0f64, gnss in any::<bool>(), diag in any::<bool>()) {
        let system = if gnss { System::Gnss } else { System::Leo };
        let s = Scenario::default_for(system).unwrap();
        let plan = window_plan(&s, t0, 0.2);
        let dds = WindowGenerator::new(&s, seed).window(&plan).unwrap();
        let cov = if diag { DdCovariance::Diagonal } else { DdCovariance::Exact };
        let approx = s.ue + Vec3::new(3.0, -2.0, 1.0);
        let mut epochs: Vec<_> = dds.iter()
            .map(|d| linearize_epoch(d, &approx, &s.reference, s.wavelength(), cov).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        epochs.shuffle(&mut rng);
        for mode in [SolveMode::DelayOnly, SolveMode::Joint, SolveMode::PhaseOnly] {
            let mut state = RwlsState::new(approx, mode);
            for e in &epochs {
                state.update(e);
            }
            let (n, b) = common::batch_normal_equations(&epochs, mode, &state.ambiguity_order);
            prop_assert!(common::max_relative_diff(&state.information_matrix, &n) < 1e-9);
            let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
            let sm = DMatrix::from_column_slice(b.len(), 1, state.information_vector.as_slice());
            prop_assert!(common::max_relative_diff(&sm, &bm) < 1e-9);
        }
    }

    #[test]
    fn schur_information_never_decreases(t0 in 0.0..3000.0f64, gnss in any::<bool>()) {
        let system = if gnss { System::Gnss } else { System::Leo };
        let s = Scenario::default_for(system).unwrap().noiseless();
        let plan = window_plan(&s, t0, 2.0);
        let dds = WindowGenerator::new(&s, 1).window(&plan).unwrap();
        let mut gram = PhaseGram::new();
        let mut prev: Option<DMatrix<f64>> = None;
        for (k, dd) in dds.iter().enumerate() {
            let e = linearize_epoch(dd, &s.ue, &s.reference, s.wavelength(), DdCovariance::Diagonal).unwrap();
            gram.add(&e);
            if k < 10 || k % 10 != 0 {
                continue;
            }
            let s_now = gram.position_schur().unwrap();
            if let Some(p) = &prev {
                let diff = &s_now - p;
                let lmin = diff.symmetric_eigen().eigenvalues.min();
                prop_assert!(lmin >= -1e-9 * s_now.abs().max(), "lost information: {}", lmin);
            }
            prev = Some(s_now);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn noiseless_solvers_recover_truth(t0 in 0.0..3000.0f64) {
        for (system, duration) in [(System::Leo, 1.0), (System::Gnss, 120.0)] {
            let s = Scenario::default_for(system).unwrap().noiseless();
            let plan = window_plan(&s, t0, duration);
            let dds = WindowGenerator::new(&s, 7).window(&plan).unwrap();
            let delay = delay_only_solve(&dds, &s).unwrap();
            prop_assert!((delay.position_ecef - s.ue).norm() < 1e-6, "{:?} delay", system);
            let float = solve_float(&dds, &s).unwrap();
            prop_assert!((float.position_ecef - s.ue).norm() < 1e-6, "{:?} float", system);
            prop_assert!(float.float_errors().iter().all(|e| e.abs() < 1e-6));
            let fixed = fix_and_solve(&dds, &s).unwrap();
            prop_assert!((fixed.position_ecef - s.ue).norm() < 1e-6, "{:?} fixed", system);
            prop_assert!(fixed.fixed_errors().unwrap().iter().all(|e| *e == 0));
        }
    }
}

#[test]
fn code_noise_matches_its_sigma() {
    let s = Scenario::default_for(System::Gnss).unwrap();
    let plan = window_plan(&s, 0.0, 25.0);
    let mut gen = WindowGenerator::new(&s, 11);
    let mut z = Vec::new();
    for g in &plan {
        let (ue, _) = gen.raw_epoch(g);
        for e in &ue.entries {
            let range = (e.sat_state.position_ecef - s.ue).norm();
            let clock = gen.clocks().ue.offset(g.time) - gen.clocks().satellites[e.sat_id as usize].offset(g.time);
            z.push((e.pseudorange - range - SPEED_OF_LIGHT * clock) / e.error_model.sigma_delay);
        }
    }
    assert!(z.len() >= 10_000);
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((std - 1.0).abs() < 0.05, "normalized std {std} over {n} draws");
}
