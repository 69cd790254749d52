use std::f64::consts::PI;

use proptest::prelude::*;
use qhd_core::experiments::{make_initial, InitialDataSpec};
use qhd_core::qdd::{consistent_momentum, qdd_step, run_qdd};
use qhd_core::spectral::{divergence, gradient, integrate, laplacian, solve_poisson};
use qhd_core::{PressureLaw, QDDParams, QddStatus, RealField, TorusGrid};

const DELTA: f64 = 0.25;

fn law() -> PressureLaw {
    PressureLaw::new(1, 1.0)
}

fn random_density(grid: &TorusGrid, seed: u64, amplitude: f64) -> RealField {
    make_initial(&InitialDataSpec::random(1.0, DELTA, amplitude, 3, seed), grid, &law()).unwrap().state.rho
}

fn l2_diff(a: &RealField, b: &RealField) -> f64 {
    a.zip_map(b, |x, y| (x - y).powi(2)).mean().sqrt()
}

#[test]
fn linear_mode_decays_at_the_dispersion_rate() {
    let grid = TorusGrid::square(16).unwrap();
    let eps = 1e-4;
    let rho0 = RealField::from_fn(&grid, |x, _| 1.0 + eps * (2.0 * PI * x).cos());
    let t_end = 1e-3;
    let mut p = QDDParams::new(law(), DELTA, 1e-7, t_end);
    p.monitor_every = 1000;
    let traj = run_qdd(&rho0, &p).unwrap();
    let d0 = traj.records.first().unwrap().deviation;
    let d1 = traj.records.last().unwrap().deviation;
    let rate = (d1 / d0).ln() / t_end;
    let p4 = PI.powi(4);
    let lambda = -(4.0 * p4 + 4.0 * PI * PI + 1.0);
    assert!((rate - lambda).abs() <= 0.01 * lambda.abs(), "rate {rate} vs {lambda}");
}

#[test]
fn terminal_state_converges_at_first_order() {
    let grid = TorusGrid::square(32).unwrap();
    let rho0 = random_density(&grid, 4, 0.3);
    let end = |dt: f64| run_qdd(&rho0, &QDDParams::new(law(), DELTA, dt, 0.01)).unwrap().final_state;
    let (a, b, c) = (end(1e-4), end(5e-5), end(2.5e-5));
    let order = (l2_diff(&a, &b) / l2_diff(&b, &c)).log2();
    assert!(order >= 0.9, "observed order {order}");
}

#[test]
fn momentum_of_a_small_mode_is_the_linear_flux() {
    let grid = TorusGrid::square(32).unwrap();
    let eta = RealField::from_fn(&grid, |x, y| 1e-4 * (2.0 * PI * (x + 2.0 * y)).cos());
    let rho = eta.map(|e| 1.0 + e);
    let j = consistent_momentum(&rho, &law(), DELTA).unwrap();
    let pp = law().p_prime(1.0);
    let [l1, l2] = gradient(&laplacian(&eta));
    let [e1, e2] = gradient(&eta);
    let [v1, v2] = gradient(&solve_poisson(&eta).unwrap());
    let lin = [
        RealField::new(
            &grid,
            (0..grid.len()).map(|i| 0.25 * l1.values()[i] - pp * e1.values()[i] - v1.values()[i]).collect(),
        ),
        RealField::new(
            &grid,
            (0..grid.len()).map(|i| 0.25 * l2.values()[i] - pp * e2.values()[i] - v2.values()[i]).collect(),
        ),
    ];
    for c in 0..2 {
        let err = j[c].zip_map(&lin[c], |a, b| a - b).max_abs();
        assert!(err <= 0.01 * lin[c].max_abs(), "component {c}: {err} vs {}", lin[c].max_abs());
    }
}

#[test]
fn constant_density_is_a_stationary_run() {
    let grid = TorusGrid::square(16).unwrap();
    let rho = RealField::constant(&grid, 1.0);
    let traj = run_qdd(&rho, &QDDParams::new(law(), DELTA, 1e-4, 0.01)).unwrap();
    assert_eq!(traj.final_state, rho);
    assert!(traj.records.iter().all(|r| r.entropy == 0.0 && r.deviation == 0.0));
    let j = consistent_momentum(&rho, &law(), DELTA).unwrap();
    assert!(j[0].max_abs() == 0.0 && j[1].max_abs() == 0.0);
}

#[test]
fn perturbation_relaxes_with_monotone_entropy() {
    let grid = TorusGrid::square(32).unwrap();
    let rho0 = RealField::from_fn(&grid, |x, y| 1.0 + 0.1 * (2.0 * PI * x).cos() + 0.05 * (2.0 * PI * (x + y)).sin());
    let mut p = QDDParams::new(law(), DELTA, 1e-4, 1.0);
    p.monitor_every = 10;
    let traj = run_qdd(&rho0, &p).unwrap();
    assert_eq!(traj.status, QddStatus::Completed);
    assert!(traj.max_entropy_increase() <= 1e-8);
    for w in traj.records.windows(2) {
        let h = w[0].entropy;
        if h > 1e-8 {
            assert!(w[1].entropy < h, "H stalled at t = {}", w[1].t);
        }
    }
    let first = traj.records.first().unwrap().deviation;
    let last = traj.records.last().unwrap().deviation;
    assert!(last < 1e-2 * first);
    let (lhs, h0) = traj.dissipation_budget();
    assert!(lhs.is_finite() && h0 > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flux_has_zero_net_divergence(seed in any::<u64>(), amplitude in 0.05f64..0.7) {
        let grid = TorusGrid::square(32).unwrap();
        let rho = random_density(&grid, seed, amplitude);
        let j = consistent_momentum(&rho, &law(), DELTA).unwrap();
        prop_assert!(integrate(&divergence(&j)).abs() < 1e-12);
    }

    #[test]
    fn step_preserves_the_mean(seed in any::<u64>(), amplitude in 0.05f64..0.7) {
        let grid = TorusGrid::square(32).unwrap();
        let rho = random_density(&grid, seed, amplitude);
        let next = qdd_step(&rho, &QDDParams::new(law(), DELTA, 1e-5, 1.0)).unwrap();
        prop_assert!((next.mean() - rho.mean()).abs() <= 1e-12 * rho.mean());
    }
}
