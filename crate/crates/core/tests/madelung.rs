use std::f64::consts::PI;

use proptest::prelude::*;
use qhd_core::experiments::{make_initial, InitialDataSpec};
use qhd_core::functionals::{energy_parts, gcp, half_gradient_h1_sq};
use qhd_core::madelung::{extract_hydro, lift_wavefunction, polar_defect, velocity_of};
use qhd_core::spectral::dealias;
use qhd_core::{Coupling, HydroState, PressureLaw, QhdError, RealField, TorusGrid};

const DELTA: f64 = 0.25;

fn law() -> PressureLaw {
    PressureLaw::new(1, 1.0)
}

fn random_state(grid: &TorusGrid, seed: u64, amplitude: f64, speed: f64) -> HydroState {
    let spec = InitialDataSpec { velocity_amplitude: speed, ..InitialDataSpec::random(1.0, DELTA, amplitude, 3, seed) };
    make_initial(&spec, grid, &law()).unwrap().state
}

fn l2_diff(a: &RealField, b: &RealField) -> f64 {
    a.zip_map(b, |x, y| (x - y).powi(2)).mean().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn extract_inverts_lift(
        seed in any::<u64>(),
        amplitude in 0.05f64..0.7,
        speed in 0.0f64..1.0,
        s_star in -20.0f64..20.0,
    ) {
        let grid = TorusGrid::square(64).unwrap();
        let state = random_state(&grid, seed, amplitude, speed);
        let w = lift_wavefunction(&state, s_star, DELTA).unwrap();
        let back = extract_hydro(&w, &law(), DELTA).unwrap();
        prop_assert!(l2_diff(&back.rho, &state.rho) < 1e-8);
        for c in 0..2 {
            let e = l2_diff(&back.v[c], &state.v[c]);
            prop_assert!(e < 1e-8, "v[{c}] error {e}");
        }
    }

    #[test]
    fn polar_identity(seed in any::<u64>(), amplitude in 0.05f64..0.7, speed in 0.0f64..1.0) {
        let grid = TorusGrid::square(64).unwrap();
        let w = lift_wavefunction(&random_state(&grid, seed, amplitude, speed), 0.0, DELTA).unwrap();
        let d = dealias(&polar_defect(&w)).max_abs();
        prop_assert!(d < 1e-8, "defect {d}");
    }
}

#[test]
fn constant_state_gives_constant_wave() {
    let grid = TorusGrid::square(16).unwrap();
    let state = HydroState::from_hydro(
        RealField::constant(&grid, 1.0),
        [RealField::zeros(&grid), RealField::zeros(&grid)],
        &law(),
        &Coupling::default(),
    );
    let w = lift_wavefunction(&state, 0.7, DELTA).unwrap();
    for z in w.psi.values() {
        assert!((z.re - 0.7f64.cos()).abs() < 1e-15 && (z.im - 0.7f64.sin()).abs() < 1e-15);
    }
    let v = velocity_of(&w.psi);
    assert!(v[0].max_abs() < 1e-14 && v[1].max_abs() < 1e-14);
}

#[test]
fn uniform_drift_has_winding() {
    let grid = TorusGrid::square(16).unwrap();
    let state = HydroState::from_hydro(
        RealField::constant(&grid, 1.0),
        [RealField::constant(&grid, 2.0 * PI), RealField::zeros(&grid)],
        &law(),
        &Coupling::default(),
    );
    assert!(matches!(lift_wavefunction(&state, 0.0, DELTA), Err(QhdError::NonZeroCirculation { .. })));
}

/// Smallest `C` with `I + E/C ≤ ½‖∇ψ‖²_{H¹} ≤ I + C·E` over a corpus of random states.
fn equivalence_constant(n: usize, cases: u64) -> f64 {
    let grid = TorusGrid::square(n).unwrap();
    let law = law();
    let mut worst: f64 = 1.0;
    for seed in 0..cases {
        let state = random_state(&grid, seed, 0.6, 0.8);
        let w = lift_wavefunction(&state, 0.0, DELTA).unwrap();
        let x = half_gradient_h1_sq(&w);
        let e: f64 = energy_parts(&state, &law, &Coupling::default()).iter().sum();
        let i = gcp(&state);
        assert!(x > i && e > 0.0, "seed {seed}: x = {x}, I = {i}");
        let r = (x - i) / e;
        worst = worst.max(r).max(1.0 / r);
    }
    worst
}

#[test]
fn norm_equivalence_constant_is_resolution_stable() {
    let coarse = equivalence_constant(32, 100);
    let fine = equivalence_constant(64, 100);
    assert!(coarse.is_finite() && fine.is_finite());
    assert!((fine - coarse).abs() <= 1e-3 * fine, "C = {coarse} at 32², {fine} at 64²");
}
