//! Cross-route checks that pair independent discretizations of the same
//! quantity: grid refinement, the two time-stepping schemes, and the
//! step-doubling controller actually controlling.

use gkdv::flux::{DispersionParams, FluxModel};
use gkdv::hopf::{Gaussian, Profile, Soliton};
use gkdv::solver::{evolve, evolve_with_error_control, Scheme, SolverConfig};
use gkdv::spectral::make_grid;

/// Doubling the grid hardly moves an already-resolved final state: the
/// coarse points are a subset of the fine ones, so the comparison is
/// pointwise.
#[test]
fn resolution_doubling_is_converged() {
    let length = 60.0;
    let wave = Soliton {
        kappa: 1.0,
        eps1: 0.25,
    };
    let cfg = SolverConfig::new(1e-3, 0.5);
    let eps = DispersionParams::single(wave.eps1).unwrap();
    let model = FluxModel::kdv();

    let coarse_grid = make_grid(512, length).unwrap();
    let fine_grid = make_grid(1024, length).unwrap();
    let coarse = evolve(&wave.sample(&coarse_grid), &model, &eps, &cfg).unwrap();
    let fine = evolve(&wave.sample(&fine_grid), &model, &eps, &cfg).unwrap();

    let mut gap = 0.0f64;
    for j in 0..coarse_grid.n_points() {
        let diff = coarse.final_state().samples()[j] - fine.final_state().samples()[2 * j];
        gap = gap.max(diff.abs());
    }
    assert!(gap < 1e-9, "refinement moved the state by {gap:.3e}");
}

/// The integrating-factor and exponential-time-differencing steppers are
/// independent discretizations of the same flow.
#[test]
fn schemes_agree_on_a_dispersive_run() {
    let grid = make_grid(1024, 40.0).unwrap();
    let datum = Gaussian {
        amp: 1.0,
        width: 1.5,
        center: 0.0,
    }
    .sample(&grid);
    let model = FluxModel::kdv();
    let eps = DispersionParams::single(5e-3).unwrap();

    let mut runs = Vec::new();
    for scheme in [Scheme::IfRk4, Scheme::Etdrk4] {
        let mut cfg = SolverConfig::new(5e-4, 0.4);
        cfg.scheme = scheme;
        runs.push(evolve(&datum, &model, &eps, &cfg).unwrap());
    }
    let gap = runs[0].final_state().sub(runs[1].final_state()).max_abs();
    assert!(gap < 1e-8, "schemes disagree by {gap:.3e}");
}

/// A deliberately coarse starting step forces the controller to halve at
/// least once before meeting a tight tolerance.
#[test]
fn error_control_halves_until_the_tolerance_holds() {
    let grid = make_grid(256, 30.0).unwrap();
    let datum = Gaussian {
        amp: 1.5,
        width: 1.0,
        center: 0.0,
    }
    .sample(&grid);
    let model = FluxModel::kdv();
    let eps = DispersionParams::single(0.05).unwrap();
    let mut cfg = SolverConfig::new(3e-2, 0.5);
    cfg.cfl_safety = 0.9;

    let run = evolve_with_error_control(&datum, &model, &eps, &cfg, 1e-12, 10).unwrap();
    assert!(run.halvings >= 1, "expected at least one halving");
    assert!(run.error_estimate <= 1e-12);
    assert_eq!(run.trajectory.final_time(), 0.5);
}
