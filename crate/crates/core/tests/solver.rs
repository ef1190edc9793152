use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bl_homotopy::discretization::{AuxiliarySettings, Grid, HomotopyKind, HomotopyProblem, Scheme, TimeStep};
use bl_homotopy::physics::CoreyFlux;
use bl_homotopy::solver::{newton_solve, newton_solve_observed, NewtonConfig, NewtonVerdict};

fn target(flux: CoreyFlux, n: usize, tau: f64, s_prev: Vec<f64>, s_in: f64) -> HomotopyProblem {
    let step = TimeStep::new(tau, s_prev, s_in).unwrap();
    let grid = Grid::new(n, n as f64 * 0.01).unwrap();
    HomotopyProblem::new(HomotopyKind::TargetOnly, flux, grid, step, Scheme::default(), &AuxiliarySettings::default())
        .unwrap()
}

#[test]
fn single_linear_cell_in_one_iteration() {
    let flux = CoreyFlux::new(1.0, 1.0, 1.0).unwrap();
    let step = TimeStep::new(1.0, vec![0.0], 1.0).unwrap();
    let p = HomotopyProblem::new(
        HomotopyKind::TargetOnly,
        flux,
        Grid::new(1, 1.0).unwrap(),
        step,
        Scheme::default(),
        &AuxiliarySettings::default(),
    )
    .unwrap();
    let rep = newton_solve(&p, 0.0, &[0.0], &NewtonConfig::default()).unwrap();
    assert_eq!(rep.verdict, NewtonVerdict::Converged);
    assert_eq!(rep.iterations, 1);
    assert!((rep.x_final[0] - 0.5).abs() < 1e-15);
    assert_eq!(rep.residual_history.len(), rep.iterations + 1);
}

#[test]
fn exact_start_needs_no_update() {
    let flux = CoreyFlux::new(2.0, 2.0, 1.0).unwrap();
    let p = target(flux, 30, 0.002, vec![0.0; 30], 1.0);
    let sol = newton_solve(&p, 0.0, &[0.0; 30], &NewtonConfig::default()).unwrap();
    assert!(sol.converged());
    let again = newton_solve(&p, 0.0, &sol.x_final, &NewtonConfig::default()).unwrap();
    assert!(again.converged());
    assert!(again.iterations <= 1);
    let moved = again.x_final.iter().zip(&sol.x_final).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(moved < 1e-12);
}

#[test]
fn converges_quadratically() {
    let flux = CoreyFlux::new(2.0, 2.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s_prev: Vec<f64> = (0..40).map(|_| rng.gen_range(0.3..0.7)).collect();
    let p = target(flux, 40, 0.003, s_prev.clone(), 0.8);
    let cfg = NewtonConfig { tol_abs: 1e-13, ..Default::default() };
    let rep = newton_solve(&p, 0.0, &s_prev, &cfg).unwrap();
    assert!(rep.converged(), "{:?}", rep.verdict);
    let tail: Vec<f64> = rep.residual_history.iter().copied().filter(|r| *r < 1e-3 && *r > 1e-14).collect();
    assert!(tail.len() >= 2, "{:?}", rep.residual_history);
    for w in tail.windows(2) {
        // log-log slope of successive residuals
        let slope = w[1].ln() / w[0].ln();
        assert!(slope >= 1.8 || w[1] < 1e-12, "{:?}", rep.residual_history);
    }
}

#[test]
fn identical_inputs_give_identical_reports() {
    let flux = CoreyFlux::new(3.0, 2.0, 0.5).unwrap();
    let p = target(flux, 50, 0.05, vec![0.2; 50], 1.0);
    let a = newton_solve(&p, 0.0, &[0.2; 50], &NewtonConfig::default()).unwrap();
    let b = newton_solve(&p, 0.0, &[0.2; 50], &NewtonConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn degenerate_front_advances_one_cell_per_iteration() {
    // tau/dx = 0.8 keeps the first update inside the evaluation band
    let flux = CoreyFlux::new(2.0, 2.0, 1.0).unwrap();
    let p = target(flux, 100, 0.008, vec![0.0; 100], 1.0);
    let mut supports = Vec::new();
    let cfg = NewtonConfig { max_iter: 10, ..Default::default() };
    newton_solve_observed(&p, 0.0, &[0.0; 100], &cfg, |_, x| supports.push(x.iter().filter(|v| **v > 1e-8).count()))
        .unwrap();
    assert!(supports.len() >= 5, "{supports:?}");
    assert!(supports.windows(2).all(|w| w[1] <= w[0] + 1), "{supports:?}");
    assert!(supports.windows(2).any(|w| w[1] == w[0] + 1));
}

#[test]
fn large_first_update_escapes_the_band() {
    let flux = CoreyFlux::new(2.0, 2.0, 1.0).unwrap();
    let p = target(flux, 100, 0.025, vec![0.0; 100], 1.0);
    let rep = newton_solve(&p, 0.0, &[0.0; 100], &NewtonConfig::default()).unwrap();
    assert_eq!(rep.verdict, NewtonVerdict::DomainEscape);
    assert_eq!(rep.iterations, 1);
}
