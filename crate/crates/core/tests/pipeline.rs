use std::path::Path;

use qce_core::solver::Solver;
use qce_core::{solve, Acceleration, Grid, GridFunction, Init, Obstacle, SchemeParams, SolverConfig, StencilSet};

fn params(g: Obstacle, eps: f64, width: usize) -> SchemeParams {
    SchemeParams::new(eps, StencilSet::new(g.dim(), width).unwrap(), g).unwrap()
}

#[test]
fn solution_survives_a_csv_round_trip() {
    let grid = Grid::new(2, 21).unwrap();
    let (u, _) = solve(&grid, &params(Obstacle::pacman_sdf(), 0.1, 2), &SolverConfig::for_dim(2)).unwrap();
    let mut bytes = Vec::new();
    u.write_csv(&mut bytes, &["example=pacman".to_string()]).unwrap();
    let back = GridFunction::read_csv(bytes.as_slice(), Path::new("memory")).unwrap();
    assert_eq!(back, u);
}

#[test]
fn initialization_and_acceleration_do_not_change_the_solution() {
    let grid = Grid::new(2, 25).unwrap();
    let p = params(Obstacle::cone_with_circles(), grid.h() / 2.0, 2);
    let base = SolverConfig::for_dim(2);
    let (u, _) = solve(&grid, &p, &base).unwrap();
    for config in [
        SolverConfig { init: Init::Obstacle, ..base },
        SolverConfig { accel: Acceleration::LineSweep, ..base },
        SolverConfig { init: Init::Obstacle, accel: Acceleration::LineSweep, ..base },
    ] {
        let (v, report) = solve(&grid, &p, &config).unwrap();
        assert!(report.converged);
        assert!(u.sup_distance(&v) < 1e-4, "{:?}: {}", config, u.sup_distance(&v));
    }
}

#[test]
fn solutions_increase_as_epsilon_decreases() {
    let grid = Grid::new(1, 65).unwrap();
    let g = Obstacle::double_well_1d();
    let mut previous: Option<GridFunction> = None;
    for eps in [0.3, 0.1, 0.05] {
        let (u, report) = solve(&grid, &params(g.clone(), eps, 1), &SolverConfig::for_dim(1)).unwrap();
        assert!(report.converged);
        if let Some(prev) = &previous {
            for i in 0..grid.len() {
                assert!(u.get(i) >= prev.get(i) - 1e-5, "eps {eps}, node {i}");
            }
        }
        previous = Some(u);
    }
}

#[test]
fn adding_a_constant_to_the_obstacle_shifts_the_solution() {
    let grid = Grid::new(2, 17).unwrap();
    let square = Obstacle::square_sdf();
    let raised = {
        let g = square.clone();
        Obstacle::custom("raised", 2, -1.0, 1.0, move |x| g.value(x) + 0.75).unwrap()
    };
    let config = SolverConfig::for_dim(2);
    let (u, _) = solve(&grid, &params(square, 0.2, 2), &config).unwrap();
    let (v, _) = solve(&grid, &params(raised, 0.2, 2), &config).unwrap();
    for i in 0..grid.len() {
        assert!((v.get(i) - u.get(i) - 0.75).abs() < 1e-5, "node {i}");
    }
}

#[test]
fn a_converged_state_is_a_fixed_point() {
    let grid = Grid::new(2, 17).unwrap();
    let p = params(Obstacle::square_sdf(), 0.3, 2);
    let config = SolverConfig::for_dim(2);
    let (u, report) = solve(&grid, &p, &config).unwrap();
    let mut solver = Solver::new(&grid, &p, &config).unwrap();
    solver.set_state(&u).unwrap();
    let update = solver.step();
    assert!(update <= report.delta * 1e-6 * 1.0001, "{update}");
}
