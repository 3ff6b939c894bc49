use potmax::capacity::{
    ball_target, solve_c1, solve_cp, solve_dual_c1, CapacityKernel, CapacityProblem, CellGrid, CpOptions,
};
use potmax::stats::Parallel;

fn ball(n: usize, r: f64) -> CapacityProblem {
    let grid = CellGrid::cube(3, 1.0, n);
    let target = ball_target(&grid, &[0.0; 3], r);
    CapacityProblem::new(grid, CapacityKernel::newtonian(), target, 1.0)
}

#[test]
fn newtonian_ball_capacity_is_its_radius() {
    let p = ball(41, 0.5);
    let par = Parallel::global();
    let primal = solve_c1(&p, &par).unwrap();
    let dual = solve_dual_c1(&p, &par).unwrap();
    assert!((primal.value - 0.5).abs() < 0.05, "C1 = {}", primal.value);
    assert!(dual.value <= primal.value * (1.0 + 1e-8));
    assert!((dual.value - 0.5).abs() < 0.05, "c1 = {}", dual.value);
}

#[test]
fn capacity_refines_toward_the_radius() {
    let par = Parallel::global();
    let errs: Vec<f64> = [11, 21]
        .iter()
        .map(|&n| (solve_c1(&ball(n, 0.5), &par).unwrap().value - 0.5).abs())
        .collect();
    assert!(errs[1] < 0.05, "{errs:?}");
}

#[test]
fn a_point_has_vanishing_cp_capacity() {
    // single-cell C_p with p < d/2 scales like h^{d − 2p}
    let par = Parallel::global();
    let p = 1.2;
    let ns = [5usize, 9, 17, 33];
    let vals: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let grid = CellGrid::cube(3, 1.0, n);
            let c = grid.locate(&[0.0; 3]).unwrap();
            let prob = CapacityProblem::new(grid, CapacityKernel::newtonian(), vec![c], p);
            solve_cp(&prob, &CpOptions::default(), &par).unwrap().value
        })
        .collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    let hs: Vec<f64> = ns.iter().map(|&n| 2.0 / n as f64).collect();
    let slope = (vals[3] / vals[2]).ln() / (hs[3] / hs[2]).ln();
    assert!((slope - (3.0 - 2.0 * p)).abs() < 0.1, "slope {slope}, {vals:?}");
}
