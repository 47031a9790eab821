//! Invariances of the objective: phase swap, periodic shifts, axis relabeling.

mod common;

use cellsplit::elasticity::SolverOptions;
use cellsplit::homogenize::effective_table;
use cellsplit::mesh::PeriodicMesh;
use cellsplit::objective::Objective;
use cellsplit::phase_field::InterpolationParams;
use common::*;

fn shift(mesh: &PeriodicMesh, v: &[f64], by: [isize; 3]) -> Vec<f64> {
    (0..mesh.num_nodes())
        .map(|i| {
            let g = mesh.grid_index(i);
            v[mesh.wrap([g[0] as isize + by[0], g[1] as isize + by[1], g[2] as isize + by[2]])]
        })
        .collect()
}

fn transpose_xy(mesh: &PeriodicMesh, v: &[f64]) -> Vec<f64> {
    (0..mesh.num_nodes())
        .map(|i| {
            let g = mesh.grid_index(i);
            v[mesh.wrap([g[1] as isize, g[0] as isize, g[2] as isize])]
        })
        .collect()
}

#[test]
fn phase_swap_leaves_objective_unchanged() {
    let mesh = mesh(2, 5);
    let mut obj = Objective::new(mesh.clone(), equal_problem(2, &["A11", "A12"], 2.0, 2.0), 0.5).unwrap();
    for seed in 0..100 {
        let v = random_values(mesh.num_nodes(), 1.2, seed);
        let w: Vec<f64> = v.iter().map(|x| -x).collect();
        obj.clear_warm_start();
        let a = obj.evaluate(&v).unwrap().total;
        obj.clear_warm_start();
        let b = obj.evaluate(&w).unwrap().total;
        assert!((a - b).abs() <= 1e-12 * a.abs(), "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn grid_shifts_are_exact_symmetries() {
    let mesh = mesh(3, 7);
    let problem = equal_problem(3, &["A11", "A22", "A23"], 2.0, 2.0);
    let mut obj = Objective::new(mesh.clone(), problem, 2.0 * mesh.spacing()).unwrap();
    let v = random_values(mesh.num_nodes(), 1.0, 42);
    let base = obj.evaluate(&v).unwrap();
    for by in [[1, 0, 0], [0, -2, 3], [5, 5, 5]] {
        obj.clear_warm_start();
        let s = obj.evaluate(&shift(&mesh, &v, by)).unwrap();
        assert!((s.total - base.total).abs() <= 1e-10 * base.total, "{by:?}");
        let g = shift(&mesh, &base.gradient, by);
        let err = g.iter().zip(&s.gradient).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8 * base.gradient.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    }
}

#[test]
fn relabeling_axes_permutes_components() {
    let mesh = mesh(2, 9);
    let v = random_values(mesh.num_nodes(), 1.0, 5);
    let w = transpose_xy(&mesh, &v);
    let mat = steel_like();
    let l = loads(&["A11", "A22", "A12"], 2);
    let opts = SolverOptions { tol: 1e-11, max_iter: None };
    let ip = InterpolationParams::default();
    let a = effective_table(&mesh, &v, &[mat, mat], &ip, &l, &opts).unwrap();
    let b = effective_table(&mesh, &w, &[mat, mat], &ip, &l, &opts).unwrap();
    for m in 0..2 {
        assert!(rel(a.rows[m][0].normalized, b.rows[m][1].normalized) < 1e-8);
        assert!(rel(a.rows[m][1].normalized, b.rows[m][0].normalized) < 1e-8);
        assert!(rel(a.rows[m][2].normalized, b.rows[m][2].normalized) < 1e-8);
    }
}
