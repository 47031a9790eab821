//! Conjugate gradients against a dense direct solve of the bordered system
//! `[K Bᵀ; B 0] [u; λ] = [f; 0]`, `B` fixing the mean of each displacement component.

mod common;

use cellsplit::elasticity::{assemble_operator, solve_corrector, LoadCase, SolverOptions};
use cellsplit::phase_field::{Interpolation, InterpolationParams, Phase};
use common::*;
use nalgebra::{DMatrix, DVector};

fn dense_energy(dim: usize, seed: u64, phase: Phase, label: &str, kind: Interpolation) -> (f64, f64, f64) {
    let mesh = mesh(dim, 5);
    let v = random_values(mesh.num_nodes(), 1.0, seed);
    let ip = InterpolationParams::with_kind(1e-4, kind).unwrap();
    let op = assemble_operator(&mesh, &v, &steel_like(), phase, &ip).unwrap();
    let load = LoadCase::canonical(label, dim, -0.25).unwrap();

    let n = op.num_dofs();
    let k = op.to_dense();
    let mut big = DMatrix::<f64>::zeros(n + dim, n + dim);
    for i in 0..n {
        for j in 0..n {
            big[(i, j)] = k[i * n + j];
        }
    }
    for node in 0..mesh.num_nodes() {
        for a in 0..dim {
            big[(n + a, node * dim + a)] = 1.0;
            big[(node * dim + a, n + a)] = 1.0;
        }
    }
    let f = op.load_vector(&load).unwrap();
    let mut rhs = DVector::<f64>::zeros(n + dim);
    rhs.rows_mut(0, n).copy_from_slice(&f);
    let sol = big.lu().solve(&rhs).expect("bordered system is nonsingular");
    let u: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    let direct = op.energy_of(&load, &u);

    let cg = solve_corrector(&op, &load, &SolverOptions { tol: 1e-12, max_iter: None }, None).unwrap();
    let du = u
        .iter()
        .zip(&cg.displacement)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let umax = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (direct, cg.energy, du / umax.max(1e-300))
}

#[test]
fn cg_matches_dense_solve_2d() {
    for (seed, label) in [(1, "A11"), (2, "A12"), (3, "A22")] {
        for phase in Phase::BOTH {
            let (direct, cg, du) = dense_energy(2, seed, phase, label, Interpolation::Linear);
            assert!(rel(cg, direct) <= 1e-8, "{label} {phase:?}: {cg} vs {direct}");
            assert!(du < 1e-6, "displacement mismatch {du}");
        }
    }
}

#[test]
fn cg_matches_dense_solve_3d() {
    for (seed, label) in [(4, "A11"), (5, "A23")] {
        let (direct, cg, du) = dense_energy(3, seed, Phase::Zero, label, Interpolation::Linear);
        assert!(rel(cg, direct) <= 1e-8, "{label}: {cg} vs {direct}");
        assert!(du < 1e-6, "displacement mismatch {du}");
    }
    let (direct, cg, _) = dense_energy(3, 6, Phase::One, "A13", Interpolation::Quadratic);
    assert!(rel(cg, direct) <= 1e-8);
}

#[test]
fn dense_operator_is_symmetric_with_rigid_kernel() {
    let mesh = mesh(3, 4);
    let v = random_values(mesh.num_nodes(), 1.0, 8);
    let op = assemble_operator(&mesh, &v, &steel_like(), Phase::Zero, &InterpolationParams::default()).unwrap();
    let n = op.num_dofs();
    let k = DMatrix::from_row_slice(n, n, &op.to_dense());
    let asym = (&k - k.transpose()).abs().max();
    assert!(asym <= 1e-13 * k.abs().max());
    let eig = k.symmetric_eigenvalues();
    let scale = eig.max();
    let zero = eig.iter().filter(|e| e.abs() < 1e-12 * scale).count();
    assert_eq!(zero, 3, "kernel is exactly the constant translations");
    assert!(eig.iter().all(|&e| e > -1e-12 * scale));
}
