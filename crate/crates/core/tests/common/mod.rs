#![allow(dead_code)]

use std::sync::Arc;

use cellsplit::elasticity::{LoadCase, SolverOptions};
use cellsplit::material::IsotropicMaterial;
use cellsplit::mesh::PeriodicMesh;
use cellsplit::objective::{CostParams, Problem};
use cellsplit::phase_field::InterpolationParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn mesh(dim: usize, n: usize) -> Arc<PeriodicMesh> {
    Arc::new(PeriodicMesh::new(dim, n).unwrap())
}

pub fn steel_like() -> IsotropicMaterial {
    IsotropicMaterial::from_young_poisson(10.0, 0.25).unwrap()
}

pub fn random_values(len: usize, amplitude: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-amplitude..amplitude)).collect()
}

pub fn loads(labels: &[&str], dim: usize) -> Vec<LoadCase> {
    labels.iter().map(|l| LoadCase::canonical(l, dim, -0.25).unwrap()).collect()
}

pub fn equal_problem(dim: usize, labels: &[&str], p: f64, eta: f64) -> Problem {
    let l = loads(labels, dim);
    Problem {
        dim,
        materials: [steel_like(), steel_like()],
        loads: [l.clone(), l],
        cost: CostParams {
            p,
            eta,
            ..CostParams::default()
        },
        interp: InterpolationParams::default(),
        solver: SolverOptions { tol: 1e-10, max_iter: None },
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
