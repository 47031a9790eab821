//! Central finite-difference check of the objective gradient.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::PeriodicMesh;
use crate::objective::{Objective, Problem};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub nodes_per_axis: usize,
    pub seed: u64,
    pub step: f64,
    /// Inner CG tolerance used for every solve of the check.
    pub inner_tol: f64,
    /// Interface width in grid spacings.
    pub eps_factor: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            nodes_per_axis: 5,
            seed: 7,
            step: 1e-5,
            inner_tol: 1e-11,
            eps_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub value: f64,
    pub nodes: usize,
    pub max_abs_error: f64,
    /// `max_j |g_j - fd_j| / max_j |fd_j|`.
    pub max_rel_error: f64,
    pub analytic: Vec<f64>,
    pub finite_difference: Vec<f64>,
}

/// Compare the analytic gradient at a seeded random field in `[-0.9, 0.9]`
/// with central differences in every nodal direction.
pub fn gradcheck(problem: &Problem, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mesh = Arc::new(PeriodicMesh::new(problem.dim, opts.nodes_per_axis)?);
    let mut problem = problem.clone();
    problem.solver.tol = opts.inner_tol;
    problem.solver.max_iter = None;
    let eps = opts.eps_factor * mesh.spacing();
    let mut objective = Objective::new(mesh.clone(), problem, eps)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let v: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.random_range(-0.9..0.9)).collect();
    let base = objective.evaluate(&v)?;

    let mut fd = Vec::with_capacity(v.len());
    let mut w = v.clone();
    for j in 0..v.len() {
        w[j] = v[j] + opts.step;
        let plus = objective.evaluate(&w)?.total;
        w[j] = v[j] - opts.step;
        let minus = objective.evaluate(&w)?.total;
        w[j] = v[j];
        fd.push((plus - minus) / (2.0 * opts.step));
    }

    let max_abs_error = base
        .gradient
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(GradcheckReport {
        value: base.total,
        nodes: v.len(),
        max_abs_error,
        max_rel_error: if scale > 0.0 { max_abs_error / scale } else { max_abs_error },
        analytic: base.gradient,
        finite_difference: fd,
    })
}
