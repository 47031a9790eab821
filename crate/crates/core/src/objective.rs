//! Worst-case two-phase objective with perimeter penalty.
//!
//! Per phase `m` the load energies `E^m_l` are aggregated into a cost
//! `J^m = (Σ_l (E^m_l)^-p)^(1/p)`; the two phase costs are combined with a
//! q-norm smooth maximum `M`, and the total is `J = M + η L^ε[v]`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::elasticity::{
    assemble_operator, energy_and_field_gradient, solve_corrector, LoadCase, SolverOptions,
};
use crate::homogenize::par_map;
use crate::material::IsotropicMaterial;
use crate::mesh::PeriodicMesh;
use crate::phase_field::{modica_mortola, InterpolationParams, Phase};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    /// `(Σ E_l^-p)^(1/p)`.
    #[default]
    Pnorm,
    /// `-Σ E_l`.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub p: f64,
    pub q_max: f64,
    pub eta: f64,
    pub kind: CostKind,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            p: 2.0,
            q_max: 8.0,
            eta: 2.0,
            kind: CostKind::Pnorm,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::param("p", format!("must be >= 1, got {}", self.p)));
        }
        if !(self.q_max >= 1.0 && self.q_max.is_finite()) {
            return Err(Error::param("q_max", format!("must be >= 1, got {}", self.q_max)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::param("eta", format!("must be >= 0, got {}", self.eta)));
        }
        Ok(())
    }
}

/// `J = (Σ E_l^-p)^(1/p)` and `dJ/dE_l = -J^(1-p) E_l^(-p-1)`.
pub fn aggregate_cost(energies: &[f64], p: f64) -> Result<(f64, Vec<f64>)> {
    if energies.is_empty() {
        return Err(Error::param("loads", "at least one load energy is required"));
    }
    if let Some(e) = energies.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Numerical(format!("load energy must be positive, got {e}")));
    }
    // factor out the smallest energy to keep E^-p in range for large p
    let emin = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let s: f64 = energies.iter().map(|e| (emin / e).powf(p)).sum();
    let j = s.powf(1.0 / p) / emin;
    let grad = energies
        .iter()
        .map(|e| -(j * e).powf(1.0 - p) / (e * e))
        .collect();
    Ok((j, grad))
}

/// `J = -Σ E_l`.
pub fn sum_cost(energies: &[f64]) -> (f64, Vec<f64>) {
    (-energies.iter().sum::<f64>(), vec![-1.0; energies.len()])
}

/// `M = (a^q + b^q)^(1/q)` with its partial derivatives, for `a, b > 0`.
pub fn smooth_max(a: f64, b: f64, q: f64) -> Result<(f64, f64, f64)> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Numerical(format!("smooth max needs positive arguments, got {a}, {b}")));
    }
    let top = a.max(b);
    let (ra, rb) = (a / top, b / top);
    let s = ra.powf(q) + rb.powf(q);
    let m = top * s.powf(1.0 / q);
    let da = (ra * top / m).powf(q - 1.0);
    let db = (rb * top / m).powf(q - 1.0);
    Ok((m, da, db))
}

/// Smooth maximum that also accepts two negative arguments (sum cost):
/// `max(a, b) = -min(-a, -b)` with `min(x, y) = 1 / max(1/x, 1/y)`.
fn smooth_max_signed(a: f64, b: f64, q: f64) -> Result<(f64, f64, f64)> {
    if a > 0.0 && b > 0.0 {
        return smooth_max(a, b, q);
    }
    if a < 0.0 && b < 0.0 {
        let (x, y) = (-a, -b);
        let (m, dx, dy) = smooth_max(1.0 / x, 1.0 / y, q)?;
        let mn = 1.0 / m;
        // d(-1/m(1/x, 1/y))/da with x = -a
        let da = mn * mn * dx / (x * x);
        let db = mn * mn * dy / (y * y);
        return Ok((-mn, da, db));
    }
    Err(Error::Numerical(format!("phase costs of mixed sign: {a}, {b}")))
}

/// Moment vectors `∫ φ_j (x_i - 1/2) dx`, one per axis.
pub fn moment_vectors(mesh: &PeriodicMesh) -> Vec<Vec<f64>> {
    let dim = mesh.dim();
    let quad = mesh.quadrature();
    let mut out = vec![vec![0.0; mesh.num_nodes()]; dim];
    for e in 0..mesh.num_elements() {
        let nodes = mesh.element_nodes(e);
        for q in 0..quad.len() {
            let x = mesh.quadrature_position(e, q);
            let w = quad.weight(q);
            for (phi, &n) in quad.values(q).iter().zip(nodes) {
                for (i, m) in out.iter_mut().enumerate() {
                    m[n as usize] += w * phi * (x[i] - 0.5);
                }
            }
        }
    }
    out
}

/// First moments `c_i = ∫ v (x_i - 1/2) dx` and their constant gradients.
pub fn center_of_mass(mesh: &PeriodicMesh, v: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let moments = moment_vectors(mesh);
    let c = moments
        .iter()
        .map(|m| m.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect();
    (c, moments)
}

/// Everything about the optimization problem that does not depend on the grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub dim: usize,
    pub materials: [IsotropicMaterial; 2],
    pub loads: [Vec<LoadCase>; 2],
    pub cost: CostParams,
    pub interp: InterpolationParams,
    pub solver: SolverOptions,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        for (m, loads) in self.loads.iter().enumerate() {
            if loads.is_empty() {
                return Err(Error::param("loads", format!("phase {m} has no loads")));
            }
            if let Some(l) = loads.iter().find(|l| l.strain().dim() != self.dim) {
                return Err(Error::param("loads", format!("load `{}` has the wrong dimension", l.label())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ObjectiveEvaluation {
    /// `E^m_l`, per phase in load order.
    pub energies: [Vec<f64>; 2],
    /// `J^0`, `J^1`.
    pub costs: [f64; 2],
    pub smooth_max: f64,
    /// `L^ε[v]`.
    pub perimeter: f64,
    pub total: f64,
    pub gradient: Vec<f64>,
    pub center_of_mass: Vec<f64>,
    pub cg_iterations: usize,
}

/// Objective on a fixed mesh; keeps the last correctors for warm starts.
#[derive(Debug, Clone)]
pub struct Objective {
    mesh: Arc<PeriodicMesh>,
    problem: Problem,
    eps: f64,
    moments: Vec<Vec<f64>>,
    warm: [Vec<Option<Vec<f64>>>; 2],
}

impl Objective {
    pub fn new(mesh: Arc<PeriodicMesh>, problem: Problem, eps: f64) -> Result<Self> {
        problem.validate()?;
        if mesh.dim() != problem.dim {
            return Err(Error::DimensionMismatch {
                expected: problem.dim,
                actual: mesh.dim(),
            });
        }
        if !(eps > 0.0) {
            return Err(Error::param("eps", "interface width must be positive"));
        }
        let warm = [
            vec![None; problem.loads[0].len()],
            vec![None; problem.loads[1].len()],
        ];
        Ok(Objective {
            moments: moment_vectors(&mesh),
            mesh,
            problem,
            eps,
            warm,
        })
    }

    pub fn mesh(&self) -> &Arc<PeriodicMesh> {
        &self.mesh
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn moments(&self) -> &[Vec<f64>] {
        &self.moments
    }

    pub fn clear_warm_start(&mut self) {
        for w in self.warm.iter_mut().flatten() {
            *w = None;
        }
    }

    pub fn evaluate(&mut self, v: &[f64]) -> Result<ObjectiveEvaluation> {
        let mesh = &self.mesh;
        let pb = &self.problem;
        let ops = Phase::BOTH
            .iter()
            .map(|&p| assemble_operator(mesh, v, &pb.materials[p.index()], p, &pb.interp))
            .collect::<Result<Vec<_>>>()?;

        let mut jobs = Vec::new();
        for (m, loads) in pb.loads.iter().enumerate() {
            for (l, load) in loads.iter().enumerate() {
                jobs.push((m, l, load, self.warm[m][l].take()));
            }
        }
        let solver = pb.solver;
        let results = par_map(jobs, |(m, l, load, init)| {
            let sol = solve_corrector(&ops[m], load, &solver, init.as_deref())?;
            let (e, g) = energy_and_field_gradient(&ops[m], load, &sol);
            Ok::<_, Error>((m, l, e, g, sol))
        });

        let mut energies: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut grads: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
        let mut cg_iterations = 0;
        for r in results {
            let (m, l, e, g, sol) = r?;
            cg_iterations += sol.iterations;
            energies[m].push(e);
            grads[m].push(g);
            self.warm[m][l] = Some(sol.displacement);
        }

        let mut costs = [0.0; 2];
        let mut dcost: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for m in 0..2 {
            let (j, dj) = match pb.cost.kind {
                CostKind::Pnorm => aggregate_cost(&energies[m], pb.cost.p)?,
                CostKind::Sum => sum_cost(&energies[m]),
            };
            costs[m] = j;
            dcost[m] = dj;
        }
        let (smax, d0, d1) = smooth_max_signed(costs[0], costs[1], pb.cost.q_max)?;
        let (perimeter, dper) = modica_mortola(mesh, v, self.eps)?;
        let total = smax + pb.cost.eta * perimeter;
        if !total.is_finite() {
            return Err(Error::Numerical(format!("objective is not finite: {total}")));
        }

        let mut gradient: Vec<f64> = dper.iter().map(|g| pb.cost.eta * g).collect();
        for (m, dm) in [d0, d1].into_iter().enumerate() {
            for (l, g) in grads[m].iter().enumerate() {
                let w = dm * dcost[m][l];
                for (out, gi) in gradient.iter_mut().zip(g) {
                    *out += w * gi;
                }
            }
        }

        let center_of_mass = self
            .moments
            .iter()
            .map(|m| m.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect();

        Ok(ObjectiveEvaluation {
            energies,
            costs,
            smooth_max: smax,
            perimeter,
            total,
            gradient,
            center_of_mass,
            cg_iterations,
        })
    }
}
