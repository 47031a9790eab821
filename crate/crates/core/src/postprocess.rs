//! Stress postprocessing and periodic tiling.

use std::sync::Arc;

use crate::elasticity::{assemble_operator, solve_corrector, CorrectorSolution, LoadCase, PhaseOperator};
use crate::material::SymTensor;
use crate::mesh::PeriodicMesh;
use crate::objective::Problem;
use crate::phase_field::Phase;
use crate::Result;

/// `sqrt(3/2 s : s)` with `s` the deviator of `sigma`.
pub fn von_mises(sigma: &SymTensor) -> f64 {
    let s = sigma.deviator();
    (1.5 * s.ddot(&s)).sqrt()
}

/// Per-cell von Mises stress of `f(v) C (A + ε[u])`, averaged over the
/// Simpson points of each cell with the quadrature weights.
pub fn von_mises_cells(op: &PhaseOperator, load: &LoadCase, corrector: &CorrectorSolution) -> Vec<f64> {
    let mesh = op.mesh();
    let quad = mesh.quadrature();
    let measure: f64 = quad.weights().iter().sum();
    (0..mesh.num_elements())
        .map(|e| {
            let mut acc = 0.0;
            for q in 0..quad.len() {
                let eps = op.strain(load, &corrector.displacement, e, q);
                let sigma = op.material().stress(&eps).scaled(op.factor(e, q));
                acc += quad.weight(q) * von_mises(&sigma);
            }
            acc / measure
        })
        .collect()
}

/// Named per-cell von Mises fields for every phase and load of `problem`,
/// each followed by its `log10` companion (floored at `1e-300`).
pub fn von_mises_fields(mesh: &Arc<PeriodicMesh>, v: &[f64], problem: &Problem) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for phase in Phase::BOTH {
        let m = phase.index();
        let op = assemble_operator(mesh, v, &problem.materials[m], phase, &problem.interp)?;
        for load in &problem.loads[m] {
            let sol = solve_corrector(&op, load, &problem.solver, None)?;
            let vm = von_mises_cells(&op, load, &sol);
            let log: Vec<f64> = vm.iter().map(|x| x.max(1e-300).log10()).collect();
            out.push((format!("von_mises_phase{m}_{}", load.label()), vm));
            out.push((format!("log10_von_mises_phase{m}_{}", load.label()), log));
        }
    }
    Ok(out)
}

/// Repeat a canonical grid field `tile` times along every axis.
///
/// Input and output are ordered with the first axis fastest; the result has
/// `(tile * (N-1))^d` entries.
pub fn tile_field(mesh: &PeriodicMesh, values: &[f64], tile: usize) -> Vec<f64> {
    let m = mesh.cells_per_axis();
    let dim = mesh.dim();
    let side = m * tile;
    let total = side.pow(dim as u32);
    (0..total)
        .map(|i| {
            let mut idx = [0isize; 3];
            let mut rest = i;
            for x in idx.iter_mut().take(dim) {
                *x = (rest % side) as isize;
                rest /= side;
            }
            values[mesh.wrap(idx)]
        })
        .collect()
}
