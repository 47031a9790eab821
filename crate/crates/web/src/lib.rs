//! Browser bindings: a small 2D optimization, the effective table of the
//! current design, and the interface-energy calibration curve.

use std::sync::Arc;

use wasm_bindgen::prelude::*;

use cellsplit::elasticity::{LoadCase, SolverOptions};
use cellsplit::homogenize::effective_table;
use cellsplit::material::IsotropicMaterial;
use cellsplit::mesh::PeriodicMesh;
use cellsplit::objective::{CostParams, Objective, Problem};
use cellsplit::optimizer::{minimize, random_field, FeasibleSet, OptimizerConfig};
use cellsplit::phase_field::{modica_mortola, planar_layers, Interpolation, InterpolationParams};

fn js_err(e: cellsplit::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

const LOADS: [&str; 3] = ["A11", "A22", "A12"];

fn problem(young0: f64, young1: f64, eta: f64) -> Result<Problem, cellsplit::Error> {
    let loads: Vec<LoadCase> = LOADS[..2]
        .iter()
        .map(|l| LoadCase::canonical(l, 2, -0.25))
        .collect::<Result<_, _>>()?;
    Ok(Problem {
        dim: 2,
        materials: [
            IsotropicMaterial::from_young_poisson(young0, 0.25)?,
            IsotropicMaterial::from_young_poisson(young1, 0.25)?,
        ],
        loads: [loads.clone(), loads],
        cost: CostParams {
            eta,
            ..CostParams::default()
        },
        interp: InterpolationParams::with_kind(1e-4, Interpolation::Quadratic)?,
        solver: SolverOptions::default(),
    })
}

/// Two-compression optimization on a periodic square, advanced a few
/// iterations per call so the page can redraw in between.
#[wasm_bindgen]
pub struct Optimization {
    objective: Objective,
    set: FeasibleSet,
    field: Vec<f64>,
    value: f64,
    iterations: usize,
}

#[wasm_bindgen]
impl Optimization {
    #[wasm_bindgen(constructor)]
    pub fn new(nodes: usize, seed: u64, young0: f64, young1: f64, eta: f64) -> Result<Optimization, JsValue> {
        let mesh = Arc::new(PeriodicMesh::new(2, nodes).map_err(js_err)?);
        let eps = 2.0 * mesh.spacing();
        let pb = problem(young0, young1, eta).map_err(js_err)?;
        let mut objective = Objective::new(mesh.clone(), pb, eps).map_err(js_err)?;
        let set = FeasibleSet::for_mesh(&mesh, -1.25, 1.25).map_err(js_err)?;
        let field = set.project(&random_field(mesh.num_nodes(), seed));
        let value = objective.evaluate(&field).map_err(js_err)?.total;
        Ok(Optimization {
            objective,
            set,
            field,
            value,
            iterations: 0,
        })
    }

    /// Run up to `iterations` descent steps; returns the objective value.
    pub fn step(&mut self, iterations: usize) -> Result<f64, JsValue> {
        let config = OptimizerConfig {
            max_iter: iterations,
            ..OptimizerConfig::default()
        };
        let record = minimize(&self.field, &mut self.objective, &self.set, &config).map_err(js_err)?;
        self.iterations += record.log.len() - 1;
        self.field = record.field;
        self.value = record.value;
        Ok(self.value)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn cells_per_axis(&self) -> usize {
        self.objective.mesh().cells_per_axis()
    }

    /// Nodal values, first axis fastest.
    pub fn field(&self) -> Vec<f64> {
        self.field.clone()
    }

    /// `[phase0: C1111, C2222, C1212, volume, phase1: ...]` of the current design.
    pub fn table(&self, young0: f64, young1: f64) -> Result<Vec<f64>, JsValue> {
        effective_summary(self.objective.mesh(), &self.field, young0, young1)
    }
}

fn effective_summary(mesh: &Arc<PeriodicMesh>, field: &[f64], young0: f64, young1: f64) -> Result<Vec<f64>, JsValue> {
    let pb = problem(young0, young1, 0.0).map_err(js_err)?;
    let loads: Vec<LoadCase> = LOADS
        .iter()
        .map(|l| LoadCase::canonical(l, 2, -0.25))
        .collect::<Result<_, _>>()
        .map_err(js_err)?;
    let t = effective_table(mesh, field, &pb.materials, &pb.interp, &loads, &pb.solver).map_err(js_err)?;
    let mut out = Vec::with_capacity(8);
    for m in 0..2 {
        out.extend(t.rows[m].iter().map(|e| e.normalized));
        out.push(t.volumes[m]);
    }
    Ok(out)
}

/// Effective table of an arbitrary nodal field on an `n x n` periodic grid.
#[wasm_bindgen]
pub fn effective_table_2d(field: Vec<f64>, nodes: usize, young0: f64, young1: f64) -> Result<Vec<f64>, JsValue> {
    let mesh = Arc::new(PeriodicMesh::new(2, nodes).map_err(js_err)?);
    if field.len() != mesh.num_nodes() {
        return Err(JsValue::from_str("field length does not match the grid"));
    }
    effective_summary(&mesh, &field, young0, young1)
}

/// Interface energy of two planar `tanh` interfaces for each width factor
/// `eps / h` in `factors`; the sharp-interface value is 2.
#[wasm_bindgen]
pub fn interface_energy_curve(nodes: usize, factors: Vec<f64>) -> Result<Vec<f64>, JsValue> {
    let mesh = PeriodicMesh::new(2, nodes).map_err(js_err)?;
    factors
        .iter()
        .map(|&k| {
            let eps = k * mesh.spacing();
            let v = planar_layers(&mesh, eps);
            modica_mortola(&mesh, &v, eps).map(|(l, _)| l).map_err(js_err)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interface_curve_near_two() {
        let l = interface_energy_curve(33, vec![2.0]).unwrap();
        assert!((l[0] - 2.0).abs() < 0.1, "{l:?}");
    }

    #[test]
    fn optimization_descends() {
        let mut opt = Optimization::new(9, 3, 10.0, 10.0, 2.0).unwrap();
        let before = opt.value();
        let after = opt.step(5).unwrap();
        assert!(after <= before);
        assert_eq!(opt.field().len(), 64);
        assert_eq!(opt.table(10.0, 10.0).unwrap().len(), 8);
    }

    #[test]
    fn uniform_table() {
        let t = effective_table_2d(vec![1.0; 16], 5, 10.0, 10.0).unwrap();
        assert!((t[0] - 12.0).abs() < 1e-8);
        assert!((t[3] - 1.0).abs() < 1e-12);
    }
}
