//! Effective stiffness of each phase along the configured loads.
//!
//! For a load `A` the homogenized tensor satisfies
//! `C* A : A = min_u ∫ f(v) C (A + ε[u]) : (A + ε[u])`, i.e. twice the corrector
//! energy. Reported components are normalized by `β^-2`.

use std::sync::Arc;

use crate::elasticity::{
    assemble_operator, solve_corrector, CorrectorSolution, LoadCase, PhaseOperator, SolverOptions,
};
use crate::material::IsotropicMaterial;
use crate::mesh::PeriodicMesh;
use crate::phase_field::{fraction, InterpolationParams, Phase};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveEntry {
    pub label: String,
    /// `C* A : A`.
    pub raw: f64,
    /// `β^-2 C* A : A`.
    pub normalized: f64,
}

/// Effective components of both phases plus their volume fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTensor {
    pub rows: [Vec<EffectiveEntry>; 2],
    pub volumes: [f64; 2],
}

impl EffectiveTensor {
    pub fn component(&self, phase: Phase, label: &str) -> Option<f64> {
        self.rows[phase.index()]
            .iter()
            .find(|e| e.label == label)
            .map(|e| e.normalized)
    }
}

pub(crate) fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

fn normalized(load: &LoadCase, energy: f64) -> EffectiveEntry {
    let raw = 2.0 * energy;
    EffectiveEntry {
        label: load.label().to_string(),
        raw,
        normalized: raw / (load.scale() * load.scale()),
    }
}

/// `β^-2 C* A : A` for one phase and load.
pub fn effective_component(
    mesh: &Arc<PeriodicMesh>,
    v: &[f64],
    material: &IsotropicMaterial,
    phase: Phase,
    interp: &InterpolationParams,
    load: &LoadCase,
    opts: &SolverOptions,
) -> Result<f64> {
    let op = assemble_operator(mesh, v, material, phase, interp)?;
    let sol = solve_corrector(&op, load, opts, None)?;
    Ok(normalized(load, sol.energy).normalized)
}

/// Effective components of both phases for every load.
pub fn effective_table(
    mesh: &Arc<PeriodicMesh>,
    v: &[f64],
    materials: &[IsotropicMaterial; 2],
    interp: &InterpolationParams,
    loads: &[LoadCase],
    opts: &SolverOptions,
) -> Result<EffectiveTensor> {
    for (i, a) in loads.iter().enumerate() {
        if loads[..i].iter().any(|b| b.label() == a.label() || b.strain() == a.strain()) {
            return Err(Error::param("loads", format!("duplicate load `{}`", a.label())));
        }
    }
    let ops = Phase::BOTH
        .iter()
        .map(|&p| assemble_operator(mesh, v, &materials[p.index()], p, interp))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, &LoadCase)> = (0..2)
        .flat_map(|p| loads.iter().map(move |l| (p, l)))
        .collect();
    let results = par_map(jobs, |(p, load)| {
        solve_corrector(&ops[p], load, opts, None).map(|s| normalized(load, s.energy))
    });
    let mut rows: [Vec<EffectiveEntry>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in results.into_iter().enumerate() {
        rows[i / loads.len()].push(r?);
    }
    let (v0, v1) = volume_fractions(mesh, v);
    Ok(EffectiveTensor {
        rows,
        volumes: [v0, v1],
    })
}

/// `(∫ chi^0(v), ∫ chi^1(v))` with Simpson quadrature; the two sum to one.
pub fn volume_fractions(mesh: &PeriodicMesh, v: &[f64]) -> (f64, f64) {
    let v0 = mesh.integrate_nodal(v, |x| fraction(x, Phase::Zero));
    (v0, 1.0 - v0)
}

/// Bilinear form from quadratic values: `C*(A,B) = (Q(A+B) - Q(A) - Q(B)) / 2`.
pub fn polarize(q_sum: f64, q_a: f64, q_b: f64) -> f64 {
    0.5 * (q_sum - q_a - q_b)
}

/// `∫ f(v) C (A + ε[u_A]) : (B + ε[u_B])` for two solved correctors.
pub fn cross_energy(
    op: &PhaseOperator,
    load_a: &LoadCase,
    sol_a: &CorrectorSolution,
    load_b: &LoadCase,
    sol_b: &CorrectorSolution,
) -> f64 {
    let mesh = op.mesh();
    let quad = mesh.quadrature();
    let mut total = 0.0;
    for e in 0..mesh.num_elements() {
        for q in 0..quad.len() {
            let ea = op.strain(load_a, &sol_a.displacement, e, q);
            let eb = op.strain(load_b, &sol_b.displacement, e, q);
            total += quad.weight(q) * op.factor(e, q) * op.material().stress(&ea).ddot(&eb);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(dim: usize, n: usize) -> (Arc<PeriodicMesh>, IsotropicMaterial, InterpolationParams) {
        (
            Arc::new(PeriodicMesh::new(dim, n).unwrap()),
            IsotropicMaterial::from_young_poisson(10.0, 0.25).unwrap(),
            InterpolationParams::new(1e-4).unwrap(),
        )
    }

    #[test]
    fn uniform_components() {
        let (mesh, mat, ip) = setup(3, 5);
        let opts = SolverOptions::default();
        let a11 = LoadCase::canonical("A11", 3, -0.25).unwrap();
        let one = vec![1.0; mesh.num_nodes()];
        let c = effective_component(&mesh, &one, &mat, Phase::Zero, &ip, &a11, &opts).unwrap();
        assert!((c - 12.0).abs() < 1e-10);
        let minus = vec![-1.0; mesh.num_nodes()];
        let c = effective_component(&mesh, &minus, &mat, Phase::Zero, &ip, &a11, &opts).unwrap();
        assert!((c - 1.2e-3).abs() < 1e-12);
    }

    #[test]
    fn volume_examples() {
        let (mesh, _, _) = setup(3, 5);
        let (a, b) = volume_fractions(&mesh, &vec![1.0; mesh.num_nodes()]);
        assert!((a - 1.0).abs() < 1e-13 && b.abs() < 1e-13);
        let (a, b) = volume_fractions(&mesh, &vec![0.0; mesh.num_nodes()]);
        assert!((a - 0.5).abs() < 1e-14 && (b - 0.5).abs() < 1e-14);
    }

    #[test]
    fn table_swap_symmetry() {
        let (mesh, mat, ip) = setup(2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = v.iter().map(|x| -x).collect();
        let loads: Vec<LoadCase> = ["A11", "A22", "A12"]
            .iter()
            .map(|l| LoadCase::canonical(l, 2, -0.25).unwrap())
            .collect();
        let opts = SolverOptions { tol: 1e-12, max_iter: None };
        let t = effective_table(&mesh, &v, &[mat, mat], &ip, &loads, &opts).unwrap();
        let s = effective_table(&mesh, &w, &[mat, mat], &ip, &loads, &opts).unwrap();
        for (a, b) in t.rows[1].iter().zip(&s.rows[0]) {
            assert!((a.normalized - b.normalized).abs() < 1e-10 * a.normalized);
        }
        assert!((t.volumes[0] - s.volumes[1]).abs() < 1e-14);
    }

    #[test]
    fn zero_field_rows_match() {
        let (mesh, mat, ip) = setup(3, 5);
        let loads: Vec<LoadCase> = ["A11", "A23"]
            .iter()
            .map(|l| LoadCase::canonical(l, 3, -0.25).unwrap())
            .collect();
        let t = effective_table(&mesh, &vec![0.0; mesh.num_nodes()], &[mat, mat], &ip, &loads, &SolverOptions::default())
            .unwrap();
        assert_eq!(t.rows[0], t.rows[1]);
        assert!((t.volumes[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn duplicate_loads_rejected() {
        let (mesh, mat, ip) = setup(2, 5);
        let l = LoadCase::canonical("A11", 2, 1.0).unwrap();
        let r = effective_table(&mesh, &vec![0.0; mesh.num_nodes()], &[mat, mat], &ip, &[l.clone(), l], &SolverOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn voigt_bound_delta_monotone_and_beta_invariance() {
        let (mesh, mat, _) = setup(3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let opts = SolverOptions { tol: 1e-11, max_iter: None };
        for _ in 0..3 {
            let v: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
            for label in ["A11", "A12"] {
                let load = LoadCase::canonical(label, 3, -0.25).unwrap();
                let lo = InterpolationParams::new(1e-4).unwrap();
                let hi = InterpolationParams::new(1e-2).unwrap();
                let c_lo = effective_component(&mesh, &v, &mat, Phase::Zero, &lo, &load, &opts).unwrap();
                let c_hi = effective_component(&mesh, &v, &mat, Phase::Zero, &hi, &load, &opts).unwrap();
                assert!(c_hi >= c_lo);
                let op = assemble_operator(&mesh, &v, &mat, Phase::Zero, &lo).unwrap();
                let voigt = 2.0 * op.energy_of(&load, &vec![0.0; op.num_dofs()]) / 0.0625;
                assert!(c_lo <= voigt * (1.0 + 1e-12));
                for beta in [0.25, 0.5] {
                    let scaled = LoadCase::canonical(label, 3, beta).unwrap();
                    let c = effective_component(&mesh, &v, &mat, Phase::Zero, &lo, &scaled, &opts).unwrap();
                    assert!((c - c_lo).abs() < 1e-8 * c_lo);
                }
            }
        }
    }

    #[test]
    fn polarization_matches_cross_energy() {
        let (mesh, mat, ip) = setup(2, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let v: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let op = assemble_operator(&mesh, &v, &mat, Phase::Zero, &ip).unwrap();
        let opts = SolverOptions { tol: 1e-12, max_iter: None };
        let a = LoadCase::canonical("A11", 2, 1.0).unwrap();
        let b = LoadCase::canonical("A12", 2, 1.0).unwrap();
        let ab = LoadCase::new("A11+A12", a.strain().add(b.strain()), 1.0).unwrap();
        let sa = solve_corrector(&op, &a, &opts, None).unwrap();
        let sb = solve_corrector(&op, &b, &opts, None).unwrap();
        let sab = solve_corrector(&op, &ab, &opts, None).unwrap();
        let pol = polarize(2.0 * sab.energy, 2.0 * sa.energy, 2.0 * sb.energy);
        let direct = cross_energy(&op, &a, &sa, &b, &sb);
        let swapped = cross_energy(&op, &b, &sb, &a, &sa);
        assert!((pol - direct).abs() < 1e-8 * (1.0 + direct.abs()));
        assert!((direct - swapped).abs() < 1e-10 * (1.0 + direct.abs()));
    }
}
