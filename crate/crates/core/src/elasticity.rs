//! Periodic cell problems of linear elasticity.
//!
//! For a phase `m`, a macroscopic strain `A` and the stiffness factor field
//! `f(v)`, the corrector `u` minimizes
//!
//! ```text
//! E(u) = 1/2 ∫ f(v) C (A + ε[u]) : (A + ε[u]) dx
//! ```
//!
//! over periodic displacements with zero mean. The operator is stored as a
//! fixed `3^d`-point block stencil per node (periodic neighbors are resolved
//! through the mesh), which is exactly the sparsity of trilinear elements on a
//! uniform grid. The zero-mean condition is enforced by projecting the CG
//! iterates, which removes the translation kernel.

use std::sync::Arc;

use crate::material::{IsotropicMaterial, SymTensor};
use crate::mesh::{PeriodicMesh, MAX_CORNERS};
use crate::phase_field::{InterpolationParams, Phase};
use crate::{Error, Result};

/// Macroscopic strain applied to the cell, e.g. `A11 = β e1⊗e1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadCase {
    label: String,
    strain: SymTensor,
    scale: f64,
}

/// Labels of the canonical compression and shear loads.
pub fn canonical_labels(dim: usize) -> &'static [&'static str] {
    if dim == 2 {
        &["A11", "A22", "A12"]
    } else {
        &["A11", "A22", "A33", "A12", "A13", "A23"]
    }
}

impl LoadCase {
    /// `scale` is the normalization factor `β` used for reported components.
    pub fn new(label: impl Into<String>, strain: SymTensor, scale: f64) -> Result<Self> {
        if strain.is_zero() {
            return Err(Error::param("load", "macroscopic strain must be nonzero"));
        }
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::param("beta", "load scale must be finite and nonzero"));
        }
        Ok(LoadCase {
            label: label.into(),
            strain,
            scale,
        })
    }

    /// `Aii = β ei⊗ei` and `Aij = β (ei⊗ej + ej⊗ei)`.
    pub fn canonical(label: &str, dim: usize, beta: f64) -> Result<Self> {
        let bad = || Error::param("load", format!("unknown load `{label}` for dimension {dim}"));
        let digits: Vec<usize> = label
            .strip_prefix('A')
            .ok_or_else(bad)?
            .chars()
            .map(|c| c.to_digit(10).map(|d| d as usize))
            .collect::<Option<_>>()
            .ok_or_else(bad)?;
        if digits.len() != 2 || !digits.iter().all(|&i| (1..=dim).contains(&i)) {
            return Err(bad());
        }
        let (i, j) = (digits[0] - 1, digits[1] - 1);
        if i > j {
            return Err(bad());
        }
        let strain = if i == j {
            let mut m = [[0.0; 3]; 3];
            m[i][i] = beta;
            SymTensor::from_matrix(dim, m)?
        } else {
            SymTensor::sym_pair(dim, i, j, beta)
        };
        Self::new(label, strain, beta)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn strain(&self) -> &SymTensor {
        &self.strain
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative preconditioned residual target.
    pub tol: f64,
    /// Iteration cap; `None` means ten times the number of unknowns.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: None,
        }
    }
}

/// Stiffness operator of one phase for a fixed phase field.
#[derive(Debug, Clone)]
pub struct PhaseOperator {
    mesh: Arc<PeriodicMesh>,
    material: IsotropicMaterial,
    phase: Phase,
    factors: Vec<f64>,
    dfactors: Vec<f64>,
    blocks: Vec<f64>,
    inv_diag: Vec<f64>,
}

/// Per-quadrature-point element matrices of the uniform material, weights included.
fn point_matrices(mesh: &PeriodicMesh, mat: &IsotropicMaterial) -> Vec<f64> {
    let dim = mesh.dim();
    let nc = mesh.corners();
    let nd = nc * dim;
    let quad = mesh.quadrature();
    let (mu, lambda) = (mat.mu(), mat.lambda());
    let mut out = vec![0.0; quad.len() * nd * nd];
    for q in 0..quad.len() {
        let w = quad.weight(q);
        let g = quad.grads(q);
        let k = &mut out[q * nd * nd..(q + 1) * nd * nd];
        for c in 0..nc {
            for cc in 0..nc {
                let gg: f64 = (0..dim).map(|t| g[c][t] * g[cc][t]).sum();
                for a in 0..dim {
                    for b in 0..dim {
                        let mut val = mu * g[c][b] * g[cc][a] + lambda * g[c][a] * g[cc][b];
                        if a == b {
                            val += mu * gg;
                        }
                        k[(c * dim + a) * nd + cc * dim + b] = w * val;
                    }
                }
            }
        }
    }
    out
}

/// Assemble the stiffness operator of `phase` for the nodal phase field `v`.
pub fn assemble_operator(
    mesh: &Arc<PeriodicMesh>,
    v: &[f64],
    material: &IsotropicMaterial,
    phase: Phase,
    interp: &InterpolationParams,
) -> Result<PhaseOperator> {
    if v.len() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_nodes(),
            actual: v.len(),
        });
    }
    let dim = mesh.dim();
    let nc = mesh.corners();
    let nd = nc * dim;
    let nq = mesh.quadrature().len();
    let slots = mesh.slots();
    let nel = mesh.num_elements();
    let kq = point_matrices(mesh, material);
    let mut ksum = vec![0.0; nd * nd];
    for q in 0..nq {
        for (s, k) in ksum.iter_mut().zip(&kq[q * nd * nd..(q + 1) * nd * nd]) {
            *s += k;
        }
    }

    let mut factors = vec![0.0; nel * nq];
    let mut dfactors = vec![0.0; nel * nq];
    let mut blocks = vec![0.0; mesh.num_nodes() * slots * dim * dim];
    let mut vq = vec![0.0; nq];
    let mut ke = vec![0.0; nd * nd];
    let mut slot_of = [[0usize; MAX_CORNERS]; MAX_CORNERS];
    for (c, row) in slot_of.iter_mut().enumerate().take(nc) {
        for (cc, s) in row.iter_mut().enumerate().take(nc) {
            *s = mesh.corner_slot(c, cc);
        }
    }

    for e in 0..nel {
        mesh.interpolate_element(v, e, &mut vq);
        let fe = &mut factors[e * nq..(e + 1) * nq];
        let dfe = &mut dfactors[e * nq..(e + 1) * nq];
        for q in 0..nq {
            let (f, df) = interp.factor_and_derivative(vq[q], phase);
            fe[q] = f;
            dfe[q] = df;
        }
        if fe.iter().all(|&f| f == fe[0]) {
            for (k, s) in ke.iter_mut().zip(&ksum) {
                *k = fe[0] * s;
            }
        } else {
            ke.fill(0.0);
            for q in 0..nq {
                let f = fe[q];
                for (k, s) in ke.iter_mut().zip(&kq[q * nd * nd..(q + 1) * nd * nd]) {
                    *k += f * s;
                }
            }
        }
        let nodes = mesh.element_nodes(e);
        for c in 0..nc {
            let row_node = nodes[c] as usize;
            for cc in 0..nc {
                let base = (row_node * slots + slot_of[c][cc]) * dim * dim;
                for a in 0..dim {
                    for b in 0..dim {
                        blocks[base + a * dim + b] += ke[(c * dim + a) * nd + cc * dim + b];
                    }
                }
            }
        }
    }

    let center = slots / 2;
    let mut inv_diag = vec![0.0; mesh.num_nodes() * dim];
    for node in 0..mesh.num_nodes() {
        let base = (node * slots + center) * dim * dim;
        for a in 0..dim {
            let d = blocks[base + a * dim + a];
            if d <= 0.0 {
                return Err(Error::Numerical(format!("non-positive diagonal at node {node}")));
            }
            inv_diag[node * dim + a] = 1.0 / d;
        }
    }

    Ok(PhaseOperator {
        mesh: mesh.clone(),
        material: *material,
        phase,
        factors,
        dfactors,
        blocks,
        inv_diag,
    })
}

impl PhaseOperator {
    pub fn mesh(&self) -> &Arc<PeriodicMesh> {
        &self.mesh
    }

    pub fn material(&self) -> &IsotropicMaterial {
        &self.material
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Number of displacement unknowns, `d * (N-1)^d`.
    pub fn num_dofs(&self) -> usize {
        self.mesh.num_nodes() * self.mesh.dim()
    }

    /// Stiffness factor at quadrature point `q` of element `e`.
    #[inline]
    pub fn factor(&self, e: usize, q: usize) -> f64 {
        self.factors[e * self.mesh.quadrature().len() + q]
    }

    /// `y = K x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self.mesh.dim() {
            2 => self.apply_dim::<2>(x, y),
            _ => self.apply_dim::<3>(x, y),
        }
    }

    fn apply_dim<const D: usize>(&self, x: &[f64], y: &mut [f64]) {
        let slots = self.mesh.slots();
        let nbr = self.mesh.neighbor_table();
        let bs = D * D;
        for (node, out) in y.chunks_exact_mut(D).enumerate() {
            let mut acc = [0.0; D];
            let row = &self.blocks[node * slots * bs..(node + 1) * slots * bs];
            let nb = &nbr[node * slots..(node + 1) * slots];
            for (s, &j) in nb.iter().enumerate() {
                let blk = &row[s * bs..(s + 1) * bs];
                let xj = &x[j as usize * D..j as usize * D + D];
                for a in 0..D {
                    let mut t = 0.0;
                    for b in 0..D {
                        t += blk[a * D + b] * xj[b];
                    }
                    acc[a] += t;
                }
            }
            out.copy_from_slice(&acc);
        }
    }

    /// Dense copy of the operator (small meshes only).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.num_dofs();
        let dim = self.mesh.dim();
        let slots = self.mesh.slots();
        let mut dense = vec![0.0; n * n];
        for node in 0..self.mesh.num_nodes() {
            for s in 0..slots {
                let j = self.mesh.neighbor(node, s);
                let base = (node * slots + s) * dim * dim;
                for a in 0..dim {
                    for b in 0..dim {
                        dense[(node * dim + a) * n + j * dim + b] += self.blocks[base + a * dim + b];
                    }
                }
            }
        }
        dense
    }

    /// Right-hand side `f_j = -∫ f(v) C A : ε[φ_j]` of the corrector equation.
    pub fn load_vector(&self, load: &LoadCase) -> Result<Vec<f64>> {
        let mesh = &self.mesh;
        let dim = mesh.dim();
        if load.strain().dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: load.strain().dim(),
            });
        }
        let quad = mesh.quadrature();
        let nq = quad.len();
        let sigma = self.material.stress(load.strain());
        let mut rhs = vec![0.0; self.num_dofs()];
        for e in 0..mesh.num_elements() {
            let nodes = mesh.element_nodes(e);
            for q in 0..nq {
                let wf = quad.weight(q) * self.factors[e * nq + q];
                let g = quad.grads(q);
                for (c, &n) in nodes.iter().enumerate() {
                    for a in 0..dim {
                        let mut t = 0.0;
                        for k in 0..dim {
                            t += sigma.get(a, k) * g[c][k];
                        }
                        rhs[n as usize * dim + a] -= wf * t;
                    }
                }
            }
        }
        Ok(rhs)
    }

    /// Total strain `A + ε[u]` at quadrature point `q` of element `e`.
    pub fn strain(&self, load: &LoadCase, u: &[f64], e: usize, q: usize) -> SymTensor {
        let mesh = &self.mesh;
        let dim = mesh.dim();
        let g = mesh.quadrature().grads(q);
        let mut grad_u = [[0.0; 3]; 3];
        for (c, &n) in mesh.element_nodes(e).iter().enumerate() {
            let un = &u[n as usize * dim..n as usize * dim + dim];
            for i in 0..dim {
                for j in 0..dim {
                    grad_u[i][j] += un[i] * g[c][j];
                }
            }
        }
        let mut eps = *load.strain();
        let m = eps.raw_mut();
        for i in 0..dim {
            for j in 0..dim {
                m[i][j] += 0.5 * (grad_u[i][j] + grad_u[j][i]);
            }
        }
        eps
    }

    /// Energy `1/2 ∫ f C (A+ε[u]):(A+ε[u])`, optionally with its partial derivative in `v`.
    fn energy_pass(&self, load: &LoadCase, u: &[f64], with_gradient: bool) -> (f64, Option<Vec<f64>>) {
        let mesh = &self.mesh;
        let quad = mesh.quadrature();
        let nq = quad.len();
        let mut energy = 0.0;
        let mut grad = with_gradient.then(|| vec![0.0; mesh.num_nodes()]);
        for e in 0..mesh.num_elements() {
            let nodes = mesh.element_nodes(e);
            for q in 0..nq {
                let eps = self.strain(load, u, e, q);
                let density = self.material.energy_density(&eps);
                let w = quad.weight(q);
                energy += 0.5 * w * self.factors[e * nq + q] * density;
                if let Some(grad) = grad.as_mut() {
                    let df = self.dfactors[e * nq + q];
                    if df != 0.0 {
                        let scale = 0.5 * w * df * density;
                        for (phi, &n) in quad.values(q).iter().zip(nodes) {
                            grad[n as usize] += scale * phi;
                        }
                    }
                }
            }
        }
        (energy, grad)
    }

    /// Energy of an arbitrary periodic displacement (not necessarily the minimizer).
    pub fn energy_of(&self, load: &LoadCase, u: &[f64]) -> f64 {
        self.energy_pass(load, u, false).0
    }
}

/// Solved corrector for one (phase, load) pair.
#[derive(Debug, Clone)]
pub struct CorrectorSolution {
    pub displacement: Vec<f64>,
    pub energy: f64,
    pub iterations: usize,
    pub residual: f64,
}

fn project_mean(x: &mut [f64], dim: usize) {
    let nodes = x.len() / dim;
    let mut mean = [0.0; 3];
    for chunk in x.chunks_exact(dim) {
        for a in 0..dim {
            mean[a] += chunk[a];
        }
    }
    for m in mean.iter_mut() {
        *m /= nodes as f64;
    }
    for chunk in x.chunks_exact_mut(dim) {
        for a in 0..dim {
            chunk[a] -= mean[a];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned CG on the zero-mean subspace. `x` holds the initial
/// guess and receives the solution. Returns (iterations, relative residual).
pub(crate) fn pcg(
    op: &PhaseOperator,
    rhs: &[f64],
    x: &mut [f64],
    opts: &SolverOptions,
    mut observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<(usize, f64)> {
    let dim = op.mesh.dim();
    let n = op.num_dofs();
    let max_iter = opts.max_iter.unwrap_or(10 * n);
    let mut b = rhs.to_vec();
    project_mean(&mut b, dim);
    project_mean(x, dim);

    let bnorm = b
        .iter()
        .zip(&op.inv_diag)
        .map(|(r, d)| r * r * d)
        .sum::<f64>()
        .sqrt();
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok((0, 0.0));
    }

    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(&b) {
        *ri = bi - *ri;
    }
    project_mean(&mut r, dim);
    let mut z: Vec<f64> = r.iter().zip(&op.inv_diag).map(|(a, d)| a * d).collect();
    project_mean(&mut z, dim);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    if let Some(obs) = observer.as_mut() {
        obs(0, x);
    }
    let mut iter = 0;
    loop {
        let rel = rz.max(0.0).sqrt() / bnorm;
        if rel <= opts.tol {
            return Ok((iter, rel));
        }
        if iter >= max_iter {
            return Err(Error::NotConverged {
                iterations: iter,
                residual: rel,
            });
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Numerical(format!("CG breakdown: p·Kp = {pap:e}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * op.inv_diag[i];
        }
        project_mean(&mut z, dim);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iter += 1;
        if let Some(obs) = observer.as_mut() {
            obs(iter, x);
        }
    }
}

/// Solve the corrector problem, optionally warm-started from `initial`.
pub fn solve_corrector(
    op: &PhaseOperator,
    load: &LoadCase,
    opts: &SolverOptions,
    initial: Option<&[f64]>,
) -> Result<CorrectorSolution> {
    solve_corrector_observed(op, load, opts, initial, None)
}

/// As [`solve_corrector`], calling `observer(iteration, iterate)` after every CG step.
pub fn solve_corrector_observed(
    op: &PhaseOperator,
    load: &LoadCase,
    opts: &SolverOptions,
    initial: Option<&[f64]>,
    observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<CorrectorSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", "solver tolerance must be positive"));
    }
    let rhs = op.load_vector(load)?;
    let mut x = match initial {
        Some(u) if u.len() == op.num_dofs() => u.to_vec(),
        Some(u) => {
            return Err(Error::DimensionMismatch {
                expected: op.num_dofs(),
                actual: u.len(),
            })
        }
        None => vec![0.0; op.num_dofs()],
    };
    let (iterations, residual) = pcg(op, &rhs, &mut x, opts, observer)?;
    let energy = op.energy_of(load, &x);
    Ok(CorrectorSolution {
        displacement: x,
        energy,
        iterations,
        residual,
    })
}

/// Energy of the solved corrector and its derivative with respect to nodal `v`.
///
/// Only the explicit dependence through the stiffness factor contributes: the
/// corrector minimizes the energy, so its own variation drops out.
pub fn energy_and_field_gradient(
    op: &PhaseOperator,
    load: &LoadCase,
    corrector: &CorrectorSolution,
) -> (f64, Vec<f64>) {
    let (energy, grad) = op.energy_pass(load, &corrector.displacement, true);
    (energy, grad.unwrap_or_default())
}
