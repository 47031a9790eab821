//! Phase-field representation of the two-phase splitting.
//!
//! The nodal field `v` is close to `+1` in phase 0 and `-1` in phase 1. The
//! material fraction of phase 0 is `(1 + v) / 2` clamped to `[0, 1]`; the soft
//! floor `delta` keeps each phase's elasticity problem coercive on the whole
//! cell.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mesh::PeriodicMesh;
use crate::{Error, Result};

/// Which of the two phases an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Zero,
    One,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::Zero, Phase::One];

    pub fn index(self) -> usize {
        match self {
            Phase::Zero => 0,
            Phase::One => 1,
        }
    }

    pub fn other(self) -> Phase {
        match self {
            Phase::Zero => Phase::One,
            Phase::One => Phase::Zero,
        }
    }

    /// `+1` for phase 0, `-1` for phase 1 (sign of `d chi / d v`).
    fn sign(self) -> f64 {
        match self {
            Phase::Zero => 1.0,
            Phase::One => -1.0,
        }
    }
}

/// Shape of the fraction-to-stiffness map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// `chi + delta (1 - chi)`.
    #[default]
    Linear,
    /// `chi^2 + delta (1 - chi^2)`.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationParams {
    delta: f64,
    kind: Interpolation,
}

impl InterpolationParams {
    pub fn new(delta: f64) -> Result<Self> {
        Self::with_kind(delta, Interpolation::Linear)
    }

    pub fn with_kind(delta: f64, kind: Interpolation) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param("delta", format!("must lie in (0, 1), got {delta}")));
        }
        Ok(InterpolationParams { delta, kind })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn kind(&self) -> Interpolation {
        self.kind
    }

    /// Stiffness factor and its derivative with respect to `v`.
    #[inline]
    pub fn factor_and_derivative(&self, v: f64, phase: Phase) -> (f64, f64) {
        let chi = fraction(v, phase);
        let dchi = if v > -1.0 && v < 1.0 { 0.5 * phase.sign() } else { 0.0 };
        match self.kind {
            Interpolation::Linear => (chi + self.delta * (1.0 - chi), (1.0 - self.delta) * dchi),
            Interpolation::Quadratic => {
                let c2 = chi * chi;
                (c2 + self.delta * (1.0 - c2), (1.0 - self.delta) * 2.0 * chi * dchi)
            }
        }
    }
}

impl Default for InterpolationParams {
    fn default() -> Self {
        InterpolationParams {
            delta: 1e-4,
            kind: Interpolation::Linear,
        }
    }
}

/// Material fraction `chi^m(v)` of `phase`.
#[inline]
pub fn fraction(v: f64, phase: Phase) -> f64 {
    let chi0 = (0.5 * (1.0 + v)).clamp(0.0, 1.0);
    match phase {
        Phase::Zero => chi0,
        Phase::One => 1.0 - chi0,
    }
}

/// `chi^m(v) + delta (1 - chi^m(v))` for the default linear interpolation.
#[inline]
pub fn stiffness_factor(v: f64, phase: Phase, params: &InterpolationParams) -> f64 {
    params.factor_and_derivative(v, phase).0
}

/// Double-well potential `9/16 (v^2 - 1)^2`.
#[inline]
pub fn double_well(v: f64) -> f64 {
    let s = v * v - 1.0;
    9.0 / 16.0 * s * s
}

#[inline]
fn double_well_derivative(v: f64) -> f64 {
    9.0 / 4.0 * v * (v * v - 1.0)
}

/// Nodal phase field on a periodic mesh.
#[derive(Debug, Clone)]
pub struct PhaseField {
    mesh: Arc<PeriodicMesh>,
    values: Vec<f64>,
}

impl PhaseField {
    pub fn new(mesh: Arc<PeriodicMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_nodes(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("phase field value at node {i} is not finite")));
        }
        Ok(PhaseField { mesh, values })
    }

    pub fn constant(mesh: Arc<PeriodicMesh>, value: f64) -> Self {
        let values = vec![value; mesh.num_nodes()];
        PhaseField { mesh, values }
    }

    pub fn from_fn(mesh: Arc<PeriodicMesh>, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = mesh.nodal_from_fn(f);
        PhaseField { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<PeriodicMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn negated(&self) -> Self {
        PhaseField {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Modica–Mortola energy `1/2 ∫ eps |∇v|^2 + Ψ(v)/eps` and its exact nodal gradient.
pub fn modica_mortola(mesh: &PeriodicMesh, values: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", format!("interface width must be positive, got {eps}")));
    }
    if values.len() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_nodes(),
            actual: values.len(),
        });
    }
    let quad = mesh.quadrature();
    let dim = mesh.dim();
    let corners = mesh.corners();
    let mut energy = 0.0;
    let mut grad = vec![0.0; values.len()];
    let mut local = [0.0; crate::mesh::MAX_CORNERS];
    let mut local_grad = [0.0; crate::mesh::MAX_CORNERS];
    for e in 0..mesh.num_elements() {
        let nodes = mesh.element_nodes(e);
        for (c, &n) in nodes.iter().enumerate() {
            local[c] = values[n as usize];
        }
        local_grad[..corners].fill(0.0);
        for q in 0..quad.len() {
            let w = quad.weight(q);
            let phi = quad.values(q);
            let dphi = quad.grads(q);
            let mut v = 0.0;
            let mut gv = [0.0; 3];
            for c in 0..corners {
                v += phi[c] * local[c];
                for k in 0..dim {
                    gv[k] += dphi[c][k] * local[c];
                }
            }
            let g2: f64 = gv[..dim].iter().map(|x| x * x).sum();
            energy += 0.5 * w * (eps * g2 + double_well(v) / eps);
            let dpsi = double_well_derivative(v) / eps;
            for c in 0..corners {
                let mut dot = 0.0;
                for k in 0..dim {
                    dot += gv[k] * dphi[c][k];
                }
                local_grad[c] += w * (eps * dot + 0.5 * dpsi * phi[c]);
            }
        }
        for (c, &n) in nodes.iter().enumerate() {
            grad[n as usize] += local_grad[c];
        }
    }
    Ok((energy, grad))
}

/// Two planar interfaces at `x_1 = 1/4` and `x_1 = 3/4` with the optimal
/// profile `tanh(3 d / (4 eps))`, `d` the signed distance (positive inside).
pub fn planar_layers(mesh: &PeriodicMesh, eps: f64) -> Vec<f64> {
    mesh.nodal_from_fn(|x| (0.75 * (0.25 - (x[0] - 0.5).abs()) / eps).tanh())
}

/// Splitting by the level set `cos 2πx + cos 2πy + cos 2πz = 0`, mollified to
/// a `tanh` profile of width `eps` using the first-order distance `φ / |∇φ|`.
pub fn schwarz_p(mesh: &PeriodicMesh, eps: f64) -> Vec<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let dim = mesh.dim();
    mesh.nodal_from_fn(|x| {
        let phi: f64 = x[..dim].iter().map(|&t| (tau * t).cos()).sum();
        let grad = tau * x[..dim].iter().map(|&t| (tau * t).sin().powi(2)).sum::<f64>().sqrt();
        (0.75 * phi / (eps * grad.max(1e-3))).tanh()
    })
}
