//! Projected first-order minimization over nodal phase fields.
//!
//! The feasible set is the box `[lower, upper]^n` intersected with the
//! linear center-of-mass constraints `∫ v (x_i - 1/2) dx = 0`. Projection onto
//! that set is exact: the Lagrange multipliers of the moment constraints are
//! found with a small semismooth Newton iteration on `d` unknowns.
//!
//! Steps are accepted with an Armijo test along the projection arc, so the
//! accepted objective values never increase.

use std::sync::Arc;
use std::time::Duration;
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;
#[cfg(target_arch = "wasm32")]
use web_time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::homogenize::{effective_table, EffectiveTensor};
use crate::mesh::{prolongate, PeriodicMesh};
use crate::objective::{moment_vectors, Objective, Problem};
use crate::{Error, Result};

/// Box-plus-moments feasible set.
#[derive(Debug, Clone)]
pub struct FeasibleSet {
    lower: f64,
    upper: f64,
    moments: Vec<Vec<f64>>,
    gram: Vec<f64>,
}

fn solve_small(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))?;
        if m[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in col + 1..n {
            s -= m[col * n + k] * x[k];
        }
        x[col] = s / m[col * n + col];
    }
    Some(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl FeasibleSet {
    pub fn new(lower: f64, upper: f64, moments: Vec<Vec<f64>>) -> Result<Self> {
        if !(lower < upper) {
            return Err(Error::param("bounds", format!("lower bound {lower} must be below upper bound {upper}")));
        }
        if !(lower < 0.0 && upper > 0.0) && !moments.is_empty() {
            return Err(Error::param("bounds", "the box must contain 0 so the moment constraints are satisfiable"));
        }
        let d = moments.len();
        let mut gram = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                gram[i * d + j] = dot(&moments[i], &moments[j]);
            }
        }
        Ok(FeasibleSet {
            lower,
            upper,
            moments,
            gram,
        })
    }

    /// Box `[lower, upper]` with the center-of-mass moments of `mesh`.
    pub fn for_mesh(mesh: &PeriodicMesh, lower: f64, upper: f64) -> Result<Self> {
        Self::new(lower, upper, moment_vectors(mesh))
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// `max_i |∫ v (x_i - 1/2)|`.
    pub fn constraint_residual(&self, v: &[f64]) -> f64 {
        self.moments.iter().map(|m| dot(m, v).abs()).fold(0.0, f64::max)
    }

    fn shifted_clamp(&self, w: &[f64], alpha: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut x = w[j];
            for (a, m) in alpha.iter().zip(&self.moments) {
                x -= a * m[j];
            }
            *o = x.clamp(self.lower, self.upper);
        }
    }

    /// Euclidean projection onto the feasible set.
    pub fn project(&self, w: &[f64]) -> Vec<f64> {
        let d = self.moments.len();
        let mut out = vec![0.0; w.len()];
        if d == 0 {
            for (o, x) in out.iter_mut().zip(w) {
                *o = x.clamp(self.lower, self.upper);
            }
            return out;
        }
        let rhs: Vec<f64> = self.moments.iter().map(|m| dot(m, w)).collect();
        let mut alpha = solve_small(&self.gram, &rhs).unwrap_or_else(|| vec![0.0; d]);
        self.shifted_clamp(w, &alpha, &mut out);
        let residual = |v: &[f64]| -> Vec<f64> { self.moments.iter().map(|m| dot(m, v)).collect() };
        let mut f = residual(&out);
        let scale: f64 = self.moments.iter().map(|m| m.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        let target = 1e-15 * scale * self.upper.abs().max(self.lower.abs()).max(1.0);
        let mut trial = vec![0.0; w.len()];
        for _ in 0..60 {
            let fnorm = inf_norm(&f);
            if fnorm <= target {
                break;
            }
            // Jacobian of the moments with respect to alpha over unclamped nodes
            let mut jac = vec![0.0; d * d];
            for (j, &x) in out.iter().enumerate() {
                if x > self.lower && x < self.upper {
                    for a in 0..d {
                        for b in 0..d {
                            jac[a * d + b] += self.moments[a][j] * self.moments[b][j];
                        }
                    }
                }
            }
            let Some(delta) = solve_small(&jac, &f) else { break };
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let cand: Vec<f64> = alpha.iter().zip(&delta).map(|(a, s)| a + t * s).collect();
                self.shifted_clamp(w, &cand, &mut trial);
                let ft = residual(&trial);
                if inf_norm(&ft) < fnorm {
                    alpha = cand;
                    std::mem::swap(&mut out, &mut trial);
                    f = ft;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        out
    }

    /// Remove the components of `g` along the moment vectors.
    fn tangent(&self, g: &mut [f64]) {
        let d = self.moments.len();
        if d == 0 {
            return;
        }
        let rhs: Vec<f64> = self.moments.iter().map(|m| dot(m, g)).collect();
        if let Some(coef) = solve_small(&self.gram, &rhs) {
            for (c, m) in coef.iter().zip(&self.moments) {
                for (x, mj) in g.iter_mut().zip(m) {
                    *x -= c * mj;
                }
            }
        }
    }
}

/// Value, gradient and optional diagnostics of one objective evaluation.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub detail: Option<EvalDetail>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalDetail {
    pub smooth_max: f64,
    pub cost0: f64,
    pub cost1: f64,
    pub perimeter: f64,
    pub cg_iterations: usize,
}

/// Anything the optimizer can minimize.
pub trait SmoothObjective {
    fn evaluate(&mut self, v: &[f64]) -> Result<Evaluated>;

    /// Lumped mass per node; the descent direction uses `gradient / metric`.
    fn metric(&self) -> f64 {
        1.0
    }
}

impl SmoothObjective for Objective {
    fn evaluate(&mut self, v: &[f64]) -> Result<Evaluated> {
        let ev = Objective::evaluate(self, v)?;
        Ok(Evaluated {
            value: ev.total,
            detail: Some(EvalDetail {
                smooth_max: ev.smooth_max,
                cost0: ev.costs[0],
                cost1: ev.costs[1],
                perimeter: ev.perimeter,
                cg_iterations: ev.cg_iterations,
            }),
            gradient: ev.gradient,
        })
    }

    fn metric(&self) -> f64 {
        self.mesh().spacing().powi(self.mesh().dim() as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescentMode {
    /// Projected gradient with Barzilai–Borwein initial steps.
    #[default]
    Gradient,
    /// Limited-memory quasi-Newton directions with the same projection.
    Lbfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    /// Stop when `‖v - P(v - g)‖∞ <= grad_tol (1 + |J|)`.
    pub grad_tol: f64,
    /// Largest nodal change of the very first trial step.
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    pub lower: f64,
    pub upper: f64,
    pub mode: DescentMode,
    pub memory: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iter: 500,
            grad_tol: 1e-4,
            initial_step: 0.5,
            shrink: 0.5,
            armijo: 1e-4,
            max_backtracks: 30,
            lower: -1.25,
            upper: 1.25,
            mode: DescentMode::Gradient,
            memory: 8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::param("optimizer.grad_tol", "must be positive"));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::param("optimizer.initial_step", "must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::param("optimizer.shrink", "must lie in (0, 1)"));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::param("optimizer.armijo", "must lie in (0, 1)"));
        }
        if !(self.lower < 0.0 && self.upper > 0.0) {
            return Err(Error::param("optimizer.lower", "box must contain 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    pub value: f64,
    /// Step parameter of the accepted trial (0 for the initial point).
    pub step: f64,
    /// `‖v - P(v - g)‖∞` at the accepted iterate.
    pub projected_gradient: f64,
    /// `∇J · (v_new - v_old)`, the Armijo reference decrease.
    pub predicted_decrease: f64,
    pub constraint_residual: f64,
    pub evaluations: usize,
    pub detail: Option<EvalDetail>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    StepCollapse,
    MaxIterations,
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub log: Vec<IterationLog>,
    pub field: Vec<f64>,
    pub value: f64,
    pub termination: Termination,
    pub table: Option<EffectiveTensor>,
    pub elapsed: Duration,
}

impl PartialEq for RunRecord {
    /// Wall-clock time is excluded.
    fn eq(&self, other: &Self) -> bool {
        self.log == other.log
            && self.field == other.field
            && self.value.to_bits() == other.value.to_bits()
            && self.termination == other.termination
            && self.table == other.table
    }
}

fn projected_gradient(set: &FeasibleSet, v: &[f64], g: &[f64]) -> f64 {
    let w: Vec<f64> = v.iter().zip(g).map(|(a, b)| a - b).collect();
    let p = set.project(&w);
    v.iter().zip(&p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Limited-memory inverse-Hessian product.
fn two_loop(pairs: &[(Vec<f64>, Vec<f64>)], g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    if let Some((s, y)) = pairs.last() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y), (a, rho)) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q
}

/// Minimize `objective` from `v0` over `set`.
pub fn minimize(
    v0: &[f64],
    objective: &mut dyn SmoothObjective,
    set: &FeasibleSet,
    config: &OptimizerConfig,
) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let metric = objective.metric();
    let mut v = set.project(v0);
    let first = objective.evaluate(&v)?;
    let mut value = first.value;
    let mut raw_grad = first.gradient;
    let mut g: Vec<f64> = raw_grad.iter().map(|x| x / metric).collect();
    let mut log = vec![IterationLog {
        iter: 0,
        value,
        step: 0.0,
        projected_gradient: projected_gradient(set, &v, &g),
        predicted_decrease: 0.0,
        constraint_residual: set.constraint_residual(&v),
        evaluations: 1,
        detail: first.detail,
    }];

    let gmax = inf_norm(&g);
    let mut step = if gmax > 0.0 { config.initial_step / gmax } else { 1.0 };
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut termination = Termination::MaxIterations;

    for iter in 1..=config.max_iter {
        let pg = log.last().map(|l| l.projected_gradient).unwrap_or(f64::INFINITY);
        if pg <= config.grad_tol * (1.0 + value.abs()) {
            termination = Termination::Converged;
            break;
        }

        let mut direction: Vec<f64> = match config.mode {
            DescentMode::Gradient => g.iter().map(|x| -x).collect(),
            DescentMode::Lbfgs => {
                let mut gt = g.clone();
                set.tangent(&mut gt);
                let d: Vec<f64> = two_loop(&pairs, &gt).into_iter().map(|x| -x).collect();
                if dot(&d, &g) < 0.0 {
                    d
                } else {
                    pairs.clear();
                    g.iter().map(|x| -x).collect()
                }
            }
        };
        if config.mode == DescentMode::Lbfgs && !pairs.is_empty() {
            step = 1.0;
        }
        // cap the largest nodal move of the first trial
        let dmax = inf_norm(&direction);
        if dmax * step > 1.0 {
            step = 1.0 / dmax;
        }
        if dmax == 0.0 {
            termination = Termination::Converged;
            break;
        }

        let mut evaluations = 0;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let w: Vec<f64> = v.iter().zip(&direction).map(|(a, d)| a + step * d).collect();
            let trial = set.project(&w);
            let dv: Vec<f64> = trial.iter().zip(&v).map(|(a, b)| a - b).collect();
            let predicted = dot(&raw_grad, &dv);
            if predicted >= 0.0 {
                step *= config.shrink;
                continue;
            }
            evaluations += 1;
            match objective.evaluate(&trial) {
                Ok(ev) => {
                    if ev.value <= value + config.armijo * predicted {
                        accepted = Some((trial, dv, predicted, ev));
                        break;
                    }
                }
                Err(e) => {
                    termination = Termination::Aborted(e.to_string());
                    break;
                }
            }
            step *= config.shrink;
        }
        if matches!(termination, Termination::Aborted(_)) {
            break;
        }
        let Some((trial, dv, predicted, ev)) = accepted else {
            termination = Termination::StepCollapse;
            break;
        };

        let g_new: Vec<f64> = ev.gradient.iter().map(|x| x / metric).collect();
        let dy: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&dv, &dy);
        let accepted_step = step;
        match config.mode {
            DescentMode::Gradient => {
                let ss = dot(&dv, &dv);
                step = if sy > 0.0 { ss / sy } else { 2.0 * step };
            }
            DescentMode::Lbfgs => {
                let mut s = dv.clone();
                let mut y = dy;
                set.tangent(&mut s);
                set.tangent(&mut y);
                let sy_t = dot(&s, &y);
                if sy_t > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    pairs.push((s, y));
                    if pairs.len() > config.memory {
                        pairs.remove(0);
                    }
                }
                step = 1.0;
            }
        }
        direction.clear();

        v = trial;
        value = ev.value;
        raw_grad = ev.gradient;
        g = g_new;
        log.push(IterationLog {
            iter,
            value,
            step: accepted_step,
            projected_gradient: projected_gradient(set, &v, &g),
            predicted_decrease: predicted,
            constraint_residual: set.constraint_residual(&v),
            evaluations,
            detail: ev.detail,
        });
    }

    Ok(RunRecord {
        log,
        field: v,
        value,
        termination,
        table: None,
        elapsed: start.elapsed(),
    })
}

/// Grid spacing that the interface width `ε = eps_factor * h` refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsReference {
    /// Each level uses its own spacing.
    #[default]
    Level,
    /// Every level uses the spacing of the finest level.
    Finest,
}

/// Multilevel schedule and seeding for [`continuation_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationConfig {
    /// Nodes per axis of each level, strictly increasing and nested.
    pub schedule: Vec<usize>,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Per-level iteration caps overriding `optimizer.max_iter`.
    pub level_max_iter: Option<Vec<usize>>,
    /// Interface width as a multiple of the grid spacing.
    pub eps_factor: f64,
    pub eps_reference: EpsReference,
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::param("schedule", "must contain at least one level"));
        }
        for w in self.schedule.windows(2) {
            let (c, f) = (w[0] - 1, w[1] - 1);
            if w[1] <= w[0] || f % c != 0 {
                return Err(Error::param(
                    "schedule",
                    format!("levels {} -> {} are not increasing nested grids", w[0], w[1]),
                ));
            }
        }
        if let Some(caps) = &self.level_max_iter {
            if caps.len() != self.schedule.len() {
                return Err(Error::param("level_max_iter", "needs one entry per schedule level"));
            }
        }
        if !(self.eps_factor > 0.0) {
            return Err(Error::param("eps_factor", "must be positive"));
        }
        self.optimizer.validate()
    }

    /// Interface width on a mesh with `nodes_per_axis` nodes.
    pub fn eps_for(&self, nodes_per_axis: usize) -> f64 {
        let n = match self.eps_reference {
            EpsReference::Level => nodes_per_axis,
            EpsReference::Finest => *self.schedule.last().unwrap_or(&nodes_per_axis),
        };
        self.eps_factor / (n - 1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct LevelRecord {
    pub nodes_per_axis: usize,
    pub eps: f64,
    /// Final objective on the previous level (coarse mesh, coarse width).
    pub coarse_final: Option<f64>,
    /// Objective of the prolongated field on this mesh with the previous width.
    pub prolongated_previous_eps: Option<f64>,
    pub record: RunRecord,
}

#[derive(Debug, Clone)]
pub struct ContinuationRecord {
    pub levels: Vec<LevelRecord>,
}

impl ContinuationRecord {
    pub fn finest(&self) -> &RunRecord {
        &self.levels.last().expect("at least one level").record
    }
}

/// Uniform random values in `[-1, 1]` from a seeded generator.
pub fn random_field(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Coarse-to-fine optimization: random start on the coarsest grid, then
/// prolongate and re-optimize on each finer grid with `ε = eps_factor * h`
/// (see [`EpsReference`] for which `h`).
///
/// `resume` supplies the optimized field of an already finished level index;
/// `on_level` is called after each finished level (e.g. for checkpoints).
pub fn continuation_run(
    problem: &Problem,
    config: &ContinuationConfig,
    resume: Option<(usize, Vec<f64>)>,
    on_level: &mut dyn FnMut(usize, &PeriodicMesh, &LevelRecord) -> Result<()>,
) -> Result<ContinuationRecord> {
    config.validate()?;
    problem.validate()?;
    let mut levels: Vec<LevelRecord> = Vec::new();
    let mut carried: Option<(Arc<PeriodicMesh>, Vec<f64>, f64, f64)> = None;
    let mut first_level = 0;
    if let Some((idx, field)) = resume {
        if idx >= config.schedule.len() {
            return Err(Error::param("resume", format!("level {idx} is not in the schedule")));
        }
        let mesh = Arc::new(PeriodicMesh::new(problem.dim, config.schedule[idx])?);
        if field.len() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_nodes(),
                actual: field.len(),
            });
        }
        let eps = config.eps_for(mesh.nodes_per_axis());
        let value = Objective::new(mesh.clone(), problem.clone(), eps)?.evaluate(&field)?.total;
        carried = Some((mesh, field, eps, value));
        first_level = idx + 1;
    }

    for (level, &n) in config.schedule.iter().enumerate().skip(first_level) {
        let mesh = Arc::new(PeriodicMesh::new(problem.dim, n)?);
        let eps = config.eps_for(n);
        let (start, coarse_final, previous_eps) = match &carried {
            None => (random_field(mesh.num_nodes(), config.seed), None, None),
            Some((coarse, field, coarse_eps, coarse_value)) => {
                let fine = prolongate(coarse, field, &mesh)?;
                let mut same = Objective::new(mesh.clone(), problem.clone(), *coarse_eps)?;
                let at_previous = same.evaluate(&fine)?.total;
                (fine, Some(*coarse_value), Some(at_previous))
            }
        };
        let mut objective = Objective::new(mesh.clone(), problem.clone(), eps)?;
        let set = FeasibleSet::for_mesh(&mesh, config.optimizer.lower, config.optimizer.upper)?;
        let mut opt = config.optimizer.clone();
        if let Some(caps) = &config.level_max_iter {
            opt.max_iter = caps[level];
        }
        let record = minimize(&start, &mut objective, &set, &opt)?;
        let level_record = LevelRecord {
            nodes_per_axis: n,
            eps,
            coarse_final,
            prolongated_previous_eps: previous_eps,
            record,
        };
        on_level(level, &mesh, &level_record)?;
        if let Termination::Aborted(msg) = &level_record.record.termination {
            return Err(Error::Numerical(format!("level {n} aborted: {msg}")));
        }
        carried = Some((
            mesh.clone(),
            level_record.record.field.clone(),
            eps,
            level_record.record.value,
        ));
        levels.push(level_record);
    }

    if let (Some(last), Some((mesh, field, _, _))) = (levels.last_mut(), carried.as_ref()) {
        let table = effective_table(
            mesh,
            field,
            &problem.materials,
            &problem.interp,
            &problem.loads[0],
            &problem.solver,
        )?;
        last.record.table = Some(table);
    }
    Ok(ContinuationRecord { levels })
}
