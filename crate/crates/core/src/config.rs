//! Experiment configuration files and built-in presets.
//!
//! A config is a TOML file. The optional top-level key `preset` selects a
//! built-in experiment whose values are then overridden key by key by the
//! rest of the file; phase material tables are replaced as a whole so that a
//! file may switch a phase from `E`/`nu` to `mu`/`lambda`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::elasticity::{canonical_labels, LoadCase, SolverOptions};
use crate::material::IsotropicMaterial;
use crate::objective::{CostKind, CostParams, Problem};
use crate::optimizer::{ContinuationConfig, EpsReference, OptimizerConfig};
use crate::phase_field::{Interpolation, InterpolationParams};
use crate::{Error, Result};

pub const PRESETS: [&str; 8] = [
    "equal-3compr",
    "equal-2compr-1shear",
    "equal-1compr-2shear",
    "eta-sweep",
    "p-sweep",
    "young-sweep",
    "bone-polymer",
    "2d-2compr",
];

/// Elastic constants of one phase, given either as `E`/`nu` or `mu`/`lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub young: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl MaterialSpec {
    pub fn young_poisson(young: f64, nu: f64) -> Self {
        MaterialSpec {
            young: Some(young),
            nu: Some(nu),
            ..Default::default()
        }
    }

    pub fn lame(mu: f64, lambda: f64) -> Self {
        MaterialSpec {
            mu: Some(mu),
            lambda: Some(lambda),
            ..Default::default()
        }
    }

    /// Resolve to a material; `key` prefixes error messages (e.g. `phase0`).
    pub fn resolve(&self, key: &str) -> Result<IsotropicMaterial> {
        let engineering = self.young.is_some() || self.nu.is_some();
        let lame = self.mu.is_some() || self.lambda.is_some();
        if engineering && lame {
            return Err(Error::config(key, "give either `E`/`nu` or `mu`/`lambda`, not both"));
        }
        if lame {
            let mu = self.mu.ok_or_else(|| Error::config(&format!("{key}.mu"), "missing"))?;
            let lambda = self
                .lambda
                .ok_or_else(|| Error::config(&format!("{key}.lambda"), "missing"))?;
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::config(&format!("{key}.mu"), format!("must be positive, got {mu}")));
            }
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::config(
                    &format!("{key}.lambda"),
                    format!("must be positive, got {lambda}"),
                ));
            }
            return IsotropicMaterial::new(mu, lambda);
        }
        let young = self.young.ok_or_else(|| Error::config(&format!("{key}.E"), "missing"))?;
        let nu = self.nu.ok_or_else(|| Error::config(&format!("{key}.nu"), "missing"))?;
        if !(young > 0.0 && young.is_finite()) {
            return Err(Error::config(&format!("{key}.E"), format!("must be positive, got {young}")));
        }
        if !(nu > 0.0 && nu < 0.5) {
            return Err(Error::config(
                &format!("{key}.nu"),
                format!("Poisson ratio must lie in (0, 0.5), got {nu}"),
            ));
        }
        IsotropicMaterial::from_young_poisson(young, nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverSection {
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputOptions {
    /// Periodic copies per axis in exported fields.
    pub tile: usize,
    /// Level of `v` separating the phases; exported as an indicator field.
    pub isosurface_level: f64,
    /// Also export per-cell von Mises stresses of the final design.
    pub von_mises: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions {
            tile: 1,
            isosurface_level: 0.0,
            von_mises: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Eta,
    P,
    /// Young's modulus of phase 0 (its Poisson ratio is kept).
    Young0,
}

impl SweepParameter {
    fn name(self) -> &'static str {
        match self {
            SweepParameter::Eta => "eta",
            SweepParameter::P => "p",
            SweepParameter::Young0 => "young0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// A complete, validated experiment definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dimension: usize,
    /// Nodes per axis on each continuation level.
    pub schedule: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_max_iter: Option<Vec<usize>>,
    pub seed: u64,
    pub output: PathBuf,
    /// Load labels used for both phases unless `loads_phase1` is given.
    pub loads: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loads_phase1: Option<Vec<String>>,
    pub beta: f64,
    pub p: f64,
    pub q_max: f64,
    pub eta: f64,
    pub delta: f64,
    #[serde(default)]
    pub cost: CostKind,
    #[serde(default)]
    pub interpolation: Interpolation,
    /// Interface width in grid spacings.
    #[serde(default = "default_eps_factor")]
    pub eps_factor: f64,
    #[serde(default)]
    pub eps_reference: EpsReference,
    pub phase0: MaterialSpec,
    pub phase1: MaterialSpec,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub output_options: OutputOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

fn default_eps_factor() -> f64 {
    2.0
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".to_string(),
            dimension: 3,
            schedule: vec![17, 33, 65],
            level_max_iter: None,
            seed: 1,
            output: PathBuf::from("out").join("experiment"),
            loads: vec!["A11".into(), "A22".into(), "A33".into()],
            loads_phase1: None,
            beta: -0.25,
            p: 2.0,
            q_max: 8.0,
            eta: 2.0,
            delta: 1e-4,
            cost: CostKind::Pnorm,
            interpolation: Interpolation::Linear,
            eps_factor: default_eps_factor(),
            eps_reference: EpsReference::Level,
            phase0: MaterialSpec::young_poisson(10.0, 0.25),
            phase1: MaterialSpec::young_poisson(10.0, 0.25),
            solver: SolverSection::default(),
            optimizer: OptimizerConfig::default(),
            output_options: OutputOptions::default(),
            sweep: None,
        }
    }
}

/// Settings shared by all presets: desk-scale schedule with iteration caps,
/// quadratic interpolation and an interface width tied to the finest grid.
fn base(name: &str, loads: &[&str]) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        schedule: vec![9, 17, 33],
        level_max_iter: Some(vec![300, 150, 100]),
        output: PathBuf::from("out").join(name),
        loads: loads.iter().map(|s| s.to_string()).collect(),
        interpolation: Interpolation::Quadratic,
        eps_reference: EpsReference::Finest,
        ..ExperimentConfig::default()
    }
}

/// Built-in experiment by name.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "equal-3compr" => base(name, &["A11", "A22", "A33"]),
        "equal-2compr-1shear" => base(name, &["A11", "A22", "A23"]),
        "equal-1compr-2shear" => base(name, &["A11", "A12", "A13"]),
        "eta-sweep" => ExperimentConfig {
            sweep: Some(Sweep {
                parameter: SweepParameter::Eta,
                values: vec![2.0, 4.0, 10.0],
            }),
            ..base(name, &["A12", "A13", "A23"])
        },
        "p-sweep" => ExperimentConfig {
            sweep: Some(Sweep {
                parameter: SweepParameter::P,
                values: vec![2.0, 4.0, 8.0, 16.0],
            }),
            ..base(name, &["A11", "A22", "A23"])
        },
        "young-sweep" => ExperimentConfig {
            eta: 1.0,
            phase0: MaterialSpec::young_poisson(20.0, 0.25),
            sweep: Some(Sweep {
                parameter: SweepParameter::Young0,
                values: vec![20.0, 40.0, 80.0, 160.0, 320.0],
            }),
            ..base(name, &["A11", "A22", "A23"])
        },
        // phase 0 is the polymer scaffold, phase 1 the bone
        "bone-polymer" => ExperimentConfig {
            phase0: MaterialSpec::young_poisson(10.0, 0.3),
            phase1: MaterialSpec::young_poisson(150.0, 0.1),
            ..base(name, &["A11", "A12", "A13"])
        },
        "2d-2compr" => ExperimentConfig {
            dimension: 2,
            schedule: vec![17, 33, 65],
            level_max_iter: Some(vec![300, 200, 200]),
            ..base(name, &["A11", "A22"])
        },
        other => {
            return Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (available: {})", PRESETS.join(", ")),
            ))
        }
    };
    Ok(cfg)
}

fn as_config_error(e: Error) -> Error {
    match e {
        Error::Parameter { name, reason } => Error::Config { key: name, reason },
        Error::Material(reason) => Error::config("phase", reason),
        other => other,
    }
}

fn check_loads(key: &str, labels: &[String], dim: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::config(key, "load set must not be empty"));
    }
    let allowed = canonical_labels(dim);
    for (i, l) in labels.iter().enumerate() {
        if !allowed.contains(&l.as_str()) {
            return Err(Error::config(
                key,
                format!("unknown load `{l}` for dimension {dim} (allowed: {})", allowed.join(", ")),
            ));
        }
        if labels[..i].contains(l) {
            return Err(Error::config(key, format!("duplicate load `{l}`")));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension != 2 && self.dimension != 3 {
            return Err(Error::config("dimension", format!("must be 2 or 3, got {}", self.dimension)));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed", "must fit in a signed 64-bit integer"));
        }
        if self.schedule.iter().any(|&n| n < 3) {
            return Err(Error::config("schedule", "every level needs at least 3 nodes per axis"));
        }
        check_loads("loads", &self.loads, self.dimension)?;
        if let Some(l1) = &self.loads_phase1 {
            check_loads("loads_phase1", l1, self.dimension)?;
        }
        if !(self.beta != 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be finite and nonzero"));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(Error::config("solver.tol", "must lie in (0, 1)"));
        }
        if self.output_options.tile == 0 {
            return Err(Error::config("output_options.tile", "must be at least 1"));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::config("sweep.values", "must not be empty"));
            }
        }
        self.phase0.resolve("phase0")?;
        self.phase1.resolve("phase1")?;
        self.cost_params().validate().map_err(as_config_error)?;
        self.interp().map_err(as_config_error)?;
        self.to_continuation().validate().map_err(as_config_error)?;
        for cfg in self.expand_sweep() {
            if cfg.sweep.is_none() && self.sweep.is_some() {
                cfg.validate()?;
            }
        }
        Ok(())
    }

    fn cost_params(&self) -> CostParams {
        CostParams {
            p: self.p,
            q_max: self.q_max,
            eta: self.eta,
            kind: self.cost,
        }
    }

    fn interp(&self) -> Result<InterpolationParams> {
        InterpolationParams::with_kind(self.delta, self.interpolation)
    }

    pub fn materials(&self) -> Result<[IsotropicMaterial; 2]> {
        Ok([self.phase0.resolve("phase0")?, self.phase1.resolve("phase1")?])
    }

    pub fn load_cases(&self, labels: &[String]) -> Result<Vec<LoadCase>> {
        labels
            .iter()
            .map(|l| LoadCase::canonical(l, self.dimension, self.beta))
            .collect()
    }

    pub fn to_problem(&self) -> Result<Problem> {
        let loads0 = self.load_cases(&self.loads)?;
        let loads1 = match &self.loads_phase1 {
            Some(l) => self.load_cases(l)?,
            None => loads0.clone(),
        };
        Ok(Problem {
            dim: self.dimension,
            materials: self.materials()?,
            loads: [loads0, loads1],
            cost: self.cost_params(),
            interp: self.interp().map_err(as_config_error)?,
            solver: SolverOptions {
                tol: self.solver.tol,
                max_iter: self.solver.max_iter,
            },
        })
    }

    pub fn to_continuation(&self) -> ContinuationConfig {
        ContinuationConfig {
            schedule: self.schedule.clone(),
            seed: self.seed,
            optimizer: self.optimizer.clone(),
            level_max_iter: self.level_max_iter.clone(),
            eps_factor: self.eps_factor,
            eps_reference: self.eps_reference,
        }
    }

    /// One config per sweep value (or just `self` without a sweep); each gets
    /// its own name suffix and output subdirectory.
    pub fn expand_sweep(&self) -> Vec<ExperimentConfig> {
        let Some(sweep) = &self.sweep else {
            return vec![self.clone()];
        };
        sweep
            .values
            .iter()
            .map(|&value| {
                let tag = format!("{}-{value}", sweep.parameter.name());
                let mut cfg = self.clone();
                cfg.sweep = None;
                cfg.name = format!("{}-{tag}", self.name);
                cfg.output = self.output.join(&tag);
                match sweep.parameter {
                    SweepParameter::Eta => cfg.eta = value,
                    SweepParameter::P => cfg.p = value,
                    SweepParameter::Young0 => {
                        let nu = self
                            .phase0
                            .resolve("phase0")
                            .map(|m| m.poisson())
                            .unwrap_or(0.25);
                        cfg.phase0 = MaterialSpec::young_poisson(value, nu);
                    }
                }
                cfg
            })
            .collect()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn merge(base: &mut toml::Table, overrides: toml::Table) {
    for (key, value) in overrides {
        let replace_whole = key == "phase0" || key == "phase1";
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !replace_whole => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn unknown_key(message: &str) -> String {
    message
        .split("unknown field `")
        .nth(1)
        .and_then(|rest| rest.split('`').next())
        .unwrap_or("<file>")
        .to_string()
}

/// Parse config text (see the module docs for the preset/override rules).
pub fn parse_str(text: &str) -> Result<ExperimentConfig> {
    let mut user: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
    let base = match user.remove("preset") {
        Some(toml::Value::String(name)) => preset(&name)?,
        Some(_) => return Err(Error::config("preset", "must be a string")),
        None => ExperimentConfig::default(),
    };
    let mut table = toml::Table::try_from(&base).expect("config converts to a TOML table");
    merge(&mut table, user);
    let cfg: ExperimentConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        Error::config(&unknown_key(&msg), msg)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_str(&text)
}
