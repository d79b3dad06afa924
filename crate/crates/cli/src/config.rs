//! Experiment configuration: a TOML file, dotted-key overrides, and the
//! conversion into core types.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use darcy_core::coarse::SelectionRule;
use darcy_core::field::{
    default_channel_mask, fracture_network, gen_fractured, gen_log_uniform, gen_periodic_cell,
    gen_spe10_like, load_raw, PermeabilityField, RawLayout, RawOrder,
};
use darcy_core::grid::{build_hierarchy, GridHierarchy, Side};
use darcy_core::krylov::{Method, SolverConfig};
use darcy_core::mgprec::{Mode, PrecConfig};
use darcy_core::tpfa::{Boundary, DirichletFace};
use darcy_core::twophase::ProducerModel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("{0}")]
    Core(#[from] darcy_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    SinglePhase,
    TwoPhase,
    VerifyTheory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub seed: u64,
    /// Concurrent sweep points.
    #[serde(default = "one")]
    pub workers: usize,
    pub grid: GridSpec,
    pub field: FieldSpec,
    #[serde(default)]
    pub boundary: BoundarySpec,
    pub coarse: CoarseSpec,
    #[serde(default)]
    pub smoother: SmootherSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    /// Dotted key to list of values; points are the Cartesian product.
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<toml::Value>>,
    #[serde(default)]
    pub two_phase: TwoPhaseSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
    /// Coarse-coarse blocks per axis.
    pub cc: Vec<usize>,
    pub sd: usize,
    /// Extent of the single layer in 2D.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Uniform {
        #[serde(default = "unit")]
        kappa: f64,
    },
    LogUniform {
        decades: f64,
        #[serde(default = "yes")]
        orthotropic: bool,
    },
    Periodic {
        contrast: f64,
    },
    Fractured {
        cr: i32,
        #[serde(default = "twelve")]
        fractures: usize,
    },
    Spe10Like {
        log_range: [f64; 2],
    },
    File {
        path: PathBuf,
        #[serde(default = "four")]
        components: usize,
        #[serde(default)]
        planar: bool,
    },
}

fn unit() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn twelve() -> usize {
    12
}
fn four() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundarySpec {
    #[default]
    NoFlow,
    Dirichlet { faces: Vec<FaceSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceSpec {
    pub axis: usize,
    /// "min" or "max".
    pub side: String,
    #[serde(default)]
    pub pressure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoarseSpec {
    Fixed { l_c: usize, l_cc: usize },
    Threshold { b_c: f64, b_cc: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSpec {
    Inexact,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmootherSpec {
    pub nu: usize,
    pub nu_c: usize,
    pub omega: f64,
    pub mode: ModeSpec,
}

impl Default for SmootherSpec {
    fn default() -> Self {
        Self {
            nu: 1,
            nu_c: 1,
            omega: 1.0,
            mode: ModeSpec::Inexact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodSpec {
    Cg,
    Gmres,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub method: MethodSpec,
    pub rtol: f64,
    pub max_iters: usize,
    pub restart: usize,
    /// Lanczos condition estimate from the CG coefficients.
    #[serde(default)]
    pub estimate: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            method: MethodSpec::Cg,
            rtol: 1e-6,
            max_iters: 1000,
            restart: 30,
            estimate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProducerSpec {
    AsWritten,
    MobilityWeighted,
}

/// Field units: bbl/day, psi, ft, cP, days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPhaseSpec {
    pub rate_bbl_day: f64,
    pub p_bh: f64,
    pub r_wb: f64,
    pub producer: ProducerSpec,
    pub mu_w: f64,
    pub mu_o: f64,
    pub initial_saturation: f64,
    pub ds_max: f64,
    pub substeps: usize,
    pub end_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    pub refresh_every: usize,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

impl Default for TwoPhaseSpec {
    fn default() -> Self {
        Self {
            rate_bbl_day: 5000.0,
            p_bh: 4000.0,
            r_wb: 1.0,
            producer: ProducerSpec::AsWritten,
            mu_w: 0.3,
            mu_o: 3.0,
            initial_saturation: 0.2,
            ds_max: 0.001,
            substeps: 50,
            end_time: 2000.0,
            max_steps: None,
            dt_max: None,
            refresh_every: 1,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    #[serde(default)]
    pub dump_field: bool,
    #[serde(default)]
    pub dump_solution: bool,
    #[serde(default)]
    pub dump_system: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            dump_field: false,
            dump_solution: false,
            dump_system: false,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `key` (dotted path) in a TOML table, creating intermediate tables.
pub fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(key.to_string()));
    }
    let (last, path) = parts.split_last().expect("non-empty split");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => {
                return Err(ConfigError::Invalid {
                    key: key.to_string(),
                    reason: format!("`{p}` is not a table"),
                })
            }
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes to a table")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `key=value` overrides; values are parsed as TOML, falling
    /// back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| ConfigError::Override(o.to_string()))?;
            pairs.push((k.trim().to_string(), parse_value(v.trim())));
        }
        self.with_values(&pairs)
    }

    pub fn with_values(&self, pairs: &[(String, toml::Value)]) -> Result<Self, ConfigError> {
        if pairs.is_empty() {
            return Ok(self.clone());
        }
        let mut table = self.to_table();
        for (k, v) in pairs {
            set_key(&mut table, k, v.clone())?;
        }
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: String| {
            Err(ConfigError::Invalid {
                key: key.to_string(),
                reason,
            })
        };
        let dim = self.grid.cells.len();
        if dim != 2 && dim != 3 {
            return bad("grid.cells", format!("need 2 or 3 entries, got {dim}"));
        }
        if self.grid.lengths.len() != dim || self.grid.cc.len() != dim {
            return bad("grid", "cells, lengths and cc need one entry per axis".into());
        }
        if self.workers == 0 {
            return bad("workers", "must be at least 1".into());
        }
        if let FieldSpec::File { path, .. } = &self.field {
            if !path.exists() {
                return bad("field.path", format!("{} does not exist", path.display()));
            }
        }
        if let BoundarySpec::Dirichlet { faces } = &self.boundary {
            if faces.is_empty() {
                return bad("boundary.faces", "Dirichlet boundary needs at least one face".into());
            }
            for f in faces {
                if f.axis >= dim {
                    return bad("boundary.faces.axis", format!("axis {} in {dim}D", f.axis));
                }
                if f.side != "min" && f.side != "max" {
                    return bad("boundary.faces.side", format!("`{}` is not min or max", f.side));
                }
            }
        }
        for (k, values) in &self.sweep {
            if values.is_empty() {
                return bad(&format!("sweep.{k}"), "sweep list is empty".into());
            }
        }
        if !(self.solver.rtol > 0.0 && self.solver.rtol < 1.0) {
            return bad("solver.rtol", format!("{} outside (0, 1)", self.solver.rtol));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<GridHierarchy, ConfigError> {
        let dim = self.grid.cells.len();
        let g = build_hierarchy(dim, &self.grid.cells, &self.grid.lengths, &self.grid.cc, self.grid.sd)?;
        Ok(match self.grid.thickness {
            Some(t) => g.with_thickness(t)?,
            None => g,
        })
    }

    pub fn build_field(&self, grid: &GridHierarchy) -> Result<PermeabilityField, ConfigError> {
        let f = match &self.field {
            FieldSpec::Uniform { kappa } => PermeabilityField::uniform(grid.n_cells(), *kappa)?,
            FieldSpec::LogUniform { decades, orthotropic } => {
                gen_log_uniform(grid, self.seed, *decades, *orthotropic)?
            }
            FieldSpec::Periodic { contrast } => {
                gen_periodic_cell(grid, &default_channel_mask(grid.dim()), *contrast)?
            }
            FieldSpec::Fractured { cr, fractures } => {
                gen_fractured(grid, &fracture_network(grid, *fractures, self.seed), *cr)?
            }
            FieldSpec::Spe10Like { log_range } => {
                gen_spe10_like(grid, self.seed, (log_range[0], log_range[1]))?
            }
            FieldSpec::File { path, components, planar } => {
                let layout = RawLayout {
                    components: *components,
                    order: if *planar { RawOrder::Planar } else { RawOrder::Interleaved },
                };
                load_raw(path, grid.n_cells(), layout)?
            }
        };
        Ok(f)
    }

    pub fn boundary(&self) -> Boundary {
        match &self.boundary {
            BoundarySpec::NoFlow => Boundary::NoFlow,
            BoundarySpec::Dirichlet { faces } => Boundary::Dirichlet(
                faces
                    .iter()
                    .map(|f| DirichletFace {
                        axis: f.axis,
                        side: if f.side == "min" { Side::Min } else { Side::Max },
                        pressure: f.pressure,
                    })
                    .collect(),
            ),
        }
    }

    pub fn rule(&self) -> SelectionRule {
        match self.coarse {
            CoarseSpec::Fixed { l_c, l_cc } => SelectionRule::fixed(l_c, l_cc),
            CoarseSpec::Threshold { b_c, b_cc } => SelectionRule::threshold(b_c, b_cc),
        }
    }

    pub fn prec(&self) -> PrecConfig {
        PrecConfig {
            nu: self.smoother.nu,
            nu_c: self.smoother.nu_c,
            omega: self.smoother.omega,
            mode: match self.smoother.mode {
                ModeSpec::Inexact => Mode::Inexact,
                ModeSpec::Exact => Mode::Exact,
            },
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            method: match self.solver.method {
                MethodSpec::Cg => Method::Cg,
                MethodSpec::Gmres => Method::Gmres,
            },
            rtol: self.solver.rtol,
            max_iters: self.solver.max_iters,
            restart: self.solver.restart,
            lanczos: self.solver.estimate,
        }
    }

    pub fn producer_model(&self) -> ProducerModel {
        match self.two_phase.producer {
            ProducerSpec::AsWritten => ProducerModel::AsWritten,
            ProducerSpec::MobilityWeighted => ProducerModel::MobilityWeighted,
        }
    }

    /// Sweep points as override lists, in lexicographic key order with the
    /// last key varying fastest.
    pub fn sweep_points(&self) -> Vec<Vec<(String, toml::Value)>> {
        let mut points: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
        for (k, values) in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((k.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }
}
