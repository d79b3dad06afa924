//! Subcommand drivers. Every run writes `manifest.toml` (the resolved
//! config) and `results.csv` into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use darcy_core::coarse::build_spaces;
use darcy_core::field::{normalize, save_raw, RawLayout};
use darcy_core::krylov::{solve as krylov_solve, verify_theory as core_verify};
use darcy_core::mgprec::ThreeGridPreconditioner;
use darcy_core::tpfa::{assemble, default_sources, PressureSystem};
use darcy_core::twophase::{run_simulation, FluidModel, SimulationConfig, WellSet};
use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ModeSpec, Problem};

/// Columns holding wall-clock measurements; excluded from reproducibility
/// comparisons.
pub const TIMING_COLUMNS: [&str; 2] = ["setup_s", "solve_s"];

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{failed} of {total} runs failed; first: {first}")]
    Solver {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Sweep,
    VerifyTheory,
    Simulate,
}

impl Command {
    fn problem(self) -> Problem {
        match self {
            Command::Solve | Command::Sweep => Problem::SinglePhase,
            Command::VerifyTheory => Problem::VerifyTheory,
            Command::Simulate => Problem::TwoPhase,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub results: PathBuf,
    pub manifest: PathBuf,
    pub rows: usize,
}

type Row = Vec<(&'static str, String)>;

fn write_file(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|source| RunError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn core_failure(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    if cfg.problem != command.problem() {
        return Err(ConfigError::Invalid {
            key: "problem".into(),
            reason: format!("{:?} does not match this subcommand", cfg.problem),
        }
        .into());
    }
    if command == Command::Solve && !cfg.sweep.is_empty() {
        warn!("solve ignores the sweep table; use the sweep subcommand");
    }
    if command == Command::Simulate && !cfg.sweep.is_empty() {
        return Err(ConfigError::Invalid {
            key: "sweep".into(),
            reason: "two-phase runs take a single point".into(),
        }
        .into());
    }
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|source| RunError::Output {
        path: dir.clone(),
        source,
    })?;
    let manifest = dir.join("manifest.toml");
    let header = format!(
        "# darcy {} run manifest; relaunch with `darcy {} --config manifest.toml`\n",
        env!("CARGO_PKG_VERSION"),
        match command {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::VerifyTheory => "verify-theory",
            Command::Simulate => "simulate",
        }
    );
    write_file(&manifest, &(header + &cfg.to_toml()))?;

    let points = match command {
        Command::Solve | Command::Simulate => vec![Vec::new()],
        Command::Sweep | Command::VerifyTheory => cfg.sweep_points(),
    };
    // Resolve every point before any work so config errors surface first.
    let mut resolved = Vec::with_capacity(points.len());
    for p in &points {
        let c = cfg.with_values(p)?;
        let grid = c.build_grid()?;
        c.build_field(&grid)?;
        resolved.push(c);
    }
    let keys: Vec<String> = cfg.sweep.keys().cloned().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .expect("thread pool");
    let outcomes: Vec<Result<Row, String>> = pool.install(|| {
        resolved
            .par_iter()
            .enumerate()
            .map(|(i, c)| match command {
                Command::Solve | Command::Sweep => single_phase(c, i),
                Command::VerifyTheory => theory(c),
                Command::Simulate => simulate(c),
            })
            .collect()
    });

    let columns: &[&str] = match command {
        Command::Solve | Command::Sweep => &SINGLE_PHASE_COLUMNS,
        Command::VerifyTheory => &THEORY_COLUMNS,
        Command::Simulate => &SIMULATE_COLUMNS,
    };
    let mut csv = String::from("point");
    for k in &keys {
        write!(csv, ",{k}").unwrap();
    }
    for c in columns {
        write!(csv, ",{c}").unwrap();
    }
    csv.push_str(",status\n");
    let mut failures = Vec::new();
    for (i, (point, outcome)) in points.iter().zip(&outcomes).enumerate() {
        write!(csv, "{i}").unwrap();
        for (_, v) in point {
            write!(csv, ",{}", value_text(v)).unwrap();
        }
        match outcome {
            Ok(row) => {
                for c in columns {
                    let v = row.iter().find(|(k, _)| k == c).map(|(_, v)| v.as_str()).unwrap_or("");
                    write!(csv, ",{v}").unwrap();
                }
                csv.push_str(",ok\n");
            }
            Err(msg) => {
                for _ in columns.iter() {
                    csv.push(',');
                }
                csv.push_str(",failed\n");
                failures.push(msg.clone());
            }
        }
    }
    let results = dir.join("results.csv");
    write_file(&results, &csv)?;
    if command == Command::Sweep {
        compare_modes(&points, &outcomes);
    }
    info!("wrote {} rows to {}", outcomes.len(), results.display());
    if let Some(first) = failures.first() {
        return Err(RunError::Solver {
            failed: failures.len(),
            total: outcomes.len(),
            first: first.clone(),
        });
    }
    Ok(RunSummary {
        results,
        manifest,
        rows: outcomes.len(),
    })
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

const SINGLE_PHASE_COLUMNS: [&str; 10] = [
    "n_cells",
    "dim_c",
    "dim_cc",
    "iterations",
    "converged",
    "final_relres",
    "cond_estimate",
    "mode",
    "setup_s",
    "solve_s",
];

fn single_phase(cfg: &ExperimentConfig, point: usize) -> Result<Row, String> {
    let grid = cfg.build_grid().map_err(core_failure)?;
    let field = cfg.build_field(&grid).map_err(core_failure)?;
    let nf = normalize(&field, &grid).map_err(core_failure)?;
    let t0 = Instant::now();
    let sys = assemble(&nf, &grid, &cfg.boundary(), &default_sources(&grid), None).map_err(core_failure)?;
    let spaces = build_spaces(&sys, nf.trace(), &grid, cfg.rule()).map_err(core_failure)?;
    let prec = ThreeGridPreconditioner::new(&sys, &spaces, &grid, cfg.prec()).map_err(core_failure)?;
    let setup = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (x, rep) = krylov_solve(&sys.a, &prec, &sys.rhs, None, sys.nullspace.as_deref(), &cfg.solver())
        .map_err(core_failure)?;
    let solve_s = t1.elapsed().as_secs_f64();
    dump(cfg, point, &field, &sys, &x)?;
    let row = vec![
        ("n_cells", grid.n_cells().to_string()),
        ("dim_c", spaces.c.r.nrows().to_string()),
        ("dim_cc", spaces.cc.r.nrows().to_string()),
        ("iterations", rep.iterations.to_string()),
        ("converged", rep.converged.to_string()),
        ("final_relres", format!("{:.6e}", rep.final_relres())),
        (
            "cond_estimate",
            rep.spectrum.map(|s| format!("{:.6e}", s.cond)).unwrap_or_default(),
        ),
        (
            "mode",
            match cfg.smoother.mode {
                ModeSpec::Inexact => "inexact".to_string(),
                ModeSpec::Exact => "exact".to_string(),
            },
        ),
        ("setup_s", format!("{setup:.4}")),
        ("solve_s", format!("{solve_s:.4}")),
    ];
    if !rep.converged {
        return Err(format!(
            "point {point}: no convergence in {} iterations (relative residual {:.3e})",
            rep.iterations,
            rep.final_relres()
        ));
    }
    Ok(row)
}

fn dump(
    cfg: &ExperimentConfig,
    point: usize,
    field: &darcy_core::field::PermeabilityField,
    sys: &PressureSystem,
    x: &[f64],
) -> Result<(), String> {
    let dir = &cfg.output.dir;
    if cfg.output.dump_field {
        save_raw(field, &dir.join(format!("field_{point:04}.bin")), RawLayout::default()).map_err(core_failure)?;
    }
    if cfg.output.dump_solution {
        let bytes: Vec<u8> = x.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(format!("solution_{point:04}.bin"));
        fs::write(&path, bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if cfg.output.dump_system {
        let path = dir.join(format!("system_{point:04}.mtx"));
        fs::write(&path, matrix_market(sys)).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

/// Coordinate-format text of `A`, one-based, followed by the right-hand side
/// as comment lines.
pub fn matrix_market(sys: &PressureSystem) -> String {
    let n = sys.a.nrows();
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    writeln!(s, "{n} {n} {}", sys.a.nnz()).unwrap();
    for i in 0..n {
        let (cols, vals) = sys.a.row(i);
        for (j, v) in cols.iter().zip(vals) {
            writeln!(s, "{} {} {:.17e}", i + 1, j + 1, v).unwrap();
        }
    }
    for (i, b) in sys.rhs.iter().enumerate() {
        writeln!(s, "% rhs {} {:.17e}", i + 1, b).unwrap();
    }
    s
}

/// Warns when an exact-mode row needs more iterations than its inexact twin.
fn compare_modes(points: &[Vec<(String, toml::Value)>], outcomes: &[Result<Row, String>]) {
    let iters = |r: &Row| r.iter().find(|(k, _)| *k == "iterations").and_then(|(_, v)| v.parse::<usize>().ok());
    let key_of = |p: &Vec<(String, toml::Value)>| {
        p.iter()
            .filter(|(k, _)| k != "smoother.mode")
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    for (i, (p, o)) in points.iter().zip(outcomes).enumerate() {
        let Ok(row) = o else { continue };
        if !p.iter().any(|(k, v)| k == "smoother.mode" && v.as_str() == Some("exact")) {
            continue;
        }
        for (j, (q, o2)) in points.iter().zip(outcomes).enumerate() {
            let Ok(other) = o2 else { continue };
            if i == j || key_of(p) != key_of(q) {
                continue;
            }
            if let (Some(e), Some(n)) = (iters(row), iters(other)) {
                if e > n {
                    warn!("exact mode took {e} iterations, inexact {n} at {}", key_of(p));
                }
            }
        }
    }
}

const THEORY_COLUMNS: [&str; 17] = [
    "n_cells",
    "dim_c",
    "dim_cc",
    "cond_tg",
    "cond_itg",
    "cond_bc",
    "c_star",
    "c_lambda",
    "c_c_lambda",
    "maxmin_value",
    "maxmin_relative_error",
    "itg_upper_slack",
    "itg_lower_slack",
    "tg_cond_bound",
    "tg_cond_slack",
    "itg_cond_bound",
    "itg_cond_slack",
];

fn theory(cfg: &ExperimentConfig) -> Result<Row, String> {
    let grid = cfg.build_grid().map_err(core_failure)?;
    let field = cfg.build_field(&grid).map_err(core_failure)?;
    let nf = normalize(&field, &grid).map_err(core_failure)?;
    let sys = assemble(&nf, &grid, &cfg.boundary(), &default_sources(&grid), None).map_err(core_failure)?;
    let spaces = build_spaces(&sys, nf.trace(), &grid, cfg.rule()).map_err(core_failure)?;
    let rep = core_verify(&sys, &grid, &spaces, cfg.prec()).map_err(core_failure)?;
    let e = |v: f64| format!("{v:.9e}");
    Ok(vec![
        ("n_cells", grid.n_cells().to_string()),
        ("dim_c", spaces.c.r.nrows().to_string()),
        ("dim_cc", spaces.cc.r.nrows().to_string()),
        ("cond_tg", e(rep.exact.cond)),
        ("cond_itg", e(rep.inexact.cond)),
        ("cond_bc", e(rep.bc.cond)),
        ("c_star", e(rep.c_star)),
        ("c_lambda", e(rep.c_lambda)),
        ("c_c_lambda", e(rep.c_c_lambda)),
        ("maxmin_value", e(rep.maxmin_value)),
        ("maxmin_relative_error", e(rep.maxmin_relative_error)),
        ("itg_upper_slack", e(rep.itg_upper_slack)),
        ("itg_lower_slack", e(rep.itg_lower_slack)),
        ("tg_cond_bound", e(rep.tg_cond_bound)),
        ("tg_cond_slack", e(rep.tg_cond_slack)),
        ("itg_cond_bound", e(rep.itg_cond_bound)),
        ("itg_cond_slack", e(rep.itg_cond_slack)),
    ])
}

const SIMULATE_COLUMNS: [&str; 12] = [
    "n_cells",
    "steps",
    "final_time_days",
    "injected_water_ft3",
    "produced_water_ft3",
    "produced_oil_ft3",
    "max_balance_error",
    "s_min",
    "s_max",
    "pressure_iterations",
    "setup_s",
    "solve_s",
];

pub fn simulation_config(cfg: &ExperimentConfig) -> Result<SimulationConfig, ConfigError> {
    let grid = cfg.build_grid()?;
    let field = cfg.build_field(&grid)?;
    let tp = &cfg.two_phase;
    let wells = WellSet::five_spot(&grid, &field, tp.rate_bbl_day, tp.p_bh, tp.r_wb, cfg.producer_model())?;
    let mut sim = SimulationConfig::five_spot(grid, field, cfg.rule())?;
    sim.fluid = FluidModel::new(tp.mu_w, tp.mu_o)?;
    sim.wells = wells;
    sim.initial_saturation = tp.initial_saturation;
    sim.initial_pressure = tp.p_bh;
    sim.prec = cfg.prec();
    sim.solver = cfg.solver();
    sim.ds_max = tp.ds_max;
    sim.substeps = tp.substeps;
    sim.end_time = tp.end_time;
    sim.max_steps = tp.max_steps;
    sim.dt_max = tp.dt_max;
    sim.refresh_every = tp.refresh_every;
    sim.snapshot_times = tp.snapshot_times.clone();
    sim.output_dir = Some(cfg.output.dir.clone());
    Ok(sim)
}

fn simulate(cfg: &ExperimentConfig) -> Result<Row, String> {
    let sim = simulation_config(cfg).map_err(core_failure)?;
    let res = run_simulation(&sim).map_err(core_failure)?;
    let steps = &res.steps;
    let sum = |f: fn(&darcy_core::twophase::StepRecord) -> f64| steps.iter().map(f).sum::<f64>();
    let e = |v: f64| format!("{v:.9e}");
    Ok(vec![
        ("n_cells", sim.grid.n_cells().to_string()),
        ("steps", steps.len().to_string()),
        ("final_time_days", e(res.state.time)),
        ("injected_water_ft3", e(sum(|r| r.injected_water))),
        ("produced_water_ft3", e(sum(|r| r.produced_water))),
        ("produced_oil_ft3", e(sum(|r| r.produced_oil))),
        ("max_balance_error", e(steps.iter().map(|r| r.balance_error).fold(0.0, f64::max))),
        ("s_min", e(steps.iter().map(|r| r.s_min).fold(f64::INFINITY, f64::min))),
        ("s_max", e(steps.iter().map(|r| r.s_max).fold(f64::NEG_INFINITY, f64::max))),
        ("pressure_iterations", steps.iter().map(|r| r.iterations).sum::<usize>().to_string()),
        ("setup_s", format!("{:.4}", sum(|r| r.setup_seconds))),
        ("solve_s", format!("{:.4}", sum(|r| r.solve_seconds))),
    ])
}
