//! Improved IMPES for incompressible water/oil flow: one implicit pressure
//! solve with the three-grid preconditioner, then `M` explicit saturation
//! substeps with upstream fractional flow.
//!
//! Units: ft, days, psi, mD, cP. Rates are ft³/day; cell sources and face
//! fluxes are per unit cell volume (1/day).

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::coarse::{build_spaces, SelectionRule, SpectralSpaces};
use crate::error::{Error, Result};
use crate::field::{normalize, NormalizedField, PermeabilityField};
use crate::grid::GridHierarchy;
use crate::krylov::{self, Method, SolveReport, SolverConfig};
use crate::mgprec::{PrecConfig, ThreeGridPreconditioner};
use crate::tpfa::{assemble_weighted, Boundary, FaceWeights, PressureSystem, VelocityField, WellTerms};

/// ft³/day through 1 ft² for 1 mD, 1 cP and 1 psi/ft.
pub const DARCY: f64 = 0.0063283;
pub const BBL_FT3: f64 = 5.614583;
pub const S_MIN: f64 = 0.2;
pub const S_MAX: f64 = 0.8;
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidModel {
    pub mu_w: f64,
    pub mu_o: f64,
}

impl Default for FluidModel {
    fn default() -> Self {
        Self { mu_w: 0.3, mu_o: 3.0 }
    }
}

impl FluidModel {
    pub fn new(mu_w: f64, mu_o: f64) -> Result<Self> {
        for (what, v) in [("water viscosity", mu_w), ("oil viscosity", mu_o)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositive { what, index: 0, value: v });
            }
        }
        Ok(Self { mu_w, mu_o })
    }

    /// `(k_w^r, k_o^r)` with the normalized saturation clamped to `[0, 1]`.
    pub fn rel_perm(&self, s: f64) -> (f64, f64) {
        let e = ((s - S_MIN) / (S_MAX - S_MIN)).clamp(0.0, 1.0);
        (e * e, (1.0 - e) * (1.0 - e))
    }

    /// `(λ, f_w)` at one saturation.
    pub fn mobility(&self, s: f64) -> (f64, f64) {
        let (kw, ko) = self.rel_perm(s);
        let lw = kw / self.mu_w;
        let lambda = lw + ko / self.mu_o;
        (lambda, lw / lambda)
    }

    pub fn fractional_flow(&self, s: f64) -> f64 {
        self.mobility(s).1
    }
}

fn check_saturation(cell: usize, s: f64) -> Result<()> {
    if !(s >= S_MIN - BOUND_SLACK && s <= S_MAX + BOUND_SLACK) {
        return Err(Error::SaturationOutOfRange { cell, value: s });
    }
    Ok(())
}

/// Per-cell total mobility and fractional flow.
pub fn mobilities(fluid: &FluidModel, s: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    for (c, &v) in s.iter().enumerate() {
        check_saturation(c, v)?;
    }
    Ok(s.iter().map(|&v| fluid.mobility(v)).unzip())
}

/// Equivalent radii `(r₁, r₂)` of the well-index formula.
pub fn equivalent_radii(hx: f64, hy: f64) -> (f64, f64) {
    (
        (9.0 * hx * hx + hy * hy).sqrt() / 2.0,
        (hx * hx + 9.0 * hy * hy).sqrt() / 2.0,
    )
}

/// Geometric well index in 1/ft².
pub fn well_index(hx: f64, hy: f64, r_wb: f64) -> Result<f64> {
    for (what, v) in [("h_x", hx), ("h_y", hy), ("wellbore radius", r_wb)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositive { what, index: 0, value: v });
        }
    }
    let (r1, r2) = equivalent_radii(hx, hy);
    let denom = 2.0 / PI * (hy / hx * (r1 / r_wb).ln() + hx / hy * (r2 / r_wb).ln()) - 1.0;
    if r1 <= r_wb || r2 <= r_wb || !(denom > 0.0) {
        return Err(Error::WellboreTooLarge { r_wb, r1, r2 });
    }
    Ok((1.0 / (hx * hx) + 1.0 / (hy * hy)) / denom)
}

/// How a producer couples the cell pressure to its rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProducerModel {
    /// `WI κ (1/μ_w + 1/μ_o)`, no relative permeability.
    #[default]
    AsWritten,
    /// `WI κ λ(S)`.
    MobilityWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProducerCell {
    pub cell: usize,
    pub wi: f64,
    /// `√(κ_x κ_y)` in mD.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellSet {
    pub injector_cells: Vec<usize>,
    /// Total injection, ft³/day.
    pub injection_rate: f64,
    pub producers: Vec<ProducerCell>,
    pub p_bh: f64,
    pub model: ProducerModel,
}

impl WellSet {
    pub fn none() -> Self {
        Self {
            injector_cells: Vec::new(),
            injection_rate: 0.0,
            producers: Vec::new(),
            p_bh: 0.0,
            model: ProducerModel::AsWritten,
        }
    }

    /// Vertical injector through the central column, producers through the
    /// four corner columns.
    pub fn five_spot(
        grid: &GridHierarchy,
        field: &PermeabilityField,
        rate_bbl_day: f64,
        p_bh: f64,
        r_wb: f64,
        model: ProducerModel,
    ) -> Result<Self> {
        if field.len() != grid.n_cells() {
            return Err(Error::dims("field", grid.n_cells(), field.len()));
        }
        if !(rate_bbl_day >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "injection rate {rate_bbl_day} must be non-negative"
            )));
        }
        let [nx, ny, nz] = grid.cells();
        let h = grid.h();
        let wi = well_index(h[0], h[1], r_wb)?;
        let mut injector_cells = Vec::with_capacity(nz);
        let mut producers = Vec::with_capacity(4 * nz);
        for k in 0..nz {
            injector_cells.push(grid.cell_index(nx / 2, ny / 2, k)?);
            for (i, j) in [(0, 0), (nx - 1, 0), (0, ny - 1), (nx - 1, ny - 1)] {
                let cell = grid.cell_index(i, j, k)?;
                let kp = field.perm()[cell];
                producers.push(ProducerCell {
                    cell,
                    wi,
                    kappa: (kp[0] * kp[1]).sqrt(),
                });
            }
        }
        Ok(Self {
            injector_cells,
            injection_rate: rate_bbl_day * BBL_FT3,
            producers,
            p_bh,
            model,
        })
    }

    /// Water injection per unit volume (1/day), split equally over the
    /// injector cells.
    pub fn injection_density(&self, grid: &GridHierarchy) -> Vec<f64> {
        let mut q = vec![0.0; grid.n_cells()];
        if !self.injector_cells.is_empty() {
            let per = self.injection_rate / self.injector_cells.len() as f64 / grid.cell_volume();
            for &c in &self.injector_cells {
                q[c] += per;
            }
        }
        q
    }

    /// Producer diagonal and right-hand side at the given cell mobilities.
    pub fn coupling(&self, fluid: &FluidModel, lambda: &[f64]) -> WellTerms {
        let mut w = WellTerms::none(lambda.len());
        for pc in &self.producers {
            let mob = match self.model {
                ProducerModel::AsWritten => 1.0 / fluid.mu_w + 1.0 / fluid.mu_o,
                ProducerModel::MobilityWeighted => lambda[pc.cell],
            };
            let d = DARCY * pc.wi * pc.kappa * mob;
            w.diag[pc.cell] += d;
            w.rhs[pc.cell] += d * self.p_bh;
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationState {
    pub s: Vec<f64>,
    /// Days.
    pub time: f64,
    pub porosity: Vec<f64>,
}

impl SaturationState {
    pub fn new(s: Vec<f64>, porosity: Vec<f64>) -> Result<Self> {
        if s.len() != porosity.len() {
            return Err(Error::dims("porosity", s.len(), porosity.len()));
        }
        for (c, &v) in s.iter().enumerate() {
            check_saturation(c, v)?;
        }
        for (c, &v) in porosity.iter().enumerate() {
            if !(v > 0.0) {
                return Err(Error::NonPositive { what: "porosity", index: c, value: v });
            }
        }
        Ok(Self { s, time: 0.0, porosity })
    }

    pub fn uniform(value: f64, porosity: Vec<f64>) -> Result<Self> {
        Self::new(vec![value; porosity.len()], porosity)
    }

    /// Water volume in ft³.
    pub fn water_volume(&self, cell_volume: f64) -> f64 {
        self.s.iter().zip(&self.porosity).map(|(s, p)| s * p).sum::<f64>() * cell_volume
    }
}

/// Everything the pressure equation needs apart from the saturation.
#[derive(Debug, Clone, Copy)]
pub struct PressureProblem<'a> {
    pub grid: &'a GridHierarchy,
    /// `κ/h²` in mD/ft².
    pub field: &'a NormalizedField,
    pub fluid: FluidModel,
    pub wells: &'a WellSet,
    /// Extra source per unit volume, 1/day.
    pub background: Option<&'a [f64]>,
    pub rule: SelectionRule,
    pub prec: PrecConfig,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone)]
pub struct PressureStep {
    pub p: Vec<f64>,
    pub system: PressureSystem,
    pub velocity: VelocityField,
    pub report: SolveReport,
    pub spaces: SpectralSpaces,
}

/// Mobility-scaled system at the current saturation.
pub fn pressure_system(problem: &PressureProblem, state: &SaturationState) -> Result<PressureSystem> {
    let grid = problem.grid;
    let (lambda, _) = mobilities(&problem.fluid, &state.s)?;
    let faces = grid
        .internal_faces()
        .map(|f| DARCY * 0.5 * (lambda[f.minus] + lambda[f.plus]))
        .collect();
    let cells = lambda.iter().map(|l| DARCY * l).collect();
    let weights = FaceWeights { faces, cells };
    let mut source = problem.wells.injection_density(grid);
    if let Some(b) = problem.background {
        if b.len() != source.len() {
            return Err(Error::dims("background source", source.len(), b.len()));
        }
        source.iter_mut().zip(b).for_each(|(s, v)| *s += v);
    }
    let wells = problem.wells.coupling(&problem.fluid, &lambda);
    assemble_weighted(
        problem.field,
        grid,
        &Boundary::NoFlow,
        &source,
        Some(&wells),
        Some(&weights),
    )
}

/// Implicit pressure solve. `previous` supplies the warm start and, when
/// `reuse` is set, the spectral bases to keep.
pub fn pressure_step(
    problem: &PressureProblem,
    state: &SaturationState,
    p0: Option<&[f64]>,
    reuse: Option<&SpectralSpaces>,
) -> Result<PressureStep> {
    let system = pressure_system(problem, state)?;
    let spaces = match reuse {
        Some(old) => {
            let mut sp = old.clone();
            sp.refresh_operators(&system.a)?;
            sp
        }
        None => {
            let (lambda, _) = mobilities(&problem.fluid, &state.s)?;
            let scaled: Vec<f64> = lambda.iter().map(|l| DARCY * l).collect();
            let trace = problem.field.scaled_cells(&scaled)?;
            build_spaces(&system, trace.trace(), problem.grid, problem.rule)?
        }
    };
    let prec = ThreeGridPreconditioner::new(&system, &spaces, problem.grid, problem.prec)?;
    let (p, mut report) = krylov::solve(
        &system.a,
        &prec,
        &system.rhs,
        p0,
        system.nullspace.as_deref(),
        &problem.solver,
    )?;
    report.setup_seconds += prec.setup_seconds;
    if !report.converged {
        return Err(Error::NotConverged {
            iterations: report.iterations,
            relres: report.final_relres(),
        });
    }
    let velocity = crate::tpfa::recover_velocity(&system, &p)?;
    Ok(PressureStep { p, system, velocity, report, spaces })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportConfig {
    pub ds_max: f64,
    pub substeps: usize,
    /// Upper bound on a single substep, days.
    pub dt_max: f64,
    /// Absolute time not to step past.
    pub t_end: f64,
}

/// Volumes in ft³ accumulated over the substeps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransportReport {
    pub dt: f64,
    pub substeps: usize,
    pub injected_water: f64,
    pub produced_water: f64,
    pub produced_oil: f64,
    pub max_ds: f64,
}

/// Explicit upstream-weighted substeps. Wells: injector cells receive pure
/// water at `injection`; negative `well_inflow` is removed at the cell's own
/// fractional flow; positive inflow through a well or a Dirichlet side is
/// water.
pub fn transport_substeps(
    state: &mut SaturationState,
    fluid: &FluidModel,
    grid: &GridHierarchy,
    v: &VelocityField,
    injection: &[f64],
    cfg: &TransportConfig,
) -> Result<TransportReport> {
    let n = state.s.len();
    if grid.n_cells() != n || injection.len() != n || v.well_inflow.len() != n {
        return Err(Error::dims("transport inputs", n, injection.len().min(v.well_inflow.len())));
    }
    if !(cfg.ds_max > 0.0) || !(cfg.dt_max > 0.0) {
        return Err(Error::InvalidArgument(
            "DS_max and dt_max must be positive".into(),
        ));
    }
    // Gather lists: per cell, (face index, +1 if the cell is `minus`).
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (e, f) in v.faces.iter().enumerate() {
        adj[f.minus].push((e, 1.0));
        adj[f.plus].push((e, -1.0));
    }
    let vol = grid.cell_volume();
    // Total outflow per unit pore volume.
    let outflow: Vec<f64> = (0..n)
        .map(|c| {
            let faces: f64 = adj[c].iter().map(|&(e, sg)| (sg * v.flux[e]).max(0.0)).sum();
            let out = faces + v.boundary_outflow[c].max(0.0) + (-v.well_inflow[c]).max(0.0);
            out / state.porosity[c]
        })
        .collect();
    let mut rep = TransportReport::default();
    for _ in 0..cfg.substeps {
        if state.time >= cfg.t_end {
            break;
        }
        let fw: Vec<f64> = state.s.iter().map(|&s| fluid.fractional_flow(s)).collect();
        let water_flux: Vec<f64> = v
            .faces
            .par_iter()
            .zip(&v.flux)
            .map(|(f, &q)| if q > 0.0 { fw[f.minus] * q } else { fw[f.plus] * q })
            .collect();
        // (net water gain per volume, producer water, producer oil)
        let terms: Vec<(f64, f64, f64)> = (0..n)
            .into_par_iter()
            .map(|c| {
                let out: f64 = adj[c].iter().map(|&(e, sg)| sg * water_flux[e]).sum();
                let mut gain = injection[c] - out;
                let b = v.boundary_outflow[c];
                gain -= if b > 0.0 { fw[c] * b } else { b };
                let w = v.well_inflow[c];
                let (pw, po) = if w < 0.0 {
                    gain += fw[c] * w;
                    (-fw[c] * w, -(1.0 - fw[c]) * w)
                } else {
                    gain += w;
                    (-w, 0.0)
                };
                (gain, pw, po)
            })
            .collect();
        let max_rate = terms
            .iter()
            .zip(&state.porosity)
            .map(|(t, phi)| (t.0 / phi).abs())
            .fold(0.0, f64::max);
        let mut dt = cfg.dt_max.min(cfg.t_end - state.time);
        if max_rate > 0.0 {
            dt = dt.min(cfg.ds_max / max_rate);
        }
        // Outflow times the secant slope of f_w towards the bound the cell is
        // moving to; keeps the update inside the bounds.
        let bound_rate = (0..n)
            .map(|c| {
                let s = state.s[c];
                let secant = if terms[c].0 > 0.0 && s < S_MAX {
                    (1.0 - fw[c]) / (S_MAX - s)
                } else if terms[c].0 < 0.0 && s > S_MIN {
                    fw[c] / (s - S_MIN)
                } else {
                    0.0
                };
                outflow[c] * secant
            })
            .fold(0.0, f64::max);
        if bound_rate > 0.0 {
            dt = dt.min(1.0 / bound_rate);
        }
        let mut max_ds = 0.0f64;
        for c in 0..n {
            let ds = dt * terms[c].0 / state.porosity[c];
            state.s[c] += ds;
            max_ds = max_ds.max(ds.abs());
            check_saturation(c, state.s[c])?;
        }
        let inj: f64 = injection.iter().sum();
        let (pw, po) = terms.iter().fold((0.0, 0.0), |a, t| (a.0 + t.1, a.1 + t.2));
        rep.injected_water += dt * vol * inj;
        rep.produced_water += dt * vol * pw;
        rep.produced_oil += dt * vol * po;
        rep.max_ds = rep.max_ds.max(max_ds);
        rep.dt += dt;
        rep.substeps += 1;
        state.time += dt;
    }
    Ok(rep)
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub grid: GridHierarchy,
    pub field: PermeabilityField,
    pub fluid: FluidModel,
    pub wells: WellSet,
    pub initial_saturation: f64,
    /// Initial pressure guess, psi.
    pub initial_pressure: f64,
    pub rule: SelectionRule,
    pub prec: PrecConfig,
    pub solver: SolverConfig,
    pub ds_max: f64,
    pub substeps: usize,
    pub end_time: f64,
    pub max_steps: Option<usize>,
    /// Defaults to `end_time / 1000`.
    pub dt_max: Option<f64>,
    /// Rebuild the spectral bases every this many pressure steps.
    pub refresh_every: usize,
    pub snapshot_times: Vec<f64>,
    pub output_dir: Option<PathBuf>,
}

impl SimulationConfig {
    /// Five-spot defaults on the given grid and field.
    pub fn five_spot(grid: GridHierarchy, field: PermeabilityField, rule: SelectionRule) -> Result<Self> {
        let wells = WellSet::five_spot(&grid, &field, 5000.0, 4000.0, 1.0, ProducerModel::AsWritten)?;
        Ok(Self {
            grid,
            field,
            fluid: FluidModel::default(),
            wells,
            initial_saturation: S_MIN,
            initial_pressure: 4000.0,
            rule,
            prec: PrecConfig::default(),
            solver: SolverConfig {
                method: Method::Cg,
                rtol: 1e-9,
                ..SolverConfig::default()
            },
            ds_max: 0.001,
            substeps: 50,
            end_time: 2000.0,
            max_steps: None,
            dt_max: None,
            refresh_every: 1,
            snapshot_times: Vec::new(),
            output_dir: None,
        })
    }
}

/// One outer IMPES step; volumes in ft³, time in days.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub iterations: usize,
    pub relres: f64,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
    pub injected_water: f64,
    pub produced_water: f64,
    pub produced_oil: f64,
    /// `|ΔV_w - (injected - produced)| / max(injected, produced, ΔV_w)`.
    pub balance_error: f64,
    pub max_ds: f64,
    pub s_min: f64,
    pub s_max: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub steps: Vec<StepRecord>,
    pub state: SaturationState,
    pub pressure: Vec<f64>,
    pub snapshots: Vec<PathBuf>,
}

pub fn run_simulation(cfg: &SimulationConfig) -> Result<SimulationResult> {
    let grid = &cfg.grid;
    let n = grid.n_cells();
    if cfg.field.len() != n {
        return Err(Error::dims("field", n, cfg.field.len()));
    }
    if cfg.substeps == 0 || cfg.refresh_every == 0 {
        return Err(Error::InvalidArgument(
            "substeps and refresh_every must be positive".into(),
        ));
    }
    if !(cfg.end_time > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "end time {} must be positive",
            cfg.end_time
        )));
    }
    let nf = normalize(&cfg.field, grid)?;
    let mut state = SaturationState::uniform(cfg.initial_saturation, cfg.field.porosity().to_vec())?;
    let problem = PressureProblem {
        grid,
        field: &nf,
        fluid: cfg.fluid,
        wells: &cfg.wells,
        background: None,
        rule: cfg.rule,
        prec: cfg.prec,
        solver: cfg.solver,
    };
    let transport = TransportConfig {
        ds_max: cfg.ds_max,
        substeps: cfg.substeps,
        dt_max: cfg.dt_max.unwrap_or(cfg.end_time / 1000.0),
        t_end: cfg.end_time,
    };
    let injection = cfg.wells.injection_density(grid);
    let vol = grid.cell_volume();

    let mut p = vec![cfg.initial_pressure; n];
    let mut spaces: Option<SpectralSpaces> = None;
    let mut steps = Vec::new();
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = cfg.snapshot_times.clone();
    pending.sort_by(|a, b| a.total_cmp(b));
    let mut pending = pending.into_iter().peekable();
    let mut step = 0;
    while state.time < cfg.end_time && cfg.max_steps.is_none_or(|m| step < m) {
        let at = |e: Error| Error::Step { step, source: Box::new(e) };
        let reuse = spaces.as_ref().filter(|_| step % cfg.refresh_every != 0);
        let ps = pressure_step(&problem, &state, Some(&p), reuse).map_err(at)?;
        let before = state.water_volume(vol);
        let tr = transport_substeps(&mut state, &cfg.fluid, grid, &ps.velocity, &injection, &transport)
            .map_err(at)?;
        let gained = state.water_volume(vol) - before;
        let net = tr.injected_water - tr.produced_water;
        let scale = tr.injected_water.max(tr.produced_water).max(gained.abs());
        let balance_error = if scale > 0.0 { (gained - net).abs() / scale } else { 0.0 };
        let (s_min, s_max) = state
            .s
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        log::debug!(
            "step {step}: t = {:.4} d, {} iterations, balance {balance_error:.2e}",
            state.time,
            ps.report.iterations
        );
        steps.push(StepRecord {
            step,
            time: state.time,
            dt: tr.dt,
            iterations: ps.report.iterations,
            relres: ps.report.final_relres(),
            setup_seconds: ps.report.setup_seconds,
            solve_seconds: ps.report.solve_seconds,
            injected_water: tr.injected_water,
            produced_water: tr.produced_water,
            produced_oil: tr.produced_oil,
            balance_error,
            max_ds: tr.max_ds,
            s_min,
            s_max,
        });
        p = ps.p;
        if reuse.is_none() {
            spaces = Some(ps.spaces);
        }
        if let Some(dir) = &cfg.output_dir {
            while pending.peek().is_some_and(|&t| t <= state.time) {
                pending.next();
                let path = dir.join(format!("snapshot_{step:05}.vtk"));
                write_vtk(&path, grid, &p, &state.s, state.time)?;
                snapshots.push(path);
            }
        }
        step += 1;
        if tr.dt == 0.0 {
            break;
        }
    }
    if let Some(dir) = &cfg.output_dir {
        let path = dir.join("summary.csv");
        let file = File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        write_summary_csv(BufWriter::new(file), &steps)
            .map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(SimulationResult { steps, state, pressure: p, snapshots })
}

/// Legacy VTK structured points with cell pressure and saturation.
pub fn write_vtk(path: &Path, grid: &GridHierarchy, p: &[f64], s: &[f64], time: f64) -> Result<()> {
    let io = |e| Error::Io { path: path.to_path_buf(), source: e };
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    let [nx, ny, nz] = grid.cells();
    let h = grid.h();
    (|| -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "two-phase snapshot t = {time} days")?;
        writeln!(w, "ASCII\nDATASET STRUCTURED_POINTS")?;
        writeln!(w, "DIMENSIONS {} {} {}", nx + 1, ny + 1, nz + 1)?;
        writeln!(w, "ORIGIN 0 0 0\nSPACING {} {} {}", h[0], h[1], h[2])?;
        writeln!(w, "CELL_DATA {}", p.len())?;
        for (name, data) in [("pressure_psi", p), ("water_saturation", s)] {
            writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
            for v in data {
                writeln!(w, "{v:e}")?;
            }
        }
        w.flush()
    })()
    .map_err(io)
}

pub fn write_summary_csv<W: Write>(mut out: W, steps: &[StepRecord]) -> std::io::Result<()> {
    writeln!(
        out,
        "step,time_days,dt_days,iterations,relres,setup_s,solve_s,injected_water_ft3,produced_water_ft3,produced_oil_ft3,balance_error,max_ds,s_min,s_max"
    )?;
    for r in steps {
        writeln!(
            out,
            "{},{},{},{},{:e},{},{},{},{},{},{:e},{:e},{},{}",
            r.step,
            r.time,
            r.dt,
            r.iterations,
            r.relres,
            r.setup_seconds,
            r.solve_seconds,
            r.injected_water,
            r.produced_water,
            r.produced_oil,
            r.balance_error,
            r.max_ds,
            r.s_min,
            r.s_max
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mobility_endpoints() {
        let f = FluidModel::default();
        let (l, fw) = f.mobility(0.2);
        assert!((l - 1.0 / 3.0).abs() < 1e-15 && fw == 0.0);
        let (l, fw) = f.mobility(0.8);
        assert!((l - 1.0 / 0.3).abs() < 1e-12 && fw == 1.0);
        let (l, fw) = f.mobility(0.5);
        assert!((l - (0.25 / 0.3 + 0.25 / 3.0)).abs() < 1e-14);
        assert!((fw - (0.25 / 0.3) / l).abs() < 1e-14);
        assert!((fw - 0.909090909).abs() < 1e-8);
    }

    #[test]
    fn out_of_range_saturation() {
        let f = FluidModel::default();
        assert!(matches!(
            mobilities(&f, &[0.5, 0.81]),
            Err(Error::SaturationOutOfRange { cell: 1, .. })
        ));
        assert!(mobilities(&f, &[0.2 - 1e-10]).is_ok());
    }

    #[test]
    fn wellbore_too_large() {
        assert!(matches!(
            well_index(1.0, 1.0, 5.0),
            Err(Error::WellboreTooLarge { .. })
        ));
        assert!(well_index(0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn stagnant_transport_advances_time() {
        let grid = crate::grid::build_hierarchy(2, &[4, 4], &[4.0, 4.0], &[1, 1], 2).unwrap();
        let faces: Vec<_> = grid.internal_faces().collect();
        let v = VelocityField {
            flux: vec![0.0; faces.len()],
            faces,
            boundary_outflow: vec![0.0; 16],
            well_inflow: vec![0.0; 16],
        };
        let mut st = SaturationState::uniform(0.3, vec![0.2; 16]).unwrap();
        let cfg = TransportConfig { ds_max: 1e-3, substeps: 7, dt_max: 0.5, t_end: 100.0 };
        let rep = transport_substeps(&mut st, &FluidModel::default(), &grid, &v, &[0.0; 16], &cfg)
            .unwrap();
        assert_eq!(rep.substeps, 7);
        assert!((st.time - 3.5).abs() < 1e-14);
        assert!(st.s.iter().all(|&s| s == 0.3));
    }
}
