//! Two-way coupling of the modal plate and the depth-averaged flow under a
//! harmonic voltage drive.
//!
//! The plate sits on top of the chamber; W is positive away from the fluid.
//! Membrane velocity enters the flow as a volume source S = −Ẇ/h on chamber
//! cells, and chamber pressure loads the plate through the modal forces
//! f_k = Σ p φ_k dA.

pub mod diagnostics;
pub mod scheme;

use std::f64::consts::PI;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::fluid::{build_grid, FlowSolver, FlowState, FluidGrid, FluidProps, PressureSettings, PumpGeometry};
use crate::linalg::{generalized_symmetric_eigen, Matrix};
use crate::plate::{piezo_force_per_volt, ModalDynamics, ModalState, Mode, PlateModel};
use crate::{Error, Result, M3S_TO_UL_MIN};

pub use diagnostics::{harmonic_fit, modal_fractions, mode_centroid, phase_lag, wrap_lag};
pub use scheme::{coupling_scheme, CouplingScheme, InterfaceProblem, InterfaceSolution, SchemeSettings, COUPLING_SCHEMES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSignal {
    pub amplitude_volts: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

impl Default for DriveSignal {
    fn default() -> Self {
        Self {
            amplitude_volts: 40.0,
            frequency_hz: 3200.0,
            phase: 0.0,
        }
    }
}

impl DriveSignal {
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency_hz
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency_hz
    }

    /// Voltage at time `t` with a raised-cosine amplitude ramp over
    /// `ramp_cycles` periods.
    pub fn voltage(&self, t: f64, ramp_cycles: f64) -> f64 {
        let ramp_time = ramp_cycles * self.period();
        let ramp = if ramp_time > 0.0 && t < ramp_time {
            0.5 * (1.0 - (PI * t / ramp_time).cos())
        } else {
            1.0
        };
        self.amplitude_volts * ramp * (self.omega() * t + self.phase).sin()
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.amplitude_volts >= 0.0) || !self.amplitude_volts.is_finite() {
            p.push("drive.amplitude_volts must be >= 0".to_string());
        }
        if !(self.frequency_hz > 0.0) || !self.frequency_hz.is_finite() {
            p.push("drive.frequency_hz must be > 0".to_string());
        }
        if !self.phase.is_finite() {
            p.push("drive.phase must be finite".to_string());
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    /// dt = T_drive / steps_per_period.
    pub steps_per_period: usize,
    pub scheme: String,
    pub subiterations_max: usize,
    pub relaxation_omega0: f64,
    pub interface_tolerance: f64,
    pub cycles_total: usize,
    pub cycles_averaged: usize,
    pub ramp_cycles: f64,
    pub pressure_solver: String,
    pub pressure_tolerance: f64,
    pub pressure_max_iterations: usize,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            steps_per_period: 400,
            scheme: "newton".to_string(),
            subiterations_max: 20,
            relaxation_omega0: 0.5,
            interface_tolerance: 1e-6,
            cycles_total: 12,
            cycles_averaged: 4,
            ramp_cycles: 2.0,
            pressure_solver: "cholesky".to_string(),
            pressure_tolerance: 1e-9,
            pressure_max_iterations: 20_000,
        }
    }
}

impl CouplingConfig {
    pub fn dt(&self, drive: &DriveSignal) -> f64 {
        drive.period() / self.steps_per_period as f64
    }

    pub fn scheme_settings(&self) -> SchemeSettings {
        SchemeSettings {
            subiterations_max: self.subiterations_max,
            relaxation_omega0: self.relaxation_omega0,
            interface_tolerance: self.interface_tolerance,
        }
    }

    pub fn pressure_settings(&self) -> PressureSettings {
        PressureSettings {
            tolerance: self.pressure_tolerance,
            max_iterations: self.pressure_max_iterations,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.steps_per_period < 8 {
            p.push("coupling.steps_per_period must be >= 8".to_string());
        }
        if !COUPLING_SCHEMES.contains(&self.scheme) {
            p.push(format!(
                "coupling.scheme '{}' unknown (available: {})",
                self.scheme,
                COUPLING_SCHEMES.names().collect::<Vec<_>>().join(", ")
            ));
        }
        if !crate::fluid::PRESSURE_SOLVERS.contains(&self.pressure_solver) {
            p.push(format!(
                "coupling.pressure_solver '{}' unknown (available: {})",
                self.pressure_solver,
                crate::fluid::PRESSURE_SOLVERS.names().collect::<Vec<_>>().join(", ")
            ));
        }
        if self.subiterations_max == 0 {
            p.push("coupling.subiterations_max must be >= 1".to_string());
        }
        if !(self.relaxation_omega0 > 0.0 && self.relaxation_omega0 <= 1.0) {
            p.push("coupling.relaxation_omega0 must be in (0, 1]".to_string());
        }
        if !(self.interface_tolerance > 0.0) {
            p.push("coupling.interface_tolerance must be > 0".to_string());
        }
        if self.cycles_total < 2 {
            p.push("coupling.cycles_total must be >= 2".to_string());
        }
        if self.cycles_averaged == 0 || self.cycles_averaged > self.cycles_total {
            p.push("coupling.cycles_averaged must be in 1..=cycles_total".to_string());
        }
        if !(self.ramp_cycles >= 0.0) {
            p.push("coupling.ramp_cycles must be >= 0".to_string());
        }
        if !(self.pressure_tolerance > 0.0) || self.pressure_max_iterations == 0 {
            p.push("coupling.pressure_tolerance and pressure_max_iterations must be > 0".to_string());
        }
        p
    }
}

/// Everything needed to build one coupled simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSetup {
    pub plate: PlateModel,
    pub geometry: PumpGeometry,
    pub target_dx: f64,
    pub fluid: FluidProps,
    pub drive: DriveSignal,
    pub coupling: CouplingConfig,
}

impl SimulationSetup {
    pub fn validate(&self) -> Result<()> {
        let mut p = self.drive.problems();
        p.extend(self.coupling.problems());
        if let Err(Error::Validation(m)) = self.plate.validate() {
            p.push(m);
        }
        if let Err(Error::Validation(m)) = self.geometry.validate() {
            p.push(m);
        }
        if (self.plate.radius - self.geometry.chamber_radius).abs() > 1e-12 * self.plate.radius {
            p.push("plate radius must equal the chamber radius".to_string());
        }
        if !(self.target_dx > 0.0) {
            p.push("grid.target_dx must be > 0".to_string());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p.join("; ")))
        }
    }
}

/// Mode shapes sampled at the chamber cells.
#[derive(Debug, Clone)]
pub struct ChamberSampling {
    /// Pressure unknown index of each chamber cell.
    pub rows: Vec<usize>,
    pub cells: Vec<usize>,
    pub points: Vec<(f64, f64)>,
    /// `phi[k][c]` for mode k at chamber cell c.
    pub phi: Vec<Vec<f64>>,
    pub max_abs_phi: Vec<f64>,
    pub cell_area: f64,
}

impl ChamberSampling {
    pub fn new(grid: &FluidGrid, modes: &[Mode]) -> Self {
        let rows = grid
            .chamber
            .iter()
            .map(|c| grid.unknown_of(c.cell).expect("chamber cells are unknowns"))
            .collect();
        let cells = grid.chamber.iter().map(|c| c.cell).collect();
        let points: Vec<(f64, f64)> = grid.chamber.iter().map(|c| (c.x, c.y)).collect();
        let phi: Vec<Vec<f64>> = modes
            .iter()
            .map(|m| grid.chamber.iter().map(|c| m.value(c.r, c.theta)).collect())
            .collect();
        let max_abs_phi = phi.iter().map(|p| p.iter().fold(0.0f64, |a, b| a.max(b.abs()))).collect();
        Self {
            rows,
            cells,
            points,
            phi,
            max_abs_phi,
            cell_area: grid.cell_area(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// W at each chamber cell for modal amplitudes `q`.
    pub fn deflection(&self, q: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        for (qk, phi) in q.iter().zip(&self.phi) {
            if *qk != 0.0 {
                for (wc, p) in w.iter_mut().zip(phi) {
                    *wc += qk * p;
                }
            }
        }
        w
    }

    /// f_k = Σ p φ_k dA from a per-unknown pressure vector.
    pub fn modal_forces(&self, p_unknown: &[f64]) -> Vec<f64> {
        self.phi
            .iter()
            .map(|phi| {
                self.rows.iter().zip(phi).map(|(&r, f)| p_unknown[r] * f).sum::<f64>() * self.cell_area
            })
            .collect()
    }

    /// Per-unknown source S = −Ẇ/h.
    pub fn source(&self, qdot: &[f64], depth: f64, unknowns: usize) -> Vec<f64> {
        let wdot = self.deflection(qdot);
        let mut s = vec![0.0; unknowns];
        for (&r, wd) in self.rows.iter().zip(wdot) {
            s[r] = -wd / depth;
        }
        s
    }

    /// ∫Ẇ dA over the chamber.
    pub fn volume_rate(&self, qdot: &[f64]) -> f64 {
        self.deflection(qdot).iter().sum::<f64>() * self.cell_area
    }
}

/// Modal forces from a cell-indexed pressure field: f_k = Σ_chamber p φ_k dA.
/// Positive pressure pushes the plate away from the fluid.
pub fn pressure_to_modal_forces(p: &[f64], grid: &FluidGrid, modes: &[Mode]) -> Vec<f64> {
    modes
        .iter()
        .map(|m| {
            grid.chamber.iter().map(|c| p[c.cell] * m.value(c.r, c.theta)).sum::<f64>() * grid.cell_area()
        })
        .collect()
}

/// Cell-indexed S = −Ẇ/h on chamber cells, zero elsewhere.
pub fn membrane_source(modes: &[Mode], state: &ModalState, grid: &FluidGrid, depth: f64) -> Vec<f64> {
    let mut s = vec![0.0; grid.nx * grid.ny];
    for c in &grid.chamber {
        let wdot: f64 = modes.iter().zip(&state.qdot).map(|(m, qd)| qd * m.value(c.r, c.theta)).sum();
        s[c.cell] = -wdot / depth;
    }
    s
}

/// Pressure response to unit modal velocities over one step:
/// p = p* + Σ q̇_k P_k and f = f* + A q̇.
#[derive(Debug, Clone)]
pub struct ModalPressureResponse {
    pub fields: Vec<Vec<f64>>,
    pub coupling: Matrix,
    pub dt: f64,
}

impl ModalPressureResponse {
    pub fn compute(fluid: &mut FlowSolver, sampling: &ChamberSampling, dt: f64) -> Result<Self> {
        let n = fluid.operator().len();
        let depth = fluid.depth();
        let modes = sampling.phi.len();
        let mut fields = Vec::with_capacity(modes);
        for k in 0..modes {
            let mut unit = vec![0.0; modes];
            unit[k] = 1.0;
            let src = sampling.source(&unit, depth, n);
            let rhs = fluid.source_rhs(&src, dt);
            let mut p = vec![0.0; n];
            fluid.solve_pressure(&rhs, &mut p)?;
            fields.push(p);
        }
        let coupling = Matrix::from_fn(modes, modes, |k, j| sampling.modal_forces(&fields[j])[k]);
        Ok(Self { fields, coupling, dt })
    }

    /// Added-mass matrix M_a = −dt A, independent of dt.
    pub fn added_mass(&self) -> Matrix {
        Matrix::from_fn(self.coupling.rows(), self.coupling.cols(), |i, j| -self.dt * self.coupling[(i, j)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub iterations: usize,
    pub converged: bool,
    pub interface_residual: f64,
    /// max|div u − S| relative to its allowed bound.
    pub divergence_ratio: f64,
    pub balance_error: f64,
    pub voltage: f64,
    pub outlet_flow: f64,
    pub inlet_flow: f64,
}

pub const DIVERGENCE_TOLERANCE: f64 = 1e-8;
pub const BALANCE_TOLERANCE: f64 = 1e-8;

pub struct Simulation {
    fluid: FlowSolver,
    modes: Vec<Mode>,
    dynamics: ModalDynamics,
    piezo_per_volt: Vec<f64>,
    sampling: ChamberSampling,
    response: ModalPressureResponse,
    scheme: Box<dyn CouplingScheme>,
    drive: DriveSignal,
    ramp_cycles: f64,
    dt: f64,
    plate: ModalState,
    flow: FlowState,
    fluid_force: Vec<f64>,
    pressure_guess: Vec<f64>,
    steps: usize,
}

impl Simulation {
    pub fn new(setup: &SimulationSetup) -> Result<Self> {
        setup.validate()?;
        let modes = setup.plate.modal_basis()?;
        let grid = build_grid(&setup.geometry, setup.target_dx)?;
        Self::from_parts(setup, modes, grid)
    }

    /// Builds from a precomputed modal basis and grid.
    pub fn from_parts(setup: &SimulationSetup, modes: Vec<Mode>, grid: FluidGrid) -> Result<Self> {
        let cfg = &setup.coupling;
        let dt = cfg.dt(&setup.drive);
        let mut fluid = FlowSolver::new(
            grid,
            setup.fluid,
            setup.geometry.depth,
            &cfg.pressure_solver,
            &cfg.pressure_settings(),
        )?;
        let sampling = ChamberSampling::new(fluid.grid(), &modes);
        let response = ModalPressureResponse::compute(&mut fluid, &sampling, dt)?;
        let dynamics = ModalDynamics::new(&modes, setup.plate.damping_ratio);
        let piezo_per_volt = modes.iter().map(|m| piezo_force_per_volt(&setup.plate, m)).collect();
        let flow = FlowState::at_rest(fluid.grid());
        let n = fluid.operator().len();
        debug!(
            "simulation: {} modes, {} pressure unknowns, {} chamber cells, dt {:e}",
            modes.len(),
            n,
            sampling.len(),
            dt
        );
        Ok(Self {
            scheme: coupling_scheme(&cfg.scheme, &cfg.scheme_settings())?,
            plate: ModalState::at_rest(modes.len()),
            fluid_force: vec![0.0; modes.len()],
            pressure_guess: vec![0.0; n],
            modes,
            dynamics,
            piezo_per_volt,
            sampling,
            response,
            fluid,
            drive: setup.drive,
            ramp_cycles: cfg.ramp_cycles,
            dt,
            flow,
            steps: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.plate.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn plate(&self) -> &ModalState {
        &self.plate
    }

    pub fn flow(&self) -> &FlowState {
        &self.flow
    }

    pub fn fluid(&self) -> &FlowSolver {
        &self.fluid
    }

    pub fn sampling(&self) -> &ChamberSampling {
        &self.sampling
    }

    pub fn response(&self) -> &ModalPressureResponse {
        &self.response
    }

    pub fn fluid_force(&self) -> &[f64] {
        &self.fluid_force
    }

    pub fn piezo_force_per_volt(&self) -> &[f64] {
        &self.piezo_per_volt
    }

    /// Centre deflection W(0, 0).
    pub fn center_deflection(&self) -> f64 {
        self.modes.iter().zip(&self.plate.q).map(|(m, q)| q * m.value(0.0, 0.0)).sum()
    }

    /// Mean pressure over chamber cells.
    pub fn chamber_mean_pressure(&self) -> f64 {
        let s = &self.sampling;
        if s.is_empty() {
            return 0.0;
        }
        s.cells.iter().map(|&c| self.flow.p[c]).sum::<f64>() / s.len() as f64
    }

    /// Upper bound of max|W| over the plate from modal amplitudes.
    pub fn deflection_bound(&self) -> f64 {
        self.plate.q.iter().zip(&self.sampling.max_abs_phi).map(|(q, m)| q.abs() * m).sum()
    }

    /// Advances plate and flow by one step.
    pub fn step(&mut self) -> Result<StepInfo> {
        let dt = self.dt;
        let t1 = self.plate.time + dt;
        let voltage = self.drive.voltage(t1, self.ramp_cycles);
        let piezo: Vec<f64> = self.piezo_per_volt.iter().map(|f| f * voltage).collect();
        let free = self.dynamics.step(&self.plate, &piezo, dt).qdot;
        let gain = self.dynamics.velocity_gain(dt);

        let predicted = self.fluid.predict(&self.flow, dt)?;
        let n = self.fluid.operator().len();
        let rhs = self.fluid.pressure_rhs(&predicted, &vec![0.0; n], dt);
        let mut p_star = std::mem::take(&mut self.pressure_guess);
        self.fluid.solve_pressure(&rhs, &mut p_star)?;
        let base_force = self.sampling.modal_forces(&p_star);

        let problem = InterfaceProblem {
            free_velocity: &free,
            gain: &gain,
            base_force: &base_force,
            coupling: &self.response.coupling,
            previous_force: &self.fluid_force,
        };
        let sol = self.scheme.solve(&problem)?;
        if !sol.converged {
            warn!(
                "interface not converged at t = {t1:e} after {} iterations (residual {:e})",
                sol.iterations, sol.residual
            );
        }
        // plate load consistent with the accepted interface velocity
        let load: Vec<f64> = (0..self.modes.len())
            .map(|k| piezo[k] + (sol.velocity[k] - free[k]) / gain[k])
            .collect();
        let plate = self.dynamics.step(&self.plate, &load, dt);

        let mut p = p_star.clone();
        for (qd, field) in plate.qdot.iter().zip(&self.response.fields) {
            if *qd != 0.0 {
                for (pv, fv) in p.iter_mut().zip(field) {
                    *pv += qd * fv;
                }
            }
        }
        let flow = self.fluid.project(&predicted, &p, dt);
        if !flow.is_finite() || !plate.is_finite() {
            return Err(Error::NonFinite("coupled state"));
        }

        let source = self.sampling.source(&plate.qdot, self.fluid.depth(), n);
        let residual = self.fluid.divergence_residual(&flow, &source);
        let (um, vm) = flow.max_speed();
        let limit = DIVERGENCE_TOLERANCE * um.max(vm) / self.fluid.grid().dx;
        let divergence_ratio = if residual == 0.0 { 0.0 } else { residual / limit };
        if divergence_ratio > 1.0 {
            return Err(Error::Conservation {
                step: self.steps + 1,
                what: "divergence residual",
                value: residual,
                limit,
            });
        }
        let outlet = self.fluid.outlet_flow(&flow);
        let inlet = self.fluid.inlet_flow(&flow);
        let volume_rate = self.sampling.volume_rate(&plate.qdot);
        // net outflow must equal the chamber volume loss; the sum cancels
        // face fluxes across the whole domain, so measure it against them
        let imbalance = (outlet - inlet) + volume_rate;
        let scale = self.fluid.gross_flux(&flow);
        let balance_error = if imbalance == 0.0 { 0.0 } else { imbalance.abs() / scale };
        if balance_error > BALANCE_TOLERANCE {
            return Err(Error::Conservation {
                step: self.steps + 1,
                what: "boundary flux balance",
                value: balance_error,
                limit: BALANCE_TOLERANCE,
            });
        }

        self.fluid_force = self.sampling.modal_forces(&p);
        self.pressure_guess = p_star;
        self.plate = plate;
        self.flow = flow;
        self.steps += 1;
        Ok(StepInfo {
            iterations: sol.iterations,
            converged: sol.converged,
            interface_residual: sol.residual,
            divergence_ratio,
            balance_error,
            voltage,
            outlet_flow: outlet,
            inlet_flow: inlet,
        })
    }
}

/// Per-step time series: `t_s, voltage_v, w_center_m, q_k..., Q_out_m3s,
/// p_chamber_mean_pa`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub mode_labels: Vec<(u32, u32)>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn header(&self) -> String {
        let mut cols = vec!["t_s".to_string(), "voltage_v".into(), "w_center_m".into()];
        cols.extend(self.mode_labels.iter().map(|(n, s)| format!("q_{n}{s}")));
        cols.push("Q_out_m3s".into());
        cols.push("p_chamber_mean_pa".into());
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.9e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleResult {
    pub frequency_hz: f64,
    /// Mean through-flow over the averaged cycles, µl/min, positive toward
    /// the outlet.
    pub net_flow_ul_min: f64,
    pub phase_lag_rad: f64,
    pub mode_labels: Vec<(u32, u32)>,
    pub modal_fraction: Vec<f64>,
    pub fractions_degenerate: bool,
    pub mode_centroid: (f64, f64),
    pub periodicity_residual: f64,
    pub periodic: bool,
    /// Mean through-flow (Q_out + Q_in)/2 of every drive cycle, µl/min.
    pub cycle_means_ul_min: Vec<f64>,
    /// Peak instantaneous |Q_out| over the final cycle, µl/min.
    pub peak_flow_ul_min: f64,
    /// Fundamental amplitude of W(0, 0, t), m.
    pub center_amplitude_m: f64,
    pub max_deflection_m: f64,
    pub max_divergence_ratio: f64,
    pub max_balance_error: f64,
    pub max_interface_iterations: usize,
    pub unconverged_steps: usize,
    pub steps: usize,
}

impl CycleResult {
    /// Modal fraction of the fundamental axisymmetric mode, if retained.
    pub fn fraction(&self, n: u32, s: u32) -> Option<f64> {
        self.mode_labels
            .iter()
            .position(|l| *l == (n, s))
            .map(|k| self.modal_fraction[k])
    }
}

pub const NON_PERIODIC_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub record_series: bool,
}

pub struct RunOutput {
    pub result: CycleResult,
    pub series: Option<TimeSeries>,
}

/// Integrates `cycles_total` drive periods from rest and reduces the final
/// `cycles_averaged` periods to a [`CycleResult`]. `observer` sees the
/// simulation after every step.
pub fn run_cycles_with(
    sim: &mut Simulation,
    config: &CouplingConfig,
    options: RunOptions,
    observer: &mut dyn FnMut(&Simulation, &StepInfo) -> Result<()>,
) -> Result<RunOutput> {
    let spp = config.steps_per_period;
    let total = config.cycles_total * spp;
    let window_start = (config.cycles_total - config.cycles_averaged) * spp;
    let last_start = total - spp;
    let depth = sim.fluid.depth();
    let omega_modes = sim.dynamics.omega.clone();
    let labels: Vec<(u32, u32)> = sim.modes.iter().map(|m| (m.n, m.radial_order)).collect();
    let nm = labels.len();

    let mut cycle_sums = vec![0.0; config.cycles_total];
    let mut times = Vec::with_capacity(total - window_start);
    let mut centre = Vec::with_capacity(total - window_start);
    let mut energy = vec![0.0; nm];
    let mut centroid_sum = (0.0, 0.0);
    let mut peak_q = 0.0f64;
    let mut max_w = 0.0f64;
    let mut warned = false;
    let mut max_div = 0.0f64;
    let mut max_bal = 0.0f64;
    let mut max_it = 0;
    let mut unconverged = 0;
    let mut series = options.record_series.then(|| TimeSeries {
        mode_labels: labels.clone(),
        rows: Vec::with_capacity(total),
    });

    for s in 0..total {
        let info = sim.step()?;
        observer(sim, &info)?;
        max_div = max_div.max(info.divergence_ratio);
        max_bal = max_bal.max(info.balance_error);
        max_it = max_it.max(info.iterations);
        if !info.converged {
            unconverged += 1;
        }
        // through-flow; equals the outlet flux over whole periods of a periodic
        // state and drops the chamber-volume term while transients decay
        cycle_sums[s / spp] += 0.5 * (info.outlet_flow + info.inlet_flow);
        let w0 = sim.center_deflection();

        let bound = sim.deflection_bound();
        if bound > 0.2 * depth || s >= last_start {
            let w = sim.sampling.deflection(&sim.plate.q);
            let wmax = w.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            max_w = max_w.max(wmax);
            if wmax > 0.2 * depth && !warned {
                warn!(
                    "max deflection {wmax:e} m exceeds 0.2 h; the linearized interface is questionable"
                );
                warned = true;
            }
            if s >= last_start {
                let (cx, cy) = mode_centroid(&w, &sim.sampling.points, sim.fluid.grid().chamber_center());
                centroid_sum.0 += cx;
                centroid_sum.1 += cy;
                peak_q = peak_q.max(info.outlet_flow.abs());
            }
        } else {
            max_w = max_w.max(w0.abs());
        }

        if s >= window_start {
            times.push(sim.time());
            centre.push(w0);
            for k in 0..nm {
                energy[k] += (sim.plate.q[k] * omega_modes[k]).powi(2);
            }
        }
        if let Some(ts) = series.as_mut() {
            let mut row = vec![sim.time(), info.voltage, w0];
            row.extend_from_slice(&sim.plate.q);
            row.push(info.outlet_flow);
            row.push(sim.chamber_mean_pressure());
            ts.rows.push(row);
        }
    }

    let cycle_means: Vec<f64> = cycle_sums.iter().map(|q| q / spp as f64 * M3S_TO_UL_MIN).collect();
    let net = cycle_means[config.cycles_total - config.cycles_averaged..].iter().sum::<f64>()
        / config.cycles_averaged as f64;
    let last = cycle_means[config.cycles_total - 1];
    let prev = cycle_means[config.cycles_total - 2];
    let peak = peak_q * M3S_TO_UL_MIN;
    let scale = last.abs().max(prev.abs()).max(1e-3 * peak);
    let periodicity = if last == prev { 0.0 } else { (last - prev).abs() / scale };
    let (lag, amp) = phase_lag(&times, &centre, sim.drive.omega(), sim.drive.phase)?;
    let (fractions, degenerate) = modal_fractions(&energy);
    if degenerate {
        debug!("all modal energies vanish; reporting uniform fractions");
    }
    let result = CycleResult {
        frequency_hz: sim.drive.frequency_hz,
        net_flow_ul_min: net,
        phase_lag_rad: lag,
        mode_labels: labels,
        modal_fraction: fractions,
        fractions_degenerate: degenerate,
        mode_centroid: (centroid_sum.0 / spp as f64, centroid_sum.1 / spp as f64),
        periodicity_residual: periodicity,
        periodic: periodicity <= NON_PERIODIC_THRESHOLD,
        cycle_means_ul_min: cycle_means,
        peak_flow_ul_min: peak,
        center_amplitude_m: amp,
        max_deflection_m: max_w,
        max_divergence_ratio: max_div,
        max_balance_error: max_bal,
        max_interface_iterations: max_it,
        unconverged_steps: unconverged,
        steps: total,
    };
    if !result.periodic {
        warn!(
            "run at {} Hz is not periodic (residual {:.3})",
            result.frequency_hz, result.periodicity_residual
        );
    }
    Ok(RunOutput { result, series })
}

pub fn run_cycles(setup: &SimulationSetup, options: RunOptions) -> Result<RunOutput> {
    let mut sim = Simulation::new(setup)?;
    run_cycles_with(&mut sim, &setup.coupling, options, &mut |_, _| Ok(()))
}

/// Undamped wet resonance of the plate-fluid system.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceEstimate {
    /// Wet frequency of the mode with the largest static response to the
    /// electrode load, Hz.
    pub frequency_hz: f64,
    pub dry_frequency_hz: f64,
    /// All wet frequencies, ascending, Hz.
    pub wet_frequencies_hz: Vec<f64>,
    /// Added mass of the fundamental mode relative to its own modal mass.
    pub added_mass_ratio: f64,
}

/// Solves K x = Ω² (I + M_a) x with the fluid added mass M_a.
pub fn coupled_resonance(setup: &SimulationSetup) -> Result<ResonanceEstimate> {
    setup.validate()?;
    let modes = setup.plate.modal_basis()?;
    let grid = build_grid(&setup.geometry, setup.target_dx)?;
    let cfg = &setup.coupling;
    let mut fluid = FlowSolver::new(grid, setup.fluid, setup.geometry.depth, &cfg.pressure_solver, &cfg.pressure_settings())?;
    let sampling = ChamberSampling::new(fluid.grid(), &modes);
    let response = ModalPressureResponse::compute(&mut fluid, &sampling, 1.0)?;
    let ma = response.added_mass();
    let n = modes.len();
    let k = Matrix::from_fn(n, n, |i, j| if i == j { modes[i].omega.powi(2) } else { 0.0 });
    let m = Matrix::from_fn(n, n, |i, j| ma[(i, j)] + if i == j { 1.0 } else { 0.0 });
    let eig = generalized_symmetric_eigen(&k, &m)?;
    let drive: Vec<f64> = modes.iter().map(|md| piezo_force_per_volt(&setup.plate, md)).collect();
    let mut best = (0, -1.0);
    for s in 0..n {
        let x = eig.vectors.column(s);
        // static displacement share of this mode under unit voltage
        let part = x.iter().zip(&drive).map(|(a, b)| a * b).sum::<f64>().abs() / eig.values[s];
        if part > best.1 * (1.0 + 1e-9) {
            best = (s, part);
        }
    }
    let fundamental = (0..n)
        .min_by(|&a, &b| modes[a].omega.total_cmp(&modes[b].omega))
        .expect("non-empty basis");
    Ok(ResonanceEstimate {
        frequency_hz: eig.values[best.0].sqrt() / (2.0 * PI),
        dry_frequency_hz: modes[fundamental].frequency_hz(),
        wet_frequencies_hz: eig.values.iter().map(|v| v.sqrt() / (2.0 * PI)).collect(),
        added_mass_ratio: ma[(fundamental, fundamental)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_reaches_full_amplitude() {
        let d = DriveSignal {
            amplitude_volts: 10.0,
            frequency_hz: 1000.0,
            phase: 0.5 * PI,
        };
        assert_eq!(d.voltage(0.0, 2.0), 0.0);
        assert!((d.voltage(2e-3, 2.0) - 10.0).abs() < 1e-12);
        assert!((d.voltage(0.0, 0.0) - 10.0).abs() < 1e-12);
        assert!((d.voltage(1e-3, 2.0) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn config_problems_are_listed_together() {
        let cfg = CouplingConfig {
            steps_per_period: 2,
            cycles_averaged: 40,
            relaxation_omega0: 2.0,
            scheme: "implicit".into(),
            ..Default::default()
        };
        let p = cfg.problems();
        assert_eq!(p.len(), 4, "{p:?}");
        assert!(CouplingConfig::default().problems().is_empty());
    }
}
