//! Depth-averaged incompressible flow on a staggered grid.
//!
//! Face velocities are stored on a MAC layout: `u` on vertical faces
//! (`(nx + 1) × ny`, face (i, j) between cells (i − 1, j) and (i, j)) and `v`
//! on horizontal faces (`nx × (ny + 1)`). Pressure lives at cell centres.
//! A step is split into an explicit predictor with implicit depth drag,
//! a pressure Poisson solve and a projection.

pub mod geometry;
pub mod pressure;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use geometry::{build_grid, CellKind, ChamberCell, FluidGrid, ObstacleLayout, PumpGeometry};
pub use pressure::{
    pressure_solver, PoissonOperator, PressureSettings, PressureSolver, SolveReport, PRESSURE_SOLVERS,
};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProps {
    /// kg/m³
    pub density: f64,
    /// m²/s
    pub kinematic_viscosity: f64,
}

impl Default for FluidProps {
    fn default() -> Self {
        Self {
            density: 1000.0,
            kinematic_viscosity: 1.1e-6,
        }
    }
}

impl FluidProps {
    pub fn dynamic_viscosity(&self) -> f64 {
        self.density * self.kinematic_viscosity
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Cell-centred pressure; zero in solid and reservoir cells.
    pub p: Vec<f64>,
    pub time: f64,
}

impl FlowState {
    pub fn at_rest(grid: &FluidGrid) -> Self {
        Self {
            u: vec![0.0; (grid.nx + 1) * grid.ny],
            v: vec![0.0; grid.nx * (grid.ny + 1)],
            p: vec![0.0; grid.nx * grid.ny],
            time: 0.0,
        }
    }

    pub fn max_speed(&self) -> (f64, f64) {
        let m = |a: &[f64]| a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (m(&self.u), m(&self.v))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).chain(&self.p).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FaceKind {
    /// Touches a solid cell; velocity held at zero.
    Wall,
    /// Between two reservoir cells; fluid there is at rest.
    Still,
    Active,
    /// Reservoir boundary face, zero normal gradient from `from`.
    Copy(usize),
}

const MIRROR: usize = usize::MAX;

#[derive(Debug, Clone, Copy)]
struct Stencil {
    face: usize,
    /// Same-component neighbours along the face normal.
    normal: [usize; 2],
    /// Same-component neighbours along the face; `MIRROR` marks a no-slip
    /// ghost.
    tangential: [usize; 2],
    /// Four other-component faces averaged to this face.
    cross: [usize; 4],
    /// Cells on either side (lower, upper).
    cells: [usize; 2],
}

#[derive(Debug, Clone)]
struct FaceSet {
    kinds: Vec<FaceKind>,
    active: Vec<Stencil>,
    copies: Vec<(usize, usize)>,
}

impl FaceSet {
    fn build(grid: &FluidGrid, vertical: bool) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        // face (i, j) for u: between (i-1, j) and (i, j); for v: (i, j-1) and (i, j)
        let (fx, fy) = if vertical { (nx + 1, ny) } else { (nx, ny + 1) };
        let fidx = |i: usize, j: usize| j * fx + i;
        let cells_of = |i: usize, j: usize| -> Option<(usize, usize)> {
            if vertical {
                (i > 0 && i < nx).then(|| (grid.index(i - 1, j), grid.index(i, j)))
            } else {
                (j > 0 && j < ny).then(|| (grid.index(i, j - 1), grid.index(i, j)))
            }
        };
        let mut kinds = vec![FaceKind::Wall; fx * fy];
        for j in 0..fy {
            for i in 0..fx {
                let f = fidx(i, j);
                kinds[f] = match cells_of(i, j) {
                    Some((a, b)) => {
                        let (ka, kb) = (grid.kinds[a], grid.kinds[b]);
                        if !ka.is_open() || !kb.is_open() {
                            FaceKind::Wall
                        } else if ka.is_reservoir() && kb.is_reservoir() {
                            FaceKind::Still
                        } else {
                            FaceKind::Active
                        }
                    }
                    None => {
                        // outer boundary face
                        let (cell, inner) = if vertical {
                            if i == 0 {
                                (grid.index(0, j), fidx(1, j))
                            } else {
                                (grid.index(nx - 1, j), fidx(nx - 1, j))
                            }
                        } else if j == 0 {
                            (grid.index(i, 0), fidx(i, 1))
                        } else {
                            (grid.index(i, ny - 1), fidx(i, ny - 1))
                        };
                        if grid.kinds[cell].is_reservoir() {
                            FaceKind::Copy(inner)
                        } else {
                            FaceKind::Wall
                        }
                    }
                };
            }
        }
        let ox = if vertical { nx } else { nx + 1 };
        let oidx = |i: usize, j: usize| j * ox + i;
        let mut active = Vec::new();
        let mut copies = Vec::new();
        for j in 0..fy {
            for i in 0..fx {
                let f = fidx(i, j);
                match kinds[f] {
                    FaceKind::Copy(from) => copies.push((f, from)),
                    FaceKind::Active => {
                        let (a, b) = cells_of(i, j).expect("interior face");
                        let tang = |k: usize| if kinds[k] == FaceKind::Wall { MIRROR } else { k };
                        let st = if vertical {
                            Stencil {
                                face: f,
                                normal: [fidx(i - 1, j), fidx(i + 1, j)],
                                tangential: [tang(fidx(i, j - 1)), tang(fidx(i, j + 1))],
                                cross: [oidx(i - 1, j), oidx(i - 1, j + 1), oidx(i, j), oidx(i, j + 1)],
                                cells: [a, b],
                            }
                        } else {
                            Stencil {
                                face: f,
                                normal: [fidx(i, j - 1), fidx(i, j + 1)],
                                tangential: [tang(fidx(i - 1, j)), tang(fidx(i + 1, j))],
                                cross: [oidx(i, j - 1), oidx(i + 1, j - 1), oidx(i, j), oidx(i + 1, j)],
                                cells: [a, b],
                            }
                        };
                        active.push(st);
                    }
                    _ => {}
                }
            }
        }
        Self { kinds, active, copies }
    }

    fn apply_copies(&self, values: &mut [f64]) {
        for &(f, from) in &self.copies {
            values[f] = values[from];
        }
    }
}

/// Per-step flow operators for one grid.
pub struct FlowSolver {
    grid: FluidGrid,
    props: FluidProps,
    depth: f64,
    advection: bool,
    u_faces: FaceSet,
    v_faces: FaceSet,
    operator: PoissonOperator,
    pressure: Box<dyn PressureSolver>,
}

impl FlowSolver {
    pub fn new(grid: FluidGrid, props: FluidProps, depth: f64, pressure_solver_name: &str, settings: &PressureSettings) -> Result<Self> {
        if !(depth > 0.0) {
            return Err(Error::Validation("depth must be positive".into()));
        }
        if !(props.density > 0.0 && props.kinematic_viscosity > 0.0) {
            return Err(Error::Validation("fluid density and viscosity must be positive".into()));
        }
        let operator = PoissonOperator::assemble(&grid);
        let pressure = pressure_solver(pressure_solver_name, &operator, settings)?;
        Ok(Self {
            u_faces: FaceSet::build(&grid, true),
            v_faces: FaceSet::build(&grid, false),
            grid,
            props,
            depth,
            advection: true,
            operator,
            pressure,
        })
    }

    /// Disables the convective term, leaving a linear unsteady Stokes
    /// problem with depth drag.
    pub fn without_advection(mut self) -> Self {
        self.advection = false;
        self
    }

    pub fn grid(&self) -> &FluidGrid {
        &self.grid
    }

    pub fn props(&self) -> &FluidProps {
        &self.props
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn operator(&self) -> &PoissonOperator {
        &self.operator
    }

    pub fn pressure_solver_name(&self) -> &'static str {
        self.pressure.name()
    }

    /// Implicit drag factor γ = 12 ν dt / h².
    pub fn drag_factor(&self, dt: f64) -> f64 {
        12.0 * self.props.kinematic_viscosity * dt / (self.depth * self.depth)
    }

    /// Largest admissible step, half the tightest of the advective,
    /// diffusive and drag limits, and the name of the binding constraint.
    pub fn stable_dt(&self, flow: &FlowState) -> (f64, &'static str) {
        let dx = self.grid.dx;
        let nu = self.props.kinematic_viscosity;
        let (um, vm) = flow.max_speed();
        let speed = um.max(vm);
        let mut limits = vec![
            (dx * dx / (4.0 * nu), "diffusive"),
            (self.depth * self.depth / (24.0 * nu), "depth drag"),
        ];
        if self.advection && speed > 0.0 {
            limits.push((dx / speed, "advective"));
        }
        let (t, name) = limits.into_iter().fold((f64::INFINITY, ""), |a, b| if b.0 < a.0 { b } else { a });
        (0.5 * t, name)
    }

    pub fn check_cfl(&self, flow: &FlowState, dt: f64) -> Result<()> {
        let (limit, constraint) = self.stable_dt(flow);
        if dt > limit {
            return Err(Error::Cfl { dt, constraint, limit });
        }
        Ok(())
    }

    /// Provisional velocity from advection, viscous diffusion and implicit
    /// depth drag. The pressure of the returned state is unchanged.
    pub fn predict(&self, flow: &FlowState, dt: f64) -> Result<FlowState> {
        self.check_cfl(flow, dt)?;
        let gamma = self.drag_factor(dt);
        let nu = self.props.kinematic_viscosity;
        let (dx, dy) = (self.grid.dx, self.grid.dy);
        let mut out = flow.clone();
        for (faces, own, other, dest, h_normal, h_tang) in [
            (&self.u_faces, &flow.u, &flow.v, &mut out.u, dx, dy),
            (&self.v_faces, &flow.v, &flow.u, &mut out.v, dy, dx),
        ] {
            for st in &faces.active {
                let c = own[st.face];
                let get = |k: usize| if k == MIRROR { -c } else { own[k] };
                let (nm, np) = (own[st.normal[0]], own[st.normal[1]]);
                let (tm, tp) = (get(st.tangential[0]), get(st.tangential[1]));
                let mut rate = nu * ((nm - 2.0 * c + np) / (h_normal * h_normal) + (tm - 2.0 * c + tp) / (h_tang * h_tang));
                if self.advection {
                    let cross = 0.25 * st.cross.iter().map(|&k| other[k]).sum::<f64>();
                    let adv_n = if c > 0.0 { c * (c - nm) } else { c * (np - c) } / h_normal;
                    let adv_t = if cross > 0.0 { cross * (c - tm) } else { cross * (tp - c) } / h_tang;
                    rate -= adv_n + adv_t;
                }
                dest[st.face] = (c + dt * rate) / (1.0 + gamma);
            }
            faces.apply_copies(dest);
        }
        out.time = flow.time + dt;
        if !out.is_finite() {
            return Err(Error::NonFinite("predicted velocity"));
        }
        Ok(out)
    }

    /// Discrete divergence per pressure unknown.
    pub fn divergence(&self, flow: &FlowState) -> Vec<f64> {
        let g = &self.grid;
        let (dx, dy) = (g.dx, g.dy);
        g.unknown_cells()
            .iter()
            .map(|&c| {
                let (i, j) = g.ij(c);
                (flow.u[j * (g.nx + 1) + i + 1] - flow.u[j * (g.nx + 1) + i]) / dx
                    + (flow.v[(j + 1) * g.nx + i] - flow.v[j * g.nx + i]) / dy
            })
            .collect()
    }

    /// Right-hand side of `A p = b` that makes the projected field satisfy
    /// div u = `source` (per unknown, 1/s).
    pub fn pressure_rhs(&self, predicted: &FlowState, source: &[f64], dt: f64) -> Vec<f64> {
        let scale = -self.grid.dx * self.grid.dx * self.props.density / dt;
        self.divergence(predicted)
            .iter()
            .zip(source)
            .map(|(d, s)| scale * (d - s))
            .collect()
    }

    /// Rhs for a pure volume source with a divergence-free predictor.
    pub fn source_rhs(&self, source: &[f64], dt: f64) -> Vec<f64> {
        let scale = self.grid.dx * self.grid.dx * self.props.density / dt;
        source.iter().map(|s| scale * s).collect()
    }

    /// Solves `A p = rhs`; `p` holds the initial guess per unknown.
    pub fn solve_pressure(&mut self, rhs: &[f64], p: &mut [f64]) -> Result<SolveReport> {
        self.pressure.solve(rhs, p)
    }

    /// Scatters per-unknown pressure into a cell field.
    pub fn pressure_field(&self, p_unknown: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.grid.nx * self.grid.ny];
        for (&c, v) in self.grid.unknown_cells().iter().zip(p_unknown) {
            p[c] = *v;
        }
        p
    }

    /// Subtracts the pressure gradient from the predicted velocity and
    /// stores the pressure.
    pub fn project(&self, predicted: &FlowState, p_unknown: &[f64], dt: f64) -> FlowState {
        let mut out = predicted.clone();
        out.p = self.pressure_field(p_unknown);
        let k = dt / self.props.density;
        for (faces, dest, h) in [(&self.u_faces, &mut out.u, self.grid.dx), (&self.v_faces, &mut out.v, self.grid.dy)] {
            for st in &faces.active {
                dest[st.face] -= k * (out.p[st.cells[1]] - out.p[st.cells[0]]) / h;
            }
            faces.apply_copies(dest);
        }
        out
    }

    /// Velocity change on active faces per unit pressure field, the
    /// transpose of the pressure part of `project`.
    pub fn pressure_gradient_work(&self, pa: &[f64], pb: &[f64]) -> f64 {
        let mut s = 0.0;
        for (faces, h) in [(&self.u_faces, self.grid.dx), (&self.v_faces, self.grid.dy)] {
            for st in &faces.active {
                let ga = (pa[st.cells[1]] - pa[st.cells[0]]) / h;
                let gb = (pb[st.cells[1]] - pb[st.cells[0]]) / h;
                s += ga * gb;
            }
        }
        s
    }

    /// Max |div u − S| over unknowns.
    pub fn divergence_residual(&self, flow: &FlowState, source: &[f64]) -> f64 {
        self.divergence(flow)
            .iter()
            .zip(source)
            .fold(0.0f64, |m, (d, s)| m.max((d - s).abs()))
    }

    /// Volume flow leaving the domain through reservoir cells of `kind`,
    /// m³/s.
    pub fn reservoir_outflow(&self, flow: &FlowState, kind: CellKind) -> f64 {
        let g = &self.grid;
        let mut q = 0.0;
        for (faces, vel, area) in [(&self.u_faces, &flow.u, g.dy), (&self.v_faces, &flow.v, g.dx)] {
            for st in &faces.active {
                let (a, b) = (g.kinds[st.cells[0]], g.kinds[st.cells[1]]);
                if b == kind && a.is_unknown() {
                    q += vel[st.face] * area;
                } else if a == kind && b.is_unknown() {
                    q -= vel[st.face] * area;
                }
            }
        }
        q * self.depth
    }

    /// Sum of |flux| over every active face.
    pub fn gross_flux(&self, flow: &FlowState) -> f64 {
        let g = &self.grid;
        let mut q = 0.0;
        for (faces, vel, area) in [(&self.u_faces, &flow.u, g.dy), (&self.v_faces, &flow.v, g.dx)] {
            for st in &faces.active {
                q += vel[st.face].abs() * area;
            }
        }
        q * self.depth
    }

    /// Flow out through the outlet, positive toward +x.
    pub fn outlet_flow(&self, flow: &FlowState) -> f64 {
        self.reservoir_outflow(flow, CellKind::Outlet)
    }

    /// Flow in through the inlet.
    pub fn inlet_flow(&self, flow: &FlowState) -> f64 {
        -self.reservoir_outflow(flow, CellKind::Inlet)
    }

    /// Fixed faces must carry zero velocity.
    pub fn wall_leak(&self, flow: &FlowState) -> f64 {
        let mut m = 0.0f64;
        for (faces, vel) in [(&self.u_faces, &flow.u), (&self.v_faces, &flow.v)] {
            for (k, kind) in faces.kinds.iter().enumerate() {
                if matches!(kind, FaceKind::Wall | FaceKind::Still) {
                    m = m.max(vel[k].abs());
                }
            }
        }
        m
    }

    /// Cell-centred velocity components.
    pub fn cell_velocity(&self, flow: &FlowState) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let mut uc = vec![0.0; g.nx * g.ny];
        let mut vc = vec![0.0; g.nx * g.ny];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.index(i, j);
                if g.kinds[c].is_open() {
                    uc[c] = 0.5 * (flow.u[j * (g.nx + 1) + i] + flow.u[j * (g.nx + 1) + i + 1]);
                    vc[c] = 0.5 * (flow.v[j * g.nx + i] + flow.v[(j + 1) * g.nx + i]);
                }
            }
        }
        (uc, vc)
    }

    /// Text snapshot: a header, then the cell mask, cell-centred u, v, p and
    /// plate deflection, each as `ny` rows of `nx` values.
    pub fn snapshot_text(&self, flow: &FlowState, deflection: &[f64]) -> String {
        let g = &self.grid;
        let (uc, vc) = self.cell_velocity(flow);
        let mut s = String::new();
        let _ = writeln!(s, "# nx {} ny {} dx {:e} dy {:e} time {:e}", g.nx, g.ny, g.dx, g.dy, flow.time);
        let mask: Vec<f64> = g.kinds.iter().map(|k| k.code() as f64).collect();
        for (name, field) in [("mask", &mask), ("u", &uc), ("v", &vc), ("p", &flow.p), ("w", &deflection.to_vec())] {
            let _ = writeln!(s, "# {name}");
            for j in 0..g.ny {
                let row: Vec<String> = (0..g.nx)
                    .map(|i| {
                        let v = field.get(j * g.nx + i).copied().unwrap_or(0.0);
                        if name == "mask" {
                            format!("{}", v as u8)
                        } else {
                            format!("{v:.6e}")
                        }
                    })
                    .collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }
}
