//! Clamped circular Kirchhoff plate: radial cubic-Hermite finite elements
//! per circumferential harmonic, piezo generalized forces and Newmark
//! integration of the modal equations.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::linalg::{generalized_symmetric_eigen, Matrix};
use crate::materials::LaminateConstants;
use crate::{Error, Result};

/// 6-point Gauss-Legendre rule on [-1, 1].
const GAUSS_X: [f64; 6] = [
    -0.932_469_514_203_152_1,
    -0.661_209_386_466_264_5,
    -0.238_619_186_083_196_9,
    0.238_619_186_083_196_9,
    0.661_209_386_466_264_5,
    0.932_469_514_203_152_1,
];
const GAUSS_W: [f64; 6] = [
    0.171_324_492_379_170_3,
    0.360_761_573_048_138_6,
    0.467_913_934_572_691_0,
    0.467_913_934_572_691_0,
    0.360_761_573_048_138_6,
    0.171_324_492_379_170_3,
];

/// Gauss points mapped to [lo, hi] as (r, weight).
fn gauss_points(lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    GAUSS_X
        .iter()
        .zip(GAUSS_W.iter())
        .map(move |(x, w)| (mid + half * x, half * w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Angular {
    Cos,
    Sin,
}

/// Radial discretization for one circumferential wavenumber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub n: u32,
    pub radial_orders: usize,
    pub elements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateModel {
    pub radius: f64,
    pub constants: LaminateConstants,
    pub harmonics: Vec<Harmonic>,
    pub damping_ratio: f64,
    /// Width of the cosine roll-off at the electrode rim, m.
    pub taper_width: f64,
    /// Outer radius of the driven electrode, m. Equal to `radius` for full
    /// coverage.
    pub electrode_radius: f64,
}

impl PlateModel {
    /// Retained basis n = 0, 1, 2 with three radial orders each, ζ = 0.02,
    /// full-coverage electrode with an a/16 taper.
    pub fn with_defaults(radius: f64, constants: LaminateConstants) -> Self {
        Self {
            radius,
            constants,
            harmonics: (0..3)
                .map(|n| Harmonic {
                    n,
                    radial_orders: 3,
                    elements: 64,
                })
                .collect(),
            damping_ratio: 0.02,
            taper_width: radius / 16.0,
            electrode_radius: radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.radius > 0.0) {
            problems.push("plate radius must be > 0".to_string());
        }
        if !(0.0..1.0).contains(&self.damping_ratio) {
            problems.push(format!("damping ratio {} outside [0, 1)", self.damping_ratio));
        }
        if self.harmonics.is_empty() {
            problems.push("at least one harmonic must be retained".to_string());
        }
        for h in &self.harmonics {
            if h.elements < 8 {
                problems.push(format!("harmonic n={} needs at least 8 elements", h.n));
            }
            if h.radial_orders == 0 || h.radial_orders > h.elements {
                problems.push(format!(
                    "harmonic n={} radial orders must be in 1..={}",
                    h.n, h.elements
                ));
            }
        }
        if !(self.taper_width > 0.0) || self.taper_width > self.electrode_radius {
            problems.push("taper width must be in (0, electrode radius]".to_string());
        }
        if !(self.electrode_radius > 0.0) || self.electrode_radius > self.radius {
            problems.push("electrode radius must be in (0, plate radius]".to_string());
        }
        if !(self.constants.bending_stiffness > 0.0 && self.constants.areal_mass > 0.0) {
            problems.push("laminate constants must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }

    /// Closed-form ω for a homogeneous clamped plate given λ².
    pub fn analytic_omega(&self, lambda_sq: f64) -> f64 {
        lambda_sq / (self.radius * self.radius)
            * (self.constants.bending_stiffness / self.constants.areal_mass).sqrt()
    }

    /// Modes of every retained harmonic, ordered by harmonic then radial order.
    pub fn modal_basis(&self) -> Result<Vec<Mode>> {
        self.validate()?;
        let mut modes = Vec::new();
        for h in &self.harmonics {
            modes.extend(radial_eigensolve(self, h.n, h.radial_orders, h.elements)?);
        }
        Ok(modes)
    }

    /// Electrode coverage profile T(r) and its radial derivative.
    pub fn electrode_profile(&self, r: f64) -> (f64, f64) {
        let start = self.electrode_radius - self.taper_width;
        if r <= start {
            (1.0, 0.0)
        } else if r >= self.electrode_radius {
            (0.0, 0.0)
        } else {
            let s = (r - start) / self.taper_width;
            (
                0.5 * (1.0 + (PI * s).cos()),
                -0.5 * PI / self.taper_width * (PI * s).sin(),
            )
        }
    }
}

/// One plate mode φ(r, θ) = R(r)·cos(nθ) (or sin), mass-normalized so that
/// ∫ρh φ² dA = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub n: u32,
    pub radial_order: u32,
    pub omega: f64,
    pub angular: Angular,
    pub radius: f64,
    /// Nodal (R, dR/dr) at uniformly spaced radii 0, h, .., a.
    nodes: Vec<(f64, f64)>,
    /// ‖Kx − ω²Mx‖ / ‖Kx‖ of the discrete eigenpair.
    pub residual: f64,
}

impl Mode {
    pub fn frequency_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }

    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }

    /// R, dR/dr and d²R/dr² at radius `r`. Zero outside the plate.
    pub fn radial(&self, r: f64) -> (f64, f64, f64) {
        if !(0.0..self.radius).contains(&r) {
            return (0.0, 0.0, 0.0);
        }
        let ne = self.elements();
        let le = self.radius / ne as f64;
        let e = ((r / le) as usize).min(ne - 1);
        let xi = (r - e as f64 * le) / le;
        let (h, dh, ddh) = hermite(xi, le);
        let dofs = [
            self.nodes[e].0,
            self.nodes[e].1,
            self.nodes[e + 1].0,
            self.nodes[e + 1].1,
        ];
        let mut out = (0.0, 0.0, 0.0);
        for k in 0..4 {
            out.0 += h[k] * dofs[k];
            out.1 += dh[k] * dofs[k];
            out.2 += ddh[k] * dofs[k];
        }
        out
    }

    pub fn angular_factor(&self, theta: f64) -> f64 {
        let a = self.n as f64 * theta;
        match self.angular {
            Angular::Cos => a.cos(),
            Angular::Sin => a.sin(),
        }
    }

    pub fn value(&self, r: f64, theta: f64) -> f64 {
        if r >= self.radius {
            return 0.0;
        }
        self.radial(r).0 * self.angular_factor(theta)
    }

    pub fn value_xy(&self, x: f64, y: f64) -> f64 {
        self.value(x.hypot(y), y.atan2(x))
    }

    /// Radial part of ∇²: R'' + R'/r − n²R/r².
    pub fn radial_laplacian(&self, r: f64) -> f64 {
        let (v, d1, d2) = self.radial(r);
        let n2 = (self.n * self.n) as f64;
        if r == 0.0 {
            // limits of R'/r and R/r² under the centre constraints
            return match self.n {
                0 => 2.0 * d2,
                _ => 0.0,
            };
        }
        d2 + d1 / r - n2 * v / (r * r)
    }

    /// Mode value and slope at the nodes, for export.
    pub fn samples(&self) -> Vec<(f64, f64, f64)> {
        let le = self.radius / self.elements() as f64;
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, &(v, d))| (i as f64 * le, v, d))
            .collect()
    }

    /// ∫_0^2π (angular factor)² dθ.
    pub fn angular_weight(&self) -> f64 {
        if self.n == 0 {
            match self.angular {
                Angular::Cos => 2.0 * PI,
                Angular::Sin => 0.0,
            }
        } else {
            PI
        }
    }
}

/// Cubic Hermite shape functions on an element of length `le` at local
/// coordinate ξ ∈ [0, 1], with first and second r-derivatives.
fn hermite(xi: f64, le: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let x2 = xi * xi;
    let x3 = x2 * xi;
    let h = [
        1.0 - 3.0 * x2 + 2.0 * x3,
        le * (xi - 2.0 * x2 + x3),
        3.0 * x2 - 2.0 * x3,
        le * (-x2 + x3),
    ];
    let dh = [
        (-6.0 * xi + 6.0 * x2) / le,
        1.0 - 4.0 * xi + 3.0 * x2,
        (6.0 * xi - 6.0 * x2) / le,
        -2.0 * xi + 3.0 * x2,
    ];
    let ddh = [
        (-6.0 + 12.0 * xi) / (le * le),
        (-4.0 + 6.0 * xi) / le,
        (6.0 - 12.0 * xi) / (le * le),
        (-2.0 + 6.0 * xi) / le,
    ];
    (h, dh, ddh)
}

/// Global stiffness and mass for wavenumber `n` on `elements` uniform
/// elements, before constraints. DOF 2i is R(r_i), 2i+1 is R'(r_i).
fn assemble(model: &PlateModel, n: u32, elements: usize) -> (Matrix, Matrix) {
    let ndof = 2 * (elements + 1);
    let mut k = Matrix::zeros(ndof, ndof);
    let mut m = Matrix::zeros(ndof, ndof);
    let le = model.radius / elements as f64;
    let n2 = (n * n) as f64;
    let ang = if n == 0 { 2.0 * PI } else { PI };
    let d = model.constants.bending_stiffness * ang;
    let rho_h = model.constants.areal_mass * ang;
    for e in 0..elements {
        let r0 = e as f64 * le;
        let base = 2 * e;
        for (r, w) in gauss_points(r0, r0 + le) {
            let xi = (r - r0) / le;
            let (h, dh, ddh) = hermite(xi, le);
            let mut b = [0.0; 4];
            for i in 0..4 {
                b[i] = ddh[i] + dh[i] / r - n2 * h[i] / (r * r);
            }
            for i in 0..4 {
                for j in 0..4 {
                    k[(base + i, base + j)] += d * b[i] * b[j] * r * w;
                    m[(base + i, base + j)] += rho_h * h[i] * h[j] * r * w;
                }
            }
        }
    }
    (k, m)
}

/// Strain and kinetic energy norms xᵀKx and xᵀMx of a full DOF vector,
/// summed as positive Gauss-point contributions so that neither loses
/// digits to cancellation.
fn energy_norms(model: &PlateModel, n: u32, full: &[f64]) -> (f64, f64) {
    let elements = full.len() / 2 - 1;
    let le = model.radius / elements as f64;
    let n2 = (n * n) as f64;
    let (mut strain, mut kinetic) = (0.0, 0.0);
    for e in 0..elements {
        let r0 = e as f64 * le;
        let dofs = &full[2 * e..2 * e + 4];
        for (r, w) in gauss_points(r0, r0 + le) {
            let (h, dh, ddh) = hermite((r - r0) / le, le);
            let (mut curv, mut val) = (0.0, 0.0);
            for i in 0..4 {
                curv += (ddh[i] + dh[i] / r - n2 * h[i] / (r * r)) * dofs[i];
                val += h[i] * dofs[i];
            }
            strain += curv * curv * r * w;
            kinetic += val * val * r * w;
        }
    }
    (strain * model.constants.bending_stiffness, kinetic * model.constants.areal_mass)
}

/// Constrained DOFs: centre regularity by wavenumber plus the clamped rim.
fn constrained_dofs(n: u32, elements: usize) -> Vec<usize> {
    let mut fixed = match n {
        0 => vec![1],
        1 => vec![0],
        _ => vec![0, 1],
    };
    fixed.push(2 * elements);
    fixed.push(2 * elements + 1);
    fixed
}

/// Lowest `num_modes` clamped-plate modes with `n` nodal diameters.
pub fn radial_eigensolve(
    model: &PlateModel,
    n: u32,
    num_modes: usize,
    elements: usize,
) -> Result<Vec<Mode>> {
    if elements < 8 {
        return Err(Error::Validation(format!(
            "radial mesh needs at least 8 elements, got {elements}"
        )));
    }
    if num_modes == 0 || num_modes > elements {
        return Err(Error::Validation(format!(
            "requested {num_modes} modes from {elements} elements"
        )));
    }
    let (k, m) = assemble(model, n, elements);
    let fixed = constrained_dofs(n, elements);
    let free: Vec<usize> = (0..k.rows()).filter(|d| !fixed.contains(d)).collect();
    let kf = Matrix::from_fn(free.len(), free.len(), |i, j| k[(free[i], free[j])]);
    let mf = Matrix::from_fn(free.len(), free.len(), |i, j| m[(free[i], free[j])]);
    let eig = generalized_symmetric_eigen(&kf, &mf)?;

    let mut modes = Vec::with_capacity(num_modes);
    for s in 0..num_modes {
        let mut lambda = eig.values[s];
        if !(lambda > 0.0) {
            return Err(Error::Validation(format!(
                "non-positive stiffness eigenvalue {lambda:e} for n = {n}"
            )));
        }
        let mut x = eig.vectors.column(s);
        let mut full = vec![0.0; k.rows()];
        for (i, &d) in free.iter().enumerate() {
            full[d] = x[i];
        }
        // positive at the first free value DOF away from the centre for a
        // reproducible sign
        let pivot = full
            .iter()
            .step_by(2)
            .copied()
            .find(|v| v.abs() > 1e-12 * full.iter().fold(0.0f64, |a, b| a.max(b.abs())))
            .unwrap_or(1.0);
        if pivot < 0.0 {
            full.iter_mut().for_each(|v| *v = -*v);
            x.iter_mut().for_each(|v| *v = -*v);
        }
        // the Rayleigh quotient is second-order accurate in the vector error
        let (strain, kinetic) = energy_norms(model, n, &full);
        lambda = strain / kinetic;
        let kx = kf.mul_vec(&x);
        let mx = mf.mul_vec(&x);
        let num: f64 = kx
            .iter()
            .zip(&mx)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = kx.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nodes = (0..=elements).map(|i| (full[2 * i], full[2 * i + 1])).collect();
        modes.push(Mode {
            n,
            radial_order: s as u32 + 1,
            omega: lambda.sqrt(),
            angular: Angular::Cos,
            radius: model.radius,
            nodes,
            residual: num / den,
        });
    }
    Ok(modes)
}

/// ∫ρh φ_a φ_b dA by radial Gauss quadrature and the exact angular integral.
pub fn mass_inner_product(model: &PlateModel, a: &Mode, b: &Mode) -> f64 {
    if a.n != b.n {
        return 0.0;
    }
    if a.n > 0 && a.angular != b.angular {
        return 0.0;
    }
    let ne = a.elements().max(b.elements());
    let le = model.radius / ne as f64;
    let mut s = 0.0;
    for e in 0..ne {
        let r0 = e as f64 * le;
        for (r, w) in gauss_points(r0, r0 + le) {
            s += a.radial(r).0 * b.radial(r).0 * r * w;
        }
    }
    s * model.constants.areal_mass * a.angular_weight()
}

/// ∫ T(r) ∇²φ dA where T is the electrode coverage profile, by Gauss
/// quadrature on the union of element and taper breakpoints, each piece
/// split into `subdivisions` equal parts.
pub fn electrode_laplacian_integral(model: &PlateModel, mode: &Mode, subdivisions: usize) -> f64 {
    if mode.n != 0 || matches!(mode.angular, Angular::Sin) {
        return 0.0;
    }
    let ne = mode.elements();
    let le = model.radius / ne as f64;
    let mut breaks: Vec<f64> = (0..=ne).map(|i| i as f64 * le).collect();
    for extra in [
        model.electrode_radius - model.taper_width,
        model.electrode_radius,
    ] {
        if extra > 0.0 && extra < model.radius {
            breaks.push(extra);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * model.radius);

    let mut sum = 0.0;
    for pair in breaks.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if lo >= model.electrode_radius {
            break;
        }
        let step = (hi - lo) / subdivisions as f64;
        for k in 0..subdivisions {
            let a = lo + k as f64 * step;
            for (r, w) in gauss_points(a, a + step) {
                let (t, _) = model.electrode_profile(r);
                sum += t * mode.radial_laplacian(r) * r * w;
            }
        }
    }
    sum * 2.0 * PI
}

/// Generalized force per volt on `mode` from the tapered piezo moment.
pub fn piezo_force_per_volt(model: &PlateModel, mode: &Mode) -> f64 {
    model.constants.piezo_moment_per_volt * electrode_laplacian_integral(model, mode, 1)
}

/// Generalized force on `mode` at drive voltage `voltage`.
pub fn piezo_modal_force(model: &PlateModel, mode: &Mode, voltage: f64) -> f64 {
    piezo_force_per_volt(model, mode) * voltage
}

/// Modal coordinates of the plate with unit modal masses.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub qddot: Vec<f64>,
    pub time: f64,
}

impl ModalState {
    pub fn at_rest(modes: usize) -> Self {
        Self {
            q: vec![0.0; modes],
            qdot: vec![0.0; modes],
            qddot: vec![0.0; modes],
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.q
            .iter()
            .chain(&self.qdot)
            .chain(&self.qddot)
            .all(|v| v.is_finite())
    }
}

/// q̈ + 2ζω q̇ + ω² q = f for each retained mode, advanced with the
/// average-acceleration Newmark rule (γ = 1/2, β = 1/4).
#[derive(Debug, Clone, PartialEq)]
pub struct ModalDynamics {
    pub omega: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl ModalDynamics {
    pub fn new(modes: &[Mode], zeta: f64) -> Self {
        Self {
            omega: modes.iter().map(|m| m.omega).collect(),
            zeta: vec![zeta; modes.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// State with prescribed displacement and velocity and the acceleration
    /// consistent with zero load.
    pub fn free_state(&self, q: Vec<f64>, qdot: Vec<f64>) -> ModalState {
        let qddot = (0..self.len())
            .map(|k| -2.0 * self.zeta[k] * self.omega[k] * qdot[k] - self.omega[k].powi(2) * q[k])
            .collect();
        ModalState {
            q,
            qdot,
            qddot,
            time: 0.0,
        }
    }

    fn denominator(&self, k: usize, dt: f64) -> f64 {
        let w = self.omega[k];
        1.0 + self.zeta[k] * w * dt + 0.25 * w * w * dt * dt
    }

    /// ∂q̇ₖ(t+dt)/∂fₖ(t+dt) for a single step.
    pub fn velocity_gain(&self, dt: f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| 0.5 * dt / self.denominator(k, dt))
            .collect()
    }

    pub fn step(&self, state: &ModalState, forces: &[f64], dt: f64) -> ModalState {
        assert!(dt > 0.0);
        let n = self.len();
        let mut next = ModalState {
            q: vec![0.0; n],
            qdot: vec![0.0; n],
            qddot: vec![0.0; n],
            time: state.time + dt,
        };
        for k in 0..n {
            let w = self.omega[k];
            let c = 2.0 * self.zeta[k] * w;
            let (q, v, a) = (state.q[k], state.qdot[k], state.qddot[k]);
            let q_pred = q + dt * v + 0.25 * dt * dt * a;
            let v_pred = v + 0.5 * dt * a;
            let a_new = (forces[k] - c * v_pred - w * w * q_pred) / self.denominator(k, dt);
            next.qddot[k] = a_new;
            next.qdot[k] = v_pred + 0.5 * dt * a_new;
            next.q[k] = q_pred + 0.25 * dt * dt * a_new;
        }
        next
    }
}

/// W and ∂W/∂t at sample points (x, y) relative to the plate centre.
pub fn deflection_field(modes: &[Mode], state: &ModalState, points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|&(x, y)| {
            let mut w = 0.0;
            let mut wd = 0.0;
            for (k, mode) in modes.iter().enumerate() {
                let phi = mode.value_xy(x, y);
                w += state.q[k] * phi;
                wd += state.qdot[k] * phi;
            }
            (w, wd)
        })
        .collect()
}

/// CSV rows `n,radial_order,frequency_hz,modal_norm_residual`.
pub fn mode_table_csv(modes: &[Mode]) -> String {
    let mut out = String::from("n,radial_order,frequency_hz,modal_norm_residual\n");
    for m in modes {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.3e}",
            m.n,
            m.radial_order,
            m.frequency_hz(),
            m.residual
        );
    }
    out
}

/// Plain-text `r R dR/dr` table of a mode at its nodes.
pub fn mode_shape_text(mode: &Mode) -> String {
    let mut out = format!(
        "# n={} radial_order={} frequency_hz={:.6}\n# r_m R dR_dr\n",
        mode.n,
        mode.radial_order,
        mode.frequency_hz()
    );
    for (r, v, d) in mode.samples() {
        let _ = writeln!(out, "{r:.9e} {v:.9e} {d:.9e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::bessel_lambda;

    fn homogeneous(radius: f64) -> PlateModel {
        let constants = LaminateConstants {
            bending_stiffness: 2.0,
            areal_mass: 1.5,
            neutral_axis_z: 1e-4,
            total_thickness: 2e-4,
            piezo_moment_per_volt: -1e-3,
            effective_e31: -10.0,
        };
        PlateModel::with_defaults(radius, constants)
    }

    #[test]
    fn fundamental_matches_bessel_root() {
        let p = homogeneous(3e-3);
        let modes = radial_eigensolve(&p, 0, 2, 128).unwrap();
        let expect = p.analytic_omega(bessel_lambda(0, 1).unwrap());
        assert!(((modes[0].omega - expect) / expect).abs() < 5e-3);
        let r11 = radial_eigensolve(&p, 1, 1, 128).unwrap()[0].omega / modes[0].omega;
        assert!((r11 - 21.2604 / 10.2158).abs() < 5e-3 * 2.0811);
    }

    #[test]
    fn clamped_rim_and_centre_conditions() {
        let p = homogeneous(1.0);
        for n in 0..3 {
            for m in radial_eigensolve(&p, n, 3, 32).unwrap() {
                let s = m.samples();
                let last = s.last().unwrap();
                assert_eq!((last.1, last.2), (0.0, 0.0));
                match n {
                    0 => assert_eq!(s[0].2, 0.0),
                    1 => assert_eq!(s[0].1, 0.0),
                    _ => assert_eq!((s[0].1, s[0].2), (0.0, 0.0)),
                }
                assert!(m.residual < 1e-7, "{}", m.residual);
            }
        }
    }

    #[test]
    fn validation_errors() {
        let p = homogeneous(1.0);
        assert!(radial_eigensolve(&p, 0, 2, 4).is_err());
        assert!(radial_eigensolve(&p, 0, 20, 10).is_err());
        let mut q = p.clone();
        q.harmonics.clear();
        assert!(q.modal_basis().is_err());
        q = p.clone();
        q.damping_ratio = 1.0;
        assert!(q.validate().is_err());
    }

    #[test]
    fn zero_voltage_and_asymmetric_modes_get_no_force() {
        let p = homogeneous(1.0);
        let modes = p.modal_basis().unwrap();
        for m in &modes {
            assert_eq!(piezo_modal_force(&p, m, 0.0), 0.0);
            if m.n > 0 {
                assert_eq!(piezo_modal_force(&p, m, 40.0), 0.0);
            }
        }
        assert!(piezo_modal_force(&p, &modes[0], 40.0) > 0.0);
    }

    #[test]
    fn newmark_rest_is_fixed_point() {
        let dynm = ModalDynamics {
            omega: vec![10.0, 30.0],
            zeta: vec![0.02, 0.02],
        };
        let s = ModalState::at_rest(2);
        let next = dynm.step(&s, &[0.0, 0.0], 1e-3);
        assert_eq!(next.q, s.q);
        assert_eq!(next.qdot, s.qdot);
    }

    #[test]
    fn newmark_conserves_energy_without_damping() {
        let w = 2.0 * PI * 50.0;
        let dynm = ModalDynamics {
            omega: vec![w],
            zeta: vec![0.0],
        };
        let mut s = dynm.free_state(vec![1.0], vec![0.0]);
        let energy = |s: &ModalState| 0.5 * (s.qdot[0].powi(2) + w * w * s.q[0].powi(2));
        let e0 = energy(&s);
        for _ in 0..1000 {
            let prev = energy(&s);
            s = dynm.step(&s, &[0.0], 1e-3);
            assert!(((energy(&s) - prev) / e0).abs() < 1e-10);
        }
    }

    #[test]
    fn deflection_reproduces_basis() {
        let p = homogeneous(1.0);
        let modes = p.modal_basis().unwrap();
        let mut s = ModalState::at_rest(modes.len());
        let pts = [(0.1, 0.2), (-0.5, 0.3), (0.0, 0.0), (0.7, -0.6)];
        assert!(deflection_field(&modes, &s, &pts).iter().all(|v| *v == (0.0, 0.0)));
        s.q[4] = 1.0;
        for (&(x, y), (w, _)) in pts.iter().zip(deflection_field(&modes, &s, &pts)) {
            assert_eq!(w, modes[4].value_xy(x, y));
        }
        assert_eq!(deflection_field(&modes, &s, &[(1.0, 0.0), (0.8, 0.8)])[1].0, 0.0);
    }
}
