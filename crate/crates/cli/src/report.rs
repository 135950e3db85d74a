//! Dry-plate mode report.

use std::fmt::Write as _;

use micropump_core::bessel::bessel_lambda;
use micropump_core::materials::{isotropic_equivalents, LaminateConstants, Layer};
use micropump_core::plate::{mode_table_csv, radial_eigensolve, Mode, PlateModel};
use micropump_core::Result;

/// Natural frequencies quoted for the fabricated chip, Hz.
pub const PAPER_REFERENCE_HZ: [f64; 3] = [62812.0, 168124.0, 289100.0];

pub struct ModesReport {
    pub text: String,
    pub csv: String,
    pub modes: Vec<Mode>,
    /// (n, s, FEM Hz, oracle Hz) for the homogeneous check.
    pub verification: Vec<(u32, u32, f64, f64)>,
}

/// Bending constants of one homogeneous layer.
pub fn single_layer_constants(layer: &Layer) -> Result<LaminateConstants> {
    let (e, nu) = isotropic_equivalents(&layer.elastic)?;
    let h = layer.thickness;
    Ok(LaminateConstants {
        bending_stiffness: e * h.powi(3) / (12.0 * (1.0 - nu * nu)),
        areal_mass: layer.density * h,
        neutral_axis_z: 0.5 * h,
        total_thickness: h,
        piezo_moment_per_volt: 0.0,
        effective_e31: 0.0,
    })
}

pub fn modes_report(model: &PlateModel) -> Result<ModesReport> {
    let mut modes = model.modal_basis()?;
    modes.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    let c = &model.constants;
    let mut t = String::new();
    let _ = writeln!(
        t,
        "Dry clamped plate: a = {:.4e} m, D = {:.4} N m, rho*h = {:.4} kg/m^2",
        model.radius, c.bending_stiffness, c.areal_mass
    );
    let _ = writeln!(t, "{:>3} {:>3} {:>14} {:>18} {:>10}", "n", "s", "FEM [Hz]", "CLT analytic [Hz]", "residual");
    for m in &modes {
        let analytic = model.analytic_omega(bessel_lambda(m.n, m.radial_order)?) / (2.0 * std::f64::consts::PI);
        let _ = writeln!(
            t,
            "{:>3} {:>3} {:>14.1} {:>18.1} {:>10.2e}",
            m.n,
            m.radial_order,
            m.frequency_hz(),
            analytic,
            m.residual
        );
    }
    let _ = writeln!(t);
    let _ = writeln!(t, "Lowest modes against the paper reference (3-D chip FEM):");
    let _ = writeln!(
        t,
        "{:>4} {:>8} {:>14} {:>34} {:>8}",
        "rank", "(n,s)", "FEM [Hz]", "paper reference (3-D chip FEM) [Hz]", "ratio"
    );
    for (k, reference) in PAPER_REFERENCE_HZ.iter().enumerate() {
        if let Some(m) = modes.get(k) {
            let _ = writeln!(
                t,
                "{:>4} {:>8} {:>14.1} {:>34.1} {:>8.3}",
                k + 1,
                format!("({},{})", m.n, m.radial_order),
                m.frequency_hz(),
                reference,
                m.frequency_hz() / reference
            );
        }
    }
    let _ = writeln!(
        t,
        "note: the reference values model the whole die, whose support is not the chamber rim;\n      \
         a plate clamped at the chamber rim is stiffer, so the ratio is expected to exceed 1."
    );

    let glass = Layer::default_glass();
    let homogeneous = PlateModel::with_defaults(model.radius, single_layer_constants(&glass)?);
    let mut verification = Vec::new();
    let _ = writeln!(t);
    let _ = writeln!(
        t,
        "Homogeneous verification ({} layer, 128 elements) against the Bessel root oracle:",
        glass.name
    );
    let _ = writeln!(t, "{:>3} {:>3} {:>14} {:>14} {:>10}", "n", "s", "FEM [Hz]", "oracle [Hz]", "rel.err");
    for n in 0..3 {
        let fem = radial_eigensolve(&homogeneous, n, 2, 128)?;
        for m in fem {
            let oracle = homogeneous.analytic_omega(bessel_lambda(n, m.radial_order)?) / (2.0 * std::f64::consts::PI);
            let err = (m.frequency_hz() - oracle) / oracle;
            let _ = writeln!(
                t,
                "{:>3} {:>3} {:>14.1} {:>14.1} {:>10.2e}",
                n,
                m.radial_order,
                m.frequency_hz(),
                oracle,
                err
            );
            verification.push((n, m.radial_order, m.frequency_hz(), oracle));
        }
    }
    Ok(ModesReport {
        text: t,
        csv: mode_table_csv(&modes),
        modes,
        verification,
    })
}
