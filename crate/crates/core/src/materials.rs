//! Layer material data and the classical-lamination reduction of the
//! PZT/glass stack to Kirchhoff plate constants.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{symmetric_eigen, Matrix};
use crate::{Error, Result};

/// 6×6 stiffness in Voigt order (11, 22, 33, 23, 13, 12), Pa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticTensor {
    c: [[f64; 6]; 6],
}

impl ElasticTensor {
    pub fn new(c: [[f64; 6]; 6]) -> Result<Self> {
        for i in 0..6 {
            for j in 0..i {
                if c[i][j] != c[j][i] {
                    return Err(Error::Validation(format!(
                        "stiffness not symmetric: C[{i}][{j}] = {:e}, C[{j}][{i}] = {:e}",
                        c[i][j], c[j][i]
                    )));
                }
            }
        }
        let m = Matrix::from_fn(6, 6, |i, j| c[i][j]);
        let eig = symmetric_eigen(&m)?;
        if let Some((index, &value)) = eig.values.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(Error::NotPositiveDefinite { index, value });
        }
        Ok(Self { c })
    }

    pub fn from_row_major(values: &[f64]) -> Result<Self> {
        if values.len() != 36 {
            return Err(Error::Validation(format!(
                "c_voigt needs 36 numbers, got {}",
                values.len()
            )));
        }
        let mut c = [[0.0; 6]; 6];
        for (k, v) in values.iter().enumerate() {
            c[k / 6][k % 6] = *v;
        }
        Self::new(c)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[i][j]
    }

    pub fn as_array(&self) -> &[[f64; 6]; 6] {
        &self.c
    }
}

/// Piezoelectric stress constants e (3×6), C/m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiezoTensor {
    e: [[f64; 6]; 3],
}

impl PiezoTensor {
    /// Rows 1 and 2 (field along x or y) may only couple to shear strains
    /// (Voigt columns 4..6) for a poled transversely isotropic ceramic.
    pub fn new(e: [[f64; 6]; 3]) -> Result<Self> {
        for (row, entries) in e.iter().enumerate().take(2) {
            for (col, v) in entries.iter().enumerate().take(3) {
                if *v != 0.0 {
                    return Err(Error::Validation(format!(
                        "piezo row {} has normal-strain coupling e[{row}][{col}] = {v}",
                        row + 1
                    )));
                }
            }
        }
        Ok(Self { e })
    }

    pub fn from_row_major(values: &[f64]) -> Result<Self> {
        if values.len() != 18 {
            return Err(Error::Validation(format!(
                "e_matrix needs 18 numbers, got {}",
                values.len()
            )));
        }
        let mut e = [[0.0; 6]; 3];
        for (k, v) in values.iter().enumerate() {
            e[k / 6][k % 6] = *v;
        }
        Self::new(e)
    }

    pub fn e31(&self) -> f64 {
        self.e[2][0]
    }

    pub fn e33(&self) -> f64 {
        self.e[2][2]
    }

    pub fn as_array(&self) -> &[[f64; 6]; 3] {
        &self.e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub thickness: f64,
    pub density: f64,
    pub elastic: ElasticTensor,
    pub piezo: Option<PiezoTensor>,
}

impl Layer {
    pub fn new(
        name: impl Into<String>,
        thickness: f64,
        density: f64,
        elastic: ElasticTensor,
        piezo: Option<PiezoTensor>,
    ) -> Result<Self> {
        let name = name.into();
        if !(thickness > 0.0) {
            return Err(Error::Validation(format!("{name}: thickness must be > 0")));
        }
        if !(density > 0.0) {
            return Err(Error::Validation(format!("{name}: density must be > 0")));
        }
        Ok(Self {
            name,
            thickness,
            density,
            elastic,
            piezo,
        })
    }

    /// Passive substrate: 500 µm, 2330 kg/m³.
    pub fn default_glass() -> Self {
        let c = cubic_like(1.65e11, 0.63e11, 1.65e11, 0.63e11, 0.79e11, 0.79e11);
        Self::new("glass", 500e-6, 2330.0, ElasticTensor::new(c).unwrap(), None).unwrap()
    }

    /// PZT-5A drive layer: 200 µm, 2330 kg/m³.
    pub fn default_pzt() -> Self {
        let c = cubic_like(12.1e10, 7.54e10, 11.1e10, 7.52e10, 2.11e10, 2.28e10);
        let e = [
            [0.0, 0.0, 0.0, 0.0, 12.3, 0.0],
            [0.0, 0.0, 0.0, 12.3, 0.0, 0.0],
            [-5.4, -5.4, 15.8, 0.0, 0.0, 0.0],
        ];
        Self::new(
            "pzt",
            200e-6,
            2330.0,
            ElasticTensor::new(c).unwrap(),
            Some(PiezoTensor::new(e).unwrap()),
        )
        .unwrap()
    }
}

/// Transversely isotropic stiffness about the 3 axis.
fn cubic_like(c11: f64, c12: f64, c33: f64, c13: f64, c44: f64, c66: f64) -> [[f64; 6]; 6] {
    [
        [c11, c12, c13, 0.0, 0.0, 0.0],
        [c12, c11, c13, 0.0, 0.0, 0.0],
        [c13, c13, c33, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, c44, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, c44, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, c66],
    ]
}

/// In-plane Young's modulus and Poisson ratio from C11 and C12.
pub fn isotropic_equivalents(elastic: &ElasticTensor) -> Result<(f64, f64)> {
    let c11 = elastic.get(0, 0);
    let c12 = elastic.get(0, 1);
    let youngs = (c11 - c12) * (c11 + 2.0 * c12) / (c11 + c12);
    let poisson = c12 / (c11 + c12);
    if !(0.0..0.5).contains(&poisson) || !(youngs > 0.0) {
        return Err(Error::Validation(format!(
            "in-plane constants out of range: E = {youngs:e}, nu = {poisson}"
        )));
    }
    Ok((youngs, poisson))
}

/// Plane-stress condensed e31 (σ33 = 0): ē31 = e31 − e33·C13/C33.
pub fn effective_e31(layer: &Layer) -> Result<f64> {
    let piezo = layer
        .piezo
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("layer {} is not piezoelectric", layer.name)))?;
    let c33 = layer.elastic.get(2, 2);
    if !(c33 > 0.0) {
        return Err(Error::Validation(format!("{}: C33 must be > 0", layer.name)));
    }
    let c13 = layer.elastic.get(0, 2);
    Ok(piezo.e31() - piezo.e33() * c13 / c33)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaminateConstants {
    /// Bending stiffness about the neutral axis, N·m.
    pub bending_stiffness: f64,
    /// Mass per unit area, kg/m².
    pub areal_mass: f64,
    /// Neutral axis height above the bottom of the stack, m.
    pub neutral_axis_z: f64,
    pub total_thickness: f64,
    /// Equivalent bending moment per unit length per volt, N·m/m/V = N/V.
    pub piezo_moment_per_volt: f64,
    pub effective_e31: f64,
}

impl LaminateConstants {
    pub fn piezo_moment(&self, volts: f64) -> f64 {
        self.piezo_moment_per_volt * volts
    }
}

/// Reduces an ordered (bottom to top) layer stack to plate constants.
pub fn laminate_reduce(stack: &[Layer], drive_layer: usize) -> Result<LaminateConstants> {
    laminate_reduce_from(stack, drive_layer, 0.0)
}

/// Same as [`laminate_reduce`] with the stack bottom placed at `z0`. The
/// returned neutral axis is in the same shifted frame.
pub fn laminate_reduce_from(
    stack: &[Layer],
    drive_layer: usize,
    z0: f64,
) -> Result<LaminateConstants> {
    if stack.is_empty() {
        return Err(Error::Validation("laminate stack is empty".into()));
    }
    let drive = stack.get(drive_layer).ok_or_else(|| {
        Error::Validation(format!(
            "drive layer index {drive_layer} out of range for {} layers",
            stack.len()
        ))
    })?;
    let e31 = effective_e31(drive)?;

    let mut bounds = Vec::with_capacity(stack.len());
    let mut z = z0;
    for layer in stack {
        bounds.push((z, z + layer.thickness));
        z += layer.thickness;
    }
    let total = z - z0;

    let mut reduced = Vec::with_capacity(stack.len());
    for layer in stack {
        let (e, nu) = isotropic_equivalents(&layer.elastic)?;
        reduced.push(e / (1.0 - nu * nu));
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for (ep, (lo, hi)) in reduced.iter().zip(&bounds) {
        num += ep * (hi - lo) * 0.5 * (lo + hi);
        den += ep * (hi - lo);
    }
    let zbar = num / den;

    let mut d = 0.0;
    for (ep, (lo, hi)) in reduced.iter().zip(&bounds) {
        let top = hi - zbar;
        let bot = lo - zbar;
        d += ep * (top.powi(3) - bot.powi(3)) / 3.0;
    }
    let areal_mass = stack.iter().map(|l| l.density * l.thickness).sum();
    let (lo, hi) = bounds[drive_layer];
    let zc = 0.5 * (lo + hi);

    Ok(LaminateConstants {
        bending_stiffness: d,
        areal_mass,
        neutral_axis_z: zbar,
        total_thickness: total,
        piezo_moment_per_volt: e31 * (zc - zbar),
        effective_e31: e31,
    })
}

/// Optional per-layer overrides read from a TOML material file:
///
/// ```toml
/// [glass]
/// thickness_m = 5.0e-4
/// density_kgm3 = 2330.0
///
/// [pzt]
/// density_kgm3 = 7750.0
/// e_matrix = [ ... 18 numbers ... ]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glass: Option<LayerOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pzt: Option<LayerOverride>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_kgm3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_voigt: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_matrix: Option<Vec<f64>>,
}

impl LayerOverride {
    pub fn apply(&self, base: &Layer) -> Result<Layer> {
        let elastic = match &self.c_voigt {
            Some(v) => ElasticTensor::from_row_major(v)?,
            None => base.elastic,
        };
        let piezo = match &self.e_matrix {
            Some(v) => Some(PiezoTensor::from_row_major(v)?),
            None => base.piezo,
        };
        Layer::new(
            base.name.clone(),
            self.thickness_m.unwrap_or(base.thickness),
            self.density_kgm3.unwrap_or(base.density),
            elastic,
            piezo,
        )
    }
}

impl MaterialFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::MaterialFile(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Glass/PZT stack (bottom to top) with overrides applied.
    pub fn stack(&self) -> Result<Vec<Layer>> {
        let glass = match &self.glass {
            Some(o) => o.apply(&Layer::default_glass())?,
            None => Layer::default_glass(),
        };
        let pzt = match &self.pzt {
            Some(o) => o.apply(&Layer::default_pzt())?,
            None => Layer::default_pzt(),
        };
        if pzt.piezo.is_none() {
            return Err(Error::MaterialFile("pzt layer needs piezo constants".into()));
        }
        Ok(vec![glass, pzt])
    }
}

/// Default two-layer stack: glass substrate below, PZT on top (index 1).
pub fn default_stack() -> Vec<Layer> {
    vec![Layer::default_glass(), Layer::default_pzt()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn table_tensors_are_valid() {
        let g = Layer::default_glass();
        let p = Layer::default_pzt();
        for layer in [&g, &p] {
            let m = Matrix::from_fn(6, 6, |i, j| layer.elastic.get(i, j));
            assert_eq!(m.asymmetry(), 0.0);
        }
        assert!(p.piezo.is_some());
    }

    #[test]
    fn isotropic_glass_and_pzt() {
        let (e, nu) = isotropic_equivalents(&Layer::default_glass().elastic).unwrap();
        assert!(rel(e, 1.3018e11) < 1e-4, "{e}");
        assert!(rel(nu, 0.27632) < 1e-4, "{nu}");
        let (e, nu) = isotropic_equivalents(&Layer::default_pzt().elastic).unwrap();
        assert!(rel(e, 6.3106e10) < 1e-4, "{e}");
        assert!(rel(nu, 0.38391) < 1e-4, "{nu}");
    }

    #[test]
    fn decoupled_axes() {
        let c = cubic_like(2e11, 0.0, 2e11, 0.0, 1e11, 1e11);
        let (e, nu) = isotropic_equivalents(&ElasticTensor::new(c).unwrap()).unwrap();
        assert_eq!(e, 2e11);
        assert_eq!(nu, 0.0);
    }

    #[test]
    fn non_positive_definite_names_eigenvalue() {
        let mut c = cubic_like(1e11, 2e11, 1e11, 0.0, 1e10, 1e10);
        c[2][2] = 1e11;
        match ElasticTensor::new(c) {
            Err(Error::NotPositiveDefinite { value, .. }) => assert!(value <= 0.0),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_stiffness_rejected() {
        let mut c = cubic_like(1e11, 2e10, 1e11, 2e10, 1e10, 1e10);
        c[0][1] = 2.1e10;
        assert!(matches!(ElasticTensor::new(c), Err(Error::Validation(_))));
    }

    #[test]
    fn piezo_pattern_checked() {
        let mut e = *Layer::default_pzt().piezo.unwrap().as_array();
        e[0][1] = 1.0;
        assert!(PiezoTensor::new(e).is_err());
    }

    #[test]
    fn e31_condensation() {
        let v = effective_e31(&Layer::default_pzt()).unwrap();
        assert!((v - (-16.105)).abs() < 2e-3, "{v}");

        let mut pzt = Layer::default_pzt();
        let mut e = *pzt.piezo.unwrap().as_array();
        e[2][2] = 0.0;
        pzt.piezo = Some(PiezoTensor::new(e).unwrap());
        assert_eq!(effective_e31(&pzt).unwrap(), -5.4);

        e[2][0] = 0.0;
        e[2][1] = 0.0;
        pzt.piezo = Some(PiezoTensor::new(e).unwrap());
        assert_eq!(effective_e31(&pzt).unwrap(), 0.0);

        assert!(effective_e31(&Layer::default_glass()).is_err());
    }

    #[test]
    fn single_glass_layer() {
        let mut g = Layer::default_glass();
        // a single layer needs piezo data to act as its own drive layer
        g.piezo = Layer::default_pzt().piezo;
        let lc = laminate_reduce(&[g], 0).unwrap();
        assert!(rel(lc.neutral_axis_z, 250e-6) < 1e-12);
        assert!(rel(lc.bending_stiffness, 1.468) < 1e-3, "{}", lc.bending_stiffness);
        assert!(rel(lc.areal_mass, 1.165) < 1e-12);
        assert!(lc.piezo_moment_per_volt.abs() < 1e-18);
    }

    #[test]
    fn default_unimorph() {
        let lc = laminate_reduce(&default_stack(), 1).unwrap();
        assert!((lc.neutral_axis_z - 310.8e-6).abs() < 0.1e-6, "{}", lc.neutral_axis_z);
        assert!(rel(lc.bending_stiffness, 3.02) < 5e-3, "{}", lc.bending_stiffness);
        assert!(rel(lc.areal_mass, 1.631) < 1e-12);
        assert!(rel(lc.piezo_moment_per_volt, -4.66e-3) < 2e-3, "{}", lc.piezo_moment_per_volt);
        assert!(lc.neutral_axis_z > 0.0 && lc.neutral_axis_z < lc.total_thickness);
    }

    #[test]
    fn thin_pzt_limit_approaches_glass() {
        let mut stack = default_stack();
        stack[1].thickness = 1e-9;
        let lc = laminate_reduce(&stack, 1).unwrap();
        assert!(rel(lc.bending_stiffness, 1.468) < 2e-3);
        assert!((lc.neutral_axis_z - 250e-6).abs() < 1e-8);
    }

    #[test]
    fn errors_for_bad_stacks() {
        assert!(laminate_reduce(&[], 0).is_err());
        assert!(laminate_reduce(&default_stack(), 2).is_err());
        assert!(laminate_reduce(&default_stack(), 0).is_err());
    }

    #[test]
    fn material_file_overrides() {
        let f = MaterialFile::parse("[pzt]\ndensity_kgm3 = 7750.0\nthickness_m = 1.0e-4\n").unwrap();
        let stack = f.stack().unwrap();
        assert_eq!(stack[1].density, 7750.0);
        assert_eq!(stack[1].thickness, 1e-4);
        assert_eq!(stack[0], Layer::default_glass());
        assert!(MaterialFile::parse("[pzt]\ncolor = 1\n").is_err());
        let short = MaterialFile::parse("[glass]\nc_voigt = [1.0, 2.0]\n").unwrap();
        assert!(short.stack().is_err());
    }
}
