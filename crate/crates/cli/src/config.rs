//! Run configuration: a TOML file whose every key is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use micropump_core::coupling::{CouplingConfig, DriveSignal, SimulationSetup};
use micropump_core::fluid::{FluidProps, ObstacleLayout, PumpGeometry};
use micropump_core::materials::{laminate_reduce, MaterialFile};
use micropump_core::plate::{Harmonic, PlateModel};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialsSection {
    /// TOML file overriding layer properties; relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateSection {
    pub harmonics: Vec<u32>,
    pub radial_orders: usize,
    pub elements: usize,
    pub damping_ratio: f64,
    /// Default: chamber radius / 16.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taper_width_m: Option<f64>,
    /// Default: chamber radius (full coverage).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub electrode_radius_m: Option<f64>,
}

impl Default for PlateSection {
    fn default() -> Self {
        Self {
            harmonics: vec![0, 1, 2],
            radial_orders: 3,
            elements: 64,
            damping_ratio: 0.02,
            taper_width_m: None,
            electrode_radius_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub channel_width_m: f64,
    pub obstacle_width_m: f64,
    pub channel_length_m: f64,
    pub obstacle_section_m: f64,
    pub wedge_angle_deg: f64,
    pub chamber_radius_m: f64,
    pub depth_m: f64,
    pub layout: ObstacleLayout,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = PumpGeometry::default();
        Self {
            channel_width_m: g.channel_width,
            obstacle_width_m: g.obstacle_width,
            channel_length_m: g.channel_length,
            obstacle_section_m: g.obstacle_section,
            wedge_angle_deg: 7.0,
            chamber_radius_m: g.chamber_radius,
            depth_m: g.depth,
            layout: g.layout,
        }
    }
}

impl GeometrySection {
    pub fn to_geometry(&self) -> PumpGeometry {
        PumpGeometry {
            channel_width: self.channel_width_m,
            obstacle_width: self.obstacle_width_m,
            channel_length: self.channel_length_m,
            obstacle_section: self.obstacle_section_m,
            wedge_angle: self.wedge_angle_deg.to_radians(),
            chamber_radius: self.chamber_radius_m,
            depth: self.depth_m,
            layout: self.layout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidSection {
    pub density_kgm3: f64,
    pub kinematic_viscosity_m2s: f64,
}

impl Default for FluidSection {
    fn default() -> Self {
        let f = FluidProps::default();
        Self {
            density_kgm3: f.density,
            kinematic_viscosity_m2s: f.kinematic_viscosity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    pub amplitude_volts: f64,
    pub frequency_hz: f64,
    pub phase_rad: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        let d = DriveSignal::default();
        Self {
            amplitude_volts: d.amplitude_volts,
            frequency_hz: d.frequency_hz,
            phase_rad: d.phase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Explicit frequency list. When empty, `points` log-spaced values from
    /// `min_hz` to `max_over_resonance` times the estimated wet resonance.
    pub frequencies_hz: Vec<f64>,
    pub points: usize,
    pub min_hz: f64,
    pub max_over_resonance: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            frequencies_hz: Vec::new(),
            points: 15,
            min_hz: 500.0,
            max_over_resonance: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub target_dx_m: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { target_dx_m: 20e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Field snapshot every this many steps of a single run; 0 disables.
    pub snapshot_every: usize,
    pub time_series: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_every: 0,
            time_series: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub materials: MaterialsSection,
    pub plate: PlateSection,
    pub geometry: GeometrySection,
    pub fluid: FluidSection,
    pub drive: DriveSection,
    pub sweep: SweepSection,
    pub coupling: CouplingConfig,
    pub grid: GridSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Every semantic violation, each naming its key.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let g = &self.geometry;
        for (key, v) in [
            ("geometry.channel_width_m", g.channel_width_m),
            ("geometry.channel_length_m", g.channel_length_m),
            ("geometry.obstacle_section_m", g.obstacle_section_m),
            ("geometry.wedge_angle_deg", g.wedge_angle_deg),
            ("geometry.chamber_radius_m", g.chamber_radius_m),
            ("geometry.depth_m", g.depth_m),
            ("fluid.density_kgm3", self.fluid.density_kgm3),
            ("fluid.kinematic_viscosity_m2s", self.fluid.kinematic_viscosity_m2s),
            ("drive.frequency_hz", self.drive.frequency_hz),
            ("grid.target_dx_m", self.grid.target_dx_m),
            ("sweep.min_hz", self.sweep.min_hz),
            ("sweep.max_over_resonance", self.sweep.max_over_resonance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                p.push(format!("{key} must be > 0 (got {v})"));
            }
        }
        if !(g.obstacle_width_m >= 0.0) {
            p.push(format!("geometry.obstacle_width_m must be >= 0 (got {})", g.obstacle_width_m));
        } else if g.obstacle_width_m >= 0.5 * g.channel_width_m {
            p.push("geometry.obstacle_width_m must be below half of geometry.channel_width_m".to_string());
        }
        if g.obstacle_section_m > g.channel_length_m {
            p.push("geometry.obstacle_section_m must not exceed geometry.channel_length_m".to_string());
        }
        if !(g.wedge_angle_deg < 90.0) {
            p.push("geometry.wedge_angle_deg must be below 90".to_string());
        }
        if !(self.drive.amplitude_volts >= 0.0) || !self.drive.amplitude_volts.is_finite() {
            p.push(format!("drive.amplitude_volts must be >= 0 (got {})", self.drive.amplitude_volts));
        }
        if !self.drive.phase_rad.is_finite() {
            p.push("drive.phase_rad must be finite".to_string());
        }
        let pl = &self.plate;
        if pl.harmonics.is_empty() {
            p.push("plate.harmonics must list at least one harmonic".to_string());
        }
        if pl.harmonics.windows(2).any(|w| w[0] >= w[1]) {
            p.push("plate.harmonics must be strictly increasing".to_string());
        }
        if pl.elements < 8 {
            p.push(format!("plate.elements must be >= 8 (got {})", pl.elements));
        }
        if pl.radial_orders == 0 || pl.radial_orders > pl.elements {
            p.push("plate.radial_orders must be in 1..=plate.elements".to_string());
        }
        if !(0.0..1.0).contains(&pl.damping_ratio) {
            p.push(format!("plate.damping_ratio must be in [0, 1) (got {})", pl.damping_ratio));
        }
        let a = g.chamber_radius_m;
        let electrode = pl.electrode_radius_m.unwrap_or(a);
        if !(electrode > 0.0 && electrode <= a) {
            p.push("plate.electrode_radius_m must be in (0, geometry.chamber_radius_m]".to_string());
        }
        let taper = pl.taper_width_m.unwrap_or(a / 16.0);
        if !(taper > 0.0 && taper <= electrode) {
            p.push("plate.taper_width_m must be in (0, electrode radius]".to_string());
        }
        let f = &self.sweep.frequencies_hz;
        if f.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            p.push("sweep.frequencies_hz must all be > 0".to_string());
        }
        // repeats are allowed so a sweep can check its own determinism
        if f.windows(2).any(|w| w[0] > w[1]) {
            p.push("sweep.frequencies_hz must be non-decreasing".to_string());
        }
        if f.is_empty() && self.sweep.points < 2 {
            p.push("sweep.points must be >= 2".to_string());
        }
        p.extend(self.coupling.problems());
        if p.is_empty() {
            // remaining geometric invariants checked by the builder
            if let Err(e) = self.geometry.to_geometry().validate() {
                p.push(format!("geometry: {e}"));
            }
            let g = self.geometry.to_geometry();
            if g.obstacle_width > 0.0 && self.grid.target_dx_m > g.obstacle_width {
                p.push("grid.target_dx_m must not exceed geometry.obstacle_width_m".to_string());
            }
            if self.grid.target_dx_m > g.channel_width / 4.0 {
                p.push("grid.target_dx_m must give at least 4 cells across the channel".to_string());
            }
        }
        p
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(p))
        }
    }

    pub fn drive(&self) -> DriveSignal {
        DriveSignal {
            amplitude_volts: self.drive.amplitude_volts,
            frequency_hz: self.drive.frequency_hz,
            phase: self.drive.phase_rad,
        }
    }

    /// Plate model from the materials and plate sections.
    pub fn plate_model(&self, base_dir: &Path) -> Result<PlateModel, ConfigError> {
        let stack = match &self.materials.file {
            Some(f) => {
                let path = base_dir.join(f);
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Read { path: path.clone(), source })?;
                MaterialFile::parse(&text)
                    .and_then(|m| m.stack())
                    .map_err(|e| ConfigError::Invalid(vec![format!("materials.file {}: {e}", path.display())]))?
            }
            None => micropump_core::materials::default_stack(),
        };
        let constants = laminate_reduce(&stack, 1).map_err(|e| ConfigError::Invalid(vec![format!("materials: {e}")]))?;
        let a = self.geometry.chamber_radius_m;
        let mut model = PlateModel::with_defaults(a, constants);
        model.harmonics = self
            .plate
            .harmonics
            .iter()
            .map(|&n| Harmonic {
                n,
                radial_orders: self.plate.radial_orders,
                elements: self.plate.elements,
            })
            .collect();
        model.damping_ratio = self.plate.damping_ratio;
        model.electrode_radius = self.plate.electrode_radius_m.unwrap_or(a);
        model.taper_width = self.plate.taper_width_m.unwrap_or(a / 16.0);
        model
            .validate()
            .map_err(|e| ConfigError::Invalid(vec![format!("plate: {e}")]))?;
        Ok(model)
    }

    /// Simulation setup at the configured drive frequency.
    pub fn setup(&self, base_dir: &Path) -> Result<SimulationSetup, ConfigError> {
        self.validate()?;
        Ok(SimulationSetup {
            plate: self.plate_model(base_dir)?,
            geometry: self.geometry.to_geometry(),
            target_dx: self.grid.target_dx_m,
            fluid: FluidProps {
                density: self.fluid.density_kgm3,
                kinematic_viscosity: self.fluid.kinematic_viscosity_m2s,
            },
            drive: self.drive(),
            coupling: self.coupling.clone(),
        })
    }
}

/// Reads and validates a config file. A missing path gives the defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, ConfigError> {
    let cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}
