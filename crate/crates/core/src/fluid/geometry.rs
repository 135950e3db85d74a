//! Pump planform and its rasterization onto a uniform cell grid.
//!
//! Coordinates are centred on the chamber: x runs along the channel axis from
//! the inlet (x < 0) to the outlet (x > 0), y across it. Cell centres are
//! placed symmetrically about both axes so that mirror-symmetric geometry
//! gives a mirror-symmetric mask to the cell.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Orientation of the two wedge obstacles along the channel axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObstacleLayout {
    /// Both wedges widen toward the outlet (+x).
    DivergingTowardOutlet,
    /// Both wedges widen toward the inlet (−x).
    DivergingTowardInlet,
    /// Mirror images about the chamber's transverse axis; both widen toward
    /// the chamber.
    Mirrored,
}

impl ObstacleLayout {
    /// +1 when net pumping is expected toward the outlet, −1 toward the
    /// inlet, 0 for the symmetric layout.
    pub fn expected_flow_sign(self) -> f64 {
        match self {
            ObstacleLayout::DivergingTowardOutlet => 1.0,
            ObstacleLayout::DivergingTowardInlet => -1.0,
            ObstacleLayout::Mirrored => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpGeometry {
    /// W, m.
    pub channel_width: f64,
    /// W1, root width of each wedge, m.
    pub obstacle_width: f64,
    /// L, length of each channel from reservoir to chamber rim, m.
    pub channel_length: f64,
    /// L1, length of the channel section that holds the wedge, m.
    pub obstacle_section: f64,
    /// Wedge half-angle α, rad.
    pub wedge_angle: f64,
    /// Chamber (and plate) radius, m.
    pub chamber_radius: f64,
    /// Channel and chamber depth h, m.
    pub depth: f64,
    pub layout: ObstacleLayout,
}

impl Default for PumpGeometry {
    fn default() -> Self {
        Self {
            channel_width: 522e-6,
            obstacle_width: 40e-6,
            channel_length: 1093e-6,
            obstacle_section: 1000e-6,
            wedge_angle: 7f64.to_radians(),
            chamber_radius: 3000e-6,
            depth: 80e-6,
            layout: ObstacleLayout::DivergingTowardOutlet,
        }
    }
}

impl PumpGeometry {
    /// Axial length of a wedge with root width W1 and half-angle α.
    pub fn wedge_length(&self) -> f64 {
        if self.obstacle_width == 0.0 {
            0.0
        } else {
            0.5 * self.obstacle_width / self.wedge_angle.tan()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let positive = [
            ("channel_width", self.channel_width),
            ("channel_length", self.channel_length),
            ("obstacle_section", self.obstacle_section),
            ("wedge_angle", self.wedge_angle),
            ("chamber_radius", self.chamber_radius),
            ("depth", self.depth),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                problems.push(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.obstacle_width >= 0.0) {
            problems.push("obstacle_width must be non-negative".to_string());
        }
        if !(self.obstacle_width < 0.5 * self.channel_width) {
            problems.push("obstacle_width must be below half the channel width".to_string());
        }
        if self.obstacle_section > self.channel_length {
            problems.push("obstacle_section must not exceed channel_length".to_string());
        }
        if self.wedge_angle >= std::f64::consts::FRAC_PI_2 {
            problems.push("wedge_angle must be below 90 degrees".to_string());
        } else if self.wedge_length() > self.obstacle_section {
            problems.push(format!(
                "wedge length {:e} m does not fit in the obstacle section",
                self.wedge_length()
            ));
        }
        if self.channel_width >= 2.0 * self.chamber_radius {
            problems.push("channel must be narrower than the chamber".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }

    /// True when (x, y) lies inside one of the two wedges.
    fn in_obstacle(&self, x: f64, y: f64) -> bool {
        let len = self.wedge_length();
        if len == 0.0 {
            return false;
        }
        let centre = self.chamber_radius + 0.5 * self.channel_length;
        let (local, widens_positive) = if x < 0.0 {
            let widen = !matches!(self.layout, ObstacleLayout::DivergingTowardInlet);
            (x + centre, widen)
        } else {
            let widen = matches!(self.layout, ObstacleLayout::DivergingTowardOutlet);
            (x - centre, widen)
        };
        if local.abs() > 0.5 * len {
            return false;
        }
        // distance from the apex along the widening direction
        let from_apex = if widens_positive {
            local + 0.5 * len
        } else {
            0.5 * len - local
        };
        y.abs() <= from_apex * self.wedge_angle.tan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Solid,
    Fluid,
    /// Fluid cell under the diaphragm.
    Chamber,
    Inlet,
    Outlet,
}

impl CellKind {
    pub fn is_open(self) -> bool {
        !matches!(self, CellKind::Solid)
    }

    pub fn is_reservoir(self) -> bool {
        matches!(self, CellKind::Inlet | CellKind::Outlet)
    }

    pub fn is_unknown(self) -> bool {
        matches!(self, CellKind::Fluid | CellKind::Chamber)
    }

    pub fn code(self) -> u8 {
        match self {
            CellKind::Solid => 0,
            CellKind::Fluid => 1,
            CellKind::Chamber => 2,
            CellKind::Inlet => 3,
            CellKind::Outlet => 4,
        }
    }
}

/// A chamber cell with its position in plate polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChamberCell {
    pub cell: usize,
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub theta: f64,
}

/// Uniform cell grid, dx = dy. Cell (i, j) has index `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub kinds: Vec<CellKind>,
    pub chamber: Vec<ChamberCell>,
    pub chamber_radius: f64,
    /// Cell index → pressure unknown index.
    unknown_of: Vec<Option<usize>>,
    unknown_cells: Vec<usize>,
}

impl FluidGrid {
    /// Builds a grid from explicit cell kinds. Chamber cells get polar
    /// coordinates about the grid centre.
    pub fn from_kinds(nx: usize, ny: usize, dx: f64, kinds: Vec<CellKind>, chamber_radius: f64) -> Result<Self> {
        if kinds.len() != nx * ny {
            return Err(Error::Validation("cell kind array has the wrong size".into()));
        }
        let mut unknown_of = vec![None; nx * ny];
        let mut unknown_cells = Vec::new();
        let mut chamber = Vec::new();
        for (c, kind) in kinds.iter().enumerate() {
            if kind.is_unknown() {
                unknown_of[c] = Some(unknown_cells.len());
                unknown_cells.push(c);
            }
            if *kind == CellKind::Chamber {
                let (x, y) = centre(nx, ny, dx, c);
                chamber.push(ChamberCell {
                    cell: c,
                    x,
                    y,
                    r: x.hypot(y),
                    theta: y.atan2(x),
                });
            }
        }
        let grid = Self {
            nx,
            ny,
            dx,
            dy: dx,
            kinds,
            chamber,
            chamber_radius,
            unknown_of,
            unknown_cells,
        };
        grid.check_watertight()?;
        Ok(grid)
    }

    /// All-fluid rectangle of `nx × ny` interior cells enclosed by a ring of
    /// cells of kind `ring`. With `ring = Solid` the interior is closed; with
    /// reservoir cells the ring acts as a p = 0 boundary.
    pub fn rectangle(nx: usize, ny: usize, dx: f64, ring: CellKind) -> Result<Self> {
        let (tx, ty) = (nx + 2, ny + 2);
        let mut kinds = vec![CellKind::Fluid; tx * ty];
        for j in 0..ty {
            for i in 0..tx {
                if i == 0 || j == 0 || i == tx - 1 || j == ty - 1 {
                    kinds[j * tx + i] = ring;
                }
            }
        }
        Self::from_kinds(tx, ty, dx, kinds, 0.0)
    }

    /// Straight channel `rows` cells wide and `length` cells long with solid
    /// side walls, an inlet column on the left and an outlet column on the
    /// right.
    pub fn straight_channel(length: usize, rows: usize, dx: f64) -> Result<Self> {
        let (tx, ty) = (length + 2, rows + 2);
        let mut kinds = vec![CellKind::Fluid; tx * ty];
        for j in 0..ty {
            for i in 0..tx {
                let c = j * tx + i;
                if j == 0 || j == ty - 1 {
                    kinds[c] = CellKind::Solid;
                } else if i == 0 {
                    kinds[c] = CellKind::Inlet;
                } else if i == tx - 1 {
                    kinds[c] = CellKind::Outlet;
                }
            }
        }
        Self::from_kinds(tx, ty, dx, kinds, 0.0)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ij(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    pub fn kind(&self, i: usize, j: usize) -> CellKind {
        self.kinds[self.index(i, j)]
    }

    /// Cell centre relative to the grid centre.
    pub fn centre(&self, c: usize) -> (f64, f64) {
        centre(self.nx, self.ny, self.dx, c)
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn unknown_of(&self, c: usize) -> Option<usize> {
        self.unknown_of[c]
    }

    pub fn unknown_cells(&self) -> &[usize] {
        &self.unknown_cells
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.kinds.iter().filter(|k| **k == kind).count()
    }

    pub fn chamber_center(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    /// No fluid cell may touch the outer edge of the box; only reservoir
    /// cells may sit there.
    fn check_watertight(&self) -> Result<()> {
        for j in 0..self.ny {
            for i in 0..self.nx {
                let on_edge = i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1;
                let k = self.kind(i, j);
                if on_edge && k.is_unknown() {
                    return Err(Error::Validation(format!(
                        "fluid cell ({i}, {j}) touches the outer boundary"
                    )));
                }
                if !on_edge && k.is_reservoir() {
                    return Err(Error::Validation(format!(
                        "reservoir cell ({i}, {j}) is not on the domain boundary"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn centre(nx: usize, ny: usize, dx: f64, c: usize) -> (f64, f64) {
    let (i, j) = (c % nx, c / nx);
    (
        (i as f64 - 0.5 * (nx as f64 - 1.0)) * dx,
        (j as f64 - 0.5 * (ny as f64 - 1.0)) * dx,
    )
}

/// Rasterizes the inlet channel, chamber disk and outlet channel at cell
/// size ≤ `target_dx`.
pub fn build_grid(geometry: &PumpGeometry, target_dx: f64) -> Result<FluidGrid> {
    geometry.validate()?;
    if !(target_dx > 0.0) {
        return Err(Error::Validation("target_dx must be positive".into()));
    }
    if geometry.obstacle_width > 0.0 && target_dx > geometry.obstacle_width {
        return Err(Error::Validation(format!(
            "target_dx {target_dx:e} m does not resolve the {:e} m obstacle",
            geometry.obstacle_width
        )));
    }
    if target_dx > geometry.channel_width / 4.0 {
        return Err(Error::Validation(format!(
            "target_dx {target_dx:e} m gives fewer than 4 cells across the channel"
        )));
    }
    let a = geometry.chamber_radius;
    let half_len = a + geometry.channel_length;
    let nx = (2.0 * half_len / target_dx).ceil() as usize;
    let dx = 2.0 * half_len / nx as f64;
    let ny = 2 * ((a / dx).ceil() as usize + 1);
    let half_w = 0.5 * geometry.channel_width;

    let mut kinds = vec![CellKind::Solid; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            let (x, y) = centre(nx, ny, dx, c);
            let in_channel = y.abs() <= half_w;
            kinds[c] = if i == 0 || i == nx - 1 {
                match (in_channel, i == 0) {
                    (true, true) => CellKind::Inlet,
                    (true, false) => CellKind::Outlet,
                    _ => CellKind::Solid,
                }
            } else if x * x + y * y < a * a {
                CellKind::Chamber
            } else if in_channel && !geometry.in_obstacle(x, y) {
                CellKind::Fluid
            } else {
                CellKind::Solid
            };
        }
    }
    FluidGrid::from_kinds(nx, ny, dx, kinds, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn chamber_area_is_consistent() {
        let g = build_grid(&PumpGeometry::default(), 15e-6).unwrap();
        let expect = PI * 3e-3f64.powi(2) / (g.dx * g.dy);
        let got = g.count(CellKind::Chamber) as f64;
        assert!(((got - expect) / expect).abs() < 0.01, "{got} vs {expect}");
    }

    #[test]
    fn mirrored_mask_is_symmetric() {
        let geo = PumpGeometry {
            layout: ObstacleLayout::Mirrored,
            ..Default::default()
        };
        let g = build_grid(&geo, 20e-6).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                assert_eq!(g.kind(i, j), g.kind(g.nx - 1 - i, j).mirrored_x(), "({i},{j})");
                assert_eq!(g.kind(i, j), g.kind(i, g.ny - 1 - j));
            }
        }
    }

    #[test]
    fn aligned_wedges_break_x_symmetry() {
        let g = build_grid(&PumpGeometry::default(), 20e-6).unwrap();
        let asym = (0..g.ny)
            .flat_map(|j| (0..g.nx).map(move |i| (i, j)))
            .filter(|&(i, j)| g.kind(i, j) != g.kind(g.nx - 1 - i, j).mirrored_x())
            .count();
        assert!(asym > 0);
    }

    #[test]
    fn zero_width_obstacle_leaves_channels_open() {
        let geo = PumpGeometry {
            obstacle_width: 0.0,
            ..Default::default()
        };
        let g = build_grid(&geo, 20e-6).unwrap();
        let half_w = 0.5 * geo.channel_width;
        for c in 0..g.kinds.len() {
            let (x, y) = g.centre(c);
            let (i, _) = g.ij(c);
            if y.abs() <= half_w && i > 0 && i < g.nx - 1 {
                assert!(g.kinds[c].is_unknown(), "cell at ({x}, {y})");
            }
        }
    }

    #[test]
    fn obstacle_cells_exist_by_default() {
        let geo = PumpGeometry::default();
        let g = build_grid(&geo, 10e-6).unwrap();
        let half_w = 0.5 * geo.channel_width;
        let solid_in_channel = (0..g.kinds.len())
            .filter(|&c| {
                let (x, y) = g.centre(c);
                y.abs() <= half_w && x.abs() > geo.chamber_radius && g.kinds[c] == CellKind::Solid
            })
            .count();
        assert!(solid_in_channel > 10);
    }

    #[test]
    fn reservoirs_on_boundary_and_rejections() {
        let g = build_grid(&PumpGeometry::default(), 20e-6).unwrap();
        assert!(g.count(CellKind::Inlet) > 0);
        assert_eq!(g.count(CellKind::Inlet), g.count(CellKind::Outlet));
        assert!(build_grid(&PumpGeometry::default(), 50e-6).is_err());
        let bad = PumpGeometry {
            obstacle_section: 2e-3,
            ..Default::default()
        };
        assert!(build_grid(&bad, 20e-6).is_err());
        let bad = PumpGeometry {
            obstacle_width: 300e-6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn watertight_violation_detected() {
        let mut kinds = vec![CellKind::Fluid; 9];
        kinds[4] = CellKind::Inlet;
        assert!(FluidGrid::from_kinds(3, 3, 1.0, kinds, 0.0).is_err());
    }
}

#[cfg(test)]
impl CellKind {
    fn mirrored_x(self) -> CellKind {
        match self {
            CellKind::Inlet => CellKind::Outlet,
            CellKind::Outlet => CellKind::Inlet,
            k => k,
        }
    }
}
