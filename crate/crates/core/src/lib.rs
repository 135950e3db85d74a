//! Coupled structural/fluid model of a piezoelectrically driven valveless
//! micropump.
//!
//! The pump is a clamped circular PZT/glass diaphragm over a shallow chamber
//! that connects to two channels, each carrying a wedge-shaped obstacle. The
//! diaphragm is represented by a small basis of clamped-plate modes; the
//! liquid by a depth-averaged incompressible solver on a staggered grid. The
//! two are advanced together by a partitioned coupling scheme chosen from a
//! registry at runtime.
//!
//! Module map:
//!
//! * [`materials`]: layer tensors and the lamination reduction to plate constants.
//! * [`bessel`]: characteristic roots of the clamped circular plate.
//! * [`linalg`]: dense symmetric eigensolver used by the plate model.
//! * [`plate`]: radial finite elements, piezo loading, Newmark integration.
//! * [`fluid`]: geometry rasterization, momentum prediction, pressure projection.
//! * [`coupling`]: interface exchange, coupling schemes, cycle diagnostics.
//! * [`registry`]: name-to-constructor tables for the interchangeable strategies.

pub mod bessel;
pub mod coupling;
pub mod error;
pub mod fluid;
pub mod linalg;
pub mod materials;
pub mod plate;
pub mod registry;

pub use error::{Error, Result};

/// Conversion factor from m³/s to µl/min.
pub const M3S_TO_UL_MIN: f64 = 6.0e10;
