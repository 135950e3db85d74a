//! Pressure Poisson operator and interchangeable solvers for it.
//!
//! The operator is the negated 5-point Laplacian scaled by dx², assembled
//! over FLUID and CHAMBER cells. Faces to solid cells are dropped (zero
//! normal gradient); faces to reservoir cells contribute to the diagonal
//! only (p = 0 there). The resulting matrix is symmetric positive
//! semi-definite, and definite as soon as one reservoir face exists.

use faer::linalg::solvers::SolveCore;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Conj, Side};

use super::geometry::FluidGrid;
use crate::registry::{Entry, Registry};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct PoissonOperator {
    n: usize,
    diag: Vec<f64>,
    /// CSR off-diagonal neighbours; every stored coefficient is −1.
    offsets: Vec<usize>,
    neighbours: Vec<usize>,
    dirichlet_faces: usize,
}

impl PoissonOperator {
    pub fn assemble(grid: &FluidGrid) -> Self {
        let n = grid.unknown_cells().len();
        let mut diag = vec![0.0; n];
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbours = Vec::with_capacity(4 * n);
        let mut dirichlet_faces = 0;
        offsets.push(0);
        for (row, &c) in grid.unknown_cells().iter().enumerate() {
            let (i, j) = grid.ij(c);
            let adj = [
                (i.wrapping_sub(1), j),
                (i + 1, j),
                (i, j.wrapping_sub(1)),
                (i, j + 1),
            ];
            for (ii, jj) in adj {
                // unknown cells never touch the box edge, so indices are valid
                let nb = grid.index(ii, jj);
                let kind = grid.kinds[nb];
                if kind.is_unknown() {
                    diag[row] += 1.0;
                    neighbours.push(grid.unknown_of(nb).expect("unknown cell"));
                } else if kind.is_reservoir() {
                    diag[row] += 1.0;
                    dirichlet_faces += 1;
                }
            }
            offsets.push(neighbours.len());
        }
        Self {
            n,
            diag,
            offsets,
            neighbours,
            dirichlet_faces,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// True when no reservoir face pins the pressure level.
    pub fn is_singular(&self) -> bool {
        self.dirichlet_faces == 0
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for row in 0..self.n {
            let mut s = self.diag[row] * x[row];
            for &nb in &self.neighbours[self.offsets[row]..self.offsets[row + 1]] {
                s -= x[nb];
            }
            out[row] = s;
        }
    }

    fn triplets(&self, pin: Option<usize>) -> Vec<Triplet<usize, usize, f64>> {
        let mut t = Vec::with_capacity(self.n + self.neighbours.len());
        for row in 0..self.n {
            if Some(row) == pin {
                t.push(Triplet::new(row, row, 1.0));
                continue;
            }
            t.push(Triplet::new(row, row, self.diag[row]));
            for &nb in &self.neighbours[self.offsets[row]..self.offsets[row + 1]] {
                if Some(nb) != pin {
                    t.push(Triplet::new(row, nb, -1.0));
                }
            }
        }
        t
    }

    /// For a singular operator the right-hand side must sum to zero.
    pub fn check_compatible(&self, rhs: &[f64]) -> Result<()> {
        if !self.is_singular() {
            return Ok(());
        }
        let net: f64 = rhs.iter().sum();
        let scale: f64 = rhs.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        if net.abs() > 1e-10 * scale {
            return Err(Error::Incompatible { net });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PressureSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = rhs` for a fixed operator. `x` holds the initial guess on
/// entry for iterative solvers.
pub trait PressureSolver: Send {
    fn name(&self) -> &'static str;
    fn solve(&mut self, rhs: &[f64], x: &mut [f64]) -> Result<SolveReport>;
}

pub type PressureSolverBuilder = fn(&PoissonOperator, &PressureSettings) -> Result<Box<dyn PressureSolver>>;

pub static PRESSURE_SOLVERS: Registry<PressureSolverBuilder> = Registry::new(
    "pressure solver",
    &[
        Entry {
            name: "cholesky",
            summary: "sparse Cholesky factorization, reused every step",
            build: build_cholesky,
        },
        Entry {
            name: "cg-jacobi",
            summary: "conjugate gradients with Jacobi preconditioning",
            build: build_cg,
        },
    ],
);

pub fn pressure_solver(name: &str, op: &PoissonOperator, settings: &PressureSettings) -> Result<Box<dyn PressureSolver>> {
    (PRESSURE_SOLVERS.lookup(name)?.build)(op, settings)
}

fn build_cg(op: &PoissonOperator, settings: &PressureSettings) -> Result<Box<dyn PressureSolver>> {
    Ok(Box::new(JacobiCg {
        op: op.clone(),
        settings: *settings,
    }))
}

fn build_cholesky(op: &PoissonOperator, _: &PressureSettings) -> Result<Box<dyn PressureSolver>> {
    // sweeps parallelise across frequencies; keep each factorisation serial
    // so results do not depend on the thread count
    faer::set_global_parallelism(faer::Par::Seq);
    let pin = if op.is_singular() && !op.is_empty() { Some(0) } else { None };
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(op.n, op.n, &op.triplets(pin))
        .map_err(|e| Error::PressureFactorization(format!("{e:?}")))?;
    let llt = a
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::PressureFactorization(format!("{e:?}")))?;
    Ok(Box::new(SparseCholesky {
        op: op.clone(),
        llt,
        pin,
        work: Col::zeros(op.n),
    }))
}

pub struct JacobiCg {
    op: PoissonOperator,
    settings: PressureSettings,
}

impl PressureSolver for JacobiCg {
    fn name(&self) -> &'static str {
        "cg-jacobi"
    }

    fn solve(&mut self, rhs: &[f64], x: &mut [f64]) -> Result<SolveReport> {
        self.op.check_compatible(rhs)?;
        let n = self.op.n;
        let b: Vec<f64> = if self.op.is_singular() {
            let mean = rhs.iter().sum::<f64>() / n as f64;
            rhs.iter().map(|v| v - mean).collect()
        } else {
            rhs.to_vec()
        };
        let bnorm = norm(&b);
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(SolveReport::default());
        }
        let inv_diag: Vec<f64> = self.op.diag.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 0.0 }).collect();
        let mut ax = vec![0.0; n];
        self.op.apply(x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut history = Vec::new();
        let mut q = vec![0.0; n];
        for it in 0..=self.settings.max_iterations {
            let rel = norm(&r) / bnorm;
            history.push(rel);
            if rel <= self.settings.tolerance {
                if self.op.is_singular() {
                    let mean = x.iter().sum::<f64>() / n as f64;
                    x.iter_mut().for_each(|v| *v -= mean);
                }
                return Ok(SolveReport {
                    iterations: it,
                    relative_residual: rel,
                });
            }
            if it == self.settings.max_iterations {
                break;
            }
            self.op.apply(&p, &mut q);
            let alpha = rz / dot(&p, &q);
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            for k in 0..n {
                z[k] = r[k] * inv_diag[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        let tail = history[history.len().saturating_sub(5)..].to_vec();
        Err(Error::PressureNotConverged {
            iterations: self.settings.max_iterations,
            tail,
        })
    }
}

pub struct SparseCholesky {
    op: PoissonOperator,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    pin: Option<usize>,
    work: Col<f64>,
}

impl PressureSolver for SparseCholesky {
    fn name(&self) -> &'static str {
        "cholesky"
    }

    fn solve(&mut self, rhs: &[f64], x: &mut [f64]) -> Result<SolveReport> {
        self.op.check_compatible(rhs)?;
        for (k, v) in rhs.iter().enumerate() {
            self.work[k] = *v;
        }
        if let Some(p) = self.pin {
            self.work[p] = 0.0;
        }
        self.llt.solve_in_place_with_conj(Conj::No, self.work.as_mat_mut());
        for (k, v) in x.iter_mut().enumerate() {
            *v = self.work[k];
        }
        if self.pin.is_some() {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            x.iter_mut().for_each(|v| *v -= mean);
        }
        let mut ax = vec![0.0; x.len()];
        self.op.apply(x, &mut ax);
        let bnorm = norm(rhs);
        let res = if bnorm > 0.0 {
            let mean = if self.op.is_singular() {
                rhs.iter().sum::<f64>() / rhs.len() as f64
            } else {
                0.0
            };
            ax.iter().zip(rhs).map(|(a, b)| (b - mean - a).powi(2)).sum::<f64>().sqrt() / bnorm
        } else {
            0.0
        };
        if !res.is_finite() {
            return Err(Error::NonFinite("pressure"));
        }
        Ok(SolveReport {
            iterations: 1,
            relative_residual: res,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::geometry::CellKind;

    #[test]
    fn solvers_agree() {
        let grid = FluidGrid::rectangle(12, 9, 1.0, CellKind::Inlet).unwrap();
        let op = PoissonOperator::assemble(&grid);
        let rhs: Vec<f64> = (0..op.len()).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let mut a = vec![0.0; op.len()];
        let mut b = vec![0.0; op.len()];
        pressure_solver("cg-jacobi", &op, &PressureSettings::default()).unwrap().solve(&rhs, &mut a).unwrap();
        pressure_solver("cholesky", &op, &PressureSettings::default()).unwrap().solve(&rhs, &mut b).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-7, "{x} {y}");
        }
    }

    #[test]
    fn closed_domain_requires_compatible_rhs() {
        let grid = FluidGrid::rectangle(6, 5, 1.0, CellKind::Solid).unwrap();
        let op = PoissonOperator::assemble(&grid);
        assert!(op.is_singular());
        let bad = vec![1.0; op.len()];
        for name in ["cg-jacobi", "cholesky"] {
            let mut s = pressure_solver(name, &op, &PressureSettings::default()).unwrap();
            let mut x = vec![0.0; op.len()];
            assert!(matches!(s.solve(&bad, &mut x), Err(Error::Incompatible { .. })), "{name}");
            let mut good = vec![0.0; op.len()];
            good[0] = 1.0;
            good[op.len() - 1] = -1.0;
            let rep = s.solve(&good, &mut x).unwrap();
            assert!(rep.relative_residual < 1e-8, "{name} {rep:?}");
            assert!(x.iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let grid = FluidGrid::rectangle(20, 20, 1.0, CellKind::Inlet).unwrap();
        let op = PoissonOperator::assemble(&grid);
        let settings = PressureSettings {
            tolerance: 1e-12,
            max_iterations: 3,
        };
        let mut s = pressure_solver("cg-jacobi", &op, &settings).unwrap();
        let rhs = vec![1.0; op.len()];
        let mut x = vec![0.0; op.len()];
        match s.solve(&rhs, &mut x) {
            Err(Error::PressureNotConverged { iterations, tail }) => {
                assert_eq!(iterations, 3);
                assert!(!tail.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_solver_lists_names() {
        let grid = FluidGrid::rectangle(3, 3, 1.0, CellKind::Inlet).unwrap();
        let op = PoissonOperator::assemble(&grid);
        let err = pressure_solver("multigrid", &op, &PressureSettings::default()).err().unwrap();
        assert!(err.to_string().contains("cholesky"));
    }
}
