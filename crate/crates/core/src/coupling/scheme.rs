//! Interface solvers for one coupled step.
//!
//! Over a single step the fluid pressure is affine in the membrane's modal
//! velocities and the Newmark plate update is affine in the modal load, so
//! the interface problem reduces to finding x with
//!
//! ```text
//! x = c + g ∘ (f* + A x)
//! ```
//!
//! where c is the plate velocity under piezo load alone, g the Newmark
//! velocity gain, f* the fluid load at zero membrane velocity and A the
//! pressure-velocity coupling matrix. Schemes differ in how they reach x.

use crate::linalg::{lu_solve, Matrix};
use crate::registry::{Entry, Registry};
use crate::{Error, Result};

pub struct InterfaceProblem<'a> {
    /// Modal velocity with piezo load only.
    pub free_velocity: &'a [f64],
    pub gain: &'a [f64],
    /// Fluid modal load for zero membrane velocity.
    pub base_force: &'a [f64],
    /// ∂(fluid load) / ∂(modal velocity).
    pub coupling: &'a Matrix,
    /// Fluid modal load accepted at the previous step.
    pub previous_force: &'a [f64],
}

impl InterfaceProblem<'_> {
    /// Fluid load for membrane velocity `x`.
    pub fn fluid_force(&self, x: &[f64]) -> Vec<f64> {
        let ax = self.coupling.mul_vec(x);
        self.base_force.iter().zip(ax).map(|(b, a)| b + a).collect()
    }

    /// Plate velocity under fluid load `f`.
    pub fn plate_velocity(&self, f: &[f64]) -> Vec<f64> {
        self.free_velocity
            .iter()
            .zip(self.gain)
            .zip(f)
            .map(|((c, g), f)| c + g * f)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceSolution {
    pub velocity: Vec<f64>,
    /// Fluid evaluations performed.
    pub iterations: usize,
    pub converged: bool,
    /// Last relative interface residual.
    pub residual: f64,
}

pub trait CouplingScheme: Send {
    fn name(&self) -> &'static str;
    fn solve(&mut self, problem: &InterfaceProblem) -> Result<InterfaceSolution>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSettings {
    pub subiterations_max: usize,
    pub relaxation_omega0: f64,
    pub interface_tolerance: f64,
}

pub type SchemeBuilder = fn(&SchemeSettings) -> Box<dyn CouplingScheme>;

pub static COUPLING_SCHEMES: Registry<SchemeBuilder> = Registry::new(
    "coupling scheme",
    &[
        Entry {
            name: "newton",
            summary: "exact interface Jacobian, one linear solve per step",
            build: |_| Box::new(Newton),
        },
        Entry {
            name: "aitken",
            summary: "fixed-point sub-iterations with dynamic Aitken relaxation",
            build: |s| Box::new(Aitken { settings: *s }),
        },
        Entry {
            name: "staggered",
            summary: "explicit: plate sees the previous step's fluid load",
            build: |_| Box::new(Staggered),
        },
    ],
);

pub fn coupling_scheme(name: &str, settings: &SchemeSettings) -> Result<Box<dyn CouplingScheme>> {
    Ok((COUPLING_SCHEMES.lookup(name)?.build)(settings))
}

pub struct Staggered;

impl CouplingScheme for Staggered {
    fn name(&self) -> &'static str {
        "staggered"
    }

    fn solve(&mut self, problem: &InterfaceProblem) -> Result<InterfaceSolution> {
        Ok(InterfaceSolution {
            velocity: problem.plate_velocity(problem.previous_force),
            iterations: 1,
            converged: true,
            residual: 0.0,
        })
    }
}

pub struct Aitken {
    settings: SchemeSettings,
}

impl CouplingScheme for Aitken {
    fn name(&self) -> &'static str {
        "aitken"
    }

    fn solve(&mut self, problem: &InterfaceProblem) -> Result<InterfaceSolution> {
        let s = &self.settings;
        let mut x = problem.plate_velocity(problem.previous_force);
        let mut omega = s.relaxation_omega0;
        let mut prev_r: Option<Vec<f64>> = None;
        let mut first_norm = None;
        let mut residual = f64::INFINITY;
        for it in 1..=s.subiterations_max {
            if it == s.subiterations_max {
                // the last fluid evaluation is the one accepted with x
                return Ok(InterfaceSolution {
                    velocity: x,
                    iterations: it,
                    converged: s.subiterations_max == 1,
                    residual: if s.subiterations_max == 1 { 0.0 } else { residual },
                });
            }
            let target = problem.plate_velocity(&problem.fluid_force(&x));
            let r: Vec<f64> = target.iter().zip(&x).map(|(t, x)| t - x).collect();
            let rn = norm(&r);
            let scale = norm(&target).max(f64::MIN_POSITIVE);
            residual = rn / scale;
            let r0 = *first_norm.get_or_insert(rn);
            if r0 > 0.0 && rn > 1e3 * r0 {
                return Err(Error::InterfaceDiverged { growth: rn / r0 });
            }
            if rn <= s.interface_tolerance * scale {
                return Ok(InterfaceSolution {
                    velocity: target,
                    iterations: it + 1,
                    converged: true,
                    residual,
                });
            }
            if let Some(pr) = &prev_r {
                let dr: Vec<f64> = r.iter().zip(pr).map(|(a, b)| a - b).collect();
                let denom = dot(&dr, &dr);
                if denom > 0.0 {
                    omega = -omega * dot(pr, &dr) / denom;
                }
            }
            for (xk, rk) in x.iter_mut().zip(&r) {
                *xk += omega * rk;
            }
            prev_r = Some(r);
        }
        unreachable!("loop returns on its last iteration")
    }
}

pub struct Newton;

impl CouplingScheme for Newton {
    fn name(&self) -> &'static str {
        "newton"
    }

    fn solve(&mut self, problem: &InterfaceProblem) -> Result<InterfaceSolution> {
        let n = problem.gain.len();
        let a = problem.coupling;
        let j = Matrix::from_fn(n, n, |r, c| {
            let id = if r == c { 1.0 } else { 0.0 };
            id - problem.gain[r] * a[(r, c)]
        });
        let rhs = problem.plate_velocity(problem.base_force);
        let x = lu_solve(&j, &rhs)?;
        let check = problem.plate_velocity(&problem.fluid_force(&x));
        let rn: f64 = check.iter().zip(&x).map(|(c, x)| (c - x).powi(2)).sum::<f64>().sqrt();
        Ok(InterfaceSolution {
            velocity: x,
            iterations: 2,
            converged: true,
            residual: rn / norm(&check).max(f64::MIN_POSITIVE),
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

    fn problem_data(strength: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Matrix, Vec<f64>) {
        let c = vec![1.0, -0.5, 0.25];
        let g = vec![0.1, 0.1, 0.1];
        let fb = vec![0.3, 0.0, -0.2];
        // symmetric negative definite coupling
        let a = Matrix::from_fn(3, 3, |i, j| {
            let base = if i == j { -2.0 } else { -0.5 };
            strength * base
        });
        (c, g, fb, a, vec![0.0; 3])
    }

    fn settings(max: usize) -> SchemeSettings {
        SchemeSettings {
            subiterations_max: max,
            relaxation_omega0: 0.5,
            interface_tolerance: 1e-10,
        }
    }

    #[test]
    fn schemes_reach_the_same_fixed_point() {
        let (c, g, fb, a, prev) = problem_data(20.0);
        let p = InterfaceProblem {
            free_velocity: &c,
            gain: &g,
            base_force: &fb,
            coupling: &a,
            previous_force: &prev,
        };
        let xn = Newton.solve(&p).unwrap();
        let xa = coupling_scheme("aitken", &settings(50)).unwrap().solve(&p).unwrap();
        assert!(xa.converged, "{xa:?}");
        for (u, v) in xn.velocity.iter().zip(&xa.velocity) {
            assert!((u - v).abs() < 1e-8, "{u} {v}");
        }
        let back = p.plate_velocity(&p.fluid_force(&xn.velocity));
        for (u, v) in back.iter().zip(&xn.velocity) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn single_subiteration_is_staggered() {
        let (c, g, fb, a, _) = problem_data(20.0);
        let prev = vec![0.7, -0.1, 0.05];
        let p = InterfaceProblem {
            free_velocity: &c,
            gain: &g,
            base_force: &fb,
            coupling: &a,
            previous_force: &prev,
        };
        let one = coupling_scheme("aitken", &settings(1)).unwrap().solve(&p).unwrap();
        let st = Staggered.solve(&p).unwrap();
        assert_eq!(one.velocity, st.velocity);
    }

    #[test]
    fn unknown_scheme_is_rejected() {
        assert!(coupling_scheme("monolithic", &settings(3)).is_err());
    }
}
