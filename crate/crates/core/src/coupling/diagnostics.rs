//! Cycle diagnostics: phase fit, modal energy shares and deflection
//! centroid.

use std::f64::consts::PI;

use crate::linalg::{lu_solve, Matrix};
use crate::Result;

/// Least-squares fit of `a sin(Ωt) + b cos(Ωt) + c`. Returns (a, b, c).
pub fn harmonic_fit(times: &[f64], signal: &[f64], omega: f64) -> Result<(f64, f64, f64)> {
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (&t, &y) in times.iter().zip(signal) {
        let basis = [(omega * t).sin(), (omega * t).cos(), 1.0];
        for i in 0..3 {
            atb[i] += basis[i] * y;
            for j in 0..3 {
                ata[i][j] += basis[i] * basis[j];
            }
        }
    }
    let m = Matrix::from_fn(3, 3, |i, j| ata[i][j]);
    let x = lu_solve(&m, &atb)?;
    Ok((x[0], x[1], x[2]))
}

/// Lag of the response's fundamental behind a drive `sin(Ωt + phase)`,
/// wrapped to (−π/2, 3π/2], and the fundamental amplitude.
pub fn phase_lag(times: &[f64], response: &[f64], omega: f64, drive_phase: f64) -> Result<(f64, f64)> {
    let (a, b, _) = harmonic_fit(times, response, omega)?;
    let amplitude = a.hypot(b);
    let lag = drive_phase - b.atan2(a);
    Ok((wrap_lag(lag), amplitude))
}

pub fn wrap_lag(lag: f64) -> f64 {
    let mut l = lag.rem_euclid(2.0 * PI);
    if l > 1.5 * PI {
        l -= 2.0 * PI;
    }
    l
}

/// Normalized time-mean modal energies. An all-zero input gives uniform
/// shares and `true` for the degenerate flag.
pub fn modal_fractions(energy_sums: &[f64]) -> (Vec<f64>, bool) {
    let total: f64 = energy_sums.iter().sum();
    if !(total > 0.0) {
        let n = energy_sums.len().max(1) as f64;
        return (vec![1.0 / n; energy_sums.len()], true);
    }
    (energy_sums.iter().map(|e| e / total).collect(), false)
}

/// |W|-weighted centroid of a deflection sampled at `points`. Returns
/// `centre` when the deflection vanishes.
pub fn mode_centroid(w: &[f64], points: &[(f64, f64)], centre: (f64, f64)) -> (f64, f64) {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (&wv, &(x, y)) in w.iter().zip(points) {
        let a = wv.abs();
        sw += a;
        sx += a * x;
        sy += a * y;
    }
    if sw == 0.0 {
        centre
    } else {
        (sx / sw, sy / sw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructed_signal_lag() {
        let omega = 2.0 * PI * 3200.0;
        let period = 2.0 * PI / omega;
        let times: Vec<f64> = (0..1600).map(|k| 8.0 * period + k as f64 * period / 400.0).collect();
        let w: Vec<f64> = times.iter().map(|t| 2e-7 * (omega * t - 0.7).sin() + 1e-9).collect();
        let (lag, amp) = phase_lag(&times, &w, omega, 0.0).unwrap();
        assert!((lag - 0.7).abs() < 1e-6, "{lag}");
        assert!((amp - 2e-7).abs() < 1e-12);
    }

    #[test]
    fn lag_wraps_into_range() {
        assert!((wrap_lag(-0.1) + 0.1).abs() < 1e-15);
        assert!((wrap_lag(1.6 * PI) + 0.4 * PI).abs() < 1e-12);
        assert!((wrap_lag(PI) - PI).abs() < 1e-15);
        assert!((wrap_lag(1.5 * PI) - 1.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fractions_are_uniform() {
        let (f, flag) = modal_fractions(&[0.0; 4]);
        assert!(flag);
        assert_eq!(f, vec![0.25; 4]);
        let (f, flag) = modal_fractions(&[3.0, 1.0]);
        assert!(!flag);
        assert_eq!(f, vec![0.75, 0.25]);
    }

    #[test]
    fn zero_deflection_centroid_is_centre() {
        let pts = [(1.0, 0.0), (0.0, 1.0)];
        assert_eq!(mode_centroid(&[0.0, 0.0], &pts, (0.0, 0.0)), (0.0, 0.0));
        assert_eq!(mode_centroid(&[1.0, -3.0], &pts, (0.0, 0.0)), (0.25, 0.75));
    }
}
