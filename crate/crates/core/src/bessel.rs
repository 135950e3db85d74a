//! Bessel functions by power series and the clamped circular plate
//! frequency equation J_n(λ) I_{n+1}(λ) + I_n(λ) J_{n+1}(λ) = 0.

use crate::{Error, Result};

const SERIES_TERMS: usize = 80;

/// Bessel function of the first kind J_n(x), integer order, by power series.
/// Accurate to roughly 1e-10 absolute for x up to about 25.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    series(n, x, -1.0)
}

/// Modified Bessel function of the first kind I_n(x), integer order.
pub fn bessel_i(n: u32, x: f64) -> f64 {
    series(n, x, 1.0)
}

fn series(n: u32, x: f64, sign: f64) -> f64 {
    let half = 0.5 * x;
    // leading term (x/2)^n / n!
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let q = half * half;
    let mut sum = term;
    for m in 1..SERIES_TERMS {
        term *= sign * q / (m as f64 * (m as u32 + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) && m > 2 {
            break;
        }
    }
    sum
}

/// Clamped-plate characteristic function, scaled by 1/I_n so that its
/// magnitude stays O(1) over the scan range.
pub fn clamped_characteristic(n: u32, lambda: f64) -> f64 {
    let i_n = bessel_i(n, lambda);
    bessel_j(n, lambda) * bessel_i(n + 1, lambda) / i_n + bessel_j(n + 1, lambda)
}

const SCAN_LO: f64 = 0.5;
const SCAN_HI: f64 = 25.0;
const SCAN_STEP: f64 = 0.05;

/// λ² for the s-th (1-based) positive root of the clamped-plate frequency
/// equation with n nodal diameters. The plate's angular frequency is
/// ω = λ²/a² · √(D/ρh).
pub fn bessel_lambda(n: u32, s: u32) -> Result<f64> {
    if s == 0 {
        return Err(Error::Validation("radial order starts at 1".into()));
    }
    let f = |x: f64| clamped_characteristic(n, x);
    let mut found = 0;
    let mut lo = SCAN_LO;
    let mut flo = f(lo);
    while lo < SCAN_HI {
        let hi = lo + SCAN_STEP;
        let fhi = f(hi);
        if flo == 0.0 || flo.signum() != fhi.signum() {
            found += 1;
            if found == s {
                let root = bisect(&f, lo, hi, flo);
                return Ok(root * root);
            }
        }
        lo = hi;
        flo = fhi;
    }
    Err(Error::Bracketing {
        n,
        s,
        lo: SCAN_LO,
        hi: SCAN_HI,
    })
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    if flo == 0.0 {
        return lo;
    }
    while (hi - lo) > 1e-10 * lo.abs() {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_values() {
        // Abramowitz & Stegun table 9.1 / 9.8
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j(1, 2.5) - 0.497_094_102_464_274_0).abs() < 1e-13);
        assert!((bessel_i(0, 1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i(1, 3.0) - 3.953_370_217_402_609).abs() < 1e-12);
        assert!((bessel_j(0, 2.404_825_557_695_773)).abs() < 1e-13);
    }

    #[test]
    fn clamped_roots() {
        let cases = [(0, 1, 10.2158), (1, 1, 21.2604), (2, 1, 34.877), (0, 2, 39.771)];
        for (n, s, expect) in cases {
            let l2 = bessel_lambda(n, s).unwrap();
            assert!((l2 - expect).abs() < 1e-3 * expect, "({n},{s}) -> {l2}");
        }
    }

    #[test]
    fn roots_are_ordered() {
        let a = bessel_lambda(0, 1).unwrap();
        let b = bessel_lambda(0, 2).unwrap();
        let c = bessel_lambda(0, 3).unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn bracketing_failure_reports_interval() {
        match bessel_lambda(0, 40) {
            Err(Error::Bracketing { lo, hi, .. }) => assert!(lo < hi),
            other => panic!("{other:?}"),
        }
        assert!(bessel_lambda(0, 0).is_err());
    }
}
