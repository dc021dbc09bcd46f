//! Log-log least-squares rate fits.

use crate::error::{MobilError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_min: f64,
    pub n_max: f64,
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 5;

/// Fits ln v = intercept + slope · ln n over points with n in [n_min, n_max].
///
/// Non-positive values inside the range are rejected with their count.
pub fn fit_rate(ns: &[f64], values: &[f64], n_min: f64, n_max: f64) -> Result<RateFit> {
    if ns.len() != values.len() {
        return Err(MobilError::invalid("abscissa and value columns differ in length"));
    }
    let picked: Vec<(f64, f64)> =
        ns.iter().zip(values).filter(|(n, _)| **n >= n_min && **n <= n_max).map(|(n, v)| (*n, *v)).collect();
    let bad = picked.iter().filter(|(n, v)| !(*v > 0.0) || !v.is_finite() || !(*n > 0.0)).count();
    if bad > 0 {
        return Err(MobilError::invalid(format!("{bad} non-positive or non-finite values in the fit range")));
    }
    if picked.len() < MIN_FIT_POINTS {
        return Err(MobilError::invalid(format!(
            "need at least {MIN_FIT_POINTS} points in range, found {}",
            picked.len()
        )));
    }
    let xs: Vec<f64> = picked.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = picked.iter().map(|(_, v)| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(MobilError::invalid("fit range contains a single abscissa"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        n_min: picked.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        n_max: picked.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
        points: picked.len(),
    })
}

/// Dyadic grid 2^lo, …, 2^hi.
pub fn dyadic_grid(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|e| 1usize << e).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let ns: Vec<f64> = dyadic_grid(6, 11).iter().map(|n| *n as f64).collect();
        let vs: Vec<f64> = ns.iter().map(|n| 3.0 / (n * n)).collect();
        let f = fit_rate(&ns, &vs, 64.0, 2048.0).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn counts_bad_values() {
        let ns = [1.0, 2.0, 3.0, 4.0, 5.0];
        let err = fit_rate(&ns, &[1.0, 0.0, -1.0, 1.0, 1.0], 1.0, 5.0).unwrap_err();
        assert!(err.to_string().contains('2'));
    }

    #[test]
    fn too_few_points() {
        assert!(fit_rate(&[1.0, 2.0], &[1.0, 1.0], 1.0, 2.0).is_err());
    }
}
