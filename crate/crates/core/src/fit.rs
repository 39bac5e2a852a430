//! Straight-line least squares.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_var: f64,
    pub intercept_var: f64,
    pub covariance: f64,
    /// Weighted sum of squared residuals.
    pub chi2: f64,
    pub dof: usize,
    pub r2: f64,
}

impl LineFit {
    pub fn slope_err(&self) -> f64 {
        self.slope_var.sqrt()
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }

    pub fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// Multiplies the parameter covariance by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.slope_var *= factor;
        self.intercept_var *= factor;
        self.covariance *= factor;
        self
    }
}

/// Fits `y = a x + b`.
///
/// Without weights the covariance is scaled by the residual variance.
/// With weights `w_i = 1 / sigma_i^2` the covariance is the absolute one;
/// callers decide whether to rescale by the reduced chi-square.
pub fn fit_line(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::InvalidSpec("fit inputs differ in length".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("line fit needs two points, got {n}")));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        sw += w(i);
        sx += w(i) * x[i];
        sy += w(i) * y[i];
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxx += w(i) * dx * dx;
        sxy += w(i) * dx * dy;
        syy += w(i) * dy * dy;
    }
    if !(sxx > 0.0) || !sw.is_finite() {
        return Err(Error::InsufficientData("abscissae are degenerate".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let chi2: f64 = (0..n).map(|i| w(i) * (y[i] - slope * x[i] - intercept).powi(2)).sum();
    let dof = n - 2;
    let scale = if weights.is_some() {
        1.0
    } else if dof > 0 {
        chi2 / dof as f64
    } else {
        0.0
    };
    let slope_var = scale / sxx;
    Ok(LineFit {
        slope,
        intercept,
        slope_var,
        intercept_var: scale * (1.0 / sw + mx * mx / sxx),
        covariance: -mx * slope_var,
        chi2,
        dof,
        r2: if syy > 0.0 { 1.0 - chi2 / syy } else { 1.0 },
    })
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Median of a non-empty slice.
pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Linear-interpolated quantile of a non-empty slice.
pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const X: [f64; 6] = [0.5, 1.5, 2.5, 5.0, 7.0, 16.0];
    const Y: [f64; 6] = [-1.0, 3.0, 2.0, 6.0, 10.0, 25.0];

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    // Reference values from numpy.linalg.lstsq and the weighted normal equations.
    #[test]
    fn unweighted_matches_reference() {
        let f = fit_line(&X, &Y, None).unwrap();
        assert!(close(f.slope, 1.630_217_67, 1e-8));
        assert!(close(f.intercept, -1.330_345_71, 1e-8));
        assert!(close(f.slope_var, 0.007_812_7, 1e-6));
        assert!(close(f.intercept_var, 0.441_091_81, 1e-7));
        assert!(close(f.covariance, -0.042_318_77, 1e-7));
    }

    #[test]
    fn weighted_matches_reference() {
        let w = [2.0, 1.0, 3.0, 10.0, 1.0, 0.4];
        let f = fit_line(&X, &Y, Some(&w)).unwrap();
        assert!(close(f.slope, 1.602_364_4, 1e-7));
        assert!(close(f.intercept, -1.759_399_26, 1e-8));
        assert!(close(f.slope_var, 0.008_828_45, 1e-6));
        assert!(close(f.intercept_var, 0.214_572_02, 1e-7));
        assert!(close(f.reduced_chi2(), 1.792_715_26, 1e-8));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_line(&[1.0], &[1.0], None), Err(Error::InsufficientData(_))));
        assert!(matches!(fit_line(&[2.0, 2.0], &[1.0, 3.0], None), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn order_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - 1.290_994_45).abs() < 1e-8);
    }

    // Oracle: Cramer's rule on the 2x2 normal equations.
    proptest! {
        #[test]
        fn agrees_with_normal_equations(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0, 0.1f64..10.0), 3..40)
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let w: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..x.len() {
                s += w[i]; sx += w[i] * x[i]; sy += w[i] * y[i];
                sxx += w[i] * x[i] * x[i]; sxy += w[i] * x[i] * y[i];
            }
            let det = s * sxx - sx * sx;
            prop_assume!(det.abs() > 1e-6 * s * sxx);
            let f = fit_line(&x, &y, Some(&w)).unwrap();
            prop_assert!(close(f.slope, (s * sxy - sx * sy) / det, 1e-6));
            prop_assert!(close(f.intercept, (sxx * sy - sx * sxy) / det, 1e-6));
            prop_assert!(close(f.slope_var, s / det, 1e-6));
        }
    }
}
