//! Least-squares fits used by the sweep and spreading checks.

/// `R² = 1 − SS_res / SS_tot` about the mean of `y`.
fn r_squared(y: &[f64], predicted: impl Iterator<Item = f64>) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(predicted).map(|(v, p)| (v - p).powi(2)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Ordinary least squares `y ≈ a + b·x`, returning `(a, b, R²)`.
pub fn linear(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    let a = my - b * mx;
    let r2 = r_squared(y, x.iter().map(|v| a + b * v));
    (a, b, r2)
}

/// Single-amplitude fit `y ≈ A·f` through the origin, returning `(A, R²)`.
pub fn proportional(f: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(f.len(), y.len());
    let ff: f64 = f.iter().map(|v| v * v).sum();
    let fy: f64 = f.iter().zip(y).map(|(a, b)| a * b).sum();
    let amp = if ff > 0.0 { fy / ff } else { f64::NAN };
    (amp, r_squared(y, f.iter().map(|v| amp * v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 - 2.0 * v).collect();
        let (a, b, r2) = linear(&x, &y);
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(b, -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r2, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn anti_phase_shape_fits_badly() {
        let phi: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
        let cos2: Vec<f64> = phi.iter().map(|p| (0.5 * p).cos().powi(2)).collect();
        let sin2: Vec<f64> = phi.iter().map(|p| (0.5 * p).sin().powi(2)).collect();
        let (amp, r2) = proportional(&cos2, &cos2.iter().map(|v| 3.0 * v).collect::<Vec<_>>());
        assert_abs_diff_eq!(amp, 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r2, 1.0, epsilon = 1e-14);
        let (_, r2) = proportional(&cos2, &sin2);
        assert!(r2 < 0.0);
    }
}
