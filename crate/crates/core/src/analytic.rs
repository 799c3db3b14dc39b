//! Closed-form predictions used to cross-check the numerical engine.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parameters of a single linear passage through an avoided crossing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LZParams {
    /// Effective coupling; the minimal gap is `2c`.
    pub c: f64,
    /// Sweep rate `|du/dt|`.
    pub udot: f64,
}

/// Inputs of the stirring-cycle predictions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CyclePrediction {
    pub lambda_ccw: f64,
    pub lambda_cw: f64,
    /// Dynamical phase accumulated between the two crossings.
    pub phi: f64,
    pub p_lz: f64,
}

/// `exp(−2π c² / u̇)`.
pub fn lz_probability(p: &LZParams) -> f64 {
    if p.c == 0.0 {
        return 1.0;
    }
    (-2.0 * PI * p.c * p.c / p.udot).exp()
}

/// Sweep rate that yields the target transition probability at coupling `c`.
pub fn udot_for_probability(c: f64, p_lz: f64) -> Result<f64> {
    if !(p_lz > 0.0 && p_lz < 1.0) || c <= 0.0 {
        return Err(Error::OutOfRange(format!(
            "need 0 < P < 1 and c > 0, got P = {p_lz}, c = {c}"
        )));
    }
    Ok(-2.0 * PI * c * c / p_lz.ln())
}

/// `⟨Q^k⟩ = p^⌊(k+1)/2⌋` for a single passage with transferred probability `p`.
pub fn single_path_moments(p: f64, k: u32) -> f64 {
    p.powi(k.div_ceil(2) as i32)
}

/// Eigenvalues `±√p` of the single-path counting operator with the weights
/// `½(1 ± √p)` of an initial state localized on the source site.
pub fn single_path_spectrum(p: f64) -> [(f64, f64); 2] {
    let s = p.sqrt();
    [(-s, 0.5 * (1.0 - s)), (s, 0.5 * (1.0 + s))]
}

/// Classical moments of a 0/1 transfer with probability `p`.
pub fn classical_single_path_moment(p: f64, k: u32) -> f64 {
    if k == 0 {
        1.0
    } else {
        p
    }
}

/// Mean `λp` and variance `λ²(1 − p)p` of a passage split between two paths.
pub fn double_path_moments(lambda: f64, p: f64) -> (f64, f64) {
    (lambda * p, lambda * lambda * (1.0 - p) * p)
}

/// `(1 − λp)·λp`, the binomial variance a classical splitting picture
/// would predict. Kept only as a contrast.
pub fn classical_double_path_variance(lambda: f64, p: f64) -> Result<f64> {
    let x = lambda * p;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange(format!(
            "classical variance needs λp in [0, 1], got {x}"
        )));
    }
    Ok((1.0 - x) * x)
}

/// Charge per cycle `λ⟲ − λ⟳` in the adiabatic limit.
pub fn stirring_charge(lambda_ccw: f64, lambda_cw: f64) -> f64 {
    lambda_ccw - lambda_cw
}

/// `|λ⟲ + λ⟳·e^{iφ}|²·P_LZ`.
pub fn stirring_variance(pred: &CyclePrediction) -> f64 {
    let z = C64::new(pred.lambda_ccw, 0.0) + C64::from_polar(pred.lambda_cw, pred.phi);
    z.norm_sqr() * pred.p_lz
}

/// `|e^{iφ₁} − e^{iφ₂}|²·P_LZ = 4 sin²(φ/2)·P_LZ`, the population left
/// behind after two passages.
pub fn residual_occupation(phi: f64, p_lz: f64) -> f64 {
    4.0 * (0.5 * phi).sin().powi(2) * p_lz
}

/// `exp(−Ω·t_p)`, an order-of-magnitude leakage scale without prefactor.
pub fn fgr_scale(omega: f64, t_p: f64) -> f64 {
    (-omega * t_p).exp()
}

/// Population dependence of the single-passage fluctuations: the variance
/// `(1 − P)P` equals `|Q⊥|²`.
pub fn single_path_perp_magnitude(p_lz: f64) -> f64 {
    ((1.0 - p_lz) * p_lz).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn lz_limits_and_unit_exponent() {
        assert_eq!(lz_probability(&LZParams { c: 0.0, udot: 0.3 }), 1.0);
        assert!(lz_probability(&LZParams { c: 0.1, udot: 1e-9 }) < 1e-300);
        let p = lz_probability(&LZParams {
            c: 0.1,
            udot: 0.02 * PI,
        });
        assert_abs_diff_eq!(p, (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(p, 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn udot_inverts_probability() {
        let udot = udot_for_probability(0.05, 0.3).unwrap();
        assert_relative_eq!(
            lz_probability(&LZParams { c: 0.05, udot }),
            0.3,
            epsilon = 1e-14
        );
        assert!(udot_for_probability(0.05, 1.0).is_err());
    }

    #[test]
    fn single_path_ladder() {
        for &p in &[0.0, 0.3, 1.0] {
            assert_eq!(single_path_moments(p, 0), 1.0);
        }
        assert_eq!(single_path_moments(0.25, 1), 0.25);
        assert_eq!(single_path_moments(0.25, 2), 0.25);
        assert_eq!(single_path_moments(0.25, 3), 0.0625);
        assert_eq!(single_path_moments(0.25, 4), 0.0625);
    }

    #[test]
    fn spectrum_reproduces_ladder() {
        let p = 0.37;
        let spec = single_path_spectrum(p);
        for k in 0..7 {
            let m: f64 = spec.iter().map(|&(q, w)| w * q.powi(k as i32)).sum();
            assert_abs_diff_eq!(m, single_path_moments(p, k), epsilon = 1e-15);
        }
    }

    #[test]
    fn quantum_and_classical_ladders_split_at_third_moment() {
        let p = 0.4;
        for k in 1..=2 {
            assert_eq!(
                single_path_moments(p, k),
                classical_single_path_moment(p, k)
            );
        }
        assert!((single_path_moments(p, 3) - classical_single_path_moment(p, 3)).abs() > 0.1);
        for p in [0.0, 1.0] {
            assert_eq!(
                single_path_moments(p, 3),
                classical_single_path_moment(p, 3)
            );
        }
    }

    #[test]
    fn double_path_examples() {
        let (m, v) = double_path_moments(1.0, 0.3);
        assert_eq!(m, 0.3);
        assert_abs_diff_eq!(v, 0.21, epsilon = 1e-16);
        assert_eq!(double_path_moments(0.5, 1.0), (0.5, 0.0));
        let (m, v) = double_path_moments(1.7, 1.0);
        assert_eq!((m, v), (1.7, 0.0));
        assert_abs_diff_eq!(1.0 - 1.7, -0.7, epsilon = 1e-15);
    }

    #[test]
    fn classical_variance_examples() {
        assert_eq!(classical_double_path_variance(0.5, 1.0).unwrap(), 0.25);
        assert_eq!(classical_double_path_variance(0.5, 0.0).unwrap(), 0.0);
        assert_eq!(classical_double_path_variance(1.0, 0.5).unwrap(), 0.25);
        assert!(classical_double_path_variance(1.7, 1.0).is_err());
    }

    #[test]
    fn stirring_examples() {
        assert_eq!(stirring_charge(0.4, 0.4), 0.0);
        assert_eq!(stirring_charge(1.0, 0.0), 1.0);
        assert_abs_diff_eq!(stirring_charge(1.7, -0.7), 2.4, epsilon = 1e-15);
        let base = CyclePrediction {
            lambda_ccw: 0.5,
            lambda_cw: 0.5,
            phi: 0.0,
            p_lz: 0.01,
        };
        assert_eq!(
            stirring_variance(&CyclePrediction { p_lz: 0.0, ..base }),
            0.0
        );
        assert_abs_diff_eq!(
            stirring_variance(&CyclePrediction { phi: PI, ..base }),
            0.0,
            epsilon = 1e-18
        );
        assert_abs_diff_eq!(stirring_variance(&base), 4.0 * 0.25 * 0.01, epsilon = 1e-17);
    }

    #[test]
    fn residual_examples() {
        assert_eq!(residual_occupation(0.0, 0.02), 0.0);
        assert_abs_diff_eq!(residual_occupation(PI, 0.02), 0.08, epsilon = 1e-17);
        assert_eq!(residual_occupation(1.3, 0.0), 0.0);
    }

    #[test]
    fn fgr_examples() {
        assert_eq!(fgr_scale(2.0, 0.0), 1.0);
        assert_abs_diff_eq!(fgr_scale(2.0, 10.0), 2.061e-9, epsilon = 1e-12);
        // Ω ↦ c, t_p ↦ c/u̇ gives the exponent scale c²/u̇
        let (c, udot) = (0.1, 0.01);
        assert_abs_diff_eq!(-fgr_scale(c, c / udot).ln(), c * c / udot, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn single_and_double_path_agree_at_unit_lambda(p in 0.0f64..1.0) {
            prop_assert_eq!(single_path_moments(p, 1), double_path_moments(1.0, p).0);
            let var = single_path_moments(p, 2) - single_path_moments(p, 1).powi(2);
            prop_assert!((var - double_path_moments(1.0, p).1).abs() <= 1e-15);
        }

        #[test]
        fn single_crossing_variance_scales_with_lambda_squared(l in -2.0f64..2.0, phi in -7.0f64..7.0, p in 0.0f64..1.0) {
            let v = stirring_variance(&CyclePrediction { lambda_ccw: l, lambda_cw: 0.0, phi, p_lz: p });
            prop_assert!((v - l * l * p).abs() <= 1e-14);
        }

        #[test]
        fn variance_and_residual_are_out_of_phase(l in -2.0f64..2.0, phi in 0.0f64..PI, p in 0.0f64..1.0) {
            let pred = CyclePrediction { lambda_ccw: l, lambda_cw: l, phi, p_lz: p };
            let v = stirring_variance(&pred);
            let r = residual_occupation(phi, p);
            // v + λ²r = 4λ²P and the product is symmetric under φ → π − φ
            prop_assert!((v + l * l * r - 4.0 * l * l * p).abs() <= 1e-12);
            let mirrored = CyclePrediction { phi: PI - phi, ..pred };
            let prod = v * r;
            let prod_m = stirring_variance(&mirrored) * residual_occupation(PI - phi, p);
            prop_assert!((prod - prod_m).abs() <= 1e-12);
        }

        #[test]
        fn outputs_stay_in_range(c in 0.0f64..1.0, udot in 1e-4f64..10.0, p in 0.0f64..1.0, phi in -10.0f64..10.0, l in -2.0f64..2.0) {
            let plz = lz_probability(&LZParams { c, udot });
            prop_assert!((0.0..=1.0).contains(&plz));
            prop_assert!(double_path_moments(l, p).1 >= 0.0);
            let r = residual_occupation(phi, p);
            prop_assert!((0.0..=4.0 * p + 1e-15).contains(&r));
            let v = stirring_variance(&CyclePrediction { lambda_ccw: l, lambda_cw: -l, phi, p_lz: p });
            prop_assert!(v >= 0.0);
        }
    }
}
