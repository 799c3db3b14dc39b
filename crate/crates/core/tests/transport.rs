use approx::assert_relative_eq;
use proptest::prelude::*;

use stirfcs::analytic::{self, LZParams};
use stirfcs::counting::{charge_matrix_full, counting_stats};
use stirfcs::model::{LinearRamp, StirCycle};
use stirfcs::propagation::{propagate_full, StepControl};
use stirfcs::{Bond, CMat, CVec, DrivingProtocol, Sites};

fn ctrl() -> StepControl {
    StepControl::default()
}

fn ramp(sites: Sites, c: f64, p_lz: f64, lambda: f64) -> DrivingProtocol {
    let udot = analytic::udot_for_probability(c, p_lz).unwrap();
    let r = LinearRamp {
        lambda,
        ..LinearRamp::new(c, udot)
    };
    DrivingProtocol::linear_ramp(sites, r, 0.0).unwrap()
}

fn stir(lambda_ccw: f64, lambda_cw: f64, p_lz: f64, dwell: f64) -> DrivingProtocol {
    let udot = analytic::udot_for_probability(0.03, p_lz).unwrap();
    let cycle = StirCycle {
        dwell,
        ..StirCycle::new(0.03, lambda_ccw, lambda_cw, udot)
    };
    DrivingProtocol::stir_cycle(cycle, 0.0).unwrap()
}

#[test]
fn two_site_passage_follows_the_lz_law() {
    for x in [0.5, 2.0] {
        let c = 0.1;
        let udot = 2.0 * std::f64::consts::PI * c * c / x;
        let proto =
            DrivingProtocol::linear_ramp(Sites::Two, LinearRamp::new(c, udot), 0.0).unwrap();
        let u = propagate_full(&proto, &ctrl()).unwrap().u;
        let stayed = u.mul_vec(&CVec::basis(2, 0))[0].norm_sqr();
        assert_relative_eq!(
            stayed,
            analytic::lz_probability(&LZParams { c, udot }),
            max_relative = 5e-3
        );
    }
}

#[test]
fn equal_split_variance_is_tied_to_the_residual() {
    // with λ⟲ = λ⟳ the bond charge is λ times the site-0 depletion operator
    let lambda = 0.5;
    for dwell in [0.0, 1.0] {
        let proto = stir(lambda, lambda, 1e-2, dwell);
        let qm = charge_matrix_full(&proto, Bond::ZeroOne, &ctrl()).unwrap();
        let psi0 = CVec::basis(3, 0);
        let stats = counting_stats(&qm, &psi0, 2).unwrap();
        let r = 1.0 - qm.propagator.u.mul_vec(&psi0)[0].norm_sqr();
        assert!(r > 1e-3, "residual {r} too small to be informative");
        assert_relative_eq!(
            stats.variance,
            lambda * lambda * r * (1.0 - r),
            max_relative = 1e-4
        );
        assert_relative_eq!(stats.mean, lambda * r, max_relative = 1e-4);
    }
}

#[test]
fn both_bonds_together_count_the_site0_depletion() {
    let proto = stir(0.8, 0.3, 1e-2, 1.0);
    let a = charge_matrix_full(&proto, Bond::ZeroOne, &ctrl()).unwrap();
    let b = charge_matrix_full(&proto, Bond::ZeroTwo, &ctrl()).unwrap();
    let u = a.propagator.u;
    let n0 = CMat::diag(&[1.0, 0.0, 0.0]);
    let depletion = n0 - u.adjoint() * n0 * u;
    assert!((a.q + b.q - depletion).frobenius_norm() < 1e-8);
}

#[test]
fn stirring_pumps_the_difference_of_splittings() {
    let proto = stir(1.7, -0.7, 1e-4, 0.0);
    let qm = charge_matrix_full(&proto, Bond::ZeroOne, &ctrl()).unwrap();
    let stats = counting_stats(&qm, &CVec::basis(3, 0), 2).unwrap();
    assert_relative_eq!(
        stats.mean,
        analytic::stirring_charge(1.7, -0.7),
        max_relative = 0.05
    );
}

#[test]
fn deep_adiabatic_half_split_is_nearly_noiseless() {
    let proto = ramp(Sites::Three, 0.03, 1e-4, 0.5);
    let qm = charge_matrix_full(&proto, Bond::ZeroOne, &ctrl()).unwrap();
    let stats = counting_stats(&qm, &CVec::basis(3, 0), 2).unwrap();
    let (mean, variance) = analytic::double_path_moments(0.5, 1.0 - 1e-4);
    assert_relative_eq!(stats.mean, mean, max_relative = 1e-2);
    assert!(stats.variance <= 1e-4);
    assert_relative_eq!(stats.variance, variance, max_relative = 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn single_passage_spectrum_is_plus_minus_root_p(p_lz in 0.05f64..0.6) {
        let proto = ramp(Sites::Two, 0.1, p_lz, 1.0);
        let qm = charge_matrix_full(&proto, Bond::ZeroOne, &ctrl()).unwrap();
        let stats = counting_stats(&qm, &CVec::basis(2, 0), 2).unwrap();
        let stayed = qm.propagator.u.mul_vec(&CVec::basis(2, 0))[0].norm_sqr();
        let p = 1.0 - stayed;
        prop_assert!((stats.mean - p).abs() < 1e-8);
        let mut qs: Vec<f64> = stats.spectrum.iter().map(|l| l.q).collect();
        qs.sort_by(f64::total_cmp);
        prop_assert!((qs[0] + p.sqrt()).abs() < 1e-6);
        prop_assert!((qs[1] - p.sqrt()).abs() < 1e-6);
        prop_assert!(stats.spectrum.iter().all(|l| (0.0..=1.0 + 1e-12).contains(&l.p)));
    }

    #[test]
    fn propagator_stays_unitary(c in 0.02f64..0.2, x in 0.3f64..4.0) {
        let udot = 2.0 * std::f64::consts::PI * c * c / x;
        let proto = DrivingProtocol::linear_ramp(Sites::Three, LinearRamp::new(c, udot), 0.0).unwrap();
        let rec = propagate_full(&proto, &ctrl()).unwrap();
        prop_assert!(rec.u.unitarity_defect() < 1e-9);
    }
}
