mod common;

use common::{bvn_quadrature, phi_cdf};
use dyadnet::specfun::{
    binorm_cdf, binorm_pdf, chisq1_cdf, log_norm_cdf, mixture_quantile, norm_cdf, norm_pdf,
    norm_quantile, Correlation,
};
use proptest::prelude::*;

fn bvn(a: f64, b: f64, rho: f64) -> f64 {
    binorm_cdf(a, b, Correlation::new(rho).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn cdf_reflection(v in -30.0f64..30.0) {
        let s = norm_cdf(v).unwrap() + norm_cdf(-v).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn log_cdf_matches_cdf(v in -37.0f64..10.0) {
        let c = norm_cdf(v).unwrap();
        prop_assume!(c > 1e-300);
        let l = log_norm_cdf(v).unwrap();
        prop_assert!((l.exp() - c).abs() / c < 1e-10, "v={} exp(l)={} c={}", v, l.exp(), c);
    }

    #[test]
    fn log_cdf_finite_far_tail(v in -1e6f64..-37.0) {
        let l = log_norm_cdf(v).unwrap();
        prop_assert!(l.is_finite() && l < 0.0);
        // Leading asymptotic term -v^2/2 - ln(-v) - ln(sqrt(2 pi)).
        let lead = -0.5 * v * v - (-v).ln() - 0.918_938_533_204_672_8;
        prop_assert!((l - lead).abs() <= 1.5 / (v * v) + 1e-15 * lead.abs());
    }

    #[test]
    fn gordon_bound(v in 0.01f64..30.0) {
        // v/(1+v^2) phi(v) <= 1 - Phi(v) <= phi(v)/v
        let tail = norm_cdf(-v).unwrap();
        let d = norm_pdf(v).unwrap();
        prop_assert!(tail <= d / v * (1.0 + 1e-12));
        prop_assert!(tail >= v / (1.0 + v * v) * d * (1.0 - 1e-12));
    }

    #[test]
    fn bvn_exchangeable(a in -6.0f64..6.0, b in -6.0f64..6.0, rho in -1.0f64..=1.0) {
        prop_assert_eq!(bvn(a, b, rho), bvn(b, a, rho));
    }

    #[test]
    fn bvn_independent_case(a in -8.0f64..8.0, b in -8.0f64..8.0) {
        prop_assert!((bvn(a, b, 0.0) - phi_cdf(a) * phi_cdf(b)).abs() < 1e-12);
    }

    #[test]
    fn bvn_origin_arcsine(rho in -0.999f64..0.999) {
        let want = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
        prop_assert!((bvn(0.0, 0.0, rho) - want).abs() < 1e-10);
    }

    #[test]
    fn bvn_monotone(a in -5.0f64..5.0, b in -5.0f64..5.0, rho in -0.99f64..0.99, da in 0.0f64..1.0, dr in 0.0f64..0.009) {
        let base = bvn(a, b, rho);
        prop_assert!(bvn(a + da, b, rho) >= base - 1e-15);
        prop_assert!(bvn(a, b + da, rho) >= base - 1e-15);
        prop_assert!(bvn(a, b, rho + dr) >= base - 1e-15);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn bvn_frechet_bounds(a in -6.0f64..6.0, b in -6.0f64..6.0, rho in -1.0f64..=1.0) {
        let (fa, fb) = (phi_cdf(a), phi_cdf(b));
        let p = bvn(a, b, rho);
        prop_assert!(p <= fa.min(fb) + 1e-15);
        prop_assert!(p >= (fa + fb - 1.0).max(0.0) - 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf(p in 1e-12f64..(1.0 - 1e-12)) {
        let z = norm_quantile(p).unwrap();
        prop_assert!((norm_cdf(z).unwrap() - p).abs() <= 1e-13 * p.max(1e-3));
    }

    #[test]
    fn mixture_quantile_calibrated(alpha in 0.001f64..0.5) {
        let q = mixture_quantile(alpha).unwrap();
        let upper = 0.5 * (1.0 - chisq1_cdf(q).unwrap());
        prop_assert!((upper - alpha).abs() < 1e-12);
    }
}

#[test]
fn bvn_matches_quadrature_on_dense_grid() {
    let mut worst = 0.0f64;
    for ia in 0..21 {
        for ib in 0..21 {
            for &rho in &[-0.99, -0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9, 0.99] {
                let a = -5.0 + 0.5 * ia as f64;
                let b = -5.0 + 0.5 * ib as f64;
                worst = worst.max((bvn(a, b, rho) - bvn_quadrature(a, b, rho)).abs());
            }
        }
    }
    assert!(worst < 1e-10, "max abs error {worst:e}");
}

#[test]
fn bvn_density_integrates_to_cdf_derivative() {
    // d Phi2 / d rho = phi2 (Plackett's identity).
    for &(a, b, rho) in &[(0.3, -0.4, 0.2), (1.5, 1.0, -0.7), (-1.0, 2.0, 0.9)] {
        let h = 1e-5;
        let fd = (bvn(a, b, rho + h) - bvn(a, b, rho - h)) / (2.0 * h);
        let d = binorm_pdf(a, b, Correlation::new(rho).unwrap()).unwrap();
        assert!((fd - d).abs() < 1e-8, "{fd} vs {d}");
    }
}

#[test]
fn degenerate_correlations() {
    for &(a, b) in &[(0.3, -0.2), (-1.0, 1.0), (2.0, 2.0)] {
        assert!((bvn(a, b, 1.0) - phi_cdf(f64::min(a, b))).abs() < 1e-16);
        let expect = (phi_cdf(a) - phi_cdf(-b)).max(0.0);
        assert!((bvn(a, b, -1.0) - expect).abs() < 1e-16);
    }
    assert!(binorm_pdf(0.0, 0.0, Correlation::new(1.0).unwrap()).is_err());
    assert!(Correlation::new(1.0 + 1e-12).is_err());
    assert!(Correlation::new(f64::NAN).is_err());
}

#[test]
fn domain_errors() {
    assert!(norm_cdf(f64::NAN).is_err());
    assert!(log_norm_cdf(f64::INFINITY).is_err());
    assert!(norm_quantile(0.0).is_err());
    assert!(norm_quantile(1.0).is_err());
    assert!(chisq1_cdf(-1.0).is_err());
    assert!(mixture_quantile(0.0).is_err());
    assert!(mixture_quantile(0.6).is_err());
    assert_eq!(mixture_quantile(0.5).unwrap(), 0.0);
}

#[test]
fn mixture_threshold_below_naive() {
    let q = mixture_quantile(0.05).unwrap();
    assert!((q - 2.705543).abs() < 1e-5);
    assert!(q < 3.841459);
}
