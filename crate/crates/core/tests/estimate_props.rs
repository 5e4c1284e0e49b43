mod common;

use common::{grid_oracle_suite, random_design, random_network, rng};
use dyadnet::dyaddata::{DyadDesign, Network};
use dyadnet::estimate::{
    fit, fit_constrained_rho, warm_start, Family, FitFailure, InfoKind, ModelSpec, DEFAULT_BOUND,
};
use dyadnet::montecarlo::{replicate_fits, DgpConfig};
use rand::Rng;

#[test]
fn fits_agree_with_grid_search() {
    let suite = grid_oracle_suite(0, 20);
    assert_eq!(suite.len(), 20);
    for (seed, label, gap) in &suite {
        assert!(*gap <= 2e-3, "seed {seed} ({label}): gap {gap:e}");
    }
}

fn sample(seed: u64, symmetric: bool) -> (DyadDesign, Network) {
    let mut r = rng(seed);
    let d = random_design(&mut r, 30, 2, symmetric);
    let net = random_network(&mut r, &d, 0.3);
    (d, net)
}

#[test]
fn fits_are_deterministic_and_ascend() {
    for (seed, family) in [(1, Family::TuProbit), (2, Family::TuLogit), (3, Family::NtuRho0), (4, Family::NtuGeneral)] {
        let (d, net) = sample(seed, family.is_tu() || seed % 2 == 0);
        let spec = ModelSpec::new(family);
        let a = fit(&spec, &d, &net).unwrap();
        let b = fit(&spec, &d, &net).unwrap();
        assert_eq!(a, b);
        assert!(a.converged, "{family}: {:?}", a.failure);
        assert!(a.score_norm < 1e-8);
        for w in a.trace.windows(2) {
            assert!(w[1] >= w[0], "{family}: {} then {}", w[0], w[1]);
        }
        let se: Vec<f64> = a.vcov.as_ref().unwrap().diagonal().iter().map(|v| v.sqrt()).collect();
        assert_eq!(se, a.std_errors);
    }
}

#[test]
fn information_choice_follows_design() {
    let (sym, net) = sample(10, true);
    let (asym, net2) = sample(11, false);
    let spec = ModelSpec::new(Family::NtuRho0);
    assert_eq!(fit(&spec, &sym, &net).unwrap().info_matrix_kind, InfoKind::J1);
    assert_eq!(fit(&spec, &asym, &net2).unwrap().info_matrix_kind, InfoKind::J2);
    let general = fit(&ModelSpec::new(Family::NtuGeneral), &asym, &net2).unwrap();
    assert_eq!(general.info_matrix_kind, InfoKind::Observed);
}

#[test]
fn constrained_fits_nest_the_special_cases() {
    let general = ModelSpec::new(Family::NtuGeneral);
    for seed in 0..5 {
        let (d, net) = sample(100 + seed, true);
        let at_one = fit_constrained_rho(&general, &d, &net, 1.0).unwrap();
        let tu = fit(&ModelSpec::new(Family::TuProbit), &d, &net).unwrap();
        for (a, b) in at_one.beta_hat.iter().zip(&tu.beta_hat) {
            assert!((a - b).abs() < 1e-8, "rho=1: {a} vs {b}");
        }
        let (d, net) = sample(200 + seed, false);
        let at_zero = fit_constrained_rho(&general, &d, &net, 0.0).unwrap();
        let rho0 = fit(&ModelSpec::new(Family::NtuRho0), &d, &net).unwrap();
        for (a, b) in at_zero.beta_hat.iter().zip(&rho0.beta_hat) {
            assert!((a - b).abs() < 1e-8, "rho=0: {a} vs {b}");
        }
        assert_eq!(at_zero.rho_hat, Some(0.0));
    }
}

#[test]
fn asymmetric_design_is_refused_by_tu() {
    let (d, net) = sample(5, false);
    assert!(fit(&ModelSpec::new(Family::TuProbit), &d, &net).is_err());
}

#[test]
fn warm_start_uses_symmetrized_tu_probit() {
    let (d, net) = sample(20, true);
    let tu = fit(&ModelSpec::new(Family::TuProbit), &d, &net).unwrap();
    let ws = warm_start(&ModelSpec::new(Family::NtuRho0), &d, &net);
    assert_eq!(ws.beta, tu.beta_hat);
    assert_eq!(ws.rho, None);

    let (d, net) = sample(21, false);
    let sym = d.symmetrized();
    for dy in 0..d.n_dyads() {
        for c in 0..d.k() {
            assert_eq!(sym.w_ij(dy)[c], 0.5 * (d.w_ij(dy)[c] + d.w_ji(dy)[c]));
        }
    }
    let tu = fit(&ModelSpec::new(Family::TuProbit), &sym, &net).unwrap();
    let ws = warm_start(&ModelSpec::new(Family::NtuGeneral), &d, &net);
    assert_eq!(ws.beta, tu.beta_hat);
    assert_eq!(ws.rho, Some(0.0));
}

#[test]
fn complete_network_reports_separation() {
    let n = 6;
    let nd = n * (n - 1) / 2;
    let d = DyadDesign::from_pairs(n, vec!["const".into()], vec![vec![1.0]; nd], vec![vec![1.0]; nd]).unwrap();
    let net = Network::from_outcomes(&d, &vec![true; nd]);
    let f = fit(&ModelSpec::new(Family::TuProbit), &d, &net).unwrap();
    assert!(!f.converged);
    assert_eq!(f.failure, Some(FitFailure::Separation));
    assert_eq!(f.failure.unwrap().to_string(), "separation: MLE may not exist");
    assert_eq!(f.beta_hat[0], DEFAULT_BOUND);
}

fn mean_abs_error(cfg: &DgpConfig, reps: usize) -> f64 {
    let fits = replicate_fits(cfg, 0, reps, &ModelSpec::new(Family::NtuRho0)).unwrap();
    let ok: Vec<f64> = fits.iter().flatten().map(|f| (f.beta_hat[0] - 1.0).abs()).collect();
    assert!(ok.len() * 10 >= reps * 9, "too many failed fits: {}/{reps}", ok.len());
    ok.iter().sum::<f64>() / ok.len() as f64
}

#[test]
fn estimation_error_shrinks_with_network_size() {
    for symmetric in [true, false] {
        let errs: Vec<f64> = [20, 50, 200]
            .iter()
            .map(|&n| {
                let cfg = if symmetric {
                    DgpConfig::symmetric(n, 1.0, 0.0, 31)
                } else {
                    DgpConfig::asymmetric(n, 1.0, 0.0, 0.1, 31)
                };
                mean_abs_error(&cfg, 200)
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "symmetric={symmetric}: {errs:?}");
    }
}

#[test]
fn wald_intervals_cover_at_nominal_rate() {
    for (label, cfg) in [
        ("symmetric", DgpConfig::symmetric(200, 1.0, 0.0, 41)),
        ("asymmetric", DgpConfig::asymmetric(200, 1.0, 0.0, 0.1, 41)),
    ] {
        let fits = replicate_fits(&cfg, 0, 500, &ModelSpec::new(Family::NtuRho0)).unwrap();
        let ok: Vec<_> = fits.iter().flatten().collect();
        assert_eq!(ok.len(), 500);
        let covered = ok.iter().filter(|f| (f.beta_hat[0] - 1.0).abs() <= 1.959964 * f.std_errors[0]).count();
        let rate = covered as f64 / ok.len() as f64;
        assert!((0.93..=0.97).contains(&rate), "{label}: coverage {rate}");
    }
}

#[test]
fn random_small_fits_never_panic() {
    let mut r = rng(999);
    for _ in 0..200 {
        let n = r.random_range(2..8);
        let k = r.random_range(1..3);
        let symmetric = r.random();
        let d = random_design(&mut r, n, k, symmetric);
        let p = r.random::<f64>();
        let net = random_network(&mut r, &d, p);
        for family in [Family::NtuRho0, Family::NtuGeneral] {
            let f = fit(&ModelSpec::new(family), &d, &net).unwrap();
            assert!(f.beta_hat.iter().all(|b| b.abs() <= DEFAULT_BOUND));
            if let Some(rho) = f.rho_hat {
                assert!((-1.0..=1.0).contains(&rho));
            }
        }
    }
}
