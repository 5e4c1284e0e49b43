//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use dyadnet::dyaddata::{DyadDesign, Network};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Standard normal CDF straight from `erfc`.
pub fn phi_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// 15-point Kronrod nodes/weights and embedded 7-point Gauss weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integration to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(f, a, b, tol, 40)
}

/// `P(X <= a, Y <= b)` for standard bivariate normal with correlation `rho`,
/// by integrating `phi(x) Phi((b - rho x) / sqrt(1 - rho^2))` over `x <= a`.
pub fn bvn_quadrature(a: f64, b: f64, rho: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    let lower = -40.0f64;
    if a <= lower {
        return 0.0;
    }
    let f = |x: f64| phi_pdf(x) * phi_cdf((b - rho * x) / s);
    // Split at the kink of the inner CDF and at zero so each piece is smooth.
    let mut cuts = vec![lower, a];
    if rho != 0.0 {
        let k = b / rho;
        if k > lower && k < a {
            cuts.push(k);
        }
    }
    if 0.0 > lower && 0.0 < a {
        cuts.push(0.0);
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.windows(2).map(|w| integrate(&f, w[0], w[1], 1e-15)).sum()
}

/// Gauss-Hermite nodes and weights for `E[g(Z)]`, `Z ~ N(0,1)`, via the
/// Golub-Welsch eigenvalue method on the probabilists' Hermite recurrence.
pub fn gauss_hermite(m: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::<f64>::zeros(m, m);
    for i in 1..m {
        let off = (i as f64).sqrt();
        j[(i, i - 1)] = off;
        j[(i - 1, i)] = off;
    }
    let eig = SymmetricEigen::new(j);
    let mut out: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    out.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    out
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// Relative error with an absolute floor for near-zero references.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-3)
}

/// Random design with `n` nodes and `k` columns; asymmetric unless `symmetric`.
pub fn random_design(rng: &mut ChaCha8Rng, n: usize, k: usize, symmetric: bool) -> DyadDesign {
    let nd = n * (n - 1) / 2;
    let wij: Vec<Vec<f64>> = (0..nd)
        .map(|_| (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let wji = if symmetric {
        wij.clone()
    } else {
        (0..nd)
            .map(|_| (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    };
    let names = (0..k).map(|c| format!("w{c}")).collect();
    DyadDesign::from_pairs(n, names, wij, wji).unwrap()
}

pub fn random_network(rng: &mut ChaCha8Rng, design: &DyadDesign, p: f64) -> Network {
    let y: Vec<bool> = (0..design.n_dyads()).map(|_| rng.random::<f64>() < p).collect();
    Network::from_outcomes(design, &y)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Maximizes `f` over a grid with spacing `step` on `[lo, hi]^dim`, then
/// refines around the best cell with a finer grid of the same spacing.
pub fn grid_argmax(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], step: f64) -> Vec<f64> {
    let dim = lo.len();
    // Coarse pass at 50x the target resolution, then a fine pass nearby.
    let coarse = step * 50.0;
    let best = scan(f, lo, hi, coarse);
    let lo2: Vec<f64> = (0..dim).map(|i| (best[i] - coarse).max(lo[i])).collect();
    let hi2: Vec<f64> = (0..dim).map(|i| (best[i] + coarse).min(hi[i])).collect();
    scan(f, &lo2, &hi2, step)
}

fn scan(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], step: f64) -> Vec<f64> {
    let dim = lo.len();
    let counts: Vec<usize> = (0..dim).map(|i| ((hi[i] - lo[i]) / step).round() as usize + 1).collect();
    let total: usize = counts.iter().product();
    let mut best = (f64::NEG_INFINITY, vec![0.0; dim]);
    let mut point = vec![0.0; dim];
    for idx in 0..total {
        let mut r = idx;
        for i in 0..dim {
            point[i] = (lo[i] + (r % counts[i]) as f64 * step).min(hi[i]);
            r /= counts[i];
        }
        let v = f(&point);
        if v > best.0 {
            best = (v, point.clone());
        }
    }
    best.1
}

/// One grid-oracle comparison: fits a small seeded instance and returns the
/// largest coordinate gap to the grid argmax at resolution `1e-3`, or `None`
/// when the instance has no interior optimum inside the search box.
pub fn grid_oracle_gap(seed: u64) -> Option<(String, f64)> {
    use dyadnet::estimate::{fit, fit_constrained_rho, Family, ModelSpec};
    use dyadnet::likelihood::{ntu_general_loglik, ntu_rho0_loglik, tu_loglik, Link, Params};

    const BOX: f64 = 3.0;
    let mut r = rng(seed);
    let variant = seed % 6;
    let n = r.random_range(4..=6);
    let k = if variant == 4 { 1 } else { r.random_range(1..=2) };
    let symmetric = matches!(variant, 0 | 1 | 2) || r.random::<bool>();
    let d = random_design(&mut r, n, k, symmetric);
    let p = r.random_range(0.3..0.7);
    let net = random_network(&mut r, &d, p);

    let (label, fitted, objective): (String, _, Box<dyn Fn(&[f64]) -> f64>) = match variant {
        0 | 1 => {
            let (family, link) = if variant == 0 {
                (Family::TuProbit, Link::Probit)
            } else {
                (Family::TuLogit, Link::Logit)
            };
            let f = fit(&ModelSpec::new(family), &d, &net).ok()?;
            let obj = move |x: &[f64]| tu_loglik(&d, &net, &Params::new(x.to_vec()), link).unwrap().value;
            (family.to_string(), f, Box::new(obj))
        }
        2 | 3 => {
            let f = fit(&ModelSpec::new(Family::NtuRho0), &d, &net).ok()?;
            let obj = move |x: &[f64]| ntu_rho0_loglik(&d, &net, &Params::new(x.to_vec())).unwrap().value;
            ("ntu_rho0".into(), f, Box::new(obj))
        }
        4 => {
            let f = fit(&ModelSpec::new(Family::NtuGeneral), &d, &net).ok()?;
            let obj = move |x: &[f64]| {
                ntu_general_loglik(&d, &net, &Params::with_rho(x[..1].to_vec(), x[1])).unwrap().value
            };
            ("ntu_general".into(), f, Box::new(obj))
        }
        _ => {
            let f = fit_constrained_rho(&ModelSpec::new(Family::NtuGeneral), &d, &net, 0.5).ok()?;
            let obj = move |x: &[f64]| {
                ntu_general_loglik(&d, &net, &Params::with_rho(x.to_vec(), 0.5)).unwrap().value
            };
            ("ntu_general@rho=0.5".into(), f, Box::new(obj))
        }
    };
    if !fitted.converged || fitted.beta_hat.iter().any(|b| b.abs() > BOX - 0.1) {
        return None;
    }
    let theta = if variant == 4 { fitted.theta() } else { fitted.beta_hat.clone() };
    let mut lo = vec![-BOX; k];
    let mut hi = vec![BOX; k];
    if theta.len() > k {
        lo.push(-1.0);
        hi.push(1.0);
    }
    let best = grid_argmax(&*objective, &lo, &hi, 1e-3);
    let gap = theta.iter().zip(&best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Some((format!("{label} n={n} k={k}"), gap))
}

/// The first `count` seeds from `start` whose instances have interior optima.
pub fn grid_oracle_suite(start: u64, count: usize) -> Vec<(u64, String, f64)> {
    (start..start + 1000)
        .filter_map(|s| grid_oracle_gap(s).map(|(l, g)| (s, l, g)))
        .take(count)
        .collect()
}
