//! Log-likelihood, score and Hessian kernels for the TU and NTU link models.
//!
//! All values are on the mean scale: the log-likelihood is divided by the
//! number of dyads `N`, and so are its derivatives. Sums are accumulated per
//! block of dyads and the blocks are reduced in index order, so results do not
//! depend on how many worker threads evaluated them.
//!
//! Per dyad, with `a = w_ij'beta` and `b = w_ji'beta`, the link probability is
//!
//! * TU: `F(a)` with `F` the normal or logistic CDF (only `w_ij` is used);
//! * NTU with independent errors: `Phi(a) Phi(b)`;
//! * NTU with error correlation `rho`: `Phi2(a, b; rho)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::dyaddata::{DyadDesign, Network};
use crate::specfun::unchecked::{bvn_cdf, bvn_pdf, cdf, log_cdf, mills, pdf};

const BLOCK: usize = 1024;

/// Step for the finite-difference derivative of the score in `rho`.
pub const RHO_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(
        "TU models need symmetric regressors (w_ij = w_ji); column(s) {0:?} are asymmetric"
    )]
    AsymmetricTu(Vec<String>),
    #[error("dimension mismatch: beta has {got} entries, design has {expected} columns")]
    Dimension { expected: usize, got: usize },
    #[error("network has {got} nodes, design has {expected}")]
    NetworkSize { expected: usize, got: usize },
    #[error("correlation must lie in [-1, 1], got {0}")]
    Rho(f64),
    #[error("non-finite parameter value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Probit,
    Logit,
}

/// Coefficients and, for the correlated NTU model, the error correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub beta: Vec<f64>,
    pub rho: Option<f64>,
}

impl Params {
    pub fn new(beta: Vec<f64>) -> Self {
        Self { beta, rho: None }
    }

    pub fn with_rho(beta: Vec<f64>, rho: f64) -> Self {
        Self { beta, rho: Some(rho) }
    }
}

/// Result of one likelihood evaluation.
///
/// For the correlated NTU model with `|rho| < 1` the score and Hessian have
/// `k + 1` entries, `rho` last. At `rho = +-1` only the `beta` block is defined
/// and they have `k` entries.
///
/// When some dyad's fitted probability is exactly 0 or 1 and contradicts its
/// outcome, `value` is `-inf` and `separation` names the first such dyad.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodEval {
    pub value: f64,
    pub score: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub per_dyad_logs: Option<Vec<f64>>,
    pub separation: Option<usize>,
}

/// The likelihood family with its correlation pinned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Kernel {
    Tu(Link),
    Rho0,
    General(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Order {
    Value,
    Gradient,
    Hessian,
}

/// Design plus outcomes aligned with its dyads.
#[derive(Debug, Clone)]
pub(crate) struct Sample<'a> {
    pub design: &'a DyadDesign,
    pub y: Vec<bool>,
}

impl<'a> Sample<'a> {
    pub fn new(design: &'a DyadDesign, net: &Network) -> Result<Self, ModelError> {
        if net.n() != design.n_nodes() {
            return Err(ModelError::NetworkSize { expected: design.n_nodes(), got: net.n() });
        }
        Ok(Self { design, y: net.outcomes(design) })
    }
}

/// Per-dyad log contribution and its derivatives in `(a, b, rho)`.
#[derive(Debug, Clone, Copy, Default)]
struct DyadTerms {
    log: f64,
    da: f64,
    db: f64,
    daa: f64,
    dbb: f64,
    dab: f64,
    drho: f64,
}

fn dot(w: &[f64], beta: &[f64]) -> f64 {
    w.iter().zip(beta).map(|(x, b)| x * b).sum()
}

fn log_logistic(v: f64) -> f64 {
    if v > 0.0 {
        -(-v).exp().ln_1p()
    } else {
        v - v.exp().ln_1p()
    }
}

fn tu_terms(link: Link, v: f64, y: bool) -> DyadTerms {
    let (log, d1, d2) = match link {
        Link::Probit => {
            if y {
                let m = mills(v);
                (log_cdf(v), m, -m * (v + m))
            } else {
                let m = mills(-v);
                (log_cdf(-v), -m, -m * (m - v))
            }
        }
        Link::Logit => {
            let f = 1.0 / (1.0 + (-v).exp());
            let log = if y { log_logistic(v) } else { log_logistic(-v) };
            (log, if y { 1.0 - f } else { -f }, -f * (1.0 - f))
        }
    };
    DyadTerms { log, da: d1, daa: d2, ..DyadTerms::default() }
}

/// `log(1 - Phi(a) Phi(b))` and `1 - Phi(a) Phi(b)` without cancellation.
fn rho0_complement(a: f64, b: f64) -> (f64, f64) {
    let p = cdf(a) * cdf(b);
    if p < 0.5 {
        ((-p).ln_1p(), 1.0 - p)
    } else {
        let q = cdf(-a) + cdf(a) * cdf(-b);
        (q.ln(), q)
    }
}

fn rho0_terms(a: f64, b: f64, y: bool, with_rho: bool) -> DyadTerms {
    if y {
        let (ma, mb) = (mills(a), mills(b));
        DyadTerms {
            log: log_cdf(a) + log_cdf(b),
            da: ma,
            db: mb,
            daa: -ma * (a + ma),
            dbb: -mb * (b + mb),
            dab: 0.0,
            drho: if with_rho { ma * mb } else { 0.0 },
        }
    } else {
        let (log, q) = rho0_complement(a, b);
        let la = -pdf(a) * cdf(b) / q;
        let lb = -cdf(a) * pdf(b) / q;
        let cross = pdf(a) * pdf(b) / q;
        DyadTerms {
            log,
            da: la,
            db: lb,
            daa: -a * la - la * la,
            dbb: -b * lb - lb * lb,
            dab: -cross - la * lb,
            drho: if with_rho { -cross } else { 0.0 },
        }
    }
}

/// Chain rule from the probability's derivatives to the log contribution's.
#[allow(clippy::too_many_arguments)]
fn chain(
    y: bool,
    p: f64,
    q: f64,
    log: f64,
    pa: f64,
    pb: f64,
    paa: f64,
    pbb: f64,
    pab: f64,
    prho: f64,
) -> DyadTerms {
    let (denom, sign) = if y { (p, 1.0) } else { (q, -1.0) };
    let la = sign * pa / denom;
    let lb = sign * pb / denom;
    DyadTerms {
        log,
        da: la,
        db: lb,
        daa: sign * paa / denom - la * la,
        dbb: sign * pbb / denom - lb * lb,
        dab: sign * pab / denom - la * lb,
        drho: sign * prho / denom,
    }
}

fn general_terms(a: f64, b: f64, rho: f64, y: bool) -> DyadTerms {
    if rho == 0.0 {
        return rho0_terms(a, b, y, true);
    }
    if rho >= 1.0 {
        // p = Phi(min(a, b)); on a tie both arguments share the derivative.
        let m = a.min(b);
        let (wa, wb) = if a < b {
            (1.0, 0.0)
        } else if b < a {
            (0.0, 1.0)
        } else {
            (0.5, 0.5)
        };
        let t = tu_terms(Link::Probit, m, y);
        // For the single-index log term, d/dm and d2/dm2 are t.da and t.daa.
        return DyadTerms {
            log: t.log,
            da: wa * t.da,
            db: wb * t.da,
            daa: wa * t.daa,
            dbb: wb * t.daa,
            dab: 0.0,
            drho: f64::NAN,
        };
    }
    if rho <= -1.0 {
        let p = (cdf(a) - cdf(-b)).max(0.0);
        let (wa, wb) = if a + b > 0.0 {
            (1.0, 1.0)
        } else if a + b < 0.0 {
            (0.0, 0.0)
        } else {
            (0.5, 0.5)
        };
        let q = if p < 0.5 { 1.0 - p } else { cdf(-a) + cdf(-b) };
        let log = if y { p.ln() } else { q.ln() };
        let (pa, pb) = (wa * pdf(a), wb * pdf(b));
        let mut t = chain(y, p, q, log, pa, pb, -a * pa, -b * pb, 0.0, 0.0);
        t.drho = f64::NAN;
        return t;
    }
    let p = bvn_cdf(a, b, rho);
    let q = if p < 0.5 {
        1.0 - p
    } else {
        cdf(-a) + cdf(-b) - bvn_cdf(-a, -b, rho)
    };
    let log = if y { p.ln() } else { q.ln() };
    if !log.is_finite() {
        return DyadTerms { log: f64::NEG_INFINITY, ..DyadTerms::default() };
    }
    let s = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let dens = bvn_pdf(a, b, rho);
    let pa = pdf(a) * cdf((b - rho * a) / s);
    let pb = pdf(b) * cdf((a - rho * b) / s);
    chain(
        y,
        p,
        q,
        log,
        pa,
        pb,
        -a * pa - rho * dens,
        -b * pb - rho * dens,
        dens,
        dens,
    )
}

impl Kernel {
    fn terms(self, a: f64, b: f64, y: bool) -> DyadTerms {
        match self {
            Kernel::Tu(link) => tu_terms(link, a, y),
            Kernel::Rho0 => rho0_terms(a, b, y, false),
            Kernel::General(rho) => general_terms(a, b, rho, y),
        }
    }

    fn has_rho_score(self) -> bool {
        matches!(self, Kernel::General(r) if r.abs() < 1.0)
    }
}

/// Whether the mean log-likelihood at `beta` reaches `floor`. Each dyad adds
/// a non-positive log term, so the scan stops once the running sum drops
/// below `floor * N`; far from the data this is after a handful of dyads.
pub(crate) fn reaches(kernel: Kernel, sample: &Sample<'_>, beta: &[f64], floor: f64) -> bool {
    let design = sample.design;
    let target = floor * design.n_dyads() as f64;
    let mut sum = 0.0;
    for d in 0..design.n_dyads() {
        let a = dot(design.w_ij(d), beta);
        let b = dot(design.w_ji(d), beta);
        sum += kernel.terms(a, b, sample.y[d]).log;
        if !(sum >= target) {
            return false;
        }
    }
    true
}

/// Raw sums over a block of dyads.
struct Partial {
    value: f64,
    score: Vec<f64>,
    hess: Vec<f64>,
    separation: Option<usize>,
    logs: Vec<f64>,
}

/// Mean log-likelihood with derivatives up to `order` over `beta` (and the
/// `rho`-score when the kernel has one). The Hessian returned here is the
/// `beta` block only.
pub(crate) struct Accum {
    pub value: f64,
    pub score_beta: Vec<f64>,
    pub score_rho: Option<f64>,
    pub hess_beta: Vec<f64>,
    pub separation: Option<usize>,
    pub logs: Option<Vec<f64>>,
}

pub(crate) fn accumulate(
    kernel: Kernel,
    sample: &Sample<'_>,
    beta: &[f64],
    order: Order,
    keep_logs: bool,
) -> Accum {
    let design = sample.design;
    let k = design.k();
    let n_dyads = design.n_dyads();
    let with_rho = kernel.has_rho_score();
    let n_blocks = n_dyads.div_ceil(BLOCK);

    let partials: Vec<Partial> = (0..n_blocks)
        .into_par_iter()
        .map(|blk| {
            let lo = blk * BLOCK;
            let hi = (lo + BLOCK).min(n_dyads);
            let mut part = Partial {
                value: 0.0,
                score: vec![0.0; if order >= Order::Gradient { k + 1 } else { 0 }],
                hess: vec![0.0; if order >= Order::Hessian { k * k } else { 0 }],
                separation: None,
                logs: Vec::with_capacity(if keep_logs { hi - lo } else { 0 }),
            };
            for d in lo..hi {
                let wij = design.w_ij(d);
                let wji = design.w_ji(d);
                let a = dot(wij, beta);
                let b = dot(wji, beta);
                let t = kernel.terms(a, b, sample.y[d]);
                if keep_logs {
                    part.logs.push(t.log);
                }
                if !t.log.is_finite() {
                    part.separation.get_or_insert(d);
                    continue;
                }
                part.value += t.log;
                if order == Order::Value {
                    continue;
                }
                if let Kernel::Tu(_) = kernel {
                    for r in 0..k {
                        part.score[r] += t.da * wij[r];
                    }
                    if order == Order::Hessian {
                        for r in 0..k {
                            for c in 0..=r {
                                part.hess[r * k + c] += t.daa * wij[r] * wij[c];
                            }
                        }
                    }
                    continue;
                }
                for r in 0..k {
                    part.score[r] += t.da * wij[r] + t.db * wji[r];
                }
                if with_rho {
                    part.score[k] += t.drho;
                }
                if order == Order::Hessian {
                    for r in 0..k {
                        for c in 0..=r {
                            part.hess[r * k + c] += t.daa * wij[r] * wij[c]
                                + t.dbb * wji[r] * wji[c]
                                + t.dab * (wij[r] * wji[c] + wji[r] * wij[c]);
                        }
                    }
                }
            }
            part
        })
        .collect();

    let mut value = 0.0;
    let mut score = vec![0.0; k + 1];
    let mut hess = vec![0.0; k * k];
    let mut separation = None;
    let mut logs = keep_logs.then(|| Vec::with_capacity(n_dyads));
    for part in partials {
        value += part.value;
        for (s, p) in score.iter_mut().zip(&part.score) {
            *s += p;
        }
        for (h, p) in hess.iter_mut().zip(&part.hess) {
            *h += p;
        }
        if separation.is_none() {
            separation = part.separation;
        }
        if let Some(l) = logs.as_mut() {
            l.extend(part.logs);
        }
    }
    let scale = 1.0 / n_dyads as f64;
    for r in 0..k {
        for c in 0..r {
            hess[c * k + r] = hess[r * k + c];
        }
    }
    let score_rho = with_rho.then(|| score[k] * scale);
    score.truncate(k);
    Accum {
        value: if separation.is_some() { f64::NEG_INFINITY } else { value * scale },
        score_beta: score.into_iter().map(|s| s * scale).collect(),
        score_rho,
        hess_beta: hess.into_iter().map(|h| h * scale).collect(),
        separation,
        logs,
    }
}

fn check_beta(design: &DyadDesign, params: &Params) -> Result<(), ModelError> {
    if params.beta.len() != design.k() {
        return Err(ModelError::Dimension { expected: design.k(), got: params.beta.len() });
    }
    if params.beta.iter().any(|b| !b.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(())
}

pub(crate) fn require_symmetric(design: &DyadDesign) -> Result<(), ModelError> {
    if design.is_fully_symmetric() {
        return Ok(());
    }
    let bad = design
        .names()
        .iter()
        .zip(design.symmetric_columns())
        .filter(|(_, &s)| !s)
        .map(|(n, _)| n.clone())
        .collect();
    Err(ModelError::AsymmetricTu(bad))
}

fn full_eval(kernel: Kernel, sample: &Sample<'_>, beta: &[f64]) -> LikelihoodEval {
    let k = beta.len();
    let acc = accumulate(kernel, sample, beta, Order::Hessian, true);
    if acc.separation.is_some() {
        let dim = k + usize::from(kernel.has_rho_score());
        return LikelihoodEval {
            value: f64::NEG_INFINITY,
            score: DVector::from_element(dim, f64::NAN),
            hessian: DMatrix::from_element(dim, dim, f64::NAN),
            per_dyad_logs: acc.logs,
            separation: acc.separation,
        };
    }
    let Kernel::General(rho) = kernel else {
        return LikelihoodEval {
            value: acc.value,
            score: DVector::from_vec(acc.score_beta),
            hessian: DMatrix::from_row_slice(k, k, &acc.hess_beta),
            per_dyad_logs: acc.logs,
            separation: None,
        };
    };
    let Some(score_rho) = acc.score_rho else {
        return LikelihoodEval {
            value: acc.value,
            score: DVector::from_vec(acc.score_beta),
            hessian: DMatrix::from_row_slice(k, k, &acc.hess_beta),
            per_dyad_logs: acc.logs,
            separation: None,
        };
    };
    let column = rho_column(sample, beta, rho);
    let mut hessian = DMatrix::zeros(k + 1, k + 1);
    for r in 0..k {
        for c in 0..k {
            hessian[(r, c)] = acc.hess_beta[r * k + c];
        }
        hessian[(r, k)] = column[r];
        hessian[(k, r)] = column[r];
    }
    hessian[(k, k)] = column[k];
    let mut score = acc.score_beta;
    score.push(score_rho);
    LikelihoodEval {
        value: acc.value,
        score: DVector::from_vec(score),
        hessian,
        per_dyad_logs: acc.logs,
        separation: None,
    }
}

/// Derivative of the full `(beta, rho)` score with respect to `rho`, by central
/// differences (second-order one-sided within one step of the boundary).
pub(crate) fn rho_column(sample: &Sample<'_>, beta: &[f64], rho: f64) -> Vec<f64> {
    let score_at = |r: f64| -> Vec<f64> {
        let acc = accumulate(Kernel::General(r), sample, beta, Order::Gradient, false);
        let mut s = acc.score_beta;
        s.push(acc.score_rho.unwrap_or(f64::NAN));
        s
    };
    let h = RHO_FD_STEP;
    if rho.abs() + h < 1.0 {
        let up = score_at(rho + h);
        let down = score_at(rho - h);
        up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect()
    } else {
        let h = -h * rho.signum();
        let s0 = score_at(rho);
        let s1 = score_at(rho + h);
        let s2 = score_at(rho + 2.0 * h);
        (0..s0.len())
            .map(|i| (-3.0 * s0[i] + 4.0 * s1[i] - s2[i]) / (2.0 * h))
            .collect()
    }
}

/// TU log-likelihood with probit or logit link. The design must be symmetric.
pub fn tu_loglik(
    design: &DyadDesign,
    net: &Network,
    params: &Params,
    link: Link,
) -> Result<LikelihoodEval, ModelError> {
    require_symmetric(design)?;
    check_beta(design, params)?;
    let sample = Sample::new(design, net)?;
    Ok(full_eval(Kernel::Tu(link), &sample, &params.beta))
}

/// NTU log-likelihood with independent errors (`rho = 0`).
pub fn ntu_rho0_loglik(
    design: &DyadDesign,
    net: &Network,
    params: &Params,
) -> Result<LikelihoodEval, ModelError> {
    check_beta(design, params)?;
    let sample = Sample::new(design, net)?;
    Ok(full_eval(Kernel::Rho0, &sample, &params.beta))
}

/// NTU log-likelihood with error correlation `params.rho` (0 when absent).
///
/// For `|rho| < 1` the `rho` row and column of the Hessian come from finite
/// differences of the analytic score; the `beta` block is analytic.
pub fn ntu_general_loglik(
    design: &DyadDesign,
    net: &Network,
    params: &Params,
) -> Result<LikelihoodEval, ModelError> {
    check_beta(design, params)?;
    let rho = params.rho.unwrap_or(0.0);
    if !(-1.0..=1.0).contains(&rho) {
        return Err(ModelError::Rho(rho));
    }
    let sample = Sample::new(design, net)?;
    Ok(full_eval(Kernel::General(rho), &sample, &params.beta))
}

fn info_sum(
    design: &DyadDesign,
    beta: &[f64],
    weights: impl Fn(f64, f64) -> (f64, f64, f64) + Sync,
) -> DMatrix<f64> {
    let k = design.k();
    let mut out = DMatrix::zeros(k, k);
    for d in 0..design.n_dyads() {
        let (wij, wji) = (design.w_ij(d), design.w_ji(d));
        let (a, b) = (dot(wij, beta), dot(wji, beta));
        let (c_ij, c_ji, c_x) = weights(a, b);
        for r in 0..k {
            for c in 0..k {
                out[(r, c)] += c_ij * wij[r] * wij[c]
                    + c_ji * wji[r] * wji[c]
                    + c_x * (wij[r] * wji[c] + wji[r] * wij[c]);
            }
        }
    }
    out / design.n_dyads() as f64
}

/// Sample information matrix of the independent-error NTU model under
/// symmetric regressors: mean of `4 phi(v)^2 / (1 - Phi(v)^2) w w'`.
pub fn j1_matrix(design: &DyadDesign, params: &Params) -> Result<DMatrix<f64>, ModelError> {
    require_symmetric(design)?;
    check_beta(design, params)?;
    Ok(info_sum(design, &params.beta, |v, _| {
        // 1 - Phi^2 = Phi(-v) (1 + Phi(v))
        let c = 4.0 * pdf(v) * pdf(v) / (cdf(-v) * (1.0 + cdf(v)));
        (c, 0.0, 0.0)
    }))
}

/// Sample information matrix of the independent-error NTU model for general
/// (possibly asymmetric) regressors.
pub fn j2_matrix(design: &DyadDesign, params: &Params) -> Result<DMatrix<f64>, ModelError> {
    check_beta(design, params)?;
    Ok(info_sum(design, &params.beta, |a, b| {
        let (_, q) = rho0_complement(a, b);
        let c_ij = pdf(a) * mills(a) * cdf(b) / q;
        let c_ji = pdf(b) * mills(b) * cdf(a) / q;
        let c_x = pdf(a) * pdf(b) / q;
        (c_ij, c_ji, c_x)
    }))
}
