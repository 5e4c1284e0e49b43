//! Maximum-likelihood fitting for the TU and NTU families.
//!
//! TU and independent-error NTU fits (and correlated fits with `rho` held
//! fixed) use projected Newton with the analytic Hessian. Fits with free `rho`
//! use projected BFGS on `(beta, atanh(rho))`. Coefficients live in a box
//! `Theta`, by default `[-50, 50]` per coordinate; an optimum on the edge of
//! the box, or a likelihood that keeps rising toward it, is reported as
//! separation rather than as an estimate.
//!
//! Variances are `I^{-1} / N`, with `I` the closed-form information matrix for
//! independent-error NTU fits (`J1` for symmetric designs, `J2` otherwise) and
//! the observed information elsewhere. For the correlated model no closed form
//! is available and the observed information is a standard but unproven choice.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::dyaddata::{check_identification, DyadDesign, IdentificationReport, Network, RegressorTransform};
use crate::likelihood::{
    accumulate, j1_matrix, j2_matrix, require_symmetric, rho_column, Kernel, Link, ModelError, RHO_FD_STEP,
    Order, Params, Sample, reaches,
};
use crate::optim::{self, Bounds, Objective, Outcome, Point, Stop};

pub const DEFAULT_BOUND: f64 = 50.0;
/// Largest `|rho|` reached by the free-`rho` optimizer.
pub const RHO_CAP: f64 = 1.0 - 1e-8;
pub const SCORE_TOL: f64 = optim::SCORE_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    TuProbit,
    TuLogit,
    NtuRho0,
    NtuGeneral,
}

impl Family {
    pub fn is_tu(self) -> bool {
        matches!(self, Family::TuProbit | Family::TuLogit)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::TuProbit => "tu_probit",
            Family::TuLogit => "tu_logit",
            Family::NtuRho0 => "ntu_rho0",
            Family::NtuGeneral => "ntu_general",
        })
    }
}

impl FromStr for Family {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "tu_probit" | "tu" => Ok(Family::TuProbit),
            "tu_logit" => Ok(Family::TuLogit),
            "ntu_rho0" => Ok(Family::NtuRho0),
            "ntu_general" | "ntu" => Ok(Family::NtuGeneral),
            _ => Err(FitError::UnknownFamily(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub transforms: Vec<RegressorTransform>,
    /// Per-coefficient box; `None` means `[-DEFAULT_BOUND, DEFAULT_BOUND]`.
    pub theta_bounds: Option<Vec<(f64, f64)>>,
    /// Holds `rho` fixed in an `NtuGeneral` fit.
    pub rho_fixed: Option<f64>,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        Self { family, transforms: Vec::new(), theta_bounds: None, rho_fixed: None }
    }

    pub fn with_transforms(mut self, transforms: Vec<RegressorTransform>) -> Self {
        self.transforms = transforms;
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.theta_bounds = Some(bounds);
        self
    }

    pub fn with_rho_fixed(mut self, rho: f64) -> Self {
        self.rho_fixed = Some(rho);
        self
    }

    fn bounds(&self, k: usize) -> Result<(Vec<f64>, Vec<f64>), FitError> {
        match &self.theta_bounds {
            None => Ok((vec![-DEFAULT_BOUND; k], vec![DEFAULT_BOUND; k])),
            Some(b) => {
                if b.len() != k {
                    return Err(FitError::Bounds(format!(
                        "{} bounds given for {k} coefficients",
                        b.len()
                    )));
                }
                if let Some((lo, hi)) = b.iter().find(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
                    return Err(FitError::Bounds(format!("need finite lo < hi, got {lo}:{hi}")));
                }
                Ok(b.iter().copied().unzip())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoKind {
    J1,
    J2,
    Observed,
    None,
}

impl fmt::Display for InfoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InfoKind::J1 => "J1",
            InfoKind::J2 => "J2",
            InfoKind::Observed => "observed",
            InfoKind::None => "none",
        })
    }
}

/// Why a fit did not converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitFailure {
    /// The likelihood rises toward the edge of `Theta` (or is `-inf` at the start).
    Separation,
    MaxIterations,
    LineSearch,
}

impl fmt::Display for FitFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitFailure::Separation => "separation: MLE may not exist",
            FitFailure::MaxIterations => "iteration limit reached",
            FitFailure::LineSearch => "line search failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub family: Family,
    pub names: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub rho_hat: Option<f64>,
    /// Mean log-likelihood at the optimum.
    pub loglik: f64,
    /// Largest free score entry, with `rho` on the `atanh` scale it is optimized on.
    pub score_norm: f64,
    /// Estimated variance of `(beta_hat, rho_hat)`, already divided by `N`.
    /// Covers `rho` only when it was estimated in the interior.
    pub vcov: Option<DMatrix<f64>>,
    pub std_errors: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub info_matrix_kind: InfoKind,
    pub failure: Option<FitFailure>,
    pub n_dyads: usize,
    pub identification: IdentificationReport,
    /// Accepted objective values, one per iterate.
    pub trace: Vec<f64>,
    pub notes: Vec<String>,
}

impl FitResult {
    /// Coefficients followed by `rho` when it was estimated.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.beta_hat.clone();
        if let Some(r) = self.rho_hat {
            t.push(r);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid parameter bounds: {0}")]
    Bounds(String),
    #[error("a fixed rho requires the ntu_general family")]
    RhoFixedFamily,
    #[error("fixed rho must lie in [-1, 1], got {0}")]
    RhoFixed(f64),
    #[error("unknown model family '{0}' (expected tu_probit, tu_logit, ntu_rho0 or ntu_general)")]
    UnknownFamily(String),
    #[error("coefficient index {index} out of range for {k} coefficients")]
    Coordinate { index: usize, k: usize },
    #[error("value {value} for coefficient {index} lies outside its bounds")]
    PinnedOutside { index: usize, value: f64 },
}

/// Likelihood over the free coefficients, with the others pinned.
struct BetaObjective<'s, 'd> {
    kernel: Kernel,
    sample: &'s Sample<'d>,
    free: &'s [usize],
    template: Vec<f64>,
}

impl BetaObjective<'_, '_> {
    fn beta(&self, x: &[f64]) -> Vec<f64> {
        let mut b = self.template.clone();
        for (&i, &v) in self.free.iter().zip(x) {
            b[i] = v;
        }
        b
    }
}

impl Objective for BetaObjective<'_, '_> {
    fn eval(&self, x: &[f64], hessian: bool) -> Point {
        let beta = self.beta(x);
        let order = if hessian { Order::Hessian } else { Order::Gradient };
        let acc = accumulate(self.kernel, self.sample, &beta, order, false);
        let k = beta.len();
        let grad: Vec<f64> = self.free.iter().map(|&i| acc.score_beta[i]).collect();
        let hess = hessian.then(|| {
            DMatrix::from_fn(self.free.len(), self.free.len(), |r, c| {
                acc.hess_beta[self.free[r] * k + self.free[c]]
            })
        });
        Point { value: acc.value, grad, hess }
    }
}

/// Correlated NTU likelihood over `(free beta, t)` with `rho = tanh(t)`.
struct RhoObjective<'s, 'd> {
    inner: BetaObjective<'s, 'd>,
}

impl Objective for RhoObjective<'_, '_> {
    fn eval(&self, x: &[f64], hessian: bool) -> Point {
        let m = self.inner.free.len();
        let beta = self.inner.beta(&x[..m]);
        let t = x[m];
        let rho = t.tanh();
        let jac = 1.0 - rho * rho;
        let order = if hessian { Order::Hessian } else { Order::Gradient };
        let acc = accumulate(Kernel::General(rho), self.inner.sample, &beta, order, false);
        let k = beta.len();
        let g_rho = acc.score_rho.unwrap_or(f64::NAN);
        let mut grad: Vec<f64> = self.inner.free.iter().map(|&i| acc.score_beta[i]).collect();
        grad.push(g_rho * jac);
        let hess = (hessian && acc.value.is_finite()).then(|| {
            // Differencing in t keeps the step proportional to 1 - rho^2, which
            // resolves the score's growth as |rho| approaches 1.
            let score_t = |t: f64| {
                let r = t.tanh();
                let a = accumulate(Kernel::General(r), self.inner.sample, &beta, Order::Gradient, false);
                let mut s = a.score_beta;
                s.push(a.score_rho.unwrap_or(f64::NAN) * (1.0 - r * r));
                s
            };
            let h = RHO_FD_STEP;
            let (up, down) = (score_t(t + h), score_t(t - h));
            let col: Vec<f64> = up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect();
            let free = self.inner.free;
            DMatrix::from_fn(m + 1, m + 1, |r, c| match (r < m, c < m) {
                (true, true) => acc.hess_beta[free[r] * k + free[c]],
                (true, false) => col[free[r]],
                (false, true) => col[free[c]],
                (false, false) => col[k],
            })
        });
        Point { value: acc.value, grad, hess }
    }
}

fn kernel_for(family: Family, rho: Option<f64>) -> Kernel {
    match family {
        Family::TuProbit => Kernel::Tu(Link::Probit),
        Family::TuLogit => Kernel::Tu(Link::Logit),
        Family::NtuRho0 => Kernel::Rho0,
        Family::NtuGeneral => Kernel::General(rho.unwrap_or(0.0)),
    }
}

/// Everything one optimization needs, after validation.
struct Problem<'s, 'd> {
    spec: &'s ModelSpec,
    sample: &'s Sample<'d>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    pinned: Vec<Option<f64>>,
}

impl Problem<'_, '_> {
    fn free(&self) -> Vec<usize> {
        (0..self.pinned.len()).filter(|&i| self.pinned[i].is_none()).collect()
    }

    fn template(&self, start: &[f64]) -> Vec<f64> {
        start
            .iter()
            .zip(&self.pinned)
            .map(|(s, p)| p.unwrap_or(*s))
            .collect()
    }
}

struct RawFit {
    beta: Vec<f64>,
    rho: Option<f64>,
    value: f64,
    outcome: Outcome,
    separation: bool,
}

fn run_beta(prob: &Problem<'_, '_>, kernel: Kernel, start: &[f64]) -> RawFit {
    let free = prob.free();
    let obj = BetaObjective { kernel, sample: prob.sample, free: &free, template: prob.template(start) };
    let lo: Vec<f64> = free.iter().map(|&i| prob.lo[i]).collect();
    let hi: Vec<f64> = free.iter().map(|&i| prob.hi[i]).collect();
    let x0: Vec<f64> = free.iter().map(|&i| start[i]).collect();
    let outcome = optim::newton(&obj, &x0, &Bounds { lo: &lo, hi: &hi });
    let mut raw = RawFit {
        beta: obj.beta(&outcome.x),
        rho: match kernel {
            Kernel::General(r) => Some(r),
            _ => None,
        },
        value: outcome.point.value,
        outcome,
        separation: false,
    };
    check_separation(prob, kernel, start, &mut raw);
    raw
}

fn run_rho(prob: &Problem<'_, '_>, start: &[f64]) -> RawFit {
    let free = prob.free();
    let m = free.len();
    let t_cap = RHO_CAP.atanh();
    let inner = BetaObjective {
        kernel: Kernel::General(0.0),
        sample: prob.sample,
        free: &free,
        template: prob.template(start),
    };
    let mut lo: Vec<f64> = free.iter().map(|&i| prob.lo[i]).collect();
    let mut hi: Vec<f64> = free.iter().map(|&i| prob.hi[i]).collect();
    lo.push(-t_cap);
    hi.push(t_cap);
    let mut x0: Vec<f64> = free.iter().map(|&i| start[i]).collect();
    x0.push(0.0);
    let obj = RhoObjective { inner };
    let outcome = optim::bfgs(&obj, &x0, &Bounds { lo: &lo, hi: &hi });
    let t = outcome.x[m];
    let rho = if t >= t_cap {
        RHO_CAP
    } else if t <= -t_cap {
        -RHO_CAP
    } else {
        t.tanh()
    };
    let mut raw = RawFit {
        beta: obj.inner.beta(&outcome.x[..m]),
        rho: Some(rho),
        value: outcome.point.value,
        outcome,
        separation: false,
    };
    check_separation(prob, Kernel::General(rho), start, &mut raw);
    let drifting = raw.outcome.stop != Stop::Converged && rho != 0.0;
    if (raw.outcome.blocked[m] || drifting) && !raw.separation {
        // The optimum sits on (or is being approached along a flat ridge
        // towards) the edge of the rho range: compare with the fit at the
        // boundary value itself and report that when it is no worse.
        let edge = rho.signum();
        let b = run_beta(prob, Kernel::General(edge), &raw.beta);
        if !b.separation && b.value.is_finite() && b.value >= raw.value {
            let iterations = raw.outcome.iterations + b.outcome.iterations;
            let mut trace = raw.outcome.trace.clone();
            trace.extend(&b.outcome.trace);
            raw = b;
            raw.outcome.iterations = iterations;
            raw.outcome.trace = trace;
        }
    }
    raw
}

/// Flags separation: a coefficient on the edge of `Theta`, a non-finite start,
/// or a likelihood along the ray from the start through the estimate that is
/// no lower at the edge of `Theta` than at the estimate.
fn check_separation(prob: &Problem<'_, '_>, kernel: Kernel, start: &[f64], raw: &mut RawFit) {
    if raw.outcome.stop == Stop::NonFinite {
        raw.separation = true;
        return;
    }
    let free = prob.free();
    let at_edge = free.iter().any(|&i| raw.beta[i] <= prob.lo[i] || raw.beta[i] >= prob.hi[i]);
    if at_edge {
        raw.separation = true;
        return;
    }
    let mut dir: Vec<f64> = free.iter().map(|&i| raw.beta[i] - start[i]).collect();
    if dir.iter().all(|d| *d == 0.0) {
        dir = free.iter().map(|&i| raw.beta[i]).collect();
    }
    let mut reach = f64::INFINITY;
    for (j, &i) in free.iter().enumerate() {
        let d = dir[j];
        if d > 0.0 {
            reach = reach.min((prob.hi[i] - raw.beta[i]) / d);
        } else if d < 0.0 {
            reach = reach.min((prob.lo[i] - raw.beta[i]) / d);
        }
    }
    if !reach.is_finite() || reach <= 0.0 {
        return;
    }
    let mut edge = raw.beta.clone();
    for (j, &i) in free.iter().enumerate() {
        edge[i] = (raw.beta[i] + reach * dir[j]).clamp(prob.lo[i], prob.hi[i]);
    }
    if !reaches(kernel, prob.sample, &edge, raw.value - 1e-10) {
        return;
    }
    let acc = accumulate(kernel, prob.sample, &edge, Order::Value, false);
    if acc.value.is_finite() && acc.value >= raw.value - 1e-10 {
        raw.separation = true;
        raw.beta = edge;
        raw.value = acc.value;
    }
}

fn validate<'s, 'd>(
    spec: &'s ModelSpec,
    design: &'d DyadDesign,
    sample: &'s Sample<'d>,
    pinned: &[(usize, f64)],
) -> Result<Problem<'s, 'd>, FitError> {
    let k = design.k();
    if spec.family.is_tu() {
        require_symmetric(design)?;
    }
    if let Some(r) = spec.rho_fixed {
        if spec.family != Family::NtuGeneral {
            return Err(FitError::RhoFixedFamily);
        }
        if !(-1.0..=1.0).contains(&r) {
            return Err(FitError::RhoFixed(r));
        }
    }
    let (lo, hi) = spec.bounds(k)?;
    let mut pin = vec![None; k];
    for &(index, value) in pinned {
        if index >= k {
            return Err(FitError::Coordinate { index, k });
        }
        if !(lo[index]..=hi[index]).contains(&value) {
            return Err(FitError::PinnedOutside { index, value });
        }
        pin[index] = Some(value);
    }
    Ok(Problem { spec, sample, lo, hi, pinned: pin })
}

fn clamp_start(start: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    start.iter().zip(lo.iter().zip(hi)).map(|(s, (l, h))| s.clamp(*l, *h)).collect()
}

fn invert_info(info: &DMatrix<f64>, n: usize) -> Option<DMatrix<f64>> {
    if info.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let sym = (info + info.transpose()) * 0.5;
    let inv = sym.cholesky()?.inverse();
    Some(inv / n as f64)
}

fn assemble(prob: &Problem<'_, '_>, raw: RawFit, rho_free: bool) -> FitResult {
    let design = prob.sample.design;
    let family = prob.spec.family;
    let n = design.n_dyads();
    let mut notes = Vec::new();
    let identification = check_identification(design);
    if !identification.identified {
        notes.push(format!("identification check failed: {}", identification.reason));
    }
    let failure = if raw.separation {
        Some(FitFailure::Separation)
    } else {
        match raw.outcome.stop {
            Stop::Converged => None,
            Stop::MaxIterations => Some(FitFailure::MaxIterations),
            Stop::LineSearch => Some(FitFailure::LineSearch),
            Stop::NonFinite => Some(FitFailure::Separation),
        }
    };
    let converged = failure.is_none();
    let pinned = prob.pinned.iter().any(Option::is_some);
    let rho_interior = rho_free && raw.rho.is_some_and(|r| r.abs() < 1.0);
    let params = Params { beta: raw.beta.clone(), rho: raw.rho };

    let (info, kind) = if pinned || raw.separation {
        (None, InfoKind::None)
    } else {
        match family {
            Family::NtuRho0 if design.is_fully_symmetric() => {
                (j1_matrix(design, &params).ok(), InfoKind::J1)
            }
            Family::NtuRho0 => (j2_matrix(design, &params).ok(), InfoKind::J2),
            _ => {
                let kernel = kernel_for(family, raw.rho);
                let k = design.k();
                let acc = accumulate(kernel, prob.sample, &raw.beta, Order::Hessian, false);
                let mut h = DMatrix::from_row_slice(k, k, &acc.hess_beta);
                if rho_interior {
                    let col = rho_column(prob.sample, &raw.beta, raw.rho.unwrap_or(0.0));
                    h = h.resize(k + 1, k + 1, 0.0);
                    for (r, v) in col.iter().enumerate() {
                        h[(r, k)] = *v;
                        h[(k, r)] = *v;
                    }
                }
                (Some(-h), InfoKind::Observed)
            }
        }
    };
    let vcov = info.as_ref().and_then(|i| invert_info(i, n));
    if info.is_some() && vcov.is_none() {
        notes.push("information matrix is singular; standard errors omitted".to_string());
    }
    let kind = if vcov.is_some() { kind } else { InfoKind::None };
    let std_errors = vcov
        .as_ref()
        .map(|v| (0..v.nrows()).map(|i| v[(i, i)].max(0.0).sqrt()).collect())
        .unwrap_or_default();
    FitResult {
        family,
        names: design.names().to_vec(),
        beta_hat: raw.beta,
        rho_hat: raw.rho,
        loglik: raw.value,
        score_norm: raw.outcome.score_norm,
        vcov,
        std_errors,
        converged,
        iterations: raw.outcome.iterations,
        info_matrix_kind: kind,
        failure,
        n_dyads: n,
        identification,
        trace: raw.outcome.trace,
        notes,
    }
}

fn fit_sample(
    spec: &ModelSpec,
    design: &DyadDesign,
    sample: &Sample<'_>,
    net: &Network,
    pinned: &[(usize, f64)],
) -> Result<FitResult, FitError> {
    let prob = validate(spec, design, sample, pinned)?;
    let start = if spec.family.is_tu() {
        vec![0.0; design.k()]
    } else {
        warm_start(spec, design, net).beta
    };
    let start = prob.template(&clamp_start(&start, &prob.lo, &prob.hi));
    let (raw, rho_free) = match (spec.family, spec.rho_fixed) {
        (Family::NtuGeneral, None) => (run_rho(&prob, &start), true),
        (family, rho) => (run_beta(&prob, kernel_for(family, rho), &start), false),
    };
    Ok(assemble(&prob, raw, rho_free))
}

/// Maximizes the selected log-likelihood over `Theta` (and `rho` for the
/// correlated NTU model unless `spec.rho_fixed` is set).
pub fn fit(spec: &ModelSpec, design: &DyadDesign, net: &Network) -> Result<FitResult, FitError> {
    let sample = Sample::new(design, net)?;
    fit_sample(spec, design, &sample, net, &[])
}

/// Maximizes over `beta` with `rho` held at `rho_value`.
pub fn fit_constrained_rho(
    spec: &ModelSpec,
    design: &DyadDesign,
    net: &Network,
    rho_value: f64,
) -> Result<FitResult, FitError> {
    if spec.family != Family::NtuGeneral {
        return Err(FitError::RhoFixedFamily);
    }
    let spec = spec.clone().with_rho_fixed(rho_value);
    fit(&spec, design, net)
}

/// Fits with some coefficients pinned to given values; `rho` stays free for
/// the correlated model unless the spec fixes it.
pub fn fit_pinned(
    spec: &ModelSpec,
    design: &DyadDesign,
    net: &Network,
    pinned: &[(usize, f64)],
) -> Result<FitResult, FitError> {
    let sample = Sample::new(design, net)?;
    fit_sample(spec, design, &sample, net, pinned)
}

/// Starting values: the TU probit fit on the symmetrized design (zeros if that
/// fit fails) and `rho = 0` for the correlated model.
pub fn warm_start(spec: &ModelSpec, design: &DyadDesign, net: &Network) -> Params {
    let k = design.k();
    let sym = design.symmetrized();
    let tu = ModelSpec {
        family: Family::TuProbit,
        transforms: Vec::new(),
        theta_bounds: spec.theta_bounds.clone(),
        rho_fixed: None,
    };
    let beta = match fit(&tu, &sym, net) {
        Ok(f) if f.converged => f.beta_hat,
        _ => vec![0.0; k],
    };
    let rho = (spec.family == Family::NtuGeneral).then_some(0.0);
    Params { beta, rho }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_design(n: usize) -> DyadDesign {
        let nd = n * (n - 1) / 2;
        DyadDesign::from_pairs(n, vec!["const".into()], vec![vec![1.0]; nd], vec![vec![1.0]; nd])
            .unwrap()
    }

    fn complete(n: usize) -> Network {
        let mut net = Network::new(n);
        for i in 0..n {
            for j in i + 1..n {
                net.add_link(i, j).unwrap();
            }
        }
        net
    }

    #[test]
    fn all_links_separate() {
        let d = intercept_design(4);
        let f = fit(&ModelSpec::new(Family::TuProbit), &d, &complete(4)).unwrap();
        assert!(!f.converged);
        assert_eq!(f.failure, Some(FitFailure::Separation));
        assert_eq!(f.beta_hat[0], DEFAULT_BOUND);
    }

    #[test]
    fn intercept_probit_closed_form() {
        // 3 of 6 dyads linked: Phi(beta) = 1/2.
        let d = intercept_design(4);
        let mut net = Network::new(4);
        for (i, j) in [(0, 1), (0, 2), (1, 3)] {
            net.add_link(i, j).unwrap();
        }
        let f = fit(&ModelSpec::new(Family::TuProbit), &d, &net).unwrap();
        assert!(f.converged, "{:?}", f.failure);
        assert!(f.beta_hat[0].abs() < 1e-10);
        // NTU with independent errors: Phi(beta)^2 = 1/2.
        let g = fit(&ModelSpec::new(Family::NtuRho0), &d, &net).unwrap();
        assert!(g.converged);
        let target = crate::specfun::unchecked::quantile(0.5f64.sqrt());
        assert!((g.beta_hat[0] - target).abs() < 1e-9);
        assert_eq!(g.info_matrix_kind, InfoKind::J1);
    }

    #[test]
    fn bounds_validation() {
        let d = intercept_design(3);
        let net = Network::new(3);
        let bad = ModelSpec::new(Family::TuProbit).with_bounds(vec![(1.0, -1.0)]);
        assert!(matches!(fit(&bad, &d, &net), Err(FitError::Bounds(_))));
        let short = ModelSpec::new(Family::TuProbit).with_bounds(vec![]);
        assert!(matches!(fit(&short, &d, &net), Err(FitError::Bounds(_))));
        let rho = ModelSpec::new(Family::NtuRho0).with_rho_fixed(0.5);
        assert!(matches!(fit(&rho, &d, &net), Err(FitError::RhoFixedFamily)));
    }

    #[test]
    fn family_names_round_trip() {
        for f in [Family::TuProbit, Family::TuLogit, Family::NtuRho0, Family::NtuGeneral] {
            assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
        }
        assert!("probit".parse::<Family>().is_err());
    }
}
