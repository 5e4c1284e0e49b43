//! Wald and likelihood-ratio tests for coefficients, and the boundary LR test
//! of the TU restriction `rho = 1` inside the correlated NTU model.
//!
//! Likelihood-ratio statistics are reported on the summed deviance scale:
//! twice the number of dyads times the difference of mean log-likelihoods.
//! That is the scale on which the chi-square references apply.

use std::fmt;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::dyaddata::{DyadDesign, Network};
use crate::estimate::{fit, fit_constrained_rho, fit_pinned, Family, FitError, FitResult, ModelSpec};
use crate::likelihood::{ntu_general_loglik, ModelError, Params};
use crate::specfun::unchecked::cdf;

/// Levels at which every test reports a decision.
pub const LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

/// Caveat attached to a forced specification test on asymmetric regressors.
pub const ASYMMETRIC_CAVEAT: &str = "regressors are asymmetric: the 50:50 chi-square mixture \
reference is derived for symmetric regressors and is applied here without that guarantee";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NullDistribution {
    StandardNormal,
    ChiSquared { df: u32 },
    /// Equal mixture of chi-square with `df` and `df + 1` degrees of freedom;
    /// `df = 0` is a point mass at zero.
    HalfHalfMixture { df: u32 },
}

impl fmt::Display for NullDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NullDistribution::StandardNormal => write!(f, "N(0,1) two-sided"),
            NullDistribution::ChiSquared { df } => write!(f, "chisq({df})"),
            NullDistribution::HalfHalfMixture { df } => {
                write!(f, "0.5 chisq({df}) + 0.5 chisq({})", df + 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub null_dist: NullDistribution,
    pub p_value: f64,
    /// `(alpha, p_value < alpha)` for each of [`LEVELS`].
    pub reject_at: Vec<(f64, bool)>,
    pub description: String,
}

impl TestResult {
    fn new(statistic: f64, null_dist: NullDistribution, p_value: f64, description: String) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            statistic,
            null_dist,
            p_value,
            reject_at: LEVELS.iter().map(|&a| (a, p_value < a)).collect(),
            description,
        }
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("fit has no variance estimate")]
    MissingVcov,
    #[error("the {0} fit did not converge")]
    NotConverged(&'static str),
    #[error("coefficient index {index} out of range for {k} coefficients")]
    Coordinate { index: usize, k: usize },
    #[error(
        "the specification test assumes symmetric regressors (w_ij = w_ji); asymmetric column(s): {0:?}"
    )]
    AsymmetricDesign(Vec<String>),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn chisq_sf(q: f64, df: u32) -> f64 {
    if df == 0 {
        return 0.0;
    }
    if df == 1 {
        return crate::specfun::chisq1_sf(q).unwrap_or(f64::NAN);
    }
    ChiSquared::new(df as f64).map(|c| c.sf(q)).unwrap_or(f64::NAN)
}

/// Upper-tail probability of the `0.5 chisq(df) + 0.5 chisq(df + 1)` mixture;
/// 1 at a zero statistic.
pub fn mixture_p_value(statistic: f64, df: u32) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    0.5 * chisq_sf(statistic, df) + 0.5 * chisq_sf(statistic, df + 1)
}

/// `1 - alpha` quantile of the `0.5 chisq(df) + 0.5 chisq(df + 1)` mixture,
/// for `alpha` in `(0, 0.5]`.
pub fn mixture_critical_value(alpha: f64, df: u32) -> f64 {
    if df == 0 {
        return crate::specfun::mixture_quantile(alpha).unwrap_or(f64::NAN);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while mixture_p_value(hi, df) > alpha {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mixture_p_value(mid, df) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided Wald test of `beta[coord] = b0`.
pub fn wald_test_beta(fit: &FitResult, coord: usize, b0: f64) -> Result<TestResult, InferenceError> {
    let k = fit.beta_hat.len();
    if coord >= k {
        return Err(InferenceError::Coordinate { index: coord, k });
    }
    if !fit.converged {
        return Err(InferenceError::NotConverged("unrestricted"));
    }
    let se = fit.std_errors.get(coord).copied().ok_or(InferenceError::MissingVcov)?;
    if !(se > 0.0) {
        return Err(InferenceError::MissingVcov);
    }
    let z = (fit.beta_hat[coord] - b0) / se;
    let name = fit.names.get(coord).map(String::as_str).unwrap_or("?");
    Ok(TestResult::new(
        z,
        NullDistribution::StandardNormal,
        2.0 * cdf(-z.abs()),
        format!("Wald test of {name} = {b0}"),
    ))
}

/// LR test of `beta[coord] = b0`, refitting every other parameter (including
/// `rho` when it is free) under the restriction.
pub fn lr_test_beta(
    spec: &ModelSpec,
    design: &DyadDesign,
    net: &Network,
    coord: usize,
    b0: f64,
) -> Result<TestResult, InferenceError> {
    let unrestricted = fit(spec, design, net)?;
    lr_test_beta_given(&unrestricted, spec, design, net, coord, b0)
}

/// As [`lr_test_beta`], reusing an existing unrestricted fit.
pub fn lr_test_beta_given(
    unrestricted: &FitResult,
    spec: &ModelSpec,
    design: &DyadDesign,
    net: &Network,
    coord: usize,
    b0: f64,
) -> Result<TestResult, InferenceError> {
    let k = design.k();
    if coord >= k {
        return Err(InferenceError::Coordinate { index: coord, k });
    }
    if !unrestricted.converged {
        return Err(InferenceError::NotConverged("unrestricted"));
    }
    let restricted = fit_pinned(spec, design, net, &[(coord, b0)])?;
    if !restricted.converged {
        return Err(InferenceError::NotConverged("restricted"));
    }
    let n = design.n_dyads() as f64;
    let stat = (2.0 * n * (unrestricted.loglik - restricted.loglik)).max(0.0);
    let name = design.names()[coord].clone();
    Ok(TestResult::new(
        stat,
        NullDistribution::ChiSquared { df: 1 },
        chisq_sf(stat, 1),
        format!("LR test of {name} = {b0}"),
    ))
}

/// Result of the test of `rho = 1`, with both fits it compares.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecTestOutcome {
    pub test: TestResult,
    pub unrestricted: FitResult,
    pub restricted: FitResult,
    pub caveat: Option<String>,
}

impl SpecTestOutcome {
    pub fn rho_hat(&self) -> Option<f64> {
        self.unrestricted.rho_hat
    }
}

fn asymmetric_columns(design: &DyadDesign) -> Vec<String> {
    design
        .names()
        .iter()
        .zip(design.symmetric_columns())
        .filter(|(_, &s)| !s)
        .map(|(n, _)| n.clone())
        .collect()
}

/// Boundary LR test of the TU model (`rho = 1`) against the correlated NTU
/// model, referred to `0.5 chisq(0) + 0.5 chisq(1)`.
///
/// Refuses asymmetric designs unless `force` is set, in which case the outcome
/// carries [`ASYMMETRIC_CAVEAT`].
pub fn spec_test_tu(
    design: &DyadDesign,
    net: &Network,
    force: bool,
) -> Result<SpecTestOutcome, InferenceError> {
    spec_test_tu_with(&ModelSpec::new(Family::NtuGeneral), design, net, force)
}

/// As [`spec_test_tu`], with the bounds of `spec` (its family is ignored).
pub fn spec_test_tu_with(
    spec: &ModelSpec,
    design: &DyadDesign,
    net: &Network,
    force: bool,
) -> Result<SpecTestOutcome, InferenceError> {
    let asym = asymmetric_columns(design);
    if !asym.is_empty() && !force {
        return Err(InferenceError::AsymmetricDesign(asym));
    }
    let spec = ModelSpec { family: Family::NtuGeneral, rho_fixed: None, ..spec.clone() };
    let unrestricted = fit(&spec, design, net)?;
    if !unrestricted.converged {
        return Err(InferenceError::NotConverged("unrestricted"));
    }
    let restricted = fit_constrained_rho(&spec, design, net, 1.0)?;
    if !restricted.converged {
        return Err(InferenceError::NotConverged("restricted"));
    }
    let n = design.n_dyads() as f64;
    let stat = if unrestricted.rho_hat == Some(1.0) {
        0.0
    } else {
        (2.0 * n * (unrestricted.loglik - restricted.loglik)).max(0.0)
    };
    let test = TestResult::new(
        stat,
        NullDistribution::HalfHalfMixture { df: 0 },
        mixture_p_value(stat, 0),
        "boundary LR test of rho = 1 (TU)".to_string(),
    );
    Ok(SpecTestOutcome {
        test,
        unrestricted,
        restricted,
        caveat: (!asym.is_empty()).then(|| ASYMMETRIC_CAVEAT.to_string()),
    })
}

/// Boundary LR test of the joint null `beta = beta0, rho = 1`, referred to
/// `0.5 chisq(k) + 0.5 chisq(k + 1)`.
pub fn joint_boundary_test(
    design: &DyadDesign,
    net: &Network,
    beta0: &[f64],
) -> Result<TestResult, InferenceError> {
    let unrestricted = fit(&ModelSpec::new(Family::NtuGeneral), design, net)?;
    if !unrestricted.converged {
        return Err(InferenceError::NotConverged("unrestricted"));
    }
    let null = ntu_general_loglik(design, net, &Params::with_rho(beta0.to_vec(), 1.0))?;
    let n = design.n_dyads() as f64;
    let stat = (2.0 * n * (unrestricted.loglik - null.value)).max(0.0);
    let df = beta0.len() as u32;
    Ok(TestResult::new(
        stat,
        NullDistribution::HalfHalfMixture { df },
        mixture_p_value(stat, df),
        "boundary LR test of beta = beta0, rho = 1".to_string(),
    ))
}
