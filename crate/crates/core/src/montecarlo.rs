//! Simulation of NTU networks and the replication studies built on it.
//!
//! Replication `r` of grid cell `c` draws from its own ChaCha8 stream seeded
//! with [`replication_seed`]`(master_seed, c, r)`, so results do not depend on
//! the number of worker threads or the order in which they run.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::dyaddata::{build_design, dyad_count, DataError, DyadDesign, Network, NodeTable, RegressorTransform};
use crate::estimate::{fit, Family, FitResult, ModelSpec};
use crate::inference::{lr_test_beta_given, spec_test_tu, wald_test_beta, SpecTestOutcome, TestResult};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write report: {0}")]
    Csv(#[from] csv::Error),
}

/// How regressors are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateLaw {
    /// One `N(0,1)` value per dyad and coefficient, shared by both directions.
    StandardNormal,
    /// Per dyad and coefficient, `(w_ij, w_ji)` bivariate normal with unit
    /// variances and covariance `cov`.
    BivariateNormal { cov: f64 },
    /// `columns` independent `N(0,1)` node covariates `x1, x2, ...`, turned
    /// into dyad regressors by the configured transforms.
    NodeNormal { columns: usize },
}

impl fmt::Display for CovariateLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovariateLaw::StandardNormal => f.write_str("standard_normal"),
            CovariateLaw::BivariateNormal { cov } => write!(f, "bivariate_normal:{cov}"),
            CovariateLaw::NodeNormal { columns } => write!(f, "node_normal:{columns}"),
        }
    }
}

impl FromStr for CovariateLaw {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StudyError::Config(format!("unknown covariate law '{s}'"));
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind, arg) {
            ("standard_normal" | "symmetric", None) => Ok(CovariateLaw::StandardNormal),
            ("bivariate_normal" | "asymmetric", a) => {
                let cov = a.map(str::parse).transpose().map_err(|_| bad())?.unwrap_or(0.1);
                Ok(CovariateLaw::BivariateNormal { cov })
            }
            ("node_normal", Some(a)) => {
                Ok(CovariateLaw::NodeNormal { columns: a.parse().map_err(|_| bad())? })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub n: usize,
    pub beta0: Vec<f64>,
    pub rho0: f64,
    pub covariate_law: CovariateLaw,
    /// Used only with [`CovariateLaw::NodeNormal`].
    pub transforms: Vec<RegressorTransform>,
    pub master_seed: u64,
}

impl DgpConfig {
    /// One symmetric standard-normal regressor.
    pub fn symmetric(n: usize, beta0: f64, rho0: f64, master_seed: u64) -> Self {
        Self {
            n,
            beta0: vec![beta0],
            rho0,
            covariate_law: CovariateLaw::StandardNormal,
            transforms: Vec::new(),
            master_seed,
        }
    }

    /// One asymmetric regressor with `Cov(w_ij, w_ji) = cov`.
    pub fn asymmetric(n: usize, beta0: f64, rho0: f64, cov: f64, master_seed: u64) -> Self {
        Self {
            covariate_law: CovariateLaw::BivariateNormal { cov },
            ..Self::symmetric(n, beta0, rho0, master_seed)
        }
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        if self.n < 2 {
            return Err(StudyError::Config(format!("need n >= 2, got {}", self.n)));
        }
        if !(-1.0..=1.0).contains(&self.rho0) {
            return Err(StudyError::Config(format!("rho0 must lie in [-1, 1], got {}", self.rho0)));
        }
        if self.beta0.is_empty() || self.beta0.iter().any(|b| !b.is_finite()) {
            return Err(StudyError::Config("beta0 must be non-empty and finite".into()));
        }
        match self.covariate_law {
            CovariateLaw::BivariateNormal { cov } if !(cov > -1.0 && cov < 1.0) => {
                Err(StudyError::Config(format!("covariance must lie in (-1, 1), got {cov}")))
            }
            CovariateLaw::NodeNormal { .. } if self.transforms.len() != self.beta0.len() => {
                Err(StudyError::Config(format!(
                    "{} transforms for {} coefficients",
                    self.transforms.len(),
                    self.beta0.len()
                )))
            }
            _ => Ok(()),
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` in grid cell `cell`.
pub fn replication_seed(master_seed: u64, cell: u64, rep: u64) -> u64 {
    splitmix(splitmix(splitmix(master_seed) ^ cell) ^ rep)
}

/// Link indicator for one dyad given both indices and both errors.
pub fn link_outcome(a: f64, b: f64, eps_ij: f64, eps_ji: f64) -> bool {
    a >= eps_ij && b >= eps_ji
}

/// A simulated network together with the errors that generated it.
#[derive(Debug, Clone)]
pub struct Draw {
    pub design: DyadDesign,
    pub network: Network,
    /// `(eps_ij, eps_ji)` per dyad in design order.
    pub errors: Vec<(f64, f64)>,
    /// Node covariates, drawn only under [`CovariateLaw::NodeNormal`].
    pub nodes: Option<NodeTable>,
}

fn names(k: usize) -> Vec<String> {
    if k == 1 {
        vec!["w".to_string()]
    } else {
        (1..=k).map(|c| format!("w{c}")).collect()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws replication `rep` of grid cell `cell`.
pub fn simulate_in_cell(cfg: &DgpConfig, cell: u64, rep: u64) -> Result<Draw, StudyError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(cfg.master_seed, cell, rep));
    let n = cfg.n;
    let k = cfg.beta0.len();
    let nd = dyad_count(n);
    let mut nodes = None;
    let design = match cfg.covariate_law {
        CovariateLaw::StandardNormal => {
            let rows: Vec<Vec<f64>> =
                (0..nd).map(|_| (0..k).map(|_| normal(&mut rng)).collect()).collect();
            DyadDesign::from_pairs(n, names(k), rows.clone(), rows)?
        }
        CovariateLaw::BivariateNormal { cov } => {
            let s = (1.0 - cov * cov).sqrt();
            let mut wij = Vec::with_capacity(nd);
            let mut wji = Vec::with_capacity(nd);
            for _ in 0..nd {
                let (mut r1, mut r2) = (Vec::with_capacity(k), Vec::with_capacity(k));
                for _ in 0..k {
                    let z1 = normal(&mut rng);
                    let z2 = normal(&mut rng);
                    r1.push(z1);
                    r2.push(cov * z1 + s * z2);
                }
                wij.push(r1);
                wji.push(r2);
            }
            DyadDesign::from_pairs(n, names(k), wij, wji)?
        }
        CovariateLaw::NodeNormal { columns } => {
            let ids = (0..n).map(|i| i.to_string()).collect();
            let cols = (1..=columns).map(|c| format!("x{c}")).collect();
            let rows = (0..n).map(|_| (0..columns).map(|_| normal(&mut rng)).collect()).collect();
            let table = NodeTable::new(ids, cols, rows)?;
            let design = build_design(&table, &cfg.transforms)?;
            nodes = Some(table);
            design
        }
    };
    let rho = cfg.rho0;
    let s = ((1.0 - rho) * (1.0 + rho)).max(0.0).sqrt();
    let mut errors = Vec::with_capacity(nd);
    let mut y = Vec::with_capacity(nd);
    for d in 0..nd {
        let z1 = normal(&mut rng);
        let z2 = normal(&mut rng);
        let e_ji = if rho >= 1.0 {
            z1
        } else if rho <= -1.0 {
            -z1
        } else {
            rho * z1 + s * z2
        };
        let a: f64 = design.w_ij(d).iter().zip(&cfg.beta0).map(|(w, b)| w * b).sum();
        let b: f64 = design.w_ji(d).iter().zip(&cfg.beta0).map(|(w, b)| w * b).sum();
        errors.push((z1, e_ji));
        y.push(link_outcome(a, b, z1, e_ji));
    }
    let network = Network::from_outcomes(&design, &y);
    Ok(Draw { design, network, errors, nodes })
}

/// Draws replication `rep` of the first grid cell.
pub fn simulate_network(cfg: &DgpConfig, rep: u64) -> Result<(DyadDesign, Network), StudyError> {
    let d = simulate_in_cell(cfg, 0, rep)?;
    Ok((d.design, d.network))
}

/// Fits `spec` to `reps` replications of one cell; `None` marks draws whose
/// fit failed or did not converge.
pub fn replicate_fits(cfg: &DgpConfig, cell: u64, reps: usize, spec: &ModelSpec) -> Result<Vec<Option<FitResult>>, StudyError> {
    cfg.validate()?;
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let d = simulate_in_cell(cfg, cell, r).ok()?;
            fit(spec, &d.design, &d.network).ok().filter(|f| f.converged)
        })
        .collect())
}

/// Runs the test of `rho = 1` on `reps` replications of one cell.
pub fn replicate_spec_tests(cfg: &DgpConfig, cell: u64, reps: usize) -> Result<Vec<Option<SpecTestOutcome>>, StudyError> {
    cfg.validate()?;
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let d = simulate_in_cell(cfg, cell, r).ok()?;
            spec_test_tu(&d.design, &d.network, false).ok()
        })
        .collect())
}

/// Wald and LR tests of `beta[0] = beta0[0]` under the correlated NTU model.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaTests {
    pub fit: FitResult,
    pub wald: TestResult,
    pub lr: TestResult,
}

pub fn replicate_beta_tests(cfg: &DgpConfig, cell: u64, reps: usize, spec: &ModelSpec) -> Result<Vec<Option<BetaTests>>, StudyError> {
    cfg.validate()?;
    let b0 = cfg.beta0[0];
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let d = simulate_in_cell(cfg, cell, r).ok()?;
            let f = fit(spec, &d.design, &d.network).ok().filter(|f| f.converged)?;
            let wald = wald_test_beta(&f, 0, b0).ok()?;
            let lr = lr_test_beta_given(&f, spec, &d.design, &d.network, 0, b0).ok()?;
            Some(BetaTests { fit: f, wald, lr })
        })
        .collect())
}

/// Grid and scale shared by the study drivers. Cells run over `n_list`
/// (outer) and `rho_grid` (inner); the cell index feeds the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub n_list: Vec<usize>,
    pub rho_grid: Vec<f64>,
    pub reps: usize,
    pub alpha: f64,
    pub beta0: Vec<f64>,
    pub covariate_law: CovariateLaw,
    pub transforms: Vec<RegressorTransform>,
    pub master_seed: u64,
}

impl StudyConfig {
    fn validate(&self) -> Result<(), StudyError> {
        if self.reps == 0 {
            return Err(StudyError::Config("reps must be at least 1".into()));
        }
        if self.n_list.is_empty() || self.rho_grid.is_empty() {
            return Err(StudyError::Config("empty grid".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(StudyError::Config(format!("alpha must lie in (0, 0.5], got {}", self.alpha)));
        }
        for cell in self.cells() {
            cell.1.validate()?;
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(u64, DgpConfig)> {
        let mut out = Vec::new();
        for &n in &self.n_list {
            for &rho0 in &self.rho_grid {
                let cfg = DgpConfig {
                    n,
                    beta0: self.beta0.clone(),
                    rho0,
                    covariate_law: self.covariate_law,
                    transforms: self.transforms.clone(),
                    master_seed: self.master_seed,
                };
                out.push((out.len() as u64, cfg));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub study: &'static str,
    pub n: usize,
    pub rho0: f64,
    pub covariate_law: CovariateLaw,
    pub beta0: Vec<f64>,
    pub master_seed: u64,
    pub alpha: Option<f64>,
    pub replications: usize,
    pub converged: usize,
    pub mean_beta_hat: Option<Vec<f64>>,
    pub mean_abs_beta_error: Option<f64>,
    pub mean_rho_hat: Option<f64>,
    pub rejection_rate: Option<f64>,
    pub wald_rejection_rate: Option<f64>,
    pub lr_rejection_rate: Option<f64>,
}

impl StudyRow {
    pub fn failed(&self) -> usize {
        self.replications - self.converged
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub elapsed: Duration,
}

const HEADER: [&str; 16] = [
    "study",
    "n",
    "rho0",
    "covariate_law",
    "beta0",
    "master_seed",
    "alpha",
    "replications",
    "converged",
    "failed",
    "mean_beta_hat",
    "mean_abs_beta_error",
    "mean_rho_hat",
    "rejection_rate",
    "wald_rejection_rate",
    "lr_rejection_rate",
];

/// Formats with six significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-5..6).contains(&exp) {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    let fixed = format!("{x:.decimals$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|b| sig6(*b)).collect::<Vec<_>>().join(";")
}

impl StudyReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), StudyError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.study.to_string(),
                r.n.to_string(),
                sig6(r.rho0),
                r.covariate_law.to_string(),
                join(&r.beta0),
                r.master_seed.to_string(),
                opt(r.alpha),
                r.replications.to_string(),
                r.converged.to_string(),
                r.failed().to_string(),
                r.mean_beta_hat.as_deref().map(join).unwrap_or_default(),
                opt(r.mean_abs_beta_error),
                opt(r.mean_rho_hat),
                opt(r.rejection_rate),
                opt(r.wald_rejection_rate),
                opt(r.lr_rejection_rate),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StudyError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

fn row(study: &'static str, sc: &StudyConfig, cfg: &DgpConfig, alpha: Option<f64>, converged: usize) -> StudyRow {
    StudyRow {
        study,
        n: cfg.n,
        rho0: cfg.rho0,
        covariate_law: cfg.covariate_law,
        beta0: cfg.beta0.clone(),
        master_seed: sc.master_seed,
        alpha,
        replications: sc.reps,
        converged,
        mean_beta_hat: None,
        mean_abs_beta_error: None,
        mean_rho_hat: None,
        rejection_rate: None,
        wald_rejection_rate: None,
        lr_rejection_rate: None,
    }
}

fn fit_summary(r: &mut StudyRow, fits: &[&FitResult], beta0: &[f64]) {
    if fits.is_empty() {
        return;
    }
    let k = beta0.len();
    r.mean_beta_hat = Some((0..k).map(|c| mean(fits.iter().map(|f| f.beta_hat[c])).unwrap_or(f64::NAN)).collect());
    r.mean_abs_beta_error = mean(fits.iter().map(|f| (f.beta_hat[0] - beta0[0]).abs()));
    r.mean_rho_hat = mean(fits.iter().filter_map(|f| f.rho_hat));
}

/// Mean estimates of the correlated NTU model per grid cell.
pub fn run_consistency_study(sc: &StudyConfig) -> Result<StudyReport, StudyError> {
    sc.validate()?;
    let start = Instant::now();
    let spec = ModelSpec::new(Family::NtuGeneral);
    let mut rows = Vec::new();
    for (cell, cfg) in sc.cells() {
        let fits = replicate_fits(&cfg, cell, sc.reps, &spec)?;
        let ok: Vec<&FitResult> = fits.iter().flatten().collect();
        let mut r = row("consistency", sc, &cfg, None, ok.len());
        fit_summary(&mut r, &ok, &cfg.beta0);
        rows.push(r);
    }
    Ok(StudyReport { rows, elapsed: start.elapsed() })
}

/// Rejection rates of the test of `rho = 1` per grid cell.
pub fn run_power_curve(sc: &StudyConfig) -> Result<StudyReport, StudyError> {
    sc.validate()?;
    let start = Instant::now();
    let mut rows = Vec::new();
    for (cell, cfg) in sc.cells() {
        let tests = replicate_spec_tests(&cfg, cell, sc.reps)?;
        let ok: Vec<&SpecTestOutcome> = tests.iter().flatten().collect();
        let mut r = row("power_curve", sc, &cfg, Some(sc.alpha), ok.len());
        r.rejection_rate = mean(ok.iter().map(|t| f64::from(u8::from(t.test.rejects(sc.alpha)))));
        r.mean_rho_hat = mean(ok.iter().filter_map(|t| t.rho_hat()));
        rows.push(r);
    }
    Ok(StudyReport { rows, elapsed: start.elapsed() })
}

/// Wald and LR rejection rates of `beta[0] = beta0[0]` per grid cell.
pub fn run_size_table(sc: &StudyConfig) -> Result<StudyReport, StudyError> {
    sc.validate()?;
    let start = Instant::now();
    let spec = ModelSpec::new(Family::NtuGeneral);
    let mut rows = Vec::new();
    for (cell, cfg) in sc.cells() {
        let tests = replicate_beta_tests(&cfg, cell, sc.reps, &spec)?;
        let ok: Vec<&BetaTests> = tests.iter().flatten().collect();
        let mut r = row("size_table", sc, &cfg, Some(sc.alpha), ok.len());
        let fits: Vec<&FitResult> = ok.iter().map(|t| &t.fit).collect();
        fit_summary(&mut r, &fits, &cfg.beta0);
        r.wald_rejection_rate = mean(ok.iter().map(|t| f64::from(u8::from(t.wald.rejects(sc.alpha)))));
        r.lr_rejection_rate = mean(ok.iter().map(|t| f64::from(u8::from(t.lr.rejects(sc.alpha)))));
        rows.push(r);
    }
    Ok(StudyReport { rows, elapsed: start.elapsed() })
}
