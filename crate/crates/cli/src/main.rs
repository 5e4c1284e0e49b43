use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use dyadnet::dyaddata::{build_design, load_edges, load_nodes, DyadDesign, Network, RegressorTransform};
use dyadnet::estimate::{fit, Family, FitError, FitResult, ModelSpec};
use dyadnet::inference::{spec_test_tu_with, InferenceError};
use dyadnet::montecarlo::{
    run_consistency_study, run_power_curve, run_size_table, sig6, simulate_in_cell, CovariateLaw, DgpConfig,
    StudyConfig, StudyReport,
};
use dyadnet::specfun::unchecked::cdf;

#[derive(Parser)]
#[command(name = "dyadnet", version, about = "Dyadic network-formation models: estimation, specification tests and simulation studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to node and edge CSVs and write a coefficient report.
    Estimate(EstimateArgs),
    /// Boundary LR test of transferable utility (rho = 1).
    SpecTest(SpecTestArgs),
    /// Draw one network from the NTU model and write it as CSV.
    Simulate(SimulateArgs),
    /// Mean NTU estimates over replications per (n, rho0) cell.
    ConsistencyStudy(StudyArgs),
    /// Rejection rates of the TU specification test per (n, rho0) cell.
    PowerCurve(StudyArgs),
    /// Wald and LR sizes for the first coefficient per (n, rho0) cell.
    SizeTable(StudyArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Node CSV: header row, id column first, numeric covariates after.
    #[arg(long)]
    nodes: PathBuf,
    /// Edge CSV of node-id pairs.
    #[arg(long)]
    edges: PathBuf,
    /// Regressor as kind:column[:w_own:w_other]; repeat for each column.
    #[arg(long = "transform", required = true)]
    transforms: Vec<RegressorTransform>,
    /// Parameter box lo:hi, given once for every coefficient or once per coefficient.
    #[arg(long = "theta-bound", value_parser = parse_bound)]
    theta_bounds: Vec<(f64, f64)>,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// tu_probit, tu_logit, ntu_rho0 or ntu_general.
    #[arg(long, default_value = "ntu_general")]
    model: Family,
    /// Hold rho at this value (ntu_general only).
    #[arg(long, allow_hyphen_values = true)]
    rho_fixed: Option<f64>,
}

#[derive(Args)]
struct SpecTestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Run the test on asymmetric regressors anyway; the report carries a caveat.
    #[arg(long)]
    force_asymmetric_spec_test: bool,
}

#[derive(Args)]
struct DgpArgs {
    /// True coefficients, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1", allow_hyphen_values = true)]
    beta: Vec<f64>,
    /// standard_normal, bivariate_normal:cov or node_normal:columns.
    #[arg(long, default_value = "standard_normal")]
    law: CovariateLaw,
    /// Regressors built from node covariates x1, x2, ... (node_normal only).
    #[arg(long = "transform")]
    transforms: Vec<RegressorTransform>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    dgp: DgpArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    rho: f64,
    /// Replication index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    rep: u64,
    /// Output directory for edges.csv plus nodes.csv or dyads.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    dgp: DgpArgs,
    /// Network sizes, comma separated.
    #[arg(long, alias = "n", value_delimiter = ',')]
    n_list: Vec<usize>,
    /// True rho values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rho_grid: Vec<f64>,
    #[arg(long)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_bound(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got '{s}'"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound in '{s}'"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound in '{s}'"))?;
    if !(lo < hi) {
        return Err(format!("need lo < hi, got '{s}'"));
    }
    Ok((lo, hi))
}

/// A failure carrying its exit status.
enum Failure {
    Input(anyhow::Error),
    Model(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

type Run = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::SpecTest(a) => spec_test(a),
        Command::Simulate(a) => simulate(a),
        Command::ConsistencyStudy(a) => study(a, Study::Consistency),
        Command::PowerCurve(a) => study(a, Study::Power),
        Command::SizeTable(a) => study(a, Study::Size),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Model(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn load(data: &DataArgs) -> anyhow::Result<(DyadDesign, Network)> {
    let nodes = load_nodes(&data.nodes)?;
    let net = load_edges(&data.edges, &nodes)?;
    let design = build_design(&nodes, &data.transforms)?;
    Ok((design, net))
}

fn bounds(data: &DataArgs, k: usize) -> anyhow::Result<Option<Vec<(f64, f64)>>> {
    match data.theta_bounds.len() {
        0 => Ok(None),
        1 => Ok(Some(vec![data.theta_bounds[0]; k])),
        m if m == k => Ok(Some(data.theta_bounds.clone())),
        m => bail!("{m} --theta-bound values for {k} coefficients (give one or {k})"),
    }
}

fn fit_error(e: FitError) -> Failure {
    Failure::Input(e.into())
}

fn cell(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

fn estimate(args: EstimateArgs) -> Run {
    let (design, net) = load(&args.data)?;
    let mut spec = ModelSpec::new(args.model).with_transforms(args.data.transforms.clone());
    if let Some(b) = bounds(&args.data, design.k())? {
        spec = spec.with_bounds(b);
    }
    if let Some(r) = args.rho_fixed {
        spec = spec.with_rho_fixed(r);
    }
    let f = fit(&spec, &design, &net).map_err(fit_error)?;
    for note in &f.notes {
        eprintln!("note: {note}");
    }
    write_estimate(&f, args.data.out.as_deref()).map_err(Failure::Input)?;
    if !f.converged {
        let reason = f.failure.map(|r| r.to_string()).unwrap_or_else(|| "no convergence".into());
        return Err(Failure::Model(anyhow!("{reason}")));
    }
    Ok(())
}

fn write_estimate(f: &FitResult, out: Option<&Path>) -> anyhow::Result<()> {
    let mut w = csv_writer(sink(out)?);
    w.write_record(["term", "estimate", "std_error", "z", "p_value"])?;
    let mut terms: Vec<(String, f64)> = f.names.iter().cloned().zip(f.beta_hat.iter().copied()).collect();
    if let Some(r) = f.rho_hat {
        if f.std_errors.len() > f.beta_hat.len() {
            terms.push(("rho".into(), r));
        }
    }
    for (c, (name, est)) in terms.iter().enumerate() {
        let se = f.std_errors.get(c).copied().filter(|s| *s > 0.0);
        let z = se.map(|s| est / s);
        let p = z.map(|z| 2.0 * cdf(-z.abs()));
        w.write_record([name.clone(), sig6(*est), cell(se), cell(z), cell(p)])?;
    }
    let footer = [
        ("loglik", sig6(f.loglik)),
        ("rho_hat", cell(f.rho_hat)),
        ("N", f.n_dyads.to_string()),
        ("identification", f.identification.reason.to_string()),
        ("identified", f.identification.identified.to_string()),
        ("information", f.info_matrix_kind.to_string()),
        ("converged", f.converged.to_string()),
        ("reason", f.failure.map(|r| r.to_string()).unwrap_or_default()),
    ];
    for (key, value) in footer {
        w.write_record([key.to_string(), value, String::new(), String::new(), String::new()])?;
    }
    w.flush()?;
    Ok(())
}

fn spec_test(args: SpecTestArgs) -> Run {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::Input(anyhow!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let (design, net) = load(&args.data)?;
    let mut spec = ModelSpec::new(Family::NtuGeneral);
    if let Some(b) = bounds(&args.data, design.k())? {
        spec = spec.with_bounds(b);
    }
    let out = match spec_test_tu_with(&spec, &design, &net, args.force_asymmetric_spec_test) {
        Ok(out) => out,
        Err(e @ InferenceError::NotConverged(_)) => return Err(Failure::Model(e.into())),
        Err(e) => return Err(Failure::Input(e.into())),
    };
    if let Some(c) = &out.caveat {
        eprintln!("caveat: {c}");
    }
    let t = &out.test;
    let n = design.n_dyads();
    let rows = [
        ("statistic", sig6(t.statistic)),
        ("null_distribution", t.null_dist.to_string()),
        ("p_value", sig6(t.p_value)),
        ("alpha", sig6(args.alpha)),
        ("reject", t.rejects(args.alpha).to_string()),
        ("rho_hat", cell(out.rho_hat())),
        ("loglik_unrestricted", sig6(out.unrestricted.loglik)),
        ("loglik_restricted", sig6(out.restricted.loglik)),
        ("N", n.to_string()),
        ("caveat", out.caveat.clone().unwrap_or_default()),
    ];
    let write = || -> anyhow::Result<()> {
        let mut w = csv_writer(sink(args.data.out.as_deref())?);
        w.write_record(["field", "value"])?;
        for (k, v) in rows {
            w.write_record([k.to_string(), v])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(Failure::Input)
}

fn simulate(args: SimulateArgs) -> Run {
    let cfg = DgpConfig {
        n: args.n,
        beta0: args.dgp.beta.clone(),
        rho0: args.rho,
        covariate_law: args.dgp.law,
        transforms: args.dgp.transforms.clone(),
        master_seed: args.dgp.seed,
    };
    let draw = simulate_in_cell(&cfg, 0, args.rep).map_err(|e| Failure::Input(e.into()))?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let write = || -> anyhow::Result<()> {
        let mut edges = csv_writer(File::create(args.out.join("edges.csv"))?);
        edges.write_record(["from", "to"])?;
        for (i, j) in draw.network.links() {
            edges.write_record([i.to_string(), j.to_string()])?;
        }
        edges.flush()?;
        if let Some(nodes) = &draw.nodes {
            let mut w = csv_writer(File::create(args.out.join("nodes.csv"))?);
            let mut header = vec!["id".to_string()];
            header.extend(nodes.column_names().iter().cloned());
            w.write_record(&header)?;
            for (i, id) in nodes.ids().iter().enumerate() {
                let mut rec = vec![id.clone()];
                rec.extend(nodes.row(i).iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
            w.flush()?;
        } else {
            let d = &draw.design;
            let mut w = csv_writer(File::create(args.out.join("dyads.csv"))?);
            let mut header = vec!["i".to_string(), "j".to_string()];
            header.extend(d.names().iter().map(|c| format!("{c}_ij")));
            header.extend(d.names().iter().map(|c| format!("{c}_ji")));
            header.push("y".into());
            w.write_record(&header)?;
            let y = draw.network.outcomes(d);
            for (idx, &(i, j)) in d.dyads().iter().enumerate() {
                let mut rec = vec![i.to_string(), j.to_string()];
                rec.extend(d.w_ij(idx).iter().map(|v| v.to_string()));
                rec.extend(d.w_ji(idx).iter().map(|v| v.to_string()));
                rec.push(u8::from(y[idx]).to_string());
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        Ok(())
    };
    write().map_err(Failure::Input)?;
    eprintln!(
        "{} nodes, {} dyads, {} links written to {}",
        args.n,
        draw.design.n_dyads(),
        draw.network.n_links(),
        args.out.display()
    );
    Ok(())
}

#[derive(Clone, Copy)]
enum Study {
    Consistency,
    Power,
    Size,
}

fn study(args: StudyArgs, kind: Study) -> Run {
    let (n_default, rho_default): (&[usize], &[f64]) = match kind {
        Study::Consistency => (&[200], &[-0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8]),
        Study::Power => (&[10, 20, 50], &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
        Study::Size => (&[200], &[0.0, 0.2, 0.4, 0.6, 0.8]),
    };
    let pick = |given: &[f64], default: &[f64]| if given.is_empty() { default.to_vec() } else { given.to_vec() };
    let sc = StudyConfig {
        n_list: if args.n_list.is_empty() { n_default.to_vec() } else { args.n_list.clone() },
        rho_grid: pick(&args.rho_grid, rho_default),
        reps: args.reps,
        alpha: args.alpha,
        beta0: args.dgp.beta.clone(),
        covariate_law: args.dgp.law,
        transforms: args.dgp.transforms.clone(),
        master_seed: args.dgp.seed,
    };
    let report: StudyReport = match kind {
        Study::Consistency => run_consistency_study(&sc),
        Study::Power => run_power_curve(&sc),
        Study::Size => run_size_table(&sc),
    }
    .map_err(|e| Failure::Input(e.into()))?;
    let mut out = sink(args.out.as_deref())?;
    report.write_csv(&mut out).map_err(|e| Failure::Input(e.into()))?;
    out.flush().context("cannot write report")?;
    let failed: usize = report.rows.iter().map(|r| r.failed()).sum();
    eprintln!(
        "{} cells, {} replications each, {failed} failed fits, {:.1?}",
        report.rows.len(),
        sc.reps,
        report.elapsed
    );
    Ok(())
}
