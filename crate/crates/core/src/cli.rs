//! Command-line driver behind the `netensemble` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::{
    check_identifiability, density_error_summary, heterogeneity_sd, pearson_residual, residual_regression,
    score_test_dataset, score_test_omnibus, size_anova, DiagnosticsError, IdentifiabilityReport, NullDirection, Scope,
};
use crate::diagnostics::identify::DEFAULT_REL_TOL;
use crate::inference::mcmc::sample_networks;
use crate::inference::{conditional_expectation_table, enumerate_states, fit_mle, InferenceError};
use crate::io::report::{density_table, residual_table, sd_table, tests_table, Table, TestRow};
use crate::io::{
    coefficient_table, load_ensemble, load_params, write_csv, write_ensemble, EnsembleData, FitReport, IoError,
    ModelConfig, ModelSetup,
};
use crate::model::{Ensemble, ModelError, ParamMatrix};
use crate::seed::{self, Purpose};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NONIDENTIFIABLE: i32 = 4;
pub const EXIT_NONCONVERGENCE: i32 = 5;
pub const EXIT_INFINITE_MLE: i32 = 6;
pub const EXIT_SINGULAR: i32 = 7;

#[derive(Debug, Parser)]
#[command(name = "netensemble", version, about = "Fit and check ERGMs on ensembles of small networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON-lines ensemble file.
    #[arg(long, env = "NETENSEMBLE_ENSEMBLE")]
    pub ensemble: PathBuf,
    /// TOML model configuration.
    #[arg(long, env = "NETENSEMBLE_MODEL")]
    pub model: PathBuf,
    /// Overrides `estimation.seed`.
    #[arg(long, env = "NETENSEMBLE_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "NETENSEMBLE_OUT", default_value = ".")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "NETENSEMBLE_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Maximum number of dyads to enumerate exactly.
    #[arg(long, env = "NETENSEMBLE_ENUM_CAP")]
    pub enum_cap: Option<usize>,
    /// Coefficients from an earlier `fit.json`.
    #[arg(long, env = "NETENSEMBLE_PARAMS")]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximum likelihood fit; writes fit.json and summary.txt.
    Fit(Common),
    /// Draws fully observed ensembles from the model.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "NETENSEMBLE_REPLICATES", default_value_t = 1)]
        replicates: usize,
    },
    /// Residuals, residual tests and score tests; fits first without --params.
    Diagnose(Common),
    /// Complete-data versus Fisher information rank check.
    Identify(Common),
    /// Simulation score tests for the configured score targets.
    Scoretest(Common),
    /// Exact state and conditional-expectation tables.
    Enumerate(Common),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("nonidentifiable: {0}")]
    Nonidentifiable(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{0}")]
    InfiniteMle(String),
    #[error("singular: {0}")]
    Singular(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Nonidentifiable(_) => EXIT_NONIDENTIFIABLE,
            CliError::NonConvergence(_) => EXIT_NONCONVERGENCE,
            CliError::InfiniteMle(_) => EXIT_INFINITE_MLE,
            CliError::Singular(_) => EXIT_SINGULAR,
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        let msg = e.to_string();
        match e {
            InferenceError::EnumerationCap { .. } | InferenceError::Config(_) => CliError::Config(msg),
            InferenceError::NonConvergence { .. } => CliError::NonConvergence(msg),
            InferenceError::InfiniteMle { .. } => CliError::InfiniteMle(msg),
            InferenceError::Nonidentifiable(_) => CliError::Nonidentifiable(msg),
            InferenceError::Model(_) | InferenceError::Stats(_) => CliError::Data(msg),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        let msg = e.to_string();
        match e {
            DiagnosticsError::Inference(i) => i.into(),
            DiagnosticsError::Plan(_) | DiagnosticsError::UnsupportedStatistic { .. } => CliError::Config(msg),
            DiagnosticsError::SingularDesign(_) | DiagnosticsError::SingularCovariance(_) => CliError::Singular(msg),
            DiagnosticsError::TooFew(_) | DiagnosticsError::Model(_) | DiagnosticsError::Stats(_) => {
                CliError::Data(msg)
            }
        }
    }
}

/// Files written and the human-readable summary of a successful run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Ctx {
    data: EnsembleData,
    setup: ModelSetup,
    common: Common,
    files: Vec<PathBuf>,
}

impl Ctx {
    fn load(common: &Common) -> Result<Self, CliError> {
        let data = load_ensemble(&common.ensemble)?;
        let cfg = ModelConfig::load(&common.model)?;
        let mut setup = cfg.build(&data)?;
        if let Some(s) = common.seed {
            setup.set_seed(s);
        }
        if let Some(c) = common.enum_cap {
            if c > 30 {
                return Err(CliError::Config(format!("--enum-cap {c} is above the supported maximum of 30")));
            }
            setup.set_enum_cap(c);
        }
        fs::create_dir_all(&common.out).map_err(|e| IoError::io(&common.out, e))?;
        Ok(Ctx { data, setup, common: common.clone(), files: Vec::new() })
    }

    fn ens(&self) -> &Ensemble {
        &self.setup.ensemble
    }

    fn path(&self, name: &str) -> PathBuf {
        self.common.out.join(name)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| IoError::io(&p, e))?;
        self.files.push(p);
        Ok(())
    }

    fn write_table(&mut self, name: &str, t: &Table) -> Result<(), CliError> {
        let p = self.path(name);
        write_csv(&p, t)?;
        self.files.push(p);
        Ok(())
    }

    /// `--params` when given, else the configured template (zeros plus offsets).
    fn params_or_template(&self) -> Result<ParamMatrix, CliError> {
        match &self.common.params {
            Some(p) => Ok(load_params(p, self.ens(), &self.setup.template)?),
            None => Ok(self.setup.template.clone()),
        }
    }

    fn finish(self, summary: String) -> Outcome {
        Outcome { files: self.files, summary }
    }
}

fn fmt_null(dirs: &[NullDirection]) -> String {
    let mut s = String::new();
    for d in dirs {
        let _ = write!(s, "\n  eigenvalue {:.3e}:", d.eigenvalue);
        for (name, w) in &d.loadings {
            if w.abs() > 1e-6 {
                let _ = write!(s, " {w:+.4}·{name}");
            }
        }
    }
    s
}

fn identify_text(r: &IdentifiabilityReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "coordinates: {}", r.coordinates.join(", "));
    let _ = writeln!(s, "complete-data det {:.6e}, eigenvalues {:?}", r.complete_det, r.complete_eigenvalues);
    let _ = writeln!(s, "fisher det {:.6e}, eigenvalues {:?}", r.fisher_det, r.fisher_eigenvalues);
    let _ = writeln!(s, "status: {}", r.cause.as_str());
    if !r.complete_null.is_empty() {
        let _ = writeln!(s, "complete-data null directions:{}", fmt_null(&r.complete_null));
    }
    if !r.fisher_null.is_empty() {
        let _ = writeln!(s, "fisher null directions:{}", fmt_null(&r.fisher_null));
    }
    s
}

fn identify_json(r: &IdentifiabilityReport) -> String {
    let nulls = |d: &[NullDirection]| {
        d.iter()
            .map(|n| serde_json::json!({"eigenvalue": n.eigenvalue, "loadings": n.loadings}))
            .collect::<Vec<_>>()
    };
    let v = serde_json::json!({
        "status": r.cause.as_str(),
        "coordinates": r.coordinates,
        "rel_tol": r.rel_tol,
        "complete_det": r.complete_det,
        "fisher_det": r.fisher_det,
        "complete_eigenvalues": r.complete_eigenvalues,
        "fisher_eigenvalues": r.fisher_eigenvalues,
        "complete_null": nulls(&r.complete_null),
        "fisher_null": nulls(&r.fisher_null),
    });
    let mut s = serde_json::to_string_pretty(&v).expect("json value");
    s.push('\n');
    s
}

fn identify_or_fail(ctx: &Ctx, b: &ParamMatrix) -> Result<IdentifiabilityReport, CliError> {
    let r = check_identifiability(ctx.ens(), b, &ctx.setup.fit.inference, DEFAULT_REL_TOL)?;
    if !r.is_identified() {
        return Err(CliError::Nonidentifiable(format!("{}\n{}", r.cause.as_str(), identify_text(&r))));
    }
    Ok(r)
}

/// Fits, writing `fit.json` and `summary.txt`. An exact identifiability
/// check runs first whenever every network is small enough to enumerate.
fn do_fit(ctx: &mut Ctx) -> Result<(ParamMatrix, String), CliError> {
    let cap = ctx.setup.fit.inference.cap();
    if ctx.ens().networks().iter().all(|n| n.num_dyads() <= cap) {
        identify_or_fail(ctx, &ctx.setup.template)?;
    }
    let fit = fit_mle(ctx.ens(), &ctx.setup.template, &ctx.setup.fit)?;
    if !fit.converged {
        return Err(CliError::NonConvergence(format!(
            "Monte Carlo Newton did not converge in {} iterations (score norm {:.3e})",
            fit.iterations, fit.score_norm
        )));
    }
    let report = FitReport::new(&fit, ctx.ens());
    let table = coefficient_table(&report);
    ctx.write_text("fit.json", &report.to_json())?;
    ctx.write_text("summary.txt", &table)?;
    Ok((fit.params, table))
}

fn cmd_fit(mut ctx: Ctx) -> Result<Outcome, CliError> {
    let (_, table) = do_fit(&mut ctx)?;
    Ok(ctx.finish(table))
}

fn cmd_identify(mut ctx: Ctx) -> Result<Outcome, CliError> {
    let b = ctx.params_or_template()?;
    let r = identify_or_fail(&ctx, &b)?;
    ctx.write_text("identify.json", &identify_json(&r))?;
    let text = identify_text(&r);
    Ok(ctx.finish(text))
}

fn cmd_simulate(mut ctx: Ctx, replicates: usize) -> Result<Outcome, CliError> {
    if replicates == 0 {
        return Err(CliError::Config("--replicates must be positive".into()));
    }
    let b = ctx.params_or_template()?;
    let ens = ctx.ens();
    let seed = ctx.setup.fit.inference.seed;
    let sampler = ctx.setup.fit.inference.sampler;
    let draws: Vec<Vec<_>> = (0..ens.len())
        .into_par_iter()
        .map(|s| {
            let mut net = ens.network(s).clone();
            net.clear_missing();
            let theta: Vec<f64> = ens.theta(&b, s)?.iter().copied().collect();
            let prepared = ens.spec().prepare(&net).map_err(ModelError::from)?;
            let rng = seed::stream(seed, net.id(), Purpose::Simulate, 0);
            Ok(sample_networks(&net, &prepared, &theta, false, replicates, rng, &sampler))
        })
        .collect::<Result<_, CliError>>()?;
    let mut summary = String::new();
    for r in 0..replicates {
        let nets: Vec<_> = draws.iter().map(|d| d[r].clone()).collect();
        let edges: usize = nets.iter().map(|n| n.edge_count()).sum();
        let dyads: usize = nets.iter().map(|n| n.num_dyads()).sum();
        let name = if replicates == 1 { "simulated.jsonl".to_string() } else { format!("simulated_{:04}.jsonl", r + 1) };
        let p = ctx.path(&name);
        write_ensemble(&p, &ctx.data.with_networks(nets))?;
        ctx.files.push(p);
        let _ = writeln!(summary, "{name}: {} networks, density {:.4}", draws.len(), edges as f64 / dyads.max(1) as f64);
    }
    Ok(ctx.finish(summary))
}

fn score_rows(ctx: &Ctx, b: &ParamMatrix) -> Result<Vec<TestRow>, CliError> {
    let plan = &ctx.setup.diagnostics;
    let opts = &ctx.setup.fit.inference;
    let seed = opts.seed;
    let mut rows = Vec::new();
    let subsets: Vec<Vec<usize>> = plan.score_targets.iter().map(|t| t.subset(ctx.ens())).collect();
    for (t, sub) in plan.score_targets.iter().zip(&subsets) {
        let r = score_test_dataset(ctx.ens(), b, &t.target, sub, plan.score_draws, seed, opts)?;
        rows.push(TestRow::Score(r));
    }
    if plan.omnibus && plan.score_targets.len() > 1 {
        let targets: Vec<_> = plan.score_targets.iter().map(|t| t.target.clone()).collect();
        let r = score_test_omnibus(ctx.ens(), b, &targets, &subsets, plan.score_draws, seed, opts)?;
        rows.push(TestRow::Omnibus(r));
    }
    Ok(rows)
}

fn tests_summary(rows: &[TestRow]) -> String {
    let mut s = String::new();
    for row in rows {
        let (name, target, p) = match row {
            TestRow::Regression { target, report, .. } => ("residual regression", target.clone(), report.p),
            TestRow::SizeAnova { target, report } => ("size ANOVA", target.clone(), report.p),
            TestRow::Score(r) => ("score test", r.target.clone(), r.p),
            TestRow::Omnibus(r) => ("omnibus score test", r.targets.join("+"), r.p),
        };
        let _ = writeln!(s, "{name:<20} {target:<24} p = {p:.4} {}", crate::io::significance_stars(p));
    }
    s
}

fn cmd_diagnose(mut ctx: Ctx) -> Result<Outcome, CliError> {
    let (b, mut summary) = match &ctx.common.params {
        Some(_) => (ctx.params_or_template()?, String::new()),
        None => do_fit(&mut ctx)?,
    };
    let plan = ctx.setup.diagnostics.clone();
    let opts = ctx.setup.fit.inference.clone();
    let ens = ctx.ens().clone();
    let mut all = Vec::new();
    let mut tests = Vec::new();
    let mut sds = Vec::new();
    let sizes: Vec<usize> = ens.networks().iter().map(|n| n.n()).collect();
    let groups: Vec<String> = (0..ens.len()).map(|s| ens.tag_group(s)).collect();
    for target in &plan.targets {
        let recs = pearson_residual(&ens, &b, target, &plan.nested, &opts)?;
        if target.scope == Scope::PerNetwork {
            if !plan.candidates.is_empty() {
                let cols: Vec<Vec<f64>> = plan.candidates.iter().map(|(_, v)| v.clone()).collect();
                let names: Vec<&str> = plan.candidates.iter().map(|(n, _)| n.as_str()).collect();
                let report = residual_regression(&recs, &cols)?;
                tests.push(TestRow::Regression { target: target.name.clone(), candidates: names.join(";"), report });
            }
            if plan.size_anova {
                tests.push(TestRow::SizeAnova { target: target.name.clone(), report: size_anova(&recs, &sizes)? });
            }
            sds.push((target.name.clone(), heterogeneity_sd(&recs, &groups)?));
        }
        all.extend(recs);
    }
    let density = density_error_summary(&ens, &b, &plan.nested, &opts)?;
    tests.extend(score_rows(&ctx, &b)?);
    ctx.write_table("residuals.csv", &residual_table(&all))?;
    ctx.write_table("density_errors.csv", &density_table(&density))?;
    ctx.write_table("sd_table.csv", &sd_table(&sds))?;
    ctx.write_table("tests.csv", &tests_table(&tests))?;
    summary.push_str(&tests_summary(&tests));
    Ok(ctx.finish(summary))
}

fn cmd_scoretest(mut ctx: Ctx) -> Result<Outcome, CliError> {
    if ctx.setup.diagnostics.score_targets.is_empty() {
        return Err(CliError::Config("no [[diagnostics.score_targets]] configured".into()));
    }
    let b = ctx.params_or_template()?;
    let rows = score_rows(&ctx, &b)?;
    ctx.write_table("tests.csv", &tests_table(&rows))?;
    let s = tests_summary(&rows);
    Ok(ctx.finish(s))
}

fn cmd_enumerate(mut ctx: Ctx) -> Result<Outcome, CliError> {
    let b = ctx.params_or_template()?;
    let cap = ctx.setup.fit.inference.enum_cap;
    let ens = ctx.ens().clone();
    let names = ens.spec().names();
    let mut states = Table {
        header: ["net_id", "state", "edges_present"].iter().map(|s| s.to_string()).chain(names.iter().cloned()).collect(),
        rows: Vec::new(),
    };
    let mut cond = Table {
        header: ["net_id", "pattern", "prob"].iter().map(|s| s.to_string()).chain(names.iter().cloned()).collect(),
        rows: Vec::new(),
    };
    let mut text = String::new();
    for (s, net) in ens.networks().iter().enumerate() {
        let t = enumerate_states(net, ens.spec(), false, cap)?;
        let _ = writeln!(text, "network {} ({} states)", net.id(), t.states.len());
        let _ = writeln!(text, "  {:<24} {}", "edges", names.join(" "));
        for (k, (code, g)) in t.states.iter().enumerate() {
            let present: Vec<String> =
                t.dyads.iter().zip(t.bits(*code)).filter(|(_, b)| *b).map(|(d, _)| format!("{}-{}", d.i, d.j)).collect();
            let g: Vec<String> = g.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(text, "  {:<24} {}", format!("{{{}}}", present.join(",")), g.join(" "));
            let mut row = vec![net.id().to_string(), (k + 1).to_string(), present.join(";")];
            row.extend(g);
            states.rows.push(row);
        }
        if !net.is_fully_observed() {
            let theta: Vec<f64> = ens.theta(&b, s)?.iter().copied().collect();
            let (obs, rows) = conditional_expectation_table(net, ens.spec(), &theta, cap)?;
            let _ = writeln!(text, "  conditional expectations given the observed dyads");
            for r in rows {
                let pattern: Vec<String> = obs
                    .iter()
                    .zip(&r.observed_values)
                    .map(|(d, &v)| format!("{}-{}={}", d.i, d.j, u8::from(v)))
                    .collect();
                let mean: Vec<String> = r.mean.iter().map(|v| format!("{v}")).collect();
                let _ = writeln!(text, "  {:<24} p={} mean=({})", pattern.join(","), r.prob, mean.join(", "));
                let mut row = vec![net.id().to_string(), pattern.join(";"), format!("{}", r.prob)];
                row.extend(mean);
                cond.rows.push(row);
            }
        }
    }
    ctx.write_table("enumerate_states.csv", &states)?;
    if !cond.rows.is_empty() {
        ctx.write_table("enumerate_conditional.csv", &cond)?;
    }
    Ok(ctx.finish(text))
}

/// Runs a parsed command on a dedicated thread pool.
pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let common = match &cli.command {
        Command::Fit(c)
        | Command::Diagnose(c)
        | Command::Identify(c)
        | Command::Scoretest(c)
        | Command::Enumerate(c) => c,
        Command::Simulate { common, .. } => common,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    pool.install(|| {
        let ctx = Ctx::load(common)?;
        match &cli.command {
            Command::Fit(_) => cmd_fit(ctx),
            Command::Simulate { replicates, .. } => cmd_simulate(ctx, *replicates),
            Command::Diagnose(_) => cmd_diagnose(ctx),
            Command::Identify(_) => cmd_identify(ctx),
            Command::Scoretest(_) => cmd_scoretest(ctx),
            Command::Enumerate(_) => cmd_enumerate(ctx),
        }
    })
}

/// Parses and runs without printing; a parse failure is a config error.
pub fn run_args<I, T>(args: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    run(cli)
}

/// Parses `args`, runs, prints the summary or the error and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{}", out.summary);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
