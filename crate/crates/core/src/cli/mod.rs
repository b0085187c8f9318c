//! Command-line front end: `simulate`, `fit`, `truth`, and `bench`.

pub mod bench;
pub mod config;
pub mod io;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::estimators::{
    run_pipeline, EstimatorChoice, EstimatorKind, PipelineOptions, PipelineSpecs, SolverKind,
};
use crate::model::{ModelSpec, Target};
use crate::simgen::{marginal_truth, run_replicates, Method, ReplicateEstimator};
pub use bench::{run_bench, BenchConfig, BenchReport};
pub use config::RunConfig;
pub use io::{export_csv, ingest_csv, read_csv, write_csv};
use report::Provenance;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const CONVERGENCE: i32 = 3;
    pub const CONFIG: i32 = 4;
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } => exit::PARSE,
        Error::Divergence { .. }
        | Error::Separation { .. }
        | Error::Positivity { .. }
        | Error::InfeasibleCorrelation { .. }
        | Error::AllChainsDiverged { .. }
        | Error::Inference { .. }
        | Error::Singular { .. }
        | Error::Overflow { .. } => exit::CONVERGENCE,
        Error::Config(_) => exit::CONFIG,
        _ => exit::OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gee2",
    version,
    about = "GEE2, IPW-GEE2, and DR-GEE2 for clustered binary outcomes"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for replicates and chains.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replicate study against the quadrature truth.
    Simulate(SimulateArgs),
    /// Fit one estimator to a long-format CSV.
    Fit(FitArgs),
    /// Marginal treatment-model parameters implied by the generating design.
    Truth(TruthArgs),
    /// Per-iteration timing over a grid of cluster sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Cc,
    G1,
    G2,
    Dr,
}

impl From<KindArg> for EstimatorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Cc => EstimatorKind::CompleteCase,
            KindArg::G1 => EstimatorKind::IpwG1,
            KindArg::G2 => EstimatorKind::IpwG2,
            KindArg::Dr => EstimatorKind::DoublyRobust,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Full,
    Stochastic,
    Parallel,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Full => SolverKind::Deterministic,
            SolverArg::Stochastic => SolverKind::Stochastic,
            SolverArg::Parallel => SolverKind::ParallelStochastic,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SamplingArgs {
    /// Subsampling proportion.
    #[arg(long)]
    pub pi_s: Option<f64>,
    /// Iterations of the propensity and outcome stages.
    #[arg(long)]
    pub omega_nuisance: Option<usize>,
    /// Iterations of the treatment stage.
    #[arg(long)]
    pub omega_tm: Option<usize>,
    /// Parallel chains.
    #[arg(long)]
    pub chains: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Repeat to select several.
    #[arg(long, value_enum)]
    pub estimator: Vec<KindArg>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub size_min: Option<usize>,
    #[arg(long)]
    pub size_max: Option<usize>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Long-format CSV (cluster_id, treat, y, z1.., x1..).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub estimator: Option<KindArg>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long)]
    pub p_a: Option<f64>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Parzen,
    RandomIntercept,
}

#[derive(Debug, Clone, Args)]
pub struct TruthArgs {
    /// Outcome generator; the configuration's by default.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub repetitions: Option<usize>,
}

impl SamplingArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let plan = &mut cfg.sampling;
        if let Some(v) = self.pi_s {
            plan.pi_s = v;
        }
        if let Some(v) = self.omega_nuisance {
            plan.omega_nuisance = v;
        }
        if let Some(v) = self.omega_tm {
            plan.omega_tm = v;
        }
        if let Some(v) = self.chains {
            plan.chains = v;
        }
    }
}

/// Loads the configuration and applies global and subcommand overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cli.output.is_some() {
        cfg.output = cli.output.clone();
    }
    cfg.apply_seed();
    match &cli.command {
        Command::Simulate(a) => {
            if let Some(v) = a.replicates {
                cfg.simulate.replicates = v;
            }
            if !a.estimator.is_empty() {
                cfg.simulate.estimators = a.estimator.iter().map(|&k| k.into()).collect();
            }
            if let Some(s) = a.solver {
                cfg.simulate.solver = s.into();
            }
            let g = &mut cfg.generation;
            if let Some(v) = a.clusters {
                g.n_clusters = v;
            }
            if let Some(v) = a.size_min {
                g.size_min = v;
            }
            if let Some(v) = a.size_max {
                g.size_max = v;
            }
            a.sampling.apply(&mut cfg);
        }
        Command::Fit(a) => {
            if a.input.is_some() {
                cfg.fit.input = a.input.clone();
            }
            if let Some(k) = a.estimator {
                cfg.fit.estimator = k.into();
            }
            if let Some(s) = a.solver {
                cfg.fit.solver = s.into();
            }
            if a.p_a.is_some() {
                cfg.fit.p_a = a.p_a;
            }
            a.sampling.apply(&mut cfg);
        }
        Command::Truth(a) => match a.method {
            Some(MethodArg::Parzen) => cfg.generation.outcome.method = Method::Parzen,
            Some(MethodArg::RandomIntercept) => {
                cfg.generation.outcome.method = Method::random_intercept()
            }
            None => {}
        },
        Command::Bench(a) => {
            if let Some(s) = &a.sizes {
                cfg.bench.sizes = s.clone();
            }
            if let Some(r) = a.repetitions {
                cfg.bench.repetitions = r;
            }
        }
    }
    if cfg.threads == Some(0) {
        return Err(Error::Config("--threads must be positive".into()));
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    Ok(fs::File::create(dir.join(name))?)
}

fn method_label(method: &Method) -> &'static str {
    match method {
        Method::Parzen => "parzen",
        Method::RandomIntercept { .. } => "random-intercept",
    }
}

pub fn truth_command(cfg: &RunConfig) -> Result<report::TruthReport> {
    let truth = marginal_truth(&cfg.generation)?;
    let prov = Provenance::new("truth", cfg.generation.seed, cfg)?;
    Ok(report::truth_report(
        method_label(&cfg.generation.outcome.method),
        &truth,
        prov,
    ))
}

fn options(cfg: &RunConfig, sandwich: bool) -> Result<PipelineOptions> {
    cfg.sampling.validate()?;
    Ok(PipelineOptions {
        controls: cfg.controls,
        plan: cfg.sampling.clone(),
        sandwich,
        ..PipelineOptions::default()
    })
}

pub fn simulate_command(
    cfg: &RunConfig,
) -> Result<(crate::simgen::ReplicateSummary, report::SummaryReport)> {
    let mut gen = cfg.generation.clone();
    if cfg.simulate.complete_data {
        gen.missingness = None;
    }
    gen.validate()?;
    if cfg.simulate.replicates == 0 || cfg.simulate.estimators.is_empty() {
        return Err(Error::Config(
            "simulate needs replicates and at least one estimator".into(),
        ));
    }
    let truth = marginal_truth(&gen)?.as_array();
    let s = &cfg.simulate;
    let mut estimators = Vec::new();
    for &kind in &s.estimators {
        estimators.push(ReplicateEstimator::new(&gen, kind, s.solver)?.with_sandwich(s.sandwich));
    }
    if s.misspecified_dr && s.estimators.contains(&EstimatorKind::DoublyRobust) {
        estimators.push(
            ReplicateEstimator::new(&gen, EstimatorKind::DoublyRobust, s.solver)?
                .with_misspecified_psm(&gen)?
                .with_sandwich(s.sandwich),
        );
    }
    let summary = run_replicates(
        &gen,
        truth,
        &estimators,
        s.replicates,
        &options(cfg, false)?,
    )?;
    let prov = Provenance::new("simulate", gen.seed, cfg)?;
    let rep = report::summary_report(&summary, prov);
    Ok((summary, rep))
}

pub fn fit_command(cfg: &RunConfig) -> Result<report::FitReport> {
    let input =
        cfg.fit.input.as_ref().ok_or_else(|| {
            Error::Config("fit needs an input CSV (--input or [fit] input)".into())
        })?;
    let mut data = ingest_csv(input)?;
    if let Some(p) = cfg.fit.p_a {
        data = data.with_p_a(p).map_err(|e| Error::Config(e.to_string()))?;
    }
    let kind = cfg.fit.estimator;
    let (q, m) = (data.n_z(), data.n_x());
    let specs = PipelineSpecs {
        tm: ModelSpec::canonical_tm(),
        psm: kind
            .needs_psm()
            .then(|| cfg.fit.psm.resolve(Target::Propensity, q, m))
            .transpose()?,
        om: kind
            .needs_om()
            .then(|| cfg.fit.om.resolve(Target::Outcome, q, m))
            .transpose()?,
    };
    let choice = EstimatorChoice::new(kind, cfg.fit.solver);
    let fit = run_pipeline(&data, &specs, choice, &options(cfg, cfg.fit.sandwich)?)
        .map_err(|f| f.into_error())?;
    let prov = Provenance::new("fit", cfg.sampling.seed, cfg)?;
    Ok(report::fit_report(&data, &specs, &fit, prov))
}

pub fn bench_command(cfg: &RunConfig) -> Result<BenchReport> {
    run_bench(&cfg.bench)
}

/// Parses `args`, runs the subcommand, and writes its files. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::CONFIG
            } else {
                exit::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    let work = || -> Result<()> {
        let dir = output_dir(&cfg)?;
        match &cli.command {
            Command::Truth(_) => {
                let rep = truth_command(&cfg)?;
                report::write_json(&rep, create(&dir, "truth.json")?)?;
                println!(
                    "beta0* {:.4}  betaA* {:.4}  alpha0* {:.4}  alphaA* {:.4}",
                    rep.beta0, rep.beta_a, rep.alpha0, rep.alpha_a
                );
            }
            Command::Simulate(_) => {
                let (summary, rep) = simulate_command(&cfg)?;
                report::write_summary_csv(&summary, create(&dir, "summary.csv")?)?;
                report::write_json(&rep, create(&dir, "summary.json")?)?;
                for row in &summary.rows {
                    println!(
                        "{:<32} converged {:>4}/{:<4} wald {:?}",
                        row.name,
                        row.converged,
                        row.replicates,
                        row.wald.map(|w| (w * 100.0).round() / 100.0)
                    );
                }
            }
            Command::Fit(_) => {
                let rep = fit_command(&cfg)?;
                report::write_json(&rep, create(&dir, "report.json")?)?;
                for p in &rep.tm.parameters {
                    println!("{:<24} {:>10.4} se {:?}", p.name, p.estimate, p.se);
                }
                println!(
                    "ICC control {:.3}  treatment {:.3}",
                    rep.icc.control, rep.icc.treatment
                );
            }
            Command::Bench(_) => {
                let rep = bench_command(&cfg)?;
                report::write_bench_csv(&rep, create(&dir, "bench.csv")?)?;
                report::write_slopes_csv(&rep, create(&dir, "bench_slopes.csv")?)?;
                for s in &rep.slopes {
                    println!(
                        "{:<28} {:<10} {:<7} slope {:.2}",
                        s.structure, s.solver, s.portion, s.slope
                    );
                }
            }
        }
        Ok(())
    };
    match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    }
}
