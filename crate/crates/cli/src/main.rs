//! `ppvrule`: fit, evaluate, simulate and benchmark PPV-constrained rules.

mod document;
mod error;
mod table;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};

use ppvrule::doolr::{doolr_fit, DoolrConfig, KappaGrid};
use ppvrule::glm::standard_rule;
use ppvrule::harness::{emit_table, evaluate, run_benchmark, BenchmarkConfig, Method, TableFormat};
use ppvrule::itdoolr::{itdoolr_fit, ItConfig};
use ppvrule::plugin::{plugin_fit, PluginEstimator, PluginRule};
use ppvrule::simgen::{ScenarioKind, ScenarioSpec};
use ppvrule::surrogate::SmoothingSpec;
use ppvrule::{Classifier, Dataset, ExternalMode, ExternalRule, FittedRule, Prevalence, SamplingDesign};

use document::{Model, RuleDocument, SCHEMA_VERSION};
use error::CliError;
use table::{read_dataset, write_dataset, Columns};

#[derive(Parser)]
#[command(
    name = "ppvrule",
    version,
    about = "Biomarker rules maximizing TPR under a PPV constraint"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a rule from a CSV file and save it as JSON.
    Fit(FitArgs),
    /// Evaluate a saved rule on a CSV file.
    Evaluate(EvaluateArgs),
    /// Generate a simulated dataset.
    Simulate(SimulateArgs),
    /// Run a replicated simulation benchmark.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Design {
    Cohort,
    CaseControl,
}

impl From<Design> for SamplingDesign {
    fn from(d: Design) -> Self {
        match d {
            Design::Cohort => SamplingDesign::Cohort,
            Design::CaseControl => SamplingDesign::CaseControl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtMode {
    Score,
    Decision,
}

impl From<ExtMode> for ExternalMode {
    fn from(m: ExtMode) -> Self {
        match m {
            ExtMode::Score => ExternalMode::Score,
            ExtMode::Decision => ExternalMode::Decision,
        }
    }
}

#[derive(clap::Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "D")]
    label: String,
    /// Feature columns; defaults to every column except label and external.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    prevalence: f64,
    #[arg(long, value_enum, default_value = "cohort")]
    design: Design,
    /// Column holding the external rule's margin or decision (it-doolr).
    #[arg(long)]
    external: Option<String>,
    #[arg(long, value_enum, default_value = "score")]
    external_mode: ExtMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// `multiplier:N`, `uniform:N[:UPPER]`, or a comma-separated list.
    #[arg(long, value_parser = parse_kappa_grid)]
    kappa_grid: Option<KappaGrid>,
    #[arg(long, value_delimiter = ',')]
    eta_grid: Option<Vec<f64>>,
    /// Fixed smoothing bandwidth instead of the adaptive rule.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    no_standardize: bool,
    /// Neighbours for plugin-knn; defaults to ceil(n^(2/3) / 2).
    #[arg(long)]
    k: Option<usize>,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    rule: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "D")]
    label: String,
    /// Defaults to the prevalence stored in the rule.
    #[arg(long)]
    prevalence: Option<f64>,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_scenario)]
    scenario: ScenarioKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, value_parser = parse_scenario)]
    scenario: ScenarioKind,
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "standard,doolr")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "0.04")]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 2500)]
    n_train: usize,
    #[arg(long, default_value_t = 20_000)]
    n_test: usize,
    #[arg(long, default_value_t = 0.01)]
    prevalence: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_parser = parse_format, default_value = "markdown")]
    format: TableFormat,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_kappa_grid)]
    kappa_grid: Option<KappaGrid>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Grid for the cross-validation fits of it-doolr.
    #[arg(long, value_parser = parse_kappa_grid)]
    cv_kappa_grid: Option<KappaGrid>,
    #[arg(long)]
    cv_restarts: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    eta_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "score")]
    external_mode: ExtMode,
    #[arg(long)]
    k: Option<usize>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: ppvrule::Error| e.to_string())
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: ppvrule::Error| e.to_string())
}

fn parse_kappa_grid(s: &str) -> Result<KappaGrid, String> {
    s.parse().map_err(|e: ppvrule::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<TableFormat, String> {
    s.parse().map_err(|e: ppvrule::Error| e.to_string())
}

/// Successful runs; fits whose constraint could not be met exit with 2.
enum Status {
    Done,
    Infeasible,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Infeasible) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn doolr_config(a: &FitArgs) -> Result<DoolrConfig, CliError> {
    let mut c = DoolrConfig::new(a.alpha);
    c.seed = a.seed;
    c.standardize = !a.no_standardize;
    if let Some(g) = &a.kappa_grid {
        c.kappa_grid = g.clone();
    }
    if let Some(h) = a.h {
        c.smoothing = SmoothingSpec::fixed(h);
        c.smoothing.resolve_fixed()?;
    }
    c.validate()?;
    Ok(c)
}

fn linear_document(a: &FitArgs, data: &Dataset, fit: FittedRule) -> Result<RuleDocument, CliError> {
    let is_smoothed = matches!(a.method, Method::Doolr | Method::ItDoolr);
    let model = Model::Linear(fit.rule);
    Ok(RuleDocument {
        schema_version: SCHEMA_VERSION,
        method: a.method.to_string(),
        feature_names: data.feature_names().to_vec(),
        train_metrics: evaluate(&model, data, Prevalence::new(a.prevalence)?)?,
        model,
        alpha: a.alpha,
        prevalence: a.prevalence,
        kappa_hat: is_smoothed.then_some(fit.kappa_hat),
        lambda_hat: is_smoothed.then_some(fit.lambda_hat),
        h: is_smoothed.then_some(fit.h),
        eta: fit.eta,
        feasible: fit.feasible,
        fit_timestamp: now(),
        seed: a.seed,
    })
}

fn plugin_document(a: &FitArgs, data: &Dataset, fit: PluginRule) -> Result<RuleDocument, CliError> {
    let model = Model::Plugin {
        risk: fit.risk,
        logit_threshold: fit.logit_threshold,
    };
    Ok(RuleDocument {
        schema_version: SCHEMA_VERSION,
        method: a.method.to_string(),
        feature_names: data.feature_names().to_vec(),
        train_metrics: evaluate(&model, data, fit.prev)?,
        model,
        alpha: a.alpha,
        prevalence: a.prevalence,
        kappa_hat: None,
        lambda_hat: Some(fit.lambda_hat),
        h: None,
        eta: None,
        feasible: fit.feasible,
        fit_timestamp: now(),
        seed: a.seed,
    })
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn cmd_fit(a: FitArgs) -> Result<Status, CliError> {
    if a.method == Method::ItDoolr && a.external.is_none() {
        return Err(CliError::Input("it-doolr needs --external <column>".into()));
    }
    if a.method != Method::ItDoolr && a.external.is_some() {
        return Err(CliError::Input("--external applies to it-doolr only".into()));
    }
    let prev = Prevalence::new(a.prevalence)?;
    let cols = Columns {
        label: &a.label,
        features: a.features.as_deref(),
        external: a.external.as_deref(),
    };
    let data = read_dataset(open(&a.data)?, &cols, a.design.into())?;
    let doc = match a.method {
        Method::Standard => linear_document(&a, &data, standard_rule(&data, a.alpha, prev)?)?,
        Method::Doolr => linear_document(&a, &data, doolr_fit(&data, prev, &doolr_config(&a)?)?)?,
        Method::ItDoolr => {
            let external = ExternalRule::from_dataset(&data, a.external_mode.into())?;
            let mut config = ItConfig::new(doolr_config(&a)?);
            if let Some(g) = &a.eta_grid {
                config.eta_grid = g.clone();
            }
            linear_document(&a, &data, itdoolr_fit(&data, &external, prev, &config)?)?
        }
        Method::PluginLogistic => {
            plugin_document(&a, &data, plugin_fit(&data, PluginEstimator::Logistic, a.alpha, prev)?)?
        }
        Method::PluginKnn => plugin_document(&a, &data, plugin_fit(&data, PluginEstimator::Knn(a.k), a.alpha, prev)?)?,
    };
    let mut out = BufWriter::new(File::create(&a.out)?);
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    out.flush()?;
    let m = doc.train_metrics;
    println!(
        "method={} train_tpr={:.4} train_fpr={:.4} train_ppv={:.4} feasible={}",
        doc.method, m.tpr, m.fpr, m.ppv, doc.feasible
    );
    Ok(if doc.feasible { Status::Done } else { Status::Infeasible })
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<Status, CliError> {
    let doc: RuleDocument = serde_json::from_reader(open(&a.rule)?)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(CliError::Input(format!(
            "rule schema version {} is not supported (expected {SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    if doc.model.dim() != doc.feature_names.len() {
        return Err(CliError::Input(
            "rule feature names do not match its coefficients".into(),
        ));
    }
    let prev = Prevalence::new(a.prevalence.unwrap_or(doc.prevalence))?;
    let cols = Columns {
        label: &a.label,
        features: Some(&doc.feature_names),
        external: None,
    };
    let data = read_dataset(open(&a.data)?, &cols, SamplingDesign::Cohort)?;
    let m = evaluate(&doc.model, &data, prev)?;
    println!("tpr,fpr,ppv\n{},{},{}", m.tpr, m.fpr, m.ppv);
    Ok(Status::Done)
}

fn cmd_simulate(a: SimulateArgs) -> Result<Status, CliError> {
    let generated = ScenarioSpec::new(a.scenario, a.n, a.seed).generate()?;
    match a.out {
        Some(p) => write_dataset(BufWriter::new(File::create(p)?), &generated.data)?,
        None => write_dataset(io::stdout().lock(), &generated.data)?,
    }
    Ok(Status::Done)
}

fn cmd_bench(a: BenchArgs) -> Result<Status, CliError> {
    let mut c = BenchmarkConfig::new(a.scenario, a.methods, a.alphas);
    c.reps = a.reps;
    c.n_train = a.n_train;
    c.n_test = a.n_test;
    c.prev = Prevalence::new(a.prevalence)?;
    c.seed = a.seed;
    c.settings.knn_k = a.k;
    c.settings.external_mode = a.external_mode.into();
    if let Some(g) = a.kappa_grid {
        c.settings.doolr.kappa_grid = g;
    }
    if let Some(r) = a.restarts {
        c.settings.doolr.restarts = r;
    }
    c.settings.it = ItConfig::new(c.settings.doolr.clone());
    if let Some(g) = a.eta_grid {
        c.settings.it.eta_grid = g;
    }
    if a.cv_kappa_grid.is_some() || a.cv_restarts.is_some() {
        let mut cv = c.settings.doolr.clone();
        if let Some(g) = a.cv_kappa_grid {
            cv.kappa_grid = g;
        }
        if let Some(r) = a.cv_restarts {
            cv.restarts = r;
        }
        c.settings.it.cv_base = Some(cv);
    }
    let table = run_benchmark(&c)?;
    let text = emit_table(&table, a.format);
    match a.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(Status::Done)
}
