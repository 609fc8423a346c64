//! Replicated simulation benchmarks: generate, fit, evaluate on held-out
//! data, aggregate, and render tables.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::doolr::{doolr_fit, DoolrConfig};
use crate::error::{Error, Result};
use crate::glm::standard_rule;
use crate::itdoolr::{itdoolr_fit, ItConfig};
use crate::plugin::{plugin_fit, PluginEstimator};
use crate::rng::{derive_seed, replicate_seed};
use crate::simgen::{ScenarioKind, ScenarioSpec};
use crate::surrogate::{empirical_rates, ppv};
use crate::types::{Classifier, Dataset, ExternalMode, ExternalRule, Prevalence, RuleMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Standard,
    PluginLogistic,
    PluginKnn,
    Doolr,
    ItDoolr,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Standard,
        Method::PluginLogistic,
        Method::PluginKnn,
        Method::Doolr,
        Method::ItDoolr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::PluginLogistic => "plugin-logistic",
            Self::PluginKnn => "plugin-knn",
            Self::Doolr => "doolr",
            Self::ItDoolr => "it-doolr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// Hard-indicator test metrics with the prevalence-weighted PPV.
pub fn evaluate<C: Classifier + ?Sized>(rule: &C, test: &Dataset, prev: Prevalence) -> Result<RuleMetrics> {
    let (tpr, fpr) = empirical_rates(rule, test)?;
    Ok(RuleMetrics {
        tpr,
        fpr,
        ppv: ppv(tpr, fpr, prev),
    })
}

/// Per-method tuning shared by every replicate. The `alpha` and `seed`
/// fields of the DOOLR configurations are overwritten per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub doolr: DoolrConfig,
    pub it: ItConfig,
    /// kNN neighbourhood size; `None` uses the sample-size default.
    pub knn_k: Option<usize>,
    pub external_mode: ExternalMode,
}

impl Default for MethodSettings {
    fn default() -> Self {
        let doolr = DoolrConfig::new(0.04);
        Self {
            it: ItConfig::new(doolr.clone()),
            doolr,
            knn_k: None,
            external_mode: ExternalMode::Score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Serial,
    /// Replicates on the rayon pool; falls back to serial without the
    /// `parallel` feature.
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub scenario: ScenarioKind,
    pub methods: Vec<Method>,
    pub alphas: Vec<f64>,
    pub reps: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub prev: Prevalence,
    pub seed: u64,
    pub settings: MethodSettings,
    pub execution: Execution,
}

impl BenchmarkConfig {
    pub fn new(scenario: ScenarioKind, methods: Vec<Method>, alphas: Vec<f64>) -> Self {
        Self {
            scenario,
            methods,
            alphas,
            reps: 100,
            n_train: 2500,
            n_test: 20_000,
            prev: Prevalence::new(0.01).expect("valid prevalence"),
            seed: 1,
            settings: MethodSettings::default(),
            execution: Execution::Parallel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.alphas.is_empty() {
            return Err(Error::InvalidParameter(
                "benchmark needs at least one method and one alpha".into(),
            ));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("benchmark needs at least one replicate".into()));
        }
        if self.methods.contains(&Method::ItDoolr) && !matches!(self.scenario, ScenarioKind::External(_)) {
            return Err(Error::InvalidParameter(format!(
                "it-doolr needs an external scenario, got '{}'",
                self.scenario
            )));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {a}")));
            }
        }
        self.settings.doolr.validate()?;
        self.settings.it.validate()
    }
}

/// Provenance stored alongside the aggregated rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub seed: u64,
    pub reps: usize,
    pub n_test: usize,
    pub p1: f64,
    pub bandwidth: String,
    pub kappa_grid: String,
    pub eta_grid: Vec<f64>,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scenario: String,
    pub n: usize,
    pub alpha: f64,
    pub method: Method,
    pub tpr_mean: f64,
    pub tpr_sd: f64,
    pub ppv_mean: f64,
    pub ppv_sd: f64,
    /// Replicates requested.
    pub reps: usize,
    /// Replicates whose fit or evaluation errored; the cell aggregates the rest.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<TableRow>,
    pub metadata: Option<TableMetadata>,
}

impl BenchmarkTable {
    pub fn row(&self, alpha: f64, method: Method) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.alpha == alpha && r.method == method)
    }
}

type Cells = Vec<Option<RuleMetrics>>;

fn run_replicate(config: &BenchmarkConfig, r: usize) -> Cells {
    let seed = replicate_seed(config.seed, r);
    let cells = config.alphas.len() * config.methods.len();
    let train = ScenarioSpec::new(config.scenario, config.n_train, derive_seed(seed, 1)).generate();
    let test = ScenarioSpec::new(config.scenario, config.n_test, derive_seed(seed, 2)).generate();
    let (Ok(train), Ok(test)) = (train, test) else {
        return vec![None; cells];
    };
    let external = train.external.map(|e| match config.settings.external_mode {
        ExternalMode::Score => e,
        ExternalMode::Decision => e.to_decisions(),
    });
    let mut out = Vec::with_capacity(cells);
    for &alpha in &config.alphas {
        for &method in &config.methods {
            let m = fit_and_evaluate(config, method, alpha, seed, &train.data, external.as_ref(), &test.data);
            out.push(m.ok());
        }
    }
    out
}

fn fit_and_evaluate(
    config: &BenchmarkConfig,
    method: Method,
    alpha: f64,
    seed: u64,
    train: &Dataset,
    external: Option<&ExternalRule>,
    test: &Dataset,
) -> Result<RuleMetrics> {
    let prev = config.prev;
    let settings = &config.settings;
    match method {
        Method::Standard => evaluate(&standard_rule(train, alpha, prev)?, test, prev),
        Method::PluginLogistic => evaluate(&plugin_fit(train, PluginEstimator::Logistic, alpha, prev)?, test, prev),
        Method::PluginKnn => evaluate(
            &plugin_fit(train, PluginEstimator::Knn(settings.knn_k), alpha, prev)?,
            test,
            prev,
        ),
        Method::Doolr => {
            let cfg = DoolrConfig {
                alpha,
                seed,
                ..settings.doolr.clone()
            };
            evaluate(&doolr_fit(train, prev, &cfg)?, test, prev)
        }
        Method::ItDoolr => {
            let external = external.ok_or(Error::MissingExternal(0))?;
            let retarget = |c: &DoolrConfig| DoolrConfig {
                alpha,
                seed,
                ..c.clone()
            };
            let cfg = ItConfig {
                base: retarget(&settings.it.base),
                cv_base: settings.it.cv_base.as_ref().map(retarget),
                ..settings.it.clone()
            };
            evaluate(&itdoolr_fit(train, external, prev, &cfg)?, test, prev)
        }
    }
}

#[cfg(feature = "parallel")]
fn run_all(config: &BenchmarkConfig) -> Vec<Cells> {
    use rayon::prelude::*;
    match config.execution {
        Execution::Parallel => (0..config.reps)
            .into_par_iter()
            .map(|r| run_replicate(config, r))
            .collect(),
        Execution::Serial => (0..config.reps).map(|r| run_replicate(config, r)).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_all(config: &BenchmarkConfig) -> Vec<Cells> {
    (0..config.reps).map(|r| run_replicate(config, r)).collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Runs every replicate, fits each method at each `alpha`, and aggregates
/// held-out metrics in replicate order. Infeasible fits are included;
/// errored fits are counted as failures and excluded from the cell.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkTable> {
    config.validate()?;
    let results = run_all(config);
    let mut rows = Vec::with_capacity(config.alphas.len() * config.methods.len());
    let mut cell = 0;
    for &alpha in &config.alphas {
        for &method in &config.methods {
            let ok: Vec<RuleMetrics> = results.iter().filter_map(|rep| rep[cell]).collect();
            let tprs: Vec<f64> = ok.iter().map(|m| m.tpr).collect();
            let ppvs: Vec<f64> = ok.iter().map(|m| m.ppv).collect();
            let (tpr_mean, tpr_sd) = mean_sd(&tprs);
            let (ppv_mean, ppv_sd) = mean_sd(&ppvs);
            rows.push(TableRow {
                scenario: config.scenario.to_string(),
                n: config.n_train,
                alpha,
                method,
                tpr_mean,
                tpr_sd,
                ppv_mean,
                ppv_sd,
                reps: config.reps,
                failures: config.reps - ok.len(),
            });
            cell += 1;
        }
    }
    let s = &config.settings;
    Ok(BenchmarkTable {
        rows,
        metadata: Some(TableMetadata {
            seed: config.seed,
            reps: config.reps,
            n_test: config.n_test,
            p1: config.prev.p1(),
            bandwidth: format!("{:?}", s.doolr.smoothing),
            kappa_grid: format!("{:?}", s.doolr.kappa_grid),
            eta_grid: s.it.eta_grid.clone(),
            restarts: s.doolr.restarts,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            _ => Err(Error::InvalidParameter(format!("unknown table format '{s}'"))),
        }
    }
}

pub const CSV_HEADER: &str = "scenario,n,alpha,method,tpr_mean,tpr_sd,ppv_mean,ppv_sd,reps,failures";

pub fn emit_table(table: &BenchmarkTable, format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in &table.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
                    r.scenario, r.n, r.alpha, r.method, r.tpr_mean, r.tpr_sd, r.ppv_mean, r.ppv_sd, r.reps, r.failures
                );
            }
        }
        TableFormat::Markdown => {
            out.push_str("| scenario | n | alpha | method | TPR | PPV | reps | failures |\n");
            out.push_str("|---|---|---|---|---|---|---|---|\n");
            for r in &table.rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {:.3}({:.3}) | {:.3}({:.3}) | {} | {} |",
                    r.scenario, r.n, r.alpha, r.method, r.tpr_mean, r.tpr_sd, r.ppv_mean, r.ppv_sd, r.reps, r.failures
                );
            }
        }
    }
    out
}

/// Parses the csv produced by [`emit_table`]. Metadata is not carried.
pub fn parse_csv_table(text: &str) -> Result<BenchmarkTable> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::Parse(format!(
                "line {}: expected 10 fields, got {}",
                i + 2,
                f.len()
            )));
        }
        let num = |j: usize| -> Result<f64> {
            f[j].parse()
                .map_err(|_| Error::Parse(format!("line {}: bad number '{}'", i + 2, f[j])))
        };
        let int = |j: usize| -> Result<usize> {
            f[j].parse()
                .map_err(|_| Error::Parse(format!("line {}: bad count '{}'", i + 2, f[j])))
        };
        rows.push(TableRow {
            scenario: f[0].to_string(),
            n: int(1)?,
            alpha: num(2)?,
            method: f[3].parse()?,
            tpr_mean: num(4)?,
            tpr_sd: num(5)?,
            ppv_mean: num(6)?,
            ppv_sd: num(7)?,
            reps: int(8)?,
            failures: int(9)?,
        });
    }
    Ok(BenchmarkTable { rows, metadata: None })
}
