//! Seeded generators for the simulation scenarios. Every scenario targets a
//! disease prevalence near 1%.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::sigmoid;
use crate::rng::{derive_seed, stream};
use crate::types::{Dataset, ExternalMode, ExternalRule, LabeledSample, SamplingDesign};

/// `(b0, b1, b2)` of the linear-logistic cohort.
pub const LINEAR_BETA: [f64; 3] = [-8.7, 2.4, 2.4];
/// `(b0, b1, b2)` of the cohort behind the nested case-control design.
pub const NESTED_BETA: [f64; 3] = [-8.0, 2.1, 2.1];
/// Intercept and slopes of the piecewise-linear latent score.
pub const PIECEWISE_BETA: [f64; 3] = [-8.9, 2.0, 2.0];
/// `(b0, b1, b2, b3)` on `(1, sin x1, x2^2, cos x3)`.
pub const NONLINEAR_BETA: [f64; 4] = [-8.6, 5.0, -4.0, 3.0];
/// Standard normal 2.5% quantile.
pub const X2_LOWER_QUANTILE: f64 = -1.959_963_984_540_054;
/// Fraction of `n` relabeled as cases inside the low-`x2` tail.
pub const PIECEWISE_TAIL_CASE_RATE: f64 = 0.004;
/// Contaminated controls appended per nominal row.
pub const CONTAMINATION_RATE: f64 = 0.06;
pub const CONTAMINATION_POINT: [f64; 2] = [6.0, 6.0];
/// Cohort size simulated before nested case-control sampling.
pub const NESTED_COHORT_SIZE: usize = 1_000_000;
pub const CONTROLS_PER_CASE: usize = 20;
/// Share of the population the calibrated external rules flag.
pub const EXTERNAL_FLAG_RATE: f64 = 0.2;

/// Misspecification level of the published model behind the external signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExternalScenario {
    /// The published model is the data-generating model.
    I,
    /// Omits the `x2` and `x3` terms.
    II,
    /// Badly misspecified.
    III,
}

impl ExternalScenario {
    /// Published coefficients on `(1, sin x1, x2^2, cos x3)`.
    pub fn coefficients(self) -> [f64; 4] {
        match self {
            Self::I => NONLINEAR_BETA,
            Self::II => [-8.6, 5.0, 0.0, 0.0],
            Self::III => [-15.0, -3.0, -1.0, -1.0],
        }
    }

    /// Clinical threshold `delta0`: the population 80th percentile of the
    /// published score, so each external rule flags 20% of subjects.
    /// Precomputed from 5 x 10^7 draws.
    pub fn threshold(self) -> f64 {
        match self {
            Self::I => -5.413,
            Self::II => -4.988,
            Self::III => -14.239,
        }
    }

    /// Published score `(1, H(x))·beta~` (before subtracting the threshold).
    pub fn score(self, x: &[f64]) -> f64 {
        let b = self.coefficients();
        b[0] + b[1] * x[0].sin() + b[2] * x[1] * x[1] + b[3] * x[2].cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    Linear { contaminated: bool },
    Piecewise,
    Nonlinear,
    External(ExternalScenario),
    NestedCaseControl,
}

impl ScenarioKind {
    pub fn has_external(self) -> bool {
        matches!(self, Self::External(_))
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Linear { contaminated: false } => "linear",
            Self::Linear { contaminated: true } => "linear-contaminated",
            Self::Piecewise => "piecewise",
            Self::Nonlinear => "nonlinear",
            Self::External(ExternalScenario::I) => "external-1",
            Self::External(ExternalScenario::II) => "external-2",
            Self::External(ExternalScenario::III) => "external-3",
            Self::NestedCaseControl => "nested-cc",
        };
        f.write_str(s)
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "linear" => Self::Linear { contaminated: false },
            "linear-contaminated" => Self::Linear { contaminated: true },
            "piecewise" => Self::Piecewise,
            "nonlinear" => Self::Nonlinear,
            "external-1" => Self::External(ExternalScenario::I),
            "external-2" => Self::External(ExternalScenario::II),
            "external-3" => Self::External(ExternalScenario::III),
            "nested-cc" => Self::NestedCaseControl,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown scenario '{other}' (expected linear, linear-contaminated, \
                     piecewise, nonlinear, external-1/2/3 or nested-cc)"
                )))
            }
        })
    }
}

/// A scenario, a nominal sample size and a seed.
///
/// For [`ScenarioKind::NestedCaseControl`], `n` is the total case-control
/// sample size and `n / 21` cases are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub seed: u64,
}

/// Generated rows plus the external rule, for scenarios that carry one.
#[derive(Debug, Clone)]
pub struct Generated {
    pub data: Dataset,
    pub external: Option<ExternalRule>,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, n: usize, seed: u64) -> Self {
        Self { kind, n, seed }
    }

    pub fn generate(&self) -> Result<Generated> {
        if self.n < 10 {
            return Err(Error::InvalidParameter(format!(
                "scenario sample size must be at least 10, got {}",
                self.n
            )));
        }
        Ok(match self.kind {
            ScenarioKind::Linear { contaminated } => Generated {
                data: gen_linear(self.n, contaminated, self.seed),
                external: None,
            },
            ScenarioKind::Piecewise => Generated {
                data: gen_piecewise(self.n, self.seed),
                external: None,
            },
            ScenarioKind::Nonlinear => Generated {
                data: gen_nonlinear(self.n, self.seed),
                external: None,
            },
            ScenarioKind::External(sc) => {
                let (data, ext) = gen_external(self.n, sc, self.seed);
                Generated {
                    data,
                    external: Some(ext),
                }
            }
            ScenarioKind::NestedCaseControl => Generated {
                data: gen_nested_cc((self.n / (CONTROLS_PER_CASE + 1)).max(1), self.seed)?,
                external: None,
            },
        })
    }
}

fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

fn build(rows: Vec<LabeledSample>, design: SamplingDesign) -> Dataset {
    let p = rows.first().map_or(2, |r| r.features.len());
    Dataset::new(rows, names(p), design).expect("generated rows are finite and rectangular")
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Standard logistic draw by inversion.
fn logistic_noise(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    let u = u.clamp(1e-300, 1.0 - 1e-16);
    (u / (1.0 - u)).ln()
}

fn linear_cohort_row(rng: &mut ChaCha8Rng, beta: &[f64; 3]) -> LabeledSample {
    let x1 = normal(rng);
    let x2 = normal(rng);
    let p = sigmoid(beta[0] + beta[1] * x1 + beta[2] * x2);
    let d = rng.random::<f64>() < p;
    LabeledSample::new(vec![x1, x2], d)
}

fn contaminated_row() -> LabeledSample {
    LabeledSample::new(CONTAMINATION_POINT.to_vec(), false)
}

fn contamination_count(n: usize) -> usize {
    (CONTAMINATION_RATE * n as f64 - 1e-9).ceil() as usize
}

/// Bivariate standard normal biomarkers with `pr(D=1|x) = logistic(-8.7 + 2.4 x1 + 2.4 x2)`.
/// With `contaminated`, `ceil(0.06 n)` controls at `(6, 6)` are appended.
pub fn gen_linear(n: usize, contaminated: bool, seed: u64) -> Dataset {
    let mut rng = stream(seed, 1);
    let mut rows: Vec<_> = (0..n).map(|_| linear_cohort_row(&mut rng, &LINEAR_BETA)).collect();
    if contaminated {
        rows.extend((0..contamination_count(n)).map(|_| contaminated_row()));
    }
    build(rows, SamplingDesign::Cohort)
}

/// `D = 1{-8.9 + 2 x1 + 2 x2 1{x2 > q} + e > 0}` with logistic `e` and `q` the
/// standard normal 2.5% quantile; then `round(0.004 n)` rows drawn from the
/// `x2 < q` tail are relabeled as cases.
pub fn gen_piecewise(n: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed, 2);
    let b = PIECEWISE_BETA;
    let mut rows: Vec<_> = (0..n)
        .map(|_| {
            let x1 = normal(&mut rng);
            let x2 = normal(&mut rng);
            let above = if x2 > X2_LOWER_QUANTILE { 1.0 } else { 0.0 };
            let d = b[0] + b[1] * x1 + b[2] * x2 * above + logistic_noise(&mut rng) > 0.0;
            LabeledSample::new(vec![x1, x2], d)
        })
        .collect();
    let tail: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.features[1] < X2_LOWER_QUANTILE)
        .map(|(i, _)| i)
        .collect();
    let k = ((PIECEWISE_TAIL_CASE_RATE * n as f64).round() as usize).min(tail.len());
    for j in sample(&mut rng, tail.len(), k) {
        rows[tail[j]].label = true;
    }
    build(rows, SamplingDesign::Cohort)
}

/// Nonlinear latent score on `(sin x1, x2^2, cos x3)`.
pub fn nonlinear_score(x: &[f64]) -> f64 {
    let b = NONLINEAR_BETA;
    b[0] + b[1] * x[0].sin() + b[2] * x[1] * x[1] + b[3] * x[2].cos()
}

fn nonlinear_rows(n: usize, rng: &mut ChaCha8Rng, noisy: bool) -> Vec<LabeledSample> {
    (0..n)
        .map(|_| {
            let x = vec![normal(rng), normal(rng), normal(rng)];
            let e = if noisy { logistic_noise(rng) } else { 0.0 };
            let d = nonlinear_score(&x) + e > 0.0;
            LabeledSample::new(x, d)
        })
        .collect()
}

/// Three standard normal biomarkers with
/// `D = 1{-8.6 + 5 sin x1 - 4 x2^2 + 3 cos x3 + e > 0}`, `e` logistic.
pub fn gen_nonlinear(n: usize, seed: u64) -> Dataset {
    gen_nonlinear_with_noise(n, seed, true)
}

/// [`gen_nonlinear`] with the logistic noise optionally switched off.
pub fn gen_nonlinear_with_noise(n: usize, seed: u64, noisy: bool) -> Dataset {
    let mut rng = stream(seed, 3);
    build(nonlinear_rows(n, &mut rng, noisy), SamplingDesign::Cohort)
}

/// Nonlinear-scenario rows together with the published model's margin
/// `r(x) - delta0`, stored both in each row's `external_signal` and in the
/// returned score-mode [`ExternalRule`].
pub fn gen_external(n: usize, scenario: ExternalScenario, seed: u64) -> (Dataset, ExternalRule) {
    gen_external_with_threshold(n, scenario, scenario.threshold(), seed)
}

/// [`gen_external`] with an explicit clinical threshold `delta0`.
pub fn gen_external_with_threshold(
    n: usize,
    scenario: ExternalScenario,
    delta0: f64,
    seed: u64,
) -> (Dataset, ExternalRule) {
    let mut rng = stream(seed, 3);
    let mut rows = nonlinear_rows(n, &mut rng, true);
    let mut margins = Vec::with_capacity(n);
    for r in rows.iter_mut() {
        let m = scenario.score(&r.features) - delta0;
        r.external_signal = Some(m);
        margins.push(m);
    }
    let data = build(rows, SamplingDesign::Cohort);
    let ext = ExternalRule::new(ExternalMode::Score, margins).expect("finite margins");
    (data, ext)
}

/// Nested case-control sample: a cohort of `10^6` with
/// `pr(D=1|x) = logistic(-8 + 2.1 x1 + 2.1 x2)` plus 6% contaminated controls,
/// from which `n1` cases and `20 n1` controls are drawn without replacement.
pub fn gen_nested_cc(n1: usize, seed: u64) -> Result<Dataset> {
    gen_nested_cc_from(n1, NESTED_COHORT_SIZE, seed)
}

pub(crate) fn gen_nested_cc_from(n1: usize, cohort: usize, seed: u64) -> Result<Dataset> {
    const ATTEMPTS: usize = 5;
    let n0 = CONTROLS_PER_CASE * n1;
    for attempt in 0..ATTEMPTS {
        let mut rng = stream(derive_seed(seed, attempt as u64), 4);
        let mut cases = Vec::new();
        let mut controls = Vec::with_capacity(cohort);
        for _ in 0..cohort {
            let row = linear_cohort_row(&mut rng, &NESTED_BETA);
            if row.label {
                cases.push(row);
            } else {
                controls.push(row);
            }
        }
        controls.extend((0..contamination_count(cohort)).map(|_| contaminated_row()));
        if cases.len() < n1 || controls.len() < n0 {
            continue;
        }
        let mut rows = Vec::with_capacity(n1 + n0);
        let case_idx = sample(&mut rng, cases.len(), n1).into_vec();
        let ctrl_idx = sample(&mut rng, controls.len(), n0).into_vec();
        rows.extend(case_idx.into_iter().map(|i| cases[i].clone()));
        rows.extend(ctrl_idx.into_iter().map(|i| controls[i].clone()));
        return Ok(build(rows, SamplingDesign::CaseControl));
    }
    Err(Error::InsufficientCases {
        wanted: n1,
        attempts: ATTEMPTS,
    })
}
