//! Domain types shared across the estimators.
//!
//! Notation used in docs: a rule flags subject `x` when `b0 + x·b1 > 0`.
//! Cases are rows with `label == true`; `n1` counts them, `n0` counts
//! controls. Prevalence `p1` enters through `gamma = p1 / (1 - p1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogate::dot;

/// One labeled row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    /// Disease status; `true` is a case.
    pub label: bool,
    /// Signal from an external rule for this row, if available.
    pub external_signal: Option<f64>,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: bool) -> Self {
        Self {
            features,
            label,
            external_signal: None,
        }
    }

    pub fn with_external(mut self, signal: f64) -> Self {
        self.external_signal = Some(signal);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingDesign {
    #[default]
    Cohort,
    CaseControl,
}

/// Validated collection of rows sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    feature_names: Vec<String>,
    design: SamplingDesign,
    n1: usize,
    n0: usize,
}

impl Dataset {
    /// Builds a dataset, rejecting ragged rows and non-finite values.
    ///
    /// An empty `feature_names` is replaced by `x1..xp`.
    pub fn new(samples: Vec<LabeledSample>, feature_names: Vec<String>, design: SamplingDesign) -> Result<Self> {
        let p = match samples.first() {
            Some(s) => s.features.len(),
            None if !feature_names.is_empty() => feature_names.len(),
            None => return Err(Error::InvalidParameter("dataset has no rows".into())),
        };
        if p == 0 {
            return Err(Error::InvalidParameter("need at least one feature".into()));
        }
        let feature_names = if feature_names.is_empty() {
            (1..=p).map(|j| format!("x{j}")).collect()
        } else {
            feature_names
        };
        if feature_names.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: feature_names.len(),
            });
        }
        let mut n1 = 0;
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("features of row {i}")));
            }
            if matches!(s.external_signal, Some(v) if !v.is_finite()) {
                return Err(Error::NonFinite(format!("external signal of row {i}")));
            }
            n1 += usize::from(s.label);
        }
        let n0 = samples.len() - n1;
        Ok(Self {
            samples,
            feature_names,
            design,
            n1,
            n0,
        })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn design(&self) -> SamplingDesign {
        self.design
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = bool> + '_ {
        self.samples.iter().map(|s| s.label)
    }

    /// Fails unless both strata hold at least `min` rows.
    pub fn require_strata(&self, min: usize) -> Result<()> {
        if self.n1 < min || self.n0 < min {
            return Err(Error::EmptyStratum {
                n1: self.n1,
                n0: self.n0,
                min,
            });
        }
        Ok(())
    }

    /// Copy holding only the rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let samples: Vec<_> = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let n1 = samples.iter().filter(|s| s.label).count();
        Dataset {
            n0: samples.len() - n1,
            n1,
            samples,
            feature_names: self.feature_names.clone(),
            design: self.design,
        }
    }

    pub fn with_design(mut self, design: SamplingDesign) -> Self {
        self.design = design;
        self
    }
}

/// Disease prevalence `p1` in the target population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prevalence(f64);

impl Prevalence {
    pub fn new(p1: f64) -> Result<Self> {
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "prevalence must lie in (0,1), got {p1}"
            )));
        }
        Ok(Self(p1))
    }

    pub fn p1(self) -> f64 {
        self.0
    }

    pub fn p0(self) -> f64 {
        1.0 - self.0
    }

    /// Prevalence odds `p1 / (1 - p1)`.
    pub fn gamma(self) -> f64 {
        self.0 / (1.0 - self.0)
    }
}

/// Per-feature affine transform `(x - mean) / sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    /// Column means and sample standard deviations; zero-variance columns get sd 1.
    pub fn fit(data: &Dataset) -> Self {
        let p = data.dim();
        let n = data.n() as f64;
        let mut means = vec![0.0; p];
        for s in data.samples() {
            for (m, v) in means.iter_mut().zip(&s.features) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut sds = vec![0.0; p];
        for s in data.samples() {
            for ((acc, v), m) in sds.iter_mut().zip(&s.features).zip(&means) {
                *acc += (v - m) * (v - m);
            }
        }
        for sd in sds.iter_mut() {
            *sd = if n > 1.0 { (*sd / (n - 1.0)).sqrt() } else { 0.0 };
            if !(*sd > 1e-12) {
                *sd = 1.0;
            }
        }
        Self { means, sds }
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.means[j]) / self.sds[j];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }
}

/// Anything that turns a feature vector into a screening decision.
pub trait Classifier {
    fn dim(&self) -> usize;

    /// Decision for `x`, without a length check.
    fn flags(&self, x: &[f64]) -> bool;

    fn decide(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.flags(x))
    }
}

/// Linear rule `1{b0 + z·b1 > 0}`, where `z` is `x` after the optional
/// standardization the coefficients were fit under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRule {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub standardization: Option<Standardization>,
}

impl LinearRule {
    pub fn new(intercept: f64, slopes: Vec<f64>) -> Self {
        Self {
            intercept,
            slopes,
            standardization: None,
        }
    }

    /// Builds a rule from a stacked `(b0, b1...)` coefficient vector.
    pub fn from_beta(beta: &[f64], standardization: Option<Standardization>) -> Self {
        Self {
            intercept: beta[0],
            slopes: beta[1..].to_vec(),
            standardization,
        }
    }

    pub fn beta(&self) -> Vec<f64> {
        std::iter::once(self.intercept)
            .chain(self.slopes.iter().copied())
            .collect()
    }

    /// Linear score `b0 + z·b1`; the sign is the decision.
    pub fn score(&self, x: &[f64]) -> f64 {
        match &self.standardization {
            None => self.intercept + dot(&self.slopes, x),
            Some(st) => {
                let mut s = self.intercept;
                for (((b, xj), m), sd) in self.slopes.iter().zip(x).zip(&st.means).zip(&st.sds) {
                    s += b * (xj - m) / sd;
                }
                s
            }
        }
    }

    pub fn norm(&self) -> f64 {
        (self.intercept * self.intercept + dot(&self.slopes, &self.slopes)).sqrt()
    }

    /// Scales `(b0, b1)` to unit Euclidean norm; decisions are unchanged.
    pub fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            self.intercept /= norm;
            self.slopes.iter_mut().for_each(|b| *b /= norm);
        }
        self
    }

    /// Rule flagging every subject.
    pub fn flag_all(p: usize) -> Self {
        Self::new(1.0, vec![0.0; p])
    }

    /// Rule flagging nobody.
    pub fn flag_none(p: usize) -> Self {
        Self::new(-1.0, vec![0.0; p])
    }
}

impl Classifier for LinearRule {
    fn dim(&self) -> usize {
        self.slopes.len()
    }

    fn flags(&self, x: &[f64]) -> bool {
        self.score(x) > 0.0
    }
}

/// Hard-indicator operating characteristics of a rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RuleMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub ppv: f64,
}

/// A fitted linear rule together with the tuning values that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedRule {
    pub rule: LinearRule,
    /// Selected `kappa = lambda / (1 + lambda)`.
    pub kappa_hat: f64,
    pub lambda_hat: f64,
    /// Smoothing bandwidth; 0 for rules fit without smoothing.
    pub h: f64,
    pub alpha: f64,
    pub train_metrics: RuleMetrics,
    /// Information-transfer weight, for IT-DOOLR fits.
    pub eta: Option<f64>,
    /// Whether the training PPV met the constraint (within tolerance).
    pub feasible: bool,
}

impl Classifier for FittedRule {
    fn dim(&self) -> usize {
        self.rule.dim()
    }

    fn flags(&self, x: &[f64]) -> bool {
        self.rule.flags(x)
    }
}

/// Estimated disease risk `pr(D = 1 | x)`.
pub trait RiskModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Probability clamped to `[1e-12, 1 - 1e-12]`.
    fn predict_prob(&self, x: &[f64]) -> f64;

    /// Log-odds of [`predict_prob`](Self::predict_prob). Models with an exact
    /// linear predictor override this to avoid clamping ties.
    fn predict_logit(&self, x: &[f64]) -> f64 {
        let p = self.predict_prob(x);
        (p / (1.0 - p)).ln()
    }

    /// `pr(D=1|x) / p1`.
    fn eta1(&self, x: &[f64], prev: Prevalence) -> f64 {
        self.predict_prob(x) / prev.p1()
    }

    /// `pr(D=0|x) / p0`.
    fn eta0(&self, x: &[f64], prev: Prevalence) -> f64 {
        (1.0 - self.predict_prob(x)) / prev.p0()
    }
}

pub const PROB_CLAMP: f64 = 1e-12;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExternalMode {
    /// Signed margin `r(z) - delta0` of a published score.
    Score,
    /// `+1` if the external rule recommends screening, `-1` otherwise.
    Decision,
}

/// Per-row signal of an external rule, aligned with a dataset's rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRule {
    pub mode: ExternalMode,
    pub values: Vec<f64>,
}

impl ExternalRule {
    pub fn new(mode: ExternalMode, values: Vec<f64>) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("external value {i}")));
            }
            if mode == ExternalMode::Decision && *v != 1.0 && *v != -1.0 {
                return Err(Error::InvalidParameter(format!(
                    "decision-mode external value must be +1 or -1, row {i} has {v}"
                )));
            }
        }
        Ok(Self { mode, values })
    }

    /// Reads each row's `external_signal`. In decision mode a positive value
    /// maps to `+1` and anything else to `-1`.
    pub fn from_dataset(data: &Dataset, mode: ExternalMode) -> Result<Self> {
        let values = data
            .samples()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let v = s.external_signal.ok_or(Error::MissingExternal(i))?;
                Ok(match mode {
                    ExternalMode::Score => v,
                    ExternalMode::Decision => sign_decision(v),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(mode, values)
    }

    /// Decision-mode view of a score-mode rule.
    pub fn to_decisions(&self) -> Self {
        Self {
            mode: ExternalMode::Decision,
            values: self.values.iter().map(|&v| sign_decision(v)).collect(),
        }
    }

    /// The signal entering the disagreement penalty for row `i`.
    pub fn signal(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            mode: self.mode,
            values: indices.iter().map(|&i| self.values[i]).collect(),
        }
    }
}

fn sign_decision(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        -1.0
    }
}
