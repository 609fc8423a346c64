//! Plug-in estimate of the optimal rule: flag when the estimated likelihood
//! ratio `eta1/eta0` exceeds `lambda*alpha / (1 + lambda*gamma*(1 - alpha))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{check_alpha, fit_risk_logistic, ppv_threshold, LogisticFit};
use crate::surrogate::ppv;
use crate::types::{clamp_prob, Classifier, Dataset, Prevalence, RiskModel, RuleMetrics};

/// `eta1(x) (1 - lambda*alpha*gamma + lambda*gamma) - lambda*alpha*eta0(x)`;
/// the plug-in rule flags `x` when this is positive.
pub fn plugin_decision_value(x: &[f64], risk: &dyn RiskModel, lambda: f64, alpha: f64, prev: Prevalence) -> f64 {
    let g = prev.gamma();
    let e1 = risk.eta1(x, prev);
    let e0 = risk.eta0(x, prev);
    e1 * (1.0 - lambda * alpha * g + lambda * g) - lambda * alpha * e0
}

/// Likelihood-ratio cutoff `t(lambda)`; tends to `alpha / (gamma (1 - alpha))`
/// as `lambda` grows.
pub fn lr_threshold(lambda: f64, alpha: f64, prev: Prevalence) -> f64 {
    let g = prev.gamma();
    if lambda.is_infinite() {
        return alpha / (g * (1.0 - alpha));
    }
    lambda * alpha / (1.0 + lambda * g * (1.0 - alpha))
}

/// Inverse of [`lr_threshold`]: `lambda = t / (alpha - t gamma (1 - alpha))`.
/// Cutoffs at or beyond the `lambda -> inf` limit map to `inf`.
pub fn lambda_for_threshold(t: f64, alpha: f64, prev: Prevalence) -> f64 {
    if !(t > 0.0) {
        return 0.0;
    }
    let denom = alpha - t * prev.gamma() * (1.0 - alpha);
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        t / denom
    }
}

/// Result of the Lagrange-multiplier search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    /// `inf` when the chosen cutoff lies beyond every finite multiplier.
    pub lambda_hat: f64,
    /// Flag when the risk log-odds exceed this value (may be `±inf`).
    pub logit_threshold: f64,
    pub feasible: bool,
    pub train_metrics: RuleMetrics,
}

/// Solves for `lambda` by scanning the likelihood-ratio ranks of the training
/// rows. The ratio `eta1/eta0` equals the risk odds over `gamma`, so the scan
/// runs on the risk log-odds.
pub fn solve_lambda(risk: &dyn RiskModel, data: &Dataset, alpha: f64, prev: Prevalence) -> Result<LambdaChoice> {
    if risk.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: risk.dim(),
            got: data.dim(),
        });
    }
    let logits: Vec<f64> = data.samples().iter().map(|s| risk.predict_logit(&s.features)).collect();
    solve_lambda_from_logits(&logits, data, alpha, prev)
}

fn solve_lambda_from_logits(logits: &[f64], data: &Dataset, alpha: f64, prev: Prevalence) -> Result<LambdaChoice> {
    check_alpha(alpha)?;
    let labels: Vec<bool> = data.labels().collect();
    let c = ppv_threshold(logits, &labels, alpha, prev)?;
    let t = (c.threshold - prev.gamma().ln()).exp();
    Ok(LambdaChoice {
        lambda_hat: lambda_for_threshold(t, alpha, prev),
        logit_threshold: c.threshold,
        feasible: c.feasible,
        train_metrics: RuleMetrics {
            tpr: c.tpr,
            fpr: c.fpr,
            ppv: c.ppv,
        },
    })
}

/// k-nearest-neighbour risk: the smoothed case share `(count + 0.5) / (k + 1)`
/// among the `k` training rows closest in Euclidean distance, ties broken by
/// row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnRisk {
    dim: usize,
    k: usize,
    points: Vec<f64>,
    labels: Vec<bool>,
}

/// `ceil(n^(2/3) / 2)`.
pub fn default_k(n: usize) -> usize {
    ((n as f64).powf(2.0 / 3.0) / 2.0).ceil().max(1.0) as usize
}

pub fn knn_risk(data: &Dataset, k: usize) -> Result<KnnRisk> {
    if k == 0 || k > data.n() {
        return Err(Error::InvalidParameter(format!(
            "k must lie in 1..={}, got {k}",
            data.n()
        )));
    }
    let points = data.samples().iter().flat_map(|s| s.features.iter().copied()).collect();
    Ok(KnnRisk {
        dim: data.dim(),
        k,
        points,
        labels: data.labels().collect(),
    })
}

impl KnnRisk {
    pub fn k(&self) -> usize {
        self.k
    }

    fn n(&self) -> usize {
        self.labels.len()
    }

    fn case_count(&self, x: &[f64], skip: Option<usize>, k: usize) -> usize {
        let mut d: Vec<(f64, usize)> = self
            .points
            .chunks_exact(self.dim)
            .enumerate()
            .filter(|&(i, _)| Some(i) != skip)
            .map(|(i, p)| {
                let d2 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                (d2, i)
            })
            .collect();
        let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, by);
        }
        d[..k].iter().filter(|&&(_, i)| self.labels[i]).count()
    }

    fn smoothed(count: usize, k: usize) -> f64 {
        clamp_prob((count as f64 + 0.5) / (k as f64 + 1.0))
    }

    /// Leave-one-out estimate at training row `i`, so a row never votes for
    /// itself.
    pub fn loo_prob(&self, i: usize) -> f64 {
        let x = &self.points[i * self.dim..(i + 1) * self.dim];
        let k = self.k.min(self.n() - 1).max(1);
        if self.n() == 1 {
            return Self::smoothed(0, 0);
        }
        Self::smoothed(self.case_count(x, Some(i), k), k)
    }
}

impl RiskModel for KnnRisk {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_prob(&self, x: &[f64]) -> f64 {
        Self::smoothed(self.case_count(x, None, self.k), self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PluginEstimator {
    /// Logistic regression, adjusted to cohort scale under case-control sampling.
    Logistic,
    /// k nearest neighbours; `None` picks [`default_k`].
    Knn(Option<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PluginRisk {
    Logistic(LogisticFit),
    Knn(KnnRisk),
}

impl PluginRisk {
    pub fn as_risk(&self) -> &dyn RiskModel {
        match self {
            Self::Logistic(m) => m,
            Self::Knn(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginRule {
    pub risk: PluginRisk,
    pub lambda_hat: f64,
    /// Cutoff on the risk log-odds actually applied; reproduces the
    /// multiplier's decisions and stays exact when `lambda_hat` is infinite.
    pub logit_threshold: f64,
    pub alpha: f64,
    pub prev: Prevalence,
    pub feasible: bool,
    pub train_metrics: RuleMetrics,
}

impl PluginRule {
    /// Whether the chosen cutoff lies beyond every finite multiplier.
    pub fn lambda_capped(&self) -> bool {
        self.lambda_hat.is_infinite()
    }

    pub fn decision_value(&self, x: &[f64]) -> f64 {
        plugin_decision_value(x, self.risk.as_risk(), self.lambda_hat, self.alpha, self.prev)
    }
}

impl Classifier for PluginRule {
    fn dim(&self) -> usize {
        self.risk.as_risk().dim()
    }

    fn flags(&self, x: &[f64]) -> bool {
        self.risk.as_risk().predict_logit(x) > self.logit_threshold
    }
}

/// Fits the risk model and the multiplier. kNN training scores are computed
/// leave-one-out.
pub fn plugin_fit(data: &Dataset, estimator: PluginEstimator, alpha: f64, prev: Prevalence) -> Result<PluginRule> {
    check_alpha(alpha)?;
    data.require_strata(1)?;
    let (risk, choice) = match estimator {
        PluginEstimator::Logistic => {
            let fit = fit_risk_logistic(data, prev)?;
            let choice = solve_lambda(&fit, data, alpha, prev)?;
            (PluginRisk::Logistic(fit), choice)
        }
        PluginEstimator::Knn(k) => {
            let k = k.unwrap_or_else(|| default_k(data.n()).min(data.n()));
            let model = knn_risk(data, k)?;
            let logits: Vec<f64> = loo_probs(&model).into_iter().map(|p| (p / (1.0 - p)).ln()).collect();
            let choice = solve_lambda_from_logits(&logits, data, alpha, prev)?;
            (PluginRisk::Knn(model), choice)
        }
    };
    Ok(PluginRule {
        risk,
        lambda_hat: choice.lambda_hat,
        logit_threshold: choice.logit_threshold,
        alpha,
        prev,
        feasible: choice.feasible,
        train_metrics: RuleMetrics {
            ppv: ppv(choice.train_metrics.tpr, choice.train_metrics.fpr, prev),
            ..choice.train_metrics
        },
    })
}

#[cfg(feature = "parallel")]
fn loo_probs(model: &KnnRisk) -> Vec<f64> {
    use rayon::prelude::*;
    (0..model.n()).into_par_iter().map(|i| model.loo_prob(i)).collect()
}

#[cfg(not(feature = "parallel"))]
fn loo_probs(model: &KnnRisk) -> Vec<f64> {
    (0..model.n()).map(|i| model.loo_prob(i)).collect()
}
