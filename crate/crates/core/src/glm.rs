//! Logistic regression by iteratively reweighted least squares, the
//! case-control intercept offset, and the two-step "Standard" rule
//! (logistic risk plus a PPV-calibrated cutoff).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, solve_spd};
use crate::surrogate::{empirical_rates, ppv};
use crate::types::{clamp_prob, Dataset, FittedRule, LinearRule, Prevalence, RiskModel, RuleMetrics, SamplingDesign};

/// Coefficient norm beyond which the fit is treated as separated.
const SEPARATION_NORM: f64 = 1e3;
/// First ridge tried once separation is detected.
const SEPARATION_RIDGE: f64 = 1e-4;
const MAX_RIDGE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Ridge actually used on the slopes.
    pub ridge: f64,
    /// Penalized log-likelihood after each accepted iteration of the final run.
    pub loglik_trace: Vec<f64>,
}

impl LogisticFit {
    pub fn beta(&self) -> Vec<f64> {
        std::iter::once(self.intercept)
            .chain(self.slopes.iter().copied())
            .collect()
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept + self.slopes.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

impl RiskModel for LogisticFit {
    fn dim(&self) -> usize {
        self.slopes.len()
    }

    fn predict_prob(&self, x: &[f64]) -> f64 {
        clamp_prob(sigmoid(self.linear_predictor(x)))
    }

    fn predict_logit(&self, x: &[f64]) -> f64 {
        self.linear_predictor(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub ridge: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            ridge: 0.0,
        }
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^t)` without overflow.
fn log1pexp(t: f64) -> f64 {
    if t > 35.0 {
        t
    } else if t < -35.0 {
        t.exp()
    } else {
        t.exp().ln_1p()
    }
}

struct Irls<'a> {
    rows: Vec<f64>,
    y: Vec<f64>,
    width: usize,
    opts: &'a LogisticOptions,
}

enum IrlsOutcome {
    Done(LogisticFit),
    Separated,
}

impl Irls<'_> {
    fn penalized_loglik(&self, beta: &[f64], ridge: f64) -> f64 {
        let mut ll = 0.0;
        for (row, &y) in self.rows.chunks_exact(self.width).zip(&self.y) {
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            ll += y * eta - log1pexp(eta);
        }
        ll - 0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
    }

    fn run(&self, ridge: f64, n1: usize, n: usize) -> Result<IrlsOutcome> {
        let d = self.width;
        let mut beta = vec![0.0; d];
        beta[0] = logit(n1 as f64 / n as f64);
        let mut ll = self.penalized_loglik(&beta, ridge);
        let mut trace = vec![ll];
        let mut converged = false;
        let mut iterations = 0;
        let mut hess = vec![0.0; d * d];
        let mut grad = vec![0.0; d];
        while iterations < self.opts.max_iter {
            iterations += 1;
            hess.iter_mut().for_each(|v| *v = 0.0);
            grad.iter_mut().for_each(|v| *v = 0.0);
            for (row, &y) in self.rows.chunks_exact(d).zip(&self.y) {
                let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
                let mu = sigmoid(eta);
                let w = (mu * (1.0 - mu)).max(1e-12);
                for i in 0..d {
                    grad[i] += row[i] * (y - mu);
                    let wi = w * row[i];
                    for j in 0..=i {
                        hess[i * d + j] += wi * row[j];
                    }
                }
            }
            for i in 0..d {
                for j in 0..i {
                    hess[j * d + i] = hess[i * d + j];
                }
            }
            for j in 1..d {
                grad[j] -= ridge * beta[j];
                hess[j * d + j] += ridge;
            }
            let step = match solve_spd(&hess, &grad, d) {
                Some(s) => s,
                None if ridge < MAX_RIDGE => return Ok(IrlsOutcome::Separated),
                None => return Err(Error::Singular),
            };
            // Step halving keeps the penalized log-likelihood monotone.
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
                let cand_ll = self.penalized_loglik(&cand, ridge);
                if cand_ll.is_finite() && cand_ll >= ll {
                    accepted = Some((cand, cand_ll));
                    break;
                }
                scale *= 0.5;
            }
            let Some((cand, cand_ll)) = accepted else {
                converged = true;
                break;
            };
            let change = beta.iter().zip(&cand).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            beta = cand;
            ll = cand_ll;
            trace.push(ll);
            if norm2(&beta) > SEPARATION_NORM {
                return Ok(IrlsOutcome::Separated);
            }
            if change < self.opts.tol {
                converged = true;
                break;
            }
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("logistic coefficients".into()));
        }
        // Newton steps on separated data grow the coefficients roughly
        // linearly, so a run that exhausts its budget is treated the same
        // way as one whose norm blew up.
        if !converged && ridge < MAX_RIDGE {
            return Ok(IrlsOutcome::Separated);
        }
        Ok(IrlsOutcome::Done(LogisticFit {
            intercept: beta[0],
            slopes: beta[1..].to_vec(),
            converged,
            iterations,
            ridge,
            loglik_trace: trace,
        }))
    }
}

/// Maximum-likelihood logistic regression with an optional slope ridge.
///
/// When the coefficient norm runs past `1e3`, or the iteration budget runs
/// out first, the data are treated as (quasi-)separated: the fit restarts with a ridge of at least `1e-4`,
/// escalating tenfold up to 1, and reports `converged = false`.
pub fn fit_logistic(data: &Dataset, opts: &LogisticOptions) -> Result<LogisticFit> {
    data.require_strata(1)?;
    if !(opts.ridge >= 0.0) || !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter(format!("bad logistic options {opts:?}")));
    }
    let width = data.dim() + 1;
    let mut rows = Vec::with_capacity(data.n() * width);
    let mut y = Vec::with_capacity(data.n());
    for s in data.samples() {
        rows.push(1.0);
        rows.extend_from_slice(&s.features);
        y.push(if s.label { 1.0 } else { 0.0 });
    }
    let irls = Irls { rows, y, width, opts };
    let mut ridge = opts.ridge;
    let mut separated = false;
    loop {
        match irls.run(ridge, data.n1(), data.n())? {
            IrlsOutcome::Done(mut fit) => {
                fit.converged &= !separated;
                return Ok(fit);
            }
            IrlsOutcome::Separated if ridge >= MAX_RIDGE => return Err(Error::Singular),
            IrlsOutcome::Separated => {
                separated = true;
                ridge = if ridge < SEPARATION_RIDGE {
                    SEPARATION_RIDGE
                } else {
                    (ridge * 10.0).min(MAX_RIDGE)
                };
            }
        }
    }
}

/// `ln(p1 * n0 / ((1 - p1) * n1))`, the intercept offset mapping case-control
/// log-odds to cohort log-odds.
pub fn case_control_offset(n1: usize, n0: usize, prev: Prevalence) -> f64 {
    (prev.p1() * n0 as f64 / (prev.p0() * n1 as f64)).ln()
}

pub fn case_control_adjust(fit: &LogisticFit, n1: usize, n0: usize, prev: Prevalence) -> LogisticFit {
    let mut out = fit.clone();
    out.intercept += case_control_offset(n1, n0, prev);
    out
}

/// Logistic fit on `data`, shifted to cohort scale when the data come from a
/// case-control design.
pub fn fit_risk_logistic(data: &Dataset, prev: Prevalence) -> Result<LogisticFit> {
    let fit = fit_logistic(data, &LogisticOptions::default())?;
    Ok(match data.design() {
        SamplingDesign::Cohort => fit,
        SamplingDesign::CaseControl => case_control_adjust(&fit, data.n1(), data.n0(), prev),
    })
}

/// Outcome of a cutoff scan on scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    /// Flag when `score > threshold`; may be `±inf`.
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub ppv: f64,
    pub feasible: bool,
}

/// Scans every distinct cutoff of `scores` (midpoints between consecutive
/// distinct values plus `±inf`) for the rule `1{score > t}`.
///
/// Among cutoffs with prevalence-weighted PPV `>= alpha`, returns the one
/// with the largest TPR, breaking ties toward the smaller cutoff. When no
/// cutoff is feasible, returns the maximum-PPV cutoff with `feasible = false`.
pub fn ppv_threshold(scores: &[f64], labels: &[bool], alpha: f64, prev: Prevalence) -> Result<ThresholdChoice> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("score".into()));
    }
    let n1 = labels.iter().filter(|&&l| l).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::EmptyStratum { n1, n0, min: 1 });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let eval = |tp: usize, fp: usize, threshold: f64| {
        let tpr = tp as f64 / n1 as f64;
        let fpr = fp as f64 / n0 as f64;
        let v = ppv(tpr, fpr, prev);
        ThresholdChoice {
            threshold,
            tpr,
            fpr,
            ppv: v,
            feasible: v >= alpha,
        }
    };

    let mut best_feasible: Option<ThresholdChoice> = None;
    let mut best_any = eval(0, 0, f64::INFINITY);
    let mut consider = |c: ThresholdChoice| {
        // Candidates arrive in decreasing threshold order, so `>=` prefers
        // the smaller cutoff on ties.
        if c.feasible && best_feasible.is_none_or(|b| c.tpr >= b.tpr) {
            best_feasible = Some(c);
        }
        if c.ppv > best_any.ppv || (c.ppv == best_any.ppv && c.tpr >= best_any.tpr) {
            best_any = c;
        }
    };
    consider(eval(0, 0, f64::INFINITY));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        while i < order.len() && scores[order[i]] == value {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let threshold = if i < order.len() {
            midpoint(scores[order[i]], value)
        } else {
            f64::NEG_INFINITY
        };
        consider(eval(tp, fp, threshold));
    }
    Ok(best_feasible.unwrap_or(best_any))
}

/// A cutoff strictly below `hi` and at or above `lo` (`lo < hi`).
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    if lo == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let m = lo + 0.5 * (hi - lo);
    if m < hi && m >= lo {
        m
    } else {
        lo
    }
}

/// Two-step Standard rule: logistic risk (cohort-adjusted under case-control
/// sampling), thresholded on the training data to meet the PPV constraint.
///
/// The cutoff is scanned on the log-odds, which ranks rows exactly as the
/// predicted probabilities do, and folded into the intercept.
pub fn standard_rule(data: &Dataset, alpha: f64, prev: Prevalence) -> Result<FittedRule> {
    check_alpha(alpha)?;
    let fit = fit_risk_logistic(data, prev)?;
    let scores: Vec<f64> = data
        .samples()
        .iter()
        .map(|s| fit.linear_predictor(&s.features))
        .collect();
    let labels: Vec<bool> = data.labels().collect();
    let choice = ppv_threshold(&scores, &labels, alpha, prev)?;
    let rule = threshold_rule(&fit, choice.threshold);
    let (tpr, fpr) = empirical_rates(&rule, data)?;
    Ok(FittedRule {
        rule,
        kappa_hat: 0.0,
        lambda_hat: 0.0,
        h: 0.0,
        alpha,
        train_metrics: RuleMetrics {
            tpr,
            fpr,
            ppv: ppv(tpr, fpr, prev),
        },
        eta: None,
        feasible: choice.feasible,
    })
}

/// Linear rule equivalent to `1{linear predictor > threshold}`.
pub fn threshold_rule(fit: &LogisticFit, threshold: f64) -> LinearRule {
    let p = fit.slopes.len();
    if threshold == f64::NEG_INFINITY {
        LinearRule::flag_all(p)
    } else if threshold == f64::INFINITY {
        LinearRule::flag_none(p)
    } else {
        LinearRule::new(fit.intercept - threshold, fit.slopes.clone())
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "PPV target must lie in [0,1], got {alpha}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Classifier, LabeledSample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prev(p: f64) -> Prevalence {
        Prevalence::new(p).unwrap()
    }

    fn dataset(rows: Vec<(Vec<f64>, bool)>) -> Dataset {
        Dataset::new(
            rows.into_iter().map(|(x, y)| LabeledSample::new(x, y)).collect(),
            vec![],
            SamplingDesign::Cohort,
        )
        .unwrap()
    }

    #[test]
    fn no_signal_recovers_base_rate() {
        // x symmetric and identical in both classes
        let mut rows = vec![];
        for &x in &[-2.0, -1.0, 1.0, 2.0] {
            rows.push((vec![x], true));
            for _ in 0..3 {
                rows.push((vec![x], false));
            }
        }
        let d = dataset(rows);
        let fit = fit_logistic(&d, &LogisticOptions::default()).unwrap();
        assert!(fit.slopes[0].abs() < 1e-3);
        assert!((fit.intercept - logit(0.25)).abs() < 1e-3);
        assert!(fit.converged);
    }

    #[test]
    fn recovers_generating_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<_> = (0..100_000)
            .map(|_| {
                let x: f64 = rng.sample(rand_distr::StandardNormal);
                let y = rng.random::<f64>() < sigmoid(-1.0 + 2.0 * x);
                (vec![x], y)
            })
            .collect();
        let fit = fit_logistic(&dataset(rows), &LogisticOptions::default()).unwrap();
        assert!((fit.intercept + 1.0).abs() < 0.1, "{fit:?}");
        assert!((fit.slopes[0] - 2.0).abs() < 0.1, "{fit:?}");
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn separable_data_engages_ridge() {
        let d = dataset(vec![
            (vec![2.0, 2.0], true),
            (vec![1.5, 2.5], true),
            (vec![-2.0, -2.0], false),
            (vec![-1.0, -2.5], false),
        ]);
        let fit = fit_logistic(&d, &LogisticOptions::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.ridge >= 1e-4);
        assert!(fit.beta().iter().all(|b| b.is_finite()));
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn case_control_shift() {
        let fit = LogisticFit {
            intercept: 0.3,
            slopes: vec![1.0],
            converged: true,
            iterations: 1,
            ridge: 0.0,
            loglik_trace: vec![],
        };
        assert_eq!(case_control_adjust(&fit, 50, 50, prev(0.5)).intercept, 0.3);
        let adj = case_control_adjust(&fit, 100, 2000, prev(0.01));
        assert!((adj.intercept - 0.3 - (20.0f64 / 99.0).ln()).abs() < 1e-12);
        assert!((case_control_offset(100, 2000, prev(0.01)) + 1.599_388).abs() < 1e-6);
        let twice = case_control_adjust(&adj, 100, 2000, prev(0.01));
        assert!((twice.intercept - adj.intercept - (20.0f64 / 99.0).ln()).abs() < 1e-12);
        assert_eq!(twice.slopes, fit.slopes);
    }

    /// Enumerates every cutoff `{+inf, 0.85, 0.75, 0.4, -inf}` by hand.
    #[test]
    fn ppv_threshold_worked_example() {
        let scores = [0.9, 0.8, 0.7, 0.1];
        let labels = [true, true, false, false];
        let c = ppv_threshold(&scores, &labels, 0.019, prev(0.01)).unwrap();
        assert!(c.feasible);
        assert_eq!((c.tpr, c.fpr), (1.0, 0.5));
        assert!((c.threshold - 0.4).abs() < 1e-12);
        assert!((c.ppv - 0.019802).abs() < 1e-6);

        let c = ppv_threshold(&scores, &labels, 0.0, prev(0.01)).unwrap();
        assert_eq!(c.threshold, f64::NEG_INFINITY);
        assert_eq!(c.tpr, 1.0);

        // a control holds the top score, so every nonempty flagged set has PPV < 1
        let overlap = [0.8, 0.5, 0.9, 0.1];
        let c = ppv_threshold(&overlap, &labels, 1.0, prev(0.01)).unwrap();
        assert!(!c.feasible);
        assert!(ppv_threshold(&overlap, &[true; 4], 0.1, prev(0.01)).is_err());
    }

    #[test]
    fn threshold_rule_matches_probability_cutoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<_> = (0..3000)
            .map(|_| {
                let x: f64 = rng.sample(rand_distr::StandardNormal);
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let y = rng.random::<f64>() < sigmoid(-4.0 + 1.5 * x + 0.5 * z);
                (vec![x, z], y)
            })
            .collect();
        let d = dataset(rows);
        let p = prev(0.05);
        let r = standard_rule(&d, 0.2, p).unwrap();
        assert!(r.feasible && r.train_metrics.ppv >= 0.2);
        let fit = fit_risk_logistic(&d, p).unwrap();
        let scores: Vec<f64> = d.samples().iter().map(|s| fit.linear_predictor(&s.features)).collect();
        let labels: Vec<bool> = d.labels().collect();
        let t = ppv_threshold(&scores, &labels, 0.2, p).unwrap().threshold;
        for s in d.samples() {
            let by_prob = fit.predict_prob(&s.features) > sigmoid(t);
            assert_eq!(r.rule.flags(&s.features), by_prob);
        }
    }

    #[test]
    fn standard_rule_reports_infeasibility_without_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<_> = (0..2000)
            .map(|_| (vec![rng.sample(rand_distr::StandardNormal)], rng.random::<f64>() < 0.01))
            .collect();
        let r = standard_rule(&dataset(rows), 0.9, prev(0.01)).unwrap();
        assert!(!r.feasible);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scan_depends_only_on_ranks(
                raw in proptest::collection::vec((-3.0f64..3.0, any::<bool>()), 4..60),
                alpha in 0.0f64..0.5,
            ) {
                let labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
                prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
                let s: Vec<f64> = raw.iter().map(|r| r.0).collect();
                let t: Vec<f64> = s.iter().map(|v| (2.0 * v).exp() + 1.0).collect();
                let p = prev(0.05);
                let a = ppv_threshold(&s, &labels, alpha, p).unwrap();
                let b = ppv_threshold(&t, &labels, alpha, p).unwrap();
                let fa: Vec<bool> = s.iter().map(|v| *v > a.threshold).collect();
                let fb: Vec<bool> = t.iter().map(|v| *v > b.threshold).collect();
                prop_assert_eq!(fa, fb);
                prop_assert_eq!(a.feasible, b.feasible);
            }

            #[test]
            fn adjustment_shifts_every_log_odds(
                n1 in 1usize..500, n0 in 1usize..5000, p1 in 0.001f64..0.5,
                b0 in -5.0f64..5.0, b1 in -3.0f64..3.0, x in -4.0f64..4.0,
            ) {
                let fit = LogisticFit { intercept: b0, slopes: vec![b1], converged: true, iterations: 0, ridge: 0.0, loglik_trace: vec![] };
                let adj = case_control_adjust(&fit, n1, n0, prev(p1));
                let expect = (p1 * n0 as f64 / ((1.0 - p1) * n1 as f64)).ln();
                prop_assert!((adj.linear_predictor(&[x]) - fit.linear_predictor(&[x]) - expect).abs() < 1e-9);
            }
        }
    }
}
