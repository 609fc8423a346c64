//! Information-transfer DOOLR: the smoothed objective is charged for
//! disagreeing with an external rule on cases, with the charge `eta` chosen
//! by stratified cross-validation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::doolr::{
    canonical_order, kappa_path, logistic_anchor, package, prepare, resolve_h, select, weights, CasePenalty,
    DoolrConfig, DoolrFit, Objective, Prepared,
};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::surrogate::{normal_cdf, ppv, DesignMatrix};
use crate::types::{Dataset, ExternalRule, FittedRule, Prevalence, RuleMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItConfig {
    pub base: DoolrConfig,
    /// Candidate penalty weights; must contain 0.
    pub eta_grid: Vec<f64>,
    pub cv_folds: usize,
    /// Slack on the mean held-out PPV when judging a weight admissible.
    pub cv_ppv_slack: f64,
    /// Optimizer settings for the cross-validation fits; `None` reuses `base`.
    pub cv_base: Option<DoolrConfig>,
}

impl ItConfig {
    pub fn new(base: DoolrConfig) -> Self {
        Self {
            base,
            eta_grid: vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
            cv_folds: 5,
            cv_ppv_slack: 0.005,
            cv_base: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if let Some(cv) = &self.cv_base {
            cv.validate()?;
        }
        if !self.eta_grid.contains(&0.0) {
            return Err(Error::InvalidParameter("eta grid must contain 0".into()));
        }
        if self.eta_grid.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(Error::InvalidParameter("eta values must be finite and >= 0".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidParameter(
                "cross-validation needs at least 2 folds".into(),
            ));
        }
        Ok(())
    }

    fn cv_config(&self) -> &DoolrConfig {
        self.cv_base.as_ref().unwrap_or(&self.base)
    }
}

fn check_external(data: &Dataset, external: &ExternalRule) -> Result<()> {
    if external.values.len() != data.n() {
        return Err(Error::MissingExternal(external.values.len().min(data.n())));
    }
    Ok(())
}

/// Mean over cases of `Phi(-score * signal / h)`, the smoothed share of cases
/// on which the linear rule and the external rule disagree.
pub fn penalty(beta: &[f64], data: &Dataset, external: &ExternalRule, h: f64) -> Result<f64> {
    check_external(data, external)?;
    if beta.len() != data.dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: data.dim() + 1,
            got: beta.len(),
        });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")));
    }
    data.require_strata(1)?;
    let mut total = 0.0;
    for (s, &sig) in data.samples().iter().zip(&external.values) {
        if s.label {
            let score = beta[0] + crate::surrogate::dot(&beta[1..], &s.features);
            total += normal_cdf(-score * sig / h);
        }
    }
    Ok(total / data.n1() as f64)
}

fn raw_penalty(external: &ExternalRule, design: &DesignMatrix, eta: f64) -> CasePenalty {
    CasePenalty {
        signals: design.case_rows.iter().map(|&i| external.values[i]).collect(),
        eta,
    }
}

#[allow(clippy::too_many_arguments)]
fn raw_objective_parts(
    beta: &[f64],
    data: &Dataset,
    external: &ExternalRule,
    kappa: f64,
    eta: f64,
    alpha: f64,
    prev: Prevalence,
    h: f64,
) -> Result<(DesignMatrix, CasePenalty, f64, f64)> {
    // validates inputs and external coverage
    penalty(beta, data, external, h)?;
    if !(0.0..1.0).contains(&kappa) || !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need kappa in [0,1) and eta >= 0, got {kappa} and {eta}"
        )));
    }
    let design = DesignMatrix::new(data);
    let pen = raw_penalty(external, &design, eta);
    let (a, b) = weights(kappa, alpha, prev);
    Ok((design, pen, a, b))
}

/// The penalized Lagrangian divided by `1 + lambda`: the DOOLR objective
/// minus `(1 - kappa) * eta` times [`penalty`].
#[allow(clippy::too_many_arguments)]
pub fn itdoolr_objective(
    beta: &[f64],
    data: &Dataset,
    external: &ExternalRule,
    kappa: f64,
    eta: f64,
    alpha: f64,
    prev: Prevalence,
    h: f64,
) -> Result<f64> {
    let (design, pen, a, b) = raw_objective_parts(beta, data, external, kappa, eta, alpha, prev, h)?;
    Ok(Objective {
        design: &design,
        a,
        b,
        h,
        penalty: Some(pen.at(kappa)),
    }
    .value(beta))
}

#[allow(clippy::too_many_arguments)]
pub fn itdoolr_gradient(
    beta: &[f64],
    data: &Dataset,
    external: &ExternalRule,
    kappa: f64,
    eta: f64,
    alpha: f64,
    prev: Prevalence,
    h: f64,
) -> Result<Vec<f64>> {
    let (design, pen, a, b) = raw_objective_parts(beta, data, external, kappa, eta, alpha, prev, h)?;
    let mut g = vec![0.0; beta.len()];
    Objective {
        design: &design,
        a,
        b,
        h,
        penalty: Some(pen.at(kappa)),
    }
    .value_grad(beta, &mut g);
    Ok(g)
}

/// Everything about a training set that does not depend on `eta`.
struct Problem {
    prep: Prepared,
    anchor: Vec<f64>,
    h: f64,
    signals: Vec<f64>,
}

impl Problem {
    fn new(data: &Dataset, external: &ExternalRule, prev: Prevalence, config: &DoolrConfig) -> Result<Self> {
        data.require_strata(2)?;
        let order = canonical_order(data);
        let data = data.subset(&order);
        let external = external.subset(&order);
        let prep = prepare(&data, config.standardize);
        let anchor = logistic_anchor(&data, prev, config.alpha, prep.standardization.as_ref())?;
        let h = resolve_h(&config.smoothing, &prep.design, &anchor)?;
        let signals = prep.design.case_rows.iter().map(|&i| external.values[i]).collect();
        Ok(Self {
            prep,
            anchor,
            h,
            signals,
        })
    }

    fn fit(&self, eta: f64, prev: Prevalence, config: &DoolrConfig) -> Result<DoolrFit> {
        let pen = CasePenalty {
            signals: self.signals.clone(),
            eta,
        };
        let penalty = (eta > 0.0).then_some(&pen);
        let path = kappa_path(&self.prep.design, &self.anchor, self.h, prev, config, penalty)?;
        let (i, feasible) = select(&path, config.alpha, config.feasibility_tol);
        let rule = package(
            &path[i],
            self.prep.standardization.clone(),
            self.h,
            config.alpha,
            feasible,
            Some(eta),
        );
        Ok(DoolrFit { rule, path })
    }
}

/// Stratified fold labels: cases and controls are shuffled separately and
/// dealt round-robin.
pub fn stratified_folds(data: &Dataset, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed, 6);
    let mut assignment = vec![0; data.n()];
    for label in [true, false] {
        let mut idx: Vec<usize> = data
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    assignment
}

/// Mean held-out rates for one `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub eta: f64,
    pub tpr: f64,
    pub ppv: f64,
}

/// Cross-validated held-out TPR and PPV for every weight in the grid.
pub fn cv_scores(data: &Dataset, external: &ExternalRule, prev: Prevalence, config: &ItConfig) -> Result<Vec<CvScore>> {
    config.validate()?;
    check_external(data, external)?;
    let assignment = stratified_folds(data, config.cv_folds, config.base.seed);
    let cfg = config.cv_config();
    let mut sums = vec![(0.0, 0.0); config.eta_grid.len()];
    for fold in 0..config.cv_folds {
        let (train_idx, test_idx): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|&i| assignment[i] != fold);
        let test = data.subset(&test_idx);
        let train = data.subset(&train_idx);
        let (n1, n0) = (test.n1(), test.n0());
        if n1 == 0 || n0 == 0 || train.n1() < 2 || train.n0() < 2 {
            return Err(Error::EmptyStratum { n1, n0, min: 1 });
        }
        let problem = Problem::new(&train, &external.subset(&train_idx), prev, cfg)?;
        for (e, &eta) in config.eta_grid.iter().enumerate() {
            let fit = problem.fit(eta, prev, cfg)?;
            let (tpr, fpr) = crate::surrogate::empirical_rates(&fit.rule, &test)?;
            sums[e].0 += tpr;
            sums[e].1 += ppv(tpr, fpr, prev);
        }
    }
    let k = config.cv_folds as f64;
    Ok(config
        .eta_grid
        .iter()
        .zip(sums)
        .map(|(&eta, (t, p))| CvScore {
            eta,
            tpr: t / k,
            ppv: p / k,
        })
        .collect())
}

/// Largest mean held-out TPR among weights whose mean held-out PPV is at
/// least `alpha - slack`; smaller weights win ties, and 0 is returned when no
/// weight qualifies.
pub fn choose_eta(scores: &[CvScore], alpha: f64, slack: f64) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.eta.total_cmp(&b.eta));
    let mut best: Option<CvScore> = None;
    for s in sorted {
        if s.ppv >= alpha - slack && best.is_none_or(|b| s.tpr > b.tpr) {
            best = Some(s);
        }
    }
    best.map_or(0.0, |b| b.eta)
}

pub fn select_eta(data: &Dataset, external: &ExternalRule, prev: Prevalence, config: &ItConfig) -> Result<f64> {
    if config.eta_grid == [0.0] {
        config.validate()?;
        return Ok(0.0);
    }
    let scores = cv_scores(data, external, prev, config)?;
    Ok(choose_eta(&scores, config.base.alpha, config.cv_ppv_slack))
}

/// Selects `eta` by cross-validation, then refits on all of `data`.
pub fn itdoolr_fit(data: &Dataset, external: &ExternalRule, prev: Prevalence, config: &ItConfig) -> Result<FittedRule> {
    itdoolr_fit_path(data, external, prev, config).map(|f| f.rule)
}

pub fn itdoolr_fit_path(
    data: &Dataset,
    external: &ExternalRule,
    prev: Prevalence,
    config: &ItConfig,
) -> Result<DoolrFit> {
    config.validate()?;
    check_external(data, external)?;
    let eta = select_eta(data, external, prev, config)?;
    itdoolr_fit_at(data, external, prev, &config.base, eta)
}

/// IT-DOOLR at a fixed `eta`.
pub fn itdoolr_fit_at(
    data: &Dataset,
    external: &ExternalRule,
    prev: Prevalence,
    config: &DoolrConfig,
    eta: f64,
) -> Result<DoolrFit> {
    config.validate()?;
    check_external(data, external)?;
    Problem::new(data, external, prev, config)?.fit(eta, prev, config)
}

/// Held-out metrics convenience used by tests and the harness.
pub fn held_out(rule: &FittedRule, test: &Dataset, prev: Prevalence) -> Result<RuleMetrics> {
    let (tpr, fpr) = crate::surrogate::empirical_rates(rule, test)?;
    Ok(RuleMetrics {
        tpr,
        fpr,
        ppv: ppv(tpr, fpr, prev),
    })
}
