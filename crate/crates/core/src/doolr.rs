//! Direct optimization of a linear rule: the indicator in the PPV-constrained
//! Lagrangian is replaced by `Phi(score / h)`, the smooth objective is
//! maximized by BFGS over unit-norm coefficients for each multiplier on a
//! grid, and the best feasible candidate is kept.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{check_alpha, fit_risk_logistic, ppv_threshold};
use crate::linalg::norm2;
use crate::rng::{derive_seed, stream};
use crate::surrogate::{
    bandwidth_from_scores, dot, normal_cdf, normal_pdf, ppv, Bandwidth, DesignMatrix, SmoothingSpec,
};
use crate::types::{Dataset, FittedRule, LinearRule, Prevalence, RuleMetrics, Standardization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoolrConfig {
    pub alpha: f64,
    /// Values of `kappa = lambda / (1 + lambda)` to scan.
    pub kappa_grid: KappaGrid,
    /// Starts per grid point derived from the primary start.
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once the sup-norm of the projected gradient falls below this.
    pub grad_tol: f64,
    /// Slack on the training PPV when judging feasibility.
    pub feasibility_tol: f64,
    pub smoothing: SmoothingSpec,
    /// Optimize on standardized features (the stored rule keeps the transform).
    pub standardize: bool,
    pub seed: u64,
    /// Stop scanning the grid after this many consecutive grid points with
    /// training TPR below the best feasible one. `None` scans the whole grid.
    pub patience: Option<usize>,
}

impl DoolrConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            kappa_grid: KappaGrid::default(),
            restarts: 5,
            max_iter: 200,
            grad_tol: 1e-6,
            feasibility_tol: 1e-3,
            smoothing: SmoothingSpec::default(),
            standardize: true,
            seed: 0,
            patience: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        self.kappa_grid.validate()?;
        if self.restarts == 0 || self.max_iter == 0 {
            return bad("restarts and max_iter must be positive");
        }
        if !(self.grad_tol > 0.0) || !(self.feasibility_tol >= 0.0) {
            return bad("tolerances must be positive");
        }
        if self.patience == Some(0) {
            return bad("patience must be positive");
        }
        Ok(())
    }
}

/// How the multiplier grid is laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaGrid {
    /// `points` values evenly spaced in `kappa` from 0 to `upper`.
    Uniform { points: usize, upper: f64 },
    /// `points` values whose effective control weight `kappa*alpha / a(kappa)`
    /// (see [`weights`]) is evenly spaced between 0 and its `kappa -> 1`
    /// limit `alpha / (gamma (1 - alpha))`, excluding the limit itself.
    Multiplier { points: usize },
    /// Explicit ascending values in `[0, 1)`.
    Explicit(Vec<f64>),
}

impl Default for KappaGrid {
    fn default() -> Self {
        Self::Multiplier { points: 101 }
    }
}

/// Parses `multiplier:N`, `uniform:N` (upper 0.995), `uniform:N:UPPER`, or a
/// comma-separated list of values.
impl std::str::FromStr for KappaGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse kappa grid '{s}'"));
        let parts: Vec<&str> = s.split(':').collect();
        let grid = match parts.as_slice() {
            ["multiplier", n] => Self::Multiplier {
                points: n.parse().map_err(|_| bad())?,
            },
            ["uniform", n] => Self::Uniform {
                points: n.parse().map_err(|_| bad())?,
                upper: 0.995,
            },
            ["uniform", n, u] => Self::Uniform {
                points: n.parse().map_err(|_| bad())?,
                upper: u.parse().map_err(|_| bad())?,
            },
            [list] => Self::Explicit(
                list.split(',')
                    .map(|v| v.trim().parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?,
            ),
            _ => return Err(bad()),
        };
        grid.validate()?;
        Ok(grid)
    }
}

impl KappaGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            Self::Uniform { points, upper } => {
                if *points == 0 || !(0.0..1.0).contains(upper) {
                    return bad("uniform kappa grid needs points > 0 and upper in [0, 1)");
                }
            }
            Self::Multiplier { points } => {
                if *points == 0 {
                    return bad("kappa grid needs at least one point");
                }
            }
            Self::Explicit(v) => {
                if v.is_empty() {
                    return bad("kappa grid is empty");
                }
                if v.iter().any(|k| !(0.0..1.0).contains(k)) {
                    return bad("kappa grid values must lie in [0, 1)");
                }
                if v.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("kappa grid must be strictly ascending");
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, alpha: f64, prev: Prevalence) -> Vec<f64> {
        match self {
            Self::Uniform { points, upper } => uniform_grid(*points, *upper),
            Self::Multiplier { points } => {
                let g = prev.gamma() * (1.0 - alpha);
                (0..*points)
                    .map(|i| {
                        let r = i as f64 / *points as f64;
                        r / (g + r * (1.0 - g))
                    })
                    .collect()
            }
            Self::Explicit(v) => v.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Uniform { points, .. } | Self::Multiplier { points } => *points,
            Self::Explicit(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `points` evenly spaced values from 0 to `upper` inclusive.
pub fn uniform_grid(points: usize, upper: f64) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..points).map(|i| upper * i as f64 / (points - 1) as f64).collect(),
    }
}

/// Weights `(a, b)` of the objective `a * TPR - b * FPR`.
pub(crate) fn weights(kappa: f64, alpha: f64, prev: Prevalence) -> (f64, f64) {
    (1.0 - kappa + kappa * prev.gamma() * (1.0 - alpha), kappa * alpha)
}

/// Disagreement penalty against external signals on the cases.
#[derive(Debug, Clone)]
pub(crate) struct CasePenalty {
    /// One signal per case row of the design, in design order.
    pub signals: Vec<f64>,
    pub eta: f64,
}

impl CasePenalty {
    /// The penalty at `kappa`. The Lagrangian charges `eta` per unit of
    /// disagreement; dividing by `1 + lambda` leaves `(1 - kappa) * eta`.
    pub fn at(&self, kappa: f64) -> Penalty<'_> {
        Penalty {
            signals: &self.signals,
            weight: (1.0 - kappa) * self.eta,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Penalty<'a> {
    pub signals: &'a [f64],
    pub weight: f64,
}

/// Smoothed objective on a design: `a*TPR~ - b*FPR~ - weight*penalty~`.
pub(crate) struct Objective<'a> {
    pub design: &'a DesignMatrix,
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub penalty: Option<Penalty<'a>>,
}

impl Objective<'_> {
    pub fn value(&self, beta: &[f64]) -> f64 {
        let d = self.design;
        let h = self.h;
        let mut tpr = 0.0;
        let mut pen = 0.0;
        let sig = self.penalty.map(|p| p.signals);
        for (i, r) in d.cases.chunks_exact(d.width).enumerate() {
            let s = dot(r, beta);
            tpr += normal_cdf(s / h);
            if let Some(sig) = sig {
                pen += normal_cdf(-s * sig[i] / h);
            }
        }
        let fpr: f64 = d.control_scores(beta).map(|s| normal_cdf(s / h)).sum();
        let n1 = d.n1() as f64;
        let mut v = self.a * tpr / n1 - self.b * fpr / d.n0() as f64;
        if let Some(p) = self.penalty {
            v -= p.weight * pen / n1;
        }
        v
    }

    /// Value and gradient with respect to `beta`.
    pub fn value_grad(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.design;
        let h = self.h;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n1 = d.n1() as f64;
        let n0 = d.n0() as f64;
        let (wa, wb) = (self.a / (n1 * h), self.b / (n0 * h));
        let mut tpr = 0.0;
        let mut pen = 0.0;
        let pw = self.penalty.map(|p| (p.signals, p.weight / (n1 * h)));
        for (i, r) in d.cases.chunks_exact(d.width).enumerate() {
            let s = dot(r, beta);
            let z = s / h;
            tpr += normal_cdf(z);
            let mut c = wa * normal_pdf(z);
            if let Some((sig, we)) = pw {
                let zp = -s * sig[i] / h;
                pen += normal_cdf(zp);
                c += we * sig[i] * normal_pdf(zp);
            }
            if c != 0.0 {
                for (g, x) in grad.iter_mut().zip(r) {
                    *g += c * x;
                }
            }
        }
        let mut fpr = 0.0;
        for r in d.controls.chunks_exact(d.width) {
            let z = dot(r, beta) / h;
            fpr += normal_cdf(z);
            let c = wb * normal_pdf(z);
            if c != 0.0 {
                for (g, x) in grad.iter_mut().zip(r) {
                    *g -= c * x;
                }
            }
        }
        let mut v = self.a * tpr / n1 - self.b * fpr / n0;
        if let Some(p) = self.penalty {
            v -= p.weight * pen / n1;
        }
        v
    }
}

fn check_inputs(beta: &[f64], data: &Dataset, kappa: f64, h: f64) -> Result<()> {
    if beta.len() != data.dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: data.dim() + 1,
            got: beta.len(),
        });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")));
    }
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::InvalidParameter(format!("kappa must lie in [0,1), got {kappa}")));
    }
    data.require_strata(1)
}

/// `(1 - kappa + kappa*gamma*(1 - alpha)) TPR~(beta) - kappa*alpha FPR~(beta)`,
/// the Lagrangian divided by `1 + lambda`.
pub fn doolr_objective(beta: &[f64], data: &Dataset, kappa: f64, alpha: f64, prev: Prevalence, h: f64) -> Result<f64> {
    check_inputs(beta, data, kappa, h)?;
    let design = DesignMatrix::new(data);
    let (a, b) = weights(kappa, alpha, prev);
    Ok(Objective {
        design: &design,
        a,
        b,
        h,
        penalty: None,
    }
    .value(beta))
}

pub fn doolr_gradient(
    beta: &[f64],
    data: &Dataset,
    kappa: f64,
    alpha: f64,
    prev: Prevalence,
    h: f64,
) -> Result<Vec<f64>> {
    check_inputs(beta, data, kappa, h)?;
    let design = DesignMatrix::new(data);
    let (a, b) = weights(kappa, alpha, prev);
    let mut g = vec![0.0; beta.len()];
    Objective {
        design: &design,
        a,
        b,
        h,
        penalty: None,
    }
    .value_grad(beta, &mut g);
    Ok(g)
}

/// One BFGS ascent over the unit sphere. The iterate is renormalized after
/// every step and search directions are projected onto the tangent space.
/// Returns the unit-norm maximizer and its objective value.
pub(crate) fn ascend(obj: &Objective, start: &[f64], max_iter: usize, grad_tol: f64) -> Result<(Vec<f64>, f64)> {
    const MAX_STEP: f64 = 0.5;
    const ARMIJO: f64 = 1e-4;
    let d = start.len();
    let mut beta = start.to_vec();
    let nb = norm2(&beta);
    if !(nb > 0.0) || !nb.is_finite() {
        return Err(Error::NonFinite("optimizer start".into()));
    }
    beta.iter_mut().for_each(|b| *b /= nb);

    let mut raw = vec![0.0; d];
    let mut f = obj.value_grad(&beta, &mut raw);
    if !f.is_finite() {
        return Err(Error::NonFinite("smoothed objective".into()));
    }
    let mut g = project(&beta, &raw);
    let mut hinv = identity(d);
    let mut fresh = true;
    let mut trial = vec![0.0; d];
    let mut g_new_raw = vec![0.0; d];

    for _ in 0..max_iter {
        if g.iter().all(|x| x.abs() < grad_tol) {
            break;
        }
        let mut dir = matvec(&hinv, &g, d);
        let along = dot(&dir, &beta);
        dir.iter_mut().zip(&beta).for_each(|(x, b)| *x -= along * b);
        let mut slope = dot(&g, &dir);
        if !(slope > 0.0) {
            // curvature estimate lost ascent; fall back to the gradient
            hinv = identity(d);
            dir = g.clone();
            slope = dot(&g, &g);
            fresh = true;
        }
        let len = norm2(&dir);
        let mut t = if len > MAX_STEP { MAX_STEP / len } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            for i in 0..d {
                trial[i] = beta[i] + t * dir[i];
            }
            let nt = norm2(&trial);
            trial.iter_mut().for_each(|x| *x /= nt);
            let ft = obj.value_grad(&trial, &mut g_new_raw);
            if !ft.is_finite() {
                return Err(Error::NonFinite("smoothed objective".into()));
            }
            if ft >= f + ARMIJO * t * slope {
                accepted = Some(ft);
                break;
            }
            t *= 0.5;
        }
        let Some(ft) = accepted else {
            if fresh {
                break;
            }
            hinv = identity(d);
            fresh = true;
            continue;
        };
        let g_new = project(&trial, &g_new_raw);
        let s: Vec<f64> = trial.iter().zip(&beta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * norm2(&s) * norm2(&y) && sy > 0.0 {
            if fresh {
                // scale the initial inverse Hessian to the observed curvature
                let scale = sy / dot(&y, &y);
                hinv.iter_mut().for_each(|x| *x *= scale);
            }
            bfgs_update(&mut hinv, &s, &y, sy, d);
            fresh = false;
        }
        let done = (ft - f).abs() <= 1e-15 * f.abs().max(1.0);
        beta.copy_from_slice(&trial);
        f = ft;
        g = g_new;
        if done {
            break;
        }
    }
    Ok((beta, f))
}

fn project(beta: &[f64], g: &[f64]) -> Vec<f64> {
    let along = dot(beta, g);
    g.iter().zip(beta).map(|(x, b)| x - along * b).collect()
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

fn matvec(m: &[f64], v: &[f64], d: usize) -> Vec<f64> {
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

/// Inverse-Hessian BFGS update for minimizing `-f` with `y = g_old - g_new`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, d: usize) {
    let rho = 1.0 / sy;
    let hy = matvec(h, y, d);
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Starting points for one grid point: the primary start followed by
/// `restarts - 1` Gaussian perturbations of it.
fn perturbed_starts(init: &[f64], restarts: usize, seed: u64, kappa_index: usize) -> Vec<Vec<f64>> {
    let mut rng = stream(derive_seed(seed, kappa_index as u64), 5);
    let sd = 0.25 * norm2(init);
    let mut out = vec![init.to_vec()];
    for _ in 1..restarts {
        out.push(
            init.iter()
                .map(|b| b + sd * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
    }
    out
}

fn best_of(obj: &Objective, starts: &[Vec<f64>], config: &DoolrConfig) -> Result<Vec<f64>> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_err = None;
    for s in starts {
        if norm2(s) == 0.0 {
            continue;
        }
        match ascend(obj, s, config.max_iter, config.grad_tol) {
            Ok((b, f)) => {
                if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
                    best = Some((b, f));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.map(|(b, _)| b)
        .ok_or_else(|| last_err.unwrap_or(Error::NonFinite("no usable start".into())))
}

/// Maximizes the smoothed objective at one `kappa` from `init` and
/// `config.restarts - 1` perturbations of it, on the raw features.
pub fn maximize_for_kappa(
    data: &Dataset,
    kappa: f64,
    prev: Prevalence,
    config: &DoolrConfig,
    init: &[f64],
) -> Result<Vec<f64>> {
    config.validate()?;
    let h = config.smoothing.resolve(data, init)?;
    check_inputs(init, data, kappa, h)?;
    let design = DesignMatrix::new(data);
    let (a, b) = weights(kappa, config.alpha, prev);
    let obj = Objective {
        design: &design,
        a,
        b,
        h,
        penalty: None,
    };
    let idx = config
        .kappa_grid
        .resolve(config.alpha, prev)
        .iter()
        .position(|&k| k == kappa)
        .unwrap_or(0);
    best_of(&obj, &perturbed_starts(init, config.restarts, config.seed, idx), config)
}

/// Design on (optionally standardized) features.
pub(crate) struct Prepared {
    pub design: DesignMatrix,
    pub standardization: Option<Standardization>,
}

pub(crate) fn prepare(data: &Dataset, standardize: bool) -> Prepared {
    let standardization = standardize.then(|| Standardization::fit(data));
    let design = match &standardization {
        Some(st) => DesignMatrix::with_transform(data, |x, out| st.apply_into(x, out)),
        None => DesignMatrix::new(data),
    };
    Prepared {
        design,
        standardization,
    }
}

/// Row order sorting by label, features and external signal, so fits do not
/// depend on the order of the input rows.
pub(crate) fn canonical_order(data: &Dataset) -> Vec<usize> {
    let rows = data.samples();
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (&rows[i], &rows[j]);
        a.label
            .cmp(&b.label)
            .then_with(|| {
                a.features
                    .iter()
                    .zip(&b.features)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| {
                let key = |s: Option<f64>| s.unwrap_or(f64::NEG_INFINITY);
                key(a.external_signal).total_cmp(&key(b.external_signal))
            })
    });
    idx
}

/// Logistic risk direction with its PPV-calibrated intercept, expressed on
/// the design's feature scale and normalized.
pub(crate) fn logistic_anchor(
    data: &Dataset,
    prev: Prevalence,
    alpha: f64,
    standardization: Option<&Standardization>,
) -> Result<Vec<f64>> {
    let fit = fit_risk_logistic(data, prev)?;
    let scores: Vec<f64> = data
        .samples()
        .iter()
        .map(|s| fit.linear_predictor(&s.features))
        .collect();
    let labels: Vec<bool> = data.labels().collect();
    let choice = ppv_threshold(&scores, &labels, alpha, prev)?;
    let mut intercept = fit.intercept;
    if choice.threshold.is_finite() {
        intercept -= choice.threshold;
    }
    let mut beta = vec![intercept];
    match standardization {
        None => beta.extend_from_slice(&fit.slopes),
        Some(st) => {
            for j in 0..fit.slopes.len() {
                beta[0] += fit.slopes[j] * st.means[j];
                beta.push(fit.slopes[j] * st.sds[j]);
            }
        }
    }
    let n = norm2(&beta);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::NonFinite("logistic initial coefficients".into()));
    }
    beta.iter_mut().for_each(|b| *b /= n);
    Ok(beta)
}

pub(crate) fn resolve_h(smoothing: &SmoothingSpec, design: &DesignMatrix, anchor: &[f64]) -> Result<f64> {
    match smoothing.method {
        Bandwidth::Fixed(_) => smoothing.resolve_fixed(),
        Bandwidth::Adaptive => {
            let scores: Vec<f64> = design
                .case_scores(anchor)
                .chain(design.control_scores(anchor))
                .collect();
            Ok(bandwidth_from_scores(&scores, smoothing.h_min))
        }
    }
}

/// One grid point's optimizer output and its hard training rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub kappa: f64,
    /// Unit-norm coefficients on the design scale.
    pub beta: Vec<f64>,
    pub metrics: RuleMetrics,
}

/// Runs the grid: each point starts from the previous point's solution and
/// additionally from `anchor`.
pub(crate) fn kappa_path(
    design: &DesignMatrix,
    anchor: &[f64],
    h: f64,
    prev: Prevalence,
    config: &DoolrConfig,
    penalty: Option<&CasePenalty>,
) -> Result<Vec<PathPoint>> {
    let grid = config.kappa_grid.resolve(config.alpha, prev);
    let mut path: Vec<PathPoint> = Vec::with_capacity(grid.len());
    let mut best_tpr: Option<f64> = None;
    let mut worse_run = 0usize;
    for (idx, &kappa) in grid.iter().enumerate() {
        let (a, b) = weights(kappa, config.alpha, prev);
        let obj = Objective {
            design,
            a,
            b,
            h,
            penalty: penalty.map(|p| p.at(kappa)),
        };
        let primary = path.last().map_or(anchor, |p| p.beta.as_slice());
        let mut starts = perturbed_starts(primary, config.restarts, config.seed, idx);
        if !path.is_empty() {
            starts.push(anchor.to_vec());
        }
        let beta = best_of(&obj, &starts, config)?;
        let (tpr, fpr) = design.hard_rates(&beta);
        let metrics = RuleMetrics {
            tpr,
            fpr,
            ppv: ppv(tpr, fpr, prev),
        };
        path.push(PathPoint { kappa, beta, metrics });

        if let Some(patience) = config.patience {
            let feasible = metrics.ppv >= config.alpha - config.feasibility_tol;
            if feasible && best_tpr.is_none_or(|bt| tpr >= bt) {
                best_tpr = Some(tpr);
                worse_run = 0;
            } else if best_tpr.is_some() {
                worse_run += 1;
                if worse_run >= patience {
                    break;
                }
            }
        }
    }
    Ok(path)
}

/// Feasible point with the largest TPR (earliest on ties), else the point
/// with the largest PPV. Returns the index and whether it is feasible.
pub(crate) fn select(path: &[PathPoint], alpha: f64, tol: f64) -> (usize, bool) {
    let mut best: Option<usize> = None;
    for (i, p) in path.iter().enumerate() {
        if p.metrics.ppv >= alpha - tol && best.is_none_or(|b| p.metrics.tpr > path[b].metrics.tpr) {
            best = Some(i);
        }
    }
    if let Some(b) = best {
        return (b, true);
    }
    let mut b = 0;
    for (i, p) in path.iter().enumerate() {
        let q = &path[b].metrics;
        if p.metrics.ppv > q.ppv || (p.metrics.ppv == q.ppv && p.metrics.tpr > q.tpr) {
            b = i;
        }
    }
    (b, false)
}

pub(crate) fn package(
    point: &PathPoint,
    standardization: Option<Standardization>,
    h: f64,
    alpha: f64,
    feasible: bool,
    eta: Option<f64>,
) -> FittedRule {
    let rule = LinearRule::from_beta(&point.beta, standardization).normalized();
    FittedRule {
        rule,
        kappa_hat: point.kappa,
        lambda_hat: point.kappa / (1.0 - point.kappa),
        h,
        alpha,
        train_metrics: point.metrics,
        eta,
        feasible,
    }
}

/// Full fit plus the per-grid-point path.
#[derive(Debug, Clone)]
pub struct DoolrFit {
    pub rule: FittedRule,
    pub path: Vec<PathPoint>,
}

pub fn doolr_fit(data: &Dataset, prev: Prevalence, config: &DoolrConfig) -> Result<FittedRule> {
    doolr_fit_path(data, prev, config).map(|f| f.rule)
}

pub fn doolr_fit_path(data: &Dataset, prev: Prevalence, config: &DoolrConfig) -> Result<DoolrFit> {
    config.validate()?;
    data.require_strata(2)?;
    let data = &data.subset(&canonical_order(data));
    let prep = prepare(data, config.standardize);
    let anchor = logistic_anchor(data, prev, config.alpha, prep.standardization.as_ref())?;
    let h = resolve_h(&config.smoothing, &prep.design, &anchor)?;
    let path = kappa_path(&prep.design, &anchor, h, prev, config, None)?;
    let (i, feasible) = select(&path, config.alpha, config.feasibility_tol);
    let rule = package(&path[i], prep.standardization, h, config.alpha, feasible, None);
    Ok(DoolrFit { rule, path })
}
