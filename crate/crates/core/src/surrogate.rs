//! Normal-CDF surrogate for the zero-one indicator, bandwidth selection,
//! and empirical / smoothed operating characteristics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Classifier, Dataset, Prevalence};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Fraction of cases and of controls flagged by `rule`.
pub fn empirical_rates<C: Classifier + ?Sized>(rule: &C, data: &Dataset) -> Result<(f64, f64)> {
    data.require_strata(1)?;
    if rule.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: rule.dim(),
            got: data.dim(),
        });
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    for s in data.samples() {
        if rule.flags(&s.features) {
            if s.label {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok((tp as f64 / data.n1() as f64, fp as f64 / data.n0() as f64))
}

/// Prevalence-weighted PPV `gamma*tpr / (gamma*tpr + fpr)`; 0 when nothing is flagged.
pub fn ppv(tpr: f64, fpr: f64, prev: Prevalence) -> f64 {
    let num = prev.gamma() * tpr;
    let den = num + fpr;
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Row-major design matrix with a leading intercept column, split by label.
///
/// Kept separate from [`Dataset`] so the smoothed objectives can run over
/// contiguous memory.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    /// Columns per row: `p + 1`.
    pub width: usize,
    pub cases: Vec<f64>,
    pub controls: Vec<f64>,
    /// Original row index of each case, in order.
    pub case_rows: Vec<usize>,
}

impl DesignMatrix {
    pub fn new(data: &Dataset) -> Self {
        Self::with_transform(data, |x, out| out.copy_from_slice(x))
    }

    /// Builds the design after mapping each feature row through `transform`.
    pub fn with_transform(data: &Dataset, transform: impl Fn(&[f64], &mut [f64])) -> Self {
        let p = data.dim();
        let width = p + 1;
        let mut cases = Vec::with_capacity(data.n1() * width);
        let mut controls = Vec::with_capacity(data.n0() * width);
        let mut case_rows = Vec::with_capacity(data.n1());
        let mut buf = vec![0.0; p];
        for (i, s) in data.samples().iter().enumerate() {
            transform(&s.features, &mut buf);
            let dst = if s.label {
                case_rows.push(i);
                &mut cases
            } else {
                &mut controls
            };
            dst.push(1.0);
            dst.extend_from_slice(&buf);
        }
        Self {
            width,
            cases,
            controls,
            case_rows,
        }
    }

    pub fn n1(&self) -> usize {
        self.cases.len() / self.width
    }

    pub fn n0(&self) -> usize {
        self.controls.len() / self.width
    }

    pub fn case_scores<'a>(&'a self, beta: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.cases.chunks_exact(self.width).map(move |r| dot(r, beta))
    }

    pub fn control_scores<'a>(&'a self, beta: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.controls.chunks_exact(self.width).map(move |r| dot(r, beta))
    }

    /// Hard-indicator `(tpr, fpr)` of `1{row·beta > 0}`.
    pub fn hard_rates(&self, beta: &[f64]) -> (f64, f64) {
        let tp = self.case_scores(beta).filter(|&s| s > 0.0).count();
        let fp = self.control_scores(beta).filter(|&s| s > 0.0).count();
        (tp as f64 / self.n1() as f64, fp as f64 / self.n0() as f64)
    }

    /// Mean of `Phi(row·beta / h)` over cases and over controls.
    pub fn smoothed_rates(&self, beta: &[f64], h: f64) -> (f64, f64) {
        let t: f64 = self.case_scores(beta).map(|s| normal_cdf(s / h)).sum();
        let f: f64 = self.control_scores(beta).map(|s| normal_cdf(s / h)).sum();
        (t / self.n1() as f64, f / self.n0() as f64)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Smoothed `(tpr, fpr)` of the linear score `b0 + x·b1`, replacing the
/// indicator with `Phi(score / h)`.
pub fn smoothed_rates(beta: &[f64], data: &Dataset, h: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")));
    }
    data.require_strata(1)?;
    if beta.len() != data.dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: data.dim() + 1,
            got: beta.len(),
        });
    }
    Ok(DesignMatrix::new(data).smoothed_rates(beta, h))
}

/// Lower clamp applied to resolved bandwidths.
pub const DEFAULT_H_MIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// `n^(-1/3)` times the spread of the normalized initial scores.
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub method: Bandwidth,
    pub h_min: f64,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self {
            method: Bandwidth::Adaptive,
            h_min: DEFAULT_H_MIN,
        }
    }
}

impl SmoothingSpec {
    pub fn fixed(h: f64) -> Self {
        Self {
            method: Bandwidth::Fixed(h),
            ..Self::default()
        }
    }

    /// The fixed bandwidth, clamped at `h_min`; an error for adaptive specs
    /// or invalid values.
    pub fn resolve_fixed(&self) -> Result<f64> {
        match self.method {
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h.max(self.h_min)),
            Bandwidth::Fixed(h) => Err(Error::InvalidParameter(format!(
                "fixed bandwidth must be positive, got {h}"
            ))),
            Bandwidth::Adaptive => Err(Error::InvalidParameter("adaptive bandwidth needs data".into())),
        }
    }

    /// Resolves `h` for `data` given the initial coefficients `beta0`.
    pub fn resolve(&self, data: &Dataset, beta0: &[f64]) -> Result<f64> {
        match self.method {
            Bandwidth::Fixed(_) => self.resolve_fixed(),
            Bandwidth::Adaptive => adaptive_bandwidth(data, beta0, self.h_min),
        }
    }
}

/// `h = n^(-1/3) * sd(x_i·beta0 / |beta0|)` over all `n` rows (divisor `n - 1`),
/// clamped below at `h_min`.
pub fn adaptive_bandwidth(data: &Dataset, beta0: &[f64], h_min: f64) -> Result<f64> {
    if beta0.len() != data.dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: data.dim() + 1,
            got: beta0.len(),
        });
    }
    let norm = dot(beta0, beta0).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidParameter(
            "initial coefficients must be finite and nonzero".into(),
        ));
    }
    let scores: Vec<f64> = data
        .samples()
        .iter()
        .map(|s| (beta0[0] + dot(&beta0[1..], &s.features)) / norm)
        .collect();
    Ok(bandwidth_from_scores(&scores, h_min))
}

pub(crate) fn bandwidth_from_scores(scores: &[f64], h_min: f64) -> f64 {
    let n = scores.len() as f64;
    if scores.len() < 2 {
        return h_min;
    }
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (n.powf(-1.0 / 3.0) * var.sqrt()).max(h_min)
}
