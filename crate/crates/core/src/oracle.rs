//! Exhaustive search over two-feature linear rules, used as an independent
//! reference for the smoothed optimizers.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::surrogate::ppv;
use crate::types::{Dataset, LinearRule, Prevalence};

/// The feasible rule with the largest training TPR (ties to smaller FPR) over
/// `angle_steps` directions on `[0, pi)`, both orientations, and every
/// midpoint cutoff between distinct projections.
pub fn brute_force_best_linear(data: &Dataset, alpha: f64, prev: Prevalence, angle_steps: usize) -> Result<LinearRule> {
    if data.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            expected: 2,
            got: data.dim(),
        });
    }
    if angle_steps < 360 {
        return Err(Error::InvalidParameter(format!(
            "angle_steps must be at least 360, got {angle_steps}"
        )));
    }
    data.require_strata(1)?;
    let (n1, n0) = (data.n1() as f64, data.n0() as f64);
    let labels: Vec<bool> = data.labels().collect();
    let mut best: Option<(usize, usize, LinearRule)> = None;
    let mut proj: Vec<(f64, bool)> = Vec::with_capacity(data.n());
    for step in 0..angle_steps {
        let theta = PI * step as f64 / angle_steps as f64;
        for sign in [1.0, -1.0] {
            let (c, s) = (sign * theta.cos(), sign * theta.sin());
            proj.clear();
            proj.extend(
                data.samples()
                    .iter()
                    .zip(&labels)
                    .map(|(r, &l)| (c * r.features[0] + s * r.features[1], l)),
            );
            proj.sort_by(|a, b| b.0.total_cmp(&a.0));
            let (mut tp, mut fp) = (0usize, 0usize);
            for i in 0..proj.len() {
                if proj[i].1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
                let cut = match proj.get(i + 1) {
                    Some(next) if next.0 == proj[i].0 => continue,
                    Some(next) => 0.5 * (proj[i].0 + next.0),
                    None => proj[i].0 - 1.0,
                };
                if ppv(tp as f64 / n1, fp as f64 / n0, prev) < alpha {
                    continue;
                }
                if best
                    .as_ref()
                    .is_none_or(|(btp, bfp, _)| tp > *btp || (tp == *btp && fp < *bfp))
                {
                    best = Some((tp, fp, LinearRule::new(-cut, vec![c, s])));
                }
            }
        }
    }
    best.map(|(_, _, r)| r).ok_or(Error::NoFeasibleRule { alpha })
}
