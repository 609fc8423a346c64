//! Browser demo: fit rules on simulated data, trace the kappa path, and plot
//! the smoothed indicator.
//!
//! Each operation returns a JSON string; the `*_json` functions are plain Rust
//! so they run natively as well.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ppvrule::doolr::{doolr_fit_path, DoolrConfig, KappaGrid};
use ppvrule::glm::standard_rule;
use ppvrule::harness::evaluate;
use ppvrule::simgen::{ScenarioKind, ScenarioSpec};
use ppvrule::surrogate::normal_cdf;
use ppvrule::{Error, LinearRule, Prevalence, Result, RuleMetrics};

const P1: f64 = 0.01;
const TEST_SEED_OFFSET: u64 = 1_000_003;
const MAX_POINTS: usize = 4000;

#[derive(Serialize)]
struct Line {
    method: &'static str,
    /// Boundary `a + b1 x1 + b2 x2 = 0` in raw feature units.
    a: f64,
    b: [f64; 2],
    train: RuleMetrics,
    test: RuleMetrics,
}

#[derive(Serialize)]
struct FitView {
    /// `[x1, x2, label]`, controls thinned to keep the plot light.
    points: Vec<[f64; 3]>,
    rules: Vec<Line>,
    kappa_hat: f64,
    h: f64,
}

#[derive(Serialize)]
struct PathView {
    kappa: f64,
    tpr: f64,
    ppv: f64,
}

#[derive(Serialize)]
struct CurveView {
    x: Vec<f64>,
    smoothed: Vec<f64>,
    indicator: Vec<f64>,
}

fn scenario(name: &str) -> Result<ScenarioKind> {
    let kind: ScenarioKind = name.parse()?;
    if kind.has_external() {
        return Err(Error::InvalidParameter(format!(
            "scenario '{name}' has three features; pick a 2-feature one"
        )));
    }
    Ok(kind)
}

fn config(alpha: f64, grid_points: usize) -> DoolrConfig {
    let mut c = DoolrConfig::new(alpha);
    c.kappa_grid = KappaGrid::Multiplier { points: grid_points };
    c.restarts = 2;
    c
}

fn raw_line(rule: &LinearRule) -> (f64, [f64; 2]) {
    let mut a = rule.intercept;
    let mut b = [rule.slopes[0], rule.slopes[1]];
    if let Some(s) = &rule.standardization {
        for ((bj, sd), m) in b.iter_mut().zip(&s.sds).zip(&s.means) {
            *bj /= sd;
            a -= *bj * m;
        }
    }
    (a, b)
}

pub fn fit_json(scenario_name: &str, n: usize, seed: u64, alpha: f64) -> Result<String> {
    let kind = scenario(scenario_name)?;
    let prev = Prevalence::new(P1)?;
    let train = ScenarioSpec::new(kind, n, seed).generate()?.data;
    let test = ScenarioSpec::new(kind, 20_000, seed.wrapping_add(TEST_SEED_OFFSET))
        .generate()?
        .data;

    let standard = standard_rule(&train, alpha, prev)?;
    let doolr = doolr_fit_path(&train, prev, &config(alpha, 41))?.rule;
    let mut rules = Vec::new();
    for (method, fit) in [("standard", &standard), ("doolr", &doolr)] {
        let (a, b) = raw_line(&fit.rule);
        rules.push(Line {
            method,
            a,
            b,
            train: fit.train_metrics,
            test: evaluate(fit, &test, prev)?,
        });
    }

    let stride = (train.n() / MAX_POINTS).max(1);
    let points = train
        .samples()
        .iter()
        .enumerate()
        .filter(|(i, s)| s.label || i % stride == 0)
        .map(|(_, s)| [s.features[0], s.features[1], f64::from(u8::from(s.label))])
        .collect();
    let view = FitView {
        points,
        rules,
        kappa_hat: doolr.kappa_hat,
        h: doolr.h,
    };
    Ok(serde_json::to_string(&view).expect("plain data serializes"))
}

pub fn kappa_path_json(scenario_name: &str, n: usize, seed: u64, alpha: f64, grid_points: usize) -> Result<String> {
    let kind = scenario(scenario_name)?;
    let prev = Prevalence::new(P1)?;
    let train = ScenarioSpec::new(kind, n, seed).generate()?.data;
    let fit = doolr_fit_path(&train, prev, &config(alpha, grid_points))?;
    let view: Vec<PathView> = fit
        .path
        .iter()
        .map(|p| PathView {
            kappa: p.kappa,
            tpr: p.metrics.tpr,
            ppv: p.metrics.ppv,
        })
        .collect();
    Ok(serde_json::to_string(&view).expect("plain data serializes"))
}

pub fn surrogate_curve_json(h: f64, points: usize) -> Result<String> {
    if !(h > 0.0 && h.is_finite()) || points < 2 {
        return Err(Error::InvalidParameter("need h > 0 and at least 2 points".into()));
    }
    let x: Vec<f64> = (0..points)
        .map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64)
        .collect();
    let view = CurveView {
        smoothed: x.iter().map(|&v| normal_cdf(v / h)).collect(),
        indicator: x.iter().map(|&v| f64::from(u8::from(v > 0.0))).collect(),
        x,
    };
    Ok(serde_json::to_string(&view).expect("plain data serializes"))
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// Simulates a 2-feature scenario and fits Standard and DOOLR.
#[wasm_bindgen]
pub fn fit(scenario: &str, n: u32, seed: u32, alpha: f64) -> std::result::Result<String, JsError> {
    js(fit_json(scenario, n as usize, seed.into(), alpha))
}

/// Training TPR and PPV at every DOOLR grid point.
#[wasm_bindgen]
pub fn kappa_path(
    scenario: &str,
    n: u32,
    seed: u32,
    alpha: f64,
    grid_points: u32,
) -> std::result::Result<String, JsError> {
    js(kappa_path_json(
        scenario,
        n as usize,
        seed.into(),
        alpha,
        grid_points as usize,
    ))
}

/// `Phi(x / h)` next to `1{x > 0}` on `[-1, 1]`.
#[wasm_bindgen]
pub fn surrogate_curve(h: f64, points: u32) -> std::result::Result<String, JsError> {
    js(surrogate_curve_json(h, points as usize))
}
