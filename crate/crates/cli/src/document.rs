//! JSON persistence of fitted rules.

use serde::{Deserialize, Serialize};

use ppvrule::plugin::PluginRisk;
use ppvrule::{Classifier, LinearRule, RuleMetrics};

pub const SCHEMA_VERSION: u32 = 1;

/// The decision function of a saved rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    /// `1{intercept + z·slopes > 0}` with `z` the standardized input.
    Linear(LinearRule),
    /// `1{risk log-odds > logit_threshold}`.
    Plugin {
        risk: PluginRisk,
        #[serde(with = "extended_float")]
        logit_threshold: f64,
    },
}

impl Classifier for Model {
    fn dim(&self) -> usize {
        match self {
            Model::Linear(r) => r.slopes.len(),
            Model::Plugin { risk, .. } => risk.as_risk().dim(),
        }
    }

    fn flags(&self, x: &[f64]) -> bool {
        match self {
            Model::Linear(r) => r.flags(x),
            Model::Plugin { risk, logit_threshold } => risk.as_risk().predict_logit(x) > *logit_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDocument {
    pub schema_version: u32,
    pub method: String,
    pub feature_names: Vec<String>,
    #[serde(flatten)]
    pub model: Model,
    pub alpha: f64,
    pub prevalence: f64,
    pub kappa_hat: Option<f64>,
    /// `"inf"` when the cutoff lies beyond every finite multiplier.
    #[serde(with = "extended_float::option")]
    pub lambda_hat: Option<f64>,
    pub h: Option<f64>,
    pub eta: Option<f64>,
    /// Resubstitution metrics of the saved decision function.
    pub train_metrics: RuleMetrics,
    pub feasible: bool,
    /// Seconds since the Unix epoch.
    pub fit_timestamp: u64,
    pub seed: u64,
}

/// Floats that may be infinite, written as numbers or `"inf"` / `"-inf"`.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    fn to_repr(v: f64) -> Repr {
        match v {
            f64::INFINITY => Repr::Text("inf".into()),
            f64::NEG_INFINITY => Repr::Text("-inf".into()),
            v => Repr::Number(v),
        }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(E::custom(format!("expected a number or \"inf\", got \"{t}\""))),
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.map(to_repr).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<Repr>::deserialize(d)?.map(from_repr).transpose()
        }
    }
}
