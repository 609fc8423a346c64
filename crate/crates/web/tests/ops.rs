use serde_json::Value;

use ppvrule_web::{fit_json, kappa_path_json, surrogate_curve_json};

#[test]
fn fit_reports_both_rules() {
    let v: Value = serde_json::from_str(&fit_json("linear", 1500, 2, 0.04).unwrap()).unwrap();
    let rules = v["rules"].as_array().unwrap();
    assert_eq!(rules.len(), 2);
    assert_eq!(rules[0]["method"], "standard");
    assert_eq!(rules[1]["method"], "doolr");
    for r in rules {
        assert_eq!(r["b"].as_array().unwrap().len(), 2);
        assert!(r["test"]["tpr"].as_f64().unwrap() > 0.5);
    }
    let points = v["points"].as_array().unwrap();
    assert!(!points.is_empty() && points.len() <= 1500);
    assert!(points.iter().any(|p| p[2] == 1.0));
}

#[test]
fn fit_rejects_three_feature_scenarios() {
    assert!(fit_json("external-1", 1500, 2, 0.04).is_err());
    assert!(fit_json("unknown", 1500, 2, 0.04).is_err());
}

#[test]
fn kappa_path_covers_the_grid() {
    let v: Value = serde_json::from_str(&kappa_path_json("linear", 1500, 3, 0.04, 11).unwrap()).unwrap();
    let path = v.as_array().unwrap();
    assert_eq!(path.len(), 11);
    assert_eq!(path[0]["kappa"], 0.0);
    assert!(path.windows(2).all(|w| w[0]["kappa"].as_f64() < w[1]["kappa"].as_f64()));
}

#[test]
fn surrogate_curve_sharpens_with_small_h() {
    let v: Value = serde_json::from_str(&surrogate_curve_json(1e-3, 5).unwrap()).unwrap();
    assert_eq!(v["x"], serde_json::json!([-1.0, -0.5, 0.0, 0.5, 1.0]));
    assert_eq!(v["indicator"], serde_json::json!([0.0, 0.0, 0.0, 1.0, 1.0]));
    let s: Vec<f64> = v["smoothed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(s[0] < 1e-12 && (s[2] - 0.5).abs() < 1e-15 && s[4] > 1.0 - 1e-12);
    assert!(surrogate_curve_json(0.0, 5).is_err());
}
