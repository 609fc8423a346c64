//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! `cargo test --release -p ppvrule --test acceptance` runs everything;
//! trailing arguments select criteria by number, e.g. `-- 1 8`.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use ppvrule::doolr::{doolr_fit, doolr_gradient, doolr_objective, DoolrConfig, KappaGrid};
use ppvrule::glm::{case_control_adjust, fit_logistic, LogisticOptions};
use ppvrule::harness::{emit_table, run_benchmark, BenchmarkConfig, BenchmarkTable, Execution, Method, TableFormat};
use ppvrule::itdoolr::{itdoolr_fit, itdoolr_gradient, itdoolr_objective, ItConfig};
use ppvrule::oracle::brute_force_best_linear;
use ppvrule::rng::stream;
use ppvrule::simgen::{gen_external, gen_linear, ExternalScenario, ScenarioKind, ScenarioSpec};
use ppvrule::surrogate::{empirical_rates, smoothed_rates};
use ppvrule::{Dataset, LabeledSample, LinearRule, Prevalence, SamplingDesign};

const REPS: usize = 100;
const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn prev() -> Prevalence {
    Prevalence::new(0.01).unwrap()
}

fn bench_doolr() -> DoolrConfig {
    DoolrConfig {
        kappa_grid: KappaGrid::Multiplier { points: 51 },
        ..DoolrConfig::new(0.04)
    }
}

fn bench(scenario: ScenarioKind, n: usize, methods: &[Method], alphas: &[f64]) -> BenchmarkTable {
    let mut c = BenchmarkConfig::new(scenario, methods.to_vec(), alphas.to_vec());
    c.reps = REPS;
    c.n_train = n;
    c.seed = SEED;
    c.settings.doolr = bench_doolr();
    c.settings.it = ItConfig::new(bench_doolr());
    c.settings.it.cv_base = Some(DoolrConfig {
        kappa_grid: KappaGrid::Multiplier { points: 26 },
        restarts: 2,
        ..bench_doolr()
    });
    let table = run_benchmark(&c).expect("benchmark runs");
    print!("{}", emit_table(&table, TableFormat::Markdown));
    table
}

fn tpr(t: &BenchmarkTable, alpha: f64, m: Method) -> f64 {
    t.row(alpha, m).unwrap().tpr_mean
}

fn ppv_of(t: &BenchmarkTable, alpha: f64, m: Method) -> f64 {
    t.row(alpha, m).unwrap().ppv_mean
}

fn check(parts: &[(bool, String)]) -> Outcome {
    Outcome {
        pass: parts.iter().all(|p| p.0),
        detail: parts
            .iter()
            .map(|(ok, s)| format!("{s} [{}]", if *ok { "ok" } else { "miss" }))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn criterion_1() -> Outcome {
    let ms = [
        Method::Standard,
        Method::PluginLogistic,
        Method::PluginKnn,
        Method::Doolr,
    ];
    let t = bench(ScenarioKind::Linear { contaminated: false }, 2500, &ms, &[0.04]);
    let s = tpr(&t, 0.04, Method::Standard);
    let d = tpr(&t, 0.04, Method::Doolr);
    let mut parts = vec![
        ((0.94..=1.0).contains(&s), format!("standard TPR {s:.3} in [0.94, 1]")),
        ((0.92..=1.0).contains(&d), format!("doolr TPR {d:.3} in [0.92, 1]")),
    ];
    for m in ms {
        let p = ppv_of(&t, 0.04, m);
        parts.push((
            (0.030..=0.060).contains(&p),
            format!("{m} PPV {p:.4} in [0.030, 0.060]"),
        ));
    }
    check(&parts)
}

fn criterion_2() -> Outcome {
    let ms = [Method::Standard, Method::PluginKnn, Method::Doolr];
    let t = bench(ScenarioKind::Linear { contaminated: true }, 5000, &ms, &[0.04]);
    let (s, k, d) = (
        tpr(&t, 0.04, Method::Standard),
        tpr(&t, 0.04, Method::PluginKnn),
        tpr(&t, 0.04, Method::Doolr),
    );
    check(&[
        (d >= 0.90, format!("doolr TPR {d:.3} >= 0.90")),
        (d - s >= 0.20, format!("doolr - standard {:.3} >= 0.20", d - s)),
        (k >= 0.90, format!("plugin-knn TPR {k:.3} >= 0.90")),
    ])
}

fn criterion_3() -> Outcome {
    let ms = [Method::Standard, Method::PluginKnn, Method::Doolr];
    let t = bench(ScenarioKind::Nonlinear, 5000, &ms, &[0.04]);
    let (s, k, d) = (
        tpr(&t, 0.04, Method::Standard),
        tpr(&t, 0.04, Method::PluginKnn),
        tpr(&t, 0.04, Method::Doolr),
    );
    check(&[
        (
            k >= d && d >= s,
            format!("ordering knn {k:.3} >= doolr {d:.3} >= standard {s:.3}"),
        ),
        (d >= 0.70, format!("doolr TPR {d:.3} >= 0.70")),
        (d - s >= 0.10, format!("doolr - standard {:.3} >= 0.10", d - s)),
    ])
}

fn criterion_4() -> Outcome {
    let ms = [
        Method::Standard,
        Method::PluginLogistic,
        Method::PluginKnn,
        Method::Doolr,
    ];
    let t = bench(ScenarioKind::Piecewise, 5000, &ms, &[0.04]);
    let mut parts = Vec::new();
    for m in ms {
        let p = ppv_of(&t, 0.04, m);
        parts.push((p >= 0.030, format!("{m} PPV {p:.4} >= 0.030")));
    }
    let gap = tpr(&t, 0.04, Method::PluginKnn) - tpr(&t, 0.04, Method::Standard);
    parts.push((gap >= 0.10, format!("plugin-knn - standard {gap:.3} >= 0.10")));
    check(&parts)
}

fn criterion_5() -> Outcome {
    let t = bench(
        ScenarioKind::Linear { contaminated: false },
        5000,
        &[Method::Doolr],
        &[0.030, 0.045],
    );
    let mut parts = Vec::new();
    for (a, floor) in [(0.030, 0.88), (0.045, 0.85)] {
        let d = tpr(&t, a, Method::Doolr);
        let p = ppv_of(&t, a, Method::Doolr);
        parts.push((d >= floor, format!("alpha {a}: doolr TPR {d:.3} >= {floor}")));
        parts.push((p >= a - 0.005, format!("alpha {a}: PPV {p:.4} >= {:.3}", a - 0.005)));
    }
    check(&parts)
}

fn criterion_6() -> Outcome {
    let ms = [Method::Doolr, Method::ItDoolr];
    let one = bench(ScenarioKind::External(ExternalScenario::I), 2500, &ms, &[0.04]);
    let three = bench(ScenarioKind::External(ExternalScenario::III), 2500, &ms, &[0.04]);
    let g1 = tpr(&one, 0.04, Method::ItDoolr) - tpr(&one, 0.04, Method::Doolr);
    let g3 = tpr(&three, 0.04, Method::ItDoolr) - tpr(&three, 0.04, Method::Doolr);
    check(&[
        (g1 >= 0.03, format!("scenario I: it-doolr - doolr {g1:.3} >= 0.03")),
        (g3 >= -0.03, format!("scenario III: it-doolr - doolr {g3:.3} >= -0.03")),
    ])
}

fn criterion_7() -> Outcome {
    let ms = [Method::Standard, Method::Doolr];
    let t = bench(ScenarioKind::NestedCaseControl, 2100, &ms, &[0.04]);
    let (s, d) = (tpr(&t, 0.04, Method::Standard), tpr(&t, 0.04, Method::Doolr));
    let p = ppv_of(&t, 0.04, Method::Doolr);
    check(&[
        (d >= 0.85, format!("doolr TPR {d:.3} >= 0.85")),
        (d - s >= 0.10, format!("doolr - standard {:.3} >= 0.10", d - s)),
        (
            (0.030..=0.060).contains(&p),
            format!("doolr PPV {p:.4} in [0.030, 0.060]"),
        ),
    ])
}

fn random_beta(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn max_fd_error(f: impl Fn(&[f64]) -> f64, beta: &[f64], grad: &[f64]) -> f64 {
    let scale = grad.iter().fold(1e-8_f64, |m, g| m.max(g.abs()));
    let mut worst = 0.0_f64;
    for j in 0..beta.len() {
        let step = 1e-5;
        let mut up = beta.to_vec();
        let mut dn = beta.to_vec();
        up[j] += step;
        dn[j] -= step;
        let fd = (f(&up) - f(&dn)) / (2.0 * step);
        worst = worst.max((fd - grad[j]).abs() / scale);
    }
    worst
}

fn gradient_checks() -> (bool, String) {
    let (data, ext) = gen_external(1500, ExternalScenario::II, 11);
    let ext = ext.to_decisions();
    let mut rng = stream(SEED, 81);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let beta = random_beta(&mut rng, 4);
        let kappa = rng.random_range(0.0..0.99);
        let eta = rng.random_range(0.0..2.0);
        let h = rng.random_range(0.2..2.0);
        let g = doolr_gradient(&beta, &data, kappa, 0.04, prev(), h).unwrap();
        worst = worst.max(max_fd_error(
            |b| doolr_objective(b, &data, kappa, 0.04, prev(), h).unwrap(),
            &beta,
            &g,
        ));
        let g = itdoolr_gradient(&beta, &data, &ext, kappa, eta, 0.04, prev(), h).unwrap();
        worst = worst.max(max_fd_error(
            |b| itdoolr_objective(b, &data, &ext, kappa, eta, 0.04, prev(), h).unwrap(),
            &beta,
            &g,
        ));
    }
    (
        worst < 1e-5,
        format!("gradients: worst relative error {worst:.1e} < 1e-5"),
    )
}

fn oracle_equivalence() -> (bool, String) {
    let config = DoolrConfig::new(0.04);
    let mut worst = 0.0_f64;
    let mut infeasible = 0;
    for n in [500, 2000] {
        for contaminated in [false, true] {
            for s in 0..5 {
                let data = gen_linear(n, contaminated, 900 + s);
                let fit = doolr_fit(&data, prev(), &config).unwrap();
                let oracle = brute_force_best_linear(&data, 0.04, prev(), 3600);
                let Ok(oracle) = oracle else {
                    infeasible += 1;
                    continue;
                };
                let (ot, _) = empirical_rates(&oracle, &data).unwrap();
                if !fit.feasible {
                    infeasible += 1;
                }
                worst = worst.max((fit.train_metrics.tpr - ot).abs());
            }
        }
    }
    (
        worst <= 0.03 && infeasible == 0,
        format!("oracle: worst |doolr - oracle| train TPR {worst:.3} <= 0.03, infeasible {infeasible}"),
    )
}

fn surrogate_limit() -> (bool, String) {
    let data = gen_linear(1000, false, 5);
    let beta = [-4.0, 1.0, 1.3];
    let min_abs = data
        .samples()
        .iter()
        .map(|s| (beta[0] + beta[1] * s.features[0] + beta[2] * s.features[1]).abs())
        .fold(f64::INFINITY, f64::min);
    let rule = LinearRule::new(beta[0], beta[1..].to_vec());
    let (et, ef) = empirical_rates(&rule, &data).unwrap();
    let (st, sf) = smoothed_rates(&beta, &data, 1e-6 * min_abs).unwrap();
    let diff = (et - st).abs().max((ef - sf).abs());
    (
        min_abs > 0.0 && diff < 1e-6,
        format!("surrogate limit: max difference {diff:.1e} < 1e-6"),
    )
}

fn reduction() -> (bool, String) {
    let (data, ext) = gen_external(1500, ExternalScenario::I, 12);
    let mut cfg = ItConfig::new(bench_doolr());
    cfg.eta_grid = vec![0.0];
    let it = itdoolr_fit(&data, &ext, prev(), &cfg).unwrap();
    let base = doolr_fit(&data, prev(), &cfg.base).unwrap();
    let test = gen_external(5000, ExternalScenario::I, 13).0;
    let same = it.rule == base.rule
        && test
            .samples()
            .iter()
            .all(|s| it.rule.score(&s.features).to_bits() == base.rule.score(&s.features).to_bits());
    (same, "reduction: eta grid {0} reproduces doolr bit for bit".into())
}

fn remark_one() -> (bool, String) {
    let mut rng = stream(SEED, 82);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let n1 = rng.random_range(5..200);
        let n0 = rng.random_range(20..4000);
        let p1 = rng.random_range(0.001..0.5);
        let mut rows = Vec::new();
        for i in 0..n1 + n0 {
            let x = rng.sample::<f64, _>(StandardNormal) + if i < n1 { 1.0 } else { 0.0 };
            rows.push(LabeledSample::new(vec![x], i < n1));
        }
        let data = Dataset::new(rows, vec!["x".into()], SamplingDesign::CaseControl).unwrap();
        let fit = fit_logistic(&data, &LogisticOptions::default()).unwrap();
        let prev = Prevalence::new(p1).unwrap();
        let adjusted = case_control_adjust(&fit, n1, n0, prev);
        let expected = fit.intercept + (p1 * n0 as f64 / ((1.0 - p1) * n1 as f64)).ln();
        worst = worst.max((adjusted.intercept - expected).abs());
        if adjusted.slopes != fit.slopes {
            worst = f64::INFINITY;
        }
    }
    (
        worst == 0.0,
        format!("case-control shift: worst deviation {worst:e} == 0"),
    )
}

fn determinism() -> (bool, String) {
    let mut c = BenchmarkConfig::new(
        ScenarioKind::Linear { contaminated: true },
        vec![Method::Standard, Method::PluginKnn, Method::Doolr],
        vec![0.04],
    );
    c.reps = 6;
    c.n_train = 1000;
    c.n_test = 5000;
    c.settings.doolr.kappa_grid = KappaGrid::Multiplier { points: 21 };
    let parallel = emit_table(&run_benchmark(&c).unwrap(), TableFormat::Csv);
    c.execution = Execution::Serial;
    let serial = emit_table(&run_benchmark(&c).unwrap(), TableFormat::Csv);
    let kinds = [
        "linear",
        "linear-contaminated",
        "piecewise",
        "nonlinear",
        "external-1",
        "external-2",
        "external-3",
        "nested-cc",
    ];
    let stable = kinds.iter().all(|k| {
        let spec = ScenarioSpec::new(k.parse().unwrap(), 420, 77);
        let (a, b) = (spec.generate().unwrap(), spec.generate().unwrap());
        a.data == b.data && a.external == b.external
    });
    (
        parallel == serial && stable,
        format!(
            "determinism: serial == parallel {}, generators stable {stable}",
            parallel == serial
        ),
    )
}

fn criterion_8() -> Outcome {
    let parts = [
        gradient_checks(),
        oracle_equivalence(),
        surrogate_limit(),
        reduction(),
        remark_one(),
        determinism(),
    ];
    check(&parts)
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 8] = [
        (1, "linear", criterion_1),
        (2, "linear with contamination", criterion_2),
        (3, "nonlinear", criterion_3),
        (4, "piecewise linear", criterion_4),
        (5, "PPV targets 0.030 and 0.045", criterion_5),
        (6, "external information", criterion_6),
        (7, "nested case-control", criterion_7),
        (8, "property suite", criterion_8),
    ];
    let mut lines = Vec::new();
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let line = format!(
            "{} criterion {id} ({name}, {:.0}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        println!("{line}");
        lines.push((o.pass, line));
    }
    println!("\nacceptance summary");
    for (_, l) in &lines {
        println!("{l}");
    }
    if lines.iter().all(|l| l.0) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
