use rc_core::harness::baselines::{coordinate_median, geometric_median, sample_mean};
use rc_core::harness::config::ExperimentConfig;
use rc_core::harness::sweep::{format_value, median, quantile, run_sweep};
use rc_core::harness::verify::{run_suite, Suite};
use rc_core::stability::{rate_formula, RateFamily, RateQuery};
use rc_core::{Error, PointSet};

fn config(extra: &str, local: &str, global: &str, rho: f64) -> String {
    format!(
        r#"{{
  "generator": {{"name": "gaussian_isotropic", "params": {{"d": 5}}}},
  "n": 1000,
  "recipe": {{
    "epsilon": 0.1,
    "rho": {rho},
    "k": 1,
    "local_strategy": {local},
    "global_strategy": {global},
    "seed": 0
  }},
  "estimator": {{"name": "filter_mean"}},
  "metrics": ["l2_mean_error"],
  "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9]{extra}
}}"#
    )
}

const NONE: &str = r#"{"name": "none"}"#;

#[derive(Debug, PartialEq)]
struct Row {
    hash: String,
    seed: u64,
    metric: String,
    value: f64,
}

fn rows(csv: &[u8]) -> Vec<Row> {
    let text = std::str::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("config_hash,seed,metric,value"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Row { hash: f[0].into(), seed: f[1].parse().unwrap(), metric: f[2].into(), value: f[3].parse().unwrap() }
        })
        .collect()
}

#[test]
fn malformed_config_reports_line() {
    let text = config("", NONE, NONE, 0.0).replace("\"n\": 1000,", "\"n\": 1000");
    match ExperimentConfig::from_json(&text) {
        Err(Error::Malformed { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
    let unknown = config("", NONE, NONE, 0.0).replace("\"n\": 1000,", "\"n\": 1000,\n  \"bogus\": 1,");
    assert!(matches!(ExperimentConfig::from_json(&unknown), Err(Error::Malformed { .. })));
    let no_seeds = config("", NONE, NONE, 0.0).replace("[1, 2, 3, 4, 5, 6, 7, 8, 9]", "[]");
    assert!(ExperimentConfig::from_json(&no_seeds).is_err());
}

#[test]
fn config_hash_ignores_seeds_only() {
    let a = ExperimentConfig::from_json(&config("", NONE, NONE, 0.0)).unwrap();
    let mut b = a.clone();
    b.seeds = vec![42];
    assert_eq!(a.config_hash(), b.config_hash());
    assert_eq!(a.config_hash().len(), 16);
    assert!(a.config_hash().chars().all(|c| c.is_ascii_hexdigit()));
    b.recipe.epsilon = 0.05;
    assert_ne!(a.config_hash(), b.config_hash());
}

#[test]
fn sweep_is_reproducible_and_aggregates_match() {
    let grid = r#", "sweep": {"epsilon": [0.02, 0.05, 0.1]}"#;
    let global = r#"{"name": "cluster", "params": {"radius": 5}}"#;
    let cfg = ExperimentConfig::from_json(&config(grid, NONE, global, 0.0)).unwrap();
    let mut first = Vec::new();
    let result = run_sweep(&cfg, 2, &mut first).unwrap();
    let mut second = Vec::new();
    run_sweep(&cfg, 1, &mut second).unwrap();
    assert_eq!(first, second);

    let rows = rows(&first);
    assert_eq!(rows.len(), 3 * cfg.seeds.len());
    assert_eq!(result.summaries.len(), 3);
    for s in &result.summaries {
        let vals: Vec<f64> = rows.iter().filter(|r| r.hash == s.config_hash).map(|r| r.value).collect();
        assert_eq!(vals.len(), cfg.seeds.len());
        assert!((median(&vals) - s.median).abs() <= 1e-9 * s.median);
    }
    let medians: Vec<f64> = result.summaries.iter().map(|s| s.median).collect();
    assert!(medians.windows(2).all(|w| w[0] < w[1]), "{medians:?}");
}

#[test]
fn clean_error_matches_rate() {
    // The recipe is empty, but the filter still runs at epsilon = 0.1.
    let cfg = ExperimentConfig::from_json(&config("", NONE, NONE, 0.0)).unwrap();
    let mut csv = Vec::new();
    let result = run_sweep(&cfg, 1, &mut csv).unwrap();
    let rate = rate_formula(
        &RateQuery { family: RateFamily::Subgaussian, epsilon: 0.1, n: Some(1000), d: 5, tau: 0.1 },
        0.2,
    )
    .unwrap();
    let ratio = result.summaries[0].median / rate;
    assert!((0.1..=3.0).contains(&ratio), "{ratio}");
}

#[test]
fn error_grows_additively_in_rho() {
    let grid = r#", "sweep": {"rho": [0.0, 0.1, 0.2, 0.4]}"#;
    let local = r#"{"name": "common_shift", "params": {}}"#;
    let global = r#"{"name": "cluster", "params": {"radius": 100}}"#;
    let cfg = ExperimentConfig::from_json(&config(grid, local, global, 0.0)).unwrap();
    let mut csv = Vec::new();
    let result = run_sweep(&cfg, 1, &mut csv).unwrap();
    assert_eq!(result.degenerate_runs, 0);
    let m: Vec<f64> = result.summaries.iter().map(|s| s.median).collect();
    let diff = m[3] - m[0];
    assert!((0.2..=0.8).contains(&diff), "{m:?}");
}

#[test]
fn degenerate_runs_become_nan_rows() {
    let mut cfg = ExperimentConfig::from_json(&config("", NONE, NONE, 0.0)).unwrap();
    cfg.n = 10;
    // floor(eps n) = 0 while the sample covariance of 10 points exceeds the threshold.
    cfg.recipe.epsilon = 0.01;
    cfg.delta = Some(0.01);
    let mut csv = Vec::new();
    let result = run_sweep(&cfg, 1, &mut csv).unwrap();
    let rows = rows(&csv);
    assert_eq!(rows.len(), cfg.seeds.len());
    let nan = rows.iter().filter(|r| r.value.is_nan()).count();
    assert!(nan > 0);
    assert_eq!(nan, result.degenerate_runs);
    assert_eq!(result.summaries[0].nan_count, nan);
}

#[test]
fn value_formatting() {
    assert_eq!(format_value(f64::NAN), "NaN");
    assert_eq!(format_value(1.0), "1.00000000000e0");
    let v: f64 = format_value(std::f64::consts::PI).parse().unwrap();
    assert!((v - std::f64::consts::PI).abs() < 1e-11);
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    assert_eq!(median(&[3.0, f64::NAN, 1.0, 2.0]), 2.0);
}

#[test]
fn baselines() {
    let s = PointSet::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![100.0, 100.0]])
        .unwrap();
    assert_eq!(sample_mean(&s).unwrap(), vec![20.4, 20.4]);
    assert_eq!(coordinate_median(&s).unwrap(), vec![1.0, 1.0]);
    let g = geometric_median(&s).unwrap();
    assert!(g.iter().all(|x| (0.0..=1.5).contains(x)), "{g:?}");

    let square = PointSet::from_rows(&[vec![1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![-1.0, -1.0]]).unwrap();
    assert!(geometric_median(&square).unwrap().iter().all(|x| x.abs() < 1e-9));
    assert!(sample_mean(&PointSet::new(2, vec![]).unwrap()).is_err());
}

#[test]
fn saddle_suite_passes() {
    let report = run_suite(Suite::Saddle);
    assert!(report.passed(), "{report:?}");
    assert_eq!(Suite::parse_list("all").unwrap().len(), 7);
    assert!(Suite::parse_list("nope").is_none());
}
