use specradius_core::mcharness::{
    alternatives_for, design, empirical_radius, estimate_risk, from_json, to_json, upper_constant, Header,
    ResultDoc, RiskEstimate, TestKind, ALL_TESTS, SCHEMA_VERSION,
};
use specradius_core::model::{sample_observation, NoiseModel, Scenario};
use specradius_core::presets;
use specradius_core::radii::Flavor;
use specradius_core::seqcore::IndexSet;
use specradius_core::testing::{optimal_dimension, run_test, upper_constant_sq, TestConfig, ThresholdRule};
use specradius_core::Error;

const K_CAP: usize = presets::SIM_K_CAP;

fn ord_mild_sd() -> Scenario {
    presets::preset("ord-mild-sd").unwrap().scenario
}

fn noiseless() -> Scenario {
    ord_mild_sd().with_noise(NoiseModel::homoscedastic(0.0, 0.0))
}

#[test]
fn golden_verdict_seed_42() {
    let sc = ord_mild_sd();
    let t = sc.tables().unwrap();
    let k = optimal_dimension(&t, Flavor::Indirect, &IndexSet::Full(K_CAP)).unwrap();
    assert_eq!(k, 4);
    let obs = sample_observation(&t.theta0, &t.v, &t.eps, &t.sigma, k, 42, 0);
    let v = run_test(&obs, &t, TestConfig::single(Flavor::Indirect, ThresholdRule::Chi2, k, 0.05)).unwrap();
    assert!(!v.reject);
    assert!((v.statistic - -0.43778312502590166).abs() < 1e-12, "{}", v.statistic);
    // recomputed from the raw draws
    let w: Vec<f64> = (1..=k).map(|j| (j * j) as f64).collect();
    let est: f64 = obs.y.iter().zip(&w).map(|(y, w)| w * (y * y - 0.0025)).sum();
    let x: Vec<f64> = w.iter().map(|w| w * 0.0025).collect();
    let l = 20f64.ln().sqrt();
    let rq = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mf = x.iter().cloned().fold(0.0, f64::max);
    let thr = 2.0 * l * rq + 2.0 * l * l * mf;
    assert!((est - thr - v.statistic).abs() < 1e-12);
}

#[test]
fn conservative_at_half_level() {
    let sc = ord_mild_sd();
    let t = sc.tables().unwrap();
    let d = design(&t, TestKind::Indirect, 0.5, K_CAP).unwrap();
    let r = estimate_risk(&sc, &t, &d, &[], 10_000, 1).unwrap();
    assert!(r.type1.p < 0.25, "{}", r.type1.p);
}

#[test]
fn noiseless_alternatives_always_detected() {
    let sc = noiseless();
    let t = sc.tables().unwrap();
    for kind in ALL_TESTS {
        let d = design(&t, kind, 0.05, K_CAP).unwrap();
        // above r·a_k² no class member can hide beyond the test window
        let alts = alternatives_for(&t, &d, 2.0 * t.r * d.reference_rho2).unwrap();
        let r = estimate_risk(&sc, &t, &d, &alts, 200, 3).unwrap();
        assert_eq!(r.type1.count, 0);
        assert!(r.type2.values().all(|p| p.count == 0), "{kind:?} {r:?}");
    }
}

#[test]
fn power_at_upper_constant() {
    let sc = ord_mild_sd();
    let t = sc.tables().unwrap();
    let d = design(&t, TestKind::Indirect, 0.05, K_CAP).unwrap();
    let a2 = upper_constant_sq(t.r, t.kappa, 0.05).unwrap();
    let alts = alternatives_for(&t, &d, a2 * d.reference_rho2).unwrap();
    let r = estimate_risk(&sc, &t, &d, &alts, 10_000, 5).unwrap();
    assert_eq!(r.type2.len(), 3);
    assert!(r.worst_type2().unwrap().within(0.05));
    assert!(r.type1.within(0.05));
}

#[test]
fn risk_is_independent_of_thread_count() {
    let sc = presets::preset("ord-mild-gof").unwrap().scenario;
    let t = sc.tables().unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let d = design(&t, TestKind::IndirectMax, 0.2, K_CAP).unwrap();
            let alts = alternatives_for(&t, &d, d.reference_rho2).unwrap();
            estimate_risk(&sc, &t, &d, &alts, 3000, 99).unwrap()
        })
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(1));
}

#[test]
fn empirical_radius_golden() {
    let sc = ord_mild_sd();
    let t = sc.tables().unwrap();
    let d = design(&t, TestKind::Indirect, 0.05, K_CAP).unwrap();
    let e = empirical_radius(&sc, &t, &d, 0.05, 2000, 42).unwrap();
    assert!((e.a_hat - 4.541518536358103).abs() < 1e-12, "{}", e.a_hat);
    assert!(e.a_hat <= upper_constant(&t, &d).unwrap());
    assert!((e.bracket.1 - e.bracket.0) <= 0.05 * e.bracket.1);
    assert!(e.monotone);
    assert!(!e.widened);
}

#[test]
fn noiseless_radius_is_the_truncation_floor() {
    // a spike of height sqrt(r) a_k just past the window is in the class
    // and invisible, so the scaling settles at sqrt(r)
    let sc = noiseless();
    let t = sc.tables().unwrap();
    let d = design(&t, TestKind::Indirect, 0.05, K_CAP).unwrap();
    let e = empirical_radius(&sc, &t, &d, 0.05, 100, 1).unwrap();
    let root_r = t.r.sqrt();
    assert!(e.bracket.0 <= root_r && root_r <= e.bracket.1, "{:?}", e.bracket);
    assert!(e.monotone);
}

fn sample_doc() -> ResultDoc<RiskEstimate> {
    let sc = ord_mild_sd();
    let t = sc.tables().unwrap();
    let d = design(&t, TestKind::Markov, 0.1, K_CAP).unwrap();
    let alts = alternatives_for(&t, &d, 3.0 * d.reference_rho2).unwrap();
    let r = estimate_risk(&sc, &t, &d, &alts, 500, 8).unwrap();
    let header = Header { kind: "risk".into(), scenario: Some(sc), config: serde_json::json!({"n": 500}), seed: Some(8) };
    ResultDoc::new(header, vec![r])
}

#[test]
fn persistence_round_trip_is_byte_identical() {
    let doc = sample_doc();
    let text = to_json(&doc).unwrap();
    let back: ResultDoc<RiskEstimate> = from_json(&text).unwrap();
    assert_eq!(back, doc);
    assert_eq!(to_json(&back).unwrap(), text);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("risk.json");
    specradius_core::mcharness::persist(&doc, &path).unwrap();
    let loaded: ResultDoc<RiskEstimate> = specradius_core::mcharness::load(&path).unwrap();
    specradius_core::mcharness::persist(&loaded, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn missing_field_is_named() {
    let mut v = serde_json::to_value(sample_doc()).unwrap();
    v["records"][0].as_object_mut().unwrap().remove("type1_lambda");
    let e = from_json::<RiskEstimate>(&v.to_string()).unwrap_err();
    assert!(matches!(e, Error::Schema(_)));
    assert!(e.to_string().contains("type1_lambda"), "{e}");
}

#[test]
fn old_schema_needs_migration() {
    let mut v = serde_json::to_value(sample_doc()).unwrap();
    v["schema_version"] = serde_json::json!(SCHEMA_VERSION + 1);
    let e = from_json::<RiskEstimate>(&v.to_string()).unwrap_err();
    assert!(e.to_string().contains("migrate"), "{e}");
}
