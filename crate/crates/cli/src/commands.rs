//! The subcommands. Each returns its output files and a text report; the
//! caller decides where they go.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use specradius_core::bounds::{
    build_adaptive_collection, build_adaptive_perturbation, build_lb_perturbation, chi2_quantile_lower_noncentral,
    chi2_quantile_upper, grid_conditions, hypercube_chi2, risk_lower_bound_from_chi2, AdaptiveGridParams,
    HypercubeMember, HypercubeMixture, PerturbationVariant, Regime,
};
use specradius_core::mcharness::{
    compare_direct_indirect, level_and_power, mc_mixture_chi2, quadratic_form_exceedance, rate_sweep,
    rate_sweep_empirical, EmpiricalSpec, Header, Regressor, ResultDoc, SimSettings, SweepResult,
};
use specradius_core::model::Tables;
use specradius_core::radii::{
    adaptive_radii, direct_task_radius, dyadic_collection, split_radii, Component, Flavor, RadiusReport,
};
use specradius_core::seqcore::{combine_min_lemma_check, IndexSet};

use crate::config::{Command, Resolved};
use crate::error::CliError;

pub const RADIUS_HEADER: &str = "scenario,flavor,component,rho2,rho,k_star,variance_at_k,bias_at_k,truncation_binding";
pub const SIMULATE_HEADER: &str = "scenario,test,alpha,k_or_K,N,seed,type1,type1_se,alt_id,type2,type2_se";
pub const RATES_HEADER: &str =
    "scenario,kind,which,regressor,points,fitted_slope,slope_se,target_exponent,table_source,tolerance,pass";
pub const PLOT_HEADER: &str = "kind,noise,x,y";
pub const COMPARE_HEADER: &str = "noise,rho_direct,rho_indirect,ratio";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Output {
    /// `(file name, contents)` in a fixed order.
    pub files: Vec<(String, Vec<u8>)>,
    pub report: String,
    /// Some check of the command did not pass.
    pub failed: bool,
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn json_doc<T: Serialize>(r: &Resolved, kind: &str, records: Vec<T>) -> Result<Vec<u8>, CliError> {
    let header = Header {
        kind: kind.into(),
        scenario: Some(r.scenario.clone()),
        config: serde_json::to_value(&r.config).map_err(|e| CliError::Io(e.to_string()))?,
        seed: Some(r.config.experiment.seed),
    };
    Ok(specradius_core::mcharness::to_json(&ResultDoc::new(header, records))?.into_bytes())
}

pub fn run(cmd: Command, r: &Resolved) -> Result<Output, CliError> {
    match cmd {
        Command::Radius => radius(r),
        Command::Simulate => simulate(r),
        Command::Rates => rates(r),
        Command::BoundsCheck => bounds_check(r),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusRow {
    pub scenario: String,
    pub flavor: String,
    pub component: String,
    pub rho2: f64,
    pub rho: f64,
    pub k_star: usize,
    pub variance_at_k: f64,
    pub bias_at_k: f64,
    pub truncation_binding: bool,
}

fn radius_row(scenario: &str, flavor: &str, rep: &RadiusReport) -> RadiusRow {
    RadiusRow {
        scenario: scenario.into(),
        flavor: flavor.into(),
        component: rep.component.name().into(),
        rho2: rep.rho2,
        rho: rep.rho(),
        k_star: rep.k_star,
        variance_at_k: rep.variance_at_k,
        bias_at_k: rep.bias_at_k,
        truncation_binding: rep.truncation_binding,
    }
}

fn max_collection(t: &Tables) -> IndexSet {
    let sigma = t.sig2.iter().any(|&x| x > 0.0).then(|| t.sigma[0]);
    dyadic_collection(t.eps[0], sigma, t.k_max)
}

pub fn radius_rows(r: &Resolved) -> Result<Vec<RadiusRow>, CliError> {
    let t = r.scenario.tables()?;
    let name = &r.scenario.name;
    let full = IndexSet::Full(t.k_max);
    let mut rows = Vec::new();
    for flavor in [Flavor::Indirect, Flavor::Direct] {
        let s = split_radii(&t, flavor, &full)?;
        for rep in [&s.eps, &s.sigma, &s.combined, &s.reparam] {
            rows.push(radius_row(name, flavor.name(), rep));
        }
    }
    let dt = direct_task_radius(&t, &full)?;
    let k = dt.k_d;
    let c = &dt.direct.combined;
    let task = RadiusReport {
        rho2: dt.rho2,
        k_star: k,
        variance_at_k: t.v2[k - 1] * c.variance_at_k,
        bias_at_k: t.v2[k - 1] * t.a2[k - 1],
        component: Component::Combined,
        truncation_binding: c.truncation_binding,
        vanishing: c.vanishing,
    };
    rows.push(radius_row(name, "direct_task", &task));
    let coll = max_collection(&t);
    for flavor in [Flavor::Indirect, Flavor::Direct] {
        let ad = adaptive_radii(&t, &coll, flavor)?;
        let label = format!("adaptive_{}", flavor.name());
        for rep in [&ad.reminder, &ad.main, &ad.inflated] {
            rows.push(radius_row(name, &label, rep));
        }
    }
    Ok(rows)
}

fn radius(r: &Resolved) -> Result<Output, CliError> {
    let rows = radius_rows(r)?;
    let mut report = String::new();
    writeln!(report, "{:<18} {:<11} {:>12} {:>8} {:>12} {:>12} trunc", "flavor", "component", "rho2", "k*", "var@k", "bias@k").ok();
    for w in &rows {
        writeln!(
            report,
            "{:<18} {:<11} {:>12.6e} {:>8} {:>12.4e} {:>12.4e} {}",
            w.flavor, w.component, w.rho2, w.k_star, w.variance_at_k, w.bias_at_k, w.truncation_binding
        )
        .ok();
    }
    let json = json_doc(r, "radius", rows.clone())?;
    Ok(Output { files: vec![("radius.csv".into(), csv_bytes(&rows)?), ("radius.json".into(), json)], report, failed: false })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimRow {
    pub scenario: String,
    pub test: String,
    pub alpha: f64,
    #[serde(rename = "k_or_K")]
    pub k_or_k: String,
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
    pub type1: f64,
    pub type1_se: f64,
    pub alt_id: String,
    pub type2: f64,
    pub type2_se: f64,
}

fn simulate(r: &Resolved) -> Result<Output, CliError> {
    let x = &r.config.experiment;
    let settings = SimSettings { n: x.n, seed: x.seed, k_cap: x.k_cap, split: x.split };
    let results = level_and_power(&r.scenario, &r.tests, x.alpha, &settings)?;
    let mut rows = Vec::new();
    let mut report = String::new();
    let mut failed = false;
    for lp in &results {
        let l = &lp.level;
        for (alt, p) in &lp.power.type2 {
            rows.push(SimRow {
                scenario: l.scenario.clone(),
                test: l.test.clone(),
                alpha: l.alpha,
                k_or_k: l.dims.clone(),
                n: l.n,
                seed: l.seed,
                type1: l.type1.p,
                type1_se: l.type1.se,
                alt_id: alt.clone(),
                type2: p.p,
                type2_se: p.se,
            });
        }
        let level_ok = l.type1.within(l.alpha);
        let worst = lp.power.worst_type2().expect("dictionary is nonempty");
        let power_ok = worst.within(lp.beta);
        failed |= !(level_ok && power_ok);
        writeln!(
            report,
            "{} {} {}: type1 {:.4} (max over λ at {}) level {} | type2 {:.4} at separation² {:.4e} vs {} {}",
            l.scenario,
            l.test,
            l.dims,
            l.type1.p,
            l.type1_lambda,
            if level_ok { "ok" } else { "EXCEEDED" },
            worst.p,
            lp.power.separation2,
            lp.beta,
            if power_ok { "ok" } else { "EXCEEDED" },
        )
        .ok();
    }
    let json = json_doc(r, "simulate", results)?;
    Ok(Output { files: vec![("simulate.csv".into(), csv_bytes(&rows)?), ("simulate.json".into(), json)], report, failed })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub scenario: String,
    pub kind: String,
    pub which: String,
    pub regressor: String,
    pub points: usize,
    pub fitted_slope: f64,
    pub slope_se: f64,
    pub target_exponent: Option<f64>,
    pub table_source: Option<String>,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct PlotRow {
    kind: String,
    noise: f64,
    x: f64,
    y: f64,
}

fn regressor_name(s: &SweepResult) -> &'static str {
    match s.target.as_ref().map(|t| t.regressor) {
        Some(Regressor::LogLog) => "loglog",
        _ => "log",
    }
}

fn rates(r: &Resolved) -> Result<Output, CliError> {
    let x = &r.config.experiment;
    let mut sweeps: Vec<(String, SweepResult)> = Vec::new();
    for &kind in &r.kinds {
        sweeps.push((kind.name().into(), rate_sweep(&r.scenario, kind, r.which, &r.grid)?));
    }
    let spec = EmpiricalSpec { alpha: x.alpha, beta: x.beta, n: x.empirical_n, seed: x.seed, k_cap: x.k_cap };
    for &test in &r.empirical {
        let s = rate_sweep_empirical(&r.scenario, test, r.which, &r.grid, &spec)?;
        sweeps.push((format!("empirical_{}", test.name()), s));
    }
    let mut rows = Vec::new();
    let mut plot = Vec::new();
    let mut report = String::new();
    for (label, s) in &sweeps {
        let t = s.target.as_ref();
        rows.push(RateRow {
            scenario: s.scenario.clone(),
            kind: label.clone(),
            which: s.which.name().into(),
            regressor: regressor_name(s).into(),
            points: s.points.len(),
            fitted_slope: s.fit.slope,
            slope_se: s.fit.slope_se,
            target_exponent: t.map(|t| t.exponent),
            table_source: t.map(|t| t.source.clone()),
            tolerance: t.map(|t| t.tolerance),
            pass: s.pass,
        });
        plot.extend(s.points.iter().map(|p| PlotRow { kind: label.clone(), noise: p.noise, x: p.x, y: p.y }));
        let verdict = match s.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "no target",
        };
        let target = t.map_or("-".to_string(), |t| format!("{:.4} ± {}", t.exponent, t.tolerance));
        writeln!(report, "{label:<24} {}: slope {:.4} (se {:.2e}) target {target} {verdict}", regressor_name(s), s.fit.slope, s.fit.slope_se).ok();
    }
    let cmp = compare_direct_indirect(&r.scenario, r.which, &r.grid)?;
    writeln!(
        report,
        "direct/indirect ratio in [{:.4}, {:.4}], trend slope {:.4}: {}",
        cmp.min_ratio, cmp.max_ratio, cmp.trend_slope, cmp.verdict
    )
    .ok();
    let failed = sweeps.iter().any(|(_, s)| s.pass == Some(false));
    let docs: Vec<SweepResult> = sweeps.into_iter().map(|(_, s)| s).collect();
    Ok(Output {
        files: vec![
            ("rates.csv".into(), csv_bytes(&rows)?),
            ("rates_plot.csv".into(), csv_bytes(&plot)?),
            ("rates_compare.csv".into(), csv_bytes(&cmp.points)?),
            ("rates.json".into(), json_doc(r, "rates", docs)?),
        ],
        report,
        failed,
    })
}

/// One line of the bounds report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub check: String,
    pub id: usize,
    pub pass: bool,
    pub detail: String,
    /// What to rerun when the check fails.
    pub config: serde_json::Value,
}

impl Check {
    pub fn line(&self) -> String {
        format!("check={} id={} status={} {}", self.check, self.id, if self.pass { "PASS" } else { "FAIL" }, self.detail)
    }
}

pub fn grid_params(regime: Regime, eps: f64, k_max: usize) -> AdaptiveGridParams {
    let (lo, hi) = match regime {
        Regime::Poly => (0.75, 1.5),
        Regime::Exp => (0.5, 1.0),
        Regime::Nu => (0.5, 1.5),
    };
    AdaptiveGridParams { regime, lo, hi, fixed: 1.0, eps, k_max, r: 1.0 }
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Poly => "poly",
        Regime::Exp => "exp",
        Regime::Nu => "nu",
    }
}

fn sorted(mut v: Vec<f64>, descending: bool) -> Vec<f64> {
    v.sort_by(|a, b| if descending { b.total_cmp(a) } else { a.total_cmp(b) });
    v
}

/// Random values on a coarse lattice half of the time, so ties occur.
fn lemma_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let coarse = rng.gen_bool(0.5);
    (0..n).map(|_| if coarse { f64::from(rng.gen_range(0u8..5)) / 4.0 } else { rng.gen::<f64>() }).collect()
}

pub fn bound_checks(r: &Resolved) -> Result<Vec<Check>, CliError> {
    let b = &r.config.bounds;
    let seed = r.config.experiment.seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for upper in [true, false] {
        let name = if upper { "qchi_upper" } else { "qchi_lower" };
        for i in 0..b.configs {
            let k = rng.gen_range(1..=8usize);
            let e: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..2.0)).collect();
            let mu: Vec<f64> = if upper { Vec::new() } else { (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect() };
            let u = rng.gen_range(0.01..0.3);
            let bound =
                if upper { chi2_quantile_upper(&e, k, u)? } else { chi2_quantile_lower_noncentral(&e, &mu, k, u)? };
            let draw_seed = rng.gen::<u64>();
            let p = quadratic_form_exceedance(&e, &mu, k, bound, upper, b.draws, draw_seed);
            out.push(Check {
                check: name.into(),
                id: i,
                pass: p.within(u),
                detail: format!("k={k} u={u} bound={bound} exceedance={} se={}", p.p, p.se),
                config: serde_json::json!({"e": e, "mu": mu, "k": k, "u": u, "draws": b.draws, "seed": draw_seed}),
            });
        }
    }
    for i in 0..b.configs {
        let k = rng.gen_range(1..=4usize);
        // |θ_j| ≤ 0.2 at signal-to-noise 0.3..0.6: small enough for the
        // closed form to be near exact, large enough for the MC to resolve it
        let theta: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..0.2)).collect();
        let noise_var: Vec<f64> = theta.iter().map(|t| (t / rng.gen_range(0.3..0.6)).powi(2)).collect();
        let mix = HypercubeMixture {
            members: vec![HypercubeMember { kappa: k, theta: theta.clone(), weights: vec![1.0; k] }],
            noise_var: noise_var.clone(),
        };
        let closed = hypercube_chi2(&mix)?.value;
        let draw_seed = rng.gen::<u64>();
        let (mc, se) = mc_mixture_chi2(&[theta.clone()], &noise_var, b.chi2_draws, draw_seed);
        let rel = (mc - closed).abs() / closed;
        out.push(Check {
            check: "hypercube_chi2".into(),
            id: i,
            pass: mc <= closed + 3.0 * se && rel <= 0.15,
            detail: format!("k={k} closed={closed} mc={mc} se={se} rel={rel}"),
            config: serde_json::json!({"theta": theta, "noise_var": noise_var, "draws": b.chi2_draws, "seed": draw_seed}),
        });
    }
    for (i, alpha) in [0.1, 0.2, 0.5].into_iter().enumerate() {
        let v = risk_lower_bound_from_chi2(2.0 * alpha * alpha);
        out.push(Check {
            check: "risk_from_chi2".into(),
            id: i,
            pass: v == 1.0 - alpha,
            detail: format!("alpha={alpha} value={v}"),
            config: serde_json::json!({"alpha": alpha}),
        });
    }
    let mut lemma_fail = Vec::new();
    for i in 0..b.lemma_checks {
        let n = rng.gen_range(1..=50usize);
        let a = sorted(lemma_values(&mut rng, n), true);
        let bb = sorted(lemma_values(&mut rng, n), false);
        let c = sorted(lemma_values(&mut rng, n), false);
        if !combine_min_lemma_check(&a, &bb, &c)?.holds {
            lemma_fail.push(serde_json::json!({"id": i, "a": a, "b": bb, "c": c}));
        }
    }
    out.push(Check {
        check: "argmin_lemma".into(),
        id: 0,
        pass: lemma_fail.is_empty(),
        detail: format!("trials={} failures={}", b.lemma_checks, lemma_fail.len()),
        config: serde_json::Value::Array(lemma_fail),
    });
    let t = r.scenario.tables()?;
    for (i, variant) in [PerturbationVariant::Minimax, PerturbationVariant::DirectTask].into_iter().enumerate() {
        let p = build_lb_perturbation(&t, variant, b.alpha)?;
        out.push(Check {
            check: "lb_perturbation".into(),
            id: i,
            pass: p.passes(),
            detail: format!(
                "scenario={} variant={variant:?} k={} member={} separation={} chi2={}",
                r.scenario.name, p.k, p.member, p.separation_ok, p.chi2_ok
            ),
            config: serde_json::json!({"scenario": r.scenario, "variant": variant, "alpha": b.alpha}),
        });
    }
    for (i, &regime) in r.grids.iter().enumerate() {
        let small = grid_params(regime, b.small_eps, b.grid_k_max);
        let v = grid_conditions(&small, b.grid_alpha)?;
        let mut detail = match (&v.report, &v.failure) {
            (Some(c), _) => format!("eps={} n={} c1={} c2={} c3={} c2_worst={:e}", b.small_eps, c.n, c.c1, c.c2, c.c3, c.c2_worst),
            (None, Some(f)) => format!("eps={} failure=\"{f}\"", b.small_eps),
            (None, None) => String::new(),
        };
        let mut pass = v.holds();
        if pass {
            let pert = build_adaptive_perturbation(&build_adaptive_collection(&small)?, b.grid_alpha)?;
            write!(detail, " perturbation={}", pert.passes()).ok();
            pass &= pert.passes();
        }
        out.push(Check {
            check: format!("adaptive_grid_{}_small", regime_name(regime)),
            id: i,
            pass,
            detail,
            config: serde_json::json!({"params": small, "alpha": b.grid_alpha}),
        });
        let large = grid_params(regime, b.large_eps, b.grid_k_max);
        let v = grid_conditions(&large, b.grid_alpha)?;
        out.push(Check {
            check: format!("adaptive_grid_{}_large", regime_name(regime)),
            id: i,
            pass: v.c3_violated(),
            detail: format!("eps={} c3_violated={}", b.large_eps, v.c3_violated()),
            config: serde_json::json!({"params": large, "alpha": b.grid_alpha}),
        });
    }
    Ok(out)
}

fn bounds_check(r: &Resolved) -> Result<Output, CliError> {
    let checks = bound_checks(r)?;
    let mut report = String::new();
    for c in &checks {
        writeln!(report, "{}", c.line()).ok();
    }
    let failing: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
    for c in &failing {
        writeln!(report, "failing_config check={} id={} {}", c.check, c.id, c.config).ok();
    }
    writeln!(report, "summary checks={} failed={}", checks.len(), failing.len()).ok();
    Ok(Output { files: vec![("bounds.txt".into(), report.clone().into_bytes())], report, failed: !failing.is_empty() })
}
