//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when
//! a criterion fails outside the known failures listed in `KNOWN`.

use std::collections::BTreeSet;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specradius_cli::commands::grid_params;
use specradius_core::bounds::{
    build_lb_perturbation, chi2_quantile_lower_noncentral, chi2_quantile_upper, grid_conditions, hypercube_chi2,
    risk_lower_bound_from_chi2, HypercubeMember, HypercubeMixture, PerturbationVariant, Regime,
};
use specradius_core::mcharness::{
    compare_direct_indirect, level_and_power, mc_mixture_chi2, quadratic_form_exceedance, rate_sweep,
    sweep_scenario, theoretical_point, LevelPower, RadiusKind, SimSettings, ALL_TESTS,
};
use specradius_core::model::Scenario;
use specradius_core::presets::{self, dyadic_grid, Which};
use specradius_core::seqcore::combine_min_lemma_check;

const SEED: u64 = 20_240_601;
const N_SIM: usize = 10_000;

/// Sub-checks that fail for documented reasons: the `exp` grid is
/// degenerate at `ε = 2^-20` and the `nu` grid violates its second
/// condition.
const KNOWN: [&str; 2] = ["exp@2^-20", "nu@2^-20"];

struct Outcome {
    pass: bool,
    details: Vec<String>,
    failing: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, details: Vec::new(), failing: Vec::new() }
    }

    fn record(&mut self, id: impl Into<String>, ok: bool, detail: String) {
        let id = id.into();
        self.details.push(format!("{} {id}: {detail}", if ok { "ok  " } else { "FAIL" }));
        if !ok {
            self.pass = false;
            self.failing.push(id);
        }
    }
}

fn preset(name: &str) -> Scenario {
    presets::preset(name).unwrap().scenario
}

fn gof_t2() -> Scenario {
    presets::scenario("gof-t2", 1.0, false, 1.0, false, Some(2.0), 1 << 20, presets::SIM_EPS, presets::SIM_SIGMA)
}

fn simulations() -> Vec<(String, f64, Vec<LevelPower>)> {
    let mut out = Vec::new();
    for p in presets::all() {
        for alpha in [0.05, 0.2] {
            let s = SimSettings { n: N_SIM, seed: SEED, k_cap: presets::SIM_K_CAP, split: 0.5 };
            let r = level_and_power(&p.scenario, &ALL_TESTS, alpha, &s).unwrap();
            out.push((p.scenario.name.clone(), alpha, r));
        }
    }
    out
}

fn c1_level(sims: &[(String, f64, Vec<LevelPower>)]) -> Outcome {
    let mut o = Outcome::new();
    for (name, alpha, rs) in sims {
        for lp in rs {
            let t = &lp.level.type1;
            o.record(
                format!("{name}/{}/α={alpha}", lp.level.test),
                t.within(*alpha),
                format!("type I {:.4} (se {:.4}) at λ={}", t.p, t.se, lp.level.type1_lambda),
            );
        }
    }
    o
}

fn c2_power(sims: &[(String, f64, Vec<LevelPower>)]) -> Outcome {
    let mut o = Outcome::new();
    for (name, alpha, rs) in sims {
        for lp in rs {
            let w = lp.power.worst_type2().unwrap();
            o.record(
                format!("{name}/{}/α={alpha}", lp.power.test),
                w.within(lp.beta),
                format!("worst type II {:.4} vs {} at separation² {:.4e}", w.p, lp.beta, lp.power.separation2),
            );
        }
    }
    o
}

fn slope_check(o: &mut Outcome, id: &str, sc: &Scenario, kind: RadiusKind, which: Which, target: f64) {
    let r = rate_sweep(sc, kind, which, &dyadic_grid()).unwrap();
    let ok = (r.fit.slope - target).abs() <= 0.05;
    o.record(id, ok, format!("slope {:.4} (se {:.1e}) target {target:.4} ± 0.05", r.fit.slope, r.fit.slope_se));
}

fn c3_indirect_rates() -> Outcome {
    let mut o = Outcome::new();
    slope_check(&mut o, "sd ε", &preset("ord-mild-sd"), RadiusKind::Indirect, Which::Eps, 4.0 / 9.0);
    slope_check(&mut o, "gof t=1 σ", &preset("ord-mild-gof"), RadiusKind::Indirect, Which::Sigma, 0.8);
    slope_check(&mut o, "gof t=2 σ", &gof_t2(), RadiusKind::Indirect, Which::Sigma, 1.0);
    o
}

fn c4_direct_rates() -> Outcome {
    let mut o = Outcome::new();
    slope_check(&mut o, "gof σ", &preset("ord-mild-gof"), RadiusKind::Direct, Which::Sigma, 0.5);
    slope_check(&mut o, "sd ε", &preset("ord-mild-sd"), RadiusKind::Direct, Which::Eps, 4.0 / 9.0);
    for name in ["ord-severe-sd", "ord-severe-gof"] {
        let p = presets::preset(name).unwrap();
        let c = compare_direct_indirect(&p.scenario, p.which, &p.grid).unwrap();
        let ok = c.max_ratio <= 4.0 && c.min_ratio >= 0.25;
        o.record(name, ok, format!("ρ_d/ρ_i in [{:.4}, {:.4}]", c.min_ratio, c.max_ratio));
    }
    o
}

fn c5_direct_task_rates() -> Outcome {
    let mut o = Outcome::new();
    slope_check(&mut o, "sd ε", &preset("ord-mild-sd"), RadiusKind::DirectTask, Which::Eps, 8.0 / 9.0);
    slope_check(&mut o, "gof σ", &preset("ord-mild-gof"), RadiusKind::DirectTask, Which::Sigma, 1.0);
    o
}

fn c6_adaptive_factor() -> Outcome {
    let mut o = Outcome::new();
    let base = preset("ord-mild-sd");
    for eps in dyadic_grid() {
        let sc = sweep_scenario(&base, Which::Eps, eps);
        let (ad2, _, delta) = theoretical_point(&sc, RadiusKind::Adaptive, Which::Eps, eps).unwrap();
        let inflated = sweep_scenario(&base, Which::Eps, delta * eps);
        let (mm2, _, _) = theoretical_point(&inflated, RadiusKind::Indirect, Which::Eps, delta * eps).unwrap();
        let ratio = (ad2 / mm2).sqrt();
        let reference = eps.powi(-4).ln().ln().powf(0.25);
        let dr = delta / reference;
        let ok = (1.0..=4.0).contains(&ratio) && (0.5..=2.0).contains(&dr);
        o.record(format!("ε={eps:e}"), ok, format!("ρ_ad/ρ(δε) {ratio:.4}, δ {delta:.4} vs (ln ln ε⁻⁴)^¼ {reference:.4}"));
    }
    o
}

fn sorted(mut v: Vec<f64>, descending: bool) -> Vec<f64> {
    v.sort_by(|a, b| if descending { b.total_cmp(a) } else { a.total_cmp(b) });
    v
}

fn c7_argmin_lemma() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut gen = |n: usize| -> Vec<f64> {
        let coarse = rng.gen_bool(0.5);
        (0..n).map(|_| if coarse { f64::from(rng.gen_range(0u8..5)) / 4.0 } else { rng.gen::<f64>() }).collect()
    };
    let mut failures = 0;
    for i in 0..1000usize {
        let n = 1 + i % 60;
        let a = sorted(gen(n), true);
        let b = sorted(gen(n), false);
        let c = sorted(gen(n), false);
        if !combine_min_lemma_check(&a, &b, &c).unwrap().holds {
            failures += 1;
        }
    }
    let mut o = Outcome::new();
    o.record("1000 trials", failures == 0, format!("{failures} failures"));
    o
}

fn c8_quantile_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    let mut o = Outcome::new();
    for upper in [true, false] {
        let mut worst: f64 = f64::NEG_INFINITY;
        let mut bad = 0;
        for _ in 0..200 {
            let k = rng.gen_range(1..=8usize);
            let e: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..2.0)).collect();
            let mu: Vec<f64> = if upper { Vec::new() } else { (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect() };
            let u = rng.gen_range(0.01..0.3);
            let bound = if upper {
                chi2_quantile_upper(&e, k, u).unwrap()
            } else {
                chi2_quantile_lower_noncentral(&e, &mu, k, u).unwrap()
            };
            let p = quadratic_form_exceedance(&e, &mu, k, bound, upper, 100_000, rng.gen());
            worst = worst.max((p.p - u) / (u * (1.0 - u) / p.n as f64).sqrt());
            bad += usize::from(!p.within(u));
        }
        let id = if upper { "upper quantile" } else { "noncentral lower quantile" };
        o.record(id, bad == 0, format!("200 configs, {bad} violations, worst excess {worst:.2} s.e."));
    }
    o
}

fn c9_hypercube() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut o = Outcome::new();
    let (mut bad, mut worst_rel) = (0, 0.0f64);
    for _ in 0..20 {
        let k = rng.gen_range(1..=4usize);
        let theta: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..0.2)).collect();
        let noise_var: Vec<f64> = theta.iter().map(|t| (t / rng.gen_range(0.3..0.6)).powi(2)).collect();
        let mix = HypercubeMixture {
            members: vec![HypercubeMember { kappa: k, theta: theta.clone(), weights: vec![1.0; k] }],
            noise_var: noise_var.clone(),
        };
        let closed = hypercube_chi2(&mix).unwrap().value;
        let (mc, se) = mc_mixture_chi2(&[theta], &noise_var, 1_000_000, rng.gen());
        let rel = (mc - closed).abs() / closed;
        worst_rel = worst_rel.max(rel);
        bad += usize::from(!(mc <= closed + 3.0 * se && rel <= 0.15));
    }
    o.record("MC vs closed form", bad == 0, format!("20 configs, {bad} violations, worst relative gap {worst_rel:.4}"));
    for alpha in [0.1, 0.2, 0.5] {
        let v = risk_lower_bound_from_chi2(2.0 * alpha * alpha);
        o.record(format!("risk(2α²) α={alpha}"), v == 1.0 - alpha, format!("{v}"));
    }
    o
}

fn c10_lower_bound_constructions() -> Outcome {
    let mut o = Outcome::new();
    for p in presets::all() {
        let t = p.scenario.tables().unwrap();
        for v in [PerturbationVariant::Minimax, PerturbationVariant::DirectTask] {
            let b = build_lb_perturbation(&t, v, 0.1).unwrap();
            o.record(
                format!("{}/{v:?}", p.scenario.name),
                b.passes(),
                format!("member {} separation {} χ² {}", b.member, b.separation_ok, b.chi2_ok),
            );
        }
    }
    for (regime, name) in [(Regime::Poly, "poly"), (Regime::Exp, "exp"), (Regime::Nu, "nu")] {
        let small = grid_conditions(&grid_params(regime, 2f64.powi(-20), 4096), 0.9).unwrap();
        let detail = match (&small.report, &small.failure) {
            (Some(r), _) => format!("N={} conditions 1/2/3: {}/{}/{} (worst second-condition margin {:.3e})", r.n, r.c1, r.c2, r.c3, r.c2_worst),
            (None, f) => f.clone().unwrap_or_default(),
        };
        o.record(format!("{name}@2^-20"), small.holds(), detail);
        let large = grid_conditions(&grid_params(regime, 0.125, 4096), 0.9).unwrap();
        o.record(format!("{name}@2^-3"), large.c3_violated(), format!("third condition violated: {}", large.c3_violated()));
    }
    o
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "preset = \"ord-mild-gof\"\n[scenario]\nk_max = 4096\n[experiment]\nn = 2000\n\
         kinds = [\"indirect\", \"direct\"]\n[manifest]\ncommands = [\"radius\", \"simulate\", \"rates\"]\n",
    )
    .unwrap();
    let run = |out: &str, threads: &str, extra: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_specradius"))
            .args(["manifest", "--config", cfg.to_str().unwrap(), "--out"])
            .arg(dir.path().join(out))
            .args(["--threads", threads])
            .args(extra)
            .env_remove("SPECRADIUS_OUT")
            .env_remove("SPECRADIUS_THREADS")
            .output()
            .unwrap();
        (o.status.code(), String::from_utf8_lossy(&o.stdout).into_owned())
    };
    let mut o = Outcome::new();
    let (code, out) = run("v", "4", &["--verify"]);
    let identical = out.matches("identical").count();
    o.record("manifest --verify", code == Some(0) && identical == 2, format!("exit {code:?}, {identical}/2 comparisons identical"));
    run("a", "4", &[]);
    run("b", "1", &[]);
    let read = |d: &str| std::fs::read(dir.path().join(d).join("manifest.json")).unwrap();
    o.record("4 vs 1 threads", read("a") == read("b"), "manifest bytes compared".into());
    o
}

fn main() {
    let start = Instant::now();
    let sims = simulations();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 level control", Box::new(|| c1_level(&sims))),
        ("2 power guarantee", Box::new(|| c2_power(&sims))),
        ("3 indirect rate exponents", Box::new(c3_indirect_rates)),
        ("4 direct rate exponents", Box::new(c4_direct_rates)),
        ("5 direct-task rate exponents", Box::new(c5_direct_task_rates)),
        ("6 adaptive factor", Box::new(c6_adaptive_factor)),
        ("7 argmin combination lemma", Box::new(c7_argmin_lemma)),
        ("8 quadratic-form quantile bounds", Box::new(c8_quantile_bounds)),
        ("9 hypercube chi-square", Box::new(c9_hypercube)),
        ("10 lower-bound constructions", Box::new(c10_lower_bound_constructions)),
        ("11 determinism", Box::new(c11_determinism)),
    ];
    let known: BTreeSet<&str> = KNOWN.into_iter().collect();
    let mut unexpected = 0;
    for (name, f) in &criteria {
        let o = f();
        let only_known = o.failing.iter().all(|id| known.contains(id.as_str()));
        println!(
            "{} criterion {name}{}",
            if o.pass { "PASS" } else { "FAIL" },
            if !o.pass && only_known { " (known: see README, Known failures)" } else { "" }
        );
        for d in &o.details {
            println!("    {d}");
        }
        if !o.pass && !only_known {
            unexpected += 1;
        }
    }
    println!("acceptance finished in {:.0} s; unexpected failures: {unexpected}", start.elapsed().as_secs_f64());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
