//! Monte Carlo experiments: error probabilities of the tests, empirical
//! radii, noise sweeps with rate regression, and result persistence.
//!
//! Every replicate draws from its own stream `(seed, replicate)` and
//! results are sums of counts, so they do not depend on the number of
//! threads.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    alternative_dictionary, operator_dictionary, reparametrise, sample_observation, AltRequest, Alternative,
    NoiseModel, Scenario, Tables,
};
use crate::presets::Which;
use crate::radii::{
    adaptive_radii, direct_task_radius, dyadic_collection, scaled_radius, split_radii, Flavor,
};
use crate::rng::NormalStream;
use crate::seqcore::{IndexSet, SeqSpec};
use crate::testing::{
    adaptive_prop_constant_sq, power_constant, upper_constant_sq, PreparedTest, TestConfig, ThresholdRule,
};

pub const MIN_REPLICATES: usize = 100;

/// A rejection or acceptance frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub count: u64,
    pub n: u64,
    pub p: f64,
    pub se: f64,
}

impl Proportion {
    pub fn new(count: u64, n: u64) -> Self {
        let p = count as f64 / n as f64;
        Proportion { count, n, p, se: (p * (1.0 - p) / n as f64).sqrt() }
    }

    pub fn complement(self) -> Self {
        Proportion::new(self.n - self.count, self.n)
    }

    /// `p ≤ nominal + 3 sqrt(nominal (1 - nominal) / n)`.
    pub fn within(&self, nominal: f64) -> bool {
        self.p <= nominal + 3.0 * (nominal * (1.0 - nominal) / self.n as f64).sqrt()
    }
}

/// Rejection counts of several tests on shared samples drawn under
/// `(θ, λ)`. `theta` and `lambda` must cover the longest test.
pub fn rejection_counts(t: &Tables, theta: &[f64], lambda: &[f64], tests: &[&PreparedTest], n: usize, seed: u64) -> Vec<u64> {
    let len = tests.iter().map(|p| p.length()).max().unwrap_or(0);
    let m = tests.len();
    (0..n as u64)
        .into_par_iter()
        .fold(
            || vec![0u64; m],
            |mut acc, rep| {
                let obs = sample_observation(theta, lambda, &t.eps, &t.sigma, len, seed, rep);
                let yt = reparametrise(&obs, &t.theta0);
                for (c, p) in acc.iter_mut().zip(tests) {
                    if p.apply(&yt).reject {
                        *c += 1;
                    }
                }
                acc
            },
        )
        .reduce(|| vec![0u64; m], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Indirect,
    Direct,
    IndirectMax,
    DirectMax,
    Markov,
}

pub const ALL_TESTS: [TestKind; 5] =
    [TestKind::Indirect, TestKind::Direct, TestKind::IndirectMax, TestKind::DirectMax, TestKind::Markov];

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::Indirect => "indirect",
            TestKind::Direct => "direct",
            TestKind::IndirectMax => "indirect-max",
            TestKind::DirectMax => "direct-max",
            TestKind::Markov => "markov",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ALL_TESTS.into_iter().find(|k| k.name() == s)
    }

    pub fn flavor(self) -> Flavor {
        match self {
            TestKind::Direct | TestKind::DirectMax => Flavor::Direct,
            _ => Flavor::Indirect,
        }
    }

    pub fn is_max(self) -> bool {
        matches!(self, TestKind::IndirectMax | TestKind::DirectMax)
    }

    pub fn rule(self) -> ThresholdRule {
        if self == TestKind::Markov {
            ThresholdRule::Markov
        } else {
            ThresholdRule::Chi2
        }
    }
}

/// A test built for a scenario with the radius it is calibrated against.
#[derive(Clone, Debug)]
pub struct Design {
    pub kind: TestKind,
    pub test: PreparedTest,
    /// Squared radius that separations are measured in.
    pub reference_rho2: f64,
    /// Dimension handed to the alternative dictionary.
    pub alt_k: usize,
    /// `k=..` or `K=first..last(card)`.
    pub dims: String,
}

fn has_operator_noise(t: &Tables) -> bool {
    t.sig2.iter().any(|&x| x > 0.0)
}

/// Builds the test of the given kind at level `alpha`, looking at most at
/// `k_cap` coordinates (and strictly fewer than `k_max`, so alternatives
/// may place mass one index further out).
pub fn design(t: &Tables, kind: TestKind, alpha: f64, k_cap: usize) -> Result<Design> {
    let cap = k_cap.min(t.k_max.saturating_sub(1));
    if cap == 0 {
        return Err(Error::Invalid("k_max must be at least 2 for simulations".into()));
    }
    let range = IndexSet::Full(cap);
    let flavor = kind.flavor();
    if kind.is_max() {
        let sigma = has_operator_noise(t).then(|| t.sigma[0]);
        let coll = dyadic_collection(t.eps[0], sigma, cap);
        let ad = adaptive_radii(t, &coll, flavor)?;
        let ks = coll.to_vec();
        let dims = format!("K={}..{}({})", ks[0], ks[ks.len() - 1], ks.len());
        let test = PreparedTest::new(t, TestConfig::max(flavor, kind.rule(), coll, alpha))?;
        Ok(Design { kind, test, reference_rho2: ad.rho2(), alt_k: ad.main.k_star, dims })
    } else {
        let split = split_radii(t, flavor, &range)?;
        let k = split.combined.k_star;
        let reference_rho2 = if split.combined.vanishing {
            scaled_radius(t, 1.0, flavor, &range)?.rho2
        } else {
            split.combined.rho2
        };
        let test = PreparedTest::new(t, TestConfig::single(flavor, kind.rule(), k, alpha))?;
        Ok(Design { kind, test, reference_rho2, alt_k: k, dims: format!("k={k}") })
    }
}

/// `A̅` used to bracket the empirical radius of a design.
pub fn upper_constant(t: &Tables, d: &Design) -> Result<f64> {
    let alpha = d.test.config.alpha;
    let c2 = if d.kind.is_max() {
        adaptive_prop_constant_sq(t.r, t.kappa, alpha)?
    } else {
        upper_constant_sq(t.r, t.kappa, alpha)?
    };
    Ok(c2.sqrt())
}

fn lambdas(sc: &Scenario, len: usize) -> Vec<(&'static str, Vec<f64>)> {
    operator_dictionary(&sc.operator).into_iter().map(|(id, s)| (id, s.values(len))).collect()
}

fn shifted(theta0: &[f64], delta: &[f64]) -> Vec<f64> {
    let mut th = theta0.to_vec();
    for (x, d) in th.iter_mut().zip(delta) {
        *x += d;
    }
    th
}

/// Largest type I error over the operator dictionary, for each design on
/// shared samples.
pub fn type1_rates(sc: &Scenario, t: &Tables, designs: &[&Design], n: usize, seed: u64) -> Vec<(Proportion, String)> {
    let len = designs.iter().map(|d| d.test.length()).max().unwrap_or(0);
    let tests: Vec<&PreparedTest> = designs.iter().map(|d| &d.test).collect();
    let mut worst: Vec<(Proportion, String)> = vec![(Proportion::new(0, n as u64), String::new()); designs.len()];
    for (id, lambda) in lambdas(sc, len) {
        let counts = rejection_counts(t, &t.theta0, &lambda, &tests, n, seed);
        for (w, c) in worst.iter_mut().zip(counts) {
            if w.1.is_empty() || c > w.0.count {
                *w = (Proportion::new(c, n as u64), id.to_string());
            }
        }
    }
    worst
}

/// Type II error per alternative, maximised over the operator dictionary.
pub fn type2_rates(sc: &Scenario, t: &Tables, d: &Design, alts: &[Alternative], n: usize, seed: u64) -> BTreeMap<String, Proportion> {
    let len = alts.iter().map(|a| a.support).max().unwrap_or(0).max(d.test.length());
    let mut out: BTreeMap<String, Proportion> = BTreeMap::new();
    for (_, lambda) in lambdas(sc, len) {
        for alt in alts {
            let theta = shifted(&t.theta0[..len], &alt.delta);
            let acc = Proportion::new(rejection_counts(t, &theta, &lambda, &[&d.test], n, seed)[0], n as u64).complement();
            let e = out.entry(alt.id.clone()).or_insert(acc);
            if acc.count > e.count {
                *e = acc;
            }
        }
    }
    out
}

/// Monte Carlo risk of one test: the largest type I error over the
/// operator dictionary and, per alternative, the largest type II error.
/// These are maxima over finite dictionaries, not suprema over classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub scenario: String,
    pub test: String,
    pub dims: String,
    pub alpha: f64,
    pub n: u64,
    pub seed: u64,
    pub type1: Proportion,
    pub type1_lambda: String,
    pub separation2: f64,
    pub type2: BTreeMap<String, Proportion>,
}

impl RiskEstimate {
    pub fn worst_type2(&self) -> Option<Proportion> {
        self.type2.values().copied().max_by_key(|p| p.count)
    }
}

fn check_replicates(n: usize) -> Result<()> {
    if n < MIN_REPLICATES {
        return Err(Error::Invalid(format!("need at least {MIN_REPLICATES} replicates, got {n}")));
    }
    Ok(())
}

pub fn alternatives_for(t: &Tables, d: &Design, separation2: f64) -> Result<Vec<Alternative>> {
    alternative_dictionary(&AltRequest {
        k: d.alt_k,
        separation2,
        noise_var: &t.noise_var,
        v2: &t.v2,
        a: &t.a,
        r: t.r,
    })
}

pub fn estimate_risk(sc: &Scenario, t: &Tables, d: &Design, alts: &[Alternative], n: usize, seed: u64) -> Result<RiskEstimate> {
    check_replicates(n)?;
    let (type1, type1_lambda) = type1_rates(sc, t, &[d], n, seed).remove(0);
    let separation2 = alts.first().map_or(0.0, |a| a.delta.iter().map(|x| x * x).sum());
    Ok(RiskEstimate {
        scenario: sc.name.clone(),
        test: d.kind.name().into(),
        dims: d.dims.clone(),
        alpha: d.test.config.alpha,
        n: n as u64,
        seed,
        type1,
        type1_lambda,
        separation2,
        type2: type2_rates(sc, t, d, alts, n, seed),
    })
}

/// Level of the test at `alpha` and power of the test at `split·alpha`
/// against alternatives at squared separation
/// `(r + κ C(split·α, (1-split)·α)) ρ²`, where `ρ` is the test's own
/// radius. Type II is to be compared with `(1 - split)·alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPower {
    pub level: RiskEstimate,
    pub power: RiskEstimate,
    pub beta: f64,
}

pub struct SimSettings {
    pub n: usize,
    pub seed: u64,
    pub k_cap: usize,
    pub split: f64,
}

pub fn level_and_power(sc: &Scenario, kinds: &[TestKind], alpha: f64, s: &SimSettings) -> Result<Vec<LevelPower>> {
    check_replicates(s.n)?;
    if !(s.split > 0.0 && s.split < 1.0) {
        return Err(Error::Invalid("level split must lie in (0, 1)".into()));
    }
    let t = sc.tables()?;
    let at_level: Vec<Design> = kinds.iter().map(|&k| design(&t, k, alpha, s.k_cap)).collect::<Result<_>>()?;
    let refs: Vec<&Design> = at_level.iter().collect();
    let t1 = type1_rates(sc, &t, &refs, s.n, s.seed);
    let (a1, beta) = (s.split * alpha, (1.0 - s.split) * alpha);
    let mult = t.r + t.kappa * power_constant(a1, beta)?;
    let mut out = Vec::new();
    for ((&kind, d), (type1, lam)) in kinds.iter().zip(&at_level).zip(t1) {
        let dp = design(&t, kind, a1, s.k_cap)?;
        let alts = alternatives_for(&t, &dp, mult * dp.reference_rho2)?;
        let power = estimate_risk(sc, &t, &dp, &alts, s.n, s.seed)?;
        let level = RiskEstimate {
            scenario: sc.name.clone(),
            test: kind.name().into(),
            dims: d.dims.clone(),
            alpha,
            n: s.n as u64,
            seed: s.seed,
            type1,
            type1_lambda: lam,
            separation2: 0.0,
            type2: BTreeMap::new(),
        };
        out.push(LevelPower { level, power, beta });
    }
    Ok(out)
}

/// Smallest scaling `A` (to bisection accuracy) at which the worst type II
/// error over the dictionaries is at most `beta`, with the evaluations made.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRadius {
    pub a_hat: f64,
    pub a_bar: f64,
    pub rho_ref: f64,
    /// `Â ρ`
    pub radius: f64,
    pub bracket: (f64, f64),
    pub widened: bool,
    /// `(A, worst type II)` in evaluation order.
    pub trace: Vec<(f64, Proportion)>,
    /// Type II nonincreasing in `A` along the trace, to 3 s.e.
    pub monotone: bool,
}

const BISECTION_REL_WIDTH: f64 = 0.05;
const BISECTION_MAX_ITER: usize = 60;

pub fn empirical_radius(sc: &Scenario, t: &Tables, d: &Design, beta: f64, n: usize, seed: u64) -> Result<EmpiricalRadius> {
    check_replicates(n)?;
    let a_bar = upper_constant(t, d)?;
    let mut trace = Vec::new();
    let eval = |a: f64, trace: &mut Vec<(f64, Proportion)>| -> Result<Proportion> {
        let alts = alternatives_for(t, d, a * a * d.reference_rho2)?;
        let worst = type2_rates(sc, t, d, &alts, n, seed)
            .into_values()
            .max_by_key(|p| p.count)
            .expect("nonempty dictionary");
        trace.push((a, worst));
        Ok(worst)
    };
    let mut hi = 4.0 * a_bar;
    let mut widened = false;
    if eval(hi, &mut trace)?.p > beta {
        widened = true;
        hi *= 4.0;
        let f = eval(hi, &mut trace)?;
        if f.p > beta {
            return Err(Error::Bracket(format!(
                "power non-monotone: type II {} above {beta} at A = {hi} after widening",
                f.p
            )));
        }
    }
    let mut lo = 0.0;
    let floor = 1e-12 * a_bar;
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_REL_WIDTH * hi || hi < floor {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if eval(mid, &mut trace)?.p <= beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let monotone = is_monotone(&trace);
    let rho_ref = d.reference_rho2.sqrt();
    Ok(EmpiricalRadius { a_hat: hi, a_bar, rho_ref, radius: hi * rho_ref, bracket: (lo, hi), widened, trace, monotone })
}

fn is_monotone(trace: &[(f64, Proportion)]) -> bool {
    let mut pts = trace.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.iter().enumerate().all(|(i, (_, p))| {
        pts[i + 1..].iter().all(|(_, q)| q.p <= p.p + 3.0 * (p.se * p.se + q.se * q.se).sqrt() + 1.0 / p.n as f64)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusKind {
    Indirect,
    Direct,
    DirectTask,
    Adaptive,
}

impl RadiusKind {
    pub fn name(self) -> &'static str {
        match self {
            RadiusKind::Indirect => "indirect",
            RadiusKind::Direct => "direct",
            RadiusKind::DirectTask => "direct_task",
            RadiusKind::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [RadiusKind::Indirect, RadiusKind::Direct, RadiusKind::DirectTask, RadiusKind::Adaptive]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// How a rate is linearised. `Log`: regress `ln ρ - c ln|ln z|` on `ln z`
/// with `z` the noise level (times `δ` when `inflate`), for rates
/// `(|ln z|^c z)^e`. `LogLog`: regress `ln ρ` on `ln|ln z|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor {
    Log { log_power: f64, inflate: bool },
    LogLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub exponent: f64,
    pub regressor: Regressor,
    /// Table cell the exponent comes from: `radius/family/noise`.
    pub source: String,
    pub tolerance: f64,
}

#[derive(Clone, Copy, Debug)]
enum Decay {
    Poly(f64),
    Exp(f64),
}

fn decay(s: &SeqSpec) -> Option<Decay> {
    match s {
        SeqSpec::PolyDecay { exponent, .. } => Some(Decay::Poly(*exponent)),
        SeqSpec::ExpDecay { exponent, .. } => Some(Decay::Exp(*exponent)),
        _ => None,
    }
}

/// Rate of the given radius as the noise `which` tends to zero, for
/// polynomial or exponential smoothness and operator sequences and
/// `θ°_j = j^{-t}`; `None` where no closed form applies.
pub fn rate_target(sc: &Scenario, kind: RadiusKind, which: Which) -> Option<Target> {
    let t = match (&sc.theta0, which) {
        (_, Which::Eps) => None,
        (SeqSpec::PolyDecay { exponent, .. }, Which::Sigma) => Some(*exponent),
        _ => return None,
    };
    let at_quarter = |g: f64| (g - 0.25).abs() < 1e-12;
    let log = |e: f64, c: f64| (e, Regressor::Log { log_power: c, inflate: kind == RadiusKind::Adaptive }, 0.05);
    let (family, (exponent, regressor, tolerance)) = match (decay(&sc.smoothness.a)?, decay(&sc.operator.v)?) {
        (Decay::Poly(s), Decay::Poly(p)) => {
            let e = |q: f64| 4.0 * s / (4.0 * s + 4.0 * q + 1.0);
            let cell = match (kind, t.map(|t| t - p)) {
                (RadiusKind::DirectTask, None) => log((4.0 * s + 4.0 * p) / (4.0 * s + 4.0 * p + 1.0), 0.0),
                (RadiusKind::DirectTask, Some(_)) => log(1.0, 0.0),
                (_, None) => log(e(p), 0.0),
                (RadiusKind::Direct, Some(_)) => log(s / (s + p), 0.0),
                (RadiusKind::Adaptive, Some(g)) if at_quarter(g) => return None,
                (_, Some(g)) if at_quarter(g) => log(1.0, 0.25),
                (_, Some(g)) if g < 0.25 => log(e(-g), 0.0),
                (_, Some(_)) => log(1.0, 0.0),
            };
            ("ord-mild", cell)
        }
        (Decay::Exp(s), Decay::Poly(p)) => {
            let cell = match (kind, t.map(|t| t - p)) {
                (RadiusKind::DirectTask, None) => log(1.0, 1.0 / (8.0 * s)),
                (RadiusKind::DirectTask, Some(_)) => log(1.0, 0.0),
                (_, None) => log(1.0, (4.0 * p + 1.0) / (8.0 * s)),
                (RadiusKind::Direct, Some(_)) => log(1.0, p / (2.0 * s)),
                (_, Some(g)) if at_quarter(g) => return None,
                (_, Some(g)) if g < 0.25 => log(1.0, (1.0 - 4.0 * g) / (8.0 * s)),
                (_, Some(_)) => log(1.0, 0.0),
            };
            ("super-mild", cell)
        }
        (Decay::Poly(s), Decay::Exp(p)) => {
            let cell = match (kind, t) {
                (RadiusKind::DirectTask, None) => log(1.0, 1.0 / (8.0 * p)),
                (RadiusKind::DirectTask, Some(_)) => log(1.0, 0.0),
                _ => (-s / (2.0 * p), Regressor::LogLog, 0.1),
            };
            ("ord-severe", cell)
        }
        _ => return None,
    };
    Some(Target {
        exponent,
        regressor,
        source: format!("{}/{}/{}", kind.name(), family, which.name()),
        tolerance,
    })
}

/// Least-squares line with the standard error of the slope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Fit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if x.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    Fit { slope, slope_se, intercept }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub noise: f64,
    pub rho2: f64,
    pub k_star: usize,
    /// Adaptive factor (1 for non-adaptive radii).
    pub delta: f64,
    pub empirical_rho2: Option<f64>,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub scenario: String,
    pub kind: RadiusKind,
    pub which: Which,
    pub points: Vec<SweepPoint>,
    pub fit: Fit,
    pub target: Option<Target>,
    pub pass: Option<bool>,
}

/// The scenario with noise `which` set to `level` and the other one to zero.
pub fn sweep_scenario(base: &Scenario, which: Which, level: f64) -> Scenario {
    let noise = match which {
        Which::Eps => NoiseModel::homoscedastic(level, 0.0),
        Which::Sigma => NoiseModel::homoscedastic(0.0, level),
    };
    base.with_noise(noise)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 5 {
        return Err(Error::GridTooShort(grid.len()));
    }
    if grid.iter().any(|&g| !(g > 0.0 && g < 1.0)) {
        return Err(Error::Invalid("noise levels must lie in (0, 1)".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("noise grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// `(ρ², k*, δ)` of one radius kind in a scenario where only `which`
/// is nonzero.
pub fn theoretical_point(sc: &Scenario, kind: RadiusKind, which: Which, level: f64) -> Result<(f64, usize, f64)> {
    let t = sc.tables()?;
    let range = IndexSet::Full(t.k_max);
    Ok(match kind {
        RadiusKind::Indirect | RadiusKind::Direct => {
            let flavor = if kind == RadiusKind::Direct { Flavor::Direct } else { Flavor::Indirect };
            let s = split_radii(&t, flavor, &range)?;
            let r = if which == Which::Eps { s.eps } else { s.sigma };
            (r.rho2, r.k_star, 1.0)
        }
        RadiusKind::DirectTask => {
            let d = direct_task_radius(&t, &range)?;
            (d.rho2, d.k_d, 1.0)
        }
        RadiusKind::Adaptive => {
            let coll = dyadic_collection(level, None, t.k_max);
            let ad = adaptive_radii(&t, &coll, Flavor::Indirect)?;
            (ad.rho2(), ad.main.k_star, ad.delta)
        }
    })
}

fn regress(points: &mut [SweepPoint], regressor: Regressor, use_empirical: bool) -> Fit {
    for p in points.iter_mut() {
        let rho2 = if use_empirical { p.empirical_rho2.unwrap_or(p.rho2) } else { p.rho2 };
        let ln_rho = 0.5 * rho2.ln();
        match regressor {
            Regressor::Log { log_power, inflate } => {
                let z = if inflate { p.noise * p.delta } else { p.noise };
                p.x = z.ln();
                p.y = ln_rho - log_power * z.ln().abs().ln();
            }
            Regressor::LogLog => {
                p.x = p.noise.ln().abs().ln();
                p.y = ln_rho;
            }
        }
    }
    let x: Vec<f64> = points.iter().map(|p| p.x).collect();
    let y: Vec<f64> = points.iter().map(|p| p.y).collect();
    fit_line(&x, &y)
}

fn finish(base: &Scenario, kind: RadiusKind, which: Which, mut points: Vec<SweepPoint>, empirical: bool) -> SweepResult {
    let target = rate_target(base, kind, which);
    let regressor = target.as_ref().map_or(Regressor::Log { log_power: 0.0, inflate: false }, |t| t.regressor);
    let fit = regress(&mut points, regressor, empirical);
    let pass = target.as_ref().map(|t| (fit.slope - t.exponent).abs() <= t.tolerance);
    SweepResult { scenario: base.name.clone(), kind, which, points, fit, target, pass }
}

fn check_which(base: &Scenario, which: Which) -> Result<()> {
    if which == Which::Sigma && base.is_sd() {
        return Err(Error::Invalid("the operator-noise term vanishes when θ° = 0".into()));
    }
    Ok(())
}

/// Theoretical radii along a decreasing noise grid with the fitted rate.
pub fn rate_sweep(base: &Scenario, kind: RadiusKind, which: Which, grid: &[f64]) -> Result<SweepResult> {
    check_grid(grid)?;
    check_which(base, which)?;
    let points = grid
        .iter()
        .map(|&g| {
            let (rho2, k_star, delta) = theoretical_point(&sweep_scenario(base, which, g), kind, which, g)?;
            Ok(SweepPoint { noise: g, rho2, k_star, delta, empirical_rho2: None, x: 0.0, y: 0.0 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(base, kind, which, points, false))
}

pub struct EmpiricalSpec {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub seed: u64,
    pub k_cap: usize,
}

/// Sweep of empirical radii `Â ρ` of a test; the slope is fitted to them.
pub fn rate_sweep_empirical(base: &Scenario, test: TestKind, which: Which, grid: &[f64], spec: &EmpiricalSpec) -> Result<SweepResult> {
    check_grid(grid)?;
    check_which(base, which)?;
    let kind = match test {
        TestKind::Direct => RadiusKind::Direct,
        TestKind::IndirectMax => RadiusKind::Adaptive,
        _ => RadiusKind::Indirect,
    };
    let mut points = Vec::new();
    for &g in grid {
        let sc = sweep_scenario(base, which, g);
        let t = sc.tables()?;
        let d = design(&t, test, spec.alpha, spec.k_cap)?;
        let e = empirical_radius(&sc, &t, &d, spec.beta, spec.n, spec.seed)?;
        let delta = if test.is_max() { crate::radii::adaptive_delta(d.test.thresholds().len()) } else { 1.0 };
        points.push(SweepPoint {
            noise: g,
            rho2: d.reference_rho2,
            k_star: d.alt_k,
            delta,
            empirical_rho2: Some(e.radius * e.radius),
            x: 0.0,
            y: 0.0,
        });
    }
    let mut r = finish(base, kind, which, points, true);
    if test == TestKind::DirectMax {
        r.target = None;
        r.pass = None;
    }
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub noise: f64,
    pub rho_direct: f64,
    pub rho_indirect: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub points: Vec<RatioPoint>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `bounded` when `max/min ≤ 4` over the grid, else `diverging`.
    pub verdict: String,
    /// Slope of `ln(ρ_d/ρ_i)` against `ln` noise.
    pub trend_slope: f64,
}

pub const BOUNDED_SPREAD: f64 = 4.0;

/// `ρ_d/ρ_i` along a noise grid.
pub fn compare_direct_indirect(base: &Scenario, which: Which, grid: &[f64]) -> Result<Comparison> {
    check_grid(grid)?;
    check_which(base, which)?;
    let mut points = Vec::new();
    for &g in grid {
        let sc = sweep_scenario(base, which, g);
        let (ri, _, _) = theoretical_point(&sc, RadiusKind::Indirect, which, g)?;
        let (rd, _, _) = theoretical_point(&sc, RadiusKind::Direct, which, g)?;
        let (rho_indirect, rho_direct) = (ri.sqrt(), rd.sqrt());
        points.push(RatioPoint { noise: g, rho_direct, rho_indirect, ratio: rho_direct / rho_indirect });
    }
    let max_ratio = points.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = points.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
    let x: Vec<f64> = points.iter().map(|p| p.noise.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.ratio.ln()).collect();
    let verdict = if max_ratio / min_ratio <= BOUNDED_SPREAD { "bounded" } else { "diverging" };
    Ok(Comparison { points, max_ratio, min_ratio, verdict: verdict.into(), trend_slope: fit_line(&x, &y).slope })
}

/// Fraction of draws of `Σ_{j≤k} (μ_j + e_j ξ_j)²` above `bound`
/// (`upper`) or below it.
pub fn quadratic_form_exceedance(e: &[f64], mu: &[f64], k: usize, bound: f64, upper: bool, n: usize, seed: u64) -> Proportion {
    let count: u64 = (0..n as u64)
        .into_par_iter()
        .map(|rep| {
            let mut s = NormalStream::new(seed, rep);
            let mut q = 0.0;
            for j in 0..k {
                let z = s.next_pair().0;
                let x = mu.get(j).copied().unwrap_or(0.0) + e[j] * z;
                q += x * x;
            }
            u64::from(if upper { q > bound } else { q < bound })
        })
        .sum();
    Proportion::new(count, n as u64)
}

/// Monte Carlo estimate of `E_0[L²] - 1` for the likelihood ratio `L` of a
/// uniform sign mixture over `members` (each a mean vector `m^s`) against
/// pure noise of variance `noise_var`; returns the estimate and its s.e.
pub fn mc_mixture_chi2(members: &[Vec<f64>], noise_var: &[f64], n: usize, seed: u64) -> (f64, f64) {
    let k = members.iter().map(|m| m.len()).max().unwrap_or(0);
    let (s1, s2) = (0..n as u64)
        .into_par_iter()
        .map(|rep| {
            let mut s = NormalStream::new(seed, rep);
            let y: Vec<f64> = (0..k).map(|j| noise_var[j].sqrt() * s.next_pair().0).collect();
            let l: f64 = members
                .iter()
                .map(|m| {
                    m.iter()
                        .zip(&y)
                        .zip(noise_var)
                        .map(|((mj, yj), v)| (mj * yj / v).cosh() * (-mj * mj / (2.0 * v)).exp())
                        .product::<f64>()
                })
                .sum::<f64>()
                / members.len() as f64;
            let v = l * l - 1.0;
            (v, v * v)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let mean = s1 / nf;
    let var = (s2 / nf - mean * mean).max(0.0);
    (mean, (var / nf).sqrt())
}

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub kind: String,
    pub scenario: Option<Scenario>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
}

/// A result file: a header block and flat records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultDoc<T> {
    pub schema_version: u32,
    pub header: Header,
    pub records: Vec<T>,
}

impl<T> ResultDoc<T> {
    pub fn new(header: Header, records: Vec<T>) -> Self {
        ResultDoc { schema_version: SCHEMA_VERSION, header, records }
    }
}

pub fn to_json<T: Serialize>(doc: &ResultDoc<T>) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc).map_err(|e| Error::Schema(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<ResultDoc<T>> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    match v.get("schema_version").and_then(|x| x.as_u64()) {
        None => return Err(Error::Schema("missing field `schema_version`".into())),
        Some(n) if n != u64::from(SCHEMA_VERSION) => {
            return Err(Error::Schema(format!(
                "file has schema version {n} but this build reads version {SCHEMA_VERSION}; migrate the file first"
            )))
        }
        Some(_) => {}
    }
    serde_json::from_value(v).map_err(|e| Error::Schema(e.to_string()))
}

pub fn persist<T: Serialize>(doc: &ResultDoc<T>, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(doc)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<ResultDoc<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    from_json(&text)
}
