//! Lower-bound machinery: quantile bounds for Gaussian quadratic forms,
//! the χ²-divergence of hypercube mixtures, the perturbations behind the
//! minimax lower bounds and the conditions for adaptive lower bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_membership_smoothness_values, NoiseModel, OperatorClass, Scenario, SmoothnessClass, Tables};
use crate::radii::{direct_task_radius, split_radii, Flavor};
use crate::seqcore::{IndexSet, PrefixTables, SeqSpec};
use crate::testing::log_level;

/// Upper bound on the `1-u` quantile of `Σ_{j≤k} Z_j²`, `Z_j ~ N(0, e_j²)`:
/// `qF_k(e) + 2 L_u rqF_k(e²) + 2 L_u² mF_k(e²)`.
pub fn chi2_quantile_upper(e: &[f64], k: usize, u: f64) -> Result<f64> {
    let l = log_level(u)?;
    let e2: Vec<f64> = e[..k].iter().map(|x| x * x).collect();
    let p = PrefixTables::from_values(&e2)?;
    let q: f64 = e2.iter().sum();
    Ok(q + 2.0 * l * p.rqf(k) + 2.0 * l * l * p.mf(k))
}

/// Lower bound on the `u` quantile of `Σ_{j≤k} Z_j²`, `Z_j ~ N(μ_j, e_j²)`:
/// `qF_k(e) + (4/5) qF_k(μ) - 2 (5 L_u² + L_u) rqF_k(e²)`.
pub fn chi2_quantile_lower_noncentral(e: &[f64], mu: &[f64], k: usize, u: f64) -> Result<f64> {
    let l = log_level(u)?;
    let e2: Vec<f64> = e[..k].iter().map(|x| x * x).collect();
    let q: f64 = e2.iter().sum();
    let qm: f64 = mu[..k].iter().map(|x| x * x).sum();
    let rq: f64 = e2.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(q + 0.8 * qm - 2.0 * (5.0 * l * l + l) * rq)
}

/// One vertex family of a hypercube mixture: coordinates `1..=kappa`
/// carry `±weights_j θ_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypercubeMember {
    pub kappa: usize,
    pub theta: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HypercubeMember {
    fn signal(&self, j: usize) -> f64 {
        self.weights[j] * self.theta[j]
    }
}

/// Uniform mixture over members and sign vectors, observed in Gaussian
/// noise of variance `noise_var`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypercubeMixture {
    pub members: Vec<HypercubeMember>,
    pub noise_var: Vec<f64>,
}

impl HypercubeMixture {
    fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::Invalid("mixture needs at least one member".into()));
        }
        for m in &self.members {
            if m.kappa > m.theta.len() || m.kappa > m.weights.len() || m.kappa > self.noise_var.len() {
                return Err(Error::Invalid("hypercube dimension exceeds table length".into()));
            }
        }
        Ok(())
    }

    /// `m^s_j m^t_j / ε_j²` on the common support.
    fn cross(&self, s: usize, t: usize) -> impl Iterator<Item = f64> + '_ {
        let (a, b) = (&self.members[s], &self.members[t]);
        (0..a.kappa.min(b.kappa)).map(move |j| {
            let num = a.signal(j) * b.signal(j);
            if num == 0.0 {
                0.0
            } else {
                num / self.noise_var[j]
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chi2Value {
    pub value: f64,
    /// `ln(1 + χ²)`, finite even when `value` overflows.
    pub log1p: f64,
    pub overflow: bool,
}

fn from_log_terms(terms: &[f64], n: usize) -> Chi2Value {
    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln() - 2.0 * (n as f64).ln();
    let value = lse.exp_m1();
    Chi2Value { value, log1p: lse, overflow: !value.is_finite() }
}

/// `χ² ≤ N^-2 Σ_{s,t} exp(½ qF_{κ_s∧κ_t}(m^s m^t / ε²)) - 1`.
pub fn hypercube_chi2(mix: &HypercubeMixture) -> Result<Chi2Value> {
    mix.validate()?;
    let n = mix.members.len();
    let mut terms = Vec::with_capacity(n * n);
    for s in 0..n {
        for t in 0..n {
            terms.push(0.5 * mix.cross(s, t).map(|x| x * x).sum::<f64>());
        }
    }
    Ok(from_log_terms(&terms, n))
}

/// The exact value `N^-2 Σ_{s,t} Π_j cosh(m^s_j m^t_j / ε_j²) - 1`.
pub fn hypercube_chi2_exact(mix: &HypercubeMixture) -> Result<Chi2Value> {
    mix.validate()?;
    let n = mix.members.len();
    let mut terms = Vec::with_capacity(n * n);
    for s in 0..n {
        for t in 0..n {
            // ln cosh x = |x| + ln1p(e^{-2|x|}) - ln 2
            terms.push(mix.cross(s, t).map(|x| x.abs() + (-2.0 * x.abs()).exp().ln_1p() - std::f64::consts::LN_2).sum());
        }
    }
    Ok(from_log_terms(&terms, n))
}

/// `1 - sqrt(χ²/2)` clipped at zero: a lower bound on the sum of both
/// error probabilities of any test.
pub fn risk_lower_bound_from_chi2(chi2: f64) -> f64 {
    (1.0 - (chi2 / 2.0).sqrt()).max(0.0)
}

/// `A_² = η (r ∧ sqrt(2 ln(1 + 2α²)))`.
pub fn lower_constant_sq(eta: f64, r: f64, alpha: f64) -> f64 {
    eta * r.min((2.0 * (2.0 * alpha * alpha).ln_1p()).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationVariant {
    Minimax,
    DirectTask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaReport {
    pub eta: f64,
    pub k: usize,
    pub noise_term: f64,
    pub bias_term: f64,
    /// Noise and bias cannot be balanced (a term is zero).
    pub degenerate: bool,
}

fn ratio(noise: f64, bias: f64, k: usize) -> EtaReport {
    let hi = noise.max(bias);
    let lo = noise.min(bias);
    let degenerate = lo == 0.0 || hi == 0.0;
    EtaReport { eta: if hi > 0.0 { lo / hi } else { 0.0 }, k, noise_term: noise, bias_term: bias, degenerate }
}

/// Balance ratio at the minimiser of the radius the perturbation uses.
pub fn compute_eta(t: &Tables, variant: PerturbationVariant) -> Result<EtaReport> {
    let range = IndexSet::Full(t.k_max);
    match variant {
        PerturbationVariant::Minimax => {
            let r = split_radii(t, Flavor::Indirect, &range)?.reparam;
            Ok(ratio(r.variance_at_k, r.bias_at_k, r.k_star))
        }
        PerturbationVariant::DirectTask => {
            let d = direct_task_radius(t, &range)?;
            let k = d.k_d;
            let pe = PrefixTables::from_values(&t.eps2[..k])?.rqf(k);
            let ps = PrefixTables::from_values(&t.sig2[..k])?.rqf(k);
            Ok(ratio(pe.max(ps), t.v2[k - 1] * t.a2[k - 1], k))
        }
    }
}

/// A perturbation `θ̃` (zero beyond `k`) with its three post-conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbPerturbation {
    pub variant: PerturbationVariant,
    pub theta: Vec<f64>,
    pub k: usize,
    pub zeta: f64,
    pub eta: f64,
    /// Squared radius the construction is calibrated to.
    pub rho2: f64,
    /// `‖θ̃‖²` (minimax) or `‖vθ̃‖²` (direct task).
    pub separation2: f64,
    /// `qF_k(v²θ̃²/ς²)`.
    pub chi2_control: f64,
    pub member: bool,
    pub separation_ok: bool,
    pub chi2_ok: bool,
}

impl LbPerturbation {
    pub fn passes(&self) -> bool {
        self.member && self.separation_ok && self.chi2_ok
    }
}

const POST_TOL: f64 = 1e-10;

fn safe_div(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Builds the perturbation behind the minimax lower bound.
///
/// `Minimax`: `θ̃_j = sqrt(ζηρ²)/rqF_k(ς²/v²) · ς_j²/v_j²`, `j ≤ k*`,
/// `ζ = r ∧ sqrt(2 ln(1+2α²))`, calibrated to `ρ(ς)`.
///
/// `DirectTask`: `θ̃_j = ρ' sqrt(ζη)/rqF_k(ς²) · ς_j²/v_j`, `j ≤ k_d`,
/// `ζ = r ∧ sqrt(2 ln(1+α²))`.
pub fn build_lb_perturbation(t: &Tables, variant: PerturbationVariant, alpha: f64) -> Result<LbPerturbation> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("level {alpha} outside (0, 1)")));
    }
    let eta = compute_eta(t, variant)?;
    let k = eta.k;
    let a2 = alpha * alpha;
    let (zeta, rho2, theta) = match variant {
        PerturbationVariant::Minimax => {
            let zeta = t.r.min((2.0 * (2.0 * a2).ln_1p()).sqrt());
            let rho2 = split_radii(t, Flavor::Indirect, &IndexSet::Full(t.k_max))?.reparam.rho2;
            let w: Vec<f64> = (0..k).map(|j| t.noise_var[j] / t.v2[j]).collect();
            let rq = PrefixTables::from_values(&w)?.rqf(k);
            let c = safe_div((zeta * eta.eta * rho2).sqrt(), rq);
            (zeta, rho2, w.iter().map(|x| c * x).collect::<Vec<_>>())
        }
        PerturbationVariant::DirectTask => {
            let zeta = t.r.min((2.0 * a2.ln_1p()).sqrt());
            let rho2 = direct_task_radius(t, &IndexSet::Full(t.k_max))?.rho2;
            let rq = PrefixTables::from_values(&t.noise_var[..k])?.rqf(k);
            let c = safe_div(rho2.sqrt() * (zeta * eta.eta).sqrt(), rq);
            (zeta, rho2, (0..k).map(|j| c * t.noise_var[j] / t.v[j]).collect())
        }
    };
    let separation2: f64 = match variant {
        PerturbationVariant::Minimax => theta.iter().map(|x| x * x).sum(),
        PerturbationVariant::DirectTask => theta.iter().zip(&t.v2).map(|(x, v)| v * x * x).sum(),
    };
    let chi2_control: f64 = (0..k).map(|j| safe_div(t.v2[j] * theta[j] * theta[j], t.noise_var[j]).powi(2)).sum();
    let target = zeta * eta.eta * rho2;
    let member = check_membership_smoothness_values(&theta, &t.a, t.r).member;
    Ok(LbPerturbation {
        variant,
        k,
        zeta,
        eta: eta.eta,
        rho2,
        separation_ok: (separation2 - target).abs() <= POST_TOL * target.max(f64::MIN_POSITIVE),
        chi2_ok: chi2_control <= zeta * zeta * (1.0 + POST_TOL),
        separation2,
        chi2_control,
        member,
        theta,
    })
}

/// Which family of classes an adaptive lower bound ranges over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Smoothness `a = j^-s`, `s ∈ [lo, hi]`, operator `j^-p`.
    Poly,
    /// Smoothness `a = exp(-j^{2s})`, `s ∈ [lo, hi]`, operator `j^-p`.
    Exp,
    /// Operators `v = j^-p`, `p ∈ [lo, hi]`, smoothness `j^-s`.
    Nu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveGridParams {
    pub regime: Regime,
    pub lo: f64,
    pub hi: f64,
    /// The exponent held fixed: `p` for `Poly`/`Exp`, `s` for `Nu`.
    pub fixed: f64,
    pub eps: f64,
    pub k_max: usize,
    pub r: f64,
}

/// `N` classes on an equispaced grid of rate exponents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveCollection {
    pub params: AdaptiveGridParams,
    /// `δ_ε`; `δ_σ = 1` throughout.
    pub delta: f64,
    /// The unrounded count from the grid formula.
    pub n_formula: f64,
    /// Rate exponents `e_l`, in collection order.
    pub exponents: Vec<f64>,
    /// Class exponents (`s_l` or `p_l`), in collection order.
    pub class_exponents: Vec<f64>,
    pub members: Vec<Scenario>,
}

fn rate_exponent(regime: Regime, x: f64, fixed: f64) -> f64 {
    match regime {
        Regime::Poly => 4.0 * x / (4.0 * x + 4.0 * fixed + 1.0),
        Regime::Exp => (4.0 * fixed + 1.0) / (4.0 * x),
        Regime::Nu => 4.0 * fixed / (4.0 * fixed + 4.0 * x + 1.0),
    }
}

fn invert_rate(regime: Regime, e: f64, fixed: f64) -> f64 {
    match regime {
        Regime::Poly => e * (4.0 * fixed + 1.0) / (4.0 * (1.0 - e)),
        Regime::Exp => (4.0 * fixed + 1.0) / (4.0 * e),
        Regime::Nu => (4.0 * fixed / e - 4.0 * fixed - 1.0) / 4.0,
    }
}

/// Builds the class collection of an adaptive lower bound in the
/// homoscedastic SD setting with noise `ε`.
///
/// `Poly`/`Nu`: `δ⁴ = ln|ln ε|`, `N = ⌊(e^⋆ - e_⋆)/4 · |ln(δε)|/ln δ⌋`.
/// `Exp`: `δ⁴ = ln ln|ln ε|`, `N = ⌊(e^⋆ - e_⋆)/4 · |ln ε|/ln δ⌋`.
pub fn build_adaptive_collection(p: &AdaptiveGridParams) -> Result<AdaptiveCollection> {
    if !(p.lo <= p.hi) || !(p.eps > 0.0 && p.eps < 1.0) {
        return Err(Error::Invalid("need lo ≤ hi and eps in (0, 1)".into()));
    }
    if p.lo == p.hi {
        return Err(Error::GridDegenerate("equal endpoints give a single class".into()));
    }
    let le = p.eps.ln().abs();
    let d4 = match p.regime {
        Regime::Poly | Regime::Nu => le.ln(),
        Regime::Exp => le.ln().ln(),
    };
    if !(d4 > 1.0) {
        return Err(Error::GridDegenerate(format!("adaptive factor δ⁴ = {d4:.4} is not above 1")));
    }
    let delta = d4.powf(0.25);
    let e_lo = rate_exponent(p.regime, p.lo, p.fixed);
    let e_hi = rate_exponent(p.regime, p.hi, p.fixed);
    let (e_min, e_max) = (e_lo.min(e_hi), e_lo.max(e_hi));
    let scale = match p.regime {
        Regime::Poly | Regime::Nu => (delta * p.eps).ln().abs(),
        Regime::Exp => le,
    };
    let n_formula = (e_max - e_min) / 4.0 * scale / delta.ln();
    if !(n_formula >= 2.0) {
        return Err(Error::GridDegenerate(format!("grid formula gives {n_formula:.3} classes")));
    }
    let n = n_formula.floor() as usize;
    let step = (e_max - e_min) / n as f64;
    let exponents: Vec<f64> = (0..n)
        .map(|l| match p.regime {
            Regime::Poly => e_max - l as f64 * step,
            Regime::Exp | Regime::Nu => e_min + l as f64 * step,
        })
        .collect();
    let class_exponents: Vec<f64> = exponents.iter().map(|&e| invert_rate(p.regime, e, p.fixed)).collect();
    let members = class_exponents
        .iter()
        .enumerate()
        .map(|(l, &x)| {
            let (a, v) = match p.regime {
                Regime::Poly => (SeqSpec::poly(x), SeqSpec::poly(p.fixed)),
                Regime::Exp => (SeqSpec::exp(x), SeqSpec::poly(p.fixed)),
                Regime::Nu => (SeqSpec::poly(p.fixed), SeqSpec::poly(x)),
            };
            Scenario {
                name: format!("class-{}", l + 1),
                k_max: p.k_max,
                smoothness: SmoothnessClass { a, r: p.r },
                operator: OperatorClass { v, kappa: 1.0 },
                theta0: SeqSpec::constant(0.0),
                noise: NoiseModel::homoscedastic(delta * p.eps, 0.0),
            }
        })
        .collect();
    Ok(AdaptiveCollection { params: p.clone(), delta, n_formula, exponents, class_exponents, members })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub n: usize,
    pub delta: f64,
    pub k: Vec<usize>,
    pub rho2: Vec<f64>,
    /// (C1)/(D1): `k_j ≤ k_l` for `j < l`.
    pub c1: bool,
    /// (C2): `δ⁴ ρ_j² ≤ ρ_l²`; (D2): the ratio form.
    pub c2: bool,
    /// Largest `c_α` with `exp(c_α δ⁴) ≤ N α²`.
    pub c_alpha: f64,
    /// (C3)/(D3): `c_α > 0`.
    pub c3: bool,
    /// Worst margin of the second condition (≤ 1 when it holds).
    pub c2_worst: f64,
}

impl ConditionReport {
    pub fn holds(&self) -> bool {
        self.c1 && self.c2 && self.c3
    }
}

/// Per-class radii `ρ_j` (inflated noise) and minimisers `k_j`.
fn class_radii(coll: &AdaptiveCollection) -> Result<(Vec<Tables>, Vec<f64>, Vec<usize>)> {
    let mut tabs = Vec::new();
    let mut rho2 = Vec::new();
    let mut ks = Vec::new();
    for m in &coll.members {
        let t = m.tables()?;
        let s = split_radii(&t, Flavor::Indirect, &IndexSet::Full(t.k_max))?;
        rho2.push(s.combined.rho2);
        ks.push(s.combined.k_star);
        tabs.push(t);
    }
    Ok((tabs, rho2, ks))
}

/// Checks (C1)–(C3) for smoothness collections or (D1)–(D3) for
/// operator collections at level `alpha`.
pub fn check_adaptive_conditions(coll: &AdaptiveCollection, alpha: f64) -> Result<ConditionReport> {
    let n = coll.members.len();
    if n < 2 {
        return Err(Error::CollectionTooSmall(format!("N = {n}")));
    }
    let d4 = coll.delta.powi(4);
    let (tabs, rho2, ks) = class_radii(coll)?;
    let mut c1 = true;
    let mut c2_worst = f64::NEG_INFINITY;
    for j in 0..n {
        for l in j + 1..n {
            c1 &= ks[j] <= ks[l];
            let lhs = d4 * rho2[j] / rho2[l];
            let margin = match coll.params.regime {
                Regime::Poly | Regime::Exp => lhs,
                Regime::Nu => {
                    // σ-terms vanish in the SD setting; the δ²ε² factors cancel
                    let kj = ks[j];
                    let num: f64 = (0..kj).map(|i| (tabs[j].eps2[i] / tabs[l].v2[i]).powi(2)).sum();
                    let den: f64 =
                        (0..kj).map(|i| (tabs[j].eps2[i] / (tabs[l].v[i] * tabs[j].v[i])).powi(2)).sum();
                    lhs / (num / den)
                }
            };
            c2_worst = c2_worst.max(margin);
        }
    }
    let c_alpha = (n as f64 * alpha * alpha).ln() / d4;
    Ok(ConditionReport {
        n,
        delta: coll.delta,
        k: ks,
        rho2,
        c1,
        c2: c2_worst <= 1.0,
        c_alpha,
        c3: c_alpha > 0.0,
        c2_worst,
    })
}

/// Outcome of building a grid and checking its conditions; construction
/// failures count as a violated (C3).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridVerdict {
    pub report: Option<ConditionReport>,
    pub failure: Option<String>,
}

impl GridVerdict {
    pub fn holds(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.holds())
    }

    pub fn c3_violated(&self) -> bool {
        self.report.as_ref().map_or(true, |r| !r.c3)
    }
}

pub fn grid_conditions(p: &AdaptiveGridParams, alpha: f64) -> Result<GridVerdict> {
    match build_adaptive_collection(p).and_then(|c| check_adaptive_conditions(&c, alpha)) {
        Ok(r) => Ok(GridVerdict { report: Some(r), failure: None }),
        Err(e @ (Error::GridDegenerate(_) | Error::CollectionTooSmall(_))) => {
            Ok(GridVerdict { report: None, failure: Some(e.to_string()) })
        }
        Err(e) => Err(e),
    }
}

/// The mixture of an adaptive lower bound with its post-conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptivePerturbation {
    pub zeta: f64,
    pub eta: f64,
    pub thetas: Vec<Vec<f64>>,
    pub members_ok: bool,
    /// `‖θ̃^l‖² ≥ ζ η ρ_l²` for every class.
    pub separation_ok: bool,
    pub chi2: f64,
    /// Mixture χ² at most `2α²`.
    pub chi2_ok: bool,
}

impl AdaptivePerturbation {
    pub fn passes(&self) -> bool {
        self.members_ok && self.separation_ok && self.chi2_ok
    }
}

/// `θ̃^l_j = ρ_l sqrt(ζη)/W_l · δ²ε²/(v^l_j)²`, `j ≤ k_l`, with
/// `ζ = r ∧ sqrt(ln(1+α²)) ∧ sqrt(c_α)`.
pub fn build_adaptive_perturbation(coll: &AdaptiveCollection, alpha: f64) -> Result<AdaptivePerturbation> {
    let cond = check_adaptive_conditions(coll, alpha)?;
    if !cond.c3 {
        return Err(Error::CollectionTooSmall(format!("N α² = {} ≤ 1", cond.n as f64 * alpha * alpha)));
    }
    let (tabs, rho2, ks) = class_radii(coll)?;
    let r = coll.params.r;
    let zeta = r.min((alpha * alpha).ln_1p().sqrt()).min(cond.c_alpha.sqrt());
    let mut w = Vec::new();
    let mut eta = f64::INFINITY;
    for (l, t) in tabs.iter().enumerate() {
        let k = ks[l];
        let x: Vec<f64> = (0..k).map(|i| t.noise_var[i] / t.v2[i]).collect();
        let rq = PrefixTables::from_values(&x)?.rqf(k);
        eta = eta.min(rq.min(t.a2[k - 1]) / rho2[l]);
        w.push((x, rq));
    }
    let eta = eta.min(1.0);
    let mut thetas = Vec::new();
    let mut members_ok = true;
    let mut separation_ok = true;
    let mut mix = Vec::new();
    let true_var = vec![coll.params.eps * coll.params.eps; coll.params.k_max];
    for (l, (x, rq)) in w.iter().enumerate() {
        let c = (rho2[l] * zeta * eta).sqrt() / rq;
        let th: Vec<f64> = x.iter().map(|v| c * v).collect();
        members_ok &= check_membership_smoothness_values(&th, &tabs[l].a, r).member;
        let n2: f64 = th.iter().map(|v| v * v).sum();
        separation_ok &= n2 >= zeta * eta * rho2[l] * (1.0 - POST_TOL);
        mix.push(HypercubeMember { kappa: ks[l], theta: th.clone(), weights: tabs[l].v.clone() });
        thetas.push(th);
    }
    let chi2 = hypercube_chi2(&HypercubeMixture { members: mix, noise_var: true_var })?.value;
    Ok(AdaptivePerturbation {
        zeta,
        eta,
        thetas,
        members_ok,
        separation_ok,
        chi2,
        chi2_ok: chi2 <= 2.0 * alpha * alpha * (1.0 + POST_TOL),
    })
}
