//! Separation radii as balances of a noise term against the bias `a_k²`.
//!
//! Indirect flavour: `ρ²(x) = min_k [ rqF_k(x²/v²) ∨ a_k² ]`.
//! Direct flavour:   `ρ_d²(x) = min_k [ v_k^-2 rqF_k(x²) ∨ a_k² ]`.
//! All values are squared radii.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Tables, BOUNDARY_RTOL};
use crate::seqcore::{balance_min_argmin, IndexSet, PrefixTables};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Indirect,
    Direct,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Indirect => "indirect",
            Flavor::Direct => "direct",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    EpsTerm,
    SigmaTerm,
    Combined,
    Reparam,
    Reminder,
    Main,
    Inflated,
}

impl Component {
    pub fn name(self) -> &'static str {
        match self {
            Component::EpsTerm => "eps_term",
            Component::SigmaTerm => "sigma_term",
            Component::Combined => "combined",
            Component::Reparam => "reparam",
            Component::Reminder => "reminder",
            Component::Main => "main",
            Component::Inflated => "inflated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub rho2: f64,
    pub k_star: usize,
    pub variance_at_k: f64,
    pub bias_at_k: f64,
    pub component: Component,
    pub truncation_binding: bool,
    /// The noise term is identically zero; `rho2` is then the truncation
    /// floor `a_{k_max}²`.
    pub vanishing: bool,
}

impl RadiusReport {
    pub fn rho(&self) -> f64 {
        self.rho2.sqrt()
    }
}

/// Noise term of the given flavour for the variance sequence `x²`:
/// `rqF_k(x²/v²)` or `v_k^-2 rqF_k(x²)`.
pub fn variance_profile(x2: &[f64], v2: &[f64], flavor: Flavor) -> Result<Vec<f64>> {
    Ok(match flavor {
        Flavor::Indirect => {
            let w: Vec<f64> = x2.iter().zip(v2).map(|(x, v)| x / v).collect();
            PrefixTables::from_values(&w)?.rq
        }
        Flavor::Direct => {
            let t = PrefixTables::from_values(x2)?;
            t.rq.iter().zip(v2).map(|(r, v)| r / v).collect()
        }
    })
}

/// Maximum-type term `mF_k(x²/v²)` or `v_k^-2 mF_k(x²)`.
pub fn reminder_profile(x2: &[f64], v2: &[f64], flavor: Flavor) -> Vec<f64> {
    let mut out = Vec::with_capacity(x2.len());
    let mut m = f64::NEG_INFINITY;
    for (x, v) in x2.iter().zip(v2) {
        match flavor {
            Flavor::Indirect => {
                m = m.max(x / v);
                out.push(m);
            }
            Flavor::Direct => {
                m = m.max(*x);
                out.push(m / v);
            }
        }
    }
    out
}

fn report(var: &[f64], a2: &[f64], range: &IndexSet, component: Component) -> Result<RadiusReport> {
    let b = balance_min_argmin(var, a2, range)?;
    Ok(RadiusReport {
        rho2: b.value,
        k_star: b.k,
        variance_at_k: b.variance,
        bias_at_k: b.bias,
        component,
        truncation_binding: b.at_truncation,
        vanishing: false,
    })
}

fn vanishing_report(a2: &[f64], range: &IndexSet, component: Component) -> RadiusReport {
    let k = range.max();
    RadiusReport {
        rho2: a2[k - 1],
        k_star: k,
        variance_at_k: 0.0,
        bias_at_k: a2[k - 1],
        component,
        truncation_binding: true,
        vanishing: true,
    }
}

fn squares(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v * v).collect()
}

/// Indirect radius for noise levels `x`, smoothness `a`, operator `v`.
pub fn indirect_radius(x: &[f64], a: &[f64], v: &[f64], range: &IndexSet) -> Result<RadiusReport> {
    let var = variance_profile(&squares(x), &squares(v), Flavor::Indirect)?;
    report(&var, &squares(a), range, Component::Reparam)
}

/// Direct radius for noise levels `x`, smoothness `a`, operator `v`.
pub fn direct_radius(x: &[f64], a: &[f64], v: &[f64], range: &IndexSet) -> Result<RadiusReport> {
    let var = variance_profile(&squares(x), &squares(v), Flavor::Direct)?;
    report(&var, &squares(a), range, Component::Reparam)
}

/// Radius of one noise component, reporting the truncation floor when the
/// component vanishes.
fn component_radius(t: &Tables, x2: &[f64], flavor: Flavor, range: &IndexSet, c: Component) -> Result<(RadiusReport, Vec<f64>)> {
    let var = variance_profile(x2, &t.v2, flavor)?;
    if range.iter().all(|k| x2[k - 1] == 0.0) {
        return Ok((vanishing_report(&t.a2, range, c), var));
    }
    Ok((report(&var, &t.a2, range, c)?, var))
}

/// The ε-term, the θ°σ-term, their combination and the radius for the
/// reparametrised noise `ς`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRadii {
    pub flavor: Flavor,
    pub eps: RadiusReport,
    pub sigma: RadiusReport,
    /// `ρ_ε² ∨ ρ_σ²` at `k = k_ε ∧ k_σ`.
    pub combined: RadiusReport,
    /// `ρ²(ς)`.
    pub reparam: RadiusReport,
    /// `ρ_ε ∨ ρ_σ ≤ ρ(ς)` and `ρ(ς)² ≤ ρ_ε² + ρ_σ²`.
    pub sandwich_holds: bool,
}

pub fn split_radii(t: &Tables, flavor: Flavor, range: &IndexSet) -> Result<SplitRadii> {
    let (eps, ve) = component_radius(t, &t.eps2, flavor, range, Component::EpsTerm)?;
    let (sigma, vs) = component_radius(t, &t.sig2, flavor, range, Component::SigmaTerm)?;
    let k = eps.k_star.min(sigma.k_star);
    let combined = RadiusReport {
        rho2: eps.rho2.max(sigma.rho2),
        k_star: k,
        variance_at_k: ve[k - 1].max(vs[k - 1]),
        bias_at_k: t.a2[k - 1],
        component: Component::Combined,
        truncation_binding: k == range.max(),
        vanishing: eps.vanishing && sigma.vanishing,
    };
    let (reparam, _) = component_radius(t, &t.noise_var, flavor, range, Component::Reparam)?;
    let lo = combined.rho2;
    let hi = eps.rho2 + sigma.rho2;
    let slack = BOUNDARY_RTOL * hi.max(reparam.rho2);
    let sandwich_holds = lo <= reparam.rho2 + slack && reparam.rho2 <= hi + slack;
    Ok(SplitRadii { flavor, eps, sigma, combined, reparam, sandwich_holds })
}

/// Radii for recovering `λθ` directly: `ρ'² = v_{k_d}² ρ_d²` with
/// `k_d = k_{d,ε} ∧ k_{d,σ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectTaskRadii {
    pub k_d: usize,
    pub eps_rho2: f64,
    pub sigma_rho2: f64,
    pub rho2: f64,
    pub direct: SplitRadii,
}

pub fn direct_task_radius(t: &Tables, range: &IndexSet) -> Result<DirectTaskRadii> {
    let direct = split_radii(t, Flavor::Direct, range)?;
    let k_d = direct.combined.k_star;
    let w = t.v2[k_d - 1];
    let eps_rho2 = w * direct.eps.rho2;
    let sigma_rho2 = w * direct.sigma.rho2;
    Ok(DirectTaskRadii { k_d, eps_rho2, sigma_rho2, rho2: eps_rho2.max(sigma_rho2), direct })
}

/// Adaptive factor `δ = (1 ∨ log|K|)^(1/4)`.
pub fn adaptive_delta(card: usize) -> f64 {
    (card as f64).ln().max(1.0).powf(0.25)
}

fn inverse_fourth_cap(level: f64) -> f64 {
    if level > 0.0 {
        level.powi(-4).ceil()
    } else {
        f64::INFINITY
    }
}

/// Dyadic collection `{2^l : 2^l ≤ ⌈ε^-4⌉ ∧ ⌈σ^-4⌉ ∧ k_max}`; the σ cap
/// applies only when a noisy operator enters the reparametrised noise.
pub fn dyadic_collection(eps: f64, sigma: Option<f64>, k_max: usize) -> IndexSet {
    let mut cap = inverse_fourth_cap(eps).min(k_max as f64);
    if let Some(s) = sigma {
        cap = cap.min(inverse_fourth_cap(s));
    }
    let cap = cap.max(1.0) as usize;
    let mut ks = Vec::new();
    let mut k = 1usize;
    while k <= cap {
        ks.push(k);
        k *= 2;
    }
    IndexSet::Subset(ks)
}

/// Collection-restricted radii of the max-tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRadii {
    pub flavor: Flavor,
    pub delta: f64,
    pub card: usize,
    /// `min_K [ mF_k(δ⁴ς²/v²) ∨ a_k² ]`
    pub reminder: RadiusReport,
    /// `min_K [ δ² rqF_k(ς²/v²) ∨ a_k² ]`
    pub main: RadiusReport,
    /// `min_K [ δ⁴ rqF_k(ς²/v²) ∨ a_k² ]`
    pub inflated: RadiusReport,
}

impl AdaptiveRadii {
    /// `ρ_rem² ∨ ρ_main²`.
    pub fn rho2(&self) -> f64 {
        self.reminder.rho2.max(self.main.rho2)
    }
}

pub fn adaptive_radii(t: &Tables, collection: &IndexSet, flavor: Flavor) -> Result<AdaptiveRadii> {
    let delta = adaptive_delta(collection.len());
    let d2 = delta * delta;
    let var = variance_profile(&t.noise_var, &t.v2, flavor)?;
    let rem: Vec<f64> = reminder_profile(&t.noise_var, &t.v2, flavor).iter().map(|x| d2 * d2 * x).collect();
    let main: Vec<f64> = var.iter().map(|x| d2 * x).collect();
    let infl: Vec<f64> = var.iter().map(|x| d2 * d2 * x).collect();
    Ok(AdaptiveRadii {
        flavor,
        delta,
        card: collection.len(),
        reminder: report(&rem, &t.a2, collection, Component::Reminder)?,
        main: report(&main, &t.a2, collection, Component::Main)?,
        inflated: report(&infl, &t.a2, collection, Component::Inflated)?,
    })
}

/// Radius of the reparametrised noise scaled by `factor` (on the variance
/// scale, i.e. noise `sqrt(factor) ς`).
pub fn scaled_radius(t: &Tables, factor: f64, flavor: Flavor, range: &IndexSet) -> Result<RadiusReport> {
    let var: Vec<f64> = variance_profile(&t.noise_var, &t.v2, flavor)?.iter().map(|x| factor * x).collect();
    report(&var, &t.a2, range, Component::Reparam)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Negligibility {
    pub k: usize,
    /// `δ² ≤ C √k`
    pub delta_condition: bool,
    /// `√k mF_k ≤ C rqF_k` for the noise term of the flavour.
    pub max_condition: bool,
    pub holds: bool,
    /// Smallest constant for which each condition holds.
    pub delta_ratio: f64,
    pub max_ratio: f64,
}

/// Conditions under which the reminder radius is dominated by the
/// inflated one, checked at the main minimiser.
pub fn check_negligibility(t: &Tables, adaptive: &AdaptiveRadii, c: f64) -> Result<Negligibility> {
    let k = adaptive.main.k_star;
    let sk = (k as f64).sqrt();
    let d2 = adaptive.delta * adaptive.delta;
    let (mf, rqf) = match adaptive.flavor {
        Flavor::Indirect => {
            let w: Vec<f64> = t.noise_var[..k].iter().zip(&t.v2).map(|(x, v)| x / v).collect();
            let p = PrefixTables::from_values(&w)?;
            (p.mf(k), p.rqf(k))
        }
        Flavor::Direct => {
            let p = PrefixTables::from_values(&t.noise_var[..k])?;
            (p.mf(k), p.rqf(k))
        }
    };
    let delta_condition = d2 <= c * sk;
    let rhs = c * rqf;
    let max_condition = sk * mf <= rhs + BOUNDARY_RTOL * rhs;
    let delta_ratio = d2 / sk;
    let max_ratio = if rqf > 0.0 { sk * mf / rqf } else { 1.0 };
    Ok(Negligibility { k, delta_condition, max_condition, holds: delta_condition && max_condition, delta_ratio, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NoiseModel, OperatorClass, Scenario, SmoothnessClass};
    use crate::seqcore::SeqSpec;

    fn inv(k: usize) -> Vec<f64> {
        (1..=k).map(|j| 1.0 / j as f64).collect()
    }

    #[test]
    fn frozen_mild_example() {
        let r = indirect_radius(&vec![0.1; 100], &inv(100), &inv(100), &IndexSet::Full(100)).unwrap();
        assert_eq!(r.k_star, 3);
        assert!((r.rho2 - 1.0 / 9.0).abs() < 1e-12);
        assert!((r.variance_at_k - 0.01 * 98f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_hits_truncation() {
        let r = indirect_radius(&[0.0; 8], &inv(8), &inv(8), &IndexSet::Full(8)).unwrap();
        assert_eq!((r.rho2, r.k_star, r.truncation_binding), (1.0 / 64.0, 8, true));
    }

    #[test]
    fn flat_bias_picks_first() {
        let v = [1.0; 4];
        let x = [2f64.powf(0.5), 0.1, 0.1, 0.1];
        let r = indirect_radius(&x, &v, &v, &IndexSet::Full(4)).unwrap();
        assert_eq!(r.k_star, 1);
        assert!((r.rho2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn delta_of_sixteen() {
        assert!((adaptive_delta(16) - 16f64.ln().powf(0.25)).abs() < 1e-15);
        assert!((adaptive_delta(16) - 1.29040).abs() < 1e-4);
        assert_eq!(adaptive_delta(2), 1.0);
    }

    #[test]
    fn dyadic_caps() {
        assert_eq!(dyadic_collection(0.5, None, 1000).to_vec(), vec![1, 2, 4, 8, 16]);
        assert_eq!(dyadic_collection(0.01, Some(0.5), 1000).to_vec(), vec![1, 2, 4, 8, 16]);
        assert_eq!(dyadic_collection(0.01, None, 100).max(), 64);
    }

    fn sd_scenario(eps: f64, theta0: SeqSpec, sigma: f64) -> Tables {
        Scenario {
            name: "t".into(),
            k_max: 4096,
            smoothness: SmoothnessClass { a: SeqSpec::poly(1.0), r: 1.0 },
            operator: OperatorClass { v: SeqSpec::poly(1.0), kappa: 1.0 },
            theta0,
            noise: NoiseModel::homoscedastic(eps, sigma),
        }
        .tables()
        .unwrap()
    }

    #[test]
    fn sd_sigma_term_vanishes() {
        let t = sd_scenario(0.1, SeqSpec::constant(0.0), 0.3);
        let s = split_radii(&t, Flavor::Indirect, &IndexSet::Full(t.k_max)).unwrap();
        assert_eq!(s.sigma.rho2, t.a2[t.k_max - 1]);
        assert!(s.sigma.vanishing);
        assert_eq!(s.combined.rho2, s.eps.rho2);
        assert_eq!(s.combined.k_star, s.eps.k_star);
        assert!(s.sandwich_holds);
    }

    #[test]
    fn homoscedastic_negligibility_is_tight() {
        let mut t = sd_scenario(0.1, SeqSpec::constant(0.0), 0.0);
        t.v2 = vec![1.0; t.k_max];
        let k = dyadic_collection(0.1, None, t.k_max);
        let ad = adaptive_radii(&t, &k, Flavor::Indirect).unwrap();
        let n = check_negligibility(&t, &ad, 1.0).unwrap();
        assert!(n.max_condition);
    }
}
