//! χ²-type tests of `θ = θ°` built on the unbiased estimators
//! `Σ_{j≤k} w_j ((Y_j - θ°_j X_j)² - ς_j²)` with `w = v^-2` (indirect)
//! or `w = 1` (direct).
//!
//! Levels use natural logarithms: `L_u = sqrt(|ln u|)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{reparametrise, Observation, Tables};
use crate::radii::{split_radii, Flavor};
use crate::seqcore::{IndexSet, PrefixTables};

/// `L_u = sqrt(|ln u|)`.
pub fn log_level(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Invalid(format!("level {u} outside (0, 1)")));
    }
    Ok(u.ln().abs().sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `2L rqF_k + 2L² mF_k` from the χ² quantile bound.
    Chi2,
    /// `rqF_k sqrt(2/α)` from Chebyshev–Markov.
    Markov,
}

fn weights(t: &Tables, flavor: Flavor) -> Vec<f64> {
    match flavor {
        Flavor::Indirect => t.v2.iter().map(|v| 1.0 / v).collect(),
        Flavor::Direct => vec![1.0; t.k_max],
    }
}

/// `Σ_{j≤k} w_j (ỹ_j² - ς_j²)`.
pub fn estimator(ytilde: &[f64], noise_var: &[f64], w: &[f64], k: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..k {
        s += w[j] * (ytilde[j] * ytilde[j] - noise_var[j]);
    }
    s
}

/// Indirect estimator straight from an observation.
pub fn indirect_estimator(obs: &Observation, theta0: &[f64], v2: &[f64], noise_var: &[f64], k: usize) -> Result<f64> {
    if k > obs.y.len() {
        return Err(Error::Invalid("k exceeds observation length".into()));
    }
    if let Some(j) = v2[..k].iter().position(|&v| v == 0.0) {
        return Err(Error::OperatorZero(j + 1));
    }
    let w: Vec<f64> = v2[..k].iter().map(|v| 1.0 / v).collect();
    Ok(estimator(&reparametrise(obs, theta0), noise_var, &w, k))
}

/// Direct estimator straight from an observation.
pub fn direct_estimator(obs: &Observation, theta0: &[f64], noise_var: &[f64], k: usize) -> Result<f64> {
    if k > obs.y.len() {
        return Err(Error::Invalid("k exceeds observation length".into()));
    }
    Ok(estimator(&reparametrise(obs, theta0), noise_var, &vec![1.0; k], k))
}

/// Threshold at level `alpha` for the weighted variance sequence
/// `x_j = w_j ς_j²`.
pub fn threshold_from_tables(p: &PrefixTables, k: usize, alpha: f64, rule: ThresholdRule) -> Result<f64> {
    Ok(match rule {
        ThresholdRule::Chi2 => {
            let l = log_level(alpha)?;
            2.0 * l * p.rqf(k) + 2.0 * l * l * p.mf(k)
        }
        ThresholdRule::Markov => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Invalid(format!("level {alpha} outside (0, 1)")));
            }
            p.rqf(k) * (2.0 / alpha).sqrt()
        }
    })
}

pub fn threshold(t: &Tables, flavor: Flavor, rule: ThresholdRule, alpha: f64, k: usize) -> Result<f64> {
    let w = weights(t, flavor);
    let x: Vec<f64> = t.noise_var[..k].iter().zip(&w).map(|(s, w)| s * w).collect();
    threshold_from_tables(&PrefixTables::from_values(&x)?, k, alpha, rule)
}

/// A single-k test (`ks` has one element) or a max-test over `ks`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub flavor: Flavor,
    pub rule: ThresholdRule,
    pub ks: IndexSet,
    pub alpha: f64,
    /// User-supplied per-k level replacing the Bonferroni `alpha/|K|`.
    pub common_level: Option<f64>,
}

impl TestConfig {
    pub fn single(flavor: Flavor, rule: ThresholdRule, k: usize, alpha: f64) -> Self {
        TestConfig { flavor, rule, ks: IndexSet::Subset(vec![k]), alpha, common_level: None }
    }

    pub fn max(flavor: Flavor, rule: ThresholdRule, ks: IndexSet, alpha: f64) -> Self {
        TestConfig { flavor, rule, ks, alpha, common_level: None }
    }

    /// Level applied at each k.
    pub fn per_k_level(&self) -> f64 {
        self.common_level.unwrap_or(self.alpha / self.ks.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub statistic: f64,
    pub reject: bool,
    /// The k attaining the maximum of `estimator_k - threshold_k`.
    pub k_max_stat: usize,
}

/// A test with thresholds precomputed, cheap to apply to many samples.
#[derive(Clone, Debug)]
pub struct PreparedTest {
    pub config: TestConfig,
    ks: Vec<usize>,
    thresholds: Vec<f64>,
    w: Vec<f64>,
    noise_var: Vec<f64>,
}

impl PreparedTest {
    pub fn new(t: &Tables, config: TestConfig) -> Result<Self> {
        let ks = config.ks.to_vec();
        let kmax = *ks.last().expect("nonempty");
        if kmax > t.k_max {
            return Err(Error::Invalid(format!("test index {kmax} beyond k_max {}", t.k_max)));
        }
        let w: Vec<f64> = weights(t, config.flavor)[..kmax].to_vec();
        let noise_var = t.noise_var[..kmax].to_vec();
        let x: Vec<f64> = noise_var.iter().zip(&w).map(|(s, w)| s * w).collect();
        let p = PrefixTables::from_values(&x)?;
        let level = config.per_k_level();
        let thresholds = ks
            .iter()
            .map(|&k| threshold_from_tables(&p, k, level, config.rule))
            .collect::<Result<_>>()?;
        Ok(PreparedTest { config, ks, thresholds, w, noise_var })
    }

    /// Observation length the test needs.
    pub fn length(&self) -> usize {
        *self.ks.last().expect("nonempty")
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Estimator values at each k of the test.
    pub fn estimators(&self, ytilde: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ks.len());
        let mut s = 0.0;
        let mut next = 0;
        for j in 0..self.length() {
            s += self.w[j] * (ytilde[j] * ytilde[j] - self.noise_var[j]);
            if self.ks[next] == j + 1 {
                out.push(s);
                next += 1;
            }
        }
        out
    }

    pub fn apply(&self, ytilde: &[f64]) -> TestVerdict {
        let est = self.estimators(ytilde);
        let mut best = f64::NEG_INFINITY;
        let mut arg = self.ks[0];
        for ((e, thr), &k) in est.iter().zip(&self.thresholds).zip(&self.ks) {
            let d = e - thr;
            if d > best {
                best = d;
                arg = k;
            }
        }
        TestVerdict { statistic: best, reject: best > 0.0, k_max_stat: arg }
    }
}

/// Runs a test on one observation.
pub fn run_test(obs: &Observation, t: &Tables, config: TestConfig) -> Result<TestVerdict> {
    let p = PreparedTest::new(t, config)?;
    if obs.y.len() < p.length() {
        return Err(Error::Invalid("observation shorter than the test dimension".into()));
    }
    Ok(p.apply(&reparametrise(obs, &t.theta0)))
}

/// `k = k_ε ∧ k_σ` of the flavour's split radii.
pub fn optimal_dimension(t: &Tables, flavor: Flavor, range: &IndexSet) -> Result<usize> {
    Ok(split_radii(t, flavor, range)?.combined.k_star)
}

/// `C(α, β) = 5 (L_α + L_α² + L_β + 5 L_β²)`.
pub fn power_constant(alpha: f64, beta: f64) -> Result<f64> {
    let (la, lb) = (log_level(alpha)?, log_level(beta)?);
    Ok(5.0 * (la + la * la + lb + 5.0 * lb * lb))
}

/// `A̅² = r + κ (10 L + 30 L²)`, `L = L_{α/2}`: single-k tests.
pub fn upper_constant_sq(r: f64, kappa: f64, alpha: f64) -> Result<f64> {
    let l = log_level(alpha / 2.0)?;
    Ok(r + kappa * (10.0 * l + 30.0 * l * l))
}

/// `A̅² = r + κ (10 L + 30 L² + 10)`: max-tests over `K_ε ∩ K_σ`.
pub fn adaptive_upper_constant_sq(r: f64, kappa: f64, alpha: f64) -> Result<f64> {
    let l = log_level(alpha / 2.0)?;
    Ok(r + kappa * (10.0 * l + 30.0 * l * l + 10.0))
}

/// `A̅² = r + κ (5 L + 15 L² + 5)`: max-test bound in terms of the
/// reminder and main radii.
pub fn adaptive_prop_constant_sq(r: f64, kappa: f64, alpha: f64) -> Result<f64> {
    let l = log_level(alpha / 2.0)?;
    Ok(r + kappa * (5.0 * l + 15.0 * l * l + 5.0))
}

/// `A̅² = r κ + 10 L + 30 L²`: recovering `λθ`.
pub fn direct_task_upper_constant_sq(r: f64, kappa: f64, alpha: f64) -> Result<f64> {
    let l = log_level(alpha / 2.0)?;
    Ok(r * kappa + 10.0 * l + 30.0 * l * l)
}
