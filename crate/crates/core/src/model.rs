//! The sequence-space model: observations `Y_j = λ_j θ_j + ε_j ξ_j`,
//! `X_j = λ_j + σ_j ξ'_j`, the classes the unknowns live in, and the
//! reparametrisation `Ỹ = Y - θ° X` with noise `ς² = ε² + θ°² σ²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::NormalStream;
use crate::seqcore::{self, SeqSpec};

/// Relative slack used when comparing quantities that are equal in exact
/// arithmetic (class boundaries, dictionary elements on the boundary).
pub const BOUNDARY_RTOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessClass {
    pub a: SeqSpec,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorClass {
    pub v: SeqSpec,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub eps: SeqSpec,
    pub sigma: SeqSpec,
}

impl NoiseModel {
    pub fn homoscedastic(eps: f64, sigma: f64) -> Self {
        NoiseModel { eps: SeqSpec::constant(eps), sigma: SeqSpec::constant(sigma) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub k_max: usize,
    pub smoothness: SmoothnessClass,
    pub operator: OperatorClass,
    pub theta0: SeqSpec,
    pub noise: NoiseModel,
}

/// Everything a scenario needs, evaluated on `1..=k_max`.
#[derive(Clone, Debug)]
pub struct Tables {
    pub k_max: usize,
    pub a: Vec<f64>,
    pub a2: Vec<f64>,
    pub v: Vec<f64>,
    pub v2: Vec<f64>,
    pub theta0: Vec<f64>,
    pub eps: Vec<f64>,
    pub sigma: Vec<f64>,
    pub eps2: Vec<f64>,
    /// `θ°² σ²`
    pub sig2: Vec<f64>,
    /// `ς² = ε² + θ°² σ²`
    pub noise_var: Vec<f64>,
    pub r: f64,
    pub kappa: f64,
}

fn check_sequence(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Invalid("k_max must be positive".into()));
    }
    if xs[0] > 1.0 {
        return Err(Error::Invalid(format!("{name}_1 = {} exceeds 1", xs[0])));
    }
    for (i, w) in xs.windows(2).enumerate() {
        if w[1] > w[0] {
            return Err(Error::Invalid(format!("{name} increases at index {}", i + 2)));
        }
    }
    if xs.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || xs[0] <= 0.0 {
        return Err(Error::Invalid(format!("{name} must be positive")));
    }
    Ok(())
}

impl Scenario {
    pub fn is_sd(&self) -> bool {
        self.theta0.is_zero()
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Scenario {
        Scenario { noise, ..self.clone() }
    }

    /// Validates the scenario and evaluates all sequences.
    pub fn tables(&self) -> Result<Tables> {
        let k = self.k_max;
        if self.smoothness.r <= 0.0 || !self.smoothness.r.is_finite() {
            return Err(Error::Invalid("r must be positive".into()));
        }
        if !(self.operator.kappa >= 1.0) || !self.operator.kappa.is_finite() {
            return Err(Error::Invalid("kappa must be at least 1".into()));
        }
        let a = self.smoothness.a.values(k);
        let v = self.operator.v.values(k);
        check_sequence("a", &a)?;
        check_sequence("v", &v)?;
        let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
        if let Some(i) = v2.iter().position(|&x| x == 0.0 || !(1.0 / (x * x)).is_finite()) {
            return Err(Error::OperatorZero(i + 1));
        }
        let theta0 = self.theta0.values(k);
        let eps = self.noise.eps.values(k);
        let sigma = self.noise.sigma.values(k);
        if eps.iter().chain(&sigma).any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Invalid("noise levels must be finite and nonnegative".into()));
        }
        let eps2: Vec<f64> = eps.iter().map(|x| x * x).collect();
        let sig2: Vec<f64> = theta0.iter().zip(&sigma).map(|(t, s)| t * t * s * s).collect();
        let noise_var = eps2.iter().zip(&sig2).map(|(e, s)| e + s).collect();
        Ok(Tables {
            k_max: k,
            a2: a.iter().map(|x| x * x).collect(),
            a,
            v,
            v2,
            theta0,
            eps,
            sigma,
            eps2,
            sig2,
            noise_var,
            r: self.smoothness.r,
            kappa: self.operator.kappa,
        })
    }
}

/// `ς_j² = ε_j² + θ°_j² σ_j²` for `j = 1..=k`.
pub fn reparam_noise(noise: &NoiseModel, theta0: &SeqSpec, k: usize) -> Vec<f64> {
    (1..=k)
        .map(|j| {
            let (e, s, t) = (noise.eps.eval(j), noise.sigma.eval(j), theta0.eval(j));
            e * e + t * t * s * s
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

/// Draws `(Y_j, X_j)` for `j = 1..=k` from the stream of `replicate`.
/// All slices must have length at least `k`.
pub fn sample_observation(
    theta: &[f64],
    lambda: &[f64],
    eps: &[f64],
    sigma: &[f64],
    k: usize,
    seed: u64,
    replicate: u64,
) -> Observation {
    let mut s = NormalStream::new(seed, replicate);
    let mut y = Vec::with_capacity(k);
    let mut x = Vec::with_capacity(k);
    for j in 0..k {
        let (z, zp) = s.next_pair();
        y.push(lambda[j] * theta[j] + eps[j] * z);
        x.push(lambda[j] + sigma[j] * zp);
    }
    Observation { y, x }
}

/// `Ỹ_j = Y_j - θ°_j X_j`.
pub fn reparametrise(obs: &Observation, theta0: &[f64]) -> Vec<f64> {
    obs.y.iter().zip(&obs.x).zip(theta0).map(|((y, x), t)| y - t * x).collect()
}

/// Outcome of a class-membership check.
#[derive(Clone, Debug, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub first_violation: Option<usize>,
    /// Indices where the constraint holds with equality (to rounding).
    pub tight: Vec<usize>,
    /// Whether the part beyond `k_max` was certified.
    pub tail_certified: bool,
}

fn le_with_slack(lhs: f64, rhs: f64) -> (bool, bool) {
    let slack = BOUNDARY_RTOL * rhs.abs().max(lhs.abs());
    (lhs <= rhs + slack, (lhs - rhs).abs() <= slack)
}

/// Bias table `b_k² = Σ_{j>k} θ_j²` for `k = 1..=k_max` and an upper
/// bound on `b_{k_max}²` beyond the table.
fn bias_profile(theta: &SeqSpec, k_max: usize) -> Result<(Vec<f64>, f64)> {
    match theta {
        SeqSpec::Explicit { values, tail } if *tail == 0.0 => {
            // suffix sums avoid the cancellation of total minus prefix
            let n = values.len().max(k_max);
            let mut b2 = vec![0.0; n + 1];
            for j in (1..=n).rev() {
                let t = values.get(j - 1).copied().unwrap_or(0.0);
                b2[j - 1] = b2[j] + t * t;
            }
            // b2[k] holds Σ_{j>k}, k = 0..n
            Ok((b2[1..=k_max].to_vec(), 0.0))
        }
        SeqSpec::Explicit { .. } => Err(Error::TailUndecidable("explicit sequence with nonzero tail".into())),
        SeqSpec::Const { value } if *value != 0.0 => {
            Err(Error::TailUndecidable("constant sequence is not square-summable".into()))
        }
        _ => {
            let prefix = seqcore::PrefixTables::from_spec(theta, k_max)?;
            let (est, bound) = seqcore::total_energy_parts(theta, k_max)?;
            let total = prefix.qf(k_max) + est;
            Ok((prefix.q.iter().map(|q| (total - q).max(0.0)).collect(), bound))
        }
    }
}

/// `θ ∈ E^a_r`: `b_k² ≤ r a_k²` for every `k ≤ k_max`, and the analytic
/// tail of `b²` beyond `k_max` is at most `r a_{k_max}²`.
pub fn check_membership_smoothness(theta: &SeqSpec, cls: &SmoothnessClass, k_max: usize) -> Result<Membership> {
    let (b2, tail_bound) = bias_profile(theta, k_max)?;
    let a = cls.a.values(k_max);
    let mut first_violation = None;
    let mut tight = Vec::new();
    for k in 1..=k_max {
        let rhs = cls.r * a[k - 1] * a[k - 1];
        let (ok, eq) = le_with_slack(b2[k - 1], rhs);
        if eq {
            tight.push(k);
        }
        if !ok && first_violation.is_none() {
            first_violation = Some(k);
        }
    }
    let tail_certified = tail_bound <= cls.r * a[k_max - 1] * a[k_max - 1];
    Ok(Membership {
        member: first_violation.is_none() && tail_certified,
        first_violation,
        tight,
        tail_certified,
    })
}

/// Membership for a finite table `delta` (zero beyond its length).
pub fn check_membership_smoothness_values(delta: &[f64], a: &[f64], r: f64) -> Membership {
    let n = delta.len();
    let mut suffix = 0.0;
    let mut b2 = vec![0.0; n];
    for j in (0..n).rev() {
        b2[j] = suffix;
        suffix += delta[j] * delta[j];
    }
    let mut first_violation = None;
    let mut tight = Vec::new();
    for k in 1..=n {
        let (ok, eq) = le_with_slack(b2[k - 1], r * a[k - 1] * a[k - 1]);
        if eq {
            tight.push(k);
        }
        if !ok && first_violation.is_none() {
            first_violation = Some(k);
        }
    }
    Membership { member: first_violation.is_none(), first_violation, tight, tail_certified: true }
}

/// `λ ∈ E^v_κ`: `λ_j² ≤ κ v_j²` and `v_j² ≤ κ λ_j²` for `j ≤ k_max`.
pub fn check_membership_operator(lambda: &[f64], cls: &OperatorClass) -> Membership {
    let mut first_violation = None;
    let mut tight = Vec::new();
    for (i, &l) in lambda.iter().enumerate() {
        let v = cls.v.eval(i + 1);
        let (ok1, eq1) = le_with_slack(l * l, cls.kappa * v * v);
        let (ok2, eq2) = le_with_slack(v * v, cls.kappa * l * l);
        if (eq1 || eq2) && cls.kappa > 1.0 {
            tight.push(i + 1);
        }
        if !(ok1 && ok2) && first_violation.is_none() {
            first_violation = Some(i + 1);
        }
    }
    Membership { member: first_violation.is_none(), first_violation, tight, tail_certified: true }
}

/// The operators `{v, √κ v, v/√κ}`: the centre and both boundaries of
/// the operator class.
pub fn operator_dictionary(cls: &OperatorClass) -> Vec<(&'static str, SeqSpec)> {
    let s = cls.kappa.sqrt();
    vec![("v", cls.v.clone()), ("v_times_sqrt_kappa", cls.v.scaled(s)), ("v_over_sqrt_kappa", cls.v.scaled(1.0 / s))]
}

/// Inputs for building alternatives `θ - θ°` at a given separation.
#[derive(Clone, Debug)]
pub struct AltRequest<'a> {
    /// Dimension the test looks at.
    pub k: usize,
    /// Target `||θ - θ°||²`.
    pub separation2: f64,
    pub noise_var: &'a [f64],
    pub v2: &'a [f64],
    pub a: &'a [f64],
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub id: String,
    /// `θ - θ°` on `1..=support`, zero beyond.
    pub delta: Vec<f64>,
    pub support: usize,
}

fn scaled_shape(weights: &[f64], separation2: f64) -> Vec<f64> {
    let norm2: f64 = weights.iter().map(|w| w * w).sum();
    if norm2 > 0.0 && norm2.is_finite() {
        let c = (separation2 / norm2).sqrt();
        weights.iter().map(|w| c * w).collect()
    } else {
        let c = (separation2 / weights.len() as f64).sqrt();
        vec![c; weights.len()]
    }
}

/// Three alternatives at separation `sqrt(separation2)`, each pushed as
/// far out as class membership allows:
///
/// * `lb_shape`: `δ_j ∝ ς_j²/v_j²` on `1..=m` (the lower-bound profile),
/// * `snr_spread`: energy `δ_j² ∝ ς_j²/v_j²` on `1..=m`,
/// * `spike`: a single coordinate at index `m ≤ k + 1`.
///
/// `m` is the largest support keeping `δ ∈ E^a_r`; it is `k` (resp.
/// `k + 1`) whenever the separation is within the class at that depth.
pub fn alternative_dictionary(req: &AltRequest) -> Result<Vec<Alternative>> {
    let k = req.k;
    if k == 0 || req.a.len() <= k || req.noise_var.len() < k || req.v2.len() < k {
        return Err(Error::Invalid("alternative dictionary needs tables beyond k".into()));
    }
    if !(req.separation2 >= 0.0) {
        return Err(Error::Invalid("separation must be nonnegative".into()));
    }
    let lb: Vec<f64> = (0..k).map(|j| req.noise_var[j] / req.v2[j]).collect();
    let spread: Vec<f64> = lb.iter().map(|x| x.sqrt()).collect();
    let mut out = Vec::new();
    for (id, w) in [("lb_shape", &lb), ("snr_spread", &spread)] {
        let mut chosen = None;
        for m in (1..=k).rev() {
            let d = scaled_shape(&w[..m], req.separation2);
            if check_membership_smoothness_values(&d, req.a, req.r).member {
                chosen = Some(d);
                break;
            }
        }
        let delta = chosen.expect("a support of one is always in the class");
        out.push(Alternative { id: id.into(), support: delta.len(), delta });
    }
    let h = req.separation2.sqrt();
    let mut spike = None;
    for m in (1..=k + 1).rev() {
        let mut d = vec![0.0; m];
        d[m - 1] = h;
        if check_membership_smoothness_values(&d, req.a, req.r).member {
            spike = Some(d);
            break;
        }
    }
    let delta = spike.expect("a spike at index one is always in the class");
    out.push(Alternative { id: "spike".into(), support: delta.len(), delta });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cls(r: f64) -> SmoothnessClass {
        SmoothnessClass { a: SeqSpec::poly(1.0), r }
    }

    #[test]
    fn reparam_noise_value() {
        let n = reparam_noise(&NoiseModel::homoscedastic(0.1, 0.2), &SeqSpec::constant(1.0), 1);
        assert!((n[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn reparametrise_toy() {
        let o = Observation { y: vec![1.0, 2.0], x: vec![1.0, 1.0] };
        assert_eq!(reparametrise(&o, &[1.0, 1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn boundary_member_is_tight() {
        let c = cls(2.0);
        let a2 = c.a.eval(2);
        let theta = SeqSpec::explicit(vec![0.0, 0.0, c.r.sqrt() * a2]);
        let m = check_membership_smoothness(&theta, &c, 10).unwrap();
        assert!(m.member);
        assert!(m.tight.contains(&2));
    }

    #[test]
    fn doubled_profile_is_outside() {
        let m = check_membership_smoothness(&SeqSpec::poly(1.0).scaled(2.0), &cls(1.0), 10_000).unwrap();
        assert!(!m.member);
        assert_eq!(m.first_violation, Some(1));
    }

    #[test]
    fn tail_undecidable_for_nonsummable() {
        let e = check_membership_smoothness(&SeqSpec::constant(1.0), &cls(1.0), 10).unwrap_err();
        assert!(e.to_string().starts_with("tail undecidable"));
    }

    #[test]
    fn operator_checks() {
        let oc = OperatorClass { v: SeqSpec::poly(1.0), kappa: 4.0 };
        let bad: Vec<f64> = (1..=5).map(|j| 2.0 * 2.0 * oc.v.eval(j)).collect();
        assert_eq!(check_membership_operator(&bad, &oc).first_violation, Some(1));
        for (_, l) in operator_dictionary(&oc) {
            assert!(check_membership_operator(&l.values(50), &oc).member);
        }
    }

    #[test]
    fn zero_operator_is_reported() {
        let s = Scenario {
            name: "t".into(),
            k_max: 40,
            smoothness: cls(1.0),
            operator: OperatorClass { v: SeqSpec::exp(1.0), kappa: 1.0 },
            theta0: SeqSpec::constant(0.0),
            noise: NoiseModel::homoscedastic(0.1, 0.0),
        };
        assert!(matches!(s.tables(), Err(Error::OperatorZero(_))));
    }

    #[test]
    fn dictionary_members_hit_separation() {
        let k = 6;
        let a: Vec<f64> = (1..=20).map(|j| 1.0 / j as f64).collect();
        let nv = vec![0.01; 20];
        let v2: Vec<f64> = a.iter().map(|x| x * x).collect();
        let req = AltRequest { k, separation2: 0.2, noise_var: &nv, v2: &v2, a: &a, r: 1.0 };
        for alt in alternative_dictionary(&req).unwrap() {
            let n2: f64 = alt.delta.iter().map(|d| d * d).sum();
            assert!((n2 - 0.2).abs() < 1e-12, "{}", alt.id);
            assert!(check_membership_smoothness_values(&alt.delta, &a, 1.0).member);
        }
    }
}
