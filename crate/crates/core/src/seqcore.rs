//! Sequences indexed by `1..=k_max`, their prefix functionals and the
//! balance (min of max) operator every radius is built from.
//!
//! Arrays are stored 0-based: entry `i` holds the value at index `i + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation for all computations over the natural numbers.
pub const DEFAULT_K_MAX: usize = 1 << 20;
/// Default tolerance on the analytic tail of a total energy.
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

/// A positive real sequence given by a closed form or by explicit values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeqSpec {
    /// `scale * j^(-exponent)`
    PolyDecay {
        exponent: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale * exp(-j^(2 * exponent))`
    ExpDecay {
        exponent: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Const { value: f64 },
    /// Listed values, then `tail` for every later index.
    Explicit {
        values: Vec<f64>,
        #[serde(default)]
        tail: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl SeqSpec {
    pub fn poly(exponent: f64) -> Self {
        SeqSpec::PolyDecay { exponent, scale: 1.0 }
    }

    pub fn exp(exponent: f64) -> Self {
        SeqSpec::ExpDecay { exponent, scale: 1.0 }
    }

    pub fn constant(value: f64) -> Self {
        SeqSpec::Const { value }
    }

    pub fn explicit(values: Vec<f64>) -> Self {
        SeqSpec::Explicit { values, tail: 0.0 }
    }

    /// Value at the 1-based index `j`.
    pub fn eval(&self, j: usize) -> f64 {
        assert!(j >= 1, "sequences are indexed from 1");
        let x = j as f64;
        match self {
            SeqSpec::PolyDecay { exponent, scale } => scale * x.powf(-exponent),
            SeqSpec::ExpDecay { exponent, scale } => scale * (-x.powf(2.0 * exponent)).exp(),
            SeqSpec::Const { value } => *value,
            SeqSpec::Explicit { values, tail } => values.get(j - 1).copied().unwrap_or(*tail),
        }
    }

    /// Values at `1..=k`.
    pub fn values(&self, k: usize) -> Vec<f64> {
        (1..=k).map(|j| self.eval(j)).collect()
    }

    /// Multiplies the sequence by a constant.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            SeqSpec::PolyDecay { exponent, scale } => SeqSpec::PolyDecay { exponent: *exponent, scale: scale * c },
            SeqSpec::ExpDecay { exponent, scale } => SeqSpec::ExpDecay { exponent: *exponent, scale: scale * c },
            SeqSpec::Const { value } => SeqSpec::Const { value: value * c },
            SeqSpec::Explicit { values, tail } => SeqSpec::Explicit {
                values: values.iter().map(|x| x * c).collect(),
                tail: tail * c,
            },
        }
    }

    /// True when every value is zero.
    pub fn is_zero(&self) -> bool {
        match self {
            SeqSpec::PolyDecay { scale, .. } | SeqSpec::ExpDecay { scale, .. } => *scale == 0.0,
            SeqSpec::Const { value } => *value == 0.0,
            SeqSpec::Explicit { values, tail } => *tail == 0.0 && values.iter().all(|&x| x == 0.0),
        }
    }
}

/// An ordered set of 1-based indices: either all of `1..=k_max` or an
/// explicit strictly increasing subset of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum IndexSet {
    Full(usize),
    Subset(Vec<usize>),
}

impl IndexSet {
    pub fn subset(mut ks: Vec<usize>) -> Result<Self> {
        ks.sort_unstable();
        ks.dedup();
        if ks.is_empty() || ks[0] == 0 {
            return Err(Error::Invalid("index set must be nonempty and 1-based".into()));
        }
        Ok(IndexSet::Subset(ks))
    }

    pub fn len(&self) -> usize {
        match self {
            IndexSet::Full(k) => *k,
            IndexSet::Subset(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest index in the set.
    pub fn max(&self) -> usize {
        match self {
            IndexSet::Full(k) => *k,
            IndexSet::Subset(v) => *v.last().expect("nonempty"),
        }
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = usize> + '_> {
        match self {
            IndexSet::Full(k) => Box::new(1..=*k),
            IndexSet::Subset(v) => Box::new(v.iter().copied()),
        }
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

/// Prefix tables of a sequence `x`:
/// `q[k] = sum_{j<=k} x_j^2`, `m[k] = max_{j<=k} x_j`, `rq[k] = sqrt(q[k])`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrefixTables {
    pub q: Vec<f64>,
    pub m: Vec<f64>,
    pub rq: Vec<f64>,
}

impl PrefixTables {
    pub fn from_values(x: &[f64]) -> Result<Self> {
        let mut q = Vec::with_capacity(x.len());
        let mut m = Vec::with_capacity(x.len());
        let mut rq = Vec::with_capacity(x.len());
        let mut acc = 0.0_f64;
        let mut mx = f64::NEG_INFINITY;
        for (i, &xi) in x.iter().enumerate() {
            acc += xi * xi;
            if !acc.is_finite() {
                return Err(Error::EnergyOverflow(i + 1));
            }
            mx = mx.max(xi);
            q.push(acc);
            m.push(mx);
            rq.push(acc.sqrt());
        }
        Ok(PrefixTables { q, m, rq })
    }

    pub fn from_spec(s: &SeqSpec, k_max: usize) -> Result<Self> {
        Self::from_values(&s.values(k_max))
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `qF_k` at the 1-based index `k`.
    pub fn qf(&self, k: usize) -> f64 {
        self.q[k - 1]
    }

    pub fn rqf(&self, k: usize) -> f64 {
        self.rq[k - 1]
    }

    pub fn mf(&self, k: usize) -> f64 {
        self.m[k - 1]
    }
}

/// Total energy `sum_j theta_j^2` with an explicit bound on the part
/// beyond `k_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub value: f64,
    pub prefix: f64,
    pub tail_bound: f64,
}

/// Squared-norm tail `sum_{j>k} s_j^2` as (estimate, upper bound).
pub fn total_energy_parts(s: &SeqSpec, k: usize) -> Result<(f64, f64)> {
    let kf = k as f64;
    match s {
        SeqSpec::PolyDecay { exponent, scale } => {
            let p = 2.0 * exponent;
            if p <= 1.0 {
                return Err(Error::Divergent(format!("poly_decay exponent {exponent} <= 1/2")));
            }
            let c2 = scale * scale;
            // sum_{j>k} j^-p lies below the integral from k and is well
            // approximated by the integral from k + 1/2
            let bound = c2 * kf.powf(1.0 - p) / (p - 1.0);
            let est = c2 * (kf + 0.5).powf(1.0 - p) / (p - 1.0);
            Ok((est, bound))
        }
        SeqSpec::ExpDecay { exponent, scale } => {
            let b = 2.0 * exponent;
            if b <= 0.0 {
                return Err(Error::Divergent(format!("exp_decay exponent {exponent} <= 0")));
            }
            let c2 = scale * scale;
            let bound = if b >= 1.0 {
                // convexity of x^b: consecutive ratios of exp(-2 j^b) past k
                // are at most exp(-2 b (k+1)^(b-1))
                let first = (-2.0 * (kf + 1.0).powf(b)).exp();
                let ratio = (-2.0 * b * (kf + 1.0).powf(b - 1.0)).exp();
                c2 * first / (1.0 - ratio)
            } else {
                // integral bound: int_k^inf exp(-2 x^b) dx
                //   = (1/b) 2^(-1/b) Gamma(1/b, 2 k^b)
                let s_ = 1.0 / b;
                let y = 2.0 * kf.powf(b);
                let upper = statrs::function::gamma::gamma_ur(s_, y)
                    * statrs::function::gamma::gamma(s_);
                c2 * s_ * 2f64.powf(-s_) * upper
            };
            Ok((bound, bound))
        }
        SeqSpec::Const { value } => {
            if *value == 0.0 {
                Ok((0.0, 0.0))
            } else {
                Err(Error::Divergent("nonzero constant sequence".into()))
            }
        }
        SeqSpec::Explicit { values, tail } => {
            if *tail != 0.0 {
                return Err(Error::Divergent("explicit sequence with nonzero tail".into()));
            }
            let rest: f64 = values.iter().skip(k).map(|x| x * x).sum();
            Ok((rest, 0.0))
        }
    }
}

/// Total energy of `theta` using `k_max` explicit terms plus an analytic
/// tail. Fails if the tail bound exceeds `tail_tol`.
pub fn total_energy(theta: &SeqSpec, k_max: usize, tail_tol: f64) -> Result<EnergyReport> {
    let prefix = PrefixTables::from_spec(theta, k_max)?;
    let p = if k_max == 0 { 0.0 } else { prefix.qf(k_max) };
    let (est, bound) = total_energy_parts(theta, k_max)?;
    if bound > tail_tol {
        return Err(Error::TailNotNegligible { bound, tol: tail_tol });
    }
    Ok(EnergyReport { value: p + est, prefix: p, tail_bound: bound })
}

/// Bias table `b2[k] = ||theta||^2 - qF_k(theta)` for `k = 1..=k_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasTables {
    pub b2: Vec<f64>,
    pub total: f64,
    pub tail_bound: f64,
}

impl BiasTables {
    pub fn new(theta: &SeqSpec, k_max: usize, tail_tol: f64) -> Result<Self> {
        let energy = total_energy(theta, k_max, tail_tol)?;
        let prefix = PrefixTables::from_spec(theta, k_max)?;
        let b2 = prefix.q.iter().map(|&q| (energy.value - q).max(0.0)).collect();
        Ok(BiasTables { b2, total: energy.value, tail_bound: energy.tail_bound })
    }

    pub fn at(&self, k: usize) -> f64 {
        self.b2[k - 1]
    }
}

/// Result of a balance: the minimum over the index set of
/// `variance[k] ∨ bias[k]` and its smallest minimiser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub value: f64,
    pub k: usize,
    pub variance: f64,
    pub bias: f64,
    /// The minimiser is the largest index of the set.
    pub at_truncation: bool,
}

fn check_monotone(xs: &[f64], range: &IndexSet, increasing: bool, what: &str) -> Result<()> {
    let mut prev: Option<(usize, f64)> = None;
    for k in range.iter() {
        let x = xs[k - 1];
        if x.is_nan() {
            return Err(Error::Monotonicity(format!("{what} is NaN at {k}")));
        }
        if let Some((pk, px)) = prev {
            let bad = if increasing { x < px } else { x > px };
            if bad {
                return Err(Error::Monotonicity(format!(
                    "{what} not {} between {pk} and {k}",
                    if increasing { "nondecreasing" } else { "nonincreasing" }
                )));
            }
        }
        prev = Some((k, x));
    }
    Ok(())
}

/// Minimum over `range` of `variance ∨ bias`, smallest argmin.
///
/// `variance` must be nondecreasing and `bias` nonincreasing along the
/// range; both are indexed 0-based by `k - 1`.
pub fn balance_min_argmin(variance: &[f64], bias: &[f64], range: &IndexSet) -> Result<Balance> {
    if range.is_empty() || range.max() > variance.len() || range.max() > bias.len() {
        return Err(Error::Invalid("range exceeds table length".into()));
    }
    check_monotone(variance, range, true, "variance")?;
    check_monotone(bias, range, false, "bias")?;
    let mut best: Option<(f64, usize)> = None;
    for k in range.iter() {
        let v = variance[k - 1].max(bias[k - 1]);
        if best.map_or(true, |(b, _)| v < b) {
            best = Some((v, k));
        }
    }
    let (value, k) = best.expect("nonempty range");
    Ok(Balance {
        value,
        k,
        variance: variance[k - 1],
        bias: bias[k - 1],
        at_truncation: k == range.max(),
    })
}

/// Both sides of the argmin-combination identity
/// `min(a∨b) ∨ min(a∨c) = min(a∨b∨c)` with argmin `k_b ∧ k_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LemmaCheck {
    pub lhs_value: f64,
    pub lhs_k: usize,
    pub rhs_value: f64,
    pub rhs_k: usize,
    pub holds: bool,
}

/// Checks the combination identity for `a` nonincreasing and `b`, `c`
/// nondecreasing, all of equal length.
pub fn combine_min_lemma_check(a: &[f64], b: &[f64], c: &[f64]) -> Result<LemmaCheck> {
    if a.len() != b.len() || a.len() != c.len() || a.is_empty() {
        return Err(Error::Invalid("lemma inputs must share a nonzero length".into()));
    }
    let range = IndexSet::Full(a.len());
    let ab = balance_min_argmin(b, a, &range)?;
    let ac = balance_min_argmin(c, a, &range)?;
    let bc: Vec<f64> = b.iter().zip(c).map(|(x, y)| x.max(*y)).collect();
    let abc = balance_min_argmin(&bc, a, &range)?;
    let lhs_value = ab.value.max(ac.value);
    let lhs_k = ab.k.min(ac.k);
    Ok(LemmaCheck {
        lhs_value,
        lhs_k,
        rhs_value: abc.value,
        rhs_k: abc.k,
        holds: lhs_value == abc.value && lhs_k == abc.k,
    })
}
