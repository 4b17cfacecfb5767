//! Named scenarios: ordinary or super smoothness, mildly or severely
//! ill-posed operators, signal detection (`θ° = 0`) or goodness of fit.

use crate::model::{NoiseModel, OperatorClass, Scenario, SmoothnessClass};
use crate::seqcore::SeqSpec;

pub const NAMES: [&str; 6] =
    ["ord-mild-sd", "ord-mild-gof", "super-mild-sd", "super-mild-gof", "ord-severe-sd", "ord-severe-gof"];

/// Largest dimension used by simulations.
pub const SIM_K_CAP: usize = 256;

pub const SIM_EPS: f64 = 0.05;
pub const SIM_SIGMA: f64 = 0.1;

/// Which noise level a sweep varies; the other one is set to zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Eps,
    Sigma,
}

impl Which {
    pub fn name(self) -> &'static str {
        match self {
            Which::Eps => "eps",
            Which::Sigma => "sigma",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub scenario: Scenario,
    /// Noise grid for rate sweeps, strictly decreasing.
    pub grid: Vec<f64>,
    pub which: Which,
}

/// `2^-4, ..., 2^-12`.
pub fn dyadic_grid() -> Vec<f64> {
    (4..=12).map(|l| 2f64.powi(-l)).collect()
}

/// `10^-4, 10^-8, ..., 10^-40`: wide enough for iterated logarithms to move.
pub fn severe_grid() -> Vec<f64> {
    (1..=10).map(|l| 10f64.powi(-4 * l)).collect()
}

/// Builds a scenario from exponents. `super_smooth` selects
/// `a_j = exp(-j^{2s})` over `j^{-s}`, `severe` selects `v_j = exp(-j^{2p})`
/// over `j^{-p}`, and `t = None` gives signal detection.
#[allow(clippy::too_many_arguments)]
pub fn scenario(
    name: &str,
    s: f64,
    super_smooth: bool,
    p: f64,
    severe: bool,
    t: Option<f64>,
    k_max: usize,
    eps: f64,
    sigma: f64,
) -> Scenario {
    Scenario {
        name: name.into(),
        k_max,
        smoothness: SmoothnessClass { a: if super_smooth { SeqSpec::exp(s) } else { SeqSpec::poly(s) }, r: 1.0 },
        operator: OperatorClass { v: if severe { SeqSpec::exp(p) } else { SeqSpec::poly(p) }, kappa: 2.0 },
        theta0: t.map_or(SeqSpec::constant(0.0), SeqSpec::poly),
        noise: NoiseModel::homoscedastic(eps, sigma),
    }
}

pub fn preset(name: &str) -> Option<Preset> {
    let gof = name.ends_with("-gof");
    if !gof && !name.ends_with("-sd") {
        return None;
    }
    let t = gof.then_some(1.0);
    let which = if gof { Which::Sigma } else { Which::Eps };
    let (s, sup, p, sev, k_max, grid) = match name.rsplit_once('-')?.0 {
        "ord-mild" => (1.0, false, 1.0, false, 1 << 20, dyadic_grid()),
        "super-mild" => (0.5, true, 1.0, false, 4096, dyadic_grid()),
        "ord-severe" => (1.0, false, 0.5, true, 160, severe_grid()),
        _ => return None,
    };
    Some(Preset { scenario: scenario(name, s, sup, p, sev, t, k_max, SIM_EPS, SIM_SIGMA), grid, which })
}

pub fn all() -> Vec<Preset> {
    NAMES.iter().map(|n| preset(n).expect("known preset")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in all() {
            p.scenario.tables().unwrap();
            assert!(p.grid.windows(2).all(|w| w[1] < w[0]));
            assert!(p.grid.len() >= 5);
        }
        assert!(preset("ord-mild").is_none());
        assert!(preset("foo-sd").is_none());
    }
}
