//! Run configuration: a TOML file with `preset`, `[scenario]`,
//! `[experiment]`, `[bounds]`, `[manifest]` and `[output]` sections.
//! Unset scenario fields come from the preset (`ord-mild-sd` when none
//! is named); every other field has a fixed default.

use serde::{Deserialize, Serialize};
use specradius_core::bounds::Regime;
use specradius_core::mcharness::{RadiusKind, TestKind, ALL_TESTS};
use specradius_core::model::{NoiseModel, OperatorClass, Scenario, SmoothnessClass};
use specradius_core::presets::{self, Which};
use specradius_core::seqcore::SeqSpec;
use specradius_core::Error;

use crate::error::CliError;

pub const DEFAULT_PRESET: &str = "ord-mild-sd";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `j^-x`
    Poly,
    /// `exp(-j^{2x})`
    Exp,
    /// Constant 1; operator only.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// `θ° = 0`
    Sd,
    /// `θ°_j = j^-t`
    Gof,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    pub name: Option<String>,
    pub smoothness: Option<Family>,
    pub s: Option<f64>,
    pub r: Option<f64>,
    pub operator: Option<Family>,
    pub p: Option<f64>,
    pub kappa: Option<f64>,
    pub task: Option<Task>,
    pub t: Option<f64>,
    pub eps: Option<f64>,
    pub sigma: Option<f64>,
    pub k_max: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentBlock {
    pub seed: u64,
    /// Monte Carlo replicates per estimate.
    pub n: usize,
    pub alpha: f64,
    /// Power is checked for the test at `split·alpha` against type II
    /// level `(1 - split)·alpha`.
    pub split: f64,
    pub k_cap: usize,
    pub tests: Vec<String>,
    /// Radius kinds swept by `rates`.
    pub kinds: Vec<String>,
    /// Swept noise: `eps` or `sigma`; preset default when unset.
    pub which: Option<String>,
    /// Decreasing noise grid; preset default when unset.
    pub grid: Option<Vec<f64>>,
    /// Tests whose empirical radius is also swept by `rates`.
    pub empirical: Vec<String>,
    pub beta: f64,
    pub empirical_n: usize,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        ExperimentBlock {
            seed: 42,
            n: 10_000,
            alpha: 0.05,
            split: 0.5,
            k_cap: presets::SIM_K_CAP,
            tests: ALL_TESTS.iter().map(|t| t.name().to_string()).collect(),
            kinds: ["indirect", "direct", "direct_task", "adaptive"].map(String::from).to_vec(),
            which: None,
            grid: None,
            empirical: Vec::new(),
            beta: 0.05,
            empirical_n: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsBlock {
    /// Random configurations per quantile and χ² check.
    pub configs: usize,
    pub draws: usize,
    pub chi2_draws: usize,
    pub lemma_checks: usize,
    /// Level of the lower-bound perturbations.
    pub alpha: f64,
    /// Adaptive lower-bound regimes: `poly`, `exp`, `nu`.
    pub grids: Vec<String>,
    pub grid_alpha: f64,
    pub small_eps: f64,
    pub large_eps: f64,
    pub grid_k_max: usize,
}

impl Default for BoundsBlock {
    fn default() -> Self {
        BoundsBlock {
            configs: 20,
            draws: 100_000,
            chi2_draws: 1_000_000,
            lemma_checks: 1000,
            alpha: 0.1,
            grids: ["poly", "exp", "nu"].map(String::from).to_vec(),
            grid_alpha: 0.9,
            small_eps: 2f64.powi(-20),
            large_eps: 0.125,
            grid_k_max: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestBlock {
    pub commands: Vec<String>,
}

impl Default for ManifestBlock {
    fn default() -> Self {
        ManifestBlock { commands: ["radius", "simulate", "rates"].map(String::from).to_vec() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    #[serde(default)]
    pub scenario: ScenarioBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub bounds: BoundsBlock,
    #[serde(default)]
    pub manifest: ManifestBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Radius,
    Simulate,
    Rates,
    BoundsCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Radius => "radius",
            Command::Simulate => "simulate",
            Command::Rates => "rates",
            Command::BoundsCheck => "bounds-check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Command::Radius, Command::Simulate, Command::Rates, Command::BoundsCheck].into_iter().find(|c| c.name() == s)
    }
}

/// A validated configuration with every choice made explicit.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: RunConfig,
    pub scenario: Scenario,
    pub which: Which,
    pub grid: Vec<f64>,
    pub tests: Vec<TestKind>,
    pub kinds: Vec<RadiusKind>,
    pub empirical: Vec<TestKind>,
    pub grids: Vec<Regime>,
    pub commands: Vec<Command>,
}

/// 1-based line of the first `key = ...` or `[key]` in the text.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| {
            let rest = rest.trim_start();
            rest.starts_with('=')
        }) || l.strip_prefix('[').and_then(|r| r.strip_suffix(']')).is_some_and(|s| s.trim() == key)
    })
    .map(|i| i + 1)
}

fn at(text: &str, key: &str, msg: impl Into<String>) -> CliError {
    CliError::Config { line: key_line(text, key), msg: msg.into() }
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        CliError::Config { line, msg: e.message().trim().to_string() }
    })
}

fn preset_block(name: &str) -> Option<ScenarioBlock> {
    let (s, smoothness, p, operator, k_max) = match name.rsplit_once('-')?.0 {
        "ord-mild" => (1.0, Family::Poly, 1.0, Family::Poly, 1 << 20),
        "super-mild" => (0.5, Family::Exp, 1.0, Family::Poly, 4096),
        "ord-severe" => (1.0, Family::Poly, 0.5, Family::Exp, 160),
        _ => return None,
    };
    let task = match name.rsplit_once('-')?.1 {
        "sd" => Task::Sd,
        "gof" => Task::Gof,
        _ => return None,
    };
    Some(ScenarioBlock {
        name: Some(name.into()),
        smoothness: Some(smoothness),
        s: Some(s),
        r: Some(1.0),
        operator: Some(operator),
        p: Some(p),
        kappa: Some(2.0),
        task: Some(task),
        t: Some(1.0),
        eps: Some(presets::SIM_EPS),
        sigma: Some(presets::SIM_SIGMA),
        k_max: Some(k_max),
    })
}

fn overlay(base: ScenarioBlock, over: &ScenarioBlock) -> ScenarioBlock {
    ScenarioBlock {
        name: over.name.clone().or(base.name),
        smoothness: over.smoothness.or(base.smoothness),
        s: over.s.or(base.s),
        r: over.r.or(base.r),
        operator: over.operator.or(base.operator),
        p: over.p.or(base.p),
        kappa: over.kappa.or(base.kappa),
        task: over.task.or(base.task),
        t: over.t.or(base.t),
        eps: over.eps.or(base.eps),
        sigma: over.sigma.or(base.sigma),
        k_max: over.k_max.or(base.k_max),
    }
}

fn family_seq(f: Family, x: f64) -> SeqSpec {
    match f {
        Family::Poly => SeqSpec::poly(x),
        Family::Exp => SeqSpec::exp(x),
        Family::Identity => SeqSpec::constant(1.0),
    }
}

/// Builds the scenario of a fully populated block.
pub fn build_scenario(b: &ScenarioBlock) -> Scenario {
    let task = b.task.unwrap_or(Task::Sd);
    Scenario {
        name: b.name.clone().unwrap_or_default(),
        k_max: b.k_max.unwrap_or(0),
        smoothness: SmoothnessClass { a: family_seq(b.smoothness.unwrap_or(Family::Poly), b.s.unwrap_or(1.0)), r: b.r.unwrap_or(1.0) },
        operator: OperatorClass {
            v: family_seq(b.operator.unwrap_or(Family::Poly), b.p.unwrap_or(1.0)),
            kappa: b.kappa.unwrap_or(1.0),
        },
        theta0: match task {
            Task::Sd => SeqSpec::constant(0.0),
            Task::Gof => SeqSpec::poly(b.t.unwrap_or(1.0)),
        },
        noise: NoiseModel::homoscedastic(b.eps.unwrap_or(0.0), b.sigma.unwrap_or(0.0)),
    }
}

fn parse_list<T>(text: &str, key: &str, items: &[String], f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, CliError> {
    items.iter().map(|s| f(s).ok_or_else(|| at(text, key, format!("unknown {key} entry `{s}`")))).collect()
}

fn regime(s: &str) -> Option<Regime> {
    match s {
        "poly" => Some(Regime::Poly),
        "exp" => Some(Regime::Exp),
        "nu" => Some(Regime::Nu),
        _ => None,
    }
}

pub fn resolve(config: RunConfig, text: &str) -> Result<Resolved, CliError> {
    let preset_name = config.preset.clone().unwrap_or_else(|| DEFAULT_PRESET.into());
    let preset = presets::preset(&preset_name).ok_or_else(|| at(text, "preset", format!("unknown preset `{preset_name}`")))?;
    let block = overlay(preset_block(&preset_name).expect("preset table covers all names"), &config.scenario);
    if block.smoothness == Some(Family::Identity) {
        return Err(at(text, "smoothness", "smoothness must decay: use `poly` or `exp`"));
    }
    let scenario = build_scenario(&block);
    scenario.tables().map_err(|e| if e.is_config() { at(text, "scenario", e.to_string()) } else { e.into() })?;

    let x = &config.experiment;
    let which = match x.which.as_deref() {
        None if scenario.is_sd() => Which::Eps,
        None => Which::Sigma,
        Some("eps") => Which::Eps,
        Some("sigma") => Which::Sigma,
        Some(w) => return Err(at(text, "which", format!("unknown noise `{w}`, expected eps or sigma"))),
    };
    if which == Which::Sigma && scenario.is_sd() {
        return Err(at(text, "which", "sigma sweeps need task = \"gof\""));
    }
    let grid = x.grid.clone().unwrap_or(preset.grid);
    if grid.len() < 5 {
        return Err(at(text, "grid", Error::GridTooShort(grid.len()).to_string()));
    }
    if grid.iter().any(|&g| !(g > 0.0 && g < 1.0)) || grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(at(text, "grid", "noise grid must be strictly decreasing inside (0, 1)"));
    }
    if !(x.alpha > 0.0 && x.alpha < 1.0) {
        return Err(at(text, "alpha", "alpha must lie in (0, 1)"));
    }
    if !(x.split > 0.0 && x.split < 1.0) {
        return Err(at(text, "split", "split must lie in (0, 1)"));
    }
    if x.n < specradius_core::mcharness::MIN_REPLICATES {
        return Err(at(text, "n", format!("need at least {} replicates", specradius_core::mcharness::MIN_REPLICATES)));
    }
    let tests = parse_list(text, "tests", &x.tests, TestKind::parse)?;
    let kinds = parse_list(text, "kinds", &x.kinds, RadiusKind::parse)?;
    let empirical = parse_list(text, "empirical", &x.empirical, TestKind::parse)?;
    let grids = parse_list(text, "grids", &config.bounds.grids, regime)?;
    let commands = parse_list(text, "commands", &config.manifest.commands, Command::parse)?;
    Ok(Resolved { config, scenario, which, grid, tests, kinds, empirical, grids, commands })
}

/// The configuration with every default written out.
pub fn defaults() -> RunConfig {
    let p = presets::preset(DEFAULT_PRESET).expect("default preset");
    RunConfig {
        preset: Some(DEFAULT_PRESET.into()),
        scenario: preset_block(DEFAULT_PRESET).expect("default preset"),
        experiment: ExperimentBlock { which: Some(p.which.name().into()), grid: Some(p.grid), ..Default::default() },
        bounds: BoundsBlock::default(),
        manifest: ManifestBlock::default(),
        output: OutputBlock { dir: Some("specradius-out".into()) },
    }
}
