//! Run configuration: the JSON surface consumed by the CLI and the resolved
//! form the simulator executes.
//!
//! Validation reports the dotted path of the offending field so config errors
//! are actionable from the command line.

use serde::{Deserialize, Serialize};

use crate::adversary::{Strategy, StrategyKind};
use crate::error::Error;
use crate::landscape::Landscape;
use crate::params::ParamVector;
use crate::score::Score256;
use crate::tob::{auto_ban_quorum, Tick, WorkerId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Permissioned,
    Permissionless,
}

/// A tick count that is either constant or drawn uniformly from a range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DelaySpec {
    Constant(u64),
    Range([u64; 2]),
}

impl DelaySpec {
    pub fn validate(&self, path: &str) -> Result<(), Error> {
        if let DelaySpec::Range([lo, hi]) = self {
            if lo > hi {
                return Err(Error::config(path, format!("range [{lo}, {hi}] has lo > hi")));
            }
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut crate::rng::SplitMix64) -> u64 {
        match self {
            DelaySpec::Constant(v) => *v,
            DelaySpec::Range([lo, hi]) => rng.next_range(*lo, *hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DelaySpec::Constant(v) => *v as f64,
            DelaySpec::Range([lo, hi]) => (*lo as f64 + *hi as f64) / 2.0,
        }
    }
}

/// Starting point: a fill value replicated to `dim`, or an explicit vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta0Spec {
    Fill { fill: f64 },
    Explicit(Vec<f64>),
}

impl Default for Theta0Spec {
    fn default() -> Self {
        Theta0Spec::Fill { fill: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSpec {
    pub name: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub theta0: Theta0Spec,
}

fn default_dim() -> usize {
    10
}

impl LandscapeSpec {
    pub fn build(&self, path: &str) -> Result<(Landscape, ParamVector), Error> {
        let landscape = Landscape::by_name(&self.name, self.dim).map_err(|e| match e {
            Error::Config { message, .. } => Error::config(format!("{path}.name"), message),
            other => other,
        })?;
        let theta0 = match &self.theta0 {
            Theta0Spec::Fill { fill } => ParamVector::filled(*fill, landscape.dim()),
            Theta0Spec::Explicit(v) => {
                if v.len() != landscape.dim() {
                    return Err(Error::config(
                        format!("{path}.theta0"),
                        format!("expected {} elements, got {}", landscape.dim(), v.len()),
                    ));
                }
                ParamVector::new(v.clone())
            }
        }
        .map_err(|e| Error::config(format!("{path}.theta0"), e.to_string()))?;
        Ok((landscape, theta0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ByzantineSpec {
    pub worker: WorkerId,
    pub kind: StrategyKind,
    #[serde(default = "default_spam_rate")]
    pub spam_rate: u32,
    #[serde(default = "default_lie_magnitude")]
    pub lie_magnitude: f64,
    #[serde(default = "default_withhold_ticks")]
    pub withhold_ticks: Tick,
    #[serde(default)]
    pub crash_tick: Tick,
    #[serde(default = "default_power")]
    pub power_multiplier: f64,
}

fn default_spam_rate() -> u32 {
    1
}
fn default_lie_magnitude() -> f64 {
    1.0
}
fn default_withhold_ticks() -> Tick {
    8
}
fn default_power() -> f64 {
    1.0
}

impl ByzantineSpec {
    pub fn strategy(&self) -> Strategy {
        Strategy {
            kind: self.kind,
            spam_rate: self.spam_rate,
            lie_magnitude: self.lie_magnitude,
            withhold_ticks: self.withhold_ticks,
            crash_tick: self.crash_tick,
            power_multiplier: self.power_multiplier,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkersSpec {
    pub count: usize,
    #[serde(default = "default_t_eval")]
    pub t_eval: DelaySpec,
    #[serde(default)]
    pub byzantine: Vec<ByzantineSpec>,
}

fn default_t_eval() -> DelaySpec {
    DelaySpec::Constant(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub sigma: f64,
    #[serde(default)]
    pub nu: f64,
    pub z_steps: u64,
    /// Mining target: `"2^-k"` for a hit probability of 2^-k, or 64 hex chars.
    #[serde(default = "default_b_target")]
    pub b_target: String,
}

fn default_b_target() -> String {
    // Effectively disables hash events; permissioned runs never use them.
    "2^-256".to_string()
}

pub fn parse_b_target(s: &str) -> Option<Score256> {
    if let Some(exp) = s.strip_prefix("2^-") {
        let k: u32 = exp.parse().ok()?;
        if !(1..=256).contains(&k) {
            return None;
        }
        return Some(Score256::from_hit_exponent(k));
    }
    Score256::from_hex(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TobSpec {
    #[serde(default = "default_delta")]
    pub delta: DelaySpec,
    #[serde(default)]
    pub ban_quorum: BanQuorumSpec,
}

fn default_delta() -> DelaySpec {
    DelaySpec::Constant(1)
}

impl Default for TobSpec {
    fn default() -> Self {
        TobSpec { delta: default_delta(), ban_quorum: BanQuorumSpec::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BanQuorumSpec {
    Auto(String),
    Explicit(usize),
}

impl Default for BanQuorumSpec {
    fn default() -> Self {
        BanQuorumSpec::Auto("auto".to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySpec {
    Complete,
    KRegular { k: usize },
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec::Complete
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GossipSpec {
    #[serde(default = "default_delta")]
    pub delay: DelaySpec,
    #[serde(default)]
    pub topology: TopologySpec,
}

impl Default for GossipSpec {
    fn default() -> Self {
        GossipSpec { delay: default_delta(), topology: TopologySpec::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    /// Confirmation depth required before deciding a task's final point.
    #[serde(default = "default_d_final")]
    pub d_final: u64,
    /// Slack parameter of the mining-rate safety condition.
    #[serde(default = "default_delta_margin")]
    pub delta_margin: f64,
}

fn default_d_final() -> u64 {
    6
}
fn default_delta_margin() -> f64 {
    0.1
}

impl Default for ChainSpec {
    fn default() -> Self {
        ChainSpec { d_final: default_d_final(), delta_margin: default_delta_margin() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    /// Pool-wide search evaluations allowed without progress before abort.
    #[serde(default = "default_max_evals_per_step")]
    pub max_evals_per_step: u64,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: Tick,
}

fn default_max_evals_per_step() -> u64 {
    1_000_000
}
fn default_max_ticks() -> Tick {
    100_000_000
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec {
            max_evals_per_step: default_max_evals_per_step(),
            max_ticks: default_max_ticks(),
        }
    }
}

/// Full run configuration. The same `SimConfig` always produces the same
/// transcript, byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_scenario")]
    pub scenario: String,
    #[serde(default)]
    pub master_seed: Option<u64>,
    pub mode: Mode,
    pub workers: WorkersSpec,
    pub landscape: LandscapeSpec,
    /// Queue of follow-up search tasks (permissionless mode); the configured
    /// `landscape` is always task 0.
    #[serde(default)]
    pub tasks: Vec<LandscapeSpec>,
    pub search: SearchSpec,
    #[serde(default)]
    pub tob: TobSpec,
    #[serde(default)]
    pub gossip: GossipSpec,
    #[serde(default)]
    pub chain: ChainSpec,
    #[serde(default)]
    pub budgets: BudgetSpec,
    /// Per-worker queues of forced candidate seeds, drawn before the worker's
    /// own stream. Keys are worker indices rendered as strings.
    #[serde(default)]
    pub scripted_seeds: std::collections::BTreeMap<String, Vec<u64>>,
}

fn default_scenario() -> String {
    "run".to_string()
}

/// One search task resolved from config.
#[derive(Clone, Debug)]
pub struct ResolvedTask {
    pub landscape: Landscape,
    pub theta0: ParamVector,
}

/// Config after validation, ready to execute.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub raw: SimConfig,
    pub master_seed: u64,
    pub mode: Mode,
    pub n_workers: usize,
    pub strategies: Vec<Option<Strategy>>,
    pub tasks: Vec<ResolvedTask>,
    pub sigma: f64,
    pub nu: f64,
    pub z_steps: u64,
    pub b_target: Score256,
    pub ban_quorum: usize,
    pub d_final: u64,
    pub delta_margin: f64,
    pub neighbors: Vec<Vec<WorkerId>>,
    pub scripted_seeds: Vec<Vec<u64>>,
}

impl ResolvedConfig {
    pub fn is_correct(&self, w: WorkerId) -> bool {
        self.strategies[w as usize].is_none()
    }

    pub fn correct_workers(&self) -> impl Iterator<Item = WorkerId> + '_ {
        (0..self.n_workers as WorkerId).filter(|w| self.is_correct(*w))
    }

    pub fn n_correct(&self) -> usize {
        self.strategies.iter().filter(|s| s.is_none()).count()
    }

    /// Cumulative step boundary after which task `t` is complete.
    pub fn task_boundary(&self, task: usize) -> u64 {
        (task as u64 + 1) * self.z_steps
    }

    pub fn search_config(&self) -> crate::es::SearchConfig {
        crate::es::SearchConfig {
            sigma: self.sigma,
            nu: self.nu,
            z_steps: self.z_steps,
            b_target: self.b_target,
        }
    }
}

fn neighbors_for(topology: &TopologySpec, n: usize) -> Result<Vec<Vec<WorkerId>>, Error> {
    match topology {
        TopologySpec::Complete => Ok((0..n)
            .map(|i| (0..n).filter(|j| *j != i).map(|j| j as WorkerId).collect())
            .collect()),
        TopologySpec::KRegular { k } => {
            if *k == 0 || k % 2 != 0 || *k >= n {
                return Err(Error::config(
                    "gossip.topology.k",
                    format!("k-regular ring requires even 0 < k < n, got k={k}, n={n}"),
                ));
            }
            Ok((0..n)
                .map(|i| {
                    let mut out = Vec::with_capacity(*k);
                    for off in 1..=(k / 2) {
                        out.push(((i + off) % n) as WorkerId);
                        out.push(((i + n - off) % n) as WorkerId);
                    }
                    out.sort_unstable();
                    out
                })
                .collect())
        }
    }
}

impl SimConfig {
    pub fn from_json(json: &str) -> Result<SimConfig, Error> {
        serde_json::from_str(json)
            .map_err(|e| Error::config("<root>", format!("config does not parse: {e}")))
    }

    /// Validate and resolve. `master_seed` must be present by now; the CLI
    /// injects an ephemeral one when asked to.
    pub fn resolve(&self) -> Result<ResolvedConfig, Error> {
        let master_seed = self
            .master_seed
            .ok_or_else(|| Error::config("master_seed", "required (or pass --ephemeral)"))?;
        let n = self.workers.count;
        if n == 0 {
            return Err(Error::config("workers.count", "must be at least 1"));
        }
        self.workers.t_eval.validate("workers.t_eval")?;
        if let DelaySpec::Constant(0) = self.workers.t_eval {
            return Err(Error::config("workers.t_eval", "must be at least 1 tick"));
        }
        if let DelaySpec::Range([0, _]) = self.workers.t_eval {
            return Err(Error::config("workers.t_eval", "must be at least 1 tick"));
        }

        let mut strategies: Vec<Option<Strategy>> = vec![None; n];
        for (i, b) in self.workers.byzantine.iter().enumerate() {
            let path = format!("workers.byzantine[{i}]");
            if b.worker as usize >= n {
                return Err(Error::config(
                    format!("{path}.worker"),
                    format!("worker index {} out of range (count = {n})", b.worker),
                ));
            }
            if strategies[b.worker as usize].is_some() {
                return Err(Error::config(
                    format!("{path}.worker"),
                    format!("worker {} assigned more than one strategy", b.worker),
                ));
            }
            if !(b.power_multiplier > 0.0) || !b.power_multiplier.is_finite() {
                return Err(Error::config(
                    format!("{path}.power_multiplier"),
                    "must be a positive finite real",
                ));
            }
            if b.kind == StrategyKind::InvalidSeedSpammer && b.spam_rate == 0 {
                return Err(Error::config(format!("{path}.spam_rate"), "must be at least 1"));
            }
            strategies[b.worker as usize] = Some(b.strategy());
        }

        // search block
        if !(self.search.sigma > 0.0) || !self.search.sigma.is_finite() {
            return Err(Error::config("search.sigma", "must be a positive finite real"));
        }
        if !(self.search.nu >= 0.0) || !self.search.nu.is_finite() {
            return Err(Error::config("search.nu", "must be a non-negative finite real"));
        }
        if self.search.z_steps == 0 {
            return Err(Error::config("search.z_steps", "must be at least 1"));
        }
        let b_target = parse_b_target(&self.search.b_target).ok_or_else(|| {
            Error::config("search.b_target", "expected `2^-k` (1 <= k <= 256) or 64 hex chars")
        })?;
        if b_target == Score256::ZERO || b_target == Score256::MAX {
            return Err(Error::config("search.b_target", "must satisfy 0 < target < 2^256-1"));
        }

        self.tob.delta.validate("tob.delta")?;
        self.gossip.delay.validate("gossip.delay")?;

        let mut tasks = Vec::new();
        let (l0, t0) = self.landscape.build("landscape")?;
        tasks.push(ResolvedTask { landscape: l0, theta0: t0 });
        for (i, spec) in self.tasks.iter().enumerate() {
            let (l, t) = spec.build(&format!("tasks[{i}]"))?;
            tasks.push(ResolvedTask { landscape: l, theta0: t });
        }
        if tasks.len() > 1 && self.mode == Mode::Permissioned {
            return Err(Error::config("tasks", "task queues are a permissionless feature"));
        }

        let n_correct = strategies.iter().filter(|s| s.is_none()).count();
        if n_correct == 0 {
            return Err(Error::config("workers.byzantine", "at least one correct worker required"));
        }
        let ban_quorum = match &self.tob.ban_quorum {
            BanQuorumSpec::Auto(s) if s == "auto" => auto_ban_quorum(n_correct),
            BanQuorumSpec::Auto(s) => {
                return Err(Error::config(
                    "tob.ban_quorum",
                    format!("expected \"auto\" or an integer, got \"{s}\""),
                ))
            }
            BanQuorumSpec::Explicit(q) => {
                if *q == 0 || *q > n_correct {
                    return Err(Error::config(
                        "tob.ban_quorum",
                        format!("must be in 1..={n_correct} (correct workers)"),
                    ));
                }
                *q
            }
        };

        if self.chain.d_final == 0 {
            return Err(Error::config("chain.d_final", "must be at least 1"));
        }
        if !(self.chain.delta_margin > 0.0) || !self.chain.delta_margin.is_finite() {
            return Err(Error::config("chain.delta_margin", "must be a positive finite real"));
        }
        if self.budgets.max_evals_per_step == 0 {
            return Err(Error::config("budgets.max_evals_per_step", "must be positive"));
        }
        if self.budgets.max_ticks == 0 {
            return Err(Error::config("budgets.max_ticks", "must be positive"));
        }

        let neighbors = neighbors_for(&self.gossip.topology, n)?;

        let mut scripted_seeds = vec![Vec::new(); n];
        for (key, seeds) in &self.scripted_seeds {
            let idx: usize = key.parse().map_err(|_| {
                Error::config("scripted_seeds", format!("worker key `{key}` is not an index"))
            })?;
            if idx >= n {
                return Err(Error::config(
                    "scripted_seeds",
                    format!("worker index {idx} out of range (count = {n})"),
                ));
            }
            scripted_seeds[idx] = seeds.clone();
        }

        Ok(ResolvedConfig {
            raw: self.clone(),
            master_seed,
            mode: self.mode,
            n_workers: n,
            strategies,
            tasks,
            sigma: self.search.sigma,
            nu: self.search.nu,
            z_steps: self.search.z_steps,
            b_target,
            ban_quorum,
            d_final: self.chain.d_final,
            delta_margin: self.chain.delta_margin,
            neighbors,
            scripted_seeds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json(mode: &str) -> String {
        format!(
            r#"{{
              "master_seed": 1,
              "mode": "{mode}",
              "workers": {{"count": 4}},
              "landscape": {{"name": "sphere", "dim": 4, "theta0": {{"fill": 2.0}}}},
              "search": {{"sigma": 0.1, "nu": 0.0, "z_steps": 3}}
            }}"#
        )
    }

    #[test]
    fn minimal_config_resolves() {
        let cfg = SimConfig::from_json(&minimal_json("permissioned")).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.n_workers, 4);
        assert_eq!(r.ban_quorum, 3);
        assert_eq!(r.tasks.len(), 1);
        assert_eq!(r.neighbors[0], vec![1, 2, 3]);
    }

    #[test]
    fn negative_sigma_names_path() {
        let json = minimal_json("permissioned").replace("\"sigma\": 0.1", "\"sigma\": -0.5");
        let cfg = SimConfig::from_json(&json).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("search.sigma"), "{err}");
    }

    #[test]
    fn zero_steps_rejected() {
        let json = minimal_json("permissioned").replace("\"z_steps\": 3", "\"z_steps\": 0");
        let err = SimConfig::from_json(&json).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("search.z_steps"));
    }

    #[test]
    fn missing_master_seed_rejected() {
        let json = minimal_json("permissioned").replace("\"master_seed\": 1,", "");
        let err = SimConfig::from_json(&json).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("master_seed"));
    }

    #[test]
    fn b_target_forms() {
        assert_eq!(parse_b_target("2^-10"), Some(Score256::from_hit_exponent(10)));
        assert_eq!(parse_b_target("2^-256"), Some(Score256::ONE));
        assert!(parse_b_target("2^-0").is_none());
        assert!(parse_b_target("2^-257").is_none());
        let hex = Score256::pow2(200).to_hex();
        assert_eq!(parse_b_target(&hex), Some(Score256::pow2(200)));
        assert!(parse_b_target("xyz").is_none());
    }

    #[test]
    fn byzantine_bounds_checked() {
        let json = minimal_json("permissioned").replace(
            "\"workers\": {\"count\": 4}",
            "\"workers\": {\"count\": 4, \"byzantine\": [{\"worker\": 9, \"kind\": \"crash\"}]}",
        );
        let err = SimConfig::from_json(&json).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("workers.byzantine[0].worker"));
    }

    #[test]
    fn k_regular_topology() {
        let json = minimal_json("permissionless")
            .replace(
                "\"search\":",
                "\"gossip\": {\"topology\": {\"k_regular\": {\"k\": 2}}}, \"search\":",
            );
        let r = SimConfig::from_json(&json).unwrap().resolve().unwrap();
        assert_eq!(r.neighbors[0], vec![1, 3]);
        assert_eq!(r.neighbors[2], vec![1, 3]);
    }

    #[test]
    fn unknown_fields_rejected() {
        let json = minimal_json("permissioned").replace("\"master_seed\"", "\"bogus\": 3, \"master_seed\"");
        assert!(SimConfig::from_json(&json).is_err());
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = SimConfig::from_json(&minimal_json("permissionless")).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back = SimConfig::from_json(&json).unwrap();
        assert_eq!(cfg, back);
    }
}
