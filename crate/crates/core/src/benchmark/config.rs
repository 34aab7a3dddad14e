use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::OBSERVATION_RADIUS;
use crate::hybrid_policy::{HybridConfig, LoopRule, DEFAULT_EPSILON, DEFAULT_SWITCH_THRESHOLD};

/// What teammates know about the obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoRegime {
    /// Every belief starts as the ground truth.
    Full,
    /// Observation deltas are broadcast to teammates.
    Shared,
    /// Agents only learn from their own observations.
    Local,
}

impl InfoRegime {
    pub const ALL: [InfoRegime; 3] = [InfoRegime::Full, InfoRegime::Shared, InfoRegime::Local];

    pub fn as_str(self) -> &'static str {
        match self {
            InfoRegime::Full => "full",
            InfoRegime::Shared => "shared",
            InfoRegime::Local => "local",
        }
    }
}

impl fmt::Display for InfoRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InfoRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(InfoRegime::Full),
            "shared" => Ok(InfoRegime::Shared),
            "local" => Ok(InfoRegime::Local),
            other => Err(Error::Config(format!(
                "unknown regime {other:?} (expected full, shared or local)"
            ))),
        }
    }
}

/// Step cap by map size: 256 up to 20x20, 320 up to 40x40, 512 beyond.
pub fn default_max_steps(width: u32, height: u32) -> u32 {
    match width.max(height) {
        0..=20 => 256,
        21..=40 => 320,
        _ => 512,
    }
}

/// One experiment cell. Also the schema of the key-value config files
/// (TOML syntax, every key optional):
///
/// ```toml
/// width = 40
/// height = 40
/// density = 0.3
/// agents = 32
/// max_steps = 320        # defaults from the map size
/// instances = 100
/// seed = 0               # instance seeds are seed, seed+1, ...
/// regime = "shared"      # full | shared | local
/// loop_detection = true
/// loop_rule = "stagnation-or-oscillation"   # or "oscillation"
/// switch_threshold = 4
/// latency = 0
/// drop_rate = 0.0
/// broadcast_period = 1
/// epsilon = 0.7
/// radius = 4
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub width: u32,
    pub height: u32,
    pub density: f64,
    pub agents: usize,
    pub max_steps: Option<u32>,
    pub instances: usize,
    pub seed: u64,
    /// Explicit instance seeds; overrides `seed`/`instances` when set.
    pub seeds: Option<Vec<u64>>,
    pub regime: InfoRegime,
    pub loop_detection: bool,
    pub loop_rule: LoopRule,
    pub switch_threshold: usize,
    pub latency: u32,
    pub drop_rate: f64,
    pub broadcast_period: u32,
    pub epsilon: f64,
    pub radius: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            width: 40,
            height: 40,
            density: 0.3,
            agents: 8,
            max_steps: None,
            instances: 100,
            seed: 0,
            seeds: None,
            regime: InfoRegime::Shared,
            loop_detection: true,
            loop_rule: LoopRule::default(),
            switch_threshold: DEFAULT_SWITCH_THRESHOLD,
            latency: 0,
            drop_rate: 0.0,
            broadcast_period: 1,
            epsilon: DEFAULT_EPSILON,
            radius: OBSERVATION_RADIUS,
        }
    }
}

/// Named configurations with fixed seed lists, plus the agent counts their
/// sweeps cover.
pub const PRESETS: &[(&str, &str)] = &[
    ("dense-20", "20x20, 30% obstacles, 4-64 agents"),
    ("zero-40", "40x40, no obstacles, 8-128 agents"),
    ("sparse-40", "40x40, 15% obstacles, 8-128 agents"),
    ("dense-40", "40x40, 30% obstacles, 8-128 agents"),
    (
        "ablation-map-80",
        "80x80, 30% obstacles, 8-128 agents, information-regime ablation",
    ),
    (
        "ablation-loop-40",
        "40x40, 30% obstacles, 8-128 agents, loop-detection ablation",
    ),
    ("perf-64", "64x64, 30% obstacles, 64 agents"),
];

impl ScenarioConfig {
    pub fn square(size: u32, density: f64, agents: usize) -> Self {
        ScenarioConfig {
            width: size,
            height: size,
            density,
            agents,
            ..ScenarioConfig::default()
        }
    }

    pub fn preset(name: &str) -> Result<(Self, Vec<usize>)> {
        let sweep_40 = vec![8, 16, 32, 64, 128];
        Ok(match name {
            "dense-20" => (Self::square(20, 0.3, 8), vec![4, 8, 16, 32, 64]),
            "zero-40" => (Self::square(40, 0.0, 8), sweep_40),
            "sparse-40" => (Self::square(40, 0.15, 8), sweep_40),
            "dense-40" => (Self::square(40, 0.3, 8), sweep_40),
            "ablation-map-80" => (Self::square(80, 0.3, 128), sweep_40),
            "ablation-loop-40" => (Self::square(40, 0.3, 32), sweep_40),
            "perf-64" => (Self::square(64, 0.3, 64), vec![64]),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; known: {}",
                    PRESETS.iter().map(|p| p.0).collect::<Vec<_>>().join(", ")
                )))
            }
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        ScenarioConfig::default().overlay_toml_str(text)
    }

    /// Replaces only the keys present in `text`, keeping the rest of `self`.
    pub fn overlay_toml_str(&self, text: &str) -> Result<Self> {
        let config_err = |e: &dyn fmt::Display| Error::Config(e.to_string());
        let overlay: toml::Table = toml::from_str(text).map_err(|e| config_err(&e))?;
        let mut table = toml::Table::try_from(self).map_err(|e| config_err(&e))?;
        table.extend(overlay);
        let cfg: ScenarioConfig = table.try_into().map_err(|e| config_err(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn max_steps(&self) -> u32 {
        self.max_steps
            .unwrap_or_else(|| default_max_steps(self.width, self.height))
    }

    pub fn instance_seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.instances as u64).map(|i| self.seed + i).collect(),
        }
    }

    pub fn hybrid(&self) -> HybridConfig {
        HybridConfig {
            switch_threshold: self.switch_threshold,
            loop_detection: self.loop_detection,
            loop_rule: self.loop_rule,
        }
    }

    pub fn with_agents(&self, agents: usize) -> Self {
        ScenarioConfig {
            agents,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!(
                "map must be at least 1x1, got {}x{}",
                self.width, self.height
            ));
        }
        if !(0.0..1.0).contains(&self.density) {
            return bad(format!("density must lie in [0, 1), got {}", self.density));
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be at least 1".into());
        }
        if self
            .seeds
            .as_ref()
            .map_or(self.instances == 0, |s| s.is_empty())
        {
            return bad("at least one instance is required".into());
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return bad(format!(
                "drop_rate must lie in [0, 1], got {}",
                self.drop_rate
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if self.broadcast_period == 0 {
            return bad("broadcast_period must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_caps_by_size() {
        assert_eq!(ScenarioConfig::square(20, 0.3, 8).max_steps(), 256);
        assert_eq!(ScenarioConfig::square(40, 0.3, 8).max_steps(), 320);
        assert_eq!(ScenarioConfig::square(80, 0.3, 8).max_steps(), 512);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = ScenarioConfig {
            regime: InfoRegime::Local,
            latency: 3,
            seeds: Some(vec![4, 9]),
            ..ScenarioConfig::default()
        };
        assert_eq!(
            ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap(),
            cfg
        );

        let partial = ScenarioConfig::from_toml_str("agents = 16\nregime = \"full\"\n").unwrap();
        assert_eq!(partial.agents, 16);
        assert_eq!(partial.regime, InfoRegime::Full);
        assert_eq!(partial.width, 40);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ScenarioConfig::from_toml_str("density = 1.0").is_err());
        assert!(ScenarioConfig::from_toml_str("max_steps = 0").is_err());
        assert!(ScenarioConfig::from_toml_str("instances = 0").is_err());
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn presets_resolve() {
        for (name, _) in PRESETS {
            let (cfg, sweep) = ScenarioConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            assert!(!sweep.is_empty());
        }
        assert!(ScenarioConfig::preset("nope").is_err());
    }
}
