//! The TOML configuration file: service settings and the simulation section.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use otterlink_core::{Mode, Timestamp, TzOffset};
use otterlink_service::ServiceConfig;

use crate::agent::{AgentPolicy, PolicyError};
use crate::plan::{self, PlanError, PlanSegment, ProfileAnchors};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub service: ServiceConfig,
    pub simulation: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub days: u32,
    pub seed: u64,
    pub mode: Mode,
    /// UTC instant the simulation starts.
    pub start: Timestamp,
    /// Standard deviation of heart-rate noise, in bpm.
    pub noise_sigma: f64,
    /// Chance each notification is lost before reaching the agent.
    pub drop_probability: f64,
    /// Agents act between 1 and this many minutes after a prompt.
    pub max_response_mins: i64,
    pub day_plan: Vec<PlanSegment>,
    pub agents: Vec<AgentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub name: String,
    pub tz_offset_mins: i32,
    pub profile: ProfileAnchors,
    #[serde(default)]
    pub policy: AgentPolicy,
}

impl AgentConfig {
    pub fn tz(&self) -> TzOffset {
        TzOffset(self.tz_offset_mins)
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            days: 7,
            seed: 1,
            mode: Mode::SensingOff,
            // 2024-03-04T00:00:00Z
            start: Timestamp(1_709_510_400),
            noise_sigma: 3.0,
            drop_probability: 0.0,
            max_response_mins: 20,
            day_plan: plan::default_plan(),
            agents: vec![
                AgentConfig {
                    name: "alex".into(),
                    tz_offset_mins: -300,
                    profile: ProfileAnchors::default(),
                    policy: AgentPolicy::default(),
                },
                AgentConfig {
                    name: "sam".into(),
                    tz_offset_mins: -300,
                    profile: ProfileAnchors {
                        min_hr: 46.0,
                        resting_hr: 58.0,
                        walking_hr: 88.0,
                        max_hr: 188.0,
                    },
                    policy: AgentPolicy {
                        share_propensity: 0.4,
                        quick_react_probability: 0.55,
                        ..AgentPolicy::default()
                    },
                },
            ],
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("sensing: {0}")]
    Sensing(#[from] otterlink_core::sensing::ConfigError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("agent {name}: {source}")]
    Policy { name: String, source: PolicyError },
    #[error("agent {name}: {source}")]
    Profile {
        name: String,
        source: otterlink_core::model::SampleError,
    },
    #[error("{0}")]
    Invalid(String),
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.service.sensing.validate()?;
        let n = &self.service.notifier;
        if n.min_gap_mins < 0 || n.jitter_mins < 0 {
            return Err(ConfigError::Invalid(
                "notifier gap and jitter must be non-negative".into(),
            ));
        }
        if n.active_hours.start == n.active_hours.end {
            return Err(ConfigError::Invalid("active hours are empty".into()));
        }
        let sim = &self.simulation;
        plan::resolve(&sim.day_plan)?;
        if sim.agents.len() != 2 {
            return Err(ConfigError::Invalid(format!(
                "a couple needs 2 agents, got {}",
                sim.agents.len()
            )));
        }
        for a in &sim.agents {
            a.policy.validate().map_err(|source| ConfigError::Policy {
                name: a.name.clone(),
                source,
            })?;
            a.profile.for_day(0).map_err(|source| ConfigError::Profile {
                name: a.name.clone(),
                source,
            })?;
        }
        if !(sim.noise_sigma.is_finite() && sim.noise_sigma >= 0.0) {
            return Err(ConfigError::Invalid(format!(
                "noise_sigma {} must be >= 0",
                sim.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&sim.drop_probability) {
            return Err(ConfigError::Invalid(format!(
                "drop_probability {} is not a probability",
                sim.drop_probability
            )));
        }
        if sim.max_response_mins < 1 {
            return Err(ConfigError::Invalid("max_response_mins must be at least 1".into()));
        }
        Ok(())
    }
}
