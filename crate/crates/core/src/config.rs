//! TOML run configuration: scenario, anticipation parameters, and horizon.
//!
//! ```toml
//! [scenario]
//! topology = "open"            # or "ring"
//! cars = 50
//! initial_spacing = 35.84      # or initial_positions = [x0, x1, ...]
//! # length = 2611.1            # ring only
//!
//! [scenario.leader_profile]    # open only
//! breakpoints = [[0, 10.0], [100, 2.0], [200, 10.0]]
//!
//! [anticipation]
//! m = 2
//! lambda = 1.5
//! discount_mode = "on-velocity"   # or "on-spacing"
//!
//! [run]
//! horizon = 1000
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    uniform_positions, AnticipationConfig, DiscountMode, Scenario, ScenarioError, SpeedProfile,
    Topology,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub anticipation: AnticipationSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSection {
    pub topology: TopologyKind,
    pub cars: usize,
    /// Ring circumference in meters (ring only).
    pub length: Option<f64>,
    /// Uniform initial spacing; mutually exclusive with `initial_positions`.
    pub initial_spacing: Option<f64>,
    /// Explicit strictly decreasing positions, front car first.
    pub initial_positions: Option<Vec<f64>>,
    /// Piecewise-constant leader speed `(start_step, meters_per_step)`
    /// breakpoints (open only).
    pub leader_profile: Option<ProfileSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Ring,
    Open,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSection {
    pub breakpoints: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AnticipationSection {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub discount_mode: DiscountMode,
}

fn default_m() -> usize {
    1
}

impl Default for AnticipationSection {
    fn default() -> Self {
        Self {
            m: 1,
            lambda: 0.0,
            discount_mode: DiscountMode::OnVelocity,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RunSection {
    pub horizon: usize,
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn anticipation_config(&self) -> Result<AnticipationConfig, ConfigError> {
        Ok(AnticipationConfig::new(
            self.anticipation.m,
            self.anticipation.lambda,
            self.anticipation.discount_mode,
        )?)
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let s = &self.scenario;
        if s.cars == 0 {
            return Err(ConfigError::Invalid("cars must be positive".into()));
        }
        let positions = match (&s.initial_positions, s.initial_spacing) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "give initial_positions or initial_spacing, not both".into(),
                ))
            }
            (Some(positions), None) => {
                if positions.len() != s.cars {
                    return Err(ConfigError::Invalid(format!(
                        "initial_positions has {} entries for {} cars",
                        positions.len(),
                        s.cars
                    )));
                }
                positions.clone()
            }
            (None, Some(spacing)) => uniform_positions(spacing, s.cars),
            (None, None) => match (s.topology, s.length) {
                // A ring without explicit spacing defaults to the uniform
                // configuration at the average spacing.
                (TopologyKind::Ring, Some(length)) => {
                    uniform_positions(length / s.cars as f64, s.cars)
                }
                _ => {
                    return Err(ConfigError::Invalid(
                        "give initial_positions or initial_spacing".into(),
                    ))
                }
            },
        };
        let topology = match s.topology {
            TopologyKind::Ring => {
                let length = s
                    .length
                    .ok_or_else(|| ConfigError::Invalid("ring scenario needs a length".into()))?;
                if s.leader_profile.is_some() {
                    return Err(ConfigError::Invalid(
                        "a ring has no exogenous leader profile".into(),
                    ));
                }
                Topology::Ring { length }
            }
            TopologyKind::Open => {
                let profile = s.leader_profile.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("open scenario needs a leader_profile".into())
                })?;
                Topology::Open {
                    leader: SpeedProfile::new(profile.breakpoints.clone())?,
                }
            }
        };
        Ok(Scenario::new(topology, positions)?)
    }

    pub fn horizon(&self) -> Result<usize, ConfigError> {
        if self.run.horizon == 0 {
            return Err(ConfigError::Invalid("horizon must be at least 1".into()));
        }
        Ok(self.run.horizon)
    }
}
