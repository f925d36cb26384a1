//! JSON configuration files.
//!
//! Every field is optional; omitted fields take the calibrated defaults.
//! Unknown keys are rejected and parse errors carry the offending key path.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IoError;
use crate::choice::{RiskAversionGrid, WeightGrid};
use crate::market::MarketModel;
use crate::risk::DispersionKind;
use crate::sim::{
    InitialState, InvestorTemplate, SimConfig, SimError, SweepParameter, ThetaMode,
    YearlyAggregation,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub market: MarketSection,
    pub investor: InvestorSection,
    pub grids: GridSection,
    pub risk: RiskSection,
    pub sim: SimSection,
    #[serde(skip_serializing_if = "SweepSection::is_empty")]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketSection {
    pub states: Vec<String>,
    pub transition: Vec<Vec<f64>>,
    pub risk_free: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Default for MarketSection {
    fn default() -> Self {
        let m = MarketModel::calibrated();
        Self {
            states: m.state_names,
            transition: m.transition,
            risk_free: m.risk_free_rate,
            means: m.risky_mean,
            stds: m.risky_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformTag {
    Uniform,
}

/// `"uniform"` or one risk aversion per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Mode(UniformTag),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvestorSection {
    pub theta: ThetaSpec,
    pub r: f64,
    pub kappa: f64,
}

impl Default for InvestorSection {
    fn default() -> Self {
        Self {
            theta: ThetaSpec::Mode(UniformTag::Uniform),
            r: 3.0,
            kappa: 0.0008,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub theta_min: f64,
    pub theta_max: f64,
    pub xi: f64,
    pub weight_step: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            theta_min: 2.2,
            theta_max: 8.3,
            xi: 0.1,
            weight_step: 0.0001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RiskKindName {
    #[default]
    Variance,
    Semideviation,
    QuantileDeviation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RiskSection {
    pub kind: RiskKindName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// `"uniform"` or a state index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialStateSpec {
    Mode(UniformTag),
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum YearlyName {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub months: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(rename = "C")]
    pub c: u32,
    pub initial_state: InitialStateSpec,
    pub yearly: YearlyName,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            months: 120,
            trials: 10_000,
            seed: 42,
            c: 5,
            initial_state: InitialStateSpec::Mode(UniformTag::Uniform),
            yearly: YearlyName::Sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl SweepSection {
    fn is_empty(&self) -> bool {
        self.parameter.is_none() && self.values.is_none()
    }
}

/// Sweep requested by a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// A validated config together with its optional sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub sim: SimConfig,
    pub sweep: Option<SweepSpec>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let file: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let inner = e.inner();
            IoError::Parse {
                key: e.path().to_string(),
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        de.end().map_err(|e| IoError::Parse {
            key: ".".into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Ok(file)
    }

    pub fn to_loaded(&self) -> Result<LoadedConfig, IoError> {
        let m = &self.market;
        let model = MarketModel::new(
            m.states.clone(),
            m.transition.clone(),
            m.risk_free,
            m.means.clone(),
            m.stds.clone(),
        )
        .map_err(|e| invalid("market", e))?;
        let g = &self.grids;
        let grid = RiskAversionGrid::new(g.theta_min, g.theta_max, g.xi).map_err(|e| invalid("grids", e))?;
        let weights = WeightGrid::new(g.weight_step).map_err(|e| invalid("grids.weight_step", e))?;
        let kind = match self.risk.kind {
            RiskKindName::Variance => DispersionKind::Variance,
            RiskKindName::Semideviation => DispersionKind::Semideviation {
                p: self.risk.p.ok_or_else(|| missing("risk.p"))?,
            },
            RiskKindName::QuantileDeviation => DispersionKind::QuantileDeviation {
                alpha: self.risk.alpha.ok_or_else(|| missing("risk.alpha"))?,
            },
        };
        kind.validate().map_err(|e| invalid("risk", e))?;
        let theta = match &self.investor.theta {
            ThetaSpec::Mode(UniformTag::Uniform) => ThetaMode::UniformGrid,
            ThetaSpec::Values(v) => ThetaMode::Fixed(v.clone()),
        };
        let s = &self.sim;
        let sim = SimConfig {
            model,
            grid,
            advisor_grid: None,
            weights,
            kind,
            investor: InvestorTemplate {
                theta,
                mistake_radius: self.investor.r,
                cost: self.investor.kappa,
            },
            budget: s.c,
            months: s.months,
            trials: s.trials,
            seed: s.seed,
            initial_state: match s.initial_state {
                InitialStateSpec::Mode(UniformTag::Uniform) => InitialState::Uniform,
                InitialStateSpec::Index(i) => InitialState::Fixed(i),
            },
            yearly: match s.yearly {
                YearlyName::Sum => YearlyAggregation::Sum,
                YearlyName::Mean => YearlyAggregation::Mean,
            },
        };
        sim.validate().map_err(|e| invalid("config", e))?;
        let sweep = match (&self.sweep.parameter, &self.sweep.values) {
            (None, None) => None,
            (None, Some(_)) => return Err(missing("sweep.parameter")),
            (Some(name), values) => {
                let parameter: SweepParameter = name.parse().map_err(|e: SimError| invalid("sweep.parameter", e))?;
                let values = values.clone().unwrap_or_else(|| parameter.default_values());
                if values.is_empty() {
                    return Err(IoError::Invalid("sweep.values: must not be empty".into()));
                }
                Some(SweepSpec { parameter, values })
            }
        };
        Ok(LoadedConfig { sim, sweep })
    }

    /// The file that loads back to `sim` (and `sweep`).
    pub fn from_sim(sim: &SimConfig, sweep: Option<&SweepSpec>) -> Self {
        let m = &sim.model;
        let (p, alpha, kind) = match sim.kind {
            DispersionKind::Variance => (None, None, RiskKindName::Variance),
            DispersionKind::Semideviation { p } => (Some(p), None, RiskKindName::Semideviation),
            DispersionKind::QuantileDeviation { alpha } => {
                (None, Some(alpha), RiskKindName::QuantileDeviation)
            }
        };
        Self {
            market: MarketSection {
                states: m.state_names.clone(),
                transition: m.transition.clone(),
                risk_free: m.risk_free_rate,
                means: m.risky_mean.clone(),
                stds: m.risky_std.clone(),
            },
            investor: InvestorSection {
                theta: match &sim.investor.theta {
                    ThetaMode::UniformGrid => ThetaSpec::Mode(UniformTag::Uniform),
                    ThetaMode::Fixed(v) => ThetaSpec::Values(v.clone()),
                },
                r: sim.investor.mistake_radius,
                kappa: sim.investor.cost,
            },
            grids: GridSection {
                theta_min: sim.grid.theta_min(),
                theta_max: sim.grid.theta_max(),
                xi: sim.grid.xi(),
                weight_step: sim.weights.step(),
            },
            risk: RiskSection { kind, p, alpha },
            sim: SimSection {
                months: sim.months,
                trials: sim.trials,
                seed: sim.seed,
                c: sim.budget,
                initial_state: match sim.initial_state {
                    InitialState::Uniform => InitialStateSpec::Mode(UniformTag::Uniform),
                    InitialState::Fixed(i) => InitialStateSpec::Index(i),
                },
                yearly: match sim.yearly {
                    YearlyAggregation::Sum => YearlyName::Sum,
                    YearlyAggregation::Mean => YearlyName::Mean,
                },
            },
            sweep: sweep
                .map(|s| SweepSection {
                    parameter: Some(s.parameter.name().into()),
                    values: Some(s.values.clone()),
                })
                .unwrap_or_default(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

fn invalid(section: &str, e: impl std::fmt::Display) -> IoError {
    IoError::Invalid(format!("{section}: {e}"))
}

fn missing(key: &str) -> IoError {
    IoError::Invalid(format!("{key} is required for this risk kind or sweep"))
}

pub fn parse_config(text: &str) -> Result<LoadedConfig, IoError> {
    ConfigFile::parse(text)?.to_loaded()
}

pub fn load_config_file(path: &Path) -> Result<LoadedConfig, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn load_config(path: &Path) -> Result<SimConfig, IoError> {
    load_config_file(path).map(|c| c.sim)
}

/// Canonical JSON for a config.
pub fn canonical_json(sim: &SimConfig, sweep: Option<&SweepSpec>) -> String {
    ConfigFile::from_sim(sim, sweep).to_json()
}

/// First 16 hex digits of the SHA-256 of the canonical JSON.
pub fn config_hash(sim: &SimConfig, sweep: Option<&SweepSpec>) -> String {
    let digest = Sha256::digest(canonical_json(sim, sweep).as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
