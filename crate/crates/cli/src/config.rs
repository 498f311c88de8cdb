use std::path::PathBuf;

use clap::ValueEnum;
use qem_core::cost::Family;
use qem_core::noise::NoisePlacement;
use qem_core::{Circuit, Extrapolation, LambdaChoice, Mitigation, NoiseSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One experiment: a circuit, a device, a method and a sampling budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub circuit: CircuitConfig,
    /// Absent for a noiseless device.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub placement: PlacementChoice,
    pub method: MethodConfig,
    /// Trials per repetition.
    pub trials: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

fn default_repetitions() -> usize {
    1
}

fn default_bins() -> usize {
    50
}

/// A built-in family at a qubit count, or a circuit text file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nq: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PlacementChoice {
    #[default]
    SimulationSimple,
    UniversalSet,
    IonTrap,
}

impl PlacementChoice {
    pub fn build(self) -> NoisePlacement {
        match self {
            PlacementChoice::SimulationSimple => NoisePlacement::simulation_simple(),
            PlacementChoice::UniversalSet => NoisePlacement::universal_set(),
            PlacementChoice::IonTrap => NoisePlacement::ion_trap(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum DecompositionChoice {
    #[default]
    Inverse,
    Compensation,
}

impl DecompositionChoice {
    /// `lambda = None` optimises the weight of the noisy operation.
    pub fn mitigation(self, lambda: Option<f64>) -> Mitigation {
        match self {
            DecompositionChoice::Inverse => Mitigation::Inverse,
            DecompositionChoice::Compensation => Mitigation::Compensation {
                lambda: lambda.map_or(LambdaChoice::Optimize, LambdaChoice::Fixed),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModelChoice {
    #[default]
    Device,
    Gst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrapolationModel {
    Linear,
    Exponential,
}

impl From<ExtrapolationModel> for Extrapolation {
    fn from(m: ExtrapolationModel) -> Self {
        match m {
            ExtrapolationModel::Linear => Extrapolation::Linear,
            ExtrapolationModel::Exponential => Extrapolation::Exponential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    /// Braces make serde reject unknown fields here too.
    None {},
    QuasiProb {
        #[serde(default)]
        decomposition: DecompositionChoice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default)]
        model: ModelChoice,
        /// Shots per tomography expectation value; exact when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gst_shots: Option<u64>,
    },
    Extrapolation {
        model: ExtrapolationModel,
        r: f64,
    },
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 {
            return Err(CliError::Config("trials must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(CliError::Config("repetitions must be positive".into()));
        }
        if self.histogram_bins == 0 {
            return Err(CliError::Config("histogram_bins must be positive".into()));
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        match &self.method {
            MethodConfig::Extrapolation { r, .. } => {
                if !r.is_finite() || *r <= 1.0 {
                    return Err(CliError::Config(format!("boost factor r must exceed 1, got {r}")));
                }
                if self.trials < 2 {
                    return Err(CliError::Config("extrapolation needs at least two trials".into()));
                }
            }
            MethodConfig::QuasiProb { lambda: Some(l), .. } if !l.is_finite() => {
                return Err(CliError::Config(format!("lambda must be finite, got {l}")));
            }
            MethodConfig::QuasiProb { gst_shots: Some(0), .. } => {
                return Err(CliError::Config("gst_shots must be positive".into()));
            }
            _ => {}
        }
        match (&self.circuit.family, &self.circuit.nq, &self.circuit.file) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => Ok(()),
            _ => Err(CliError::Config(
                "circuit needs either `family` with `nq`, or `file`".into(),
            )),
        }
    }

    pub fn build_circuit(&self) -> Result<Circuit, CliError> {
        self.circuit.build()
    }
}

impl CircuitConfig {
    pub fn build(&self) -> Result<Circuit, CliError> {
        match (&self.family, self.nq, &self.file) {
            (Some(family), Some(nq), None) => Ok(family.build(nq)?),
            (None, None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
                Ok(Circuit::from_text(&text)?)
            }
            _ => Err(CliError::Config("circuit needs either `family` with `nq`, or `file`".into())),
        }
    }
}
