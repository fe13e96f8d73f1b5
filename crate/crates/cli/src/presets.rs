use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use rankrecover::evaluate::ExperimentConfig;
use rankrecover::simulate::{ParamDesignConfig, SimConfig};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    #[value(name = "paper-5cube")]
    Paper5Cube,
    #[value(name = "paper-7cube")]
    Paper7Cube,
    #[value(name = "fig1-5cube")]
    Fig1FiveCube,
    #[value(name = "fig1-7cube")]
    Fig1SevenCube,
    #[value(name = "fig2")]
    Fig2,
    #[value(name = "paramdesign")]
    ParamDesign,
}

/// What `simulate` generates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum SimulateConfig {
    Recovery(SimConfig),
    ParamDesign(ParamDesignConfig),
}

impl Preset {
    pub fn simulate(self) -> SimulateConfig {
        match self {
            Preset::Paper5Cube | Preset::Fig1FiveCube => {
                SimulateConfig::Recovery(ExperimentConfig::fig1([5, 5, 5]).sim)
            }
            Preset::Paper7Cube | Preset::Fig1SevenCube => {
                SimulateConfig::Recovery(ExperimentConfig::fig1([7, 7, 7]).sim)
            }
            Preset::Fig2 => SimulateConfig::Recovery(ExperimentConfig::fig2().sim),
            Preset::ParamDesign => SimulateConfig::ParamDesign(ParamDesignConfig::default()),
        }
    }

    pub fn benchmark(self) -> Result<ExperimentConfig, Failure> {
        match self {
            Preset::Paper5Cube | Preset::Fig1FiveCube => Ok(ExperimentConfig::fig1([5, 5, 5])),
            Preset::Paper7Cube | Preset::Fig1SevenCube => Ok(ExperimentConfig::fig1([7, 7, 7])),
            Preset::Fig2 => Ok(ExperimentConfig::fig2()),
            Preset::ParamDesign => Err(Failure::validation(
                "preset paramdesign has no benchmark; use it with simulate",
            )),
        }
    }
}
