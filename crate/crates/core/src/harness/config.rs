use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ddpg::DdpgHyperParams;
use crate::economy::EconomyConfig;
use crate::env::{RewardWeights, SimulationConfig};
use crate::epidemic::DiseaseParams;
use crate::interventions::{InterventionSchedule, VaccinationPolicyConfig, VaccineSpec, Window};
use crate::world::WorldConfig;
use crate::{Error, Result};

/// Vaccine availability in the experiment table is quoted per this many people.
pub const REFERENCE_POPULATION: usize = 100_000;

/// Population used by the harness unless a config or flag says otherwise.
pub const DEFAULT_POPULATION: usize = 10_000;

/// The single JSON document accepted by `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub disease: DiseaseParams,
    pub economy: EconomyConfig,
    /// Coverage cap, plus the vaccines used when no experiment is selected.
    pub vaccination: VaccinationPolicyConfig,
    /// Used when no experiment is selected.
    pub initial_infection_fraction: f64,
    /// Replacements for rows of the built-in experiment table, matched by id.
    pub experiments: Vec<ExperimentRow>,
    pub ddpg: DdpgHyperParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig {
                population_size: DEFAULT_POPULATION,
                ..WorldConfig::default()
            },
            disease: DiseaseParams::default(),
            economy: EconomyConfig::default(),
            vaccination: VaccinationPolicyConfig::default(),
            initial_infection_fraction: 0.15,
            experiments: Vec::new(),
            ddpg: DdpgHyperParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.plain_simulation().validate()?;
        self.ddpg.validate()?;
        for row in &self.experiments {
            if !(1..=4).contains(&row.id) {
                return Err(Error::UnknownExperiment(row.id));
            }
        }
        Ok(())
    }

    /// Simulation described by the file alone, without an experiment.
    pub fn plain_simulation(&self) -> SimulationConfig {
        SimulationConfig {
            world: self.world.clone(),
            disease: self.disease.clone(),
            economy: self.economy.clone(),
            vaccination: self.vaccination.clone(),
            initial_infection_fraction: self.initial_infection_fraction,
        }
    }

    pub fn experiment_row(&self, id: u32) -> Result<ExperimentRow> {
        if let Some(row) = self.experiments.iter().find(|r| r.id == id) {
            return Ok(row.clone());
        }
        ExperimentRow::table(id)
    }

    pub fn experiment(&self, id: u32, scenario: Scenario) -> Result<ExperimentConfig> {
        let row = self.experiment_row(id)?;
        Ok(ExperimentConfig {
            id,
            initial_infection_percent: row.initial_infection_percent,
            vaccines: row.vaccines,
            population: self.world.population_size,
            episode_days: self.world.episode_days,
            kappa: scenario.kappa(),
        })
    }
}

/// One column of the optimization experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRow {
    pub id: u32,
    pub initial_infection_percent: f64,
    /// Availability in doses per day per 100,000 people.
    pub vaccines: [VaccineSpec; 2],
}

impl ExperimentRow {
    pub fn table(id: u32) -> Result<Self> {
        let (infected, d1, d2) = match id {
            1 => (15.0, 450, 450),
            2 => (1.0, 450, 450),
            3 => (15.0, 100, 700),
            4 => (1.0, 100, 700),
            other => return Err(Error::UnknownExperiment(other)),
        };
        Ok(Self {
            id,
            initial_infection_percent: infected,
            vaccines: [
                VaccineSpec {
                    effectiveness: 0.8,
                    daily_doses: d1,
                },
                VaccineSpec {
                    effectiveness: 0.6,
                    daily_doses: d2,
                },
            ],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: u32,
    pub initial_infection_percent: f64,
    /// Availability per 100,000 people; scaled to `population` on resolution.
    pub vaccines: [VaccineSpec; 2],
    pub population: usize,
    pub episode_days: u32,
    pub kappa: f64,
}

impl ExperimentConfig {
    pub fn weights(&self) -> Result<RewardWeights> {
        RewardWeights::new(self.kappa)
    }

    /// Daily doses for this population, rounded to whole doses.
    pub fn scaled_vaccines(&self) -> [VaccineSpec; 2] {
        self.vaccines.map(|v| VaccineSpec {
            effectiveness: v.effectiveness,
            daily_doses: (v.daily_doses as f64 * self.population as f64 / REFERENCE_POPULATION as f64).round() as usize,
        })
    }

    pub fn simulation_config(&self, base: &RunConfig) -> SimulationConfig {
        SimulationConfig {
            world: WorldConfig {
                population_size: self.population,
                episode_days: self.episode_days,
                ..base.world.clone()
            },
            disease: base.disease.clone(),
            economy: base.economy.clone(),
            vaccination: VaccinationPolicyConfig {
                specs: self.scaled_vaccines(),
                coverage_cap: base.vaccination.coverage_cap,
            },
            initial_infection_fraction: self.initial_infection_percent / 100.0,
        }
    }
}

/// Reward mixing scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    HealthAndEconomy,
    Health,
    Economy,
}

impl Scenario {
    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            1 => Ok(Scenario::HealthAndEconomy),
            2 => Ok(Scenario::Health),
            3 => Ok(Scenario::Economy),
            other => Err(Error::UnknownScenario(other)),
        }
    }

    pub fn id(self) -> u32 {
        match self {
            Scenario::HealthAndEconomy => 1,
            Scenario::Health => 2,
            Scenario::Economy => 3,
        }
    }

    pub fn kappa(self) -> f64 {
        match self {
            Scenario::HealthAndEconomy => 1.0,
            Scenario::Health => 0.2,
            Scenario::Economy => 5.0,
        }
    }
}

/// The four fixed comparison schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineId {
    #[serde(rename = "NoL_NoV")]
    NoLockdownNoVaccination,
    #[serde(rename = "FullL_FullV")]
    FullLockdownFullVaccination,
    #[serde(rename = "NoL_FullV")]
    NoLockdownFullVaccination,
    #[serde(rename = "L30_FullV")]
    Lockdown30FullVaccination,
}

impl BaselineId {
    pub const ALL: [BaselineId; 4] = [
        BaselineId::NoLockdownNoVaccination,
        BaselineId::FullLockdownFullVaccination,
        BaselineId::NoLockdownFullVaccination,
        BaselineId::Lockdown30FullVaccination,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BaselineId::NoLockdownNoVaccination => "NoL_NoV",
            BaselineId::FullLockdownFullVaccination => "FullL_FullV",
            BaselineId::NoLockdownFullVaccination => "NoL_FullV",
            BaselineId::Lockdown30FullVaccination => "L30_FullV",
        }
    }

    /// "Through day 100" is the whole horizon `[0, horizon)`.
    pub fn schedule(self, horizon: u32) -> InterventionSchedule {
        let all = Window::new(0.0, f64::from(horizon));
        let first_30 = Window::new(0.0, 30f64.min(f64::from(horizon)));
        let (lockdown, vaccination) = match self {
            BaselineId::NoLockdownNoVaccination => (Window::EMPTY, Window::EMPTY),
            BaselineId::FullLockdownFullVaccination => (all, all),
            BaselineId::NoLockdownFullVaccination => (Window::EMPTY, all),
            BaselineId::Lockdown30FullVaccination => (first_30, all),
        };
        InterventionSchedule {
            lockdown,
            vaccination: [vaccination; 3],
        }
    }
}

impl fmt::Display for BaselineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BaselineId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineId::ALL
            .into_iter()
            .find(|b| b.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownBaseline(s.to_string()))
    }
}
