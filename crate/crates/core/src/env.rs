//! A full episode as a single-step environment: one action fixes the whole
//! intervention schedule and the reward is computed from the finished trace.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ddpg::Environment;
use crate::economy::{below_poverty_count, economy_day_step, EconomyConfig};
use crate::epidemic::{exposure_step, progression_step, Compartment, DiseaseParams, HealthState};
use crate::interventions::{
    decode_action, vaccination_day_step, InterventionSchedule, VaccinationPolicyConfig, ACTION_DIM,
};
use crate::world::{apply_movement, synthesize_population, WorldConfig, WorldState, TICKS_PER_DAY};
use crate::{Error, Result};

/// Everything needed to run one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub world: WorldConfig,
    pub disease: DiseaseParams,
    pub economy: EconomyConfig,
    pub vaccination: VaccinationPolicyConfig,
    /// Fraction of agents seeded as Exposed on day 0.
    pub initial_infection_fraction: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            disease: DiseaseParams::default(),
            economy: EconomyConfig::default(),
            vaccination: VaccinationPolicyConfig::default(),
            initial_infection_fraction: 0.15,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.disease.validate()?;
        self.economy.validate()?;
        self.vaccination.validate()?;
        if !(0.0..=1.0).contains(&self.initial_infection_fraction) {
            return Err(Error::config("initial_infection_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn initial_infections(&self) -> usize {
        (self.initial_infection_fraction * self.world.population_size as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: u32,
    /// Indexed by `Compartment::index`.
    pub counts: [usize; Compartment::COUNT],
    pub below_poverty_line: usize,
    pub doses_given: usize,
}

impl DayRecord {
    pub fn count(&self, c: Compartment) -> usize {
        self.counts[c.index()]
    }

    pub fn ever_infected(&self) -> usize {
        self.counts.iter().sum::<usize>() - self.count(Compartment::Susceptible)
    }

    pub fn currently_infected(&self) -> usize {
        Compartment::ALL
            .iter()
            .filter(|c| c.is_timed())
            .map(|&c| self.count(c))
            .sum()
    }
}

/// Daily series for days `0..=episode_days`; day 0 is the seeded initial state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub population: usize,
    pub days: Vec<DayRecord>,
}

impl EpisodeTrace {
    pub fn last(&self) -> &DayRecord {
        self.days.last().expect("trace has day 0")
    }

    pub fn series(&self, f: impl Fn(&DayRecord) -> usize) -> Vec<f64> {
        self.days.iter().map(|d| f(d) as f64).collect()
    }

    pub fn total_doses(&self) -> usize {
        self.days.iter().map(|d| d.doses_given).sum()
    }

    pub fn peak_below_poverty(&self) -> usize {
        self.days.iter().map(|d| d.below_poverty_line).max().unwrap_or(0)
    }

    pub fn conserves_population(&self) -> bool {
        self.days
            .iter()
            .all(|d| d.counts.iter().sum::<usize>() == self.population)
    }
}

/// A world being stepped one day at a time under a fixed schedule.
pub struct Simulation<'a> {
    config: &'a SimulationConfig,
    schedule: InterventionSchedule,
    world: WorldState,
    trace: EpisodeTrace,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a SimulationConfig, schedule: InterventionSchedule, seed: u64) -> Result<Self> {
        config.validate()?;
        schedule.validate(config.world.episode_days)?;
        let world_cfg = WorldConfig {
            seed,
            ..config.world.clone()
        };
        let mut world = synthesize_population(&world_cfg, &config.economy)?;
        let n = world.population();
        let seeded = index::sample(&mut world.rng.population, n, config.initial_infections().min(n));
        for id in seeded.into_vec() {
            let ticks = config
                .disease
                .sample_duration_ticks(Compartment::Exposed, &mut world.rng.disease);
            world.agents[id].health = HealthState::entering(Compartment::Exposed, ticks);
        }
        let mut sim = Self {
            config,
            schedule,
            world,
            trace: EpisodeTrace {
                population: n,
                days: Vec::with_capacity(config.world.episode_days as usize + 1),
            },
        };
        sim.record(0);
        Ok(sim)
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn trace(&self) -> &EpisodeTrace {
        &self.trace
    }

    pub fn day(&self) -> u32 {
        self.world.day()
    }

    pub fn is_finished(&self) -> bool {
        self.day() >= self.config.world.episode_days
    }

    fn record(&mut self, doses_given: usize) {
        self.trace.days.push(DayRecord {
            day: self.world.day(),
            counts: self.world.compartment_counts(),
            below_poverty_line: below_poverty_count(&self.world, &self.config.economy),
            doses_given,
        });
    }

    /// Two ticks of movement, exposure and progression, then the day's
    /// economy and vaccination steps.
    pub fn step_day(&mut self) {
        let day = self.world.day();
        let lockdown = self.schedule.lockdown_active(day);
        for _ in 0..TICKS_PER_DAY {
            apply_movement(&mut self.world, lockdown);
            exposure_step(&mut self.world, &self.config.disease);
            progression_step(&mut self.world, &self.config.disease);
            self.world.tick += 1;
        }
        economy_day_step(&mut self.world, &self.config.economy, lockdown);
        let doses = vaccination_day_step(&mut self.world, &self.schedule, &self.config.vaccination, day);
        self.record(doses);
    }

    pub fn run_to_end(&mut self) {
        while !self.is_finished() {
            self.step_day();
        }
    }

    pub fn into_trace(self) -> EpisodeTrace {
        self.trace
    }
}

pub fn run_episode(config: &SimulationConfig, schedule: &InterventionSchedule, seed: u64) -> Result<EpisodeTrace> {
    let mut sim = Simulation::new(config, *schedule, seed)?;
    sim.run_to_end();
    Ok(sim.into_trace())
}

fn max_plus_mean(series: impl Iterator<Item = f64>) -> f64 {
    let (mut max, mut sum, mut n) = (0.0f64, 0.0, 0usize);
    for x in series {
        max = if n == 0 { x } else { max.max(x) };
        sum += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        max + sum / n as f64
    }
}

/// `-(max + mean)` of the daily InfectedMild + Hospitalized series.
pub fn health_reward(trace: &EpisodeTrace) -> f64 {
    -max_plus_mean(trace.days.iter().map(|d| {
        (d.count(Compartment::InfectedMild) + d.count(Compartment::Hospitalized)) as f64
    }))
}

/// `-(max + mean)` of the daily below-poverty-line series.
pub fn economy_reward(trace: &EpisodeTrace) -> f64 {
    -max_plus_mean(trace.days.iter().map(|d| d.below_poverty_line as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub kappa: f64,
}

impl RewardWeights {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::config(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        Ok(Self { kappa })
    }
}

pub fn total_reward(health: f64, economy: f64, weights: RewardWeights) -> f64 {
    health + weights.kappa * economy
}

pub fn trace_reward(trace: &EpisodeTrace, weights: RewardWeights) -> f64 {
    total_reward(health_reward(trace), economy_reward(trace), weights)
}

/// Mean total reward over `n` episodes seeded `seed_base..seed_base + n`.
/// Runs execute in parallel; the sum is taken in seed order.
pub fn replicate_reward(
    config: &SimulationConfig,
    schedule: &InterventionSchedule,
    weights: RewardWeights,
    n: usize,
    seed_base: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::config("replicate count must be at least 1"));
    }
    let rewards = (0..n as u64)
        .into_par_iter()
        .map(|i| run_episode(config, schedule, seed_base + i).map(|t| trace_reward(&t, weights)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(rewards.iter().sum::<f64>() / n as f64)
}

pub const OBSERVATION_DIM: usize = 6;

/// Normalized experiment description fed to the actor; constant within an
/// experiment.
pub fn observation(config: &SimulationConfig, weights: RewardWeights) -> [f64; OBSERVATION_DIM] {
    let pop = config.world.population_size as f64;
    let [v1, v2] = config.vaccination.specs;
    [
        config.initial_infection_fraction,
        v1.effectiveness,
        (v1.daily_doses as f64 / pop).min(1.0),
        v2.effectiveness,
        (v2.daily_doses as f64 / pop).min(1.0),
        (weights.kappa / 5.0).min(1.0),
    ]
}

#[derive(Debug, Clone)]
pub struct EpidemicEnv {
    pub config: SimulationConfig,
    pub weights: RewardWeights,
}

impl EpidemicEnv {
    pub fn new(config: SimulationConfig, weights: RewardWeights) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, weights })
    }

    pub fn schedule_for(&self, action: &[f64]) -> Result<InterventionSchedule> {
        let raw: &[f64; ACTION_DIM] = action.try_into().map_err(|_| Error::WidthMismatch {
            expected: ACTION_DIM,
            actual: action.len(),
        })?;
        Ok(decode_action(raw, self.config.world.episode_days))
    }
}

impl Environment for EpidemicEnv {
    fn observation(&self) -> Vec<f64> {
        observation(&self.config, self.weights).to_vec()
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn reward(&self, action: &[f64], replicates: usize, seed_base: u64) -> Result<f64> {
        let schedule = self.schedule_for(action)?;
        replicate_reward(&self.config, &schedule, self.weights, replicates, seed_base)
    }
}
