//! Nine-compartment disease state machine.
//!
//! ```text
//! Susceptible -> Exposed -+-> Asymptomatic -----------------------------> Recovered
//!                         '-> PreSymptomatic -> InfectedMild -+---------> Recovered
//!                                                             '-> InfectedSevere -> Hospitalized -+-> Recovered
//!                                                                                                 '-> Deceased
//! ```
//!
//! The branch at `Exposed` uses the age band's asymptomatic probability, the
//! branch at `InfectedMild` its severe probability, and the hospital outcome
//! uses `sigma / severe_prob` so that the unconditional death probability of a
//! symptomatic case equals the band's `sigma`.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::interventions::VaccinationState;
use crate::rng::SimRng;
use crate::world::{Agent, WorldState, TICKS_PER_DAY};
use crate::{Error, Result};

/// Length of one tick in days.
pub const TICK_DAYS: f64 = 1.0 / TICKS_PER_DAY as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compartment {
    Susceptible,
    Exposed,
    Asymptomatic,
    PreSymptomatic,
    InfectedMild,
    InfectedSevere,
    Hospitalized,
    Recovered,
    Deceased,
}

impl Compartment {
    pub const COUNT: usize = 9;

    pub const ALL: [Compartment; Self::COUNT] = [
        Compartment::Susceptible,
        Compartment::Exposed,
        Compartment::Asymptomatic,
        Compartment::PreSymptomatic,
        Compartment::InfectedMild,
        Compartment::InfectedSevere,
        Compartment::Hospitalized,
        Compartment::Recovered,
        Compartment::Deceased,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Stages with a sampled residence time.
    pub fn is_timed(self) -> bool {
        matches!(
            self,
            Compartment::Exposed
                | Compartment::Asymptomatic
                | Compartment::PreSymptomatic
                | Compartment::InfectedMild
                | Compartment::InfectedSevere
                | Compartment::Hospitalized
        )
    }

    /// Stages that transmit to co-located susceptibles. Hospitalized agents
    /// are isolated.
    pub fn is_infectious(self) -> bool {
        matches!(
            self,
            Compartment::Asymptomatic
                | Compartment::PreSymptomatic
                | Compartment::InfectedMild
                | Compartment::InfectedSevere
        )
    }

    pub fn is_symptomatic(self) -> bool {
        matches!(self, Compartment::InfectedMild | Compartment::InfectedSevere)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HealthState {
    pub compartment: Compartment,
    /// Ticks left in a timed stage; zero for S, R and D.
    pub ticks_remaining: u16,
}

impl HealthState {
    pub fn susceptible() -> Self {
        Self {
            compartment: Compartment::Susceptible,
            ticks_remaining: 0,
        }
    }

    pub fn deceased() -> Self {
        Self {
            compartment: Compartment::Deceased,
            ticks_remaining: 0,
        }
    }

    pub fn recovered() -> Self {
        Self {
            compartment: Compartment::Recovered,
            ticks_remaining: 0,
        }
    }

    pub fn entering(compartment: Compartment, ticks: u16) -> Self {
        Self {
            compartment,
            ticks_remaining: if compartment.is_timed() { ticks.max(1) } else { 0 },
        }
    }
}

/// One row of the age-stratified transition table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeBandRates {
    pub beta_multiplier: f64,
    /// Probability that an exposure turns symptomatic (`1 - gamma`).
    pub symptomatic_prob: f64,
    /// Probability that a mild case turns severe (`1 - delta`).
    pub severe_prob: f64,
    /// Unconditional death probability of a symptomatic case.
    pub sigma: f64,
}

impl AgeBandRates {
    /// `gamma`, boosted by 80% (capped at 1) for vaccinated agents.
    pub fn asymptomatic_prob(&self, vaccinated: bool) -> f64 {
        let gamma = 1.0 - self.symptomatic_prob;
        if vaccinated {
            crate::interventions::boosted_asymptomatic_prob(gamma)
        } else {
            gamma
        }
    }

    pub fn hospital_death_prob(&self) -> f64 {
        if self.severe_prob <= 0.0 {
            0.0
        } else {
            (self.sigma / self.severe_prob).min(1.0)
        }
    }
}

const fn band(beta_multiplier: f64, symptomatic_prob: f64, severe_prob: f64, sigma: f64) -> AgeBandRates {
    AgeBandRates {
        beta_multiplier,
        symptomatic_prob,
        severe_prob,
        sigma,
    }
}

/// Decade bands 0-9 through 90-99.
pub const AGE_BANDS: [AgeBandRates; 10] = [
    band(0.34, 0.5, 0.0005, 0.00002),
    band(0.67, 0.55, 0.00165, 0.00002),
    band(1.0, 0.6, 0.00720, 0.0001),
    band(1.0, 0.65, 0.02080, 0.00032),
    band(1.0, 0.7, 0.03430, 0.00098),
    band(1.0, 0.75, 0.07650, 0.00265),
    band(1.0, 0.8, 0.13280, 0.00766),
    band(1.24, 0.85, 0.20655, 0.02439),
    band(1.47, 0.9, 0.24570, 0.08292),
    band(1.47, 0.9, 0.24570, 0.16190),
];

/// Row of the default table for `age`.
pub fn age_band_params(age: u32) -> Result<AgeBandRates> {
    if age > 99 {
        return Err(Error::AgeOutOfRange(age));
    }
    Ok(AGE_BANDS[(age / 10) as usize])
}

/// Residence time of one stage, in days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageDuration {
    pub mean_days: f64,
    pub sd_days: f64,
}

impl StageDuration {
    pub const fn new(mean_days: f64, sd_days: f64) -> Self {
        Self { mean_days, sd_days }
    }

    /// Underlying normal `(mu, sigma)` of the log-normal whose mean and sd
    /// are `mean_days` and `sd_days`.
    pub fn lognormal_params(&self) -> (f64, f64) {
        let m2 = self.mean_days * self.mean_days;
        let s2 = self.sd_days * self.sd_days;
        let mu = (m2 / (m2 + s2).sqrt()).ln();
        let sigma = (1.0 + s2 / m2).ln().sqrt();
        (mu, sigma)
    }

    pub fn sample_days(&self, rng: &mut SimRng) -> f64 {
        if self.sd_days == 0.0 {
            return self.mean_days;
        }
        let (mu, sigma) = self.lognormal_params();
        LogNormal::new(mu, sigma)
            .expect("validated stage duration")
            .sample(rng)
    }

    /// Sampled duration converted to ticks, rounded, at least one tick.
    pub fn sample_ticks(&self, rng: &mut SimRng) -> u16 {
        let ticks = (self.sample_days(rng) * f64::from(TICKS_PER_DAY)).round();
        ticks.clamp(1.0, f64::from(u16::MAX)) as u16
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationTable {
    pub exposed: StageDuration,
    pub asymptomatic: StageDuration,
    pub presymptomatic: StageDuration,
    pub infected_mild: StageDuration,
    pub infected_severe: StageDuration,
    pub hospitalized: StageDuration,
}

impl Default for DurationTable {
    fn default() -> Self {
        Self {
            exposed: StageDuration::new(4.5, 1.5),
            asymptomatic: StageDuration::new(8.0, 2.0),
            presymptomatic: StageDuration::new(1.1, 0.9),
            infected_mild: StageDuration::new(8.0, 2.0),
            infected_severe: StageDuration::new(1.5, 2.0),
            hospitalized: StageDuration::new(18.1, 6.3),
        }
    }
}

impl DurationTable {
    pub fn get(&self, stage: Compartment) -> Option<&StageDuration> {
        match stage {
            Compartment::Exposed => Some(&self.exposed),
            Compartment::Asymptomatic => Some(&self.asymptomatic),
            Compartment::PreSymptomatic => Some(&self.presymptomatic),
            Compartment::InfectedMild => Some(&self.infected_mild),
            Compartment::InfectedSevere => Some(&self.infected_severe),
            Compartment::Hospitalized => Some(&self.hospitalized),
            _ => None,
        }
    }

    pub fn rows(&self) -> [(Compartment, StageDuration); 6] {
        [
            (Compartment::Exposed, self.exposed),
            (Compartment::Asymptomatic, self.asymptomatic),
            (Compartment::PreSymptomatic, self.presymptomatic),
            (Compartment::InfectedMild, self.infected_mild),
            (Compartment::InfectedSevere, self.infected_severe),
            (Compartment::Hospitalized, self.hospitalized),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiseaseParams {
    /// Base transmission rate per day, scaled per age band.
    pub beta_base: f64,
    pub age_table: Vec<AgeBandRates>,
    pub durations: DurationTable,
}

impl Default for DiseaseParams {
    fn default() -> Self {
        Self {
            beta_base: 0.5,
            age_table: AGE_BANDS.to_vec(),
            durations: DurationTable::default(),
        }
    }
}

impl DiseaseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_base >= 0.0 && self.beta_base.is_finite()) {
            return Err(Error::config("beta_base must be finite and non-negative"));
        }
        if self.age_table.len() != 10 {
            return Err(Error::config(format!(
                "age_table needs 10 decade bands, got {}",
                self.age_table.len()
            )));
        }
        for (i, row) in self.age_table.iter().enumerate() {
            let probs = [row.symptomatic_prob, row.severe_prob, row.sigma];
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || row.beta_multiplier < 0.0 {
                return Err(Error::config(format!("age band {i} has an out-of-range value")));
            }
        }
        for (stage, d) in self.durations.rows() {
            if !(d.mean_days > 0.0) || !(d.sd_days >= 0.0) {
                return Err(Error::config(format!(
                    "{stage:?} duration needs mean > 0 and sd >= 0"
                )));
            }
        }
        Ok(())
    }

    pub fn age_band(&self, age: u8) -> &AgeBandRates {
        &self.age_table[usize::from(age.min(99) / 10)]
    }

    /// Per-day infection rate of `agent` as a susceptible.
    pub fn agent_beta(&self, agent: &Agent) -> f64 {
        self.beta_base * self.age_band(agent.age).beta_multiplier * agent.vaccination.susceptibility_factor()
    }

    pub fn sample_duration_ticks(&self, stage: Compartment, rng: &mut SimRng) -> u16 {
        self.durations
            .get(stage)
            .map_or(0, |d| d.sample_ticks(rng))
    }
}

/// Contribution of one occupant to its location's infectious weight.
pub fn infectious_weight(agent: &Agent) -> f64 {
    if !agent.health.compartment.is_infectious() {
        return 0.0;
    }
    match agent.vaccination {
        VaccinationState::Unvaccinated => 1.0,
        VaccinationState::Vaccinated { .. } => crate::interventions::VACCINATED_SOURCE_WEIGHT,
    }
}

/// Per-tick infection probability of a susceptible with daily rate
/// `beta_agent` sharing a location of `occupants` people whose summed
/// infectious weight is `infectious_weight`.
pub fn infection_probability(beta_agent: f64, infectious_weight: f64, occupants: usize) -> f64 {
    if occupants == 0 || infectious_weight <= 0.0 {
        return 0.0;
    }
    let force = beta_agent * (infectious_weight / occupants as f64) * TICK_DAYS;
    1.0 - (-force).exp()
}

/// Exposes susceptibles in every occupied location. Weights are computed
/// before any location is updated within the tick, and newly exposed agents
/// are not infectious.
pub fn exposure_step(world: &mut WorldState, params: &DiseaseParams) -> usize {
    let WorldState {
        agents,
        locations,
        rng,
        ..
    } = world;
    let mut new_exposures = 0;
    for loc in locations.iter() {
        let occupants = loc.occupant_ids.len();
        if occupants == 0 {
            continue;
        }
        let weight: f64 = loc
            .occupant_ids
            .iter()
            .map(|&id| infectious_weight(&agents[id]))
            .sum();
        if weight <= 0.0 {
            continue;
        }
        for &id in &loc.occupant_ids {
            let agent = &mut agents[id];
            if agent.health.compartment != Compartment::Susceptible {
                continue;
            }
            let p = infection_probability(params.agent_beta(agent), weight, occupants);
            if rng.disease.random::<f64>() < p {
                let ticks = params.sample_duration_ticks(Compartment::Exposed, &mut rng.disease);
                agent.health = HealthState::entering(Compartment::Exposed, ticks);
                new_exposures += 1;
            }
        }
    }
    new_exposures
}

/// Compartment that follows `current` once its timer runs out.
pub fn next_compartment(current: Compartment, rates: &AgeBandRates, vaccinated: bool, rng: &mut SimRng) -> Compartment {
    match current {
        Compartment::Exposed => {
            if rng.random::<f64>() < rates.asymptomatic_prob(vaccinated) {
                Compartment::Asymptomatic
            } else {
                Compartment::PreSymptomatic
            }
        }
        Compartment::Asymptomatic => Compartment::Recovered,
        Compartment::PreSymptomatic => Compartment::InfectedMild,
        Compartment::InfectedMild => {
            if rng.random::<f64>() < rates.severe_prob {
                Compartment::InfectedSevere
            } else {
                Compartment::Recovered
            }
        }
        Compartment::InfectedSevere => Compartment::Hospitalized,
        Compartment::Hospitalized => {
            if rng.random::<f64>() < rates.hospital_death_prob() {
                Compartment::Deceased
            } else {
                Compartment::Recovered
            }
        }
        absorbing => absorbing,
    }
}

/// Advances every timed stage by one tick, transitioning agents whose timer
/// expires.
pub fn progression_step(world: &mut WorldState, params: &DiseaseParams) {
    let WorldState { agents, rng, .. } = world;
    for agent in agents.iter_mut() {
        let health = &mut agent.health;
        if !health.compartment.is_timed() {
            continue;
        }
        health.ticks_remaining = health.ticks_remaining.saturating_sub(1);
        if health.ticks_remaining > 0 {
            continue;
        }
        let rates = params.age_band(agent.age);
        let next = next_compartment(
            health.compartment,
            rates,
            agent.vaccination.is_vaccinated(),
            &mut rng.disease,
        );
        let ticks = params.sample_duration_ticks(next, &mut rng.disease);
        *health = HealthState::entering(next, ticks);
    }
}
