//! Lockdown and vaccination schedules.
//!
//! An action is eight numbers in `[-1, 1]`: (start, duration) pairs for the
//! lockdown and for the three vaccination strata 0-17, 18-59 and 60-99. Windows
//! are half-open day ranges `[start, end)`.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::epidemic::Compartment;
use crate::world::{Agent, WorldState};
use crate::{Error, Result};

pub const ACTION_DIM: usize = 8;

/// Multiplier on `gamma` (the asymptomatic branch) after vaccination.
pub const VACCINATED_ASYMPTOMATIC_BOOST: f64 = 1.8;

/// Infectious weight of a vaccinated source relative to an unvaccinated one.
pub const VACCINATED_SOURCE_WEIGHT: f64 = 0.8;

pub fn boosted_asymptomatic_prob(gamma: f64) -> f64 {
    (gamma * VACCINATED_ASYMPTOMATIC_BOOST).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaccineSpec {
    pub effectiveness: f64,
    pub daily_doses: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum VaccinationState {
    #[default]
    Unvaccinated,
    Vaccinated {
        /// 1 or 2.
        vaccine: u8,
        /// Multiplier on the agent's susceptibility, `1 - effectiveness`.
        susceptibility_factor: f64,
    },
}

impl VaccinationState {
    pub fn is_vaccinated(&self) -> bool {
        matches!(self, VaccinationState::Vaccinated { .. })
    }

    pub fn vaccine_index(&self) -> Option<u8> {
        match self {
            VaccinationState::Unvaccinated => None,
            VaccinationState::Vaccinated { vaccine, .. } => Some(*vaccine),
        }
    }

    pub fn susceptibility_factor(&self) -> f64 {
        match self {
            VaccinationState::Unvaccinated => 1.0,
            VaccinationState::Vaccinated {
                susceptibility_factor,
                ..
            } => *susceptibility_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaccinationPolicyConfig {
    pub specs: [VaccineSpec; 2],
    /// Maximum fraction of the population that may ever be vaccinated.
    pub coverage_cap: f64,
}

impl Default for VaccinationPolicyConfig {
    fn default() -> Self {
        Self {
            specs: [
                VaccineSpec {
                    effectiveness: 0.8,
                    daily_doses: 450,
                },
                VaccineSpec {
                    effectiveness: 0.6,
                    daily_doses: 450,
                },
            ],
            coverage_cap: 0.90,
        }
    }
}

impl VaccinationPolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.coverage_cap) {
            return Err(Error::config("coverage_cap must lie in [0, 1]"));
        }
        for (i, spec) in self.specs.iter().enumerate() {
            if !(0.0..=1.0).contains(&spec.effectiveness) {
                return Err(Error::config(format!("vaccine {} effectiveness must lie in [0, 1]", i + 1)));
            }
        }
        Ok(())
    }

    pub fn cap_count(&self, population: usize) -> usize {
        (self.coverage_cap * population as f64).floor() as usize
    }
}

/// Half-open day interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub const EMPTY: Window = Window { start: 0.0, end: 0.0 };

    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, day: u32) -> bool {
        let d = f64::from(day);
        self.start <= d && d < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Number of integer days the window covers.
    pub fn active_days(&self, horizon: u32) -> u32 {
        (0..horizon).filter(|&d| self.contains(d)).count() as u32
    }

    fn first_day(&self) -> u32 {
        self.start.max(0.0).ceil() as u32
    }

    fn end_day(&self) -> u32 {
        self.end.max(0.0).ceil() as u32
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Windows that hold no integer day print as "none" too.
        if self.is_empty() || self.first_day() >= self.end_day() {
            write!(f, "none")
        } else {
            write!(f, "days {}\u{2013}{}", self.first_day(), self.end_day())
        }
    }
}

/// Vaccination strata by age.
pub const STRATA: [(u8, u8); 3] = [(0, 17), (18, 59), (60, 99)];

pub fn stratum_of(age: u8) -> usize {
    STRATA
        .iter()
        .position(|&(lo, hi)| (lo..=hi).contains(&age))
        .unwrap_or(STRATA.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InterventionSchedule {
    pub lockdown: Window,
    pub vaccination: [Window; 3],
}

impl InterventionSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn lockdown_active(&self, day: u32) -> bool {
        self.lockdown.contains(day)
    }

    pub fn validate(&self, horizon: u32) -> Result<()> {
        let h = f64::from(horizon);
        for w in std::iter::once(&self.lockdown).chain(&self.vaccination) {
            if !(0.0 <= w.start && w.start <= w.end && w.end <= h) {
                return Err(Error::config(format!(
                    "window [{}, {}) must satisfy 0 <= start <= end <= {horizon}",
                    w.start, w.end
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for InterventionSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lockdown: {}", self.lockdown)?;
        for (w, (lo, hi)) in self.vaccination.iter().zip(STRATA) {
            write!(f, "; vax {lo}\u{2013}{hi}: {w}")?;
        }
        Ok(())
    }
}

pub fn lockdown_active(schedule: &InterventionSchedule, day: u32) -> bool {
    schedule.lockdown_active(day)
}

fn unit(raw: f64) -> f64 {
    if raw.is_nan() {
        0.0
    } else {
        (raw.clamp(-1.0, 1.0) + 1.0) / 2.0
    }
}

/// Maps raw actions to windows over `horizon` days: each (start, duration)
/// pair is rescaled from `[-1, 1]` to `[0, horizon]` and the end is capped at
/// the horizon. NaN components read as -1.
pub fn decode_action(raw: &[f64; ACTION_DIM], horizon: u32) -> InterventionSchedule {
    let h = f64::from(horizon);
    let window = |pair: usize| {
        let start = unit(raw[2 * pair]) * h;
        let duration = unit(raw[2 * pair + 1]) * h;
        Window::new(start, (start + duration).min(h))
    };
    InterventionSchedule {
        lockdown: window(0),
        vaccination: [window(1), window(2), window(3)],
    }
}

/// Marks `agent` vaccinated with vaccine `index` (1 or 2).
pub fn apply_vaccine_effects(agent: &mut Agent, index: u8, spec: &VaccineSpec) -> Result<()> {
    if agent.vaccination.is_vaccinated() {
        return Err(Error::AlreadyVaccinated(agent.id));
    }
    agent.vaccination = VaccinationState::Vaccinated {
        vaccine: index,
        susceptibility_factor: 1.0 - spec.effectiveness,
    };
    Ok(())
}

/// Dispenses one day's doses: eligible agents are shuffled, vaccine 1 is
/// exhausted first, and the global coverage cap is never exceeded.
pub fn vaccination_day_step(
    world: &mut WorldState,
    schedule: &InterventionSchedule,
    policy: &VaccinationPolicyConfig,
    day: u32,
) -> usize {
    let active = schedule.vaccination.map(|w| w.contains(day));
    if !active.iter().any(|&a| a) {
        return 0;
    }
    let remaining_cap = policy
        .cap_count(world.population())
        .saturating_sub(world.vaccinated_count);
    let supply: usize = policy.specs.iter().map(|s| s.daily_doses).sum();
    if remaining_cap == 0 || supply == 0 {
        return 0;
    }
    let mut eligible: Vec<usize> = world
        .agents
        .iter()
        .filter(|a| {
            !a.vaccination.is_vaccinated()
                && !matches!(a.health.compartment, Compartment::Hospitalized | Compartment::Deceased)
                && active[stratum_of(a.age)]
        })
        .map(|a| a.id)
        .collect();
    let doses = eligible.len().min(remaining_cap).min(supply);
    let (chosen, _) = eligible.partial_shuffle(&mut world.rng.vaccination, doses);
    let first = policy.specs[0].daily_doses;
    for (k, &id) in chosen.iter().enumerate() {
        let (index, spec) = if k < first { (1, &policy.specs[0]) } else { (2, &policy.specs[1]) };
        apply_vaccine_effects(&mut world.agents[id], index, spec).expect("eligible agents are unvaccinated");
    }
    world.vaccinated_count += doses;
    doses
}
