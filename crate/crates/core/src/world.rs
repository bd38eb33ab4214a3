//! Population synthesis, geography and per-tick movement.
//!
//! Location indices are laid out as houses first (so a house id is also its
//! location id), then offices, schools and hospitals.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::economy::{EconomyConfig, HouseLedger};
use crate::epidemic::{Compartment, HealthState};
use crate::interventions::VaccinationState;
use crate::rng::RngStreams;
use crate::{Error, Result};

pub const TICKS_PER_DAY: u32 = 2;

/// Agents strictly older than this are employed; everyone else is a student.
pub const EMPLOYMENT_AGE: u8 = 30;

pub const MAX_AGE: u8 = 99;

const PEOPLE_PER_HOSPITAL: usize = 25_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub population_size: usize,
    pub household_size: usize,
    pub office_capacity: usize,
    pub school_capacity: usize,
    /// `None` means one hospital per 25,000 people, rounded up.
    pub hospitals: Option<usize>,
    pub essential_worker_fraction: f64,
    pub violator_fraction: f64,
    pub episode_days: u32,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            population_size: 100_000,
            household_size: 4,
            office_capacity: 50,
            school_capacity: 200,
            hospitals: None,
            essential_worker_fraction: 0.20,
            violator_fraction: 0.10,
            episode_days: 100,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn hospital_count(&self) -> usize {
        self.hospitals
            .unwrap_or_else(|| self.population_size.div_ceil(PEOPLE_PER_HOSPITAL))
            .max(1)
    }

    pub fn total_ticks(&self) -> u32 {
        self.episode_days * TICKS_PER_DAY
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::config("population_size must be at least 1"));
        }
        if self.household_size == 0 {
            return Err(Error::config("household_size must be at least 1"));
        }
        if self.office_capacity == 0 || self.school_capacity == 0 {
            return Err(Error::config("office and school capacities must be at least 1"));
        }
        if self.hospitals == Some(0) {
            return Err(Error::config("hospitals must be at least 1"));
        }
        for (name, p) in [
            ("essential_worker_fraction", self.essential_worker_fraction),
            ("violator_fraction", self.violator_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.episode_days == 0 {
            return Err(Error::config("episode_days must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Employed,
    Student,
}

impl Role {
    pub fn for_age(age: u8) -> Self {
        if age > EMPLOYMENT_AGE {
            Role::Employed
        } else {
            Role::Student
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: usize,
    pub age: u8,
    pub role: Role,
    pub house_id: usize,
    /// Location index of the agent's office or school.
    pub workplace_id: usize,
    /// Location index of the hospital the agent is admitted to when hospitalized.
    pub hospital_id: usize,
    pub is_essential: bool,
    pub is_violator: bool,
    pub health: HealthState,
    pub vaccination: VaccinationState,
    /// Location occupied during the current tick; `None` once deceased.
    pub location: Option<usize>,
}

impl Agent {
    pub fn is_alive(&self) -> bool {
        self.health.compartment != Compartment::Deceased
    }

    /// Exempt from lockdown movement restrictions.
    pub fn ignores_lockdown(&self) -> bool {
        self.is_essential || self.is_violator
    }

    /// Where the agent spends `tick`. Even ticks are the home phase.
    pub fn scheduled_location(&self, tick: u32, lockdown_active: bool) -> Option<usize> {
        match self.health.compartment {
            Compartment::Deceased => None,
            Compartment::Hospitalized => Some(self.hospital_id),
            c if c.is_symptomatic() => Some(self.house_id),
            _ if tick.is_multiple_of(TICKS_PER_DAY) => Some(self.house_id),
            _ if lockdown_active && !self.ignores_lockdown() => Some(self.house_id),
            _ => Some(self.workplace_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct House {
    pub id: usize,
    pub member_ids: Vec<usize>,
    pub head_id: usize,
    pub ledger: HouseLedger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocationKind {
    House,
    Office,
    School,
    Hospital,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub id: usize,
    pub kind: LocationKind,
    pub occupant_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub config: WorldConfig,
    pub agents: Vec<Agent>,
    pub houses: Vec<House>,
    pub locations: Vec<Location>,
    pub tick: u32,
    pub rng: RngStreams,
    /// Agents that have received a dose so far.
    pub vaccinated_count: usize,
}

/// Builds agents, houses, workplaces and ledgers for `config`. All agents
/// start susceptible, unvaccinated and at home.
pub fn synthesize_population(config: &WorldConfig, economy: &EconomyConfig) -> Result<WorldState> {
    config.validate()?;
    economy.validate()?;
    let mut rng = RngStreams::new(config.seed);
    let n = config.population_size;

    let mut agents: Vec<Agent> = (0..n)
        .map(|id| {
            let age = rng.population.random_range(0..=MAX_AGE);
            Agent {
                id,
                age,
                role: Role::for_age(age),
                house_id: id / config.household_size,
                workplace_id: 0,
                hospital_id: 0,
                is_essential: false,
                is_violator: false,
                health: HealthState::susceptible(),
                vaccination: VaccinationState::Unvaccinated,
                location: None,
            }
        })
        .collect();

    for agent in &mut agents {
        agent.is_essential = agent.role == Role::Employed
            && rng.population.random_bool(config.essential_worker_fraction);
        agent.is_violator = rng.population.random_bool(config.violator_fraction);
    }

    let n_houses = n.div_ceil(config.household_size);
    let mut locations: Vec<Location> = (0..n_houses)
        .map(|id| Location {
            id,
            kind: LocationKind::House,
            occupant_ids: Vec::with_capacity(config.household_size),
        })
        .collect();

    let (mut employed, mut students): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&id| agents[id].role == Role::Employed);
    employed.shuffle(&mut rng.population);
    students.shuffle(&mut rng.population);
    for (kind, members, capacity) in [
        (LocationKind::Office, &employed, config.office_capacity),
        (LocationKind::School, &students, config.school_capacity),
    ] {
        for chunk in members.chunks(capacity) {
            let loc = locations.len();
            locations.push(Location {
                id: loc,
                kind,
                occupant_ids: Vec::new(),
            });
            for &id in chunk {
                agents[id].workplace_id = loc;
            }
        }
    }

    let first_hospital = locations.len();
    let n_hospitals = config.hospital_count();
    for _ in 0..n_hospitals {
        let id = locations.len();
        locations.push(Location {
            id,
            kind: LocationKind::Hospital,
            occupant_ids: Vec::new(),
        });
    }
    for agent in &mut agents {
        agent.hospital_id = first_hospital + agent.house_id % n_hospitals;
    }

    let houses = (0..n_houses)
        .map(|id| {
            let start = id * config.household_size;
            let member_ids: Vec<usize> = (start..(start + config.household_size).min(n)).collect();
            // Oldest member heads the house; ties go to the lowest id.
            let head_id = member_ids
                .iter()
                .copied()
                .max_by_key(|&m| (agents[m].age, std::cmp::Reverse(m)))
                .expect("houses are never empty");
            House {
                id,
                member_ids,
                head_id,
                ledger: HouseLedger::draw(economy, &mut rng.economy),
            }
        })
        .collect();

    let mut world = WorldState {
        config: config.clone(),
        agents,
        houses,
        locations,
        tick: 0,
        rng,
        vaccinated_count: 0,
    };
    world.place_everyone_home();
    Ok(world)
}

impl WorldState {
    pub fn population(&self) -> usize {
        self.agents.len()
    }

    pub fn day(&self) -> u32 {
        self.tick / TICKS_PER_DAY
    }

    pub fn live_population(&self) -> usize {
        self.agents.iter().filter(|a| a.is_alive()).count()
    }

    fn place_everyone_home(&mut self) {
        for loc in &mut self.locations {
            loc.occupant_ids.clear();
        }
        for agent in &mut self.agents {
            agent.location = Some(agent.house_id);
            self.locations[agent.house_id].occupant_ids.push(agent.id);
        }
    }

    /// Counts of agents per compartment, indexed by `Compartment::index`.
    pub fn compartment_counts(&self) -> [usize; Compartment::COUNT] {
        let mut counts = [0; Compartment::COUNT];
        for agent in &self.agents {
            counts[agent.health.compartment.index()] += 1;
        }
        counts
    }

    /// Every live agent sits in exactly one occupant list, matching its
    /// `location`; the deceased sit in none.
    pub fn partition_holds(&self) -> bool {
        let mut seen = vec![0u32; self.agents.len()];
        for loc in &self.locations {
            for &id in &loc.occupant_ids {
                seen[id] += 1;
                if self.agents[id].location != Some(loc.id) {
                    return false;
                }
            }
        }
        self.agents
            .iter()
            .all(|a| seen[a.id] == u32::from(a.is_alive()))
    }
}

/// Rebuilds every occupant list for the current tick.
pub fn apply_movement(world: &mut WorldState, lockdown_active: bool) {
    let tick = world.tick;
    for loc in &mut world.locations {
        loc.occupant_ids.clear();
    }
    for agent in &mut world.agents {
        agent.location = agent.scheduled_location(tick, lockdown_active);
        if let Some(loc) = agent.location {
            world.locations[loc].occupant_ids.push(agent.id);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(n: usize, seed: u64) -> WorldState {
        let cfg = WorldConfig {
            population_size: n,
            seed,
            ..WorldConfig::default()
        };
        synthesize_population(&cfg, &EconomyConfig::default()).unwrap()
    }

    #[test]
    fn house_count_full_scale() {
        let w = world(100_000, 0);
        assert_eq!(w.houses.len(), 25_000);
        assert_eq!(w.config.hospital_count(), 4);
    }

    #[test]
    fn small_population_houses_and_heads() {
        let w = world(10, 3);
        let sizes: Vec<usize> = w.houses.iter().map(|h| h.member_ids.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        for h in &w.houses {
            let oldest = h.member_ids.iter().map(|&m| w.agents[m].age).max().unwrap();
            assert_eq!(w.agents[h.head_id].age, oldest);
            assert!(h.member_ids.contains(&h.head_id));
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        assert_eq!(world(2_000, 0), world(2_000, 0));
        assert_ne!(world(2_000, 0).agents, world(2_000, 1).agents);
    }

    #[test]
    fn rejects_empty_population() {
        let cfg = WorldConfig {
            population_size: 0,
            ..WorldConfig::default()
        };
        assert!(matches!(
            synthesize_population(&cfg, &EconomyConfig::default()),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn roles_capacities_and_flags() {
        let w = world(5_000, 11);
        for a in &w.agents {
            assert_eq!(a.age > 30, a.role == Role::Employed);
            assert!(!a.is_essential || a.role == Role::Employed);
            let kind = w.locations[a.workplace_id].kind;
            match a.role {
                Role::Employed => assert_eq!(kind, LocationKind::Office),
                Role::Student => assert_eq!(kind, LocationKind::School),
            }
            assert_eq!(w.locations[a.hospital_id].kind, LocationKind::Hospital);
        }
        let mut load = vec![0usize; w.locations.len()];
        for a in &w.agents {
            load[a.workplace_id] += 1;
        }
        for loc in &w.locations {
            match loc.kind {
                LocationKind::Office => assert!(load[loc.id] <= 50),
                LocationKind::School => assert!(load[loc.id] <= 200),
                _ => {}
            }
        }
        let employed = w.agents.iter().filter(|a| a.role == Role::Employed).count() as f64;
        let essential = w.agents.iter().filter(|a| a.is_essential).count() as f64;
        assert!((essential / employed - 0.2).abs() < 0.03);
    }

    #[test]
    fn everyone_starts_home() {
        let w = world(1_000, 2);
        assert_eq!(w.tick, 0);
        assert!(w.partition_holds());
        assert!(w.agents.iter().all(|a| a.location == Some(a.house_id)));
    }

    fn probe(role: Role) -> Agent {
        let age = if role == Role::Employed { 45 } else { 12 };
        Agent {
            id: 0,
            age,
            role,
            house_id: 0,
            workplace_id: 7,
            hospital_id: 9,
            is_essential: false,
            is_violator: false,
            health: HealthState::susceptible(),
            vaccination: VaccinationState::Unvaccinated,
            location: None,
        }
    }

    #[test]
    fn schedule_rules() {
        let office = probe(Role::Employed);
        assert_eq!(office.scheduled_location(1, false), Some(7));
        assert_eq!(office.scheduled_location(0, false), Some(0));
        assert_eq!(office.scheduled_location(1, true), Some(0));

        let mut essential = probe(Role::Employed);
        essential.is_essential = true;
        assert_eq!(essential.scheduled_location(1, true), Some(7));

        let mut student = probe(Role::Student);
        student.is_violator = true;
        assert_eq!(student.scheduled_location(1, true), Some(7));

        let mut sick = probe(Role::Employed);
        sick.health = HealthState::entering(Compartment::InfectedMild, 3);
        assert_eq!(sick.scheduled_location(1, false), Some(0));
        sick.health = HealthState::entering(Compartment::Hospitalized, 3);
        assert_eq!(sick.scheduled_location(0, false), Some(9));
        assert_eq!(sick.scheduled_location(1, true), Some(9));
        sick.health = HealthState::deceased();
        assert_eq!(sick.scheduled_location(1, false), None);
    }

    #[test]
    fn movement_partitions_live_agents() {
        let mut w = world(1_000, 5);
        w.agents[3].health = HealthState::entering(Compartment::Hospitalized, 10);
        w.agents[4].health = HealthState::deceased();
        for tick in 0..4 {
            w.tick = tick;
            apply_movement(&mut w, tick == 3);
            assert!(w.partition_holds());
            let occupied: usize = w.locations.iter().map(|l| l.occupant_ids.len()).sum();
            assert_eq!(occupied, w.live_population());
            let hospital = w.agents[3].hospital_id;
            assert!(w.locations[hospital].occupant_ids.contains(&3));
            assert_eq!(w.agents[4].location, None);
        }
        w.tick = 0;
        apply_movement(&mut w, false);
        for loc in &w.locations {
            if loc.kind != LocationKind::House && loc.kind != LocationKind::Hospital {
                assert!(loc.occupant_ids.is_empty());
            }
        }
    }

    #[test]
    fn ten_agent_lockdown_trace() {
        let cfg = WorldConfig {
            population_size: 10,
            essential_worker_fraction: 0.0,
            violator_fraction: 0.0,
            seed: 4,
            ..WorldConfig::default()
        };
        let mut w = synthesize_population(&cfg, &EconomyConfig::default()).unwrap();
        let violator = w
            .agents
            .iter()
            .position(|a| a.role == Role::Student)
            .expect("seed 4 has a student");
        w.agents[violator].is_violator = true;
        w.tick = 1;
        apply_movement(&mut w, true);
        for a in &w.agents {
            if a.id == violator {
                assert_eq!(a.location, Some(a.workplace_id));
                assert_eq!(w.locations[a.workplace_id].kind, LocationKind::School);
            } else {
                assert_eq!(a.location, Some(a.house_id));
            }
        }
    }
}
