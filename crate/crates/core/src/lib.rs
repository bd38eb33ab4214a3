//! Agent-based epidemic simulator with a household economy, lockdown and
//! age-stratified vaccination interventions, and a DDPG learner that searches
//! continuous intervention schedules.
//!
//! The simulation stack is `world` (population, geography, movement),
//! `epidemic` (9-compartment disease state machine), `economy` (household
//! ledgers) and `interventions` (schedules and dose dispensing). `env` wraps a
//! full episode as a single-step RL environment; `neural` and `ddpg` provide
//! the learner; `harness` drives baselines and experiments for the CLI.

pub mod ddpg;
pub mod economy;
pub mod env;
pub mod epidemic;
pub mod error;
pub mod harness;
pub mod interventions;
pub mod neural;
pub mod rng;
pub mod world;

pub use error::{Error, Result};
