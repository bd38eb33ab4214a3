//! Experiment driver: fixed baselines, training runs and their artifacts.

pub mod config;
pub mod output;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{BaselineId, ExperimentConfig, ExperimentRow, RunConfig, Scenario, DEFAULT_POPULATION};
pub use output::{emit_plot_svg, read_trace_csv, write_json, write_trace_csv, Series};

use crate::ddpg::{self, DdpgHyperParams, EvalReport, Environment};
use crate::env::{
    economy_reward, health_reward, run_episode, trace_reward, DayRecord, EpidemicEnv, EpisodeTrace, RewardWeights,
    SimulationConfig,
};
use crate::epidemic::Compartment;
use crate::interventions::InterventionSchedule;
use crate::neural::{save_checkpoint, Checkpoint};
use crate::neural::Mlp;
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

/// One schedule run on a list of seeds.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub label: String,
    pub schedule: InterventionSchedule,
    pub seeds: Vec<u64>,
    pub traces: Vec<EpisodeTrace>,
}

impl PolicyRun {
    pub fn run(label: &str, config: &SimulationConfig, schedule: InterventionSchedule, seeds: &[u64]) -> Result<Self> {
        let traces = seeds
            .par_iter()
            .map(|&s| run_episode(config, &schedule, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            label: label.to_string(),
            schedule,
            seeds: seeds.to_vec(),
            traces,
        })
    }

    /// Per-day mean over seeds.
    pub fn mean_series(&self, f: impl Fn(&DayRecord) -> usize) -> Vec<f64> {
        let days = self.traces.iter().map(|t| t.days.len()).min().unwrap_or(0);
        let n = self.traces.len() as f64;
        (0..days)
            .map(|d| self.traces.iter().map(|t| f(&t.days[d]) as f64).sum::<f64>() / n)
            .collect()
    }

    pub fn summary(&self, weights: RewardWeights) -> PolicySummary {
        let n = self.traces.len() as f64;
        let mean = |f: &dyn Fn(&EpisodeTrace) -> f64| self.traces.iter().map(f).sum::<f64>() / n;
        let rewards: Vec<f64> = self.traces.iter().map(|t| trace_reward(t, weights)).collect();
        let report = EvalReport::from_rewards(Vec::new(), rewards);
        PolicySummary {
            label: self.label.clone(),
            schedule: self.schedule.to_string(),
            reward_mean: report.mean,
            reward_sd: report.sd,
            health_reward: mean(&health_reward),
            economy_reward: mean(&economy_reward),
            peak_below_poverty_line: mean(&|t| t.peak_below_poverty() as f64),
            cumulative_infected: mean(&|t| t.last().ever_infected() as f64),
            deceased: mean(&|t| t.last().count(Compartment::Deceased) as f64),
            peak_hospitalized: mean(&|t| {
                t.days.iter().map(|d| d.count(Compartment::Hospitalized)).max().unwrap_or(0) as f64
            }),
            doses_given: mean(&|t| t.total_doses() as f64),
        }
    }

    /// Writes `<dir>/<label>_seed<seed>.csv` for every seed.
    pub fn write_traces(&self, dir: &Path) -> Result<()> {
        for (seed, trace) in self.seeds.iter().zip(&self.traces) {
            write_trace_csv(trace, &dir.join(format!("{}_seed{seed}.csv", self.label)))?;
        }
        Ok(())
    }
}

/// Seed-averaged outcome of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub label: String,
    pub schedule: String,
    pub reward_mean: f64,
    pub reward_sd: f64,
    pub health_reward: f64,
    pub economy_reward: f64,
    pub peak_below_poverty_line: f64,
    /// Agents that ever left Susceptible by the last day.
    pub cumulative_infected: f64,
    pub deceased: f64,
    pub peak_hospitalized: f64,
    pub doses_given: f64,
}

pub fn write_summary_csv(rows: &[PolicySummary], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn run_baseline(id: BaselineId, config: &SimulationConfig, seeds: &[u64]) -> Result<PolicyRun> {
    PolicyRun::run(id.label(), config, id.schedule(config.world.episode_days), seeds)
}

/// Parses `a..b` (inclusive of both ends) or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::config(format!("cannot parse seed list '{text}'"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// Runs every policy on the same seeds, writes traces, the comparison table
/// and the three outcome plots under `out`.
pub fn compare_policies(
    config: &SimulationConfig,
    weights: RewardWeights,
    policies: &[(String, InterventionSchedule)],
    seeds: &[u64],
    out: &Path,
) -> Result<Vec<PolicyRun>> {
    let runs = policies
        .iter()
        .map(|(label, schedule)| PolicyRun::run(label, config, *schedule, seeds))
        .collect::<Result<Vec<_>>>()?;
    for run in &runs {
        run.write_traces(&out.join("traces"))?;
    }
    let summaries: Vec<PolicySummary> = runs.iter().map(|r| r.summary(weights)).collect();
    write_summary_csv(&summaries, &out.join("comparison.csv"))?;

    let plot = |file: &str, title: &str, y: &str, f: &dyn Fn(&DayRecord) -> usize| {
        let series: Vec<Series> = runs
            .iter()
            .map(|r| Series {
                label: r.label.clone(),
                values: r.mean_series(f),
            })
            .collect();
        emit_plot_svg(&out.join(file), title, y, &series)
    };
    plot("bpl.svg", "Population below the poverty line", "people", &|d| d.below_poverty_line)?;
    plot("deceased.svg", "Deceased", "people", &|d| d.count(Compartment::Deceased))?;
    plot("total_infected.svg", "Total infected", "people", &|d| d.ever_infected())?;
    Ok(runs)
}

fn baseline_policies(horizon: u32) -> Vec<(String, InterventionSchedule)> {
    BaselineId::ALL
        .into_iter()
        .map(|b| (b.label().to_string(), b.schedule(horizon)))
        .collect()
}

pub fn eval_seeds(hyper: &DdpgHyperParams) -> Vec<u64> {
    (0..hyper.eval_repeats as u64).map(|i| hyper.eval_seed_base() + i).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentConfig,
    pub scenario: u32,
    pub optimized_action: Vec<f64>,
    pub optimized: PolicySummary,
    /// Best random burn-in action, re-run on the evaluation seeds.
    pub best_burn_in: Option<PolicySummary>,
    pub baselines: Vec<PolicySummary>,
    pub out_dir: PathBuf,
}

impl ExperimentReport {
    pub fn rows(&self) -> impl Iterator<Item = &PolicySummary> {
        std::iter::once(&self.optimized)
            .chain(self.best_burn_in.iter())
            .chain(self.baselines.iter())
    }
}

/// Evaluates a fixed action against the baselines and writes all artifacts.
pub fn evaluate_action_against_baselines(
    env: &EpidemicEnv,
    experiment: &ExperimentConfig,
    scenario: Scenario,
    action: &[f64],
    burn_in_action: Option<&[f64]>,
    seeds: &[u64],
    out: &Path,
) -> Result<ExperimentReport> {
    let horizon = env.config.world.episode_days;
    let mut policies = vec![("optimized".to_string(), env.schedule_for(action)?)];
    if let Some(a) = burn_in_action {
        policies.push(("best_burn_in".to_string(), env.schedule_for(a)?));
    }
    policies.extend(baseline_policies(horizon));
    let runs = compare_policies(&env.config, env.weights, &policies, seeds, out)?;
    let mut summaries = runs.iter().map(|r| r.summary(env.weights));
    let optimized = summaries.next().expect("optimized run");
    let best_burn_in = burn_in_action.map(|_| summaries.next().expect("burn-in run"));
    let report = ExperimentReport {
        experiment: experiment.clone(),
        scenario: scenario.id(),
        optimized_action: action.to_vec(),
        optimized,
        best_burn_in,
        baselines: summaries.collect(),
        out_dir: out.to_path_buf(),
    };
    write_json(&report, &out.join("report.json"))?;
    Ok(report)
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    run: &'a RunConfig,
    experiment: &'a ExperimentConfig,
    simulation: &'a SimulationConfig,
    observation: Vec<f64>,
}

/// Trains a policy for one experiment and scenario, then compares it with
/// the baselines on the shared evaluation seeds.
pub fn run_experiment(base: &RunConfig, experiment_id: u32, scenario: Scenario, out: &Path) -> Result<ExperimentReport> {
    base.validate()?;
    let experiment = base.experiment(experiment_id, scenario)?;
    let simulation = experiment.simulation_config(base);
    let env = EpidemicEnv::new(simulation, experiment.weights()?)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(
        &ResolvedConfig {
            run: base,
            experiment: &experiment,
            simulation: &env.config,
            observation: env.observation(),
        },
        &out.join("config.resolved.json"),
    )?;

    let hyper = &base.ddpg;
    let outcome = ddpg::train(&env, hyper)?;
    let log_path = out.join("training_log.csv");
    let log_file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    outcome.log.write_csv(BufWriter::new(log_file))?;

    let checkpoint = Checkpoint::new(
        hyper.seed,
        hyper.train_iterations as u64,
        vec![
            ("actor".into(), outcome.best_policy.clone()),
            ("critic".into(), outcome.agent.critic.clone()),
            ("target_actor".into(), outcome.agent.target_actor.clone()),
            ("target_critic".into(), outcome.agent.target_critic.clone()),
        ],
        serde_json::json!({
            "experiment": experiment_id,
            "scenario": scenario.id(),
            "population": experiment.population,
            "best_eval_mean": outcome.best_eval.mean,
        }),
    );
    save_checkpoint(&out.join("policy.ckpt"), &checkpoint)?;

    let burn_in = outcome.best_burn_in.as_ref().map(|(a, _)| a.as_slice());
    evaluate_action_against_baselines(
        &env,
        &experiment,
        scenario,
        &outcome.best_eval.action,
        burn_in,
        &eval_seeds(hyper),
        out,
    )
}

/// Noiseless action of a stored actor for `env`.
pub fn policy_action(actor: &Mlp, env: &EpidemicEnv) -> Result<Vec<f64>> {
    ddpg::select_action(actor, &env.observation(), 0.0, &mut stream_rng(0, Stream::Policy))
}
