use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use epidemictrl::ddpg::DdpgHyperParams;
use epidemictrl::env::{EpidemicEnv, RewardWeights};
use epidemictrl::harness::{
    self, eval_seeds, parse_seeds, policy_action, run_baseline, write_summary_csv, BaselineId, RunConfig, Scenario,
};
use epidemictrl::neural::load_checkpoint;
use epidemictrl::neural::{self, layer_stack, Activation, Mlp};
use epidemictrl::rng::stream_rng;
use epidemictrl::{Error, Result};

#[derive(Parser)]
#[command(name = "epidemictrl", version, about = "Agent-based epidemic simulator with a DDPG intervention optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fixed baseline schedule on a list of seeds.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// NoL_NoV, FullL_FullV, NoL_FullV or L30_FullV.
        #[arg(long)]
        baseline: BaselineId,
        /// `a..b` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "0..4")]
        seeds: String,
        /// Take infections and vaccines from this experiment (1 to 4).
        #[arg(long)]
        experiment: Option<u32>,
        #[arg(long, default_value_t = 1)]
        scenario: u32,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy for an experiment and compare it with the baselines.
    Train {
        #[arg(long)]
        experiment: u32,
        #[arg(long)]
        scenario: u32,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved actor against the baselines.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the experiment stored in the checkpoint.
        #[arg(long)]
        experiment: Option<u32>,
        #[arg(long)]
        scenario: Option<u32>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the network gradients.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        nets: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: Option<&PathBuf>, population: Option<usize>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = population {
        cfg.world.population_size = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_rows<'a>(rows: impl Iterator<Item = &'a harness::PolicySummary>) {
    println!(
        "{:<14} {:>12} {:>10} {:>10} {:>10} {:>10}  schedule",
        "policy", "reward", "sd", "peak_bpl", "infected", "deceased"
    );
    for r in rows {
        println!(
            "{:<14} {:>12.1} {:>10.1} {:>10.1} {:>10.1} {:>10.1}  {}",
            r.label, r.reward_mean, r.reward_sd, r.peak_below_poverty_line, r.cumulative_infected, r.deceased, r.schedule
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            baseline,
            seeds,
            experiment,
            scenario,
            population,
            out,
        } => {
            let base = load_config(config.as_ref(), population)?;
            let scenario = Scenario::from_id(scenario)?;
            let sim = match experiment {
                Some(id) => base.experiment(id, scenario)?.simulation_config(&base),
                None => base.plain_simulation(),
            };
            let seeds = parse_seeds(&seeds)?;
            let result = run_baseline(baseline, &sim, &seeds)?;
            result.write_traces(&out)?;
            let summary = result.summary(RewardWeights::new(scenario.kappa())?);
            write_summary_csv(std::slice::from_ref(&summary), &out.join("summary.csv"))?;
            print_rows(std::iter::once(&summary));
        }
        Command::Train {
            experiment,
            scenario,
            config,
            population,
            iterations,
            seed,
            out,
        } => {
            let mut base = load_config(config.as_ref(), population)?;
            if let Some(n) = iterations {
                base.ddpg.train_iterations = n;
            }
            if let Some(s) = seed {
                base.ddpg.seed = s;
            }
            let report = harness::run_experiment(&base, experiment, Scenario::from_id(scenario)?, &out)?;
            print_rows(report.rows());
            println!("artifacts written to {}", out.display());
        }
        Command::Evaluate {
            checkpoint,
            experiment,
            scenario,
            config,
            population,
            repeats,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let meta = &ckpt.header.metadata;
            let from_meta = |key: &str| meta.get(key).and_then(|v| v.as_u64());
            let experiment = experiment
                .or(from_meta("experiment").map(|v| v as u32))
                .ok_or_else(|| Error::Checkpoint("no experiment given or stored".into()))?;
            let scenario = Scenario::from_id(scenario.or(from_meta("scenario").map(|v| v as u32)).unwrap_or(1))?;
            let population = population.or(from_meta("population").map(|v| v as usize));
            let mut base = load_config(config.as_ref(), population)?;
            if let Some(r) = repeats {
                base.ddpg.eval_repeats = r;
            }
            let actor = ckpt
                .network("actor")
                .ok_or_else(|| Error::Checkpoint("checkpoint has no actor network".into()))?;
            let exp = base.experiment(experiment, scenario)?;
            let env = EpidemicEnv::new(exp.simulation_config(&base), exp.weights()?)?;
            let action = policy_action(actor, &env)?;
            let report = harness::evaluate_action_against_baselines(
                &env,
                &exp,
                scenario,
                &action,
                None,
                &eval_seeds(&base.ddpg),
                &out,
            )?;
            print_rows(report.rows());
        }
        Command::Gradcheck { nets, eps, seed } => {
            let mut rng = stream_rng(seed, epidemictrl::rng::Stream::Policy);
            let hidden = DdpgHyperParams::default().hidden_width;
            let mut worst = 0.0f64;
            for _ in 0..nets {
                let net = Mlp::new(layer_stack(&[6, hidden, hidden, 8], Activation::Relu, Activation::Tanh), &mut rng)?;
                let x: Vec<f64> = (0..6).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
                worst = worst.max(neural::finite_diff_check(&net, &x, eps)?);
            }
            println!("max relative gradient error over {nets} networks: {worst:.3e}");
            if worst >= 1e-4 {
                return Err(Error::config(format!("gradient check failed: {worst:.3e} >= 1e-4")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("EPIDEMICTRL_THREADS").ok().and_then(|v| v.parse().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
