//! Deep Deterministic Policy Gradient over a single-step environment.
//!
//! Every environment interaction is a complete episode, so every stored
//! transition is terminal and the critic target reduces to the reward. The
//! bootstrap term is still computed through the target networks and zeroed by
//! the done flag.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::neural::{layer_stack, Activation, Adam, Mlp};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::{Error, Result};

/// Black-box reward source the learner optimizes.
pub trait Environment {
    fn observation(&self) -> Vec<f64>;

    fn action_dim(&self) -> usize;

    /// Mean reward of `action` over `replicates` runs seeded from `seed_base`.
    fn reward(&self, action: &[f64], replicates: usize, seed_base: u64) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgHyperParams {
    pub seed: u64,
    pub discount: f64,
    pub tau: f64,
    pub expl_noise: f64,
    pub batch_size: usize,
    pub train_iterations: usize,
    /// Leading iterations that take uniform random actions.
    pub burn_in: usize,
    pub eval_every: usize,
    pub eval_repeats: usize,
    pub replicates_per_action: usize,
    pub replay_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden_width: usize,
    /// Full train steps taken after each environment interaction.
    pub updates_per_iteration: usize,
}

impl Default for DdpgHyperParams {
    fn default() -> Self {
        Self {
            seed: 0,
            discount: 0.99,
            tau: 5e-3,
            expl_noise: 0.1,
            batch_size: 32,
            train_iterations: 150,
            burn_in: 10,
            eval_every: 10,
            eval_repeats: 5,
            replicates_per_action: 2,
            replay_capacity: 10_000,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            hidden_width: 64,
            updates_per_iteration: 50,
        }
    }
}

impl DdpgHyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("tau must lie in (0, 1]"));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::config("batch_size must be >= 1 and fit in the replay buffer"));
        }
        if self.burn_in > self.train_iterations {
            return Err(Error::config("burn_in cannot exceed train_iterations"));
        }
        if self.eval_every == 0 || self.eval_repeats == 0 || self.replicates_per_action == 0 {
            return Err(Error::config("eval_every, eval_repeats and replicates_per_action must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.discount) || self.expl_noise < 0.0 {
            return Err(Error::config("discount must lie in [0, 1] and expl_noise be >= 0"));
        }
        if self.hidden_width == 0 || self.updates_per_iteration == 0 {
            return Err(Error::config("hidden_width and updates_per_iteration must be >= 1"));
        }
        Ok(())
    }

    /// First seed used by iteration `iteration` (1-based) of training.
    pub fn training_seed(&self, iteration: usize) -> u64 {
        (self.seed << 32) + (iteration * self.replicates_per_action) as u64
    }

    /// First of the `eval_repeats` seeds shared by every evaluation.
    pub fn eval_seed_base(&self) -> u64 {
        (self.seed << 32) + (1 << 31)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    /// The executed action, already clamped to `[-1, 1]`.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn sample_indices(&self, batch_size: usize, rng: &mut impl Rng) -> Option<Vec<usize>> {
        if batch_size == 0 || self.items.len() < batch_size {
            return None;
        }
        Some((0..batch_size).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    /// `None` until the buffer holds at least `batch_size` transitions.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Option<Vec<&Transition>> {
        self.sample_indices(batch_size, rng)
            .map(|idx| idx.into_iter().map(|i| &self.items[i]).collect())
    }

    /// Mean and standard deviation of stored rewards.
    pub fn reward_stats(&self) -> (f64, f64) {
        let n = self.items.len().max(1) as f64;
        let mean = self.items.iter().map(|t| t.reward).sum::<f64>() / n;
        let var = self.items.iter().map(|t| (t.reward - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    pub discount: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl ActorCritic {
    /// Actor `obs -> h -> h -> act` with tanh output (last layer scaled by 0.1
    /// so initial actions sit near zero); critic `obs + act -> h -> h -> 1`.
    pub fn new(obs_dim: usize, act_dim: usize, hyper: &DdpgHyperParams, rng: &mut impl Rng) -> Result<Self> {
        let h = hyper.hidden_width;
        let mut actor = Mlp::new(layer_stack(&[obs_dim, h, h, act_dim], Activation::Relu, Activation::Tanh), rng)?;
        actor.scale_layer(2, 0.1);
        let critic = Mlp::new(
            layer_stack(&[obs_dim + act_dim, h, h, 1], Activation::Relu, Activation::Identity),
            rng,
        )?;
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: Adam::new(actor.param_count()),
            critic_opt: Adam::new(critic.param_count()),
            actor,
            critic,
            discount: hyper.discount,
            tau: hyper.tau,
            actor_lr: hyper.actor_lr,
            critic_lr: hyper.critic_lr,
        })
    }

    pub fn act(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(observation)
    }

    pub fn q_value(&self, observation: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(&concat(observation, action))?[0])
    }

    /// One regression step of the critic towards
    /// `r + discount * (1 - done) * Q'(s', mu'(s'))`. Returns the mean squared
    /// error before the step.
    pub fn critic_step(&mut self, batch: &[&Transition]) -> Result<f64> {
        let scale = 1.0 / batch.len() as f64;
        let mut grads = vec![0.0; self.critic.param_count()];
        let mut loss = 0.0;
        for t in batch {
            let bootstrap = if t.done {
                0.0
            } else {
                let next_action = self.target_actor.forward(&t.next_observation)?;
                self.target_critic.forward(&concat(&t.next_observation, &next_action))?[0]
            };
            let target = t.reward + self.discount * bootstrap;
            let cache = self.critic.forward_cached(&concat(&t.observation, &t.action))?;
            let err = cache.output()[0] - target;
            loss += err * err * scale;
            self.critic.backward(&cache, &[2.0 * err * scale], &mut grads);
        }
        self.critic_opt.update(self.critic.params_mut(), &grads, self.critic_lr);
        Ok(loss)
    }

    /// One ascent step of the actor on the mean of `q(s, mu(s))`, where
    /// `q_and_grad` returns the value and its action gradient. Returns the
    /// mean value before the step.
    pub fn actor_step_with<F>(&mut self, observations: &[&[f64]], mut q_and_grad: F) -> Result<f64>
    where
        F: FnMut(&[f64], &[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let scale = 1.0 / observations.len() as f64;
        let mut grads = vec![0.0; self.actor.param_count()];
        let mut objective = 0.0;
        for obs in observations {
            let cache = self.actor.forward_cached(obs)?;
            let (q, dq_da) = q_and_grad(obs, cache.output())?;
            objective += q * scale;
            let upstream: Vec<f64> = dq_da.iter().map(|g| -g * scale).collect();
            self.actor.backward(&cache, &upstream, &mut grads);
        }
        self.actor_opt.update(self.actor.params_mut(), &grads, self.actor_lr);
        Ok(objective)
    }

    fn actor_step(&mut self, observations: &[&[f64]]) -> Result<f64> {
        let critic = self.critic.clone();
        let obs_dim = observations.first().map_or(0, |o| o.len());
        let mut scratch = vec![0.0; critic.param_count()];
        self.actor_step_with(observations, |obs, action| {
            let cache = critic.forward_cached(&concat(obs, action))?;
            let input_grad = critic.backward(&cache, &[1.0], &mut scratch);
            Ok((cache.output()[0], input_grad[obs_dim..].to_vec()))
        })
    }

    pub fn soft_update_targets(&mut self) {
        soft_update(&mut self.target_actor, &self.actor, self.tau);
        soft_update(&mut self.target_critic, &self.critic, self.tau);
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Critic step, then actor step, then soft target updates.
pub fn train_step(agent: &mut ActorCritic, batch: &[&Transition]) -> Result<StepStats> {
    if batch.is_empty() {
        return Err(Error::config("train_step needs a non-empty batch"));
    }
    let critic_loss = agent.critic_step(batch)?;
    let observations: Vec<&[f64]> = batch.iter().map(|t| t.observation.as_slice()).collect();
    let actor_objective = agent.actor_step(&observations)?;
    agent.soft_update_targets();
    Ok(StepStats {
        critic_loss,
        actor_objective,
    })
}

pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    target.soft_update_from(online, tau);
}

/// Deterministic action plus per-component Gaussian noise, clamped to
/// `[-1, 1]`.
pub fn select_action(actor: &Mlp, observation: &[f64], noise_sigma: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let mut action = actor.forward(observation)?;
    if noise_sigma > 0.0 {
        let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::config(e.to_string()))?;
        for a in &mut action {
            *a += noise.sample(rng);
        }
    }
    for a in &mut action {
        *a = a.clamp(-1.0, 1.0);
    }
    Ok(action)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub action: Vec<f64>,
    pub rewards: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl EvalReport {
    pub fn from_rewards(action: Vec<f64>, rewards: Vec<f64>) -> Self {
        let n = rewards.len() as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let sd = if rewards.len() > 1 {
            (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            action,
            rewards,
            mean,
            sd,
        }
    }
}

/// Runs `action` once per seed `seed_base..seed_base + repeats`.
pub fn evaluate_action<E: Environment + ?Sized>(
    env: &E,
    action: &[f64],
    repeats: usize,
    seed_base: u64,
) -> Result<EvalReport> {
    if repeats == 0 {
        return Err(Error::config("evaluation needs at least one repeat"));
    }
    let rewards = (0..repeats as u64)
        .map(|i| env.reward(action, 1, seed_base + i))
        .collect::<Result<Vec<f64>>>()?;
    Ok(EvalReport::from_rewards(action.to_vec(), rewards))
}

/// Noiseless rollout of `policy`.
pub fn evaluate<E: Environment + ?Sized>(policy: &Mlp, env: &E, repeats: usize, seed_base: u64) -> Result<EvalReport> {
    let action = select_action(policy, &env.observation(), 0.0, &mut stream_rng(0, Stream::Policy))?;
    evaluate_action(env, &action, repeats, seed_base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub action: Vec<f64>,
    pub reward: f64,
    pub critic_loss: Option<f64>,
    pub actor_objective: Option<f64>,
    pub eval_mean: Option<f64>,
    pub eval_sd: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn eval_points(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(|r| r.eval_mean.is_some())
    }

    /// Header `iteration,reward,critic_loss,actor_objective,eval_mean,eval_sd`;
    /// missing values are empty fields.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "reward", "critic_loss", "actor_objective", "eval_mean", "eval_sd"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                r.reward.to_string(),
                opt(r.critic_loss),
                opt(r.actor_objective),
                opt(r.eval_mean),
                opt(r.eval_sd),
            ])?;
        }
        w.flush().map_err(|e| Error::io("training log", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: ActorCritic,
    pub log: TrainingLog,
    /// Actor snapshot with the best evaluation mean.
    pub best_policy: Mlp,
    pub best_eval: EvalReport,
    /// Best random action seen during burn-in, with its training reward.
    pub best_burn_in: Option<(Vec<f64>, f64)>,
    pub replay: ReplayBuffer,
}

/// Trains with one environment interaction per iteration. The critic sees
/// rewards standardized by the replay buffer's running mean and deviation.
pub fn train<E: Environment + ?Sized>(env: &E, hyper: &DdpgHyperParams) -> Result<TrainOutcome> {
    hyper.validate()?;
    let observation = env.observation();
    let act_dim = env.action_dim();
    let mut rng: SimRng = stream_rng(hyper.seed, Stream::Policy);
    let mut agent = ActorCritic::new(observation.len(), act_dim, hyper, &mut rng)?;
    let mut replay = ReplayBuffer::new(hyper.replay_capacity);
    let mut log = TrainingLog::default();
    let mut best: Option<(Mlp, EvalReport)> = None;
    let mut best_burn_in: Option<(Vec<f64>, f64)> = None;

    for iteration in 1..=hyper.train_iterations {
        let action = if iteration <= hyper.burn_in {
            (0..act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
        } else {
            select_action(&agent.actor, &observation, hyper.expl_noise, &mut rng)?
        };
        let reward = env.reward(&action, hyper.replicates_per_action, hyper.training_seed(iteration))?;
        if iteration <= hyper.burn_in && best_burn_in.as_ref().is_none_or(|(_, r)| reward > *r) {
            best_burn_in = Some((action.clone(), reward));
        }
        replay.push(Transition {
            observation: observation.clone(),
            action: action.clone(),
            reward,
            next_observation: observation.clone(),
            done: true,
        });

        let mut stats = None;
        if replay.len() >= hyper.batch_size {
            let (mean, sd) = replay.reward_stats();
            let sd = if sd > 1e-12 { sd } else { 1.0 };
            let draw_batch = |rng: &mut SimRng| -> Vec<Transition> {
                let idx = replay.sample_indices(hyper.batch_size, rng).expect("buffer holds a full batch");
                idx.into_iter()
                    .map(|i| {
                        let mut t = replay.items[i].clone();
                        t.reward = (t.reward - mean) / sd;
                        t
                    })
                    .collect()
            };
            for _ in 0..hyper.updates_per_iteration {
                let batch = draw_batch(&mut rng);
                stats = Some(train_step(&mut agent, &batch.iter().collect::<Vec<_>>())?);
            }
        }

        let mut row = LogRow {
            iteration,
            action,
            reward,
            critic_loss: stats.map(|s| s.critic_loss),
            actor_objective: stats.map(|s| s.actor_objective),
            eval_mean: None,
            eval_sd: None,
        };
        if iteration % hyper.eval_every == 0 {
            let report = evaluate(&agent.actor, env, hyper.eval_repeats, hyper.eval_seed_base())?;
            row.eval_mean = Some(report.mean);
            row.eval_sd = Some(report.sd);
            if best.as_ref().is_none_or(|(_, b)| report.mean >= b.mean) {
                best = Some((agent.actor.clone(), report));
            }
        }
        log.rows.push(row);
    }

    let (best_policy, best_eval) = match best {
        Some(b) => b,
        None => {
            let report = evaluate(&agent.actor, env, hyper.eval_repeats, hyper.eval_seed_base())?;
            (agent.actor.clone(), report)
        }
    };
    Ok(TrainOutcome {
        agent,
        log,
        best_policy,
        best_eval,
        best_burn_in,
        replay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reward `-(a0 - target)^2`, ignoring seeds and the other components.
    struct Bandit {
        target: f64,
    }

    impl Environment for Bandit {
        fn observation(&self) -> Vec<f64> {
            vec![0.5; 6]
        }
        fn action_dim(&self) -> usize {
            8
        }
        fn reward(&self, action: &[f64], _replicates: usize, _seed: u64) -> Result<f64> {
            Ok(-(action[0] - self.target).powi(2))
        }
    }

    fn agent(seed: u64) -> ActorCritic {
        let hyper = DdpgHyperParams::default();
        ActorCritic::new(6, 8, &hyper, &mut stream_rng(seed, Stream::Policy)).unwrap()
    }

    fn fixed_buffer(reward: impl Fn(&[f64]) -> f64, n: usize, seed: u64) -> ReplayBuffer {
        let mut rng = stream_rng(seed, Stream::Population);
        let mut buf = ReplayBuffer::new(10_000);
        for _ in 0..n {
            let action: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..=1.0)).collect();
            buf.push(Transition {
                observation: vec![0.5; 6],
                reward: reward(&action),
                action,
                next_observation: vec![0.5; 6],
                done: true,
            });
        }
        buf
    }

    #[test]
    fn noiseless_action_is_actor_output() {
        let a = agent(0);
        let obs = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let mut rng = stream_rng(1, Stream::Policy);
        assert_eq!(select_action(&a.actor, &obs, 0.0, &mut rng).unwrap(), a.act(&obs).unwrap());
    }

    #[test]
    fn exploration_noise_sd() {
        let a = agent(0);
        let obs = [0.5; 6];
        let base = a.act(&obs).unwrap();
        assert!(base.iter().all(|x| x.abs() < 0.5));
        let mut rng = stream_rng(2, Stream::Policy);
        let draws = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..draws {
            let d = select_action(&a.actor, &obs, 0.1, &mut rng).unwrap()[0] - base[0];
            sum += d;
            sum2 += d * d;
        }
        let mean = sum / draws as f64;
        let sd = (sum2 / draws as f64 - mean * mean).sqrt();
        assert!((sd - 0.1).abs() < 0.002, "{sd}");
    }

    #[test]
    fn large_noise_is_clamped() {
        let net = Mlp::from_params(
            vec![crate::neural::LayerSpec::new(1, 1, Activation::Identity)],
            vec![0.0, 0.99],
        )
        .unwrap();
        let mut rng = stream_rng(3, Stream::Policy);
        for _ in 0..1_000 {
            let a = select_action(&net, &[0.0], 10.0, &mut rng).unwrap()[0];
            assert!((-1.0..=1.0).contains(&a));
        }
        let hits = (0..1_000)
            .filter(|_| select_action(&net, &[0.0], 10.0, &mut rng).unwrap()[0] == 1.0)
            .count();
        assert!(hits > 300);
    }

    #[test]
    fn terminal_targets_ignore_target_nets() {
        let buf = fixed_buffer(|_| -1.0, 32, 0);
        let batch: Vec<&Transition> = buf.iter().collect();
        let mut a = agent(4);
        let mut b = a.clone();
        for p in b.target_critic.params_mut() {
            *p = 123.0;
        }
        for p in b.target_actor.params_mut() {
            *p = -7.0;
        }
        assert_eq!(a.critic_step(&batch).unwrap(), b.critic_step(&batch).unwrap());
        assert_eq!(a.critic.params(), b.critic.params());
    }

    #[test]
    fn non_terminal_targets_bootstrap() {
        let mut buf = fixed_buffer(|_| 0.0, 4, 0);
        for t in buf.items.iter_mut() {
            t.done = false;
        }
        let batch: Vec<&Transition> = buf.iter().collect();
        let a = agent(4);
        let mut b = a.clone();
        for p in b.target_critic.params_mut() {
            *p = 0.5;
        }
        let mut a = a;
        assert_ne!(a.critic_step(&batch).unwrap(), b.critic_step(&batch).unwrap());
    }

    #[test]
    fn critic_learns_constant_reward() {
        let buf = fixed_buffer(|_| -5.0, 256, 1);
        let mut a = agent(5);
        let mut rng = stream_rng(5, Stream::Population);
        for _ in 0..2_000 {
            let batch = buf.sample(32, &mut rng).unwrap();
            a.critic_step(&batch).unwrap();
        }
        for t in buf.iter().take(20) {
            let q = a.q_value(&t.observation, &t.action).unwrap();
            assert!((q + 5.0).abs() < 0.1, "{q}");
        }
    }

    #[test]
    fn actor_climbs_frozen_quadratic_critic() {
        let mut a = agent(6);
        let obs = vec![0.5; 6];
        for _ in 0..2_000 {
            a.actor_step_with(&[obs.as_slice()], |_, act| {
                let mut g = vec![0.0; act.len()];
                g[0] = -2.0 * (act[0] - 0.5);
                Ok((-(act[0] - 0.5).powi(2), g))
            })
            .unwrap();
        }
        let a0 = a.act(&obs).unwrap()[0];
        assert!((a0 - 0.5).abs() < 0.05, "{a0}");
    }

    #[test]
    fn target_lag_bound() {
        let buf = fixed_buffer(|a| -(a[0] - 0.2).powi(2), 64, 2);
        let mut a = agent(7);
        let mut rng = stream_rng(7, Stream::Population);
        a.actor.params_mut()[0] += 0.3;
        for _ in 0..20 {
            let prev_actor = a.target_actor.clone();
            let prev_critic = a.target_critic.clone();
            let batch = buf.sample(32, &mut rng).unwrap();
            train_step(&mut a, &batch).unwrap();
            for (prev, target, online) in [
                (&prev_actor, &a.target_actor, &a.actor),
                (&prev_critic, &a.target_critic, &a.critic),
            ] {
                for ((p, t), o) in prev.params().iter().zip(target.params()).zip(online.params()) {
                    assert!((t - p).abs() <= a.tau * (o - p).abs() + 1e-15);
                }
            }
        }
    }

    #[test]
    fn critic_loss_non_increasing_on_frozen_buffer() {
        let buf = fixed_buffer(|a| -(a[0] - 0.4).powi(2) + 0.3 * a[1], 128, 3);
        let all: Vec<&Transition> = buf.iter().collect();
        let mut a = agent(8);
        let mut rng = stream_rng(8, Stream::Population);
        let full_loss = |a: &ActorCritic| {
            all.iter()
                .map(|t| (a.q_value(&t.observation, &t.action).unwrap() - t.reward).powi(2))
                .sum::<f64>()
                / all.len() as f64
        };
        let mut prev = full_loss(&a);
        for _ in 0..10 {
            for _ in 0..100 {
                let batch = buf.sample(32, &mut rng).unwrap();
                train_step(&mut a, &batch).unwrap();
            }
            let now = full_loss(&a);
            assert!(now <= prev, "{now} > {prev}");
            prev = now;
        }
    }

    #[test]
    fn replay_sampling_is_uniform() {
        let buf = fixed_buffer(|_| 0.0, 50, 4);
        assert!(buf.sample(51, &mut stream_rng(0, Stream::Policy)).is_none());
        let mut counts = [0usize; 50];
        let mut rng = stream_rng(9, Stream::Policy);
        let draws = 50_000;
        for _ in 0..draws / 25 {
            for i in buf.sample_indices(25, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let expected = draws as f64 / 50.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 95th percentile of chi-square with 49 degrees of freedom.
        assert!(chi2 < 66.34, "{chi2}");
    }

    #[test]
    fn ring_buffer_wraps() {
        let mut buf = ReplayBuffer::new(3);
        for r in 0..5 {
            buf.push(Transition {
                observation: vec![],
                action: vec![],
                reward: r as f64,
                next_observation: vec![],
                done: true,
            });
        }
        let mut rewards: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn training_protocol_shape_and_determinism() {
        let env = Bandit { target: 0.4 };
        let hyper = DdpgHyperParams::default();
        let a = train(&env, &hyper).unwrap();
        assert_eq!(a.log.rows.len(), 150);
        assert_eq!(a.log.eval_points().count(), 15);
        assert!(a.log.rows[..31].iter().all(|r| r.critic_loss.is_none()));
        assert!(a.log.rows[31].critic_loss.is_some());
        let b = train(&env, &hyper).unwrap();
        assert_eq!(a.log, b.log);
        let mut csv = Vec::new();
        a.log.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 151);
        assert!(text.starts_with("iteration,reward,critic_loss,actor_objective,eval_mean,eval_sd\n"));
    }

    #[test]
    fn evaluation_of_deterministic_env_has_zero_sd() {
        let env = Bandit { target: 0.4 };
        let a = agent(1);
        let report = evaluate(&a.actor, &env, 5, 0).unwrap();
        assert_eq!(report.rewards.len(), 5);
        assert_eq!(report.sd, 0.0);
        assert!(evaluate(&a.actor, &env, 0, 0).is_err());
    }
}
