//! Multi-objective DDPG. Rewards are stored as vectors and scalarized
//! with a fixed preference vector when critic targets are formed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{Action, Env, EnvConfig, Observation, RewardVector, OBS_DIM};
use crate::error::{ConfigError, Error, Result};
use crate::nn::{Activation, ActivationSpec, Gradients, Mlp, OptimState};
use crate::SimRng;

pub const ACTION_DIM: usize = 2;

/// Preference weights over (data collection, energy harvest, energy
/// consumption, auxiliary). The auxiliary weight is always 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w_dc: f64,
    pub w_eh: f64,
    pub w_ec: f64,
    pub w_aux: f64,
}

impl WeightVector {
    pub fn new(w_dc: f64, w_eh: f64, w_ec: f64) -> Result<Self, ConfigError> {
        for (key, w) in [("w_dc", w_dc), ("w_eh", w_eh), ("w_ec", w_ec)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(ConfigError::out_of_range(key, "weights must be finite and non-negative"));
            }
        }
        Ok(Self { w_dc, w_eh, w_ec, w_aux: 1.0 })
    }

    /// Rate-heavy preset: `{w_dc, w_ec} = {100, 1}`.
    pub fn sodr() -> Self {
        Self { w_dc: 100.0, w_eh: 1.0, w_ec: 1.0, w_aux: 1.0 }
    }

    /// Consumption-heavy preset: `{w_dc, w_ec} = {1, 100}`.
    pub fn soec() -> Self {
        Self { w_dc: 1.0, w_eh: 1.0, w_ec: 100.0, w_aux: 1.0 }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sodr" => Some(Self::sodr()),
            "soec" => Some(Self::soec()),
            _ => None,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w_dc, self.w_eh, self.w_ec, self.w_aux]
    }
}

impl Default for WeightVector {
    fn default() -> Self {
        Self::sodr()
    }
}

pub fn scalarize(r: &RewardVector, w: &WeightVector) -> f64 {
    w.w_dc * r.r_dc + w.w_eh * r.r_eh + w.w_ec * r.r_ec + w.w_aux * r.r_aux
}

/// Gaussian exploration with a multiplicatively decaying variance factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub sigma2: f64,
    pub epsilon: f64,
    pub decay: f64,
    pub floor: f64,
}

impl NoiseSchedule {
    pub fn new(sigma2: f64, epsilon: f64, decay: f64, floor: f64) -> Self {
        Self { sigma2, epsilon, decay, floor }
    }

    pub fn std(&self) -> f64 {
        (self.epsilon * self.sigma2).sqrt()
    }

    pub fn decay_once(&mut self) {
        self.epsilon = (self.epsilon * self.decay).max(self.floor);
    }
}

/// Actor head output mapped to a velocity command: `u` in `[0, 1]` scales
/// speed, `phi` in `[-1, 1]` scales heading over `[-pi, pi]`.
pub fn head_to_action(raw: [f64; ACTION_DIM], v_max: f64) -> Action {
    Action::from_polar(raw[0] * v_max, raw[1] * PI)
}

pub fn clip_to_head(raw: [f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
    [raw[0].clamp(0.0, 1.0), raw[1].clamp(-1.0, 1.0)]
}

/// Deterministic actor output, optionally perturbed by exploration noise.
/// Returns the environment command and the (clipped) head-space vector
/// that is stored in replay.
pub fn select_action(
    actor: &Mlp,
    obs: &Observation,
    noise: &mut NoiseSchedule,
    rng: &mut SimRng,
    explore: bool,
    v_max: f64,
) -> Result<(Action, [f64; ACTION_DIM])> {
    if obs.iter().any(|x| !x.is_finite()) {
        return Err(Error::non_finite("observation", "select_action"));
    }
    let out = actor.predict(obs)?;
    let mut raw = [out[0], out[1]];
    if explore {
        let std = noise.std();
        if std > 0.0 {
            let dist = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for r in raw.iter_mut() {
                *r += dist.sample(rng);
            }
        }
        raw = clip_to_head(raw);
        noise.decay_once();
    }
    Ok((head_to_action(raw, v_max), raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub action: [f64; ACTION_DIM],
    pub reward: RewardVector,
    pub next_obs: Observation,
    pub done: bool,
}

/// Fixed-capacity FIFO replay memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    /// Appends, overwriting the oldest transition once full.
    pub fn store(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.is_full() { self.cursor } else { 0 };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// Indices drawn uniformly with replacement; only allowed once full.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
        if !self.is_full() {
            return Err(Error::ReplayNotFull { len: self.len(), capacity: self.capacity });
        }
        Ok((0..batch_size).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample(&self, batch_size: usize, rng: &mut SimRng) -> Result<Vec<&Transition>> {
        Ok(self.sample_indices(batch_size, rng)?.into_iter().map(|i| &self.items[i]).collect())
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub episodes: usize,
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub sigma2: f64,
    pub eps_start: f64,
    pub eps_decay: f64,
    pub eps_floor: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Factor applied to scalarized rewards before they enter critic targets.
    pub reward_scale: f64,
    /// Divide scalarized rewards by their mean magnitude over the replay
    /// memory, measured once when the memory first fills.
    pub normalize_rewards: bool,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            episodes: 1600,
            gamma: 0.99,
            tau: 0.005,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            replay_capacity: 10_000,
            batch_size: 64,
            sigma2: 2.0,
            eps_start: 0.9999,
            eps_decay: 0.9999,
            eps_floor: 0.01,
            actor_hidden: vec![400, 300, 300, 300],
            critic_hidden: vec![400, 300],
            reward_scale: 0.5,
            normalize_rewards: true,
        }
    }
}

impl Hyper {
    /// Settings for short runs on the desk scenario.
    pub fn desk() -> Self {
        Self { episodes: 300, actor_hidden: vec![64, 64], critic_hidden: vec![64, 64], ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |k: &str, m: &str| Err(ConfigError::out_of_range(k, m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", "must lie in [0, 1]");
        }
        if !(self.lr_actor > 0.0 && self.lr_actor.is_finite()) {
            return bad("lr_actor", "must be positive");
        }
        if !(self.lr_critic > 0.0 && self.lr_critic.is_finite()) {
            return bad("lr_critic", "must be positive");
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity", "must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return bad("sigma2", "must be non-negative");
        }
        if !(self.eps_start > 0.0 && self.eps_start <= 1.0) {
            return bad("eps_start", "must lie in (0, 1]");
        }
        if !(self.eps_decay > 0.0 && self.eps_decay <= 1.0) {
            return bad("eps_decay", "must lie in (0, 1]");
        }
        if !(self.eps_floor > 0.0 && self.eps_floor <= self.eps_start) {
            return bad("eps_floor", "must lie in (0, eps_start]");
        }
        if self.actor_hidden.contains(&0) {
            return bad("actor_hidden", "layer widths must be positive");
        }
        if self.critic_hidden.contains(&0) {
            return bad("critic_hidden", "layer widths must be positive");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale", "must be positive");
        }
        Ok(())
    }

    pub fn noise(&self) -> NoiseSchedule {
        NoiseSchedule::new(self.sigma2, self.eps_start, self.eps_decay, self.eps_floor)
    }
}

pub fn actor_head() -> ActivationSpec {
    ActivationSpec::PerUnit(vec![Activation::Sigmoid, Activation::Tanh])
}

pub fn build_actor(hidden: &[usize], rng: &mut SimRng) -> Result<Mlp> {
    let sizes: Vec<usize> = std::iter::once(OBS_DIM).chain(hidden.iter().copied()).chain([ACTION_DIM]).collect();
    let mut acts: Vec<ActivationSpec> = hidden.iter().map(|_| Activation::Relu.into()).collect();
    acts.push(actor_head());
    Mlp::new(&sizes, &acts, rng)
}

/// Critic over the concatenation `obs ++ action`.
pub fn build_critic(hidden: &[usize], rng: &mut SimRng) -> Result<Mlp> {
    let sizes: Vec<usize> = std::iter::once(OBS_DIM + ACTION_DIM).chain(hidden.iter().copied()).chain([1]).collect();
    let mut acts: Vec<ActivationSpec> = hidden.iter().map(|_| Activation::Relu.into()).collect();
    acts.push(Activation::Linear.into());
    Mlp::new(&sizes, &acts, rng)
}

/// Checks that a network has the actor's input/output layout.
pub fn check_actor(actor: &Mlp) -> Result<()> {
    let last = &actor.layers()[actor.layers().len() - 1];
    if actor.input_dim() != OBS_DIM || actor.output_dim() != ACTION_DIM || last.activation != actor_head() {
        return Err(Error::Shape(format!(
            "actor must map {OBS_DIM} inputs to a sigmoid,tanh head of {ACTION_DIM}; checkpoint has sizes {:?} with head `{:?}`",
            actor.sizes(),
            last.activation
        )));
    }
    Ok(())
}

fn critic_input(obs: &Observation, action: &[f64; ACTION_DIM]) -> [f64; OBS_DIM + ACTION_DIM] {
    let mut x = [0.0; OBS_DIM + ACTION_DIM];
    x[..OBS_DIM].copy_from_slice(obs);
    x[OBS_DIM..].copy_from_slice(action);
    x
}

/// `target <- tau * main + (1 - tau) * target`, elementwise.
pub fn soft_update(main: &Mlp, target: &mut Mlp, tau: f64) -> Result<()> {
    if !main.same_shape(target) {
        return Err(Error::Shape(format!("soft update between {:?} and {:?}", main.sizes(), target.sizes())));
    }
    for (t, m) in target.params_mut().zip(main.params()) {
        *t = tau * m + (1.0 - tau) * *t;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentBundle {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: OptimState,
    pub critic_opt: OptimState,
    pub gamma: f64,
    pub tau: f64,
    pub reward_scale: f64,
    /// Divisor of scalarized rewards; 1 until set from the replay memory.
    pub reward_norm: f64,
    #[serde(skip)]
    scratch: Option<(Gradients, Gradients)>,
}

impl AgentBundle {
    pub fn new(hyper: &Hyper, rng: &mut SimRng) -> Result<Self> {
        let actor = build_actor(&hyper.actor_hidden, rng)?;
        let critic = build_critic(&hyper.critic_hidden, rng)?;
        Ok(Self::from_networks(actor, critic, hyper))
    }

    /// Targets start as copies of the main networks.
    pub fn from_networks(actor: Mlp, critic: Mlp, hyper: &Hyper) -> Self {
        Self {
            actor_opt: OptimState::new(&actor, hyper.lr_actor),
            critic_opt: OptimState::new(&critic, hyper.lr_critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            gamma: hyper.gamma,
            tau: hyper.tau,
            reward_scale: hyper.reward_scale,
            reward_norm: 1.0,
            scratch: None,
        }
    }

    /// Bootstrapped targets `scale * r.w + gamma * (1 - done) * Q'(s', mu'(s'))`.
    pub fn critic_targets(&self, batch: &[&Transition], w: &WeightVector) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|t| {
                let r = self.reward_scale * scalarize(&t.reward, w) / self.reward_norm;
                if t.done || self.gamma == 0.0 {
                    return Ok(r);
                }
                let a = self.target_actor.predict(&t.next_obs)?;
                let q = self.target_critic.predict(&critic_input(&t.next_obs, &[a[0], a[1]]))?;
                Ok(r + self.gamma * q[0])
            })
            .collect()
    }

    fn take_scratch(&mut self) -> (Gradients, Gradients) {
        match self.scratch.take() {
            Some((mut a, mut c)) => {
                a.fill_zero();
                c.fill_zero();
                (a, c)
            }
            None => (Gradients::zeros_like(&self.actor), Gradients::zeros_like(&self.critic)),
        }
    }

    /// Mean squared TD error and its gradient with respect to the critic parameters.
    pub fn critic_loss_and_grad(&mut self, batch: &[&Transition], w: &WeightVector) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty mini-batch".into()));
        }
        let targets = self.critic_targets(batch, w)?;
        let mut grads = Gradients::zeros_like(&self.critic);
        let loss = self.accumulate_critic(batch, &targets, &mut grads)?;
        Ok((loss, grads))
    }

    fn accumulate_critic(&mut self, batch: &[&Transition], targets: &[f64], grads: &mut Gradients) -> Result<f64> {
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for (t, y) in batch.iter().zip(targets) {
            let q = self.critic.forward(&critic_input(&t.obs, &t.action))?[0];
            let residual = q - y;
            loss += residual * residual / n;
            self.critic.backward(&[2.0 * residual / n], Some(grads))?;
        }
        Ok(loss)
    }

    /// One optimizer step on the critic; returns the loss before the step.
    pub fn update_critic(&mut self, batch: &[&Transition], w: &WeightVector) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty mini-batch".into()));
        }
        let targets = self.critic_targets(batch, w)?;
        let (actor_scratch, mut grads) = self.take_scratch();
        let loss = self.accumulate_critic(batch, &targets, &mut grads)?;
        if !loss.is_finite() {
            return Err(Error::non_finite("critic loss", format!("value {loss}")));
        }
        self.critic_opt.apply(&mut self.critic, &grads)?;
        self.scratch = Some((actor_scratch, grads));
        Ok(loss)
    }

    /// Mean `Q(s, mu(s))` and the gradient of its negation with respect to
    /// the actor parameters, obtained by backpropagating through the critic.
    pub fn actor_objective_and_grad(&mut self, batch: &[&Transition]) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(&self.actor);
        let obj = self.accumulate_actor(batch, &mut grads)?;
        Ok((obj, grads))
    }

    fn accumulate_actor(&mut self, batch: &[&Transition], grads: &mut Gradients) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty mini-batch".into()));
        }
        let n = batch.len() as f64;
        let mut objective = 0.0;
        for t in batch {
            let a = self.actor.forward(&t.obs)?;
            let q = self.critic.forward(&critic_input(&t.obs, &[a[0], a[1]]))?[0];
            objective += q / n;
            let dq_dx = self.critic.backward(&[1.0], None)?;
            let ascent = [-dq_dx[OBS_DIM] / n, -dq_dx[OBS_DIM + 1] / n];
            self.actor.backward(&ascent, Some(grads))?;
        }
        Ok(objective)
    }

    /// One ascent step on the mean critic value of the actor's actions.
    /// The critic is left unchanged. Returns the objective before the step.
    pub fn update_actor(&mut self, batch: &[&Transition]) -> Result<f64> {
        let (mut grads, critic_scratch) = self.take_scratch();
        let obj = self.accumulate_actor(batch, &mut grads)?;
        if !obj.is_finite() {
            return Err(Error::non_finite("actor objective", format!("value {obj}")));
        }
        self.actor_opt.apply(&mut self.actor, &grads)?;
        self.scratch = Some((grads, critic_scratch));
        Ok(obj)
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        soft_update(&self.actor, &mut self.target_actor, self.tau)?;
        soft_update(&self.critic, &mut self.target_critic, self.tau)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Sum of scalarized rewards over the episode (unscaled).
    pub ret: f64,
    pub r_sum_mbit: f64,
    pub e_harvest_uj: f64,
    pub e_consume_j: f64,
    /// Mean critic loss over this episode's updates; 0 without updates.
    pub critic_loss: f64,
    pub actor_obj: f64,
    pub epsilon: f64,
    pub updates: u64,
}

impl EpisodeLog {
    pub const CSV_HEADER: &'static str = "episode,return,r_sum_mbit,e_harvest_uJ,e_consume_J,critic_loss,actor_obj,epsilon";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.episode,
            self.ret,
            self.r_sum_mbit,
            self.e_harvest_uj,
            self.e_consume_j,
            self.critic_loss,
            self.actor_obj,
            self.epsilon
        )
    }
}

/// Complete training state; serializable so that runs can be resumed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trainer {
    pub env_config: EnvConfig,
    pub hyper: Hyper,
    pub weights: WeightVector,
    pub agent: AgentBundle,
    pub replay: ReplayBuffer,
    pub noise: NoiseSchedule,
    rng: SimRng,
    /// Episodes completed so far.
    pub episode: usize,
    pub total_updates: u64,
}

impl Trainer {
    pub fn new(env_config: EnvConfig, hyper: Hyper, weights: WeightVector, seed: u64) -> Result<Self> {
        env_config.validate()?;
        hyper.validate()?;
        let mut rng = SimRng::seed_from_u64(seed);
        let agent = AgentBundle::new(&hyper, &mut rng)?;
        Ok(Self {
            replay: ReplayBuffer::new(hyper.replay_capacity),
            noise: hyper.noise(),
            env_config,
            hyper,
            weights,
            agent,
            rng,
            episode: 0,
            total_updates: 0,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.hyper.episodes
    }

    /// Runs one full episode, training once per step after the replay
    /// memory has filled.
    pub fn run_episode(&mut self) -> Result<EpisodeLog> {
        let episode = self.episode + 1;
        let env_seed: u64 = self.rng.random();
        let (mut env, mut obs) = Env::reset(self.env_config.clone(), env_seed)?;
        let v_max = self.env_config.v_max;
        let (mut ret, mut loss_sum, mut obj_sum, mut updates) = (0.0, 0.0, 0.0, 0u64);
        loop {
            let (action, raw) = select_action(&self.agent.actor, &obs, &mut self.noise, &mut self.rng, true, v_max)?;
            let out = env.step(action)?;
            ret += scalarize(&out.reward, &self.weights);
            self.replay.store(Transition { obs, action: raw, reward: out.reward, next_obs: out.observation, done: out.done });
            obs = out.observation;

            if self.replay.is_full() {
                if self.total_updates + updates == 0 && self.hyper.normalize_rewards {
                    self.agent.reward_norm = mean_abs_reward(&self.replay, &self.weights);
                }
                let context = |e: Error| annotate(e, episode, env.state().steps);
                let idx = self.replay.sample_indices(self.hyper.batch_size, &mut self.rng)?;
                let batch: Vec<&Transition> = idx.iter().map(|i| &self.replay.items[*i]).collect();
                loss_sum += self.agent.update_critic(&batch, &self.weights).map_err(context)?;
                obj_sum += self.agent.update_actor(&batch).map_err(context)?;
                self.agent.soft_update_targets()?;
                updates += 1;
            }
            if out.done {
                break;
            }
        }
        self.episode = episode;
        self.total_updates += updates;
        let m = env.episode_metrics()?;
        let per_update = |s: f64| if updates == 0 { 0.0 } else { s / updates as f64 };
        Ok(EpisodeLog {
            episode,
            ret,
            r_sum_mbit: m.r_sum / 1e6,
            e_harvest_uj: m.e_harvest * 1e6,
            e_consume_j: m.e_consume,
            critic_loss: per_update(loss_sum),
            actor_obj: per_update(obj_sum),
            epsilon: self.noise.epsilon,
            updates,
        })
    }

    /// Runs the remaining episodes, calling `on_episode` after each.
    pub fn run(&mut self, mut on_episode: impl FnMut(&Trainer, &EpisodeLog) -> Result<()>) -> Result<Vec<EpisodeLog>> {
        let mut logs = Vec::new();
        while !self.is_finished() {
            let log = self.run_episode()?;
            on_episode(self, &log)?;
            logs.push(log);
        }
        Ok(logs)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::InvalidArgument(format!("serializing trainer: {e}")))
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

/// Mean magnitude of scalarized rewards in the replay memory, or 1 when
/// that is zero or not finite.
pub fn mean_abs_reward(replay: &ReplayBuffer, w: &WeightVector) -> f64 {
    let n = replay.len().max(1) as f64;
    let m = replay.iter().map(|t| scalarize(&t.reward, w).abs()).sum::<f64>() / n;
    if m.is_finite() && m > 1e-12 {
        m
    } else {
        1.0
    }
}

fn annotate(e: Error, episode: usize, step: u64) -> Error {
    match e {
        Error::NonFinite { what, context } => {
            Error::NonFinite { what, context: format!("{context}; episode {episode}, step {step}") }
        }
        other => other,
    }
}

/// Convenience wrapper: trains from scratch and returns the log and the trainer.
pub fn train(env_config: &EnvConfig, hyper: &Hyper, w: WeightVector, seed: u64) -> Result<(Vec<EpisodeLog>, Trainer)> {
    let mut trainer = Trainer::new(env_config.clone(), hyper.clone(), w, seed)?;
    let logs = trainer.run(|_, _| Ok(()))?;
    Ok((logs, trainer))
}

/// Noise-free evaluation results of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub episode: usize,
    pub avg_rate_mbps: f64,
    pub avg_power_w: f64,
    pub harvested_uj: f64,
    pub hovers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EvalEpisode>,
    pub avg_rate_mbps: MeanStd,
    pub avg_power_w: MeanStd,
    pub harvested_uj: MeanStd,
    pub hovers: MeanStd,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "episode,avg_rate_mbps,avg_power_w,harvested_uJ,hovers";

    /// Per-episode rows followed by `mean` and `std` summary rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for e in &self.episodes {
            s.push_str(&format!("{},{},{},{},{}\n", e.episode, e.avg_rate_mbps, e.avg_power_w, e.harvested_uj, e.hovers));
        }
        let stats = [self.avg_rate_mbps, self.avg_power_w, self.harvested_uj, self.hovers];
        s.push_str(&format!("mean,{},{},{},{}\n", stats[0].mean, stats[1].mean, stats[2].mean, stats[3].mean));
        s.push_str(&format!("std,{},{},{},{}\n", stats[0].std, stats[1].std, stats[2].std, stats[3].std));
        s
    }
}

/// Average power is consumed energy over the elapsed mission time,
/// which includes any hover overrun past the nominal period.
pub fn evaluate(actor: &Mlp, env_config: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    check_actor(actor)?;
    let mut seeds = SimRng::seed_from_u64(seed);
    let mut noise = NoiseSchedule::new(0.0, 1.0, 1.0, 1.0);
    let mut rows = Vec::with_capacity(episodes);
    for episode in 1..=episodes {
        let (mut env, mut obs) = Env::reset(env_config.clone(), seeds.random())?;
        loop {
            let (action, _) = select_action(actor, &obs, &mut noise, &mut seeds, false, env_config.v_max)?;
            let out = env.step(action)?;
            obs = out.observation;
            if out.done {
                break;
            }
        }
        let m = env.episode_metrics()?;
        rows.push(EvalEpisode {
            episode,
            avg_rate_mbps: m.avg_rate_mbps(),
            avg_power_w: m.e_consume / env.state().clock,
            harvested_uj: m.e_harvest * 1e6,
            hovers: m.hovers,
        });
    }
    Ok(EvalReport {
        avg_rate_mbps: MeanStd::of(rows.iter().map(|r| r.avg_rate_mbps)),
        avg_power_w: MeanStd::of(rows.iter().map(|r| r.avg_power_w)),
        harvested_uj: MeanStd::of(rows.iter().map(|r| r.harvested_uj)),
        hovers: MeanStd::of(rows.iter().map(|r| r.hovers as f64)),
        episodes: rows,
    })
}

/// An actor whose speed head saturates at exactly zero: the UAV never moves.
pub fn stationary_actor(hidden: &[usize]) -> Result<Mlp> {
    let mut actor = build_actor(hidden, &mut SimRng::seed_from_u64(0))?;
    let n = actor.layers().len();
    let last = &mut actor.layers_mut()[n - 1];
    last.weights.iter_mut().for_each(|w| *w = 0.0);
    last.biases[0] = -1e3;
    last.biases[1] = 0.0;
    Ok(actor)
}
