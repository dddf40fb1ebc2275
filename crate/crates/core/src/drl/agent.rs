//! DDPG actor/critic pair with target copies and the per-cluster trainer state.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{mlp_gradients, Gradients, Mlp, Objective};
use super::noise::OuNoise;
use super::optim::Adam;
use super::replay::{ReplayBuffer, Transition};
use crate::mimo::Beam;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub capacity: usize,
    pub seed: u64,
    pub ou_theta: f64,
    /// Initial OU volatility, in units of `noise_scale`.
    pub ou_sigma: f64,
    /// Volatility reached by linear decay at the last step.
    pub ou_sigma_final: f64,
    /// Radians per unit of OU noise added to the proto-action.
    pub noise_scale: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            gamma: 0.99,
            tau: 0.005,
            batch_size: 64,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            episodes: 16,
            steps_per_episode: 64,
            capacity: 8192,
            seed: 0,
            ou_theta: 0.15,
            ou_sigma: 0.2,
            ou_sigma_final: 0.02,
            noise_scale: PI,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.capacity == 0 {
            return bad("batch_size and capacity must be positive");
        }
        if self.episodes == 0 || self.steps_per_episode == 0 {
            return bad("episodes and steps_per_episode must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.ou_theta >= 0.0
            && self.ou_sigma >= 0.0
            && self.ou_sigma_final >= 0.0
            && self.noise_scale >= 0.0)
        {
            return bad("OU parameters must be non-negative");
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.episodes * self.steps_per_episode
    }

    /// OU volatility at global step `t`.
    pub fn sigma_at(&self, t: usize) -> f64 {
        let n = self.total_steps();
        if n <= 1 {
            return self.ou_sigma;
        }
        let frac = t.min(n - 1) as f64 / (n - 1) as f64;
        self.ou_sigma + (self.ou_sigma_final - self.ou_sigma) * frac
    }

    /// Spreads a total step budget over episodes of the configured length.
    pub fn with_step_budget(mut self, steps: usize) -> Self {
        self.episodes = steps.div_ceil(self.steps_per_episode).max(1);
        self
    }
}

fn actor_input(state: &[f64]) -> Vec<f64> {
    state.iter().map(|s| s / PI).collect()
}

fn critic_input(state: &[f64], action: &[f64]) -> Vec<f64> {
    state.iter().chain(action).map(|v| v / PI).collect()
}

/// Value and parameter gradient of `mean_i Q(s_i, mu(s_i))` with respect to the actor.
pub fn actor_objective_gradients(
    actor: &Mlp,
    critic: &Mlp,
    states: &[Vec<f64>],
) -> Result<(f64, Gradients)> {
    if states.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let m = actor.output_width();
    if critic.input_width() != 2 * m || actor.input_width() != m {
        return Err(Error::DimensionMismatch {
            expected: 2 * m,
            got: critic.input_width(),
        });
    }
    let b = states.len();
    let mut x = Vec::with_capacity(b * m);
    for s in states {
        if s.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: s.len(),
            });
        }
        x.extend(s.iter().map(|v| v / PI));
    }
    let ac = actor.forward_batch(&x, b);
    let mut ci = Vec::with_capacity(b * 2 * m);
    for (s, mu) in x.chunks_exact(m).zip(ac.output.chunks_exact(m)) {
        ci.extend_from_slice(s);
        ci.extend(mu.iter().map(|v| v / PI));
    }
    let cc = critic.forward_batch(&ci, b);
    let inv = 1.0 / b as f64;
    let value = inv * cc.output.iter().sum::<f64>();
    let dx = critic.backward(&cc, &vec![inv; b], None);
    let dmu: Vec<f64> = dx
        .chunks_exact(2 * m)
        .flat_map(|row| row[m..].iter().map(|g| g / PI))
        .collect();
    let mut grads = Gradients::zeros_like(actor);
    actor.backward(&ac, &dmu, Some(&mut grads));
    Ok((value, grads))
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl Agent {
    pub fn new(num_antennas: usize, cfg: &DdpgConfig, rng: &mut ChaCha8Rng) -> Self {
        let actor = Mlp::actor(num_antennas, rng);
        let critic = Mlp::critic(num_antennas, rng);
        Agent {
            actor_opt: Adam::new(&actor, cfg.actor_lr),
            critic_opt: Adam::new(&critic, cfg.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.actor.output_width()
    }

    /// Deterministic proto-action `mu(s)` in radians.
    pub fn act(&self, state: &[f64]) -> Vec<f64> {
        self.actor.forward_cached(&actor_input(state)).output
    }

    pub fn q_value(&self, state: &[f64], action: &[f64]) -> f64 {
        self.critic
            .forward_cached(&critic_input(state, action))
            .output[0]
    }

    /// One descent step on the temporal-difference loss. Returns the loss before the step.
    pub fn critic_update(&mut self, batch: &[&Transition], gamma: f64) -> Result<f64> {
        let b = batch.len();
        let m = self.num_antennas();
        let mut targets: Vec<Vec<f64>> = batch.iter().map(|t| vec![t.reward]).collect();
        if gamma != 0.0 && b > 0 {
            let next: Vec<f64> = batch
                .iter()
                .flat_map(|t| actor_input(&t.next_state))
                .collect();
            let next_a = self.actor_target.forward_batch(&next, b).output;
            let mut ci = Vec::with_capacity(2 * m * b);
            for (s, a) in next.chunks_exact(m).zip(next_a.chunks_exact(m)) {
                ci.extend_from_slice(s);
                ci.extend(a.iter().map(|v| v / PI));
            }
            let q_next = self.critic_target.forward_batch(&ci, b).output;
            for (y, q) in targets.iter_mut().zip(q_next) {
                y[0] += gamma * q;
            }
        }
        let inputs: Vec<Vec<f64>> = batch
            .iter()
            .map(|t| critic_input(&t.state, &t.action))
            .collect();
        let (loss, grads) = mlp_gradients(&self.critic, Objective::Mse(&targets), &inputs)?;
        self.critic_opt.step(&mut self.critic, &grads);
        Ok(loss)
    }

    /// One ascent step on `mean Q(s, mu(s))`. Returns the objective before the step.
    pub fn actor_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let states: Vec<Vec<f64>> = batch.iter().map(|t| t.state.clone()).collect();
        let (value, mut grads) = actor_objective_gradients(&self.actor, &self.critic, &states)?;
        grads.scale(-1.0);
        self.actor_opt.step(&mut self.actor, &grads);
        Ok(value)
    }

    pub fn soft_update(&mut self, tau: f64) {
        self.actor_target.soft_update(&self.actor, tau);
        self.critic_target.soft_update(&self.critic, tau);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    /// The buffer holds fewer transitions than a batch.
    Skipped { buffered: usize, needed: usize },
    Updated {
        critic_loss: f64,
        actor_objective: f64,
    },
}

#[derive(Debug, Clone)]
pub struct TrainerState {
    /// Current phase vector `s_t`.
    pub state: Vec<f64>,
    /// Largest gain observed so far in this run.
    pub beta: f64,
    pub prev_gain: f64,
    pub best: Option<Beam>,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub noise: OuNoise,
    pub rng: ChaCha8Rng,
}

impl TrainerState {
    pub fn new(num_antennas: usize, cfg: &DdpgConfig) -> Result<Self> {
        cfg.validate()?;
        if num_antennas == 0 {
            return Err(Error::invalid("array needs at least one antenna"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let agent = Agent::new(num_antennas, cfg, &mut rng);
        Ok(TrainerState {
            state: vec![0.0; num_antennas],
            beta: 0.0,
            prev_gain: 0.0,
            best: None,
            agent,
            buffer: ReplayBuffer::new(cfg.capacity),
            noise: OuNoise::new(num_antennas, cfg.ou_theta, cfg.ou_sigma),
            rng,
        })
    }

    /// Samples a batch, steps critic then actor, and soft-updates the targets.
    pub fn ddpg_update(&mut self, cfg: &DdpgConfig) -> Result<UpdateOutcome> {
        if self.buffer.len() < cfg.batch_size {
            return Ok(UpdateOutcome::Skipped {
                buffered: self.buffer.len(),
                needed: cfg.batch_size,
            });
        }
        let batch = self.buffer.sample(cfg.batch_size, &mut self.rng);
        let critic_loss = self.agent.critic_update(&batch, cfg.gamma)?;
        let actor_objective = self.agent.actor_update(&batch)?;
        self.agent.soft_update(cfg.tau);
        Ok(UpdateOutcome::Updated {
            critic_loss,
            actor_objective,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DdpgConfig {
        DdpgConfig {
            batch_size: 4,
            ..DdpgConfig::default()
        }
    }

    fn transition(s: f64, a: f64, r: f64) -> Transition {
        Transition {
            state: vec![s, -s],
            action: vec![a, 0.5 * a],
            reward: r,
            next_state: vec![a, 0.5 * a],
        }
    }

    #[test]
    fn defaults_validate_and_sigma_decays() {
        let c = DdpgConfig::default();
        c.validate().unwrap();
        assert_eq!(c.sigma_at(0), 0.2);
        assert!((c.sigma_at(c.total_steps() - 1) - 0.02).abs() < 1e-12);
        assert!(DdpgConfig { tau: 0.0, ..c }.validate().is_err());
        assert!(DdpgConfig { gamma: 1.5, ..c }.validate().is_err());
        assert_eq!(c.with_step_budget(2000).total_steps(), 2048);
    }

    #[test]
    fn update_skipped_until_batch_available() {
        let c = cfg();
        let mut ts = TrainerState::new(2, &c).unwrap();
        ts.buffer.push(transition(0.1, 0.2, 1.0));
        assert_eq!(
            ts.ddpg_update(&c).unwrap(),
            UpdateOutcome::Skipped {
                buffered: 1,
                needed: 4
            }
        );
    }

    #[test]
    fn tau_one_copies_mains_into_targets() {
        let c = DdpgConfig { tau: 1.0, ..cfg() };
        let mut ts = TrainerState::new(2, &c).unwrap();
        for i in 0..6 {
            ts.buffer
                .push(transition(i as f64 * 0.3, -0.2 * i as f64, 1.0));
        }
        assert!(matches!(
            ts.ddpg_update(&c).unwrap(),
            UpdateOutcome::Updated { .. }
        ));
        assert_eq!(ts.agent.actor_target, ts.agent.actor);
        assert_eq!(ts.agent.critic_target, ts.agent.critic);
    }

    #[test]
    fn soft_update_stays_between_old_and_main() {
        let c = DdpgConfig { tau: 0.3, ..cfg() };
        let mut ts = TrainerState::new(2, &c).unwrap();
        for i in 0..6 {
            ts.buffer
                .push(transition(i as f64 * 0.3, -0.2 * i as f64, -1.0));
        }
        let before = ts.agent.critic_target.clone();
        ts.ddpg_update(&c).unwrap();
        let main = &ts.agent.critic;
        for (i, t) in ts.agent.critic_target.params().enumerate() {
            let (a, b) = (before.param(i), main.param(i));
            assert!(t >= a.min(b) - 1e-15 && t <= a.max(b) + 1e-15);
        }
    }

    #[test]
    fn critic_regresses_to_reward_with_zero_discount() {
        let c = DdpgConfig {
            gamma: 0.0,
            ..cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = Agent::new(2, &c, &mut rng);
        let t = transition(0.4, -1.1, 1.0);
        let batch = vec![&t];
        for _ in 0..3000 {
            agent.critic_update(&batch, 0.0).unwrap();
        }
        let q = agent.q_value(&t.state, &t.action);
        assert!((q - 1.0).abs() < 1e-3, "{q}");
    }

    #[test]
    fn acting_is_deterministic() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let agent = Agent::new(3, &c, &mut rng);
        let s = vec![0.1, -2.0, 3.0];
        assert_eq!(agent.act(&s), agent.act(&s));
    }
}
