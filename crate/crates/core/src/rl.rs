//! Hybrid discrete/continuous PPO: which node to edit and by how much.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Tape, Var};
use crate::error::{Error, Result};
use crate::gnn::GinModel;
use crate::nn::{clip_grad_norm, BoundMlp, Mlp, Parameters, Sgd, SgdConfig};
use crate::prompt::apply_prompt;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub beta_d: f64,
    pub beta_c: f64,
    /// Edit range: every entry of an edit lies in `[-theta, theta]`.
    pub theta: f64,
    /// Weight of the edit-coverage term in the reward.
    pub lambda_e: f64,
    /// Standard deviation of the continuous actor during rollouts.
    pub sigma: f64,
    pub lr_policy: f64,
    pub momentum: f64,
    /// Policies are updated every `update_interval` epochs.
    pub update_interval: usize,
    pub minibatch: usize,
    pub hidden: usize,
    /// Joint gradient norm cap per network and step; 0 disables it.
    #[serde(default = "default_max_grad_norm")]
    pub max_grad_norm: f64,
}

fn default_max_grad_norm() -> f64 {
    0.5
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            beta_d: 0.01,
            beta_c: 0.01,
            theta: 0.5,
            lambda_e: 1e-4,
            sigma: 0.1,
            lr_policy: 5e-4,
            momentum: 0.9,
            update_interval: 3,
            minibatch: 64,
            hidden: 32,
            max_grad_norm: default_max_grad_norm(),
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("rl config: {what}")));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must be in [0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be > 0");
        }
        if !(self.theta > 0.0) || !(self.sigma >= 0.0) || !(self.lambda_e >= 0.0) {
            return bad("theta > 0, sigma >= 0 and lambda_e >= 0 required");
        }
        if self.beta_d < 0.0 || self.beta_c < 0.0 {
            return bad("entropy coefficients must be >= 0");
        }
        if !(self.max_grad_norm >= 0.0) {
            return bad("max_grad_norm must be >= 0");
        }
        if !(self.lr_policy > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("lr_policy > 0 and momentum in [0, 1) required");
        }
        if self.update_interval == 0 || self.minibatch == 0 || self.hidden == 0 {
            return bad("update_interval, minibatch and hidden must be >= 1");
        }
        Ok(())
    }
}

/// Actors and critic. The discrete actor scores every node, the continuous
/// actor proposes a mean edit per node, and the critic reads the whole state
/// zero-padded to `max_nodes` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub discrete: Mlp,
    pub continuous: Mlp,
    pub critic: Mlp,
    pub max_nodes: usize,
    pub sigma: f64,
}

impl PolicyBundle {
    /// `state_dim` is the backbone width, `action_dim` the feature width.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        max_nodes: usize,
        hidden: usize,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 || max_nodes == 0 || hidden == 0 {
            return Err(Error::Config("policy dimensions must be >= 1".into()));
        }
        if !(sigma >= 0.0) {
            return Err(Error::Config(format!("sigma {sigma} must be >= 0")));
        }
        Ok(PolicyBundle {
            discrete: Mlp::new(&[state_dim, hidden, 1], rng),
            continuous: Mlp::new(&[state_dim, hidden, action_dim], rng),
            critic: Mlp::new(&[max_nodes * state_dim, hidden, 1], rng),
            max_nodes,
            sigma,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.discrete.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.continuous.output_dim()
    }
}

/// `s = f(X + p, A)` with the backbone in evaluation mode.
pub fn compute_state(backbone: &GinModel, x: &Tensor, adjacency: &Tensor, prompts: &Tensor) -> Result<Tensor> {
    backbone.forward(&apply_prompt(x, prompts)?, adjacency)
}

fn check_state(bundle: &PolicyBundle, state: &Tensor) -> Result<()> {
    if state.rows() == 0 {
        return Err(Error::EmptyGraph);
    }
    if state.cols() != bundle.state_dim() {
        return Err(Error::Shape {
            op: "policy",
            lhs: state.shape(),
            rhs: (state.rows(), bundle.state_dim()),
        });
    }
    if state.rows() > bundle.max_nodes {
        return Err(Error::Index {
            index: state.rows() - 1,
            len: bundle.max_nodes,
        });
    }
    Ok(())
}

/// `softmax(Enc_d(s))` over nodes.
pub fn discrete_probs(bundle: &PolicyBundle, state: &Tensor) -> Result<Vec<f64>> {
    check_state(bundle, state)?;
    let logits = bundle.discrete.forward(state)?.transpose();
    Ok(softmax_rows(&logits).into_data())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Highest probability, lowest index on ties.
    Greedy,
    Sample,
}

pub fn sample_node<R: Rng + ?Sized>(probs: &[f64], mode: Selection, rng: &mut R) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::EmptyGraph);
    }
    match mode {
        Selection::Greedy => Ok(crate::metrics::argmax(probs)),
        Selection::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return Ok(i);
                }
            }
            // rounding left a sliver above the cumulative sum
            Ok(probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1))
        }
    }
}

/// Row `node` of the continuous encoder output.
pub fn continuous_mean(bundle: &PolicyBundle, state: &Tensor, node: usize) -> Result<Vec<f64>> {
    check_state(bundle, state)?;
    if node >= state.rows() {
        return Err(Error::Index {
            index: node,
            len: state.rows(),
        });
    }
    Ok(bundle.continuous.forward(&state.select_rows(&[node])?)?.into_data())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    pub node: usize,
    pub mean: Vec<f64>,
    /// Gaussian draw before clamping; log-densities are taken here.
    pub sample: Vec<f64>,
    /// The edit actually applied, `clamp(sample, -theta, theta)`.
    pub delta: Vec<f64>,
}

/// Draws `N(mean, sigma^2 I)` and clamps to `[-theta, theta]`. With
/// `sigma = 0` the sample is the mean.
pub fn continuous_action<R: Rng + ?Sized>(node: usize, mean: Vec<f64>, sigma: f64, theta: f64, rng: &mut R) -> Result<HybridAction> {
    let sample: Vec<f64> = if sigma == 0.0 {
        mean.clone()
    } else {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("sigma {sigma}: {e}")))?;
        mean.iter().map(|m| m + normal.sample(rng)).collect()
    };
    let delta = sample.iter().map(|s| s.clamp(-theta, theta)).collect();
    Ok(HybridAction { node, mean, sample, delta })
}

/// Diagonal Gaussian log-density.
pub fn gaussian_log_density(sample: &[f64], mean: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::DegenerateDensity(format!("sigma = {sigma}")));
    }
    let d = sample.len() as f64;
    let sq: f64 = sample.iter().zip(mean).map(|(x, m)| (x - m) * (x - m)).sum();
    Ok(-0.5 * sq / (sigma * sigma) - d * libm::log(sigma) - 0.5 * d * libm::log(2.0 * PI))
}

/// Differential entropy of `N(., sigma^2 I_d)`.
pub fn gaussian_entropy(dim: usize, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::DegenerateDensity(format!("sigma = {sigma}")));
    }
    Ok(dim as f64 * (0.5 * libm::log(2.0 * PI * E) + libm::log(sigma)))
}

pub fn categorical_entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * libm::log(*p)).sum::<f64>()
}

/// `r = lambda_e * ecr + loss_prev - loss_curr`.
pub fn reward(loss_prev: f64, loss_curr: f64, ecr: f64, lambda_e: f64) -> f64 {
    lambda_e * ecr + loss_prev - loss_curr
}

/// `R^t = sum_l gamma^l r^{t+l}`, computed backwards.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Generalized advantage estimates. `values` holds `V(s^t)` for every reward
/// and optionally one trailing bootstrap value; without it the episode is
/// treated as terminal (bootstrap 0).
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    let t_len = rewards.len();
    if values.len() != t_len && values.len() != t_len + 1 {
        return Err(Error::Shape {
            op: "gae",
            lhs: (t_len, 1),
            rhs: (values.len(), 1),
        });
    }
    let value_at = |t: usize| values.get(t).copied().unwrap_or(0.0);
    let mut out = alloc::vec![0.0; t_len];
    let mut acc = 0.0;
    for t in (0..t_len).rev() {
        let delta = rewards[t] + gamma * value_at(t + 1) - values[t];
        acc = delta + gamma * lambda * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// `min(kappa A, clip(kappa, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Zero mean, unit (population) variance; a constant batch maps to zeros.
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let stats = crate::metrics::mean_std(values);
    values
        .iter()
        .map(|v| if stats.std > 1e-12 { (v - stats.mean) / stats.std } else { 0.0 })
        .collect()
}

/// One recorded edit step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Index of the graph in the training list.
    pub graph: usize,
    pub step: usize,
    pub state: Tensor,
    pub action: HybridAction,
    pub logp_discrete: f64,
    pub logp_continuous: f64,
    pub reward: f64,
    pub value: f64,
    pub ecr: f64,
}

/// Critic input: the state padded with zero rows and flattened to one row.
pub fn critic_input(bundle: &PolicyBundle, state: &Tensor) -> Result<Tensor> {
    check_state(bundle, state)?;
    let padded = state.pad_rows(bundle.max_nodes)?;
    padded.reshape(1, bundle.max_nodes * bundle.state_dim())
}

pub fn critic_value(bundle: &PolicyBundle, state: &Tensor) -> Result<f64> {
    Ok(bundle.critic.forward(&critic_input(bundle, state)?)?.item())
}

/// `(1/T) sum (V - R)^2`.
pub fn critic_loss(values: &[f64], returns: &[f64]) -> f64 {
    assert_eq!(values.len(), returns.len());
    if values.is_empty() {
        return 0.0;
    }
    values.iter().zip(returns).map(|(v, r)| (v - r) * (v - r)).sum::<f64>() / values.len() as f64
}

/// Per-sample inputs to the surrogate objectives.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateSample<'a> {
    pub state: &'a Tensor,
    pub action: &'a HybridAction,
    pub logp_old: f64,
    pub advantage: f64,
}

fn clipped_term(tape: &mut Tape, logp_new: Var, logp_old: f64, advantage: f64, clip: f64) -> Result<Var> {
    let old = tape.constant(Tensor::scalar(logp_old));
    let diff = tape.sub(logp_new, old)?;
    let ratio = tape.exp(diff)?;
    let a = tape.constant(Tensor::scalar(advantage));
    let unclipped = tape.mul(ratio, a)?;
    let clipped = tape.clamp(ratio, 1.0 - clip, 1.0 + clip)?;
    let clipped = tape.mul(clipped, a)?;
    tape.minimum(unclipped, clipped)
}

/// Discrete objective: mean clipped surrogate plus `beta_d` times the mean
/// categorical entropy. To be maximized.
pub fn ppo_objective_discrete(tape: &mut Tape, actor: &BoundMlp, batch: &[SurrogateSample<'_>], clip: f64, beta_d: f64) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Config("empty PPO batch".into()));
    }
    let mut terms = Vec::with_capacity(batch.len());
    let mut entropies = Vec::with_capacity(batch.len());
    for s in batch {
        let x = tape.constant(s.state.clone());
        let logits = actor.forward(tape, x)?;
        let row = tape.transpose(logits)?;
        let logp_all = tape.row_log_softmax(row)?;
        let logp = tape.pick(logp_all, &[s.action.node])?;
        terms.push(clipped_term(tape, logp, s.logp_old, s.advantage, clip)?);
        let probs = tape.row_softmax(row)?;
        let plogp = tape.mul(probs, logp_all)?;
        let neg_ent = tape.sum(plogp)?;
        entropies.push(tape.scale(neg_ent, -1.0)?);
    }
    let surr = tape.concat_rows(&terms)?;
    let surr = tape.mean(surr)?;
    let ent = tape.concat_rows(&entropies)?;
    let ent = tape.mean(ent)?;
    let ent = tape.scale(ent, beta_d)?;
    tape.add(surr, ent)
}

/// Continuous objective under `N(Enc_c(s)[a], sigma^2 I)` evaluated at the
/// stored pre-clamp samples, plus `beta_c` times the Gaussian entropy.
pub fn ppo_objective_continuous(
    tape: &mut Tape,
    actor: &BoundMlp,
    batch: &[SurrogateSample<'_>],
    sigma: f64,
    clip: f64,
    beta_c: f64,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Config("empty PPO batch".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::DegenerateDensity(format!("policy update with sigma = {sigma}")));
    }
    let mut terms = Vec::with_capacity(batch.len());
    for s in batch {
        let d = s.action.sample.len() as f64;
        let x = tape.constant(s.state.select_rows(&[s.action.node])?);
        let mean = actor.forward(tape, x)?;
        let sample = tape.constant(Tensor::row_vector(&s.action.sample));
        let diff = tape.sub(sample, mean)?;
        let sq = tape.mul(diff, diff)?;
        let sq = tape.sum(sq)?;
        let scaled = tape.scale(sq, -0.5 / (sigma * sigma))?;
        let norm = tape.constant(Tensor::scalar(-d * libm::log(sigma) - 0.5 * d * libm::log(2.0 * PI)));
        let logp = tape.add(scaled, norm)?;
        terms.push(clipped_term(tape, logp, s.logp_old, s.advantage, clip)?);
    }
    let surr = tape.concat_rows(&terms)?;
    let surr = tape.mean(surr)?;
    let dim = batch[0].action.sample.len();
    let ent = tape.constant(Tensor::scalar(beta_c * gaussian_entropy(dim, sigma)?));
    tape.add(surr, ent)
}

/// Critic MSE against the returns.
pub fn critic_objective(tape: &mut Tape, critic: &BoundMlp, bundle: &PolicyBundle, states: &[&Tensor], returns: &[f64]) -> Result<Var> {
    let mut values = Vec::with_capacity(states.len());
    for s in states {
        let x = tape.constant(critic_input(bundle, s)?);
        values.push(critic.forward(tape, x)?);
    }
    let v = tape.concat_rows(&values)?;
    let target = tape.constant(Tensor::from_vec(returns.len(), 1, returns.to_vec())?);
    tape.mse(v, target)
}

/// SGD state of the three policy networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptimizers {
    pub discrete: Sgd,
    pub continuous: Sgd,
    pub critic: Sgd,
}

impl PolicyOptimizers {
    pub fn new(config: &RlConfig) -> Self {
        let sgd = SgdConfig {
            lr: config.lr_policy,
            momentum: config.momentum,
            weight_decay: 0.0,
        };
        PolicyOptimizers {
            discrete: Sgd::new(sgd),
            continuous: Sgd::new(sgd),
            critic: Sgd::new(sgd),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UpdateOutcome {
    /// No transitions were buffered.
    Skipped,
    Updated {
        transitions: usize,
        discrete_objective: f64,
        continuous_objective: f64,
        critic_loss: f64,
    },
}

/// Per-episode returns and advantages for a buffer ordered by episode. An
/// episode is a maximal run of transitions with the same graph index and
/// increasing step.
pub fn episode_targets(buffer: &[Transition], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut returns = Vec::with_capacity(buffer.len());
    let mut advantages = Vec::with_capacity(buffer.len());
    let mut start = 0;
    while start < buffer.len() {
        let mut end = start + 1;
        while end < buffer.len() && buffer[end].graph == buffer[start].graph && buffer[end].step > buffer[end - 1].step {
            end += 1;
        }
        let rewards: Vec<f64> = buffer[start..end].iter().map(|t| t.reward).collect();
        let values: Vec<f64> = buffer[start..end].iter().map(|t| t.value).collect();
        returns.extend(discounted_returns(&rewards, gamma));
        advantages.extend(gae(&rewards, &values, gamma, lambda)?);
        start = end;
    }
    Ok((returns, advantages))
}

/// One PPO epoch over `buffer` in minibatches: each actor ascends its own
/// clipped objective with standardized advantages and the critic descends
/// its MSE against discounted returns.
pub fn update_policies(
    bundle: &mut PolicyBundle,
    opt: &mut PolicyOptimizers,
    buffer: &[Transition],
    config: &RlConfig,
) -> Result<UpdateOutcome> {
    if buffer.is_empty() {
        return Ok(UpdateOutcome::Skipped);
    }
    if !(bundle.sigma > 0.0) {
        return Err(Error::DegenerateDensity(format!("policy update with sigma = {}", bundle.sigma)));
    }
    let (returns, advantages) = episode_targets(buffer, config.gamma, config.gae_lambda)?;
    let advantages = standardize(&advantages);
    let (mut d_total, mut c_total, mut v_total) = (0.0, 0.0, 0.0);
    for chunk_start in (0..buffer.len()).step_by(config.minibatch) {
        let end = (chunk_start + config.minibatch).min(buffer.len());
        let chunk = &buffer[chunk_start..end];
        let weight = chunk.len() as f64 / buffer.len() as f64;

        let disc: Vec<SurrogateSample<'_>> = chunk
            .iter()
            .zip(&advantages[chunk_start..end])
            .map(|(t, a)| SurrogateSample {
                state: &t.state,
                action: &t.action,
                logp_old: t.logp_discrete,
                advantage: *a,
            })
            .collect();
        let mut tape = Tape::new();
        let actor = bundle.discrete.bind(&mut tape, true);
        let obj = ppo_objective_discrete(&mut tape, &actor, &disc, config.clip, config.beta_d)?;
        d_total += weight * tape.value(obj).item();
        let loss = tape.scale(obj, -1.0)?;
        let mut grads = tape.backward(loss)?.collect(&actor.vars());
        clip_grad_norm(&mut grads, config.max_grad_norm);
        opt.discrete.step(bundle.discrete.params_mut(), &grads)?;

        let cont: Vec<SurrogateSample<'_>> = disc
            .iter()
            .zip(chunk)
            .map(|(s, t)| SurrogateSample {
                logp_old: t.logp_continuous,
                ..*s
            })
            .collect();
        let mut tape = Tape::new();
        let actor = bundle.continuous.bind(&mut tape, true);
        let obj = ppo_objective_continuous(&mut tape, &actor, &cont, bundle.sigma, config.clip, config.beta_c)?;
        c_total += weight * tape.value(obj).item();
        let loss = tape.scale(obj, -1.0)?;
        let mut grads = tape.backward(loss)?.collect(&actor.vars());
        clip_grad_norm(&mut grads, config.max_grad_norm);
        opt.continuous.step(bundle.continuous.params_mut(), &grads)?;

        let mut tape = Tape::new();
        let critic = bundle.critic.bind(&mut tape, true);
        let states: Vec<&Tensor> = chunk.iter().map(|t| &t.state).collect();
        let loss = critic_objective(&mut tape, &critic, bundle, &states, &returns[chunk_start..end])?;
        v_total += weight * tape.value(loss).item();
        let mut grads = tape.backward(loss)?.collect(&critic.vars());
        clip_grad_norm(&mut grads, config.max_grad_norm);
        opt.critic.step(bundle.critic.params_mut(), &grads)?;
    }
    Ok(UpdateOutcome::Updated {
        transitions: buffer.len(),
        discrete_objective: d_total,
        continuous_objective: c_total,
        critic_loss: v_total,
    })
}
