//! Training loop: rollouts with prompt editing, periodic policy updates,
//! head and prompt training, early stopping and evaluation.
//!
//! Epoch order is fixed: roll out one editing episode per training graph,
//! update the policies when the epoch index is a multiple of the update
//! interval, then train the head and prompt parameters on deterministic
//! (greedy, `sigma = 0`) edits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Tape};
use crate::dataset::{few_shot, split_dataset, DatasetSplit};
use crate::error::{Error, Result};
use crate::gnn::{readout, BoundGin, GinModel, Mode, ProjectionHead, Readout};
use crate::graph::{induced_subgraph, Graph};
use crate::metrics::{self, AggregateScores, Scores};
use crate::nn::{Parameters, Sgd, SgdConfig};
use crate::prompt::{PromptKind, PromptParams, PromptState};
use crate::rl::{
    compute_state, continuous_action, continuous_mean, critic_value, discrete_probs, gaussian_log_density, reward, sample_node,
    update_policies, PolicyBundle, PolicyOptimizers, RlConfig, Selection, Transition, UpdateOutcome,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Graph,
    Node,
}

/// Ablation variants. `Full` is the complete method; `HeadOnly` trains only
/// the projection head on the frozen backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Gpf,
    GpfPlus,
    NoEcr,
    HeadOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Full, Variant::Gpf, Variant::GpfPlus, Variant::NoEcr, Variant::HeadOnly];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Gpf => "gpf",
            Variant::GpfPlus => "gpf_plus",
            Variant::NoEcr => "no_ecr",
            Variant::HeadOnly => "head_only",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn prompt_kind(self) -> PromptKind {
        match self {
            Variant::Full | Variant::NoEcr => PromptKind::Attentive,
            Variant::Gpf => PromptKind::Shared,
            Variant::GpfPlus => PromptKind::PerNode,
            Variant::HeadOnly => PromptKind::Disabled,
        }
    }

    pub fn uses_editing(self) -> bool {
        self != Variant::HeadOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub variant: Variant,
    pub epochs: usize,
    /// Graphs per head/prompt gradient step.
    pub batch_size: usize,
    pub lr_head: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Number of basis prompts.
    pub k: usize,
    /// Episode length as a fraction of the node count; `None` picks 1/4 in
    /// full-shot and 1/2 in few-shot runs.
    pub horizon: Option<f64>,
    pub shots: Option<usize>,
    pub patience: usize,
    pub seed: u64,
    pub readout: Readout,
    pub head_layers: usize,
    pub head_hidden: usize,
    /// Ball radius of the induced subgraphs in node tasks.
    pub hops: usize,
    pub split: [f64; 3],
    pub rl: RlConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: Task::Graph,
            variant: Variant::Full,
            epochs: 50,
            batch_size: 16,
            lr_head: 5e-3,
            momentum: 0.9,
            weight_decay: 0.0,
            k: 10,
            horizon: None,
            shots: None,
            patience: 10,
            seed: 0,
            readout: Readout::Mean,
            head_layers: 2,
            head_hidden: 32,
            hops: 2,
            split: [0.7, 0.1, 0.2],
            rl: RlConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.rl.validate()?;
        let bad = |m: &str| Err(Error::Config(format!("train config: {m}")));
        if self.batch_size == 0 || self.k == 0 || self.head_hidden == 0 || self.hops == 0 {
            return bad("batch_size, k, head_hidden and hops must be >= 1");
        }
        if !(1..=3).contains(&self.head_layers) {
            return bad("head_layers must be in 1..=3");
        }
        if !(self.lr_head > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return bad("lr_head > 0, momentum in [0, 1) and weight_decay >= 0 required");
        }
        if let Some(h) = self.horizon {
            if !(h >= 0.0 && h.is_finite()) {
                return bad("horizon fraction must be finite and >= 0");
            }
        }
        if self.shots == Some(0) {
            return bad("shots must be >= 1");
        }
        Ok(())
    }

    pub fn horizon_fraction(&self) -> f64 {
        self.horizon.unwrap_or(if self.shots.is_some() { 0.5 } else { 0.25 })
    }
}

/// Episode length for a graph with `n` nodes: `max(1, round(fraction * n))`,
/// or 0 when the fraction is 0.
pub fn resolve_horizon(fraction: f64, n: usize) -> usize {
    if fraction == 0.0 {
        0
    } else {
        (libm::round(fraction * n as f64) as usize).max(1)
    }
}

/// Labelled graph instances with a train/val/test split. Node tasks turn
/// every node into the induced subgraph around it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub task: Task,
    pub instances: Vec<Graph>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: DatasetSplit,
}

impl TaskData {
    pub fn graph_task(graphs: Vec<Graph>, ratios: [f64; 3], seed: u64) -> Result<Self> {
        let labels = graphs
            .iter()
            .enumerate()
            .map(|(i, g)| g.graph_label.ok_or_else(|| Error::Config(format!("graph {i} has no label"))))
            .collect::<Result<Vec<_>>>()?;
        let split = split_dataset(graphs.len(), ratios, seed)?;
        TaskData::from_parts(Task::Graph, graphs, labels, split)
    }

    pub fn node_task(g: &Graph, hops: usize, ratios: [f64; 3], seed: u64) -> Result<Self> {
        let labels = g
            .node_labels
            .clone()
            .ok_or_else(|| Error::Config("node task needs node labels".into()))?;
        let instances = (0..g.num_nodes())
            .map(|v| induced_subgraph(g, v, hops).map(|s| s.subgraph))
            .collect::<Result<Vec<_>>>()?;
        let split = split_dataset(instances.len(), ratios, seed)?;
        TaskData::from_parts(Task::Node, instances, labels, split)
    }

    pub fn from_parts(task: Task, instances: Vec<Graph>, labels: Vec<usize>, split: DatasetSplit) -> Result<Self> {
        if instances.is_empty() || instances.len() != labels.len() {
            return Err(Error::Config(format!("{} instances with {} labels", instances.len(), labels.len())));
        }
        let d = instances[0].feature_dim();
        if instances.iter().any(|g| g.feature_dim() != d) {
            return Err(Error::Config("instances disagree on feature width".into()));
        }
        for idx in split.train.iter().chain(&split.val).chain(&split.test) {
            if *idx >= instances.len() {
                return Err(Error::Index {
                    index: *idx,
                    len: instances.len(),
                });
            }
        }
        let classes = labels.iter().copied().max().unwrap_or(0).max(1) + 1;
        Ok(TaskData {
            task,
            instances,
            labels,
            classes,
            split,
        })
    }

    pub fn max_nodes(&self) -> usize {
        self.instances.iter().map(Graph::num_nodes).max().unwrap_or(0)
    }

    pub fn feature_dim(&self) -> usize {
        self.instances[0].feature_dim()
    }
}

/// Everything needed to make a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeapModel {
    pub backbone: GinModel,
    pub prompt: PromptParams,
    pub head: ProjectionHead,
    pub policy: Option<PolicyBundle>,
    pub readout: Readout,
    pub theta: f64,
    pub horizon: f64,
}

/// Position of the checkpoint's shuffling RNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        RngState {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: LeapModel,
    pub config: TrainConfig,
    pub rng: RngState,
    /// Epoch whose parameters were kept by early stopping.
    pub epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scores: Scores,
    /// Mean number of distinct nodes edited per deterministic episode.
    pub mean_distinct_edited: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub policy_updates: usize,
    pub episodes: usize,
    pub transitions: usize,
    /// Mean distinct nodes edited per training rollout.
    pub mean_distinct_edited: f64,
    pub mean_rollout_ecr: f64,
    pub backbone_checksum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub val: EvalReport,
    pub test: EvalReport,
    pub curve: Vec<CurvePoint>,
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Metrics,
}

/// Hooks into the training loop for logging and trajectory dumps.
pub trait TrainObserver {
    fn on_transition(&mut self, _epoch: usize, _t: &Transition) {}
    fn on_episode(&mut self, _epoch: usize, _graph: usize, _state: &PromptState) {}
    fn on_policy_update(&mut self, _epoch: usize, _outcome: &UpdateOutcome) {}
    fn on_epoch(&mut self, _point: &CurvePoint) {}
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// Logits of the head on the pooled embeddings of `f(X + p, A)`.
pub fn graph_logits(model: &LeapModel, g: &Graph, prompts: &Tensor) -> Result<Tensor> {
    let state = compute_state(&model.backbone, g.features(), g.adjacency(), prompts)?;
    logits_from_state(model, &state)
}

fn logits_from_state(model: &LeapModel, state: &Tensor) -> Result<Tensor> {
    let pooled = match model.readout {
        Readout::Sum => state.sum_rows(),
        Readout::Mean => state.sum_rows().scale(1.0 / state.rows() as f64),
    };
    model.head.mlp.forward(&pooled)
}

fn cross_entropy(logits: &Tensor, label: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let loss = tape.cross_entropy(l, &[label])?;
    Ok(tape.value(loss).item())
}

/// Downstream loss of one graph under prompts `p`.
pub fn graph_loss(model: &LeapModel, g: &Graph, label: usize, prompts: &Tensor) -> Result<f64> {
    cross_entropy(&graph_logits(model, g, prompts)?, label)
}

/// Result of an editing episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub state: PromptState,
    pub transitions: Vec<Transition>,
}

/// Stochastic rollout of `horizon` edits starting from `p0`. Rewards use the
/// loss before and after each edit plus `lambda_e` times the coverage.
#[allow(clippy::too_many_arguments)]
pub fn rollout_episode(
    model: &LeapModel,
    g: &Graph,
    label: usize,
    graph_index: usize,
    p0: Tensor,
    horizon: usize,
    rl: &RlConfig,
    lambda_e: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    let policy = model
        .policy
        .as_ref()
        .ok_or_else(|| Error::Config("rollout needs a policy".into()))?;
    let mut st = PromptState::new(p0);
    let mut state = compute_state(&model.backbone, g.features(), g.adjacency(), &st.prompts)?;
    let mut loss_prev = cross_entropy(&logits_from_state(model, &state)?, label)?;
    let mut transitions = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let probs = discrete_probs(policy, &state)?;
        let node = sample_node(&probs, Selection::Sample, rng)?;
        let mean = continuous_mean(policy, &state, node)?;
        let action = continuous_action(node, mean, rl.sigma, rl.theta, rng)?;
        let logp_continuous = gaussian_log_density(&action.sample, &action.mean, rl.sigma)?;
        let value = critic_value(policy, &state)?;
        st.edit(node, &action.delta)?;
        let next = compute_state(&model.backbone, g.features(), g.adjacency(), &st.prompts)?;
        let loss_curr = cross_entropy(&logits_from_state(model, &next)?, label)?;
        let r = reward(loss_prev, loss_curr, st.ecr(), lambda_e);
        if !r.is_finite() {
            return Err(Error::Numeric(format!("non-finite reward on graph {graph_index} step {step}")));
        }
        transitions.push(Transition {
            graph: graph_index,
            step,
            state,
            logp_discrete: libm::log(probs[node]),
            logp_continuous,
            action,
            reward: r,
            value,
            ecr: st.ecr(),
        });
        state = next;
        loss_prev = loss_curr;
    }
    Ok(Episode { state: st, transitions })
}

/// Deterministic episode: greedy node choice and `sigma = 0` edits.
pub fn greedy_episode(model: &LeapModel, g: &Graph, p0: Tensor) -> Result<PromptState> {
    let mut st = PromptState::new(p0);
    let Some(policy) = &model.policy else {
        return Ok(st);
    };
    let horizon = resolve_horizon(model.horizon, g.num_nodes());
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..horizon {
        let state = compute_state(&model.backbone, g.features(), g.adjacency(), &st.prompts)?;
        let probs = discrete_probs(policy, &state)?;
        let node = sample_node(&probs, Selection::Greedy, &mut unused)?;
        let mean = continuous_mean(policy, &state, node)?;
        let action = continuous_action(node, mean, 0.0, model.theta, &mut unused)?;
        st.edit(node, &action.delta)?;
    }
    Ok(st)
}

/// Deterministic evaluation on the instances `indices`.
pub fn evaluate_model(model: &LeapModel, data: &TaskData, indices: &[usize]) -> Result<EvalReport> {
    let mut probs = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    let mut losses = Vec::with_capacity(indices.len());
    let mut distinct = Vec::with_capacity(indices.len());
    for &i in indices {
        let g = &data.instances[i];
        let p0 = model.prompt.base_prompts(g.features())?;
        let st = greedy_episode(model, g, p0)?;
        let logits = graph_logits(model, g, &st.prompts)?;
        let loss = cross_entropy(&logits, data.labels[i])?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss on instance {i}")));
        }
        losses.push(loss);
        probs.push(softmax_rows(&logits).into_data());
        labels.push(data.labels[i]);
        distinct.push(st.distinct_edited() as f64);
    }
    // sorted sums keep the result independent of instance order
    let mean_sorted = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let loss = mean_sorted(&mut losses);
    Ok(EvalReport {
        scores: Scores::from_predictions(&probs, &labels, loss),
        mean_distinct_edited: mean_sorted(&mut distinct),
    })
}

pub fn evaluate(checkpoint: &Checkpoint, data: &TaskData, indices: &[usize]) -> Result<EvalReport> {
    evaluate_model(&checkpoint.model, data, indices)
}

fn selection_metric(task: Task, s: &Scores) -> f64 {
    match task {
        Task::Graph => s.roc_auc,
        Task::Node => s.accuracy,
    }
}

fn episode_rng(seed: u64, graph: usize, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ graph as u64);
    rng.set_stream(epoch as u64);
    rng
}

/// One gradient step of head and prompt parameters on a batch, using the
/// given per-instance edit offsets. Returns the batch loss.
fn head_step(
    model: &mut LeapModel,
    data: &TaskData,
    batch: &[usize],
    offsets: &[Option<Tensor>],
    head_opt: &mut Sgd,
    prompt_opt: &mut Sgd,
) -> Result<f64> {
    let mut tape = Tape::new();
    let backbone: BoundGin<'_> = model.backbone.bind(&mut tape);
    let head = model.head.mlp.bind(&mut tape, true);
    let prompt = model.prompt.bind(&mut tape);
    let mut losses = Vec::with_capacity(batch.len());
    for (&i, off) in batch.iter().zip(offsets) {
        let g = &data.instances[i];
        let x = tape.constant(g.features().clone());
        let mut input = x;
        if let Some(p) = prompt.prompts(&mut tape, &model.prompt, x)? {
            input = tape.add(input, p)?;
        }
        if let Some(off) = off {
            let c = tape.constant(off.clone());
            input = tape.add(input, c)?;
        }
        let h = backbone.forward::<ChaCha8Rng>(&mut tape, input, g.adjacency(), Mode::Eval, None)?;
        let pooled = readout(&mut tape, h, model.readout)?;
        let logits = head.forward(&mut tape, pooled)?;
        losses.push(tape.cross_entropy(logits, &[data.labels[i]])?);
    }
    let all = tape.concat_rows(&losses)?;
    let loss = tape.mean(all)?;
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    let head_grads = grads.collect(&head.vars());
    let prompt_grads = grads.collect(prompt.vars());
    drop(backbone);
    head_opt.step(model.head.params_mut(), &head_grads)?;
    if !prompt_grads.is_empty() {
        prompt_opt.step(model.prompt.params_mut(), &prompt_grads)?;
    }
    Ok(value)
}

/// Trains prompts, head and (for editing variants) the policies on top of a
/// frozen backbone.
pub fn train_leap(data: &TaskData, backbone: &GinModel, config: &TrainConfig, observer: &mut dyn TrainObserver) -> Result<TrainOutcome> {
    config.validate()?;
    if !backbone.is_frozen() {
        return Err(Error::Config("backbone must be frozen before prompt tuning".into()));
    }
    if backbone.config.in_dim != data.feature_dim() {
        return Err(Error::Config(format!(
            "backbone expects {} features, data has {}",
            backbone.config.in_dim,
            data.feature_dim()
        )));
    }
    let mut train_idx = data.split.train.clone();
    if train_idx.is_empty() {
        return Err(Error::Config("empty train split".into()));
    }
    if let Some(shots) = config.shots {
        train_idx = few_shot(&train_idx, &data.labels, shots.min(train_idx.len()), config.seed)?;
    }
    let checksum = backbone.checksum();
    let variant = config.variant;
    let lambda_e = if variant == Variant::NoEcr { 0.0 } else { config.rl.lambda_e };
    let horizon = config.horizon_fraction();

    let mut init = ChaCha8Rng::seed_from_u64(config.seed);
    let d = data.feature_dim();
    let max_nodes = data.max_nodes();
    let prompt = PromptParams::new(variant.prompt_kind(), config.k, d, max_nodes, &mut init)?;
    let head = ProjectionHead::new(
        backbone.output_dim(),
        config.head_hidden,
        data.classes,
        config.head_layers,
        &mut init,
    )?;
    let policy = if variant.uses_editing() {
        Some(PolicyBundle::new(
            backbone.output_dim(),
            d,
            max_nodes,
            config.rl.hidden,
            config.rl.sigma,
            &mut init,
        )?)
    } else {
        None
    };
    let mut model = LeapModel {
        backbone: backbone.clone(),
        prompt,
        head,
        policy,
        readout: config.readout,
        theta: config.rl.theta,
        horizon,
    };

    let sgd = SgdConfig {
        lr: config.lr_head,
        momentum: config.momentum,
        weight_decay: config.weight_decay,
    };
    let mut head_opt = Sgd::new(sgd);
    let mut prompt_opt = Sgd::new(sgd);
    let mut policy_opt = PolicyOptimizers::new(&config.rl);
    let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle.set_stream(u64::MAX);

    let train0 = evaluate_model(&model, data, &train_idx)?;
    let val0 = evaluate_model(&model, data, &data.split.val)?;
    let first = CurvePoint {
        epoch: 0,
        train_loss: train0.scores.loss,
        val_loss: val0.scores.loss,
        val_metric: selection_metric(data.task, &val0.scores),
    };
    observer.on_epoch(&first);
    let mut curve = vec![first];
    let mut best = (first.val_metric, first.val_loss, model.clone(), 0usize);
    let mut since_best = 0;

    let mut buffer: Vec<Transition> = Vec::new();
    let mut stats = RunStats {
        epochs_run: 0,
        best_epoch: 0,
        policy_updates: 0,
        episodes: 0,
        transitions: 0,
        mean_distinct_edited: 0.0,
        mean_rollout_ecr: 0.0,
        backbone_checksum: checksum,
    };
    let (mut distinct_sum, mut ecr_sum) = (0.0, 0.0);

    for epoch in 1..=config.epochs {
        stats.epochs_run = epoch;
        if model.policy.is_some() {
            for &gi in &train_idx {
                let g = &data.instances[gi];
                let t = resolve_horizon(horizon, g.num_nodes());
                if t == 0 {
                    continue;
                }
                let p0 = model.prompt.base_prompts(g.features())?;
                let mut rng = episode_rng(config.seed, gi, epoch);
                let ep = rollout_episode(&model, g, data.labels[gi], gi, p0, t, &config.rl, lambda_e, &mut rng)?;
                for tr in &ep.transitions {
                    observer.on_transition(epoch, tr);
                }
                observer.on_episode(epoch, gi, &ep.state);
                stats.episodes += 1;
                stats.transitions += ep.transitions.len();
                distinct_sum += ep.state.distinct_edited() as f64;
                ecr_sum += ep.state.ecr();
                buffer.extend(ep.transitions);
            }
            if epoch % config.rl.update_interval == 0 {
                let policy = model.policy.as_mut().expect("editing variant has a policy");
                let outcome = update_policies(policy, &mut policy_opt, &buffer, &config.rl)?;
                observer.on_policy_update(epoch, &outcome);
                stats.policy_updates += 1;
                buffer.clear();
            }
        }

        let mut order = train_idx.clone();
        order.shuffle(&mut shuffle);
        let mut batch_losses = Vec::new();
        for batch in order.chunks(config.batch_size) {
            let mut offsets = Vec::with_capacity(batch.len());
            for &i in batch {
                let g = &data.instances[i];
                if model.policy.is_some() {
                    let p0 = model.prompt.base_prompts(g.features())?;
                    let st = greedy_episode(&model, g, p0.clone())?;
                    offsets.push(Some(st.offsets(&p0)?));
                } else {
                    offsets.push(None);
                }
            }
            let loss = head_step(&mut model, data, batch, &offsets, &mut head_opt, &mut prompt_opt)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss at epoch {epoch}")));
            }
            batch_losses.push(loss * batch.len() as f64);
        }
        batch_losses.sort_by(f64::total_cmp);
        let train_loss = batch_losses.iter().sum::<f64>() / train_idx.len() as f64;

        let val = evaluate_model(&model, data, &data.split.val)?;
        let point = CurvePoint {
            epoch,
            train_loss,
            val_loss: val.scores.loss,
            val_metric: selection_metric(data.task, &val.scores),
        };
        observer.on_epoch(&point);
        curve.push(point);
        let improved = point.val_metric > best.0 || (point.val_metric == best.0 && point.val_loss < best.1);
        if improved {
            best = (point.val_metric, point.val_loss, model.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (_, _, model, best_epoch) = best;
    if model.backbone.checksum() != checksum {
        return Err(Error::Numeric("frozen backbone changed during training".into()));
    }
    stats.best_epoch = best_epoch;
    if stats.episodes > 0 {
        stats.mean_distinct_edited = distinct_sum / stats.episodes as f64;
        stats.mean_rollout_ecr = ecr_sum / stats.episodes as f64;
    }
    let val = evaluate_model(&model, data, &data.split.val)?;
    let test = evaluate_model(&model, data, &data.split.test)?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            config: config.clone(),
            rng: RngState::capture(config.seed, &shuffle),
            epoch: best_epoch,
        },
        metrics: Metrics { val, test, curve, stats },
    })
}

/// [`train_leap`] with the variant overridden.
pub fn ablation_run(variant: Variant, data: &TaskData, backbone: &GinModel, config: &TrainConfig) -> Result<TrainOutcome> {
    let config = TrainConfig { variant, ..config.clone() };
    train_leap(data, backbone, &config, &mut NoopObserver)
}

/// Runs every seed and aggregates the test scores.
pub fn seed_sweep(data: &TaskData, backbone: &GinModel, config: &TrainConfig, seeds: &[u64]) -> Result<(Vec<Metrics>, AggregateScores)> {
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = TrainConfig { seed, ..config.clone() };
        runs.push(train_leap(data, backbone, &cfg, &mut NoopObserver)?.metrics);
    }
    let scores: Vec<Scores> = runs.iter().map(|m| m.test.scores).collect();
    Ok((runs, metrics::seed_sweep(&scores)))
}
