//! Flat TOML run configuration.
//!
//! Every key is optional. Unknown keys are rejected. `--set key=value`
//! overrides are applied on top of the file before validation; values are
//! read as TOML (`lr_head=0.01`, `variants=["full","gpf"]`) and fall back to
//! a bare string (`variant=gpf`).

use std::path::{Path, PathBuf};

use leap_core::dataset::{GeneratorSpec, NodeGeneratorSpec};
use leap_core::gnn::{GinConfig, PretrainConfig, Readout};
use leap_core::rl::RlConfig;
use leap_core::trainer::{Task, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "LEAP_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest; the built-in generator is used when absent.
    pub dataset: Option<String>,
    /// Pretrained backbone weights; pretrained in-process when absent.
    pub backbone: Option<String>,
    /// Where outputs go. Not echoed into records: it names a location, not
    /// an input.
    #[serde(skip_serializing)]
    pub out_dir: Option<String>,
    pub trajectory_dump: bool,

    pub task: Task,
    pub variant: Variant,
    pub variants: Vec<Variant>,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_head: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub k: usize,
    pub horizon: Option<f64>,
    pub shots: Option<usize>,
    pub patience: usize,
    pub readout: Readout,
    pub head_layers: usize,
    pub head_hidden: usize,
    pub hops: usize,
    pub split: [f64; 3],

    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub beta_d: f64,
    pub beta_c: f64,
    pub theta: f64,
    pub lambda_e: f64,
    pub sigma: f64,
    pub lr_policy: f64,
    pub policy_momentum: f64,
    /// Defaults to 3 for graph tasks and 4 for node tasks.
    pub update_interval: Option<usize>,
    pub minibatch: usize,
    pub policy_hidden: usize,
    pub max_grad_norm: f64,

    pub gin_hidden: usize,
    pub gin_layers: usize,
    pub gin_epsilon: f64,
    pub gin_dropout: f64,
    pub gin_norm: bool,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_momentum: f64,
    pub mask_ratio: f64,
    pub pretrain_seed: u64,

    pub gen_seed: u64,
    pub gen_classes: usize,
    pub gen_graphs_per_class: usize,
    pub gen_min_nodes: usize,
    pub gen_max_nodes: usize,
    pub gen_feature_dim: usize,
    pub gen_p_in: f64,
    pub gen_p_out: f64,
    pub gen_feature_shift: f64,
    pub gen_feature_noise: f64,
    pub node_classes: usize,
    pub node_per_class: usize,
    pub node_p_in: f64,
    pub node_p_out: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let rl = RlConfig::default();
        let gin = GinConfig::default();
        let pre = PretrainConfig::default();
        let gen = GeneratorSpec::default();
        let node = NodeGeneratorSpec::default();
        RunConfig {
            dataset: None,
            backbone: None,
            out_dir: None,
            trajectory_dump: false,
            task: t.task,
            variant: t.variant,
            variants: Variant::ALL.to_vec(),
            seed: t.seed,
            seeds: vec![1, 2, 3, 4, 5],
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr_head: t.lr_head,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            k: t.k,
            horizon: t.horizon,
            shots: t.shots,
            patience: t.patience,
            readout: t.readout,
            head_layers: t.head_layers,
            head_hidden: t.head_hidden,
            hops: t.hops,
            split: t.split,
            gamma: rl.gamma,
            gae_lambda: rl.gae_lambda,
            clip: rl.clip,
            beta_d: rl.beta_d,
            beta_c: rl.beta_c,
            theta: rl.theta,
            lambda_e: rl.lambda_e,
            sigma: rl.sigma,
            lr_policy: rl.lr_policy,
            policy_momentum: rl.momentum,
            update_interval: None,
            minibatch: rl.minibatch,
            policy_hidden: rl.hidden,
            max_grad_norm: rl.max_grad_norm,
            gin_hidden: gin.hidden,
            gin_layers: gin.layers,
            gin_epsilon: gin.epsilon,
            gin_dropout: gin.dropout,
            gin_norm: gin.norm,
            pretrain_epochs: pre.epochs,
            pretrain_lr: pre.lr,
            pretrain_momentum: pre.momentum,
            mask_ratio: pre.mask_ratio,
            pretrain_seed: 0,
            gen_seed: 0,
            gen_classes: gen.classes,
            gen_graphs_per_class: gen.graphs_per_class,
            gen_min_nodes: gen.min_nodes,
            gen_max_nodes: gen.max_nodes,
            gen_feature_dim: gen.feature_dim,
            gen_p_in: gen.p_in,
            gen_p_out: gen.p_out,
            gen_feature_shift: gen.feature_shift,
            gen_feature_noise: gen.feature_noise,
            node_classes: node.classes,
            node_per_class: node.nodes_per_class,
            node_p_in: node.p_in,
            node_p_out: node.p_out,
        }
    }
}

/// Parses one `key=value` override into a TOML value.
fn parse_override(raw: &str) -> CliResult<(String, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{raw}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Usage(format!("override `{raw}` has an empty key")));
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key.to_string(), parsed))
}

impl RunConfig {
    /// Reads `path` (when given), applies overrides, validates and resolves
    /// task-dependent defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for raw in overrides {
            let (k, v) = parse_override(raw)?;
            table.insert(k, v);
        }
        let cfg = RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.resolve()
    }

    /// Fills task-dependent defaults and validates every derived config.
    pub fn resolve(mut self) -> CliResult<Self> {
        if self.update_interval.is_none() {
            self.update_interval = Some(match self.task {
                Task::Graph => 3,
                Task::Node => 4,
            });
        }
        if self.horizon.is_none() {
            self.horizon = Some(self.train_config().horizon_fraction());
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        if self.variants.is_empty() {
            return Err(CliError::Config("variants must not be empty".into()));
        }
        self.train_config().validate()?;
        self.gin_config(1).validate()?;
        if !(0.0..=1.0).contains(&self.mask_ratio) || !(self.pretrain_lr > 0.0) {
            return Err(CliError::Config("mask_ratio must be in [0, 1] and pretrain_lr > 0".into()));
        }
        if self.dataset.is_none() {
            match self.task {
                Task::Graph => self.generator_spec().validate()?,
                Task::Node => {
                    if self.node_classes < 2 || self.node_per_class == 0 {
                        return Err(CliError::Config("node_classes >= 2 and node_per_class >= 1 required".into()));
                    }
                }
            }
        }
        Ok(self)
    }

    pub fn rl_config(&self) -> RlConfig {
        RlConfig {
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            clip: self.clip,
            beta_d: self.beta_d,
            beta_c: self.beta_c,
            theta: self.theta,
            lambda_e: self.lambda_e,
            sigma: self.sigma,
            lr_policy: self.lr_policy,
            momentum: self.policy_momentum,
            update_interval: self.update_interval.unwrap_or(3),
            minibatch: self.minibatch,
            hidden: self.policy_hidden,
            max_grad_norm: self.max_grad_norm,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            task: self.task,
            variant: self.variant,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr_head: self.lr_head,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            k: self.k,
            horizon: self.horizon,
            shots: self.shots,
            patience: self.patience,
            seed: self.seed,
            readout: self.readout,
            head_layers: self.head_layers,
            head_hidden: self.head_hidden,
            hops: self.hops,
            split: self.split,
            rl: self.rl_config(),
        }
    }

    pub fn gin_config(&self, in_dim: usize) -> GinConfig {
        GinConfig {
            in_dim,
            hidden: self.gin_hidden,
            layers: self.gin_layers,
            epsilon: self.gin_epsilon,
            dropout: self.gin_dropout,
            norm: self.gin_norm,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.pretrain_epochs,
            lr: self.pretrain_lr,
            momentum: self.pretrain_momentum,
            mask_ratio: self.mask_ratio,
        }
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        GeneratorSpec {
            classes: self.gen_classes,
            graphs_per_class: self.gen_graphs_per_class,
            min_nodes: self.gen_min_nodes,
            max_nodes: self.gen_max_nodes,
            feature_dim: self.gen_feature_dim,
            p_in: self.gen_p_in,
            p_out: self.gen_p_out,
            feature_shift: self.gen_feature_shift,
            feature_noise: self.gen_feature_noise,
        }
    }

    pub fn node_generator_spec(&self) -> NodeGeneratorSpec {
        NodeGeneratorSpec {
            classes: self.node_classes,
            nodes_per_class: self.node_per_class,
            feature_dim: self.gen_feature_dim,
            p_in: self.node_p_in,
            p_out: self.node_p_out,
            feature_shift: self.gen_feature_shift,
            feature_noise: self.gen_feature_noise,
        }
    }

    /// `flag` > `LEAP_OUT_DIR` > `out_dir` key > `default`.
    pub fn output_dir(&self, flag: Option<&Path>, default: &str) -> PathBuf {
        if let Some(f) = flag {
            return f.to_path_buf();
        }
        if let Some(env) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(env);
        }
        self.out_dir.as_deref().map_or_else(|| PathBuf::from(default), PathBuf::from)
    }

    /// The resolved config as JSON, for embedding in output records.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
