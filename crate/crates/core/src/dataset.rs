//! Synthetic graph datasets, splits and few-shot subsampling.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

/// Parameters of the graph-classification generator.
///
/// Even classes draw uniform random graphs, odd classes draw two-block
/// community graphs; the uniform edge probability matches the expected
/// density of the community graph of the same size. Node features are
/// `feature_shift * e_(c mod D)` plus isotropic Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub classes: usize,
    pub graphs_per_class: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub feature_dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_shift: f64,
    pub feature_noise: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            classes: 2,
            graphs_per_class: 100,
            min_nodes: 16,
            max_nodes: 24,
            feature_dim: 8,
            p_in: 0.5,
            p_out: 0.05,
            feature_shift: 0.5,
            feature_noise: 1.0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.classes < 2 {
            return bad("generator needs at least 2 classes");
        }
        if self.graphs_per_class == 0 {
            return bad("generator needs graphs_per_class >= 1");
        }
        if self.feature_dim == 0 {
            return bad("generator needs feature_dim >= 1");
        }
        if self.min_nodes < 2 || self.min_nodes > self.max_nodes {
            return bad("generator needs 2 <= min_nodes <= max_nodes");
        }
        for p in [self.p_in, self.p_out] {
            if !(0.0..=1.0).contains(&p) {
                return bad("edge probabilities must lie in [0, 1]");
            }
        }
        if !(self.feature_noise >= 0.0) || !self.feature_shift.is_finite() {
            return bad("feature noise must be >= 0 and shift finite");
        }
        Ok(())
    }
}

fn gaussian_features(rng: &mut ChaCha8Rng, n: usize, dim: usize, mean_axis: usize, shift: f64, noise: f64) -> Tensor {
    let normal = Normal::new(0.0, noise.max(0.0)).expect("noise validated");
    Tensor::from_fn(n, dim, |_, j| {
        let mean = if j == mean_axis { shift } else { 0.0 };
        mean + if noise > 0.0 { normal.sample(rng) } else { 0.0 }
    })
}

fn two_block_graph(rng: &mut ChaCha8Rng, n: usize, p_in: f64, p_out: f64) -> Vec<(usize, usize)> {
    let half = n / 2;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if (u < half) == (v < half) { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Expected edge density of [`two_block_graph`] on `n` nodes.
fn two_block_density(n: usize, p_in: f64, p_out: f64) -> f64 {
    let half = n / 2;
    let rest = n - half;
    let within = (half * half.saturating_sub(1) + rest * rest.saturating_sub(1)) / 2;
    let across = half * rest;
    let total = n * (n - 1) / 2;
    (within as f64 * p_in + across as f64 * p_out) / total as f64
}

fn uniform_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Generates `classes * graphs_per_class` labelled graphs, grouped by class.
pub fn generate_synthetic_dataset(spec: &GeneratorSpec, seed: u64) -> Result<Vec<Graph>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(spec.classes * spec.graphs_per_class);
    for class in 0..spec.classes {
        for _ in 0..spec.graphs_per_class {
            let n = rng.random_range(spec.min_nodes..=spec.max_nodes);
            let edges = if class % 2 == 1 {
                two_block_graph(&mut rng, n, spec.p_in, spec.p_out)
            } else {
                uniform_graph(&mut rng, n, two_block_density(n, spec.p_in, spec.p_out))
            };
            let x = gaussian_features(
                &mut rng,
                n,
                spec.feature_dim,
                class % spec.feature_dim,
                spec.feature_shift,
                spec.feature_noise,
            );
            graphs.push(Graph::from_edges(n, &edges, x)?.with_graph_label(class));
        }
    }
    Ok(graphs)
}

/// Parameters of the single-graph node-classification generator: a
/// stochastic block model whose blocks are the classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGeneratorSpec {
    pub classes: usize,
    pub nodes_per_class: usize,
    pub feature_dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_shift: f64,
    pub feature_noise: f64,
}

impl Default for NodeGeneratorSpec {
    fn default() -> Self {
        NodeGeneratorSpec {
            classes: 3,
            nodes_per_class: 40,
            feature_dim: 8,
            p_in: 0.08,
            p_out: 0.01,
            feature_shift: 0.5,
            feature_noise: 1.0,
        }
    }
}

pub fn generate_node_graph(spec: &NodeGeneratorSpec, seed: u64) -> Result<Graph> {
    if spec.classes < 2 || spec.nodes_per_class == 0 || spec.feature_dim == 0 {
        return Err(Error::Config(
            "node generator needs >= 2 classes, >= 1 node per class, D >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.classes * spec.nodes_per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / spec.nodes_per_class).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let normal = Normal::new(0.0, spec.feature_noise.max(0.0)).map_err(|e| Error::Config(format!("feature noise: {e}")))?;
    let x = Tensor::from_fn(n, spec.feature_dim, |i, j| {
        let mean = if j == labels[i] % spec.feature_dim {
            spec.feature_shift
        } else {
            0.0
        };
        mean + normal.sample(&mut rng)
    });
    Graph::from_edges(n, &edges, x)?.with_node_labels(labels)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Shuffles `0..len` and cuts it at the rounded ratio boundaries.
pub fn split_dataset(len: usize, ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || libm::fabs(ratios.iter().sum::<f64>() - 1.0) > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be >= 0 and sum to 1")));
    }
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = libm::round(len as f64 * ratios[0]) as usize;
    let n_val = (libm::round(len as f64 * ratios[1]) as usize).min(len - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(DatasetSplit {
        train: idx,
        val,
        test,
        seed,
    })
}

/// Draws `shots` items from `train`, stratified by `labels[item]`.
///
/// Each class gets `shots / C` items (the first `shots % C` classes get one
/// more); classes that run short hand their quota to classes with spare items.
/// The result is sorted.
pub fn few_shot(train: &[usize], labels: &[usize], shots: usize, seed: u64) -> Result<Vec<usize>> {
    if shots > train.len() {
        return Err(Error::Config(format!(
            "{shots} shots requested but the train split has {} items",
            train.len()
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in train {
        let label = *labels.get(i).ok_or(Error::Index {
            index: i,
            len: labels.len(),
        })?;
        by_class.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
    }

    let classes = by_class.len();
    let mut quota: Vec<usize> = (0..classes).map(|c| shots / classes + usize::from(c < shots % classes)).collect();
    let sizes: Vec<usize> = by_class.values().map(|m| m.len()).collect();
    let mut spare: usize = quota.iter().zip(&sizes).map(|(q, s)| q.saturating_sub(*s)).sum();
    for (q, s) in quota.iter_mut().zip(&sizes) {
        *q = (*q).min(*s);
    }
    while spare > 0 {
        let mut moved = false;
        for (q, s) in quota.iter_mut().zip(&sizes) {
            if spare > 0 && *q < *s {
                *q += 1;
                spare -= 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }

    let mut out: Vec<usize> = by_class.values().zip(&quota).flat_map(|(m, q)| m[..*q].iter().copied()).collect();
    out.sort_unstable();
    Ok(out)
}
