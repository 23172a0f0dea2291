//! Numerical checks that node-feature prompts on a linear GNN can emulate
//! feature edits, structure edits and added components, and that leaving a
//! single node without a prompt breaks this.
//!
//! Component addition is checked after sum readout: the augmented graph has
//! `N + M` rows while the prompted one has `N`, so only pooled outputs can be
//! compared.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{LinearGnn, LinearLayer};
use crate::graph::{diffusion, Graph};
use crate::linalg::{lstsq_min_norm, lu_solve, singular_values};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Manipulation {
    FeatureMod { delta_x: Tensor },
    StructureMod { a_hat: Tensor },
    ComponentAdd { a_c: Tensor, x_c: Tensor },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub prompt: Tensor,
    /// Max-abs gap between the prompted forward pass and the target.
    pub residual: f64,
    pub solvable: bool,
    pub notes: String,
}

pub fn simulate(model: &LinearGnn, g: &Graph, m: &Manipulation) -> Result<EquivalenceReport> {
    match m {
        Manipulation::FeatureMod { delta_x } => simulate_feature_mod(model, g, delta_x),
        Manipulation::StructureMod { a_hat } => simulate_structure_mod(model, g, a_hat),
        Manipulation::ComponentAdd { a_c, x_c } => simulate_component_add(model, g, a_c, x_c),
    }
}

/// Feature edit `X -> X + dX`: the prompt is `dX` itself.
pub fn simulate_feature_mod(model: &LinearGnn, g: &Graph, delta_x: &Tensor) -> Result<EquivalenceReport> {
    g.features().same_shape(delta_x, "feature_mod")?;
    let prompt = delta_x.clone();
    let prompted = model.forward(&g.features().add(&prompt)?, g.adjacency())?;
    let target = model.forward(&g.features().add(delta_x)?, g.adjacency())?;
    Ok(EquivalenceReport {
        prompt,
        residual: prompted.max_abs_diff(&target)?,
        solvable: true,
        notes: String::new(),
    })
}

fn relative_gap(lhs: &Tensor, rhs: &Tensor) -> Result<f64> {
    Ok(lhs.max_abs_diff(rhs)? / (1.0 + rhs.max_abs()))
}

/// Structure edit `A -> A_hat`: solve `S' p = (S'' - S') X` where `S'` and
/// `S''` are the diffusion products under `A` and `A_hat`.
pub fn simulate_structure_mod(model: &LinearGnn, g: &Graph, a_hat: &Tensor) -> Result<EquivalenceReport> {
    g.adjacency().same_shape(a_hat, "structure_mod")?;
    let x = g.features();
    let s1 = model.diffusion_product(g.adjacency())?;
    let s2 = model.diffusion_product(a_hat)?;
    let rhs = s2.sub(&s1)?.matmul(x)?;
    let sv = singular_values(&s1);
    let well_posed = sv.last().copied().unwrap_or(0.0) > 1e-12 * sv.first().copied().unwrap_or(0.0);
    let lu = if well_posed { lu_solve(&s1, &rhs)? } else { None };
    let (prompt, notes) = match lu {
        Some(p) if p.is_finite() => (p, String::new()),
        _ => (
            lstsq_min_norm(&s1, &rhs)?,
            String::from("singular diffusion product; least-squares prompt"),
        ),
    };
    let solvable = relative_gap(&s1.matmul(&prompt)?, &rhs)? <= 1e-9;
    let prompted = model.forward(&x.add(&prompt)?, g.adjacency())?;
    let target = model.forward(x, a_hat)?;
    Ok(EquivalenceReport {
        prompt,
        residual: prompted.max_abs_diff(&target)?,
        solvable,
        notes,
    })
}

fn block_diagonal(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, m) = (a.rows(), b.rows());
    Tensor::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
        (true, true) => a.get(i, j),
        (false, false) => b.get(i - n, j - n),
        _ => 0.0,
    })
}

/// Adds a disconnected component `(A_c, X_c)`. The prompt is the
/// minimum-norm solution of `1^T S' p = 1^T S'_c X_c`, which makes the
/// sum-pooled outputs agree.
pub fn simulate_component_add(model: &LinearGnn, g: &Graph, a_c: &Tensor, x_c: &Tensor) -> Result<EquivalenceReport> {
    let (n, d) = (g.num_nodes(), g.feature_dim());
    if a_c.rows() != x_c.rows() || (x_c.rows() > 0 && x_c.cols() != d) {
        return Err(Error::Shape {
            op: "component_add",
            lhs: a_c.shape(),
            rhs: x_c.shape(),
        });
    }
    if a_c.rows() == 0 {
        return Ok(EquivalenceReport {
            prompt: Tensor::zeros(n, d),
            residual: 0.0,
            solvable: true,
            notes: String::from("empty component"),
        });
    }
    let ones_n = Tensor::filled(1, n, 1.0);
    let ones_m = Tensor::filled(1, a_c.rows(), 1.0);
    let lhs = ones_n.matmul(&model.diffusion_product(g.adjacency())?)?;
    let rhs = ones_m.matmul(&model.diffusion_product(a_c)?)?.matmul(x_c)?;
    let prompt = lstsq_min_norm(&lhs, &rhs)?;
    let solvable = relative_gap(&lhs.matmul(&prompt)?, &rhs)? <= 1e-9;

    let prompted = model.forward(&g.features().add(&prompt)?, g.adjacency())?.sum_rows();
    let aug_a = block_diagonal(g.adjacency(), a_c);
    let aug_x = g.features().vstack(x_c)?;
    let target = model.forward(&aug_x, &aug_a)?.sum_rows();
    Ok(EquivalenceReport {
        prompt,
        residual: prompted.max_abs_diff(&target)?,
        solvable,
        notes: String::from("compared after sum readout"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessityReport {
    /// The only `delta` for which a prompt with row `j` fixed at zero exists.
    pub forced_delta: Tensor,
    /// `-(1/(1+eps)) sum_k dS_jk X_k`; equals `forced_delta` when `j` has no
    /// neighbours in `A`.
    pub isolated_delta: Tensor,
    pub consistent: bool,
    /// Frobenius norm of the least-squares residual of the constrained system.
    pub residual: f64,
    /// `[S^-1 dS]_jj`; the map `delta -> q_j` scales by `1 + m`.
    pub coupling: f64,
}

/// Single-layer witness. The target adds edge `(j, k)` and shifts `x_j` by
/// `delta`, which requires `S p = dS X + (dS + S) e_j delta`. With `p_j = 0`
/// this is solvable only at one `delta`.
pub fn necessity_witness(model: &LinearGnn, g: &Graph, j: usize, k: usize, delta: &Tensor) -> Result<NecessityReport> {
    if model.num_layers() != 1 {
        return Err(Error::Config("necessity witness needs a single-layer model".into()));
    }
    let (n, d) = (g.num_nodes(), g.feature_dim());
    for idx in [j, k] {
        if idx >= n {
            return Err(Error::Index { index: idx, len: n });
        }
    }
    if j == k || g.has_edge(j, k) {
        return Err(Error::InvalidGraph(format!("({j},{k}) must be a non-edge of distinct nodes")));
    }
    if delta.shape() != (1, d) {
        return Err(Error::Shape {
            op: "necessity_witness",
            lhs: delta.shape(),
            rhs: (1, d),
        });
    }
    let eps = model.layers[0].epsilon;
    let s = diffusion(g.adjacency(), eps)?.values;
    let mut ds = Tensor::zeros(n, n);
    ds.set(j, k, 1.0);
    ds.set(k, j, 1.0);
    let x = g.features();

    let ds_x = ds.matmul(x)?;
    let a_term = lu_solve(&s, &ds_x)?.ok_or_else(|| Error::Numeric("diffusion matrix is singular".into()))?;
    let ds_solved = lu_solve(&s, &ds)?.ok_or_else(|| Error::Numeric("diffusion matrix is singular".into()))?;
    let coupling = ds_solved.get(j, j);
    let forced_delta = Tensor::from_fn(1, d, |_, c| -a_term.get(j, c) / (1.0 + coupling));
    let isolated_delta = Tensor::from_fn(1, d, |_, c| -ds_x.get(j, c) / (1.0 + eps));

    // R = dS X + (dS + S) e_j delta
    let col_j = Tensor::from_fn(n, 1, |i, _| ds.get(i, j) + s.get(i, j));
    let r = ds_x.add(&col_j.matmul(delta)?)?;
    let free: Vec<usize> = (0..n).filter(|&i| i != j).collect();
    let s_free = s.transpose().select_rows(&free)?.transpose();
    let p_free = lstsq_min_norm(&s_free, &r)?;
    let residual = s_free.matmul(&p_free)?.sub(&r)?.frobenius_norm();

    Ok(NecessityReport {
        consistent: delta.max_abs_diff(&forced_delta)? <= 1e-9,
        forced_delta,
        isolated_delta,
        residual,
        coupling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub full_row_rank: bool,
    pub min_singular_value: f64,
}

/// Rank from singular values above `1e-10 * sigma_max`.
pub fn row_rank_check(w: &Tensor) -> RankReport {
    let s = singular_values(w);
    let max = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|v| **v > 1e-10 * max && **v > 0.0).count();
    RankReport {
        rank,
        full_row_rank: w.rows() > 0 && rank == w.rows(),
        min_singular_value: if w.rows() > w.cols() {
            0.0
        } else {
            s.last().copied().unwrap_or(0.0)
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    FeatureMod,
    StructureMod,
    ComponentAdd,
    Necessity,
}

/// One randomized check, as emitted by the `verify` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub kind: TrialKind,
    pub nodes: usize,
    pub dim: usize,
    pub layers: usize,
    pub residual: f64,
    pub solvable: bool,
    /// 2-norm condition number of the diffusion product that was solved
    /// (structure edits only).
    pub condition: Option<f64>,
    /// Instances discarded for exceeding [`MAX_TRIAL_CONDITION`].
    pub redraws: usize,
}

/// Structure-edit trials redraw instances whose diffusion product has a
/// condition number above this. The forward check loses about
/// `f64::EPSILON * condition` relative accuracy, so past `1e6` the
/// residual is set by rounding rather than by the construction.
pub const MAX_TRIAL_CONDITION: f64 = 1e6;

fn condition_number(m: &Tensor) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Ranges for random trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpace {
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub min_dim: usize,
    pub max_dim: usize,
    pub max_layers: usize,
    pub min_epsilon: f64,
    pub max_epsilon: f64,
    pub edge_prob: f64,
}

impl Default for TrialSpace {
    fn default() -> Self {
        TrialSpace {
            min_nodes: 3,
            max_nodes: 8,
            min_dim: 2,
            max_dim: 6,
            max_layers: 3,
            min_epsilon: 0.2,
            max_epsilon: 1.0,
            edge_prob: 0.4,
        }
    }
}

impl TrialSpace {
    pub fn validate(&self) -> Result<()> {
        if self.min_nodes < 2
            || self.min_nodes > self.max_nodes
            || self.min_dim == 0
            || self.min_dim > self.max_dim
            || self.max_layers == 0
            || !(0.0 <= self.min_epsilon && self.min_epsilon <= self.max_epsilon)
            || !(0.0..=1.0).contains(&self.edge_prob)
        {
            return Err(Error::Config(format!("invalid trial space {self:?}")));
        }
        Ok(())
    }
}

fn uniform_tensor<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_adjacency<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64) -> Tensor {
    let mut a = Tensor::zeros(n, n);
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                a.set(u, v, 1.0);
                a.set(v, u, 1.0);
            }
        }
    }
    a
}

pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize, p: f64) -> Result<Graph> {
    let a = random_adjacency(rng, n, p);
    Graph::new(a, uniform_tensor(rng, n, d))
}

/// Random linear GNN with `layers` layers, input width `d` and hidden widths
/// drawn from the dimension range.
pub fn random_linear_gnn<R: Rng + ?Sized>(rng: &mut R, space: &TrialSpace, d: usize, layers: usize) -> Result<LinearGnn> {
    let mut dims = alloc::vec![d];
    for _ in 0..layers {
        dims.push(rng.random_range(space.min_dim..=space.max_dim));
    }
    let layers = dims
        .windows(2)
        .map(|w| LinearLayer {
            epsilon: rng.random_range(space.min_epsilon..=space.max_epsilon),
            weight: uniform_tensor(rng, w[0], w[1]),
        })
        .collect();
    LinearGnn::new(layers)
}

/// One random sufficiency trial of the given kind. Structure edits redraw
/// the graph and model until the diffusion product is well-conditioned.
pub fn sufficiency_trial<R: Rng + ?Sized>(rng: &mut R, space: &TrialSpace, kind: TrialKind) -> Result<TrialRecord> {
    space.validate()?;
    if kind == TrialKind::Necessity {
        return Err(Error::Config("use necessity_trial".into()));
    }
    for redraws in 0..1000 {
        let n = rng.random_range(space.min_nodes..=space.max_nodes);
        let d = rng.random_range(space.min_dim..=space.max_dim);
        let layers = rng.random_range(1..=space.max_layers);
        let g = random_graph(rng, n, d, space.edge_prob)?;
        let model = random_linear_gnn(rng, space, d, layers)?;
        let mut condition = None;
        let report = match kind {
            TrialKind::FeatureMod => simulate_feature_mod(&model, &g, &uniform_tensor(rng, n, d))?,
            TrialKind::StructureMod => {
                let c = condition_number(&model.diffusion_product(g.adjacency())?);
                if !(c <= MAX_TRIAL_CONDITION) {
                    continue;
                }
                condition = Some(c);
                let a_hat = random_adjacency(rng, n, space.edge_prob);
                simulate_structure_mod(&model, &g, &a_hat)?
            }
            _ => {
                let m = rng.random_range(1..=3);
                let a_c = random_adjacency(rng, m, 0.5);
                let x_c = uniform_tensor(rng, m, d);
                simulate_component_add(&model, &g, &a_c, &x_c)?
            }
        };
        return Ok(TrialRecord {
            kind,
            nodes: n,
            dim: d,
            layers,
            residual: report.residual,
            solvable: report.solvable,
            condition,
            redraws,
        });
    }
    Err(Error::Sampling(format!(
        "no instance with condition <= {MAX_TRIAL_CONDITION:e} in 1000 draws"
    )))
}

/// Outcome of one necessity trial: the residual at the forced value and at a
/// perturbed `delta` with `|delta - delta*|_inf >= 0.1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityTrial {
    pub nodes: usize,
    pub dim: usize,
    pub residual_at_forced: f64,
    pub residual_perturbed: f64,
    pub perturbation: f64,
    pub perturbed_consistent: bool,
}

/// Draws single-layer instances until the diffusion matrix has smallest
/// singular value at least 0.1 and `|1 + m| >= 0.2`, so that an offset of
/// 0.1 in `delta` produces a residual of at least `2e-3`.
pub fn necessity_trial<R: Rng + ?Sized>(rng: &mut R, space: &TrialSpace) -> Result<NecessityTrial> {
    space.validate()?;
    for _ in 0..1000 {
        let n = rng.random_range(space.min_nodes..=space.max_nodes);
        let d = rng.random_range(space.min_dim..=space.max_dim);
        let g = random_graph(rng, n, d, space.edge_prob)?;
        let non_edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (0..n).map(move |v| (u, v)))
            .filter(|&(u, v)| u != v && !g.has_edge(u, v))
            .collect();
        if non_edges.is_empty() {
            continue;
        }
        let (j, k) = non_edges[rng.random_range(0..non_edges.len())];
        let model = random_linear_gnn(rng, space, d, 1)?;
        let s = diffusion(g.adjacency(), model.layers[0].epsilon)?.values;
        if singular_values(&s).last().copied().unwrap_or(0.0) < 0.1 {
            continue;
        }
        let probe = necessity_witness(&model, &g, j, k, &Tensor::zeros(1, d))?;
        if (1.0 + probe.coupling).abs() < 0.2 {
            continue;
        }
        let star = probe.forced_delta;
        let at_star = necessity_witness(&model, &g, j, k, &star)?;
        let mut offset = uniform_tensor(rng, 1, d);
        let c = rng.random_range(0..d);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        offset.set(0, c, sign * rng.random_range(0.1..=1.0));
        let perturbed = necessity_witness(&model, &g, j, k, &star.add(&offset)?)?;
        return Ok(NecessityTrial {
            nodes: n,
            dim: d,
            residual_at_forced: at_star.residual,
            residual_perturbed: perturbed.residual,
            perturbation: offset.max_abs(),
            perturbed_consistent: perturbed.consistent,
        });
    }
    Err(Error::Sampling("no well-conditioned necessity instance in 1000 draws".into()))
}
