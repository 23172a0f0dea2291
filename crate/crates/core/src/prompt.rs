//! Node-feature prompts: the k-basis attentive prompt, the shared and
//! per-node variants used in ablations, and the per-episode edit state.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::tensor::Tensor;

fn small_uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-0.01..=0.01))
}

/// `k` basis prompts `p^b_j` and their attention projections `a_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBasis {
    pub basis: Tensor,
    pub projections: Tensor,
}

impl PromptBasis {
    pub fn new<R: Rng + ?Sized>(k: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::Config(format!(
                "prompt basis needs k >= 1 and dim >= 1, got k={k} dim={dim}"
            )));
        }
        Ok(PromptBasis {
            basis: small_uniform(rng, k, dim),
            projections: small_uniform(rng, k, dim),
        })
    }

    pub fn from_parts(basis: Tensor, projections: Tensor) -> Result<Self> {
        basis.same_shape(&projections, "prompt_basis")?;
        if basis.rows() == 0 || basis.cols() == 0 {
            return Err(Error::Config("prompt basis needs k >= 1".into()));
        }
        if !basis.is_finite() || !projections.is_finite() {
            return Err(Error::Numeric("non-finite prompt basis".into()));
        }
        Ok(PromptBasis { basis, projections })
    }

    pub fn k(&self) -> usize {
        self.basis.rows()
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }
}

impl Parameters for PromptBasis {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.basis, &self.projections]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.basis, &mut self.projections]
    }
}

fn check_dim(x: &Tensor, basis: &PromptBasis) -> Result<()> {
    if x.cols() != basis.dim() {
        return Err(Error::Shape {
            op: "attentive_prompts",
            lhs: x.shape(),
            rhs: basis.basis.shape(),
        });
    }
    Ok(())
}

/// `alpha_ij = softmax_j(a_j . x_i)`, an `N x k` matrix.
pub fn attention_weights(x: &Tensor, basis: &PromptBasis) -> Result<Tensor> {
    check_dim(x, basis)?;
    Ok(softmax_rows(&x.matmul(&basis.projections.transpose())?))
}

/// `p_i = sum_j alpha_ij p^b_j` for every node.
pub fn attentive_prompts(x: &Tensor, basis: &PromptBasis) -> Result<Tensor> {
    attention_weights(x, basis)?.matmul(&basis.basis)
}

/// Taped form of [`attentive_prompts`].
pub fn attentive_prompts_tape(tape: &mut Tape, x: Var, basis: Var, projections: Var) -> Result<Var> {
    let pt = tape.transpose(projections)?;
    let logits = tape.matmul(x, pt)?;
    let alpha = tape.row_softmax(logits)?;
    tape.matmul(alpha, basis)
}

/// `X* = X + p`.
pub fn apply_prompt(x: &Tensor, prompts: &Tensor) -> Result<Tensor> {
    x.add(prompts)
}

/// Fraction of nodes edited at least once.
pub fn ecr(counts: &[usize]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    counts.iter().filter(|c| **c != 0).count() as f64 / counts.len() as f64
}

/// Prompts `p^t` of one graph during an editing episode, with per-node edit
/// counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptState {
    pub prompts: Tensor,
    pub counts: Vec<usize>,
    pub step: usize,
}

impl PromptState {
    pub fn new(prompts: Tensor) -> Self {
        PromptState {
            counts: vec![0; prompts.rows()],
            prompts,
            step: 0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.prompts.rows()
    }

    /// `p_a <- p_a + f_a`.
    pub fn edit(&mut self, node: usize, delta: &[f64]) -> Result<()> {
        if node >= self.num_nodes() {
            return Err(Error::Index {
                index: node,
                len: self.num_nodes(),
            });
        }
        if delta.len() != self.prompts.cols() {
            return Err(Error::Shape {
                op: "edit",
                lhs: (1, delta.len()),
                rhs: (1, self.prompts.cols()),
            });
        }
        for (p, d) in self.prompts.row_mut(node).iter_mut().zip(delta) {
            *p += d;
        }
        self.counts[node] += 1;
        self.step += 1;
        Ok(())
    }

    pub fn ecr(&self) -> f64 {
        ecr(&self.counts)
    }

    pub fn distinct_edited(&self) -> usize {
        self.counts.iter().filter(|c| **c != 0).count()
    }

    /// Sum of all edits applied so far, `p^t - p^0`.
    pub fn offsets(&self, initial: &Tensor) -> Result<Tensor> {
        self.prompts.sub(initial)
    }
}

/// Which prompt parameterization a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    /// k-basis attentive prompt.
    Attentive,
    /// One vector shared by every node.
    Shared,
    /// An independent vector per node position.
    PerNode,
    /// No prompt at all.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PromptParams {
    Attentive(PromptBasis),
    Shared(Tensor),
    PerNode(Tensor),
    Disabled { dim: usize },
}

impl PromptParams {
    /// `max_nodes` bounds the graphs a per-node prompt can serve.
    pub fn new<R: Rng + ?Sized>(kind: PromptKind, k: usize, dim: usize, max_nodes: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("prompt dim must be >= 1".into()));
        }
        Ok(match kind {
            PromptKind::Attentive => PromptParams::Attentive(PromptBasis::new(k, dim, rng)?),
            PromptKind::Shared => PromptParams::Shared(small_uniform(rng, 1, dim)),
            PromptKind::PerNode => {
                if max_nodes == 0 {
                    return Err(Error::Config("per-node prompt needs max_nodes >= 1".into()));
                }
                PromptParams::PerNode(small_uniform(rng, max_nodes, dim))
            }
            PromptKind::Disabled => PromptParams::Disabled { dim },
        })
    }

    pub fn kind(&self) -> PromptKind {
        match self {
            PromptParams::Attentive(_) => PromptKind::Attentive,
            PromptParams::Shared(_) => PromptKind::Shared,
            PromptParams::PerNode(_) => PromptKind::PerNode,
            PromptParams::Disabled { .. } => PromptKind::Disabled,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PromptParams::Attentive(b) => b.dim(),
            PromptParams::Shared(t) | PromptParams::PerNode(t) => t.cols(),
            PromptParams::Disabled { dim } => *dim,
        }
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::Shape {
                op: "prompt",
                lhs: x.shape(),
                rhs: (1, self.dim()),
            });
        }
        if let PromptParams::PerNode(t) = self {
            if x.rows() > t.rows() {
                return Err(Error::Index {
                    index: x.rows() - 1,
                    len: t.rows(),
                });
            }
        }
        Ok(())
    }

    /// Basic prompt matrix `p^0` for features `x`.
    pub fn base_prompts(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let n = x.rows();
        match self {
            PromptParams::Attentive(b) => attentive_prompts(x, b),
            PromptParams::Shared(t) => t.select_rows(&vec![0; n]),
            PromptParams::PerNode(t) => t.select_rows(&(0..n).collect::<Vec<_>>()),
            PromptParams::Disabled { dim } => Ok(Tensor::zeros(n, *dim)),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundPrompt {
        let vars = self.params().into_iter().map(|t| tape.param(t.clone())).collect();
        BoundPrompt { vars }
    }
}

impl Parameters for PromptParams {
    fn params(&self) -> Vec<&Tensor> {
        match self {
            PromptParams::Attentive(b) => b.params(),
            PromptParams::Shared(t) | PromptParams::PerNode(t) => vec![t],
            PromptParams::Disabled { .. } => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            PromptParams::Attentive(b) => b.params_mut(),
            PromptParams::Shared(t) | PromptParams::PerNode(t) => vec![t],
            PromptParams::Disabled { .. } => Vec::new(),
        }
    }
}

/// [`PromptParams`] registered on a tape.
#[derive(Debug, Clone)]
pub struct BoundPrompt {
    vars: Vec<Var>,
}

impl BoundPrompt {
    /// Taped `p^0` for the constant features `x`; `None` when prompting is
    /// disabled.
    pub fn prompts(&self, tape: &mut Tape, params: &PromptParams, x: Var) -> Result<Option<Var>> {
        params.check(tape.value(x))?;
        let n = tape.value(x).rows();
        Ok(match params {
            PromptParams::Attentive(_) => Some(attentive_prompts_tape(tape, x, self.vars[0], self.vars[1])?),
            PromptParams::Shared(_) => Some(tape.gather_rows(self.vars[0], &vec![0; n])?),
            PromptParams::PerNode(_) => Some(tape.gather_rows(self.vars[0], &(0..n).collect::<Vec<_>>())?),
            PromptParams::Disabled { .. } => None,
        })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
