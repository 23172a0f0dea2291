//! Undirected attributed graphs, diffusion matrices and induced subgraphs.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An undirected simple graph with dense adjacency and node features.
///
/// The adjacency is symmetric with an all-zero diagonal; self-loops enter
/// message passing only through the `(1 + eps) I` term of [`diffusion`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    adjacency: Tensor,
    features: Tensor,
    pub graph_label: Option<usize>,
    pub node_labels: Option<Vec<usize>>,
}

fn check_adjacency(a: &Tensor) -> Result<()> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::InvalidGraph(format!("adjacency is {}x{}, not square", n, a.cols())));
    }
    for i in 0..n {
        if a.get(i, i) != 0.0 {
            return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
        }
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidGraph(format!("adjacency entry ({i},{j}) = {v} is not binary")));
            }
            if v != a.get(j, i) {
                return Err(Error::InvalidGraph(format!("adjacency not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

impl Graph {
    pub fn new(adjacency: Tensor, features: Tensor) -> Result<Self> {
        check_adjacency(&adjacency)?;
        if adjacency.rows() == 0 {
            return Err(Error::EmptyGraph);
        }
        if features.rows() != adjacency.rows() || features.cols() == 0 {
            return Err(Error::InvalidGraph(format!(
                "features are {}x{} for {} nodes",
                features.rows(),
                features.cols(),
                adjacency.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::InvalidGraph("non-finite feature".into()));
        }
        Ok(Graph {
            adjacency,
            features,
            graph_label: None,
            node_labels: None,
        })
    }

    /// Builds a graph from an undirected edge list.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)], features: Tensor) -> Result<Self> {
        let mut a = Tensor::zeros(num_nodes, num_nodes);
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Index {
                    index: u.max(v),
                    len: num_nodes,
                });
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        Graph::new(a, features)
    }

    pub fn with_graph_label(mut self, label: usize) -> Self {
        self.graph_label = Some(label);
        self
    }

    pub fn with_node_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.num_nodes() {
            return Err(Error::InvalidGraph(format!(
                "{} node labels for {} nodes",
                labels.len(),
                self.num_nodes()
            )));
        }
        self.node_labels = Some(labels);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency.get(u, v) != 0.0
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.row(v).iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, _)| j)
    }

    /// Edges as `(u, v)` with `u < v`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.num_nodes();
        let mut out = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if self.has_edge(u, v) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.sum() as usize / 2
    }

    /// Hop distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: usize) -> Result<Vec<Option<usize>>> {
        let n = self.num_nodes();
        if source >= n {
            return Err(Error::Index { index: source, len: n });
        }
        let mut dist = vec![None; n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for w in self.neighbors(u) {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }
}

/// `S = A + (1 + eps) I`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix {
    pub values: Tensor,
    pub epsilon: f64,
}

pub fn diffusion(adjacency: &Tensor, epsilon: f64) -> Result<DiffusionMatrix> {
    check_adjacency(adjacency)?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("diffusion epsilon {epsilon} must be finite and >= 0")));
    }
    Ok(DiffusionMatrix {
        values: diffusion_unchecked(adjacency, epsilon),
        epsilon,
    })
}

/// `A + (1 + eps) I` without validating `A`.
pub(crate) fn diffusion_unchecked(adjacency: &Tensor, epsilon: f64) -> Tensor {
    let mut s = adjacency.clone();
    for i in 0..s.rows() {
        s.set(i, i, s.get(i, i) + 1.0 + epsilon);
    }
    s
}

/// The `hops`-ball around `center` as a standalone graph.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedSubgraph {
    pub center: usize,
    pub hops: usize,
    pub subgraph: Graph,
    /// `index_map[local] = original`.
    pub index_map: Vec<usize>,
}

impl InducedSubgraph {
    /// Position of the center inside the subgraph.
    pub fn center_local(&self) -> usize {
        self.index_map.iter().position(|&v| v == self.center).unwrap_or(0)
    }
}

/// Nodes within `hops` of `center`, with original features and the original
/// edges among them. Subgraph nodes keep their relative order. When the
/// parent has node labels the subgraph's graph label is the center's label.
pub fn induced_subgraph(g: &Graph, center: usize, hops: usize) -> Result<InducedSubgraph> {
    if hops == 0 {
        return Err(Error::Config("induced subgraph needs hops >= 1".into()));
    }
    let dist = g.bfs_distances(center)?;
    let index_map: Vec<usize> = dist
        .iter()
        .enumerate()
        .filter(|(_, d)| matches!(d, Some(d) if *d <= hops))
        .map(|(i, _)| i)
        .collect();
    let m = index_map.len();
    let adjacency = Tensor::from_fn(m, m, |i, j| g.adjacency.get(index_map[i], index_map[j]));
    let features = g.features.select_rows(&index_map)?;
    let mut subgraph = Graph::new(adjacency, features)?;
    if let Some(labels) = &g.node_labels {
        let local: Vec<usize> = index_map.iter().map(|&i| labels[i]).collect();
        subgraph = subgraph.with_node_labels(local)?.with_graph_label(labels[center]);
    } else {
        subgraph.graph_label = g.graph_label;
    }
    Ok(InducedSubgraph {
        center,
        hops,
        subgraph,
        index_map,
    })
}
