//! Graph data model, adjacency normalization and dataset splits.

mod json;
mod synthetic;
mod tu;

pub use json::{read_graph_json, write_graph_json, GraphFile};

pub use synthetic::{generate_graphcycle, generate_graphcycle_with, generate_graphfive, generate_graphfive_with, Layout, SuperGraph, SyntheticConfig};
pub use tu::{parse_tu_dataset, parse_tu_dataset_with, write_tu_dataset, TuOptions};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GipError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Node features, weighted adjacency and an optional class label.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph<T> {
    features: Tensor<T>,
    adjacency: Tensor<T>,
    pub label: Option<usize>,
}

impl<T: Scalar> AttributedGraph<T> {
    /// Validates shapes and symmetry; the diagonal may be non-zero (coarsened graphs).
    pub fn new(features: Tensor<T>, adjacency: Tensor<T>, label: Option<usize>) -> Result<Self> {
        let n = features.rows();
        if adjacency.shape() != (n, n) {
            return Err(GipError::Shape(format!(
                "adjacency {}x{} does not match {} feature rows",
                adjacency.rows(),
                adjacency.cols(),
                n
            )));
        }
        if !adjacency.is_symmetric(T::of(1e-12)) {
            return Err(GipError::InvalidArgument("adjacency is not symmetric".into()));
        }
        if adjacency.data().iter().any(|&w| w < T::zero()) {
            return Err(GipError::InvalidArgument("adjacency has negative weights".into()));
        }
        Ok(Self { features, adjacency, label })
    }

    /// Unweighted graph from an undirected edge list. Self-loops are dropped.
    pub fn from_edges(features: Tensor<T>, edges: &[(usize, usize)], label: Option<usize>) -> Result<Self> {
        let n = features.rows();
        let mut adjacency = Tensor::zeros(n, n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GipError::InvalidArgument(format!("edge ({u},{v}) outside {n} nodes")));
            }
            if u != v {
                adjacency[(u, v)] = T::one();
                adjacency[(v, u)] = T::one();
            }
        }
        Self::new(features, adjacency, label)
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor<T> {
        &self.features
    }

    pub fn adjacency(&self) -> &Tensor<T> {
        &self.adjacency
    }

    /// Undirected edges `(u, v)` with `u < v` and positive weight.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.node_count();
        let mut out = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if self.adjacency[(u, v)] > T::zero() {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.node_count())
            .map(|u| self.adjacency.row(u).iter().enumerate().filter(|&(v, &w)| v != u && w > T::zero()).count())
            .collect()
    }

    /// Reorder nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.node_count();
        assert_eq!(perm.len(), n);
        let d = self.feature_dim();
        let features = Tensor::from_fn(n, d, |i, j| self.features[(perm[i], j)]);
        let adjacency = Tensor::from_fn(n, n, |i, j| self.adjacency[(perm[i], perm[j])]);
        Self { features, adjacency, label: self.label }
    }

    pub fn cast<U: Scalar>(&self) -> AttributedGraph<U> {
        AttributedGraph { features: self.features.cast(), adjacency: self.adjacency.cast(), label: self.label }
    }
}

/// A labelled collection of graphs sharing one feature dimension.
#[derive(Clone, Debug)]
pub struct GraphDataset<T> {
    pub name: String,
    pub graphs: Vec<AttributedGraph<T>>,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Ground-truth community layout, present for synthetic datasets.
    pub supergraphs: Option<Vec<SuperGraph>>,
}

impl<T: Scalar> GraphDataset<T> {
    pub fn new(name: impl Into<String>, graphs: Vec<AttributedGraph<T>>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(GipError::Dataset(format!("need at least 2 classes, got {num_classes}")));
        }
        let feature_dim = graphs.first().map_or(0, AttributedGraph::feature_dim);
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(GipError::Dataset(format!(
                    "graph {i} has feature dim {}, expected {feature_dim}",
                    g.feature_dim()
                )));
            }
            match g.label {
                Some(y) if y < num_classes => {}
                Some(y) => return Err(GipError::Dataset(format!("graph {i} label {y} >= {num_classes}"))),
                None => return Err(GipError::Dataset(format!("graph {i} is unlabelled"))),
            }
        }
        Ok(Self { name: name.into(), graphs, num_classes, feature_dim, supergraphs: None })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        self.graphs[i].label.expect("dataset graphs are labelled")
    }

    pub fn average_nodes(&self) -> f64 {
        if self.graphs.is_empty() {
            return 0.0;
        }
        self.graphs.iter().map(|g| g.node_count() as f64).sum::<f64>() / self.graphs.len() as f64
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for i in 0..self.len() {
            counts[self.label(i)] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&AttributedGraph<T>> {
        indices.iter().map(|&i| &self.graphs[i]).collect()
    }
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` with `D̂` the degree matrix of `A + I`.
pub fn normalize_adjacency<T: Scalar>(adjacency: &Tensor<T>) -> Result<Tensor<T>> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err(GipError::Shape(format!("adjacency {}x{} is not square", n, adjacency.cols())));
    }
    if !adjacency.is_symmetric(T::of(1e-12)) {
        return Err(GipError::InvalidArgument("cannot normalize an asymmetric adjacency".into()));
    }
    if adjacency.data().iter().any(|&w| w < T::zero()) {
        return Err(GipError::InvalidArgument("cannot normalize negative weights".into()));
    }
    let inv_sqrt: Vec<T> = (0..n)
        .map(|i| (adjacency.row(i).iter().copied().sum::<T>() + T::one()).sqrt().recip())
        .collect();
    Ok(Tensor::from_fn(n, n, |i, j| {
        let a = if i == j { adjacency[(i, j)] + T::one() } else { adjacency[(i, j)] };
        a * inv_sqrt[i] * inv_sqrt[j]
    }))
}

/// Train/validation/test index lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Stratified split with `ratios = (train, val, test)`.
///
/// Each class is shuffled, every graph is keyed by its relative position
/// within its class, and the merged order is cut at the global targets, so
/// any prefix holds each class within one graph of its share.
pub fn split_dataset<T: Scalar>(dataset: &GraphDataset<T>, ratios: (f64, f64, f64), seed: u64) -> Result<SplitSpec> {
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv < 0.0 || rs < 0.0 || ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(GipError::InvalidArgument(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    let parts = [rt, rv, rs].iter().filter(|&&r| r > 0.0).count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(dataset.len());
    for class in 0..dataset.num_classes {
        let mut members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.label(i) == class).collect();
        if members.len() < parts {
            return Err(GipError::Dataset(format!(
                "class {class} has {} graphs, fewer than the {parts} splits",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        for (rank, &g) in members.iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / n, class, g));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let total = keyed.len();
    let n_train = ((total as f64) * rt).round() as usize;
    let n_val = (((total as f64) * (rt + rv)).round() as usize).saturating_sub(n_train);
    let order: Vec<usize> = keyed.into_iter().map(|(_, _, g)| g).collect();
    Ok(SplitSpec {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
        seed,
    })
}
