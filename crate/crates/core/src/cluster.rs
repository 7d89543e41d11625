//! Learned soft clustering and graph coarsening.
//!
//! Each compression block encodes nodes with a GCN, maps the embeddings to a
//! row-stochastic assignment `S` (N x K) and pools features and adjacency
//! through it. Two unsupervised terms shape `S`: a relaxed K-way normalized
//! cut and a balance penalty that keeps clusters from collapsing.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::encoder::{gcn_forward, mlp_forward, GcnVars, MlpVars};
use crate::error::{GipError, Result};
use crate::graph::{normalize_adjacency, AttributedGraph};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const CUT_EPS: f64 = 1e-9;
const NORM_EPS: f64 = 1e-12;

/// Rescaling applied to the filtered coarsened adjacency before matching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyScaling {
    /// Pooled edge weights as they are.
    None,
    /// Divide by the largest entry, so weights lie in `[0, 1]` like the
    /// sigmoid pattern adjacencies they are compared against.
    #[default]
    Max,
    /// `D^{-1/2} A D^{-1/2}` without self loops.
    Symmetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub num_blocks: usize,
    /// Cluster count per block is `max(2, ceil(ratio * nodes))`.
    pub ratio: f64,
    /// Edge threshold relative to the largest off-diagonal coarsened weight.
    pub delta1_rel: f64,
    pub normalize_cluster_features: bool,
    pub adjacency_scaling: AdjacencyScaling,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            num_blocks: 1,
            ratio: 0.1,
            delta1_rel: 0.05,
            normalize_cluster_features: true,
            adjacency_scaling: AdjacencyScaling::Max,
        }
    }
}

impl CompressionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 {
            return Err(GipError::Config("num_blocks must be at least 1".into()));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(GipError::Config(format!("ratio {} outside (0, 1)", self.ratio)));
        }
        if self.delta1_rel < 0.0 {
            return Err(GipError::Config(format!("delta1_rel {} is negative", self.delta1_rel)));
        }
        Ok(())
    }

    pub fn clusters_for(&self, nodes: usize) -> usize {
        ((self.ratio * nodes as f64).ceil() as usize).max(2)
    }

    /// Node counts after each block for an `n`-node input.
    pub fn schedule(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_blocks);
        let mut cur = n;
        for _ in 0..self.num_blocks {
            cur = self.clusters_for(cur);
            out.push(cur);
        }
        out
    }
}

/// `S = softmax(MLP(Z))` over the first `k` output columns.
///
/// The MLP head is sized for the largest graph; smaller graphs use a prefix
/// of its outputs.
pub fn assign_clusters<T: Scalar>(tape: &mut Tape<T>, z: Var, mlp: &MlpVars, k: usize) -> Result<Var> {
    let n = tape.shape(z).0;
    if k < 2 {
        return Err(GipError::InvalidArgument(format!("need at least 2 clusters, got {k}")));
    }
    if k > n {
        return Err(GipError::InvalidArgument(format!("{k} clusters for {n} nodes")));
    }
    let logits = mlp_forward(tape, z, mlp)?;
    let width = tape.shape(logits).1;
    if k > width {
        return Err(GipError::InvalidArgument(format!("{k} clusters but the assignment head has {width} outputs")));
    }
    let logits = if k < width { tape.slice(logits, 0, n, 0, k)? } else { logits };
    tape.row_softmax(logits)
}

/// Relaxed normalized cut: mean over clusters of `S_kᵀ L S_k / (S_kᵀ D S_k + ε)`.
pub fn cluster_loss<T: Scalar>(tape: &mut Tape<T>, s: Var, a: Var) -> Result<Var> {
    let k = tape.shape(s).1;
    let deg = tape.row_sums(a)?;
    let deg_t = tape.transpose(deg)?;
    let s2 = tape.mul(s, s)?;
    // diag(SᵀDS) = degᵀ (S∘S)
    let volume = tape.matmul(deg_t, s2)?;
    // diag(SᵀAS) = 1ᵀ (S ∘ AS)
    let a_s = tape.matmul(a, s)?;
    let s_as = tape.mul(s, a_s)?;
    let assoc = tape.col_sums(s_as)?;
    let cut = tape.sub(volume, assoc)?;
    let denom = tape.add_scalar(volume, T::of(CUT_EPS))?;
    let ratios = tape.div(cut, denom)?;
    let total = tape.sum(ratios)?;
    tape.mul_scalar(total, T::one() / T::of_usize(k))
}

/// `(√K / N)·‖1ᵀS‖₂ − 1`: zero for equal cluster sizes, `√K − 1` at collapse.
pub fn balance_loss<T: Scalar>(tape: &mut Tape<T>, s: Var) -> Result<Var> {
    let (n, k) = tape.shape(s);
    let sizes = tape.col_sums(s)?;
    let norm = tape.frobenius_norm(sizes)?;
    let scaled = tape.mul_scalar(norm, T::of_usize(k).sqrt() / T::of_usize(n))?;
    tape.add_scalar(scaled, -T::one())
}

/// `X' = SᵀZ`, `A' = SᵀAS`.
pub fn coarsen_block<T: Scalar>(tape: &mut Tape<T>, z: Var, a: Var, s: Var) -> Result<(Var, Var)> {
    let (n, _) = tape.shape(s);
    if tape.shape(z).0 != n || tape.shape(a) != (n, n) {
        return Err(GipError::Shape(format!(
            "coarsen: S is {:?}, Z is {:?}, A is {:?}",
            tape.shape(s),
            tape.shape(z),
            tape.shape(a)
        )));
    }
    let st = tape.transpose(s)?;
    let x = tape.matmul(st, z)?;
    let sta = tape.matmul(st, a)?;
    let a_next = tape.matmul(sta, s)?;
    Ok((x, a_next))
}

/// Largest off-diagonal entry times `delta1_rel`.
pub fn relative_threshold<T: Scalar>(a: &Tensor<T>, delta1_rel: f64) -> T {
    let n = a.rows();
    let mut max = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max = max.max(a[(i, j)]);
            }
        }
    }
    max * T::of(delta1_rel)
}

/// Zero the diagonal and keep entries strictly above `delta1`. The mask is a
/// constant, so adjoints only reach retained entries.
pub fn filter_edges<T: Scalar>(tape: &mut Tape<T>, a: Var, delta1: T) -> Result<Var> {
    let value = tape.value(a);
    let mask = Tensor::from_fn(value.rows(), value.cols(), |i, j| {
        if i != j && value[(i, j)] > delta1 {
            T::one()
        } else {
            T::zero()
        }
    });
    let mask = tape.constant(mask);
    tape.mul(a, mask)
}

/// Differentiable `D̂^{-1/2}(A + I)D̂^{-1/2}` for coarsened adjacencies.
pub fn normalize_adjacency_var<T: Scalar>(tape: &mut Tape<T>, a: Var) -> Result<Var> {
    let n = tape.shape(a).0;
    let eye = tape.constant(Tensor::identity(n));
    let a_hat = tape.add(a, eye)?;
    let deg = tape.row_sums(a_hat)?;
    let root = tape.sqrt(deg)?;
    let inv = tape.recip(root)?;
    let inv_t = tape.transpose(inv)?;
    let outer = tape.matmul(inv, inv_t)?;
    tape.mul(a_hat, outer)
}

/// Apply `scaling` to a coarsened adjacency. The max entry is picked from
/// the forward values and differentiated through, which is the usual
/// subgradient of `max`.
pub fn scale_adjacency<T: Scalar>(tape: &mut Tape<T>, a: Var, scaling: AdjacencyScaling) -> Result<Var> {
    match scaling {
        AdjacencyScaling::None => Ok(a),
        AdjacencyScaling::Max => {
            let value = tape.value(a);
            let (mut bi, mut bj) = (0, 0);
            for i in 0..value.rows() {
                for j in 0..value.cols() {
                    if value[(i, j)] > value[(bi, bj)] {
                        (bi, bj) = (i, j);
                    }
                }
            }
            if value[(bi, bj)] <= T::zero() {
                return Ok(a);
            }
            let max = tape.slice(a, bi, 1, bj, 1)?;
            let inv = tape.recip(max)?;
            tape.mul(a, inv)
        }
        AdjacencyScaling::Symmetric => {
            let deg = tape.row_sums(a)?;
            let deg = tape.add_scalar(deg, T::of(NORM_EPS))?;
            let root = tape.sqrt(deg)?;
            let inv = tape.recip(root)?;
            let inv_t = tape.transpose(inv)?;
            let outer = tape.matmul(inv, inv_t)?;
            tape.mul(a, outer)
        }
    }
}

/// Row-wise L2 normalization.
pub fn normalize_rows<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let d = tape.shape(x).1;
    let sq = tape.mul(x, x)?;
    let norms2 = tape.row_sums(sq)?;
    let norms2 = tape.add_scalar(norms2, T::of(NORM_EPS))?;
    let norms = tape.sqrt(norms2)?;
    let tiled = tape.tile_col(norms, d)?;
    tape.div(x, tiled)
}

/// Parameters of one compression block bound to a tape.
#[derive(Clone, Debug)]
pub struct BlockVars {
    pub encoder: GcnVars,
    pub assign: MlpVars,
}

/// Cluster-level graph produced by [`compress`].
#[derive(Clone, Debug)]
pub struct CoarsenedGraph {
    pub features: Var,
    pub adjacency: Var,
    pub assignments: Vec<Var>,
    /// Summed over blocks.
    pub cluster_loss: Var,
    pub balance_loss: Var,
}

impl CoarsenedGraph {
    pub fn to_graph<T: Scalar>(&self, tape: &Tape<T>) -> AttributedGraph<T> {
        AttributedGraph::new(tape.value(self.features).clone(), tape.value(self.adjacency).clone(), None)
            .expect("coarsened adjacency is symmetric")
    }
}

/// Stack of compression blocks followed by edge filtering.
pub fn compress<T: Scalar>(
    tape: &mut Tape<T>,
    graph: &AttributedGraph<T>,
    blocks: &[BlockVars],
    cfg: &CompressionConfig,
) -> Result<CoarsenedGraph> {
    let n = graph.node_count();
    if n < 2 {
        return Err(GipError::InvalidArgument(format!("cannot compress a graph with {n} node(s)")));
    }
    if blocks.len() != cfg.num_blocks {
        return Err(GipError::Config(format!("{} blocks bound, config has {}", blocks.len(), cfg.num_blocks)));
    }
    let mut x = tape.constant(graph.features().clone());
    let mut a = tape.constant(graph.adjacency().clone());
    let mut a_norm = tape.constant(normalize_adjacency(graph.adjacency())?);
    let mut assignments = Vec::with_capacity(blocks.len());
    let mut clu_terms = Vec::with_capacity(blocks.len());
    let mut bal_terms = Vec::with_capacity(blocks.len());
    let mut nodes = n;

    for (l, block) in blocks.iter().enumerate() {
        if l > 0 {
            a_norm = normalize_adjacency_var(tape, a)?;
        }
        let z = gcn_forward(tape, x, a_norm, &block.encoder)?;
        let width = block.assign.layers.last().map_or(0, |&(w, _, _)| tape.shape(w).1);
        let k = cfg.clusters_for(nodes).min(width).min(nodes);
        let s = assign_clusters(tape, z, &block.assign, k)?;
        clu_terms.push(cluster_loss(tape, s, a)?);
        bal_terms.push(balance_loss(tape, s)?);
        let (xn, an) = coarsen_block(tape, z, a, s)?;
        x = xn;
        a = an;
        nodes = k;
        assignments.push(s);
    }

    let delta1 = relative_threshold(tape.value(a), cfg.delta1_rel);
    let adjacency = filter_edges(tape, a, delta1)?;
    let adjacency = scale_adjacency(tape, adjacency, cfg.adjacency_scaling)?;
    let features = if cfg.normalize_cluster_features { normalize_rows(tape, x)? } else { x };
    let cluster_loss = sum_vars(tape, &clu_terms)?;
    let balance_loss = sum_vars(tape, &bal_terms)?;
    Ok(CoarsenedGraph { features, adjacency, assignments, cluster_loss, balance_loss })
}

pub(crate) fn sum_vars<T: Scalar>(tape: &mut Tape<T>, terms: &[Var]) -> Result<Var> {
    match terms {
        [] => Ok(tape.scalar_constant(T::zero())),
        [only] => Ok(*only),
        [first, rest @ ..] => {
            let mut acc = *first;
            for &t in rest {
                acc = tape.add(acc, t)?;
            }
            Ok(acc)
        }
    }
}
