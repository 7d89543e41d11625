//! R-step random-walk kernel for attributed, weighted graphs.
//!
//! For graphs `G` (N nodes) and `G'` (N' nodes) the product-graph adjacency
//! is `A ⊗ A'` and the product-node weight is `s_(v,v') = ⟨X_v, X'_v'⟩`.
//! Rather than forming the `NN' x NN'` product, the walk vector is kept as an
//! `N' x N` matrix: `M_0 = X'Xᵀ`, `M_{r+1} = A' M_r Aᵀ`, and
//! `K_r = ⟨M_0, M_r⟩_F`. Cost is `O(R·N·N'·(N+N'))`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{GipError, Result};
use crate::graph::AttributedGraph;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Longest walk compared.
    pub steps: usize,
    /// Per-length weights `μ_0..=μ_R`; `None` weights every length by 1.
    pub decay: Option<Vec<f64>>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { steps: 3, decay: None }
    }
}

impl KernelConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self { steps, decay: None }
    }

    /// `μ_r = factor^r`.
    pub fn geometric(steps: usize, factor: f64) -> Self {
        if factor == 1.0 {
            return Self::with_steps(steps);
        }
        Self { steps, decay: Some((0..=steps).map(|r| factor.powi(r as i32)).collect()) }
    }

    fn weight(&self, r: usize) -> f64 {
        self.decay.as_ref().and_then(|d| d.get(r).copied()).unwrap_or(1.0)
    }
}

/// A graph whose features and adjacency live on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GraphVars {
    pub features: Var,
    pub adjacency: Var,
}

impl GraphVars {
    pub fn constant<T: Scalar>(tape: &mut Tape<T>, g: &AttributedGraph<T>) -> Self {
        Self { features: tape.constant(g.features().clone()), adjacency: tape.constant(g.adjacency().clone()) }
    }

    pub fn param<T: Scalar>(tape: &mut Tape<T>, g: &AttributedGraph<T>) -> Self {
        Self { features: tape.param(g.features().clone()), adjacency: tape.param(g.adjacency().clone()) }
    }
}

/// `K(G, G') = Σ_{r=0}^{R} μ_r Σ_{i,j} s_i s_j [(A ⊗ A')^r]_ij`.
pub fn rw_kernel<T: Scalar>(tape: &mut Tape<T>, g: GraphVars, h: GraphVars, cfg: &KernelConfig) -> Result<Var> {
    let (dg, dh) = (tape.shape(g.features).1, tape.shape(h.features).1);
    if dg != dh {
        return Err(GipError::Shape(format!("kernel feature dims differ: {dg} vs {dh}")));
    }
    let g_feat_t = tape.transpose(g.features)?;
    let s = tape.matmul(h.features, g_feat_t)?;
    let g_adj_t = tape.transpose(g.adjacency)?;
    let mut walk = s;
    let mut terms = Vec::with_capacity(cfg.steps + 1);
    for r in 0..=cfg.steps {
        if r > 0 {
            let left = tape.matmul(h.adjacency, walk)?;
            walk = tape.matmul(left, g_adj_t)?;
        }
        let prod = tape.mul(s, walk)?;
        let kr = tape.sum(prod)?;
        let mu = cfg.weight(r);
        terms.push(if mu == 1.0 { kr } else { tape.mul_scalar(kr, T::of(mu))? });
    }
    crate::cluster::sum_vars(tape, &terms)
}

/// `K(G,G') / √(K(G,G)·K(G',G'))`.
pub fn normalized_similarity<T: Scalar>(tape: &mut Tape<T>, g: GraphVars, h: GraphVars, cfg: &KernelConfig) -> Result<Var> {
    let kgg = rw_kernel(tape, g, g, cfg)?;
    let khh = rw_kernel(tape, h, h, cfg)?;
    let kgh = rw_kernel(tape, g, h, cfg)?;
    normalize_with(tape, kgh, kgg, khh)
}

pub(crate) fn normalize_with<T: Scalar>(tape: &mut Tape<T>, kgh: Var, kgg: Var, khh: Var) -> Result<Var> {
    if tape.item(kgg) <= T::zero() || tape.item(khh) <= T::zero() {
        return Err(GipError::ZeroSelfKernel);
    }
    let prod = tape.mul(kgg, khh)?;
    let root = tape.sqrt(prod)?;
    tape.div(kgh, root)
}

/// Kernel-space distance `√max(0, ½(K(G,G) + K(G',G')) − K(G,G'))`.
pub fn kernel_distance<T: Scalar>(tape: &mut Tape<T>, g: GraphVars, h: GraphVars, cfg: &KernelConfig) -> Result<Var> {
    let kgg = rw_kernel(tape, g, g, cfg)?;
    let khh = rw_kernel(tape, h, h, cfg)?;
    let kgh = rw_kernel(tape, g, h, cfg)?;
    distance_with(tape, kgh, kgg, khh)
}

pub(crate) fn distance_with<T: Scalar>(tape: &mut Tape<T>, kgh: Var, kgg: Var, khh: Var) -> Result<Var> {
    let self_sum = tape.add(kgg, khh)?;
    let half = tape.mul_scalar(self_sum, T::of(0.5))?;
    let gap = tape.sub(half, kgh)?;
    let clamped = tape.max_scalar(gap, T::zero())?;
    tape.sqrt(clamped)
}

/// Plain-value helpers over concrete graphs.
pub mod eval {
    use super::*;

    /// Content order on graphs, so symmetric quantities are evaluated with
    /// the same operand order regardless of argument order.
    fn content_cmp<T: Scalar>(g: &AttributedGraph<T>, h: &AttributedGraph<T>) -> std::cmp::Ordering {
        let key = |x: &AttributedGraph<T>| (x.node_count(), x.feature_dim());
        key(g).cmp(&key(h)).then_with(|| {
            let a = g.features().data().iter().chain(g.adjacency().data());
            let b = h.features().data().iter().chain(h.adjacency().data());
            a.zip(b)
                .map(|(x, y)| x.to_f64_lossy().total_cmp(&y.to_f64_lossy()))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    }

    fn with_pair<T: Scalar>(
        g: &AttributedGraph<T>,
        h: &AttributedGraph<T>,
        f: impl FnOnce(&mut Tape<T>, GraphVars, GraphVars) -> Result<Var>,
    ) -> Result<T> {
        let (g, h) = if content_cmp(g, h).is_gt() { (h, g) } else { (g, h) };
        let mut tape = Tape::new();
        let gv = GraphVars::constant(&mut tape, g);
        let hv = GraphVars::constant(&mut tape, h);
        let out = f(&mut tape, gv, hv)?;
        Ok(tape.item(out))
    }

    pub fn rw_kernel<T: Scalar>(g: &AttributedGraph<T>, h: &AttributedGraph<T>, cfg: &KernelConfig) -> Result<T> {
        with_pair(g, h, |t, a, b| super::rw_kernel(t, a, b, cfg))
    }

    pub fn normalized_similarity<T: Scalar>(g: &AttributedGraph<T>, h: &AttributedGraph<T>, cfg: &KernelConfig) -> Result<T> {
        with_pair(g, h, |t, a, b| super::normalized_similarity(t, a, b, cfg))
    }

    pub fn kernel_distance<T: Scalar>(g: &AttributedGraph<T>, h: &AttributedGraph<T>, cfg: &KernelConfig) -> Result<T> {
        with_pair(g, h, |t, a, b| super::kernel_distance(t, a, b, cfg))
    }

    /// Distance from self-kernels and the cross kernel, for callers that
    /// cache self-kernels across many pairs.
    pub fn distance_from_kernels<T: Scalar>(kgh: T, kgg: T, khh: T) -> T {
        ((kgg + khh) * T::of(0.5) - kgh).max(T::zero()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn g(features: &[&[f64]], edges: &[(usize, usize)]) -> AttributedGraph<f64> {
        AttributedGraph::from_edges(Tensor::from_f64_rows(features), edges, None).unwrap()
    }

    #[test]
    fn single_nodes_only_count_length_zero() {
        let a = g(&[&[1.0, 2.0]], &[]);
        let b = g(&[&[3.0, 4.0]], &[]);
        for r in 0..4 {
            assert_eq!(eval::rw_kernel(&a, &b, &KernelConfig::with_steps(r)).unwrap(), 121.0);
        }
    }

    #[test]
    fn single_edge_pair() {
        let k2 = g(&[&[1.0], &[1.0]], &[(0, 1)]);
        assert_eq!(eval::rw_kernel(&k2, &k2, &KernelConfig::with_steps(2)).unwrap(), 12.0);
    }

    #[test]
    fn decay_weights_lengths() {
        let k2 = g(&[&[1.0], &[1.0]], &[(0, 1)]);
        let cfg = KernelConfig { steps: 2, decay: Some(vec![1.0, 0.5, 0.25]) };
        assert_eq!(eval::rw_kernel(&k2, &k2, &cfg).unwrap(), 4.0 + 2.0 + 1.0);
        assert_eq!(KernelConfig::geometric(2, 0.5), cfg);
    }

    #[test]
    fn distance_hand_value() {
        let a = g(&[&[1.0]], &[]);
        let b = g(&[&[2.0]], &[]);
        let d = eval::kernel_distance(&a, &b, &KernelConfig::default()).unwrap();
        assert!((d - 4.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(eval::kernel_distance(&a, &a, &KernelConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn self_similarity_is_one_and_symmetric() {
        let a = g(&[&[1.0, 0.5], &[0.2, 1.0], &[0.3, 0.3]], &[(0, 1), (1, 2)]);
        let b = g(&[&[0.4, 1.0], &[1.0, 0.0]], &[(0, 1)]);
        let cfg = KernelConfig::default();
        assert!((eval::normalized_similarity(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            eval::normalized_similarity(&a, &b, &cfg).unwrap(),
            eval::normalized_similarity(&b, &a, &cfg).unwrap()
        );
    }

    #[test]
    fn zero_features_are_signalled() {
        let a = g(&[&[0.0], &[0.0]], &[(0, 1)]);
        let b = g(&[&[1.0]], &[]);
        assert!(matches!(eval::normalized_similarity(&a, &b, &KernelConfig::default()), Err(GipError::ZeroSelfKernel)));
    }

    #[test]
    fn feature_dim_mismatch() {
        let a = g(&[&[1.0]], &[]);
        let b = g(&[&[1.0, 2.0]], &[]);
        assert!(eval::rw_kernel(&a, &b, &KernelConfig::default()).is_err());
    }
}
