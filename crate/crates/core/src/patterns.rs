//! Learnable interactive patterns: small prototype graphs in coarsened
//! feature space, allocated evenly over the classes.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::cluster::sum_vars;
use crate::encoder::{mlp_forward, MlpVars};
use crate::error::{GipError, Result};
use crate::kernel::{distance_with, normalize_with, rw_kernel, GraphVars, KernelConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsLossConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Margin `λ`.
    pub margin: f64,
}

impl Default for MsLossConfig {
    fn default() -> Self {
        Self { gamma1: 2.0, gamma2: 50.0, margin: 1.0 }
    }
}

/// Pattern feature matrices and their class allocation.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternBank<T> {
    pub features: Vec<Tensor<T>>,
    pub class_of: Vec<usize>,
    pub num_classes: usize,
}

impl<T: Scalar> PatternBank<T> {
    /// `per_class` patterns for each class, in class-major order.
    pub fn new(features: Vec<Tensor<T>>, num_classes: usize) -> Result<Self> {
        let total = features.len();
        if num_classes == 0 || !total.is_multiple_of(num_classes) || total == 0 {
            return Err(GipError::InvalidArgument(format!(
                "{total} patterns cannot be split evenly over {num_classes} classes"
            )));
        }
        if features.iter().any(|f| f.rows() < 2) {
            return Err(GipError::InvalidArgument("patterns need at least 2 nodes".into()));
        }
        let per = total / num_classes;
        let class_of = (0..total).map(|t| t / per).collect();
        Ok(Self { features, class_of, num_classes })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn per_class(&self) -> usize {
        self.len() / self.num_classes
    }

    pub fn of_class(&self, class: usize) -> impl Iterator<Item = usize> + '_ {
        self.class_of.iter().enumerate().filter(move |&(_, &c)| c == class).map(|(t, _)| t)
    }
}

/// Selection matrices for ordered node pairs `p = i·n + j`: `left` picks
/// row `i`, `right` picks row `j`.
fn pair_selectors<T: Scalar>(n: usize) -> (Tensor<T>, Tensor<T>) {
    let left = Tensor::from_fn(n * n, n, |p, i| if p / n == i { T::one() } else { T::zero() });
    let right = Tensor::from_fn(n * n, n, |p, j| if p % n == j { T::one() } else { T::zero() });
    (left, right)
}

/// `A_ij = σ(½(MLP([x_i; x_j]) + MLP([x_j; x_i])))` off the diagonal, 0 on it.
pub fn generate_pattern_adjacency<T: Scalar>(tape: &mut Tape<T>, features: Var, mlp: &MlpVars) -> Result<Var> {
    let n = tape.shape(features).0;
    if n < 2 {
        return Err(GipError::InvalidArgument(format!("pattern with {n} node(s)")));
    }
    let (left_t, right_t) = pair_selectors::<T>(n);
    let left = tape.constant(left_t);
    let right = tape.constant(right_t);
    let xi = tape.matmul(left, features)?;
    let xj = tape.matmul(right, features)?;
    let pairs = tape.concat_cols(&[xi, xj])?;
    let raw = mlp_forward(tape, pairs, mlp)?;
    // scatter the n²x1 scores back into an n x n matrix
    let spread = tape.tile_col(raw, n)?;
    let picked = tape.mul(spread, right)?;
    let left_t = tape.transpose(left)?;
    let scores = tape.matmul(left_t, picked)?;
    let scores_t = tape.transpose(scores)?;
    let both = tape.add(scores, scores_t)?;
    let sym = tape.mul_scalar(both, T::of(0.5))?;
    let probs = tape.sigmoid(sym)?;
    let off_diag = tape.constant(Tensor::from_fn(n, n, |i, j| if i == j { T::zero() } else { T::one() }));
    tape.mul(probs, off_diag)
}

/// Kernel values needed to compare one coarsened graph with a bank.
#[derive(Clone, Debug)]
pub struct PatternMatch {
    /// 1 x T raw kernel similarities.
    pub sims: Var,
    /// 1 x T kernel-space distances.
    pub distances: Var,
}

/// Raw kernel similarity against every pattern, in bank order (1 x T).
pub fn pattern_similarities<T: Scalar>(
    tape: &mut Tape<T>,
    graph: GraphVars,
    patterns: &[GraphVars],
    cfg: &KernelConfig,
) -> Result<Var> {
    let sims = patterns.iter().map(|&p| rw_kernel(tape, graph, p, cfg)).collect::<Result<Vec<_>>>()?;
    tape.concat_cols(&sims)
}

/// Similarities and distances, sharing each cross kernel between the two.
pub fn match_patterns<T: Scalar>(
    tape: &mut Tape<T>,
    graph: GraphVars,
    patterns: &[GraphVars],
    pattern_self: &[Var],
    cfg: &KernelConfig,
) -> Result<PatternMatch> {
    let kgg = rw_kernel(tape, graph, graph, cfg)?;
    let mut sims = Vec::with_capacity(patterns.len());
    let mut dists = Vec::with_capacity(patterns.len());
    for (&p, &kpp) in patterns.iter().zip(pattern_self) {
        let kgp = rw_kernel(tape, graph, p, cfg)?;
        dists.push(distance_with(tape, kgp, kgg, kpp)?);
        sims.push(kgp);
    }
    Ok(PatternMatch { sims: tape.concat_cols(&sims)?, distances: tape.concat_cols(&dists)? })
}

/// `log(1 + Σ e^{z_i})` as a log-sum-exp over `{0} ∪ {z_i}`.
fn softplus_sum<T: Scalar>(tape: &mut Tape<T>, terms: &[Var]) -> Result<Var> {
    let zero = tape.scalar_constant(T::zero());
    let mut all = Vec::with_capacity(terms.len() + 1);
    all.push(zero);
    all.extend_from_slice(terms);
    let row = tape.concat_cols(&all)?;
    tape.log_sum_exp(row)
}

/// Multi-similarity loss over `(distances, label)` pairs, distances 1 x T.
pub fn multi_similarity_loss<T: Scalar>(
    tape: &mut Tape<T>,
    batch: &[(Var, usize)],
    class_of: &[usize],
    cfg: &MsLossConfig,
) -> Result<Var> {
    if batch.is_empty() {
        return Ok(tape.scalar_constant(T::zero()));
    }
    let (g1, g2, margin) = (T::of(cfg.gamma1), T::of(cfg.gamma2), T::of(cfg.margin));
    let mut per_graph = Vec::with_capacity(batch.len());
    for &(dist, label) in batch {
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (t, &c) in class_of.iter().enumerate() {
            let d = tape.slice(dist, 0, 1, t, 1)?;
            let shifted = tape.add_scalar(d, -margin)?;
            if c == label {
                pos.push(tape.mul_scalar(shifted, g1)?);
            } else {
                neg.push(tape.mul_scalar(shifted, -g2)?);
            }
        }
        let pos_term = softplus_sum(tape, &pos)?;
        let pos_term = tape.mul_scalar(pos_term, T::one() / g1)?;
        let neg_term = softplus_sum(tape, &neg)?;
        let neg_term = tape.mul_scalar(neg_term, T::one() / g2)?;
        per_graph.push(tape.add(pos_term, neg_term)?);
    }
    let total = sum_vars(tape, &per_graph)?;
    tape.mul_scalar(total, T::one() / T::of_usize(batch.len()))
}

/// Hinge on intra-class pattern similarity above `delta2`, each unordered
/// pair counted once. `normalized` selects the cosine-style kernel.
pub fn diversity_loss<T: Scalar>(
    tape: &mut Tape<T>,
    patterns: &[GraphVars],
    class_of: &[usize],
    cfg: &KernelConfig,
    delta2: f64,
    normalized: bool,
) -> Result<Var> {
    let self_k: Vec<Var> = if normalized {
        patterns.iter().map(|&p| rw_kernel(tape, p, p, cfg)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let mut hinges = Vec::new();
    for i in 0..patterns.len() {
        for j in (i + 1)..patterns.len() {
            if class_of[i] != class_of[j] {
                continue;
            }
            let kij = rw_kernel(tape, patterns[i], patterns[j], cfg)?;
            let sim = if normalized { normalize_with(tape, kij, self_k[i], self_k[j])? } else { kij };
            let over = tape.add_scalar(sim, -T::of(delta2))?;
            hinges.push(tape.max_scalar(over, T::zero())?);
        }
    }
    sum_vars(tape, &hinges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::MlpParams;
    use crate::graph::AttributedGraph;
    use crate::kernel::eval;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bank_allocates_evenly() {
        let bank = PatternBank::new(vec![Tensor::<f64>::zeros(3, 2); 6], 3).unwrap();
        assert_eq!(bank.class_of, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(bank.of_class(1).collect::<Vec<_>>(), vec![2, 3]);
        assert!(PatternBank::new(vec![Tensor::<f64>::zeros(3, 2); 5], 3).is_err());
        assert!(PatternBank::new(vec![Tensor::<f64>::zeros(1, 2); 2], 2).is_err());
    }

    #[test]
    fn zero_mlp_gives_half_adjacency() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::from_fn(4, 3, |i, j| (i + j) as f64));
        let mlp = MlpParams::zeros(&[6, 5, 1]).bind(&mut tape, true);
        let a = generate_pattern_adjacency(&mut tape, x, &mlp).unwrap();
        let a = tape.value(a);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a[(i, j)], if i == j { 0.0 } else { 0.5 });
            }
        }
    }

    #[test]
    fn generated_adjacency_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let feats: Tensor<f64> = crate::encoder::glorot(3, 2, &mut rng);
        let mut params = MlpParams::<f64>::glorot(&[4, 3, 1], &mut rng);
        params.layers[0].bias = crate::encoder::glorot(1, 3, &mut rng);
        params.layers[1].bias = Tensor::scalar(0.3);

        let mut tape = Tape::new();
        let x = tape.constant(feats.clone());
        let mlp = params.bind(&mut tape, false);
        let a = generate_pattern_adjacency(&mut tape, x, &mlp).unwrap();
        let got = tape.value(a).clone();
        assert_eq!(got, got.transpose());

        let score = |i: usize, j: usize| {
            let input: Vec<f64> = feats.row(i).iter().chain(feats.row(j)).copied().collect();
            let mut out = params.layers[1].bias[(0, 0)];
            for h in 0..3 {
                let mut acc = params.layers[0].bias[(0, h)];
                for (f, v) in input.iter().enumerate() {
                    acc += v * params.layers[0].weight[(f, h)];
                }
                out += acc.max(0.0) * params.layers[1].weight[(h, 0)];
            }
            out
        };
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 1.0 / (1.0 + (-(score(i, j) + score(j, i)) / 2.0).exp()) };
                assert!((got[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    fn fixture_graph() -> AttributedGraph<f64> {
        AttributedGraph::from_edges(
            Tensor::from_f64_rows(&[&[1.0, 0.2], &[0.3, 0.9], &[0.5, 0.5]]),
            &[(0, 1), (1, 2)],
            None,
        )
        .unwrap()
    }

    #[test]
    fn similarities_match_independent_kernel_calls() {
        let g = fixture_graph();
        let p1 = AttributedGraph::from_edges(Tensor::from_f64_rows(&[&[0.1, 1.0], &[1.0, 0.0]]), &[(0, 1)], None).unwrap();
        let cfg = KernelConfig::default();
        let mut tape = Tape::new();
        let gv = GraphVars::constant(&mut tape, &g);
        let pv = [GraphVars::constant(&mut tape, &p1), GraphVars::constant(&mut tape, &g)];
        let sims = pattern_similarities(&mut tape, gv, &pv, &cfg).unwrap();
        let sims = tape.value(sims);
        assert_eq!(sims.shape(), (1, 2));
        assert!((sims[(0, 0)] - eval::rw_kernel(&g, &p1, &cfg).unwrap()).abs() < 1e-12);
        assert!((sims[(0, 1)] - eval::rw_kernel(&g, &g, &cfg).unwrap()).abs() < 1e-12);

        let zero = AttributedGraph::new(g.features().map(|_| 0.0), g.adjacency().clone(), None).unwrap();
        let zv = GraphVars::constant(&mut tape, &zero);
        let z = pattern_similarities(&mut tape, zv, &pv, &cfg).unwrap();
        assert_eq!(tape.value(z), &Tensor::zeros(1, 2));
    }

    fn ms(dists: &[f64], label: usize, class_of: &[usize], cfg: &MsLossConfig) -> f64 {
        let mut tape = Tape::new();
        let d = tape.constant(Tensor::from_vec(1, dists.len(), dists.to_vec()).unwrap());
        let l = multi_similarity_loss(&mut tape, &[(d, label)], class_of, cfg).unwrap();
        tape.item(l)
    }

    #[test]
    fn ms_loss_at_margin_is_ln2() {
        let cfg = MsLossConfig { gamma1: 2.0, gamma2: 2.0, margin: 1.0 };
        assert!((ms(&[1.0, 1.0], 0, &[0, 1], &cfg) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn ms_loss_without_negatives() {
        let cfg = MsLossConfig::default();
        let expect = (1.0 + (2.0f64 * (1.5 - 1.0)).exp()).ln() / 2.0;
        assert!((ms(&[1.5], 0, &[0], &cfg) - expect).abs() < 1e-14);
    }

    #[test]
    fn ms_loss_matches_scalar_reference() {
        let cfg = MsLossConfig::default();
        let class_of = [0, 0, 1, 1, 2, 2];
        let dists: [f64; 6] = [0.3, 1.7, 0.9, 2.4, 1.05, 0.2];
        let label = 1;
        let (mut pos, mut neg) = (0.0f64, 0.0f64);
        for (t, &d) in dists.iter().enumerate() {
            if class_of[t] == label {
                pos += (2.0 * (d - 1.0)).exp();
            } else {
                neg += (-50.0 * (d - 1.0)).exp();
            }
        }
        let expect = (1.0 + pos).ln() / 2.0 + (1.0 + neg).ln() / 50.0;
        assert!((ms(&dists, label, &class_of, &cfg) - expect).abs() < 1e-12);
    }

    #[test]
    fn diversity_hinge_values() {
        let g = fixture_graph();
        let cfg = KernelConfig::default();
        let mut tape = Tape::new();
        let p = GraphVars::constant(&mut tape, &g);
        let dup = diversity_loss(&mut tape, &[p, p], &[0, 0], &cfg, 0.5, true).unwrap();
        assert!((tape.item(dup) - 0.5).abs() < 1e-12);
        let apart = diversity_loss(&mut tape, &[p, p], &[0, 1], &cfg, 0.5, true).unwrap();
        assert_eq!(tape.item(apart), 0.0);
        let loose = diversity_loss(&mut tape, &[p, p], &[0, 0], &cfg, 1.0 + 1e-9, true).unwrap();
        assert_eq!(tape.item(loose), 0.0);
    }
}
