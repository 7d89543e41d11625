//! Model parameters, the forward pass and the training objective.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::cluster::{compress, sum_vars, BlockVars, CoarsenedGraph};
use crate::config::{PatternInit, TrainConfig};
use crate::encoder::{glorot, leaf, Activation, Dense, GcnParams, MlpParams, MlpVars};
use crate::error::{GipError, Result};
use crate::graph::{AttributedGraph, GraphDataset};
use crate::kernel::{rw_kernel, GraphVars};
use crate::patterns::{diversity_loss, generate_pattern_adjacency, match_patterns, multi_similarity_loss, PatternBank, PatternMatch};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Shape information fixed at construction time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Assignment head width per block: the most clusters any graph needs.
    pub cluster_widths: Vec<usize>,
    pub pattern_nodes: usize,
    pub patterns_per_class: usize,
}

impl Architecture {
    pub fn for_dataset<T: Scalar>(dataset: &GraphDataset<T>, cfg: &TrainConfig) -> Result<Self> {
        if dataset.is_empty() {
            return Err(GipError::Dataset("empty dataset".into()));
        }
        let comp = cfg.compression();
        let mut widths = vec![2; cfg.num_blocks];
        for g in &dataset.graphs {
            for (w, k) in widths.iter_mut().zip(comp.schedule(g.node_count())) {
                *w = (*w).max(k);
            }
        }
        let pattern_nodes = if cfg.pattern_nodes > 0 {
            cfg.pattern_nodes
        } else {
            let q = cfg.ratio.powi(cfg.num_blocks as i32);
            ((q * dataset.average_nodes()).ceil() as usize).max(2)
        };
        Ok(Self {
            feature_dim: dataset.feature_dim,
            num_classes: dataset.num_classes,
            cluster_widths: widths,
            pattern_nodes,
            patterns_per_class: cfg.patterns_per_class,
        })
    }

    pub fn num_patterns(&self) -> usize {
        self.num_classes * self.patterns_per_class
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T> {
    pub encoder: GcnParams<T>,
    pub assign: MlpParams<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T> {
    pub arch: Architecture,
    pub blocks: Vec<BlockParams<T>>,
    /// Scores node pairs of a pattern to produce its topology.
    pub pattern_mlp: MlpParams<T>,
    pub patterns: PatternBank<T>,
    /// Maps the T similarity scores to C logits.
    pub classifier: Dense<T>,
}

/// Every parameter bound to one tape, in [`ModelState::tensors`] order.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub blocks: Vec<BlockVars>,
    pub pattern_mlp: MlpVars,
    pub pattern_features: Vec<Var>,
    pub classifier: (Var, Var),
}

impl ModelVars {
    pub fn flat(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend(b.encoder.flat());
            out.extend(b.assign.flat());
        }
        out.extend(self.pattern_mlp.flat());
        out.extend(&self.pattern_features);
        out.extend([self.classifier.0, self.classifier.1]);
        out
    }
}

impl<T: Scalar> ModelState<T> {
    /// Random initialization. Pattern features are drawn from
    /// `N(0, 1/d′)`; see [`ModelState::init_patterns`] for the centroid scheme.
    pub fn new(arch: Architecture, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Self> {
        if arch.cluster_widths.len() != cfg.num_blocks {
            return Err(GipError::Config("architecture and config disagree on num_blocks".into()));
        }
        let mut blocks = Vec::with_capacity(cfg.num_blocks);
        for (l, &width) in arch.cluster_widths.iter().enumerate() {
            let input = if l == 0 { arch.feature_dim } else { cfg.embed_dim };
            let mut dims = vec![input];
            dims.extend(std::iter::repeat_n(cfg.gcn_hidden, cfg.gcn_layers - 1));
            dims.push(cfg.embed_dim);
            blocks.push(BlockParams {
                encoder: GcnParams::glorot(&dims, rng),
                assign: MlpParams::glorot(&[cfg.embed_dim, cfg.mlp1_hidden, width], rng),
            });
        }
        let pattern_mlp = MlpParams::glorot(&[2 * cfg.embed_dim, cfg.mlp2_hidden, 1], rng);
        let scale = 1.0 / (cfg.embed_dim as f64).sqrt();
        let normal = Normal::new(0.0, scale).map_err(|e| GipError::Config(e.to_string()))?;
        let features = (0..arch.num_patterns())
            .map(|_| Tensor::from_fn(arch.pattern_nodes, cfg.embed_dim, |_, _| T::of(normal.sample(rng))))
            .collect();
        let patterns = PatternBank::new(features, arch.num_classes)?;
        let classifier = Dense {
            weight: glorot(arch.num_patterns(), arch.num_classes, rng),
            bias: Tensor::zeros(1, arch.num_classes),
            activation: Activation::Identity,
        };
        Ok(Self { arch, blocks, pattern_mlp, patterns, classifier })
    }

    /// Builds the model for `dataset` and, for centroid init, seeds the
    /// pattern features from the `train` graphs.
    pub fn for_training(dataset: &GraphDataset<T>, train: &[usize], cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Self> {
        let arch = Architecture::for_dataset(dataset, cfg)?;
        let mut model = Self::new(arch, cfg, rng)?;
        if cfg.pattern_init == PatternInit::Centroid {
            let graphs: Vec<&AttributedGraph<T>> = train.iter().map(|&i| &dataset.graphs[i]).collect();
            model.init_patterns(&graphs, cfg, rng)?;
        }
        Ok(model)
    }

    /// Every pattern row becomes the mean cluster feature of its class's
    /// coarsened graphs plus `N(0, pattern_init_noise²)` noise.
    pub fn init_patterns(&mut self, graphs: &[&AttributedGraph<T>], cfg: &TrainConfig, rng: &mut impl Rng) -> Result<()> {
        let d = cfg.embed_dim;
        let classes = self.arch.num_classes;
        let coarsened: Vec<(usize, Tensor<T>)> = graphs
            .par_iter()
            .filter_map(|g| g.label.map(|y| (y, *g)))
            .map(|(y, g)| {
                let mut tape = Tape::new();
                let vars = self.bind(&mut tape, false);
                let cg = compress(&mut tape, g, &vars.blocks, &cfg.compression())?;
                Ok((y, tape.value(cg.features).clone()))
            })
            .collect::<Result<_>>()?;
        let mut sums = vec![vec![0.0f64; d]; classes];
        let mut counts = vec![0usize; classes];
        for (y, x) in &coarsened {
            for i in 0..x.rows() {
                for (s, v) in sums[*y].iter_mut().zip(x.row(i)) {
                    *s += v.to_f64_lossy();
                }
            }
            counts[*y] += x.rows();
        }
        let normal = Normal::new(0.0, cfg.pattern_init_noise).map_err(|e| GipError::Config(e.to_string()))?;
        for t in 0..self.patterns.len() {
            let c = self.patterns.class_of[t];
            let n = counts[c].max(1) as f64;
            let centroid: Vec<f64> = sums[c].iter().map(|s| s / n).collect();
            self.patterns.features[t] = Tensor::from_fn(self.arch.pattern_nodes, d, |_, j| T::of(centroid[j] + normal.sample(rng)));
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> ModelVars {
        ModelVars {
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockVars { encoder: b.encoder.bind(tape, trainable), assign: b.assign.bind(tape, trainable) })
                .collect(),
            pattern_mlp: self.pattern_mlp.bind(tape, trainable),
            pattern_features: self.patterns.features.iter().map(|f| leaf(tape, f, trainable)).collect(),
            classifier: (leaf(tape, &self.classifier.weight, trainable), leaf(tape, &self.classifier.bias, trainable)),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend(b.encoder.tensors());
            out.extend(b.assign.tensors());
        }
        out.extend(self.pattern_mlp.tensors());
        out.extend(&self.patterns.features);
        out.extend([&self.classifier.weight, &self.classifier.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.extend(b.encoder.tensors_mut());
            out.extend(b.assign.tensors_mut());
        }
        out.extend(self.pattern_mlp.tensors_mut());
        out.extend(self.patterns.features.iter_mut());
        out.extend([&mut self.classifier.weight, &mut self.classifier.bias]);
        out
    }

    /// Stable names in [`ModelState::tensors`] order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (l, b) in self.blocks.iter().enumerate() {
            out.extend((0..b.encoder.weights.len()).map(|k| format!("block{l}.gcn.{k}")));
            for k in 0..b.assign.layers.len() {
                out.push(format!("block{l}.assign.{k}.weight"));
                out.push(format!("block{l}.assign.{k}.bias"));
            }
        }
        for k in 0..self.pattern_mlp.layers.len() {
            out.push(format!("pattern_mlp.{k}.weight"));
            out.push(format!("pattern_mlp.{k}.bias"));
        }
        out.extend((0..self.patterns.len()).map(|t| format!("pattern.{t}.features")));
        out.push("classifier.weight".into());
        out.push("classifier.bias".into());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Pattern graphs with generated soft adjacency, as plain values.
    pub fn pattern_graphs(&self) -> Result<Vec<AttributedGraph<T>>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let bound = bind_patterns(&mut tape, &vars, &Default::default())?;
        Ok(bound
            .graphs
            .iter()
            .zip(&self.patterns.class_of)
            .map(|(g, &c)| {
                AttributedGraph::new(tape.value(g.features).clone(), tape.value(g.adjacency).clone(), Some(c))
                    .expect("generated adjacency is symmetric")
            })
            .collect())
    }
}

/// Pattern graphs on a tape plus their self-kernels.
#[derive(Clone, Debug)]
pub struct BoundPatterns {
    pub graphs: Vec<GraphVars>,
    pub self_kernels: Vec<Var>,
}

pub fn bind_patterns<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &ModelVars,
    kernel: &crate::kernel::KernelConfig,
) -> Result<BoundPatterns> {
    let mut graphs = Vec::with_capacity(vars.pattern_features.len());
    let mut self_kernels = Vec::with_capacity(vars.pattern_features.len());
    for &features in &vars.pattern_features {
        let adjacency = generate_pattern_adjacency(tape, features, &vars.pattern_mlp)?;
        let g = GraphVars { features, adjacency };
        self_kernels.push(rw_kernel(tape, g, g, kernel)?);
        graphs.push(g);
    }
    Ok(BoundPatterns { graphs, self_kernels })
}

/// Tape handles for one graph's pass through the model.
#[derive(Clone, Debug)]
pub struct GraphPass {
    pub coarsened: CoarsenedGraph,
    pub matched: PatternMatch,
    /// 1 x C.
    pub log_probs: Var,
}

pub fn graph_pass<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &ModelVars,
    patterns: &BoundPatterns,
    graph: &AttributedGraph<T>,
    cfg: &TrainConfig,
) -> Result<GraphPass> {
    let coarsened = compress(tape, graph, &vars.blocks, &cfg.compression())?;
    let cg = GraphVars { features: coarsened.features, adjacency: coarsened.adjacency };
    let matched = match_patterns(tape, cg, &patterns.graphs, &patterns.self_kernels, &cfg.kernel())?;
    let (w, b) = vars.classifier;
    let logits = tape.matmul(matched.sims, w)?;
    let logits = tape.add(logits, b)?;
    let log_probs = tape.row_log_softmax(logits)?;
    Ok(GraphPass { coarsened, matched, log_probs })
}

/// Loss components, each already averaged over the batch where applicable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub ce: f64,
    pub clu: f64,
    pub bal: f64,
    pub mul: f64,
    pub div: f64,
    pub total: f64,
}

impl LossTerms {
    /// Recombine the components with the configured weights.
    pub fn weighted_total(&self, cfg: &TrainConfig) -> f64 {
        self.ce + cfg.beta1 * (cfg.alpha1 * self.clu + cfg.alpha2 * self.bal) + cfg.beta2 * (cfg.alpha3 * self.mul + cfg.alpha4 * self.div)
    }
}

/// Per-graph part of the objective: `ce + β1(α1 clu + α2 bal) + β2 α3 mul`.
struct GraphObjective {
    total: Var,
    ce: Var,
    clu: Var,
    bal: Var,
    mul: Var,
}

fn graph_objective<T: Scalar>(
    tape: &mut Tape<T>,
    pass: &GraphPass,
    label: usize,
    class_of: &[usize],
    cfg: &TrainConfig,
) -> Result<GraphObjective> {
    let lp = tape.slice(pass.log_probs, 0, 1, label, 1)?;
    let ce = tape.neg(lp)?;
    let clu = pass.coarsened.cluster_loss;
    let bal = pass.coarsened.balance_loss;
    let mul = multi_similarity_loss(tape, &[(pass.matched.distances, label)], class_of, &cfg.ms_loss())?;
    let a = tape.mul_scalar(clu, T::of(cfg.beta1 * cfg.alpha1))?;
    let b = tape.mul_scalar(bal, T::of(cfg.beta1 * cfg.alpha2))?;
    let c = tape.mul_scalar(mul, T::of(cfg.beta2 * cfg.alpha3))?;
    let total = sum_vars(tape, &[ce, a, b, c])?;
    Ok(GraphObjective { total, ce, clu, bal, mul })
}

fn pattern_diversity<T: Scalar>(tape: &mut Tape<T>, vars: &ModelVars, class_of: &[usize], cfg: &TrainConfig) -> Result<Var> {
    let bound = bind_patterns(tape, vars, &cfg.kernel())?;
    diversity_loss(tape, &bound.graphs, class_of, &cfg.kernel(), cfg.delta2, cfg.diversity_normalized)
}

fn label_of<T>(g: &AttributedGraph<T>) -> Result<usize> {
    g.label.ok_or_else(|| GipError::Dataset("training graph without a label".into()))
}

/// Batch objective on one tape, with the model bound as parameters.
/// Returns the tape, the model handles and the loss node.
pub fn total_loss_on_tape<T: Scalar>(
    model: &ModelState<T>,
    batch: &[&AttributedGraph<T>],
    cfg: &TrainConfig,
) -> Result<(Tape<T>, ModelVars, Var, LossTerms)> {
    if batch.is_empty() {
        return Err(GipError::InvalidArgument("empty batch".into()));
    }
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape, true);
    let patterns = bind_patterns(&mut tape, &vars, &cfg.kernel())?;
    let class_of = &model.patterns.class_of;
    let inv_m = T::one() / T::of_usize(batch.len());
    let mut per_graph = Vec::with_capacity(batch.len());
    let mut terms = LossTerms::default();
    for g in batch {
        let pass = graph_pass(&mut tape, &vars, &patterns, g, cfg)?;
        let obj = graph_objective(&mut tape, &pass, label_of(g)?, class_of, cfg)?;
        terms.ce += tape.item(obj.ce).to_f64_lossy();
        terms.clu += tape.item(obj.clu).to_f64_lossy();
        terms.bal += tape.item(obj.bal).to_f64_lossy();
        terms.mul += tape.item(obj.mul).to_f64_lossy();
        per_graph.push(obj.total);
    }
    let sum = sum_vars(&mut tape, &per_graph)?;
    let mean = tape.mul_scalar(sum, inv_m)?;
    let div = pattern_diversity(&mut tape, &vars, class_of, cfg)?;
    let div_w = tape.mul_scalar(div, T::of(cfg.beta2 * cfg.alpha4))?;
    let total = tape.add(mean, div_w)?;
    let m = batch.len() as f64;
    terms.ce /= m;
    terms.clu /= m;
    terms.bal /= m;
    terms.mul /= m;
    terms.div = tape.item(div).to_f64_lossy();
    terms.total = tape.item(total).to_f64_lossy();
    Ok((tape, vars, total, terms))
}

/// `L = L_CE + β1(α1 L_clu + α2 L_bal) + β2(α3 L_mul + α4 L_div)` for a batch.
pub fn total_loss<T: Scalar>(model: &ModelState<T>, batch: &[&AttributedGraph<T>], cfg: &TrainConfig) -> Result<LossTerms> {
    total_loss_on_tape(model, batch, cfg).map(|(_, _, _, terms)| terms)
}

/// Loss and parameter gradients for a batch, in [`ModelState::tensors`]
/// order. Graphs are processed on independent tapes in parallel and their
/// gradients summed in batch order, so the result does not depend on the
/// thread count.
pub fn batch_gradients<T: Scalar>(
    model: &ModelState<T>,
    batch: &[&AttributedGraph<T>],
    cfg: &TrainConfig,
) -> Result<(LossTerms, Vec<Tensor<T>>)> {
    if batch.is_empty() {
        return Err(GipError::InvalidArgument("empty batch".into()));
    }
    let class_of = &model.patterns.class_of;
    let inv_m = T::one() / T::of_usize(batch.len());
    let per_graph: Vec<([f64; 4], Vec<Tensor<T>>)> = batch
        .par_iter()
        .map(|g| {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape, true);
            let patterns = bind_patterns(&mut tape, &vars, &cfg.kernel())?;
            let pass = graph_pass(&mut tape, &vars, &patterns, g, cfg)?;
            let obj = graph_objective(&mut tape, &pass, label_of(g)?, class_of, cfg)?;
            let scaled = tape.mul_scalar(obj.total, inv_m)?;
            let grads = tape.backward(scaled)?;
            let parts = [obj.ce, obj.clu, obj.bal, obj.mul].map(|v| tape.item(v).to_f64_lossy());
            Ok((parts, vars.flat().into_iter().map(|v| grads.wrt(v)).collect()))
        })
        .collect::<Result<_>>()?;

    let mut tape = Tape::new();
    let vars = model.bind(&mut tape, true);
    let div = pattern_diversity(&mut tape, &vars, class_of, cfg)?;
    let div_w = tape.mul_scalar(div, T::of(cfg.beta2 * cfg.alpha4))?;
    let div_grads = tape.backward(div_w)?;
    let mut grads: Vec<Tensor<T>> = vars.flat().into_iter().map(|v| div_grads.wrt(v)).collect();

    let mut terms = LossTerms { div: tape.item(div).to_f64_lossy(), ..Default::default() };
    for (parts, g) in &per_graph {
        terms.ce += parts[0];
        terms.clu += parts[1];
        terms.bal += parts[2];
        terms.mul += parts[3];
        for (acc, gi) in grads.iter_mut().zip(g) {
            for (a, &b) in acc.data_mut().iter_mut().zip(gi.data()) {
                *a = *a + b;
            }
        }
    }
    let m = batch.len() as f64;
    terms.ce /= m;
    terms.clu /= m;
    terms.bal /= m;
    terms.mul /= m;
    terms.total = terms.weighted_total(cfg);
    Ok((terms, grads))
}

/// Plain-value result of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    pub probs: Vec<T>,
    /// Raw kernel similarity to each pattern.
    pub sims: Vec<T>,
    pub distances: Vec<T>,
    pub coarsened: AttributedGraph<T>,
    pub cluster_loss: T,
    pub balance_loss: T,
}

pub fn forward<T: Scalar>(model: &ModelState<T>, graph: &AttributedGraph<T>, cfg: &TrainConfig) -> Result<ForwardOutput<T>> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape, false);
    let patterns = bind_patterns(&mut tape, &vars, &cfg.kernel())?;
    let pass = graph_pass(&mut tape, &vars, &patterns, graph, cfg)?;
    let log_probs = tape.value(pass.log_probs);
    Ok(ForwardOutput {
        probs: log_probs.data().iter().map(|v| v.exp()).collect(),
        sims: tape.value(pass.matched.sims).data().to_vec(),
        distances: tape.value(pass.matched.distances).data().to_vec(),
        coarsened: pass.coarsened.to_graph(&tape),
        cluster_loss: tape.item(pass.coarsened.cluster_loss),
        balance_loss: tape.item(pass.coarsened.balance_loss),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub label: usize,
    pub probs: Vec<T>,
    pub sims: Vec<T>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict<T: Scalar>(model: &ModelState<T>, graph: &AttributedGraph<T>, cfg: &TrainConfig) -> Result<Prediction<T>> {
    let out = forward(model, graph, cfg)?;
    Ok(Prediction { label: argmax(&out.probs), probs: out.probs, sims: out.sims })
}

pub fn predict_batch<T: Scalar>(
    model: &ModelState<T>,
    graphs: &[&AttributedGraph<T>],
    cfg: &TrainConfig,
) -> Result<Vec<Prediction<T>>> {
    graphs.par_iter().map(|g| predict(model, g, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_graphcycle_with;
    use crate::graph::SyntheticConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> (GraphDataset<f64>, TrainConfig) {
        let cfg = TrainConfig { gcn_hidden: 8, embed_dim: 6, mlp1_hidden: 8, mlp2_hidden: 4, ratio: 0.25, ..TrainConfig::default() };
        let synth = SyntheticConfig { communities: (3, 3), community_size: (4, 5), ..SyntheticConfig::desk() };
        (generate_graphcycle_with(6, 3, &synth).unwrap(), cfg)
    }

    #[test]
    fn names_match_tensor_order() {
        let (ds, cfg) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = ModelState::<f64>::for_training(&ds, &[0, 1, 2, 3], &cfg, &mut rng).unwrap();
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape, true);
        let flat = vars.flat();
        assert_eq!(flat.len(), model.tensors().len());
        assert_eq!(model.tensor_names().len(), flat.len());
        for (v, t) in flat.iter().zip(model.tensors()) {
            assert_eq!(tape.value(*v), t);
        }
    }

    #[test]
    fn parallel_gradients_match_single_tape() {
        let (ds, cfg) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = ModelState::<f64>::for_training(&ds, &[0, 1, 2, 3], &cfg, &mut rng).unwrap();
        let batch: Vec<_> = ds.graphs.iter().take(3).collect();
        let (tape, vars, loss, terms) = total_loss_on_tape(&model, &batch, &cfg).unwrap();
        let grads = tape.backward(loss).unwrap();
        let (terms2, grads2) = batch_gradients(&model, &batch, &cfg).unwrap();
        assert!((terms.total - terms2.total).abs() < 1e-10 * terms.total.abs().max(1.0));
        assert!((terms.total - terms.weighted_total(&cfg)).abs() < 1e-10 * terms.total.abs().max(1.0));
        for (v, g2) in vars.flat().into_iter().zip(&grads2) {
            let g1 = grads.wrt(v);
            let scale = g1.data().iter().fold(1.0f64, |m, x| m.max(x.abs()));
            assert!(g1.max_abs_diff(g2) <= 1e-9 * scale);
        }
    }

    #[test]
    fn zero_classifier_gives_uniform_probs() {
        let (ds, cfg) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = ModelState::<f64>::for_training(&ds, &[0, 1], &cfg, &mut rng).unwrap();
        model.classifier.weight = Tensor::zeros(model.arch.num_patterns(), 2);
        let out = forward(&model, &ds.graphs[0], &cfg).unwrap();
        assert_eq!(out.probs, vec![0.5, 0.5]);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
