//! Independent GCN classifier used to score pattern explanations.
//!
//! Three GCN layers, mean pooling over nodes and a linear head, trained with
//! cross-entropy on whatever graphs it is given.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::Tape;
use crate::config::TrainConfig;
use crate::encoder::{gcn_forward, glorot, Activation, Dense, GcnParams};
use crate::error::{GipError, Result};
use crate::graph::{normalize_adjacency, AttributedGraph};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::Adam;

#[derive(Clone, Debug, PartialEq)]
pub struct Probe<T> {
    pub encoder: GcnParams<T>,
    pub head: Dense<T>,
}

/// Seed offset so the probe never shares a stream with the main model.
const PROBE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

impl<T: Scalar> Probe<T> {
    pub fn new(input_dim: usize, hidden: usize, classes: usize, rng: &mut impl rand::Rng) -> Self {
        Self {
            encoder: GcnParams::glorot(&[input_dim, hidden, hidden, hidden], rng),
            head: Dense { weight: glorot(hidden, classes, rng), bias: Tensor::zeros(1, classes), activation: Activation::Identity },
        }
    }

    fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = self.encoder.tensors();
        out.extend([&self.head.weight, &self.head.bias]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.encoder.tensors_mut();
        out.extend([&mut self.head.weight, &mut self.head.bias]);
        out
    }

    /// Returns the tape, the parameter handles and the 1 x C log-probabilities.
    fn pass(&self, graph: &AttributedGraph<T>, trainable: bool) -> Result<(Tape<T>, Vec<crate::Var>, crate::Var)> {
        let mut tape = Tape::new();
        let enc = self.encoder.bind(&mut tape, trainable);
        let w = crate::encoder::leaf(&mut tape, &self.head.weight, trainable);
        let b = crate::encoder::leaf(&mut tape, &self.head.bias, trainable);
        let x = tape.constant(graph.features().clone());
        let a = tape.constant(normalize_adjacency(graph.adjacency())?);
        let h = gcn_forward(&mut tape, x, a, &enc)?;
        let h = tape.relu(h)?;
        let pooled = tape.col_sums(h)?;
        let pooled = tape.mul_scalar(pooled, T::one() / T::of_usize(graph.node_count()))?;
        let logits = tape.matmul(pooled, w)?;
        let logits = tape.add(logits, b)?;
        let lp = tape.row_log_softmax(logits)?;
        let mut params = enc.flat();
        params.extend([w, b]);
        Ok((tape, params, lp))
    }

    pub fn probabilities(&self, graph: &AttributedGraph<T>) -> Result<Vec<T>> {
        let (tape, _, lp) = self.pass(graph, false)?;
        Ok(tape.value(lp).data().iter().map(|v| v.exp()).collect())
    }

    /// Trains on labelled graphs; labels are taken from the graphs themselves.
    pub fn train(graphs: &[AttributedGraph<T>], classes: usize, cfg: &TrainConfig) -> Result<Self> {
        if graphs.is_empty() {
            return Err(GipError::Dataset("no graphs to train the probe on".into()));
        }
        if graphs.iter().any(|g| g.label.is_none_or(|y| y >= classes)) {
            return Err(GipError::Dataset("probe graphs need labels below the class count".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ PROBE_SEED_SALT);
        let dim = graphs[0].feature_dim();
        let mut probe = Self::new(dim, cfg.probe_hidden, classes, &mut rng);
        let probe_cfg = TrainConfig { learning_rate: cfg.probe_learning_rate, ..cfg.clone() };
        let mut adam = Adam::new(&probe.tensors(), &probe_cfg);
        let mut order: Vec<usize> = (0..graphs.len()).collect();
        for _ in 0..cfg.probe_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let inv = T::one() / T::of_usize(chunk.len());
                let grads: Vec<Vec<Tensor<T>>> = chunk
                    .par_iter()
                    .map(|&i| {
                        let g = &graphs[i];
                        let (mut tape, params, lp) = probe.pass(g, true)?;
                        let y = g.label.expect("checked above");
                        let picked = tape.slice(lp, 0, 1, y, 1)?;
                        let loss = tape.mul_scalar(picked, -inv)?;
                        let grads = tape.backward(loss)?;
                        Ok(params.into_iter().map(|p| grads.wrt(p)).collect())
                    })
                    .collect::<Result<_>>()?;
                let mut total = grads[0].clone();
                for g in &grads[1..] {
                    for (acc, gi) in total.iter_mut().zip(g) {
                        *acc = acc.zip_map(gi, |a, b| a + b);
                    }
                }
                adam.step(probe.tensors_mut(), &total);
            }
        }
        Ok(probe)
    }
}

/// Same graph with every positive edge weight set to 1.
pub fn binarize<T: Scalar>(graph: &AttributedGraph<T>, threshold: T) -> AttributedGraph<T> {
    let adj = graph.adjacency().map(|v| if v > threshold { T::one() } else { T::zero() });
    AttributedGraph::new(graph.features().clone(), adj, graph.label).expect("thresholding keeps symmetry")
}
