//! Classification and explanation metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{GipError, Result};
use crate::graph::{AttributedGraph, GraphDataset, SuperGraph};
use crate::kernel::{eval, KernelConfig};
use crate::model::{argmax, forward, predict_batch, ModelState};
use crate::probe::{binarize, Probe};
use crate::scalar::Scalar;

/// Pattern edges at or below this weight are dropped when a pattern is
/// shown to the probe or exported.
pub const EDGE_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub explanation_accuracy: Option<f64>,
    /// Only defined for synthetic data with stored super-graphs.
    pub consistency: Option<f64>,
    /// `None` when every test graph falls to the same pattern.
    pub silhouette: Option<f64>,
}

/// Accuracy and macro-F1. Classes that appear in neither `truth` nor `pred`
/// are left out of the average; a class that is present but never predicted
/// contributes an F1 of 0.
pub fn accuracy_f1(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<(f64, f64)> {
    if truth.is_empty() {
        return Err(GipError::InvalidArgument("metrics over an empty split".into()));
    }
    if truth.len() != pred.len() {
        return Err(GipError::Shape(format!("{} labels, {} predictions", truth.len(), pred.len())));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fneg = vec![0usize; num_classes];
    for (&y, &p) in truth.iter().zip(pred) {
        if y >= num_classes || p >= num_classes {
            return Err(GipError::InvalidArgument(format!("label {} or prediction {} out of range", y, p)));
        }
        if y == p {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fneg[y] += 1;
        }
    }
    let hits: usize = tp.iter().sum();
    let mut f1_sum = 0.0;
    let mut present = 0usize;
    for c in 0..num_classes {
        let denom = 2 * tp[c] + fp[c] + fneg[c];
        if denom == 0 {
            continue;
        }
        present += 1;
        f1_sum += 2.0 * tp[c] as f64 / denom as f64;
    }
    Ok((hits as f64 / truth.len() as f64, f1_sum / present as f64))
}

/// Accuracy and macro-F1 of the model on labelled graphs.
pub fn eval_accuracy_f1<T: Scalar>(model: &ModelState<T>, graphs: &[&AttributedGraph<T>], cfg: &TrainConfig) -> Result<(f64, f64)> {
    if graphs.is_empty() {
        return Err(GipError::InvalidArgument("metrics over an empty split".into()));
    }
    let truth = graphs
        .iter()
        .map(|g| g.label.ok_or_else(|| GipError::Dataset("evaluation graph without a label".into())))
        .collect::<Result<Vec<_>>>()?;
    let pred: Vec<usize> = predict_batch(model, graphs, cfg)?.into_iter().map(|p| p.label).collect();
    accuracy_f1(&truth, &pred, model.arch.num_classes)
}

/// Mean silhouette of points under `assignment`, from a full distance matrix.
/// Points alone in their cluster score 0.
pub fn silhouette(distances: &[Vec<f64>], assignment: &[usize]) -> Result<f64> {
    let n = assignment.len();
    if n == 0 || distances.len() != n || distances.iter().any(|r| r.len() != n) {
        return Err(GipError::Shape("silhouette needs an n x n distance matrix".into()));
    }
    let clusters = assignment.iter().copied().max().unwrap_or(0) + 1;
    let mut sizes = vec![0usize; clusters];
    for &c in assignment {
        sizes[c] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(GipError::SingleCluster);
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assignment[i];
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; clusters];
        for j in 0..n {
            if j != i {
                sums[assignment[j]] += distances[i][j];
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..clusters)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Pairwise kernel-space distances, computing each self-kernel once.
pub fn kernel_distance_matrix<T: Scalar>(graphs: &[AttributedGraph<T>], cfg: &KernelConfig) -> Result<Vec<Vec<f64>>> {
    let selfk: Vec<f64> = graphs
        .par_iter()
        .map(|g| eval::rw_kernel(g, g, cfg).map(|k| k.to_f64_lossy()))
        .collect::<Result<_>>()?;
    let n = graphs.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let cross: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| eval::rw_kernel(&graphs[i], &graphs[j], cfg).map(|k| k.to_f64_lossy()))
        .collect::<Result<_>>()?;
    let mut out = vec![vec![0.0; n]; n];
    for (&(i, j), &k) in pairs.iter().zip(&cross) {
        let d = eval::distance_from_kernels(k, selfk[i], selfk[j]);
        out[i][j] = d;
        out[j][i] = d;
    }
    Ok(out)
}

/// Silhouette of the coarsened `graphs` clustered around their nearest
/// pattern (by kernel distance).
pub fn eval_silhouette<T: Scalar>(model: &ModelState<T>, graphs: &[&AttributedGraph<T>], cfg: &TrainConfig) -> Result<f64> {
    if model.patterns.len() < 2 {
        return Err(GipError::InvalidArgument("silhouette needs at least 2 patterns".into()));
    }
    let outs = graphs.par_iter().map(|g| forward(model, g, cfg)).collect::<Result<Vec<_>>>()?;
    let assignment: Vec<usize> = outs
        .iter()
        .map(|o| {
            let neg: Vec<T> = o.distances.iter().map(|&d| -d).collect();
            argmax(&neg)
        })
        .collect();
    let coarsened: Vec<AttributedGraph<T>> = outs.into_iter().map(|o| o.coarsened).collect();
    silhouette(&kernel_distance_matrix(&coarsened, &cfg.kernel())?, &assignment)
}

/// Community count and sorted super-edges.
type MotifKey = (usize, Vec<(usize, usize)>);

/// Distinct ground-truth motifs per class, as unit-feature graphs.
pub fn class_motifs<T: Scalar>(dataset: &GraphDataset<T>, dim: usize) -> Result<Vec<Vec<AttributedGraph<T>>>> {
    let supers = dataset
        .supergraphs
        .as_ref()
        .ok_or_else(|| GipError::Dataset(format!("{} has no super-graph metadata", dataset.name)))?;
    let mut seen: Vec<Vec<MotifKey>> = vec![Vec::new(); dataset.num_classes];
    let mut motifs = vec![Vec::new(); dataset.num_classes];
    for (g, sg) in dataset.graphs.iter().zip(supers) {
        let Some(y) = g.label else { continue };
        let key = canonical_edges(sg);
        if !seen[y].contains(&key) {
            seen[y].push(key);
            motifs[y].push(sg.motif_graph(dim));
        }
    }
    Ok(motifs)
}

fn canonical_edges(sg: &SuperGraph) -> MotifKey {
    let mut edges: Vec<(usize, usize)> = sg.super_edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    edges.sort_unstable();
    (sg.num_communities(), edges)
}

/// Per class: mean over its patterns of the mean normalized similarity to
/// the class's distinct motifs. Reported as the mean over classes.
pub fn eval_consistency<T: Scalar>(model: &ModelState<T>, dataset: &GraphDataset<T>, cfg: &TrainConfig) -> Result<f64> {
    let patterns = model.pattern_graphs()?;
    let dim = patterns.first().map_or(0, AttributedGraph::feature_dim);
    let motifs = class_motifs(dataset, dim)?;
    let kernel = cfg.kernel();
    let mut class_scores = Vec::new();
    for (c, class_motifs) in motifs.iter().enumerate() {
        if class_motifs.is_empty() {
            continue;
        }
        let members: Vec<&AttributedGraph<T>> = model.patterns.of_class(c).map(|t| &patterns[t]).collect();
        let scores = members
            .par_iter()
            .map(|p| {
                let sims = class_motifs
                    .iter()
                    .map(|m| eval::normalized_similarity(*p, m, &kernel).map(|s| s.to_f64_lossy()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(sims.iter().sum::<f64>() / sims.len() as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        class_scores.push(scores.iter().sum::<f64>() / scores.len() as f64);
    }
    if class_scores.is_empty() {
        return Err(GipError::Dataset("no labelled graphs with motifs".into()));
    }
    Ok(class_scores.iter().sum::<f64>() / class_scores.len() as f64)
}

/// Mean probe confidence in each pattern's own class, with pattern edges
/// binarized at [`EDGE_THRESHOLD`].
pub fn explanation_accuracy<T: Scalar>(model: &ModelState<T>, probe: &Probe<T>) -> Result<f64> {
    let patterns = model.pattern_graphs()?;
    let mut total = 0.0;
    for (p, &c) in patterns.iter().zip(&model.patterns.class_of) {
        let probs = probe.probabilities(&binarize(p, T::of(EDGE_THRESHOLD)))?;
        total += probs[c].to_f64_lossy();
    }
    Ok(total / patterns.len() as f64)
}

/// Trains the probe on the model's coarsened versions of `train` graphs
/// (edges binarized at any positive weight) and scores the patterns.
pub fn eval_explanation_accuracy<T: Scalar>(model: &ModelState<T>, train: &[&AttributedGraph<T>], cfg: &TrainConfig) -> Result<f64> {
    let coarsened = train
        .par_iter()
        .map(|g| {
            let out = forward(model, g, cfg)?;
            let mut cg = binarize(&out.coarsened, T::zero());
            cg.label = g.label;
            Ok(cg)
        })
        .collect::<Result<Vec<_>>>()?;
    let probe = Probe::train(&coarsened, model.arch.num_classes, cfg)?;
    explanation_accuracy(model, &probe)
}

/// Every metric on the test split. Explanation accuracy, consistency and
/// silhouette are `None` when they cannot be computed for this data.
pub fn evaluate<T: Scalar>(
    model: &ModelState<T>,
    dataset: &GraphDataset<T>,
    train: &[usize],
    test: &[usize],
    cfg: &TrainConfig,
) -> Result<MetricReport> {
    let pick = |idx: &[usize]| idx.iter().map(|&i| &dataset.graphs[i]).collect::<Vec<_>>();
    let test_graphs = pick(test);
    let (accuracy, macro_f1) = eval_accuracy_f1(model, &test_graphs, cfg)?;
    let explanation_accuracy = if train.is_empty() { None } else { Some(eval_explanation_accuracy(model, &pick(train), cfg)?) };
    let consistency = if dataset.supergraphs.is_some() { Some(eval_consistency(model, dataset, cfg)?) } else { None };
    let silhouette = match eval_silhouette(model, &test_graphs, cfg) {
        Ok(s) => Some(s),
        Err(GipError::SingleCluster) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport { accuracy, macro_f1, explanation_accuracy, consistency, silhouette })
}
