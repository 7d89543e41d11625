//! Instance explanations and class-level pattern export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{GipError, Result};
use crate::graph::AttributedGraph;
use crate::kernel::eval;
use crate::metrics::EDGE_THRESHOLD;
use crate::model::{argmax, forward, ModelState};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPattern {
    pub pattern: usize,
    /// Raw kernel similarity.
    pub similarity: f64,
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub graph: usize,
    pub predicted: usize,
    pub probs: Vec<f64>,
    /// Patterns of the predicted class, most similar first.
    pub ranking: Vec<RankedPattern>,
}

pub fn explain_instance<T: Scalar>(
    model: &ModelState<T>,
    graph: &AttributedGraph<T>,
    graph_id: usize,
    cfg: &TrainConfig,
) -> Result<Explanation> {
    let out = forward(model, graph, cfg)?;
    let predicted = argmax(&out.probs);
    let kernel = cfg.kernel();
    let patterns = model.pattern_graphs()?;
    let kgg = eval::rw_kernel(&out.coarsened, &out.coarsened, &kernel)?.to_f64_lossy();
    let mut ranking = Vec::with_capacity(model.patterns.per_class());
    for t in model.patterns.of_class(predicted) {
        let sim = out.sims[t].to_f64_lossy();
        let kpp = eval::rw_kernel(&patterns[t], &patterns[t], &kernel)?.to_f64_lossy();
        let normalized = if kgg > 0.0 && kpp > 0.0 { sim / (kgg * kpp).sqrt() } else { 0.0 };
        ranking.push(RankedPattern { pattern: t, similarity: sim, normalized });
    }
    // stable sort keeps bank order among equal similarities
    ranking.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    Ok(Explanation {
        graph: graph_id,
        predicted,
        probs: out.probs.iter().map(|p| p.to_f64_lossy()).collect(),
        ranking,
    })
}

/// Exported form of one learned pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternRecord {
    pub pattern: usize,
    pub class: usize,
    pub nodes: usize,
    pub adjacency: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
    /// Node pairs `i < j` whose soft weight exceeds the edge threshold.
    pub edges: Vec<(usize, usize)>,
}

impl PatternRecord {
    pub fn from_graph<T: Scalar>(pattern: usize, class: usize, g: &AttributedGraph<T>) -> Self {
        let adjacency: Vec<Vec<f64>> = g.adjacency().to_rows().iter().map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect();
        let n = g.node_count();
        let edges = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| adjacency[i][j] > EDGE_THRESHOLD)
            .collect();
        Self {
            pattern,
            class,
            nodes: n,
            features: g.features().to_rows().iter().map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect(),
            adjacency,
            edges,
        }
    }

    /// Graphviz description; edge pen width follows the soft weight.
    pub fn to_dot(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "graph pattern_{} {{", self.pattern);
        let _ = writeln!(s, "  label=\"pattern {} (class {})\";", self.pattern, self.class);
        for i in 0..self.nodes {
            let _ = writeln!(s, "  n{i};");
        }
        for &(i, j) in &self.edges {
            let w = self.adjacency[i][j];
            let _ = writeln!(s, "  n{i} -- n{j} [weight={w:.4}, penwidth={:.2}];", 1.0 + 3.0 * w);
        }
        s.push_str("}\n");
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(GipError::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Writes `pattern_<t>.json` and `pattern_<t>.dot` per pattern; returns the
/// paths written.
pub fn export_patterns<T: Scalar>(model: &ModelState<T>, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (t, g) in model.pattern_graphs()?.iter().enumerate() {
        let rec = PatternRecord::from_graph(t, model.patterns.class_of[t], g);
        let json = dir.join(format!("pattern_{t}.json"));
        std::fs::write(&json, serde_json::to_string_pretty(&rec)?)?;
        let dot = dir.join(format!("pattern_{t}.dot"));
        std::fs::write(&dot, rec.to_dot())?;
        written.push(json);
        written.push(dot);
    }
    Ok(written)
}
