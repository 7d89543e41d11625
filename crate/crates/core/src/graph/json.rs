//! Single-graph JSON files.
//!
//! ```json
//! { "features": [[1.0], [1.0]], "edges": [[0, 1]], "label": 0 }
//! ```
//!
//! A dense `"adjacency"` matrix may be given instead of `"edges"` for
//! weighted graphs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AttributedGraph;
use crate::error::{GipError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

impl GraphFile {
    pub fn to_graph<T: Scalar>(&self) -> Result<AttributedGraph<T>> {
        let rows: Vec<Vec<T>> = self.features.iter().map(|r| r.iter().map(|&v| T::of(v)).collect()).collect();
        let features = Tensor::from_rows(&rows)?;
        match (&self.edges, &self.adjacency) {
            (Some(_), Some(_)) => Err(GipError::InvalidArgument("graph file has both edges and adjacency".into())),
            (Some(edges), None) => {
                let n = features.rows();
                if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
                    return Err(GipError::InvalidArgument(format!("edge ({a}, {b}) outside {n} nodes")));
                }
                AttributedGraph::from_edges(features, edges, self.label)
            }
            (None, adjacency) => {
                let adj = match adjacency {
                    Some(a) => Tensor::from_rows(&a.iter().map(|r| r.iter().map(|&v| T::of(v)).collect()).collect::<Vec<_>>())?,
                    None => Tensor::zeros(features.rows(), features.rows()),
                };
                AttributedGraph::new(features, adj, self.label)
            }
        }
    }

    pub fn from_graph<T: Scalar>(g: &AttributedGraph<T>) -> Self {
        let to_rows = |t: &Tensor<T>| t.to_rows().iter().map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect();
        Self { features: to_rows(g.features()), edges: None, adjacency: Some(to_rows(g.adjacency())), label: g.label }
    }
}

pub fn read_graph_json<T: Scalar>(path: impl AsRef<Path>) -> Result<AttributedGraph<T>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(GipError::MissingFile(path.to_path_buf()));
    }
    let file: GraphFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    file.to_graph()
}

pub fn write_graph_json<T: Scalar>(path: impl AsRef<Path>, g: &AttributedGraph<T>) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&GraphFile::from_graph(g))?)?;
    Ok(())
}
