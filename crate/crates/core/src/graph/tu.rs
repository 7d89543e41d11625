//! TU benchmark text layout: `<name>_A.txt`, `<name>_graph_indicator.txt`,
//! `<name>_graph_labels.txt`, and optional `<name>_node_labels.txt` /
//! `<name>_node_attributes.txt`. Node ids in the files are 1-based.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{AttributedGraph, GraphDataset, SuperGraph};
use crate::error::{GipError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct TuOptions {
    /// Degree one-hot cap for datasets without node labels or attributes.
    pub max_degree: usize,
}

impl Default for TuOptions {
    fn default() -> Self {
        Self { max_degree: 64 }
    }
}

fn file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    if !path.exists() {
        return Err(GipError::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

fn parse_ints(path: &Path) -> Result<Vec<i64>> {
    let shown = path.display().to_string();
    read_lines(path)?
        .into_iter()
        .map(|(n, l)| l.parse::<i64>().map_err(|_| GipError::parse(&shown, n, format!("expected an integer, got {l:?}"))))
        .collect()
}

pub fn parse_tu_dataset<T: Scalar>(dir: impl AsRef<Path>, name: &str) -> Result<GraphDataset<T>> {
    parse_tu_dataset_with(dir, name, TuOptions::default())
}

pub fn parse_tu_dataset_with<T: Scalar>(dir: impl AsRef<Path>, name: &str, opts: TuOptions) -> Result<GraphDataset<T>> {
    let dir = dir.as_ref();
    let a_path = file(dir, name, "A");
    let indicator_path = file(dir, name, "graph_indicator");
    let labels_path = file(dir, name, "graph_labels");
    for p in [&a_path, &indicator_path, &labels_path] {
        if !p.exists() {
            return Err(GipError::MissingFile(p.clone()));
        }
    }

    let indicator = parse_ints(&indicator_path)?;
    let raw_labels = parse_ints(&labels_path)?;
    let num_graphs = raw_labels.len();
    let num_nodes = indicator.len();

    // graph index (0-based) per node, and local offset within the graph
    let mut node_graph = Vec::with_capacity(num_nodes);
    let mut counts = vec![0usize; num_graphs];
    let mut local = Vec::with_capacity(num_nodes);
    for (i, &g) in indicator.iter().enumerate() {
        if g < 1 || g as usize > num_graphs {
            return Err(GipError::parse(
                indicator_path.display().to_string(),
                i + 1,
                format!("graph id {g} outside 1..={num_graphs}"),
            ));
        }
        let g = g as usize - 1;
        node_graph.push(g);
        local.push(counts[g]);
        counts[g] += 1;
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    let a_shown = a_path.display().to_string();
    for (n, line) in read_lines(&a_path)? {
        let mut it = line.split(',').map(str::trim);
        let (Some(u), Some(v), None) = (it.next(), it.next(), it.next()) else {
            return Err(GipError::parse(&a_shown, n, format!("expected 'u, v', got {line:?}")));
        };
        let parse = |s: &str| -> Result<usize> {
            let id: usize = s.parse().map_err(|_| GipError::parse(&a_shown, n, format!("bad node id {s:?}")))?;
            if id == 0 || id > num_nodes {
                return Err(GipError::parse(&a_shown, n, format!("node {id} outside any graph")));
            }
            Ok(id - 1)
        };
        let (u, v) = (parse(u)?, parse(v)?);
        if node_graph[u] != node_graph[v] {
            return Err(GipError::parse(&a_shown, n, format!("edge ({}, {}) spans two graphs", u + 1, v + 1)));
        }
        edges[node_graph[u]].push((local[u], local[v]));
    }

    // features: node-label one-hot, then attributes; degree one-hot if neither
    let node_labels_path = file(dir, name, "node_labels");
    let attrs_path = file(dir, name, "node_attributes");
    let mut blocks: Vec<Vec<Vec<f64>>> = Vec::new();
    if node_labels_path.exists() {
        let labels = parse_ints(&node_labels_path)?;
        if labels.len() != num_nodes {
            return Err(GipError::Dataset(format!("{} node labels for {num_nodes} nodes", labels.len())));
        }
        let vocab: BTreeMap<i64, usize> =
            labels.iter().copied().collect::<BTreeSet<_>>().into_iter().enumerate().map(|(i, l)| (l, i)).collect();
        blocks.push(
            labels
                .iter()
                .map(|l| {
                    let mut row = vec![0.0; vocab.len()];
                    row[vocab[l]] = 1.0;
                    row
                })
                .collect(),
        );
    }
    if attrs_path.exists() {
        let shown = attrs_path.display().to_string();
        let rows: Vec<Vec<f64>> = read_lines(&attrs_path)?
            .into_iter()
            .map(|(n, l)| {
                l.split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| GipError::parse(&shown, n, format!("bad attribute {s:?}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        if rows.len() != num_nodes {
            return Err(GipError::Dataset(format!("{} attribute rows for {num_nodes} nodes", rows.len())));
        }
        blocks.push(rows);
    }

    let mut graphs_edges = Vec::with_capacity(num_graphs);
    let mut start = vec![0usize; num_graphs + 1];
    for g in 0..num_graphs {
        start[g + 1] = start[g] + counts[g];
    }
    // nodes of a graph are contiguous in TU files; honour arbitrary order anyway
    let mut global_of: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    for (i, &g) in node_graph.iter().enumerate() {
        global_of[g].push(i);
    }

    let features: Vec<Vec<Vec<f64>>> = if blocks.is_empty() {
        let degrees: Vec<Vec<usize>> = (0..num_graphs)
            .map(|g| {
                let mut deg = vec![0usize; counts[g]];
                let mut seen = BTreeSet::new();
                for &(u, v) in &edges[g] {
                    if u != v && seen.insert((u.min(v), u.max(v))) {
                        deg[u] += 1;
                        deg[v] += 1;
                    }
                }
                deg
            })
            .collect();
        let max_deg = degrees.iter().flatten().copied().max().unwrap_or(0).min(opts.max_degree);
        degrees
            .into_iter()
            .map(|deg| {
                deg.into_iter()
                    .map(|d| {
                        let mut row = vec![0.0; max_deg + 1];
                        row[d.min(max_deg)] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect()
    } else {
        global_of
            .iter()
            .map(|nodes| {
                nodes
                    .iter()
                    .map(|&i| blocks.iter().flat_map(|b| b[i].iter().copied()).collect())
                    .collect()
            })
            .collect()
    };

    let classes: BTreeMap<i64, usize> =
        raw_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().enumerate().map(|(i, l)| (l, i)).collect();

    for g in 0..num_graphs {
        let x = &features[g];
        let dim = x.first().map_or(0, Vec::len);
        let data: Vec<T> = x.iter().flatten().map(|&v| T::of(v)).collect();
        let tensor = Tensor::from_vec(x.len(), dim, data)?;
        graphs_edges.push(AttributedGraph::from_edges(tensor, &edges[g], Some(classes[&raw_labels[g]]))?);
    }

    let mut dataset = GraphDataset::new(name, graphs_edges, classes.len())?;
    let meta = dir.join(format!("{name}_supergraph.json"));
    if meta.exists() {
        let supers: Vec<SuperGraph> = serde_json::from_str(&fs::read_to_string(&meta)?)?;
        if supers.len() != dataset.len() {
            return Err(GipError::Dataset(format!(
                "{} supergraph records for {} graphs",
                supers.len(),
                dataset.len()
            )));
        }
        dataset.supergraphs = Some(supers);
    }
    Ok(dataset)
}

/// Write a dataset in TU layout. Features go to `node_attributes` so that
/// parsing the output reproduces them exactly; any positive adjacency entry
/// is written as an edge in both directions.
pub fn write_tu_dataset<T: Scalar>(dataset: &GraphDataset<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let name = &dataset.name;
    let (mut a, mut ind, mut labels, mut attrs) = (String::new(), String::new(), String::new(), String::new());
    let mut offset = 0usize;
    for (g, graph) in dataset.graphs.iter().enumerate() {
        let n = graph.node_count();
        for u in 0..n {
            for v in 0..n {
                if u != v && graph.adjacency()[(u, v)] > T::zero() {
                    writeln!(a, "{}, {}", offset + u + 1, offset + v + 1).expect("string write");
                }
            }
            writeln!(ind, "{}", g + 1).expect("string write");
            let row: Vec<String> = graph.features().row(u).iter().map(|x| format!("{}", x.to_f64_lossy())).collect();
            writeln!(attrs, "{}", row.join(", ")).expect("string write");
        }
        writeln!(labels, "{}", graph.label.unwrap_or(0)).expect("string write");
        offset += n;
    }
    fs::write(file(dir, name, "A"), a)?;
    fs::write(file(dir, name, "graph_indicator"), ind)?;
    fs::write(file(dir, name, "graph_labels"), labels)?;
    fs::write(file(dir, name, "node_attributes"), attrs)?;
    if let Some(supers) = &dataset.supergraphs {
        fs::write(dir.join(format!("{name}_supergraph.json")), serde_json::to_string(supers)?)?;
    }
    Ok(())
}
