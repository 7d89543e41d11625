//! Synthetic datasets whose class is the layout of Barabási–Albert
//! communities ("super-nodes") wired together.

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttributedGraph, GraphDataset};
use crate::error::{GipError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Cycle,
    /// Random spanning tree: the non-cycle class of GraphCycle.
    RandomTree,
    Wheel,
    Grid,
    /// Binary tree (heap layout).
    Tree,
    Ladder,
    Star,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Cycle => "cycle",
            Layout::RandomTree => "random_tree",
            Layout::Wheel => "wheel",
            Layout::Grid => "grid",
            Layout::Tree => "tree",
            Layout::Ladder => "ladder",
            Layout::Star => "star",
        }
    }

    /// Edges among `k` super-nodes.
    pub fn super_edges(self, k: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        match self {
            Layout::Cycle => {
                for i in 0..k {
                    edges.push((i, (i + 1) % k));
                }
            }
            Layout::RandomTree => {
                let mut order: Vec<usize> = (0..k).collect();
                order.shuffle(rng);
                for i in 1..k {
                    let parent = order[rng.random_range(0..i)];
                    edges.push((parent, order[i]));
                }
            }
            Layout::Wheel => {
                let rim = k - 1;
                for i in 0..rim {
                    edges.push((0, i + 1));
                    edges.push((i + 1, (i + 1) % rim + 1));
                }
            }
            Layout::Grid => {
                let rows = ((k as f64).sqrt().floor() as usize).max(1);
                let cols = k.div_ceil(rows);
                for i in 0..k {
                    if (i % cols) + 1 < cols && i + 1 < k {
                        edges.push((i, i + 1));
                    }
                    if i + cols < k {
                        edges.push((i, i + cols));
                    }
                }
            }
            Layout::Tree => {
                for i in 1..k {
                    edges.push(((i - 1) / 2, i));
                }
            }
            Layout::Ladder => {
                let top = k.div_ceil(2);
                for i in 0..k {
                    if i + 1 < top || (i >= top && i + 1 < k) {
                        edges.push((i, i + 1));
                    }
                }
                for i in 0..(k - top) {
                    edges.push((i, top + i));
                }
            }
            Layout::Star => {
                for i in 1..k {
                    edges.push((0, i));
                }
            }
        }
        edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect()
    }
}

/// Ground-truth super-graph stored next to each synthetic graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperGraph {
    pub layout: Layout,
    /// Community id of every node.
    pub membership: Vec<usize>,
    pub super_edges: Vec<(usize, usize)>,
}

impl SuperGraph {
    pub fn num_communities(&self) -> usize {
        self.membership.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn super_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_communities()];
        for &(a, b) in &self.super_edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// The community layout as a graph with all-ones features of width `dim`.
    pub fn motif_graph<T: Scalar>(&self, dim: usize) -> AttributedGraph<T> {
        let k = self.num_communities();
        AttributedGraph::from_edges(Tensor::ones(k, dim), &self.super_edges, None).expect("valid super edges")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub communities: (usize, usize),
    pub community_size: (usize, usize),
    /// Edges added per new node in the preferential-attachment process.
    pub attachment: usize,
    /// Port nodes drawn per community side of each super-edge.
    pub ports: usize,
    /// Range of the per-graph cross-pair wiring probability.
    pub wiring_probability: (f64, f64),
    pub max_degree: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            communities: (8, 15),
            community_size: (10, 200),
            attachment: 2,
            ports: 3,
            wiring_probability: (0.05, 0.15),
            max_degree: 64,
        }
    }
}

impl SyntheticConfig {
    /// Small graphs for quick end-to-end runs: 3–5 communities of 10–30 nodes.
    pub fn desk() -> Self {
        Self { communities: (3, 5), community_size: (10, 30), ..Self::default() }
    }
}

/// Barabási–Albert graph on `n` nodes seeded with an `(m+1)`-clique.
fn barabasi_albert(n: usize, m: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let seed = (m + 1).min(n);
    let mut edges = Vec::new();
    let mut pool = Vec::new();
    for u in 0..seed {
        for v in (u + 1)..seed {
            edges.push((u, v));
            pool.push(u);
            pool.push(v);
        }
    }
    for t in seed..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m.min(t) {
            let cand = pool[rng.random_range(0..pool.len())];
            if !targets.contains(&cand) {
                targets.push(cand);
            }
        }
        for &v in &targets {
            edges.push((v, t));
            pool.push(v);
            pool.push(t);
        }
    }
    edges
}

/// Edge list, node count and label of one generated graph.
type RawGraph = (Vec<(usize, usize)>, usize, usize);

fn generate(
    name: &str,
    layouts: &[Layout],
    n_graphs: usize,
    seed: u64,
    cfg: &SyntheticConfig,
) -> Result<(Vec<RawGraph>, Vec<SuperGraph>)> {
    if n_graphs < 2 {
        return Err(GipError::InvalidArgument(format!("{name} needs at least 2 graphs, got {n_graphs}")));
    }
    let (kmin, kmax) = cfg.communities;
    let (smin, smax) = cfg.community_size;
    if kmin < 3 || kmax < kmin || smin < cfg.attachment + 1 || smax < smin {
        return Err(GipError::InvalidArgument(format!("bad synthetic config {cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::with_capacity(n_graphs);
    let mut supers = Vec::with_capacity(n_graphs);
    for i in 0..n_graphs {
        let class = i % layouts.len();
        let layout = layouts[class];
        let min_k = if layout == Layout::Wheel { kmin.max(4) } else { kmin };
        let k = rng.random_range(min_k..=kmax.max(min_k));
        let mut membership = Vec::new();
        let mut edges = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::with_capacity(k);
        for c in 0..k {
            let size = rng.random_range(smin..=smax);
            let offset = membership.len();
            edges.extend(barabasi_albert(size, cfg.attachment, &mut rng).into_iter().map(|(u, v)| (u + offset, v + offset)));
            membership.extend(std::iter::repeat_n(c, size));
            members.push((offset..offset + size).collect());
        }
        let super_edges = layout.super_edges(k, &mut rng);
        let p = rng.random_range(cfg.wiring_probability.0..=cfg.wiring_probability.1);
        for &(a, b) in &super_edges {
            let pa = sample(&mut rng, members[a].len(), cfg.ports.min(members[a].len())).into_vec();
            let pb = sample(&mut rng, members[b].len(), cfg.ports.min(members[b].len())).into_vec();
            let mut wired = false;
            for &u in &pa {
                for &v in &pb {
                    if rng.random_bool(p) {
                        edges.push((members[a][u], members[b][v]));
                        wired = true;
                    }
                }
            }
            if !wired {
                let u = pa[rng.random_range(0..pa.len())];
                let v = pb[rng.random_range(0..pb.len())];
                edges.push((members[a][u], members[b][v]));
            }
        }
        raw.push((edges, membership.len(), class));
        supers.push(SuperGraph { layout, membership, super_edges });
    }
    Ok((raw, supers))
}

fn assemble<T: Scalar>(
    name: &str,
    classes: usize,
    raw: Vec<RawGraph>,
    supers: Vec<SuperGraph>,
    max_degree: usize,
) -> Result<GraphDataset<T>> {
    let graphs: Vec<AttributedGraph<T>> = raw
        .into_iter()
        .map(|(edges, n, class)| AttributedGraph::from_edges(Tensor::zeros(n, 1), &edges, Some(class)))
        .collect::<Result<_>>()?;
    let degrees: Vec<Vec<usize>> = graphs.iter().map(AttributedGraph::degrees).collect();
    let cap = degrees.iter().flatten().copied().max().unwrap_or(0).min(max_degree);
    let graphs = graphs
        .into_iter()
        .zip(degrees)
        .map(|(g, deg)| {
            let x = Tensor::from_fn(deg.len(), cap + 1, |i, j| if deg[i].min(cap) == j { T::one() } else { T::zero() });
            AttributedGraph::new(x, g.adjacency().clone(), g.label)
        })
        .collect::<Result<_>>()?;
    let mut ds = GraphDataset::new(name, graphs, classes)?;
    ds.supergraphs = Some(supers);
    Ok(ds)
}

/// Two balanced classes: 0 = communities on a random tree, 1 = on a cycle.
pub fn generate_graphcycle<T: Scalar>(n_graphs: usize, seed: u64) -> Result<GraphDataset<T>> {
    generate_graphcycle_with(n_graphs, seed, &SyntheticConfig::default())
}

pub fn generate_graphcycle_with<T: Scalar>(n_graphs: usize, seed: u64, cfg: &SyntheticConfig) -> Result<GraphDataset<T>> {
    let (raw, supers) = generate("GraphCycle", &[Layout::RandomTree, Layout::Cycle], n_graphs, seed, cfg)?;
    assemble("GraphCycle", 2, raw, supers, cfg.max_degree)
}

/// Five balanced classes: wheel, grid, tree, ladder, star.
pub fn generate_graphfive<T: Scalar>(n_graphs: usize, seed: u64) -> Result<GraphDataset<T>> {
    generate_graphfive_with(n_graphs, seed, &SyntheticConfig::default())
}

pub fn generate_graphfive_with<T: Scalar>(n_graphs: usize, seed: u64, cfg: &SyntheticConfig) -> Result<GraphDataset<T>> {
    let layouts = [Layout::Wheel, Layout::Grid, Layout::Tree, Layout::Ladder, Layout::Star];
    let (raw, supers) = generate("GraphFive", &layouts, n_graphs, seed, cfg)?;
    assemble("GraphFive", 5, raw, supers, cfg.max_degree)
}
