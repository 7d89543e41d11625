#![allow(dead_code)]

use gip::config::TrainConfig;
use gip::graph::{AttributedGraph, GraphDataset};
use gip::model::{bind_patterns, graph_pass, Architecture, BoundPatterns, GraphPass, ModelState, ModelVars};
use gip::{Graph64, Tape64, Tensor64, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi style graph with features drawn uniformly from `[lo, 1)`.
pub fn random_graph(rng: &mut impl Rng, n: usize, d: usize, p: f64, lo: f64, label: Option<usize>) -> Graph64 {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let x = Tensor64::from_fn(n, d, |_, _| rng.random_range(lo..1.0));
    AttributedGraph::from_edges(x, &edges, label).unwrap()
}

/// Weighted variant: every kept edge gets a weight in `[0.2, 1.5)`.
pub fn random_weighted_graph(rng: &mut impl Rng, n: usize, d: usize, p: f64) -> Graph64 {
    let mut a = Tensor64::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                let w = rng.random_range(0.2..1.5);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    let x = Tensor64::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    AttributedGraph::new(x, a, None).unwrap()
}

pub fn small_config() -> TrainConfig {
    TrainConfig {
        gcn_layers: 2,
        gcn_hidden: 4,
        embed_dim: 3,
        mlp1_hidden: 4,
        mlp2_hidden: 3,
        patterns_per_class: 1,
        pattern_nodes: 3,
        ratio: 0.4,
        kernel_steps: 2,
        alpha1: 0.3,
        alpha2: 0.2,
        alpha3: 0.3,
        alpha4: 0.4,
        beta1: 0.5,
        beta2: 0.5,
        ..TrainConfig::default()
    }
}

/// Two labelled graphs (one per class) and a randomly initialised model
/// with one pattern per class.
pub fn two_graph_fixture(cfg: &TrainConfig, seed: u64) -> (GraphDataset<f64>, ModelState<f64>) {
    let mut r = rng(seed);
    let graphs = vec![random_graph(&mut r, 6, 2, 0.5, 0.1, Some(0)), random_graph(&mut r, 7, 2, 0.5, 0.1, Some(1))];
    let ds = GraphDataset::new("fixture", graphs, 2).unwrap();
    let arch = Architecture::for_dataset(&ds, cfg).unwrap();
    let model = ModelState::new(arch, cfg, &mut r).unwrap();
    (ds, model)
}

/// Largest relative error between reverse-mode and central-difference
/// gradients over every coordinate of `params`. Coordinates where both
/// gradients are below `1e-8` in magnitude are skipped as zero.
pub fn max_fd_error(params: &[Tensor64], f: impl Fn(&mut Tape64, &[Var]) -> Var, step: f64) -> f64 {
    let eval = |ps: &[Tensor64]| {
        let mut tape = Tape64::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.item(out)
    };
    let mut tape = Tape64::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();

    let mut worst: f64 = 0.0;
    let mut work = params.to_vec();
    for (pi, v) in vars.iter().enumerate() {
        let g = grads.wrt(*v);
        for k in 0..params[pi].data().len() {
            let orig = params[pi].data()[k];
            work[pi].data_mut()[k] = orig + step;
            let up = eval(&work);
            work[pi].data_mut()[k] = orig - step;
            let down = eval(&work);
            work[pi].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = g.data()[k];
            let scale = analytic.abs().max(numeric.abs());
            if scale < 1e-8 {
                continue;
            }
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}

/// Explicit direct-product oracle: builds `A ⊗ A′`, powers it and sums
/// `sᵀ A_×^r s` for `r = 0..=steps`.
pub fn kronecker_kernel(g: &Graph64, h: &Graph64, steps: usize) -> f64 {
    let (n, m) = (g.node_count(), h.node_count());
    let size = n * m;
    let idx = |i: usize, j: usize| i * m + j;
    let mut s = vec![0.0; size];
    for i in 0..n {
        for j in 0..m {
            s[idx(i, j)] = (0..g.feature_dim()).map(|c| g.features()[(i, c)] * h.features()[(j, c)]).sum();
        }
    }
    let mut ax = vec![vec![0.0; size]; size];
    for i in 0..n {
        for j in 0..m {
            for k in 0..n {
                for l in 0..m {
                    ax[idx(i, j)][idx(k, l)] = g.adjacency()[(i, k)] * h.adjacency()[(j, l)];
                }
            }
        }
    }
    let mut w = s.clone();
    let mut total = 0.0;
    for r in 0..=steps {
        if r > 0 {
            w = (0..size).map(|a| (0..size).map(|b| ax[a][b] * w[b]).sum()).collect();
        }
        total += s.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>();
    }
    total
}

/// Relative error of the model gradient against central differences over
/// every parameter coordinate. `eval` builds the objective on a fresh tape
/// and returns it with the bound parameters in tensor order.
pub fn model_fd_error(model: &ModelState<f64>, eval: impl Fn(&ModelState<f64>) -> (Tape64, Vec<Var>, Var)) -> f64 {
    let (tape, params, out) = eval(model);
    let grads = tape.backward(out).unwrap();
    let analytic: Vec<Tensor64> = params.into_iter().map(|v| grads.wrt(v)).collect();
    let value = |m: &ModelState<f64>| {
        let (t, _, o) = eval(m);
        t.item(o)
    };

    let mut work = model.clone();
    let mut worst: f64 = 0.0;
    for (pi, g) in analytic.iter().enumerate() {
        for k in 0..g.data().len() {
            let orig = work.tensors_mut()[pi].data()[k];
            work.tensors_mut()[pi].data_mut()[k] = orig + FD_STEP;
            let up = value(&work);
            work.tensors_mut()[pi].data_mut()[k] = orig - FD_STEP;
            let down = value(&work);
            work.tensors_mut()[pi].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let scale = g.data()[k].abs().max(numeric.abs());
            if scale > 1e-8 {
                worst = worst.max((g.data()[k] - numeric).abs() / scale);
            }
        }
    }
    worst
}

/// Objective built from the public forward pieces.
pub fn term_eval<'a>(
    cfg: &'a TrainConfig,
    term: impl Fn(&mut Tape64, &ModelVars, &BoundPatterns) -> Var + 'a,
) -> impl Fn(&ModelState<f64>) -> (Tape64, Vec<Var>, Var) + 'a {
    move |m| {
        let mut tape = Tape64::new();
        let vars = m.bind(&mut tape, true);
        let pats = bind_patterns(&mut tape, &vars, &cfg.kernel()).unwrap();
        let out = term(&mut tape, &vars, &pats);
        (tape, vars.flat(), out)
    }
}

/// Batch mean of a per-graph quantity picked from the forward pass.
pub fn per_graph<'a>(
    graphs: &'a [Graph64],
    cfg: &'a TrainConfig,
    pick: impl Fn(&mut Tape64, &GraphPass, usize) -> Var + 'a,
) -> impl Fn(&mut Tape64, &ModelVars, &BoundPatterns) -> Var + 'a {
    move |tape, vars, pats| {
        let parts: Vec<Var> = graphs
            .iter()
            .map(|g| {
                let pass = graph_pass(tape, vars, pats, g, cfg).unwrap();
                pick(tape, &pass, g.label.unwrap())
            })
            .collect();
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = tape.add(acc, p).unwrap();
        }
        tape.mul_scalar(acc, 1.0 / parts.len() as f64).unwrap()
    }
}

/// Straightforward silhouette: every pair visited explicitly.
pub fn naive_silhouette(d: &[Vec<f64>], assign: &[usize]) -> f64 {
    let n = assign.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut same = Vec::new();
        let mut other: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
        for j in 0..n {
            if i == j {
                continue;
            }
            if assign[j] == assign[i] {
                same.push(d[i][j]);
            } else {
                other.entry(assign[j]).or_default().push(d[i][j]);
            }
        }
        if same.is_empty() {
            continue;
        }
        let a = same.iter().sum::<f64>() / same.len() as f64;
        let b = other.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).fold(f64::INFINITY, f64::min);
        let s = if a.max(b) > 0.0 { (b - a) / a.max(b) } else { 0.0 };
        total += s;
    }
    total / n as f64
}
