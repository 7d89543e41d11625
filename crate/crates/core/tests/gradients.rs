//! Central-difference checks for every tape operation and every loss term.

mod common;

use common::{max_fd_error, model_fd_error, per_graph, rng, small_config, term_eval, two_graph_fixture};
use gip::cluster::AdjacencyScaling;
use gip::config::TrainConfig;
use gip::kernel::{kernel_distance, normalized_similarity, rw_kernel, GraphVars, KernelConfig};
use gip::model::total_loss_on_tape;
use gip::patterns::{diversity_loss, multi_similarity_loss};
use gip::{Graph64, Tape64, Tensor64, Var};
use rand::Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_tensor(r: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor64 {
    Tensor64::from_fn(rows, cols, |_, _| r.random_range(lo..hi))
}

/// Reduce any output to a scalar with fixed random weights so every output
/// entry contributes a distinct amount.
fn weighted_sum(tape: &mut Tape64, v: Var, seed: u64) -> Var {
    let (rows, cols) = tape.shape(v);
    let w = tape.constant(rand_tensor(&mut rng(seed), rows, cols, 0.5, 1.5));
    let prod = tape.mul(v, w).unwrap();
    tape.sum(prod).unwrap()
}

fn check_op(name: &str, inputs: Vec<Tensor64>, op: impl Fn(&mut Tape64, &[Var]) -> Var) {
    let err = max_fd_error(&inputs, |t, v| {
        let out = op(t, v);
        weighted_sum(t, out, 99)
    }, STEP);
    assert!(err <= TOL, "{name}: relative error {err:e}");
}

#[test]
fn elementwise_and_matrix_ops() {
    let mut r = rng(1);
    let a = rand_tensor(&mut r, 3, 4, -1.0, 1.0);
    let b = rand_tensor(&mut r, 3, 4, -1.0, 1.0);
    let pos = rand_tensor(&mut r, 3, 4, 0.5, 2.0);
    let c = rand_tensor(&mut r, 4, 2, -1.0, 1.0);
    let sq = rand_tensor(&mut r, 3, 3, -1.0, 1.0);
    let row = rand_tensor(&mut r, 1, 4, -1.0, 1.0);
    let col = rand_tensor(&mut r, 3, 1, -1.0, 1.0);
    // keep relu and max inputs away from their kinks
    let away = a.map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });

    check_op("matmul", vec![a.clone(), c.clone()], |t, v| t.matmul(v[0], v[1]).unwrap());
    check_op("transpose", vec![a.clone()], |t, v| t.transpose(v[0]).unwrap());
    check_op("add", vec![a.clone(), b.clone()], |t, v| t.add(v[0], v[1]).unwrap());
    check_op("sub", vec![a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]).unwrap());
    check_op("mul", vec![a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]).unwrap());
    check_op("div", vec![a.clone(), pos.clone()], |t, v| t.div(v[0], v[1]).unwrap());
    check_op("add_scalar", vec![a.clone()], |t, v| t.add_scalar(v[0], 0.7).unwrap());
    check_op("mul_scalar", vec![a.clone()], |t, v| t.mul_scalar(v[0], -1.3).unwrap());
    check_op("recip", vec![pos.clone()], |t, v| t.recip(v[0]).unwrap());
    check_op("neg", vec![a.clone()], |t, v| t.neg(v[0]).unwrap());
    check_op("row_softmax", vec![a.clone()], |t, v| t.row_softmax(v[0]).unwrap());
    check_op("row_log_softmax", vec![a.clone()], |t, v| t.row_log_softmax(v[0]).unwrap());
    check_op("sigmoid", vec![a.clone()], |t, v| t.sigmoid(v[0]).unwrap());
    check_op("relu", vec![away.clone()], |t, v| t.relu(v[0]).unwrap());
    check_op("log", vec![pos.clone()], |t, v| t.log(v[0]).unwrap());
    check_op("exp", vec![a.clone()], |t, v| t.exp(v[0]).unwrap());
    check_op("sqrt", vec![pos.clone()], |t, v| t.sqrt(v[0]).unwrap());
    check_op("sum", vec![a.clone()], |t, v| t.sum(v[0]).unwrap());
    check_op("trace", vec![sq.clone()], |t, v| t.trace(v[0]).unwrap());
    check_op("frobenius_norm", vec![a.clone()], |t, v| t.frobenius_norm(v[0]).unwrap());
    check_op("log_sum_exp", vec![a.clone()], |t, v| t.log_sum_exp(v[0]).unwrap());
    check_op("concat_rows", vec![a.clone(), row.clone()], |t, v| t.concat_rows(&[v[0], v[1]]).unwrap());
    check_op("concat_cols", vec![a.clone(), col.clone()], |t, v| t.concat_cols(&[v[0], v[1]]).unwrap());
    check_op("slice", vec![a.clone()], |t, v| t.slice(v[0], 1, 2, 1, 3).unwrap());
    check_op("max_scalar", vec![away.clone()], |t, v| t.max_scalar(v[0], 0.0).unwrap());
    check_op("add_row", vec![a.clone(), row.clone()], |t, v| t.add_row(v[0], v[1]).unwrap());
    check_op("col_sums", vec![a.clone()], |t, v| t.col_sums(v[0]).unwrap());
    check_op("row_sums", vec![a.clone()], |t, v| t.row_sums(v[0]).unwrap());
    check_op("tile_col", vec![col.clone()], |t, v| t.tile_col(v[0], 3).unwrap());
    let one = Tensor64::scalar(0.8);
    check_op("scalar broadcast mul", vec![a.clone(), one], |t, v| t.mul(v[0], v[1]).unwrap());
}

#[test]
fn kernel_functions_wrt_features_and_adjacency() {
    let mut r = rng(2);
    let sym = |r: &mut rand_chacha::ChaCha8Rng, n: usize| {
        let m = rand_tensor(r, n, n, 0.1, 1.0);
        m.zip_map(&m.transpose(), |a, b| 0.5 * (a + b))
    };
    let inputs = vec![rand_tensor(&mut r, 3, 2, 0.1, 1.0), sym(&mut r, 3), rand_tensor(&mut r, 4, 2, 0.1, 1.0), sym(&mut r, 4)];
    let cfg = KernelConfig::with_steps(2);
    let gv = |v: &[Var]| (GraphVars { features: v[0], adjacency: v[1] }, GraphVars { features: v[2], adjacency: v[3] });
    let err = max_fd_error(&inputs, |t, v| { let (g, h) = gv(v); rw_kernel(t, g, h, &cfg).unwrap() }, STEP);
    assert!(err <= TOL, "rw_kernel: {err:e}");
    let err = max_fd_error(&inputs, |t, v| { let (g, h) = gv(v); normalized_similarity(t, g, h, &cfg).unwrap() }, STEP);
    assert!(err <= TOL, "normalized_similarity: {err:e}");
    let err = max_fd_error(&inputs, |t, v| { let (g, h) = gv(v); kernel_distance(t, g, h, &cfg).unwrap() }, STEP);
    assert!(err <= TOL, "kernel_distance: {err:e}");
}

#[test]
fn every_loss_term_matches_finite_differences() {
    let cfg = small_config();
    let (ds, model) = two_graph_fixture(&cfg, 3);
    assert_eq!(model.patterns.len(), 2);
    let graphs = &ds.graphs;
    let class_of = model.patterns.class_of.clone();
    let ms = cfg.ms_loss();

    let clu = model_fd_error(&model, term_eval(&cfg, per_graph(graphs, &cfg, |_, p, _| p.coarsened.cluster_loss)));
    let bal = model_fd_error(&model, term_eval(&cfg, per_graph(graphs, &cfg, |_, p, _| p.coarsened.balance_loss)));
    let ce = model_fd_error(
        &model,
        term_eval(&cfg, per_graph(graphs, &cfg, |t, p, y| {
            let lp = t.slice(p.log_probs, 0, 1, y, 1).unwrap();
            t.neg(lp).unwrap()
        })),
    );
    let mul = model_fd_error(
        &model,
        term_eval(&cfg, per_graph(graphs, &cfg, |t, p, y| {
            multi_similarity_loss(t, &[(p.matched.distances, y)], &class_of, &ms).unwrap()
        })),
    );
    let batch: Vec<&Graph64> = graphs.iter().collect();
    let total = model_fd_error(&model, |m| {
        let (tape, vars, out, _) = total_loss_on_tape(m, &batch, &cfg).unwrap();
        (tape, vars.flat(), out)
    });
    for (name, err) in [("clu", clu), ("bal", bal), ("ce", ce), ("mul", mul), ("total", total)] {
        assert!(err <= TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn diversity_gradient_with_two_patterns_per_class() {
    // one class pair per class so the hinge has something to act on
    let cfg = TrainConfig { patterns_per_class: 2, delta2: 0.0, ..small_config() };
    let (_, model) = two_graph_fixture(&cfg, 4);
    let class_of = model.patterns.class_of.clone();
    let div = model_fd_error(
        &model,
        term_eval(&cfg, |t, _, pats| diversity_loss(t, &pats.graphs, &class_of, &cfg.kernel(), cfg.delta2, true).unwrap()),
    );
    assert!(div <= TOL, "div: relative error {div:e}");
    let raw = model_fd_error(
        &model,
        term_eval(&cfg, |t, _, pats| diversity_loss(t, &pats.graphs, &class_of, &cfg.kernel(), cfg.delta2, false).unwrap()),
    );
    assert!(raw <= TOL, "raw-kernel div: relative error {raw:e}");
}

#[test]
fn total_loss_gradient_under_each_adjacency_scaling() {
    for scaling in [AdjacencyScaling::None, AdjacencyScaling::Max, AdjacencyScaling::Symmetric] {
        let cfg = TrainConfig { adjacency_scaling: scaling, patterns_per_class: 2, ..small_config() };
        let (ds, model) = two_graph_fixture(&cfg, 5);
        let batch: Vec<&Graph64> = ds.graphs.iter().collect();
        let err = model_fd_error(&model, |m| {
            let (tape, vars, out, _) = total_loss_on_tape(m, &batch, &cfg).unwrap();
            (tape, vars.flat(), out)
        });
        assert!(err <= TOL, "{scaling:?}: relative error {err:e}");
    }
}

#[test]
fn two_blocks_total_loss_gradient() {
    let cfg = TrainConfig { num_blocks: 2, ratio: 0.6, ..small_config() };
    let (ds, model) = two_graph_fixture(&cfg, 6);
    let batch: Vec<&Graph64> = ds.graphs.iter().collect();
    let err = model_fd_error(&model, |m| {
        let (tape, vars, out, _) = total_loss_on_tape(m, &batch, &cfg).unwrap();
        (tape, vars.flat(), out)
    });
    assert!(err <= TOL, "two blocks: relative error {err:e}");
}

