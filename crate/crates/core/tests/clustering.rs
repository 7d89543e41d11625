//! Coarsening losses and shapes.

mod common;

use common::{random_graph, rng};
use gip::cluster::{balance_loss, cluster_loss, coarsen_block, compress, CompressionConfig};
use gip::config::TrainConfig;
use gip::graph::GraphDataset;
use gip::model::{Architecture, ModelState};
use gip::{Tape64, Tensor64};
use proptest::prelude::*;

fn hard(assign: &[usize], k: usize) -> Tensor64 {
    Tensor64::from_fn(assign.len(), k, |i, j| if assign[i] == j { 1.0 } else { 0.0 })
}

fn losses(s: &Tensor64, a: &Tensor64) -> (f64, f64) {
    let mut tape = Tape64::new();
    let sv = tape.constant(s.clone());
    let av = tape.constant(a.clone());
    let clu = cluster_loss(&mut tape, sv, av).unwrap();
    let bal = balance_loss(&mut tape, sv).unwrap();
    (tape.item(clu), tape.item(bal))
}

fn path3() -> Tensor64 {
    Tensor64::from_f64_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]])
}

fn two_triangles() -> Tensor64 {
    Tensor64::from_fn(6, 6, |i, j| if i != j && i / 3 == j / 3 { 1.0 } else { 0.0 })
}

#[test]
fn analytic_values() {
    let (_, bal) = losses(&hard(&[0, 0, 1, 1], 2), &Tensor64::zeros(4, 4));
    assert!(bal.abs() <= 1e-9);
    let (_, bal) = losses(&hard(&[0, 0, 0, 0], 2), &Tensor64::zeros(4, 4));
    assert!((bal - (2f64.sqrt() - 1.0)).abs() <= 1e-9);
    let (clu, _) = losses(&hard(&[0, 0, 0, 1, 1, 1], 2), &two_triangles());
    assert!(clu.abs() <= 1e-9);
    let (clu, _) = losses(&hard(&[0, 0, 1], 2), &path3());
    assert!((clu - 2.0 / 3.0).abs() <= 1e-9);
}

#[test]
fn hard_coarsening_preserves_total_weight() {
    let mut r = rng(21);
    let g = random_graph(&mut r, 9, 2, 0.4, 0.0, None);
    let assign = [0, 1, 2, 0, 1, 2, 2, 1, 0];
    let mut tape = Tape64::new();
    let z = tape.constant(g.features().clone());
    let a = tape.constant(g.adjacency().clone());
    let s = tape.constant(hard(&assign, 3));
    let (_, a2) = coarsen_block(&mut tape, z, a, s).unwrap();
    assert!((tape.value(a2).sum() - g.adjacency().sum()).abs() < 1e-12);
}

#[test]
fn compression_shapes_follow_the_schedule() {
    let mut r = rng(22);
    let graphs = vec![random_graph(&mut r, 20, 3, 0.3, 0.0, Some(0)), random_graph(&mut r, 20, 3, 0.3, 0.0, Some(1))];
    let ds = GraphDataset::new("shapes", graphs, 2).unwrap();
    for (blocks, ratio, expect) in [(1, 0.2, vec![4]), (2, 0.5, vec![10, 5])] {
        let cfg = TrainConfig { num_blocks: blocks, ratio, gcn_hidden: 4, embed_dim: 3, mlp1_hidden: 4, ..TrainConfig::default() };
        let arch = Architecture::for_dataset(&ds, &cfg).unwrap();
        let model = ModelState::new(arch, &cfg, &mut r).unwrap();
        let mut tape = Tape64::new();
        let vars = model.bind(&mut tape, false);
        let cg = compress(&mut tape, &ds.graphs[0], &vars.blocks, &cfg.compression()).unwrap();
        let sizes: Vec<usize> = cg.assignments.iter().map(|&s| tape.shape(s).1).collect();
        assert_eq!(sizes, expect);
        let last = *expect.last().unwrap();
        assert_eq!(tape.shape(cg.features), (last, 3));
        let adj = tape.value(cg.adjacency);
        assert!(adj.is_symmetric(1e-9));
        assert!((0..last).all(|i| adj[(i, i)] == 0.0));
    }
    assert_eq!(CompressionConfig { ratio: 0.2, ..CompressionConfig::default() }.schedule(20), vec![4]);
}

fn row_stochastic(n: usize, k: usize) -> impl Strategy<Value = Tensor64> {
    prop::collection::vec(0.01f64..1.0, n * k).prop_map(move |v| {
        let mut t = Tensor64::from_vec(n, k, v).unwrap();
        for i in 0..n {
            let s: f64 = t.row(i).iter().sum();
            for j in 0..k {
                t[(i, j)] /= s;
            }
        }
        t
    })
}

fn adjacency(n: usize) -> impl Strategy<Value = Tensor64> {
    prop::collection::vec(prop::option::of(0.1f64..2.0), n * n).prop_map(move |w| {
        let mut a = Tensor64::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if let Some(v) = w[i * n + j] {
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
        }
        a
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_stay_in_range((s, a) in (2usize..8, 2usize..4).prop_flat_map(|(n, k)| (row_stochastic(n, k), adjacency(n)))) {
        let (clu, bal) = losses(&s, &a);
        let k = s.cols() as f64;
        prop_assert!((-1e-12..=1.0 + 1e-6).contains(&clu), "clu {}", clu);
        prop_assert!(bal >= -1e-9 && bal <= k.sqrt() - 1.0 + 1e-9, "bal {}", bal);
    }

    #[test]
    fn balance_is_zero_exactly_for_equal_hard_clusters(assign in prop::collection::vec(0usize..3, 6)) {
        let s = hard(&assign, 3);
        let (_, bal) = losses(&s, &Tensor64::zeros(6, 6));
        let counts: Vec<usize> = (0..3).map(|c| assign.iter().filter(|&&a| a == c).count()).collect();
        let equal = counts.iter().all(|&c| c == 2);
        prop_assert_eq!(bal.abs() <= 1e-9, equal);
    }

    #[test]
    fn coarsened_adjacency_is_symmetric((s, a) in (2usize..8, 2usize..4).prop_flat_map(|(n, k)| (row_stochastic(n, k), adjacency(n)))) {
        let mut tape = Tape64::new();
        let n = s.rows();
        let z = tape.constant(Tensor64::ones(n, 2));
        let av = tape.constant(a);
        let sv = tape.constant(s);
        let (_, a2) = coarsen_block(&mut tape, z, av, sv).unwrap();
        prop_assert!(tape.value(a2).is_symmetric(1e-9));
    }
}
