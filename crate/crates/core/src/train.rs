//! Mini-batch training with Adam, early stopping and per-epoch history.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{GipError, Result};
use crate::graph::{AttributedGraph, GraphDataset, SplitSpec};
use crate::model::{batch_gradients, predict_batch, ModelState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam without weight decay.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &[&Tensor<T>], cfg: &TrainConfig) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Self { lr: cfg.learning_rate, beta1: cfg.adam_beta1, beta2: cfg.adam_beta2, eps: cfg.adam_eps, step: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.step));
        let c2 = T::of(1.0 - self.beta2.powi(self.step));
        let (lr, eps) = (T::of(self.lr), T::of(self.eps));
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let p = p.data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// One line of the training history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ce: f64,
    pub clu: f64,
    pub bal: f64,
    pub mul: f64,
    pub div: f64,
    pub total: f64,
    /// `None` when there is no validation split.
    pub val_acc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the best validation accuracy.
    pub model: ModelState<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

pub fn write_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in history {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

/// Fraction of `graphs` whose predicted label matches.
pub fn accuracy<T: Scalar>(model: &ModelState<T>, graphs: &[&AttributedGraph<T>], cfg: &TrainConfig) -> Result<f64> {
    if graphs.is_empty() {
        return Err(GipError::InvalidArgument("accuracy over an empty split".into()));
    }
    let preds = predict_batch(model, graphs, cfg)?;
    let hits = preds.iter().zip(graphs).filter(|(p, g)| g.label == Some(p.label)).count();
    Ok(hits as f64 / graphs.len() as f64)
}

fn divergence(epoch: usize, batch: usize, err: GipError) -> GipError {
    match err {
        GipError::NonFinite { op } => GipError::Divergence { epoch, batch, detail: format!("non-finite value in {op}") },
        other => other,
    }
}

/// Train on `split.train`, selecting the epoch with the best accuracy on
/// `split.val`. Ties go to the lower training loss, which is also the sole
/// criterion when there is no validation set.
pub fn train<T: Scalar>(dataset: &GraphDataset<T>, split: &SplitSpec, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with_observer(dataset, split, cfg, |_| {})
}

/// As [`train`], calling `observe` after every epoch.
pub fn train_with_observer<T: Scalar>(
    dataset: &GraphDataset<T>,
    split: &SplitSpec,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(GipError::Dataset("empty training split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ModelState::for_training(dataset, &split.train, cfg, &mut rng)?;
    let mut adam = Adam::new(&model.tensors(), cfg);
    let val: Vec<&AttributedGraph<T>> = split.val.iter().map(|&i| &dataset.graphs[i]).collect();

    let mut order = split.train.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (model.clone(), 0usize, f64::NEG_INFINITY, f64::INFINITY);
    let mut since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 6];
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&AttributedGraph<T>> = chunk.iter().map(|&i| &dataset.graphs[i]).collect();
            let (terms, grads) = batch_gradients(&model, &batch, cfg).map_err(|e| divergence(epoch, b, e))?;
            if !terms.total.is_finite() || grads.iter().any(|g| !g.all_finite()) {
                return Err(GipError::Divergence { epoch, batch: b, detail: format!("loss {}", terms.total) });
            }
            adam.step(model.tensors_mut(), &grads);
            let w = batch.len() as f64;
            for (s, v) in sums.iter_mut().zip([terms.ce, terms.clu, terms.bal, terms.mul, terms.div, terms.total]) {
                *s += w * v;
            }
        }
        let n = order.len() as f64;
        let val_acc = if val.is_empty() { None } else { Some(accuracy(&model, &val, cfg).map_err(|e| divergence(epoch, 0, e))?) };
        let rec = EpochRecord {
            epoch,
            ce: sums[0] / n,
            clu: sums[1] / n,
            bal: sums[2] / n,
            mul: sums[3] / n,
            div: sums[4] / n,
            total: sums[5] / n,
            val_acc,
        };
        observe(&rec);
        history.push(rec);

        let improved = match val_acc {
            Some(acc) => acc > best.2 || (acc == best.2 && rec.total < best.3),
            None => rec.total < best.3,
        };
        if improved {
            best = (model.clone(), epoch, val_acc.unwrap_or(f64::NAN), rec.total);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }
    let (model, best_epoch, best_val_acc, _) = best;
    Ok(TrainOutcome { model, history, best_epoch, best_val_acc })
}
