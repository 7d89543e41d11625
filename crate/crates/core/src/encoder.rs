//! GCN node encoder and the small MLPs used by the assignment and
//! pattern-topology heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

/// Glorot-uniform `fan_in x fan_out` matrix.
pub fn glorot<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(fan_in, fan_out, |_, _| T::of(rng.random_range(-limit..=limit)))
}

/// One weight matrix per layer; layer `l` maps `dims[l] -> dims[l+1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams<T> {
    pub weights: Vec<Tensor<T>>,
}

#[derive(Clone, Debug)]
pub struct GcnVars {
    pub weights: Vec<Var>,
}

impl<T: Scalar> GcnParams<T> {
    pub fn glorot(dims: &[usize], rng: &mut impl Rng) -> Self {
        Self { weights: dims.windows(2).map(|w| glorot(w[0], w[1], rng)).collect() }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self { weights: dims.windows(2).map(|w| Tensor::zeros(w[0], w[1])).collect() }
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, Tensor::cols)
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> GcnVars {
        GcnVars { weights: self.weights.iter().map(|w| leaf(tape, w, trainable)).collect() }
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.weights.iter().collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.weights.iter_mut().collect()
    }
}

impl GcnVars {
    pub fn flat(&self) -> Vec<Var> {
        self.weights.clone()
    }
}

pub(crate) fn leaf<T: Scalar>(tape: &mut Tape<T>, t: &Tensor<T>, trainable: bool) -> Var {
    if trainable {
        tape.param(t.clone())
    } else {
        tape.constant(t.clone())
    }
}

/// `H^{k+1} = relu(Ã H^k W^k)`, with the last layer left linear.
///
/// `a_norm` must already be the self-loop normalized adjacency.
pub fn gcn_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, a_norm: Var, params: &GcnVars) -> Result<Var> {
    let mut h = x;
    let last = params.weights.len().saturating_sub(1);
    for (l, &w) in params.weights.iter().enumerate() {
        let hw = tape.matmul(h, w)?;
        h = tape.matmul(a_norm, hw)?;
        if l < last {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    /// 1 x out row broadcast over the batch.
    pub bias: Tensor<T>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<Dense<T>>,
}

#[derive(Clone, Debug)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var, Activation)>,
}

impl MlpVars {
    pub fn flat(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b, _)| [w, b]).collect()
    }
}

impl<T: Scalar> MlpParams<T> {
    /// Hidden layers use relu; the output layer is linear.
    pub fn glorot(dims: &[usize], rng: &mut impl Rng) -> Self {
        let n = dims.len() - 1;
        Self {
            layers: dims
                .windows(2)
                .enumerate()
                .map(|(l, w)| Dense {
                    weight: glorot(w[0], w[1], rng),
                    bias: Tensor::zeros(1, w[1]),
                    activation: if l + 1 < n { Activation::Relu } else { Activation::Identity },
                })
                .collect(),
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.len() - 1;
        Self {
            layers: dims
                .windows(2)
                .enumerate()
                .map(|(l, w)| Dense {
                    weight: Tensor::zeros(w[0], w[1]),
                    bias: Tensor::zeros(1, w[1]),
                    activation: if l + 1 < n { Activation::Relu } else { Activation::Identity },
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.rows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (leaf(tape, &l.weight, trainable), leaf(tape, &l.bias, trainable), l.activation))
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}

/// Affine map plus activation per layer. Output is left raw; callers apply
/// softmax or sigmoid as needed.
pub fn mlp_forward<T: Scalar>(tape: &mut Tape<T>, input: Var, params: &MlpVars) -> Result<Var> {
    let mut h = input;
    for &(w, b, act) in &params.layers {
        let z = tape.matmul(h, w)?;
        h = tape.add_row(z, b)?;
        if act == Activation::Relu {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalize_adjacency;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_embedding() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::ones(3, 4));
        let a = tape.constant(Tensor::identity(3));
        let vars = GcnParams::zeros(&[4, 8, 2]).bind(&mut tape, true);
        let z = gcn_forward(&mut tape, x, a, &vars).unwrap();
        assert_eq!(tape.value(z), &Tensor::zeros(3, 2));
    }

    #[test]
    fn identity_layer_returns_features() {
        let mut tape = Tape::<f64>::new();
        let feats = Tensor::from_f64_rows(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let x = tape.constant(feats.clone());
        let a = tape.constant(Tensor::identity(2));
        let vars = GcnParams { weights: vec![Tensor::identity(2)] }.bind(&mut tape, false);
        let z = gcn_forward(&mut tape, x, a, &vars).unwrap();
        assert_eq!(tape.value(z), &feats);
    }

    #[test]
    fn triangle_matches_two_matmul_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let adj = Tensor::<f64>::from_f64_rows(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]]);
        let norm = normalize_adjacency(&adj).unwrap();
        let feats: Tensor<f64> = glorot(3, 2, &mut rng);
        let params = GcnParams::<f64>::glorot(&[2, 3, 2], &mut rng);

        let mut tape = Tape::new();
        let x = tape.constant(feats.clone());
        let a = tape.constant(norm.clone());
        let vars = params.bind(&mut tape, false);
        let z = gcn_forward(&mut tape, x, a, &vars).unwrap();

        let h1 = norm.matmul(&feats.matmul(&params.weights[0]).unwrap()).unwrap().map(|v| v.max(0.0));
        let expect = norm.matmul(&h1.matmul(&params.weights[1]).unwrap()).unwrap();
        assert!(tape.value(z).max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn first_layer_dim_mismatch() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::ones(3, 5));
        let a = tape.constant(Tensor::identity(3));
        let vars = GcnParams::zeros(&[4, 2]).bind(&mut tape, true);
        assert!(gcn_forward(&mut tape, x, a, &vars).is_err());
    }

    #[test]
    fn mlp_zero_and_affine_cases() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let zero = MlpParams::zeros(&[2, 3, 1]).bind(&mut tape, true);
        let out = mlp_forward(&mut tape, x, &zero).unwrap();
        assert_eq!(tape.value(out), &Tensor::zeros(2, 1));

        let affine = MlpParams {
            layers: vec![Dense {
                weight: Tensor::from_f64_rows(&[&[1.0, 0.0], &[1.0, -1.0]]),
                bias: Tensor::from_f64_rows(&[&[0.5, 1.0]]),
                activation: Activation::Identity,
            }],
        }
        .bind(&mut tape, false);
        let out = mlp_forward(&mut tape, x, &affine).unwrap();
        assert_eq!(tape.value(out), &Tensor::from_f64_rows(&[&[3.5, -1.0], &[7.5, -3.0]]));
    }

    #[test]
    fn two_layer_relu_net_matches_hand_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let input: Tensor<f64> = glorot(3, 4, &mut rng).map(|v| v * 3.0);
        let mut params = MlpParams::<f64>::glorot(&[4, 5, 2], &mut rng);
        params.layers[0].bias = glorot(1, 5, &mut rng);
        params.layers[1].bias = glorot(1, 2, &mut rng);

        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let vars = params.bind(&mut tape, false);
        let out = mlp_forward(&mut tape, x, &vars).unwrap();

        let mut expect = Tensor::zeros(3, 2);
        for i in 0..3 {
            let mut hidden = [0.0; 5];
            for (h, hv) in hidden.iter_mut().enumerate() {
                let mut acc = params.layers[0].bias[(0, h)];
                for f in 0..4 {
                    acc += input[(i, f)] * params.layers[0].weight[(f, h)];
                }
                *hv = acc.max(0.0);
            }
            for o in 0..2 {
                let mut acc = params.layers[1].bias[(0, o)];
                for (h, hv) in hidden.iter().enumerate() {
                    acc += hv * params.layers[1].weight[(h, o)];
                }
                expect[(i, o)] = acc;
            }
        }
        assert!(tape.value(out).max_abs_diff(&expect) < 1e-13);
    }
}
