//! The fusion MLP: dense layers with batch normalization and dropout applied
//! to each layer's input. Hidden layers use rectified-linear activations; the
//! final layer is linear so type scores stay unbounded dot products.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};
use rand::Rng;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Array2<f64>, // in x out
    pub b: Array2<f64>, // 1 x out
}

impl Dense {
    pub fn new<R: Rng>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let scale = (6.0 / (input_dim + output_dim) as f64).sqrt();
        Dense {
            w: Array2::from_shape_fn((input_dim, output_dim), |_| rng.random_range(-scale..scale)),
            b: Array2::zeros((1, output_dim)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Dense {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array2::zeros(self.b.raw_dim()),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = self
            .b
            .broadcast((x.nrows(), self.b.ncols()))
            .expect("bias broadcasts")
            .to_owned();
        general_mat_mul(1.0, x, &self.w, 1.0, &mut y);
        y
    }

    /// Returns `dx`; accumulates `dw`, `db` into `grads`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grads: &mut Dense) -> Array2<f64> {
        general_mat_mul(1.0, &x.t(), dy, 1.0, &mut grads.w);
        grads.b += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

/// Batch normalization over the batch axis. Training uses batch statistics
/// and maintains running averages; evaluation uses the running averages, so
/// inference is deterministic for any batch size.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Array2<f64>,        // 1 x dim
    pub beta: Array2<f64>,         // 1 x dim
    pub running_mean: Array2<f64>, // 1 x dim, state
    pub running_var: Array2<f64>,  // 1 x dim, state
}

/// Activations cached by the training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnTrace {
    pub x_hat: Array2<f64>,
    pub inv_std: Array2<f64>,    // 1 x dim
    pub batch_mean: Array2<f64>, // 1 x dim
    pub batch_var: Array2<f64>,  // 1 x dim
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gamma: Array2::ones((1, dim)),
            beta: Array2::zeros((1, dim)),
            running_mean: Array2::zeros((1, dim)),
            running_var: Array2::ones((1, dim)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let dim = self.gamma.ncols();
        BatchNorm {
            gamma: Array2::zeros((1, dim)),
            beta: Array2::zeros((1, dim)),
            running_mean: Array2::zeros((1, dim)),
            running_var: Array2::zeros((1, dim)),
        }
    }

    pub fn forward_train(&self, x: &Array2<f64>) -> (Array2<f64>, BnTrace) {
        let n = x.nrows() as f64;
        let mean = x
            .mean_axis(Axis(0))
            .expect("nonempty batch")
            .insert_axis(Axis(0));
        let centered = x - &mean;
        let var = centered
            .mapv(|v| v * v)
            .mean_axis(Axis(0))
            .expect("nonempty batch")
            .insert_axis(Axis(0));
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let x_hat = &centered * &inv_std;
        let y = &x_hat * &self.gamma + &self.beta;
        let _ = n;
        (
            y,
            BnTrace {
                x_hat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        )
    }

    pub fn forward_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        (&(x - &self.running_mean) * &inv_std) * &self.gamma + &self.beta
    }

    /// Folds a batch's statistics into the running averages.
    pub fn update_running(&mut self, trace: &BnTrace) {
        self.running_mean =
            &self.running_mean * (1.0 - BN_MOMENTUM) + &trace.batch_mean * BN_MOMENTUM;
        self.running_var = &self.running_var * (1.0 - BN_MOMENTUM) + &trace.batch_var * BN_MOMENTUM;
    }

    /// Returns `dx`; accumulates `dgamma`, `dbeta` into `grads`.
    pub fn backward(
        &self,
        trace: &BnTrace,
        dy: &Array2<f64>,
        grads: &mut BatchNorm,
    ) -> Array2<f64> {
        let n = dy.nrows() as f64;
        let dgamma = (&trace.x_hat * dy).sum_axis(Axis(0)).insert_axis(Axis(0));
        let dbeta = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dx_hat = dy * &self.gamma;
        let sum_dx_hat = dx_hat.sum_axis(Axis(0)).insert_axis(Axis(0));
        let sum_dx_hat_x_hat = (&dx_hat * &trace.x_hat)
            .sum_axis(Axis(0))
            .insert_axis(Axis(0));
        let dx =
            (&dx_hat * n - &sum_dx_hat - &trace.x_hat * &sum_dx_hat_x_hat) * &trace.inv_std / n;
        grads.gamma += &dgamma;
        grads.beta += &dbeta;
        dx
    }
}

/// Inverted dropout mask: kept units are scaled by `1/(1-rate)` so the
/// evaluation path needs no rescaling.
pub fn dropout_mask<R: Rng>(shape: (usize, usize), rate: f64, rng: &mut R) -> Array2<f64> {
    if rate <= 0.0 {
        return Array2::ones(shape);
    }
    let keep = 1.0 - rate;
    Array2::from_shape_fn(shape, |_| {
        if rng.random_range(0.0..1.0) < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

/// One fusion block: batch normalization and dropout on the input of a dense
/// layer.
#[derive(Debug, Clone)]
pub struct MlpLayer {
    pub bn: BatchNorm,
    pub dense: Dense,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<MlpLayer>,
}

pub struct MlpLayerTrace {
    pub bn: BnTrace,
    pub mask: Option<Array2<f64>>,
    pub dense_input: Array2<f64>,
    /// Linear output of the dense layer (pre-activation).
    pub pre_act: Array2<f64>,
}

pub struct MlpTrace {
    pub layers: Vec<MlpLayerTrace>,
}

impl Mlp {
    /// `dims` lists layer widths from the fused input to the output, so a
    /// three-layer MLP passes four entries.
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2);
        let layers = dims
            .windows(2)
            .map(|w| MlpLayer {
                bn: BatchNorm::new(w[0]),
                dense: Dense::new(w[0], w[1], rng),
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| MlpLayer {
                    bn: l.bn.zeros_like(),
                    dense: l.dense.zeros_like(),
                })
                .collect(),
        }
    }

    pub fn forward_train<R: Rng>(
        &self,
        x: &Array2<f64>,
        dropout_rate: f64,
        rng: &mut R,
    ) -> (Array2<f64>, MlpTrace) {
        let mut cur = x.clone();
        let mut traces = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (bn_out, bn_trace) = layer.bn.forward_train(&cur);
            let (dense_input, mask) = if dropout_rate > 0.0 {
                let mask = dropout_mask(bn_out.dim(), dropout_rate, rng);
                (&bn_out * &mask, Some(mask))
            } else {
                (bn_out, None)
            };
            let pre_act = layer.dense.forward(&dense_input);
            cur = if i == last {
                pre_act.clone()
            } else {
                pre_act.mapv(|v| v.max(0.0))
            };
            traces.push(MlpLayerTrace {
                bn: bn_trace,
                mask,
                dense_input,
                pre_act,
            });
        }
        (cur, MlpTrace { layers: traces })
    }

    pub fn forward_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut cur = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let bn_out = layer.bn.forward_eval(&cur);
            let pre_act = layer.dense.forward(&bn_out);
            cur = if i == last {
                pre_act
            } else {
                pre_act.mapv(|v| v.max(0.0))
            };
        }
        cur
    }

    /// Returns the gradient with respect to the fused input.
    pub fn backward(&self, trace: &MlpTrace, d_out: &Array2<f64>, grads: &mut Mlp) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut d_cur = d_out.clone();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let layer_trace = &trace.layers[i];
            if i != last {
                // Through the rectifier.
                d_cur = &d_cur
                    * &layer_trace
                        .pre_act
                        .mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            }
            let mut d_dense_input =
                layer
                    .dense
                    .backward(&layer_trace.dense_input, &d_cur, &mut grads.layers[i].dense);
            if let Some(mask) = &layer_trace.mask {
                d_dense_input = &d_dense_input * mask;
            }
            d_cur = layer
                .bn
                .backward(&layer_trace.bn, &d_dense_input, &mut grads.layers[i].bn);
        }
        d_cur
    }

    pub fn update_running(&mut self, trace: &MlpTrace) {
        for (layer, layer_trace) in self.layers.iter_mut().zip(&trace.layers) {
            layer.bn.update_running(&layer_trace.bn);
        }
    }
}
