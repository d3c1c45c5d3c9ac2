//! Gated recurrent cells (LSTM) and the bidirectional layer built from them.
//!
//! Everything is f64 and hand-differentiated; the traces returned by the
//! forward passes carry exactly the activations the backward passes need.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2};
use rand::Rng;

/// Weights of one direction: gates are packed along the second axis in the
/// order `[input, forget, cell, output]`, each `hidden` wide.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub wx: Array2<f64>, // input_dim x 4*hidden
    pub wh: Array2<f64>, // hidden x 4*hidden
    pub b: Array2<f64>,  // 1 x 4*hidden
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn xavier_init<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let scale = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

impl LstmCell {
    pub fn new<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut b = Array2::zeros((1, 4 * hidden));
        // Forget-gate bias starts at one.
        b.slice_mut(s![0, hidden..2 * hidden]).fill(1.0);
        LstmCell {
            wx: xavier_init(input_dim, 4 * hidden, rng),
            wh: xavier_init(hidden, 4 * hidden, rng),
            b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.nrows()
    }

    pub fn zeros_like(&self) -> Self {
        LstmCell {
            wx: Array2::zeros(self.wx.raw_dim()),
            wh: Array2::zeros(self.wh.raw_dim()),
            b: Array2::zeros(self.b.raw_dim()),
        }
    }

    /// Runs the cell over a sequence of `t` rows, returning the per-step
    /// activations needed for backpropagation through time.
    pub fn forward(&self, inputs: &Array2<f64>) -> LstmTrace {
        let t = inputs.nrows();
        let h = self.hidden();
        let mut gates = Array2::zeros((t, 4 * h)); // post-activation
        let mut cells = Array2::zeros((t, h));
        let mut tanh_c = Array2::zeros((t, h));
        let mut hidden = Array2::zeros((t, h));

        let mut z = Array2::zeros((1, 4 * h));
        for step in 0..t {
            z.assign(&self.b);
            general_mat_mul(
                1.0,
                &inputs.slice(s![step..step + 1, ..]),
                &self.wx,
                1.0,
                &mut z,
            );
            if step > 0 {
                general_mat_mul(
                    1.0,
                    &hidden.slice(s![step - 1..step, ..]),
                    &self.wh,
                    1.0,
                    &mut z,
                );
            }
            for j in 0..h {
                let i_g = sigmoid(z[[0, j]]);
                let f_g = sigmoid(z[[0, h + j]]);
                let g_g = z[[0, 2 * h + j]].tanh();
                let o_g = sigmoid(z[[0, 3 * h + j]]);
                let c_prev = if step > 0 { cells[[step - 1, j]] } else { 0.0 };
                let c = f_g * c_prev + i_g * g_g;
                let tc = c.tanh();
                gates[[step, j]] = i_g;
                gates[[step, h + j]] = f_g;
                gates[[step, 2 * h + j]] = g_g;
                gates[[step, 3 * h + j]] = o_g;
                cells[[step, j]] = c;
                tanh_c[[step, j]] = tc;
                hidden[[step, j]] = o_g * tc;
            }
        }
        LstmTrace {
            inputs: inputs.clone(),
            gates,
            cells,
            tanh_c,
            hidden,
        }
    }

    /// Backpropagation through time. `d_hidden` holds the upstream gradient
    /// on each step's output; gradients accumulate into `grads` and the
    /// gradient with respect to the inputs is returned.
    pub fn backward(
        &self,
        trace: &LstmTrace,
        d_hidden: &Array2<f64>,
        grads: &mut LstmCell,
    ) -> Array2<f64> {
        let t = trace.inputs.nrows();
        let h = self.hidden();
        let mut d_inputs = Array2::zeros(trace.inputs.raw_dim());
        let mut dh_rec = Array2::<f64>::zeros((1, h));
        let mut dc_rec = Array2::<f64>::zeros((1, h));
        let mut dz = Array2::<f64>::zeros((1, 4 * h));

        for step in (0..t).rev() {
            for j in 0..h {
                let dh = d_hidden[[step, j]] + dh_rec[[0, j]];
                let i_g = trace.gates[[step, j]];
                let f_g = trace.gates[[step, h + j]];
                let g_g = trace.gates[[step, 2 * h + j]];
                let o_g = trace.gates[[step, 3 * h + j]];
                let tc = trace.tanh_c[[step, j]];
                let c_prev = if step > 0 {
                    trace.cells[[step - 1, j]]
                } else {
                    0.0
                };

                let d_o = dh * tc;
                let dc = dc_rec[[0, j]] + dh * o_g * (1.0 - tc * tc);
                let d_i = dc * g_g;
                let d_g = dc * i_g;
                let d_f = dc * c_prev;

                dz[[0, j]] = d_i * i_g * (1.0 - i_g);
                dz[[0, h + j]] = d_f * f_g * (1.0 - f_g);
                dz[[0, 2 * h + j]] = d_g * (1.0 - g_g * g_g);
                dz[[0, 3 * h + j]] = d_o * o_g * (1.0 - o_g);

                dc_rec[[0, j]] = dc * f_g;
            }
            general_mat_mul(
                1.0,
                &trace.inputs.slice(s![step..step + 1, ..]).t(),
                &dz.view(),
                1.0,
                &mut grads.wx,
            );
            grads.b += &dz;
            if step > 0 {
                general_mat_mul(
                    1.0,
                    &trace.hidden.slice(s![step - 1..step, ..]).t(),
                    &dz.view(),
                    1.0,
                    &mut grads.wh,
                );
                dh_rec.fill(0.0);
                general_mat_mul(1.0, &dz.view(), &self.wh.t(), 1.0, &mut dh_rec);
            }
            {
                let mut dx = d_inputs.slice_mut(s![step..step + 1, ..]);
                let dx_step = dz.dot(&self.wx.t());
                dx.assign(&dx_step);
            }
        }
        d_inputs
    }
}

/// Per-step activations cached by [`LstmCell::forward`].
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub inputs: Array2<f64>,
    pub gates: Array2<f64>,
    pub cells: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub hidden: Array2<f64>,
}

/// One bidirectional layer: a forward-reading and a backward-reading cell
/// whose outputs are concatenated per position.
#[derive(Debug, Clone)]
pub struct BiLstmLayer {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

#[derive(Debug, Clone)]
pub struct BiLstmTrace {
    pub fwd: LstmTrace,
    pub bwd: LstmTrace,
    /// t x 2*hidden concatenated outputs in original position order.
    pub output: Array2<f64>,
}

fn reverse_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut r = m.clone();
    let t = m.nrows();
    for i in 0..t {
        r.row_mut(i).assign(&m.row(t - 1 - i));
    }
    r
}

impl BiLstmLayer {
    pub fn new<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        BiLstmLayer {
            fwd: LstmCell::new(input_dim, hidden, rng),
            bwd: LstmCell::new(input_dim, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden()
    }

    pub fn zeros_like(&self) -> Self {
        BiLstmLayer {
            fwd: self.fwd.zeros_like(),
            bwd: self.bwd.zeros_like(),
        }
    }

    pub fn forward(&self, inputs: &Array2<f64>) -> BiLstmTrace {
        let h = self.fwd.hidden();
        let fwd = self.fwd.forward(inputs);
        let bwd = self.bwd.forward(&reverse_rows(inputs));
        let t = inputs.nrows();
        let mut output = Array2::zeros((t, 2 * h));
        for step in 0..t {
            output
                .slice_mut(s![step, ..h])
                .assign(&fwd.hidden.row(step));
            output
                .slice_mut(s![step, h..])
                .assign(&bwd.hidden.row(t - 1 - step));
        }
        BiLstmTrace { fwd, bwd, output }
    }

    /// `d_output` is t x 2*hidden in original position order; returns the
    /// gradient with respect to the layer inputs.
    pub fn backward(
        &self,
        trace: &BiLstmTrace,
        d_output: &Array2<f64>,
        grads: &mut BiLstmLayer,
    ) -> Array2<f64> {
        let h = self.fwd.hidden();
        let t = d_output.nrows();
        let d_fwd = d_output.slice(s![.., ..h]).to_owned();
        let mut d_bwd = Array2::zeros((t, h));
        for step in 0..t {
            d_bwd
                .row_mut(step)
                .assign(&d_output.slice(s![t - 1 - step, h..]));
        }
        let dx_fwd = self.fwd.backward(&trace.fwd, &d_fwd, &mut grads.fwd);
        let dx_bwd_rev = self.bwd.backward(&trace.bwd, &d_bwd, &mut grads.bwd);
        dx_fwd + reverse_rows(&dx_bwd_rev)
    }
}
