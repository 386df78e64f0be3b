//! Dense, LSTM and bidirectional LSTM layers over sequences stored as
//! `T x features` matrices, with hand-written backward passes.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use ndarray::linalg::general_mat_mul;
use rand::Rng;

use super::ops::{dropout_mask, sigmoid};
use super::tensor::{ParamTensor, Parameterized};
use crate::error::{Error, Result};

fn check_cols(context: &'static str, x: ArrayView2<f64>, expected: usize) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::Shape {
            context,
            expected,
            got: x.ncols(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`
    pub weight: ParamTensor,
    /// `1 x out`
    pub bias: ParamTensor,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Dense {
            weight: ParamTensor::uniform(format!("{name}.weight"), output, input, input, rng),
            bias: ParamTensor::uniform(format!("{name}.bias"), 1, output, input, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.ncols()
    }

    /// Row-wise `x W^T + b`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_cols("dense input", x, self.input_dim())?;
        Ok(x.dot(&self.weight.value.t()) + &self.bias.value)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: ArrayView2<f64>, dy: ArrayView2<f64>) -> Array2<f64> {
        general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut self.weight.grad);
        self.bias.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.weight.value)
    }
}

impl Parameterized for Dense {
    fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Single-direction LSTM. Gate blocks in the stacked weights are ordered
/// input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `4H x I`
    pub w_input: ParamTensor,
    /// `4H x H`
    pub w_hidden: ParamTensor,
    /// `1 x 4H`
    pub bias: ParamTensor,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    x: Array2<f64>,
    /// Activated gates per step, `T x 4H`.
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

/// Apply gate nonlinearities to the pre-activation `z` (in place) and
/// return the new `(h, c, tanh c)`.
fn cell_update(z: &mut Array1<f64>, c_prev: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
    let hidden = c_prev.len();
    z.slice_mut(s![..2 * hidden]).mapv_inplace(sigmoid);
    z.slice_mut(s![2 * hidden..3 * hidden]).mapv_inplace(f64::tanh);
    z.slice_mut(s![3 * hidden..]).mapv_inplace(sigmoid);
    let i = z.slice(s![..hidden]);
    let f = z.slice(s![hidden..2 * hidden]);
    let g = z.slice(s![2 * hidden..3 * hidden]);
    let o = z.slice(s![3 * hidden..]);
    let c = &f * &c_prev + &i * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;
    (h, c, tanh_c)
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Lstm {
            w_input: ParamTensor::uniform(format!("{name}.w_input"), 4 * hidden, input, input, rng),
            w_hidden: ParamTensor::uniform(format!("{name}.w_hidden"), 4 * hidden, hidden, hidden, rng),
            bias: ParamTensor::uniform(format!("{name}.bias"), 1, 4 * hidden, hidden, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.value.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.value.ncols()
    }

    /// One recurrence step.
    pub fn step(&self, x: ArrayView1<f64>, h_prev: ArrayView1<f64>, c_prev: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let hidden = self.hidden_dim();
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "lstm input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        for (context, v) in [("lstm hidden state", h_prev), ("lstm cell state", c_prev)] {
            if v.len() != hidden {
                return Err(Error::Shape {
                    context,
                    expected: hidden,
                    got: v.len(),
                });
            }
        }
        let mut z = self.w_input.value.dot(&x) + self.w_hidden.value.dot(&h_prev) + self.bias.value.row(0);
        let (h, c, _) = cell_update(&mut z, c_prev);
        Ok((h, c))
    }

    /// Run over the rows of `x` from a zero state. Returns `T x H` hidden states.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, LstmCache)> {
        check_cols("lstm input", x, self.input_dim())?;
        let steps = x.nrows();
        let hidden = self.hidden_dim();
        let projected = x.dot(&self.w_input.value.t()) + &self.bias.value;
        let mut gates = Array2::zeros((steps, 4 * hidden));
        let mut c = Array2::zeros((steps, hidden));
        let mut tanh_c = Array2::zeros((steps, hidden));
        let mut h = Array2::zeros((steps, hidden));
        let mut h_prev = Array1::zeros(hidden);
        let mut c_prev = Array1::zeros(hidden);
        for t in 0..steps {
            let mut z = &projected.row(t) + &self.w_hidden.value.dot(&h_prev);
            let (h_t, c_t, tc_t) = cell_update(&mut z, c_prev.view());
            gates.row_mut(t).assign(&z);
            c.row_mut(t).assign(&c_t);
            tanh_c.row_mut(t).assign(&tc_t);
            h.row_mut(t).assign(&h_t);
            h_prev = h_t;
            c_prev = c_t;
        }
        let cache = LstmCache {
            x: x.to_owned(),
            gates,
            c,
            tanh_c,
            h: h.clone(),
        };
        Ok((h, cache))
    }

    /// Backpropagate `dh` (`T x H`, gradient of the loss w.r.t. every hidden
    /// output). Accumulates parameter gradients and returns `dx`.
    pub fn backward(&mut self, cache: &LstmCache, dh: ArrayView2<f64>) -> Array2<f64> {
        let steps = cache.x.nrows();
        let hidden = self.hidden_dim();
        let mut dz_all = Array2::<f64>::zeros((steps, 4 * hidden));
        let mut dh_next = Array1::<f64>::zeros(hidden);
        let mut dc_next = Array1::<f64>::zeros(hidden);
        let w_hidden = &self.w_hidden.value;
        for t in (0..steps).rev() {
            let gates = cache.gates.row(t);
            let (i, f, g, o) = (
                gates.slice(s![..hidden]),
                gates.slice(s![hidden..2 * hidden]),
                gates.slice(s![2 * hidden..3 * hidden]),
                gates.slice(s![3 * hidden..]),
            );
            let tanh_c = cache.tanh_c.row(t);
            let dh_t = &dh.row(t) + &dh_next;
            let mut dc = dc_next.clone();
            Zip::from(&mut dc)
                .and(&dh_t)
                .and(&o)
                .and(&tanh_c)
                .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));

            let mut dz = dz_all.row_mut(t);
            for k in 0..hidden {
                let c_prev = if t > 0 { cache.c[[t - 1, k]] } else { 0.0 };
                dz[k] = dc[k] * g[k] * i[k] * (1.0 - i[k]);
                dz[hidden + k] = dc[k] * c_prev * f[k] * (1.0 - f[k]);
                dz[2 * hidden + k] = dc[k] * i[k] * (1.0 - g[k] * g[k]);
                dz[3 * hidden + k] = dh_t[k] * tanh_c[k] * o[k] * (1.0 - o[k]);
            }
            dc_next = &dc * &f;
            dh_next.fill(0.0);
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr != 0.0 {
                    dh_next.scaled_add(dzr, &w_hidden.row(r));
                }
            }
        }
        general_mat_mul(1.0, &dz_all.t(), &cache.x, 1.0, &mut self.w_input.grad);
        if steps > 1 {
            let h_prev = cache.h.slice(s![..steps - 1, ..]);
            let dz_tail = dz_all.slice(s![1.., ..]);
            general_mat_mul(1.0, &dz_tail.t(), &h_prev, 1.0, &mut self.w_hidden.grad);
        }
        self.bias.grad += &dz_all.sum_axis(Axis(0)).insert_axis(Axis(0));
        dz_all.dot(&self.w_input.value)
    }
}

impl Parameterized for Lstm {
    fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.w_input, &self.w_hidden, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}

fn reversed(x: ArrayView2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

/// Bidirectional LSTM; output row `t` is `[forward_t ; backward_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Blstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

#[derive(Debug, Clone)]
pub struct BlstmCache {
    mask: Option<Array2<f64>>,
    forward: LstmCache,
    backward: LstmCache,
}

impl Blstm {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Blstm {
            forward: Lstm::new(&format!("{name}.fwd"), input, hidden, rng),
            backward: Lstm::new(&format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden_dim() + self.backward.hidden_dim()
    }

    /// Forward pass. With `dropout = Some((rate, rng))` an inverted-dropout
    /// mask is applied to the input, shared by both directions.
    pub fn forward<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, dropout: Option<(f64, &mut R)>) -> Result<(Array2<f64>, BlstmCache)> {
        check_cols("blstm input", x, self.input_dim())?;
        let mask = match dropout {
            Some((rate, rng)) if rate > 0.0 => Some(dropout_mask(x.dim(), rate, rng)),
            _ => None,
        };
        let dropped;
        let x = match &mask {
            Some(m) => {
                dropped = &x * m;
                dropped.view()
            }
            None => x,
        };
        let (h_fwd, forward) = self.forward.forward(x)?;
        let (h_bwd_rev, backward) = self.backward.forward(reversed(x).view())?;
        let out = concatenate![Axis(1), h_fwd, reversed(h_bwd_rev.view())];
        Ok((out, BlstmCache { mask, forward, backward }))
    }

    pub fn backward_pass(&mut self, cache: &BlstmCache, dout: ArrayView2<f64>) -> Array2<f64> {
        let h = self.forward.hidden_dim();
        let dx_fwd = self.forward.backward(&cache.forward, dout.slice(s![.., ..h]));
        let dx_bwd_rev = self
            .backward
            .backward(&cache.backward, reversed(dout.slice(s![.., h..])).view());
        let mut dx = dx_fwd + reversed(dx_bwd_rev.view());
        if let Some(m) = &cache.mask {
            dx *= m;
        }
        dx
    }
}

impl Parameterized for Blstm {
    fn params(&self) -> Vec<&ParamTensor> {
        let mut v = self.forward.params();
        v.extend(self.backward.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v = self.forward.params_mut();
        v.extend(self.backward.params_mut());
        v
    }
}
