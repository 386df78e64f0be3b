//! Context-to-query attention.
//!
//! For context rows `h_t` and question rows `u_j` the similarity is
//! `s_tj = w · [h_t ; u_j ; h_t ∘ u_j]`; each context row attends over the
//! question with `softmax_j(s_tj)` and receives `ũ_t = Σ_j a_tj u_j`.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::ops::softmax_rows;
use super::tensor::{ParamTensor, Parameterized};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct C2qAttention {
    /// `1 x 3d`: blocks for `h`, `u` and `h ∘ u`.
    pub weight: ParamTensor,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    h: Array2<f64>,
    u: Array2<f64>,
    weights: Array2<f64>,
}

impl AttentionCache {
    /// Attention distribution, `T x J`.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }
}

impl C2qAttention {
    pub fn new<R: Rng + ?Sized>(name: &str, dim: usize, rng: &mut R) -> Self {
        C2qAttention {
            weight: ParamTensor::uniform(format!("{name}.weight"), 1, 3 * dim, 3 * dim, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.value.ncols() / 3
    }

    /// Similarity matrix `T x J`.
    pub fn scores(&self, h: ArrayView2<f64>, u: ArrayView2<f64>) -> Result<Array2<f64>> {
        let d = self.dim();
        for (context, m) in [("attention context", h), ("attention question", u)] {
            if m.ncols() != d {
                return Err(Error::Shape {
                    context,
                    expected: d,
                    got: m.ncols(),
                });
            }
        }
        if u.nrows() == 0 {
            return Err(Error::EmptyQuery);
        }
        let w = self.weight.value.row(0);
        let (w_h, w_u, w_hu) = (w.slice(s![..d]), w.slice(s![d..2 * d]), w.slice(s![2 * d..]));
        let from_h = h.dot(&w_h).insert_axis(Axis(1));
        let from_u = u.dot(&w_u).insert_axis(Axis(0));
        let cross = (&h * &w_hu).dot(&u.t());
        Ok(cross + &from_h + &from_u)
    }

    pub fn forward(&self, h: ArrayView2<f64>, u: ArrayView2<f64>) -> Result<(Array2<f64>, AttentionCache)> {
        let weights = softmax_rows(self.scores(h, u)?.view());
        let attended = weights.dot(&u);
        Ok((
            attended,
            AttentionCache {
                h: h.to_owned(),
                u: u.to_owned(),
                weights,
            },
        ))
    }

    /// Returns `(dh, du)` and accumulates the weight gradient.
    pub fn backward(&mut self, cache: &AttentionCache, d_attended: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let d = self.dim();
        let (h, u, a) = (&cache.h, &cache.u, &cache.weights);
        let mut du = a.t().dot(&d_attended);
        let da = d_attended.dot(&u.t());
        let row_dot = (&da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ds = a * &(da - &row_dot);

        let w = self.weight.value.row(0).to_owned();
        let (w_h, w_u, w_hu) = (w.slice(s![..d]), w.slice(s![d..2 * d]), w.slice(s![2 * d..]));
        let ds_rows = ds.sum_axis(Axis(1));
        let ds_cols = ds.sum_axis(Axis(0));
        let ds_u = ds.dot(u);
        let ds_t_h = ds.t().dot(h);

        let dh = &ds_rows.view().insert_axis(Axis(1)) * &w_h.insert_axis(Axis(0)) + &ds_u * &w_hu;
        du = du + &ds_cols.view().insert_axis(Axis(1)) * &w_u.insert_axis(Axis(0)) + &ds_t_h * &w_hu;

        let mut g = self.weight.grad.row_mut(0);
        g.slice_mut(s![..d]).scaled_add(1.0, &ds_rows.dot(h));
        g.slice_mut(s![d..2 * d]).scaled_add(1.0, &ds_cols.dot(u));
        g.slice_mut(s![2 * d..]).scaled_add(1.0, &(&ds_u * h).sum_axis(Axis(0)));
        (dh, du)
    }
}

impl Parameterized for C2qAttention {
    fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.weight]
    }
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.weight]
    }
}

/// Functional form: attend `context` rows over `question` rows with
/// similarity weights `w` (length `3d`).
pub fn c2q_attention(context: ArrayView2<f64>, question: ArrayView2<f64>, w: &[f64]) -> Result<Array2<f64>> {
    let layer = C2qAttention {
        weight: ParamTensor::from_value("w", Array2::from_shape_vec((1, w.len()), w.to_vec()).map_err(|e| Error::InvalidArgument(e.to_string()))?),
    };
    layer.forward(context, question).map(|(out, _)| out)
}
