//! Stateless numeric operations and their derivatives.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `W x + b`.
pub fn dense_forward(x: ArrayView1<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    if w.ncols() != x.len() {
        return Err(Error::Shape {
            context: "dense input",
            expected: w.ncols(),
            got: x.len(),
        });
    }
    if w.nrows() != b.len() {
        return Err(Error::Shape {
            context: "dense bias",
            expected: w.nrows(),
            got: b.len(),
        });
    }
    Ok(w.dot(&x) + b)
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// `-ln p[target]` with `p` floored at [`PROB_FLOOR`].
pub fn cross_entropy(probabilities: ArrayView1<f64>, target: usize) -> Result<f64> {
    let p = probabilities.get(target).ok_or(Error::InvalidSpan {
        what: "cross-entropy target",
        start: target,
        end: target,
        len: probabilities.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Gradient of `cross_entropy(softmax(logits), target)` with respect to the logits.
pub fn softmax_cross_entropy_grad(probabilities: ArrayView1<f64>, target: usize) -> Array1<f64> {
    let mut g = probabilities.to_owned();
    g[target] -= 1.0;
    g
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(shape: (usize, usize), rate: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < rate { 0.0 } else { keep })
}

pub fn dropout<R: Rng + ?Sized>(x: ArrayView1<f64>, rate: f64, rng: &mut R, training: bool) -> Result<Array1<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(x.to_owned());
    }
    let mask = dropout_mask((1, x.len()), rate, rng);
    Ok(&x * &mask.index_axis(Axis(0), 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_examples() {
        let x = array![1.0, -2.0, 3.0];
        let eye = Array2::eye(3);
        assert_eq!(dense_forward(x.view(), eye.view(), Array1::zeros(3).view()).unwrap(), x);
        let b = array![0.5, 0.25];
        assert_eq!(dense_forward(x.view(), Array2::zeros((2, 3)).view(), b.view()).unwrap(), b);
        assert!(dense_forward(x.view(), Array2::zeros((2, 4)).view(), b.view()).is_err());

        let w = array![[1.0, 2.0, 3.0, 4.0], [0.5, -1.0, 0.0, 2.0], [-3.0, 0.0, 1.0, 1.0]];
        let x = array![1.0, 0.5, -1.0, 2.0];
        let b = array![0.1, 0.2, 0.3];
        // rows by hand: 1+1-3+8, 0.5-0.5+0+4, -3+0-1+2
        let y = dense_forward(x.view(), w.view(), b.view()).unwrap();
        for (got, want) in y.iter().zip([7.1, 4.2, -1.7]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(array![0.0, 0.0].view()), array![0.5, 0.5]);
        let u = softmax(array![3.0, 3.0, 3.0].view());
        assert!(u.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        let a = softmax(array![1.0, -2.0, 0.5].view());
        let b = softmax(array![101.0, 98.0, 100.5].view());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.sum() - 1.0).abs() < 1e-9);
        let big = softmax(array![1000.0, 0.0].view());
        assert!(big.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(array![0.0, 1.0].view(), 1).unwrap(), 0.0);
        let n = 7;
        let uniform = Array1::from_elem(n, 1.0 / n as f64);
        assert!((cross_entropy(uniform.view(), 3).unwrap() - (n as f64).ln()).abs() < 1e-12);
        assert!((cross_entropy(array![0.25, 0.75].view(), 0).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(array![0.0, 1.0].view(), 0).unwrap() + PROB_FLOOR.ln()).abs() < 1e-12);
        assert!(cross_entropy(array![1.0].view(), 1).is_err());
    }

    #[test]
    fn softmax_ce_grad_at_zero() {
        let p = softmax(array![0.0, 0.0].view());
        assert_eq!(softmax_cross_entropy_grad(p.view(), 0), array![-0.5, 0.5]);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array::linspace(0.0, 1.0, 16);
        assert_eq!(dropout(x.view(), 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(dropout(x.view(), 0.5, &mut rng, false).unwrap(), x);
        assert!(dropout(x.view(), 1.0, &mut rng, true).is_err());
    }

    #[test]
    fn dropout_survivor_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let x = Array1::from_elem(n, 1.0);
        let y = dropout(x.view(), 0.2, &mut rng, true).unwrap();
        let survivors = y.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
        let sd = (0.8 * 0.2 / n as f64).sqrt();
        assert!((survivors - 0.8).abs() < 3.0 * sd, "{survivors}");
        assert!(y.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-15));
    }
}
