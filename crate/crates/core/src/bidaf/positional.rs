use ndarray::Array1;

use crate::error::{Error, Result};

/// Sinusoidal encoding of a line index: `pe[2i] = sin(pos / 10000^(2i/dim))`,
/// `pe[2i+1] = cos(pos / 10000^(2i/dim))`.
pub fn line_positional_encoding(line_index: usize, dim: usize) -> Result<Array1<f64>> {
    if !dim.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("positional encoding dimension {dim} must be even")));
    }
    let pos = line_index as f64;
    let mut pe = Array1::zeros(dim);
    for i in 0..dim / 2 {
        let angle = pos / 10000f64.powf(2.0 * i as f64 / dim as f64);
        pe[2 * i] = angle.sin();
        pe[2 * i + 1] = angle.cos();
    }
    Ok(pe)
}
