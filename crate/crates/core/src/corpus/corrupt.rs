use rand::Rng;

use crate::error::{Error, Result};
use crate::phoc::{PhocVector, PHOC_DIM};

pub(crate) fn check_rate(flip_rate: f64) -> Result<()> {
    if (0.0..=1.0).contains(&flip_rate) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("flip_rate {flip_rate} outside [0, 1]")))
    }
}

/// Flip each attribute independently with probability `flip_rate`.
///
/// A flipped entry `x` becomes `1 - x`. Exactly [`PHOC_DIM`] uniforms are
/// drawn per call, so the stream position after the call does not depend on
/// the vector contents.
pub fn corrupt_phoc<R: Rng + ?Sized>(v: &PhocVector, flip_rate: f64, rng: &mut R) -> Result<PhocVector> {
    check_rate(flip_rate)?;
    let mut values = v.as_slice().to_vec();
    debug_assert_eq!(values.len(), PHOC_DIM);
    for x in &mut values {
        if rng.random::<f64>() < flip_rate {
            *x = 1.0 - *x;
        }
    }
    PhocVector::from_values(values)
}
