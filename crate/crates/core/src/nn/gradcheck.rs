//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Parameterized;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Magnitudes below this are compared absolutely; central differences at
/// step 1e-5 carry roughly 1e-10 of truncation and rounding error.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub enum Selection {
    All,
    /// Up to `per_tensor` random entries from every tensor.
    Sample { per_tensor: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(tensor, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Compare the gradients currently accumulated in `model` against central
/// differences of `loss`. Parameter values are restored afterwards.
pub fn check_gradients<M, F>(model: &mut M, loss: F, selection: Selection) -> GradCheckReport
where
    M: Parameterized,
    F: Fn(&M) -> f64,
{
    check_gradients_with_step(model, loss, selection, DEFAULT_STEP)
}

pub fn check_gradients_with_step<M, F>(model: &mut M, loss: F, selection: Selection, step: f64) -> GradCheckReport
where
    M: Parameterized,
    F: Fn(&M) -> f64,
{
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    for (tensor, &len) in shapes.iter().enumerate() {
        let indices: Vec<usize> = match selection {
            Selection::All => (0..len).collect(),
            Selection::Sample { per_tensor, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (tensor as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                sample(&mut rng, len, per_tensor.min(len)).into_vec()
            }
        };
        for idx in indices {
            let (original, analytic) = {
                let params = model.params();
                let p = params[tensor];
                let flat = p.value.as_slice().expect("parameters are contiguous");
                (flat[idx], p.grad.as_slice().expect("gradients are contiguous")[idx])
            };
            let set = |m: &mut M, v: f64| {
                m.params_mut()[tensor].value.as_slice_mut().expect("parameters are contiguous")[idx] = v;
            };
            set(model, original + step);
            let plus = loss(model);
            set(model, original - step);
            let minus = loss(model);
            set(model, original);
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                let name = model.params()[tensor].name().to_owned();
                report.worst = Some((name, idx, analytic, numeric));
            }
        }
    }
    report
}
