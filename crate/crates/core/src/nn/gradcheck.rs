use rand::Rng;

use super::{Gradient, Parameterized};
use crate::error::{Error, Result};

/// Entries whose analytic and numeric partials are both smaller than this are
/// compared in absolute rather than relative terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub max_relative_error: f64,
    /// Index of the worst entry within the block.
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares an analytic gradient against central differences of `loss`,
/// perturbing each parameter in place by `±step` and restoring it.
///
/// The per-entry error is `|a − n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn grad_check<M, F>(
    model: &mut M,
    loss: F,
    analytic: &Gradient,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    M: Parameterized,
    F: Fn(&M) -> f64,
{
    let names: Vec<String> = model.param_blocks().into_iter().map(|(n, _)| n).collect();
    let sizes: Vec<usize> = model.param_blocks().iter().map(|(_, b)| b.len()).collect();
    if analytic.blocks.len() != sizes.len() || analytic.blocks.iter().zip(&sizes).any(|(b, &s)| b.len() != s) {
        return Err(Error::shape("analytic gradient does not match parameter blocks"));
    }

    let mut blocks = Vec::with_capacity(sizes.len());
    for (bi, name) in names.into_iter().enumerate() {
        let mut worst = 0.0f64;
        let mut worst_index = 0;
        for i in 0..sizes[bi] {
            let orig = model.param_blocks_mut()[bi][i];
            model.param_blocks_mut()[bi][i] = orig + step;
            let up = loss(model);
            model.param_blocks_mut()[bi][i] = orig - step;
            let down = loss(model);
            model.param_blocks_mut()[bi][i] = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = analytic.blocks[bi][i];
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
            let err = (a - numeric).abs() / denom;
            if !err.is_finite() || err > worst {
                worst = if err.is_finite() { err } else { f64::INFINITY };
                worst_index = i;
            }
        }
        blocks.push(BlockError { name, max_relative_error: worst, worst_index });
    }
    let max = blocks.iter().map(|b| b.max_relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport { blocks, max_relative_error: max, tolerance, passed: max <= tolerance })
}

/// Adds uniform noise in `[−scale, scale)` to every parameter.
///
/// ReLU units that never fire keep a bias of exactly zero, and on inputs of
/// all zeros their pre-activation then sits on the kink, where central
/// differences are meaningless. Checking at a nudged point avoids that.
pub fn perturb<M: Parameterized, R: Rng>(model: &mut M, scale: f64, rng: &mut R) {
    for block in model.param_blocks_mut() {
        for v in block.iter_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};

    #[test]
    fn linear_model_quadratic_loss_is_exact() {
        let mut layer =
            DenseLayer::from_parts(vec![0.3, -1.2, 0.8, 0.05, 2.0, -0.4], vec![0.1, 0.2], 3, Activation::Identity)
                .unwrap();
        let x = [1.5, -0.5, 2.0];
        let target = [0.7, -1.1];
        let loss = |l: &DenseLayer| {
            let y = l.forward(&x).unwrap();
            y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        let y = layer.forward(&x).unwrap();
        let dy: Vec<f64> = y.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
        let mut g = layer.zero_gradient();
        let (gw, gb) = g.blocks.split_at_mut(1);
        layer.backward_into(&x, &y, &dy, &mut gw[0], &mut gb[0], None);
        let report = grad_check(&mut layer, loss, &g, 1e-5, 1e-9).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut layer = DenseLayer::from_parts(vec![1.0, 2.0], vec![0.0], 2, Activation::Identity).unwrap();
        let loss = |l: &DenseLayer| l.forward(&[1.0, 1.0]).unwrap()[0];
        let wrong = Gradient { blocks: vec![vec![1.0, 0.5], vec![1.0]] };
        let report = grad_check(&mut layer, loss, &wrong, 1e-6, 1e-6).unwrap();
        assert!(!report.passed);
        assert_eq!(report.blocks[0].worst_index, 1);
    }
}
