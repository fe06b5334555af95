//! A small differentiable kernel: dense layers, GRU cells, Adam and
//! finite-difference gradient checking.
//!
//! There is no general autodiff graph. Each layer records what its backward
//! pass needs into a caller-owned flat buffer ("tape") during the forward pass,
//! and the hedging policies chain those per-layer backward passes through a
//! whole episode by hand.

mod adam;
mod dense;
mod gradcheck;
mod gru;

pub use adam::{AdamConfig, AdamState};
pub use dense::{Activation, DenseLayer, Mlp};
pub use gradcheck::{grad_check, perturb, BlockError, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use gru::GruCell;

use rand::Rng;

use crate::error::{Error, Result};

/// Read access to a model's parameters as ordered, named flat blocks.
pub trait Parameterized {
    fn param_blocks(&self) -> Vec<(String, &[f64])>;
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn zero_gradient(&self) -> Gradient {
        Gradient { blocks: self.param_blocks().iter().map(|(_, b)| vec![0.0; b.len()]).collect() }
    }

    fn param_count(&self) -> usize {
        self.param_blocks().iter().map(|(_, b)| b.len()).sum()
    }
}

/// Partial derivatives laid out exactly like [`Parameterized::param_blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn add_assign(&mut self, other: &Gradient) -> Result<()> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::shape("gradient block count mismatch"));
        }
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            if a.len() != b.len() {
                return Err(Error::shape("gradient block length mismatch"));
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.concat()
    }
}

/// Uniform fan-based initialisation in `±√(6/(fan_in+fan_out))`.
pub(crate) fn glorot_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..=limit)).collect()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
