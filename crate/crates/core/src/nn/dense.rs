use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot_uniform, sigmoid, Parameterized};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    /// ReLU uses the subgradient 0 at the kink.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// `activation(W·x + b)` with `W` stored row-major as `[outputs × inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        Self {
            inputs,
            outputs,
            weights: glorot_uniform(rng, inputs, outputs, inputs * outputs),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs], activation }
    }

    pub fn from_parts(weights: Vec<f64>, bias: Vec<f64>, inputs: usize, activation: Activation) -> Result<Self> {
        let outputs = bias.len();
        if weights.len() != inputs * outputs {
            return Err(Error::shape(format!("weights of length {} do not fit {outputs}×{inputs}", weights.len())));
        }
        if weights.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::domain("layer parameters must be finite"));
        }
        Ok(Self { inputs, outputs, weights, bias, activation })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(Error::shape(format!("dense layer expects {} inputs, got {}", self.inputs, x.len())));
        }
        let mut out = vec![0.0; self.outputs];
        self.forward_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked forward pass; `x` and `out` must have the layer's sizes.
    #[inline]
    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.inputs).zip(&self.bias)) {
            let pre: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b;
            *o = self.activation.apply(pre);
        }
    }

    /// Accumulates parameter gradients given the recorded input `x`, output
    /// `y` and upstream `dy`; writes the input gradient into `dx` when asked.
    pub fn backward_into(
        &self,
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
        mut dx: Option<&mut [f64]>,
    ) {
        if let Some(dx) = dx.as_deref_mut() {
            dx.iter_mut().for_each(|v| *v = 0.0);
        }
        for o in 0..self.outputs {
            let da = dy[o] * self.activation.derivative_from_output(y[o]);
            if da == 0.0 {
                continue;
            }
            grad_b[o] += da;
            let row = o * self.inputs;
            for (g, xi) in grad_w[row..row + self.inputs].iter_mut().zip(x) {
                *g += da * xi;
            }
            if let Some(dx) = dx.as_deref_mut() {
                for (d, w) in dx.iter_mut().zip(&self.weights[row..row + self.inputs]) {
                    *d += da * w;
                }
            }
        }
    }
}

impl Parameterized for DenseLayer {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        vec![("weights".into(), &self.weights), ("bias".into(), &self.bias)]
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights, &mut self.bias]
    }
}

/// A stack of dense layers.
///
/// A recorded forward pass writes the input followed by every layer's output
/// into one flat tape of length [`Mlp::tape_len`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// Hidden layers share `hidden` activation; the last layer uses `output`.
    pub fn new<R: Rng>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least an input and an output size");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::new(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn tape_len(&self) -> usize {
        self.inputs() + self.layers.iter().map(|l| l.outputs).sum::<usize>()
    }

    pub fn block_count(&self) -> usize {
        2 * self.layers.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::shape(format!("network expects {} inputs, got {}", self.inputs(), x.len())));
        }
        let mut tape = vec![0.0; self.tape_len()];
        tape[..x.len()].copy_from_slice(x);
        Ok(self.forward_record(&mut tape).to_vec())
    }

    /// Runs the network on the input already stored at the head of `tape`
    /// and returns the output segment.
    pub fn forward_record<'t>(&self, tape: &'t mut [f64]) -> &'t [f64] {
        let mut start = 0;
        for layer in &self.layers {
            let (done, rest) = tape.split_at_mut(start + layer.inputs);
            layer.forward_into(&done[start..], &mut rest[..layer.outputs]);
            start += layer.inputs;
        }
        &tape[start..start + self.outputs()]
    }

    /// Backward pass over a tape written by [`Mlp::forward_record`].
    /// `grads` holds this network's blocks (weights, bias per layer).
    pub fn backward(&self, tape: &[f64], dout: &[f64], grads: &mut [Vec<f64>], dx: Option<&mut [f64]>) {
        let mut offsets = Vec::with_capacity(self.layers.len() + 1);
        let mut o = 0;
        offsets.push(0);
        for layer in &self.layers {
            o += layer.inputs;
            offsets.push(o);
        }
        let mut upstream = dout.to_vec();
        let mut dx_out = dx;
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let x = &tape[offsets[k]..offsets[k] + layer.inputs];
            let y = &tape[offsets[k + 1]..offsets[k + 1] + layer.outputs];
            let (gw, gb) = grads[2 * k..2 * k + 2].split_at_mut(1);
            if k == 0 {
                layer.backward_into(x, y, &upstream, &mut gw[0], &mut gb[0], dx_out.take());
            } else {
                let mut down = vec![0.0; layer.inputs];
                layer.backward_into(x, y, &upstream, &mut gw[0], &mut gb[0], Some(&mut down));
                upstream = down;
            }
        }
    }
}

impl Parameterized for Mlp {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [(format!("layer{i}.weights"), l.weights.as_slice()), (format!("layer{i}.bias"), l.bias.as_slice())]
            })
            .collect()
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()]).collect()
    }
}
