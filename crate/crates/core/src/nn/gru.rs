use rand::Rng;

use super::{glorot_uniform, sigmoid, Parameterized};
use crate::error::{Error, Result};

/// Gated recurrent unit:
///
/// ```text
/// z  = σ(W_z·[x; h] + b_z)
/// r  = σ(W_r·[x; h] + b_r)
/// h̃  = tanh(W_h·[x; r⊙h] + b_h)
/// h' = (1 − z)⊙h + z⊙h̃
/// ```
///
/// All three weight matrices are `[hidden × (input + hidden)]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    pub w_z: Vec<f64>,
    pub b_z: Vec<f64>,
    pub w_r: Vec<f64>,
    pub b_r: Vec<f64>,
    pub w_h: Vec<f64>,
    pub b_h: Vec<f64>,
}

// Tape layout for one step, n = input + hidden:
//   xh[n] | z[h] | r[h] | xrh[n] | h_tilde[h] | h_new[h]
impl GruCell {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let n = input + hidden;
        Self {
            input,
            hidden,
            w_z: glorot_uniform(rng, n, hidden, hidden * n),
            b_z: vec![0.0; hidden],
            w_r: glorot_uniform(rng, n, hidden, hidden * n),
            b_r: vec![0.0; hidden],
            w_h: glorot_uniform(rng, n, hidden, hidden * n),
            b_h: vec![0.0; hidden],
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let n = input + hidden;
        Self {
            input,
            hidden,
            w_z: vec![0.0; hidden * n],
            b_z: vec![0.0; hidden],
            w_r: vec![0.0; hidden * n],
            b_r: vec![0.0; hidden],
            w_h: vec![0.0; hidden * n],
            b_h: vec![0.0; hidden],
        }
    }

    pub fn tape_len(&self) -> usize {
        2 * (self.input + self.hidden) + 4 * self.hidden
    }

    pub fn forward(&self, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input || h.len() != self.hidden {
            return Err(Error::shape(format!(
                "GRU expects input {} and state {}, got {} and {}",
                self.input,
                self.hidden,
                x.len(),
                h.len()
            )));
        }
        let mut tape = vec![0.0; self.tape_len()];
        Ok(self.step_record(x, h, &mut tape).to_vec())
    }

    /// One recorded step; returns the new state (a view into `tape`).
    pub fn step_record<'t>(&self, x: &[f64], h: &[f64], tape: &'t mut [f64]) -> &'t [f64] {
        let (n, hd) = (self.input + self.hidden, self.hidden);
        let (xh, rest) = tape.split_at_mut(n);
        let (z, rest) = rest.split_at_mut(hd);
        let (r, rest) = rest.split_at_mut(hd);
        let (xrh, rest) = rest.split_at_mut(n);
        let (ht, hnew) = rest.split_at_mut(hd);

        xh[..self.input].copy_from_slice(x);
        xh[self.input..].copy_from_slice(h);
        for j in 0..hd {
            let row = j * n..(j + 1) * n;
            z[j] = sigmoid(dot(&self.w_z[row.clone()], xh) + self.b_z[j]);
            r[j] = sigmoid(dot(&self.w_r[row], xh) + self.b_r[j]);
        }
        xrh[..self.input].copy_from_slice(x);
        for j in 0..hd {
            xrh[self.input + j] = r[j] * h[j];
        }
        for j in 0..hd {
            ht[j] = (dot(&self.w_h[j * n..(j + 1) * n], xrh) + self.b_h[j]).tanh();
            hnew[j] = (1.0 - z[j]) * h[j] + z[j] * ht[j];
        }
        &tape[self.tape_len() - hd..]
    }

    /// Backward through one recorded step. `grads` are this cell's six blocks
    /// in `param_blocks` order; `dx` and `dh_prev` are overwritten.
    pub fn backward(&self, tape: &[f64], dh_new: &[f64], grads: &mut [Vec<f64>], dx: &mut [f64], dh_prev: &mut [f64]) {
        let (n, hd, inp) = (self.input + self.hidden, self.hidden, self.input);
        let xh = &tape[..n];
        let z = &tape[n..n + hd];
        let r = &tape[n + hd..n + 2 * hd];
        let xrh = &tape[n + 2 * hd..2 * n + 2 * hd];
        let ht = &tape[2 * n + 2 * hd..2 * n + 3 * hd];
        let h = &xh[inp..];

        let mut dxh = vec![0.0; n];
        let mut dxrh = vec![0.0; n];
        let mut da_z = vec![0.0; hd];
        let mut da_r = vec![0.0; hd];

        for j in 0..hd {
            dh_prev[j] = dh_new[j] * (1.0 - z[j]);
            let dz = dh_new[j] * (ht[j] - h[j]);
            da_z[j] = dz * z[j] * (1.0 - z[j]);
            let da_h = dh_new[j] * z[j] * (1.0 - ht[j] * ht[j]);
            grads[5][j] += da_h;
            let row = j * n..(j + 1) * n;
            for (g, xv) in grads[4][row.clone()].iter_mut().zip(xrh) {
                *g += da_h * xv;
            }
            for (d, w) in dxrh.iter_mut().zip(&self.w_h[row]) {
                *d += da_h * w;
            }
        }
        for j in 0..hd {
            let d_rh = dxrh[inp + j];
            dh_prev[j] += d_rh * r[j];
            da_r[j] = d_rh * h[j] * r[j] * (1.0 - r[j]);
        }
        for j in 0..hd {
            let row = j * n..(j + 1) * n;
            grads[1][j] += da_z[j];
            grads[3][j] += da_r[j];
            for k in 0..n {
                grads[0][j * n + k] += da_z[j] * xh[k];
                grads[2][j * n + k] += da_r[j] * xh[k];
            }
            for ((d, wz), wr) in dxh.iter_mut().zip(&self.w_z[row.clone()]).zip(&self.w_r[row]) {
                *d += da_z[j] * wz + da_r[j] * wr;
            }
        }
        for k in 0..inp {
            dx[k] = dxh[k] + dxrh[k];
        }
        for j in 0..hd {
            dh_prev[j] += dxh[inp + j];
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Parameterized for GruCell {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        vec![
            ("w_z".into(), &self.w_z),
            ("b_z".into(), &self.b_z),
            ("w_r".into(), &self.w_r),
            ("b_r".into(), &self.b_r),
            ("w_h".into(), &self.w_h),
            ("b_h".into(), &self.b_h),
        ]
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w_z, &mut self.b_z, &mut self.w_r, &mut self.b_r, &mut self.w_h, &mut self.b_h]
    }
}
