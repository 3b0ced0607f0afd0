//! LSTM cell and stacked bidirectional LSTM with hand-written backpropagation through time.
//!
//! Gate blocks in every weight matrix and bias vector are laid out `[input, forget, cell, output]`,
//! each `hidden_dim` wide. Sequences are processed time-major (`[steps, batch, features]`)
//! so that the input projection for a whole sequence is a single matrix product.

use rand::Rng;

use super::init::fan_in_uniform;
use super::linalg::{mm_nn, mm_nt, mm_tn};
use super::param::{scoped, scoped_mut, Module, Param};
use super::tensor::{swap_leading_axes, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell<T> {
    input_dim: usize,
    hidden_dim: usize,
    /// `[4*hidden, input]`
    pub w_ih: Param<T>,
    /// `[4*hidden, hidden]`
    pub w_hh: Param<T>,
    /// `[4*hidden]`
    pub bias: Param<T>,
}

/// Activations kept from a sequence pass, indexed by time step (not processing order).
#[derive(Clone, Debug)]
pub struct LstmSeqCache<T> {
    steps: usize,
    batch: usize,
    reverse: bool,
    x: Vec<T>,
    gates: Vec<T>,
    c: Vec<T>,
    tanh_c: Vec<T>,
    h: Vec<T>,
    h0: Vec<T>,
    c0: Vec<T>,
}

impl<T> LstmSeqCache<T> {
    /// Hidden states for every time step, `[steps, batch, hidden]`.
    pub fn hidden(&self) -> &[T] {
        &self.h
    }

    pub fn cells(&self) -> &[T] {
        &self.c
    }
}

/// Gradients flowing out of a sequence backward pass.
#[derive(Clone, Debug)]
pub struct LstmSeqGrads<T> {
    /// `[steps, batch, input]`
    pub dx: Vec<T>,
    pub dh0: Vec<T>,
    pub dc0: Vec<T>,
}

impl<T: Real> LstmCell<T> {
    /// Random weights, forget-gate bias 1, other biases 0.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let g = 4 * hidden_dim;
        let mut cell = LstmCell {
            input_dim,
            hidden_dim,
            w_ih: Param::new(fan_in_uniform(&[g, input_dim], input_dim, rng)),
            w_hh: Param::new(fan_in_uniform(&[g, hidden_dim], hidden_dim, rng)),
            bias: Param::zeros(&[g]),
        };
        cell.bias.value.data_mut()[hidden_dim..2 * hidden_dim].fill(T::one());
        cell
    }

    /// All weights and biases zero.
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let g = 4 * hidden_dim;
        LstmCell {
            input_dim,
            hidden_dim,
            w_ih: Param::zeros(&[g, input_dim]),
            w_hh: Param::zeros(&[g, hidden_dim]),
            bias: Param::zeros(&[g]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// One time step: `(h_t, c_t)` from `x_t [batch, input]` and the previous state.
    pub fn step(
        &self,
        x: &Tensor<T>,
        h_prev: &Tensor<T>,
        c_prev: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, LstmSeqCache<T>)> {
        let hd = self.hidden_dim;
        if x.shape().len() != 2 || x.dim(1) != self.input_dim {
            return Err(Error::dim(
                "lstm_cell_step",
                format!("x {:?} vs input_dim {}", x.shape(), self.input_dim),
            ));
        }
        let batch = x.dim(0);
        if h_prev.shape() != [batch, hd] || c_prev.shape() != [batch, hd] {
            return Err(Error::dim(
                "lstm_cell_step",
                format!(
                    "h_prev {:?}, c_prev {:?}, expected [{batch}, {hd}]",
                    h_prev.shape(),
                    c_prev.shape()
                ),
            ));
        }
        let cache = self.forward_seq(x.data(), 1, batch, false, Some(h_prev.data()), Some(c_prev.data()))?;
        let h = Tensor::from_vec(&[batch, hd], cache.h.clone())?;
        let c = Tensor::from_vec(&[batch, hd], cache.c.clone())?;
        Ok((h, c, cache))
    }

    /// Backward through [`LstmCell::step`]; returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &mut self,
        cache: &LstmSeqCache<T>,
        dh: &Tensor<T>,
        dc: &Tensor<T>,
    ) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
        let batch = cache.batch;
        let g = self.backward_seq(cache, dh.data(), Some(dc.data()));
        (
            Tensor::from_vec(&[batch, self.input_dim], g.dx).expect("dx shape"),
            Tensor::from_vec(&[batch, self.hidden_dim], g.dh0).expect("dh shape"),
            Tensor::from_vec(&[batch, self.hidden_dim], g.dc0).expect("dc shape"),
        )
    }

    /// Run over a time-major sequence `x [steps, batch, input]`.
    ///
    /// With `reverse` the sequence is consumed from the last step to the first; cached
    /// states stay indexed by time step either way.
    pub fn forward_seq(
        &self,
        x: &[T],
        steps: usize,
        batch: usize,
        reverse: bool,
        h0: Option<&[T]>,
        c0: Option<&[T]>,
    ) -> Result<LstmSeqCache<T>> {
        let (inp, hd) = (self.input_dim, self.hidden_dim);
        let g4 = 4 * hd;
        if x.len() != steps * batch * inp {
            return Err(Error::dim(
                "lstm_forward",
                format!("input has {} values, expected {steps}x{batch}x{inp}", x.len()),
            ));
        }
        let bh = batch * hd;
        let h0 = h0.map_or_else(|| vec![T::zero(); bh], <[T]>::to_vec);
        let c0 = c0.map_or_else(|| vec![T::zero(); bh], <[T]>::to_vec);
        if h0.len() != bh || c0.len() != bh {
            return Err(Error::dim("lstm_forward", "initial state size"));
        }

        let mut gates = vec![T::zero(); steps * batch * g4];
        let bias = self.bias.value.data();
        for row in gates.chunks_mut(g4) {
            row.copy_from_slice(bias);
        }
        mm_nt(steps * batch, inp, g4, x, self.w_ih.value.data(), &mut gates, true);

        let mut c = vec![T::zero(); steps * bh];
        let mut tanh_c = vec![T::zero(); steps * bh];
        let mut h = vec![T::zero(); steps * bh];
        let w_hh = self.w_hh.value.data();
        let mut c_t = vec![T::zero(); bh];
        let mut tc_t = vec![T::zero(); bh];
        let mut h_t = vec![T::zero(); bh];

        for s in 0..steps {
            let t = if reverse { steps - 1 - s } else { s };
            let prev_t = if s == 0 {
                None
            } else if reverse {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            let g_t = &mut gates[t * batch * g4..(t + 1) * batch * g4];
            let (h_prev, c_prev): (&[T], &[T]) = match prev_t {
                None => (&h0, &c0),
                Some(p) => (&h[p * bh..(p + 1) * bh], &c[p * bh..(p + 1) * bh]),
            };
            mm_nt(batch, hd, g4, h_prev, w_hh, g_t, true);
            for row in g_t.chunks_mut(g4) {
                T::sigmoid_in_place(&mut row[..2 * hd]);
                T::tanh_in_place(&mut row[2 * hd..3 * hd]);
                T::sigmoid_in_place(&mut row[3 * hd..]);
            }
            for b in 0..batch {
                let row = &g_t[b * g4..(b + 1) * g4];
                for j in 0..hd {
                    let k = b * hd + j;
                    c_t[k] = row[hd + j] * c_prev[k] + row[j] * row[2 * hd + j];
                }
            }
            tc_t.copy_from_slice(&c_t);
            T::tanh_in_place(&mut tc_t);
            for b in 0..batch {
                let o = &g_t[b * g4 + 3 * hd..(b + 1) * g4];
                for j in 0..hd {
                    let k = b * hd + j;
                    h_t[k] = o[j] * tc_t[k];
                }
            }
            c[t * bh..(t + 1) * bh].copy_from_slice(&c_t);
            tanh_c[t * bh..(t + 1) * bh].copy_from_slice(&tc_t);
            h[t * bh..(t + 1) * bh].copy_from_slice(&h_t);
        }

        Ok(LstmSeqCache {
            steps,
            batch,
            reverse,
            x: x.to_vec(),
            gates,
            c,
            tanh_c,
            h,
            h0,
            c0,
        })
    }

    /// Backpropagation through time.
    ///
    /// `dh` is `dL/dh_t` for every step `[steps, batch, hidden]`; `dc_last` optionally adds
    /// `dL/dc` at the final processed step. Parameter gradients are accumulated.
    pub fn backward_seq(&mut self, cache: &LstmSeqCache<T>, dh: &[T], dc_last: Option<&[T]>) -> LstmSeqGrads<T> {
        let (inp, hd) = (self.input_dim, self.hidden_dim);
        let g4 = 4 * hd;
        let (steps, batch) = (cache.steps, cache.batch);
        let bh = batch * hd;
        assert_eq!(dh.len(), steps * bh, "lstm backward: dh size");

        let one = T::one();
        let mut da = vec![T::zero(); steps * batch * g4];
        let mut dh_next = vec![T::zero(); bh];
        let mut dc_next = dc_last.map_or_else(|| vec![T::zero(); bh], <[T]>::to_vec);
        let w_hh = self.w_hh.value.data();

        for s in (0..steps).rev() {
            let t = if cache.reverse { steps - 1 - s } else { s };
            let c_prev: &[T] = if s == 0 {
                &cache.c0
            } else if cache.reverse {
                &cache.c[(t + 1) * bh..(t + 2) * bh]
            } else {
                &cache.c[(t - 1) * bh..t * bh]
            };
            let gates = &cache.gates[t * batch * g4..(t + 1) * batch * g4];
            let tanh_c = &cache.tanh_c[t * bh..(t + 1) * bh];
            let dh_t = &dh[t * bh..(t + 1) * bh];
            let da_t = &mut da[t * batch * g4..(t + 1) * batch * g4];
            for b in 0..batch {
                let gr = &gates[b * g4..(b + 1) * g4];
                let dr = &mut da_t[b * g4..(b + 1) * g4];
                for j in 0..hd {
                    let k = b * hd + j;
                    let (i, f, gg, o) = (gr[j], gr[hd + j], gr[2 * hd + j], gr[3 * hd + j]);
                    let tc = tanh_c[k];
                    let dhk = dh_t[k] + dh_next[k];
                    let dc = dc_next[k] + dhk * o * (one - tc * tc);
                    dr[j] = dc * gg * i * (one - i);
                    dr[hd + j] = dc * c_prev[k] * f * (one - f);
                    dr[2 * hd + j] = dc * i * (one - gg * gg);
                    dr[3 * hd + j] = dhk * tc * o * (one - o);
                    dc_next[k] = dc * f;
                }
            }
            mm_nn(batch, g4, hd, da_t, w_hh, &mut dh_next, false);
        }

        // Previous hidden state of every step, stacked in time order.
        let mut h_prev = vec![T::zero(); steps * bh];
        for t in 0..steps {
            let src: &[T] = if cache.reverse {
                if t + 1 == steps {
                    &cache.h0
                } else {
                    &cache.h[(t + 1) * bh..(t + 2) * bh]
                }
            } else if t == 0 {
                &cache.h0
            } else {
                &cache.h[(t - 1) * bh..t * bh]
            };
            h_prev[t * bh..(t + 1) * bh].copy_from_slice(src);
        }
        let rows = steps * batch;
        mm_tn(g4, rows, hd, &da, &h_prev, self.w_hh.grad.data_mut(), true);
        mm_tn(g4, rows, inp, &da, &cache.x, self.w_ih.grad.data_mut(), true);
        let db = self.bias.grad.data_mut();
        for row in da.chunks(g4) {
            for (g, &v) in db.iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut dx = vec![T::zero(); rows * inp];
        mm_nn(rows, g4, inp, &da, self.w_ih.value.data(), &mut dx, false);

        LstmSeqGrads {
            dx,
            dh0: dh_next,
            dc0: dc_next,
        }
    }
}

impl<T: Real> Module<T> for LstmCell<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![
            ("w_ih".into(), &self.w_ih),
            ("w_hh".into(), &self.w_hh),
            ("bias".into(), &self.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![
            ("w_ih".into(), &mut self.w_ih),
            ("w_hh".into(), &mut self.w_hh),
            ("bias".into(), &mut self.bias),
        ]
    }
}

/// One bidirectional layer: a forward-in-time cell and a backward-in-time cell.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmLayer<T> {
    pub forward: LstmCell<T>,
    pub backward: LstmCell<T>,
}

impl<T: Real> BiLstmLayer<T> {
    pub fn input_dim(&self) -> usize {
        self.forward.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim
    }
}

/// Stacked bidirectional LSTM over fixed-length sequences.
///
/// Each layer emits `[h_fwd(t) | h_bwd(t)]` per step; the stack output is the last
/// layer's `[h_fwd(T-1) | h_bwd(0)]`, i.e. each direction's final hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm<T> {
    seq_len: usize,
    layers: Vec<BiLstmLayer<T>>,
}

#[derive(Clone, Debug)]
pub struct BiLstmCache<T> {
    batch: usize,
    layers: Vec<(LstmSeqCache<T>, LstmSeqCache<T>)>,
}

impl<T: Real> BiLstm<T> {
    /// `input_dim -> hidden` first layer, `2*hidden -> hidden` afterwards.
    pub fn new<R: Rng + ?Sized>(seq_len: usize, input_dim: usize, hidden_dim: usize, num_layers: usize, rng: &mut R) -> Self {
        let layers = (0..num_layers)
            .map(|l| {
                let inp = if l == 0 { input_dim } else { 2 * hidden_dim };
                BiLstmLayer {
                    forward: LstmCell::new(inp, hidden_dim, rng),
                    backward: LstmCell::new(inp, hidden_dim, rng),
                }
            })
            .collect();
        BiLstm { seq_len, layers }
    }

    pub fn zeros(seq_len: usize, input_dim: usize, hidden_dim: usize, num_layers: usize) -> Self {
        let layers = (0..num_layers)
            .map(|l| {
                let inp = if l == 0 { input_dim } else { 2 * hidden_dim };
                BiLstmLayer {
                    forward: LstmCell::zeros(inp, hidden_dim),
                    backward: LstmCell::zeros(inp, hidden_dim),
                }
            })
            .collect();
        BiLstm { seq_len, layers }
    }

    /// Assemble from explicit layers, checking that dimensions chain.
    pub fn from_layers(seq_len: usize, layers: Vec<BiLstmLayer<T>>) -> Result<Self> {
        for (l, layer) in layers.iter().enumerate() {
            if layer.forward.hidden_dim != layer.backward.hidden_dim
                || layer.forward.input_dim != layer.backward.input_dim
            {
                return Err(Error::dim(
                    "bilstm",
                    format!("layer {l}: forward and backward cells differ in shape"),
                ));
            }
            if l > 0 {
                let want = 2 * layers[l - 1].hidden_dim();
                if layer.input_dim() != want {
                    return Err(Error::dim(
                        "bilstm",
                        format!("layer {l} input_dim {} != 2*hidden of layer {} ({want})", layer.input_dim(), l - 1),
                    ));
                }
            }
        }
        if layers.is_empty() {
            return Err(Error::InvalidArgument("bilstm needs at least one layer".into()));
        }
        Ok(BiLstm { seq_len, layers })
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn layers(&self) -> &[BiLstmLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [BiLstmLayer<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.layers.last().expect("non-empty").hidden_dim()
    }

    /// `x [batch, steps, input] -> [batch, 2*hidden]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BiLstmCache<T>)> {
        if x.shape().len() != 3 {
            return Err(Error::dim("bilstm_forward", format!("expected [batch, steps, input], got {:?}", x.shape())));
        }
        if x.dim(1) != self.seq_len {
            return Err(Error::dim(
                "bilstm_forward",
                format!("sequence length {} != configured {}", x.dim(1), self.seq_len),
            ));
        }
        if x.dim(2) != self.input_dim() {
            return Err(Error::dim(
                "bilstm_forward",
                format!("input dim {} != layer 0 input_dim {}", x.dim(2), self.input_dim()),
            ));
        }
        let tm = swap_leading_axes(x);
        self.forward_time_major(tm.data(), x.dim(0))
    }

    /// Same as [`BiLstm::forward`] with the input already laid out `[steps, batch, input]`.
    pub fn forward_time_major(&self, x: &[T], batch: usize) -> Result<(Tensor<T>, BiLstmCache<T>)> {
        let steps = self.seq_len;
        let mut input: Vec<T> = x.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let fw = layer.forward.forward_seq(&input, steps, batch, false, None, None)?;
            let bw = layer.backward.forward_seq(&input, steps, batch, true, None, None)?;
            let hd = layer.hidden_dim();
            let mut next = vec![T::zero(); steps * batch * 2 * hd];
            for (r, out) in next.chunks_mut(2 * hd).enumerate() {
                out[..hd].copy_from_slice(&fw.h[r * hd..(r + 1) * hd]);
                out[hd..].copy_from_slice(&bw.h[r * hd..(r + 1) * hd]);
            }
            caches.push((fw, bw));
            input = next;
        }
        let last = self.layers.last().expect("non-empty");
        let hd = last.hidden_dim();
        let (fw, bw) = caches.last().expect("non-empty");
        let mut out = Tensor::zeros(&[batch, 2 * hd]);
        let bh = batch * hd;
        for b in 0..batch {
            let row = &mut out.data_mut()[b * 2 * hd..(b + 1) * 2 * hd];
            row[..hd].copy_from_slice(&fw.h[(steps - 1) * bh + b * hd..(steps - 1) * bh + (b + 1) * hd]);
            row[hd..].copy_from_slice(&bw.h[b * hd..(b + 1) * hd]);
        }
        Ok((out, BiLstmCache { batch, layers: caches }))
    }

    /// Backward from `dL/d(output) [batch, 2*hidden]`; returns `dL/dx [batch, steps, input]`.
    pub fn backward(&mut self, cache: &BiLstmCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let dx = self.backward_time_major(cache, dy);
        let (batch, steps) = (cache.batch, self.seq_len);
        let tm = Tensor::from_vec(&[steps, batch, self.input_dim()], dx).expect("dx shape");
        swap_leading_axes(&tm)
    }

    /// Backward returning `dL/dx` time-major `[steps, batch, input]`.
    pub fn backward_time_major(&mut self, cache: &BiLstmCache<T>, dy: &Tensor<T>) -> Vec<T> {
        let (batch, steps) = (cache.batch, self.seq_len);
        let hd_last = self.layers.last().expect("non-empty").hidden_dim();
        assert_eq!(dy.shape(), [batch, 2 * hd_last], "bilstm backward grad shape");

        // dL/d(per-step output of the current layer), [steps, batch, 2*hidden]
        let mut d_out = vec![T::zero(); steps * batch * 2 * hd_last];
        for b in 0..batch {
            let g = dy.row(b);
            let last = ((steps - 1) * batch + b) * 2 * hd_last;
            d_out[last..last + hd_last].copy_from_slice(&g[..hd_last]);
            let first = b * 2 * hd_last;
            d_out[first + hd_last..first + 2 * hd_last].copy_from_slice(&g[hd_last..]);
        }

        for (layer, (fw, bw)) in self.layers.iter_mut().zip(&cache.layers).rev() {
            let hd = layer.hidden_dim();
            let mut dh_f = vec![T::zero(); steps * batch * hd];
            let mut dh_b = vec![T::zero(); steps * batch * hd];
            for (r, g) in d_out.chunks(2 * hd).enumerate() {
                dh_f[r * hd..(r + 1) * hd].copy_from_slice(&g[..hd]);
                dh_b[r * hd..(r + 1) * hd].copy_from_slice(&g[hd..]);
            }
            let gf = layer.forward.backward_seq(fw, &dh_f, None);
            let gb = layer.backward.backward_seq(bw, &dh_b, None);
            d_out = gf.dx;
            for (a, b) in d_out.iter_mut().zip(gb.dx) {
                *a += b;
            }
        }
        d_out
    }
}

impl<T: Real> Module<T> for BiLstm<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.extend(scoped(&format!("l{l}.fwd"), layer.forward.params()));
            out.extend(scoped(&format!("l{l}.bwd"), layer.backward.params()));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.extend(scoped_mut(&format!("l{l}.fwd"), layer.forward.params_mut()));
            out.extend(scoped_mut(&format!("l{l}.bwd"), layer.backward.params_mut()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_weights_keep_state_at_zero() {
        let cell = LstmCell::<f64>::zeros(3, 2);
        let x = Tensor::from_rows(&[&[0.5, -1.0, 2.0]]).unwrap();
        let (h, c, _) = cell.step(&x, &Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 2])).unwrap();
        assert!(h.data().iter().chain(c.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn forget_bias_one_hand_evaluation() {
        let mut cell = LstmCell::<f64>::zeros(1, 1);
        cell.bias.value.data_mut()[1] = 1.0;
        let x = Tensor::from_rows(&[&[0.3]]).unwrap();
        let (h, c, _) = cell
            .step(&x, &Tensor::zeros(&[1, 1]), &Tensor::full(&[1, 1], 1.0))
            .unwrap();
        let c_want = sig(1.0);
        let h_want = 0.5 * c_want.tanh();
        assert!((c.data()[0] - c_want).abs() < 1e-15);
        assert!((h.data()[0] - h_want).abs() < 1e-15);
        assert!((c.data()[0] - 0.7311).abs() < 1e-4);
        assert!((h.data()[0] - 0.3118).abs() < 1e-4);
    }

    #[test]
    fn batch_rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = LstmCell::<f64>::new(2, 3, &mut rng);
        let one = Tensor::from_rows(&[&[0.4, -0.2]]).unwrap();
        let two = Tensor::from_rows(&[&[0.4, -0.2], &[0.4, -0.2]]).unwrap();
        let (h1, c1, _) = cell.step(&one, &Tensor::zeros(&[1, 3]), &Tensor::zeros(&[1, 3])).unwrap();
        let (h2, c2, _) = cell.step(&two, &Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap();
        assert_eq!(h2.row(0), h1.row(0));
        assert_eq!(h2.row(1), h1.row(0));
        assert_eq!(c2.row(1), c1.row(0));
    }

    #[test]
    fn init_sets_only_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = LstmCell::<f64>::new(1, 4, &mut rng);
        let b = cell.bias.value.data();
        assert!(b[..4].iter().all(|&v| v == 0.0));
        assert!(b[4..8].iter().all(|&v| v == 1.0));
        assert!(b[8..].iter().all(|&v| v == 0.0));
        assert!(cell.w_ih.value.data().iter().all(|v| v.abs() <= 1.0));
        assert!(cell.w_hh.value.data().iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn step_dimension_errors() {
        let cell = LstmCell::<f64>::zeros(2, 3);
        assert!(cell.step(&Tensor::zeros(&[1, 3]), &Tensor::zeros(&[1, 3]), &Tensor::zeros(&[1, 3])).is_err());
        assert!(cell.step(&Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 3])).is_err());
    }

    #[test]
    fn bilstm_zero_weights_give_zero_output() {
        let net = BiLstm::<f64>::zeros(5, 1, 3, 3);
        let x = Tensor::from_vec(&[2, 5, 1], (0..10).map(|v| v as f64 * 0.3 - 1.0).collect()).unwrap();
        let (y, _) = net.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 6]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bilstm_matches_manual_unrolling() {
        let mut fw = LstmCell::<f64>::zeros(1, 1);
        let mut bw = LstmCell::<f64>::zeros(1, 1);
        fw.w_ih.value.data_mut().copy_from_slice(&[0.5, -0.3, 0.8, 0.2]);
        fw.w_hh.value.data_mut().copy_from_slice(&[0.1, 0.4, -0.6, 0.9]);
        fw.bias.value.data_mut().copy_from_slice(&[0.0, 1.0, 0.1, -0.1]);
        bw.w_ih.value.data_mut().copy_from_slice(&[-0.7, 0.2, 0.3, 0.6]);
        bw.w_hh.value.data_mut().copy_from_slice(&[0.3, -0.2, 0.5, 0.1]);
        bw.bias.value.data_mut().copy_from_slice(&[0.2, 1.0, 0.0, 0.3]);
        let net = BiLstm::from_layers(2, vec![BiLstmLayer { forward: fw.clone(), backward: bw.clone() }]).unwrap();
        let x = Tensor::from_vec(&[1, 2, 1], vec![0.9, -0.4]).unwrap();
        let (y, _) = net.forward(&x).unwrap();

        // hand unrolling with the scalar gate equations
        let run = |cell: &LstmCell<f64>, xs: &[f64]| {
            let (wi, wh, b) = (cell.w_ih.value.data(), cell.w_hh.value.data(), cell.bias.value.data());
            let (mut h, mut c) = (0.0, 0.0);
            for &xt in xs {
                let a: Vec<f64> = (0..4).map(|k| wi[k] * xt + wh[k] * h + b[k]).collect();
                let (i, f, g, o) = (sig(a[0]), sig(a[1]), a[2].tanh(), sig(a[3]));
                c = f * c + i * g;
                h = o * c.tanh();
            }
            h
        };
        let hf = run(&fw, &[0.9, -0.4]);
        let hb = run(&bw, &[-0.4, 0.9]);
        assert!((y.data()[0] - hf).abs() < 1e-14);
        assert!((y.data()[1] - hb).abs() < 1e-14);
    }

    #[test]
    fn reversing_time_and_swapping_directions_swaps_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = BiLstm::<f64>::new(6, 1, 3, 1, &mut rng);
        let layer = &net.layers()[0];
        let swapped = BiLstm::from_layers(
            6,
            vec![BiLstmLayer { forward: layer.backward.clone(), backward: layer.forward.clone() }],
        )
        .unwrap();
        let xs: Vec<f64> = (0..6).map(|v| (v as f64 * 0.7).sin()).collect();
        let rev: Vec<f64> = xs.iter().rev().copied().collect();
        let (y, _) = net.forward(&Tensor::from_vec(&[1, 6, 1], xs).unwrap()).unwrap();
        let (yr, _) = swapped.forward(&Tensor::from_vec(&[1, 6, 1], rev).unwrap()).unwrap();
        for k in 0..3 {
            assert!((y.data()[k] - yr.data()[3 + k]).abs() < 1e-14);
            assert!((y.data()[3 + k] - yr.data()[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn bilstm_shape_errors() {
        let net = BiLstm::<f64>::zeros(4, 1, 2, 2);
        assert!(net.forward(&Tensor::zeros(&[1, 5, 1])).is_err());
        assert!(net.forward(&Tensor::zeros(&[1, 4, 2])).is_err());
        let bad = vec![
            BiLstmLayer { forward: LstmCell::<f64>::zeros(1, 2), backward: LstmCell::zeros(1, 2) },
            BiLstmLayer { forward: LstmCell::zeros(2, 2), backward: LstmCell::zeros(2, 2) },
        ];
        assert!(BiLstm::from_layers(4, bad).is_err());
    }
}
