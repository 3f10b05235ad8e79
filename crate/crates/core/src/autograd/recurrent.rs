//! A whole LSTM direction as one graph node.

use super::{sigmoid, transpose, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Activated gates `[i f g o]` and cell state per time step, kept for the
/// backward pass.
#[derive(Clone, Debug)]
pub(crate) struct LstmCache<T> {
    pub gates: Vec<T>,
    pub cells: Vec<T>,
    pub tanh_cells: Vec<T>,
}

impl<'a, T: Scalar> Graph<'a, T> {
    /// Runs `h_t = o ⊙ tanh(c_t)`, `c_t = f ⊙ c_{t-1} + i ⊙ g` over the rows of
    /// `xwb[n×4h]` (input projection plus bias), with `z_t = xwb_t + h_{t-1}·w_hhᵀ`
    /// and zero initial states. Row `t` of the `[n×h]` output is the state
    /// at time `t`; `reverse` walks from the last row to the first.
    pub fn lstm_direction(&mut self, xwb: Var, w_hh: Var, reverse: bool) -> Result<Var> {
        let (xv, wv) = (self.value(xwb), self.value(w_hh));
        let (n, h4) = xv.dims2()?;
        let (wr, h) = wv.dims2()?;
        if n == 0 {
            return Err(Error::EmptySequence("lstm_direction"));
        }
        if h4 != 4 * h || wr != h4 {
            return Err(Error::dim("lstm_direction", xv.shape(), wv.shape()));
        }
        let x = xv.data();
        // w_hhᵀ, so each recurrent step is a run of contiguous row updates
        let wt = transpose(wv.data(), h4, h);
        let mut gates = x.to_vec();
        let mut cells = vec![T::zero(); n * h];
        let mut tanh_cells = vec![T::zero(); n * h];
        let mut out = vec![T::zero(); n * h];
        let mut prev: Option<usize> = None;
        for s in 0..n {
            let t = if reverse { n - 1 - s } else { s };
            let gt = &mut gates[t * h4..(t + 1) * h4];
            if let Some(p) = prev {
                let hp = &out[p * h..(p + 1) * h];
                for (&hj, wrow) in hp.iter().zip(wt.chunks_exact(h4)) {
                    for (z, &v) in gt.iter_mut().zip(wrow) {
                        *z += hj * v;
                    }
                }
            }
            let (ifg, o) = gt.split_at_mut(3 * h);
            for z in ifg[..2 * h].iter_mut().chain(o.iter_mut()) {
                *z = sigmoid(*z);
            }
            for z in &mut ifg[2 * h..] {
                *z = z.tanh();
            }
            for j in 0..h {
                let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let mut c = i * g;
                if let Some(p) = prev {
                    c += f * cells[p * h + j];
                }
                let tc = c.tanh();
                cells[t * h + j] = c;
                tanh_cells[t * h + j] = tc;
                out[t * h + j] = o * tc;
            }
            prev = Some(t);
        }
        let value = Tensor::new(&[n, h], out)?;
        Ok(self.push(
            value,
            Op::Lstm {
                xwb,
                w_hh,
                reverse,
                cache: LstmCache { gates, cells, tanh_cells },
            },
            &[xwb, w_hh],
        ))
    }
}

/// Backpropagation through time. Returns `(d xwb, d w_hh)`.
pub(crate) fn lstm_backward<T: Scalar>(
    out: &[T],
    w: &[T],
    cache: &LstmCache<T>,
    reverse: bool,
    gout: &[T],
    h: usize,
) -> (Vec<T>, Vec<T>) {
    let n = out.len() / h;
    let h4 = 4 * h;
    let one = T::one();
    let mut dx = vec![T::zero(); n * h4];
    let mut dw = vec![T::zero(); h4 * h];
    let mut dh_next = vec![T::zero(); h];
    let mut dc_next = vec![T::zero(); h];
    for s in (0..n).rev() {
        let t = if reverse { n - 1 - s } else { s };
        let prev = (s > 0).then(|| if reverse { t + 1 } else { t - 1 });
        let gt = &cache.gates[t * h4..(t + 1) * h4];
        let dz = &mut dx[t * h4..(t + 1) * h4];
        for j in 0..h {
            let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
            let tc = cache.tanh_cells[t * h + j];
            let dh = gout[t * h + j] + dh_next[j];
            let dc = dh * o * (one - tc * tc) + dc_next[j];
            dz[j] = dc * g * i * (one - i);
            dz[2 * h + j] = dc * i * (one - g * g);
            dz[3 * h + j] = dh * tc * o * (one - o);
            match prev {
                Some(p) => {
                    dz[h + j] = dc * cache.cells[p * h + j] * f * (one - f);
                    dc_next[j] = dc * f;
                }
                None => dz[h + j] = T::zero(),
            }
        }
        dh_next.iter_mut().for_each(|v| *v = T::zero());
        if let Some(p) = prev {
            let hp = &out[p * h..(p + 1) * h];
            for (r, &d) in dz.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                let wr = &w[r * h..(r + 1) * h];
                for (acc, &x) in dw[r * h..(r + 1) * h].iter_mut().zip(hp) {
                    *acc += d * x;
                }
                for (dhn, &wv) in dh_next.iter_mut().zip(wr) {
                    *dhn += d * wv;
                }
            }
        }
    }
    (dx, dw)
}
