use super::{dot, matmul_raw, norm, transpose, Activation, Graph, Op, Var, LOG_EPS};
use crate::scalar::Scalar;

fn add_into<T: Scalar>(slot: &mut Option<Vec<T>>, len: usize, f: impl FnOnce(&mut [T])) {
    let buf = slot.get_or_insert_with(|| vec![T::zero(); len]);
    f(buf);
}

/// Gradient buffer of `v`, zero-filled on first use.
fn slot<'g, T: Scalar>(grads: &'g mut [Option<Vec<T>>], v: Var, len: usize) -> &'g mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

pub(super) fn run<T: Scalar>(g: &mut Graph<'_, T>, loss: Var) {
    let n = g.nodes.len();
    // Gradients of intermediate nodes for this pass only.
    let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
    grads[loss.0] = Some(vec![T::one()]);

    for idx in (0..=loss.0).rev() {
        let Some(gout) = grads[idx].take() else {
            continue;
        };
        if !g.nodes[idx].needs_grad {
            continue;
        }
        if matches!(g.nodes[idx].op, Op::Leaf) {
            match &mut g.nodes[idx].grad {
                Some(buf) => {
                    for (b, x) in buf.iter_mut().zip(&gout) {
                        *b += *x;
                    }
                }
                empty => *empty = Some(gout),
            }
            continue;
        }
        let op = g.nodes[idx].op.clone();
        propagate(g, idx, &op, &gout, &mut grads);
    }
}

fn propagate<T: Scalar>(
    g: &Graph<'_, T>,
    idx: usize,
    op: &Op<T>,
    gout: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let val = |v: Var| g.nodes[v.0].value.as_ref();
    let wants = |v: Var| g.nodes[v.0].needs_grad;
    let out = g.nodes[idx].value.as_ref();

    match op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k) = (av.shape()[0], av.shape()[1]);
            let p = bv.shape()[1];
            if wants(*a) {
                // dA += dC · Bᵀ
                let da = slot(grads, *a, m * k);
                for i in 0..m {
                    for l in 0..k {
                        da[i * k + l] += dot(&gout[i * p..(i + 1) * p], &bv.data()[l * p..(l + 1) * p]);
                    }
                }
            }
            if wants(*b) {
                // dB += Aᵀ · dC
                if m == 1 {
                    let db = slot(grads, *b, k * p);
                    for (l, &al) in av.data().iter().enumerate() {
                        if al == T::zero() {
                            continue;
                        }
                        for (o, &gv) in db[l * p..(l + 1) * p].iter_mut().zip(gout) {
                            *o += al * gv;
                        }
                    }
                } else {
                    let at = transpose(av.data(), m, k);
                    let db = matmul_raw(&at, gout, k, m, p);
                    accumulate(grads, *b, &db);
                }
            }
        }
        Op::MatMulNt(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k) = (av.shape()[0], av.shape()[1]);
            let p = bv.shape()[0];
            if wants(*a) {
                // dA += dC · B
                let da = slot(grads, *a, m * k);
                for i in 0..m {
                    let row = &mut da[i * k..(i + 1) * k];
                    for (o, &go) in gout[i * p..(i + 1) * p].iter().enumerate() {
                        if go == T::zero() {
                            continue;
                        }
                        for (d, &w) in row.iter_mut().zip(&bv.data()[o * k..(o + 1) * k]) {
                            *d += go * w;
                        }
                    }
                }
            }
            if wants(*b) {
                // dB += dCᵀ · A
                let db = slot(grads, *b, p * k);
                for i in 0..m {
                    let ar = &av.data()[i * k..(i + 1) * k];
                    for (o, &go) in gout[i * p..(i + 1) * p].iter().enumerate() {
                        if go == T::zero() {
                            continue;
                        }
                        for (d, &x) in db[o * k..(o + 1) * k].iter_mut().zip(ar) {
                            *d += go * x;
                        }
                    }
                }
            }
        }
        Op::Lstm {
            xwb,
            w_hh,
            reverse,
            cache,
        } => {
            let h = val(*w_hh).shape()[1];
            let (dx, dw) = super::recurrent::lstm_backward(out.data(), val(*w_hh).data(), cache, *reverse, gout, h);
            accumulate(grads, *xwb, &dx);
            if wants(*w_hh) {
                accumulate(grads, *w_hh, &dw);
            }
        }
        Op::Transpose(x) => {
            let (r, c) = (val(*x).shape()[0], val(*x).shape()[1]);
            let gx = transpose(gout, c, r);
            accumulate(grads, *x, &gx);
        }
        Op::Add(a, b) => {
            accumulate(grads, *a, gout);
            accumulate(grads, *b, gout);
        }
        Op::Sub(a, b) => {
            accumulate(grads, *a, gout);
            if wants(*b) {
                let neg: Vec<T> = gout.iter().map(|&x| -x).collect();
                accumulate(grads, *b, &neg);
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            if wants(*a) {
                let ga: Vec<T> = gout.iter().zip(bv.data()).map(|(&g, &y)| g * y).collect();
                accumulate(grads, *a, &ga);
            }
            if wants(*b) {
                let gb: Vec<T> = gout.iter().zip(av.data()).map(|(&g, &x)| g * x).collect();
                accumulate(grads, *b, &gb);
            }
        }
        Op::AddRow(x, b) => {
            accumulate(grads, *x, gout);
            if wants(*b) {
                let nb = val(*b).len();
                let mut gb = vec![T::zero(); nb];
                for row in gout.chunks_exact(nb.max(1)) {
                    for (g, &v) in gb.iter_mut().zip(row) {
                        *g += v;
                    }
                }
                accumulate(grads, *b, &gb);
            }
        }
        Op::AddCol(x, s) => {
            accumulate(grads, *x, gout);
            if wants(*s) {
                let m = val(*s).len();
                let n = gout.len() / m.max(1);
                let gs: Vec<T> = (0..m).map(|i| gout[i * n..(i + 1) * n].iter().copied().sum()).collect();
                accumulate(grads, *s, &gs);
            }
        }
        Op::Scale(x, c) => {
            let gx: Vec<T> = gout.iter().map(|&v| v * *c).collect();
            accumulate(grads, *x, &gx);
        }
        Op::ScaleBy(x, s) => {
            let c = val(*s).data()[0];
            if wants(*x) {
                let gx: Vec<T> = gout.iter().map(|&v| v * c).collect();
                accumulate(grads, *x, &gx);
            }
            if wants(*s) {
                let gs = dot(gout, val(*x).data());
                accumulate(grads, *s, &[gs]);
            }
        }
        Op::Act(x, kind) => {
            let xv = val(*x);
            let gx: Vec<T> = match kind {
                Activation::Relu => gout
                    .iter()
                    .zip(xv.data())
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect(),
                Activation::Tanh => gout
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &y)| g * (T::one() - y * y))
                    .collect(),
                Activation::Sigmoid => gout
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &y)| g * y * (T::one() - y))
                    .collect(),
            };
            accumulate(grads, *x, &gx);
        }
        Op::Softmax(x) => {
            let c = out.dims2().map(|(_, c)| c).unwrap_or(1).max(1);
            let mut gx = vec![T::zero(); gout.len()];
            for ((grow, yrow), xrow) in gout.chunks(c).zip(out.data().chunks(c)).zip(gx.chunks_mut(c)) {
                let s = dot(grow, yrow);
                for ((gx_i, &g_i), &y_i) in xrow.iter_mut().zip(grow).zip(yrow) {
                    *gx_i = y_i * (g_i - s);
                }
            }
            accumulate(grads, *x, &gx);
        }
        Op::Depthwise { x, w, b, k } => {
            let (xv, wv) = (val(*x), val(*w));
            let (n, d) = (xv.shape()[0], xv.shape()[1]);
            let k = *k;
            let pad = (k - 1) / 2;
            let wt = transpose(wv.data(), d, k);
            let mut gx = vec![T::zero(); n * d];
            let mut gwt = vec![T::zero(); k * d];
            let mut gb = vec![T::zero(); d];
            for t in 0..n {
                let go = &gout[t * d..(t + 1) * d];
                for (b, &g) in gb.iter_mut().zip(go) {
                    *b += g;
                }
                for q in pad.saturating_sub(t)..k.min(n + pad - t) {
                    let s = t + q - pad;
                    let wq = &wt[q * d..(q + 1) * d];
                    for ((o, &g), &w) in gx[s * d..(s + 1) * d].iter_mut().zip(go).zip(wq) {
                        *o += g * w;
                    }
                    let xs = &xv.data()[s * d..(s + 1) * d];
                    for ((o, &g), &x) in gwt[q * d..(q + 1) * d].iter_mut().zip(go).zip(xs) {
                        *o += g * x;
                    }
                }
            }
            accumulate(grads, *x, &gx);
            accumulate(grads, *w, &transpose(&gwt, k, d));
            accumulate(grads, *b, &gb);
        }
        Op::Conv1d { x, w, b, k } => {
            let (xv, wv) = (val(*x), val(*w));
            let (n, d) = (xv.shape()[0], xv.shape()[1]);
            let c = wv.shape()[0];
            let k = *k;
            let pad = (k - 1) / 2;
            let mut gx = vec![T::zero(); n * d];
            let mut gw = vec![T::zero(); c * d * k];
            let mut gb = vec![T::zero(); c];
            for t in 0..n {
                for o in 0..c {
                    let go = gout[t * c + o];
                    gb[o] += go;
                    for q in 0..k {
                        let src = t + q;
                        if src < pad || src - pad >= n {
                            continue;
                        }
                        let s = src - pad;
                        for i in 0..d {
                            let wi = (o * d + i) * k + q;
                            gx[s * d + i] += go * wv.data()[wi];
                            gw[wi] += go * xv.data()[s * d + i];
                        }
                    }
                }
            }
            accumulate(grads, *x, &gx);
            accumulate(grads, *w, &gw);
            accumulate(grads, *b, &gb);
        }
        Op::MaxOverTime { x, argmax } => {
            let c = argmax.len();
            let gx = slot(grads, *x, val(*x).len());
            for (j, &t) in argmax.iter().enumerate() {
                gx[t * c + j] += gout[j];
            }
        }
        Op::CrossEntropy { p, target } => {
            let eps = T::lit(LOG_EPS);
            let gp: Vec<T> = val(*p)
                .data()
                .iter()
                .zip(target)
                .map(|(&pc, &yc)| -gout[0] * yc / (pc + eps))
                .collect();
            accumulate(grads, *p, &gp);
        }
        Op::Sum(x) => {
            let gx = vec![gout[0]; val(*x).len()];
            accumulate(grads, *x, &gx);
        }
        Op::Reshape(x) => accumulate(grads, *x, gout),
        Op::Row(x, r) => {
            let xv = val(*x);
            let n = gout.len();
            let gx = slot(grads, *x, xv.len());
            for (o, &v) in gx[r * n..(r + 1) * n].iter_mut().zip(gout) {
                *o += v;
            }
        }
        Op::SliceCols { x, start } => {
            let xv = val(*x);
            let (m, n) = xv.dims2().expect("rank checked in forward");
            let len = gout.len() / m.max(1);
            let gx = slot(grads, *x, xv.len());
            for r in 0..m {
                for (o, &v) in gx[r * n + start..r * n + start + len].iter_mut().zip(&gout[r * len..(r + 1) * len]) {
                    *o += v;
                }
            }
        }
        Op::ConcatCols(parts) => {
            let widths: Vec<usize> = parts
                .iter()
                .map(|&p| val(p).dims2().expect("rank checked").1)
                .collect();
            let total: usize = widths.iter().sum();
            let m = gout.len() / total.max(1);
            let mut offset = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                if wants(p) {
                    let mut gp = Vec::with_capacity(m * w);
                    for r in 0..m {
                        gp.extend_from_slice(&gout[r * total + offset..r * total + offset + w]);
                    }
                    accumulate(grads, p, &gp);
                }
                offset += w;
            }
        }
        Op::StackRows(parts) | Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = val(p).len();
                accumulate(grads, p, &gout[offset..offset + len]);
                offset += len;
            }
        }
        Op::Select(x, i) => {
            slot(grads, *x, val(*x).len())[*i] += gout[0];
        }
        Op::Embed { table, ids } => {
            let tv = val(*table);
            let d = tv.shape()[1];
            let gt = slot(grads, *table, tv.len());
            for (row, &id) in ids.iter().enumerate() {
                for c in 0..d {
                    gt[id * d + c] += gout[row * d + c];
                }
            }
        }
        Op::CosineRows(a, p) => {
            let (av, pv) = (val(*a), val(*p));
            let (n, d) = (av.shape()[0], av.shape()[1]);
            let m = pv.shape()[0];
            let an: Vec<T> = (0..n).map(|i| norm(av.row(i))).collect();
            let pn: Vec<T> = (0..m).map(|j| norm(pv.row(j))).collect();
            let mut ga = vec![T::zero(); n * d];
            let mut gp = vec![T::zero(); m * d];
            for i in 0..n {
                for j in 0..m {
                    let denom = an[i] * pn[j];
                    if denom <= T::zero() {
                        continue;
                    }
                    let go = gout[i * m + j];
                    let y = out.data()[i * m + j];
                    let (ar, pr) = (av.row(i), pv.row(j));
                    let a2 = an[i] * an[i];
                    let p2 = pn[j] * pn[j];
                    for c in 0..d {
                        ga[i * d + c] += go * (pr[c] / denom - y * ar[c] / a2);
                        gp[j * d + c] += go * (ar[c] / denom - y * pr[c] / p2);
                    }
                }
            }
            accumulate(grads, *a, &ga);
            accumulate(grads, *p, &gp);
        }
    }

    fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, g: &[T]) {
        add_into(&mut grads[v.0], g.len(), |buf| {
            for (b, &x) in buf.iter_mut().zip(g) {
                *b += x;
            }
        });
    }
}

