//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation of one forward pass. Leaves either
//! borrow a tensor from a [`ParameterStore`] (trainable) or own a constant.
//! [`Graph::backward`] walks the tape in reverse and accumulates gradients
//! into per-leaf buffers; calling it twice without [`Graph::zero_grad`]
//! sums the two passes.

mod backward;
mod recurrent;

use std::borrow::Cow;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Added inside the logarithm of the cross-entropy.
pub const LOG_EPS: f64 = 1e-12;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    /// `a·bᵀ`.
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    Scale(Var, T),
    ScaleBy(Var, Var),
    Act(Var, Activation),
    Softmax(Var),
    Depthwise { x: Var, w: Var, b: Var, k: usize },
    Conv1d { x: Var, w: Var, b: Var, k: usize },
    MaxOverTime { x: Var, argmax: Vec<usize> },
    CrossEntropy { p: Var, target: Vec<T> },
    Sum(Var),
    Reshape(Var),
    Row(Var, usize),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Concat(Vec<Var>),
    Select(Var, usize),
    Embed { table: Var, ids: Vec<usize> },
    CosineRows(Var, Var),
    Lstm {
        xwb: Var,
        w_hh: Var,
        reverse: bool,
        cache: recurrent::LstmCache<T>,
    },
}

pub(crate) struct Node<'a, T: Scalar> {
    pub value: Cow<'a, Tensor<T>>,
    pub op: Op<T>,
    pub needs_grad: bool,
    pub grad: Option<Vec<T>>,
}

/// Map from parameter name to its leaf in a graph.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    vars: IndexMap<String, Var>,
}

impl Bindings {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

pub struct Graph<'a, T: Scalar> {
    pub(crate) nodes: Vec<Node<'a, T>>,
}

impl<'a, T: Scalar> Default for Graph<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf that borrows its value.
    pub fn param(&mut self, value: &'a Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            needs_grad: true,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf that owns its value.
    pub fn param_owned(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: Op::Leaf,
            needs_grad: true,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: Op::Leaf,
            needs_grad: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers every entry of `store` as a trainable leaf.
    pub fn bind(&mut self, store: &'a ParameterStore<T>) -> Bindings {
        let mut vars = IndexMap::with_capacity(store.len());
        for (name, t) in store.iter() {
            vars.insert(name.to_string(), self.param(t));
        }
        Bindings { vars }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf (None before any backward pass).
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Leaf gradients in binding order; missing gradients become zeros.
    pub fn leaf_grads(&self, bindings: &Bindings) -> Vec<Vec<T>> {
        bindings
            .iter()
            .map(|(_, v)| match self.grad(v) {
                Some(g) => g.to_vec(),
                None => vec![T::zero(); self.value(v).len()],
            })
            .collect()
    }

    /// Like [`Graph::leaf_grads`], consuming the graph to avoid copies.
    pub fn into_leaf_grads(mut self, bindings: &Bindings) -> Vec<Vec<T>> {
        bindings
            .iter()
            .map(|(_, v)| match self.nodes[v.0].grad.take() {
                Some(g) => g,
                None => vec![T::zero(); self.value(v).len()],
            })
            .collect()
    }

    // ---- linear algebra ------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::dim("matmul", av.shape(), bv.shape()));
        }
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let p = bv.shape()[1];
        let out = matmul_raw(av.data(), bv.data(), m, k, p);
        let t = Tensor::new(&[m, p], out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    /// `a[m×k]·bᵀ` for `b[p×k]`, without materialising the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[1] {
            return Err(Error::dim("matmul_nt", av.shape(), bv.shape()));
        }
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let p = bv.shape()[0];
        let out = if p >= 8 {
            let bt = transpose(bv.data(), p, k);
            matmul_raw(av.data(), &bt, m, k, p)
        } else {
            let mut out = Vec::with_capacity(m * p);
            for i in 0..m {
                let ar = &av.data()[i * k..(i + 1) * k];
                out.extend(bv.data().chunks_exact(k.max(1)).take(p).map(|br| dot(ar, br)));
            }
            out.resize(m * p, T::zero());
            out
        };
        let t = Tensor::new(&[m, p], out)?;
        Ok(self.push(t, Op::MatMulNt(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::Rank(format!("transpose of shape {:?}", xv.shape())));
        }
        let (r, c) = (xv.shape()[0], xv.shape()[1]);
        let t = Tensor::new(&[c, r], transpose(xv.data(), r, c))?;
        Ok(self.push(t, Op::Transpose(x), &[x]))
    }

    // ---- elementwise ---------------------------------------------------

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim(op, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// `x[m×n] + bias[n]` broadcast over rows (also accepts a vector `x`).
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let (_, n) = xv.dims2()?;
        if bv.len() != n {
            return Err(Error::dim("add_row", xv.shape(), bv.shape()));
        }
        let data = xv
            .data()
            .chunks_exact(n.max(1))
            .flat_map(|row| row.iter().zip(bv.data()).map(|(&v, &c)| v + c))
            .collect();
        let t = Tensor::new(xv.shape(), data)?;
        Ok(self.push(t, Op::AddRow(x, bias), &[x, bias]))
    }

    /// `x[m×n] + s[m]` with `s_i` added to every entry of row `i`.
    pub fn add_col(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        let (m, n) = xv.dims2()?;
        if sv.len() != m {
            return Err(Error::dim("add_col", xv.shape(), sv.shape()));
        }
        let data = xv
            .data()
            .chunks_exact(n.max(1))
            .zip(sv.data())
            .flat_map(|(row, &c)| row.iter().map(move |&v| v + c))
            .collect();
        let t = Tensor::new(xv.shape(), data)?;
        Ok(self.push(t, Op::AddCol(x, s), &[x, s]))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v * c).collect();
        let t = Tensor::new(xv.shape(), data).expect("same shape");
        self.push(t, Op::Scale(x, c), &[x])
    }

    /// Multiplies every entry of `x` by the single entry of `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        if sv.len() != 1 {
            return Err(Error::dim("scale_by", xv.shape(), sv.shape()));
        }
        let c = sv.data()[0];
        let data = xv.data().iter().map(|&v| v * c).collect();
        let t = Tensor::new(xv.shape(), data)?;
        Ok(self.push(t, Op::ScaleBy(x, s), &[x, s]))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| kind.apply(v)).collect();
        let t = Tensor::new(xv.shape(), data).expect("same shape");
        self.push(t, Op::Act(x, kind), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    /// Row-wise softmax with max subtraction. A vector is a single row.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (_, c) = xv.dims2()?;
        let mut data = xv.data().to_vec();
        if c > 0 {
            for row in data.chunks_mut(c) {
                softmax_in_place(row);
            }
        }
        let t = Tensor::new(xv.shape(), data)?;
        Ok(self.push(t, Op::Softmax(x), &[x]))
    }

    // ---- convolution and pooling --------------------------------------

    /// Channel-wise 1D convolution with "same" zero padding.
    ///
    /// `x: [n×d]`, `w: [d×k]`, `b: [d]`; output `[n×d]` where channel `j`
    /// only reads channel `j` of the input.
    pub fn conv1d_depthwise(&mut self, x: Var, w: Var, b: Var, k: usize) -> Result<Var> {
        if k % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {k}")));
        }
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, d) = xv.dims2()?;
        if xv.rank() != 2 || wv.shape() != [d, k] || bv.len() != d {
            return Err(Error::dim("conv1d_depthwise", xv.shape(), wv.shape()));
        }
        let pad = (k - 1) / 2;
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        let wt = transpose(wd, d, k);
        let mut out = vec![T::zero(); n * d];
        for (t, row) in out.chunks_exact_mut(d.max(1)).enumerate() {
            row.copy_from_slice(bd);
            for q in pad.saturating_sub(t)..k.min(n + pad - t) {
                let xs = &xd[(t + q - pad) * d..(t + q - pad + 1) * d];
                for ((o, &w), &x) in row.iter_mut().zip(&wt[q * d..(q + 1) * d]).zip(xs) {
                    *o += w * x;
                }
            }
        }
        let t = Tensor::new(&[n, d], out)?;
        Ok(self.push(t, Op::Depthwise { x, w, b, k }, &[x, w, b]))
    }

    /// Full (ungrouped) 1D convolution, "same" padding.
    ///
    /// `x: [n×d]`, `w: [c×d×k]`, `b: [c]`; output `[n×c]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, k: usize) -> Result<Var> {
        if k % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {k}")));
        }
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, d) = xv.dims2()?;
        let c = bv.len();
        if xv.rank() != 2 || wv.shape() != [c, d, k] {
            return Err(Error::dim("conv1d", xv.shape(), wv.shape()));
        }
        let pad = (k - 1) / 2;
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        let mut out = vec![T::zero(); n * c];
        for t in 0..n {
            for o in 0..c {
                let mut acc = bd[o];
                for q in 0..k {
                    let src = t + q;
                    if src < pad || src - pad >= n {
                        continue;
                    }
                    let row = &xd[(src - pad) * d..(src - pad + 1) * d];
                    for (i, &xi) in row.iter().enumerate() {
                        acc += wd[(o * d + i) * k + q] * xi;
                    }
                }
                out[t * c + o] = acc;
            }
        }
        let t = Tensor::new(&[n, c], out)?;
        Ok(self.push(t, Op::Conv1d { x, w, b, k }, &[x, w, b]))
    }

    /// Pointwise (kernel size 1) convolution: `v[n×d]·w[d×c] + b[c]`.
    pub fn conv1d_pointwise(&mut self, v: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(v, w)?;
        self.add_row(y, b)
    }

    /// Per-column maximum over rows; gradient goes to the first argmax.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = xv.dims2()?;
        if n == 0 || xv.is_empty() {
            return Err(Error::EmptySequence("max_over_time"));
        }
        let mut best = xv.row(0).to_vec();
        let mut argmax = vec![0usize; c];
        for t in 1..n {
            for (j, &v) in xv.row(t).iter().enumerate() {
                if v > best[j] {
                    best[j] = v;
                    argmax[j] = t;
                }
            }
        }
        let t = Tensor::vector(best);
        Ok(self.push(t, Op::MaxOverTime { x, argmax }, &[x]))
    }

    // ---- losses and reductions ----------------------------------------

    /// `-Σ y_c ln(p_c + ε)` for a probability vector `p` and one-hot `y`.
    pub fn cross_entropy(&mut self, p: Var, onehot: &[T]) -> Result<Var> {
        let pv = self.value(p);
        if pv.len() != onehot.len() {
            return Err(Error::dim("cross_entropy", pv.shape(), &[onehot.len()]));
        }
        let ones = onehot.iter().filter(|&&y| y == T::one()).count();
        let zeros = onehot.iter().filter(|&&y| y == T::zero()).count();
        if ones != 1 || ones + zeros != onehot.len() {
            return Err(Error::Label(format!("target is not one-hot: {onehot:?}")));
        }
        let eps = T::lit(LOG_EPS);
        let loss = -pv
            .data()
            .iter()
            .zip(onehot)
            .map(|(&pc, &yc)| yc * (pc + eps).ln())
            .sum::<T>();
        let t = Tensor::scalar(loss);
        Ok(self.push(
            t,
            Op::CrossEntropy {
                p,
                target: onehot.to_vec(),
            },
            &[p],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    // ---- shape manipulation -------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Row `r` of a matrix as a `[1×n]` matrix.
    pub fn row(&mut self, x: Var, r: usize) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = xv.dims2()?;
        if r >= m {
            return Err(Error::dim("row", xv.shape(), &[r]));
        }
        let t = Tensor::new(&[1, n], xv.row(r).to_vec())?;
        Ok(self.push(t, Op::Row(x, r), &[x]))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = xv.dims2()?;
        if start + len > n {
            return Err(Error::dim("slice_cols", xv.shape(), &[start, len]));
        }
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let t = Tensor::new(&[m, len], out)?;
        Ok(self.push(t, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.value(parts[0]).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != m {
                return Err(Error::dim("concat_cols", self.shape(parts[0]), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let t = Tensor::new(&[m, total], out)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Vertically stacks matrices (vectors count as one row).
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptySequence("stack_rows"));
        }
        let n = self.value(parts[0]).dims2()?.1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if c != n {
                return Err(Error::dim("stack_rows", self.shape(parts[0]), self.shape(p)));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::new(&[rows, n], out)?;
        Ok(self.push(t, Op::StackRows(parts.to_vec()), parts))
    }

    /// Flattens and joins its inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::vector(out);
        Ok(self.push(t, Op::Concat(parts.to_vec()), parts))
    }

    /// Element `i` of the flattened tensor as a `[1]` vector.
    pub fn select(&mut self, x: Var, i: usize) -> Result<Var> {
        let xv = self.value(x);
        if i >= xv.len() {
            return Err(Error::dim("select", xv.shape(), &[i]));
        }
        let t = Tensor::vector(vec![xv.data()[i]]);
        Ok(self.push(t, Op::Select(x, i), &[x]))
    }

    // ---- model-specific primitives ------------------------------------

    /// Gathers rows of `table[V×d]` for each id.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let (v, d) = tv.dims2()?;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Vocab { id, size: v });
            }
            out.extend_from_slice(tv.row(id));
        }
        let t = Tensor::new(&[ids.len(), d], out)?;
        Ok(self.push(
            t,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Cosine similarity between every row of `a[n×d]` and every row of
    /// `p[m×d]`. Pairs involving a zero row score 0.
    pub fn cosine_rows(&mut self, a: Var, p: Var) -> Result<Var> {
        let (av, pv) = (self.value(a), self.value(p));
        let (n, d) = av.dims2()?;
        let (m, dp) = pv.dims2()?;
        if d != dp {
            return Err(Error::dim("cosine_rows", av.shape(), pv.shape()));
        }
        let an: Vec<T> = (0..n).map(|i| norm(av.row(i))).collect();
        let pn: Vec<T> = (0..m).map(|j| norm(pv.row(j))).collect();
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            for j in 0..m {
                let denom = an[i] * pn[j];
                if denom > T::zero() {
                    out[i * m + j] = dot(av.row(i), pv.row(j)) / denom;
                }
            }
        }
        let t = Tensor::new(&[n, m], out)?;
        Ok(self.push(t, Op::CosineRows(a, p), &[a, p]))
    }

    /// Runs reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Rank(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        backward::run(self, loss);
        Ok(())
    }
}

/// Row-major `[r×c]` → `[c×r]`.
pub(crate) fn transpose<T: Scalar>(x: &[T], r: usize, c: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        out.extend((0..r).map(|i| x[i * c + j]));
    }
    out
}

pub(crate) fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * p];
    for i in 0..m {
        let orow = &mut out[i * p..(i + 1) * p];
        for l in 0..k {
            let ail = a[i * k + l];
            if ail == T::zero() {
                continue;
            }
            let brow = &b[l * p..(l + 1) * p];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += ail * bv;
            }
        }
    }
    out
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Eight interleaved partial sums so the loop vectorises; the summation
/// order is fixed, so results stay deterministic.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    for (i, (&x, &y)) in ra.iter().zip(rb).enumerate() {
        acc[i] += x * y;
    }
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))
}

pub(crate) fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests;
