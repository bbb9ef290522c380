use std::fmt::Debug;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::kernels::{self, split_axis, ROW_MAJOR};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Backward rule for an operation defined outside this crate.
///
/// `backward` receives the gradient of the output and returns one gradient
/// per input, in the order the inputs were passed to [`Tape::custom`].
pub trait CustomBackward<T>: Debug {
    fn backward(&self, grad_out: &[T]) -> Vec<Vec<T>>;
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: T },
    Gelu { x: Var },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    Reshape { x: Var },
    Permute { x: Var, axes: Vec<usize> },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Roll { x: Var, axis: usize, shift: usize },
    Take { x: Var, indices: Vec<usize> },
    Sum { x: Var },
    Mean { x: Var },
    MseLoss { a: Var, b: Var },
    Custom { inputs: Vec<Var>, rule: Box<dyn CustomBackward<T>> },
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Rc<Vec<T>>,
    op: Op<T>,
    requires_grad: bool,
    finite: bool,
    grad: Option<Vec<T>>,
}

/// Ordered record of executed operations.
///
/// Every record only refers to earlier records, so the node order is a
/// topological order and backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    /// Copies a recorded value out as a standalone tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.to_vec()).expect("tape values are well formed")
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.node(v).grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.grad = None);
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, inputs: &[Var]) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        let requires_grad = inputs.iter().any(|v| self.node(*v).requires_grad);
        let finite = if cfg!(debug_assertions) {
            let out_finite = value.iter().all(|x| x.is_finite());
            let in_finite = inputs.iter().all(|v| self.node(*v).finite);
            debug_assert!(
                out_finite || !in_finite,
                "non-finite output from finite inputs in {op:?}",
            );
            out_finite
        } else {
            true
        };
        self.nodes.push(Node {
            shape,
            value: Rc::new(value),
            op,
            requires_grad,
            finite,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_leaf(&mut self, shape: Vec<usize>, value: Vec<T>, requires_grad: bool) -> Var {
        let finite = !cfg!(debug_assertions) || value.iter().all(|x| x.is_finite());
        self.nodes.push(Node {
            shape,
            value: Rc::new(value),
            op: Op::Leaf,
            requires_grad,
            finite,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a tensor as a leaf; it receives gradients iff it requires them.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push_leaf(t.shape().to_vec(), t.data().to_vec(), t.requires_grad())
    }

    /// Records a value that never receives gradients.
    pub fn constant(&mut self, shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Var> {
        let shape = shape.into();
        if numel(&shape) != data.len() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(self.push_leaf(shape, data, false))
    }

    // ---------------------------------------------------------------- matmul

    /// `a[.., M, K] · b[.., K, N]`. Batch extents must agree, or one operand
    /// must be a plain matrix shared across the other's batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a[.., M, K] · b[.., N, K]ᵀ` without materializing the transpose.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let geo = MatmulGeometry::new(self.shape(a), self.shape(b), trans_b)?;
        let mut out = vec![T::zero(); numel(&geo.out_shape)];
        {
            let av = self.value(a);
            let bv = self.value(b);
            geo.forward(av, bv, &mut out);
        }
        let shape = geo.out_shape.clone();
        Ok(self.push(shape, out, Op::MatMul { a, b, trans_b }, &[a, b]))
    }

    // ------------------------------------------------------------ elementwise

    fn suffix_check(&self, op: &'static str, a: Var, b: Var) -> Result<usize> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(mismatch(op, sa, sb));
        }
        Ok(numel(sb))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<(Vec<usize>, Vec<T>)> {
        let inner = self.suffix_check(name, a, b)?;
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(av.len());
        for chunk in av.chunks_exact(inner) {
            out.extend(chunk.iter().zip(bv.iter()).map(|(&x, &y)| f(x, y)));
        }
        Ok((self.shape(a).to_vec(), out))
    }

    /// `a + b`, with `b` broadcast over the leading axes of `a` when its shape
    /// is a suffix of `a`'s.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, out) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(shape, out, Op::Add { a, b }, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, out) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(shape, out, Op::Sub { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, out) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(shape, out, Op::Mul { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).iter().map(|&v| v * factor).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Scale { x, factor }, &[x])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| kernels::gelu(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Gelu { x }, &[x])
    }

    // ------------------------------------------------------- normalizations

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis { axis, shape });
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let xv = self.value(x);
        let mut out = vec![T::zero(); xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).map(|j| xv[at(j)]).fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for j in 0..len {
                    let e = (xv[at(j)] - max).exp();
                    out[at(j)] = e;
                    sum += e;
                }
                for j in 0..len {
                    out[at(j)] = out[at(j)] / sum;
                }
            }
        }
        Ok(self.push(shape, out, Op::Softmax { x, axis }, &[x]))
    }

    /// Normalizes over the last axis, then applies `gamma * x̂ + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().ok_or_else(|| TensorError::Invalid("layer_norm on a scalar".into()))?;
        for p in [gamma, beta] {
            if self.shape(p) != [d] {
                return Err(mismatch("layer_norm", &shape, self.shape(p)));
            }
        }
        if eps <= T::zero() {
            return Err(TensorError::Invalid("layer_norm eps must be positive".into()));
        }
        let xv = self.value(x);
        let (g, bt) = (self.value(gamma), self.value(beta));
        let dn = T::from_usize(d).expect("extent fits in T");
        let rows = xv.len() / d;
        let mut xhat = vec![T::zero(); xv.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = g[j] * h + bt[j];
            }
        }
        Ok(self.push(shape, out, Op::LayerNorm { x, gamma, beta, xhat, rstd }, &[x, gamma, beta]))
    }

    // ---------------------------------------------------------- data movement

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        if numel(&shape) != self.value(x).len() {
            return Err(mismatch("reshape", self.shape(x), &shape));
        }
        let value = Rc::clone(&self.node(x).value);
        let requires_grad = self.node(x).requires_grad;
        let finite = self.node(x).finite;
        self.nodes.push(Node {
            shape,
            value,
            op: Op::Reshape { x },
            requires_grad,
            finite,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Reorders axes so that output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(TensorError::Invalid(format!(
                "permutation {axes:?} invalid for shape {shape:?}"
            )));
        }
        let out = kernels::permute(self.value(x), &shape, axes);
        let out_shape = axes.iter().map(|&a| shape[a]).collect();
        Ok(self.push(out_shape, out, Op::Permute { x, axes: axes.to_vec() }, &[x]))
    }

    pub fn transpose(&mut self, x: Var, i: usize, j: usize) -> Result<Var> {
        let rank = self.shape(x).len();
        if i >= rank || j >= rank {
            return Err(TensorError::InvalidAxis {
                axis: i.max(j),
                shape: self.shape(x).to_vec(),
            });
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(i, j);
        self.permute(x, &axes)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| TensorError::Invalid("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::InvalidAxis { axis, shape: base });
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            if s.len() != base.len()
                || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(mismatch("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let len = self.shape(*v)[axis];
                out.extend_from_slice(&self.value(*v)[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(shape, out, Op::Concat { inputs: inputs.to_vec(), axis }, inputs))
    }

    /// Elements `start..start + len` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis { axis, shape });
        }
        if len == 0 || start + len > shape[axis] {
            return Err(TensorError::Invalid(format!(
                "slice {start}..{} out of range for extent {}",
                start + len,
                shape[axis]
            )));
        }
        let (outer, full, inner) = split_axis(&shape, axis);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let off = (o * full + start) * inner;
            out.extend_from_slice(&xv[off..off + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        Ok(self.push(out_shape, out, Op::Slice { x, axis, start }, &[x]))
    }

    /// Cyclic rotation along `axis`: element `i` moves to `(i - shift) mod n`.
    pub fn roll(&mut self, x: Var, axis: usize, shift: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis { axis, shape });
        }
        let shift = shift % shape[axis];
        let out = kernels::roll(self.value(x), &shape, axis, shift);
        Ok(self.push(shape, out, Op::Roll { x, axis, shift }, &[x]))
    }

    /// Gathers along the last axis: `out[.., k] = x[.., indices[k]]`.
    pub fn take(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| TensorError::Invalid("take on a scalar".into()))?;
        if indices.is_empty() || indices.iter().any(|&i| i >= n) {
            return Err(TensorError::Invalid(format!("take indices out of range for extent {n}")));
        }
        let out: Vec<T> = self
            .value(x)
            .chunks_exact(n)
            .flat_map(|row| indices.iter().map(move |&i| row[i]))
            .collect();
        let mut out_shape = shape;
        *out_shape.last_mut().expect("nonempty") = indices.len();
        Ok(self.push(out_shape, out, Op::Take { x, indices: indices.to_vec() }, &[x]))
    }

    // ------------------------------------------------------------ reductions

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        self.push(Vec::new(), vec![s], Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let n = T::from_usize(v.len()).expect("length fits in T");
        let s = v.iter().copied().sum::<T>() / n;
        self.push(Vec::new(), vec![s], Op::Mean { x }, &[x])
    }

    /// Mean of squared differences over all elements; shapes must be equal.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(mismatch("mse_loss", self.shape(pred), self.shape(target)));
        }
        let (p, t) = (self.value(pred), self.value(target));
        let n = T::from_usize(p.len()).expect("length fits in T");
        let s = p.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / n;
        Ok(self.push(Vec::new(), vec![s], Op::MseLoss { a: pred, b: target }, &[pred, target]))
    }

    /// Records an externally computed operation together with its backward rule.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        shape: impl Into<Vec<usize>>,
        value: Vec<T>,
        rule: Box<dyn CustomBackward<T>>,
    ) -> Result<Var> {
        let shape = shape.into();
        if numel(&shape) != value.len() {
            return Err(TensorError::DataLength { shape, len: value.len() });
        }
        Ok(self.push(shape, value, Op::Custom { inputs: inputs.to_vec(), rule }, inputs))
    }

    // -------------------------------------------------------------- backward

    /// Back-propagates from a scalar `loss`, adding into leaf gradients.
    /// Calling it again without [`Tape::zero_grad`] accumulates.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if numel(self.shape(loss)) != 1 {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[id].op {
                let node = &mut self.nodes[id];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.backward_node(id, g, &mut grads);
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, id: usize, g: Vec<T>, grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        let mut send = |v: Var, contrib: Vec<T>| {
            if !self.wants(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, &b)| *a += b),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => unreachable!("leaves handled by caller"),
            Op::MatMul { a, b, trans_b } => {
                let geo = MatmulGeometry::new(self.shape(*a), self.shape(*b), *trans_b)
                    .expect("validated at forward");
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    send(*a, geo.grad_lhs(&g, bv));
                }
                if self.wants(*b) {
                    send(*b, geo.grad_rhs(&g, av));
                }
            }
            Op::Add { a, b } => {
                if self.wants(*b) {
                    let inner = self.value(*b).len();
                    send(*b, kernels::reduce_to_suffix(&g, inner));
                }
                send(*a, g);
            }
            Op::Sub { a, b } => {
                if self.wants(*b) {
                    let inner = self.value(*b).len();
                    let neg: Vec<T> = kernels::reduce_to_suffix(&g, inner).into_iter().map(|v| -v).collect();
                    send(*b, neg);
                }
                send(*a, g);
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let inner = bv.len();
                if self.wants(*b) {
                    let mut db = vec![T::zero(); inner];
                    for (gc, ac) in g.chunks_exact(inner).zip(av.chunks_exact(inner)) {
                        for j in 0..inner {
                            db[j] += gc[j] * ac[j];
                        }
                    }
                    send(*b, db);
                }
                if self.wants(*a) {
                    let da = g.chunks_exact(inner).flat_map(|gc| gc.iter().zip(bv).map(|(&x, &y)| x * y)).collect();
                    send(*a, da);
                }
            }
            Op::Scale { x, factor } => send(*x, g.iter().map(|&v| v * *factor).collect()),
            Op::Gelu { x } => {
                let xv = self.value(*x);
                send(*x, g.iter().zip(xv.iter()).map(|(&gv, &xv)| gv * kernels::gelu_grad(xv)).collect());
            }
            Op::Softmax { x, axis } => {
                let y = &node.value;
                let (outer, len, inner) = split_axis(&node.shape, *axis);
                let mut dx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + i;
                        let dot: T = (0..len).map(|j| y[at(j)] * g[at(j)]).sum();
                        for j in 0..len {
                            dx[at(j)] = y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                send(*x, dx);
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let d = *node.shape.last().expect("rank >= 1");
                let gv = self.value(*gamma);
                let dn = T::from_usize(d).expect("extent fits in T");
                if self.wants(*gamma) {
                    let mut dg = vec![T::zero(); d];
                    for (gc, hc) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            dg[j] += gc[j] * hc[j];
                        }
                    }
                    send(*gamma, dg);
                }
                if self.wants(*beta) {
                    send(*beta, kernels::reduce_to_suffix(&g, d));
                }
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); g.len()];
                    for (r, &rs) in rstd.iter().enumerate() {
                        let gc = &g[r * d..(r + 1) * d];
                        let hc = &xhat[r * d..(r + 1) * d];
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..d {
                            let dh = gc[j] * gv[j];
                            m1 += dh;
                            m2 += dh * hc[j];
                        }
                        m1 = m1 / dn;
                        m2 = m2 / dn;
                        for j in 0..d {
                            dx[r * d + j] = rs * (gc[j] * gv[j] - m1 - hc[j] * m2);
                        }
                    }
                    send(*x, dx);
                }
            }
            Op::Reshape { x } => send(*x, g),
            Op::Permute { x, axes } => {
                let inv = kernels::inverse_axes(axes);
                send(*x, kernels::permute(&g, &node.shape, &inv));
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(&node.shape, *axis);
                let mut offset = 0;
                for v in inputs {
                    let len = self.shape(*v)[*axis];
                    if self.wants(*v) {
                        let mut part = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let s = (o * total + offset) * inner;
                            part.extend_from_slice(&g[s..s + len * inner]);
                        }
                        send(*v, part);
                    }
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let in_shape = self.shape(*x);
                let (outer, full, inner) = split_axis(in_shape, *axis);
                let len = node.shape[*axis];
                let mut dx = vec![T::zero(); numel(in_shape)];
                for o in 0..outer {
                    let dst = (o * full + start) * inner;
                    dx[dst..dst + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                send(*x, dx);
            }
            Op::Roll { x, axis, shift } => {
                let n = node.shape[*axis];
                send(*x, kernels::roll(&g, &node.shape, *axis, (n - shift) % n));
            }
            Op::Take { x, indices } => {
                let in_shape = self.shape(*x);
                let n = *in_shape.last().expect("rank >= 1");
                let mut dx = vec![T::zero(); numel(in_shape)];
                for (dst, src) in dx.chunks_exact_mut(n).zip(g.chunks_exact(indices.len())) {
                    for (k, &i) in indices.iter().enumerate() {
                        dst[i] += src[k];
                    }
                }
                send(*x, dx);
            }
            Op::Sum { x } => {
                let n = self.value(*x).len();
                send(*x, vec![g[0]; n]);
            }
            Op::Mean { x } => {
                let n = self.value(*x).len();
                let v = g[0] / T::from_usize(n).expect("length fits in T");
                send(*x, vec![v; n]);
            }
            Op::MseLoss { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let k = T::from_f64_lossy(2.0) * g[0] / T::from_usize(av.len()).expect("length fits in T");
                let da: Vec<T> = av.iter().zip(bv).map(|(&p, &t)| k * (p - t)).collect();
                if self.wants(*b) {
                    send(*b, da.iter().map(|&v| -v).collect());
                }
                send(*a, da);
            }
            Op::Custom { inputs, rule } => {
                let parts = rule.backward(&g);
                assert_eq!(parts.len(), inputs.len(), "custom backward arity");
                for (v, part) in inputs.iter().zip(parts) {
                    assert_eq!(part.len(), self.value(*v).len(), "custom backward gradient length");
                    send(*v, part);
                }
            }
        }
    }
}

/// Batch layout of a (possibly batched) matrix product.
struct MatmulGeometry {
    m: usize,
    k: usize,
    n: usize,
    batch: usize,
    /// Left operand is a single matrix shared over the batch.
    lhs_shared: bool,
    /// Right operand is a single matrix shared over the batch.
    rhs_shared: bool,
    trans_b: bool,
    out_shape: Vec<usize>,
}

impl MatmulGeometry {
    fn new(sa: &[usize], sb: &[usize], trans_b: bool) -> Result<Self> {
        let op = if trans_b { "matmul_t" } else { "matmul" };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch(op, sa, sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = if trans_b {
            (sb[sb.len() - 1], sb[sb.len() - 2])
        } else {
            (sb[sb.len() - 2], sb[sb.len() - 1])
        };
        if k != kb {
            return Err(mismatch(op, sa, sb));
        }
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let (batch_dims, lhs_shared, rhs_shared) = if ba == bb {
            (ba, false, false)
        } else if bb.is_empty() {
            (ba, false, true)
        } else if ba.is_empty() {
            (bb, true, false)
        } else {
            return Err(mismatch(op, sa, sb));
        };
        let mut out_shape = batch_dims.to_vec();
        out_shape.extend([m, n]);
        Ok(Self {
            m,
            k,
            n,
            batch: numel(batch_dims),
            lhs_shared,
            rhs_shared,
            trans_b,
            out_shape,
        })
    }

    fn rhs_strides(&self) -> (isize, isize) {
        if self.trans_b {
            (1, self.k as isize)
        } else {
            ROW_MAJOR(self.n)
        }
    }

    fn forward<T: Scalar>(&self, a: &[T], b: &[T], out: &mut [T]) {
        let (m, k, n) = (self.m, self.k, self.n);
        if self.rhs_shared {
            kernels::gemm(self.batch * m, k, n, a, ROW_MAJOR(k), b, self.rhs_strides(), out, false);
            return;
        }
        for i in 0..self.batch {
            let ao = if self.lhs_shared { 0 } else { i * m * k };
            kernels::gemm(
                m,
                k,
                n,
                &a[ao..ao + m * k],
                ROW_MAJOR(k),
                &b[i * k * n..(i + 1) * k * n],
                self.rhs_strides(),
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
    }

    /// dA = dC · Bᵀ
    fn grad_lhs<T: Scalar>(&self, g: &[T], b: &[T]) -> Vec<T> {
        let (m, k, n) = (self.m, self.k, self.n);
        // Bᵀ viewed as an [n, k] operand.
        let bt = if self.trans_b { ROW_MAJOR(k) } else { (1, n as isize) };
        if self.rhs_shared {
            let mut da = vec![T::zero(); self.batch * m * k];
            kernels::gemm(self.batch * m, n, k, g, ROW_MAJOR(n), b, bt, &mut da, false);
            return da;
        }
        let mut da = vec![T::zero(); if self.lhs_shared { m * k } else { self.batch * m * k }];
        for i in 0..self.batch {
            let ao = if self.lhs_shared { 0 } else { i * m * k };
            kernels::gemm(
                m,
                n,
                k,
                &g[i * m * n..(i + 1) * m * n],
                ROW_MAJOR(n),
                &b[i * k * n..(i + 1) * k * n],
                bt,
                &mut da[ao..ao + m * k],
                self.lhs_shared,
            );
        }
        da
    }

    /// dB = Aᵀ · dC, or dCᵀ · A for the transposed form.
    fn grad_rhs<T: Scalar>(&self, g: &[T], a: &[T]) -> Vec<T> {
        let (m, k, n) = (self.m, self.k, self.n);
        if self.rhs_shared {
            let rows = self.batch * m;
            let mut db = vec![T::zero(); k * n];
            if self.trans_b {
                kernels::gemm(n, rows, k, g, (1, n as isize), a, ROW_MAJOR(k), &mut db, false);
            } else {
                kernels::gemm(k, rows, n, a, (1, k as isize), g, ROW_MAJOR(n), &mut db, false);
            }
            return db;
        }
        let mut db = vec![T::zero(); self.batch * k * n];
        for i in 0..self.batch {
            let ao = if self.lhs_shared { 0 } else { i * m * k };
            let av = &a[ao..ao + m * k];
            let gv = &g[i * m * n..(i + 1) * m * n];
            let dst = &mut db[i * k * n..(i + 1) * k * n];
            if self.trans_b {
                kernels::gemm(n, m, k, gv, (1, n as isize), av, ROW_MAJOR(k), dst, false);
            } else {
                kernels::gemm(k, m, n, av, (1, k as isize), gv, ROW_MAJOR(n), dst, false);
            }
        }
        db
    }
}
