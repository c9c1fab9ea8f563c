use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Float, Result, Tensor, TensorError};

/// Index of a parameter tensor inside a parameter store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    MatVec { w: Var, x: Var, m: usize, k: usize },
    Conv1d { s: Var, w: Var, b: Var, width: usize, len: usize },
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    MaxRows { x: Var, argmax: Vec<usize> },
    Softmax(Var),
    Concat(Vec<Var>),
    HCat { a: Var, b: Var, rows: usize, wa: usize, wb: usize },
    Gather { table: Var, ids: Vec<usize>, pad: Option<usize> },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Slice { x: Var, start: usize },
    Dot(Var, Var),
    Reshape(Var),
    Sum(Var),
    SumSquares(Var),
    Sqrt(Var),
    Nll { probs: Var, label: usize, clamped: bool },
}

#[derive(Debug)]
struct Node<'p, T: Clone> {
    shape: Vec<usize>,
    value: Cow<'p, [T]>,
    op: Op<T>,
    needs_grad: bool,
}

/// Per-pass record of executed operations.
///
/// Nodes are appended in execution order, so inputs always precede the ops
/// that consume them and a single reverse sweep visits each op once.
/// Parameters are borrowed, never copied.
#[derive(Debug)]
pub struct Tape<'p, T: Float> {
    nodes: Vec<Node<'p, T>>,
    track_branches: bool,
    signature: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl<'p, T: Float> Default for Tape<'p, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Float> Tape<'p, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            track_branches: false,
            signature: FNV_OFFSET,
        }
    }

    /// A tape that fingerprints every discrete branch it takes (relu masks,
    /// argmax positions, log clamping). Two passes with equal fingerprints
    /// went through the same piecewise-smooth region.
    pub fn with_branch_tracking() -> Self {
        Self {
            track_branches: true,
            ..Self::new()
        }
    }

    pub fn branch_signature(&self) -> u64 {
        self.signature
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn mix(&mut self, word: u64) {
        if self.track_branches {
            for b in word.to_le_bytes() {
                self.signature ^= u64::from(b);
                self.signature = self.signature.wrapping_mul(FNV_PRIME);
            }
        }
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let node = &self.nodes[v.0];
        Tensor::new(node.shape.clone(), node.value.to_vec()).expect("tape values are valid")
    }

    fn push(
        &mut self,
        name: &'static str,
        shape: Vec<usize>,
        value: Vec<T>,
        op: Op<T>,
        inputs: &[Var],
    ) -> Result<Var> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        if value.iter().any(|x| !x.is_finite()) {
            return Err(TensorError::NonFinite { op: name });
        }
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            shape,
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a constant input.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        let shape = tensor.shape().to_vec();
        let value = tensor.data().to_vec();
        self.nodes.push(Node {
            shape,
            value: Cow::Owned(value),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant 1-D input.
    pub fn vector(&mut self, values: &[T]) -> Result<Var> {
        if values.is_empty() {
            return Err(TensorError::Empty { op: "vector" });
        }
        Ok(self.constant(Tensor::vector(values.to_vec())?))
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Var {
        self.constant(Tensor::zeros(shape))
    }

    /// Records a borrowed parameter. Gradients flow to it only when the
    /// tensor has `requires_grad` set.
    pub fn param(&mut self, id: ParamId, tensor: &'p Tensor<T>) -> Var {
        let needs_grad = tensor.requires_grad();
        self.nodes.push(Node {
            shape: tensor.shape().to_vec(),
            value: Cow::Borrowed(tensor.data()),
            op: if needs_grad { Op::Param(id) } else { Op::Leaf },
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(v) {
            &[r, c] => Ok((r, c)),
            s => Err(TensorError::Shape {
                op,
                left: s.to_vec(),
                right: vec![0, 0],
            }),
        }
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(TensorError::Shape {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == T::zero() {
                    continue;
                }
                for (o, &bpj) in orow.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o = *o + aip * bpj;
                }
            }
        }
        self.push("matmul", vec![m, n], out, Op::MatMul { a, b, m, k, n }, &[a, b])
    }

    /// `w[m×k] · x[k]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (m, k) = self.dims2(w, "matvec")?;
        if self.shape(x) != [k] {
            return Err(TensorError::Shape {
                op: "matvec",
                left: vec![m, k],
                right: self.shape(x).to_vec(),
            });
        }
        let (wv, xv) = (self.value(w), self.value(x));
        let out = (0..m)
            .map(|i| dot(&wv[i * k..(i + 1) * k], xv))
            .collect();
        self.push("matvec", vec![m], out, Op::MatVec { w, x, m, k }, &[w, x])
    }

    /// Bank of valid 1-D convolutions over the rows of `s[N×d]`.
    ///
    /// `w` is `[F × r·d]` (one flattened window filter per row) and `b` is `[F]`.
    /// Returns `[F × (N−r+1)]` with `out[f][j] = w[f]·flatten(s[j..j+r]) + b[f]`.
    pub fn conv1d(&mut self, s: Var, w: Var, b: Var) -> Result<Var> {
        let (n, d) = self.dims2(s, "conv1d")?;
        let (f, width) = self.dims2(w, "conv1d")?;
        if width == 0 || width % d != 0 {
            return Err(TensorError::Shape {
                op: "conv1d",
                left: vec![n, d],
                right: vec![f, width],
            });
        }
        if self.shape(b) != [f] {
            return Err(TensorError::Shape {
                op: "conv1d",
                left: vec![f, width],
                right: self.shape(b).to_vec(),
            });
        }
        let r = width / d;
        if r > n {
            return Err(TensorError::ReceptiveField { r, n });
        }
        let len = n - r + 1;
        let (sv, wv, bv) = (self.value(s), self.value(w), self.value(b));
        let mut out = Vec::with_capacity(f * len);
        for fi in 0..f {
            let filter = &wv[fi * width..(fi + 1) * width];
            for j in 0..len {
                out.push(dot(filter, &sv[j * d..j * d + width]) + bv[fi]);
            }
        }
        self.push(
            "conv1d",
            vec![f, len],
            out,
            Op::Conv1d { s, w, b, width, len },
            &[s, w, b],
        )
    }

    /// Single-filter valid convolution: `s[N×d]`, `w[r·d]`, scalar `b` → `[N−r+1]`.
    pub fn conv1d_valid(&mut self, s: Var, w: Var, b: Var) -> Result<Var> {
        let width = self.shape(w).iter().product();
        let w2 = self.reshape(w, vec![1, width])?;
        let b1 = self.reshape(b, vec![1])?;
        let c = self.conv1d(s, w2, b1)?;
        let len = self.shape(c)[1];
        self.reshape(c, vec![len])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out: Vec<T> = self.value(x).iter().map(|&v| v.max(T::zero())).collect();
        if self.track_branches {
            let bits: Vec<bool> = self.value(x).iter().map(|&v| v > T::zero()).collect();
            for chunk in bits.chunks(64) {
                let word = chunk
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, &b)| acc | (u64::from(b) << i));
                self.mix(word);
            }
        }
        let shape = self.shape(x).to_vec();
        self.push("relu", shape, out, Op::Relu(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        self.push("tanh", shape, out, Op::Tanh(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push("sigmoid", shape, out, Op::Sigmoid(x), &[x])
    }

    /// Row-wise maximum of `x[F×L]` → `[F]`. A 1-D input is treated as one row.
    /// Ties go to the lowest index.
    pub fn max_rows(&mut self, x: Var) -> Result<Var> {
        let (f, l) = match self.shape(x) {
            &[l] => (1, l),
            &[f, l] => (f, l),
            s => {
                return Err(TensorError::Shape {
                    op: "max_over_time",
                    left: s.to_vec(),
                    right: vec![0, 0],
                })
            }
        };
        if l == 0 {
            return Err(TensorError::Empty { op: "max_over_time" });
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(f);
        let mut argmax = Vec::with_capacity(f);
        for row in 0..f {
            let vals = &xv[row * l..(row + 1) * l];
            let mut best = 0;
            for (j, &v) in vals.iter().enumerate().skip(1) {
                if v > vals[best] {
                    best = j;
                }
            }
            out.push(vals[best]);
            argmax.push(row * l + best);
        }
        if self.track_branches {
            for &a in &argmax {
                self.mix(a as u64);
            }
        }
        self.push("max_over_time", vec![f], out, Op::MaxRows { x, argmax }, &[x])
    }

    /// Maximum of a 1-D feature map, as a one-element tensor.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).len() != 1 {
            return Err(TensorError::Shape {
                op: "max_over_time",
                left: self.shape(x).to_vec(),
                right: vec![0],
            });
        }
        self.max_rows(x)
    }

    /// Max-subtracted softmax of a 1-D tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).len() != 1 {
            return Err(TensorError::Shape {
                op: "softmax",
                left: self.shape(x).to_vec(),
                right: vec![0],
            });
        }
        let out = softmax(self.value(x));
        let shape = self.shape(x).to_vec();
        self.push("softmax", shape, out, Op::Softmax(x), &[x])
    }

    /// Order-preserving concatenation of flattened parts into one 1-D tensor.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::Empty { op: "concat" });
        }
        let out: Vec<T> = parts
            .iter()
            .flat_map(|p| self.value(*p).iter().copied())
            .collect();
        let len = out.len();
        self.push("concat", vec![len], out, Op::Concat(parts.to_vec()), parts)
    }

    /// Stacks equal-length 1-D parts into a `[n × d]` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows.first().ok_or(TensorError::Empty { op: "stack_rows" })?;
        let d = self.value(first).len();
        for &r in rows {
            if self.shape(r) != [d] {
                return Err(TensorError::Shape {
                    op: "stack_rows",
                    left: vec![d],
                    right: self.shape(r).to_vec(),
                });
            }
        }
        let flat = self.concat(rows)?;
        self.reshape(flat, vec![rows.len(), d])
    }

    /// Column-wise concatenation `[n×p] ⊕ [n×q]` → `[n×(p+q)]`.
    pub fn hcat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (rows, wa) = self.dims2(a, "hcat")?;
        let (rb, wb) = self.dims2(b, "hcat")?;
        if rows != rb {
            return Err(TensorError::Shape {
                op: "hcat",
                left: vec![rows, wa],
                right: vec![rb, wb],
            });
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(rows * (wa + wb));
        for i in 0..rows {
            out.extend_from_slice(&av[i * wa..(i + 1) * wa]);
            out.extend_from_slice(&bv[i * wb..(i + 1) * wb]);
        }
        self.push(
            "hcat",
            vec![rows, wa + wb],
            out,
            Op::HCat { a, b, rows, wa, wb },
            &[a, b],
        )
    }

    /// Row lookup `table[V×d]` at `ids` → `[n×d]`.
    ///
    /// Id 0 is the reserved padding row: it always yields zeros and never
    /// receives gradient. Repeated ids accumulate gradient on their row.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.gather(table, ids, Some(0))
    }

    /// Plain row lookup without a padding row.
    pub fn gather(&mut self, table: Var, ids: &[usize], pad: Option<usize>) -> Result<Var> {
        let (v, d) = self.dims2(table, "embedding_lookup")?;
        if ids.is_empty() {
            return Err(TensorError::Empty {
                op: "embedding_lookup",
            });
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(TensorError::Index {
                    op: "embedding_lookup",
                    index: id,
                    size: v,
                });
            }
            if Some(id) == pad {
                out.extend(std::iter::repeat_n(T::zero(), d));
            } else {
                out.extend_from_slice(&tv[id * d..(id + 1) * d]);
            }
        }
        self.push(
            "embedding_lookup",
            vec![ids.len(), d],
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
                pad,
            },
            &[table],
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        self.push("add", shape, out, Op::Add(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        self.push("mul", shape, out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let out = self.value(x).iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push("scale", shape, out, Op::Scale(x, c), &[x])
    }

    /// Contiguous sub-range `[start, start+len)` of a 1-D tensor.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.value(x).len();
        if self.shape(x).len() != 1 || start + len > n || len == 0 {
            return Err(TensorError::Index {
                op: "slice",
                index: start + len,
                size: n,
            });
        }
        let out = self.value(x)[start..start + len].to_vec();
        self.push("slice", vec![len], out, Op::Slice { x, start }, &[x])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a).len() != 1 {
            return Err(TensorError::Shape {
                op: "dot",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        self.same_shape(a, b, "dot")?;
        let out = vec![dot(self.value(a), self.value(b))];
        self.push("dot", vec![1], out, Op::Dot(a, b), &[a, b])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(TensorError::Shape {
                op: "reshape",
                left: self.shape(x).to_vec(),
                right: shape,
            });
        }
        let out = self.value(x).to_vec();
        self.push("reshape", shape, out, Op::Reshape(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = vec![self.value(x).iter().copied().sum()];
        self.push("sum", vec![1], out, Op::Sum(x), &[x])
    }

    /// `Σ x²` as a one-element tensor.
    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let out = vec![self.value(x).iter().map(|&v| v * v).sum()];
        self.push("sum_squares", vec![1], out, Op::SumSquares(x), &[x])
    }

    /// Square root of a non-negative scalar. The derivative at 0 is taken as 0.
    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if self.value(x).len() != 1 {
            return Err(TensorError::NotScalar(self.shape(x).to_vec()));
        }
        let out = vec![self.value(x)[0].max(T::zero()).sqrt()];
        self.push("sqrt", vec![1], out, Op::Sqrt(x), &[x])
    }

    /// `−ln(max(p[label], 1e-12))` for a probability vector.
    pub fn nll(&mut self, probs: Var, label: usize) -> Result<Var> {
        let n = self.value(probs).len();
        if label >= n {
            return Err(TensorError::Index {
                op: "nll",
                index: label,
                size: n,
            });
        }
        let p = self.value(probs)[label];
        let floor = T::of(1e-12);
        let clamped = p < floor;
        self.mix(u64::from(clamped));
        let out = vec![-(p.max(floor)).ln()];
        self.push("nll", vec![1], out, Op::Nll { probs, label, clamped }, &[probs])
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Returns the gradient of `loss` with respect to every parameter that
    /// was recorded with `requires_grad`. Deterministic for a fixed tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::NotScalar(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![T::one()]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate_dense(*id, &g),
                &Op::MatMul { a, b, m, k, n } => {
                    if self.nodes[a.0].needs_grad {
                        let bv = self.value(b);
                        let da = self.slot(&mut grads, a);
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                da[i * k + p] = da[i * k + p] + dot(grow, &bv[p * n..(p + 1) * n]);
                            }
                        }
                    }
                    if self.nodes[b.0].needs_grad {
                        let av = self.value(a);
                        let db = self.slot(&mut grads, b);
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let aip = av[i * k + p];
                                for (d, &gj) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *d = *d + aip * gj;
                                }
                            }
                        }
                    }
                }
                &Op::MatVec { w, x, m, k } => {
                    if self.nodes[w.0].needs_grad {
                        let xv = self.value(x);
                        let dw = self.slot(&mut grads, w);
                        for i in 0..m {
                            for (d, &xp) in dw[i * k..(i + 1) * k].iter_mut().zip(xv) {
                                *d = *d + g[i] * xp;
                            }
                        }
                    }
                    if self.nodes[x.0].needs_grad {
                        let wv = self.value(w);
                        let dx = self.slot(&mut grads, x);
                        for i in 0..m {
                            for (d, &wp) in dx.iter_mut().zip(&wv[i * k..(i + 1) * k]) {
                                *d = *d + g[i] * wp;
                            }
                        }
                    }
                }
                &Op::Conv1d { s, w, b, width, len } => {
                    let d = self.shape(s)[1];
                    let f = g.len() / len;
                    if self.nodes[w.0].needs_grad {
                        let sv = self.value(s);
                        let dw = self.slot(&mut grads, w);
                        for fi in 0..f {
                            let row = &mut dw[fi * width..(fi + 1) * width];
                            for j in 0..len {
                                let gj = g[fi * len + j];
                                for (dv, &sx) in row.iter_mut().zip(&sv[j * d..j * d + width]) {
                                    *dv = *dv + gj * sx;
                                }
                            }
                        }
                    }
                    if self.nodes[s.0].needs_grad {
                        let wv = self.value(w);
                        let ds = self.slot(&mut grads, s);
                        for fi in 0..f {
                            let filter = &wv[fi * width..(fi + 1) * width];
                            for j in 0..len {
                                let gj = g[fi * len + j];
                                for (dv, &wx) in ds[j * d..j * d + width].iter_mut().zip(filter) {
                                    *dv = *dv + gj * wx;
                                }
                            }
                        }
                    }
                    if self.nodes[b.0].needs_grad {
                        let db = self.slot(&mut grads, b);
                        for fi in 0..f {
                            db[fi] = db[fi] + g[fi * len..(fi + 1) * len].iter().copied().sum();
                        }
                    }
                }
                &Op::Relu(x) => {
                    let xv = self.value(x);
                    let dx = self.slot(&mut grads, x);
                    for ((d, &gi), &xi) in dx.iter_mut().zip(&g).zip(xv) {
                        if xi > T::zero() {
                            *d = *d + gi;
                        }
                    }
                }
                &Op::Tanh(x) => {
                    let y = &node.value;
                    let dx = self.slot(&mut grads, x);
                    for ((d, &gi), &yi) in dx.iter_mut().zip(&g).zip(y.iter()) {
                        *d = *d + gi * (T::one() - yi * yi);
                    }
                }
                &Op::Sigmoid(x) => {
                    let y = &node.value;
                    let dx = self.slot(&mut grads, x);
                    for ((d, &gi), &yi) in dx.iter_mut().zip(&g).zip(y.iter()) {
                        *d = *d + gi * yi * (T::one() - yi);
                    }
                }
                Op::MaxRows { x, argmax } => {
                    let dx = self.slot(&mut grads, *x);
                    for (&gi, &a) in g.iter().zip(argmax) {
                        dx[a] = dx[a] + gi;
                    }
                }
                &Op::Softmax(x) => {
                    let y = &node.value;
                    let inner: T = g.iter().zip(y.iter()).map(|(&gi, &yi)| gi * yi).sum();
                    let dx = self.slot(&mut grads, x);
                    for ((d, &gi), &yi) in dx.iter_mut().zip(&g).zip(y.iter()) {
                        *d = *d + yi * (gi - inner);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        if self.nodes[p.0].needs_grad {
                            let dp = self.slot(&mut grads, p);
                            for (d, &gi) in dp.iter_mut().zip(&g[offset..offset + n]) {
                                *d = *d + gi;
                            }
                        }
                        offset += n;
                    }
                }
                &Op::HCat { a, b, rows, wa, wb } => {
                    let w = wa + wb;
                    if self.nodes[a.0].needs_grad {
                        let da = self.slot(&mut grads, a);
                        for r in 0..rows {
                            for c in 0..wa {
                                da[r * wa + c] = da[r * wa + c] + g[r * w + c];
                            }
                        }
                    }
                    if self.nodes[b.0].needs_grad {
                        let db = self.slot(&mut grads, b);
                        for r in 0..rows {
                            for c in 0..wb {
                                db[r * wb + c] = db[r * wb + c] + g[r * w + wa + c];
                            }
                        }
                    }
                }
                Op::Gather { table, ids, pad } => {
                    let d = self.shape(*table)[1];
                    if let Op::Param(id) = self.nodes[table.0].op {
                        for (row, &tok) in ids.iter().enumerate() {
                            if Some(tok) != *pad {
                                out.accumulate_row(id, d, tok, &g[row * d..(row + 1) * d]);
                            }
                        }
                    } else {
                        let dt = self.slot(&mut grads, *table);
                        for (row, &tok) in ids.iter().enumerate() {
                            if Some(tok) == *pad {
                                continue;
                            }
                            for c in 0..d {
                                dt[tok * d + c] = dt[tok * d + c] + g[row * d + c];
                            }
                        }
                    }
                }
                &Op::Add(a, b) => {
                    for v in [a, b] {
                        if self.nodes[v.0].needs_grad {
                            let dv = self.slot(&mut grads, v);
                            for (d, &gi) in dv.iter_mut().zip(&g) {
                                *d = *d + gi;
                            }
                        }
                    }
                }
                &Op::Mul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let bv = self.value(b);
                        let da = self.slot(&mut grads, a);
                        for ((d, &gi), &bi) in da.iter_mut().zip(&g).zip(bv) {
                            *d = *d + gi * bi;
                        }
                    }
                    if self.nodes[b.0].needs_grad {
                        let av = self.value(a);
                        let db = self.slot(&mut grads, b);
                        for ((d, &gi), &ai) in db.iter_mut().zip(&g).zip(av) {
                            *d = *d + gi * ai;
                        }
                    }
                }
                &Op::Scale(x, c) => {
                    let dx = self.slot(&mut grads, x);
                    for (d, &gi) in dx.iter_mut().zip(&g) {
                        *d = *d + gi * c;
                    }
                }
                &Op::Slice { x, start } => {
                    let dx = self.slot(&mut grads, x);
                    for (d, &gi) in dx[start..start + g.len()].iter_mut().zip(&g) {
                        *d = *d + gi;
                    }
                }
                &Op::Dot(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let bv = self.value(b);
                        let da = self.slot(&mut grads, a);
                        for (d, &bi) in da.iter_mut().zip(bv) {
                            *d = *d + g[0] * bi;
                        }
                    }
                    if self.nodes[b.0].needs_grad {
                        let av = self.value(a);
                        let db = self.slot(&mut grads, b);
                        for (d, &ai) in db.iter_mut().zip(av) {
                            *d = *d + g[0] * ai;
                        }
                    }
                }
                &Op::Reshape(x) => {
                    let dx = self.slot(&mut grads, x);
                    for (d, &gi) in dx.iter_mut().zip(&g) {
                        *d = *d + gi;
                    }
                }
                &Op::Sum(x) => {
                    let dx = self.slot(&mut grads, x);
                    for d in dx.iter_mut() {
                        *d = *d + g[0];
                    }
                }
                &Op::SumSquares(x) => {
                    let xv = self.value(x);
                    let two = T::of(2.0);
                    let dx = self.slot(&mut grads, x);
                    for (d, &xi) in dx.iter_mut().zip(xv) {
                        *d = *d + two * xi * g[0];
                    }
                }
                &Op::Sqrt(x) => {
                    let y = node.value[0];
                    if y > T::zero() {
                        let dx = self.slot(&mut grads, x);
                        dx[0] = dx[0] + g[0] / (T::of(2.0) * y);
                    }
                }
                &Op::Nll { probs, label, clamped } => {
                    if !clamped {
                        let p = self.value(probs)[label];
                        let dp = self.slot(&mut grads, probs);
                        dp[label] = dp[label] - g[0] / p;
                    }
                }
            }
        }
        Ok(out)
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> &'g mut [T] {
        let n = self.nodes[v.0].value.len();
        grads[v.0].get_or_insert_with(|| vec![T::zero(); n])
    }
}

pub(crate) fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax<T: Float>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient of one parameter: dense, or sparse by row for embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamGrad<T> {
    Dense(Vec<T>),
    Rows {
        width: usize,
        rows: BTreeMap<usize, Vec<T>>,
    },
}

impl<T: Float> ParamGrad<T> {
    /// Materializes the gradient as a dense buffer of `len` values.
    pub fn to_dense(&self, len: usize) -> Vec<T> {
        match self {
            ParamGrad::Dense(g) => g.clone(),
            ParamGrad::Rows { width, rows } => {
                let mut out = vec![T::zero(); len];
                for (&r, vals) in rows {
                    out[r * width..(r + 1) * width].copy_from_slice(vals);
                }
                out
            }
        }
    }

    fn add_scaled(&mut self, other: &ParamGrad<T>, scale: T) {
        match (&mut *self, other) {
            (ParamGrad::Dense(a), ParamGrad::Dense(b)) => {
                for (x, &y) in a.iter_mut().zip(b) {
                    *x = *x + scale * y;
                }
            }
            (ParamGrad::Dense(a), ParamGrad::Rows { width, rows }) => {
                for (&r, vals) in rows {
                    for (x, &y) in a[r * width..(r + 1) * width].iter_mut().zip(vals) {
                        *x = *x + scale * y;
                    }
                }
            }
            (ParamGrad::Rows { .. }, ParamGrad::Dense(b)) => {
                let mut dense = self.to_dense(b.len());
                for (x, &y) in dense.iter_mut().zip(b) {
                    *x = *x + scale * y;
                }
                *self = ParamGrad::Dense(dense);
            }
            (ParamGrad::Rows { width, rows: a }, ParamGrad::Rows { rows: b, .. }) => {
                for (&r, vals) in b {
                    let row = a.entry(r).or_insert_with(|| vec![T::zero(); *width]);
                    for (x, &y) in row.iter_mut().zip(vals) {
                        *x = *x + scale * y;
                    }
                }
            }
        }
    }

    fn scaled(other: &ParamGrad<T>, scale: T) -> ParamGrad<T> {
        match other {
            ParamGrad::Dense(g) => ParamGrad::Dense(g.iter().map(|&x| x * scale).collect()),
            ParamGrad::Rows { width, rows } => ParamGrad::Rows {
                width: *width,
                rows: rows
                    .iter()
                    .map(|(&r, v)| (r, v.iter().map(|&x| x * scale).collect()))
                    .collect(),
            },
        }
    }
}

/// Parameter gradients produced by one or more backward sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    map: BTreeMap<ParamId, ParamGrad<T>>,
}

impl<T> Default for Gradients<T> {
    fn default() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&ParamGrad<T>> {
        self.map.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamGrad<T>)> {
        self.map.iter().map(|(&k, v)| (k, v))
    }

    pub fn accumulate_dense(&mut self, id: ParamId, g: &[T]) {
        self.add_scaled_entry(id, &ParamGrad::Dense(g.to_vec()), T::one());
    }

    pub fn accumulate_row(&mut self, id: ParamId, width: usize, row: usize, g: &[T]) {
        let mut rows = BTreeMap::new();
        rows.insert(row, g.to_vec());
        self.add_scaled_entry(id, &ParamGrad::Rows { width, rows }, T::one());
    }

    fn add_scaled_entry(&mut self, id: ParamId, g: &ParamGrad<T>, scale: T) {
        match self.map.get_mut(&id) {
            Some(existing) => existing.add_scaled(g, scale),
            None => {
                self.map.insert(id, ParamGrad::scaled(g, scale));
            }
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Gradients<T>, scale: T) {
        for (&id, g) in &other.map {
            self.add_scaled_entry(id, g, scale);
        }
    }

    /// Dense gradient of `id`, zeros if the parameter received none.
    pub fn dense(&self, id: ParamId, len: usize) -> Vec<T> {
        self.map
            .get(&id)
            .map(|g| g.to_dense(len))
            .unwrap_or_else(|| vec![T::zero(); len])
    }
}
