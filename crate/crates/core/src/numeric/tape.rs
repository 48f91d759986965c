//! Reverse-mode differentiation over whole tensors.
//!
//! Every operation appends a node holding its output value. Nodes are
//! only ever appended, so node order is already a topological order and
//! the backward sweep is a single reverse scan.

use crate::error::{Error, Result};

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use super::{softmax_in_place, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    BatchMatMul {
        a: usize,
        b: usize,
        transpose_b: bool,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, T),
    Relu(usize),
    Softmax(usize),
    Normalize { input: usize, inv_std: Vec<T> },
    Reshape(usize),
    ConcatLast(Vec<usize>),
    MeanAxis1(usize),
    SelectAxis1(usize, usize),
    Sum(usize),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Record of primitive tensor operations for gradient replay.
///
/// A tape is single-threaded and lives for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<Var>,
}

/// Gradients of a scalar loss with respect to the tape's parameters, in
/// registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, param_slot: usize) -> &Tensor<T> {
        &self.grads[param_slot]
    }

    pub fn as_slice(&self) -> &[Tensor<T>] {
        &self.grads
    }

    pub fn into_vec(self) -> Vec<Tensor<T>> {
        self.grads
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf; its gradient is reported by [`Tape::gradient`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        let v = self.push(value, Op::Leaf);
        self.params.push(v);
        v
    }

    /// A leaf that receives no reported gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Contract(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    /// `[m,k] · [k,n] -> [m,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Contract(format!("matmul: {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul(a.0, b.0)))
    }

    /// Batched product: `[B,m,k] · [B,k,n]`, or `[B,m,k] · [B,n,k]ᵀ` when
    /// `transpose_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ok = sa.len() == 3
            && sb.len() == 3
            && sa[0] == sb[0]
            && if transpose_b { sa[2] == sb[2] } else { sa[2] == sb[1] };
        if !ok {
            return Err(Error::Contract(format!(
                "batch_matmul: {sa:?} x {sb:?} (transpose_b={transpose_b})"
            )));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let n = if transpose_b { sb[1] } else { sb[2] };
        let mut out = vec![T::zero(); batch * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            let ab = &ad[i * m * k..(i + 1) * m * k];
            let bb = &bd[i * k * n..(i + 1) * k * n];
            let cb = &mut out[i * m * n..(i + 1) * m * n];
            if transpose_b {
                gemm_nt_acc(ab, bb, cb, m, k, n);
            } else {
                gemm_acc(ab, bb, cb, m, k, n);
            }
        }
        let value = Tensor::new(vec![batch, m, n], out)?;
        Ok(self.push(
            value,
            Op::BatchMatMul {
                a: a.0,
                b: b.0,
                transpose_b,
            },
        ))
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a.0, b.0))
    }

    fn row_broadcast(&mut self, a: Var, row: Var, name: &str) -> Result<usize> {
        let w = self.value(a).last_dim();
        let sr = self.shape(row);
        if sr.len() != 1 || sr[0] != w {
            return Err(Error::Contract(format!(
                "{name}: row vector {sr:?} does not match width {w}"
            )));
        }
        Ok(w)
    }

    /// Adds a length-`w` vector to every innermost row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let w = self.row_broadcast(a, bias, "add_row")?;
        let (va, vb) = (self.value(a), self.value(bias));
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(w) {
            for (x, &b) in row.iter_mut().zip(vb.data()) {
                *x += b;
            }
        }
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::AddRow(a.0, bias.0)))
    }

    /// Multiplies every innermost row elementwise by a length-`w` vector.
    pub fn mul_row(&mut self, a: Var, gain: Var) -> Result<Var> {
        let w = self.row_broadcast(a, gain, "mul_row")?;
        let (va, vg) = (self.value(a), self.value(gain));
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(w) {
            for (x, &g) in row.iter_mut().zip(vg.data()) {
                *x *= g;
            }
        }
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::MulRow(a.0, gain.0)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a.0, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(value, Op::Relu(a.0))
    }

    /// Softmax over the innermost axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let w = va.last_dim();
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(w) {
            softmax_in_place(row);
        }
        let value = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Softmax(a.0))
    }

    /// Zero-mean, unit-variance normalization of every innermost row
    /// (population variance plus `eps`).
    pub fn normalize_rows(&mut self, a: Var, eps: T) -> Var {
        let va = self.value(a);
        let w = va.last_dim();
        let wn = T::from_usize_lossy(w);
        let mut data = va.data().to_vec();
        let mut inv_std = Vec::with_capacity(data.len() / w.max(1));
        for row in data.chunks_mut(w) {
            let mean = row.iter().copied().sum::<T>() / wn;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / wn;
            let s = T::one() / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * s;
            }
            inv_std.push(s);
        }
        let value = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Normalize { input: a.0, inv_std })
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a.0)))
    }

    /// Concatenates 2-D tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols: no inputs".into()))?;
        let rows = self.shape(*first)[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != rows {
                return Err(Error::Contract(format!("concat_cols: part shape {s:?}")));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new(vec![rows, total], out)?;
        Ok(self.push(value, Op::ConcatLast(parts.iter().map(|p| p.0).collect())))
    }

    /// `[B,S,d] -> [B,d]` by averaging over the middle axis.
    pub fn mean_axis1(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 || s[1] == 0 {
            return Err(Error::Contract(format!("mean_axis1: shape {s:?}")));
        }
        let (b, steps, d) = (s[0], s[1], s[2]);
        let inv = T::one() / T::from_usize_lossy(steps);
        let src = self.value(a).data();
        let mut out = vec![T::zero(); b * d];
        for i in 0..b {
            let o = &mut out[i * d..(i + 1) * d];
            for t in 0..steps {
                let row = &src[(i * steps + t) * d..(i * steps + t + 1) * d];
                for (x, &y) in o.iter_mut().zip(row) {
                    *x += y;
                }
            }
            for x in o.iter_mut() {
                *x *= inv;
            }
        }
        let value = Tensor::new(vec![b, d], out)?;
        Ok(self.push(value, Op::MeanAxis1(a.0)))
    }

    /// `[B,S,d] -> [B,d]` taking position `index` of the middle axis.
    pub fn select_axis1(&mut self, a: Var, index: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 || index >= s[1] {
            return Err(Error::Contract(format!("select_axis1: shape {s:?}, index {index}")));
        }
        let (b, steps, d) = (s[0], s[1], s[2]);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(b * d);
        for i in 0..b {
            let at = (i * steps + index) * d;
            out.extend_from_slice(&src[at..at + d]);
        }
        let value = Tensor::new(vec![b, d], out)?;
        Ok(self.push(value, Op::SelectAxis1(a.0, index)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(a.0))
    }

    /// Reverse sweep from a scalar `loss`. Parameters that do not feed the
    /// loss receive zero gradients. The tape itself is left untouched, so
    /// the sweep can be replayed.
    pub fn gradient(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "gradient needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        let out = self
            .params
            .iter()
            .map(|p| {
                grads
                    .get(p.0)
                    .and_then(Option::clone)
                    .unwrap_or_else(|| Tensor::zeros(self.value(*p).shape()))
            })
            .collect();
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let val = |j: usize| &self.nodes[j].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (val(*a).shape(), val(*b).shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let mut da = vec![T::zero(); m * k];
                gemm_nt_acc(g.data(), val(*b).data(), &mut da, m, n, k);
                accumulate(grads, *a, sa, da);
                let mut db = vec![T::zero(); k * n];
                gemm_tn_acc(val(*a).data(), g.data(), &mut db, k, m, n);
                accumulate(grads, *b, sb, db);
            }
            Op::BatchMatMul { a, b, transpose_b } => {
                let (sa, sb) = (val(*a).shape(), val(*b).shape());
                let (batch, m, k) = (sa[0], sa[1], sa[2]);
                let n = if *transpose_b { sb[1] } else { sb[2] };
                let (ad, bd, gd) = (val(*a).data(), val(*b).data(), g.data());
                let mut da = vec![T::zero(); batch * m * k];
                let mut db = vec![T::zero(); batch * k * n];
                for i in 0..batch {
                    let ab = &ad[i * m * k..(i + 1) * m * k];
                    let bb = &bd[i * k * n..(i + 1) * k * n];
                    let gb = &gd[i * m * n..(i + 1) * m * n];
                    let dab = &mut da[i * m * k..(i + 1) * m * k];
                    let dbb = &mut db[i * k * n..(i + 1) * k * n];
                    if *transpose_b {
                        // C = A Bᵀ: dA = dC B, dB = dCᵀ A
                        gemm_acc(gb, bb, dab, m, n, k);
                        gemm_tn_acc(gb, ab, dbb, n, m, k);
                    } else {
                        // C = A B: dA = dC Bᵀ, dB = Aᵀ dC
                        gemm_nt_acc(gb, bb, dab, m, n, k);
                        gemm_tn_acc(ab, gb, dbb, k, m, n);
                    }
                }
                accumulate(grads, *a, sa, da);
                accumulate(grads, *b, sb, db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *b, g.shape(), g.data().to_vec());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *b, g.shape(), g.data().iter().map(|&x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a).data(), val(*b).data());
                let da = g.data().iter().zip(vb).map(|(&gi, &y)| gi * y).collect();
                let db = g.data().iter().zip(va).map(|(&gi, &x)| gi * x).collect();
                accumulate(grads, *a, g.shape(), da);
                accumulate(grads, *b, g.shape(), db);
            }
            Op::AddRow(a, bias) => {
                let w = g.last_dim();
                let mut db = vec![T::zero(); w];
                for row in g.data().chunks(w) {
                    for (acc, &x) in db.iter_mut().zip(row) {
                        *acc += x;
                    }
                }
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *bias, &[w], db);
            }
            Op::MulRow(a, gain) => {
                let w = g.last_dim();
                let (va, vg) = (val(*a).data(), val(*gain).data());
                let mut da = Vec::with_capacity(g.len());
                let mut dgain = vec![T::zero(); w];
                for (grow, arow) in g.data().chunks(w).zip(va.chunks(w)) {
                    for j in 0..w {
                        da.push(grow[j] * vg[j]);
                        dgain[j] += grow[j] * arow[j];
                    }
                }
                accumulate(grads, *a, g.shape(), da);
                accumulate(grads, *gain, &[w], dgain);
            }
            Op::Scale(a, c) => {
                accumulate(grads, *a, g.shape(), g.data().iter().map(|&x| x * *c).collect());
            }
            Op::Relu(a) => {
                let va = val(*a).data();
                let da = g
                    .data()
                    .iter()
                    .zip(va)
                    .map(|(&gi, &x)| if x > T::zero() { gi } else { T::zero() })
                    .collect();
                accumulate(grads, *a, g.shape(), da);
            }
            Op::Softmax(a) => {
                let w = g.last_dim();
                let y = node.value.data();
                let mut da = Vec::with_capacity(g.len());
                for (grow, yrow) in g.data().chunks(w).zip(y.chunks(w)) {
                    let dot: T = grow.iter().zip(yrow).map(|(&gi, &yi)| gi * yi).sum();
                    da.extend(grow.iter().zip(yrow).map(|(&gi, &yi)| yi * (gi - dot)));
                }
                accumulate(grads, *a, g.shape(), da);
            }
            Op::Normalize { input, inv_std } => {
                let w = g.last_dim();
                let wn = T::from_usize_lossy(w);
                let y = node.value.data();
                let mut da = Vec::with_capacity(g.len());
                for ((grow, yrow), &s) in g.data().chunks(w).zip(y.chunks(w)).zip(inv_std) {
                    let mean_g = grow.iter().copied().sum::<T>() / wn;
                    let mean_gy = grow.iter().zip(yrow).map(|(&gi, &yi)| gi * yi).sum::<T>() / wn;
                    da.extend(
                        grow.iter()
                            .zip(yrow)
                            .map(|(&gi, &yi)| s * (gi - mean_g - yi * mean_gy)),
                    );
                }
                accumulate(grads, *input, g.shape(), da);
            }
            Op::Reshape(a) => {
                accumulate(grads, *a, val(*a).shape(), g.data().to_vec());
            }
            Op::ConcatLast(parts) => {
                let rows = g.shape()[0];
                let total = g.last_dim();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).shape()[1];
                    let mut dp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        let start = r * total + offset;
                        dp.extend_from_slice(&g.data()[start..start + w]);
                    }
                    accumulate(grads, p, val(p).shape(), dp);
                    offset += w;
                }
            }
            Op::MeanAxis1(a) => {
                let s = val(*a).shape();
                let (b, steps, d) = (s[0], s[1], s[2]);
                let inv = T::one() / T::from_usize_lossy(steps);
                let mut da = Vec::with_capacity(b * steps * d);
                for i in 0..b {
                    let grow = &g.data()[i * d..(i + 1) * d];
                    for _ in 0..steps {
                        da.extend(grow.iter().map(|&x| x * inv));
                    }
                }
                accumulate(grads, *a, s, da);
            }
            Op::SelectAxis1(a, index) => {
                let s = val(*a).shape();
                let (b, steps, d) = (s[0], s[1], s[2]);
                let mut da = vec![T::zero(); b * steps * d];
                for i in 0..b {
                    let at = (i * steps + index) * d;
                    da[at..at + d].copy_from_slice(&g.data()[i * d..(i + 1) * d]);
                }
                accumulate(grads, *a, s, da);
            }
            Op::Sum(a) => {
                let s = val(*a).shape();
                accumulate(grads, *a, s, vec![g.item(); val(*a).len()]);
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], at: usize, shape: &[usize], data: Vec<T>) {
    let contrib = Tensor::new(shape.to_vec(), data).expect("gradient shape matches value");
    match &mut grads[at] {
        Some(existing) => existing.add_assign(&contrib),
        slot @ None => *slot = Some(contrib),
    }
}
