use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{broadcast_shape, for_each_broadcast, reduce_to, Tensor};
use super::AutodiffError;
use crate::math::{self, gemm};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sentinel for [`Tape::gather`]: the output element is a constant zero.
pub const GATHER_ZERO: usize = usize::MAX;

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        weight: Var,
        stride: usize,
        cols: Vec<f64>,
    },
    Upsample2x(Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    Gather {
        input: Var,
        index: Vec<usize>,
    },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Abs(Var),
    Sqrt(Var),
    Sin(Var),
    Cos(Var),
    Sum(Var),
    SumAxis {
        input: Var,
        axis: usize,
    },
    MaxLast {
        input: Var,
        argmax: Vec<usize>,
    },
    CyclicXcorr {
        a: Var,
        b: Var,
        h: usize,
        w: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// Every primitive appends a node; [`Tape::backward`] walks the nodes in
/// reverse. A tape is single-threaded; build one tape per independent
/// computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    nonsmooth: usize,
}

/// Gradients of a scalar output with respect to the leaves of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn same_rank_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(), AutodiffError> {
    if axis >= shape.len() {
        return Err(AutodiffError::InvalidArgument {
            op,
            reason: "axis out of range",
        });
    }
    Ok(())
}

/// Splits a shape around `axis` into (outer, len, inner) extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of times a non-differentiable point (a `max` tie, `relu` or
    /// `abs` at zero) was hit while recording.
    pub fn nonsmooth_events(&self) -> usize {
        self.nonsmooth
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A constant input; never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A differentiable input.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, AutodiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(&sa, &sb).ok_or(AutodiffError::ShapeMismatch {
            op,
            lhs: sa.clone(),
            rhs: sb.clone(),
        })?;
        let mut out = Tensor::zeros(&out_shape);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        if sa == sb {
            for ((o, &x), &y) in out.data_mut().iter_mut().zip(da).zip(db) {
                *o = f(x, y);
            }
        } else {
            let o = out.data_mut();
            for_each_broadcast(&sa, &sb, &out_shape, |k, ia, ib| o[k] = f(da[ia], db[ib]));
        }
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let v = self.binary("add", a, b, |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let v = self.binary("sub", a, b, |x, y| x - y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let v = self.binary("mul", a, b, |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Mul(a, b), ng))
    }

    /// Elementwise division; every denominator must be nonzero.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        if self.value(b).data().iter().any(|&d| d == 0.0) {
            return Err(AutodiffError::InvalidArgument {
                op: "div",
                reason: "zero denominator",
            });
        }
        let v = self.binary("div", a, b, |x, y| x / y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Div(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        let ng = self.needs(a);
        self.push(v, Op::AddScalar(a), ng)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = Tensor::zeros(&[m, n]);
        gemm(
            m,
            k,
            n,
            1.0,
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            0.0,
            out.data_mut(),
            (n, 1),
        );
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// 2-D convolution (cross-correlation), NCHW input, `[out, in, k, k]`
    /// weights with odd `k`, zero padding `k / 2`.
    pub fn conv2d(&mut self, input: Var, weight: Var, stride: usize) -> Result<Var, AutodiffError> {
        let (sx, sw) = (self.shape(input).to_vec(), self.shape(weight).to_vec());
        let bad = || AutodiffError::ShapeMismatch {
            op: "conv2d",
            lhs: sx.clone(),
            rhs: sw.clone(),
        };
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || sw[2] != sw[3] || sw[2] % 2 == 0 {
            return Err(bad());
        }
        if stride == 0 {
            return Err(AutodiffError::InvalidArgument {
                op: "conv2d",
                reason: "stride must be positive",
            });
        }
        let (b, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let (o, k) = (sw[0], sw[2]);
        let pad = k / 2;
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let kc = c * k * k;
        let hw_o = ho * wo;
        let x = self.value(input).data();
        let mut cols = vec![0.0; b * hw_o * kc];
        for bi in 0..b {
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = &mut cols[((bi * ho + oy) * wo + ox) * kc..][..kc];
                    for ci in 0..c {
                        let plane = &x[(bi * c + ci) * h * w..][..h * w];
                        for ky in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                row[(ci * k + ky) * k + kx] = plane[iy as usize * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        let mut out = Tensor::zeros(&[b, o, ho, wo]);
        let wd = self.value(weight).data();
        for bi in 0..b {
            gemm(
                hw_o,
                kc,
                o,
                1.0,
                &cols[bi * hw_o * kc..],
                (kc, 1),
                wd,
                (1, kc),
                0.0,
                &mut out.data_mut()[bi * o * hw_o..],
                (1, hw_o),
            );
        }
        let ng = self.needs(input) || self.needs(weight);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                stride,
                cols,
            },
            ng,
        ))
    }

    /// Nearest-neighbour 2x up-sampling of an NCHW tensor.
    pub fn upsample2x(&mut self, input: Var) -> Result<Var, AutodiffError> {
        let s = self.shape(input).to_vec();
        if s.len() != 4 {
            return Err(AutodiffError::ShapeMismatch {
                op: "upsample2x",
                lhs: s,
                rhs: Vec::new(),
            });
        }
        let (h, w) = (s[2], s[3]);
        let mut out = Tensor::zeros(&[s[0], s[1], 2 * h, 2 * w]);
        let x = self.value(input).data();
        let o = out.data_mut();
        for p in 0..s[0] * s[1] {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    o[(p * 2 * h + y) * 2 * w + xx] = x[(p * h + y / 2) * w + xx / 2];
                }
            }
        }
        let ng = self.needs(input);
        Ok(self.push(out, Op::Upsample2x(input), ng))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        let first = inputs.first().ok_or(AutodiffError::InvalidArgument {
            op: "concat",
            reason: "no inputs",
        })?;
        let base = self.shape(*first).to_vec();
        same_rank_axis("concat", &base, axis)?;
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Tensor::zeros(&shape);
        let mut offset = 0;
        for &v in inputs {
            let len = self.shape(v)[axis];
            let src = self.nodes[v.0].value.data();
            let dst = out.data_mut();
            for o in 0..outer {
                dst[(o * total + offset) * inner..][..len * inner]
                    .copy_from_slice(&src[o * len * inner..][..len * inner]);
            }
            offset += len;
        }
        let ng = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            ng,
        ))
    }

    pub fn slice(&mut self, input: Var, axis: usize, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let s = self.shape(input).to_vec();
        same_rank_axis("slice", &s, axis)?;
        if start + len > s[axis] {
            return Err(AutodiffError::InvalidArgument {
                op: "slice",
                reason: "range exceeds axis length",
            });
        }
        let (outer, full, inner) = split_axis(&s, axis);
        let mut shape = s.clone();
        shape[axis] = len;
        let mut out = Tensor::zeros(&shape);
        let src = self.value(input).data();
        let dst = out.data_mut();
        for o in 0..outer {
            dst[o * len * inner..][..len * inner].copy_from_slice(&src[(o * full + start) * inner..][..len * inner]);
        }
        let ng = self.needs(input);
        Ok(self.push(out, Op::Slice { input, axis, start }, ng))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let s = self.shape(input);
        if s.iter().product::<usize>() != shape.iter().product::<usize>() {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                lhs: s.to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let v = self.value(input).clone().reshaped(shape);
        let ng = self.needs(input);
        Ok(self.push(v, Op::Reshape(input), ng))
    }

    /// Gathers along the last axis: `out[.., i] = input[.., index[i]]`, or
    /// zero where `index[i] == GATHER_ZERO`.
    pub fn gather(&mut self, input: Var, index: Vec<usize>) -> Result<Var, AutodiffError> {
        let s = self.shape(input).to_vec();
        let last = *s.last().ok_or(AutodiffError::InvalidArgument {
            op: "gather",
            reason: "scalar input",
        })?;
        if index.iter().any(|&i| i != GATHER_ZERO && i >= last) {
            return Err(AutodiffError::InvalidArgument {
                op: "gather",
                reason: "index out of range",
            });
        }
        let outer = self.value(input).len() / last.max(1);
        let mut shape = s.clone();
        *shape.last_mut().unwrap() = index.len();
        let mut out = Tensor::zeros(&shape);
        let src = self.value(input).data();
        let dst = out.data_mut();
        let n = index.len();
        for o in 0..outer {
            for (i, &j) in index.iter().enumerate() {
                if j != GATHER_ZERO {
                    dst[o * n + i] = src[o * last + j];
                }
            }
        }
        let ng = self.needs(input);
        Ok(self.push(out, Op::Gather { input, index }, ng))
    }

    fn unary(&mut self, input: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(input).map(f);
        let ng = self.needs(input);
        self.push(v, op, ng)
    }

    fn count_zero_kinks(&mut self, input: Var) {
        if self.value(input).data().iter().any(|&x| x == 0.0) {
            self.nonsmooth += 1;
        }
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, math::sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, math::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.count_zero_kinks(x);
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, math::softplus, Op::Softplus(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.count_zero_kinks(x);
        self.unary(x, math::fabs, Op::Abs(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var, AutodiffError> {
        if self.value(x).data().iter().any(|&v| v < 0.0) {
            return Err(AutodiffError::InvalidArgument {
                op: "sqrt",
                reason: "negative input",
            });
        }
        Ok(self.unary(x, math::sqrt, Op::Sqrt(x)))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, math::sin, Op::Sin(x))
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, math::cos, Op::Cos(x))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// Sum along `axis`, keeping it with length 1.
    pub fn sum_axis(&mut self, input: Var, axis: usize) -> Result<Var, AutodiffError> {
        let s = self.shape(input).to_vec();
        same_rank_axis("sum_axis", &s, axis)?;
        let (outer, len, inner) = split_axis(&s, axis);
        let mut shape = s.clone();
        shape[axis] = 1;
        let mut out = Tensor::zeros(&shape);
        let src = self.value(input).data();
        let dst = out.data_mut();
        for o in 0..outer {
            for l in 0..len {
                for i in 0..inner {
                    dst[o * inner + i] += src[(o * len + l) * inner + i];
                }
            }
        }
        let ng = self.needs(input);
        Ok(self.push(out, Op::SumAxis { input, axis }, ng))
    }

    /// Maximum over the last axis (kept with length 1). Records the winning
    /// index; exact ties count as non-smooth events.
    pub fn max_last(&mut self, input: Var) -> Result<Var, AutodiffError> {
        let s = self.shape(input).to_vec();
        let last = match s.last() {
            Some(&l) if l > 0 => l,
            _ => {
                return Err(AutodiffError::InvalidArgument {
                    op: "max_last",
                    reason: "empty last axis",
                })
            }
        };
        let outer = self.value(input).len() / last;
        let mut shape = s.clone();
        *shape.last_mut().unwrap() = 1;
        let mut out = Tensor::zeros(&shape);
        let mut argmax = Vec::with_capacity(outer);
        let mut ties = 0;
        let src = self.value(input).data();
        for o in 0..outer {
            let row = &src[o * last..][..last];
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            let m = row[best];
            let tol = 1e-12 * m.abs().max(1.0);
            if row.iter().enumerate().any(|(i, &v)| i != best && (m - v).abs() <= tol) {
                ties += 1;
            }
            out.data_mut()[o] = m;
            argmax.push(best);
        }
        self.nonsmooth += ties;
        let ng = self.needs(input);
        Ok(self.push(out, Op::MaxLast { input, argmax }, ng))
    }

    /// Cyclic 2-D cross-correlation of two `[batch, h * w]` tensors:
    /// `out[s] = sum_p a[p] * b[p - s]` with indices taken modulo the grid.
    pub fn cyclic_xcorr(&mut self, a: Var, b: Var, h: usize, w: usize) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb || sa.len() != 2 || sa[1] != h * w {
            return Err(AutodiffError::ShapeMismatch {
                op: "cyclic_xcorr",
                lhs: sa,
                rhs: sb,
            });
        }
        let batch = sa[0];
        let mut out = Tensor::zeros(&sa);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let dst = out.data_mut();
        for bi in 0..batch {
            let ai = &da[bi * h * w..][..h * w];
            let bimg = &db[bi * h * w..][..h * w];
            let oi = &mut dst[bi * h * w..][..h * w];
            for sy in 0..h {
                for y in 0..h {
                    let ra = &ai[y * w..][..w];
                    let rb = &bimg[((y + h - sy) % h) * w..][..w];
                    let orow = &mut oi[sy * w..][..w];
                    for (sx, o) in orow.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for x in sx..w {
                            acc += ra[x] * rb[x - sx];
                        }
                        for x in 0..sx {
                            acc += ra[x] * rb[x + w - sx];
                        }
                        *o += acc;
                    }
                }
            }
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::CyclicXcorr { a, b, h, w }, ng))
    }

    /// Reverse pass from a one-element output.
    pub fn backward(&self, output: Var) -> Result<Gradients, AutodiffError> {
        let out_val = self.value(output);
        if out_val.len() != 1 {
            return Err(AutodiffError::NotScalar {
                shape: out_val.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::filled(out_val.shape(), 1.0));
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&t),
            slot => *slot = Some(t),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, reduce_to(g, self.shape(*a)));
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, reduce_to(g, self.shape(*b)));
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, reduce_to(g, self.shape(*a)));
                }
                if self.needs(*b) {
                    let r = reduce_to(g, self.shape(*b)).map(|v| -v);
                    self.accumulate(grads, *b, r);
                }
            }
            Op::Mul(a, b) | Op::Div(a, b) => {
                let is_div = matches!(node.op, Op::Div(..));
                let (va, vb) = (self.value(*a), self.value(*b));
                let (sa, sb) = (va.shape().to_vec(), vb.shape().to_vec());
                let (xa, xb, gd) = (va.data(), vb.data(), g.data());
                let mut ga = self.needs(*a).then(|| Tensor::zeros(&sa));
                let mut gb = self.needs(*b).then(|| Tensor::zeros(&sb));
                {
                    let mut pa = ga.as_mut().map(|t| t.data_mut());
                    let mut pb = gb.as_mut().map(|t| t.data_mut());
                    for_each_broadcast(&sa, &sb, y.shape(), |k, ia, ib| {
                        if is_div {
                            if let Some(p) = pa.as_deref_mut() {
                                p[ia] += gd[k] / xb[ib];
                            }
                            if let Some(p) = pb.as_deref_mut() {
                                p[ib] -= gd[k] * xa[ia] / (xb[ib] * xb[ib]);
                            }
                        } else {
                            if let Some(p) = pa.as_deref_mut() {
                                p[ia] += gd[k] * xb[ib];
                            }
                            if let Some(p) = pb.as_deref_mut() {
                                p[ib] += gd[k] * xa[ia];
                            }
                        }
                    });
                }
                if let Some(t) = ga {
                    self.accumulate(grads, *a, t);
                }
                if let Some(t) = gb {
                    self.accumulate(grads, *b, t);
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, g.map(|v| v * c));
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.needs(*a) {
                    let mut ga = Tensor::zeros(&[m, k]);
                    gemm(m, n, k, 1.0, g.data(), (n, 1), self.value(*b).data(), (1, n), 0.0, ga.data_mut(), (k, 1));
                    self.accumulate(grads, *a, ga);
                }
                if self.needs(*b) {
                    let mut gb = Tensor::zeros(&[k, n]);
                    gemm(k, m, n, 1.0, self.value(*a).data(), (1, k), g.data(), (n, 1), 0.0, gb.data_mut(), (n, 1));
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Conv2d {
                input,
                weight,
                stride,
                cols,
            } => self.conv2d_backward(*input, *weight, *stride, cols, g, grads),
            Op::Upsample2x(a) => {
                let s = self.shape(*a);
                let (h, w) = (s[2], s[3]);
                let mut ga = Tensor::zeros(s);
                let gd = g.data();
                let dst = ga.data_mut();
                for p in 0..s[0] * s[1] {
                    for yy in 0..2 * h {
                        for xx in 0..2 * w {
                            dst[(p * h + yy / 2) * w + xx / 2] += gd[(p * 2 * h + yy) * 2 * w + xx];
                        }
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(y.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let s = self.shape(v).to_vec();
                    let len = s[*axis];
                    if self.needs(v) {
                        let mut gv = Tensor::zeros(&s);
                        for o in 0..outer {
                            gv.data_mut()[o * len * inner..][..len * inner]
                                .copy_from_slice(&g.data()[(o * total + offset) * inner..][..len * inner]);
                        }
                        self.accumulate(grads, v, gv);
                    }
                    offset += len;
                }
            }
            Op::Slice { input, axis, start } => {
                let s = self.shape(*input).to_vec();
                let (outer, full, inner) = split_axis(&s, *axis);
                let len = y.shape()[*axis];
                let mut gi = Tensor::zeros(&s);
                for o in 0..outer {
                    gi.data_mut()[(o * full + start) * inner..][..len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..][..len * inner]);
                }
                self.accumulate(grads, *input, gi);
            }
            Op::Reshape(a) => {
                let s = self.shape(*a).to_vec();
                self.accumulate(grads, *a, g.clone().reshaped(&s));
            }
            Op::Gather { input, index } => {
                let s = self.shape(*input).to_vec();
                let last = *s.last().unwrap();
                let n = index.len();
                let mut gi = Tensor::zeros(&s);
                let outer = gi.len() / last.max(1);
                let dst = gi.data_mut();
                for o in 0..outer {
                    for (i, &j) in index.iter().enumerate() {
                        if j != GATHER_ZERO {
                            dst[o * last + j] += g.data()[o * n + i];
                        }
                    }
                }
                self.accumulate(grads, *input, gi);
            }
            Op::Sigmoid(a) => self.elementwise_back(grads, *a, g, y, |_, yv| yv * (1.0 - yv)),
            Op::Tanh(a) => self.elementwise_back(grads, *a, g, y, |_, yv| 1.0 - yv * yv),
            Op::Relu(a) => self.elementwise_back(grads, *a, g, y, |x, _| if x > 0.0 { 1.0 } else { 0.0 }),
            Op::Softplus(a) => self.elementwise_back(grads, *a, g, y, |x, _| math::sigmoid(x)),
            Op::Abs(a) => self.elementwise_back(grads, *a, g, y, |x, _| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            Op::Sqrt(a) => self.elementwise_back(grads, *a, g, y, |_, yv| 0.5 / yv),
            Op::Sin(a) => self.elementwise_back(grads, *a, g, y, |x, _| math::cos(x)),
            Op::Cos(a) => self.elementwise_back(grads, *a, g, y, |x, _| -math::sin(x)),
            Op::Sum(a) => {
                let t = Tensor::filled(self.shape(*a), g.item());
                self.accumulate(grads, *a, t);
            }
            Op::SumAxis { input, axis } => {
                let s = self.shape(*input).to_vec();
                let (outer, len, inner) = split_axis(&s, *axis);
                let mut gi = Tensor::zeros(&s);
                let dst = gi.data_mut();
                for o in 0..outer {
                    for l in 0..len {
                        for i in 0..inner {
                            dst[(o * len + l) * inner + i] = g.data()[o * inner + i];
                        }
                    }
                }
                self.accumulate(grads, *input, gi);
            }
            Op::MaxLast { input, argmax } => {
                let s = self.shape(*input).to_vec();
                let last = *s.last().unwrap();
                let mut gi = Tensor::zeros(&s);
                for (o, &j) in argmax.iter().enumerate() {
                    gi.data_mut()[o * last + j] = g.data()[o];
                }
                self.accumulate(grads, *input, gi);
            }
            Op::CyclicXcorr { a, b, h, w } => self.xcorr_backward(*a, *b, *h, *w, g, grads),
        }
    }

    fn elementwise_back(
        &self,
        grads: &mut [Option<Tensor>],
        a: Var,
        g: &Tensor,
        y: &Tensor,
        d: impl Fn(f64, f64) -> f64,
    ) {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.shape());
        for (((o, &gv), &xv), &yv) in out.data_mut().iter_mut().zip(g.data()).zip(x.data()).zip(y.data()) {
            *o = gv * d(xv, yv);
        }
        self.accumulate(grads, a, out);
    }

    fn conv2d_backward(
        &self,
        input: Var,
        weight: Var,
        stride: usize,
        cols: &[f64],
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let sx = self.shape(input).to_vec();
        let sw = self.shape(weight).to_vec();
        let (b, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let (o, k) = (sw[0], sw[2]);
        let pad = k / 2;
        let (ho, wo) = (g.shape()[2], g.shape()[3]);
        let hw_o = ho * wo;
        let kc = c * k * k;
        let gd = g.data();
        if self.needs(weight) {
            let mut gw = Tensor::zeros(&sw);
            for bi in 0..b {
                gemm(
                    o,
                    hw_o,
                    kc,
                    1.0,
                    &gd[bi * o * hw_o..],
                    (hw_o, 1),
                    &cols[bi * hw_o * kc..],
                    (kc, 1),
                    1.0,
                    gw.data_mut(),
                    (kc, 1),
                );
            }
            self.accumulate(grads, weight, gw);
        }
        if self.needs(input) {
            let wd = self.value(weight).data();
            let mut dcols = vec![0.0; hw_o * kc];
            let mut gx = Tensor::zeros(&sx);
            for bi in 0..b {
                gemm(hw_o, o, kc, 1.0, &gd[bi * o * hw_o..], (1, hw_o), wd, (kc, 1), 0.0, &mut dcols, (kc, 1));
                let dst = gx.data_mut();
                for oy in 0..ho {
                    for ox in 0..wo {
                        let row = &dcols[(oy * wo + ox) * kc..][..kc];
                        for ci in 0..c {
                            let base = (bi * c + ci) * h * w;
                            for ky in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..k {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    dst[base + iy as usize * w + ix as usize] += row[(ci * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                }
            }
            self.accumulate(grads, input, gx);
        }
    }

    fn xcorr_backward(&self, a: Var, b: Var, h: usize, w: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let shape = self.shape(a).to_vec();
        let batch = shape[0];
        let (da, db, gd) = (self.value(a).data(), self.value(b).data(), g.data());
        let n = h * w;
        if self.needs(a) {
            // ga[p] = sum_s g[s] * b[p - s]
            let mut ga = Tensor::zeros(&shape);
            for bi in 0..batch {
                let (gi, bimg) = (&gd[bi * n..][..n], &db[bi * n..][..n]);
                let out = &mut ga.data_mut()[bi * n..][..n];
                for sy in 0..h {
                    for y in 0..h {
                        let rb = &bimg[((y + h - sy) % h) * w..][..w];
                        let rg = &gi[sy * w..][..w];
                        let orow = &mut out[y * w..][..w];
                        for (sx, &gv) in rg.iter().enumerate() {
                            if gv == 0.0 {
                                continue;
                            }
                            for x in sx..w {
                                orow[x] += gv * rb[x - sx];
                            }
                            for x in 0..sx {
                                orow[x] += gv * rb[x + w - sx];
                            }
                        }
                    }
                }
            }
            self.accumulate(grads, a, ga);
        }
        if self.needs(b) {
            // gb[q] = sum_s g[s] * a[q + s]
            let mut gb = Tensor::zeros(&shape);
            for bi in 0..batch {
                let (gi, aimg) = (&gd[bi * n..][..n], &da[bi * n..][..n]);
                let out = &mut gb.data_mut()[bi * n..][..n];
                for sy in 0..h {
                    for y in 0..h {
                        let ra = &aimg[((y + sy) % h) * w..][..w];
                        let rg = &gi[sy * w..][..w];
                        let orow = &mut out[y * w..][..w];
                        for (sx, &gv) in rg.iter().enumerate() {
                            if gv == 0.0 {
                                continue;
                            }
                            for x in 0..w - sx {
                                orow[x] += gv * ra[x + sx];
                            }
                            for x in w - sx..w {
                                orow[x] += gv * ra[x + sx - w];
                            }
                        }
                    }
                }
            }
            self.accumulate(grads, b, gb);
        }
    }
}
