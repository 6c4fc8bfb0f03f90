//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records one forward computation as a topologically ordered list
//! of nodes; [`Tape::backward`] replays it in reverse, accumulating cotangents
//! into every ancestor of the loss. The tape is rebuilt for every forward pass
//! and is confined to a single thread.
//!
//! The operation set is exactly what the mask-and-aggregate pipeline needs:
//! 1-d convolutions (plain and stride-2 transposed), window-2 max pooling,
//! elementwise nonlinearities, a straight-through binarizer, matrix products,
//! reductions, and the three loss terms.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// Elementwise sum of two same-shape tensors.
    Add(Var, Var),
    /// Elementwise difference.
    Sub(Var, Var),
    /// Elementwise (Hadamard) product.
    Mul(Var, Var),
    /// Multiply by a compile-time constant scalar.
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    /// sigmoid((x + noise) / tau) in one node; the noise constant receives no
    /// gradient and need not be retained for the backward pass.
    NoisySigmoid { x: Var, inv_tau: f64 },
    /// Forward hard threshold at 0.5, backward identity.
    SteBinarize(Var),
    /// a[m,k] @ b[k,n]
    MatMul(Var, Var),
    /// x[rows,cols] + bias[cols], broadcast over rows (documented bias-add case).
    AddBias(Var, Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
    },
    ConvTr1d {
        x: Var,
        w: Var,
    },
    MaxPool1d {
        x: Var,
        argmax: Vec<u32>,
    },
    /// Concatenate two [batch, channels, t] tensors along the channel axis.
    ConcatChannels(Var, Var),
    /// Sum out one axis.
    SumAxis {
        x: Var,
        axis: usize,
    },
    SumAll(Var),
    Reshape(Var),
    /// z[b,c,m] = sum over t < valid_t of x[b,c,t] * m[b,c,m,t].
    MaskedAggregate {
        x: Var,
        m: Var,
        valid_t: usize,
    },
    /// Mean squared error against a constant target vector.
    MseLoss {
        pred: Var,
        target: Vec<f64>,
    },
    /// Sum of absolute values; subgradient 0 at 0.
    L1Sum(Var),
    /// ||X^T X - I||_F^2 for X: [p, k].
    OrthoPenalty(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradient tape for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Record an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated at `v` by the last [`Tape::backward`], if any.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Nodes the last backward pass never reached. Zero for a graph whose
    /// every node is an ancestor of the loss.
    pub fn unvisited(&self) -> usize {
        self.grads.iter().filter(|g| g.is_none()).count()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b).iter())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.shape(a), data).expect("same shape");
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b).iter())
            .map(|(x, y)| x - y)
            .collect();
        let t = Tensor::new(self.shape(a), data).expect("same shape");
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b).iter())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(self.shape(a), data).expect("same shape");
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = Tensor::new(
            self.shape(x),
            self.value(x).iter().map(|v| c * v).collect(),
        )
        .expect("same shape");
        self.push(t, Op::Scale(x, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = Tensor::new(
            self.shape(x),
            self.value(x).iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect(),
        )
        .expect("same shape");
        self.push(t, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = Tensor::new(
            self.shape(x),
            self.value(x).iter().map(|v| stable_sigmoid(*v)).collect(),
        )
        .expect("same shape");
        self.push(t, Op::Sigmoid(x))
    }

    /// sigmoid((x + noise) / tau) with a constant noise tensor.
    pub fn noisy_sigmoid(&mut self, x: Var, noise: Option<&Tensor>, tau: f64) -> Result<Var> {
        if let Some(n) = noise {
            if self.shape(x) != n.shape() {
                return Err(Error::shape(
                    "noisy_sigmoid",
                    format!("{:?} vs noise {:?}", self.shape(x), n.shape()),
                ));
            }
        }
        let inv_tau = 1.0 / tau;
        let data = match noise {
            Some(n) => self
                .value(x)
                .iter()
                .zip(n.iter())
                .map(|(v, g)| stable_sigmoid((v + g) * inv_tau))
                .collect(),
            None => self
                .value(x)
                .iter()
                .map(|v| stable_sigmoid(v * inv_tau))
                .collect(),
        };
        let t = Tensor::new(self.shape(x), data).expect("same shape");
        Ok(self.push(t, Op::NoisySigmoid { x, inv_tau }))
    }

    /// Hard 0/1 threshold at strictly greater than 0.5 in the forward pass;
    /// the backward pass hands the incoming gradient through unchanged.
    pub fn ste_binarize(&mut self, relaxed: Var) -> Var {
        let t = Tensor::new(
            self.shape(relaxed),
            self.value(relaxed)
                .iter()
                .map(|v| if *v > 0.5 { 1.0 } else { 0.0 })
                .collect(),
        )
        .expect("same shape");
        self.push(t, Op::SteBinarize(relaxed))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} @ {sb:?}")));
        }
        let (m, inner, n) = (sa[0], sa[1], sb[1]);
        let mut out = Tensor::zeros(&[m, n]);
        kernels::matmul(
            self.value(a).data(),
            m,
            inner,
            self.value(b).data(),
            n,
            out.data_mut(),
        );
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// x[rows, cols] + bias[cols] broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::shape("add_bias", format!("{sx:?} + {sb:?}")));
        }
        let (rows, cols) = (sx[0], sx[1]);
        let bv = self.value(bias).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for r in 0..rows {
            for (d, b) in data[r * cols..][..cols].iter_mut().zip(bv.iter()) {
                *d += b;
            }
        }
        let t = Tensor::new(&[rows, cols], data).expect("same shape");
        Ok(self.push(t, Op::AddBias(x, bias)))
    }

    /// Affine layer: x[rows, in] @ w[in, out] + bias[out].
    pub fn linear(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let prod = self.matmul(x, w)?;
        self.add_bias(prod, bias)
    }

    /// Same-padding cross-correlation. x: [b, cin, t], w: [cout, cin, k] with
    /// k odd, bias: [cout].
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 3 || sw.len() != 3 || sb.len() != 1 {
            return Err(Error::shape(
                "conv1d",
                format!("x {sx:?}, w {sw:?}, bias {sb:?}"),
            ));
        }
        let (batch, cin, t) = (sx[0], sx[1], sx[2]);
        let (cout, k) = (sw[0], sw[2]);
        if sw[1] != cin || sb[0] != cout {
            return Err(Error::shape(
                "conv1d",
                format!("x {sx:?}, w {sw:?}, bias {sb:?}"),
            ));
        }
        if k % 2 == 0 {
            return Err(Error::invalid("conv1d", format!("kernel size {k} must be odd")));
        }
        let mut out = Tensor::zeros(&[batch, cout, t]);
        kernels::conv1d_forward(
            self.value(x).data(),
            batch,
            cin,
            t,
            self.value(w).data(),
            cout,
            k,
            self.value(b).data(),
            out.data_mut(),
        );
        Ok(self.push(out, Op::Conv1d { x, w, b }))
    }

    /// Stride-2 transposed convolution that exactly doubles the time axis.
    /// x: [b, cin, t], w: [cin, cout, 2].
    pub fn conv1d_transposed(&mut self, x: Var, w: Var) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 3 || sw.len() != 3 || sw[0] != sx[1] || sw[2] != 2 {
            return Err(Error::shape(
                "conv1d_transposed",
                format!("x {sx:?}, w {sw:?} (kernel size must be 2)"),
            ));
        }
        let (batch, cin, tin) = (sx[0], sx[1], sx[2]);
        let cout = sw[1];
        let mut out = Tensor::zeros(&[batch, cout, 2 * tin]);
        kernels::conv1d_tr_forward(
            self.value(x).data(),
            batch,
            cin,
            tin,
            self.value(w).data(),
            cout,
            2,
            out.data_mut(),
        );
        Ok(self.push(out, Op::ConvTr1d { x, w }))
    }

    /// Window-2 max pooling along time; requires even t. Ties break toward
    /// the earlier index.
    pub fn maxpool1d(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 3 {
            return Err(Error::shape("maxpool1d", format!("x {sx:?}")));
        }
        let (batch, c, t) = (sx[0], sx[1], sx[2]);
        if t % 2 != 0 {
            return Err(Error::invalid("maxpool1d", format!("odd length {t}")));
        }
        let mut out = Tensor::zeros(&[batch, c, t / 2]);
        let mut argmax = vec![0u32; batch * c * (t / 2)];
        kernels::maxpool2_forward(self.value(x).data(), batch * c, t, out.data_mut(), &mut argmax);
        Ok(self.push(out, Op::MaxPool1d { x, argmax }))
    }

    /// Within-row winner indices of the last maxpool node.
    pub fn maxpool_argmax(&self, v: Var) -> Option<&[u32]> {
        match &self.nodes[v.0].op {
            Op::MaxPool1d { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return Err(Error::shape("concat_channels", format!("{sa:?} ++ {sb:?}")));
        }
        let (batch, ca, cb, t) = (sa[0], sa[1], sb[1], sa[2]);
        let mut data = Vec::with_capacity(batch * (ca + cb) * t);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            data.extend_from_slice(&da[i * ca * t..][..ca * t]);
            data.extend_from_slice(&db[i * cb * t..][..cb * t]);
        }
        let out = Tensor::new(&[batch, ca + cb, t], data).expect("sized");
        Ok(self.push(out, Op::ConcatChannels(a, b)))
    }

    /// Sum out the given axis.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() {
            return Err(Error::invalid(
                "sum_axis",
                format!("axis {axis} out of range for {sx:?}"),
            ));
        }
        let outer: usize = sx[..axis].iter().product();
        let mid = sx[axis];
        let inner: usize = sx[axis + 1..].iter().product();
        let mut out_shape: Vec<usize> = sx[..axis].to_vec();
        out_shape.extend_from_slice(&sx[axis + 1..]);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let mut data = vec![0.0; outer * inner];
        let xd = self.value(x).data();
        for o in 0..outer {
            for m in 0..mid {
                let src = &xd[(o * mid + m) * inner..][..inner];
                kernels::axpy(1.0, src, &mut data[o * inner..][..inner]);
            }
        }
        let out = Tensor::new(&out_shape, data).expect("sized");
        Ok(self.push(out, Op::SumAxis { x, axis }))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Masked sum over time: z[b,c,m] = sum_{t < valid_t} x[b,c,t] * m[b,c,m,t].
    /// Time steps at or beyond `valid_t` (zero padding) never contribute.
    pub fn masked_aggregate(&mut self, x: Var, m: Var, valid_t: usize) -> Result<Var> {
        let (sx, sm) = (self.shape(x), self.shape(m));
        if sx.len() != 3 || sm.len() != 4 || sm[0] != sx[0] || sm[1] != sx[1] || sm[3] != sx[2] {
            return Err(Error::shape(
                "masked_aggregate",
                format!("x {sx:?}, m {sm:?}"),
            ));
        }
        if valid_t > sx[2] {
            return Err(Error::invalid(
                "masked_aggregate",
                format!("valid_t {valid_t} exceeds t {}", sx[2]),
            ));
        }
        let (batch, c, t) = (sx[0], sx[1], sx[2]);
        let masks = sm[2];
        let (xd, md) = (self.value(x).data(), self.value(m).data());
        let mut data = vec![0.0; batch * c * masks];
        for b in 0..batch {
            for ch in 0..c {
                let x_row = &xd[(b * c + ch) * t..][..valid_t];
                for mi in 0..masks {
                    let m_row = &md[((b * c + ch) * masks + mi) * t..][..valid_t];
                    data[(b * c + ch) * masks + mi] = kernels::dot(x_row, m_row);
                }
            }
        }
        let out = Tensor::new(&[batch, c, masks], data).expect("sized");
        Ok(self.push(out, Op::MaskedAggregate { x, m, valid_t }))
    }

    /// Batch-mean squared error against a constant target.
    pub fn mse_loss(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let sp = self.shape(pred);
        let n: usize = sp.iter().product();
        if n != target.len() || n == 0 {
            return Err(Error::shape(
                "mse_loss",
                format!("pred {sp:?} vs target len {}", target.len()),
            ));
        }
        let mse = self
            .value(pred)
            .iter()
            .zip(target.iter())
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / n as f64;
        Ok(self.push(
            Tensor::scalar(mse),
            Op::MseLoss { pred, target: target.to_vec() },
        ))
    }

    /// Sum of absolute values (the l1 penalty); subgradient at 0 is 0.
    pub fn l1_sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).iter().map(|v| v.abs()).sum();
        self.push(Tensor::scalar(s), Op::L1Sum(x))
    }

    /// ||X^T X - I_k||_F^2 for X: [p, k].
    pub fn ortho_penalty(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 2 {
            return Err(Error::shape("ortho_penalty", format!("x {sx:?}")));
        }
        let (p, k) = (sx[0], sx[1]);
        let gram = gram_minus_identity(self.value(x).data(), p, k);
        let loss: f64 = gram.iter().map(|v| v * v).sum();
        Ok(self.push(Tensor::scalar(loss), Op::OrthoPenalty(x)))
    }

    /// Reverse sweep from a scalar loss. Populates gradients for every node
    /// the loss depends on.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);

        for idx in (0..self.nodes.len()).rev() {
            let (lo, hi) = self.grads.split_at_mut(idx);
            let Some(g) = hi[0].as_deref() else { continue };
            let node = &self.nodes[idx];
            let nodes = &self.nodes;

            // every parent index is < idx, so parent grads live in `lo`
            fn acc<'a>(lo: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut [f64] {
                let len = nodes[v.0].value.len();
                lo[v.0].get_or_insert_with(|| vec![0.0; len])
            }

            // temporarily remove two distinct accumulators so heavy kernels
            // can add into them without an extra copy
            fn take2(
                lo: &mut [Option<Vec<f64>>],
                nodes: &[Node],
                a: Var,
                b: Var,
            ) -> (Vec<f64>, Vec<f64>) {
                debug_assert_ne!(a.0, b.0);
                let ga = lo[a.0]
                    .take()
                    .unwrap_or_else(|| vec![0.0; nodes[a.0].value.len()]);
                let gb = lo[b.0]
                    .take()
                    .unwrap_or_else(|| vec![0.0; nodes[b.0].value.len()]);
                (ga, gb)
            }

            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    kernels::axpy(1.0, g, acc(lo, nodes, *a));
                    kernels::axpy(1.0, g, acc(lo, nodes, *b));
                }
                Op::Sub(a, b) => {
                    kernels::axpy(1.0, g, acc(lo, nodes, *a));
                    kernels::axpy(-1.0, g, acc(lo, nodes, *b));
                }
                Op::Mul(a, b) => {
                    let (da, db) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    {
                        let ga = acc(lo, nodes, *a);
                        for ((ga, g), b) in ga.iter_mut().zip(g.iter()).zip(db.iter()) {
                            *ga += g * b;
                        }
                    }
                    let gb = acc(lo, nodes, *b);
                    for ((gb, g), a) in gb.iter_mut().zip(g.iter()).zip(da.iter()) {
                        *gb += g * a;
                    }
                }
                Op::Scale(x, c) => {
                    kernels::axpy(*c, g, acc(lo, nodes, *x));
                }
                Op::Relu(x) => {
                    let dx = nodes[x.0].value.data();
                    let gx = acc(lo, nodes, *x);
                    for ((gx, g), x) in gx.iter_mut().zip(g.iter()).zip(dx.iter()) {
                        if *x > 0.0 {
                            *gx += g;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let out = node.value.data();
                    let gx = acc(lo, nodes, *x);
                    for ((gx, g), o) in gx.iter_mut().zip(g.iter()).zip(out.iter()) {
                        *gx += g * o * (1.0 - o);
                    }
                }
                Op::NoisySigmoid { x, inv_tau } => {
                    let out = node.value.data();
                    let gx = acc(lo, nodes, *x);
                    for ((gx, g), o) in gx.iter_mut().zip(g.iter()).zip(out.iter()) {
                        *gx += g * o * (1.0 - o) * inv_tau;
                    }
                }
                Op::SteBinarize(x) => {
                    // straight-through: gradient unchanged
                    kernels::axpy(1.0, g, acc(lo, nodes, *x));
                }
                Op::MatMul(a, b) => {
                    let (m, inner) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                    let n = nodes[b.0].value.shape()[1];
                    let (da, db) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    if a.0 == b.0 {
                        let mut ga = vec![0.0; da.len()];
                        let mut gb = vec![0.0; db.len()];
                        kernels::matmul_backward(da, m, inner, db, n, g, &mut ga, &mut gb);
                        let acc_a = acc(lo, nodes, *a);
                        kernels::axpy(1.0, &ga, acc_a);
                        kernels::axpy(1.0, &gb, acc_a);
                    } else {
                        let (mut ga, mut gb) = take2(lo, nodes, *a, *b);
                        kernels::matmul_backward(da, m, inner, db, n, g, &mut ga, &mut gb);
                        lo[a.0] = Some(ga);
                        lo[b.0] = Some(gb);
                    }
                }
                Op::AddBias(x, bias) => {
                    let cols = nodes[bias.0].value.len();
                    kernels::axpy(1.0, g, acc(lo, nodes, *x));
                    let gb = acc(lo, nodes, *bias);
                    for row in g.chunks_exact(cols) {
                        kernels::axpy(1.0, row, gb);
                    }
                }
                Op::Conv1d { x, w, b } => {
                    let sx = nodes[x.0].value.shape();
                    let (batch, cin, t) = (sx[0], sx[1], sx[2]);
                    let sw = nodes[w.0].value.shape();
                    let (cout, k) = (sw[0], sw[2]);
                    let (xd, wd) = (nodes[x.0].value.data(), nodes[w.0].value.data());
                    // x, w, b are always distinct nodes (registered separately)
                    let (mut gx, mut gw) = take2(lo, nodes, *x, *w);
                    let mut gb = lo[b.0]
                        .take()
                        .unwrap_or_else(|| vec![0.0; nodes[b.0].value.len()]);
                    kernels::conv1d_backward(
                        xd, batch, cin, t, wd, cout, k, g, &mut gx, &mut gw, &mut gb,
                    );
                    lo[x.0] = Some(gx);
                    lo[w.0] = Some(gw);
                    lo[b.0] = Some(gb);
                }
                Op::ConvTr1d { x, w } => {
                    let sx = nodes[x.0].value.shape();
                    let (batch, cin, tin) = (sx[0], sx[1], sx[2]);
                    let cout = nodes[w.0].value.shape()[1];
                    let (xd, wd) = (nodes[x.0].value.data(), nodes[w.0].value.data());
                    let (mut gx, mut gw) = take2(lo, nodes, *x, *w);
                    kernels::conv1d_tr_backward(
                        xd, batch, cin, tin, wd, cout, 2, g, &mut gx, &mut gw,
                    );
                    lo[x.0] = Some(gx);
                    lo[w.0] = Some(gw);
                }
                Op::MaxPool1d { x, argmax } => {
                    let sx = nodes[x.0].value.shape();
                    let (batch, c, t) = (sx[0], sx[1], sx[2]);
                    let gx = acc(lo, nodes, *x);
                    kernels::maxpool2_backward(g, batch * c, t, argmax, gx);
                }
                Op::ConcatChannels(a, b) => {
                    let sa = nodes[a.0].value.shape();
                    let sb = nodes[b.0].value.shape();
                    let (batch, ca, cb, t) = (sa[0], sa[1], sb[1], sa[2]);
                    {
                        let ga = acc(lo, nodes, *a);
                        for i in 0..batch {
                            let src = &g[i * (ca + cb) * t..][..ca * t];
                            kernels::axpy(1.0, src, &mut ga[i * ca * t..][..ca * t]);
                        }
                    }
                    let gb = acc(lo, nodes, *b);
                    for i in 0..batch {
                        let src = &g[i * (ca + cb) * t + ca * t..][..cb * t];
                        kernels::axpy(1.0, src, &mut gb[i * cb * t..][..cb * t]);
                    }
                }
                Op::SumAxis { x, axis } => {
                    let sx = nodes[x.0].value.shape();
                    let outer: usize = sx[..*axis].iter().product();
                    let mid = sx[*axis];
                    let inner: usize = sx[*axis + 1..].iter().product();
                    let gx = acc(lo, nodes, *x);
                    for o in 0..outer {
                        let src = &g[o * inner..][..inner];
                        for m in 0..mid {
                            kernels::axpy(1.0, src, &mut gx[(o * mid + m) * inner..][..inner]);
                        }
                    }
                }
                Op::SumAll(x) => {
                    let gx = acc(lo, nodes, *x);
                    for v in gx.iter_mut() {
                        *v += g[0];
                    }
                }
                Op::Reshape(x) => {
                    kernels::axpy(1.0, g, acc(lo, nodes, *x));
                }
                Op::MaskedAggregate { x, m, valid_t } => {
                    let sx = nodes[x.0].value.shape();
                    let (batch, c, t) = (sx[0], sx[1], sx[2]);
                    let masks = nodes[m.0].value.shape()[2];
                    let (xd, md) = (nodes[x.0].value.data(), nodes[m.0].value.data());
                    let (mut gx, mut gm) = take2(lo, nodes, *x, *m);
                    for b in 0..batch {
                        for ch in 0..c {
                            let x_row = &xd[(b * c + ch) * t..][..*valid_t];
                            let gx_row = &mut gx[(b * c + ch) * t..][..*valid_t];
                            for mi in 0..masks {
                                let gz = g[(b * c + ch) * masks + mi];
                                let m_row = &md[((b * c + ch) * masks + mi) * t..][..*valid_t];
                                kernels::axpy(gz, m_row, gx_row);
                                let gm_row =
                                    &mut gm[((b * c + ch) * masks + mi) * t..][..*valid_t];
                                kernels::axpy(gz, x_row, gm_row);
                            }
                        }
                    }
                    lo[x.0] = Some(gx);
                    lo[m.0] = Some(gm);
                }
                Op::MseLoss { pred, target } => {
                    let p = nodes[pred.0].value.data();
                    let n = target.len() as f64;
                    let gp = acc(lo, nodes, *pred);
                    for ((gp, p), y) in gp.iter_mut().zip(p.iter()).zip(target.iter()) {
                        *gp += g[0] * 2.0 * (p - y) / n;
                    }
                }
                Op::L1Sum(x) => {
                    let xd = nodes[x.0].value.data();
                    let gx = acc(lo, nodes, *x);
                    for (gx, x) in gx.iter_mut().zip(xd.iter()) {
                        if *x > 0.0 {
                            *gx += g[0];
                        } else if *x < 0.0 {
                            *gx -= g[0];
                        }
                    }
                }
                Op::OrthoPenalty(x) => {
                    let sx = nodes[x.0].value.shape();
                    let (p, k) = (sx[0], sx[1]);
                    let xd = nodes[x.0].value.data();
                    let gram = gram_minus_identity(xd, p, k);
                    // d/dX ||X^T X - I||_F^2 = 4 X (X^T X - I)
                    let gx = acc(lo, nodes, *x);
                    for i in 0..p {
                        for j in 0..k {
                            let mut s = 0.0;
                            for l in 0..k {
                                s += xd[i * k + l] * gram[l * k + j];
                            }
                            gx[i * k + j] += g[0] * 4.0 * s;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn gram_minus_identity(x: &[f64], p: usize, k: usize) -> Vec<f64> {
    let mut gram = vec![0.0; k * k];
    for row in 0..p {
        let r = &x[row * k..][..k];
        for i in 0..k {
            kernels::axpy(r[i], r, &mut gram[i * k..][..k]);
        }
    }
    for i in 0..k {
        gram[i * k + i] -= 1.0;
    }
    gram
}

/// Verify the analytic gradient of a scalar-valued computation against
/// central finite differences.
///
/// `build` must be deterministic (freeze any noise before calling). Returns
/// the maximum over all parameter entries of
/// |analytic - central difference| / max(1, |central difference|).
pub fn grad_check<F>(build: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    if tape.value(loss).len() != 1 {
        return Err(Error::invalid("grad_check", "computation must be scalar-valued".into()));
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| {
            tape.grad(*v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; tape.value(*v).len()])
        })
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_err = 0.0f64;
    for (pi, param) in params.iter().enumerate() {
        for j in 0..param.len() {
            let orig = param.data()[j];
            work[pi].data_mut()[j] = orig + h;
            let f_plus = eval(&work)?;
            work[pi].data_mut()[j] = orig - h;
            let f_minus = eval(&work)?;
            work[pi].data_mut()[j] = orig;
            let fd = (f_plus - f_minus) / (2.0 * h);
            let err = (analytic[pi][j] - fd).abs() / fd.abs().max(1.0);
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}
