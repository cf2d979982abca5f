//! Reverse-mode differentiation over a linear record of tensor primitives.
//!
//! A [`Tape`] owns every value produced during one forward evaluation.
//! Operations append a node and return a [`Var`] handle; [`Tape::backward`]
//! walks the record from the end, so every node is visited after all of its
//! consumers. Gradient contributions are accumulated in tape order, which
//! makes the result bitwise reproducible for a fixed input.

use crate::error::{Result, TensorError};
use crate::scalar::{lit, Scalar};
use crate::tensor::{gemm, gemm_nt, gemm_tn, normal_cdf, normal_pdf, softmax, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Running statistics of one batch-norm site.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<S> {
    pub running: Option<RunningStats<S>>,
    pub momentum: S,
    pub eps: S,
}

impl<S: Scalar> Default for BatchNormState<S> {
    fn default() -> Self {
        BatchNormState {
            running: None,
            momentum: lit(BN_MOMENTUM),
            eps: lit(BN_EPS),
        }
    }
}

impl<S: Scalar> BatchNormState<S> {
    /// State with running mean 0 and variance 1, i.e. eval mode is `gamma·x/√(1+ε)+beta`.
    pub fn unit(channels: usize) -> Self {
        BatchNormState {
            running: Some(RunningStats {
                mean: vec![S::zero(); channels],
                var: vec![S::one(); channels],
            }),
            ..Default::default()
        }
    }

    fn update(&mut self, mean: &[S], unbiased_var: &[S]) {
        let m = self.momentum;
        let keep = S::one() - m;
        let run = self.running.get_or_insert_with(|| RunningStats {
            mean: vec![S::zero(); mean.len()],
            var: vec![S::one(); mean.len()],
        });
        for (r, &b) in run.mean.iter_mut().zip(mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in run.var.iter_mut().zip(unbiased_var) {
            *r = keep * *r + m * b;
        }
    }
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    /// `[g,m,k]·[g,k,n]`, or `[g,m,k]·[g,n,k]ᵀ` when the flag is set.
    BatchMatMul(Var, Var, bool),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    AddTiled(Var, Var),
    Scale(Var, S),
    Gelu(Var),
    /// Softmax over the last axis; backward reads the node's own value.
    Softmax(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<S>,
        inv_std: Vec<S>,
        batch_stats: bool,
    },
    SplitHeads {
        x: Var,
        batch: usize,
        seq: usize,
        heads: usize,
    },
    MergeHeads {
        x: Var,
        batch: usize,
        seq: usize,
        heads: usize,
    },
    Reshape(Var),
    Sum(Var),
    MeanAbsDiff(Var, Var),
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    requires_grad: bool,
    op: Op<S>,
}

/// Single-owner record of executed primitives.
#[derive(Debug, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
    shapes: Vec<Vec<usize>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient for `v`; zeros when `v` is not on any path to the loss.
    pub fn get(&self, v: Var) -> Tensor<S> {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient matches node shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn is_connected(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

fn check_finite<S: Scalar>(op: &'static str, t: &Tensor<S>) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Result<Var> {
        check_finite("leaf", &value)?;
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<S>) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor<S>) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let c = gemm(self.value(a).data(), self.value(b).data(), m, k, n);
        let out = Tensor::new(&[m, n], c)?;
        check_finite("matmul", &out)?;
        Ok(self.push(Op::MatMul(a, b), out, &[a, b]))
    }

    /// Batched matmul over the leading axis. With `transpose_b`, `b` is `[g,n,k]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ok = sa.len() == 3
            && sb.len() == 3
            && sa[0] == sb[0]
            && if transpose_b { sa[2] == sb[2] } else { sa[2] == sb[1] };
        if !ok {
            return Err(TensorError::shape("batch_matmul", sa, sb));
        }
        let (g, m, k) = (sa[0], sa[1], sa[2]);
        let n = if transpose_b { sb[1] } else { sb[2] };
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut c = Vec::with_capacity(g * m * n);
        for gi in 0..g {
            let ab = &ad[gi * m * k..(gi + 1) * m * k];
            let bb = &bd[gi * k * n..(gi + 1) * k * n];
            if transpose_b {
                c.extend(gemm_nt(ab, bb, m, k, n));
            } else {
                c.extend(gemm(ab, bb, m, k, n));
            }
        }
        let out = Tensor::new(&[g, m, n], c)?;
        check_finite("batch_matmul", &out)?;
        Ok(self.push(Op::BatchMatMul(a, b, transpose_b), out, &[a, b]))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(S, S) -> S,
    ) -> Result<Tensor<S>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(TensorError::shape(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape(), data)?;
        check_finite(name, &out)?;
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), out, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), out, &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), out, &[a, b]))
    }

    /// `x + bias`, bias broadcast over every row of the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.ndim() != 1 || tb.len() != tx.cols() {
            return Err(TensorError::shape("add_bias", tx.shape(), tb.shape()));
        }
        let n = tx.cols();
        let data = tx
            .data()
            .chunks(n)
            .flat_map(|r| r.iter().zip(tb.data()).map(|(&a, &b)| a + b))
            .collect();
        let out = Tensor::new(tx.shape(), data)?;
        check_finite("add_bias", &out)?;
        Ok(self.push(Op::AddBias(x, bias), out, &[x, bias]))
    }

    /// `x[r,:] + tile[r mod N,:]` for `x: [R×d]`, `tile: [N×d]`, `N | R`.
    pub fn add_tiled(&mut self, x: Var, tile: Var) -> Result<Var> {
        let (tx, tt) = (self.value(x), self.value(tile));
        if tx.ndim() != 2 || tt.ndim() != 2 || tx.cols() != tt.cols() || tx.rows() % tt.rows() != 0
        {
            return Err(TensorError::shape("add_tiled", tx.shape(), tt.shape()));
        }
        let block = tt.len();
        let data = tx
            .data()
            .chunks(block)
            .flat_map(|blk| blk.iter().zip(tt.data()).map(|(&a, &b)| a + b))
            .collect();
        let out = Tensor::new(tx.shape(), data)?;
        check_finite("add_tiled", &out)?;
        Ok(self.push(Op::AddTiled(x, tile), out, &[x, tile]))
    }

    pub fn scale(&mut self, x: Var, c: S) -> Result<Var> {
        let out = self.value(x).map(|v| v * c);
        check_finite("scale", &out)?;
        Ok(self.push(Op::Scale(x, c), out, &[x]))
    }

    /// `x·w + b` as one matmul plus a bias broadcast.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v * normal_cdf(v));
        check_finite("gelu", &out)?;
        Ok(self.push(Op::Gelu(x), out, &[x]))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let out = softmax(tx, tx.ndim() - 1)?;
        check_finite("softmax", &out)?;
        Ok(self.push(Op::Softmax(x), out, &[x]))
    }

    /// Per-channel normalization over every leading position of `x: [..., d]`.
    ///
    /// Train mode normalizes with the batch statistics and folds them into
    /// `state`; eval mode uses the stored running statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState<S>,
        mode: NormMode,
    ) -> Result<Var> {
        let tx = self.value(x);
        let d = tx.cols();
        let rows = tx.rows();
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(TensorError::shape("batch_norm", tx.shape(), tg.shape()));
        }
        let xd = tx.data();
        let (mean, var, batch_stats) = match mode {
            NormMode::Train => {
                if rows < 2 {
                    return Err(TensorError::Contract(format!(
                        "batch_norm in train mode needs at least 2 positions, got {rows}"
                    )));
                }
                let count = S::from_usize_lossy(rows);
                let mut mean = vec![S::zero(); d];
                for r in xd.chunks(d) {
                    for (m, &v) in mean.iter_mut().zip(r) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count);
                let mut var = vec![S::zero(); d];
                for r in xd.chunks(d) {
                    for ((s, &v), &m) in var.iter_mut().zip(r).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                let unbiased: Vec<S> = var
                    .iter()
                    .map(|&s| s / S::from_usize_lossy(rows - 1))
                    .collect();
                var.iter_mut().for_each(|s| *s /= count);
                state.update(&mean, &unbiased);
                (mean, var, true)
            }
            NormMode::Eval => {
                let run = state.running.as_ref().ok_or_else(|| {
                    TensorError::State("batch_norm eval mode with uninitialized running stats".into())
                })?;
                if run.mean.len() != d {
                    return Err(TensorError::shape("batch_norm", tx.shape(), &[run.mean.len()]));
                }
                (run.mean.clone(), run.var.clone(), false)
            }
        };
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + state.eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(xd.len());
        for r in xd.chunks(d) {
            for c in 0..d {
                xhat.push((r[c] - mean[c]) * inv_std[c]);
            }
        }
        let (g, b) = (tg.data(), tb.data());
        let data = xhat
            .chunks(d)
            .flat_map(|r| (0..d).map(move |c| g[c] * r[c] + b[c]))
            .collect();
        let out = Tensor::new(tx.shape(), data)?;
        check_finite("batch_norm", &out)?;
        Ok(self.push(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            out,
            &[x, gamma, beta],
        ))
    }

    /// `[batch·seq, heads·D]` → `[batch·heads, seq, D]`.
    pub fn split_heads(&mut self, x: Var, batch: usize, seq: usize, heads: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.ndim() != 2 || tx.rows() != batch * seq || tx.cols() % heads != 0 {
            return Err(TensorError::shape("split_heads", tx.shape(), &[batch, seq, heads]));
        }
        let width = tx.cols();
        let dh = width / heads;
        let xd = tx.data();
        let mut out = Vec::with_capacity(xd.len());
        for b in 0..batch {
            for h in 0..heads {
                for n in 0..seq {
                    let row = (b * seq + n) * width + h * dh;
                    out.extend_from_slice(&xd[row..row + dh]);
                }
            }
        }
        let out = Tensor::new(&[batch * heads, seq, dh], out)?;
        Ok(self.push(
            Op::SplitHeads {
                x,
                batch,
                seq,
                heads,
            },
            out,
            &[x],
        ))
    }

    /// Inverse of [`Tape::split_heads`]: heads concatenated along the channel axis.
    pub fn merge_heads(&mut self, x: Var, batch: usize, seq: usize, heads: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.ndim() != 3 || tx.shape()[0] != batch * heads || tx.shape()[1] != seq {
            return Err(TensorError::shape("merge_heads", tx.shape(), &[batch, seq, heads]));
        }
        let dh = tx.shape()[2];
        let width = dh * heads;
        let xd = tx.data();
        let mut out = vec![S::zero(); xd.len()];
        for b in 0..batch {
            for h in 0..heads {
                for n in 0..seq {
                    let src = ((b * heads + h) * seq + n) * dh;
                    let dst = (b * seq + n) * width + h * dh;
                    out[dst..dst + dh].copy_from_slice(&xd[src..src + dh]);
                }
            }
        }
        let out = Tensor::new(&[batch * seq, width], out)?;
        Ok(self.push(
            Op::MergeHeads {
                x,
                batch,
                seq,
                heads,
            },
            out,
            &[x],
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let want: usize = shape.iter().product();
        if want != tx.len() {
            return Err(TensorError::shape("reshape", tx.shape(), shape));
        }
        let out = tx.reshape(shape)?;
        Ok(self.push(Op::Reshape(x), out, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: S = self.value(x).data().iter().copied().sum();
        let out = Tensor::new(&[1], vec![s])?;
        check_finite("sum", &out)?;
        Ok(self.push(Op::Sum(x), out, &[x]))
    }

    /// `mean |a − b|` over every element.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(TensorError::shape("mean_abs_diff", ta.shape(), tb.shape()));
        }
        let total: S = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| (x - y).abs())
            .sum();
        let out = Tensor::new(&[1], vec![total / S::from_usize_lossy(ta.len())])?;
        check_finite("mean_abs_diff", &out)?;
        Ok(self.push(Op::MeanAbsDiff(a, b), out, &[a, b]))
    }

    /// Accumulate `d loss / d v` for every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let count = loss.0 + 1;
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);

        for idx in (0..count).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads)?;
            }
            grads[idx] = Some(g);
        }

        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<S>>], v: Var, contrib: Vec<S>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(contrib).for_each(|(a, c)| *a += c),
            slot @ None => *slot = Some(contrib),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node<S>, g: &[S], grads: &mut [Option<Vec<S>>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.wants(a) {
                    self.accumulate(grads, a, gemm_nt(g, tb.data(), m, n, k));
                }
                if self.wants(b) {
                    self.accumulate(grads, b, gemm_tn(ta.data(), g, m, k, n));
                }
            }
            &Op::BatchMatMul(a, b, tr) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (gn, m, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
                let n = if tr { tb.shape()[1] } else { tb.shape()[2] };
                let (ad, bd) = (ta.data(), tb.data());
                if self.wants(a) {
                    let mut da = Vec::with_capacity(ad.len());
                    for gi in 0..gn {
                        let gg = &g[gi * m * n..(gi + 1) * m * n];
                        let bb = &bd[gi * k * n..(gi + 1) * k * n];
                        // C = A·B → dA = G·Bᵀ ; C = A·Bᵀ → dA = G·B
                        if tr {
                            da.extend(gemm(gg, bb, m, n, k));
                        } else {
                            da.extend(gemm_nt(gg, bb, m, n, k));
                        }
                    }
                    self.accumulate(grads, a, da);
                }
                if self.wants(b) {
                    let mut db = Vec::with_capacity(bd.len());
                    for gi in 0..gn {
                        let gg = &g[gi * m * n..(gi + 1) * m * n];
                        let ab = &ad[gi * m * k..(gi + 1) * m * k];
                        // C = A·B → dB = Aᵀ·G ; C = A·Bᵀ → dB = Gᵀ·A
                        if tr {
                            db.extend(gemm_tn(gg, ab, m, n, k));
                        } else {
                            db.extend(gemm_tn(ab, gg, m, k, n));
                        }
                    }
                    self.accumulate(grads, b, db);
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.to_vec());
                self.accumulate(grads, b, g.to_vec());
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, g.to_vec());
                self.accumulate(grads, b, g.iter().map(|&v| -v).collect());
            }
            &Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                if self.wants(a) {
                    let d = g.iter().zip(tb.data()).map(|(&gv, &bv)| gv * bv).collect();
                    self.accumulate(grads, a, d);
                }
                if self.wants(b) {
                    let d = g.iter().zip(ta.data()).map(|(&gv, &av)| gv * av).collect();
                    self.accumulate(grads, b, d);
                }
            }
            &Op::AddBias(x, bias) => {
                self.accumulate(grads, x, g.to_vec());
                if self.wants(bias) {
                    let n = self.value(bias).len();
                    let mut db = vec![S::zero(); n];
                    for r in g.chunks(n) {
                        db.iter_mut().zip(r).for_each(|(d, &v)| *d += v);
                    }
                    self.accumulate(grads, bias, db);
                }
            }
            &Op::AddTiled(x, tile) => {
                self.accumulate(grads, x, g.to_vec());
                if self.wants(tile) {
                    let block = self.value(tile).len();
                    let mut dt = vec![S::zero(); block];
                    for blk in g.chunks(block) {
                        dt.iter_mut().zip(blk).for_each(|(d, &v)| *d += v);
                    }
                    self.accumulate(grads, tile, dt);
                }
            }
            &Op::Scale(x, c) => {
                self.accumulate(grads, x, g.iter().map(|&v| v * c).collect());
            }
            &Op::Gelu(x) => {
                let d = g
                    .iter()
                    .zip(self.value(x).data())
                    .map(|(&gv, &xv)| gv * (normal_cdf(xv) + xv * normal_pdf(xv)))
                    .collect();
                self.accumulate(grads, x, d);
            }
            &Op::Softmax(x) => {
                let y = node.value.data();
                let n = node.value.cols();
                let mut d = Vec::with_capacity(y.len());
                for (yr, gr) in y.chunks(n).zip(g.chunks(n)) {
                    let dot: S = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    d.extend(yr.iter().zip(gr).map(|(&yv, &gv)| yv * (gv - dot)));
                }
                self.accumulate(grads, x, d);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let d = inv_std.len();
                let gam = self.value(*gamma).data();
                if self.wants(*gamma) {
                    let mut dg = vec![S::zero(); d];
                    for (gr, xr) in g.chunks(d).zip(xhat.chunks(d)) {
                        for c in 0..d {
                            dg[c] += gr[c] * xr[c];
                        }
                    }
                    self.accumulate(grads, *gamma, dg);
                }
                if self.wants(*beta) {
                    let mut db = vec![S::zero(); d];
                    for gr in g.chunks(d) {
                        db.iter_mut().zip(gr).for_each(|(a, &v)| *a += v);
                    }
                    self.accumulate(grads, *beta, db);
                }
                if self.wants(*x) {
                    let dx = if *batch_stats {
                        let rows = g.len() / d;
                        let count = S::from_usize_lossy(rows);
                        let mut sum_dxh = vec![S::zero(); d];
                        let mut sum_dxh_xh = vec![S::zero(); d];
                        for (gr, xr) in g.chunks(d).zip(xhat.chunks(d)) {
                            for c in 0..d {
                                let dxh = gr[c] * gam[c];
                                sum_dxh[c] += dxh;
                                sum_dxh_xh[c] += dxh * xr[c];
                            }
                        }
                        let mut dx = Vec::with_capacity(g.len());
                        for (gr, xr) in g.chunks(d).zip(xhat.chunks(d)) {
                            for c in 0..d {
                                let dxh = gr[c] * gam[c];
                                dx.push(
                                    inv_std[c] / count
                                        * (count * dxh - sum_dxh[c] - xr[c] * sum_dxh_xh[c]),
                                );
                            }
                        }
                        dx
                    } else {
                        g.chunks(d)
                            .flat_map(|gr| (0..d).map(move |c| gr[c] * gam[c] * inv_std[c]))
                            .collect()
                    };
                    self.accumulate(grads, *x, dx);
                }
            }
            &Op::SplitHeads {
                x,
                batch,
                seq,
                heads,
            } => {
                let width = self.value(x).cols();
                let dh = width / heads;
                let mut dx = vec![S::zero(); g.len()];
                for b in 0..batch {
                    for h in 0..heads {
                        for n in 0..seq {
                            let src = ((b * heads + h) * seq + n) * dh;
                            let dst = (b * seq + n) * width + h * dh;
                            dx[dst..dst + dh].copy_from_slice(&g[src..src + dh]);
                        }
                    }
                }
                self.accumulate(grads, x, dx);
            }
            &Op::MergeHeads {
                x,
                batch,
                seq,
                heads,
            } => {
                let dh = self.value(x).shape()[2];
                let width = dh * heads;
                let mut dx = Vec::with_capacity(g.len());
                for b in 0..batch {
                    for h in 0..heads {
                        for n in 0..seq {
                            let src = (b * seq + n) * width + h * dh;
                            dx.extend_from_slice(&g[src..src + dh]);
                        }
                    }
                }
                self.accumulate(grads, x, dx);
            }
            &Op::Reshape(x) => self.accumulate(grads, x, g.to_vec()),
            &Op::Sum(x) => {
                let n = self.value(x).len();
                self.accumulate(grads, x, vec![g[0]; n]);
            }
            &Op::MeanAbsDiff(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let scale = g[0] / S::from_usize_lossy(ta.len());
                // subgradient 0 at a zero residual
                let sign: Vec<S> = ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(&x, &y)| {
                        let r = x - y;
                        if r > S::zero() {
                            scale
                        } else if r < S::zero() {
                            -scale
                        } else {
                            S::zero()
                        }
                    })
                    .collect();
                if self.wants(b) {
                    self.accumulate(grads, b, sign.iter().map(|&v| -v).collect());
                }
                self.accumulate(grads, a, sign);
            }
        }
        Ok(())
    }
}
