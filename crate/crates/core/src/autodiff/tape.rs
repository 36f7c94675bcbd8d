//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Operations are recorded in execution order, so the tape is already
//! topologically sorted; [`Tape::backward`] walks it once in reverse and
//! accumulates gradients additively at fan-out. Gradients are only propagated
//! into values that transitively depend on a tracked leaf.

use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::tensor::{axpy_rows, matmul_into, matmul_nt_into, matmul_tn_into};
use super::Tensor;
use crate::error::{Error, Result};

/// Guard used by every `‖·‖₂` denominator.
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One edge-conditioned message `source -> target` using edge row `edge`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Message {
    pub target: usize,
    pub source: usize,
    pub edge: usize,
}

/// The fixed message pattern of an edge-conditioned convolution: every directed
/// incidence plus the per-node averaging factor (`1/deg`, or 0 when isolated).
#[derive(Clone, Debug, PartialEq)]
pub struct MessagePlan {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub messages: Vec<Message>,
    pub scale: Vec<f64>,
}

/// Batch-norm statistics of one training-mode forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, used for the running estimate.
    pub var: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub enum NormMode<'a> {
    /// Normalise with the statistics of the current rows.
    Train { eps: f64 },
    /// Normalise with running statistics.
    Eval {
        mean: &'a [f64],
        var: &'a [f64],
        eps: f64,
    },
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Relu(Var),
    SumRows(Var),
    SumAll(Var),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    L2Norm(Var),
    DivScalar(Var, Var),
    RowScale(Var, Var),
    RowMatVec(Var, Var),
    Reshape(Var),
    ConcatRows(Vec<Var>),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        x_hat: Tensor,
        inv_std: Vec<f64>,
        train: bool,
    },
    EdgeMessage {
        h: Var,
        x: Var,
        w2: Var,
        b2: Var,
        plan: Arc<MessagePlan>,
        /// `[source][k+1][out]` projections of each node through every filter
        /// basis, the bias basis last.
        y: Vec<f64>,
    },
    BceWithLogits(Var, Vec<f64>),
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    check_finite: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
            check_finite: cfg!(debug_assertions),
        }
    }

    /// Enables or disables the NaN/Inf check on every recorded value. On by
    /// default in debug builds.
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Result<Var> {
        if self.check_finite {
            if let Some(pos) = value.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "tape value",
                    row: pos / value.cols().max(1),
                });
            }
        }
        self.nodes.push(Node { value, op, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A value that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Places a stored parameter on the tape. Repeated calls return the same
    /// leaf so gradients from every use accumulate in one place.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&(_, v)) = self.params.iter().find(|(p, _)| *p == id) {
            return v;
        }
        let v = self.leaf(store.get(id).clone());
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, Op::MatMul(a, b), tracked)
    }

    fn same_shape(&self, what: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                what,
                format!("{:?}", self.shape(a)),
                format!("{:?}", self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_vec(va.rows(), va.cols(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, op, tracked)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("elementwise mul", a, b)?;
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the `1 x C` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if self.shape(b) != (1, cols) {
            return Err(Error::shape("add_row", format!("(1, {cols})"), format!("{:?}", self.shape(b))));
        }
        let mut value = self.value(a).clone();
        let bias = self.value(b).data().to_vec();
        for r in 0..rows {
            for (v, bv) in value.row_mut(r).iter_mut().zip(&bias) {
                *v += bv;
            }
        }
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, Op::AddRow(a, b), tracked)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|v| c * v);
        let tracked = self.tracked(a);
        self.push(value, Op::Scale(a, c), tracked)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(sigmoid);
        let tracked = self.tracked(a);
        self.push(value, Op::Sigmoid(a), tracked)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        let tracked = self.tracked(a);
        self.push(value, Op::Relu(a), tracked)
    }

    /// Column sums: `R x C -> 1 x C`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let mut out = vec![0.0; t.cols()];
        for r in 0..t.rows() {
            for (o, v) in out.iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let value = Tensor::row_vector(&out);
        let tracked = self.tracked(a);
        self.push(value, Op::SumRows(a), tracked)
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        let tracked = self.tracked(a);
        self.push(value, Op::SumAll(a), tracked)
    }

    /// Row `r` of the output is row `indices[r]` of `a`.
    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let t = self.value(a);
        let mut value = Tensor::zeros(indices.len(), t.cols());
        for (r, &i) in indices.iter().enumerate() {
            if i >= t.rows() {
                return Err(Error::shape("gather_rows index", format!("< {}", t.rows()), i));
            }
            value.row_mut(r).copy_from_slice(t.row(i));
        }
        let tracked = self.tracked(a);
        self.push(value, Op::GatherRows(a, indices), tracked)
    }

    /// Row `r` of `a` is added into row `indices[r]` of an `out_rows x C` zero matrix.
    pub fn scatter_add_rows(&mut self, a: Var, indices: Vec<usize>, out_rows: usize) -> Result<Var> {
        let t = self.value(a);
        if indices.len() != t.rows() {
            return Err(Error::shape("scatter_add_rows indices", t.rows(), indices.len()));
        }
        let mut value = Tensor::zeros(out_rows, t.cols());
        for (r, &i) in indices.iter().enumerate() {
            if i >= out_rows {
                return Err(Error::shape("scatter_add_rows index", format!("< {out_rows}"), i));
            }
            for (o, v) in value.row_mut(i).iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let tracked = self.tracked(a);
        self.push(value, Op::ScatterAddRows(a, indices), tracked)
    }

    /// Euclidean norm of all entries, as a `1x1` value.
    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        if self.value(a).is_empty() {
            return Err(Error::shape("l2_norm input", "at least one element", 0));
        }
        let value = Tensor::scalar(self.value(a).norm());
        let tracked = self.tracked(a);
        self.push(value, Op::L2Norm(a), tracked)
    }

    /// `a / max(s, NORM_EPS)` for a `1x1` divisor `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(Error::shape("div_scalar divisor", "(1, 1)", format!("{:?}", self.shape(s))));
        }
        let denom = self.value(s).item().max(NORM_EPS);
        let value = self.value(a).map(|v| v / denom);
        let tracked = self.tracked(a) || self.tracked(s);
        self.push(value, Op::DivScalar(a, s), tracked)
    }

    /// Multiplies row `r` of `a` by `s[r]`, where `s` is `R x 1`.
    pub fn row_scale(&mut self, a: Var, s: Var) -> Result<Var> {
        let (rows, _) = self.shape(a);
        if self.shape(s) != (rows, 1) {
            return Err(Error::shape("row_scale", format!("({rows}, 1)"), format!("{:?}", self.shape(s))));
        }
        let mut value = self.value(a).clone();
        let factors = self.value(s).data().to_vec();
        for (r, f) in factors.iter().enumerate() {
            for v in value.row_mut(r) {
                *v *= f;
            }
        }
        let tracked = self.tracked(a) || self.tracked(s);
        self.push(value, Op::RowScale(a, s), tracked)
    }

    /// Row-wise matrix-vector product: row `r` of `f` (`R x (out*in)`) is read as
    /// a row-major `out x in` matrix and applied to row `r` of `x` (`R x in`).
    pub fn row_matvec(&mut self, f: Var, x: Var) -> Result<Var> {
        let (rows, flat) = self.shape(f);
        let (xr, din) = self.shape(x);
        if xr != rows || din == 0 || flat % din != 0 {
            return Err(Error::shape(
                "row_matvec",
                format!("({rows}, k*{din})"),
                format!("{:?} with x {:?}", self.shape(f), self.shape(x)),
            ));
        }
        let dout = flat / din;
        let fv = self.value(f);
        let xv = self.value(x);
        let mut value = Tensor::zeros(rows, dout);
        for r in 0..rows {
            let fr = fv.row(r);
            let xr = xv.row(r);
            let out = value.row_mut(r);
            for (o, slot) in out.iter_mut().enumerate() {
                *slot = dot(&fr[o * din..(o + 1) * din], xr);
            }
        }
        let tracked = self.tracked(f) || self.tracked(x);
        self.push(value, Op::RowMatVec(f, x), tracked)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).clone().reshape(rows, cols)?;
        let tracked = self.tracked(a);
        self.push(value, Op::Reshape(a), tracked)
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_rows", "at least one part", 0));
        };
        let cols = self.shape(first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in &parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::shape("concat_rows", cols, t.cols()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let tracked = parts.iter().any(|&p| self.tracked(p));
        self.push(Tensor::from_vec(rows, cols, data)?, Op::ConcatRows(parts), tracked)
    }

    /// Per-column normalisation over rows followed by the affine `gamma, beta`
    /// (both `1 x C`). In training mode the batch statistics are returned so
    /// the caller can update its running estimates.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode<'_>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (rows, cols) = self.shape(x);
        if self.shape(gamma) != (1, cols) || self.shape(beta) != (1, cols) {
            return Err(Error::shape(
                "batch_norm affine",
                format!("(1, {cols})"),
                format!("{:?} / {:?}", self.shape(gamma), self.shape(beta)),
            ));
        }
        let xv = self.value(x);
        let (mean, var_biased, eps, train) = match mode {
            NormMode::Train { eps } => {
                if rows == 0 {
                    return Err(Error::shape("batch_norm input", "at least one row", 0));
                }
                let mut mean = vec![0.0; cols];
                for r in 0..rows {
                    for (m, v) in mean.iter_mut().zip(xv.row(r)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; cols];
                for r in 0..rows {
                    for ((s, v), m) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= rows as f64);
                (mean, var, eps, true)
            }
            NormMode::Eval { mean, var, eps } => {
                if mean.len() != cols || var.len() != cols {
                    return Err(Error::shape("batch_norm running stats", cols, mean.len()));
                }
                (mean.to_vec(), var.to_vec(), eps, false)
            }
        };
        let inv_std: Vec<f64> = var_biased.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let mut x_hat = xv.clone();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let xh = x_hat.row_mut(r);
            for c in 0..cols {
                xh[c] = (xh[c] - mean[c]) * inv_std[c];
            }
            let o = out.row_mut(r);
            for c in 0..cols {
                o[c] = g[c] * x_hat.get(r, c) + b[c];
            }
        }
        let stats = train.then(|| {
            let unbias = if rows > 1 {
                rows as f64 / (rows - 1) as f64
            } else {
                1.0
            };
            BatchStats {
                mean: mean.clone(),
                var: var_biased.iter().map(|v| v * unbias).collect(),
            }
        });
        let tracked = self.tracked(x) || self.tracked(gamma) || self.tracked(beta);
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                train,
            },
            tracked,
        )?;
        Ok((v, stats))
    }

    /// Fused edge-conditioned aggregation.
    ///
    /// With per-edge filter hidden activations `h` (`E x k`) and the filter's
    /// output layer `w2` (`k x out*in`), `b2` (`1 x out*in`), the weight matrix of
    /// edge `e` is `reshape(h[e] w2 + b2)` (`out x in`). Node `i` receives
    /// `scale[i] * Σ W_e x[j]` over its messages. The per-edge matrices are
    /// never materialised: each node is projected through every filter basis
    /// once and messages mix those projections by `h[e]`.
    pub fn edge_conditioned_aggregate(
        &mut self,
        h: Var,
        x: Var,
        w2: Var,
        b2: Var,
        plan: Arc<MessagePlan>,
    ) -> Result<Var> {
        let (num_edges, k) = self.shape(h);
        let (n, din) = self.shape(x);
        let (wk, flat) = self.shape(w2);
        if num_edges != plan.num_edges || n != plan.num_nodes {
            return Err(Error::shape(
                "edge_conditioned_aggregate plan",
                format!("{} edges, {} nodes", plan.num_edges, plan.num_nodes),
                format!("{num_edges} edges, {n} nodes"),
            ));
        }
        if wk != k || din == 0 || flat % din != 0 || self.shape(b2) != (1, flat) {
            return Err(Error::shape(
                "edge_conditioned_aggregate filter",
                format!("w2 ({k}, out*{din}), b2 (1, out*{din})"),
                format!("w2 {:?}, b2 {:?}", self.shape(w2), self.shape(b2)),
            ));
        }
        let dout = flat / din;
        let ka = k + 1;
        // Filter output layer with b2 appended as basis k, transposed so that
        // y = x wt is one dense product: wt[c][kk*dout + o] = w2[kk][o*din + c].
        let wt = transpose_filter_basis(self.value(w2).data(), self.value(b2).data(), k, dout, din);
        let mut y = vec![0.0; n * ka * dout];
        matmul_into(self.value(x).data(), &wt, &mut y, n, din, ka * dout);
        let hv = self.value(h).data();
        let mut out = Tensor::zeros(n, dout);
        {
            let od = out.data_mut();
            let mut coef = vec![0.0; ka];
            for m in &plan.messages {
                let s = plan.scale[m.target];
                for (c, &hk) in coef.iter_mut().zip(&hv[m.edge * k..(m.edge + 1) * k]) {
                    *c = s * hk;
                }
                coef[k] = s;
                let orow = &mut od[m.target * dout..(m.target + 1) * dout];
                let ys = &y[m.source * ka * dout..(m.source + 1) * ka * dout];
                axpy_rows(&coef, 1, ys, dout, ka, orow);
            }
        }
        let tracked = [h, x, w2, b2].iter().any(|&v| self.tracked(v));
        self.push(
            out,
            Op::EdgeMessage {
                h,
                x,
                w2,
                b2,
                plan,
                y,
            },
            tracked,
        )
    }

    /// Mean binary cross-entropy of `logits` (`B x 1`) against 0/1 `targets`,
    /// computed in the overflow-safe form `max(z,0) - z y + ln(1 + e^{-|z|})`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let t = self.value(logits);
        if t.cols() != 1 || t.rows() != targets.len() || targets.is_empty() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("({}, 1)", targets.len()),
                format!("{:?}", t.shape()),
            ));
        }
        let loss = t
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / targets.len() as f64;
        let tracked = self.tracked(logits);
        self.push(Tensor::scalar(loss), Op::BceWithLogits(logits, targets.to_vec()), tracked)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.shape(loss);
        if rows * cols != 1 {
            return Err(Error::NotScalar { rows, cols });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else {
                continue;
            };
            self.backward_node(node, g, lower);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                if self.tracked(*a) {
                    let bv = self.value(*b).data();
                    self.accumulate(grads, *a, |da| matmul_nt_into(gd, bv, da, m, n, k));
                }
                if self.tracked(*b) {
                    let av = self.value(*a).data();
                    self.accumulate(grads, *b, |db| matmul_tn_into(av, gd, db, m, k, n));
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.tracked(v) {
                        self.accumulate(grads, v, |d| add_into(d, gd));
                    }
                }
            }
            Op::AddRow(a, b) => {
                if self.tracked(*a) {
                    self.accumulate(grads, *a, |d| add_into(d, gd));
                }
                if self.tracked(*b) {
                    let cols = g.cols();
                    self.accumulate(grads, *b, |d| {
                        for row in gd.chunks(cols) {
                            add_into(d, row);
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if self.tracked(v) {
                        let ov = self.value(other).data();
                        self.accumulate(grads, v, |d| {
                            for ((dv, gv), o) in d.iter_mut().zip(gd).zip(ov) {
                                *dv += gv * o;
                            }
                        });
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.tracked(*a) {
                    self.accumulate(grads, *a, |d| {
                        for (dv, gv) in d.iter_mut().zip(gd) {
                            *dv += c * gv;
                        }
                    });
                }
            }
            Op::Sigmoid(a) => {
                let yv = node.value.data();
                self.accumulate(grads, *a, |d| {
                    for ((dv, gv), y) in d.iter_mut().zip(gd).zip(yv) {
                        *dv += gv * y * (1.0 - y);
                    }
                });
            }
            Op::Relu(a) => {
                let xv = self.value(*a).data();
                self.accumulate(grads, *a, |d| {
                    for ((dv, gv), x) in d.iter_mut().zip(gd).zip(xv) {
                        if *x > 0.0 {
                            *dv += gv;
                        }
                    }
                });
            }
            Op::SumRows(a) => {
                let cols = g.cols();
                self.accumulate(grads, *a, |d| {
                    for row in d.chunks_mut(cols) {
                        add_into(row, gd);
                    }
                });
            }
            Op::SumAll(a) => {
                let s = gd[0];
                self.accumulate(grads, *a, |d| d.iter_mut().for_each(|v| *v += s));
            }
            Op::GatherRows(a, idx) => {
                let cols = g.cols();
                self.accumulate(grads, *a, |d| {
                    for (r, &i) in idx.iter().enumerate() {
                        add_into(&mut d[i * cols..(i + 1) * cols], &gd[r * cols..(r + 1) * cols]);
                    }
                });
            }
            Op::ScatterAddRows(a, idx) => {
                let cols = g.cols();
                self.accumulate(grads, *a, |d| {
                    for (r, &i) in idx.iter().enumerate() {
                        add_into(&mut d[r * cols..(r + 1) * cols], &gd[i * cols..(i + 1) * cols]);
                    }
                });
            }
            Op::L2Norm(a) => {
                let norm = node.value.item().max(NORM_EPS);
                let av = self.value(*a).data();
                let s = gd[0] / norm;
                self.accumulate(grads, *a, |d| {
                    for (dv, x) in d.iter_mut().zip(av) {
                        *dv += s * x;
                    }
                });
            }
            Op::DivScalar(a, s) => {
                let raw = self.value(*s).item();
                let denom = raw.max(NORM_EPS);
                if self.tracked(*a) {
                    self.accumulate(grads, *a, |d| {
                        for (dv, gv) in d.iter_mut().zip(gd) {
                            *dv += gv / denom;
                        }
                    });
                }
                if self.tracked(*s) && raw > NORM_EPS {
                    let av = self.value(*a).data();
                    let total: f64 = gd.iter().zip(av).map(|(gv, x)| gv * x).sum();
                    self.accumulate(grads, *s, |d| d[0] -= total / (denom * denom));
                }
            }
            Op::RowScale(a, s) => {
                let cols = g.cols();
                if self.tracked(*a) {
                    let sv = self.value(*s).data();
                    self.accumulate(grads, *a, |d| {
                        for (r, f) in sv.iter().enumerate() {
                            for (dv, gv) in d[r * cols..(r + 1) * cols].iter_mut().zip(&gd[r * cols..(r + 1) * cols]) {
                                *dv += gv * f;
                            }
                        }
                    });
                }
                if self.tracked(*s) {
                    let av = self.value(*a).data();
                    self.accumulate(grads, *s, |d| {
                        for (r, dv) in d.iter_mut().enumerate() {
                            *dv += dot(&gd[r * cols..(r + 1) * cols], &av[r * cols..(r + 1) * cols]);
                        }
                    });
                }
            }
            Op::RowMatVec(f, x) => {
                let (rows, flat) = self.shape(*f);
                let din = self.shape(*x).1;
                let dout = flat / din;
                let fv = self.value(*f).data();
                let xv = self.value(*x).data();
                if self.tracked(*f) {
                    self.accumulate(grads, *f, |d| {
                        for r in 0..rows {
                            let xr = &xv[r * din..(r + 1) * din];
                            for o in 0..dout {
                                let gv = gd[r * dout + o];
                                let drow = &mut d[r * flat + o * din..r * flat + (o + 1) * din];
                                for (dv, xc) in drow.iter_mut().zip(xr) {
                                    *dv += gv * xc;
                                }
                            }
                        }
                    });
                }
                if self.tracked(*x) {
                    self.accumulate(grads, *x, |d| {
                        for r in 0..rows {
                            let drow = &mut d[r * din..(r + 1) * din];
                            for o in 0..dout {
                                let gv = gd[r * dout + o];
                                let frow = &fv[r * flat + o * din..r * flat + (o + 1) * din];
                                for (dv, fc) in drow.iter_mut().zip(frow) {
                                    *dv += gv * fc;
                                }
                            }
                        }
                    });
                }
            }
            Op::Reshape(a) => self.accumulate(grads, *a, |d| add_into(d, gd)),
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.tracked(p) {
                        self.accumulate(grads, p, |d| add_into(d, &gd[offset..offset + len]));
                    }
                    offset += len;
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                train,
            } => {
                let (rows, cols) = x_hat.shape();
                let gam = self.value(*gamma).data();
                if self.tracked(*gamma) {
                    self.accumulate(grads, *gamma, |d| {
                        for r in 0..rows {
                            for c in 0..cols {
                                d[c] += gd[r * cols + c] * x_hat.get(r, c);
                            }
                        }
                    });
                }
                if self.tracked(*beta) {
                    self.accumulate(grads, *beta, |d| {
                        for row in gd.chunks(cols) {
                            add_into(d, row);
                        }
                    });
                }
                if self.tracked(*x) {
                    self.accumulate(grads, *x, |d| {
                        if *train {
                            // dx = inv_std/N * (N dxh - Σ dxh - x̂ Σ dxh·x̂), dxh = g·gamma
                            let nf = rows as f64;
                            let mut sum_dxh = vec![0.0; cols];
                            let mut sum_dxh_xh = vec![0.0; cols];
                            for r in 0..rows {
                                for c in 0..cols {
                                    let dxh = gd[r * cols + c] * gam[c];
                                    sum_dxh[c] += dxh;
                                    sum_dxh_xh[c] += dxh * x_hat.get(r, c);
                                }
                            }
                            for r in 0..rows {
                                for c in 0..cols {
                                    let dxh = gd[r * cols + c] * gam[c];
                                    d[r * cols + c] += inv_std[c] / nf
                                        * (nf * dxh - sum_dxh[c] - x_hat.get(r, c) * sum_dxh_xh[c]);
                                }
                            }
                        } else {
                            for r in 0..rows {
                                for c in 0..cols {
                                    d[r * cols + c] += gd[r * cols + c] * gam[c] * inv_std[c];
                                }
                            }
                        }
                    });
                }
            }
            Op::EdgeMessage {
                h,
                x,
                w2,
                b2,
                plan,
                y,
            } => self.backward_edge_message(grads, gd, (*h, *x, *w2, *b2), plan, y),
            Op::BceWithLogits(z, targets) => {
                let zv = self.value(*z).data();
                let s = gd[0] / targets.len() as f64;
                self.accumulate(grads, *z, |d| {
                    for ((dv, &zz), &t) in d.iter_mut().zip(zv).zip(targets) {
                        *dv += s * (sigmoid(zz) - t);
                    }
                });
            }
        }
    }

    fn backward_edge_message(
        &self,
        grads: &mut [Option<Tensor>],
        gd: &[f64],
        (h, x, w2, b2): (Var, Var, Var, Var),
        plan: &MessagePlan,
        y: &[f64],
    ) {
        let (n, din) = self.shape(x);
        let k = self.shape(h).1;
        let ka = k + 1;
        let flat = self.shape(w2).1;
        let dout = flat / din;
        let hv = self.value(h).data();

        if self.tracked(h) {
            self.accumulate(grads, h, |dh| {
                for m in &plan.messages {
                    let s = plan.scale[m.target];
                    let gi = &gd[m.target * dout..(m.target + 1) * dout];
                    let dhe = &mut dh[m.edge * k..(m.edge + 1) * k];
                    let ys = &y[m.source * ka * dout..(m.source * ka + k) * dout];
                    for (dv, yrow) in dhe.iter_mut().zip(ys.chunks_exact(dout)) {
                        *dv += s * dot(gi, yrow);
                    }
                }
            });
        }
        if !(self.tracked(x) || self.tracked(w2) || self.tracked(b2)) {
            return;
        }
        let mut dy = vec![0.0; n * ka * dout];
        for m in &plan.messages {
            let s = plan.scale[m.target];
            let gi = &gd[m.target * dout..(m.target + 1) * dout];
            let he = &hv[m.edge * k..(m.edge + 1) * k];
            let ds = &mut dy[m.source * ka * dout..(m.source + 1) * ka * dout];
            for (drow, &hk) in ds.chunks_exact_mut(dout).zip(he.iter().chain(std::iter::once(&1.0))) {
                let c = s * hk;
                for (dv, gv) in drow.iter_mut().zip(gi) {
                    *dv += c * gv;
                }
            }
        }
        let xv = self.value(x).data();
        if self.tracked(w2) || self.tracked(b2) {
            let mut dwt = vec![0.0; din * ka * dout];
            matmul_tn_into(xv, &dy, &mut dwt, n, din, ka * dout);
            let at = |c: usize, kk: usize, o: usize| dwt[c * ka * dout + kk * dout + o];
            if self.tracked(w2) {
                self.accumulate(grads, w2, |dw| {
                    for kk in 0..k {
                        for o in 0..dout {
                            for c in 0..din {
                                dw[kk * flat + o * din + c] += at(c, kk, o);
                            }
                        }
                    }
                });
            }
            if self.tracked(b2) {
                self.accumulate(grads, b2, |db| {
                    for o in 0..dout {
                        for c in 0..din {
                            db[o * din + c] += at(c, k, o);
                        }
                    }
                });
            }
        }
        if self.tracked(x) {
            let wt = transpose_filter_basis(self.value(w2).data(), self.value(b2).data(), k, dout, din);
            self.accumulate(grads, x, |dx| matmul_nt_into(&dy, &wt, dx, n, ka * dout, din));
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        let (rows, cols) = self.shape(v);
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(rows, cols));
        f(slot.data_mut());
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if any path reached it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`, zeros when `v` did not participate.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = tape.shape(v);
            Tensor::zeros(r, c)
        })
    }

    /// One gradient per stored parameter, zeros for parameters the loss does
    /// not depend on.
    pub fn param_grads(&self, tape: &Tape, store: &ParamStore) -> Vec<Tensor> {
        store
            .ids()
            .map(|id| match tape.params.iter().find(|(p, _)| *p == id) {
                Some(&(_, v)) => self.wrt(tape, v),
                None => {
                    let (r, c) = store.get(id).shape();
                    Tensor::zeros(r, c)
                }
            })
            .collect()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `w2` (`k x dout*din`) and `b2` (`1 x dout*din`) rearranged to
/// `din x (k+1)*dout`, with `b2` as basis `k`.
fn transpose_filter_basis(w2: &[f64], b2: &[f64], k: usize, dout: usize, din: usize) -> Vec<f64> {
    let ka = k + 1;
    let mut wt = vec![0.0; din * ka * dout];
    for kk in 0..ka {
        let src = if kk < k { &w2[kk * dout * din..(kk + 1) * dout * din] } else { b2 };
        for o in 0..dout {
            for c in 0..din {
                wt[c * ka * dout + kk * dout + o] = src[o * din + c];
            }
        }
    }
    wt
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
