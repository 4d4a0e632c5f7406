use crate::{AdError, Elem, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

const LAYERNORM_EPS: Elem = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf { requires_grad: bool },
    Matmul(TensorId, TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, Elem),
    AddRow(TensorId, TensorId),
    Relu(TensorId),
    Sigmoid(TensorId),
    Tanh(TensorId),
    SoftmaxRows(TensorId),
    LayerNorm {
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
    },
    Transpose(TensorId),
    Reshape(TensorId),
    SliceCols {
        x: TensorId,
        start: usize,
    },
    ConcatCols(Vec<TensorId>),
    ConcatRows(Vec<TensorId>),
    SumAll(TensorId),
    Mse(TensorId, TensorId),
    Detach(#[allow(dead_code)] TensorId),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Single-threaded operation tape. Nodes are recorded in topological order;
/// `backward` visits them once in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> TensorId {
        self.nodes.push(Node { op, value });
        TensorId(self.nodes.len() - 1)
    }

    /// Records a constant input (no gradient).
    pub fn input(&mut self, value: Tensor) -> TensorId {
        self.push(
            Op::Leaf {
                requires_grad: false,
            },
            value,
        )
    }

    /// Records a differentiable leaf (parameter).
    pub fn param(&mut self, value: &Tensor) -> TensorId {
        self.push(
            Op::Leaf {
                requires_grad: true,
            },
            value.clone(),
        )
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of a leaf after `backward`; zeros if the loss never reached it.
    pub fn grad(&self, id: TensorId) -> Result<Tensor> {
        if !self.backward_done {
            return Err(AdError::NoGradients);
        }
        let v = self.value(id);
        Ok(self.grads[id.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(v.rows(), v.cols())))
    }

    // -- forward ops --------------------------------------------------------

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(AdError::Shape(format!(
                "matmul {}x{} by {}x{}",
                va.rows(),
                va.cols(),
                vb.rows(),
                vb.cols()
            )));
        }
        let value = matmul(va, vb);
        Ok(self.push(Op::Matmul(a, b), value))
    }

    fn elementwise_pair(&self, a: TensorId, b: TensorId, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(AdError::Shape(format!(
                "{what} on {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise_pair(a, b, "add")?;
        let value = zip(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise_pair(a, b, "sub")?;
        let value = zip(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise_pair(a, b, "mul")?;
        let value = zip(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn scale(&mut self, a: TensorId, c: Elem) -> TensorId {
        let value = map(self.value(a), |x| x * c);
        self.push(Op::Scale(a, c), value)
    }

    /// Adds a 1xD row vector to every row of an MxD tensor.
    pub fn add_row(&mut self, a: TensorId, row: TensorId) -> Result<TensorId> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(AdError::Shape(format!(
                "add_row {:?} + {:?}",
                va.shape(),
                vr.shape()
            )));
        }
        let mut value = va.clone();
        for r in 0..value.rows() {
            for c in 0..value.cols() {
                let v = value.get(r, c) + vr.get(0, c);
                value.set(r, c, v);
            }
        }
        Ok(self.push(Op::AddRow(a, row), value))
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let value = map(self.value(a), |x| x.max(0.0));
        self.push(Op::Relu(a), value)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let value = map(self.value(a), |x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid(a), value)
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let value = map(self.value(a), |x| x.tanh());
        self.push(Op::Tanh(a), value)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: TensorId) -> TensorId {
        let va = self.value(a);
        let mut value = va.clone();
        for r in 0..va.rows() {
            let mut mx = Elem::NEG_INFINITY;
            for c in 0..va.cols() {
                mx = mx.max(va.get(r, c));
            }
            let mut sum = 0.0;
            for c in 0..va.cols() {
                let e = (va.get(r, c) - mx).exp();
                value.set(r, c, e);
                sum += e;
            }
            for c in 0..va.cols() {
                value.set(r, c, value.get(r, c) / sum);
            }
        }
        self.push(Op::SoftmaxRows(a), value)
    }

    /// Row-wise normalization to zero mean / unit variance with an affine
    /// transform; `gain` and `bias` are 1xD.
    pub fn layernorm(&mut self, x: TensorId, gain: TensorId, bias: TensorId) -> Result<TensorId> {
        let (vx, vg, vb) = (self.value(x), self.value(gain), self.value(bias));
        let d = vx.cols();
        if vg.shape() != [1, d] || vb.shape() != [1, d] {
            return Err(AdError::Shape(format!(
                "layernorm gain/bias must be 1x{d}, got {:?} and {:?}",
                vg.shape(),
                vb.shape()
            )));
        }
        let mut value = vx.clone();
        for r in 0..vx.rows() {
            let (mean, var) = row_moments(vx, r);
            let inv = 1.0 / (var + LAYERNORM_EPS).sqrt();
            for c in 0..d {
                let xhat = (vx.get(r, c) - mean) * inv;
                value.set(r, c, vg.get(0, c) * xhat + vb.get(0, c));
            }
        }
        Ok(self.push(Op::LayerNorm { x, gain, bias }, value))
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let va = self.value(a);
        let mut value = Tensor::zeros(va.cols(), va.rows());
        for r in 0..va.rows() {
            for c in 0..va.cols() {
                value.set(c, r, va.get(r, c));
            }
        }
        self.push(Op::Transpose(a), value)
    }

    /// Reinterprets the buffer with a new shape of equal length.
    pub fn reshape(&mut self, a: TensorId, rows: usize, cols: usize) -> Result<TensorId> {
        let value = self.value(a).reshaped(rows, cols)?;
        Ok(self.push(Op::Reshape(a), value))
    }

    pub fn slice_cols(&mut self, x: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let vx = self.value(x);
        if start + len > vx.cols() || len == 0 {
            return Err(AdError::Shape(format!(
                "slice_cols [{start}, {}) of {:?}",
                start + len,
                vx.shape()
            )));
        }
        let mut value = Tensor::zeros(vx.rows(), len);
        for r in 0..vx.rows() {
            for c in 0..len {
                value.set(r, c, vx.get(r, start + c));
            }
        }
        Ok(self.push(Op::SliceCols { x, start }, value))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(AdError::Shape("concat_cols of nothing".into()));
        }
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(AdError::Shape("concat_cols row mismatch".into()));
            }
            cols += self.value(p).cols();
        }
        let mut value = Tensor::zeros(rows, cols);
        let mut at = 0;
        for &p in parts {
            let vp = self.value(p);
            for r in 0..rows {
                for c in 0..vp.cols() {
                    value.set(r, at + c, vp.get(r, c));
                }
            }
            at += vp.cols();
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), value))
    }

    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(AdError::Shape("concat_rows of nothing".into()));
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(AdError::Shape("concat_rows col mismatch".into()));
            }
            rows += self.value(p).rows();
        }
        let mut value = Tensor::zeros(rows, cols);
        let mut at = 0;
        for &p in parts {
            let vp = self.value(p);
            for r in 0..vp.rows() {
                for c in 0..cols {
                    value.set(at + r, c, vp.get(r, c));
                }
            }
            at += vp.rows();
        }
        Ok(self.push(Op::ConcatRows(parts.to_vec()), value))
    }

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let s: Elem = self.value(a).data().iter().sum();
        self.push(Op::SumAll(a), Tensor::scalar(s))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise_pair(a, b, "mse")?;
        let (va, vb) = (self.value(a), self.value(b));
        let n = va.len() as Elem;
        let s: Elem = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(Op::Mse(a, b), Tensor::scalar(s / n)))
    }

    /// Gradient stop: the value flows forward, nothing flows back.
    pub fn detach(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).clone();
        self.push(Op::Detach(a), value)
    }

    // -- backward -----------------------------------------------------------

    /// Backward from a scalar loss.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(AdError::NonScalarLoss);
        }
        self.backward_seeded(vec![(loss, Tensor::scalar(1.0))])
    }

    /// Backward from explicit output seeds; used to chain externally computed
    /// gradients (for example energy gradients over vertex positions) into
    /// the network, optionally together with on-tape scalar losses.
    pub fn backward_seeded(&mut self, seeds: Vec<(TensorId, Tensor)>) -> Result<()> {
        if self.backward_done {
            return Err(AdError::BackwardTwice);
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (id, seed) in seeds {
            if self.value(id).shape() != seed.shape() {
                return Err(AdError::Shape(format!(
                    "seed shape {:?} vs value {:?}",
                    seed.shape(),
                    self.value(id).shape()
                )));
            }
            accumulate(&mut adj[id.0], &seed);
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = adj[i].take() else { continue };
            // Reborrow for the dispatch, then write back leaf grads.
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf { requires_grad } => {
                    if requires_grad {
                        self.grads.resize(self.nodes.len(), None);
                        accumulate(&mut self.grads[i], &g);
                    }
                }
                Op::Matmul(a, b) => {
                    let ga = matmul_nt(&g, self.value(b));
                    let gb = matmul_tn(self.value(a), &g);
                    accumulate(&mut adj[a.0], &ga);
                    accumulate(&mut adj[b.0], &gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj[a.0], &g);
                    accumulate(&mut adj[b.0], &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj[a.0], &g);
                    accumulate_scaled(&mut adj[b.0], &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let ga = zip(&g, self.value(b), |x, y| x * y);
                    let gb = zip(&g, self.value(a), |x, y| x * y);
                    accumulate(&mut adj[a.0], &ga);
                    accumulate(&mut adj[b.0], &gb);
                }
                Op::Scale(a, c) => {
                    accumulate_scaled(&mut adj[a.0], &g, c);
                }
                Op::AddRow(a, row) => {
                    accumulate(&mut adj[a.0], &g);
                    let mut gr = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            let v = gr.get(0, c) + g.get(r, c);
                            gr.set(0, c, v);
                        }
                    }
                    accumulate(&mut adj[row.0], &gr);
                }
                Op::Relu(a) => {
                    let ga = zip(&g, self.value(a), |gi, xi| if xi > 0.0 { gi } else { 0.0 });
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let ga = zip(&g, y, |gi, yi| gi * yi * (1.0 - yi));
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let ga = zip(&g, y, |gi, yi| gi * (1.0 - yi * yi));
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let mut dot = 0.0;
                        for c in 0..y.cols() {
                            dot += g.get(r, c) * y.get(r, c);
                        }
                        for c in 0..y.cols() {
                            ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::LayerNorm { x, gain, bias } => {
                    let vx = self.value(x).clone();
                    let vg = self.value(gain).clone();
                    let d = vx.cols();
                    let mut gx = Tensor::zeros(vx.rows(), d);
                    let mut ggain = Tensor::zeros(1, d);
                    let mut gbias = Tensor::zeros(1, d);
                    for r in 0..vx.rows() {
                        let (mean, var) = row_moments(&vx, r);
                        let inv = 1.0 / (var + LAYERNORM_EPS).sqrt();
                        let mut mean_dxhat = 0.0;
                        let mut mean_dxhat_xhat = 0.0;
                        let mut xhat = vec![0.0 as Elem; d];
                        let mut dxhat = vec![0.0 as Elem; d];
                        for c in 0..d {
                            xhat[c] = (vx.get(r, c) - mean) * inv;
                            dxhat[c] = g.get(r, c) * vg.get(0, c);
                            mean_dxhat += dxhat[c];
                            mean_dxhat_xhat += dxhat[c] * xhat[c];
                            ggain.set(0, c, ggain.get(0, c) + g.get(r, c) * xhat[c]);
                            gbias.set(0, c, gbias.get(0, c) + g.get(r, c));
                        }
                        mean_dxhat /= d as Elem;
                        mean_dxhat_xhat /= d as Elem;
                        for c in 0..d {
                            gx.set(
                                r,
                                c,
                                inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat),
                            );
                        }
                    }
                    accumulate(&mut adj[x.0], &gx);
                    accumulate(&mut adj[gain.0], &ggain);
                    accumulate(&mut adj[bias.0], &gbias);
                }
                Op::Transpose(a) => {
                    let mut ga = Tensor::zeros(g.cols(), g.rows());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            ga.set(c, r, g.get(r, c));
                        }
                    }
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Reshape(a) => {
                    let va = self.value(a);
                    let ga = g.reshaped(va.rows(), va.cols()).expect("same length");
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::SliceCols { x, start } => {
                    let vx = self.value(x);
                    let mut ga = Tensor::zeros(vx.rows(), vx.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            ga.set(r, start + c, g.get(r, c));
                        }
                    }
                    accumulate(&mut adj[x.0], &ga);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let vp = self.value(p);
                        let mut gp = Tensor::zeros(vp.rows(), vp.cols());
                        for r in 0..vp.rows() {
                            for c in 0..vp.cols() {
                                gp.set(r, c, g.get(r, at + c));
                            }
                        }
                        at += vp.cols();
                        accumulate(&mut adj[p.0], &gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let vp = self.value(p);
                        let mut gp = Tensor::zeros(vp.rows(), vp.cols());
                        for r in 0..vp.rows() {
                            for c in 0..vp.cols() {
                                gp.set(r, c, g.get(at + r, c));
                            }
                        }
                        at += vp.rows();
                        accumulate(&mut adj[p.0], &gp);
                    }
                }
                Op::SumAll(a) => {
                    let va = self.value(a);
                    let gs = g.scalar_value();
                    let ga = map(va, |_| gs);
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Mse(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let n = va.len() as Elem;
                    let gs = g.scalar_value();
                    let ga = zip(va, vb, |x, y| gs * 2.0 * (x - y) / n);
                    accumulate(&mut adj[a.0], &ga);
                    accumulate_scaled(&mut adj[b.0], &ga, -1.0);
                }
                Op::Detach(_) => {}
            }
        }
        self.grads.resize(self.nodes.len(), None);
        self.backward_done = true;
        Ok(())
    }
}

// -- helpers ----------------------------------------------------------------

fn map(a: &Tensor, f: impl Fn(Elem) -> Elem) -> Tensor {
    let mut out = a.clone();
    for v in out.data_mut() {
        *v = f(*v);
    }
    out
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(Elem, Elem) -> Elem) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let mut out = a.clone();
    for (o, y) in out.data_mut().iter_mut().zip(b.data()) {
        *o = f(*o, *y);
    }
    out
}

fn row_moments(x: &Tensor, r: usize) -> (Elem, Elem) {
    let d = x.cols() as Elem;
    let mut mean = 0.0;
    for c in 0..x.cols() {
        mean += x.get(r, c);
    }
    mean /= d;
    let mut var = 0.0;
    for c in 0..x.cols() {
        let dv = x.get(r, c) - mean;
        var += dv * dv;
    }
    (mean, var / d)
}

fn accumulate(slot: &mut Option<Tensor>, g: &Tensor) {
    match slot {
        Some(t) => {
            for (a, b) in t.data_mut().iter_mut().zip(g.data()) {
                *a += *b;
            }
        }
        None => *slot = Some(g.clone()),
    }
}

fn accumulate_scaled(slot: &mut Option<Tensor>, g: &Tensor, c: Elem) {
    match slot {
        Some(t) => {
            for (a, b) in t.data_mut().iter_mut().zip(g.data()) {
                *a += *b * c;
            }
        }
        None => *slot = Some(map(g, |v| v * c)),
    }
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(m, n);
    for i in 0..m {
        for p in 0..k {
            let av = a.get(i, p);
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                let v = out.get(i, j) + av * b.get(p, j);
                out.set(i, j, v);
            }
        }
    }
    out
}

/// a * b^T
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    debug_assert_eq!(k, b.cols());
    let mut out = Tensor::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.get(i, p) * b.get(j, p);
            }
            out.set(i, j, acc);
        }
    }
    out
}

/// a^T * b
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.cols(), a.rows(), b.cols());
    debug_assert_eq!(k, b.rows());
    let mut out = Tensor::zeros(m, n);
    for p in 0..k {
        for i in 0..m {
            let av = a.get(p, i);
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                let v = out.get(i, j) + av * b.get(p, j);
                out.set(i, j, v);
            }
        }
    }
    out
}

// -- composite building blocks ----------------------------------------------

/// x * W + b  (x: MxK, w: KxN, b: 1xN)
pub fn linear(tape: &mut Tape, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

/// Multi-head scaled dot-product attention over already-projected Q, K, V,
/// with head concatenation and an output projection.
pub fn softmax_attention(
    tape: &mut Tape,
    q: TensorId,
    k: TensorId,
    v: TensorId,
    w_out: TensorId,
    heads: usize,
) -> Result<TensorId> {
    let d = tape.value(q).cols();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(AdError::Shape(format!(
            "model dim {d} not divisible by {heads} heads"
        )));
    }
    if tape.value(k).cols() != d || tape.value(v).cols() != d {
        return Err(AdError::Shape("attention q/k/v width mismatch".into()));
    }
    if tape.value(k).rows() != tape.value(v).rows() {
        return Err(AdError::Shape("attention k/v length mismatch".into()));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as Elem).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh);
        let scores = tape.matmul(qh, kt)?;
        let scaled = tape.scale(scores, scale);
        let attn = tape.softmax_rows(scaled);
        outs.push(tape.matmul(attn, vh)?);
    }
    let cat = tape.concat_cols(&outs)?;
    tape.matmul(cat, w_out)
}

/// Weight handles for one GRU cell.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights {
    pub w_xz: TensorId,
    pub w_hz: TensorId,
    pub b_z: TensorId,
    pub w_xr: TensorId,
    pub w_hr: TensorId,
    pub b_r: TensorId,
    pub w_xn: TensorId,
    pub w_hn: TensorId,
    pub b_n: TensorId,
}

/// Standard GRU update: h' = z . h + (1 - z) . tanh(x Wxn + (r . h) Whn + bn),
/// with update gate z and reset gate r.
pub fn gru_cell(tape: &mut Tape, x: TensorId, h: TensorId, w: &GruWeights) -> Result<TensorId> {
    let xz = tape.matmul(x, w.w_xz)?;
    let hz = tape.matmul(h, w.w_hz)?;
    let zsum = tape.add(xz, hz)?;
    let zpre = tape.add(zsum, w.b_z)?;
    let z = tape.sigmoid(zpre);

    let xr = tape.matmul(x, w.w_xr)?;
    let hr = tape.matmul(h, w.w_hr)?;
    let rsum = tape.add(xr, hr)?;
    let rpre = tape.add(rsum, w.b_r)?;
    let r = tape.sigmoid(rpre);

    let rh = tape.mul(r, h)?;
    let xn = tape.matmul(x, w.w_xn)?;
    let hn = tape.matmul(rh, w.w_hn)?;
    let nsum = tape.add(xn, hn)?;
    let npre = tape.add(nsum, w.b_n)?;
    let n = tape.tanh(npre);

    let zh = tape.mul(z, h)?;
    let ones = tape.input(Tensor::ones(
        tape.value(z).rows(),
        tape.value(z).cols(),
    ));
    let one_minus_z = tape.sub(ones, z)?;
    let zn = tape.mul(one_minus_z, n)?;
    tape.add(zh, zn)
}
