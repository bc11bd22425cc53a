use std::collections::HashMap;

use super::kernels::{self, mm_nn, mm_nt, mm_tn};
use super::{Result, Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulT(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    MulConst(usize, Vec<f64>),
    Scale(usize, f64),
    Gelu(usize),
    Log(usize),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceRows {
        a: usize,
        start: usize,
    },
    SliceCols {
        a: usize,
        start: usize,
    },
    SelectRows {
        a: usize,
        rows: Vec<usize>,
    },
    MaskedFill {
        a: usize,
        mask: Vec<bool>,
    },
    SumAll(usize),
    MeanAll(usize),
    Gather {
        a: usize,
        idx: Vec<usize>,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records forward operations in topological (recording) order.
///
/// A tape is single-threaded; build one per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
    param_of: HashMap<usize, usize>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    by_node: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    param_of: HashMap<usize, usize>,
}

impl Gradients {
    /// Gradient of the loss with respect to a recorded node, zero if the node
    /// did not influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.by_node[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    /// `(param id, gradient)` for every parameter placed on the tape.
    pub fn params(&self) -> impl Iterator<Item = (usize, Tensor)> + '_ {
        let mut ids: Vec<_> = self.param_of.iter().map(|(&n, &p)| (p, n)).collect();
        ids.sort_unstable();
        ids.into_iter().map(move |(p, n)| (p, self.get(Var(n))))
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// Adds `contribution` into `slot[offset..]`, zero-filling a missing slot of length `len`.
fn add_into_at(slot: &mut Option<Vec<f64>>, len: usize, offset: usize, contribution: &[f64]) {
    let g = slot.get_or_insert_with(|| vec![0.0; len]);
    for (a, b) in g[offset..offset + contribution.len()].iter_mut().zip(contribution) {
        *a += b;
    }
}

fn add_into(slot: &mut Option<Vec<f64>>, contribution: &[f64]) {
    match slot {
        Some(g) => {
            for (a, b) in g.iter_mut().zip(contribution) {
                *a += b;
            }
        }
        None => *slot = Some(contribution.to_vec()),
    }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A non-parameter leaf (input or constant).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Places parameter `id` on the tape once; later calls return the same node.
    pub fn param(&mut self, id: usize, t: &Tensor) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(t.clone(), Op::Leaf);
        self.params.insert(id, v);
        self.param_of.insert(v.0, id);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let out = mm_nn(ta.data(), tb.data(), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a.0, b.0)))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.cols() {
            return Err(mismatch("matmul_t", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
        let out = mm_nt(ta.data(), tb.data(), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulT(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape().len() != 2 {
            return Err(mismatch("transpose", ta, ta));
        }
        let (m, n) = (ta.rows(), ta.cols());
        let d = ta.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::Transpose(a.0)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("add", ta, tb));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Add(a.0, b.0)))
    }

    /// Adds vector `b` (length = cols) to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.len() {
            return Err(mismatch("add_row", ta, tb));
        }
        let cols = ta.cols();
        let mut out = ta.data().to_vec();
        for row in out.chunks_mut(cols) {
            for (x, y) in row.iter_mut().zip(tb.data()) {
                *x += y;
            }
        }
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::AddRow(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("mul", ta, tb));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul(a.0, b.0)))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Vec<f64>) -> Result<Var> {
        let ta = self.value(a);
        if ta.len() != c.len() {
            return Err(TensorError::ShapeMismatch {
                op: "mul_const",
                lhs: ta.shape().to_vec(),
                rhs: vec![c.len()],
            });
        }
        let out: Vec<f64> = ta.data().iter().zip(&c).map(|(x, y)| x * y).collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::MulConst(a.0, c)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ta = self.value(a);
        let out: Vec<f64> = ta.data().iter().map(|x| x * s).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Scale(a.0, s))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out: Vec<f64> = ta.data().iter().map(|&x| kernels::gelu(x)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Gelu(a.0))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out: Vec<f64> = ta.data().iter().map(|x| x.ln()).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Log(a.0))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out = kernels::softmax_rows(ta.data(), ta.cols());
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Softmax(a.0))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        if tg.len() != tx.cols() || tb.len() != tx.cols() {
            return Err(mismatch("layer_norm", tx, tg));
        }
        let ln = kernels::layer_norm_rows(tx.data(), tg.data(), tb.data(), tx.cols());
        let shape = tx.shape().to_vec();
        Ok(self.push(
            Tensor::new(shape, ln.y)?,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat: ln.xhat,
                rstd: ln.rstd,
            },
        ))
    }

    /// Rows of `table` selected by `ids`, shape `[ids.len(), cols]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        let (rows, cols) = (tt.rows(), tt.cols());
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding",
                    index: id,
                    bound: rows,
                });
            }
            out.extend_from_slice(tt.row(id));
        }
        Ok(self.push(
            Tensor::matrix(ids.len(), cols, out)?,
            Op::Embedding {
                table: table.0,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows || t.shape().len() != 2 {
                return Err(mismatch("concat", self.value(parts[0]), t));
            }
            total += t.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let ids = parts.iter().map(|v| v.0).collect();
        Ok(self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols(ids)))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols || t.shape().len() != 2 {
                return Err(mismatch("concat_rows", self.value(parts[0]), t));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let ids = parts.iter().map(|v| v.0).collect();
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::ConcatRows(ids)))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if start + len > ta.rows() {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_rows",
                index: start + len,
                bound: ta.rows(),
            });
        }
        let cols = ta.cols();
        let out = ta.data()[start * cols..(start + len) * cols].to_vec();
        Ok(self.push(Tensor::matrix(len, cols, out)?, Op::SliceRows { a: a.0, start }))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if start + len > ta.cols() {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                bound: ta.cols(),
            });
        }
        let rows = ta.rows();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&ta.row(r)[start..start + len]);
        }
        Ok(self.push(
            Tensor::matrix(rows, len, out)?,
            Op::SliceCols { a: a.0, start },
        ))
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let cols = ta.cols();
        let mut out = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= ta.rows() {
                return Err(TensorError::IndexOutOfRange {
                    op: "select_rows",
                    index: r,
                    bound: ta.rows(),
                });
            }
            out.extend_from_slice(ta.row(r));
        }
        Ok(self.push(
            Tensor::matrix(rows.len(), cols, out)?,
            Op::SelectRows {
                a: a.0,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Replaces entries where `mask` is true with `value`; those entries get
    /// zero gradient.
    pub fn masked_fill(&mut self, a: Var, mask: &[bool], value: f64) -> Result<Var> {
        let ta = self.value(a);
        if ta.len() != mask.len() {
            return Err(TensorError::ShapeMismatch {
                op: "masked_fill",
                lhs: ta.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let out: Vec<f64> = ta
            .data()
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { value } else { x })
            .collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::MaskedFill {
                a: a.0,
                mask: mask.to_vec(),
            },
        ))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a.0))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(a.0))
    }

    /// Picks `a[r, idx[r]]` for every row, producing a vector.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        if idx.len() != ta.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "gather",
                lhs: ta.shape().to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let mut out = Vec::with_capacity(idx.len());
        for (r, &c) in idx.iter().enumerate() {
            if c >= ta.cols() {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather",
                    index: c,
                    bound: ta.cols(),
                });
            }
            out.push(ta.row(r)[c]);
        }
        Ok(self.push(
            Tensor::new(vec![idx.len()], out)?,
            Op::Gather {
                a: a.0,
                idx: idx.to_vec(),
            },
        ))
    }

    /// Fused log-softmax + negative log-likelihood, averaged over rows.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        if targets.len() != tl.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: tl.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let cols = tl.cols();
        let probs = kernels::softmax_rows(tl.data(), cols);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= cols {
                return Err(TensorError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: t,
                    bound: cols,
                });
            }
            let row = tl.row(r);
            loss += kernels::log_sum_exp(row) - row[t];
        }
        loss /= targets.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut g: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        g[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            self.backprop_node(i, &gi, &mut g);
            g[i] = Some(gi);
        }
        Ok(Gradients {
            by_node: g,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            param_of: self.param_of.clone(),
        })
    }

    fn backprop_node(&self, i: usize, gi: &[f64], g: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let val = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                add_into(&mut g[*a], &mm_nt(gi, tb.data(), m, n, k));
                add_into(&mut g[*b], &mm_tn(ta.data(), gi, k, m, n));
            }
            Op::MatMulT(a, b) => {
                let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                add_into(&mut g[*a], &mm_nn(gi, tb.data(), m, n, k));
                add_into(&mut g[*b], &mm_tn(gi, ta.data(), n, m, k));
            }
            Op::Transpose(a) => {
                let (m, n) = (val.rows(), val.cols());
                let mut out = vec![0.0; m * n];
                for r in 0..m {
                    for c in 0..n {
                        out[c * m + r] = gi[r * n + c];
                    }
                }
                add_into(&mut g[*a], &out);
            }
            Op::Add(a, b) => {
                add_into(&mut g[*a], gi);
                add_into(&mut g[*b], gi);
            }
            Op::AddRow(a, b) => {
                add_into(&mut g[*a], gi);
                let cols = val.cols();
                let mut gb = vec![0.0; cols];
                for row in gi.chunks(cols) {
                    for (x, y) in gb.iter_mut().zip(row) {
                        *x += y;
                    }
                }
                add_into(&mut g[*b], &gb);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let ga: Vec<f64> = gi.iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                let gb: Vec<f64> = gi.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                add_into(&mut g[*a], &ga);
                add_into(&mut g[*b], &gb);
            }
            Op::MulConst(a, c) => {
                let ga: Vec<f64> = gi.iter().zip(c).map(|(x, y)| x * y).collect();
                add_into(&mut g[*a], &ga);
            }
            Op::Scale(a, s) => {
                let ga: Vec<f64> = gi.iter().map(|x| x * s).collect();
                add_into(&mut g[*a], &ga);
            }
            Op::Gelu(a) => {
                let ta = &self.nodes[*a].value;
                let ga: Vec<f64> = gi
                    .iter()
                    .zip(ta.data())
                    .map(|(gv, &x)| gv * kernels::gelu_grad(x))
                    .collect();
                add_into(&mut g[*a], &ga);
            }
            Op::Log(a) => {
                let ta = &self.nodes[*a].value;
                let ga: Vec<f64> = gi.iter().zip(ta.data()).map(|(gv, x)| gv / x).collect();
                add_into(&mut g[*a], &ga);
            }
            Op::Softmax(a) => {
                let cols = val.cols();
                let mut ga = vec![0.0; gi.len()];
                for ((grow, yrow), out) in gi
                    .chunks(cols)
                    .zip(val.data().chunks(cols))
                    .zip(ga.chunks_mut(cols))
                {
                    let s = kernels::dot(grow, yrow);
                    for c in 0..cols {
                        out[c] = yrow[c] * (grow[c] - s);
                    }
                }
                add_into(&mut g[*a], &ga);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let cols = val.cols();
                let tg = &self.nodes[*gain].value;
                let mut gx = vec![0.0; gi.len()];
                let mut gg = vec![0.0; cols];
                let mut gb = vec![0.0; cols];
                for (r, grow) in gi.chunks(cols).enumerate() {
                    let xh = &xhat[r * cols..(r + 1) * cols];
                    let mut dxhat = vec![0.0; cols];
                    for c in 0..cols {
                        gg[c] += grow[c] * xh[c];
                        gb[c] += grow[c];
                        dxhat[c] = grow[c] * tg.data()[c];
                    }
                    let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
                    let mean_dx = kernels::dot(&dxhat, xh) / cols as f64;
                    for c in 0..cols {
                        gx[r * cols + c] = rstd[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
                    }
                }
                add_into(&mut g[*x], &gx);
                add_into(&mut g[*gain], &gg);
                add_into(&mut g[*bias], &gb);
            }
            Op::Embedding { table, ids } => {
                let tt = &self.nodes[*table].value;
                let cols = tt.cols();
                let mut gt = vec![0.0; tt.len()];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..cols {
                        gt[id * cols + c] += gi[r * cols + c];
                    }
                }
                add_into(&mut g[*table], &gt);
            }
            Op::ConcatCols(parts) => {
                let rows = val.rows();
                let total = val.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p].value.cols();
                    let mut gp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        gp.extend_from_slice(&gi[r * total + offset..r * total + offset + w]);
                    }
                    add_into(&mut g[p], &gp);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p].value.len();
                    add_into(&mut g[p], &gi[offset..offset + n]);
                    offset += n;
                }
            }
            Op::SliceRows { a, start } => {
                let ta = &self.nodes[*a].value;
                add_into_at(&mut g[*a], ta.len(), start * ta.cols(), gi);
            }
            Op::SliceCols { a, start } => {
                let ta = &self.nodes[*a].value;
                let (rows, cols, w) = (ta.rows(), ta.cols(), val.cols());
                let mut ga = vec![0.0; ta.len()];
                for r in 0..rows {
                    ga[r * cols + start..r * cols + start + w]
                        .copy_from_slice(&gi[r * w..(r + 1) * w]);
                }
                add_into(&mut g[*a], &ga);
            }
            Op::SelectRows { a, rows } => {
                let ta = &self.nodes[*a].value;
                let cols = ta.cols();
                let mut ga = vec![0.0; ta.len()];
                for (i, &r) in rows.iter().enumerate() {
                    for c in 0..cols {
                        ga[r * cols + c] += gi[i * cols + c];
                    }
                }
                add_into(&mut g[*a], &ga);
            }
            Op::MaskedFill { a, mask } => {
                let ga: Vec<f64> = gi
                    .iter()
                    .zip(mask)
                    .map(|(&x, &m)| if m { 0.0 } else { x })
                    .collect();
                add_into(&mut g[*a], &ga);
            }
            Op::SumAll(a) => {
                let n = self.nodes[*a].value.len();
                add_into(&mut g[*a], &vec![gi[0]; n]);
            }
            Op::MeanAll(a) => {
                let n = self.nodes[*a].value.len();
                add_into(&mut g[*a], &vec![gi[0] / n as f64; n]);
            }
            Op::Gather { a, idx } => {
                let ta = &self.nodes[*a].value;
                let cols = ta.cols();
                let mut ga = vec![0.0; ta.len()];
                for (r, &c) in idx.iter().enumerate() {
                    ga[r * cols + c] += gi[r];
                }
                add_into(&mut g[*a], &ga);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let cols = self.nodes[*logits].value.cols();
                let scale = gi[0] / targets.len() as f64;
                let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (r, &t) in targets.iter().enumerate() {
                    gl[r * cols + t] -= scale;
                }
                add_into(&mut g[*logits], &gl);
            }
        }
    }
}
