//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Every operation appends one node to the tape; `Tape::backward` sweeps the
//! nodes in reverse creation order and accumulates gradients. The tape is
//! single-owner: one training step builds one tape, reads the loss value,
//! consumes the tape via `backward`, and starts fresh for the next step.
//! Accumulation order is fixed by creation order, so gradients are
//! bit-reproducible.

use super::matrix::{l2_distance, Matrix};
use super::NumericError;

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

/// Distances below this are treated as zero when dividing by a norm in the
/// backward pass (subgradient 0 at the kink of the Euclidean norm).
const NORM_EPS: f64 = 1e-300;

enum Op {
    Input,
    MatMul(VarId, VarId),
    Add(VarId, VarId),
    Sub(VarId, VarId),
    /// Broadcast a 1xC row over every row of the left operand.
    AddRow(VarId, VarId),
    Affine {
        x: VarId,
        mul: f64,
    },
    Relu(VarId),
    LeakyRelu {
        x: VarId,
        slope: f64,
    },
    ConcatCols(VarId, VarId),
    StackRows(Vec<VarId>),
    GatherRows {
        x: VarId,
        indices: Vec<usize>,
    },
    /// Inverse of gather: row r of the input lands at `indices[r]` of an
    /// otherwise-zero output. Indices must be distinct.
    ScatterRows {
        x: VarId,
        indices: Vec<usize>,
    },
    SegmentSum {
        x: VarId,
        segments: Vec<usize>,
    },
    SegmentMax {
        x: VarId,
        /// argmax row per (segment, column), for gradient routing.
        argmax: Vec<usize>,
    },
    SegmentSoftmax {
        x: VarId,
        segments: Vec<usize>,
    },
    /// out[r, c] = x[r, c] * col[r, 0]
    MulRowsByCol {
        x: VarId,
        col: VarId,
    },
    /// out[i, j] = || a.row(i) - b.row(j) ||_2
    PairwiseL2(VarId, VarId),
    /// Frobenius norm of the whole matrix; for a row vector this is the L2
    /// norm. Output is 1x1.
    Norm2(VarId),
    /// sum(x .* mask) as a 1x1 matrix; the mask is a plain constant.
    MaskedSum {
        x: VarId,
        mask: Vec<f64>,
    },
}

struct Node {
    op: Op,
    value: Matrix,
}

/// Gradients produced by `Tape::backward`, indexed by the `VarId`s of the
/// consumed tape.
pub struct Gradients {
    grads: Vec<Matrix>,
}

impl Gradients {
    pub fn get(&self, id: VarId) -> &Matrix {
        &self.grads[id.0]
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: VarId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Matrix) -> VarId {
        let id = VarId(self.nodes.len());
        self.nodes.push(Node { op, value });
        id
    }

    /// Record a leaf (input or parameter).
    pub fn input(&mut self, value: Matrix) -> VarId {
        self.push(Op::Input, value)
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId, NumericError> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId, NumericError> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId, NumericError> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), value))
    }

    /// x + row broadcast over rows; `row` must be 1 x x.cols().
    pub fn add_row(&mut self, x: VarId, row: VarId) -> Result<VarId, NumericError> {
        let (xr, xc) = self.value(x).shape();
        let (rr, rc) = self.value(row).shape();
        if rr != 1 || rc != xc {
            return Err(NumericError::ShapeMismatch(format!(
                "add_row: {}x{} + {}x{}",
                xr, xc, rr, rc
            )));
        }
        let mut value = self.value(x).clone();
        for r in 0..xr {
            let base = self.value(row).row(0).to_vec();
            for (v, b) in value.row_mut(r).iter_mut().zip(&base) {
                *v += b;
            }
        }
        Ok(self.push(Op::AddRow(x, row), value))
    }

    /// mul * x + add, elementwise with constants.
    pub fn affine(&mut self, x: VarId, mul: f64, add: f64) -> VarId {
        let value = self.value(x).map(|v| mul * v + add);
        self.push(Op::Affine { x, mul }, value)
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), value)
    }

    pub fn leaky_relu(&mut self, x: VarId, slope: f64) -> VarId {
        let value = self.value(x).map(|v| if v >= 0.0 { v } else { slope * v });
        self.push(Op::LeakyRelu { x, slope }, value)
    }

    pub fn concat_cols(&mut self, a: VarId, b: VarId) -> Result<VarId, NumericError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ar != br {
            return Err(NumericError::ShapeMismatch(format!(
                "concat_cols: {}x{} || {}x{}",
                ar, ac, br, bc
            )));
        }
        let mut value = Matrix::zeros(ar, ac + bc);
        for r in 0..ar {
            value.row_mut(r)[..ac].copy_from_slice(self.value(a).row(r));
            value.row_mut(r)[ac..].copy_from_slice(self.value(b).row(r));
        }
        Ok(self.push(Op::ConcatCols(a, b), value))
    }

    /// Vertically stack parts (all with equal column counts).
    pub fn stack_rows(&mut self, parts: &[VarId]) -> Result<VarId, NumericError> {
        if parts.is_empty() {
            return Err(NumericError::ShapeMismatch("stack_rows: no parts".into()));
        }
        let cols = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut value = Matrix::zeros(total, cols);
        let mut at = 0;
        for &p in parts {
            let m = self.value(p);
            if m.cols() != cols {
                return Err(NumericError::ShapeMismatch(format!(
                    "stack_rows: {} cols vs {}",
                    m.cols(),
                    cols
                )));
            }
            for r in 0..m.rows() {
                value.row_mut(at).copy_from_slice(m.row(r));
                at += 1;
            }
        }
        Ok(self.push(Op::StackRows(parts.to_vec()), value))
    }

    pub fn gather_rows(&mut self, x: VarId, indices: &[usize]) -> Result<VarId, NumericError> {
        let m = self.value(x);
        let mut value = Matrix::zeros(indices.len(), m.cols());
        for (r, &i) in indices.iter().enumerate() {
            if i >= m.rows() {
                return Err(NumericError::ShapeMismatch(format!(
                    "gather_rows: index {} out of {} rows",
                    i,
                    m.rows()
                )));
            }
            value.row_mut(r).copy_from_slice(self.value(x).row(i));
        }
        Ok(self.push(
            Op::GatherRows {
                x,
                indices: indices.to_vec(),
            },
            value,
        ))
    }

    pub fn scatter_rows(
        &mut self,
        x: VarId,
        indices: &[usize],
        out_rows: usize,
    ) -> Result<VarId, NumericError> {
        let m = self.value(x);
        if indices.len() != m.rows() {
            return Err(NumericError::ShapeMismatch(format!(
                "scatter_rows: {} indices for {} rows",
                indices.len(),
                m.rows()
            )));
        }
        let mut seen = vec![false; out_rows];
        let mut value = Matrix::zeros(out_rows, m.cols());
        for (r, &i) in indices.iter().enumerate() {
            if i >= out_rows || seen[i] {
                return Err(NumericError::ShapeMismatch(format!(
                    "scatter_rows: bad or duplicate index {}",
                    i
                )));
            }
            seen[i] = true;
            value.row_mut(i).copy_from_slice(self.value(x).row(r));
        }
        Ok(self.push(
            Op::ScatterRows {
                x,
                indices: indices.to_vec(),
            },
            value,
        ))
    }

    /// Row r of the input is added into output row segments[r]. Empty
    /// segments yield zero rows.
    pub fn segment_sum(
        &mut self,
        x: VarId,
        segments: &[usize],
        n_segments: usize,
    ) -> Result<VarId, NumericError> {
        let m = self.value(x);
        check_segments(segments, m.rows(), n_segments)?;
        let mut value = Matrix::zeros(n_segments, m.cols());
        for (r, &s) in segments.iter().enumerate() {
            let row = self.value(x).row(r).to_vec();
            for (o, v) in value.row_mut(s).iter_mut().zip(&row) {
                *o += v;
            }
        }
        Ok(self.push(
            Op::SegmentSum {
                x,
                segments: segments.to_vec(),
            },
            value,
        ))
    }

    /// Elementwise max per segment. Every segment must be non-empty. Gradient
    /// routes to the argmax row per column; ties go to the lowest row index.
    pub fn segment_max(
        &mut self,
        x: VarId,
        segments: &[usize],
        n_segments: usize,
    ) -> Result<VarId, NumericError> {
        let m = self.value(x);
        check_segments(segments, m.rows(), n_segments)?;
        let cols = m.cols();
        let mut value = Matrix::zeros(n_segments, cols);
        let mut argmax = vec![usize::MAX; n_segments * cols];
        for (r, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let v = m.get(r, c);
                let slot = s * cols + c;
                if argmax[slot] == usize::MAX || v > value.get(s, c) {
                    value.set(s, c, v);
                    argmax[slot] = r;
                }
            }
        }
        if let Some(s) = argmax
            .iter()
            .position(|&a| a == usize::MAX)
            .map(|i| i / cols.max(1))
        {
            return Err(NumericError::EmptySegment(s));
        }
        Ok(self.push(Op::SegmentMax { x, argmax }, value))
    }

    /// Softmax within each segment of a column vector of logits (n x 1),
    /// computed with per-segment max subtraction. Every segment must be
    /// non-empty.
    pub fn segment_softmax(
        &mut self,
        x: VarId,
        segments: &[usize],
        n_segments: usize,
    ) -> Result<VarId, NumericError> {
        let m = self.value(x);
        if m.cols() != 1 {
            return Err(NumericError::ShapeMismatch(format!(
                "segment_softmax expects a column vector, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        check_segments(segments, m.rows(), n_segments)?;
        let mut seg_max = vec![f64::NEG_INFINITY; n_segments];
        for (r, &s) in segments.iter().enumerate() {
            seg_max[s] = seg_max[s].max(m.get(r, 0));
        }
        if let Some(s) = seg_max.iter().position(|v| v.is_infinite() && *v < 0.0) {
            return Err(NumericError::EmptySegment(s));
        }
        let mut seg_denom = vec![0.0; n_segments];
        let mut exps = vec![0.0; m.rows()];
        for (r, &s) in segments.iter().enumerate() {
            let e = (m.get(r, 0) - seg_max[s]).exp();
            exps[r] = e;
            seg_denom[s] += e;
        }
        let mut value = Matrix::zeros(m.rows(), 1);
        for (r, &s) in segments.iter().enumerate() {
            value.set(r, 0, exps[r] / seg_denom[s]);
        }
        Ok(self.push(
            Op::SegmentSoftmax {
                x,
                segments: segments.to_vec(),
            },
            value,
        ))
    }

    /// Scale row r of x by col[r, 0].
    pub fn mul_rows_by_col(&mut self, x: VarId, col: VarId) -> Result<VarId, NumericError> {
        let (xr, _) = self.value(x).shape();
        let (cr, cc) = self.value(col).shape();
        if cc != 1 || cr != xr {
            return Err(NumericError::ShapeMismatch(format!(
                "mul_rows_by_col: {} rows vs {}x{} column",
                xr, cr, cc
            )));
        }
        let mut value = self.value(x).clone();
        for r in 0..xr {
            let s = self.value(col).get(r, 0);
            for v in value.row_mut(r) {
                *v *= s;
            }
        }
        Ok(self.push(Op::MulRowsByCol { x, col }, value))
    }

    /// out[i, j] = Euclidean distance between row i of a and row j of b.
    pub fn pairwise_l2(&mut self, a: VarId, b: VarId) -> Result<VarId, NumericError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != bc {
            return Err(NumericError::ShapeMismatch(format!(
                "pairwise_l2: {}x{} vs {}x{}",
                ar, ac, br, bc
            )));
        }
        let mut value = Matrix::zeros(ar, br);
        for i in 0..ar {
            for j in 0..br {
                value.set(i, j, l2_distance(self.value(a).row(i), self.value(b).row(j)));
            }
        }
        Ok(self.push(Op::PairwiseL2(a, b), value))
    }

    /// Frobenius norm (L2 norm for vectors) as a 1x1 matrix.
    pub fn norm2(&mut self, x: VarId) -> VarId {
        let value = Matrix::scalar(self.value(x).frobenius_norm());
        self.push(Op::Norm2(x), value)
    }

    /// sum(x .* mask) as a 1x1 matrix. The mask is a constant the same shape
    /// as x, flattened row-major.
    pub fn masked_sum(&mut self, x: VarId, mask: &[f64]) -> Result<VarId, NumericError> {
        let m = self.value(x);
        if mask.len() != m.rows() * m.cols() {
            return Err(NumericError::ShapeMismatch(format!(
                "masked_sum: mask of {} entries for {}x{}",
                mask.len(),
                m.rows(),
                m.cols()
            )));
        }
        let total: f64 = m.data().iter().zip(mask).map(|(&v, &w)| v * w).sum();
        Ok(self.push(
            Op::MaskedSum {
                x,
                mask: mask.to_vec(),
            },
            Matrix::scalar(total),
        ))
    }

    /// Sum of all entries as a 1x1 matrix.
    pub fn sum_all(&mut self, x: VarId) -> VarId {
        let m = self.value(x);
        let mask = vec![1.0; m.rows() * m.cols()];
        self.masked_sum(x, &mask).expect("mask sized from x")
    }

    /// Reverse sweep from a scalar loss node. Consumes the tape; afterwards
    /// node values are gone and only the gradients remain.
    pub fn backward(self, loss: VarId) -> Result<Gradients, NumericError> {
        let (lr, lc) = self.nodes[loss.0].value.shape();
        if (lr, lc) != (1, 1) {
            return Err(NumericError::NonScalarLoss(lr, lc));
        }
        let mut grads: Vec<Matrix> = self
            .nodes
            .iter()
            .map(|n| Matrix::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[loss.0] = Matrix::scalar(1.0);

        for idx in (0..self.nodes.len()).rev() {
            let g = std::mem::replace(&mut grads[idx], Matrix::zeros(0, 0));
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(&self.nodes[b.0].value)?;
                    let db = self.nodes[a.0].value.matmul_tn(&g)?;
                    grads[a.0].axpy(1.0, &da);
                    grads[b.0].axpy(1.0, &db);
                }
                Op::Add(a, b) => {
                    grads[a.0].axpy(1.0, &g);
                    grads[b.0].axpy(1.0, &g);
                }
                Op::Sub(a, b) => {
                    grads[a.0].axpy(1.0, &g);
                    grads[b.0].axpy(-1.0, &g);
                }
                Op::AddRow(x, row) => {
                    grads[x.0].axpy(1.0, &g);
                    let cols = g.cols();
                    for r in 0..g.rows() {
                        for c in 0..cols {
                            let v = grads[row.0].get(0, c) + g.get(r, c);
                            grads[row.0].set(0, c, v);
                        }
                    }
                }
                Op::Affine { x, mul } => {
                    grads[x.0].axpy(*mul, &g);
                }
                Op::Relu(x) => {
                    let input = &self.nodes[x.0].value;
                    for i in 0..g.data().len() {
                        if input.data()[i] > 0.0 {
                            grads[x.0].data_mut()[i] += g.data()[i];
                        }
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let input = &self.nodes[x.0].value;
                    for i in 0..g.data().len() {
                        let f = if input.data()[i] >= 0.0 { 1.0 } else { *slope };
                        grads[x.0].data_mut()[i] += f * g.data()[i];
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ac = self.nodes[a.0].value.cols();
                    for r in 0..g.rows() {
                        for c in 0..ac {
                            let v = grads[a.0].get(r, c) + g.get(r, c);
                            grads[a.0].set(r, c, v);
                        }
                        for c in ac..g.cols() {
                            let v = grads[b.0].get(r, c - ac) + g.get(r, c);
                            grads[b.0].set(r, c - ac, v);
                        }
                    }
                }
                Op::StackRows(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let rows = self.nodes[p.0].value.rows();
                        for r in 0..rows {
                            let grow = g.row(at).to_vec();
                            for (o, v) in grads[p.0].row_mut(r).iter_mut().zip(&grow) {
                                *o += v;
                            }
                            at += 1;
                        }
                    }
                }
                Op::GatherRows { x, indices } => {
                    for (r, &i) in indices.iter().enumerate() {
                        let grow = g.row(r).to_vec();
                        for (o, v) in grads[x.0].row_mut(i).iter_mut().zip(&grow) {
                            *o += v;
                        }
                    }
                }
                Op::ScatterRows { x, indices } => {
                    for (r, &i) in indices.iter().enumerate() {
                        let grow = g.row(i).to_vec();
                        for (o, v) in grads[x.0].row_mut(r).iter_mut().zip(&grow) {
                            *o += v;
                        }
                    }
                }
                Op::SegmentSum { x, segments } => {
                    for (r, &s) in segments.iter().enumerate() {
                        let grow = g.row(s).to_vec();
                        for (o, v) in grads[x.0].row_mut(r).iter_mut().zip(&grow) {
                            *o += v;
                        }
                    }
                }
                Op::SegmentMax { x, argmax } => {
                    let cols = g.cols();
                    for s in 0..g.rows() {
                        for c in 0..cols {
                            let r = argmax[s * cols + c];
                            let v = grads[x.0].get(r, c) + g.get(s, c);
                            grads[x.0].set(r, c, v);
                        }
                    }
                }
                Op::SegmentSoftmax { x, segments } => {
                    // dx_i = y_i * (g_i - sum_j in segment g_j y_j)
                    let y = &node.value;
                    let n_segments = segments.iter().max().map_or(0, |&m| m + 1);
                    let mut seg_dot = vec![0.0; n_segments];
                    for (r, &s) in segments.iter().enumerate() {
                        seg_dot[s] += g.get(r, 0) * y.get(r, 0);
                    }
                    for (r, &s) in segments.iter().enumerate() {
                        let v = grads[x.0].get(r, 0) + y.get(r, 0) * (g.get(r, 0) - seg_dot[s]);
                        grads[x.0].set(r, 0, v);
                    }
                }
                Op::MulRowsByCol { x, col } => {
                    let xv = &self.nodes[x.0].value;
                    let cv = &self.nodes[col.0].value;
                    for r in 0..g.rows() {
                        let s = cv.get(r, 0);
                        let mut dot = 0.0;
                        for c in 0..g.cols() {
                            let v = grads[x.0].get(r, c) + s * g.get(r, c);
                            grads[x.0].set(r, c, v);
                            dot += g.get(r, c) * xv.get(r, c);
                        }
                        let v = grads[col.0].get(r, 0) + dot;
                        grads[col.0].set(r, 0, v);
                    }
                }
                Op::PairwiseL2(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let d = &node.value;
                    for i in 0..av.rows() {
                        for j in 0..bv.rows() {
                            let gd = g.get(i, j);
                            if gd == 0.0 {
                                continue;
                            }
                            let dist = d.get(i, j);
                            if dist <= NORM_EPS {
                                continue;
                            }
                            let scale = gd / dist;
                            for c in 0..av.cols() {
                                let diff = av.get(i, c) - bv.get(j, c);
                                let va = grads[a.0].get(i, c) + scale * diff;
                                grads[a.0].set(i, c, va);
                                let vb = grads[b.0].get(j, c) - scale * diff;
                                grads[b.0].set(j, c, vb);
                            }
                        }
                    }
                }
                Op::Norm2(x) => {
                    let n = node.value.get(0, 0);
                    if n > NORM_EPS {
                        let scale = g.get(0, 0) / n;
                        let xv = self.nodes[x.0].value.clone();
                        grads[x.0].axpy(scale, &xv);
                    }
                }
                Op::MaskedSum { x, mask } => {
                    let g0 = g.get(0, 0);
                    for (o, &w) in grads[x.0].data_mut().iter_mut().zip(mask) {
                        *o += g0 * w;
                    }
                }
            }
            grads[idx] = g;
        }
        Ok(Gradients { grads })
    }
}

fn check_segments(segments: &[usize], rows: usize, n_segments: usize) -> Result<(), NumericError> {
    if segments.len() != rows {
        return Err(NumericError::ShapeMismatch(format!(
            "{} segment ids for {} rows",
            segments.len(),
            rows
        )));
    }
    for &s in segments {
        if s >= n_segments {
            return Err(NumericError::SegmentOutOfRange { id: s, n: n_segments });
        }
    }
    Ok(())
}
