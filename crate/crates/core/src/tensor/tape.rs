use std::cell::RefCell;
use std::sync::Arc;

use super::{kernels, Mask, Result, Tensor, TensorError};

/// Records operations in execution order so that gradients can be
/// propagated back from a scalar loss.
///
/// A tape is single-threaded and meant to live for one forward/backward
/// pass. Values are shared through `Arc`, so binding a model parameter as a
/// leaf does not copy it.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

struct Node {
    value: Arc<Tensor>,
    tracked: bool,
    op: Op,
}

enum Op {
    Leaf,
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    MulConst(usize, Arc<Tensor>),
    Relu(usize),
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Transpose(usize),
    Softmax(usize),
    LogSoftmax(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    Concat(Vec<usize>),
    Slice {
        x: usize,
        start: usize,
    },
    Sum(usize),
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records an input whose gradient is wanted.
    pub fn param(&self, value: impl Into<Arc<Tensor>>) -> Var<'_> {
        self.push(value.into(), true, Op::Leaf)
    }

    /// Records an input that is held constant.
    pub fn constant(&self, value: impl Into<Arc<Tensor>>) -> Var<'_> {
        self.push(value.into(), false, Op::Leaf)
    }

    pub fn leaf(&self, value: impl Into<Arc<Tensor>>, requires_grad: bool) -> Var<'_> {
        self.push(value.into(), requires_grad, Op::Leaf)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Arc<Tensor>, tracked: bool, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, tracked, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    fn tracked(&self, id: usize) -> bool {
        self.nodes.borrow()[id].tracked
    }

    /// Reverse pass from a scalar `loss`. Every tracked value recorded up to
    /// the loss receives a gradient of its own shape (zeros when the loss
    /// does not depend on it).
    pub fn gradients_of(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(TensorError::ForeignVar);
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(TensorError::NotScalar(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        if root.tracked {
            grads[loss.id] = Some(vec![1.0]);
        }

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            backprop(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let out = nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                node.tracked.then(|| {
                    let data = g.unwrap_or_else(|| vec![0.0; node.value.len()]);
                    Tensor {
                        shape: node.value.shape().to_vec(),
                        data,
                    }
                })
            })
            .collect();
        Ok(Gradients { grads: out })
    }
}

fn acc<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].tracked {
        return None;
    }
    let len = nodes[id].value.len();
    Some(grads[id].get_or_insert_with(|| vec![0.0; len]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn backprop(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                add_into(ga, g);
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                add_into(gb, g);
            }
        }
        Op::AddRow(x, bias) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                add_into(gx, g);
            }
            let cols = out.cols();
            if let Some(gb) = acc(grads, nodes, *bias) {
                for row in g.chunks(cols) {
                    add_into(gb, row);
                }
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((d, &gi), &bi) in ga.iter_mut().zip(g).zip(vb.data()) {
                    *d += gi * bi;
                }
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                for ((d, &gi), &ai) in gb.iter_mut().zip(g).zip(va.data()) {
                    *d += gi * ai;
                }
            }
        }
        Op::Scale(a, c) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                for (d, &gi) in ga.iter_mut().zip(g) {
                    *d += c * gi;
                }
            }
        }
        Op::MulConst(a, c) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((d, &gi), &ci) in ga.iter_mut().zip(g).zip(c.data()) {
                    *d += gi * ci;
                }
            }
        }
        Op::Relu(a) => {
            let va = &nodes[*a].value;
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((d, &gi), &x) in ga.iter_mut().zip(g).zip(va.data()) {
                    if x > 0.0 {
                        *d += gi;
                    }
                }
            }
        }
        Op::MatMul(a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k) = (va.shape()[0], va.shape()[1]);
            let n = vb.shape()[1];
            // dA = G·Bᵀ, dB = Aᵀ·G
            if let Some(ga) = acc(grads, nodes, *a) {
                kernels::matmul_nt_acc(g, vb.data(), m, n, k, ga);
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                kernels::matmul_tn_acc(va.data(), g, m, k, n, gb);
            }
        }
        Op::MatMulNt(a, b) => {
            // C = A·Bᵀ with A[m,k], B[n,k]: dA = G·B, dB = Gᵀ·A
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k) = (va.shape()[0], va.shape()[1]);
            let n = vb.shape()[0];
            if let Some(ga) = acc(grads, nodes, *a) {
                kernels::matmul_acc(g, vb.data(), m, n, k, ga);
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                kernels::matmul_tn_acc(g, va.data(), m, n, k, gb);
            }
        }
        Op::Transpose(a) => {
            let (r, c) = (out.shape()[0], out.shape()[1]);
            if let Some(ga) = acc(grads, nodes, *a) {
                add_into(ga, &kernels::transpose(g, r, c));
            }
        }
        Op::Softmax(x) => {
            let cols = out.cols();
            if let Some(gx) = acc(grads, nodes, *x) {
                for ((gr, yr), dr) in g.chunks(cols).zip(out.data().chunks(cols)).zip(gx.chunks_mut(cols)) {
                    let inner = kernels::dot(gr, yr);
                    for j in 0..cols {
                        dr[j] += yr[j] * (gr[j] - inner);
                    }
                }
            }
        }
        Op::LogSoftmax(x) => {
            let cols = out.cols();
            if let Some(gx) = acc(grads, nodes, *x) {
                for ((gr, yr), dr) in g.chunks(cols).zip(out.data().chunks(cols)).zip(gx.chunks_mut(cols)) {
                    let total: f64 = gr.iter().sum();
                    for j in 0..cols {
                        dr[j] += gr[j] - yr[j].exp() * total;
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        } => {
            let cols = out.cols();
            let gamma_v = Arc::clone(&nodes[*gamma].value);
            if let Some(gg) = acc(grads, nodes, *gamma) {
                for (gr, hr) in g.chunks(cols).zip(xhat.chunks(cols)) {
                    for j in 0..cols {
                        gg[j] += gr[j] * hr[j];
                    }
                }
            }
            if let Some(gb) = acc(grads, nodes, *beta) {
                for gr in g.chunks(cols) {
                    add_into(gb, gr);
                }
            }
            if let Some(gx) = acc(grads, nodes, *x) {
                let n = cols as f64;
                let mut dh = vec![0.0; cols];
                for (r, ((gr, hr), dr)) in g
                    .chunks(cols)
                    .zip(xhat.chunks(cols))
                    .zip(gx.chunks_mut(cols))
                    .enumerate()
                {
                    for j in 0..cols {
                        dh[j] = gr[j] * gamma_v.data()[j];
                    }
                    let mean_dh = dh.iter().sum::<f64>() / n;
                    let mean_dh_h = kernels::dot(&dh, hr) / n;
                    let s = inv_std[r];
                    for j in 0..cols {
                        dr[j] += s * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                    }
                }
            }
        }
        Op::Embedding { table, ids } => {
            let cols = out.cols();
            if let Some(gt) = acc(grads, nodes, *table) {
                for (gr, &id) in g.chunks(cols).zip(ids) {
                    add_into(&mut gt[id * cols..(id + 1) * cols], gr);
                }
            }
        }
        Op::Concat(parts) => {
            let rows = out.rows();
            let total = out.cols();
            let mut offset = 0;
            for &p in parts {
                let w = nodes[p].value.cols();
                if let Some(gp) = acc(grads, nodes, p) {
                    for r in 0..rows {
                        add_into(&mut gp[r * w..(r + 1) * w], &g[r * total + offset..r * total + offset + w]);
                    }
                }
                offset += w;
            }
        }
        Op::Slice { x, start } => {
            let w = out.cols();
            let full = nodes[*x].value.cols();
            if let Some(gx) = acc(grads, nodes, *x) {
                for (r, gr) in g.chunks(w).enumerate() {
                    add_into(&mut gx[r * full + start..r * full + start + w], gr);
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                for d in ga.iter_mut() {
                    *d += g[0];
                }
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Arc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.tracked(self.id)
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn same_tape(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(TensorError::ForeignVar)
        }
    }

    fn emit(&self, data: Vec<f64>, shape: Vec<usize>, tracked: bool, op: Op) -> Var<'t> {
        self.tape.push(Arc::new(Tensor { shape, data }), tracked, op)
    }

    fn mismatch(&self, op: &'static str, other: &Var<'_>) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            left: self.shape(),
            right: other.shape(),
        }
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(self.mismatch("add", &other));
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        let tracked = self.requires_grad() || other.requires_grad();
        Ok(self.emit(data, a.shape().to_vec(), tracked, Op::Add(self.id, other.id)))
    }

    /// Adds a vector to every row (broadcast along the trailing axis).
    pub fn add_row(&self, bias: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&bias)?;
        let (x, b) = (self.value(), bias.value());
        if b.len() != x.cols() {
            return Err(self.mismatch("add_row", &bias));
        }
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(x.cols()) {
            add_into(row, b.data());
        }
        let tracked = self.requires_grad() || bias.requires_grad();
        Ok(self.emit(data, x.shape().to_vec(), tracked, Op::AddRow(self.id, bias.id)))
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(self.mismatch("mul", &other));
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let tracked = self.requires_grad() || other.requires_grad();
        Ok(self.emit(data, a.shape().to_vec(), tracked, Op::Mul(self.id, other.id)))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        let a = self.value();
        let data = a.data().iter().map(|x| x * c).collect();
        self.emit(data, a.shape().to_vec(), self.requires_grad(), Op::Scale(self.id, c))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&self, c: impl Into<Arc<Tensor>>) -> Result<Var<'t>> {
        let c = c.into();
        let a = self.value();
        if a.shape() != c.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul_const",
                left: a.shape().to_vec(),
                right: c.shape().to_vec(),
            });
        }
        let data = a.data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
        Ok(self.emit(data, a.shape().to_vec(), self.requires_grad(), Op::MulConst(self.id, c)))
    }

    pub fn relu(&self) -> Var<'t> {
        let a = self.value();
        let data = a.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        self.emit(data, a.shape().to_vec(), self.requires_grad(), Op::Relu(self.id))
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        let (m, k) = a.expect_matrix("matmul")?;
        let (k2, n) = b.expect_matrix("matmul")?;
        if k != k2 {
            return Err(self.mismatch("matmul", &other));
        }
        let data = kernels::matmul(a.data(), b.data(), m, k, n);
        let tracked = self.requires_grad() || other.requires_grad();
        Ok(self.emit(data, vec![m, n], tracked, Op::MatMul(self.id, other.id)))
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        let (m, k) = a.expect_matrix("matmul_nt")?;
        let (n, k2) = b.expect_matrix("matmul_nt")?;
        if k != k2 {
            return Err(self.mismatch("matmul_nt", &other));
        }
        let data = kernels::matmul_nt(a.data(), b.data(), m, k, n);
        let tracked = self.requires_grad() || other.requires_grad();
        Ok(self.emit(data, vec![m, n], tracked, Op::MatMulNt(self.id, other.id)))
    }

    pub fn transpose(&self) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = a.expect_matrix("transpose")?;
        let data = kernels::transpose(a.data(), r, c);
        Ok(self.emit(data, vec![c, r], self.requires_grad(), Op::Transpose(self.id)))
    }

    pub fn softmax_rows(&self) -> Var<'t> {
        let a = self.value();
        let data = kernels::softmax_rows(a.data(), a.rows(), a.cols(), None)
            .expect("unmasked softmax always has an allowed entry");
        self.emit(data, a.shape().to_vec(), self.requires_grad(), Op::Softmax(self.id))
    }

    /// Row softmax where disallowed entries act as −∞ and come out exactly 0.
    pub fn masked_softmax_rows(&self, mask: &Mask) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = a.expect_matrix("masked_softmax")?;
        mask.check(r, c)?;
        let data = kernels::softmax_rows(a.data(), r, c, Some(mask.as_slice()))
            .map_err(|row| TensorError::EmptyMaskRow { row })?;
        Ok(self.emit(data, vec![r, c], self.requires_grad(), Op::Softmax(self.id)))
    }

    pub fn log_softmax_rows(&self) -> Var<'t> {
        let a = self.value();
        let data = kernels::log_softmax_rows(a.data(), a.rows(), a.cols());
        self.emit(data, a.shape().to_vec(), self.requires_grad(), Op::LogSoftmax(self.id))
    }

    pub fn layer_norm(&self, gamma: Var<'t>, beta: Var<'t>, eps: f64) -> Result<Var<'t>> {
        self.same_tape(&gamma)?;
        self.same_tape(&beta)?;
        let (x, g, b) = (self.value(), gamma.value(), beta.value());
        let d = x.cols();
        if g.len() != d || b.len() != d {
            return Err(self.mismatch("layer_norm", &gamma));
        }
        let out = kernels::layer_norm(x.data(), x.rows(), d, g.data(), b.data(), eps);
        let tracked = self.requires_grad() || gamma.requires_grad() || beta.requires_grad();
        Ok(self.emit(
            out.y,
            x.shape().to_vec(),
            tracked,
            Op::LayerNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                xhat: out.xhat,
                inv_std: out.inv_std,
            },
        ))
    }

    /// Gathers rows of an embedding table: `self` is `[V, d]`, the result is
    /// `[ids.len(), d]`.
    pub fn embedding(&self, ids: &[usize]) -> Result<Var<'t>> {
        let table = self.value();
        let (v, d) = table.expect_matrix("embedding")?;
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding",
                    index: id,
                    len: v,
                });
            }
            data.extend_from_slice(table.row(id));
        }
        if ids.is_empty() {
            return Err(TensorError::ZeroDim(vec![0, d]));
        }
        Ok(self.emit(
            data,
            vec![ids.len(), d],
            self.requires_grad(),
            Op::Embedding {
                table: self.id,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Concatenates matrices with equal row counts along the trailing axis.
    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts.first().ok_or(TensorError::ZeroDim(vec![0]))?;
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let rows = values[0].rows();
        for (p, v) in parts.iter().zip(&values) {
            first.same_tape(p)?;
            if v.shape().len() != 2 || v.rows() != rows {
                return Err(first.mismatch("concat_cols", p));
            }
        }
        let total: usize = values.iter().map(|v| v.cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &values {
                data.extend_from_slice(v.row(r));
            }
        }
        let tracked = parts.iter().any(|p| p.requires_grad());
        Ok(first.emit(data, vec![rows, total], tracked, Op::Concat(parts.iter().map(|p| p.id).collect())))
    }

    /// Columns `start..start + width` of a matrix.
    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Var<'t>> {
        let x = self.value();
        let (rows, cols) = x.expect_matrix("slice_cols")?;
        if width == 0 || start + width > cols {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + width,
                len: cols,
            });
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&x.row(r)[start..start + width]);
        }
        Ok(self.emit(data, vec![rows, width], self.requires_grad(), Op::Slice { x: self.id, start }))
    }

    /// Splits a matrix along the trailing axis into pieces of the given widths.
    pub fn split_cols(&self, widths: &[usize]) -> Result<Vec<Var<'t>>> {
        let total: usize = widths.iter().sum();
        if total != self.value().cols() {
            return Err(TensorError::ShapeMismatch {
                op: "split_cols",
                left: self.shape(),
                right: widths.to_vec(),
            });
        }
        let mut start = 0;
        widths
            .iter()
            .map(|&w| {
                let v = self.slice_cols(start, w);
                start += w;
                v
            })
            .collect()
    }

    pub fn sum(&self) -> Var<'t> {
        let total = self.value().data().iter().sum();
        self.emit(vec![total], Vec::new(), self.requires_grad(), Op::Sum(self.id))
    }
}

/// Gradients produced by [`Tape::gradients_of`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; `None` for untracked values.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = tape.param(Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let loss = x.sum();
        let g = tape.gradients_of(loss).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn square_gradient_is_two_x() {
        let tape = Tape::new();
        let data = vec![1.5, -2.0, 0.25];
        let x = tape.param(Tensor::vector(data.clone()).unwrap());
        let loss = x.mul(x).unwrap().sum();
        let g = tape.gradients_of(loss).unwrap();
        let want: Vec<f64> = data.iter().map(|v| 2.0 * v).collect();
        assert_eq!(g.get(x).unwrap().data(), &want[..]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let tape = Tape::new();
        let x = tape.param(Tensor::zeros([2]));
        assert!(matches!(tape.gradients_of(x), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn unused_params_get_zero_gradients() {
        let tape = Tape::new();
        let x = tape.param(Tensor::full([3], 2.0));
        let unused = tape.param(Tensor::full([2, 2], 1.0));
        let k = tape.constant(Tensor::full([3], 5.0));
        let loss = x.mul(k).unwrap().sum();
        let g = tape.gradients_of(loss).unwrap();
        assert_eq!(g.get(unused).unwrap(), &Tensor::zeros([2, 2]));
        assert!(g.get(k).is_none());
        assert_eq!(g.get(x).unwrap().data(), &[5.0, 5.0, 5.0]);
    }

    #[test]
    fn vars_from_other_tapes_are_rejected() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let a = t1.param(Tensor::zeros([2]));
        let b = t2.param(Tensor::zeros([2]));
        assert!(matches!(a.add(b), Err(TensorError::ForeignVar)));
    }
}
