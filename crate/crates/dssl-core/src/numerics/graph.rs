//! Reverse-mode automatic differentiation over a dynamic computation graph.
//!
//! A [`Graph`] is an append-only arena of nodes; every operator records its
//! parents, so node indices are already in topological order and the
//! backward pass is a single reverse sweep. Graphs are built per training
//! step and dropped afterwards.

use super::tensor::{Tensor, EPS_NORM};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRow(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    MatMulTN(NodeId, NodeId),
    Relu(NodeId),
    RowNormalize(NodeId),
    ColNormalize(NodeId),
    ConcatCols(NodeId, NodeId),
    Transpose(NodeId),
    LogSumExpRows(NodeId),
    Diag(NodeId),
    RowDot(NodeId, NodeId),
    MeanAll(NodeId),
    FrobeniusNorm(NodeId),
}

struct NodeData {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<NodeData>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// A differentiable leaf (parameter or input we want gradients for).
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, true, Op::Leaf)
    }

    /// A non-differentiable leaf. Also the gradient barrier: inserting a
    /// computed tensor as a constant stops gradient flow into whatever
    /// produced it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward pass w.r.t. `id`; zeros if the node was
    /// not reached.
    pub fn grad(&self, id: NodeId) -> Tensor {
        let n = &self.nodes[id.0];
        n.grad.clone().unwrap_or_else(|| Tensor::zeros(n.value.rows(), n.value.cols()))
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> NodeId {
        self.nodes.push(NodeData { value, grad: None, requires_grad, op });
        NodeId(self.nodes.len() - 1)
    }

    fn unary(&mut self, a: NodeId, value: Tensor, op: Op) -> NodeId {
        let rg = self.nodes[a.0].requires_grad;
        self.push(value, rg, op)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, value: Tensor, op: Op) -> NodeId {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(value, rg, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).add(self.value(b));
        self.binary(a, b, v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).sub(self.value(b));
        self.binary(a, b, v, Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).scale(s);
        self.unary(a, v, Op::Scale(a, s))
    }

    /// Broadcast add of a 1×N bias row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let v = self.value(a).add_row(self.value(row));
        self.binary(a, row, v, Op::AddRow(a, row))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.binary(a, b, v, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_nt(self.value(b));
        self.binary(a, b, v, Op::MatMulNT(a, b))
    }

    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_tn(self.value(b));
        self.binary(a, b, v, Op::MatMulTN(a, b))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).relu();
        self.unary(a, v, Op::Relu(a))
    }

    pub fn row_normalize(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).l2_normalize_rows();
        self.unary(a, v, Op::RowNormalize(a))
    }

    pub fn col_normalize(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).l2_normalize_cols();
        self.unary(a, v, Op::ColNormalize(a))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).concat_cols(self.value(b));
        self.binary(a, b, v, Op::ConcatCols(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.unary(a, v, Op::Transpose(a))
    }

    pub fn log_sum_exp_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).log_sum_exp_rows();
        self.unary(a, v, Op::LogSumExpRows(a))
    }

    pub fn diag(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).diag();
        self.unary(a, v, Op::Diag(a))
    }

    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).row_dot(self.value(b));
        self.binary(a, b, v, Op::RowDot(a, b))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).mean());
        self.unary(a, v, Op::MeanAll(a))
    }

    pub fn frobenius_norm(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).frobenius_norm());
        self.unary(a, v, Op::FrobeniusNorm(a))
    }

    /// Populates gradients of `loss` w.r.t. every reachable differentiable
    /// node. `loss` must be a 1×1 scalar.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Usage(format!(
                "backward expects a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(a, g.clone());
                    self.accumulate(b, g.clone());
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, g.clone());
                    self.accumulate(b, g.scale(-1.0));
                }
                Op::Scale(a, s) => {
                    self.accumulate(a, g.scale(s));
                }
                Op::AddRow(a, row) => {
                    // Bias gets the column sums of the upstream gradient.
                    let mut rowg = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, v) in rowg.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    self.accumulate(a, g.clone());
                    self.accumulate(row, rowg);
                }
                Op::MatMul(a, b) => {
                    // C = A·B: dA = dC·Bᵀ, dB = Aᵀ·dC.
                    let da = g.matmul_nt(self.val(b));
                    let db = self.val(a).matmul_tn(&g);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::MatMulNT(a, b) => {
                    // C = A·Bᵀ: dA = dC·B, dB = dCᵀ·A.
                    let da = g.matmul(self.val(b));
                    let db = g.matmul_tn(self.val(a));
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::MatMulTN(a, b) => {
                    // C = Aᵀ·B: dA = B·dCᵀ, dB = A·dC.
                    let da = self.val(b).matmul_nt(&g);
                    let db = self.val(a).matmul(&g);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Relu(a) => {
                    let mask = self.val(a).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    self.accumulate(a, g.hadamard(&mask));
                }
                Op::RowNormalize(a) => {
                    let da = row_normalize_backward(self.val(a), &g);
                    self.accumulate(a, da);
                }
                Op::ColNormalize(a) => {
                    let xt = self.val(a).transpose();
                    let gt = g.transpose();
                    let da = row_normalize_backward(&xt, &gt).transpose();
                    self.accumulate(a, da);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.val(a).cols();
                    let da = g.slice_cols(0, ca);
                    let db = g.slice_cols(ca, g.cols());
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Transpose(a) => {
                    self.accumulate(a, g.transpose());
                }
                Op::LogSumExpRows(a) => {
                    // d/dx_ij = g_i · softmax_j(x_i·).
                    let x = self.val(a);
                    let mut da = Tensor::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let row = x.row(r);
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|&v| (v - m).exp()).sum();
                        let gr = g.get(r, 0) / denom;
                        for (o, &v) in da.row_mut(r).iter_mut().zip(row) {
                            *o = gr * (v - m).exp();
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::Diag(a) => {
                    let n = self.val(a).rows();
                    let mut da = Tensor::zeros(n, n);
                    for r in 0..n {
                        da.set(r, r, g.get(r, 0));
                    }
                    self.accumulate(a, da);
                }
                Op::RowDot(a, b) => {
                    let mut da = self.val(b).clone();
                    let mut db = self.val(a).clone();
                    for r in 0..da.rows() {
                        let gr = g.get(r, 0);
                        for v in da.row_mut(r) {
                            *v *= gr;
                        }
                        for v in db.row_mut(r) {
                            *v *= gr;
                        }
                    }
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::MeanAll(a) => {
                    let (r, c) = self.val(a).shape();
                    let da = Tensor::full(r, c, g.get(0, 0) / (r * c) as f64);
                    self.accumulate(a, da);
                }
                Op::FrobeniusNorm(a) => {
                    let norm = self.nodes[i].value.get(0, 0);
                    let da = if norm > 0.0 {
                        self.val(a).scale(g.get(0, 0) / norm)
                    } else {
                        Tensor::zeros(self.val(a).rows(), self.val(a).cols())
                    };
                    self.accumulate(a, da);
                }
            }
            // Keep leaf gradients readable after the sweep; interior
            // gradients are restored too so instrumentation can inspect them.
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn val(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn accumulate(&mut self, id: NodeId, g: Tensor) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut self.nodes[id.0].grad {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

/// Jacobian-vector product of `y = x / (‖x‖+ε)` applied per row:
/// `dx = dy/s − x (x·dy)/(n s²)` with `s = n + ε`.
fn row_normalize_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let xr = x.row(r);
        let gr = dy.row(r);
        let n = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = n + EPS_NORM;
        let out = dx.row_mut(r);
        if n > 0.0 {
            let xdoty: f64 = xr.iter().zip(gr).map(|(a, b)| a * b).sum();
            let coef = xdoty / (n * s * s);
            for ((o, &g), &xv) in out.iter_mut().zip(gr).zip(xr) {
                *o = g / s - xv * coef;
            }
        } else {
            for (o, &g) in out.iter_mut().zip(gr) {
                *o = g / EPS_NORM;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let w = g.param(Tensor::zeros(2, 2));
        assert!(matches!(g.backward(w), Err(Error::Usage(_))));
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut g = Graph::new();
        let w = g.param(Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap());
        // sum(W) via mean * count
        let m = g.mean_all(w);
        let loss = g.scale(m, 4.0);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w), Tensor::full(2, 2, 1.0));
    }

    #[test]
    fn grad_of_half_squared_frobenius_is_w() {
        let mut g = Graph::new();
        let wt = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let w = g.param(wt.clone());
        // ½‖W‖²_F = ½ Σ w², assembled from row_dot with itself.
        let d = g.row_dot(w, w);
        let m = g.mean_all(d);
        let loss = g.scale(m, 0.5 * 2.0); // mean over 2 rows → ×2, then ×½
        g.backward(loss).unwrap();
        let grad = g.grad(w);
        for (a, b) in grad.data().iter().zip(wt.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(2.0));
        let orphan = g.param(Tensor::zeros(3, 2));
        let loss = g.mean_all(w);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(orphan), Tensor::zeros(3, 2));
    }

    #[test]
    fn constants_block_gradient_flow() {
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(2.0));
        let c = g.constant(Tensor::scalar(3.0));
        let s = g.add(w, c);
        let loss = g.mean_all(s);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(c), Tensor::zeros(1, 1));
        assert_eq!(g.grad(w).get(0, 0), 1.0);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = crate::rng::stream(11, "det");
        let x = Tensor::uniform(&mut rng, 3, 4, -1.0, 1.0);
        let w = Tensor::uniform(&mut rng, 4, 2, -1.0, 1.0);
        let run = |x: &Tensor, w: &Tensor| {
            let mut g = Graph::new();
            let xn = g.constant(x.clone());
            let wn = g.param(w.clone());
            let h = g.matmul(xn, wn);
            let r = g.relu(h);
            let n = g.row_normalize(r);
            let out = g.mean_all(n);
            g.value(out).get(0, 0)
        };
        assert_eq!(run(&x, &w).to_bits(), run(&x, &w).to_bits());
    }
}
