//! Append-only reverse-mode differentiation tape.
//!
//! A forward pass pushes nodes onto the tape; each node stores its computed
//! value and the operation (with input ids) that produced it. [`Tape::backward`]
//! walks the node list in reverse, accumulating `∂loss/∂node` for every node
//! reachable from the loss. The op set is exactly what the models here need —
//! this is not a general-purpose autograd.
//!
//! Shape violations are programmer errors and panic; numeric failures
//! (non-finite gradients) surface as [`TapeError`] so training loops can abort
//! with a diagnostic.

use super::tensor::{matmul, Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Additive bias used to silence disallowed attention logits. After row-max
/// subtraction inside softmax, `exp` of a biased entry underflows to exactly
/// 0.0 in both f32 and f64, so masked positions get bitwise-zero weight.
pub const MASK_BIAS: f64 = -1e9;

#[derive(Debug, thiserror::Error)]
pub enum TapeError {
    #[error("backward requires a scalar (1×1) loss, got {rows}×{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("non-finite gradient at node #{index} ({op})")]
    NonFiniteGradient { index: usize, op: &'static str },
}

enum Op<T> {
    Leaf,
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    AddRowVec { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: T },
    AddScalar { a: NodeId },
    AddConst { a: NodeId },
    MulConst { a: NodeId, k: Tensor<T> },
    Exp { a: NodeId },
    Tanh { a: NodeId },
    Gelu { a: NodeId },
    SoftmaxRows { a: NodeId },
    LayerNormRows { a: NodeId, gamma: NodeId, beta: NodeId, eps: T },
    ConcatRows { a: NodeId, b: NodeId },
    ConcatCols { a: NodeId, b: NodeId },
    SliceRows { a: NodeId, lo: usize },
    SliceCols { a: NodeId, lo: usize },
    RowSums { a: NodeId },
    SumAll { a: NodeId },
    MeanAll { a: NodeId },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::AddRowVec { .. } => "add_row_vec",
            Op::Scale { .. } => "scale",
            Op::AddScalar { .. } => "add_scalar",
            Op::AddConst { .. } => "add_const",
            Op::MulConst { .. } => "mul_const",
            Op::Exp { .. } => "exp",
            Op::Tanh { .. } => "tanh",
            Op::Gelu { .. } => "gelu",
            Op::SoftmaxRows { .. } => "softmax_rows",
            Op::LayerNormRows { .. } => "layernorm_rows",
            Op::ConcatRows { .. } => "concat_rows",
            Op::ConcatCols { .. } => "concat_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::RowSums { .. } => "row_sums",
            Op::SumAll { .. } => "sum_all",
            Op::MeanAll { .. } => "mean_all",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Forward-pass recorder plus reverse-mode gradient engine.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` loss w.r.t. this node; `None` when the
    /// node does not influence the loss (contract: treat as zero).
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads[id.0].as_ref()
    }

    /// Gradient as a concrete tensor, zeros when the node is off-path.
    pub fn grad_or_zeros(&self, id: NodeId) -> Tensor<T> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => {
                let v = &self.nodes[id.0].value;
                Tensor::zeros(v.rows(), v.cols())
            }
        }
    }

    /// Insert an input or parameter value. The tape does not distinguish the
    /// two; callers keep the ids of whatever they want gradients for.
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.matmul_t(a, false, b, false)
    }

    pub fn matmul_t(&mut self, a: NodeId, ta: bool, b: NodeId, tb: bool) -> NodeId {
        let v = matmul(self.value(a), ta, self.value(b), tb);
        self.push(v, Op::MatMul { a, b, ta, tb })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub { a, b })
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul { a, b })
    }

    /// `[m,n] + [1,n]` with the row vector broadcast down the rows.
    pub fn add_row_vec(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(bv.rows(), 1, "add_row_vec expects a 1×n row vector");
        assert_eq!(av.cols(), bv.cols(), "add_row_vec column mismatch");
        let mut v = av.clone();
        for i in 0..v.rows() {
            for (x, &y) in v.row_mut(i).iter_mut().zip(bv.row(0)) {
                *x += y;
            }
        }
        self.push(v, Op::AddRowVec { a, b })
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale { a, c })
    }

    pub fn add_scalar(&mut self, a: NodeId, c: T) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar { a })
    }

    /// Add a constant tensor (no gradient into the constant).
    pub fn add_const(&mut self, a: NodeId, k: &Tensor<T>) -> NodeId {
        let v = self.value(a).zip_map(k, |x, y| x + y);
        self.push(v, Op::AddConst { a })
    }

    /// Multiply by a constant tensor elementwise (dropout masks).
    pub fn mul_const(&mut self, a: NodeId, k: Tensor<T>) -> NodeId {
        let v = self.value(a).zip_map(&k, |x, y| x * y);
        self.push(v, Op::MulConst { a, k })
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.exp());
        self.push(v, Op::Exp { a })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.tanh());
        self.push(v, Op::Tanh { a })
    }

    /// Exact GELU: `0.5·x·(1 + erf(x/√2))`.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let half = T::from_f64(0.5);
        let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
        let v = self
            .value(a)
            .map(|x| half * x * (T::ONE + (x * inv_sqrt2).erf()));
        self.push(v, Op::Gelu { a })
    }

    /// Row-wise softmax. Combine with [`Tape::add_const`] of a
    /// [`MASK_BIAS`]-valued bias matrix for masked attention.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut v = x.clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let mut max = row[0];
            for &e in row.iter() {
                if e > max {
                    max = e;
                }
            }
            let mut sum = T::ZERO;
            for e in row.iter_mut() {
                *e = (*e - max).exp();
                sum += *e;
            }
            for e in row.iter_mut() {
                *e = *e / sum;
            }
        }
        self.push(v, Op::SoftmaxRows { a })
    }

    /// Row-wise layer normalization with learned affine parameters
    /// (`gamma`, `beta` are 1×n). `eps` sits inside the square root.
    pub fn layernorm_rows(&mut self, a: NodeId, gamma: NodeId, beta: NodeId, eps: T) -> NodeId {
        let x = self.value(a);
        let (g, b) = (self.value(gamma), self.value(beta));
        assert_eq!(g.rows(), 1, "layernorm gamma must be 1×n");
        assert_eq!(b.rows(), 1, "layernorm beta must be 1×n");
        assert_eq!(g.cols(), x.cols(), "layernorm gamma width mismatch");
        assert_eq!(b.cols(), x.cols(), "layernorm beta width mismatch");
        let n = x.cols();
        let inv_n = T::from_f64(1.0 / n as f64);
        let mut v = x.clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let mut mean = T::ZERO;
            for &e in row.iter() {
                mean += e;
            }
            mean *= inv_n;
            let mut var = T::ZERO;
            for &e in row.iter() {
                let d = e - mean;
                var += d * d;
            }
            var *= inv_n;
            let inv_sd = T::ONE / (var + eps).sqrt();
            for (j, e) in row.iter_mut().enumerate() {
                *e = (*e - mean) * inv_sd * g.get(0, j) + b.get(0, j);
            }
        }
        self.push(v, Op::LayerNormRows { a, gamma, beta, eps })
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), bv.cols(), "concat_rows column mismatch");
        let mut data = Vec::with_capacity(av.len() + bv.len());
        data.extend_from_slice(av.data());
        data.extend_from_slice(bv.data());
        let v = Tensor::from_vec(av.rows() + bv.rows(), av.cols(), data);
        self.push(v, Op::ConcatRows { a, b })
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows(), bv.rows(), "concat_cols row mismatch");
        let mut v = Tensor::zeros(av.rows(), av.cols() + bv.cols());
        for i in 0..av.rows() {
            let row = v.row_mut(i);
            row[..av.cols()].copy_from_slice(av.row(i));
            row[av.cols()..].copy_from_slice(bv.row(i));
        }
        self.push(v, Op::ConcatCols { a, b })
    }

    /// Rows `lo..hi` as a view-copy.
    pub fn slice_rows(&mut self, a: NodeId, lo: usize, hi: usize) -> NodeId {
        let av = self.value(a);
        assert!(lo < hi && hi <= av.rows(), "slice_rows range out of bounds");
        let v = Tensor::from_vec(
            hi - lo,
            av.cols(),
            av.data()[lo * av.cols()..hi * av.cols()].to_vec(),
        );
        self.push(v, Op::SliceRows { a, lo })
    }

    /// Columns `lo..hi` as a view-copy.
    pub fn slice_cols(&mut self, a: NodeId, lo: usize, hi: usize) -> NodeId {
        let av = self.value(a);
        assert!(lo < hi && hi <= av.cols(), "slice_cols range out of bounds");
        let mut v = Tensor::zeros(av.rows(), hi - lo);
        for i in 0..av.rows() {
            v.row_mut(i).copy_from_slice(&av.row(i)[lo..hi]);
        }
        self.push(v, Op::SliceCols { a, lo })
    }

    /// `[m,n] → [m,1]` summing each row.
    pub fn row_sums(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut v = Tensor::zeros(av.rows(), 1);
        for i in 0..av.rows() {
            let mut s = T::ZERO;
            for &e in av.row(i) {
                s += e;
            }
            v.set(i, 0, s);
        }
        self.push(v, Op::RowSums { a })
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let mut s = T::ZERO;
        for &e in self.value(a).data() {
            s += e;
        }
        self.push(Tensor::scalar(s), Op::SumAll { a })
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let count = av.len();
        assert!(count > 0, "mean_all of empty tensor");
        let mut s = T::ZERO;
        for &e in av.data() {
            s += e;
        }
        let v = s * T::from_f64(1.0 / count as f64);
        self.push(Tensor::scalar(v), Op::MeanAll { a })
    }

    /// Reverse-mode accumulation from a scalar loss. Gradients for every node
    /// on the path become available through [`Tape::grad`]; off-path nodes
    /// keep `None` (zero). Returns an error naming the first node (in forward
    /// order) whose gradient is non-finite.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TapeError> {
        let lv = &self.nodes[loss.0].value;
        if lv.shape() != (1, 1) {
            return Err(TapeError::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::scalar(T::ONE));

        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }

        for (i, g) in self.grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.all_finite() {
                    return Err(TapeError::NonFiniteGradient {
                        index: i,
                        op: self.nodes[i].op.name(),
                    });
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor<T>) {
        match &mut self.grads[id.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, i: usize, g: &Tensor<T>) {
        // Ops store only ids and constants, so matching on a reconstructed
        // lightweight description avoids borrowing self.nodes mutably.
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let da = if !ta {
                    matmul(g, false, bv, !tb)
                } else {
                    matmul(bv, tb, g, true)
                };
                let db = if !tb {
                    matmul(av, !ta, g, false)
                } else {
                    matmul(g, true, av, ta)
                };
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::Add { a, b } => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            &Op::Sub { a, b } => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.map(|x| -x));
            }
            &Op::Mul { a, b } => {
                let da = g.zip_map(&self.nodes[b.0].value, |x, y| x * y);
                let db = g.zip_map(&self.nodes[a.0].value, |x, y| x * y);
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::AddRowVec { a, b } => {
                let mut db = Tensor::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (acc, &e) in db.row_mut(0).iter_mut().zip(g.row(i)) {
                        *acc += e;
                    }
                }
                self.accumulate(a, g.clone());
                self.accumulate(b, db);
            }
            &Op::Scale { a, c } => {
                self.accumulate(a, g.map(|x| x * c));
            }
            &Op::AddScalar { a } | &Op::AddConst { a } => {
                self.accumulate(a, g.clone());
            }
            Op::MulConst { a, k } => {
                let a = *a;
                let da = g.zip_map(k, |x, y| x * y);
                self.accumulate(a, da);
            }
            &Op::Exp { a } => {
                let da = g.zip_map(&self.nodes[i].value, |x, y| x * y);
                self.accumulate(a, da);
            }
            &Op::Tanh { a } => {
                let da = g.zip_map(&self.nodes[i].value, |x, y| x * (T::ONE - y * y));
                self.accumulate(a, da);
            }
            &Op::Gelu { a } => {
                let half = T::from_f64(0.5);
                let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
                let inv_sqrt_2pi = T::from_f64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
                let da = g.zip_map(&self.nodes[a.0].value, |gv, x| {
                    let cdf = half * (T::ONE + (x * inv_sqrt2).erf());
                    let pdf = inv_sqrt_2pi * (-half * x * x).exp();
                    gv * (cdf + x * pdf)
                });
                self.accumulate(a, da);
            }
            &Op::SoftmaxRows { a } => {
                let s = &self.nodes[i].value;
                let mut da = Tensor::zeros(s.rows(), s.cols());
                for r in 0..s.rows() {
                    let mut dot = T::ZERO;
                    for (&gv, &sv) in g.row(r).iter().zip(s.row(r)) {
                        dot += gv * sv;
                    }
                    for ((d, &gv), &sv) in da.row_mut(r).iter_mut().zip(g.row(r)).zip(s.row(r)) {
                        *d = sv * (gv - dot);
                    }
                }
                self.accumulate(a, da);
            }
            &Op::LayerNormRows { a, gamma, beta, eps } => {
                let x = &self.nodes[a.0].value;
                let gm = &self.nodes[gamma.0].value;
                let n = x.cols();
                let inv_n = T::from_f64(1.0 / n as f64);
                let mut da = Tensor::zeros(x.rows(), n);
                let mut dgamma = Tensor::zeros(1, n);
                let mut dbeta = Tensor::zeros(1, n);
                for r in 0..x.rows() {
                    let row = x.row(r);
                    let mut mean = T::ZERO;
                    for &e in row {
                        mean += e;
                    }
                    mean *= inv_n;
                    let mut var = T::ZERO;
                    for &e in row {
                        let d = e - mean;
                        var += d * d;
                    }
                    var *= inv_n;
                    let inv_sd = T::ONE / (var + eps).sqrt();
                    // xhat_j = (x_j − μ)·inv_sd; dxhat_j = g_j·γ_j
                    let mut mean_dxhat = T::ZERO;
                    let mut mean_dxhat_xhat = T::ZERO;
                    for j in 0..n {
                        let xhat = (row[j] - mean) * inv_sd;
                        let dxhat = g.get(r, j) * gm.get(0, j);
                        mean_dxhat += dxhat;
                        mean_dxhat_xhat += dxhat * xhat;
                        dgamma.data_mut()[j] += g.get(r, j) * xhat;
                        dbeta.data_mut()[j] += g.get(r, j);
                    }
                    mean_dxhat *= inv_n;
                    mean_dxhat_xhat *= inv_n;
                    for j in 0..n {
                        let xhat = (row[j] - mean) * inv_sd;
                        let dxhat = g.get(r, j) * gm.get(0, j);
                        da.set(r, j, inv_sd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat));
                    }
                }
                self.accumulate(a, da);
                self.accumulate(gamma, dgamma);
                self.accumulate(beta, dbeta);
            }
            &Op::ConcatRows { a, b } => {
                let ra = self.nodes[a.0].value.rows();
                let cols = g.cols();
                let da = Tensor::from_vec(ra, cols, g.data()[..ra * cols].to_vec());
                let db = Tensor::from_vec(g.rows() - ra, cols, g.data()[ra * cols..].to_vec());
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::ConcatCols { a, b } => {
                let ca = self.nodes[a.0].value.cols();
                let mut da = Tensor::zeros(g.rows(), ca);
                let mut db = Tensor::zeros(g.rows(), g.cols() - ca);
                for r in 0..g.rows() {
                    da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::SliceRows { a, lo } => {
                let av = &self.nodes[a.0].value;
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for r in 0..g.rows() {
                    da.row_mut(lo + r).copy_from_slice(g.row(r));
                }
                self.accumulate(a, da);
            }
            &Op::SliceCols { a, lo } => {
                let av = &self.nodes[a.0].value;
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for r in 0..g.rows() {
                    da.row_mut(r)[lo..lo + g.cols()].copy_from_slice(g.row(r));
                }
                self.accumulate(a, da);
            }
            &Op::RowSums { a } => {
                let av = &self.nodes[a.0].value;
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let gv = g.get(r, 0);
                    for e in da.row_mut(r) {
                        *e = gv;
                    }
                }
                self.accumulate(a, da);
            }
            &Op::SumAll { a } => {
                let av = &self.nodes[a.0].value;
                let gv = g.item();
                self.accumulate(a, Tensor::full(av.rows(), av.cols(), gv));
            }
            &Op::MeanAll { a } => {
                let av = &self.nodes[a.0].value;
                let gv = g.item() * T::from_f64(1.0 / av.len() as f64);
                self.accumulate(a, Tensor::full(av.rows(), av.cols(), gv));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_loss_gradient_is_2x() {
        // loss = x² at x = 3 → grad 6
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let loss = tape.mul(x, x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn constant_loss_leaves_params_off_path() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let c = tape.leaf(Tensor::scalar(7.0));
        let loss = tape.mul(c, c);
        tape.backward(loss).unwrap();
        assert!(tape.grad(x).is_none());
        assert_eq!(tape.grad_or_zeros(x).item(), 0.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(2, 2));
        let y = tape.add(x, x);
        assert!(matches!(
            tape.backward(y),
            Err(TapeError::NonScalarLoss { rows: 2, cols: 2 })
        ));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]));
        let s = tape.softmax_rows(x);
        for i in 0..2 {
            let sum: f64 = tape.value(s).row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_bias_zeroes_weights_exactly() {
        for logit in [0.5f32, -3.0, 7.25] {
            let mut tape = Tape::<f32>::new();
            let x = tape.leaf(Tensor::from_vec(1, 3, vec![logit, 1.0, 2.0]));
            let bias = Tensor::from_vec(1, 3, vec![MASK_BIAS as f32, 0.0, 0.0]);
            let b = tape.add_const(x, &bias);
            let s = tape.softmax_rows(b);
            assert_eq!(tape.value(s).get(0, 0), 0.0, "masked weight must be exactly 0");
        }
    }

    #[test]
    fn gelu_at_zero_is_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.gelu(x);
        assert_eq!(tape.value(y).item(), 0.0);
    }
}
