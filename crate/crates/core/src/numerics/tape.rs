//! Reverse-mode differentiation over a fixed set of matrix primitives.
//!
//! A [`Tape`] records every primitive together with its output value. Nodes
//! are appended after their inputs, so index order is a topological order and
//! the backward sweep is a single reverse pass. Constants never receive
//! gradients; only nodes reachable from a [`Tape::param`] leaf are visited.

use crate::error::{Gp2fError, Result};

use super::DenseMatrix;

/// Guard for rows whose norm vanishes in [`Tape::row_l2_normalize`].
pub const ROW_NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    RowL2Normalize(Var),
    RowWeightedSum(Var, DenseMatrix),
    WeightedSum(Var, DenseMatrix),
    SelectRows(Var, Vec<usize>),
    SoftmaxCrossEntropy {
        logits: Var,
        rows: Vec<usize>,
        labels: Vec<usize>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::ScaleBy(..) => "scale_by",
            Op::Mul(..) => "mul",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Softplus(..) => "softplus",
            Op::RowL2Normalize(..) => "row_l2_normalize",
            Op::RowWeightedSum(..) => "row_weighted_sum",
            Op::WeightedSum(..) => "weighted_sum",
            Op::SelectRows(..) => "select_rows",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::MatMulT(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::AddRow(a, b)
            | Op::ScaleBy(a, b)
            | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Softplus(a)
            | Op::RowL2Normalize(a)
            | Op::RowWeightedSum(a, _)
            | Op::WeightedSum(a, _)
            | Op::SelectRows(a, _) => vec![*a],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every node that needed one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`, or `None` if `v` does not influence the output
    /// through a differentiable path.
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zero-filled when absent.
    pub fn get_or_zeros(&self, v: Var) -> DenseMatrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    sigmoid(x)
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

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let value = self.eval(&op)?;
        if !value.is_finite() {
            return Err(Gp2fError::Numeric {
                op: op.name().to_string(),
            });
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn eval(&self, op: &Op) -> Result<DenseMatrix> {
        let val = |v: &Var| &self.nodes[v.0].value;
        Ok(match op {
            Op::Leaf => unreachable!("leaves are pushed directly"),
            Op::MatMul(a, b) => val(a).matmul(val(b))?,
            Op::MatMulT(a, b) => val(a).matmul_t(val(b))?,
            Op::Add(a, b) => val(a).add(val(b))?,
            Op::Sub(a, b) => val(a).sub(val(b))?,
            Op::AddRow(a, b) => {
                let (a, b) = (val(a), val(b));
                if b.rows() != 1 || b.cols() != a.cols() {
                    return Err(Gp2fError::dim(
                        "add_row",
                        format!("{:?} + row {:?}", a.shape(), b.shape()),
                    ));
                }
                let mut out = a.clone();
                for i in 0..out.rows() {
                    for (o, r) in out.row_mut(i).iter_mut().zip(b.data()) {
                        *o += r;
                    }
                }
                out
            }
            Op::Scale(a, s) => val(a).scale(*s),
            Op::ScaleBy(a, s) => {
                let s = val(s);
                if s.shape() != (1, 1) {
                    return Err(Gp2fError::dim("scale_by", format!("scalar has shape {:?}", s.shape())));
                }
                val(a).scale(s.item())
            }
            Op::Mul(a, b) => val(a).hadamard(val(b))?,
            Op::Relu(a) => val(a).map(|x| if x > 0.0 { x } else { 0.0 }),
            Op::Sigmoid(a) => val(a).map(sigmoid),
            Op::Exp(a) => val(a).map(f64::exp),
            Op::Log(a) => val(a).map(f64::ln),
            Op::Softplus(a) => val(a).map(softplus),
            Op::RowL2Normalize(a) => {
                let a = val(a);
                let mut out = a.clone();
                for i in 0..out.rows() {
                    let row = out.row_mut(i);
                    let n = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(ROW_NORM_EPS);
                    row.iter_mut().for_each(|x| *x /= n);
                }
                out
            }
            Op::RowWeightedSum(a, w) => {
                let a = val(a);
                a.expect_same_shape(w, "row_weighted_sum")?;
                DenseMatrix::from_fn(a.rows(), 1, |i, _| {
                    a.row(i).iter().zip(w.row(i)).map(|(x, y)| x * y).sum()
                })
            }
            Op::WeightedSum(a, w) => {
                let a = val(a);
                a.expect_same_shape(w, "weighted_sum")?;
                DenseMatrix::scalar(a.data().iter().zip(w.data()).map(|(x, y)| x * y).sum())
            }
            Op::SelectRows(a, idx) => {
                let a = val(a);
                if let Some(&bad) = idx.iter().find(|&&i| i >= a.rows()) {
                    return Err(Gp2fError::dim(
                        "select_rows",
                        format!("row {bad} of {}", a.rows()),
                    ));
                }
                a.select_rows(idx)
            }
            Op::SoftmaxCrossEntropy {
                logits,
                rows,
                labels,
            } => {
                let z = val(logits);
                let mut total = 0.0;
                for (&r, &y) in rows.iter().zip(labels) {
                    let row = z.row(r);
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                    total += lse - row[y];
                }
                DenseMatrix::scalar(total / rows.len() as f64)
            }
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    /// Broadcast a `1 x c` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.push(Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.push(Op::Scale(a, s))
    }

    /// Multiply `a` by the `1 x 1` node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        self.push(Op::ScaleBy(a, s))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Log(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Softplus(a))
    }

    pub fn row_l2_normalize(&mut self, a: Var) -> Result<Var> {
        self.push(Op::RowL2Normalize(a))
    }

    /// Per-row `Σ_j w_ij a_ij`, shape `n x 1`.
    pub fn row_weighted_sum(&mut self, a: Var, weights: DenseMatrix) -> Result<Var> {
        self.push(Op::RowWeightedSum(a, weights))
    }

    /// `Σ_ij w_ij a_ij` as a `1 x 1` node. Masked sums and means are special cases.
    pub fn weighted_sum(&mut self, a: Var, weights: DenseMatrix) -> Result<Var> {
        self.push(Op::WeightedSum(a, weights))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        self.weighted_sum(a, DenseMatrix::filled(r, c, 1.0))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        let n = (r * c).max(1) as f64;
        self.weighted_sum(a, DenseMatrix::filled(r, c, 1.0 / n))
    }

    pub fn select_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        self.push(Op::SelectRows(a, idx))
    }

    /// Mean softmax cross-entropy over the listed rows of `logits`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, rows: Vec<usize>, labels: Vec<usize>) -> Result<Var> {
        let (n, c) = self.value(logits).shape();
        if rows.len() != labels.len() || rows.is_empty() {
            return Err(Gp2fError::Validation(format!(
                "cross-entropy needs one label per row ({} rows, {} labels)",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Gp2fError::Validation(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Gp2fError::dim("softmax_cross_entropy", format!("row {bad} of {n}")));
        }
        self.push(Op::SoftmaxCrossEntropy {
            logits,
            rows,
            labels,
        })
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = &self.nodes[output.0];
        if out.value.shape() != (1, 1) {
            return Err(Gp2fError::dim(
                "backward",
                format!("output must be scalar, got {:?}", out.value.shape()),
            ));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            for (input, contrib) in self.local_grads(node, &g)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            }
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn local_grads(&self, node: &Node, g: &DenseMatrix) -> Result<Vec<(Var, DenseMatrix)>> {
        let val = |v: &Var| &self.nodes[v.0].value;
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        let y = &node.value;
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(a) {
                    out.push((*a, g.matmul_t(val(b))?));
                }
                if needs(b) {
                    out.push((*b, val(a).t_matmul(g)?));
                }
            }
            Op::MatMulT(a, b) => {
                // C = A Bᵀ: dA = G B, dB = Gᵀ A
                if needs(a) {
                    out.push((*a, g.matmul(val(b))?));
                }
                if needs(b) {
                    out.push((*b, g.t_matmul(val(a))?));
                }
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.scale(-1.0)));
            }
            Op::AddRow(a, b) => {
                out.push((*a, g.clone()));
                if needs(b) {
                    let mut col = DenseMatrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (c, x) in col.data_mut().iter_mut().zip(g.row(i)) {
                            *c += x;
                        }
                    }
                    out.push((*b, col));
                }
            }
            Op::Scale(a, s) => out.push((*a, g.scale(*s))),
            Op::ScaleBy(a, s) => {
                let sv = val(s).item();
                if needs(a) {
                    out.push((*a, g.scale(sv)));
                }
                if needs(s) {
                    let d = g.data().iter().zip(val(a).data()).map(|(x, y)| x * y).sum();
                    out.push((*s, DenseMatrix::scalar(d)));
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    out.push((*a, g.hadamard(val(b))?));
                }
                if needs(b) {
                    out.push((*b, g.hadamard(val(a))?));
                }
            }
            Op::Relu(a) => {
                // relu'(0) = 0
                out.push((*a, g.zip_map(val(a), "relu", |gi, x| if x > 0.0 { gi } else { 0.0 })?));
            }
            Op::Sigmoid(a) => out.push((*a, g.zip_map(y, "sigmoid", |gi, s| gi * s * (1.0 - s))?)),
            Op::Exp(a) => out.push((*a, g.hadamard(y)?)),
            Op::Log(a) => out.push((*a, g.zip_map(val(a), "log", |gi, x| gi / x)?)),
            Op::Softplus(a) => out.push((*a, g.zip_map(val(a), "softplus", |gi, x| gi * sigmoid(x))?)),
            Op::RowL2Normalize(a) => {
                let x = val(a);
                let mut dx = DenseMatrix::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let n = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                    let (gi, yi) = (g.row(i), y.row(i));
                    let out_row = dx.row_mut(i);
                    if n > ROW_NORM_EPS {
                        let dot: f64 = gi.iter().zip(yi).map(|(a, b)| a * b).sum();
                        for ((o, gv), yv) in out_row.iter_mut().zip(gi).zip(yi) {
                            *o = (gv - yv * dot) / n;
                        }
                    } else {
                        for (o, gv) in out_row.iter_mut().zip(gi) {
                            *o = gv / ROW_NORM_EPS;
                        }
                    }
                }
                out.push((*a, dx));
            }
            Op::RowWeightedSum(a, w) => {
                let mut da = w.clone();
                for i in 0..da.rows() {
                    let gi = g.get(i, 0);
                    da.row_mut(i).iter_mut().for_each(|v| *v *= gi);
                }
                out.push((*a, da));
            }
            Op::WeightedSum(a, w) => out.push((*a, w.scale(g.item()))),
            Op::SelectRows(a, idx) => {
                let src = val(a);
                let mut da = DenseMatrix::zeros(src.rows(), src.cols());
                for (k, &i) in idx.iter().enumerate() {
                    for (o, x) in da.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                out.push((*a, da));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                rows,
                labels,
            } => {
                let z = val(logits);
                let scale = g.item() / rows.len() as f64;
                let mut dz = DenseMatrix::zeros(z.rows(), z.cols());
                for (&r, &lab) in rows.iter().zip(labels) {
                    let row = z.row(r);
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = row.iter().map(|x| (x - m).exp()).sum();
                    let drow = dz.row_mut(r);
                    for (j, (d, x)) in drow.iter_mut().zip(row).enumerate() {
                        let p = (x - m).exp() / denom;
                        *d += scale * (p - if j == lab { 1.0 } else { 0.0 });
                    }
                }
                out.push((*logits, dz));
            }
        }
        for (_, m) in &out {
            if !m.is_finite() {
                return Err(Gp2fError::Numeric {
                    op: format!("backward of {}", node.op.name()),
                });
            }
        }
        Ok(out)
    }

    /// Re-run every recorded primitive from the stored leaves.
    pub fn replay(&self) -> Result<Vec<DenseMatrix>> {
        let mut replayed = Tape::new();
        for node in &self.nodes {
            match node.op {
                Op::Leaf => {
                    replayed.nodes.push(node.clone());
                }
                ref op => {
                    let value = replayed.eval(op)?;
                    replayed.nodes.push(Node {
                        value,
                        op: op.clone(),
                        requires_grad: node.requires_grad,
                    });
                }
            }
        }
        Ok(replayed.nodes.into_iter().map(|n| n.value).collect())
    }

    /// True when [`Tape::replay`] reproduces every recorded value bit for bit.
    pub fn verify_replay(&self) -> Result<bool> {
        let values = self.replay()?;
        Ok(values.iter().zip(&self.nodes).all(|(v, n)| {
            v.shape() == n.value.shape()
                && v.data()
                    .iter()
                    .zip(n.value.data())
                    .all(|(a, b)| a.to_bits() == b.to_bits())
        }))
    }

    /// Inputs to relu nodes lying within `tol` of the kink.
    pub(crate) fn relu_kink_count(&self, tol: f64) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(self.nodes[a.0].value.data().iter().filter(|x| x.abs() <= tol).count()),
                _ => None,
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::new();
        let w = t.param(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let s = t.sum(w).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap(), &DenseMatrix::filled(2, 2, 1.0));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let w = t.param(DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.0]]).unwrap());
        let r = t.relu(w).unwrap();
        let s = t.sum(r).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(
            g.get(w).unwrap(),
            &DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap()
        );
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let a = t.constant(DenseMatrix::filled(2, 2, 1.0));
        let w = t.param(DenseMatrix::filled(2, 2, 0.5));
        let p = t.matmul(a, w).unwrap();
        let s = t.sum(p).unwrap();
        let g = t.backward(s).unwrap();
        assert!(g.get(a).is_none());
        assert!(g.get(w).is_some());
    }

    #[test]
    fn non_finite_is_reported_with_op_name() {
        let mut t = Tape::new();
        let a = t.constant(DenseMatrix::filled(1, 1, -1.0));
        match t.log(a) {
            Err(Gp2fError::Numeric { op }) => assert_eq!(op, "log"),
            other => panic!("expected numeric error, got {other:?}"),
        }
        let b = t.constant(DenseMatrix::filled(1, 1, 1000.0));
        assert!(matches!(t.exp(b), Err(Gp2fError::Numeric { .. })));
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mut t = Tape::new();
        let a = t.constant(DenseMatrix::zeros(2, 3));
        let b = t.constant(DenseMatrix::zeros(2, 3));
        assert!(matches!(t.matmul(a, b), Err(Gp2fError::Dimension { .. })));
        let c = t.constant(DenseMatrix::zeros(2, 2));
        assert!(matches!(t.scale_by(a, c), Err(Gp2fError::Dimension { .. })));
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let mut t = Tape::new();
        let z = t.constant(DenseMatrix::zeros(2, 3));
        assert!(matches!(
            t.softmax_cross_entropy(z, vec![0, 1], vec![0, 3]),
            Err(Gp2fError::Validation(_))
        ));
    }

    #[test]
    fn zero_row_normalizes_to_zero() {
        let mut t = Tape::new();
        let a = t.param(DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap());
        let n = t.row_l2_normalize(a).unwrap();
        assert_eq!(t.value(n).row(0), &[0.0, 0.0]);
        assert_eq!(t.value(n).row(1), &[0.6, 0.8]);
    }

    #[test]
    fn replay_is_bitwise() {
        let mut t = Tape::new();
        let a = t.param(DenseMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.37 - 1.0));
        let b = t.row_l2_normalize(a).unwrap();
        let c = t.matmul_t(b, b).unwrap();
        let d = t.exp(c).unwrap();
        let e = t.log(d).unwrap();
        let _ = t.mean(e).unwrap();
        assert!(t.verify_replay().unwrap());
    }
}
