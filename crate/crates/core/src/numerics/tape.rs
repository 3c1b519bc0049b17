//! Reverse-mode differentiation over dense matrices.
//!
//! Every primitive evaluates eagerly, stores its output on the [`Tape`], and
//! records what it needs to propagate adjoints. [`Tape::backward`] replays the
//! recorded operations in reverse order.

use std::sync::Arc;

use super::matrix::{gemm, GemmOperand};
use super::resample::{pool_into, PoolMode, Pooling};
use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mae,
    Mse,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mae" => Ok(LossKind::Mae),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::config(format!(
                "unknown loss `{other}` (expected mae or mse)"
            ))),
        }
    }
}

/// Local backward rule of a user-supplied primitive: maps the output adjoint
/// and the input values to one adjoint per input.
pub type BackwardFn = Box<dyn Fn(&Matrix, &[&Matrix]) -> Vec<Matrix> + Send + Sync>;

enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Expand { x: Var, basis: Arc<Matrix> },
    Relu(Var),
    Pool {
        x: Var,
        pooling: Pooling,
        routes: Vec<usize>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Loss {
        pred: Var,
        target: Arc<Matrix>,
        kind: LossKind,
    },
    L1 { weights: Vec<Var>, lambda: f64 },
    Custom {
        inputs: Vec<Var>,
        backward: BackwardFn,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Recorded forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    ops: usize,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Adjoints {
    adj: Vec<Option<Matrix>>,
}

impl Adjoints {
    /// Adjoint of `v`, or `None` when no gradient flowed into it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.adj.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.adj.get_mut(v.0).and_then(Option::take)
    }
}

fn dim_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Dimension {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded primitive operations (inputs are not counted).
    pub fn len(&self) -> usize {
        self.ops
    }

    pub fn is_empty(&self) -> bool {
        self.ops == 0
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// An input that never receives an adjoint.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn record(&mut self, name: &'static str, value: Matrix, op: Op, needs_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.ops += 1;
        Ok(Var(self.nodes.len() - 1))
    }

    /// `x · W + b` with `x: N×I`, `W: I×O`, `b: 1×O`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.rows() {
            return Err(dim_err("affine", xv, wv));
        }
        if bv.shape() != (1, wv.cols()) {
            return Err(dim_err("affine bias", wv, bv));
        }
        let mut out = Matrix::zeros(xv.rows(), wv.cols());
        for r in 0..out.rows() {
            out.row_mut(r).copy_from_slice(bv.as_slice());
        }
        gemm(GemmOperand::plain(xv), GemmOperand::plain(wv), &mut out, 1.0);
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.record("affine", out, Op::Affine { x, w, b }, needs)
    }

    /// `x · basis` for a fixed (non-learned) basis matrix.
    pub fn expand(&mut self, x: Var, basis: Arc<Matrix>) -> Result<Var> {
        let out = self.value(x).matmul(&basis)?;
        let needs = self.needs(x);
        self.record("basis expansion", out, Op::Expand { x, basis }, needs)
    }

    /// Elementwise `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let needs = self.needs(x);
        self.record("relu", out, Op::Relu(x), needs)
    }

    /// Row-wise 1-d pooling.
    pub fn pool(&mut self, x: Var, pooling: Pooling) -> Result<Var> {
        let xv = self.value(x);
        pooling.validate(xv.cols())?;
        let width = pooling.output_len(xv.cols());
        let mut out = Matrix::zeros(xv.rows(), width);
        let mut routes = vec![0usize; xv.rows() * width];
        for r in 0..xv.rows() {
            pool_into(
                xv.row(r),
                &pooling,
                out.row_mut(r),
                Some(&mut routes[r * width..(r + 1) * width]),
            );
        }
        let needs = self.needs(x);
        self.record(
            "pool",
            out,
            Op::Pool {
                x,
                pooling,
                routes,
            },
            needs,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        self.record("add", out, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        self.record("sub", out, Op::Sub(a, b), needs)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v * factor);
        let needs = self.needs(x);
        self.record("scale", out, Op::Scale(x, factor), needs)
    }

    /// Sum of all entries, as a `1 × 1` matrix.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Matrix::filled(1, 1, self.value(x).sum());
        let needs = self.needs(x);
        self.record("sum", out, Op::Sum(x), needs)
    }

    /// Mean absolute or mean squared error over all entries of `pred`.
    pub fn loss(&mut self, pred: Var, target: Arc<Matrix>, kind: LossKind) -> Result<Var> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() {
            return Err(dim_err("loss", &target, pv));
        }
        if pv.is_empty() {
            return Err(Error::config("loss over an empty prediction"));
        }
        let n = pv.len() as f64;
        let total: f64 = pv
            .as_slice()
            .iter()
            .zip(target.as_slice())
            .map(|(p, y)| match kind {
                LossKind::Mae => (p - y).abs(),
                LossKind::Mse => (p - y) * (p - y),
            })
            .sum();
        let needs = self.needs(pred);
        self.record(
            "loss",
            Matrix::filled(1, 1, total / n),
            Op::Loss { pred, target, kind },
            needs,
        )
    }

    /// `lambda · Σ |w|` over every entry of the given weight matrices.
    pub fn l1(&mut self, weights: &[Var], lambda: f64) -> Result<Var> {
        if !(lambda >= 0.0) {
            return Err(Error::config(format!(
                "L1 strength must be non-negative, got {lambda}"
            )));
        }
        let total: f64 = weights
            .iter()
            .map(|&w| self.value(w).as_slice().iter().map(|v| v.abs()).sum::<f64>())
            .sum();
        let needs = weights.iter().any(|&w| self.needs(w));
        self.record(
            "l1",
            Matrix::filled(1, 1, lambda * total),
            Op::L1 {
                weights: weights.to_vec(),
                lambda,
            },
            needs,
        )
    }

    /// Records a primitive whose forward value is computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], value: Matrix, backward: BackwardFn) -> Result<Var> {
        let needs = inputs.iter().any(|&v| self.needs(v));
        self.record(
            "custom",
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward,
            },
            needs,
        )
    }

    /// Smallest distance of any recorded value to a point where the
    /// recorded function is not differentiable (ReLU at 0, max-pool ties,
    /// zero MAE residuals, zero L1 weights). Used to pick points where
    /// finite differences are meaningful.
    pub fn min_kink_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for v in self.value(*x).as_slice() {
                        best = best.min(v.abs());
                    }
                }
                Op::Pool { x, pooling, .. } if pooling.mode == PoolMode::Max => {
                    let xv = self.value(*x);
                    let width = pooling.output_len(xv.cols());
                    for r in 0..xv.rows() {
                        for w in 0..width {
                            let s = w * pooling.stride;
                            let mut win: Vec<f64> = xv.row(r)[s..s + pooling.kernel].to_vec();
                            win.sort_by(|a, b| b.total_cmp(a));
                            if win.len() > 1 {
                                best = best.min(win[0] - win[1]);
                            }
                        }
                    }
                }
                Op::Loss {
                    pred,
                    target,
                    kind: LossKind::Mae,
                } => {
                    for (p, y) in self.value(*pred).as_slice().iter().zip(target.as_slice()) {
                        best = best.min((p - y).abs());
                    }
                }
                Op::L1 { weights, .. } => {
                    for w in weights {
                        for v in self.value(*w).as_slice() {
                            best = best.min(v.abs());
                        }
                    }
                }
                _ => {}
            }
        }
        best
    }

    /// Propagates adjoints from `output`, seeded with ones, back to every
    /// recorded value that depends on a differentiable input.
    pub fn backward(&self, output: Var) -> Adjoints {
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        let out = &self.nodes[output.0].value;
        adj[output.0] = Some(Matrix::filled(out.rows(), out.cols(), 1.0));

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(&node.op, &g, &mut adj);
            adj[i] = Some(g);
        }
        Adjoints { adj }
    }

    fn slot<'a>(&self, adj: &'a mut [Option<Matrix>], v: Var) -> Option<&'a mut Matrix> {
        if !self.needs(v) {
            return None;
        }
        let (r, c) = self.value(v).shape();
        Some(adj[v.0].get_or_insert_with(|| Matrix::zeros(r, c)))
    }

    fn propagate(&self, op: &Op, g: &Matrix, adj: &mut [Option<Matrix>]) {
        match op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                if let Some(dx) = self.slot(adj, *x) {
                    gemm(GemmOperand::plain(g), GemmOperand::transposed(wv), dx, 1.0);
                }
                if let Some(dw) = self.slot(adj, *w) {
                    gemm(GemmOperand::transposed(xv), GemmOperand::plain(g), dw, 1.0);
                }
                if let Some(db) = self.slot(adj, *b) {
                    for r in 0..g.rows() {
                        for (d, v) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                }
            }
            Op::Expand { x, basis } => {
                if let Some(dx) = self.slot(adj, *x) {
                    gemm(GemmOperand::plain(g), GemmOperand::transposed(basis), dx, 1.0);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                if let Some(dx) = self.slot(adj, *x) {
                    for ((d, &v), &gv) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()).zip(g.as_slice()) {
                        if v > 0.0 {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Pool {
                x,
                pooling,
                routes,
            } => {
                let width = g.cols();
                if let Some(dx) = self.slot(adj, *x) {
                    let inv = 1.0 / pooling.kernel as f64;
                    for r in 0..g.rows() {
                        let grow = g.row(r);
                        let drow = dx.row_mut(r);
                        for (w, &gv) in grow.iter().enumerate() {
                            match pooling.mode {
                                PoolMode::Avg => {
                                    let s = w * pooling.stride;
                                    for d in &mut drow[s..s + pooling.kernel] {
                                        *d += gv * inv;
                                    }
                                }
                                PoolMode::Max | PoolMode::Stride => {
                                    drow[routes[r * width + w]] += gv;
                                }
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = self.slot(adj, *a) {
                    let _ = da.add_assign(g);
                }
                if let Some(db) = self.slot(adj, *b) {
                    let _ = db.add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(da) = self.slot(adj, *a) {
                    let _ = da.add_assign(g);
                }
                if let Some(db) = self.slot(adj, *b) {
                    for (d, v) in db.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *d -= v;
                    }
                }
            }
            Op::Scale(x, factor) => {
                if let Some(dx) = self.slot(adj, *x) {
                    for (d, v) in dx.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *d += factor * v;
                    }
                }
            }
            Op::Sum(x) => {
                let gv = g.get(0, 0);
                if let Some(dx) = self.slot(adj, *x) {
                    for d in dx.as_mut_slice() {
                        *d += gv;
                    }
                }
            }
            Op::Loss { pred, target, kind } => {
                let pv = self.value(*pred);
                let scale = g.get(0, 0) / pv.len() as f64;
                if let Some(dp) = self.slot(adj, *pred) {
                    for ((d, p), y) in dp.as_mut_slice().iter_mut().zip(pv.as_slice()).zip(target.as_slice()) {
                        let e = p - y;
                        *d += scale
                            * match kind {
                                LossKind::Mae => sign(e),
                                LossKind::Mse => 2.0 * e,
                            };
                    }
                }
            }
            Op::L1 { weights, lambda } => {
                let scale = g.get(0, 0) * lambda;
                for &w in weights {
                    let wv = self.value(w);
                    if let Some(dw) = self.slot(adj, w) {
                        for (d, v) in dw.as_mut_slice().iter_mut().zip(wv.as_slice()) {
                            *d += scale * sign(*v);
                        }
                    }
                }
            }
            Op::Custom { inputs, backward } => {
                let values: Vec<&Matrix> = inputs.iter().map(|&v| self.value(v)).collect();
                let grads = backward(g, &values);
                for (&v, gv) in inputs.iter().zip(grads) {
                    if let Some(d) = self.slot(adj, v) {
                        let _ = d.add_assign(&gv);
                    }
                }
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn affine_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(m(1, 2, &[1.0, 2.0]));
        let w = tape.leaf(Matrix::identity(2));
        let b = tape.leaf(Matrix::zeros(1, 2));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).as_slice(), &[1.0, 2.0]);

        let w = tape.leaf(m(2, 1, &[1.0, 1.0]));
        let b = tape.leaf(m(1, 1, &[3.0]));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).as_slice(), &[6.0]);
    }

    #[test]
    fn affine_rejects_mismatched_shapes() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::zeros(1, 3));
        let w = tape.leaf(Matrix::zeros(2, 2));
        let b = tape.leaf(Matrix::zeros(1, 2));
        let err = tape.affine(x, w, b).unwrap_err();
        assert!(err.to_string().contains("(1, 3)"), "{err}");
    }

    #[test]
    fn weight_gradient_of_summed_affine_is_column_sums() {
        let mut tape = Tape::new();
        let xm = m(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = tape.constant(xm.clone());
        let w = tape.leaf(m(2, 2, &[0.1, 0.2, 0.3, 0.4]));
        let b = tape.leaf(Matrix::zeros(1, 2));
        let y = tape.affine(x, w, b).unwrap();
        let s = tape.sum(y).unwrap();
        let adj = tape.backward(s);
        let dw = adj.get(w).unwrap();
        // dW[i, o] = Σ_n x[n, i]
        assert_eq!(dw.as_slice(), &[9.0, 9.0, 12.0, 12.0]);
        assert_eq!(adj.get(b).unwrap().as_slice(), &[3.0, 3.0]);
        assert!(adj.get(x).is_none());
    }

    #[test]
    fn relu_forward_and_backward() {
        let mut tape = Tape::new();
        let x = tape.leaf(m(1, 3, &[-1.0, 0.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).as_slice(), &[0.0, 0.0, 2.0]);
        let s = tape.sum(y).unwrap();
        let adj = tape.backward(s);
        assert_eq!(adj.get(x).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn loss_values() {
        let mut tape = Tape::new();
        let p = tape.leaf(m(1, 2, &[3.0, 4.0]));
        let y = Arc::new(Matrix::zeros(1, 2));
        let mae = tape.loss(p, y.clone(), LossKind::Mae).unwrap();
        let mse = tape.loss(p, y, LossKind::Mse).unwrap();
        assert_eq!(tape.value(mae).get(0, 0), 3.5);
        assert_eq!(tape.value(mse).get(0, 0), 12.5);

        let exact = tape.loss(p, Arc::new(m(1, 2, &[3.0, 4.0])), LossKind::Mae).unwrap();
        assert_eq!(tape.value(exact).get(0, 0), 0.0);
        let adj = tape.backward(exact);
        assert_eq!(adj.get(p).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(tape.loss(p, Arc::new(Matrix::zeros(1, 3)), LossKind::Mae).is_err());
    }

    #[test]
    fn l1_values() {
        let mut tape = Tape::new();
        let w = tape.leaf(m(1, 3, &[1.0, -2.0, 3.0]));
        let pen = tape.l1(&[w], 0.1).unwrap();
        assert!((tape.value(pen).get(0, 0) - 0.6).abs() < 1e-15);
        let off = tape.l1(&[w], 0.0).unwrap();
        assert_eq!(tape.value(off).get(0, 0), 0.0);
        assert!(tape.l1(&[w], -1.0).is_err());
    }

    #[test]
    fn tape_length_counts_operations_only() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::filled(1, 4, 1.0));
        let a = tape.relu(x).unwrap();
        let b = tape.scale(a, 2.0).unwrap();
        let _ = tape.sum(b).unwrap();
        assert_eq!(tape.len(), 3);
    }

    #[test]
    fn non_finite_results_are_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::filled(1, 1, f64::MAX));
        assert!(matches!(tape.scale(x, 10.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn max_pool_routes_adjoint_to_argmax() {
        let mut tape = Tape::new();
        let x = tape.leaf(m(1, 4, &[1.0, 3.0, 3.0, 2.0]));
        let y = tape
            .pool(
                x,
                Pooling {
                    kernel: 3,
                    stride: 1,
                    mode: PoolMode::Max,
                },
            )
            .unwrap();
        let s = tape.sum(y).unwrap();
        let adj = tape.backward(s);
        assert_eq!(adj.get(x).unwrap().as_slice(), &[0.0, 2.0, 0.0, 0.0]);
    }
}
