//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Operations execute eagerly and append a node per result, so the tape is
//! topologically ordered by construction. [`Tape::backward`] seeds the scalar
//! loss with cotangent 1 and sweeps the nodes once in reverse, accumulating
//! gradients into per-node buffers; a node consumed by several downstream ops
//! receives the sum of their contributions.
//!
//! Every operation checks its output for NaN/inf and fails loudly instead of
//! letting poison propagate into an optimizer step.

use super::scalar::Scalar;
use super::tensor::{slice_is_finite, Tensor};
use crate::error::{Error, Result};

/// Probabilities below this are clamped inside the cross-entropy op, which
/// bounds both the loss and its gradient. Clamped entries contribute zero
/// gradient (the clamp is the active branch there).
pub const PROB_CLAMP: f64 = 1e-12;

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

impl ValueId {
    /// Position in the tape (construction order).
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S: Scalar> {
    Leaf,
    Param,
    Matmul { a: ValueId, b: ValueId },
    Add { a: ValueId, b: ValueId },
    Sub { a: ValueId, b: ValueId },
    Mul { a: ValueId, b: ValueId },
    Scale { a: ValueId, c: S },
    AddRow { a: ValueId, row: ValueId },
    SubRow { a: ValueId, row: ValueId },
    MulRow { a: ValueId, row: ValueId },
    DivRow { a: ValueId, row: ValueId },
    MeanRows { a: ValueId },
    SumAll { a: ValueId },
    MeanAll { a: ValueId },
    Sigmoid { a: ValueId },
    Relu { a: ValueId },
    Lrelu { a: ValueId, slope: S },
    Softmax { a: ValueId },
    Sqrt { a: ValueId },
    Clamp { a: ValueId, lo: S, hi: S },
    Entry { a: ValueId, i: usize, j: usize },
    MulScalar { a: ValueId, s: ValueId },
    AddScalar { a: ValueId, s: ValueId },
    CrossEntropyMean { probs: ValueId, targets: Vec<usize>, clamped: usize },
}

struct Node<S: Scalar> {
    op: Op<S>,
    value: Tensor<S>,
}

/// Wengert tape: eager forward evaluation plus one reverse gradient sweep.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, id: ValueId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` loss w.r.t. node `id`, if it received
    /// any contribution.
    pub fn grad(&self, id: ValueId) -> Option<&[S]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor shaped like the node's value.
    pub fn grad_tensor(&self, id: ValueId) -> Option<Tensor<S>> {
        let (r, c) = self.nodes[id.0].value.shape();
        self.grad(id).map(|g| Tensor::from_raw(r, c, g.to_vec()))
    }

    /// Number of probability entries the cross-entropy node clamped; `None`
    /// for non-cross-entropy nodes.
    pub fn ce_clamped_count(&self, id: ValueId) -> Option<usize> {
        match self.nodes[id.0].op {
            Op::CrossEntropyMean { clamped, .. } => Some(clamped),
            _ => None,
        }
    }

    fn push(
        &mut self,
        name: &'static str,
        op: Op<S>,
        rows: usize,
        cols: usize,
        data: Vec<S>,
    ) -> Result<ValueId> {
        debug_assert_eq!(data.len(), rows * cols, "{name}: bad output buffer");
        if !slice_is_finite(&data) {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { op, value: Tensor::from_raw(rows, cols, data) });
        Ok(ValueId(self.nodes.len() - 1))
    }

    /// Record a constant input.
    pub fn leaf(&mut self, t: Tensor<S>) -> ValueId {
        self.nodes.push(Node { op: Op::Leaf, value: t });
        ValueId(self.nodes.len() - 1)
    }

    /// Record a trainable parameter (value copied onto the tape).
    pub fn param(&mut self, t: &Tensor<S>) -> ValueId {
        self.nodes.push(Node { op: Op::Param, value: t.clone() });
        ValueId(self.nodes.len() - 1)
    }

    /// Constant all-zeros node.
    pub fn zeros(&mut self, rows: usize, cols: usize) -> ValueId {
        self.leaf(Tensor::zeros(rows, cols))
    }

    fn shape_of(&self, id: ValueId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn same_shape(&self, name: &'static str, a: ValueId, b: ValueId) -> Result<(usize, usize)> {
        let sa = self.shape_of(a);
        let sb = self.shape_of(b);
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: name,
                detail: format!("{}x{} vs {}x{}", sa.0, sa.1, sb.0, sb.1),
            });
        }
        Ok(sa)
    }

    fn row_operand(&self, name: &'static str, a: ValueId, row: ValueId) -> Result<(usize, usize)> {
        let (r, c) = self.shape_of(a);
        let (rr, rc) = self.shape_of(row);
        if rr != 1 || rc != c {
            return Err(Error::ShapeMismatch {
                op: name,
                detail: format!("operand is {r}x{c} but row vector is {rr}x{rc}"),
            });
        }
        Ok((r, c))
    }

    fn scalar_operand(&self, name: &'static str, s: ValueId) -> Result<S> {
        let (r, c) = self.shape_of(s);
        if (r, c) != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: name,
                detail: format!("scalar operand must be 1x1, got {r}x{c}"),
            });
        }
        Ok(self.nodes[s.0].value.data()[0])
    }

    /// Matrix product `a (m x k) * b (k x n)`.
    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (m, ka) = self.shape_of(a);
        let (kb, n) = self.shape_of(b);
        if ka != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("{m}x{ka} * {kb}x{n}"),
            });
        }
        let mut out = vec![S::zero(); m * n];
        S::gemm(
            false,
            false,
            m,
            n,
            ka,
            S::one(),
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            S::zero(),
            &mut out,
        );
        self.push("matmul", Op::Matmul { a, b }, m, n, out)
    }

    /// Elementwise `a + b`.
    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (r, c) = self.same_shape("add", a, b)?;
        let out = zip_map(self.nodes[a.0].value.data(), self.nodes[b.0].value.data(), |x, y| x + y);
        self.push("add", Op::Add { a, b }, r, c, out)
    }

    /// Elementwise `a - b`.
    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (r, c) = self.same_shape("sub", a, b)?;
        let out = zip_map(self.nodes[a.0].value.data(), self.nodes[b.0].value.data(), |x, y| x - y);
        self.push("sub", Op::Sub { a, b }, r, c, out)
    }

    /// Elementwise `a * b` (Hadamard product).
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let out = zip_map(self.nodes[a.0].value.data(), self.nodes[b.0].value.data(), |x, y| x * y);
        self.push("mul", Op::Mul { a, b }, r, c, out)
    }

    /// Constant scaling `c * a`.
    pub fn scale(&mut self, a: ValueId, c: S) -> Result<ValueId> {
        if !c.is_finite() {
            return Err(Error::NonFinite { op: "scale" });
        }
        let (r, cc) = self.shape_of(a);
        let out = self.nodes[a.0].value.data().iter().map(|&x| x * c).collect();
        self.push("scale", Op::Scale { a, c }, r, cc, out)
    }

    /// Broadcast add: `out[i][j] = a[i][j] + row[0][j]`.
    pub fn add_row(&mut self, a: ValueId, row: ValueId) -> Result<ValueId> {
        let (r, c) = self.row_operand("add_row", a, row)?;
        let out = broadcast(self.nodes[a.0].value.data(), self.nodes[row.0].value.data(), c, |x, y| x + y);
        self.push("add_row", Op::AddRow { a, row }, r, c, out)
    }

    /// Broadcast subtract: `out[i][j] = a[i][j] - row[0][j]`.
    pub fn sub_row(&mut self, a: ValueId, row: ValueId) -> Result<ValueId> {
        let (r, c) = self.row_operand("sub_row", a, row)?;
        let out = broadcast(self.nodes[a.0].value.data(), self.nodes[row.0].value.data(), c, |x, y| x - y);
        self.push("sub_row", Op::SubRow { a, row }, r, c, out)
    }

    /// Broadcast multiply: `out[i][j] = a[i][j] * row[0][j]`.
    pub fn mul_row(&mut self, a: ValueId, row: ValueId) -> Result<ValueId> {
        let (r, c) = self.row_operand("mul_row", a, row)?;
        let out = broadcast(self.nodes[a.0].value.data(), self.nodes[row.0].value.data(), c, |x, y| x * y);
        self.push("mul_row", Op::MulRow { a, row }, r, c, out)
    }

    /// Broadcast divide: `out[i][j] = a[i][j] / row[0][j]`.
    pub fn div_row(&mut self, a: ValueId, row: ValueId) -> Result<ValueId> {
        let (r, c) = self.row_operand("div_row", a, row)?;
        let out = broadcast(self.nodes[a.0].value.data(), self.nodes[row.0].value.data(), c, |x, y| x / y);
        self.push("div_row", Op::DivRow { a, row }, r, c, out)
    }

    /// Column means: `m x c` to `1 x c`.
    pub fn mean_rows(&mut self, a: ValueId) -> Result<ValueId> {
        let (r, c) = self.shape_of(a);
        if r == 0 {
            return Err(Error::ShapeMismatch { op: "mean_rows", detail: "empty batch".into() });
        }
        let inv = S::from_f64(1.0 / r as f64);
        let data = self.nodes[a.0].value.data();
        let mut out = vec![S::zero(); c];
        for i in 0..r {
            let row = &data[i * c..(i + 1) * c];
            for j in 0..c {
                out[j] += row[j];
            }
        }
        for v in out.iter_mut() {
            *v *= inv;
        }
        self.push("mean_rows", Op::MeanRows { a }, 1, c, out)
    }

    /// Sum of all entries, as `1 x 1`.
    pub fn sum_all(&mut self, a: ValueId) -> Result<ValueId> {
        let s: S = self.nodes[a.0].value.data().iter().copied().sum();
        self.push("sum_all", Op::SumAll { a }, 1, 1, vec![s])
    }

    /// Mean of all entries, as `1 x 1`.
    pub fn mean_all(&mut self, a: ValueId) -> Result<ValueId> {
        let (r, c) = self.shape_of(a);
        if r * c == 0 {
            return Err(Error::ShapeMismatch { op: "mean_all", detail: "empty tensor".into() });
        }
        let s: S = self.nodes[a.0].value.data().iter().copied().sum();
        let m = s * S::from_f64(1.0 / (r * c) as f64);
        self.push("mean_all", Op::MeanAll { a }, 1, 1, vec![m])
    }

    /// Elementwise logistic sigmoid.
    pub fn sigmoid(&mut self, a: ValueId) -> Result<ValueId> {
        let (r, c) = self.shape_of(a);
        let out = self
            .nodes[a.0]
            .value
            .data()
            .iter()
            .map(|&x| S::one() / (S::one() + (-x).exp()))
            .collect();
        self.push("sigmoid", Op::Sigmoid { a }, r, c, out)
    }

    /// Elementwise rectifier `max(0, x)`.
    pub fn relu(&mut self, a: ValueId) -> Result<ValueId> {
        let (r, c) = self.shape_of(a);
        let z = S::zero();
        let out = self.nodes[a.0].value.data().iter().map(|&x| if x > z { x } else { z }).collect();
        self.push("relu", Op::Relu { a }, r, c, out)
    }

    /// Leaky rectifier: `x` for `x >= 0`, else `slope * x`.
    pub fn lrelu(&mut self, a: ValueId, slope: S) -> Result<ValueId> {
        if !slope.is_finite() {
            return Err(Error::NonFinite { op: "lrelu" });
        }
        let (r, c) = self.shape_of(a);
        let z = S::zero();
        let out = self
            .nodes[a.0]
            .value
            .data()
            .iter()
            .map(|&x| if x >= z { x } else { slope * x })
            .collect();
        self.push("lrelu", Op::Lrelu { a, slope }, r, c, out)
    }

    /// Row-wise softmax with max subtraction for stability.
    pub fn softmax(&mut self, a: ValueId) -> Result<ValueId> {
        let (r, c) = self.shape_of(a);
        if c == 0 {
            return Err(Error::ShapeMismatch { op: "softmax", detail: "zero columns".into() });
        }
        let data = self.nodes[a.0].value.data();
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            let row = &data[i * c..(i + 1) * c];
            let mut mx = row[0];
            for &v in &row[1..] {
                if v > mx {
                    mx = v;
                }
            }
            let mut sum = S::zero();
            for j in 0..c {
                let e = (row[j] - mx).exp();
                out[i * c + j] = e;
                sum += e;
            }
            let inv = S::one() / sum;
            for j in 0..c {
                out[i * c + j] *= inv;
            }
        }
        self.push("softmax", Op::Softmax { a }, r, c, out)
    }

    /// Elementwise square root; inputs must be non-negative.
    ///
    /// The derivative at exactly 0 is taken as 0 (subgradient choice) so that
    /// a zero-variance column cannot poison the sweep with `inf * 0`.
    pub fn sqrt(&mut self, a: ValueId) -> Result<ValueId> {
        let (r, c) = self.shape_of(a);
        let out = self.nodes[a.0].value.data().iter().map(|&x| x.sqrt()).collect();
        self.push("sqrt", Op::Sqrt { a }, r, c, out)
    }

    /// Elementwise clamp into `[lo, hi]`; gradient passes only strictly inside.
    pub fn clamp(&mut self, a: ValueId, lo: S, hi: S) -> Result<ValueId> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Config(format!("clamp: invalid bounds [{lo}, {hi}]")));
        }
        let (r, c) = self.shape_of(a);
        let out = self
            .nodes[a.0]
            .value
            .data()
            .iter()
            .map(|&x| x.max(lo).min(hi))
            .collect();
        self.push("clamp", Op::Clamp { a, lo, hi }, r, c, out)
    }

    /// Single element `a[i][j]` as a `1 x 1` node.
    pub fn entry(&mut self, a: ValueId, i: usize, j: usize) -> Result<ValueId> {
        let (r, c) = self.shape_of(a);
        if i >= r || j >= c {
            return Err(Error::ShapeMismatch {
                op: "entry",
                detail: format!("({i},{j}) out of {r}x{c}"),
            });
        }
        let v = self.nodes[a.0].value.get(i, j);
        self.push("entry", Op::Entry { a, i, j }, 1, 1, vec![v])
    }

    /// Broadcast multiply by a `1 x 1` node: `out = a * s`.
    pub fn mul_scalar(&mut self, a: ValueId, s: ValueId) -> Result<ValueId> {
        let sv = self.scalar_operand("mul_scalar", s)?;
        let (r, c) = self.shape_of(a);
        let out = self.nodes[a.0].value.data().iter().map(|&x| x * sv).collect();
        self.push("mul_scalar", Op::MulScalar { a, s }, r, c, out)
    }

    /// Broadcast add of a `1 x 1` node: `out = a + s`.
    pub fn add_scalar(&mut self, a: ValueId, s: ValueId) -> Result<ValueId> {
        let sv = self.scalar_operand("add_scalar", s)?;
        let (r, c) = self.shape_of(a);
        let out = self.nodes[a.0].value.data().iter().map(|&x| x + sv).collect();
        self.push("add_scalar", Op::AddScalar { a, s }, r, c, out)
    }

    /// Mean categorical cross-entropy from probabilities.
    ///
    /// `probs` is `m x c` with rows expected to sum to 1 (softmax output);
    /// `targets` holds one class index per row. Probabilities below
    /// [`PROB_CLAMP`] are clamped before the log.
    pub fn cross_entropy_mean(&mut self, probs: ValueId, targets: &[usize]) -> Result<ValueId> {
        let (m, c) = self.shape_of(probs);
        if targets.len() != m {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy_mean",
                detail: format!("{m} rows but {} targets", targets.len()),
            });
        }
        if m == 0 {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy_mean",
                detail: "empty batch".into(),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy_mean",
                detail: format!("target class {bad} out of range for {c} columns"),
            });
        }
        let clamp = S::from_f64(PROB_CLAMP);
        let data = self.nodes[probs.0].value.data();
        let mut sum = 0.0f64;
        let mut clamped = 0usize;
        for (i, &t) in targets.iter().enumerate() {
            let p = data[i * c + t];
            let p = if p < clamp {
                clamped += 1;
                clamp
            } else {
                p
            };
            sum -= p.as_f64().ln();
        }
        let val = S::from_f64(sum / m as f64);
        self.push(
            "cross_entropy_mean",
            Op::CrossEntropyMean { probs, targets: targets.to_vec(), clamped },
            1,
            1,
            vec![val],
        )
    }

    /// Reverse sweep from a `1 x 1` loss node.
    ///
    /// Gradients of earlier sweeps are discarded. Fails if any accumulated
    /// gradient goes non-finite.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if self.shape_of(loss) != (1, 1) {
            let (r, c) = self.shape_of(loss);
            return Err(Error::ShapeMismatch {
                op: "backward",
                detail: format!("loss must be 1x1, got {r}x{c}"),
            });
        }
        let n = self.nodes.len();
        self.grads = vec![None; n];
        self.grads[loss.0] = Some(vec![S::one()]);

        for id in (0..=loss.0).rev() {
            if self.grads[id].is_none() {
                continue;
            }
            let (head, tail) = self.grads.split_at_mut(id);
            let g = tail[0].as_ref().expect("grad present").as_slice();
            let node = &self.nodes[id];
            let (rows, cols) = node.value.shape();
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::Matmul { a, b } => {
                    let (m, k) = self.nodes[a.0].value.shape();
                    let nn = cols;
                    debug_assert_eq!(rows, m);
                    {
                        let da = acc(&mut head[a.0], m * k);
                        // dA += g * B^T
                        S::gemm(false, true, m, k, nn, S::one(), g, self.nodes[b.0].value.data(), S::one(), da);
                    }
                    {
                        let db = acc(&mut head[b.0], k * nn);
                        // dB += A^T * g
                        S::gemm(true, false, k, nn, m, S::one(), self.nodes[a.0].value.data(), g, S::one(), db);
                    }
                }
                Op::Add { a, b } => {
                    axpy(acc(&mut head[a.0], g.len()), g, S::one());
                    axpy(acc(&mut head[b.0], g.len()), g, S::one());
                }
                Op::Sub { a, b } => {
                    axpy(acc(&mut head[a.0], g.len()), g, S::one());
                    axpy(acc(&mut head[b.0], g.len()), g, -S::one());
                }
                Op::Mul { a, b } => {
                    let av = self.nodes[a.0].value.data();
                    let bv = self.nodes[b.0].value.data();
                    {
                        let da = acc(&mut head[a.0], g.len());
                        for i in 0..g.len() {
                            da[i] += g[i] * bv[i];
                        }
                    }
                    let db = acc(&mut head[b.0], g.len());
                    for i in 0..g.len() {
                        db[i] += g[i] * av[i];
                    }
                }
                Op::Scale { a, c } => {
                    axpy(acc(&mut head[a.0], g.len()), g, *c);
                }
                Op::AddRow { a, row } => {
                    axpy(acc(&mut head[a.0], g.len()), g, S::one());
                    let dr = acc(&mut head[row.0], cols);
                    for i in 0..rows {
                        for j in 0..cols {
                            dr[j] += g[i * cols + j];
                        }
                    }
                }
                Op::SubRow { a, row } => {
                    axpy(acc(&mut head[a.0], g.len()), g, S::one());
                    let dr = acc(&mut head[row.0], cols);
                    for i in 0..rows {
                        for j in 0..cols {
                            dr[j] -= g[i * cols + j];
                        }
                    }
                }
                Op::MulRow { a, row } => {
                    let av = self.nodes[a.0].value.data();
                    let rv = self.nodes[row.0].value.data();
                    {
                        let da = acc(&mut head[a.0], g.len());
                        for i in 0..rows {
                            for j in 0..cols {
                                da[i * cols + j] += g[i * cols + j] * rv[j];
                            }
                        }
                    }
                    let dr = acc(&mut head[row.0], cols);
                    for i in 0..rows {
                        for j in 0..cols {
                            dr[j] += g[i * cols + j] * av[i * cols + j];
                        }
                    }
                }
                Op::DivRow { a, row } => {
                    let av = self.nodes[a.0].value.data();
                    let rv = self.nodes[row.0].value.data();
                    {
                        let da = acc(&mut head[a.0], g.len());
                        for i in 0..rows {
                            for j in 0..cols {
                                da[i * cols + j] += g[i * cols + j] / rv[j];
                            }
                        }
                    }
                    let dr = acc(&mut head[row.0], cols);
                    for i in 0..rows {
                        for j in 0..cols {
                            let q = rv[j];
                            dr[j] -= g[i * cols + j] * av[i * cols + j] / (q * q);
                        }
                    }
                }
                Op::MeanRows { a } => {
                    let (ar, ac) = self.nodes[a.0].value.shape();
                    let inv = S::from_f64(1.0 / ar as f64);
                    let da = acc(&mut head[a.0], ar * ac);
                    for i in 0..ar {
                        for j in 0..ac {
                            da[i * ac + j] += g[j] * inv;
                        }
                    }
                }
                Op::SumAll { a } => {
                    let len = self.nodes[a.0].value.len();
                    let da = acc(&mut head[a.0], len);
                    let g0 = g[0];
                    for v in da.iter_mut() {
                        *v += g0;
                    }
                }
                Op::MeanAll { a } => {
                    let len = self.nodes[a.0].value.len();
                    let da = acc(&mut head[a.0], len);
                    let g0 = g[0] * S::from_f64(1.0 / len as f64);
                    for v in da.iter_mut() {
                        *v += g0;
                    }
                }
                Op::Sigmoid { a } => {
                    let y = node.value.data();
                    let da = acc(&mut head[a.0], g.len());
                    for i in 0..g.len() {
                        da[i] += g[i] * y[i] * (S::one() - y[i]);
                    }
                }
                Op::Relu { a } => {
                    let av = self.nodes[a.0].value.data();
                    let da = acc(&mut head[a.0], g.len());
                    let z = S::zero();
                    for i in 0..g.len() {
                        if av[i] > z {
                            da[i] += g[i];
                        }
                    }
                }
                Op::Lrelu { a, slope } => {
                    let av = self.nodes[a.0].value.data();
                    let da = acc(&mut head[a.0], g.len());
                    let z = S::zero();
                    for i in 0..g.len() {
                        da[i] += if av[i] >= z { g[i] } else { g[i] * *slope };
                    }
                }
                Op::Softmax { a } => {
                    let y = node.value.data();
                    let da = acc(&mut head[a.0], g.len());
                    for i in 0..rows {
                        let row = i * cols;
                        let mut dot = S::zero();
                        for j in 0..cols {
                            dot += g[row + j] * y[row + j];
                        }
                        for j in 0..cols {
                            da[row + j] += y[row + j] * (g[row + j] - dot);
                        }
                    }
                }
                Op::Sqrt { a } => {
                    let y = node.value.data();
                    let da = acc(&mut head[a.0], g.len());
                    let half = S::from_f64(0.5);
                    let z = S::zero();
                    for i in 0..g.len() {
                        if y[i] > z {
                            da[i] += g[i] * half / y[i];
                        }
                    }
                }
                Op::Clamp { a, lo, hi } => {
                    let av = self.nodes[a.0].value.data();
                    let da = acc(&mut head[a.0], g.len());
                    for i in 0..g.len() {
                        if av[i] > *lo && av[i] < *hi {
                            da[i] += g[i];
                        }
                    }
                }
                Op::Entry { a, i, j } => {
                    let (_, ac) = self.nodes[a.0].value.shape();
                    let len = self.nodes[a.0].value.len();
                    let da = acc(&mut head[a.0], len);
                    da[i * ac + j] += g[0];
                }
                Op::MulScalar { a, s } => {
                    let sv = self.nodes[s.0].value.data()[0];
                    let av = self.nodes[a.0].value.data();
                    {
                        let da = acc(&mut head[a.0], g.len());
                        for i in 0..g.len() {
                            da[i] += g[i] * sv;
                        }
                    }
                    let ds = acc(&mut head[s.0], 1);
                    let mut dot = S::zero();
                    for i in 0..g.len() {
                        dot += g[i] * av[i];
                    }
                    ds[0] += dot;
                }
                Op::AddScalar { a, s } => {
                    axpy(acc(&mut head[a.0], g.len()), g, S::one());
                    let ds = acc(&mut head[s.0], 1);
                    let mut sum = S::zero();
                    for &v in g {
                        sum += v;
                    }
                    ds[0] += sum;
                }
                Op::CrossEntropyMean { probs, targets, .. } => {
                    let (m, c) = self.nodes[probs.0].value.shape();
                    let pv = self.nodes[probs.0].value.data();
                    let clamp = S::from_f64(PROB_CLAMP);
                    let dp = acc(&mut head[probs.0], m * c);
                    let scale = g[0] * S::from_f64(-1.0 / m as f64);
                    for (i, &t) in targets.iter().enumerate() {
                        let p = pv[i * c + t];
                        if p >= clamp {
                            dp[i * c + t] += scale / p;
                        }
                    }
                }
            }
        }

        for (idx, gr) in self.grads.iter().enumerate() {
            if let Some(gv) = gr {
                if !slice_is_finite(gv) {
                    return Err(Error::NonFinite {
                        op: match self.nodes[idx].op {
                            Op::Matmul { .. } => "backward/matmul",
                            _ => "backward",
                        },
                    });
                }
            }
        }
        Ok(())
    }
}

fn zip_map<S: Scalar>(a: &[S], b: &[S], f: impl Fn(S, S) -> S) -> Vec<S> {
    a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect()
}

fn broadcast<S: Scalar>(a: &[S], row: &[S], cols: usize, f: impl Fn(S, S) -> S) -> Vec<S> {
    let mut out = Vec::with_capacity(a.len());
    for chunk in a.chunks(cols) {
        for j in 0..cols {
            out.push(f(chunk[j], row[j]));
        }
    }
    out
}

fn acc<S: Scalar>(slot: &mut Option<Vec<S>>, len: usize) -> &mut Vec<S> {
    slot.get_or_insert_with(|| vec![S::zero(); len])
}

fn axpy<S: Scalar>(dst: &mut [S], src: &[S], scale: S) {
    debug_assert_eq!(dst.len(), src.len());
    for i in 0..dst.len() {
        dst[i] += scale * src[i];
    }
}
