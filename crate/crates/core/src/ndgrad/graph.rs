use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// Operation catalog. Elementwise binary ops broadcast their right operand
/// when it is a single row (`[c]` or `[1, c]`) or a single element.
/// Row-wise ops (`Softmax`, `LogSoftmax`, `Concat`, `RowSum`) act on the last axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Offset(f64),
    Relu,
    Tanh,
    Exp,
    Log,
    Softplus,
    Square,
    Clamp { lo: f64, hi: f64 },
    Softmax,
    LogSoftmax,
    Concat,
    Sum,
    Mean,
    RowSum,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::Offset(_) => "offset",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Softplus => "softplus",
            OpKind::Square => "square",
            OpKind::Clamp { .. } => "clamp",
            OpKind::Softmax => "softmax",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::Concat => "concat",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::RowSum => "row_sum",
        }
    }

    fn arity(&self) -> usize {
        match self {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Concat => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Option<OpKind>,
    inputs: [NodeId; 2],
    value: Tensor,
    requires_grad: bool,
}

/// Define-by-run computation graph. Nodes are append-only, so every node's
/// inputs precede it.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the seed w.r.t. `id`; zeros when the node was not reached.
    pub fn get(&self, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }
}

#[derive(Clone, Copy)]
enum Bcast {
    Same,
    Row,
    Scalar,
}

impl Bcast {
    fn of(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Self> {
        if a.shape() == b.shape() {
            Ok(Bcast::Same)
        } else if b.len() == 1 {
            Ok(Bcast::Scalar)
        } else if b.rows() == 1 && b.cols() == a.cols() {
            Ok(Bcast::Row)
        } else {
            Err(Error::ShapeMismatch {
                op,
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            })
        }
    }

    #[inline]
    fn index(self, i: usize, cols: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Row => i % cols,
            Bcast::Scalar => 0,
        }
    }

    /// Sums a full-shape gradient down to the operand's shape.
    fn reduce(self, grad: Vec<f64>, cols: usize, shape: &[usize]) -> Tensor {
        match self {
            Bcast::Same => Tensor::from_parts(shape.to_vec(), grad),
            Bcast::Row => {
                let mut out = vec![0.0; cols];
                for row in grad.chunks(cols) {
                    for (o, g) in out.iter_mut().zip(row) {
                        *o += g;
                    }
                }
                Tensor::from_parts(shape.to_vec(), out)
            }
            Bcast::Scalar => Tensor::from_parts(shape.to_vec(), vec![grad.iter().sum()]),
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn row_shape(t: &Tensor, cols: usize) -> Vec<usize> {
    let mut s = t.shape().to_vec();
    *s.last_mut().unwrap() = cols;
    s
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op: None,
            inputs: [NodeId(0); 2],
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable leaf; receives a gradient in [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, true)
    }

    /// Non-trainable leaf (data, noise).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Evaluates `op` on `inputs` and appends the result.
    pub fn forward(&mut self, op: OpKind, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.len() != op.arity() {
            return Err(Error::Invalid(format!(
                "{} takes {} inputs, got {}",
                op.name(),
                op.arity(),
                inputs.len()
            )));
        }
        let a = &self.nodes[inputs[0].0].value;
        let b = inputs.get(1).map(|id| &self.nodes[id.0].value);
        let value = eval(op, a, b)?;
        if !value.all_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        self.nodes.push(Node {
            op: Some(op),
            inputs: [inputs[0], *inputs.get(1).unwrap_or(&inputs[0])],
            value,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward(OpKind::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Add, &[a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Mul, &[a, b])
    }
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.forward(OpKind::Scale(c), &[a])
    }
    pub fn offset(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.forward(OpKind::Offset(c), &[a])
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Relu, &[a])
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Tanh, &[a])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Exp, &[a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Log, &[a])
    }
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Softplus, &[a])
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Square, &[a])
    }
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.forward(OpKind::Clamp { lo, hi }, &[a])
    }
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Softmax, &[a])
    }
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(OpKind::LogSoftmax, &[a])
    }
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Concat, &[a, b])
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Sum, &[a])
    }
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(OpKind::Mean, &[a])
    }
    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(OpKind::RowSum, &[a])
    }

    /// Reverse-mode sweep from a single-element node.
    pub fn backward(&self, seed: NodeId) -> Result<Gradients> {
        let seed_value = &self.nodes[seed.0].value;
        if !seed_value.is_scalar() {
            return Err(Error::NonScalarSeed {
                shape: seed_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[seed.0] = Some(Tensor::from_parts(seed_value.shape().to_vec(), vec![1.0]));

        for idx in (0..=seed.0).rev() {
            let node = &self.nodes[idx];
            let Some(op) = node.op else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let [ia, ib] = node.inputs;
            let a = &self.nodes[ia.0];
            let b = &self.nodes[ib.0];
            let (ga, gb) = grad_inputs(
                op,
                &a.value,
                (op.arity() == 2).then_some(&b.value),
                &node.value,
                &upstream,
                a.requires_grad,
                op.arity() == 2 && b.requires_grad,
            );
            if let Some(ga) = ga {
                accumulate(&mut grads[ia.0], ga);
            }
            if let Some(gb) = gb {
                accumulate(&mut grads[ib.0], gb);
            }
            grads[idx] = Some(upstream);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
        None => *slot = Some(g),
    }
}

fn eval(op: OpKind, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let out = match op {
        OpKind::MatMul => {
            let b = b.unwrap();
            if b.shape().len() != 2 || a.cols() != b.rows() {
                return Err(Error::ShapeMismatch {
                    op: "matmul",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let (r, k, c) = (a.rows(), a.cols(), b.cols());
            let mut out = vec![0.0; r * c];
            let (ad, bd) = (a.data(), b.data());
            for i in 0..r {
                let orow = &mut out[i * c..(i + 1) * c];
                for p in 0..k {
                    let av = ad[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    for (o, bv) in orow.iter_mut().zip(&bd[p * c..(p + 1) * c]) {
                        *o += av * bv;
                    }
                }
            }
            Tensor::from_parts(vec![r, c], out)
        }
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            let b = b.unwrap();
            let bc = Bcast::of(op.name(), a, b)?;
            let cols = a.cols();
            let bd = b.data();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let y = bd[bc.index(i, cols)];
                    match op {
                        OpKind::Add => x + y,
                        OpKind::Sub => x - y,
                        _ => x * y,
                    }
                })
                .collect();
            Tensor::from_parts(a.shape().to_vec(), data)
        }
        OpKind::Scale(c) => a.map(|x| c * x),
        OpKind::Offset(c) => a.map(|x| x + c),
        OpKind::Relu => a.map(|x| if x > 0.0 { x } else { 0.0 }),
        OpKind::Tanh => a.map(f64::tanh),
        OpKind::Exp => a.map(f64::exp),
        OpKind::Log => a.map(f64::ln),
        OpKind::Softplus => a.map(softplus),
        OpKind::Square => a.map(|x| x * x),
        OpKind::Clamp { lo, hi } => a.map(|x| x.clamp(lo, hi)),
        OpKind::Softmax | OpKind::LogSoftmax => {
            let cols = a.cols();
            let mut data = Vec::with_capacity(a.len());
            for row in a.data().chunks(cols) {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|&x| (x - m).exp()).sum();
                if op == OpKind::Softmax {
                    data.extend(row.iter().map(|&x| (x - m).exp() / z));
                } else {
                    let lz = z.ln();
                    data.extend(row.iter().map(|&x| x - m - lz));
                }
            }
            Tensor::from_parts(a.shape().to_vec(), data)
        }
        OpKind::Concat => {
            let b = b.unwrap();
            if a.shape()[..a.shape().len() - 1] != b.shape()[..b.shape().len() - 1] {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let (ca, cb) = (a.cols(), b.cols());
            let mut data = Vec::with_capacity(a.len() + b.len());
            for (ra, rb) in a.data().chunks(ca).zip(b.data().chunks(cb)) {
                data.extend_from_slice(ra);
                data.extend_from_slice(rb);
            }
            Tensor::from_parts(row_shape(a, ca + cb), data)
        }
        OpKind::Sum => Tensor::scalar(a.data().iter().sum()),
        OpKind::Mean => Tensor::scalar(a.data().iter().sum::<f64>() / a.len() as f64),
        OpKind::RowSum => {
            let data = a.data().chunks(a.cols()).map(|r| r.iter().sum()).collect();
            Tensor::from_parts(row_shape(a, 1), data)
        }
    };
    Ok(out)
}

/// Vector-Jacobian products for one node.
fn grad_inputs(
    op: OpKind,
    a: &Tensor,
    b: Option<&Tensor>,
    out: &Tensor,
    up: &Tensor,
    need_a: bool,
    need_b: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let ud = up.data();
    let elementwise = |f: &dyn Fn(usize) -> f64| -> Option<Tensor> {
        need_a.then(|| {
            Tensor::from_parts(a.shape().to_vec(), (0..a.len()).map(|i| ud[i] * f(i)).collect())
        })
    };
    let ad = a.data();
    let od = out.data();
    match op {
        OpKind::MatMul => {
            let b = b.unwrap();
            let (r, k, c) = (a.rows(), a.cols(), b.cols());
            let bd = b.data();
            let ga = need_a.then(|| {
                let mut g = vec![0.0; r * k];
                for i in 0..r {
                    let urow = &ud[i * c..(i + 1) * c];
                    for p in 0..k {
                        g[i * k + p] = urow
                            .iter()
                            .zip(&bd[p * c..(p + 1) * c])
                            .map(|(u, v)| u * v)
                            .sum();
                    }
                }
                Tensor::from_parts(a.shape().to_vec(), g)
            });
            let gb = need_b.then(|| {
                let mut g = vec![0.0; k * c];
                for i in 0..r {
                    let urow = &ud[i * c..(i + 1) * c];
                    for p in 0..k {
                        let av = ad[i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        for (gv, u) in g[p * c..(p + 1) * c].iter_mut().zip(urow) {
                            *gv += av * u;
                        }
                    }
                }
                Tensor::from_parts(b.shape().to_vec(), g)
            });
            (ga, gb)
        }
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            let b = b.unwrap();
            let bc = Bcast::of(op.name(), a, b).expect("validated in forward");
            let cols = a.cols();
            let bd = b.data();
            let ga = need_a.then(|| {
                let g = match op {
                    OpKind::Mul => (0..a.len()).map(|i| ud[i] * bd[bc.index(i, cols)]).collect(),
                    _ => ud.to_vec(),
                };
                Tensor::from_parts(a.shape().to_vec(), g)
            });
            let gb = need_b.then(|| {
                let full: Vec<f64> = match op {
                    OpKind::Add => ud.to_vec(),
                    OpKind::Sub => ud.iter().map(|u| -u).collect(),
                    _ => ud.iter().zip(ad).map(|(u, x)| u * x).collect(),
                };
                bc.reduce(full, cols, b.shape())
            });
            (ga, gb)
        }
        OpKind::Scale(c) => (elementwise(&|_| c), None),
        OpKind::Offset(_) => (elementwise(&|_| 1.0), None),
        OpKind::Relu => (elementwise(&|i| if ad[i] > 0.0 { 1.0 } else { 0.0 }), None),
        OpKind::Tanh => (elementwise(&|i| 1.0 - od[i] * od[i]), None),
        OpKind::Exp => (elementwise(&|i| od[i]), None),
        OpKind::Log => (elementwise(&|i| 1.0 / ad[i]), None),
        OpKind::Softplus => (elementwise(&|i| sigmoid(ad[i])), None),
        OpKind::Square => (elementwise(&|i| 2.0 * ad[i]), None),
        OpKind::Clamp { lo, hi } => (
            elementwise(&|i| if ad[i] >= lo && ad[i] <= hi { 1.0 } else { 0.0 }),
            None,
        ),
        OpKind::Softmax => {
            let cols = a.cols();
            let mut g = Vec::with_capacity(a.len());
            for (yr, ur) in od.chunks(cols).zip(ud.chunks(cols)) {
                let dot: f64 = yr.iter().zip(ur).map(|(y, u)| y * u).sum();
                g.extend(yr.iter().zip(ur).map(|(y, u)| y * (u - dot)));
            }
            (Some(Tensor::from_parts(a.shape().to_vec(), g)), None)
        }
        OpKind::LogSoftmax => {
            let cols = a.cols();
            let mut g = Vec::with_capacity(a.len());
            for (lr, ur) in od.chunks(cols).zip(ud.chunks(cols)) {
                let total: f64 = ur.iter().sum();
                g.extend(lr.iter().zip(ur).map(|(l, u)| u - l.exp() * total));
            }
            (Some(Tensor::from_parts(a.shape().to_vec(), g)), None)
        }
        OpKind::Concat => {
            let b = b.unwrap();
            let (ca, cb) = (a.cols(), b.cols());
            let mut ga = Vec::with_capacity(a.len());
            let mut gb = Vec::with_capacity(b.len());
            for row in ud.chunks(ca + cb) {
                ga.extend_from_slice(&row[..ca]);
                gb.extend_from_slice(&row[ca..]);
            }
            (
                need_a.then(|| Tensor::from_parts(a.shape().to_vec(), ga)),
                need_b.then(|| Tensor::from_parts(b.shape().to_vec(), gb)),
            )
        }
        OpKind::Sum => (need_a.then(|| a.map(|_| ud[0])), None),
        OpKind::Mean => {
            let s = ud[0] / a.len() as f64;
            (need_a.then(|| a.map(|_| s)), None)
        }
        OpKind::RowSum => {
            let cols = a.cols();
            (
                need_a.then(|| {
                    Tensor::from_parts(a.shape().to_vec(), (0..a.len()).map(|i| ud[i / cols]).collect())
                }),
                None,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_forward() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2], &[-1.0, 2.0]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[0.0, 0.0, 0.0]));
        let y = g.softmax(x).unwrap();
        for v in g.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matmul_of_ones_counts() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 3], &[1.0; 6]));
        let b = g.constant(t(&[3, 1], &[1.0; 3]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 1]);
        assert_eq!(g.value(c).data(), &[3.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 3], &[1.0; 6]));
        let b = g.constant(t(&[2, 1], &[1.0; 2]));
        match g.matmul(a, b) {
            Err(Error::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 1]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let c = g.constant(t(&[2, 2], &[1.0; 4]));
        let err = g.add(a, c).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[2, 3]") && err.contains("[2, 2]"));
    }

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        let mut g = Graph::new();
        let w = g.param(Tensor::zeros(&[4]));
        let y = g.tanh(w).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(w).data(), &[1.0; 4]);
    }

    #[test]
    fn relu_subgradient_convention() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[-1.0, 2.0, 0.0]));
        let y = g.relu(x).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn non_scalar_seed_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let y = g.exp(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::NonScalarSeed { .. })));
    }

    #[test]
    fn unreached_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let unused = g.param(t(&[2, 2], &[1.0; 4]));
        let s = g.sum(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(unused), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn log_of_zero_is_reported() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2], &[0.0, 1.0]));
        assert!(matches!(g.log(x), Err(Error::NonFinite { op: "log" })));
    }

    #[test]
    fn row_broadcast_gradient_sums_rows() {
        let mut g = Graph::new();
        let a = g.constant(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let bias = g.param(t(&[2], &[0.5, -0.5]));
        let y = g.add(a, bias).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(bias).data(), &[3.0, 3.0]);
    }
}
