use crate::error::{AutodiffError, Result};
use crate::kernels;
use crate::params::{Gradients, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    SliceCols { src: Var, start: usize },
    Gather { src: Var, indices: Vec<usize> },
    Softmax(Var),
    Log(Var),
    Sum(Var),
    Scale(Var, T),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<T> },
}

#[derive(Debug)]
pub(crate) struct Node<T> {
    pub(crate) shape: Shape,
    /// Empty for parameter nodes, whose values live in the store.
    pub(crate) value: Vec<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Eager recording of one forward pass.
///
/// Nodes are appended in execution order, so every node's parents have
/// smaller indices and the reverse index order is a valid reverse
/// topological order.
pub struct Tape<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    pub(crate) nodes: Vec<Node<T>>,
    param_nodes: Vec<Option<Var>>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, shape: Shape, value: Vec<T>, op: Op<T>) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == shape.len());
        let requires_grad = match &op {
            Op::Constant => false,
            Op::Param(_) => true,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) => {
                self.tracked(*a) || self.tracked(*b)
            }
            Op::Sigmoid(a) | Op::Tanh(a) | Op::Relu(a) | Op::Softmax(a) | Op::Log(a) | Op::Sum(a) => {
                self.tracked(*a)
            }
            Op::Scale(a, _) => self.tracked(*a),
            Op::Concat(parts) => parts.iter().any(|p| self.tracked(*p)),
            Op::SliceCols { src, .. } | Op::Gather { src, .. } => self.tracked(*src),
            Op::CrossEntropy { logits, .. } => self.tracked(*logits),
        };
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        let shape = tensor.shape();
        self.push(shape, tensor.into_data(), Op::Constant)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Tensor::zeros(rows, cols))
    }

    /// Places a parameter on the tape. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let shape = self.params.get(id).shape();
        let v = self.push(shape, Vec::new(), Op::Param(id));
        self.param_nodes[id.0] = Some(v);
        v
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.params.get(id).data(),
            _ => &node.value,
        }
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let s = self.shape(v);
        let data = self.value(v);
        Tensor::from_fn(s.rows, s.cols, |r, c| data[r * s.cols + c])
    }

    /// Whether gradients flow through `v` to at least one parameter.
    pub fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[0]
    }

    /// Reverse pass from a scalar root.
    ///
    /// Gradients of a parameter used several times are summed; parameters
    /// the root does not depend on get zeros. Fails if any parameter
    /// gradient ends up non-finite.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let shape = self.shape(root);
        if shape != Shape::scalar() {
            return Err(AutodiffError::NotScalarRoot(shape));
        }
        let mut out = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(vec![T::one()]);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let (head, _) = grads.split_at_mut(idx);
            self.backward_node(node, &g, head, &mut out);
        }

        if let Some(id) = out.first_non_finite() {
            return Err(AutodiffError::NonFinite(format!(
                "gradient of parameter `{}`",
                self.params.name(id)
            )));
        }
        Ok(out)
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> &'g mut Vec<T> {
        let len = self.nodes[v.0].shape.len();
        grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
    }

    fn backward_node(
        &self,
        node: &Node<T>,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
        out: &mut Gradients<T>,
    ) {
        let own = || &node.value[..];
        match &node.op {
            Op::Constant => {}
            Op::Param(id) => {
                for (o, &v) in out.slot_mut(*id).iter_mut().zip(g) {
                    *o += v;
                }
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa.rows, sa.cols, sb.cols);
                if !self.is_constant(*a) {
                    let bv = self.value(*b);
                    kernels::matmul_grad_left(self.slot(grads, *a), g, bv, m, k, n);
                }
                if !self.is_constant(*b) {
                    let av = self.value(*a);
                    kernels::matmul_grad_right(self.slot(grads, *b), av, g, m, k, n);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g);
                self.accumulate(grads, *b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g);
                if !self.is_constant(*b) {
                    for (d, &v) in self.slot(grads, *b).iter_mut().zip(g) {
                        *d += -v;
                    }
                }
            }
            Op::Mul(a, b) => {
                if !self.is_constant(*a) {
                    let bv = self.value(*b);
                    let da = self.slot(grads, *a);
                    for ((d, &gv), &x) in da.iter_mut().zip(g).zip(bv) {
                        *d += gv * x;
                    }
                }
                if !self.is_constant(*b) {
                    let av = self.value(*a);
                    let db = self.slot(grads, *b);
                    for ((d, &gv), &x) in db.iter_mut().zip(g).zip(av) {
                        *d += gv * x;
                    }
                }
            }
            Op::AddBias(a, bias) => {
                self.accumulate(grads, *a, g);
                if !self.is_constant(*bias) {
                    let n = self.shape(*bias).cols;
                    let db = self.slot(grads, *bias);
                    for row in g.chunks_exact(n) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                if !self.is_constant(*a) {
                    let y = own();
                    for ((d, &gv), &s) in self.slot(grads, *a).iter_mut().zip(g).zip(y) {
                        *d += gv * s * (T::one() - s);
                    }
                }
            }
            Op::Tanh(a) => {
                if !self.is_constant(*a) {
                    let y = own();
                    for ((d, &gv), &t) in self.slot(grads, *a).iter_mut().zip(g).zip(y) {
                        *d += gv * (T::one() - t * t);
                    }
                }
            }
            Op::Relu(a) => {
                if !self.is_constant(*a) {
                    let x = self.value(*a);
                    for ((d, &gv), &xv) in self.slot(grads, *a).iter_mut().zip(g).zip(x) {
                        if xv > T::zero() {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let rows = node.shape.rows;
                let total = node.shape.cols;
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p).cols;
                    if !self.is_constant(p) {
                        let dp = self.slot(grads, p);
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + c];
                            for (d, &v) in dp[r * c..(r + 1) * c].iter_mut().zip(src) {
                                *d += v;
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::SliceCols { src, start } => {
                if !self.is_constant(*src) {
                    let sc = self.shape(*src).cols;
                    let c = node.shape.cols;
                    let ds = self.slot(grads, *src);
                    for (r, grow) in g.chunks_exact(c).enumerate() {
                        for (d, &v) in ds[r * sc + start..r * sc + start + c].iter_mut().zip(grow) {
                            *d += v;
                        }
                    }
                }
            }
            Op::Gather { src, indices } => {
                if !self.is_constant(*src) {
                    let dim = self.shape(*src).cols;
                    let ds = self.slot(grads, *src);
                    for (q, &row) in indices.iter().enumerate() {
                        let gsrc = &g[q * dim..(q + 1) * dim];
                        for (d, &v) in ds[row * dim..(row + 1) * dim].iter_mut().zip(gsrc) {
                            *d += v;
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                if !self.is_constant(*a) {
                    let c = node.shape.cols;
                    let y = own();
                    let da = self.slot(grads, *a);
                    for ((grow, yrow), drow) in
                        g.chunks_exact(c).zip(y.chunks_exact(c)).zip(da.chunks_exact_mut(c))
                    {
                        let inner: T = grow.iter().zip(yrow).map(|(&gv, &yv)| gv * yv).sum();
                        for ((d, &gv), &yv) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += yv * (gv - inner);
                        }
                    }
                }
            }
            Op::Log(a) => {
                if !self.is_constant(*a) {
                    let x = self.value(*a);
                    for ((d, &gv), &xv) in self.slot(grads, *a).iter_mut().zip(g).zip(x) {
                        *d += gv / xv;
                    }
                }
            }
            Op::Sum(a) => {
                if !self.is_constant(*a) {
                    let s = g[0];
                    for d in self.slot(grads, *a).iter_mut() {
                        *d += s;
                    }
                }
            }
            Op::Scale(a, s) => {
                if !self.is_constant(*a) {
                    for (d, &gv) in self.slot(grads, *a).iter_mut().zip(g) {
                        *d += gv * *s;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                if !self.is_constant(*logits) {
                    let k = self.shape(*logits).cols;
                    let dl = self.slot(grads, *logits);
                    for (r, &t) in targets.iter().enumerate() {
                        let gr = g[r];
                        let drow = &mut dl[r * k..(r + 1) * k];
                        for (d, &p) in drow.iter_mut().zip(&probs[r * k..(r + 1) * k]) {
                            *d += gr * p;
                        }
                        drow[t] += -gr;
                    }
                }
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, g: &[T]) {
        if self.is_constant(v) {
            return;
        }
        for (d, &x) in self.slot(grads, v).iter_mut().zip(g) {
            *d += x;
        }
    }

    fn is_constant(&self, v: Var) -> bool {
        !self.nodes[v.0].requires_grad
    }
}
