use super::kernels::{self, Layout};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Result, TriformerError};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Work counters accumulated while building a graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpStats {
    /// Estimated floating-point operations of the forward pass.
    pub flops: u64,
    /// Attention scores evaluated (one per query/key pair).
    pub attention_scores: u64,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul { a: usize, b: usize, lb: Layout },
    BatchMatMul { a: usize, b: usize, lb: Layout },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Softmax(usize),
    Reshape(usize),
    Repeat { a: usize, times: usize },
    Narrow { a: usize, axis: usize, start: usize },
    Concat { inputs: Vec<usize>, axis: usize },
    Mse(usize, usize),
    Mean(usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul { .. } => "matmul",
            Op::BatchMatMul { .. } => "batch matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softmax(_) => "softmax",
            Op::Reshape(_) => "reshape",
            Op::Repeat { .. } => "repeat",
            Op::Narrow { .. } => "narrow",
            Op::Concat { .. } => "concat",
            Op::Mse(..) => "mse",
            Op::Mean(_) => "mean",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if `var` reaches the loss.
    pub fn get(&self, var: Var) -> Option<Tensor> {
        let g = self.grads.get(var.0)?.as_ref()?;
        Some(Tensor::new(&self.shapes[var.0], g.clone()).expect("gradient shape matches value"))
    }
}

/// Reverse-mode differentiation tape.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward simply walks it in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    stats: OpStats,
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

    pub fn stats(&self) -> OpStats {
        self.stats
    }

    pub(crate) fn count_attention_scores(&mut self, n: usize) {
        self.stats.attention_scores += n as u64;
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, flops: usize) -> Result<Var> {
        if !value.is_finite() {
            return Err(TriformerError::NonFinite(op.name().to_string()));
        }
        self.stats.flops += flops as u64;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input; receives a gradient slot but never updates anything.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, 0)
    }

    /// Reads the current value of a parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        self.push(store.value(id).clone(), Op::Param(id), 0)
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(TriformerError::Shape(format!("expected a matrix, got {s:?}"))),
        }
    }

    fn dims3(&self, v: Var) -> Result<(usize, usize, usize)> {
        match *self.shape(v) {
            [g, r, c] => Ok((g, r, c)),
            ref s => Err(TriformerError::Shape(format!(
                "expected a stack of matrices, got {s:?}"
            ))),
        }
    }

    fn matmul_impl(&mut self, a: Var, b: Var, lb: Layout) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (b0, b1) = self.dims2(b)?;
        let (kb, n) = match lb {
            Layout::Plain => (b0, b1),
            Layout::Trans => (b1, b0),
        };
        if k != kb {
            return Err(TriformerError::Shape(format!(
                "matmul inner dimensions differ: {:?} x {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(
            self.value(a).data(),
            Layout::Plain,
            self.value(b).data(),
            lb,
            &mut out,
            m,
            k,
            n,
        );
        let value = Tensor::new(&[m, n], out)?;
        self.push(value, Op::MatMul { a: a.0, b: b.0, lb }, 2 * m * k * n)
    }

    /// `a[p×q] · b[q×r]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, Layout::Plain)
    }

    /// `a[p×q] · b[r×q]ᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, Layout::Trans)
    }

    fn bmm_impl(&mut self, a: Var, b: Var, lb: Layout) -> Result<Var> {
        let (g, m, k) = self.dims3(a)?;
        let (gb, b0, b1) = self.dims3(b)?;
        let (kb, n) = match lb {
            Layout::Plain => (b0, b1),
            Layout::Trans => (b1, b0),
        };
        if g != gb || k != kb {
            return Err(TriformerError::Shape(format!(
                "batch matmul shapes incompatible: {:?} x {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![0.0; g * m * n];
        let av = self.value(a).data();
        let bv = self.value(b).data();
        for (i, c) in out.chunks_exact_mut(m * n).enumerate() {
            kernels::gemm(
                &av[i * m * k..(i + 1) * m * k],
                Layout::Plain,
                &bv[i * k * n..(i + 1) * k * n],
                lb,
                c,
                m,
                k,
                n,
            );
        }
        let value = Tensor::new(&[g, m, n], out)?;
        self.push(value, Op::BatchMatMul { a: a.0, b: b.0, lb }, 2 * g * m * k * n)
    }

    /// Independent products over a leading batch axis: `[g,m,k]·[g,k,n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        self.bmm_impl(a, b, Layout::Plain)
    }

    /// `[g,m,k]·[g,n,k]ᵀ` per batch entry.
    pub fn bmm_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.bmm_impl(a, b, Layout::Trans)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TriformerError::Shape(format!(
                "{what} needs equal shapes, got {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, op.name())?;
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(va.shape(), data)?;
        let n = value.numel();
        self.push(value, op, n)
    }

    fn map(&mut self, a: Var, op: Op, cost: usize, f: impl Fn(f64) -> f64) -> Result<Var> {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(va.shape(), data)?;
        let n = value.numel();
        self.push(value, op, cost * n)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.map(a, Op::Scale(a.0, factor), 1, |x| x * factor)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Tanh(a.0), 1, f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Sigmoid(a.0), 1, kernels::sigmoid)
    }

    /// Softmax over the last dimension.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let width = *va.shape().last().expect("tensors have rank >= 1");
        let mut out = vec![0.0; va.numel()];
        kernels::softmax_rows(va.data(), width, &mut out);
        let value = Tensor::new(va.shape(), out)?;
        let n = value.numel();
        self.push(value, Op::Softmax(a.0), 3 * n)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        self.push(value, Op::Reshape(a.0), 0)
    }

    /// Stacks `times` copies of `a` along a new leading axis.
    pub fn repeat(&mut self, a: Var, times: usize) -> Result<Var> {
        if times == 0 {
            return Err(TriformerError::Shape("repeat count must be positive".into()));
        }
        let va = self.value(a);
        let mut shape = vec![times];
        shape.extend_from_slice(va.shape());
        let data = va.data().repeat(times);
        let value = Tensor::new(&shape, data)?;
        self.push(value, Op::Repeat { a: a.0, times }, 0)
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(TriformerError::Shape(format!(
                "narrow({axis}, {start}, {len}) out of range for {shape:?}"
            )));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::new(&out_shape, data)?;
        self.push(value, Op::Narrow { a: a.0, axis, start }, 0)
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| TriformerError::Shape("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TriformerError::Shape(format!(
                "concat axis {axis} out of range for {base:?}"
            )));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(TriformerError::Shape(format!(
                    "concat along {axis}: {s:?} incompatible with {base:?}"
                )));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let value = self.value(*v);
                let len = value.shape()[axis] * inner;
                data.extend_from_slice(&value.data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(&shape, data)?;
        let op = Op::Concat {
            inputs: inputs.iter().map(|v| v.0).collect(),
            axis,
        };
        self.push(value, op, 0)
    }

    /// Mean squared error, as a scalar node.
    pub fn mse(&mut self, prediction: Var, target: Var) -> Result<Var> {
        self.same_shape(prediction, target, "mse")?;
        let p = self.value(prediction).data();
        let t = self.value(target).data();
        let sum: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let n = p.len();
        self.push(
            Tensor::scalar(sum / n as f64),
            Op::Mse(prediction.0, target.0),
            3 * n,
        )
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a).data();
        let n = va.len();
        let mean = va.iter().sum::<f64>() / n as f64;
        self.push(Tensor::scalar(mean), Op::Mean(a.0), n)
    }

    /// `x[r×in] · w[in×out] + b[out]` with the bias tiled over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let rows = self.dims2(x)?.0;
        let xw = self.matmul(x, w)?;
        let tiled = self.repeat(b, rows)?;
        let shape = self.shape(xw).to_vec();
        let tiled = self.reshape(tiled, &shape)?;
        self.add(xw, tiled)
    }

    /// Propagates gradients from the scalar `loss` back through the tape and
    /// adds every parameter's gradient into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(TriformerError::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            self.propagate(node, &upstream, &mut grads, store);
            grads[i] = Some(upstream);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(
        &self,
        node: &Node,
        up: &[f64],
        grads: &mut [Option<Vec<f64>>],
        store: &mut ParamStore,
    ) {
        let val = |j: usize| self.nodes[j].value.data();
        let shape = |j: usize| self.nodes[j].value.shape();
        match node.op {
            Op::Leaf => {}
            Op::Param(id) => store.accumulate(id, up),
            Op::MatMul { a, b, lb } => {
                let (m, k) = (shape(a)[0], shape(a)[1]);
                let n = node.value.shape()[1];
                let ga = slot(grads, a, m * k);
                match lb {
                    // c = a b: da = dc bᵀ, db = aᵀ dc
                    Layout::Plain => {
                        kernels::gemm(up, Layout::Plain, val(b), Layout::Trans, ga, m, n, k);
                        let gb = slot(grads, b, k * n);
                        kernels::gemm(val(a), Layout::Trans, up, Layout::Plain, gb, k, m, n);
                    }
                    // c = a bᵀ: da = dc b, db = dcᵀ a
                    Layout::Trans => {
                        kernels::gemm(up, Layout::Plain, val(b), Layout::Plain, ga, m, n, k);
                        let gb = slot(grads, b, n * k);
                        kernels::gemm(up, Layout::Trans, val(a), Layout::Plain, gb, n, m, k);
                    }
                }
            }
            Op::BatchMatMul { a, b, lb } => {
                let (g, m, k) = (shape(a)[0], shape(a)[1], shape(a)[2]);
                let n = node.value.shape()[2];
                let (va, vb) = (val(a), val(b));
                {
                    let ga = slot(grads, a, g * m * k);
                    for i in 0..g {
                        let upi = &up[i * m * n..(i + 1) * m * n];
                        let bi = &vb[i * k * n..(i + 1) * k * n];
                        let gai = &mut ga[i * m * k..(i + 1) * m * k];
                        let lb_back = match lb {
                            Layout::Plain => Layout::Trans,
                            Layout::Trans => Layout::Plain,
                        };
                        kernels::gemm(upi, Layout::Plain, bi, lb_back, gai, m, n, k);
                    }
                }
                let gb = slot(grads, b, g * k * n);
                for i in 0..g {
                    let upi = &up[i * m * n..(i + 1) * m * n];
                    let ai = &va[i * m * k..(i + 1) * m * k];
                    let gbi = &mut gb[i * k * n..(i + 1) * k * n];
                    match lb {
                        Layout::Plain => {
                            kernels::gemm(ai, Layout::Trans, upi, Layout::Plain, gbi, k, m, n)
                        }
                        Layout::Trans => {
                            kernels::gemm(upi, Layout::Trans, ai, Layout::Plain, gbi, n, m, k)
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(slot(grads, a, up.len()), up);
                add_into(slot(grads, b, up.len()), up);
            }
            Op::Sub(a, b) => {
                add_into(slot(grads, a, up.len()), up);
                let gb = slot(grads, b, up.len());
                for (g, u) in gb.iter_mut().zip(up) {
                    *g -= u;
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(a), val(b));
                let ga = slot(grads, a, up.len());
                for ((g, u), y) in ga.iter_mut().zip(up).zip(vb) {
                    *g += u * y;
                }
                let gb = slot(grads, b, up.len());
                for ((g, u), x) in gb.iter_mut().zip(up).zip(va) {
                    *g += u * x;
                }
            }
            Op::Scale(a, factor) => {
                let ga = slot(grads, a, up.len());
                for (g, u) in ga.iter_mut().zip(up) {
                    *g += u * factor;
                }
            }
            Op::Tanh(a) => {
                let ga = slot(grads, a, up.len());
                for ((g, u), y) in ga.iter_mut().zip(up).zip(node.value.data()) {
                    *g += u * (1.0 - y * y);
                }
            }
            Op::Sigmoid(a) => {
                let ga = slot(grads, a, up.len());
                for ((g, u), y) in ga.iter_mut().zip(up).zip(node.value.data()) {
                    *g += u * y * (1.0 - y);
                }
            }
            Op::Softmax(a) => {
                let width = *node.value.shape().last().unwrap();
                let ga = slot(grads, a, up.len());
                for ((g_row, u_row), y_row) in ga
                    .chunks_exact_mut(width)
                    .zip(up.chunks_exact(width))
                    .zip(node.value.data().chunks_exact(width))
                {
                    let inner = kernels::dot(u_row, y_row);
                    for ((g, u), y) in g_row.iter_mut().zip(u_row).zip(y_row) {
                        *g += y * (u - inner);
                    }
                }
            }
            Op::Reshape(a) => add_into(slot(grads, a, up.len()), up),
            Op::Repeat { a, times } => {
                let len = up.len() / times;
                let ga = slot(grads, a, len);
                for chunk in up.chunks_exact(len) {
                    add_into(ga, chunk);
                }
            }
            Op::Narrow { a, axis, start } => {
                let in_shape = shape(a);
                let (outer, dim, inner) = split_axis(in_shape, axis);
                let len = node.value.shape()[axis];
                let ga = slot(grads, a, outer * dim * inner);
                for o in 0..outer {
                    let dst = (o * dim + start) * inner;
                    let src = o * len * inner;
                    add_into(&mut ga[dst..dst + len * inner], &up[src..src + len * inner]);
                }
            }
            Op::Concat { ref inputs, axis } => {
                let out_shape = node.value.shape();
                let (outer, total, inner) = split_axis(out_shape, axis);
                let mut offset = 0;
                for &j in inputs {
                    let len = shape(j)[axis];
                    let gj = slot(grads, j, outer * len * inner);
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        let dst = o * len * inner;
                        add_into(&mut gj[dst..dst + len * inner], &up[src..src + len * inner]);
                    }
                    offset += len;
                }
            }
            Op::Mse(p, t) => {
                let (vp, vt) = (val(p), val(t));
                let n = vp.len();
                let coef = 2.0 * up[0] / n as f64;
                let gp = slot(grads, p, n);
                for ((g, x), y) in gp.iter_mut().zip(vp).zip(vt) {
                    *g += coef * (x - y);
                }
                let gt = slot(grads, t, n);
                for ((g, x), y) in gt.iter_mut().zip(vp).zip(vt) {
                    *g -= coef * (x - y);
                }
            }
            Op::Mean(a) => {
                let n = val(a).len();
                let share = up[0] / n as f64;
                for g in slot(grads, a, n) {
                    *g += share;
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], j: usize, len: usize) -> &mut [f64] {
    grads[j].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
