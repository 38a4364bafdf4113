//! Recording graph for reverse-mode differentiation.
//!
//! A [`Graph`] is a tape: every op appends a node holding its forward value
//! and the ids of its inputs. [`Graph::backward`] walks the tape in reverse and
//! accumulates adjoints. Parameters enter as leaves tagged with their name so
//! gradients can be routed back into a [`ParamSet`].

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::error::{shape_err, KernelError, Result};
use crate::func;
use crate::params::ParamSet;
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softplus(NodeId),
    MaskMul(NodeId, Vec<f64>),
    SliceCols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    ScaleRows(NodeId, NodeId),
    /// Softmax over the masked-in entries of each row, applied `passes`
    /// times. `hidden` holds the output of every pass but the last.
    MaskedSoftmax {
        x: NodeId,
        mask: Vec<bool>,
        hidden: Vec<Tensor>,
    },
    SumRows(NodeId),
    SquaredError {
        pred: NodeId,
        target: Tensor,
        scale: f64,
    },
    CvLoss {
        a: NodeId,
        eps: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Adjoints produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: BTreeMap<String, NodeId>,
}

impl Gradients {
    /// Adjoint for any node; `None` if the node does not reach the loss.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradients keyed by parameter name, for every parameter leaf that
    /// reached the loss.
    pub fn param_grads(&self) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .filter_map(|(name, id)| self.wrt(*id).map(|g| (name.clone(), g.clone())))
            .collect()
    }

    /// Writes into the parameter set's gradient buffers; parameters the
    /// loss never touched get zero.
    pub fn apply_to(&self, params: &mut ParamSet) -> Result<()> {
        params.set_grads(&self.param_grads())
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_ids: HashMap<String, NodeId>,
    check_finite: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes every op fail with [`KernelError::NonFinite`] when it produces
    /// a NaN or infinity.
    pub fn with_finite_check(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<NodeId> {
        if self.check_finite && !value.all_finite() {
            return Err(KernelError::NonFinite(name));
        }
        self.nodes.push(Node {
            value,
            op,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(KernelError::Graph(format!(
                "node {} does not belong to this graph",
                id.0
            )));
        }
        Ok(())
    }

    /// A leaf whose gradient is tracked but which is not a parameter.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf for a named parameter. Repeated calls return the same node so
    /// gradients from every use accumulate in one place.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.param_ids.get(name) {
            return Ok(id);
        }
        let value = params.get(name)?.clone();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        let id = NodeId(self.nodes.len() - 1);
        self.param_ids.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = tensor::matmul(self.value(a), self.value(b))?;
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(x)?;
        self.check(b)?;
        let v = tensor::add_row_bias(self.value(x), self.value(b))?;
        self.push(v, Op::AddBias(x, b), "add_bias")
    }

    /// `x · W + b`
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let h = self.matmul(x, w)?;
        self.add_bias(h, b)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.push(v, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push(v, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> Result<NodeId> {
        self.check(x)?;
        let v = self.value(x).map(|v| v * s);
        self.push(v, Op::Scale(x, s), "scale")
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = self.value(x).map(func::relu);
        self.push(v, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = self.value(x).map(func::sigmoid);
        self.push(v, Op::Sigmoid(x), "sigmoid")
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh(x), "tanh")
    }

    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = self.value(x).map(func::softplus);
        self.push(v, Op::Softplus(x), "softplus")
    }

    /// Inverted dropout; records the identity when not training or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: NodeId,
        p: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<NodeId> {
        self.check(x)?;
        if !training || p <= 0.0 {
            return Ok(x);
        }
        let mask = func::dropout_mask(self.value(x).len(), p, rng);
        let mut v = self.value(x).clone();
        for (a, m) in v.data_mut().iter_mut().zip(&mask) {
            *a *= m;
        }
        self.push(v, Op::MaskMul(x, mask), "dropout")
    }

    /// Columns `[start, end)` of a matrix.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        self.check(x)?;
        let src = self.value(x);
        let (r, c) = (src.rows(), src.cols());
        if start > end || end > c {
            return shape_err(format!("column slice {start}..{end} of {c} columns"));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&src.row(i)[start..end]);
        }
        let v = Tensor::new(vec![r, w], data)?;
        self.push(v, Op::SliceCols(x, start, end), "slice_cols")
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return shape_err("concat of zero tensors");
        }
        for &p in parts {
            self.check(p)?;
        }
        let r = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != r) {
            return shape_err("concat_cols with differing row counts");
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let v = Tensor::new(vec![r, total], data)?;
        self.push(v, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    /// Multiplies row `i` of `x` by the scalar `s[i]` (`s` is `[rows × 1]`).
    pub fn scale_rows(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        self.check(x)?;
        self.check(s)?;
        let (xv, sv) = (self.value(x), self.value(s));
        if sv.len() != xv.rows() {
            return shape_err(format!(
                "row scale of length {} for {:?}",
                sv.len(),
                xv.shape()
            ));
        }
        let c = xv.cols();
        let mut v = xv.clone();
        for (i, row) in v.data_mut().chunks_mut(c.max(1)).enumerate() {
            let k = sv.data()[i];
            for a in row {
                *a *= k;
            }
        }
        self.push(v, Op::ScaleRows(x, s), "scale_rows")
    }

    /// Row-wise softmax restricted to `mask` (row-major, same size as `x`),
    /// applied `passes` times. Masked-out entries are exactly zero.
    pub fn masked_softmax(&mut self, x: NodeId, mask: Vec<bool>, passes: usize) -> Result<NodeId> {
        self.check(x)?;
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return shape_err(format!(
                "softmax mask of {} entries for {:?}",
                mask.len(),
                xv.shape()
            ));
        }
        if passes == 0 {
            return shape_err("softmax needs at least one pass");
        }
        let c = xv.cols().max(1);
        let mut cur = xv.clone();
        let mut hidden = Vec::with_capacity(passes - 1);
        for pass in 0..passes {
            let mut out = cur.clone();
            for ((src, dst), m) in cur
                .data()
                .chunks(c)
                .zip(out.data_mut().chunks_mut(c))
                .zip(mask.chunks(c))
            {
                func::masked_softmax_into(src, m, dst);
            }
            if pass + 1 < passes {
                hidden.push(out.clone());
            }
            cur = out;
        }
        self.push(cur, Op::MaskedSoftmax { x, mask, hidden }, "masked_softmax")
    }

    /// Column sums: `[m × n] → [1 × n]`.
    pub fn sum_rows(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let xv = self.value(x);
        let c = xv.cols();
        let mut out = vec![0.0; c];
        for row in xv.data().chunks(c.max(1)) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let v = Tensor::new(vec![1, c], out)?;
        self.push(v, Op::SumRows(x), "sum_rows")
    }

    /// `scale · Σ (pred − target)²` as a `[1 × 1]` scalar.
    pub fn squared_error(&mut self, pred: NodeId, target: &Tensor, scale: f64) -> Result<NodeId> {
        self.check(pred)?;
        let pv = self.value(pred);
        if pv.len() != target.len() {
            return shape_err(format!(
                "squared error between {:?} and {:?}",
                pv.shape(),
                target.shape()
            ));
        }
        let s: f64 = pv
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        self.push(
            Tensor::scalar(scale * s),
            Op::SquaredError {
                pred,
                target: target.clone(),
                scale,
            },
            "squared_error",
        )
    }

    /// `Var(a) / (Mean(a)² + eps)` with population variance over all entries.
    pub fn cv_loss(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        self.check(a)?;
        let v = cv_value(self.value(a).data(), eps);
        self.push(Tensor::scalar(v), Op::CvLoss { a, eps }, "cv_loss")
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(KernelError::Graph("backward on an empty graph".into()));
        }
        self.check(loss)?;
        if self.value(loss).len() != 1 {
            return Err(KernelError::Graph(format!(
                "backward needs a scalar, node has shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = tensor::matmul_nt(&g, self.value(*b))?;
                    let gb = tensor::matmul_tn(self.value(*a), &g)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::AddBias(x, b) => {
                    let c = g.cols();
                    let mut gb = vec![0.0; c];
                    for row in g.data().chunks(c.max(1)) {
                        for (o, v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    let gb = Tensor::new(self.value(*b).shape().to_vec(), gb)?;
                    accumulate(&mut grads, *b, gb)?;
                    accumulate(&mut grads, *x, g.clone())?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.map(|v| -v))?;
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y)?;
                    let gb = g.zip_map(self.value(*a), |x, y| x * y)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Scale(x, s) => {
                    let s = *s;
                    accumulate(&mut grads, *x, g.map(|v| v * s))?;
                }
                Op::Relu(x) => {
                    let gx = g.zip_map(self.value(*x), |d, v| if v > 0.0 { d } else { 0.0 })?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Sigmoid(x) => {
                    let gx = g.zip_map(&node.value, |d, y| d * y * (1.0 - y))?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Tanh(x) => {
                    let gx = g.zip_map(&node.value, |d, y| d * (1.0 - y * y))?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Softplus(x) => {
                    let gx = g.zip_map(self.value(*x), |d, v| d * func::sigmoid(v))?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::MaskMul(x, mask) => {
                    let mut gx = g.clone();
                    for (a, m) in gx.data_mut().iter_mut().zip(mask) {
                        *a *= m;
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::SliceCols(x, start, end) => {
                    let src = self.value(*x);
                    let (r, c) = (src.rows(), src.cols());
                    let w = end - start;
                    let mut gx = vec![0.0; r * c];
                    for i in 0..r {
                        gx[i * c + start..i * c + end].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                    }
                    accumulate(&mut grads, *x, Tensor::new(src.shape().to_vec(), gx)?)?;
                }
                Op::ConcatCols(parts) => {
                    let r = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let w = pv.cols();
                        let mut gp = Vec::with_capacity(r * w);
                        for i in 0..r {
                            gp.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                        }
                        accumulate(&mut grads, p, Tensor::new(pv.shape().to_vec(), gp)?)?;
                        offset += w;
                    }
                }
                Op::ScaleRows(x, s) => {
                    let (xv, sv) = (self.value(*x), self.value(*s));
                    let c = xv.cols().max(1);
                    let mut gx = g.clone();
                    let mut gs = vec![0.0; sv.len()];
                    for (i, (grow, xrow)) in g.data().chunks(c).zip(xv.data().chunks(c)).enumerate() {
                        gs[i] = grow.iter().zip(xrow).map(|(a, b)| a * b).sum();
                    }
                    for (i, row) in gx.data_mut().chunks_mut(c).enumerate() {
                        let k = sv.data()[i];
                        for a in row {
                            *a *= k;
                        }
                    }
                    accumulate(&mut grads, *x, gx)?;
                    accumulate(&mut grads, *s, Tensor::new(sv.shape().to_vec(), gs)?)?;
                }
                Op::MaskedSoftmax { x, mask, hidden } => {
                    let c = node.value.cols().max(1);
                    let mut upstream = g.clone();
                    // Outputs of each pass, last first.
                    let outputs: Vec<&Tensor> =
                        std::iter::once(&node.value).chain(hidden.iter().rev()).collect();
                    for y in outputs {
                        let mut down = upstream.clone();
                        for ((d, yrow), (urow, m)) in down
                            .data_mut()
                            .chunks_mut(c)
                            .zip(y.data().chunks(c))
                            .zip(upstream.data().chunks(c).zip(mask.chunks(c)))
                        {
                            let dot: f64 = urow
                                .iter()
                                .zip(yrow)
                                .zip(m)
                                .filter(|(_, &keep)| keep)
                                .map(|((u, y), _)| u * y)
                                .sum();
                            for (((o, &u), &yv), &keep) in d.iter_mut().zip(urow).zip(yrow).zip(m) {
                                *o = if keep { yv * (u - dot) } else { 0.0 };
                            }
                        }
                        upstream = down;
                    }
                    accumulate(&mut grads, *x, upstream)?;
                }
                Op::SumRows(x) => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let mut gx = Vec::with_capacity(xv.len());
                    for _ in 0..xv.rows() {
                        gx.extend_from_slice(&g.data()[..c]);
                    }
                    accumulate(&mut grads, *x, Tensor::new(xv.shape().to_vec(), gx)?)?;
                }
                Op::SquaredError { pred, target, scale } => {
                    let d = g.data()[0];
                    let k = 2.0 * scale * d;
                    let pv = self.value(*pred);
                    let data = pv
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(p, t)| k * (p - t))
                        .collect();
                    accumulate(&mut grads, *pred, Tensor::new(pv.shape().to_vec(), data)?)?;
                }
                Op::CvLoss { a, eps } => {
                    let d = g.data()[0];
                    let av = self.value(*a);
                    let ga = cv_grad(av.data(), *eps).into_iter().map(|v| v * d).collect();
                    accumulate(&mut grads, *a, Tensor::new(av.shape().to_vec(), ga)?)?;
                }
            }
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            params: self
                .param_ids
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) -> Result<()> {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Coefficient-of-variation penalty value.
pub fn cv_value(a: &[f64], eps: f64) -> f64 {
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var / (mean * mean + eps)
}

fn cv_grad(a: &[f64], eps: f64) -> Vec<f64> {
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = mean * mean + eps;
    a.iter()
        .map(|&v| {
            let dvar = 2.0 * (v - mean) / n;
            let dden = 2.0 * mean / n;
            (dvar * denom - var * dden) / (denom * denom)
        })
        .collect()
}
