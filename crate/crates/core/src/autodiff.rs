//! A small reverse-mode differentiation tape over dense `f64` tensors.
//!
//! Supports exactly what the surrogate networks need: same-padded stride-1
//! 1D convolution, dense layers, ReLU, tanh, addition, flattening, mean
//! pooling and position selection over the sequence axis, and mean squared
//! error. Values are computed eagerly as nodes are recorded; [`Tape::backward`]
//! walks the nodes in reverse.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data does not match shape {shape:?}"
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Deliberately wrong backward rules, used as negative controls for
/// gradient checking.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BackwardFault {
    #[default]
    None,
    /// ReLU passes gradient through unconditionally.
    ReluPassThrough,
    /// Convolution weight gradient is scaled by 1.01.
    ConvWeightScale,
    /// tanh uses `1 - y` instead of `1 - y^2`.
    TanhDerivative,
}

enum Op {
    Leaf,
    Conv1d {
        input: usize,
        weight: usize,
        bias: usize,
    },
    Dense {
        input: usize,
        weight: usize,
        bias: Option<usize>,
    },
    Relu(usize),
    Tanh(usize),
    Add(usize, usize),
    Flatten(usize),
    MeanPool(usize),
    Position {
        input: usize,
        pos: usize,
    },
    Mse {
        pred: usize,
        target: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: BackwardFault,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    #[doc(hidden)]
    pub fn with_fault(fault: BackwardFault) -> Self {
        Tape {
            nodes: Vec::new(),
            fault,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// `[B, L, Cin] * [K, Cin, Cout] + [Cout] -> [B, L, Cout]`, zero padded so
    /// the output keeps length `L`. `K` must be odd.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let x = &self.nodes[input.0].value;
        let w = &self.nodes[weight.0].value;
        let b = &self.nodes[bias.0].value;
        let (bs, len, cin) = (x.shape[0], x.shape[1], x.shape[2]);
        let (k, wcin, cout) = (w.shape[0], w.shape[1], w.shape[2]);
        assert_eq!(cin, wcin, "conv1d channel mismatch");
        assert_eq!(b.shape, [cout], "conv1d bias shape");
        assert!(k % 2 == 1, "conv1d kernel must be odd");
        let pad = k / 2;
        let mut out = vec![0.0; bs * len * cout];
        for bi in 0..bs {
            for p in 0..len {
                let o = &mut out[(bi * len + p) * cout..(bi * len + p + 1) * cout];
                o.copy_from_slice(&b.data);
                for kk in 0..k {
                    let Some(q) = (p + kk).checked_sub(pad).filter(|&q| q < len) else {
                        continue;
                    };
                    let xrow = &x.data[(bi * len + q) * cin..(bi * len + q + 1) * cin];
                    for (ci, &xv) in xrow.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &w.data[(kk * cin + ci) * cout..(kk * cin + ci + 1) * cout];
                        for (acc, &wv) in o.iter_mut().zip(wrow) {
                            *acc += xv * wv;
                        }
                    }
                }
            }
        }
        let rg = self.rg(&[input.0, weight.0, bias.0]);
        self.push(
            Tensor::new(vec![bs, len, cout], out),
            Op::Conv1d {
                input: input.0,
                weight: weight.0,
                bias: bias.0,
            },
            rg,
        )
    }

    /// `[B, Din] x [Din, Dout] (+ [Dout]) -> [B, Dout]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Var {
        let x = &self.nodes[input.0].value;
        let w = &self.nodes[weight.0].value;
        let (bs, din) = (x.shape[0], x.shape[1]);
        let dout = w.shape[1];
        assert_eq!(w.shape[0], din, "dense input width mismatch");
        let mut out = vec![0.0; bs * dout];
        if let Some(b) = bias {
            let b = &self.nodes[b.0].value;
            assert_eq!(b.shape, [dout], "dense bias shape");
            for row in out.chunks_mut(dout) {
                row.copy_from_slice(&b.data);
            }
        }
        for bi in 0..bs {
            let o = &mut out[bi * dout..(bi + 1) * dout];
            for (i, &xv) in x.data[bi * din..(bi + 1) * din].iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (acc, &wv) in o.iter_mut().zip(&w.data[i * dout..(i + 1) * dout]) {
                    *acc += xv * wv;
                }
            }
        }
        let mut ids = vec![input.0, weight.0];
        ids.extend(bias.map(|b| b.0));
        let rg = self.rg(&ids);
        self.push(
            Tensor::new(vec![bs, dout], out),
            Op::Dense {
                input: input.0,
                weight: weight.0,
                bias: bias.map(|b| b.0),
            },
            rg,
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let out = Tensor::new(
            v.shape.clone(),
            v.data.iter().map(|&a| a.max(0.0)).collect(),
        );
        let rg = self.rg(&[x.0]);
        self.push(out, Op::Relu(x.0), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let out = Tensor::new(v.shape.clone(), v.data.iter().map(|a| a.tanh()).collect());
        let rg = self.rg(&[x.0]);
        self.push(out, Op::Tanh(x.0), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape, vb.shape, "add shape mismatch");
        let out = Tensor::new(
            va.shape.clone(),
            va.data.iter().zip(&vb.data).map(|(x, y)| x + y).collect(),
        );
        let rg = self.rg(&[a.0, b.0]);
        self.push(out, Op::Add(a.0, b.0), rg)
    }

    /// `[B, ...] -> [B, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let bs = v.shape[0];
        let out = Tensor::new(vec![bs, v.len() / bs.max(1)], v.data.clone());
        let rg = self.rg(&[x.0]);
        self.push(out, Op::Flatten(x.0), rg)
    }

    /// `[B, L, C] -> [B, C]`, averaging over positions.
    pub fn mean_pool(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let (bs, len, c) = (v.shape[0], v.shape[1], v.shape[2]);
        let mut out = vec![0.0; bs * c];
        for bi in 0..bs {
            let o = &mut out[bi * c..(bi + 1) * c];
            for p in 0..len {
                for (acc, &a) in o
                    .iter_mut()
                    .zip(&v.data[(bi * len + p) * c..(bi * len + p + 1) * c])
                {
                    *acc += a;
                }
            }
            for acc in o.iter_mut() {
                *acc /= len as f64;
            }
        }
        let rg = self.rg(&[x.0]);
        self.push(Tensor::new(vec![bs, c], out), Op::MeanPool(x.0), rg)
    }

    /// `[B, L, C] -> [B, C]` at position `pos`.
    pub fn position(&mut self, x: Var, pos: usize) -> Var {
        let v = &self.nodes[x.0].value;
        let (bs, len, c) = (v.shape[0], v.shape[1], v.shape[2]);
        assert!(pos < len);
        let mut out = Vec::with_capacity(bs * c);
        for bi in 0..bs {
            out.extend_from_slice(&v.data[(bi * len + pos) * c..(bi * len + pos + 1) * c]);
        }
        let rg = self.rg(&[x.0]);
        self.push(
            Tensor::new(vec![bs, c], out),
            Op::Position { input: x.0, pos },
            rg,
        )
    }

    /// Mean squared error between `pred` (any shape with `target.len()`
    /// elements) and `target`; returns a scalar node.
    pub fn mse(&mut self, pred: Var, target: Vec<f64>) -> Var {
        let p = &self.nodes[pred.0].value;
        assert_eq!(p.len(), target.len(), "mse length mismatch");
        let n = target.len() as f64;
        let loss = p
            .data
            .iter()
            .zip(&target)
            .map(|(a, t)| (a - t) * (a - t))
            .sum::<f64>()
            / n;
        let rg = self.rg(&[pred.0]);
        self.push(
            Tensor::new(vec![1], vec![loss]),
            Op::Mse {
                pred: pred.0,
                target,
            },
            rg,
        )
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "loss must be scalar");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], id: usize, len: usize) -> &mut Vec<f64> {
            grads[id].get_or_insert_with(|| vec![0.0; len])
        }

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let need = |i: usize| self.nodes[i].requires_grad;
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                } => {
                    let x = &self.nodes[*input].value;
                    let w = &self.nodes[*weight].value;
                    let (bs, len, cin) = (x.shape[0], x.shape[1], x.shape[2]);
                    let (k, cout) = (w.shape[0], w.shape[2]);
                    let pad = k / 2;
                    if need(*bias) {
                        let gb = acc(&mut grads, *bias, cout);
                        for row in g.chunks(cout) {
                            for (a, &v) in gb.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                    }
                    if need(*weight) {
                        let scale = if self.fault == BackwardFault::ConvWeightScale {
                            1.01
                        } else {
                            1.0
                        };
                        let gw = acc(&mut grads, *weight, w.len());
                        for bi in 0..bs {
                            for p in 0..len {
                                let grow = &g[(bi * len + p) * cout..(bi * len + p + 1) * cout];
                                for kk in 0..k {
                                    let Some(q) = (p + kk).checked_sub(pad).filter(|&q| q < len)
                                    else {
                                        continue;
                                    };
                                    let xrow =
                                        &x.data[(bi * len + q) * cin..(bi * len + q + 1) * cin];
                                    for (ci, &xv) in xrow.iter().enumerate() {
                                        if xv == 0.0 {
                                            continue;
                                        }
                                        let off = (kk * cin + ci) * cout;
                                        for (a, &gv) in gw[off..off + cout].iter_mut().zip(grow) {
                                            *a += scale * xv * gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    if need(*input) {
                        let gx = acc(&mut grads, *input, x.len());
                        for bi in 0..bs {
                            for p in 0..len {
                                let grow = &g[(bi * len + p) * cout..(bi * len + p + 1) * cout];
                                for kk in 0..k {
                                    let Some(q) = (p + kk).checked_sub(pad).filter(|&q| q < len)
                                    else {
                                        continue;
                                    };
                                    for ci in 0..cin {
                                        let off = (kk * cin + ci) * cout;
                                        let dot: f64 = w.data[off..off + cout]
                                            .iter()
                                            .zip(grow)
                                            .map(|(a, b)| a * b)
                                            .sum();
                                        gx[(bi * len + q) * cin + ci] += dot;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Dense {
                    input,
                    weight,
                    bias,
                } => {
                    let x = &self.nodes[*input].value;
                    let w = &self.nodes[*weight].value;
                    let (bs, din) = (x.shape[0], x.shape[1]);
                    let dout = w.shape[1];
                    if let Some(b) = bias.filter(|&b| need(b)) {
                        let gb = acc(&mut grads, b, dout);
                        for row in g.chunks(dout) {
                            for (a, &v) in gb.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                    }
                    if need(*weight) {
                        let gw = acc(&mut grads, *weight, w.len());
                        for bi in 0..bs {
                            let grow = &g[bi * dout..(bi + 1) * dout];
                            for (i, &xv) in x.data[bi * din..(bi + 1) * din].iter().enumerate() {
                                if xv == 0.0 {
                                    continue;
                                }
                                for (a, &gv) in gw[i * dout..(i + 1) * dout].iter_mut().zip(grow) {
                                    *a += xv * gv;
                                }
                            }
                        }
                    }
                    if need(*input) {
                        let gx = acc(&mut grads, *input, x.len());
                        for bi in 0..bs {
                            let grow = &g[bi * dout..(bi + 1) * dout];
                            for i in 0..din {
                                gx[bi * din + i] += w.data[i * dout..(i + 1) * dout]
                                    .iter()
                                    .zip(grow)
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>();
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    if need(*x) {
                        let pass = self.fault == BackwardFault::ReluPassThrough;
                        let xv = &self.nodes[*x].value.data;
                        let gx = acc(&mut grads, *x, xv.len());
                        for ((a, &v), &gv) in gx.iter_mut().zip(xv).zip(&g) {
                            if pass || v > 0.0 {
                                *a += gv;
                            }
                        }
                    }
                }
                Op::Tanh(x) => {
                    if need(*x) {
                        let y = &node.value.data;
                        let gx = acc(&mut grads, *x, y.len());
                        let broken = self.fault == BackwardFault::TanhDerivative;
                        for ((a, &yv), &gv) in gx.iter_mut().zip(y).zip(&g) {
                            let d = if broken { 1.0 - yv } else { 1.0 - yv * yv };
                            *a += gv * d;
                        }
                    }
                }
                Op::Add(a, b) => {
                    for &src in [a, b] {
                        if need(src) {
                            let gs = acc(&mut grads, src, g.len());
                            for (s, &gv) in gs.iter_mut().zip(&g) {
                                *s += gv;
                            }
                        }
                    }
                }
                Op::Flatten(x) => {
                    if need(*x) {
                        let gx = acc(&mut grads, *x, g.len());
                        for (s, &gv) in gx.iter_mut().zip(&g) {
                            *s += gv;
                        }
                    }
                }
                Op::MeanPool(x) => {
                    if need(*x) {
                        let shape = &self.nodes[*x].value.shape;
                        let (bs, len, c) = (shape[0], shape[1], shape[2]);
                        let gx = acc(&mut grads, *x, bs * len * c);
                        let inv = 1.0 / len as f64;
                        for bi in 0..bs {
                            for p in 0..len {
                                for ch in 0..c {
                                    gx[(bi * len + p) * c + ch] += g[bi * c + ch] * inv;
                                }
                            }
                        }
                    }
                }
                Op::Position { input, pos } => {
                    if need(*input) {
                        let shape = &self.nodes[*input].value.shape;
                        let (bs, len, c) = (shape[0], shape[1], shape[2]);
                        let gx = acc(&mut grads, *input, bs * len * c);
                        for bi in 0..bs {
                            let off = (bi * len + pos) * c;
                            for ch in 0..c {
                                gx[off + ch] += g[bi * c + ch];
                            }
                        }
                    }
                }
                Op::Mse { pred, target } => {
                    if need(*pred) {
                        let p = &self.nodes[*pred].value.data;
                        let scale = 2.0 * g[0] / target.len() as f64;
                        let gp = acc(&mut grads, *pred, p.len());
                        for ((a, &pv), &t) in gp.iter_mut().zip(p).zip(target) {
                            *a += scale * (pv - t);
                        }
                    }
                }
            }
        }
        Gradients { grads }
    }
}

pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for a leaf; `None` when no path reaches the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}
