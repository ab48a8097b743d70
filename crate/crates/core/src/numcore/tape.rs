use crate::error::{Error, Result};

use super::kernels::{self, ConvGeom};
use super::tensor::{ParamSet, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        pad: usize,
    },
    Depthwise {
        x: Var,
        k: Var,
        per_sample: bool,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Act {
        x: Var,
        kind: Activation,
    },
    Add {
        a: Var,
        b: Var,
    },
    ScaleChannels {
        x: Var,
        s: Var,
    },
    Reshape {
        x: Var,
    },
    L1 {
        pred: Var,
        target: Var,
    },
    Sum {
        x: Var,
    },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, .. } => [Some(x), Some(w), b].into_iter().flatten().collect(),
            Op::Depthwise { x, k, .. } => vec![x, k],
            Op::Dense { x, w, b } => vec![x, w, b],
            Op::Act { x, .. } | Op::Reshape { x } | Op::Sum { x } => vec![x],
            Op::Add { a, b } => vec![a, b],
            Op::ScaleChannels { x, s } => vec![x, s],
            Op::L1 { pred, target } => vec![pred, target],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Linear record of one forward pass. Node indices are a topological order,
/// since every op can only reference values recorded before it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bindings: Vec<(String, Var)>,
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = match op {
            Op::Leaf => value.requires_grad(),
            _ => op.parents().iter().any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Gradients are tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        check_finite("leaf", t.data())?;
        let mut t = t;
        t.zero_grad();
        Ok(self.push(t, Op::Leaf))
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.leaf(t.with_requires_grad(false))
    }

    /// Records a copy of parameter `name`, bound so that
    /// [`Tape::accumulate_param_grads`] can route its gradient back.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        let t = params.get(name)?;
        let v = self.leaf(
            Tensor::from_parts(t.shape().to_vec(), t.data().to_vec()).with_requires_grad(true),
        )?;
        self.bindings.push((name.to_string(), v));
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// 2-D cross-correlation. `x: [N,Cin,H,W]`, `w: [Cout,Cin,k,k]`,
    /// `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, pad: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 4 || ws.len() != 4 || ws[2] != ws[3] {
            return Err(Error::shape(
                "conv2d",
                format!("input {xs:?}, kernel {ws:?}"),
            ));
        }
        if xs[1] != ws[1] {
            return Err(Error::shape(
                "conv2d",
                format!("input has {} channels, kernel expects {}", xs[1], ws[1]),
            ));
        }
        let k = ws[2];
        if k == 0 || xs[2] + 2 * pad < k || xs[3] + 2 * pad < k {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {k} too large for {xs:?}"),
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(Error::shape("conv2d", format!("bias {:?}", self.shape(b))));
            }
        }
        let g = ConvGeom {
            cin: xs[1],
            cout: ws[0],
            h: xs[2],
            w: xs[3],
            k,
            pad,
        };
        let n = xs[0];
        let (pin, pout) = (g.cin * g.h * g.w, g.cout * g.out_h() * g.out_w());
        let mut out = vec![0.0; n * pout];
        {
            let (xd, wd) = (self.data(x), self.data(w));
            let bd = b.map(|b| self.data(b));
            for s in 0..n {
                kernels::conv_forward(
                    &g,
                    &xd[s * pin..(s + 1) * pin],
                    wd,
                    bd,
                    &mut out[s * pout..(s + 1) * pout],
                );
            }
        }
        check_finite("conv2d", &out)?;
        let t = Tensor::from_parts(vec![n, g.cout, g.out_h(), g.out_w()], out);
        Ok(self.push(t, Op::Conv2d { x, w, b, pad }))
    }

    /// Depthwise 3x3 convolution with padding 1. `k` is `[C,1,3,3]` (shared
    /// across the batch) or `[N,C,1,3,3]` (one kernel per sample).
    pub fn depthwise_conv2d(&mut self, x: Var, k: Var) -> Result<Var> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if xs.len() != 4 {
            return Err(Error::shape("depthwise_conv2d", format!("input {xs:?}")));
        }
        let per_sample = match ks.as_slice() {
            [c, 1, 3, 3] if *c == xs[1] => false,
            [n, c, 1, 3, 3] if *n == xs[0] && *c == xs[1] => true,
            _ => {
                return Err(Error::shape(
                    "depthwise_conv2d",
                    format!("kernel {ks:?} does not match input {xs:?}"),
                ))
            }
        };
        let g = ConvGeom {
            cin: xs[1],
            cout: xs[1],
            h: xs[2],
            w: xs[3],
            k: 3,
            pad: 1,
        };
        let plane = g.cin * g.h * g.w;
        let kstride = if per_sample { g.cin * 9 } else { 0 };
        let mut out = vec![0.0; xs[0] * plane];
        {
            let (xd, kd) = (self.data(x), self.data(k));
            for s in 0..xs[0] {
                kernels::depthwise_forward(
                    &g,
                    &xd[s * plane..(s + 1) * plane],
                    &kd[s * kstride..s * kstride + g.cin * 9],
                    &mut out[s * plane..(s + 1) * plane],
                );
            }
        }
        check_finite("depthwise_conv2d", &out)?;
        let t = Tensor::from_parts(xs, out);
        Ok(self.push(t, Op::Depthwise { x, k, per_sample }))
    }

    /// `x: [N,Din]`, `w: [Dout,Din]`, `b: [Dout]` → `x·wᵀ + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs != [ws[0]] {
            return Err(Error::shape(
                "dense",
                format!("input {xs:?}, weight {ws:?}, bias {bs:?}"),
            ));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let (xd, wd, bd) = (self.data(x), self.data(w), self.data(b));
        let mut out = vec![0.0; n * dout];
        for s in 0..n {
            let row = &xd[s * din..(s + 1) * din];
            for o in 0..dout {
                let wrow = &wd[o * din..(o + 1) * din];
                out[s * dout + o] = bd[o] + row.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        check_finite("dense", &out)?;
        let t = Tensor::from_parts(vec![n, dout], out);
        Ok(self.push(t, Op::Dense { x, w, b }))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let xt = self.value(x);
        let out: Vec<f64> = match kind {
            Activation::Relu => xt.data().iter().map(|&v| v.max(0.0)).collect(),
            Activation::Sigmoid => xt
                .data()
                .iter()
                .map(|&v| 1.0 / (1.0 + (-v).exp()))
                .collect(),
        };
        check_finite("activation", &out)?;
        let t = Tensor::from_parts(xt.shape().to_vec(), out);
        Ok(self.push(t, Op::Act { x, kind }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x + y)
            .collect();
        check_finite("add", &out)?;
        let t = Tensor::from_parts(self.shape(a).to_vec(), out);
        Ok(self.push(t, Op::Add { a, b }))
    }

    /// Channel attention: `x: [N,C,H,W]` scaled per `(n, c)` by `s: [N,C]`.
    pub fn scale_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || self.shape(s) != [xs[0], xs[1]] {
            return Err(Error::shape(
                "scale_channels",
                format!("input {xs:?}, scales {:?}", self.shape(s)),
            ));
        }
        let plane = xs[2] * xs[3];
        let sd = self.data(s);
        let out: Vec<f64> = self
            .data(x)
            .chunks(plane)
            .zip(sd)
            .flat_map(|(p, &sc)| p.iter().map(move |v| v * sc))
            .collect();
        check_finite("scale_channels", &out)?;
        let t = Tensor::from_parts(xs, out);
        Ok(self.push(t, Op::ScaleChannels { x, s }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).reshape(shape)?;
        Ok(self.push(t, Op::Reshape { x }))
    }

    /// Mean absolute difference; the gradient is `sign(pred - target) / n`.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::shape(
                "l1_loss",
                format!("{:?} vs {:?}", self.shape(pred), self.shape(target)),
            ));
        }
        let n = self.value(pred).numel().max(1) as f64;
        let total: f64 = self
            .data(pred)
            .iter()
            .zip(self.data(target))
            .map(|(p, t)| (p - t).abs())
            .sum();
        let loss = total / n;
        check_finite("l1_loss", &[loss])?;
        Ok(self.push(Tensor::scalar(loss), Op::L1 { pred, target }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.data(x).iter().sum();
        check_finite("sum", &[s])?;
        Ok(self.push(Tensor::scalar(s), Op::Sum { x }))
    }

    /// Clears accumulated leaf gradients.
    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.value.zero_grad());
    }

    /// Propagates d(loss)/d(·) to every reachable leaf that requires a
    /// gradient. Leaf gradients accumulate across calls until
    /// [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if node.op.parents().iter().any(|p| p.0 >= idx) {
                return Err(Error::CyclicGraph(idx));
            }
            if let Op::Leaf = node.op {
                grads[idx] = Some(g);
                continue;
            }
            self.backward_node(idx, &g, &mut grads)?;
        }

        for (idx, g) in grads.into_iter().enumerate() {
            if let (Some(g), Op::Leaf) = (g, &self.nodes[idx].op) {
                self.nodes[idx].value.accumulate_grad(&g)?;
            }
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>) {
            match &mut grads[v.0] {
                Some(buf) => buf.iter_mut().zip(&contrib).for_each(|(b, c)| *b += c),
                slot @ None => *slot = Some(contrib),
            }
        }

        let node = &self.nodes[idx];
        match node.op.clone() {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, pad } => {
                let xs = self.shape(x);
                let ws = self.shape(w);
                let geom = ConvGeom {
                    cin: xs[1],
                    cout: ws[0],
                    h: xs[2],
                    w: xs[3],
                    k: ws[2],
                    pad,
                };
                let n = xs[0];
                let (pin, pout) = (
                    geom.cin * geom.h * geom.w,
                    geom.cout * geom.out_h() * geom.out_w(),
                );
                let mut dx = self.needs(x).then(|| vec![0.0; self.value(x).numel()]);
                let mut dw = self.needs(w).then(|| vec![0.0; self.value(w).numel()]);
                let mut db = b.filter(|b| self.needs(*b)).map(|_| vec![0.0; geom.cout]);
                let (xd, wd) = (self.data(x), self.data(w));
                for s in 0..n {
                    kernels::conv_backward(
                        &geom,
                        &xd[s * pin..(s + 1) * pin],
                        wd,
                        &g[s * pout..(s + 1) * pout],
                        dx.as_deref_mut().map(|d| &mut d[s * pin..(s + 1) * pin]),
                        dw.as_deref_mut(),
                        db.as_deref_mut(),
                    );
                }
                if let Some(d) = dx {
                    acc(grads, x, d);
                }
                if let Some(d) = dw {
                    acc(grads, w, d);
                }
                if let (Some(b), Some(d)) = (b, db) {
                    acc(grads, b, d);
                }
            }
            Op::Depthwise { x, k, per_sample } => {
                let xs = self.shape(x);
                let geom = ConvGeom {
                    cin: xs[1],
                    cout: xs[1],
                    h: xs[2],
                    w: xs[3],
                    k: 3,
                    pad: 1,
                };
                let plane = geom.cin * geom.h * geom.w;
                let kstride = if per_sample { geom.cin * 9 } else { 0 };
                let mut dx = self.needs(x).then(|| vec![0.0; self.value(x).numel()]);
                let mut dk = self.needs(k).then(|| vec![0.0; self.value(k).numel()]);
                let (xd, kd) = (self.data(x), self.data(k));
                for s in 0..xs[0] {
                    kernels::depthwise_backward(
                        &geom,
                        &xd[s * plane..(s + 1) * plane],
                        &kd[s * kstride..s * kstride + geom.cin * 9],
                        &g[s * plane..(s + 1) * plane],
                        dx.as_deref_mut()
                            .map(|d| &mut d[s * plane..(s + 1) * plane]),
                        dk.as_deref_mut()
                            .map(|d| &mut d[s * kstride..s * kstride + geom.cin * 9]),
                    );
                }
                if let Some(d) = dx {
                    acc(grads, x, d);
                }
                if let Some(d) = dk {
                    acc(grads, k, d);
                }
            }
            Op::Dense { x, w, b } => {
                let xs = self.shape(x);
                let (n, din) = (xs[0], xs[1]);
                let dout = self.shape(w)[0];
                let (xd, wd) = (self.data(x), self.data(w));
                if self.needs(x) {
                    let mut dx = vec![0.0; n * din];
                    for s in 0..n {
                        for o in 0..dout {
                            let go = g[s * dout + o];
                            for i in 0..din {
                                dx[s * din + i] += go * wd[o * din + i];
                            }
                        }
                    }
                    acc(grads, x, dx);
                }
                if self.needs(w) {
                    let mut dw = vec![0.0; dout * din];
                    for s in 0..n {
                        for o in 0..dout {
                            let go = g[s * dout + o];
                            for i in 0..din {
                                dw[o * din + i] += go * xd[s * din + i];
                            }
                        }
                    }
                    acc(grads, w, dw);
                }
                if self.needs(b) {
                    let mut db = vec![0.0; dout];
                    for s in 0..n {
                        for o in 0..dout {
                            db[o] += g[s * dout + o];
                        }
                    }
                    acc(grads, b, db);
                }
            }
            Op::Act { x, kind } => {
                if self.needs(x) {
                    let d: Vec<f64> = match kind {
                        Activation::Relu => self
                            .data(x)
                            .iter()
                            .zip(g)
                            .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                            .collect(),
                        Activation::Sigmoid => node
                            .value
                            .data()
                            .iter()
                            .zip(g)
                            .map(|(&y, &gv)| gv * y * (1.0 - y))
                            .collect(),
                    };
                    acc(grads, x, d);
                }
            }
            Op::Add { a, b } => {
                if self.needs(a) {
                    acc(grads, a, g.to_vec());
                }
                if self.needs(b) {
                    acc(grads, b, g.to_vec());
                }
            }
            Op::ScaleChannels { x, s } => {
                let xs = self.shape(x);
                let plane = xs[2] * xs[3];
                let (xd, sd) = (self.data(x), self.data(s));
                if self.needs(x) {
                    let d: Vec<f64> = g
                        .chunks(plane)
                        .zip(sd)
                        .flat_map(|(p, &sc)| p.iter().map(move |v| v * sc))
                        .collect();
                    acc(grads, x, d);
                }
                if self.needs(s) {
                    let d: Vec<f64> = g
                        .chunks(plane)
                        .zip(xd.chunks(plane))
                        .map(|(gp, xp)| gp.iter().zip(xp).map(|(a, b)| a * b).sum())
                        .collect();
                    acc(grads, s, d);
                }
            }
            Op::Reshape { x } => {
                if self.needs(x) {
                    acc(grads, x, g.to_vec());
                }
            }
            Op::L1 { pred, target } => {
                let n = self.value(pred).numel().max(1) as f64;
                let scale = g[0] / n;
                let sign = |d: f64| {
                    if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                };
                let (pd, td) = (self.data(pred), self.data(target));
                if self.needs(pred) {
                    acc(
                        grads,
                        pred,
                        pd.iter()
                            .zip(td)
                            .map(|(p, t)| scale * sign(p - t))
                            .collect(),
                    );
                }
                if self.needs(target) {
                    acc(
                        grads,
                        target,
                        pd.iter()
                            .zip(td)
                            .map(|(p, t)| -scale * sign(p - t))
                            .collect(),
                    );
                }
            }
            Op::Sum { x } => {
                if self.needs(x) {
                    acc(grads, x, vec![g[0]; self.value(x).numel()]);
                }
            }
        }
        Ok(())
    }

    /// Adds the gradient of every bound parameter into `params`.
    pub fn accumulate_param_grads(&self, params: &mut ParamSet) -> Result<()> {
        for (name, v) in &self.bindings {
            if let Some(g) = self.grad(*v) {
                params.get_mut(name)?.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Gradients of bound parameters as a fresh [`ParamSet`] (zeros where a
    /// parameter received no gradient).
    pub fn param_grads(&self, like: &ParamSet) -> Result<ParamSet> {
        let mut out = ParamSet::new();
        for (name, t) in like.iter() {
            out.insert(name, Tensor::zeros(t.shape()))?;
        }
        for (name, v) in &self.bindings {
            if let Some(g) = self.grad(*v) {
                out.get_mut(name)?
                    .data_mut()
                    .iter_mut()
                    .zip(g)
                    .for_each(|(a, b)| *a += b);
            }
        }
        Ok(out)
    }
}
