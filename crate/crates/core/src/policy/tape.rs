//! Reverse-mode differentiation over the handful of layer types the denoiser
//! needs. Parameters live in one flat vector; layers refer to them by offset.

use alloc::vec::Vec;
use libm::{exp, sqrt};
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Tensor};

pub const GROUP_NORM_EPS: f64 = 1e-5;

/// 1-D convolution over time: weight `[cout][cin·k]`, bias `[cout]`.
/// With `k = 1` on a length-1 sequence this is a linear layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub w: usize,
    pub b: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn out_len(&self, t: usize) -> usize {
        (t + 2 * self.pad - self.k) / self.stride + 1
    }
}

/// Group normalization with a per-channel affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormSpec {
    pub gamma: usize,
    pub beta: usize,
    pub c: usize,
    pub groups: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv { x: usize, spec: ConvSpec, col: Vec<f64> },
    GroupNorm { x: usize, spec: NormSpec, xhat: Vec<f64>, rstd: Vec<f64> },
    Mish { x: usize },
    Add { a: usize, b: usize },
    Film { h: usize, f: usize },
    Concat { a: usize, b: usize },
    Upsample { x: usize },
}

pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<(Tensor, Op)>,
}

/// `x·tanh(softplus(x))` with a single exponential:
/// `tanh(ln(1 + eˣ)) = n / (n + 2)` where `n = eˣ(eˣ + 2)`.
pub fn mish(x: f64) -> f64 {
    if x > 20.0 {
        return x;
    }
    let e = exp(x);
    let n = e * (e + 2.0);
    x * n / (n + 2.0)
}

fn mish_grad(x: f64) -> f64 {
    if x > 20.0 {
        return 1.0;
    }
    let e = exp(x);
    let n = e * (e + 2.0);
    let t = n / (n + 2.0);
    let sig = e / (1.0 + e);
    t + x * (1.0 - t * t) * sig
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.data.iter_mut().zip(&g.data) {
                *a += v;
            }
        }
        None => *slot = Some(g),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Self { params, nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push((value, op));
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].0
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn conv(&mut self, x: Var, spec: ConvSpec) -> Var {
        let xv = &self.nodes[x.0].0;
        assert_eq!(xv.c, spec.cin, "conv input channels");
        let (b, t) = (xv.b, xv.t);
        let tout = spec.out_len(t);
        let n = b * tout;
        let ck = spec.cin * spec.k;
        let mut col = alloc::vec![0.0; ck * n];
        for ci in 0..spec.cin {
            for j in 0..spec.k {
                let row = &mut col[(ci * spec.k + j) * n..(ci * spec.k + j + 1) * n];
                for bi in 0..b {
                    let src = &xv.data[(ci * b + bi) * t..(ci * b + bi + 1) * t];
                    for to in 0..tout {
                        let ti = (to * spec.stride + j) as isize - spec.pad as isize;
                        if ti >= 0 && (ti as usize) < t {
                            row[bi * tout + to] = src[ti as usize];
                        }
                    }
                }
            }
        }
        let mut out = Tensor::zeros(spec.cout, b, tout);
        for co in 0..spec.cout {
            let bias = self.params[spec.b + co];
            out.data[co * n..(co + 1) * n].fill(bias);
        }
        let w = &self.params[spec.w..spec.w + spec.cout * ck];
        gemm(spec.cout, ck, n, w, false, &col, false, 1.0, &mut out.data);
        self.push(out, Op::Conv { x: x.0, spec, col })
    }

    pub fn group_norm(&mut self, x: Var, spec: NormSpec) -> Var {
        let xv = &self.nodes[x.0].0;
        assert_eq!(xv.c, spec.c, "group norm channels");
        let (b, t) = (xv.b, xv.t);
        let cpg = spec.c / spec.groups;
        let m = (cpg * t) as f64;
        let mut xhat = alloc::vec![0.0; xv.len()];
        let mut rstd = alloc::vec![0.0; b * spec.groups];
        for g in 0..spec.groups {
            for bi in 0..b {
                let mut mean = 0.0;
                for c in g * cpg..(g + 1) * cpg {
                    mean += xv.data[(c * b + bi) * t..(c * b + bi + 1) * t].iter().sum::<f64>();
                }
                mean /= m;
                let mut var = 0.0;
                for c in g * cpg..(g + 1) * cpg {
                    var += xv.data[(c * b + bi) * t..(c * b + bi + 1) * t].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                }
                var /= m;
                let r = 1.0 / sqrt(var + GROUP_NORM_EPS);
                rstd[bi * spec.groups + g] = r;
                for c in g * cpg..(g + 1) * cpg {
                    let base = (c * b + bi) * t;
                    for (h, v) in xhat[base..base + t].iter_mut().zip(&xv.data[base..base + t]) {
                        *h = (v - mean) * r;
                    }
                }
            }
        }
        let mut out = Tensor::zeros(spec.c, b, t);
        for c in 0..spec.c {
            let (ga, be) = (self.params[spec.gamma + c], self.params[spec.beta + c]);
            let span = c * b * t..(c + 1) * b * t;
            for (o, h) in out.data[span.clone()].iter_mut().zip(&xhat[span]) {
                *o = ga * h + be;
            }
        }
        self.push(out, Op::GroupNorm { x: x.0, spec, xhat, rstd })
    }

    pub fn mish(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].0;
        let out = Tensor { data: xv.data.iter().map(|&v| mish(v)).collect(), ..*xv };
        self.push(out, Op::Mish { x: x.0 })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].0, &self.nodes[b.0].0);
        assert_eq!(av.shape(), bv.shape(), "add shapes");
        let out = Tensor { data: av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect(), ..*av };
        self.push(out, Op::Add { a: a.0, b: b.0 })
    }

    /// Feature-wise affine: `f` is `[2C][B][1]`, scales then biases.
    pub fn film(&mut self, h: Var, f: Var) -> Var {
        let (hv, fv) = (&self.nodes[h.0].0, &self.nodes[f.0].0);
        let (c, b, t) = (hv.c, hv.b, hv.t);
        assert_eq!(fv.shape(), [2 * c, b, 1], "film shapes");
        let mut out = Tensor::zeros(c, b, t);
        for ci in 0..c {
            for bi in 0..b {
                let (s, o) = (fv.data[ci * b + bi], fv.data[(c + ci) * b + bi]);
                let base = (ci * b + bi) * t;
                for i in base..base + t {
                    out.data[i] = s * hv.data[i] + o;
                }
            }
        }
        self.push(out, Op::Film { h: h.0, f: f.0 })
    }

    /// Channel concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].0, &self.nodes[b.0].0);
        assert_eq!((av.b, av.t), (bv.b, bv.t), "concat shapes");
        let mut data = av.data.clone();
        data.extend_from_slice(&bv.data);
        let out = Tensor::from_vec(data, av.c + bv.c, av.b, av.t);
        self.push(out, Op::Concat { a: a.0, b: b.0 })
    }

    /// Nearest-neighbour ×2 upsampling in time.
    pub fn upsample(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].0;
        let mut out = Tensor::zeros(xv.c, xv.b, 2 * xv.t);
        for (i, v) in xv.data.iter().enumerate() {
            out.data[2 * i] = *v;
            out.data[2 * i + 1] = *v;
        }
        self.push(out, Op::Upsample { x: x.0 })
    }

    /// Back-propagates `dout` from `out`, adding parameter gradients into
    /// `grads`. Returns the gradient of every node (leaves included).
    pub fn backward(&self, out: Var, dout: Tensor, grads: &mut [f64]) -> Vec<Option<Tensor>> {
        let mut g: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        g[out.0] = Some(dout);
        for i in (0..=out.0).rev() {
            let Some(dy) = g[i].take() else { continue };
            let (y, op) = &self.nodes[i];
            match op {
                Op::Leaf => {
                    g[i] = Some(dy);
                }
                Op::Conv { x, spec, col } => {
                    let xv = &self.nodes[*x].0;
                    let (b, t) = (xv.b, xv.t);
                    let n = b * y.t;
                    let ck = spec.cin * spec.k;
                    gemm(spec.cout, n, ck, &dy.data, false, col, true, 1.0, &mut grads[spec.w..spec.w + spec.cout * ck]);
                    for co in 0..spec.cout {
                        grads[spec.b + co] += dy.data[co * n..(co + 1) * n].iter().sum::<f64>();
                    }
                    let w = &self.params[spec.w..spec.w + spec.cout * ck];
                    let mut dcol = alloc::vec![0.0; ck * n];
                    gemm(ck, spec.cout, n, w, true, &dy.data, false, 0.0, &mut dcol);
                    let mut dx = Tensor::zeros(spec.cin, b, t);
                    let tout = y.t;
                    for ci in 0..spec.cin {
                        for j in 0..spec.k {
                            let row = &dcol[(ci * spec.k + j) * n..(ci * spec.k + j + 1) * n];
                            for bi in 0..b {
                                let dst = (ci * b + bi) * t;
                                for to in 0..tout {
                                    let ti = (to * spec.stride + j) as isize - spec.pad as isize;
                                    if ti >= 0 && (ti as usize) < t {
                                        dx.data[dst + ti as usize] += row[bi * tout + to];
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut g[*x], dx);
                }
                Op::GroupNorm { x, spec, xhat, rstd } => {
                    let (b, t) = (y.b, y.t);
                    let cpg = spec.c / spec.groups;
                    let m = (cpg * t) as f64;
                    let mut dxhat = alloc::vec![0.0; dy.len()];
                    for c in 0..spec.c {
                        let ga = self.params[spec.gamma + c];
                        let (mut dg, mut db) = (0.0, 0.0);
                        for i in c * b * t..(c + 1) * b * t {
                            dg += dy.data[i] * xhat[i];
                            db += dy.data[i];
                            dxhat[i] = dy.data[i] * ga;
                        }
                        grads[spec.gamma + c] += dg;
                        grads[spec.beta + c] += db;
                    }
                    let mut dx = Tensor::zeros(spec.c, b, t);
                    for gi in 0..spec.groups {
                        for bi in 0..b {
                            let (mut s1, mut s2) = (0.0, 0.0);
                            for c in gi * cpg..(gi + 1) * cpg {
                                let base = (c * b + bi) * t;
                                for k in base..base + t {
                                    s1 += dxhat[k];
                                    s2 += dxhat[k] * xhat[k];
                                }
                            }
                            let r = rstd[bi * spec.groups + gi];
                            for c in gi * cpg..(gi + 1) * cpg {
                                let base = (c * b + bi) * t;
                                for k in base..base + t {
                                    dx.data[k] = r / m * (m * dxhat[k] - s1 - xhat[k] * s2);
                                }
                            }
                        }
                    }
                    accumulate(&mut g[*x], dx);
                }
                Op::Mish { x } => {
                    let xv = &self.nodes[*x].0;
                    let data = xv.data.iter().zip(&dy.data).map(|(&v, &d)| d * mish_grad(v)).collect();
                    accumulate(&mut g[*x], Tensor { data, ..*xv });
                }
                Op::Add { a, b } => {
                    accumulate(&mut g[*b], dy.clone());
                    accumulate(&mut g[*a], dy);
                }
                Op::Film { h, f } => {
                    let (hv, fv) = (&self.nodes[*h].0, &self.nodes[*f].0);
                    let (c, b, t) = (hv.c, hv.b, hv.t);
                    let mut dh = Tensor::zeros(c, b, t);
                    let mut df = Tensor::zeros(2 * c, b, 1);
                    for ci in 0..c {
                        for bi in 0..b {
                            let s = fv.data[ci * b + bi];
                            let base = (ci * b + bi) * t;
                            let (mut ds, mut dofs) = (0.0, 0.0);
                            for k in base..base + t {
                                dh.data[k] = s * dy.data[k];
                                ds += dy.data[k] * hv.data[k];
                                dofs += dy.data[k];
                            }
                            df.data[ci * b + bi] = ds;
                            df.data[(c + ci) * b + bi] = dofs;
                        }
                    }
                    accumulate(&mut g[*h], dh);
                    accumulate(&mut g[*f], df);
                }
                Op::Concat { a, b } => {
                    let ca = self.nodes[*a].0.c;
                    let split = ca * y.b * y.t;
                    let da = Tensor::from_vec(dy.data[..split].to_vec(), ca, y.b, y.t);
                    let db = Tensor::from_vec(dy.data[split..].to_vec(), y.c - ca, y.b, y.t);
                    accumulate(&mut g[*a], da);
                    accumulate(&mut g[*b], db);
                }
                Op::Upsample { x } => {
                    let xv = &self.nodes[*x].0;
                    let data = (0..xv.len()).map(|k| dy.data[2 * k] + dy.data[2 * k + 1]).collect();
                    accumulate(&mut g[*x], Tensor { data, ..*xv });
                }
            }
        }
        g
    }
}
