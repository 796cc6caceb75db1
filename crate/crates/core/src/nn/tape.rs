use super::{ParamId, ParamStore, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv2d { x: Var, w: Var, b: Var, pad: (usize, usize) },
    Linear { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ChannelBias { x: Var, bias: Var },
    Silu(Var),
    Tanh(Var),
    Exp(Var),
    AvgPool { x: Var, k: (usize, usize) },
    Upsample { x: Var, k: (usize, usize) },
    Concat(Var, Var),
    SwapLeading(Var),
    Reshape(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
}

/// Records a forward computation so it can be differentiated in reverse.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of every recorded value, indexed by [`Var`].
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn conv_out(h: usize, k: usize, p: usize) -> usize {
    h + 2 * p + 1 - k
}

/// Gathers `[Ci, N, H, W]` into a `(Ci*kh*kw) x (N*Ho*Wo)` column matrix.
fn im2col<T: Scalar>(x: &Tensor<T>, kh: usize, kw: usize, pad: (usize, usize)) -> Vec<T> {
    let s = x.shape();
    let (ci, n, h, w) = (s[0], s[1], s[2], s[3]);
    let (ho, wo) = (conv_out(h, kh, pad.0), conv_out(w, kw, pad.1));
    let m = n * ho * wo;
    let mut cols = vec![T::zero(); ci * kh * kw * m];
    let xd = x.data();
    for c in 0..ci {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((c * kh + ky) * kw + kx) * m;
                // Output columns ox with 0 <= ox + kx - pw < w.
                let ox_lo = pad.1.saturating_sub(kx);
                let ox_hi = (w + pad.1).saturating_sub(kx).min(wo);
                if ox_lo >= ox_hi {
                    continue;
                }
                for b in 0..n {
                    for oy in 0..ho {
                        let iy = oy + ky;
                        if iy < pad.0 || iy - pad.0 >= h {
                            continue;
                        }
                        let iy = iy - pad.0;
                        let src = ((c * n + b) * h + iy) * w + ox_lo + kx - pad.1;
                        let dst = row + (b * ho + oy) * wo + ox_lo;
                        let len = ox_hi - ox_lo;
                        cols[dst..dst + len].copy_from_slice(&xd[src..src + len]);
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-adds a column matrix back onto an input-shaped buffer.
fn col2im<T: Scalar>(
    cols: &[T],
    shape: &[usize],
    kh: usize,
    kw: usize,
    pad: (usize, usize),
) -> Tensor<T> {
    let (ci, n, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (ho, wo) = (conv_out(h, kh, pad.0), conv_out(w, kw, pad.1));
    let m = n * ho * wo;
    let mut out = vec![T::zero(); ci * n * h * w];
    for c in 0..ci {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((c * kh + ky) * kw + kx) * m;
                let ox_lo = pad.1.saturating_sub(kx);
                let ox_hi = (w + pad.1).saturating_sub(kx).min(wo);
                if ox_lo >= ox_hi {
                    continue;
                }
                for b in 0..n {
                    for oy in 0..ho {
                        let iy = oy + ky;
                        if iy < pad.0 || iy - pad.0 >= h {
                            continue;
                        }
                        let iy = iy - pad.0;
                        let dst = ((c * n + b) * h + iy) * w + ox_lo + kx - pad.1;
                        let src = row + (b * ho + oy) * wo + ox_lo;
                        let len = ox_hi - ox_lo;
                        for (o, &v) in out[dst..dst + len].iter_mut().zip(&cols[src..src + len]) {
                            *o = *o + v;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(shape.to_vec(), out)
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// Stride-1 convolution. `x: [Ci, N, H, W]`, `w: [Co, Ci, kh, kw]`,
    /// `b: [Co]`, zero padding `pad = (ph, pw)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, pad: (usize, usize)) -> Var {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(xs.len(), 4, "conv2d input must be [C, N, H, W]");
        assert_eq!(xs[0], ws[1], "conv2d channel mismatch");
        let (co, k) = (ws[0], ws[1] * ws[2] * ws[3]);
        let (ho, wo) = (conv_out(xs[2], ws[2], pad.0), conv_out(xs[3], ws[3], pad.1));
        let m = xs[1] * ho * wo;
        let cols = im2col(self.value(x), ws[2], ws[3], pad);
        let mut out = vec![T::zero(); co * m];
        let bias = self.value(b).data();
        for (o, row) in out.chunks_mut(m).enumerate() {
            row.iter_mut().for_each(|v| *v = bias[o]);
        }
        T::gemm(
            co,
            k,
            m,
            T::one(),
            self.value(w).data(),
            k as isize,
            1,
            &cols,
            m as isize,
            1,
            T::one(),
            &mut out,
            m as isize,
            1,
        );
        self.push(
            Tensor::new(vec![co, xs[1], ho, wo], out),
            Op::Conv2d { x, w, b, pad },
        )
    }

    /// `x: [N, In]`, `w: [Out, In]`, `b: [Out]` -> `[N, Out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(xs[1], ws[1], "linear input mismatch");
        let (n, inp, outp) = (xs[0], xs[1], ws[0]);
        let bias = self.value(b).data();
        let mut out: Vec<T> = (0..n).flat_map(|_| bias.iter().copied()).collect();
        T::gemm(
            n,
            inp,
            outp,
            T::one(),
            self.value(x).data(),
            inp as isize,
            1,
            self.value(w).data(),
            1,
            inp as isize,
            T::one(),
            &mut out,
            outp as isize,
            1,
        );
        self.push(Tensor::new(vec![n, outp], out), Op::Linear { x, w, b })
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::new(shape, data), op)
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T, op: Op) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| f(x)).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::new(shape, data), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let k = T::lit(s);
        self.map(a, |x| x * k, Op::Scale(a, s))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.map(a, |x| x * sigmoid(x), Op::Silu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, |x| x.exp(), Op::Exp(a))
    }

    /// Adds a per-sample, per-channel offset: `x: [C, N, ...]`, `bias: [N, C]`.
    pub fn channel_bias(&mut self, x: Var, bias: Var) -> Var {
        let xs = self.value(x).shape().to_vec();
        let bs = self.value(bias).shape().to_vec();
        assert_eq!(bs, vec![xs[1], xs[0]], "channel bias must be [N, C]");
        let (c, n) = (xs[0], xs[1]);
        let inner: usize = xs[2..].iter().product();
        let mut data = self.value(x).data().to_vec();
        let bd = self.value(bias).data();
        for ci in 0..c {
            for b in 0..n {
                let off = bd[b * c + ci];
                let start = (ci * n + b) * inner;
                data[start..start + inner].iter_mut().for_each(|v| *v = *v + off);
            }
        }
        self.push(Tensor::new(xs, data), Op::ChannelBias { x, bias })
    }

    /// Non-overlapping `kh x kw` mean pooling on `[C, N, H, W]`.
    pub fn avg_pool(&mut self, x: Var, k: (usize, usize)) -> Var {
        let xs = self.value(x).shape().to_vec();
        let (h, w) = (xs[2], xs[3]);
        assert!(h % k.0 == 0 && w % k.1 == 0, "pool size must divide input");
        let (ho, wo) = (h / k.0, w / k.1);
        let planes = xs[0] * xs[1];
        let scale = T::lit(1.0 / (k.0 * k.1) as f64);
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); planes * ho * wo];
        for p in 0..planes {
            for y in 0..h {
                for xx in 0..w {
                    let o = (p * ho + y / k.0) * wo + xx / k.1;
                    out[o] = out[o] + xd[(p * h + y) * w + xx] * scale;
                }
            }
        }
        self.push(
            Tensor::new(vec![xs[0], xs[1], ho, wo], out),
            Op::AvgPool { x, k },
        )
    }

    /// Nearest-neighbour upsampling by `(kh, kw)` on `[C, N, H, W]`.
    pub fn upsample(&mut self, x: Var, k: (usize, usize)) -> Var {
        let xs = self.value(x).shape().to_vec();
        let (h, w) = (xs[2], xs[3]);
        let (ho, wo) = (h * k.0, w * k.1);
        let planes = xs[0] * xs[1];
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); planes * ho * wo];
        for p in 0..planes {
            for y in 0..ho {
                for xx in 0..wo {
                    out[(p * ho + y) * wo + xx] = xd[(p * h + y / k.0) * w + xx / k.1];
                }
            }
        }
        self.push(
            Tensor::new(vec![xs[0], xs[1], ho, wo], out),
            Op::Upsample { x, k },
        )
    }

    /// Concatenation along the leading axis (channels for `[C, N, H, W]`).
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        assert_eq!(sa[1..], sb[1..], "concat trailing shape mismatch");
        let mut shape = sa.to_vec();
        shape[0] += sb[0];
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        self.push(Tensor::new(shape, data), Op::Concat(a, b))
    }

    /// `[A, B, ..] -> [B, A, ..]`, e.g. between `[C, N, H, W]` and
    /// `[N, C, H, W]`.
    pub fn swap_leading(&mut self, a: Var) -> Var {
        let t = self.value(a).swap_leading();
        self.push(t, Op::SwapLeading(a))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let t = self.value(a).clone().reshaped(shape);
        self.push(t, Op::Reshape(a))
    }

    /// Reverse pass from the given output gradients. Parameter gradients
    /// are accumulated into `store`.
    pub fn backward(&self, seeds: &[(Var, Tensor<T>)], store: &mut ParamStore<T>) -> Grads<T> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            assert_eq!(g.shape(), self.value(*v).shape(), "seed gradient shape");
            accumulate(&mut grads, *v, g.clone());
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads, store);
            grads[i] = Some(g);
        }
        Grads { grads }
    }

    fn backward_node(
        &self,
        i: usize,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
        store: &mut ParamStore<T>,
    ) {
        let node = &self.nodes[i];
        match node.op {
            Op::Input => {}
            Op::Param(id) => store.grad_mut(id).add_assign(g),
            Op::Conv2d { x, w, b, pad } => {
                let xs = self.value(x).shape();
                let ws = self.value(w).shape();
                let (co, k) = (ws[0], ws[1] * ws[2] * ws[3]);
                let m = g.len() / co;
                let cols = im2col(self.value(x), ws[2], ws[3], pad);
                let mut dw = vec![T::zero(); co * k];
                T::gemm(
                    co, m, k, T::one(), g.data(), m as isize, 1, &cols, 1, m as isize,
                    T::zero(), &mut dw, k as isize, 1,
                );
                let db: Vec<T> = g
                    .data()
                    .chunks(m)
                    .map(|r| r.iter().fold(T::zero(), |a, &v| a + v))
                    .collect();
                let mut dcols = vec![T::zero(); k * m];
                T::gemm(
                    k, co, m, T::one(), self.value(w).data(), 1, k as isize, g.data(),
                    m as isize, 1, T::zero(), &mut dcols, m as isize, 1,
                );
                let dx = col2im(&dcols, xs, ws[2], ws[3], pad);
                accumulate(grads, x, dx);
                accumulate(grads, w, Tensor::new(ws.to_vec(), dw));
                accumulate(grads, b, Tensor::new(vec![co], db));
            }
            Op::Linear { x, w, b } => {
                let xs = self.value(x).shape();
                let (n, inp) = (xs[0], xs[1]);
                let outp = self.value(w).shape()[0];
                let mut dx = vec![T::zero(); n * inp];
                T::gemm(
                    n, outp, inp, T::one(), g.data(), outp as isize, 1, self.value(w).data(),
                    inp as isize, 1, T::zero(), &mut dx, inp as isize, 1,
                );
                let mut dw = vec![T::zero(); outp * inp];
                T::gemm(
                    outp, n, inp, T::one(), g.data(), 1, outp as isize, self.value(x).data(),
                    inp as isize, 1, T::zero(), &mut dw, inp as isize, 1,
                );
                let mut db = vec![T::zero(); outp];
                for row in g.data().chunks(outp) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d = *d + v;
                    }
                }
                accumulate(grads, x, Tensor::new(vec![n, inp], dx));
                accumulate(grads, w, Tensor::new(vec![outp, inp], dw));
                accumulate(grads, b, Tensor::new(vec![outp], db));
            }
            Op::Add(a, b) => {
                accumulate(grads, a, g.clone());
                accumulate(grads, b, g.clone());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let da = g.data().iter().zip(vb.data()).map(|(&d, &y)| d * y).collect();
                let db = g.data().iter().zip(va.data()).map(|(&d, &x)| d * x).collect();
                accumulate(grads, a, Tensor::new(g.shape().to_vec(), da));
                accumulate(grads, b, Tensor::new(g.shape().to_vec(), db));
            }
            Op::Scale(a, s) => {
                let k = T::lit(s);
                let d = g.data().iter().map(|&v| v * k).collect();
                accumulate(grads, a, Tensor::new(g.shape().to_vec(), d));
            }
            Op::Silu(a) => {
                let d = g
                    .data()
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(&d, &x)| {
                        let s = sigmoid(x);
                        d * s * (T::one() + x * (T::one() - s))
                    })
                    .collect();
                accumulate(grads, a, Tensor::new(g.shape().to_vec(), d));
            }
            Op::Tanh(a) => {
                let d = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(&d, &y)| d * (T::one() - y * y))
                    .collect();
                accumulate(grads, a, Tensor::new(g.shape().to_vec(), d));
            }
            Op::Exp(a) => {
                let d = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(&d, &y)| d * y)
                    .collect();
                accumulate(grads, a, Tensor::new(g.shape().to_vec(), d));
            }
            Op::ChannelBias { x, bias } => {
                let xs = g.shape();
                let (c, n) = (xs[0], xs[1]);
                let inner: usize = xs[2..].iter().product();
                let mut db = vec![T::zero(); n * c];
                for ci in 0..c {
                    for b in 0..n {
                        let start = (ci * n + b) * inner;
                        db[b * c + ci] = g.data()[start..start + inner]
                            .iter()
                            .fold(T::zero(), |a, &v| a + v);
                    }
                }
                accumulate(grads, x, g.clone());
                accumulate(grads, bias, Tensor::new(vec![n, c], db));
            }
            Op::AvgPool { x, k } => {
                let xs = self.value(x).shape();
                let (h, w) = (xs[2], xs[3]);
                let (ho, wo) = (h / k.0, w / k.1);
                let planes = xs[0] * xs[1];
                let scale = T::lit(1.0 / (k.0 * k.1) as f64);
                let mut dx = vec![T::zero(); planes * h * w];
                for p in 0..planes {
                    for y in 0..h {
                        for xx in 0..w {
                            dx[(p * h + y) * w + xx] =
                                g.data()[(p * ho + y / k.0) * wo + xx / k.1] * scale;
                        }
                    }
                }
                accumulate(grads, x, Tensor::new(xs.to_vec(), dx));
            }
            Op::Upsample { x, k } => {
                let xs = self.value(x).shape();
                let (h, w) = (xs[2], xs[3]);
                let (ho, wo) = (h * k.0, w * k.1);
                let planes = xs[0] * xs[1];
                let mut dx = vec![T::zero(); planes * h * w];
                for p in 0..planes {
                    for y in 0..ho {
                        for xx in 0..wo {
                            let o = (p * h + y / k.0) * w + xx / k.1;
                            dx[o] = dx[o] + g.data()[(p * ho + y) * wo + xx];
                        }
                    }
                }
                accumulate(grads, x, Tensor::new(xs.to_vec(), dx));
            }
            Op::Concat(a, b) => {
                let na = self.value(a).len();
                let sa = self.value(a).shape().to_vec();
                let sb = self.value(b).shape().to_vec();
                accumulate(grads, a, Tensor::new(sa, g.data()[..na].to_vec()));
                accumulate(grads, b, Tensor::new(sb, g.data()[na..].to_vec()));
            }
            Op::SwapLeading(a) => accumulate(grads, a, g.swap_leading()),
            Op::Reshape(a) => {
                let shape = self.value(a).shape().to_vec();
                accumulate(grads, a, g.clone().reshaped(shape));
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
