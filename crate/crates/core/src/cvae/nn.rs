//! Layers over a flat parameter vector, with hand-written backward passes.
//!
//! Every layer stores offsets into the shared parameter vector; forward
//! passes read `params`, backward passes accumulate into a gradient vector
//! of the same length.

use rand::Rng;

use crate::scalar::{lit, Real};

/// Named block of the parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
    /// Fan-in and fan-out used for initialization; `None` for biases.
    pub fans: Option<(usize, usize)>,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sequential allocator of parameter slots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Layout {
    slots: Vec<Slot>,
    len: usize,
}

impl Layout {
    fn alloc(&mut self, name: String, shape: Vec<usize>, fans: Option<(usize, usize)>) -> usize {
        let offset = self.len;
        let slot = Slot {
            name,
            offset,
            shape,
            fans,
        };
        self.len += slot.len();
        self.slots.push(slot);
        offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Xavier-uniform weights and zero biases.
    pub fn initialize<T: Real, R: Rng>(&self, rng: &mut R) -> Vec<T> {
        let mut p = vec![T::zero(); self.len];
        for s in &self.slots {
            if let Some((fan_in, fan_out)) = s.fans {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in &mut p[s.offset..s.offset + s.len()] {
                    *v = lit(rng.random_range(-a..a));
                }
            }
        }
        p
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log-probabilities of a softmax.
pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + logits.iter().map(|&a| (a - m).exp()).sum::<T>().ln();
    logits.iter().map(|&a| a - lse).collect()
}

/// `y = W x + b` with `W` stored row-major as `out x in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    w: usize,
    b: usize,
}

impl Linear {
    pub fn new(layout: &mut Layout, name: &str, input: usize, output: usize) -> Self {
        let w = layout.alloc(format!("{name}.weight"), vec![output, input], Some((input, output)));
        let b = layout.alloc(format!("{name}.bias"), vec![output], None);
        Self { input, output, w, b }
    }

    pub fn weight_offset(&self) -> usize {
        self.w
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.input);
        let w = &p[self.w..self.w + self.input * self.output];
        for (o, yo) in y.iter_mut().enumerate().take(self.output) {
            let row = &w[o * self.input..(o + 1) * self.input];
            *yo = p[self.b + o] + row.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>();
        }
    }

    /// Accumulates parameter gradients; writes the input gradient if asked.
    pub fn backward<T: Real>(&self, p: &[T], x: &[T], dy: &[T], g: &mut [T], dx: Option<&mut [T]>) {
        for (o, &d) in dy.iter().enumerate().take(self.output) {
            if d == T::zero() {
                continue;
            }
            g[self.b + o] = g[self.b + o] + d;
            let row = &mut g[self.w + o * self.input..self.w + (o + 1) * self.input];
            for (gw, &xi) in row.iter_mut().zip(x) {
                *gw = *gw + d * xi;
            }
        }
        if let Some(dx) = dx {
            let w = &p[self.w..self.w + self.input * self.output];
            for (i, dxi) in dx.iter_mut().enumerate().take(self.input) {
                *dxi = (0..self.output).map(|o| w[o * self.input + i] * dy[o]).sum();
            }
        }
    }
}

/// Spatial geometry shared by the strided convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Geometry {
    pub const DOWN2: Geometry = Geometry {
        kernel: 4,
        stride: 2,
        padding: 1,
    };

    /// Output size of a convolution over `n` positions (`None` if empty).
    pub fn conv_out(&self, n: usize) -> Option<usize> {
        let span = n + 2 * self.padding;
        (span >= self.kernel).then(|| (span - self.kernel) / self.stride + 1)
    }

    /// Output padding that makes a transposed convolution map `small` back to `big`.
    pub fn output_padding(&self, small: usize, big: usize) -> Option<usize> {
        let base = (small.checked_sub(1)? * self.stride + self.kernel).checked_sub(2 * self.padding)?;
        let op = big.checked_sub(base)?;
        (op < self.stride).then_some(op)
    }
}

/// 2-d convolution over `[channel][row][col]` tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
    geo: Geometry,
    w: usize,
    b: usize,
}

impl Conv2d {
    pub fn new(layout: &mut Layout, name: &str, cin: usize, cout: usize, in_hw: (usize, usize), geo: Geometry) -> Option<Self> {
        let out_hw = (geo.conv_out(in_hw.0)?, geo.conv_out(in_hw.1)?);
        let k2 = geo.kernel * geo.kernel;
        let w = layout.alloc(
            format!("{name}.weight"),
            vec![cout, cin, geo.kernel, geo.kernel],
            Some((cin * k2, cout * k2)),
        );
        let b = layout.alloc(format!("{name}.bias"), vec![cout], None);
        Some(Self {
            cin,
            cout,
            in_hw,
            out_hw,
            geo,
            w,
            b,
        })
    }

    pub fn output_len(&self) -> usize {
        self.cout * self.out_hw.0 * self.out_hw.1
    }

    /// Calls `f(out_index, in_index, weight_index)` for every product term.
    #[inline]
    fn taps(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ih, iw) = self.in_hw;
        let (oh, ow) = self.out_hw;
        let k = self.geo.kernel;
        for co in 0..self.cout {
            for i in 0..oh {
                for j in 0..ow {
                    let out = (co * oh + i) * ow + j;
                    for ci in 0..self.cin {
                        for u in 0..k {
                            let r = (i * self.geo.stride + u) as isize - self.geo.padding as isize;
                            if r < 0 || r as usize >= ih {
                                continue;
                            }
                            for v in 0..k {
                                let c = (j * self.geo.stride + v) as isize - self.geo.padding as isize;
                                if c < 0 || c as usize >= iw {
                                    continue;
                                }
                                let inp = (ci * ih + r as usize) * iw + c as usize;
                                let wi = ((co * self.cin + ci) * k + u) * k + v;
                                f(out, inp, wi);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T], y: &mut [T]) {
        let plane = self.out_hw.0 * self.out_hw.1;
        for (o, yo) in y.iter_mut().enumerate().take(self.output_len()) {
            *yo = p[self.b + o / plane];
        }
        let w = &p[self.w..];
        self.taps(|o, i, wi| y[o] = y[o] + w[wi] * x[i]);
    }

    pub fn backward<T: Real>(&self, p: &[T], x: &[T], dy: &[T], g: &mut [T], dx: Option<&mut [T]>) {
        let plane = self.out_hw.0 * self.out_hw.1;
        for (o, &d) in dy.iter().enumerate().take(self.output_len()) {
            g[self.b + o / plane] = g[self.b + o / plane] + d;
        }
        let wo = self.w;
        self.taps(|o, i, wi| g[wo + wi] = g[wo + wi] + dy[o] * x[i]);
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = T::zero());
            let w = &p[self.w..];
            self.taps(|o, i, wi| dx[i] = dx[i] + w[wi] * dy[o]);
        }
    }
}

/// Transposed 2-d convolution (the adjoint of [`Conv2d`]) with output padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvTranspose2d {
    pub cin: usize,
    pub cout: usize,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
    geo: Geometry,
    w: usize,
    b: usize,
}

impl ConvTranspose2d {
    pub fn new(
        layout: &mut Layout,
        name: &str,
        cin: usize,
        cout: usize,
        in_hw: (usize, usize),
        out_hw: (usize, usize),
        geo: Geometry,
    ) -> Option<Self> {
        geo.output_padding(in_hw.0, out_hw.0)?;
        geo.output_padding(in_hw.1, out_hw.1)?;
        let k2 = geo.kernel * geo.kernel;
        let w = layout.alloc(
            format!("{name}.weight"),
            vec![cin, cout, geo.kernel, geo.kernel],
            Some((cin * k2, cout * k2)),
        );
        let b = layout.alloc(format!("{name}.bias"), vec![cout], None);
        Some(Self {
            cin,
            cout,
            in_hw,
            out_hw,
            geo,
            w,
            b,
        })
    }

    pub fn output_len(&self) -> usize {
        self.cout * self.out_hw.0 * self.out_hw.1
    }

    #[inline]
    fn taps(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ih, iw) = self.in_hw;
        let (oh, ow) = self.out_hw;
        let k = self.geo.kernel;
        for ci in 0..self.cin {
            for i in 0..ih {
                for j in 0..iw {
                    let inp = (ci * ih + i) * iw + j;
                    for co in 0..self.cout {
                        for u in 0..k {
                            let r = (i * self.geo.stride + u) as isize - self.geo.padding as isize;
                            if r < 0 || r as usize >= oh {
                                continue;
                            }
                            for v in 0..k {
                                let c = (j * self.geo.stride + v) as isize - self.geo.padding as isize;
                                if c < 0 || c as usize >= ow {
                                    continue;
                                }
                                let out = (co * oh + r as usize) * ow + c as usize;
                                let wi = ((ci * self.cout + co) * k + u) * k + v;
                                f(out, inp, wi);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &[T], y: &mut [T]) {
        let plane = self.out_hw.0 * self.out_hw.1;
        for (o, yo) in y.iter_mut().enumerate().take(self.output_len()) {
            *yo = p[self.b + o / plane];
        }
        let w = &p[self.w..];
        self.taps(|o, i, wi| y[o] = y[o] + w[wi] * x[i]);
    }

    pub fn backward<T: Real>(&self, p: &[T], x: &[T], dy: &[T], g: &mut [T], dx: Option<&mut [T]>) {
        let plane = self.out_hw.0 * self.out_hw.1;
        for (o, &d) in dy.iter().enumerate().take(self.output_len()) {
            g[self.b + o / plane] = g[self.b + o / plane] + d;
        }
        let wo = self.w;
        self.taps(|o, i, wi| g[wo + wi] = g[wo + wi] + dy[o] * x[i]);
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = T::zero());
            let w = &p[self.w..];
            self.taps(|o, i, wi| dx[i] = dx[i] + w[wi] * dy[o]);
        }
    }
}

/// Minimal gated unit:
/// `f = sigmoid(Wf x + Uf h + bf)`, `g = tanh(Wh x + Uh (f * h) + bh)`,
/// `h' = (1 - f) * h + f * g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mgu {
    pub input: usize,
    pub hidden: usize,
    wf: Linear,
    uf: usize,
    wh: Linear,
    uh: usize,
}

/// Per-step activations kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MguTrace<T> {
    /// `h_0 .. h_T`.
    pub h: Vec<Vec<T>>,
    f: Vec<Vec<T>>,
    g: Vec<Vec<T>>,
}

impl<T: Real> MguTrace<T> {
    pub fn last(&self) -> &[T] {
        self.h.last().expect("trace holds the initial state")
    }
}

impl Mgu {
    pub fn new(layout: &mut Layout, name: &str, input: usize, hidden: usize) -> Self {
        let wf = Linear::new(layout, &format!("{name}.forget_input"), input, hidden);
        let uf = layout.alloc(format!("{name}.forget_hidden"), vec![hidden, hidden], Some((hidden, hidden)));
        let wh = Linear::new(layout, &format!("{name}.cand_input"), input, hidden);
        let uh = layout.alloc(format!("{name}.cand_hidden"), vec![hidden, hidden], Some((hidden, hidden)));
        Self {
            input,
            hidden,
            wf,
            uf,
            wh,
            uh,
        }
    }

    fn matvec<T: Real>(&self, p: &[T], at: usize, x: &[T], out: &mut [T]) {
        let n = self.hidden;
        for (r, o) in out.iter_mut().enumerate() {
            *o = *o + (0..n).map(|c| p[at + r * n + c] * x[c]).sum::<T>();
        }
    }

    /// Runs the cell over `steps` consecutive inputs of width `input`.
    pub fn forward<T: Real>(&self, p: &[T], xs: &[T]) -> MguTrace<T> {
        let steps = xs.len() / self.input;
        let n = self.hidden;
        let mut trace = MguTrace {
            h: vec![vec![T::zero(); n]],
            f: Vec::with_capacity(steps),
            g: Vec::with_capacity(steps),
        };
        let mut af = vec![T::zero(); n];
        let mut ag = vec![T::zero(); n];
        for t in 0..steps {
            let x = &xs[t * self.input..(t + 1) * self.input];
            let h = trace.h[t].clone();
            self.wf.forward(p, x, &mut af);
            self.matvec(p, self.uf, &h, &mut af);
            let f: Vec<T> = af.iter().map(|&a| sigmoid(a)).collect();
            let r: Vec<T> = f.iter().zip(&h).map(|(&a, &b)| a * b).collect();
            self.wh.forward(p, x, &mut ag);
            self.matvec(p, self.uh, &r, &mut ag);
            let g: Vec<T> = ag.iter().map(|&a| a.tanh()).collect();
            let next = (0..n).map(|k| (T::one() - f[k]) * h[k] + f[k] * g[k]).collect();
            trace.f.push(f);
            trace.g.push(g);
            trace.h.push(next);
        }
        trace
    }

    /// Back-propagates `dh_last` (gradient of the final hidden state).
    pub fn backward<T: Real>(&self, p: &[T], xs: &[T], trace: &MguTrace<T>, dh_last: &[T], g: &mut [T]) {
        let n = self.hidden;
        let steps = trace.f.len();
        let mut dh = dh_last.to_vec();
        for t in (0..steps).rev() {
            let x = &xs[t * self.input..(t + 1) * self.input];
            let h = &trace.h[t];
            let f = &trace.f[t];
            let gc = &trace.g[t];
            let mut dprev: Vec<T> = (0..n).map(|k| dh[k] * (T::one() - f[k])).collect();
            let mut df: Vec<T> = (0..n).map(|k| dh[k] * (gc[k] - h[k])).collect();
            let dag: Vec<T> = (0..n).map(|k| dh[k] * f[k] * (T::one() - gc[k] * gc[k])).collect();
            let r: Vec<T> = (0..n).map(|k| f[k] * h[k]).collect();
            self.wh.backward(p, x, &dag, g, None);
            for a in 0..n {
                for b in 0..n {
                    let idx = self.uh + a * n + b;
                    g[idx] = g[idx] + dag[a] * r[b];
                }
            }
            for b in 0..n {
                let dr: T = (0..n).map(|a| p[self.uh + a * n + b] * dag[a]).sum();
                df[b] = df[b] + dr * h[b];
                dprev[b] = dprev[b] + dr * f[b];
            }
            let daf: Vec<T> = (0..n).map(|k| df[k] * f[k] * (T::one() - f[k])).collect();
            self.wf.backward(p, x, &daf, g, None);
            for a in 0..n {
                for b in 0..n {
                    let idx = self.uf + a * n + b;
                    g[idx] = g[idx] + daf[a] * h[b];
                }
            }
            for b in 0..n {
                dprev[b] = dprev[b] + (0..n).map(|a| p[self.uf + a * n + b] * daf[a]).sum::<T>();
            }
            dh = dprev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Checks `backward` of a scalar function `sum(c * forward(x))` by
    /// central differences over every parameter and input.
    fn check<F, B>(params: &mut [f64], x: &mut [f64], out_len: usize, fwd: F, bwd: B)
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64>,
        B: Fn(&[f64], &[f64], &[f64], &mut [f64], &mut [f64]),
    {
        let c: Vec<f64> = (0..out_len).map(|i| 0.3 + 0.1 * (i % 7) as f64).collect();
        let loss = |p: &[f64], x: &[f64]| fwd(p, x).iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let mut gp = vec![0.0; params.len()];
        let mut gx = vec![0.0; x.len()];
        bwd(params, x, &c, &mut gp, &mut gx);
        let h = 1e-6;
        for i in 0..params.len() {
            let v = params[i];
            params[i] = v + h;
            let up = loss(params, x);
            params[i] = v - h;
            let down = loss(params, x);
            params[i] = v;
            let num = (up - down) / (2.0 * h);
            assert!((num - gp[i]).abs() < 1e-6 * (1.0 + num.abs()), "param {i}: {num} vs {}", gp[i]);
        }
        for i in 0..x.len() {
            let v = x[i];
            x[i] = v + h;
            let up = loss(params, x);
            x[i] = v - h;
            let down = loss(params, x);
            x[i] = v;
            let num = (up - down) / (2.0 * h);
            assert!((num - gx[i]).abs() < 1e-6 * (1.0 + num.abs()), "input {i}: {num} vs {}", gx[i]);
        }
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn geometry() {
        let g = Geometry::DOWN2;
        assert_eq!(g.conv_out(20), Some(10));
        assert_eq!(g.conv_out(15), Some(7));
        assert_eq!(g.conv_out(1), None);
        assert_eq!(g.conv_out(2), Some(1));
        assert_eq!(g.output_padding(7, 15), Some(1));
        assert_eq!(g.output_padding(5, 10), Some(0));
        assert_eq!(g.output_padding(5, 13), None);
    }

    #[test]
    fn linear_gradients() {
        let mut layout = Layout::default();
        let l = Linear::new(&mut layout, "l", 3, 2);
        let mut p = random(layout.len(), 1);
        let mut x = random(3, 2);
        check(
            &mut p,
            &mut x,
            2,
            |p, x| {
                let mut y = vec![0.0; 2];
                l.forward(p, x, &mut y);
                y
            },
            |p, x, dy, g, dx| l.backward(p, x, dy, g, Some(dx)),
        );
    }

    #[test]
    fn conv_gradients() {
        let mut layout = Layout::default();
        let c = Conv2d::new(&mut layout, "c", 2, 3, (6, 5), Geometry::DOWN2).unwrap();
        assert_eq!(c.out_hw, (3, 2));
        let mut p = random(layout.len(), 3);
        let mut x = random(2 * 30, 4);
        check(
            &mut p,
            &mut x,
            c.output_len(),
            |p, x| {
                let mut y = vec![0.0; c.output_len()];
                c.forward(p, x, &mut y);
                y
            },
            |p, x, dy, g, dx| c.backward(p, x, dy, g, Some(dx)),
        );
    }

    #[test]
    fn deconv_gradients_and_adjointness() {
        let mut layout = Layout::default();
        let d = ConvTranspose2d::new(&mut layout, "d", 3, 2, (3, 2), (6, 5), Geometry::DOWN2).unwrap();
        let mut p = random(layout.len(), 5);
        let mut x = random(3 * 6, 6);
        check(
            &mut p,
            &mut x,
            d.output_len(),
            |p, x| {
                let mut y = vec![0.0; d.output_len()];
                d.forward(p, x, &mut y);
                y
            },
            |p, x, dy, g, dx| d.backward(p, x, dy, g, Some(dx)),
        );

        // <conv(a), b> = <a, deconv(b)> with shared weights and zero biases.
        let mut lc = Layout::default();
        let c = Conv2d::new(&mut lc, "c", 2, 3, (6, 5), Geometry::DOWN2).unwrap();
        let mut ld = Layout::default();
        let t = ConvTranspose2d::new(&mut ld, "t", 3, 2, (3, 2), (6, 5), Geometry::DOWN2).unwrap();
        let k = 16;
        let wc = random(3 * 2 * k, 7);
        let mut pc = vec![0.0; lc.len()];
        pc[..wc.len()].copy_from_slice(&wc);
        let mut pt = vec![0.0; ld.len()];
        for co in 0..3 {
            for ci in 0..2 {
                for tap in 0..k {
                    pt[(co * 2 + ci) * k + tap] = wc[(co * 2 + ci) * k + tap];
                }
            }
        }
        let a = random(60, 8);
        let b = random(18, 9);
        let mut ca = vec![0.0; 18];
        c.forward(&pc, &a, &mut ca);
        let mut tb = vec![0.0; 60];
        t.forward(&pt, &b, &mut tb);
        let lhs: f64 = ca.iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(&tb).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn mgu_gradients() {
        let mut layout = Layout::default();
        let m = Mgu::new(&mut layout, "m", 3, 4);
        let mut p = random(layout.len(), 10);
        let xs = random(3 * 5, 11);
        let c = [0.7, -0.2, 0.4, 1.1];
        let loss = |p: &[f64]| {
            let t = m.forward(p, &xs);
            t.last().iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
        };
        let t = m.forward(&p, &xs);
        let mut g = vec![0.0; p.len()];
        m.backward(&p, &xs, &t, &c, &mut g);
        for i in 0..p.len() {
            let v = p[i];
            p[i] = v + 1e-6;
            let up = loss(&p);
            p[i] = v - 1e-6;
            let down = loss(&p);
            p[i] = v;
            let num = (up - down) / 2e-6;
            assert!((num - g[i]).abs() < 1e-7 * (1.0 + num.abs()), "param {i}: {num} vs {}", g[i]);
        }
    }

    #[test]
    fn stable_scalar_functions() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(800.0f64) == 1.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0f64), 1000.0);
        let l = log_softmax(&[1000.0f64, 1000.0]);
        assert!((l[0] - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn xavier_bounds_and_zero_biases() {
        let mut layout = Layout::default();
        let l = Linear::new(&mut layout, "l", 30, 20);
        let p: Vec<f64> = layout.initialize(&mut ChaCha8Rng::seed_from_u64(0));
        let a = (6.0f64 / 50.0).sqrt();
        assert!(p[..600].iter().all(|v| v.abs() <= a));
        assert!(p[600..].iter().all(|&v| v == 0.0));
        assert_eq!(l.weight_offset(), 0);
        assert_eq!(layout.slots()[1].name, "l.bias");
    }
}
