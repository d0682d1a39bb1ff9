use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{log_softmax, sigmoid, Conv2d, ConvTranspose2d, Geometry, Layout, Linear, Mgu, MguTrace};
use crate::driver_models::{HISTORY_LEN, STATE_DIM};
use crate::error::{Error, Result};
use crate::ogm::{GridPose, OccupancyGrid};
use crate::scalar::Real;

/// Layer dimensions of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvaeShape {
    /// Number of latent classes.
    pub k: usize,
    /// Trajectory length in states.
    pub steps: usize,
    pub state_dim: usize,
    /// Recurrent hidden width.
    pub hidden: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    /// Feature channels of every convolution stage.
    pub channels: usize,
    /// Number of stride-2 stages; 0 replaces them with dense layers.
    pub stages: usize,
    /// Width of the first decoder layer.
    pub decoder_hidden: usize,
}

impl Default for CvaeShape {
    fn default() -> Self {
        Self {
            k: 10,
            steps: HISTORY_LEN,
            state_dim: STATE_DIM,
            hidden: 5,
            grid_height: 20,
            grid_width: 30,
            channels: 4,
            stages: 2,
            decoder_hidden: 32,
        }
    }
}

impl CvaeShape {
    pub fn feature_len(&self) -> usize {
        self.steps * self.state_dim
    }

    pub fn grid_len(&self) -> usize {
        self.grid_height * self.grid_width
    }
}

/// Layer objects and parameter layout derived from a [`CvaeShape`].
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Network {
    pub shape: CvaeShape,
    pub layout: Layout,
    prior_rnn: Mgu,
    prior_head: Linear,
    post_rnn: Mgu,
    post_convs: Vec<Conv2d>,
    post_head: Linear,
    dec_fc1: Linear,
    dec_fc2: Linear,
    /// Applied in order, deepest stage first.
    dec_ups: Vec<ConvTranspose2d>,
    dec_out: Option<Linear>,
    feat_len: usize,
}

/// Encoder activations kept for the backward pass.
pub(crate) struct EncoderPass<T> {
    trace: MguTrace<T>,
    convs: Vec<Vec<T>>,
    pub logits: Vec<T>,
}

/// Decoder activations of one class.
pub(crate) struct DecoderPass<T> {
    a1: Vec<T>,
    a2: Vec<T>,
    ups: Vec<Vec<T>>,
    pub logits: Vec<T>,
}

fn relu_in_place<T: Real>(v: &mut [T]) {
    for x in v {
        *x = x.max(T::zero());
    }
}

/// Zeroes `d` where the rectified activation `a` is not positive.
fn relu_mask<T: Real>(d: &mut [T], a: &[T]) {
    for (dv, &av) in d.iter_mut().zip(a) {
        if av <= T::zero() {
            *dv = T::zero();
        }
    }
}

impl Network {
    pub fn new(shape: CvaeShape) -> Result<Self> {
        let s = shape;
        if s.k < 2 || s.steps == 0 || s.state_dim == 0 || s.hidden == 0 || s.decoder_hidden == 0 {
            return Err(Error::Config(format!("invalid network shape {s:?}")));
        }
        if s.grid_height == 0 || s.grid_width == 0 || (s.stages > 0 && s.channels == 0) {
            return Err(Error::Config(format!("invalid network shape {s:?}")));
        }
        let geo = Geometry::DOWN2;
        let mut dims = vec![(s.grid_height, s.grid_width)];
        for _ in 0..s.stages {
            let (h, w) = *dims.last().expect("nonempty");
            match (geo.conv_out(h), geo.conv_out(w)) {
                (Some(a), Some(b)) if a > 0 && b > 0 => dims.push((a, b)),
                _ => return Err(Error::Config(format!("grid too small for {} stages", s.stages))),
            }
        }
        let mut layout = Layout::default();
        let prior_rnn = Mgu::new(&mut layout, "prior.rnn", s.state_dim, s.hidden);
        let prior_head = Linear::new(&mut layout, "prior.head", s.hidden, s.k);
        let post_rnn = Mgu::new(&mut layout, "posterior.rnn", s.state_dim, s.hidden);
        let mut post_convs = Vec::with_capacity(s.stages);
        for i in 0..s.stages {
            let cin = if i == 0 { 1 } else { s.channels };
            let conv = Conv2d::new(&mut layout, &format!("posterior.conv{i}"), cin, s.channels, dims[i], geo)
                .ok_or_else(|| Error::Config("invalid convolution stage".into()))?;
            post_convs.push(conv);
        }
        let feat_len = if s.stages == 0 {
            s.grid_len()
        } else {
            let (h, w) = dims[s.stages];
            s.channels * h * w
        };
        let post_head = Linear::new(&mut layout, "posterior.head", feat_len + s.hidden, s.k);
        let dec_fc1 = Linear::new(&mut layout, "decoder.fc1", s.k, s.decoder_hidden);
        let dec_fc2 = Linear::new(&mut layout, "decoder.fc2", s.decoder_hidden, feat_len);
        let mut dec_ups = Vec::with_capacity(s.stages);
        for i in (0..s.stages).rev() {
            let cout = if i == 0 { 1 } else { s.channels };
            let up = ConvTranspose2d::new(
                &mut layout,
                &format!("decoder.up{i}"),
                s.channels,
                cout,
                dims[i + 1],
                dims[i],
                geo,
            )
            .ok_or_else(|| Error::Config(format!("stage {i} cannot be inverted by a stride-2 deconvolution")))?;
            dec_ups.push(up);
        }
        let dec_out = (s.stages == 0).then(|| Linear::new(&mut layout, "decoder.out", feat_len, s.grid_len()));
        Ok(Self {
            shape,
            layout,
            prior_rnn,
            prior_head,
            post_rnn,
            post_convs,
            post_head,
            dec_fc1,
            dec_fc2,
            dec_ups,
            dec_out,
            feat_len,
        })
    }

    pub fn prior_forward<T: Real>(&self, p: &[T], xs: &[T]) -> EncoderPass<T> {
        let trace = self.prior_rnn.forward(p, xs);
        let mut logits = vec![T::zero(); self.shape.k];
        self.prior_head.forward(p, trace.last(), &mut logits);
        EncoderPass {
            trace,
            convs: Vec::new(),
            logits,
        }
    }

    pub fn prior_backward<T: Real>(&self, p: &[T], xs: &[T], pass: &EncoderPass<T>, dlogits: &[T], g: &mut [T]) {
        let mut dh = vec![T::zero(); self.shape.hidden];
        self.prior_head.backward(p, pass.trace.last(), dlogits, g, Some(&mut dh));
        self.prior_rnn.backward(p, xs, &pass.trace, &dh, g);
    }

    fn head_input<T: Real>(&self, grid: &[T], pass: &EncoderPass<T>) -> Vec<T> {
        let feat = pass.convs.last().map_or(grid, |v| v.as_slice());
        let mut input = Vec::with_capacity(self.feat_len + self.shape.hidden);
        input.extend_from_slice(feat);
        input.extend_from_slice(pass.trace.last());
        input
    }

    pub fn posterior_forward<T: Real>(&self, p: &[T], xs: &[T], grid: &[T]) -> EncoderPass<T> {
        let trace = self.post_rnn.forward(p, xs);
        let mut convs: Vec<Vec<T>> = Vec::with_capacity(self.post_convs.len());
        for conv in &self.post_convs {
            let input = convs.last().map_or(grid, |v| v.as_slice());
            let mut out = vec![T::zero(); conv.output_len()];
            conv.forward(p, input, &mut out);
            relu_in_place(&mut out);
            convs.push(out);
        }
        let mut pass = EncoderPass {
            trace,
            convs,
            logits: vec![T::zero(); self.shape.k],
        };
        let input = self.head_input(grid, &pass);
        self.post_head.forward(p, &input, &mut pass.logits);
        pass
    }

    pub fn posterior_backward<T: Real>(
        &self,
        p: &[T],
        xs: &[T],
        grid: &[T],
        pass: &EncoderPass<T>,
        dlogits: &[T],
        g: &mut [T],
    ) {
        let input = self.head_input(grid, pass);
        let mut dinput = vec![T::zero(); input.len()];
        self.post_head.backward(p, &input, dlogits, g, Some(&mut dinput));
        self.post_rnn.backward(p, xs, &pass.trace, &dinput[self.feat_len..], g);
        let mut dact = dinput[..self.feat_len].to_vec();
        for s in (0..self.post_convs.len()).rev() {
            relu_mask(&mut dact, &pass.convs[s]);
            let conv = &self.post_convs[s];
            if s == 0 {
                conv.backward(p, grid, &dact, g, None);
            } else {
                let mut dx = vec![T::zero(); pass.convs[s - 1].len()];
                conv.backward(p, &pass.convs[s - 1], &dact, g, Some(&mut dx));
                dact = dx;
            }
        }
    }

    fn one_hot<T: Real>(&self, z: usize) -> Vec<T> {
        let mut v = vec![T::zero(); self.shape.k];
        v[z] = T::one();
        v
    }

    pub fn decode_forward<T: Real>(&self, p: &[T], z: usize) -> DecoderPass<T> {
        let x = self.one_hot::<T>(z);
        let mut a1 = vec![T::zero(); self.shape.decoder_hidden];
        self.dec_fc1.forward(p, &x, &mut a1);
        relu_in_place(&mut a1);
        let mut a2 = vec![T::zero(); self.feat_len];
        self.dec_fc2.forward(p, &a1, &mut a2);
        relu_in_place(&mut a2);
        let mut ups: Vec<Vec<T>> = Vec::with_capacity(self.dec_ups.len());
        let last = self.dec_ups.len().saturating_sub(1);
        for (j, up) in self.dec_ups.iter().enumerate() {
            let input = ups.last().unwrap_or(&a2);
            let mut out = vec![T::zero(); up.output_len()];
            up.forward(p, input, &mut out);
            if j != last {
                relu_in_place(&mut out);
            }
            ups.push(out);
        }
        let logits = match &self.dec_out {
            Some(out) => {
                let mut l = vec![T::zero(); self.shape.grid_len()];
                out.forward(p, &a2, &mut l);
                l
            }
            None => ups.pop().expect("at least one stage"),
        };
        DecoderPass { a1, a2, ups, logits }
    }

    pub fn decode_backward<T: Real>(&self, p: &[T], z: usize, pass: &DecoderPass<T>, dlogits: &[T], g: &mut [T]) {
        let mut da2 = vec![T::zero(); self.feat_len];
        match &self.dec_out {
            Some(out) => out.backward(p, &pass.a2, dlogits, g, Some(&mut da2)),
            None => {
                let mut dout = dlogits.to_vec();
                for j in (0..self.dec_ups.len()).rev() {
                    let input = if j == 0 { &pass.a2 } else { &pass.ups[j - 1] };
                    let mut dx = vec![T::zero(); input.len()];
                    self.dec_ups[j].backward(p, input, &dout, g, Some(&mut dx));
                    if j > 0 {
                        relu_mask(&mut dx, &pass.ups[j - 1]);
                        dout = dx;
                    } else {
                        da2 = dx;
                    }
                }
            }
        }
        relu_mask(&mut da2, &pass.a2);
        let mut da1 = vec![T::zero(); self.shape.decoder_hidden];
        self.dec_fc2.backward(p, &pass.a1, &da2, g, Some(&mut da1));
        relu_mask(&mut da1, &pass.a1);
        self.dec_fc1.backward(p, &self.one_hot::<T>(z), &da1, g, None);
    }

    /// Offset and length of the weight and bias blocks feeding the encoder logits.
    #[cfg(test)]
    pub(crate) fn head_blocks(&self) -> [(usize, usize); 2] {
        let s = self.shape;
        [
            (self.prior_head.weight_offset(), s.k * (s.hidden + 1)),
            (self.post_head.weight_offset(), s.k * (self.feat_len + s.hidden + 1)),
        ]
    }
}

/// Discrete-latent conditional VAE: prior and posterior encoders plus a decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Cvae<T> {
    net: Network,
    params: Vec<T>,
}

impl<T: Real> Cvae<T> {
    /// Xavier-uniform weights and zero biases from `seed`.
    pub fn new(shape: CvaeShape, seed: u64) -> Result<Self> {
        Self::with_rng(shape, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub(crate) fn with_rng<R: Rng>(shape: CvaeShape, rng: &mut R) -> Result<Self> {
        let net = Network::new(shape)?;
        let params = net.layout.initialize(rng);
        Ok(Self { net, params })
    }

    /// Parameter layout of a network with `shape`.
    pub fn layout_for(shape: CvaeShape) -> Result<Layout> {
        Ok(Network::new(shape)?.layout)
    }

    pub fn from_params(shape: CvaeShape, params: Vec<T>) -> Result<Self> {
        let net = Network::new(shape)?;
        if params.len() != net.layout.len() {
            return Err(Error::DimensionMismatch {
                expected: (net.layout.len(), 1),
                actual: (params.len(), 1),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameter".into()));
        }
        Ok(Self { net, params })
    }

    pub fn shape(&self) -> &CvaeShape {
        &self.net.shape
    }

    pub fn k(&self) -> usize {
        self.net.shape.k
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.net.layout
    }

    pub(crate) fn network(&self) -> &Network {
        &self.net
    }

    fn check_features(&self, features: &[T]) -> Result<()> {
        let n = self.net.shape.feature_len();
        if features.len() != n {
            return Err(Error::DimensionMismatch {
                expected: (n, 1),
                actual: (features.len(), 1),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory feature".into()));
        }
        Ok(())
    }

    fn check_grid(&self, grid: &OccupancyGrid<T>) -> Result<()> {
        let expected = (self.net.shape.grid_height, self.net.shape.grid_width);
        if grid.dims() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: grid.dims(),
            });
        }
        Ok(())
    }

    /// Prior class probabilities from a standardized feature vector.
    pub fn prior_encode(&self, features: &[T]) -> Result<Vec<T>> {
        self.check_features(features)?;
        let pass = self.net.prior_forward(&self.params, features);
        Ok(log_softmax(&pass.logits).into_iter().map(T::exp).collect())
    }

    /// Posterior class probabilities given the features and the driver-view grid.
    pub fn posterior_encode(&self, features: &[T], grid: &OccupancyGrid<T>) -> Result<Vec<T>> {
        self.check_features(features)?;
        self.check_grid(grid)?;
        let pass = self.net.posterior_forward(&self.params, features, grid.cells());
        Ok(log_softmax(&pass.logits).into_iter().map(T::exp).collect())
    }

    /// Decoded occupancy probabilities of class `z` (0-based).
    pub fn decode(&self, z: usize, resolution: T) -> Result<OccupancyGrid<T>> {
        if z >= self.k() {
            return Err(Error::Config(format!("class {z} out of range for K = {}", self.k())));
        }
        let pass = self.net.decode_forward(&self.params, z);
        let cells = pass.logits.into_iter().map(sigmoid).collect();
        let s = &self.net.shape;
        OccupancyGrid::new(s.grid_height, s.grid_width, resolution, GridPose::identity(), cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(seed: u64) -> Vec<f64> {
        (0..70).map(|i| ((i as f64 + seed as f64) * 0.37).sin()).collect()
    }

    #[test]
    fn default_shape_dimensions() {
        let net = Network::new(CvaeShape::default()).unwrap();
        assert_eq!(net.feat_len, 4 * 5 * 7);
        let m: Cvae<f64> = Cvae::new(CvaeShape::default(), 0).unwrap();
        let g = m.decode(3, 1.0).unwrap();
        assert_eq!(g.dims(), (20, 30));
        assert!(g.cells().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(g, m.decode(3, 1.0).unwrap());
        assert!(m.decode(10, 1.0).is_err());
    }

    #[test]
    fn encoders_output_distributions() {
        let m: Cvae<f64> = Cvae::new(CvaeShape::default(), 1).unwrap();
        let x = features(0);
        let p = m.prior_encode(&x).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v > 0.0));
        assert_eq!(p, m.prior_encode(&x).unwrap());
        let grid = OccupancyGrid::filled(20, 30, 1.0, GridPose::identity(), 1.0).unwrap();
        let q = m.posterior_encode(&x, &grid).unwrap();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(q.iter().all(|&v| v > 0.0));
        let small = OccupancyGrid::filled(10, 30, 1.0, GridPose::identity(), 1.0).unwrap();
        assert!(m.posterior_encode(&x, &small).is_err());
        let mut bad = x.clone();
        bad[4] = f64::NAN;
        assert!(m.prior_encode(&bad).is_err());
        assert!(m.prior_encode(&x[..69]).is_err());
    }

    #[test]
    fn zero_heads_give_uniform_outputs() {
        let mut m: Cvae<f64> = Cvae::new(CvaeShape::default(), 2).unwrap();
        for (off, len) in m.network().head_blocks() {
            m.params_mut()[off..off + len].iter_mut().for_each(|v| *v = 0.0);
        }
        let grid = OccupancyGrid::filled(20, 30, 1.0, GridPose::identity(), 0.0).unwrap();
        for seed in 0..3 {
            let x = features(seed);
            assert!(m.prior_encode(&x).unwrap().iter().all(|&v| (v - 0.1).abs() < 1e-15));
            assert!(m.posterior_encode(&x, &grid).unwrap().iter().all(|&v| (v - 0.1).abs() < 1e-15));
        }
    }

    #[test]
    fn shapes_validated() {
        let tiny = CvaeShape {
            grid_height: 1,
            grid_width: 2,
            ..CvaeShape::default()
        };
        assert!(Network::new(tiny).is_err());
        assert!(Network::new(CvaeShape { stages: 0, ..tiny }).is_ok());
        assert!(Network::new(CvaeShape { k: 1, ..CvaeShape::default() }).is_err());
        let m: Cvae<f32> = Cvae::new(CvaeShape { stages: 0, k: 2, ..tiny }, 0).unwrap();
        assert!(Cvae::<f32>::from_params(*m.shape(), m.params()[1..].to_vec()).is_err());
        assert_eq!(Cvae::from_params(*m.shape(), m.params().to_vec()).unwrap(), m);
    }
}
