use serde::{Deserialize, Serialize};

use super::model::Cvae;
use super::nn::{log_softmax, sigmoid, softplus};
use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// One training example: standardized features and the binary driver-view grid.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a, T> {
    pub features: &'a [T],
    pub grid: &'a [T],
}

/// Batch-averaged loss terms, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub reconstruction: T,
    /// Batch-mean KL divergence before clamping.
    pub kl_raw: T,
    /// `max(kl_raw, clamp)`.
    pub kl_clamped: T,
    pub mutual_information: T,
    pub beta: T,
    pub total: T,
}

/// Loss weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<T> {
    pub alpha: T,
    pub beta: T,
    pub kl_clamp: T,
}

/// Class-balance weights `(occupied, free)` of a batch.
pub fn class_weights<T: Real>(batch: &[Example<'_, T>]) -> (T, T) {
    let cells: usize = batch.iter().map(|e| e.grid.len()).sum();
    let occupied: T = batch.iter().flat_map(|e| e.grid.iter().copied()).sum();
    let free = count::<T>(cells) - occupied;
    if occupied <= T::zero() || free <= T::zero() {
        let half = lit(0.5);
        return (half, half);
    }
    let frac = occupied / count(cells);
    (T::one() - frac, frac)
}

fn check_batch<T: Real>(model: &Cvae<T>, batch: &[Example<'_, T>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let s = model.shape();
    for e in batch {
        if e.features.len() != s.feature_len() {
            return Err(Error::DimensionMismatch {
                expected: (s.feature_len(), 1),
                actual: (e.features.len(), 1),
            });
        }
        if e.grid.len() != s.grid_len() {
            return Err(Error::DimensionMismatch {
                expected: (s.grid_height, s.grid_width),
                actual: (e.grid.len(), 1),
            });
        }
        if e.grid.iter().any(|&v| v != T::zero() && v != T::one()) {
            return Err(Error::InvalidGrid("training grids must be binary".into()));
        }
        if e.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory feature".into()));
        }
    }
    Ok(())
}

/// Batch-averaged modified ELBO loss.
pub fn elbo_loss<T: Real>(model: &Cvae<T>, batch: &[Example<'_, T>], w: LossWeights<T>) -> Result<LossBreakdown<T>> {
    evaluate(model, batch, w, false).map(|(l, _)| l)
}

/// Loss and its gradient with respect to every parameter.
pub fn elbo_loss_and_grad<T: Real>(
    model: &Cvae<T>,
    batch: &[Example<'_, T>],
    w: LossWeights<T>,
) -> Result<(LossBreakdown<T>, Vec<T>)> {
    evaluate(model, batch, w, true).map(|(l, g)| (l, g.expect("gradient requested")))
}

fn entropy<T: Real>(logp: &[T]) -> T {
    -logp.iter().map(|&l| l.exp() * l).sum::<T>()
}

fn evaluate<T: Real>(
    model: &Cvae<T>,
    batch: &[Example<'_, T>],
    w: LossWeights<T>,
    want_grad: bool,
) -> Result<(LossBreakdown<T>, Option<Vec<T>>)> {
    check_batch(model, batch)?;
    let net = model.network();
    let p = model.params();
    let k = model.k();
    let b = count::<T>(batch.len());
    let (w_occ, w_free) = class_weights(batch);

    let decoders: Vec<_> = (0..k).map(|z| net.decode_forward(p, z)).collect();
    // Per-cell loss terms for target 1 and target 0.
    let sp_neg: Vec<Vec<T>> = decoders.iter().map(|d| d.logits.iter().map(|&l| softplus(-l)).collect()).collect();
    let sp_pos: Vec<Vec<T>> = decoders.iter().map(|d| d.logits.iter().map(|&l| softplus(l)).collect()).collect();

    let priors: Vec<_> = batch.iter().map(|e| net.prior_forward(p, e.features)).collect();
    let posts: Vec<_> = batch.iter().map(|e| net.posterior_forward(p, e.features, e.grid)).collect();
    let log_p: Vec<Vec<T>> = priors.iter().map(|e| log_softmax(&e.logits)).collect();
    let log_q: Vec<Vec<T>> = posts.iter().map(|e| log_softmax(&e.logits)).collect();

    let mut wce = vec![vec![T::zero(); k]; batch.len()];
    let mut recon = T::zero();
    let mut kl = T::zero();
    for (i, e) in batch.iter().enumerate() {
        for z in 0..k {
            wce[i][z] = e
                .grid
                .iter()
                .enumerate()
                .map(|(c, &m)| {
                    if m == T::one() {
                        w_occ * sp_neg[z][c]
                    } else {
                        w_free * sp_pos[z][c]
                    }
                })
                .sum();
            let q = log_q[i][z].exp();
            recon = recon + q * wce[i][z];
            kl = kl + q * (log_q[i][z] - log_p[i][z]);
        }
    }
    recon = recon / b;
    kl = kl / b;

    // Batch-mean prior in log space.
    let log_pbar: Vec<T> = (0..k)
        .map(|z| {
            let m = log_p.iter().map(|l| l[z]).fold(T::neg_infinity(), T::max);
            m + log_p.iter().map(|l| (l[z] - m).exp()).sum::<T>().ln() - b.ln()
        })
        .collect();
    let mean_entropy = log_p.iter().map(|l| entropy(l)).sum::<T>() / b;
    let mi = entropy(&log_pbar) - mean_entropy;

    let active = kl > w.kl_clamp;
    let kl_clamped = if active { kl } else { w.kl_clamp };
    let total = recon + w.beta * kl_clamped - w.alpha * mi;
    let loss = LossBreakdown {
        reconstruction: recon,
        kl_raw: kl,
        kl_clamped,
        mutual_information: mi,
        beta: w.beta,
        total,
    };
    if !want_grad {
        return Ok((loss, None));
    }

    let mut g = vec![T::zero(); p.len()];
    let kl_scale = if active { w.beta / b } else { T::zero() };
    let mut q_all = vec![vec![T::zero(); k]; batch.len()];
    for (i, e) in batch.iter().enumerate() {
        let q: Vec<T> = log_q[i].iter().map(|&l| l.exp()).collect();
        let pr: Vec<T> = log_p[i].iter().map(|&l| l.exp()).collect();

        // Posterior logits.
        let gq: Vec<T> = (0..k)
            .map(|z| wce[i][z] / b + kl_scale * (log_q[i][z] - log_p[i][z]))
            .collect();
        let mean_q: T = (0..k).map(|z| q[z] * gq[z]).sum();
        let dpost: Vec<T> = (0..k).map(|z| q[z] * (gq[z] - mean_q)).collect();
        net.posterior_backward(p, e.features, e.grid, &posts[i], &dpost, &mut g);

        // Prior logits: KL part and mutual-information part.
        let gp: Vec<T> = (0..k).map(|z| w.alpha / b * (log_pbar[z] - log_p[i][z])).collect();
        let mean_p: T = (0..k).map(|z| pr[z] * gp[z]).sum();
        let dprior: Vec<T> = (0..k)
            .map(|z| -kl_scale * (q[z] - pr[z]) + pr[z] * (gp[z] - mean_p))
            .collect();
        net.prior_backward(p, e.features, &priors[i], &dprior, &mut g);
        q_all[i] = q;
    }

    // Decoder logits: sum over the batch of q_iz / B * w(M) * (sigmoid - M).
    for (z, dec) in decoders.iter().enumerate() {
        let sig: Vec<T> = dec.logits.iter().map(|&l| sigmoid(l)).collect();
        let mut dl = vec![T::zero(); sig.len()];
        for (i, e) in batch.iter().enumerate() {
            let s = q_all[i][z] / b;
            for (c, &m) in e.grid.iter().enumerate() {
                dl[c] = dl[c]
                    + if m == T::one() {
                        s * w_occ * (sig[c] - T::one())
                    } else {
                        s * w_free * sig[c]
                    };
            }
        }
        net.decode_backward(p, z, dec, &dl, &mut g);
    }
    Ok((loss, Some(g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvae::model::CvaeShape;
    use proptest::prelude::*;

    fn toy_shape() -> CvaeShape {
        CvaeShape {
            k: 2,
            grid_height: 1,
            grid_width: 2,
            stages: 0,
            decoder_hidden: 3,
            ..CvaeShape::default()
        }
    }

    fn conv_shape() -> CvaeShape {
        CvaeShape {
            k: 3,
            steps: 3,
            state_dim: 2,
            hidden: 2,
            grid_height: 8,
            grid_width: 6,
            channels: 2,
            stages: 2,
            decoder_hidden: 3,
        }
    }

    fn feats(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.71 + seed).sin()).collect()
    }

    fn grid(n: usize, seed: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 7 + seed * 3) % 5 < 2) as u8 as f64).collect()
    }

    /// Slow reference computed straight from the definitions.
    fn reference(model: &Cvae<f64>, batch: &[Example<'_, f64>], w: LossWeights<f64>) -> f64 {
        let s = *model.shape();
        let tot: f64 = batch.iter().flat_map(|e| e.grid.iter()).sum();
        let cells = (batch.len() * s.grid_len()) as f64;
        let (wo, wf) = if tot == 0.0 || tot == cells { (0.5, 0.5) } else { (1.0 - tot / cells, tot / cells) };
        let decoded: Vec<Vec<f64>> = (0..s.k).map(|z| model.decode(z, 1.0).unwrap().cells().to_vec()).collect();
        let mut recon = 0.0;
        let mut kl = 0.0;
        let mut priors = Vec::new();
        for e in batch {
            let g = crate::ogm::OccupancyGrid::new(s.grid_height, s.grid_width, 1.0, crate::ogm::GridPose::identity(), e.grid.to_vec()).unwrap();
            let q = model.posterior_encode(e.features, &g).unwrap();
            let p = model.prior_encode(e.features).unwrap();
            for z in 0..s.k {
                let mut wce = 0.0;
                for (c, &m) in e.grid.iter().enumerate() {
                    let y = decoded[z][c];
                    wce += if m == 1.0 { -wo * y.ln() } else { -wf * (1.0 - y).ln() };
                }
                recon += q[z] * wce;
                kl += q[z] * (q[z] / p[z]).ln();
            }
            priors.push(p);
        }
        let b = batch.len() as f64;
        let h = |p: &[f64]| -p.iter().map(|v| v * v.ln()).sum::<f64>();
        let pbar: Vec<f64> = (0..s.k).map(|z| priors.iter().map(|p| p[z]).sum::<f64>() / b).collect();
        let mi = h(&pbar) - priors.iter().map(|p| h(p)).sum::<f64>() / b;
        recon / b + w.beta * (kl / b).max(w.kl_clamp) - w.alpha * mi
    }

    /// Denominator floor of the relative error: below it, central
    /// differences at step 1e-5 are dominated by rounding.
    const GRAD_FLOOR: f64 = 1e-5;

    fn finite_difference_check(model: &mut Cvae<f64>, batch_data: &[(Vec<f64>, Vec<f64>)], w: LossWeights<f64>) -> (f64, LossBreakdown<f64>) {
        let batch: Vec<Example<'_, f64>> = batch_data
            .iter()
            .map(|(f, g)| Example { features: f, grid: g })
            .collect();
        let (loss, grad) = elbo_loss_and_grad(model, &batch, w).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..grad.len() {
            let v = model.params()[i];
            model.params_mut()[i] = v + h;
            let up = elbo_loss(model, &batch, w).unwrap().total;
            model.params_mut()[i] = v - h;
            let down = elbo_loss(model, &batch, w).unwrap().total;
            model.params_mut()[i] = v;
            let num = (up - down) / (2.0 * h);
            let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
        }
        (worst, loss)
    }

    #[test]
    fn hand_enumerated_toy_loss() {
        // K = 2, B = 1 on a 1x2 grid; every term written out by hand.
        let m: Cvae<f64> = Cvae::new(toy_shape(), 4).unwrap();
        let x = feats(70, 0.3);
        let gcells = vec![1.0, 0.0];
        let g = crate::ogm::OccupancyGrid::new(1, 2, 1.0, crate::ogm::GridPose::identity(), gcells.clone()).unwrap();
        let q = m.posterior_encode(&x, &g).unwrap();
        let p = m.prior_encode(&x).unwrap();
        let y0 = m.decode(0, 1.0).unwrap().cells().to_vec();
        let y1 = m.decode(1, 1.0).unwrap().cells().to_vec();
        // One occupied and one free cell: both weights 1/2.
        let wce0 = -0.5 * y0[0].ln() - 0.5 * (1.0 - y0[1]).ln();
        let wce1 = -0.5 * y1[0].ln() - 0.5 * (1.0 - y1[1]).ln();
        let recon = q[0] * wce0 + q[1] * wce1;
        let kl = q[0] * (q[0] / p[0]).ln() + q[1] * (q[1] / p[1]).ln();
        let w = LossWeights {
            alpha: 1.5,
            beta: 0.7,
            kl_clamp: 0.0,
        };
        let expected = recon + 0.7 * kl;
        let got = elbo_loss(&m, &[Example { features: &x, grid: &gcells }], w).unwrap();
        assert!((got.total - expected).abs() < 1e-9);
        assert!(got.mutual_information.abs() < 1e-12);
        assert!((got.kl_raw - kl).abs() < 1e-12);
    }

    #[test]
    fn identical_examples_have_zero_mutual_information() {
        let m: Cvae<f64> = Cvae::new(conv_shape(), 5).unwrap();
        let x = feats(6, 1.0);
        let g = grid(48, 1);
        let batch = vec![Example { features: &x, grid: &g }; 4];
        let w = LossWeights {
            alpha: 1.5,
            beta: 1.0,
            kl_clamp: 0.2,
        };
        let l = elbo_loss(&m, &batch, w).unwrap();
        assert!(l.mutual_information.abs() < 1e-12);
    }

    #[test]
    fn equal_encoders_give_zero_kl() {
        // Copy the prior head into a model whose posterior ignores the grid:
        // with identical recurrent and head weights, q = p exactly.
        let shape = toy_shape();
        let mut m: Cvae<f64> = Cvae::new(shape, 6).unwrap();
        let slots = m.layout().slots().to_vec();
        let find = |n: &str| slots.iter().find(|s| s.name == n).unwrap().clone();
        let p = m.params().to_vec();
        for name in ["forget_input.weight", "forget_input.bias", "forget_hidden", "cand_input.weight", "cand_input.bias", "cand_hidden"] {
            let src = find(&format!("prior.rnn.{name}"));
            let dst = find(&format!("posterior.rnn.{name}"));
            m.params_mut()[dst.offset..dst.offset + dst.len()].copy_from_slice(&p[src.offset..src.offset + src.len()]);
        }
        let ph = find("prior.head.weight");
        let qh = find("posterior.head.weight");
        for z in 0..2 {
            for j in 0..2 {
                m.params_mut()[qh.offset + z * 7 + j] = 0.0;
            }
            for j in 0..5 {
                m.params_mut()[qh.offset + z * 7 + 2 + j] = p[ph.offset + z * 5 + j];
            }
        }
        let x = feats(70, 2.0);
        let g = vec![0.0, 1.0];
        let l = elbo_loss(
            &m,
            &[Example { features: &x, grid: &g }],
            LossWeights {
                alpha: 0.0,
                beta: 1.0,
                kl_clamp: 0.2,
            },
        )
        .unwrap();
        assert!(l.kl_raw.abs() < 1e-12);
        assert_eq!(l.kl_clamped, 0.2);
    }

    #[test]
    fn toy_gradients_match_finite_differences() {
        let mut m: Cvae<f64> = Cvae::new(toy_shape(), 7).unwrap();
        let data = vec![(feats(70, 0.1), vec![1.0, 0.0]), (feats(70, 0.9), vec![1.0, 1.0]), (feats(70, 1.7), vec![0.0, 0.0])];
        for kl_clamp in [0.0, 5.0] {
            let w = LossWeights {
                alpha: 1.5,
                beta: 0.8,
                kl_clamp,
            };
            let (worst, loss) = finite_difference_check(&mut m, &data, w);
            assert!(worst < 1e-4, "clamp {kl_clamp}: worst relative error {worst}");
            // One run on each side of the clamp.
            assert_eq!(loss.kl_raw > kl_clamp, kl_clamp == 0.0);
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut m: Cvae<f64> = Cvae::new(conv_shape(), 8).unwrap();
        let data: Vec<_> = (0..3).map(|i| (feats(6, i as f64), grid(48, i))).collect();
        let w = LossWeights {
            alpha: 1.5,
            beta: 1.0,
            kl_clamp: 0.0,
        };
        let (worst, _) = finite_difference_check(&mut m, &data, w);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn clamped_kl_has_no_gradient() {
        let m: Cvae<f64> = Cvae::new(toy_shape(), 9).unwrap();
        let x = feats(70, 0.4);
        let g = vec![1.0, 0.0];
        let batch = [Example { features: &x, grid: &g }];
        let mk = |beta| LossWeights {
            alpha: 0.0,
            beta,
            kl_clamp: 1e6,
        };
        let (_, g0) = elbo_loss_and_grad(&m, &batch, mk(0.0)).unwrap();
        let (l1, g1) = elbo_loss_and_grad(&m, &batch, mk(3.0)).unwrap();
        assert_eq!(g0, g1);
        assert_eq!(l1.kl_clamped, 1e6);
    }

    #[test]
    fn class_weight_fallback() {
        let x = vec![0.0; 1];
        let ones = vec![1.0, 1.0];
        let zeros = vec![0.0, 0.0];
        assert_eq!(class_weights(&[Example { features: &x, grid: &ones }]), (0.5, 0.5));
        assert_eq!(class_weights(&[Example { features: &x, grid: &zeros }]), (0.5, 0.5));
        let mixed = vec![1.0, 0.0, 0.0, 0.0];
        assert_eq!(class_weights(&[Example { features: &x, grid: &mixed }]), (0.75, 0.25));
    }

    #[test]
    fn invalid_batches_rejected() {
        let m: Cvae<f64> = Cvae::new(toy_shape(), 0).unwrap();
        let w = LossWeights {
            alpha: 1.0,
            beta: 1.0,
            kl_clamp: 0.2,
        };
        assert!(elbo_loss(&m, &[], w).is_err());
        let x = feats(70, 0.0);
        let soft = vec![0.5, 1.0];
        assert!(elbo_loss(&m, &[Example { features: &x, grid: &soft }], w).is_err());
        let g = vec![0.0, 1.0];
        assert!(elbo_loss(&m, &[Example { features: &x[..10], grid: &g }], w).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matches_slow_reference(seed in 0u64..1000, b in 1usize..5, alpha in 0.0f64..2.0, beta in 0.0f64..2.0, clamp in 0.0f64..0.5) {
            let m: Cvae<f64> = Cvae::new(conv_shape(), seed).unwrap();
            let data: Vec<_> = (0..b).map(|i| (feats(6, seed as f64 + i as f64), grid(48, i + seed as usize))).collect();
            let batch: Vec<_> = data.iter().map(|(f, g)| Example { features: f, grid: g }).collect();
            let w = LossWeights { alpha, beta, kl_clamp: clamp };
            let got = elbo_loss(&m, &batch, w).unwrap().total;
            let want = reference(&m, &batch, w);
            prop_assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()), "{} vs {}", got, want);
        }
    }
}
