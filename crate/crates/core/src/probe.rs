//! Post-hoc domain probes on frozen representations.
//!
//! A probe is a small classifier trained from scratch to tell source from
//! target images given one vector per image. High held-out accuracy means
//! the representation still carries domain information.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamParams};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureRaster};
use crate::raster::GrayImage;
use crate::toymodel::{Network, ToyModel};

/// Pooled backbone embedding of one image, gated exactly as during
/// training (pixels scoring above 0.5, or all pixels if none do).
pub fn pooled_embedding(net: &Network, features: &FeatureRaster) -> Result<Vec<f64>> {
    let act = net.forward_image(features)?;
    let gate = Network::pooling_gate(&act.scores);
    Ok(net.pool(&act, &gate))
}

pub fn pooled_embeddings(model: &ToyModel, images: &[&GrayImage]) -> Result<Vec<Vec<f64>>> {
    let net = model.network();
    images
        .iter()
        .map(|img| pooled_embedding(&net, &extract_features(img)))
        .collect()
}

/// Per-channel mean of the handcrafted features.
pub fn mean_features(image: &GrayImage) -> Vec<f64> {
    let f = extract_features(image);
    (0..f.num_features())
        .map(|c| f.channel(c).sum::<f64>() / f.num_pixels() as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Hidden units; 0 gives logistic regression.
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            epochs: 500,
            lr: 1e-2,
            seed: 0,
        }
    }
}

/// Trained probe with its input standardisation.
#[derive(Debug, Clone)]
pub struct Probe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    hidden: usize,
    theta: Vec<f64>,
}

impl Probe {
    fn logit(&self, x: &[f64], cache: Option<&mut Vec<f64>>) -> f64 {
        let dim = self.mean.len();
        let z: Vec<f64> = (0..dim).map(|j| (x[j] - self.mean[j]) / self.scale[j]).collect();
        if self.hidden == 0 {
            return self.theta[dim] + (0..dim).map(|j| self.theta[j] * z[j]).sum::<f64>();
        }
        let h = self.hidden;
        let (w1, rest) = self.theta.split_at(h * dim);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let mut out = b2[0];
        let mut acts = Vec::with_capacity(h);
        for u in 0..h {
            let a = (b1[u] + (0..dim).map(|j| w1[u * dim + j] * z[j]).sum::<f64>()).tanh();
            out += w2[u] * a;
            acts.push(a);
        }
        if let Some(c) = cache {
            *c = acts;
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        1.0 / (1.0 + (-self.logit(x, None)).exp())
    }

    /// Fraction of rows classified correctly at threshold 0.5.
    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[u8]) -> f64 {
        let correct = xs
            .iter()
            .zip(ys)
            .filter(|(x, &y)| (self.predict(x) > 0.5) == (y == 1))
            .count();
        correct as f64 / xs.len().max(1) as f64
    }
}

/// Full-batch Adam on mean binary cross-entropy.
pub fn train_probe(xs: &[Vec<f64>], ys: &[u8], cfg: &ProbeConfig) -> Result<Probe> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Data(format!("{} probe rows for {} labels", xs.len(), ys.len())));
    }
    let dim = xs[0].len();
    if dim == 0 || xs.iter().any(|x| x.len() != dim) {
        return Err(Error::Dimension("probe rows must share a non-zero length".into()));
    }
    let n = xs.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|j| {
            let var = xs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            var.sqrt().max(1e-12)
        })
        .collect();
    let h = cfg.hidden;
    let len = if h == 0 { dim + 1 } else { h * dim + 2 * h + 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = vec![0.0; len];
    if h > 0 {
        let lim1 = (6.0 / (dim + h) as f64).sqrt();
        let lim2 = (6.0 / (h + 1) as f64).sqrt();
        theta[..h * dim].iter_mut().for_each(|v| *v = rng.gen_range(-lim1..lim1));
        theta[h * dim + h..h * dim + 2 * h]
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-lim2..lim2));
    }
    let mut probe = Probe {
        mean,
        scale,
        hidden: h,
        theta,
    };
    let mut adam = Adam::new(
        AdamParams {
            lr: cfg.lr,
            ..AdamParams::default()
        },
        len,
    );
    let mut acts = Vec::new();
    for _ in 0..cfg.epochs {
        let mut grad = vec![0.0; len];
        for (x, &y) in xs.iter().zip(ys) {
            let logit = probe.logit(x, Some(&mut acts));
            let p = 1.0 / (1.0 + (-logit).exp());
            let dz = (p - f64::from(y)) / n;
            let z: Vec<f64> = (0..dim).map(|j| (x[j] - probe.mean[j]) / probe.scale[j]).collect();
            if h == 0 {
                for j in 0..dim {
                    grad[j] += dz * z[j];
                }
                grad[dim] += dz;
                continue;
            }
            let w2 = &probe.theta[h * dim + h..h * dim + 2 * h];
            for u in 0..h {
                let a = acts[u];
                grad[h * dim + h + u] += dz * a;
                let dpre = dz * w2[u] * (1.0 - a * a);
                for j in 0..dim {
                    grad[u * dim + j] += dpre * z[j];
                }
                grad[h * dim + u] += dpre;
            }
            grad[len - 1] += dz;
        }
        adam.step(&mut probe.theta, &grad);
    }
    Ok(probe)
}

/// Trains on one split and reports accuracy on another.
pub fn probe_accuracy(
    train: (&[Vec<f64>], &[u8]),
    test: (&[Vec<f64>], &[u8]),
    cfg: &ProbeConfig,
) -> Result<f64> {
    let probe = train_probe(train.0, train.1, cfg)?;
    Ok(probe.accuracy(test.0, test.1))
}
