//! Desk-scale detector with an adversarial domain branch.
//!
//! Three parameter spaces:
//!
//! * backbone `theta_f`: per-pixel `h = tanh(W x + b)` from the handcrafted
//!   features to a `embed`-dimensional embedding;
//! * task head `theta_h`: `Y = sigmoid(w . h + c)`, the per-pixel score;
//! * domain classifier `theta_d`: a two-layer tanh perceptron on the pooled
//!   embedding giving the probability that the image is from the target
//!   domain.
//!
//! The pooled embedding averages pixels whose score exceeds 0.5 (text-like
//! pixels) and falls back to all pixels when there are none. The pooling
//! gate is treated as a constant when differentiating.
//!
//! A gradient reversal layer sits between the pooled embedding and the
//! domain classifier: identity forward, `-lambda * g` backward. One backward
//! pass therefore sends `dL_task` to the head, `dL_d` to the domain
//! classifier and `dL_task - lambda * dL_d` to the backbone.

use rand::distributions::{Distribution, Uniform};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamParams};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureRaster, NUM_FEATURES};
use crate::losses::{balanced_score_loss, domain_loss, weak_score_loss, LossConfig};
use crate::raster::{GrayImage, PixelPartition, ScoreMap};

/// Score above which a pixel joins the pooled "text instance" embedding.
pub const POOL_GATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub features: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            features: NUM_FEATURES,
            embed: 8,
            hidden: 16,
        }
    }
}

impl ModelShape {
    pub fn theta_f_len(&self) -> usize {
        self.embed * (self.features + 1)
    }

    pub fn theta_h_len(&self) -> usize {
        self.embed + 1
    }

    pub fn theta_d_len(&self) -> usize {
        self.hidden * (self.embed + 1) + self.hidden + 1
    }
}

/// Trained parameters as stored on disk (`f32`).
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    shape: ModelShape,
    theta_f: Vec<f32>,
    theta_h: Vec<f32>,
    theta_d: Vec<f32>,
}

impl ToyModel {
    pub fn zeros(shape: ModelShape) -> Self {
        Self {
            shape,
            theta_f: vec![0.0; shape.theta_f_len()],
            theta_h: vec![0.0; shape.theta_h_len()],
            theta_d: vec![0.0; shape.theta_d_len()],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(shape: ModelShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |out: &mut [f32], fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a);
            for v in out {
                *v = dist.sample(&mut rng) as f32;
            }
        };
        let mut m = Self::zeros(shape);
        let (k, d, hd) = (shape.features, shape.embed, shape.hidden);
        fill(&mut m.theta_f[..d * k], k, d);
        fill(&mut m.theta_h[..d], d, 1);
        fill(&mut m.theta_d[..hd * d], d, hd);
        let w2 = hd * d + hd;
        fill(&mut m.theta_d[w2..w2 + hd], hd, 1);
        m
    }

    /// Rebuilds a model from its three parameter vectors, inferring the
    /// layer sizes.
    pub fn from_parameters(theta_f: Vec<f32>, theta_h: Vec<f32>, theta_d: Vec<f32>) -> Result<Self> {
        if theta_h.len() < 2 {
            return Err(Error::Data(format!("head has {} parameters", theta_h.len())));
        }
        let embed = theta_h.len() - 1;
        if theta_f.len() % embed != 0 || theta_f.len() / embed < 2 {
            return Err(Error::Data(format!(
                "backbone size {} is inconsistent with embedding {embed}",
                theta_f.len()
            )));
        }
        let features = theta_f.len() / embed - 1;
        if theta_d.is_empty() || (theta_d.len() - 1) % (embed + 2) != 0 {
            return Err(Error::Data(format!(
                "domain classifier size {} is inconsistent with embedding {embed}",
                theta_d.len()
            )));
        }
        let hidden = (theta_d.len() - 1) / (embed + 2);
        if hidden == 0 {
            return Err(Error::Data("domain classifier has no hidden units".into()));
        }
        if theta_f
            .iter()
            .chain(&theta_h)
            .chain(&theta_d)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Data("non-finite parameter".into()));
        }
        Ok(Self {
            shape: ModelShape {
                features,
                embed,
                hidden,
            },
            theta_f,
            theta_h,
            theta_d,
        })
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn theta_f(&self) -> &[f32] {
        &self.theta_f
    }

    pub fn theta_h(&self) -> &[f32] {
        &self.theta_h
    }

    pub fn theta_d(&self) -> &[f32] {
        &self.theta_d
    }

    pub fn network(&self) -> Network {
        let widen = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect();
        Network {
            shape: self.shape,
            f: widen(&self.theta_f),
            h: widen(&self.theta_h),
            d: widen(&self.theta_d),
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Working copy of the parameters in `f64`, used for all arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub shape: ModelShape,
    pub f: Vec<f64>,
    pub h: Vec<f64>,
    pub d: Vec<f64>,
}

/// Per-image forward activations.
#[derive(Debug, Clone)]
pub struct ImageActivations {
    /// `n_pixels x embed`, row-major.
    pub embedding: Vec<f64>,
    pub scores: Vec<f64>,
}

impl Network {
    pub fn to_model(&self) -> ToyModel {
        let narrow = |v: &[f64]| v.iter().map(|&x| x as f32).collect();
        ToyModel {
            shape: self.shape,
            theta_f: narrow(&self.f),
            theta_h: narrow(&self.h),
            theta_d: narrow(&self.d),
        }
    }

    fn check_features(&self, features: &FeatureRaster) -> Result<()> {
        if features.num_features() != self.shape.features {
            return Err(Error::Dimension(format!(
                "model expects {} features per pixel, raster has {}",
                self.shape.features,
                features.num_features()
            )));
        }
        Ok(())
    }

    pub fn forward_image(&self, features: &FeatureRaster) -> Result<ImageActivations> {
        self.check_features(features)?;
        let (k, d) = (self.shape.features, self.shape.embed);
        let n = features.num_pixels();
        let (w, b) = self.f.split_at(d * k);
        let (wh, bh) = (&self.h[..d], self.h[d]);
        let mut embedding = vec![0.0; n * d];
        let mut scores = Vec::with_capacity(n);
        for p in 0..n {
            let x = features.pixel(p);
            let e = &mut embedding[p * d..(p + 1) * d];
            let mut z = bh;
            for j in 0..d {
                let row = &w[j * k..(j + 1) * k];
                let mut u = b[j];
                for c in 0..k {
                    u += row[c] * x[c];
                }
                e[j] = u.tanh();
                z += wh[j] * e[j];
            }
            scores.push(sigmoid(z));
        }
        Ok(ImageActivations { embedding, scores })
    }

    /// Pixels entering the pooled embedding.
    pub fn pooling_gate(scores: &[f64]) -> Vec<bool> {
        let gate: Vec<bool> = scores.iter().map(|&s| s > POOL_GATE).collect();
        if gate.iter().any(|&g| g) {
            gate
        } else {
            vec![true; scores.len()]
        }
    }

    pub fn pool(&self, act: &ImageActivations, gate: &[bool]) -> Vec<f64> {
        let d = self.shape.embed;
        let mut pooled = vec![0.0; d];
        let mut count = 0usize;
        for (p, &g) in gate.iter().enumerate() {
            if g {
                count += 1;
                for j in 0..d {
                    pooled[j] += act.embedding[p * d + j];
                }
            }
        }
        let inv = 1.0 / count.max(1) as f64;
        pooled.iter_mut().for_each(|v| *v *= inv);
        pooled
    }

    /// Hidden activations and target-domain probability for one pooled
    /// embedding. The gradient reversal layer is the identity here.
    pub fn domain_forward(&self, pooled: &[f64]) -> (Vec<f64>, f64) {
        let (d, hd) = (self.shape.embed, self.shape.hidden);
        let w1 = &self.d[..hd * d];
        let b1 = &self.d[hd * d..hd * d + hd];
        let w2 = &self.d[hd * d + hd..hd * d + 2 * hd];
        let b2 = self.d[hd * d + 2 * hd];
        let mut hidden = Vec::with_capacity(hd);
        let mut z = b2;
        for i in 0..hd {
            let mut u = b1[i];
            for j in 0..d {
                u += w1[i * d + j] * pooled[j];
            }
            let a = u.tanh();
            z += w2[i] * a;
            hidden.push(a);
        }
        (hidden, sigmoid(z))
    }
}

/// Gradient reversal: `-lambda * upstream`.
pub fn grl_backward(upstream: &[f64], lambda: f64) -> Vec<f64> {
    upstream.iter().map(|g| -lambda * g).collect()
}

/// Gradient reversal forward pass: the identity.
pub fn grl_forward(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub scores: ScoreMap,
    pub pooled_embedding: Vec<f64>,
    pub domain_prob: f64,
}

pub fn forward(model: &ToyModel, features: &FeatureRaster) -> Result<ForwardOutput> {
    let net = model.network();
    let act = net.forward_image(features)?;
    let gate = Network::pooling_gate(&act.scores);
    let pooled = net.pool(&act, &gate);
    let (_, p) = net.domain_forward(&grl_forward(&pooled));
    Ok(ForwardOutput {
        scores: ScoreMap::new(features.width(), features.height(), act.scores)?,
        pooled_embedding: pooled,
        domain_prob: p,
    })
}

/// Score map of an image; the domain branch is not evaluated.
pub fn predict_scoremap(model: &ToyModel, image: &GrayImage) -> Result<ScoreMap> {
    let features = extract_features(image);
    predict_from_features(model, &features)
}

pub fn predict_from_features(model: &ToyModel, features: &FeatureRaster) -> Result<ScoreMap> {
    let act = model.network().forward_image(features)?;
    ScoreMap::new(features.width(), features.height(), act.scores)
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtaConfig {
    /// Weight of the reversed domain gradient in the backbone.
    pub lambda: f64,
    pub lr: f64,
    pub iters: usize,
    pub batch_source: usize,
    pub batch_target: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// When false the domain classifier is neither evaluated nor trained.
    pub domain_branch: bool,
    pub shape: ModelShape,
}

impl Default for AtaConfig {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            lr: 1e-2,
            iters: 2000,
            batch_source: 6,
            batch_target: 6,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            domain_branch: true,
            shape: ModelShape::default(),
        }
    }
}

impl AtaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch_source == 0 || self.batch_target == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// A labelled source-domain training image.
#[derive(Debug, Clone)]
pub struct SourceSample {
    pub features: FeatureRaster,
    pub gt: ScoreMap,
}

/// Pseudo-label attached to a target image for fine-tuning.
#[derive(Debug, Clone)]
pub struct PseudoTarget {
    pub gt: ScoreMap,
    pub partition: PixelPartition,
}

#[derive(Debug, Clone)]
pub struct TargetSample {
    pub features: FeatureRaster,
    pub pseudo: Option<PseudoTarget>,
}

#[derive(Debug, Clone, Default)]
pub struct Batch<'a> {
    pub source: Vec<&'a SourceSample>,
    pub target: Vec<&'a TargetSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    pub lambda: f64,
    pub domain_branch: bool,
    pub loss: LossConfig,
}

/// Objective values and routed gradients for one batch.
#[derive(Debug, Clone)]
pub struct RoutedEval {
    pub l_task_src: f64,
    pub l_task_tgt: Option<f64>,
    pub l_d: Option<f64>,
    pub domain_acc: Option<f64>,
    /// `d(L_task - lambda * L_d) / d theta_f` (through the reversal layer).
    pub grad_f: Vec<f64>,
    /// `d L_task / d theta_h`.
    pub grad_h: Vec<f64>,
    /// `d L_d / d theta_d`.
    pub grad_d: Vec<f64>,
    /// Pooling gates used per image (source images first).
    pub gates: Vec<Vec<bool>>,
}

impl RoutedEval {
    pub fn l_task(&self) -> f64 {
        self.l_task_src + self.l_task_tgt.unwrap_or(0.0)
    }
}

fn non_finite(what: &str) -> Error {
    Error::NonFinite {
        step: 0,
        what: what.to_string(),
    }
}

/// Evaluates the routed objective. `gates` fixes the pooling masks (one per
/// image, source first); `None` derives them from the current scores.
pub fn routed_gradients(
    net: &Network,
    batch: &Batch<'_>,
    opts: &StepOptions,
    gates: Option<&[Vec<bool>]>,
) -> Result<RoutedEval> {
    if batch.source.is_empty() {
        return Err(Error::Data("batch has no source images".into()));
    }
    let shape = net.shape;
    let (k, d, hd) = (shape.features, shape.embed, shape.hidden);
    let n_images = batch.source.len() + batch.target.len();
    if let Some(g) = gates {
        if g.len() != n_images {
            return Err(Error::Dimension(format!("{} gates for {n_images} images", g.len())));
        }
    }

    struct Item<'a> {
        features: &'a FeatureRaster,
        act: ImageActivations,
        /// d L_task / d score, already scaled by the batch reduction.
        d_score: Option<Vec<f64>>,
    }

    let n_tgt_labelled = batch.target.iter().filter(|t| t.pseudo.is_some()).count();
    let mut items = Vec::with_capacity(n_images);
    let mut l_task_src = 0.0;
    let mut l_task_tgt = 0.0;
    for s in &batch.source {
        let act = net.forward_image(&s.features)?;
        let pred = ScoreMap::new(s.features.width(), s.features.height(), act.scores.clone())
            .map_err(|_| non_finite("source scores"))?;
        let out = balanced_score_loss(&pred, &s.gt, &opts.loss)?;
        let scale = 1.0 / (s.features.num_pixels() as f64 * batch.source.len() as f64);
        l_task_src += out.loss * scale;
        let d_score = out.grad.iter().map(|g| g * scale).collect();
        items.push(Item {
            features: &s.features,
            act,
            d_score: Some(d_score),
        });
    }
    for t in &batch.target {
        let act = net.forward_image(&t.features)?;
        let d_score = match &t.pseudo {
            Some(pl) => {
                let pred =
                    ScoreMap::new(t.features.width(), t.features.height(), act.scores.clone())
                        .map_err(|_| non_finite("target scores"))?;
                let out = weak_score_loss(&pred, &pl.gt, &pl.partition, &opts.loss)?;
                let scale = 1.0 / (t.features.num_pixels() as f64 * n_tgt_labelled as f64);
                l_task_tgt += out.loss * scale;
                Some(out.grad.iter().map(|g| g * scale).collect())
            }
            None => None,
        };
        items.push(Item {
            features: &t.features,
            act,
            d_score,
        });
    }

    let gates: Vec<Vec<bool>> = match gates {
        Some(g) => g.to_vec(),
        None => items.iter().map(|it| Network::pooling_gate(&it.act.scores)).collect(),
    };

    let mut grad_f = vec![0.0; shape.theta_f_len()];
    let mut grad_h = vec![0.0; shape.theta_h_len()];
    let mut grad_d = vec![0.0; shape.theta_d_len()];

    // domain branch: per-image reversed gradient w.r.t. the pooled embedding
    let mut reversed: Vec<Option<Vec<f64>>> = vec![None; items.len()];
    let mut l_d = None;
    let mut domain_acc = None;
    if opts.domain_branch {
        let labels: Vec<u8> = (0..items.len())
            .map(|i| u8::from(i >= batch.source.len()))
            .collect();
        let mut pooled = Vec::with_capacity(items.len());
        let mut hidden = Vec::with_capacity(items.len());
        let mut probs = Vec::with_capacity(items.len());
        for (it, gate) in items.iter().zip(&gates) {
            let e = net.pool(&it.act, gate);
            let (a, p) = net.domain_forward(&grl_forward(&e));
            pooled.push(e);
            hidden.push(a);
            probs.push(p);
        }
        let (loss, d_prob) = domain_loss(&probs, &labels)?;
        l_d = Some(loss);
        let correct = probs
            .iter()
            .zip(&labels)
            .filter(|(&p, &y)| (p > 0.5) == (y == 1))
            .count();
        domain_acc = Some(correct as f64 / probs.len() as f64);

        let w1 = &net.d[..hd * d];
        let w2 = &net.d[hd * d + hd..hd * d + 2 * hd];
        for i in 0..items.len() {
            let p = probs[i];
            let dz = d_prob[i] * p * (1.0 - p);
            let mut d_pooled = vec![0.0; d];
            for u in 0..hd {
                let a = hidden[i][u];
                grad_d[hd * d + hd + u] += dz * a;
                let d_pre = dz * w2[u] * (1.0 - a * a);
                for j in 0..d {
                    grad_d[u * d + j] += d_pre * pooled[i][j];
                    d_pooled[j] += d_pre * w1[u * d + j];
                }
                grad_d[hd * d + u] += d_pre;
            }
            grad_d[hd * d + 2 * hd] += dz;
            reversed[i] = Some(grl_backward(&d_pooled, opts.lambda));
        }
    }

    let wh = &net.h[..d];
    let mut dh = vec![0.0; d];
    for (i, it) in items.iter().enumerate() {
        if it.d_score.is_none() && reversed[i].is_none() {
            continue;
        }
        let gate = &gates[i];
        let count = gate.iter().filter(|&&g| g).count().max(1) as f64;
        let rev_per_pixel: Option<Vec<f64>> =
            reversed[i].as_ref().map(|r| r.iter().map(|v| v / count).collect());
        for p in 0..it.features.num_pixels() {
            let e = &it.act.embedding[p * d..(p + 1) * d];
            let dz = match &it.d_score {
                Some(ds) => {
                    let y = it.act.scores[p];
                    ds[p] * y * (1.0 - y)
                }
                None => 0.0,
            };
            if it.d_score.is_some() {
                for j in 0..d {
                    grad_h[j] += dz * e[j];
                }
                grad_h[d] += dz;
            }
            for j in 0..d {
                dh[j] = dz * wh[j];
            }
            if let (Some(r), true) = (&rev_per_pixel, gate[p]) {
                for j in 0..d {
                    dh[j] += r[j];
                }
            }
            let x = it.features.pixel(p);
            for j in 0..d {
                let du = dh[j] * (1.0 - e[j] * e[j]);
                let row = &mut grad_f[j * k..(j + 1) * k];
                for c in 0..k {
                    row[c] += du * x[c];
                }
                grad_f[d * k + j] += du;
            }
        }
    }

    Ok(RoutedEval {
        l_task_src,
        l_task_tgt: (n_tgt_labelled > 0).then_some(l_task_tgt),
        l_d,
        domain_acc,
        grad_f,
        grad_h,
        grad_d,
        gates,
    })
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iter: usize,
    pub l_task_src: f64,
    pub l_task_tgt: Option<f64>,
    pub l_d: Option<f64>,
    pub domain_acc: Option<f64>,
    /// `L_task + lambda * L_d`, for monitoring only.
    pub total: f64,
}

impl Diagnostics {
    pub const CSV_HEADER: &'static str = "iter,L_task_src,L_task_tgt,L_d,domain_acc";

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{:.6},{},{},{}",
            self.iter,
            self.l_task_src,
            opt(self.l_task_tgt),
            opt(self.l_d),
            opt(self.domain_acc)
        )
    }
}

/// Optimiser state around a network; one Adam per parameter space.
#[derive(Debug, Clone)]
pub struct Trainer {
    net: Network,
    opt_f: Adam,
    opt_h: Adam,
    opt_d: Adam,
    opts: StepOptions,
    step: usize,
}

impl Trainer {
    pub fn new(model: &ToyModel, cfg: &AtaConfig, loss: LossConfig) -> Result<Self> {
        cfg.validate()?;
        loss.validate()?;
        let shape = model.shape();
        let adam = cfg.adam();
        Ok(Self {
            net: model.network(),
            opt_f: Adam::new(adam, shape.theta_f_len()),
            opt_h: Adam::new(adam, shape.theta_h_len()),
            opt_d: Adam::new(adam, shape.theta_d_len()),
            opts: StepOptions {
                lambda: cfg.lambda,
                domain_branch: cfg.domain_branch,
                loss,
            },
            step: 0,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn model(&self) -> ToyModel {
        self.net.to_model()
    }

    pub fn train_step(&mut self, batch: &Batch<'_>) -> Result<Diagnostics> {
        let step = self.step;
        let eval = routed_gradients(&self.net, batch, &self.opts, None).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { step, what },
            other => other,
        })?;
        let total = eval.l_task() + self.opts.lambda * eval.l_d.unwrap_or(0.0);
        if !total.is_finite() {
            return Err(Error::NonFinite {
                step,
                what: "training objective".into(),
            });
        }
        self.opt_f.step(&mut self.net.f, &eval.grad_f);
        self.opt_h.step(&mut self.net.h, &eval.grad_h);
        if self.opts.domain_branch {
            self.opt_d.step(&mut self.net.d, &eval.grad_d);
        }
        if self.net.f.iter().chain(&self.net.h).chain(&self.net.d).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step,
                what: "parameters after update".into(),
            });
        }
        self.step += 1;
        Ok(Diagnostics {
            iter: step,
            l_task_src: eval.l_task_src,
            l_task_tgt: eval.l_task_tgt,
            l_d: eval.l_d,
            domain_acc: eval.domain_acc,
            total,
        })
    }
}

fn sample_indices(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    if len >= n {
        index::sample(rng, len, n).into_vec()
    } else {
        (0..n).map(|_| rng.gen_range(0..len)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub curve: Vec<Diagnostics>,
}

/// Runs `cfg.iters` steps from `initial`, drawing batches with a generator
/// seeded by `cfg.seed`.
pub fn train(
    initial: &ToyModel,
    source: &[SourceSample],
    target: &[TargetSample],
    cfg: &AtaConfig,
    loss: LossConfig,
) -> Result<TrainOutcome> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::Data("training needs source and target images".into()));
    }
    let mut trainer = Trainer::new(initial, cfg, loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let mut curve = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let s = sample_indices(&mut rng, source.len(), cfg.batch_source);
        let t = sample_indices(&mut rng, target.len(), cfg.batch_target);
        let batch = Batch {
            source: s.iter().map(|&i| &source[i]).collect(),
            target: t.iter().map(|&i| &target[i]).collect(),
        };
        curve.push(trainer.train_step(&batch)?);
    }
    Ok(TrainOutcome {
        model: trainer.model(),
        curve,
    })
}

/// Stage one: adversarial pretraining from a seeded initialisation. Any
/// pseudo-labels on `target` are ignored.
pub fn pretrain(
    source: &[SourceSample],
    target: &[TargetSample],
    cfg: &AtaConfig,
    loss: LossConfig,
) -> Result<TrainOutcome> {
    let unlabelled: Vec<TargetSample> = target
        .iter()
        .map(|t| TargetSample {
            features: t.features.clone(),
            pseudo: None,
        })
        .collect();
    let initial = ToyModel::init(cfg.shape, cfg.seed);
    train(&initial, source, &unlabelled, cfg, loss)
}
