//! Attention-fused severity classifier.
//!
//! ```text
//! F      = concat(six d x S maps)                     6d x S
//! w_attn = sigmoid(mlp(avg_pool F) + mlp(max_pool F))  6d, shared mlp 6d -> ceil(6d/r) -> 6d
//! fused  = avg_pool(w_attn * F)                        6d
//! logits = W4 relu(W3 fused + b3) + b4                 3
//! probs  = softmax(logits)
//! ```
//!
//! With attention disabled `w_attn` is pinned to 1.

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, SubjectSample, NUM_CLASSES, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::loss::{focal_grad_from_probs, focal_loss, LossConfig};
use crate::nn::{
    activation, affine, concat_channels, grad_check, sigmoid, softmax, spatial_pool, Activation,
    ChannelMap, GradCheckReport, Matrix, PoolMode,
};
use crate::rng::Prng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Channels per expression.
    pub d: usize,
    /// Spatial positions per channel.
    #[serde(rename = "S")]
    pub spatial: usize,
    /// Attention bottleneck reduction ratio.
    pub reduction: usize,
    /// Classifier hidden width.
    pub hidden: usize,
    pub aff_enabled: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            d: 512,
            spatial: 1,
            reduction: 16,
            hidden: 128,
            aff_enabled: true,
        }
    }
}

impl ArchConfig {
    pub fn channels(&self) -> usize {
        NUM_EMOTIONS * self.d
    }

    /// `ceil(6d / r)`.
    pub fn attn_hidden(&self) -> usize {
        self.channels().div_ceil(self.reduction)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.spatial == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig(format!(
                "d, S and hidden must be >= 1, got {}, {}, {}",
                self.d, self.spatial, self.hidden
            )));
        }
        if self.reduction == 0 || self.reduction > self.channels() {
            return Err(Error::InvalidConfig(format!(
                "reduction must be in 1..={}, got {}",
                self.channels(),
                self.reduction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub w3: Matrix,
    pub b3: Vec<f64>,
    pub w4: Matrix,
    pub b4: Vec<f64>,
}

/// Trainable state. Also used to hold gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: ArchConfig,
    pub attn: AttentionParams,
    pub clf: ClassifierParams,
}

pub const NUM_TENSORS: usize = 8;

impl ModelParams {
    pub fn zeros(arch: ArchConfig) -> Result<Self> {
        arch.validate()?;
        let [s1, s2, s3, s4] = arch.weight_shapes();
        Ok(ModelParams {
            arch,
            attn: AttentionParams {
                w1: Matrix::zeros(s1.0, s1.1),
                b1: vec![0.0; s1.0],
                w2: Matrix::zeros(s2.0, s2.1),
                b2: vec![0.0; s2.0],
            },
            clf: ClassifierParams {
                w3: Matrix::zeros(s3.0, s3.1),
                b3: vec![0.0; s3.0],
                w4: Matrix::zeros(s4.0, s4.1),
                b4: vec![0.0; s4.0],
            },
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.arch).expect("arch already validated")
    }

    /// `(rows, cols)` of each tensor in [`ModelParams::tensors`] order;
    /// biases are `(len, 1)`.
    pub fn shapes(&self) -> [(usize, usize); NUM_TENSORS] {
        let [s1, s2, s3, s4] = self.arch.weight_shapes();
        [s1, (s1.0, 1), s2, (s2.0, 1), s3, (s3.0, 1), s4, (s4.0, 1)]
    }

    /// Tensors in storage order: w1, b1, w2, b2, w3, b3, w4, b4.
    pub fn tensors(&self) -> [&[f64]; NUM_TENSORS] {
        [
            self.attn.w1.as_slice(),
            &self.attn.b1,
            self.attn.w2.as_slice(),
            &self.attn.b2,
            self.clf.w3.as_slice(),
            &self.clf.b3,
            self.clf.w4.as_slice(),
            &self.clf.b4,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; NUM_TENSORS] {
        let ModelParams { attn, clf, .. } = self;
        [
            attn.w1.as_mut_slice(),
            &mut attn.b1,
            attn.w2.as_mut_slice(),
            &mut attn.b2,
            clf.w3.as_mut_slice(),
            &mut clf.b3,
            clf.w4.as_mut_slice(),
            &mut clf.b4,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dims(
                "flat parameters",
                self.num_params(),
                flat.len(),
            ));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl ArchConfig {
    fn weight_shapes(&self) -> [(usize, usize); 4] {
        let (c, k) = (self.channels(), self.attn_hidden());
        [(k, c), (c, k), (self.hidden, c), (NUM_CLASSES, self.hidden)]
    }
}

/// Weights uniform on `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]`, drawn row-major
/// in the order w1, w2, w3, w4 from one stream seeded with `seed`; biases 0.
pub fn init_params(arch: ArchConfig, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(arch)?;
    let mut rng = Prng::new(seed);
    for w in [
        &mut params.attn.w1,
        &mut params.attn.w2,
        &mut params.clf.w3,
        &mut params.clf.w4,
    ] {
        let bound = init_bound(w.cols());
        for v in w.as_mut_slice() {
            *v = rng.uniform(-bound, bound);
        }
    }
    Ok(params)
}

pub fn init_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

fn check_map(f: &ChannelMap, arch: &ArchConfig) -> Result<()> {
    if (f.channels(), f.spatial()) != (arch.channels(), arch.spatial) {
        return Err(Error::dims(
            "fused feature map",
            format!("{}x{}", arch.channels(), arch.spatial),
            format!("{}x{}", f.channels(), f.spatial()),
        ));
    }
    Ok(())
}

/// Shared bottleneck MLP of the attention branch, returning
/// `(pre-activation, hidden, output)`.
fn attention_mlp(x: &[f64], attn: &AttentionParams) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let pre = affine(x, &attn.w1, &attn.b1)?;
    let hid = activation(&pre, Activation::Relu);
    let out = affine(&hid, &attn.w2, &attn.b2)?;
    Ok((pre, hid, out))
}

/// `sigmoid(mlp(avg_pool F) + mlp(max_pool F))`, one weight per channel.
pub fn attention_weights(f: &ChannelMap, attn: &AttentionParams) -> Result<Vec<f64>> {
    if f.channels() != attn.w1.cols() {
        return Err(Error::dims(
            "attention input channels",
            attn.w1.cols(),
            f.channels(),
        ));
    }
    let (_, _, from_avg) = attention_mlp(&spatial_pool(f, PoolMode::Avg), attn)?;
    let (_, _, from_max) = attention_mlp(&spatial_pool(f, PoolMode::Max), attn)?;
    Ok(from_avg
        .iter()
        .zip(&from_max)
        .map(|(a, m)| sigmoid(a + m))
        .collect())
}

/// Scales each channel by its weight, then averages over spatial positions.
pub fn fuse(f: &ChannelMap, w_attn: &[f64]) -> Result<Vec<f64>> {
    if w_attn.len() != f.channels() {
        return Err(Error::dims(
            "fuse attention weights",
            f.channels(),
            w_attn.len(),
        ));
    }
    let s = f.spatial();
    let scaled: Vec<f64> = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * w_attn[i / s])
        .collect();
    Ok(spatial_pool(
        &ChannelMap::new(f.channels(), s, scaled)?,
        PoolMode::Avg,
    ))
}

/// `W4 relu(W3 fused + b3) + b4`.
pub fn classify(fused: &[f64], clf: &ClassifierParams) -> Result<Vec<f64>> {
    let hidden = activation(&affine(fused, &clf.w3, &clf.b3)?, Activation::Relu);
    affine(&hidden, &clf.w4, &clf.b4)
}

fn concat_sample(sample: &SubjectSample, arch: &ArchConfig) -> Result<ChannelMap> {
    let f = concat_channels(&sample.maps)?;
    check_map(&f, arch)?;
    Ok(f)
}

/// Class probabilities for one subject.
pub fn forward(sample: &SubjectSample, params: &ModelParams) -> Result<Vec<f64>> {
    let f = concat_sample(sample, &params.arch)?;
    let w_attn = if params.arch.aff_enabled {
        attention_weights(&f, &params.attn)?
    } else {
        vec![1.0; f.channels()]
    };
    forward_from_attention(&f, &w_attn, params)
}

/// The tail of [`forward`] with externally supplied attention weights.
pub fn forward_with_attention(
    sample: &SubjectSample,
    params: &ModelParams,
    w_attn: &[f64],
) -> Result<Vec<f64>> {
    let f = concat_sample(sample, &params.arch)?;
    forward_from_attention(&f, w_attn, params)
}

fn forward_from_attention(
    f: &ChannelMap,
    w_attn: &[f64],
    params: &ModelParams,
) -> Result<Vec<f64>> {
    let probs = softmax(&classify(&fuse(f, w_attn)?, &params.clf)?);
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("forward probabilities".into()));
    }
    Ok(probs)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    (1..values.len()).fold(0, |best, i| if values[i] > values[best] { i } else { best })
}

pub fn predict(sample: &SubjectSample, params: &ModelParams) -> Result<ClassLabel> {
    ClassLabel::from_index(argmax(&forward(sample, params)?))
}

#[derive(Debug, Clone)]
pub struct BackwardOutput {
    pub grads: ModelParams,
    /// Mean loss over the batch.
    pub loss: f64,
    /// Samples whose true-class probability hit the log floor.
    pub clamp_events: usize,
}

/// Intermediate values of one forward pass kept for the backward pass.
struct Trace {
    avg: Vec<f64>,
    branches: Option<[Branch; 2]>,
    attn: Vec<f64>,
    fused: Vec<f64>,
    pre3: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

struct Branch {
    input: Vec<f64>,
    pre: Vec<f64>,
    hid: Vec<f64>,
}

fn trace(sample: &SubjectSample, params: &ModelParams) -> Result<Trace> {
    let f = concat_sample(sample, &params.arch)?;
    let avg = spatial_pool(&f, PoolMode::Avg);
    let (branches, attn) = if params.arch.aff_enabled {
        let max = spatial_pool(&f, PoolMode::Max);
        let (pre_a, hid_a, out_a) = attention_mlp(&avg, &params.attn)?;
        let (pre_m, hid_m, out_m) = attention_mlp(&max, &params.attn)?;
        let attn = out_a
            .iter()
            .zip(&out_m)
            .map(|(a, m)| sigmoid(a + m))
            .collect();
        let branches = [
            Branch {
                input: avg.clone(),
                pre: pre_a,
                hid: hid_a,
            },
            Branch {
                input: max,
                pre: pre_m,
                hid: hid_m,
            },
        ];
        (Some(branches), attn)
    } else {
        (None, vec![1.0; f.channels()])
    };
    let fused = fuse(&f, &attn)?;
    let pre3 = affine(&fused, &params.clf.w3, &params.clf.b3)?;
    let hidden = activation(&pre3, Activation::Relu);
    let logits = affine(&hidden, &params.clf.w4, &params.clf.b4)?;
    let probs = softmax(&logits);
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("forward probabilities".into()));
    }
    Ok(Trace {
        avg,
        branches,
        attn,
        fused,
        pre3,
        hidden,
        probs,
    })
}

fn relu_mask(grad: &mut [f64], pre: &[f64]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Gradients of the batch-mean loss with respect to every parameter.
pub fn backward<S: Borrow<SubjectSample>>(
    batch: &[S],
    params: &ModelParams,
    loss_cfg: &LossConfig,
) -> Result<BackwardOutput> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    loss_cfg.validate()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = params.zeros_like();
    let mut loss_sum = 0.0;
    let mut clamp_events = 0;

    for sample in batch {
        let sample = sample.borrow();
        let t = trace(sample, params)?;
        let sample_loss = focal_loss(&t.probs, sample.label, loss_cfg)?;
        loss_sum += sample_loss.value;
        clamp_events += usize::from(sample_loss.clamped);

        let dlogits: Vec<f64> = focal_grad_from_probs(&t.probs, sample.label, loss_cfg)
            .into_iter()
            .map(|g| g * scale)
            .collect();

        let clf = &params.clf;
        grads.clf.w4.add_outer(&dlogits, &t.hidden);
        add_assign(&mut grads.clf.b4, &dlogits);
        let mut dpre3 = clf.w4.transpose_mul(&dlogits);
        relu_mask(&mut dpre3, &t.pre3);
        grads.clf.w3.add_outer(&dpre3, &t.fused);
        add_assign(&mut grads.clf.b3, &dpre3);

        if let Some(branches) = &t.branches {
            let dfused = clf.w3.transpose_mul(&dpre3);
            // fused_c = attn_c * avg_c, attn = sigmoid(z)
            let dz: Vec<f64> = dfused
                .iter()
                .zip(&t.avg)
                .zip(&t.attn)
                .map(|((g, x), a)| g * x * a * (1.0 - a))
                .collect();
            let attn = &params.attn;
            for b in branches {
                grads.attn.w2.add_outer(&dz, &b.hid);
                add_assign(&mut grads.attn.b2, &dz);
                let mut dpre = attn.w2.transpose_mul(&dz);
                relu_mask(&mut dpre, &b.pre);
                grads.attn.w1.add_outer(&dpre, &b.input);
                add_assign(&mut grads.attn.b1, &dpre);
            }
        }
    }

    let loss = loss_sum * scale;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::NonFinite("loss or gradients".into()));
    }
    Ok(BackwardOutput {
        grads,
        loss,
        clamp_events,
    })
}

fn add_assign(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Central finite-difference check of [`backward`] over every parameter.
pub fn check_gradients<S: Borrow<SubjectSample>>(
    batch: &[S],
    params: &ModelParams,
    loss_cfg: &LossConfig,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let loss_fn = |theta: &[f64]| {
        let mut p = params.clone();
        p.set_flat(theta)?;
        let out = backward(batch, &p, loss_cfg)?;
        Ok((out.loss, out.grads.to_flat()))
    };
    grad_check(loss_fn, &params.to_flat(), h, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossMode;

    fn arch(d: usize, s: usize, r: usize, h: usize) -> ArchConfig {
        ArchConfig {
            d,
            spatial: s,
            reduction: r,
            hidden: h,
            aff_enabled: true,
        }
    }

    fn random_sample(rng: &mut Prng, d: usize, s: usize, label: usize, id: usize) -> SubjectSample {
        SubjectSample {
            subject_id: format!("r{id}"),
            maps: std::array::from_fn(|_| {
                ChannelMap::new(d, s, (0..d * s).map(|_| rng.uniform(-1.5, 1.5)).collect()).unwrap()
            }),
            label: ClassLabel::from_index(label % 3).unwrap(),
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = init_params(arch(4, 1, 2, 8), 5).unwrap();
        let b = init_params(arch(4, 1, 2, 8), 5).unwrap();
        assert_eq!(
            a.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        for bias in [&a.attn.b1, &a.attn.b2, &a.clf.b3, &a.clf.b4] {
            assert!(bias.iter().all(|&v| v == 0.0));
        }
        assert_ne!(a, init_params(arch(4, 1, 2, 8), 6).unwrap());
    }

    #[test]
    fn init_respects_bounds() {
        // d=4: 6d = 24, attention hidden = 12, classifier hidden = 8
        let p = init_params(arch(4, 1, 2, 8), 11).unwrap();
        let expected = [
            (12, 24, 0.5),
            (24, 12, 1.0 / 2f64.sqrt()),
            (8, 24, 0.5),
            (3, 8, 0.75f64.sqrt()),
        ];
        for (w, (rows, cols, bound)) in [&p.attn.w1, &p.attn.w2, &p.clf.w3, &p.clf.w4]
            .into_iter()
            .zip(expected)
        {
            assert_eq!(w.shape(), (rows, cols));
            assert!((init_bound(cols) - bound).abs() < 1e-15);
            assert!(w.as_slice().iter().all(|v| v.abs() <= bound));
            // a uniform draw should use most of the interval
            let spread = w.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(spread > 0.5 * bound);
        }
    }

    #[test]
    fn arch_validation() {
        assert!(arch(0, 1, 1, 1).validate().is_err());
        assert!(arch(1, 1, 7, 1).validate().is_err());
        assert!(arch(1, 1, 6, 1).validate().is_ok());
        assert_eq!(arch(1, 1, 4, 1).attn_hidden(), 2);
        assert_eq!(ArchConfig::default().attn_hidden(), 192);
    }

    #[test]
    fn attention_with_zero_output_layer_is_half() {
        let mut rng = Prng::new(1);
        let p = init_params(arch(2, 3, 3, 4), 0).unwrap();
        let mut attn = p.attn.clone();
        attn.w2 = Matrix::zeros(12, 4);
        let s = random_sample(&mut rng, 2, 3, 0, 0);
        let f = concat_channels(&s.maps).unwrap();
        assert!(attention_weights(&f, &attn)
            .unwrap()
            .iter()
            .all(|&w| w == 0.5));
    }

    #[test]
    fn attention_at_single_position_doubles_the_mlp() {
        let mut rng = Prng::new(2);
        let p = init_params(arch(3, 1, 2, 4), 4).unwrap();
        let s = random_sample(&mut rng, 3, 1, 0, 0);
        let f = concat_channels(&s.maps).unwrap();
        let (_, _, out) = attention_mlp(f.values(), &p.attn).unwrap();
        let want: Vec<f64> = out.iter().map(|o| sigmoid(2.0 * o)).collect();
        assert_eq!(attention_weights(&f, &p.attn).unwrap(), want);
    }

    #[test]
    fn attention_hand_trace() {
        // d=1, S=2, r=6: one hidden unit. Channels are the six emotions.
        let rows: [&[f64]; 6] = [
            &[0.0, 2.0],
            &[1.0, 1.0],
            &[-1.0, 3.0],
            &[0.0, 0.0],
            &[2.0, 2.0],
            &[-2.0, 0.0],
        ];
        let f = ChannelMap::from_channels(&rows).unwrap();
        let attn = AttentionParams {
            w1: Matrix::from_vec(1, 6, vec![1.0, 0.0, 0.5, 0.0, -1.0, 1.0]).unwrap(),
            b1: vec![0.5],
            w2: Matrix::from_vec(6, 1, vec![1.0, -1.0, 0.5, 0.0, 2.0, -0.5]).unwrap(),
            b2: vec![0.0, 0.1, 0.0, 0.0, 0.0, -0.2],
        };
        // avg = (1, 1, 1, 0, 2, -1): pre = 1 + 0.5 - 2 - 1 + 0.5 = -1   -> relu 0
        // max = (2, 1, 3, 0, 2, 0):  pre = 2 + 1.5 - 2 + 0 + 0.5 = 2    -> relu 2
        // z = 2*b2 + w2 * (0 + 2)
        let z: [f64; 6] = [2.0, -2.0 + 0.2, 1.0, 0.0, 4.0, -1.0 - 0.4];
        let got = attention_weights(&f, &attn).unwrap();
        for (g, zi) in got.iter().zip(z) {
            assert!((g - 1.0 / (1.0 + (-zi).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn fuse_examples() {
        let f = ChannelMap::from_channels(&[&[1.0, 3.0], &[2.0, 2.0]]).unwrap();
        assert_eq!(fuse(&f, &[0.5, 1.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(
            fuse(&f, &[1.0, 1.0]).unwrap(),
            spatial_pool(&f, PoolMode::Avg)
        );
        assert_eq!(fuse(&f, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(fuse(&f, &[1.0]).is_err());
    }

    #[test]
    fn classify_examples() {
        let zero = ClassifierParams {
            w3: Matrix::zeros(2, 2),
            b3: vec![0.0; 2],
            w4: Matrix::zeros(3, 2),
            b4: vec![0.0; 3],
        };
        assert_eq!(classify(&[1.0, -4.0], &zero).unwrap(), vec![0.0; 3]);

        let clf = ClassifierParams {
            w3: Matrix::from_rows(&[&[1.0, -1.0], &[2.0, 1.0]]).unwrap(),
            b3: vec![0.0, 0.0],
            w4: Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]).unwrap(),
            b4: vec![0.0; 3],
        };
        assert_eq!(classify(&[0.0, 0.0], &clf).unwrap(), vec![0.0; 3]);
        // hidden = relu(1 - 2, 2 + 2) = (0, 4); logits = (0, 4, 4) + b4
        let clf = ClassifierParams {
            b4: vec![0.5, -0.5, 0.0],
            ..clf
        };
        assert_eq!(classify(&[1.0, 2.0], &clf).unwrap(), vec![0.5, 3.5, 4.0]);
    }

    #[test]
    fn forward_is_a_distribution() {
        let mut rng = Prng::new(3);
        for seed in 0..20 {
            let p = init_params(arch(3, 2, 3, 5), seed).unwrap();
            let s = random_sample(&mut rng, 3, 2, 0, 0);
            let probs = forward(&s, &p).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(probs.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let mut rng = Prng::new(4);
        let p = init_params(arch(3, 2, 3, 5), 0).unwrap();
        let s = random_sample(&mut rng, 2, 2, 0, 0);
        assert!(matches!(
            forward(&s, &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn disabled_attention_equals_pinned_ones() {
        let mut rng = Prng::new(5);
        for seed in 0..100 {
            let mut p = init_params(arch(2, 3, 4, 6), seed).unwrap();
            let s = random_sample(&mut rng, 2, 3, 0, 0);
            let pinned = forward_with_attention(&s, &p, &[1.0; 12]).unwrap();
            p.arch.aff_enabled = false;
            let off = forward(&s, &p).unwrap();
            for (a, b) in off.iter().zip(&pinned) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn emotion_order_matters() {
        let mut rng = Prng::new(6);
        let p = init_params(arch(2, 1, 2, 6), 9).unwrap();
        let s = random_sample(&mut rng, 2, 1, 0, 0);
        let mut swapped = s.clone();
        swapped.maps.swap(0, 3);
        let (a, b) = (forward(&s, &p).unwrap(), forward(&swapped, &p).unwrap());
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.7, 0.1]), 1);
        assert_eq!(argmax(&[1.0 / 3.0; 3]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
        let z = [0.3, -1.0, 2.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 7.5).collect();
        assert_eq!(argmax(&softmax(&z)), argmax(&softmax(&shifted)));
    }

    #[test]
    fn flat_round_trip() {
        let p = init_params(arch(2, 2, 3, 4), 1).unwrap();
        let mut q = p.zeros_like();
        q.set_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[0.0]).is_err());
        let expected: usize = p.shapes().iter().map(|(r, c)| r * c).sum();
        assert_eq!(p.num_params(), expected);
    }

    #[test]
    fn backward_rejects_empty_batch() {
        let p = init_params(arch(1, 1, 1, 2), 0).unwrap();
        let empty: [SubjectSample; 0] = [];
        assert!(matches!(
            backward(&empty, &p, &LossConfig::cross_entropy()),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn doubling_alpha_doubles_loss_and_grads() {
        let mut rng = Prng::new(7);
        let p = init_params(arch(2, 2, 3, 4), 2).unwrap();
        let batch: Vec<_> = (0..3)
            .map(|i| random_sample(&mut rng, 2, 2, i, i))
            .collect();
        let base = LossConfig::new(2.0, [1.0, 3.0, 5.0], LossMode::AdaptiveFocal).unwrap();
        let doubled = LossConfig::new(2.0, [2.0, 6.0, 10.0], LossMode::AdaptiveFocal).unwrap();
        let a = backward(&batch, &p, &base).unwrap();
        let b = backward(&batch, &p, &doubled).unwrap();
        assert_eq!(2.0 * a.loss, b.loss);
        for (x, y) in a.grads.to_flat().iter().zip(b.grads.to_flat()) {
            assert_eq!(2.0 * x, y);
        }
    }

    #[test]
    fn confident_prediction_has_vanishing_gradient() {
        // Large output bias toward the true class drives p_t to 1.
        let mut rng = Prng::new(8);
        let mut p = init_params(arch(2, 1, 2, 4), 3).unwrap();
        p.clf.b4 = vec![40.0, 0.0, 0.0];
        let batch = vec![random_sample(&mut rng, 2, 1, 0, 0)];
        let cfg = LossConfig::new(2.0, [1.0; 3], LossMode::AdaptiveFocal).unwrap();
        let out = backward(&batch, &p, &cfg).unwrap();
        let norm = out
            .grads
            .to_flat()
            .iter()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        assert!(out.loss < 1e-30);
        assert!(norm < 1e-30, "gradient norm {norm:e}");
    }

    #[test]
    fn disabled_attention_has_zero_attention_gradient() {
        let mut rng = Prng::new(9);
        let mut p = init_params(arch(2, 2, 2, 4), 4).unwrap();
        p.arch.aff_enabled = false;
        let batch: Vec<_> = (0..2)
            .map(|i| random_sample(&mut rng, 2, 2, i, i))
            .collect();
        let out = backward(&batch, &p, &LossConfig::cross_entropy()).unwrap();
        let t = out.grads.tensors();
        assert!(t[..4].iter().all(|g| g.iter().all(|&v| v == 0.0)));
        assert!(t[4..].iter().any(|g| g.iter().any(|&v| v != 0.0)));
    }
}
