//! Forward and backward kernels. Every `*_backward` takes the upstream
//! gradient `dy` of the op's output and returns gradients of its inputs.

use super::tensor::{ChannelMap, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

/// `W x + b`.
pub fn affine(x: &[f64], w: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.cols() {
        return Err(Error::dims("affine input", w.cols(), x.len()));
    }
    if b.len() != w.rows() {
        return Err(Error::dims("affine bias", w.rows(), b.len()));
    }
    Ok((0..w.rows())
        .map(|r| b[r] + w.row(r).iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrad {
    pub dx: Vec<f64>,
    pub dw: Matrix,
    pub db: Vec<f64>,
}

pub fn affine_backward(x: &[f64], w: &Matrix, dy: &[f64]) -> Result<AffineGrad> {
    if x.len() != w.cols() || dy.len() != w.rows() {
        return Err(Error::dims(
            "affine backward",
            format!("x[{}], dy[{}]", w.cols(), w.rows()),
            format!("x[{}], dy[{}]", x.len(), dy.len()),
        ));
    }
    let mut dw = Matrix::zeros(w.rows(), w.cols());
    dw.add_outer(dy, x);
    Ok(AffineGrad {
        dx: w.transpose_mul(dy),
        dw,
        db: dy.to_vec(),
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn activation(x: &[f64], kind: Activation) -> Vec<f64> {
    match kind {
        Activation::Relu => x.iter().map(|&v| relu(v)).collect(),
        Activation::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
    }
}

/// Gradient through an activation, given its input `x` and upstream `dy`.
/// ReLU uses derivative 0 at the kink.
pub fn activation_backward(x: &[f64], kind: Activation, dy: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), dy.len());
    match kind {
        Activation::Relu => x
            .iter()
            .zip(dy)
            .map(|(&xi, &g)| if xi > 0.0 { g } else { 0.0 })
            .collect(),
        Activation::Sigmoid => x
            .iter()
            .zip(dy)
            .map(|(&xi, &g)| {
                let s = sigmoid(xi);
                g * s * (1.0 - s)
            })
            .collect(),
    }
}

pub fn spatial_pool(map: &ChannelMap, mode: PoolMode) -> Vec<f64> {
    let s = map.spatial() as f64;
    (0..map.channels())
        .map(|c| {
            let ch = map.channel(c);
            match mode {
                PoolMode::Avg => ch.iter().sum::<f64>() / s,
                PoolMode::Max => ch.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Max pooling routes the whole gradient to the first maximal position.
pub fn spatial_pool_backward(map: &ChannelMap, mode: PoolMode, dy: &[f64]) -> Result<ChannelMap> {
    if dy.len() != map.channels() {
        return Err(Error::dims("pool backward", map.channels(), dy.len()));
    }
    let s = map.spatial();
    let mut grad = ChannelMap::zeros(map.channels(), s);
    let out = grad.values_mut();
    for (c, &g) in dy.iter().enumerate() {
        let block = &mut out[c * s..(c + 1) * s];
        match mode {
            PoolMode::Avg => block.iter_mut().for_each(|v| *v = g / s as f64),
            PoolMode::Max => {
                let ch = map.channel(c);
                let arg = (1..s).fold(0, |best, i| if ch[i] > ch[best] { i } else { best });
                block[arg] = g;
            }
        }
    }
    Ok(grad)
}

/// Stacks maps along the channel axis, preserving order.
pub fn concat_channels(maps: &[ChannelMap]) -> Result<ChannelMap> {
    let first = maps.first().ok_or(Error::EmptyInput("concat_channels"))?;
    let (d, s) = (first.channels(), first.spatial());
    if let Some(bad) = maps.iter().find(|m| m.channels() != d || m.spatial() != s) {
        return Err(Error::dims(
            "concat_channels",
            format!("{d}x{s}"),
            format!("{}x{}", bad.channels(), bad.spatial()),
        ));
    }
    let values: Vec<f64> = maps
        .iter()
        .flat_map(|m| m.values().iter().copied())
        .collect();
    ChannelMap::new(d * maps.len(), s, values)
}

/// Inverse of [`concat_channels`]: splits into `parts` equal channel blocks.
pub fn split_channels(map: &ChannelMap, parts: usize) -> Result<Vec<ChannelMap>> {
    if parts == 0 || !map.channels().is_multiple_of(parts) {
        return Err(Error::dims(
            "split_channels",
            format!("multiple of {parts}"),
            map.channels(),
        ));
    }
    let d = map.channels() / parts;
    let block = d * map.spatial();
    map.values()
        .chunks(block)
        .map(|c| ChannelMap::new(d, map.spatial(), c.to_vec()))
        .collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Given `probs = softmax(z)` and `dp = dL/dprobs`, returns `dL/dz`.
pub fn softmax_backward(probs: &[f64], dp: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(dp).map(|(p, g)| p * g).sum();
    probs.iter().zip(dp).map(|(p, g)| p * (g - dot)).collect()
}
