//! Seeded Gaussian-cluster datasets standing in for extracted features.
//!
//! Draw order from a single [`Prng`] stream:
//!
//! 1. For class 0..3, for each informative emotion in canonical order:
//!    `d * S` standard normals, rescaled to Euclidean norm `separation`.
//!    This is the class mean for that emotion (zero for non-informative
//!    emotions, which consume no draws).
//! 2. For class 0..3, for sample 0..counts[class], for emotion 0..6, for
//!    each value in channel-major order: `mean + noise * N(0, 1)`.
//!
//! Samples are emitted class by class with ids `syn-<class>-<index>`.

use serde::{Deserialize, Serialize};

use super::{ClassLabel, Dataset, SubjectSample, NUM_CLASSES, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::nn::ChannelMap;
use crate::rng::Prng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub counts: [usize; NUM_CLASSES],
    pub d: usize,
    #[serde(rename = "S")]
    pub spatial: usize,
    pub separation: f64,
    pub noise: f64,
    pub informative: [bool; NUM_EMOTIONS],
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            counts: [100, 100, 100],
            d: 8,
            spatial: 1,
            separation: 5.0,
            noise: 1.0,
            informative: [true; NUM_EMOTIONS],
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.counts.contains(&0) {
            return bad(format!(
                "every class count must be >= 1, got {:?}",
                self.counts
            ));
        }
        if self.d == 0 || self.spatial == 0 {
            return bad(format!(
                "d and S must be >= 1, got {} and {}",
                self.d, self.spatial
            ));
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return bad(format!("noise must be > 0, got {}", self.noise));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return bad(format!(
                "separation must be finite and >= 0, got {}",
                self.separation
            ));
        }
        if !self.informative.iter().any(|&b| b) {
            return bad("at least one emotion must be informative".into());
        }
        Ok(())
    }
}

/// Per-class, per-emotion generating means, each of length `d * S`.
pub type GeneratingMeans = Vec<[Vec<f64>; NUM_EMOTIONS]>;

pub fn synth_generate(spec: &SyntheticSpec) -> Result<Dataset> {
    synth_generate_with_means(spec).map(|(ds, _)| ds)
}

pub fn synth_generate_with_means(spec: &SyntheticSpec) -> Result<(Dataset, GeneratingMeans)> {
    spec.validate()?;
    let width = spec.d * spec.spatial;
    let mut rng = Prng::new(spec.seed);

    let means: GeneratingMeans = (0..NUM_CLASSES)
        .map(|_| {
            std::array::from_fn(|e| {
                if spec.informative[e] {
                    random_direction(&mut rng, width, spec.separation)
                } else {
                    vec![0.0; width]
                }
            })
        })
        .collect();

    let mut samples = Vec::with_capacity(spec.counts.iter().sum());
    for (c, class_means) in means.iter().enumerate() {
        let label = ClassLabel::from_index(c)?;
        for i in 0..spec.counts[c] {
            let maps = std::array::from_fn(|e| {
                let values = class_means[e]
                    .iter()
                    .map(|&m| m + spec.noise * rng.standard_normal())
                    .collect();
                ChannelMap::new(spec.d, spec.spatial, values).expect("shape from spec")
            });
            samples.push(SubjectSample {
                subject_id: format!("syn-{c}-{i:05}"),
                maps,
                label,
            });
        }
    }
    Ok((Dataset::new(spec.d, spec.spatial, samples)?, means))
}

fn random_direction(rng: &mut Prng, width: usize, norm: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..width).map(|_| rng.standard_normal()).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-12 {
            return v.into_iter().map(|x| x * norm / len).collect();
        }
    }
}
