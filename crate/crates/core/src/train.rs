//! Training loop, evaluation and stratified cross-validation.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_kfold, ClassLabel, Dataset, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::loss::{ClassCounts, LossConfig};
use crate::metrics::{cv_aggregate, MetricsReport};
use crate::model::{backward, forward, init_params, ArchConfig, ModelParams};
use crate::optim::{adam_step, AdamState};
use crate::rng::Prng;

/// XORed into the seed for the mini-batch shuffle stream so it never
/// replays the initialization stream.
pub const SHUFFLE_STREAM: u64 = 0x7368_7566_666c_6521;

/// Environment variable capping fold-level parallelism in [`cross_validate`].
pub const THREADS_ENV: &str = "MASKFUSE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub gamma: f64,
    pub acb_enabled: bool,
    pub aff_enabled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 1e-3,
            batch_size: 32,
            seed: 0,
            gamma: 2.0,
            acb_enabled: true,
            aff_enabled: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr must be > 0, got {}",
                self.lr
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Adaptive focal loss weighted by `counts`, or plain cross-entropy
    /// when class balancing is off.
    pub fn loss_config(&self, counts: &ClassCounts) -> Result<LossConfig> {
        if self.acb_enabled {
            LossConfig::adaptive(counts, self.gamma)
        } else {
            Ok(LossConfig::cross_entropy())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Sample-weighted mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub clamp_events: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Trains from `init_params(arch, cfg.seed)`; `cfg.aff_enabled` overrides
/// `arch.aff_enabled`.
pub fn train(
    dataset: &Dataset,
    arch: ArchConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    let start = Instant::now();
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let arch = ArchConfig {
        aff_enabled: cfg.aff_enabled,
        ..arch
    };
    arch.validate()?;
    if (dataset.d(), dataset.spatial()) != (arch.d, arch.spatial) {
        return Err(Error::dims(
            "training set",
            format!("d={} S={}", arch.d, arch.spatial),
            format!("d={} S={}", dataset.d(), dataset.spatial()),
        ));
    }
    let loss_cfg = cfg.loss_config(&dataset.class_counts())?;

    let mut params = init_params(arch, cfg.seed)?;
    let mut state = AdamState::new(&params, cfg.lr)?;
    let mut rng = Prng::new(cfg.seed ^ SHUFFLE_STREAM);
    let samples = dataset.samples();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = TrainHistory::default();

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| &samples[i]).collect();
            let out = backward(&batch, &params, &loss_cfg)?;
            adam_step(&mut params, &out.grads, &mut state)?;
            total += out.loss * chunk.len() as f64;
            history.clamp_events += out.clamp_events;
        }
        let mean = total / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!(
                "epoch {} loss",
                history.epoch_loss.len() + 1
            )));
        }
        history.epoch_loss.push(mean);
    }
    history.wall_time = start.elapsed();
    Ok((params, history))
}

/// Class probabilities for every sample, in dataset order.
pub fn predict_proba(params: &ModelParams, dataset: &Dataset) -> Result<Vec<[f64; NUM_CLASSES]>> {
    dataset
        .samples()
        .iter()
        .map(|s| {
            let p = forward(s, params)?;
            p.try_into()
                .map_err(|p: Vec<f64>| Error::dims("class probabilities", NUM_CLASSES, p.len()))
        })
        .collect()
}

pub fn evaluate(params: &ModelParams, dataset: &Dataset) -> Result<MetricsReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let probs = predict_proba(params, dataset)?;
    let labels: Vec<ClassLabel> = dataset.labels();
    MetricsReport::from_predictions(&labels, &probs)
}

pub fn fit_fold(
    train_split: &Dataset,
    eval_split: &Dataset,
    arch: ArchConfig,
    cfg: &TrainConfig,
) -> Result<MetricsReport> {
    let (params, _) = train(train_split, arch, cfg)?;
    evaluate(&params, eval_split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub split_seed: u64,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub folds: Vec<MetricsReport>,
    pub mean: MetricsReport,
}

/// Stratified `k`-fold cross-validation. Folds may train concurrently,
/// capped by `threads` (or all cores when `None`); results are independent
/// of the thread count.
pub fn cross_validate(
    dataset: &Dataset,
    arch: ArchConfig,
    cfg: &TrainConfig,
    k: usize,
    split_seed: u64,
    threads: Option<usize>,
) -> Result<CvReport> {
    cfg.validate()?;
    let split = stratified_kfold(&dataset.labels(), k, split_seed)?;
    let run_fold = |f: usize| {
        let train_split = dataset.subset(&split.train_indices(f));
        let eval_split = dataset.subset(&split.eval_indices(f));
        fit_fold(&train_split, &eval_split, arch, cfg)
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let folds = pool.install(|| {
        (0..k)
            .into_par_iter()
            .map(run_fold)
            .collect::<Result<Vec<_>>>()
    })?;
    let mean = cv_aggregate(&folds)?;
    Ok(CvReport {
        k,
        split_seed,
        arch: ArchConfig {
            aff_enabled: cfg.aff_enabled,
            ..arch
        },
        train: *cfg,
        folds,
        mean,
    })
}

/// Reads the fold-parallelism cap from the environment.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SyntheticSpec};

    fn small_arch() -> ArchConfig {
        ArchConfig {
            d: 4,
            spatial: 1,
            reduction: 4,
            hidden: 8,
            aff_enabled: true,
        }
    }

    fn separable() -> Dataset {
        synth_generate(&SyntheticSpec {
            counts: [20, 20, 20],
            d: 4,
            spatial: 1,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 15,
            lr: 1e-2,
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let (_, h) = train(&separable(), small_arch(), &quick()).unwrap();
        assert_eq!(h.epoch_loss.len(), 15);
        assert!(
            h.epoch_loss.last().unwrap() < h.epoch_loss.first().unwrap(),
            "{:?}",
            h.epoch_loss
        );
    }

    #[test]
    fn rejects_zero_epochs() {
        let cfg = TrainConfig {
            epochs: 0,
            ..quick()
        };
        assert!(matches!(
            train(&separable(), small_arch(), &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn identical_seeds_give_identical_params() {
        let ds = separable();
        let (a, ha) = train(&ds, small_arch(), &quick()).unwrap();
        let (b, hb) = train(&ds, small_arch(), &quick()).unwrap();
        let bits = |p: &ModelParams| p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(ha.epoch_loss, hb.epoch_loss);
    }

    #[test]
    fn missing_class_rejected_under_acb() {
        let ds = separable();
        let idx: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.samples()[i].label != ClassLabel::EarlyPd)
            .collect();
        let sub = ds.subset(&idx);
        assert!(matches!(
            train(&sub, small_arch(), &quick()),
            Err(Error::ZeroClassCount(ClassLabel::EarlyPd))
        ));
        let ce = TrainConfig {
            acb_enabled: false,
            ..quick()
        };
        assert!(train(&sub, small_arch(), &ce).is_ok());
    }

    #[test]
    fn fit_on_training_data_is_accurate() {
        let ds = separable();
        let report = fit_fold(&ds, &ds, small_arch(), &quick()).unwrap();
        assert!(report.acc >= 0.95, "acc {}", report.acc);
        assert_eq!(report.confusion.total(), ds.len());
    }

    #[test]
    fn aff_flag_overrides_arch() {
        let cfg = TrainConfig {
            aff_enabled: false,
            epochs: 1,
            ..quick()
        };
        let (p, _) = train(&separable(), small_arch(), &cfg).unwrap();
        assert!(!p.arch.aff_enabled);
    }

    #[test]
    fn cv_is_independent_of_thread_count() {
        let ds = separable();
        let cfg = TrainConfig {
            epochs: 3,
            ..quick()
        };
        let one = cross_validate(&ds, small_arch(), &cfg, 3, 9, Some(1)).unwrap();
        let many = cross_validate(&ds, small_arch(), &cfg, 3, 9, Some(3)).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.folds.len(), 3);
        let total: usize = one.folds.iter().map(|f| f.confusion.total()).sum();
        assert_eq!(total, ds.len());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let arch = ArchConfig {
            d: 5,
            ..small_arch()
        };
        assert!(matches!(
            train(&separable(), arch, &quick()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
