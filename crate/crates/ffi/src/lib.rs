//! C ABI over the maskfuse classifier.
//!
//! Every function returns an [`MfStatus`]. On failure a message describing
//! the error is available from [`mf_last_error`] on the same thread. Handles
//! are opaque, owned by the caller, and released with the matching `_free`
//! function. No function panics across the boundary.
//!
//! Feature values passed to [`mf_model_forward`] are laid out emotion-major
//! (happiness, sadness, surprise, fear, anger, disgust), then channel, then
//! spatial position: `6 * d * S` doubles per subject.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use maskfuse::checkpoint::{load_checkpoint, save_checkpoint};
use maskfuse::data::{
    load_any, synth_generate, write_dataset, ClassLabel, Dataset, SubjectSample, SyntheticSpec,
    NUM_CLASSES, NUM_EMOTIONS,
};
use maskfuse::loss::{class_weights, focal_loss, ClassCounts, LossConfig, LossMode};
use maskfuse::metrics::MetricsReport;
use maskfuse::model::{forward, init_params, ArchConfig, ModelParams};
use maskfuse::nn::ChannelMap;
use maskfuse::train::{cross_validate, evaluate, train, TrainConfig};
use maskfuse::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or not valid UTF-8.
    InvalidArgument = 2,
    /// File system failure, missing file or refused overwrite.
    Io = 3,
    /// Malformed or incompatible file contents.
    Format = 4,
    /// Data or configuration rejected by validation.
    Validation = 5,
    /// Non-finite values or a failed numeric check.
    Numeric = 6,
    /// An internal panic was caught.
    Panic = 7,
}

/// Severity grade.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfLabel {
    NonPd = 0,
    EarlyPd = 1,
    MidLatePd = 2,
}

/// Trained or initialized model parameters.
pub struct MfModel {
    params: ModelParams,
}

/// Loaded or generated dataset.
pub struct MfDataset {
    data: Dataset,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MfArchConfig {
    /// Channels per expression map.
    pub d: usize,
    /// Spatial positions per channel.
    pub spatial: usize,
    /// Attention reduction ratio.
    pub reduction: usize,
    /// Classifier hidden width.
    pub hidden: usize,
    pub aff_enabled: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MfTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub gamma: f64,
    pub acb_enabled: bool,
    pub aff_enabled: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MfSynthSpec {
    pub counts: [usize; 3],
    pub d: usize,
    pub spatial: usize,
    pub separation: f64,
    pub noise: f64,
    /// Bit `e` set means emotion `e` carries class signal.
    pub informative_mask: u8,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MfMetrics {
    pub auc: f64,
    pub gmean: f64,
    pub f1: f64,
    pub acc: f64,
    /// Row-major `confusion[true * 3 + predicted]`.
    pub confusion: [u64; 9],
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure {
    status: MfStatus,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            _ if e.is_numeric() => MfStatus::Numeric,
            Error::Io(_) | Error::MissingFile(_) | Error::AlreadyExists(_) => MfStatus::Io,
            Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::Truncated { .. }
            | Error::Manifest(_)
            | Error::Csv(_)
            | Error::Json(_) => MfStatus::Format,
            _ => MfStatus::Validation,
        };
        Failure {
            status,
            message: e.to_string(),
        }
    }
}

fn fail(status: MfStatus, message: impl Into<String>) -> Failure {
    Failure {
        status,
        message: message.into(),
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MfStatus::Ok,
        Ok(Err(f)) => {
            set_last_error(&f.message);
            f.status
        }
        Err(_) => {
            set_last_error("internal panic");
            MfStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees a non-null pointer refers to a valid `T`.
    unsafe { p.as_ref() }.ok_or_else(|| fail(MfStatus::NullPointer, format!("{name} is null")))
}

fn out_ptr<T>(p: *mut T, name: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(fail(MfStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(p)
    }
}

fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(MfStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: the caller guarantees a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| {
        fail(
            MfStatus::InvalidArgument,
            format!("{name} is not valid UTF-8"),
        )
    })?;
    Ok(PathBuf::from(s))
}

fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(fail(MfStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: the caller guarantees `len` readable doubles at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn arch_from(c: &MfArchConfig) -> ArchConfig {
    ArchConfig {
        d: c.d,
        spatial: c.spatial,
        reduction: c.reduction,
        hidden: c.hidden,
        aff_enabled: c.aff_enabled,
    }
}

fn train_from(c: &MfTrainConfig) -> TrainConfig {
    TrainConfig {
        epochs: c.epochs,
        lr: c.lr,
        batch_size: c.batch_size,
        seed: c.seed,
        gamma: c.gamma,
        acb_enabled: c.acb_enabled,
        aff_enabled: c.aff_enabled,
    }
}

fn metrics_from(r: &MetricsReport) -> MfMetrics {
    let mut confusion = [0u64; 9];
    for (i, row) in r.confusion.counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            confusion[i * 3 + j] = v as u64;
        }
    }
    MfMetrics {
        auc: r.auc,
        gmean: r.gmean,
        f1: r.f1,
        acc: r.acc,
        confusion,
    }
}

fn label_from(raw: u8) -> Result<ClassLabel, Failure> {
    ClassLabel::from_index(raw as usize).map_err(|_| {
        fail(
            MfStatus::InvalidArgument,
            format!("label {raw} out of range"),
        )
    })
}

fn subject_from(params: &ModelParams, values: &[f64]) -> Result<SubjectSample, Failure> {
    let (d, s) = (params.arch.d, params.arch.spatial);
    if values.len() != NUM_EMOTIONS * d * s {
        return Err(fail(
            MfStatus::InvalidArgument,
            format!(
                "expected {} feature values, got {}",
                NUM_EMOTIONS * d * s,
                values.len()
            ),
        ));
    }
    let mut maps = Vec::with_capacity(NUM_EMOTIONS);
    for chunk in values.chunks_exact(d * s) {
        maps.push(ChannelMap::new(d, s, chunk.to_vec())?);
    }
    Ok(SubjectSample {
        subject_id: "ffi".into(),
        maps: maps
            .try_into()
            .map_err(|_| fail(MfStatus::InvalidArgument, "feature layout"))?,
        label: ClassLabel::NonPd,
    })
}

fn emit<T>(out: *mut *mut T, value: T) {
    // SAFETY: `out` was checked non-null by the caller of this helper.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn mf_arch_config_default() -> MfArchConfig {
    let a = ArchConfig::default();
    MfArchConfig {
        d: a.d,
        spatial: a.spatial,
        reduction: a.reduction,
        hidden: a.hidden,
        aff_enabled: a.aff_enabled,
    }
}

#[no_mangle]
pub extern "C" fn mf_train_config_default() -> MfTrainConfig {
    let t = TrainConfig::default();
    MfTrainConfig {
        epochs: t.epochs,
        lr: t.lr,
        batch_size: t.batch_size,
        seed: t.seed,
        gamma: t.gamma,
        acb_enabled: t.acb_enabled,
        aff_enabled: t.aff_enabled,
    }
}

#[no_mangle]
pub extern "C" fn mf_synth_spec_default() -> MfSynthSpec {
    let s = SyntheticSpec::default();
    MfSynthSpec {
        counts: s.counts,
        d: s.d,
        spatial: s.spatial,
        separation: s.separation,
        noise: s.noise,
        informative_mask: (0..NUM_EMOTIONS)
            .filter(|&e| s.informative[e])
            .fold(0, |m, e| m | (1 << e)),
        seed: s.seed,
    }
}

/// Loads a dataset from a manifest, a directory holding `manifest.json`, or
/// a `.csv` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_dataset_load(
    path: *const c_char,
    out: *mut *mut MfDataset,
) -> MfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let data = load_any(&path_arg(path, "path")?)?;
        emit(out, MfDataset { data });
        Ok(())
    })
}

/// Generates a seeded synthetic dataset.
///
/// # Safety
/// `spec` must point to a valid spec; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_dataset_synth(
    spec: *const MfSynthSpec,
    out: *mut *mut MfDataset,
) -> MfStatus {
    guard(|| {
        let spec = non_null(spec, "spec")?;
        let out = out_ptr(out, "out")?;
        let data = synth_generate(&SyntheticSpec {
            counts: spec.counts,
            d: spec.d,
            spatial: spec.spatial,
            separation: spec.separation,
            noise: spec.noise,
            informative: std::array::from_fn(|e| spec.informative_mask & (1 << e) != 0),
            seed: spec.seed,
        })?;
        emit(out, MfDataset { data });
        Ok(())
    })
}

/// Writes the dataset as a manifest directory.
///
/// # Safety
/// `dataset` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mf_dataset_save(
    dataset: *const MfDataset,
    dir: *const c_char,
    force: bool,
) -> MfStatus {
    guard(|| {
        let ds = non_null(dataset, "dataset")?;
        write_dataset(&ds.data, &path_arg(dir, "dir")?, force)?;
        Ok(())
    })
}

/// Number of subjects.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_dataset_len(dataset: *const MfDataset, out: *mut usize) -> MfStatus {
    guard(|| {
        let ds = non_null(dataset, "dataset")?;
        let out = out_ptr(out, "out")?;
        *out = ds.data.len();
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_dataset_free(dataset: *mut MfDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Seeded initialization.
///
/// # Safety
/// `arch` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_model_init(
    arch: *const MfArchConfig,
    seed: u64,
    out: *mut *mut MfModel,
) -> MfStatus {
    guard(|| {
        let arch = non_null(arch, "arch")?;
        let out = out_ptr(out, "out")?;
        let params = init_params(arch_from(arch), seed)?;
        emit(out, MfModel { params });
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_model_load(path: *const c_char, out: *mut *mut MfModel) -> MfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let params = load_checkpoint(&path_arg(path, "path")?)?;
        emit(out, MfModel { params });
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mf_model_save(
    model: *const MfModel,
    path: *const c_char,
    force: bool,
) -> MfStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        save_checkpoint(&m.params, &path_arg(path, "path")?, force)?;
        Ok(())
    })
}

/// Writes the model's architecture into `out`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_model_arch(model: *const MfModel, out: *mut MfArchConfig) -> MfStatus {
    guard(|| {
        let a = non_null(model, "model")?.params.arch;
        let out = out_ptr(out, "out")?;
        *out = MfArchConfig {
            d: a.d,
            spatial: a.spatial,
            reduction: a.reduction,
            hidden: a.hidden,
            aff_enabled: a.aff_enabled,
        };
        Ok(())
    })
}

/// Class probabilities for one subject.
///
/// # Safety
/// `values` must hold `len` doubles; `probs_out` must hold 3.
#[no_mangle]
pub unsafe extern "C" fn mf_model_forward(
    model: *const MfModel,
    values: *const f64,
    len: usize,
    probs_out: *mut f64,
) -> MfStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let probs_out = out_ptr(probs_out, "probs_out")?;
        let sample = subject_from(&m.params, slice_arg(values, len, "values")?)?;
        let probs = forward(&sample, &m.params)?;
        ptr::copy_nonoverlapping(probs.as_ptr(), probs_out, NUM_CLASSES);
        Ok(())
    })
}

/// Most probable grade for one subject; ties go to the lower grade.
///
/// # Safety
/// `values` must hold `len` doubles; `label_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_model_predict(
    model: *const MfModel,
    values: *const f64,
    len: usize,
    label_out: *mut MfLabel,
) -> MfStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let label_out = out_ptr(label_out, "label_out")?;
        let sample = subject_from(&m.params, slice_arg(values, len, "values")?)?;
        *label_out = match maskfuse::model::predict(&sample, &m.params)? {
            ClassLabel::NonPd => MfLabel::NonPd,
            ClassLabel::EarlyPd => MfLabel::EarlyPd,
            ClassLabel::MidLatePd => MfLabel::MidLatePd,
        };
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_model_free(model: *mut MfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trains a new model. `final_loss` may be null.
///
/// # Safety
/// Handles and configs must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_train(
    dataset: *const MfDataset,
    arch: *const MfArchConfig,
    cfg: *const MfTrainConfig,
    out: *mut *mut MfModel,
    final_loss: *mut f64,
) -> MfStatus {
    guard(|| {
        let ds = non_null(dataset, "dataset")?;
        let arch = non_null(arch, "arch")?;
        let cfg = non_null(cfg, "cfg")?;
        let out = out_ptr(out, "out")?;
        let (params, history) = train(&ds.data, arch_from(arch), &train_from(cfg))?;
        if !final_loss.is_null() {
            *final_loss = history.epoch_loss.last().copied().unwrap_or(f64::NAN);
        }
        emit(out, MfModel { params });
        Ok(())
    })
}

/// Scores a model on a dataset.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_evaluate(
    model: *const MfModel,
    dataset: *const MfDataset,
    out: *mut MfMetrics,
) -> MfStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let ds = non_null(dataset, "dataset")?;
        let out = out_ptr(out, "out")?;
        *out = metrics_from(&evaluate(&m.params, &ds.data)?);
        Ok(())
    })
}

/// Stratified `k`-fold cross-validation. Writes the fold mean to `mean_out`
/// and, when `folds_out` is non-null, one entry per fold (`k` entries).
///
/// # Safety
/// Pointers must be valid; `folds_out` must hold `k` entries if non-null.
#[no_mangle]
pub unsafe extern "C" fn mf_cross_validate(
    dataset: *const MfDataset,
    arch: *const MfArchConfig,
    cfg: *const MfTrainConfig,
    k: usize,
    split_seed: u64,
    mean_out: *mut MfMetrics,
    folds_out: *mut MfMetrics,
) -> MfStatus {
    guard(|| {
        let ds = non_null(dataset, "dataset")?;
        let arch = non_null(arch, "arch")?;
        let cfg = non_null(cfg, "cfg")?;
        let mean_out = out_ptr(mean_out, "mean_out")?;
        let report = cross_validate(
            &ds.data,
            arch_from(arch),
            &train_from(cfg),
            k,
            split_seed,
            Some(1),
        )?;
        *mean_out = metrics_from(&report.mean);
        if !folds_out.is_null() {
            for (i, fold) in report.folds.iter().enumerate() {
                *folds_out.add(i) = metrics_from(fold);
            }
        }
        Ok(())
    })
}

/// `alpha_i = max(counts) / counts_i`.
///
/// # Safety
/// `counts` must hold 3 values; `alpha_out` must hold 3.
#[no_mangle]
pub unsafe extern "C" fn mf_class_weights(counts: *const usize, alpha_out: *mut f64) -> MfStatus {
    guard(|| {
        if counts.is_null() {
            return Err(fail(MfStatus::NullPointer, "counts is null"));
        }
        let alpha_out = out_ptr(alpha_out, "alpha_out")?;
        let c = std::slice::from_raw_parts(counts, NUM_CLASSES);
        let w = class_weights(&ClassCounts([c[0], c[1], c[2]]))?;
        ptr::copy_nonoverlapping(w.as_ptr(), alpha_out, NUM_CLASSES);
        Ok(())
    })
}

/// Adaptive focal loss `alpha_t (1 - p_t)^gamma (-ln p_t)` of one
/// probability vector.
///
/// # Safety
/// `probs` and `alpha` must hold 3 values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_focal_loss(
    probs: *const f64,
    target: u8,
    gamma: f64,
    alpha: *const f64,
    out: *mut f64,
) -> MfStatus {
    guard(|| {
        let probs = slice_arg(probs, NUM_CLASSES, "probs")?;
        let alpha = slice_arg(alpha, NUM_CLASSES, "alpha")?;
        let out = out_ptr(out, "out")?;
        let cfg = LossConfig::new(
            gamma,
            [alpha[0], alpha[1], alpha[2]],
            LossMode::AdaptiveFocal,
        )?;
        *out = focal_loss(probs, label_from(target)?, &cfg)?.value;
        Ok(())
    })
}
