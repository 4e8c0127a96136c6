//! C interface to the facemanip toolkit.
//!
//! Every fallible function returns an [`FmStatus`]. On failure a message describing the
//! error can be read with [`fm_last_error`] from the same thread. Results are written
//! through out-pointers, which are only touched on success.
//!
//! Configurations, manifests, backbones and classifiers are opaque handles created by
//! `*_load` / `*_default` functions and released with the matching `*_free` function.
//! Handles may be shared between threads for reading.
//!
//! Labels cross the boundary as `uint8_t`: 0 for real, 1 for fake.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use facemanip::data::load_image;
use facemanip::metrics::{self, ScoreRecord};
use facemanip::pipeline::{run_pipeline, ExperimentPlan};
use facemanip::tripletnet::{self, EmbeddingPoint, TripletDistances};
use facemanip::{
    load_config, load_manifest, split_counts, BackboneCheckpoint, ClassifierCheckpoint, Error,
    Label, LossKind, Manifest, RunConfig,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    ShapeMismatch = 5,
    SingleClass = 6,
    Checkpoint = 7,
    WouldClobber = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmLossKind {
    SoftmaxRatio = 0,
    Margin = 1,
}

/// Sample counts per split and label.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FmSplitCounts {
    pub train_real: usize,
    pub train_fake: usize,
    pub test_real: usize,
    pub test_fake: usize,
}

/// Run configuration handle.
pub struct FmConfig(RunConfig);

/// Dataset manifest handle.
pub struct FmManifest(Manifest);

/// Trained backbone handle.
pub struct FmBackbone(BackboneCheckpoint);

/// Trained classifier handle.
pub struct FmClassifier(ClassifierCheckpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::MissingFile(_) | Error::Io { .. } | Error::Image { .. } | Error::Video { .. } => {
                FmStatus::Io
            }
            Error::MalformedHeader { .. }
            | Error::DuplicateId { .. }
            | Error::InvalidLabel { .. }
            | Error::MalformedRow { .. }
            | Error::UnknownConfigKey { .. }
            | Error::ConfigValue { .. } => FmStatus::Parse,
            Error::ShapeMismatch { .. } => FmStatus::ShapeMismatch,
            Error::SingleClass(_) | Error::InsufficientClass { .. } => FmStatus::SingleClass,
            Error::Checkpoint(_) => FmStatus::Checkpoint,
            Error::WouldClobber { .. } => FmStatus::WouldClobber,
            _ => FmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FmStatus::NullPointer, format!("`{what}` is NULL"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(FmStatus::InvalidArgument, message.into())
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `body`, converting errors and panics into a status plus a stored message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FmStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic inside facemanip".into());
            set_last_error(&message);
            FmStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn label_arg(value: u8) -> Result<Label, Failure> {
    Label::from_int(value).ok_or_else(|| invalid(format!("label {value} is neither 0 nor 1")))
}

unsafe fn score_records(labels: *const u8, scores: *const f64, n: usize) -> Result<Vec<ScoreRecord>, Failure> {
    let labels = slice_arg(labels, n, "labels")?;
    let scores = slice_arg(scores, n, "scores")?;
    labels
        .iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (&l, &s))| Ok(ScoreRecord::new(i.to_string(), label_arg(l)?, s)))
        .collect()
}

fn into_raw<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on the calling thread, or NULL if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Mann-Whitney AUC of `n` scored samples; ties count one half.
///
/// # Safety
/// `labels` and `scores` must point to `n` readable elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_auc(labels: *const u8, scores: *const f64, n: usize, out: *mut f64) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = metrics::auc(&score_records(labels, scores, n)?)?;
        Ok(())
    })
}

/// Equal error rate and the threshold it was found at.
///
/// # Safety
/// `labels` and `scores` must point to `n` readable elements; `eer` and `threshold` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_eer(
    labels: *const u8,
    scores: *const f64,
    n: usize,
    eer: *mut f64,
    threshold: *mut f64,
) -> FmStatus {
    guard(|| {
        let eer = out_arg(eer, "eer")?;
        let threshold = out_arg(threshold, "threshold")?;
        let (e, t) = metrics::eer(&score_records(labels, scores, n)?)?;
        *eer = e;
        *threshold = t;
        Ok(())
    })
}

/// Distances from the anchor to the negative and to the positive embedding.
///
/// # Safety
/// The three point pointers must each reference `dim` readable doubles; `d_neg` and
/// `d_pos` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_triplet_distances(
    anchor: *const f64,
    positive: *const f64,
    negative: *const f64,
    dim: usize,
    d_neg: *mut f64,
    d_pos: *mut f64,
) -> FmStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        let point = |p, what| -> Result<EmbeddingPoint, Failure> {
            Ok(EmbeddingPoint::new(slice_arg(p, dim, what)?.to_vec()))
        };
        let d = tripletnet::distances(
            &point(anchor, "anchor")?,
            &point(positive, "positive")?,
            &point(negative, "negative")?,
        );
        *out_arg(d_neg, "d_neg")? = d.d_neg;
        *out_arg(d_pos, "d_pos")? = d.d_pos;
        Ok(())
    })
}

/// Triplet loss for a pair of distances. `margin` is ignored by the softmax-ratio loss.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_triplet_loss(
    kind: FmLossKind,
    d_neg: f64,
    d_pos: f64,
    margin: f64,
    out: *mut f64,
) -> FmStatus {
    guard(|| {
        if !(d_neg >= 0.0 && d_pos >= 0.0) {
            return Err(invalid("distances must be non-negative"));
        }
        let kind = match kind {
            FmLossKind::SoftmaxRatio => LossKind::SoftmaxRatio,
            FmLossKind::Margin => LossKind::Margin,
        };
        *out_arg(out, "out")? = tripletnet::loss(kind, &TripletDistances { d_neg, d_pos }, margin);
        Ok(())
    })
}

/// Default run configuration.
///
/// # Safety
/// `out` must be writable. The handle must be released with [`fm_config_free`].
#[no_mangle]
pub unsafe extern "C" fn fm_config_default(out: *mut *mut FmConfig) -> FmStatus {
    guard(|| {
        *out_arg(out, "out")? = into_raw(FmConfig(RunConfig::default()));
        Ok(())
    })
}

/// Reads a `key = value` configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fm_config_load(path: *const c_char, out: *mut *mut FmConfig) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = into_raw(FmConfig(load_config(&path_arg(path, "path")?)?));
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_config_seed(config: *const FmConfig, out: *mut u64) -> FmStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(config, "config")?.0.seed;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle not used concurrently by another thread.
#[no_mangle]
pub unsafe extern "C" fn fm_config_set_seed(config: *mut FmConfig, seed: u64) -> FmStatus {
    guard(|| {
        out_arg(config, "config")?.0.seed = seed;
        Ok(())
    })
}

/// Releases a configuration. NULL is ignored.
///
/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fm_config_free(config: *mut FmConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Loads a manifest CSV; relative image paths resolve against its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fm_manifest_load(path: *const c_char, out: *mut *mut FmManifest) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = into_raw(FmManifest(load_manifest(&path_arg(path, "path")?)?));
        Ok(())
    })
}

/// # Safety
/// `manifest` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fm_manifest_split_counts(
    manifest: *const FmManifest,
    out: *mut FmSplitCounts,
) -> FmStatus {
    guard(|| {
        let c = split_counts(&handle(manifest, "manifest")?.0);
        *out_arg(out, "out")? = FmSplitCounts {
            train_real: c.train_real,
            train_fake: c.train_fake,
            test_real: c.test_real,
            test_fake: c.test_fake,
        };
        Ok(())
    })
}

/// Releases a manifest. NULL is ignored.
///
/// # Safety
/// `manifest` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fm_manifest_free(manifest: *mut FmManifest) {
    if !manifest.is_null() {
        drop(Box::from_raw(manifest));
    }
}

/// Loads a backbone checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fm_backbone_load(path: *const c_char, out: *mut *mut FmBackbone) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = into_raw(FmBackbone(BackboneCheckpoint::load(&path_arg(path, "path")?)?));
        Ok(())
    })
}

/// # Safety
/// `backbone` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fm_backbone_embedding_dim(backbone: *const FmBackbone, out: *mut usize) -> FmStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(backbone, "backbone")?.0.backbone.embedding_dim();
        Ok(())
    })
}

/// Embeds an image file. `out` receives `out_len` doubles, which must equal the
/// embedding dimension.
///
/// # Safety
/// `backbone` must be a live handle, `image_path` a NUL-terminated string and `out`
/// writable for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fm_backbone_embed_file(
    backbone: *const FmBackbone,
    image_path: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> FmStatus {
    guard(|| {
        let b = &handle(backbone, "backbone")?.0.backbone;
        if out_len != b.embedding_dim() {
            return Err(Failure(
                FmStatus::ShapeMismatch,
                format!("out_len {out_len} differs from embedding dim {}", b.embedding_dim()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let image = load_image(&path_arg(image_path, "image_path")?, b.spec.input_size)?;
        let point = b.embed(&image)?;
        slice::from_raw_parts_mut(out, out_len).copy_from_slice(&point.coords);
        Ok(())
    })
}

/// Releases a backbone. NULL is ignored.
///
/// # Safety
/// `backbone` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fm_backbone_free(backbone: *mut FmBackbone) {
    if !backbone.is_null() {
        drop(Box::from_raw(backbone));
    }
}

/// Loads a classifier checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fm_classifier_load(path: *const c_char, out: *mut *mut FmClassifier) -> FmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = into_raw(FmClassifier(ClassifierCheckpoint::load(&path_arg(path, "path")?)?));
        Ok(())
    })
}

/// Label and fake-probability of one embedding point.
///
/// # Safety
/// `classifier` must be a live handle, `point` readable for `dim` doubles, and `label`
/// and `score` writable.
#[no_mangle]
pub unsafe extern "C" fn fm_classifier_predict(
    classifier: *const FmClassifier,
    point: *const f64,
    dim: usize,
    label: *mut u8,
    score: *mut f64,
) -> FmStatus {
    guard(|| {
        let c = &handle(classifier, "classifier")?.0.classifier;
        let p = EmbeddingPoint::new(slice_arg(point, dim, "point")?.to_vec());
        let (l, s) = c.predict(&p)?;
        *out_arg(label, "label")? = l.as_int();
        *out_arg(score, "score")? = s;
        Ok(())
    })
}

/// Releases a classifier. NULL is ignored.
///
/// # Safety
/// `classifier` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fm_classifier_free(classifier: *mut FmClassifier) {
    if !classifier.is_null() {
        drop(Box::from_raw(classifier));
    }
}

/// Runs an experiment plan file end to end. `seed` replaces the plan's seed when
/// `override_seed` is non-zero.
///
/// # Safety
/// `plan_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fm_run_plan(
    plan_path: *const c_char,
    override_seed: u8,
    seed: u64,
    overwrite: u8,
) -> FmStatus {
    guard(|| {
        let mut plan = ExperimentPlan::load(&path_arg(plan_path, "plan_path")?)?;
        if override_seed != 0 {
            plan.config.seed = seed;
        }
        run_pipeline(&plan, overwrite != 0)?;
        Ok(())
    })
}
