//! C ABI over the gamc library.
//!
//! Every fallible call returns a [`GamcStatus`]; on failure the message is
//! available from [`gamc_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use gamc::encoder::embed_all;
use gamc::objective::Ablation;
use gamc::synth::{generate, SynthConfig};
use gamc::{Dataset, GamcError, ModelParams, TrainConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GamcStatus {
    Ok = 0,
    InvalidArgument = 1,
    DataError = 2,
    NumericError = 3,
    Panic = 4,
}

pub const GAMC_ABLATION_FULL: u32 = 0;
pub const GAMC_ABLATION_NO_AUG: u32 = 1;
pub const GAMC_ABLATION_NO_REC: u32 = 2;
pub const GAMC_ABLATION_NO_CON: u32 = 3;

/// A loaded or generated set of propagation graphs.
pub struct GamcDataset {
    inner: Dataset,
}

/// Trained or loaded model parameters.
pub struct GamcModel {
    inner: ModelParams,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GamcTrainConfig {
    pub epochs: u32,
    pub lr: f64,
    pub alpha: f64,
    pub mask_rate: f64,
    pub edge_drop_rate: f64,
    pub hidden_dim: u32,
    pub decoder_layers: u32,
    pub batch_size: u32,
    pub seed: u64,
    /// One of the `GAMC_ABLATION_*` constants.
    pub ablation: u32,
    /// Nonzero to draw augmented views once instead of every epoch.
    pub static_views: u8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GamcDatasetStats {
    pub news: usize,
    pub fake: usize,
    pub real: usize,
    pub unlabeled: usize,
    pub nodes: usize,
    pub edges: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &GamcError) -> GamcStatus {
    match e.exit_code() {
        1 => GamcStatus::InvalidArgument,
        2 => GamcStatus::DataError,
        _ => GamcStatus::NumericError,
    }
}

struct Failure(GamcStatus, String);

impl From<GamcError> for Failure {
    fn from(e: GamcError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(GamcStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GamcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GamcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GamcStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(invalid("path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn out_arg<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gamc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gamc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads an NDJSON dataset.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gamc_dataset_load(path: *const c_char, out: *mut *mut GamcDataset) -> GamcStatus {
    guard(|| {
        let path = path_arg(path)?;
        let inner = gamc::load_dataset(path)?;
        out_arg(out, GamcDataset { inner })
    })
}

/// Writes a dataset as NDJSON.
///
/// # Safety
/// `ds` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gamc_dataset_save(ds: *const GamcDataset, path: *const c_char) -> GamcStatus {
    guard(|| {
        let ds = ref_arg(ds, "dataset")?;
        gamc::save_dataset(&ds.inner, path_arg(path)?)?;
        Ok(())
    })
}

/// Generates a balanced synthetic dataset whose class centers are
/// `separation` noise deviations apart.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gamc_synth_generate(
    num_graphs: usize,
    feature_dim: usize,
    separation: f64,
    seed: u64,
    out: *mut *mut GamcDataset,
) -> GamcStatus {
    guard(|| {
        let cfg = SynthConfig::with_separation(num_graphs, feature_dim, separation, seed);
        out_arg(out, GamcDataset { inner: generate(&cfg)? })
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gamc_dataset_free(ds: *mut GamcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of graphs; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gamc_dataset_len(ds: *const GamcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Node feature width; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gamc_dataset_feature_dim(ds: *const GamcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.feature_dim())
}

/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gamc_dataset_stats(ds: *const GamcDataset, out: *mut GamcDatasetStats) -> GamcStatus {
    guard(|| {
        let s = ref_arg(ds, "dataset")?.inner.stats();
        let out = out.as_mut().ok_or_else(|| invalid("output pointer is null"))?;
        *out = GamcDatasetStats {
            news: s.news,
            fake: s.fake,
            real: s.real,
            unlabeled: s.unlabeled,
            nodes: s.nodes,
            edges: s.edges,
        };
        Ok(())
    })
}

/// Default training hyperparameters.
#[no_mangle]
pub extern "C" fn gamc_train_config_default() -> GamcTrainConfig {
    let d = TrainConfig::default();
    GamcTrainConfig {
        epochs: d.epochs as u32,
        lr: d.lr,
        alpha: d.alpha,
        mask_rate: d.mask_rate,
        edge_drop_rate: d.edge_drop_rate,
        hidden_dim: d.hidden_dim as u32,
        decoder_layers: d.decoder_layers as u32,
        batch_size: d.batch_size as u32,
        seed: d.seed,
        ablation: GAMC_ABLATION_FULL,
        static_views: 0,
    }
}

fn train_config(c: &GamcTrainConfig) -> Result<TrainConfig, Failure> {
    let ablation = match c.ablation {
        GAMC_ABLATION_FULL => Ablation::Full,
        GAMC_ABLATION_NO_AUG => Ablation::NoAug,
        GAMC_ABLATION_NO_REC => Ablation::NoRec,
        GAMC_ABLATION_NO_CON => Ablation::NoCon,
        other => return Err(invalid(&format!("unknown ablation code {other}"))),
    };
    Ok(TrainConfig {
        epochs: c.epochs as usize,
        lr: c.lr,
        alpha: c.alpha,
        mask_rate: c.mask_rate,
        edge_drop_rate: c.edge_drop_rate,
        hidden_dim: c.hidden_dim as usize,
        decoder_layers: c.decoder_layers as usize,
        batch_size: c.batch_size as usize,
        seed: c.seed,
        ablation,
        static_views: c.static_views != 0,
        ..TrainConfig::default()
    })
}

/// Trains a model on `ds` (labels are ignored).
///
/// # Safety
/// `ds` and `cfg` must be valid pointers and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gamc_train(
    ds: *const GamcDataset,
    cfg: *const GamcTrainConfig,
    out: *mut *mut GamcModel,
) -> GamcStatus {
    guard(|| {
        let ds = ref_arg(ds, "dataset")?;
        let cfg = train_config(ref_arg(cfg, "config")?)?;
        let (inner, _) = gamc::train(&cfg, &ds.inner)?;
        out_arg(out, GamcModel { inner })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gamc_model_load(path: *const c_char, out: *mut *mut GamcModel) -> GamcStatus {
    guard(|| {
        let inner = gamc::load_checkpoint(path_arg(path)?)?;
        out_arg(out, GamcModel { inner })
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gamc_model_save(model: *const GamcModel, path: *const c_char) -> GamcStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        gamc::save_checkpoint(&model.inner, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gamc_model_free(model: *mut GamcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding width; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gamc_model_hidden_dim(model: *const GamcModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.hidden_dim())
}

/// Writes one embedding per graph, row-major, into `out`, which must hold
/// `gamc_dataset_len(ds) * gamc_model_hidden_dim(model)` doubles.
///
/// # Safety
/// `out` must point to at least `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gamc_embed(
    model: *const GamcModel,
    ds: *const GamcDataset,
    out: *mut f64,
    out_len: usize,
) -> GamcStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let ds = ref_arg(ds, "dataset")?;
        let dim = model.inner.hidden_dim();
        let need = ds.inner.len() * dim;
        if out.is_null() || out_len < need {
            return Err(invalid(&format!("output buffer needs {need} doubles, got {out_len}")));
        }
        let emb = embed_all(&model.inner.encoder, ds.inner.graphs(), 64)?;
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (row, e) in dst.chunks_exact_mut(dim).zip(&emb) {
            row.copy_from_slice(e.as_slice());
        }
        Ok(())
    })
}
