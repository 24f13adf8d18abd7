//! C ABI for the acsp pruning engine.
//!
//! Conventions shared by every function:
//!
//! - Fallible functions return an [`AcspStatus`]. On anything other than
//!   `ACSP_STATUS_OK`, [`acsp_last_error_message`] describes the failure on the
//!   calling thread.
//! - Datasets, models and plans are opaque handles. Handles returned through an
//!   out-pointer belong to the caller and are released with the matching
//!   `*_free` function. Out-handles are set to NULL when a call fails.
//! - Variable-length results are copied into caller buffers. `*out_len` always
//!   receives the required length; a buffer shorter than that yields
//!   `ACSP_STATUS_BUFFER_TOO_SMALL`, so passing a capacity of 0 queries the size.
//! - Handles may be read from several threads at once. Calls that modify a
//!   handle (`acsp_model_train`) need exclusive access.
//! - Panics never cross the boundary; they surface as `ACSP_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use acsp::datagen::{generate, DataKind, GenParams};
use acsp::planner::{prune_model, select_components, PruneConfig, SelectionMode};
use acsp::tensio::{
    read_dataset, read_model, read_plan, write_dataset, write_model, write_plan, ActivationTensor,
    ComponentKind, LabeledDataset, PruningPlan,
};
use acsp::toynet::{apply_prune, arch, count_flops, train, CapturePoint, ToyModel, TrainConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcspStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// Malformed or incompatible file, plan or dataset.
    Format = 4,
    /// Architecture string could not be parsed.
    Parse = 5,
    BadParams = 6,
    ShapeMismatch = 7,
    NonFinite = 8,
    Divergence = 9,
    /// Clustering or knee detection rejected its input.
    Selection = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcspDataKind {
    Blobs = 0,
    Rings = 1,
}

#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcspSelection {
    Regular = 0,
    Weighted = 1,
}

#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcspCapture {
    PostActivation = 0,
    PreActivation = 1,
}

/// Opaque labeled dataset.
pub struct AcspDataset(LabeledDataset);

/// Opaque toy network.
pub struct AcspModel(ToyModel);

/// Opaque pruning plan.
pub struct AcspPlan(PruningPlan);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcspTrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

/// Enum-valued fields hold the numeric value of the matching `Acsp*` enum.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcspPruneOptions {
    pub degree: usize,
    pub selection: u32,
    pub stride: usize,
    pub ft_fraction: f64,
    pub ft_epochs: usize,
    /// Values <= 0 select a tenth of the model's training learning rate.
    pub ft_lr: f64,
    pub ft_batch_size: usize,
    pub freeze_upstream: bool,
    pub capture: u32,
    pub seed: u64,
}

enum Failure {
    Core(acsp::Error),
    Null(&'static str),
    Utf8(&'static str),
    Buffer { needed: usize, capacity: usize },
    Invalid(String),
}

impl From<acsp::Error> for Failure {
    fn from(e: acsp::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn describe(self) -> (AcspStatus, String) {
        match self {
            Failure::Core(e) => {
                let status = match e.kind() {
                    "Io" => AcspStatus::Io,
                    "ParseError" => AcspStatus::Parse,
                    "BadParams" => AcspStatus::BadParams,
                    "ShapeMismatch" | "NotPrunableLayer" => AcspStatus::ShapeMismatch,
                    "NonFiniteValue" => AcspStatus::NonFinite,
                    "Divergence" => AcspStatus::Divergence,
                    "BadK" | "BadRange" | "Underdetermined" | "TooFewPoints" => AcspStatus::Selection,
                    _ => AcspStatus::Format,
                };
                (status, e.to_string())
            }
            Failure::Null(name) => (AcspStatus::NullArgument, format!("{name} is NULL")),
            Failure::Utf8(name) => (AcspStatus::InvalidUtf8, format!("{name} is not valid UTF-8")),
            Failure::Buffer { needed, capacity } => (
                AcspStatus::BufferTooSmall,
                format!("buffer holds {capacity} values, {needed} needed"),
            ),
            Failure::Invalid(msg) => (AcspStatus::BadParams, msg),
        }
    }
}

type Outcome = Result<(), Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Outcome) -> AcspStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AcspStatus::Ok,
        Ok(Err(fail)) => {
            let (status, msg) = fail.describe();
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            AcspStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn text<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(name))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Writes `value` through `out` when the caller asked for it.
unsafe fn put<T>(out: *mut T, value: T) {
    if !out.is_null() {
        out.write(value);
    }
}

unsafe fn put_required<T>(out: *mut T, value: T, name: &'static str) -> Outcome {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    out.write(value);
    Ok(())
}

/// Nulls an out-handle up front so it is NULL on every failure path.
unsafe fn reset_handle<T>(out: *mut *mut T, name: &'static str) -> Outcome {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    out.write(ptr::null_mut());
    Ok(())
}

unsafe fn give<T>(out: *mut *mut T, value: T) {
    out.write(Box::into_raw(Box::new(value)));
}

unsafe fn copy_out<T: Copy>(values: &[T], buf: *mut T, capacity: usize, out_len: *mut usize) -> Outcome {
    put_required(out_len, values.len(), "out_len")?;
    if capacity < values.len() {
        return Err(Failure::Buffer {
            needed: values.len(),
            capacity,
        });
    }
    if !values.is_empty() {
        if buf.is_null() {
            return Err(Failure::Null("buffer"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    }
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn prune_config(o: &AcspPruneOptions) -> Result<PruneConfig, Failure> {
    let selection = match o.selection {
        x if x == AcspSelection::Regular as u32 => SelectionMode::Regular,
        x if x == AcspSelection::Weighted as u32 => SelectionMode::Weighted,
        other => return Err(Failure::Invalid(format!("unknown selection mode {other}"))),
    };
    let capture = match o.capture {
        x if x == AcspCapture::PostActivation as u32 => CapturePoint::PostActivation,
        x if x == AcspCapture::PreActivation as u32 => CapturePoint::PreActivation,
        other => return Err(Failure::Invalid(format!("unknown capture point {other}"))),
    };
    Ok(PruneConfig {
        degree: o.degree,
        selection,
        stride: o.stride,
        ft_fraction: o.ft_fraction,
        ft_epochs: o.ft_epochs,
        ft_lr: (o.ft_lr > 0.0).then_some(o.ft_lr),
        ft_batch_size: o.ft_batch_size,
        freeze_upstream: o.freeze_upstream,
        capture,
        seed: o.seed,
    })
}

fn capture_point(c: u32) -> Result<CapturePoint, Failure> {
    prune_config(&AcspPruneOptions {
        capture: c,
        ..acsp_prune_options_default()
    })
    .map(|cfg| cfg.capture)
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn acsp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Static name of a status code, e.g. `"BufferTooSmall"`.
#[no_mangle]
pub extern "C" fn acsp_status_name(status: i32) -> *const c_char {
    let name: &'static str = match status {
        0 => "Ok\0",
        1 => "NullArgument\0",
        2 => "InvalidUtf8\0",
        3 => "Io\0",
        4 => "Format\0",
        5 => "Parse\0",
        6 => "BadParams\0",
        7 => "ShapeMismatch\0",
        8 => "NonFinite\0",
        9 => "Divergence\0",
        10 => "Selection\0",
        11 => "BufferTooSmall\0",
        12 => "Panic\0",
        _ => "Unknown\0",
    };
    name.as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if the last call
/// succeeded. Valid until the next acsp call on the same thread.
#[no_mangle]
pub extern "C" fn acsp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

// ---- datasets ----

#[no_mangle]
pub unsafe extern "C" fn acsp_dataset_generate(
    kind: u32,
    n: usize,
    classes: usize,
    dims: usize,
    seed: u64,
    out: *mut *mut AcspDataset,
) -> AcspStatus {
    guard(|| {
        reset_handle(out, "out")?;
        let kind = match kind {
            x if x == AcspDataKind::Blobs as u32 => DataKind::Blobs,
            x if x == AcspDataKind::Rings as u32 => DataKind::Rings,
            other => return Err(Failure::Invalid(format!("unknown dataset kind {other}"))),
        };
        let ds = generate(&GenParams {
            kind,
            n,
            classes,
            dims,
            seed,
        })?;
        give(out, AcspDataset(ds));
        Ok(())
    })
}

/// Builds a dataset of flat feature vectors from `n_samples * width`
/// row-major floats and `n_samples` labels. Both buffers are copied.
#[no_mangle]
pub unsafe extern "C" fn acsp_dataset_from_buffers(
    samples: *const f32,
    labels: *const u32,
    n_samples: usize,
    width: usize,
    out: *mut *mut AcspDataset,
) -> AcspStatus {
    guard(|| {
        reset_handle(out, "out")?;
        let len = n_samples
            .checked_mul(width)
            .ok_or_else(|| Failure::Invalid("n_samples * width overflows".into()))?;
        let samples = slice(samples, len, "samples")?.to_vec();
        let labels = slice(labels, n_samples, "labels")?.to_vec();
        let ds = LabeledDataset::new(vec![width], samples, labels)?;
        give(out, AcspDataset(ds));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn acsp_dataset_read(path: *const c_char, out: *mut *mut AcspDataset) -> AcspStatus {
    guard(|| {
        reset_handle(out, "out")?;
        let ds = read_dataset(text(path, "path")?)?;
        give(out, AcspDataset(ds));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn acsp_dataset_write(data: *const AcspDataset, path: *const c_char) -> AcspStatus {
    guard(|| {
        write_dataset(&borrow(data, "data")?.0, text(path, "path")?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn acsp_dataset_len(data: *const AcspDataset, out_len: *mut usize) -> AcspStatus {
    guard(|| put_required(out_len, borrow(data, "data")?.0.len(), "out_len"))
}

#[no_mangle]
pub unsafe extern "C" fn acsp_dataset_num_classes(
    data: *const AcspDataset,
    out_classes: *mut usize,
) -> AcspStatus {
    guard(|| put_required(out_classes, borrow(data, "data")?.0.num_classes(), "out_classes"))
}

/// Releases a dataset. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn acsp_dataset_free(data: *mut AcspDataset) {
    free(data)
}

// ---- models ----

/// Fresh model with seeded initial weights, from an architecture string such
/// as `"mlp:2-64-64-32-4"`.
#[no_mangle]
pub unsafe extern "C" fn acsp_model_new(
    arch_spec: *const c_char,
    seed: u64,
    out: *mut *mut AcspModel,
) -> AcspStatus {
    guard(|| {
        reset_handle(out, "out")?;
        let a = arch::parse(text(arch_spec, "arch_spec")?)?;
        give(out, AcspModel(ToyModel::new(a.input, &a.layers, seed)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn acsp_model_read(path: *const c_char, out: *mut *mut AcspModel) -> AcspStatus {
    guard(|| {
        reset_handle(out, "out")?;
        let m = read_model(text(path, "path")?)?;
        give(out, AcspModel(m));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn acsp_model_write(model: *const AcspModel, path: *const c_char) -> AcspStatus {
    guard(|| {
        write_model(&borrow(model, "model")?.0, text(path, "path")?)?;
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn acsp_model_free(model: *mut AcspModel) {
    free(model)
}

#[no_mangle]
pub extern "C" fn acsp_train_options_default() -> AcspTrainOptions {
    let d = TrainConfig::default();
    AcspTrainOptions {
        epochs: d.epochs,
        lr: d.lr,
        batch_size: d.batch_size,
        seed: d.seed,
    }
}

/// Trains `model` in place. `out_accuracy` (may be NULL) receives the
/// accuracy on `data` after the last epoch. The model is left untouched on
/// failure.
#[no_mangle]
pub unsafe extern "C" fn acsp_model_train(
    model: *mut AcspModel,
    data: *const AcspDataset,
    options: *const AcspTrainOptions,
    out_accuracy: *mut f64,
) -> AcspStatus {
    guard(|| {
        let model = borrow_mut(model, "model")?;
        let data = &borrow(data, "data")?.0;
        let o = borrow(options, "options")?;
        let cfg = TrainConfig {
            epochs: o.epochs,
            lr: o.lr,
            batch_size: o.batch_size,
            seed: o.seed,
            frozen_below: 0,
        };
        let (trained, log) = train(&model.0, data, &cfg)?;
        model.0 = trained;
        put(out_accuracy, log.last().map_or(f64::NAN, |e| e.accuracy));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn acsp_model_accuracy(
    model: *const AcspModel,
    data: *const AcspDataset,
    out_accuracy: *mut f64,
) -> AcspStatus {
    guard(|| {
        let acc = borrow(model, "model")?.0.accuracy(&borrow(data, "data")?.0)?;
        put_required(out_accuracy, acc, "out_accuracy")
    })
}

/// Forward-pass FLOPs, counting two per multiply-accumulate and ignoring biases.
#[no_mangle]
pub unsafe extern "C" fn acsp_model_flops(model: *const AcspModel, out_flops: *mut u64) -> AcspStatus {
    guard(|| {
        let total = count_flops(&borrow(model, "model")?.0).total;
        put_required(out_flops, total as u64, "out_flops")
    })
}

/// Layer indices that can be pruned, in forward order.
#[no_mangle]
pub unsafe extern "C" fn acsp_model_prunable_layers(
    model: *const AcspModel,
    out_ids: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> AcspStatus {
    guard(|| {
        copy_out(
            &borrow(model, "model")?.0.prunable_layers(),
            out_ids,
            capacity,
            out_len,
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn acsp_model_num_components(
    model: *const AcspModel,
    layer_id: usize,
    out_components: *mut usize,
) -> AcspStatus {
    guard(|| {
        let n = borrow(model, "model")?.0.n_components(layer_id)?;
        put_required(out_components, n, "out_components")
    })
}

/// L2 norm of each component's incoming weights in `layer_id`.
#[no_mangle]
pub unsafe extern "C" fn acsp_model_component_norms(
    model: *const AcspModel,
    layer_id: usize,
    out_norms: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> AcspStatus {
    guard(|| {
        let norms = acsp::planner::component_norms(&borrow(model, "model")?.0, layer_id)?;
        copy_out(&norms, out_norms, capacity, out_len)
    })
}

/// Activations of `layer_id` over `data`, laid out
/// `[n_samples][n_components][p][p]`. `out_n_components` and `out_p` (may be
/// NULL) are filled even when the buffer is too small.
#[no_mangle]
pub unsafe extern "C" fn acsp_model_capture(
    model: *const AcspModel,
    data: *const AcspDataset,
    layer_id: usize,
    capture: u32,
    out_values: *mut f32,
    capacity: usize,
    out_len: *mut usize,
    out_n_components: *mut usize,
    out_p: *mut usize,
) -> AcspStatus {
    guard(|| {
        let model = &borrow(model, "model")?.0;
        let act = model.capture_activations(&borrow(data, "data")?.0, layer_id, capture_point(capture)?)?;
        put(out_n_components, act.n_components);
        put(out_p, act.p);
        copy_out(&act.values, out_values, capacity, out_len)
    })
}

// ---- selection and pruning ----

#[no_mangle]
pub extern "C" fn acsp_prune_options_default() -> AcspPruneOptions {
    let d = PruneConfig::default();
    AcspPruneOptions {
        degree: d.degree,
        selection: match d.selection {
            SelectionMode::Regular => AcspSelection::Regular as u32,
            SelectionMode::Weighted => AcspSelection::Weighted as u32,
        },
        stride: d.stride,
        ft_fraction: d.ft_fraction,
        ft_epochs: d.ft_epochs,
        ft_lr: d.ft_lr.unwrap_or(0.0),
        ft_batch_size: d.ft_batch_size,
        freeze_upstream: d.freeze_upstream,
        capture: match d.capture {
            CapturePoint::PostActivation => AcspCapture::PostActivation as u32,
            CapturePoint::PreActivation => AcspCapture::PreActivation as u32,
        },
        seed: d.seed,
    }
}

/// Chooses which components of one layer to keep, from activations supplied
/// by the caller in the layout of [`acsp_model_capture`]. `p` is 1 for dense
/// layers. `norms` holds `n_components` incoming-weight norms and may be NULL
/// in regular mode. Only the selection fields of `options` are read. The kept
/// indices are written in increasing order; when no knee is found every
/// component is kept.
#[no_mangle]
pub unsafe extern "C" fn acsp_select_components(
    values: *const f32,
    labels: *const u32,
    n_samples: usize,
    n_components: usize,
    p: usize,
    norms: *const f64,
    options: *const AcspPruneOptions,
    out_kept: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> AcspStatus {
    guard(|| {
        let cfg = prune_config(borrow(options, "options")?)?;
        let len = [n_samples, n_components, p, p]
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Failure::Invalid("activation size overflows".into()))?;
        let norms = match (norms.is_null(), cfg.selection) {
            (true, SelectionMode::Weighted) => {
                return Err(Failure::Null("norms (required in weighted mode)"))
            }
            (true, SelectionMode::Regular) => &[][..],
            (false, _) => slice(norms, n_components, "norms")?,
        };
        let act = ActivationTensor::new(
            0,
            if p == 1 {
                ComponentKind::Linear
            } else {
                ComponentKind::Conv
            },
            n_components,
            p,
            slice(values, len, "values")?.to_vec(),
            slice(labels, n_samples, "labels")?.to_vec(),
        )?;
        let sel = select_components(&act, norms, &cfg)?;
        copy_out(&sel.kept, out_kept, capacity, out_len)
    })
}

/// Prunes every prunable layer of `model` in turn, fine-tuning after each.
/// The input model is not modified.
#[no_mangle]
pub unsafe extern "C" fn acsp_prune(
    model: *const AcspModel,
    data: *const AcspDataset,
    options: *const AcspPruneOptions,
    out_model: *mut *mut AcspModel,
    out_plan: *mut *mut AcspPlan,
) -> AcspStatus {
    guard(|| {
        reset_handle(out_model, "out_model")?;
        reset_handle(out_plan, "out_plan")?;
        let cfg = prune_config(borrow(options, "options")?)?;
        let outcome = prune_model(&borrow(model, "model")?.0, &borrow(data, "data")?.0, &cfg)?;
        let plan = outcome.plan();
        give(out_model, AcspModel(outcome.model));
        give(out_plan, AcspPlan(plan));
        Ok(())
    })
}

// ---- plans ----

#[no_mangle]
pub unsafe extern "C" fn acsp_plan_read(path: *const c_char, out: *mut *mut AcspPlan) -> AcspStatus {
    guard(|| {
        reset_handle(out, "out")?;
        let plan = read_plan(text(path, "path")?)?;
        give(out, AcspPlan(plan));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn acsp_plan_write(plan: *const AcspPlan, path: *const c_char) -> AcspStatus {
    guard(|| {
        write_plan(&borrow(plan, "plan")?.0, text(path, "path")?)?;
        Ok(())
    })
}

/// Releases a plan. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn acsp_plan_free(plan: *mut AcspPlan) {
    free(plan)
}

/// Structurally removes the components `plan` drops, without fine-tuning.
#[no_mangle]
pub unsafe extern "C" fn acsp_plan_apply(
    model: *const AcspModel,
    plan: *const AcspPlan,
    out_model: *mut *mut AcspModel,
) -> AcspStatus {
    guard(|| {
        reset_handle(out_model, "out_model")?;
        let pruned = apply_prune(&borrow(model, "model")?.0, &borrow(plan, "plan")?.0)?;
        give(out_model, AcspModel(pruned));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn acsp_plan_num_layers(plan: *const AcspPlan, out_layers: *mut usize) -> AcspStatus {
    guard(|| put_required(out_layers, borrow(plan, "plan")?.0.layers.len(), "out_layers"))
}

/// Entry `index` of the plan. `out_layer_id` and `out_n_components` (may be
/// NULL) are filled even when the kept buffer is too small.
#[no_mangle]
pub unsafe extern "C" fn acsp_plan_layer(
    plan: *const AcspPlan,
    index: usize,
    out_layer_id: *mut usize,
    out_n_components: *mut usize,
    out_kept: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> AcspStatus {
    guard(|| {
        let plan = &borrow(plan, "plan")?.0;
        let entry = plan.layers.get(index).ok_or_else(|| {
            Failure::Invalid(format!(
                "plan has {} layers, index {index} requested",
                plan.layers.len()
            ))
        })?;
        put(out_layer_id, entry.layer_id);
        put(out_n_components, entry.n_components);
        copy_out(&entry.kept_indices, out_kept, capacity, out_len)
    })
}
