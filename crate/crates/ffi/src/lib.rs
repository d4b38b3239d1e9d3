//! C ABI over `matrix_se`.
//!
//! Every function returns an [`MseStatus`]; on failure the message is
//! available from [`mse_last_error`] on the same thread. Models are opaque
//! [`MseModel`] handles released with [`mse_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use matrix_se::harness::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use matrix_se::harness::train::fresh_checkpoint;
use matrix_se::harness::TrainConfig;
use matrix_se::model::{argmax_rows, GridBatch};
use matrix_se::tasks::sudoku::{is_valid_solution, Board};
use matrix_se::tasks::TaskId;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MseStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numeric = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque model handle: parameters plus the configuration they were built with.
pub struct MseModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: MseStatus, msg: impl Into<String>) -> MseStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> MseStatus) -> MseStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(MseStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, MseStatus> {
    if p.is_null() {
        return Err(fail(MseStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MseStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn task_arg(p: *const c_char) -> Result<TaskId, MseStatus> {
    str_arg(p, "task")?
        .parse::<TaskId>()
        .map_err(|e| fail(MseStatus::InvalidArgument, e.to_string()))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn mse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a freshly initialised model for `task` with `maps` feature maps
/// and `blocks` Beneš blocks.
///
/// # Safety
/// `task` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mse_model_new(
    task: *const c_char,
    maps: usize,
    blocks: usize,
    seed: u64,
    out: *mut *mut MseModel,
) -> MseStatus {
    guard(|| {
        if out.is_null() {
            return fail(MseStatus::NullPointer, "out is null");
        }
        let task = tri!(task_arg(task));
        let config = TrainConfig {
            task,
            m: maps,
            blocks,
            seed,
            ..TrainConfig::default()
        };
        if let Err(e) = config.validate() {
            return fail(MseStatus::InvalidArgument, e.to_string());
        }
        *out = Box::into_raw(Box::new(MseModel {
            checkpoint: fresh_checkpoint(&config),
        }));
        MseStatus::Ok
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mse_model_load(path: *const c_char, out: *mut *mut MseModel) -> MseStatus {
    guard(|| {
        if out.is_null() {
            return fail(MseStatus::NullPointer, "out is null");
        }
        let path = PathBuf::from(tri!(str_arg(path, "path")));
        match load_checkpoint(&path) {
            Ok(checkpoint) => {
                *out = Box::into_raw(Box::new(MseModel { checkpoint }));
                MseStatus::Ok
            }
            Err(e @ matrix_se::harness::CheckpointError::Io { .. }) => fail(MseStatus::Io, e.to_string()),
            Err(e) => fail(MseStatus::Format, e.to_string()),
        }
    })
}

/// Writes the model as a checkpoint file.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mse_model_save(model: *const MseModel, path: *const c_char) -> MseStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(MseStatus::NullPointer, "model is null");
        };
        let path = PathBuf::from(tri!(str_arg(path, "path")));
        match save_checkpoint(&path, &model.checkpoint) {
            Ok(()) => MseStatus::Ok,
            Err(e) => fail(MseStatus::Io, e.to_string()),
        }
    })
}

/// Number of learnable scalars.
///
/// # Safety
/// `model` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mse_model_param_count(model: *const MseModel, out: *mut usize) -> MseStatus {
    guard(|| {
        let (Some(model), false) = (model.as_ref(), out.is_null()) else {
            return fail(MseStatus::NullPointer, "null argument");
        };
        *out = model.checkpoint.params.param_count();
        MseStatus::Ok
    })
}

/// Input and output vocabulary sizes of the model.
///
/// # Safety
/// `model` must come from this library; both outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mse_model_vocab(
    model: *const MseModel,
    vocab_in: *mut usize,
    vocab_out: *mut usize,
) -> MseStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(MseStatus::NullPointer, "model is null");
        };
        if vocab_in.is_null() || vocab_out.is_null() {
            return fail(MseStatus::NullPointer, "null output");
        }
        *vocab_in = model.checkpoint.params.vocab_in;
        *vocab_out = model.checkpoint.params.vocab_out;
        MseStatus::Ok
    })
}

/// Predicts the output symbol of every cell for `batch` grids of
/// `side` x `side` cells laid out row-major one after another. `side` must
/// be a power of two; `cells` and `out` hold `batch * side * side` entries.
///
/// # Safety
/// `model` must come from this library; the buffers must be valid for the
/// stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mse_model_predict(
    model: *const MseModel,
    side: usize,
    batch: usize,
    cells: *const u32,
    out: *mut u32,
) -> MseStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(MseStatus::NullPointer, "model is null");
        };
        if cells.is_null() || out.is_null() {
            return fail(MseStatus::NullPointer, "null buffer");
        }
        if batch == 0 || side < 2 || !side.is_power_of_two() {
            return fail(MseStatus::InvalidArgument, "side must be a power of two >= 2 and batch > 0");
        }
        let n = side * side;
        let input = std::slice::from_raw_parts(cells, batch * n);
        let grids: Vec<&[u32]> = input.chunks(n).collect();
        let grid = match GridBatch::new(side, &grids) {
            Ok(g) => g,
            Err(e) => return fail(MseStatus::InvalidArgument, e.to_string()),
        };
        let params = &model.checkpoint.params;
        let steps = model.checkpoint.config.recurrent_steps;
        let logits = if steps > 1 {
            params.recurrent_logits(&grid, steps)
        } else {
            params.logits(&grid)
        };
        let logits = match logits {
            Ok(l) => l,
            Err(e) => return fail(MseStatus::InvalidArgument, e.to_string()),
        };
        if !logits.all_finite() {
            return fail(MseStatus::Numeric, "non-finite logits");
        }
        let dst = std::slice::from_raw_parts_mut(out, batch * n);
        for (d, p) in dst.iter_mut().zip(argmax_rows(&logits)) {
            *d = p as u32;
        }
        MseStatus::Ok
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mse_model_free(model: *mut MseModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Grid side used for a task instance of size `n` (the next power of two).
///
/// # Safety
/// `task` must be NUL-terminated and `side` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mse_task_side(task: *const c_char, n: usize, side: *mut usize) -> MseStatus {
    guard(|| {
        if side.is_null() {
            return fail(MseStatus::NullPointer, "side is null");
        }
        let task = tri!(task_arg(task));
        match task.generate(n, 0) {
            Ok(inst) => {
                *side = inst.side();
                MseStatus::Ok
            }
            Err(e) => fail(MseStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Generates one instance. Each buffer holds `capacity` entries, which must
/// be at least `side * side` as reported by [`mse_task_side`].
///
/// # Safety
/// `task` must be NUL-terminated; buffers must be valid for `capacity`.
#[no_mangle]
pub unsafe extern "C" fn mse_task_generate(
    task: *const c_char,
    n: usize,
    seed: u64,
    capacity: usize,
    input: *mut u32,
    target: *mut u32,
    mask: *mut u8,
) -> MseStatus {
    guard(|| {
        if input.is_null() || target.is_null() || mask.is_null() {
            return fail(MseStatus::NullPointer, "null buffer");
        }
        let task = tri!(task_arg(task));
        let inst = match task.generate(n, seed) {
            Ok(i) => i,
            Err(e) => return fail(MseStatus::InvalidArgument, e.to_string()),
        };
        let cells = inst.side() * inst.side();
        if capacity < cells {
            return fail(MseStatus::BufferTooSmall, format!("need {cells} cells"));
        }
        std::slice::from_raw_parts_mut(input, cells).copy_from_slice(inst.input.cells());
        std::slice::from_raw_parts_mut(target, cells).copy_from_slice(inst.target.cells());
        std::slice::from_raw_parts_mut(mask, cells).copy_from_slice(&inst.mask);
        MseStatus::Ok
    })
}

/// Checks a completed 9x9 board (row-major digits 1..9). Writes 1 to
/// `valid` when every row, column and box holds each digit once.
///
/// # Safety
/// `cells` must hold 81 bytes and `valid` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mse_sudoku_is_valid(cells: *const u8, valid: *mut i32) -> MseStatus {
    guard(|| {
        if cells.is_null() || valid.is_null() {
            return fail(MseStatus::NullPointer, "null argument");
        }
        let mut board: Board = [0; 81];
        board.copy_from_slice(std::slice::from_raw_parts(cells, 81));
        *valid = i32::from(is_valid_solution(&board));
        MseStatus::Ok
    })
}
