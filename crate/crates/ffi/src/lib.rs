//! C ABI over the twinbeam library.
//!
//! Objects cross the boundary as opaque handles created by `tb_*_new`/`tb_*_from_*`
//! functions and released with the matching `tb_*_free`. Every fallible call
//! returns a [`TbStatus`]; on failure a message is kept per thread and can be
//! read with [`tb_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use twinbeam::cli::builtin::builtin_scene;
use twinbeam::cli::io;
use twinbeam::eval::evaluate_codebook;
use twinbeam::mimo::{dft_codebook, ArrayConfig, Codebook, LinkBudget};
use twinbeam::pipeline::{learn, Learned, PipelineConfig};
use twinbeam::scene::{generate_dataset, ChannelDataset, FidelityKnobs, Scene};
use twinbeam::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    DataError = 4,
    RuntimeError = 5,
    /// Output buffer too small; the required size was still reported.
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Opaque scene handle.
pub struct TbScene(Scene);
/// Opaque channel dataset handle.
pub struct TbDataset(ChannelDataset);
/// Opaque codebook handle.
pub struct TbCodebook(Codebook);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> TbStatus {
    match e {
        Error::Config(_) => TbStatus::ConfigError,
        Error::Parse { .. } | Error::Io { .. } | Error::UserSetMismatch { .. } => {
            TbStatus::DataError
        }
        Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::Empty(_)
        | Error::OutsideGrid { .. } => TbStatus::InvalidArgument,
        _ => TbStatus::RuntimeError,
    }
}

struct Fail(TbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(TbStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus thread-local message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TbStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TbStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees a valid NUL-terminated string.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| {
        Fail(
            TbStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: caller passes a live handle from this library or null.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

fn put<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: `out` is non-null and points to writable storage per the contract.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Copies `text` plus a NUL into `buf`. `needed` (if non-null) receives the
/// full size including the NUL.
unsafe fn write_string(
    text: &str,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> Result<(), Fail> {
    let n = text.len() + 1;
    if !needed.is_null() {
        // SAFETY: non-null out-pointer per the contract.
        unsafe { *needed = n };
    }
    if buf.is_null() || cap < n {
        return Err(Fail(
            TbStatus::BufferTooSmall,
            format!("buffer holds {cap} bytes, {n} needed"),
        ));
    }
    // SAFETY: `buf` has room for `n` bytes.
    unsafe {
        ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
        *buf.add(text.len()) = 0;
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

// ---- scenes ----

/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_scene_builtin(name: *const c_char, out: *mut *mut TbScene) -> TbStatus {
    guard(|| {
        let name = unsafe { str_arg(name, "name")? };
        put(out, TbScene(builtin_scene(name)?), "out")
    })
}

/// Parses and validates a scene from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_scene_from_json(
    json: *const c_char,
    out: *mut *mut TbScene,
) -> TbStatus {
    guard(|| {
        let text = unsafe { str_arg(json, "json")? };
        put(out, TbScene(io::parse_scene(text, "<ffi>")?), "out")
    })
}

/// Canonical JSON of the scene into `buf`.
///
/// # Safety
/// `scene` must be a live handle; `buf` must hold `cap` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn tb_scene_to_json(
    scene: *const TbScene,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> TbStatus {
    guard(|| {
        let s = unsafe { handle(scene, "scene")? };
        unsafe { write_string(&io::scene_to_string(&s.0), buf, cap, needed) }
    })
}

/// # Safety
/// `scene` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_scene_free(scene: *mut TbScene) {
    if !scene.is_null() {
        // SAFETY: handle came from Box::into_raw in this library.
        drop(unsafe { Box::from_raw(scene) });
    }
}

// ---- datasets ----

/// Traces every grid point of `scene` for a half-wavelength array.
///
/// # Safety
/// `scene` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_dataset_generate(
    scene: *const TbScene,
    max_reflection_order: u32,
    geometry_noise_sigma: f64,
    num_antennas: usize,
    carrier_frequency_hz: f64,
    out: *mut *mut TbDataset,
) -> TbStatus {
    guard(|| {
        let s = unsafe { handle(scene, "scene")? };
        let knobs = FidelityKnobs {
            geometry_noise_sigma,
            ..FidelityKnobs::exact(max_reflection_order)
        };
        let array = ArrayConfig::half_wavelength(num_antennas, carrier_frequency_hz)?;
        let ds = generate_dataset(&s.0, &knobs, &array, &LinkBudget::default())?;
        put(out, TbDataset(ds), "out")
    })
}

/// # Safety
/// `ds` must be a live handle; the out-pointers must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn tb_dataset_counts(
    ds: *const TbDataset,
    users: *mut usize,
    los: *mut usize,
    outage: *mut usize,
) -> TbStatus {
    guard(|| {
        let d = &unsafe { handle(ds, "dataset")? }.0;
        for (p, v) in [
            (users, d.len()),
            (los, d.los_count()),
            (outage, d.outage_count()),
        ] {
            if !p.is_null() {
                // SAFETY: non-null out-pointer per the contract.
                unsafe { *p = v };
            }
        }
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_dataset_free(ds: *mut TbDataset) {
    if !ds.is_null() {
        // SAFETY: handle came from Box::into_raw in this library.
        drop(unsafe { Box::from_raw(ds) });
    }
}

// ---- codebooks ----

/// DFT grid of `n` beams for the dataset's array.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_codebook_dft(
    ds: *const TbDataset,
    n: usize,
    out: *mut *mut TbCodebook,
) -> TbStatus {
    guard(|| {
        let d = unsafe { handle(ds, "dataset")? };
        put(out, TbCodebook(dft_codebook(&d.0.array, n)?), "out")
    })
}

/// Clusters `ds` and learns one beam per cluster.
///
/// `pipeline_json` is a pipeline configuration object, or null for the
/// defaults of the dataset's array. Split mode yields the LoS beams followed
/// by the NLoS beams in one codebook.
///
/// # Safety
/// `ds` must be a live handle; `pipeline_json` null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tb_codebook_learn(
    ds: *const TbDataset,
    pipeline_json: *const c_char,
    out: *mut *mut TbCodebook,
) -> TbStatus {
    guard(|| {
        let d = unsafe { handle(ds, "dataset")? };
        let cfg: PipelineConfig = if pipeline_json.is_null() {
            PipelineConfig::for_array(d.0.array.num_antennas)
        } else {
            let text = unsafe { str_arg(pipeline_json, "pipeline_json")? };
            serde_json::from_str(text)
                .map_err(|e| Fail(TbStatus::ConfigError, format!("pipeline config: {e}")))?
        };
        let learned = learn(&d.0, &cfg)?;
        let cb = match learned {
            Learned::Single(g) => g.learned.codebook,
            Learned::Split { .. } => {
                let groups = learned.groups();
                let mut entries = Vec::new();
                let mut ps = None;
                for g in groups {
                    ps = g.learned.codebook.phase_set.clone();
                    entries.extend(g.learned.codebook.entries.iter().cloned());
                }
                Codebook::new(d.0.array, ps, entries)?
            }
        };
        put(out, TbCodebook(cb), "out")
    })
}

/// Parses a codebook file's JSON text.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_codebook_from_json(
    json: *const c_char,
    out: *mut *mut TbCodebook,
) -> TbStatus {
    guard(|| {
        let text = unsafe { str_arg(json, "json")? };
        put(out, TbCodebook(io::parse_codebook(text, "<ffi>")?), "out")
    })
}

/// # Safety
/// `cb` must be a live handle; `buf` must hold `cap` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn tb_codebook_to_json(
    cb: *const TbCodebook,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> TbStatus {
    guard(|| {
        let c = unsafe { handle(cb, "codebook")? };
        unsafe { write_string(&io::codebook_to_string(&c.0), buf, cap, needed) }
    })
}

/// Number of beams and antennas.
///
/// # Safety
/// `cb` must be a live handle; out-pointers writable or null.
#[no_mangle]
pub unsafe extern "C" fn tb_codebook_shape(
    cb: *const TbCodebook,
    beams: *mut usize,
    antennas: *mut usize,
) -> TbStatus {
    guard(|| {
        let c = &unsafe { handle(cb, "codebook")? }.0;
        for (p, v) in [(beams, c.len()), (antennas, c.array.num_antennas)] {
            if !p.is_null() {
                // SAFETY: non-null out-pointer per the contract.
                unsafe { *p = v };
            }
        }
        Ok(())
    })
}

/// Copies the phases (radians) of beam `index` into `phases[0..len]`.
///
/// # Safety
/// `cb` must be a live handle; `phases` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tb_codebook_beam_phases(
    cb: *const TbCodebook,
    index: usize,
    phases: *mut f64,
    len: usize,
) -> TbStatus {
    guard(|| {
        let c = &unsafe { handle(cb, "codebook")? }.0;
        let e = c.entries.get(index).ok_or_else(|| {
            Fail(
                TbStatus::InvalidArgument,
                format!("beam {index} out of range (have {})", c.len()),
            )
        })?;
        let p = e.beam.phases();
        if phases.is_null() {
            return Err(null("phases"));
        }
        if len < p.len() {
            return Err(Fail(
                TbStatus::BufferTooSmall,
                format!("need {} phases, buffer holds {len}", p.len()),
            ));
        }
        // SAFETY: `phases` holds at least `p.len()` doubles.
        unsafe { ptr::copy_nonoverlapping(p.as_ptr(), phases, p.len()) };
        Ok(())
    })
}

/// # Safety
/// `cb` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_codebook_free(cb: *mut TbCodebook) {
    if !cb.is_null() {
        // SAFETY: handle came from Box::into_raw in this library.
        drop(unsafe { Box::from_raw(cb) });
    }
}

// ---- evaluation ----

/// Best-beam SNR summary of `cb` over `ds`. `mean_db` is NaN when every user
/// is in outage.
///
/// # Safety
/// Handles must be live; out-pointers writable or null.
#[no_mangle]
pub unsafe extern "C" fn tb_evaluate(
    cb: *const TbCodebook,
    ds: *const TbDataset,
    mean_db: *mut f64,
    outage_frac: *mut f64,
) -> TbStatus {
    guard(|| {
        let c = unsafe { handle(cb, "codebook")? };
        let d = unsafe { handle(ds, "dataset")? };
        let r = evaluate_codebook(&c.0, &d.0, &d.0.link_budget)?;
        for (p, v) in [
            (mean_db, r.summary.mean_db.unwrap_or(f64::NAN)),
            (outage_frac, r.summary.outage_frac),
        ] {
            if !p.is_null() {
                // SAFETY: non-null out-pointer per the contract.
                unsafe { *p = v };
            }
        }
        Ok(())
    })
}
