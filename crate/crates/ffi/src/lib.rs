//! C ABI for the speckflow toolkit: opaque grid handles, integer status
//! codes and a per-thread error message, mirroring the CLI's exit codes.
//!
//! Ownership rules: every `*mut SfGrid` returned through an out-parameter is
//! owned by the caller and must be released with `sf_grid_free`. Input
//! handles are only borrowed. All functions are safe to call from multiple
//! threads as long as a given grid is not freed while in use.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use speckflow::graph::PatchConfig;
use speckflow::io::{read_auto, write_auto};
use speckflow::metrics::{psnr, ssim, SsimConfig};
use speckflow::noise::{estimate_noise_h, gamma_speckle, GammaNoiseSpec};
use speckflow::pipeline::{denoise, DenoiseParams};
use speckflow::solver::{Mode, SolverConfig};
use speckflow::{Error, Grid};

/// Status codes; nonzero values match the CLI exit codes where applicable.
pub const SF_OK: c_int = 0;
/// Bad parameter value or degenerate input.
pub const SF_ERR_INVALID: c_int = 2;
/// File I/O or image format failure.
pub const SF_ERR_IO: c_int = 3;
/// NaN/Inf or positivity breakdown during iteration.
pub const SF_ERR_NUMERICAL: c_int = 4;
/// A required pointer argument was null.
pub const SF_ERR_NULL: c_int = 5;
/// Unexpected internal failure.
pub const SF_ERR_INTERNAL: c_int = 6;

/// Solver mode selectors for `SfDenoiseOptions::mode`.
pub const SF_MODE_COUPLED: c_int = 0;
pub const SF_MODE_TV_ONLY: c_int = 1;
pub const SF_MODE_NLTV_ONLY: c_int = 2;
pub const SF_MODE_SYMMETRIC: c_int = 3;
pub const SF_MODE_AA_BASELINE: c_int = 4;

/// Opaque grayscale image handle (row-major f64).
pub struct SfGrid(Grid);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let cleaned: Vec<u8> = msg.bytes().filter(|&b| b != 0).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(cleaned).unwrap());
    });
}

fn status_of(err: &Error) -> c_int {
    match err.exit_code() {
        2 => SF_ERR_INVALID,
        3 => SF_ERR_IO,
        4 => SF_ERR_NUMERICAL,
        _ => SF_ERR_INTERNAL,
    }
}

fn fail(err: Error) -> c_int {
    set_error(&err.to_string());
    status_of(&err)
}

fn null_arg(what: &str) -> c_int {
    set_error(&format!("null pointer: {what}"));
    SF_ERR_NULL
}

/// Run `body`, converting panics into SF_ERR_INTERNAL instead of unwinding
/// across the FFI boundary.
fn guarded(body: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            SF_ERR_INTERNAL
        }
    }
}

unsafe fn path_from(ptr: *const c_char) -> Result<&'static Path, c_int> {
    if ptr.is_null() {
        return Err(null_arg("path"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(SF_ERR_INVALID)
        }
    }
}

/// Message describing the most recent failure on this thread, or null if the
/// last call succeeded. The pointer stays valid until the next failing call
/// on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.as_ptr(),
        None => std::ptr::null(),
    })
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Create a grid from a row-major buffer of width*height doubles.
///
/// # Safety
/// `values` must point to at least `width * height` readable doubles and
/// `out` must be a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_grid_create(
    width: usize,
    height: usize,
    values: *const c_double,
    out: *mut *mut SfGrid,
) -> c_int {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        if values.is_null() {
            return null_arg("values");
        }
        let data = std::slice::from_raw_parts(values, width * height).to_vec();
        match Grid::new(width, height, data) {
            Ok(g) => {
                *out = Box::into_raw(Box::new(SfGrid(g)));
                SF_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a grid previously returned by this library. Null is a no-op.
///
/// # Safety
/// `grid` must be a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sf_grid_free(grid: *mut SfGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// # Safety
/// `grid` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_grid_width(grid: *const SfGrid) -> usize {
    if grid.is_null() {
        return 0;
    }
    (*grid).0.width()
}

/// # Safety
/// `grid` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_grid_height(grid: *const SfGrid) -> usize {
    if grid.is_null() {
        return 0;
    }
    (*grid).0.height()
}

/// Copy all pixels into `out` (row-major, width*height doubles).
///
/// # Safety
/// `grid` must be live and `out` must have room for width*height doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_grid_copy_values(grid: *const SfGrid, out: *mut c_double) -> c_int {
    guarded(|| {
        if grid.is_null() {
            return null_arg("grid");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let values = (*grid).0.values();
        std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
        SF_OK
    })
}

/// Read a PGM (.pgm) or PFM (.pfm) image.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_grid_read(path: *const c_char, out: *mut *mut SfGrid) -> c_int {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        let path = match path_from(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match read_auto(path) {
            Ok(g) => {
                *out = Box::into_raw(Box::new(SfGrid(g)));
                SF_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Write a grid; the extension selects the format (.pgm clamps to 8 bit).
///
/// # Safety
/// `grid` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_grid_write(grid: *const SfGrid, path: *const c_char) -> c_int {
    guarded(|| {
        if grid.is_null() {
            return null_arg("grid");
        }
        let path = match path_from(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match write_auto(&(*grid).0, path) {
            Ok(()) => SF_OK,
            Err(e) => fail(e),
        }
    })
}

/// Multiply a nonnegative scene by unit-mean Gamma speckle with `looks` looks.
///
/// # Safety
/// `scene` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_add_speckle(
    scene: *const SfGrid,
    looks: u32,
    seed: u64,
    out: *mut *mut SfGrid,
) -> c_int {
    guarded(|| {
        if scene.is_null() {
            return null_arg("scene");
        }
        if out.is_null() {
            return null_arg("out");
        }
        match gamma_speckle(&(*scene).0, &GammaNoiseSpec { looks, seed }) {
            Ok(g) => {
                *out = Box::into_raw(Box::new(SfGrid(g)));
                SF_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Immerkaer noise estimate of a grid.
///
/// # Safety
/// `grid` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_estimate_noise(grid: *const SfGrid, out: *mut c_double) -> c_int {
    guarded(|| {
        if grid.is_null() {
            return null_arg("grid");
        }
        if out.is_null() {
            return null_arg("out");
        }
        match estimate_noise_h(&(*grid).0) {
            Ok(h) => {
                *out = h;
                SF_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Denoising parameters; zero-initialize then override, or start from
/// `sf_denoise_options_default`.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct SfDenoiseOptions {
    /// Local/nonlocal trade-off in [0,1].
    pub lambda: c_double,
    /// Explicit Euler step.
    pub tau: c_double,
    /// Regularizer inside the inverse square roots.
    pub eps: c_double,
    pub iterations: usize,
    /// One of the SF_MODE_* constants.
    pub mode: c_int,
    /// Indicator pre-smoothing sigma.
    pub sigma: c_double,
    /// Indicator contrast exponent.
    pub beta: c_double,
    pub search_radius: usize,
    pub patch_edge: usize,
    pub k_neighbors: usize,
    /// Similarity scale; <= 0 uses the Immerkaer estimate.
    pub filter_h: c_double,
}

/// Default options matching the CLI defaults.
#[no_mangle]
pub extern "C" fn sf_denoise_options_default() -> SfDenoiseOptions {
    let solver = SolverConfig::default();
    let patch = PatchConfig::default();
    SfDenoiseOptions {
        lambda: solver.lambda,
        tau: solver.tau,
        eps: solver.eps,
        iterations: solver.max_iters,
        mode: SF_MODE_COUPLED,
        sigma: 2.0,
        beta: 2.0,
        search_radius: patch.search_radius,
        patch_edge: patch.patch_edge,
        k_neighbors: patch.k_neighbors,
        filter_h: 0.0,
    }
}

fn mode_from(raw: c_int) -> Result<Mode, c_int> {
    match raw {
        SF_MODE_COUPLED => Ok(Mode::Coupled),
        SF_MODE_TV_ONLY => Ok(Mode::TvOnly),
        SF_MODE_NLTV_ONLY => Ok(Mode::NltvOnly),
        SF_MODE_SYMMETRIC => Ok(Mode::SymmetricConservative),
        SF_MODE_AA_BASELINE => Ok(Mode::AaBaseline),
        _ => {
            set_error("unknown mode selector");
            Err(SF_ERR_INVALID)
        }
    }
}

/// Denoise `noisy` into a freshly allocated grid.
///
/// # Safety
/// `noisy` must be live; `options` may be null (defaults); `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_denoise(
    noisy: *const SfGrid,
    options: *const SfDenoiseOptions,
    out: *mut *mut SfGrid,
) -> c_int {
    guarded(|| {
        if noisy.is_null() {
            return null_arg("noisy");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let opts = if options.is_null() {
            sf_denoise_options_default()
        } else {
            *options
        };
        let mode = match mode_from(opts.mode) {
            Ok(m) => m,
            Err(code) => return code,
        };
        let params = DenoiseParams {
            solver: SolverConfig {
                lambda: opts.lambda,
                tau: opts.tau,
                eps: opts.eps,
                max_iters: opts.iterations,
                stop_tol: 0.0,
                mode,
                aa_fidelity: 1.0,
                record_diagnostics: false,
            },
            patch: PatchConfig {
                search_radius: opts.search_radius,
                patch_edge: opts.patch_edge,
                k_neighbors: opts.k_neighbors,
                ..PatchConfig::default()
            },
            sigma: opts.sigma,
            beta: opts.beta,
            h_override: (opts.filter_h > 0.0).then_some(opts.filter_h),
            ..DenoiseParams::default()
        };
        match denoise(&(*noisy).0, &params) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(SfGrid(result.restored)));
                SF_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// PSNR of `test` against `reference` in dB; identical images give +inf.
///
/// # Safety
/// Both grids must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_psnr(
    reference: *const SfGrid,
    test: *const SfGrid,
    peak: c_double,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        if reference.is_null() || test.is_null() {
            return null_arg("reference/test");
        }
        if out.is_null() {
            return null_arg("out");
        }
        match psnr(&(*reference).0, &(*test).0, peak) {
            Ok(v) => {
                *out = v;
                SF_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Mean SSIM with the standard 11x11 Gaussian window.
///
/// # Safety
/// Both grids must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_ssim(
    reference: *const SfGrid,
    test: *const SfGrid,
    peak: c_double,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        if reference.is_null() || test.is_null() {
            return null_arg("reference/test");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let cfg = SsimConfig {
            dynamic_range: peak,
            ..SsimConfig::default()
        };
        match ssim(&(*reference).0, &(*test).0, &cfg) {
            Ok(v) => {
                *out = v;
                SF_OK
            }
            Err(e) => fail(e),
        }
    })
}
