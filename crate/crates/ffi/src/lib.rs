//! C interface to the nmlz solver.
//!
//! Models and transition tables cross the boundary as opaque handles that
//! the caller releases with the matching `_free` function. Every fallible
//! call returns an [`NmlzStatus`]; the message of the most recent failure on
//! the calling thread is available from [`nmlz_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nmlz::analytic;
use nmlz::propagator::{self, PropagationSettings};
use nmlz::semiclassic::{self, Hs4Params};
use nmlz::{ComplexMatrix, Error, Hermiticity, NmlzModel, TransitionTable, C64};

/// Status codes. The nonzero values match the exit codes of the `nmlz`
/// binary, plus two codes for misuse of the interface itself.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmlzStatus {
    Ok = 0,
    Config = 2,
    Numeric = 3,
    RefusedRegime = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Opaque model handle.
pub struct NmlzModelHandle {
    model: NmlzModel,
}

/// Opaque transition-table handle.
pub struct NmlzTableHandle {
    table: TransitionTable,
    horizon: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NmlzStatus {
    match e.exit_code() {
        3 => NmlzStatus::Numeric,
        4 => NmlzStatus::RefusedRegime,
        _ => NmlzStatus::Config,
    }
}

fn guard<F>(f: F) -> NmlzStatus
where
    F: FnOnce() -> Result<(), NmlzStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NmlzStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            NmlzStatus::Panic
        }
    }
}

fn fail(e: Error) -> NmlzStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> NmlzStatus {
    set_error(format!("null pointer passed as {what}"));
    NmlzStatus::NullPointer
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], NmlzStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), NmlzStatus> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = v;
    Ok(())
}

fn flag(hermitian: bool) -> Hermiticity {
    if hermitian {
        Hermiticity::Hermitian
    } else {
        Hermiticity::AntiHermitian
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nmlz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nmlz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a model from row-major `dim x dim` coupling parts. The diagonal of
/// the coupling must be zero.
///
/// # Safety
/// `slopes` and `statics` must point to `dim` doubles, `coupling_re` and
/// `coupling_im` to `dim * dim` doubles, `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn nmlz_model_new(
    dim: usize,
    slopes: *const f64,
    statics: *const f64,
    coupling_re: *const f64,
    coupling_im: *const f64,
    hermitian: bool,
    out: *mut *mut NmlzModelHandle,
) -> NmlzStatus {
    guard(|| {
        let b = slice(slopes, dim, "slopes")?;
        let e = slice(statics, dim, "statics")?;
        let re = slice(coupling_re, dim * dim, "coupling_re")?;
        let im = slice(coupling_im, dim * dim, "coupling_im")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut g = ComplexMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                g[(i, j)] = C64::new(re[i * dim + j], im[i * dim + j]);
            }
        }
        let model = NmlzModel::new(b.to_vec(), e.to_vec(), g, flag(hermitian)).map_err(fail)?;
        *out = Box::into_raw(Box::new(NmlzModelHandle { model }));
        Ok(())
    })
}

/// Builds a model from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nmlz_model_from_json(json: *const c_char, out: *mut *mut NmlzModelHandle) -> NmlzStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| fail(Error::InvalidArgument("model JSON is not UTF-8".into())))?;
        let model = NmlzModel::from_json(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(NmlzModelHandle { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from a model constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nmlz_model_free(model: *mut NmlzModelHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of levels, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nmlz_model_dim(model: *const NmlzModelHandle) -> usize {
    model.as_ref().map_or(0, |m| m.model.dim())
}

/// Integrates every column of the scattering matrix. A non-positive
/// `horizon` selects the default; non-positive tolerances keep the defaults.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nmlz_solve(
    model: *const NmlzModelHandle,
    horizon: f64,
    rel_tol: f64,
    abs_tol: f64,
    out: *mut *mut NmlzTableHandle,
) -> NmlzStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut s = PropagationSettings { estimate_convergence: false, ..Default::default() };
        if horizon > 0.0 {
            s.horizon = Some(horizon);
        }
        if rel_tol > 0.0 {
            s.rel_tol = rel_tol;
        }
        if abs_tol > 0.0 {
            s.abs_tol = abs_tol;
        }
        let result = propagator::scattering_matrix(m, &s).map_err(fail)?;
        let table = propagator::transition_table(&result).map_err(fail)?;
        *out = Box::into_raw(Box::new(NmlzTableHandle { table, horizon: result.horizon_used }));
        Ok(())
    })
}

/// # Safety
/// `table` must come from [`nmlz_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nmlz_table_free(table: *mut NmlzTableHandle) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nmlz_table_dim(table: *const NmlzTableHandle) -> usize {
    table.as_ref().map_or(0, |t| t.table.dim())
}

/// Horizon the table was integrated to, or NaN for NULL.
///
/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nmlz_table_horizon(table: *const NmlzTableHandle) -> f64 {
    table.as_ref().map_or(f64::NAN, |t| t.horizon)
}

#[derive(Clone, Copy)]
enum Entry {
    Log,
    Normalized,
    Raw,
}

unsafe fn entry(table: *const NmlzTableHandle, to: usize, from: usize, kind: Entry, out: *mut f64) -> NmlzStatus {
    guard(|| {
        let t = &table.as_ref().ok_or_else(|| null("table"))?.table;
        let n = t.dim();
        if to >= n || from >= n {
            return Err(fail(Error::DimensionMismatch(format!("entry ({to}, {from}) outside dimension {n}"))));
        }
        let v = match kind {
            Entry::Log => t.log_unnormalized()[to][from],
            Entry::Normalized => t.normalized()[to][from],
            Entry::Raw => {
                let l = t.log_unnormalized()[to][from];
                if l > f64::MAX.ln() {
                    return Err(fail(Error::Overflow(l)));
                }
                t.p_tilde(to, from)
            }
        };
        write(out, v, "out")
    })
}

/// Natural log of the unnormalized probability from level `from` to level
/// `to` (zero-based).
///
/// # Safety
/// `table` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nmlz_table_log_p_tilde(
    table: *const NmlzTableHandle,
    to: usize,
    from: usize,
    out: *mut f64,
) -> NmlzStatus {
    entry(table, to, from, Entry::Log, out)
}

/// Unnormalized probability; fails with `NMLZ_STATUS_NUMERIC` if it does not
/// fit in a double.
///
/// # Safety
/// `table` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nmlz_table_p_tilde(
    table: *const NmlzTableHandle,
    to: usize,
    from: usize,
    out: *mut f64,
) -> NmlzStatus {
    entry(table, to, from, Entry::Raw, out)
}

/// Probability normalized over its column.
///
/// # Safety
/// `table` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nmlz_table_normalized(
    table: *const NmlzTableHandle,
    to: usize,
    from: usize,
    out: *mut f64,
) -> NmlzStatus {
    entry(table, to, from, Entry::Normalized, out)
}

/// Closed-form two-level result for slopes `(-v/2, v/2)` and coupling `g`:
/// logs of the survival and transition probabilities.
///
/// # Safety
/// Both output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn nmlz_two_level_log(
    g_re: f64,
    g_im: f64,
    v: f64,
    hermitian: bool,
    log_survival: *mut f64,
    log_transition: *mut f64,
) -> NmlzStatus {
    guard(|| {
        let g = C64::new(g_re, g_im);
        let (a, b) = if hermitian {
            let (p, q) = analytic::lz_two_level_hermitian(g, v).map_err(fail)?;
            (p.ln(), q.ln())
        } else {
            analytic::nlz_two_level_log(g, v).map_err(fail)?
        };
        write(log_survival, a, "log_survival")?;
        write(log_transition, b, "log_transition")
    })
}

/// Semiclassical probability between the two inner crossings of the
/// four-level model with slope `b`, statics `e1`, `e2` and coupling `g`.
/// Refuses the critical window with `NMLZ_STATUS_REFUSED_REGIME`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nmlz_dykhne_probability(
    b: f64,
    e1: f64,
    e2: f64,
    g: f64,
    stokes_phase: f64,
    out: *mut f64,
) -> NmlzStatus {
    guard(|| {
        let p = Hs4Params { b, e1, e2, g };
        let v = semiclassic::dykhne_probability(&p, stokes_phase).map_err(fail)?;
        write(out, v, "out")
    })
}
