//! C ABI for the game laboratory: opaque handles, integer status codes,
//! and UTF-8 JSON strings at the boundary.
//!
//! Every returned string must be released with `prmlab_string_free`;
//! every handle has a matching `_free` function. Passing NULL where a
//! handle is expected yields `PRMLAB_STATUS_NULL_POINTER`; other failures
//! store a message retrievable via `prmlab_last_error`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use prmlab::game::{AdversarialGame, JointStrategy};
use prmlab::oracle::Oracle;
use prmlab::regularization::{
    equilibrium_fixed_point, exploitability, EquilibriumResult, RegularizationConfig,
};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrmlabStatus {
    Ok = 0,
    InvalidArgument = 1,
    ParseError = 2,
    NonConvergence = 3,
    NullPointer = 4,
    Utf8Error = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Opaque game handle.
pub struct PrmlabGame {
    inner: AdversarialGame,
}

/// Opaque solution handle holding an equilibrium and its game context.
pub struct PrmlabSolution {
    result: EquilibriumResult,
}

/// Opaque oracle handle (default thresholds and embedder).
pub struct PrmlabOracle {
    inner: Oracle,
}

unsafe fn cstr_to_str<'a>(s: *const c_char) -> Result<&'a str, PrmlabStatus> {
    if s.is_null() {
        return Err(PrmlabStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| PrmlabStatus::Utf8Error)
}

fn string_out(s: String) -> *mut c_char {
    CString::new(s)
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Message for the most recent failure on this thread, or NULL.
/// The returned string must be freed with `prmlab_string_free`.
#[no_mangle]
pub extern "C" fn prmlab_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map(|c| string_out(c.to_string_lossy().into_owned()))
            .unwrap_or(ptr::null_mut())
    })
}

/// Frees a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be a pointer previously returned by a prmlab function and not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn prmlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string (do not free).
#[no_mangle]
pub extern "C" fn prmlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses a game from its JSON definition.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn prmlab_game_from_json(
    json: *const c_char,
    out: *mut *mut PrmlabGame,
) -> PrmlabStatus {
    if out.is_null() {
        return PrmlabStatus::NullPointer;
    }
    let text = match cstr_to_str(json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    match AdversarialGame::from_json(text) {
        Ok((game, _warning)) => {
            *out = Box::into_raw(Box::new(PrmlabGame { inner: game }));
            PrmlabStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            PrmlabStatus::ParseError
        }
    }
}

/// # Safety
/// `game` must come from `prmlab_game_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn prmlab_game_free(game: *mut PrmlabGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Number of contexts, or 0 on NULL.
///
/// # Safety
/// `game` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prmlab_game_num_contexts(game: *const PrmlabGame) -> usize {
    game.as_ref().map(|g| g.inner.num_contexts()).unwrap_or(0)
}

/// Solves the KL/entropy-regularized game by best-response fixed point
/// with uniform references.
///
/// # Safety
/// `game` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn prmlab_solve(
    game: *const PrmlabGame,
    tau: f64,
    c_h: f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut PrmlabSolution,
) -> PrmlabStatus {
    if out.is_null() {
        return PrmlabStatus::NullPointer;
    }
    let game = match game.as_ref() {
        Some(g) => g,
        None => return PrmlabStatus::NullPointer,
    };
    let reg = match RegularizationConfig::uniform(&game.inner, tau, c_h) {
        Ok(r) => r,
        Err(e) => {
            set_error(e.to_string());
            return PrmlabStatus::InvalidArgument;
        }
    };
    match equilibrium_fixed_point(&game.inner, &reg, tol, max_iter) {
        Ok(result) => {
            let converged = result.converged;
            *out = Box::into_raw(Box::new(PrmlabSolution { result }));
            if converged {
                PrmlabStatus::Ok
            } else {
                set_error("fixed point did not converge within max_iter".into());
                PrmlabStatus::NonConvergence
            }
        }
        Err(e) => {
            set_error(e.to_string());
            PrmlabStatus::InvalidArgument
        }
    }
}

/// # Safety
/// `sol` must come from `prmlab_solve` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn prmlab_solution_free(sol: *mut PrmlabSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Exploitability certificate of the solution (NaN on NULL).
///
/// # Safety
/// `sol` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prmlab_solution_exploitability(sol: *const PrmlabSolution) -> f64 {
    sol.as_ref().map(|s| s.result.exploitability).unwrap_or(f64::NAN)
}

/// Generator probability of (context, action); NaN when out of range.
///
/// # Safety
/// `sol` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prmlab_solution_generator_prob(
    sol: *const PrmlabSolution,
    context: usize,
    action: usize,
) -> f64 {
    sol.as_ref()
        .and_then(|s| s.result.joint.generator.rows.get(context))
        .and_then(|row| row.get(action))
        .copied()
        .unwrap_or(f64::NAN)
}

/// Detector classify-correct probability of (context, action).
///
/// # Safety
/// `sol` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prmlab_solution_detector_prob(
    sol: *const PrmlabSolution,
    context: usize,
    action: usize,
) -> f64 {
    sol.as_ref()
        .and_then(|s| s.result.joint.detector.rows.get(context))
        .and_then(|row| row.get(action))
        .copied()
        .unwrap_or(f64::NAN)
}

/// Serializes the solution (strategies, certificate, full-support report)
/// as JSON. The string must be freed with `prmlab_string_free`.
///
/// # Safety
/// `sol` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn prmlab_solution_to_json(sol: *const PrmlabSolution) -> *mut c_char {
    let sol = match sol.as_ref() {
        Some(s) => s,
        None => return ptr::null_mut(),
    };
    let support = sol.result.full_support_report();
    let value = serde_json::json!({
        "generator": sol.result.joint.generator.rows,
        "detector": sol.result.joint.detector.rows,
        "exploitability": sol.result.exploitability,
        "iterations": sol.result.iterations,
        "converged": sol.result.converged,
        "full_support": support.full_support,
        "min_log_probability": support.min_log_probability,
    });
    string_out(value.to_string())
}

/// Exploitability of an explicit joint strategy (JSON rows) under uniform
/// references. Writes the value through `out`.
///
/// # Safety
/// Pointer arguments must be valid as documented on the other functions.
#[no_mangle]
pub unsafe extern "C" fn prmlab_exploitability(
    game: *const PrmlabGame,
    tau: f64,
    c_h: f64,
    joint_json: *const c_char,
    out: *mut f64,
) -> PrmlabStatus {
    if out.is_null() {
        return PrmlabStatus::NullPointer;
    }
    let game = match game.as_ref() {
        Some(g) => g,
        None => return PrmlabStatus::NullPointer,
    };
    let text = match cstr_to_str(joint_json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let joint: JointStrategy = match serde_json::from_str(text) {
        Ok(j) => j,
        Err(e) => {
            set_error(format!("joint strategy: {e}"));
            return PrmlabStatus::ParseError;
        }
    };
    let reg = match RegularizationConfig::uniform(&game.inner, tau, c_h) {
        Ok(r) => r,
        Err(e) => {
            set_error(e.to_string());
            return PrmlabStatus::InvalidArgument;
        }
    };
    match exploitability(&game.inner, &reg, &joint) {
        Ok(v) => {
            *out = v;
            PrmlabStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            PrmlabStatus::InvalidArgument
        }
    }
}

/// Creates an oracle with default thresholds, embedder, and mode.
#[no_mangle]
pub extern "C" fn prmlab_oracle_new_default() -> *mut PrmlabOracle {
    Box::into_raw(Box::new(PrmlabOracle {
        inner: Oracle::default(),
    }))
}

/// # Safety
/// `oracle` must come from `prmlab_oracle_new_default` and not be freed
/// twice.
#[no_mangle]
pub unsafe extern "C" fn prmlab_oracle_free(oracle: *mut PrmlabOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

/// Labels a (gold, candidate) pair; writes a JSON verdict
/// {label, trace, distances} through `out` (free with
/// `prmlab_string_free`).
///
/// # Safety
/// `oracle` must be a live handle; `gold`/`candidate` valid strings; `out`
/// a valid slot.
#[no_mangle]
pub unsafe extern "C" fn prmlab_oracle_label(
    oracle: *const PrmlabOracle,
    gold: *const c_char,
    candidate: *const c_char,
    out: *mut *mut c_char,
) -> PrmlabStatus {
    if out.is_null() {
        return PrmlabStatus::NullPointer;
    }
    let oracle = match oracle.as_ref() {
        Some(o) => o,
        None => return PrmlabStatus::NullPointer,
    };
    let gold = match cstr_to_str(gold) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let candidate = match cstr_to_str(candidate) {
        Ok(t) => t,
        Err(s) => return s,
    };
    match oracle.inner.label(gold, candidate) {
        Ok(verdict) => {
            let value = serde_json::json!({
                "label": verdict.label,
                "trace": verdict.trace,
                "distances": verdict.distances,
            });
            *out = string_out(value.to_string());
            PrmlabStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            PrmlabStatus::InvalidArgument
        }
    }
}
