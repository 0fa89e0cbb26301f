//! C ABI over the core pipeline: opaque handles, integer status codes,
//! and a thread-local last-error message. The committed header lives at
//! `include/latentplan.h`.

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;
use std::time::Duration;

use latentplan::ama1::parse_pddl;
use latentplan::bits::LatentBitVector;
use latentplan::ndcore::Tensor;
use latentplan::planner::{astar, goal_count, PlanResult, PlanStatus, SearchLimits, StripsSuccessors};
use latentplan::sae::SaeModel;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum lp_status {
    LP_OK = 0,
    LP_NULL_ARGUMENT = 1,
    LP_IO_ERROR = 2,
    LP_FORMAT_ERROR = 3,
    LP_SHAPE_MISMATCH = 4,
    LP_INVALID_ARGUMENT = 5,
    LP_UNSOLVED = 6,
    LP_BUFFER_TOO_SMALL = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &latentplan::Error) -> lp_status {
    use latentplan::Error::*;
    match err {
        Io(_) | MissingCheckpoint { .. } => lp_status::LP_IO_ERROR,
        Format(_) | Json(_) => lp_status::LP_FORMAT_ERROR,
        Shape { .. } | LayerShape { .. } | Length { .. } => lp_status::LP_SHAPE_MISMATCH,
        _ => lp_status::LP_INVALID_ARGUMENT,
    }
}

fn fail(err: latentplan::Error) -> lp_status {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

unsafe fn path_from<'a>(ptr_: *const c_char) -> Result<&'a Path, lp_status> {
    if ptr_.is_null() {
        set_error("null path argument");
        return Err(lp_status::LP_NULL_ARGUMENT);
    }
    match CStr::from_ptr(ptr_).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(lp_status::LP_INVALID_ARGUMENT)
        }
    }
}

/// Opaque state-autoencoder handle.
pub struct lp_sae {
    model: SaeModel,
}

/// Opaque grounded-problem handle.
pub struct lp_strips {
    succ: StripsSuccessors,
}

/// Opaque plan handle.
pub struct lp_plan {
    result: PlanResult,
    bits: usize,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message for this thread into `buf` (NUL
/// terminated, truncated to `cap`). Returns the full message length.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes, or be null.
#[no_mangle]
pub unsafe extern "C" fn lp_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

// ── state autoencoder ──────────────────────────────────────────────────

/// Loads a trained state-autoencoder checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_sae_load(path: *const c_char, out: *mut *mut lp_sae) -> lp_status {
    if out.is_null() {
        set_error("null output handle");
        return lp_status::LP_NULL_ARGUMENT;
    }
    let path = match path_from(path) {
        Ok(p) => p,
        Err(c) => return c,
    };
    match SaeModel::load(path) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(lp_sae { model }));
            lp_status::LP_OK
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `sae` must be a handle from `lp_sae_load`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_sae_free(sae: *mut lp_sae) {
    if !sae.is_null() {
        drop(Box::from_raw(sae));
    }
}

/// Number of propositional bits in the latent state.
///
/// # Safety
/// `sae` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lp_sae_latent_bits(sae: *const lp_sae) -> usize {
    if sae.is_null() {
        return 0;
    }
    (*sae).model.latent_bits()
}

/// Input image dimensions.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lp_sae_input_dims(
    sae: *const lp_sae,
    height: *mut usize,
    width: *mut usize,
) -> lp_status {
    if sae.is_null() || height.is_null() || width.is_null() {
        set_error("null argument");
        return lp_status::LP_NULL_ARGUMENT;
    }
    let (h, w) = (*sae).model.input_dims();
    *height = h;
    *width = w;
    lp_status::LP_OK
}

/// Encodes a row-major grayscale image (values in [0,1], length
/// height*width) into `bits_len` bytes of 0/1 values.
///
/// # Safety
/// Buffers must match the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn lp_sae_encode(
    sae: *const lp_sae,
    pixels: *const f32,
    pixels_len: usize,
    bits: *mut u8,
    bits_len: usize,
) -> lp_status {
    if sae.is_null() || pixels.is_null() || bits.is_null() {
        set_error("null argument");
        return lp_status::LP_NULL_ARGUMENT;
    }
    let model = &(*sae).model;
    let (h, w) = model.input_dims();
    if pixels_len != h * w {
        set_error("pixel buffer does not match the model input dimensions");
        return lp_status::LP_SHAPE_MISMATCH;
    }
    if bits_len < model.latent_bits() {
        set_error("bit buffer smaller than the latent width");
        return lp_status::LP_BUFFER_TOO_SMALL;
    }
    let data = std::slice::from_raw_parts(pixels, pixels_len).to_vec();
    let img = Tensor::new(vec![h, w], data);
    match model.encode(&img) {
        Ok(code) => {
            for j in 0..model.latent_bits() {
                *bits.add(j) = code.get(j) as u8;
            }
            lp_status::LP_OK
        }
        Err(e) => fail(e),
    }
}

/// Decodes `bits_len` 0/1 bytes back into a row-major image buffer of
/// length height*width.
///
/// # Safety
/// Buffers must match the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn lp_sae_decode(
    sae: *const lp_sae,
    bits: *const u8,
    bits_len: usize,
    pixels: *mut f32,
    pixels_len: usize,
) -> lp_status {
    if sae.is_null() || pixels.is_null() || bits.is_null() {
        set_error("null argument");
        return lp_status::LP_NULL_ARGUMENT;
    }
    let model = &(*sae).model;
    let (h, w) = model.input_dims();
    if bits_len != model.latent_bits() {
        set_error("bit buffer does not match the latent width");
        return lp_status::LP_SHAPE_MISMATCH;
    }
    if pixels_len < h * w {
        set_error("pixel buffer smaller than the image");
        return lp_status::LP_BUFFER_TOO_SMALL;
    }
    let raw = std::slice::from_raw_parts(bits, bits_len);
    let code = LatentBitVector::from_bools(&raw.iter().map(|b| *b != 0).collect::<Vec<_>>());
    match model.decode(&code) {
        Ok(img) => {
            ptr::copy_nonoverlapping(img.data().as_ptr(), pixels, h * w);
            lp_status::LP_OK
        }
        Err(e) => fail(e),
    }
}

// ── grounded problems ──────────────────────────────────────────────────

/// Parses a PDDL domain/problem pair into a grounded problem handle.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lp_strips_load_pddl(
    domain_path: *const c_char,
    problem_path: *const c_char,
    out: *mut *mut lp_strips,
) -> lp_status {
    if out.is_null() {
        set_error("null output handle");
        return lp_status::LP_NULL_ARGUMENT;
    }
    let dp = match path_from(domain_path) {
        Ok(p) => p,
        Err(c) => return c,
    };
    let pp = match path_from(problem_path) {
        Ok(p) => p,
        Err(c) => return c,
    };
    let read = |p: &Path| std::fs::read_to_string(p).map_err(latentplan::Error::from);
    let domain_text = match read(dp) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let problem_text = match read(pp) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    match parse_pddl(&domain_text, &problem_text) {
        Ok(problem) => {
            *out = Box::into_raw(Box::new(lp_strips { succ: StripsSuccessors::new(problem) }));
            lp_status::LP_OK
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `strips` must be a handle from `lp_strips_load_pddl`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_strips_free(strips: *mut lp_strips) {
    if !strips.is_null() {
        drop(Box::from_raw(strips));
    }
}

/// # Safety
/// `strips` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lp_strips_num_actions(strips: *const lp_strips) -> usize {
    if strips.is_null() {
        return 0;
    }
    (*strips).succ.problem().actions.len()
}

/// # Safety
/// `strips` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lp_strips_num_bits(strips: *const lp_strips) -> usize {
    if strips.is_null() {
        return 0;
    }
    (*strips).succ.problem().num_bits
}

/// Solves the loaded instance. `use_goal_count` selects the inadmissible
/// Hamming heuristic; 0 runs optimal blind search. `max_expansions` of 0
/// means unlimited. Writes a plan handle the caller must free; returns
/// LP_UNSOLVED when the search ends in timeout or exhaustion (the plan
/// handle still carries the statistics).
///
/// # Safety
/// `strips` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lp_strips_solve(
    strips: *mut lp_strips,
    time_limit_secs: u64,
    max_expansions: usize,
    use_goal_count: i32,
    out: *mut *mut lp_plan,
) -> lp_status {
    if strips.is_null() || out.is_null() {
        set_error("null argument");
        return lp_status::LP_NULL_ARGUMENT;
    }
    let handle = &mut *strips;
    let (init, goal) = match (&handle.succ.problem().init, &handle.succ.problem().goal) {
        (Some(i), Some(g)) => (i.clone(), g.clone()),
        _ => {
            set_error("problem has no init/goal instance");
            return lp_status::LP_INVALID_ARGUMENT;
        }
    };
    let limits = SearchLimits {
        time: Duration::from_secs(time_limit_secs),
        max_expansions: if max_expansions == 0 { usize::MAX } else { max_expansions },
    };
    let result = if use_goal_count != 0 {
        let g = goal.clone();
        astar(&init, &goal, &mut handle.succ, move |s| goal_count(s, &g).unwrap_or(usize::MAX), limits)
    } else {
        astar(&init, &goal, &mut handle.succ, |_| 0, limits)
    };
    match result {
        Ok(r) => {
            let bits = handle.succ.problem().num_bits;
            let solved = r.status == PlanStatus::Solved;
            *out = Box::into_raw(Box::new(lp_plan { result: r, bits }));
            if solved {
                lp_status::LP_OK
            } else {
                set_error("search finished without a plan (timeout or exhausted)");
                lp_status::LP_UNSOLVED
            }
        }
        Err(e) => fail(e),
    }
}

// ── plans ──────────────────────────────────────────────────────────────

/// # Safety
/// `plan` must be a handle from `lp_strips_solve`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_free(plan: *mut lp_plan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Number of actions in the plan.
///
/// # Safety
/// `plan` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_length(plan: *const lp_plan) -> usize {
    if plan.is_null() {
        return 0;
    }
    (*plan).result.plan_length()
}

/// 0 = solved, 1 = timeout, 2 = exhausted, -1 = null handle.
///
/// # Safety
/// `plan` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_status(plan: *const lp_plan) -> i32 {
    if plan.is_null() {
        return -1;
    }
    match (*plan).result.status {
        PlanStatus::Solved => 0,
        PlanStatus::Timeout => 1,
        PlanStatus::Exhausted => 2,
    }
}

/// # Safety
/// `plan` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_expanded(plan: *const lp_plan) -> usize {
    if plan.is_null() {
        return 0;
    }
    (*plan).result.expanded
}

/// Copies state `index` (0 = init, plan length = goal) as 0/1 bytes.
///
/// # Safety
/// `bits` must point to at least `bits_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_state_bits(
    plan: *const lp_plan,
    index: usize,
    bits: *mut u8,
    bits_len: usize,
) -> lp_status {
    if plan.is_null() || bits.is_null() {
        set_error("null argument");
        return lp_status::LP_NULL_ARGUMENT;
    }
    let p = &*plan;
    if index >= p.result.states.len() {
        set_error("state index out of range");
        return lp_status::LP_INVALID_ARGUMENT;
    }
    if bits_len < p.bits {
        set_error("bit buffer smaller than the state width");
        return lp_status::LP_BUFFER_TOO_SMALL;
    }
    let state = &p.result.states[index];
    for j in 0..p.bits {
        *bits.add(j) = state.get(j) as u8;
    }
    lp_status::LP_OK
}

/// Generating action id of step `index`, or u32::MAX out of range.
///
/// # Safety
/// `plan` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lp_plan_action_id(plan: *const lp_plan, index: usize) -> u32 {
    if plan.is_null() {
        return u32::MAX;
    }
    let p = &*plan;
    p.result.action_ids.get(index).copied().unwrap_or(u32::MAX)
}
