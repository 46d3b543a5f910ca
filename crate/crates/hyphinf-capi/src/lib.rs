//! C ABI for the hyphinf toolkit.
//!
//! Conventions:
//! - Opaque handles (`HyphinfPlant`, `HyphinfController`, `HyphinfClosedLoop`)
//!   own their data; every `*_new`/`*_from_*` constructor is paired with a
//!   `*_free`. Passing null to a `*_free` is a no-op.
//! - Functions return a `HyphinfStatus` code; output parameters are written
//!   only on `Ok`.
//! - `hyphinf_last_error_message` copies the thread-local message of the
//!   most recent failure into a caller buffer.
//! - Matrices cross the ABI as JSON strings (row-major nested arrays), the
//!   same schema the CLI uses, which keeps the surface small and versionable.
//!
//! The generated header lands in `include/hyphinf.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use hyphinf::cli::{PlantJson, StateSpaceJson};
use hyphinf::clp;
use hyphinf::numkernel;
use hyphinf::pde;
use hyphinf::synth;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyphinfStatus {
    Ok = 0,
    /// Invalid argument: null pointer, malformed JSON, bad dimensions.
    InvalidArgument = 1,
    /// A mathematical condition failed (not well-posed, no stabilizing
    /// solution, unstable loop, parameter out of bounds).
    ConditionFailed = 2,
    /// Numerical breakdown inside a kernel.
    NumericalFailure = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&ch| ch != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap_or_default());
}

fn status_of(err: &hyphinf::Error) -> HyphinfStatus {
    set_error(&err.to_string());
    if err.is_input_error() {
        HyphinfStatus::InvalidArgument
    } else {
        HyphinfStatus::ConditionFailed
    }
}

/// Copy the last error message into `buf` (truncated to `len` - 1 bytes,
/// always NUL-terminated). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes (or be null).
#[no_mangle]
pub unsafe extern "C" fn hyphinf_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// A boundary-controlled transport plant.
pub struct HyphinfPlant {
    plant: pde::HyperbolicPlant,
}

/// A synthesized compensator realization.
pub struct HyphinfController {
    controller: synth::ControllerRealization,
}

/// A closed loop from disturbance to regulated output.
pub struct HyphinfClosedLoop {
    closed_loop: clp::ClosedLoop,
}

unsafe fn read_utf8<'a>(ptr_in: *const c_char) -> Result<&'a str, HyphinfStatus> {
    if ptr_in.is_null() {
        set_error("null pointer argument");
        return Err(HyphinfStatus::InvalidArgument);
    }
    CStr::from_ptr(ptr_in).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        HyphinfStatus::InvalidArgument
    })
}

/// Parse a plant from its JSON description (same schema as the CLI).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hyphinf_plant_from_json(
    json: *const c_char,
    out: *mut *mut HyphinfPlant,
) -> HyphinfStatus {
    if out.is_null() {
        set_error("null output pointer");
        return HyphinfStatus::InvalidArgument;
    }
    let text = match read_utf8(json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let parsed: PlantJson = match serde_json::from_str(text) {
        Ok(p) => p,
        Err(e) => {
            set_error(&format!("json error: {e}"));
            return HyphinfStatus::InvalidArgument;
        }
    };
    match parsed.into_plant() {
        Ok(plant) => {
            *out = Box::into_raw(Box::new(HyphinfPlant { plant }));
            HyphinfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Build the vibrating-string benchmark plant with mass density `rho` and
/// modulus `t_mod`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hyphinf_plant_string_fixture(
    rho: f64,
    t_mod: f64,
    out: *mut *mut HyphinfPlant,
) -> HyphinfStatus {
    if out.is_null() {
        set_error("null output pointer");
        return HyphinfStatus::InvalidArgument;
    }
    match pde::string_fixture(rho, t_mod) {
        Ok(plant) => {
            *out = Box::into_raw(Box::new(HyphinfPlant { plant }));
            HyphinfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// # Safety
/// `plant` must come from a `hyphinf_plant_*` constructor (or be null).
#[no_mangle]
pub unsafe extern "C" fn hyphinf_plant_free(plant: *mut HyphinfPlant) {
    if !plant.is_null() {
        drop(Box::from_raw(plant));
    }
}

/// Well-posedness: writes 1 into `well_posed` iff the boundary matrix K is
/// invertible, plus its smallest singular value.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hyphinf_plant_check_wellposed(
    plant: *const HyphinfPlant,
    well_posed: *mut i32,
    sigma_min: *mut f64,
) -> HyphinfStatus {
    if plant.is_null() || well_posed.is_null() || sigma_min.is_null() {
        set_error("null pointer argument");
        return HyphinfStatus::InvalidArgument;
    }
    let wp = pde::wellposedness_check(&(*plant).plant);
    *well_posed = wp.well_posed as i32;
    *sigma_min = wp.sigma_min_k;
    HyphinfStatus::Ok
}

/// The travel time p(1) of the plant's speed profile.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hyphinf_plant_travel_time(
    plant: *const HyphinfPlant,
    out: *mut f64,
) -> HyphinfStatus {
    if plant.is_null() || out.is_null() {
        set_error("null pointer argument");
        return HyphinfStatus::InvalidArgument;
    }
    match pde::travel_time_profile(&(*plant).plant.lambda0, pde::DEFAULT_QUAD_POINTS) {
        Ok(tt) => {
            *out = tt.p1();
            HyphinfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Synthesize a compensator at level `gamma`. `sigma_q_json` selects the
/// free parameter: pass null for the zero parameter, or a state-space JSON
/// object {"A": [[..]], "B": [[..]], "C": [[..]], "D": [[..]]}.
///
/// # Safety
/// `plant` must be a valid handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hyphinf_synthesize(
    plant: *const HyphinfPlant,
    gamma: f64,
    sigma_q_json: *const c_char,
    out: *mut *mut HyphinfController,
) -> HyphinfStatus {
    if plant.is_null() || out.is_null() {
        set_error("null pointer argument");
        return HyphinfStatus::InvalidArgument;
    }
    let discrete = match pde::to_discrete(&(*plant).plant) {
        Ok(d) => d,
        Err(e) => return status_of(&e),
    };
    let dims = discrete.dims();
    let sigma_q = if sigma_q_json.is_null() {
        synth::StateSpace::zero(dims.p, dims.m)
    } else {
        let text = match read_utf8(sigma_q_json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let parsed: StateSpaceJson = match serde_json::from_str(text) {
            Ok(p) => p,
            Err(e) => {
                set_error(&format!("json error: {e}"));
                return HyphinfStatus::InvalidArgument;
            }
        };
        match parsed.into_ss() {
            Ok(ss) => ss,
            Err(e) => return status_of(&e),
        }
    };
    match synth::synthesize(&discrete, gamma, &sigma_q) {
        Ok((controller, _report)) => {
            *out = Box::into_raw(Box::new(HyphinfController { controller }));
            HyphinfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// # Safety
/// `controller` must come from `hyphinf_synthesize` (or be null).
#[no_mangle]
pub unsafe extern "C" fn hyphinf_controller_free(controller: *mut HyphinfController) {
    if !controller.is_null() {
        drop(Box::from_raw(controller));
    }
}

/// State dimension of the compensator.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hyphinf_controller_order(
    controller: *const HyphinfController,
    out: *mut usize,
) -> HyphinfStatus {
    if controller.is_null() || out.is_null() {
        set_error("null pointer argument");
        return HyphinfStatus::InvalidArgument;
    }
    *out = (*controller).controller.order();
    HyphinfStatus::Ok
}

fn json_out(text: String, out: *mut *mut c_char) -> HyphinfStatus {
    match CString::new(text) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            HyphinfStatus::Ok
        }
        Err(_) => {
            set_error("interior NUL in serialized JSON");
            HyphinfStatus::NumericalFailure
        }
    }
}

/// Serialize the compensator matrices as JSON
/// {"A": .., "B": .., "C": .., "D": ..}. The returned string must be
/// released with `hyphinf_string_free`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hyphinf_controller_to_json(
    controller: *const HyphinfController,
    out: *mut *mut c_char,
) -> HyphinfStatus {
    if controller.is_null() || out.is_null() {
        set_error("null pointer argument");
        return HyphinfStatus::InvalidArgument;
    }
    let json = StateSpaceJson::from_ss(&(*controller).controller);
    match serde_json::to_string(&json) {
        Ok(text) => json_out(text, out),
        Err(e) => {
            set_error(&format!("json error: {e}"));
            HyphinfStatus::NumericalFailure
        }
    }
}

/// # Safety
/// `s` must come from a `*_to_json` function (or be null).
#[no_mangle]
pub unsafe extern "C" fn hyphinf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Close the loop of a plant and a compensator.
///
/// # Safety
/// Handles must be valid; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hyphinf_close_loop(
    plant: *const HyphinfPlant,
    controller: *const HyphinfController,
    out: *mut *mut HyphinfClosedLoop,
) -> HyphinfStatus {
    if plant.is_null() || controller.is_null() || out.is_null() {
        set_error("null pointer argument");
        return HyphinfStatus::InvalidArgument;
    }
    let discrete = match pde::to_discrete(&(*plant).plant) {
        Ok(d) => d,
        Err(e) => return status_of(&e),
    };
    match clp::close_loop(&discrete, &(*controller).controller) {
        Ok(closed_loop) => {
            *out = Box::into_raw(Box::new(HyphinfClosedLoop { closed_loop }));
            HyphinfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// # Safety
/// `cl` must come from `hyphinf_close_loop` (or be null).
#[no_mangle]
pub unsafe extern "C" fn hyphinf_closed_loop_free(cl: *mut HyphinfClosedLoop) {
    if !cl.is_null() {
        drop(Box::from_raw(cl));
    }
}

/// Spectral radius of the closed-loop state matrix.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hyphinf_closed_loop_spectral_radius(
    cl: *const HyphinfClosedLoop,
    out: *mut f64,
) -> HyphinfStatus {
    if cl.is_null() || out.is_null() {
        set_error("null pointer argument");
        return HyphinfStatus::InvalidArgument;
    }
    match numkernel::spectral_radius(&(*cl).closed_loop.a) {
        Ok(rho) => {
            *out = rho;
            HyphinfStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// H-infinity norm of the closed loop over the unit circle (grid sweep of
/// `grid_size` points plus refinement). Writes the norm and the maximizing
/// angle theta. Fails on an unstable loop.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hyphinf_closed_loop_hinf_norm(
    cl: *const HyphinfClosedLoop,
    grid_size: usize,
    norm: *mut f64,
    theta: *mut f64,
) -> HyphinfStatus {
    if cl.is_null() || norm.is_null() || theta.is_null() {
        set_error("null pointer argument");
        return HyphinfStatus::InvalidArgument;
    }
    match clp::hinf_norm_disc(&(*cl).closed_loop, grid_size, clp::DEFAULT_REFINE_TOL) {
        Ok(r) => {
            *norm = r.norm;
            *theta = r.theta;
            HyphinfStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            HyphinfStatus::NumericalFailure
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_message_round_trip() {
        set_error("something broke");
        let mut buf = [0 as c_char; 64];
        let len = unsafe { hyphinf_last_error_message(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(len, "something broke".len());
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert_eq!(msg, "something broke");
    }

    #[test]
    fn truncation_keeps_nul_terminator() {
        set_error("a longer message than the buffer");
        let mut buf = [0 as c_char; 8];
        let len = unsafe { hyphinf_last_error_message(buf.as_mut_ptr(), buf.len()) };
        assert!(len > 7);
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert_eq!(msg.len(), 7);
    }
}
