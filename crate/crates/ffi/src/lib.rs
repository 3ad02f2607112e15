//! C ABI over the muonium library.
//!
//! Every function returns a [`MuStatus`]; results go through out-pointers. On failure the
//! message is kept per thread and read with [`mu_last_error_message`]. Systems are opaque
//! handles created by `mu_system_*` and released with [`mu_system_free`]. Panics never
//! cross the boundary; they surface as [`MuStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use muonium::analytic::demur_eigenfrequencies;
use muonium::dynamics::{initial_state, propagate, templates, Geometry, PropagateOptions, RelaxationModel, Sampling};
use muonium::spinsys::{level_diagram, transition_table};
use muonium::{Error, SpinSystem};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MuStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    /// The caller's buffer is shorter than the result; the required length was written.
    BufferTooSmall = 4,
    Internal = 5,
    Panic = 6,
}

/// Values accepted by the `geometry` parameters.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MuGeometry {
    Longitudinal = 0,
    Transverse = 1,
}

/// Population relaxation rates in μs⁻¹.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuRelaxation {
    pub electron: f64,
    pub muon12: f64,
    pub muon34: f64,
}

/// Opaque electron-muon spin system.
pub struct MuSystem {
    inner: SpinSystem,
}

struct Failure(MuStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) | Error::InvalidSequence(_) | Error::Config(_) => MuStatus::InvalidArgument,
            Error::Numerical(_) => MuStatus::Numerical,
            Error::Contract(_) | Error::Io(_) => MuStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    // Interior NULs would truncate the message on the C side anyway.
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MuStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MuStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            MuStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(MuStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MuStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `p` is null or a live pointer to `T`.
unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// # Safety
/// `sys` is null or a handle from `mu_system_*` not yet freed.
unsafe fn system<'a>(sys: *const MuSystem) -> Result<&'a SpinSystem, Failure> {
    sys.as_ref().map(|s| &s.inner).ok_or_else(|| null("system"))
}

fn transition_index(i: u32, j: u32) -> Result<(usize, usize), Failure> {
    if !(1..=4).contains(&i) || !(1..=4).contains(&j) || i == j {
        return Err(invalid(format!("transition ({i},{j}) needs two distinct levels in 1..4")));
    }
    Ok((i as usize, j as usize))
}

fn new_system(sys: SpinSystem, out_handle: *mut *mut MuSystem) -> Result<(), Failure> {
    sys.validate()?;
    // SAFETY: caller contract of the exported constructors.
    let slot = unsafe { out(out_handle, "out")? };
    *slot = Box::into_raw(Box::new(MuSystem { inner: sys }));
    Ok(())
}

/// Message of the last failed call on this thread, or null after a successful one. The
/// pointer stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn mu_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Isotropic system with hyperfine constant `a_iso_mhz`.
///
/// # Safety
/// `out_handle` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mu_system_isotropic(g_e: f64, a_iso_mhz: f64, out_handle: *mut *mut MuSystem) -> MuStatus {
    guard(|| new_system(SpinSystem::isotropic(g_e, a_iso_mhz), out_handle))
}

/// Axially symmetric system with the symmetry axis along B₀.
///
/// # Safety
/// `out_handle` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mu_system_axial(
    g_e: f64,
    a_par_mhz: f64,
    a_perp_mhz: f64,
    out_handle: *mut *mut MuSystem,
) -> MuStatus {
    guard(|| new_system(SpinSystem::axial(g_e, a_par_mhz, a_perp_mhz), out_handle))
}

/// Releases a handle. Null is accepted and ignored.
///
/// # Safety
/// `sys` is null or a handle from `mu_system_*` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mu_system_free(sys: *mut MuSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Energies of levels 1..4 in MHz at `b0_mt`, in label order.
///
/// # Safety
/// `sys` is a live handle; `energies_out` points to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mu_level_energies(sys: *const MuSystem, b0_mt: f64, energies_out: *mut f64) -> MuStatus {
    guard(|| {
        let s = system(sys)?;
        if energies_out.is_null() {
            return Err(null("energies_out"));
        }
        let d = level_diagram(s, b0_mt)?;
        ptr::copy_nonoverlapping(d.energies.as_ptr(), energies_out, 4);
        Ok(())
    })
}

/// Signed splitting E_i − E_j in MHz.
///
/// # Safety
/// `sys` is a live handle; `nu_out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mu_transition_frequency(
    sys: *const MuSystem,
    b0_mt: f64,
    i: u32,
    j: u32,
    nu_out: *mut f64,
) -> MuStatus {
    guard(|| {
        let s = system(sys)?;
        let (i, j) = transition_index(i, j)?;
        let nu = out(nu_out, "nu_out")?;
        *nu = level_diagram(s, b0_mt)?.splitting(i, j);
        Ok(())
    })
}

/// Rabi frequency γ_ij·B₁/2 in MHz of transition (i,j) under a linearly polarized drive.
///
/// # Safety
/// `sys` is a live handle; `nu1_out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mu_rabi_frequency(
    sys: *const MuSystem,
    b0_mt: f64,
    i: u32,
    j: u32,
    b1_mt: f64,
    nu1_out: *mut f64,
) -> MuStatus {
    guard(|| {
        let s = system(sys)?;
        let (i, j) = transition_index(i, j)?;
        let nu1 = out(nu1_out, "nu1_out")?;
        *nu1 = transition_table(s, b0_mt)?
            .rabi_frequency(i, j, b1_mt)
            .ok_or_else(|| invalid(format!("no transition ({i},{j})")))?;
        Ok(())
    })
}

/// Driven muon frequencies ν₁₂ and ν₃₄ in MHz under a continuous drive at `nu_uw_mhz`
/// with Rabi frequency `nu1_mhz`. `flagged_out` may be null; it is set to 1 near a
/// resonance where the closed form is unreliable.
///
/// # Safety
/// `sys` is a live handle; `nu12_out` and `nu34_out` are valid for writes; `flagged_out` is
/// null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mu_demur_frequencies(
    sys: *const MuSystem,
    b0_mt: f64,
    nu_uw_mhz: f64,
    nu1_mhz: f64,
    nu12_out: *mut f64,
    nu34_out: *mut f64,
    flagged_out: *mut u8,
) -> MuStatus {
    guard(|| {
        let s = system(sys)?;
        let (a, b) = (out(nu12_out, "nu12_out")?, out(nu34_out, "nu34_out")?);
        let p = demur_eigenfrequencies(s, b0_mt, nu_uw_mhz, nu1_mhz)?;
        *a = p.nu12_tr;
        *b = p.nu34_tr;
        if let Some(f) = flagged_out.as_mut() {
            *f = u8::from(p.flagged);
        }
        Ok(())
    })
}

/// Muon polarization under a continuous drive from t = 0 to `t_end_ns`, in the rotating
/// frame with step `dt_ns`. `geometry` is a [`MuGeometry`] value; `relaxation` may be null
/// for coherent evolution.
///
/// Writes up to `capacity` samples into `times_out` (ns) and `values_out`, and the sample
/// count into `len_out`. When `capacity` is too small nothing but `len_out` is written and
/// the call returns [`MuStatus::BufferTooSmall`]; pass `capacity = 0` to query the length.
///
/// # Safety
/// `sys` is a live handle; `len_out` is valid for writes; `times_out` and `values_out` are
/// each valid for `capacity` writes (either may be null when `capacity` is 0);
/// `relaxation` is null or readable.
#[no_mangle]
pub unsafe extern "C" fn mu_propagate_cw(
    sys: *const MuSystem,
    b0_mt: f64,
    b1_mt: f64,
    nu_uw_mhz: f64,
    t_end_ns: f64,
    dt_ns: f64,
    geometry: u32,
    relaxation: *const MuRelaxation,
    times_out: *mut f64,
    values_out: *mut f64,
    capacity: usize,
    len_out: *mut usize,
) -> MuStatus {
    guard(|| {
        let s = system(sys)?;
        let len = out(len_out, "len_out")?;
        let geom = match geometry {
            g if g == MuGeometry::Longitudinal as u32 => Geometry::LF,
            g if g == MuGeometry::Transverse as u32 => Geometry::TF,
            g => return Err(invalid(format!("unknown geometry {g}"))),
        };
        let relax = match relaxation.as_ref() {
            Some(r) => RelaxationModel::electron_muon(r.electron, r.muon12, r.muon34),
            None => RelaxationModel::none(),
        };
        let seq = templates::demur_cw(b1_mt, nu_uw_mhz, t_end_ns, geom);
        let opts = PropagateOptions::rotating(dt_ns).with_sampling(Sampling::BinAverage);
        let p = propagate(&initial_state(geom), s, b0_mt, &seq, &relax, &opts)?;
        let n = p.trace.len();
        *len = n;
        if capacity < n {
            return Err(Failure(MuStatus::BufferTooSmall, format!("need {n} samples, capacity is {capacity}")));
        }
        if times_out.is_null() || values_out.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(p.trace.times.as_ptr(), times_out, n);
        ptr::copy_nonoverlapping(p.trace.values.as_ptr(), values_out, n);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_status_codes() {
        assert_eq!(Failure::from(Error::InvalidArgument("x".into())).0, MuStatus::InvalidArgument);
        assert_eq!(Failure::from(Error::Numerical("x".into())).0, MuStatus::Numerical);
        assert_eq!(Failure::from(Error::Contract("x".into())).0, MuStatus::Internal);
    }

    #[test]
    fn panics_become_a_status() {
        assert_eq!(guard(|| panic!("boom")), MuStatus::Panic);
        let msg = unsafe { std::ffi::CStr::from_ptr(mu_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "panic: boom");
        assert_eq!(guard(|| Ok(())), MuStatus::Ok);
        assert!(mu_last_error_message().is_null());
    }
}
