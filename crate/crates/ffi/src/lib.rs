//! C interface to `mimo-ipc`.
//!
//! Conventions:
//! - every fallible call returns a [`MipcStatus`]; on failure a message is
//!   kept per thread and can be read with [`mipc_last_error_message`];
//! - instances and solutions are opaque handles released with their
//!   `_free` function; passing NULL to a `_free` function is a no-op;
//! - matrices are row-major `m × m` arrays of real parts plus an optional
//!   (nullable) array of imaginary parts;
//! - panics never cross the boundary; they are reported as `MIPC_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mimo_ipc::error::Error;
use mimo_ipc::hermitian::HermitianMatrix;
use mimo_ipc::iba::SolverConfig;
use mimo_ipc::io::{parse_instance, solution_to_json};
use mimo_ipc::problem::{IpcConstraint, ProblemInstance};
use mimo_ipc::solve::solve_with;
use mimo_ipc::solver::Solution;
use num_complex::Complex64;

/// Status codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MipcStatus {
    Ok = 0,
    InvalidArgument = 1,
    Parse = 2,
    Numerical = 3,
    /// The iteration limit was hit; the best iterate is still returned.
    NotConverged = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Opaque problem instance.
pub struct MipcInstance {
    inner: ProblemInstance,
}

/// Opaque solution.
pub struct MipcSolution {
    inner: Solution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> MipcStatus {
    match e {
        Error::Parse(_) => MipcStatus::Parse,
        Error::Numerical(_) | Error::DegenerateDuals => MipcStatus::Numerical,
        Error::NotConverged(_) => MipcStatus::NotConverged,
        _ => MipcStatus::InvalidArgument,
    }
}

fn fail(e: Error) -> MipcStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn guard(f: impl FnOnce() -> MipcStatus) -> MipcStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MipcStatus::Panic
        }
    }
}

fn null(what: &str) -> MipcStatus {
    set_error(format!("null pointer: {what}"));
    MipcStatus::NullPointer
}

/// # Safety
/// `re` must hold `m*m` doubles; `im` is NULL or holds `m*m` doubles.
unsafe fn read_matrix(m: usize, re: *const f64, im: *const f64) -> Vec<Vec<Complex64>> {
    let re = std::slice::from_raw_parts(re, m * m);
    let im = if im.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(im, m * m))
    };
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| Complex64::new(re[i * m + j], im.map_or(0.0, |v| v[i * m + j])))
                .collect()
        })
        .collect()
}

fn checked_hermitian(name: &str, rows: &[Vec<Complex64>]) -> Result<HermitianMatrix, Error> {
    for (i, row) in rows.iter().enumerate() {
        for (j, &z) in row.iter().enumerate() {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::InvalidMatrix {
                    matrix: name.into(),
                    reason: "non-finite entry".into(),
                });
            }
            if (z - rows[j][i].conj()).norm() > 1e-9 * (1.0 + z.norm()) {
                return Err(Error::InvalidMatrix {
                    matrix: name.into(),
                    reason: "not Hermitian".into(),
                });
            }
        }
    }
    HermitianMatrix::from_rows(rows)
}

/// Parses an instance document (UTF-8 JSON text).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mipc_instance_from_json(json: *const c_char, out: *mut *mut MipcInstance) -> MipcStatus {
    guard(|| {
        if json.is_null() {
            return null("json");
        }
        if out.is_null() {
            return null("out");
        }
        *out = ptr::null_mut();
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(_) => return fail(Error::Parse("instance text is not valid UTF-8".into())),
        };
        match parse_instance(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MipcInstance { inner }));
                MipcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Builds an instance from arrays. `w2_re`/`w2_im` hold `k` consecutive
/// `m × m` blocks and `p_i` holds `k` budgets; with `k = 0` they may be
/// NULL. Imaginary arrays may be NULL for real data.
///
/// # Safety
/// Pointers must be valid for the sizes described above.
#[no_mangle]
pub unsafe extern "C" fn mipc_instance_new(
    m: usize,
    w1_re: *const f64,
    w1_im: *const f64,
    k: usize,
    w2_re: *const f64,
    w2_im: *const f64,
    p_i: *const f64,
    p_t: f64,
    out: *mut *mut MipcInstance,
) -> MipcStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        *out = ptr::null_mut();
        if w1_re.is_null() {
            return null("w1_re");
        }
        if k > 0 && (w2_re.is_null() || p_i.is_null()) {
            return null("w2_re/p_i");
        }
        if m == 0 {
            return fail(Error::Domain("m must be at least 1".into()));
        }
        let Some(block) = m.checked_mul(m) else {
            return fail(Error::Domain("m too large".into()));
        };
        let build = || -> Result<ProblemInstance, Error> {
            let w1 = checked_hermitian("W1", &read_matrix(m, w1_re, w1_im))?;
            let mut cs = Vec::with_capacity(k);
            for j in 0..k {
                let name = if k == 1 { "W2".to_string() } else { format!("W2[{j}]") };
                let im = if w2_im.is_null() { ptr::null() } else { w2_im.add(j * block) };
                let w2 = checked_hermitian(&name, &read_matrix(m, w2_re.add(j * block), im))?;
                cs.push(IpcConstraint { w2, p_i: *p_i.add(j) });
            }
            ProblemInstance::new(w1, cs, p_t)
        };
        match build() {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MipcInstance { inner }));
                MipcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `inst` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mipc_instance_free(inst: *mut MipcInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// # Safety
/// `inst` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mipc_instance_dim(inst: *const MipcInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.inner.dim())
}

/// # Safety
/// `inst` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mipc_instance_num_ipc(inst: *const MipcInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.inner.num_ipc())
}

/// Solves `inst`. `epsilon <= 0` selects the default tolerance and
/// `k_max == 0` the default iteration limit. On `MIPC_NOT_CONVERGED`
/// `*out` still receives the best iterate.
///
/// # Safety
/// `inst` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mipc_solve(
    inst: *const MipcInstance,
    epsilon: f64,
    k_max: usize,
    out: *mut *mut MipcSolution,
) -> MipcStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        *out = ptr::null_mut();
        let Some(inst) = inst.as_ref() else {
            return null("inst");
        };
        let mut cfg = if epsilon > 0.0 {
            SolverConfig::with_epsilon(epsilon)
        } else {
            SolverConfig::default()
        };
        if k_max > 0 {
            cfg.k_max = k_max;
        }
        if let Err(e) = cfg.validate() {
            return fail(e);
        }
        match solve_with(&inst.inner, &cfg) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MipcSolution { inner }));
                MipcStatus::Ok
            }
            Err(Error::NotConverged(s)) => {
                set_error(Error::NotConverged(s.clone()).to_string());
                *out = Box::into_raw(Box::new(MipcSolution { inner: *s }));
                MipcStatus::NotConverged
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `sol` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mipc_solution_free(sol: *mut MipcSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Capacity in nats; NaN for a NULL handle.
///
/// # Safety
/// `sol` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mipc_solution_capacity_nats(sol: *const MipcSolution) -> f64 {
    sol.as_ref().map_or(f64::NAN, |s| s.inner.capacity_nats)
}

/// # Safety
/// `sol` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mipc_solution_capacity_bits(sol: *const MipcSolution) -> f64 {
    sol.as_ref().map_or(f64::NAN, |s| s.inner.capacity_bits())
}

/// # Safety
/// `sol` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mipc_solution_dim(sol: *const MipcSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.inner.covariance.dim())
}

/// # Safety
/// `sol` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mipc_solution_num_ipc(sol: *const MipcSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.inner.duals.mu2.len())
}

/// # Safety
/// `sol` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mipc_solution_iterations(sol: *const MipcSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.inner.iterations)
}

/// Method label as a static NUL-terminated string, or NULL.
///
/// # Safety
/// `sol` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mipc_solution_method(sol: *const MipcSolution) -> *const c_char {
    use mimo_ipc::solver::Method;
    let Some(s) = sol.as_ref() else {
        return ptr::null();
    };
    let label: &'static CStr = match s.inner.method {
        Method::Waterfill => c"waterfill",
        Method::ZeroForcing => c"zero-forcing",
        Method::ZeroCapacity => c"zero-capacity",
        Method::ZeroBudgetProjection => c"zero-budget-projection",
        Method::CommonEigenvectors => c"common-eigenvectors",
        Method::Rank1W1 => c"rank1-w1",
        Method::Rank1W2 => c"rank1-w2",
        Method::IpcOnly => c"ipc-only",
        Method::FullRankTpc => c"full-rank-tpc",
        Method::FullRankIpc => c"full-rank-ipc",
        Method::Iba => c"iba",
    };
    label.as_ptr()
}

/// Writes `mu1` and `num_ipc` values of `mu2` (`mu2` may be NULL when
/// there are no constraints).
///
/// # Safety
/// `mu2` must hold `mu2_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mipc_solution_duals(
    sol: *const MipcSolution,
    mu1: *mut f64,
    mu2: *mut f64,
    mu2_len: usize,
) -> MipcStatus {
    guard(|| {
        let Some(s) = sol.as_ref() else { return null("sol") };
        if mu1.is_null() {
            return null("mu1");
        }
        let d = &s.inner.duals;
        if mu2_len < d.mu2.len() {
            return fail(Error::Domain(format!("mu2 buffer holds {mu2_len}, need {}", d.mu2.len())));
        }
        if !d.mu2.is_empty() && mu2.is_null() {
            return null("mu2");
        }
        *mu1 = d.mu1;
        for (i, &v) in d.mu2.iter().enumerate() {
            *mu2.add(i) = v;
        }
        MipcStatus::Ok
    })
}

/// Writes the covariance row-major into `re` and, unless NULL, `im`;
/// both must hold `len >= m*m` doubles.
///
/// # Safety
/// Buffers must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mipc_solution_covariance(
    sol: *const MipcSolution,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> MipcStatus {
    guard(|| {
        let Some(s) = sol.as_ref() else { return null("sol") };
        if re.is_null() {
            return null("re");
        }
        let m = s.inner.covariance.dim();
        if len < m * m {
            return fail(Error::Domain(format!("buffer holds {len}, need {}", m * m)));
        }
        for i in 0..m {
            for j in 0..m {
                let z = s.inner.covariance.get(i, j);
                *re.add(i * m + j) = z.re;
                if !im.is_null() {
                    *im.add(i * m + j) = z.im;
                }
            }
        }
        MipcStatus::Ok
    })
}

/// Solution document as a newly allocated string; release it with
/// [`mipc_string_free`].
///
/// # Safety
/// `sol` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mipc_solution_to_json(sol: *const MipcSolution, out: *mut *mut c_char) -> MipcStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        *out = ptr::null_mut();
        let Some(s) = sol.as_ref() else { return null("sol") };
        match CString::new(solution_to_json(&s.inner, false)) {
            Ok(c) => {
                *out = c.into_raw();
                MipcStatus::Ok
            }
            Err(_) => fail(Error::Numerical("document contains NUL".into())),
        }
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn mipc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn mipc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static.
#[no_mangle]
pub extern "C" fn mipc_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"unknown",
    };
    V.as_ptr()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last() -> Option<String> {
        LAST_ERROR.with(|e| e.borrow().as_ref().map(|s| s.to_string_lossy().into_owned()))
    }

    #[test]
    fn guard_turns_panics_into_status() {
        assert_eq!(guard(|| panic!("boom")), MipcStatus::Panic);
        assert_eq!(last().as_deref(), Some("panic: boom"));
        assert_eq!(guard(|| MipcStatus::Ok), MipcStatus::Ok);
        assert_eq!(last(), None);
    }

    #[test]
    fn errors_map_to_status_codes() {
        assert_eq!(status_of(&Error::Parse("x".into())), MipcStatus::Parse);
        assert_eq!(status_of(&Error::DegenerateDuals), MipcStatus::Numerical);
        assert_eq!(status_of(&Error::Domain("x".into())), MipcStatus::InvalidArgument);
    }

    #[test]
    fn interior_nul_does_not_drop_message() {
        set_error("a\0b");
        assert_eq!(last().as_deref(), Some("a b"));
        clear_error();
    }

    #[test]
    fn read_matrix_is_row_major() {
        let re = [1.0, 2.0, 3.0, 4.0];
        let im = [0.0, 0.5, -0.5, 0.0];
        let rows = unsafe { read_matrix(2, re.as_ptr(), im.as_ptr()) };
        assert_eq!(rows[0][1], Complex64::new(2.0, 0.5));
        assert_eq!(rows[1][0], Complex64::new(3.0, -0.5));
        let real = unsafe { read_matrix(2, re.as_ptr(), std::ptr::null()) };
        assert_eq!(real[1][1], Complex64::new(4.0, 0.0));
    }

    #[test]
    fn hermitian_check_names_matrix() {
        let rows = vec![vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]; 2];
        let e = checked_hermitian("W2[1]", &rows).unwrap_err();
        assert!(e.to_string().contains("W2[1]"), "{e}");
        let nan = vec![vec![Complex64::new(f64::NAN, 0.0)]];
        assert!(checked_hermitian("W1", &nan).is_err());
    }
}
