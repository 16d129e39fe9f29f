//! C interface to `fss-core`.
//!
//! Objects are opaque handles created by `fss_problem_from_*` and `fss_solve`, released
//! with the matching `*_free`. Every fallible call returns an [`FssStatus`];
//! the message of the last failure on the calling thread is available from
//! [`fss_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fss_core::chain::run_chain;
use fss_core::config::{parse_config, RunConfig};
use fss_core::constants::{lambda_alpha, mu_from_solution};
use fss_core::domain::{Grid, Kernel};
use fss_core::io::{
    config_hash, portable_config, save_solution, ConstantKind, ConstantValue, SolutionFile,
    FORMAT_VERSION,
};
use fss_core::ops::{apply_operator, seminorm_p, Field, WeightField};
use fss_core::solver::embedding_constant;
use fss_core::FssError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    NonConvergence = 5,
    GridMismatch = 6,
    CorruptSolution = 7,
    Io = 8,
    BufferTooSmall = 9,
    Undefined = 10,
    Panic = 11,
}

fn status_of(e: &FssError) -> FssStatus {
    match e {
        FssError::DegenerateGrid(_)
        | FssError::InvalidParameter { .. }
        | FssError::NotPositive { .. }
        | FssError::ThetaTooSmall { .. }
        | FssError::AlphaIsOne => FssStatus::InvalidArgument,
        FssError::GridMismatch { .. } => FssStatus::GridMismatch,
        FssError::NonConvergence { .. }
        | FssError::FixedPointStagnation { .. }
        | FssError::Quadrature { .. } => FssStatus::NonConvergence,
        FssError::MuUndefined | FssError::NotStampacchia(_) => FssStatus::Undefined,
        FssError::Config { .. } => FssStatus::Config,
        FssError::Parse { .. } => FssStatus::Parse,
        FssError::CorruptSolution(_) | FssError::UnsupportedVersion { .. } => {
            FssStatus::CorruptSolution
        }
        FssError::Io(_) | FssError::Csv(_) => FssStatus::Io,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn guard(f: impl FnOnce() -> Result<(), (FssStatus, String)>) -> FssStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FssStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FssStatus::Panic
        }
    }
}

type Fallible<T> = Result<T, (FssStatus, String)>;

fn core<T>(r: fss_core::Result<T>) -> Fallible<T> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (FssStatus, String) {
    (FssStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Fallible<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (FssStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Fallible<&'a [f64]> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Fallible<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Grid, kernel and weight built from a run configuration.
pub struct FssProblem {
    cfg: RunConfig,
    grid: Grid,
    kernel: Kernel,
    omega: WeightField,
}

/// Singular solution `u_alpha` with its best constant.
pub struct FssSolution {
    file: SolutionFile,
}

fn build_problem(cfg: RunConfig) -> Fallible<FssProblem> {
    core(cfg.validate())?;
    let grid = core(cfg.build_grid())?;
    let kernel = core(cfg.build_kernel(&grid))?;
    let omega = core(cfg.build_weight(&grid))?;
    Ok(FssProblem {
        cfg,
        grid,
        kernel,
        omega,
    })
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn fss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn fss_status_name(status: FssStatus) -> *const c_char {
    let s: &'static CStr = match status {
        FssStatus::Ok => c"ok",
        FssStatus::NullPointer => c"null pointer",
        FssStatus::InvalidArgument => c"invalid argument",
        FssStatus::Config => c"config error",
        FssStatus::Parse => c"parse error",
        FssStatus::NonConvergence => c"no convergence",
        FssStatus::GridMismatch => c"grid mismatch",
        FssStatus::CorruptSolution => c"corrupt solution file",
        FssStatus::Io => c"i/o error",
        FssStatus::BufferTooSmall => c"buffer too small",
        FssStatus::Undefined => c"undefined",
        FssStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Builds a problem from JSON config text. Relative paths resolve against
/// the working directory.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fss_problem_from_json(
    json: *const c_char,
    out: *mut *mut FssProblem,
) -> FssStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(json, "json")?;
        let problem = build_problem(core(parse_config(text))?)?;
        *out = Box::into_raw(Box::new(problem));
        Ok(())
    })
}

/// Builds a problem from a config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fss_problem_from_file(
    path: *const c_char,
    out: *mut *mut FssProblem,
) -> FssStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let cfg = core(fss_core::config::load_config(Path::new(path)))?;
        *out = Box::into_raw(Box::new(build_problem(cfg)?));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from `fss_problem_from_*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fss_problem_free(problem: *mut FssProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of interior nodes, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fss_problem_num_nodes(problem: *const FssProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.kernel.num_nodes())
}

/// Discrete Gagliardo energy `[u]^p` of the nodal values `u`.
///
/// # Safety
/// `u` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fss_seminorm(
    problem: *const FssProblem,
    u: *const f64,
    len: usize,
    out: *mut f64,
) -> FssStatus {
    guard(|| {
        let pb = problem.as_ref().ok_or_else(|| null("problem"))?;
        let out = out_arg(out, "out")?;
        let u = core(Field::from_values(&pb.grid, slice_arg(u, len, "u")?.to_vec()))?;
        *out = core(seminorm_p(&u, &pb.kernel))?;
        Ok(())
    })
}

/// Writes `(A u)_i` to `out[0..len]`.
///
/// # Safety
/// `u` must point to `len` doubles and `out` to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fss_apply_operator(
    problem: *const FssProblem,
    u: *const f64,
    len: usize,
    out: *mut f64,
) -> FssStatus {
    guard(|| {
        let pb = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let u = core(Field::from_values(&pb.grid, slice_arg(u, len, "u")?.to_vec()))?;
        let au = core(apply_operator(&u, &pb.kernel))?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&au);
        Ok(())
    })
}

/// Best constant `S` in `|v|_theta^p <= S [v]^p`.
///
/// # Safety
/// `problem` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fss_embedding_constant(
    problem: *const FssProblem,
    theta: f64,
    out: *mut f64,
) -> FssStatus {
    guard(|| {
        let pb = problem.as_ref().ok_or_else(|| null("problem"))?;
        let out = out_arg(out, "out")?;
        *out = core(embedding_constant(theta, &pb.kernel, &pb.cfg.solve_options()))?.value;
        Ok(())
    })
}

/// Runs the approximation chain for `alpha` using the configured schedule
/// and tolerances.
///
/// # Safety
/// `problem` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fss_solve(
    problem: *const FssProblem,
    alpha: f64,
    out: *mut *mut FssSolution,
) -> FssStatus {
    guard(|| {
        let pb = problem.as_ref().ok_or_else(|| null("problem"))?;
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let opts = pb.cfg.chain_options();
        let chain = core(run_chain(
            &pb.omega,
            alpha,
            &pb.kernel,
            &pb.cfg.problem.n_schedule,
            &opts,
        ))?;
        let (constant, seminorm_extremal) = if alpha < 1.0 {
            let sol = core(lambda_alpha(&chain, &pb.omega, &pb.kernel))?;
            let c = ConstantValue {
                kind: ConstantKind::Lambda,
                value: sol.lambda(),
                ln_value: sol.ln_lambda,
            };
            (Some(c), Some(sol.seminorm_u))
        } else if alpha == 1.0 {
            let mu = core(mu_from_solution(
                &chain.u_alpha,
                &pb.omega,
                &pb.kernel,
                chain.converged,
                &opts,
            ))?;
            let c = ConstantValue {
                kind: ConstantKind::Mu,
                value: mu.mu,
                ln_value: mu.mu.ln(),
            };
            (Some(c), Some(mu.mu))
        } else {
            (None, None)
        };
        let mut cfg = portable_config(&pb.cfg);
        cfg.problem.alpha = Some(alpha);
        let file = SolutionFile {
            version: FORMAT_VERSION,
            config_hash: config_hash(&cfg),
            config: cfg,
            grid_shape: pb.grid.shape().to_vec(),
            alpha,
            constant,
            seminorm_u: core(seminorm_p(&chain.u_alpha, &pb.kernel))?,
            seminorm_extremal,
            converged: chain.converged,
            values: chain.u_alpha.into_values(),
        };
        *out = Box::into_raw(Box::new(FssSolution { file }));
        Ok(())
    })
}

/// # Safety
/// `solution` must come from `fss_solve` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fss_solution_free(solution: *mut FssSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Number of stored values, or 0 for a null handle.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fss_solution_len(solution: *const FssSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.file.values.len())
}

/// Copies the nodal values into `buf`, which must hold at least
/// `fss_solution_len` doubles.
///
/// # Safety
/// `buf` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fss_solution_values(
    solution: *const FssSolution,
    buf: *mut f64,
    cap: usize,
) -> FssStatus {
    guard(|| {
        let sol = solution.as_ref().ok_or_else(|| null("solution"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = &sol.file.values;
        if cap < v.len() {
            return Err((
                FssStatus::BufferTooSmall,
                format!("need {} doubles, got {cap}", v.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, v.len()).copy_from_slice(v);
        Ok(())
    })
}

/// `lambda_alpha` for `alpha < 1`, `mu` for `alpha = 1`; `Undefined` for
/// `alpha > 1`.
///
/// # Safety
/// `solution` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fss_solution_constant(
    solution: *const FssSolution,
    out: *mut f64,
) -> FssStatus {
    guard(|| {
        let sol = solution.as_ref().ok_or_else(|| null("solution"))?;
        let out = out_arg(out, "out")?;
        match sol.file.constant {
            Some(c) => {
                *out = c.value;
                Ok(())
            }
            None => Err((FssStatus::Undefined, "no best constant for alpha > 1".into())),
        }
    })
}

/// Whether the chain met its stopping tolerance (1) or hit the last level (0).
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fss_solution_converged(solution: *const FssSolution) -> i32 {
    solution.as_ref().map_or(0, |s| s.file.converged as i32)
}

/// Writes the solution file read by `fss verify`.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fss_solution_save(
    solution: *const FssSolution,
    path: *const c_char,
) -> FssStatus {
    guard(|| {
        let sol = solution.as_ref().ok_or_else(|| null("solution"))?;
        let path = str_arg(path, "path")?;
        core(save_solution(Path::new(path), &sol.file))
    })
}
