use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use fss_core::config::parse_config;
use fss_ffi::*;

const CONFIG: &str = r#"{
    "grid": {"lo": [0.0], "hi": [1.0], "h": 0.125, "collar_width": 0.5},
    "params": {"s": 0.5, "p": 2.0},
    "weight": {"kind": "constant", "value": 1.0, "r": 4.0},
    "problem": {"alpha": 0.5}
}"#;

fn problem() -> *mut FssProblem {
    let json = CString::new(CONFIG).unwrap();
    let mut pb = ptr::null_mut();
    assert_eq!(unsafe { fss_problem_from_json(json.as_ptr(), &mut pb) }, FssStatus::Ok);
    assert!(!pb.is_null());
    pb
}

fn last_error() -> String {
    let p = fss_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn solve_matches_core() {
    let pb = problem();
    let n = unsafe { fss_problem_num_nodes(pb) };
    assert_eq!(n, 7);
    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { fss_solve(pb, 0.5, &mut sol) }, FssStatus::Ok);
    let mut u = vec![0.0; n];
    assert_eq!(unsafe { fss_solution_values(sol, u.as_mut_ptr(), n) }, FssStatus::Ok);
    let mut lambda = 0.0;
    assert_eq!(unsafe { fss_solution_constant(sol, &mut lambda) }, FssStatus::Ok);
    assert_eq!(unsafe { fss_solution_converged(sol) }, 1);

    let cfg = parse_config(CONFIG).unwrap();
    let grid = cfg.build_grid().unwrap();
    let kernel = cfg.build_kernel(&grid).unwrap();
    let omega = cfg.build_weight(&grid).unwrap();
    let chain = fss_core::chain::run_chain(
        &omega,
        0.5,
        &kernel,
        &cfg.problem.n_schedule,
        &cfg.chain_options(),
    )
    .unwrap();
    assert_eq!(u, chain.u_alpha.values());
    let sol_core = fss_core::constants::lambda_alpha(&chain, &omega, &kernel).unwrap();
    assert_eq!(lambda, sol_core.lambda());

    let mut semi = 0.0;
    assert_eq!(unsafe { fss_seminorm(pb, u.as_ptr(), n, &mut semi) }, FssStatus::Ok);
    assert_eq!(semi, fss_core::ops::seminorm_p(&chain.u_alpha, &kernel).unwrap());

    // stationarity: (Au)_i = m omega_i u_i^-alpha
    let mut au = vec![0.0; n];
    assert_eq!(unsafe { fss_apply_operator(pb, u.as_ptr(), n, au.as_mut_ptr()) }, FssStatus::Ok);
    let m = kernel.cell_measure();
    for (a, x) in au.iter().zip(&u) {
        let rhs = m / x.sqrt();
        assert!((a - rhs).abs() <= 1e-8 * rhs, "{a} vs {rhs}");
    }

    unsafe {
        fss_solution_free(sol);
        fss_problem_free(pb);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut pb = ptr::null_mut();
    let bad = CString::new("{\"grid\": [").unwrap();
    assert_eq!(unsafe { fss_problem_from_json(bad.as_ptr(), &mut pb) }, FssStatus::Parse);
    assert!(pb.is_null());
    assert!(last_error().contains("line 1"));

    let bad = CString::new(CONFIG.replace("\"s\": 0.5", "\"s\": 1.2")).unwrap();
    assert_eq!(unsafe { fss_problem_from_json(bad.as_ptr(), &mut pb) }, FssStatus::Config);
    assert!(last_error().contains("params.s"));

    assert_eq!(
        unsafe { fss_problem_from_json(ptr::null(), &mut pb) },
        FssStatus::NullPointer
    );

    let pb = problem();
    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { fss_solve(pb, -1.0, &mut sol) }, FssStatus::InvalidArgument);
    assert!(sol.is_null());
    // alpha > 1 needs a compactly supported weight
    assert_eq!(unsafe { fss_solve(pb, 1.5, &mut sol) }, FssStatus::InvalidArgument);

    let u = [1.0; 3];
    let mut out = 0.0;
    assert_eq!(unsafe { fss_seminorm(pb, u.as_ptr(), 3, &mut out) }, FssStatus::GridMismatch);
    assert!(last_error().contains("grid mismatch"));

    // success clears the message
    let mut s = 0.0;
    assert_eq!(unsafe { fss_embedding_constant(pb, 2.0, &mut s) }, FssStatus::Ok);
    assert!(s > 0.0);
    assert!(fss_last_error().is_null());
    unsafe { fss_problem_free(pb) };
}

#[test]
fn null_handles_are_tolerated() {
    unsafe {
        fss_problem_free(ptr::null_mut());
        fss_solution_free(ptr::null_mut());
        assert_eq!(fss_problem_num_nodes(ptr::null()), 0);
        assert_eq!(fss_solution_len(ptr::null()), 0);
        let mut out = 0.0;
        assert_eq!(fss_solution_constant(ptr::null(), &mut out), FssStatus::NullPointer);
    }
    let name = unsafe { CStr::from_ptr(fss_status_name(FssStatus::CorruptSolution)) };
    assert_eq!(name.to_str().unwrap(), "corrupt solution file");
}

#[test]
fn saved_solution_loads_in_core() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sol.json");
    let pb = problem();
    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { fss_solve(pb, 1.0, &mut sol) }, FssStatus::Ok);
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fss_solution_save(sol, cpath.as_ptr()) }, FssStatus::Ok);
    let file = fss_core::io::load_solution(&path).unwrap();
    assert_eq!(file.alpha, 1.0);
    assert_eq!(file.constant.unwrap().kind, fss_core::io::ConstantKind::Mu);
    assert_eq!(file.values.len(), unsafe { fss_solution_len(sol) });
    unsafe {
        fss_solution_free(sol);
        fss_problem_free(pb);
    }
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("fss.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for sym in [
        "fss_problem_from_json",
        "fss_problem_from_file",
        "fss_problem_free",
        "fss_solve",
        "fss_solution_values",
        "fss_solution_constant",
        "fss_solution_save",
        "fss_last_error",
        "FSS_STATUS_GRID_MISMATCH",
        "typedef struct FssProblem FssProblem",
    ] {
        assert!(text.contains(sym), "missing {sym}");
    }
}

/// Compiles and runs the C smoke program against the static library when a C
/// compiler is on PATH.
#[test]
fn c_program_links_and_runs() {
    // `cargo test` leaves the archive in deps/; `cargo build` uplifts it.
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let lib = [deps, deps.parent().unwrap()]
        .iter()
        .map(|d| d.join("libfss_ffi.a"))
        .find(|p| p.exists())
        .unwrap_or_else(|| deps.join("libfss_ffi.a"));
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let src = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let status = Command::new(&cc)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.starts_with("7 "), "{line}");
}
