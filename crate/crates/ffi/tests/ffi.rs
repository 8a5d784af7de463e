use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use hdbo_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(hdbo_last_error_message()) }.to_string_lossy().into_owned()
}

fn problem(fid: u32, dim: usize) -> *mut HdboProblem {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { hdbo_problem_new(fid, dim, 0, &mut p) }, HdboStatus::Ok);
    assert!(!p.is_null());
    p
}

#[test]
fn problem_lifecycle() {
    let p = problem(1, 3);
    assert_eq!(unsafe { hdbo_problem_dim(p) }, 3);
    let direct = hdbo::make_problem(1, 3, 0).unwrap();
    let x = [0.5, -1.0, 2.0];
    let mut y = 0.0;
    assert_eq!(unsafe { hdbo_problem_evaluate(p, x.as_ptr(), 3, &mut y) }, HdboStatus::Ok);
    assert_eq!(y, direct.evaluate(&x).unwrap());
    let mut fopt = 0.0;
    assert_eq!(unsafe { hdbo_problem_f_opt(p, &mut fopt) }, HdboStatus::Ok);
    assert_eq!(fopt, direct.f_opt());

    assert_eq!(unsafe { hdbo_problem_evaluate(p, x.as_ptr(), 2, &mut y) }, HdboStatus::InvalidArgument);
    assert!(last_error().contains("length 3"));
    assert_eq!(unsafe { hdbo_problem_evaluate(p, ptr::null(), 3, &mut y) }, HdboStatus::NullPointer);
    unsafe { hdbo_problem_free(p) };
    unsafe { hdbo_problem_free(ptr::null_mut()) };
    assert_eq!(unsafe { hdbo_problem_dim(ptr::null()) }, 0);
}

#[test]
fn bad_problem_arguments() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { hdbo_problem_new(25, 3, 0, &mut p) }, HdboStatus::InvalidArgument);
    assert!(p.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { hdbo_problem_new(1, 3, 0, ptr::null_mut()) }, HdboStatus::NullPointer);
}

#[test]
fn solver_runs_fill_the_buffer() {
    let p = problem(1, 2);
    let mut ys = vec![f64::NAN; 30];
    let status = unsafe { hdbo_run_solver(c"cmaes".as_ptr(), p, 30, 2, 4, ys.as_mut_ptr(), ys.len()) };
    assert_eq!(status, HdboStatus::Ok);
    assert!(ys.iter().all(|v| v.is_finite()));
    assert!(last_error().is_empty());

    let status = unsafe { hdbo_run_solver(c"ebo".as_ptr(), p, 30, 2, 4, ys.as_mut_ptr(), ys.len()) };
    assert_eq!(status, HdboStatus::UnknownSolver);
    assert!(last_error().contains("turbom"));
    let status = unsafe { hdbo_run_solver(c"cmaes".as_ptr(), p, 31, 2, 4, ys.as_mut_ptr(), ys.len()) };
    assert_eq!(status, HdboStatus::BufferTooSmall);
    unsafe { hdbo_problem_free(p) };
}

#[test]
fn solver_names() {
    let names: Vec<String> = (0..hdbo_solver_count())
        .map(|i| unsafe { CStr::from_ptr(hdbo_solver_name(i)) }.to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["bo", "pca-bo", "kpca-bo", "turbo1", "turbom", "cmaes"]);
    assert!(hdbo_solver_name(6).is_null());
}

#[test]
fn statistics_helpers() {
    let a = [1.0, 2.0, 3.0];
    let b = [0.0; 3];
    let (mut w, mut p) = (f64::NAN, f64::NAN);
    assert_eq!(unsafe { hdbo_wilcoxon(a.as_ptr(), b.as_ptr(), 3, &mut w, &mut p) }, HdboStatus::Ok);
    assert_eq!((w, p), (0.0, 0.25));
    assert_eq!(unsafe { hdbo_wilcoxon(a.as_ptr(), a.as_ptr(), 3, &mut w, &mut p) }, HdboStatus::UndefinedTest);
    // at mean == f_best, EI = std / sqrt(2 pi)
    let ei = hdbo_expected_improvement(1.0, 2.0, 1.0);
    assert!((ei - 2.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
}

#[test]
fn header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/hdbo.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["hdbo_problem_new", "hdbo_problem_evaluate", "hdbo_problem_free", "hdbo_run_solver", "hdbo_wilcoxon"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; header syntax not checked");
        return;
    };
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"hdbo.h\"\n\
         int main(void) {\n\
           HdboProblem *p = 0;\n\
           double y = 0.0;\n\
           double x[2] = {0.0, 0.0};\n\
           if (hdbo_problem_new(1, 2, 0, &p) != HDBO_STATUS_OK) return 1;\n\
           hdbo_problem_evaluate(p, x, 2, &y);\n\
           hdbo_problem_free(p);\n\
           return hdbo_expected_improvement(0.0, 1.0, 0.0) > 0.0 ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
