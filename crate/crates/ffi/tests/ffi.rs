use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use roadmark_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0u8; 1024];
    let mut needed = 0;
    unsafe { rm_last_error(buf.as_mut_ptr().cast(), buf.len(), &mut needed) };
    CStr::from_bytes_until_nul(&buf).unwrap().to_string_lossy().into_owned()
}

fn experiment(json: &str, out: &Path) -> *mut RmExperiment {
    let json = CString::new(json).unwrap();
    let out = CString::new(out.to_str().unwrap()).unwrap();
    let mut exp = ptr::null_mut();
    unsafe {
        assert_eq!(rm_experiment_new(json.as_ptr(), &mut exp), RmStatus::Ok, "{}", last_error());
        assert_eq!(rm_experiment_set_out(exp, out.as_ptr()), RmStatus::Ok);
    }
    exp
}

unsafe fn steering(t: *const RmTrace) -> Vec<f64> {
    let mut len = 0;
    assert_eq!(rm_trace_steering(t, ptr::null_mut(), 0, &mut len), RmStatus::BufferTooSmall);
    let mut buf = vec![0.0; len];
    assert_eq!(rm_trace_steering(t, buf.as_mut_ptr(), len, &mut len), RmStatus::Ok);
    buf
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(rm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn bad_configs_report_errors() {
    let mut exp = ptr::null_mut();
    let bad = CString::new(r#"{"scenario": "moon-base"}"#).unwrap();
    unsafe {
        assert_eq!(rm_experiment_new(bad.as_ptr(), &mut exp), RmStatus::ConfigError);
        assert!(exp.is_null());
        assert!(last_error().contains("moon-base"));
        let bad = CString::new(r#"{"slot": "nowhere"}"#).unwrap();
        assert_eq!(rm_experiment_new(bad.as_ptr(), &mut exp), RmStatus::ConfigError);
        assert_eq!(rm_experiment_new(ptr::null(), ptr::null_mut()), RmStatus::NullPointer);
        let mut n = 0;
        assert_eq!(rm_experiment_dimension(ptr::null(), &mut n), RmStatus::NullPointer);
        let mut tiny = [0 as c_char; 2];
        let mut needed = 0;
        assert_eq!(rm_last_error(tiny.as_mut_ptr(), tiny.len(), &mut needed), RmStatus::BufferTooSmall);
        assert!(needed > 2);
        rm_experiment_free(ptr::null_mut());
        rm_trace_free(ptr::null_mut());
    }
}

#[test]
fn baseline_and_episode() {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment(r#"{"scenario": "right-turn", "pattern": "single"}"#, dir.path());
    unsafe {
        let mut dim = 0;
        assert_eq!(rm_experiment_dimension(exp, &mut dim), RmStatus::Ok);
        let (mut lo, mut hi, mut len) = (vec![0.0; dim], vec![0.0; dim], 0);
        assert_eq!(rm_experiment_bounds(exp, lo.as_mut_ptr(), hi.as_mut_ptr(), 0, &mut len), RmStatus::BufferTooSmall);
        assert_eq!(len, dim);
        assert_eq!(rm_experiment_bounds(exp, lo.as_mut_ptr(), hi.as_mut_ptr(), dim, &mut len), RmStatus::Ok);
        assert!(lo.iter().zip(&hi).all(|(a, b)| a < b));

        let mut base = ptr::null_mut();
        assert_eq!(rm_experiment_baseline(exp, &mut base), RmStatus::Ok, "{}", last_error());
        let mut sev = RmSeverity::Collision;
        assert_eq!(rm_trace_severity(base, &mut sev), RmStatus::Ok);
        assert_eq!(sev, RmSeverity::Safe);
        let n = rm_trace_len(base);
        assert_eq!(steering(base).len(), n);
        let mut xy = vec![0.0; 2 * n];
        assert_eq!(rm_trace_positions(base, xy.as_mut_ptr(), xy.len(), &mut len), RmStatus::Ok);
        assert_eq!(len, 2 * n);

        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        let mut score = f64::NAN;
        assert_eq!(rm_experiment_episode(exp, mid.as_ptr(), dim, &mut a, &mut score), RmStatus::Ok, "{}", last_error());
        assert!(score.is_finite());
        assert_eq!(rm_experiment_episode(exp, mid.as_ptr(), dim, &mut b, ptr::null_mut()), RmStatus::Ok);
        assert_eq!(steering(a), steering(b));
        let (mut first, mut count) = (0, 0);
        assert_eq!(rm_trace_visibility(a, &mut first, &mut count), RmStatus::Ok);
        assert!(count > 0 && first + count <= rm_trace_len(a));

        let mut c = ptr::null_mut();
        assert_eq!(rm_experiment_episode(exp, mid.as_ptr(), dim - 1, &mut c, ptr::null_mut()), RmStatus::InvalidArgument);
        assert!(c.is_null());

        rm_trace_free(a);
        rm_trace_free(b);
        rm_trace_free(base);
        rm_experiment_free(exp);
    }
}

#[test]
fn search_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment(
        r#"{"scenario": "left-turn", "strategy": "random", "budget": 3, "seed": 2}"#,
        dir.path(),
    );
    let mut s = RmSummary {
        evaluated: 0,
        failed: 0,
        resumed: 0,
        simulated: 0,
        best_iteration: 0,
        best_score: 0.0,
        worst_severity: 0,
        hijack_successes: 0,
    };
    unsafe {
        assert_eq!(rm_experiment_search(exp, 1, &mut s), RmStatus::Ok, "{}", last_error());
        assert_eq!((s.evaluated, s.simulated, s.resumed), (3, 3, 0));
        assert!(s.best_iteration >= 0 && s.best_score.is_finite() && s.worst_severity >= 0);
        assert_eq!(rm_experiment_search(exp, 1, &mut s), RmStatus::Ok);
        assert_eq!((s.evaluated, s.simulated, s.resumed), (3, 0, 3));
        rm_experiment_free(exp);
    }
}

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = header_dir().join("roadmark.h");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Wextra", "-Werror", "-x", lang])
            .arg(&header)
            .output()
            .expect("a C toolchain");
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_against_static_library() {
    // target/tmp -> target/<profile>
    let tmp = Path::new(env!("CARGO_TARGET_TMPDIR"));
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    let lib = tmp.parent().unwrap().join(profile).join("libroadmark_ffi.a");
    assert!(lib.is_file(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(header_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).arg(dir.path().join("out")).output().unwrap();
    assert!(run.status.success(), "{run:?}");
    assert!(String::from_utf8_lossy(&run.stdout).contains("severity 0"));
}
