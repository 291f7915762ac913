use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use anderson_meso_ffi::*;

fn last_error() -> String {
    let p = am_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn path_operator(n: i64) -> *mut AmOperator {
    let mut b = ptr::null_mut();
    let mut op = ptr::null_mut();
    unsafe {
        assert_eq!(am_box_new(&0, &(n - 1), 1, &mut b), AmStatus::Ok);
        let v = vec![0.0; n as usize];
        assert_eq!(am_operator_from_potential(b, v.as_ptr(), v.len(), &mut op), AmStatus::Ok);
        am_box_free(b);
    }
    op
}

#[test]
fn counts_match_path_spectrum() {
    let op = path_operator(10);
    let mut buf = [0.0; 10];
    let mut written = 0;
    let mut count = 0;
    unsafe {
        assert_eq!(am_dense_spectrum(op, buf.as_mut_ptr(), 10, &mut written), AmStatus::Ok);
        assert_eq!(am_count_in_interval(op, 0.0, 3.0, &mut count), AmStatus::Ok);
        am_operator_free(op);
    }
    assert_eq!(written, 10);
    let top = 2.0 * (std::f64::consts::PI / 11.0).cos();
    assert!((buf[9] - top).abs() < 1e-12);
    assert_eq!(count, 5);
}

#[test]
fn small_buffer_reports_required_length() {
    let op = path_operator(6);
    let mut buf = [0.0; 2];
    let mut written = 0;
    let status = unsafe { am_dense_spectrum(op, buf.as_mut_ptr(), 2, &mut written) };
    unsafe { am_operator_free(op) };
    assert_eq!(status, AmStatus::BufferTooSmall);
    assert_eq!(written, 6);
}

#[test]
fn scalar_green_and_inertia() {
    let mut b = ptr::null_mut();
    let mut op = ptr::null_mut();
    let (mut re, mut im) = (0.0, 0.0);
    let mut inertia = AmInertia::default();
    unsafe {
        assert_eq!(am_box_new(&0, &0, 1, &mut b), AmStatus::Ok);
        assert_eq!(am_operator_from_potential(b, &2.0, 1, &mut op), AmStatus::Ok);
        assert_eq!(am_greens_entry(op, 0, 0, 0.0, 1.0, &mut re, &mut im), AmStatus::Ok);
        assert_eq!(am_inertia(op, 3.0, &mut inertia), AmStatus::Ok);
        am_operator_free(op);
        am_box_free(b);
    }
    assert!((re - 0.4).abs() < 1e-14 && (im - 0.2).abs() < 1e-14);
    assert_eq!((inertia.negative, inertia.zero, inertia.positive), (1, 0, 0));
}

#[test]
fn sampling_is_reproducible() {
    let mut b = ptr::null_mut();
    let (mut x, mut y) = (ptr::null_mut(), ptr::null_mut());
    let (mut tx, mut ty) = (0.0, 0.0);
    unsafe {
        assert_eq!(am_box_centered(6, 2, &mut b), AmStatus::Ok);
        assert_eq!(am_box_site_count(b), 169);
        assert_eq!(am_operator_sample(b, 4.0, 11, &mut x), AmStatus::Ok);
        assert_eq!(am_operator_sample(b, 4.0, 11, &mut y), AmStatus::Ok);
        assert_eq!(am_trace_im_resolvent(x, 0.1, 0.05, &mut tx), AmStatus::Ok);
        assert_eq!(am_trace_im_resolvent(y, 0.1, 0.05, &mut ty), AmStatus::Ok);
        am_operator_free(x);
        am_operator_free(y);
        am_box_free(b);
    }
    assert_eq!(tx, ty);
    assert!(tx > 0.0);
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut out = 0.0;
    let mut count = 0;
    unsafe {
        assert_eq!(am_poisson_pmf(-1.0, 0, &mut out), AmStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(am_count_in_interval(ptr::null(), 0.0, 1.0, &mut count), AmStatus::NullPointer);
        assert!(last_error().contains("null"));
        assert_eq!(am_mollifier(0.0, 1.0, 0.0, 1.0, &mut out), AmStatus::Ok);
        assert!(am_last_error().is_null());
        assert!((out - 0.25).abs() < 1e-12);
        am_box_free(ptr::null_mut());
    }
    let op = path_operator(4);
    let (mut re, mut im) = (0.0, 0.0);
    let status = unsafe { am_greens_entry(op, 0, 0, 0.0, 0.0, &mut re, &mut im) };
    unsafe { am_operator_free(op) };
    assert_ne!(status, AmStatus::Ok);
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(am_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "anderson_meso.h"

int main(void) {
    AmBox *b = NULL;
    AmOperator *op = NULL;
    size_t count = 0;
    if (am_box_centered(50, 1, &b) != AM_STATUS_OK) return 1;
    if (am_operator_sample(b, 4.0, 3, &op) != AM_STATUS_OK) return 2;
    if (am_count_in_interval(op, -10.0, 10.0, &count) != AM_STATUS_OK) return 3;
    if (count != am_box_site_count(b)) return 4;
    if (am_count_in_interval(NULL, 0.0, 1.0, &count) != AM_STATUS_NULL_POINTER) return 5;
    if (am_last_error() == NULL) return 6;
    am_operator_free(op);
    am_box_free(b);
    printf("%s\n", am_version());
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let target_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target_dir.join("libanderson_meso_ffi.a");
    if !lib.exists() {
        eprintln!("static library not found at {}; skipping", lib.display());
        return;
    }
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let build = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
