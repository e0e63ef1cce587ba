use std::ffi::{CStr, CString};
use std::ptr;

use nbody_ctrl_ffi::*;

fn family(space: NbcSpace, n: usize, m: usize, epsilon: f64) -> *mut NbcFamily {
    let mut f = ptr::null_mut();
    let status = unsafe { nbc_family_new(space, n, m, epsilon, &mut f) };
    assert_eq!(status, NbcStatus::Ok);
    assert!(!f.is_null());
    f
}

fn last_error() -> String {
    let p = nbc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn family_lifecycle_and_dims() {
    let f = family(NbcSpace::RealLine, 5, 3, 0.2);
    let (mut n, mut m) = (0, 0);
    assert_eq!(unsafe { nbc_family_dims(f, &mut n, &mut m) }, NbcStatus::Ok);
    assert_eq!((n, m), (5, 3));
    unsafe { nbc_family_free(f) };
    unsafe { nbc_family_free(ptr::null_mut()) };
}

#[test]
fn unsupported_family_sets_status_and_message() {
    let mut f = ptr::null_mut();
    let status = unsafe { nbc_family_new(NbcSpace::Circle, 4, 3, 0.2, &mut f) };
    assert_eq!(status, NbcStatus::UnsupportedFamily);
    assert!(f.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_arguments_are_rejected() {
    let status = unsafe { nbc_family_new(NbcSpace::RealLine, 2, 2, 0.1, ptr::null_mut()) };
    assert_eq!(status, NbcStatus::NullPointer);
    let f = family(NbcSpace::RealLine, 2, 2, 0.1);
    let mut out = [0.0; 2];
    let status = unsafe { nbc_eval_field(f, 1, ptr::null(), 2, out.as_mut_ptr()) };
    assert_eq!(status, NbcStatus::NullPointer);
    unsafe { nbc_family_free(f) };
}

#[test]
fn field_values_match_closed_form() {
    // f_2 = (1 + ρ_1, 1) on the line with n = m = 2
    let f = family(NbcSpace::RealLine, 2, 2, 0.5);
    let x = [0.0, 1.5];
    let mut out = [0.0; 2];
    assert_eq!(
        unsafe { nbc_eval_field(f, 2, x.as_ptr(), 2, out.as_mut_ptr()) },
        NbcStatus::Ok
    );
    assert!((out[0] - 2.0).abs() < 1e-15);
    assert!((out[1] - 1.0).abs() < 1e-15);
    let mut jac = [0.0; 4];
    assert_eq!(
        unsafe { nbc_eval_jacobian(f, 2, x.as_ptr(), 2, jac.as_mut_ptr()) },
        NbcStatus::Ok
    );
    assert_eq!(jac, [-1.0, 1.0, 0.0, 0.0]);
    unsafe { nbc_family_free(f) };
}

#[test]
fn index_and_length_errors() {
    let f = family(NbcSpace::RealLine, 3, 2, 0.1);
    let x = [0.0, 1.0, 2.0];
    let mut out = [0.0; 3];
    let status = unsafe { nbc_eval_field(f, 7, x.as_ptr(), 3, out.as_mut_ptr()) };
    assert_eq!(status, NbcStatus::IndexOutOfRange);
    let status = unsafe { nbc_eval_field(f, 1, x.as_ptr(), 2, out.as_mut_ptr()) };
    assert_eq!(status, NbcStatus::DimensionMismatch);
    unsafe { nbc_family_free(f) };
}

#[test]
fn bracket_and_rank() {
    let f = family(NbcSpace::RealLine, 3, 2, 0.1);
    let x = [0.0, 1.0, 2.5];
    let mut b = [0.0; 3];
    assert_eq!(
        unsafe { nbc_bracket(f, 1, 2, x.as_ptr(), 3, b.as_mut_ptr()) },
        NbcStatus::Ok
    );
    // [f_1, f_2] = ρ_2 on the last row
    assert!(b[0].abs() < 1e-12 && b[1].abs() < 1e-12);
    assert!((b[2] - 1.4).abs() < 1e-12);
    let (mut rank, mut sv) = (0, 0.0);
    let status = unsafe { nbc_spanning_rank(f, x.as_ptr(), 3, &mut rank, &mut sv) };
    assert_eq!(status, NbcStatus::Ok);
    assert_eq!(rank, 3);
    assert!(sv > 0.0);
    let (mut min_rank, mut passed) = (0, false);
    let status = unsafe { nbc_rank_scan(f, 50, 1, 1e-3, &mut min_rank, &mut passed) };
    assert_eq!(status, NbcStatus::Ok);
    assert!(passed);
    assert_eq!(min_rank, 3);
    unsafe { nbc_family_free(f) };
}

#[test]
fn tangency_check() {
    let f = family(NbcSpace::Circle, 5, 3, 0.2);
    let (mut residual, mut passed) = (f64::NAN, false);
    let status = unsafe { nbc_check_tangency(f, 5, 100, 3, &mut residual, &mut passed) };
    assert_eq!(status, NbcStatus::Ok);
    assert!(passed);
    assert!(residual < 1e-10);
    unsafe { nbc_family_free(f) };
}

#[test]
fn schedule_round_trip_and_endpoint() {
    let f = family(NbcSpace::RealLine, 2, 2, 0.5);
    let json = CString::new(r#"{"segments":[{"duration":1.0,"constant":[1.0,0.0]}]}"#).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { nbc_schedule_from_json(json.as_ptr(), &mut s) },
        NbcStatus::Ok
    );
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { nbc_schedule_to_json(s, &mut text) }, NbcStatus::Ok);
    let back = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_owned();
    assert!(back.contains("constant"));
    unsafe { nbc_string_free(text) };
    // f_1 translates both bodies
    let p = [0.0, 1.0];
    let mut x = [0.0; 2];
    assert_eq!(
        unsafe { nbc_endpoint(f, p.as_ptr(), 2, s, 0.0, x.as_mut_ptr()) },
        NbcStatus::Ok
    );
    assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    unsafe { nbc_schedule_free(s) };
    unsafe { nbc_family_free(f) };
}

#[test]
fn malformed_schedule_json() {
    let json = CString::new("{not json").unwrap();
    let mut s = ptr::null_mut();
    let status = unsafe { nbc_schedule_from_json(json.as_ptr(), &mut s) };
    assert_ne!(status, NbcStatus::Ok);
    assert!(s.is_null());
}

#[test]
fn plan_and_replay() {
    let f = family(NbcSpace::RealLine, 3, 2, 0.1);
    let p = [0.0, 1.0, 2.0];
    let q = [0.2, 1.0, 2.3];
    let mut plan = ptr::null_mut();
    let status = unsafe { nbc_plan(f, p.as_ptr(), q.as_ptr(), 3, 1e-6, 200, &mut plan) };
    assert_eq!(status, NbcStatus::Ok, "{}", last_error());
    let (mut err, mut iterations, mut gap) = (0.0, 0, 0.0);
    assert_eq!(
        unsafe { nbc_plan_summary(plan, &mut err, &mut iterations, &mut gap) },
        NbcStatus::Ok
    );
    assert!(err < 1e-6);
    assert!(gap > 0.0);
    let mut end = [0.0; 3];
    assert_eq!(
        unsafe { nbc_plan_endpoint(plan, 3, end.as_mut_ptr()) },
        NbcStatus::Ok
    );
    let mut schedule = ptr::null_mut();
    assert_eq!(
        unsafe { nbc_plan_schedule(plan, &mut schedule) },
        NbcStatus::Ok
    );
    let mut step = 0.0;
    assert_eq!(unsafe { nbc_plan_step(plan, &mut step) }, NbcStatus::Ok);
    let mut replay = [0.0; 3];
    let status = unsafe { nbc_endpoint(f, p.as_ptr(), 3, schedule, step, replay.as_mut_ptr()) };
    assert_eq!(status, NbcStatus::Ok);
    for i in 0..3 {
        assert!((replay[i] - end[i]).abs() < 1e-12);
    }
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { nbc_plan_to_json(plan, &mut json) }, NbcStatus::Ok);
    assert!(unsafe { CStr::from_ptr(json) }
        .to_str()
        .unwrap()
        .contains("endpoint_error"));
    unsafe {
        nbc_string_free(json);
        nbc_schedule_free(schedule);
        nbc_plan_free(plan);
        nbc_family_free(f);
    }
}

#[test]
fn plan_rejects_points_outside_region() {
    let f = family(NbcSpace::RealLine, 2, 2, 0.5);
    let p = [0.0, 0.2];
    let q = [0.0, 1.0];
    let mut plan = ptr::null_mut();
    let status = unsafe { nbc_plan(f, p.as_ptr(), q.as_ptr(), 2, 1e-6, 10, &mut plan) };
    assert_eq!(status, NbcStatus::OutsideRegion);
    assert!(plan.is_null());
    unsafe { nbc_family_free(f) };
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/nbody_ctrl.h");
    for name in [
        "nbc_last_error_message",
        "nbc_string_free",
        "nbc_family_new",
        "nbc_family_free",
        "nbc_family_dims",
        "nbc_eval_field",
        "nbc_eval_jacobian",
        "nbc_bracket",
        "nbc_spanning_rank",
        "nbc_rank_scan",
        "nbc_check_tangency",
        "nbc_schedule_from_json",
        "nbc_schedule_to_json",
        "nbc_schedule_free",
        "nbc_endpoint",
        "nbc_plan",
        "nbc_plan_free",
        "nbc_plan_summary",
        "nbc_plan_endpoint",
        "nbc_plan_schedule",
        "nbc_plan_step",
        "nbc_plan_to_json",
    ] {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    assert!(header.contains("NBC_STATUS_NOT_CONVERGED = 14"));
}
