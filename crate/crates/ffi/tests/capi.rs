use std::ffi::CStr;
use std::process::Command;
use std::ptr;

use edgecache_ffi::*;

const P: [f64; 3] = [0.5, 0.3, 0.2];

fn placement() -> *mut EcPlacement {
    let params = ec_network_params_default();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ec_placement_new(&params, 3, &mut h) }, EcStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn placement_round_trip() {
    let h = placement();
    let mut q = [0.0; 3];
    let mut value = 0.0;
    assert_eq!(unsafe { ec_placement_solve(h, P.as_ptr(), 3, q.as_mut_ptr(), &mut value) }, EcStatus::Ok);
    assert!((q.iter().sum::<f64>() - 2.0).abs() < 1e-9);
    assert!(q.iter().all(|v| (0.0..=1.0).contains(v)));
    let mut again = 0.0;
    assert_eq!(unsafe { ec_placement_asp(h, P.as_ptr(), q.as_ptr(), 3, &mut again) }, EcStatus::Ok);
    assert_eq!(value, again);
    unsafe { ec_placement_free(h) };
}

#[test]
fn uniform_profile_spreads_the_cache() {
    let h = placement();
    let p = [0.25; 4];
    let params = EcNetworkParams { cache_size: 3, ..ec_network_params_default() };
    let mut h4 = ptr::null_mut();
    assert_eq!(unsafe { ec_placement_new(&params, 4, &mut h4) }, EcStatus::Ok);
    let mut q = [0.0; 4];
    assert_eq!(unsafe { ec_placement_solve(h4, p.as_ptr(), 4, q.as_mut_ptr(), ptr::null_mut()) }, EcStatus::Ok);
    assert!(q.iter().all(|v| (v - 0.75).abs() < 1e-9));
    unsafe {
        ec_placement_free(h4);
        ec_placement_free(h);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let h = placement();
    let mut q = [0.0; 3];
    let bad = [0.5, 0.6, 0.2];
    unsafe {
        assert_eq!(ec_placement_solve(ptr::null_mut(), P.as_ptr(), 3, q.as_mut_ptr(), ptr::null_mut()), EcStatus::NullPointer);
        assert_eq!(ec_placement_solve(h, ptr::null(), 3, q.as_mut_ptr(), ptr::null_mut()), EcStatus::NullPointer);
        assert_eq!(ec_placement_solve(h, bad.as_ptr(), 3, q.as_mut_ptr(), ptr::null_mut()), EcStatus::DataError);
        let params = EcNetworkParams { path_loss: 1.5, ..ec_network_params_default() };
        let mut out = ptr::null_mut();
        assert_eq!(ec_placement_new(&params, 3, &mut out), EcStatus::NumericalFailure);
        assert!(out.is_null());
        let params = EcNetworkParams { cache_size: 9, ..ec_network_params_default() };
        assert_eq!(ec_placement_new(&params, 3, &mut out), EcStatus::InvalidArgument);
        ec_placement_free(h);
        ec_placement_free(ptr::null_mut());
    }
    let msg = unsafe { CStr::from_ptr(ec_status_message(EcStatus::DataError)) };
    assert_eq!(msg.to_str().unwrap(), "invalid input data");
}

#[test]
fn online_learner_tracks_the_running_mean() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ec_ol_new(EcOlModel::Ppm, 3, &mut h) }, EcStatus::Ok);
    let other = [0.1, 0.3, 0.6];
    let mut pred = [0.0; 3];
    unsafe {
        assert_eq!(ec_ol_step(h, P.as_ptr(), ptr::null(), 3, 2, pred.as_mut_ptr()), EcStatus::Ok);
        assert_eq!(ec_ol_step(h, other.as_ptr(), ptr::null(), 3, 2, pred.as_mut_ptr()), EcStatus::Ok);
    }
    for ((a, b), c) in pred.iter().zip(P).zip(other) {
        assert!((a - 0.5 * (b + c)).abs() < 1e-12);
    }
    let mut rpm = ptr::null_mut();
    unsafe {
        assert_eq!(ec_ol_new(EcOlModel::Rpm, 3, &mut rpm), EcStatus::Ok);
        assert_eq!(ec_ol_step(rpm, P.as_ptr(), ptr::null(), 3, 2, pred.as_mut_ptr()), EcStatus::InvalidArgument);
        ec_ol_free(rpm);
        ec_ol_free(h);
    }
}

#[test]
fn kwik_abstains_then_predicts() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ec_kwik_new(2, 1, 0.5, 0.5, &mut h) }, EcStatus::Ok);
    let mut values = [0.0; 2];
    let mut known = [9u8; 2];
    let obs = [0.9, 0.1];
    unsafe { ec_kwik_step(h, obs.as_ptr(), 2, values.as_mut_ptr(), known.as_mut_ptr()) };
    assert_eq!(known, [0, 0]);
    for _ in 0..5 {
        unsafe { ec_kwik_step(h, obs.as_ptr(), 2, values.as_mut_ptr(), known.as_mut_ptr()) };
    }
    assert_eq!(known, [1, 1]);
    assert!((values[0] - 0.9).abs() < 1e-12 && (values[1] - 0.1).abs() < 1e-12);
    unsafe { ec_kwik_free(h) };
}

#[test]
fn window_prediction_of_a_constant_history() {
    let window: Vec<f64> = P.iter().copied().cycle().take(10 * 3).collect();
    let mut out = [0.0; 3];
    assert_eq!(unsafe { ec_ppm_predict(window.as_ptr(), 10, 3, 4, out.as_mut_ptr()) }, EcStatus::Ok);
    for (a, b) in out.iter().zip(P) {
        assert!((a - b).abs() < 1e-8);
    }
    assert_eq!(unsafe { ec_ppm_predict(window.as_ptr(), 4, 3, 4, out.as_mut_ptr()) }, EcStatus::InvalidArgument);
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/edgecache.h")).unwrap();
    for name in [
        "ec_status_message",
        "ec_network_params_default",
        "ec_placement_new",
        "ec_placement_free",
        "ec_placement_solve",
        "ec_placement_asp",
        "ec_ppm_predict",
        "ec_ol_new",
        "ec_ol_step",
        "ec_ol_free",
        "ec_kwik_new",
        "ec_kwik_step",
        "ec_kwik_free",
        "typedef struct EcPlacement EcPlacement;",
        "EC_STATUS_NUMERICAL_FAILURE = 4",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_against_the_static_library() {
    let Ok(exe) = std::env::current_exe() else { return };
    let Some(target_dir) = exe.parent().and_then(|deps| deps.parent()) else { return };
    let lib = target_dir.join("libedgecache_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/smoke.c"))
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "q sums to 2");
}
