//! Calls through the exported functions exactly as a C caller would.

use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use muonium_ffi::*;

fn last_error() -> String {
    let p = mu_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn muonium() -> *mut MuSystem {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mu_system_isotropic(2.0023, 4497.0, &mut h) }, MuStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn zero_field_levels_form_triplet_and_singlet() {
    let h = muonium();
    let mut e = [0.0; 4];
    assert_eq!(unsafe { mu_level_energies(h, 0.0, e.as_mut_ptr()) }, MuStatus::Ok);
    e.sort_by(f64::total_cmp);
    assert!((e[0] + 0.75 * 4497.0).abs() < 1e-6);
    assert!(e[1..].iter().all(|x| (x - 0.25 * 4497.0).abs() < 1e-6));
    unsafe { mu_system_free(h) };
}

#[test]
fn rabi_and_transition_queries() {
    let h = muonium();
    let (mut nu, mut nu1) = (0.0, 0.0);
    unsafe {
        assert_eq!(mu_transition_frequency(h, 82.525, 4, 3, &mut nu), MuStatus::Ok);
        assert_eq!(mu_rabi_frequency(h, 82.525, 3, 4, 0.9462196485, &mut nu1), MuStatus::Ok);
    }
    assert!(nu.abs() > 1000.0);
    assert!((nu1 - 6.95).abs() < 0.01, "{nu1}");

    assert_eq!(unsafe { mu_rabi_frequency(h, 82.525, 3, 3, 1.0, &mut nu1) }, MuStatus::InvalidArgument);
    assert!(last_error().contains("distinct"));
    assert_eq!(unsafe { mu_rabi_frequency(h, 82.525, 3, 4, 1.0, ptr::null_mut()) }, MuStatus::NullPointer);
    unsafe { mu_system_free(h) };
}

#[test]
fn demur_lines_without_drive_are_the_muon_lines() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mu_system_axial(1.9999, 67.6, 35.6, &mut h) }, MuStatus::Ok);
    let (mut n12, mut n34, mut flag) = (0.0, 0.0, 7u8);
    let mut e = [0.0; 4];
    unsafe {
        assert_eq!(mu_demur_frequencies(h, 150.0, 3900.0, 0.0, &mut n12, &mut n34, &mut flag), MuStatus::Ok);
        assert_eq!(mu_level_energies(h, 150.0, e.as_mut_ptr()), MuStatus::Ok);
        assert_eq!(mu_demur_frequencies(h, 150.0, 3900.0, 0.0, &mut n12, &mut n34, ptr::null_mut()), MuStatus::Ok);
    }
    assert!(flag <= 1);
    assert!((n12.abs() - (e[0] - e[1]).abs()).abs() < 0.05, "{n12} vs {}", e[0] - e[1]);
    assert!((n34.abs() - (e[2] - e[3]).abs()).abs() < 0.05, "{n34} vs {}", e[2] - e[3]);
    unsafe { mu_system_free(h) };
}

#[test]
fn propagation_reports_length_then_fills_buffers() {
    let h = muonium();
    let mut nu = 0.0;
    unsafe { mu_transition_frequency(h, 82.525, 4, 3, &mut nu) };
    let mut len = 0usize;
    let call = |t: *mut f64, v: *mut f64, cap: usize, len: &mut usize| unsafe {
        mu_propagate_cw(h, 82.525, 0.9462196485, nu.abs(), 200.0, 1.0, MuGeometry::Longitudinal as u32, ptr::null(), t, v, cap, len)
    };
    assert_eq!(call(ptr::null_mut(), ptr::null_mut(), 0, &mut len), MuStatus::BufferTooSmall);
    assert!(len > 100);
    let (mut t, mut v) = (vec![0.0; len], vec![0.0; len]);
    assert_eq!(call(t.as_mut_ptr(), v.as_mut_ptr(), len, &mut len), MuStatus::Ok);
    assert_eq!(t[0], 0.0);
    assert!(v.iter().all(|x| x.abs() <= 1.0 + 1e-9));
    // A resonant drive depolarizes the muon in part.
    assert!(v.iter().cloned().fold(f64::INFINITY, f64::min) < 0.9 * v[0]);

    let relax = MuRelaxation { electron: 5.0, muon12: 0.0, muon34: 1.0 };
    let status = unsafe {
        mu_propagate_cw(h, 82.525, 0.5, nu.abs(), 200.0, 1.0, 9, &relax, t.as_mut_ptr(), v.as_mut_ptr(), len, &mut len)
    };
    assert_eq!(status, MuStatus::InvalidArgument);
    assert!(last_error().contains("geometry"));
    unsafe { mu_system_free(h) };
}

#[test]
fn invalid_systems_are_rejected() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mu_system_isotropic(f64::NAN, 4497.0, &mut h) }, MuStatus::InvalidArgument);
    assert!(h.is_null());
    assert!(last_error().contains("g_e"));
    assert_eq!(unsafe { mu_system_isotropic(2.0, 4497.0, ptr::null_mut()) }, MuStatus::NullPointer);
    let mut e = [0.0; 4];
    assert_eq!(unsafe { mu_level_energies(ptr::null(), 1.0, e.as_mut_ptr()) }, MuStatus::NullPointer);
    unsafe { mu_system_free(ptr::null_mut()) };
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(mu_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/muonium.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["mu_system_isotropic", "mu_system_free", "mu_propagate_cw", "MU_STATUS_BUFFER_TOO_SMALL", "MU_GEOMETRY_TRANSVERSE"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Syntax check with the system C compiler when one is installed.
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-std=c99", "-x", "c"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
