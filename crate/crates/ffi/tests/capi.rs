use std::ffi::{CStr, CString};
use std::ptr;

use vanet_sec_ffi::*;

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn parse(text: &str) -> *mut VsConfig {
    let mut cfg = ptr::null_mut();
    let t = cs(text);
    assert_eq!(unsafe { vs_config_parse(t.as_ptr(), &mut cfg) }, VsStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

fn last_error() -> String {
    let p = vs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn parse_errors_carry_a_message() {
    let mut cfg = ptr::null_mut();
    let t = cs("scheme = BP\n");
    assert_eq!(unsafe { vs_config_parse(t.as_ptr(), &mut cfg) }, VsStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("lanes"));

    assert_eq!(unsafe { vs_config_parse(ptr::null(), &mut cfg) }, VsStatus::NullPointer);
    assert_eq!(unsafe { vs_config_parse(t.as_ptr(), ptr::null_mut()) }, VsStatus::NullPointer);
}

#[test]
fn set_validates_and_keeps_old_value_on_error() {
    let cfg = parse("lanes = 4\nscheme = BP\nalpha = 5\n");
    let mut size = 0u32;
    unsafe {
        assert_eq!(vs_avg_packet_size(cfg, &mut size), VsStatus::Ok);
        let before = size;
        assert_eq!(vs_config_set(cfg, cs("alpha").as_ptr(), cs("0").as_ptr()), VsStatus::Config);
        assert_eq!(vs_avg_packet_size(cfg, &mut size), VsStatus::Ok);
        assert_eq!(size, before);
        assert_eq!(vs_config_set(cfg, cs("no_such_key").as_ptr(), cs("1").as_ptr()), VsStatus::Config);
        assert_eq!(vs_config_set(cfg, cs("scheme").as_ptr(), cs("NoSecurity").as_ptr()), VsStatus::Ok);
        assert_eq!(vs_avg_packet_size(cfg, &mut size), VsStatus::Ok);
        assert_eq!(size, 200);
        vs_config_free(cfg);
    }
}

#[test]
fn tx_power_is_calibrated_to_range() {
    let a = parse("lanes = 4\nnominal_range_m = 200\n");
    let b = parse("lanes = 4\nnominal_range_m = 400\n");
    let (mut pa, mut pb) = (0.0, 0.0);
    unsafe {
        assert_eq!(vs_config_tx_power_dbm(a, &mut pa), VsStatus::Ok);
        assert_eq!(vs_config_tx_power_dbm(b, &mut pb), VsStatus::Ok);
        vs_config_free(a);
        vs_config_free(b);
    }
    assert!(pb > pa);
}

#[test]
fn slot_capacity_and_bin_width() {
    assert!((vs_slot_capacity(2.0, 10.0) - 50.0).abs() < 1e-12);
    assert_eq!(vs_pdr_bin_m(), 10.0);
}

#[test]
fn steady_run_exposes_pdr_and_processing() {
    let cfg = parse("lanes = 4\nscheme = Hybrid\nalpha = 5\nwarmup_s = 1\nsteady_state_s = 2\nemergency = false\n");
    let mut res = ptr::null_mut();
    unsafe {
        assert_eq!(vs_run_replication(cfg, 7, &mut res), VsStatus::Ok);
        assert!(!res.is_null());

        let mut n = 0usize;
        assert_eq!(vs_result_pdr_len(res, &mut n), VsStatus::Ok);
        assert!(n > 0);
        let (mut d, mut p) = (0.0, 0.0);
        assert_eq!(vs_result_pdr_get(res, 0, &mut d, &mut p), VsStatus::Ok);
        assert!(d > 0.0 && (0.0..=1.0).contains(&p));
        assert_eq!(vs_result_pdr_get(res, n, &mut d, &mut p), VsStatus::OutOfRange);

        let mut long = VsKindStats::default();
        let mut short = VsKindStats::default();
        assert_eq!(vs_result_processing(res, VsKind::Long, &mut long), VsStatus::Ok);
        assert_eq!(vs_result_processing(res, VsKind::Short, &mut short), VsStatus::Ok);
        assert!(long.mu_r > 0.0 && short.mu_r > long.mu_r);
        assert!(long.mu_p <= long.mu_r);

        let mut pct = 0.0;
        assert_eq!(vs_result_crash_pct(res, &mut pct), VsStatus::NotAvailable);
        assert!(last_error().contains("emergency"));

        vs_result_free(res);
        vs_config_free(cfg);
    }
}

#[test]
fn same_seed_same_result() {
    let cfg = parse("lanes = 4\nwarmup_s = 1\nsteady_state_s = 1\nemergency = false\n");
    let run = || unsafe {
        let mut res = ptr::null_mut();
        assert_eq!(vs_run_replication(cfg, 3, &mut res), VsStatus::Ok);
        let mut s = VsKindStats::default();
        assert_eq!(vs_result_processing(res, VsKind::Plain, &mut s), VsStatus::Ok);
        vs_result_free(res);
        s
    };
    assert_eq!(run(), run());
    unsafe { vs_config_free(cfg) };
}

#[test]
fn free_accepts_null() {
    unsafe {
        vs_config_free(ptr::null_mut());
        vs_result_free(ptr::null_mut());
    }
}
