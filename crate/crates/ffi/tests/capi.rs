use std::ffi::{CStr, CString};
use std::ptr;

use portfolio_analytics_ffi::*;

fn last_error() -> String {
    let p = pa_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn classic_returns() -> *mut PaReturns {
    // cash and an asset that alternately doubles and halves
    let data = [0.0, 1.0, 0.0, -0.5, 0.0, 1.0, 0.0, -0.5];
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { pa_returns_new(data.as_ptr(), 4, 2, &mut r) }, PaStatus::Ok);
    r
}

#[test]
fn returns_handle_round_trip() {
    let r = classic_returns();
    unsafe {
        assert_eq!(pa_returns_periods(r), 4);
        assert_eq!(pa_returns_assets(r), 2);
        pa_returns_free(r);
        pa_returns_free(ptr::null_mut());
    }
}

#[test]
fn best_crp_through_c_abi() {
    let r = classic_returns();
    let mut w = [0.0; 2];
    let status = unsafe { pa_best_crp(r, w.as_mut_ptr(), 2) };
    assert_eq!(status, PaStatus::Ok);
    assert!((w[0] - 0.5).abs() < 1e-6 && (w[1] - 0.5).abs() < 1e-6, "{w:?}");

    let mut small = [0.0; 1];
    assert_eq!(unsafe { pa_best_crp(r, small.as_mut_ptr(), 1) }, PaStatus::BufferTooSmall);
    assert!(last_error().contains("needed"));
    unsafe { pa_returns_free(r) };
}

#[test]
fn cover_schedule_rows_sum_to_one() {
    let r = classic_returns();
    let mut out = [0.0; 8];
    assert_eq!(unsafe { pa_cover_schedule(r, 1000, 7, out.as_mut_ptr(), 8) }, PaStatus::Ok);
    for row in out.chunks(2) {
        assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
    }
    assert!((out[0] - 0.5).abs() < 0.05, "first row is the mean of the prior draws");
    unsafe { pa_returns_free(r) };
}

#[test]
fn moments_and_weights() {
    let mu = [0.01, 0.02];
    let sigma = [0.04, 0.0, 0.0, 0.09];
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(pa_moments_new(mu.as_ptr(), sigma.as_ptr(), 2, &mut m), PaStatus::Ok);
        assert_eq!(pa_moments_n(m), 2);

        let mut w = [0.0; 2];
        assert_eq!(pa_min_variance_weights(m, w.as_mut_ptr(), 2), PaStatus::Ok);
        assert!((w[0] - 9.0 / 13.0).abs() < 1e-12);

        assert_eq!(pa_tangent_weights(m, 0.0, w.as_mut_ptr(), 2), PaStatus::Ok);
        // Σ⁻¹μ ∝ (0.25, 0.2222)
        let raw = [0.01 / 0.04, 0.02 / 0.09];
        let s = raw[0] + raw[1];
        assert!((w[0] - raw[0] / s).abs() < 1e-12);
        assert!((w[1] - raw[1] / s).abs() < 1e-12);

        let mut mu_out = [0.0; 2];
        let mut sigma_out = [0.0; 4];
        assert_eq!(pa_moments_get(m, mu_out.as_mut_ptr(), sigma_out.as_mut_ptr()), PaStatus::Ok);
        assert_eq!(mu_out, mu);
        assert_eq!(sigma_out, sigma);
        pa_moments_free(m);
    }
}

#[test]
fn estimated_moments_from_returns() {
    let data = [0.01, 0.02, 0.03, 0.01, -0.02, 0.00, 0.015, 0.03];
    let mut r = ptr::null_mut();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(pa_returns_new(data.as_ptr(), 4, 2, &mut r), PaStatus::Ok);
        assert_eq!(pa_moments_estimate(r, PaModel::Mm as i32, ptr::null(), &mut m), PaStatus::Ok);
        let mut mu = [0.0; 2];
        pa_moments_get(m, mu.as_mut_ptr(), ptr::null_mut());
        assert!((mu[0] - 0.00875).abs() < 1e-15);
        pa_moments_free(m);

        assert_eq!(pa_moments_estimate(r, PaModel::Sim as i32, ptr::null(), &mut m), PaStatus::NullPointer);
        assert_eq!(pa_moments_estimate(r, 9, ptr::null(), &mut m), PaStatus::InvalidInput);
        pa_returns_free(r);
    }
}

#[test]
fn invalid_moments_report_error() {
    let mu = [0.0, 0.0];
    let sigma = [1.0, 2.0, 2.0, 1.0];
    let mut m = ptr::null_mut();
    let status = unsafe { pa_moments_new(mu.as_ptr(), sigma.as_ptr(), 2, &mut m) };
    assert_eq!(status, PaStatus::InvalidInput);
    assert!(m.is_null());
    assert!(last_error().contains("positive semi-definite"));
}

#[test]
fn risk_functions() {
    let returns: Vec<f64> = (0..100).map(|i| (i as f64 - 50.0) / 1000.0).collect();
    let mut est = PaRiskEstimate::default();
    let status =
        unsafe { pa_var_es(returns.as_ptr(), 100, 1.0, 0.05, PaRiskMethod::Historical as i32, &mut est) };
    assert_eq!(status, PaStatus::Ok);
    assert!((est.var - 0.046).abs() < 1e-12, "{est:?}");
    assert!(est.es >= est.var);

    let mut ci = PaBootstrap::default();
    let status = unsafe {
        pa_bootstrap_ci(returns.as_ptr(), 100, 1.0, 0.05, PaRiskMethod::Gaussian as i32, 200, 3, &mut ci)
    };
    assert_eq!(status, PaStatus::Ok);
    assert!(ci.var_lower <= ci.var && ci.var <= ci.var_upper, "{ci:?}");

    let status =
        unsafe { pa_bootstrap_ci(returns.as_ptr(), 100, 1.0, 0.05, 0, 200, 3, &mut ci) };
    assert_eq!(status, PaStatus::InvalidInput);
    assert_eq!(unsafe { pa_var_es(ptr::null(), 5, 1.0, 0.05, 1, &mut est) }, PaStatus::NullPointer);
}

#[test]
fn dwp_weights_sum_to_one() {
    let mu = [0.5, 0.3, 0.2];
    let mut w = [0.0; 3];
    assert_eq!(unsafe { pa_dwp_weights(mu.as_ptr(), 3, 0.5, w.as_mut_ptr()) }, PaStatus::Ok);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(w[0] < 0.5 && w[2] > 0.2);
}

#[test]
fn prices_csv_loading() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    std::fs::write(&path, "date,A,B\n2020-01-01,10,20\n2020-01-02,11,19\n2020-01-03,12.1,19\n").unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let col = CString::new("date").unwrap();
    let mut r = ptr::null_mut();
    unsafe {
        assert_eq!(pa_returns_from_prices_csv(c_path.as_ptr(), col.as_ptr(), &mut r), PaStatus::Ok);
        assert_eq!(pa_returns_periods(r), 2);
        pa_returns_free(r);
        let missing = CString::new("/no/such.csv").unwrap();
        assert_eq!(pa_returns_from_prices_csv(missing.as_ptr(), col.as_ptr(), &mut r), PaStatus::Io);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(pa_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/portfolio_analytics.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    for line in src.lines().filter(|l| l.contains("extern \"C\" fn pa_")) {
        let name = line.split("fn ").nth(1).unwrap().split('(').next().unwrap();
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        return;
    };
    if !cc.status.success() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(&src, "#include \"portfolio_analytics.h\"\nint main(void) { return pa_version() == 0; }\n").unwrap();
    let out = std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg(format!("-I{}/include", env!("CARGO_MANIFEST_DIR")))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
