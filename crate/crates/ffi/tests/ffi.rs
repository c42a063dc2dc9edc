use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use clap::Parser;
use glmixer::cli::artifacts::load_fit;
use glmixer::cli::{run, Cli};
use glmixer::data::{load_covariates, write_panel, ClampPolicy};
use glmixer::design::{build_row, ModelVariant};
use glmixer::inference::{predict_new_unit, PredictionInput, PredictionMode};
use glmixer::simulate::{simulate, SimulationConfig};
use glmixer_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = glm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn write_sim(dir: &Path) -> PathBuf {
    let (panel, _) = simulate(&SimulationConfig::new(6, 10, ModelVariant::Model1, 3)).unwrap();
    let path = dir.join("panel.csv");
    write_panel(&panel, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn load(path: &Path) -> *mut GlmPanel {
    let mut panel = ptr::null_mut();
    let p = c(path.to_str().unwrap());
    assert_eq!(unsafe { glm_panel_load(p.as_ptr(), 1e-4, &mut panel) }, GlmStatus::Ok);
    panel
}

fn small_options() -> GlmFitOptions {
    GlmFitOptions {
        iterations: 400,
        burn_in: 200,
        chains: 2,
        seed: 9,
        ..glm_fit_options_default()
    }
}

#[test]
fn logit_round_trips_and_reports_domain_errors() {
    let mut x = 0.0;
    assert_eq!(unsafe { glm_logit(0.8, &mut x) }, GlmStatus::Ok);
    assert!((x - 4f64.ln()).abs() < 1e-15);
    assert!(glm_last_error().is_null());
    assert!((glm_inv_logit(x) - 0.8).abs() < 1e-15);

    assert_eq!(unsafe { glm_logit(1.5, &mut x) }, GlmStatus::Numerical);
    assert!(last_error().contains("domain"));
    assert_eq!(unsafe { glm_logit(0.5, ptr::null_mut()) }, GlmStatus::NullArgument);
    assert_eq!(last_error(), "out is null");
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(glm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn loading_reports_io_and_validation_classes() {
    let d = tempfile::tempdir().unwrap();
    let mut panel = ptr::null_mut();
    let missing = c(d.path().join("nope.csv").to_str().unwrap());
    assert_eq!(
        unsafe { glm_panel_load(missing.as_ptr(), 1e-4, &mut panel) },
        GlmStatus::Io
    );
    assert!(panel.is_null());

    std::fs::write(d.path().join("bad.csv"), "unit_id,year\nA,x\n").unwrap();
    let bad = c(d.path().join("bad.csv").to_str().unwrap());
    assert_eq!(
        unsafe { glm_panel_load(bad.as_ptr(), 1e-4, &mut panel) },
        GlmStatus::Invalid
    );
    assert_eq!(
        unsafe { glm_panel_load(bad.as_ptr(), 0.7, &mut panel) },
        GlmStatus::Invalid
    );
    assert!(last_error().contains("clamp"));
    assert_eq!(
        unsafe { glm_panel_load(ptr::null(), 1e-4, &mut panel) },
        GlmStatus::NullArgument
    );

    let path = write_sim(d.path());
    let panel = load(&path);
    unsafe {
        assert_eq!(glm_panel_rows(panel), 60);
        assert_eq!(glm_panel_units(panel), 6);
        glm_panel_free(panel);
        glm_panel_free(ptr::null_mut());
        assert_eq!(glm_panel_rows(ptr::null()), 0);
    }
}

#[test]
fn fit_rejects_bad_options() {
    let d = tempfile::tempdir().unwrap();
    let panel = load(&write_sim(d.path()));
    let mut fit = ptr::null_mut();
    for o in [
        GlmFitOptions {
            model: 3,
            ..small_options()
        },
        GlmFitOptions {
            chains: 0,
            ..small_options()
        },
        GlmFitOptions {
            burn_in: 400,
            ..small_options()
        },
    ] {
        assert_eq!(unsafe { glm_fit(panel, &o, &mut fit) }, GlmStatus::Invalid, "{o:?}");
        assert!(fit.is_null());
    }
    // Too few rows per unit for the 7 coefficients.
    let (small, _) = simulate(&SimulationConfig::new(4, 5, ModelVariant::Model1, 1)).unwrap();
    let path = d.path().join("small.csv");
    write_panel(&small, std::fs::File::create(&path).unwrap()).unwrap();
    let small = load(&path);
    assert_eq!(
        unsafe { glm_fit(small, &small_options(), &mut fit) },
        GlmStatus::Invalid
    );
    assert!(last_error().contains("more than p = 7"));
    unsafe {
        glm_panel_free(panel);
        glm_panel_free(small);
    }
}

#[test]
fn in_memory_fit_matches_a_command_line_fit() {
    let d = tempfile::tempdir().unwrap();
    let path = write_sim(d.path());
    let out = d.path().join("fit");
    let args = [
        "glmixer",
        "fit",
        "--input",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--iters",
        "400",
        "--burn-in",
        "200",
        "--chains",
        "2",
        "--seed",
        "9",
    ];
    run(Cli::try_parse_from(args).unwrap()).unwrap();

    let panel = load(&path);
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    let dir = c(out.to_str().unwrap());
    unsafe {
        assert_eq!(glm_fit(panel, &small_options(), &mut a), GlmStatus::Ok);
        assert_eq!(glm_fit_load(dir.as_ptr(), &mut b), GlmStatus::Ok);
        assert_eq!(glm_fit_dim(a), 7);
        assert_eq!(glm_fit_chains(b), 2);
        assert_eq!(glm_fit_draws(a), 2 * (400 - 200) / 2);
        assert_eq!(glm_fit_seed(b), 9);
        assert_eq!(glm_fit_clamp_eps(b), 1e-4);
        for (name, index) in [
            ("beta", 0),
            ("beta", 6),
            ("u", 5),
            ("tau", 0),
            ("phi", 0),
            ("omega", 2),
            ("lambda", 1),
        ] {
            let (mut sa, mut sb) = (GlmParameterSummary::default(), GlmParameterSummary::default());
            let n = c(name);
            assert_eq!(glm_fit_summary(a, n.as_ptr(), index, &mut sa), GlmStatus::Ok, "{name}");
            assert_eq!(glm_fit_summary(b, n.as_ptr(), index, &mut sb), GlmStatus::Ok, "{name}");
            assert_eq!(sa, sb, "{name}[{index}]");
            assert!(sa.q025 <= sa.q50 && sa.q50 <= sa.q975 && sa.sd > 0.0 && sa.rhat.is_finite());
        }
        let mut s = GlmParameterSummary::default();
        let n = c("beta");
        assert_eq!(glm_fit_summary(a, n.as_ptr(), 7, &mut s), GlmStatus::Invalid);
        assert!(last_error().contains("beta[7]"));
        glm_fit_free(a);
        glm_fit_free(b);
        glm_panel_free(panel);
    }
    let missing = c(d.path().join("none").to_str().unwrap());
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { glm_fit_load(missing.as_ptr(), &mut f) }, GlmStatus::Io);
    assert!(last_error().contains("manifest"));
}

#[test]
fn predictions_equal_the_library_for_every_mode() {
    let d = tempfile::tempdir().unwrap();
    let path = write_sim(d.path());
    let out = d.path().join("fit");
    let args = [
        "glmixer",
        "fit",
        "--input",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--iters",
        "300",
        "--burn-in",
        "100",
        "--chains",
        "2",
    ];
    run(Cli::try_parse_from(args).unwrap()).unwrap();
    let (manifest, traces) = load_fit(&out).unwrap();
    let cov = load_covariates(&path, ClampPolicy::default()).unwrap();
    let rows: Vec<PredictionInput> = cov
        .observations()
        .map(|o| PredictionInput {
            unit_id: o.unit_id.clone(),
            period: o.period,
            row: build_row(o, &manifest.spec).unwrap(),
        })
        .collect();

    let mut fit = ptr::null_mut();
    let mut covariates = ptr::null_mut();
    let dir = c(out.to_str().unwrap());
    let p = c(path.to_str().unwrap());
    unsafe {
        assert_eq!(glm_fit_load(dir.as_ptr(), &mut fit), GlmStatus::Ok);
        assert_eq!(glm_covariates_load(p.as_ptr(), 1e-4, &mut covariates), GlmStatus::Ok);
    }
    for (mode, lib) in [
        (GlmPredictionMode::FixedOnly, PredictionMode::FixedOnly),
        (GlmPredictionMode::Integrate, PredictionMode::IntegrateReffect),
        (GlmPredictionMode::InSample, PredictionMode::InSample),
    ] {
        let want = predict_new_unit(&traces, &rows, lib, &manifest.priors, 33).unwrap();
        let mut got = vec![GlmPrediction::default(); rows.len()];
        let mut written = 0;
        let status = unsafe { glm_fit_predict(fit, covariates, mode, 33, got.as_mut_ptr(), got.len(), &mut written) };
        assert_eq!(status, GlmStatus::Ok);
        assert_eq!(written, rows.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(
                (g.mean, g.sd, g.q025, g.q50, g.q975, g.mean_fixed),
                (w.mean, w.sd, w.q025, w.q50, w.q975, w.mean_fixed)
            );
        }
    }
    let mut written = 0;
    let status = unsafe {
        glm_fit_predict(
            fit,
            covariates,
            GlmPredictionMode::FixedOnly,
            1,
            ptr::null_mut(),
            0,
            &mut written,
        )
    };
    assert_eq!(status, GlmStatus::Invalid);
    assert_eq!(written, 60);
    unsafe {
        glm_fit_free(fit);
        glm_panel_free(covariates);
    }
}

#[test]
fn metrics_match_a_direct_computation() {
    let pred = [0.55, 0.7, 0.92, 0.99, 0.3];
    let obs = [0.5, 0.75, 0.95, 0.97, 0.41];
    let fixed = [0.6, 0.6, 0.9, 0.9, 0.5];
    let n = pred.len() as f64;
    let dev: Vec<f64> = pred.iter().zip(&obs).map(|(p, o)| p - o).collect();
    let mae = dev.iter().map(|d| d.abs()).sum::<f64>() / n;
    let rmse = (dev.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    let mean_obs = obs.iter().sum::<f64>() / n;
    let ss_res: f64 = obs.iter().zip(&fixed).map(|(o, f)| (o - f) * (o - f)).sum();
    let ss_tot: f64 = obs.iter().map(|o| (o - mean_obs) * (o - mean_obs)).sum();

    let mut m = GlmMetrics::default();
    let status = unsafe { glm_metrics(pred.as_ptr(), obs.as_ptr(), fixed.as_ptr(), 5, &mut m) };
    assert_eq!(status, GlmStatus::Ok);
    assert_eq!(m.n, 5);
    assert!((m.mae - mae).abs() < 1e-15);
    assert!((m.rmse - rmse).abs() < 1e-15);
    assert!((m.r_square - (1.0 - ss_res / ss_tot)).abs() < 1e-14);
    assert_eq!(m.n_small_dev, 4);

    let status = unsafe { glm_metrics(pred.as_ptr(), obs.as_ptr(), ptr::null(), 5, &mut m) };
    assert_eq!(status, GlmStatus::Ok);
    assert!(m.r_square.is_nan());
    let bad = [1.2, 0.5, 0.5, 0.5, 0.5];
    let status = unsafe { glm_metrics(pred.as_ptr(), bad.as_ptr(), ptr::null(), 5, &mut m) };
    assert_eq!(status, GlmStatus::Invalid);
    assert_eq!(
        unsafe { glm_metrics(ptr::null(), obs.as_ptr(), ptr::null(), 5, &mut m) },
        GlmStatus::NullArgument
    );
}

const SMOKE: &str = r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "glmixer.h"

int main(int argc, char **argv) {
    double x = 0.0;
    if (glm_logit(0.8, &x) != GLM_STATUS_OK || fabs(glm_inv_logit(x) - 0.8) > 1e-15) return 1;
    GlmPanel *panel = NULL;
    if (glm_panel_load("/nonexistent/panel.csv", 1e-4, &panel) != GLM_STATUS_IO) return 2;
    if (glm_last_error() == NULL || panel != NULL) return 3;
    if (glm_panel_load(argv[1], 1e-4, &panel) != GLM_STATUS_OK) return 4;
    GlmFitOptions o = glm_fit_options_default();
    o.iterations = 200; o.burn_in = 100; o.chains = 1; o.local_prior = GLM_LOCAL_PRIOR_LAPLACE;
    GlmFit *fit = NULL;
    if (glm_fit(panel, &o, &fit) != GLM_STATUS_OK) { fprintf(stderr, "%s\n", glm_last_error()); return 5; }
    GlmParameterSummary s;
    if (glm_fit_summary(fit, "beta", 0, &s) != GLM_STATUS_OK || !(s.q025 < s.q975)) return 6;
    GlmPrediction p[60];
    size_t written = 0;
    if (glm_fit_predict(fit, panel, GLM_PREDICTION_MODE_INTEGRATE, 1, p, 60, &written) != GLM_STATUS_OK) return 7;
    if (written != 60 || !(p[0].mean > 0.0 && p[0].mean < 1.0)) return 8;
    printf("%s %.6f\n", glm_version(), s.mean);
    glm_fit_free(fit);
    glm_panel_free(panel);
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("glmixer.h").exists());
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipped");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libglmixer_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipped", lib.display());
        return;
    }
    let d = tempfile::tempdir().unwrap();
    let src = d.path().join("smoke.c");
    std::fs::write(&src, SMOKE).unwrap();
    let bin = d.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let panel = write_sim(d.path());
    let out = Command::new(&bin).arg(&panel).output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with(env!("CARGO_PKG_VERSION")));
}
