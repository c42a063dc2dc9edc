//! C interface to `glmixer`.
//!
//! Every fallible function returns a [`GlmStatus`]; on failure the message is
//! available from [`glm_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `*_free`.
//! Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use glmixer::cli::artifacts::load_fit;
use glmixer::cli::worker_threads;
use glmixer::data::{self, load_covariates, load_panel, ClampPolicy, PanelDataset, Sex};
use glmixer::design::{build_matrices, build_row, ModelSpec, ModelVariant};
use glmixer::gibbs::{run_chains, ChainSettings, ErrorPrior, LocalPrior, PriorConfig, Trace};
use glmixer::inference::{predict_new_unit, summarize, PosteriorSummary, PredictionInput, PredictionMode};
use glmixer::metrics::MetricReport;
use glmixer::Error;

/// Result of a call. The numeric values of the error classes match the
/// command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlmStatus {
    Ok = 0,
    /// Bad input: schema, ranges, dimensions, unknown names.
    Invalid = 2,
    /// Numerical failure: factorization, quadrature, empty traces.
    Numerical = 3,
    /// File missing or unreadable.
    Io = 4,
    NullArgument = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlmErrorPrior {
    Gamma = 0,
    HalfCauchy = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlmLocalPrior {
    Gamma = 0,
    StudentT = 1,
    Horseshoe = 2,
    Laplace = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlmSex {
    Both = 0,
    Female = 1,
    Male = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlmPredictionMode {
    FixedOnly = 0,
    Integrate = 1,
    InSample = 2,
}

/// Sampler settings. Start from [`glm_fit_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlmFitOptions {
    /// 1 or 2.
    pub model: u32,
    pub sex: GlmSex,
    pub error_prior: GlmErrorPrior,
    pub local_prior: GlmLocalPrior,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

/// Posterior summary of one scalar parameter.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GlmParameterSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub ess: f64,
    pub rhat: f64,
}

/// Predictive completeness for one covariate row.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GlmPrediction {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub mean_fixed: f64,
}

/// Headline metrics; `r_square` is NaN without fixed-effect predictions.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GlmMetrics {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub r_square: f64,
    pub n_small_dev: usize,
}

/// A loaded panel or covariate file.
pub struct GlmPanel {
    panel: PanelDataset,
}

/// Posterior draws with their model specification.
pub struct GlmFit {
    spec: ModelSpec,
    priors: PriorConfig,
    seed: u64,
    clamp: ClampPolicy,
    traces: Vec<Trace>,
    summary: PosteriorSummary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn class(e: &Error) -> GlmStatus {
    match e.exit_code() {
        2 => GlmStatus::Invalid,
        4 => GlmStatus::Io,
        _ => GlmStatus::Numerical,
    }
}

struct Fail(GlmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(class(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(GlmStatus::Invalid, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GlmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GlmStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GlmStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(GlmStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(p: *const c_char, name: &str) -> Result<&'a Path, Fail> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

fn clamp_policy(eps: f64) -> Result<ClampPolicy, Fail> {
    if eps == 0.0 {
        Ok(ClampPolicy::Reject)
    } else if eps > 0.0 && eps < 0.5 {
        Ok(ClampPolicy::Clamp(eps))
    } else {
        Err(invalid(format!(
            "clamp epsilon must be 0 or lie in (0, 0.5), got {eps}"
        )))
    }
}

impl From<GlmSex> for Sex {
    fn from(s: GlmSex) -> Self {
        match s {
            GlmSex::Both => Sex::Both,
            GlmSex::Female => Sex::Female,
            GlmSex::Male => Sex::Male,
        }
    }
}

impl From<GlmErrorPrior> for ErrorPrior {
    fn from(p: GlmErrorPrior) -> Self {
        match p {
            GlmErrorPrior::Gamma => ErrorPrior::CommonGamma,
            GlmErrorPrior::HalfCauchy => ErrorPrior::HalfCauchyLocal,
        }
    }
}

impl From<GlmLocalPrior> for LocalPrior {
    fn from(p: GlmLocalPrior) -> Self {
        match p {
            GlmLocalPrior::Gamma => LocalPrior::CommonGamma,
            GlmLocalPrior::StudentT => LocalPrior::StudentT,
            GlmLocalPrior::Horseshoe => LocalPrior::Horseshoe,
            GlmLocalPrior::Laplace => LocalPrior::Laplace,
        }
    }
}

impl From<GlmPredictionMode> for PredictionMode {
    fn from(m: GlmPredictionMode) -> Self {
        match m {
            GlmPredictionMode::FixedOnly => PredictionMode::FixedOnly,
            GlmPredictionMode::Integrate => PredictionMode::IntegrateReffect,
            GlmPredictionMode::InSample => PredictionMode::InSample,
        }
    }
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn glm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn glm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `ln(c / (1 − c))` for `c` in (0, 1).
#[no_mangle]
pub unsafe extern "C" fn glm_logit(c: f64, out: *mut f64) -> GlmStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = data::logit(c)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn glm_inv_logit(theta: f64) -> f64 {
    data::inv_logit(theta)
}

/// Reads a panel CSV for fitting. `clamp_eps` 0 rejects boundary
/// completeness, otherwise values are clamped into `[eps, 1 − eps]`.
#[no_mangle]
pub unsafe extern "C" fn glm_panel_load(path: *const c_char, clamp_eps: f64, out: *mut *mut GlmPanel) -> GlmStatus {
    guard(|| {
        non_null(out, "out")?;
        let panel = load_panel(path_arg(path, "path")?, clamp_policy(clamp_eps)?)?;
        *out = Box::into_raw(Box::new(GlmPanel { panel }));
        Ok(())
    })
}

/// Reads covariate rows for prediction; completeness may be empty.
#[no_mangle]
pub unsafe extern "C" fn glm_covariates_load(
    path: *const c_char,
    clamp_eps: f64,
    out: *mut *mut GlmPanel,
) -> GlmStatus {
    guard(|| {
        non_null(out, "out")?;
        let panel = load_covariates(path_arg(path, "path")?, clamp_policy(clamp_eps)?)?;
        *out = Box::into_raw(Box::new(GlmPanel { panel }));
        Ok(())
    })
}

/// Number of rows.
#[no_mangle]
pub unsafe extern "C" fn glm_panel_rows(panel: *const GlmPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.panel.len())
}

/// Number of units.
#[no_mangle]
pub unsafe extern "C" fn glm_panel_units(panel: *const GlmPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.panel.m())
}

#[no_mangle]
pub unsafe extern "C" fn glm_panel_free(panel: *mut GlmPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

#[no_mangle]
pub extern "C" fn glm_fit_options_default() -> GlmFitOptions {
    GlmFitOptions {
        model: 1,
        sex: GlmSex::Both,
        error_prior: GlmErrorPrior::HalfCauchy,
        local_prior: GlmLocalPrior::Horseshoe,
        iterations: glmixer::gibbs::DEFAULT_ITERATIONS,
        burn_in: glmixer::gibbs::DEFAULT_BURN_IN,
        thin: glmixer::gibbs::DEFAULT_THIN,
        chains: glmixer::gibbs::DEFAULT_CHAINS,
        seed: 1,
    }
}

fn variant(model: u32) -> Result<ModelVariant, Fail> {
    match model {
        1 => Ok(ModelVariant::Model1),
        2 => Ok(ModelVariant::Model2),
        _ => Err(invalid(format!("model must be 1 or 2, got {model}"))),
    }
}

/// Runs the sampler on a panel with default hyperparameters. The year
/// offset is the mean year of the fitted rows.
#[no_mangle]
pub unsafe extern "C" fn glm_fit(
    panel: *const GlmPanel,
    options: *const GlmFitOptions,
    out: *mut *mut GlmFit,
) -> GlmStatus {
    guard(|| {
        non_null(panel, "panel")?;
        non_null(options, "options")?;
        non_null(out, "out")?;
        let (panel, o) = (&(*panel).panel, *options);
        let priors = PriorConfig::new(o.error_prior.into(), o.local_prior.into());
        priors.validate()?;
        let settings = ChainSettings::new(o.iterations, o.burn_in, o.thin)?;
        if o.chains == 0 {
            return Err(invalid("chains must be at least 1"));
        }
        let spec = ModelSpec::centered_on(variant(o.model)?, o.sex.into(), panel)?;
        let design = build_matrices(panel, &spec)?;
        let traces = run_chains(&design, &priors, &settings, o.seed, o.chains, worker_threads(o.chains))?;
        let summary = summarize(&traces)?;
        *out = Box::into_raw(Box::new(GlmFit {
            spec,
            priors,
            seed: o.seed,
            clamp: ClampPolicy::default(),
            traces,
            summary,
        }));
        Ok(())
    })
}

/// Loads a fit directory written by the command-line tool.
#[no_mangle]
pub unsafe extern "C" fn glm_fit_load(dir: *const c_char, out: *mut *mut GlmFit) -> GlmStatus {
    guard(|| {
        non_null(out, "out")?;
        let (manifest, traces) = load_fit(path_arg(dir, "dir")?)?;
        let summary = summarize(&traces)?;
        *out = Box::into_raw(Box::new(GlmFit {
            spec: manifest.spec,
            priors: manifest.priors,
            seed: manifest.seed,
            clamp: manifest.clamp,
            traces,
            summary,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn glm_fit_free(fit: *mut GlmFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of coefficients.
#[no_mangle]
pub unsafe extern "C" fn glm_fit_dim(fit: *const GlmFit) -> usize {
    fit.as_ref().map_or(0, |f| f.spec.dim())
}

/// Number of chains.
#[no_mangle]
pub unsafe extern "C" fn glm_fit_chains(fit: *const GlmFit) -> usize {
    fit.as_ref().map_or(0, |f| f.traces.len())
}

/// Retained draws over all chains.
#[no_mangle]
pub unsafe extern "C" fn glm_fit_draws(fit: *const GlmFit) -> usize {
    fit.as_ref().map_or(0, |f| f.traces.iter().map(Trace::len).sum())
}

/// Summary of `param[index]`, where `param` is a column stem such as
/// `beta`, `u`, `omega`, `tau` or `zeta_u` as in the trace files (scalars
/// use index 0).
#[no_mangle]
pub unsafe extern "C" fn glm_fit_summary(
    fit: *const GlmFit,
    param: *const c_char,
    index: usize,
    out: *mut GlmParameterSummary,
) -> GlmStatus {
    guard(|| {
        non_null(fit, "fit")?;
        non_null(param, "param")?;
        non_null(out, "out")?;
        let name = CStr::from_ptr(param)
            .to_str()
            .map_err(|_| invalid("param is not valid UTF-8"))?;
        let s = (*fit)
            .summary
            .get(name, index)
            .ok_or_else(|| invalid(format!("no parameter {name}[{index}]")))?;
        *out = GlmParameterSummary {
            mean: s.mean,
            sd: s.sd,
            q025: s.q025,
            q50: s.q50,
            q975: s.q975,
            ess: s.ess,
            rhat: s.rhat,
        };
        Ok(())
    })
}

/// Predicts every row of `covariates` matching the fitted sex stream and
/// writes up to `capacity` results. `written` receives the row count, also
/// when the buffer is too small (then nothing is written and the status is
/// `Invalid`). Rows of the same unit share one random effect per draw.
#[no_mangle]
pub unsafe extern "C" fn glm_fit_predict(
    fit: *const GlmFit,
    covariates: *const GlmPanel,
    mode: GlmPredictionMode,
    seed: u64,
    out: *mut GlmPrediction,
    capacity: usize,
    written: *mut usize,
) -> GlmStatus {
    guard(|| {
        non_null(fit, "fit")?;
        non_null(covariates, "covariates")?;
        non_null(written, "written")?;
        let fit = &*fit;
        let panel = (*covariates).panel.filter_sex(fit.spec.sex);
        let rows = panel
            .observations()
            .map(|o| {
                Ok(PredictionInput {
                    unit_id: o.unit_id.clone(),
                    period: o.period,
                    row: build_row(o, &fit.spec)?,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        *written = rows.len();
        if rows.len() > capacity {
            return Err(invalid(format!(
                "buffer holds {capacity} predictions, {} needed",
                rows.len()
            )));
        }
        if rows.is_empty() {
            return Ok(());
        }
        non_null(out, "out")?;
        let preds = predict_new_unit(&fit.traces, &rows, mode.into(), &fit.priors, seed)?;
        let dst = std::slice::from_raw_parts_mut(out, preds.len());
        for (d, p) in dst.iter_mut().zip(preds) {
            *d = GlmPrediction {
                mean: p.mean,
                sd: p.sd,
                q025: p.q025,
                q50: p.q50,
                q975: p.q975,
                mean_fixed: p.mean_fixed,
            };
        }
        Ok(())
    })
}

/// Seed the fit was run with, the default for [`glm_fit_predict`].
#[no_mangle]
pub unsafe extern "C" fn glm_fit_seed(fit: *const GlmFit) -> u64 {
    fit.as_ref().map_or(0, |f| f.seed)
}

/// Clamp epsilon the fit used, 0 when boundary values were rejected.
#[no_mangle]
pub unsafe extern "C" fn glm_fit_clamp_eps(fit: *const GlmFit) -> f64 {
    match fit.as_ref().map(|f| f.clamp) {
        Some(ClampPolicy::Clamp(eps)) => eps,
        _ => 0.0,
    }
}

/// MAE, RMSE, R-square and the small-deviation count for `n` predictions
/// on the completeness scale. `fixed_only` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn glm_metrics(
    predicted: *const f64,
    observed: *const f64,
    fixed_only: *const f64,
    n: usize,
    out: *mut GlmMetrics,
) -> GlmStatus {
    guard(|| {
        non_null(out, "out")?;
        let pred = slice_arg(predicted, n, "predicted")?;
        let obs = slice_arg(observed, n, "observed")?;
        let fixed = if fixed_only.is_null() {
            None
        } else {
            Some(slice_arg(fixed_only, n, "fixed_only")?)
        };
        let r = MetricReport::compute(pred, obs, fixed, false)?;
        *out = GlmMetrics {
            n: r.n,
            mae: r.mae,
            rmse: r.rmse,
            r_square: r.r_square.unwrap_or(f64::NAN),
            n_small_dev: r.subnational.n_small_dev,
        };
        Ok(())
    })
}
