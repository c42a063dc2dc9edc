use std::collections::BTreeMap;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::data::{load_covariates, load_panel, write_panel};
use crate::design::{build_matrices, build_row, ModelSpec};
use crate::error::{Error, Result};
use crate::gibbs::{run_chains, ChainSettings, FixedScales, PriorConfig};
use crate::inference::{
    c1, fitted_completeness, log10_grid, log_linear_tail_slope, loglog_tail_slope, predict_new_unit,
    strictly_decreasing, summarize, theorem2_curve, CurveConfig, CurvePoint, FittedValue, PredictionInput,
    PredictionResult, ScaleFamily, Sweep,
};
use crate::metrics::{mae_rmse, r_square, r_square_literal, stratified, subnational_report, MetricReport};
use crate::simulate::{simulate, SimulationConfig};

use super::artifacts::{chain_file, json_bytes, load_fit, Manifest, Outputs, MANIFEST, SOFTWARE};
use super::{
    Cli, Command, DiagnoseArgs, FitArgs, MetricsArgs, PredictArgs, SimulateArgs, TheoryArgs, TheoryAxis, TheoryFamily,
    THREADS_ENV,
};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => run_simulate(&a),
        Command::Fit(a) => run_fit(&a),
        Command::Predict(a) => run_predict(&a),
        Command::Diagnose(a) => run_diagnose(&a),
        Command::Metrics(a) => run_metrics(&a),
        Command::CheckTheory(a) => run_check_theory(&a).map(|_| ()),
    }
}

/// Worker count: available cores, capped by the environment, never above `chains`.
pub fn worker_threads(chains: usize) -> usize {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or(cores);
    cores.min(cap).clamp(1, chains.max(1))
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn finish(outputs: Outputs, dir: &Path) -> Result<()> {
    for p in outputs.commit(dir)? {
        info!("wrote {}", p.display());
    }
    Ok(())
}

pub fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = SimulationConfig::new(a.m, a.n_per_group, a.model, a.seed);
    if let Some(b) = &a.beta {
        cfg.beta = b.clone();
    }
    cfg.tau = a.tau;
    cfg.phi = a.phi;
    cfg.error_prior = a.error_prior;
    cfg.reffect_prior = a.local_prior;
    cfg.start_year = a.start_year;
    let (panel, truth) = simulate(&cfg)?;
    let mut out = Outputs::default();
    out.add("panel.csv", csv_bytes(|b| write_panel(&panel, b))?);
    out.add("truth.json", json_bytes(&truth)?);
    finish(out, &a.out)
}

fn prior_config(a: &FitArgs) -> Result<PriorConfig> {
    let h = &a.hyper;
    let mut p = PriorConfig::new(a.error_prior, a.local_prior);
    p.a_phi = h.a_phi;
    p.b_phi = h.b_phi;
    p.a_tau = h.a_tau;
    p.b_tau = h.b_tau;
    p.a_zeta_eps = h.a_zeta_eps;
    p.b_zeta_eps = h.b_zeta_eps;
    p.a_zeta_u = h.a_zeta_u;
    p.b_zeta_u = h.b_zeta_u;
    p.k_nu = h.k_nu;
    p.nu_support = (1..=h.nu_max).collect();
    p.nu_weight = h.nu_weight;
    p.validate()?;
    Ok(p)
}

fn fitted_csv(fitted: &[FittedValue], buf: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record([
        "unit_id",
        "year",
        "observed",
        "mean",
        "q2.5",
        "q97.5",
        "mean_fixed",
        "q2.5_fixed",
        "q97.5_fixed",
    ])?;
    for f in fitted {
        w.write_record([
            f.unit_id.clone(),
            f.period.to_string(),
            f.observed.to_string(),
            f.mean.to_string(),
            f.q025.to_string(),
            f.q975.to_string(),
            f.mean_fixed.to_string(),
            f.q025_fixed.to_string(),
            f.q975_fixed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_fit(a: &FitArgs) -> Result<()> {
    let priors = prior_config(a)?;
    let mut settings = ChainSettings::new(a.iters, a.burn_in, a.thin)?;
    settings.fixed = FixedScales {
        tau: a.fix_tau,
        phi: a.fix_phi,
    };
    settings.validate()?;
    if a.chains == 0 {
        return Err(Error::validation("--chains must be at least 1"));
    }
    let panel = load_panel(&a.input, a.clamp)?;
    let spec = match a.year_offset {
        Some(off) => ModelSpec::new(a.model, a.sex, off)?,
        None => ModelSpec::centered_on(a.model, a.sex, &panel)?,
    };
    let design = build_matrices(&panel, &spec)?;
    info!(
        "fitting {} units, {} rows, p = {} with {}/{} priors",
        design.m(),
        design.n_total(),
        design.p(),
        priors.error_prior,
        priors.reffect_prior
    );
    let traces = run_chains(&design, &priors, &settings, a.seed, a.chains, worker_threads(a.chains))?;
    let summary = summarize(&traces)?;
    let fitted = fitted_completeness(&traces, &panel, &spec)?;

    let manifest = Manifest {
        software: SOFTWARE.to_string(),
        input: a.input.display().to_string(),
        spec,
        priors,
        settings,
        clamp: a.clamp,
        seed: a.seed,
        chains: a.chains,
        unit_ids: design.unit_ids(),
        n_obs: design.n_total(),
    };
    let mut out = Outputs::default();
    out.add(MANIFEST, json_bytes(&manifest)?);
    for (k, t) in traces.iter().enumerate() {
        out.add(chain_file(k), csv_bytes(|b| t.write_csv(b))?);
    }
    out.add("summary.csv", csv_bytes(|b| summary.write_csv(b))?);
    out.add("summary.json", json_bytes(&summary)?);
    out.add("fitted.csv", csv_bytes(|b| fitted_csv(&fitted, b))?);
    finish(out, &a.out)
}

/// Prediction rows for the fitted sex stream of a covariate file, with any
/// observed completeness alongside.
pub(crate) fn prediction_inputs(path: &Path, manifest: &Manifest) -> Result<(Vec<PredictionInput>, Vec<Option<f64>>)> {
    let panel = load_covariates(path, manifest.clamp)?.filter_sex(manifest.spec.sex);
    if panel.is_empty() {
        return Err(Error::validation(format!(
            "covariate file has no rows for sex '{}'",
            manifest.spec.sex
        )));
    }
    let mut rows = Vec::with_capacity(panel.len());
    let mut observed = Vec::with_capacity(panel.len());
    for o in panel.observations() {
        rows.push(PredictionInput {
            unit_id: o.unit_id.clone(),
            period: o.period,
            row: build_row(o, &manifest.spec)?,
        });
        observed.push(o.completeness);
    }
    Ok((rows, observed))
}

fn predictions_csv(preds: &[PredictionResult], observed: &[Option<f64>], buf: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record([
        "unit_id",
        "year",
        "mode",
        "mean",
        "sd",
        "q2.5",
        "q50",
        "q97.5",
        "mean_fixed",
        "observed",
    ])?;
    for (p, c) in preds.iter().zip(observed) {
        w.write_record([
            p.unit_id.clone(),
            p.period.to_string(),
            p.mode.as_str().to_string(),
            p.mean.to_string(),
            p.sd.to_string(),
            p.q025.to_string(),
            p.q50.to_string(),
            p.q975.to_string(),
            p.mean_fixed.to_string(),
            c.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_predict(a: &PredictArgs) -> Result<()> {
    let (manifest, traces) = load_fit(&a.fit)?;
    let (rows, observed) = prediction_inputs(&a.input, &manifest)?;
    let seed = a.seed.unwrap_or(manifest.seed);
    let preds = predict_new_unit(&traces, &rows, a.mode, &manifest.priors, seed)?;
    let mut out = Outputs::default();
    out.add("predictions.csv", csv_bytes(|b| predictions_csv(&preds, &observed, b))?);
    finish(out, &a.out)
}

pub fn run_diagnose(a: &DiagnoseArgs) -> Result<()> {
    let (_, traces) = load_fit(&a.fit)?;
    let summary = summarize(&traces)?;
    let bytes = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["param", "index", "ess", "rhat"])?;
        for p in &summary.parameters {
            w.write_record([
                p.param.clone(),
                p.index.to_string(),
                p.ess.to_string(),
                p.rhat.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut out = Outputs::default();
    out.add("diagnostics.csv", bytes);
    finish(out, a.out.as_deref().unwrap_or(&a.fit))
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    unit_id: String,
    year: i32,
    mean: f64,
    mean_fixed: f64,
    #[serde(default)]
    observed: Option<f64>,
}

pub fn run_metrics(a: &MetricsArgs) -> Result<()> {
    let file = std::fs::File::open(&a.predictions).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(a.predictions.clone()),
        _ => Error::Io(e),
    })?;
    let mut rdr = csv::Reader::from_reader(file);
    let rows: Vec<PredictionRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    let lookup: Option<BTreeMap<(String, i32), f64>> = match &a.observed {
        Some(path) => {
            let panel = load_panel(path, a.clamp)?.filter_sex(a.sex);
            Some(
                panel
                    .observations()
                    .filter_map(|o| o.completeness.map(|c| ((o.unit_id.clone(), o.period), c)))
                    .collect(),
            )
        }
        None => None,
    };
    let mut predicted = Vec::with_capacity(rows.len());
    let mut fixed = Vec::with_capacity(rows.len());
    let mut observed = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        let c = match &lookup {
            Some(map) => map.get(&(r.unit_id.clone(), r.year)).copied(),
            None => r.observed,
        }
        .ok_or_else(|| Error::at_row(k + 2, format!("no observed completeness for {} {}", r.unit_id, r.year)))?;
        predicted.push(r.mean);
        fixed.push(r.mean_fixed);
        observed.push(c);
    }
    let (mae, rmse) = mae_rmse(&predicted, &observed)?;
    let report = MetricReport {
        n: predicted.len(),
        mae,
        rmse,
        r_square: Some(r_square(&observed, &fixed)?),
        r_square_literal: if a.paper_literal {
            Some(r_square_literal(&observed, &fixed)?)
        } else {
            None
        },
        stratified: stratified(&predicted, &observed)?,
        subnational: subnational_report(&predicted, &observed, a.threshold)?,
    };
    let mut out = Outputs::default();
    out.add("metrics.json", json_bytes(&report)?);
    out.add("metrics.csv", csv_bytes(|b| report.write_csv(b))?);
    finish(out, &a.out)
}

/// Outcome of a rate check on the curve tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    /// `loglog` (slope of ln P on ln x) or `log-linear` (slope of ln P on x).
    pub kind: String,
    pub tail_from: f64,
    pub fitted_slope: f64,
    pub expected_slope: f64,
    /// Absolute for `loglog`, relative for `log-linear`.
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub config: CurveConfig,
    pub monotone: bool,
    pub rate: Option<RateCheck>,
    pub pass: bool,
    pub curve: Vec<CurvePoint>,
}

/// Builds the curve and its checks without writing anything.
pub fn theory_report(a: &TheoryArgs) -> Result<TheoryReport> {
    let family = match a.local_prior {
        TheoryFamily::Horseshoe => ScaleFamily::horseshoe(),
        TheoryFamily::HalfCauchy => ScaleFamily::half_cauchy(),
        TheoryFamily::Laplace => ScaleFamily::Laplace,
        TheoryFamily::StudentT => ScaleFamily::StudentT { nu: a.nu },
    };
    let sweep = match a.axis {
        TheoryAxis::Phi => Sweep::Phi {
            error_precision: a.error_precision,
        },
        TheoryAxis::Tau => Sweep::Tau {
            effect_precision: a.effect_precision,
            within_ss: a.within_ss.unwrap_or(a.n.saturating_sub(1) as f64),
        },
        TheoryAxis::Residual => Sweep::Residual {
            error_precision: a.error_precision,
            phi: a.phi,
        },
    };
    let config = CurveConfig {
        family,
        eps: a.eps,
        n: a.n,
        residual: a.residual,
        sweep,
    };
    let (from_default, to_default) = match a.axis {
        TheoryAxis::Residual => (-1.0, 1.5),
        _ => (1.0, 6.0),
    };
    let grid_from = a.grid_from.unwrap_or(from_default);
    let grid_to = a.grid_to.unwrap_or(to_default);
    if !(grid_to > grid_from) || a.per_decade == 0 {
        return Err(Error::validation("grid needs grid_to > grid_from and per_decade >= 1"));
    }
    let grid = log10_grid(grid_from, grid_to, a.per_decade);
    let curve = theorem2_curve(&config, &grid)?;
    let monotone = strictly_decreasing(&curve);
    let tail_from = 10f64.powf(grid_to - 1.0);
    let rate = match (a.axis, family) {
        (TheoryAxis::Phi, ScaleFamily::BetaPrime { b, .. }) => Some((-b, "loglog")),
        (TheoryAxis::Phi, ScaleFamily::StudentT { nu }) => Some((-nu / 2.0, "loglog")),
        (TheoryAxis::Phi, ScaleFamily::Laplace) => Some((-1.0 / c1(a.eps, a.n, a.error_precision), "log-linear")),
        _ => None,
    }
    .map(|(expected, kind)| {
        if kind == "loglog" {
            let s = loglog_tail_slope(&curve, tail_from);
            RateCheck {
                kind: kind.into(),
                tail_from,
                fitted_slope: s,
                expected_slope: expected,
                tolerance: 0.05,
                pass: (s - expected).abs() <= 0.05,
            }
        } else {
            let s = log_linear_tail_slope(&curve, tail_from);
            RateCheck {
                kind: kind.into(),
                tail_from,
                fitted_slope: s,
                expected_slope: expected,
                tolerance: 0.2,
                pass: s < 0.0 && ((s - expected) / expected).abs() <= 0.2,
            }
        }
    });
    let pass = monotone && rate.as_ref().is_none_or(|r| r.pass);
    Ok(TheoryReport {
        config,
        monotone,
        rate,
        pass,
        curve,
    })
}

pub fn run_check_theory(a: &TheoryArgs) -> Result<TheoryReport> {
    let report = theory_report(a)?;
    let curve = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["x", "prob", "log_prob"])?;
        for p in &report.curve {
            w.write_record([p.x.to_string(), p.prob.to_string(), p.log_prob.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut out = Outputs::default();
    out.add("theory_curve.csv", curve);
    out.add("theory_report.json", json_bytes(&report)?);
    finish(out, &a.out)?;
    let verdict = if report.pass { "PASS" } else { "FAIL" };
    match &report.rate {
        Some(r) => println!(
            "{verdict}: monotone={} {} slope {:.4} (expected {:.4})",
            report.monotone, r.kind, r.fitted_slope, r.expected_slope
        ),
        None => println!("{verdict}: monotone={}", report.monotone),
    }
    Ok(report)
}
