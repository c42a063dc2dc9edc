//! Fitted and predictive completeness, shrinkage factors and deviances.

use serde::{Deserialize, Serialize};

use crate::data::{inv_logit, PanelDataset};
use crate::design::{build_matrices, dot, DesignRow, GroupedDesign, ModelSpec};
use crate::error::{Error, Result};
use crate::gibbs::{shrinkage_factor, Draw, LocalPrior, PriorConfig, Trace};
use crate::kernels::{draw_categorical_log, draw_gamma, draw_normal, RngStream};

use super::summary::{check_traces, summarize_draws};

/// Prediction streams start here; chain `k` draws use stream `PREDICTION_STREAM + k`.
pub const PREDICTION_STREAM: u64 = 1_000_000;

/// Keeps a completeness strictly inside (0, 1) after floating-point rounding.
pub fn open_unit(delta: f64) -> f64 {
    delta.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn completeness(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::Domain(format!("linear predictor is not finite ({theta})")));
    }
    Ok(open_unit(inv_logit(theta)))
}

pub(crate) fn pooled_draws(traces: &[Trace]) -> impl Iterator<Item = &Draw> {
    traces.iter().flat_map(|t| t.draws.iter())
}

fn check_design(traces: &[Trace], design: &GroupedDesign) -> Result<()> {
    check_traces(traces)?;
    let meta = &traces[0].meta;
    if meta.p != design.p() {
        return Err(Error::SpecMismatch(format!(
            "trace has {} coefficients, design has {}",
            meta.p,
            design.p()
        )));
    }
    if meta.unit_ids != design.unit_ids() {
        return Err(Error::SpecMismatch("trace and panel list different units".into()));
    }
    Ok(())
}

/// Posterior completeness for one training observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedValue {
    pub unit_id: String,
    pub period: i32,
    pub observed: f64,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    /// Same summaries with the random effect left out.
    pub mean_fixed: f64,
    pub q025_fixed: f64,
    pub q975_fixed: f64,
}

/// `(with u, without u)` completeness draws for every row of the design,
/// in group then row order.
pub fn fitted_draws(traces: &[Trace], design: &GroupedDesign) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    check_design(traces, design)?;
    let mut out = Vec::with_capacity(design.n_total());
    for (i, g) in design.groups().iter().enumerate() {
        for x in g.rows() {
            let mut full = Vec::new();
            let mut fixed = Vec::new();
            for d in pooled_draws(traces) {
                let eta = dot(x, &d.beta);
                full.push(completeness(eta + d.u[i])?);
                fixed.push(completeness(eta)?);
            }
            out.push((full, fixed));
        }
    }
    Ok(out)
}

/// `δ̂_ij` (posterior mean of `inv_logit(xᵀβ + u_i)`) and `δ̂_{ij,−u}` for
/// every observation of the fitted sex stream.
pub fn fitted_completeness(traces: &[Trace], panel: &PanelDataset, spec: &ModelSpec) -> Result<Vec<FittedValue>> {
    let design = build_matrices(panel, spec)?;
    let draws = fitted_draws(traces, &design)?;
    let stream = panel.filter_sex(spec.sex);
    let mut out = Vec::with_capacity(draws.len());
    for (obs, (full, fixed)) in stream.observations().zip(draws) {
        let a = summarize_draws(&full);
        let b = summarize_draws(&fixed);
        out.push(FittedValue {
            unit_id: obs.unit_id.clone(),
            period: obs.period,
            observed: obs.completeness.unwrap_or(f64::NAN),
            mean: a.mean,
            q025: a.q025,
            q975: a.q975,
            mean_fixed: b.mean,
            q025_fixed: b.q025,
            q975_fixed: b.q975,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// `inv_logit(xᵀβ)` per draw.
    #[value(name = "fixed-only")]
    FixedOnly,
    /// Adds a fresh `u* ~ N(0, 1/(ω*φ))` with `ω*` from the local prior.
    #[value(name = "integrate")]
    IntegrateReffect,
    /// Adds the fitted `u_i` of a training unit.
    #[value(name = "in-sample")]
    InSample,
}

impl PredictionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictionMode::FixedOnly => "fixed_only",
            PredictionMode::IntegrateReffect => "integrate_reffect",
            PredictionMode::InSample => "in_sample",
        }
    }
}

/// One covariate row to predict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionInput {
    pub unit_id: String,
    pub period: i32,
    pub row: DesignRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub unit_id: String,
    pub period: i32,
    pub mode: PredictionMode,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub mean_fixed: f64,
}

/// A fresh local random-effect precision from the prior family.
pub fn draw_local_precision(rng: &mut RngStream, priors: &PriorConfig) -> Result<f64> {
    match priors.reffect_prior {
        LocalPrior::CommonGamma => Ok(1.0),
        LocalPrior::Horseshoe => {
            let aux = draw_gamma(rng, 0.5, 1.0)?;
            draw_gamma(rng, 0.5, aux)
        }
        LocalPrior::Laplace => Ok(1.0 / draw_gamma(rng, 1.0, 1.0)?),
        LocalPrior::StudentT => {
            let logs: Vec<f64> = priors.nu_support.iter().map(|&l| priors.nu_log_weight(l)).collect();
            let nu = priors.nu_support[draw_categorical_log(rng, &logs)?] as f64;
            draw_gamma(rng, 0.5 * nu, 0.5 * nu)
        }
    }
}

/// Per-row predictive completeness draws. Rows that share a `unit_id` share
/// one random effect per posterior draw. Chain `k` uses the sub-stream
/// `PREDICTION_STREAM + k` of `seed`; within a draw, units are visited in
/// order of first appearance.
pub fn prediction_draws(
    traces: &[Trace],
    rows: &[PredictionInput],
    mode: PredictionMode,
    priors: &PriorConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_traces(traces)?;
    let meta = &traces[0].meta;
    for r in rows {
        if r.row.0.len() != meta.p {
            return Err(Error::DimensionMismatch {
                expected: meta.p,
                found: r.row.0.len(),
            });
        }
    }
    if mode == PredictionMode::IntegrateReffect && priors.reffect_prior != meta.reffect_prior {
        return Err(Error::SpecMismatch(format!(
            "prior family {} differs from the fitted {}",
            priors.reffect_prior, meta.reffect_prior
        )));
    }
    let mut units: Vec<&str> = Vec::new();
    let row_unit: Vec<usize> = rows
        .iter()
        .map(|r| match units.iter().position(|u| *u == r.unit_id) {
            Some(k) => k,
            None => {
                units.push(&r.unit_id);
                units.len() - 1
            }
        })
        .collect();
    let fitted_index: Vec<usize> = if mode == PredictionMode::InSample {
        units
            .iter()
            .map(|u| {
                meta.unit_ids
                    .iter()
                    .position(|id| id == u)
                    .ok_or_else(|| Error::validation(format!("unit {u} was not in the fitted panel")))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut out: Vec<Vec<f64>> = vec![Vec::new(); rows.len()];
    let mut effects = vec![0.0; units.len()];
    for trace in traces {
        let mut rng = RngStream::new(seed, PREDICTION_STREAM + trace.meta.chain_id);
        for d in &trace.draws {
            match mode {
                PredictionMode::FixedOnly => effects.iter_mut().for_each(|e| *e = 0.0),
                PredictionMode::InSample => {
                    for (e, &i) in effects.iter_mut().zip(&fitted_index) {
                        *e = d.u[i];
                    }
                }
                PredictionMode::IntegrateReffect => {
                    for e in effects.iter_mut() {
                        let omega = draw_local_precision(&mut rng, priors)?;
                        *e = draw_normal(&mut rng, 0.0, (1.0 / (omega * d.phi)).sqrt())?;
                    }
                }
            }
            for (k, r) in rows.iter().enumerate() {
                out[k].push(completeness(r.row.dot(&d.beta) + effects[row_unit[k]])?);
            }
        }
    }
    Ok(out)
}

/// Summarized predictive completeness for each input row.
pub fn predict_new_unit(
    traces: &[Trace],
    rows: &[PredictionInput],
    mode: PredictionMode,
    priors: &PriorConfig,
    seed: u64,
) -> Result<Vec<PredictionResult>> {
    let draws = prediction_draws(traces, rows, mode, priors, seed)?;
    let mut out = Vec::with_capacity(rows.len());
    for (r, ds) in rows.iter().zip(draws) {
        let s = summarize_draws(&ds);
        let fixed: Vec<f64> = pooled_draws(traces)
            .map(|d| completeness(r.row.dot(&d.beta)))
            .collect::<Result<_>>()?;
        out.push(PredictionResult {
            unit_id: r.unit_id.clone(),
            period: r.period,
            mode,
            mean: s.mean,
            sd: s.sd,
            q025: s.q025,
            q50: s.q50,
            q975: s.q975,
            mean_fixed: super::summary::mean(&fixed),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageSummary {
    pub unit_id: String,
    pub n: usize,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    #[serde(skip)]
    pub draws: Vec<f64>,
}

/// `γ_i = λ_iτ / (λ_iτ + ω_iφ/n_i)` for every pooled draw.
pub fn shrinkage_factors(traces: &[Trace], design: &GroupedDesign) -> Result<Vec<ShrinkageSummary>> {
    check_design(traces, design)?;
    Ok(design
        .groups()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let draws: Vec<f64> = pooled_draws(traces)
                .map(|d| shrinkage_factor(d.lambda[i] * d.tau, d.omega[i] * d.phi, g.n()))
                .collect();
            let s = summarize_draws(&draws);
            ShrinkageSummary {
                unit_id: g.unit_id.clone(),
                n: g.n(),
                mean: s.mean,
                q025: s.q025,
                q975: s.q975,
                draws,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviancePair {
    pub unit_id: String,
    /// `(ȳ_i − x̄_iᵀβ̂)²`
    pub country: f64,
    /// `Σ_j (y_ij − x_ijᵀβ̂)² / n_i`
    pub country_year: f64,
}

/// Both deviances per group against the pooled least-squares fit.
pub fn deviances_from_design(design: &GroupedDesign) -> Result<Vec<DeviancePair>> {
    let beta = design.ols().ok_or(Error::RankDeficient {
        rcond: design.reciprocal_condition(),
    })?;
    Ok(design
        .groups()
        .iter()
        .map(|g| {
            let r = g.mean_residual(&beta);
            DeviancePair {
                unit_id: g.unit_id.clone(),
                country: r * r,
                country_year: g.rss(&beta, 0.0) / g.n() as f64,
            }
        })
        .collect())
}

pub fn deviances(panel: &PanelDataset, spec: &ModelSpec) -> Result<Vec<DeviancePair>> {
    deviances_from_design(&build_matrices(panel, spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::GroupData;
    use crate::gibbs::{ErrorPrior, TraceMeta};

    fn toy_design() -> GroupedDesign {
        let g1 = GroupData::new(
            "A",
            &[vec![1.0, 0.5], vec![1.0, -0.5], vec![1.0, 1.0]],
            vec![0.2, -0.1, 0.4],
        )
        .unwrap();
        let g2 = GroupData::new(
            "B",
            &[vec![1.0, 2.0], vec![1.0, 0.0], vec![1.0, -1.0]],
            vec![1.0, 0.3, -0.2],
        )
        .unwrap();
        GroupedDesign::from_groups(vec![g1, g2]).unwrap()
    }

    pub(crate) fn toy_trace(draws: Vec<(Vec<f64>, Vec<f64>, f64)>, prior: LocalPrior) -> Trace {
        let m = draws[0].1.len();
        let p = draws[0].0.len();
        Trace {
            meta: TraceMeta {
                n_iter: draws.len() + 1,
                burn_in: 1,
                thin: 1,
                seed: 1,
                chain_id: 0,
                p,
                unit_ids: (0..m).map(|i| ["A", "B", "C"][i].to_string()).collect(),
                error_prior: ErrorPrior::CommonGamma,
                reffect_prior: prior,
            },
            draws: draws
                .into_iter()
                .enumerate()
                .map(|(k, (beta, u, phi))| Draw {
                    iter: k + 2,
                    beta,
                    u,
                    phi,
                    tau: 2.0,
                    omega: vec![1.0; m],
                    lambda: vec![1.0; m],
                    nu: vec![5; m],
                })
                .collect(),
        }
    }

    #[test]
    fn fitted_brute_force() {
        let design = toy_design();
        let t = toy_trace(
            vec![
                (vec![0.1, 0.2], vec![0.3, -0.2], 1.0),
                (vec![-0.4, 1.1], vec![0.0, 0.5], 1.0),
                (vec![0.7, -0.3], vec![-1.0, 0.1], 1.0),
            ],
            LocalPrior::CommonGamma,
        );
        let got = fitted_draws(std::slice::from_ref(&t), &design).unwrap();
        let mut k = 0;
        for (i, g) in design.groups().iter().enumerate() {
            for x in g.rows() {
                let brute: f64 = t
                    .draws
                    .iter()
                    .map(|d| 1.0 / (1.0 + (-(x[0] * d.beta[0] + x[1] * d.beta[1] + d.u[i])).exp()))
                    .sum::<f64>()
                    / 3.0;
                let mean = got[k].0.iter().sum::<f64>() / 3.0;
                assert!((mean - brute).abs() < 1e-12);
                k += 1;
            }
        }
    }

    #[test]
    fn symmetric_draws_average_to_half() {
        let rows = vec![PredictionInput {
            unit_id: "Z".into(),
            period: 2000,
            row: DesignRow(vec![1.0]),
        }];
        let t = toy_trace(
            vec![(vec![-1.0], vec![0.0], 1.0), (vec![1.0], vec![0.0], 1.0)],
            LocalPrior::CommonGamma,
        );
        let p = predict_new_unit(&[t], &rows, PredictionMode::FixedOnly, &PriorConfig::default(), 0).unwrap();
        assert!((p[0].mean - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_beta_predicts_half() {
        let rows = vec![PredictionInput {
            unit_id: "Z".into(),
            period: 2000,
            row: DesignRow(vec![1.0, 3.0]),
        }];
        let t = toy_trace(vec![(vec![0.0, 0.0], vec![0.0], 1.0); 4], LocalPrior::CommonGamma);
        let p = predict_new_unit(&[t], &rows, PredictionMode::FixedOnly, &PriorConfig::default(), 0).unwrap();
        assert_eq!(p[0].mean, 0.5);
        assert_eq!(p[0].q025, 0.5);
    }

    #[test]
    fn dimension_mismatch() {
        let rows = vec![PredictionInput {
            unit_id: "Z".into(),
            period: 2000,
            row: DesignRow(vec![1.0]),
        }];
        let t = toy_trace(vec![(vec![0.0, 0.0], vec![0.0], 1.0)], LocalPrior::CommonGamma);
        assert!(matches!(
            predict_new_unit(&[t], &rows, PredictionMode::FixedOnly, &PriorConfig::default(), 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn shrinkage_plug_in() {
        assert!((shrinkage_factor(2.0, 4.0, 4) - 2.0 / 3.0).abs() < 1e-15);
        assert!((shrinkage_factor(1.0, 4.0, 4) - 0.5).abs() < 1e-15);
        assert!(shrinkage_factor(1.0, 1e-12, 4) > 1.0 - 1e-12);
    }

    #[test]
    fn constant_residual_deviances() {
        // y = 1 + x exactly, plus a shift of +r in one group and −r in the other.
        let r = 0.3;
        let g1 = GroupData::new(
            "A",
            &[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]],
            vec![1.0 + r, 2.0 + r, 3.0 + r],
        )
        .unwrap();
        let g2 = GroupData::new(
            "B",
            &[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]],
            vec![1.0 - r, 2.0 - r, 3.0 - r],
        )
        .unwrap();
        let d = deviances_from_design(&GroupedDesign::from_groups(vec![g1, g2]).unwrap()).unwrap();
        for pair in d {
            assert!((pair.country - r * r).abs() < 1e-12);
            assert!((pair.country_year - r * r).abs() < 1e-12);
        }
    }
}
