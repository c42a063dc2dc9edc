//! Fit-quality metrics on the completeness (fraction) scale.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default deviation cut for the subnational count; the comparison is strict.
pub const SUBNATIONAL_THRESHOLD: f64 = 0.10;

/// Completeness bands `(0, .3)`, `[.3, .6)`, `[.6, .8)`, `[.8, .9)`, `[.9, 1]`.
pub const BANDS: [(f64, f64, &str); 5] = [
    (0.0, 0.3, "(0,30%)"),
    (0.3, 0.6, "[30,60%)"),
    (0.6, 0.8, "[60,80%)"),
    (0.8, 0.9, "[80,90%)"),
    (0.9, 1.0, "[90,100%]"),
];

fn check_lengths(predicted: &[f64], observed: &[f64], min: usize) -> Result<()> {
    if predicted.len() != observed.len() {
        return Err(Error::DimensionMismatch {
            expected: observed.len(),
            found: predicted.len(),
        });
    }
    if predicted.len() < min {
        return Err(Error::validation(format!(
            "need at least {min} value(s), got {}",
            predicted.len()
        )));
    }
    Ok(())
}

/// `(mean |δ̂ − c|, √mean (δ̂ − c)²)`.
pub fn mae_rmse(predicted: &[f64], observed: &[f64]) -> Result<(f64, f64)> {
    check_lengths(predicted, observed, 1)?;
    let n = predicted.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (p, c) in predicted.iter().zip(observed) {
        let e = p - c;
        abs += e.abs();
        sq += e * e;
    }
    Ok((abs / n, (sq / n).sqrt()))
}

/// `1 − Σ(c − δ̂)² / Σ(c − c̄)²`.
pub fn r_square(observed: &[f64], fixed_only: &[f64]) -> Result<f64> {
    check_lengths(fixed_only, observed, 2)?;
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|c| (c - mean) * (c - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::validation("observed values have zero variance"));
    }
    let ss_res: f64 = observed.iter().zip(fixed_only).map(|(c, p)| (c - p) * (c - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// The literal variant `1 − Σ(c − c̄)² / Σ(c − δ̂)`, kept for comparison.
pub fn r_square_literal(observed: &[f64], fixed_only: &[f64]) -> Result<f64> {
    check_lengths(fixed_only, observed, 2)?;
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|c| (c - mean) * (c - mean)).sum();
    let resid: f64 = observed.iter().zip(fixed_only).map(|(c, p)| c - p).sum();
    if resid == 0.0 {
        return Err(Error::validation("residual sum is zero"));
    }
    Ok(1.0 - ss_tot / resid)
}

/// Index into [`BANDS`] of an observed completeness; `None` outside `(0, 1]`.
pub fn band_of(c: f64) -> Option<usize> {
    if !(c > 0.0 && c <= 1.0) {
        return None;
    }
    Some(BANDS.iter().rposition(|(lo, _, _)| c >= *lo).unwrap_or(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    pub band: String,
    pub count: usize,
    /// `None` for an empty band.
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
}

/// Per-band MAE and RMSE keyed by the observed completeness.
pub fn stratified(predicted: &[f64], observed: &[f64]) -> Result<Vec<BandMetrics>> {
    check_lengths(predicted, observed, 0)?;
    let mut abs = [0.0; 5];
    let mut sq = [0.0; 5];
    let mut count = [0usize; 5];
    for (k, (p, c)) in predicted.iter().zip(observed).enumerate() {
        let b =
            band_of(*c).ok_or_else(|| Error::at_row(k + 1, format!("observed completeness {c} is outside (0, 1]")))?;
        let e = p - c;
        abs[b] += e.abs();
        sq[b] += e * e;
        count[b] += 1;
    }
    Ok(BANDS
        .iter()
        .enumerate()
        .map(|(b, (_, _, label))| {
            let n = count[b] as f64;
            BandMetrics {
                band: label.to_string(),
                count: count[b],
                mae: (count[b] > 0).then(|| abs[b] / n),
                rmse: (count[b] > 0).then(|| (sq[b] / n).sqrt()),
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubnationalReport {
    pub mae: f64,
    /// Mean squared error, not rooted.
    pub mse: f64,
    /// Units with `|δ̂ − c| < threshold`.
    pub n_small_dev: usize,
    pub threshold: f64,
}

pub fn subnational_report(predicted: &[f64], observed: &[f64], threshold: f64) -> Result<SubnationalReport> {
    check_lengths(predicted, observed, 1)?;
    let n = predicted.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut small = 0;
    for (p, c) in predicted.iter().zip(observed) {
        let e = p - c;
        abs += e.abs();
        sq += e * e;
        if e.abs() < threshold {
            small += 1;
        }
    }
    Ok(SubnationalReport {
        mae: abs / n,
        mse: sq / n,
        n_small_dev: small,
        threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Present when fixed-effect-only predictions were supplied.
    pub r_square: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_square_literal: Option<f64>,
    pub stratified: Vec<BandMetrics>,
    pub subnational: SubnationalReport,
}

impl MetricReport {
    /// Full report. `fixed_only` feeds R-square; `literal` adds the literal variant.
    pub fn compute(predicted: &[f64], observed: &[f64], fixed_only: Option<&[f64]>, literal: bool) -> Result<Self> {
        let (mae, rmse) = mae_rmse(predicted, observed)?;
        let r_square = fixed_only.map(|f| r_square(observed, f)).transpose()?;
        let r_square_literal = match (fixed_only, literal) {
            (Some(f), true) => Some(r_square_literal(observed, f)?),
            _ => None,
        };
        Ok(MetricReport {
            n: predicted.len(),
            mae,
            rmse,
            r_square,
            r_square_literal,
            stratified: stratified(predicted, observed)?,
            subnational: subnational_report(predicted, observed, SUBNATIONAL_THRESHOLD)?,
        })
    }

    /// Flat `metric,band,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "band", "value"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record(["n", "all", &self.n.to_string()])?;
        w.write_record(["mae", "all", &self.mae.to_string()])?;
        w.write_record(["rmse", "all", &self.rmse.to_string()])?;
        if let Some(r) = self.r_square {
            w.write_record(["r_square", "all", &r.to_string()])?;
        }
        if let Some(r) = self.r_square_literal {
            w.write_record(["r_square_literal", "all", &r.to_string()])?;
        }
        for b in &self.stratified {
            w.write_record(["count", &b.band, &b.count.to_string()])?;
            w.write_record(["mae", &b.band, &opt(b.mae)])?;
            w.write_record(["rmse", &b.band, &opt(b.rmse)])?;
        }
        let s = &self.subnational;
        w.write_record(["subnational_mae", "all", &s.mae.to_string()])?;
        w.write_record(["subnational_mse", "all", &s.mse.to_string()])?;
        w.write_record(["n_small_dev", "all", &s.n_small_dev.to_string()])?;
        w.flush()?;
        Ok(())
    }
}
