//! Pooled posterior summaries and convergence diagnostics.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gibbs::Trace;

/// Empirical quantile by linear interpolation between order statistics
/// (`h = (n − 1) q`, the inclusive rule). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation, `n − 1` denominator; 0 for a single value.
pub fn sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    (values.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Summary statistics of one draw vector, without diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

pub fn summarize_draws(values: &[f64]) -> DrawSummary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    DrawSummary {
        mean: mean(values),
        sd: sd(values),
        q025: quantile_sorted(&v, 0.025),
        q50: quantile_sorted(&v, 0.5),
        q975: quantile_sorted(&v, 0.975),
    }
}

fn is_constant(chains: &[&[f64]]) -> bool {
    let first = chains.iter().find_map(|c| c.first().copied());
    match first {
        Some(x0) => chains.iter().all(|c| c.iter().all(|&x| x == x0)),
        None => true,
    }
}

/// Effective sample size over chains of equal length, with Geyer's initial
/// monotone sequence truncation of the combined autocorrelation. A
/// constant trace returns the total draw count.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let total = (m * n) as f64;
    if n < 4 || is_constant(chains) {
        return total;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov = |c: usize, lag: usize| -> f64 {
        let x = chains[c];
        let mu = means[c];
        (0..n - lag).map(|t| (x[t] - mu) * (x[t + lag] - mu)).sum::<f64>() / n as f64
    };
    let mean_acov = |lag: usize| (0..m).map(|c| acov(c, lag)).sum::<f64>() / m as f64;

    let nf = n as f64;
    let mean_var = mean_acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let grand = mean(&means);
        var_plus += means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m - 1) as f64;
    }
    if !(var_plus > 0.0) {
        return total;
    }
    let rho = |lag: usize| 1.0 - (mean_var - mean_acov(lag)) / var_plus;

    let mut rho_hat = vec![0.0; n + 2];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut s = 1;
    while s + 4 < n && even + odd > 0.0 {
        even = rho(s + 1);
        odd = rho(s + 2);
        if even + odd >= 0.0 {
            rho_hat[s + 1] = even;
            rho_hat[s + 2] = odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho_hat[max_s] > 0.0 {
        rho_hat[max_s + 1] = rho_hat[max_s];
    }
    let mut k = 1;
    while k + 3 <= max_s {
        let prev = rho_hat[k - 1] + rho_hat[k];
        if rho_hat[k + 1] + rho_hat[k + 2] > prev {
            rho_hat[k + 1] = prev / 2.0;
            rho_hat[k + 2] = prev / 2.0;
        }
        k += 2;
    }
    let tau = -1.0 + 2.0 * rho_hat[..max_s].iter().sum::<f64>() + rho_hat[max_s + 1];
    total / tau.max(1.0 / total.log10())
}

/// Between/within potential scale reduction on already split chains.
/// Uses `√(1 + B/(n·W'))` with `W'` the mean biased within-chain variance,
/// so equal chains give exactly 1.
fn psrf(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    if m < 2 || n < 2 {
        return 1.0;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within: f64 = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64)
        .sum::<f64>()
        / m as f64;
    let grand = mean(&means);
    let between_over_n = means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m - 1) as f64;
    if !(within > 0.0) {
        return if between_over_n > 0.0 { f64::INFINITY } else { 1.0 };
    }
    (1.0 + between_over_n / within).sqrt()
}

/// Ranks with ties averaged, then `Φ⁻¹((r − 3/8) / (S + 1/4))`.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let s = all.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| all[a].total_cmp(&all[b]));
    let mut rank = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && all[order[j + 1]] == all[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            rank[k] = r;
        }
        i = j + 1;
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut out = Vec::with_capacity(chains.len());
    let mut k = 0;
    for c in chains {
        out.push(
            c.iter()
                .map(|_| {
                    let z = normal.inverse_cdf((rank[k] - 0.375) / (s as f64 + 0.25));
                    k += 1;
                    z
                })
                .collect(),
        );
    }
    out
}

fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = n / 2;
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        out.push(c[..half].to_vec());
        out.push(c[n - half..n].to_vec());
    }
    out
}

/// Split-chain rank-normalized R̂: the larger of the bulk and the folded
/// (tail) statistics. Constant traces and traces too short to split report 1.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 4 || is_constant(chains) {
        return 1.0;
    }
    let halves = split(chains);
    let bulk = psrf(&rank_normalize(&halves));
    let pooled: Vec<f64> = halves.iter().flatten().copied().collect();
    let med = quantile(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = halves
        .iter()
        .map(|c| c.iter().map(|x| (x - med).abs()).collect())
        .collect();
    let tail = psrf(&rank_normalize(&folded));
    bulk.max(tail)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub param: String,
    pub index: usize,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub ess: f64,
    pub rhat: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub parameters: Vec<ParameterSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, param: &str, index: usize) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.param == param && p.index == index)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["param", "index", "mean", "sd", "q2.5", "q50", "q97.5", "ess", "rhat"])?;
        for p in &self.parameters {
            w.write_record([
                p.param.clone(),
                p.index.to_string(),
                p.mean.to_string(),
                p.sd.to_string(),
                p.q025.to_string(),
                p.q50.to_string(),
                p.q975.to_string(),
                p.ess.to_string(),
                p.rhat.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Checks that all traces share a parameter layout and kept-draw count.
pub(crate) fn check_traces(traces: &[Trace]) -> Result<()> {
    let first = traces.first().ok_or(Error::EmptyTrace)?;
    if first.is_empty() {
        return Err(Error::EmptyTrace);
    }
    for t in &traces[1..] {
        if t.len() != first.len() {
            return Err(Error::validation(format!(
                "chains have unequal kept-draw counts ({} vs {})",
                first.len(),
                t.len()
            )));
        }
        if t.meta.parameters() != first.meta.parameters() || t.meta.unit_ids != first.meta.unit_ids {
            return Err(Error::SpecMismatch(
                "chains were fitted with different configurations".into(),
            ));
        }
    }
    Ok(())
}

/// Pooled-draw summaries with per-parameter ESS and split-R̂ across chains.
pub fn summarize(traces: &[Trace]) -> Result<PosteriorSummary> {
    check_traces(traces)?;
    let mut parameters = Vec::new();
    for (name, index) in traces[0].meta.parameters() {
        let per_chain: Vec<Vec<f64>> = traces
            .iter()
            .map(|t| t.series(&name, index).expect("parameter listed by meta"))
            .collect();
        let refs: Vec<&[f64]> = per_chain.iter().map(|c| c.as_slice()).collect();
        let pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
        let s = summarize_draws(&pooled);
        parameters.push(ParameterSummary {
            param: name,
            index,
            mean: s.mean,
            sd: s.sd,
            q025: s.q025,
            q50: s.q50,
            q975: s.q975,
            ess: effective_sample_size(&refs),
            rhat: split_rhat(&refs),
        });
    }
    Ok(PosteriorSummary { parameters })
}
