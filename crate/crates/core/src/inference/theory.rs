//! Posterior probabilities of the shrinkage factor by one-dimensional
//! quadrature.
//!
//! With `e = λτ`, `f = ωφ`, group size `n`, mean residual `r̄` and
//! within-group sum of squares `W`, integrating `u` out of one group gives
//!
//! ```text
//! p(y | e, f) ∝ e^(n/2) (1 + n e / f)^(−1/2) exp{−½ e (W + n r̄² (1 − γ))},  γ = n e / (n e + f)
//! ```
//!
//! so `P(γ > ε | ·)` is a ratio of integrals over ω against its prior, cut
//! at `ω < c₁/φ` with `c₁ = ((1 − ε)/ε) n λτ`; `P(γ < ε | ·)` over λ is cut at
//! `λ < c₂/τ` with `c₂ = (ε/(1 − ε)) ωφ / n`. Integrals run on `t = ln x` and
//! are shifted by the largest log-integrand seen on a scan grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::gibbs::LocalPrior;

use super::quadrature::{integrate, ABS_TOL, REL_TOL};

const SCAN_MIN: f64 = -200.0;
const SCAN_MAX: f64 = 200.0;
const SCAN_STEP: f64 = 0.25;

/// Densities of a local precision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ScaleFamily {
    /// `x^(b−1) (1 + x)^(−(a+b)) / B(a, b)`
    BetaPrime { a: f64, b: f64 },
    /// `x⁻² e^(−1/x)`
    Laplace,
    /// `Gamma(ν/2, ν/2)`
    StudentT { nu: f64 },
}

impl ScaleFamily {
    pub fn horseshoe() -> Self {
        ScaleFamily::BetaPrime { a: 0.5, b: 0.5 }
    }

    /// `(1 + x)⁻²`
    pub fn half_cauchy() -> Self {
        ScaleFamily::BetaPrime { a: 1.0, b: 1.0 }
    }

    /// The random-effect family of a sampler prior. The common-Gamma prior
    /// has a point-mass local scale and no curve.
    pub fn from_local_prior(prior: LocalPrior, nu: f64) -> Option<Self> {
        match prior {
            LocalPrior::CommonGamma => None,
            LocalPrior::Horseshoe => Some(Self::horseshoe()),
            LocalPrior::Laplace => Some(ScaleFamily::Laplace),
            LocalPrior::StudentT => Some(ScaleFamily::StudentT { nu }),
        }
    }

    /// `ln π(e^t) + t`, the log density on the log axis.
    pub fn log_density_log_axis(&self, t: f64) -> f64 {
        match *self {
            ScaleFamily::BetaPrime { a, b } => b * t - (a + b) * ln_1p_exp(t) - ln_beta(a, b),
            ScaleFamily::Laplace => -t - (-t).exp(),
            ScaleFamily::StudentT { nu } => {
                let h = 0.5 * nu;
                h * h.ln() - ln_gamma(h) + h * t - h * t.exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScaleFamily::BetaPrime { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            ScaleFamily::Laplace => true,
            ScaleFamily::StudentT { nu } => nu > 0.0 && nu.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid scale family {self:?}")))
        }
    }
}

/// `ln(1 + eᵗ)` without overflow.
fn ln_1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Which probability is traced and along which axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "kebab-case")]
pub enum Sweep {
    /// `P(γ > ε)` as φ grows, integrating over ω at fixed `λτ`.
    Phi { error_precision: f64 },
    /// `P(γ < ε)` as τ grows, integrating over λ at fixed `ωφ`.
    Tau { effect_precision: f64, within_ss: f64 },
    /// `P(γ < ε)` as `|r̄|` grows, integrating over ω at fixed `λτ` and φ.
    Residual { error_precision: f64, phi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub family: ScaleFamily,
    pub eps: f64,
    pub n: usize,
    /// Group mean residual `ȳ − x̄ᵀβ`; ignored by the residual sweep.
    pub residual: f64,
    pub sweep: Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub prob: f64,
    pub log_prob: f64,
}

/// `c₁ = ((1 − ε)/ε) n λτ`.
pub fn c1(eps: f64, n: usize, error_precision: f64) -> f64 {
    (1.0 - eps) / eps * n as f64 * error_precision
}

/// `c₂ = (ε/(1 − ε)) ωφ / n`.
pub fn c2(eps: f64, n: usize, effect_precision: f64) -> f64 {
    eps / (1.0 - eps) * effect_precision / n as f64
}

fn log_lik_omega(t: f64, n: f64, e: f64, phi: f64, r: f64) -> f64 {
    let f = t.exp() * phi;
    let ne = n * e;
    let gamma = ne / (ne + f);
    -0.5 * (ne / f).ln_1p() + 0.5 * ne * r * r * gamma
}

fn log_lik_lambda(t: f64, n: f64, tau: f64, f: f64, r: f64, within: f64) -> f64 {
    let e = t.exp() * tau;
    let ne = n * e;
    let gamma = ne / (ne + f);
    0.5 * n * e.ln() - 0.5 * (ne / f).ln_1p() - 0.5 * e * (within + n * r * r * (1.0 - gamma))
}

#[derive(Clone, Copy)]
enum Region {
    Below(f64),
    Above(f64),
}

/// Log-axis point of the largest integrand on `[lo, hi]`: a coarse scan
/// followed by golden-section refinement.
fn peak<G: Fn(f64) -> f64>(g: &G, lo: f64, hi: f64) -> Option<f64> {
    let lo_s = lo.max(SCAN_MIN);
    let hi_s = hi.min(SCAN_MAX);
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |t: f64| {
        let v = g(t);
        if v.is_finite() && best.is_none_or(|(_, b)| v > b) {
            best = Some((t, v));
        }
    };
    if lo.is_finite() {
        consider(lo);
    }
    if hi.is_finite() {
        consider(hi);
    }
    let mut t = (lo_s / SCAN_STEP).ceil() * SCAN_STEP;
    while t <= hi_s {
        consider(t);
        t += SCAN_STEP;
    }
    let (t0, _) = best?;
    let (mut a, mut b) = ((t0 - SCAN_STEP).max(lo), (t0 + SCAN_STEP).min(hi));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if g(x1) >= g(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let mid = 0.5 * (a + b);
    Some(if g(mid) >= g(t0) { mid } else { t0 })
}

/// Length scale of `g` around `t0` from its slope and curvature, in `[1e-12, 1]`.
fn local_width<G: Fn(f64) -> f64>(g: &G, t0: f64) -> f64 {
    let d = 1e-4;
    let (gm, g0, gp) = (g(t0 - d), g(t0), g(t0 + d));
    let mut w: f64 = 1.0;
    let slope = if gp.is_finite() && gm.is_finite() {
        (gp - gm) / (2.0 * d)
    } else if gp.is_finite() {
        (gp - g0) / d
    } else {
        (g0 - gm) / d
    };
    if slope.is_finite() && slope.abs() > 1.0 {
        w = w.min(1.0 / slope.abs());
    }
    let curv = (gp - 2.0 * g0 + gm) / (d * d);
    if curv.is_finite() && curv < -1.0 {
        w = w.min(1.0 / (-curv).sqrt());
    }
    w.clamp(1e-12, 1.0)
}

/// `∫ exp(g(t) − shift)` from `t0` in direction `dir` (±1) up to `limit`,
/// mapped by `t = t0 + dir·h·s/(1 − s)` so the first unit of `s` spans the
/// local width `h`.
fn from_point<G: Fn(f64) -> f64>(
    g: &G,
    shift: f64,
    t0: f64,
    dir: f64,
    limit: Option<f64>,
) -> std::result::Result<f64, (f64, f64)> {
    let h = local_width(g, t0);
    let s_max = match limit {
        Some(l) => {
            let span = (l - t0).abs();
            if span == 0.0 {
                return Ok(0.0);
            }
            span / (h + span)
        }
        None => 1.0,
    };
    integrate(
        |s| {
            let d = 1.0 - s;
            let v = (g(t0 + dir * h * s / d) - shift).exp() * h / (d * d);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        s_max,
        ABS_TOL,
        REL_TOL,
    )
    .map(|e| e.value)
    .map_err(|e| (e.value, e.error))
}

/// `ln ∫_lo^hi exp(g)` split at the peak.
fn log_integral<G: Fn(f64) -> f64>(g: &G, lo: f64, hi: f64, at: f64) -> Result<f64> {
    let fail = |msg: String| Error::Quadrature { at, msg };
    let t0 = peak(g, lo, hi).ok_or_else(|| fail("integrand is not finite anywhere on the scan grid".into()))?;
    let shift = g(t0);
    let lim = |x: f64| x.is_finite().then_some(x);
    let left = from_point(g, shift, t0, -1.0, lim(lo));
    let right = from_point(g, shift, t0, 1.0, lim(hi));
    let (left, right) = match (left, right) {
        (Ok(a), Ok(b)) => (a, b),
        (Err((v, e)), _) | (_, Err((v, e))) => return Err(fail(format!("estimate {v} ± {e} did not converge"))),
    };
    let total = left + right;
    if !(total > 0.0) {
        return Err(fail("integral underflowed to zero".into()));
    }
    Ok(shift + total.ln())
}

/// `ln ∫` over the region and over the whole line.
fn log_integrals<G: Fn(f64) -> f64>(g: G, region: Region, at: f64) -> Result<(f64, f64)> {
    let whole = log_integral(&g, f64::NEG_INFINITY, f64::INFINITY, at)?;
    let part = match region {
        Region::Below(upper) => log_integral(&g, f64::NEG_INFINITY, upper, at)?,
        Region::Above(lower) => log_integral(&g, lower, f64::INFINITY, at)?,
    };
    Ok((part, whole))
}

fn point(cfg: &CurveConfig, x: f64) -> Result<CurvePoint> {
    let n = cfg.n as f64;
    let eps = cfg.eps;
    let fam = cfg.family;
    let (ln_num, ln_den) = match cfg.sweep {
        Sweep::Phi { error_precision: e } => {
            let cut = (c1(eps, cfg.n, e) / x).ln();
            let r = cfg.residual;
            log_integrals(
                move |t| log_lik_omega(t, n, e, x, r) + fam.log_density_log_axis(t),
                Region::Below(cut),
                x,
            )?
        }
        Sweep::Tau {
            effect_precision: f,
            within_ss,
        } => {
            let cut = (c2(eps, cfg.n, f) / x).ln();
            let r = cfg.residual;
            log_integrals(
                move |t| log_lik_lambda(t, n, x, f, r, within_ss) + fam.log_density_log_axis(t),
                Region::Below(cut),
                x,
            )?
        }
        Sweep::Residual {
            error_precision: e,
            phi,
        } => {
            let cut = (c1(eps, cfg.n, e) / phi).ln();
            log_integrals(
                move |t| log_lik_omega(t, n, e, phi, x) + fam.log_density_log_axis(t),
                Region::Above(cut),
                x,
            )?
        }
    };
    let log_prob = (ln_num - ln_den).min(0.0);
    Ok(CurvePoint {
        x,
        prob: log_prob.exp(),
        log_prob,
    })
}

/// The probability curve over `grid`; grid points are evaluated in parallel.
pub fn theorem2_curve(cfg: &CurveConfig, grid: &[f64]) -> Result<Vec<CurvePoint>> {
    cfg.family.validate()?;
    if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
        return Err(Error::validation(format!("eps must lie in (0, 1), got {}", cfg.eps)));
    }
    if cfg.n == 0 {
        return Err(Error::validation("group size must be positive"));
    }
    let positive = |v: f64| v > 0.0 && v.is_finite();
    let fixed_ok = match cfg.sweep {
        Sweep::Phi { error_precision } => positive(error_precision),
        Sweep::Tau {
            effect_precision,
            within_ss,
        } => positive(effect_precision) && within_ss >= 0.0 && within_ss.is_finite(),
        Sweep::Residual { error_precision, phi } => positive(error_precision) && positive(phi),
    };
    if !fixed_ok {
        return Err(Error::validation("fixed precisions must be positive and finite"));
    }
    let axis_ok = |x: f64| match cfg.sweep {
        Sweep::Residual { .. } => x.is_finite(),
        _ => positive(x),
    };
    if let Some(&bad) = grid.iter().find(|x| !axis_ok(**x)) {
        return Err(Error::validation(format!("invalid grid point {bad}")));
    }
    grid.par_iter().map(|&x| point(cfg, x)).collect()
}

/// Every step strictly lowers the log probability.
pub fn strictly_decreasing(curve: &[CurvePoint]) -> bool {
    curve.windows(2).all(|w| w[1].log_prob < w[0].log_prob)
}

/// Least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Slope of `ln P` on `ln x` over points with `x ≥ from`.
pub fn loglog_tail_slope(curve: &[CurvePoint], from: f64) -> f64 {
    let tail: Vec<&CurvePoint> = curve.iter().filter(|p| p.x >= from).collect();
    let xs: Vec<f64> = tail.iter().map(|p| p.x.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.log_prob).collect();
    ols_slope(&xs, &ys)
}

/// Slope of `ln P` on `x` over points with `x ≥ from`.
pub fn log_linear_tail_slope(curve: &[CurvePoint], from: f64) -> f64 {
    let tail: Vec<&CurvePoint> = curve.iter().filter(|p| p.x >= from).collect();
    let xs: Vec<f64> = tail.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.log_prob).collect();
    ols_slope(&xs, &ys)
}

/// `10^lo, 10^(lo + 1/k), …, 10^hi`.
pub fn log10_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let steps = ((hi - lo) * per_decade as f64).round() as usize;
    (0..=steps)
        .map(|j| 10f64.powf(lo + j as f64 / per_decade as f64))
        .collect()
}
