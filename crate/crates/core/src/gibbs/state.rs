use serde::{Deserialize, Serialize};

use crate::design::{dot, GroupedDesign};
use crate::error::{Error, Result};

use super::prior::PriorConfig;

/// Initial precisions are clamped to this range.
pub const INIT_PRECISION_MIN: f64 = 1e-6;
pub const INIT_PRECISION_MAX: f64 = 1e6;

/// Full Gibbs state.
///
/// `tau` is the global error precision; under common-Gamma errors it is ζ_ε
/// and `lambda` stays at 1. Likewise `phi` is ζ_u and `omega` stays at 1
/// under common-Gamma random effects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub beta: Vec<f64>,
    pub u: Vec<f64>,
    pub phi: f64,
    pub tau: f64,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Half-Cauchy auxiliaries for λ.
    pub rho: Vec<f64>,
    /// Horseshoe auxiliaries for ω.
    pub varrho: Vec<f64>,
    pub nu: Vec<u32>,
}

impl ChainState {
    /// Precision-positivity and support check run after every sweep.
    pub fn check(&self, priors: &PriorConfig) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.phi) || !ok(self.tau) {
            return Err(Error::Domain(format!(
                "global precisions left the positive reals (phi={}, tau={})",
                self.phi, self.tau
            )));
        }
        for (name, v) in [
            ("omega", &self.omega),
            ("lambda", &self.lambda),
            ("rho", &self.rho),
            ("varrho", &self.varrho),
        ] {
            if let Some(bad) = v.iter().find(|x| !ok(**x)) {
                return Err(Error::Domain(format!(
                    "{name} entry {bad} is not a positive finite value"
                )));
            }
        }
        if self.beta.iter().chain(&self.u).any(|x| !x.is_finite()) {
            return Err(Error::Domain("beta or u has a non-finite entry".into()));
        }
        if let Some(n) = self.nu.iter().find(|n| !priors.nu_support.contains(n)) {
            return Err(Error::Domain(format!("nu = {n} is outside the support")));
        }
        Ok(())
    }

    /// `γ_i = λ_iτ / (λ_iτ + ω_iφ/n_i)`.
    pub fn shrinkage_factor(&self, i: usize, n_i: usize) -> f64 {
        shrinkage_factor(self.lambda[i] * self.tau, self.omega[i] * self.phi, n_i)
    }
}

/// `γ = e / (e + f/n)` written as `n e / (n e + f)`.
pub fn shrinkage_factor(error_precision: f64, effect_precision: f64, n: usize) -> f64 {
    let ne = n as f64 * error_precision;
    ne / (ne + effect_precision)
}

/// Deterministic starting point: pooled OLS for β (zeros if singular), group
/// mean residuals for u, inverse residual variances for τ and φ clamped to
/// `[1e-6, 1e6]`, unit local scales and ν = 5.
pub fn initialize_state(design: &GroupedDesign, priors: &PriorConfig) -> ChainState {
    let p = design.p();
    let m = design.m();
    let beta = design.ols().unwrap_or_else(|| vec![0.0; p]);

    let mut u = Vec::with_capacity(m);
    let mut sse = 0.0;
    for g in design.groups() {
        let ui = g.mean_residual(&beta);
        sse += g
            .rows()
            .zip(&g.y)
            .map(|(r, y)| {
                let e = y - dot(r, &beta) - ui;
                e * e
            })
            .sum::<f64>();
        u.push(ui);
    }
    let n = design.n_total() as f64;
    let tau = clamp_precision(n / sse);

    let u_mean = u.iter().sum::<f64>() / m as f64;
    let u_var = u.iter().map(|x| (x - u_mean) * (x - u_mean)).sum::<f64>() / m as f64;
    let phi = clamp_precision(1.0 / u_var);

    let nu0 = priors
        .nu_support
        .iter()
        .copied()
        .min_by_key(|l| (*l as i64 - 5).abs())
        .unwrap_or(5);
    ChainState {
        beta,
        u,
        phi,
        tau,
        omega: vec![1.0; m],
        lambda: vec![1.0; m],
        rho: vec![1.0; m],
        varrho: vec![1.0; m],
        nu: vec![nu0; m],
    }
}

fn clamp_precision(v: f64) -> f64 {
    if v.is_nan() {
        INIT_PRECISION_MAX
    } else {
        v.clamp(INIT_PRECISION_MIN, INIT_PRECISION_MAX)
    }
}
