//! Full-conditional updates.
//!
//! Each conditional is derived from the joint posterior
//!
//! ```text
//! Π_ij (λ_iτ)^½ exp{−½ λ_iτ (y_ij − x_ijᵀβ − u_i)²} · Π_i (ω_iφ)^½ exp{−½ ω_iφ u_i²}
//!   · π(φ) π(τ) Π_i π(ω_i) π(λ_i)
//! ```
//!
//! The β covariance is `(τ Σ λ_i x xᵀ)⁻¹`, the τ shape counts observations
//! and the φ shape counts groups.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::design::{GroupData, GroupedDesign};
use crate::error::{Error, Result};
use crate::kernels::{
    cholesky_with_jitter, draw_categorical_log, draw_gamma, draw_gig, draw_mvn_from_precision, draw_normal, RngStream,
};

use super::prior::{ErrorPrior, LocalPrior, PriorConfig};
use super::state::{shrinkage_factor, ChainState};

/// Mean and variance of `u_i | ·`.
pub fn u_conditional(state: &ChainState, i: usize, group: &GroupData) -> (f64, f64) {
    let error_precision = state.lambda[i] * state.tau;
    let effect_precision = state.omega[i] * state.phi;
    let n = group.n();
    let gamma = shrinkage_factor(error_precision, effect_precision, n);
    let mean = gamma * group.mean_residual(&state.beta);
    let var = 1.0 / (n as f64 * error_precision + effect_precision);
    (mean, var)
}

pub fn step_u(state: &mut ChainState, design: &GroupedDesign, rng: &mut RngStream) -> Result<()> {
    for (i, g) in design.groups().iter().enumerate() {
        let (mean, var) = u_conditional(state, i, g);
        state.u[i] = draw_normal(rng, mean, var.sqrt())?;
    }
    Ok(())
}

/// Precision matrix `τ Σ λ_i X_iᵀX_i + κI` and linear term
/// `τ Σ λ_i X_iᵀ(y_i − u_i 1)` of `β | ·`.
pub fn beta_conditional(state: &ChainState, design: &GroupedDesign, priors: &PriorConfig) -> (DMatrix<f64>, Vec<f64>) {
    let p = design.p();
    let mut precision = DMatrix::zeros(p, p);
    let mut linear = vec![0.0; p];
    for (i, g) in design.groups().iter().enumerate() {
        let w = state.lambda[i] * state.tau;
        let n = g.n() as f64;
        for a in 0..p {
            linear[a] += w * (g.xty[a] - state.u[i] * n * g.x_bar[a]);
            for b in 0..p {
                precision[(a, b)] += w * g.xtx[a * p + b];
            }
        }
    }
    for a in 0..p {
        precision[(a, a)] += priors.beta_precision;
    }
    (precision, linear)
}

/// Mean vector and covariance matrix of `β | ·`.
pub fn beta_conditional_moments(
    state: &ChainState,
    design: &GroupedDesign,
    priors: &PriorConfig,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (precision, linear) = beta_conditional(state, design, priors);
    let ch = cholesky_with_jitter(&precision)?;
    let mean = ch.solve(&DVector::from_column_slice(&linear));
    Ok((mean.iter().copied().collect(), ch.inverse()))
}

pub fn step_beta(
    state: &mut ChainState,
    design: &GroupedDesign,
    priors: &PriorConfig,
    rng: &mut RngStream,
) -> Result<()> {
    let (precision, linear) = beta_conditional(state, design, priors);
    state.beta = draw_mvn_from_precision(rng, &linear, &precision)?;
    Ok(())
}

/// Shape and rate of the global error precision given everything else.
pub fn tau_conditional(state: &ChainState, design: &GroupedDesign, priors: &PriorConfig) -> (f64, f64) {
    let (a, b) = priors.error_scale_hyper();
    let weighted_rss: f64 = design
        .groups()
        .iter()
        .enumerate()
        .map(|(i, g)| state.lambda[i] * g.rss(&state.beta, state.u[i]))
        .sum();
    (a + design.n_total() as f64 / 2.0, b + 0.5 * weighted_rss)
}

/// Shape and rate of the global random-effect precision given everything else.
pub fn phi_conditional(state: &ChainState, priors: &PriorConfig) -> (f64, f64) {
    let (a, b) = priors.effect_scale_hyper();
    let weighted_ss: f64 = state.omega.iter().zip(&state.u).map(|(w, u)| w * u * u).sum();
    (a + state.u.len() as f64 / 2.0, b + 0.5 * weighted_ss)
}

/// Global scales that are held at fixed values instead of sampled.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FixedScales {
    pub tau: Option<f64>,
    pub phi: Option<f64>,
}

pub fn step_global_scales(
    state: &mut ChainState,
    design: &GroupedDesign,
    priors: &PriorConfig,
    fixed: &FixedScales,
    rng: &mut RngStream,
) -> Result<()> {
    state.tau = match fixed.tau {
        Some(v) => v,
        None => {
            let (shape, rate) = tau_conditional(state, design, priors);
            draw_gamma(rng, shape, rate)?
        }
    };
    state.phi = match fixed.phi {
        Some(v) => v,
        None => {
            let (shape, rate) = phi_conditional(state, priors);
            draw_gamma(rng, shape, rate)?
        }
    };
    Ok(())
}

/// One `(λ_i, ρ_i)` update: `λ ~ Gamma(n/2 + 1, τ·RSS/2 + ρ)` then
/// `ρ ~ Gamma(2, λ + 1)`. With `n = 0` and `RSS = 0` this is the prior-only
/// chain whose λ-marginal is `(1 + λ)⁻²`.
pub fn update_lambda_i(rng: &mut RngStream, n: usize, tau: f64, rss: f64, rho: &mut f64) -> Result<f64> {
    let lambda = draw_gamma(rng, n as f64 / 2.0 + 1.0, 0.5 * tau * rss + *rho)?;
    *rho = draw_gamma(rng, 2.0, lambda + 1.0)?;
    Ok(lambda)
}

pub fn step_lambda_halfcauchy(state: &mut ChainState, design: &GroupedDesign, rng: &mut RngStream) -> Result<()> {
    for (i, g) in design.groups().iter().enumerate() {
        let rss = g.rss(&state.beta, state.u[i]);
        state.lambda[i] = update_lambda_i(rng, g.n(), state.tau, rss, &mut state.rho[i])?;
    }
    Ok(())
}

/// `log t_ν(x; 0, scale)`.
pub fn student_t_log_density(x: f64, nu: f64, scale: f64) -> f64 {
    let z = x / scale;
    ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - scale.ln()
        - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p()
}

/// Log weights of `ν_i | u_i, φ` over the support (ω integrated out).
pub fn nu_log_weights(priors: &PriorConfig, u: f64, phi: f64) -> Vec<f64> {
    let scale = (1.0 / phi).sqrt();
    priors
        .nu_support
        .iter()
        .map(|&l| priors.nu_log_weight(l) + student_t_log_density(u, l as f64, scale))
        .collect()
}

/// Per-group local random-effect precision update. Horseshoe draws ω then
/// its auxiliary; Laplace draws from the GIG conditional; Student-t draws ν
/// from its ω-marginal conditional and then ω given ν.
pub fn update_omega_i(
    rng: &mut RngStream,
    priors: &PriorConfig,
    u: f64,
    phi: f64,
    omega: &mut f64,
    varrho: &mut f64,
    nu: &mut u32,
) -> Result<()> {
    let phi_u2 = phi * u * u;
    match priors.reffect_prior {
        LocalPrior::CommonGamma => {}
        LocalPrior::Horseshoe => {
            *omega = draw_gamma(rng, 1.0, 0.5 * phi_u2 + *varrho)?;
            *varrho = draw_gamma(rng, 1.0, *omega + 1.0)?;
        }
        LocalPrior::Laplace => {
            *omega = draw_gig(rng, -0.5, phi_u2, 2.0)?;
        }
        LocalPrior::StudentT => {
            let k = draw_categorical_log(rng, &nu_log_weights(priors, u, phi))?;
            *nu = priors.nu_support[k];
            let v = *nu as f64;
            *omega = draw_gamma(rng, 0.5 * v + 0.5, 0.5 * phi_u2 + 0.5 * v)?;
        }
    }
    Ok(())
}

pub fn step_omega(state: &mut ChainState, priors: &PriorConfig, rng: &mut RngStream) -> Result<()> {
    if priors.reffect_prior == LocalPrior::CommonGamma {
        return Ok(());
    }
    for i in 0..state.u.len() {
        update_omega_i(
            rng,
            priors,
            state.u[i],
            state.phi,
            &mut state.omega[i],
            &mut state.varrho[i],
            &mut state.nu[i],
        )?;
    }
    Ok(())
}

/// One full sweep in the fixed order u, β, (τ, φ), λ/ρ, ω/auxiliaries.
pub fn sweep(
    state: &mut ChainState,
    design: &GroupedDesign,
    priors: &PriorConfig,
    fixed: &FixedScales,
    rng: &mut RngStream,
) -> Result<()> {
    step_u(state, design, rng)?;
    step_beta(state, design, priors, rng)?;
    step_global_scales(state, design, priors, fixed, rng)?;
    if priors.error_prior == ErrorPrior::HalfCauchyLocal {
        step_lambda_halfcauchy(state, design, rng)?;
    }
    step_omega(state, priors, rng)?;
    state.check(priors)
}

/// Rejects a state whose shape does not match the design.
pub fn check_dimensions(state: &ChainState, design: &GroupedDesign) -> Result<()> {
    if state.beta.len() != design.p() {
        return Err(Error::DimensionMismatch {
            expected: design.p(),
            found: state.beta.len(),
        });
    }
    let m = design.m();
    for len in [
        state.u.len(),
        state.omega.len(),
        state.lambda.len(),
        state.rho.len(),
        state.varrho.len(),
        state.nu.len(),
    ] {
        if len != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: len,
            });
        }
    }
    Ok(())
}
