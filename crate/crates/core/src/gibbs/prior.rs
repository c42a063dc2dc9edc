use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior on the error precisions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorPrior {
    /// One common precision ζ_ε for every error.
    #[value(name = "gamma")]
    CommonGamma,
    /// Global τ times local λ_i with π(λ) = (1 + λ)⁻².
    #[value(name = "half-cauchy")]
    HalfCauchyLocal,
}

/// Local prior on the random-effect precisions ω_i.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LocalPrior {
    /// One common precision ζ_u, ω_i ≡ 1.
    #[value(name = "gamma")]
    CommonGamma,
    /// ω_i ~ Gamma(ν_i/2, ν_i/2) with a discrete prior on ν_i.
    #[value(name = "student-t")]
    StudentT,
    /// π(ω) ∝ ω^(−1/2) (1 + ω)⁻¹.
    #[value(name = "horseshoe")]
    Horseshoe,
    /// π(ω) = ω⁻² e^(−1/ω).
    #[value(name = "laplace")]
    Laplace,
}

/// Unnormalized prior weight on the Student-t degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NuWeight {
    /// `l / (l + k)³`, the weight printed in the sampler.
    Algorithm3,
    /// `(l / (l + k))³`.
    Cubed,
    /// `l / (l + k)`.
    Prose,
}

impl ErrorPrior {
    pub const ALL: [ErrorPrior; 2] = [ErrorPrior::CommonGamma, ErrorPrior::HalfCauchyLocal];

    pub fn flag(self) -> &'static str {
        match self {
            ErrorPrior::CommonGamma => "gamma",
            ErrorPrior::HalfCauchyLocal => "half-cauchy",
        }
    }
}

impl LocalPrior {
    pub const ALL: [LocalPrior; 4] = [
        LocalPrior::CommonGamma,
        LocalPrior::StudentT,
        LocalPrior::Horseshoe,
        LocalPrior::Laplace,
    ];

    pub fn flag(self) -> &'static str {
        match self {
            LocalPrior::CommonGamma => "gamma",
            LocalPrior::StudentT => "student-t",
            LocalPrior::Horseshoe => "horseshoe",
            LocalPrior::Laplace => "laplace",
        }
    }
}

impl fmt::Display for ErrorPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

impl fmt::Display for LocalPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub error_prior: ErrorPrior,
    pub reffect_prior: LocalPrior,
    pub a_phi: f64,
    pub b_phi: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_zeta_eps: f64,
    pub b_zeta_eps: f64,
    pub a_zeta_u: f64,
    pub b_zeta_u: f64,
    pub k_nu: f64,
    pub nu_support: Vec<u32>,
    pub nu_weight: NuWeight,
    /// Precision κ of an optional N(0, κ⁻¹ I) prior on β; 0 means flat.
    #[serde(default)]
    pub beta_precision: f64,
}

pub const DEFAULT_HYPER: f64 = 1e-10;
pub const DEFAULT_K_NU: f64 = 2.84;

impl Default for PriorConfig {
    fn default() -> Self {
        Self::new(ErrorPrior::HalfCauchyLocal, LocalPrior::Horseshoe)
    }
}

impl PriorConfig {
    pub fn new(error_prior: ErrorPrior, reffect_prior: LocalPrior) -> Self {
        Self {
            error_prior,
            reffect_prior,
            a_phi: DEFAULT_HYPER,
            b_phi: DEFAULT_HYPER,
            a_tau: DEFAULT_HYPER,
            b_tau: DEFAULT_HYPER,
            a_zeta_eps: DEFAULT_HYPER,
            b_zeta_eps: DEFAULT_HYPER,
            a_zeta_u: DEFAULT_HYPER,
            b_zeta_u: DEFAULT_HYPER,
            k_nu: DEFAULT_K_NU,
            nu_support: (1..=30).collect(),
            nu_weight: NuWeight::Algorithm3,
            beta_precision: 0.0,
        }
    }

    /// Both priors common Gamma: the baseline comparable to a classical
    /// random-intercept fit.
    pub fn is_baseline(&self) -> bool {
        self.error_prior == ErrorPrior::CommonGamma && self.reffect_prior == LocalPrior::CommonGamma
    }

    pub fn validate(&self) -> Result<()> {
        let hypers = [
            ("a_phi", self.a_phi),
            ("b_phi", self.b_phi),
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
            ("a_zeta_eps", self.a_zeta_eps),
            ("b_zeta_eps", self.b_zeta_eps),
            ("a_zeta_u", self.a_zeta_u),
            ("b_zeta_u", self.b_zeta_u),
            ("k_nu", self.k_nu),
        ];
        for (name, v) in hypers {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.nu_support.is_empty() || self.nu_support.contains(&0) {
            return Err(Error::validation(
                "nu_support must be a non-empty set of positive integers",
            ));
        }
        if !(self.beta_precision >= 0.0 && self.beta_precision.is_finite()) {
            return Err(Error::validation("beta_precision must be finite and >= 0"));
        }
        Ok(())
    }

    /// Gamma hyperparameters of the global error precision (τ or ζ_ε).
    pub fn error_scale_hyper(&self) -> (f64, f64) {
        match self.error_prior {
            ErrorPrior::CommonGamma => (self.a_zeta_eps, self.b_zeta_eps),
            ErrorPrior::HalfCauchyLocal => (self.a_tau, self.b_tau),
        }
    }

    /// Gamma hyperparameters of the global random-effect precision (φ or ζ_u).
    pub fn effect_scale_hyper(&self) -> (f64, f64) {
        match self.reffect_prior {
            LocalPrior::CommonGamma => (self.a_zeta_u, self.b_zeta_u),
            _ => (self.a_phi, self.b_phi),
        }
    }

    /// Unnormalized log prior weight of `ν = l`.
    pub fn nu_log_weight(&self, l: u32) -> f64 {
        let l = l as f64;
        let r = l / (l + self.k_nu);
        match self.nu_weight {
            NuWeight::Algorithm3 => l.ln() - 3.0 * (l + self.k_nu).ln(),
            NuWeight::Cubed => 3.0 * r.ln(),
            NuWeight::Prose => r.ln(),
        }
    }

    /// Normalized prior mass over `nu_support`, in support order.
    pub fn nu_prior_pmf(&self) -> Vec<(u32, f64)> {
        let logs: Vec<f64> = self.nu_support.iter().map(|&l| self.nu_log_weight(l)).collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = w.iter().sum();
        self.nu_support.iter().zip(w).map(|(&l, v)| (l, v / total)).collect()
    }
}
