//! Synthetic panels drawn from the forward model.

use serde::{Deserialize, Serialize};

use crate::data::{inv_logit, Observation, PanelDataset, Sex};
use crate::design::{build_row, ModelSpec, ModelVariant};
use crate::error::{Error, Result};
use crate::gibbs::{ErrorPrior, LocalPrior, PriorConfig};
use crate::inference::draw_local_precision;
use crate::kernels::{draw_gamma, draw_normal, RngStream};

/// Stream used for synthetic data, away from chain and prediction streams.
pub const SIMULATION_STREAM: u64 = 2_000_000;

/// Coefficients in Model 1 column order.
pub const DEFAULT_BETA_MODEL1: [f64; 7] = [-3.0, 0.5, -0.02, -20.0, -0.5, 1.0, 0.02];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub m: usize,
    pub n_per_group: usize,
    pub variant: ModelVariant,
    pub beta: Vec<f64>,
    /// Global error precision; every λ_i is 1 unless the error prior is half-Cauchy.
    pub tau: f64,
    /// Global random-effect precision; infinity gives `u ≡ 0`.
    pub phi: f64,
    pub error_prior: ErrorPrior,
    pub reffect_prior: LocalPrior,
    pub start_year: i32,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(m: usize, n_per_group: usize, variant: ModelVariant, seed: u64) -> Self {
        let beta = match variant {
            ModelVariant::Model1 => DEFAULT_BETA_MODEL1.to_vec(),
            ModelVariant::Model2 => {
                let mut b = DEFAULT_BETA_MODEL1.to_vec();
                b.remove(5);
                b
            }
        };
        Self {
            m,
            n_per_group,
            variant,
            beta,
            tau: 25.0,
            phi: 4.0,
            error_prior: ErrorPrior::CommonGamma,
            reffect_prior: LocalPrior::CommonGamma,
            start_year: 1990,
            seed,
        }
    }

    /// Mean of the simulated years, the natural year offset.
    pub fn year_offset(&self) -> f64 {
        self.start_year as f64 + (self.n_per_group as f64 - 1.0) / 2.0
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(self.variant, Sex::Both, self.year_offset())
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n_per_group == 0 {
            return Err(Error::validation("m and n_per_group must be positive"));
        }
        if self.beta.len() != self.variant.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.variant.dim(),
                found: self.beta.len(),
            });
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) || !(self.phi > 0.0) {
            return Err(Error::validation("tau must be positive and finite, phi positive"));
        }
        Ok(())
    }
}

/// Latent values behind a simulated panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: SimulationConfig,
    pub year_offset: f64,
    pub unit_ids: Vec<String>,
    pub u: Vec<f64>,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Draws covariates uniformly over plausible ranges, local scales from the
/// configured priors, then `y = xᵀβ + u_i + ε` and `c = inv_logit(y)`.
pub fn simulate(cfg: &SimulationConfig) -> Result<(PanelDataset, Truth)> {
    cfg.validate()?;
    let spec = cfg.spec()?;
    let mut rng = RngStream::new(cfg.seed, SIMULATION_STREAM);
    let priors = PriorConfig::new(cfg.error_prior, cfg.reffect_prior);
    let width = cfg.m.to_string().len().max(3);
    let mut obs = Vec::with_capacity(cfg.m * cfg.n_per_group);
    let mut truth = Truth {
        config: cfg.clone(),
        year_offset: cfg.year_offset(),
        unit_ids: Vec::with_capacity(cfg.m),
        u: Vec::with_capacity(cfg.m),
        omega: Vec::with_capacity(cfg.m),
        lambda: Vec::with_capacity(cfg.m),
    };
    for i in 0..cfg.m {
        let unit_id = format!("U{:0width$}", i + 1);
        let omega = draw_local_precision(&mut rng, &priors)?;
        let u = if cfg.phi.is_infinite() {
            0.0
        } else {
            draw_normal(&mut rng, 0.0, (1.0 / (omega * cfg.phi)).sqrt())?
        };
        let lambda = match cfg.error_prior {
            ErrorPrior::CommonGamma => 1.0,
            ErrorPrior::HalfCauchyLocal => {
                let rho = draw_gamma(&mut rng, 1.0, 1.0)?;
                draw_gamma(&mut rng, 1.0, rho)?
            }
        };
        let sd = (1.0 / (lambda * cfg.tau)).sqrt();
        for j in 0..cfg.n_per_group {
            let mut o = Observation {
                unit_id: unit_id.clone(),
                period: cfg.start_year + j as i32,
                sex: Sex::Both,
                completeness: None,
                reg_cdr: 2.0 + 10.0 * rng.open01(),
                pct65: 0.03 + 0.17 * rng.open01(),
                u5mr_true: (0.005f64.ln() + (0.15f64 / 0.005).ln() * rng.open01()).exp(),
                c5q0: Some(0.3 + 0.7 * rng.open01()),
            };
            let eta = build_row(&o, &spec)?.dot(&cfg.beta) + u;
            let y = draw_normal(&mut rng, eta, sd)?;
            o.completeness = Some(inv_logit(y));
            obs.push(o);
        }
        truth.unit_ids.push(unit_id);
        truth.u.push(u);
        truth.omega.push(omega);
        truth.lambda.push(lambda);
    }
    Ok((PanelDataset::from_observations(obs)?, truth))
}
