use std::collections::BTreeMap;
use std::io::{Read, Write};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::kernels::RngStream;

use super::prior::{ErrorPrior, LocalPrior, PriorConfig};
use super::state::{initialize_state, ChainState};
use super::steps::{check_dimensions, sweep, FixedScales};

pub const DEFAULT_ITERATIONS: usize = 20_000;
pub const DEFAULT_BURN_IN: usize = 10_000;
pub const DEFAULT_THIN: usize = 2;
pub const DEFAULT_CHAINS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    #[serde(default)]
    pub fixed: FixedScales,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            n_iter: DEFAULT_ITERATIONS,
            burn_in: DEFAULT_BURN_IN,
            thin: DEFAULT_THIN,
            fixed: FixedScales::default(),
        }
    }
}

impl ChainSettings {
    pub fn new(n_iter: usize, burn_in: usize, thin: usize) -> Result<Self> {
        let s = Self {
            n_iter,
            burn_in,
            thin,
            fixed: FixedScales::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(Error::validation(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.n_iter, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::validation("thin must be >= 1"));
        }
        for v in [self.fixed.tau, self.fixed.phi].into_iter().flatten() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!(
                    "fixed scale must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `⌊(n_iter − burn_in) / thin⌋`.
    pub fn kept(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// One stored iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iter: usize,
    pub beta: Vec<f64>,
    pub u: Vec<f64>,
    pub phi: f64,
    pub tau: f64,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu: Vec<u32>,
}

impl Draw {
    fn from_state(iter: usize, s: &ChainState) -> Self {
        Draw {
            iter,
            beta: s.beta.clone(),
            u: s.u.clone(),
            phi: s.phi,
            tau: s.tau,
            omega: s.omega.clone(),
            lambda: s.lambda.clone(),
            nu: s.nu.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chain_id: u64,
    pub p: usize,
    pub unit_ids: Vec<String>,
    pub error_prior: ErrorPrior,
    pub reffect_prior: LocalPrior,
}

impl TraceMeta {
    pub fn m(&self) -> usize {
        self.unit_ids.len()
    }

    /// Name of the global error precision in trace files.
    pub fn tau_name(&self) -> &'static str {
        match self.error_prior {
            ErrorPrior::CommonGamma => "zeta_eps",
            ErrorPrior::HalfCauchyLocal => "tau",
        }
    }

    /// Name of the global random-effect precision in trace files.
    pub fn phi_name(&self) -> &'static str {
        match self.reffect_prior {
            LocalPrior::CommonGamma => "zeta_u",
            _ => "phi",
        }
    }

    /// Every scalar parameter stored for this configuration, as
    /// `(name, index)` in file order. Constant local scales are omitted.
    pub fn parameters(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        out.extend((0..self.p).map(|k| ("beta".to_string(), k)));
        out.extend((0..self.m()).map(|i| ("u".to_string(), i)));
        out.push((self.phi_name().to_string(), 0));
        out.push((self.tau_name().to_string(), 0));
        if self.reffect_prior != LocalPrior::CommonGamma {
            out.extend((0..self.m()).map(|i| ("omega".to_string(), i)));
        }
        if self.error_prior == ErrorPrior::HalfCauchyLocal {
            out.extend((0..self.m()).map(|i| ("lambda".to_string(), i)));
        }
        if self.reffect_prior == LocalPrior::StudentT {
            out.extend((0..self.m()).map(|i| ("nu".to_string(), i)));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub meta: TraceMeta,
    pub draws: Vec<Draw>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Draws of one scalar parameter, `None` for an unknown name.
    pub fn series(&self, name: &str, index: usize) -> Option<Vec<f64>> {
        let pick: Box<dyn Fn(&Draw) -> f64> = match name {
            "beta" if index < self.meta.p => Box::new(move |d| d.beta[index]),
            "u" if index < self.meta.m() => Box::new(move |d| d.u[index]),
            "phi" | "zeta_u" => Box::new(|d| d.phi),
            "tau" | "zeta_eps" => Box::new(|d| d.tau),
            "omega" if index < self.meta.m() => Box::new(move |d| d.omega[index]),
            "lambda" if index < self.meta.m() => Box::new(move |d| d.lambda[index]),
            "nu" if index < self.meta.m() => Box::new(move |d| d.nu[index] as f64),
            _ => return None,
        };
        Some(self.draws.iter().map(pick).collect())
    }

    /// Long-format CSV `iter,param,index,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "param", "index", "value"])?;
        let params = self.meta.parameters();
        for d in &self.draws {
            let iter = d.iter.to_string();
            for (name, idx) in &params {
                let v = match name.as_str() {
                    "beta" => d.beta[*idx].to_string(),
                    "u" => d.u[*idx].to_string(),
                    "omega" => d.omega[*idx].to_string(),
                    "lambda" => d.lambda[*idx].to_string(),
                    "nu" => d.nu[*idx].to_string(),
                    "phi" | "zeta_u" => d.phi.to_string(),
                    _ => d.tau.to_string(),
                };
                w.write_record([iter.as_str(), name.as_str(), &idx.to_string(), &v])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, meta: TraceMeta) -> Result<Trace> {
        let mut rdr = csv::Reader::from_reader(input);
        let m = meta.m();
        let p = meta.p;
        let mut draws: BTreeMap<usize, Draw> = BTreeMap::new();
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 2;
            let rec = rec?;
            let bad = |msg: &str| Error::Parse {
                row,
                msg: msg.to_string(),
            };
            let iter: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad iter"))?;
            let name = rec.get(1).ok_or_else(|| bad("missing param"))?;
            let idx: usize = rec
                .get(2)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad index"))?;
            let value: f64 = rec
                .get(3)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad value"))?;
            let d = draws.entry(iter).or_insert_with(|| Draw {
                iter,
                beta: vec![0.0; p],
                u: vec![0.0; m],
                phi: 1.0,
                tau: 1.0,
                omega: vec![1.0; m],
                lambda: vec![1.0; m],
                nu: vec![5; m],
            });
            let slot_ok = match name {
                "beta" => idx < p,
                "u" | "omega" | "lambda" | "nu" => idx < m,
                "phi" | "zeta_u" | "tau" | "zeta_eps" => idx == 0,
                _ => false,
            };
            if !slot_ok {
                return Err(bad(&format!("unexpected parameter {name}[{idx}]")));
            }
            match name {
                "beta" => d.beta[idx] = value,
                "u" => d.u[idx] = value,
                "omega" => d.omega[idx] = value,
                "lambda" => d.lambda[idx] = value,
                "nu" => d.nu[idx] = value as u32,
                "phi" | "zeta_u" => d.phi = value,
                _ => d.tau = value,
            }
        }
        Ok(Trace {
            meta,
            draws: draws.into_values().collect(),
        })
    }
}

/// Runs one chain from the deterministic initial state.
pub fn run_chain(
    design: &GroupedDesign,
    priors: &PriorConfig,
    settings: &ChainSettings,
    rng: &mut RngStream,
) -> Result<Trace> {
    let state = initialize_state(design, priors);
    run_chain_from(design, priors, settings, state, rng)
}

pub fn run_chain_from(
    design: &GroupedDesign,
    priors: &PriorConfig,
    settings: &ChainSettings,
    mut state: ChainState,
    rng: &mut RngStream,
) -> Result<Trace> {
    priors.validate()?;
    settings.validate()?;
    check_dimensions(&state, design)?;
    if let Some(t) = settings.fixed.tau {
        state.tau = t;
    }
    if let Some(f) = settings.fixed.phi {
        state.phi = f;
    }
    let meta = TraceMeta {
        n_iter: settings.n_iter,
        burn_in: settings.burn_in,
        thin: settings.thin,
        seed: rng.seed(),
        chain_id: rng.stream_id(),
        p: design.p(),
        unit_ids: design.unit_ids(),
        error_prior: priors.error_prior,
        reffect_prior: priors.reffect_prior,
    };
    let mut draws = Vec::with_capacity(settings.kept());
    let report_every = (settings.n_iter / 10).max(1);
    for iter in 1..=settings.n_iter {
        sweep(&mut state, design, priors, &settings.fixed, rng).map_err(|e| Error::Chain {
            iteration: iter,
            source: Box::new(e),
        })?;
        if iter > settings.burn_in && (iter - settings.burn_in).is_multiple_of(settings.thin) {
            draws.push(Draw::from_state(iter, &state));
        }
        if iter % report_every == 0 {
            debug!("chain {}: iteration {iter}/{}", meta.chain_id, settings.n_iter);
        }
    }
    Ok(Trace { meta, draws })
}

/// Runs `chains` chains on streams `0..chains` with at most `threads`
/// concurrent workers. Output order is chain order.
pub fn run_chains(
    design: &GroupedDesign,
    priors: &PriorConfig,
    settings: &ChainSettings,
    seed: u64,
    chains: usize,
    threads: usize,
) -> Result<Vec<Trace>> {
    if chains == 0 {
        return Err(Error::validation("at least one chain is required"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.clamp(1, chains))
        .build()
        .map_err(|e| Error::validation(format!("cannot start worker pool: {e}")))?;
    info!("running {chains} chain(s) of {} iterations", settings.n_iter);
    pool.install(|| {
        (0..chains as u64)
            .into_par_iter()
            .map(|k| {
                let mut rng = RngStream::new(seed, k);
                run_chain(design, priors, settings, &mut rng)
            })
            .collect()
    })
}
