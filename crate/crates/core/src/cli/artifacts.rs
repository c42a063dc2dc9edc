use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::ClampPolicy;
use crate::design::ModelSpec;
use crate::error::{Error, Result};
use crate::gibbs::{ChainSettings, PriorConfig, Trace, TraceMeta};

pub const MANIFEST: &str = "manifest.json";
pub const SOFTWARE: &str = concat!("glmixer ", env!("CARGO_PKG_VERSION"));

pub fn chain_file(k: usize) -> String {
    format!("chain_{k}.csv")
}

/// Everything needed to reload a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub input: String,
    pub spec: ModelSpec,
    pub priors: PriorConfig,
    pub settings: ChainSettings,
    pub clamp: ClampPolicy,
    pub seed: u64,
    pub chains: usize,
    pub unit_ids: Vec<String>,
    pub n_obs: usize,
}

impl Manifest {
    pub fn trace_meta(&self, chain_id: u64) -> TraceMeta {
        TraceMeta {
            n_iter: self.settings.n_iter,
            burn_in: self.settings.burn_in,
            thin: self.settings.thin,
            seed: self.seed,
            chain_id,
            p: self.spec.dim(),
            unit_ids: self.unit_ids.clone(),
            error_prior: self.priors.error_prior,
            reffect_prior: self.priors.reffect_prior,
        }
    }
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_reader(open(&dir.join(MANIFEST))?)?)
}

/// Manifest and every chain trace of a fit directory.
pub fn load_fit(dir: &Path) -> Result<(Manifest, Vec<Trace>)> {
    let manifest = read_manifest(dir)?;
    let traces = (0..manifest.chains)
        .map(|k| Trace::read_csv(open(&dir.join(chain_file(k)))?, manifest.trace_meta(k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, traces))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Outputs staged in memory and written together once a command has
/// finished computing. A failed write removes whatever was written, and the
/// directory itself if this call created it.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        let created = !dir.exists();
        let mut written = Vec::new();
        let result = (|| -> Result<()> {
            fs::create_dir_all(dir)?;
            for (name, bytes) in &self.files {
                let path = dir.join(name);
                written.push(path.clone());
                fs::write(&path, bytes)?;
            }
            Ok(())
        })();
        match result {
            Ok(()) => Ok(written),
            Err(e) => {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                if created {
                    let _ = fs::remove_dir_all(dir);
                }
                Err(e)
            }
        }
    }
}
