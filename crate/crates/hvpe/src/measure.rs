//! Sampling of the Gaussian invariant measure `μ` and ensemble marginal
//! statistics.
//!
//! Under `μ` the coefficients `ω̂_k` are i.i.d. standard Gaussian. Sampling
//! is keyed per `(seed, mode)` through the counter-based generator, so a
//! coefficient's value does not depend on enumeration order and restriction
//! to a smaller disk has the same law as direct sampling at that cutoff.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{replica_seed, standard_normal, NoiseKey};
use crate::spectral::{disk_modes, FieldError, ModeIndex, SpectralField};
use crate::stats::{ks_test_standard_normal, KsResult};

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("ensemble must have at least 2 members, got {0}")]
    EnsembleTooSmall(usize),
    #[error("ensemble members must share a cutoff: found {0} and {1}")]
    MixedCutoffs(u32, u32),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Stream tag reserved for initial-condition sampling (time steps use
/// counters ≥ 1 in the dynamics module).
const SAMPLE_COUNTER: u64 = 0;

/// Draws one field from `μ` truncated at cutoff `m`: each coefficient with
/// `|k| ≤ m` i.i.d. N(0, 1), deterministic given the seed.
pub fn sample_mu(m: u32, seed: u64) -> Result<SpectralField, MeasureError> {
    sample_mu_replica(m, seed, 0)
}

/// As [`sample_mu`], with a replica stream identifier.
pub fn sample_mu_replica(
    m: u32,
    seed: u64,
    replica: u64,
) -> Result<SpectralField, MeasureError> {
    let mut field = SpectralField::zero(m)?;
    for k in disk_modes(m) {
        let value = standard_normal(NoiseKey {
            seed,
            stream: replica,
            counter: SAMPLE_COUNTER,
            mode: (k.k1(), k.k2()),
        });
        field.set(k, value)?;
    }
    Ok(field)
}

/// An ensemble of μ-samples with its per-replica seed manifest.
#[derive(Debug, Clone)]
pub struct EnsembleSample {
    fields: Vec<SpectralField>,
    seed_manifest: Vec<u64>,
}

/// JSON manifest written alongside ensemble outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub master_seed: u64,
    pub m: u32,
    pub size: usize,
    pub replica_seeds: Vec<u64>,
}

impl EnsembleSample {
    pub fn draw(m: u32, master_seed: u64, size: usize) -> Result<Self, MeasureError> {
        if size < 2 {
            return Err(MeasureError::EnsembleTooSmall(size));
        }
        let mut fields = Vec::with_capacity(size);
        let mut seed_manifest = Vec::with_capacity(size);
        for replica in 0..size as u64 {
            let seed = replica_seed(master_seed, replica);
            seed_manifest.push(seed);
            fields.push(sample_mu(m, seed)?);
        }
        Ok(Self {
            fields,
            seed_manifest,
        })
    }

    /// Wraps externally produced fields; they must share a cutoff.
    pub fn from_fields(
        fields: Vec<SpectralField>,
        seed_manifest: Vec<u64>,
    ) -> Result<Self, MeasureError> {
        if fields.len() < 2 {
            return Err(MeasureError::EnsembleTooSmall(fields.len()));
        }
        let m = fields[0].cutoff();
        for f in &fields {
            if f.cutoff() != m {
                return Err(MeasureError::MixedCutoffs(m, f.cutoff()));
            }
        }
        assert_eq!(fields.len(), seed_manifest.len());
        Ok(Self {
            fields,
            seed_manifest,
        })
    }

    pub fn fields(&self) -> &[SpectralField] {
        &self.fields
    }

    pub fn cutoff(&self) -> u32 {
        self.fields[0].cutoff()
    }

    pub fn size(&self) -> usize {
        self.fields.len()
    }

    pub fn manifest(&self, master_seed: u64) -> EnsembleManifest {
        EnsembleManifest {
            master_seed,
            m: self.cutoff(),
            size: self.size(),
            replica_seeds: self.seed_manifest.clone(),
        }
    }
}

/// Coupling `⟨f, χ⟩ = Σ_k f̂_k χ̂_k` over the common support.
pub fn coupling(field: &SpectralField, test: &SpectralField) -> f64 {
    field.coupling(test)
}

/// Per-mode marginal statistics of one ensemble.
#[derive(Debug, Clone)]
pub struct ModeMarginal {
    pub mode: ModeIndex,
    pub mean: f64,
    pub variance: f64,
    pub ks: KsResult,
}

#[derive(Debug, Clone)]
pub struct MarginalReport {
    pub per_mode: Vec<ModeMarginal>,
    pub ensemble_size: usize,
}

/// Per-mode sample mean, variance and two-sided KS test against N(0, 1).
pub fn marginal_stats(ensemble: &EnsembleSample) -> MarginalReport {
    let n = ensemble.size();
    let per_mode = disk_modes(ensemble.cutoff())
        .into_iter()
        .map(|k| {
            let xs: Vec<f64> = ensemble.fields().iter().map(|f| f.get(k)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let variance =
                xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            ModeMarginal {
                mode: k,
                mean,
                variance,
                ks: ks_test_standard_normal(&xs),
            }
        })
        .collect();
    MarginalReport {
        per_mode,
        ensemble_size: n,
    }
}
