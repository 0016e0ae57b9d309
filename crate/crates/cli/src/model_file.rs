//! Versioned JSON model persistence and prediction.
//!
//! Models store the defining point coordinates of every hyperplane, so they
//! are dataset-independent: refitting the stored points reproduces the
//! normals, and predictions need only the model file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use deep_ice::combinatorics::unrank_combination;
use deep_ice::coreset::NeuronGeom;
use deep_ice::error::Error;
use deep_ice::geometry;
use deep_ice::model::{Activation, Dataset, ScoredConfig};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelNeuron {
    pub normal: Vec<f64>,
    pub defining_points: Vec<Vec<f64>>,
    pub sign: i8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub tool_version: String,
    pub activation: Activation,
    pub k: usize,
    pub dim: usize,
    pub epsilon: f64,
    pub training_loss: u32,
    /// SHA-256 over the training data (sizes, coordinate bits, labels).
    pub dataset_fingerprint: String,
    pub seed: u64,
    pub neurons: Vec<ModelNeuron>,
}

pub fn fingerprint(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update((ds.len() as u64).to_le_bytes());
    h.update((ds.dim() as u64).to_le_bytes());
    for i in 0..ds.len() {
        for v in ds.point(i) {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update((ds.label(i) as i16).to_le_bytes());
    }
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ModelFile {
    /// Packages an exact-fit result, refitting each hyperplane from its
    /// rank to recover the normal and defining coordinates.
    pub fn from_fit(
        ds: &Dataset,
        scored: &ScoredConfig,
        epsilon: f64,
        seed: u64,
    ) -> Result<Self> {
        let neurons = scored
            .config
            .ranks
            .iter()
            .zip(&scored.config.signs)
            .map(|(&rank, &sign)| {
                let combo: Vec<usize> =
                    unrank_combination(rank, ds.dim()).iter().map(|&v| v as usize).collect();
                let normal = geometry::fit_hyperplane(ds, &combo, epsilon)?;
                Ok(ModelNeuron {
                    normal,
                    defining_points: combo.iter().map(|&i| ds.point(i).to_vec()).collect(),
                    sign,
                })
            })
            .collect::<std::result::Result<Vec<_>, Error>>()?;
        Ok(ModelFile {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            activation: scored.config.activation,
            k: scored.config.k(),
            dim: ds.dim(),
            epsilon,
            training_loss: scored.loss,
            dataset_fingerprint: fingerprint(ds),
            seed,
            neurons,
        })
    }

    /// Packages a coreset result, whose neurons already carry geometry.
    pub fn from_neurons(
        ds: &Dataset,
        neurons: &[NeuronGeom],
        activation: Activation,
        training_loss: u32,
        epsilon: f64,
        seed: u64,
    ) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            activation,
            k: neurons.len(),
            dim: neurons.first().map_or(0, |n| n.normal.len() - 1),
            epsilon,
            training_loss,
            dataset_fingerprint: fingerprint(ds),
            seed,
            neurons: neurons
                .iter()
                .map(|n| ModelNeuron {
                    normal: n.normal.clone(),
                    defining_points: n.defining_points.clone(),
                    sign: n.sign,
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read model {}: {e}", path.display())))?;
        let model: ModelFile = serde_json::from_str(&text)?;
        if model.format_version != FORMAT_VERSION {
            return Err(CliError::Input(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        model.verify_refit()?;
        Ok(model)
    }

    /// Refits every neuron from its stored defining points; the stored
    /// normal must be reproduced within 1e-9 per coordinate.
    pub fn verify_refit(&self) -> Result<()> {
        for (i, neuron) in self.neurons.iter().enumerate() {
            let rows: Vec<&[f64]> =
                neuron.defining_points.iter().map(|p| p.as_slice()).collect();
            let refit = geometry::fit_from_points(&rows).map_err(CliError::Core)?;
            let ok = refit.len() == neuron.normal.len()
                && refit.iter().zip(&neuron.normal).all(|(a, b)| (a - b).abs() <= 1e-9);
            if !ok {
                return Err(CliError::Input(format!(
                    "neuron {i}: stored normal is not reproduced by its defining points"
                )));
            }
        }
        Ok(())
    }

    /// Predicts one point: maxout is positive when any oriented dot clears
    /// the on-plane band, relu takes the sign of the gated sum (zero reads
    /// as +1).
    pub fn predict_point(&self, point: &[f64]) -> Result<i8> {
        if point.len() != self.dim {
            return Err(CliError::Core(Error::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            }));
        }
        let dot = |neuron: &ModelNeuron| -> f64 {
            let mut acc = neuron.normal[self.dim];
            for (w, x) in neuron.normal[..self.dim].iter().zip(point) {
                acc += w * x;
            }
            acc
        };
        let positive = match self.activation {
            Activation::Maxout => self
                .neurons
                .iter()
                .any(|nr| nr.sign as f64 * dot(nr) >= -self.epsilon),
            Activation::Relu => {
                let sum: f64 =
                    self.neurons.iter().map(|nr| nr.sign as f64 * dot(nr).max(0.0)).sum();
                sum >= 0.0
            }
        };
        Ok(if positive { 1 } else { -1 })
    }

    pub fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<i8>> {
        points.iter().map(|p| self.predict_point(p)).collect()
    }

    /// 0-1 loss of the model on a labelled dataset.
    pub fn score(&self, ds: &Dataset) -> Result<u32> {
        let mut loss = 0u32;
        for i in 0..ds.len() {
            if self.predict_point(ds.point(i))? != ds.label(i) {
                loss += 1;
            }
        }
        Ok(loss)
    }
}
