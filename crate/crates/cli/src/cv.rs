//! Seeded k-fold cross-validation with per-fold logs and a Table-style
//! summary line.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use deep_ice::coreset::{self, FilterParams};
use deep_ice::driver::{self, FitParams};
use deep_ice::model::Dataset;

use crate::error::{CliError, Result};
use crate::model_file::ModelFile;

#[derive(Debug, Clone)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    /// Fit blocks through the coreset filter instead of solving each
    /// training split exactly.
    pub coreset: Option<FilterParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub train_loss: u32,
    pub test_loss: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub folds: Vec<FoldRecord>,
    pub mean_train: f64,
    pub mean_test: f64,
    pub std_train: f64,
    pub std_test: f64,
}

/// Mean and population standard deviation over fold losses.
pub fn stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn cv_run(ds: &Dataset, fit: &FitParams, opts: &CvOptions) -> Result<CvReport> {
    let n = ds.len();
    if opts.folds < 2 || opts.folds > n {
        return Err(CliError::Input(format!(
            "folds must lie in 2..={n}, got {}",
            opts.folds
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));

    let base = n / opts.folds;
    let extra = n % opts.folds;
    let min_train = n - (base + usize::from(extra > 0));
    if min_train < ds.dim() + fit.k {
        return Err(CliError::Input(format!(
            "folds are too large: a training split of {min_train} points cannot host \
             {} hyperplanes in dimension {}",
            fit.k,
            ds.dim()
        )));
    }

    let mut records = Vec::with_capacity(opts.folds);
    let mut start = 0usize;
    for fold in 0..opts.folds {
        let size = base + usize::from(fold < extra);
        let test_idx = &order[start..start + size];
        let train_idx: Vec<usize> =
            order[..start].iter().chain(&order[start + size..]).copied().collect();
        start += size;

        let train = ds.subset(&train_idx)?;
        let (train_loss, model) = match &opts.coreset {
            None => {
                let best = driver::fit(&train, fit)?.best;
                let model = ModelFile::from_fit(&train, &best, fit.epsilon, opts.seed)?;
                (best.loss, model)
            }
            Some(filter) => {
                let out = coreset::coreset_fit(&train, fit, filter)?;
                let winner = &out.rescored[0];
                let model = ModelFile::from_neurons(
                    &train,
                    &winner.neurons,
                    fit.activation,
                    winner.scored.loss,
                    fit.epsilon,
                    opts.seed,
                );
                (winner.scored.loss, model)
            }
        };

        let mut test_loss = 0u32;
        for &i in test_idx {
            if model.predict_point(ds.point(i))? != ds.label(i) {
                test_loss += 1;
            }
        }
        records.push(FoldRecord {
            fold,
            train_size: train_idx.len(),
            test_size: size,
            train_loss,
            test_loss,
        });
    }

    let (mean_train, std_train) = stats(records.iter().map(|r| r.train_loss as f64));
    let (mean_test, std_test) = stats(records.iter().map(|r| r.test_loss as f64));
    Ok(CvReport { folds: records, mean_train, mean_test, std_train, std_test })
}

fn trim(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() { "0".to_string() } else { s.to_string() }
}

/// Summary in the usual report shape:
/// `Train/Test (std_train/std_test)`.
pub fn format_summary(report: &CvReport) -> String {
    format!(
        "{}/{} ({}/{})",
        trim(report.mean_train),
        trim(report.mean_test),
        trim(report.std_train),
        trim(report.std_test)
    )
}
