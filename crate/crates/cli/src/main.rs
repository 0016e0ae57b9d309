use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use deep_ice::coreset::{self, FilterParams};
use deep_ice::driver::{self, FitParams, MemoryMode, Progress, SplitShape};
use deep_ice::model::Activation;
use deep_ice::oracle;
use deep_ice::synth;

use deep_ice_cli::cv::{self, CvOptions};
use deep_ice_cli::error::{CliError, Result};
use deep_ice_cli::ingest::{self, IngestOptions, IngestReport};
use deep_ice_cli::model_file::ModelFile;

#[derive(Parser)]
#[command(
    name = "deep-ice",
    version,
    about = "Exact 0-1 loss training of two-layer maxout and ReLU networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Label column, by header name or 0-based index.
    #[arg(long, default_value = "label")]
    label: String,
    /// Field delimiter.
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Standard deviation of the general-position jitter.
    #[arg(long, default_value_t = 1e-8)]
    sigma: f64,
    /// Seed for jitter and row shuffling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<IngestReport> {
        let mut buf = [0u8; 4];
        let delim = self.delimiter.encode_utf8(&mut buf).as_bytes();
        if delim.len() != 1 {
            return Err(CliError::Input(format!(
                "delimiter {:?} is not a single byte",
                self.delimiter
            )));
        }
        ingest::ingest(
            &self.data,
            &IngestOptions {
                label: self.label.clone(),
                delimiter: delim[0],
                sigma: self.sigma,
                seed: self.seed,
                shuffle: true,
            },
        )
    }
}

#[derive(Args, Clone)]
struct FitArgs {
    /// Number of hidden units (hyperplanes).
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value = "maxout")]
    activation: Activation,
    /// On-plane tolerance on unit normals.
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Byte budget for materialized prediction rows; larger runs fall back
    /// to recomputing rows from ranks on demand.
    #[arg(long, default_value_t = 4 << 30)]
    memory_cap: u64,
}

impl FitArgs {
    fn params(&self) -> FitParams {
        FitParams {
            k: self.k,
            activation: self.activation,
            epsilon: self.epsilon,
            threads: self.threads,
            memory_mode: MemoryMode::Auto,
            memory_cap: self.memory_cap,
            split: SplitShape::Balanced,
        }
    }
}

#[derive(Args, Clone)]
struct CoresetArgs {
    /// Block size M.
    #[arg(long, default_value_t = 50)]
    block_size: usize,
    /// Shuffle rounds R per filtering layer.
    #[arg(long, default_value_t = 2)]
    rounds: usize,
    /// Heap capacity L.
    #[arg(long, default_value_t = 16)]
    heap: usize,
    /// Largest survivor set handed to the exact solver.
    #[arg(long, default_value_t = 200)]
    bmax: usize,
    /// Heap shrink factor c in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    shrink: f64,
}

impl CoresetArgs {
    fn params(&self, seed: u64) -> FilterParams {
        FilterParams {
            block_size: self.block_size,
            rounds: self.rounds,
            heap_capacity: self.heap,
            bmax: self.bmax,
            shrink: self.shrink,
            seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact fit by full enumeration.
    FitExact {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Stream best-so-far JSON lines to stderr after every merge.
        #[arg(long)]
        progress: bool,
        /// Write the fitted model as JSON.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Coreset-filtered fit for datasets too large to solve exactly.
    FitCoreset {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        coreset: CoresetArgs,
        /// Stream per-round JSON lines to stderr as filtering progresses.
        #[arg(long)]
        progress: bool,
        /// Write one JSON line per filtering round.
        #[arg(long)]
        round_log: Option<PathBuf>,
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Predict labels with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV of points; include the label column to also report the loss.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Label column of --data, if present.
        #[arg(long)]
        label: Option<String>,
        #[arg(long, default_value = ",")]
        delimiter: char,
        /// Jitter to apply before predicting; pass the training sigma and
        /// seed to replay a training loss exactly.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit a D=2 decision-boundary grid instead:
        /// xmin,xmax,ymin,ymax,steps.
        #[arg(long, conflicts_with = "data", allow_hyphen_values = true)]
        grid: Option<String>,
        /// Output CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// K-fold cross-validation report.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Train each fold through the coreset filter.
        #[arg(long)]
        coreset: bool,
        #[command(flatten)]
        coreset_args: CoresetArgs,
        /// Write one JSON line per fold.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Enumerate every configuration with loss below a threshold.
    EnumSolutions {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value = "maxout")]
        activation: Activation,
        /// Keep configurations with loss strictly below this.
        #[arg(long)]
        threshold: u32,
        #[arg(long, default_value_t = oracle::DEFAULT_BUDGET)]
        budget: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-by-one exhaustive reference search (debugging aid).
    #[command(hide = true)]
    Oracle {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value = "maxout")]
        activation: Activation,
        #[arg(long, default_value_t = oracle::DEFAULT_BUDGET)]
        budget: u64,
    },
    /// Generate a synthetic general-position dataset as CSV.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Label by a hidden separator with a margin instead of randomly.
        #[arg(long)]
        separable: bool,
        #[arg(long, default_value_t = 0.2)]
        margin: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn out_writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn progress_printer(enabled: bool) -> Option<Box<dyn Fn(Progress) + Sync>> {
    if !enabled {
        return None;
    }
    Some(Box::new(|p: Progress| {
        eprintln!(
            "{{\"merges_done\":{},\"total_merges\":{},\"best_loss\":{}}}",
            p.merges_done,
            p.total_merges,
            p.best_loss.map_or("null".to_string(), |l| l.to_string())
        );
    }))
}

fn describe_ingest(rep: &IngestReport) {
    eprintln!(
        "loaded {} points in {} dimensions ({} rows read, {} duplicates removed, labels: {})",
        rep.dataset.len(),
        rep.dataset.dim(),
        rep.rows_read,
        rep.duplicates_removed,
        rep.label_mapping
    );
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::FitExact { data, fit, progress, model_out } => {
            let rep = data.load()?;
            describe_ingest(&rep);
            let params = fit.params();
            let cb = progress_printer(progress);
            let report =
                driver::fit_with_progress(&rep.dataset, &params, cb.as_deref())?;
            println!(
                "loss {} with k={} {} (ranks {:?}, signs {:?})",
                report.best.loss,
                params.k,
                params.activation,
                report.best.config.ranks,
                report.best.config.signs
            );
            println!(
                "hyperplanes {}  candidates {}  merges {}  wall {:?}  rows {}",
                report.hyperplanes_created,
                report.candidates_evaluated,
                report.merges,
                report.wall,
                if report.materialized { "materialized" } else { "recomputed on demand" }
            );
            if let Some(path) = model_out {
                let model = ModelFile::from_fit(&rep.dataset, &report.best, params.epsilon, data.seed)?;
                model.save(&path)?;
                println!("model written to {}", path.display());
            }
            Ok(())
        }
        Command::FitCoreset { data, fit, coreset: cargs, progress, round_log, model_out } => {
            let rep = data.load()?;
            describe_ingest(&rep);
            let params = fit.params();
            let stream = |log: &coreset::RoundLog| {
                if let Ok(line) = serde_json::to_string(log) {
                    eprintln!("{line}");
                }
            };
            let out = coreset::coreset_fit_with_progress(
                &rep.dataset,
                &params,
                &cargs.params(data.seed),
                progress.then_some(&stream as &(dyn Fn(&coreset::RoundLog) + Sync)),
            )?;
            if let Some(path) = round_log {
                let mut w = std::fs::File::create(path)?;
                for log in &out.rounds {
                    writeln!(w, "{}", serde_json::to_string(log)?)?;
                }
            }
            println!(
                "full-data loss {} (block loss {}) after {} filtering rounds; final subset {}",
                out.best.loss,
                out.rescored[0].block_loss,
                out.rounds.len(),
                out.final_subset_size
            );
            println!("surviving configurations: {}", out.rescored.len());
            if let Some(path) = model_out {
                let winner = &out.rescored[0];
                let model = ModelFile::from_neurons(
                    &rep.dataset,
                    &winner.neurons,
                    params.activation,
                    winner.scored.loss,
                    params.epsilon,
                    data.seed,
                );
                model.save(&path)?;
                println!("model written to {}", path.display());
            }
            Ok(())
        }
        Command::Predict { model, data, label, delimiter, sigma, seed, grid, out } => {
            let model = ModelFile::load(&model)?;
            let mut w = out_writer(&out)?;
            if let Some(spec) = grid {
                let (rows, preds) = predict_grid(&model, &spec)?;
                writeln!(w, "x,y,prediction")?;
                for (p, y) in rows.iter().zip(&preds) {
                    writeln!(w, "{},{},{y}", p[0], p[1])?;
                }
                return Ok(());
            }
            let path = data.ok_or_else(|| {
                CliError::Input("predict needs --data or --grid".into())
            })?;
            let (points, labels) =
                read_points(&path, delimiter, label.as_deref(), sigma, seed, model.dim)?;
            let preds = model.predict(&points)?;
            let header: Vec<String> =
                (0..model.dim).map(|i| format!("f{i}")).chain(["prediction".into()]).collect();
            writeln!(w, "{}", header.join(","))?;
            for (p, y) in points.iter().zip(&preds) {
                let coords: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{},{y}", coords.join(","))?;
            }
            if let Some(labels) = labels {
                let loss =
                    preds.iter().zip(&labels).filter(|(p, l)| *p != *l).count();
                eprintln!("0-1 loss on {} labelled points: {loss}", labels.len());
            }
            Ok(())
        }
        Command::Cv { data, fit, folds, coreset, coreset_args, log } => {
            let rep = data.load()?;
            describe_ingest(&rep);
            let params = fit.params();
            let opts = CvOptions {
                folds,
                seed: data.seed,
                coreset: coreset.then(|| coreset_args.params(data.seed)),
            };
            let report = cv::cv_run(&rep.dataset, &params, &opts)?;
            if let Some(path) = log {
                let mut w = std::fs::File::create(path)?;
                for rec in &report.folds {
                    writeln!(w, "{}", serde_json::to_string(rec)?)?;
                }
            }
            for rec in &report.folds {
                println!(
                    "fold {}: train {}/{} test {}/{}",
                    rec.fold, rec.train_loss, rec.train_size, rec.test_loss, rec.test_size
                );
            }
            println!(
                "k={} {} folds={}: {}",
                params.k,
                params.activation,
                folds,
                cv::format_summary(&report)
            );
            Ok(())
        }
        Command::EnumSolutions { data, k, activation, threshold, budget, out } => {
            let rep = data.load()?;
            describe_ingest(&rep);
            let set = oracle::enumerate_solutions(&rep.dataset, k, activation, threshold, budget)?;
            let mut w = out_writer(&out)?;
            for sol in &set.solutions {
                let line = serde_json::json!({
                    "loss": sol.scored.loss,
                    "ranks": sol.scored.config.ranks,
                    "signs": sol.scored.config.signs,
                    "normals": sol.normals,
                    "defining_points": sol.defining,
                });
                writeln!(w, "{line}")?;
            }
            eprintln!(
                "{} of {} candidates fall below loss {threshold}",
                set.solutions.len(),
                set.candidates
            );
            Ok(())
        }
        Command::Oracle { data, k, activation, budget } => {
            let rep = data.load()?;
            describe_ingest(&rep);
            let out = oracle::oracle_exact(&rep.dataset, k, activation, budget)?;
            println!(
                "loss {} (ranks {:?}, signs {:?}) over {} candidates",
                out.best.loss, out.best.config.ranks, out.best.config.signs, out.candidates
            );
            Ok(())
        }
        Command::GenData { n, d, seed, separable, margin, out } => {
            let ds = if separable {
                synth::separable_dataset(seed, n, d, margin)
            } else {
                synth::random_dataset(seed, n, d)
            };
            let w = out_writer(&out)?;
            ingest::write_csv(&ds, w)?;
            Ok(())
        }
    }
}

fn predict_grid(model: &ModelFile, spec: &str) -> Result<(Vec<Vec<f64>>, Vec<i8>)> {
    if model.dim != 2 {
        return Err(CliError::Input(format!(
            "--grid needs a 2-dimensional model, this one has dimension {}",
            model.dim
        )));
    }
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 5 {
        return Err(CliError::Input(
            "--grid expects xmin,xmax,ymin,ymax,steps".into(),
        ));
    }
    let nums: Vec<f64> = parts[..4]
        .iter()
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::Input(format!("bad grid bound {s:?}"))))
        .collect::<Result<_>>()?;
    let steps: usize = parts[4]
        .trim()
        .parse()
        .map_err(|_| CliError::Input(format!("bad grid steps {:?}", parts[4])))?;
    if steps < 2 {
        return Err(CliError::Input("grid needs at least 2 steps".into()));
    }
    let (x0, x1, y0, y1) = (nums[0], nums[1], nums[2], nums[3]);
    let mut rows = Vec::with_capacity(steps * steps);
    for yi in 0..steps {
        for xi in 0..steps {
            let x = x0 + (x1 - x0) * xi as f64 / (steps - 1) as f64;
            let y = y0 + (y1 - y0) * yi as f64 / (steps - 1) as f64;
            rows.push(vec![x, y]);
        }
    }
    let preds = model.predict(&rows)?;
    Ok((rows, preds))
}

/// Reads prediction input: all non-label columns are features, in file
/// order. Returns labels too when a label column was named.
fn read_points(
    path: &PathBuf,
    delimiter: char,
    label: Option<&str>,
    sigma: f64,
    seed: u64,
    dim: usize,
) -> Result<(Vec<Vec<f64>>, Option<Vec<i8>>)> {
    let mut buf = [0u8; 4];
    let delim = delimiter.encode_utf8(&mut buf).as_bytes();
    if delim.len() != 1 {
        return Err(CliError::Input(format!("delimiter {delimiter:?} is not a single byte")));
    }
    match label {
        Some(lab) => {
            let rep = ingest::ingest(
                path,
                &IngestOptions {
                    label: lab.to_string(),
                    delimiter: delim[0],
                    sigma,
                    seed,
                    shuffle: false,
                },
            )?;
            if rep.dataset.dim() != dim {
                return Err(CliError::Core(deep_ice::Error::DimensionMismatch {
                    expected: dim,
                    got: rep.dataset.dim(),
                }));
            }
            let points: Vec<Vec<f64>> =
                (0..rep.dataset.len()).map(|i| rep.dataset.point(i).to_vec()).collect();
            let labels: Vec<i8> = rep.dataset.labels().to_vec();
            Ok((points, Some(labels)))
        }
        None => {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
            let mut rdr =
                csv::ReaderBuilder::new().delimiter(delim[0]).has_headers(true).from_reader(file);
            let mut points = Vec::new();
            for (line, record) in rdr.records().enumerate() {
                let record = record?;
                let row: Vec<f64> = record
                    .iter()
                    .map(|f| {
                        f.trim().parse::<f64>().map_err(|_| {
                            CliError::Input(format!("row {}: {f:?} is not numeric", line + 2))
                        })
                    })
                    .collect::<Result<_>>()?;
                if row.len() != dim {
                    return Err(CliError::Core(deep_ice::Error::DimensionMismatch {
                        expected: dim,
                        got: row.len(),
                    }));
                }
                points.push(row);
            }
            Ok((points, None))
        }
    }
}
