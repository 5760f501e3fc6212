use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::config::{DatasetKind, ExperimentConfig, DERIVED_SEED_OFFSET};
use super::{adam_step, loss, reconstruction_error, AdamState};
use crate::data::{self, Dataset, Role};
use crate::error::{Error, Result};
use crate::models::AutoencoderModel;
use crate::rng;

/// Header of `metrics.csv`.
pub const METRICS_HEADER: &str = "epoch,train_loss,reconstruction,penalty,validation_error,skipped,clamped,rejected";

/// Consecutive non-finite batch losses tolerated before aborting.
const MAX_NONFINITE_STREAK: usize = 10;

/// Per-epoch averages over the training batches.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub reconstruction: f64,
    pub penalty: f64,
    /// Mean squared error on clean validation data.
    pub validation_error: f64,
    /// Regularizer points skipped for a singular metric.
    pub skipped: usize,
    /// Extrinsic samples clamped at zero.
    pub clamped: usize,
    /// Optimizer steps rejected for a non-finite loss or gradient.
    pub rejected: usize,
}

impl EpochMetrics {
    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.reconstruction,
            self.penalty,
            self.validation_error,
            self.skipped,
            self.clamped,
            self.rejected
        )
    }
}

/// Outcome of one training run. `model` holds the parameters of the epoch
/// with the lowest validation error.
#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub config: ExperimentConfig,
    pub model: AutoencoderModel,
    pub metrics: Vec<EpochMetrics>,
    /// Wall time per epoch, kept apart from the deterministic metrics.
    pub epoch_seconds: Vec<f64>,
    pub best_epoch: usize,
    pub best_validation: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    loss: &'a str,
    alpha: f64,
    epochs: usize,
    best_epoch: usize,
    best_validation_error: f64,
    final_train_loss: f64,
    skipped: usize,
    clamped: usize,
    rejected: usize,
    rng: &'a str,
}

impl TrainedRun {
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for m in &self.metrics {
            s.push_str(&m.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("epoch,seconds\n");
        for (i, t) in self.epoch_seconds.iter().enumerate() {
            let _ = writeln!(s, "{},{t:.6}", i + 1);
        }
        s
    }

    /// Deterministic run summary as TOML.
    pub fn summary_toml(&self) -> String {
        let sum = |f: fn(&EpochMetrics) -> usize| self.metrics.iter().map(f).sum();
        let summary = Summary {
            loss: self.config.training.loss.name(),
            alpha: self.config.training.alpha,
            epochs: self.metrics.len(),
            best_epoch: self.best_epoch,
            best_validation_error: self.best_validation,
            final_train_loss: self.metrics.last().map_or(f64::NAN, |m| m.train_loss),
            skipped: sum(|m| m.skipped),
            clamped: sum(|m| m.clamped),
            rejected: sum(|m| m.rejected),
            rng: rng::RNG_ALGORITHM,
        };
        toml::to_string(&summary).expect("summary serializes")
    }

    /// Write `config.toml`, `metrics.csv`, `timings.csv`, `summary.toml` and
    /// `model.bin` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("config.toml", self.config.to_toml_string())?;
        put("metrics.csv", self.metrics_csv())?;
        put("timings.csv", self.timings_csv())?;
        put("summary.toml", self.summary_toml())?;
        self.model.save(&dir.join("model.bin"))
    }
}

/// Training, clean validation and clean test sets for a config.
pub fn load_datasets(config: &ExperimentConfig) -> Result<(Dataset, Dataset, Dataset)> {
    let d = &config.dataset;
    let seed = config.seeds.data;
    let val_seed = seed.wrapping_add(DERIVED_SEED_OFFSET);
    match d.kind {
        DatasetKind::Paraboloid => Ok((
            data::gen_paraboloid(d.n, d.noise, seed)?,
            data::gen_paraboloid(d.validation, 0.0, val_seed)?.with_role(Role::Validation),
            data::paraboloid_testgrid(d.test_grid)?,
        )),
        DatasetKind::Sincurve => Ok((
            data::gen_sincurve(d.n, d.noise, seed)?,
            data::gen_sincurve(d.validation, 0.0, val_seed)?.with_role(Role::Validation),
            data::sincurve_testgrid(d.test_grid)?,
        )),
        DatasetKind::Csv => {
            let path = d.path.as_deref().ok_or_else(|| Error::Config {
                path: "dataset.path".into(),
                msg: "required for csv datasets".into(),
            })?;
            let dims = config.ambient_dim()?;
            let [a, b, c] = d.split.ok_or_else(|| Error::Config {
                path: "dataset.split".into(),
                msg: "required for csv datasets".into(),
            })?;
            let (train, val, test) = data::ingest_csv(path, dims, (a, b, c), seed)?;
            let train = if d.noise > 0.0 { data::corrupt(&train, d.noise, seed)? } else { train };
            Ok((train, val, test))
        }
    }
}

/// Generate or read the data and train one model.
pub fn train(config: &ExperimentConfig) -> Result<TrainedRun> {
    let (train, val, _) = load_datasets(config)?;
    train_on(config, &train, &val)
}

/// Train on the given sets. Batches are reshuffled every epoch from the
/// estimator seed's stream 1; probes and mix-up draws use its stream 0.
pub fn train_on(config: &ExperimentConfig, train: &Dataset, val: &Dataset) -> Result<TrainedRun> {
    config.validate("config")?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidSpec("training and validation sets must be nonempty".into()));
    }
    let mut model = AutoencoderModel::new(config.encoder_spec()?, config.decoder_spec()?)?;
    crate::error::check_dim("training data", model.ambient_dim(), train.dim())?;
    crate::error::check_dim("validation data", model.ambient_dim(), val.dim())?;
    let t = &config.training;
    let mixup = config.mixup();
    let mut params = model.params();
    let mut adam = AdamState::new(params.len());
    let mut probe_rng = rng::stream(config.seeds.estimator, 0);
    let mut shuffle_rng = rng::stream(config.seeds.estimator, 1);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut metrics = Vec::with_capacity(t.epochs);
    let mut epoch_seconds = Vec::with_capacity(t.epochs);
    let mut best = (0, f64::INFINITY, params.clone());
    let mut streak = 0;
    for epoch in 1..=t.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let (mut tl, mut rec, mut pen, mut batches) = (0.0, 0.0, 0.0, 0usize);
        let (mut skipped, mut clamped, mut rejected) = (0, 0, 0);
        for chunk in order.chunks(t.batch_size) {
            let batch: Vec<Vec<f64>> = chunk.iter().map(|&i| train.points[i].clone()).collect();
            let out = loss(&model, &batch, t.loss, t.alpha, mixup, &mut probe_rng)?;
            skipped += out.skipped;
            clamped += out.clamped;
            if !out.loss.is_finite() {
                streak += 1;
                rejected += 1;
                if streak >= MAX_NONFINITE_STREAK {
                    return Err(Error::Divergence(format!(
                        "{streak} consecutive non-finite losses at epoch {epoch} (reconstruction {}, penalty {})",
                        out.reconstruction, out.penalty
                    )));
                }
                continue;
            }
            streak = 0;
            let mut grad = out.grad;
            if let Some(max) = t.grad_clip {
                clip_norm(&mut grad, max);
            }
            if !adam_step(&mut params, &grad, &mut adam, t.learning_rate)? {
                rejected += 1;
            }
            model.set_params(&params)?;
            tl += out.loss;
            rec += out.reconstruction;
            pen += out.penalty;
            batches += 1;
        }
        let validation_error = reconstruction_error(&model, &val.points, val.clean_points())?;
        if validation_error < best.1 {
            best = (epoch, validation_error, params.clone());
        }
        let nb = batches.max(1) as f64;
        metrics.push(EpochMetrics {
            epoch,
            train_loss: if batches > 0 { tl / nb } else { f64::NAN },
            reconstruction: if batches > 0 { rec / nb } else { f64::NAN },
            penalty: if batches > 0 { pen / nb } else { f64::NAN },
            validation_error,
            skipped,
            clamped,
            rejected,
        });
        epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    if best.0 == 0 {
        return Err(Error::Divergence("validation error was never finite".into()));
    }
    model.set_params(&best.2)?;
    Ok(TrainedRun {
        config: config.clone(),
        model,
        metrics,
        epoch_seconds,
        best_epoch: best.0,
        best_validation: best.1,
    })
}

/// Rescale `g` to Euclidean norm `max` if it is longer.
fn clip_norm(g: &mut [f64], max: f64) {
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > max && n.is_finite() {
        g.iter_mut().for_each(|x| *x *= max / n);
    }
}

/// One run per alpha, with the run of lowest validation error marked.
#[derive(Clone, Debug)]
pub struct GridResult {
    pub runs: Vec<TrainedRun>,
    pub best: usize,
}

impl GridResult {
    pub fn best_run(&self) -> &TrainedRun {
        &self.runs[self.best]
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("alpha,best_epoch,best_validation_error,selected\n");
        for (i, r) in self.runs.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.config.training.alpha,
                r.best_epoch,
                r.best_validation,
                u8::from(i == self.best)
            );
        }
        s
    }

    /// Write each run under `alpha_<value>/`, the selected run at the top
    /// level, and `grid.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for r in &self.runs {
            r.write(&dir.join(format!("alpha_{}", r.config.training.alpha)))?;
        }
        self.best_run().write(dir)?;
        let p = dir.join("grid.csv");
        std::fs::write(&p, self.csv()).map_err(|e| Error::io(&p, e))
    }
}

/// Train one model per alpha on the same data and select the lowest
/// validation error (the first on ties).
pub fn grid_search(config: &ExperimentConfig, alphas: &[f64], train: &Dataset, val: &Dataset) -> Result<GridResult> {
    if alphas.is_empty() {
        return Err(Error::InvalidSpec("alpha grid must be nonempty".into()));
    }
    let mut runs = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut c = config.clone();
        c.training.alpha = alpha;
        c.training.alpha_grid = None;
        runs.push(train_on(&c, train, val)?);
    }
    let best = runs
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.best_validation < runs[b].best_validation { i } else { b });
    Ok(GridResult { runs, best })
}
