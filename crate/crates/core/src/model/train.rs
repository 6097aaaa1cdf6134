use serde::{Deserialize, Serialize};

use crate::data::{batch_plan, Loader, Split};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::loss::{bce, bce_with_logits};
use crate::optim::{Optimizer, OptimizerKind};
use crate::real::Real;
use crate::rng::{derive_seed, Rng};

use super::metrics::{ConfusionMatrix, Metrics};
use super::network::{Model, Snapshot};
use super::spec::ModelSpec;

/// Learning rates tried by the default sweep.
pub const DEFAULT_ETA_SWEEP: [f64; 7] = [0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05, 0.1];

pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "32" | "f32" => Ok(Self::F32),
            "64" | "f64" => Ok(Self::F64),
            other => Err(Error::invalid(format!("precision must be 32 or 64, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::F32 => "32",
            Self::F64 => "64",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub eta: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub seed: u64,
    /// Evaluation worker threads; 1 keeps everything on the calling thread.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            eta: 0.005,
            optimizer: OptimizerKind::Adam,
            batch_size: 32,
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be > 0", self.eta)));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch norm needs a batch size of at least 2"));
        }
        if self.threads == 0 {
            return Err(Error::invalid("threads must be at least 1"));
        }
        Ok(())
    }
}

/// Build a model whose initial weights depend only on `seed`.
pub fn fresh_model<T: Real>(spec: &ModelSpec, seed: u64) -> Result<Model<T>> {
    Model::new(spec.clone(), &mut Rng::new(derive_seed(seed, "init")))
}

/// One row of the training curves. Train columns are running averages over
/// the epoch's mini-batches (train mode); test columns are a full eval pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    /// Mean BCE over the split.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<EpochRow>,
    /// Test evaluation of the final-epoch weights.
    pub final_eval: Evaluation,
    /// Test evaluation of the weights with the highest test accuracy.
    pub best_eval: Evaluation,
    /// 1-based; ties go to the earliest epoch.
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub log: TrainLog,
    /// Weights from `log.best_epoch`. The final weights stay in the model.
    pub best: Snapshot<T>,
}

/// Train with shuffled mini-batches and evaluate on the test split after
/// every epoch.
pub fn train<T: Real>(model: &mut Model<T>, loader: &mut Loader, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if loader.manifest().indices(Split::Test).is_empty() {
        return Err(Error::Dataset("the test split is empty".into()));
    }
    let mut opt = Optimizer::<T>::new(cfg.optimizer, cfg.eta)?;
    let mut rows = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, Evaluation, Snapshot<T>)> = None;
    let mut last_eval = None;

    for epoch in 1..=cfg.epochs {
        let mut plan = batch_plan(loader.manifest(), Split::Train, cfg.batch_size, cfg.seed, epoch)?;
        // Batch norm cannot standardize a single sample.
        if plan.len() > 1 && plan.last().map(Vec::len) == Some(1) {
            let tail = plan.pop().unwrap();
            plan.last_mut().unwrap().extend(tail);
        }
        if plan.len() == 1 && plan[0].len() < 2 {
            return Err(Error::Dataset("training needs at least 2 samples".into()));
        }

        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (b, indices) in plan.iter().enumerate() {
            let batch = loader.batch::<T>(indices)?;
            model.zero_grad();
            let logits = model.forward(&batch.inputs, Mode::Train)?;
            let loss = bce_with_logits(&batch.labels, &logits)?;
            if !loss.value.is_finite() || !logits.all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    norms: format_norms(model),
                });
            }
            model.backward_params(&loss.grad_wrt_logit)?;
            opt.step(model.params())?;

            let n = batch.labels.len();
            loss_sum += loss.value * n as f64;
            seen += n;
            correct += loss
                .probabilities
                .iter()
                .zip(&batch.labels)
                .filter(|(&p, &y)| (p >= THRESHOLD) == (y >= 0.5))
                .count();
        }
        model.clear_caches();

        let eval = evaluate(model, loader, Split::Test, cfg.batch_size, cfg.threads)?;
        let test_acc = eval.metrics.accuracy.unwrap_or(0.0);
        let row = EpochRow {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            test_loss: eval.loss,
            test_acc,
        };
        log::info!(
            "epoch {epoch}/{}: train loss {:.5} acc {:.4} | test loss {:.5} acc {:.4}",
            cfg.epochs,
            row.train_loss,
            row.train_acc,
            row.test_loss,
            row.test_acc
        );
        rows.push(row);
        if best.as_ref().is_none_or(|(_, e, _)| test_acc > e.metrics.accuracy.unwrap_or(0.0)) {
            best = Some((epoch, eval, model.snapshot()));
        }
        last_eval = Some(eval);
    }

    let (best_epoch, best_eval, snap) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        log: TrainLog {
            rows,
            final_eval: last_eval.expect("at least one epoch"),
            best_eval,
            best_epoch,
        },
        best: snap,
    })
}

fn format_norms<T: Real>(model: &Model<T>) -> String {
    model
        .param_norms()
        .iter()
        .map(|(n, v)| format!("{n}={v:.4e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Eval-mode confusion counts and mean loss over a split, in manifest order.
/// With `threads > 1` batches are scored on worker threads; counts merge by
/// addition and losses are summed in batch order, so results do not depend on
/// the thread count.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    loader: &mut Loader,
    split: Split,
    batch_size: usize,
    threads: usize,
) -> Result<Evaluation> {
    if batch_size == 0 || threads == 0 {
        return Err(Error::invalid("batch size and threads must be at least 1"));
    }
    let indices = loader.manifest().indices(split);
    if indices.is_empty() {
        return Err(Error::Dataset(format!("the {split} split is empty")));
    }
    let batches = indices
        .chunks(batch_size)
        .map(|c| loader.batch::<T>(c))
        .collect::<Result<Vec<_>>>()?;

    let score = |batch: &crate::data::Batch<T>| -> Result<(ConfusionMatrix, Vec<f64>)> {
        let probs = model.predict(&batch.inputs)?;
        let cm = ConfusionMatrix::from_predictions(&probs, &batch.labels, THRESHOLD);
        let losses = probs
            .iter()
            .zip(&batch.labels)
            .map(|(&p, &y)| bce(y, p))
            .collect::<Result<Vec<_>>>()?;
        Ok((cm, losses))
    };

    let scored: Vec<(ConfusionMatrix, Vec<f64>)> = if threads == 1 || batches.len() == 1 {
        batches.iter().map(score).collect::<Result<_>>()?
    } else {
        let per = batches.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = batches
                .chunks(per)
                .map(|chunk| s.spawn(move || chunk.iter().map(score).collect::<Result<Vec<_>>>()))
                .collect();
            let mut out = Vec::with_capacity(batches.len());
            for h in handles {
                out.extend(h.join().expect("evaluation worker panicked")?);
            }
            Ok::<_, Error>(out)
        })?
    };

    let mut confusion = ConfusionMatrix::default();
    let mut total = 0.0;
    for (cm, losses) in &scored {
        confusion.merge(cm);
        total += losses.iter().sum::<f64>();
    }
    Ok(Evaluation {
        confusion,
        metrics: confusion.metrics(),
        loss: total / indices.len() as f64,
    })
}

/// Final test accuracy of one independent run in a sweep. `None` marks a run
/// that diverged (non-finite loss).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta: f64,
    pub test_acc: Option<f64>,
    pub best: bool,
}

/// Train a freshly initialized model (same seed) for every learning rate.
/// Rows come back sorted by rate with the highest accuracy marked.
pub fn lr_sweep<T: Real>(spec: &ModelSpec, loader: &mut Loader, cfg: &TrainConfig, etas: &[f64]) -> Result<Vec<SweepRow>> {
    if etas.is_empty() {
        return Err(Error::invalid("learning-rate sweep needs at least one value"));
    }
    let mut etas = etas.to_vec();
    etas.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(etas.len());
    for eta in etas {
        let mut model = fresh_model::<T>(spec, cfg.seed)?;
        let run = TrainConfig { eta, ..cfg.clone() };
        let test_acc = match train(&mut model, loader, &run) {
            Ok(out) => Some(out.log.final_eval.metrics.accuracy.unwrap_or(0.0)),
            Err(e @ Error::NonFiniteLoss { .. }) => {
                log::warn!("eta {eta} diverged: {e}");
                None
            }
            Err(e) => return Err(e),
        };
        log::info!("sweep eta {eta}: test accuracy {test_acc:?}");
        rows.push(SweepRow {
            eta,
            test_acc,
            best: false,
        });
    }
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if let Some(a) = r.test_acc {
            if best.is_none_or(|b| a > rows[b].test_acc.unwrap()) {
                best = Some(i);
            }
        }
    }
    if let Some(b) = best {
        rows[b].best = true;
    }
    Ok(rows)
}
