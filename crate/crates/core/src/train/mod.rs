//! Per-keypoint training with early stopping and best-weights snapshots.

mod checkpoint;
mod schedule;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION,
};
pub use schedule::{run_schedule, EarlyStopping, EpochRunner, Schedule, Verdict};

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::preprocess::{
    batches, center, featurewise_mean, filter_nonmissing, make_batch, normalize, split_80_20, TARGET_SCALE,
};
use crate::data::{FkpDataset, KeypointSchema, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::eval::average_rmse;
use crate::nn::{Mode, Model, NetConfig};
use crate::optim::{mse_loss, Adam, AdamConfig};
use crate::tensor::{Rng, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::invalid(format!("unknown precision {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub keypoint_index: usize,
    pub precision: Precision,
    /// Where `train_all` and the CLI write checkpoints and histories.
    pub out_dir: Option<PathBuf>,
    pub net: NetConfig,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 300,
            patience: 30,
            seed: 42,
            keypoint_index: 0,
            precision: Precision::F32,
            out_dir: None,
            net: NetConfig::naimishnet(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max epochs must be at least 1"));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::invalid(format!(
                "patience {} must be below max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.net.input_size != IMAGE_SIDE {
            return Err(Error::invalid(format!(
                "network input {} does not match {IMAGE_SIDE}x{IMAGE_SIDE} images",
                self.net.input_size
            )));
        }
        Ok(())
    }

    /// Settings echoed into checkpoints, as `(key, value)` pairs.
    pub fn echo(&self) -> Vec<(String, String)> {
        [
            ("batch_size", self.batch_size.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("keypoint_index", self.keypoint_index.to_string()),
            ("precision", self.precision.to_string()),
            ("lr", self.adam.lr.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("epsilon", self.adam.epsilon.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_rmse_norm: f64,
    pub val_rmse_norm: f64,
    pub train_rmse_px: f64,
    pub val_rmse_px: f64,
}

/// Per-epoch RMSE in normalized and pixel space.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    records: Vec<EpochRecord>,
}

pub const HISTORY_HEADER: &str = "epoch,train_rmse_norm,val_rmse_norm,train_rmse_px,val_rmse_px";

impl LossHistory {
    /// Appends the next epoch; pixel values follow from the target scale.
    pub fn push(&mut self, train_rmse_norm: f64, val_rmse_norm: f64) {
        self.records.push(EpochRecord {
            epoch: self.records.len() + 1,
            train_rmse_norm,
            val_rmse_norm,
            train_rmse_px: TARGET_SCALE * train_rmse_norm,
            val_rmse_px: TARGET_SCALE * val_rmse_norm,
        });
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record for a 1-based epoch.
    pub fn epoch(&self, epoch: usize) -> Option<&EpochRecord> {
        epoch.checked_sub(1).and_then(|i| self.records.get(i))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_rmse_norm, r.val_rmse_norm, r.train_rmse_px, r.val_rmse_px
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Everything one `train_model` run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: LossHistory,
    pub schedule: Schedule,
    pub train_rows: usize,
    pub val_rows: usize,
}

impl TrainOutcome {
    /// History record of the epoch whose weights were kept.
    pub fn best_record(&self) -> &EpochRecord {
        self.history
            .epoch(self.schedule.best_epoch)
            .expect("best epoch lies within the history")
    }
}

/// Full-pass RMSE in normalized space, eval mode, in chunks of `batch_size`.
pub fn dataset_rmse<T: Scalar>(model: &mut Model<T>, ds: &FkpDataset, batch_size: usize) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::invalid("rmse over an empty dataset"));
    }
    let previous = model.mode();
    model.set_mode(Mode::Eval);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut start = 0;
    while start < ds.len() {
        let end = (start + batch_size).min(ds.len());
        let batch = make_batch::<T>(ds, (start..end).collect())?;
        let out = model.forward(&batch.input)?;
        for (p, t) in out.data().iter().zip(batch.target.data()) {
            let d = p.as_f64() - t.as_f64();
            sum += d * d;
        }
        count += out.len();
        start = end;
    }
    model.clear_cache();
    model.set_mode(previous);
    Ok((sum / count as f64).sqrt())
}

struct Trainer<'a, T: Scalar> {
    model: Model<T>,
    adam: Adam<T>,
    train: &'a FkpDataset,
    val: &'a FkpDataset,
    batch_size: usize,
    shuffle: Rng,
    history: LossHistory,
    best: Option<Vec<f64>>,
}

impl<T: Scalar> EpochRunner for Trainer<'_, T> {
    fn run_epoch(&mut self, _epoch: usize) -> Result<f64> {
        self.model.set_mode(Mode::Train);
        for batch in batches::<T>(self.train, self.batch_size, &mut self.shuffle)? {
            let out = self.model.forward(&batch.input)?;
            let (_, grad) = mse_loss(&out, &batch.target)?;
            self.model.backward(&grad)?;
            self.adam.step(self.model.params_and_grads())?;
        }
        let train = dataset_rmse(&mut self.model, self.train, self.batch_size)?;
        let val = dataset_rmse(&mut self.model, self.val, self.batch_size)?;
        self.history.push(train, val);
        Ok(val)
    }

    fn snapshot(&mut self, _epoch: usize) -> Result<()> {
        self.best = Some(self.model.export_params());
        Ok(())
    }
}

/// Trains the model for `config.keypoint_index` and returns the weights of the
/// epoch with the lowest validation RMSE.
pub fn train_model(ds: &FkpDataset, schema: &KeypointSchema, config: &TrainConfig) -> Result<TrainOutcome> {
    match config.precision {
        Precision::F32 => train_typed::<f32>(ds, schema, config),
        Precision::F64 => train_typed::<f64>(ds, schema, config),
    }
}

/// The centered training and validation splits for one keypoint.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub keypoint: String,
    pub train: FkpDataset,
    pub val: FkpDataset,
    pub mean: Vec<f32>,
}

/// Filters, normalizes, splits 80/20 with a fork of `rng` and centers both
/// splits on the training mean, exactly as `train_model` does.
pub fn prepare_keypoint(
    ds: &FkpDataset,
    schema: &KeypointSchema,
    keypoint: usize,
    rng: &mut Rng,
) -> Result<PreparedData> {
    let name = schema
        .names()
        .get(keypoint)
        .ok_or_else(|| Error::invalid(format!("keypoint index {keypoint} out of range")))?
        .clone();
    let filtered = filter_nonmissing(ds, schema, keypoint)?;
    if filtered.is_empty() {
        return Err(Error::invalid(format!("no rows label {name}")));
    }
    let normalized = normalize(&filtered)?;
    let (train, val) = split_80_20(&normalized, &mut rng.fork()).map_err(|e| Error::invalid(format!("{name}: {e}")))?;
    if val.is_empty() {
        return Err(Error::invalid(format!("validation split for {name} is empty")));
    }
    let mean = featurewise_mean(&train)?;
    Ok(PreparedData {
        train: center(&train, &mean)?,
        val: center(&val, &mean)?,
        mean,
        keypoint: name,
    })
}

fn train_typed<T: Scalar>(ds: &FkpDataset, schema: &KeypointSchema, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let PreparedData {
        keypoint: name,
        train,
        val,
        mean,
    } = prepare_keypoint(ds, schema, config.keypoint_index, &mut rng)?;

    let model = Model::<T>::build(config.net.clone(), &mut rng)?;
    let mut trainer = Trainer {
        model,
        adam: Adam::new(config.adam),
        train: &train,
        val: &val,
        batch_size: config.batch_size,
        shuffle: rng.fork(),
        history: LossHistory::default(),
        best: None,
    };
    let schedule = run_schedule(&mut trainer, config.max_epochs, config.patience)?;
    let best = trainer
        .best
        .take()
        .ok_or_else(|| Error::State(format!("{name}: validation loss never became finite")))?;
    let values = best.iter().map(|&v| v as f32).collect();
    let mut echo = config.echo();
    echo.push(("best_epoch".into(), schedule.best_epoch.to_string()));
    echo.push(("epochs_run".into(), schedule.epochs_run.to_string()));
    let checkpoint = Checkpoint::new(name, config.net.clone(), values, mean, config.seed, echo)?;
    Ok(TrainOutcome {
        checkpoint,
        history: trainer.history,
        schedule,
        train_rows: train.len(),
        val_rows: val.len(),
    })
}

/// Results of training every keypoint, in schema order.
#[derive(Debug)]
pub struct TrainAllReport {
    pub results: Vec<(String, Result<TrainOutcome>)>,
}

impl TrainAllReport {
    pub fn succeeded(&self) -> impl Iterator<Item = (&str, &TrainOutcome)> {
        self.results
            .iter()
            .filter_map(|(n, r)| r.as_ref().ok().map(|o| (n.as_str(), o)))
    }

    pub fn failed(&self) -> impl Iterator<Item = (&str, &Error)> {
        self.results
            .iter()
            .filter_map(|(n, r)| r.as_ref().err().map(|e| (n.as_str(), e)))
    }

    pub fn total_epochs(&self) -> usize {
        self.succeeded().map(|(_, o)| o.schedule.epochs_run).sum()
    }

    /// Epochs run and best epoch for each model, with the total.
    pub fn epochs_summary(&self) -> String {
        let mut out = String::from("keypoint,epochs_run,best_epoch\n");
        for (name, o) in self.succeeded() {
            let _ = writeln!(out, "{name},{},{}", o.schedule.epochs_run, o.schedule.best_epoch);
        }
        let _ = writeln!(out, "total,{},", self.total_epochs());
        out
    }

    /// Pixel-space RMSE of each kept checkpoint, then the averages and their ratio.
    pub fn rmse_summary(&self) -> Result<String> {
        let mut out = String::from("keypoint,train_rmse_px,val_rmse_px\n");
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for (name, o) in self.succeeded() {
            let r = o.best_record();
            let _ = writeln!(out, "{name},{:.6},{:.6}", r.train_rmse_px, r.val_rmse_px);
            train.push(r.train_rmse_px);
            val.push(r.val_rmse_px);
        }
        if !train.is_empty() {
            let (t, v) = (average_rmse(&train)?, average_rmse(&val)?);
            let _ = writeln!(out, "average,{t:.6},{v:.6}");
            let _ = writeln!(out, "train/val ratio,{:.6},", t / v);
        }
        Ok(out)
    }
}

/// Trains one model per schema keypoint with seed `base.seed + index`, using up
/// to `jobs` threads. A failing keypoint does not stop the others.
pub fn train_all(ds: &FkpDataset, schema: &KeypointSchema, base: &TrainConfig, jobs: usize) -> TrainAllReport {
    let n = schema.num_keypoints();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<TrainOutcome>>>> = Mutex::new((0..n).map(|_| None).collect());
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        if k >= n {
            break;
        }
        let config = TrainConfig {
            keypoint_index: k,
            seed: base.seed.wrapping_add(k as u64),
            ..base.clone()
        };
        let result = train_model(ds, schema, &config);
        slots.lock().expect("no worker panics while holding the lock")[k] = Some(result);
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.clamp(1, n) {
            s.spawn(worker);
        }
        worker();
    });
    let results = slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .zip(schema.names())
        .map(|(r, name)| (name.clone(), r.expect("every keypoint was claimed")))
        .collect();
    TrainAllReport { results }
}

/// Writes `<keypoint>.ckpt` and `<keypoint>_history.csv` into `dir`.
pub fn write_outcome(outcome: &TrainOutcome, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = &outcome.checkpoint.keypoint;
    let ckpt = dir.join(format!("{name}.ckpt"));
    let history = dir.join(format!("{name}_history.csv"));
    save_checkpoint(&outcome.checkpoint, &ckpt)?;
    outcome.history.write_csv(&history)?;
    Ok(vec![ckpt, history])
}
