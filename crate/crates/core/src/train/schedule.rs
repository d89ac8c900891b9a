use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Stale,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly lower loss.
/// Ties and non-finite losses count as no improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: 0,
            stale: 0,
            epoch: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> Verdict {
        self.epoch += 1;
        let improved = loss.is_finite() && self.best.is_none_or(|b| loss < b);
        if improved {
            self.best = Some(loss);
            self.best_epoch = self.epoch;
            self.stale = 0;
            return Verdict::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Stale
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// 1-based epoch of the best loss, 0 before any finite loss.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// How an epoch loop ended.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
}

/// One epoch of work and a way to keep the current weights.
pub trait EpochRunner {
    /// Runs 1-based `epoch` and returns its validation loss.
    fn run_epoch(&mut self, epoch: usize) -> Result<f64>;

    /// Called right after an epoch that improved on the best loss.
    fn snapshot(&mut self, epoch: usize) -> Result<()>;
}

pub fn run_schedule(runner: &mut impl EpochRunner, max_epochs: usize, patience: usize) -> Result<Schedule> {
    let mut stopper = EarlyStopping::new(patience);
    let mut epochs_run = 0;
    let mut stopped_early = false;
    for epoch in 1..=max_epochs {
        let loss = runner.run_epoch(epoch)?;
        epochs_run = epoch;
        match stopper.observe(loss) {
            Verdict::Improved => runner.snapshot(epoch)?,
            Verdict::Stale => {}
            Verdict::Stop => {
                stopped_early = epoch < max_epochs;
                break;
            }
        }
    }
    Ok(Schedule {
        epochs_run,
        best_epoch: stopper.best_epoch(),
        best_loss: stopper.best().unwrap_or(f64::NAN),
        stopped_early,
    })
}
