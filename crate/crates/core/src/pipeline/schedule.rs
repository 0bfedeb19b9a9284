//! Two-stage constant-then-linear-decay learning-rate schedule of the
//! image-translation network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub base_lr: f64,
    pub epochs_const: usize,
    pub epochs_decay: usize,
    pub stage: u8,
}

impl ScheduleSpec {
    /// Stage 1: lr 0.001, 50 constant epochs, 50 decaying epochs.
    pub fn stage1() -> Self {
        Self {
            base_lr: 0.001,
            epochs_const: 50,
            epochs_decay: 50,
            stage: 1,
        }
    }

    /// Stage 2: lr 0.0002, 5 constant epochs, 5 decaying epochs.
    pub fn stage2() -> Self {
        Self {
            base_lr: 0.0002,
            epochs_const: 5,
            epochs_decay: 5,
            stage: 2,
        }
    }

    pub fn for_stage(stage: u8) -> Result<Self> {
        match stage {
            1 => Ok(Self::stage1()),
            2 => Ok(Self::stage2()),
            s => Err(Error::Range {
                what: "stage",
                value: s as i64,
                range: "1..=2".into(),
            }),
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_const + self.epochs_decay
    }
}

/// Learning rate at a zero-based epoch.
///
/// Constant at `base_lr` for the first `epochs_const` epochs, then linear
/// over `epochs_decay - 1` intervals so that the first decay epoch still uses
/// `base_lr` and the final epoch uses exactly 0. A single decay epoch is 0.
pub fn lr_at_epoch(spec: &ScheduleSpec, epoch: usize) -> Result<f64> {
    if !(spec.base_lr.is_finite() && spec.base_lr > 0.0) {
        return Err(Error::Parameter(format!("base_lr {} must be > 0", spec.base_lr)));
    }
    let total = spec.total_epochs();
    if epoch >= total {
        return Err(Error::Range {
            what: "epoch",
            value: epoch as i64,
            range: format!("0..{total}"),
        });
    }
    if epoch < spec.epochs_const {
        return Ok(spec.base_lr);
    }
    if spec.epochs_decay == 1 {
        return Ok(0.0);
    }
    let remaining = (total - 1 - epoch) as f64;
    Ok(spec.base_lr * remaining / (spec.epochs_decay - 1) as f64)
}

/// The whole schedule, one rate per epoch.
pub fn schedule(spec: &ScheduleSpec) -> Result<Vec<f64>> {
    (0..spec.total_epochs()).map(|e| lr_at_epoch(spec, e)).collect()
}
