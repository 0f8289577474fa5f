use crate::model::{DomainWeights, KernelMode, PretrainCoeffs};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// How much labeled target-dialect data fine-tuning sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Source labels only.
    NoTarget,
    /// All source plus this fraction of the target programs.
    PartialTarget(f64),
    /// All target plus this fraction of the source programs.
    Augmentation(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub scenario: Scenario,
    pub pretrain_epochs: usize,
    pub mask_rate: f64,
    pub coeffs: PretrainCoeffs,
    pub domain_weights: DomainWeights,
    pub kernel: KernelMode,
    /// Global gradient norm bound.
    pub clip_norm: f64,
    /// Save a checkpoint every this many epochs when `checkpoint_dir` is set.
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            lr: 1e-4,
            seed: 0,
            scenario: Scenario::NoTarget,
            pretrain_epochs: 5,
            mask_rate: 0.15,
            coeffs: PretrainCoeffs::default(),
            domain_weights: DomainWeights::default(),
            kernel: KernelMode::Kernelized,
            clip_norm: 1.0,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 {
            return Err("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.mask_rate > 0.0 && self.mask_rate <= 1.0) {
            return Err(format!("mask_rate must be in (0, 1], got {}", self.mask_rate));
        }
        if let Scenario::PartialTarget(f) | Scenario::Augmentation(f) = self.scenario {
            if !(0.0..=1.0).contains(&f) {
                return Err(format!("scenario fraction must be in [0, 1], got {f}"));
            }
        }
        if !(self.clip_norm > 0.0) {
            return Err(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        Ok(())
    }
}

/// Numbers recorded for one epoch. Epoch 0 of pretraining is an evaluation
/// of the initial model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training objective per sequence.
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mlm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nsp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_penalty: Option<f64>,
    /// Mean MLM loss on fixed masks after the epoch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_mlm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_em: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_weighted_f1: Option<f64>,
    /// Kernel bandwidth of each layer at the end of the epoch.
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch with the highest validation EM, earliest on ties.
    pub best_epoch: Option<usize>,
    /// Sequences skipped for exceeding the maximum length.
    pub skipped: usize,
    /// Labeled sites per epoch from each domain, in `[source, target]` order.
    pub labeled_sites: [usize; 2],
}

impl TrainLog {
    /// Recomputes `best_epoch` from the recorded validation EM.
    pub fn select_best(&mut self) {
        let mut best: Option<(usize, f64)> = None;
        for e in &self.epochs {
            if let Some(em) = e.val_em {
                if best.is_none_or(|(_, b)| em > b) {
                    best = Some((e.epoch, em));
                }
            }
        }
        self.best_epoch = best.map(|(e, _)| e);
    }
}
