use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Whether attention is regulated by the type-closeness kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    Kernelized,
    Plain,
}

impl fmt::Display for KernelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelMode::Kernelized => "kernel",
            KernelMode::Plain => "plain",
        })
    }
}

impl FromStr for KernelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kernel" | "kernelized" => Ok(KernelMode::Kernelized),
            "plain" => Ok(KernelMode::Plain),
            other => Err(format!("unknown kernel mode `{other}` (expected `kernel` or `plain`)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub token_vocab: usize,
    pub tag_vocab: usize,
    pub type_vocab: usize,
    pub kernel: KernelMode,
    /// Adds the meta-grammar tag embedding to the input.
    pub syntax_enhancement: bool,
    /// Initial kernel bandwidth of every layer.
    pub sigma_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 4,
            heads: 4,
            dim: 256,
            ff_dim: 1024,
            max_len: 512,
            token_vocab: 0,
            tag_vocab: super::TAG_VOCAB,
            type_vocab: crate::MetaType::ALL.len(),
            kernel: KernelMode::Kernelized,
            syntax_enhancement: true,
            sigma_init: 2.0,
        }
    }
}

impl ModelConfig {
    /// A small encoder that trains in minutes on one core.
    pub fn desk() -> ModelConfig {
        ModelConfig { layers: 2, heads: 2, dim: 32, ff_dim: 64, max_len: 256, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(format!("dim {} is not divisible by {} heads", self.dim, self.heads));
        }
        if self.token_vocab == 0 || self.tag_vocab == 0 || self.type_vocab == 0 {
            return Err("vocabulary sizes must be positive".into());
        }
        if self.max_len == 0 || self.ff_dim == 0 {
            return Err("max_len and ff_dim must be positive".into());
        }
        if !(self.sigma_init > 0.0 && self.sigma_init.is_finite()) {
            return Err(format!("sigma_init must be positive, got {}", self.sigma_init));
        }
        Ok(())
    }
}

/// Weights of the pretraining objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainCoeffs {
    pub mlm: f64,
    pub nsp: f64,
    /// Weight of the bandwidth penalty `Σ σ²`.
    pub sigma: f64,
}

impl Default for PretrainCoeffs {
    fn default() -> Self {
        PretrainCoeffs { mlm: 1.0, nsp: 1.0, sigma: 0.01 }
    }
}

/// Weights of source- and target-dialect examples in the fine-tuning loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainWeights {
    pub source: f64,
    pub target: f64,
}

impl Default for DomainWeights {
    fn default() -> Self {
        DomainWeights { source: 1.0, target: 1.0 }
    }
}
