//! Pretraining, fine-tuning under the labeled-target scenarios, and the
//! transfer experiment with its ablations.

mod config;
mod experiment;
mod loops;
mod scenario;

pub use config::{EpochLog, Scenario, TrainConfig, TrainLog};
pub use experiment::{evaluate_variants, run_ablation, AblationReport, AblationRow, ExperimentConfig, ExperimentData, SeedModels, VARIANTS};
pub use loops::{finetune, prepare_all, pretrain, train_pair, validate_models, TrainError, TrainedPair, PAIR_SEED_OFFSET};
pub use scenario::{apply_scenario, shared_meta_types};
