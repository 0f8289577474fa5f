use super::config::{TrainConfig, TrainLog};
use super::loops::{prepare_all, pretrain, train_pair, TrainError, TrainedPair};
use crate::corpus::{generate_corpus, split_dataset, GenConfig, Split, SplitMode};
use crate::infer::{default_grid, ensemble_labels, evaluate, predict_all, select_lambda, EnsembleCase, EvalReport};
use crate::model::{KernelMode, ModelConfig, Prepared};
use crate::{rng, Dialect, LabeledProgram};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Row names of the ablation table, in order.
pub const VARIANTS: [&str; 4] = ["full", "w/o SE", "kernel-only", "sequence-only"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub source_dialect: Dialect,
    pub target_dialect: Dialect,
    /// Labeled source-dialect programs.
    pub source_programs: usize,
    /// Target-dialect training programs; unlabeled unless the scenario
    /// uses target labels.
    pub target_programs: usize,
    /// Target-dialect programs split into validation and test.
    pub eval_programs: usize,
    pub val_fraction: f64,
    pub gen: GenConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source_dialect: Dialect::Alpha,
            target_dialect: Dialect::Beta,
            source_programs: 2000,
            target_programs: 1000,
            eval_programs: 600,
            val_fraction: 0.15,
            gen: GenConfig::with_size(3, 10),
            model: ModelConfig::desk(),
            train: TrainConfig { epochs: 8, lr: 1e-3, pretrain_epochs: 2, ..TrainConfig::default() },
            grid: default_grid(),
        }
    }
}

/// The generated programs of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub source: Vec<LabeledProgram>,
    pub target: Vec<LabeledProgram>,
    pub validation: Vec<LabeledProgram>,
    pub test: Vec<LabeledProgram>,
}

impl ExperimentData {
    pub fn generate(config: &ExperimentConfig, seed: u64) -> Result<ExperimentData, TrainError> {
        let source = generate_corpus(rng::derive(seed, 11), config.source_programs, config.source_dialect, &config.gen);
        let offset = config.source_programs as u64;
        let mut target = generate_corpus(rng::derive(seed, 12), config.target_programs + config.eval_programs, config.target_dialect, &config.gen);
        for p in &mut target {
            p.id += offset;
        }
        let eval = target.split_off(config.target_programs);
        let ratios = [0.0, config.val_fraction, 1.0 - config.val_fraction];
        let manifest = split_dataset(&eval, ratios, SplitMode::Intra, seed).map_err(|e| TrainError::Config(e.to_string()))?;
        let [_, validation, test] = manifest.partition(&eval);
        let owned = |v: Vec<&LabeledProgram>| v.into_iter().cloned().collect::<Vec<_>>();
        debug_assert!(manifest.ids(Split::Train).is_empty());
        Ok(ExperimentData { source, target, validation: owned(validation), test: owned(test) })
    }

    /// Source and target programs used for pretraining; labels are not read.
    pub fn pretraining_corpus(&self) -> Vec<LabeledProgram> {
        self.source.iter().chain(&self.target).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    /// Ensemble weight of the kernelized submodel.
    pub lambda: f64,
    pub val_em: f64,
    pub test_em: f64,
    pub test_weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub test_sites: usize,
    /// Rows named by `VARIANTS`.
    pub rows: Vec<AblationRow>,
    /// Plain submodel without syntax enhancement.
    pub baseline: AblationRow,
    pub logs: BTreeMap<String, TrainLog>,
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

/// Both fine-tuned pairs of one seed.
#[derive(Debug, Clone)]
pub struct SeedModels {
    pub enhanced: TrainedPair,
    pub unenhanced: TrainedPair,
    pub logs: BTreeMap<String, TrainLog>,
}

impl SeedModels {
    pub fn train(config: &ExperimentConfig, data: &ExperimentData, seed: u64) -> Result<SeedModels, TrainError> {
        let corpus = data.pretraining_corpus();
        let train = TrainConfig { seed, kernel: KernelMode::Kernelized, ..config.train.clone() };
        let mut logs = BTreeMap::new();
        let mut pairs = Vec::new();
        for (name, se) in [("se", true), ("no-se", false)] {
            let model_config = ModelConfig { syntax_enhancement: se, ..config.model.clone() };
            let (pretrained, log) = pretrain(&corpus, model_config, &train)?;
            logs.insert(format!("pretrain/{name}"), log);
            let pair = train_pair(&pretrained, &data.source, &data.target, &data.validation, &train)?;
            logs.insert(format!("finetune/{name}/plain"), pair.plain_log.clone());
            logs.insert(format!("finetune/{name}/kernel"), pair.kernel_log.clone());
            pairs.push(pair);
        }
        let unenhanced = pairs.pop().expect("two pairs");
        let enhanced = pairs.pop().expect("two pairs");
        Ok(SeedModels { enhanced, unenhanced, logs })
    }
}

fn cases(pair: &TrainedPair, programs: &[Prepared]) -> Result<Vec<EnsembleCase>, TrainError> {
    let (plain, skipped) = predict_all(&pair.plain, programs)?;
    let (kernel, _) = predict_all(&pair.kernel, programs)?;
    let kept = programs.iter().filter(|p| !skipped.contains(&p.id));
    Ok(plain
        .into_iter()
        .zip(kernel)
        .zip(kept)
        .map(|(((id, plain), (_, kernel)), p)| EnsembleCase { id, plain, kernel, gold: p.labels.values().map(|t| t.index()).collect() })
        .collect())
}

fn row(variant: &str, lambda: f64, val: &[EnsembleCase], test: &[EnsembleCase]) -> Result<(AblationRow, EvalReport), TrainError> {
    let (vp, vg) = ensemble_labels(val, lambda)?;
    let (tp, tg) = ensemble_labels(test, lambda)?;
    let v = evaluate(&vp, &vg);
    let t = evaluate(&tp, &tg);
    let r = AblationRow { variant: variant.to_string(), lambda, val_em: v.exact_match, test_em: t.exact_match, test_weighted_f1: t.weighted_f1 };
    Ok((r, t))
}

/// Evaluates the ablation variants of already trained models.
pub fn evaluate_variants(models: &SeedModels, data: &ExperimentData, grid: &[f64], seed: u64) -> Result<AblationReport, TrainError> {
    let val = prepare_all(&data.validation)?;
    let test = prepare_all(&data.test)?;
    let (se_val, se_test) = (cases(&models.enhanced, &val)?, cases(&models.enhanced, &test)?);
    let (no_val, no_test) = (cases(&models.unenhanced, &val)?, cases(&models.unenhanced, &test)?);
    let se_lambda = select_lambda(&se_val, grid)?;
    let no_lambda = select_lambda(&no_val, grid)?;
    let (full, report) = row(VARIANTS[0], se_lambda, &se_val, &se_test)?;
    let rows = vec![
        full,
        row(VARIANTS[1], no_lambda, &no_val, &no_test)?.0,
        row(VARIANTS[2], 1.0, &se_val, &se_test)?.0,
        row(VARIANTS[3], 0.0, &se_val, &se_test)?.0,
    ];
    let baseline = row("baseline", 0.0, &no_val, &no_test)?.0;
    Ok(AblationReport { seed, test_sites: report.sites, rows, baseline, logs: models.logs.clone() })
}

/// Trains and evaluates every ablation variant for one seed.
pub fn run_ablation(config: &ExperimentConfig, seed: u64) -> Result<AblationReport, TrainError> {
    let data = ExperimentData::generate(config, seed)?;
    let models = SeedModels::train(config, &data, seed)?;
    evaluate_variants(&models, &data, &config.grid, seed)
}
