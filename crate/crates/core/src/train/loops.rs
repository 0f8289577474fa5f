use super::config::{EpochLog, TrainConfig, TrainLog};
use super::scenario::apply_scenario;
use crate::frontend::FrontendError;
use crate::infer::{evaluate, predict_all, InferError};
use crate::model::{prepare, pretraining_batch, typing_batch, Batch, Domain, KernelMode, Model, ModelConfig, ModelError, Prepared, Vocab};
use crate::rng;
use crate::tensor::{Adam, AdamConfig, Gradients, Tape};
use crate::{Dialect, LabeledProgram, MetaType};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use std::path::PathBuf;
use thiserror::Error;

/// Seed offset between the plain and kernelized models of a pair.
pub const PAIR_SEED_OFFSET: u64 = 1;
/// Upper bound on programs in the fixed-mask MLM evaluation.
const MLM_EVAL_PROGRAMS: usize = 512;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("the training corpus is empty")]
    EmptyCorpus,
    #[error("the pretraining corpus has no {0} programs")]
    MissingDialect(Dialect),
    #[error("program {id}: {source}")]
    Frontend { id: u64, source: FrontendError },
    #[error("the model has {have} type classes but labels need {need}")]
    Labels { have: usize, need: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Infer(#[from] InferError),
}

/// Parses and analyzes programs in parallel, preserving order.
pub fn prepare_all(programs: &[LabeledProgram]) -> Result<Vec<Prepared>, TrainError> {
    programs
        .par_iter()
        .map(|p| prepare(p).map_err(|source| TrainError::Frontend { id: p.id, source }))
        .collect()
}

#[derive(Default)]
struct Totals {
    sequences: usize,
    loss: f64,
    parts: [f64; 3],
}

/// One optimizer step over `batches`: per-sequence gradients in parallel,
/// summed in order, averaged, clipped, applied.
fn step<F>(model: &mut Model, adam: &mut Adam, batches: &[&Batch], clip: f64, totals: &mut Totals, loss: &F) -> Result<(), TrainError>
where
    F: Fn(&Model, &Tape, &Batch) -> Result<(crate::tensor::Var, [f64; 3]), ModelError> + Sync,
{
    let m: &Model = model;
    let results: Vec<Result<(Gradients, f64, [f64; 3]), TrainError>> = batches
        .par_iter()
        .map(|b| {
            let tape = Tape::new();
            let (l, parts) = loss(m, &tape, b)?;
            let value = tape.value(l).item();
            let grads = tape.backward(l).map_err(ModelError::from)?;
            Ok((grads, value, parts))
        })
        .collect();
    model.params.zero_grads();
    for r in results {
        let (grads, value, parts) = r?;
        model.params.accumulate(&grads);
        totals.sequences += 1;
        totals.loss += value;
        for (t, p) in totals.parts.iter_mut().zip(parts) {
            *t += p;
        }
    }
    model.params.scale_grads(1.0 / batches.len() as f64);
    model.params.clip_grad_norm(clip);
    adam.step(&mut model.params);
    Ok(())
}

fn fits(model: &Model, b: &Batch) -> bool {
    b.len() <= model.config.max_len
}

fn checkpoint(model: &Model, config: &TrainConfig, stage: &str, epoch: usize) -> Result<(), TrainError> {
    if let Some(dir) = &config.checkpoint_dir {
        if config.checkpoint_every > 0 && epoch.is_multiple_of(config.checkpoint_every) {
            std::fs::create_dir_all(dir)
                .map_err(|e| ModelError::File { path: dir.clone(), message: e.to_string() })?;
            let path: PathBuf = dir.join(format!("{stage}-epoch{epoch}.ckpt"));
            model.save(path)?;
        }
    }
    Ok(())
}

fn mean_mlm(model: &Model, batches: &[Batch]) -> Result<f64, TrainError> {
    let losses: Vec<Result<f64, ModelError>> = batches
        .par_iter()
        .map(|b| {
            let tape = Tape::new();
            let h = model.encode(&tape, b)?;
            let l = model.loss_mlm(&tape, h, &b.mlm_positions, &b.mlm_targets)?;
            let v = tape.value(l).item();
            Ok(v)
        })
        .collect();
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / batches.len().max(1) as f64)
}

/// Pairs each program with its own continuation or, half the time, with
/// the second half of a different program.
fn pretraining_epoch(prepared: &[Prepared], vocab: &Vocab, mask_rate: f64, rng: &mut impl Rng) -> Vec<Batch> {
    prepared
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let other = if prepared.len() > 1 && rng.gen_bool(0.5) {
                let j = (i + rng.gen_range(1..prepared.len())) % prepared.len();
                Some(&prepared[j])
            } else {
                None
            };
            pretraining_batch(a, other, vocab, mask_rate, rng)
        })
        .collect()
}

/// MLM + NSP (+ bandwidth penalty in kernelized mode) pretraining on a
/// corpus holding both dialects. The vocabulary is built from the corpus.
pub fn pretrain(programs: &[LabeledProgram], model_config: ModelConfig, config: &TrainConfig) -> Result<(Model, TrainLog), TrainError> {
    config.validate().map_err(TrainError::Config)?;
    if programs.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    for d in [Dialect::Alpha, Dialect::Beta] {
        if !programs.iter().any(|p| p.dialect == d) {
            return Err(TrainError::MissingDialect(d));
        }
    }
    let vocab = Vocab::build(programs);
    let mut model = Model::new(ModelConfig { kernel: config.kernel, ..model_config }, vocab.clone(), rng::derive(config.seed, 1))?;
    let prepared = prepare_all(programs)?;
    let mut log = TrainLog::default();

    let mut eval_rng = rng::stream(config.seed, 2);
    let eval: Vec<Batch> = pretraining_epoch(&prepared[..prepared.len().min(MLM_EVAL_PROGRAMS)], &vocab, config.mask_rate, &mut eval_rng)
        .into_iter()
        .filter(|b| fits(&model, b))
        .collect();
    let initial = mean_mlm(&model, &eval)?;
    log.epochs.push(EpochLog {
        epoch: 0,
        loss: initial,
        mlm: None,
        nsp: None,
        sigma_penalty: None,
        eval_mlm: Some(initial),
        val_em: None,
        val_weighted_f1: None,
        sigmas: model.sigmas(),
    });

    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, &model.params);
    let coeffs = config.coeffs;
    let loss = move |m: &Model, tape: &Tape, b: &Batch| {
        let (l, parts) = m.loss_pretrain(tape, b, coeffs)?;
        Ok((l, [parts.mlm, parts.nsp, parts.sigma]))
    };
    for epoch in 1..=config.pretrain_epochs {
        let mut r = rng::stream(config.seed, 1000 + epoch as u64);
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        order.shuffle(&mut r);
        let shuffled: Vec<Prepared> = order.iter().map(|&i| prepared[i].clone()).collect();
        let all = pretraining_epoch(&shuffled, &vocab, config.mask_rate, &mut r);
        let (batches, skipped): (Vec<Batch>, Vec<Batch>) = all.into_iter().partition(|b| fits(&model, b));
        log.skipped += skipped.len();
        let mut totals = Totals::default();
        let refs: Vec<&Batch> = batches.iter().collect();
        for chunk in refs.chunks(config.batch_size) {
            step(&mut model, &mut adam, chunk, config.clip_norm, &mut totals, &loss)?;
        }
        let n = totals.sequences.max(1) as f64;
        let eval_mlm = mean_mlm(&model, &eval)?;
        log.epochs.push(EpochLog {
            epoch,
            loss: totals.loss / n,
            mlm: Some(totals.parts[0] / n),
            nsp: Some(totals.parts[1] / n),
            sigma_penalty: Some(totals.parts[2] / n),
            eval_mlm: Some(eval_mlm),
            val_em: None,
            val_weighted_f1: None,
            sigmas: model.sigmas(),
        });
        log::info!("pretrain epoch {epoch}: loss {:.4} eval mlm {eval_mlm:.4}", totals.loss / n);
        checkpoint(&model, config, "pretrain", epoch)?;
    }
    if log.skipped > 0 {
        log::warn!("pretraining skipped {} over-long sequences", log.skipped);
    }
    Ok((model, log))
}

/// Validation EM and weighted F1 of one model.
pub fn validate_models(model: &Model, validation: &[Prepared]) -> Result<(f64, f64), TrainError> {
    let (dists, skipped) = predict_all(model, validation)?;
    let kept = validation.iter().filter(|p| !skipped.contains(&p.id));
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for ((_, d), p) in dists.iter().zip(kept) {
        pred.extend(d.labels());
        gold.extend(p.labels.values().map(|t| t.index()));
    }
    let r = evaluate(&pred, &gold);
    Ok((r.exact_match, r.weighted_f1))
}

/// Fine-tunes all parameters of `pretrained` on the scenario's labeled
/// programs and returns the epoch with the best validation EM.
pub fn finetune(
    pretrained: &Model,
    source: &[LabeledProgram],
    target: &[LabeledProgram],
    validation: &[LabeledProgram],
    config: &TrainConfig,
) -> Result<(Model, TrainLog), TrainError> {
    config.validate().map_err(TrainError::Config)?;
    if source.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut model = pretrained.with_kernel(config.kernel);
    if model.config.type_vocab < MetaType::ALL.len() {
        return Err(TrainError::Labels { have: model.config.type_vocab, need: MetaType::ALL.len() });
    }
    let (s, t) = apply_scenario(config.scenario, source, target, config.seed);
    let mut labeled: Vec<LabeledProgram> = s.into_iter().cloned().collect();
    let n_source = labeled.len();
    labeled.extend(t.into_iter().cloned());
    let prepared = prepare_all(&labeled)?;
    let val = prepare_all(validation)?;
    let mut log = TrainLog::default();
    let mut batches = Vec::with_capacity(prepared.len());
    for (i, p) in prepared.iter().enumerate() {
        let domain = if i < n_source { Domain::Source } else { Domain::Target };
        let b = typing_batch(p, &model.vocab, domain);
        if fits(&model, &b) {
            log.labeled_sites[usize::from(domain == Domain::Target)] += b.type_positions.len();
            batches.push(b);
        } else {
            log.skipped += 1;
        }
    }
    if log.skipped > 0 {
        log::warn!("fine-tuning skipped {} over-long programs", log.skipped);
    }

    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, &model.params);
    let weights = config.domain_weights;
    let loss = move |m: &Model, tape: &Tape, b: &Batch| Ok((m.loss_finetune(tape, b, weights)?, [0.0; 3]));
    let mut best: Option<(f64, Model)> = None;
    for epoch in 1..=config.epochs {
        let mut order: Vec<&Batch> = batches.iter().collect();
        order.shuffle(&mut rng::stream(config.seed, 2000 + epoch as u64));
        let mut totals = Totals::default();
        for chunk in order.chunks(config.batch_size) {
            step(&mut model, &mut adam, chunk, config.clip_norm, &mut totals, &loss)?;
        }
        let (val_em, val_wf1) = if val.is_empty() { (None, None) } else {
            let (em, wf1) = validate_models(&model, &val)?;
            (Some(em), Some(wf1))
        };
        let loss_mean = totals.loss / totals.sequences.max(1) as f64;
        log::info!("finetune {} epoch {epoch}: loss {loss_mean:.4} val em {val_em:?}", config.kernel);
        log.epochs.push(EpochLog {
            epoch,
            loss: loss_mean,
            mlm: None,
            nsp: None,
            sigma_penalty: None,
            eval_mlm: None,
            val_em,
            val_weighted_f1: val_wf1,
            sigmas: model.sigmas(),
        });
        if let Some(em) = val_em {
            if best.as_ref().is_none_or(|(b, _)| em > *b) {
                best = Some((em, model.clone()));
            }
        }
        checkpoint(&model, config, &format!("finetune-{}", config.kernel), epoch)?;
    }
    log.select_best();
    Ok((best.map_or(model, |(_, m)| m), log))
}

/// The plain and kernelized submodels of the ensemble, fine-tuned from
/// the same pretrained model with identical schedules.
#[derive(Debug, Clone)]
pub struct TrainedPair {
    pub plain: Model,
    pub plain_log: TrainLog,
    pub kernel: Model,
    pub kernel_log: TrainLog,
}

pub fn train_pair(
    pretrained: &Model,
    source: &[LabeledProgram],
    target: &[LabeledProgram],
    validation: &[LabeledProgram],
    config: &TrainConfig,
) -> Result<TrainedPair, TrainError> {
    let plain_config = TrainConfig { kernel: KernelMode::Plain, ..config.clone() };
    let kernel_config = TrainConfig { kernel: KernelMode::Kernelized, seed: config.seed + PAIR_SEED_OFFSET, ..config.clone() };
    let (plain, plain_log) = finetune(pretrained, source, target, validation, &plain_config)?;
    let (kernel, kernel_log) = finetune(pretrained, source, target, validation, &kernel_config)?;
    Ok(TrainedPair { plain, plain_log, kernel, kernel_log })
}
