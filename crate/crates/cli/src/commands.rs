use crate::error::CliError;
use crate::{AblateArgs, AnalyzeArgs, Cli, Command, DebugArgs, EvalArgs, FinetuneArgs, GenArgs, PredictArgs, PretrainArgs, TrainFlags};
use serde::Serialize;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use typebridge::analysis::sidecar;
use typebridge::corpus::{generate_corpus, read_dataset, split_dataset, write_dataset, DatasetError, SplitMode};
use typebridge::frontend::{meta_tag, parse_program, parse_source};
use typebridge::infer::{
    align, combine, evaluate, kappa_bagging, predict_all, select_lambda, EnsembleCase, PredictionRecord, TypeDistribution,
};
use typebridge::model::{KernelMode, Model, ModelConfig, Prepared};
use typebridge::train::{finetune, prepare_all, pretrain, run_ablation, ExperimentConfig, Scenario, TrainConfig};
use typebridge::{Dialect, LabeledProgram};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut config = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    match &cli.command {
        Command::Gen(a) => gen(a, &config),
        Command::Analyze(a) => analyze(a),
        Command::Debug(a) => debug(a),
        Command::Pretrain(a) => cmd_pretrain(a, &config),
        Command::Finetune(a) => cmd_finetune(a, &config),
        Command::Predict(a) => predict(a, &config),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a, config),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    config.model.validate().map_err(|e| CliError::Usage(format!("{}: model: {e}", path.display())))?;
    config.train.validate().map_err(|e| CliError::Usage(format!("{}: train: {e}", path.display())))?;
    Ok(config)
}

fn dialect(name: &str) -> Result<Dialect, CliError> {
    name.parse().map_err(|e: String| CliError::Usage(format!("--dialect: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    match path {
        Some(p) => write_text(p, &text),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn write_lines<T: Serialize>(path: Option<&Path>, items: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(|e| CliError::Internal(e.to_string()))?);
        text.push('\n');
    }
    match path {
        Some(p) => write_text(p, &text),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn gen(a: &GenArgs, config: &ExperimentConfig) -> Result<(), CliError> {
    let mut gen = config.gen.clone();
    gen.min_statements = a.min_statements.unwrap_or(gen.min_statements);
    gen.max_statements = a.max_statements.unwrap_or(gen.max_statements);
    gen.profiles = a.profiles.unwrap_or(gen.profiles);
    if gen.min_statements == 0 || gen.min_statements > gen.max_statements || gen.profiles == 0 {
        return Err(CliError::Usage(format!(
            "statement range {}..={} and {} profiles do not describe a valid generator",
            gen.min_statements, gen.max_statements, gen.profiles
        )));
    }
    let programs = generate_corpus(config.train.seed, a.n, dialect(&a.dialect)?, &gen);
    write_dataset(&a.out, &programs)?;
    if let Some(path) = &a.manifest {
        let ratios = parse_ratios(&a.ratios)?;
        let mode = match a.mode.as_str() {
            "intra" => SplitMode::Intra,
            "inter" => SplitMode::Inter,
            other => return Err(CliError::Usage(format!("--mode: unknown split mode `{other}`"))),
        };
        let manifest = split_dataset(&programs, ratios, mode, config.train.seed).map_err(|e| CliError::Usage(e.to_string()))?;
        write_json(Some(path), &manifest)?;
    }
    Ok(())
}

fn parse_ratios(text: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--ratios: {e}")))?;
    parts.try_into().map_err(|_| CliError::Usage("--ratios: expected three comma-separated numbers".into()))
}

fn analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let sidecars = match (&a.input, &a.source) {
        (Some(path), _) => {
            let programs = load_dataset(path)?;
            let mut out = Vec::with_capacity(programs.len());
            for p in &programs {
                let ast = parse_program(p).map_err(|e| CliError::Data(format!("{}: program {}: {e}", path.display(), p.id)))?;
                out.push(sidecar(&ast));
            }
            out
        }
        (None, Some(src)) => {
            let d = dialect(a.dialect.as_deref().unwrap_or_default())?;
            vec![sidecar(&parse_source(src, d)?)]
        }
        (None, None) => return Err(CliError::Usage("one of --input or --source is required".into())),
    };
    write_lines(a.out.as_deref(), &sidecars)
}

#[derive(Serialize)]
struct DebugOutput {
    ast: String,
    tokens: Vec<String>,
    tags: Vec<&'static str>,
}

fn debug(a: &DebugArgs) -> Result<(), CliError> {
    let ast = match (&a.source, &a.input) {
        (Some(src), _) => parse_source(src, dialect(a.dialect.as_deref().unwrap_or_default())?)?,
        (None, Some(path)) => {
            let id = a.id.ok_or_else(|| CliError::Usage("--input needs --id".into()))?;
            let programs = load_dataset(path)?;
            let p = programs
                .iter()
                .find(|p| p.id == id)
                .ok_or_else(|| CliError::Data(format!("{}: no program with id {id}", path.display())))?;
            parse_program(p)?
        }
        (None, None) => return Err(CliError::Usage("one of --source or --input is required".into())),
    };
    let out = DebugOutput {
        ast: ast.to_sexpr(),
        tokens: ast.tokens().iter().map(|t| t.text.clone()).collect(),
        tags: meta_tag(&ast).iter().map(|t| t.as_str()).collect(),
    };
    write_json(None, &out)
}

fn train_config(base: &TrainConfig, flags: &TrainFlags) -> Result<TrainConfig, CliError> {
    let mut c = base.clone();
    c.lr = flags.lr.unwrap_or(c.lr);
    c.batch_size = flags.batch_size.unwrap_or(c.batch_size);
    if let Some(k) = &flags.kernel {
        c.kernel = k.parse::<KernelMode>().map_err(|e| CliError::Usage(format!("--kernel: {e}")))?;
    }
    Ok(c)
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<LabeledProgram>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(load_dataset(p)?);
    }
    Ok(out)
}

fn cmd_pretrain(a: &PretrainArgs, config: &ExperimentConfig) -> Result<(), CliError> {
    let mut train = train_config(&config.train, &a.train)?;
    train.pretrain_epochs = a.train.epochs.unwrap_or(train.pretrain_epochs);
    train.validate().map_err(CliError::Usage)?;
    let programs = read_all(&a.data)?;
    let model_config = ModelConfig { syntax_enhancement: config.model.syntax_enhancement && !a.no_syntax_enhancement, ..config.model.clone() };
    let (model, log) = pretrain(&programs, model_config, &train)?;
    model.save(&a.out)?;
    if let Some(path) = &a.train.log {
        write_json(Some(path), &log)?;
    }
    Ok(())
}

fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let bad = || CliError::Usage(format!("--scenario: `{text}` is not no-target, partial-target:F or augmentation:F"));
    let (kind, fraction) = match text.split_once(':') {
        Some((k, f)) => (k, Some(f.parse::<f64>().map_err(|_| bad())?)),
        None => (text, None),
    };
    match (kind, fraction) {
        ("no-target", None) => Ok(Scenario::NoTarget),
        ("partial-target", Some(f)) => Ok(Scenario::PartialTarget(f)),
        ("augmentation", Some(f)) => Ok(Scenario::Augmentation(f)),
        _ => Err(bad()),
    }
}

fn cmd_finetune(a: &FinetuneArgs, config: &ExperimentConfig) -> Result<(), CliError> {
    let mut train = train_config(&config.train, &a.train)?;
    train.epochs = a.train.epochs.unwrap_or(train.epochs);
    if let Some(s) = &a.scenario {
        train.scenario = parse_scenario(s)?;
    }
    train.validate().map_err(CliError::Usage)?;
    let pretrained = Model::load(&a.checkpoint)?;
    let source = load_dataset(&a.source)?;
    let target = match &a.target {
        Some(p) => load_dataset(p)?,
        None => Vec::new(),
    };
    let validation = match &a.validation {
        Some(p) => load_dataset(p)?,
        None => Vec::new(),
    };
    let (model, log) = finetune(&pretrained, &source, &target, &validation, &train)?;
    model.save(&a.out)?;
    if let Some(path) = &a.train.log {
        write_json(Some(path), &log)?;
    }
    Ok(())
}

fn distributions(model: &Model, programs: &[Prepared]) -> Result<Vec<(u64, TypeDistribution)>, CliError> {
    let (dists, skipped) = predict_all(model, programs)?;
    if !skipped.is_empty() {
        log::warn!("skipped {} programs longer than the model's maximum length: {skipped:?}", skipped.len());
    }
    Ok(dists)
}

fn ensemble_cases(plain: &Model, kernel: &Model, programs: &[Prepared]) -> Result<Vec<EnsembleCase>, CliError> {
    let hp = distributions(plain, programs)?;
    let hk = distributions(kernel, programs)?;
    let gold = |id: u64| programs.iter().find(|p| p.id == id).map(|p| p.labels.values().map(|t| t.index()).collect());
    hp.into_iter()
        .zip(hk)
        .map(|((id, plain), (kid, kernel))| {
            if id != kid {
                return Err(CliError::Internal(format!("submodels skipped different programs ({id} vs {kid})")));
            }
            Ok(EnsembleCase { id, plain, kernel, gold: gold(id).unwrap_or_default() })
        })
        .collect()
}

fn predict(a: &PredictArgs, config: &ExperimentConfig) -> Result<(), CliError> {
    let programs = prepare_all(&load_dataset(&a.data)?)?;
    let records: Vec<PredictionRecord> = match (&a.checkpoint, &a.plain, &a.kernel) {
        (Some(path), _, _) => {
            let model = Model::load(path)?;
            distributions(&model, &programs)?.iter().map(|(id, d)| PredictionRecord::new(*id, d, &d.labels())).collect()
        }
        (None, Some(p), Some(k)) => {
            let plain = Model::load(p)?.with_kernel(KernelMode::Plain);
            let kernel = Model::load(k)?.with_kernel(KernelMode::Kernelized);
            let lambda = match (a.lambda, &a.validation) {
                (Some(l), _) => l,
                (None, Some(v)) => {
                    let val = prepare_all(&load_dataset(v)?)?;
                    let l = select_lambda(&ensemble_cases(&plain, &kernel, &val)?, &config.grid)?;
                    log::info!("selected lambda {l}");
                    l
                }
                (None, None) => return Err(CliError::Usage("an ensemble needs --lambda or --validation".into())),
            };
            let mut out = Vec::new();
            for c in ensemble_cases(&plain, &kernel, &programs)? {
                let labels = kappa_bagging(&c.plain, &c.kernel, lambda)?;
                let combined = combine(&c.plain, &c.kernel, lambda)?;
                out.push(PredictionRecord::new(c.id, &combined, &labels));
            }
            out
        }
        _ => return Err(CliError::Usage("give --checkpoint, or both --plain and --kernel".into())),
    };
    write_lines(Some(&a.out), &records)
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| CliError::Data(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let preds = read_predictions(&a.pred)?;
    let gold = load_dataset(&a.gold)?;
    let (p, g) = align(&preds, &gold)?;
    write_json(a.out.as_deref(), &evaluate(&p, &g))
}

fn ablate(a: &AblateArgs, mut config: ExperimentConfig) -> Result<(), CliError> {
    config.source_programs = a.source_programs.unwrap_or(config.source_programs);
    config.target_programs = a.target_programs.unwrap_or(config.target_programs);
    config.eval_programs = a.eval_programs.unwrap_or(config.eval_programs);
    config.train.epochs = a.epochs.unwrap_or(config.train.epochs);
    config.train.pretrain_epochs = a.pretrain_epochs.unwrap_or(config.train.pretrain_epochs);
    config.train.validate().map_err(CliError::Usage)?;
    let report = run_ablation(&config, config.train.seed)?;
    let mut table = format!("{:<14} {:>6} {:>8} {:>8} {:>8}\n", "variant", "lambda", "val EM", "test EM", "test wF1");
    for r in report.rows.iter().chain([&report.baseline]) {
        table.push_str(&format!("{:<14} {:>6.1} {:>8.4} {:>8.4} {:>8.4}\n", r.variant, r.lambda, r.val_em, r.test_em, r.test_weighted_f1));
    }
    io::stdout().write_all(table.as_bytes()).map_err(|e| CliError::Data(format!("stdout: {e}")))?;
    if let Some(path) = &a.out {
        write_json(Some(path), &report)?;
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Vec<LabeledProgram>, CliError> {
    read_dataset(path).map_err(|e| match e {
        DatasetError::Io { .. } => e.into(),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}
