//! Acceptance criteria. Each criterion prints one PASS/FAIL line with its
//! measured value and runtime; the test fails if any criterion fails.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};
use typebridge::analysis::{analyze, d_lca, VtcMatrix, INF};
use typebridge::corpus::{generate_corpus, GenConfig};
use typebridge::frontend::parse_source;
use typebridge::infer::{exact_match, kappa_bagging, predict, weighted_f1};
use typebridge::model::{
    prepare, pretraining_batch, Batch, Domain, KernelMode, Model, ModelConfig, PretrainCoeffs, Prepared, Vocab, DomainWeights,
};
use typebridge::tensor::{Tape, Tensor};
use typebridge::train::{finetune, pretrain, run_ablation, AblationReport, ExperimentConfig, TrainConfig, VARIANTS};
use typebridge::Dialect;

const WORKED_EXAMPLE: &str = "def f ( b ) : b = 3 ; if ( a ) : print ( b ) ; end end";
/// Token indices in the worked example: the use of `b`, the condition `a`,
/// the parameter `b` and the literal `3`.
const B_USE: usize = 17;
const A_COND: usize = 12;
const B_PARAM: usize = 3;
const LITERAL: usize = 8;

const GRAD_REL_TOL: f64 = 1e-4;
/// Denominator floor of the relative error, for near-zero gradients.
const GRAD_ABS_FLOOR: f64 = 1e-5;
const GRAD_STEP: f64 = 1e-5;
const MASK_TOL: f64 = 1e-12;
const LARGE_SIGMA: f64 = 1e3;
const LARGE_SIGMA_TOL: f64 = 1e-3;
const F1_WORKED: f64 = 0.7333;
const F1_WORKED_TOL: f64 = 1e-4;
const MLM_RATIO: f64 = 0.60;
const EM_TARGET: f64 = 0.90;
const EM_FLOOR: f64 = 0.85;
const TRANSFER_SEEDS: [u64; 3] = [0, 1, 2];

type Outcome = Result<String, String>;

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn desk_programs(seed: u64, n: usize, dialect: Dialect) -> Vec<typebridge::LabeledProgram> {
    generate_corpus(seed, n, dialect, &GenConfig::with_size(3, 10))
}

fn worked_example() -> Outcome {
    let ast = parse_source(WORKED_EXAMPLE, Dialect::Alpha).map_err(|e| e.to_string())?;
    let (_, vtc) = analyze(&ast);
    let row = vtc.row(B_USE);
    let lca = d_lca(&ast, ast.terminal(B_USE), ast.terminal(A_COND)).map_err(|e| e.to_string())?;
    let got = format!("row[b_param]={} row[3]={} d_lca(b,a)={lca}", row[B_PARAM], row[LITERAL]);
    if row[B_PARAM] == 3 && row[LITERAL] == 1 && lca == 2 {
        Ok(got)
    } else {
        Err(got)
    }
}

fn tiny_model(kernel: KernelMode, layers: usize, dim: usize, vocab_size: usize, seed: u64) -> Model {
    let vocab = Vocab::from_tokens((0..vocab_size - 4).map(|i| format!("w{i}")));
    let config = ModelConfig { layers, heads: 2, dim, ff_dim: 2 * dim, max_len: 16, kernel, ..ModelConfig::default() };
    Model::new(config, vocab, seed).expect("valid config")
}

fn gradient_check() -> Outcome {
    let mut model = tiny_model(KernelMode::Kernelized, 2, 8, 12, 11);
    model.set_sigma(0, 1.3);
    model.set_sigma(1, 2.6);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for id in model.params.ids().collect::<Vec<_>>() {
        if model.params.name(id).starts_with("embed.alpha") || model.params.name(id).starts_with("embed.beta") {
            for v in &mut model.params.value_mut(id).data {
                *v = rng.gen_range(0.5..1.5);
            }
        }
    }
    let vtc = VtcMatrix::from_fn(6, |i, j| match (i, j) {
        _ if i == j => 0,
        (0, _) | (_, 0) => INF,
        _ => ((i as i64 - j as i64).unsigned_abs() as u32).div_ceil(2),
    });
    let batch = Batch {
        id: 0,
        tokens: vec![1, 5, 3, 7, 9, 2],
        tags: vec![19, 4, 11, 4, 0, 20],
        positions: (0..6).collect(),
        vtc,
        mlm_positions: vec![2, 4],
        mlm_targets: vec![6, 10],
        nsp_label: Some(1),
        type_positions: vec![1, 3],
        type_targets: vec![2, 0],
        domain: Domain::Source,
    };
    let loss_of = |m: &Model| -> Result<(Tape, typebridge::tensor::Var), String> {
        let tape = Tape::new();
        let (pre, _) = m.loss_pretrain(&tape, &batch, PretrainCoeffs::default()).map_err(|e| e.to_string())?;
        let fine = m.loss_finetune(&tape, &batch, DomainWeights::default()).map_err(|e| e.to_string())?;
        let total = tape.add(pre, fine).map_err(|e| e.to_string())?;
        Ok((tape, total))
    };
    let (tape, loss) = loss_of(&model)?;
    let grads = tape.backward(loss).map_err(|e| e.to_string())?;
    let mut worst = (0.0f64, String::new());
    let mut largest = 0.0f64;
    let mut checked = 0;
    for id in model.params.ids().collect::<Vec<_>>() {
        let analytic = grads
            .params()
            .iter()
            .find(|(p, _)| *p == id)
            .map(|(_, g)| g.clone())
            .unwrap_or_else(|| Tensor::zeros(&model.params.value(id).shape));
        for k in 0..model.params.value(id).len() {
            let orig = model.params.value(id).data[k];
            let mut eval = |x: f64| -> Result<f64, String> {
                model.params.value_mut(id).data[k] = x;
                let (t, l) = loss_of(&model)?;
                let v = t.value(l).item();
                Ok(v)
            };
            let numeric = (eval(orig + GRAD_STEP)? - eval(orig - GRAD_STEP)?) / (2.0 * GRAD_STEP);
            model.params.value_mut(id).data[k] = orig;
            let a = analytic.data[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_ABS_FLOOR);
            if rel > worst.0 {
                worst = (rel, format!("{}[{k}] (analytic {a:.3e}, numeric {numeric:.3e})", model.params.name(id)));
            }
            largest = largest.max(a.abs());
            checked += 1;
        }
    }
    let msg = format!("{checked} scalars (largest gradient {largest:.2e}), worst relative error {:.2e} at {}", worst.0, worst.1);
    if worst.0 <= GRAD_REL_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn hidden(model: &Model, batch: &Batch) -> Result<Tensor, String> {
    let tape = Tape::new();
    let h = model.encode(&tape, batch).map_err(|e| e.to_string())?;
    let v = tape.value(h).clone();
    Ok(v)
}

fn kernel_masking() -> Outcome {
    let programs = desk_programs(31, 12, Dialect::Alpha);
    let vocab = Vocab::build(&programs);
    let prepared: Vec<Prepared> = programs.iter().map(|p| prepare(p).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut moved: f64 = f64::INFINITY;
    let mut cases = 0;
    for layers in 1..=4 {
        let config = ModelConfig { layers, heads: 2, dim: 16, ff_dim: 32, max_len: 256, ..ModelConfig::default() };
        let model = Model::new(config, vocab.clone(), 100 + layers as u64).map_err(|e| e.to_string())?;
        for pair in prepared.chunks(2) {
            let batch = pretraining_batch(&pair[0], Some(&pair[1]), &vocab, 0.15, &mut rng);
            let base = hidden(&model, &batch)?;
            let seps: Vec<usize> = (0..batch.len()).filter(|&i| batch.tokens[i] == typebridge::model::SEP).collect();
            for j in seps[0] + 1..seps[1] {
                let mut perturbed = batch.clone();
                perturbed.tokens[j] = vocab.first_regular() + (perturbed.tokens[j] + 7) % (vocab.len() - vocab.first_regular());
                perturbed.tags[j] = (perturbed.tags[j] + 5) % 19;
                let out = hidden(&model, &perturbed)?;
                // segment B is closed under finite distances, so nothing outside it can reach j
                for q in (0..batch.len()).filter(|q| !(seps[0] + 1..seps[1]).contains(q)) {
                    if batch.vtc.get(q, j) != INF || batch.vtc.get(j, q) != INF {
                        return Err(format!("position {q} is not disconnected from {j}"));
                    }
                    for c in 0..16 {
                        worst = worst.max((base.at(q, c) - out.at(q, c)).abs());
                    }
                    cases += 1;
                }
                moved = moved.min((0..16).map(|c| (base.at(j, c) - out.at(j, c)).abs()).fold(0.0, f64::max));
            }
        }
    }
    let msg = format!("{cases} query/context pairs over 1-4 layers, max change {worst:.1e} (perturbed tokens move by >= {moved:.1e})");
    if worst <= MASK_TOL && cases > 0 && moved > 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn large_sigma() -> Outcome {
    let programs = desk_programs(41, 20, Dialect::Beta);
    let vocab = Vocab::build(&programs);
    let config = ModelConfig { layers: 2, heads: 2, dim: 16, ff_dim: 32, max_len: 256, ..ModelConfig::default() };
    let mut kernel = Model::new(config, vocab.clone(), 9).map_err(|e| e.to_string())?;
    for l in 0..2 {
        kernel.set_sigma(l, LARGE_SIGMA);
    }
    let plain = kernel.with_kernel(KernelMode::Plain);
    let mut attention: f64 = 0.0;
    let mut encoder: f64 = 0.0;
    for p in &programs {
        let prep = prepare(p).map_err(|e| e.to_string())?;
        let batch = Batch {
            id: p.id,
            tokens: prep.tokens.iter().map(|t| vocab.id(t)).collect(),
            tags: prep.tags.iter().map(|t| t.index()).collect(),
            positions: (0..prep.len()).collect(),
            vtc: prep.vtc.clone(),
            mlm_positions: vec![],
            mlm_targets: vec![],
            nsp_label: None,
            type_positions: vec![],
            type_targets: vec![],
            domain: Domain::Target,
        };
        if (0..batch.len()).any(|i| batch.vtc.row(i).contains(&INF)) {
            return Err(format!("program {} has an infinite distance", p.id));
        }
        let tape = Tape::new();
        let c = kernel.embed_inputs(&tape, &batch.tokens, &batch.tags, &batch.positions).map_err(|e| e.to_string())?;
        let k = kernel.kernelized_attention(&tape, 0, c, &Arc::new(batch.distances())).map_err(|e| e.to_string())?;
        let s = kernel.attention(&tape, 0, c, None).map_err(|e| e.to_string())?;
        attention = attention.max(tape.value(k).max_abs_diff(&tape.value(s)));
        encoder = encoder.max(hidden(&kernel, &batch)?.max_abs_diff(&hidden(&plain, &batch)?));
    }
    let msg = format!("max |kernel - plain|: attention {attention:.2e}, encoder {encoder:.2e}");
    if attention <= LARGE_SIGMA_TOL && encoder <= LARGE_SIGMA_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ensemble_degeneracy() -> Outcome {
    let programs = desk_programs(51, 100, Dialect::Beta);
    let vocab = Vocab::build(&programs);
    let config = ModelConfig { max_len: 256, ..ModelConfig::desk() };
    let plain = Model::new(ModelConfig { kernel: KernelMode::Plain, ..config.clone() }, vocab.clone(), 1).map_err(|e| e.to_string())?;
    let kernel = Model::new(config, vocab, 2).map_err(|e| e.to_string())?;
    let mut sites = 0;
    let mut differing = 0;
    for p in &programs {
        let prep = prepare(p).map_err(|e| e.to_string())?;
        let hp = predict(&plain, &prep).map_err(|e| e.to_string())?;
        let hk = predict(&kernel, &prep).map_err(|e| e.to_string())?;
        let l0 = kappa_bagging(&hp, &hk, 0.0).map_err(|e| e.to_string())?;
        let l1 = kappa_bagging(&hp, &hk, 1.0).map_err(|e| e.to_string())?;
        if l0 != hp.labels() || l1 != hk.labels() {
            return Err(format!("program {}: ensemble labels differ from the submodel", p.id));
        }
        sites += l0.len();
        differing += hp.labels().iter().zip(hk.labels()).filter(|(a, b)| **a != *b).count();
    }
    Ok(format!("100 programs, {sites} sites, submodels disagree on {differing}"))
}

/// Weighted F1 from an explicit confusion matrix.
fn f1_oracle(pred: &[usize], gold: &[usize], classes: usize) -> (f64, f64) {
    let mut m = vec![vec![0usize; classes]; classes];
    for (&p, &g) in pred.iter().zip(gold) {
        m[g][p] += 1;
    }
    let n = gold.len();
    let correct: usize = (0..classes).map(|c| m[c][c]).sum();
    let mut weighted = 0.0;
    for c in 0..classes {
        let row: usize = m[c].iter().sum();
        let col: usize = (0..classes).map(|g| m[g][c]).sum();
        let f1 = if row == 0 || col == 0 || m[c][c] == 0 {
            0.0
        } else {
            let p = m[c][c] as f64 / col as f64;
            let r = m[c][c] as f64 / row as f64;
            2.0 * p * r / (p + r)
        };
        weighted += row as f64 * f1;
    }
    (correct as f64 / n as f64, weighted / n as f64)
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000 {
        let n = rng.gen_range(1..60);
        let classes = rng.gen_range(2..=4);
        let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let (em, wf1) = f1_oracle(&pred, &gold, classes);
        if exact_match(&pred, &gold) != em || weighted_f1(&pred, &gold, classes).0 != wf1 {
            return Err(format!("case {case} disagrees with the oracle"));
        }
    }
    let (w, _) = weighted_f1(&[0, 1, 1, 1], &[0, 0, 1, 1], 2);
    let msg = format!("1000 random cases exact; worked example weighted F1 {w:.6}");
    if (w - F1_WORKED).abs() <= F1_WORKED_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn pretraining_sanity() -> Outcome {
    let mut programs = desk_programs(61, 250, Dialect::Alpha);
    programs.extend(desk_programs(62, 250, Dialect::Beta).into_iter().map(|mut p| {
        p.id += 250;
        p
    }));
    let config = TrainConfig { pretrain_epochs: 1, lr: 2e-3, batch_size: 8, ..TrainConfig::default() };
    let (_, log) = pretrain(&programs, ModelConfig::desk(), &config).map_err(|e| e.to_string())?;
    let before = log.epochs[0].eval_mlm.unwrap();
    let after = log.epochs[1].eval_mlm.unwrap();
    let msg = format!("mean MLM loss {before:.3} -> {after:.3} (ratio {:.3}, need < {MLM_RATIO})", after / before);
    if after < MLM_RATIO * before {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn supervised_learnability() -> Outcome {
    let train = desk_programs(71, 2000, Dialect::Alpha);
    let validation: Vec<_> = desk_programs(72, 300, Dialect::Alpha)
        .into_iter()
        .map(|mut p| {
            p.id += 2000;
            p
        })
        .collect();
    let vocab = Vocab::build(train.iter().chain(&validation));
    let model = Model::new(ModelConfig::desk(), vocab, 3).map_err(|e| e.to_string())?;
    let config = TrainConfig { epochs: 15, lr: 1e-3, batch_size: 16, ..TrainConfig::default() };
    let (_, log) = finetune(&model, &train, &[], &validation, &config).map_err(|e| e.to_string())?;
    let best = log.best_epoch.ok_or("no validation EM recorded")?;
    let em = log.epochs[best - 1].val_em.unwrap();
    let msg = format!("best validation EM {em:.4} at epoch {best} of {}", config.epochs);
    if em >= EM_TARGET {
        Ok(msg)
    } else if em >= EM_FLOOR {
        Ok(format!("{msg} (below {EM_TARGET}, above floor {EM_FLOOR})"))
    } else {
        Err(msg)
    }
}

fn mean(reports: &[AblationReport], f: impl Fn(&AblationReport) -> f64) -> f64 {
    reports.iter().map(f).sum::<f64>() / reports.len() as f64
}

fn transfer(reports: &[AblationReport]) -> Outcome {
    let em = |v: &'static str| move |r: &AblationReport| r.row(v).unwrap().test_em;
    let full = mean(reports, em(VARIANTS[0]));
    let no_se = mean(reports, em(VARIANTS[1]));
    let sequence = mean(reports, em(VARIANTS[3]));
    let baseline = mean(reports, |r| r.baseline.test_em);
    let msg = format!("mean test EM: full {full:.4}, baseline {baseline:.4}, w/o SE {no_se:.4}, sequence-only {sequence:.4}");
    if full >= baseline && full >= no_se && full >= sequence {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism(first: &AblationReport, config: &ExperimentConfig) -> Outcome {
    let again = run_ablation(config, first.seed).map_err(|e| e.to_string())?;
    let a = serde_json::to_string(first).unwrap();
    let b = serde_json::to_string(&again).unwrap();
    if a == b {
        Ok(format!("seed {} rerun matches ({} bytes of logged metrics)", first.seed, a.len()))
    } else {
        Err("rerun differs from the first run".into())
    }
}

struct Reporter {
    failures: Vec<usize>,
}

impl Reporter {
    fn run(&mut self, id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {budget:?} budget")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            self.failures.push(id);
        }
        let line = format!("criterion {id:>2} {status} {name}: {detail} [{:.1}s]\n", elapsed.as_secs_f64());
        std::io::stderr().write_all(line.as_bytes()).unwrap();
    }
}

#[test]
fn acceptance_criteria() {
    let mut r = Reporter { failures: Vec::new() };
    r.run(1, "worked example", secs(1), worked_example);
    r.run(2, "reaching definitions oracle", secs(30), || {
        common::check_reaching_definitions(200).map(|_| "200 programs agree".into())
    });
    r.run(3, "LCA oracle", secs(10), || common::check_lca(500).map(|_| "500 ASTs agree".into()));
    r.run(4, "gradient check", secs(60), gradient_check);
    r.run(5, "kernel masking", secs(10), kernel_masking);
    r.run(6, "large bandwidth limit", secs(10), large_sigma);
    r.run(7, "ensemble degeneracy", secs(60), ensemble_degeneracy);
    r.run(8, "metrics oracle", secs(10), metrics_oracle);
    r.run(9, "pretraining sanity", secs(600), pretraining_sanity);
    r.run(10, "supervised learnability", secs(900), supervised_learnability);

    let config = ExperimentConfig::default();
    let mut reports = Vec::new();
    r.run(11, "desk-scale transfer", secs(45 * 60), || {
        for seed in TRANSFER_SEEDS {
            let report = run_ablation(&config, seed).map_err(|e| e.to_string())?;
            for row in report.rows.iter().chain([&report.baseline]) {
                let line = format!(
                    "    seed {seed} {:<14} lambda {:.1} val EM {:.4} test EM {:.4} test wF1 {:.4}\n",
                    row.variant, row.lambda, row.val_em, row.test_em, row.test_weighted_f1
                );
                std::io::stderr().write_all(line.as_bytes()).unwrap();
            }
            reports.push(report);
        }
        transfer(&reports)
    });
    r.run(12, "determinism", secs(45 * 60), || match reports.first() {
        Some(first) => determinism(first, &config),
        None => Err("criterion 11 produced no report".into()),
    });
    assert!(r.failures.is_empty(), "failed criteria: {:?}", r.failures);
}
