//! Prediction at annotation sites, the λ-weighted ensemble of a plain and a
//! kernelized model, and evaluation metrics.

use crate::model::{typing_batch, Domain, Model, ModelError, Prepared};
use crate::{LabeledProgram, MetaType};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("program {id}: sites are not aligned ({detail})")]
    Misaligned { id: u64, detail: String },
    #[error("lambda {0} is outside [0, 1]")]
    Lambda(f64),
    #[error("the validation set has no annotation sites")]
    EmptyValidation,
    #[error("the lambda grid is empty")]
    EmptyGrid,
}

/// Probability vectors over the type vocabulary, one per annotation site.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    /// Token indices of the sites within the program.
    pub positions: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
}

impl TypeDistribution {
    pub fn labels(&self) -> Vec<usize> {
        self.probs.iter().map(|p| argmax(p)).collect()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &Model, program: &Prepared) -> Result<TypeDistribution, InferError> {
    let batch = typing_batch(program, &model.vocab, Domain::Target);
    let probs = model.type_distributions(&batch)?;
    Ok(TypeDistribution { positions: program.labels.keys().copied().collect(), probs })
}

/// Predicts every program in parallel. Programs that do not fit the model
/// are returned separately by id.
pub fn predict_all(model: &Model, programs: &[Prepared]) -> Result<(Vec<(u64, TypeDistribution)>, Vec<u64>), InferError> {
    let results: Vec<_> = programs.par_iter().map(|p| (p.id, predict(model, p))).collect();
    let mut out = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (id, r) in results {
        match r {
            Ok(d) => out.push((id, d)),
            Err(InferError::Model(ModelError::TooLong { .. })) => skipped.push(id),
            Err(e) => return Err(e),
        }
    }
    Ok((out, skipped))
}

fn check_aligned(id: u64, plain: &TypeDistribution, kernel: &TypeDistribution) -> Result<(), InferError> {
    if plain.positions != kernel.positions || plain.probs.len() != kernel.probs.len() {
        return Err(InferError::Misaligned { id, detail: "different site positions".into() });
    }
    if plain.probs.iter().zip(&kernel.probs).any(|(a, b)| a.len() != b.len()) {
        return Err(InferError::Misaligned { id, detail: "different type vocabularies".into() });
    }
    Ok(())
}

/// The convex combination `λ·h_kernel + (1-λ)·h_plain` per site.
pub fn combine(plain: &TypeDistribution, kernel: &TypeDistribution, lambda: f64) -> Result<TypeDistribution, InferError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(InferError::Lambda(lambda));
    }
    check_aligned(0, plain, kernel)?;
    let probs = plain
        .probs
        .iter()
        .zip(&kernel.probs)
        .map(|(p, k)| p.iter().zip(k).map(|(p, k)| lambda * k + (1.0 - lambda) * p).collect())
        .collect();
    Ok(TypeDistribution { positions: plain.positions.clone(), probs })
}

/// Ensemble labels: argmax of the combined distribution at each site.
pub fn kappa_bagging(plain: &TypeDistribution, kernel: &TypeDistribution, lambda: f64) -> Result<Vec<usize>, InferError> {
    Ok(combine(plain, kernel, lambda)?.labels())
}

/// One program's submodel outputs and gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCase {
    pub id: u64,
    pub plain: TypeDistribution,
    pub kernel: TypeDistribution,
    pub gold: Vec<usize>,
}

pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// The grid value with the highest exact match on `cases`; ties go to the
/// smaller λ.
pub fn select_lambda(cases: &[EnsembleCase], grid: &[f64]) -> Result<f64, InferError> {
    if grid.is_empty() {
        return Err(InferError::EmptyGrid);
    }
    if cases.iter().all(|c| c.gold.is_empty()) {
        return Err(InferError::EmptyValidation);
    }
    let mut order: Vec<f64> = grid.to_vec();
    order.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, order[0]);
    for &lambda in &order {
        let (pred, gold) = ensemble_labels(cases, lambda)?;
        let em = exact_match(&pred, &gold);
        if em > best.0 {
            best = (em, lambda);
        }
    }
    Ok(best.1)
}

/// Flattened ensemble predictions and gold labels over all cases.
pub fn ensemble_labels(cases: &[EnsembleCase], lambda: f64) -> Result<(Vec<usize>, Vec<usize>), InferError> {
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for c in cases {
        check_aligned(c.id, &c.plain, &c.kernel)?;
        if c.gold.len() != c.plain.probs.len() {
            return Err(InferError::Misaligned { id: c.id, detail: "gold labels do not match sites".into() });
        }
        pred.extend(kappa_bagging(&c.plain, &c.kernel, lambda)?);
        gold.extend_from_slice(&c.gold);
    }
    Ok((pred, gold))
}

/// Fraction of sites predicted correctly; 0 for no sites.
pub fn exact_match(pred: &[usize], gold: &[usize]) -> f64 {
    assert_eq!(pred.len(), gold.len(), "prediction and gold lengths differ");
    if gold.is_empty() {
        return 0.0;
    }
    pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / gold.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Support-weighted mean of per-class F1 over `classes` classes, plus the
/// per-class table. Undefined precision or recall gives F1 = 0.
pub fn weighted_f1(pred: &[usize], gold: &[usize], classes: usize) -> (f64, Vec<ClassScore>) {
    assert_eq!(pred.len(), gold.len(), "prediction and gold lengths differ");
    let mut tp = vec![0usize; classes];
    let mut predicted = vec![0usize; classes];
    let mut support = vec![0usize; classes];
    for (&p, &g) in pred.iter().zip(gold) {
        predicted[p] += 1;
        support[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let mut total = 0.0;
    let mut table = Vec::with_capacity(classes);
    for c in 0..classes {
        let precision = ratio(tp[c], predicted[c]);
        let recall = ratio(tp[c], support[c]);
        let f1 = if predicted[c] == 0 || support[c] == 0 || precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        total += support[c] as f64 * f1;
        let label = MetaType::from_index(c).map_or_else(|| c.to_string(), |t| t.to_string());
        table.push(ClassScore { label, precision, recall, f1, support: support[c] });
    }
    (if gold.is_empty() { 0.0 } else { total / gold.len() as f64 }, table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sites: usize,
    pub exact_match: f64,
    pub weighted_f1: f64,
    pub classes: Vec<ClassScore>,
    /// `confusion[gold][pred]` counts.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(pred: &[usize], gold: &[usize]) -> EvalReport {
    let classes = MetaType::ALL.len().max(pred.iter().chain(gold).max().map_or(0, |m| m + 1));
    let (wf1, table) = weighted_f1(pred, gold, classes);
    let mut confusion = vec![vec![0; classes]; classes];
    for (&p, &g) in pred.iter().zip(gold) {
        confusion[g][p] += 1;
    }
    EvalReport { sites: gold.len(), exact_match: exact_match(pred, gold), weighted_f1: wf1, classes: table, confusion }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub pos: usize,
    pub pred: MetaType,
    pub dist: Vec<f64>,
}

/// One line of the prediction JSON Lines output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: u64,
    pub sites: Vec<SiteRecord>,
}

impl PredictionRecord {
    pub fn new(id: u64, dist: &TypeDistribution, labels: &[usize]) -> PredictionRecord {
        let sites = dist
            .positions
            .iter()
            .zip(&dist.probs)
            .zip(labels)
            .map(|((&pos, p), &l)| SiteRecord { pos, pred: MetaType::ALL[l], dist: p.clone() })
            .collect();
        PredictionRecord { id, sites }
    }
}

/// Aligns prediction records with gold programs by id and position.
pub fn align(records: &[PredictionRecord], gold: &[LabeledProgram]) -> Result<(Vec<usize>, Vec<usize>), InferError> {
    let by_id: BTreeMap<u64, &PredictionRecord> = records.iter().map(|r| (r.id, r)).collect();
    let mut pred = Vec::new();
    let mut labels = Vec::new();
    for p in gold {
        let r = by_id.get(&p.id).ok_or_else(|| InferError::Misaligned { id: p.id, detail: "no prediction".into() })?;
        let sites: BTreeMap<usize, MetaType> = r.sites.iter().map(|s| (s.pos, s.pred)).collect();
        if sites.len() != p.labels.len() {
            return Err(InferError::Misaligned { id: p.id, detail: format!("{} predicted sites for {} labels", sites.len(), p.labels.len()) });
        }
        for (pos, t) in &p.labels {
            let got = sites.get(pos).ok_or_else(|| InferError::Misaligned { id: p.id, detail: format!("no prediction at {pos}") })?;
            pred.push(got.index());
            labels.push(t.index());
        }
    }
    Ok((pred, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(rows: &[&[f64]]) -> TypeDistribution {
        TypeDistribution { positions: (0..rows.len()).collect(), probs: rows.iter().map(|r| r.to_vec()).collect() }
    }

    #[test]
    fn convex_combination_example() {
        let plain = dist(&[&[0.6, 0.4]]);
        let kernel = dist(&[&[0.2, 0.8]]);
        let c = combine(&plain, &kernel, 0.5).unwrap();
        assert!((c.probs[0][0] - 0.4).abs() < 1e-15 && (c.probs[0][1] - 0.6).abs() < 1e-15);
        assert_eq!(kappa_bagging(&plain, &kernel, 0.5).unwrap(), vec![1]);
        assert_eq!(kappa_bagging(&plain, &kernel, 0.0).unwrap(), vec![0]);
        assert_eq!(kappa_bagging(&plain, &kernel, 1.0).unwrap(), vec![1]);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
        let a = dist(&[&[0.5, 0.5]]);
        assert_eq!(kappa_bagging(&a, &a, 0.3).unwrap(), vec![0]);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let a = dist(&[&[0.5, 0.5]]);
        let b = dist(&[&[0.5, 0.5], &[1.0, 0.0]]);
        assert!(matches!(kappa_bagging(&a, &a, 1.5), Err(InferError::Lambda(_))));
        assert!(matches!(kappa_bagging(&a, &b, 0.5), Err(InferError::Misaligned { .. })));
        assert!(matches!(select_lambda(&[], &default_grid()), Err(InferError::EmptyValidation)));
        let case = EnsembleCase { id: 0, plain: a.clone(), kernel: a, gold: vec![0] };
        assert!(matches!(select_lambda(&[case], &[]), Err(InferError::EmptyGrid)));
    }

    #[test]
    fn lambda_selection() {
        let right_kernel = EnsembleCase { id: 1, plain: dist(&[&[0.9, 0.1]]), kernel: dist(&[&[0.3, 0.7]]), gold: vec![1] };
        assert_eq!(select_lambda(std::slice::from_ref(&right_kernel), &[0.0, 1.0]).unwrap(), 1.0);
        let right_plain = EnsembleCase { gold: vec![0], ..right_kernel.clone() };
        assert_eq!(select_lambda(&[right_plain], &[0.0, 1.0]).unwrap(), 0.0);
        let same = EnsembleCase { id: 2, plain: dist(&[&[0.9, 0.1]]), kernel: dist(&[&[0.8, 0.2]]), gold: vec![0] };
        assert_eq!(select_lambda(&[same], &default_grid()).unwrap(), 0.0);
        // combined weight on class 1 is 0.1 + 0.6λ, which first exceeds 0.5 at λ = 0.7
        let l = select_lambda(&[right_kernel], &default_grid()).unwrap();
        assert_eq!(l, 0.7);
        assert!(default_grid().contains(&l));
    }

    #[test]
    fn metric_worked_example() {
        let gold = [0, 0, 1, 1];
        let pred = [0, 1, 1, 1];
        assert_eq!(exact_match(&pred, &gold), 0.75);
        let (wf1, table) = weighted_f1(&pred, &gold, 2);
        assert!((table[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((table[1].f1 - 0.8).abs() < 1e-12);
        assert!((wf1 - 0.7333).abs() < 1e-4);
        let (perfect, _) = weighted_f1(&gold, &gold, 2);
        assert_eq!((exact_match(&gold, &gold), perfect), (1.0, 1.0));
    }

    #[test]
    fn report_supports_and_confusion() {
        let gold = [0, 2, 2, 1, 0];
        let pred = [0, 2, 1, 1, 2];
        let r = evaluate(&pred, &gold);
        assert_eq!(r.classes.iter().map(|c| c.support).sum::<usize>(), r.sites);
        assert_eq!(r.classes[3].support, 0);
        assert_eq!(r.classes[3].f1, 0.0);
        assert_eq!(r.confusion[2][1], 1);
        assert_eq!(r.confusion.iter().flatten().sum::<usize>(), 5);
    }

    #[test]
    fn records_round_trip_as_json() {
        let d = TypeDistribution { positions: vec![3, 9], probs: vec![vec![0.1, 0.7, 0.1, 0.1], vec![0.4, 0.2, 0.2, 0.2]] };
        let r = PredictionRecord::new(5, &d, &d.labels());
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.starts_with(r#"{"id":5,"sites":[{"pos":3,"pred":"number","dist":"#));
        assert_eq!(serde_json::from_str::<PredictionRecord>(&text).unwrap(), r);
    }
}
