use super::vocab::{Vocab, CLS, MASK, SEP};
use super::{CLS_TAG, SEP_TAG};
use crate::analysis::{analyze, VtcMatrix, INF};
use crate::frontend::{meta_tag, parse_program, FrontendError, MetaTag, Production};
use crate::tensor::Tensor;
use crate::{Dialect, LabeledProgram, MetaType};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// A parsed and analyzed program, ready to be assembled into sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub id: u64,
    pub dialect: Dialect,
    pub tokens: Vec<String>,
    pub tags: Vec<MetaTag>,
    pub vtc: VtcMatrix,
    pub labels: BTreeMap<usize, MetaType>,
    /// Token index where the second half of the statements begins.
    pub split: usize,
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn prepare(p: &LabeledProgram) -> Result<Prepared, FrontendError> {
    let ast = parse_program(p)?;
    let tags = meta_tag(&ast);
    let (_, vtc) = analyze(&ast);
    let split = match ast.children(ast.root()).first() {
        None => 0,
        Some(&def) => {
            let kids = ast.children(def);
            let stmts: Vec<_> = kids.iter().copied().filter(|c| ast.production(*c).is_some_and(Production::is_statement)).collect();
            let first_half = stmts.len() / 2;
            if first_half == 0 {
                // header ends at the block opener, the first terminal after `)`
                let body_start = stmts.first().map(|s| ast.terminals_under(*s)[0]);
                body_start.unwrap_or(p.tokens.len() - 1)
            } else {
                ast.terminals_under(stmts[first_half - 1]).last().unwrap() + 1
            }
        }
    };
    Ok(Prepared { id: p.id, dialect: p.dialect, tokens: p.tokens.clone(), tags, vtc, labels: p.labels.clone(), split })
}

/// One encoded sequence with its training targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub id: u64,
    pub tokens: Vec<usize>,
    pub tags: Vec<usize>,
    pub positions: Vec<usize>,
    pub vtc: VtcMatrix,
    pub mlm_positions: Vec<usize>,
    pub mlm_targets: Vec<usize>,
    /// 1 when the second segment continues the first, 0 otherwise.
    pub nsp_label: Option<usize>,
    pub type_positions: Vec<usize>,
    pub type_targets: Vec<usize>,
    pub domain: Domain,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Distances as floats; `INF` becomes infinity.
    pub fn distances(&self) -> Tensor {
        let n = self.vtc.len();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            data.extend(self.vtc.row(i).iter().map(|&d| if d == INF { f64::INFINITY } else { d as f64 }));
        }
        Tensor { shape: vec![n, n], data }
    }
}

/// Token ids, tag ids and distances for `[CLS] seg0 [SEP] seg1 [SEP] ...`.
/// `inner` covers the concatenated segments; specials are `INF` from
/// everything but themselves.
fn assemble(segments: &[(&Prepared, std::ops::Range<usize>)], inner: &VtcMatrix, vocab: &Vocab) -> (Vec<usize>, Vec<usize>, VtcMatrix, Vec<usize>) {
    let mut tokens = vec![CLS];
    let mut tags = vec![CLS_TAG];
    let mut layout = vec![None];
    let mut offsets = Vec::new();
    let mut k = 0;
    for (p, range) in segments {
        offsets.push(tokens.len());
        for i in range.clone() {
            tokens.push(vocab.id(&p.tokens[i]));
            tags.push(p.tags[i].index());
            layout.push(Some(k));
            k += 1;
        }
        tokens.push(SEP);
        tags.push(SEP_TAG);
        layout.push(None);
    }
    let vtc = VtcMatrix::from_fn(layout.len(), |i, j| match (layout[i], layout[j]) {
        (Some(a), Some(b)) => inner.get(a, b),
        _ if i == j => 0,
        _ => INF,
    });
    (tokens, tags, vtc, offsets)
}

/// `[CLS] program [SEP]` with the program's annotation sites as targets.
pub fn typing_batch(p: &Prepared, vocab: &Vocab, domain: Domain) -> Batch {
    let (tokens, tags, vtc, offsets) = assemble(&[(p, 0..p.len())], &p.vtc, vocab);
    let base = offsets[0];
    Batch {
        id: p.id,
        positions: (0..tokens.len()).collect(),
        tokens,
        tags,
        vtc,
        mlm_positions: Vec::new(),
        mlm_targets: Vec::new(),
        nsp_label: None,
        type_positions: p.labels.keys().map(|i| i + base).collect(),
        type_targets: p.labels.values().map(|t| t.index()).collect(),
        domain,
    }
}

/// Two-segment pretraining sequence. Segment A is the first half of `a`;
/// segment B is the rest of `a`, or the second half of `other` when given,
/// with no path between the segments.
pub fn pretraining_batch(a: &Prepared, other: Option<&Prepared>, vocab: &Vocab, mask_rate: f64, rng: &mut impl Rng) -> Batch {
    let (tokens, tags, vtc) = match other {
        None => {
            let (t, g, v, _) = assemble(&[(a, 0..a.split), (a, a.split..a.len())], &a.vtc, vocab);
            (t, g, v)
        }
        Some(b) => {
            let head: Vec<usize> = (0..a.split).collect();
            let tail: Vec<usize> = (b.split..b.len()).collect();
            let inner = VtcMatrix::block_diagonal(&a.vtc.select(&head), &b.vtc.select(&tail));
            let (t, g, v, _) = assemble(&[(a, 0..a.split), (b, b.split..b.len())], &inner, vocab);
            (t, g, v)
        }
    };
    let mut tokens = tokens;
    let code: Vec<usize> = (0..tokens.len()).filter(|&i| tokens[i] != CLS && tokens[i] != SEP).collect();
    let count = if code.is_empty() { 0 } else { ((mask_rate * code.len() as f64).round() as usize).clamp(1, code.len()) };
    let mut chosen: Vec<usize> = sample(rng, code.len(), count).into_iter().map(|k| code[k]).collect();
    chosen.sort_unstable();
    let mut mlm_targets = Vec::with_capacity(chosen.len());
    for &i in &chosen {
        mlm_targets.push(tokens[i]);
        let r: f64 = rng.gen();
        if r < 0.8 {
            tokens[i] = MASK;
        } else if r < 0.9 {
            tokens[i] = rng.gen_range(vocab.first_regular()..vocab.len());
        }
    }
    Batch {
        id: a.id,
        positions: (0..tokens.len()).collect(),
        tokens,
        tags,
        vtc,
        mlm_positions: chosen,
        mlm_targets,
        nsp_label: Some(usize::from(other.is_none())),
        type_positions: Vec::new(),
        type_targets: Vec::new(),
        domain: Domain::Source,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_program, GenConfig};
    use rand::SeedableRng;

    fn sample_program(seed: u64) -> (LabeledProgram, Prepared) {
        let p = generate_program(seed, Dialect::Alpha, &GenConfig::with_size(4, 8));
        let prepared = prepare(&p).unwrap();
        (p, prepared)
    }

    #[test]
    fn typing_batch_frames_the_program() {
        let (p, prep) = sample_program(5);
        let vocab = Vocab::build([&p]);
        let b = typing_batch(&prep, &vocab, Domain::Source);
        assert_eq!(b.len(), p.tokens.len() + 2);
        assert_eq!((b.tokens[0], *b.tokens.last().unwrap()), (CLS, SEP));
        assert_eq!(b.vtc.get(0, 0), 0);
        assert!((1..b.len()).all(|j| b.vtc.get(0, j) == INF && b.vtc.get(j, 0) == INF));
        assert_eq!(b.vtc.get(3, 5), prep.vtc.get(2, 4));
        for (pos, t) in b.type_positions.iter().zip(&b.type_targets) {
            assert_eq!(MetaType::from_index(*t), Some(p.labels[&(pos - 1)]));
        }
    }

    #[test]
    fn split_falls_between_statements() {
        let (p, prep) = sample_program(9);
        assert!(prep.split > 0 && prep.split < p.tokens.len());
        let prev = &p.tokens[prep.split - 1];
        assert!(prev == ";" || prev == "end" || prev == ":", "{prev}");
    }

    #[test]
    fn negative_pairs_are_disconnected() {
        let (pa, a) = sample_program(1);
        let (pb, b) = sample_program(2);
        let vocab = Vocab::build([&pa, &pb]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let batch = pretraining_batch(&a, Some(&b), &vocab, 0.15, &mut rng);
        assert_eq!(batch.nsp_label, Some(0));
        let sep = a.split + 1;
        assert_eq!(batch.tokens[sep], SEP);
        for i in 1..sep {
            for j in sep + 1..batch.len() - 1 {
                assert_eq!(batch.vtc.get(i, j), INF);
                assert_eq!(batch.vtc.get(j, i), INF);
            }
        }
        let pos = pretraining_batch(&a, None, &vocab, 0.15, &mut rng);
        assert_eq!(pos.nsp_label, Some(1));
        assert_ne!(pos.vtc.get(1, sep + 1), INF);
    }

    #[test]
    fn masking_rate_and_targets() {
        let (p, prep) = sample_program(3);
        let vocab = Vocab::build([&p]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let b = pretraining_batch(&prep, None, &vocab, 0.15, &mut rng);
        let expected = ((0.15 * p.tokens.len() as f64).round() as usize).max(1);
        assert_eq!(b.mlm_positions.len(), expected);
        let originals = typing_batch(&prep, &vocab, Domain::Source);
        for (pos, target) in b.mlm_positions.iter().zip(&b.mlm_targets) {
            let shift = usize::from(*pos > prep.split + 1);
            assert_eq!(originals.tokens[pos - shift], *target);
            assert_eq!(b.tags[*pos], originals.tags[pos - shift]);
        }
    }
}
