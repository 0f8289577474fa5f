use super::{LabeledProgram, MetaType};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

/// `intra` splits programs freely; `inter` keeps every profile inside one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Intra,
    Inter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub mode: SplitMode,
    pub ratios: [f64; 3],
    pub seed: u64,
    pub assignments: BTreeMap<u64, Split>,
    pub label_vocabulary: Vec<MetaType>,
    /// Programs per split, in `Split::ALL` order.
    pub counts: [usize; 3],
}

impl DatasetManifest {
    pub fn ids(&self, split: Split) -> Vec<u64> {
        self.assignments.iter().filter(|(_, s)| **s == split).map(|(id, _)| *id).collect()
    }

    /// Partitions `programs` by this manifest, preserving input order.
    pub fn partition<'a>(&self, programs: &'a [LabeledProgram]) -> [Vec<&'a LabeledProgram>; 3] {
        let mut out: [Vec<&LabeledProgram>; 3] = Default::default();
        for p in programs {
            if let Some(s) = self.assignments.get(&p.id) {
                out[*s as usize].push(p);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("split ratios must be non-negative and sum to 1 (got {0:?})")]
    BadRatios([f64; 3]),
    #[error("inter-profile split needs at least 3 profiles, found {0}")]
    TooFewProfiles(usize),
    #[error("duplicate program id {0}")]
    DuplicateId(u64),
}

/// Largest-remainder apportionment of `n` items to `ratios`.
fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    // stable: ties resolve to the earlier split
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[k] += 1;
        rest -= 1;
    }
    counts
}

pub fn split_dataset(
    programs: &[LabeledProgram],
    ratios: [f64; 3],
    mode: SplitMode,
    seed: u64,
) -> Result<DatasetManifest, SplitError> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SplitError::BadRatios(ratios));
    }
    let mut seen = BTreeSet::new();
    for p in programs {
        if !seen.insert(p.id) {
            return Err(SplitError::DuplicateId(p.id));
        }
    }
    let mut r = rng::stream(seed, 0x5911);
    let mut assignments = BTreeMap::new();
    match mode {
        SplitMode::Intra => {
            let mut ids: Vec<u64> = programs.iter().map(|p| p.id).collect();
            ids.sort_unstable();
            ids.shuffle(&mut r);
            let counts = apportion(ids.len(), &ratios);
            let mut it = ids.into_iter();
            for (split, &c) in Split::ALL.iter().zip(&counts) {
                for id in it.by_ref().take(c) {
                    assignments.insert(id, *split);
                }
            }
        }
        SplitMode::Inter => {
            let mut by_profile: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
            for p in programs {
                by_profile.entry(p.profile).or_default().push(p.id);
            }
            if by_profile.len() < 3 {
                return Err(SplitError::TooFewProfiles(by_profile.len()));
            }
            let mut profiles: Vec<u32> = by_profile.keys().copied().collect();
            profiles.shuffle(&mut r);
            let total = programs.len() as f64;
            let targets: Vec<f64> = ratios.iter().map(|x| x * total).collect();
            let mut filled = [0usize; 3];
            // every split with positive weight gets one profile first
            let seeded: Vec<usize> = (0..3).filter(|&k| ratios[k] > 0.0).collect();
            for (i, prof) in profiles.iter().enumerate() {
                let k = if i < seeded.len() {
                    seeded[i]
                } else {
                    (0..3)
                        .filter(|&k| ratios[k] > 0.0)
                        .max_by(|&a, &b| {
                            let da = targets[a] - filled[a] as f64;
                            let db = targets[b] - filled[b] as f64;
                            da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                        })
                        .unwrap()
                };
                for id in &by_profile[prof] {
                    assignments.insert(*id, Split::ALL[k]);
                }
                filled[k] += by_profile[prof].len();
            }
        }
    }
    let mut counts = [0usize; 3];
    for s in assignments.values() {
        counts[*s as usize] += 1;
    }
    Ok(DatasetManifest { mode, ratios, seed, assignments, label_vocabulary: MetaType::ALL.to_vec(), counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GenConfig};
    use crate::dialect::Dialect;

    fn corpus(n: usize) -> Vec<LabeledProgram> {
        generate_corpus(11, n, Dialect::Alpha, &GenConfig::with_size(2, 4))
    }

    #[test]
    fn intra_uses_largest_remainder() {
        let m = split_dataset(&corpus(10), [0.8, 0.1, 0.1], SplitMode::Intra, 3).unwrap();
        assert_eq!(m.counts, [8, 1, 1]);
        let m = split_dataset(&corpus(7), [0.5, 0.25, 0.25], SplitMode::Intra, 3).unwrap();
        assert_eq!(m.counts.iter().sum::<usize>(), 7);
    }

    #[test]
    fn inter_needs_three_profiles() {
        let mut ps = corpus(6);
        for (i, p) in ps.iter_mut().enumerate() {
            p.profile = (i % 2) as u32;
        }
        assert_eq!(
            split_dataset(&ps, [0.8, 0.1, 0.1], SplitMode::Inter, 0),
            Err(SplitError::TooFewProfiles(2))
        );
    }

    #[test]
    fn inter_has_no_profile_leakage() {
        let ps = corpus(200);
        let m = split_dataset(&ps, [0.7, 0.15, 0.15], SplitMode::Inter, 9).unwrap();
        let mut owner: BTreeMap<u32, Split> = BTreeMap::new();
        for p in &ps {
            let s = m.assignments[&p.id];
            assert_eq!(*owner.entry(p.profile).or_insert(s), s, "profile {} leaks", p.profile);
        }
        assert!(m.counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn deterministic_and_exhaustive() {
        let ps = corpus(50);
        for mode in [SplitMode::Intra, SplitMode::Inter] {
            let a = split_dataset(&ps, [0.6, 0.2, 0.2], mode, 5).unwrap();
            assert_eq!(a, split_dataset(&ps, [0.6, 0.2, 0.2], mode, 5).unwrap());
            assert_eq!(a.assignments.len(), ps.len());
        }
    }

    #[test]
    fn rejects_bad_ratios() {
        assert!(matches!(
            split_dataset(&corpus(5), [0.5, 0.5, 0.5], SplitMode::Intra, 0),
            Err(SplitError::BadRatios(_))
        ));
    }
}
