use super::config::Scenario;
use crate::rng;
use crate::{LabeledProgram, MetaType};
use rand::seq::SliceRandom;
use std::collections::BTreeSet;

/// Meta-types labeled in both sets.
pub fn shared_meta_types(source: &[LabeledProgram], target: &[LabeledProgram]) -> BTreeSet<MetaType> {
    let types = |ps: &[LabeledProgram]| ps.iter().flat_map(|p| p.labels.values().copied()).collect::<BTreeSet<_>>();
    types(source).intersection(&types(target)).copied().collect()
}

/// The labeled source and target programs a scenario trains on.
///
/// Partial-target keeps the `⌊f·|T|⌋` target programs with the fewest
/// labeled sites of shared meta-types (ties by id). Augmentation keeps
/// `⌊f·|S|⌋` source programs drawn by a seeded shuffle.
pub fn apply_scenario<'a>(
    scenario: Scenario,
    source: &'a [LabeledProgram],
    target: &'a [LabeledProgram],
    seed: u64,
) -> (Vec<&'a LabeledProgram>, Vec<&'a LabeledProgram>) {
    match scenario {
        Scenario::NoTarget => (source.iter().collect(), Vec::new()),
        Scenario::PartialTarget(f) => {
            let shared = shared_meta_types(source, target);
            let overlap = |p: &LabeledProgram| p.labels.values().filter(|t| shared.contains(t)).count();
            let mut order: Vec<&LabeledProgram> = target.iter().collect();
            order.sort_by_key(|p| (overlap(p), p.id));
            order.truncate((f * target.len() as f64).floor() as usize);
            (source.iter().collect(), order)
        }
        Scenario::Augmentation(f) => {
            let mut order: Vec<&LabeledProgram> = source.iter().collect();
            order.sort_by_key(|p| p.id);
            order.shuffle(&mut rng::stream(seed, 0xA06));
            order.truncate((f * source.len() as f64).floor() as usize);
            order.sort_by_key(|p| p.id);
            (order, target.iter().collect())
        }
    }
}
