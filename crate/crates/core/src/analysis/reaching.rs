use super::cfg::{Cfg, DefId};
use std::collections::{BTreeMap, BTreeSet};

/// Reaching definitions per variable use, keyed by the use's token index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReachingDefinitions {
    pub uses: BTreeMap<usize, BTreeSet<DefId>>,
    pub block_in: Vec<BTreeSet<DefId>>,
    pub block_out: Vec<BTreeSet<DefId>>,
}

impl ReachingDefinitions {
    pub fn at(&self, token: usize) -> Option<&BTreeSet<DefId>> {
        self.uses.get(&token)
    }
}

/// Least fixpoint of `IN[b] = ∪ OUT[p]` and `OUT[b] = gen ∪ (IN[b] − kill)`,
/// iterated in reverse post-order until stable. Parameters form the entry
/// boundary.
pub fn reaching_definitions(cfg: &Cfg) -> ReachingDefinitions {
    let n = cfg.blocks.len();
    let boundary = cfg.boundary();
    let order = cfg.reverse_post_order();
    let preds: Vec<Vec<usize>> = (0..n).map(|b| cfg.predecessors(b).collect()).collect();
    let mut block_in = vec![BTreeSet::new(); n];
    let mut block_out = vec![BTreeSet::new(); n];
    let mut changed = true;
    while changed {
        changed = false;
        for &b in &order {
            let mut input = if b == cfg.entry { boundary.clone() } else { BTreeSet::new() };
            for &p in &preds[b] {
                input.extend(block_out[p].iter().copied());
            }
            let output = transfer(cfg, b, input.clone(), |_, _| {});
            if output != block_out[b] {
                block_out[b] = output;
                changed = true;
            }
            block_in[b] = input;
        }
    }
    let mut uses = BTreeMap::new();
    for b in 0..n {
        transfer(cfg, b, block_in[b].clone(), |live, stmt| {
            for u in &cfg.statements[&stmt].uses {
                let defs = live.iter().copied().filter(|d| cfg.definitions[*d].var == u.var).collect();
                uses.insert(u.token, defs);
            }
        });
    }
    ReachingDefinitions { uses, block_in, block_out }
}

/// Runs the statements of `block` over `live`, calling `visit` before each
/// statement's own definition takes effect.
fn transfer(
    cfg: &Cfg,
    block: usize,
    mut live: BTreeSet<DefId>,
    mut visit: impl FnMut(&BTreeSet<DefId>, crate::frontend::NodeId),
) -> BTreeSet<DefId> {
    for &stmt in &cfg.blocks[block] {
        visit(&live, stmt);
        let info = &cfg.statements[&stmt];
        if let Some(g) = info.gen {
            live.retain(|d| !info.kill.contains(d));
            live.insert(g);
        }
    }
    live
}
