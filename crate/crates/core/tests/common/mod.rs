//! Brute-force oracles shared by the analysis and acceptance tests.

use rand::{Rng, SeedableRng};
use std::collections::{BTreeMap, BTreeSet};
use typebridge::analysis::{build_cfg, d_lca, reaching_definitions, Cfg, DefId, DefSite};
use typebridge::corpus::{generate_program, GenConfig};
use typebridge::frontend::{parse_program, Ast, NodeId};
use typebridge::Dialect;

pub fn program_ast(seed: u64, cfg: &GenConfig) -> Ast {
    parse_program(&generate_program(seed, Dialect::Alpha, cfg)).unwrap()
}

/// Every path from the entry ending in `target`, using each edge at most twice.
pub fn paths_to(cfg: &Cfg, target: usize) -> Vec<Vec<usize>> {
    fn walk(cfg: &Cfg, target: usize, path: &mut Vec<usize>, used: &mut BTreeMap<(usize, usize), u32>, out: &mut Vec<Vec<usize>>) {
        let here = *path.last().unwrap();
        if here == target {
            out.push(path.clone());
        }
        let succ: Vec<usize> = cfg.successors(here).collect();
        for s in succ {
            let count = used.entry((here, s)).or_insert(0);
            if *count >= 2 {
                continue;
            }
            *count += 1;
            path.push(s);
            walk(cfg, target, path, used, out);
            path.pop();
            *used.get_mut(&(here, s)).unwrap() -= 1;
        }
    }
    let mut out = Vec::new();
    walk(cfg, target, &mut vec![cfg.entry], &mut BTreeMap::new(), &mut out);
    out
}

/// Reaching definitions of each use, by replaying every bounded path.
pub fn path_oracle(cfg: &Cfg) -> BTreeMap<usize, BTreeSet<DefId>> {
    let mut result = BTreeMap::new();
    for (&stmt, info) in &cfg.statements {
        for u in &info.uses {
            let mut reach = BTreeSet::new();
            for path in paths_to(cfg, info.block) {
                let mut last: Vec<DefId> = cfg
                    .definitions
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.var == u.var && matches!(d.site, DefSite::Parameter(_)))
                    .map(|(i, _)| i)
                    .collect();
                'blocks: for (k, &b) in path.iter().enumerate() {
                    for &s in &cfg.blocks[b] {
                        if k + 1 == path.len() && s == stmt {
                            break 'blocks;
                        }
                        if let Some(g) = cfg.statements[&s].gen {
                            if cfg.definitions[g].var == u.var {
                                last = vec![g];
                            }
                        }
                    }
                }
                reach.extend(last);
            }
            result.insert(u.token, reach);
        }
    }
    result
}

/// Deepest node shared by both ancestor chains; hops counted from `a`.
pub fn lca_oracle(ast: &Ast, a: NodeId, b: NodeId) -> u32 {
    let chain = |mut n: NodeId| {
        let mut c = vec![n];
        while let Some(p) = ast.parent(n) {
            c.push(p);
            n = p;
        }
        c
    };
    let ca = chain(a);
    let cb: BTreeSet<NodeId> = chain(b).into_iter().collect();
    ca.iter().position(|n| cb.contains(n)).unwrap() as u32
}

/// Compares reaching definitions with path enumeration on `count` programs
/// with at most 12 blocks.
pub fn check_reaching_definitions(count: usize) -> Result<(), String> {
    let cfg = GenConfig::with_size(3, 12);
    let mut checked = 0;
    let mut seed = 0;
    while checked < count {
        seed += 1;
        let ast = program_ast(seed, &cfg);
        let g = build_cfg(&ast);
        if g.blocks.len() > 12 {
            continue;
        }
        if reaching_definitions(&g).uses != path_oracle(&g) {
            return Err(format!("reaching definitions differ for seed {seed}"));
        }
        checked += 1;
    }
    Ok(())
}

/// Compares `d_lca` with ancestor-chain intersection on `count` ASTs,
/// 20 random node pairs each.
pub fn check_lca(count: u64) -> Result<(), String> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let cfg = GenConfig::with_size(1, 20);
    for seed in 0..count {
        let ast = program_ast(1000 + seed, &cfg);
        for _ in 0..20 {
            let a = NodeId(rng.gen_range(0..ast.len()));
            let b = NodeId(rng.gen_range(0..ast.len()));
            let got = d_lca(&ast, a, b).map_err(|e| e.to_string())?;
            if got != lca_oracle(&ast, a, b) {
                return Err(format!("seed {seed}: d_lca({a:?}, {b:?}) = {got}, oracle {}", lca_oracle(&ast, a, b)));
            }
        }
    }
    Ok(())
}
