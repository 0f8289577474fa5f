mod common;

use common::{check_lca, check_reaching_definitions, program_ast};
use proptest::prelude::*;
use std::collections::BTreeSet;
use typebridge::analysis::{analyze, d_lca, INF};
use typebridge::corpus::GenConfig;
use typebridge::frontend::{NodeId, Production};

#[test]
fn reaching_definitions_match_path_enumeration() {
    check_reaching_definitions(200).unwrap();
}

#[test]
fn lca_distance_matches_ancestor_chains() {
    check_lca(500).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vtc_entries_are_lca_or_one(seed in 0u64..100_000) {
        let ast = program_ast(seed, &GenConfig::with_size(1, 15));
        let (tcg, vtc) = analyze(&ast);
        for i in 0..vtc.len() {
            prop_assert_eq!(vtc.get(i, i), 0);
            for j in 0..vtc.len() {
                let lca = d_lca(&ast, ast.terminal(i), ast.terminal(j)).unwrap();
                let m = vtc.get(i, j);
                prop_assert!(m != INF);
                prop_assert!(m <= lca);
                prop_assert!(m == lca || m == 1);
                if tcg.rda_edges.contains(&(i, j)) && lca > 1 {
                    prop_assert_eq!(m, 1);
                }
            }
        }
    }

    #[test]
    fn statements_are_local(seed in 0u64..100_000) {
        let ast = program_ast(seed, &GenConfig::with_size(2, 10));
        let def = ast.children(ast.root())[0];
        let stmts: Vec<NodeId> = ast
            .children(def)
            .iter()
            .copied()
            .filter(|c| matches!(ast.production(*c), Some(Production::Define | Production::Assign | Production::Print)))
            .collect();
        let n = ast.terminal_count();
        for s in stmts {
            let inside: BTreeSet<usize> = ast.terminals_under(s).into_iter().collect();
            for &i in &inside {
                let worst_inside = inside.iter().map(|&j| d_lca(&ast, ast.terminal(i), ast.terminal(j)).unwrap()).max().unwrap();
                let best_outside = (0..n)
                    .filter(|j| !inside.contains(j))
                    .map(|j| d_lca(&ast, ast.terminal(i), ast.terminal(j)).unwrap())
                    .min()
                    .unwrap();
                prop_assert!(worst_inside < best_outside);
            }
        }
    }

    #[test]
    fn matrices_are_deterministic(seed in 0u64..100_000) {
        let cfg = GenConfig::with_size(1, 12);
        prop_assert_eq!(analyze(&program_ast(seed, &cfg)).1, analyze(&program_ast(seed, &cfg)).1);
    }
}
