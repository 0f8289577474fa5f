use proptest::prelude::*;
use typebridge::infer::{argmax, combine, evaluate, exact_match, kappa_bagging, weighted_f1, TypeDistribution};

fn distribution(rows: Vec<Vec<f64>>) -> TypeDistribution {
    let rows: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|x| x / s).collect()
        })
        .collect();
    TypeDistribution { positions: (0..rows.len()).collect(), probs: rows }
}

fn rows(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), n)
}

fn labeled(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..4, 0usize..4), len)
}

proptest! {
    #[test]
    fn argmax_is_invariant_under_positive_scaling(v in prop::collection::vec(-5.0f64..5.0, 1..10), s in 0.1f64..10.0) {
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        prop_assert_eq!(argmax(&v), argmax(&scaled));
        prop_assert!(v.iter().all(|x| *x <= v[argmax(&v)]));
    }

    #[test]
    fn ensemble_endpoints_recover_submodels((p, k) in (1usize..6).prop_flat_map(|n| (rows(n), rows(n)))) {
        let (p, k) = (distribution(p), distribution(k));
        prop_assert_eq!(kappa_bagging(&p, &k, 0.0).unwrap(), p.labels());
        prop_assert_eq!(kappa_bagging(&p, &k, 1.0).unwrap(), k.labels());
    }

    #[test]
    fn combined_rows_stay_distributions((p, k) in (1usize..6).prop_flat_map(|n| (rows(n), rows(n))), lambda in 0.0f64..=1.0) {
        let c = combine(&distribution(p), &distribution(k), lambda).unwrap();
        for row in &c.probs {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn combining_agreeing_submodels_keeps_their_labels(p in rows(4), lambda in 0.0f64..=1.0) {
        let p = distribution(p);
        prop_assert_eq!(kappa_bagging(&p, &p, lambda).unwrap(), p.labels());
    }

    #[test]
    fn metrics_ignore_site_order(pairs in labeled(1..40), seed in any::<u64>()) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let mut shuffled = pairs.clone();
        let n = shuffled.len();
        for i in 0..n {
            let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % n as u64) as usize;
            shuffled.swap(i, j);
        }
        let (sp, sg): (Vec<usize>, Vec<usize>) = shuffled.into_iter().unzip();
        prop_assert!((exact_match(&pred, &gold) - exact_match(&sp, &sg)).abs() < 1e-15);
        prop_assert!((weighted_f1(&pred, &gold, 4).0 - weighted_f1(&sp, &sg, 4).0).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_bounded_and_perfect_on_gold(pairs in labeled(1..40)) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let r = evaluate(&pred, &gold);
        prop_assert!((0.0..=1.0).contains(&r.exact_match));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r.weighted_f1));
        prop_assert_eq!(r.confusion.iter().flatten().sum::<usize>(), gold.len());
        let perfect = evaluate(&gold, &gold);
        prop_assert_eq!(perfect.exact_match, 1.0);
        prop_assert!((perfect.weighted_f1 - 1.0).abs() < 1e-12);
    }
}
