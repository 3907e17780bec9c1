use proptest::prelude::*;
use reqgate_core::classifier::{auc_rank, Classifier, ForestHyperparams, RandomForest};
use reqgate_core::features::FeatureMatrix;
use reqgate_core::gate::cost_reduction;
use reqgate_core::harness::coverage;
use reqgate_core::rules::{Catalog, Rule, RuleSet};
use reqgate_core::stats::{mann_whitney, vargha_delaney_a12};

fn samples() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(0i32..12, 1..30),
        prop::collection::vec(0i32..12, 1..30),
    )
        .prop_map(|(a, b)| {
            (
                a.into_iter().map(f64::from).collect(),
                b.into_iter().map(f64::from).collect(),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn u_and_a12_complement((xs, ys) in samples()) {
        let nm = (xs.len() * ys.len()) as f64;
        let u1 = mann_whitney(&xs, &ys).unwrap();
        let u2 = mann_whitney(&ys, &xs).unwrap();
        prop_assert!((u1.u + u2.u - nm).abs() < 1e-9);
        prop_assert!((u1.p_value - u2.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&u1.p_value));
        let a = vargha_delaney_a12(&xs, &ys).unwrap();
        prop_assert!((a + vargha_delaney_a12(&ys, &xs).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((a - u1.u / nm).abs() < 1e-12);
    }

    #[test]
    fn auc_inverts_with_labels((xs, ys) in samples()) {
        let scores: Vec<f64> = xs.iter().chain(&ys).copied().collect();
        let labels: Vec<u8> = (0..scores.len()).map(|i| u8::from(i < xs.len())).collect();
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let auc = auc_rank(&scores, &labels).unwrap();
        prop_assert!((auc + auc_rank(&scores, &flipped).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((auc - vargha_delaney_a12(&xs, &ys).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cost_reduction_bounds(total in 1u64..100_000, frac in 0.0f64..=1.0) {
        let executed = (total as f64 * frac) as u64;
        let c = cost_reduction(total, executed).unwrap();
        prop_assert!((0.0..=100.0).contains(&c));
        prop_assert_eq!(cost_reduction(total, total).unwrap(), 0.0);
    }

    #[test]
    fn coverage_sums_to_hundred(applied in 0u64..1_000_000, not_applied in 0u64..1_000_000) {
        prop_assume!(applied + not_applied > 0);
        let c = coverage(applied, not_applied).unwrap();
        prop_assert!((c.coverage_applied + c.coverage_not_applied - 100.0).abs() < 1e-9);
    }

    #[test]
    fn catalog_text_round_trips(seed in 0u64..1_000) {
        let catalog = Catalog::generate(seed);
        for set in catalog.sets() {
            for rule in set.rules() {
                prop_assert_eq!(&Rule::from_line(&rule.to_line(), 1).unwrap(), rule);
            }
            let back = RuleSet::from_text(&set.to_text(), set.version, set.environment).unwrap();
            prop_assert_eq!(&back, set);
        }
    }

    #[test]
    fn forest_ignores_tree_order(
        rows in prop::collection::vec((0u8..6, 0u8..6, 0u8..4), 12..60),
        seed in 0u64..1_000,
    ) {
        let y: Vec<u8> = rows.iter().map(|&(a, b, c)| u8::from(a + b > 5 || c == 0)).collect();
        prop_assume!(y.contains(&0) && y.contains(&1));
        let x: Vec<Vec<f64>> = rows
            .iter()
            .map(|&(a, b, c)| vec![f64::from(a), f64::from(b), f64::from(c)])
            .collect();
        let data = FeatureMatrix::new(x, y);
        let hp = ForestHyperparams { n_estimators: 9, ..Default::default() };
        let forest = RandomForest::<f64>::fit(&data, hp, seed, "").unwrap();
        let mut reversed = forest.clone();
        reversed.trees.reverse();
        for row in data.rows() {
            let p = forest.predict_proba(row);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((p - reversed.predict_proba(row)).abs() < 1e-12);
        }
    }
}
