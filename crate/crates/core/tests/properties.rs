use interpfn_core::expr::{ComplexityKind, ComplexityMeasure};
use interpfn_core::select::{
    lambda_search, make_cv_plan, mc_statistic, select_final, CandidateCvRecord, LambdaGrid, Spearman,
};
use interpfn_core::stats::{average_ranks, normal_quantile, pearson_correlation, spearman_correlation};
use proptest::prelude::*;

fn record(model_id: usize, r: f64, loss_cv: f64, loss_cv_val: f64) -> CandidateCvRecord {
    CandidateCvRecord {
        model_id,
        form: format!("m{model_id}"),
        r: ComplexityMeasure { kind: ComplexityKind::TotalParams, value: r },
        n_params: r as usize,
        loss_cv,
        loss_cv_val,
        fold_train: vec![loss_cv],
        fold_val: vec![loss_cv_val],
        acc_cv: None,
        acc_cv_val: None,
        failed_folds: Vec::new(),
    }
}

fn records() -> impl Strategy<Value = Vec<CandidateCvRecord>> {
    prop::collection::vec((1u32..12, 1e-4f64..0.1, 1e-4f64..0.1), 3..20).prop_map(|v| {
        v.into_iter().enumerate().map(|(i, (r, a, b))| record(i + 1, r as f64, a, b)).collect()
    })
}

proptest! {
    #[test]
    fn cv_plan_is_a_balanced_partition(n in 2usize..400, d in 2usize..12, seed in any::<u64>()) {
        prop_assume!(d <= n);
        let plan = make_cv_plan(n, d, seed).unwrap();
        let folds = plan.folds();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        for f in 0..d {
            let mut all = plan.train_rows(f);
            all.extend(plan.val_rows(f));
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        prop_assert_eq!(plan, make_cv_plan(n, d, seed).unwrap());
    }

    #[test]
    fn selection_at_zero_weight_is_the_best_validation_loss(recs in records()) {
        let s = select_final(&recs, 0.0, 0.01, 0.012).unwrap();
        let best = recs.iter().map(|r| r.loss_cv_val).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(recs[s.selected_index].loss_cv_val, best);
    }

    #[test]
    fn selected_complexity_never_grows_with_the_weight(recs in records()) {
        let mut last = f64::INFINITY;
        for lambda in LambdaGrid::default().points().unwrap() {
            let s = select_final(&recs, lambda, 0.01, 0.012).unwrap();
            let r = recs[s.selected_index].r.value;
            prop_assert!(r <= last, "r rose from {} to {} at lambda {}", last, r, lambda);
            last = r;
        }
    }

    #[test]
    fn mc_is_increasing_in_the_weight(mse in 1e-5f64..1.0, full in 1e-5f64..1.0, r in 0.5f64..100.0, l in 0.0f64..5.0) {
        prop_assert!(mc_statistic(mse, full, l + 0.01, r) > mc_statistic(mse, full, l, r));
    }

    #[test]
    fn lambda_search_returns_the_first_maximizer(recs in records()) {
        let s = lambda_search(&recs, 0.01, 0.012, &LambdaGrid::default(), &Spearman).unwrap();
        let best = s.curve.iter().filter_map(|(_, c)| *c).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((s.best_correlation - best).abs() <= 1e-12);
        let first = s.curve.iter().find(|(_, c)| c.is_some_and(|c| c >= best - 1e-12)).unwrap().0;
        prop_assert_eq!(s.lambda_opt, first);
    }

    #[test]
    fn correlations_are_bounded_and_rank_invariant(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        if let Ok(c) = pearson_correlation(&a, &b) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        }
        if let Ok(s) = spearman_correlation(&a, &b) {
            let cubed: Vec<f64> = a.iter().map(|x| x.powi(3)).collect();
            prop_assert!((spearman_correlation(&cubed, &b).unwrap() - s).abs() < 1e-12);
        }
        let ranks = average_ranks(&a);
        let n = a.len() as f64;
        prop_assert!((ranks.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn normal_quantile_is_increasing(p in 1e-12f64..0.5, dp in 1e-6f64..0.4) {
        prop_assert!(normal_quantile(p + dp).unwrap().0 > normal_quantile(p).unwrap().0);
    }
}

#[test]
fn tied_correlations_resolve_to_the_smallest_weight() {
    // equal complexities: MC differs from the loss ratio by a constant, so
    // every weight gives the same correlation
    let recs: Vec<CandidateCvRecord> =
        (1..=5).map(|i| record(i, 3.0, 0.01 * i as f64, 0.011 * (6 - i) as f64)).collect();
    let s = lambda_search(&recs, 0.01, 0.01, &LambdaGrid::default(), &Spearman).unwrap();
    assert_eq!(s.lambda_opt, 0.0);
}
