use ubsb_core::dataio::{feature_view, read_csv_from, stratified_kfold, write_csv_to, FeatureSet};
use ubsb_core::eval::{policy_lift, run_ablation, AblationSettings, LiftPolicy, Variant};
use ubsb_core::explain::{explain_records, CfConfig, FeatureDomains, Scorer};
use ubsb_core::models::{Family, TrainedModel};
use ubsb_core::synthgen::{generate, validate_dataset, MarginalConfig};
use ubsb_core::tune::{tune_and_refit, TuneSettings};

#[test]
fn csv_round_trip_keeps_every_value() {
    let cfg = MarginalConfig::default_config();
    let ds = generate(&cfg, 800, 11).unwrap().to_dataset();
    let mut buf = Vec::new();
    write_csv_to(&ds, &mut buf).unwrap();
    let back = read_csv_from(buf.as_slice()).unwrap();
    assert_eq!(back.rows, ds.rows);
    assert!(validate_dataset(&back, &cfg).violations.is_empty());
}

#[test]
fn small_ablation_then_lift() {
    let cfg = MarginalConfig::default_config();
    let ds = generate(&cfg, 2000, 3).unwrap().to_dataset();
    let plan = stratified_kfold(&ds.labels(), 2, 3).unwrap();
    let settings = AblationSettings { trials: 2, inner_valid_fraction: 0.2, reference_date: cfg.reference_date, seed: 3 };
    let families = [Family::GbdtLgbm, Family::Logreg];
    let report = run_ablation(&ds, &families, &plan, &settings).unwrap();

    assert_eq!(report.rows.len(), 4);
    for row in &report.rows {
        let m = row.pooled;
        for v in [m.auc, m.f1, m.precision, m.recall] {
            assert!((0.0..=1.0).contains(&v), "{row:?}");
        }
        assert_eq!(row.folds.len(), 2);
    }
    let csv = report.metrics_csv();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.contains("logreg (Full)"));

    for fam in &report.families {
        assert_eq!(fam.oof.records.len(), ds.len());
        for (r, &fold) in fam.oof.records.iter().zip(&plan.assignments) {
            assert_eq!(r.fold, fold);
        }
        let d = &fam.delong;
        assert!((0.0..=1.0).contains(&d.p_value));
        assert!((d.delta - (d.auc_b - d.auc_a)).abs() < 1e-12);

        let same = fam.oof.with_full_as_demo();
        let lift = policy_lift(&same, LiftPolicy::ApprovalRate { percent: 10.0 }, Some((200, 1))).unwrap();
        let ci = lift.good_approval_ci.unwrap();
        assert_eq!((lift.mean_good_approval_delta, ci.lo, ci.hi), (0.0, 0.0, 0.0));

        let all = policy_lift(&fam.oof, LiftPolicy::ApprovalRate { percent: 100.0 }, None).unwrap();
        assert_eq!(all.mean_good_approval_delta, 0.0);
        assert_eq!(all.mean_bad_rejection_delta, 0.0);

        let ci = policy_lift(&fam.oof, LiftPolicy::DefaultRate { percent: 5.0 }, Some((200, 2)))
            .unwrap()
            .bad_rejection_ci
            .unwrap();
        assert!(ci.lo <= ci.hi);
    }
    assert_eq!(report.row(Family::Logreg, Variant::Demo).unwrap().variant, Variant::Demo);
}

#[test]
fn trained_model_survives_json_and_explains() {
    let cfg = MarginalConfig::default_config();
    let ds = generate(&cfg, 1500, 8).unwrap().to_dataset();
    let view = feature_view(&ds, &FeatureSet::full()).unwrap();
    let settings = TuneSettings { n_trials: 3, inner_valid_fraction: 0.2, seed: 8 };
    let (model, _, _) = tune_and_refit(&view, Family::DecisionTree, cfg.reference_date, &settings).unwrap();

    let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
    let scores = model.score(&view.rows).unwrap();
    assert_eq!(back.score(&view.rows).unwrap(), scores);

    let t = model.threshold();
    let records: Vec<_> = (0..view.rows.len())
        .filter(|&i| scores[i] > t)
        .take(5)
        .map(|i| (ds.rows[i].id, view.rows[i].clone()))
        .collect();
    assert!(!records.is_empty());
    let domains = FeatureDomains::fit(&view).unwrap();
    let cf = CfConfig { k: 2, generations: 40, seed: 8, ..CfConfig::default() };
    let sets = explain_records(&back, &domains, &records, &cf).unwrap();
    for set in &sets {
        for c in set.valid_candidates() {
            let rescored = back.score(std::slice::from_ref(&c.values)).unwrap()[0];
            assert!(rescored <= t);
            for (j, col) in set.columns.iter().enumerate() {
                if FeatureSet::DEMOGRAPHIC.contains(col) {
                    assert_eq!(c.values[j], set.original[j], "{col} edited");
                }
            }
        }
    }
}
