use deeprep::dataio::save_csv;
use deeprep::harness::{
    emit_loss_curves, load_config, parse_config, run_experiment, run_on_dataset, write_report_files,
    ExperimentReport, Representation,
};
use deeprep::encoders::EncoderKind;
use deeprep::preprocess::make_folds;
use deeprep::supervised::LearnerKind;
use deeprep::synthetic::{latent_factor, mixed_records, LatentFactorSpec};
use proptest::prelude::*;

const SMALL: &str = r#"
seed = 3
[dataset]
path = "data.csv"
[encoders.common]
hidden = [[12]]
latent_dim = 3
epochs = 8
[learners.rf]
n_trees = 20
[learners.svm]
epochs = 20
"#;

fn small_data() -> deeprep::dataio::TabularDataset {
    latent_factor(&LatentFactorSpec { n: 150, p: 12, ..Default::default() })
        .unwrap()
        .to_dataset()
}

#[test]
fn cell_count_and_recomputable_statistics() {
    let cfg = parse_config(SMALL).unwrap();
    let (report, timing) = run_on_dataset(&cfg, &small_data()).unwrap();
    assert_eq!(report.cells.len(), 5 * 3);
    assert_eq!(timing.fold_secs.len(), 5);
    for c in &report.cells {
        assert!(c.is_ok(), "{:?}", c.failure);
        assert_eq!(c.fold_rmse.len(), 5);
        let mean = c.fold_rmse.iter().sum::<f64>() / 5.0;
        let sd = (c.fold_rmse.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
        assert!((c.mean - mean).abs() < 1e-12);
        assert!((c.sd.unwrap() - sd).abs() < 1e-12);
        assert_eq!(c.selected.len(), 5);
    }
    // One history per encoder kind and fold.
    assert_eq!(report.histories.len(), 4 * 5);
    let back = ExperimentReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back.to_json().unwrap(), report.to_json().unwrap());
}

#[test]
fn baseline_only_mode_has_just_the_original_row() {
    let cfg = parse_config(&format!("{SMALL}\n[encoders]\nkinds = []\n")).unwrap();
    let (report, _) = run_on_dataset(&cfg, &small_data()).unwrap();
    assert_eq!(report.cells.len(), 3);
    assert!(report.cells.iter().all(|c| c.representation == Representation::Original));
    assert!(report.histories.is_empty());
}

#[test]
fn diverging_encoder_fails_its_cells_but_not_the_run() {
    let text = SMALL.replace("epochs = 8", "epochs = 8\n[encoders.vae]\nlr = 1e10\noptimizer = \"sgd\"");
    let cfg = parse_config(&format!("{text}\n[encoders]\nkinds = [\"ssae\", \"vae\"]\n")).unwrap();
    let (report, _) = run_on_dataset(&cfg, &small_data()).unwrap();
    let vae = report.cell(Representation::Encoded(EncoderKind::Vae), LearnerKind::Rf).unwrap();
    assert!(!vae.is_ok());
    assert!(vae.failure.as_ref().unwrap().contains("fold"), "{:?}", vae.failure);
    assert!(report.cell(Representation::Encoded(EncoderKind::Ssae), LearnerKind::Rf).unwrap().is_ok());
    assert!(report.cell(Representation::Original, LearnerKind::Rf).unwrap().is_ok());
    let table = deeprep::harness::format_report(&report);
    assert!(table.contains("| VAE | —("), "{table}");
}

#[test]
fn csv_round_trip_through_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let ds = mixed_records(120, 0.05, 2).unwrap();
    save_csv(&ds, dir.path().join("records.csv")).unwrap();
    let text = r#"
seed = 1
folds = 3
[dataset]
path = "records.csv"
target = "length_of_stay"
categorical = ["ward", "sex"]
[embedding]
dim = 2
epochs = 20
[encoders]
kinds = ["aae"]
[encoders.common]
hidden = [[6]]
latent_dim = 2
epochs = 5
[learners]
kinds = ["lasso"]
"#;
    std::fs::write(dir.path().join("exp.toml"), text).unwrap();
    let cfg = load_config(dir.path().join("exp.toml")).unwrap();
    let (report, _) = run_experiment(&cfg).unwrap();
    assert_eq!(report.cells.len(), 2);
    assert!(report.audit.passed());

    let out = dir.path().join("out");
    write_report_files(&report, &out).unwrap();
    let curves = emit_loss_curves(&report.histories, out.join("curves")).unwrap();
    assert_eq!(curves.len(), 3);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("representation,learner,mean,sd,fold_1,fold_2,fold_3,failure\n"));
    assert_eq!(csv.lines().count(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fold_plans_partition_rows(n in 2usize..600, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let plan = make_folds(n, k, seed).unwrap();
        prop_assert_eq!(plan.folds.len(), k);
        let mut test_hits = vec![0; n];
        let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in &plan.folds {
            let mut hits = vec![0; n];
            for &i in f.train.iter().chain(&f.validation).chain(&f.test) {
                hits[i] += 1;
            }
            prop_assert!(hits.iter().all(|&h| h == 1));
            f.test.iter().for_each(|&i| test_hits[i] += 1);
        }
        prop_assert!(test_hits.iter().all(|&h| h == 1));
        prop_assert_eq!(&plan, &make_folds(n, k, seed).unwrap());
    }
}
