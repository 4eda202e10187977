mod common;

use common::{read, tiny_config, tiny_data};
use sepattn::checkpoint::Checkpoint;
use sepattn::commands::{
    evaluate_checkpoint, inspect_attention, lambda_sweep, train, EvaluateOptions, ListOptions, CHECKPOINT_FILE,
    CONFIG_FILE, LOG_FILE, METRICS_FILE, RANKS_FILE,
};
use sepattn::config::RunConfig;
use sepattn::features::Mode;
use sepattn::metrics::{compute_metrics, RankResult};
use sepattn::model::ModelKind;
use sepattn::synth::LabelRule;

#[test]
fn identical_runs_write_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(&tmp.path().join("data"), LabelRule::Combined, None);
    let dir = tmp.path().join("run");
    let files = [CHECKPOINT_FILE, LOG_FILE, METRICS_FILE, CONFIG_FILE];
    train(&tiny_config(ModelKind::SepAttn, &data, &dir)).unwrap();
    let first: Vec<String> = files.iter().map(|f| read(dir.join(f))).collect();
    std::fs::remove_dir_all(&dir).unwrap();
    train(&tiny_config(ModelKind::SepAttn, &data, &dir)).unwrap();
    for (f, before) in files.iter().zip(first) {
        assert_eq!(read(dir.join(f)), before, "{f}");
    }
}

#[test]
fn run_directory_records_its_config() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(&tmp.path().join("data"), LabelRule::Sparse, None);
    let cfg = tiny_config(ModelKind::Concat, &data, &tmp.path().join("run"));
    train(&cfg).unwrap();
    assert_eq!(RunConfig::load(tmp.path().join("run").join(CONFIG_FILE)).unwrap(), cfg);
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(&tmp.path().join("data"), LabelRule::Dense, None);
    let full = tmp.path().join("full");
    train(&tiny_config(ModelKind::SepAttn, &data, &full)).unwrap();

    let first = tmp.path().join("first");
    let mut cfg = tiny_config(ModelKind::SepAttn, &data, &first);
    cfg.epochs = 1;
    train(&cfg).unwrap();
    let second = tmp.path().join("second");
    let mut cfg = tiny_config(ModelKind::SepAttn, &data, &second);
    cfg.checkpoint = Some(first.join(CHECKPOINT_FILE));
    train(&cfg).unwrap();

    assert_eq!(read(full.join(CHECKPOINT_FILE)), read(second.join(CHECKPOINT_FILE)));
    assert_eq!(read(full.join(LOG_FILE)), read(second.join(LOG_FILE)));
}

#[test]
fn evaluation_matches_metrics_recomputed_from_dumped_ranks() {
    let tmp = tempfile::tempdir().unwrap();
    let lists = ListOptions {
        list_size: 4,
        num_train: 120,
        num_test: 80,
    };
    let data = tiny_data(&tmp.path().join("data"), LabelRule::Combined, Some(lists));
    let mut cfg = tiny_config(ModelKind::SepAttn, &data, &tmp.path().join("run"));
    cfg.mode = Mode::Ranking;
    cfg.list_size = 4;
    cfg.epochs = 1;
    train(&cfg).unwrap();

    let weights = vec![1.0, 2.0, 3.0, 4.0];
    let out = evaluate_checkpoint(&EvaluateOptions {
        checkpoint: tmp.path().join("run").join(CHECKPOINT_FILE),
        dataset: data.test_path.clone(),
        compare: None,
        propensity: Some(weights),
        run_name: "r".into(),
        split: "test".into(),
        output_dir: Some(tmp.path().join("eval")),
    })
    .unwrap();
    let ranks = read(tmp.path().join("eval").join(RANKS_FILE));
    let results: Vec<RankResult> = ranks
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            RankResult {
                clicked_rank: f[1].parse().unwrap(),
                propensity_weight: f[2].parse().unwrap(),
            }
        })
        .collect();
    assert_eq!(results.len(), 80);
    let direct = compute_metrics(&results).unwrap();
    assert_eq!(out.evaluation.report, direct);
    assert!(read(tmp.path().join("eval").join(METRICS_FILE)).starts_with("run,split,metric,value\n"));
}

#[test]
fn uniform_propensity_makes_wmrr_equal_mrr() {
    let tmp = tempfile::tempdir().unwrap();
    let lists = ListOptions {
        list_size: 3,
        num_train: 60,
        num_test: 60,
    };
    let data = tiny_data(&tmp.path().join("data"), LabelRule::Sparse, Some(lists));
    let mut cfg = tiny_config(ModelKind::Concat, &data, &tmp.path().join("run"));
    cfg.mode = Mode::Ranking;
    cfg.list_size = 3;
    cfg.epochs = 1;
    cfg.propensity = Some(vec![2.5; 3]);
    let out = train(&cfg).unwrap();
    let r = &out.test_evaluation.unwrap().report;
    assert!((r.wmrr - r.mrr).abs() < 1e-12);
    assert!((r.warp - r.arp).abs() < 1e-12);
}

#[test]
fn comparison_against_itself_has_zero_mean_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(&tmp.path().join("data"), LabelRule::Sparse, None);
    let mut cfg = tiny_config(ModelKind::SparseOnly, &data, &tmp.path().join("run"));
    cfg.epochs = 1;
    train(&cfg).unwrap();
    let ck = tmp.path().join("run").join(CHECKPOINT_FILE);
    let out = evaluate_checkpoint(&EvaluateOptions {
        checkpoint: ck.clone(),
        dataset: data.test_path.clone(),
        compare: Some(ck),
        propensity: None,
        run_name: "self".into(),
        split: "test".into(),
        output_dir: None,
    });
    // identical per-query values have zero variance in their differences
    assert!(out.is_err() || out.unwrap().t_test.unwrap().mean_difference == 0.0);
}

#[test]
fn attention_inspection_requires_sepattn() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(&tmp.path().join("data"), LabelRule::Sparse, None);
    for kind in ModelKind::ALL {
        let dir = tmp.path().join(kind.to_string());
        let mut cfg = tiny_config(kind, &data, &dir);
        cfg.epochs = 1;
        train(&cfg).unwrap();
        let r = inspect_attention(&dir.join(CHECKPOINT_FILE), &data.test_path, 20, 3);
        if kind == ModelKind::SepAttn {
            let r = r.unwrap();
            assert_eq!(r.samples.len(), 20);
            assert_eq!(r.count, 200);
            assert!(r.samples.windows(2).all(|w| w[0].query_id < w[1].query_id));
            for s in &r.samples {
                assert!((s.alpha_sparse + s.alpha_dense - 1.0).abs() < 1e-12);
            }
            let csv = r.to_csv();
            assert!(csv.starts_with("query_id,alpha_sparse,alpha_dense\n"));
            assert_eq!(csv.lines().count(), 22);
        } else {
            assert!(r.unwrap_err().is_validation());
        }
    }
}

#[test]
fn lambda_sweep_runs_each_distinct_value_once() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(&tmp.path().join("data"), LabelRule::Combined, None);
    let mut cfg = tiny_config(ModelKind::SepAttn, &data, &tmp.path().join("sweep"));
    cfg.epochs = 1;
    let out = lambda_sweep(&cfg, &[0.0, 1.0, 1.0, 2.5]).unwrap();
    assert_eq!(out.points.len(), 3);
    assert_eq!(out.warnings.len(), 1);
    assert_eq!(out.metric_name, "accuracy");
    let csv = read(tmp.path().join("sweep").join("lambda_sweep.csv"));
    assert_eq!(csv.lines().next(), Some("lambda,metric,value"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn checkpoint_of_a_run_restores_its_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(&tmp.path().join("data"), LabelRule::Dense, None);
    let out = train(&tiny_config(ModelKind::DenseOnly, &data, &tmp.path().join("run"))).unwrap();
    let (model, _) = Checkpoint::load(tmp.path().join("run").join(CHECKPOINT_FILE))
        .unwrap()
        .restore()
        .unwrap();
    let test = sepattn::features::load_dataset(&data.test_path).unwrap();
    for ex in &test.examples[..20] {
        assert_eq!(
            model.predict_probability(ex).unwrap(),
            out.model.predict_probability(ex).unwrap()
        );
    }
}
