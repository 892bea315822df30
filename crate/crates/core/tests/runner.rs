use std::fs;
use std::path::Path;

use hyperml::config::{SweepSpec, TrainConfig};
use hyperml::runner::{
    self, prepare_from, run_eval, run_export, run_sweep, run_train, train_on, BEST_CHECKPOINT, METRICS_FILE,
    SUMMARY_FILE,
};
use hyperml::synthetic::{planted_blocks, random_interactions, to_tsv};
use hyperml::{Error, Split, Variant};

fn write_dataset(dir: &Path, data: &[hyperml::Interaction]) -> std::path::PathBuf {
    let path = dir.join("data.tsv");
    fs::write(&path, to_tsv(data)).unwrap();
    path
}

fn small_config(dir: &Path, input: &Path) -> TrainConfig {
    TrainConfig {
        input: Some(input.to_path_buf()),
        output_dir: Some(dir.join("run")),
        dim: 8,
        batch_size: 64,
        epochs: 6,
        eval_every: 2,
        n_negatives: 20,
        lr: 0.05,
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn training_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_dataset(tmp.path(), &random_interactions(60, 80, 10, 1).unwrap());
    let cfg = small_config(tmp.path(), &input);
    let out = run_train(&cfg, &mut |_| {}).unwrap();
    let run = cfg.output_dir.clone().unwrap();
    for f in [SUMMARY_FILE, METRICS_FILE, BEST_CHECKPOINT, runner::FINAL_CHECKPOINT, runner::LOSS_FILE] {
        assert!(run.join(f).is_file(), "{f}");
    }
    // Evaluations at epochs 2, 4 and 6, two lines each.
    let metrics = fs::read_to_string(run.join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().count(), 6);
    assert!(metrics.lines().all(|l| l.split('\t').count() == 4));

    // Re-evaluating the best checkpoint reproduces the summary and the log line.
    let again = run_eval(&run.join(BEST_CHECKPOINT), &cfg, Split::Test, None).unwrap();
    assert_eq!(again.result, out.summary.test_at_best);
    assert_eq!(again.epoch, Some(out.summary.best_epoch));
    assert!(metrics.lines().any(|l| l == again.log_line()));
    let cached = run_eval(
        &run.join(BEST_CHECKPOINT),
        &cfg,
        Split::Validation,
        Some(&run.join(runner::candidates_file(Split::Validation))),
    )
    .unwrap();
    assert_eq!(cached.result, out.summary.best_validation);

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["config"]["dim"], 8);
    assert_eq!(summary["config"]["gamma"], 0.75);
    assert_eq!(summary["best_epoch"], out.summary.best_epoch);
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_dataset(tmp.path(), &random_interactions(40, 60, 8, 2).unwrap());
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let mut cfg = small_config(tmp.path(), &input);
        cfg.output_dir = Some(tmp.path().join(name));
        run_train(&cfg, &mut |_| {}).unwrap();
        let dir = cfg.output_dir.unwrap();
        let export = dir.join("export.txt");
        run_export(&dir.join(BEST_CHECKPOINT), &export).unwrap();
        let summary = fs::read_to_string(dir.join(SUMMARY_FILE)).unwrap();
        outputs.push((summary.replace(&format!("/{name}\""), "\""), fs::read(export).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn export_has_header_and_nine_digit_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_dataset(tmp.path(), &random_interactions(30, 50, 6, 3).unwrap());
    let mut cfg = small_config(tmp.path(), &input);
    cfg.variant = Variant::Cml;
    run_train(&cfg, &mut |_| {}).unwrap();
    let out = tmp.path().join("emb.txt");
    run_export(&cfg.output_dir.unwrap().join(BEST_CHECKPOINT), &out).unwrap();
    let text = fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(' ').collect();
    assert_eq!(header.len(), 5);
    assert_eq!(header[2..], ["8", "1", "cml"]);
    let n_users: usize = header[0].parse().unwrap();
    let n_items: usize = header[1].parse().unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), n_users + n_items);
    for row in rows {
        let f: Vec<&str> = row.split(' ').collect();
        assert_eq!(f.len(), 2 + 8);
        assert!(f[0] == "u" || f[0] == "i");
        for v in &f[2..] {
            let digits = v.trim_start_matches('-').split('e').next().unwrap().replace('.', "");
            assert!(digits.trim_start_matches('0').len() <= 9, "{v}");
        }
    }
}

#[test]
fn missing_input_fails_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), &tmp.path().join("absent.tsv"));
    let err = run_train(&cfg, &mut |_| {}).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert!(!cfg.output_dir.unwrap().exists());
}

#[test]
fn separable_instance_reaches_near_zero_hinge() {
    let data = planted_blocks(5, 10, 2, 0).unwrap();
    let cfg = TrainConfig {
        dim: 2,
        gamma: 0.0,
        epochs: 500,
        eval_every: 500,
        n_negatives: 5,
        ..Default::default()
    };
    let prep = prepare_from(&data, &cfg).unwrap();
    let out = train_on(&prep, &cfg, &mut |_| {}).unwrap();
    let hinge = out.summary.final_loss.pull_push;
    assert!(hinge < 0.01 * cfg.margin, "final hinge {hinge}");
}

#[test]
fn sweep_emits_one_row_per_point_and_survives_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_dataset(tmp.path(), &random_interactions(30, 60, 8, 4).unwrap());
    let mut cfg = small_config(tmp.path(), &input);
    cfg.epochs = 2;
    let spec = SweepSpec::parse(&["c=0.5,1,2,4,8".into()], 1).unwrap();
    let rows = run_sweep(&cfg, &spec).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.status == "ok"));
    let table = fs::read_to_string(cfg.output_dir.as_ref().unwrap().join(runner::SWEEP_TABLE)).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert!(table.starts_with("c\truns\tbest_val_ndcg10"));

    // HyperTS cannot run at c = 0; that point fails and the others still run.
    cfg.variant = Variant::HyperTs;
    let spec = SweepSpec::parse(&["c=0,1".into()], 2).unwrap();
    let rows = run_sweep(&cfg, &spec).unwrap();
    assert!(rows[0].status.starts_with("error[config]"), "{}", rows[0].status);
    assert_eq!(rows[0].runs, 0);
    assert_eq!((rows[1].status.as_str(), rows[1].runs), ("ok", 2));
}
