//! Training loop and the file-level operations behind the command-line tool.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{SweepParam, SweepSpec, TrainConfig};
use crate::data::{
    build_candidate_set, build_dataset_with, load_interactions, read_candidates, sample_triplet,
    write_candidates, CandidateSet, Dataset, Interaction, Split,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_candidates, format_metrics_line, EvalResult};
use crate::model::{init_embeddings, read_embeddings, write_embeddings, EmbeddingStore, Precision};
use crate::objective::{loss_and_grad, LossParts};
use crate::optimizer::{OptimizerKind, Optimizer};

pub const METRICS_FILE: &str = "metrics.tsv";
pub const LOSS_FILE: &str = "losses.tsv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const SWEEP_TABLE: &str = "sweep.tsv";

pub fn candidates_file(split: Split) -> String {
    format!("candidates.{split}.tsv")
}

/// A dataset with its fixed validation and test candidate lists.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub validation: CandidateSet,
    pub test: CandidateSet,
}

fn input_path(cfg: &TrainConfig) -> Result<&Path> {
    let path = cfg
        .input
        .as_deref()
        .ok_or_else(|| Error::config("input", "an interaction file is required"))?;
    if !path.is_file() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
        ));
    }
    Ok(path)
}

/// Loads the configured input file and builds candidates.
pub fn prepare(cfg: &TrainConfig) -> Result<Prepared> {
    let path = input_path(cfg)?;
    let interactions = load_interactions(path, &cfg.format_options())?;
    prepare_from(&interactions, cfg)
}

pub fn prepare_from(interactions: &[Interaction], cfg: &TrainConfig) -> Result<Prepared> {
    let dataset = build_dataset_with(interactions, &cfg.dataset_options())?;
    prepare_dataset(dataset, cfg)
}

pub fn prepare_dataset(dataset: Dataset, cfg: &TrainConfig) -> Result<Prepared> {
    let exec = cfg.execution();
    let validation = build_candidate_set(&dataset, Split::Validation, cfg.n_negatives, cfg.seed, exec)?;
    let test = build_candidate_set(&dataset, Split::Test, cfg.n_negatives, cfg.seed, exec)?;
    Ok(Prepared {
        dataset,
        validation,
        test,
    })
}

/// Mean per-triplet loss terms over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub pull_push: f64,
    pub distortion: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub validation: EvalResult,
    pub test: EvalResult,
}

/// Machine-readable description of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: TrainConfig,
    pub optimizer: OptimizerKind,
    pub n_users: usize,
    pub n_items: usize,
    pub n_train: usize,
    pub epochs_run: usize,
    pub batches_per_epoch: usize,
    pub best_epoch: usize,
    pub best_validation: EvalResult,
    pub test_at_best: EvalResult,
    pub final_loss: EpochLoss,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub summary: RunSummary,
    pub best: EmbeddingStore,
    pub last: EmbeddingStore,
    pub losses: Vec<EpochLoss>,
    pub evals: Vec<EvalRecord>,
}

/// Events reported while training.
#[derive(Debug, Clone, Copy)]
pub enum Progress<'a> {
    Epoch(&'a EpochLoss),
    Eval(&'a EvalRecord),
}

fn epoch_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Stream 0 initializes the embeddings.
    rng.set_stream(1);
    rng
}

fn apply_dropout(row: &[f64], mask: &[bool]) -> Vec<f64> {
    row.iter().zip(mask).map(|(v, &keep)| if keep { *v } else { 0.0 }).collect()
}

/// Trains on a prepared dataset. Nothing is written to disk.
pub fn train_on(prep: &Prepared, cfg: &TrainConfig, progress: &mut dyn FnMut(Progress)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ds = &prep.dataset;
    for cands in [&prep.validation, &prep.test] {
        if cands.lists.len() != ds.n_users() {
            return Err(Error::InvalidInput("candidate lists do not match the dataset".into()));
        }
    }
    let exec = cfg.execution();
    let loss_cfg = cfg.loss_config()?;
    let mut store = init_embeddings(
        ds.n_users(),
        ds.n_items(),
        cfg.init_config(),
        cfg.curvature()?,
        cfg.variant,
    )?;
    let mut optimizer = Optimizer::new(cfg.optim_config()?, &store)?;
    let mut rng = epoch_rng(cfg.seed);
    let batches = ds.n_train().div_ceil(cfg.batch_size);
    let steps = batches * cfg.batch_size;

    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut evals = Vec::new();
    let mut best: Option<(EvalRecord, EmbeddingStore)> = None;
    let mut mask = vec![true; cfg.dim];

    for epoch in 1..=cfg.epochs {
        let mut sum = LossParts::default();
        for _ in 0..steps {
            let t = sample_triplet(ds, &mut rng)?;
            let (parts, mut grads) = {
                let (u, vp, vn) = store.lookup_triplet(t)?;
                if cfg.dropout > 0.0 {
                    for m in mask.iter_mut() {
                        *m = rng.gen::<f64>() >= cfg.dropout;
                    }
                    let (u, vp, vn) = (apply_dropout(u, &mask), apply_dropout(vp, &mask), apply_dropout(vn, &mask));
                    loss_and_grad(&u, &vp, &vn, &loss_cfg)?
                } else {
                    loss_and_grad(u, vp, vn, &loss_cfg)?
                }
            };
            if cfg.dropout > 0.0 {
                for g in [&mut grads.g_user, &mut grads.g_pos, &mut grads.g_neg] {
                    for (v, &keep) in g.iter_mut().zip(&mask) {
                        if !keep {
                            *v = 0.0;
                        }
                    }
                }
            }
            optimizer.step(&mut store, t, &grads)?;
            sum.pull_push += parts.pull_push;
            sum.distortion += parts.distortion;
            sum.total += parts.total;
        }
        store.check_invariants()?;
        let n = steps as f64;
        let record = EpochLoss {
            epoch,
            pull_push: sum.pull_push / n,
            distortion: sum.distortion / n,
            total: sum.total / n,
        };
        if !record.total.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch} loss")));
        }
        progress(Progress::Epoch(&record));
        losses.push(record);

        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let validation = evaluate_candidates(&store, &prep.validation, cfg.k, exec)?;
            let test = evaluate_candidates(&store, &prep.test, cfg.k, exec)?;
            let rec = EvalRecord { epoch, validation, test };
            progress(Progress::Eval(&rec));
            let improved = best
                .as_ref()
                .map_or(true, |(b, _)| validation.ndcg > b.validation.ndcg);
            if improved {
                best = Some((rec, store.clone()));
            }
            evals.push(rec);
        }
    }

    let (best_rec, best_store) = best.ok_or_else(|| Error::config("epochs", "no evaluation was run"))?;
    let summary = RunSummary {
        config: cfg.clone(),
        optimizer: optimizer.config().kind,
        n_users: ds.n_users(),
        n_items: ds.n_items(),
        n_train: ds.n_train(),
        epochs_run: cfg.epochs,
        batches_per_epoch: batches,
        best_epoch: best_rec.epoch,
        best_validation: best_rec.validation,
        test_at_best: best_rec.test,
        final_loss: *losses.last().expect("at least one epoch"),
    };
    Ok(TrainOutcome {
        summary,
        best: best_store,
        last: store,
        losses,
        evals,
    })
}

fn output_dir(cfg: &TrainConfig) -> Result<PathBuf> {
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::config("output-dir", "an output directory is required"))?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the summary, logs and checkpoints of a finished run into `dir`.
pub fn write_outcome(dir: &Path, prep: &Prepared, outcome: &TrainOutcome) -> Result<()> {
    let ds = &prep.dataset;
    let mut metrics = String::new();
    for rec in &outcome.evals {
        metrics.push_str(&format_metrics_line(rec.epoch, &rec.validation));
        metrics.push('\n');
        metrics.push_str(&format_metrics_line(rec.epoch, &rec.test));
        metrics.push('\n');
    }
    write_text(&dir.join(METRICS_FILE), &metrics)?;

    let path = dir.join(LOSS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for l in &outcome.losses {
        writeln!(w, "{}\t{:.8}\t{:.8}\t{:.8}", l.epoch, l.pull_push, l.distortion, l.total)
            .map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    write_embeddings(
        &dir.join(BEST_CHECKPOINT),
        &outcome.best,
        ds,
        Precision::Lossless,
        Some(outcome.summary.best_epoch),
    )?;
    write_embeddings(
        &dir.join(FINAL_CHECKPOINT),
        &outcome.last,
        ds,
        Precision::Lossless,
        Some(outcome.summary.epochs_run),
    )?;
    write_candidates(&dir.join(candidates_file(Split::Validation)), ds, &prep.validation)?;
    write_candidates(&dir.join(candidates_file(Split::Test)), ds, &prep.test)?;

    let json = serde_json::to_string_pretty(&outcome.summary)
        .map_err(|e| Error::InvalidInput(format!("cannot serialize run summary: {e}")))?;
    write_text(&dir.join(SUMMARY_FILE), &(json + "\n"))
}

/// Full training run: load, train, and persist artifacts in `cfg.output_dir`.
pub fn run_train(cfg: &TrainConfig, progress: &mut dyn FnMut(Progress)) -> Result<TrainOutcome> {
    cfg.validate()?;
    input_path(cfg)?;
    let dir = output_dir(cfg)?;
    let prep = prepare(cfg)?;
    let outcome = train_on(&prep, cfg, progress)?;
    write_outcome(&dir, &prep, &outcome)?;
    Ok(outcome)
}

/// Metrics of a checkpoint, with the epoch recorded in its header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointEval {
    pub epoch: Option<usize>,
    pub result: EvalResult,
}

impl CheckpointEval {
    /// The metrics log line; epoch 0 when the checkpoint does not record one.
    pub fn log_line(&self) -> String {
        format_metrics_line(self.epoch.unwrap_or(0), &self.result)
    }
}

/// Re-evaluates a checkpoint on the configured dataset. Candidates come from
/// `candidates` when given, otherwise they are rebuilt from `cfg.seed`.
pub fn run_eval(
    checkpoint: &Path,
    cfg: &TrainConfig,
    split: Split,
    candidates: Option<&Path>,
) -> Result<CheckpointEval> {
    if cfg.k == 0 {
        return Err(Error::config("k", "must be >= 1"));
    }
    let path = input_path(cfg)?;
    let loaded = read_embeddings(checkpoint)?;
    let epoch = loaded.epoch;
    let interactions = load_interactions(path, &cfg.format_options())?;
    let ds = build_dataset_with(&interactions, &cfg.dataset_options())?;
    let store = loaded.into_store(&ds)?;
    let exec = cfg.execution();
    let cands = match candidates {
        Some(p) => read_candidates(p, &ds, split, cfg.seed)?,
        None => build_candidate_set(&ds, split, cfg.n_negatives, cfg.seed, exec)?,
    };
    Ok(CheckpointEval {
        epoch,
        result: evaluate_candidates(&store, &cands, cfg.k, exec)?,
    })
}

/// Rewrites a checkpoint in the export format (9 significant digits, no epoch).
pub fn run_export(checkpoint: &Path, out: &Path) -> Result<()> {
    let loaded = read_embeddings(checkpoint)?;
    loaded.write(out, Precision::Export)
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: Vec<(SweepParam, f64)>,
    pub runs: usize,
    pub best_val_ndcg: f64,
    pub best_val_ndcg_std: f64,
    pub test_ndcg: f64,
    pub test_ndcg_std: f64,
    pub test_hr: f64,
    pub test_hr_std: f64,
    /// `ok`, or the first error message of the point.
    pub status: String,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fmt_metric(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.5}")
    } else {
        "nan".into()
    }
}

pub fn format_sweep_table(spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let mut s = String::new();
    for (p, _) in &spec.axes {
        s.push_str(p.name());
        s.push('\t');
    }
    s.push_str("runs\tbest_val_ndcg10\tbest_val_ndcg10_std\ttest_ndcg10\ttest_ndcg10_std\ttest_hr10\ttest_hr10_std\tstatus\n");
    for r in rows {
        for (_, v) in &r.params {
            s.push_str(&v.to_string());
            s.push('\t');
        }
        let status = r.status.replace(['\t', '\n'], " ");
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.runs,
            fmt_metric(r.best_val_ndcg),
            fmt_metric(r.best_val_ndcg_std),
            fmt_metric(r.test_ndcg),
            fmt_metric(r.test_ndcg_std),
            fmt_metric(r.test_hr),
            fmt_metric(r.test_hr_std),
            status
        ));
    }
    s
}

/// Runs every grid point `spec.repeats` times on a shared dataset and
/// candidate cache. Seeds are `cfg.seed + r`; candidates stay fixed across
/// repeats. With an output directory, each run writes into
/// `point_<i>_rep_<r>/` and the table goes to `sweep.tsv`.
pub fn run_sweep(cfg: &TrainConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let prep = prepare(cfg)?;
    let dir = match &cfg.output_dir {
        Some(_) => Some(output_dir(cfg)?),
        None => None,
    };
    sweep_on(&prep, cfg, spec, dir.as_deref())
}

pub fn sweep_on(prep: &Prepared, cfg: &TrainConfig, spec: &SweepSpec, dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    let points = spec.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.repeats).map(move |r| (p, r)))
        .collect();
    let exec = cfg.execution();
    let results: Vec<Result<RunSummary>> = exec.map_slice(&jobs, |&(p, r)| {
        let mut run = cfg.clone();
        for &(param, v) in &points[p] {
            param.apply(&mut run, v);
        }
        run.seed = cfg.seed.wrapping_add(r as u64);
        // Each job already runs on the pool; keep its evaluation sequential.
        run.parallel = false;
        if let Some(d) = dir {
            run.output_dir = Some(d.join(format!("point_{p}_rep_{r}")));
        }
        let outcome = train_on(prep, &run, &mut |_| {})?;
        if let Some(out) = &run.output_dir {
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            write_outcome(out, prep, &outcome)?;
        }
        Ok(outcome.summary)
    });

    let mut rows = Vec::with_capacity(points.len());
    for (p, params) in points.iter().enumerate() {
        let mut val = Vec::new();
        let mut tn = Vec::new();
        let mut th = Vec::new();
        let mut status = String::from("ok");
        for (job, res) in jobs.iter().zip(&results) {
            if job.0 != p {
                continue;
            }
            match res {
                Ok(s) => {
                    val.push(s.best_validation.ndcg);
                    tn.push(s.test_at_best.ndcg);
                    th.push(s.test_at_best.hr);
                }
                Err(e) if status == "ok" => status = format!("error[{}]: {e}", e.category()),
                Err(_) => {}
            }
        }
        let (best_val_ndcg, best_val_ndcg_std) = mean_std(&val);
        let (test_ndcg, test_ndcg_std) = mean_std(&tn);
        let (test_hr, test_hr_std) = mean_std(&th);
        rows.push(SweepRow {
            params: params.clone(),
            runs: val.len(),
            best_val_ndcg,
            best_val_ndcg_std,
            test_ndcg,
            test_ndcg_std,
            test_hr,
            test_hr_std,
            status,
        });
    }
    if let Some(d) = dir {
        write_text(&d.join(SWEEP_TABLE), &format_sweep_table(spec, &rows))?;
    }
    Ok(rows)
}
