//! End-to-end operations behind the `sepattn` binary: dataset generation,
//! training, evaluation, attention inspection, λ sweeps and gradient checks.
//!
//! Each function takes plain options, writes its files and returns what it
//! computed so callers can assert on it directly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluate::{evaluate, fit_dense_stats, normalize_examples, Evaluation};
use crate::features::{
    load_dataset_with, write_dataset, Dataset, DenseStats, Document, Mode, RankingExample, SparseFeatures,
    TextFeaturizer, Vocab,
};
use crate::metrics::{metrics_csv, paired_t_test, MetricRow, PairedTTest, PropensityTable};
use crate::model::{Model, ModelConfig, ModelKind};
use crate::nn::FiniteDiffReport;
use crate::synth::{
    gen_dataset, gen_embedding_table, gen_ranking_lists, load_sidecar, verify_labels, write_sidecar, LabelRule,
    Sidecar, SynthConfig,
};
use crate::train::{EpochRecord, TrainSettings, Trainer, TrainingLog};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const SIDECAR_FILE: &str = "sidecar.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const LOG_FILE: &str = "training_log.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const RANKS_FILE: &str = "ranks.csv";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Ranking-list variant of the synthetic generator.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ListOptions {
    pub list_size: usize,
    pub num_train: usize,
    pub num_test: usize,
}

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub synth: SynthConfig,
    pub rule: LabelRule,
    pub out_dir: PathBuf,
    /// Emit ranking lists instead of single-document examples.
    pub lists: Option<ListOptions>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateOutput {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub train_count: usize,
    pub test_count: usize,
    /// Labels that disagree with the rule re-applied to the written files.
    pub label_mismatches: usize,
}

/// Writes `train.jsonl`, `test.jsonl` and `sidecar.json`, then re-reads both
/// splits and re-derives every label.
pub fn generate(opts: &GenerateOptions) -> Result<GenerateOutput> {
    opts.synth.validate()?;
    let table = gen_embedding_table(&opts.synth)?;
    let (train, test) = match opts.lists {
        None => {
            let s = gen_dataset(&opts.synth, opts.rule, &table)?;
            (s.train, s.test)
        }
        Some(l) => (
            gen_ranking_lists(&opts.synth, opts.rule, &table, l.list_size, l.num_train, 0)?,
            gen_ranking_lists(&opts.synth, opts.rule, &table, l.list_size, l.num_test, 1)?,
        ),
    };
    create_dir(&opts.out_dir)?;
    let out = GenerateOutput {
        train_path: opts.out_dir.join(TRAIN_FILE),
        test_path: opts.out_dir.join(TEST_FILE),
        sidecar_path: opts.out_dir.join(SIDECAR_FILE),
        train_count: train.len(),
        test_count: test.len(),
        label_mismatches: 0,
    };
    write_dataset(&out.train_path, &train)?;
    write_dataset(&out.test_path, &test)?;
    write_sidecar(
        &out.sidecar_path,
        &Sidecar {
            rule: opts.rule,
            config: opts.synth.clone(),
            table: table.clone(),
        },
    )?;
    let featurizer = TextFeaturizer::with_default_orders(Vocab::hashed(1)?);
    let mut mismatches = 0;
    for path in [&out.train_path, &out.test_path] {
        let back = load_dataset_with(path, featurizer.clone())?;
        mismatches += verify_labels(&back, &table, opts.rule)?;
    }
    Ok(GenerateOutput {
        label_mismatches: mismatches,
        ..out
    })
}

/// Featurizer for `query_text` records: hashed n-grams filling every
/// non-padding row of a `vocab_size`-row table.
pub fn default_featurizer(vocab_size: usize) -> Result<TextFeaturizer> {
    let buckets = u32::try_from(vocab_size.saturating_sub(1))
        .map_err(|_| Error::config("vocab_size too large for hashed features"))?;
    Ok(TextFeaturizer::with_default_orders(Vocab::hashed(buckets)?))
}

fn load_split(path: &Path, model: &ModelConfig) -> Result<Dataset> {
    let data = load_dataset_with(path, default_featurizer(model.vocab_size)?)?;
    let h = &data.header;
    if h.mode != model.mode || h.list_size != model.list_size || h.dense_dim != model.dense_dim {
        return Err(Error::validation(format!(
            "{}: dataset is {} with lists of {} and {} dense features, model expects {} with {} and {}",
            path.display(),
            h.mode,
            h.list_size,
            h.dense_dim,
            model.mode,
            model.list_size,
            model.dense_dim
        )));
    }
    if data.is_empty() {
        return Err(Error::validation(format!("{}: no examples", path.display())));
    }
    Ok(data)
}

fn propensity_table(cfg: &RunConfig) -> Result<Option<PropensityTable>> {
    cfg.propensity.clone().map(PropensityTable::new).transpose()
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: Model,
    pub log: TrainingLog,
    pub train_evaluation: Evaluation,
    pub test_evaluation: Option<Evaluation>,
    pub normalization: Option<DenseStats>,
    pub metrics: Vec<MetricRow>,
}

impl TrainOutput {
    pub fn final_checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.model, None, self.log.records.len(), self.normalization.as_ref())
    }
}

/// Trains per `cfg`. When `cfg.output_dir` is set it receives the exact
/// config, a checkpoint after every epoch, the training log, wall times and
/// the final metrics. When `cfg.checkpoint` names an existing file training
/// resumes from it.
pub fn train(cfg: &RunConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let model_cfg = cfg.model_config();
    let train_path = cfg
        .train
        .as_ref()
        .ok_or_else(|| Error::config("train: no training dataset configured"))?;
    let mut train = load_split(train_path, &model_cfg)?;
    let mut test = cfg.test.as_ref().map(|p| load_split(p, &model_cfg)).transpose()?;
    let propensity = propensity_table(cfg)?;

    let resume = match &cfg.checkpoint {
        Some(p) if p.exists() => Some(Checkpoint::load(p)?),
        _ => None,
    };
    let settings = TrainSettings {
        learning_rate: cfg.learning_rate,
        lambda: cfg.lambda,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    let mut log = TrainingLog::default();
    let (mut trainer, normalization) = match resume {
        Some(ck) => {
            if ck.model != model_cfg {
                return Err(Error::validation("checkpoint model does not match the run configuration"));
            }
            let (model, optimizer) = ck.restore()?;
            let optimizer = optimizer.ok_or_else(|| Error::validation("checkpoint has no optimizer state"))?;
            if let Some(prev) = cfg.checkpoint.as_ref().and_then(|p| p.parent()).map(|d| d.join(LOG_FILE)) {
                if let Ok(text) = fs::read_to_string(&prev) {
                    log = TrainingLog::from_csv(&text)?;
                    log.records.retain(|r| r.epoch <= ck.epoch);
                }
            }
            (Trainer::resume(model, optimizer, ck.epoch, settings)?, ck.normalization)
        }
        None => {
            let mut model = Model::new(model_cfg.clone(), cfg.seed)?;
            if let Some(path) = &cfg.embeddings {
                let side = load_sidecar(path)?;
                if side.table.vectors.shape() != [cfg.vocab_size, cfg.embedding_dim] {
                    return Err(Error::validation(format!(
                        "{}: table is {:?}, config needs {}×{}",
                        path.display(),
                        side.table.vectors.shape(),
                        cfg.vocab_size,
                        cfg.embedding_dim
                    )));
                }
                model.load_pretrained_embeddings(&side.table.vectors)?;
            }
            let stats = cfg.normalize_dense.then(|| fit_dense_stats(&train.examples)).transpose()?;
            (Trainer::new(model, settings)?, stats)
        }
    };
    if let Some(stats) = &normalization {
        normalize_examples(stats, &mut train.examples)?;
        if let Some(t) = test.as_mut() {
            normalize_examples(stats, &mut t.examples)?;
        }
    }

    if let Some(dir) = &cfg.output_dir {
        create_dir(dir)?;
        cfg.save(dir.join(CONFIG_FILE))?;
    }
    while trainer.epoch() < cfg.epochs {
        let start = Instant::now();
        let train_loss = trainer.train_epoch(&train.examples)?;
        let train_eval = evaluate(trainer.model(), &train.examples, propensity.as_ref())?;
        let test_eval = test
            .as_ref()
            .map(|t| evaluate(trainer.model(), &t.examples, propensity.as_ref()))
            .transpose()?;
        let attention = test_eval.as_ref().and_then(|e| e.attention);
        log.push(EpochRecord {
            epoch: trainer.epoch(),
            train_loss,
            train_metric: train_eval.primary_metric(),
            test_metric: test_eval.as_ref().map(Evaluation::primary_metric),
            mean_alpha_sparse: attention.map(|a| a.mean_alpha_sparse),
            mean_alpha_dense: attention.map(|a| a.mean_alpha_dense),
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        if let Some(dir) = &cfg.output_dir {
            Checkpoint::capture(
                trainer.model(),
                Some(trainer.optimizer()),
                trainer.epoch(),
                normalization.as_ref(),
            )
            .save(dir.join(CHECKPOINT_FILE))?;
            write(&dir.join(LOG_FILE), &log.to_csv())?;
            write(&dir.join(TIMING_FILE), &log.timing_csv())?;
        }
    }

    let model = trainer.into_model();
    let train_evaluation = evaluate(&model, &train.examples, propensity.as_ref())?;
    let test_evaluation = test
        .as_ref()
        .map(|t| evaluate(&model, &t.examples, propensity.as_ref()))
        .transpose()?;
    let run = cfg.model.to_string();
    let mut metrics = MetricRow::from_report(&run, "train", &train_evaluation.report);
    if let Some(t) = &test_evaluation {
        metrics.extend(MetricRow::from_report(&run, "test", &t.report));
    }
    if let Some(dir) = &cfg.output_dir {
        if cfg.epochs == 0 {
            Checkpoint::capture(&model, None, 0, normalization.as_ref()).save(dir.join(CHECKPOINT_FILE))?;
        }
        write(&dir.join(LOG_FILE), &log.to_csv())?;
        write(&dir.join(TIMING_FILE), &log.timing_csv())?;
        write(&dir.join(METRICS_FILE), &metrics_csv(&metrics))?;
    }
    Ok(TrainOutput {
        model,
        log,
        train_evaluation,
        test_evaluation,
        normalization,
        metrics,
    })
}

#[derive(Clone, Debug)]
pub struct EvaluateOptions {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    /// Second checkpoint for a paired t-test on per-query reciprocal ranks.
    pub compare: Option<PathBuf>,
    pub propensity: Option<Vec<f64>>,
    pub run_name: String,
    pub split: String,
    /// Receives `metrics.csv` and `ranks.csv`.
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct EvaluateOutput {
    pub evaluation: Evaluation,
    pub rows: Vec<MetricRow>,
    pub t_test: Option<PairedTTest>,
}

fn load_for_eval(checkpoint: &Path, dataset: &Path) -> Result<(Model, Dataset)> {
    let ck = Checkpoint::load(checkpoint)?;
    let (model, _) = ck.restore()?;
    let mut data = load_split(dataset, model.config())?;
    if let Some(stats) = &ck.normalization {
        normalize_examples(stats, &mut data.examples)?;
    }
    Ok((model, data))
}

pub fn evaluate_checkpoint(opts: &EvaluateOptions) -> Result<EvaluateOutput> {
    let (model, data) = load_for_eval(&opts.checkpoint, &opts.dataset)?;
    let propensity = opts.propensity.clone().map(PropensityTable::new).transpose()?;
    let evaluation = evaluate(&model, &data.examples, propensity.as_ref())?;
    let mut rows = MetricRow::from_report(&opts.run_name, &opts.split, &evaluation.report);
    let t_test = match &opts.compare {
        Some(other) => {
            let (m2, d2) = load_for_eval(other, &opts.dataset)?;
            let e2 = evaluate(&m2, &d2.examples, propensity.as_ref())?;
            let t = paired_t_test(&evaluation.reciprocal_ranks(), &e2.reciprocal_ranks())?;
            for (metric, value) in [("ttest_t", t.t_statistic), ("ttest_p", t.p_value)] {
                rows.push(MetricRow {
                    run: opts.run_name.clone(),
                    split: opts.split.clone(),
                    metric: metric.into(),
                    value,
                });
            }
            Some(t)
        }
        None => None,
    };
    if let Some(dir) = &opts.output_dir {
        create_dir(dir)?;
        write(&dir.join(METRICS_FILE), &metrics_csv(&rows))?;
        let mut ranks = String::from("query_id,clicked_rank,propensity_weight\n");
        for (i, o) in evaluation.outcomes.iter().enumerate() {
            if let Some(r) = o.clicked_rank {
                let _ = writeln!(ranks, "{i},{r},{}", o.propensity_weight);
            }
        }
        write(&dir.join(RANKS_FILE), &ranks)?;
    }
    Ok(EvaluateOutput {
        evaluation,
        rows,
        t_test,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRow {
    pub query_id: usize,
    pub alpha_sparse: f64,
    pub alpha_dense: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionReport {
    /// Randomly chosen examples, in dataset order.
    pub samples: Vec<AttentionRow>,
    pub mean_alpha_sparse: f64,
    pub mean_alpha_dense: f64,
    pub count: usize,
}

impl AttentionReport {
    /// Sampled rows followed by a `mean` row over the whole dataset.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_id,alpha_sparse,alpha_dense\n");
        for r in &self.samples {
            let _ = writeln!(out, "{},{},{}", r.query_id, r.alpha_sparse, r.alpha_dense);
        }
        let _ = writeln!(out, "mean,{},{}", self.mean_alpha_sparse, self.mean_alpha_dense);
        out
    }
}

/// Attention weights of `sample_count` seeded random examples plus
/// dataset-wide means. Fails for checkpoints that are not SepAttn.
pub fn inspect_attention(checkpoint: &Path, dataset: &Path, sample_count: usize, seed: u64) -> Result<AttentionReport> {
    let (model, data) = load_for_eval(checkpoint, dataset)?;
    attention_report(&model, &data.examples, sample_count, seed)
}

pub fn attention_report(
    model: &Model,
    examples: &[RankingExample],
    sample_count: usize,
    seed: u64,
) -> Result<AttentionReport> {
    if model.config().kind != ModelKind::SepAttn {
        return Err(Error::validation(format!(
            "attention weights need a sepattn model, got {}",
            model.config().kind
        )));
    }
    if examples.is_empty() {
        return Err(Error::validation("no examples to inspect"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, examples.len(), sample_count.min(examples.len())).into_vec();
    picked.sort_unstable();
    let mut rows = Vec::with_capacity(examples.len());
    for ex in examples {
        let out = model.forward(ex)?;
        let s = out.sepattn.expect("sepattn model");
        rows.push((s.alpha_sparse, s.alpha_dense));
    }
    let n = rows.len() as f64;
    Ok(AttentionReport {
        samples: picked
            .into_iter()
            .map(|i| AttentionRow {
                query_id: i,
                alpha_sparse: rows[i].0,
                alpha_dense: rows[i].1,
            })
            .collect(),
        mean_alpha_sparse: rows.iter().map(|r| r.0).sum::<f64>() / n,
        mean_alpha_dense: rows.iter().map(|r| r.1).sum::<f64>() / n,
        count: rows.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub lambda: f64,
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutput {
    pub metric_name: &'static str,
    pub points: Vec<SweepPoint>,
    pub warnings: Vec<String>,
}

impl SweepOutput {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,metric,value\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.lambda, self.metric_name, p.metric);
        }
        out
    }
}

/// One full training run per distinct λ, all sharing `cfg.seed`. Each run
/// writes into `output_dir/lambda_<λ>` when an output directory is set.
pub fn lambda_sweep(cfg: &RunConfig, lambdas: &[f64]) -> Result<SweepOutput> {
    let mut warnings = Vec::new();
    let mut distinct: Vec<f64> = Vec::new();
    for &l in lambdas {
        if distinct.iter().any(|d| d.to_bits() == l.to_bits()) {
            warnings.push(format!("duplicate lambda {l} ignored"));
        } else {
            distinct.push(l);
        }
    }
    if distinct.len() < 2 {
        return Err(Error::config("a lambda sweep needs at least two distinct values"));
    }
    if cfg.test.is_none() {
        return Err(Error::config("a lambda sweep needs a test dataset"));
    }
    let mut points = Vec::with_capacity(distinct.len());
    for &lambda in &distinct {
        let mut run = cfg.clone();
        run.lambda = lambda;
        run.checkpoint = None;
        run.output_dir = cfg.output_dir.as_ref().map(|d| d.join(format!("lambda_{lambda}")));
        let out = train(&run)?;
        let eval = out.test_evaluation.expect("test set configured");
        points.push(SweepPoint {
            lambda,
            metric: eval.primary_metric(),
        });
    }
    let out = SweepOutput {
        metric_name: if cfg.mode == Mode::Classification { "accuracy" } else { "wmrr" },
        points,
        warnings,
    };
    if let Some(dir) = &cfg.output_dir {
        create_dir(dir)?;
        write(&dir.join("lambda_sweep.csv"), &out.to_csv())?;
    }
    Ok(out)
}

/// Tiny seeded instance of the configured architecture for gradient checks.
pub fn tiny_model_config(cfg: &RunConfig) -> ModelConfig {
    ModelConfig {
        kind: cfg.model,
        mode: cfg.mode,
        list_size: cfg.list_size.min(4),
        vocab_size: 9,
        embedding_dim: 3,
        dense_dim: 2,
        hidden: vec![5, 4],
        activation: cfg.activation,
        use_char_ngrams: cfg.use_char_ngrams,
        share_query_embeddings: cfg.share_query_embeddings,
        train_embeddings: true,
    }
}

fn tiny_examples(cfg: &ModelConfig, count: usize, seed: u64) -> Result<Vec<RankingExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = cfg.vocab_size as u32;
    let sparse = |rng: &mut ChaCha8Rng| {
        let ng = (0..2).map(|_| rng.random_range(1..vocab)).collect();
        let ch = (0..3).map(|_| rng.random_range(1..vocab)).collect();
        SparseFeatures::new(ng, ch)
    };
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let q = sparse(&mut rng);
        let n = if cfg.list_size > 1 && i % 2 == 1 { cfg.list_size - 1 } else { cfg.list_size };
        let mut docs = Vec::with_capacity(n);
        for _ in 0..n {
            let s = sparse(&mut rng);
            let dense = (0..cfg.dense_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            docs.push(Document::new(s, dense));
        }
        out.push(match cfg.mode {
            Mode::Classification => {
                RankingExample::classification(q, docs.pop().expect("one document"), i % 2 == 0)
            }
            Mode::Ranking => RankingExample::ranking(q, docs, i % n, cfg.list_size)?,
        });
    }
    Ok(out)
}

/// Finite-difference check of every parameter group of a tiny seeded model
/// with the configured architecture.
pub fn gradcheck(cfg: &RunConfig) -> Result<FiniteDiffReport> {
    cfg.validate()?;
    let tiny = tiny_model_config(cfg);
    let mut model = Model::new(tiny.clone(), cfg.seed)?;
    // Zero biases put relu units whose inputs are all inactive exactly on
    // the kink, where central differences see half a slope.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let store = model.store_mut();
    for id in store.ids().collect::<Vec<_>>() {
        let name = &store.param(id).name;
        if name.ends_with(".bias") || name.ends_with(".b") {
            for x in store.get_mut(id).data_mut() {
                *x += rng.random_range(-0.5..0.5);
            }
        }
    }
    let examples = tiny_examples(&tiny, 4, cfg.seed.wrapping_add(1))?;
    model.gradient_check(&examples, cfg.lambda, 1e-5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradcheck_passes_for_every_model() {
        for kind in ModelKind::ALL {
            for mut cfg in [RunConfig::synthetic(kind), RunConfig::email(kind)] {
                for activation in [crate::nn::Activation::Tanh, crate::nn::Activation::Relu] {
                    cfg.activation = activation;
                    let r = gradcheck(&cfg).unwrap();
                    assert!(r.passes(1e-4), "{kind}/{activation}: {r:?}");
                }
            }
        }
    }

    #[test]
    fn sweep_deduplicates() {
        let cfg = RunConfig::default();
        assert!(lambda_sweep(&cfg, &[1.0, 1.0]).is_err());
    }
}
