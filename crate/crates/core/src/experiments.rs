//! Training with validation-based model selection, multi-split aggregation,
//! grid search, ablations, hop sweeps, α reports and embedding export.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, Split};
use crate::error::{Error, Result};
use crate::features::{generate_hop_features, hop_label, row_normalize, HopFeatures};
use crate::matrix::DenseMatrix;
use crate::model::{
    accuracy, forward, hidden_representation, loss_and_grads, FsgnnParams, Mode, ModelConfig,
    Variant,
};
use crate::optim::{adam_step, AdamState, GroupHyper, GroupHypers};

/// Rows per chunk when evaluating or exporting without a training batch size.
const EVAL_CHUNK: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub sca: GroupHyper,
    pub fc1: GroupHyper,
    pub fc2: GroupHyper,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Training rows per optimizer step; 0 means full batch.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            sca: GroupHyper::new(0.01, 0.0),
            fc1: GroupHyper::new(0.01, 0.0),
            fc2: GroupHyper::new(0.01, 0.0),
            max_epochs: 1000,
            patience: 100,
            seed: 0,
            batch_size: 0,
        }
    }
}

impl TrainConfig {
    pub fn hypers(&self) -> GroupHypers {
        GroupHypers {
            sca: self.sca,
            fc1: self.fc1,
            fc2: self.fc2,
        }
    }

    pub fn set_hypers(&mut self, hypers: GroupHypers) {
        self.sca = hypers.sca;
        self.fc1 = hypers.fc1;
        self.fc2 = hypers.fc2;
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.hypers().validate()?;
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one training run on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Test accuracy of the parameters kept at the best validation epoch.
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    pub train_accuracy: f64,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Effective branch weights of the kept parameters.
    pub alpha: Vec<f64>,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
    pub seed: u64,
}

/// Tracks the best validation accuracy. It never sees test metrics.
#[derive(Debug, Clone)]
struct Selector {
    best: Option<(f64, usize)>,
    stale: usize,
}

impl Selector {
    fn new() -> Self {
        Self {
            best: None,
            stale: 0,
        }
    }

    /// Returns true when `val_accuracy` strictly improves on every earlier
    /// epoch; ties keep the earlier epoch.
    fn observe(&mut self, epoch: usize, val_accuracy: f64) -> bool {
        match self.best {
            Some((best, _)) if val_accuracy <= best => {
                self.stale += 1;
                false
            }
            _ => {
                self.best = Some((val_accuracy, epoch));
                self.stale = 0;
                true
            }
        }
    }
}

/// Row-normalizes the raw features and precomputes `2K+1` hop matrices.
pub fn prepare_features(ds: &Dataset, hops: usize) -> Result<HopFeatures> {
    let (a_sym, at_sym) = ds.operators()?;
    generate_hop_features(&row_normalize(&ds.features), &a_sym, &at_sym, hops)
}

/// Eval-mode logits for `rows`, gathered and computed in chunks.
pub fn predict(
    params: &FsgnnParams,
    cfg: &ModelConfig,
    hf: &HopFeatures,
    rows: &[usize],
    chunk: usize,
) -> Result<DenseMatrix> {
    let chunk = chunk.max(1);
    let mut values = Vec::with_capacity(rows.len() * cfg.classes);
    for part in rows.chunks(chunk) {
        let (logits, _) = forward(params, cfg, &hf.gather(part)?, Mode::Eval)?;
        values.extend(logits.into_vec());
    }
    DenseMatrix::new(rows.len(), cfg.classes, values)
}

fn labels_of(ds: &Dataset, rows: &[usize]) -> Vec<usize> {
    rows.iter().map(|&i| ds.labels[i]).collect()
}

fn check_compatible(
    ds: &Dataset,
    split: &Split,
    hf: &HopFeatures,
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    if cfg.model.classes != ds.classes {
        return Err(Error::Config(format!(
            "model has {} classes but dataset {} has {}",
            cfg.model.classes, ds.name, ds.classes
        )));
    }
    if hf.len() != cfg.model.num_inputs() {
        return Err(Error::Config(format!(
            "hop features hold {} matrices but the model expects {} (K={})",
            hf.len(),
            cfg.model.num_inputs(),
            cfg.model.hops
        )));
    }
    if hf.num_nodes() != ds.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "hop features cover {} nodes, dataset has {}",
            hf.num_nodes(),
            ds.num_nodes()
        )));
    }
    split.validate(ds.num_nodes(), 0)
}

/// Trains one model and returns its result together with the kept
/// parameters.
///
/// Each epoch is one pass over the training rows: a single step in full
/// batch mode, otherwise `⌈|train|/batch_size⌉` steps over a seeded
/// shuffle. Rows inside every step are visited in ascending node order, so
/// one batch spanning the whole training set reproduces full-batch training
/// exactly.
pub fn train_model(
    ds: &Dataset,
    split: &Split,
    hf: &HopFeatures,
    cfg: &TrainConfig,
) -> Result<(RunResult, FsgnnParams)> {
    check_compatible(ds, split, hf, cfg)?;
    let model = &cfg.model;
    let hypers = cfg.hypers();

    let mut train_rows = split.train.clone();
    train_rows.sort_unstable();
    let val_labels = labels_of(ds, &split.val);

    let mut params = FsgnnParams::init(model, hf.feature_dim(), cfg.seed)?;
    let mut state = AdamState::new(&params);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(2);

    let full_batch = cfg.batch_size == 0;
    let full_inputs = if full_batch {
        Some((hf.gather(&train_rows)?, labels_of(ds, &train_rows)))
    } else {
        None
    };
    let eval_chunk = if full_batch {
        EVAL_CHUNK
    } else {
        cfg.batch_size
    };

    let mut selector = Selector::new();
    let mut kept = params.clone();
    let mut loss_trace = Vec::new();
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let mut epoch_loss = 0.0;
        if let Some((inputs, targets)) = &full_inputs {
            let (loss, grads) = loss_and_grads(&params, model, inputs, targets, &mut dropout_rng)?;
            check_loss(loss, epoch, cfg)?;
            adam_step(&mut params, &grads, &hypers, &mut state)
                .map_err(|e| diverged(epoch, cfg, e))?;
            epoch_loss = loss;
        } else {
            let mut order = train_rows.clone();
            order.shuffle(&mut shuffle_rng);
            for batch in order.chunks(cfg.batch_size) {
                let mut rows = batch.to_vec();
                rows.sort_unstable();
                let inputs = hf.gather(&rows)?;
                let targets = labels_of(ds, &rows);
                let (loss, grads) =
                    loss_and_grads(&params, model, &inputs, &targets, &mut dropout_rng)?;
                check_loss(loss, epoch, cfg)?;
                adam_step(&mut params, &grads, &hypers, &mut state)
                    .map_err(|e| diverged(epoch, cfg, e))?;
                epoch_loss += loss * rows.len() as f64;
            }
            epoch_loss /= train_rows.len() as f64;
        }
        loss_trace.push(epoch_loss);

        let val_logits = predict(&params, model, hf, &split.val, eval_chunk)?;
        let val_accuracy = accuracy(&val_logits, &val_labels)?;
        if selector.observe(epoch, val_accuracy) {
            kept = params.clone();
        } else if selector.stale >= cfg.patience {
            break;
        }
    }

    let (best_val_accuracy, best_epoch) = selector.best.expect("at least one epoch ran");
    let test_logits = predict(&kept, model, hf, &split.test, eval_chunk)?;
    let test_accuracy = accuracy(&test_logits, &labels_of(ds, &split.test))?;
    let train_logits = predict(&kept, model, hf, &train_rows, eval_chunk)?;
    let train_accuracy = accuracy(&train_logits, &labels_of(ds, &train_rows))?;
    let result = RunResult {
        test_accuracy,
        best_val_accuracy,
        train_accuracy,
        best_epoch,
        epochs_run,
        alpha: kept.alpha(model),
        loss_trace,
        seed: cfg.seed,
    };
    Ok((result, kept))
}

fn check_loss(loss: f64, epoch: usize, cfg: &TrainConfig) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            epoch,
            msg: format!("loss is {loss} with config {}", config_summary(cfg)),
        })
    }
}

fn diverged(epoch: usize, cfg: &TrainConfig, e: Error) -> Error {
    Error::Diverged {
        epoch,
        msg: format!("{e} with config {}", config_summary(cfg)),
    }
}

fn config_summary(cfg: &TrainConfig) -> String {
    serde_json::to_string(cfg).unwrap_or_else(|_| format!("{cfg:?}"))
}

pub fn train_once(
    ds: &Dataset,
    split: &Split,
    hf: &HopFeatures,
    cfg: &TrainConfig,
) -> Result<RunResult> {
    train_model(ds, split, hf, cfg).map(|(result, _)| result)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    // shifted by the first value so identical inputs give exactly (v, 0)
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub mean_test: f64,
    pub std_test: f64,
    pub mean_val: f64,
    pub runs: Vec<RunResult>,
}

impl SplitSummary {
    /// Per-split results as TSV.
    pub fn to_tsv(&self) -> String {
        let mut out =
            String::from("split\tseed\ttest_accuracy\tbest_val_accuracy\ttrain_accuracy\tbest_epoch\tepochs_run\n");
        for (i, r) in self.runs.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.seed,
                r.test_accuracy,
                r.best_val_accuracy,
                r.train_accuracy,
                r.best_epoch,
                r.epochs_run
            );
        }
        out
    }
}

/// Trains on every split; split `i` uses seed `cfg.seed + i`.
pub fn run_over_splits(
    ds: &Dataset,
    splits: &[Split],
    hf: &HopFeatures,
    cfg: &TrainConfig,
) -> Result<SplitSummary> {
    if splits.is_empty() {
        return Err(Error::Config("at least one split is required".into()));
    }
    let runs = splits
        .iter()
        .enumerate()
        .map(|(i, split)| {
            let cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            train_once(ds, split, hf, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let tests: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    let vals: Vec<f64> = runs.iter().map(|r| r.best_val_accuracy).collect();
    let (mean_test, std_test) = mean_std(&tests);
    Ok(SplitSummary {
        mean_test,
        std_test,
        mean_val: mean_std(&vals).0,
        runs,
    })
}

/// Hyperparameter grid. Both layers share `lr_fc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub wd_sca: Vec<f64>,
    pub lr_sca: Vec<f64>,
    pub wd_fc1: Vec<f64>,
    pub wd_fc2: Vec<f64>,
    pub lr_fc: Vec<f64>,
    pub dropout: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            wd_sca: vec![0.0, 0.0001, 0.001, 0.01, 0.1],
            lr_sca: vec![0.04, 0.02, 0.01, 0.005],
            wd_fc1: vec![0.0, 0.0001, 0.001],
            wd_fc2: vec![0.0, 0.0001, 0.001],
            lr_fc: vec![0.01, 0.005],
            dropout: vec![0.5, 0.6, 0.7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combo {
    pub wd_sca: f64,
    pub lr_sca: f64,
    pub wd_fc1: f64,
    pub wd_fc2: f64,
    pub lr_fc: f64,
    pub dropout: f64,
}

impl Combo {
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.sca = GroupHyper::new(self.lr_sca, self.wd_sca);
        cfg.fc1 = GroupHyper::new(self.lr_fc, self.wd_fc1);
        cfg.fc2 = GroupHyper::new(self.lr_fc, self.wd_fc2);
        cfg.model.dropout = self.dropout;
        cfg
    }
}

impl SearchSpace {
    pub fn single(combo: Combo) -> Self {
        Self {
            wd_sca: vec![combo.wd_sca],
            lr_sca: vec![combo.lr_sca],
            wd_fc1: vec![combo.wd_fc1],
            wd_fc2: vec![combo.wd_fc2],
            lr_fc: vec![combo.lr_fc],
            dropout: vec![combo.dropout],
        }
    }

    pub fn len(&self) -> usize {
        self.wd_sca.len()
            * self.lr_sca.len()
            * self.wd_fc1.len()
            * self.wd_fc2.len()
            * self.lr_fc.len()
            * self.dropout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product, `wd_sca` varying slowest and `dropout` fastest.
    pub fn combos(&self) -> Vec<Combo> {
        let mut out = Vec::with_capacity(self.len());
        for &wd_sca in &self.wd_sca {
            for &lr_sca in &self.lr_sca {
                for &wd_fc1 in &self.wd_fc1 {
                    for &wd_fc2 in &self.wd_fc2 {
                        for &lr_fc in &self.lr_fc {
                            for &dropout in &self.dropout {
                                out.push(Combo {
                                    wd_sca,
                                    lr_sca,
                                    wd_fc1,
                                    wd_fc2,
                                    lr_fc,
                                    dropout,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Base seed for combo `index`; split `i` of that combo then uses `+ i`.
pub fn combo_seed(base: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    /// Position in the Cartesian product.
    pub index: usize,
    pub combo: Combo,
    pub seed: u64,
    pub mean_val: f64,
    pub mean_test: f64,
    pub std_test: f64,
    pub test_accuracies: Vec<f64>,
    pub alphas: Vec<Vec<f64>>,
    pub error: Option<String>,
}

/// Grid rows ranked by mean validation accuracy (best first; ties keep grid
/// order; failed combos last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub rows: Vec<GridRow>,
}

impl GridTable {
    pub fn best(&self) -> Option<&GridRow> {
        self.rows.first().filter(|r| r.error.is_none())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "rank\tindex\twd_sca\tlr_sca\twd_fc1\twd_fc2\tlr_fc\tdropout\tseed\tmean_val\tmean_test\tstd_test\terror\n",
        );
        for (rank, r) in self.rows.iter().enumerate() {
            let c = &r.combo;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                rank + 1,
                r.index,
                c.wd_sca,
                c.lr_sca,
                c.wd_fc1,
                c.wd_fc2,
                c.lr_fc,
                c.dropout,
                r.seed,
                r.mean_val,
                r.mean_test,
                r.std_test,
                r.error.as_deref().unwrap_or("").replace(['\t', '\n'], " ")
            );
        }
        out
    }
}

/// Evaluates every combo of `space` over all splits. `jobs > 1` runs combos
/// on a dedicated thread pool; results do not depend on `jobs`.
pub fn grid_search(
    ds: &Dataset,
    splits: &[Split],
    hf: &HopFeatures,
    base: &TrainConfig,
    space: &SearchSpace,
    jobs: usize,
) -> Result<GridTable> {
    if space.is_empty() {
        return Err(Error::Config("search space is empty".into()));
    }
    if splits.is_empty() {
        return Err(Error::Config("at least one split is required".into()));
    }
    let combos = space.combos();
    let evaluate = |(index, combo): (usize, &Combo)| -> GridRow {
        let mut cfg = combo.apply(base);
        cfg.seed = combo_seed(base.seed, index);
        let mut row = GridRow {
            index,
            combo: *combo,
            seed: cfg.seed,
            mean_val: f64::NAN,
            mean_test: f64::NAN,
            std_test: f64::NAN,
            test_accuracies: Vec::new(),
            alphas: Vec::new(),
            error: None,
        };
        match run_over_splits(ds, splits, hf, &cfg) {
            Ok(summary) => {
                row.mean_val = summary.mean_val;
                row.mean_test = summary.mean_test;
                row.std_test = summary.std_test;
                row.test_accuracies = summary.runs.iter().map(|r| r.test_accuracy).collect();
                row.alphas = summary.runs.into_iter().map(|r| r.alpha).collect();
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    };

    let mut rows: Vec<GridRow> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
        pool.install(|| combos.par_iter().enumerate().map(evaluate).collect())
    } else {
        combos.iter().enumerate().map(evaluate).collect()
    };
    rows.sort_by(|a, b| {
        a.error
            .is_some()
            .cmp(&b.error.is_some())
            .then(b.mean_val.total_cmp(&a.mean_val))
            .then(a.index.cmp(&b.index))
    });
    Ok(GridTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    /// Mean test accuracy over all successful combos and splits.
    pub mean_test: f64,
    /// Population standard deviation of the per-combo mean test accuracies.
    pub std_test: f64,
    pub combos: usize,
    pub failures: usize,
    /// Best combo of this variant by validation accuracy.
    pub best: Option<GridRow>,
}

/// Average of per-combo mean test accuracies over the successful rows. With
/// the same number of splits per combo this is the mean over combos × splits.
pub fn grid_average(table: &GridTable) -> (f64, f64) {
    let means: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.mean_test)
        .collect();
    mean_std(&means)
}

/// Runs the grid once per model variant.
pub fn ablation_suite(
    ds: &Dataset,
    splits: &[Split],
    hf: &HopFeatures,
    base: &TrainConfig,
    space: &SearchSpace,
    variants: &[Variant],
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    variants
        .iter()
        .map(|&variant| {
            let mut cfg = base.clone();
            cfg.model.variant = variant;
            let table = grid_search(ds, splits, hf, &cfg, space, jobs)?;
            let (mean_test, std_test) = grid_average(&table);
            let failures = table.rows.iter().filter(|r| r.error.is_some()).count();
            Ok(AblationRow {
                variant,
                mean_test,
                std_test,
                combos: table.rows.len(),
                failures,
                best: table.best().cloned(),
            })
        })
        .collect()
}

pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let mut out = String::from(
        "variant\tmean_test\tstd_test\tcombos\tfailures\tbest_mean_val\tbest_mean_test\n",
    );
    for r in rows {
        let (bv, bt) = r
            .best
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |b| (b.mean_val, b.mean_test));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.variant, r.mean_test, r.std_test, r.combos, r.failures, bv, bt
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub hops: usize,
    pub mean_test: f64,
    pub std_test: f64,
    pub mean_val: f64,
}

/// Regenerates hop features for each `K` and trains over all splits.
pub fn hop_sweep(
    ds: &Dataset,
    splits: &[Split],
    hops: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    if hops.is_empty() {
        return Err(Error::Config("hop list is empty".into()));
    }
    let (a_sym, at_sym) = ds.operators()?;
    let x = row_normalize(&ds.features);
    hops.iter()
        .map(|&k| {
            let hf = generate_hop_features(&x, &a_sym, &at_sym, k)?;
            let mut cfg = cfg.clone();
            cfg.model.hops = k;
            let summary = run_over_splits(ds, splits, &hf, &cfg)?;
            Ok(SweepRow {
                hops: k,
                mean_test: summary.mean_test,
                std_test: summary.std_test,
                mean_val: summary.mean_val,
            })
        })
        .collect()
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("hops\tmean_test\tstd_test\tmean_val\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.hops, r.mean_test, r.std_test, r.mean_val
        );
    }
    out
}

/// Mean learned α per dataset and feature index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    pub labels: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl AlphaReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("dataset");
        for l in &self.labels {
            out.push('\t');
            out.push_str(l);
        }
        out.push('\n');
        for (name, values) in &self.rows {
            out.push_str(name);
            for v in values {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Averages the α vectors of each dataset's runs. Every run must carry the
/// same number of branches.
pub fn alpha_report<'a, I>(groups: I) -> Result<AlphaReport>
where
    I: IntoIterator<Item = (&'a str, &'a [RunResult])>,
{
    let mut width = None;
    let mut rows = Vec::new();
    for (name, runs) in groups {
        if runs.is_empty() {
            return Err(Error::Config(format!("no runs for {name}")));
        }
        let l = *width.get_or_insert(runs[0].alpha.len());
        if let Some(bad) = runs.iter().find(|r| r.alpha.len() != l) {
            return Err(Error::DimensionMismatch(format!(
                "{name}: α of length {} where {l} was expected",
                bad.alpha.len()
            )));
        }
        let mean = (0..l)
            .map(|k| runs.iter().map(|r| r.alpha[k]).sum::<f64>() / runs.len() as f64)
            .collect();
        rows.push((name.to_string(), mean));
    }
    let labels = (0..width.unwrap_or(0)).map(hop_label).collect();
    Ok(AlphaReport { labels, rows })
}

/// Writes `H¹` (pre-ReLU, eval mode) for every node as TSV and returns it.
pub fn export_embeddings(
    params: &FsgnnParams,
    cfg: &ModelConfig,
    hf: &HopFeatures,
    path: impl AsRef<Path>,
) -> Result<DenseMatrix> {
    let n = hf.num_nodes();
    let all: Vec<usize> = (0..n).collect();
    let width = cfg.num_inputs() * cfg.hidden;
    let mut values = Vec::with_capacity(n * width);
    for part in all.chunks(EVAL_CHUNK) {
        values.extend(hidden_representation(params, cfg, &hf.gather(part)?)?.into_vec());
    }
    let h1 = DenseMatrix::new(n, width, values)?;

    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        for i in 0..h1.rows() {
            for (j, v) in h1.row(i).iter().enumerate() {
                if j > 0 {
                    w.write_all(b"\t")?;
                }
                write!(w, "{v}")?;
            }
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))?;
    Ok(h1)
}
