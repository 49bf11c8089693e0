//! `fsgnn` command-line driver.
//!
//! Exit status: 0 on success, 1 on runtime or numeric failure (for example a
//! diverging loss), 2 when an input fails validation.

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fsgnn::datasets::{generate_random_splits, load_dataset, load_splits, save_splits};
use fsgnn::experiments::{
    ablation_suite, ablation_tsv, alpha_report, export_embeddings, grid_search, hop_sweep,
    prepare_features, run_over_splits, sweep_tsv, train_model, SplitSummary,
};
use fsgnn::features::{load_hop_features, save_hop_features};
use fsgnn::graph::homophily_ratio;
use fsgnn::{presets, Dataset, FsgnnParams, HopFeatures, Split, TrainConfig, Variant};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::CliConfig;

/// An input that failed validation; maps to exit status 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

#[derive(Parser)]
#[command(
    name = "fsgnn",
    version,
    about = "Feature-selection GNN node classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Precompute hop features and write them as an FSGF file.
    Prepare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        hops: usize,
        /// Output FSGF file; run metadata goes to `<FILE>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train over every split and report mean ± std test accuracy.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the kept parameters of split 0 to `params.json`.
        #[arg(long)]
        save_params: bool,
    },
    /// Evaluate a hyperparameter grid, ranked by validation accuracy.
    Gridsearch {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the grid once per model variant and average test accuracy.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Comma-separated variants; all four by default.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
    },
    /// Train with several propagation depths (hop features are regenerated).
    SweepHops {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "k", value_delimiter = ',', default_value = "3,8,16,32")]
        depths: Vec<usize>,
    },
    /// Average learned branch weights from `runs.json` files written by `train`.
    Alphas {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write eval-mode hidden representations of every node.
    ExportEmbeddings {
        #[command(flatten)]
        run: RunArgs,
        /// Parameters saved by `train --save-params`.
        #[arg(long)]
        params: PathBuf,
    },
    /// Print node, edge, feature and class counts and the homophily ratio.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    /// Configuration JSON; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    /// FSGF file from `prepare`.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    hops: Option<usize>,
    /// Tuned hyperparameters for a benchmark dataset name, or `large-graph`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Number of random splits generated when no splits file is given.
    #[arg(long, default_value_t = 10)]
    num_splits: usize,
}

/// Everything a run-style command needs, validated.
struct Session {
    cfg: CliConfig,
    train: TrainConfig,
    out: PathBuf,
    ds: Dataset,
    splits: Vec<Split>,
    started: Instant,
}

impl Session {
    fn open(args: &RunArgs) -> Result<Self> {
        let started = Instant::now();
        let mut cfg = match &args.config {
            Some(path) => CliConfig::load(path)?,
            None => CliConfig::default(),
        };
        override_opt(&mut cfg.data, &args.data);
        override_opt(&mut cfg.splits, &args.splits);
        override_opt(&mut cfg.features, &args.features);
        override_opt(&mut cfg.out, &args.out);
        override_val(&mut cfg.model.hops, args.hops);
        if let Some(name) = &args.preset {
            apply_preset(&mut cfg, name)?;
        }
        override_val(&mut cfg.seed, args.seed);
        override_val(&mut cfg.model.variant, args.variant);
        override_val(&mut cfg.model.hidden, args.hidden);
        override_val(&mut cfg.model.gamma, args.gamma);
        override_val(&mut cfg.model.dropout, args.dropout);
        override_val(&mut cfg.max_epochs, args.max_epochs);
        override_val(&mut cfg.patience, args.patience);
        override_val(&mut cfg.batch_size, args.batch_size);

        let data = cfg.data.clone().ok_or_else(|| {
            input_error("no dataset directory (use --data or \"data\" in the config)")
        })?;
        let out = cfg.out.clone().ok_or_else(|| {
            input_error("no output directory (use --out or \"out\" in the config)")
        })?;
        require_dir(&data)?;
        for path in [&cfg.splits, &cfg.features].into_iter().flatten() {
            require_file(path)?;
        }
        if args.num_splits == 0 {
            return Err(input_error("--num-splits must be at least 1"));
        }

        let ds = load_dataset(&data)?;
        if cfg.model.classes == 0 {
            cfg.model.classes = ds.classes;
        } else if cfg.model.classes != ds.classes {
            return Err(input_error(format!(
                "config has {} classes but {} has {}",
                cfg.model.classes, ds.name, ds.classes
            )));
        }
        let train = cfg.train_config();
        train.validate()?;

        let splits = match &cfg.splits {
            Some(path) => load_splits(path, ds.num_nodes())?,
            None => {
                let splits = generate_random_splits(&ds, args.num_splits, cfg.seed)?;
                create_dir(&out)?;
                let path = out.join("splits.json");
                save_splits(&splits, &path)?;
                cfg.splits = Some(path);
                splits
            }
        };
        create_dir(&out)?;
        Ok(Self {
            cfg,
            train,
            out,
            ds,
            splits,
            started,
        })
    }

    /// Loads the FSGF cache when configured, otherwise computes the features.
    fn hop_features(&self) -> Result<HopFeatures> {
        let hops = self.train.model.hops;
        let Some(path) = &self.cfg.features else {
            return Ok(prepare_features(&self.ds, hops)?);
        };
        let hf = load_hop_features(path)?;
        if hf.hops() != hops {
            return Err(input_error(format!(
                "{} holds K={} but the model uses K={hops}",
                path.display(),
                hf.hops()
            )));
        }
        if hf.num_nodes() != self.ds.num_nodes() || hf.feature_dim() != self.ds.feature_dim() {
            return Err(input_error(format!(
                "{} is {}x{} but {} is {}x{}",
                path.display(),
                hf.num_nodes(),
                hf.feature_dim(),
                self.ds.name,
                self.ds.num_nodes(),
                self.ds.feature_dim()
            )));
        }
        Ok(hf)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn finish(&self, command: &str, args: Value, seeds: Value, outputs: &[PathBuf]) -> Result<()> {
        let meta = metadata(command, &self.cfg, args, seeds, outputs, self.started);
        self.write(
            "metadata.json",
            &(serde_json::to_string_pretty(&meta)? + "\n"),
        )?;
        Ok(())
    }
}

fn override_opt<T: Clone>(slot: &mut Option<T>, flag: &Option<T>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn override_val<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_preset(cfg: &mut CliConfig, name: &str) -> Result<()> {
    let preset = if name.eq_ignore_ascii_case("large-graph") {
        presets::large_graph()
    } else {
        presets::tuned(name, cfg.model.hops).ok_or_else(|| {
            let known: Vec<_> = presets::known_datasets().collect();
            input_error(format!(
                "no preset for {name:?} at K={} (presets exist for K=3 and K=8 on {}, or large-graph)",
                cfg.model.hops,
                known.join(", ")
            ))
        })?
    };
    let mut train = cfg.train_config();
    train.set_hypers(preset.hypers);
    train.model.dropout = preset.dropout;
    cfg.set_train_config(train);
    Ok(())
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(input_error(format!("{}: not a directory", path.display())))
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(input_error(format!("{}: no such file", path.display())))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn metadata(
    command: &str,
    cfg: &CliConfig,
    args: Value,
    seeds: Value,
    outputs: &[PathBuf],
    started: Instant,
) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "args": args,
        "seeds": seeds,
        "outputs": outputs,
        "wall_time_secs": started.elapsed().as_secs_f64(),
    })
}

fn split_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

fn percent(mean: f64, std: f64) -> String {
    format!("{:.2}±{:.2}", 100.0 * mean, 100.0 * std)
}

/// Contents of `runs.json`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunsFile {
    dataset: String,
    config: TrainConfig,
    summary: SplitSummary,
}

fn cmd_prepare(data: &Path, hops: usize, out: &Path) -> Result<()> {
    let started = Instant::now();
    require_dir(data)?;
    let ds = load_dataset(data)?;
    let hf = prepare_features(&ds, hops)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_hop_features(&hf, out)?;
    println!(
        "{}: n={} d={} K={} -> {} matrices written to {}",
        ds.name,
        hf.num_nodes(),
        hf.feature_dim(),
        hf.hops(),
        hf.len(),
        out.display()
    );
    let cfg = CliConfig {
        data: Some(data.to_path_buf()),
        features: Some(out.to_path_buf()),
        ..CliConfig::default()
    };
    let meta = metadata(
        "prepare",
        &cfg,
        json!({ "hops": hops }),
        Value::Null,
        &[out.to_path_buf()],
        started,
    );
    let mut meta_path = out.as_os_str().to_owned();
    meta_path.push(".json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", Path::new(&meta_path).display()))?;
    Ok(())
}

fn cmd_train(args: &RunArgs, save_params: bool) -> Result<()> {
    let s = Session::open(args)?;
    let hf = s.hop_features()?;
    let summary = run_over_splits(&s.ds, &s.splits, &hf, &s.train)?;
    let mut outputs = vec![s.write("results.tsv", &summary.to_tsv())?];
    let runs = RunsFile {
        dataset: s.ds.name.clone(),
        config: s.train.clone(),
        summary,
    };
    outputs.push(s.write("runs.json", &(serde_json::to_string_pretty(&runs)? + "\n"))?);
    if save_params {
        let (_, params) = train_model(&s.ds, &s.splits[0], &hf, &s.train)?;
        outputs.push(s.write("params.json", &serde_json::to_string(&params)?)?);
    }
    s.finish(
        "train",
        json!({ "save_params": save_params }),
        json!(split_seeds(s.train.seed, s.splits.len())),
        &outputs,
    )?;
    println!(
        "{} {}: test accuracy {} over {} splits",
        s.ds.name,
        s.train.model.variant,
        percent(runs.summary.mean_test, runs.summary.std_test),
        s.splits.len()
    );
    Ok(())
}

fn cmd_gridsearch(args: &RunArgs, jobs: usize) -> Result<()> {
    let s = Session::open(args)?;
    let hf = s.hop_features()?;
    let space = s.cfg.space.clone().unwrap_or_default();
    let table = grid_search(&s.ds, &s.splits, &hf, &s.train, &space, jobs)?;
    let outputs = vec![
        s.write("grid.tsv", &table.to_tsv())?,
        s.write("grid.json", &(serde_json::to_string_pretty(&table)? + "\n"))?,
    ];
    let seeds: BTreeMap<usize, u64> = table.rows.iter().map(|r| (r.index, r.seed)).collect();
    s.finish(
        "gridsearch",
        json!({ "jobs": jobs, "space": space }),
        json!(seeds),
        &outputs,
    )?;
    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} combos evaluated, {failed} failed", table.rows.len());
    if let Some(best) = table.best() {
        println!(
            "best combo {}: val {:.2} test {}",
            best.index,
            100.0 * best.mean_val,
            percent(best.mean_test, best.std_test)
        );
    }
    Ok(())
}

fn cmd_ablate(args: &RunArgs, jobs: usize, variants: &[Variant]) -> Result<()> {
    let s = Session::open(args)?;
    let hf = s.hop_features()?;
    let space = s.cfg.space.clone().unwrap_or_default();
    let variants = if variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        variants.to_vec()
    };
    let rows = ablation_suite(&s.ds, &s.splits, &hf, &s.train, &space, &variants, jobs)?;
    let outputs = vec![
        s.write("ablation.tsv", &ablation_tsv(&rows))?,
        s.write(
            "ablation.json",
            &(serde_json::to_string_pretty(&rows)? + "\n"),
        )?,
    ];
    s.finish(
        "ablate",
        json!({ "jobs": jobs, "space": space, "variants": variants }),
        json!({ "base": s.train.seed }),
        &outputs,
    )?;
    for r in &rows {
        println!("{}\t{}", r.variant, percent(r.mean_test, r.std_test));
    }
    Ok(())
}

fn cmd_sweep_hops(args: &RunArgs, hops: &[usize]) -> Result<()> {
    let s = Session::open(args)?;
    if s.cfg.features.is_some() {
        return Err(input_error(
            "sweep-hops regenerates hop features; drop --features",
        ));
    }
    let rows = hop_sweep(&s.ds, &s.splits, hops, &s.train)?;
    let outputs = vec![s.write("sweep.tsv", &sweep_tsv(&rows))?];
    s.finish(
        "sweep-hops",
        json!({ "k": hops }),
        json!(split_seeds(s.train.seed, s.splits.len())),
        &outputs,
    )?;
    for r in &rows {
        println!("K={}\t{}", r.hops, percent(r.mean_test, r.std_test));
    }
    Ok(())
}

fn cmd_alphas(runs: &[PathBuf], out: &Path) -> Result<()> {
    let started = Instant::now();
    let mut groups: Vec<(String, Vec<fsgnn::RunResult>)> = Vec::new();
    for path in runs {
        require_file(path)?;
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: RunsFile = serde_json::from_str(&text)
            .map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        match groups.iter_mut().find(|(name, _)| *name == file.dataset) {
            Some((_, all)) => all.extend(file.summary.runs),
            None => groups.push((file.dataset, file.summary.runs)),
        }
    }
    let report = alpha_report(groups.iter().map(|(n, r)| (n.as_str(), r.as_slice())))?;
    create_dir(out)?;
    let path = out.join("alphas.tsv");
    fs::write(&path, report.to_tsv()).with_context(|| format!("writing {}", path.display()))?;
    let cfg = CliConfig {
        out: Some(out.to_path_buf()),
        ..CliConfig::default()
    };
    let meta = metadata(
        "alphas",
        &cfg,
        json!({ "runs": runs }),
        Value::Null,
        &[path],
        started,
    );
    fs::write(
        out.join("metadata.json"),
        serde_json::to_string_pretty(&meta)? + "\n",
    )
    .context("writing metadata.json")?;
    print!("{}", report.to_tsv());
    Ok(())
}

fn cmd_export(args: &RunArgs, params_path: &Path) -> Result<()> {
    let s = Session::open(args)?;
    require_file(params_path)?;
    let hf = s.hop_features()?;
    let text = fs::read_to_string(params_path)
        .with_context(|| format!("reading {}", params_path.display()))?;
    let params: FsgnnParams = serde_json::from_str(&text)
        .map_err(|e| input_error(format!("{}: {e}", params_path.display())))?;
    params.check_shapes(&s.train.model, hf.feature_dim())?;
    let path = s.out.join("embeddings.tsv");
    let h1 = export_embeddings(&params, &s.train.model, &hf, &path)?;
    s.finish(
        "export-embeddings",
        json!({ "params": params_path }),
        Value::Null,
        std::slice::from_ref(&path),
    )?;
    println!(
        "{} x {} embeddings written to {}",
        h1.rows(),
        h1.cols(),
        path.display()
    );
    Ok(())
}

fn cmd_stats(data: &Path, out: Option<&Path>) -> Result<()> {
    let started = Instant::now();
    require_dir(data)?;
    let ds = load_dataset(data)?;
    let homophily = homophily_ratio(&ds.graph, &ds.labels).ok();
    let stats = json!({
        "name": ds.name,
        "n": ds.num_nodes(),
        "m": ds.graph.num_edges(),
        "d": ds.feature_dim(),
        "classes": ds.classes,
        "homophily": homophily,
    });
    println!(
        "{}: n={} m={} d={} C={} homophily={}",
        ds.name,
        ds.num_nodes(),
        ds.graph.num_edges(),
        ds.feature_dim(),
        ds.classes,
        homophily.map_or_else(|| "undefined".to_string(), |h| format!("{h:.4}"))
    );
    if let Some(out) = out {
        create_dir(out)?;
        let path = out.join("stats.json");
        fs::write(&path, serde_json::to_string_pretty(&stats)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        let cfg = CliConfig {
            data: Some(data.to_path_buf()),
            out: Some(out.to_path_buf()),
            ..CliConfig::default()
        };
        let meta = metadata("stats", &cfg, Value::Null, Value::Null, &[path], started);
        fs::write(
            out.join("metadata.json"),
            serde_json::to_string_pretty(&meta)? + "\n",
        )
        .context("writing metadata.json")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { data, hops, out } => cmd_prepare(&data, hops, &out),
        Command::Train { run, save_params } => cmd_train(&run, save_params),
        Command::Gridsearch { run, jobs } => cmd_gridsearch(&run, jobs),
        Command::Ablate {
            run,
            jobs,
            variants,
        } => cmd_ablate(&run, jobs, &variants),
        Command::SweepHops { run, depths } => cmd_sweep_hops(&run, &depths),
        Command::Alphas { runs, out } => cmd_alphas(&runs, &out),
        Command::ExportEmbeddings { run, params } => cmd_export(&run, &params),
        Command::Stats { data, out } => cmd_stats(&data, out.as_deref()),
    }
}

fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InputError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<fsgnn::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_status(&err))
        }
    }
}
