use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fsgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsgnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two 12-node rings, one per class, joined by a single bridge edge.
fn write_dataset(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let n = 24;
    let mut edges = String::from("# two rings\n");
    for c in 0..2 {
        for i in 0..12 {
            edges += &format!("{}\t{}\n", c * 12 + i, c * 12 + (i + 1) % 12);
        }
    }
    edges += "0\t12\n";
    let mut features = String::new();
    let mut labels = String::new();
    for i in 0..n {
        let y = i / 12;
        let noise = ((i * 7919) % 13) as f64 / 13.0;
        let row = if y == 0 {
            [1.0 + noise, 0.2, noise, 0.5]
        } else {
            [0.2, 1.0 + noise, 0.5, noise]
        };
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        features += &(cells.join("\t") + "\n");
        labels += &format!("{y}\n");
    }
    fs::write(dir.join("edges.tsv"), edges).unwrap();
    fs::write(dir.join("features.tsv"), features).unwrap();
    fs::write(dir.join("labels.tsv"), labels).unwrap();
    fs::write(
        dir.join("meta.json"),
        r#"{"name": "rings", "n": 24, "d": 4, "classes": 2}"#,
    )
    .unwrap();
}

struct Fixture {
    tmp: TempDir,
    data: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let tmp = TempDir::new().unwrap();
        let data = tmp.path().join("rings");
        write_dataset(&data);
        Self { tmp, data }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.tmp.path().join(name)
    }

    fn config(&self, name: &str, json: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, json).unwrap();
        path
    }
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|path| {
            let bytes = fs::read(&path).unwrap();
            (path, bytes)
        })
        .collect();
    files.sort();
    files
}

#[test]
fn prepare_reports_matrix_count_and_is_byte_stable() {
    let f = Fixture::new();
    let out = f.path("feats/rings.fsgf");
    let o = fsgnn(&[
        "prepare",
        "--data",
        p(&f.data),
        "--hops",
        "3",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("7 matrices"), "{text}");
    assert!(text.contains("n=24 d=4 K=3"), "{text}");
    let first = fs::read(&out).unwrap();
    assert_eq!(&first[..4], b"FSGF");
    assert_eq!(first.len(), 4 + 4 + 24 + 7 * 24 * 4 * 8);
    assert!(f.path("feats/rings.fsgf.json").is_file());

    let o = fsgnn(&[
        "prepare",
        "--data",
        p(&f.data),
        "--hops",
        "3",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(&out).unwrap(), first);
}

#[test]
fn missing_features_file_is_an_input_error() {
    let f = Fixture::new();
    fs::remove_file(f.data.join("features.tsv")).unwrap();
    let o = fsgnn(&[
        "prepare",
        "--data",
        p(&f.data),
        "--out",
        p(&f.path("x.fsgf")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("features.tsv"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let f = Fixture::new();
    let cfg = f.config("bad.json", r#"{"learning_rate": 0.1}"#);
    let o = fsgnn(&[
        "train",
        "--data",
        p(&f.data),
        "--config",
        p(&cfg),
        "--out",
        p(&f.path("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn bad_paths_and_values_exit_with_two() {
    let f = Fixture::new();
    let out = f.path("o");
    let missing = f.path("nope.json");
    for args in [
        vec![
            "train",
            "--data",
            p(&f.data),
            "--splits",
            p(&missing),
            "--out",
            p(&out),
        ],
        vec!["train", "--data", p(&missing), "--out", p(&out)],
        vec![
            "train",
            "--data",
            p(&f.data),
            "--dropout",
            "1.5",
            "--out",
            p(&out),
        ],
        vec![
            "train",
            "--data",
            p(&f.data),
            "--preset",
            "nowhere",
            "--out",
            p(&out),
        ],
        vec!["train", "--data", p(&f.data)],
    ] {
        let o = fsgnn(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn diverging_training_exits_with_one() {
    let f = Fixture::new();
    let cfg = f.config(
        "huge.json",
        r#"{"sca": {"lr": 1.7e308, "wd": 0.0}, "fc1": {"lr": 1.7e308, "wd": 0.0},
            "fc2": {"lr": 1.7e308, "wd": 0.0}, "max_epochs": 20, "model": {"dropout": 0.0}}"#,
    );
    let o = fsgnn(&[
        "train",
        "--data",
        p(&f.data),
        "--config",
        p(&cfg),
        "--num-splits",
        "1",
        "--out",
        p(&f.path("o")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn train_is_reproducible_and_leaves_inputs_alone() {
    let f = Fixture::new();
    let before = snapshot(&f.data);
    let cfg = f.config(
        "cfg.json",
        r#"{"max_epochs": 30, "patience": 10, "model": {"hidden": 8, "dropout": 0.2}}"#,
    );
    let run = |out: &Path| {
        let o = fsgnn(&[
            "train",
            "--data",
            p(&f.data),
            "--config",
            p(&cfg),
            "--seed",
            "7",
            "--num-splits",
            "3",
            "--save-params",
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let (a, b) = (f.path("a"), f.path("b"));
    let printed = run(&a);
    run(&b);
    assert!(printed.contains('±'), "{printed}");
    assert!(printed.contains("over 3 splits"), "{printed}");
    for name in ["results.tsv", "runs.json", "splits.json", "params.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(
        fs::read_to_string(a.join("results.tsv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
    assert_eq!(snapshot(&f.data), before);

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "train");
    assert_eq!(meta["config"]["seed"], 7);
    assert_eq!(meta["config"]["model"]["classes"], 2);
    assert_eq!(meta["seeds"], serde_json::json!([7, 8, 9]));
    assert!(meta["wall_time_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn metadata_config_echo_reruns_to_the_same_results() {
    let f = Fixture::new();
    let a = f.path("a");
    let o = fsgnn(&[
        "train",
        "--data",
        p(&f.data),
        "--seed",
        "3",
        "--max-epochs",
        "15",
        "--hidden",
        "4",
        "--variant",
        "shared-w0",
        "--num-splits",
        "2",
        "--out",
        p(&a),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("metadata.json")).unwrap()).unwrap();
    let b = f.path("b");
    let mut echo = meta["config"].clone();
    echo["out"] = serde_json::json!(p(&b));
    let cfg = f.config("echo.json", &echo.to_string());
    let o = fsgnn(&["train", "--config", p(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(a.join("results.tsv")).unwrap(),
        fs::read(b.join("results.tsv")).unwrap()
    );
}

#[test]
fn train_uses_a_prepared_feature_file() {
    let f = Fixture::new();
    let fsgf = f.path("rings.fsgf");
    assert!(fsgnn(&[
        "prepare",
        "--data",
        p(&f.data),
        "--hops",
        "2",
        "--out",
        p(&fsgf)
    ])
    .status
    .success());
    let common = [
        "--data",
        p(&f.data),
        "--max-epochs",
        "10",
        "--num-splits",
        "1",
        "--hops",
        "2",
    ];
    let with = f.path("with");
    let without = f.path("without");
    let mut args = vec!["train", "--features", p(&fsgf), "--out", p(&with)];
    args.extend(common);
    assert!(fsgnn(&args).status.success());
    let mut args = vec!["train", "--out", p(&without)];
    args.extend(common);
    assert!(fsgnn(&args).status.success());
    assert_eq!(
        fs::read(with.join("results.tsv")).unwrap(),
        fs::read(without.join("results.tsv")).unwrap()
    );

    let mut args = vec!["train", "--features", p(&fsgf), "--out", p(&with)];
    args.extend(["--data", p(&f.data), "--hops", "3"]);
    let o = fsgnn(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("K=2"), "{}", stderr(&o));
}

#[test]
fn gridsearch_default_space_has_1080_rows() {
    let f = Fixture::new();
    let out = f.path("grid");
    let o = fsgnn(&[
        "gridsearch",
        "--data",
        p(&f.data),
        "--max-epochs",
        "1",
        "--patience",
        "1",
        "--hidden",
        "2",
        "--num-splits",
        "1",
        "--jobs",
        "4",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tsv = fs::read_to_string(out.join("grid.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1 + 1080);
    assert!(stdout(&o).contains("1080 combos evaluated, 0 failed"));
}

#[test]
fn gridsearch_is_independent_of_job_count() {
    let f = Fixture::new();
    let cfg = f.config(
        "space.json",
        r#"{"max_epochs": 8, "model": {"hidden": 4},
            "space": {"wd_sca": [0.0, 0.1], "lr_sca": [0.01], "wd_fc1": [0.0],
                      "wd_fc2": [0.0, 0.001], "lr_fc": [0.01], "dropout": [0.0, 0.5]}}"#,
    );
    let run = |jobs: &str, out: &Path| {
        let o = fsgnn(&[
            "gridsearch",
            "--data",
            p(&f.data),
            "--config",
            p(&cfg),
            "--num-splits",
            "2",
            "--jobs",
            jobs,
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(out.join("grid.tsv")).unwrap()
    };
    let serial = run("1", &f.path("s"));
    assert_eq!(serial.lines().count(), 1 + 8);
    assert_eq!(serial, run("3", &f.path("p")));
}

#[test]
fn ablate_reports_each_variant() {
    let f = Fixture::new();
    let cfg = f.config(
        "space.json",
        r#"{"max_epochs": 5, "model": {"hidden": 4},
            "space": {"wd_sca": [0.0], "lr_sca": [0.01], "wd_fc1": [0.0],
                      "wd_fc2": [0.0], "lr_fc": [0.01], "dropout": [0.5]}}"#,
    );
    let out = f.path("abl");
    let o = fsgnn(&[
        "ablate",
        "--data",
        p(&f.data),
        "--config",
        p(&cfg),
        "--num-splits",
        "1",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tsv = fs::read_to_string(out.join("ablation.tsv")).unwrap();
    let variants: Vec<&str> = tsv
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(
        variants,
        ["full", "no-softselect", "shared-w0", "no-hopnorm"]
    );

    let o = fsgnn(&[
        "ablate",
        "--data",
        p(&f.data),
        "--config",
        p(&cfg),
        "--num-splits",
        "1",
        "--variants",
        "full,no-hopnorm",
        "--out",
        p(&f.path("abl2")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn sweep_hops_writes_one_row_per_depth() {
    let f = Fixture::new();
    let out = f.path("sweep");
    let o = fsgnn(&[
        "sweep-hops",
        "--data",
        p(&f.data),
        "--k",
        "3,8,16,32",
        "--max-epochs",
        "5",
        "--hidden",
        "4",
        "--num-splits",
        "2",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tsv = fs::read_to_string(out.join("sweep.tsv")).unwrap();
    let hops: Vec<&str> = tsv
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(hops, ["3", "8", "16", "32"]);
}

#[test]
fn alphas_and_embeddings_from_a_training_run() {
    let f = Fixture::new();
    let run = f.path("run");
    let o = fsgnn(&[
        "train",
        "--data",
        p(&f.data),
        "--hops",
        "2",
        "--hidden",
        "3",
        "--max-epochs",
        "10",
        "--num-splits",
        "2",
        "--save-params",
        "--out",
        p(&run),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let out = f.path("alphas");
    let runs = run.join("runs.json");
    let o = fsgnn(&["alphas", "--runs", p(&runs), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tsv = fs::read_to_string(out.join("alphas.tsv")).unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines[0], "dataset\tX\tA^1X\tA~^1X\tA^2X\tA~^2X");
    assert_eq!(lines.len(), 2);
    let total: f64 = lines[1]
        .split('\t')
        .skip(1)
        .map(|v| v.parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);

    let emb = f.path("emb");
    let params = run.join("params.json");
    let o = fsgnn(&[
        "export-embeddings",
        "--data",
        p(&f.data),
        "--hops",
        "2",
        "--hidden",
        "3",
        "--num-splits",
        "1",
        "--params",
        p(&params),
        "--out",
        p(&emb),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(emb.join("embeddings.tsv")).unwrap();
    assert_eq!(text.lines().count(), 24);
    assert!(text.lines().all(|l| l.split('\t').count() == 5 * 3));

    let o = fsgnn(&[
        "export-embeddings",
        "--data",
        p(&f.data),
        "--hops",
        "3",
        "--hidden",
        "3",
        "--params",
        p(&params),
        "--out",
        p(&f.path("emb2")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn stats_prints_counts_and_homophily() {
    let f = Fixture::new();
    let out = f.path("stats");
    let o = fsgnn(&["stats", "--data", p(&f.data), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("n=24 m=25 d=4 C=2"), "{text}");
    // 24 of the 25 edges stay inside a class
    assert!(text.contains("homophily=0.9600"), "{text}");
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["m"], 25);
}
