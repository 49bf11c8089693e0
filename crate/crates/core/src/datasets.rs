//! Canonical on-disk datasets, train/val/test splits and a planted-partition
//! generator for tests.
//!
//! A dataset directory holds:
//!
//! * `meta.json`: `{"name": str, "n": int, "d": int, "classes": int}`
//! * `edges.tsv`: one `u<TAB>v` per undirected edge, `#` comments allowed
//! * `features.tsv`: `n` lines of `d` tab-separated reals
//! * `labels.tsv`: `n` lines holding one integer class each
//!
//! Splits live in a JSON array of `{"train": [..], "val": [..], "test": [..]}`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_adjacency, symmetric_normalize};
use crate::graph::{Graph, SparseMatrix};
use crate::matrix::DenseMatrix;

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    name: String,
    n: usize,
    d: usize,
    classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    /// `n × d` raw node features.
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        graph: Graph,
        features: DenseMatrix,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n || labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "graph has {n} nodes but {} feature rows and {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
            return Err(Error::DimensionMismatch(format!(
                "label {y} of node {i} is outside 0..{classes}"
            )));
        }
        Ok(Self {
            name: name.into(),
            graph,
            features,
            labels,
            classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Normalized operators `(A_sym, Ã_sym)`.
    pub fn operators(&self) -> Result<(SparseMatrix, SparseMatrix)> {
        Ok((
            symmetric_normalize(&build_adjacency(&self.graph, false))?,
            symmetric_normalize(&build_adjacency(&self.graph, true))?,
        ))
    }

    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.classes];
        for (i, &y) in self.labels.iter().enumerate() {
            members[y].push(i);
        }
        members
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let meta: Meta = serde_json::from_str(&read_text(&meta_path)?)
        .map_err(|e| Error::parse(&meta_path, e.line(), e.to_string()))?;

    let edges_path = dir.join(EDGES_FILE);
    let edges_text = read_text(&edges_path)?;
    let mut edges = Vec::new();
    for (line, text) in data_lines(&edges_text) {
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                &edges_path,
                line,
                format!("expected 2 tab-separated columns, found {}", fields.len()),
            ));
        }
        let mut ends = [0usize; 2];
        for (slot, field) in ends.iter_mut().zip(&fields) {
            *slot = field.trim().parse().map_err(|_| {
                Error::parse(&edges_path, line, format!("invalid node index {field:?}"))
            })?;
            if *slot >= meta.n {
                return Err(Error::parse(
                    &edges_path,
                    line,
                    format!("node index {} out of range for n={}", slot, meta.n),
                ));
            }
        }
        edges.push((ends[0], ends[1]));
    }
    let graph = Graph::new(meta.n, edges).map_err(|e| {
        let line = match &e {
            Error::SelfLoop(u) => first_line_of(&edges_text, |a, b| a == *u && b == *u),
            Error::DuplicateEdge(u, v) => {
                last_line_of(&edges_text, |a, b| (a, b) == (*u, *v) || (b, a) == (*u, *v))
            }
            _ => None,
        };
        Error::parse(&edges_path, line.unwrap_or(0), e.to_string())
    })?;

    let features_path = dir.join(FEATURES_FILE);
    let features_text = read_text(&features_path)?;
    let mut values = Vec::with_capacity(meta.n * meta.d);
    let mut rows = 0usize;
    for (line, text) in features_text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let text = text.trim_end_matches('\r');
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != meta.d {
            return Err(Error::parse(
                &features_path,
                line,
                format!("expected {} columns, found {}", meta.d, fields.len()),
            ));
        }
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(
                    &features_path,
                    line,
                    format!("column {}: invalid number {field:?}", col + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    &features_path,
                    line,
                    format!("column {}: non-finite value {field}", col + 1),
                ));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows != meta.n {
        return Err(Error::parse(
            &features_path,
            features_text.lines().count(),
            format!("expected {} rows, found {rows}", meta.n),
        ));
    }
    let features = DenseMatrix::new(meta.n, meta.d, values)?;

    let labels_path = dir.join(LABELS_FILE);
    let labels_text = read_text(&labels_path)?;
    let mut labels = Vec::with_capacity(meta.n);
    for (line, text) in labels_text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
    {
        if text.is_empty() {
            continue;
        }
        let y: usize = text
            .parse()
            .map_err(|_| Error::parse(&labels_path, line, format!("invalid label {text:?}")))?;
        if y >= meta.classes {
            return Err(Error::parse(
                &labels_path,
                line,
                format!("label {y} out of range for {} classes", meta.classes),
            ));
        }
        labels.push(y);
    }
    if labels.len() != meta.n {
        return Err(Error::parse(
            &labels_path,
            labels_text.lines().count(),
            format!("expected {} labels, found {}", meta.n, labels.len()),
        ));
    }

    Dataset::new(meta.name, graph, features, labels, meta.classes)
}

fn parse_edge_line(text: &str) -> Option<(usize, usize)> {
    let mut it = text.split('\t').map(|f| f.trim().parse::<usize>());
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(a)), Some(Ok(b)), None) => Some((a, b)),
        _ => None,
    }
}

fn first_line_of(text: &str, pred: impl Fn(usize, usize) -> bool) -> Option<usize> {
    data_lines(text)
        .find(|(_, l)| parse_edge_line(l).is_some_and(|(a, b)| pred(a, b)))
        .map(|(n, _)| n)
}

fn last_line_of(text: &str, pred: impl Fn(usize, usize) -> bool) -> Option<usize> {
    data_lines(text)
        .filter(|(_, l)| parse_edge_line(l).is_some_and(|(a, b)| pred(a, b)))
        .map(|(n, _)| n)
        .last()
}

pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Meta {
        name: ds.name.clone(),
        n: ds.num_nodes(),
        d: ds.feature_dim(),
        classes: ds.classes,
    };
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
        .map_err(|e| Error::io(&meta_path, e))?;

    write_lines(&dir.join(EDGES_FILE), |w| {
        for (u, v) in ds.graph.edges() {
            writeln!(w, "{u}\t{v}")?;
        }
        Ok(())
    })?;
    write_lines(&dir.join(FEATURES_FILE), |w| {
        for i in 0..ds.features.rows() {
            let row = ds.features.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    w.write_all(b"\t")?;
                }
                // Display for f64 is the shortest exact round-trip form.
                write!(w, "{v}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    write_lines(&dir.join(LABELS_FILE), |w| {
        for y in &ds.labels {
            writeln!(w, "{y}")?;
        }
        Ok(())
    })
}

fn write_lines(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Train/validation/test node indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Nonempty, in range for `n` nodes, pairwise disjoint, no repeats.
    pub fn validate(&self, n: usize, index: usize) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidSplit { index, msg });
        let mut owner: Vec<Option<&str>> = vec![None; n];
        for (name, part) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            if part.is_empty() {
                return err(format!("{name} set is empty"));
            }
            for &i in part {
                if i >= n {
                    return err(format!("{name} index {i} out of range for {n} nodes"));
                }
                if let Some(other) = owner[i] {
                    return err(if other == name {
                        format!("index {i} repeated in {name}")
                    } else {
                        format!("index {i} appears in both {other} and {name}")
                    });
                }
                owner[i] = Some(name);
            }
        }
        Ok(())
    }
}

pub fn load_splits(path: impl AsRef<Path>, n: usize) -> Result<Vec<Split>> {
    let path = path.as_ref();
    let splits: Vec<Split> = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    if splits.is_empty() {
        return Err(Error::parse(path, 1, "no splits present"));
    }
    for (i, s) in splits.iter().enumerate() {
        s.validate(n, i)?;
    }
    Ok(splits)
}

pub fn save_splits(splits: &[Split], path: impl AsRef<Path>) -> Result<()> {
    let path: PathBuf = path.as_ref().into();
    fs::write(&path, serde_json::to_string(splits)? + "\n").map_err(|e| Error::io(&path, e))
}

/// Per-class 60/20/20 splits. Split `s` shuffles each class (in class order)
/// with a generator seeded by `seed + s`; train and validation take
/// `⌊0.6·n_c⌋` and `⌊0.2·n_c⌋` nodes and test takes the remainder.
pub fn generate_random_splits(ds: &Dataset, count: usize, seed: u64) -> Result<Vec<Split>> {
    let members = ds.class_members();
    if let Some((c, m)) = members.iter().enumerate().find(|(_, m)| m.len() < 3) {
        return Err(Error::Config(format!(
            "class {c} has {} members; at least 3 are needed for a 60/20/20 split",
            m.len()
        )));
    }
    (0..count)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
            let mut split = Split {
                train: Vec::new(),
                val: Vec::new(),
                test: Vec::new(),
            };
            for class in &members {
                let mut nodes = class.clone();
                nodes.shuffle(&mut rng);
                let n_train = nodes.len() * 3 / 5;
                let n_val = nodes.len() / 5;
                split.train.extend_from_slice(&nodes[..n_train]);
                split
                    .val
                    .extend_from_slice(&nodes[n_train..n_train + n_val]);
                split.test.extend_from_slice(&nodes[n_train + n_val..]);
            }
            split.validate(ds.num_nodes(), s)?;
            Ok(split)
        })
        .collect()
}

/// Planted-partition generator.
///
/// Nodes are assigned to `classes` contiguous, near-equal blocks. With
/// `P_in` same-class pairs and `P_out` cross-class pairs, an expected edge
/// count `E` is split as
///
/// ```text
/// p_in  = h·E / P_in        p_out = (1 − h)·E / P_out
/// ```
///
/// so the expected homophily ratio `p_in·P_in / (p_in·P_in + p_out·P_out)`
/// equals `h`. `E = n·mean_degree/2`, reduced if needed so that neither
/// probability exceeds one. Features are `μ_y + ε` with class means
/// `μ_c ~ mean_scale·N(0, I)` and unit-variance noise `ε ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub nodes: usize,
    pub dim: usize,
    pub classes: usize,
    pub homophily: f64,
    pub mean_degree: f64,
    pub mean_scale: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(nodes: usize, dim: usize, classes: usize, homophily: f64, seed: u64) -> Self {
        Self {
            nodes,
            dim,
            classes,
            homophily,
            mean_degree: 10.0,
            mean_scale: 1.0,
            seed,
        }
    }

    /// Block sizes and the `(p_in, p_out)` pair.
    pub fn edge_probabilities(&self) -> Result<(Vec<usize>, f64, f64)> {
        let (n, c, h) = (self.nodes, self.classes, self.homophily);
        if c == 0 || n < 3 * c {
            return Err(Error::Config(format!(
                "need at least 3 nodes per class, got n={n} for {c} classes"
            )));
        }
        if !(0.0..=1.0).contains(&h) {
            return Err(Error::Config(format!("homophily {h} outside [0, 1]")));
        }
        let sizes: Vec<usize> = (0..c).map(|k| (k + 1) * n / c - k * n / c).collect();
        let p_in_pairs: f64 = sizes.iter().map(|&s| (s * (s - 1) / 2) as f64).sum();
        let total_pairs = (n * (n - 1) / 2) as f64;
        let p_out_pairs = total_pairs - p_in_pairs;
        if h < 1.0 && p_out_pairs == 0.0 {
            return Err(Error::Config(format!(
                "homophily {h} is infeasible with a single class"
            )));
        }
        let mut expected = n as f64 * self.mean_degree / 2.0;
        if h > 0.0 {
            expected = expected.min(p_in_pairs / h);
        }
        if h < 1.0 {
            expected = expected.min(p_out_pairs / (1.0 - h));
        }
        let p_in = if h > 0.0 {
            (h * expected / p_in_pairs).min(1.0)
        } else {
            0.0
        };
        let p_out = if h < 1.0 {
            ((1.0 - h) * expected / p_out_pairs).min(1.0)
        } else {
            0.0
        };
        Ok((sizes, p_in, p_out))
    }

    pub fn generate(&self) -> Result<Dataset> {
        let (sizes, p_in, p_out) = self.edge_probabilities()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, &s| {
                let start = *acc;
                *acc += s;
                Some(start)
            })
            .collect();
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
            .collect();

        let mut edges = Vec::new();
        for a in 0..self.classes {
            for b in a..self.classes {
                let p = if a == b { p_in } else { p_out };
                let cols = sizes[b];
                sample_block(&mut rng, sizes[a] * cols, p, |k| {
                    let (i, j) = (offsets[a] + k / cols, offsets[b] + k % cols);
                    // diagonal blocks keep only the upper triangle
                    if a != b || i < j {
                        edges.push((i, j));
                    }
                });
            }
        }
        let graph = Graph::new(self.nodes, edges)?;

        let means: Vec<Vec<f64>> = (0..self.classes)
            .map(|_| {
                (0..self.dim)
                    .map(|_| self.mean_scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let mut values = Vec::with_capacity(self.nodes * self.dim);
        for &y in &labels {
            for mu in &means[y] {
                values.push(mu + rng.sample::<f64, _>(StandardNormal));
            }
        }
        let features = DenseMatrix::new(self.nodes, self.dim, values)?;
        Dataset::new(
            format!("synth-h{}-s{}", self.homophily, self.seed),
            graph,
            features,
            labels,
            self.classes,
        )
    }
}

/// Convenience wrapper with the default degree and feature scale.
pub fn synth_generate(
    n: usize,
    d: usize,
    classes: usize,
    homophily: f64,
    seed: u64,
) -> Result<Dataset> {
    SynthSpec::new(n, d, classes, homophily, seed).generate()
}

/// Calls `emit(k)` for each `k < total` independently with probability `p`,
/// drawing geometric gaps instead of one coin per slot.
fn sample_block(rng: &mut ChaCha8Rng, total: usize, p: f64, mut emit: impl FnMut(usize)) {
    if p <= 0.0 || total == 0 {
        return;
    }
    if p >= 1.0 {
        (0..total).for_each(emit);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut k: usize = 0;
    loop {
        let u: f64 = rng.random();
        let gap = ((1.0 - u).ln() / log_q).floor();
        if !gap.is_finite() || gap >= (total - k) as f64 {
            return;
        }
        k += gap as usize;
        emit(k);
        k += 1;
        if k >= total {
            return;
        }
    }
}
