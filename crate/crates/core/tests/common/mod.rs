#![allow(dead_code)]

use fsgnn::model::{
    cross_entropy, forward, loss_and_grads, FsgnnParams, Mode, ModelConfig, Variant,
};
use fsgnn::{DenseMatrix, Graph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph, possibly with isolated nodes.
pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DenseMatrix {
    DenseMatrix::from_rows(rows).unwrap()
}

/// Plain triple loop product.
pub fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn dense_adjacency(g: &Graph, self_loops: bool) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v) in g.edges() {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    if self_loops {
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 1.0;
        }
    }
    a
}

/// `D^{-1/2} A D^{-1/2}` with zero rows for isolated nodes.
pub fn dense_sym_normalize(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let inv: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    a.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, v)| inv[i] * v * inv[j])
                .collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

/// A small random model problem: config, parameters with randomized
/// selection scores, row-aligned inputs and targets.
pub struct Instance {
    pub cfg: ModelConfig,
    pub params: FsgnnParams,
    pub inputs: Vec<DenseMatrix>,
    pub targets: Vec<usize>,
}

pub fn tiny_instance(seed: u64, variant: Variant, dropout: f64) -> Instance {
    let mut r = rng(seed ^ 0xA5A5);
    let cfg = ModelConfig {
        hops: r.random_range(0..=2),
        hidden: r.random_range(2..=4),
        classes: r.random_range(2..=4),
        gamma: r.random_range(0.5..3.0),
        dropout,
        variant,
    };
    let d = r.random_range(2..=5);
    let rows = r.random_range(3..=7);
    let mut params = FsgnnParams::init(&cfg, d, seed).unwrap();
    for a in params.raw_alpha.iter_mut() {
        *a = r.random_range(-1.0..1.5);
    }
    let inputs = (0..cfg.num_inputs())
        .map(|_| random_matrix(rows, d, &mut r))
        .collect();
    let targets = (0..rows).map(|_| r.random_range(0..cfg.classes)).collect();
    Instance {
        cfg,
        params,
        inputs,
        targets,
    }
}

/// All parameters flattened in `tensors()` order.
pub fn flatten(p: &FsgnnParams) -> Vec<f64> {
    p.tensors()
        .into_iter()
        .flat_map(|(_, t)| t.to_vec())
        .collect()
}

/// Adds `delta` to flattened entry `index`.
pub fn nudge(p: &mut FsgnnParams, mut index: usize, delta: f64) {
    for (_, t) in p.tensors_mut() {
        if index < t.len() {
            t[index] += delta;
            return;
        }
        index -= t.len();
    }
    panic!("index out of range");
}

pub fn loss(inst: &Instance, params: &FsgnnParams) -> f64 {
    let (logits, _) = forward(params, &inst.cfg, &inst.inputs, Mode::Eval).unwrap();
    cross_entropy(&logits, &inst.targets).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest relative error between the analytic gradient and central
/// differences, measured over the whole parameter vector.
pub fn gradient_error(inst: &Instance) -> f64 {
    let eps = 1e-5;
    let (_, grads) = loss_and_grads(
        &inst.params,
        &inst.cfg,
        &inst.inputs,
        &inst.targets,
        &mut rng(0),
    )
    .unwrap();
    let analytic = flatten(&grads);
    let numeric: Vec<f64> = (0..analytic.len())
        .map(|k| {
            let mut plus = inst.params.clone();
            nudge(&mut plus, k, eps);
            let mut minus = inst.params.clone();
            nudge(&mut minus, k, -eps);
            (loss(inst, &plus) - loss(inst, &minus)) / (2.0 * eps)
        })
        .collect();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-300)
}
