//! Best-known hyperparameters for the standard benchmark datasets, for the
//! 3-hop and 8-hop models, plus the large-graph batch setting.

use crate::optim::{GroupHyper, GroupHypers};

/// Optimizer groups plus dropout for one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub hypers: GroupHypers,
    pub dropout: f64,
}

// (wd_sca, lr_sca, wd_fc1, wd_fc2, lr_fc, dropout)
type Row = (&'static str, f64, f64, f64, f64, f64, f64);

const THREE_HOP: &[Row] = &[
    ("cora", 0.1, 0.01, 0.001, 0.0001, 0.01, 0.6),
    ("citeseer", 0.0001, 0.005, 0.001, 0.0, 0.01, 0.5),
    ("pubmed", 0.01, 0.005, 0.0001, 0.0001, 0.01, 0.7),
    ("chameleon", 0.1, 0.005, 0.0, 0.0, 0.005, 0.5),
    ("wisconsin", 0.0001, 0.01, 0.001, 0.0001, 0.01, 0.5),
    ("texas", 0.001, 0.01, 0.001, 0.0, 0.01, 0.7),
    ("cornell", 0.0, 0.01, 0.001, 0.001, 0.01, 0.5),
    ("squirrel", 0.1, 0.04, 0.0, 0.001, 0.01, 0.7),
    ("actor", 0.0, 0.04, 0.001, 0.0001, 0.01, 0.7),
];

const EIGHT_HOP: &[Row] = &[
    ("cora", 0.1, 0.02, 0.001, 0.0001, 0.01, 0.6),
    ("citeseer", 0.0001, 0.01, 0.001, 0.0001, 0.01, 0.5),
    ("pubmed", 0.01, 0.02, 0.0001, 0.0, 0.005, 0.7),
    ("chameleon", 0.1, 0.01, 0.0, 0.0, 0.005, 0.5),
    ("wisconsin", 0.001, 0.02, 0.001, 0.0001, 0.01, 0.5),
    ("texas", 0.01, 0.01, 0.001, 0.0, 0.01, 0.7),
    ("cornell", 0.0, 0.01, 0.001, 0.0001, 0.01, 0.5),
    ("squirrel", 0.1, 0.02, 0.0, 0.0001, 0.01, 0.5),
    ("actor", 0.0001, 0.04, 0.001, 0.0001, 0.01, 0.7),
];

fn from_row(&(_, wd_sca, lr_sca, wd_fc1, wd_fc2, lr_fc, dropout): &Row) -> Preset {
    Preset {
        hypers: GroupHypers {
            sca: GroupHyper::new(lr_sca, wd_sca),
            fc1: GroupHyper::new(lr_fc, wd_fc1),
            fc2: GroupHyper::new(lr_fc, wd_fc2),
        },
        dropout,
    }
}

/// Tuned setting for `dataset` (case-insensitive) at 3 or 8 hops.
pub fn tuned(dataset: &str, hops: usize) -> Option<Preset> {
    let table = match hops {
        3 => THREE_HOP,
        8 => EIGHT_HOP,
        _ => return None,
    };
    let name = dataset.to_ascii_lowercase();
    table.iter().find(|row| row.0 == name).map(from_row)
}

pub fn known_datasets() -> impl Iterator<Item = &'static str> {
    THREE_HOP.iter().map(|row| row.0)
}

/// Manually tuned setting used for batchwise training on a 100M-node graph
/// (hidden width 256, γ = 7, batches of 10 000).
pub fn large_graph() -> Preset {
    Preset {
        hypers: GroupHypers {
            sca: GroupHyper::new(0.0001, 0.1),
            fc1: GroupHyper::new(0.00005, 0.001),
            fc2: GroupHyper::new(0.0002, 0.000001),
        },
        dropout: 0.5,
    }
}
