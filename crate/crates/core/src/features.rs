//! Decoupled feature generation: row normalization, hop-feature
//! precomputation and the FSGF on-disk cache.
//!
//! FSGF layout (little-endian, no padding):
//!
//! ```text
//! "FSGF"  u32 version=1  u64 n  u64 d  u64 K
//! (2K+1) × (n·d f64, row-major)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{spmm, SparseMatrix};
use crate::matrix::DenseMatrix;

pub const FSGF_MAGIC: [u8; 4] = *b"FSGF";
pub const FSGF_VERSION: u32 = 1;

const ROW_NORM_EPS: f64 = 1e-12;

/// Divides each row by its L1 norm; rows with norm below `1e-12` are kept
/// as they are.
pub fn row_normalize(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm: f64 = row.iter().map(|v| v.abs()).sum();
        if norm >= ROW_NORM_EPS {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// The ordered list `[X, A·X, Ã·X, A²·X, Ã²·X, …]` of `2K+1` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct HopFeatures {
    hops: usize,
    mats: Vec<DenseMatrix>,
}

impl HopFeatures {
    pub fn new(hops: usize, mats: Vec<DenseMatrix>) -> Result<Self> {
        if mats.len() != 2 * hops + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} hops need {} matrices, got {}",
                hops,
                2 * hops + 1,
                mats.len()
            )));
        }
        let shape = mats[0].shape();
        if let Some(bad) = mats.iter().position(|m| m.shape() != shape) {
            return Err(Error::DimensionMismatch(format!(
                "matrix {bad} has shape {:?}, expected {shape:?}",
                mats[bad].shape()
            )));
        }
        Ok(Self { hops, mats })
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.mats[0].rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.mats[0].cols()
    }

    pub fn mats(&self) -> &[DenseMatrix] {
        &self.mats
    }

    /// Per-branch copies of the selected node rows.
    pub fn gather(&self, rows: &[usize]) -> Result<Vec<DenseMatrix>> {
        self.mats.iter().map(|m| m.gather_rows(rows)).collect()
    }
}

/// Human-readable name of list entry `index`: `X`, `A^k X` or `A~^k X`.
pub fn hop_label(index: usize) -> String {
    match index {
        0 => "X".to_string(),
        i if i % 2 == 1 => format!("A^{}X", i.div_ceil(2)),
        i => format!("A~^{}X", i / 2),
    }
}

/// Whether list entry `index` was propagated with the self-looped operator.
pub fn is_self_looped(index: usize) -> bool {
    index > 0 && index.is_multiple_of(2)
}

/// Precomputes hop features from an already row-normalized `x`.
///
/// `a_sym` is the normalized adjacency without self-loops and `at_sym` the
/// one with them; each hop appends the `a_sym` product before the `at_sym`
/// one.
pub fn generate_hop_features(
    x: &DenseMatrix,
    a_sym: &SparseMatrix,
    at_sym: &SparseMatrix,
    hops: usize,
) -> Result<HopFeatures> {
    for (name, op) in [("A_sym", a_sym), ("Ã_sym", at_sym)] {
        if op.n_rows() != x.rows() || op.n_cols() != x.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{name} is {}x{} but features have {} rows",
                op.n_rows(),
                op.n_cols(),
                x.rows()
            )));
        }
    }
    let mut mats = Vec::with_capacity(2 * hops + 1);
    mats.push(x.clone());
    let mut xa = x.clone();
    let mut xat = x.clone();
    for _ in 0..hops {
        xa = spmm(a_sym, &xa)?;
        xat = spmm(at_sym, &xat)?;
        mats.push(xa.clone());
        mats.push(xat.clone());
    }
    HopFeatures::new(hops, mats)
}

pub fn save_hop_features(hf: &HopFeatures, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_hop_features(hf, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_hop_features(hf: &HopFeatures, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(&FSGF_MAGIC)?;
    w.write_all(&FSGF_VERSION.to_le_bytes())?;
    for v in [hf.num_nodes(), hf.feature_dim(), hf.hops()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for m in hf.mats() {
        for v in m.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_hop_features(path: impl AsRef<Path>) -> Result<HopFeatures> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_hop_features(&mut BufReader::new(file))
}

pub fn read_hop_features(r: &mut impl Read) -> Result<HopFeatures> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if magic != FSGF_MAGIC {
        return Err(Error::BadMagic {
            expected: FSGF_MAGIC,
            found: magic,
        });
    }
    let mut word = [0u8; 4];
    read_exact(r, &mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != FSGF_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = read_u64(r, "n")?;
    let d = read_u64(r, "d")?;
    let hops = read_u64(r, "K")?;
    let count = hops
        .checked_mul(2)
        .and_then(|c| c.checked_add(1))
        .ok_or_else(|| Error::Malformed(format!("hop count {hops} overflows")))?;
    let cells = n
        .checked_mul(d)
        .filter(|c| c.checked_mul(8).is_some())
        .ok_or_else(|| Error::Malformed(format!("shape {n}x{d} overflows")))?;

    let mut mats = Vec::with_capacity(count.min(1024));
    let mut buf = vec![0u8; cells * 8];
    for index in 0..count {
        if let Err(e) = r.read_exact(&mut buf) {
            return Err(match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::Truncated(format!(
                    "K={hops} needs {count} matrices but only {index} are present"
                )),
                _ => Error::Malformed(e.to_string()),
            });
        }
        let values = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        mats.push(DenseMatrix::new(n, d, values)?);
    }
    let mut extra = [0u8; 1];
    match r.read(&mut extra) {
        Ok(0) => {}
        Ok(_) => {
            return Err(Error::Malformed(
                "trailing bytes after the last matrix".into(),
            ))
        }
        Err(e) => return Err(Error::Malformed(e.to_string())),
    }
    HopFeatures::new(hops, mats)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated(format!("header ends before {what}")),
        _ => Error::Malformed(e.to_string()),
    })
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<usize> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    usize::try_from(u64::from_le_bytes(b))
        .map_err(|_| Error::Malformed(format!("{what} does not fit in memory")))
}
