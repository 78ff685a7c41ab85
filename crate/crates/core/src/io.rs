//! Text formats: the dense matrix file, label files and the params document.
//!
//! Matrix file: line 1 holds `n`, followed by `n` lines of `n`
//! space-separated decimal floats, row-major. Floats are written in Rust's
//! shortest round-trip form, so a write/read cycle is lossless. Loading
//! requires exact symmetry.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::{LabelKind, LabelVector, ModelParams, WeightedGraph};

pub fn format_matrix(m: &SymMatrix) -> String {
    let n = m.n();
    let mut out = String::with_capacity(n * n * 20);
    writeln!(out, "{n}").unwrap();
    for i in 0..n {
        for (j, x) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<SymMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let n: usize = header
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad dimension line: {header:?}")))?;
    let mut data = Vec::with_capacity(n * n);
    for row in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {n} rows, found {row}")))?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let x: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad number {tok:?}", row + 1)))?;
            data.push(x);
        }
        if data.len() - before != n {
            return Err(Error::Parse(format!(
                "row {} has {} entries, expected {n}",
                row + 1,
                data.len() - before
            )));
        }
    }
    if lines.next().is_some() {
        return Err(Error::Parse(format!("trailing data after {n} rows")));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if data[i * n + j] != data[j * n + i] {
                return Err(Error::Parse(format!(
                    "matrix is not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    SymMatrix::from_row_major(n, data)
}

pub fn write_graph(path: &Path, g: &WeightedGraph) -> Result<()> {
    std::fs::write(path, format_matrix(g.matrix()))?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<WeightedGraph> {
    let text = std::fs::read_to_string(path)?;
    Ok(WeightedGraph::from_matrix(parse_matrix(&text)?))
}

/// One label per line.
pub fn format_labels(labels: &LabelVector) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for v in labels.values() {
        writeln!(out, "{v}").unwrap();
    }
    out
}

pub fn parse_labels(text: &str, kind: LabelKind) -> Result<LabelVector> {
    let values = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.trim_start_matches('+')
                .parse::<i8>()
                .map_err(|_| Error::Parse(format!("bad label {l:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    match kind {
        LabelKind::SbmSigma => LabelVector::sbm(values),
        LabelKind::PdsZeta => LabelVector::pds(values),
    }
}

pub fn write_labels(path: &Path, labels: &LabelVector) -> Result<()> {
    std::fs::write(path, format_labels(labels))?;
    Ok(())
}

pub fn read_labels(path: &Path, kind: LabelKind) -> Result<LabelVector> {
    parse_labels(&std::fs::read_to_string(path)?, kind)
}

/// Model parameters plus the sampling seed, as stored in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsDocument {
    #[serde(flatten)]
    pub params: ModelParams,
    #[serde(default)]
    pub seed: u64,
}

impl ParamsDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        Ok(Self {
            params: doc.params.validated()?,
            seed: doc.seed,
        })
    }
}
