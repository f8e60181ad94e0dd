//! LibSVM datasets and their random split across agents.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::ParseErrorKind;
use crate::linalg::Matrix;
use crate::seed::rng_from_seed;
use crate::{Error, Result};

/// One labeled sparse sample. Feature indices are 0-based in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: f64,
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, dim: usize) -> Result<Self> {
        if samples.is_empty() || dim == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { samples, dim })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sample count `m`.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Dense `rows × d` feature matrix and label vector for a subset of samples.
    pub fn dense_rows(&self, rows: &[usize]) -> (Matrix, Vec<f64>) {
        let mut a = Matrix::zeros(rows.len(), self.dim);
        let mut labels = Vec::with_capacity(rows.len());
        for (r, &idx) in rows.iter().enumerate() {
            let s = &self.samples[idx];
            for &(j, v) in &s.features {
                a[(r, j)] = v;
            }
            labels.push(s.label);
        }
        (a, labels)
    }

    /// Serializes back to LibSVM text with 1-based indices.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(if s.label > 0.0 { "+1" } else { "-1" });
            for &(j, v) in &s.features {
                write!(out, " {}:{}", j + 1, v).expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }
}

/// Parses LibSVM text: one `label idx:val idx:val ...` sample per nonblank line.
///
/// Lines starting with `#` are skipped. Labels `<= 0` map to `-1` and positive
/// labels to `+1`. The dimension is the largest index seen.
pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut dim = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |kind| Error::Parse { line: line_no, kind };
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("nonblank line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(ParseErrorKind::NonNumeric(label_tok.to_string())))?;
        if !label.is_finite() {
            return Err(err(ParseErrorKind::NonNumeric(label_tok.to_string())));
        }
        let label = if label > 0.0 { 1.0 } else { -1.0 };
        let mut features = Vec::new();
        let mut previous = 0usize;
        for tok in tokens {
            let mut parts = tok.split(':');
            let (Some(idx), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(ParseErrorKind::MalformedPair(tok.to_string())));
            };
            let idx: usize = idx.parse().map_err(|_| err(ParseErrorKind::NonNumeric(tok.to_string())))?;
            let val: f64 = val.parse().map_err(|_| err(ParseErrorKind::NonNumeric(tok.to_string())))?;
            if !val.is_finite() {
                return Err(err(ParseErrorKind::NonNumeric(tok.to_string())));
            }
            if idx == 0 {
                return Err(err(ParseErrorKind::ZeroIndex));
            }
            if idx <= previous {
                return Err(err(ParseErrorKind::NonIncreasingIndex { previous, index: idx }));
            }
            previous = idx;
            dim = dim.max(idx);
            features.push((idx - 1, val));
        }
        samples.push(Sample { label, features });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(samples, dim.max(1))
}

pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    parse_libsvm(&std::fs::read_to_string(path)?)
}

/// Disjoint shards of sample indices, one per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub shards: Vec<Vec<usize>>,
}

/// Shuffles the sample indices and cuts them into `n` contiguous chunks whose
/// sizes differ by at most one.
pub fn partition(ds: &Dataset, n: usize, seed: u64) -> Result<Partition> {
    partition_indices(ds.len(), n, seed)
}

pub fn partition_indices(m: usize, n: usize, seed: u64) -> Result<Partition> {
    if n == 0 {
        return Err(Error::InvalidParameter("partition needs at least one agent".into()));
    }
    if m < n {
        return Err(Error::TooFewSamples { samples: m, agents: n });
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let base = m / n;
    let extra = m % n;
    let mut shards = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let len = base + usize::from(i < extra);
        shards.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(Partition { shards })
}

/// A binary classification set drawn from a noisy logistic model, used where a
/// real LibSVM file is not at hand. Roughly 30% of features are zero per row.
pub fn synthetic_binary(m: usize, d: usize, seed: u64) -> Result<Dataset> {
    if m == 0 || d == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = rng_from_seed(seed);
    let truth: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let scales: Vec<f64> = (0..d).map(|_| 0.25 + 1.75 * rng.random::<f64>()).collect();
    let mut samples = Vec::with_capacity(m);
    for _ in 0..m {
        let mut features = Vec::new();
        let mut margin = 0.0;
        for j in 0..d {
            if rng.random::<f64>() < 0.3 {
                continue;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = (z * scales[j] * 1e4).round() / 1e4;
            if v != 0.0 {
                margin += truth[j] * v;
                features.push((j, v));
            }
        }
        let p = 1.0 / (1.0 + (-margin).exp());
        let label = if rng.random::<f64>() < p { 1.0 } else { -1.0 };
        samples.push(Sample { label, features });
    }
    Dataset::new(samples, d)
}
