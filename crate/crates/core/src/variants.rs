//! Hessian-increment compression, lazy Hessian updates and the secant-based
//! adaptive scaling rule.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::{spectral_norm, sym_eigen, Matrix, Vector};
use crate::metrics::HessianPayload;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Exact Hessian tracking, fixed `M`.
    Fixed,
    /// Compressed and lazy Hessian tracking, fixed `M`.
    Ce,
    /// Exact Hessian tracking, adaptive `M`.
    Ada,
    /// Compressed and lazy tracking with adaptive `M`.
    CeAda,
}

impl Family {
    pub fn is_ce(self) -> bool {
        matches!(self, Family::Ce | Family::CeAda)
    }

    pub fn is_ada(self) -> bool {
        matches!(self, Family::Ada | Family::CeAda)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Fixed => "disgrem",
            Family::Ce => "cedisgrem",
            Family::Ada => "adadisgrem",
            Family::CeAda => "ceadadisgrem",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "disgrem" | "fixed" => Ok(Family::Fixed),
            "cedisgrem" | "ce" => Ok(Family::Ce),
            "adadisgrem" | "ada" => Ok(Family::Ada),
            "ceadadisgrem" | "ceada" => Ok(Family::CeAda),
            other => Err(Error::InvalidParameter(format!("unknown variant family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Compression {
    None,
    /// Fraction of the `d(d+1)/2` upper-triangle entries kept.
    TopK(f64),
    /// Number of eigenpairs kept.
    LowRank(usize),
}

/// Secant-rule parameters. `m0_fac = None` starts from the fixed-`M` factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaParams {
    pub m0_fac: Option<f64>,
    pub gamma: f64,
    pub zeta: f64,
    pub eta_c: f64,
}

impl Default for AdaParams {
    fn default() -> Self {
        Self { m0_fac: None, gamma: 0.9, zeta: 2.0, eta_c: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub family: Family,
    pub compression: Compression,
    pub k_lazy: usize,
    pub ada: AdaParams,
    /// Scale the Top-k budget and the lazy period with the current mixing
    /// depth (compressed families only).
    pub depth_coupling: bool,
}

impl VariantConfig {
    pub fn fixed() -> Self {
        Self { family: Family::Fixed, compression: Compression::None, k_lazy: 1, ada: AdaParams::default(), depth_coupling: false }
    }

    /// Compressed family defaults: Top-k at 10% with depth coupling.
    pub fn ce() -> Self {
        Self { family: Family::Ce, compression: Compression::TopK(0.1), depth_coupling: true, ..Self::fixed() }
    }

    pub fn ada() -> Self {
        Self { family: Family::Ada, ..Self::fixed() }
    }

    pub fn ce_ada() -> Self {
        Self { family: Family::CeAda, ..Self::ce() }
    }

    pub fn for_family(family: Family) -> Self {
        match family {
            Family::Fixed => Self::fixed(),
            Family::Ce => Self::ce(),
            Family::Ada => Self::ada(),
            Family::CeAda => Self::ce_ada(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self.compression {
            Compression::TopK(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::InvalidParameter(format!("top-k fraction must be in (0, 1], got {f}")));
            }
            Compression::LowRank(r) if r == 0 || r > d => {
                return Err(Error::InvalidParameter(format!("low-rank rank must be in [1, {d}], got {r}")));
            }
            _ => {}
        }
        if self.k_lazy == 0 {
            return Err(Error::InvalidParameter("k_lazy must be at least 1".into()));
        }
        let a = &self.ada;
        if !(a.gamma > 0.0 && a.gamma < 1.0) || !(a.zeta >= 1.0) || !(a.eta_c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "adaptive parameters need gamma in (0,1), zeta >= 1, eta_c > 0; got {a:?}"
            )));
        }
        if a.m0_fac.is_some_and(|m| !(m > 0.0)) {
            return Err(Error::InvalidParameter("ada m0_fac must be positive".into()));
        }
        Ok(())
    }

    /// Compression used at a given mixing depth.
    pub fn compression_at(&self, depth: usize, depth_cap: Option<usize>) -> Compression {
        match (self.compression, self.depth_coupling && self.family.is_ce(), depth_cap) {
            (Compression::TopK(f), true, Some(cap)) => Compression::TopK(f * (depth as f64 / cap as f64).min(1.0)),
            (c, _, _) => c,
        }
    }

    /// Lazy period used at a given mixing depth: halved once the depth
    /// reaches the cap.
    pub fn k_lazy_at(&self, depth: usize, depth_cap: Option<usize>) -> usize {
        match (self.depth_coupling && self.family.is_ce(), depth_cap) {
            (true, Some(cap)) if depth >= cap => (self.k_lazy / 2).max(1),
            _ => self.k_lazy,
        }
    }
}

/// Number of upper-triangle entries a Top-k fraction retains.
pub fn topk_budget(d: usize, fraction: f64) -> usize {
    let total = d * (d + 1) / 2;
    let b = (fraction * total as f64 - 1e-9).ceil();
    (b.max(1.0) as usize).min(total)
}

/// Sparsified symmetric increment.
#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    pub matrix: Matrix,
    /// Retained upper-triangle entries (the wire budget).
    pub entries: usize,
}

/// Keeps the `⌈fraction · d(d+1)/2⌉` largest-magnitude upper-triangle entries
/// (ties broken by `(row, col)` order) and mirrors them.
pub fn compress_topk(delta: &Matrix, fraction: f64) -> Result<TopK> {
    let d = delta.nrows();
    if delta.ncols() != d {
        return Err(Error::DimensionMismatch("top-k needs a square matrix".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("top-k fraction must be in (0, 1], got {fraction}")));
    }
    let b = topk_budget(d, fraction);
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            entries.push((i, j, delta[(i, j)]));
        }
    }
    // stable sort keeps the (row, col) order among equal magnitudes
    entries.sort_by(|a, b| b.2.abs().partial_cmp(&a.2.abs()).unwrap_or(Ordering::Equal));
    let mut out = Matrix::zeros(d, d);
    for &(i, j, v) in entries.iter().take(b) {
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(TopK { matrix: out, entries: b })
}

/// Rank-`r` symmetric truncation `V_r diag(μ) V_rᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRank {
    /// `d × r`, orthonormal columns.
    pub vectors: Matrix,
    pub values: Vec<f64>,
    /// Dropped eigenvalues, largest magnitude first.
    pub dropped: Vec<f64>,
}

impl LowRank {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.values[j];
        }
        crate::linalg::symmetrize(&(scaled * self.vectors.transpose()))
    }

    /// `sqrt(Σ dropped μ²)`, the exact Frobenius truncation error.
    pub fn tail_norm(&self) -> f64 {
        self.dropped.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Best rank-`r` symmetric approximation: the `r` eigenpairs of largest
/// `|μ|`, ties broken by larger signed value, then by index.
pub fn compress_lowrank(delta: &Matrix, r: usize) -> Result<LowRank> {
    let d = delta.nrows();
    if r == 0 || r > d {
        return Err(Error::InvalidParameter(format!("rank must be in [1, {d}], got {r}")));
    }
    let eig = sym_eigen(&crate::linalg::symmetrize(delta)).map_err(|_| Error::CompressionFailure)?;
    let mut order: Vec<usize> = (0..d).collect();
    let mu = &eig.eigenvalues;
    order.sort_by(|&a, &b| {
        mu[b]
            .abs()
            .partial_cmp(&mu[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(mu[b].partial_cmp(&mu[a]).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });
    let mut vectors = Matrix::zeros(d, r);
    let mut values = Vec::with_capacity(r);
    for (slot, &idx) in order.iter().take(r).enumerate() {
        vectors.set_column(slot, &eig.eigenvectors.column(idx));
        values.push(mu[idx]);
    }
    let dropped = order.iter().skip(r).map(|&i| mu[i]).collect();
    Ok(LowRank { vectors, values, dropped })
}

/// A compressed Hessian increment together with its wire encoding.
#[derive(Debug, Clone)]
pub struct CompressedIncrement {
    pub matrix: Matrix,
    pub payload: HessianPayload,
    /// Set when low-rank truncation failed and the raw increment was sent.
    pub fell_back: bool,
}

pub fn compress_increment(delta: Matrix, compression: Compression) -> CompressedIncrement {
    match compression {
        Compression::None => CompressedIncrement { matrix: delta, payload: HessianPayload::Dense, fell_back: false },
        Compression::TopK(f) => match compress_topk(&delta, f) {
            Ok(t) => CompressedIncrement {
                matrix: t.matrix,
                payload: HessianPayload::TopK { entries: t.entries },
                fell_back: false,
            },
            Err(_) => CompressedIncrement { matrix: delta, payload: HessianPayload::Dense, fell_back: true },
        },
        Compression::LowRank(r) => match compress_lowrank(&delta, r) {
            Ok(l) => CompressedIncrement {
                matrix: l.reconstruct(),
                payload: HessianPayload::LowRank { rank: r },
                fell_back: false,
            },
            Err(_) => CompressedIncrement { matrix: delta, payload: HessianPayload::Dense, fell_back: true },
        },
    }
}

/// Whether iteration `k` runs the Hessian-tracker exchange.
pub fn lazy_gate(k: usize, k_lazy: usize) -> bool {
    k % k_lazy.max(1) == 0
}

/// Per-agent adaptive scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaState {
    pub m_hat: f64,
    pub m_hat0: f64,
    /// Last secant estimate `L̂`.
    pub l_hat: f64,
}

impl AdaState {
    pub fn new(m0: f64) -> Self {
        Self { m_hat: m0, m_hat0: m0, l_hat: 0.0 }
    }
}

/// `M̂ ← max(γ M̂_prev, ζ min(L̂, η_c M̂_0))` with the secant ratio
/// `L̂ = ‖H_k − H_{k−1}‖₂ / ‖x_k − x_{k−1}‖` (zero when the point did not move).
pub fn adaptive_m_update(
    st: &mut AdaState,
    x_k: &Vector,
    x_km1: &Vector,
    hess_k: &Matrix,
    hess_km1: &Matrix,
    params: &AdaParams,
) -> f64 {
    let step = (x_k - x_km1).norm();
    st.l_hat = if x_k == x_km1 || step < 1e-14 { 0.0 } else { spectral_norm(&(hess_k - hess_km1)) / step };
    st.m_hat = (params.gamma * st.m_hat).max(params.zeta * st.l_hat.min(params.eta_c * st.m_hat0));
    st.m_hat
}
