//! Benchmark objectives with analytic gradients and Hessians.
//!
//! Every agent holds one [`Objective`]; the global cost is the agent average.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{partition, Dataset};
use crate::linalg::{sym_spectral_norm, Matrix, Vector};
use crate::seed::{rng_from_seed, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Ridge,
    QuadBad,
    LogSumExp,
    Huber,
    #[serde(rename = "logreg_real")]
    LogRegReal,
    LinLog,
    Rosenbrock,
    Styblinski,
    #[serde(rename = "logreg_ncvr")]
    LogRegNcvr,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 9] = [
        ObjectiveKind::Ridge,
        ObjectiveKind::QuadBad,
        ObjectiveKind::LogSumExp,
        ObjectiveKind::Huber,
        ObjectiveKind::LogRegReal,
        ObjectiveKind::LinLog,
        ObjectiveKind::Rosenbrock,
        ObjectiveKind::Styblinski,
        ObjectiveKind::LogRegNcvr,
    ];

    pub fn is_convex(self) -> bool {
        matches!(
            self,
            ObjectiveKind::Ridge
                | ObjectiveKind::QuadBad
                | ObjectiveKind::LogSumExp
                | ObjectiveKind::Huber
                | ObjectiveKind::LogRegReal
        )
    }

    pub fn needs_dataset(self) -> bool {
        matches!(self, ObjectiveKind::LogRegReal | ObjectiveKind::LogRegNcvr)
    }

    /// All agents share one function.
    pub fn is_homogeneous(self) -> bool {
        matches!(self, ObjectiveKind::Rosenbrock | ObjectiveKind::Styblinski)
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Ridge => "ridge",
            ObjectiveKind::QuadBad => "quadbad",
            ObjectiveKind::LogSumExp => "logsumexp",
            ObjectiveKind::Huber => "huber",
            ObjectiveKind::LogRegReal => "logreg_real",
            ObjectiveKind::LinLog => "linlog",
            ObjectiveKind::Rosenbrock => "rosenbrock",
            ObjectiveKind::Styblinski => "styblinski",
            ObjectiveKind::LogRegNcvr => "logreg_ncvr",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        ObjectiveKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown problem `{s}`")))
    }
}

/// Per-kind constants. Defaults follow the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    pub ridge_rows: usize,
    pub ridge_lambda: f64,
    pub ridge_noise: f64,
    pub quad_kappa: f64,
    pub lse_sigma: f64,
    pub huber_rows: usize,
    pub huber_delta: f64,
    pub logreg_iota: f64,
    pub ncvr_alpha: f64,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        Self {
            ridge_rows: 150,
            ridge_lambda: 1e-3,
            ridge_noise: 0.05,
            quad_kappa: 1e3,
            lse_sigma: 0.5,
            huber_rows: 5,
            huber_delta: 1.0,
            logreg_iota: 1e-2,
            ncvr_alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
enum Data {
    Ridge { a: Matrix, y: Vector, lambda: f64 },
    QuadBad { q: Vector, b: Vector },
    /// `a` is `d × p`.
    LogSumExp { a: Matrix, b: Vector, sigma: f64 },
    /// `a` is `rows × d`.
    Huber { a: Matrix, b: Vector, delta: f64 },
    /// Logistic loss over a shard; `ridge` adds `ι/2‖x‖²`, `ncvr` adds the
    /// bounded penalty `α Σ x²/(1+x²)`.
    Logistic { a: Matrix, labels: Vec<f64>, ridge: f64, ncvr: f64 },
    LinLog { a: Matrix, b: Vector },
    Rosenbrock,
    Styblinski,
}

/// One agent's local cost.
#[derive(Debug, Clone)]
pub struct Objective {
    kind: ObjectiveKind,
    dim: usize,
    data: Data,
    /// Optional known Lipschitz constants of the gradient and Hessian. Never
    /// estimated; diagnostics only.
    pub l1: Option<f64>,
    pub l2: Option<f64>,
}

/// Value, gradient and Hessian at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Vector,
    pub hess: Matrix,
}

impl Objective {
    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_point(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(format!("point of length {} for d = {}", x.len(), self.dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.eval(x, false, false).0)
    }

    pub fn value_grad(&self, x: &Vector) -> Result<(f64, Vector)> {
        self.check_point(x)?;
        let (v, g, _) = self.eval(x, true, false);
        Ok((v, g))
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        Ok(self.value_grad(x)?.1)
    }

    pub fn hessian(&self, x: &Vector) -> Result<Matrix> {
        Ok(self.value_grad_hess(x)?.hess)
    }

    pub fn value_grad_hess(&self, x: &Vector) -> Result<Evaluation> {
        self.check_point(x)?;
        let (value, grad, hess) = self.eval(x, true, true);
        Ok(Evaluation { value, grad, hess })
    }

    fn eval(&self, x: &Vector, want_grad: bool, want_hess: bool) -> (f64, Vector, Matrix) {
        let d = self.dim;
        let mut grad = Vector::zeros(if want_grad { d } else { 0 });
        let mut hess = Matrix::zeros(if want_hess { d } else { 0 }, if want_hess { d } else { 0 });
        let value = match &self.data {
            Data::Ridge { a, y, lambda } => {
                let r = a * x - y;
                if want_grad {
                    grad = a.tr_mul(&r) + x * *lambda;
                }
                if want_hess {
                    hess = a.tr_mul(a);
                    for i in 0..d {
                        hess[(i, i)] += lambda;
                    }
                }
                0.5 * r.norm_squared() + 0.5 * lambda * x.norm_squared()
            }
            Data::QuadBad { q, b } => {
                if want_grad {
                    grad = q.component_mul(x) + b;
                }
                if want_hess {
                    hess = Matrix::from_diagonal(q);
                }
                0.5 * x.dot(&q.component_mul(x)) + b.dot(x)
            }
            Data::LogSumExp { a, b, sigma } => {
                let z = a.tr_mul(x) - b;
                let zmax = z.max();
                let e = z.map(|v| ((v - zmax) / sigma).exp());
                let s = e.sum();
                let pi = &e / s;
                if want_grad {
                    grad = a * &pi;
                }
                if want_hess {
                    // (1/σ) A (diag π − ππᵀ) Aᵀ
                    let api = a * &pi;
                    let mut scaled = a.clone();
                    for (j, mut col) in scaled.column_iter_mut().enumerate() {
                        col *= pi[j];
                    }
                    hess = (scaled * a.transpose() - &api * api.transpose()) / *sigma;
                    hess = crate::linalg::symmetrize(&hess);
                }
                zmax + sigma * s.ln()
            }
            Data::Huber { a, b, delta } => {
                let r = a * x - b;
                let mut v = 0.0;
                let mut d1 = Vector::zeros(r.len());
                let mut d2 = Vector::zeros(r.len());
                for (j, &rj) in r.iter().enumerate() {
                    let u = rj / delta;
                    let root = (1.0 + u * u).sqrt();
                    v += delta * delta * (root - 1.0);
                    d1[j] = rj / root;
                    d2[j] = 1.0 / (root * root * root);
                }
                if want_grad {
                    grad = a.tr_mul(&d1);
                }
                if want_hess {
                    hess = weighted_gram(a, &d2);
                }
                v
            }
            Data::Logistic { a, labels, ridge, ncvr } => {
                let m = labels.len() as f64;
                let margins = a * x;
                let mut v = 0.0;
                let mut coef = Vector::zeros(labels.len());
                let mut curv = Vector::zeros(labels.len());
                for (j, (&t, &yj)) in margins.iter().zip(labels).enumerate() {
                    let z = -yj * t;
                    v += softplus(z);
                    let sig = sigmoid(z);
                    coef[j] = -yj * sig / m;
                    curv[j] = sig * (1.0 - sig) / m;
                }
                v /= m;
                if want_grad {
                    grad = a.tr_mul(&coef);
                }
                if want_hess {
                    hess = weighted_gram(a, &curv);
                }
                if *ridge > 0.0 {
                    v += 0.5 * ridge * x.norm_squared();
                    if want_grad {
                        grad.axpy(*ridge, x, 1.0);
                    }
                    if want_hess {
                        for i in 0..d {
                            hess[(i, i)] += ridge;
                        }
                    }
                }
                if *ncvr > 0.0 {
                    for i in 0..d {
                        let xi = x[i];
                        let q = 1.0 + xi * xi;
                        v += ncvr * xi * xi / q;
                        if want_grad {
                            grad[i] += ncvr * 2.0 * xi / (q * q);
                        }
                        if want_hess {
                            hess[(i, i)] += ncvr * (2.0 - 6.0 * xi * xi) / (q * q * q);
                        }
                    }
                }
                v
            }
            Data::LinLog { a, b } => {
                let r = a * x - b;
                let mut v = 0.0;
                let mut d1 = Vector::zeros(r.len());
                let mut d2 = Vector::zeros(r.len());
                for (j, &rj) in r.iter().enumerate() {
                    let (l, l1, l2) = linlog(rj);
                    v += l;
                    d1[j] = l1;
                    d2[j] = l2;
                }
                if want_grad {
                    grad = a.tr_mul(&d1);
                }
                if want_hess {
                    hess = weighted_gram(a, &d2);
                }
                v
            }
            Data::Rosenbrock => {
                let mut v = 0.0;
                for j in 0..d / 2 {
                    let (p, q) = (x[2 * j], x[2 * j + 1]);
                    let t = q - p * p;
                    v += 100.0 * t * t + (p - 1.0) * (p - 1.0);
                    if want_grad {
                        grad[2 * j] = -400.0 * p * t + 2.0 * (p - 1.0);
                        grad[2 * j + 1] = 200.0 * t;
                    }
                    if want_hess {
                        hess[(2 * j, 2 * j)] = 1200.0 * p * p - 400.0 * q + 2.0;
                        hess[(2 * j, 2 * j + 1)] = -400.0 * p;
                        hess[(2 * j + 1, 2 * j)] = -400.0 * p;
                        hess[(2 * j + 1, 2 * j + 1)] = 200.0;
                    }
                }
                v
            }
            Data::Styblinski => {
                let mut v = 0.0;
                for (j, &xj) in x.iter().enumerate() {
                    let x2 = xj * xj;
                    v += x2 * x2 - 16.0 * x2 + 5.0 * xj;
                    if want_grad {
                        grad[j] = 4.0 * x2 * xj - 32.0 * xj + 5.0;
                    }
                    if want_hess {
                        hess[(j, j)] = 12.0 * x2 - 32.0;
                    }
                }
                v
            }
        };
        (value, grad, hess)
    }

    /// Residuals `A x − b` for the piecewise kinds, used to keep
    /// finite-difference probes away from kinks.
    pub fn kink_distance(&self, x: &Vector) -> Option<f64> {
        match &self.data {
            Data::LinLog { a, b } => {
                let r = a * x - b;
                Some(r.iter().map(|v| (v.abs() - 1.0).abs()).fold(f64::INFINITY, f64::min))
            }
            _ => None,
        }
    }
}

/// `Aᵀ diag(w) A` for a `rows × d` matrix `A`.
fn weighted_gram(a: &Matrix, w: &Vector) -> Matrix {
    let mut scaled = a.clone();
    for (j, mut row) in scaled.row_iter_mut().enumerate() {
        row *= w[j];
    }
    crate::linalg::symmetrize(&a.tr_mul(&scaled))
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ℓ(r) = r²/2` for `|r| ≤ 1`, `ln|r| + 1/2` otherwise, with its first two
/// derivatives. At `|r| = 1` the quadratic branch wins.
fn linlog(r: f64) -> (f64, f64, f64) {
    if r.abs() <= 1.0 {
        (0.5 * r * r, r, 1.0)
    } else {
        (r.abs().ln() + 0.5, 1.0 / r, -1.0 / (r * r))
    }
}

/// The agents' local objectives for one problem instance.
#[derive(Debug, Clone)]
pub struct ObjectiveSuite {
    kind: ObjectiveKind,
    locals: Vec<Objective>,
}

impl ObjectiveSuite {
    pub fn new(locals: Vec<Objective>) -> Result<Self> {
        let first = locals
            .first()
            .ok_or_else(|| Error::InvalidParameter("suite needs at least one agent".into()))?;
        let (kind, dim) = (first.kind, first.dim);
        if locals.iter().any(|o| o.kind != kind || o.dim != dim) {
            return Err(Error::InvalidParameter("all local objectives must share kind and dimension".into()));
        }
        Ok(Self { kind, locals })
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.locals[0].dim
    }

    pub fn n_agents(&self) -> usize {
        self.locals.len()
    }

    pub fn locals(&self) -> &[Objective] {
        &self.locals
    }

    pub fn local(&self, i: usize) -> &Objective {
        &self.locals[i]
    }

    /// Global average `f(x) = (1/N) Σ f_i(x)`.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        let mut v = 0.0;
        for o in &self.locals {
            v += o.value(x)?;
        }
        Ok(v / self.locals.len() as f64)
    }

    pub fn value_grad(&self, x: &Vector) -> Result<(f64, Vector)> {
        let mut v = 0.0;
        let mut g = Vector::zeros(self.dim());
        for o in &self.locals {
            let (vi, gi) = o.value_grad(x)?;
            v += vi;
            g += gi;
        }
        let n = self.locals.len() as f64;
        Ok((v / n, g / n))
    }

    pub fn value_grad_hess(&self, x: &Vector) -> Result<Evaluation> {
        let d = self.dim();
        let mut out = Evaluation { value: 0.0, grad: Vector::zeros(d), hess: Matrix::zeros(d, d) };
        for o in &self.locals {
            let e = o.value_grad_hess(x)?;
            out.value += e.value;
            out.grad += e.grad;
            out.hess += e.hess;
        }
        let n = self.locals.len() as f64;
        out.value /= n;
        out.grad /= n;
        out.hess /= n;
        Ok(out)
    }
}

fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn gaussian_vector(rng: &mut Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

/// Generates one problem instance with independent per-agent data.
///
/// Logistic kinds take their dimension from `dataset` and ignore `d`.
pub fn build_suite(
    kind: ObjectiveKind,
    n: usize,
    d: usize,
    seed: u64,
    params: &ObjectiveParams,
    dataset: Option<&Dataset>,
) -> Result<ObjectiveSuite> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one agent".into()));
    }
    if kind.needs_dataset() {
        let ds = dataset.ok_or_else(|| Error::InvalidParameter(format!("{kind} requires a dataset")))?;
        let shards = partition(ds, n, seed)?;
        let locals = shards
            .shards
            .iter()
            .map(|rows| {
                let (a, labels) = ds.dense_rows(rows);
                let (ridge, ncvr) = match kind {
                    ObjectiveKind::LogRegReal => (params.logreg_iota, 0.0),
                    _ => (0.0, params.ncvr_alpha),
                };
                Objective { kind, dim: ds.dim(), data: Data::Logistic { a, labels, ridge, ncvr }, l1: None, l2: None }
            })
            .collect();
        return ObjectiveSuite::new(locals);
    }
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if kind == ObjectiveKind::Rosenbrock && d % 2 != 0 {
        return Err(Error::InvalidParameter(format!("rosenbrock needs an even dimension, got {d}")));
    }
    let mut rng = rng_from_seed(seed);
    let x_true = gaussian_vector(&mut rng, d);
    let mut locals = Vec::with_capacity(n);
    for _ in 0..n {
        let data = match kind {
            ObjectiveKind::Ridge => {
                let a = gaussian_matrix(&mut rng, params.ridge_rows, d);
                let eps = gaussian_vector(&mut rng, params.ridge_rows);
                let y = &a * &x_true + eps * params.ridge_noise;
                Data::Ridge { a, y, lambda: params.ridge_lambda }
            }
            ObjectiveKind::QuadBad => {
                let kappa = params.quad_kappa;
                // log-uniform condition number in [κ/2, 2κ]
                let chi = (kappa / 2.0) * 4f64.powf(rng.random::<f64>());
                let q = Vector::from_fn(d, |j, _| if d == 1 { chi } else { chi.powf(j as f64 / (d - 1) as f64) });
                let b = gaussian_vector(&mut rng, d);
                Data::QuadBad { q, b }
            }
            ObjectiveKind::LogSumExp => {
                let p = (d + 2).max(12);
                let a = gaussian_matrix(&mut rng, d, p);
                let b = gaussian_vector(&mut rng, p);
                Data::LogSumExp { a, b, sigma: params.lse_sigma }
            }
            ObjectiveKind::Huber => {
                let a = gaussian_matrix(&mut rng, params.huber_rows, d);
                let b = gaussian_vector(&mut rng, params.huber_rows);
                Data::Huber { a, b, delta: params.huber_delta }
            }
            ObjectiveKind::LinLog => {
                let a = gaussian_matrix(&mut rng, d, d);
                let b = gaussian_vector(&mut rng, d);
                Data::LinLog { a, b }
            }
            ObjectiveKind::Rosenbrock => Data::Rosenbrock,
            ObjectiveKind::Styblinski => Data::Styblinski,
            ObjectiveKind::LogRegReal | ObjectiveKind::LogRegNcvr => unreachable!("handled above"),
        };
        locals.push(Objective { kind, dim: d, data, l1: None, l2: None });
    }
    ObjectiveSuite::new(locals)
}

/// Worst relative error of central differences against the analytic gradient
/// (from values) and Hessian (from gradients), each scaled by `max(1, ‖·‖)`.
pub fn finite_diff_check(obj: &Objective, x: &Vector, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("finite-difference step must be positive".into()));
    }
    let e = obj.value_grad_hess(x)?;
    let d = obj.dim();
    let mut g_fd = Vector::zeros(d);
    let mut h_fd = Matrix::zeros(d, d);
    for j in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let (fp, gp) = obj.value_grad(&xp)?;
        let (fm, gm) = obj.value_grad(&xm)?;
        g_fd[j] = (fp - fm) / (2.0 * h);
        h_fd.set_column(j, &((gp - gm) / (2.0 * h)));
    }
    let g_err = (&g_fd - &e.grad).norm() / e.grad.norm().max(1.0);
    let h_err = (&h_fd - &e.hess).norm() / e.hess.norm().max(1.0);
    Ok(g_err.max(h_err))
}

/// Baseline curvature proxy `max_i ‖∇²f_i(x_i)‖₂`, where each agent is
/// evaluated at its own starting point.
pub fn h_max0(suite: &ObjectiveSuite, x0: &[Vector]) -> Result<f64> {
    if x0.len() != suite.n_agents() {
        return Err(Error::DimensionMismatch(format!("{} starting points for {} agents", x0.len(), suite.n_agents())));
    }
    let mut best: f64 = 0.0;
    for (o, x) in suite.locals().iter().zip(x0) {
        best = best.max(sym_spectral_norm(&o.hessian(x)?)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_binary;
    use crate::linalg::lambda_min;
    use rand::SeedableRng;

    fn suite(kind: ObjectiveKind, d: usize) -> ObjectiveSuite {
        let ds = synthetic_binary(300, 8, 1).unwrap();
        build_suite(kind, 4, d, 42, &ObjectiveParams::default(), Some(&ds)).unwrap()
    }

    #[test]
    fn styblinski_at_origin() {
        let s = suite(ObjectiveKind::Styblinski, 6);
        let e = s.local(2).value_grad_hess(&Vector::zeros(6)).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.grad.iter().all(|&g| g == 5.0));
        let hm = h_max0(&s, &vec![Vector::zeros(6); 4]).unwrap();
        assert!((hm - 32.0).abs() < 1e-12);
    }

    #[test]
    fn rosenbrock_minimizer() {
        let s = suite(ObjectiveKind::Rosenbrock, 6);
        let (v, g) = s.local(0).value_grad(&Vector::from_element(6, 1.0)).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn rosenbrock_needs_even_dimension() {
        let r = build_suite(ObjectiveKind::Rosenbrock, 2, 5, 0, &ObjectiveParams::default(), None);
        assert!(r.is_err());
    }

    #[test]
    fn logistic_kinds_need_data() {
        let r = build_suite(ObjectiveKind::LogRegReal, 2, 5, 0, &ObjectiveParams::default(), None);
        assert!(r.is_err());
    }

    #[test]
    fn ncvr_penalty_at_origin() {
        // with an empty-data shard the penalty alone is visible: compare two
        // kinds that share the same logistic data
        let ds = synthetic_binary(40, 5, 3).unwrap();
        let p = ObjectiveParams::default();
        let ncvr = build_suite(ObjectiveKind::LogRegNcvr, 2, 0, 9, &p, Some(&ds)).unwrap();
        let plain = build_suite(ObjectiveKind::LogRegReal, 2, 0, 9, &ObjectiveParams { logreg_iota: 0.0, ..p.clone() }, Some(&ds)).unwrap();
        let x = Vector::zeros(5);
        let a = ncvr.local(0).value_grad_hess(&x).unwrap();
        let b = plain.local(0).value_grad_hess(&x).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.grad, b.grad);
        let diff = a.hess - b.hess;
        assert!((diff - Matrix::identity(5, 5) * (2.0 * p.ncvr_alpha)).amax() < 1e-15);
    }

    #[test]
    fn linlog_branch_values() {
        let (l, l1, l2) = linlog(2.0);
        assert!((l - (2f64.ln() + 0.5)).abs() < 1e-15);
        assert_eq!(l1, 0.5);
        assert_eq!(l2, -0.25);
        assert_eq!(linlog(1.0), (0.5, 1.0, 1.0));
        assert_eq!(linlog(-1.0), (0.5, -1.0, 1.0));
    }

    #[test]
    fn ridge_hessian_is_constant() {
        let s = suite(ObjectiveKind::Ridge, 5);
        let h1 = s.local(0).hessian(&Vector::zeros(5)).unwrap();
        let h2 = s.local(0).hessian(&Vector::from_element(5, 3.0)).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn quadbad_curvature_proxy_near_kappa() {
        let s = suite(ObjectiveKind::QuadBad, 10);
        let hm = h_max0(&s, &vec![Vector::zeros(10); 4]).unwrap();
        assert!((500.0..=2000.0).contains(&hm), "{hm}");
    }

    #[test]
    fn non_finite_points_are_rejected() {
        let s = suite(ObjectiveKind::Huber, 4);
        let x = Vector::from_vec(vec![0.0, f64::NAN, 0.0, 0.0]);
        assert!(matches!(s.local(0).value(&x), Err(Error::NonFiniteInput)));
        assert!(s.local(0).value(&Vector::zeros(3)).is_err());
    }

    #[test]
    fn logsumexp_survives_large_arguments() {
        let s = suite(ObjectiveKind::LogSumExp, 4);
        let x = Vector::from_element(4, 500.0);
        let e = s.local(0).value_grad_hess(&x).unwrap();
        assert!(e.value.is_finite() && e.grad.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for kind in ObjectiveKind::ALL {
            let s = suite(kind, 6);
            for _ in 0..5 {
                let x = gaussian_vector(&mut rng, s.dim());
                let o = s.local(1);
                if o.kink_distance(&x).is_some_and(|m| m < 1e-3) {
                    continue;
                }
                let err = finite_diff_check(o, &x, 1e-5).unwrap();
                assert!(err < 1e-5, "{kind}: {err}");
                let hess = o.hessian(&x).unwrap();
                assert!((&hess - hess.transpose()).amax() <= 1e-10 * hess.norm().max(1.0));
                if kind.is_convex() {
                    let lm = lambda_min(&hess).unwrap();
                    assert!(lm >= -1e-8 * hess.norm().max(1.0), "{kind}: {lm}");
                }
            }
        }
    }
}
